//! Small deterministic fixtures shared by unit tests.

use crate::data::{Dataset, Term};
use crate::model::ParamLayout;

/// Splitmix-style deterministic generator, good enough for test fixtures.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(seed.wrapping_add(0x9E3779B97F4A7C15))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Crude standard normal (sum of uniforms), fine for fixtures.
    pub fn normalish(&mut self) -> f64 {
        let mut acc = 0.0;
        for _ in 0..12 {
            acc += self.uniform();
        }
        acc - 6.0
    }
}

/// A small, valid joint dataset with intercept+slope designs and one binary
/// survival covariate. Values are arbitrary but reproducible.
pub fn toy_dataset(n: usize, obs_per: usize, seed: u64) -> Dataset {
    let mut rng = TestRng::new(seed);
    let mut ids = Vec::new();
    let mut times = Vec::new();
    let mut y = Vec::new();
    let mut subject_of = Vec::new();
    let mut surv_time = Vec::new();
    let mut event = Vec::new();
    let mut xcov = Vec::new();
    for i in 0..n {
        ids.push(format!("s{i}"));
        let mut ts: Vec<f64> = (0..obs_per).map(|_| rng.range(0.0, 4.5)).collect();
        ts.sort_by(f64::total_cmp);
        let b0 = 0.7 * rng.normalish();
        let b1 = 0.4 * rng.normalish();
        let mut t_max: f64 = 0.0;
        for &t in &ts {
            times.push(t);
            y.push(1.0 + 0.4 * t + b0 + b1 * t + 0.5 * rng.normalish());
            subject_of.push(i);
            t_max = t_max.max(t);
        }
        surv_time.push(t_max + rng.range(0.05, 1.0));
        event.push(i % 2 == 0);
        xcov.push(if rng.uniform() < 0.5 { 0.0 } else { 1.0 });
    }
    let mut ds = Dataset::from_parts(
        ids,
        times,
        y,
        subject_of,
        surv_time,
        event,
        vec![],
        vec![("X".into(), xcov)],
    );
    ds.build_designs(
        &[Term::Intercept, Term::Time],
        &[Term::Intercept, Term::Time],
        &[Term::Covariate("X".into())],
    )
    .unwrap();
    ds
}

/// Random interior unconstrained point.
pub fn random_raw(layout: &ParamLayout, rng: &mut TestRng, radius: f64) -> Vec<f64> {
    (0..layout.dim).map(|_| rng.range(-radius, radius)).collect()
}
