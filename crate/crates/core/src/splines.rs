//! Natural cubic spline basis on follow-up time.
//!
//! Truncated-power construction with the natural reparameterization: with the
//! knot sequence `xi = [lower, interior..., upper]` the basis columns are
//!
//! ```text
//! a_1(t)     = t
//! a_{i+2}(t) = (d_i(t) - d_{K-2}(t)) / (upper - lower)^2,   i = 0..K-3
//! d_i(t)     = ((t - xi_i)_+^3 - (t - xi_{K-1})_+^3) / (xi_{K-1} - xi_i)
//! ```
//!
//! so every column is C^2 on the real line and exactly linear outside the
//! boundary knots. The constant is deliberately excluded (an intercept is
//! carried by the model). The cubic columns are scaled by `range^-2` to keep
//! their magnitude comparable to the linear column.

use crate::error::{Error, Result};
use crate::math::quantile_sorted;

#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    interior: Vec<f64>,
    boundary: [f64; 2],
    scale: f64,
}

impl SplineBasis {
    /// Rebuild a basis from stored knots (e.g. a fit manifest).
    pub fn from_knots(interior: Vec<f64>, boundary: [f64; 2]) -> Result<Self> {
        if !(boundary[0] < boundary[1]) {
            return Err(Error::Knots(format!(
                "boundary knots must satisfy lower < upper, got [{}, {}]",
                boundary[0], boundary[1]
            )));
        }
        let mut prev = boundary[0];
        for &k in &interior {
            if !(k > prev && k < boundary[1]) {
                return Err(Error::Knots(format!(
                    "interior knots must be strictly increasing inside ({}, {}), got {k}",
                    boundary[0], boundary[1]
                )));
            }
            prev = k;
        }
        let range = boundary[1] - boundary[0];
        Ok(SplineBasis {
            interior,
            boundary,
            scale: 1.0 / (range * range),
        })
    }

    /// Place `k` interior knots at the empirical quantiles j/(k+1) of the
    /// pooled observation times, boundary knots at the min and max.
    ///
    /// Duplicate quantiles (and quantiles colliding with a boundary) are
    /// collapsed with a warning, shrinking the basis dimension; if no interior
    /// knot survives while `k >= 1` the configuration is degenerate.
    pub fn place_knots(times: &[f64], k: usize) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Config("knot placement needs at least one time".into()));
        }
        let mut sorted = times.to_vec();
        sorted.sort_by(f64::total_cmp);
        let lower = sorted[0];
        let upper = sorted[sorted.len() - 1];
        if !(lower < upper) {
            return Err(Error::Knots(
                "all observation times coincide; no basis can be built".into(),
            ));
        }
        let mut interior = Vec::with_capacity(k);
        for j in 1..=k {
            let q = quantile_sorted(&sorted, j as f64 / (k + 1) as f64);
            if q > lower && q < upper && interior.last() != Some(&q) {
                interior.push(q);
            }
        }
        if interior.len() < k {
            log::warn!(
                "collapsed {} duplicate/boundary knots; basis dimension reduced to {}",
                k - interior.len(),
                interior.len() + 1
            );
        }
        if k >= 1 && interior.is_empty() {
            return Err(Error::Knots(format!(
                "no distinct interior quantiles found for k = {k}"
            )));
        }
        let basis = Self::from_knots(interior, [lower, upper])?;
        basis.check_collinearity(&sorted)?;
        Ok(basis)
    }

    /// Basis dimension `s` (interior knot count + 1).
    pub fn dim(&self) -> usize {
        self.interior.len() + 1
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior
    }

    pub fn boundary_knots(&self) -> [f64; 2] {
        self.boundary
    }

    pub fn evaluate(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.evaluate_into(t, &mut out);
        out
    }

    pub fn evaluate_into(&self, t: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        out[0] = t;
        let kk = self.interior.len() + 2;
        if kk == 2 {
            return;
        }
        let last = self.truncated(t, self.interior[self.interior.len() - 1]);
        for i in 0..kk - 2 {
            let xi = if i == 0 { self.boundary[0] } else { self.interior[i - 1] };
            out[i + 1] = (self.truncated(t, xi) - last) * self.scale;
        }
    }

    /// d_i(t) for anchor knot `xi`, referencing the upper boundary knot.
    fn truncated(&self, t: f64, xi: f64) -> f64 {
        let upper = self.boundary[1];
        let cube = |x: f64| if x > 0.0 { x * x * x } else { 0.0 };
        (cube(t - xi) - cube(t - upper)) / (upper - xi)
    }

    /// Error out if any two columns are numerically collinear on the sample.
    fn check_collinearity(&self, times: &[f64]) -> Result<()> {
        let s = self.dim();
        if s < 2 {
            return Ok(());
        }
        let n = times.len();
        let mut cols = vec![vec![0.0; n]; s];
        let mut row = vec![0.0; s];
        for (r, &t) in times.iter().enumerate() {
            self.evaluate_into(t, &mut row);
            for (c, col) in cols.iter_mut().enumerate() {
                col[r] = row[c];
            }
        }
        for a in 0..s {
            for b in a + 1..s {
                let r = correlation(&cols[a], &cols[b]);
                if r.abs() >= 1.0 - 1e-10 {
                    return Err(Error::Knots(format!(
                        "basis columns {a} and {b} are collinear on the data (|r| = {r:.12})"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 1.0;
    }
    sab / (saa * sbb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::cholesky;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_knot_lands_on_median() {
        let times = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let basis = SplineBasis::place_knots(&times, 1).unwrap();
        assert_eq!(basis.interior_knots().len(), 1);
        assert!((basis.interior_knots()[0] - 2.5).abs() < 1e-12);
        assert_eq!(basis.dim(), 2);
    }

    #[test]
    fn zero_knots_gives_single_linear_column() {
        let times = [0.0, 1.0, 2.0, 5.0];
        let basis = SplineBasis::place_knots(&times, 0).unwrap();
        assert_eq!(basis.dim(), 1);
        assert_eq!(basis.evaluate(3.25), vec![3.25]);
    }

    #[test]
    fn quantile_knots_on_large_uniform_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let times: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>() * 5.0).collect();
        let basis = SplineBasis::place_knots(&times, 3).unwrap();
        let expected = [1.25, 2.5, 3.75];
        for (got, want) in basis.interior_knots().iter().zip(expected) {
            assert!(
                (got - want).abs() < 0.05,
                "knot {got} not within 0.05 of {want}"
            );
        }
    }

    #[test]
    fn degenerate_quantiles_error() {
        let mut times = vec![0.0; 50];
        times.push(5.0);
        assert!(matches!(
            SplineBasis::place_knots(&times, 3),
            Err(Error::Knots(_))
        ));
        // All times equal: no basis at all.
        assert!(SplineBasis::place_knots(&[2.0; 10], 0).is_err());
    }

    fn fd_second_derivative(basis: &SplineBasis, col: usize, t: f64, h: f64) -> f64 {
        let f = |t: f64| basis.evaluate(t)[col];
        (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h)
    }

    #[test]
    fn natural_constraint_second_derivative_vanishes_outside() {
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.05).collect();
        let basis = SplineBasis::place_knots(&times, 3).unwrap();
        let [lo, hi] = basis.boundary_knots();
        let range = hi - lo;
        for col in 0..basis.dim() {
            for t in [lo - 0.01 * range, hi + 0.01 * range, lo - 1.0, hi + 2.0] {
                let d2 = fd_second_derivative(&basis, col, t, 1e-3);
                assert!(
                    d2.abs() < 1e-6,
                    "col {col} at t={t}: second derivative {d2}"
                );
            }
            // Just beyond the boundary knots with a small epsilon.
            for t in [lo - 5e-3, hi + 5e-3] {
                let d2 = fd_second_derivative(&basis, col, t, 1e-3);
                assert!(d2.abs() < 1e-8, "col {col} at t={t}: {d2}");
            }
        }
    }

    #[test]
    fn columns_are_continuous_on_dense_grid() {
        let times: Vec<f64> = (0..=50).map(|i| i as f64 * 0.1).collect();
        let basis = SplineBasis::place_knots(&times, 2).unwrap();
        let mut prev = basis.evaluate(-0.5);
        let mut t = -0.5 + 1e-4;
        while t < 5.5 {
            let cur = basis.evaluate(t);
            for c in 0..basis.dim() {
                assert!(
                    (cur[c] - prev[c]).abs() < 1e-3,
                    "jump in column {c} near t={t}"
                );
            }
            prev = cur;
            t += 1e-4;
        }
    }

    #[test]
    fn least_squares_on_own_basis_recovers_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let times: Vec<f64> = (0..400).map(|_| rng.random::<f64>() * 5.0).collect();
        let basis = SplineBasis::place_knots(&times, 2).unwrap();
        let s = basis.dim();
        let truth: Vec<f64> = (0..=s).map(|i| 0.4 + 0.3 * i as f64).collect(); // intercept + s coefs

        // Normal equations with an explicit intercept column.
        let dim = s + 1;
        let mut ata = vec![0.0; dim * dim];
        let mut aty = vec![0.0; dim];
        let mut row = vec![0.0; s];
        for &t in &times {
            basis.evaluate_into(t, &mut row);
            let mut full = vec![1.0];
            full.extend_from_slice(&row);
            let y: f64 = full.iter().zip(&truth).map(|(a, c)| a * c).sum();
            for i in 0..dim {
                aty[i] += full[i] * y;
                for j in 0..dim {
                    ata[i * dim + j] += full[i] * full[j];
                }
            }
        }
        let l = cholesky(&ata, dim).expect("normal equations are PD");
        // forward/back substitution
        let mut z = vec![0.0; dim];
        for i in 0..dim {
            let mut acc = aty[i];
            for j in 0..i {
                acc -= l[i * dim + j] * z[j];
            }
            z[i] = acc / l[i * dim + i];
        }
        let mut coef = vec![0.0; dim];
        for i in (0..dim).rev() {
            let mut acc = z[i];
            for j in i + 1..dim {
                acc -= l[j * dim + i] * coef[j];
            }
            coef[i] = acc / l[i * dim + i];
        }
        for (got, want) in coef.iter().zip(&truth) {
            assert!(
                (got - want).abs() < 1e-8,
                "coefficient {got} vs {want}"
            );
        }
    }
}
