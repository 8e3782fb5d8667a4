//! Warm-up adaptation: dual-averaged step size and windowed diagonal mass.

/// Nesterov dual averaging of the log step size toward a target acceptance
/// statistic.
pub(crate) struct DualAveraging {
    mu: f64,
    log_eps: f64,
    log_eps_bar: f64,
    h_bar: f64,
    count: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
}

impl DualAveraging {
    pub fn new(eps0: f64) -> Self {
        DualAveraging {
            mu: (10.0 * eps0).ln(),
            log_eps: eps0.ln(),
            log_eps_bar: 0.0,
            h_bar: 0.0,
            count: 0.0,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
        }
    }

    pub fn update(&mut self, accept_stat: f64, target: f64) {
        self.count += 1.0;
        let eta = 1.0 / (self.count + self.t0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (target - accept_stat);
        self.log_eps = self.mu - self.h_bar * self.count.sqrt() / self.gamma;
        let x = self.count.powf(-self.kappa);
        self.log_eps_bar = x * self.log_eps + (1.0 - x) * self.log_eps_bar;
    }

    /// Step size to use while still adapting.
    pub fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    /// Smoothed step size to freeze after warm-up.
    pub fn adapted(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Streaming mean/variance.
#[derive(Default)]
pub(crate) struct Welford {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    pub fn new(dim: usize) -> Self {
        Welford {
            n: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1.0;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / self.n;
            *s += d * (v - *m);
        }
    }

    pub fn count(&self) -> f64 {
        self.n
    }

    /// Regularized variance estimate, shrunk toward unit scale the way the
    /// usual windowed adaptation does.
    pub fn regularized_variance(&self) -> Vec<f64> {
        let n = self.n;
        let w = n / (n + 5.0);
        self.m2
            .iter()
            .map(|m2| (w * m2 / (n - 1.0).max(1.0) + 1e-3 * (1.0 - w)).max(1e-10))
            .collect()
    }

    pub fn reset(&mut self) {
        self.n = 0.0;
        self.mean.iter_mut().for_each(|v| *v = 0.0);
        self.m2.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Three-phase warm-up schedule: a fast initial buffer (step size only),
/// doubling slow windows that feed the mass matrix, and a fast terminal
/// buffer. The final slow window absorbs any remainder.
pub(crate) struct WarmupSchedule {
    pub init_buffer: usize,
    pub term_buffer: usize,
    window_ends: Vec<usize>,
    warmup: usize,
}

impl WarmupSchedule {
    pub fn new(warmup: usize) -> Self {
        let init_buffer = 75.min(warmup / 2);
        // At least the classic 50, but scale with warm-up length: a short
        // terminal stretch leaves the averaged step size noticeably below its
        // stationary point and the realized acceptance well above target.
        let term_buffer = (warmup / 5).max(50).min(warmup / 4);
        let slow_end = warmup - term_buffer;
        let mut window_ends = Vec::new();
        let mut size = 25usize;
        let mut at = init_buffer;
        while at < slow_end {
            let mut end = at + size;
            // absorb the remainder when the next doubling would overshoot
            if end + 2 * size > slow_end {
                end = slow_end;
            }
            window_ends.push(end.min(slow_end));
            at = end;
            size *= 2;
        }
        WarmupSchedule {
            init_buffer,
            term_buffer,
            window_ends,
            warmup,
        }
    }

    /// Is `iter` (0-based warm-up iteration) inside a slow (mass) window?
    pub fn in_slow_window(&self, iter: usize) -> bool {
        iter >= self.init_buffer && iter < self.warmup - self.term_buffer
    }

    /// Does the slow window close after `iter`?
    pub fn window_closes_at(&self, iter: usize) -> bool {
        self.window_ends.contains(&(iter + 1))
    }
}
