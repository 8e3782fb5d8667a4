//! Shared numeric utilities: quadrature rules, quantiles, special functions.

/// Gauss-Legendre rule on (-1, 1).
///
/// Nodes are the roots of the Legendre polynomial P_q, found by Newton
/// iteration from the Chebyshev-based initial guess; weights follow from the
/// derivative. Accurate to machine precision for the orders used here.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(q: usize) -> Self {
        assert!(q >= 1, "quadrature order must be at least 1");
        let mut nodes = vec![0.0; q];
        let mut weights = vec![0.0; q];
        let n = q as f64;
        // Roots come in +/- pairs; solve for the non-negative half.
        for i in 0..q.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                // Legendre recurrence for P_q(x) and P'_q(x).
                let mut p0 = 1.0;
                let mut p1 = x;
                for k in 2..=q {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            weights[i] = w;
            nodes[q - 1 - i] = x;
            weights[q - 1 - i] = w;
        }
        if q % 2 == 1 {
            nodes[q / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    /// Nodes and weights mapped to (0, 1).
    pub fn unit(&self) -> (Vec<f64>, Vec<f64>) {
        let nodes = self.nodes.iter().map(|x| 0.5 * (x + 1.0)).collect();
        let weights = self.weights.iter().map(|w| 0.5 * w).collect();
        (nodes, weights)
    }
}

/// Linear-interpolation empirical quantile of a sorted slice.
///
/// Matches the common "type 7" definition: the quantile at probability `p`
/// interpolates between order statistics at fractional rank (n-1)p.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Quantile of an unsorted sample (copies and sorts).
pub fn quantile(sample: &[f64], p: f64) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

pub fn digamma(x: f64) -> f64 {
    statrs::function::gamma::digamma(x)
}

/// Inverse standard-normal CDF: Acklam's rational approximation polished by
/// one Halley step against the erfc-based CDF.
#[allow(clippy::excessive_precision)]
pub fn inverse_normal_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability must lie in (0,1)");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    let x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // One Halley refinement against the high-accuracy CDF.
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix
/// stored row-major. Returns None if the matrix is not positive definite.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Mean and sample variance (ddof = 1).
pub fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gauss_legendre_matches_reference_order_5() {
        let gl = GaussLegendre::new(5);
        let expected = [
            (-0.906179845938664, 0.23692688505618942),
            (-0.5384693101056831, 0.4786286704993662),
            (0.0, 0.568888888888889),
            (0.5384693101056831, 0.4786286704993662),
            (0.906179845938664, 0.23692688505618942),
        ];
        for (i, (x, w)) in expected.iter().enumerate() {
            assert_abs_diff_eq!(gl.nodes[i], *x, epsilon = 1e-14);
            assert_abs_diff_eq!(gl.weights[i], *w, epsilon = 1e-14);
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        // Order q is exact for degree 2q-1.
        for q in [5, 15, 31, 61] {
            let gl = GaussLegendre::new(q);
            let wsum: f64 = gl.weights.iter().sum();
            assert_abs_diff_eq!(wsum, 2.0, epsilon = 1e-12);
            let deg = 2 * q - 1;
            let val: f64 = gl
                .nodes
                .iter()
                .zip(&gl.weights)
                .map(|(x, w)| w * x.powi(deg as i32 - 1))
                .sum();
            // integral of x^(deg-1) over (-1,1): 0 for odd power, 2/(deg) for even
            let exact = if (deg - 1) % 2 == 1 {
                0.0
            } else {
                2.0 / deg as f64
            };
            assert_abs_diff_eq!(val, exact, epsilon = 1e-12);
        }
    }

    #[test]
    fn quantile_linear_interpolation_definition() {
        let v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_abs_diff_eq!(quantile_sorted(&v, 0.5), 50.5, epsilon = 1e-12);
        assert_abs_diff_eq!(quantile_sorted(&v, 0.0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(quantile_sorted(&v, 1.0), 100.0, epsilon = 1e-12);
    }

    #[test]
    #[allow(clippy::excessive_precision)] // 40-digit references on purpose
    fn ln_gamma_matches_high_precision_reference() {
        // 40-digit mpmath references.
        let refs: [(f64, f64); 16] = [
            (0.5, 0.57236494292470008707),
            (0.75, 0.20328095143129537148),
            (1.0, 0.0),
            (1.5, -0.12078223763524522235),
            (2.0, 0.0),
            (2.5, 0.28468287047291915963),
            (3.7, 1.4280723266653879219),
            (5.0, 3.1780538303479456196),
            (8.25, 9.0331869196051228533),
            (12.0, 17.502307845873885839),
            (25.5, 56.389167643719946744),
            (50.0, 144.56574394634488601),
            (77.77, 259.56471707468283996),
            (100.0, 359.13420536957539878),
            (150.25, 601.26150403249972598),
            (200.0, 857.93366982585743682),
        ];
        for (x, want) in refs {
            let got = ln_gamma(x);
            let denom = want.abs().max(1.0);
            assert!(
                ((got - want) / denom).abs() < 1e-13,
                "ln_gamma({x}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn inverse_normal_cdf_round_trips() {
        for &p in &[1e-8, 1e-4, 0.025, 0.3, 0.5, 0.7, 0.975, 1.0 - 1e-6] {
            let x = inverse_normal_cdf(p);
            assert_abs_diff_eq!(normal_cdf(x), p, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(inverse_normal_cdf(0.5), 0.0, epsilon = 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn quantile_stays_in_range_and_is_monotone(
            mut xs in proptest::collection::vec(-1e6f64..1e6, 1..200),
            p1 in 0.0f64..1.0,
            p2 in 0.0f64..1.0,
        ) {
            xs.sort_by(f64::total_cmp);
            let (lo, hi) = (p1.min(p2), p1.max(p2));
            let qlo = quantile_sorted(&xs, lo);
            let qhi = quantile_sorted(&xs, hi);
            proptest::prop_assert!(qlo >= xs[0] && qhi <= xs[xs.len() - 1]);
            proptest::prop_assert!(qlo <= qhi);
        }
    }

    #[test]
    fn cholesky_recovers_matrix() {
        let a = [0.6, 0.25, 0.25, 0.3];
        let l = cholesky(&a, 2).unwrap();
        let rec = [
            l[0] * l[0],
            l[0] * l[2],
            l[2] * l[0],
            l[2] * l[2] + l[3] * l[3],
        ];
        for (x, y) in rec.iter().zip(a.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-14);
        }
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
    }
}
