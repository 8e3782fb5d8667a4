//! Reverse-mode automatic differentiation on a flat scalar tape.
//!
//! The model code is written once, generic over [`Real`]. Instantiated at
//! `f64` it is a plain evaluation; instantiated at [`Var`] every operation is
//! recorded on a [`Tape`] and a single reverse sweep recovers the gradient
//! with respect to all inputs. Forward values are computed with the exact same
//! `f64` operations on both paths, so the primal agrees bit for bit.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::math;

/// Scalar type the model is generic over: `f64` or a taped [`Var`].
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Current primal value.
    fn val(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn ln_1p(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn recip(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn ln_gamma(self) -> Self;

    /// General power through exp/ln; shared default so both scalar types
    /// compute the identical expression.
    fn powf(self, e: Self) -> Self {
        (self.ln() * e).exp()
    }
}

impl Real for f64 {
    #[inline]
    fn val(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn ln_1p(self) -> Self {
        f64::ln_1p(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn recip(self) -> Self {
        1.0 / self
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn ln_gamma(self) -> Self {
        math::ln_gamma(self)
    }
}

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    d1: f64,
    d2: f64,
    p1: u32,
    p2: u32,
}

/// Recording tape. One per gradient evaluation context; cleared and reused
/// between evaluations so the node arena is allocated once. Not `Sync`: each
/// worker owns its tape.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    adjoints: RefCell<Vec<f64>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(n)),
            adjoints: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drop all recorded nodes, keeping capacity.
    pub fn clear(&self) {
        self.nodes.borrow_mut().clear();
    }

    /// Register an independent input variable.
    pub fn input(&self, v: f64) -> Var<'_> {
        self.push(v, NONE, 0.0, NONE, 0.0)
    }

    fn push(&self, v: f64, p1: u32, d1: f64, p2: u32, d2: f64) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len() as u32;
        nodes.push(Node { d1, d2, p1, p2 });
        Var { tape: self, idx, v }
    }

    /// Reverse sweep: adjoints of the first `n_inputs` nodes.
    pub fn backward(&self, output: Var<'_>, n_inputs: usize) -> Vec<f64> {
        debug_assert!(std::ptr::eq(output.tape, self));
        let nodes = self.nodes.borrow();
        let mut adj = self.adjoints.borrow_mut();
        adj.clear();
        adj.resize(nodes.len(), 0.0);
        adj[output.idx as usize] = 1.0;
        for i in (0..nodes.len()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let nd = nodes[i];
            if nd.p1 != NONE {
                adj[nd.p1 as usize] += nd.d1 * a;
            }
            if nd.p2 != NONE {
                adj[nd.p2 as usize] += nd.d2 * a;
            }
        }
        adj[..n_inputs].to_vec()
    }
}

/// A scalar recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    v: f64,
}

impl<'t> Var<'t> {
    #[inline]
    fn unary(self, v: f64, d: f64) -> Var<'t> {
        self.tape.push(v, self.idx, d, NONE, 0.0)
    }

    #[inline]
    fn binary(self, rhs: Var<'t>, v: f64, d1: f64, d2: f64) -> Var<'t> {
        debug_assert!(std::ptr::eq(self.tape, rhs.tape), "mixed tapes");
        self.tape.push(v, self.idx, d1, rhs.idx, d2)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.v + rhs.v, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.v - rhs.v, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.v * rhs.v, rhs.v, self.v)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let inv = 1.0 / rhs.v;
        self.binary(rhs, self.v * inv, inv, -self.v * inv * inv)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn neg(self) -> Var<'t> {
        self.unary(-self.v, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn add(self, c: f64) -> Var<'t> {
        self.unary(self.v + c, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn sub(self, c: f64) -> Var<'t> {
        self.unary(self.v - c, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn mul(self, c: f64) -> Var<'t> {
        self.unary(self.v * c, c)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn div(self, c: f64) -> Var<'t> {
        self.unary(self.v / c, 1.0 / c)
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    #[inline]
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        rhs.unary(self + rhs.v, 1.0)
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    #[inline]
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        rhs.unary(self - rhs.v, -1.0)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    #[inline]
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        rhs.unary(self * rhs.v, self)
    }
}

impl<'t> Div<Var<'t>> for f64 {
    type Output = Var<'t>;
    #[inline]
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let v = self / rhs.v;
        rhs.unary(v, -v / rhs.v)
    }
}

impl<'t> Real for Var<'t> {
    #[inline]
    fn val(self) -> f64 {
        self.v
    }
    #[inline]
    fn exp(self) -> Self {
        let v = self.v.exp();
        self.unary(v, v)
    }
    #[inline]
    fn ln(self) -> Self {
        self.unary(self.v.ln(), 1.0 / self.v)
    }
    #[inline]
    fn ln_1p(self) -> Self {
        self.unary(self.v.ln_1p(), 1.0 / (1.0 + self.v))
    }
    #[inline]
    fn sqrt(self) -> Self {
        let v = self.v.sqrt();
        self.unary(v, 0.5 / v)
    }
    #[inline]
    fn tanh(self) -> Self {
        let v = self.v.tanh();
        self.unary(v, 1.0 - v * v)
    }
    #[inline]
    fn recip(self) -> Self {
        let v = 1.0 / self.v;
        self.unary(v, -v * v)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        self.unary(self.v.powi(n), n as f64 * self.v.powi(n - 1))
    }
    #[inline]
    fn ln_gamma(self) -> Self {
        self.unary(math::ln_gamma(self.v), math::digamma(self.v))
    }
}

/// A differentiable scalar field: one generic evaluation path serves both the
/// plain value and the taped gradient.
pub trait ScalarField {
    fn eval<R: Real>(&self, x: &[R]) -> R;
}

/// Plain (untaped) evaluation.
pub fn value<S: ScalarField>(field: &S, x: &[f64]) -> f64 {
    field.eval::<f64>(x)
}

/// Value and full gradient in one reverse sweep.
///
/// A non-finite value is the rejection signal; the gradient is still returned
/// but callers must not use it in that case.
pub fn gradient<S: ScalarField>(tape: &Tape, field: &S, x: &[f64]) -> (f64, Vec<f64>) {
    tape.clear();
    let vars: Vec<Var<'_>> = x.iter().map(|&v| tape.input(v)).collect();
    let out = field.eval(&vars);
    let grad = tape.backward(out, x.len());
    (out.val(), grad)
}

/// Max relative discrepancy between the tape gradient and central finite
/// differences with per-coordinate step `h_scale * (1 + |x_k|)`.
pub fn fd_check<S: ScalarField>(tape: &Tape, field: &S, x: &[f64], h_scale: f64) -> f64 {
    let (_, grad) = gradient(tape, field, x);
    let mut xs = x.to_vec();
    let mut worst = 0.0f64;
    for k in 0..x.len() {
        let h = h_scale * (1.0 + x[k].abs());
        xs[k] = x[k] + h;
        let fp = field.eval::<f64>(&xs);
        xs[k] = x[k] - h;
        let fm = field.eval::<f64>(&xs);
        xs[k] = x[k];
        let g_fd = (fp - fm) / (2.0 * h);
        let rel = (grad[k] - g_fd).abs() / (1.0 + g_fd.abs());
        worst = worst.max(rel);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    struct Fn1;
    impl ScalarField for Fn1 {
        fn eval<R: Real>(&self, x: &[R]) -> R {
            x[0] * x[0] + x[1] * 3.0
        }
    }

    #[test]
    fn polynomial_value_and_gradient() {
        let tape = Tape::new();
        let (v, g) = gradient(&tape, &Fn1, &[2.0, 5.0]);
        assert_abs_diff_eq!(v, 19.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[0], 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 3.0, epsilon = 1e-15);
    }

    /// Independent digamma oracle: raise the argument above 30 with the
    /// recurrence, then the asymptotic series.
    fn digamma_series(mut x: f64) -> f64 {
        let mut acc = 0.0;
        while x < 30.0 {
            acc -= 1.0 / x;
            x += 1.0;
        }
        let inv = 1.0 / x;
        let inv2 = inv * inv;
        acc + x.ln() - 0.5 * inv
            - inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)))
    }

    struct LnGammaField;
    impl ScalarField for LnGammaField {
        fn eval<R: Real>(&self, x: &[R]) -> R {
            x[0].ln_gamma()
        }
    }

    #[test]
    fn ln_gamma_gradient_matches_digamma_series() {
        let tape = Tape::new();
        for x in [1.0, 0.7, 2.5, 10.0, 55.5] {
            let (_, g) = gradient(&tape, &LnGammaField, &[x]);
            let want = digamma_series(x);
            assert!(
                (g[0] - want).abs() < 1e-10,
                "digamma({x}): got {}, series {}",
                g[0],
                want
            );
        }
        // digamma(1) = -Euler-Mascheroni
        let (_, g) = gradient(&tape, &LnGammaField, &[1.0]);
        assert_abs_diff_eq!(g[0], -0.5772156649015329, epsilon = 1e-12);
    }

    struct Composite;
    impl ScalarField for Composite {
        fn eval<R: Real>(&self, x: &[R]) -> R {
            let a = (x[0] * 0.5).exp() + x[1].tanh();
            let b = (x[0] * x[1] + 2.0).ln() - x[1].sqrt() / 3.0;
            let c = x[0].ln_1p() + (x[1] * 0.2).powi(3) + x[0].recip();
            let d = x[0].powf(x[1]) + x[1].ln_gamma();
            a * b + c - d * 0.25
        }
    }

    #[test]
    fn primal_through_tape_is_bit_identical() {
        let tape = Tape::new();
        for pt in [[0.8, 1.7], [2.0, 0.3], [0.01, 5.0]] {
            let plain = value(&Composite, &pt);
            let (taped, _) = gradient(&tape, &Composite, &pt);
            assert_eq!(plain.to_bits(), taped.to_bits());
        }
    }

    #[test]
    fn composite_gradient_matches_finite_differences() {
        let tape = Tape::new();
        let d = fd_check(&tape, &Composite, &[0.8, 1.7], 1e-5);
        assert!(d < 1e-8, "fd discrepancy {d}");
    }

    struct Quadratic;
    impl ScalarField for Quadratic {
        fn eval<R: Real>(&self, x: &[R]) -> R {
            x[0] * x[0] * 2.0 + x[0] * x[1] - x[1] * x[1] * 0.5 + x[0] * 7.0
        }
    }

    #[test]
    fn fd_check_exact_for_quadratics() {
        let tape = Tape::new();
        let d = fd_check(&tape, &Quadratic, &[1.3, -0.4], 1e-5);
        assert!(d < 1e-10, "quadratic fd discrepancy {d}");
    }

    struct SumField<'a, A, B>(&'a A, &'a B);
    impl<A: ScalarField, B: ScalarField> ScalarField for SumField<'_, A, B> {
        fn eval<R: Real>(&self, x: &[R]) -> R {
            self.0.eval(x) + self.1.eval(x)
        }
    }

    #[test]
    fn gradient_of_sum_is_sum_of_gradients() {
        let tape = Tape::new();
        let x = [0.9, 2.2];
        let (_, ga) = gradient(&tape, &Composite, &x);
        let (_, gb) = gradient(&tape, &Quadratic, &x);
        let (_, gs) = gradient(&tape, &SumField(&Composite, &Quadratic), &x);
        for k in 0..2 {
            assert_abs_diff_eq!(gs[k], ga[k] + gb[k], epsilon = 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn primal_parity_and_linearity_hold_everywhere(
            a in 0.05f64..4.0,
            b in 0.05f64..4.0,
        ) {
            let tape = Tape::new();
            let x = [a, b];
            let plain = value(&Composite, &x);
            let (taped, _) = gradient(&tape, &Composite, &x);
            proptest::prop_assert_eq!(plain.to_bits(), taped.to_bits());
            let (_, ga) = gradient(&tape, &Composite, &x);
            let (_, gb) = gradient(&tape, &Quadratic, &x);
            let (_, gs) = gradient(&tape, &SumField(&Composite, &Quadratic), &x);
            for k in 0..2 {
                proptest::prop_assert!((gs[k] - ga[k] - gb[k]).abs() <= 1e-10 * (1.0 + gs[k].abs()));
            }
        }
    }

    #[test]
    fn tape_reuse_keeps_results_stable() {
        let tape = Tape::new();
        let (v1, g1) = gradient(&tape, &Composite, &[0.8, 1.7]);
        for _ in 0..3 {
            let (v2, g2) = gradient(&tape, &Composite, &[0.8, 1.7]);
            assert_eq!(v1.to_bits(), v2.to_bits());
            assert_eq!(g1, g2);
        }
    }
}
