//! Reverse-mode automatic differentiation on a flat tape.
//!
//! Every numeric routine in this crate is generic over [`Scalar`], so the same
//! code path produces plain `f64` values (fast forward evaluation, finite
//! differences) and tape-recorded [`Var`] values (training). A [`Tape`] is a
//! Wengert list: each node stores its parent indices together with the local
//! partial derivatives, precomputed at recording time. Backpropagation is a
//! single reverse sweep over the list.
//!
//! A tape is confined to one thread; independent tapes may run concurrently.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Node storage. `spans[i]` addresses the parent/partial slice of node `i`.
#[derive(Default)]
struct Nodes {
    spans: Vec<(u32, u32)>,
    parents: Vec<u32>,
    partials: Vec<f64>,
}

/// Records primitive operations for one backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Nodes>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.borrow().spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops all nodes but keeps allocations for reuse across training steps.
    pub fn clear(&self) {
        let mut n = self.nodes.borrow_mut();
        n.spans.clear();
        n.parents.clear();
        n.partials.clear();
    }

    /// Registers a leaf (an input or parameter) and returns its handle.
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = {
            let mut n = self.nodes.borrow_mut();
            let start = n.parents.len() as u32;
            n.spans.push((start, 0));
            (n.spans.len() - 1) as u32
        };
        Var { tape: self, idx, val: value }
    }

    fn push1(&self, val: f64, p: u32, w: f64) -> Var<'_> {
        let idx = {
            let mut n = self.nodes.borrow_mut();
            let start = n.parents.len() as u32;
            n.parents.push(p);
            n.partials.push(w);
            n.spans.push((start, 1));
            (n.spans.len() - 1) as u32
        };
        Var { tape: self, idx, val }
    }

    fn push2(&self, val: f64, p0: u32, w0: f64, p1: u32, w1: f64) -> Var<'_> {
        let idx = {
            let mut n = self.nodes.borrow_mut();
            let start = n.parents.len() as u32;
            n.parents.push(p0);
            n.parents.push(p1);
            n.partials.push(w0);
            n.partials.push(w1);
            n.spans.push((start, 2));
            (n.spans.len() - 1) as u32
        };
        Var { tape: self, idx, val }
    }

    fn push_many(&self, val: f64, edges: impl Iterator<Item = (u32, f64)>) -> Var<'_> {
        let idx = {
            let mut n = self.nodes.borrow_mut();
            let start = n.parents.len() as u32;
            let mut len = 0u32;
            for (p, w) in edges {
                n.parents.push(p);
                n.partials.push(w);
                len += 1;
            }
            n.spans.push((start, len));
            (n.spans.len() - 1) as u32
        };
        Var { tape: self, idx, val }
    }

    /// Reverse sweep: gradients of `loss` with respect to every node.
    ///
    /// The loss is scalar by construction (`Var` wraps a single value).
    /// Nodes not reachable from the loss keep a zero adjoint.
    pub fn backward(&self, loss: Var<'_>) -> Gradients {
        assert!(
            std::ptr::eq(loss.tape, self),
            "loss was recorded on a different tape"
        );
        let n = self.nodes.borrow();
        let count = n.spans.len();
        let mut adj = vec![0.0f64; count];
        adj[loss.idx as usize] = 1.0;
        for i in (0..=loss.idx as usize).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let (start, len) = n.spans[i];
            let (s, e) = (start as usize, (start + len) as usize);
            for k in s..e {
                adj[n.parents[k] as usize] += a * n.partials[k];
            }
        }
        Gradients { adj }
    }
}

/// Adjoints produced by [`Tape::backward`], indexed by variable.
pub struct Gradients {
    adj: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.adj[v.idx as usize]
    }

    pub fn wrt_slice(&self, vs: &[Var<'_>]) -> Vec<f64> {
        vs.iter().map(|v| self.adj[v.idx as usize]).collect()
    }
}

/// A scalar value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    val: f64,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({}, #{})", self.val, self.idx)
    }
}

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.val
    }
}

macro_rules! binop_var {
    ($trait:ident, $fn:ident, $val:expr, $w0:expr, $w1:expr) => {
        impl<'t> $trait for Var<'t> {
            type Output = Var<'t>;
            fn $fn(self, rhs: Var<'t>) -> Var<'t> {
                debug_assert!(std::ptr::eq(self.tape, rhs.tape));
                let (a, b) = (self.val, rhs.val);
                let _ = (a, b);
                self.tape
                    .push2($val(a, b), self.idx, $w0(a, b), rhs.idx, $w1(a, b))
            }
        }
    };
}

binop_var!(Add, add, |a, b| a + b, |_, _| 1.0, |_, _| 1.0);
binop_var!(Sub, sub, |a, b| a - b, |_, _| 1.0, |_, _| -1.0);
binop_var!(Mul, mul, |a: f64, b: f64| a * b, |_, b: f64| b, |a, _| a);
binop_var!(
    Div,
    div,
    |a: f64, b: f64| a / b,
    |_, b: f64| 1.0 / b,
    |a: f64, b: f64| -a / (b * b)
);

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Var<'t> {
        self.tape.push1(self.val + c, self.idx, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Var<'t> {
        self.tape.push1(self.val - c, self.idx, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        self.tape.push1(self.val * c, self.idx, c)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, c: f64) -> Var<'t> {
        self.tape.push1(self.val / c, self.idx, 1.0 / c)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.tape.push1(-self.val, self.idx, -1.0)
    }
}

/// The numeric abstraction shared by plain floats and tape variables.
///
/// Branch decisions (`if x.value() > 0.0`) are made on current values, which
/// fixes the recorded code path per input, the usual convention for
/// piecewise-defined functions in reverse-mode differentiation.
pub trait Scalar:
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
    fn value(self) -> f64;
    /// A constant in the same evaluation context (same tape for [`Var`]).
    fn lift(self, c: f64) -> Self;
    fn recip(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    fn tan(self) -> Self;
    fn atan(self) -> Self;
    fn atanh(self) -> Self;
    fn sigmoid(self) -> Self;
    /// Clamp by value; gradient passes through inside the interval, zero outside.
    fn clamp_value(self, lo: f64, hi: f64) -> Self;
    /// Fused inner product. Panics on length mismatch or empty input.
    fn dot(a: &[Self], b: &[Self]) -> Self;
    /// Fused sum. Panics on empty input.
    fn sum(xs: &[Self]) -> Self;
}

#[inline]
fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Scalar for f64 {
    fn value(self) -> f64 {
        self
    }
    fn lift(self, c: f64) -> Self {
        c
    }
    fn recip(self) -> Self {
        1.0 / self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn tan(self) -> Self {
        f64::tan(self)
    }
    fn atan(self) -> Self {
        f64::atan(self)
    }
    fn atanh(self) -> Self {
        f64::atanh(self)
    }
    fn sigmoid(self) -> Self {
        sigmoid_f64(self)
    }
    fn clamp_value(self, lo: f64, hi: f64) -> Self {
        self.clamp(lo, hi)
    }
    fn dot(a: &[Self], b: &[Self]) -> Self {
        assert_eq!(a.len(), b.len());
        assert!(!a.is_empty());
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
    fn sum(xs: &[Self]) -> Self {
        assert!(!xs.is_empty());
        xs.iter().sum()
    }
}

impl<'t> Scalar for Var<'t> {
    fn value(self) -> f64 {
        self.val
    }
    fn lift(self, c: f64) -> Self {
        self.tape.var(c)
    }
    fn recip(self) -> Self {
        let v = 1.0 / self.val;
        self.tape.push1(v, self.idx, -v * v)
    }
    fn sqrt(self) -> Self {
        let v = self.val.sqrt();
        self.tape.push1(v, self.idx, 0.5 / v)
    }
    fn abs(self) -> Self {
        // Subgradient 0 at the kink.
        let w = if self.val > 0.0 {
            1.0
        } else if self.val < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.tape.push1(self.val.abs(), self.idx, w)
    }
    fn exp(self) -> Self {
        let v = self.val.exp();
        self.tape.push1(v, self.idx, v)
    }
    fn ln(self) -> Self {
        self.tape.push1(self.val.ln(), self.idx, 1.0 / self.val)
    }
    fn sin(self) -> Self {
        self.tape.push1(self.val.sin(), self.idx, self.val.cos())
    }
    fn cos(self) -> Self {
        self.tape.push1(self.val.cos(), self.idx, -self.val.sin())
    }
    fn tanh(self) -> Self {
        let v = self.val.tanh();
        self.tape.push1(v, self.idx, 1.0 - v * v)
    }
    fn tan(self) -> Self {
        let v = self.val.tan();
        self.tape.push1(v, self.idx, 1.0 + v * v)
    }
    fn atan(self) -> Self {
        self.tape
            .push1(self.val.atan(), self.idx, 1.0 / (1.0 + self.val * self.val))
    }
    fn atanh(self) -> Self {
        self.tape
            .push1(self.val.atanh(), self.idx, 1.0 / (1.0 - self.val * self.val))
    }
    fn sigmoid(self) -> Self {
        let v = sigmoid_f64(self.val);
        self.tape.push1(v, self.idx, v * (1.0 - v))
    }
    fn clamp_value(self, lo: f64, hi: f64) -> Self {
        let inside = self.val > lo && self.val < hi;
        let w = if inside { 1.0 } else { 0.0 };
        self.tape.push1(self.val.clamp(lo, hi), self.idx, w)
    }
    fn dot(a: &[Self], b: &[Self]) -> Self {
        assert_eq!(a.len(), b.len());
        assert!(!a.is_empty());
        let tape = a[0].tape;
        let val: f64 = a.iter().zip(b).map(|(x, y)| x.val * y.val).sum();
        tape.push_many(
            val,
            a.iter()
                .zip(b)
                .flat_map(|(x, y)| [(x.idx, y.val), (y.idx, x.val)]),
        )
    }
    fn sum(xs: &[Self]) -> Self {
        assert!(!xs.is_empty());
        let tape = xs[0].tape;
        let val: f64 = xs.iter().map(|x| x.val).sum();
        tape.push_many(val, xs.iter().map(|x| (x.idx, 1.0)))
    }
}

/// A scalar-valued function evaluable under any [`Scalar`] backend, used by
/// [`grad_check`] to compare the two differentiation routes.
pub trait ScalarFn {
    fn eval<S: Scalar>(&self, xs: &[S]) -> S;
}

/// One coordinate of a gradient comparison.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckEntry {
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Outcome of [`grad_check`].
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub per_coord: Vec<GradCheckEntry>,
    pub max_rel_err: f64,
    pub pass: bool,
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compares the reverse-mode gradient of `f` at `params` against central
/// finite differences with the given step, coordinate by coordinate.
pub fn grad_check<F: ScalarFn>(f: &F, params: &[f64], step: f64, tol: f64) -> GradCheckReport {
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = params.iter().map(|&p| tape.var(p)).collect();
    let loss = f.eval(&vars);
    let grads = tape.backward(loss);
    let analytic = grads.wrt_slice(&vars);

    let mut per_coord = Vec::with_capacity(params.len());
    let mut max_rel = 0.0f64;
    let mut buf = params.to_vec();
    for i in 0..params.len() {
        let p0 = buf[i];
        buf[i] = p0 + step;
        let fp = f.eval::<f64>(&buf);
        buf[i] = p0 - step;
        let fm = f.eval::<f64>(&buf);
        buf[i] = p0;
        let numeric = (fp - fm) / (2.0 * step);
        let e = rel_err(analytic[i], numeric);
        max_rel = max_rel.max(e);
        per_coord.push(GradCheckEntry { analytic: analytic[i], numeric, rel_err: e });
    }
    GradCheckReport { per_coord, max_rel_err: max_rel, pass: max_rel < tol }
}
