//! Reverse-mode recording of scalar computations.
//!
//! Every operation on a [`Var`] appends one node with at most two parents and
//! the local partial derivatives evaluated at record time. Constants never
//! touch the tape. A context is single-threaded (`RefCell`), but the
//! [`Gradient`] it produces is a plain value.

use std::cell::RefCell;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use super::scalar::{Ring, Scalar};

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
struct Node {
    a: u32,
    b: u32,
    da: f64,
    db: f64,
}

/// Recording context for one reverse sweep.
#[derive(Default)]
pub struct AdjointContext {
    nodes: RefCell<Vec<Node>>,
    params: RefCell<Vec<(String, Vec<u32>)>>,
}

/// A recorded scalar. `Copy`, borrows its context.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    val: f64,
    idx: u32,
    tape: Option<&'t AdjointContext>,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.idx == NONE {
            write!(f, "Var(const {})", self.val)
        } else {
            write!(f, "Var(#{} = {})", self.idx, self.val)
        }
    }
}

/// Gradient over the named parameter sets of a context, in registration order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub names: Vec<(String, std::ops::Range<usize>)>,
    pub values: Vec<f64>,
    /// True when the loss does not depend on any registered parameter.
    pub disconnected: bool,
}

impl Gradient {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| &self.values[r.clone()])
    }
}

impl AdjointContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self { nodes: RefCell::new(Vec::with_capacity(n)), params: RefCell::default() }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops all recorded nodes and parameter registrations, keeping capacity.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
        self.params.get_mut().clear();
    }

    /// Fresh unnamed leaf.
    pub fn var(&self, v: f64) -> Var<'_> {
        let idx = self.push(Node { a: NONE, b: NONE, da: 0.0, db: 0.0 });
        Var { val: v, idx, tape: Some(self) }
    }

    pub fn vars(&self, vs: &[f64]) -> Vec<Var<'_>> {
        vs.iter().map(|&v| self.var(v)).collect()
    }

    /// Registers a named parameter set and returns its leaves.
    pub fn param(&self, name: &str, values: &[f64]) -> Vec<Var<'_>> {
        let leaves = self.vars(values);
        self.params
            .borrow_mut()
            .push((name.to_string(), leaves.iter().map(|v| v.idx).collect()));
        leaves
    }

    pub fn constant(v: f64) -> Var<'static> {
        Var { val: v, idx: NONE, tape: None }
    }

    fn push(&self, node: Node) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len();
        assert!(idx < NONE as usize, "tape overflow");
        nodes.push(node);
        idx as u32
    }

    fn sweep(&self, loss: Var<'_>) -> Vec<f64> {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        if loss.idx == NONE {
            return adj;
        }
        adj[loss.idx as usize] = 1.0;
        for i in (0..=loss.idx as usize).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            let n = nodes[i];
            if n.a != NONE {
                adj[n.a as usize] += g * n.da;
            }
            if n.b != NONE {
                adj[n.b as usize] += g * n.db;
            }
        }
        adj
    }

    /// Gradient of `loss` with respect to arbitrary leaves.
    pub fn gradient_wrt(&self, loss: Var<'_>, leaves: &[Var<'_>]) -> Vec<f64> {
        let adj = self.sweep(loss);
        leaves
            .iter()
            .map(|v| if v.idx == NONE { 0.0 } else { adj[v.idx as usize] })
            .collect()
    }

    /// Gradient of `loss` with respect to every registered parameter set.
    pub fn grad_params(&self, loss: Var<'_>) -> Gradient {
        let adj = self.sweep(loss);
        let params = self.params.borrow();
        let mut names = Vec::with_capacity(params.len());
        let mut values = Vec::new();
        let mut connected = false;
        for (name, idxs) in params.iter() {
            let start = values.len();
            for &i in idxs {
                let g = adj[i as usize];
                connected |= g != 0.0;
                values.push(g);
            }
            names.push((name.clone(), start..values.len()));
        }
        // A loss that reaches a parameter only through exactly-cancelling paths
        // still counts as connected when the sweep visited it.
        if !connected && loss.idx != NONE {
            connected = reaches_any(&self.nodes.borrow(), loss.idx, &params);
        }
        Gradient { names, values, disconnected: !connected }
    }
}

fn reaches_any(nodes: &[Node], root: u32, params: &[(String, Vec<u32>)]) -> bool {
    let mut leaf = vec![false; nodes.len()];
    for (_, idxs) in params {
        for &i in idxs {
            leaf[i as usize] = true;
        }
    }
    let mut seen = vec![false; nodes.len()];
    let mut stack = vec![root];
    while let Some(i) = stack.pop() {
        let i = i as usize;
        if seen[i] {
            continue;
        }
        seen[i] = true;
        if leaf[i] {
            return true;
        }
        let n = nodes[i];
        if n.a != NONE {
            stack.push(n.a);
        }
        if n.b != NONE {
            stack.push(n.b);
        }
    }
    false
}

impl<'t> Var<'t> {
    pub fn val(self) -> f64 {
        self.val
    }

    pub fn is_constant(self) -> bool {
        self.idx == NONE
    }

    #[inline]
    fn unary(self, val: f64, d: f64) -> Self {
        match self.tape {
            Some(t) if self.idx != NONE => {
                let idx = t.push(Node { a: self.idx, b: NONE, da: d, db: 0.0 });
                Var { val, idx, tape: Some(t) }
            }
            _ => Var { val, idx: NONE, tape: None },
        }
    }

    #[inline]
    fn binary(self, other: Self, val: f64, da: f64, db: f64) -> Self {
        match (self.idx != NONE, other.idx != NONE) {
            (false, false) => Var { val, idx: NONE, tape: None },
            (true, false) => self.unary(val, da),
            (false, true) => other.unary(val, db),
            (true, true) => {
                let t = self.tape.expect("recorded var without tape");
                let idx = t.push(Node { a: self.idx, b: other.idx, da, db });
                Var { val, idx, tape: Some(t) }
            }
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        self.binary(o, self.val + o.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        self.binary(o, self.val - o.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        self.binary(o, self.val * o.val, o.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.val;
        let q = self.val * inv;
        self.binary(o, q, inv, -q * inv)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.unary(-self.val, -1.0)
    }
}

impl<'t> AddAssign for Var<'t> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<'t> Ring for Var<'t> {
    #[inline]
    fn from_f64(v: f64) -> Self {
        Var { val: v, idx: NONE, tape: None }
    }

    #[inline]
    fn scale(self, c: f64) -> Self {
        self.unary(self.val * c, c)
    }
}

impl<'t> Scalar for Var<'t> {
    fn value(self) -> f64 {
        self.val
    }
    fn sin(self) -> Self {
        self.unary(self.val.sin(), self.val.cos())
    }
    fn cos(self) -> Self {
        self.unary(self.val.cos(), -self.val.sin())
    }
    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s)
    }
    fn recip(self) -> Self {
        let r = 1.0 / self.val;
        self.unary(r, -r * r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let ctx = AdjointContext::new();
        let p = ctx.param("p", &[1.0, 2.0]);
        let loss = p[0] * p[0] + p[1] * p[1];
        let g = ctx.grad_params(loss);
        assert_eq!(g.values, vec![2.0, 4.0]);
        assert!(!g.disconnected);
        assert_eq!(g.get("p"), Some(&[2.0, 4.0][..]));
    }

    #[test]
    fn sine_at_zero() {
        let ctx = AdjointContext::new();
        let p = ctx.param("p", &[0.0]);
        let g = ctx.grad_params(p[0].sin());
        assert_eq!(g.values, vec![1.0]);
    }

    #[test]
    fn disconnected_loss_flags() {
        let ctx = AdjointContext::new();
        let _p = ctx.param("p", &[3.0, 4.0]);
        let other = ctx.var(2.0);
        let g = ctx.grad_params(other * other);
        assert_eq!(g.values, vec![0.0, 0.0]);
        assert!(g.disconnected);

        let ctx = AdjointContext::new();
        let _p = ctx.param("p", &[3.0]);
        let g = ctx.grad_params(Var::from_f64(1.0));
        assert!(g.disconnected);
    }

    #[test]
    fn cancelling_paths_are_connected() {
        let ctx = AdjointContext::new();
        let p = ctx.param("p", &[3.0]);
        let g = ctx.grad_params(p[0] - p[0]);
        assert_eq!(g.values, vec![0.0]);
        assert!(!g.disconnected);
    }

    #[test]
    fn replay_is_bit_identical() {
        let run = || {
            let ctx = AdjointContext::new();
            let p = ctx.param("p", &[0.3, -1.7, 2.2]);
            let loss = (p[0] * p[1]).sin() / (p[2] * p[2] + Var::from_f64(1.0)).sqrt()
                + p[1].cos().recip().scale(0.1);
            ctx.grad_params(loss).values
        };
        let a = run();
        let b = run();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn constants_do_not_record() {
        let ctx = AdjointContext::new();
        let c = Var::from_f64(2.0) * Var::from_f64(3.0);
        assert!(c.is_constant());
        assert_eq!(ctx.len(), 0);
    }
}
