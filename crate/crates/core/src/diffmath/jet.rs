//! Truncated bivariate Taylor jets (forward mode, order ≤ 3).
//!
//! A [`Jet`] carries a value and all partial derivatives with respect to the
//! two chart coordinates up to its order. Symmetric blocks are stored once:
//! the second-order slot for (α, β) is `α + β` and the third-order slot for
//! (α, β, γ) is `α + β + γ` (0-based indices), so permutation symmetry holds
//! by construction.

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::scalar::{Ring, Scalar};

pub const MAX_ORDER: u8 = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<S> {
    pub v: S,
    pub d: [S; 2],
    pub dd: [S; 3],
    pub ddd: [S; 4],
    pub order: u8,
}

/// Number of stored components for a jet of the given order.
pub const fn component_count(order: u8) -> usize {
    match order {
        0 => 1,
        1 => 3,
        2 => 6,
        _ => 10,
    }
}

impl<S: Ring> Jet<S> {
    pub fn constant(v: S) -> Self {
        let z = S::zero();
        Jet { v, d: [z; 2], dd: [z; 3], ddd: [z; 4], order: MAX_ORDER }
    }

    /// The coordinate function ξ^axis evaluated at `v`.
    pub fn variable(v: S, axis: usize) -> Self {
        let mut j = Self::constant(v);
        j.d[axis] = S::one();
        j
    }

    pub fn dd_at(&self, a: usize, b: usize) -> S {
        self.dd[a + b]
    }

    pub fn ddd_at(&self, a: usize, b: usize, c: usize) -> S {
        self.ddd[a + b + c]
    }

    /// Drops derivative information above `order`.
    pub fn truncate(mut self, order: u8) -> Self {
        let z = S::zero();
        if order < 3 {
            self.ddd = [z; 4];
        }
        if order < 2 {
            self.dd = [z; 3];
        }
        if order < 1 {
            self.d = [z; 2];
        }
        self.order = self.order.min(order);
        self
    }

    /// ∂/∂ξ^axis, one order lower.
    pub fn partial(&self, axis: usize) -> Self {
        assert!(self.order >= 1, "partial of an order-0 jet");
        let z = S::zero();
        let a = axis;
        let mut out = Jet {
            v: self.d[a],
            d: [self.dd[a], self.dd[a + 1]],
            dd: [self.ddd[a], self.ddd[a + 1], self.ddd[a + 2]],
            ddd: [z; 4],
            order: self.order - 1,
        };
        out = out.truncate(out.order);
        out
    }

    /// Packs components as `[v, d1, d2, d11, d12, d22, d111, d112, d122, d222]`
    /// truncated to the component count of `order`.
    pub fn to_components(&self, order: u8, out: &mut [S]) {
        let n = component_count(order);
        let all = [
            self.v, self.d[0], self.d[1], self.dd[0], self.dd[1], self.dd[2], self.ddd[0],
            self.ddd[1], self.ddd[2], self.ddd[3],
        ];
        out[..n].copy_from_slice(&all[..n]);
    }

    pub fn from_components(c: &[S], order: u8) -> Self {
        let z = S::zero();
        let g = |i: usize| if i < c.len() { c[i] } else { z };
        Jet {
            v: g(0),
            d: [g(1), g(2)],
            dd: [g(3), g(4), g(5)],
            ddd: [g(6), g(7), g(8), g(9)],
            order,
        }
        .truncate(order)
    }

    /// Applies a univariate function given its derivatives `f(v), f', f'', f'''`.
    pub fn compose(&self, f0: S, f1: S, f2: S, f3: S) -> Self {
        let z = S::zero();
        let o = self.order;
        let mut out = Jet { v: f0, d: [z; 2], dd: [z; 3], ddd: [z; 4], order: o };
        if o >= 1 {
            out.d = [f1 * self.d[0], f1 * self.d[1]];
        }
        if o >= 2 {
            let d = self.d;
            out.dd = [
                f2 * d[0] * d[0] + f1 * self.dd[0],
                f2 * d[0] * d[1] + f1 * self.dd[1],
                f2 * d[1] * d[1] + f1 * self.dd[2],
            ];
        }
        if o >= 3 {
            let d = self.d;
            let dd = self.dd;
            // slot k = number of second-axis indices among (α, β, γ)
            let idx: [[usize; 3]; 4] = [[0, 0, 0], [0, 0, 1], [0, 1, 1], [1, 1, 1]];
            for (k, &[a, b, c]) in idx.iter().enumerate() {
                out.ddd[k] = f3 * d[a] * d[b] * d[c]
                    + f2 * (dd[a + b] * d[c] + dd[a + c] * d[b] + dd[b + c] * d[a])
                    + f1 * self.ddd[k];
            }
        }
        out
    }
}

impl<S: Ring> Add for Jet<S> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        let order = self.order.min(o.order);
        Jet {
            v: self.v + o.v,
            d: [self.d[0] + o.d[0], self.d[1] + o.d[1]],
            dd: [self.dd[0] + o.dd[0], self.dd[1] + o.dd[1], self.dd[2] + o.dd[2]],
            ddd: [
                self.ddd[0] + o.ddd[0],
                self.ddd[1] + o.ddd[1],
                self.ddd[2] + o.ddd[2],
                self.ddd[3] + o.ddd[3],
            ],
            order,
        }
        .truncate(order)
    }
}

impl<S: Ring> Sub for Jet<S> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl<S: Ring> Neg for Jet<S> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Jet {
            v: -self.v,
            d: [-self.d[0], -self.d[1]],
            dd: [-self.dd[0], -self.dd[1], -self.dd[2]],
            ddd: [-self.ddd[0], -self.ddd[1], -self.ddd[2], -self.ddd[3]],
            order: self.order,
        }
    }
}

impl<S: Ring> Mul for Jet<S> {
    type Output = Self;
    fn mul(self, g: Self) -> Self {
        let f = self;
        let order = f.order.min(g.order);
        let z = S::zero();
        let mut out = Jet { v: f.v * g.v, d: [z; 2], dd: [z; 3], ddd: [z; 4], order };
        if order >= 1 {
            for a in 0..2 {
                out.d[a] = f.d[a] * g.v + f.v * g.d[a];
            }
        }
        if order >= 2 {
            for (k, (a, b)) in [(0, 0), (0, 1), (1, 1)].into_iter().enumerate() {
                out.dd[k] = f.dd[k] * g.v + f.d[a] * g.d[b] + f.d[b] * g.d[a] + f.v * g.dd[k];
            }
        }
        if order >= 3 {
            let idx: [[usize; 3]; 4] = [[0, 0, 0], [0, 0, 1], [0, 1, 1], [1, 1, 1]];
            for (k, &[a, b, c]) in idx.iter().enumerate() {
                out.ddd[k] = f.ddd[k] * g.v
                    + f.dd[a + b] * g.d[c]
                    + f.dd[a + c] * g.d[b]
                    + f.dd[b + c] * g.d[a]
                    + f.d[a] * g.dd[b + c]
                    + f.d[b] * g.dd[a + c]
                    + f.d[c] * g.dd[a + b]
                    + f.v * g.ddd[k];
            }
        }
        out
    }
}

impl<S: Scalar> Div for Jet<S> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        self * o.recip_jet()
    }
}

impl<S: Ring> Ring for Jet<S> {
    fn from_f64(v: f64) -> Self {
        Jet::constant(S::from_f64(v))
    }

    fn scale(self, c: f64) -> Self {
        Jet {
            v: self.v.scale(c),
            d: [self.d[0].scale(c), self.d[1].scale(c)],
            dd: [self.dd[0].scale(c), self.dd[1].scale(c), self.dd[2].scale(c)],
            ddd: [
                self.ddd[0].scale(c),
                self.ddd[1].scale(c),
                self.ddd[2].scale(c),
                self.ddd[3].scale(c),
            ],
            order: self.order,
        }
    }
}

impl<S: Scalar> Jet<S> {
    pub fn sin_jet(&self) -> Self {
        let (s, c) = (self.v.sin(), self.v.cos());
        self.compose(s, c, -s, -c)
    }

    pub fn cos_jet(&self) -> Self {
        let (s, c) = (self.v.sin(), self.v.cos());
        self.compose(c, -s, -c, s)
    }

    pub fn sqrt_jet(&self) -> Self {
        let r = self.v.sqrt();
        let inv = r.recip();
        let inv_v = self.v.recip();
        let f1 = inv.scale(0.5);
        let f2 = (f1 * inv_v).scale(-0.5);
        let f3 = (f2 * inv_v).scale(-1.5);
        self.compose(r, f1, f2, f3)
    }

    pub fn recip_jet(&self) -> Self {
        let r = self.v.recip();
        let r2 = r * r;
        let f1 = -r2;
        let f2 = (r2 * r).scale(2.0);
        let f3 = (r2 * r2).scale(-6.0);
        self.compose(r, f1, f2, f3)
    }
}

impl<S: Scalar> Scalar for Jet<S> {
    fn value(self) -> f64 {
        self.v.value()
    }
    fn sin(self) -> Self {
        self.sin_jet()
    }
    fn cos(self) -> Self {
        self.cos_jet()
    }
    fn sqrt(self) -> Self {
        self.sqrt_jet()
    }
    fn recip(self) -> Self {
        self.recip_jet()
    }
}

/// Jets of a 2D → 3D map at one parametric point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialJet {
    pub comps: [Jet<f64>; 3],
}

impl SpatialJet {
    pub fn new(comps: [Jet<f64>; 3]) -> Self {
        Self { comps }
    }

    pub fn order(&self) -> u8 {
        self.comps.iter().map(|c| c.order).min().unwrap_or(0)
    }

    pub fn value(&self) -> [f64; 3] {
        [self.comps[0].v, self.comps[1].v, self.comps[2].v]
    }

    /// `d1[i][α] = ∂x_i/∂ξ^α`
    pub fn d1(&self) -> [[f64; 2]; 3] {
        self.comps.map(|c| c.d)
    }

    pub fn d2(&self) -> [[[f64; 2]; 2]; 3] {
        self.comps.map(|c| {
            let mut m = [[0.0; 2]; 2];
            for (a, row) in m.iter_mut().enumerate() {
                for (b, v) in row.iter_mut().enumerate() {
                    *v = c.dd_at(a, b);
                }
            }
            m
        })
    }

    pub fn d3(&self) -> Option<[[[[f64; 2]; 2]; 2]; 3]> {
        if self.order() < 3 {
            return None;
        }
        Some(self.comps.map(|c| {
            let mut m = [[[0.0; 2]; 2]; 2];
            for (a, plane) in m.iter_mut().enumerate() {
                for (b, row) in plane.iter_mut().enumerate() {
                    for (g, v) in row.iter_mut().enumerate() {
                        *v = c.ddd_at(a, b, g);
                    }
                }
            }
            m
        }))
    }

    /// Tangent vector ∂x/∂ξ^axis.
    pub fn tangent(&self, axis: usize) -> [f64; 3] {
        [self.comps[0].d[axis], self.comps[1].d[axis], self.comps[2].d[axis]]
    }
}
