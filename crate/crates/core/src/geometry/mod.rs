//! Differential geometry of parametric surfaces.
//!
//! All routines are generic over [`Ring`]/[`Scalar`] so the same code runs on
//! plain floats, on jets (yielding derivatives of geometric quantities) and
//! on tape variables.
//!
//! Index conventions: `Sym2` stores (11, 12, 22); Christoffel symbols are
//! `gamma[λ].get(α, β) = Γ^λ_{αβ}`; normal orientation is `a1 × a2`.

pub mod chart;
pub mod mesh;

pub use chart::{AnalyticChart, AnalyticKind, ChartDomain, MeshChart, Rect, Surface};
pub use mesh::TemplateMesh;

use crate::diffmath::{vec3, Jet, Ring, Scalar, SpatialJet};
use crate::error::{Error, Result};

pub const DEGENERATE_AREA: f64 = 1e-12;
pub const DEGENERATE_DET: f64 = 1e-24;

/// Symmetric 2×2 tensor stored as its three independent components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sym2<T> {
    pub c: [T; 3],
}

impl<T: Ring> Sym2<T> {
    pub fn new(c11: T, c12: T, c22: T) -> Self {
        Self { c: [c11, c12, c22] }
    }

    pub fn zero() -> Self {
        Self { c: [T::zero(); 3] }
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> T {
        self.c[a + b]
    }

    pub fn full(&self) -> [[T; 2]; 2] {
        [[self.c[0], self.c[1]], [self.c[1], self.c[2]]]
    }

    pub fn det(&self) -> T {
        self.c[0] * self.c[2] - self.c[1] * self.c[1]
    }

    pub fn map<U: Ring>(&self, f: impl Fn(T) -> U) -> Sym2<U> {
        Sym2 { c: self.c.map(f) }
    }
}

impl<T: Scalar> Sym2<T> {
    pub fn inverse(&self) -> Sym2<T> {
        let inv_det = self.det().recip();
        Sym2::new(self.c[2] * inv_det, -self.c[1] * inv_det, self.c[0] * inv_det)
    }
}

/// `out[α][β] = Σ_λ m[α][λ] s[λ][β]`
pub fn matmul2<T: Ring>(m: [[T; 2]; 2], s: [[T; 2]; 2]) -> [[T; 2]; 2] {
    let mut out = [[T::zero(); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            out[a][b] = m[a][0] * s[0][b] + m[a][1] * s[1][b];
        }
    }
    out
}

/// Metric data derived from a covariant tangent pair.
#[derive(Clone, Copy, Debug)]
pub struct MetricData<T> {
    pub a_lo: Sym2<T>,
    pub a_up: Sym2<T>,
    /// Contravariant basis vectors a^α.
    pub a_dual: [[T; 3]; 2],
    pub sqrt_a: T,
}

/// Unit normal `(a1 × a2) / |a1 × a2|` and the area Jacobian.
pub fn normal_and_area<T: Scalar>(a1: [T; 3], a2: [T; 3]) -> ([T; 3], T) {
    let c = vec3::cross(a1, a2);
    let sqrt_a = vec3::norm(c);
    (vec3::mul(c, sqrt_a.recip()), sqrt_a)
}

pub fn metric_from_tangents<T: Scalar>(a1: [T; 3], a2: [T; 3]) -> MetricData<T> {
    let a_lo = Sym2::new(vec3::dot(a1, a1), vec3::dot(a1, a2), vec3::dot(a2, a2));
    let a_up = a_lo.inverse();
    let dual = |l: usize| {
        vec3::add(vec3::mul(a1, a_up.get(l, 0)), vec3::mul(a2, a_up.get(l, 1)))
    };
    let sqrt_a = vec3::norm(vec3::cross(a1, a2));
    MetricData { a_lo, a_up, a_dual: [dual(0), dual(1)], sqrt_a }
}

/// Second fundamental form from second-derivative vectors `x_ab[α + β]`.
pub fn curvature_from<T: Ring>(x_ab: &[[T; 3]; 3], a3: [T; 3]) -> Sym2<T> {
    Sym2 { c: [vec3::dot(x_ab[0], a3), vec3::dot(x_ab[1], a3), vec3::dot(x_ab[2], a3)] }
}

/// `b_α^β = b_{αλ} a^{λβ}` as `[α][β]`.
pub fn mixed_curvature<T: Ring>(b_lo: &Sym2<T>, a_up: &Sym2<T>) -> [[T; 2]; 2] {
    matmul2(b_lo.full(), a_up.full())
}

/// `b^{αβ} = a^{αλ} b_{λμ} a^{μβ}`
pub fn raised_curvature<T: Ring>(b_lo: &Sym2<T>, a_up: &Sym2<T>) -> Sym2<T> {
    let m = matmul2(matmul2(a_up.full(), b_lo.full()), a_up.full());
    Sym2::new(m[0][0], m[0][1], m[1][1])
}

/// `Γ^λ_{αβ} = a^λ · x_{,αβ}`
pub fn christoffel_from<T: Ring>(x_ab: &[[T; 3]; 3], a_dual: &[[T; 3]; 2]) -> [Sym2<T>; 2] {
    let g = |l: usize| Sym2 {
        c: [
            vec3::dot(a_dual[l], x_ab[0]),
            vec3::dot(a_dual[l], x_ab[1]),
            vec3::dot(a_dual[l], x_ab[2]),
        ],
    };
    [g(0), g(1)]
}

/// `u_α|_β = u_{α,β} − u_λ Γ^λ_{αβ}`, with `du[α][β] = u_{α,β}`; output `[α][β]`.
pub fn covariant_derivative_vector<T: Ring>(
    u: [T; 2],
    du: [[T; 2]; 2],
    gamma: &[Sym2<T>; 2],
) -> [[T; 2]; 2] {
    let mut out = [[T::zero(); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            out[a][b] = du[a][b] - u[0] * gamma[0].get(a, b) - u[1] * gamma[1].get(a, b);
        }
    }
    out
}

/// `φ_{αβ}|_γ = φ_{αβ,γ} − φ_{λβ} Γ^λ_{αγ} − φ_{αλ} Γ^λ_{βγ}`,
/// with `dphi[α][β][γ] = φ_{αβ,γ}`; output `[α][β][γ]`.
pub fn covariant_derivative_tensor<T: Ring>(
    phi: [[T; 2]; 2],
    dphi: [[[T; 2]; 2]; 2],
    gamma: &[Sym2<T>; 2],
) -> [[[T; 2]; 2]; 2] {
    let mut out = [[[T::zero(); 2]; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                let mut v = dphi[a][b][c];
                for l in 0..2 {
                    v = v - phi[l][b] * gamma[l].get(a, c) - phi[a][l] * gamma[l].get(b, c);
                }
                out[a][b][c] = v;
            }
        }
    }
    out
}

/// All first-surface quantities at one parametric point.
#[derive(Clone, Copy, Debug)]
pub struct ReferenceGeometry {
    pub a1: [f64; 3],
    pub a2: [f64; 3],
    pub a3: [f64; 3],
    pub a_lo: Sym2<f64>,
    pub a_up: Sym2<f64>,
    pub a1_up: [f64; 3],
    pub a2_up: [f64; 3],
    pub b_lo: Sym2<f64>,
    pub b_mixed: [[f64; 2]; 2],
    pub b_up: Sym2<f64>,
    pub gamma: [Sym2<f64>; 2],
    pub sqrt_a: f64,
}

/// `(a1, a2, a3)` with `a3` the unit normal along `a1 × a2`.
pub fn covariant_basis(jet: &SpatialJet) -> Result<[[f64; 3]; 3]> {
    if jet.order() < 1 {
        return Err(Error::Invalid("covariant basis needs a first-order jet".into()));
    }
    let a1 = jet.tangent(0);
    let a2 = jet.tangent(1);
    let area = vec3::norm(vec3::cross(a1, a2));
    if !(area >= DEGENERATE_AREA) {
        return Err(Error::DegenerateChart(format!("|a1 x a2| = {area:e}")));
    }
    let (a3, _) = normal_and_area(a1, a2);
    Ok([a1, a2, a3])
}

pub fn metric_and_inverse(a1: [f64; 3], a2: [f64; 3]) -> Result<MetricData<f64>> {
    let a_lo = Sym2::new(vec3::dot(a1, a1), vec3::dot(a1, a2), vec3::dot(a2, a2));
    let det = a_lo.det();
    if !(det > DEGENERATE_DET) {
        return Err(Error::DegenerateMetric(det));
    }
    Ok(metric_from_tangents(a1, a2))
}

fn second_derivative_vectors(jet: &SpatialJet) -> [[f64; 3]; 3] {
    let c = &jet.comps;
    [0, 1, 2].map(|k| [c[0].dd[k], c[1].dd[k], c[2].dd[k]])
}

/// `(b_{αβ}, b_α^β, b^{αβ})`
pub fn second_fundamental_form(
    jet: &SpatialJet,
    a3: [f64; 3],
    a_up: &Sym2<f64>,
) -> Result<(Sym2<f64>, [[f64; 2]; 2], Sym2<f64>)> {
    if jet.order() < 2 {
        return Err(Error::Invalid("curvature needs a second-order jet".into()));
    }
    let b_lo = curvature_from(&second_derivative_vectors(jet), a3);
    Ok((b_lo, mixed_curvature(&b_lo, a_up), raised_curvature(&b_lo, a_up)))
}

pub fn christoffel(jet: &SpatialJet, a1_up: [f64; 3], a2_up: [f64; 3]) -> Result<[Sym2<f64>; 2]> {
    if jet.order() < 2 {
        return Err(Error::Invalid("Christoffel symbols need a second-order jet".into()));
    }
    Ok(christoffel_from(&second_derivative_vectors(jet), &[a1_up, a2_up]))
}

impl ReferenceGeometry {
    pub fn from_jet(jet: &SpatialJet) -> Result<Self> {
        let [a1, a2, a3] = covariant_basis(jet)?;
        let m = metric_and_inverse(a1, a2)?;
        let (b_lo, b_mixed, b_up) = second_fundamental_form(jet, a3, &m.a_up)?;
        let gamma = christoffel(jet, m.a_dual[0], m.a_dual[1])?;
        Ok(Self {
            a1,
            a2,
            a3,
            a_lo: m.a_lo,
            a_up: m.a_up,
            a1_up: m.a_dual[0],
            a2_up: m.a_dual[1],
            b_lo,
            b_mixed,
            b_up,
            gamma,
            sqrt_a: m.sqrt_a,
        })
    }

    /// Lowers a contravariant pair with the metric.
    pub fn lower(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.a_lo.get(0, 0) * v[0] + self.a_lo.get(0, 1) * v[1],
            self.a_lo.get(1, 0) * v[0] + self.a_lo.get(1, 1) * v[1],
        ]
    }

    pub fn raise(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.a_up.get(0, 0) * v[0] + self.a_up.get(0, 1) * v[1],
            self.a_up.get(1, 0) * v[0] + self.a_up.get(1, 1) * v[1],
        ]
    }
}

/// Reference-surface quantities as jets, carrying the ξ-derivatives the
/// strain computation needs (tangents to order 2, curvature and Christoffel
/// symbols to order 1).
#[derive(Clone, Copy, Debug)]
pub struct ReferenceJets {
    pub a: [[Jet<f64>; 3]; 2],
    pub a3: [Jet<f64>; 3],
    pub a_up: Sym2<Jet<f64>>,
    pub b_lo: Sym2<Jet<f64>>,
    pub b_mixed: [[Jet<f64>; 2]; 2],
    pub gamma: [Sym2<Jet<f64>>; 2],
    pub sqrt_a: f64,
}

impl ReferenceJets {
    /// Requires an order-3 jet of the reference position.
    pub fn from_jet(jet: &SpatialJet) -> Result<Self> {
        if jet.order() < 3 {
            return Err(Error::Invalid("reference jets need a third-order surface jet".into()));
        }
        covariant_basis(jet)?;
        let x = jet.comps;
        let a = [0, 1].map(|al| x.map(|c| c.partial(al)));
        let (a3, sqrt_a) = normal_and_area(a[0], a[1]);
        let m = metric_from_tangents(a[0], a[1]);
        if !(m.a_lo.det().v > DEGENERATE_DET) {
            return Err(Error::DegenerateMetric(m.a_lo.det().v));
        }
        // x_{,αβ} as order-1 jets: ∂_β a_α
        let x_ab: [[Jet<f64>; 3]; 3] = [
            a[0].map(|c| c.partial(0)),
            a[0].map(|c| c.partial(1)),
            a[1].map(|c| c.partial(1)),
        ];
        let b_lo = curvature_from(&x_ab, a3);
        let b_mixed = mixed_curvature(&b_lo, &m.a_up);
        let gamma = christoffel_from(&x_ab, &m.a_dual);
        Ok(Self { a, a3, a_up: m.a_up, b_lo, b_mixed, gamma, sqrt_a: sqrt_a.v })
    }
}
