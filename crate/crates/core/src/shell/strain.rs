//! Kirchhoff-Love kinematics: deformation gradient, membrane and bending strains.

use crate::diffmath::{vec3, Jet, Ring, SpatialJet};
use crate::error::{Error, Result};
use crate::geometry::{
    covariant_derivative_tensor, covariant_derivative_vector, normal_and_area, ReferenceGeometry,
    ReferenceJets, Sym2, DEGENERATE_AREA,
};

/// Membrane strain `ε` and bending strain `κ` at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StrainState<T> {
    pub eps: Sym2<T>,
    pub kap: Sym2<T>,
}

/// Embeds an `f64` jet into another scalar type.
pub fn lift<T: Ring>(j: &Jet<f64>) -> Jet<T> {
    Jet {
        v: T::from_f64(j.v),
        d: j.d.map(T::from_f64),
        dd: j.dd.map(T::from_f64),
        ddd: j.ddd.map(T::from_f64),
        order: j.order,
    }
}

/// Reference jets converted to the working scalar type.
pub struct LiftedReference<T> {
    pub a: [[Jet<T>; 3]; 2],
    pub a3: [Jet<T>; 3],
    pub b_lo: Sym2<Jet<T>>,
    pub b_mixed: [[Jet<T>; 2]; 2],
    pub gamma: [Sym2<Jet<T>>; 2],
    pub a_up: Sym2<T>,
}

impl<T: Ring> LiftedReference<T> {
    pub fn new(r: &ReferenceJets) -> Self {
        Self {
            a: r.a.map(|v| v.map(|c| lift(&c))),
            a3: r.a3.map(|c| lift(&c)),
            b_lo: r.b_lo.map(|c| lift(&c)),
            b_mixed: r.b_mixed.map(|row| row.map(|c| lift(&c))),
            gamma: r.gamma.map(|g| g.map(|c| lift(&c))),
            a_up: r.a_up.map(|c| T::from_f64(c.v)),
        }
    }
}

/// Covariant components `(u₁, u₂, u₃)` of a Cartesian displacement jet.
pub fn covariant_jets<T: Ring>(u: &[Jet<T>; 3], r: &LiftedReference<T>) -> [Jet<T>; 3] {
    [vec3::dot(*u, r.a[0]), vec3::dot(*u, r.a[1]), vec3::dot(*u, r.a3)]
}

/// `φ_{αλ} = u_λ|_α − b̄_{αλ}u₃` and `φ_{α3} = u_{3,α} + b̄_α^λ u_λ`, as jets
/// one order below `u_cov`. Output `phi[α][λ]`, `phi3[α]`.
pub fn deformation_gradient<T: Ring>(
    u_cov: &[Jet<T>; 3],
    r: &LiftedReference<T>,
) -> ([[Jet<T>; 2]; 2], [Jet<T>; 2]) {
    let order = u_cov[0].order.saturating_sub(1);
    let tr = |j: Jet<T>| j.truncate(order);
    let u = [tr(u_cov[0]), tr(u_cov[1])];
    let u3 = tr(u_cov[2]);
    // du[λ][α] = u_{λ,α}
    let du = [0, 1].map(|l| [0, 1].map(|a| u_cov[l].partial(a)));
    let gamma = r.gamma.map(|g| g.map(tr));
    // cov[λ][α] = u_λ|_α
    let cov = covariant_derivative_vector(u, du, &gamma);
    let mut phi = [[Jet::constant(T::zero()); 2]; 2];
    for a in 0..2 {
        for l in 0..2 {
            phi[a][l] = cov[l][a] - tr(r.b_lo.get(a, l)) * u3;
        }
    }
    let phi3 = [0, 1].map(|a| {
        u_cov[2].partial(a) + tr(r.b_mixed[a][0]) * u[0] + tr(r.b_mixed[a][1]) * u[1]
    });
    (phi, phi3)
}

/// Membrane and bending strains from the deformation gradient jets
/// (first-order jets, so their ξ-partials are available).
pub fn strains<T: Ring>(
    phi: &[[Jet<T>; 2]; 2],
    phi3: &[Jet<T>; 2],
    r: &LiftedReference<T>,
) -> StrainState<T> {
    let au = r.a_up;
    let pv = phi.map(|row| row.map(|j| j.v));
    let p3 = phi3.map(|j| j.v);
    // φ_β^λ = a^{λμ} φ_{βμ}
    let mut mixed = [[T::zero(); 2]; 2];
    for b in 0..2 {
        for l in 0..2 {
            mixed[b][l] = au.get(l, 0) * pv[b][0] + au.get(l, 1) * pv[b][1];
        }
    }
    let eps_ab = |a: usize, b: usize| {
        let quad = pv[a][0] * mixed[b][0] + pv[a][1] * mixed[b][1] + p3[a] * p3[b];
        (pv[a][b] + pv[b][a] + quad).scale(0.5)
    };
    let eps = Sym2::new(eps_ab(0, 0), eps_ab(0, 1), eps_ab(1, 1));

    let gv = r.gamma.map(|g| g.map(|j| j.v));
    let b_lo = r.b_lo.map(|j| j.v);
    let b_mixed = r.b_mixed.map(|row| row.map(|j| j.v));
    // φ_{α3}|_β
    let dphi3 = [0, 1].map(|a| [0, 1].map(|b| phi3[a].d[b]));
    let phi3_cov = covariant_derivative_vector(p3, dphi3, &gv);
    // φ_{αλ}|_β as [α][λ][β]
    let dphi = phi.map(|row| row.map(|j| j.d));
    let phi_cov = covariant_derivative_tensor(pv, dphi, &gv);
    // φ^λ_3 = a^{λμ} φ_{μ3}
    let up3 = [0, 1].map(|l| au.get(l, 0) * p3[0] + au.get(l, 1) * p3[1]);
    let kap_ab = |a: usize, b: usize| {
        let mut k = -phi3_cov[a][b] - b_mixed[b][0] * pv[a][0] - b_mixed[b][1] * pv[a][1];
        for l in 0..2 {
            let inner = phi_cov[a][l][b] + (b_lo.get(a, b) * p3[l]).scale(0.5) - b_lo.get(b, l) * p3[a];
            k = k + up3[l] * inner;
        }
        k
    };
    let k12 = (kap_ab(0, 1) + kap_ab(1, 0)).scale(0.5);
    let kap = Sym2::new(kap_ab(0, 0), k12, kap_ab(1, 1));
    StrainState { eps, kap }
}

/// The deformation gradient straight from a Cartesian displacement:
/// `φ_{αλ} = ā_λ · u_{,α}` and `φ_{α3} = ā₃ · u_{,α}`. Equal to
/// [`deformation_gradient`] by the Gauss-Weingarten relations, and exactly
/// zero for a rigid translation.
pub fn deformation_gradient_cartesian<T: Ring>(
    u: &[Jet<T>; 3],
    r: &LiftedReference<T>,
) -> ([[Jet<T>; 2]; 2], [Jet<T>; 2]) {
    let order = u[0].order.saturating_sub(1);
    let du = [0, 1].map(|a| u.map(|c| c.partial(a)));
    let a = r.a.map(|v| v.map(|c| c.truncate(order)));
    let a3 = r.a3.map(|c| c.truncate(order));
    let phi = [0, 1].map(|al| [0, 1].map(|l| vec3::dot(a[l], du[al]).truncate(order)));
    let phi3 = [0, 1].map(|al| vec3::dot(a3, du[al]).truncate(order));
    (phi, phi3)
}

/// Strains of a Cartesian displacement jet (order ≥ 2) over reference jets.
pub fn strain_from_displacement<T: Ring>(u: &[Jet<T>; 3], r: &LiftedReference<T>) -> StrainState<T> {
    let (phi, phi3) = deformation_gradient_cartesian(u, r);
    strains(&phi, &phi3, r)
}

/// Strains from plain reference and displacement jets.
pub fn strain_at(reference: &SpatialJet, u: &SpatialJet) -> Result<StrainState<f64>> {
    if u.order() < 2 {
        return Err(Error::Invalid("strains need a second-order displacement jet".into()));
    }
    let rj = ReferenceJets::from_jet(reference)?;
    let lifted = LiftedReference::new(&rj);
    Ok(strain_from_displacement(&u.comps.map(|c| c.truncate(2)), &lifted))
}

/// `b̄ − b`, with `b` the second fundamental form of `x̄ + u` computed directly.
pub fn curvature_change_oracle(reference: &SpatialJet, deformed: &SpatialJet) -> Result<Sym2<f64>> {
    if reference.order() < 2 || deformed.order() < 2 {
        return Err(Error::Invalid("curvature oracle needs second-order jets".into()));
    }
    let rg = ReferenceGeometry::from_jet(reference)?;
    let a1 = deformed.tangent(0);
    let a2 = deformed.tangent(1);
    let (n, area) = normal_and_area(a1, a2);
    if !(area >= DEGENERATE_AREA) {
        return Err(Error::DegenerateChart("deformed surface is degenerate".into()));
    }
    let c = &deformed.comps;
    let b = |k: usize| vec3::dot([c[0].dd[k], c[1].dd[k], c[2].dd[k]], n);
    Ok(Sym2::new(rg.b_lo.c[0] - b(0), rg.b_lo.c[1] - b(1), rg.b_lo.c[2] - b(2)))
}
