//! Thin-shell energy of the tracked states, averaged over random chart points.

use rand::Rng;
use rayon::prelude::*;

use crate::diffmath::{component_count, AdjointContext, CompensatedSum, Jet, SpatialJet, Var};
use crate::error::{Error, Result};
use crate::fields::{DeformationField, ReferenceField};
use crate::geometry::{ReferenceJets, Surface};

use super::strain::{strain_from_displacement, LiftedReference};
use super::{elastic_tensor, energy_density, ElasticTensor, MaterialModel};

/// Precomputed per-point reference data.
pub struct ReferencePoint {
    pub jets: ReferenceJets,
    pub h: ElasticTensor,
}

impl ReferencePoint {
    pub fn new(jet: &SpatialJet, nu: f64) -> Result<Self> {
        let jets = ReferenceJets::from_jet(jet)?;
        let a_up = jets.a_up.map(|j| j.v);
        Ok(Self { jets, h: elastic_tensor(&a_up, nu) })
    }
}

pub fn reference_points(reference: &ReferenceField, xis: &[[f64; 2]], nu: f64) -> Result<Vec<ReferencePoint>> {
    reference.jets(xis, 3)?.iter().map(|j| ReferencePoint::new(j, nu)).collect()
}

/// Energy `Ψ√ā` of displacement jet `u` (order 2).
pub fn sample_energy(point: &ReferencePoint, u: &SpatialJet, d: f64, b: f64) -> f64 {
    let lr = LiftedReference::<f64>::new(&point.jets);
    let s = strain_from_displacement(&u.comps.map(|c| c.truncate(2)), &lr);
    energy_density(&s, &point.h, d, b, point.jets.sqrt_a)
}

/// Energy and its cotangent with respect to the 18 components of `u`
/// (component-major, jet layout inner).
pub fn sample_energy_grad(point: &ReferencePoint, u: &SpatialJet, d: f64, b: f64) -> (f64, [f64; 18]) {
    let ctx = AdjointContext::with_capacity(4096);
    let c = component_count(2);
    let mut raw = [0.0; 18];
    for k in 0..3 {
        u.comps[k].to_components(2, &mut raw[k * c..(k + 1) * c]);
    }
    let leaves = ctx.vars(&raw);
    let uj: [Jet<Var>; 3] = [0, 1, 2].map(|k| Jet::from_components(&leaves[k * c..(k + 1) * c], 2));
    let lr = LiftedReference::<Var>::new(&point.jets);
    let s = strain_from_displacement(&uj, &lr);
    let e = energy_density(&s, &point.h, d, b, point.jets.sqrt_a);
    let g = ctx.gradient_wrt(e, &leaves);
    let mut out = [0.0; 18];
    out.copy_from_slice(&g);
    (e.val(), out)
}

#[derive(Clone, Debug)]
pub struct PhysicsEval {
    pub loss: f64,
    /// Θ-gradient when requested.
    pub grad: Option<Vec<f64>>,
    /// `Σ_t Ψ√ā` per sample point, for Monte-Carlo error estimates.
    pub per_point: Vec<f64>,
}

/// `L_p = 1/(2 N_p T) Σ_i Σ_{t=2..T} Ψ(ξ_i, t)√ā(ξ_i)` at fixed points.
pub fn physics_loss_at(
    reference: &ReferenceField,
    field: &DeformationField,
    material: &MaterialModel,
    xis: &[[f64; 2]],
    want_grad: bool,
) -> Result<PhysicsEval> {
    material.validate()?;
    if xis.is_empty() {
        return Err(Error::Invalid("physics loss needs at least one sample".into()));
    }
    let t_count = field.frames;
    if t_count < 2 {
        return Err(Error::Invalid("physics loss needs at least two frames".into()));
    }
    let (d, b) = (material.in_plane(), material.bending());
    let refs = reference_points(reference, xis, material.nu)?;
    let batch = field.deformation_batch(xis, 2)?;
    let scale = 1.0 / (2.0 * xis.len() as f64 * t_count as f64);
    let per: Vec<(f64, Vec<f64>)> = (0..xis.len())
        .into_par_iter()
        .map(|p| {
            let mut sum = CompensatedSum::new();
            let mut g = if want_grad { vec![0.0; t_count * 18] } else { Vec::new() };
            for t in 2..=t_count {
                let u = batch.u(p, t);
                if want_grad {
                    let (e, ge) = sample_energy_grad(&refs[p], u, d, b);
                    sum.add(e);
                    for (dst, src) in g[(t - 1) * 18..t * 18].iter_mut().zip(ge) {
                        *dst = src * scale;
                    }
                } else {
                    sum.add(sample_energy(&refs[p], u, d, b));
                }
            }
            (sum.value(), g)
        })
        .collect();
    let mut total = CompensatedSum::new();
    for (e, _) in &per {
        total.add(*e);
    }
    let loss = total.value() * scale;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("physics loss {loss}")));
    }
    let grad = if want_grad {
        let gu: Vec<f64> = per.iter().flat_map(|(_, g)| g.iter().copied()).collect();
        Some(batch.backward(field, &gu)?)
    } else {
        None
    };
    Ok(PhysicsEval { loss, grad, per_point: per.into_iter().map(|(e, _)| e).collect() })
}

/// Physics loss at `n_p` fresh area-uniform chart samples.
pub fn physics_loss<R: Rng + ?Sized>(
    reference: &ReferenceField,
    field: &DeformationField,
    material: &MaterialModel,
    n_p: usize,
    rng: &mut R,
) -> Result<f64> {
    if n_p == 0 {
        return Err(Error::Invalid("physics loss needs at least one sample".into()));
    }
    let xis = reference.domain().sample_n(n_p, rng);
    Ok(physics_loss_at(reference, field, material, &xis, false)?.loss)
}
