//! Sine-activated implicit fields: the reference field for the template and
//! the deformation field over chart and time.

pub mod io;
pub mod ndf;
pub mod nrf;
pub mod siren;

pub use ndf::{
    deformation, ndf_offset, temporal_penalty, temporal_penalty_grad, temporal_penalty_values,
    tracked_position, DeformationBatch, DeformationField, TemporalMode,
};
pub use nrf::{fit_nrf, NeuralReference, NrfFitOptions, NrfReport, ReferenceField, TemplateSource};
pub use siren::{siren_init, ForwardCache, Siren, SirenConfig};

use nalgebra::DMatrix;

use crate::diffmath::{component_count, vec3, Ring, SpatialJet};
use crate::geometry::ReferenceGeometry;

/// Network input for chart points, normalised by `norm` (see
/// [`Rect::normalizer`](crate::geometry::Rect::normalizer)), optionally with a
/// constant time coordinate per sample as a third row.
pub fn chart_input(
    xis: &[[f64; 2]],
    norm: [(f64, f64); 2],
    time: Option<&[f64]>,
    order: u8,
) -> DMatrix<f64> {
    let c = component_count(order);
    let rows = if time.is_some() { 3 } else { 2 };
    let mut x = DMatrix::zeros(rows, xis.len() * c);
    for (s, p) in xis.iter().enumerate() {
        for a in 0..2 {
            x[(a, s * c)] = norm[a].0 * p[a] + norm[a].1;
            if order >= 1 {
                x[(a, s * c + 1 + a)] = norm[a].0;
            }
        }
        if let Some(t) = time {
            x[(2, s * c)] = t[s];
        }
    }
    x
}

pub fn jets_from_cache(cache: &ForwardCache) -> Vec<SpatialJet> {
    (0..cache.samples).map(|s| SpatialJet::new([0, 1, 2].map(|k| cache.jet(s, k)))).collect()
}

/// `(u·a1, u·a2, u·a3)` for any scalar type.
pub fn covariant_components<T: Ring>(u: [T; 3], basis: &[[T; 3]; 3]) -> [T; 3] {
    [vec3::dot(u, basis[0]), vec3::dot(u, basis[1]), vec3::dot(u, basis[2])]
}

/// Covariant components `(u₁, u₂, u₃)` such that `u = u_α a^α + u₃ a³`.
pub fn cartesian_to_curvilinear(u: [f64; 3], geom: &ReferenceGeometry) -> [f64; 3] {
    covariant_components(u, &[geom.a1, geom.a2, geom.a3])
}
