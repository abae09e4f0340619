//! Reference surfaces: closed-form charts or a fitted SIREN over the template chart.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffmath::{jet_eval, SpatialJet};
use crate::error::{Error, Result};
use crate::geometry::{AnalyticChart, ChartDomain, Surface, TemplateMesh};
use crate::track::adam::{cosine_schedule, Adam};

use super::siren::{Siren, SirenConfig};
use super::{chart_input, jets_from_cache};

/// SIREN map from the normalised chart to ℝ³.
#[derive(Clone, Debug)]
pub struct NeuralReference {
    pub net: Siren,
    pub domain: ChartDomain,
}

#[derive(Clone, Debug)]
pub enum ReferenceField {
    Analytic(AnalyticChart),
    Neural(NeuralReference),
}

impl ReferenceField {
    /// Jets at many points; batched for neural fields.
    pub fn jets(&self, xis: &[[f64; 2]], order: u8) -> Result<Vec<SpatialJet>> {
        match self {
            ReferenceField::Analytic(c) => xis.iter().map(|&xi| jet_eval(c, xi, order)).collect(),
            ReferenceField::Neural(n) => n.jets(xis, order),
        }
    }

    pub fn positions(&self, xis: &[[f64; 2]]) -> Result<Vec<[f64; 3]>> {
        match self {
            ReferenceField::Analytic(_) => xis.iter().map(|&xi| self.position(xi)).collect(),
            ReferenceField::Neural(n) => Ok(n.jets(xis, 0)?.iter().map(|j| j.value()).collect()),
        }
    }
}

impl NeuralReference {
    pub fn jets(&self, xis: &[[f64; 2]], order: u8) -> Result<Vec<SpatialJet>> {
        if order > 3 {
            return Err(Error::Invalid(format!("jet order {order} outside 0..=3")));
        }
        let norm = self.domain.bounds().normalizer();
        let x = chart_input(xis, norm, None, order);
        let cache = self.net.forward(x, order)?;
        Ok(jets_from_cache(&cache))
    }
}

impl Surface for ReferenceField {
    fn surface_jet(&self, xi: [f64; 2], order: u8) -> Result<SpatialJet> {
        match self {
            ReferenceField::Analytic(c) => c.surface_jet(xi, order),
            ReferenceField::Neural(n) => Ok(n.jets(&[xi], order)?.remove(0)),
        }
    }

    fn domain(&self) -> &ChartDomain {
        match self {
            ReferenceField::Analytic(c) => &c.domain,
            ReferenceField::Neural(n) => &n.domain,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NrfFitOptions {
    pub iterations: usize,
    pub batch: usize,
    pub lr: f64,
    /// Held-out mean error threshold as a fraction of the bounding-box diagonal.
    pub threshold: f64,
    pub holdout: usize,
    pub seed: u64,
}

impl Default for NrfFitOptions {
    fn default() -> Self {
        Self { iterations: 2000, batch: 256, lr: 1e-3, threshold: 1e-3, holdout: 1000, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NrfReport {
    pub iterations: usize,
    pub final_loss: f64,
    pub holdout_error: f64,
    pub threshold: f64,
}

/// What the reference surface is built from.
#[derive(Clone, Debug)]
pub enum TemplateSource {
    Analytic(AnalyticChart),
    Mesh(TemplateMesh),
}

/// Fits the reference field to the template with an ℓ1 loss on random
/// barycentric samples. Closed-form charts are returned unchanged.
pub fn fit_nrf(
    template: &TemplateSource,
    cfg: &SirenConfig,
    opts: &NrfFitOptions,
) -> Result<(ReferenceField, NrfReport)> {
    let mesh = match template {
        TemplateSource::Analytic(c) => {
            let report = NrfReport { iterations: 0, final_loss: 0.0, holdout_error: 0.0, threshold: opts.threshold };
            return Ok((ReferenceField::Analytic(c.clone()), report));
        }
        TemplateSource::Mesh(m) => m,
    };
    if cfg.input_dim != 2 || cfg.output_dim != 3 {
        return Err(Error::Invalid("reference field maps 2D charts to 3D points".into()));
    }
    let chart = mesh.chart()?;
    let domain = ChartDomain::Mesh(Arc::new(chart));
    let mut net = Siren::new(cfg.clone())?;
    // start the output at the template centre
    let nparams = net.params.len();
    let centre = mesh.bbox_center();
    for k in 0..3 {
        net.params[nparams - 3 + k] += centre[k];
    }
    let norm = domain.bounds().normalizer();
    let cdf = mesh.area_cdf();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let holdout: Vec<([f64; 2], [f64; 3])> =
        (0..opts.holdout.max(1)).map(|_| mesh.sample(&cdf, &mut rng)).collect();
    let mut adam = Adam::new(nparams, opts.lr);
    let batch = opts.batch.max(1);
    let mut final_loss = f64::NAN;
    for it in 0..opts.iterations {
        let samples: Vec<([f64; 2], [f64; 3])> = (0..batch).map(|_| mesh.sample(&cdf, &mut rng)).collect();
        let xis: Vec<[f64; 2]> = samples.iter().map(|s| s.0).collect();
        let cache = net.forward(chart_input(&xis, norm, None, 0), 0)?;
        let mut g = cache.out.clone();
        let mut loss = 0.0;
        for (s, (_, target)) in samples.iter().enumerate() {
            for k in 0..3 {
                let d = cache.out[(k, s)] - target[k];
                loss += d.abs();
                g[(k, s)] = d.signum() / batch as f64;
            }
        }
        final_loss = loss / batch as f64;
        let grad = net.backward(&cache, &g)?;
        adam.update(&mut net.params, &grad, cosine_schedule(it, opts.iterations, 0.01));
    }
    let field = NeuralReference { net, domain };
    let xis: Vec<[f64; 2]> = holdout.iter().map(|s| s.0).collect();
    let got = field.jets(&xis, 0)?;
    let err = got
        .iter()
        .zip(&holdout)
        .map(|(j, (_, p))| {
            let v = j.value();
            ((v[0] - p[0]).powi(2) + (v[1] - p[1]).powi(2) + (v[2] - p[2]).powi(2)).sqrt()
        })
        .sum::<f64>()
        / holdout.len() as f64;
    let threshold = opts.threshold * mesh.bbox_diagonal();
    let report = NrfReport { iterations: opts.iterations, final_loss, holdout_error: err, threshold };
    if !(err <= threshold) {
        return Err(Error::NoConvergence(format!(
            "reference fit held-out error {err:.3e} above threshold {threshold:.3e} after {} iterations",
            opts.iterations
        )));
    }
    Ok((ReferenceField::Neural(field), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;

    #[test]
    fn analytic_bypass_is_exact() {
        let c = AnalyticChart::flat(Rect::UNIT);
        let (f, r) = fit_nrf(&TemplateSource::Analytic(c), &SirenConfig::nrf(0), &NrfFitOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(f.position([0.25, 0.5]).unwrap(), [0.25, 0.5, 0.0]);
    }

    #[test]
    fn batched_jets_match_single_point() {
        let cfg = SirenConfig { hidden_layers: 2, width: 16, ..SirenConfig::nrf(1) };
        let mesh = TemplateMesh::unit_quad(1);
        let f = NeuralReference {
            net: Siren::new(cfg).unwrap(),
            domain: ChartDomain::Mesh(Arc::new(mesh.chart().unwrap())),
        };
        let pts = [[0.1, 0.2], [0.9, 0.4]];
        let all = f.jets(&pts, 3).unwrap();
        let one = f.jets(&pts[1..], 3).unwrap();
        for k in 0..3 {
            let (a, b) = (all[1].comps[k], one[0].comps[k]);
            assert!((a.v - b.v).abs() < 1e-14 && (a.ddd[1] - b.ddd[1]).abs() < 1e-10);
        }
    }
}
