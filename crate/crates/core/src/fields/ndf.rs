//! Neural deformation field `u(ξ, t)` with momentum or offset time models.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diffmath::{component_count, Jet, Ring, SpatialJet};
use crate::error::{Error, Result};
use crate::geometry::{Rect, Surface};

use super::siren::{ForwardCache, Siren, SirenConfig};
use super::{chart_input, jets_from_cache};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemporalMode {
    /// `u(1) = 0`, `u(t) = λ u(t−1) + F(t)`.
    Momentum { lambda: f64 },
    /// `u(t) = F(t)`, penalising `|u(1)|²` and the second difference.
    OffsetAcceleration,
    /// `u(t) = F(t)`, penalising `|u(1)|²` and the central first difference.
    OffsetVelocity,
}

impl TemporalMode {
    pub fn is_momentum(&self) -> bool {
        matches!(self, TemporalMode::Momentum { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeformationField {
    pub net: Siren,
    pub frames: usize,
    pub mode: TemporalMode,
    /// Chart rectangle used to normalise ξ.
    pub bounds: Rect,
}

/// All frames of `u` at a set of points, with what the backward pass needs.
#[derive(Clone, Debug)]
pub struct DeformationBatch {
    pub cache: ForwardCache,
    pub eval_frames: Vec<usize>,
    pub points: usize,
    pub frames: usize,
    pub order: u8,
    u: Vec<SpatialJet>,
    lambda: f64,
}

impl DeformationBatch {
    pub fn u(&self, point: usize, t: usize) -> &SpatialJet {
        &self.u[point * self.frames + t - 1]
    }

    /// Offset jet `F` for `point` at the `k`-th evaluated frame.
    pub fn offset(&self, point: usize, k: usize) -> SpatialJet {
        let s = point * self.eval_frames.len() + k;
        SpatialJet::new([0, 1, 2].map(|c| self.cache.jet(s, c)))
    }

    /// Θ-gradient from cotangents on `u` components laid out as
    /// `[(point · T + t − 1) · 3 + comp] · C + j`.
    pub fn backward(&self, field: &DeformationField, gu: &[f64]) -> Result<Vec<f64>> {
        let c = component_count(self.order);
        let t_count = self.frames;
        if gu.len() != self.points * t_count * 3 * c {
            return Err(Error::Invalid("deformation cotangent has the wrong length".into()));
        }
        let nf = self.eval_frames.len();
        let mut g = DMatrix::zeros(3, self.points * nf * c);
        let at = |p: usize, t: usize, k: usize, j: usize| gu[((p * t_count + t - 1) * 3 + k) * c + j];
        for p in 0..self.points {
            for k in 0..3 {
                for j in 0..c {
                    if field.mode.is_momentum() {
                        let mut acc = 0.0;
                        for (fi, &t) in self.eval_frames.iter().enumerate().rev() {
                            acc = self.lambda * acc + at(p, t, k, j);
                            g[(k, (p * nf + fi) * c + j)] = acc;
                        }
                    } else {
                        for (fi, &t) in self.eval_frames.iter().enumerate() {
                            g[(k, (p * nf + fi) * c + j)] = at(p, t, k, j);
                        }
                    }
                }
            }
        }
        field.net.backward(&self.cache, &g)
    }
}

fn add_jets(a: &SpatialJet, b: &SpatialJet) -> SpatialJet {
    SpatialJet::new([0, 1, 2].map(|k| a.comps[k] + b.comps[k]))
}

impl DeformationField {
    pub fn new(cfg: SirenConfig, frames: usize, mode: TemporalMode, bounds: Rect) -> Result<Self> {
        if cfg.input_dim != 3 || cfg.output_dim != 3 {
            return Err(Error::Invalid("deformation field maps (ξ, t) to 3D offsets".into()));
        }
        if frames == 0 {
            return Err(Error::Invalid("deformation field needs at least one frame".into()));
        }
        if let TemporalMode::Momentum { lambda } = mode {
            if !(0.0..1.0).contains(&lambda) {
                return Err(Error::Invalid(format!("momentum λ = {lambda} outside [0, 1)")));
            }
        }
        Ok(Self { net: Siren::new(cfg)?, frames, mode, bounds })
    }

    pub fn lambda(&self) -> f64 {
        match self.mode {
            TemporalMode::Momentum { lambda } => lambda,
            _ => 0.0,
        }
    }

    /// Frame index mapped to [−1, 1].
    pub fn time_coord(&self, t: usize) -> f64 {
        if self.frames <= 1 {
            0.0
        } else {
            2.0 * (t as f64 - 1.0) / (self.frames as f64 - 1.0) - 1.0
        }
    }

    pub fn check_frame(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.frames {
            return Err(Error::Domain(format!("frame {t} outside 1..={}", self.frames)));
        }
        Ok(())
    }

    /// Frames at which the network is queried.
    pub fn eval_frames(&self) -> Vec<usize> {
        let start = if self.mode.is_momentum() { 2 } else { 1 };
        (start..=self.frames).collect()
    }

    /// Network forward for every `(point, frame)` pair, frames inner.
    pub fn offsets_batch(&self, xis: &[[f64; 2]], frames: &[usize], order: u8) -> Result<ForwardCache> {
        for &t in frames {
            self.check_frame(t)?;
        }
        let mut pts = Vec::with_capacity(xis.len() * frames.len());
        let mut ts = Vec::with_capacity(xis.len() * frames.len());
        for xi in xis {
            for &t in frames {
                pts.push(*xi);
                ts.push(self.time_coord(t));
            }
        }
        let x = chart_input(&pts, self.bounds.normalizer(), Some(&ts), order);
        self.net.forward(x, order)
    }

    pub fn deformation_batch(&self, xis: &[[f64; 2]], order: u8) -> Result<DeformationBatch> {
        let eval_frames = self.eval_frames();
        let cache = self.offsets_batch(xis, &eval_frames, order)?;
        let f = jets_from_cache(&cache);
        let nf = eval_frames.len();
        let lambda = self.lambda();
        let zero = SpatialJet::new([Jet::constant(0.0).truncate(order); 3]);
        let mut u = Vec::with_capacity(xis.len() * self.frames);
        for p in 0..xis.len() {
            if self.mode.is_momentum() {
                u.push(zero);
                let mut prev = zero;
                for fi in 0..nf {
                    let cur = SpatialJet::new(
                        [0, 1, 2].map(|k| prev.comps[k].scale(lambda) + f[p * nf + fi].comps[k]),
                    );
                    u.push(cur);
                    prev = cur;
                }
            } else {
                u.extend_from_slice(&f[p * nf..(p + 1) * nf]);
            }
        }
        Ok(DeformationBatch { cache, eval_frames, points: xis.len(), frames: self.frames, order, u, lambda })
    }
}

/// `F(ξ, t)` and its ξ-jets.
pub fn ndf_offset(field: &DeformationField, xi: [f64; 2], t: usize, order: u8) -> Result<SpatialJet> {
    let cache = field.offsets_batch(&[xi], &[t], order)?;
    Ok(jets_from_cache(&cache).remove(0))
}

/// `u(ξ, t)` and its ξ-jets.
pub fn deformation(field: &DeformationField, xi: [f64; 2], t: usize, order: u8) -> Result<SpatialJet> {
    field.check_frame(t)?;
    Ok(*field.deformation_batch(&[xi], order)?.u(0, t))
}

/// `x(ξ, t) = x̄(ξ) + u(ξ, t)`.
pub fn tracked_position<S: Surface + ?Sized>(
    reference: &S,
    field: &DeformationField,
    xi: [f64; 2],
    t: usize,
    order: u8,
) -> Result<SpatialJet> {
    let x = reference.surface_jet(xi, order)?;
    let u = deformation(field, xi, t, order)?;
    Ok(add_jets(&x, &u))
}

/// Value and per-value gradient of the offset-mode penalty for explicit
/// trajectories `us[sample][t − 1]`.
pub fn temporal_penalty_values(
    us: &[Vec<[f64; 3]>],
    mode: TemporalMode,
) -> Result<(f64, Vec<Vec<[f64; 3]>>)> {
    let second = match mode {
        TemporalMode::Momentum { .. } => {
            return Err(Error::Mode("temporal penalty applies to offset modes only".into()))
        }
        TemporalMode::OffsetAcceleration => true,
        TemporalMode::OffsetVelocity => false,
    };
    if us.is_empty() {
        return Err(Error::Invalid("temporal penalty needs at least one sample".into()));
    }
    let n = us.len() as f64;
    let frames = us[0].len();
    let mut grads: Vec<Vec<[f64; 3]>> = us.iter().map(|u| vec![[0.0; 3]; u.len()]).collect();
    let mut initial = 0.0;
    for (i, u) in us.iter().enumerate() {
        for k in 0..3 {
            initial += u[0][k] * u[0][k] / n;
            grads[i][0][k] += 2.0 * u[0][k] / n;
        }
    }
    let mut temporal = 0.0;
    if frames >= 3 {
        let m = n * (frames - 2) as f64;
        for (i, u) in us.iter().enumerate() {
            for t in 1..frames - 1 {
                for k in 0..3 {
                    if second {
                        let d = u[t + 1][k] - 2.0 * u[t][k] + u[t - 1][k];
                        temporal += d * d / m;
                        let g = 2.0 * d / m;
                        grads[i][t + 1][k] += g;
                        grads[i][t][k] -= 2.0 * g;
                        grads[i][t - 1][k] += g;
                    } else {
                        let d = 0.5 * (u[t + 1][k] - u[t - 1][k]);
                        temporal += d * d / m;
                        let g = d / m;
                        grads[i][t + 1][k] += g;
                        grads[i][t - 1][k] -= g;
                    }
                }
            }
        }
    }
    Ok((initial + temporal, grads))
}

/// Offset-mode penalty of the field at `samples` and its Θ-gradient.
pub fn temporal_penalty_grad(field: &DeformationField, samples: &[[f64; 2]]) -> Result<(f64, Vec<f64>)> {
    if field.mode.is_momentum() {
        return Err(Error::Mode("temporal penalty applies to offset modes only".into()));
    }
    let batch = field.deformation_batch(samples, 0)?;
    let us: Vec<Vec<[f64; 3]>> = (0..samples.len())
        .map(|p| (1..=field.frames).map(|t| batch.u(p, t).value()).collect())
        .collect();
    let (value, g) = temporal_penalty_values(&us, field.mode)?;
    let flat: Vec<f64> = g.into_iter().flatten().flatten().collect();
    Ok((value, batch.backward(field, &flat)?))
}

pub fn temporal_penalty(field: &DeformationField, samples: &[[f64; 2]]) -> Result<f64> {
    Ok(temporal_penalty_grad(field, samples)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::finite_difference_check;

    fn small(frames: usize, mode: TemporalMode) -> DeformationField {
        let cfg = SirenConfig { hidden_layers: 2, width: 16, output_scale: 1.0, ..SirenConfig::ndf(3) };
        DeformationField::new(cfg, frames, mode, Rect::UNIT).unwrap()
    }

    #[test]
    fn first_frame_is_zero_in_momentum_mode() {
        let f = small(4, TemporalMode::Momentum { lambda: 0.4 });
        let u = deformation(&f, [0.3, 0.6], 1, 2).unwrap();
        assert_eq!(u.value(), [0.0; 3]);
        assert_eq!(u.d2(), [[[0.0; 2]; 2]; 3]);
    }

    #[test]
    fn zero_lambda_collapses_to_offsets() {
        let f = small(4, TemporalMode::Momentum { lambda: 0.0 });
        for t in 2..=4 {
            let u = deformation(&f, [0.2, 0.1], t, 1).unwrap();
            let off = ndf_offset(&f, [0.2, 0.1], t, 1).unwrap();
            for k in 0..3 {
                assert!((u.value()[k] - off.value()[k]).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn constant_offset_unrolls_geometrically() {
        let mut f = small(4, TemporalMode::Momentum { lambda: 0.4 });
        // zero every weight, bias the output: F ≡ c
        let n = f.net.params.len();
        f.net.params.iter_mut().for_each(|w| *w = 0.0);
        let c = [0.5, -1.0, 2.0];
        f.net.params[n - 3..].copy_from_slice(&c);
        let want = [1.0, 1.4, 1.56];
        for (t, w) in (2..=4).zip(want) {
            let u = deformation(&f, [0.5, 0.5], t, 0).unwrap().value();
            for k in 0..3 {
                assert!((u[k] - w * c[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn frame_out_of_range() {
        let f = small(3, TemporalMode::Momentum { lambda: 0.4 });
        assert!(matches!(deformation(&f, [0.0, 0.0], 0, 0), Err(Error::Domain(_))));
        assert!(matches!(deformation(&f, [0.0, 0.0], 4, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn small_output_head_at_init() {
        let cfg = SirenConfig { hidden_layers: 3, width: 64, ..SirenConfig::ndf(11) };
        let f = DeformationField::new(cfg, 4, TemporalMode::Momentum { lambda: 0.4 }, Rect::UNIT).unwrap();
        let pts: Vec<[f64; 2]> = (0..1000).map(|i| [(i % 37) as f64 / 36.0, (i / 37) as f64 / 27.0]).collect();
        let cache = f.offsets_batch(&pts, &[2], 0).unwrap();
        assert!(cache.out.iter().all(|v| v.abs() <= 1e-2));
    }

    #[test]
    fn causality_under_momentum() {
        let f = small(4, TemporalMode::Momentum { lambda: 0.4 });
        let b = f.deformation_batch(&[[0.4, 0.4]], 0).unwrap();
        // cotangent on u(2) only never reaches F(3) or F(4): compare with a
        // cotangent on u(3)
        let mut gu = vec![0.0; 4 * 3];
        gu[3] = 1.0; // t = 2, x
        let g2 = b.backward(&f, &gu).unwrap();
        let fd = |q: &[f64]| {
            let mut g = f.clone();
            g.net.params.copy_from_slice(q);
            g.deformation_batch(&[[0.4, 0.4]], 0).unwrap().u(0, 2).value()[0]
        };
        let idx: Vec<usize> = (0..g2.len()).step_by(29).collect();
        for i in idx {
            if g2[i].abs() < 1e-8 {
                continue;
            }
            let fi = |v: &[f64]| {
                let mut q = f.net.params.clone();
                q[i] = v[0];
                fd(&q)
            };
            let e = finite_difference_check(fi, &[g2[i]], &[f.net.params[i]], 1e-6).unwrap();
            assert!(e < 1e-5, "{e}");
        }
    }

    #[test]
    fn penalty_requires_offset_mode() {
        let f = small(3, TemporalMode::Momentum { lambda: 0.4 });
        assert!(matches!(temporal_penalty(&f, &[[0.5, 0.5]]), Err(Error::Mode(_))));
    }

    #[test]
    fn penalty_hand_values() {
        let zero = vec![vec![[0.0; 3]; 4]];
        assert_eq!(temporal_penalty_values(&zero, TemporalMode::OffsetAcceleration).unwrap().0, 0.0);
        let linear: Vec<Vec<[f64; 3]>> = vec![(1..=5).map(|t| [0.1 * t as f64, 0.0, 0.0]).collect()];
        let (v, _) = temporal_penalty_values(&linear, TemporalMode::OffsetAcceleration).unwrap();
        assert!((v - 0.01).abs() < 1e-15);
        let quad: Vec<Vec<[f64; 3]>> = vec![(1..=4).map(|t| [(t * t) as f64, 0.0, 0.0]).collect()];
        let (v, _) = temporal_penalty_values(&quad, TemporalMode::OffsetAcceleration).unwrap();
        assert!((v - (1.0 + 4.0)).abs() < 1e-12);
        let constant = vec![vec![[0.0, 0.3, 0.0]; 4]];
        let (v, _) = temporal_penalty_values(&constant, TemporalMode::OffsetVelocity).unwrap();
        assert!((v - 0.09).abs() < 1e-15);
    }

    #[test]
    fn penalty_gradient_matches_fd() {
        let f = small(4, TemporalMode::OffsetAcceleration);
        let pts = [[0.2, 0.3], [0.8, 0.6]];
        let (_, g) = temporal_penalty_grad(&f, &pts).unwrap();
        for i in (0..g.len()).step_by(31) {
            if g[i].abs() < 1e-6 {
                continue;
            }
            let fi = |v: &[f64]| {
                let mut h = f.clone();
                h.net.params[i] = v[0];
                temporal_penalty(&h, &pts).unwrap()
            };
            let e = finite_difference_check(fi, &[g[i]], &[f.net.params[i]], 1e-6).unwrap();
            assert!(e < 1e-4, "{i}: {e}");
        }
    }
}
