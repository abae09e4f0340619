//! Sine-activated MLPs evaluated on batches of Taylor jets.
//!
//! Activations are stored as matrices with one row per unit and one column per
//! (sample, jet component); a sample occupies `component_count(order)`
//! consecutive columns in `[v, d1, d2, d11, d12, d22, ...]` order. Biases only
//! touch value columns. Linear layers are plain matrix products, the sine acts
//! per sample through the jet chain rule.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffmath::{component_count, Jet, Scalar};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SirenConfig {
    pub hidden_layers: usize,
    pub width: usize,
    pub omega: f64,
    pub input_dim: usize,
    pub output_dim: usize,
    pub seed: u64,
    /// Multiplier on the initial output-layer weights.
    pub output_scale: f64,
}

impl SirenConfig {
    pub fn nrf(seed: u64) -> Self {
        Self { hidden_layers: 5, width: 256, omega: 5.0, input_dim: 2, output_dim: 3, seed, output_scale: 1.0 }
    }

    pub fn ndf(seed: u64) -> Self {
        Self { hidden_layers: 5, width: 256, omega: 30.0, input_dim: 3, output_dim: 3, seed, output_scale: 1e-3 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 || self.width == 0 || self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Invalid(format!("SIREN dimensions must be positive: {self:?}")));
        }
        if !(self.omega > 0.0) || !self.output_scale.is_finite() {
            return Err(Error::Invalid(format!("SIREN omega must be positive: {self:?}")));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of each affine layer, output layer last.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![(self.input_dim, self.width)];
        for _ in 1..self.hidden_layers {
            dims.push((self.width, self.width));
        }
        dims.push((self.width, self.output_dim));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Weights (row-major `out × in`) followed by biases, layer by layer.
pub fn siren_init(cfg: &SirenConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dims = cfg.layer_dims();
    let last = dims.len() - 1;
    let mut p = Vec::with_capacity(cfg.param_count());
    for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
        let mut bound = if l == 0 { 1.0 / fan_in as f64 } else { (6.0 / fan_in as f64).sqrt() / cfg.omega };
        if l == last {
            bound *= cfg.output_scale;
        }
        for _ in 0..(fan_in * fan_out + fan_out) {
            p.push(if bound > 0.0 { rng.random_range(-bound..=bound) } else { 0.0 });
        }
    }
    Ok(p)
}

/// Network with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Siren {
    pub cfg: SirenConfig,
    pub params: Vec<f64>,
}

/// Intermediate values of a batch forward pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub order: u8,
    pub samples: usize,
    inputs: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
    pub out: DMatrix<f64>,
}

impl ForwardCache {
    /// Jet of output `k` for sample `s`.
    pub fn jet(&self, s: usize, k: usize) -> Jet<f64> {
        let c = component_count(self.order);
        let comps: Vec<f64> = (0..c).map(|j| self.out[(k, s * c + j)]).collect();
        Jet::from_components(&comps, self.order)
    }
}

#[inline]
fn sin_jet_cols(z: &[f64], y: &mut [f64], omega: f64, order: u8) {
    let s = (omega * z[0]).sin();
    let c = (omega * z[0]).cos();
    let f1 = omega * c;
    let f2 = -omega * omega * s;
    y[0] = s;
    if order == 0 {
        return;
    }
    y[1] = f1 * z[1];
    y[2] = f1 * z[2];
    if order == 1 {
        return;
    }
    y[3] = f2 * z[1] * z[1] + f1 * z[3];
    y[4] = f2 * z[1] * z[2] + f1 * z[4];
    y[5] = f2 * z[2] * z[2] + f1 * z[5];
    if order == 2 {
        return;
    }
    let f3 = -omega * omega * omega * c;
    let d = [z[1], z[2]];
    let dd = [z[3], z[4], z[5]];
    let idx: [[usize; 3]; 4] = [[0, 0, 0], [0, 0, 1], [0, 1, 1], [1, 1, 1]];
    for (k, &[a, b, cc]) in idx.iter().enumerate() {
        y[6 + k] = f3 * d[a] * d[b] * d[cc]
            + f2 * (dd[a + b] * d[cc] + dd[a + cc] * d[b] + dd[b + cc] * d[a])
            + f1 * z[6 + k];
    }
}

/// Cotangent of the pre-activation jet given the cotangent `g` of `sin(ωz)`.
#[inline]
fn sin_jet_backward(z: &[f64], g: &[f64], gz: &mut [f64], omega: f64, order: u8) {
    let s = (omega * z[0]).sin();
    let c = (omega * z[0]).cos();
    let f1 = omega * c;
    gz[0] = g[0] * f1;
    if order == 0 {
        return;
    }
    let f2 = -omega * omega * s;
    gz[0] += f2 * (g[1] * z[1] + g[2] * z[2]);
    gz[1] = g[1] * f1;
    gz[2] = g[2] * f1;
    if order == 1 {
        return;
    }
    let f3 = -omega * omega * omega * c;
    let (z1, z2) = (z[1], z[2]);
    gz[0] += g[3] * (f3 * z1 * z1 + f2 * z[3])
        + g[4] * (f3 * z1 * z2 + f2 * z[4])
        + g[5] * (f3 * z2 * z2 + f2 * z[5]);
    gz[1] += f2 * (2.0 * g[3] * z1 + g[4] * z2);
    gz[2] += f2 * (2.0 * g[5] * z2 + g[4] * z1);
    gz[3] = g[3] * f1;
    gz[4] = g[4] * f1;
    gz[5] = g[5] * f1;
}

impl Siren {
    pub fn new(cfg: SirenConfig) -> Result<Self> {
        let params = siren_init(&cfg)?;
        Ok(Self { cfg, params })
    }

    pub fn with_params(cfg: SirenConfig, params: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        if params.len() != cfg.param_count() {
            return Err(Error::Invalid(format!(
                "parameter count {} does not match architecture ({})",
                params.len(),
                cfg.param_count()
            )));
        }
        Ok(Self { cfg, params })
    }

    fn layer(&self, offset: usize, fan_in: usize, fan_out: usize) -> (DMatrix<f64>, &[f64]) {
        let w = DMatrix::from_row_slice(fan_out, fan_in, &self.params[offset..offset + fan_in * fan_out]);
        let b = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        (w, b)
    }

    /// Batch forward on input jets `x` (`input_dim × samples·C`).
    pub fn forward(&self, x: DMatrix<f64>, order: u8) -> Result<ForwardCache> {
        if order > 3 {
            return Err(Error::Invalid(format!("jet order {order} outside 0..=3")));
        }
        let c = component_count(order);
        if x.nrows() != self.cfg.input_dim || x.ncols() % c != 0 {
            return Err(Error::Invalid(format!(
                "input batch is {}×{}, expected {} rows and a multiple of {c} columns",
                x.nrows(),
                x.ncols(),
                self.cfg.input_dim
            )));
        }
        let samples = x.ncols() / c;
        let dims = self.cfg.layer_dims();
        let last = dims.len() - 1;
        let mut inputs = Vec::with_capacity(dims.len());
        let mut pre = Vec::with_capacity(last);
        let mut cur = x;
        let mut offset = 0;
        let omega = self.cfg.omega;
        for (l, &(fi, fo)) in dims.iter().enumerate() {
            let (w, b) = self.layer(offset, fi, fo);
            offset += fi * fo + fo;
            let mut z = &w * &cur;
            for s in 0..samples {
                let mut col = z.column_mut(s * c);
                for (zv, bv) in col.iter_mut().zip(b) {
                    *zv += bv;
                }
            }
            inputs.push(cur);
            if l == last {
                return Ok(ForwardCache { order, samples, inputs, pre, out: z });
            }
            let mut y = DMatrix::zeros(fo, samples * c);
            let mut zb = [0.0; 10];
            let mut yb = [0.0; 10];
            for s in 0..samples {
                for r in 0..fo {
                    for j in 0..c {
                        zb[j] = z[(r, s * c + j)];
                    }
                    sin_jet_cols(&zb, &mut yb, omega, order);
                    for j in 0..c {
                        y[(r, s * c + j)] = yb[j];
                    }
                }
            }
            pre.push(z);
            cur = y;
        }
        unreachable!("network has an output layer")
    }

    /// Parameter gradient of `Σ gout ⊙ out`. Supports jet orders ≤ 2.
    pub fn backward(&self, cache: &ForwardCache, gout: &DMatrix<f64>) -> Result<Vec<f64>> {
        let order = cache.order;
        if order > 2 {
            return Err(Error::Unsupported("backward pass through third-order jets".into()));
        }
        if gout.shape() != cache.out.shape() {
            return Err(Error::Invalid("output cotangent shape mismatch".into()));
        }
        let c = component_count(order);
        let dims = self.cfg.layer_dims();
        let mut offsets = Vec::with_capacity(dims.len());
        let mut off = 0;
        for &(fi, fo) in &dims {
            offsets.push(off);
            off += fi * fo + fo;
        }
        let mut grad = vec![0.0; self.params.len()];
        let omega = self.cfg.omega;
        let mut g = gout.clone();
        for l in (0..dims.len()).rev() {
            let (fi, fo) = dims[l];
            let x = &cache.inputs[l];
            let gw = &g * x.transpose();
            let o = offsets[l];
            for r in 0..fo {
                for k in 0..fi {
                    grad[o + r * fi + k] = gw[(r, k)];
                }
                let mut gb = 0.0;
                for s in 0..cache.samples {
                    gb += g[(r, s * c)];
                }
                grad[o + fi * fo + r] = gb;
            }
            if l == 0 {
                break;
            }
            let (w, _) = self.layer(o, fi, fo);
            let gy = w.transpose() * &g;
            let z = &cache.pre[l - 1];
            let mut gz = DMatrix::zeros(fi, cache.samples * c);
            let mut zb = [0.0; 10];
            let mut gb = [0.0; 10];
            let mut out = [0.0; 10];
            for s in 0..cache.samples {
                for r in 0..fi {
                    for j in 0..c {
                        zb[j] = z[(r, s * c + j)];
                        gb[j] = gy[(r, s * c + j)];
                    }
                    sin_jet_backward(&zb, &gb, &mut out, omega, order);
                    for j in 0..c {
                        gz[(r, s * c + j)] = out[j];
                    }
                }
            }
            g = gz;
        }
        Ok(grad)
    }

    /// Reference evaluation over any scalar type (jets, tape variables, ...).
    pub fn eval_generic<T: Scalar>(cfg: &SirenConfig, params: &[T], x: &[T]) -> Vec<T> {
        let dims = cfg.layer_dims();
        let last = dims.len() - 1;
        let mut cur = x.to_vec();
        let mut off = 0;
        for (l, &(fi, fo)) in dims.iter().enumerate() {
            let mut next = Vec::with_capacity(fo);
            for r in 0..fo {
                let mut acc = params[off + fi * fo + r];
                for k in 0..fi {
                    acc = acc + params[off + r * fi + k] * cur[k];
                }
                next.push(if l == last { acc } else { acc.scale(cfg.omega).sin() });
            }
            off += fi * fo + fo;
            cur = next;
        }
        cur
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::{finite_difference_check, AdjointContext, Ring, Var};

    fn small(omega: f64, input_dim: usize) -> SirenConfig {
        SirenConfig { hidden_layers: 2, width: 16, omega, input_dim, output_dim: 3, seed: 7, output_scale: 1.0 }
    }

    fn jet_input(pts: &[[f64; 2]], order: u8) -> DMatrix<f64> {
        let c = component_count(order);
        let mut x = DMatrix::zeros(2, pts.len() * c);
        for (s, p) in pts.iter().enumerate() {
            x[(0, s * c)] = p[0];
            x[(1, s * c)] = p[1];
            if order >= 1 {
                x[(0, s * c + 1)] = 1.0;
                x[(1, s * c + 2)] = 1.0;
            }
        }
        x
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let cfg = SirenConfig { input_dim: 2, ..small(30.0, 2) };
        let a = siren_init(&cfg).unwrap();
        assert_eq!(a, siren_init(&cfg).unwrap());
        assert_eq!(a.len(), cfg.param_count());
        let first = 2 * 16 + 16;
        assert!(a[..first].iter().all(|w| w.abs() <= 0.5));
        let bound = (6.0f64 / 16.0).sqrt() / 30.0;
        assert!(a[first..].iter().all(|w| w.abs() <= bound));
        assert!((bound - 0.0204).abs() < 1e-4);
    }

    #[test]
    fn invalid_config_rejected() {
        let mut c = small(30.0, 2);
        c.omega = 0.0;
        assert!(siren_init(&c).is_err());
        c = small(30.0, 2);
        c.hidden_layers = 0;
        assert!(siren_init(&c).is_err());
    }

    #[test]
    fn batch_matches_generic_jets() {
        let net = Siren::new(small(5.0, 2)).unwrap();
        let pts = [[0.1, -0.3], [0.7, 0.2]];
        let cache = net.forward(jet_input(&pts, 3), 3).unwrap();
        for (s, p) in pts.iter().enumerate() {
            let xi = [Jet::variable(p[0], 0), Jet::variable(p[1], 1)];
            let params: Vec<Jet<f64>> = net.params.iter().map(|&w| Jet::constant(w)).collect();
            let want = Siren::eval_generic(&net.cfg, &params, &xi);
            for k in 0..3 {
                let got = cache.jet(s, k);
                let w = want[k];
                let pairs = [
                    (got.v, w.v),
                    (got.d[0], w.d[0]),
                    (got.dd[1], w.dd[1]),
                    (got.ddd[2], w.ddd[2]),
                ];
                for (a, b) in pairs {
                    assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn backward_matches_tape_at_order_two() {
        let net = Siren::new(small(30.0, 2)).unwrap();
        let pts = [[0.2, 0.4], [-0.5, 0.1]];
        let cache = net.forward(jet_input(&pts, 2), 2).unwrap();
        let mut gout = DMatrix::zeros(3, cache.out.ncols());
        for (i, g) in gout.iter_mut().enumerate() {
            *g = ((i * 37 % 11) as f64 - 5.0) * 0.1;
        }
        let grad = net.backward(&cache, &gout).unwrap();

        let ctx = AdjointContext::new();
        let p = ctx.param("theta", &net.params);
        let mut loss = Var::from_f64(0.0);
        for (s, q) in pts.iter().enumerate() {
            let xi = [
                Jet::variable(Var::from_f64(q[0]), 0).truncate(2),
                Jet::variable(Var::from_f64(q[1]), 1).truncate(2),
            ];
            let params: Vec<Jet<Var>> = p.iter().map(|&w| Jet::constant(w)).collect();
            let out = Siren::eval_generic(&net.cfg, &params, &xi);
            for k in 0..3 {
                let mut comps = [Var::from_f64(0.0); 6];
                out[k].to_components(2, &mut comps);
                for j in 0..6 {
                    loss = loss + comps[j].scale(gout[(k, s * 6 + j)]);
                }
            }
        }
        let want = ctx.grad_params(loss).values;
        for (a, b) in grad.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn two_layer_network_gradient_matches_fd() {
        let cfg = SirenConfig { output_dim: 1, ..small(30.0, 2) };
        let net = Siren::new(cfg.clone()).unwrap();
        let x = [0.3, -0.2];
        let ctx = AdjointContext::new();
        let p = ctx.param("p", &net.params);
        let xv = x.map(Var::from_f64);
        let loss = Siren::eval_generic(&cfg, &p, &xv)[0];
        let g = ctx.grad_params(loss).values;
        let f = |q: &[f64]| Siren::eval_generic(&cfg, q, &x)[0];
        // check on a subset with non-negligible gradients
        let mut worst = 0.0f64;
        for i in (0..g.len()).step_by(7) {
            if g[i].abs() < 1e-6 {
                continue;
            }
            let fi = |v: &[f64]| {
                let mut q = net.params.clone();
                q[i] = v[0];
                f(&q)
            };
            worst = worst.max(finite_difference_check(fi, &[g[i]], &[net.params[i]], 1e-5).unwrap());
        }
        assert!(worst <= 1e-4, "{worst}");
    }

    #[test]
    fn wrong_shapes_rejected() {
        let net = Siren::new(small(5.0, 2)).unwrap();
        assert!(net.forward(DMatrix::zeros(3, 3), 1).is_err());
        assert!(net.forward(DMatrix::zeros(2, 4), 1).is_err());
        assert!(Siren::with_params(net.cfg.clone(), vec![0.0; 3]).is_err());
    }
}
