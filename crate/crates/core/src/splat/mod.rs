//! Differentiable Gaussian splatting: surface-bound Gaussians, a pinhole
//! software rasteriser and the photometric and silhouette losses.

pub mod camera;
pub mod loss;
pub mod render;

pub use camera::Camera;
pub use loss::{data_loss, frame_loss, l1_image, l1_mask, DataLoss, FrameLoss};
pub use render::{
    project_gaussian, project_generic, render, render_backward, render_with_cache, CloudGrad, Projected,
    RenderCache, RenderOptions, RenderOutput,
};

use std::sync::Arc;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffmath::{vec3, SpatialJet};
use crate::error::{Error, Result};
use crate::fields::{DeformationField, ReferenceField};
use crate::geometry::{ChartDomain, MeshChart, Rect, Surface, TemplateMesh};

/// Normal-axis scale of surface-bound Gaussians.
pub const NORMAL_SCALE: f64 = 1e-5;

/// RGB image with values nominally in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f64; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize, fill: [f64; 3]) -> Self {
        Self { width, height, data: vec![fill; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    /// Grey image from a single channel.
    pub fn from_gray(width: usize, height: usize, v: &[f64]) -> Self {
        Self { width, height, data: v.iter().map(|&g| [g; 3]).collect() }
    }
}

/// Renderer input: one entry per Gaussian.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GaussianCloud {
    pub positions: Vec<[f64; 3]>,
    /// Local axes as columns.
    pub rotations: Vec<[[f64; 3]; 3]>,
    pub scales: Vec<[f64; 3]>,
    pub opacities: Vec<f64>,
    pub colors: Vec<[f64; 3]>,
}

impl GaussianCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Entry `k` of the result is entry `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            positions: perm.iter().map(|&i| self.positions[i]).collect(),
            rotations: perm.iter().map(|&i| self.rotations[i]).collect(),
            scales: perm.iter().map(|&i| self.scales[i]).collect(),
            opacities: perm.iter().map(|&i| self.opacities[i]).collect(),
            colors: perm.iter().map(|&i| self.colors[i]).collect(),
        }
    }
}

/// Rotation matrix of the normalised quaternion `(w, x, y, z)`.
pub fn quat_to_matrix(q: [f64; 4]) -> [[f64; 3]; 3] {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// `∂L/∂q` from `∂L/∂R` for [`quat_to_matrix`].
pub fn quat_vjp(q: [f64; 4], d_r: &[[f64; 3]; 3]) -> [f64; 4] {
    let h = 1e-7;
    // the map is a fixed rational function; a small central difference per
    // component is exact to ~1e-9 and avoids another hand-derived Jacobian
    let mut out = [0.0; 4];
    for k in 0..4 {
        let mut qp = q;
        qp[k] += h;
        let mut qm = q;
        qm[k] -= h;
        let (rp, rm) = (quat_to_matrix(qp), quat_to_matrix(qm));
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += d_r[i][j] * (rp[i][j] - rm[i][j]) / (2.0 * h);
            }
        }
        out[k] = s;
    }
    out
}

pub fn matmul3(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    c
}

/// Colour source for anchor initialisation.
#[derive(Clone, Debug)]
pub enum Texture {
    Constant([f64; 3]),
    /// Smooth three-channel sinusoid pattern over the chart.
    Procedural { frequency: f64, bounds: Rect },
    Checker { cells: usize, colors: [[f64; 3]; 2], bounds: Rect },
    /// Per-vertex colours of a template mesh.
    Vertex { mesh: Arc<TemplateMesh>, chart: Arc<MeshChart> },
    /// Image stretched over the chart rectangle (`v` up).
    Image { image: Arc<Image>, bounds: Rect },
}

impl Texture {
    pub fn vertex(mesh: Arc<TemplateMesh>) -> Result<Self> {
        let chart = Arc::new(mesh.chart()?);
        Ok(Texture::Vertex { mesh, chart })
    }

    pub fn sample(&self, xi: [f64; 2]) -> [f64; 3] {
        let unit = |b: &Rect| {
            let s = b.size();
            [(xi[0] - b.lo[0]) / s[0], (xi[1] - b.lo[1]) / s[1]]
        };
        match self {
            Texture::Constant(c) => *c,
            Texture::Procedural { frequency, bounds } => {
                let [u, v] = unit(bounds);
                let f = std::f64::consts::TAU * frequency;
                [
                    0.5 + 0.4 * (f * u).sin() * (0.5 * f * v).cos(),
                    0.5 + 0.4 * (f * v + 0.7).sin(),
                    0.5 + 0.4 * (0.7 * f * (u + v) + 1.3).sin(),
                ]
            }
            Texture::Checker { cells, colors, bounds } => {
                let [u, v] = unit(bounds);
                let n = *cells as f64;
                let k = ((u * n).floor() as i64 + (v * n).floor() as i64).rem_euclid(2) as usize;
                colors[k]
            }
            Texture::Vertex { mesh, chart } => {
                let Some(cols) = &mesh.colors else { return [0.5; 3] };
                match chart.locate(xi) {
                    Some((t, w)) => {
                        let tri = mesh.tris[t];
                        let mut c = [0.0; 3];
                        for k in 0..3 {
                            c = vec3::add(c, vec3::mul(cols[tri[k] as usize], w[k]));
                        }
                        c
                    }
                    None => [0.5; 3],
                }
            }
            Texture::Image { image, bounds } => {
                let [u, v] = unit(bounds);
                let x = (u * (image.width - 1) as f64).round().clamp(0.0, (image.width - 1) as f64) as usize;
                let y = ((1.0 - v) * (image.height - 1) as f64).round().clamp(0.0, (image.height - 1) as f64) as usize;
                image.get(x, y)
            }
        }
    }
}

/// Anchors drawn by dart throwing with a shrinking radius, starting at
/// `0.75 r` and stopping at `0.5 r` where `r = sqrt(area / n)`; then a
/// jittered grid.
pub fn sample_anchors<R: Rng + ?Sized>(domain: &ChartDomain, n: usize, rng: &mut R) -> Result<Vec<[f64; 2]>> {
    if n == 0 {
        return Err(Error::Invalid("need at least one Gaussian".into()));
    }
    let target = (domain.area() / n as f64).sqrt();
    let b = domain.bounds();
    let mut radius = 0.75 * target;
    while radius >= 0.5 * target - 1e-15 {
        if let Some(p) = dart_throw(domain, b, n, radius, rng) {
            return Ok(p);
        }
        radius *= 0.9;
    }
    warn!("dart throwing could not place {n} anchors; using a jittered grid");
    Ok(jittered_grid(domain, n, rng))
}

fn dart_throw<R: Rng + ?Sized>(domain: &ChartDomain, b: Rect, n: usize, r: f64, rng: &mut R) -> Option<Vec<[f64; 2]>> {
    let size = b.size();
    let (gx, gy) = (((size[0] / r).ceil() as usize).max(1), ((size[1] / r).ceil() as usize).max(1));
    let mut grid: Vec<Vec<u32>> = vec![Vec::new(); gx * gy];
    let cell = |p: [f64; 2]| {
        let i = (((p[0] - b.lo[0]) / r) as usize).min(gx - 1);
        let j = (((p[1] - b.lo[1]) / r) as usize).min(gy - 1);
        (i, j)
    };
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(n);
    let max_attempts = 60 * n + 1000;
    let mut attempts = 0;
    while pts.len() < n {
        if attempts >= max_attempts {
            return None;
        }
        attempts += 1;
        let p = domain.sample(rng);
        let (i, j) = cell(p);
        let mut ok = true;
        'outer: for jj in j.saturating_sub(1)..=(j + 1).min(gy - 1) {
            for ii in i.saturating_sub(1)..=(i + 1).min(gx - 1) {
                for &q in &grid[jj * gx + ii] {
                    let q = pts[q as usize];
                    if (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) < r * r {
                        ok = false;
                        break 'outer;
                    }
                }
            }
        }
        if ok {
            grid[j * gx + i].push(pts.len() as u32);
            pts.push(p);
        }
    }
    Some(pts)
}

fn jittered_grid<R: Rng + ?Sized>(domain: &ChartDomain, n: usize, rng: &mut R) -> Vec<[f64; 2]> {
    let b = domain.bounds();
    let mut m = (n as f64).sqrt().ceil() as usize;
    loop {
        let mut pts = Vec::new();
        for j in 0..m {
            for i in 0..m {
                let p = b.lerp([(i as f64 + rng.random::<f64>()) / m as f64, (j as f64 + rng.random::<f64>()) / m as f64]);
                if domain.contains(p) {
                    pts.push(p);
                }
            }
        }
        if pts.len() >= n {
            pts.truncate(n);
            return pts;
        }
        m += 1;
    }
}

/// Orthonormal frame with `ā₁` kept: rotation with columns `e₁ e₂ e₃`.
pub fn gram_schmidt_frame(x: &SpatialJet) -> Result<[[f64; 3]; 3]> {
    let a1 = x.tangent(0);
    let a2 = x.tangent(1);
    let n1 = vec3::norm(a1);
    if !(n1 > 1e-12) {
        return Err(Error::DegenerateChart("vanishing tangent at anchor".into()));
    }
    let e1 = vec3::mul(a1, 1.0 / n1);
    let p = vec3::sub(a2, vec3::mul(e1, vec3::dot(a2, e1)));
    let n2 = vec3::norm(p);
    if !(n2 > 1e-12 * vec3::norm(a2).max(1.0)) {
        return Err(Error::DegenerateChart("parallel tangents at anchor".into()));
    }
    let e2 = vec3::mul(p, 1.0 / n2);
    let e3 = vec3::cross(e1, e2);
    Ok([0, 1, 2].map(|i| [e1[i], e2[i], e3[i]]))
}

/// Which shared attributes are optimised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FreeAttributes {
    pub normal_scale: bool,
    pub rotation: bool,
}

/// Per-anchor parameters, stored as one flat vector of
/// `[log s₁, log s₂, log s₃, logit o, r, g, b, q_w, q_x, q_y, q_z]`.
pub const PARAMS_PER_GAUSSIAN: usize = 11;

/// Surface-induced Gaussians: chart anchors with their reference frames and
/// the shared appearance parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceBinding {
    pub anchors: Vec<[f64; 2]>,
    pub base_positions: Vec<[f64; 3]>,
    /// Reference frames, columns `e₁ e₂ e₃`.
    pub frames: Vec<[[f64; 3]; 3]>,
    pub params: Vec<f64>,
    pub free: FreeAttributes,
    pub epsilon: f64,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl SurfaceBinding {
    /// Binds Gaussians at `anchors`; anchors with a degenerate frame are
    /// dropped (count reported in the log).
    pub fn from_anchors(reference: &ReferenceField, anchors: &[[f64; 2]], texture: &Texture, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::Invalid(format!("normal scale {epsilon} must be positive")));
        }
        let jets = reference.jets(anchors, 1)?;
        let area = reference.domain().area();
        let spacing = (area / anchors.len().max(1) as f64).sqrt();
        let mut out = SurfaceBinding {
            anchors: Vec::new(),
            base_positions: Vec::new(),
            frames: Vec::new(),
            params: Vec::new(),
            free: FreeAttributes::default(),
            epsilon,
        };
        let mut dropped = 0;
        for (xi, j) in anchors.iter().zip(&jets) {
            let Ok(frame) = gram_schmidt_frame(j) else {
                dropped += 1;
                continue;
            };
            let s1 = 0.5 * spacing * vec3::norm(j.tangent(0));
            let s2 = 0.5 * spacing * vec3::norm(j.tangent(1));
            let c = texture.sample(*xi).map(|v| v.clamp(0.0, 1.0));
            out.anchors.push(*xi);
            out.base_positions.push(j.value());
            out.frames.push(frame);
            out.params.extend_from_slice(&[s1.ln(), s2.ln(), epsilon.ln(), logit(0.9), c[0], c[1], c[2], 1.0, 0.0, 0.0, 0.0]);
        }
        if dropped > 0 {
            warn!("dropped {dropped} anchors with a degenerate frame");
        }
        if out.anchors.is_empty() {
            return Err(Error::DegenerateChart("no anchor has a valid frame".into()));
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    fn p(&self, i: usize) -> &[f64] {
        &self.params[i * PARAMS_PER_GAUSSIAN..(i + 1) * PARAMS_PER_GAUSSIAN]
    }

    pub fn scales(&self, i: usize) -> [f64; 3] {
        let p = self.p(i);
        let s3 = if self.free.normal_scale { p[2].exp() } else { self.epsilon };
        [p[0].exp(), p[1].exp(), s3]
    }

    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.p(i)[3])
    }

    pub fn color(&self, i: usize) -> [f64; 3] {
        let p = self.p(i);
        [p[4], p[5], p[6]]
    }

    pub fn rotation(&self, i: usize) -> [[f64; 3]; 3] {
        if self.free.rotation {
            let p = self.p(i);
            matmul3(&self.frames[i], &quat_to_matrix([p[7], p[8], p[9], p[10]]))
        } else {
            self.frames[i]
        }
    }

    /// Entries of `params` the optimiser may change.
    pub fn trainable_mask(&self) -> Vec<bool> {
        let mut m = Vec::with_capacity(self.params.len());
        for _ in 0..self.len() {
            m.extend_from_slice(&[true, true, self.free.normal_scale, true, true, true, true]);
            m.extend_from_slice(&[self.free.rotation; 4]);
        }
        m
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable_mask().iter().filter(|b| **b).count()
    }

    /// Clamps colours to `[0, 1]` and renormalises quaternions.
    pub fn project_params(&mut self) {
        for i in 0..self.len() {
            let p = &mut self.params[i * PARAMS_PER_GAUSSIAN..(i + 1) * PARAMS_PER_GAUSSIAN];
            for c in &mut p[4..7] {
                *c = c.clamp(0.0, 1.0);
            }
            let n = (p[7] * p[7] + p[8] * p[8] + p[9] * p[9] + p[10] * p[10]).sqrt();
            if n > 0.0 && n.is_finite() {
                for q in &mut p[7..11] {
                    *q /= n;
                }
            } else {
                p[7..11].copy_from_slice(&[1.0, 0.0, 0.0, 0.0]);
            }
        }
    }

    /// Cloud at the given positions with the shared attributes.
    pub fn cloud(&self, positions: Vec<[f64; 3]>) -> GaussianCloud {
        let n = self.len();
        GaussianCloud {
            positions,
            rotations: (0..n).map(|i| self.rotation(i)).collect(),
            scales: (0..n).map(|i| self.scales(i)).collect(),
            opacities: (0..n).map(|i| self.opacity(i)).collect(),
            colors: (0..n).map(|i| self.color(i)).collect(),
        }
    }

    /// `∂L/∂params` from a cloud gradient; frozen entries are zero.
    pub fn param_grad(&self, g: &CloudGrad) -> Vec<f64> {
        let mut out = vec![0.0; self.params.len()];
        for i in 0..self.len() {
            let p = self.p(i);
            let s = self.scales(i);
            let o = &mut out[i * PARAMS_PER_GAUSSIAN..(i + 1) * PARAMS_PER_GAUSSIAN];
            o[0] = g.scales[i][0] * s[0];
            o[1] = g.scales[i][1] * s[1];
            if self.free.normal_scale {
                o[2] = g.scales[i][2] * s[2];
            }
            let op = sigmoid(p[3]);
            o[3] = g.opacities[i] * op * (1.0 - op);
            o[4..7].copy_from_slice(&g.colors[i]);
            if self.free.rotation {
                // R = F Q, so ∂L/∂Q = Fᵀ ∂L/∂R
                let f = &self.frames[i];
                let mut dq = [[0.0; 3]; 3];
                for a in 0..3 {
                    for b in 0..3 {
                        dq[a][b] = (0..3).map(|k| f[k][a] * g.rotations[i][k][b]).sum();
                    }
                }
                o[7..11].copy_from_slice(&quat_vjp([p[7], p[8], p[9], p[10]], &dq));
            }
        }
        out
    }
}

/// Poisson-disk anchors over the reference chart, bound to the reference
/// frames with colours from `texture`.
pub fn sample_template_gaussians<R: Rng + ?Sized>(
    reference: &ReferenceField,
    texture: &Texture,
    count: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<SurfaceBinding> {
    let anchors = sample_anchors(reference.domain(), count, rng)?;
    SurfaceBinding::from_anchors(reference, &anchors, texture, epsilon)
}

/// Positions `x̄(ξᵢ) + u(ξᵢ, t)` for every frame, frames outer.
pub fn tracked_positions_all(binding: &SurfaceBinding, field: &DeformationField) -> Result<Vec<Vec<[f64; 3]>>> {
    let batch = field.deformation_batch(&binding.anchors, 0)?;
    Ok((1..=field.frames)
        .map(|t| {
            (0..binding.len())
                .map(|i| vec3::add(binding.base_positions[i], batch.u(i, t).value()))
                .collect()
        })
        .collect())
}

/// The tracked Gaussians of frame `t`.
pub fn bind_gaussians(
    binding: &SurfaceBinding,
    reference: &ReferenceField,
    field: &DeformationField,
    t: usize,
) -> Result<GaussianCloud> {
    field.check_frame(t)?;
    let base = reference.positions(&binding.anchors)?;
    let batch = field.deformation_batch(&binding.anchors, 0)?;
    let pos = (0..binding.len()).map(|i| vec3::add(base[i], batch.u(i, t).value())).collect();
    Ok(binding.cloud(pos))
}
