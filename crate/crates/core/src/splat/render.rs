//! Software rasteriser for anisotropic 3D Gaussians with an exact reverse pass.

use rayon::prelude::*;

use crate::diffmath::{AdjointContext, Ring, Scalar, Var};
use crate::error::{Error, Result};

use super::camera::Camera;
use super::{GaussianCloud, Image};

/// `−½ dᵀΣ⁻¹d` below this is outside the 3σ ellipse.
pub const CUTOFF_POWER: f64 = -4.5;
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
pub const DEFAULT_COV_REG: f64 = 0.3;
const TILE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderOptions {
    pub background: [f64; 3],
    /// Added to the diagonal of every 2D covariance, px².
    pub cov_reg: f64,
}

impl RenderOptions {
    pub fn new(background: [f64; 3]) -> Self {
        Self { background, cov_reg: DEFAULT_COV_REG }
    }
}

/// Screen-space footprint of one Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projected {
    pub mean: [f64; 2],
    /// `[Σ₁₁, Σ₁₂, Σ₂₂]` including the regulariser.
    pub cov: [f64; 3],
    /// Inverse of `cov`.
    pub conic: [f64; 3],
    pub depth: f64,
    pub radius: f64,
}

/// Mean, 2D covariance (regularised) and depth for any scalar type.
/// `rot` has the Gaussian's local axes as columns.
pub fn project_generic<T: Scalar>(
    x: [T; 3],
    rot: [[T; 3]; 3],
    scale: [T; 3],
    cam: &Camera,
    cov_reg: f64,
) -> ([T; 2], [T; 3], T) {
    let w = cam.rotation;
    let c = [0, 1, 2].map(|i| {
        x[0].scale(w[i][0]) + x[1].scale(w[i][1]) + x[2].scale(w[i][2]) + T::from_f64(cam.translation[i])
    });
    // M = W R S, Σ_cam = M Mᵀ
    let mut m = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let wr = rot[0][j].scale(w[i][0]) + rot[1][j].scale(w[i][1]) + rot[2][j].scale(w[i][2]);
            m[i][j] = wr * scale[j];
        }
    }
    let iz = c[2].recip();
    let jx = [T::from_f64(cam.fx) * iz, T::zero(), -(T::from_f64(cam.fx) * c[0] * iz * iz)];
    let jy = [T::zero(), T::from_f64(cam.fy) * iz, -(T::from_f64(cam.fy) * c[1] * iz * iz)];
    // rows of J M
    let row = |jr: &[T; 3]| [0, 1, 2].map(|k| jr[0] * m[0][k] + jr[1] * m[1][k] + jr[2] * m[2][k]);
    let (a, b) = (row(&jx), row(&jy));
    let dot = |p: &[T; 3], q: &[T; 3]| p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
    let reg = T::from_f64(cov_reg);
    let cov = [dot(&a, &a) + reg, dot(&a, &b), dot(&b, &b) + reg];
    let mean = [
        T::from_f64(cam.fx) * c[0] * iz + T::from_f64(cam.cx),
        T::from_f64(cam.fy) * c[1] * iz + T::from_f64(cam.cy),
    ];
    (mean, cov, c[2])
}

fn conic_of<T: Scalar>(cov: [T; 3]) -> [T; 3] {
    let inv = (cov[0] * cov[2] - cov[1] * cov[1]).recip();
    [cov[2] * inv, -(cov[1] * inv), cov[0] * inv]
}

/// Projects one Gaussian of the cloud; `None` when culled.
pub fn project_gaussian(cloud: &GaussianCloud, i: usize, cam: &Camera, cov_reg: f64) -> Option<Projected> {
    let depth = cam.to_camera(cloud.positions[i])[2];
    if !(depth >= cam.near) {
        return None;
    }
    let (mean, cov, depth) = project_generic(cloud.positions[i], cloud.rotations[i], cloud.scales[i], cam, cov_reg);
    let det = cov[0] * cov[2] - cov[1] * cov[1];
    if !(det > 0.0) || !mean[0].is_finite() || !mean[1].is_finite() {
        return None;
    }
    let mid = 0.5 * (cov[0] + cov[2]);
    let lmax = mid + (mid * mid - det).max(0.0).sqrt();
    Some(Projected { mean, cov, conic: conic_of(cov), depth, radius: 3.0 * lmax.sqrt() })
}

#[derive(Clone, Copy, Debug)]
struct Contrib {
    /// Position in the tile list.
    slot: u32,
    alpha: f64,
    /// Transmittance before this Gaussian.
    trans: f64,
}

#[derive(Clone, Debug)]
struct Tile {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    /// Gaussian indices, front to back.
    list: Vec<u32>,
    contribs: Vec<Contrib>,
    /// Per pixel (row-major in the tile) range into `contribs`.
    ranges: Vec<(u32, u32)>,
    final_trans: Vec<f64>,
}

/// Forward state kept for the reverse pass.
#[derive(Clone, Debug)]
pub struct RenderCache {
    pub projected: Vec<Option<Projected>>,
    /// Visible Gaussians, front to back.
    pub order: Vec<u32>,
    tiles: Vec<Tile>,
    pub options: RenderOptions,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub image: Image,
    pub alpha: Vec<f64>,
}

fn check_cloud(cloud: &GaussianCloud) -> Result<()> {
    let n = cloud.len();
    if cloud.rotations.len() != n || cloud.scales.len() != n || cloud.opacities.len() != n || cloud.colors.len() != n {
        return Err(Error::Invalid("Gaussian cloud arrays differ in length".into()));
    }
    for i in 0..n {
        let reason = if !cloud.positions[i].iter().all(|v| v.is_finite()) {
            Some("position is not finite")
        } else if !cloud.rotations[i].iter().flatten().all(|v| v.is_finite()) {
            Some("rotation is not finite")
        } else if !cloud.scales[i].iter().all(|v| v.is_finite() && *v > 0.0) {
            Some("scales must be finite and positive")
        } else if !(0.0..=1.0).contains(&cloud.opacities[i]) {
            Some("opacity outside [0, 1]")
        } else if !cloud.colors[i].iter().all(|v| v.is_finite()) {
            Some("colour is not finite")
        } else {
            None
        };
        if let Some(r) = reason {
            return Err(Error::Render { index: i, reason: r.into() });
        }
    }
    Ok(())
}

/// Renders the cloud and keeps the state needed by [`render_backward`].
pub fn render_with_cache(cloud: &GaussianCloud, cam: &Camera, options: RenderOptions) -> Result<(RenderOutput, RenderCache)> {
    check_cloud(cloud)?;
    let n = cloud.len();
    let projected: Vec<Option<Projected>> =
        (0..n).into_par_iter().map(|i| project_gaussian(cloud, i, cam, options.cov_reg)).collect();
    let mut order: Vec<u32> = (0..n as u32).filter(|&i| projected[i as usize].is_some()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (projected[a as usize].unwrap(), projected[b as usize].unwrap());
        pa.depth
            .total_cmp(&pb.depth)
            .then(pa.mean[0].total_cmp(&pb.mean[0]))
            .then(pa.mean[1].total_cmp(&pb.mean[1]))
            .then(a.cmp(&b))
    });

    let (w, h) = (cam.width, cam.height);
    let (tx, ty) = (w.div_ceil(TILE), h.div_ceil(TILE));
    let mut lists = vec![Vec::new(); tx * ty];
    for &g in &order {
        let p = projected[g as usize].unwrap();
        let lo = |m: f64| (m - p.radius).ceil();
        let hi = |m: f64| (m + p.radius).floor();
        let (x0, x1, y0, y1) = (lo(p.mean[0]), hi(p.mean[0]), lo(p.mean[1]), hi(p.mean[1]));
        if x1 < 0.0 || y1 < 0.0 || x0 > (w - 1) as f64 || y0 > (h - 1) as f64 || x0 > x1 || y0 > y1 {
            continue;
        }
        let cx0 = x0.max(0.0) as usize / TILE;
        let cx1 = (x1.min((w - 1) as f64) as usize) / TILE;
        let cy0 = y0.max(0.0) as usize / TILE;
        let cy1 = (y1.min((h - 1) as f64) as usize) / TILE;
        for cy in cy0..=cy1 {
            for cx in cx0..=cx1 {
                lists[cy * tx + cx].push(g);
            }
        }
    }

    let tiles: Vec<Tile> = lists
        .into_par_iter()
        .enumerate()
        .map(|(k, list)| {
            let (x0, y0) = ((k % tx) * TILE, (k / tx) * TILE);
            let (tw, th) = (TILE.min(w - x0), TILE.min(h - y0));
            let mut contribs = Vec::new();
            let mut ranges = Vec::with_capacity(tw * th);
            let mut final_trans = Vec::with_capacity(tw * th);
            for py in 0..th {
                for px in 0..tw {
                    let (fx, fy) = ((x0 + px) as f64, (y0 + py) as f64);
                    let start = contribs.len() as u32;
                    let mut t = 1.0;
                    for (slot, &g) in list.iter().enumerate() {
                        let p = projected[g as usize].as_ref().unwrap();
                        let (dx, dy) = (fx - p.mean[0], fy - p.mean[1]);
                        let power = -0.5 * (p.conic[0] * dx * dx + p.conic[2] * dy * dy) - p.conic[1] * dx * dy;
                        if power < CUTOFF_POWER {
                            continue;
                        }
                        let alpha = cloud.opacities[g as usize] * power.min(0.0).exp();
                        contribs.push(Contrib { slot: slot as u32, alpha, trans: t });
                        t *= 1.0 - alpha;
                        if t < MIN_TRANSMITTANCE {
                            break;
                        }
                    }
                    ranges.push((start, contribs.len() as u32));
                    final_trans.push(t);
                }
            }
            Tile { x0, y0, w: tw, h: th, list, contribs, ranges, final_trans }
        })
        .collect();

    let mut image = Image::new(w, h, options.background);
    let mut alpha = vec![0.0; w * h];
    for tile in &tiles {
        for py in 0..tile.h {
            for px in 0..tile.w {
                let k = py * tile.w + px;
                let (s, e) = tile.ranges[k];
                let mut c = [0.0; 3];
                for ct in &tile.contribs[s as usize..e as usize] {
                    let col = cloud.colors[tile.list[ct.slot as usize] as usize];
                    for ch in 0..3 {
                        c[ch] += col[ch] * ct.alpha * ct.trans;
                    }
                }
                let t = tile.final_trans[k];
                let idx = (tile.y0 + py) * w + tile.x0 + px;
                image.data[idx] = [0, 1, 2].map(|ch| c[ch] + options.background[ch] * t);
                alpha[idx] = 1.0 - t;
            }
        }
    }
    Ok((RenderOutput { image, alpha }, RenderCache { projected, order, tiles, options }))
}

pub fn render(cloud: &GaussianCloud, cam: &Camera, background: [f64; 3]) -> Result<RenderOutput> {
    Ok(render_with_cache(cloud, cam, RenderOptions::new(background))?.0)
}

/// Gradient of a scalar loss with respect to every Gaussian attribute.
#[derive(Clone, Debug, PartialEq)]
pub struct CloudGrad {
    pub positions: Vec<[f64; 3]>,
    pub rotations: Vec<[[f64; 3]; 3]>,
    pub scales: Vec<[f64; 3]>,
    pub opacities: Vec<f64>,
    pub colors: Vec<[f64; 3]>,
}

impl CloudGrad {
    pub fn zeros(n: usize) -> Self {
        Self {
            positions: vec![[0.0; 3]; n],
            rotations: vec![[[0.0; 3]; 3]; n],
            scales: vec![[0.0; 3]; n],
            opacities: vec![0.0; n],
            colors: vec![[0.0; 3]; n],
        }
    }

    pub fn add_scaled(&mut self, other: &CloudGrad, s: f64) {
        for i in 0..self.opacities.len() {
            for k in 0..3 {
                self.positions[i][k] += s * other.positions[i][k];
                self.scales[i][k] += s * other.scales[i][k];
                self.colors[i][k] += s * other.colors[i][k];
                for j in 0..3 {
                    self.rotations[i][k][j] += s * other.rotations[i][k][j];
                }
            }
            self.opacities[i] += s * other.opacities[i];
        }
    }
}

/// Screen-space cotangents per Gaussian: mean (2), conic (3), opacity, colour (3).
type ScreenGrad = [f64; 9];

/// Reverse pass given `∂L/∂image` (per pixel RGB) and optionally `∂L/∂alpha`.
pub fn render_backward(
    cloud: &GaussianCloud,
    cam: &Camera,
    cache: &RenderCache,
    d_image: &[[f64; 3]],
    d_alpha: Option<&[f64]>,
) -> Result<CloudGrad> {
    let (w, h) = (cam.width, cam.height);
    if d_image.len() != w * h || d_alpha.is_some_and(|a| a.len() != w * h) {
        return Err(Error::Invalid("render cotangent has the wrong size".into()));
    }
    let bg = cache.options.background;
    let per_tile: Vec<Vec<ScreenGrad>> = cache
        .tiles
        .par_iter()
        .map(|tile| {
            let mut acc = vec![[0.0; 9]; tile.list.len()];
            for py in 0..tile.h {
                for px in 0..tile.w {
                    let k = py * tile.w + px;
                    let idx = (tile.y0 + py) * w + tile.x0 + px;
                    let gc = d_image[idx];
                    let ga = d_alpha.map_or(0.0, |a| a[idx]);
                    if gc == [0.0; 3] && ga == 0.0 {
                        continue;
                    }
                    let (fx, fy) = ((tile.x0 + px) as f64, (tile.y0 + py) as f64);
                    let (s, e) = tile.ranges[k];
                    // colour and alpha composited behind the current Gaussian
                    let mut behind = bg;
                    let mut behind_a = 0.0;
                    for ct in tile.contribs[s as usize..e as usize].iter().rev() {
                        let g = tile.list[ct.slot as usize] as usize;
                        let col = cloud.colors[g];
                        let p = cache.projected[g].as_ref().unwrap();
                        let wgt = ct.alpha * ct.trans;
                        let mut d_alpha_i = ga * ct.trans * (1.0 - behind_a);
                        for ch in 0..3 {
                            d_alpha_i += gc[ch] * ct.trans * (col[ch] - behind[ch]);
                        }
                        let a = &mut acc[ct.slot as usize];
                        for ch in 0..3 {
                            a[6 + ch] += gc[ch] * wgt;
                        }
                        let o = cloud.opacities[g];
                        let (dx, dy) = (fx - p.mean[0], fy - p.mean[1]);
                        let power = -0.5 * (p.conic[0] * dx * dx + p.conic[2] * dy * dy) - p.conic[1] * dx * dy;
                        let gauss = power.min(0.0).exp();
                        a[5] += d_alpha_i * gauss;
                        let d_power = if power < 0.0 { d_alpha_i * o * gauss } else { 0.0 };
                        a[0] += d_power * (p.conic[0] * dx + p.conic[1] * dy);
                        a[1] += d_power * (p.conic[1] * dx + p.conic[2] * dy);
                        a[2] += d_power * (-0.5 * dx * dx);
                        a[3] += d_power * (-dx * dy);
                        a[4] += d_power * (-0.5 * dy * dy);
                        for ch in 0..3 {
                            behind[ch] = col[ch] * ct.alpha + (1.0 - ct.alpha) * behind[ch];
                        }
                        behind_a = ct.alpha + (1.0 - ct.alpha) * behind_a;
                    }
                }
            }
            acc
        })
        .collect();

    // fixed tile order keeps the reduction independent of scheduling
    let n = cloud.len();
    let mut screen = vec![[0.0; 9]; n];
    for (tile, acc) in cache.tiles.iter().zip(&per_tile) {
        for (slot, &g) in tile.list.iter().enumerate() {
            for k in 0..9 {
                screen[g as usize][k] += acc[slot][k];
            }
        }
    }

    let reg = cache.options.cov_reg;
    let per_g: Vec<([f64; 3], [[f64; 3]; 3], [f64; 3])> = (0..n)
        .into_par_iter()
        .map(|i| {
            let sg = screen[i];
            if cache.projected[i].is_none() || sg[..5].iter().all(|v| *v == 0.0) {
                return ([0.0; 3], [[0.0; 3]; 3], [0.0; 3]);
            }
            projection_vjp(cloud, i, cam, reg, &sg)
        })
        .collect();

    let mut out = CloudGrad::zeros(n);
    for i in 0..n {
        out.positions[i] = per_g[i].0;
        out.rotations[i] = per_g[i].1;
        out.scales[i] = per_g[i].2;
        out.opacities[i] = screen[i][5];
        out.colors[i] = [screen[i][6], screen[i][7], screen[i][8]];
    }
    Ok(out)
}

fn projection_vjp(
    cloud: &GaussianCloud,
    i: usize,
    cam: &Camera,
    reg: f64,
    sg: &ScreenGrad,
) -> ([f64; 3], [[f64; 3]; 3], [f64; 3]) {
    let ctx = AdjointContext::with_capacity(512);
    let x = ctx.vars(&cloud.positions[i]);
    let rflat: Vec<f64> = cloud.rotations[i].iter().flatten().copied().collect();
    let r = ctx.vars(&rflat);
    let s = ctx.vars(&cloud.scales[i]);
    let rot = [[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]];
    let (mean, cov, _) = project_generic([x[0], x[1], x[2]], rot, [s[0], s[1], s[2]], cam, reg);
    let conic = conic_of(cov);
    let mut l = mean[0].scale(sg[0]) + mean[1].scale(sg[1]);
    for k in 0..3 {
        l = l + conic[k].scale(sg[2 + k]);
    }
    let mut leaves: Vec<Var> = x.clone();
    leaves.extend_from_slice(&r);
    leaves.extend_from_slice(&s);
    let g = ctx.gradient_wrt(l, &leaves);
    (
        [g[0], g[1], g[2]],
        [[g[3], g[4], g[5]], [g[6], g[7], g[8]], [g[9], g[10], g[11]]],
        [g[12], g[13], g[14]],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const I3: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    fn cam(n: usize) -> Camera {
        Camera::look_at([0.0, 0.0, -2.0], [0.0, 0.0, 0.0], [0.0, -1.0, 0.0], 40.0, n, n).unwrap()
    }

    fn one(pos: [f64; 3], s: f64, o: f64, c: [f64; 3]) -> GaussianCloud {
        GaussianCloud {
            positions: vec![pos],
            rotations: vec![I3],
            scales: vec![[s; 3]],
            opacities: vec![o],
            colors: vec![c],
        }
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> GaussianCloud {
        let mut c = GaussianCloud::default();
        for _ in 0..n {
            c.positions.push([rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), rng.random_range(-0.3..0.3)]);
            let q: [f64; 4] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0];
            c.rotations.push(super::super::quat_to_matrix(q));
            c.scales.push([rng.random_range(0.03..0.15), rng.random_range(0.03..0.15), rng.random_range(0.01..0.1)]);
            c.opacities.push(rng.random_range(0.2..0.95));
            c.colors.push([rng.random(), rng.random(), rng.random()]);
        }
        c
    }

    #[test]
    fn empty_scene_is_background() {
        let cam = cam(16);
        let out = render(&GaussianCloud::default(), &cam, [0.2, 0.3, 0.4]).unwrap();
        assert!(out.image.data.iter().all(|p| *p == [0.2, 0.3, 0.4]));
        assert!(out.alpha.iter().all(|a| *a == 0.0));
    }

    #[test]
    fn opaque_on_axis_gaussian() {
        let cam = cam(33);
        let out = render(&one([0.0; 3], 0.1, 1.0, [1.0; 3]), &cam, [0.0; 3]).unwrap();
        let c = 16 * 33 + 16;
        assert!(out.alpha[c] >= 0.999 && out.image.data[c][0] >= 0.999);
    }

    #[test]
    fn front_gaussian_wins() {
        let cam = cam(33);
        let mut c = one([0.0, 0.0, -0.5], 0.1, 1.0, [1.0, 0.0, 0.0]);
        c.positions.push([0.0, 0.0, 0.5]);
        c.rotations.push(I3);
        c.scales.push([0.1; 3]);
        c.opacities.push(1.0);
        c.colors.push([0.0, 0.0, 1.0]);
        let out = render(&c, &cam, [0.0; 3]).unwrap();
        let p = out.image.data[16 * 33 + 16];
        assert!(p[0] > 0.999 && p[2] < 1e-3);
    }

    #[test]
    fn depth_halves_footprint() {
        let cam = cam(32);
        let a = project_gaussian(&one([0.0, 0.0, 0.0], 0.05, 1.0, [1.0; 3]), 0, &cam, 0.0).unwrap();
        let b = project_gaussian(&one([0.0, 0.0, 2.0], 0.05, 1.0, [1.0; 3]), 0, &cam, 0.0).unwrap();
        assert!((b.cov[0].sqrt() / a.cov[0].sqrt() - 0.5).abs() < 1e-6);
        assert!((a.mean[0] - cam.cx).abs() < 1e-12 && (a.mean[1] - cam.cy).abs() < 1e-12);
        assert!(project_gaussian(&one([0.0, 0.0, -3.0], 0.05, 1.0, [1.0; 3]), 0, &cam, 0.0).is_none());
    }

    #[test]
    fn non_finite_input_names_index() {
        let mut c = one([0.0; 3], 0.1, 1.0, [1.0; 3]);
        c.positions.push([f64::NAN, 0.0, 0.0]);
        c.rotations.push(I3);
        c.scales.push([0.1; 3]);
        c.opacities.push(0.5);
        c.colors.push([1.0; 3]);
        match render(&c, &cam(8), [0.0; 3]) {
            Err(Error::Render { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn order_invariance_and_alpha_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cam = cam(24);
        for _ in 0..20 {
            let n = rng.random_range(1..12);
            let c = random_cloud(&mut rng, n);
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let s = c.permuted(&perm);
            let (a, b) = (render(&c, &cam, [0.1; 3]).unwrap(), render(&s, &cam, [0.1; 3]).unwrap());
            assert_eq!(a, b);
            assert!(a.alpha.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn gradients_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cam = cam(32);
        let c = random_cloud(&mut rng, 6);
        let target: Vec<[f64; 3]> = (0..32 * 32).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let mask: Vec<f64> = (0..32 * 32).map(|_| rng.random()).collect();
        let loss = |c: &GaussianCloud| {
            let o = render(c, &cam, [0.3, 0.2, 0.1]).unwrap();
            let mut l = 0.0;
            for (p, t) in o.image.data.iter().zip(&target) {
                for ch in 0..3 {
                    l += (p[ch] - t[ch]).powi(2);
                }
            }
            for (a, m) in o.alpha.iter().zip(&mask) {
                l += 0.5 * (a - m).powi(2);
            }
            l
        };
        let (o, cache) = render_with_cache(&c, &cam, RenderOptions::new([0.3, 0.2, 0.1])).unwrap();
        let di: Vec<[f64; 3]> = o.image.data.iter().zip(&target).map(|(p, t)| [0, 1, 2].map(|k| 2.0 * (p[k] - t[k]))).collect();
        let da: Vec<f64> = o.alpha.iter().zip(&mask).map(|(a, m)| a - m).collect();
        let g = render_backward(&c, &cam, &cache, &di, Some(&da)).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        let probe = |f: &dyn Fn(&mut GaussianCloud, f64), an: f64| {
            let mut p = c.clone();
            f(&mut p, h);
            let mut m = c.clone();
            f(&mut m, -h);
            let fd = (loss(&p) - loss(&m)) / (2.0 * h);
            (fd - an).abs() / an.abs().max(1e-3)
        };
        for i in 0..c.len() {
            for k in 0..3 {
                worst = worst.max(probe(&|q, d| q.positions[i][k] += d, g.positions[i][k]));
                worst = worst.max(probe(&|q, d| q.scales[i][k] += d, g.scales[i][k]));
                worst = worst.max(probe(&|q, d| q.colors[i][k] += d, g.colors[i][k]));
                worst = worst.max(probe(&|q, d| q.rotations[i][k][1] += d, g.rotations[i][k][1]));
            }
            worst = worst.max(probe(&|q, d| q.opacities[i] += d, g.opacities[i]));
        }
        assert!(worst <= 1e-3, "{worst}");
    }
}
