//! Reconstruction metrics: rigid alignment, Chamfer distance, normal
//! consistency and PSNR.

pub mod ply;

pub use ply::{read_ply, write_ply, PlyData, PlyFormat};

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffmath::{compensated_sum, vec3};
use crate::error::{Error, Result};
use crate::splat::Image;

/// Chamfer values are reported multiplied by this factor.
pub const CHAMFER_REPORT_SCALE: f64 = 1e4;
pub const PSNR_CAP_DB: f64 = 99.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform =
        RigidTransform { rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], translation: [0.0; 3] };

    pub fn rotate(&self, p: [f64; 3]) -> [f64; 3] {
        let r = self.rotation;
        [vec3::dot(r[0], p), vec3::dot(r[1], p), vec3::dot(r[2], p)]
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        vec3::add(self.rotate(p), self.translation)
    }

    pub fn apply_all(&self, pts: &[[f64; 3]]) -> Vec<[f64; 3]> {
        pts.iter().map(|&p| self.apply(p)).collect()
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let a = mat(&self.rotation);
        let b = mat(&other.rotation);
        RigidTransform { rotation: unmat(&(a * b)), translation: self.apply(other.translation) }
    }

    /// Rotation about a unit axis.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64, translation: [f64; 3]) -> Self {
        let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::from(axis)), angle);
        RigidTransform { rotation: unmat(r.matrix()), translation }
    }
}

fn mat(r: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| r[i][j])
}

fn unmat(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| m[(i, j)]))
}

fn centroid(p: &[[f64; 3]]) -> [f64; 3] {
    let n = p.len() as f64;
    [0, 1, 2].map(|k| compensated_sum(p.iter().map(|q| q[k])) / n)
}

/// Least-squares rigid transform taking `source[i]` to `target[i]`.
pub fn procrustes_align(source: &[[f64; 3]], target: &[[f64; 3]]) -> Result<RigidTransform> {
    if source.len() != target.len() {
        return Err(Error::Invalid(format!("{} source points for {} targets", source.len(), target.len())));
    }
    if source.len() < 3 {
        return Err(Error::Rank(format!("{} correspondences cannot fix a rigid transform", source.len())));
    }
    let cs = centroid(source);
    let ct = centroid(target);
    let mut h = Matrix3::zeros();
    let mut spread = Matrix3::zeros();
    for (s, t) in source.iter().zip(target) {
        let a = Vector3::from(vec3::sub(*s, cs));
        let b = Vector3::from(vec3::sub(*t, ct));
        h += a * b.transpose();
        spread += a * a.transpose();
    }
    let ev = spread.symmetric_eigenvalues();
    let mut e = [ev[0], ev[1], ev[2]];
    e.sort_by(f64::total_cmp);
    if !(e[1] > 1e-12 * e[2].max(f64::MIN_POSITIVE)) {
        return Err(Error::Rank("correspondences are collinear or coincident".into()));
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let d = (vt.transpose() * u.transpose()).determinant().signum();
    let r = vt.transpose() * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let rotation = unmat(&r);
    let rc = [vec3::dot(rotation[0], cs), vec3::dot(rotation[1], cs), vec3::dot(rotation[2], cs)];
    Ok(RigidTransform { rotation, translation: vec3::sub(ct, rc) })
}

/// Exact nearest-neighbour index over a fixed point set.
pub struct NearestIndex {
    tree: ImmutableKdTree<f64, 3>,
    points: Vec<[f64; 3]>,
}

impl NearestIndex {
    pub fn new(points: &[[f64; 3]]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Invalid("empty point set".into()));
        }
        if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("point set contains a non-finite coordinate".into()));
        }
        let tree = ImmutableKdTree::new_from_slice(points).map_err(|e| Error::Invalid(format!("k-d tree: {e:?}")))?;
        Ok(Self { tree, points: points.to_vec() })
    }

    /// Index and squared distance of the nearest point.
    pub fn nearest(&self, q: [f64; 3]) -> (usize, f64) {
        let r = self.tree.query(&q).nearest_one::<SquaredEuclidean<f64>>().execute();
        let i = r.item as usize;
        // recompute so the value does not depend on the tree's arithmetic
        let d = vec3::sub(self.points[i], q);
        (i, vec3::dot(d, d))
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }
}

fn mean_nn(from: &[[f64; 3]], index: &NearestIndex) -> f64 {
    let d: Vec<f64> = from.par_iter().map(|&p| index.nearest(p).1).collect();
    compensated_sum(d) / from.len() as f64
}

fn chamfer_indexed(a: &[[f64; 3]], ia: &NearestIndex, b: &[[f64; 3]], ib: &NearestIndex) -> f64 {
    let ab = mean_nn(a, ib);
    let ba = mean_nn(b, ia);
    // sort the two terms so the result is symmetric bit for bit
    if ab <= ba {
        ab + ba
    } else {
        ba + ab
    }
}

/// Symmetric squared Chamfer distance (not scaled).
pub fn chamfer(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Invalid("chamfer distance of an empty set".into()));
    }
    let ia = NearestIndex::new(a)?;
    let ib = NearestIndex::new(b)?;
    Ok(chamfer_indexed(a, &ia, b, &ib))
}

/// Chamfer distance × 10⁴.
pub fn chamfer_report(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<f64> {
    Ok(chamfer(a, b)? * CHAMFER_REPORT_SCALE)
}

#[derive(Clone, Debug)]
pub struct IcpResult {
    pub transform: RigidTransform,
    /// Chamfer after each accepted iterate, starting with the initial one.
    pub history: Vec<f64>,
    pub iterations: usize,
}

/// Point-to-point ICP of `source` onto `target`. An iterate is kept only
/// if it does not increase the Chamfer distance.
pub fn icp_refine(source: &[[f64; 3]], target: &[[f64; 3]], init: RigidTransform, max_iters: usize) -> Result<IcpResult> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::Invalid("ICP needs two non-empty clouds".into()));
    }
    let it = NearestIndex::new(target)?;
    let score = |t: &RigidTransform| -> Result<f64> {
        let moved = t.apply_all(source);
        let im = NearestIndex::new(&moved)?;
        Ok(chamfer_indexed(&moved, &im, target, &it))
    };
    let mut best = init;
    let mut best_score = score(&init)?;
    let mut history = vec![best_score];
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        let moved = best.apply_all(source);
        let matched: Vec<[f64; 3]> = moved.par_iter().map(|&p| target[it.nearest(p).0]).collect();
        let step = match procrustes_align(source, &matched) {
            Ok(t) => t,
            Err(_) => break,
        };
        let s = score(&step)?;
        if !(s <= best_score) {
            break;
        }
        let done = best_score - s <= 1e-15 * best_score.max(1e-300);
        best = step;
        best_score = s;
        history.push(s);
        if done || s == 0.0 {
            break;
        }
    }
    Ok(IcpResult { transform: best, history, iterations })
}

/// Aligns a predicted sequence to ground truth: Procrustes on frame 1 when
/// the clouds correspond by index, then ICP, each later frame seeded with
/// the previous transform. Returns per-frame transforms and Chamfer × 10⁴.
pub fn align_sequence(pred: &[Vec<[f64; 3]>], gt: &[Vec<[f64; 3]>], icp_iters: usize) -> Result<Vec<(RigidTransform, f64)>> {
    if pred.len() != gt.len() {
        return Err(Error::Invalid(format!("{} predicted frames for {} ground-truth frames", pred.len(), gt.len())));
    }
    let mut out = Vec::with_capacity(pred.len());
    let mut prev = RigidTransform::IDENTITY;
    for (t, (p, g)) in pred.iter().zip(gt).enumerate() {
        let init = if t == 0 && p.len() == g.len() { procrustes_align(p, g).unwrap_or(prev) } else { prev };
        let r = icp_refine(p, g, init, icp_iters)?;
        prev = r.transform;
        out.push((r.transform, r.history.last().copied().unwrap_or(0.0) * CHAMFER_REPORT_SCALE));
    }
    Ok(out)
}

/// `(mean(1 − n_p·n_g), mean ‖n_p − n_g‖²)` over valid pixels.
pub fn normal_consistency(pred: &[[f64; 3]], gt: &[[f64; 3]], valid: &[bool]) -> Result<(f64, f64)> {
    if pred.len() != gt.len() || pred.len() != valid.len() {
        return Err(Error::Invalid("normal maps and mask differ in size".into()));
    }
    let idx: Vec<usize> = (0..valid.len()).filter(|&i| valid[i]).collect();
    if idx.is_empty() {
        return Err(Error::Invalid("normal consistency over zero valid pixels".into()));
    }
    let n = idx.len() as f64;
    let cos = compensated_sum(idx.iter().map(|&i| 1.0 - vec3::dot(pred[i], gt[i]))) / n;
    let l2 = compensated_sum(idx.iter().map(|&i| {
        let d = vec3::sub(pred[i], gt[i]);
        vec3::dot(d, d)
    })) / n;
    Ok((cos, l2))
}

/// `10 log₁₀(1/MSE)`, capped at 99 dB.
pub fn psnr(pred: &Image, gt: &Image) -> Result<f64> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::Invalid(format!(
            "image shapes differ: {}x{} vs {}x{}",
            pred.width, pred.height, gt.width, gt.height
        )));
    }
    let n = 3.0 * pred.data.len() as f64;
    let mse = compensated_sum(
        pred.data.iter().zip(&gt.data).flat_map(|(a, b)| (0..3).map(move |k| (a[k] - b[k]).powi(2))),
    ) / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob(n: usize, seed: u64) -> Vec<[f64; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| [rng.random::<f64>(), 0.6 * rng.random::<f64>(), 0.3 * rng.random::<f64>()]).collect()
    }

    #[test]
    fn procrustes_recovers_transform() {
        let s = blob(50, 1);
        let t0 = RigidTransform::from_axis_angle([0.3, -0.5, 0.8], 1.1, [0.2, -3.0, 0.7]);
        let t = procrustes_align(&s, &t0.apply_all(&s)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((t.rotation[i][j] - t0.rotation[i][j]).abs() <= 1e-10);
            }
            assert!((t.translation[i] - t0.translation[i]).abs() <= 1e-10);
        }
        let id = procrustes_align(&s, &s).unwrap();
        assert!(vec3::norm(id.translation) < 1e-12);
        assert!(matches!(procrustes_align(&s[..2], &s[..2]), Err(Error::Rank(_))));
        let line: Vec<[f64; 3]> = (0..5).map(|k| [k as f64, 2.0 * k as f64, 0.0]).collect();
        assert!(matches!(procrustes_align(&line, &line), Err(Error::Rank(_))));
    }

    #[test]
    fn chamfer_examples() {
        assert!((chamfer_report(&[[0.0; 3]], &[[0.01, 0.0, 0.0]]).unwrap() - 2.0).abs() < 1e-12);
        let a = blob(200, 2);
        let b = blob(150, 3);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        assert_eq!(chamfer(&a, &b).unwrap(), chamfer(&b, &a).unwrap());
        assert!(chamfer(&a, &[]).is_err());
        // brute-force oracle
        let bf = |x: &[[f64; 3]], y: &[[f64; 3]]| {
            x.iter()
                .map(|p| y.iter().map(|q| vec3::dot(vec3::sub(*p, *q), vec3::sub(*p, *q))).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / x.len() as f64
        };
        let want = bf(&a, &b) + bf(&b, &a);
        assert!((chamfer(&a, &b).unwrap() - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn icp_converges_from_small_rotation() {
        let s = blob(400, 4);
        let c = centroid(&s);
        let rot = RigidTransform::from_axis_angle([0.2, 0.3, 1.0], 5f64.to_radians(), [0.0; 3]);
        let target: Vec<[f64; 3]> = s.iter().map(|p| vec3::add(rot.apply(vec3::sub(*p, c)), c)).collect();
        let r = icp_refine(&s, &target, RigidTransform::IDENTITY, 50).unwrap();
        assert!(r.iterations <= 50);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        let moved = r.transform.apply_all(&s);
        let rms = (moved.iter().zip(&target).map(|(a, b)| vec3::dot(vec3::sub(*a, *b), vec3::sub(*a, *b))).sum::<f64>()
            / s.len() as f64)
            .sqrt();
        assert!(rms <= 1e-6, "rms {rms}");
        let same = icp_refine(&s, &s, RigidTransform::IDENTITY, 10).unwrap();
        assert_eq!(same.transform, RigidTransform::IDENTITY);
    }

    #[test]
    fn alignment_invariant_to_rigid_pretransform() {
        let g = blob(300, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p: Vec<[f64; 3]> = g.iter().map(|q| vec3::add(*q, [0.0, 0.0, 0.01 * rng.random::<f64>()])).collect();
        let base = align_sequence(&[p.clone()], &[g.clone()], 30).unwrap()[0].1;
        let pre = RigidTransform::from_axis_angle([1.0, 2.0, 0.5], 0.7, [3.0, -1.0, 2.0]);
        let moved = align_sequence(&[pre.apply_all(&p)], &[g], 30).unwrap()[0].1;
        assert!((base - moved).abs() <= 1e-10, "{base} {moved}");
    }

    #[test]
    fn normal_metrics() {
        let a = vec![[0.0, 0.0, 1.0]; 10];
        let b = vec![[0.0, 0.0, -1.0]; 10];
        let c = vec![[1.0, 0.0, 0.0]; 10];
        let v = vec![true; 10];
        assert_eq!(normal_consistency(&a, &a, &v).unwrap(), (0.0, 0.0));
        assert_eq!(normal_consistency(&a, &b, &v).unwrap(), (2.0, 4.0));
        assert_eq!(normal_consistency(&a, &c, &v).unwrap(), (1.0, 2.0));
        assert!(normal_consistency(&a, &c, &[false; 10]).is_err());
    }

    #[test]
    fn psnr_examples() {
        let z = Image::new(4, 4, [0.0; 3]);
        assert_eq!(psnr(&z, &z).unwrap(), 99.0);
        assert_eq!(psnr(&z, &Image::new(4, 4, [1.0; 3])).unwrap(), 0.0);
        let e = Image::new(4, 4, [1e-3f64.sqrt(); 3]);
        assert!((psnr(&z, &e).unwrap() - 30.0).abs() < 1e-9);
        assert!(psnr(&z, &Image::new(4, 5, [0.0; 3])).is_err());
    }
}
