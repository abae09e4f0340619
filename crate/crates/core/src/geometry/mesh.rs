//! Triangle template carrying 2D chart coordinates per vertex.

use rand::Rng;

use crate::diffmath::vec3;
use crate::error::{Error, Result};

use super::chart::{MeshChart, Rect};

#[derive(Clone, Debug, PartialEq)]
pub struct TemplateMesh {
    pub positions: Vec<[f64; 3]>,
    pub uv: Vec<[f64; 2]>,
    pub tris: Vec<[u32; 3]>,
    /// Optional per-vertex RGB.
    pub colors: Option<Vec<[f64; 3]>>,
    pub chart_bounds: Rect,
    /// Vertices merged while loading.
    pub merged_vertices: usize,
}

impl TemplateMesh {
    pub fn new(positions: Vec<[f64; 3]>, uv: Vec<[f64; 2]>, tris: Vec<[u32; 3]>) -> Result<Self> {
        if positions.len() != uv.len() {
            return Err(Error::Invalid("template lacks chart coordinates for some vertices".into()));
        }
        if tris.is_empty() {
            return Err(Error::Invalid("template has no faces".into()));
        }
        for (k, t) in tris.iter().enumerate() {
            if t.iter().any(|&i| i as usize >= positions.len()) {
                return Err(Error::Invalid(format!("face {k} references a missing vertex")));
            }
            let [a, b, c] = t.map(|i| positions[i as usize]);
            let area = 0.5 * vec3::norm(vec3::cross(vec3::sub(b, a), vec3::sub(c, a)));
            if !(area > 1e-14) {
                return Err(Error::DegenerateChart(format!("face {k} has zero area")));
            }
        }
        let chart = MeshChart::new(uv.clone(), tris.clone())?;
        Ok(Self { positions, uv, tris, colors: None, chart_bounds: chart.bounds, merged_vertices: 0 })
    }

    pub fn chart(&self) -> Result<MeshChart> {
        MeshChart::new(self.uv.clone(), self.tris.clone())
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.positions {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        vec3::norm(vec3::sub(hi, lo))
    }

    pub fn bbox_center(&self) -> [f64; 3] {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.positions {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        [0, 1, 2].map(|a| 0.5 * (lo[a] + hi[a]))
    }

    /// Cumulative chart areas for area-weighted triangle picking.
    pub fn area_cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.tris
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.uv[i as usize]);
                acc += 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs();
                acc
            })
            .collect()
    }

    /// Uniform barycentric sample: `(ξ, position)`.
    pub fn sample<R: Rng + ?Sized>(&self, cdf: &[f64], rng: &mut R) -> ([f64; 2], [f64; 3]) {
        let total = *cdf.last().expect("nonempty mesh");
        let r = rng.random::<f64>() * total;
        let k = cdf.partition_point(|&c| c < r).min(self.tris.len() - 1);
        let (mut s, mut t) = (rng.random::<f64>(), rng.random::<f64>());
        if s + t > 1.0 {
            s = 1.0 - s;
            t = 1.0 - t;
        }
        self.interpolate(k, [1.0 - s - t, s, t])
    }

    pub fn interpolate(&self, tri: usize, w: [f64; 3]) -> ([f64; 2], [f64; 3]) {
        let t = self.tris[tri];
        let mut xi = [0.0; 2];
        let mut x = [0.0; 3];
        for j in 0..3 {
            let i = t[j] as usize;
            for a in 0..2 {
                xi[a] += w[j] * self.uv[i][a];
            }
            for a in 0..3 {
                x[a] += w[j] * self.positions[i][a];
            }
        }
        (xi, x)
    }

    /// Regular-grid quad over `[0,1]²` in both chart and space, z = 0.
    pub fn unit_quad(n: usize) -> Self {
        let n = n.max(1);
        let mut positions = Vec::new();
        let mut uv = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                let p = [i as f64 / n as f64, j as f64 / n as f64];
                positions.push([p[0], p[1], 0.0]);
                uv.push(p);
            }
        }
        let mut tris = Vec::new();
        let id = |i: usize, j: usize| (j * (n + 1) + i) as u32;
        for j in 0..n {
            for i in 0..n {
                tris.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                tris.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        Self::new(positions, uv, tris).expect("unit quad is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_quad_basics() {
        let m = TemplateMesh::unit_quad(1);
        assert_eq!(m.positions.len(), 4);
        assert_eq!(m.tris.len(), 2);
        assert_eq!(m.chart_bounds, Rect::UNIT);
        assert!((m.bbox_diagonal() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn samples_lie_on_surface() {
        let m = TemplateMesh::unit_quad(3);
        let cdf = m.area_cdf();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (xi, x) = m.sample(&cdf, &mut rng);
            assert!((xi[0] - x[0]).abs() < 1e-12 && (xi[1] - x[1]).abs() < 1e-12);
            assert_eq!(x[2], 0.0);
        }
    }

    #[test]
    fn zero_area_face_rejected() {
        let p = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        let uv = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(TemplateMesh::new(p, uv, vec![[0, 1, 2]]).is_err());
    }
}
