//! Chart domains and closed-form reference surfaces.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffmath::{jet_eval, ExprField, Jet, JetField, Ring, Scalar, SpatialJet};
use crate::error::{Error, Result};

/// Axis-aligned rectangle in ξ-space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Rect {
    pub const UNIT: Rect = Rect { lo: [0.0, 0.0], hi: [1.0, 1.0] };

    pub fn new(lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        if !(hi[0] > lo[0] && hi[1] > lo[1]) {
            return Err(Error::Invalid(format!("empty chart rectangle {lo:?}..{hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn size(&self) -> [f64; 2] {
        [self.hi[0] - self.lo[0], self.hi[1] - self.lo[1]]
    }

    pub fn area(&self) -> f64 {
        let s = self.size();
        s[0] * s[1]
    }

    pub fn contains(&self, xi: [f64; 2]) -> bool {
        (self.lo[0]..=self.hi[0]).contains(&xi[0]) && (self.lo[1]..=self.hi[1]).contains(&xi[1])
    }

    /// Affine map onto [−1, 1]², returned as `(scale, offset)` per axis.
    pub fn normalizer(&self) -> [(f64, f64); 2] {
        [0, 1].map(|a| {
            let s = 2.0 / (self.hi[a] - self.lo[a]);
            (s, -1.0 - s * self.lo[a])
        })
    }

    pub fn lerp(&self, t: [f64; 2]) -> [f64; 2] {
        [self.lo[0] + t[0] * (self.hi[0] - self.lo[0]), self.lo[1] + t[1] * (self.hi[1] - self.lo[1])]
    }
}

/// Chart-space triangulation of a template used for inside tests and
/// barycentric lookup.
#[derive(Clone, Debug)]
pub struct MeshChart {
    pub uv: Vec<[f64; 2]>,
    pub tris: Vec<[u32; 3]>,
    pub bounds: Rect,
    area: f64,
    grid: Vec<Vec<u32>>,
    cells: [usize; 2],
}

fn tri_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl MeshChart {
    pub fn new(uv: Vec<[f64; 2]>, tris: Vec<[u32; 3]>) -> Result<Self> {
        if tris.is_empty() {
            return Err(Error::Invalid("chart has no triangles".into()));
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for t in &tris {
            for &i in t {
                let p = *uv.get(i as usize).ok_or_else(|| {
                    Error::Invalid(format!("triangle references chart vertex {i} of {}", uv.len()))
                })?;
                for a in 0..2 {
                    lo[a] = lo[a].min(p[a]);
                    hi[a] = hi[a].max(p[a]);
                }
            }
        }
        let bounds = Rect::new(lo, hi)?;
        let mut area = 0.0;
        for (k, t) in tris.iter().enumerate() {
            let ar = tri_area(uv[t[0] as usize], uv[t[1] as usize], uv[t[2] as usize]).abs();
            if ar <= 1e-14 * bounds.area() {
                return Err(Error::DegenerateChart(format!("triangle {k} has zero chart area")));
            }
            area += ar;
        }
        let n = ((tris.len() as f64).sqrt().ceil() as usize).clamp(1, 256);
        let cells = [n, n];
        let mut grid = vec![Vec::new(); n * n];
        let size = bounds.size();
        let cell_of = |p: f64, a: usize| {
            (((p - bounds.lo[a]) / size[a] * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize
        };
        for (k, t) in tris.iter().enumerate() {
            let ps = t.map(|i| uv[i as usize]);
            let x0 = cell_of(ps.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min), 0);
            let x1 = cell_of(ps.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max), 0);
            let y0 = cell_of(ps.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min), 1);
            let y1 = cell_of(ps.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max), 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    grid[y * n + x].push(k as u32);
                }
            }
        }
        Ok(Self { uv, tris, bounds, area, grid, cells })
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    /// Triangle index and barycentric weights of `xi`, if inside.
    pub fn locate(&self, xi: [f64; 2]) -> Option<(usize, [f64; 3])> {
        if !self.bounds.contains(xi) {
            return None;
        }
        let size = self.bounds.size();
        let cx = (((xi[0] - self.bounds.lo[0]) / size[0] * self.cells[0] as f64) as usize)
            .min(self.cells[0] - 1);
        let cy = (((xi[1] - self.bounds.lo[1]) / size[1] * self.cells[1] as f64) as usize)
            .min(self.cells[1] - 1);
        let eps = 1e-12;
        for &k in &self.grid[cy * self.cells[0] + cx] {
            let t = self.tris[k as usize];
            let [a, b, c] = t.map(|i| self.uv[i as usize]);
            let total = tri_area(a, b, c);
            let w0 = tri_area(xi, b, c) / total;
            let w1 = tri_area(a, xi, c) / total;
            let w2 = 1.0 - w0 - w1;
            if w0 >= -eps && w1 >= -eps && w2 >= -eps {
                return Some((k as usize, [w0, w1, w2]));
            }
        }
        None
    }
}

/// Where parametric points may live.
#[derive(Clone, Debug)]
pub enum ChartDomain {
    Rect(Rect),
    Mesh(Arc<MeshChart>),
}

impl ChartDomain {
    pub fn bounds(&self) -> Rect {
        match self {
            ChartDomain::Rect(r) => *r,
            ChartDomain::Mesh(m) => m.bounds,
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            ChartDomain::Rect(r) => r.area(),
            ChartDomain::Mesh(m) => m.area(),
        }
    }

    pub fn contains(&self, xi: [f64; 2]) -> bool {
        match self {
            ChartDomain::Rect(r) => r.contains(xi),
            ChartDomain::Mesh(m) => m.locate(xi).is_some(),
        }
    }

    /// Area-uniform point by rejection against the chart.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let b = self.bounds();
        loop {
            let xi = b.lerp([rng.random::<f64>(), rng.random::<f64>()]);
            if self.contains(xi) {
                return xi;
            }
        }
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<[f64; 2]> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

/// A reference surface that can be differentiated at chart points.
pub trait Surface: Send + Sync {
    fn surface_jet(&self, xi: [f64; 2], order: u8) -> Result<SpatialJet>;
    fn domain(&self) -> &ChartDomain;

    fn position(&self, xi: [f64; 2]) -> Result<[f64; 3]> {
        Ok(self.surface_jet(xi, 1)?.value())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticKind {
    /// `(ξ¹, ξ², 0) + offset`
    Flat { offset: [f64; 3] },
    /// Arc-length cylinder about the z axis, `(r cos(ξ¹/r), r sin(ξ¹/r), ξ²)`.
    Cylinder { radius: f64 },
    Expr(ExprField),
}

/// Closed-form reference surface over a chart.
#[derive(Clone, Debug)]
pub struct AnalyticChart {
    pub kind: AnalyticKind,
    pub domain: ChartDomain,
}

impl AnalyticChart {
    pub fn flat(bounds: Rect) -> Self {
        Self { kind: AnalyticKind::Flat { offset: [0.0; 3] }, domain: ChartDomain::Rect(bounds) }
    }

    pub fn flat_offset(bounds: Rect, offset: [f64; 3]) -> Self {
        Self { kind: AnalyticKind::Flat { offset }, domain: ChartDomain::Rect(bounds) }
    }

    pub fn cylinder(radius: f64, bounds: Rect) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Invalid(format!("cylinder radius must be positive, got {radius}")));
        }
        Ok(Self { kind: AnalyticKind::Cylinder { radius }, domain: ChartDomain::Rect(bounds) })
    }

    pub fn expr(field: ExprField, bounds: Rect) -> Self {
        Self { kind: AnalyticKind::Expr(field), domain: ChartDomain::Rect(bounds) }
    }

    /// Parses `flat`, `cylinder:<r>` or `expr:<x>;<y>;<z>`.
    pub fn from_spec(spec: &str, bounds: Rect) -> Result<Self> {
        let spec = spec.trim();
        if spec == "flat" {
            return Ok(Self::flat(bounds));
        }
        if let Some(r) = spec.strip_prefix("cylinder:") {
            let r: f64 = r.trim().parse().map_err(|_| Error::parse("chart spec", spec))?;
            return Self::cylinder(r, bounds);
        }
        if let Some(e) = spec.strip_prefix("expr:") {
            let parts: Vec<&str> = e.split(';').collect();
            if parts.len() != 3 {
                return Err(Error::parse("chart spec", "expr needs three `;`-separated components"));
            }
            return Ok(Self::expr(ExprField::parse(parts[0], parts[1], parts[2])?, bounds));
        }
        Err(Error::parse("chart spec", format!("unknown analytic chart `{spec}`")))
    }
}

impl JetField for AnalyticChart {
    fn eval_jet<S: Scalar>(&self, xi: [Jet<S>; 2]) -> Result<[Jet<S>; 3]> {
        match &self.kind {
            AnalyticKind::Flat { offset } => Ok([
                xi[0] + Jet::constant(S::from_f64(offset[0])),
                xi[1] + Jet::constant(S::from_f64(offset[1])),
                Jet::constant(S::from_f64(offset[2])),
            ]),
            AnalyticKind::Cylinder { radius } => {
                let th = xi[0].scale(1.0 / radius);
                Ok([th.cos_jet().scale(*radius), th.sin_jet().scale(*radius), xi[1]])
            }
            AnalyticKind::Expr(f) => f.eval_jet(xi),
        }
    }
}

impl Surface for AnalyticChart {
    fn surface_jet(&self, xi: [f64; 2], order: u8) -> Result<SpatialJet> {
        jet_eval(self, xi, order)
    }

    fn domain(&self) -> &ChartDomain {
        &self.domain
    }
}
