//! Quasistatic forward simulation by Monte-Carlo minimisation of the
//! potential `∫ ½Ψ − f·u dΩ` over a single-state deformation field.

use std::path::Path;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffmath::{component_count, vec3, AdjointContext, CompensatedSum, Jet, Ring, SpatialJet, Var};
use crate::error::{Error, Result};
use crate::fields::{DeformationField, ReferenceField, SirenConfig, TemporalMode};
use crate::geometry::{ChartDomain, Rect, Surface};
use crate::track::adam::{cosine_schedule, Adam};

use super::physics::ReferencePoint;
use super::strain::{lift, strain_from_displacement, LiftedReference};
use super::{energy_density, MaterialModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartEdge {
    /// `ξ¹ = lo`
    Left,
    /// `ξ¹ = hi`
    Right,
    /// `ξ² = lo`
    Bottom,
    /// `ξ² = hi`
    Top,
}

impl ChartEdge {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "left" => ChartEdge::Left,
            "right" => ChartEdge::Right,
            "bottom" => ChartEdge::Bottom,
            "top" => ChartEdge::Top,
            _ => return Err(Error::parse("force file", format!("unknown edge `{s}`"))),
        })
    }
}

/// Regions whose displacement is held at zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    Edge { edge: ChartEdge },
    /// Pins a neighbourhood of `xi`; `radius` sets the blend width.
    Point { xi: [f64; 2], radius: f64 },
}

/// Uniform external load plus boundary pins.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ForceField {
    /// Body force per unit area, N/m².
    pub body: [f64; 3],
    /// Pressure along the reference normal `ā₃`, N/m².
    pub pressure: f64,
    pub constraints: Vec<Constraint>,
}

impl ForceField {
    pub fn magnitude(&self) -> f64 {
        vec3::norm(self.body) + self.pressure.abs()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.body.iter().all(|v| v.is_finite()) || !self.pressure.is_finite() {
            return Err(Error::Invalid("force values must be finite".into()));
        }
        if self.magnitude() > 0.0 && self.constraints.is_empty() {
            return Err(Error::Invalid("a loaded sheet needs at least one pinned region".into()));
        }
        for c in &self.constraints {
            if let Constraint::Point { radius, .. } = c {
                if !(*radius > 0.0) {
                    return Err(Error::Invalid(format!("pin radius {radius} must be positive")));
                }
            }
        }
        Ok(())
    }

    /// Lines `body = fx fy fz`, `pressure = q`, `pin = left|right|bottom|top`,
    /// `pin_point = u v radius`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut f = ForceField::default();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let ctx = format!("force line {}", ln + 1);
            let (k, v) = line.split_once('=').ok_or_else(|| Error::parse(&ctx, "expected `key = value`"))?;
            let nums = || -> Result<Vec<f64>> {
                v.split_whitespace()
                    .map(|s| s.parse::<f64>().map_err(|_| Error::parse(&ctx, format!("bad number `{s}`"))))
                    .collect()
            };
            match k.trim() {
                "body" => {
                    let n = nums()?;
                    if n.len() != 3 {
                        return Err(Error::parse(&ctx, "body needs three components"));
                    }
                    f.body = [n[0], n[1], n[2]];
                }
                "pressure" => {
                    let n = nums()?;
                    if n.len() != 1 {
                        return Err(Error::parse(&ctx, "pressure needs one value"));
                    }
                    f.pressure = n[0];
                }
                "pin" => f.constraints.push(Constraint::Edge { edge: ChartEdge::parse(v.trim())? }),
                "pin_point" => {
                    let n = nums()?;
                    if n.len() != 3 {
                        return Err(Error::parse(&ctx, "pin_point needs `u v radius`"));
                    }
                    f.constraints.push(Constraint::Point { xi: [n[0], n[1]], radius: n[2] });
                }
                other => return Err(Error::parse(&ctx, format!("unknown key `{other}`"))),
            }
        }
        f.validate()?;
        Ok(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

/// `u(ξ) = s · g(ξ) · (r F₁ e₁ + r F₂ e₂ + F₃ e₃)` where `g` vanishes on the
/// pinned regions, `e` is the orthonormal reference frame with `e₃ = ā₃`, `F`
/// is a one-frame deformation field and `r` damps the stiff in-plane
/// directions.
#[derive(Clone, Debug, PartialEq)]
pub struct PinnedField {
    pub field: DeformationField,
    pub constraints: Vec<Constraint>,
    pub scale: f64,
    pub in_plane_ratio: f64,
}

/// Orthonormal frame `[e₁, e₂, e₃]` as jets one order below `x`.
pub fn frame_jets(x: &SpatialJet) -> Result<[[Jet<f64>; 3]; 3]> {
    if x.order() == 0 {
        return Err(Error::Invalid("frame needs a first-order surface jet".into()));
    }
    let a1 = x.comps.map(|c| c.partial(0));
    let a2 = x.comps.map(|c| c.partial(1));
    let n = vec3::cross(a1, a2);
    if vec3::norm(n.map(|c| c.v)) <= crate::geometry::DEGENERATE_AREA {
        return Err(Error::DegenerateChart("normal vanishes in simulation frame".into()));
    }
    let e3 = vec3::normalize(n);
    let e1 = vec3::normalize(a1);
    let e2 = vec3::cross(e3, e1);
    Ok([e1, e2, e3])
}

impl PinnedField {
    /// Blend factor `g` as a jet of the given order.
    pub fn blend(&self, xi: [f64; 2], order: u8) -> Jet<f64> {
        let b = self.field.bounds;
        let x = [Jet::variable(xi[0], 0).truncate(order), Jet::variable(xi[1], 1).truncate(order)];
        let size = b.size();
        let mut g = Jet::constant(1.0).truncate(order);
        for c in &self.constraints {
            let f = match *c {
                Constraint::Edge { edge } => match edge {
                    ChartEdge::Left => (x[0] - Jet::constant(b.lo[0])).scale(1.0 / size[0]),
                    ChartEdge::Right => (Jet::constant(b.hi[0]) - x[0]).scale(1.0 / size[0]),
                    ChartEdge::Bottom => (x[1] - Jet::constant(b.lo[1])).scale(1.0 / size[1]),
                    ChartEdge::Top => (Jet::constant(b.hi[1]) - x[1]).scale(1.0 / size[1]),
                },
                Constraint::Point { xi: p, radius } => {
                    let d0 = x[0] - Jet::constant(p[0]);
                    let d1 = x[1] - Jet::constant(p[1]);
                    let r2 = d0 * d0 + d1 * d1;
                    r2 / (r2 + Jet::constant(radius * radius))
                }
            };
            g = g * f;
        }
        g.truncate(order)
    }

    /// `m[k][i]` with `u_i = Σ_k m[k][i] F_k`, from a surface jet one order
    /// above `order`.
    pub fn mixing(&self, xi: [f64; 2], x: &SpatialJet, order: u8) -> Result<[[Jet<f64>; 3]; 3]> {
        let e = frame_jets(x)?;
        let g = self.blend(xi, order).scale(self.scale);
        let w = [self.in_plane_ratio, self.in_plane_ratio, 1.0];
        Ok([0, 1, 2].map(|k| e[k].map(|c| (g * c.truncate(order)).scale(w[k]).truncate(order))))
    }

    pub fn displacement(&self, reference: &ReferenceField, xis: &[[f64; 2]], order: u8) -> Result<Vec<SpatialJet>> {
        let batch = self.field.deformation_batch(xis, order)?;
        let xs = reference.jets(xis, order + 1)?;
        xis.iter()
            .enumerate()
            .map(|(p, &xi)| {
                let m = self.mixing(xi, &xs[p], order)?;
                let f = batch.u(p, 1).comps;
                Ok(SpatialJet::new(mix(&m, &f)))
            })
            .collect()
    }

    /// Deformed positions `x̄ + u`.
    pub fn positions(&self, reference: &ReferenceField, xis: &[[f64; 2]]) -> Result<Vec<[f64; 3]>> {
        let base = reference.positions(xis)?;
        let u = self.displacement(reference, xis, 0)?;
        Ok(base.iter().zip(&u).map(|(x, u)| vec3::add(*x, u.value())).collect())
    }
}

fn mix<T: Ring>(m: &[[Jet<f64>; 3]; 3], f: &[Jet<T>; 3]) -> [Jet<T>; 3] {
    let order = f[0].order.min(m[0][0].order);
    [0, 1, 2].map(|i| {
        let mut acc = lift::<T>(&m[0][i]) * f[0];
        for k in 1..3 {
            acc = acc + lift::<T>(&m[k][i]) * f[k];
        }
        acc.truncate(order)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub iterations: usize,
    /// Monte-Carlo points per iteration (rounded up to a square stratified grid).
    pub points: usize,
    pub lr: f64,
    pub seed: u64,
    pub log_every: usize,
    /// Side of the fixed grid used for logged energies.
    pub log_grid: usize,
    /// Output scale `s`; `None` picks `|f| L⁴ / B`.
    pub displacement_scale: Option<f64>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            iterations: 1500,
            points: 256,
            lr: 1e-3,
            seed: 0,
            log_every: 50,
            log_grid: 24,
            displacement_scale: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub iterations: usize,
    pub scale: f64,
    /// `(iteration, potential on the fixed grid)`
    pub energies: Vec<(usize, f64)>,
    pub final_energy: f64,
}

struct SimPoint {
    r: ReferencePoint,
    m: [[Jet<f64>; 3]; 3],
    /// `f √ā` at the point.
    load: [f64; 3],
}

fn sim_points(
    reference: &ReferenceField,
    pinned: &PinnedField,
    material: &MaterialModel,
    force: &ForceField,
    xis: &[[f64; 2]],
) -> Result<Vec<SimPoint>> {
    let xs = reference.jets(xis, 3)?;
    xs.iter()
        .zip(xis)
        .map(|(x, &xi)| {
            let r = ReferencePoint::new(x, material.nu)?;
            let a3 = r.jets.a3.map(|c| c.v);
            let f = vec3::add(force.body, vec3::mul(a3, force.pressure));
            let load = vec3::mul(f, r.jets.sqrt_a);
            Ok(SimPoint { m: pinned.mixing(xi, x, 2)?, r, load })
        })
        .collect()
}

fn point_potential<T: Ring>(p: &SimPoint, f: &[Jet<T>; 3], d: f64, b: f64) -> T {
    let u = mix(&p.m, f);
    let lr = LiftedReference::<T>::new(&p.r.jets);
    let s = strain_from_displacement(&u, &lr);
    let psi = energy_density(&s, &p.r.h, d, b, p.r.jets.sqrt_a);
    let work = u[0].v.scale(p.load[0]) + u[1].v.scale(p.load[1]) + u[2].v.scale(p.load[2]);
    psi.scale(0.5) - work
}

/// Potential estimate and optionally its Θ-gradient at the given points.
fn potential(
    reference: &ReferenceField,
    pinned: &PinnedField,
    material: &MaterialModel,
    force: &ForceField,
    xis: &[[f64; 2]],
    weight: f64,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    let pts = sim_points(reference, pinned, material, force, xis)?;
    let (d, b) = (material.in_plane(), material.bending());
    let batch = pinned.field.deformation_batch(xis, 2)?;
    let c = component_count(2);
    let per: Vec<(f64, [f64; 18])> = pts
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let fj = batch.u(i, 1);
            if !want_grad {
                return (point_potential(p, &fj.comps, d, b), [0.0; 18]);
            }
            let ctx = AdjointContext::with_capacity(4096);
            let mut raw = [0.0; 18];
            for k in 0..3 {
                fj.comps[k].to_components(2, &mut raw[k * c..(k + 1) * c]);
            }
            let leaves = ctx.vars(&raw);
            let f: [Jet<Var>; 3] = [0, 1, 2].map(|k| Jet::from_components(&leaves[k * c..(k + 1) * c], 2));
            let e = point_potential(p, &f, d, b);
            let g = ctx.gradient_wrt(e, &leaves);
            let mut out = [0.0; 18];
            for (o, v) in out.iter_mut().zip(g) {
                *o = v * weight;
            }
            (e.val(), out)
        })
        .collect();
    let mut sum = CompensatedSum::new();
    for (e, _) in &per {
        sum.add(*e);
    }
    let value = sum.value() * weight;
    if !value.is_finite() {
        return Err(Error::Diverged(format!("potential became {value}")));
    }
    let grad = if want_grad {
        let gu: Vec<f64> = per.iter().flat_map(|(_, g)| g.iter().copied()).collect();
        Some(batch.backward(&pinned.field, &gu)?)
    } else {
        None
    };
    Ok((value, grad))
}

fn grid_points(domain: &ChartDomain, n: usize) -> Vec<[f64; 2]> {
    let b = domain.bounds();
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let xi = b.lerp([(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64]);
            if domain.contains(xi) {
                out.push(xi);
            }
        }
    }
    out
}

fn stratified_points<R: Rng + ?Sized>(domain: &ChartDomain, n: usize, rng: &mut R) -> Vec<[f64; 2]> {
    let b = domain.bounds();
    let m = (n as f64).sqrt().ceil() as usize;
    let mut out = Vec::with_capacity(m * m);
    for j in 0..m {
        for i in 0..m {
            let xi = b.lerp([(i as f64 + rng.random::<f64>()) / m as f64, (j as f64 + rng.random::<f64>()) / m as f64]);
            if domain.contains(xi) {
                out.push(xi);
            }
        }
    }
    if out.is_empty() {
        out = domain.sample_n(n, rng);
    }
    out
}

/// Minimises the potential with Adam under cosine decay. The returned field
/// is the single equilibrium state.
pub fn quasistatic_simulate(
    reference: &ReferenceField,
    material: &MaterialModel,
    force: &ForceField,
    field_config: &SirenConfig,
    cfg: &SimulationConfig,
) -> Result<(PinnedField, SimulationReport)> {
    material.validate()?;
    force.validate()?;
    if cfg.points == 0 || cfg.log_grid == 0 {
        return Err(Error::Invalid("simulation needs sample points".into()));
    }
    let domain = reference.domain().clone();
    let bounds: Rect = domain.bounds();
    let size = bounds.size();
    let l = size[0].max(size[1]);
    let scale = match cfg.displacement_scale {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(Error::Invalid(format!("displacement scale {s} must be positive"))),
        None if force.magnitude() > 0.0 => force.magnitude() * l.powi(4) / material.bending(),
        None => 1e-2 * l,
    };
    let field = DeformationField::new(field_config.clone(), 1, TemporalMode::OffsetAcceleration, bounds)?;
    let in_plane_ratio = (material.bending() / (material.in_plane() * l * l)).sqrt();
    let mut pinned = PinnedField { field, constraints: force.constraints.clone(), scale, in_plane_ratio };
    let area = domain.area();
    let grid = grid_points(&domain, cfg.log_grid);
    let grid_w = area / grid.len() as f64;
    let e_ref = if force.magnitude() > 0.0 {
        force.magnitude() * scale * area
    } else {
        material.bending() * scale * scale * area / l.powi(4)
    };
    let log_energy = |p: &PinnedField| potential(reference, p, material, force, &grid, grid_w, false).map(|r| r.0);

    let e0 = log_energy(&pinned)?;
    let mut energies = vec![(0, e0)];
    let mut best = e0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(pinned.field.net.params.len(), cfg.lr);
    let warmup = (cfg.iterations / 10).max(1);
    info!("simulate: scale {scale:.3e}, initial potential {e0:.6e}");
    for it in 0..cfg.iterations {
        let xis = stratified_points(&domain, cfg.points, &mut rng);
        // optimise the potential in units of the characteristic energy
        let w = area / xis.len() as f64 / e_ref;
        let (_, grad) = potential(reference, &pinned, material, force, &xis, w, true)?;
        let grad = grad.expect("gradient requested");
        let warm = ((it + 1) as f64 / warmup as f64).min(1.0);
        adam.update(&mut pinned.field.net.params, &grad, warm * cosine_schedule(it, cfg.iterations, 0.01));
        let last = it + 1 == cfg.iterations;
        if (cfg.log_every > 0 && (it + 1) % cfg.log_every == 0) || last {
            let e = log_energy(&pinned)?;
            debug!("simulate: iteration {} potential {e:.6e}", it + 1);
            if e - e0 > 1e6 * e0.abs().max(best.abs()).max(e_ref) {
                return Err(Error::Diverged(format!(
                    "potential {e:.3e} at iteration {} against initial {e0:.3e}",
                    it + 1
                )));
            }
            best = best.min(e);
            energies.push((it + 1, e));
        }
    }
    let final_energy = energies.last().map(|e| e.1).unwrap_or(e0);
    Ok((pinned, SimulationReport { iterations: cfg.iterations, scale, energies, final_energy }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AnalyticChart;

    fn small_cfg(seed: u64) -> SirenConfig {
        SirenConfig { hidden_layers: 2, width: 16, omega: 2.0, ..SirenConfig::ndf(seed) }
    }

    #[test]
    fn blend_vanishes_on_pins() {
        let f = DeformationField::new(small_cfg(0), 1, TemporalMode::OffsetAcceleration, Rect::UNIT).unwrap();
        let p = PinnedField {
            field: f,
            constraints: vec![
                Constraint::Edge { edge: ChartEdge::Left },
                Constraint::Edge { edge: ChartEdge::Top },
                Constraint::Point { xi: [0.5, 0.5], radius: 0.1 },
            ],
            scale: 1.0,
            in_plane_ratio: 1.0,
        };
        assert_eq!(p.blend([0.0, 0.3], 2).v, 0.0);
        assert_eq!(p.blend([0.4, 1.0], 2).v, 0.0);
        assert_eq!(p.blend([0.5, 0.5], 2).v, 0.0);
        assert!(p.blend([0.3, 0.3], 2).v > 0.0);
        // derivative check on the point factor
        let h = 1e-6;
        let g = p.blend([0.3, 0.6], 2);
        let fd = (p.blend([0.3 + h, 0.6], 0).v - p.blend([0.3 - h, 0.6], 0).v) / (2.0 * h);
        assert!((g.d[0] - fd).abs() < 1e-8);
        let r = ReferenceField::Analytic(AnalyticChart::flat(Rect::UNIT));
        let u = p.displacement(&r, &[[0.0, 0.5]], 2).unwrap();
        assert_eq!(u[0].value(), [0.0; 3]);
    }

    #[test]
    fn force_file_parse() {
        let f = ForceField::parse("pressure = 2\nbody = 0 0 -1\npin = left\npin_point = 0.5 0.5 0.1\n").unwrap();
        assert_eq!(f.pressure, 2.0);
        assert_eq!(f.constraints.len(), 2);
        assert!(ForceField::parse("pressure = 1\n").is_err());
        assert!(ForceField::parse("pin = middle\n").is_err());
    }

    #[test]
    fn gradient_matches_fd() {
        let r = ReferenceField::Analytic(AnalyticChart::flat(Rect::UNIT));
        let m = MaterialModel::default();
        let force = ForceField {
            body: [0.0, 0.0, -0.3],
            pressure: 0.1,
            constraints: vec![Constraint::Edge { edge: ChartEdge::Left }],
        };
        let field = DeformationField::new(
            SirenConfig { output_scale: 0.1, ..small_cfg(3) },
            1,
            TemporalMode::OffsetAcceleration,
            Rect::UNIT,
        )
        .unwrap();
        let p = PinnedField { field, constraints: force.constraints.clone(), scale: 0.01, in_plane_ratio: 0.5 };
        let xis = [[0.2, 0.3], [0.7, 0.6], [0.9, 0.1]];
        let (_, g) = potential(&r, &p, &m, &force, &xis, 0.3, true).unwrap();
        let g = g.unwrap();
        for i in (0..g.len()).step_by(17) {
            if g[i].abs() < 1e-10 {
                continue;
            }
            let eval = |v: f64| {
                let mut q = p.clone();
                q.field.net.params[i] = v;
                potential(&r, &q, &m, &force, &xis, 0.3, false).unwrap().0
            };
            let x = p.field.net.params[i];
            let h = 1e-5;
            let fd = (eval(x + h) - eval(x - h)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-4 * g[i].abs().max(1e-8), "param {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn unloaded_sheet_stays_put() {
        let r = ReferenceField::Analytic(AnalyticChart::flat(Rect::UNIT));
        let cfg = SimulationConfig { iterations: 40, points: 64, log_every: 10, log_grid: 8, ..Default::default() };
        let (p, rep) =
            quasistatic_simulate(&r, &MaterialModel::default(), &ForceField::default(), &small_cfg(1), &cfg).unwrap();
        let xis = grid_points(r.domain(), 6);
        let u = p.displacement(&r, &xis, 0).unwrap();
        let max = u.iter().map(|u| vec3::norm(u.value())).fold(0.0, f64::max);
        assert!(max <= 1e-4, "{max}");
        assert!(rep.final_energy <= rep.energies[0].1 * 1.01 + 1e-18);
    }

    #[test]
    fn loaded_without_pins_rejected() {
        let r = ReferenceField::Analytic(AnalyticChart::flat(Rect::UNIT));
        let force = ForceField { body: [0.0, 0.0, -1.0], ..Default::default() };
        let e = quasistatic_simulate(&r, &MaterialModel::default(), &force, &small_cfg(1), &SimulationConfig::default());
        assert!(matches!(e, Err(Error::Invalid(_))));
    }
}
