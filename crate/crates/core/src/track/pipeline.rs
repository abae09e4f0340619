//! Reference fit followed by joint space-time optimisation of all frames.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffmath::vec3;
use crate::error::{Error, Result};
use crate::fields::{fit_nrf, temporal_penalty_grad, DeformationField, NrfReport, ReferenceField, TemplateSource};
use crate::geometry::{ChartDomain, Surface};
use crate::shell::physics_loss_at;
use crate::splat::{data_loss, sample_template_gaussians, Camera, Image, RenderOptions, SurfaceBinding, Texture};

use super::adam::{cosine_schedule, Adam};
use super::{apply_ablation, EffectiveConfig, TrackerConfig};

/// Inputs of a tracking run.
#[derive(Clone, Debug)]
pub struct TrackingScene {
    pub template: TemplateSource,
    pub camera: Camera,
    pub frames: Vec<Image>,
    /// Foreground masks in `[0, 1]`, one value per pixel.
    pub masks: Option<Vec<Vec<f64>>>,
    /// Colour source for the Gaussians; frame 1 is sampled when absent.
    pub texture: Option<Texture>,
}

impl TrackingScene {
    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        if self.frames.len() < 2 {
            return Err(Error::Invalid(format!("tracking needs at least two frames, got {}", self.frames.len())));
        }
        for (t, f) in self.frames.iter().enumerate() {
            if f.width != self.camera.width || f.height != self.camera.height {
                return Err(Error::Invalid(format!(
                    "frame {} is {}x{} but the camera is {}x{}",
                    t + 1,
                    f.width,
                    f.height,
                    self.camera.width,
                    self.camera.height
                )));
            }
        }
        if let Some(m) = &self.masks {
            if m.len() != self.frames.len() {
                return Err(Error::Invalid(format!("{} masks for {} frames", m.len(), self.frames.len())));
            }
            if let Some(t) = m.iter().position(|m| m.len() != self.camera.pixels()) {
                return Err(Error::Invalid(format!("mask {} does not match the camera size", t + 1)));
            }
        }
        Ok(())
    }
}

/// Area-uniform chart samples, freshly drawn on each call.
pub fn resample_physics_points<R: Rng + ?Sized>(domain: &ChartDomain, n: usize, rng: &mut R) -> Vec<[f64; 2]> {
    domain.sample_n(n, rng)
}

/// Tracked surface points `x̄(ξ) + u(ξ, t)`.
pub fn reconstruct(reference: &ReferenceField, field: &DeformationField, xis: &[[f64; 2]], t: usize) -> Result<Vec<[f64; 3]>> {
    field.check_frame(t)?;
    let base = reference.positions(xis)?;
    let batch = field.deformation_batch(xis, 0)?;
    Ok((0..xis.len()).map(|i| vec3::add(base[i], batch.u(i, t).value())).collect())
}

fn bilinear(img: &Image, x: f64, y: f64) -> Option<[f64; 3]> {
    if !(x >= 0.0 && y >= 0.0 && x <= (img.width - 1) as f64 && y <= (img.height - 1) as f64) {
        return None;
    }
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(img.width - 1), (y0 + 1).min(img.height - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let (a, b, c, d) = (img.get(x0, y0), img.get(x1, y0), img.get(x0, y1), img.get(x1, y1));
    Some([0, 1, 2].map(|k| (1.0 - fy) * ((1.0 - fx) * a[k] + fx * b[k]) + fy * ((1.0 - fx) * c[k] + fx * d[k])))
}

/// Colours of the Gaussians from `image` at their projected reference positions.
pub fn init_colors_from_image(binding: &mut SurfaceBinding, cam: &Camera, image: &Image) {
    for i in 0..binding.len() {
        if let Some(c) = cam.project(binding.base_positions[i]).and_then(|(p, _)| bilinear(image, p[0], p[1])) {
            let o = i * crate::splat::PARAMS_PER_GAUSSIAN + 4;
            binding.params[o..o + 3].copy_from_slice(&c.map(|v| v.clamp(0.0, 1.0)));
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub total: f64,
    pub data: f64,
    pub physics: f64,
    pub temporal: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepOutcome {
    Accepted(LossRecord),
    /// Non-finite loss; the learning rate was halved.
    Rejected,
}

/// Optimisation state of one run.
pub struct Tracker {
    pub config: TrackerConfig,
    pub effective: EffectiveConfig,
    pub reference: ReferenceField,
    pub field: DeformationField,
    pub binding: SurfaceBinding,
    pub adam_field: Adam,
    pub adam_shared: Adam,
    pub rng: ChaCha8Rng,
    pub lr_scale: f64,
    pub steps: usize,
    pub history: Vec<LossRecord>,
    pub timings_ms: Vec<f64>,
    pub events: Vec<String>,
}

fn adam_for(n: usize, lr: f64, cfg: &TrackerConfig) -> Adam {
    let mut a = Adam::new(n, lr);
    a.beta1 = cfg.beta1;
    a.beta2 = cfg.beta2;
    a.eps = cfg.adam_eps;
    a
}

impl Tracker {
    pub fn new(scene: &TrackingScene, reference: ReferenceField, config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        scene.validate()?;
        let effective = apply_ablation(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let field_cfg = crate::fields::SirenConfig { seed: config.seed, ..config.field.clone() };
        let bounds = reference.domain().bounds();
        let field = DeformationField::new(field_cfg, scene.frames.len(), effective.temporal_mode, bounds)?;
        let texture = scene.texture.clone().unwrap_or(Texture::Constant([0.5; 3]));
        let mut binding = sample_template_gaussians(&reference, &texture, config.gaussians, config.normal_scale, &mut rng)?;
        if scene.texture.is_none() {
            init_colors_from_image(&mut binding, &scene.camera, &scene.frames[0]);
        }
        binding.free = effective.free;
        if binding.len() < config.gaussians {
            warn!("{} of {} Gaussians bound", binding.len(), config.gaussians);
        }
        let adam_field = adam_for(field.net.params.len(), config.lr_field, &config);
        let adam_shared = adam_for(binding.params.len(), config.lr_shared, &config);
        Ok(Self {
            config,
            effective,
            reference,
            field,
            binding,
            adam_field,
            adam_shared,
            rng,
            lr_scale: 1.0,
            steps: 0,
            history: Vec::new(),
            timings_ms: Vec::new(),
            events: Vec::new(),
        })
    }

    fn render_options(&self) -> RenderOptions {
        RenderOptions { cov_reg: self.config.cov_reg, ..RenderOptions::new(self.config.background) }
    }

    /// Per-frame positions of the Gaussians.
    pub fn positions(&self) -> Result<Vec<Vec<[f64; 3]>>> {
        crate::splat::tracked_positions_all(&self.binding, &self.field)
    }

    /// Loss and gradients at the current state, without updating it.
    pub fn evaluate(&mut self, scene: &TrackingScene) -> Result<(LossRecord, Vec<f64>, Vec<f64>)> {
        let e = self.effective;
        let t_count = self.field.frames;
        let n = self.binding.len();
        let batch = self.field.deformation_batch(&self.binding.anchors, 0)?;
        let positions: Vec<Vec<[f64; 3]>> = (1..=t_count)
            .map(|t| (0..n).map(|i| vec3::add(self.binding.base_positions[i], batch.u(i, t).value())).collect())
            .collect();
        let masks = if e.use_masks { scene.masks.as_deref() } else { None };
        let dl = data_loss(
            &self.binding,
            &positions,
            &scene.frames,
            masks,
            &scene.camera,
            self.render_options(),
            e.shared_from_all_frames,
        )?;
        let mut gu = vec![0.0; n * t_count * 3];
        for t in 2..=t_count {
            for i in 0..n {
                for k in 0..3 {
                    gu[(i * t_count + t - 1) * 3 + k] = e.lambda_d * dl.position_grad[t - 1][i][k];
                }
            }
        }
        let mut g_field = batch.backward(&self.field, &gu)?;
        let xis = resample_physics_points(self.reference.domain(), self.config.physics_points, &mut self.rng);
        let mut physics = 0.0;
        if e.lambda_p > 0.0 {
            let p = physics_loss_at(&self.reference, &self.field, &self.config.material, &xis, true)?;
            physics = p.loss;
            for (a, b) in g_field.iter_mut().zip(p.grad.unwrap()) {
                *a += e.lambda_p * b;
            }
        }
        let mut temporal = 0.0;
        if !self.field.mode.is_momentum() && e.temporal_weight > 0.0 {
            let (v, g) = temporal_penalty_grad(&self.field, &xis)?;
            temporal = v;
            for (a, b) in g_field.iter_mut().zip(g) {
                *a += e.temporal_weight * b;
            }
        }
        let mask = self.binding.trainable_mask();
        let g_shared: Vec<f64> =
            dl.shared_grad.iter().zip(&mask).map(|(g, &m)| if m { e.lambda_d * g } else { 0.0 }).collect();
        let total = e.lambda_d * dl.loss + e.lambda_p * physics + e.temporal_weight * temporal;
        let rec = LossRecord { iteration: self.history.len() + 1, total, data: dl.loss, physics, temporal };
        Ok((rec, g_field, g_shared))
    }

    /// One Adam step on all frames.
    pub fn step(&mut self, scene: &TrackingScene) -> Result<StepOutcome> {
        let start = Instant::now();
        let attempt = self.evaluate(scene);
        let (rec, gf, gs) = match attempt {
            Ok(v) => v,
            Err(Error::NonFinite(msg)) => return Ok(self.reject(&msg)),
            Err(e) => return Err(e),
        };
        if !rec.total.is_finite() || gf.iter().chain(&gs).any(|g| !g.is_finite()) {
            return Ok(self.reject(&format!("loss {}", rec.total)));
        }
        let s = cosine_schedule(self.steps, self.config.iterations, self.config.lr_floor) * self.lr_scale;
        self.adam_field.update(&mut self.field.net.params, &gf, s);
        self.adam_shared.update(&mut self.binding.params, &gs, s);
        self.binding.project_params();
        self.steps += 1;
        self.history.push(rec);
        self.timings_ms.push(start.elapsed().as_secs_f64() * 1e3);
        Ok(StepOutcome::Accepted(rec))
    }

    fn reject(&mut self, why: &str) -> StepOutcome {
        self.steps += 1;
        self.lr_scale *= 0.5;
        let msg = format!("step {} rejected ({why}); learning rate scale now {}", self.steps, self.lr_scale);
        warn!("{msg}");
        self.events.push(msg);
        StepOutcome::Rejected
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrackReport {
    pub config: TrackerConfig,
    pub effective: EffectiveConfig,
    pub seed: u64,
    pub frames: usize,
    pub gaussians: usize,
    pub nrf: NrfReport,
    pub history: Vec<LossRecord>,
    #[serde(skip)]
    pub timings_ms: Vec<f64>,
    pub events: Vec<String>,
}

impl TrackReport {
    pub fn initial_total(&self) -> Option<f64> {
        self.history.first().map(|r| r.total)
    }

    pub fn final_record(&self) -> Option<LossRecord> {
        self.history.last().copied()
    }

    pub fn loss_csv(&self) -> String {
        let mut s = String::from("iteration,L_total,L_d,L_p,L_temporal\n");
        for r in &self.history {
            s += &format!("{},{:e},{:e},{:e},{:e}\n", r.iteration, r.total, r.data, r.physics, r.temporal);
        }
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("iteration,wall_ms\n");
        for (r, ms) in self.history.iter().zip(&self.timings_ms) {
            s += &format!("{},{:.3}\n", r.iteration, ms);
        }
        s
    }

    /// Run summary without wall-clock data, so equal seeds give equal bytes.
    pub fn summary_json(&self, config_text: Option<&str>) -> Result<String> {
        let last = self.final_record();
        let v = serde_json::json!({
            "seed": self.seed,
            "frames": self.frames,
            "gaussians": self.gaussians,
            "iterations": self.history.len(),
            "final": last,
            "initial_total": self.initial_total(),
            "lambda_p_effective": self.effective.lambda_p,
            "ablation": self.config.ablation.names(),
            "effective": self.effective,
            "nrf": self.nrf,
            "events": self.events,
            "config": self.config,
            "config_text": config_text,
        });
        Ok(serde_json::to_string_pretty(&v)?)
    }

    /// Writes `loss.csv`, `timing.csv` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path, config_text: Option<&str>) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, body: &str| -> Result<()> {
            let p = dir.join(name);
            let mut f = std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
            f.write_all(body.as_bytes()).map_err(|e| Error::io(&p, e))
        };
        put("loss.csv", &self.loss_csv())?;
        put("timing.csv", &self.timing_csv())?;
        put("summary.json", &self.summary_json(config_text)?)
    }
}

/// Reference fit, then `config.iterations` joint steps.
pub fn run_pipeline(
    scene: &TrackingScene,
    config: &TrackerConfig,
) -> Result<(ReferenceField, DeformationField, SurfaceBinding, TrackReport)> {
    config.validate()?;
    scene.validate()?;
    let reference_cfg = crate::fields::SirenConfig { seed: config.seed, ..config.reference.clone() };
    let nrf_opts = crate::fields::NrfFitOptions { seed: config.seed, ..config.nrf.clone() };
    let (reference, nrf) = fit_nrf(&scene.template, &reference_cfg, &nrf_opts)?;
    info!("reference fit: held-out error {:.3e}", nrf.holdout_error);
    let mut tracker = Tracker::new(scene, reference, config.clone())?;
    for k in 0..config.iterations {
        if let StepOutcome::Accepted(r) = tracker.step(scene)? {
            if k % 100 == 0 || k + 1 == config.iterations {
                info!("iteration {}: L = {:.5e} (L_d {:.5e}, L_p {:.5e})", r.iteration, r.total, r.data, r.physics);
            }
        }
    }
    let report = TrackReport {
        config: config.clone(),
        effective: tracker.effective,
        seed: config.seed,
        frames: scene.frames.len(),
        gaussians: tracker.binding.len(),
        nrf,
        history: tracker.history,
        timings_ms: tracker.timings_ms,
        events: tracker.events,
    };
    Ok((tracker.reference, tracker.field, tracker.binding, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::SirenConfig;
    use crate::geometry::{AnalyticChart, Rect};
    use crate::splat::render;

    fn toy(frames: usize) -> (TrackingScene, TrackerConfig) {
        let chart = AnalyticChart::flat(Rect::UNIT);
        let camera = Camera::look_at([0.5, -0.6, 1.6], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0], 45.0, 24, 24).unwrap();
        let texture = Texture::Procedural { frequency: 2.0, bounds: Rect::UNIT };
        let r = ReferenceField::Analytic(chart.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let gt = sample_template_gaussians(&r, &texture, 80, 1e-5, &mut rng).unwrap();
        let imgs: Vec<Image> = (0..frames)
            .map(|t| {
                let pos = gt.base_positions.iter().map(|p| [p[0], p[1], p[2] + 0.02 * t as f64 * p[0]]).collect();
                render(&gt.cloud(pos), &camera, [0.0; 3]).unwrap().image
            })
            .collect();
        let scene = TrackingScene {
            template: TemplateSource::Analytic(chart),
            camera,
            frames: imgs,
            masks: Some(vec![vec![1.0; 24 * 24]; frames]),
            texture: Some(texture),
        };
        let cfg = TrackerConfig {
            gaussians: 40,
            physics_points: 8,
            iterations: 2,
            field: SirenConfig { hidden_layers: 1, width: 8, ..SirenConfig::ndf(0) },
            ..TrackerConfig::default()
        };
        (scene, cfg)
    }

    #[test]
    fn zero_iterations_keep_initial_field() {
        let (scene, mut cfg) = toy(3);
        cfg.iterations = 0;
        let (r, f, _, rep) = run_pipeline(&scene, &cfg).unwrap();
        let fresh = Tracker::new(&scene, r, cfg).unwrap();
        assert_eq!(f.net.params, fresh.field.net.params);
        assert!(rep.history.is_empty());
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (scene, mut cfg) = toy(3);
        cfg.lr_field = 0.0;
        cfg.lr_shared = 0.0;
        let r = ReferenceField::Analytic(AnalyticChart::flat(Rect::UNIT));
        let mut t = Tracker::new(&scene, r, cfg).unwrap();
        let (p0, b0) = (t.field.net.params.clone(), t.binding.params.clone());
        t.step(&scene).unwrap();
        t.step(&scene).unwrap();
        assert_eq!(t.field.net.params, p0);
        assert_eq!(t.binding.params, b0);
        assert_eq!(t.history.len(), 2);
    }

    #[test]
    fn gradient_routing() {
        let (scene, mut cfg) = toy(3);
        cfg.ablation.physics_off = true;
        let r = ReferenceField::Analytic(AnalyticChart::flat(Rect::UNIT));
        let eval = |s: &TrackingScene| Tracker::new(s, r.clone(), cfg.clone()).unwrap().evaluate(s).unwrap();
        let (rec, gf, gs) = eval(&scene);
        assert_eq!(rec.physics, 0.0);
        assert!(gf.iter().any(|g| *g != 0.0));
        assert!(gs.iter().any(|g| *g != 0.0));
        // changing the frame-1 target moves only the shared gradient
        let mut s1 = scene.clone();
        s1.frames[0] = Image::new(24, 24, [0.3, 0.9, 0.1]);
        let (_, gf1, gs1) = eval(&s1);
        assert_eq!(gf1, gf);
        assert_ne!(gs1, gs);
        // changing later targets and masks moves only the Θ-gradient
        let mut s2 = scene.clone();
        s2.frames[2] = Image::new(24, 24, [0.3, 0.9, 0.1]);
        s2.masks.as_mut().unwrap()[1] = vec![0.0; 24 * 24];
        let (_, gf2, gs2) = eval(&s2);
        assert_eq!(gs2, gs);
        assert_ne!(gf2, gf);
    }

    #[test]
    fn physics_gradient_linear_in_stiffness() {
        let (mut scene, mut cfg) = toy(3);
        scene.masks = None;
        cfg.lambda_d = 0.0;
        let r = ReferenceField::Analytic(AnalyticChart::flat(Rect::UNIT));
        let g1 = Tracker::new(&scene, r.clone(), cfg.clone()).unwrap().evaluate(&scene).unwrap().1;
        cfg.lambda_p *= 2.0;
        cfg.material.young *= 0.5;
        let g2 = Tracker::new(&scene, r, cfg).unwrap().evaluate(&scene).unwrap().1;
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300), "{a} {b}");
        }
        assert!(g1.iter().any(|g| *g != 0.0));
    }

    #[test]
    fn identical_seeds_identical_reports() {
        let (scene, cfg) = toy(3);
        let a = run_pipeline(&scene, &cfg).unwrap().3;
        let b = run_pipeline(&scene, &cfg).unwrap().3;
        assert_eq!(a.loss_csv(), b.loss_csv());
        assert_eq!(a.summary_json(None).unwrap(), b.summary_json(None).unwrap());
    }

    #[test]
    fn physics_points_inside_and_fresh() {
        let d = ChartDomain::Rect(Rect::UNIT);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = resample_physics_points(&d, 100, &mut rng);
        let b = resample_physics_points(&d, 100, &mut rng);
        assert_eq!(a.len(), 100);
        assert!(a.iter().all(|p| d.contains(*p)));
        assert_ne!(a, b);
        let mut rng2 = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(resample_physics_points(&d, 100, &mut rng2), a);
        // quadrant counts within 3σ of the multinomial expectation
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = resample_physics_points(&d, 100_000, &mut rng);
        let mut q = [0usize; 4];
        for p in &pts {
            q[(p[0] >= 0.5) as usize + 2 * (p[1] >= 0.5) as usize] += 1;
        }
        let sd = (100_000.0f64 * 0.25 * 0.75).sqrt();
        assert!(q.iter().all(|&c| (c as f64 - 25_000.0).abs() <= 3.0 * sd), "{q:?}");
    }
}
