//! Synthetic sequences from analytic deformations of a flat sheet.
//!
//! Every family is driven by `s = (t − 1)/(T − 1)`, so frame 1 is the
//! undeformed template.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffmath::vec3;
use crate::error::{Error, Result};
use crate::eval::{write_ply, PlyData, PlyFormat};
use crate::fields::{ReferenceField, TemplateSource};
use crate::geometry::{AnalyticChart, Rect};
use crate::splat::{self, render_with_cache, Camera, Image, RenderOptions, SurfaceBinding, Texture};
use crate::track::TrackingScene;

use super::config::{SceneConfig, TemplateSpec, TextureSpec};
use super::image_io::{write_gray, write_image};

use std::f64::consts::{PI, TAU};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SynthFamily {
    /// `u₃ = A sin(2πkξ¹) s` with first-order arc-length compensation in ξ¹.
    SineWrinkle { amplitude: f64, waves: f64 },
    /// Isometric fold about the line `ξ¹ = ½` through angle `θ s`, the
    /// bend spread over a band of the given width.
    Fold { angle: f64, width: f64 },
    /// `u₃ = H s sin(πξ¹) sin(πξ²)`.
    Lift { height: f64 },
}

impl SynthFamily {
    /// `family` is `sine-wrinkle`, `fold` or `lift`; `params` is a list such
    /// as `A=0.02,k=3`, `angle=1.2,width=0.2` or `H=0.1`.
    pub fn parse(family: &str, params: &str) -> Result<Self> {
        let mut kv = std::collections::HashMap::new();
        for p in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = p.split_once('=').ok_or_else(|| Error::parse("synthetic parameters", format!("expected key=value, got `{p}`")))?;
            let v: f64 = v.trim().parse().map_err(|_| Error::parse("synthetic parameters", format!("bad number in `{p}`")))?;
            kv.insert(k.trim().to_string(), v);
        }
        let get = |names: &[&str], default: f64| names.iter().find_map(|n| kv.get(*n).copied()).unwrap_or(default);
        let f = match family {
            "sine-wrinkle" | "sine_wrinkle" => {
                SynthFamily::SineWrinkle { amplitude: get(&["A", "amplitude"], 0.02), waves: get(&["k", "waves"], 3.0) }
            }
            "fold" => SynthFamily::Fold { angle: get(&["angle", "theta"], 1.0), width: get(&["width", "w"], 0.2) },
            "lift" => SynthFamily::Lift { height: get(&["H", "height"], 0.1) },
            other => return Err(Error::Invalid(format!("unknown synthetic family `{other}`"))),
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SynthFamily::SineWrinkle { amplitude, waves } => {
                if !(waves > 0.0) {
                    return Err(Error::Invalid(format!("wave count {waves} must be positive")));
                }
                if !(TAU * waves * amplitude.abs() < 1.0) {
                    return Err(Error::Invalid(format!("sine wrinkle needs 2πk|A| < 1, got {}", TAU * waves * amplitude.abs())));
                }
            }
            SynthFamily::Fold { angle, width } => {
                if !(angle.abs() <= PI) || !(width > 0.0 && width <= 1.0) {
                    return Err(Error::Invalid(format!("fold needs |angle| ≤ π and width in (0, 1], got {angle}, {width}")));
                }
            }
            SynthFamily::Lift { height } => {
                if !(height.abs() <= 0.5) {
                    return Err(Error::Invalid(format!("lift height {height} outside [−0.5, 0.5]")));
                }
            }
        }
        Ok(())
    }

    /// Deformed position of the unit-sheet point `(u, v)` at phase `s`.
    pub fn position_unit(&self, uv: [f64; 2], s: f64) -> [f64; 3] {
        let [u, v] = uv;
        match *self {
            SynthFamily::SineWrinkle { amplitude, waves } => {
                let a = amplitude * s;
                let w = TAU * waves;
                // −½∫(∂u₃/∂ξ¹)², centred on ξ¹ = ½
                let c = |x: f64| -0.5 * (w * a).powi(2) * (x / 2.0 + (2.0 * w * x).sin() / (4.0 * w));
                [u + c(u) - c(0.5), v, a * (w * u).sin()]
            }
            SynthFamily::Fold { angle, width } => {
                let th = angle * s;
                let (ua, ub) = (0.5 - width / 2.0, 0.5 + width / 2.0);
                if th == 0.0 || u <= ua {
                    return [u, v, 0.0];
                }
                let r = width / th;
                let bend = |x: f64| {
                    let phi = th * (x - ua) / width;
                    (ua + r * phi.sin(), r * (1.0 - phi.cos()))
                };
                if u <= ub {
                    let (x, z) = bend(u);
                    [x, v, z]
                } else {
                    let (x, z) = bend(ub);
                    [x + (u - ub) * th.cos(), v, z + (u - ub) * th.sin()]
                }
            }
            SynthFamily::Lift { height } => [u, v, height * s * (PI * u).sin() * (PI * v).sin()],
        }
    }

    pub fn position(&self, bounds: &Rect, xi: [f64; 2], s: f64) -> [f64; 3] {
        let size = bounds.size();
        let uv = [(xi[0] - bounds.lo[0]) / size[0], (xi[1] - bounds.lo[1]) / size[1]];
        let p = self.position_unit(uv, s);
        // scale back so the sheet keeps its chart dimensions
        [bounds.lo[0] + p[0] * size[0], bounds.lo[1] + p[1] * size[1], p[2] * size[0]]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthOptions {
    pub frames: usize,
    pub resolution: usize,
    /// Gaussians of the ground-truth renderer.
    pub gaussians: usize,
    pub texture_frequency: f64,
    /// Ground-truth clouds sample a `grid × grid` lattice of the chart.
    pub grid: usize,
    pub fov_deg: f64,
    pub bounds: Rect,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            frames: 8,
            resolution: 128,
            gaussians: 6000,
            texture_frequency: 3.0,
            grid: 32,
            fov_deg: 40.0,
            bounds: Rect::UNIT,
            seed: 0,
        }
    }
}

/// Frame phase `(t − 1)/(T − 1)`.
pub fn phase(t: usize, frames: usize) -> f64 {
    if frames <= 1 {
        0.0
    } else {
        (t - 1) as f64 / (frames - 1) as f64
    }
}

/// Regular `n × n` lattice over `bounds`, row-major in ξ².
pub fn grid_points(bounds: &Rect, n: usize) -> Vec<[f64; 2]> {
    let n = n.max(2);
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            out.push(bounds.lerp([i as f64 / (n - 1) as f64, j as f64 / (n - 1) as f64]));
        }
    }
    out
}

/// Oblique camera looking at the sheet centre from the `−ξ²` side.
pub fn default_camera(bounds: &Rect, resolution: usize, fov_deg: f64) -> Result<Camera> {
    let c = bounds.lerp([0.5, 0.5]);
    let s = bounds.size()[0].max(bounds.size()[1]);
    Camera::look_at([c[0], c[1] - 1.1 * s, 1.7 * s], [c[0], c[1], 0.0], [0.0, 0.0, 1.0], fov_deg, resolution, resolution)
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub family: SynthFamily,
    pub options: SynthOptions,
    pub camera: Camera,
    pub texture: Texture,
    pub frames: Vec<Image>,
    pub masks: Vec<Vec<f64>>,
    pub gt_xis: Vec<[f64; 2]>,
    pub gt_clouds: Vec<Vec<[f64; 3]>>,
    pub gt_normals: Vec<Vec<[f64; 3]>>,
}

fn deformed_frame(family: &SynthFamily, bounds: &Rect, xi: [f64; 2], s: f64) -> Option<[[f64; 3]; 3]> {
    let h = 1e-6;
    let d = |a: usize| {
        let mut p = xi;
        let mut m = xi;
        p[a] += h;
        m[a] -= h;
        vec3::mul(vec3::sub(family.position(bounds, p, s), family.position(bounds, m, s)), 0.5 / h)
    };
    let a1 = d(0);
    let a2 = d(1);
    let e1 = vec3::normalize(a1);
    let p = vec3::sub(a2, vec3::mul(e1, vec3::dot(a2, e1)));
    if vec3::norm(p) < 1e-12 {
        return None;
    }
    let e2 = vec3::normalize(p);
    let e3 = vec3::cross(e1, e2);
    Some([0, 1, 2].map(|i| [e1[i], e2[i], e3[i]]))
}

/// Renders the sequence from a dense ground-truth binding.
pub fn synth_scene(family: SynthFamily, options: &SynthOptions, camera: Option<Camera>) -> Result<SyntheticScene> {
    family.validate()?;
    if options.frames < 1 || options.resolution < 1 {
        return Err(Error::Invalid("synthetic scene needs at least one frame and pixel".into()));
    }
    let bounds = options.bounds;
    let camera = match camera {
        Some(c) => c,
        None => default_camera(&bounds, options.resolution, options.fov_deg)?,
    };
    let texture = Texture::Procedural { frequency: options.texture_frequency, bounds };
    let reference = ReferenceField::Analytic(AnalyticChart::flat(bounds));
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let binding: SurfaceBinding =
        splat::sample_template_gaussians(&reference, &texture, options.gaussians, splat::NORMAL_SCALE, &mut rng)?;
    let gt_xis = grid_points(&bounds, options.grid);
    let mut frames = Vec::with_capacity(options.frames);
    let mut masks = Vec::with_capacity(options.frames);
    let mut gt_clouds = Vec::with_capacity(options.frames);
    let mut gt_normals = Vec::with_capacity(options.frames);
    for t in 1..=options.frames {
        let s = phase(t, options.frames);
        let pos: Vec<[f64; 3]> = binding.anchors.iter().map(|&xi| family.position(&bounds, xi, s)).collect();
        let mut cloud = binding.cloud(pos);
        for (i, xi) in binding.anchors.iter().enumerate() {
            if let Some(r) = deformed_frame(&family, &bounds, *xi, s) {
                cloud.rotations[i] = r;
            }
        }
        let (out, _) = render_with_cache(&cloud, &camera, RenderOptions::new([0.0; 3]))?;
        frames.push(out.image);
        masks.push(out.alpha);
        gt_clouds.push(gt_xis.iter().map(|&xi| family.position(&bounds, xi, s)).collect());
        gt_normals.push(
            gt_xis
                .iter()
                .map(|&xi| deformed_frame(&family, &bounds, xi, s).map_or([0.0, 0.0, 1.0], |r| [r[0][2], r[1][2], r[2][2]]))
                .collect(),
        );
    }
    Ok(SyntheticScene { family, options: options.clone(), camera, texture, frames, masks, gt_xis, gt_clouds, gt_normals })
}

impl SyntheticScene {
    pub fn tracking_scene(&self) -> TrackingScene {
        TrackingScene {
            template: TemplateSource::Analytic(AnalyticChart::flat(self.options.bounds)),
            camera: self.camera.clone(),
            frames: self.frames.clone(),
            masks: Some(self.masks.clone()),
            texture: Some(self.texture.clone()),
        }
    }

    /// Writes the scene directory and returns the path of its `scene.json`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.camera.save(&dir.join("camera.txt"))?;
        let mut frames = Vec::new();
        let mut masks = Vec::new();
        let mut gts = Vec::new();
        for t in 0..self.frames.len() {
            let f = format!("frame_{:03}.png", t + 1);
            let m = format!("mask_{:03}.pgm", t + 1);
            let g = format!("gt_{:03}.ply", t + 1);
            write_image(&dir.join(&f), &self.frames[t])?;
            write_gray(&dir.join(&m), self.camera.width, self.camera.height, &self.masks[t])?;
            let ply = PlyData { positions: self.gt_clouds[t].clone(), normals: Some(self.gt_normals[t].clone()), ..PlyData::default() };
            write_ply(&dir.join(&g), &ply, PlyFormat::BinaryLittleEndian)?;
            frames.push(PathBuf::from(f));
            masks.push(PathBuf::from(m));
            gts.push(PathBuf::from(g));
        }
        let cfg = SceneConfig {
            template: TemplateSpec::Analytic { chart: "flat".into(), bounds: self.options.bounds },
            camera: PathBuf::from("camera.txt"),
            frames,
            masks: Some(masks),
            material: None,
            texture: Some(TextureSpec::Procedural { frequency: self.options.texture_frequency }),
            ground_truth: Some(gts),
            grid: self.options.grid,
            tracker: serde_json::Value::Object(Default::default()),
        };
        let path = dir.join("scene.json");
        std::fs::write(&path, serde_json::to_string_pretty(&cfg)?).map_err(|e| Error::io(&path, e))?;
        let meta = serde_json::json!({ "family": self.family, "options": self.options });
        let mp = dir.join("synth.json");
        std::fs::write(&mp, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&mp, e))?;
        Ok(path)
    }
}
