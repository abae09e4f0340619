//! JSON scene description. Relative paths resolve against the file's directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fields::TemplateSource;
use crate::geometry::{AnalyticChart, Rect};
use crate::shell::MaterialModel;
use crate::splat::{Camera, Texture};
use crate::track::{TrackerConfig, TrackingScene};

use super::image_io::{read_gray, read_image};
use super::obj::load_template;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemplateSpec {
    /// `chart` is `flat`, `cylinder:r` or `expr:x;y;z`.
    Analytic { chart: String, bounds: Rect },
    Obj { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TextureSpec {
    Constant { color: [f64; 3] },
    Procedural { frequency: f64 },
    Checker { cells: usize, colors: [[f64; 3]; 2] },
    /// Vertex colours of an OBJ template.
    Vertex,
    Image { path: PathBuf },
}

fn default_grid() -> usize {
    32
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub template: TemplateSpec,
    pub camera: PathBuf,
    pub frames: Vec<PathBuf>,
    #[serde(default)]
    pub masks: Option<Vec<PathBuf>>,
    /// `key = value` material file; overrides `tracker.material`.
    #[serde(default)]
    pub material: Option<PathBuf>,
    #[serde(default)]
    pub texture: Option<TextureSpec>,
    /// Ground-truth point clouds (PLY), one per frame.
    #[serde(default)]
    pub ground_truth: Option<Vec<PathBuf>>,
    /// Side of the chart lattice used for exported predictions.
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Partial tracker configuration merged over the defaults.
    #[serde(default)]
    pub tracker: Value,
}

#[derive(Clone, Debug)]
pub struct LoadedScene {
    pub scene: TrackingScene,
    pub tracker: TrackerConfig,
    pub config: SceneConfig,
    pub text: String,
    pub dir: PathBuf,
}

impl LoadedScene {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.dir.join(p)
    }
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o.clone(),
    }
}

/// Applies a partial JSON object over `base`.
pub fn merge_tracker(base: &TrackerConfig, over: &Value) -> Result<TrackerConfig> {
    if over.is_null() {
        return Ok(base.clone());
    }
    if !over.is_object() {
        return Err(Error::parse("tracker overrides", "expected a JSON object"));
    }
    let mut v = serde_json::to_value(base)?;
    merge(&mut v, over);
    serde_json::from_value(v).map_err(|e| Error::parse("tracker overrides", e.to_string()))
}

pub fn load_template_source(spec: &TemplateSpec, dir: &Path) -> Result<TemplateSource> {
    match spec {
        TemplateSpec::Analytic { chart, bounds } => Ok(TemplateSource::Analytic(AnalyticChart::from_spec(chart, *bounds)?)),
        TemplateSpec::Obj { path } => Ok(TemplateSource::Mesh(load_template(&dir.join(path))?)),
    }
}

fn chart_bounds(t: &TemplateSource) -> Rect {
    match t {
        TemplateSource::Analytic(c) => c.domain.bounds(),
        TemplateSource::Mesh(m) => m.chart_bounds,
    }
}

pub fn build_texture(spec: &TextureSpec, template: &TemplateSource, dir: &Path) -> Result<Texture> {
    let bounds = chart_bounds(template);
    Ok(match spec {
        TextureSpec::Constant { color } => Texture::Constant(*color),
        TextureSpec::Procedural { frequency } => Texture::Procedural { frequency: *frequency, bounds },
        TextureSpec::Checker { cells, colors } => Texture::Checker { cells: *cells, colors: *colors, bounds },
        TextureSpec::Image { path } => Texture::Image { image: Arc::new(read_image(&dir.join(path))?), bounds },
        TextureSpec::Vertex => match template {
            TemplateSource::Mesh(m) if m.colors.is_some() => Texture::vertex(Arc::new(m.clone()))?,
            _ => return Err(Error::Invalid("vertex texture needs an OBJ template with vertex colours".into())),
        },
    })
}

pub fn load_scene(path: &Path) -> Result<LoadedScene> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config: SceneConfig =
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let template = load_template_source(&config.template, &dir)?;
    let camera = Camera::load(&dir.join(&config.camera))?;
    let frames = config.frames.iter().map(|f| read_image(&dir.join(f))).collect::<Result<Vec<_>>>()?;
    let masks = match &config.masks {
        None => None,
        Some(ms) => {
            if ms.len() != frames.len() {
                return Err(Error::Invalid(format!("{} masks for {} frames", ms.len(), frames.len())));
            }
            let mut out = Vec::with_capacity(ms.len());
            for m in ms {
                let p = dir.join(m);
                let (w, h, v) = read_gray(&p)?;
                if (w, h) != (camera.width, camera.height) {
                    return Err(Error::Invalid(format!("{}: mask is {w}x{h}, camera is {}x{}", p.display(), camera.width, camera.height)));
                }
                out.push(v);
            }
            Some(out)
        }
    };
    let texture = config.texture.as_ref().map(|t| build_texture(t, &template, &dir)).transpose()?;
    let mut tracker = merge_tracker(&TrackerConfig::default(), &config.tracker)?;
    if let Some(m) = &config.material {
        tracker.material = MaterialModel::load(&dir.join(m))?;
    }
    let scene = TrackingScene { template, camera, frames, masks, texture };
    scene.validate()?;
    Ok(LoadedScene { scene, tracker, config, text, dir })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tracker_overrides_merge() {
        let over = serde_json::json!({ "iterations": 7, "material": { "E": 100.0 }, "ablation": { "physics_off": true } });
        let c = merge_tracker(&TrackerConfig::default(), &over).unwrap();
        assert_eq!(c.iterations, 7);
        assert_eq!(c.material.young, 100.0);
        assert_eq!(c.material.nu, 0.25);
        assert!(c.ablation.physics_off);
        assert_eq!(c.lambda_d, 5.0);
        assert!(merge_tracker(&TrackerConfig::default(), &serde_json::json!([1])).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let s = r#"{"template": {"kind": "analytic", "chart": "flat", "bounds": {"lo": [0, 0], "hi": [1, 1]}},
                    "camera": "cam.txt", "frames": ["a.png", "b.png"], "texture": {"kind": "procedural", "frequency": 2}}"#;
        let c: SceneConfig = serde_json::from_str(s).unwrap();
        assert_eq!(c.grid, 32);
        assert_eq!(c.texture, Some(TextureSpec::Procedural { frequency: 2.0 }));
        assert!(c.masks.is_none());
    }
}
