//! Inverse-problem driver: joint optimisation of the deformation field and
//! the shared Gaussian parameters.

pub mod adam;
pub mod pipeline;

pub use adam::{cosine_schedule, Adam};
pub use pipeline::{
    init_colors_from_image, reconstruct, resample_physics_points, run_pipeline, StepOutcome, Tracker, TrackingScene,
    TrackReport,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{NrfFitOptions, SirenConfig, TemporalMode};
use crate::shell::MaterialModel;
use crate::splat::{FreeAttributes, NORMAL_SCALE};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    pub physics_off: bool,
    pub surface_binding_off: bool,
    pub normal_scale_free: bool,
    pub momentum_off: bool,
    pub mask_off: bool,
}

impl Ablation {
    /// Parses a comma-separated flag list such as `physics_off,mask_off`.
    pub fn parse_list(s: &str) -> Result<Self> {
        let mut a = Ablation::default();
        for f in s.split(',').map(str::trim).filter(|f| !f.is_empty()) {
            match f {
                "physics_off" => a.physics_off = true,
                "surface_binding_off" => a.surface_binding_off = true,
                "normal_scale_free" => a.normal_scale_free = true,
                "momentum_off" => a.momentum_off = true,
                "mask_off" => a.mask_off = true,
                other => return Err(Error::Invalid(format!("unknown ablation flag `{other}`"))),
            }
        }
        Ok(a)
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        for (on, n) in [
            (self.physics_off, "physics_off"),
            (self.surface_binding_off, "surface_binding_off"),
            (self.normal_scale_free, "normal_scale_free"),
            (self.momentum_off, "momentum_off"),
            (self.mask_off, "mask_off"),
        ] {
            if on {
                v.push(n);
            }
        }
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalKind {
    Momentum,
    OffsetAcceleration,
    OffsetVelocity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub lambda_d: f64,
    pub lambda_p: f64,
    pub momentum_lambda: f64,
    pub temporal_mode: TemporalKind,
    /// Weight of the offset-mode temporal penalty.
    pub temporal_weight: f64,
    pub gaussians: usize,
    pub physics_points: usize,
    pub iterations: usize,
    pub lr_field: f64,
    pub lr_shared: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub lr_floor: f64,
    pub normal_scale: f64,
    pub background: [f64; 3],
    pub cov_reg: f64,
    pub field: SirenConfig,
    pub reference: SirenConfig,
    pub nrf: NrfFitOptions,
    pub material: MaterialModel,
    pub ablation: Ablation,
    pub seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            lambda_d: 5.0,
            lambda_p: 1.0,
            momentum_lambda: 0.4,
            temporal_mode: TemporalKind::Momentum,
            temporal_weight: 1.0,
            gaussians: 1500,
            physics_points: 100,
            iterations: 2000,
            lr_field: 1e-4,
            lr_shared: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            lr_floor: 0.01,
            normal_scale: NORMAL_SCALE,
            background: [0.0; 3],
            cov_reg: crate::splat::render::DEFAULT_COV_REG,
            field: SirenConfig { hidden_layers: 3, width: 64, ..SirenConfig::ndf(0) },
            reference: SirenConfig { hidden_layers: 3, width: 64, ..SirenConfig::nrf(0) },
            nrf: NrfFitOptions::default(),
            material: MaterialModel::default(),
            ablation: Ablation::default(),
            seed: 0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_d", self.lambda_d),
            ("lambda_p", self.lambda_p),
            ("temporal_weight", self.temporal_weight),
            ("lr_field", self.lr_field),
            ("lr_shared", self.lr_shared),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{name} = {v} must be finite and nonnegative")));
            }
        }
        if !(0.0..1.0).contains(&self.momentum_lambda) {
            return Err(Error::Invalid(format!("momentum λ = {} outside [0, 1)", self.momentum_lambda)));
        }
        if self.gaussians == 0 {
            return Err(Error::Invalid("need at least one Gaussian".into()));
        }
        if self.physics_points == 0 {
            return Err(Error::Invalid("need at least one physics sample".into()));
        }
        if !(self.normal_scale > 0.0) {
            return Err(Error::Invalid("normal scale must be positive".into()));
        }
        self.material.validate()?;
        self.field.validate()?;
        Ok(())
    }
}

/// What the ablation flags switch on or off.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveConfig {
    pub lambda_d: f64,
    pub lambda_p: f64,
    pub temporal_mode: TemporalMode,
    pub temporal_weight: f64,
    pub free: FreeAttributes,
    pub shared_from_all_frames: bool,
    pub use_masks: bool,
}

pub fn apply_ablation(cfg: &TrackerConfig) -> EffectiveConfig {
    let a = cfg.ablation;
    let temporal_mode = match cfg.temporal_mode {
        TemporalKind::Momentum => TemporalMode::Momentum { lambda: if a.momentum_off { 0.0 } else { cfg.momentum_lambda } },
        TemporalKind::OffsetAcceleration => TemporalMode::OffsetAcceleration,
        TemporalKind::OffsetVelocity => TemporalMode::OffsetVelocity,
    };
    EffectiveConfig {
        lambda_d: cfg.lambda_d,
        lambda_p: if a.physics_off { 0.0 } else { cfg.lambda_p },
        temporal_mode,
        temporal_weight: cfg.temporal_weight,
        free: FreeAttributes {
            normal_scale: a.normal_scale_free || a.surface_binding_off,
            rotation: a.normal_scale_free || a.surface_binding_off,
        },
        shared_from_all_frames: a.surface_binding_off,
        use_masks: !a.mask_off,
    }
}
