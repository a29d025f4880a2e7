//! Run configuration: flat `section.key = value` text.
//!
//! A run starts from one of two profiles (`paper` or `desk`, the latter
//! sized for a laptop) and applies overrides on top. Unknown keys are
//! rejected. [`RunConfig::snapshot`] writes every key in a fixed order and
//! parses back to the same configuration.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use crate::baselines::DEFAULT_HORIZON_WEIGHTS;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::geometry::{cross_layout, diamond_layout, row_layout, FarmLayout};
use crate::policy::{ModelConfig, Pooling, Scale, Variant};
use crate::ppo::{PpoConfig, TrainSetup};
use crate::wake::TurbineModel;
use crate::wind::FORECAST_HORIZON;

#[derive(Debug, Clone, PartialEq)]
pub enum LayoutSource {
    Diamond,
    Row,
    Cross,
    File(PathBuf),
}

impl Display for LayoutSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LayoutSource::Diamond => f.write_str("diamond"),
            LayoutSource::Row => f.write_str("row"),
            LayoutSource::Cross => f.write_str("cross"),
            LayoutSource::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for LayoutSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diamond" => Ok(Self::Diamond),
            "row" => Ok(Self::Row),
            "cross" => Ok(Self::Cross),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(Self::File(PathBuf::from(p))),
                _ => Err(Error::Config(format!("unknown layout {s:?} (diamond, row, cross or file:<path>)"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FarmSettings {
    pub layout: LayoutSource,
    /// Nearest-neighbour spacing of generated layouts, rotor diameters.
    pub spacing: f64,
    /// Turbine count of the `row` layout.
    pub row_turbines: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSettings {
    pub variant: Variant,
    pub scale: Scale,
    pub pooling: Pooling,
    pub attention_norm: bool,
    pub attention_residual: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub k0_min: f64,
    pub k0_max: f64,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub k0_min: f64,
    pub k0_max: f64,
    /// Number of equal direction bins over `[k0_min, k0_max)`.
    pub directions: usize,
    /// Held-out episodes per bin.
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub profile: Scale,
    pub farm: FarmSettings,
    pub turbine: TurbineModel,
    pub env: EnvConfig,
    pub model: ModelSettings,
    pub ppo: PpoConfig,
    pub train: TrainSettings,
    pub eval: EvalSettings,
    pub horizon_weights: [f64; FORECAST_HORIZON + 1],
    pub out: PathBuf,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join<T: Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Defaults of a profile. PPO learning rates and clipping depend on the variant.
    pub fn profile(scale: Scale, variant: Variant) -> Self {
        let paper = scale == Scale::Paper;
        Self {
            profile: scale,
            farm: FarmSettings {
                layout: if paper { LayoutSource::Diamond } else { LayoutSource::Row },
                spacing: if paper { 4.0 } else { 5.0 },
                row_turbines: 3,
            },
            turbine: TurbineModel::default(),
            env: EnvConfig::default(),
            model: ModelSettings {
                variant,
                scale,
                pooling: Pooling::Mean,
                attention_norm: true,
                attention_residual: true,
            },
            ppo: PpoConfig::for_scale(variant, scale),
            train: if paper {
                TrainSettings { k0_min: 0.0, k0_max: 360.0, seeds: (0..10).collect() }
            } else {
                TrainSettings { k0_min: 260.0, k0_max: 280.0, seeds: vec![0] }
            },
            eval: if paper {
                EvalSettings { k0_min: 0.0, k0_max: 360.0, directions: 360, seeds: 10 }
            } else {
                EvalSettings { k0_min: 260.0, k0_max: 280.0, directions: 16, seeds: 2 }
            },
            horizon_weights: DEFAULT_HORIZON_WEIGHTS,
            out: PathBuf::from("runs"),
        }
    }

    /// Parses configuration text. `scale` and `variant`, when given, take
    /// precedence over the `profile` and `model.variant` keys of the text.
    pub fn from_text(text: &str, scale: Option<Scale>, variant: Option<Variant>) -> Result<Self> {
        let entries = parse_entries(text)?;
        let lookup = |k: &str| entries.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
        let scale = match (scale, lookup("profile")) {
            (Some(s), _) => s,
            (None, Some(v)) => parse("profile", v)?,
            (None, None) => Scale::Desk,
        };
        let variant = match (variant, lookup("model.variant")) {
            (Some(v), _) => v,
            (None, Some(v)) => parse("model.variant", v)?,
            (None, None) => Variant::V2,
        };
        let mut cfg = Self::profile(scale, variant);
        for (k, v) in &entries {
            if k == "profile" || k == "model.variant" {
                continue;
            }
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        let t = &mut self.turbine;
        let w = &mut self.env.wind;
        let p = &mut self.ppo;
        match key {
            "farm.layout" => self.farm.layout = v.parse()?,
            "farm.spacing" => self.farm.spacing = parse(key, v)?,
            "farm.row_turbines" => self.farm.row_turbines = parse(key, v)?,
            "turbine.rotor_diameter" => t.rotor_diameter = parse(key, v)?,
            "turbine.rated_power" => t.rated_power = parse(key, v)?,
            "turbine.cut_in" => t.cut_in = parse(key, v)?,
            "turbine.air_density" => t.air_density = parse(key, v)?,
            "turbine.cp" => t.cp = parse(key, v)?,
            "turbine.ct" => t.ct = parse(key, v)?,
            "turbine.yaw_exponent" => t.yaw_exponent = parse(key, v)?,
            "turbine.wake_expansion" => t.wake_expansion = parse(key, v)?,
            "turbine.deflection_rate" => t.deflection_rate = parse(key, v)?,
            "wind.v_min" => w.v_min = parse(key, v)?,
            "wind.v_max" => w.v_max = parse(key, v)?,
            "wind.dir_noise_deg" => w.dir_noise_deg = parse(key, v)?,
            "wind.speed_noise_ms" => w.speed_noise_ms = parse(key, v)?,
            "wind.arma_ma_coeff" => w.arma_ma_coeff = parse(key, v)?,
            "wind.dir_step_var" => w.dir_step_var = parse(key, v)?,
            "wind.speed_step_var" => w.speed_step_var = parse(key, v)?,
            "env.horizon" => self.env.horizon = parse(key, v)?,
            "env.step_minutes" => self.env.step_minutes = parse(key, v)?,
            "env.w0" => self.env.w0 = parse(key, v)?,
            "env.w1" => self.env.w1 = parse(key, v)?,
            "env.p" => self.env.p = parse(key, v)?,
            "model.variant" => self.model.variant = v.parse()?,
            "model.scale" => self.model.scale = v.parse()?,
            "model.pooling" => self.model.pooling = v.parse()?,
            "model.attention_norm" => self.model.attention_norm = parse(key, v)?,
            "model.attention_residual" => self.model.attention_residual = parse(key, v)?,
            "ppo.training_steps" => p.training_steps = parse(key, v)?,
            "ppo.gamma" => p.gamma = parse(key, v)?,
            "ppo.gae_lambda" => p.gae_lambda = parse(key, v)?,
            "ppo.lr_first" => p.lr_first = parse(key, v)?,
            "ppo.lr_last" => p.lr_last = parse(key, v)?,
            "ppo.grad_clip" => p.grad_clip = if v == "none" { None } else { Some(parse(key, v)?) },
            "ppo.entropy_coeff" => p.entropy_coeff = parse(key, v)?,
            "ppo.clip_actor" => p.clip_actor = parse(key, v)?,
            "ppo.vf_clip" => p.vf_clip = parse(key, v)?,
            "ppo.value_loss_coeff" => p.value_loss_coeff = parse(key, v)?,
            "ppo.epochs" => p.epochs = parse(key, v)?,
            "ppo.train_batch" => p.train_batch = parse(key, v)?,
            "ppo.minibatch" => p.minibatch = parse(key, v)?,
            "ppo.episodes_per_iter" => p.episodes_per_iter = parse(key, v)?,
            "ppo.normalize_advantages" => p.normalize_advantages = parse(key, v)?,
            "ppo.checkpoint_every" => p.checkpoint_every = parse(key, v)?,
            "train.k0_min" => self.train.k0_min = parse(key, v)?,
            "train.k0_max" => self.train.k0_max = parse(key, v)?,
            "train.seeds" => self.train.seeds = parse_list(key, v)?,
            "eval.k0_min" => self.eval.k0_min = parse(key, v)?,
            "eval.k0_max" => self.eval.k0_max = parse(key, v)?,
            "eval.directions" => self.eval.directions = parse(key, v)?,
            "eval.seeds" => self.eval.seeds = parse(key, v)?,
            "baseline.horizon_weights" => {
                let ws: Vec<f64> = parse_list(key, v)?;
                self.horizon_weights = ws.try_into().map_err(|ws: Vec<f64>| {
                    Error::Config(format!("{key}: expected {} weights, got {}", FORECAST_HORIZON + 1, ws.len()))
                })?;
            }
            "out" => self.out = PathBuf::from(v),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let t = &self.turbine;
        let w = &self.env.wind;
        let p = &self.ppo;
        vec![
            ("profile", self.profile.to_string()),
            ("farm.layout", self.farm.layout.to_string()),
            ("farm.spacing", self.farm.spacing.to_string()),
            ("farm.row_turbines", self.farm.row_turbines.to_string()),
            ("turbine.rotor_diameter", t.rotor_diameter.to_string()),
            ("turbine.rated_power", t.rated_power.to_string()),
            ("turbine.cut_in", t.cut_in.to_string()),
            ("turbine.air_density", t.air_density.to_string()),
            ("turbine.cp", t.cp.to_string()),
            ("turbine.ct", t.ct.to_string()),
            ("turbine.yaw_exponent", t.yaw_exponent.to_string()),
            ("turbine.wake_expansion", t.wake_expansion.to_string()),
            ("turbine.deflection_rate", t.deflection_rate.to_string()),
            ("wind.v_min", w.v_min.to_string()),
            ("wind.v_max", w.v_max.to_string()),
            ("wind.dir_noise_deg", w.dir_noise_deg.to_string()),
            ("wind.speed_noise_ms", w.speed_noise_ms.to_string()),
            ("wind.arma_ma_coeff", w.arma_ma_coeff.to_string()),
            ("wind.dir_step_var", w.dir_step_var.to_string()),
            ("wind.speed_step_var", w.speed_step_var.to_string()),
            ("env.horizon", self.env.horizon.to_string()),
            ("env.step_minutes", self.env.step_minutes.to_string()),
            ("env.w0", self.env.w0.to_string()),
            ("env.w1", self.env.w1.to_string()),
            ("env.p", self.env.p.to_string()),
            ("model.variant", self.model.variant.to_string()),
            ("model.scale", self.model.scale.to_string()),
            ("model.pooling", self.model.pooling.to_string()),
            ("model.attention_norm", self.model.attention_norm.to_string()),
            ("model.attention_residual", self.model.attention_residual.to_string()),
            ("ppo.training_steps", p.training_steps.to_string()),
            ("ppo.gamma", p.gamma.to_string()),
            ("ppo.gae_lambda", p.gae_lambda.to_string()),
            ("ppo.lr_first", p.lr_first.to_string()),
            ("ppo.lr_last", p.lr_last.to_string()),
            ("ppo.grad_clip", p.grad_clip.map_or("none".into(), |c| c.to_string())),
            ("ppo.entropy_coeff", p.entropy_coeff.to_string()),
            ("ppo.clip_actor", p.clip_actor.to_string()),
            ("ppo.vf_clip", p.vf_clip.to_string()),
            ("ppo.value_loss_coeff", p.value_loss_coeff.to_string()),
            ("ppo.epochs", p.epochs.to_string()),
            ("ppo.train_batch", p.train_batch.to_string()),
            ("ppo.minibatch", p.minibatch.to_string()),
            ("ppo.episodes_per_iter", p.episodes_per_iter.to_string()),
            ("ppo.normalize_advantages", p.normalize_advantages.to_string()),
            ("ppo.checkpoint_every", p.checkpoint_every.to_string()),
            ("train.k0_min", self.train.k0_min.to_string()),
            ("train.k0_max", self.train.k0_max.to_string()),
            ("train.seeds", join(&self.train.seeds)),
            ("eval.k0_min", self.eval.k0_min.to_string()),
            ("eval.k0_max", self.eval.k0_max.to_string()),
            ("eval.directions", self.eval.directions.to_string()),
            ("eval.seeds", self.eval.seeds.to_string()),
            ("baseline.horizon_weights", join(&self.horizon_weights)),
            ("out", self.out.display().to_string()),
        ]
    }

    /// `key=value` lines for every key; parses back to `self`.
    pub fn snapshot(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.turbine.validate()?;
        self.env.validate()?;
        self.ppo.validate(self.env.horizon)?;
        if !(self.farm.spacing.is_finite() && self.farm.spacing > 0.0) || self.farm.row_turbines == 0 {
            return Err(Error::Config("farm.spacing and farm.row_turbines must be positive".into()));
        }
        for (name, lo, hi) in
            [("train", self.train.k0_min, self.train.k0_max), ("eval", self.eval.k0_min, self.eval.k0_max)]
        {
            if !(lo.is_finite() && hi.is_finite() && lo < hi && hi - lo <= 360.0) {
                return Err(Error::Config(format!("{name}: invalid direction window [{lo}, {hi})")));
            }
        }
        if self.train.seeds.is_empty() || self.eval.directions == 0 || self.eval.seeds == 0 {
            return Err(Error::Config("train.seeds, eval.directions and eval.seeds must be non-empty".into()));
        }
        if self.horizon_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("baseline.horizon_weights must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<FarmLayout> {
        let d = self.turbine.rotor_diameter;
        let s = self.farm.spacing;
        match &self.farm.layout {
            LayoutSource::Diamond => diamond_layout(s, d),
            LayoutSource::Row => row_layout(self.farm.row_turbines, s, d),
            LayoutSource::Cross => cross_layout(s, d),
            LayoutSource::File(path) => {
                let layout = FarmLayout::load(path).map_err(|e| Error::Config(e.to_string()))?;
                if layout.rotor_diameter() != d {
                    return Err(Error::Config(format!(
                        "layout file {} has d={} but turbine.rotor_diameter={d}",
                        path.display(),
                        layout.rotor_diameter()
                    )));
                }
                Ok(layout)
            }
        }
    }

    pub fn train_setup(&self) -> Result<TrainSetup> {
        Ok(TrainSetup {
            layout: self.layout()?,
            turbine: self.turbine,
            env: self.env,
            k0_window: (self.train.k0_min, self.train.k0_max),
        })
    }

    pub fn model_config(&self, n_turbines: usize) -> ModelConfig {
        ModelConfig {
            variant: self.model.variant,
            scale: self.model.scale,
            n_turbines,
            pooling: self.model.pooling,
            attention_norm: self.model.attention_norm,
            attention_residual: self.model.attention_residual,
        }
    }
}

/// Splits text into `(key, value)` pairs. Blank lines and `#` comments are
/// skipped; a key may appear only once.
pub fn parse_entries(text: &str) -> Result<Vec<(String, String)>> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected key=value, got {line:?}", n + 1)));
        };
        let (k, v) = (k.trim().to_owned(), v.trim().to_owned());
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        if let Some(first) = seen.insert(k.clone(), n + 1) {
            return Err(Error::Config(format!("line {}: key {k:?} already set on line {first}", n + 1)));
        }
        out.push((k, v));
    }
    Ok(out)
}
