//! Run configuration: a flat `section.key = value` text format binding every
//! module's parameters into one reproducible description.
//!
//! Unknown keys are hard errors so typos cannot silently fall back to
//! defaults. [`RunConfig::echo`] renders the fully resolved configuration in
//! the same format; parsing the echo reproduces the config exactly.

use crate::array::{ArrayGeometry, SceneConfig, Span};
use crate::error::{Error, Result};
use crate::eval::SweepConfig;
use crate::iht::IhtConfig;
use crate::net::NetConfig;
use crate::sparse::AugmentConfig;
use crate::tokens::{build_grid, FrequencyGrid, TokenConfig};
use crate::train::TrainConfig;

/// Everything a run needs; one master seed feeds all randomness.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub master_seed: u64,
    pub n_elements: usize,
    pub spacing_wl: f64,
    pub fov_deg: Span,
    pub grid_bins: usize,
    pub tokens: TokenConfig,
    pub net: NetConfig,
    pub scene_k_max: usize,
    pub amp_range: Span,
    pub n_signals: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub max_sparsity: f64,
    pub snr_range_db: Span,
    pub holdout_signals: usize,
    pub iht: IhtConfig,
    pub sweep_snrs_db: Vec<f64>,
    pub sweep_trials: usize,
    pub sweep_missing: usize,
    pub sweep_targets: usize,
    pub bf_points: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            master_seed: 42,
            n_elements: 20,
            spacing_wl: 0.5,
            fov_deg: Span { lo: -30.0, hi: 30.0 },
            grid_bins: 64,
            tokens: TokenConfig::default(),
            net: NetConfig::default(),
            scene_k_max: 2,
            amp_range: Span { lo: 0.5, hi: 1.0 },
            n_signals: 8_192,
            epochs: 50,
            batch_size: 256,
            lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            max_sparsity: 0.4,
            snr_range_db: Span { lo: 10.0, hi: 30.0 },
            holdout_signals: 512,
            iht: IhtConfig::default(),
            sweep_snrs_db: vec![10.0, 15.0, 20.0, 25.0, 30.0],
            sweep_trials: 500,
            sweep_missing: 8,
            sweep_targets: 2,
            bf_points: 512,
        }
    }
}

impl RunConfig {
    /// Published full-scale defaults: the complete training corpus and trial
    /// count, with the structural extensions (sparsity feature, residuals)
    /// turned off.
    pub fn strict_paper() -> Self {
        RunConfig {
            n_signals: 131_072,
            epochs: 500,
            batch_size: 512,
            sweep_trials: 5_000,
            tokens: TokenConfig {
                sparsity_feature: false,
                mask_channel: false,
            },
            net: NetConfig {
                residual: false,
                layer_norm: false,
                ..NetConfig::default()
            },
            ..RunConfig::default()
        }
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::with_spacing(self.n_elements, self.spacing_wl)
    }

    pub fn grid(&self) -> Result<FrequencyGrid> {
        build_grid(self.fov_deg, self.grid_bins, &self.geometry()?)
    }

    pub fn scene(&self) -> SceneConfig {
        SceneConfig {
            fov_deg: self.fov_deg,
            k_max: self.scene_k_max,
            amp_range: self.amp_range,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            n_signals: self.n_signals,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            augment: AugmentConfig {
                max_sparsity: self.max_sparsity,
                snr_range_db: self.snr_range_db,
            },
            scene: self.scene(),
            holdout_signals: self.holdout_signals,
            master_seed: self.master_seed,
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            snrs_db: self.sweep_snrs_db.clone(),
            trials: self.sweep_trials,
            missing_count: self.sweep_missing,
            num_targets: self.sweep_targets,
            scene: self.scene(),
            master_seed: self.master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry()?;
        self.grid()?;
        self.train_config().validate()?;
        self.iht.validate(self.n_elements)?;
        self.sweep_config().validate(self.n_elements)?;
        if self.bf_points < 2 {
            return Err(Error::invalid_argument("eval.bf_points must be >= 2"));
        }
        Ok(())
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn bad(key: &str, value: &str, want: &str) -> Error {
            Error::invalid_argument(format!("key {key}: cannot parse '{value}' as {want}"))
        }
        let parse_u64 = |v: &str, k: &str| v.parse::<u64>().map_err(|_| bad(k, v, "an integer"));
        let parse_usize =
            |v: &str, k: &str| v.parse::<usize>().map_err(|_| bad(k, v, "an integer"));
        let parse_f64 = |v: &str, k: &str| v.parse::<f64>().map_err(|_| bad(k, v, "a number"));
        let parse_bool = |v: &str, k: &str| match v {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(bad(k, v, "true/false")),
        };
        let parse_list = |v: &str, k: &str| -> Result<Vec<f64>> {
            v.split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| bad(k, v, "a number list")))
                .collect()
        };
        match key {
            "master_seed" => self.master_seed = parse_u64(value, key)?,
            "array.n_elements" => self.n_elements = parse_usize(value, key)?,
            "array.spacing_wl" => self.spacing_wl = parse_f64(value, key)?,
            "grid.fov_lo_deg" => self.fov_deg.lo = parse_f64(value, key)?,
            "grid.fov_hi_deg" => self.fov_deg.hi = parse_f64(value, key)?,
            "grid.bins" => self.grid_bins = parse_usize(value, key)?,
            "tokens.sparsity_feature" => self.tokens.sparsity_feature = parse_bool(value, key)?,
            "tokens.mask_channel" => self.tokens.mask_channel = parse_bool(value, key)?,
            "net.embed_dim" => self.net.embed_dim = parse_usize(value, key)?,
            "net.attn_dim" => self.net.attn_dim = parse_usize(value, key)?,
            "net.hidden_dim" => self.net.hidden_dim = parse_usize(value, key)?,
            "net.residual" => self.net.residual = parse_bool(value, key)?,
            "net.layer_norm" => self.net.layer_norm = parse_bool(value, key)?,
            "scene.k_max" => self.scene_k_max = parse_usize(value, key)?,
            "scene.amp_lo" => self.amp_range.lo = parse_f64(value, key)?,
            "scene.amp_hi" => self.amp_range.hi = parse_f64(value, key)?,
            "train.n_signals" => self.n_signals = parse_usize(value, key)?,
            "train.epochs" => self.epochs = parse_usize(value, key)?,
            "train.batch_size" => self.batch_size = parse_usize(value, key)?,
            "train.lr" => self.lr = parse_f64(value, key)?,
            "train.adam_beta1" => self.adam_beta1 = parse_f64(value, key)?,
            "train.adam_beta2" => self.adam_beta2 = parse_f64(value, key)?,
            "train.adam_eps" => self.adam_eps = parse_f64(value, key)?,
            "train.max_sparsity" => self.max_sparsity = parse_f64(value, key)?,
            "train.snr_lo_db" => self.snr_range_db.lo = parse_f64(value, key)?,
            "train.snr_hi_db" => self.snr_range_db.hi = parse_f64(value, key)?,
            "train.holdout_signals" => self.holdout_signals = parse_usize(value, key)?,
            "iht.rank" => self.iht.rank = parse_usize(value, key)?,
            "iht.pencil" => self.iht.pencil = parse_usize(value, key)?,
            "iht.max_iters" => self.iht.max_iters = parse_usize(value, key)?,
            "iht.tol" => self.iht.tol = parse_f64(value, key)?,
            "iht.step" => self.iht.step = parse_f64(value, key)?,
            "iht.clamp_observed" => self.iht.clamp_observed = parse_bool(value, key)?,
            "sweep.snrs_db" => self.sweep_snrs_db = parse_list(value, key)?,
            "sweep.trials" => self.sweep_trials = parse_usize(value, key)?,
            "sweep.missing" => self.sweep_missing = parse_usize(value, key)?,
            "sweep.targets" => self.sweep_targets = parse_usize(value, key)?,
            "eval.bf_points" => self.bf_points = parse_usize(value, key)?,
            _ => {
                return Err(Error::invalid_argument(format!(
                    "unknown config key '{key}'"
                )))
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of the given base config. Blank
    /// lines and `#` comments are ignored; unknown keys are errors.
    pub fn parse_on(base: RunConfig, text: &str) -> Result<RunConfig> {
        let mut cfg = base;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid_argument(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                ))
            })?;
            cfg.apply(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        Self::parse_on(RunConfig::default(), text)
    }

    /// Renders the fully resolved configuration; `parse(echo(c)) == c`.
    pub fn echo(&self) -> String {
        let list = self
            .sweep_snrs_db
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "master_seed = {}\n\
             array.n_elements = {}\n\
             array.spacing_wl = {}\n\
             grid.fov_lo_deg = {}\n\
             grid.fov_hi_deg = {}\n\
             grid.bins = {}\n\
             tokens.sparsity_feature = {}\n\
             tokens.mask_channel = {}\n\
             net.embed_dim = {}\n\
             net.attn_dim = {}\n\
             net.hidden_dim = {}\n\
             net.residual = {}\n\
             net.layer_norm = {}\n\
             scene.k_max = {}\n\
             scene.amp_lo = {}\n\
             scene.amp_hi = {}\n\
             train.n_signals = {}\n\
             train.epochs = {}\n\
             train.batch_size = {}\n\
             train.lr = {}\n\
             train.adam_beta1 = {}\n\
             train.adam_beta2 = {}\n\
             train.adam_eps = {}\n\
             train.max_sparsity = {}\n\
             train.snr_lo_db = {}\n\
             train.snr_hi_db = {}\n\
             train.holdout_signals = {}\n\
             iht.rank = {}\n\
             iht.pencil = {}\n\
             iht.max_iters = {}\n\
             iht.tol = {}\n\
             iht.step = {}\n\
             iht.clamp_observed = {}\n\
             sweep.snrs_db = {}\n\
             sweep.trials = {}\n\
             sweep.missing = {}\n\
             sweep.targets = {}\n\
             eval.bf_points = {}\n",
            self.master_seed,
            self.n_elements,
            self.spacing_wl,
            self.fov_deg.lo,
            self.fov_deg.hi,
            self.grid_bins,
            self.tokens.sparsity_feature,
            self.tokens.mask_channel,
            self.net.embed_dim,
            self.net.attn_dim,
            self.net.hidden_dim,
            self.net.residual,
            self.net.layer_norm,
            self.scene_k_max,
            self.amp_range.lo,
            self.amp_range.hi,
            self.n_signals,
            self.epochs,
            self.batch_size,
            self.lr,
            self.adam_beta1,
            self.adam_beta2,
            self.adam_eps,
            self.max_sparsity,
            self.snr_range_db.lo,
            self.snr_range_db.hi,
            self.holdout_signals,
            self.iht.rank,
            self.iht.pencil,
            self.iht.max_iters,
            self.iht.tol,
            self.iht.step,
            self.iht.clamp_observed,
            list,
            self.sweep_trials,
            self.sweep_missing,
            self.sweep_targets,
            self.bf_points,
        )
    }
}
