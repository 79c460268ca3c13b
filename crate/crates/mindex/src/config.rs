//! Run configuration: defaults, TOML files, flag overrides and validation.
//!
//! Layers, lowest first: preset defaults, the config file, `--set key=value`
//! pairs, then dedicated flags such as `--seed`. The merged document is checked
//! against [`RunConfig`] (unknown keys are rejected with their path) and then
//! validated for numeric bounds.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use mindex_core::losses::{LossFunction, DEFAULT_HUBER_DELTA};
use mindex_core::network::Activation;
use mindex_core::targets::{HiddenSubspace, LinkFunction, MultiIndexTarget, SubspaceMode};
use mindex_core::trainer::{AdamConfig, PlanConstants, PlanOverrides};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("invalid config at `{key}`: {message}")]
    Schema { key: String, message: String },
    #[error("invalid value for `{key}`: {reason}")]
    Bound { key: String, reason: String },
    #[error("malformed override `{0}` (expected key=value)")]
    Override(String),
}

fn bound(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Bound {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Grids sized to finish in minutes on one machine.
    #[default]
    Desk,
    /// Finer grids, larger dimensions and more seeds.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Algorithm1,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Square,
    Huber,
    PseudoHuber,
    L1,
}

impl LossKind {
    pub fn build(self, delta: f64) -> mindex_core::Result<LossFunction> {
        match self {
            LossKind::Square => Ok(LossFunction::Square),
            LossKind::Huber => LossFunction::huber(delta),
            LossKind::PseudoHuber => LossFunction::pseudo_huber(delta),
            LossKind::L1 => Ok(LossFunction::L1),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LossKind::Square => "mse",
            LossKind::Huber => "huber",
            LossKind::PseudoHuber => "pseudo_huber",
            LossKind::L1 => "l1",
        }
    }

    pub fn id(self) -> u64 {
        self as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    LocallyQuadratic,
    Quadratic,
    Cosine,
    CubedSmooth,
}

impl From<ActivationKind> for Activation {
    fn from(k: ActivationKind) -> Self {
        match k {
            ActivationKind::LocallyQuadratic => Activation::LocallyQuadratic,
            ActivationKind::Quadratic => Activation::Quadratic,
            ActivationKind::Cosine => Activation::Cosine,
            ActivationKind::CubedSmooth => Activation::CubedSmooth,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    Quad2d,
    Hermite4sum,
    HermiteSingle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubspaceKind {
    AxisAligned,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetConfig {
    pub link: LinkKind,
    /// Degree for `hermite_single`.
    pub k: u32,
    pub subspace: SubspaceKind,
    pub subspace_seed: u64,
}

impl Default for TargetConfig {
    fn default() -> Self {
        TargetConfig {
            link: LinkKind::Quad2d,
            k: 2,
            subspace: SubspaceKind::AxisAligned,
            subspace_seed: 0,
        }
    }
}

impl TargetConfig {
    pub fn build(&self, d: usize, link: LinkKind) -> mindex_core::Result<MultiIndexTarget> {
        let link = match link {
            LinkKind::Quad2d => LinkFunction::Quad2d,
            LinkKind::Hermite4sum => LinkFunction::Hermite4Sum,
            LinkKind::HermiteSingle => LinkFunction::hermite_single(self.k)?,
        };
        let mode = match self.subspace {
            SubspaceKind::AxisAligned => SubspaceMode::AxisAligned,
            SubspaceKind::Random => SubspaceMode::Random {
                seed: self.subspace_seed,
            },
        };
        MultiIndexTarget::new(HiddenSubspace::new(d, link.arity(), mode)?, link)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamSection {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub stop_loss: Option<f64>,
}

impl Default for AdamSection {
    fn default() -> Self {
        let c = AdamConfig::default();
        AdamSection {
            lr: c.lr,
            batch: c.batch,
            epochs: c.epochs,
            stop_loss: None,
        }
    }
}

impl AdamSection {
    pub fn to_core(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            batch: self.batch,
            epochs: self.epochs,
            stop_loss: self.stop_loss,
            ..AdamConfig::default()
        }
    }
}

/// Closed-form stage-2 settings from user-supplied comparator bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedFormStage2 {
    pub j: f64,
    pub u: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralSection {
    pub n_mc: usize,
    /// Known rank; when absent the relative threshold `tau` is used.
    pub rank: Option<usize>,
    pub tau: f64,
}

impl Default for SpectralSection {
    fn default() -> Self {
        SpectralSection {
            n_mc: 1 << 20,
            rank: None,
            tau: mindex_core::spectral::DEFAULT_RANK_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub d_list: Vec<usize>,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_step: f64,
    pub eps_list: Vec<f64>,
    pub seeds: usize,
    pub m: usize,
    pub activation: ActivationKind,
    pub link: LinkKind,
    pub loss: LossKind,
}

impl SweepSection {
    fn for_preset(p: Preset) -> Self {
        let (d_list, step, seeds) = match p {
            Preset::Desk => (vec![32, 64, 128], 0.05, 5),
            Preset::Full => (vec![50, 100, 200, 500], 0.01, 10),
        };
        SweepSection {
            d_list,
            alpha_min: 1.1,
            alpha_max: 1.8,
            alpha_step: step,
            eps_list: vec![1.0, 0.1, 0.01],
            seeds,
            m: 4,
            activation: ActivationKind::Quadratic,
            link: LinkKind::Quad2d,
            loss: LossKind::Square,
        }
    }

    /// `alpha_min, alpha_min + step, …` up to `alpha_max` (inclusive, with a
    /// small tolerance for accumulated rounding).
    pub fn alpha_grid(&self) -> Vec<f64> {
        let count = ((self.alpha_max - self.alpha_min) / self.alpha_step + 1e-9).floor() as usize;
        (0..=count)
            .map(|i| {
                let a = self.alpha_min + i as f64 * self.alpha_step;
                (a * 1e9).round() / 1e9
            })
            .collect()
    }
}

impl Default for SweepSection {
    fn default() -> Self {
        Self::for_preset(Preset::Desk)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossCompareSection {
    pub d_list: Vec<usize>,
    pub ratios: Vec<f64>,
    pub losses: Vec<LossKind>,
    pub seeds: usize,
    pub m: usize,
    pub activation: ActivationKind,
    pub link: LinkKind,
}

impl LossCompareSection {
    fn for_preset(p: Preset) -> Self {
        let (d_list, seeds) = match p {
            Preset::Desk => (vec![100, 200], 5),
            Preset::Full => (vec![100, 200, 500], 10),
        };
        LossCompareSection {
            d_list,
            ratios: vec![5.0, 10.0, 20.0, 40.0, 80.0],
            losses: vec![LossKind::Square, LossKind::Huber],
            seeds,
            m: 4,
            activation: ActivationKind::Cosine,
            link: LinkKind::Hermite4sum,
        }
    }
}

impl Default for LossCompareSection {
    fn default() -> Self {
        Self::for_preset(Preset::Desk)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub d: usize,
    pub log2_n_min: u32,
    pub log2_n_max: u32,
    pub seeds: usize,
    pub n_mc: usize,
    pub loss: LossKind,
    pub link: LinkKind,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            d: 64,
            log2_n_min: 8,
            log2_n_max: 14,
            seeds: 20,
            n_mc: 1 << 20,
            loss: LossKind::Huber,
            link: LinkKind::Quad2d,
        }
    }
}

impl NoiseSection {
    pub fn n_grid(&self) -> Vec<usize> {
        (self.log2_n_min..=self.log2_n_max).map(|k| 1usize << k).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerSection {
    pub d: usize,
    /// Samples; defaults to `32·d`.
    pub n: Option<usize>,
    pub t1_list: Vec<usize>,
    /// Multipliers applied to the default initialization radius.
    pub eps0_scales: Vec<f64>,
    pub seeds: usize,
    pub n_mc: usize,
    pub m: usize,
    pub activation: ActivationKind,
    pub link: LinkKind,
    pub loss: LossKind,
}

impl Default for PowerSection {
    fn default() -> Self {
        PowerSection {
            d: 64,
            n: None,
            t1_list: vec![3],
            eps0_scales: vec![1.0, 0.5],
            seeds: 3,
            n_mc: 1 << 18,
            m: 8,
            activation: ActivationKind::CubedSmooth,
            link: LinkKind::Quad2d,
            loss: LossKind::Square,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApproxSection {
    pub k_max: u32,
    pub grid: usize,
    pub quad_order: usize,
}

impl Default for ApproxSection {
    fn default() -> Self {
        ApproxSection {
            k_max: 6,
            grid: 101,
            quad_order: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub preset: Preset,
    pub mode: Mode,
    pub loss: LossKind,
    pub loss_delta: f64,
    pub activation: ActivationKind,
    pub d: usize,
    /// Samples per stage; defaults to `⌈4·d^1.5⌉`.
    pub n: Option<usize>,
    pub m: usize,
    pub kappa: f64,
    pub eta1: Option<f64>,
    pub beta1: Option<f64>,
    #[serde(rename = "T1")]
    pub t1: Option<usize>,
    pub eps0: Option<f64>,
    pub eta2: Option<f64>,
    pub beta2: f64,
    #[serde(rename = "T2")]
    pub t2: usize,
    pub t2_tol: f64,
    pub c_eta: f64,
    pub d_const: f64,
    pub c_eps: f64,
    pub stage2_closed_form: Option<ClosedFormStage2>,
    /// Center the preprocessing values before forming `Σ̂_ℓ`.
    pub center: bool,
    /// Shift the stage-1 labels so the preprocessing values average to zero.
    pub balance_labels: bool,
    pub n_test: usize,
    pub snapshots: bool,
    pub target: TargetConfig,
    pub adam: AdamSection,
    pub spectral: SpectralSection,
    pub sweep: SweepSection,
    pub loss_compare: LossCompareSection,
    pub noise: NoiseSection,
    pub power: PowerSection,
    pub approx: ApproxSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_preset(Preset::Desk)
    }
}

impl RunConfig {
    pub fn for_preset(preset: Preset) -> Self {
        let c = PlanConstants::default();
        RunConfig {
            seed: 0,
            output_dir: PathBuf::from("mindex-out"),
            preset,
            mode: Mode::Algorithm1,
            loss: LossKind::Square,
            loss_delta: DEFAULT_HUBER_DELTA,
            activation: ActivationKind::CubedSmooth,
            d: 64,
            n: None,
            m: 8,
            kappa: 1.0,
            eta1: None,
            beta1: None,
            t1: None,
            eps0: None,
            eta2: None,
            beta2: mindex_core::trainer::DEFAULT_BETA2,
            t2: mindex_core::trainer::DEFAULT_T2,
            t2_tol: mindex_core::trainer::DEFAULT_T2_TOL,
            c_eta: c.c_eta,
            d_const: c.d_const,
            c_eps: c.c_eps,
            stage2_closed_form: None,
            center: true,
            balance_labels: true,
            n_test: mindex_core::metrics::DEFAULT_TEST_SAMPLES,
            snapshots: false,
            target: TargetConfig::default(),
            adam: AdamSection::default(),
            spectral: SpectralSection::default(),
            sweep: SweepSection::for_preset(preset),
            loss_compare: LossCompareSection::for_preset(preset),
            noise: NoiseSection::default(),
            power: PowerSection::default(),
            approx: ApproxSection::default(),
        }
    }

    pub fn n_samples(&self) -> usize {
        self.n
            .unwrap_or_else(|| (4.0 * (self.d as f64).powf(1.5)).ceil() as usize)
    }

    pub fn loss_function(&self) -> mindex_core::Result<LossFunction> {
        self.loss.build(self.loss_delta)
    }

    pub fn plan_overrides(&self) -> PlanOverrides {
        PlanOverrides {
            t1: self.t1,
            eta1: self.eta1,
            beta1: self.beta1,
            eps0: self.eps0,
            eta2: self.eta2,
            beta2: Some(self.beta2),
            t2: Some(self.t2),
            constants: Some(PlanConstants {
                c_eta: self.c_eta,
                d_const: self.d_const,
                c_eps: self.c_eps,
            }),
        }
    }

    pub fn target_for(&self, d: usize) -> mindex_core::Result<MultiIndexTarget> {
        self.target.build(d, self.target.link)
    }

    /// Checks every numeric bound, naming the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn pos(key: &str, v: f64) -> Result<(), ConfigError> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(bound(key, format!("must be positive and finite, got {v}")))
            }
        }
        fn nonneg(key: &str, v: f64) -> Result<(), ConfigError> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(bound(key, format!("must be non-negative and finite, got {v}")))
            }
        }
        fn count(key: &str, v: usize, min: usize) -> Result<(), ConfigError> {
            if v >= min {
                Ok(())
            } else {
                Err(bound(key, format!("must be at least {min}, got {v}")))
            }
        }
        fn even(key: &str, v: usize) -> Result<(), ConfigError> {
            if v >= 2 && v % 2 == 0 {
                Ok(())
            } else {
                Err(bound(key, format!("must be a positive even count, got {v}")))
            }
        }
        fn nonempty<T>(key: &str, v: &[T]) -> Result<(), ConfigError> {
            if v.is_empty() {
                Err(bound(key, "must not be empty"))
            } else {
                Ok(())
            }
        }

        pos("loss_delta", self.loss_delta)?;
        count("d", self.d, 2)?;
        if let Some(n) = self.n {
            count("n", n, 1)?;
        }
        even("m", self.m)?;
        if !(self.kappa >= 1.0 && self.kappa.is_finite()) {
            return Err(bound("kappa", format!("must be at least 1, got {}", self.kappa)));
        }
        if let Some(v) = self.eta1 {
            pos("eta1", v)?;
        }
        if let Some(v) = self.beta1 {
            nonneg("beta1", v)?;
        }
        if let Some(v) = self.t1 {
            count("T1", v, 1)?;
        }
        if let Some(v) = self.eps0 {
            pos("eps0", v)?;
        }
        if let Some(v) = self.eta2 {
            nonneg("eta2", v)?;
        }
        nonneg("beta2", self.beta2)?;
        count("T2", self.t2, 1)?;
        nonneg("t2_tol", self.t2_tol)?;
        pos("c_eta", self.c_eta)?;
        pos("d_const", self.d_const)?;
        pos("c_eps", self.c_eps)?;
        if let Some(cf) = &self.stage2_closed_form {
            pos("stage2_closed_form.j", cf.j)?;
            pos("stage2_closed_form.u", cf.u)?;
        }
        count("n_test", self.n_test, 1)?;
        if self.target.link == LinkKind::HermiteSingle {
            count("target.k", self.target.k as usize, 1)?;
        }

        nonneg("adam.lr", self.adam.lr)?;
        count("adam.batch", self.adam.batch, 1)?;
        count("adam.epochs", self.adam.epochs, 1)?;
        if let Some(s) = self.adam.stop_loss {
            nonneg("adam.stop_loss", s)?;
        }

        count("spectral.n_mc", self.spectral.n_mc, mindex_core::spectral::MIN_MC_SAMPLES)?;
        if let Some(r) = self.spectral.rank {
            if r > self.d {
                return Err(bound("spectral.rank", format!("must not exceed d = {}", self.d)));
            }
        }
        if !(self.spectral.tau > 0.0 && self.spectral.tau <= 1.0) {
            return Err(bound("spectral.tau", "must lie in (0, 1]"));
        }

        let s = &self.sweep;
        nonempty("sweep.d_list", &s.d_list)?;
        for &d in &s.d_list {
            count("sweep.d_list", d, 2)?;
        }
        pos("sweep.alpha_min", s.alpha_min)?;
        pos("sweep.alpha_step", s.alpha_step)?;
        if s.alpha_max < s.alpha_min {
            return Err(bound("sweep.alpha_max", "must be at least sweep.alpha_min"));
        }
        nonempty("sweep.eps_list", &s.eps_list)?;
        for &e in &s.eps_list {
            pos("sweep.eps_list", e)?;
        }
        count("sweep.seeds", s.seeds, 1)?;
        count("sweep.m", s.m, 1)?;

        let l = &self.loss_compare;
        nonempty("loss_compare.d_list", &l.d_list)?;
        for &d in &l.d_list {
            count("loss_compare.d_list", d, 2)?;
        }
        nonempty("loss_compare.ratios", &l.ratios)?;
        for &r in &l.ratios {
            pos("loss_compare.ratios", r)?;
        }
        nonempty("loss_compare.losses", &l.losses)?;
        count("loss_compare.seeds", l.seeds, 1)?;
        count("loss_compare.m", l.m, 1)?;

        let n = &self.noise;
        count("noise.d", n.d, 2)?;
        if n.log2_n_max < n.log2_n_min || n.log2_n_max > 30 {
            return Err(bound(
                "noise.log2_n_max",
                "must lie between noise.log2_n_min and 30",
            ));
        }
        if n.log2_n_max == n.log2_n_min {
            return Err(bound("noise.log2_n_max", "need at least two sample sizes"));
        }
        count("noise.seeds", n.seeds, 1)?;
        count("noise.n_mc", n.n_mc, mindex_core::spectral::MIN_MC_SAMPLES)?;

        let p = &self.power;
        count("power.d", p.d, 2)?;
        if let Some(v) = p.n {
            count("power.n", v, 1)?;
        }
        nonempty("power.t1_list", &p.t1_list)?;
        for &t in &p.t1_list {
            count("power.t1_list", t, 1)?;
        }
        nonempty("power.eps0_scales", &p.eps0_scales)?;
        for &e in &p.eps0_scales {
            pos("power.eps0_scales", e)?;
        }
        count("power.seeds", p.seeds, 1)?;
        count("power.n_mc", p.n_mc, mindex_core::spectral::MIN_MC_SAMPLES)?;
        even("power.m", p.m)?;

        count("approx.grid", self.approx.grid, 1)?;
        count("approx.quad_order", self.approx.quad_order, 4)?;
        Ok(())
    }
}

/// Where a configuration document comes from.
#[derive(Clone, Debug, Default)]
pub struct ConfigSource {
    /// TOML config, or a JSON report whose `effective_config` is reused.
    pub file: Option<PathBuf>,
    /// `key=value` pairs; dotted keys address sections (`adam.lr=0.01`).
    pub sets: Vec<String>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

fn read_document(path: &Path) -> Result<Value, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let syntax = |message: String| ConfigError::Syntax {
        path: path.to_path_buf(),
        message,
    };
    if path.extension().is_some_and(|e| e == "json") {
        let mut v: Value = serde_json::from_str(&text).map_err(|e| syntax(e.to_string()))?;
        match v.get_mut("effective_config") {
            Some(cfg) => Ok(cfg.take()),
            None => Err(syntax("JSON input has no `effective_config`".into())),
        }
    } else {
        let table: toml::Table = toml::from_str(&text).map_err(|e| syntax(e.to_string()))?;
        serde_json::to_value(table).map_err(|e| syntax(e.to_string()))
    }
}

/// Parses the right-hand side of `key=value` as a TOML value, falling back to a
/// bare string.
fn parse_override_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t
            .remove("v")
            .and_then(|v| serde_json::to_value(v).ok())
            .unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<(), ConfigError> {
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(ConfigError::Override(key.to_string()));
        }
        if !cur.is_object() {
            return Err(ConfigError::Schema {
                key: parts[..i].join("."),
                message: "is not a section".into(),
            });
        }
        let map = cur.as_object_mut().expect("checked above");
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        cur = map
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

/// Recursively overlays `top` on `base`.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Builds the effective configuration from all layers.
pub fn parse_config(src: &ConfigSource) -> Result<RunConfig, ConfigError> {
    let mut user = match &src.file {
        Some(p) => read_document(p)?,
        None => Value::Object(Map::new()),
    };
    for s in &src.sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| ConfigError::Override(s.clone()))?;
        set_path(&mut user, k.trim(), parse_override_value(v.trim()))?;
    }
    if let Some(seed) = src.seed {
        set_path(&mut user, "seed", Value::from(seed))?;
    }
    if let Some(dir) = &src.output_dir {
        set_path(&mut user, "output_dir", Value::from(dir.to_string_lossy().into_owned()))?;
    }

    let preset: Preset = match user.get("preset") {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| ConfigError::Schema {
            key: "preset".into(),
            message: e.to_string(),
        })?,
        None => Preset::Desk,
    };
    let mut doc = serde_json::to_value(RunConfig::for_preset(preset)).map_err(|e| {
        ConfigError::Schema {
            key: String::new(),
            message: e.to_string(),
        }
    })?;
    merge(&mut doc, user);

    let cfg: RunConfig = serde_path_to_error::deserialize(doc).map_err(|e| ConfigError::Schema {
        key: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match serde_json::to_string_pretty(self) {
            Ok(s) => f.write_str(&s),
            Err(_) => Err(fmt::Error),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(ext: &str, body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn empty_file_gives_defaults() {
        let f = write_temp(".toml", "");
        let cfg = parse_config(&ConfigSource {
            file: Some(f.path().into()),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn flag_seed_beats_file_seed() {
        let f = write_temp(".toml", "seed = 3\n");
        let cfg = parse_config(&ConfigSource {
            file: Some(f.path().into()),
            seed: Some(7),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn negative_rate_names_the_key() {
        let f = write_temp(".toml", "eta1 = -1\n");
        let err = parse_config(&ConfigSource {
            file: Some(f.path().into()),
            ..Default::default()
        })
        .unwrap_err();
        assert!(err.to_string().contains("eta1"), "{err}");
    }

    #[test]
    fn unknown_and_mistyped_keys_are_rejected_with_their_path() {
        let f = write_temp(".toml", "[adam]\nlearning_rate = 0.1\n");
        let err = parse_config(&ConfigSource {
            file: Some(f.path().into()),
            ..Default::default()
        })
        .unwrap_err();
        assert!(err.to_string().contains("adam"), "{err}");
        let err = parse_config(&ConfigSource {
            sets: vec!["m = \"four\"".into()],
            ..Default::default()
        })
        .unwrap_err();
        assert!(err.to_string().contains('m'), "{err}");
    }

    #[test]
    fn dotted_overrides_reach_sections() {
        let cfg = parse_config(&ConfigSource {
            sets: vec!["adam.lr=0.01".into(), "loss=\"huber\"".into(), "T1=2".into()],
            ..Default::default()
        })
        .unwrap();
        assert_eq!(cfg.adam.lr, 0.01);
        assert_eq!(cfg.loss, LossKind::Huber);
        assert_eq!(cfg.t1, Some(2));
        // bare strings need no quotes
        let cfg = parse_config(&ConfigSource {
            sets: vec!["activation=cosine".into()],
            ..Default::default()
        })
        .unwrap();
        assert_eq!(cfg.activation, ActivationKind::Cosine);
    }

    #[test]
    fn full_preset_changes_grid_defaults_only_where_unset() {
        let cfg = parse_config(&ConfigSource {
            sets: vec!["preset=\"full\"".into(), "sweep.seeds=2".into()],
            ..Default::default()
        })
        .unwrap();
        assert_eq!(cfg.sweep.alpha_step, 0.01);
        assert_eq!(cfg.sweep.seeds, 2);
        assert_eq!(cfg.loss_compare.d_list, vec![100, 200, 500]);
    }

    #[test]
    fn report_json_round_trips() {
        let cfg = RunConfig {
            seed: 42,
            d: 16,
            ..RunConfig::default()
        };
        let doc = serde_json::json!({ "schema_version": 1, "effective_config": cfg, "results": {} });
        let f = write_temp(".json", &doc.to_string());
        let back = parse_config(&ConfigSource {
            file: Some(f.path().into()),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn alpha_grid_is_inclusive() {
        let g = SweepSection::default().alpha_grid();
        assert_eq!(g.len(), 15);
        assert_eq!(g[0], 1.1);
        assert_eq!(*g.last().unwrap(), 1.8);
    }
}
