//! Layer-wise training and the joint Adam baseline.
//!
//! Stage 1 runs `T₁` full-batch gradient steps on the first layer from a symmetric
//! initialization of radius `ε₀`, with weight decay `β₁`; the last step uses the
//! rate `η₁/ε₀` and decay `β₁ε₀`. The biases are then redrawn uniformly on
//! `[−3, 3]`, the output weights reset, and stage 2 fits the output weights by
//! ridge-regularized gradient descent on an independent sample.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
#[allow(unused_imports)] // shadowed by std float methods when std is linked
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix, SymMatrix};
use crate::losses::{self, LossFunction};
use crate::metrics::{self, ErrorMetric, RecoveryReport, DEFAULT_TEST_SAMPLES};
use crate::network::{self, Activation, Batch, Gradients, NetworkParams};
use crate::rng;
use crate::spectral;
use crate::targets::{generate_dataset, Dataset, MultiIndexTarget};

/// Offsets used to split one master seed into independent streams.
pub mod streams {
    pub const STAGE1_DATA: u64 = 1;
    pub const STAGE2_DATA: u64 = 2;
    pub const INIT: u64 = 3;
    pub const REINIT: u64 = 4;
    pub const TEST: u64 = 5;
    pub const SHUFFLE: u64 = 6;
}

pub const BIAS_RANGE: f64 = 3.0;
pub const EPS0_FLOOR: f64 = 1e-150;
pub const EPS0_CAP: f64 = 1e-3;

/// Constants in the default learning rate and initialization radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanConstants {
    pub c_eta: f64,
    pub d_const: f64,
    pub c_eps: f64,
}

impl Default for PlanConstants {
    fn default() -> Self {
        PlanConstants {
            c_eta: 4.0,
            d_const: 4.0,
            c_eps: 1.0,
        }
    }
}

/// Stage-1 weight decay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Decay {
    /// `β₁ = 1/η₁`: each step discards the previous features entirely.
    Coupled,
    Value(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSize {
    /// `1/(ℓ''_max·λ_max(ΦᵀΦ/n) + β₂)`, halved while the objective increases.
    Auto,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainPlan {
    pub m: usize,
    pub t1: usize,
    pub eta1: f64,
    pub decay1: Decay,
    pub eps0: f64,
    pub eta2: StepSize,
    pub beta2: f64,
    /// Maximum number of stage-2 steps.
    pub t2: usize,
    /// Stage 2 stops once the relative objective change falls below this.
    pub t2_tol: f64,
    pub constants: PlanConstants,
    /// Shift the stage-1 labels so that `mean ℓ'(0, y − c) = 0`.
    pub balance_labels: bool,
    pub n_test: usize,
}

pub const DEFAULT_BETA2: f64 = 1e-3;
pub const DEFAULT_T2: usize = 10_000;
pub const DEFAULT_T2_TOL: f64 = 1e-6;

impl TrainPlan {
    pub fn beta1(&self) -> f64 {
        match self.decay1 {
            Decay::Coupled => 1.0 / self.eta1,
            Decay::Value(b) => b,
        }
    }

    /// `1 − η₁β₁`, the fraction of the old features kept by each step (and by the
    /// rescaled final step, whose rate and decay carry reciprocal factors).
    fn keep1(&self) -> f64 {
        match self.decay1 {
            Decay::Coupled => 0.0,
            Decay::Value(b) => 1.0 - self.eta1 * b,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m % 2 != 0 {
            return Err(Error::param("m", format!("must be a positive even count, got {}", self.m)));
        }
        if self.t1 == 0 {
            return Err(Error::param("T1", "must be at least 1"));
        }
        positive("eta1", self.eta1)?;
        positive("eps0", self.eps0)?;
        if let Decay::Value(b) = self.decay1 {
            nonnegative("beta1", b)?;
        }
        if let StepSize::Fixed(e) = self.eta2 {
            nonnegative("eta2", e)?;
        }
        nonnegative("beta2", self.beta2)?;
        if self.t2 == 0 {
            return Err(Error::param("T2", "must be at least 1"));
        }
        nonnegative("t2_tol", self.t2_tol)?;
        if self.n_test == 0 {
            return Err(Error::param("n_test", "must be at least 1"));
        }
        Ok(())
    }

    /// Replaces the stage-2 settings with `η₂ = U²/(L√m U² + 2J)`, `β₂ = J/U²`,
    /// where `J` and `U` bound the comparator's complexity and norm and `L` is the
    /// loss-derivative bound.
    pub fn with_closed_form_stage2(mut self, j: f64, u: f64, lip: f64) -> Result<Self> {
        positive("J", j)?;
        positive("U", u)?;
        positive("L", lip)?;
        let u2 = u * u;
        self.eta2 = StepSize::Fixed(u2 / (lip * (self.m as f64).sqrt() * u2 + 2.0 * j));
        self.beta2 = j / u2;
        Ok(self)
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::param(name, format!("must be positive and finite, got {v}")));
    }
    Ok(())
}

fn nonnegative(name: &'static str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::param(name, format!("must be non-negative and finite, got {v}")));
    }
    Ok(())
}

/// Something worth telling the user that does not stop the run.
#[derive(Clone, Debug, PartialEq)]
pub enum Warning {
    Eps0Floored { formula: f64, floor: f64 },
    NormGrowth { step: usize, observed: f64, bound: f64 },
    Stage2Unconverged { steps: usize, last_change: f64 },
    NonFinite { stage: u8 },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::Eps0Floored { formula, floor } => write!(
                f,
                "initialization radius {formula:e} underflows; using {floor:e}"
            ),
            Warning::NormGrowth { step, observed, bound } => write!(
                f,
                "max neuron norm {observed:e} after step {step} exceeds {bound:e}"
            ),
            Warning::Stage2Unconverged { steps, last_change } => write!(
                f,
                "stage 2 stopped after {steps} steps with relative change {last_change:e}"
            ),
            Warning::NonFinite { stage } => write!(f, "non-finite parameters after stage {stage}"),
        }
    }
}

/// `⌈√(ln d / ln κ)⌉`, or `⌈√(ln d)⌉` when `κ = 1`; at least 1.
pub fn default_t1(d: usize, kappa: f64) -> Result<usize> {
    if d < 2 {
        return Err(Error::param("d", format!("must be at least 2, got {d}")));
    }
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::param("kappa", format!("must be at least 1, got {kappa}")));
    }
    let ld = (d as f64).ln();
    let ratio = if kappa == 1.0 { ld } else { ld / kappa.ln() };
    Ok((ratio.sqrt().ceil() as usize).max(1))
}

/// `(1/C_η)·(d/(r ι²))^{1/(2T₁)}` with `ι = 4 D ln d`.
pub fn default_eta1(d: usize, r: usize, t1: usize, c: &PlanConstants) -> f64 {
    let iota = 4.0 * c.d_const * (d as f64).ln();
    let base = d as f64 / (r as f64 * iota * iota);
    base.powf(1.0 / (2.0 * t1 as f64)) / c.c_eta
}

/// `min(cap, (4/5)^{T₁} / (C_ε m √n d^{7/2}))`, floored at [`EPS0_FLOOR`].
pub fn default_eps0(
    m: usize,
    n: usize,
    d: usize,
    t1: usize,
    c: &PlanConstants,
) -> (f64, Option<Warning>) {
    let denom = c.c_eps * m as f64 * (n as f64).sqrt() * (d as f64).powf(3.5);
    let formula = (0.8f64.powi(t1 as i32) / denom).min(EPS0_CAP);
    if formula < EPS0_FLOOR || !formula.is_finite() {
        (
            EPS0_FLOOR,
            Some(Warning::Eps0Floored {
                formula,
                floor: EPS0_FLOOR,
            }),
        )
    } else {
        (formula, None)
    }
}

/// Optional user choices layered over the derived defaults.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlanOverrides {
    pub t1: Option<usize>,
    pub eta1: Option<f64>,
    pub beta1: Option<f64>,
    pub eps0: Option<f64>,
    pub eta2: Option<f64>,
    pub beta2: Option<f64>,
    pub t2: Option<usize>,
    pub constants: Option<PlanConstants>,
}

/// Fills a plan for a problem of dimension `d`, rank `r`, condition number `kappa`,
/// `n` samples per stage and width `m`.
pub fn default_hyperparams(
    d: usize,
    kappa: f64,
    r: usize,
    n: usize,
    m: usize,
    ov: &PlanOverrides,
) -> Result<(TrainPlan, Vec<Warning>)> {
    if r == 0 || r > d {
        return Err(Error::param("r", format!("must lie in 1..={d}, got {r}")));
    }
    let c = ov.constants.unwrap_or_default();
    positive("C_eta", c.c_eta)?;
    positive("D", c.d_const)?;
    positive("C_eps", c.c_eps)?;
    let t1_default = default_t1(d, kappa)?;
    let t1 = ov.t1.unwrap_or(t1_default);
    if t1 == 0 {
        return Err(Error::param("T1", "must be at least 1"));
    }
    let eta1 = ov.eta1.unwrap_or_else(|| default_eta1(d, r, t1, &c));
    let mut warnings = Vec::new();
    let eps0 = match ov.eps0 {
        Some(e) => e,
        None => {
            let (e, w) = default_eps0(m, n, d, t1, &c);
            warnings.extend(w);
            e
        }
    };
    let plan = TrainPlan {
        m,
        t1,
        eta1,
        decay1: ov.beta1.map_or(Decay::Coupled, Decay::Value),
        eps0,
        eta2: ov.eta2.map_or(StepSize::Auto, StepSize::Fixed),
        beta2: ov.beta2.unwrap_or(DEFAULT_BETA2),
        t2: ov.t2.unwrap_or(DEFAULT_T2),
        t2_tol: DEFAULT_T2_TOL,
        constants: c,
        balance_labels: true,
        n_test: DEFAULT_TEST_SAMPLES,
    };
    plan.validate()?;
    Ok((plan, warnings))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage1Output {
    pub params: NetworkParams,
    /// Mean loss before each step.
    pub losses: Vec<f64>,
    /// `W` after each step, when requested.
    pub snapshots: Vec<Matrix>,
    pub warnings: Vec<Warning>,
}

/// Stage 1: `T₁` full-batch steps on `W`; `a` and `b` are not touched.
pub fn train_stage1(
    params: &NetworkParams,
    data: &Dataset,
    act: Activation,
    loss: &LossFunction,
    plan: &TrainPlan,
    snapshot: bool,
) -> Result<Stage1Output> {
    if plan.t1 == 0 {
        return Err(Error::param("T1", "must be at least 1"));
    }
    positive("eta1", plan.eta1)?;
    positive("eps0", plan.eps0)?;
    let batch = Batch::full(data)?;
    let mut p = params.clone();
    let mut g = Gradients::zeros(p.m(), p.d());
    let keep = plan.keep1();
    let d = p.d() as f64;
    let mut losses = Vec::with_capacity(plan.t1);
    let mut snapshots = Vec::new();
    let mut warnings = Vec::new();
    for t in 0..plan.t1 {
        network::gradients_into(&p, act, loss, &batch, &mut g)?;
        losses.push(g.loss);
        let last = t + 1 == plan.t1;
        let rate = if last { plan.eta1 / plan.eps0 } else { plan.eta1 };
        for (w, gr) in p.w.as_mut_slice().iter_mut().zip(g.w.as_slice()) {
            *w = keep * *w - rate * gr;
        }
        if !last {
            let bound = d.powf((t + 1) as f64 / (2.0 * plan.t1 as f64)) * plan.eps0;
            let observed = p.max_row_norm();
            if observed > bound {
                warnings.push(Warning::NormGrowth {
                    step: t + 1,
                    observed,
                    bound,
                });
            }
        }
        if snapshot {
            snapshots.push(p.w.clone());
        }
    }
    if !p.is_finite() {
        warnings.push(Warning::NonFinite { stage: 1 });
    }
    Ok(Stage1Output {
        params: p,
        losses,
        snapshots,
        warnings,
    })
}

/// Redraws `b` uniformly on `[−3, 3]` and restores `a` to `a_init`.
pub fn reinit_second_stage(params: &NetworkParams, a_init: &[f64], seed: u64) -> Result<NetworkParams> {
    if a_init.len() != params.m() {
        return Err(Error::dim(format!(
            "{} initial output weights for width {}",
            a_init.len(),
            params.m()
        )));
    }
    let mut g = rng::seeded(seed);
    let mut p = params.clone();
    for b in &mut p.b {
        *b = g.random_range(-BIAS_RANGE..=BIAS_RANGE);
    }
    p.a.copy_from_slice(a_init);
    Ok(p)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage2Output {
    pub params: NetworkParams,
    /// Ridge objective before the first step and after each step.
    pub objective: Vec<f64>,
    pub steps: usize,
    pub eta2: f64,
    pub warnings: Vec<Warning>,
}

/// `n × m` matrix of hidden activations `σ(w_jᵀx_i + b_j)`.
pub fn feature_matrix(params: &NetworkParams, act: Activation, x: &Matrix) -> Matrix {
    let m = params.m();
    let mut phi = Matrix::zeros(x.rows(), m);
    for (i, xi) in x.row_iter().enumerate() {
        let row = phi.row_mut(i);
        for j in 0..m {
            row[j] = act.eval(dot(params.w.row(j), xi) + params.b[j]);
        }
    }
    phi
}

struct Ridge<'a> {
    phi: &'a Matrix,
    y: &'a [f64],
    loss: &'a LossFunction,
    beta: f64,
}

impl Ridge<'_> {
    fn objective(&self, a: &[f64]) -> f64 {
        let n = self.y.len() as f64;
        let fit: f64 = self
            .phi
            .row_iter()
            .zip(self.y)
            .map(|(row, &y)| self.loss.value(dot(row, a), y))
            .sum();
        fit / n + 0.5 * self.beta * dot(a, a)
    }

    fn gradient(&self, a: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let n = self.y.len() as f64;
        for (row, &y) in self.phi.row_iter().zip(self.y) {
            let g = self.loss.d1(dot(row, a), y);
            if g != 0.0 {
                for (o, f) in out.iter_mut().zip(row) {
                    *o += g * f;
                }
            }
        }
        for (o, ai) in out.iter_mut().zip(a) {
            *o = *o / n + self.beta * ai;
        }
    }
}

/// Stage 2: gradient descent on `a` for `L̂(a) + (β₂/2)‖a‖²`; `W` and `b` fixed.
pub fn train_stage2(
    params: &NetworkParams,
    data: &Dataset,
    act: Activation,
    loss: &LossFunction,
    plan: &TrainPlan,
) -> Result<Stage2Output> {
    if data.d() != params.d() {
        return Err(Error::dim(format!(
            "data in R^{} for a network on R^{}",
            data.d(),
            params.d()
        )));
    }
    nonnegative("beta2", plan.beta2)?;
    let phi = feature_matrix(params, act, &data.x);
    let ridge = Ridge {
        phi: &phi,
        y: &data.y,
        loss,
        beta: plan.beta2,
    };
    let (mut eta, backtrack) = match plan.eta2 {
        StepSize::Fixed(e) => {
            nonnegative("eta2", e)?;
            (e, false)
        }
        StepSize::Auto => {
            let mut gram = phi.transpose().matmul(&phi)?;
            gram.scale(1.0 / data.len() as f64);
            let top = SymMatrix::from_matrix(&gram)?.op_norm()?;
            (1.0 / (loss.curvature_bound() * top + plan.beta2).max(f64::MIN_POSITIVE), true)
        }
    };

    let mut p = params.clone();
    let m = p.m();
    let mut grad = alloc::vec![0.0; m];
    let mut trial = alloc::vec![0.0; m];
    let mut current = ridge.objective(&p.a);
    let mut objective = alloc::vec![current];
    let mut warnings = Vec::new();
    let mut last_change = f64::INFINITY;
    let mut steps = 0;
    while steps < plan.t2 {
        ridge.gradient(&p.a, &mut grad);
        let mut next;
        loop {
            for ((t, a), g) in trial.iter_mut().zip(&p.a).zip(&grad) {
                *t = a - eta * g;
            }
            next = ridge.objective(&trial);
            if !backtrack || next <= current || eta < 1e-300 {
                break;
            }
            eta *= 0.5;
        }
        p.a.copy_from_slice(&trial);
        steps += 1;
        objective.push(next);
        last_change = (current - next).abs() / current.abs().max(f64::MIN_POSITIVE);
        current = next;
        if last_change < plan.t2_tol {
            break;
        }
    }
    if last_change >= plan.t2_tol && plan.t2_tol > 0.0 {
        warnings.push(Warning::Stage2Unconverged { steps, last_change });
    }
    if !p.is_finite() {
        warnings.push(Warning::NonFinite { stage: 2 });
    }
    Ok(Stage2Output {
        params: p,
        objective,
        steps,
        eta2: eta,
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub params: NetworkParams,
    /// First-layer features at the end of stage 1.
    pub features: Matrix,
    pub stage1_losses: Vec<f64>,
    pub stage2_objective: Vec<f64>,
    pub stage2_steps: usize,
    pub eta2_used: f64,
    pub snapshots: Vec<Matrix>,
    /// Shift subtracted from the stage-1 labels.
    pub label_shift: f64,
    /// `Σ̂_ℓ` eigenvalues from the stage-1 sample, by magnitude.
    pub eigenvalues: Vec<f64>,
    pub recovery: RecoveryReport,
    pub test_mse: f64,
    pub null_mse: Option<f64>,
    pub plan: TrainPlan,
    pub seed: u64,
    pub warnings: Vec<Warning>,
}

impl TrainReport {
    pub fn warning_messages(&self) -> Vec<String> {
        self.warnings.iter().map(|w| format!("{w}")).collect()
    }
}

/// Init, stage 1 on one sample, reinit, stage 2 on an independent sample, and a
/// fresh test set; all seeds are derived from `seed`.
pub fn run_algorithm1(
    target: &MultiIndexTarget,
    n: usize,
    act: Activation,
    loss: &LossFunction,
    plan: &TrainPlan,
    seed: u64,
    snapshot: bool,
) -> Result<TrainReport> {
    plan.validate()?;
    let d = target.d();
    let d1 = generate_dataset(target, n, rng::derive_seed(seed, streams::STAGE1_DATA))?;
    let d2 = generate_dataset(target, n, rng::derive_seed(seed, streams::STAGE2_DATA))?;

    let label_shift = if plan.balance_labels {
        losses::balancing_shift(loss, &d1.y)?
    } else {
        0.0
    };
    let d1 = if label_shift != 0.0 {
        d1.with_shifted_labels(label_shift)
    } else {
        d1
    };

    let pre = losses::preprocess(loss, &d1.y, true)?;
    let sigma = spectral::empirical_sigma(&d1.x, pre.values())?;
    let eigenvalues = spectral::eigen_report(&sigma, spectral::RankRule::default())?.eigenvalues;

    let init = network::init_symmetric(plan.m, d, plan.eps0, rng::derive_seed(seed, streams::INIT))?;
    let s1 = train_stage1(&init, &d1, act, loss, plan, snapshot)?;
    let features = s1.params.w.clone();
    let re = reinit_second_stage(&s1.params, &init.a, rng::derive_seed(seed, streams::REINIT))?;
    let s2 = train_stage2(&re, &d2, act, loss, plan)?;

    let recovery = metrics::recovery_report(&features, target.subspace())?;
    let test_mse = metrics::test_error(
        &s2.params,
        act,
        target,
        ErrorMetric::Mse,
        plan.n_test,
        rng::derive_seed(seed, streams::TEST),
    )?;
    let mut warnings = s1.warnings;
    warnings.extend(s2.warnings);
    Ok(TrainReport {
        params: s2.params,
        features,
        stage1_losses: s1.losses,
        stage2_objective: s2.objective,
        stage2_steps: s2.steps,
        eta2_used: s2.eta2,
        snapshots: s1.snapshots,
        label_shift,
        eigenvalues,
        recovery: RecoveryReport {
            test_error: Some(test_mse),
            ..recovery
        },
        test_mse,
        null_mse: target.link().second_moment(),
        plan: plan.clone(),
        seed,
        warnings,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Stop once an epoch's mean training loss is at or below this.
    pub stop_loss: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.005,
            batch: 32,
            epochs: 1000,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            stop_loss: None,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        nonnegative("adam.lr", self.lr)?;
        if self.batch == 0 {
            return Err(Error::param("adam.batch", "must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::param("adam.epochs", "must be at least 1"));
        }
        for (name, b) in [("adam.beta1", self.beta1), ("adam.beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::param(name, format!("must lie in [0, 1), got {b}")));
            }
        }
        positive("adam.eps", self.eps)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamReport {
    pub params: NetworkParams,
    /// Mean minibatch loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

struct AdamState {
    first: Vec<f64>,
    second: Vec<f64>,
}

impl AdamState {
    fn new(len: usize) -> Self {
        AdamState {
            first: alloc::vec![0.0; len],
            second: alloc::vec![0.0; len],
        }
    }

    fn step(&mut self, cfg: &AdamConfig, t: i32, theta: &mut [f64], grad: &[f64]) {
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2_sqrt = (1.0 - cfg.beta2.powi(t)).sqrt();
        let step = cfg.lr / bc1;
        for ((th, g), (m, v)) in theta
            .iter_mut()
            .zip(grad)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let denom = v.sqrt() / bc2_sqrt + cfg.eps;
            *th -= step * *m / denom;
        }
    }
}

/// Minibatch Adam on `a`, `b` and `W` jointly. The sample order is reshuffled
/// every epoch from `seed`; the last minibatch of an epoch may be smaller.
pub fn train_adam(
    params: &NetworkParams,
    data: &Dataset,
    act: Activation,
    loss: &LossFunction,
    cfg: &AdamConfig,
    seed: u64,
) -> Result<AdamReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::param("n", "dataset is empty"));
    }
    if data.d() != params.d() {
        return Err(Error::dim(format!(
            "data in R^{} for a network on R^{}",
            data.d(),
            params.d()
        )));
    }
    let mut p = params.clone();
    let (m, d) = (p.m(), p.d());
    let mut g = Gradients::zeros(m, d);
    let mut opt_w = AdamState::new(m * d);
    let mut opt_a = AdamState::new(m);
    let mut opt_b = AdamState::new(m);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle = rng::seeded(seed);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut t: i32 = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let batch = Batch::subset(data, chunk)?;
            network::gradients_into(&p, act, loss, &batch, &mut g)?;
            sum += g.loss * chunk.len() as f64;
            t = t.saturating_add(1);
            opt_w.step(cfg, t, p.w.as_mut_slice(), g.w.as_slice());
            opt_a.step(cfg, t, &mut p.a, &g.a);
            opt_b.step(cfg, t, &mut p.b, &g.b);
        }
        let mean = sum / data.len() as f64;
        epoch_losses.push(mean);
        if !mean.is_finite() {
            break;
        }
        if cfg.stop_loss.is_some_and(|s| mean <= s) {
            break;
        }
    }
    Ok(AdamReport {
        params: p,
        epoch_losses,
        steps: t as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::LinkFunction;

    fn quad_target(d: usize) -> MultiIndexTarget {
        MultiIndexTarget::axis_aligned(d, LinkFunction::Quad2d).unwrap()
    }

    #[test]
    fn t1_examples() {
        assert_eq!(default_t1(55, core::f64::consts::E).unwrap(), 3);
        assert_eq!(default_t1(100, 1.0).unwrap(), 3);
        assert!(default_t1(100, 0.5).is_err());
        assert!(default_t1(1, 2.0).is_err());
    }

    #[test]
    fn coupled_decay_product_is_one() {
        let (plan, _) = default_hyperparams(64, 1.0, 2, 2048, 8, &PlanOverrides::default()).unwrap();
        assert_eq!(plan.eta1 * plan.beta1(), 1.0);
        assert_eq!(plan.keep1(), 0.0);
        assert_eq!(plan.t1, 3);
    }

    #[test]
    fn tiny_eps0_is_floored_with_a_warning() {
        let (e, w) = default_eps0(8, 1 << 20, 1 << 40, 1200, &PlanConstants::default());
        assert_eq!(e, EPS0_FLOOR);
        assert!(matches!(w, Some(Warning::Eps0Floored { .. })));
        let (e, w) = default_eps0(8, 2048, 64, 3, &PlanConstants::default());
        assert!(e > EPS0_FLOOR && w.is_none());
    }

    #[test]
    fn single_step_is_a_scaled_gradient() {
        let target = quad_target(6);
        let data = generate_dataset(&target, 40, 3).unwrap();
        let ov = PlanOverrides {
            t1: Some(1),
            ..Default::default()
        };
        let (plan, _) = default_hyperparams(6, 1.0, 2, 40, 4, &ov).unwrap();
        let p0 = network::init_symmetric(4, 6, plan.eps0, 1).unwrap();
        let act = Activation::CubedSmooth;
        let loss = LossFunction::Square;
        let out = train_stage1(&p0, &data, act, &loss, &plan, false).unwrap();
        let g = network::grad_w(&p0, act, &loss, &Batch::full(&data).unwrap()).unwrap();
        let rate = plan.eta1 / plan.eps0;
        for (w, gr) in out.params.w.as_slice().iter().zip(g.as_slice()) {
            assert_eq!(*w, -rate * gr);
        }
        assert_eq!(out.params.a, p0.a);
        assert_eq!(out.params.b, p0.b);
        assert_eq!(out.losses.len(), 1);
    }

    #[test]
    fn zero_labels_give_zero_features() {
        let x = Matrix::from_vec(10, 3, rng::gaussian_vec(&mut rng::seeded(1), 30)).unwrap();
        let data = Dataset::new(x, alloc::vec![0.0; 10], 0).unwrap();
        let (plan, _) = default_hyperparams(3, 1.0, 1, 10, 4, &PlanOverrides::default()).unwrap();
        let p0 = network::init_symmetric(4, 3, plan.eps0, 2).unwrap();
        let out = train_stage1(&p0, &data, Activation::Quadratic, &LossFunction::Square, &plan, true)
            .unwrap();
        assert_eq!(out.params.w.max_abs(), 0.0);
        assert_eq!(out.snapshots.len(), plan.t1);
    }

    #[test]
    fn reinit_support_and_reset() {
        let p0 = network::init_symmetric(6, 4, 0.1, 5).unwrap();
        let mut moved = p0.clone();
        moved.a.iter_mut().for_each(|a| *a *= 3.0);
        let r1 = reinit_second_stage(&moved, &p0.a, 9).unwrap();
        let r2 = reinit_second_stage(&moved, &p0.a, 9).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.a, p0.a);
        assert_eq!(r1.w, moved.w);
        assert!(r1.b.iter().all(|b| (-3.0..=3.0).contains(b)));
    }

    #[test]
    fn stage2_leaves_features_alone_and_descends() {
        let target = quad_target(5);
        let data = generate_dataset(&target, 200, 4).unwrap();
        let (plan, _) = default_hyperparams(5, 1.0, 2, 200, 6, &PlanOverrides::default()).unwrap();
        let mut p = network::init_kaiming(6, 5, 3).unwrap();
        p.a.fill(0.0);
        let out = train_stage2(&p, &data, Activation::LocallyQuadratic, &LossFunction::Square, &plan)
            .unwrap();
        assert_eq!(out.params.w, p.w);
        assert_eq!(out.params.b, p.b);
        for w in out.objective.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        let frozen = TrainPlan {
            eta2: StepSize::Fixed(0.0),
            t2: 5,
            ..plan
        };
        let out = train_stage2(&p, &data, Activation::LocallyQuadratic, &LossFunction::Square, &frozen)
            .unwrap();
        assert_eq!(out.params.a, p.a);
    }

    #[test]
    fn strong_ridge_shrinks_output_weights() {
        let target = quad_target(4);
        let data = generate_dataset(&target, 50, 1).unwrap();
        let (mut plan, _) = default_hyperparams(4, 1.0, 2, 50, 4, &PlanOverrides::default()).unwrap();
        plan.beta2 = 1e3;
        plan.eta2 = StepSize::Fixed(1e-4);
        plan.t2 = 20;
        plan.t2_tol = 0.0;
        let mut p = network::init_kaiming(4, 4, 2).unwrap();
        p.a.iter_mut().for_each(|a| *a *= 10.0);
        let huber = LossFunction::huber(1.0).unwrap();
        let mut prev = dot(&p.a, &p.a);
        for _ in 0..5 {
            let out = train_stage2(&p, &data, Activation::Cosine, &huber, &TrainPlan { t2: 1, ..plan.clone() })
                .unwrap();
            let now = dot(&out.params.a, &out.params.a);
            assert!(now < prev);
            prev = now;
            p = out.params;
        }
    }

    #[test]
    fn algorithm1_is_deterministic_and_beats_the_null_predictor() {
        let d = 16;
        let n = 256;
        let target = quad_target(d);
        let (plan, _) = default_hyperparams(d, 1.0, 2, n, 8, &PlanOverrides::default()).unwrap();
        let act = Activation::CubedSmooth;
        let r1 = run_algorithm1(&target, n, act, &LossFunction::Square, &plan, 11, false).unwrap();
        let r2 = run_algorithm1(&target, n, act, &LossFunction::Square, &plan, 11, false).unwrap();
        assert_eq!(r1, r2);
        assert!(r1.test_mse < r1.null_mse.unwrap());
        assert_eq!(r1.stage1_losses.len(), plan.t1);
        assert_eq!(r1.stage2_objective.len(), r1.stage2_steps + 1);
    }

    #[test]
    fn adam_with_zero_rate_is_a_no_op() {
        let target = quad_target(5);
        let data = generate_dataset(&target, 64, 2).unwrap();
        let p = network::init_kaiming(4, 5, 1).unwrap();
        let cfg = AdamConfig {
            lr: 0.0,
            epochs: 3,
            ..Default::default()
        };
        let out = train_adam(&p, &data, Activation::Quadratic, &LossFunction::Square, &cfg, 1).unwrap();
        assert_eq!(out.params, p);
        assert_eq!(out.steps, 6);
    }

    #[test]
    fn full_batch_adam_step_matches_hand_computation() {
        // f(x) = a·(w x)², one parameter each; one Adam step moves every
        // parameter by −lr·sign(g) up to the epsilon term.
        let x = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        let data = Dataset::new(x, alloc::vec![1.0, 3.0], 0).unwrap();
        let p = NetworkParams::new(alloc::vec![0.5], alloc::vec![0.0], Matrix::from_rows(&[[1.0]]).unwrap())
            .unwrap();
        let cfg = AdamConfig {
            lr: 0.1,
            batch: 2,
            epochs: 1,
            ..Default::default()
        };
        let act = Activation::Quadratic;
        let loss = LossFunction::Square;
        let g = network::gradients(&p, act, &loss, &Batch::full(&data).unwrap()).unwrap();
        let out = train_adam(&p, &data, act, &loss, &cfg, 0).unwrap();
        let expect = |th: f64, gr: f64| th - 0.1 * gr / (gr.abs() + 1e-8);
        assert!((out.params.a[0] - expect(0.5, g.a[0])).abs() < 1e-15);
        assert!((out.params.w.get(0, 0) - expect(1.0, g.w.get(0, 0))).abs() < 1e-15);
        assert!((out.params.b[0] - expect(0.0, g.b[0])).abs() < 1e-15);
    }

    #[test]
    fn adam_fits_quad2d_with_a_quadratic_network() {
        let d = 10;
        let target = quad_target(d);
        let data = generate_dataset(&target, 400, 3).unwrap();
        let p = network::init_kaiming(4, d, 4).unwrap();
        let cfg = AdamConfig {
            epochs: 150,
            ..Default::default()
        };
        let out = train_adam(&p, &data, Activation::Quadratic, &LossFunction::Square, &cfg, 5).unwrap();
        let mse = metrics::test_error(&out.params, Activation::Quadratic, &target, ErrorMetric::Mse, 5000, 6)
            .unwrap();
        assert!(mse < 0.1, "mse {mse}");
    }

    #[test]
    fn closed_form_stage2() {
        let (plan, _) = default_hyperparams(8, 1.0, 2, 100, 4, &PlanOverrides::default()).unwrap();
        let p = plan.with_closed_form_stage2(1.0, 2.0, 1.0).unwrap();
        assert_eq!(p.eta2, StepSize::Fixed(4.0 / (2.0 * 4.0 + 2.0)));
        assert_eq!(p.beta2, 0.25);
    }
}
