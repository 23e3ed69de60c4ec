//! Epoch-structured optimizers.
//!
//! Every variance-reduced method here runs the same epoch:
//!
//! 1. draw an anchor batch `I_j` of size `B_j` and compute `g_j = ∇f_{I_j}(x̃_{j−1})`,
//! 2. draw `N_j ~ Geom(B_j/(B_j+b_j))`,
//! 3. take `N_j` steps `x_k = x_{k−1} − η_j v_{k−1}` where `v` comes from a
//!    size-`b_j` mini-batch and the epoch's estimator,
//! 4. set `x̃_j = x_{N_j}`.
//!
//! The methods differ only in how `(B_j, b_j, η_j)` and the estimator are
//! chosen. Each inner step evaluates the mini-batch gradient at two points
//! (current iterate and anchor), so an epoch costs `B_j + 2 b_j N_j` IFO.
//! Objective values and `‖∇f(x̃_j)‖²` for the trace are computed on a
//! separate evaluation counter and never enter the IFO ledger.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{lambda_star_unbiased, EstimatorKind};
use crate::linalg;
use crate::oracle::{FiniteSumObjective, IfoCounter};
use crate::sampler::{InnerLength, RngState};
use crate::schedules::{
    estimate_s_star, initial_decision, resolve_epoch, EpochDecision, Regime, ScheduleConfig, StepRule,
    VarianceEstimate,
};

/// Iterates with a larger norm than this abort the run.
pub const DIVERGENCE_NORM: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Vcsg,
    BatchingSvrg,
    Sgd,
    Svrg,
    Scsg,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Vcsg,
        Algorithm::BatchingSvrg,
        Algorithm::Sgd,
        Algorithm::Svrg,
        Algorithm::Scsg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Vcsg => "vcsg",
            Algorithm::BatchingSvrg => "batching_svrg",
            Algorithm::Sgd => "sgd",
            Algorithm::Svrg => "svrg",
            Algorithm::Scsg => "scsg",
        }
    }

    /// Component gradients evaluated per unit of mini-batch per inner step.
    pub fn grads_per_step(self) -> u64 {
        match self {
            Algorithm::Sgd => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

/// One epoch of a user-supplied schedule for `batching_svrg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedEpoch {
    pub batch: usize,
    pub mini_batch: usize,
    pub step_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub schedule: ScheduleConfig,
    /// Estimator for `batching_svrg`.
    pub estimator: Option<EstimatorKind>,
    /// Per-epoch schedule for `batching_svrg`; the last entry repeats.
    pub fixed: Vec<FixedEpoch>,
    /// `η_0` for SGD; defaults to `1/(3L√n)`.
    pub sgd_step: Option<f64>,
    /// Batch size for SCSG; defaults to `min(⌈S*(x̃_0)/ε⌉, n)`.
    pub scsg_batch: Option<usize>,
    pub seed: u64,
    pub stop_at_epsilon: bool,
    /// Standard deviation of the random starting point.
    pub init_scale: f64,
    /// Explicit starting point; overrides the random draw.
    pub initial_point: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, schedule: ScheduleConfig, seed: u64) -> Self {
        Self {
            algorithm,
            schedule,
            estimator: None,
            fixed: Vec::new(),
            sgd_step: None,
            scsg_batch: None,
            seed,
            stop_at_epsilon: false,
            init_scale: 0.1,
            initial_point: None,
        }
    }

    /// Constant-schedule `batching_svrg` configuration.
    pub fn batching(schedule: ScheduleConfig, estimator: EstimatorKind, epoch: FixedEpoch, seed: u64) -> Self {
        let mut cfg = Self::new(Algorithm::BatchingSvrg, schedule, seed);
        cfg.estimator = Some(estimator);
        cfg.fixed = vec![epoch];
        cfg
    }
}

/// Which schedule branch produced an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Init,
    Eps,
    N,
    Fixed,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::Eps => "eps",
            Phase::N => "n",
            Phase::Fixed => "fixed",
        }
    }
}

impl From<Option<Regime>> for Phase {
    fn from(r: Option<Regime>) -> Self {
        match r {
            None => Phase::Init,
            Some(Regime::Eps) => Phase::Eps,
            Some(Regime::N) => Phase::N,
        }
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Phase::Init, Phase::Eps, Phase::N, Phase::Fixed]
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown regime `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch index.
    pub epoch: usize,
    pub regime: Phase,
    pub batch: usize,
    pub mini_batch: usize,
    pub step_size: f64,
    pub lambda: Option<f64>,
    pub inner_steps: u64,
    /// Cumulative IFO after this epoch.
    pub ifo: u64,
    /// `f(x̃_j)`
    pub value: f64,
    /// `‖∇f(x̃_j)‖²`
    pub grad_norm_sq: f64,
    pub s_star: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub grads_per_step: u64,
    pub initial_value: f64,
    pub initial_grad_norm_sq: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epochs whose geometric draw hit the inner-loop cap.
    pub capped_epochs: Vec<usize>,
    /// Component gradients spent on trace evaluation (outside the ledger).
    pub eval_ifo: u64,
}

impl RunTrace {
    pub fn total_ifo(&self) -> u64 {
        self.epochs.last().map_or(0, |r| r.ifo)
    }

    /// `Σ_j (B_j + c·b_j·N_j)` with `c` gradients per inner step.
    pub fn ledger_ifo(&self) -> u64 {
        self.epochs
            .iter()
            .map(|r| r.batch as u64 + self.grads_per_step * r.mini_batch as u64 * r.inner_steps)
            .sum()
    }

    /// `f(x̃_0) − min_j f(x̃_j)`, a proxy for `f(x̃_0) − f*`.
    pub fn delta_f(&self) -> f64 {
        let best = self
            .epochs
            .iter()
            .map(|r| r.value)
            .fold(self.initial_value, f64::min);
        self.initial_value - best
    }

    /// First cumulative IFO at which `‖∇f(x̃_j)‖² ≤ ε`.
    pub fn ifo_to_target(&self, epsilon: f64) -> Option<u64> {
        if self.initial_grad_norm_sq <= epsilon {
            return Some(0);
        }
        self.epochs.iter().find(|r| r.grad_norm_sq <= epsilon).map(|r| r.ifo)
    }

    /// Output-sampling weights `η_j B_j / b_j` (`η_j` for SGD).
    pub fn output_weights(&self) -> Vec<f64> {
        self.epochs
            .iter()
            .map(|r| match self.algorithm {
                Algorithm::Sgd => r.step_size,
                _ => r.step_size * r.batch as f64 / r.mini_batch as f64,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// `x̃_0`
    pub start: Vec<f64>,
    /// `x̃*_T`, drawn from `{x̃_j}` with probability `∝ η_j B_j / b_j`.
    pub output: Vec<f64>,
    /// 1-based epoch of the drawn output.
    pub output_epoch: usize,
    pub last: Vec<f64>,
    pub ifo_to_target: Option<u64>,
    pub epsilon: f64,
    pub trace: RunTrace,
}

/// Runs `cfg.algorithm` with a fresh generator seeded from `cfg.seed`.
pub fn run(obj: &FiniteSumObjective, cfg: &RunConfig) -> Result<RunResult> {
    let mut rng = RngState::new(cfg.seed);
    match cfg.algorithm {
        Algorithm::Vcsg => run_vcsg(obj, cfg, &mut rng),
        Algorithm::BatchingSvrg => {
            let est = cfg
                .estimator
                .ok_or_else(|| Error::Config("batching_svrg needs an estimator".into()))?;
            run_batching_svrg(obj, cfg, est, &mut rng)
        }
        Algorithm::Sgd => run_sgd(obj, cfg, &mut rng),
        Algorithm::Svrg => run_svrg(obj, cfg, &mut rng),
        Algorithm::Scsg => run_scsg(obj, cfg, &mut rng),
    }
}

/// Batching SVRG with a caller-supplied schedule and estimator.
pub fn run_batching_svrg(
    obj: &FiniteSumObjective,
    cfg: &RunConfig,
    estimator: EstimatorKind,
    rng: &mut RngState,
) -> Result<RunResult> {
    estimator.validate()?;
    if cfg.fixed.is_empty() {
        return Err(Error::Config("batching_svrg needs at least one fixed epoch".into()));
    }
    for e in &cfg.fixed {
        check_fixed(e, obj.n())?;
    }
    let mut run = Run::start(obj, cfg, Algorithm::BatchingSvrg, rng)?;
    for j in 1..=cfg.schedule.epochs {
        let e = cfg.fixed[(j - 1).min(cfg.fixed.len() - 1)];
        let decision = fixed_decision(e, estimator);
        if run.epoch(j, &decision, Phase::Fixed, |s| s)? {
            break;
        }
    }
    run.finish()
}

/// SVRG baseline: `B = n`, `b = 1`, unbiased with `λ = 1/2`, `η = 1/(3L√n)`.
pub fn run_svrg(obj: &FiniteSumObjective, cfg: &RunConfig, rng: &mut RngState) -> Result<RunResult> {
    let epoch = FixedEpoch {
        batch: obj.n(),
        mini_batch: 1,
        step_size: 1.0 / (3.0 * cfg.schedule.lipschitz * (obj.n() as f64).sqrt()),
    };
    let decision = fixed_decision(epoch, EstimatorKind::WeightedUnbiased(0.5));
    let mut run = Run::start(obj, cfg, Algorithm::Svrg, rng)?;
    for j in 1..=cfg.schedule.epochs {
        if run.epoch(j, &decision, Phase::Fixed, |s| s)? {
            break;
        }
    }
    run.finish()
}

/// SCSG baseline: plain estimator, `b = 1`, `B = min(⌈S*/ε⌉, n)` from the
/// starting point's gradient variance, `η = (γ/L) B^{−2/3}`.
pub fn run_scsg(obj: &FiniteSumObjective, cfg: &RunConfig, rng: &mut RngState) -> Result<RunResult> {
    let mut run = Run::start(obj, cfg, Algorithm::Scsg, rng)?;
    let batch = match cfg.scsg_batch {
        Some(b) => b,
        None => {
            let s0 = obj.variance_s(&run.x, &mut run.eval)?;
            scsg_batch_size(s0, cfg.schedule.epsilon, obj.n())
        }
    };
    let epoch = FixedEpoch {
        batch,
        mini_batch: 1,
        step_size: scsg_step_size(batch, &cfg.schedule),
    };
    check_fixed(&epoch, obj.n())?;
    let decision = fixed_decision(epoch, EstimatorKind::Plain);
    for j in 1..=cfg.schedule.epochs {
        if run.epoch(j, &decision, Phase::Fixed, |s| s)? {
            break;
        }
    }
    run.finish()
}

pub fn scsg_batch_size(s_star: f64, epsilon: f64, n: usize) -> usize {
    let raw = (s_star / epsilon).ceil();
    if raw >= n as f64 {
        n
    } else {
        (raw as usize).max(1)
    }
}

pub fn scsg_step_size(batch: usize, schedule: &ScheduleConfig) -> f64 {
    schedule.gamma / schedule.lipschitz * (batch as f64).powf(-2.0 / 3.0)
}

/// Variance controlled stochastic gradient.
///
/// Epoch 1 uses the full batch with the biased estimator (`λ = 5/8`). Each
/// later epoch resolves `(B_j, b_j, η_j)` from the smoothed `S*` measured
/// on the previous anchor batch. In the accuracy-driven regime every inner
/// step picks the unbiased weight by comparing `‖gk‖` against `‖g0‖`; in
/// the sample-driven regime the biased estimator with `λ = 5/8` is used.
pub fn run_vcsg(obj: &FiniteSumObjective, cfg: &RunConfig, rng: &mut RngState) -> Result<RunResult> {
    cfg.schedule.validate_adaptive()?;
    if cfg.schedule.n != obj.n() {
        return Err(Error::Config(format!(
            "schedule n = {} does not match the objective's n = {}",
            cfg.schedule.n,
            obj.n()
        )));
    }
    let mut run = Run::start(obj, cfg, Algorithm::Vcsg, rng)?;
    let mut variance = VarianceEstimate::new(cfg.schedule.s_star_smoothing);
    let mut decision = initial_decision(&cfg.schedule);
    for j in 1..=cfg.schedule.epochs {
        let phase = Phase::from(decision.regime);
        let stop = run.epoch(j, &decision, phase, |raw| match raw {
            Some(s) => Some(variance.update(s)),
            None => variance.get(),
        })?;
        if stop {
            break;
        }
        decision = resolve_epoch(j + 1, variance.get().unwrap_or(0.0), &cfg.schedule)?;
    }
    run.finish()
}

/// Scaled SGD: `n` single-sample steps per epoch with `x ← x − (η_0/j)·½·∇f_i(x)`.
pub fn run_sgd(obj: &FiniteSumObjective, cfg: &RunConfig, rng: &mut RngState) -> Result<RunResult> {
    let eta0 = cfg
        .sgd_step
        .unwrap_or_else(|| 1.0 / (3.0 * cfg.schedule.lipschitz * (obj.n() as f64).sqrt()));
    if !(eta0 > 0.0 && eta0.is_finite()) {
        return Err(Error::Config(format!("sgd step must be positive, got {eta0}")));
    }
    let mut run = Run::start(obj, cfg, Algorithm::Sgd, rng)?;
    let n = obj.n();
    for j in 1..=cfg.schedule.epochs {
        let eta = sgd_step_size(eta0, j);
        for _ in 0..n {
            let i = run.rng.uniform_index(n);
            let g = obj.grad_component(i, &run.x, &mut run.ifo)?;
            linalg::axpy(-0.5 * eta, &g, &mut run.x);
            run.guard(j)?;
        }
        let record = EpochRecord {
            epoch: j,
            regime: Phase::Fixed,
            batch: 0,
            mini_batch: 1,
            step_size: eta,
            lambda: None,
            inner_steps: n as u64,
            ifo: 0,
            value: 0.0,
            grad_norm_sq: 0.0,
            s_star: None,
        };
        if run.record(record)? {
            break;
        }
    }
    run.finish()
}

/// `η_0 / j`
pub fn sgd_step_size(eta0: f64, epoch: usize) -> f64 {
    eta0 / epoch as f64
}

fn fixed_decision(e: FixedEpoch, estimator: EstimatorKind) -> EpochDecision {
    EpochDecision {
        regime: None,
        batch: e.batch,
        mini_batch: e.mini_batch,
        step_size: e.step_size,
        rule: StepRule::Fixed(estimator),
    }
}

fn check_fixed(e: &FixedEpoch, n: usize) -> Result<()> {
    if e.batch == 0 || e.batch > n {
        return Err(Error::Config(format!("batch size {} outside [1, {n}]", e.batch)));
    }
    if e.mini_batch == 0 || e.mini_batch > n {
        return Err(Error::Config(format!("mini-batch size {} outside [1, {n}]", e.mini_batch)));
    }
    if !(e.step_size > 0.0 && e.step_size.is_finite()) {
        return Err(Error::Config(format!("step size must be positive, got {}", e.step_size)));
    }
    Ok(())
}

struct Run<'a> {
    obj: &'a FiniteSumObjective,
    rng: &'a mut RngState,
    epsilon: f64,
    stop_at_epsilon: bool,
    ifo: IfoCounter,
    eval: IfoCounter,
    start: Vec<f64>,
    x: Vec<f64>,
    iterates: Vec<Vec<f64>>,
    trace: RunTrace,
}

impl<'a> Run<'a> {
    fn start(
        obj: &'a FiniteSumObjective,
        cfg: &RunConfig,
        algorithm: Algorithm,
        rng: &'a mut RngState,
    ) -> Result<Self> {
        cfg.schedule.validate()?;
        let x = match &cfg.initial_point {
            Some(p) => {
                if p.len() != obj.dim() {
                    return Err(Error::Config(format!(
                        "initial point has dimension {}, expected {}",
                        p.len(),
                        obj.dim()
                    )));
                }
                p.clone()
            }
            None => rng
                .standard_normal(obj.dim())
                .into_iter()
                .map(|v| v * cfg.init_scale)
                .collect(),
        };
        let mut eval = IfoCounter::new();
        let initial_value = obj.value(&x)?;
        let initial_grad_norm_sq = obj.grad_norm_sq(&x, &mut eval)?;
        Ok(Self {
            obj,
            rng,
            epsilon: cfg.schedule.epsilon,
            stop_at_epsilon: cfg.stop_at_epsilon,
            ifo: IfoCounter::new(),
            eval,
            start: x.clone(),
            x,
            iterates: Vec::new(),
            trace: RunTrace {
                algorithm,
                seed: cfg.seed,
                grads_per_step: algorithm.grads_per_step(),
                initial_value,
                initial_grad_norm_sq,
                epochs: Vec::new(),
                capped_epochs: Vec::new(),
                eval_ifo: 0,
            },
        })
    }

    /// Runs one variance-reduced epoch and records it. `smooth` maps the raw
    /// within-batch `S*` estimate to the value reported in the trace.
    /// Returns `true` when the ε-stop fired.
    fn epoch(
        &mut self,
        j: usize,
        decision: &EpochDecision,
        phase: Phase,
        smooth: impl FnOnce(Option<f64>) -> Option<f64>,
    ) -> Result<bool> {
        let (raw_s_star, len) = self.inner_loop(j, decision)?;
        if len.capped {
            self.trace.capped_epochs.push(j);
        }
        let record = EpochRecord {
            epoch: j,
            regime: phase,
            batch: decision.batch,
            mini_batch: decision.mini_batch,
            step_size: decision.step_size,
            lambda: decision.rule.nominal_lambda(),
            inner_steps: len.steps,
            ifo: 0,
            value: 0.0,
            grad_norm_sq: 0.0,
            s_star: smooth(raw_s_star),
        };
        self.record(record)
    }

    fn inner_loop(&mut self, j: usize, decision: &EpochDecision) -> Result<(Option<f64>, InnerLength)> {
        let n = self.obj.n();
        let anchor = self.x.clone();
        let batch = self.rng.sample_subset(n, decision.batch)?;
        let (anchor_grad, comps) = self.obj.grad_batch_with_components(&batch, &anchor, &mut self.ifo)?;
        let s_star = estimate_s_star(&comps, &anchor_grad);
        drop(comps);

        let len = self.rng.sample_inner_length(decision.batch, decision.mini_batch)?;
        let unbiased_star = EstimatorKind::WeightedUnbiased(lambda_star_unbiased());
        let unbiased_half = EstimatorKind::WeightedUnbiased(0.5);
        let mut v = vec![0.0; self.obj.dim()];
        for _ in 0..len.steps {
            let mini = self.rng.sample_subset(n, decision.mini_batch)?;
            let gk = self.obj.grad_batch(&mini, &self.x, &mut self.ifo)?;
            let g0 = self.obj.grad_batch(&mini, &anchor, &mut self.ifo)?;
            let kind = match decision.rule {
                StepRule::Fixed(kind) => kind,
                StepRule::NormSwitch => {
                    if linalg::norm_sq(&gk) < linalg::norm_sq(&g0) {
                        unbiased_star
                    } else {
                        unbiased_half
                    }
                }
            };
            kind.direction_into(&gk, &g0, &anchor_grad, &mut v);
            linalg::axpy(-decision.step_size, &v, &mut self.x);
            self.guard(j)?;
        }
        Ok((s_star, len))
    }

    fn guard(&self, j: usize) -> Result<()> {
        let norm_sq = linalg::norm_sq(&self.x);
        if !norm_sq.is_finite() || norm_sq > DIVERGENCE_NORM * DIVERGENCE_NORM {
            return Err(self.diverged(j, format!("iterate norm {:.3e}", norm_sq.sqrt())));
        }
        Ok(())
    }

    fn diverged(&self, j: usize, reason: String) -> Error {
        let mut trace = self.trace.clone();
        trace.eval_ifo = self.eval.get();
        Error::Diverged {
            epoch: j,
            reason,
            trace: Box::new(trace),
        }
    }

    /// Fills in the evaluation fields, appends the record and reports
    /// whether the ε-stop fired.
    fn record(&mut self, mut record: EpochRecord) -> Result<bool> {
        record.ifo = self.ifo.get();
        record.value = self.obj.value(&self.x)?;
        if !record.value.is_finite() {
            return Err(self.diverged(record.epoch, "objective value is not finite".into()));
        }
        record.grad_norm_sq = self.obj.grad_norm_sq(&self.x, &mut self.eval)?;
        let stop = self.stop_at_epsilon && record.grad_norm_sq <= self.epsilon;
        self.trace.epochs.push(record);
        self.iterates.push(self.x.clone());
        Ok(stop)
    }

    fn finish(mut self) -> Result<RunResult> {
        self.trace.eval_ifo = self.eval.get();
        let weights = self.trace.output_weights();
        let picked = self.rng.sample_output_index(&weights)?;
        Ok(RunResult {
            start: self.start,
            output: self.iterates[picked].clone(),
            output_epoch: picked + 1,
            last: self.x,
            ifo_to_target: self.trace.ifo_to_target(self.epsilon),
            epsilon: self.epsilon,
            trace: self.trace,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{make_problem, ProblemKind, ProblemSpec};

    fn quad(n: usize, d: usize) -> FiniteSumObjective {
        make_problem(&ProblemSpec::new(ProblemKind::Quadratic, n, d, 11)).unwrap()
    }

    #[test]
    fn algorithm_names_roundtrip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("adam".parse::<Algorithm>().is_err());
    }

    #[test]
    fn ledger_matches_counter_for_every_algorithm() {
        let obj = quad(60, 3);
        for alg in [Algorithm::Vcsg, Algorithm::Sgd, Algorithm::Svrg, Algorithm::Scsg] {
            let mut schedule = ScheduleConfig::new(60, obj.lipschitz());
            schedule.epochs = 6;
            let res = run(&obj, &RunConfig::new(alg, schedule, 5)).unwrap();
            assert_eq!(res.trace.ledger_ifo(), res.trace.total_ifo(), "{alg}");
            assert_eq!(res.trace.epochs.len(), 6);
            assert!(res.trace.epochs.windows(2).all(|w| w[0].ifo < w[1].ifo));
        }
    }

    #[test]
    fn full_batch_plain_is_gradient_descent() {
        let obj = quad(8, 2);
        let mut schedule = ScheduleConfig::new(8, 1.0);
        schedule.epochs = 5;
        let cfg = RunConfig::batching(
            schedule,
            EstimatorKind::Plain,
            FixedEpoch {
                batch: 8,
                mini_batch: 8,
                step_size: 0.5,
            },
            3,
        );
        let res = run(&obj, &cfg).unwrap();
        let values: Vec<f64> = std::iter::once(res.trace.initial_value)
            .chain(res.trace.epochs.iter().map(|r| r.value))
            .collect();
        assert!(values.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn stop_at_epsilon_ends_early() {
        let obj = quad(50, 2);
        let mut schedule = ScheduleConfig::new(50, 1.0);
        schedule.epochs = 200;
        schedule.epsilon = 1e-8;
        let mut cfg = RunConfig::new(Algorithm::Svrg, schedule, 1);
        cfg.stop_at_epsilon = true;
        let res = run(&obj, &cfg).unwrap();
        let last = res.trace.epochs.last().unwrap();
        assert!(res.trace.initial_grad_norm_sq > 1e-8);
        assert!(last.grad_norm_sq <= 1e-8);
        assert!(res.trace.epochs.len() < 200);
        assert_eq!(res.ifo_to_target, Some(last.ifo));
    }

    #[test]
    fn divergence_carries_trace() {
        let obj = quad(20, 2);
        let mut schedule = ScheduleConfig::new(20, 1.0);
        schedule.epochs = 50;
        let cfg = RunConfig::batching(
            schedule,
            EstimatorKind::Plain,
            FixedEpoch {
                batch: 20,
                mini_batch: 20,
                step_size: 5.0,
            },
            3,
        );
        match run(&obj, &cfg) {
            Err(Error::Diverged { trace, epoch, .. }) => {
                assert_eq!(trace.epochs.len() + 1, epoch);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn scsg_schedule_values() {
        let mut s = ScheduleConfig::new(1000, 1.0);
        s.gamma = 1.0 / 3.0;
        assert!((scsg_step_size(64, &s) - 1.0 / 48.0).abs() < 1e-15);
        assert_eq!(scsg_batch_size(10.0, 1e-3, 1000), 1000);
        assert_eq!(scsg_batch_size(0.0635, 1e-3, 1000), 64);
    }

    #[test]
    fn vcsg_rejects_large_gamma() {
        let obj = quad(20, 2);
        let mut schedule = ScheduleConfig::new(20, 1.0);
        schedule.gamma = 0.5;
        let res = run(&obj, &RunConfig::new(Algorithm::Vcsg, schedule, 0));
        assert!(matches!(res, Err(Error::Config(_))));
    }

    #[test]
    fn sgd_decay() {
        assert_eq!(sgd_step_size(0.3, 5), 0.3 / 5.0);
        let obj = quad(30, 2);
        let mut schedule = ScheduleConfig::new(30, 1.0);
        schedule.epochs = 5;
        let mut cfg = RunConfig::new(Algorithm::Sgd, schedule, 9);
        cfg.sgd_step = Some(0.3);
        let res = run(&obj, &cfg).unwrap();
        assert_eq!(res.trace.epochs[4].step_size, 0.3 / 5.0);
        assert_eq!(res.trace.total_ifo(), 150);
    }
}
