//! Per-epoch hyperparameters for the variance controlled schedule: batch size
//! `B_j`, mini-batch size `b_j`, step size `η_j`, the weight `λ` and the
//! running variance estimate `S*`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::estimators::{lambda_star_unbiased, EstimatorKind, LAMBDA_STAR_BIASED};

/// Coefficient of `√n σ ρ^{2j}` in the sample-driven batch term; equals
/// `(1 − 5/8)²` rounded as in the published schedule.
pub const SAMPLE_TERM_COEFF: f64 = 0.14;

/// Smallest batch size for which the one-epoch bounds stay positive.
pub const MIN_BATCH: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    /// Target accuracy in `‖∇f‖²` units.
    pub epsilon: f64,
    pub sigma: f64,
    pub rho: f64,
    pub gamma: f64,
    pub lipschitz: f64,
    pub alpha: f64,
    pub beta: f64,
    pub n: usize,
    pub epochs: usize,
    /// Multiplier on `S*/ε` in the accuracy-driven batch term.
    pub c_b: f64,
    /// Weight on the previous estimate when smoothing `S*` across epochs.
    pub s_star_smoothing: f64,
}

impl ScheduleConfig {
    pub fn new(n: usize, lipschitz: f64) -> Self {
        Self {
            epsilon: 1e-3,
            sigma: 1.0,
            rho: 0.9,
            gamma: 1.0 / 3.0,
            lipschitz,
            alpha: 0.0,
            beta: 0.25,
            n,
            epochs: 100,
            c_b: 1.0,
            s_star_smoothing: 0.5,
        }
    }

    /// Checks the ranges every schedule needs.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if !(self.rho >= 0.0 && self.rho < 1.0) {
            return bad(format!("rho must satisfy 0 <= rho < 1, got {}", self.rho));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if !(self.lipschitz > 0.0 && self.lipschitz.is_finite()) {
            return bad(format!("L must be positive and finite, got {}", self.lipschitz));
        }
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("alpha and beta must lie in [0, 1], got {} and {}", self.alpha, self.beta));
        }
        if self.epochs == 0 {
            return bad("T must be at least 1".into());
        }
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if !(self.c_b > 0.0 && self.c_b.is_finite()) {
            return bad(format!("c_B must be positive, got {}", self.c_b));
        }
        if !(0.0..1.0).contains(&self.s_star_smoothing) {
            return bad(format!("s_star_smoothing must lie in [0, 1), got {}", self.s_star_smoothing));
        }
        Ok(())
    }

    /// Additional checks for the adaptive schedule.
    pub fn validate_adaptive(&self) -> Result<()> {
        self.validate()?;
        if self.gamma > 1.0 / 3.0 + 1e-12 {
            return Err(Error::Config(format!("gamma must be <= 1/3, got {}", self.gamma)));
        }
        if self.n < MIN_BATCH {
            return Err(Error::Config(format!("n must be at least {MIN_BATCH}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Batch size driven by the target accuracy, `B ∝ S*/ε`.
    Eps,
    /// Batch size driven by the sample count as the variance bound decays.
    N,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchChoice {
    pub size: usize,
    pub regime: Regime,
    pub term_eps: f64,
    pub term_n: f64,
}

/// How inner-step directions are formed during an epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    Fixed(EstimatorKind),
    /// Unbiased with `λ*` when `‖gk‖ < ‖g0‖`, otherwise unbiased with `λ = 1/2`.
    NormSwitch,
}

impl StepRule {
    /// The weight reported for the epoch.
    pub fn nominal_lambda(&self) -> Option<f64> {
        match self {
            StepRule::Fixed(kind) => kind.lambda(),
            StepRule::NormSwitch => Some(lambda_star_unbiased()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochDecision {
    /// `None` for the initialization epoch, which precedes any `S*` estimate.
    pub regime: Option<Regime>,
    pub batch: usize,
    pub mini_batch: usize,
    pub step_size: f64,
    pub rule: StepRule,
}

/// Running estimate of the gradient-variance bound `S*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate {
    value: Option<f64>,
    smoothing: f64,
}

impl VarianceEstimate {
    pub fn new(smoothing: f64) -> Self {
        Self { value: None, smoothing }
    }

    pub fn get(&self) -> Option<f64> {
        self.value
    }

    /// Folds in a fresh estimate: `w·old + (1−w)·new`, or `new` for the first one.
    pub fn update(&mut self, fresh: f64) -> f64 {
        let next = match self.value {
            None => fresh,
            Some(old) => self.smoothing * old + (1.0 - self.smoothing) * fresh,
        };
        self.value = Some(next);
        next
    }
}

/// `B_j = min(c_B·S*/ε, n S*/(S* + 0.14 √n σ ρ^{2j}))`, rounded half-up and
/// clamped to `[3, n]`. The regime records which term attained the minimum.
pub fn batch_size(epoch: usize, s_star: f64, cfg: &ScheduleConfig) -> Result<BatchChoice> {
    if s_star < 0.0 || !s_star.is_finite() {
        return domain(format!("S* must be finite and non-negative, got {s_star}"));
    }
    if epoch == 0 {
        return domain("epochs are numbered from 1");
    }
    let n = cfg.n as f64;
    if s_star == 0.0 {
        return Ok(BatchChoice {
            size: MIN_BATCH.min(cfg.n),
            regime: Regime::N,
            term_eps: 0.0,
            term_n: 0.0,
        });
    }
    let term_eps = cfg.c_b * s_star / cfg.epsilon;
    let decay = cfg.rho.powi(2 * epoch as i32);
    let term_n = n * s_star / (s_star + SAMPLE_TERM_COEFF * n.sqrt() * cfg.sigma * decay);
    let (raw, regime) = if term_eps <= term_n {
        (term_eps, Regime::Eps)
    } else {
        (term_n, Regime::N)
    };
    let rounded = (raw + 0.5).floor();
    let size = if rounded >= n { cfg.n } else { (rounded as usize).max(MIN_BATCH) };
    Ok(BatchChoice {
        size: size.min(cfg.n),
        regime,
        term_eps,
        term_n,
    })
}

/// Resolves the full decision for epoch `j` from the current `S*`.
pub fn resolve_epoch(epoch: usize, s_star: f64, cfg: &ScheduleConfig) -> Result<EpochDecision> {
    let choice = batch_size(epoch, s_star, cfg)?;
    let b = choice.size as f64;
    let base = cfg.gamma / cfg.lipschitz;
    Ok(match choice.regime {
        Regime::Eps => EpochDecision {
            regime: Some(Regime::Eps),
            batch: choice.size,
            mini_batch: ceil_root4(choice.size),
            step_size: base,
            rule: StepRule::NormSwitch,
        },
        Regime::N => EpochDecision {
            regime: Some(Regime::N),
            batch: choice.size,
            mini_batch: 1,
            step_size: base / b.sqrt(),
            rule: StepRule::Fixed(EstimatorKind::Biased(LAMBDA_STAR_BIASED)),
        },
    })
}

/// The first epoch: full batch, `b = ⌈n^{1/4}⌉`, `η = γ/(L√n)`, biased with `λ = 5/8`.
pub fn initial_decision(cfg: &ScheduleConfig) -> EpochDecision {
    EpochDecision {
        regime: None,
        batch: cfg.n,
        mini_batch: ceil_root4(cfg.n),
        step_size: cfg.gamma / (cfg.lipschitz * (cfg.n as f64).sqrt()),
        rule: StepRule::Fixed(EstimatorKind::Biased(LAMBDA_STAR_BIASED)),
    }
}

/// Within-batch variance `(1/|I|) Σ_{i∈I} ‖∇f_i − g_j‖²` of the anchor
/// batch's component gradients about their mean `g_j`. `None` for a
/// singleton batch, where the variance is undefined.
pub fn estimate_s_star(components: &[Vec<f64>], anchor_grad: &[f64]) -> Option<f64> {
    if components.len() < 2 {
        return None;
    }
    Some(crate::oracle::mean_sq_deviation(components, anchor_grad))
}

/// `n S*/(S* + λ² √n σ ρ^{2j})`.
pub fn batch_lower_bound_unbiased(n: usize, s_star: f64, lambda: f64, sigma: f64, rho: f64, epoch: usize) -> f64 {
    sample_bound(n, s_star, lambda * lambda, sigma, rho, epoch)
}

/// `n S*/(S* + c(λ) √n σ ρ^{2j})` with `c(λ) = (1−λ)²` below `√2/2` and
/// `(3λ² − 2λ)²` above it.
pub fn batch_lower_bound_biased(
    n: usize,
    s_star: f64,
    lambda: f64,
    sigma: f64,
    rho: f64,
    epoch: usize,
) -> Result<f64> {
    Ok(sample_bound(n, s_star, biased_coefficient(lambda)?, sigma, rho, epoch))
}

pub fn biased_coefficient(lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return domain(format!("lambda must lie in (0, 1), got {lambda}"));
    }
    let threshold = std::f64::consts::FRAC_1_SQRT_2;
    if lambda == threshold {
        return domain("the biased batch bound is undefined at lambda = √2/2");
    }
    Ok(if lambda < threshold {
        (1.0 - lambda).powi(2)
    } else {
        (3.0 * lambda * lambda - 2.0 * lambda).powi(2)
    })
}

fn sample_bound(n: usize, s_star: f64, coeff: f64, sigma: f64, rho: f64, epoch: usize) -> f64 {
    let n = n as f64;
    n * s_star / (s_star + coeff * n.sqrt() * sigma * rho.powi(2 * epoch as i32))
}

fn ceil_root4(b: usize) -> usize {
    let r = (b as f64).sqrt().sqrt();
    // guard perfect fourth powers against round-off above the integer
    let nearest = r.round();
    let m = if (r - nearest).abs() < 1e-9 { nearest } else { r.ceil() };
    (m as usize).max(1)
}
