//! Bound calculators and numeric checks for the one-epoch analysis.
//!
//! Everything here is a pure function of its inputs, apart from the
//! Monte-Carlo helpers which take an explicit [`RngState`].

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::estimators::lambda_star_unbiased;
use crate::linalg;
use crate::optimizers::{Algorithm, Phase, RunTrace};
use crate::sampler::RngState;

/// Largest γ for which the unbiased bound's θ is claimed positive.
pub const GAMMA_UNBIASED_MAX: f64 = 13.0 / 50.0;
/// Largest γ admitted by the biased bound.
pub const GAMMA_BIASED_MAX: f64 = 1.0 / 3.0;
/// Constant in the last term of θ and Θ.
pub const THETA_TAIL: f64 = 1.16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundInputs {
    pub lipschitz: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub delta_f: f64,
    pub s_star: f64,
    pub sigma: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub n: usize,
    pub epochs: usize,
    pub batch: usize,
    pub mini_batch: usize,
}

impl Default for BoundInputs {
    fn default() -> Self {
        Self {
            lipschitz: 1.0,
            gamma: GAMMA_UNBIASED_MAX,
            alpha: 0.0,
            beta: 0.25,
            lambda: lambda_star_unbiased(),
            delta_f: 1.0,
            s_star: 1.0,
            sigma: 1.0,
            rho: 0.9,
            epsilon: 1e-3,
            n: 1000,
            epochs: 100,
            batch: 100,
            mini_batch: 4,
        }
    }
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let scalars = [
            ("lipschitz", self.lipschitz),
            ("gamma", self.gamma),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("delta_f", self.delta_f),
            ("s_star", self.s_star),
            ("sigma", self.sigma),
            ("rho", self.rho),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in scalars {
            if !(v >= 0.0 && v.is_finite()) {
                return domain(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if self.rho >= 1.0 {
            return domain(format!("rho must be < 1, got {}", self.rho));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return domain(format!("lambda must lie in (0, 1), got {}", self.lambda));
        }
        if self.batch < 3 {
            return domain(format!("batch size must be >= 3, got {}", self.batch));
        }
        if self.mini_batch == 0 || self.batch > self.n {
            return domain(format!(
                "need 1 <= b and B <= n, got b = {}, B = {}, n = {}",
                self.mini_batch, self.batch, self.n
            ));
        }
        Ok(())
    }

    /// The first-order term shared by θ and Θ: `2γB^{αβ−α} + 2B^{β−1}`.
    fn schedule_term(&self) -> f64 {
        let b = self.batch as f64;
        2.0 * self.gamma * b.powf(self.alpha * self.beta - self.alpha) + 2.0 * b.powf(self.beta - 1.0)
    }
}

/// `θ = 2(1−λ) − (2γB^{αβ−α} + 2B^{β−1})(1−λ)² − 1.16(1−λ)²`
pub fn theta_unbiased(inp: &BoundInputs) -> f64 {
    theta_at(inp, inp.batch as f64)
}

/// `Θ = 2(1−λ) − (2γB^{αβ−α} + 2B^{β−1} − 4LB^{2α−2})(1−λ)² − 1.16(1−λ)²`
pub fn theta_biased(inp: &BoundInputs) -> f64 {
    let q = 1.0 - inp.lambda;
    let b = inp.batch as f64;
    let term = inp.schedule_term() - 4.0 * inp.lipschitz * b.powf(2.0 * inp.alpha - 2.0);
    2.0 * q - term * q * q - THETA_TAIL * q * q
}

/// `(n−B)/((n−1)B)` for `B < n`, else 0.
pub fn indicator(n: usize, batch: usize) -> f64 {
    if batch >= n {
        0.0
    } else {
        (n - batch) as f64 / ((n - 1) as f64 * batch as f64)
    }
}

/// Right-hand side of the unbiased one-epoch bound with a constant schedule
/// over `inp.epochs` epochs.
pub fn upper_bound_unbiased(inp: &BoundInputs) -> Result<f64> {
    let theta = theta_unbiased(inp);
    let weight = inp.lambda.powi(4);
    upper_bound(inp, theta, weight)
}

/// Right-hand side of the biased one-epoch bound with a constant schedule.
pub fn upper_bound_biased(inp: &BoundInputs) -> Result<f64> {
    let theta = theta_biased(inp);
    let weight = (1.0 - inp.lambda).powi(2);
    upper_bound(inp, theta, weight)
}

fn upper_bound(inp: &BoundInputs, theta: f64, weight: f64) -> Result<f64> {
    if theta.is_nan() || theta <= 0.0 {
        return domain(format!("bound is vacuous: denominator {theta} is not positive"));
    }
    let b = inp.batch as f64;
    let mb = inp.mini_batch as f64;
    let per_epoch = mb.powf(inp.alpha - 1.0) * b.powf(1.0 - inp.alpha);
    let optimization = (2.0 * inp.lipschitz / inp.gamma) * inp.delta_f / (theta * inp.epochs as f64 * per_epoch);
    let sampling = 2.0 * weight * indicator(inp.n, inp.batch) * inp.s_star / (theta * b.powf(1.0 - 2.0 * inp.alpha));
    Ok(optimization + sampling)
}

/// `B + √B·L·Δ_f/ε` with `B = min(1/ε, √n)`. Order of magnitude only: every
/// hidden constant is set to 1.
pub fn complexity_bound(inp: &BoundInputs) -> Result<f64> {
    if inp.epsilon.is_nan() || inp.epsilon <= 0.0 {
        return domain(format!("epsilon must be positive, got {}", inp.epsilon));
    }
    let b = (1.0 / inp.epsilon).min((inp.n as f64).sqrt());
    Ok(b + b.sqrt() * inp.lipschitz * inp.delta_f / inp.epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub points: usize,
    pub violations: usize,
    pub min_theta: f64,
    /// `(B, γ, λ)` at the minimum.
    pub argmin: (f64, f64, f64),
}

impl GridReport {
    pub fn all_positive(&self) -> bool {
        self.violations == 0
    }
}

/// Evaluates θ on a `res³` grid: B log-spaced over `[3, 10^4]`, γ over
/// `[0, 13/50]`, λ over `[0.01, 0.99]`.
pub fn theta_positivity_grid(alpha: f64, beta: f64, res: usize) -> GridReport {
    let res = res.max(2);
    let step = |i: usize| i as f64 / (res - 1) as f64;
    let (lo, hi) = (3f64.ln(), 1e4f64.ln());
    let mut report = GridReport {
        points: 0,
        violations: 0,
        min_theta: f64::INFINITY,
        argmin: (0.0, 0.0, 0.0),
    };
    let mut inp = BoundInputs {
        alpha,
        beta,
        ..BoundInputs::default()
    };
    for ib in 0..res {
        let batch = (lo + (hi - lo) * step(ib)).exp();
        for ig in 0..res {
            let gamma = GAMMA_UNBIASED_MAX * step(ig);
            for il in 0..res {
                let lambda = 0.01 + 0.98 * step(il);
                inp.gamma = gamma;
                inp.lambda = lambda;
                let theta = theta_at(&inp, batch);
                report.points += 1;
                if theta.is_nan() || theta <= 0.0 {
                    report.violations += 1;
                }
                if theta < report.min_theta {
                    report.min_theta = theta;
                    report.argmin = (batch, gamma, lambda);
                }
            }
        }
    }
    report
}

/// θ at a real-valued batch size.
fn theta_at(inp: &BoundInputs, batch: f64) -> f64 {
    let q = 1.0 - inp.lambda;
    let term = 2.0 * inp.gamma * batch.powf(inp.alpha * inp.beta - inp.alpha) + 2.0 * batch.powf(inp.beta - 1.0);
    2.0 * q - term * q * q - THETA_TAIL * q * q
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub theta: f64,
    #[serde(rename = "Theta")]
    pub theta_biased: f64,
    pub bound_unbiased: Option<f64>,
    pub bound_biased: Option<f64>,
    pub complexity: f64,
    pub positivity_region_ok: bool,
}

/// All calculators at once. Vacuous bounds are reported as `None`.
pub fn analyze(inp: &BoundInputs) -> Result<AnalysisReport> {
    inp.validate()?;
    Ok(AnalysisReport {
        theta: theta_unbiased(inp),
        theta_biased: theta_biased(inp),
        bound_unbiased: upper_bound_unbiased(inp).ok(),
        bound_biased: upper_bound_biased(inp).ok(),
        complexity: complexity_bound(inp)?,
        positivity_region_ok: theta_positivity_grid(inp.alpha, inp.beta, 100).all_positive(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Unbiased,
    Biased,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub epoch: usize,
    pub empirical_mean: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub applicable: bool,
    pub reason: Option<String>,
    pub seeds: usize,
    pub points: Vec<BoundPoint>,
    /// `Some(true)` when every epoch's mean lies at or below the bound.
    pub holds: Option<bool>,
}

impl BoundReport {
    fn inapplicable(kind: BoundKind, seeds: usize, reason: String) -> Self {
        Self {
            kind,
            applicable: false,
            reason: Some(format!("preconditions unmet: {reason}")),
            seeds,
            points: Vec::new(),
            holds: None,
        }
    }

    /// Largest `empirical / bound` ratio over the epochs.
    pub fn worst_ratio(&self) -> Option<f64> {
        self.points.iter().map(|p| p.empirical_mean / p.bound).reduce(f64::max)
    }
}

/// Compares the seed-averaged `‖∇f(x̃_j)‖²` against the bound at every epoch
/// `j`, using the partial sum over the first `j` epochs in the denominator.
///
/// The traces must come from constant-schedule `batching_svrg` runs whose
/// `(B, b, η, λ)` match `inp` with `ηL = γ(b/B)^α`. Anything else yields an
/// inapplicable report and no verdict.
pub fn verify_theorem_bound(traces: &[RunTrace], inp: &BoundInputs, kind: BoundKind) -> BoundReport {
    let seeds = traces.len();
    if let Err(reason) = check_preconditions(traces, inp, kind) {
        return BoundReport::inapplicable(kind, seeds, reason);
    }
    let horizon = traces.iter().map(|t| t.epochs.len()).min().unwrap_or(0);
    let mut points = Vec::with_capacity(horizon);
    for j in 1..=horizon {
        let mean = traces.iter().map(|t| t.epochs[j - 1].grad_norm_sq).sum::<f64>() / seeds as f64;
        let at_j = BoundInputs { epochs: j, ..*inp };
        let bound = match kind {
            BoundKind::Unbiased => upper_bound_unbiased(&at_j),
            BoundKind::Biased => upper_bound_biased(&at_j),
        };
        let bound = match bound {
            Ok(b) => b,
            Err(e) => return BoundReport::inapplicable(kind, seeds, e.to_string()),
        };
        points.push(BoundPoint {
            epoch: j,
            empirical_mean: mean,
            bound,
        });
    }
    let holds = points.iter().all(|p| p.empirical_mean <= p.bound);
    BoundReport {
        kind,
        applicable: true,
        reason: None,
        seeds,
        points,
        holds: Some(holds),
    }
}

/// Step size required by the bounds: `η = (γ/L)(b/B)^α`.
pub fn theorem_step_size(inp: &BoundInputs) -> f64 {
    inp.gamma / inp.lipschitz * (inp.mini_batch as f64 / inp.batch as f64).powf(inp.alpha)
}

fn check_preconditions(traces: &[RunTrace], inp: &BoundInputs, kind: BoundKind) -> std::result::Result<(), String> {
    inp.validate().map_err(|e| e.to_string())?;
    if traces.is_empty() {
        return Err("no traces".into());
    }
    if !(0.0..=1.0).contains(&inp.alpha) || !(0.0..=1.0).contains(&inp.beta) {
        return Err(format!("alpha = {} and beta = {} must lie in [0, 1]", inp.alpha, inp.beta));
    }
    let (b, mb) = (inp.batch as f64, inp.mini_batch as f64);
    if mb > b || mb < b.powf(inp.beta) * (1.0 - 1e-12) {
        return Err(format!("need B >= b >= B^beta, got B = {b}, b = {mb}, beta = {}", inp.beta));
    }
    let (gamma_max, theta) = match kind {
        BoundKind::Unbiased => (GAMMA_UNBIASED_MAX, theta_unbiased(inp)),
        BoundKind::Biased => (GAMMA_BIASED_MAX, theta_biased(inp)),
    };
    if inp.gamma > gamma_max {
        return Err(format!("gamma = {} exceeds {gamma_max}", inp.gamma));
    }
    if theta.is_nan() || theta <= 0.0 {
        return Err(format!("denominator {theta} is not positive"));
    }
    let eta = theorem_step_size(inp);
    for t in traces {
        if t.algorithm != Algorithm::BatchingSvrg {
            return Err(format!("trace from {} is not a batching_svrg run", t.algorithm));
        }
        for r in &t.epochs {
            let matches = r.regime == Phase::Fixed
                && r.batch == inp.batch
                && r.mini_batch == inp.mini_batch
                && (r.step_size - eta).abs() <= 1e-12 * eta
                && r.lambda == Some(inp.lambda);
            if !matches {
                return Err(format!("epoch {} of seed {} does not match the bound's schedule", r.epoch, t.seed));
            }
        }
    }
    Ok(())
}

/// Exact mean of `‖(1/m)Σ_{i∈J} x_i‖²` over every size-`m` subset `J`.
pub fn subset_mean_sq_norm(vectors: &[Vec<f64>], m: usize) -> Result<f64> {
    let n = vectors.len();
    if m == 0 || m > n {
        return domain(format!("subset size {m} outside [1, {n}]"));
    }
    let dim = vectors[0].len();
    let mut total = 0.0;
    let mut count = 0usize;
    let mut mean = vec![0.0; dim];
    for subset in (0..n).combinations(m) {
        mean.iter_mut().for_each(|v| *v = 0.0);
        for &i in &subset {
            linalg::add_assign(&mut mean, &vectors[i]);
        }
        total += linalg::norm_sq(&mean) / (m * m) as f64;
        count += 1;
    }
    Ok(total / count as f64)
}

/// `((n−m)/((n−1)m))·(1/n)Σ‖x_i − x̄‖²`, the closed form for the subset mean's
/// second moment about the population mean.
pub fn subset_variance_formula(vectors: &[Vec<f64>], m: usize) -> Result<f64> {
    let n = vectors.len();
    if m == 0 || m > n {
        return domain(format!("subset size {m} outside [1, {n}]"));
    }
    if n == 1 {
        return Ok(0.0);
    }
    let dim = vectors[0].len();
    let mut center = vec![0.0; dim];
    for v in vectors {
        linalg::add_assign(&mut center, v);
    }
    center.iter_mut().for_each(|c| *c /= n as f64);
    let spread = vectors.iter().map(|v| linalg::norm_sq(&linalg::sub(v, &center))).sum::<f64>() / n as f64;
    Ok(indicator(n, m) * spread)
}

/// `‖(1−λ)x − λy‖² ≤ (1−λ)²‖x−y‖²` for scalars, with a relative slack of 1e-12.
pub fn lambda_inequality_holds(lambda: f64, x: f64, y: f64) -> bool {
    let lhs = ((1.0 - lambda) * x - lambda * y).powi(2);
    let rhs = (1.0 - lambda).powi(2) * (x - y).powi(2);
    lhs <= rhs + 1e-12 * lhs.max(rhs)
}

/// A Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub mean: f64,
    pub std_err: f64,
    pub draws: usize,
}

impl MonteCarlo {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            std_err: (var / n).sqrt(),
            draws: samples.len(),
        }
    }

    /// `|mean − target| ≤ k·std_err`
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_err
    }
}

/// Samples `(D_N − D_{N+1}) − (1/γ − 1)(D_0 − D_N)` for `N ~ Geom(γ)` with
/// `γ = B/(B+b)`. Its expectation is zero for any bounded sequence `D`.
pub fn geometric_identity_residual(
    rng: &mut RngState,
    batch: usize,
    mini_batch: usize,
    draws: usize,
    seq: impl Fn(u64) -> f64,
) -> Result<MonteCarlo> {
    let gamma = batch as f64 / (batch + mini_batch) as f64;
    let coeff = 1.0 / gamma - 1.0;
    let d0 = seq(0);
    let mut samples = Vec::with_capacity(draws);
    for _ in 0..draws {
        let k = rng.sample_geometric(batch, mini_batch)?;
        let dn = seq(k);
        samples.push((dn - seq(k + 1)) - coeff * (d0 - dn));
    }
    Ok(MonteCarlo::from_samples(&samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(b: usize, gamma: f64, lambda: f64, alpha: f64, beta: f64) -> BoundInputs {
        BoundInputs {
            batch: b,
            gamma,
            lambda,
            alpha,
            beta,
            ..BoundInputs::default()
        }
    }

    #[test]
    fn theta_near_one_is_small_positive() {
        for b in [3, 10, 1000] {
            for gamma in [0.0, 0.1, 0.26] {
                let t = theta_unbiased(&inputs(b, gamma, 0.999, 0.0, 0.25));
                assert!(t > 0.0 && t < 0.002, "{t}");
            }
        }
    }

    #[test]
    fn theta_point_value() {
        let t = theta_unbiased(&inputs(3, 0.26, 0.32, 0.0, 1.0));
        let q: f64 = 0.68;
        let want = 2.0 * q - (2.0 * 0.26 + 2.0) * q * q - 1.16 * q * q;
        assert!((t - want).abs() < 1e-15);
        // With b = B the schedule term is 2γ + 2, which outweighs 2(1−λ) here.
        assert!(t < 0.0);
    }

    #[test]
    fn biased_limit_and_identity() {
        let inp = BoundInputs {
            lipschitz: 2.0,
            ..inputs(1_000_000, 0.2, 0.4, 1.0, 0.0)
        };
        let q: f64 = 0.6;
        let limit = 2.0 * q + 8.0 * q * q - 1.16 * q * q;
        assert!((theta_biased(&inp) - limit).abs() < 1e-6);

        let inp = inputs(37, 0.3, 0.7, 0.4, 0.6);
        let gap = 4.0 * inp.lipschitz * 37f64.powf(2.0 * 0.4 - 2.0) * 0.09;
        assert!((theta_biased(&inp) - theta_unbiased(&inp) - gap).abs() < 1e-14);
    }

    #[test]
    fn full_batch_drops_sampling_term() {
        let inp = BoundInputs {
            n: 100,
            batch: 100,
            ..inputs(100, 0.26, 0.32, 0.0, 0.25)
        };
        let theta = theta_unbiased(&inp);
        let got = upper_bound_unbiased(&inp).unwrap();
        let per_epoch = 4f64.powf(-1.0) * 100.0;
        assert!((got - 2.0 / 0.26 / (theta * 100.0 * per_epoch)).abs() < 1e-12);
        assert_eq!(indicator(100, 100), 0.0);
        assert_eq!(indicator(10, 4), 6.0 / 36.0);
    }

    #[test]
    fn vacuous_bound_is_an_error() {
        let inp = inputs(3, 0.26, 0.01, 0.0, 0.25);
        assert!(theta_unbiased(&inp) < 0.0);
        assert!(upper_bound_unbiased(&inp).is_err());
    }

    #[test]
    fn complexity_examples() {
        let inp = BoundInputs {
            n: 10_000,
            epsilon: 0.01,
            lipschitz: 1.0,
            delta_f: 1.0,
            ..BoundInputs::default()
        };
        assert!((complexity_bound(&inp).unwrap() - 1100.0).abs() < 1e-9);
        assert!(complexity_bound(&BoundInputs { epsilon: 0.0, ..inp }).is_err());
    }

    #[test]
    fn grid_positive_when_schedule_term_is_small() {
        assert!(theta_positivity_grid(1.0, 0.0, 40).all_positive());
    }

    #[test]
    fn lemma_subset_small_case() {
        let v = vec![vec![1.0], vec![-1.0], vec![2.0], vec![-2.0]];
        let exact = subset_mean_sq_norm(&v, 2).unwrap();
        let formula = subset_variance_formula(&v, 2).unwrap();
        assert!((exact - formula).abs() < 1e-14);
        assert!(subset_mean_sq_norm(&v, 5).is_err());
    }

    #[test]
    fn lambda_inequality_counterexample() {
        assert!(lambda_inequality_holds(0.5, 3.0, 7.0));
        assert!(!lambda_inequality_holds(0.25, -2.0, -1.0));
    }
}
