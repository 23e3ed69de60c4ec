//! Finite-sum objectives `f(x) = (1/n) Σ f_i(x)` with counted access to
//! component gradients.
//!
//! Indices are zero-based (`0..n`). Every batch gradient is accumulated in
//! ascending index order so that results are bit-stable across runs and
//! platforms; `grad_batch` over the full index set is therefore bitwise
//! identical to `full_grad`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg;

/// Cumulative count of component-gradient evaluations.
///
/// A batch gradient over an index set `I` costs exactly `|I|`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IfoCounter {
    count: u64,
}

impl IfoCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self) -> u64 {
        self.count
    }

    pub(crate) fn charge(&mut self, units: u64) {
        self.count += units;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// Sigmoid loss `1/(1+exp(y a·x))` plus a small ridge term.
    Sigmoid,
    /// `½(a·x − y)²` plus the non-convex penalty `μ Σ x_k²/(1+x_k²)`.
    LeastSquares,
    /// Weighted Rosenbrock terms on coordinate pairs `(k, k+1)`.
    Rosenbrock,
    /// Two-layer tanh perceptron fit to a random teacher network.
    Mlp,
    /// `½‖x − c_i‖²`.
    Quadratic,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 5] = [
        ProblemKind::Sigmoid,
        ProblemKind::LeastSquares,
        ProblemKind::Rosenbrock,
        ProblemKind::Mlp,
        ProblemKind::Quadratic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Sigmoid => "sigmoid",
            ProblemKind::LeastSquares => "least_squares",
            ProblemKind::Rosenbrock => "rosenbrock",
            ProblemKind::Mlp => "mlp",
            ProblemKind::Quadratic => "quadratic",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            ProblemKind::Sigmoid => "binary classification with the (non-convex) sigmoid loss, analytic L",
            ProblemKind::LeastSquares => "least squares with a non-convex x²/(1+x²) penalty, analytic L",
            ProblemKind::Rosenbrock => "sum of randomly weighted Rosenbrock pair terms, probe-estimated L",
            ProblemKind::Mlp => "two-layer tanh network regression on teacher data (d = input dim), probe-estimated L",
            ProblemKind::Quadratic => "strongly convex ½‖x − c_i‖², L = 1",
        }
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProblemKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown problem kind `{s}`")))
    }
}

fn default_reg() -> f64 {
    1e-3
}
fn default_label_noise() -> f64 {
    0.1
}
fn default_hidden() -> usize {
    4
}
fn default_spread() -> f64 {
    1.0
}

/// Problem-specific knobs. Each kind reads only the fields it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemParams {
    /// Regularization weight (ridge for sigmoid, non-convex penalty for least squares).
    #[serde(default = "default_reg")]
    pub reg: f64,
    /// Label flip probability (sigmoid) or target noise standard deviation (least squares, mlp).
    #[serde(default = "default_label_noise")]
    pub label_noise: f64,
    /// Hidden width of the perceptron.
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// Standard deviation of quadratic centers / planted weights.
    #[serde(default = "default_spread")]
    pub spread: f64,
    /// Standard deviation of feature entries (sigmoid, least squares).
    #[serde(default = "default_feature_scale")]
    pub feature_scale: f64,
}

impl Default for ProblemParams {
    fn default() -> Self {
        Self {
            reg: default_reg(),
            label_noise: default_label_noise(),
            hidden: default_hidden(),
            spread: default_spread(),
            feature_scale: default_feature_scale(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: ProblemParams,
}

fn default_feature_scale() -> f64 {
    1.0
}

fn default_n() -> usize {
    1000
}
fn default_d() -> usize {
    20
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind, n: usize, d: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            d,
            seed,
            params: ProblemParams::default(),
        }
    }
}

/// How the smoothness constant attached to an objective was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LipschitzSource {
    Analytic,
    Probed,
}

const PROBE_PAIRS: usize = 100;
const PROBE_SAFETY: f64 = 1.5;
const PROBE_RADIUS: f64 = 1e-2;
/// max |σ''(z)| for the logistic function.
const SIGMOID_CURVATURE: f64 = 0.096_225_044_864_937_6; // 1 / (6√3)

#[derive(Debug, Clone)]
enum Model {
    Quadratic {
        centers: Vec<f64>,
    },
    LeastSquares {
        features: Vec<f64>,
        targets: Vec<f64>,
        reg: f64,
    },
    Sigmoid {
        features: Vec<f64>,
        labels: Vec<f64>,
        reg: f64,
    },
    Rosenbrock {
        scales: Vec<f64>,
    },
    Mlp {
        inputs: Vec<f64>,
        targets: Vec<f64>,
        input_dim: usize,
        hidden: usize,
    },
}

/// A finite sum of `n` smooth components on `R^d`.
///
/// Evaluation is pure; all mutable accounting lives in the caller's
/// [`IfoCounter`], so one objective can be shared across threads.
#[derive(Debug, Clone)]
pub struct FiniteSumObjective {
    name: String,
    n: usize,
    d: usize,
    model: Model,
    lipschitz: f64,
    lipschitz_source: LipschitzSource,
    probe_ifo: u64,
}

impl FiniteSumObjective {
    /// `f_i(x) = ½‖x − c_i‖²` for the given centers.
    pub fn quadratic(centers: &[Vec<f64>]) -> Result<Self> {
        let (n, d, flat) = flatten(centers)?;
        Ok(Self::with_analytic(
            "quadratic",
            n,
            d,
            Model::Quadratic { centers: flat },
            1.0,
        ))
    }

    /// `f_i(x) = ½(a_i·x − y_i)² + reg·Σ_k x_k²/(1+x_k²)`.
    pub fn least_squares(features: &[Vec<f64>], targets: &[f64], reg: f64) -> Result<Self> {
        let (n, d, flat) = flatten(features)?;
        if targets.len() != n {
            return domain("targets length must match the number of rows");
        }
        // The penalty's second derivative lies in [-reg/2, 2 reg].
        let l = top_eigenvalue_gram(&flat, n, d) + 2.0 * reg.abs();
        Ok(Self::with_analytic(
            "least_squares",
            n,
            d,
            Model::LeastSquares {
                features: flat,
                targets: targets.to_vec(),
                reg,
            },
            l,
        ))
    }

    /// `f_i(x) = 1/(1 + exp(y_i a_i·x)) + (reg/2)‖x‖²` with labels `y_i ∈ {−1, +1}`.
    pub fn sigmoid(features: &[Vec<f64>], labels: &[f64], reg: f64) -> Result<Self> {
        let (n, d, flat) = flatten(features)?;
        if labels.len() != n {
            return domain("labels length must match the number of rows");
        }
        let l = SIGMOID_CURVATURE * top_eigenvalue_gram(&flat, n, d) + reg.abs();
        Ok(Self::with_analytic(
            "sigmoid",
            n,
            d,
            Model::Sigmoid {
                features: flat,
                labels: labels.to_vec(),
                reg,
            },
            l,
        ))
    }

    fn with_analytic(name: &str, n: usize, d: usize, model: Model, lipschitz: f64) -> Self {
        Self {
            name: name.to_string(),
            n,
            d,
            model,
            lipschitz,
            lipschitz_source: LipschitzSource::Analytic,
            probe_ifo: 0,
        }
    }

    fn with_probed(name: &str, n: usize, d: usize, model: Model, seed: u64) -> Self {
        let mut obj = Self {
            name: name.to_string(),
            n,
            d,
            model,
            lipschitz: f64::NAN,
            lipschitz_source: LipschitzSource::Probed,
            probe_ifo: 0,
        };
        let mut counter = IfoCounter::new();
        obj.lipschitz = obj.probe_lipschitz(seed, &mut counter);
        obj.probe_ifo = counter.get();
        obj
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Smoothness constant `L` attached at construction.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn lipschitz_source(&self) -> LipschitzSource {
        self.lipschitz_source
    }

    /// Component gradients spent estimating `L` (zero for analytic `L`).
    pub fn probe_ifo(&self) -> u64 {
        self.probe_ifo
    }

    /// `f_i(x)`. Values are not charged to any counter.
    pub fn component_value(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.check_index(i)?;
        self.check_point(x)?;
        Ok(self.value_raw(i, x))
    }

    /// `f(x)`, the mean of all component values.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let sum: f64 = (0..self.n).map(|i| self.value_raw(i, x)).sum();
        Ok(sum / self.n as f64)
    }

    /// `∇f_i(x)`; charges one IFO.
    pub fn grad_component(&self, i: usize, x: &[f64], counter: &mut IfoCounter) -> Result<Vec<f64>> {
        self.check_index(i)?;
        self.check_point(x)?;
        let mut g = vec![0.0; self.d];
        self.grad_raw(i, x, &mut g);
        counter.charge(1);
        Ok(g)
    }

    /// `∇f_I(x) = (1/|I|) Σ_{i∈I} ∇f_i(x)`; charges `|I|` IFO.
    pub fn grad_batch(&self, indices: &[usize], x: &[f64], counter: &mut IfoCounter) -> Result<Vec<f64>> {
        let indices = self.checked_indices(indices)?;
        self.check_point(x)?;
        let mut sum = vec![0.0; self.d];
        let mut g = vec![0.0; self.d];
        for &i in indices.iter() {
            self.grad_raw(i, x, &mut g);
            linalg::add_assign(&mut sum, &g);
        }
        counter.charge(indices.len() as u64);
        Ok(mean_of_sum(sum, indices.len()))
    }

    /// Like [`grad_batch`](Self::grad_batch) but also returns every component
    /// gradient (in ascending index order) so callers can reuse them.
    pub fn grad_batch_with_components(
        &self,
        indices: &[usize],
        x: &[f64],
        counter: &mut IfoCounter,
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let indices = self.checked_indices(indices)?;
        self.check_point(x)?;
        let mut sum = vec![0.0; self.d];
        let mut comps = Vec::with_capacity(indices.len());
        for &i in indices.iter() {
            let mut g = vec![0.0; self.d];
            self.grad_raw(i, x, &mut g);
            linalg::add_assign(&mut sum, &g);
            comps.push(g);
        }
        counter.charge(indices.len() as u64);
        Ok((mean_of_sum(sum, indices.len()), comps))
    }

    /// `∇f(x)`; charges `n` IFO.
    pub fn full_grad(&self, x: &[f64], counter: &mut IfoCounter) -> Result<Vec<f64>> {
        let all: Vec<usize> = (0..self.n).collect();
        self.grad_batch(&all, x, counter)
    }

    /// Population variance `(1/n) Σ ‖∇f_i(x) − ∇f(x)‖²` of component
    /// gradients; charges `n` IFO (components are reused for the mean).
    pub fn variance_s(&self, x: &[f64], counter: &mut IfoCounter) -> Result<f64> {
        let all: Vec<usize> = (0..self.n).collect();
        let (mean, comps) = self.grad_batch_with_components(&all, x, counter)?;
        Ok(mean_sq_deviation(&comps, &mean))
    }

    /// `‖∇f(x)‖²`. Pass a dedicated evaluation counter so that termination
    /// checks stay out of the optimizer's IFO budget.
    pub fn grad_norm_sq(&self, x: &[f64], eval_counter: &mut IfoCounter) -> Result<f64> {
        let g = self.full_grad(x, eval_counter)?;
        Ok(linalg::norm_sq(&g))
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n {
            return domain(format!("component index {i} out of range 0..{}", self.n));
        }
        Ok(())
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return domain(format!("point has dimension {}, expected {}", x.len(), self.d));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return domain("point has non-finite coordinates");
        }
        Ok(())
    }

    fn checked_indices<'a>(&self, indices: &'a [usize]) -> Result<std::borrow::Cow<'a, [usize]>> {
        if indices.is_empty() {
            return domain("empty index set");
        }
        let sorted = if indices.windows(2).all(|w| w[0] < w[1]) {
            std::borrow::Cow::Borrowed(indices)
        } else {
            let mut v = indices.to_vec();
            v.sort_unstable();
            if v.windows(2).any(|w| w[0] == w[1]) {
                return domain("index set contains duplicates");
            }
            std::borrow::Cow::Owned(v)
        };
        if let Some(&last) = sorted.last() {
            self.check_index(last)?;
        }
        Ok(sorted)
    }

    fn value_raw(&self, i: usize, x: &[f64]) -> f64 {
        let d = self.d;
        match &self.model {
            Model::Quadratic { centers } => {
                let c = &centers[i * d..(i + 1) * d];
                0.5 * x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            }
            Model::LeastSquares {
                features,
                targets,
                reg,
            } => {
                let r = linalg::dot(&features[i * d..(i + 1) * d], x) - targets[i];
                let pen: f64 = x.iter().map(|v| v * v / (1.0 + v * v)).sum();
                0.5 * r * r + reg * pen
            }
            Model::Sigmoid {
                features,
                labels,
                reg,
            } => {
                let z = labels[i] * linalg::dot(&features[i * d..(i + 1) * d], x);
                logistic(-z) + 0.5 * reg * linalg::norm_sq(x)
            }
            Model::Rosenbrock { scales } => {
                let k = i % (d - 1);
                let (a, b) = (x[k], x[k + 1]);
                scales[i] * (100.0 * (b - a * a).powi(2) + (1.0 - a).powi(2))
            }
            Model::Mlp {
                inputs,
                targets,
                input_dim,
                hidden,
            } => {
                let a = &inputs[i * input_dim..(i + 1) * input_dim];
                let out = mlp_forward(x, a, *input_dim, *hidden, None);
                0.5 * (out - targets[i]).powi(2)
            }
        }
    }

    fn grad_raw(&self, i: usize, x: &[f64], g: &mut [f64]) {
        let d = self.d;
        match &self.model {
            Model::Quadratic { centers } => {
                let c = &centers[i * d..(i + 1) * d];
                for ((gk, xk), ck) in g.iter_mut().zip(x).zip(c) {
                    *gk = xk - ck;
                }
            }
            Model::LeastSquares {
                features,
                targets,
                reg,
            } => {
                let a = &features[i * d..(i + 1) * d];
                let r = linalg::dot(a, x) - targets[i];
                for ((gk, ak), xk) in g.iter_mut().zip(a).zip(x) {
                    let q = 1.0 + xk * xk;
                    *gk = r * ak + reg * 2.0 * xk / (q * q);
                }
            }
            Model::Sigmoid {
                features,
                labels,
                reg,
            } => {
                let a = &features[i * d..(i + 1) * d];
                let y = labels[i];
                let s = logistic(-y * linalg::dot(a, x));
                let coef = -s * (1.0 - s) * y;
                for ((gk, ak), xk) in g.iter_mut().zip(a).zip(x) {
                    *gk = coef * ak + reg * xk;
                }
            }
            Model::Rosenbrock { scales } => {
                g.iter_mut().for_each(|v| *v = 0.0);
                let k = i % (d - 1);
                let (a, b) = (x[k], x[k + 1]);
                let s = scales[i];
                let t = b - a * a;
                g[k] = s * (-400.0 * a * t - 2.0 * (1.0 - a));
                g[k + 1] = s * 200.0 * t;
            }
            Model::Mlp {
                inputs,
                targets,
                input_dim,
                hidden,
            } => {
                let a = &inputs[i * input_dim..(i + 1) * input_dim];
                g.iter_mut().for_each(|v| *v = 0.0);
                let out = mlp_forward(x, a, *input_dim, *hidden, None);
                let r = out - targets[i];
                mlp_forward(x, a, *input_dim, *hidden, Some((r, g)));
            }
        }
    }

    /// Largest observed gradient-difference ratio over random nearby pairs,
    /// inflated by a safety factor.
    fn probe_lipschitz(&self, seed: u64, counter: &mut IfoCounter) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1195_c4a5_e11d);
        let mut best: f64 = 0.0;
        for _ in 0..PROBE_PAIRS {
            let x: Vec<f64> = (0..self.d).map(|_| rng.sample(StandardNormal)).collect();
            let y: Vec<f64> = x
                .iter()
                .map(|v| v + PROBE_RADIUS * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let gx = self.full_grad(&x, counter).expect("probe point is finite");
            let gy = self.full_grad(&y, counter).expect("probe point is finite");
            let num = linalg::norm_sq(&linalg::sub(&gx, &gy)).sqrt();
            let den = linalg::norm_sq(&linalg::sub(&x, &y)).sqrt();
            if den > 0.0 {
                best = best.max(num / den);
            }
        }
        PROBE_SAFETY * best
    }
}

/// Builds the objective described by `spec`. Identical specs give
/// bit-identical objectives.
pub fn make_problem(spec: &ProblemSpec) -> Result<FiniteSumObjective> {
    let ProblemSpec {
        kind,
        n,
        d,
        seed,
        ref params,
    } = *spec;
    if n == 0 || d == 0 {
        return Err(Error::Config("n and d must be positive".into()));
    }
    if !(params.feature_scale > 0.0 && params.feature_scale.is_finite()) {
        return Err(Error::Config(format!(
            "feature_scale must be positive, got {}",
            params.feature_scale
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng, len: usize| -> Vec<f64> {
        (0..len).map(|_| rng.sample(StandardNormal)).collect()
    };
    let obj = match kind {
        ProblemKind::Quadratic => {
            let centers: Vec<Vec<f64>> = (0..n)
                .map(|_| normal(&mut rng, d).into_iter().map(|v| v * params.spread).collect())
                .collect();
            FiniteSumObjective::quadratic(&centers)?
        }
        ProblemKind::LeastSquares => {
            let planted: Vec<f64> = normal(&mut rng, d).into_iter().map(|v| v * params.spread).collect();
            let features: Vec<Vec<f64>> = (0..n)
                .map(|_| normal(&mut rng, d).into_iter().map(|v| v * params.feature_scale).collect())
                .collect();
            let targets: Vec<f64> = features
                .iter()
                .map(|a| linalg::dot(a, &planted) + params.label_noise * rng.sample::<f64, _>(StandardNormal))
                .collect();
            FiniteSumObjective::least_squares(&features, &targets, params.reg)?
        }
        ProblemKind::Sigmoid => {
            let planted: Vec<f64> = normal(&mut rng, d).into_iter().map(|v| v * params.spread).collect();
            let features: Vec<Vec<f64>> = (0..n)
                .map(|_| normal(&mut rng, d).into_iter().map(|v| v * params.feature_scale).collect())
                .collect();
            let labels: Vec<f64> = features
                .iter()
                .map(|a| {
                    let clean = if linalg::dot(a, &planted) >= 0.0 { 1.0 } else { -1.0 };
                    if rng.random::<f64>() < params.label_noise {
                        -clean
                    } else {
                        clean
                    }
                })
                .collect();
            FiniteSumObjective::sigmoid(&features, &labels, params.reg)?
        }
        ProblemKind::Rosenbrock => {
            if d < 2 {
                return Err(Error::Config("rosenbrock needs d >= 2".into()));
            }
            let scales: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
            FiniteSumObjective::with_probed("rosenbrock", n, d, Model::Rosenbrock { scales }, seed)
        }
        ProblemKind::Mlp => {
            let hidden = params.hidden;
            if hidden == 0 {
                return Err(Error::Config("mlp needs hidden >= 1".into()));
            }
            let dim = hidden * d + hidden;
            let teacher = normal(&mut rng, dim);
            let inputs = normal(&mut rng, n * d);
            let scale = 1.0 / (d as f64).sqrt();
            let teacher: Vec<f64> = teacher.into_iter().map(|v| v * scale).collect();
            let targets: Vec<f64> = (0..n)
                .map(|i| {
                    let a = &inputs[i * d..(i + 1) * d];
                    mlp_forward(&teacher, a, d, hidden, None)
                        + params.label_noise * rng.sample::<f64, _>(StandardNormal)
                })
                .collect();
            FiniteSumObjective::with_probed(
                "mlp",
                n,
                dim,
                Model::Mlp {
                    inputs,
                    targets,
                    input_dim: d,
                    hidden,
                },
                seed,
            )
        }
    };
    Ok(obj)
}

/// Mean squared distance of `comps` from `center`.
pub(crate) fn mean_sq_deviation(comps: &[Vec<f64>], center: &[f64]) -> f64 {
    let total: f64 = comps
        .iter()
        .map(|g| g.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    total / comps.len() as f64
}

fn mean_of_sum(mut sum: Vec<f64>, m: usize) -> Vec<f64> {
    let m = m as f64;
    sum.iter_mut().for_each(|v| *v /= m);
    sum
}

fn flatten(rows: &[Vec<f64>]) -> Result<(usize, usize, Vec<f64>)> {
    let n = rows.len();
    if n == 0 {
        return domain("need at least one component");
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return domain("rows must be non-empty and of equal length");
    }
    Ok((n, d, rows.concat()))
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Output `w2 · tanh(W1 a)` with parameters laid out as `[W1 (hidden × p), w2 (hidden)]`.
/// When `backprop = Some((r, g))`, accumulates `r · ∂out/∂params` into `g` instead.
fn mlp_forward(params: &[f64], a: &[f64], p: usize, hidden: usize, backprop: Option<(f64, &mut [f64])>) -> f64 {
    let (w1, w2) = params.split_at(hidden * p);
    let mut out = 0.0;
    match backprop {
        None => {
            for h in 0..hidden {
                let z = linalg::dot(&w1[h * p..(h + 1) * p], a);
                out += w2[h] * z.tanh();
            }
        }
        Some((r, g)) => {
            let (g1, g2) = g.split_at_mut(hidden * p);
            for h in 0..hidden {
                let t = linalg::dot(&w1[h * p..(h + 1) * p], a).tanh();
                out += w2[h] * t;
                g2[h] += r * t;
                let back = r * w2[h] * (1.0 - t * t);
                for (gk, ak) in g1[h * p..(h + 1) * p].iter_mut().zip(a) {
                    *gk += back * ak;
                }
            }
        }
    }
    out
}

/// Largest eigenvalue of `(1/n) AᵀA` by power iteration.
fn top_eigenvalue_gram(a: &[f64], n: usize, d: usize) -> f64 {
    let mut gram = vec![0.0; d * d];
    for row in a.chunks_exact(d) {
        for r in 0..d {
            for c in 0..d {
                gram[r * d + c] += row[r] * row[c];
            }
        }
    }
    gram.iter_mut().for_each(|v| *v /= n as f64);

    let mut v: Vec<f64> = (0..d).map(|k| 1.0 + 0.01 * k as f64).collect();
    let mut estimate = 0.0;
    for _ in 0..10_000 {
        let w: Vec<f64> = (0..d).map(|r| linalg::dot(&gram[r * d..(r + 1) * d], &v)).collect();
        let norm = linalg::norm_sq(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm / linalg::norm_sq(&v).sqrt();
        v = w.into_iter().map(|x| x / norm).collect();
        if (next - estimate).abs() <= 1e-13 * next {
            return next;
        }
        estimate = next;
    }
    estimate
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_sigmoid() -> FiniteSumObjective {
        make_problem(&ProblemSpec::new(ProblemKind::Sigmoid, 50, 5, 3)).unwrap()
    }

    #[test]
    fn least_squares_unit_component() {
        let obj = FiniteSumObjective::least_squares(&[vec![1.0, 0.0]], &[0.0], 0.0).unwrap();
        let mut c = IfoCounter::new();
        let g = obj.grad_component(0, &[1.0, 0.0], &mut c).unwrap();
        assert_eq!(g, vec![1.0, 0.0]);
        assert_eq!(c.get(), 1);
    }

    #[test]
    fn out_of_range_and_non_finite_are_domain_errors() {
        let obj = small_sigmoid();
        let mut c = IfoCounter::new();
        let x = vec![0.0; 5];
        assert!(matches!(obj.grad_component(50, &x, &mut c), Err(Error::Domain(_))));
        let bad = vec![0.0, f64::NAN, 0.0, 0.0, 0.0];
        assert!(matches!(obj.grad_component(0, &bad, &mut c), Err(Error::Domain(_))));
        assert!(matches!(obj.grad_batch(&[], &x, &mut c), Err(Error::Domain(_))));
        assert!(matches!(obj.grad_batch(&[3, 1, 3], &x, &mut c), Err(Error::Domain(_))));
        assert_eq!(c.get(), 0);
    }

    #[test]
    fn full_batch_is_bitwise_full_grad() {
        let obj = small_sigmoid();
        let x = vec![0.3, -0.2, 0.1, 0.5, -1.0];
        let mut c = IfoCounter::new();
        let all: Vec<usize> = (0..50).collect();
        assert_eq!(obj.grad_batch(&all, &x, &mut c).unwrap(), obj.full_grad(&x, &mut c).unwrap());
        assert_eq!(c.get(), 100);
        // unsorted input is accepted and summed in ascending order
        let g1 = obj.grad_batch(&[7, 2, 40], &x, &mut c).unwrap();
        let g2 = obj.grad_batch(&[2, 7, 40], &x, &mut c).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn singleton_batch_matches_component() {
        let obj = small_sigmoid();
        let x = vec![0.3, -0.2, 0.1, 0.5, -1.0];
        let mut c = IfoCounter::new();
        assert_eq!(
            obj.grad_batch(&[13], &x, &mut c).unwrap(),
            obj.grad_component(13, &x, &mut c).unwrap()
        );
    }

    #[test]
    fn quadratic_full_gradient_is_x_minus_mean() {
        let centers = vec![vec![1.0, 2.0], vec![3.0, -2.0], vec![2.0, 3.0]];
        let obj = FiniteSumObjective::quadratic(&centers).unwrap();
        let mut c = IfoCounter::new();
        let g = obj.full_grad(&[0.0, 0.0], &mut c).unwrap();
        assert!((g[0] + 2.0).abs() < 1e-15 && (g[1] + 1.0).abs() < 1e-15);
        assert_eq!(c.get(), 3);
    }

    #[test]
    fn rosenbrock_minimizer_and_probed_l() {
        let obj = make_problem(&ProblemSpec::new(ProblemKind::Rosenbrock, 30, 4, 1)).unwrap();
        let mut c = IfoCounter::new();
        let g = obj.full_grad(&[1.0; 4], &mut c).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
        assert_eq!(obj.lipschitz_source(), LipschitzSource::Probed);
        assert!(obj.lipschitz().is_finite() && obj.lipschitz() > 0.0);
        assert_eq!(obj.probe_ifo(), 2 * 100 * 30);
    }

    #[test]
    fn variance_examples() {
        let same = FiniteSumObjective::quadratic(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let mut c = IfoCounter::new();
        assert_eq!(same.variance_s(&[0.5, 0.0], &mut c).unwrap(), 0.0);
        // ∇f_1 = x − c_1 = +e1, ∇f_2 = −e1 at x = 0
        let opposed = FiniteSumObjective::quadratic(&[vec![-1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(opposed.variance_s(&[0.0, 0.0], &mut c).unwrap(), 1.0);
        assert_eq!(c.get(), 4);
    }

    #[test]
    fn grad_norm_sq_of_three_four() {
        // single component with gradient (3, 4) at the origin
        let obj = FiniteSumObjective::quadratic(&[vec![-3.0, -4.0]]).unwrap();
        let mut eval = IfoCounter::new();
        assert_eq!(obj.grad_norm_sq(&[0.0, 0.0], &mut eval).unwrap(), 25.0);
        assert_eq!(eval.get(), 1);
    }

    #[test]
    fn unknown_kind_is_config_error() {
        assert!(matches!("resnet".parse::<ProblemKind>(), Err(Error::Config(_))));
        assert_eq!("least_squares".parse::<ProblemKind>().unwrap(), ProblemKind::LeastSquares);
    }

    #[test]
    fn mlp_dimension_counts_both_layers() {
        let mut spec = ProblemSpec::new(ProblemKind::Mlp, 20, 3, 9);
        spec.params.hidden = 5;
        let obj = make_problem(&spec).unwrap();
        assert_eq!(obj.dim(), 5 * 3 + 5);
    }
}
