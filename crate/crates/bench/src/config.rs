//! JSON experiment configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vcsg_core::estimators::EstimatorKind;
use vcsg_core::optimizers::{Algorithm, FixedEpoch, RunConfig};
use vcsg_core::oracle::ProblemSpec;
use vcsg_core::schedules::ScheduleConfig;

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    #[default]
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

/// One experiment: a problem, the algorithms to run on it, the seeds and
/// every schedule constant. Fields left out take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub problem: ProblemSpec,
    /// Algorithm for `run`.
    #[serde(default)]
    pub algorithm: Option<Algorithm>,
    /// Algorithms for `compare`.
    #[serde(default)]
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Smoothness constant; taken from the problem when absent.
    #[serde(default)]
    pub lipschitz: Option<f64>,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "one")]
    pub c_b: f64,
    #[serde(default = "default_smoothing")]
    pub s_star_smoothing: f64,
    /// Estimator for `batching_svrg`, e.g. `"biased:0.625"`.
    #[serde(default)]
    pub estimator: Option<EstimatorKind>,
    /// Per-epoch `(batch, mini_batch, step_size)` for `batching_svrg`; the
    /// last entry repeats.
    #[serde(default)]
    pub fixed: Vec<FixedEpoch>,
    #[serde(default)]
    pub sgd_step: Option<f64>,
    #[serde(default)]
    pub scsg_batch: Option<usize>,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default)]
    pub stop_at_epsilon: bool,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub format: Format,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_epsilon() -> f64 {
    1e-3
}
fn one() -> f64 {
    1.0
}
fn default_rho() -> f64 {
    0.9
}
fn default_gamma() -> f64 {
    1.0 / 3.0
}
fn default_beta() -> f64 {
    0.25
}
fn default_epochs() -> usize {
    100
}
fn default_smoothing() -> f64 {
    0.5
}
fn default_init_scale() -> f64 {
    0.1
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

pub fn load_config(path: &Path) -> Result<BenchConfig> {
    let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        BenchError::Config(msg) => BenchError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_config(text: &str) -> Result<BenchConfig> {
    let cfg: BenchConfig = serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl BenchConfig {
    /// Every algorithm named by the config, `algorithm` first.
    pub fn all_algorithms(&self) -> Vec<Algorithm> {
        let mut out: Vec<Algorithm> = self.algorithm.into_iter().collect();
        for a in &self.algorithms {
            if !out.contains(a) {
                out.push(*a);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let algorithms = self.all_algorithms();
        if algorithms.is_empty() {
            return Err(BenchError::Config("set `algorithm` or `algorithms`".into()));
        }
        if self.seeds.is_empty() {
            return Err(BenchError::Config("`seeds` must not be empty".into()));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(BenchError::Config(format!(
                "init_scale must be finite and non-negative, got {}",
                self.init_scale
            )));
        }
        let schedule = self.schedule(self.lipschitz.unwrap_or(1.0));
        for alg in algorithms {
            let checked = match alg {
                Algorithm::Vcsg => schedule.validate_adaptive(),
                _ => schedule.validate(),
            };
            checked.map_err(|e| BenchError::Config(format!("{alg}: {}", strip_kind(&e))))?;
            if alg == Algorithm::BatchingSvrg && (self.estimator.is_none() || self.fixed.is_empty()) {
                return Err(BenchError::Config(
                    "batching_svrg needs `estimator` and at least one `fixed` epoch".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn schedule(&self, lipschitz: f64) -> ScheduleConfig {
        ScheduleConfig {
            epsilon: self.epsilon,
            sigma: self.sigma,
            rho: self.rho,
            gamma: self.gamma,
            lipschitz,
            alpha: self.alpha,
            beta: self.beta,
            n: self.problem.n,
            epochs: self.epochs,
            c_b: self.c_b,
            s_star_smoothing: self.s_star_smoothing,
        }
    }

    pub fn run_config(&self, algorithm: Algorithm, seed: u64, lipschitz: f64) -> RunConfig {
        RunConfig {
            algorithm,
            schedule: self.schedule(self.lipschitz.unwrap_or(lipschitz)),
            estimator: self.estimator,
            fixed: self.fixed.clone(),
            sgd_step: self.sgd_step,
            scsg_batch: self.scsg_batch,
            seed,
            stop_at_epsilon: self.stop_at_epsilon,
            init_scale: self.init_scale,
            initial_point: None,
        }
    }
}

fn strip_kind(e: &vcsg_core::Error) -> String {
    match e {
        vcsg_core::Error::Config(m) | vcsg_core::Error::Domain(m) => m.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = parse_config(r#"{"problem": {"kind": "sigmoid"}, "algorithm": "vcsg"}"#).unwrap();
        assert_eq!(cfg.gamma, 1.0 / 3.0);
        assert_eq!(cfg.c_b, 1.0);
        assert_eq!(cfg.s_star_smoothing, 0.5);
        assert_eq!(cfg.epochs, 100);
        assert_eq!(cfg.seeds, vec![0]);
        assert_eq!(cfg.problem.n, 1000);
        assert_eq!(cfg.problem.d, 20);
        assert_eq!(cfg.format, Format::Both);
    }

    #[test]
    fn rejects_large_gamma_for_vcsg() {
        let err = parse_config(r#"{"problem": {"kind": "sigmoid"}, "algorithm": "vcsg", "gamma": 0.5}"#).unwrap_err();
        assert!(err.to_string().contains("gamma must be <= 1/3"), "{err}");
        parse_config(r#"{"problem": {"kind": "sigmoid"}, "algorithm": "svrg", "gamma": 0.5}"#).unwrap();
    }

    #[test]
    fn rejects_rho_one_and_unknown_fields() {
        assert!(parse_config(r#"{"problem": {"kind": "sigmoid"}, "algorithm": "svrg", "rho": 1.0}"#).is_err());
        let err = parse_config(r#"{"problem": {"kind": "sigmoid"}, "algorithm": "svrg", "sigmaa": 1.0}"#).unwrap_err();
        assert!(err.to_string().contains("sigmaa"), "{err}");
        let err = parse_config(r#"{"problem": {"kind": "sigmoid", "params": {"regg": 1}}, "algorithm": "svrg"}"#)
            .unwrap_err();
        assert!(err.to_string().contains("regg"), "{err}");
    }

    #[test]
    fn batching_needs_schedule() {
        let base = r#"{"problem": {"kind": "quadratic"}, "algorithm": "batching_svrg""#;
        assert!(parse_config(&format!("{base}}}")).is_err());
        let ok = format!(
            r#"{base}, "estimator": "biased:0.625", "fixed": [{{"batch": 10, "mini_batch": 1, "step_size": 0.1}}]}}"#
        );
        let cfg = parse_config(&ok).unwrap();
        assert_eq!(cfg.estimator, Some(EstimatorKind::Biased(0.625)));
    }
}
