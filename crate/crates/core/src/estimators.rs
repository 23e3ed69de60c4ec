//! Inner-step gradient estimators.
//!
//! Each estimator combines three gradients evaluated on the same mini-batch
//! `Ĩ`: `gk = ∇f_Ĩ(x_{k−1})`, `g0 = ∇f_Ĩ(x_0)` and the epoch anchor
//! `gj = ∇f_{I_j}(x̃_{j−1})`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{domain, Error, Result};

/// `(15 − √97)/16`, the weight used by the unbiased estimator when the batch
/// size is accuracy driven.
pub fn lambda_star_unbiased() -> f64 {
    (15.0 - 97f64.sqrt()) / 16.0
}

pub const LAMBDA_STAR_BIASED: f64 = 5.0 / 8.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorKind {
    /// `v = gk − g0 + gj`
    Plain,
    /// `v = (1−λ)gk − λ(g0 − gj)`
    WeightedUnbiased(f64),
    /// `v = (1−λ)(gk − g0) + λ gj`
    Biased(f64),
}

impl EstimatorKind {
    pub fn weighted_unbiased(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(EstimatorKind::WeightedUnbiased(lambda))
    }

    pub fn biased(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(EstimatorKind::Biased(lambda))
    }

    pub fn lambda(&self) -> Option<f64> {
        match *self {
            EstimatorKind::Plain => None,
            EstimatorKind::WeightedUnbiased(l) | EstimatorKind::Biased(l) => Some(l),
        }
    }

    pub fn direction(&self, gk: &[f64], g0: &[f64], gj: &[f64]) -> Result<Vec<f64>> {
        match *self {
            EstimatorKind::Plain => estimate_plain(gk, g0, gj),
            EstimatorKind::WeightedUnbiased(l) => estimate_weighted_unbiased(l, gk, g0, gj),
            EstimatorKind::Biased(l) => estimate_biased(l, gk, g0, gj),
        }
    }

    /// Writes the direction into `out` without validation. Callers have
    /// already checked dimensions and λ.
    pub(crate) fn direction_into(&self, gk: &[f64], g0: &[f64], gj: &[f64], out: &mut [f64]) {
        match *self {
            EstimatorKind::Plain => {
                for (((o, a), b), c) in out.iter_mut().zip(gk).zip(g0).zip(gj) {
                    *o = a - b + c;
                }
            }
            EstimatorKind::WeightedUnbiased(l) => {
                for (((o, a), b), c) in out.iter_mut().zip(gk).zip(g0).zip(gj) {
                    *o = (1.0 - l) * a - l * (b - c);
                }
            }
            EstimatorKind::Biased(l) => {
                for (((o, a), b), c) in out.iter_mut().zip(gk).zip(g0).zip(gj) {
                    *o = (1.0 - l) * (a - b) + l * c;
                }
            }
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self.lambda() {
            Some(l) => check_lambda(l),
            None => Ok(()),
        }
    }
}

pub fn estimate_plain(gk: &[f64], g0: &[f64], gj: &[f64]) -> Result<Vec<f64>> {
    check_dims(gk, g0, gj)?;
    let mut v = vec![0.0; gk.len()];
    EstimatorKind::Plain.direction_into(gk, g0, gj, &mut v);
    Ok(v)
}

pub fn estimate_weighted_unbiased(lambda: f64, gk: &[f64], g0: &[f64], gj: &[f64]) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    check_dims(gk, g0, gj)?;
    let mut v = vec![0.0; gk.len()];
    EstimatorKind::WeightedUnbiased(lambda).direction_into(gk, g0, gj, &mut v);
    Ok(v)
}

pub fn estimate_biased(lambda: f64, gk: &[f64], g0: &[f64], gj: &[f64]) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    check_dims(gk, g0, gj)?;
    let mut v = vec![0.0; gk.len()];
    EstimatorKind::Biased(lambda).direction_into(gk, g0, gj, &mut v);
    Ok(v)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return domain(format!("lambda must lie strictly inside (0, 1), got {lambda}"));
    }
    Ok(())
}

fn check_dims(gk: &[f64], g0: &[f64], gj: &[f64]) -> Result<()> {
    if gk.len() != g0.len() || gk.len() != gj.len() {
        return domain(format!(
            "dimension mismatch: {}, {}, {}",
            gk.len(),
            g0.len(),
            gj.len()
        ));
    }
    Ok(())
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorKind::Plain => write!(f, "plain"),
            EstimatorKind::WeightedUnbiased(l) => write!(f, "weighted_unbiased:{l}"),
            EstimatorKind::Biased(l) => write!(f, "biased:{l}"),
        }
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (tag, arg) = match s.split_once(':') {
            Some((t, a)) => (t, Some(a)),
            None => (s, None),
        };
        let lambda = || -> Result<f64> {
            let raw = arg.ok_or_else(|| Error::Config(format!("estimator `{s}` needs a lambda, e.g. `{tag}:0.5`")))?;
            raw.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("estimator `{s}`: `{raw}` is not a number")))
        };
        let kind = match tag {
            "plain" if arg.is_none() => EstimatorKind::Plain,
            "weighted_unbiased" => EstimatorKind::WeightedUnbiased(lambda()?),
            "biased" => EstimatorKind::Biased(lambda()?),
            _ => return Err(Error::Config(format!("unknown estimator `{s}`"))),
        };
        kind.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(kind)
    }
}

impl Serialize for EstimatorKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EstimatorKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
