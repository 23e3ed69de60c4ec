//! Running (algorithm, seed) cells and summarising persisted traces.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vcsg_core::optimizers::{self, Algorithm};
use vcsg_core::oracle::{make_problem, FiniteSumObjective};

use crate::config::{BenchConfig, Format};
use crate::error::{BenchError, Result};
use crate::trace_io::{self, RunSummary};

/// Outcome of one persisted run.
#[derive(Debug, Clone)]
pub struct Cell {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub summary: RunSummary,
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

impl Cell {
    pub fn diverged(&self) -> bool {
        self.summary.diverged.is_some()
    }
}

pub fn trace_stem(algorithm: Algorithm, seed: u64) -> String {
    format!("{algorithm}_seed{seed}")
}

/// Runs one cell and writes its trace and summary under `dir`. A diverged
/// run still persists the epochs it completed.
pub fn run_cell(
    cfg: &BenchConfig,
    obj: &FiniteSumObjective,
    algorithm: Algorithm,
    seed: u64,
    dir: &Path,
    format: Format,
) -> Result<Cell> {
    let run_cfg = cfg.run_config(algorithm, seed, obj.lipschitz());
    let started = Instant::now();
    let outcome = optimizers::run(obj, &run_cfg);
    let wall = started.elapsed().as_secs_f64();
    let summary = match &outcome {
        Ok(res) => RunSummary::new(obj.name(), &run_cfg, &res.trace, Some(res), wall),
        Err(vcsg_core::Error::Diverged { epoch, reason, trace }) => {
            let mut s = RunSummary::new(obj.name(), &run_cfg, trace, None, wall);
            s.diverged = Some(format!("epoch {epoch}: {reason}"));
            s
        }
        Err(e) => return Err(BenchError::Config(format!("{algorithm} seed {seed}: {e}"))),
    };
    let trace = match &outcome {
        Ok(res) => &res.trace,
        Err(vcsg_core::Error::Diverged { trace, .. }) => trace.as_ref(),
        Err(_) => unreachable!(),
    };
    let stem = trace_stem(algorithm, seed);
    let csv = format.csv().then(|| dir.join(format!("{stem}.csv")));
    let json = format.json().then(|| dir.join(format!("{stem}.json")));
    if let Some(p) = &csv {
        trace_io::emit_trace(trace, p)?;
    }
    if let Some(p) = &json {
        trace_io::emit_summary(&summary, p)?;
    }
    Ok(Cell {
        algorithm,
        seed,
        summary,
        csv,
        json,
    })
}

/// Runs every `(algorithm, seed)` pair on up to `jobs` threads. Results come
/// back in matrix order regardless of scheduling.
pub fn run_matrix(cfg: &BenchConfig, dir: &Path, jobs: usize, format: Format) -> Result<Vec<Cell>> {
    let obj = make_problem(&cfg.problem)?;
    let cells: Vec<(Algorithm, u64)> = cfg
        .all_algorithms()
        .into_iter()
        .flat_map(|a| cfg.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| BenchError::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        cells
            .par_iter()
            .map(|&(a, s)| run_cell(cfg, &obj, a, s, dir, format))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub algorithm: String,
    pub runs: usize,
    pub reached: usize,
    pub diverged: usize,
    /// `None` when the median run never reached the target.
    pub median_ifo_to_target: Option<f64>,
    pub iqr_ifo_to_target: Option<f64>,
    pub median_final_grad_norm_sq: Option<f64>,
    pub median_wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub problem: String,
    pub epsilon: f64,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    /// Builds the table from the trace CSVs and summaries in `dir` alone.
    /// IFO-to-target and final gradient norms come from the CSVs; the
    /// summaries supply the starting gradient norm, divergence flags and
    /// wall-clock.
    pub fn from_dir(dir: &Path, algorithms: &[Algorithm], seeds: &[u64], epsilon: f64) -> Result<Self> {
        let mut rows = Vec::new();
        let mut problem = String::new();
        for &alg in algorithms {
            let mut ifo = Vec::new();
            let mut finals = Vec::new();
            let mut walls = Vec::new();
            let mut diverged = 0;
            for &seed in seeds {
                let stem = trace_stem(alg, seed);
                let records = trace_io::read_trace_csv(&dir.join(format!("{stem}.csv")))?;
                let summary = trace_io::read_summary(&dir.join(format!("{stem}.json")))?;
                problem = summary.problem.clone();
                let hit = if summary.initial_grad_norm_sq <= epsilon {
                    Some(0)
                } else {
                    records.iter().find(|r| r.grad_norm_sq <= epsilon).map(|r| r.ifo)
                };
                ifo.push(hit.map_or(f64::INFINITY, |v| v as f64));
                if let Some(r) = records.last() {
                    finals.push(r.grad_norm_sq);
                }
                walls.push(summary.wall_clock_s);
                diverged += usize::from(summary.diverged.is_some());
            }
            let finite = |v: f64| v.is_finite().then_some(v);
            let iqr = finite(quantile(&ifo, 0.75)).zip(finite(quantile(&ifo, 0.25))).map(|(hi, lo)| hi - lo);
            rows.push(ComparisonRow {
                algorithm: alg.to_string(),
                runs: seeds.len(),
                reached: ifo.iter().filter(|v| v.is_finite()).count(),
                diverged,
                median_ifo_to_target: finite(quantile(&ifo, 0.5)),
                iqr_ifo_to_target: iqr,
                median_final_grad_norm_sq: (!finals.is_empty()).then(|| quantile(&finals, 0.5)),
                median_wall_clock_s: quantile(&walls, 0.5),
            });
        }
        Ok(Self { problem, epsilon, rows })
    }

    pub fn row(&self, algorithm: Algorithm) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.algorithm == algorithm.name())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(|e| BenchError::Config(format!("csv: {e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| BenchError::Config(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write(&self, dir: &Path, format: Format) -> Result<()> {
        if format.csv() {
            trace_io::write_atomic(&dir.join("comparison.csv"), self.to_csv()?.as_bytes())?;
        }
        if format.json() {
            let mut text = serde_json::to_string_pretty(self).map_err(|e| BenchError::Config(e.to_string()))?;
            text.push('\n');
            trace_io::write_atomic(&dir.join("comparison.json"), text.as_bytes())?;
        }
        Ok(())
    }
}

/// Linear-interpolation quantile; infinities sort last.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    if lo == hi || v[lo] == v[hi] {
        return v[lo];
    }
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&[1.0, f64::INFINITY, 2.0], 0.5), 2.0);
        assert_eq!(quantile(&[1.0, f64::INFINITY], 1.0), f64::INFINITY);
        assert!(quantile(&[1.0, f64::INFINITY], 0.5).is_infinite());
    }
}
