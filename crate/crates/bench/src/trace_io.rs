//! Trace CSVs and run summaries on disk.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use vcsg_core::optimizers::{EpochRecord, Phase, RunConfig, RunResult, RunTrace};

use crate::error::{BenchError, Result};

pub const HEADER: [&str; 11] = [
    "j",
    "regime",
    "B",
    "b",
    "eta",
    "lambda",
    "N",
    "ifo",
    "f",
    "grad_norm_sq",
    "s_star",
];

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    j: usize,
    regime: Phase,
    #[serde(rename = "B")]
    batch: usize,
    b: usize,
    eta: f64,
    lambda: Option<f64>,
    #[serde(rename = "N")]
    inner_steps: u64,
    ifo: u64,
    f: f64,
    grad_norm_sq: f64,
    s_star: Option<f64>,
}

impl From<&EpochRecord> for Row {
    fn from(r: &EpochRecord) -> Self {
        Row {
            j: r.epoch,
            regime: r.regime,
            batch: r.batch,
            b: r.mini_batch,
            eta: r.step_size,
            lambda: r.lambda,
            inner_steps: r.inner_steps,
            ifo: r.ifo,
            f: r.value,
            grad_norm_sq: r.grad_norm_sq,
            s_star: r.s_star,
        }
    }
}

impl From<Row> for EpochRecord {
    fn from(r: Row) -> Self {
        EpochRecord {
            epoch: r.j,
            regime: r.regime,
            batch: r.batch,
            mini_batch: r.b,
            step_size: r.eta,
            lambda: r.lambda,
            inner_steps: r.inner_steps,
            ifo: r.ifo,
            value: r.f,
            grad_norm_sq: r.grad_norm_sq,
            s_star: r.s_star,
        }
    }
}

/// Writes the header and one row per epoch.
pub fn write_trace_csv<W: Write>(records: &[EpochRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let fail = |e: csv::Error| BenchError::Config(format!("csv: {e}"));
    w.write_record(HEADER).map_err(fail)?;
    for r in records {
        w.serialize(Row::from(r)).map_err(fail)?;
    }
    w.flush().map_err(|e| BenchError::Config(format!("csv: {e}")))?;
    Ok(())
}

pub fn trace_csv_string(records: &[EpochRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_trace_csv(records, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn parse_trace_csv<R: Read>(input: R) -> std::result::Result<Vec<EpochRecord>, String> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(|e| e.to_string())?;
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()));
    }
    rdr.deserialize::<Row>()
        .map(|row| row.map(EpochRecord::from).map_err(|e| e.to_string()))
        .collect()
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<EpochRecord>> {
    let file = fs::File::open(path).map_err(|e| BenchError::io(path, e))?;
    parse_trace_csv(file).map_err(|msg| BenchError::Trace {
        path: path.to_path_buf(),
        msg,
    })
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    }
    let file_name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{file_name}.{}.tmp", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| BenchError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| BenchError::io(path, e))
}

pub fn emit_trace(trace: &RunTrace, path: &Path) -> Result<()> {
    write_atomic(path, trace_csv_string(&trace.epochs)?.as_bytes())
}

/// JSON companion of a trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub problem: String,
    pub algorithm: String,
    pub seed: u64,
    pub epsilon: f64,
    pub ifo_to_target: Option<u64>,
    pub total_ifo: u64,
    pub eval_ifo: u64,
    pub grads_per_step: u64,
    pub epochs: usize,
    pub initial_value: f64,
    pub initial_grad_norm_sq: f64,
    pub final_value: Option<f64>,
    pub final_grad_norm_sq: Option<f64>,
    pub delta_f: f64,
    pub capped_epochs: Vec<usize>,
    pub output_epoch: Option<usize>,
    pub output: Option<Vec<f64>>,
    pub last: Option<Vec<f64>>,
    /// Reason the run was aborted, if it diverged.
    pub diverged: Option<String>,
    pub wall_clock_s: f64,
    pub config: RunConfig,
}

impl RunSummary {
    pub fn new(problem: &str, config: &RunConfig, trace: &RunTrace, result: Option<&RunResult>, wall: f64) -> Self {
        let last = trace.epochs.last();
        Self {
            problem: problem.to_string(),
            algorithm: trace.algorithm.to_string(),
            seed: trace.seed,
            epsilon: config.schedule.epsilon,
            ifo_to_target: trace.ifo_to_target(config.schedule.epsilon),
            total_ifo: trace.total_ifo(),
            eval_ifo: trace.eval_ifo,
            grads_per_step: trace.grads_per_step,
            epochs: trace.epochs.len(),
            initial_value: trace.initial_value,
            initial_grad_norm_sq: trace.initial_grad_norm_sq,
            final_value: last.map(|r| r.value),
            final_grad_norm_sq: last.map(|r| r.grad_norm_sq),
            delta_f: trace.delta_f(),
            capped_epochs: trace.capped_epochs.clone(),
            output_epoch: result.map(|r| r.output_epoch),
            output: result.map(|r| r.output.clone()),
            last: result.map(|r| r.last.clone()),
            diverged: None,
            wall_clock_s: wall,
            config: config.clone(),
        }
    }
}

pub fn emit_summary(summary: &RunSummary, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary).map_err(|e| BenchError::Config(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| BenchError::Trace {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}
