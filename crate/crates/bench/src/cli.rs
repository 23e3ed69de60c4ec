use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use vcsg_core::analysis::{self, BoundInputs};
use vcsg_core::oracle::{make_problem, ProblemKind};

use crate::config::{load_config, Format};
use crate::error::{BenchError, Result};
use crate::experiment::{run_cell, run_matrix, ComparisonTable};
use crate::trace_io::write_atomic;

#[derive(Debug, Parser)]
#[command(name = "vcsg", version, about = "Batched SVRG family benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one algorithm on one seed and write its trace.
    Run(Common),
    /// Run every (algorithm, seed) pair and write a comparison table.
    Compare(Common),
    /// Evaluate the bound calculators and print a JSON report.
    Analyze {
        /// JSON bound inputs; defaults are used for missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the report to DIR/analysis.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in problems.
    Problems,
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's first seed (`run` only).
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for `compare`.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Run(args) => run(&args),
        Command::Compare(args) => compare(&args),
        Command::Analyze { config, out } => analyze(config.as_deref(), out.as_deref()),
        Command::Problems => {
            for kind in ProblemKind::ALL {
                println!("{:<14}{}", kind.name(), kind.describe());
            }
            Ok(0)
        }
    }
}

fn run(args: &Common) -> Result<i32> {
    let cfg = load_config(&args.config)?;
    let algorithm = match (cfg.algorithm, cfg.algorithms.as_slice()) {
        (Some(a), _) => a,
        (None, [a]) => *a,
        _ => return Err(BenchError::Config("`run` needs a single `algorithm`".into())),
    };
    let seed = args.seed.unwrap_or(cfg.seeds[0]);
    let dir = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let format = args.format.unwrap_or(cfg.format);
    let obj = make_problem(&cfg.problem)?;
    let cell = run_cell(&cfg, &obj, algorithm, seed, &dir, format)?;
    let s = &cell.summary;
    println!(
        "{} on {} seed {}: {} epochs, {} IFO, final |grad f|^2 = {}, IFO to target = {}",
        s.algorithm,
        s.problem,
        s.seed,
        s.epochs,
        s.total_ifo,
        s.final_grad_norm_sq.map_or("-".into(), |v| format!("{v:.3e}")),
        s.ifo_to_target.map_or("unreached".into(), |v| v.to_string()),
    );
    for p in cell.csv.iter().chain(cell.json.iter()) {
        println!("wrote {}", p.display());
    }
    if let Some(reason) = &s.diverged {
        eprintln!("diverged: {reason}");
        return Ok(2);
    }
    Ok(0)
}

fn compare(args: &Common) -> Result<i32> {
    let cfg = load_config(&args.config)?;
    let dir = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let format = args.format.unwrap_or(cfg.format);
    let cells = run_matrix(&cfg, &dir, args.jobs, Format::Both)?;
    let table = ComparisonTable::from_dir(&dir, &cfg.all_algorithms(), &cfg.seeds, cfg.epsilon)?;
    table.write(&dir, format)?;
    println!(
        "{:<14}{:>6}{:>8}{:>16}{:>12}{:>16}{:>10}",
        "algorithm", "runs", "reached", "median IFO", "IQR", "final grad^2", "wall s"
    );
    for r in &table.rows {
        let opt = |v: Option<f64>, prec: usize| v.map_or("unreached".to_string(), |x| format!("{x:.prec$}"));
        println!(
            "{:<14}{:>6}{:>8}{:>16}{:>12}{:>16}{:>10.3}",
            r.algorithm,
            r.runs,
            r.reached,
            opt(r.median_ifo_to_target, 0),
            opt(r.iqr_ifo_to_target, 0),
            r.median_final_grad_norm_sq.map_or("-".into(), |v| format!("{v:.3e}")),
            r.median_wall_clock_s,
        );
    }
    let diverged = cells.iter().filter(|c| c.diverged()).count();
    if diverged > 0 {
        eprintln!("{diverged} run(s) diverged");
        return Ok(2);
    }
    Ok(0)
}

fn analyze(config: Option<&Path>, out: Option<&Path>) -> Result<i32> {
    let inputs: BoundInputs = match config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?
        }
        None => BoundInputs::default(),
    };
    let report = analysis::analyze(&inputs).map_err(|e| BenchError::Config(e.to_string()))?;
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| BenchError::Config(e.to_string()))?;
    text.push('\n');
    print!("{text}");
    if let Some(dir) = out {
        write_atomic(&dir.join("analysis.json"), text.as_bytes())?;
    }
    Ok(0)
}
