//! `hbce sweep`: the fixed / data-driven × lambda grid as one combined CSV.
//! Cells are independent seeded runs, so the grid can execute in parallel
//! waves (capped by `HBCE_THREADS`) without changing any output byte.

use std::env;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::thread;

use clap::Parser;

use hbce_core::synthdata::{Dataset, Split};
use hbce_core::taxonomy::Taxonomy;

use crate::commands::train::train_once;
use crate::common::{
    evaluate, load_dataset, load_taxonomy, metric_cell, LossOpts, Mode, PenaltyKind, TrainOpts,
};
use crate::manifest::Manifest;
use crate::CliError;

/// Scale factors of the reference grid.
pub const SWEEP_LAMBDAS: [f64; 4] = [0.3, 0.5, 0.7, 1.0];

/// Train and evaluate the penalty-type x lambda grid into one CSV
#[derive(Debug, Parser)]
pub struct Args {
    /// Dataset directory produced by gen-data
    #[arg(long)]
    pub data: PathBuf,
    /// Taxonomy file defining labels and parent > child edges
    #[arg(long)]
    pub taxonomy: PathBuf,
    /// Output directory (sweep.csv plus one subdirectory per cell)
    #[arg(long)]
    pub out: PathBuf,
    /// Constant per-edge penalty for the fixed rows
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Laplace smoothing for the data-driven rows; must be > 0
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    /// Indicator shape around the threshold
    #[arg(long, value_enum, default_value_t = Mode::Hard)]
    pub mode: Mode,
    /// Ramp width of the soft indicator
    #[arg(long, default_value_t = 0.05)]
    pub tau: f64,
    /// Decision threshold for triggering and violation counting
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[command(flatten)]
    pub opts: TrainOpts,
}

struct CellRow {
    per_label: Vec<Option<f64>>,
    mean: Option<f64>,
}

/// Reads the parallelism cap; unset means 1 (fully deterministic mode is
/// the default, though cells are seeded and deterministic at any width).
fn thread_cap() -> Result<usize, CliError> {
    match env::var("HBCE_THREADS") {
        Err(env::VarError::NotPresent) => Ok(1),
        Err(e) => Err(CliError::config(format!("HBCE_THREADS: {e}"))),
        Ok(s) => match s.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::config(format!(
                "HBCE_THREADS must be a positive integer, got {s:?}"
            ))),
        },
    }
}

fn run_cell(
    dataset: &Dataset,
    taxonomy: &Taxonomy,
    args: &Args,
    kind: PenaltyKind,
    lambda: f64,
) -> Result<CellRow, CliError> {
    let loss = LossOpts {
        penalty: kind,
        beta: args.beta,
        lambda,
        epsilon: args.epsilon,
        mode: args.mode,
        tau: args.tau,
        threshold: args.threshold,
    };
    let cell_dir = args.out.join(format!("{}_{lambda:.1}", kind.as_str()));
    let mut manifest = Manifest::new("sweep-cell");
    let (outcome, table, loss_cfg) = train_once(dataset, taxonomy, &loss, &args.opts, &cell_dir)?;
    let numbers = evaluate(&outcome.model, dataset, Split::Test, &table, &loss_cfg)?;

    loss.record(&mut manifest);
    args.opts.record(&mut manifest);
    manifest.write(&cell_dir).map_err(CliError::runtime)?;
    Ok(CellRow {
        per_label: numbers
            .per_label
            .iter()
            .map(|r| r.as_ref().map(|r| r.auroc))
            .collect(),
        mean: numbers.mean,
    })
}

pub fn run(args: Args) -> Result<(), CliError> {
    let mut manifest = Manifest::new("sweep");
    let threads = thread_cap()?;
    let taxonomy = load_taxonomy(&args.taxonomy)?;
    let dataset = load_dataset(&args.data, &taxonomy)?;

    let cells: Vec<(PenaltyKind, f64)> = [PenaltyKind::Fixed, PenaltyKind::DataDriven]
        .into_iter()
        .flat_map(|kind| SWEEP_LAMBDAS.into_iter().map(move |l| (kind, l)))
        .collect();

    let mut rows: Vec<Result<CellRow, CliError>> = Vec::with_capacity(cells.len());
    for wave in cells.chunks(threads) {
        let mut results = thread::scope(|scope| {
            let handles: Vec<_> = wave
                .iter()
                .map(|&(kind, lambda)| {
                    let (dataset, taxonomy, args) = (&dataset, &taxonomy, &args);
                    scope.spawn(move || run_cell(dataset, taxonomy, args, kind, lambda))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| match h.join() {
                    Ok(r) => r,
                    Err(_) => Err(CliError::runtime("a sweep worker panicked")),
                })
                .collect::<Vec<_>>()
        });
        rows.append(&mut results);
    }

    let mut csv = String::from("penalty_type,scale_factor");
    for label in taxonomy.labels() {
        let _ = write!(csv, ",{}", label.name);
    }
    csv.push_str(",mean\n");
    for ((kind, lambda), row) in cells.iter().zip(rows) {
        let row = row?;
        let _ = write!(csv, "{},{lambda:.1}", kind.as_str());
        for cell in &row.per_label {
            let _ = write!(csv, ",{}", metric_cell(*cell));
        }
        let _ = writeln!(csv, ",{}", metric_cell(row.mean));
    }
    fs::create_dir_all(&args.out).map_err(CliError::runtime)?;
    fs::write(args.out.join("sweep.csv"), csv).map_err(CliError::runtime)?;

    manifest.push_path("data", &args.data);
    manifest.push_path("taxonomy", &args.taxonomy);
    manifest.push_path("out", &args.out);
    manifest.push("threads", threads);
    manifest.push("beta", args.beta);
    manifest.push("epsilon", args.epsilon);
    manifest.push("mode", args.mode.as_str());
    manifest.push("tau", args.tau);
    manifest.push("threshold", args.threshold);
    manifest.push(
        "lambdas",
        SWEEP_LAMBDAS.map(|l| l.to_string()).join(","),
    );
    args.opts.record(&mut manifest);
    manifest.write(&args.out).map_err(CliError::runtime)
}
