//! `hbce eval`: per-label AUROC plus aggregate footers for a checkpoint on
//! one dataset split, or a paired t-test between two earlier reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;

use hbce_core::metrics::{paired_t_test, MetricsError};
use hbce_core::synthdata::Split;
use hbce_core::taxonomy::Taxonomy;

use crate::common::{
    evaluate, load_dataset, load_model, load_taxonomy, metric_cell, EvalNumbers, LossOpts,
    SplitArg,
};
use crate::manifest::Manifest;
use crate::CliError;

/// Evaluate a checkpoint (or compare two evaluation reports)
#[derive(Debug, Parser)]
pub struct Args {
    /// Trained checkpoint to evaluate
    #[arg(long, required_unless_present = "compare", conflicts_with = "compare")]
    pub checkpoint: Option<PathBuf>,
    /// Dataset directory produced by gen-data
    #[arg(long, required_unless_present = "compare", conflicts_with = "compare")]
    pub data: Option<PathBuf>,
    /// Taxonomy file defining labels and parent > child edges
    #[arg(long, required_unless_present = "compare", conflicts_with = "compare")]
    pub taxonomy: Option<PathBuf>,
    /// Split to evaluate
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[command(flatten)]
    pub loss: LossOpts,
    /// Two metrics.csv paths, `A,B`: paired t-test over shared labels
    #[arg(long, value_name = "A,B")]
    pub compare: Option<String>,
    /// Output directory (metrics.csv or compare.csv)
    #[arg(long)]
    pub out: PathBuf,
}

/// Renders the metrics report: one row per label in taxonomy order, then
/// the aggregate footer rows.
pub fn metrics_csv(numbers: &EvalNumbers, taxonomy: &Taxonomy) -> String {
    let mut out = String::from("label,auroc,positives,negatives\n");
    for (label, roc) in taxonomy.labels().iter().zip(&numbers.per_label) {
        match roc {
            Some(r) => {
                let _ = writeln!(
                    out,
                    "{},{:.6},{},{}",
                    label.name, r.auroc, r.positives, r.negatives
                );
            }
            None => {
                let _ = writeln!(out, "{},undefined,0,0", label.name);
            }
        }
    }
    let _ = writeln!(out, "mean_auroc,{}", metric_cell(numbers.mean));
    let _ = writeln!(out, "weighted_auroc,{}", metric_cell(numbers.weighted));
    let _ = writeln!(out, "violation_rate,{:.6}", numbers.violation_rate);
    let _ = writeln!(out, "loss_total,{:.6}", numbers.loss.total);
    let _ = writeln!(out, "loss_bce,{:.6}", numbers.loss.bce);
    let _ = writeln!(out, "loss_penalty,{:.6}", numbers.loss.penalty_sum);
    out
}

pub fn run(args: Args) -> Result<(), CliError> {
    if let Some(compare) = &args.compare {
        return run_compare(compare, &args.out);
    }
    let mut manifest = Manifest::new("eval");
    // required_unless_present guarantees these in the non-compare branch
    let taxonomy_path = args.taxonomy.as_ref().expect("clap enforces --taxonomy");
    let checkpoint = args.checkpoint.as_ref().expect("clap enforces --checkpoint");
    let data = args.data.as_ref().expect("clap enforces --data");

    let taxonomy = load_taxonomy(taxonomy_path)?;
    let dataset = load_dataset(data, &taxonomy)?;
    let model = load_model(checkpoint, &taxonomy)?;
    let (table, loss_cfg) = args.loss.build(&dataset, &taxonomy)?;
    let split = Split::from(args.split);
    let numbers = evaluate(&model, &dataset, split, &table, &loss_cfg)?;

    fs::create_dir_all(&args.out).map_err(CliError::runtime)?;
    fs::write(args.out.join("metrics.csv"), metrics_csv(&numbers, &taxonomy))
        .map_err(CliError::runtime)?;

    manifest.push_path("checkpoint", checkpoint);
    manifest.push_path("data", data);
    manifest.push_path("taxonomy", taxonomy_path);
    manifest.push("split", split.as_str());
    args.loss.record(&mut manifest);
    manifest.push_path("out", &args.out);
    manifest.write(&args.out).map_err(CliError::runtime)
}

/// Reads the per-label AUROC rows out of a metrics.csv (footer rows have a
/// different column count and are skipped, as are undefined labels).
fn read_aurocs(path: &Path) -> Result<Vec<(String, f64)>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("label,auroc,positives,negatives") => {}
        _ => {
            return Err(CliError::runtime(format!(
                "{}: not a metrics.csv (missing header)",
                path.display()
            )))
        }
    }
    let mut rows = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 || fields[1] == "undefined" {
            continue;
        }
        let auroc: f64 = fields[1].parse().map_err(|_| {
            CliError::runtime(format!("{}: bad auroc value {:?}", path.display(), fields[1]))
        })?;
        rows.push((fields[0].to_string(), auroc));
    }
    Ok(rows)
}

fn run_compare(compare: &str, out: &Path) -> Result<(), CliError> {
    let mut manifest = Manifest::new("eval");
    let (path_a, path_b) = compare.split_once(',').ok_or_else(|| {
        CliError::config("--compare expects two comma-separated metrics.csv paths")
    })?;
    let a = read_aurocs(Path::new(path_a))?;
    let b = read_aurocs(Path::new(path_b))?;

    // pair labels defined in both reports, in the first report's order
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (label, value) in &a {
        if let Some((_, other)) = b.iter().find(|(l, _)| l == label) {
            xs.push(*value);
            ys.push(*other);
        }
    }
    if xs.len() < 2 {
        return Err(CliError::config(format!(
            "paired t-test needs at least 2 shared defined labels, found {}",
            xs.len()
        )));
    }

    let mut csv = String::from("metric,value\n");
    let _ = writeln!(csv, "n_labels,{}", xs.len());
    match paired_t_test(&xs, &ys) {
        Ok(r) => {
            let _ = writeln!(csv, "t_statistic,{:.6}", r.t);
            let _ = writeln!(csv, "df,{}", r.df);
            let _ = writeln!(csv, "p_value,{:.6}", r.p);
        }
        Err(MetricsError::ZeroVariance) => {
            // identical AUROCs everywhere: report the degeneracy, not a NaN
            csv.push_str("t_statistic,undefined\ndf,undefined\np_value,undefined\n");
            csv.push_str("note,zero variance of differences\n");
        }
        Err(e) => return Err(CliError::runtime(e)),
    }

    fs::create_dir_all(out).map_err(CliError::runtime)?;
    fs::write(out.join("compare.csv"), csv).map_err(CliError::runtime)?;
    manifest.push("compare_a", path_a);
    manifest.push("compare_b", path_b);
    manifest.push("pairs", xs.len());
    manifest.push_path("out", out);
    manifest.write(out).map_err(CliError::runtime)
}
