mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use triage_core::strata::Covariate;
use triage_core::{BinaryClassification, ScoreScale};

pub const SCHEMA_VERSION: &str = "1.0.0";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] triage_core::Error),
    #[error(transparent)]
    Dicom(#[from] triage_dicom::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "Usage",
            CliError::Core(e) => e.kind(),
            CliError::Dicom(e) => e.kind(),
            CliError::Csv(_) => "Csv",
            CliError::Io(_) => "IoError",
            CliError::Json(_) => "JsonError",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "triage",
    version,
    about = "Evaluate CXR triage scores against a bacteriological reference"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Scale {
    Unit,
    Percent,
}

impl From<Scale> for ScoreScale {
    fn from(s: Scale) -> Self {
        match s {
            Scale::Unit => ScoreScale::Unit,
            Scale::Percent => ScoreScale::Percent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Classification {
    A,
    B,
    C,
}

impl From<Classification> for BinaryClassification {
    fn from(c: Classification) -> Self {
        match c {
            Classification::A => BinaryClassification::A,
            Classification::B => BinaryClassification::B,
            Classification::C => BinaryClassification::C,
        }
    }
}

fn parse_level(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("level must lie strictly between 0 and 1, got {v}"))
    }
}

fn parse_unit(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("value must lie in [0, 1], got {v}"))
    }
}

fn parse_product_scale(s: &str) -> Result<(String, Scale), String> {
    let (name, scale) = s
        .rsplit_once('=')
        .ok_or_else(|| format!("expected NAME=unit|percent, got {s:?}"))?;
    let scale = Scale::from_str(scale, true)?;
    Ok((name.to_string(), scale))
}

fn parse_covariate(s: &str) -> Result<Covariate, String> {
    s.parse().map_err(|e: triage_core::Error| e.to_string())
}

#[derive(Debug, Args)]
struct CohortArgs {
    /// Cohort CSV, or `-` for standard input.
    #[arg(long, short)]
    input: PathBuf,
    /// Scale of the score columns.
    #[arg(long, value_enum, default_value = "unit")]
    scale: Scale,
    /// Per-product scale override, e.g. `qXR=percent`. Repeatable.
    #[arg(long = "product-scale", value_parser = parse_product_scale)]
    product_scales: Vec<(String, Scale)>,
    /// Restrict the analysis to these products. Repeatable.
    #[arg(long = "product")]
    products: Vec<String>,
    /// Confidence level of every interval.
    #[arg(long, default_value = "0.95", value_parser = parse_level)]
    level: f64,
    /// Directory for CSV and JSON artifacts.
    #[arg(long, env = "TRIAGE_OUT_DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Evaluate thresholds on a uniform grid of this many points over
    /// [0, 1] instead of the observed scores.
    #[arg(long = "grid-size", value_parser = clap::value_parser!(u32).range(2..=1_000_000))]
    grid_size: Option<u32>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Full report: AUC/PRAUC, TPP, human comparison, framework sweeps.
    Evaluate {
        #[command(flatten)]
        cohort: CohortArgs,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// ROC curve points per product.
    Roc {
        #[command(flatten)]
        cohort: CohortArgs,
    },
    /// Precision-recall curve points per product.
    Prc {
        #[command(flatten)]
        cohort: CohortArgs,
    },
    /// Pairwise paired DeLong comparison of product AUCs.
    Compare {
        #[command(flatten)]
        cohort: CohortArgs,
    },
    /// Radiologist reading against sensitivity-matched AI thresholds.
    MatchHuman {
        #[command(flatten)]
        cohort: CohortArgs,
        /// Binary classifications to compare. Repeatable; default all.
        #[arg(long = "classification", value_enum)]
        classifications: Vec<Classification>,
    },
    /// Target product profile check per product.
    Tpp {
        #[command(flatten)]
        cohort: CohortArgs,
    },
    /// Sensitivity, tests saved and NNT over a threshold grid.
    Framework {
        #[command(flatten)]
        cohort: CohortArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Sensitivity floor for the reported savings point.
        #[arg(long = "sens-floor", default_value = "0.9", value_parser = parse_unit)]
        sens_floor: f64,
    },
    /// AUC and PRAUC by covariate level with pairwise DeLong p-values.
    Subgroups {
        #[command(flatten)]
        cohort: CohortArgs,
        /// Covariates to stratify by. Repeatable; default all.
        #[arg(long = "covariate", value_parser = parse_covariate)]
        covariates: Vec<Covariate>,
        /// Bootstrap seed for the PRAUC intervals.
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = triage_core::strata::DEFAULT_SUBGROUP_REPLICATES)]
        replicates: usize,
        /// Bootstrap worker threads; 0 uses all cores.
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Score histograms by reference outcome and prior TB history.
    Density {
        #[command(flatten)]
        cohort: CohortArgs,
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(1..=10_000))]
        bins: u32,
        /// Also write Gaussian kernel density estimates on this many points.
        #[arg(long = "kde-points", value_parser = clap::value_parser!(u32).range(2..=100_000))]
        kde_points: Option<u32>,
    },
    /// Seeded binormal synthetic cohort.
    Synth(SynthArgs),
    /// Anonymize a directory of DICOM files.
    Anonymize(AnonymizeArgs),
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("separation").required(true).args(["mu", "auc"])))]
struct SynthArgs {
    /// Mean separation of the latent normals.
    #[arg(long)]
    mu: Option<f64>,
    /// Target population AUC; sets the separation.
    #[arg(long)]
    auc: Option<f64>,
    #[arg(long, default_value = "0.153", value_parser = parse_unit)]
    prevalence: f64,
    #[arg(long, default_value_t = 20_000)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// Fraction of subjects flagged with prior TB.
    #[arg(long = "prior-tb-fraction", value_parser = parse_unit)]
    prior_tb_fraction: Option<f64>,
    /// Latent shift for flagged negatives.
    #[arg(
        long = "neg-shift",
        default_value_t = 0.0,
        requires = "prior_tb_fraction"
    )]
    neg_shift: f64,
    /// Write the cohort here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnonymizeArgs {
    /// Directory searched recursively for input files.
    #[arg(long, short)]
    input: PathBuf,
    /// Directory for anonymized files.
    #[arg(long, short)]
    output: PathBuf,
    /// Directory for the audit CSVs; defaults to the output directory.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Tag rule CSV.
    #[arg(long)]
    rules: PathBuf,
    /// Gate on the DICOM header only, without the study-description filter.
    #[arg(long = "faithful-annex5")]
    faithful: bool,
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            let body = json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            println!(
                "{}",
                serde_json::to_string_pretty(&body).unwrap_or_default()
            );
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
