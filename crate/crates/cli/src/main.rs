use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use selsurv::ensemble::{build_report, format_percent, EnsembleModel, SweepPoint};
use selsurv::pipeline::{
    self, json, prepare_cohort, read_text, Artifacts, Overrides, PipelineError, RunConfig,
};
use selsurv::survival::curves_to_csv;
use selsurv::synth::{gen_clinical_surrogate, GeneratorSpec};

/// Exit status: 0 success, 1 usage or file access, 2 invalid data or
/// config, 3 internal invariant failure.
#[derive(Parser)]
#[command(
    name = "selsurv",
    version,
    about = "Selective survival prediction pipeline"
)]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run config (JSON); relative paths inside resolve against its directory.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, replacing the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    k_top: Option<usize>,
    #[arg(long)]
    k_bottom: Option<usize>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, PipelineError> {
        RunConfig::load(
            &self.config,
            &Overrides {
                seed: self.seed,
                out: self.out.clone(),
                folds: self.folds,
                k_top: self.k_top,
                k_bottom: self.k_bottom,
            },
        )
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Grouping {
    Tnm,
    Prognosis,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and schema from a generator spec.
    Synth {
        /// Generator spec (JSON with a `generator` tag).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply the exclusion protocol and write the labelled cohort.
    Preprocess(RunArgs),
    /// Rank the cohort's attributes by recursive feature elimination.
    Rank(RunArgs),
    /// Fit the learned and anti-learned models on the whole cohort.
    Train(RunArgs),
    /// Cross-validate all sources and sweep the attribute count.
    Evaluate(RunArgs),
    /// Agreement report from a predictions file.
    Report {
        /// Predictions CSV; defaults to `predictions.csv` in the config's output directory.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Kaplan-Meier curves by TNM stage or by prognosis group.
    Km {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "tnm")]
        grouping: Grouping,
        /// Model file from `train`; required for prognosis grouping.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Every stage end to end.
    Pipeline(RunArgs),
}

fn usage(msg: &str) -> PipelineError {
    PipelineError::Io {
        path: PathBuf::from("<arguments>"),
        message: msg.to_string(),
    }
}

fn write(artifacts: &Artifacts, dir: &Path) -> Result<(), PipelineError> {
    artifacts.write(dir)?;
    for name in artifacts.files.keys() {
        info!("wrote {}", dir.join(name).display());
    }
    for w in &artifacts.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn synth(config: &Path, seed: Option<u64>, out: &Path) -> Result<(), PipelineError> {
    let mut spec: GeneratorSpec = serde_json::from_str(&read_text(config)?)
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    if let Some(s) = seed {
        spec.set_seed(s);
    }
    let mut a = Artifacts::default();
    let ds = match &spec {
        GeneratorSpec::Surrogate(s) => {
            let sur = gen_clinical_surrogate(s).map_err(|e| PipelineError::Data(e.to_string()))?;
            a.insert("truth.json", json(&sur.truth));
            sur.dataset
        }
        _ => spec
            .generate()
            .map_err(|e| PipelineError::Data(e.to_string()))?,
    };
    a.insert("dataset.csv", ds.to_csv());
    a.insert("schema.json", ds.schema().to_json());
    a.insert("spec.json", json(&spec));
    write(&a, out)?;
    let cells = ds.n_patients() * ds.n_attributes();
    println!("rows {}", ds.n_patients());
    println!("attributes {}", ds.n_attributes());
    if cells > 0 {
        println!("missing {}", format_percent(ds.missing_count(), cells));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Synth { config, seed, out } => synth(&config, seed, &out),
        Command::Preprocess(args) => {
            let cfg = args.load()?;
            let cohort = prepare_cohort(&cfg.load_dataset()?, &cfg)?;
            let mut a = Artifacts::default();
            a.insert("audit.csv", cohort.audit.to_csv());
            a.insert("cohort.csv", cohort.dataset.to_csv());
            a.insert("cohort_schema.json", cohort.dataset.schema().to_json());
            write(&a, &cfg.out)?;
            print!("{}", cohort.audit.to_csv());
            Ok(())
        }
        Command::Rank(args) => {
            let cfg = args.load()?;
            let cohort = prepare_cohort(&cfg.load_dataset()?, &cfg)?;
            let ranking = pipeline::rank_cohort(&cohort, &cfg)?;
            let mut a = Artifacts::default();
            a.insert("ranking.json", json(&ranking));
            write(&a, &cfg.out)?;
            print!("{}", ranking.summary_table(cfg.k_top, cfg.k_bottom));
            Ok(())
        }
        Command::Train(args) => {
            let cfg = args.load()?;
            let cohort = prepare_cohort(&cfg.load_dataset()?, &cfg)?;
            let model = pipeline::train_final(&cohort, &cfg)?;
            let mut a = Artifacts::default();
            a.insert("model.json", model.to_json());
            write(&a, &cfg.out)
        }
        Command::Evaluate(args) => {
            let cfg = args.load()?;
            let cohort = prepare_cohort(&cfg.load_dataset()?, &cfg)?;
            let ev = pipeline::evaluate(&cohort, &cfg)?;
            let mut a = Artifacts::default();
            a.insert("predictions.csv", ev.cv.to_csv());
            a.insert("report.csv", ev.report.to_csv());
            a.insert("report.json", ev.report.to_json());
            a.insert("sweep.csv", SweepPoint::to_csv(&ev.sweep));
            write(&a, &cfg.out)?;
            print!("{}", ev.report.to_csv());
            Ok(())
        }
        Command::Report {
            predictions,
            config,
            format,
        } => {
            let path = match (predictions, config) {
                (Some(p), _) => p,
                (None, Some(c)) => RunConfig::load(&c, &Overrides::default())?
                    .out
                    .join("predictions.csv"),
                (None, None) => return Err(usage("report needs --predictions or --config")),
            };
            let (preds, labels) = pipeline::parse_predictions(&read_text(&path)?)?;
            let report = build_report(&preds, &labels)?;
            pipeline::verify_report(&report, &preds, &labels)?;
            match format {
                Format::Csv => print!("{}", report.to_csv()),
                Format::Json => print!("{}", report.to_json()),
            }
            Ok(())
        }
        Command::Km {
            run,
            grouping,
            model,
        } => {
            let cfg = run.load()?;
            let ds = cfg.load_dataset()?;
            let (name, curves, warnings) = match grouping {
                Grouping::Tnm => {
                    let g = pipeline::km_tnm(&ds)?;
                    ("km_tnm.csv", curves_to_csv(&g.curves, None), g.warnings)
                }
                Grouping::Prognosis => {
                    let path = model.ok_or_else(|| usage("prognosis grouping needs --model"))?;
                    let m = EnsembleModel::from_json(&read_text(&path)?)?;
                    let g = pipeline::km_prognosis(&ds, &m)?;
                    (
                        "km_prognosis.csv",
                        curves_to_csv(&g.curves, None),
                        g.warnings,
                    )
                }
            };
            let mut a = Artifacts {
                warnings,
                ..Default::default()
            };
            a.insert(name, curves);
            write(&a, &cfg.out)
        }
        Command::Pipeline(args) => {
            let cfg = args.load()?;
            let a = pipeline::run_pipeline(&cfg.load_dataset()?, &cfg)?;
            write(&a, &cfg.out)?;
            print!("{}", a.files["report.csv"]);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
