//! `wdistill` — weighted distillation with unlabeled examples.
//!
//! Exit codes: 0 success, 2 configuration error, 1 runtime failure.

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use wdistill_cli::config::Config;
use wdistill_cli::experiments::{run_experiment, EXPERIMENT_IDS};
use wdistill_cli::io::{
    load_dataset_csv, save_dataset_csv, save_index_csv, save_plain_weights_csv,
    save_weight_records_csv,
};
use wdistill_cli::plots::export_report;
use wdistill_cli::ConfigError;
use wdistill_core::data::Split;
use wdistill_core::estimator::{
    build_validation_index, estimate_weights, ConfidenceMetric,
};
use wdistill_core::noise::{synthetic_mixture_task, MixtureSpec, MixtureTask};
use wdistill_core::optimize::{sgd_multi_pass, SamplingMode, SgdConfig, StepSchedule, WeightFunction};
use wdistill_core::pipeline::{
    run_distillation, teacher_label, train_teacher, truncate_dataset, DistillConfig, DistillReport,
    LabelMode, WeightScheme,
};
use wdistill_core::rng::child_seed;
use wdistill_core::{Dataset, LinearParams, LossSpec};

#[derive(Parser)]
#[command(
    name = "wdistill",
    about = "Debiasing reweighting for distillation with unlabeled examples",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Weight scheme: ours | unit | fidelity | composition.
    #[arg(long)]
    scheme: Option<String>,
    /// Confidence metric: margin | entropy.
    #[arg(long)]
    metric: Option<String>,
    /// Teacher label mode: soft | hard.
    #[arg(long)]
    label_mode: Option<String>,
    /// Weight refresh rounds.
    #[arg(long)]
    refresh: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Gaussian-mixture task and write its four splits.
    Simulate(CommonArgs),
    /// Run the full distillation pipeline and write a report.
    Distill(CommonArgs),
    /// Run one of the named experiments.
    Experiment(CommonArgs),
    /// One-shot weight estimation; writes the weight and index CSVs.
    EstimateWeights(CommonArgs),
    /// Re-emit plot CSVs from a saved report.
    ExportPlots(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(&args),
        Command::Distill(args) => distill(&args),
        Command::Experiment(args) => experiment(&args),
        Command::EstimateWeights(args) => estimate_weights_cmd(&args),
        Command::ExportPlots(args) => export_plots(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if err.downcast_ref::<ConfigError>().is_some() {
                eprintln!("config error: {err}");
                ExitCode::from(2)
            } else {
                eprintln!("error: {err:#}");
                ExitCode::from(1)
            }
        }
    }
}

fn load_config(args: &CommonArgs) -> Result<Config> {
    let mut cfg = match &args.config {
        Some(path) => Config::from_path(path)?,
        None => Config::empty(),
    };
    if let Some(seed) = args.seed {
        cfg.set("seed", seed.to_string());
    }
    if let Some(out) = &args.out {
        cfg.set("out", out.display().to_string());
    }
    if let Some(scheme) = &args.scheme {
        cfg.set("scheme", scheme.clone());
    }
    if let Some(metric) = &args.metric {
        cfg.set("metric", metric.clone());
    }
    if let Some(mode) = &args.label_mode {
        cfg.set("label_mode", mode.clone());
    }
    if let Some(refresh) = args.refresh {
        cfg.set("refresh", refresh.to_string());
    }
    Ok(cfg)
}

fn out_dir(cfg: &Config) -> Result<PathBuf> {
    let out = cfg
        .get_path("out")
        .unwrap_or_else(|| PathBuf::from("results"));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

const MIXTURE_KEYS: &[&str] = &[
    "dim",
    "classes",
    "n_labeled",
    "n_unlabeled",
    "n_validation",
    "n_test",
    "separation",
];

fn mixture_spec(cfg: &Config, seed: u64) -> Result<MixtureSpec> {
    Ok(MixtureSpec {
        dim: cfg.get_usize("dim", 10)?,
        num_classes: cfg.get_usize("classes", 4)?,
        n_labeled: cfg.get_usize("n_labeled", 60)?,
        n_unlabeled: cfg.get_usize("n_unlabeled", 1200)?,
        n_validation: cfg.get_usize("n_validation", 400)?,
        n_test: cfg.get_usize("n_test", 2000)?,
        separation: cfg.get_f64("separation", 2.2)?,
        seed,
    })
}

fn parse_scheme(cfg: &Config) -> Result<WeightScheme> {
    Ok(
        match cfg
            .get_choice("scheme", "ours", &["ours", "unit", "fidelity", "composition"])?
            .as_str()
        {
            "unit" => WeightScheme::Unit,
            "fidelity" => WeightScheme::Fidelity,
            "composition" => WeightScheme::Composition,
            _ => WeightScheme::Ours,
        },
    )
}

fn parse_metric(cfg: &Config) -> Result<ConfidenceMetric> {
    Ok(
        match cfg.get_choice("metric", "margin", &["margin", "entropy"])?.as_str() {
            "entropy" => ConfidenceMetric::Entropy,
            _ => ConfidenceMetric::Margin,
        },
    )
}

fn parse_label_mode(cfg: &Config) -> Result<LabelMode> {
    Ok(
        match cfg.get_choice("label_mode", "soft", &["soft", "hard"])?.as_str() {
            "hard" => LabelMode::Hard,
            _ => LabelMode::Soft,
        },
    )
}

fn sgd_from(cfg: &Config, prefix: &str, default_iterations: usize) -> Result<SgdConfig> {
    Ok(SgdConfig {
        iterations: cfg.get_usize(&format!("{prefix}_iterations"), default_iterations)?,
        step: StepSchedule::Constant {
            scale: cfg.get_f64(&format!("{prefix}_step_scale"), 2.0)?,
        },
        constraint_radius: 1.0,
        seed: 0, // the pipeline derives phase seeds itself
        sampling: SamplingMode::WithReplacement,
        log_every: None,
    })
}

/// Load the four splits either from CSV paths or by generating the
/// mixture task named in the config.
fn load_task(cfg: &Config, seed: u64) -> Result<(Dataset, Dataset, Dataset, Dataset)> {
    let source = cfg.get_choice("task", "mixture", &["mixture", "csv"])?;
    if source == "csv" {
        let classes = cfg.get_usize("classes", 0)?;
        let classes = if classes == 0 { None } else { Some(classes) };
        let labeled = load_dataset_csv(&cfg.require_path("labeled")?, Split::Labeled, classes)?;
        let classes = Some(labeled.num_classes());
        let unlabeled =
            load_dataset_csv(&cfg.require_path("unlabeled")?, Split::Unlabeled, classes)?;
        let validation =
            load_dataset_csv(&cfg.require_path("validation")?, Split::Validation, classes)?;
        let test = load_dataset_csv(&cfg.require_path("test")?, Split::Test, classes)?;
        Ok((labeled, unlabeled, validation, test))
    } else {
        let task = synthetic_mixture_task(&mixture_spec(cfg, seed)?)?;
        let MixtureTask {
            labeled,
            unlabeled,
            validation,
            test,
            ..
        } = task;
        Ok((labeled, unlabeled, validation, test))
    }
}

fn distill_config(cfg: &Config, seed: u64) -> Result<DistillConfig> {
    Ok(DistillConfig {
        student_dim: cfg.get_usize("student_dim", 6)?,
        label_mode: parse_label_mode(cfg)?,
        refresh_rounds: cfg.get_u64("refresh", 1)? as usize,
        weight_scheme: parse_scheme(cfg)?,
        metric: parse_metric(cfg)?,
        temperature: cfg.get_f64("temperature", 1.0)?,
        seed,
        teacher_sgd: sgd_from(cfg, "teacher", 4000)?,
        pretrain_sgd: sgd_from(cfg, "pretrain", 2000)?,
        distill_sgd: sgd_from(cfg, "distill", 6000)?,
        log_every: cfg.get_usize("log_every", 250)?,
    })
}

fn simulate(args: &CommonArgs) -> Result<()> {
    let cfg = load_config(args)?;
    cfg.check_allowed(
        &[MIXTURE_KEYS, ["seed", "out"].as_slice()].concat(),
    )?;
    let seed = cfg.get_u64("seed", 42)?;
    let out = out_dir(&cfg)?;
    let task = synthetic_mixture_task(&mixture_spec(&cfg, seed)?)?;
    save_dataset_csv(&task.labeled, &out.join("labeled.csv"))?;
    save_dataset_csv(&task.unlabeled, &out.join("unlabeled.csv"))?;
    save_dataset_csv(&task.validation, &out.join("validation.csv"))?;
    save_dataset_csv(&task.test, &out.join("test.csv"))?;
    println!(
        "simulate: seed {seed}, {} labeled / {} unlabeled / {} validation / {} test -> {}",
        task.labeled.len(),
        task.unlabeled.len(),
        task.validation.len(),
        task.test.len(),
        out.display()
    );
    Ok(())
}

const DISTILL_KEYS: &[&str] = &[
    "seed",
    "out",
    "task",
    "labeled",
    "unlabeled",
    "validation",
    "test",
    "scheme",
    "metric",
    "label_mode",
    "refresh",
    "student_dim",
    "temperature",
    "log_every",
    "teacher_iterations",
    "teacher_step_scale",
    "pretrain_iterations",
    "pretrain_step_scale",
    "distill_iterations",
    "distill_step_scale",
];

fn distill(args: &CommonArgs) -> Result<()> {
    let cfg = load_config(args)?;
    cfg.check_allowed(&[DISTILL_KEYS, MIXTURE_KEYS].concat())?;
    let seed = cfg.get_u64("seed", 42)?;
    let out = out_dir(&cfg)?;
    let (labeled, unlabeled, validation, test) = load_task(&cfg, child_seed(seed, 1))?;
    let dc = distill_config(&cfg, seed)?;
    let report = run_distillation(&labeled, &unlabeled, &validation, &test, &dc)?;
    write_report_files(&report, &labeled.len(), &out)?;
    println!(
        "distill[{}]: teacher {:.4}, student {:.4} vs unit baseline {:.4} ({:+.4}) -> {}",
        report.primary.scheme.name(),
        report.teacher_accuracy,
        report.primary.final_accuracy,
        report.unit_baseline.final_accuracy,
        report.primary.final_accuracy - report.unit_baseline.final_accuracy,
        out.display()
    );
    Ok(())
}

fn write_report_files(report: &DistillReport, n_labeled: &usize, out: &Path) -> Result<()> {
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    std::fs::write(out.join("report.json"), json)?;
    export_report(report, out)?;
    if let Some(records) = &report.primary.unlabeled_records {
        save_weight_records_csv(
            records,
            &out.join(format!("weights_{}.csv", report.primary.scheme.name())),
        )?;
    } else {
        save_plain_weights_csv(
            &report.primary.unlabeled_weights,
            &out.join(format!("weights_{}.csv", report.primary.scheme.name())),
        )?;
    }
    save_plain_weights_csv(&vec![1.0; *n_labeled], &out.join("weights_labeled.csv"))?;
    Ok(())
}

const EXPERIMENT_KEYS: &[&str] = &["seed", "out", "experiment", "trials"];

fn experiment(args: &CommonArgs) -> Result<()> {
    let cfg = load_config(args)?;
    cfg.check_allowed(EXPERIMENT_KEYS)?;
    let id = cfg.require_str("experiment")?;
    if !EXPERIMENT_IDS.contains(&id) {
        return Err(ConfigError::new(format!(
            "invalid value for key `experiment`: `{id}` (expected one of {})",
            EXPERIMENT_IDS.join(", ")
        ))
        .into());
    }
    let id = id.to_string();
    let seed = cfg.get_u64("seed", 42)?;
    let trials = cfg.get_usize("trials", 5)?;
    if trials == 0 {
        return Err(ConfigError::new("invalid value for key `trials`: must be >= 1").into());
    }
    let out = out_dir(&cfg)?;
    let line = run_experiment(&id, seed, trials, &out)?;
    println!("{line}");
    Ok(())
}

fn estimate_weights_cmd(args: &CommonArgs) -> Result<()> {
    let cfg = load_config(args)?;
    cfg.check_allowed(&[DISTILL_KEYS, MIXTURE_KEYS].concat())?;
    let seed = cfg.get_u64("seed", 42)?;
    let out = out_dir(&cfg)?;
    let (labeled, unlabeled, validation, _test) = load_task(&cfg, child_seed(seed, 1))?;
    let dc = distill_config(&cfg, seed)?;

    let spec = LossSpec::cross_entropy();
    let teacher = train_teacher(&labeled, &dc.teacher_sgd, &spec, seed)?;
    let labeled_student = truncate_dataset(&labeled, dc.student_dim)?;
    let mut pretrain = dc.pretrain_sgd.clone();
    pretrain.seed = child_seed(seed, 2);
    let student = sgd_multi_pass(
        &labeled_student,
        &WeightFunction::Unit,
        &pretrain,
        &spec,
        &LinearParams::zeros(labeled.num_classes(), dc.student_dim),
        None,
    )?
    .iterates
    .last()
    .expect("non-empty")
    .clone();

    let pool = teacher_label(&teacher, &unlabeled, dc.label_mode, dc.temperature)?;
    let teacher_preds_v: Vec<_> = validation
        .examples()
        .iter()
        .map(|ex| teacher.predict(&ex.features, dc.temperature))
        .collect::<wdistill_core::Result<_>>()?;
    let student_preds_v: Vec<_> = validation
        .examples()
        .iter()
        .map(|ex| {
            student.predict(
                &wdistill_core::pipeline::student_feature_map(&ex.features, dc.student_dim),
                dc.temperature,
            )
        })
        .collect::<wdistill_core::Result<_>>()?;
    let labels_v: Vec<_> = validation
        .examples()
        .iter()
        .map(|ex| ex.label.clone())
        .collect();
    let index = build_validation_index(&teacher_preds_v, &student_preds_v, &labels_v, &spec, dc.metric)?;

    let teacher_preds_u: Vec<_> = pool
        .examples()
        .iter()
        .map(|ex| teacher.predict(&ex.features, dc.temperature))
        .collect::<wdistill_core::Result<_>>()?;
    let student_preds_u: Vec<_> = pool
        .examples()
        .iter()
        .map(|ex| {
            student.predict(
                &wdistill_core::pipeline::student_feature_map(&ex.features, dc.student_dim),
                dc.temperature,
            )
        })
        .collect::<wdistill_core::Result<_>>()?;
    let records = estimate_weights(&index, &teacher_preds_u, &student_preds_u)?;

    save_index_csv(&index, &out.join("index.csv"))?;
    save_weight_records_csv(&records, &out.join("weights.csv"))?;
    save_plain_weights_csv(&vec![1.0; labeled.len()], &out.join("weights_labeled.csv"))?;
    let mean: f64 = records.iter().map(|r| r.weight).sum::<f64>() / records.len() as f64;
    println!(
        "estimate-weights: |V| = {}, k = {}, {} weights, mean {:.4} -> {}",
        index.len(),
        index.k(),
        records.len(),
        mean,
        out.display()
    );
    Ok(())
}

fn export_plots(args: &CommonArgs) -> Result<()> {
    let cfg = load_config(args)?;
    cfg.check_allowed(&["report", "out", "seed"])?;
    let report_path = cfg.require_path("report")?;
    let out = out_dir(&cfg)?;
    let text = std::fs::read_to_string(&report_path)
        .with_context(|| format!("reading {}", report_path.display()))?;
    let report: DistillReport = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", report_path.display()))?;
    export_report(&report, &out)?;
    println!(
        "export-plots: {} -> {}",
        report_path.display(),
        out.display()
    );
    Ok(())
}
