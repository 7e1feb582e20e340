//! `dxi`: command-line front end.

mod render;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dxi_core::agreement::{inter_reader_agreement, soc_agreement, DEFAULT_BOOTSTRAP_REPS};
use dxi_core::cohort::{
    align_predictions, load_cases_path, load_predictions_path, load_readings_path, validate_cohort, write_cases,
    write_readings, CutoffRule, DataFormat,
};
use dxi_core::interchange::{bootstrap_wald_ci, InterchangeResult, DEFAULT_MARGIN};
use dxi_core::mi::{fit_risk_model, pooled_auroc_mi, FitOptions, ImputationMode, RiskModel, DEFAULT_IMPUTATIONS};
use dxi_core::pipeline::{run_full_analysis, run_multi_cohort, soc_label, AnalysisConfig};
use dxi_core::power::halfwidth_table;
use dxi_core::roc::{
    benefit_harm_ratios, binarize, binary_metrics, select_operating_point, stratified_auroc, AurocMethod,
    OperatingRule, RocCurve, Stratifier,
};
use dxi_core::simulate::{
    calibrate_read_noise, plan_figure_csv, render_plan_markdown, simulate_plan, simulate_reader_panel,
    simulate_table3, summarize_plan, PlanScenario, ReaderPanelSpec, Table3Config, TABLE3_AUROCS,
};
use dxi_core::Execution;

const DEFAULT_SEED: u64 = 20240601;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Md,
    Csv,
}

impl OutputFormat {
    fn extension(self) -> &'static str {
        match self {
            OutputFormat::Json => "json",
            OutputFormat::Md => "md",
            OutputFormat::Csv => "csv",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dxi", version, about = "Diagnostic interchangeability analysis toolkit")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Master seed (overrides the config seed for `run`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Bootstrap replications.
    #[arg(long, global = true)]
    bootstrap_reps: Option<u64>,
    /// Number of imputations.
    #[arg(long, global = true)]
    imputations: Option<usize>,
    /// Absolute interchangeability margin.
    #[arg(long, global = true)]
    margin: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    output: OutputFormat,
    /// Write results into this directory instead of stdout.
    #[arg(long, global = true, env = "DXI_OUTPUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Run resampling loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,
}

impl Global {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }
    fn reps(&self) -> u64 {
        self.bootstrap_reps.unwrap_or(DEFAULT_BOOTSTRAP_REPS)
    }
    fn imputations(&self) -> usize {
        self.imputations.unwrap_or(DEFAULT_IMPUTATIONS)
    }
    fn margin(&self) -> f64 {
        self.margin.unwrap_or(DEFAULT_MARGIN)
    }
    fn exec(&self) -> Execution {
        if self.sequential { Execution::Sequential } else { Execution::Parallel }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check input files and summarize the cohort.
    Validate(CohortFiles),
    /// Inter-reader and reader-vs-standard-of-care agreement.
    Agreement(AgreementArgs),
    /// Primary endpoint: AI agreement with the standard of care against a benchmark.
    Interchange(InterchangeArgs),
    /// Verification-bias adjusted AUROC by multiple imputation.
    AurocMi(AurocMiArgs),
    /// Sensitivity, specificity, PPV, NPV, confusion matrix and benefit-to-harm ratios.
    Metrics(MetricsArgs),
    /// Simulation studies.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Expected 95% CI half-widths.
    Power(PowerArgs),
    /// Full analysis from one or more config files.
    Run(RunArgs),
}

#[derive(Debug, Args)]
struct CohortFiles {
    #[arg(long)]
    cases: Option<PathBuf>,
    #[arg(long)]
    readings: Option<PathBuf>,
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AgreementArgs {
    #[arg(long)]
    readings: PathBuf,
    #[arg(long)]
    cases: PathBuf,
    #[arg(long, default_value = "ge3")]
    cutoff: CutoffRule,
    /// Prevalence for the adjusted estimates.
    #[arg(long)]
    prevalence: Option<f64>,
}

#[derive(Debug, Args)]
struct InterchangeArgs {
    #[arg(long)]
    cases: Option<PathBuf>,
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Benchmark Q_adj (proportion).
    #[arg(long)]
    benchmark: f64,
    /// Inter-reader P_adj shown for context.
    #[arg(long)]
    inter_reader: Option<f64>,
    /// Operating rule: youden, spec:X, sens:X or fixed:T.
    #[arg(long, default_value = "youden")]
    rule: OperatingRule,
    #[arg(long, default_value = "cohort")]
    name: String,
    /// Decide from a known interval instead of data: proportion,low,high.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["cases", "predictions"])]
    interval: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Improper,
    Proper,
}

#[derive(Debug, Args)]
struct AurocMiArgs {
    #[arg(long)]
    cases: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    /// Risk model JSON.
    #[arg(long, conflicts_with = "fit")]
    model: Option<PathBuf>,
    /// Fit the risk model on this fully verified cohort.
    #[arg(long)]
    fit: Option<PathBuf>,
    /// Write the risk model used to this path.
    #[arg(long)]
    export_model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeArg::Improper)]
    mode: ModeArg,
    /// Also report per-stratum AUROC (age-band, pi-qual, ethnicity).
    #[arg(long)]
    stratify: Vec<Stratifier>,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[arg(long)]
    cases: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    /// Operating rules; defaults to youden and sens:0.9.
    #[arg(long)]
    rule: Vec<OperatingRule>,
    /// Write the ROC curve (threshold, sensitivity, specificity) here.
    #[arg(long)]
    roc_csv: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum SimulateCommand {
    /// Six simulated systems at two operating points.
    Table3(Table3Args),
    /// The analysis plan on simulated agreement outcomes.
    Plan(PlanArgs),
    /// Synthetic reader panel written as cases and readings files.
    Panel(PanelArgs),
}

#[derive(Debug, Args)]
struct Table3Args {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.30)]
    prevalence: f64,
    #[arg(long, default_value_t = 0.57)]
    spec_target: f64,
    #[arg(long, value_delimiter = ',')]
    targets: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[arg(long, default_value_t = 0.675)]
    benchmark: f64,
    #[arg(long, default_value_t = 0.74)]
    true_agreement: f64,
    #[arg(long, default_value_t = 476)]
    n: usize,
    #[arg(long, default_value_t = 0.30)]
    prevalence: f64,
    #[arg(long)]
    inter_reader: Option<f64>,
    /// Repeat the simulation and report rejection rate and coverage.
    #[arg(long)]
    simulations: Option<usize>,
}

#[derive(Debug, Args)]
struct PanelArgs {
    #[arg(long, default_value_t = 400)]
    n_cases: usize,
    #[arg(long, default_value_t = 8)]
    n_readers: usize,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    prevalence: f64,
    #[arg(long, default_value_t = 2.0)]
    separation: f64,
    #[arg(long, default_value_t = 0.6)]
    difficulty_sd: f64,
    #[arg(long, default_value_t = 0.3)]
    threshold_sd: f64,
    #[arg(long, default_value_t = 1.0)]
    read_noise: f64,
    /// Calibrate the read noise to this expected PI-RADS >= 3 agreement.
    #[arg(long)]
    target_agreement: Option<f64>,
}

#[derive(Debug, Args)]
struct PowerArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [0.70, 0.75, 0.80])]
    p: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [476u64, 1143, 391])]
    n: Vec<u64>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// One config per cohort; more than one adds the Holm adjustment.
    #[arg(required = true)]
    configs: Vec<PathBuf>,
}

/// A rendered result.
struct Emitted {
    stem: &'static str,
    body: String,
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn no_csv(what: &str) -> anyhow::Error {
    anyhow::anyhow!("csv output is not available for {what}; use json or md")
}

fn require(path: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    path.clone().with_context(|| format!("--{flag} is required"))
}

fn emit(g: &Global, out: Emitted) -> Result<()> {
    match &g.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(format!("{}.{}", out.stem, g.output.extension()));
            std::fs::write(&path, out.body).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{}", out.body),
    }
    Ok(())
}

fn validate(g: &Global, a: &CohortFiles) -> Result<Emitted> {
    let cases = a.cases.as_deref().map(load_cases_path).transpose()?.unwrap_or_default();
    let readings = a.readings.as_deref().map(load_readings_path).transpose()?.unwrap_or_default();
    let predictions = a.predictions.as_deref().map(load_predictions_path).transpose()?.unwrap_or_default();
    if a.cases.is_none() && a.readings.is_none() && a.predictions.is_none() {
        bail!("nothing to validate: pass --cases, --readings and/or --predictions");
    }
    let report = validate_cohort(&cases, &readings, &predictions);
    let body = match g.output {
        OutputFormat::Json => json(&report)?,
        OutputFormat::Md => render::validation(&report),
        OutputFormat::Csv => return Err(no_csv("validate")),
    };
    if !report.referentially_intact() {
        emit(g, Emitted { stem: "validation", body })?;
        bail!("files reference unknown cases");
    }
    Ok(Emitted { stem: "validation", body })
}

fn agreement(g: &Global, a: &AgreementArgs) -> Result<Emitted> {
    let readings = load_readings_path(&a.readings)?;
    let cases = load_cases_path(&a.cases)?;
    let ir = inter_reader_agreement(&readings, &cases, a.cutoff, g.reps(), g.seed(), g.exec())?;
    let soc = soc_agreement(&readings, &cases, a.cutoff, g.reps(), g.seed(), g.exec())?;
    let adjusted = match a.prevalence {
        Some(p) => Some((ir.adjust(p)?, soc.adjust(p)?)),
        None => None,
    };
    let body = match g.output {
        OutputFormat::Json => json(&serde_json::json!({
            "seed": g.seed(),
            "inter_reader": ir,
            "standard_of_care": soc,
            "inter_reader_adjusted": adjusted.map(|a| a.0),
            "standard_of_care_adjusted": adjusted.map(|a| a.1),
        }))?,
        OutputFormat::Md => render::agreement(&ir, &soc, adjusted),
        OutputFormat::Csv => render::agreement_csv(&ir, &soc),
    };
    Ok(Emitted { stem: "agreement", body })
}

fn interchange(g: &Global, a: &InterchangeArgs) -> Result<Emitted> {
    let result = match &a.interval {
        Some(v) if v.len() != 3 => bail!("--interval takes proportion,low,high"),
        Some(v) => InterchangeResult::from_interval(&a.name, v[0], (v[1], v[2]), a.benchmark, g.margin(), a.inter_reader)?,
        None => {
            let cases = load_cases_path(&require(&a.cases, "cases")?)?;
            let preds = load_predictions_path(&require(&a.predictions, "predictions")?)?;
            let scores = align_predictions(&cases, &preds)?;
            let (mut labels, mut s, mut pids) = (Vec::new(), Vec::new(), Vec::new());
            for (c, sc) in cases.iter().zip(&scores) {
                if let (Some(l), Some(sc)) = (soc_label(c), sc) {
                    labels.push(l);
                    s.push(*sc);
                    pids.push(c.patient_id.clone());
                }
            }
            let op = select_operating_point(&labels, &s, a.rule)?;
            let ai = binarize(&s, op.threshold);
            let ci = bootstrap_wald_ci(&labels, &ai, &pids, g.reps(), g.seed(), g.exec())?;
            InterchangeResult::from_bootstrap(&a.name, &ci, a.benchmark, g.margin(), a.inter_reader)?
        }
    };
    let body = match g.output {
        OutputFormat::Json => json(&result)?,
        OutputFormat::Md => render_plan_markdown(&result),
        OutputFormat::Csv => plan_figure_csv(&result),
    };
    Ok(Emitted { stem: "interchange", body })
}

fn auroc_mi(g: &Global, a: &AurocMiArgs) -> Result<Emitted> {
    let cases = load_cases_path(&a.cases)?;
    let preds = load_predictions_path(&a.predictions)?;
    let model = match (&a.model, &a.fit) {
        (Some(path), _) => RiskModel::from_json(&std::fs::read_to_string(path)?)?,
        (None, Some(path)) => {
            let fit = fit_risk_model(&load_cases_path(path)?, FitOptions::default())?;
            for w in &fit.warnings {
                eprintln!("warning: {w}");
            }
            fit.model
        }
        (None, None) => RiskModel::base_rate(dxi_core::mi::BASE_PROBABILITY),
    };
    if let Some(path) = &a.export_model {
        std::fs::write(path, model.to_json()? + "\n")?;
    }
    let mode = match a.mode {
        ModeArg::Improper => ImputationMode::Improper,
        ModeArg::Proper => ImputationMode::Proper,
    };
    let scores = align_predictions(&cases, &preds)?;
    let (scored_cases, scored): (Vec<_>, Vec<f64>) =
        cases.iter().zip(&scores).filter_map(|(c, s)| s.map(|s| (c.clone(), s))).unzip();
    let pooled = pooled_auroc_mi(&scored_cases, &scored, &model, g.imputations(), g.seed(), mode, g.exec())?;
    let method = AurocMethod::MultipleImputation { model: &model, imputations: g.imputations(), seed: g.seed(), mode };
    let strata = a
        .stratify
        .iter()
        .map(|&s| stratified_auroc(&cases, &scores, s, method, g.exec()))
        .collect::<dxi_core::Result<Vec<_>>>()?;
    let body = match g.output {
        OutputFormat::Json => json(&serde_json::json!({
            "seed": g.seed(),
            "risk_model": model,
            "pooled": pooled,
            "strata": strata,
        }))?,
        OutputFormat::Md => render::auroc_mi(&pooled, &strata),
        OutputFormat::Csv => render::strata_csv(&pooled, &strata),
    };
    Ok(Emitted { stem: "auroc_mi", body })
}

fn metrics(g: &Global, a: &MetricsArgs) -> Result<Emitted> {
    let cases = load_cases_path(&a.cases)?;
    let preds = load_predictions_path(&a.predictions)?;
    let scores = align_predictions(&cases, &preds)?;
    let (mut labels, mut s, mut grades) = (Vec::new(), Vec::new(), Vec::new());
    for (c, sc) in cases.iter().zip(&scores) {
        if let (Some(l), Some(sc)) = (soc_label(c), sc) {
            labels.push(l);
            s.push(*sc);
            grades.push(c.verification.grade_group());
        }
    }
    let rules = if a.rule.is_empty() {
        vec![OperatingRule::Youden, OperatingRule::MatchedSensitivity { target: 0.90 }]
    } else {
        a.rule.clone()
    };
    let mut rows = Vec::new();
    for rule in rules {
        let op = select_operating_point(&labels, &s, rule)?;
        let p = binarize(&s, op.threshold);
        rows.push((op, binary_metrics(&labels, &p)?, benefit_harm_ratios(&labels, &grades, &p)?));
    }
    if let Some(path) = &a.roc_csv {
        std::fs::write(path, RocCurve::from_scores(&labels, &s)?.to_csv())?;
    }
    let body = match g.output {
        OutputFormat::Json => json(
            &rows
                .iter()
                .map(|(op, m, b)| serde_json::json!({"operating_point": op, "metrics": m, "benefit_harm": b}))
                .collect::<Vec<_>>(),
        )?,
        OutputFormat::Md => render::metrics(&rows),
        OutputFormat::Csv => render::metrics_csv(&rows),
    };
    Ok(Emitted { stem: "metrics", body })
}

fn simulate(g: &Global, c: &SimulateCommand) -> Result<Emitted> {
    match c {
        SimulateCommand::Table3(a) => {
            let cfg = Table3Config {
                targets: a.targets.clone().unwrap_or_else(|| TABLE3_AUROCS.to_vec()),
                prevalence: a.prevalence,
                n_cases: a.n,
                spec_target: a.spec_target,
                seed: g.seed(),
            };
            let t = simulate_table3(&cfg, g.exec())?;
            let body = match g.output {
                OutputFormat::Json => json(&t)?,
                OutputFormat::Md => t.to_markdown(),
                OutputFormat::Csv => t.to_csv(),
            };
            Ok(Emitted { stem: "table3", body })
        }
        SimulateCommand::Plan(a) => {
            let scenario = PlanScenario {
                benchmark: a.benchmark,
                margin: g.margin(),
                true_agreement: a.true_agreement,
                n_cases: a.n,
                prevalence: a.prevalence,
                reps: g.bootstrap_reps.unwrap_or(10_000),
                seed: g.seed(),
                context_inter_reader: a.inter_reader,
            };
            let body = match a.simulations {
                Some(k) => {
                    let s = summarize_plan(&scenario, k, g.exec())?;
                    match g.output {
                        OutputFormat::Json => json(&s)?,
                        OutputFormat::Md => render::plan_summary(&s),
                        OutputFormat::Csv => format!(
                            "simulations,rejection_rate,coverage,percentile_coverage\n{},{},{},{}\n",
                            s.simulations, s.rejection_rate, s.coverage, s.percentile_coverage
                        ),
                    }
                }
                None => {
                    let r = simulate_plan(&scenario, g.exec())?;
                    match g.output {
                        OutputFormat::Json => json(&r)?,
                        OutputFormat::Md => render_plan_markdown(&r),
                        OutputFormat::Csv => plan_figure_csv(&r),
                    }
                }
            };
            Ok(Emitted { stem: "plan", body })
        }
        SimulateCommand::Panel(a) => {
            let mut spec = ReaderPanelSpec {
                n_cases: a.n_cases,
                n_readers: a.n_readers,
                prevalence: a.prevalence,
                separation: a.separation,
                difficulty_sd: a.difficulty_sd,
                threshold_sd: a.threshold_sd,
                read_noise: a.read_noise,
            };
            if let Some(t) = a.target_agreement {
                spec = calibrate_read_noise(spec, t)?;
            }
            let panel = simulate_reader_panel(spec, g.seed())?;
            if let Some(dir) = &g.out_dir {
                std::fs::create_dir_all(dir)?;
                write_cases(std::fs::File::create(dir.join("panel_cases.csv"))?, DataFormat::Csv, &panel.cases)?;
                write_readings(std::fs::File::create(dir.join("panel_readings.csv"))?, DataFormat::Csv, &panel.readings)?;
            }
            let summary = serde_json::json!({
                "seed": g.seed(),
                "spec": spec,
                "expected_agreement_ge3": spec.expected_agreement(),
                "n_readings": panel.readings.len(),
            });
            let body = match g.output {
                OutputFormat::Json => json(&summary)?,
                OutputFormat::Md => format!(
                    "Reader panel: {} cases x {} readers, read noise {:.4}, expected PI-RADS >= 3 agreement {:.1}%.\n",
                    spec.n_cases,
                    spec.n_readers,
                    spec.read_noise,
                    100.0 * spec.expected_agreement()
                ),
                OutputFormat::Csv => {
                    let mut buf = Vec::new();
                    write_readings(&mut buf, DataFormat::Csv, &panel.readings)?;
                    String::from_utf8(buf)?
                }
            };
            Ok(Emitted { stem: "panel", body })
        }
    }
}

fn power(g: &Global, a: &PowerArgs) -> Result<Emitted> {
    let t = halfwidth_table(&a.p, &a.n)?;
    let body = match g.output {
        OutputFormat::Json => json(&t)?,
        OutputFormat::Md => t.to_markdown(),
        OutputFormat::Csv => t.to_csv(),
    };
    Ok(Emitted { stem: "power", body })
}

fn load_config(g: &Global, path: &Path) -> Result<AnalysisConfig> {
    let mut cfg = AnalysisConfig::load(path).with_context(|| format!("reading config {}", path.display()))?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(b) = g.bootstrap_reps {
        cfg.bootstrap_reps = b;
    }
    if let Some(m) = g.imputations {
        cfg.imputations = m;
    }
    if let Some(m) = g.margin {
        cfg.margin = m;
    }
    Ok(cfg)
}

/// Returns the rendered report and whether every stage completed.
fn run(g: &Global, a: &RunArgs) -> Result<(Emitted, bool)> {
    let configs = a.configs.iter().map(|p| load_config(g, p)).collect::<Result<Vec<_>>>()?;
    if configs.len() == 1 {
        let report = run_full_analysis(&configs[0], g.exec())?;
        let body = match g.output {
            OutputFormat::Json => report.to_json()?,
            OutputFormat::Md => report.to_markdown(),
            OutputFormat::Csv => return Err(no_csv("run")),
        };
        return Ok((Emitted { stem: "report", body }, true));
    }
    let report = run_multi_cohort(&configs, g.exec())?;
    let body = match g.output {
        OutputFormat::Json => report.to_json()?,
        OutputFormat::Md => report.to_markdown(),
        OutputFormat::Csv => return Err(no_csv("run")),
    };
    Ok((Emitted { stem: "report", body }, !report.partial))
}

fn dispatch(cli: &Cli) -> Result<bool> {
    let g = &cli.global;
    let out = match &cli.command {
        Command::Validate(a) => validate(g, a)?,
        Command::Agreement(a) => agreement(g, a)?,
        Command::Interchange(a) => interchange(g, a)?,
        Command::AurocMi(a) => auroc_mi(g, a)?,
        Command::Metrics(a) => metrics(g, a)?,
        Command::Simulate(c) => simulate(g, c)?,
        Command::Power(a) => power(g, a)?,
        Command::Run(a) => {
            let (out, complete) = run(g, a)?;
            emit(g, out)?;
            return Ok(complete);
        }
    };
    emit(g, out)?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: analysis incomplete (partial report)");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
