//! Per-cohort analysis pipeline and reports.
//!
//! Stages run in a fixed order: validation, agreement benchmarks, operating
//! point, interchange test, verification-bias adjusted AUROC, additional
//! metrics, subset analyses. Every random stage gets its own key derived from
//! the configured seed, and the key is written to the report. Reports embed
//! the configuration that produced them; given the same input files the JSON
//! is byte-identical across runs and thread counts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agreement::{inter_reader_agreement, soc_agreement, AgreementTable, PrevalenceAdjusted, prevalence_adjust};
use crate::cohort::{
    align_predictions, load_cases_path, load_predictions_path, load_readings_path, validate_cohort, CaseRecord,
    CutoffRule, PatientId, ReaderScore, ValidationReport,
};
use crate::error::Error;
use crate::exec::{derive_seed, Execution};
use crate::interchange::{
    bootstrap_wald_ci, holm_adjusted, holm_bonferroni, Decision, InterchangeResult, DEFAULT_MARGIN,
};
use crate::mi::{fit_risk_model, pooled_auroc_mi, FitOptions, ImputationMode, MiPooledAuroc, RiskModel, BASE_PROBABILITY};
use crate::roc::{
    auroc_delong, benefit_harm_ratios, binarize, binary_metrics, select_operating_point, stratified_auroc,
    AurocEstimate, AurocMethod, BenefitHarm, BinaryMetrics, OperatingPoint, OperatingRule, StratifiedAuroc,
    Stratifier,
};

/// Pipeline stage, used to tag errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Load,
    Validation,
    Benchmark,
    OperatingPoint,
    Interchange,
    Auroc,
    Metrics,
    Subsets,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        f.write_str(&s)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

type StageResult<T> = std::result::Result<T, StageError>;

trait AtStage<T> {
    fn at(self, stage: Stage) -> StageResult<T>;
}

impl<T> AtStage<T> for crate::Result<T> {
    fn at(self, stage: Stage) -> StageResult<T> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// Where the agreement benchmarks come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum BenchmarkSource {
    /// Estimate from a reader study. Paths default to the cohort's own
    /// readings and cases files.
    ReaderStudy {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        readings: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cases: Option<PathBuf>,
    },
    /// Previously published per-class estimates, as proportions.
    Published {
        inter_reader_positive: f64,
        inter_reader_negative: f64,
        soc_positive: f64,
        soc_negative: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum RiskModelSource {
    /// Covariate-free model at the base probability.
    BaseRate,
    /// Model JSON as written by `RiskModel::to_json`.
    File { path: PathBuf },
    /// Fit on a fully verified cohort.
    Fit { cases: PathBuf },
}

fn default_margin() -> f64 {
    DEFAULT_MARGIN
}
fn default_reps() -> u64 {
    crate::agreement::DEFAULT_BOOTSTRAP_REPS
}
fn default_imputations() -> usize {
    crate::mi::DEFAULT_IMPUTATIONS
}
fn default_rule() -> OperatingRule {
    OperatingRule::Youden
}
fn default_risk_model() -> RiskModelSource {
    RiskModelSource::BaseRate
}
fn default_subsets() -> Vec<Stratifier> {
    Stratifier::ALL.to_vec()
}
fn default_extra_points() -> Vec<OperatingRule> {
    vec![OperatingRule::MatchedSensitivity { target: 0.90 }]
}

/// One cohort's analysis, as a declarative file. Relative paths resolve
/// against the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub cohort_name: String,
    pub cases: PathBuf,
    pub predictions: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readings: Option<PathBuf>,
    pub cutoff: CutoffRule,
    /// Prevalence used for the benchmark adjustment.
    pub prevalence: f64,
    pub benchmark: BenchmarkSource,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_reps")]
    pub bootstrap_reps: u64,
    #[serde(default = "default_imputations")]
    pub imputations: usize,
    pub seed: u64,
    #[serde(default = "default_rule")]
    pub operating_rule: OperatingRule,
    /// Further operating points for the additional metrics.
    #[serde(default = "default_extra_points")]
    pub additional_operating_points: Vec<OperatingRule>,
    #[serde(default = "default_risk_model")]
    pub risk_model: RiskModelSource,
    #[serde(default)]
    pub imputation_mode: ImputationMode,
    #[serde(default = "default_subsets")]
    pub subsets: Vec<Stratifier>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl AnalysisConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> crate::Result<Self> {
        let mut cfg: AnalysisConfig = serde_json::from_str(text)?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &dir)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn referenced_files(&self) -> Vec<&Path> {
        let mut files = vec![self.cases.as_path(), self.predictions.as_path()];
        files.extend(self.readings.as_deref());
        if let BenchmarkSource::ReaderStudy { readings, cases } = &self.benchmark {
            files.extend(readings.as_deref());
            files.extend(cases.as_deref());
        }
        match &self.risk_model {
            RiskModelSource::File { path } => files.push(path),
            RiskModelSource::Fit { cases } => files.push(cases),
            RiskModelSource::BaseRate => {}
        }
        files
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.cohort_name.trim().is_empty() {
            return Err(Error::invalid("cohort_name must not be empty"));
        }
        for (name, v) in [("prevalence", self.prevalence), ("margin", self.margin)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if let BenchmarkSource::Published { inter_reader_positive, inter_reader_negative, soc_positive, soc_negative } =
            &self.benchmark
        {
            for v in [inter_reader_positive, inter_reader_negative, soc_positive, soc_negative] {
                if !(0.0..=1.0).contains(v) {
                    return Err(Error::invalid(format!("published estimate {v} outside [0, 1]")));
                }
            }
        }
        if self.bootstrap_reps < 2 {
            return Err(Error::invalid("bootstrap_reps must be at least 2"));
        }
        if self.imputations < 2 {
            return Err(Error::invalid("imputations must be at least 2"));
        }
        for f in self.referenced_files() {
            let full = self.resolve(f);
            if !full.is_file() {
                return Err(Error::invalid(format!("referenced file `{}` does not exist", full.display())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    /// P_adj.
    pub inter_reader: PrevalenceAdjusted,
    /// Q_adj.
    pub standard_of_care: PrevalenceAdjusted,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inter_reader_table: Option<AgreementTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standard_of_care_table: Option<AgreementTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AurocReport {
    /// On verified cases only.
    pub complete_case: Option<AurocEstimate>,
    pub pooled: MiPooledAuroc,
    pub risk_model: RiskModel,
    pub imputation_mode: ImputationMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsAtPoint {
    pub operating_point: OperatingPoint,
    pub metrics: BinaryMetrics,
    pub benefit_harm: BenefitHarm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub tool: String,
    pub version: String,
    pub config: AnalysisConfig,
    pub seeds: BTreeMap<String, u64>,
    pub validation: ValidationReport,
    pub benchmark: BenchmarkReport,
    pub operating_point: OperatingPoint,
    pub interchange: InterchangeResult,
    /// Cases without a standard-of-care label (unverified with a positive
    /// historical read), left out of the primary endpoint.
    pub interchange_excluded_cases: usize,
    pub auroc: AurocReport,
    pub additional_metrics: Vec<MetricsAtPoint>,
    pub subsets: Vec<StratifiedAuroc>,
    pub warnings: Vec<String>,
}

/// Standard-of-care label for the primary endpoint: the verified label when
/// present; otherwise negative when the routine MRI read was negative
/// (PI-RADS <= 2), else unavailable.
pub fn soc_label(case: &CaseRecord) -> Option<bool> {
    case.label().or_else(|| (case.historical_pirads <= 2).then_some(false))
}

struct Loaded {
    cases: Vec<CaseRecord>,
    readings: Vec<ReaderScore>,
    scores: Vec<Option<f64>>,
    validation: ValidationReport,
}

fn load(cfg: &AnalysisConfig) -> StageResult<Loaded> {
    let cases = load_cases_path(&cfg.resolve(&cfg.cases)).at(Stage::Load)?;
    let predictions = load_predictions_path(&cfg.resolve(&cfg.predictions)).at(Stage::Load)?;
    let readings = match &cfg.readings {
        Some(p) => load_readings_path(&cfg.resolve(p)).at(Stage::Load)?,
        None => Vec::new(),
    };
    let validation = validate_cohort(&cases, &readings, &predictions);
    if !validation.unknown_prediction_cases.is_empty() {
        return Err(StageError {
            stage: Stage::Validation,
            source: Error::UnknownCase(validation.unknown_prediction_cases[0].clone()),
        });
    }
    let scores = align_predictions(&cases, &predictions).at(Stage::Validation)?;
    Ok(Loaded { cases, readings, scores, validation })
}

fn benchmarks(cfg: &AnalysisConfig, loaded: &Loaded, seeds: &mut BTreeMap<String, u64>, exec: Execution) -> StageResult<BenchmarkReport> {
    match &cfg.benchmark {
        BenchmarkSource::Published { inter_reader_positive, inter_reader_negative, soc_positive, soc_negative } => {
            Ok(BenchmarkReport {
                inter_reader: prevalence_adjust(cfg.prevalence, *inter_reader_positive, *inter_reader_negative)
                    .at(Stage::Benchmark)?,
                standard_of_care: prevalence_adjust(cfg.prevalence, *soc_positive, *soc_negative).at(Stage::Benchmark)?,
                inter_reader_table: None,
                standard_of_care_table: None,
            })
        }
        BenchmarkSource::ReaderStudy { readings, cases } => {
            let study_readings = match readings {
                Some(p) => load_readings_path(&cfg.resolve(p)).at(Stage::Load)?,
                None => loaded.readings.clone(),
            };
            if study_readings.is_empty() {
                return Err(StageError { stage: Stage::Benchmark, source: Error::EmptyInput("reader study readings") });
            }
            let study_cases = match cases {
                Some(p) => load_cases_path(&cfg.resolve(p)).at(Stage::Load)?,
                None => loaded.cases.clone(),
            };
            let seed = derive_seed(cfg.seed, "benchmark");
            seeds.insert("benchmark".into(), seed);
            let ir = inter_reader_agreement(&study_readings, &study_cases, cfg.cutoff, cfg.bootstrap_reps, seed, exec)
                .at(Stage::Benchmark)?;
            let soc = soc_agreement(&study_readings, &study_cases, cfg.cutoff, cfg.bootstrap_reps, seed, exec)
                .at(Stage::Benchmark)?;
            Ok(BenchmarkReport {
                inter_reader: ir.adjust(cfg.prevalence).at(Stage::Benchmark)?,
                standard_of_care: soc.adjust(cfg.prevalence).at(Stage::Benchmark)?,
                inter_reader_table: Some(ir),
                standard_of_care_table: Some(soc),
            })
        }
    }
}

fn risk_model(cfg: &AnalysisConfig, warnings: &mut Vec<String>) -> StageResult<RiskModel> {
    match &cfg.risk_model {
        RiskModelSource::BaseRate => Ok(RiskModel::base_rate(BASE_PROBABILITY)),
        RiskModelSource::File { path } => {
            let text = std::fs::read_to_string(cfg.resolve(path)).map_err(Error::from).at(Stage::Load)?;
            RiskModel::from_json(&text).at(Stage::Auroc)
        }
        RiskModelSource::Fit { cases } => {
            let verified = load_cases_path(&cfg.resolve(cases)).at(Stage::Load)?;
            let fit = fit_risk_model(&verified, FitOptions::default()).at(Stage::Auroc)?;
            warnings.extend(fit.warnings);
            Ok(fit.model)
        }
    }
}

/// Run every stage for one cohort.
pub fn run_full_analysis(cfg: &AnalysisConfig, exec: Execution) -> StageResult<AnalysisReport> {
    cfg.validate().at(Stage::Config)?;
    let loaded = load(cfg)?;
    let mut warnings = loaded.validation.warnings.clone();
    let mut seeds = BTreeMap::new();

    let benchmark = benchmarks(cfg, &loaded, &mut seeds, exec)?;

    // Cases with a standard-of-care label and an AI score.
    let mut labels = Vec::new();
    let mut scores = Vec::new();
    let mut patients: Vec<PatientId> = Vec::new();
    let mut grades = Vec::new();
    let mut excluded = 0;
    for (case, score) in loaded.cases.iter().zip(&loaded.scores) {
        match (soc_label(case), score) {
            (Some(l), Some(s)) => {
                labels.push(l);
                scores.push(*s);
                patients.push(case.patient_id.clone());
                grades.push(case.verification.grade_group());
            }
            _ => excluded += 1,
        }
    }
    if excluded > 0 {
        warnings.push(format!("{excluded} case(s) without a standard-of-care label or AI score left out of the primary endpoint"));
    }
    if labels.is_empty() {
        return Err(StageError { stage: Stage::Interchange, source: Error::EmptyInput("cases with label and score") });
    }

    let operating_point = select_operating_point(&labels, &scores, cfg.operating_rule).at(Stage::OperatingPoint)?;
    let ai = binarize(&scores, operating_point.threshold);

    let bseed = derive_seed(cfg.seed, "interchange");
    seeds.insert("interchange".into(), bseed);
    let ci = bootstrap_wald_ci(&labels, &ai, &patients, cfg.bootstrap_reps, bseed, exec).at(Stage::Interchange)?;
    let interchange = InterchangeResult::from_bootstrap(
        &cfg.cohort_name,
        &ci,
        benchmark.standard_of_care.adjusted,
        cfg.margin,
        Some(benchmark.inter_reader.adjusted),
    )
    .at(Stage::Interchange)?;

    // Verification-bias adjusted AUROC over all scored cases.
    let model = risk_model(cfg, &mut warnings)?;
    let mseed = derive_seed(cfg.seed, "imputation");
    seeds.insert("imputation".into(), mseed);
    let (scored_cases, scored): (Vec<CaseRecord>, Vec<f64>) = loaded
        .cases
        .iter()
        .zip(&loaded.scores)
        .filter_map(|(c, s)| s.map(|s| (c.clone(), s)))
        .unzip();
    let verified: (Vec<bool>, Vec<f64>) = scored_cases
        .iter()
        .zip(&scored)
        .filter_map(|(c, &s)| c.label().map(|l| (l, s)))
        .unzip();
    let complete_case = auroc_delong(&verified.0, &verified.1).ok();
    let pooled = pooled_auroc_mi(&scored_cases, &scored, &model, cfg.imputations, mseed, cfg.imputation_mode, exec)
        .at(Stage::Auroc)?;
    if pooled.excluded_imputations > 0 {
        warnings.push(format!("{} single-class imputation(s) excluded from pooling", pooled.excluded_imputations));
    }
    let auroc = AurocReport { complete_case, pooled, risk_model: model.clone(), imputation_mode: cfg.imputation_mode };

    let mut additional_metrics = Vec::new();
    let mut points = vec![operating_point];
    for &rule in &cfg.additional_operating_points {
        points.push(select_operating_point(&labels, &scores, rule).at(Stage::Metrics)?);
    }
    for op in points {
        let preds = binarize(&scores, op.threshold);
        additional_metrics.push(MetricsAtPoint {
            operating_point: op,
            metrics: binary_metrics(&labels, &preds).at(Stage::Metrics)?,
            benefit_harm: benefit_harm_ratios(&labels, &grades, &preds).at(Stage::Metrics)?,
        });
    }

    let sseed = derive_seed(cfg.seed, "subsets");
    seeds.insert("subsets".into(), sseed);
    let method = AurocMethod::MultipleImputation {
        model: &model,
        imputations: cfg.imputations,
        seed: sseed,
        mode: cfg.imputation_mode,
    };
    let subsets = cfg
        .subsets
        .iter()
        .map(|&s| stratified_auroc(&loaded.cases, &loaded.scores, s, method, exec))
        .collect::<crate::Result<Vec<_>>>()
        .at(Stage::Subsets)?;

    Ok(AnalysisReport {
        tool: "dxi".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        seeds,
        validation: loaded.validation,
        benchmark,
        operating_point,
        interchange,
        interchange_excluded_cases: excluded,
        auroc,
        additional_metrics,
        subsets,
        warnings,
    })
}

fn pct(v: f64) -> String {
    format!("{:.1}%", 100.0 * v)
}

fn opt_pct(v: Option<f64>) -> String {
    v.map(pct).unwrap_or_else(|| "n/a".into())
}

impl AnalysisReport {
    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Primary endpoint first, then the secondary measures.
    pub fn to_markdown(&self) -> String {
        let i = &self.interchange;
        let mut md = format!("# {}\n\n## Primary endpoint\n\n", self.config.cohort_name);
        md.push_str(&format!(
            "AI agreement with the standard of care: {} (95% CI {} to {}), {} cases.\n\n",
            pct(i.proportion),
            pct(i.ci_low),
            pct(i.ci_high),
            i.n_cases.unwrap_or_default()
        ));
        md.push_str(&format!(
            "Benchmark Q_adj {} minus margin {} gives a decision line at {}. Decision: **{}**",
            pct(i.benchmark),
            pct(i.margin),
            pct(i.decision_line),
            i.decision
        ));
        if let Some(p) = i.p_value {
            md.push_str(&format!(" (one-sided p = {p:.4})"));
        }
        md.push_str(".\n\n");
        if let (Some(lo), Some(hi)) = (i.percentile_low, i.percentile_high) {
            md.push_str(&format!("Percentile interval for reference: {} to {}.\n\n", pct(lo), pct(hi)));
        }
        md.push_str(&crate::simulate::render_plan_markdown(i));
        md.push_str("\n## Agreement benchmarks\n\n| Measure | p | Positive | Negative | Adjusted |\n|---|---|---|---|---|\n");
        for (name, b) in [("Inter-reader (P_adj)", &self.benchmark.inter_reader), ("Standard of care (Q_adj)", &self.benchmark.standard_of_care)] {
            md.push_str(&format!(
                "| {name} | {:.2} | {} | {} | {} |\n",
                b.p,
                pct(b.pos_estimate),
                pct(b.neg_estimate),
                pct(b.adjusted)
            ));
        }
        let op = &self.operating_point;
        md.push_str(&format!(
            "\n## Operating point\n\n{}: threshold {:.4}, sensitivity {}, specificity {}.\n",
            op.rule,
            op.threshold,
            pct(op.sensitivity),
            pct(op.specificity)
        ));
        let a = &self.auroc.pooled;
        md.push_str(&format!(
            "\n## AUROC\n\nPooled over {} imputations: {:.3} (95% CI {:.3} to {:.3}); U = {:.3e}, B = {:.3e}, T = {:.3e}.\n",
            a.m, a.q_pooled, a.ci_low, a.ci_high, a.within_var, a.between_var, a.total_var
        ));
        if let Some(cc) = &self.auroc.complete_case {
            md.push_str(&format!("Verified cases only: {:.3}.\n", cc.auroc));
        }
        md.push_str("\n## Additional metrics\n\n| Operating point | Sens | Spec | PPV | NPV | TP | FP | TN | FN | GG>=2 : GG1 | GG>=2 : (GG1 + neg) | TN : GG1 |\n|---|---|---|---|---|---|---|---|---|---|---|---|\n");
        for m in &self.additional_metrics {
            let b = &m.benefit_harm;
            md.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
                m.operating_point.rule,
                opt_pct(m.metrics.sensitivity),
                opt_pct(m.metrics.specificity),
                opt_pct(m.metrics.ppv),
                opt_pct(m.metrics.npv),
                m.metrics.tp,
                m.metrics.fp,
                m.metrics.tn,
                m.metrics.fn_,
                b.detections_to_gg1,
                b.detections_to_gg1_and_negatives,
                b.avoided_to_gg1
            ));
        }
        md.push_str("\n## Subset analyses\n");
        for s in &self.subsets {
            md.push_str(&format!("\n### {:?}\n\n| Stratum | Cases | AUROC | 95% CI | Note |\n|---|---|---|---|---|\n", s.stratifier));
            for st in &s.strata {
                let ci = match (st.ci_low, st.ci_high) {
                    (Some(lo), Some(hi)) => format!("{lo:.3} to {hi:.3}"),
                    _ => "n/a".into(),
                };
                md.push_str(&format!(
                    "| {} | {} | {} | {} | {} |\n",
                    st.stratum,
                    st.n_cases,
                    st.auroc.map(|a| format!("{a:.3}")).unwrap_or_else(|| "n/a".into()),
                    ci,
                    st.skipped.clone().unwrap_or_default()
                ));
            }
        }
        if !self.warnings.is_empty() {
            md.push_str("\n## Warnings\n\n");
            for w in &self.warnings {
                md.push_str(&format!("- {w}\n"));
            }
        }
        md
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortFailure {
    pub cohort_name: String,
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiCohortReport {
    pub cohorts: Vec<AnalysisReport>,
    /// Family-wise level for the one-sided p-values.
    pub alpha: f64,
    pub p_values: Vec<f64>,
    pub holm_adjusted_p: Vec<f64>,
    /// Holm rejections, aligned with `cohorts`.
    pub holm_reject: Vec<bool>,
    /// Per-cohort CI rule, unadjusted.
    pub ci_rule: Vec<Decision>,
    /// Set when a cohort failed; later cohorts were not run.
    pub partial: bool,
    pub failure: Option<CohortFailure>,
}

/// One-sided level matching the lower bound of a two-sided 95% interval.
pub const FAMILY_ALPHA: f64 = 0.025;

/// Run cohorts in order and apply Holm's procedure to their one-sided
/// p-values. The first failing cohort stops the run; the report is then
/// marked partial and covers the cohorts completed so far.
pub fn run_multi_cohort(configs: &[AnalysisConfig], exec: Execution) -> crate::Result<MultiCohortReport> {
    if configs.is_empty() {
        return Err(Error::EmptyInput("cohort configurations"));
    }
    let mut cohorts = Vec::new();
    let mut failure = None;
    for cfg in configs {
        match run_full_analysis(cfg, exec) {
            Ok(r) => cohorts.push(r),
            Err(e) => {
                failure = Some(CohortFailure {
                    cohort_name: cfg.cohort_name.clone(),
                    stage: e.stage,
                    message: e.source.to_string(),
                });
                break;
            }
        }
    }
    let p_values: Vec<f64> = cohorts.iter().map(|r| r.interchange.p_value.unwrap_or(1.0)).collect();
    let (holm_reject, holm_adjusted_p) = if p_values.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        (holm_bonferroni(&p_values, FAMILY_ALPHA)?, holm_adjusted(&p_values)?)
    };
    Ok(MultiCohortReport {
        ci_rule: cohorts.iter().map(|r| r.interchange.decision).collect(),
        cohorts,
        alpha: FAMILY_ALPHA,
        p_values,
        holm_adjusted_p,
        holm_reject,
        partial: failure.is_some(),
        failure,
    })
}

impl MultiCohortReport {
    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn to_markdown(&self) -> String {
        let mut md = String::from("# Multi-cohort summary\n\n");
        if let Some(f) = &self.failure {
            md.push_str(&format!(
                "**Partial report**: cohort `{}` failed at the {} stage: {}\n\n",
                f.cohort_name, f.stage, f.message
            ));
        }
        md.push_str(&format!(
            "| Cohort | Agreement | CI low | Decision line | CI rule | p | Holm p | Holm (alpha {}) |\n|---|---|---|---|---|---|---|---|\n",
            self.alpha
        ));
        for (k, r) in self.cohorts.iter().enumerate() {
            let i = &r.interchange;
            md.push_str(&format!(
                "| {} | {} | {} | {} | {} | {:.4} | {:.4} | {} |\n",
                i.cohort_name,
                pct(i.proportion),
                pct(i.ci_low),
                pct(i.decision_line),
                self.ci_rule[k],
                self.p_values[k],
                self.holm_adjusted_p[k],
                if self.holm_reject[k] { "reject" } else { "retain" }
            ));
        }
        for r in &self.cohorts {
            md.push('\n');
            md.push_str(&r.to_markdown());
        }
        md
    }
}
