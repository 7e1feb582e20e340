//! Simulation harnesses.
//!
//! - Equal-variance binormal AI scores at a target AUROC: negatives
//!   `N(0, 1)`, positives `N(mu, 1)` with `mu = sqrt(2) · Φ⁻¹(AUROC)`, then
//!   mapped affinely onto `[0, 100]`.
//! - The operating-point table: six systems on one shared label set, each
//!   thresholded at matched specificity and at Youden's index.
//! - The analysis-plan simulation: Bernoulli agreement outcomes run through the
//!   interchange test, with rejection-rate and coverage summaries.
//! - A synthetic reader panel with tunable inter-reader agreement, used as an
//!   oracle for the agreement estimators.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cohort::{CaseRecord, PatientId, ReaderScore, Strata, Verification};
use crate::error::{Error, Result};
use crate::exec::{derive_seed, stream_rng, Execution};
use crate::interchange::{bootstrap_wald_ci, InterchangeResult};
use crate::roc::{auroc, binary_metrics, binarize, krippendorff_alpha, select_operating_point, OperatingRule};

fn std_normal() -> Normal {
    Normal::standard()
}

/// `sqrt(2) · Φ⁻¹(target)` for `target` in `[0.5, 1)`.
pub fn binormal_mu(target_auroc: f64) -> Result<f64> {
    if !(0.5..1.0).contains(&target_auroc) {
        return Err(Error::invalid(format!("target AUROC must lie in [0.5, 1), got {target_auroc}")));
    }
    Ok(std::f64::consts::SQRT_2 * std_normal().inverse_cdf(target_auroc))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinormalSpec {
    pub target_auroc: f64,
    pub prevalence: f64,
    pub n_cases: usize,
}

impl BinormalSpec {
    pub fn mu_separation(&self) -> Result<f64> {
        binormal_mu(self.target_auroc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedScores {
    pub labels: Vec<bool>,
    /// On `[0, 100]`.
    pub scores: Vec<f64>,
}

fn draw_labels(n: usize, prevalence: f64, seed: u64) -> Result<Vec<bool>> {
    if !(0.0..=1.0).contains(&prevalence) {
        return Err(Error::invalid(format!("prevalence must lie in [0, 1], got {prevalence}")));
    }
    if n < 2 {
        return Err(Error::invalid("at least 2 cases are required"));
    }
    let mut rng = stream_rng(seed, 0);
    let labels: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < prevalence).collect();
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::SingleClass("simulated labels contain a single class".into()));
    }
    Ok(labels)
}

fn draw_scores(labels: &[bool], mu: f64, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, stream);
    let raw: Vec<f64> = labels
        .iter()
        .map(|&l| {
            let z: f64 = StandardNormal.sample(&mut rng);
            if l { z + mu } else { z }
        })
        .collect();
    let (lo, hi) = raw.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = hi - lo;
    raw.iter().map(|v| if span > 0.0 { 100.0 * (v - lo) / span } else { 50.0 }).collect()
}

/// Labels from stream `(seed, 0)`, scores from stream `(seed, 1)`.
pub fn simulate_scores(spec: BinormalSpec, seed: u64) -> Result<SimulatedScores> {
    let mu = spec.mu_separation()?;
    let labels = draw_labels(spec.n_cases, spec.prevalence, seed)?;
    let scores = draw_scores(&labels, mu, seed, 1);
    Ok(SimulatedScores { labels, scores })
}

pub const TABLE3_AUROCS: [f64; 6] = [0.75, 0.80, 0.85, 0.90, 0.95, 0.99];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3Config {
    pub targets: Vec<f64>,
    pub prevalence: f64,
    pub n_cases: usize,
    /// Specificity matched by the first operating point.
    pub spec_target: f64,
    pub seed: u64,
}

impl Default for Table3Config {
    fn default() -> Self {
        Table3Config {
            targets: TABLE3_AUROCS.to_vec(),
            prevalence: 0.30,
            n_cases: 1000,
            spec_target: 0.57,
            seed: 20240601,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3Row {
    /// `A`, `B`, ... in target order.
    pub system: String,
    pub rule: OperatingRule,
    pub target_auroc: f64,
    /// Empirical AUROC of the simulated scores.
    pub auroc: f64,
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    /// Krippendorff's alpha between binarized AI output and labels.
    pub alpha: f64,
    pub agreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3 {
    pub config: Table3Config,
    /// Matched-specificity rows for every system, then Youden rows.
    pub rows: Vec<Table3Row>,
}

/// One label set shared by all systems; system `k` draws scores from stream
/// `(seed, k + 1)`.
pub fn simulate_table3(config: &Table3Config, exec: Execution) -> Result<Table3> {
    if config.targets.is_empty() {
        return Err(Error::EmptyInput("AUROC targets"));
    }
    let labels = draw_labels(config.n_cases, config.prevalence, config.seed)?;
    let rules = [OperatingRule::MatchedSpecificity { target: config.spec_target }, OperatingRule::Youden];
    let per_system = exec.map_indexed(config.targets.len() as u64, |k| -> Result<Vec<Table3Row>> {
        let target = config.targets[k as usize];
        let scores = draw_scores(&labels, binormal_mu(target)?, config.seed, k + 1);
        let area = auroc(&labels, &scores)?;
        rules
            .iter()
            .map(|&rule| {
                let op = select_operating_point(&labels, &scores, rule)?;
                let predicted = binarize(&scores, op.threshold);
                let m = binary_metrics(&labels, &predicted)?;
                Ok(Table3Row {
                    system: char::from(b'A' + (k as u8 % 26)).to_string(),
                    rule,
                    target_auroc: target,
                    auroc: area,
                    threshold: op.threshold,
                    sensitivity: op.sensitivity,
                    specificity: op.specificity,
                    alpha: krippendorff_alpha(&predicted, &labels)?,
                    agreement: m.agreement,
                })
            })
            .collect()
    });
    let per_system = per_system.into_iter().collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(2 * per_system.len());
    for r in 0..rules.len() {
        rows.extend(per_system.iter().map(|sys| sys[r].clone()));
    }
    Ok(Table3 { config: config.clone(), rows })
}

impl Table3 {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("operating_point,system,auroc,sensitivity,specificity,alpha,agreement\n");
        for r in &self.rows {
            let rule = match r.rule {
                OperatingRule::Youden => "youden".to_string(),
                other => other.to_string(),
            };
            out.push_str(&format!(
                "{rule},{},{:.2},{:.2},{:.2},{:.2},{:.1}\n",
                r.system,
                r.auroc,
                r.sensitivity,
                r.specificity,
                r.alpha,
                100.0 * r.agreement
            ));
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Operating point | System | AUROC | Sens | Spec | α | Agreement |\n");
        out.push_str("|---|---|---|---|---|---|---|\n");
        for r in &self.rows {
            out.push_str(&format!(
                "| {} | {} | {:.2} | {:.2} | {:.2} | {:.2} | {:.1}% |\n",
                r.rule,
                r.system,
                r.auroc,
                r.sensitivity,
                r.specificity,
                r.alpha,
                100.0 * r.agreement
            ));
        }
        out
    }
}

/// One configuration of the analysis-plan simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanScenario {
    pub benchmark: f64,
    pub margin: f64,
    pub true_agreement: f64,
    pub n_cases: usize,
    /// Prevalence of the simulated standard-of-care labels.
    pub prevalence: f64,
    pub reps: u64,
    pub seed: u64,
    /// Optional inter-reader context line.
    pub context_inter_reader: Option<f64>,
}

/// Simulated cohort of `n` single-case patients whose AI output agrees with
/// the label with probability `true_agreement`, run through the interchange
/// test.
pub fn simulate_plan(s: &PlanScenario, exec: Execution) -> Result<InterchangeResult> {
    if !(0.0..=1.0).contains(&s.true_agreement) || !(0.0..=1.0).contains(&s.prevalence) {
        return Err(Error::invalid("agreement and prevalence must lie in [0, 1]"));
    }
    if s.n_cases == 0 {
        return Err(Error::EmptyInput("simulated cohort"));
    }
    let mut rng = stream_rng(derive_seed(s.seed, "plan/outcomes"), 0);
    let mut soc = Vec::with_capacity(s.n_cases);
    let mut ai = Vec::with_capacity(s.n_cases);
    for _ in 0..s.n_cases {
        let label = rng.random::<f64>() < s.prevalence;
        let agree = rng.random::<f64>() < s.true_agreement;
        soc.push(label);
        ai.push(if agree { label } else { !label });
    }
    let patients: Vec<PatientId> = (0..s.n_cases).map(|i| PatientId::from(format!("sim{i}"))).collect();
    let ci = bootstrap_wald_ci(&soc, &ai, &patients, s.reps, derive_seed(s.seed, "plan/bootstrap"), exec)?;
    InterchangeResult::from_bootstrap("simulated", &ci, s.benchmark, s.margin, s.context_inter_reader)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub scenario: PlanScenario,
    pub simulations: usize,
    /// Fraction of simulations concluding interchangeability.
    pub rejection_rate: f64,
    /// Fraction of Wald intervals containing the true agreement.
    pub coverage: f64,
    /// Fraction of percentile intervals containing the true agreement.
    pub percentile_coverage: f64,
}

/// Repeat [`simulate_plan`] with seeds derived from `(scenario.seed, k)`.
/// Simulations run in parallel; each bootstrap runs sequentially inside.
pub fn simulate_plan_replicates(s: &PlanScenario, simulations: usize, exec: Execution) -> Result<Vec<InterchangeResult>> {
    let results = exec.map_indexed(simulations as u64, |k| {
        let scenario = PlanScenario { seed: derive_seed(s.seed, &format!("plan/sim/{k}")), ..*s };
        simulate_plan(&scenario, Execution::Sequential)
    });
    results.into_iter().collect()
}

pub fn summarize_plan(s: &PlanScenario, simulations: usize, exec: Execution) -> Result<PlanSummary> {
    if simulations == 0 {
        return Err(Error::invalid("at least one simulation is required"));
    }
    let results = simulate_plan_replicates(s, simulations, exec)?;
    let n = simulations as f64;
    let frac = |f: &dyn Fn(&InterchangeResult) -> bool| results.iter().filter(|r| f(r)).count() as f64 / n;
    let truth = s.true_agreement;
    Ok(PlanSummary {
        scenario: *s,
        simulations,
        rejection_rate: frac(&|r| r.decision == crate::interchange::Decision::Interchangeable),
        coverage: frac(&|r| r.ci_low <= truth && truth <= r.ci_high),
        percentile_coverage: frac(&|r| match (r.percentile_low, r.percentile_high) {
            (Some(lo), Some(hi)) => lo <= truth && truth <= hi,
            _ => false,
        }),
    })
}

/// Plot-ready rows for the plan figure: `element,value`.
pub fn plan_figure_csv(r: &InterchangeResult) -> String {
    let mut out = String::from("element,value\n");
    if let Some(p) = r.context_inter_reader {
        out.push_str(&format!("inter_reader_p_adj,{p:.4}\n"));
    }
    out.push_str(&format!("benchmark_q_adj,{:.4}\n", r.benchmark));
    out.push_str(&format!("decision_line,{:.4}\n", r.decision_line));
    out.push_str(&format!("proportion,{:.4}\n", r.proportion));
    out.push_str(&format!("ci_low,{:.4}\n", r.ci_low));
    out.push_str(&format!("ci_high,{:.4}\n", r.ci_high));
    out
}

/// Text rendering of the plan figure on a 50%–100% axis.
pub fn render_plan_markdown(r: &InterchangeResult) -> String {
    const WIDTH: usize = 50;
    let col = |v: f64| (((v - 0.5) / 0.5 * WIDTH as f64).round().clamp(0.0, WIDTH as f64)) as usize;
    let line = |label: &str, v: f64| {
        let mut s = vec![' '; WIDTH + 1];
        s[col(v)] = '|';
        format!("{:<22}{}  {:.1}%\n", label, s.into_iter().collect::<String>(), 100.0 * v)
    };
    let mut out = format!("### {}\n\n```text\n", r.cohort_name);
    if let Some(p) = r.context_inter_reader {
        out.push_str(&line("inter-reader P_adj", p));
    }
    out.push_str(&line("benchmark Q_adj", r.benchmark));
    out.push_str(&line("benchmark - margin", r.decision_line));
    let mut bar = vec![' '; WIDTH + 1];
    let (lo, hi) = (col(r.ci_low), col(r.ci_high));
    for c in bar.iter_mut().take(hi + 1).skip(lo) {
        *c = '-';
    }
    bar[lo] = '[';
    bar[hi] = ']';
    bar[col(r.proportion)] = '*';
    out.push_str(&format!(
        "{:<22}{}  {:.1}% ({:.1}%, {:.1}%)\n```\n\n",
        "AI vs standard of care",
        bar.into_iter().collect::<String>(),
        100.0 * r.proportion,
        100.0 * r.ci_low,
        100.0 * r.ci_high
    ));
    out.push_str(&format!(
        "Lower bound {:.1}% vs decision line {:.1}% (benchmark {:.1}% - margin {:.1}%): {}.\n",
        100.0 * r.ci_low,
        100.0 * r.decision_line,
        100.0 * r.benchmark,
        100.0 * r.margin,
        r.decision
    ));
    out
}

/// PI-RADS cut points on the latent decision scale: a read with value `v`
/// scores `1 + #{c : v >= c}`, so PI-RADS >= 3 iff `v >= 0` and >= 4 iff
/// `v >= 0.75`.
pub const PIRADS_CUTPOINTS: [f64; 4] = [-1.0, 0.0, 0.75, 1.5];

/// Reader panel: case signal `s_i = ±separation/2 + difficulty_sd · z_i`
/// (sign by label), reader offset `tau_r ~ N(0, threshold_sd²)`, read noise
/// `e_ir ~ N(0, read_noise²)`, decision value `v = s_i + tau_r + e_ir`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReaderPanelSpec {
    pub n_cases: usize,
    pub n_readers: usize,
    pub prevalence: f64,
    pub separation: f64,
    /// Per-case difficulty dispersion.
    pub difficulty_sd: f64,
    /// Reader threshold dispersion.
    pub threshold_sd: f64,
    pub read_noise: f64,
}

impl ReaderPanelSpec {
    fn validate(&self) -> Result<()> {
        if self.n_readers < 2 {
            return Err(Error::invalid("a reader panel needs at least 2 readers"));
        }
        if self.n_cases == 0 {
            return Err(Error::EmptyInput("reader panel cases"));
        }
        if !(0.0..=1.0).contains(&self.prevalence) {
            return Err(Error::invalid("prevalence must lie in [0, 1]"));
        }
        for (name, v) in [
            ("difficulty_sd", self.difficulty_sd),
            ("threshold_sd", self.threshold_sd),
            ("read_noise", self.read_noise),
        ] {
            if !(v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be non-negative")));
            }
        }
        Ok(())
    }

    /// Expected pairwise agreement at the PI-RADS >= 3 cut for two distinct
    /// random readers. Given the case signal, their decisions are independent
    /// with `P(positive) = Φ(s / sqrt(threshold_sd² + read_noise²))`.
    pub fn expected_agreement(&self) -> f64 {
        let sigma = (self.threshold_sd.powi(2) + self.read_noise.powi(2)).sqrt();
        let half = self.separation / 2.0;
        let pair = |s: f64| {
            let q = if sigma > 0.0 {
                std_normal().cdf(s / sigma)
            } else if s >= 0.0 {
                1.0
            } else {
                0.0
            };
            q * q + (1.0 - q) * (1.0 - q)
        };
        let class_mean = |centre: f64| {
            if self.difficulty_sd == 0.0 {
                return pair(centre);
            }
            // Trapezoid over z in [-8, 8].
            const STEPS: usize = 4000;
            let h = 16.0 / STEPS as f64;
            let mut acc = 0.0;
            for i in 0..=STEPS {
                let z = -8.0 + i as f64 * h;
                let w = if i == 0 || i == STEPS { 0.5 } else { 1.0 };
                acc += w * (-0.5 * z * z).exp() * pair(centre + self.difficulty_sd * z);
            }
            acc * h / (2.0 * std::f64::consts::PI).sqrt()
        };
        self.prevalence * class_mean(half) + (1.0 - self.prevalence) * class_mean(-half)
    }
}

/// Bisection for the read noise giving `target` expected
/// agreement, holding the other parameters fixed.
pub fn calibrate_read_noise(spec: ReaderPanelSpec, target: f64) -> Result<ReaderPanelSpec> {
    spec.validate()?;
    let at = |noise: f64| ReaderPanelSpec { read_noise: noise, ..spec };
    let (mut lo, mut hi) = (0.0, 100.0);
    let (a_lo, a_hi) = (at(lo).expected_agreement(), at(hi).expected_agreement());
    if !(target <= a_lo && target >= a_hi) {
        return Err(Error::invalid(format!(
            "target agreement {target} outside the reachable range [{a_hi:.4}, {a_lo:.4}]"
        )));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if at(mid).expected_agreement() > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(at(0.5 * (lo + hi)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderPanel {
    pub spec: ReaderPanelSpec,
    pub cases: Vec<CaseRecord>,
    pub readings: Vec<ReaderScore>,
}

fn pirads_from_value(v: f64) -> u8 {
    1 + PIRADS_CUTPOINTS.iter().filter(|&&c| v >= c).count() as u8
}

/// Every reader reads every case. Case `i` draws from stream `(seed', i)`,
/// reader offsets from a separate key.
pub fn simulate_reader_panel(spec: ReaderPanelSpec, seed: u64) -> Result<ReaderPanel> {
    spec.validate()?;
    let mut reader_rng = stream_rng(derive_seed(seed, "panel/readers"), 0);
    let offsets: Vec<f64> = (0..spec.n_readers)
        .map(|_| spec.threshold_sd * Distribution::<f64>::sample(&StandardNormal, &mut reader_rng))
        .collect();
    let case_key = derive_seed(seed, "panel/cases");
    let mut cases = Vec::with_capacity(spec.n_cases);
    let mut readings = Vec::with_capacity(spec.n_cases * spec.n_readers);
    for i in 0..spec.n_cases {
        let mut rng = stream_rng(case_key, i as u64);
        let positive = rng.random::<f64>() < spec.prevalence;
        let z: f64 = StandardNormal.sample(&mut rng);
        let centre = if positive { spec.separation / 2.0 } else { -spec.separation / 2.0 };
        let signal = centre + spec.difficulty_sd * z;
        let case_id = format!("sim-{i:05}");
        let mut first = 0;
        for (r, tau) in offsets.iter().enumerate() {
            let e: f64 = StandardNormal.sample(&mut rng);
            let pirads = pirads_from_value(signal + tau + spec.read_noise * e);
            if r == 0 {
                first = pirads;
            }
            readings.push(ReaderScore {
                case_id: case_id.as_str().into(),
                reader_id: format!("reader-{r:02}").into(),
                pirads,
            });
        }
        let age = 50 + rng.random_range(0..30);
        let psa = (1.5 + 0.6 * Distribution::<f64>::sample(&StandardNormal, &mut rng)).exp();
        cases.push(CaseRecord {
            case_id: case_id.as_str().into(),
            patient_id: format!("pt-{i:05}").into(),
            age,
            psa,
            historical_pirads: first,
            verification: if positive {
                Verification::HistologyVerified { gleason_grade_group: 2 }
            } else {
                Verification::ConsensusNegative
            },
            strata: Strata::default(),
        });
    }
    Ok(ReaderPanel { spec, cases, readings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agreement::inter_reader_agreement;
    use crate::cohort::CutoffRule;
    use crate::roc::auroc_delong;

    #[test]
    fn binormal_mu_examples() {
        assert_eq!(binormal_mu(0.5).unwrap(), 0.0);
        assert!((binormal_mu(0.75).unwrap() - 0.9539).abs() < 1e-4);
        assert!((binormal_mu(0.99).unwrap() - 3.2900).abs() < 1e-4);
        assert!(binormal_mu(1.0).is_err());
        assert!(binormal_mu(0.4).is_err());
    }

    #[test]
    fn simulated_scores_converge_and_reproduce() {
        let spec = BinormalSpec { target_auroc: 0.85, prevalence: 0.3, n_cases: 100_000 };
        let s = simulate_scores(spec, 5).unwrap();
        assert!((auroc(&s.labels, &s.scores).unwrap() - 0.85).abs() < 0.01);
        assert!(s.scores.iter().all(|v| (0.0..=100.0).contains(v)));
        let small = BinormalSpec { n_cases: 500, ..spec };
        assert_eq!(simulate_scores(small, 9).unwrap(), simulate_scores(small, 9).unwrap());
        let none = BinormalSpec { prevalence: 0.0, ..small };
        assert!(matches!(simulate_scores(none, 1), Err(Error::SingleClass(_))));
    }

    #[test]
    fn empirical_auroc_within_four_delong_se() {
        for (k, &target) in TABLE3_AUROCS.iter().enumerate() {
            let spec = BinormalSpec { target_auroc: target, prevalence: 0.3, n_cases: 10_000 };
            let s = simulate_scores(spec, 100 + k as u64).unwrap();
            let est = auroc_delong(&s.labels, &s.scores).unwrap();
            assert!((est.auroc - target).abs() < 4.0 * est.variance.sqrt(), "{target}: {}", est.auroc);
        }
    }

    #[test]
    fn table3_structure_and_monotone_youden_agreement() {
        let cfg = Table3Config { n_cases: 20_000, ..Table3Config::default() };
        let t = simulate_table3(&cfg, Execution::Parallel).unwrap();
        assert_eq!(t.rows.len(), 12);
        let youden: Vec<f64> = t.rows[6..].iter().map(|r| r.agreement).collect();
        assert!(youden.windows(2).all(|w| w[0] <= w[1] + 1e-3), "{youden:?}");
        for r in &t.rows[..6] {
            assert!(r.specificity >= 0.57);
            assert!(r.agreement <= 0.3 + 0.7 * 0.57 + 0.02);
        }
        assert_eq!(t.to_csv().lines().count(), 13);
        let seq = simulate_table3(&cfg, Execution::Sequential).unwrap();
        assert_eq!(t, seq);
    }

    #[test]
    fn plan_examples() {
        let perfect = PlanScenario {
            benchmark: 0.675,
            margin: 0.0,
            true_agreement: 1.0,
            n_cases: 100,
            prevalence: 0.3,
            reps: 200,
            seed: 1,
            context_inter_reader: None,
        };
        let r = simulate_plan(&perfect, Execution::Parallel).unwrap();
        assert_eq!(r.decision, crate::interchange::Decision::Interchangeable);

        let good = PlanScenario { true_agreement: 0.74, margin: 0.05, n_cases: 476, reps: 2000, ..perfect };
        let summary = summarize_plan(&good, 50, Execution::Parallel).unwrap();
        assert!(summary.rejection_rate > 0.9, "{}", summary.rejection_rate);
    }

    #[test]
    fn plan_rendering_shows_decision_line() {
        let r = InterchangeResult::from_interval("demo", 0.74, (0.709, 0.778), 0.675, 0.05, Some(0.727)).unwrap();
        let md = render_plan_markdown(&r);
        assert!(md.contains("62.5%"), "{md}");
        assert!(md.contains("interchangeable"));
        assert!(plan_figure_csv(&r).contains("decision_line,0.6250"));
    }

    fn panel(noise: f64, threshold_sd: f64, difficulty_sd: f64, separation: f64) -> ReaderPanelSpec {
        ReaderPanelSpec {
            n_cases: 600,
            n_readers: 8,
            prevalence: 1.0 / 3.0,
            separation,
            difficulty_sd,
            threshold_sd,
            read_noise: noise,
        }
    }

    #[test]
    fn panel_extremes() {
        let same = simulate_reader_panel(panel(0.0, 0.0, 0.0, 2.0), 3).unwrap();
        let t = inter_reader_agreement(&same.readings, &same.cases, CutoffRule::PiradsGe3, 200, 1, Execution::Parallel)
            .unwrap();
        assert_eq!(t.all.unwrap().mean, 1.0);

        let coins = simulate_reader_panel(panel(1e6, 0.0, 0.0, 0.0), 3).unwrap();
        let t = inter_reader_agreement(&coins.readings, &coins.cases, CutoffRule::PiradsGe3, 500, 1, Execution::Parallel)
            .unwrap();
        assert!((t.all.unwrap().mean - 0.5).abs() < 0.02);
        assert!(simulate_reader_panel(ReaderPanelSpec { n_readers: 1, ..panel(1.0, 0.0, 0.0, 1.0) }, 1).is_err());
    }

    #[test]
    fn calibrated_panel_recovers_target() {
        let spec = calibrate_read_noise(panel(0.0, 0.3, 0.6, 2.0), 0.734).unwrap();
        assert!((spec.expected_agreement() - 0.734).abs() < 1e-9);
        let big = ReaderPanelSpec { n_cases: 2000, ..spec };
        let sim = simulate_reader_panel(big, 11).unwrap();
        let t = inter_reader_agreement(&sim.readings, &sim.cases, CutoffRule::PiradsGe3, 2000, 2, Execution::Parallel)
            .unwrap();
        let all = t.all.unwrap();
        // Reader offsets are drawn once per panel, so allow their extra spread.
        assert!(all.ci_low - 0.02 <= 0.734 && 0.734 <= all.ci_high + 0.02, "{all:?}");
        assert!(calibrate_read_noise(spec, 0.3).is_err());
    }

    #[test]
    fn pirads_mapping() {
        assert_eq!(pirads_from_value(-5.0), 1);
        assert_eq!(pirads_from_value(-0.5), 2);
        assert_eq!(pirads_from_value(0.0), 3);
        assert_eq!(pirads_from_value(1.0), 4);
        assert_eq!(pirads_from_value(9.0), 5);
    }
}
