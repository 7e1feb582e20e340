//! Primary endpoint: agreement of binarized AI assessments with the standard
//! of care, its patient-level bootstrap Wald interval, the margin decision and
//! multiplicity control across cohorts.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::agreement::percentile_sorted;
use crate::cohort::PatientId;
use crate::error::{Error, Result};
use crate::exec::{stream_rng, Execution};

pub const DEFAULT_MARGIN: f64 = 0.05;
/// Two-sided 95% normal critical value, fixed rather than recomputed.
pub const Z_95: f64 = 1.96;
/// Slack for the strict `ci_low > benchmark - margin` comparison, so that a
/// bound equal to the decision line up to rounding never counts as exceeding it.
const DECISION_EPS: f64 = 1e-12;

/// Fraction of positions where the two assessments agree.
pub fn agreement_proportion(soc_labels: &[bool], ai_binary: &[bool]) -> Result<f64> {
    if soc_labels.len() != ai_binary.len() {
        return Err(Error::LengthMismatch { left: soc_labels.len(), right: ai_binary.len() });
    }
    if soc_labels.is_empty() {
        return Err(Error::EmptyInput("agreement proportion"));
    }
    let matches = soc_labels.iter().zip(ai_binary).filter(|(a, b)| a == b).count();
    Ok(matches as f64 / soc_labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub proportion: f64,
    /// Standard deviation of the bootstrap distribution.
    pub se_boot: f64,
    pub wald_low: f64,
    pub wald_high: f64,
    pub percentile_low: f64,
    pub percentile_high: f64,
    pub replications: u64,
    pub n_cases: usize,
    pub n_patients: usize,
}

/// Per-patient (matches, cases) in patient-id order.
fn patient_counts(soc: &[bool], ai: &[bool], patients: &[PatientId]) -> Vec<(u32, u32)> {
    let mut by: BTreeMap<&PatientId, (u32, u32)> = BTreeMap::new();
    for ((s, a), p) in soc.iter().zip(ai).zip(patients) {
        let e = by.entry(p).or_default();
        e.0 += u32::from(s == a);
        e.1 += 1;
    }
    by.into_values().collect()
}

/// Patient-level n-out-of-n bootstrap of the agreement proportion.
///
/// Replicate `b` resamples patients (with all their cases) using RNG stream
/// `(seed, b)`. The Wald interval is `p ± 1.96 · SD_boot`; the percentile
/// interval is reported alongside it.
pub fn bootstrap_wald_ci(
    soc_labels: &[bool],
    ai_binary: &[bool],
    patient_ids: &[PatientId],
    reps: u64,
    seed: u64,
    exec: Execution,
) -> Result<BootstrapCi> {
    let proportion = agreement_proportion(soc_labels, ai_binary)?;
    if patient_ids.len() != soc_labels.len() {
        return Err(Error::LengthMismatch { left: soc_labels.len(), right: patient_ids.len() });
    }
    if reps < 2 {
        return Err(Error::invalid("bootstrap needs at least 2 replications"));
    }
    let counts = patient_counts(soc_labels, ai_binary, patient_ids);
    let k = counts.len();
    let mut reps_out = exec.map_indexed(reps, |b| {
        let mut rng = stream_rng(seed, b);
        let (mut m, mut n) = (0u64, 0u64);
        for _ in 0..k {
            let (pm, pn) = counts[rng.random_range(0..k)];
            m += u64::from(pm);
            n += u64::from(pn);
        }
        m as f64 / n as f64
    });
    let mean = reps_out.iter().sum::<f64>() / reps as f64;
    let var = reps_out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let se = var.sqrt();
    reps_out.sort_by(f64::total_cmp);
    Ok(BootstrapCi {
        proportion,
        se_boot: se,
        wald_low: proportion - Z_95 * se,
        wald_high: proportion + Z_95 * se,
        percentile_low: percentile_sorted(&reps_out, 0.025),
        percentile_high: percentile_sorted(&reps_out, 0.975),
        replications: reps,
        n_cases: soc_labels.len(),
        n_patients: k,
    })
}

/// One-sided p-value for `H0: agreement <= threshold`, `Φ(-(p - threshold) / se)`.
/// With `se = 0` the answer is 0 when `p` exceeds the threshold and 1 otherwise.
pub fn one_sided_p_value(proportion: f64, se: f64, threshold: f64) -> f64 {
    if se <= 0.0 {
        return if proportion > threshold { 0.0 } else { 1.0 };
    }
    let z = (proportion - threshold) / se;
    Normal::standard().cdf(-z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Interchangeable,
    NotDemonstrated,
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Decision::Interchangeable => "interchangeable",
            Decision::NotDemonstrated => "not demonstrated",
        })
    }
}

/// `Interchangeable` iff `ci_low > benchmark - margin` (strictly).
pub fn interchange_decision(ci_low: f64, benchmark: f64, margin: f64) -> Result<Decision> {
    if !(margin >= 0.0) {
        return Err(Error::invalid(format!("margin must be non-negative, got {margin}")));
    }
    Ok(if ci_low - (benchmark - margin) > DECISION_EPS {
        Decision::Interchangeable
    } else {
        Decision::NotDemonstrated
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterchangeResult {
    pub cohort_name: String,
    pub proportion: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub percentile_low: Option<f64>,
    pub percentile_high: Option<f64>,
    pub se_boot: Option<f64>,
    /// Q_adj, the prevalence-adjusted reader-vs-standard-of-care agreement.
    pub benchmark: f64,
    pub margin: f64,
    /// `benchmark - margin`.
    pub decision_line: f64,
    pub decision: Decision,
    pub p_value: Option<f64>,
    /// P_adj, the prevalence-adjusted inter-reader agreement.
    pub context_inter_reader: Option<f64>,
    pub n_cases: Option<usize>,
    pub n_patients: Option<usize>,
    pub replications: Option<u64>,
}

impl InterchangeResult {
    /// Result from a known interval, without bootstrap details.
    pub fn from_interval(
        cohort_name: &str,
        proportion: f64,
        ci: (f64, f64),
        benchmark: f64,
        margin: f64,
        context_inter_reader: Option<f64>,
    ) -> Result<Self> {
        Ok(InterchangeResult {
            cohort_name: cohort_name.to_string(),
            proportion,
            ci_low: ci.0,
            ci_high: ci.1,
            percentile_low: None,
            percentile_high: None,
            se_boot: None,
            benchmark,
            margin,
            decision_line: benchmark - margin,
            decision: interchange_decision(ci.0, benchmark, margin)?,
            p_value: None,
            context_inter_reader,
            n_cases: None,
            n_patients: None,
            replications: None,
        })
    }

    pub fn from_bootstrap(
        cohort_name: &str,
        ci: &BootstrapCi,
        benchmark: f64,
        margin: f64,
        context_inter_reader: Option<f64>,
    ) -> Result<Self> {
        let mut r = Self::from_interval(
            cohort_name,
            ci.proportion,
            (ci.wald_low, ci.wald_high),
            benchmark,
            margin,
            context_inter_reader,
        )?;
        r.percentile_low = Some(ci.percentile_low);
        r.percentile_high = Some(ci.percentile_high);
        r.se_boot = Some(ci.se_boot);
        r.p_value = Some(one_sided_p_value(ci.proportion, ci.se_boot, benchmark - margin));
        r.n_cases = Some(ci.n_cases);
        r.n_patients = Some(ci.n_patients);
        r.replications = Some(ci.replications);
        Ok(r)
    }
}

fn check_p_values(p_values: &[f64], alpha: f64) -> Result<()> {
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("p-value {p} outside [0, 1]")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Holm step-down rejections, in input order.
pub fn holm_bonferroni(p_values: &[f64], alpha: f64) -> Result<Vec<bool>> {
    check_p_values(p_values, alpha)?;
    let k = p_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut reject = vec![false; k];
    for (j, &i) in order.iter().enumerate() {
        if p_values[i] <= alpha / (k - j) as f64 {
            reject[i] = true;
        } else {
            break;
        }
    }
    Ok(reject)
}

/// Holm-adjusted p-values, in input order.
pub fn holm_adjusted(p_values: &[f64]) -> Result<Vec<f64>> {
    check_p_values(p_values, 0.05)?;
    let k = p_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut adjusted = vec![0.0; k];
    let mut running: f64 = 0.0;
    for (j, &i) in order.iter().enumerate() {
        running = running.max(((k - j) as f64 * p_values[i]).min(1.0));
        adjusted[i] = running;
    }
    Ok(adjusted)
}

/// Single-step Bonferroni rejections.
pub fn bonferroni(p_values: &[f64], alpha: f64) -> Result<Vec<bool>> {
    check_p_values(p_values, alpha)?;
    let k = p_values.len() as f64;
    Ok(p_values.iter().map(|&p| p <= alpha / k).collect())
}
