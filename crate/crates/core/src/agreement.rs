//! Inter-reader agreement, reader-vs-standard-of-care agreement and
//! prevalence adjustment.
//!
//! Per case `i` with `n_i` binary reader decisions:
//!
//! - pairwise agreement `P_i = A_i / N_i`, `N_i = n_i (n_i - 1) / 2`, where
//!   `A_i` counts reader pairs making the same decision;
//! - standard-of-care agreement `P_i = A_i / n_i`, where `A_i` counts readers
//!   matching the reference label.
//!
//! The cohort estimate is the mean of `B` bootstrap means obtained by
//! resampling the list of `P_i` (cases, not readers) with replacement, with a
//! 95% percentile interval. Cases read by fewer than two readers have no
//! pairwise agreement and are skipped for inter-reader agreement only.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::{CaseId, CaseRecord, CutoffRule, ReaderScore};
use crate::error::{Error, Result};
use crate::exec::{derive_seed, stream_rng, Execution};

pub const DEFAULT_BOOTSTRAP_REPS: u64 = 1_000_000;

/// Bootstrapped mean agreement with its 95% percentile interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementEstimate {
    /// Mean of the bootstrap means.
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Plain mean of the per-case proportions.
    pub sample_mean: f64,
    pub replications: u64,
    pub n_cases: usize,
}

/// `adjusted = p * pos_estimate + (1 - p) * neg_estimate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceAdjusted {
    pub p: f64,
    pub pos_estimate: f64,
    pub neg_estimate: f64,
    pub adjusted: f64,
}

/// Fraction of concordant reader pairs. `None` below two readers.
pub fn pairwise_case_agreement(decisions: &[bool]) -> Option<f64> {
    let n = decisions.len() as u64;
    if n < 2 {
        return None;
    }
    let pos = decisions.iter().filter(|&&d| d).count() as u64;
    let neg = n - pos;
    let concordant = pos * pos.saturating_sub(1) / 2 + neg * neg.saturating_sub(1) / 2;
    Some(concordant as f64 / (n * (n - 1) / 2) as f64)
}

/// Fraction of readers whose decision equals the reference label. `None` for
/// an empty panel.
pub fn soc_case_agreement(decisions: &[bool], soc_label: bool) -> Option<f64> {
    if decisions.is_empty() {
        return None;
    }
    let hits = decisions.iter().filter(|&&d| d == soc_label).count();
    Some(hits as f64 / decisions.len() as f64)
}

/// Percentile of already sorted data, linear interpolation between order
/// statistics (`h = (n - 1) q`).
pub(crate) fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 || sorted[lo] == sorted[hi] {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Case-resampling bootstrap of the mean of `per_case` proportions.
///
/// Replicate `b` draws from the RNG stream `(seed, b)`.
pub fn mean_agreement_bootstrap(
    per_case: &[f64],
    reps: u64,
    seed: u64,
    exec: Execution,
) -> Result<AgreementEstimate> {
    if per_case.is_empty() {
        return Err(Error::EmptyInput("per-case agreement proportions"));
    }
    if reps == 0 {
        return Err(Error::invalid("bootstrap replications must be >= 1"));
    }
    if let Some(v) = per_case.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("proportion out of [0, 1]: {v}")));
    }
    let m = per_case.len();
    let mut means = exec.map_indexed(reps, |b| {
        let mut rng = stream_rng(seed, b);
        let mut sum = 0.0;
        for _ in 0..m {
            sum += per_case[rng.random_range(0..m)];
        }
        sum / m as f64
    });
    let mean = means.iter().sum::<f64>() / reps as f64;
    means.sort_unstable_by(f64::total_cmp);
    Ok(AgreementEstimate {
        mean,
        ci_low: percentile_sorted(&means, 0.025),
        ci_high: percentile_sorted(&means, 0.975),
        sample_mean: per_case.iter().sum::<f64>() / m as f64,
        replications: reps,
        n_cases: m,
    })
}

pub fn prevalence_adjust(p: f64, pos_estimate: f64, neg_estimate: f64) -> Result<PrevalenceAdjusted> {
    for (name, v) in [("prevalence", p), ("pos_estimate", pos_estimate), ("neg_estimate", neg_estimate)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("{name} must lie in [0, 1], got {v}")));
        }
    }
    Ok(PrevalenceAdjusted {
        p,
        pos_estimate,
        neg_estimate,
        adjusted: p * pos_estimate + (1.0 - p) * neg_estimate,
    })
}

/// Binary reader decisions grouped by case (cases in id order).
pub fn decisions_by_case(readings: &[ReaderScore], cutoff: CutoffRule) -> BTreeMap<CaseId, Vec<bool>> {
    let mut out: BTreeMap<CaseId, Vec<bool>> = BTreeMap::new();
    for r in readings {
        out.entry(r.case_id.clone()).or_default().push(cutoff.binarize(r.pirads));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementKind {
    InterReader,
    StandardOfCare,
}

/// Agreement over all cases and within negative / positive cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementTable {
    pub kind: AgreementKind,
    pub cutoff: CutoffRule,
    pub all: Option<AgreementEstimate>,
    pub negative: Option<AgreementEstimate>,
    pub positive: Option<AgreementEstimate>,
    /// Cases skipped (too few readers, or no label where one is needed).
    pub excluded_cases: usize,
    pub warnings: Vec<String>,
}

impl AgreementTable {
    /// Prevalence-adjusted estimate from the positive and negative splits.
    pub fn adjust(&self, p: f64) -> Result<PrevalenceAdjusted> {
        match (&self.positive, &self.negative) {
            (Some(pos), Some(neg)) => prevalence_adjust(p, pos.mean, neg.mean),
            _ => Err(Error::Undefined(
                "prevalence adjustment needs both positive and negative case splits".into(),
            )),
        }
    }
}

fn split_estimates(
    rows: &[(Option<bool>, f64)],
    reps: u64,
    seed: u64,
    tag: &str,
    exec: Execution,
) -> Result<[Option<AgreementEstimate>; 3]> {
    let pick = |f: &dyn Fn(Option<bool>) -> bool| -> Vec<f64> {
        rows.iter().filter(|(l, _)| f(*l)).map(|(_, v)| *v).collect()
    };
    let all = pick(&|_| true);
    let neg = pick(&|l| l == Some(false));
    let pos = pick(&|l| l == Some(true));
    let run = |values: &[f64], split: &str| -> Result<Option<AgreementEstimate>> {
        if values.is_empty() {
            return Ok(None);
        }
        let key = derive_seed(seed, &format!("{tag}/{split}"));
        mean_agreement_bootstrap(values, reps, key, exec).map(Some)
    };
    Ok([run(&all, "all")?, run(&neg, "negative")?, run(&pos, "positive")?])
}

fn labels_by_case(cases: &[CaseRecord]) -> BTreeMap<&CaseId, Option<bool>> {
    cases.iter().map(|c| (&c.case_id, c.label())).collect()
}

/// Inter-reader agreement over a reading set. `cases` supplies the labels for
/// the positive / negative splits; unlabeled cases only enter the "all" row.
pub fn inter_reader_agreement(
    readings: &[ReaderScore],
    cases: &[CaseRecord],
    cutoff: CutoffRule,
    reps: u64,
    seed: u64,
    exec: Execution,
) -> Result<AgreementTable> {
    let labels = labels_by_case(cases);
    let mut rows = Vec::new();
    let mut excluded = 0;
    for (case_id, decisions) in decisions_by_case(readings, cutoff) {
        match pairwise_case_agreement(&decisions) {
            Some(p) => rows.push((labels.get(&case_id).copied().flatten(), p)),
            None => excluded += 1,
        }
    }
    let mut warnings = Vec::new();
    if excluded > 0 {
        warnings.push(format!("{excluded} case(s) with fewer than 2 readers excluded"));
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("cases with at least two readers"));
    }
    let [all, negative, positive] = split_estimates(&rows, reps, seed, "inter-reader", exec)?;
    Ok(AgreementTable {
        kind: AgreementKind::InterReader,
        cutoff,
        all,
        negative,
        positive,
        excluded_cases: excluded,
        warnings,
    })
}

/// Agreement of individual readers with the reference label. Cases without a
/// label are excluded.
pub fn soc_agreement(
    readings: &[ReaderScore],
    cases: &[CaseRecord],
    cutoff: CutoffRule,
    reps: u64,
    seed: u64,
    exec: Execution,
) -> Result<AgreementTable> {
    let labels = labels_by_case(cases);
    let mut rows = Vec::new();
    let mut excluded = 0;
    for (case_id, decisions) in decisions_by_case(readings, cutoff) {
        match labels.get(&case_id).copied().flatten() {
            Some(label) => {
                let p = soc_case_agreement(&decisions, label).expect("non-empty panel");
                rows.push((Some(label), p));
            }
            None => excluded += 1,
        }
    }
    let mut warnings = Vec::new();
    if excluded > 0 {
        warnings.push(format!("{excluded} case(s) without a reference label excluded"));
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("labeled cases with readings"));
    }
    let [all, negative, positive] = split_estimates(&rows, reps, seed, "standard-of-care", exec)?;
    Ok(AgreementTable {
        kind: AgreementKind::StandardOfCare,
        cutoff,
        all,
        negative,
        positive,
        excluded_cases: excluded,
        warnings,
    })
}
