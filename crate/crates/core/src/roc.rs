//! ROC analysis and binary classification metrics.
//!
//! A case is predicted positive when `score >= threshold`. AUROC is the
//! Mann–Whitney statistic (ties count one half), computed from midranks in
//! `O(n log n)`; its DeLong variance comes from the same ranks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cohort::{AgeBand, CaseRecord};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::mi::{pooled_auroc_mi, ImputationMode, RiskModel};

fn check_inputs(labels: &[bool], scores: &[f64]) -> Result<(usize, usize)> {
    if labels.len() != scores.len() {
        return Err(Error::LengthMismatch { left: labels.len(), right: scores.len() });
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::invalid(format!("non-finite score {s}")));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass(format!(
            "AUROC needs both classes ({n_pos} positive, {n_neg} negative)"
        )));
    }
    Ok((n_pos, n_neg))
}

/// 1-based midranks of `values` (ties share the average rank).
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_unstable_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share rank (i + 1 + j) / 2
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

/// AUROC with its DeLong variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AurocEstimate {
    pub auroc: f64,
    pub variance: f64,
    pub n_positive: usize,
    pub n_negative: usize,
}

impl AurocEstimate {
    /// Normal-approximation 95% interval from the DeLong variance.
    pub fn ci95(&self) -> (f64, f64) {
        let z = Normal::standard().inverse_cdf(0.975);
        let half = z * self.variance.sqrt();
        ((self.auroc - half).max(0.0), (self.auroc + half).min(1.0))
    }
}

pub fn auroc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    let (n_pos, n_neg) = check_inputs(labels, scores)?;
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// AUROC plus the DeLong structural-components variance
/// `S10 / n_pos + S01 / n_neg`.
pub fn auroc_delong(labels: &[bool], scores: &[f64]) -> Result<AurocEstimate> {
    let (n_pos, n_neg) = check_inputs(labels, scores)?;
    let all = midranks(scores);
    let pos_scores: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(s, _)| *s).collect();
    let neg_scores: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(s, _)| *s).collect();
    let pos_ranks = midranks(&pos_scores);
    let neg_ranks = midranks(&neg_scores);
    let all_pos: Vec<f64> = all.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| *r).collect();
    let all_neg: Vec<f64> = all.iter().zip(labels).filter(|(_, &l)| !l).map(|(r, _)| *r).collect();

    // V10: per positive, fraction of negatives ranked below (ties 1/2).
    let v10: Vec<f64> = all_pos.iter().zip(&pos_ranks).map(|(a, p)| (a - p) / n_neg as f64).collect();
    // V01: per negative, fraction of positives ranked above (ties 1/2).
    let v01: Vec<f64> = all_neg.iter().zip(&neg_ranks).map(|(a, n)| 1.0 - (a - n) / n_pos as f64).collect();
    let auc = v10.iter().sum::<f64>() / n_pos as f64;
    let var = |v: &[f64]| -> f64 {
        if v.len() < 2 {
            return 0.0;
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    Ok(AurocEstimate {
        auroc: auc,
        variance: var(&v10) / n_pos as f64 + var(&v01) / n_neg as f64,
        n_positive: n_pos,
        n_negative: n_neg,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub true_positives: u64,
    pub true_negatives: u64,
}

/// Empirical ROC curve, thresholds ascending. The first point (lowest score)
/// calls every case positive; the last (just above the highest score) calls
/// every case negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub n_positive: u64,
    pub n_negative: u64,
}

impl RocCurve {
    pub fn from_scores(labels: &[bool], scores: &[f64]) -> Result<Self> {
        let (n_pos, n_neg) = check_inputs(labels, scores)?;
        let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let (n_pos, n_neg) = (n_pos as u64, n_neg as u64);
        let mut points = Vec::new();
        // Sweep upwards: at threshold t, cases strictly below t are negative calls.
        let (mut pos_below, mut neg_below) = (0u64, 0u64);
        let mut i = 0;
        while i < pairs.len() {
            let t = pairs[i].0;
            points.push(point(t, n_pos - pos_below, neg_below, n_pos, n_neg));
            while i < pairs.len() && pairs[i].0 == t {
                if pairs[i].1 {
                    pos_below += 1;
                } else {
                    neg_below += 1;
                }
                i += 1;
            }
        }
        let top = pairs.last().expect("non-empty").0.next_up();
        points.push(point(top, 0, n_neg, n_pos, n_neg));
        Ok(RocCurve { points, n_positive: n_pos, n_negative: n_neg })
    }

    /// Plot-ready CSV: `threshold,sensitivity,specificity`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,sensitivity,specificity\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.threshold, p.sensitivity, p.specificity));
        }
        out
    }
}

fn point(threshold: f64, tp: u64, tn: u64, n_pos: u64, n_neg: u64) -> RocPoint {
    RocPoint {
        threshold,
        sensitivity: tp as f64 / n_pos as f64,
        specificity: tn as f64 / n_neg as f64,
        true_positives: tp,
        true_negatives: tn,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum OperatingRule {
    Youden,
    MatchedSpecificity { target: f64 },
    MatchedSensitivity { target: f64 },
    Fixed { threshold: f64 },
}

impl std::fmt::Display for OperatingRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OperatingRule::Youden => write!(f, "Youden"),
            OperatingRule::MatchedSpecificity { target } => write!(f, "matched specificity {target}"),
            OperatingRule::MatchedSensitivity { target } => write!(f, "matched sensitivity {target}"),
            OperatingRule::Fixed { threshold } => write!(f, "fixed threshold {threshold}"),
        }
    }
}

impl std::str::FromStr for OperatingRule {
    type Err = Error;

    /// `youden`, `spec:0.577`, `sens:0.9` or `fixed:42.5`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "youden" {
            return Ok(OperatingRule::Youden);
        }
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("unknown operating rule `{s}`")))?;
        let value: f64 = value
            .parse()
            .map_err(|_| Error::invalid(format!("bad number in operating rule `{s}`")))?;
        match kind {
            "spec" | "specificity" => Ok(OperatingRule::MatchedSpecificity { target: value }),
            "sens" | "sensitivity" => Ok(OperatingRule::MatchedSensitivity { target: value }),
            "fixed" | "threshold" => Ok(OperatingRule::Fixed { threshold: value }),
            _ => Err(Error::invalid(format!("unknown operating rule `{s}`"))),
        }
    }
}

/// Threshold with the sensitivity / specificity realized on the calibration data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub rule: OperatingRule,
}

impl OperatingPoint {
    pub fn youden_index(&self) -> f64 {
        self.sensitivity + self.specificity - 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YoudenTieBreak {
    /// Fewer false positives.
    #[default]
    HigherSpecificity,
    HigherSensitivity,
}

/// Threshold maximizing `J = sensitivity + specificity - 1`.
pub fn youden_point(curve: &RocCurve, tie: YoudenTieBreak) -> OperatingPoint {
    // J * n_pos * n_neg = tp * n_neg + tn * n_pos - n_pos * n_neg; compare exactly.
    let scaled = |p: &RocPoint| u128::from(p.true_positives) * u128::from(curve.n_negative)
        + u128::from(p.true_negatives) * u128::from(curve.n_positive);
    let best = curve.points.iter().map(scaled).max().expect("non-empty curve");
    let mut ties = curve.points.iter().filter(|p| scaled(p) == best);
    // points are ascending in threshold, so specificity is non-decreasing
    let chosen = match tie {
        YoudenTieBreak::HigherSpecificity => ties.next_back(),
        YoudenTieBreak::HigherSensitivity => ties.next(),
    }
    .expect("at least one maximizer");
    OperatingPoint {
        threshold: chosen.threshold,
        sensitivity: chosen.sensitivity,
        specificity: chosen.specificity,
        rule: OperatingRule::Youden,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchAxis {
    Sensitivity,
    Specificity,
}

/// Operating point meeting `target` on `axis` as an inequality on the
/// realized values: the smallest threshold with specificity >= target, or the
/// largest threshold with sensitivity >= target.
pub fn matched_point(curve: &RocCurve, target: f64, axis: MatchAxis) -> Result<OperatingPoint> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::invalid(format!("match target must lie in (0, 1), got {target}")));
    }
    // Both extremes are always on the curve (spec = 1 at the top, sens = 1
    // at the bottom), so a qualifying point exists for any target in (0, 1).
    let (chosen, rule) = match axis {
        MatchAxis::Specificity => (
            curve.points.iter().find(|p| p.specificity >= target),
            OperatingRule::MatchedSpecificity { target },
        ),
        MatchAxis::Sensitivity => (
            curve.points.iter().rev().find(|p| p.sensitivity >= target),
            OperatingRule::MatchedSensitivity { target },
        ),
    };
    let p = chosen.expect("curve endpoints satisfy every target");
    Ok(OperatingPoint { threshold: p.threshold, sensitivity: p.sensitivity, specificity: p.specificity, rule })
}

/// Resolve an [`OperatingRule`] on calibration data.
pub fn select_operating_point(labels: &[bool], scores: &[f64], rule: OperatingRule) -> Result<OperatingPoint> {
    match rule {
        OperatingRule::Fixed { threshold } => {
            let preds = binarize(scores, threshold);
            let m = binary_metrics(labels, &preds)?;
            Ok(OperatingPoint {
                threshold,
                sensitivity: m.sensitivity.unwrap_or(f64::NAN),
                specificity: m.specificity.unwrap_or(f64::NAN),
                rule,
            })
        }
        _ => {
            let curve = RocCurve::from_scores(labels, scores)?;
            match rule {
                OperatingRule::Youden => Ok(youden_point(&curve, YoudenTieBreak::default())),
                OperatingRule::MatchedSpecificity { target } => matched_point(&curve, target, MatchAxis::Specificity),
                OperatingRule::MatchedSensitivity { target } => matched_point(&curve, target, MatchAxis::Sensitivity),
                OperatingRule::Fixed { .. } => unreachable!(),
            }
        }
    }
}

pub fn binarize(scores: &[f64], threshold: f64) -> Vec<bool> {
    scores.iter().map(|&s| s >= threshold).collect()
}

/// Confusion counts and the derived rates. A rate is `None` when its
/// denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    /// Fraction of cases where prediction equals reference.
    pub agreement: f64,
    /// `confusion[reference][prediction]`, index 0 = negative.
    pub confusion: [[u64; 2]; 2],
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn binary_metrics(reference: &[bool], predictions: &[bool]) -> Result<BinaryMetrics> {
    if reference.len() != predictions.len() {
        return Err(Error::LengthMismatch { left: reference.len(), right: predictions.len() });
    }
    let mut c = [[0u64; 2]; 2];
    for (&r, &p) in reference.iter().zip(predictions) {
        c[usize::from(r)][usize::from(p)] += 1;
    }
    let (tn, fp, fn_, tp) = (c[0][0], c[0][1], c[1][0], c[1][1]);
    let n = reference.len() as u64;
    Ok(BinaryMetrics {
        tp,
        fp,
        tn,
        fn_,
        sensitivity: ratio(tp, tp + fn_),
        specificity: ratio(tn, tn + fp),
        ppv: ratio(tp, tp + fp),
        npv: ratio(tn, tn + fn_),
        agreement: ratio(tp + tn, n).unwrap_or(f64::NAN),
        confusion: c,
    })
}

/// Krippendorff's alpha for two raters, nominal binary data, no missing
/// values: `1 - D_o / D_e` with `D_e = 2 n_0 n_1 / (n (n - 1))` over the
/// `n = 2N` pooled values.
pub fn krippendorff_alpha(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    let units = a.len();
    if units < 2 {
        return Err(Error::invalid("Krippendorff's alpha needs at least 2 units"));
    }
    let disagreements = a.iter().zip(b).filter(|(x, y)| x != y).count() as f64;
    let n = 2.0 * units as f64;
    let n1 = (a.iter().filter(|&&x| x).count() + b.iter().filter(|&&x| x).count()) as f64;
    let n0 = n - n1;
    let expected = 2.0 * n0 * n1 / (n * (n - 1.0));
    if expected == 0.0 {
        return Err(Error::Undefined("Krippendorff's alpha: all values in one category".into()));
    }
    let observed = disagreements / units as f64;
    Ok(1.0 - observed / expected)
}

/// A count pair, kept as counts so a zero denominator stays representable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRatio {
    pub numerator: u64,
    pub denominator: u64,
}

impl CountRatio {
    pub fn value(&self) -> Option<f64> {
        ratio(self.numerator, self.denominator)
    }
}

impl std::fmt::Display for CountRatio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.numerator, self.denominator)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenefitHarm {
    pub true_positives: u64,
    /// Positive calls on cases with grade group 1 histology.
    pub gg1_false_positives: u64,
    pub negative_predictions: u64,
    pub true_negatives: u64,
    /// GG>=2 detections : GG1 detections.
    pub detections_to_gg1: CountRatio,
    /// GG>=2 detections : (GG1 detections + negative predictions).
    pub detections_to_gg1_and_negatives: CountRatio,
    /// Biopsies avoided (true negatives) : GG1 detections.
    pub avoided_to_gg1: CountRatio,
}

pub fn benefit_harm_ratios(labels: &[bool], grade_groups: &[Option<u8>], predictions: &[bool]) -> Result<BenefitHarm> {
    if labels.len() != predictions.len() {
        return Err(Error::LengthMismatch { left: labels.len(), right: predictions.len() });
    }
    if grade_groups.len() != predictions.len() {
        return Err(Error::LengthMismatch { left: grade_groups.len(), right: predictions.len() });
    }
    let (mut tp, mut gg1_fp, mut negatives, mut tn) = (0, 0, 0, 0);
    for ((&label, &gg), &pred) in labels.iter().zip(grade_groups).zip(predictions) {
        match (pred, label) {
            (true, true) => tp += 1,
            (true, false) if gg == Some(1) => gg1_fp += 1,
            (true, false) => {}
            (false, l) => {
                negatives += 1;
                if !l {
                    tn += 1;
                }
            }
        }
    }
    Ok(BenefitHarm {
        true_positives: tp,
        gg1_false_positives: gg1_fp,
        negative_predictions: negatives,
        true_negatives: tn,
        detections_to_gg1: CountRatio { numerator: tp, denominator: gg1_fp },
        detections_to_gg1_and_negatives: CountRatio { numerator: tp, denominator: gg1_fp + negatives },
        avoided_to_gg1: CountRatio { numerator: tn, denominator: gg1_fp },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratifier {
    AgeBand,
    PiQual,
    Ethnicity,
}

impl std::str::FromStr for Stratifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "age" | "age-band" => Ok(Stratifier::AgeBand),
            "pi-qual" | "piqual" => Ok(Stratifier::PiQual),
            "ethnicity" => Ok(Stratifier::Ethnicity),
            other => Err(Error::invalid(format!("unknown stratifier `{other}`"))),
        }
    }
}

impl Stratifier {
    pub const ALL: [Stratifier; 3] = [Stratifier::AgeBand, Stratifier::PiQual, Stratifier::Ethnicity];

    /// Stratum key; `None` for missing labels. Keys sort in reporting order.
    fn key(self, case: &CaseRecord) -> Option<(u8, String)> {
        match self {
            Stratifier::AgeBand => {
                let band = case.age_band();
                let idx = AgeBand::ALL.iter().position(|b| *b == band).unwrap_or(0) as u8;
                Some((idx, band.label().to_string()))
            }
            Stratifier::PiQual => case.strata.pi_qual.map(|q| (q, format!("PI-QUAL {q}"))),
            Stratifier::Ethnicity => case.strata.ethnicity.clone().map(|e| (0, e)),
        }
    }
}

/// How AUROC is obtained within a stratum.
#[derive(Debug, Clone, Copy)]
pub enum AurocMethod<'a> {
    /// Labeled cases only; unverified cases are dropped.
    CompleteCase,
    /// Verification-bias adjusted when the stratum has unverified cases.
    MultipleImputation { model: &'a RiskModel, imputations: usize, seed: u64, mode: ImputationMode },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumAuroc {
    pub stratum: String,
    pub n_cases: usize,
    pub n_positive: usize,
    pub n_negative: usize,
    pub n_unverified: usize,
    pub auroc: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub adjusted_for_verification_bias: bool,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedAuroc {
    pub stratifier: Stratifier,
    pub strata: Vec<StratumAuroc>,
    /// Cases without a stratum label ("unknown"), excluded.
    pub excluded_unknown: usize,
    /// Cases without an AI prediction, excluded.
    pub excluded_unscored: usize,
}

/// AUROC per stratum. `scores` is aligned with `cases`.
pub fn stratified_auroc(
    cases: &[CaseRecord],
    scores: &[Option<f64>],
    stratifier: Stratifier,
    method: AurocMethod<'_>,
    exec: Execution,
) -> Result<StratifiedAuroc> {
    if cases.len() != scores.len() {
        return Err(Error::LengthMismatch { left: cases.len(), right: scores.len() });
    }
    let mut groups: BTreeMap<(u8, String), (Vec<CaseRecord>, Vec<f64>)> = BTreeMap::new();
    let (mut unknown, mut unscored) = (0, 0);
    for (case, score) in cases.iter().zip(scores) {
        let Some(score) = score else {
            unscored += 1;
            continue;
        };
        match stratifier.key(case) {
            Some(key) => {
                let g = groups.entry(key).or_default();
                g.0.push(case.clone());
                g.1.push(*score);
            }
            None => unknown += 1,
        }
    }
    let strata = groups
        .into_iter()
        .map(|((_, name), (group, group_scores))| stratum_auroc(name, &group, &group_scores, method, exec))
        .collect();
    Ok(StratifiedAuroc { stratifier, strata, excluded_unknown: unknown, excluded_unscored: unscored })
}

fn stratum_auroc(
    name: String,
    cases: &[CaseRecord],
    scores: &[f64],
    method: AurocMethod<'_>,
    exec: Execution,
) -> StratumAuroc {
    let n_positive = cases.iter().filter(|c| c.label() == Some(true)).count();
    let n_unverified = cases.iter().filter(|c| c.is_unverified()).count();
    let mut out = StratumAuroc {
        stratum: name,
        n_cases: cases.len(),
        n_positive,
        n_negative: cases.len() - n_positive - n_unverified,
        n_unverified,
        auroc: None,
        ci_low: None,
        ci_high: None,
        adjusted_for_verification_bias: false,
        skipped: None,
    };
    let result = match method {
        AurocMethod::MultipleImputation { model, imputations, seed, mode } if n_unverified > 0 => {
            out.adjusted_for_verification_bias = true;
            pooled_auroc_mi(cases, scores, model, imputations, seed, mode, exec)
                .map(|p| (p.q_pooled, p.ci_low, p.ci_high))
        }
        _ => {
            let (labels, s): (Vec<bool>, Vec<f64>) = cases
                .iter()
                .zip(scores)
                .filter_map(|(c, &s)| c.label().map(|l| (l, s)))
                .unzip();
            auroc_delong(&labels, &s).map(|e| {
                let (lo, hi) = e.ci95();
                (e.auroc, lo, hi)
            })
        }
    };
    match result {
        Ok((a, lo, hi)) => {
            out.auroc = Some(a);
            out.ci_low = Some(lo);
            out.ci_high = Some(hi);
        }
        Err(e) => out.skipped = Some(e.to_string()),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auroc(labels: &[bool], scores: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn auroc_examples() {
        let labels = [true, true, false, false];
        assert_eq!(auroc(&labels, &[0.9, 0.8, 0.2, 0.1]).unwrap(), 1.0);
        assert_eq!(auroc(&labels, &[0.5; 4]).unwrap(), 0.5);
        assert_eq!(auroc(&labels, &[3.0, 1.0, 2.0, 0.0]).unwrap(), 0.75);
        assert!(matches!(auroc(&[true, true], &[1.0, 2.0]), Err(Error::SingleClass(_))));
        assert!(matches!(auroc(&[true], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn delong_variance_matches_pairwise_definition() {
        let labels = [true, true, true, false, false, false, false, true, false];
        let scores = [0.9, 0.4, 0.7, 0.4, 0.1, 0.5, 0.3, 0.8, 0.4];
        let est = auroc_delong(&labels, &scores).unwrap();
        assert!((est.auroc - brute_auroc(&labels, &scores)).abs() < 1e-12);
        // Structural components by direct pair comparison.
        let psi = |x: f64, y: f64| if x > y { 1.0 } else if x == y { 0.5 } else { 0.0 };
        let pos: Vec<f64> = scores.iter().zip(&labels).filter(|(_, &l)| l).map(|(s, _)| *s).collect();
        let neg: Vec<f64> = scores.iter().zip(&labels).filter(|(_, &l)| !l).map(|(s, _)| *s).collect();
        let v10: Vec<f64> = pos.iter().map(|&x| neg.iter().map(|&y| psi(x, y)).sum::<f64>() / neg.len() as f64).collect();
        let v01: Vec<f64> = neg.iter().map(|&y| pos.iter().map(|&x| psi(x, y)).sum::<f64>() / pos.len() as f64).collect();
        let svar = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
        };
        let expected = svar(&v10) / pos.len() as f64 + svar(&v01) / neg.len() as f64;
        assert!((est.variance - expected).abs() < 1e-14);
    }

    #[test]
    fn roc_curve_endpoints_and_monotonicity() {
        let labels = [true, false, true, false, true];
        let scores = [5.0, 1.0, 3.0, 3.0, 2.0];
        let c = RocCurve::from_scores(&labels, &scores).unwrap();
        let first = c.points.first().unwrap();
        let last = c.points.last().unwrap();
        assert_eq!((first.sensitivity, first.specificity), (1.0, 0.0));
        assert_eq!((last.sensitivity, last.specificity), (0.0, 1.0));
        for w in c.points.windows(2) {
            assert!(w[0].threshold < w[1].threshold);
            assert!(w[0].sensitivity >= w[1].sensitivity);
            assert!(w[0].specificity <= w[1].specificity);
        }
        assert!(c.to_csv().starts_with("threshold,sensitivity,specificity\n"));
    }

    #[test]
    fn youden_separable() {
        let labels = [true, true, false, false];
        let scores = [4.0, 3.0, 2.0, 1.0];
        let c = RocCurve::from_scores(&labels, &scores).unwrap();
        let op = youden_point(&c, YoudenTieBreak::default());
        // Brute force over every threshold between / around the scores.
        let mut best = (-2.0, 0.0);
        for t in [0.5, 1.5, 2.5, 3.5, 4.5] {
            let m = binary_metrics(&labels, &binarize(&scores, t)).unwrap();
            let j = m.sensitivity.unwrap() + m.specificity.unwrap() - 1.0;
            if j > best.0 {
                best = (j, t);
            }
        }
        assert_eq!(best, (1.0, 2.5));
        assert_eq!(op.threshold, 3.0);
        assert!(op.threshold > 2.0 && op.threshold <= 3.0);
        assert_eq!((op.sensitivity, op.specificity, op.youden_index()), (1.0, 1.0, 1.0));
    }

    #[test]
    fn youden_tie_break() {
        // Thresholds 2 and 4 both give J = 1/2; higher specificity picks 4.
        let labels = [true, false, true, false];
        let scores = [1.0, 2.0, 3.0, 4.0];
        let c = RocCurve::from_scores(&labels, &scores).unwrap();
        let spec = youden_point(&c, YoudenTieBreak::HigherSpecificity);
        let sens = youden_point(&c, YoudenTieBreak::HigherSensitivity);
        assert!(spec.specificity >= sens.specificity);
        assert_eq!(spec.youden_index(), sens.youden_index());
    }

    #[test]
    fn matched_points_meet_targets() {
        let labels: Vec<bool> = (0..200).map(|i| i % 3 == 0).collect();
        let scores: Vec<f64> = (0..200).map(|i| ((i * 7919) % 200) as f64 + if i % 3 == 0 { 40.0 } else { 0.0 }).collect();
        let c = RocCurve::from_scores(&labels, &scores).unwrap();
        let s = matched_point(&c, 0.577, MatchAxis::Specificity).unwrap();
        assert!(s.specificity >= 0.577);
        let previous = c.points.iter().rev().find(|p| p.threshold < s.threshold).unwrap();
        assert!(previous.specificity < 0.577);
        let t = matched_point(&c, 0.9, MatchAxis::Sensitivity).unwrap();
        assert!(t.sensitivity >= 0.9);
        assert!(matched_point(&c, 1.0, MatchAxis::Sensitivity).is_err());

        let sep = RocCurve::from_scores(&[true, true, false], &[0.9, 0.8, 0.1]).unwrap();
        for target in [0.1, 0.5, 0.99] {
            let p = matched_point(&sep, target, MatchAxis::Specificity).unwrap();
            assert_eq!((p.sensitivity, p.specificity), (1.0, 1.0));
        }
        let p = matched_point(&sep, 0.99, MatchAxis::Sensitivity).unwrap();
        assert_eq!((p.sensitivity, p.specificity), (1.0, 1.0));
        // a lower sensitivity target is met by the stricter threshold
        let p = matched_point(&sep, 0.5, MatchAxis::Sensitivity).unwrap();
        assert_eq!((p.sensitivity, p.specificity), (0.5, 1.0));
    }

    #[test]
    fn binary_metrics_examples() {
        let labels = [true, false, true, false];
        let m = binary_metrics(&labels, &labels).unwrap();
        assert_eq!((m.sensitivity, m.specificity, m.ppv, m.npv), (Some(1.0), Some(1.0), Some(1.0), Some(1.0)));
        let all = binary_metrics(&labels, &[true; 4]).unwrap();
        assert_eq!((all.sensitivity, all.specificity, all.ppv, all.npv), (Some(1.0), Some(0.0), Some(0.5), None));

        let mut reference = vec![true; 100];
        reference.extend(vec![false; 100]);
        let mut preds = vec![true; 90];
        preds.extend(vec![false; 10]);
        preds.extend(vec![false; 50]);
        preds.extend(vec![true; 50]);
        let m = binary_metrics(&reference, &preds).unwrap();
        assert_eq!((m.tp, m.fn_, m.tn, m.fp), (90, 10, 50, 50));
        assert_eq!(m.sensitivity, Some(0.9));
        assert_eq!(m.specificity, Some(0.5));
        assert_eq!(m.ppv, Some(90.0 / 140.0));
        assert_eq!(m.npv, Some(50.0 / 60.0));
        assert_eq!(m.confusion, [[50, 50], [10, 90]]);
    }

    #[test]
    fn krippendorff_examples() {
        let a = [true, false, true, true, false];
        assert_eq!(krippendorff_alpha(&a, &a).unwrap(), 1.0);
        assert!(matches!(krippendorff_alpha(&[true, true], &[true, true]), Err(Error::Undefined(_))));
        assert!(krippendorff_alpha(&[true], &[false]).is_err());
    }

    #[test]
    fn benefit_harm_examples() {
        // 10 TP, 2 GG1 FP, 1 benign FP, 40 TN, 10 FN -> 50 negative predictions.
        let mut labels = vec![true; 10];
        let mut gg: Vec<Option<u8>> = vec![Some(3); 10];
        let mut preds = vec![true; 10];
        labels.extend([false, false, false]);
        gg.extend([Some(1), Some(1), Some(0)]);
        preds.extend([true, true, true]);
        labels.extend(vec![false; 40]);
        gg.extend(vec![None; 40]);
        preds.extend(vec![false; 40]);
        labels.extend(vec![true; 10]);
        gg.extend(vec![Some(2); 10]);
        preds.extend(vec![false; 10]);
        let r = benefit_harm_ratios(&labels, &gg, &preds).unwrap();
        assert_eq!(r.detections_to_gg1.to_string(), "10:2");
        assert_eq!(r.detections_to_gg1_and_negatives.to_string(), "10:52");
        assert_eq!(r.avoided_to_gg1.to_string(), "40:2");

        let r = benefit_harm_ratios(&[true, false], &[Some(2), None], &[true, false]).unwrap();
        assert_eq!(r.detections_to_gg1, CountRatio { numerator: 1, denominator: 0 });
        assert_eq!(r.detections_to_gg1.value(), None);
    }

    #[test]
    fn operating_rule_parsing() {
        assert_eq!("youden".parse::<OperatingRule>().unwrap(), OperatingRule::Youden);
        assert_eq!("sens:0.9".parse::<OperatingRule>().unwrap(), OperatingRule::MatchedSensitivity { target: 0.9 });
        assert_eq!("spec:0.577".parse::<OperatingRule>().unwrap(), OperatingRule::MatchedSpecificity { target: 0.577 });
        assert!("median".parse::<OperatingRule>().is_err());
    }

    proptest! {
        #[test]
        fn auroc_matches_brute_force(data in proptest::collection::vec((any::<bool>(), 0u8..6), 2..60)) {
            let labels: Vec<bool> = data.iter().map(|d| d.0).collect();
            let scores: Vec<f64> = data.iter().map(|d| f64::from(d.1)).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let fast = auroc(&labels, &scores).unwrap();
            prop_assert!((fast - brute_auroc(&labels, &scores)).abs() < 1e-12);
        }

        #[test]
        fn observed_agreement_identity(data in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
            // agreement = p * sens + (1 - p) * spec for binary predictions
            let truth: Vec<bool> = data.iter().map(|d| d.0).collect();
            let pred: Vec<bool> = data.iter().map(|d| d.1).collect();
            let m = binary_metrics(&truth, &pred).unwrap();
            let p = (m.tp + m.fn_) as f64 / truth.len() as f64;
            let rhs = p * m.sensitivity.unwrap_or(0.0) + (1.0 - p) * m.specificity.unwrap_or(0.0);
            prop_assert!((m.agreement - rhs).abs() < 1e-12);
        }
    }
}
