//! Verification-bias adjustment by multiple imputation.
//!
//! Unverified (negative-MRI, no histopathology) cases receive `m` imputed
//! disease statuses drawn from a per-case probability of clinically
//! significant cancer. AUROC is computed on each completed data set and pooled
//! with Rubin's rules:
//!
//! ```text
//! Q = mean(Q_j)                 U = mean(Var_j)
//! B = sum (Q_j - Q)^2 / (m - 1) T = B (1 + 1/m) + U
//! CI = Q ± t_{m-1, 0.975} sqrt(T)
//! ```
//!
//! The risk model is a logistic regression on `(age, ln PSA)` fitted to a
//! fully verified cohort (by default only its MRI-negative cases, PI-RADS <= 2),
//! after which the intercept is shifted so that the mean predicted risk over
//! the fit population equals the base probability (0.03 by default). This
//! recalibration is our reading of how the base rate and the covariate model
//! are combined; the exported model JSON records it.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::cohort::{require_fully_verified, CaseRecord, PatientId};
use crate::error::{Error, Result};
use crate::exec::{stream_rng, Execution};
use crate::roc::auroc_delong;

/// Prior probability of clinically significant cancer on a negative MRI.
pub const BASE_PROBABILITY: f64 = 0.03;
pub const DEFAULT_IMPUTATIONS: usize = 100;

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitPopulation {
    /// Cases with historical PI-RADS <= 2.
    #[default]
    MriNegative,
    All,
}

/// Logistic model for the probability of clinically significant cancer:
/// `logistic(intercept + coef_age * age + coef_logpsa * ln(psa))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskModel {
    pub intercept: f64,
    pub coef_age: f64,
    pub coef_logpsa: f64,
    /// Recalibration target for the mean risk over the fit population.
    pub base_probability: f64,
    /// Always `"log"`: the PSA covariate is `ln(psa)`.
    pub psa_transform: String,
    pub fit_population: FitPopulation,
    pub n_fit: usize,
    /// Fit hit (quasi-)separation and fell back to the base rate.
    pub separation: bool,
    /// Covariance of `(intercept, coef_age, coef_logpsa)`; needed for proper MI.
    pub covariance: Option<[[f64; 3]; 3]>,
}

impl RiskModel {
    /// Covariate-free model predicting `base_probability` for everyone.
    pub fn base_rate(base_probability: f64) -> Self {
        RiskModel {
            intercept: logit(base_probability),
            coef_age: 0.0,
            coef_logpsa: 0.0,
            base_probability,
            psa_transform: "log".into(),
            fit_population: FitPopulation::MriNegative,
            n_fit: 0,
            separation: false,
            covariance: None,
        }
    }

    fn linear_predictor(&self, age: f64, psa: f64) -> f64 {
        self.intercept + self.coef_age * age + self.coef_logpsa * psa.ln()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: RiskModel = serde_json::from_str(text)?;
        if model.psa_transform != "log" {
            return Err(Error::invalid(format!("unsupported psa_transform `{}`", model.psa_transform)));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Probability of clinically significant cancer for one case.
pub fn case_probability(model: &RiskModel, age: f64, psa: f64) -> Result<f64> {
    if !(psa > 0.0) {
        return Err(Error::invalid(format!("psa must be positive, got {psa}")));
    }
    if !(age > 0.0) {
        return Err(Error::invalid(format!("age must be positive, got {age}")));
    }
    Ok(logistic(model.linear_predictor(age, psa)))
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub population: FitPopulation,
    pub base_probability: f64,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { population: FitPopulation::MriNegative, base_probability: BASE_PROBABILITY, max_iterations: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskFit {
    /// Recalibrated model.
    pub model: RiskModel,
    /// Maximum-likelihood intercept before recalibration.
    pub ml_intercept: f64,
    /// Standard errors of `(intercept, coef_age, coef_logpsa)`; zero for
    /// dropped (zero-variance) covariates.
    pub standard_errors: [f64; 3],
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// Maximum-likelihood logistic fit by Newton–Raphson on standardized
/// covariates, followed by intercept recalibration.
pub fn fit_risk_model(cases: &[CaseRecord], opts: FitOptions) -> Result<RiskFit> {
    require_fully_verified(cases)?;
    if !(opts.base_probability > 0.0 && opts.base_probability < 1.0) {
        return Err(Error::invalid("base probability must lie in (0, 1)"));
    }
    let fit: Vec<&CaseRecord> = cases
        .iter()
        .filter(|c| opts.population == FitPopulation::All || c.historical_pirads <= 2)
        .collect();
    if fit.is_empty() {
        return Err(Error::EmptyInput("fit population (MRI-negative cases)"));
    }
    let y: Vec<f64> = fit.iter().map(|c| if c.label() == Some(true) { 1.0 } else { 0.0 }).collect();
    let n_pos = y.iter().filter(|&&v| v == 1.0).count();
    if n_pos == 0 {
        return Err(Error::NoPositiveOutcomes);
    }
    if n_pos == y.len() {
        return Err(Error::SingleClass("no negative outcomes in the fit population".into()));
    }
    let n = fit.len();
    let raw: [Vec<f64>; 2] = [
        fit.iter().map(|c| f64::from(c.age)).collect(),
        fit.iter().map(|c| c.psa.ln()).collect(),
    ];
    // Standardize; drop covariates without variance.
    let mut means = [0.0; 2];
    let mut sds = [0.0; 2];
    let mut active = Vec::new();
    for k in 0..2 {
        means[k] = raw[k].iter().sum::<f64>() / n as f64;
        let var = raw[k].iter().map(|v| (v - means[k]).powi(2)).sum::<f64>() / n as f64;
        sds[k] = var.sqrt();
        if sds[k] > 1e-12 * means[k].abs().max(1.0) {
            active.push(k);
        }
    }
    let dim = 1 + active.len();
    let design = DMatrix::from_fn(n, dim, |i, j| {
        if j == 0 {
            1.0
        } else {
            let k = active[j - 1];
            (raw[k][i] - means[k]) / sds[k]
        }
    });
    let yv = DVector::from_vec(y.clone());

    let mut warnings = Vec::new();
    let mut beta = DVector::zeros(dim);
    beta[0] = logit(n_pos as f64 / n as f64);
    let mut converged = false;
    let mut iterations = 0;
    let mut hessian = DMatrix::zeros(dim, dim);
    for it in 0..opts.max_iterations {
        iterations = it + 1;
        let eta = &design * &beta;
        let p = eta.map(logistic);
        let w = p.map(|v| v * (1.0 - v));
        let grad = design.transpose() * (&yv - &p);
        let mut weighted = design.clone();
        for (mut row, wi) in weighted.row_iter_mut().zip(w.iter()) {
            row *= *wi;
        }
        hessian = design.transpose() * weighted;
        let Some(chol) = hessian.clone().cholesky() else {
            break;
        };
        let step = chol.solve(&grad);
        beta += &step;
        if beta.iter().any(|b| !b.is_finite() || b.abs() > 30.0) {
            break;
        }
        if step.amax() < 1e-10 {
            converged = true;
            break;
        }
    }

    if !converged {
        warnings.push("logistic fit did not converge (separation); using the base-rate model".to_string());
        let mut model = RiskModel::base_rate(opts.base_probability);
        model.fit_population = opts.population;
        model.n_fit = n;
        model.separation = true;
        return Ok(RiskFit {
            ml_intercept: model.intercept,
            model,
            standard_errors: [0.0; 3],
            iterations,
            warnings,
        });
    }

    // Back to the raw scale: raw = A * standardized.
    let mut coef = [0.0; 2];
    let mut a = DMatrix::<f64>::zeros(3, dim);
    a[(0, 0)] = 1.0;
    for (j, &k) in active.iter().enumerate() {
        coef[k] = beta[j + 1] / sds[k];
        a[(k + 1, j + 1)] = 1.0 / sds[k];
        a[(0, j + 1)] = -means[k] / sds[k];
    }
    let ml_intercept = beta[0] - coef[0] * means[0] - coef[1] * means[1];
    let cov_std = hessian
        .try_inverse()
        .ok_or_else(|| Error::Undefined("singular information matrix".into()))?;
    let cov = &a * cov_std * a.transpose();
    let mut covariance = [[0.0; 3]; 3];
    for (i, row) in covariance.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = cov[(i, j)];
        }
    }

    let etas: Vec<f64> = (0..n).map(|i| ml_intercept + coef[0] * raw[0][i] + coef[1] * raw[1][i]).collect();
    let shift = recalibration_shift(&etas, opts.base_probability);

    let model = RiskModel {
        intercept: ml_intercept + shift,
        coef_age: coef[0],
        coef_logpsa: coef[1],
        base_probability: opts.base_probability,
        psa_transform: "log".into(),
        fit_population: opts.population,
        n_fit: n,
        separation: false,
        covariance: Some(covariance),
    };
    Ok(RiskFit {
        model,
        ml_intercept,
        standard_errors: [0, 1, 2].map(|i| covariance[i][i].max(0.0).sqrt()),
        iterations,
        warnings,
    })
}

/// Offset `d` with `mean(logistic(eta + d)) = target`.
fn recalibration_shift(etas: &[f64], target: f64) -> f64 {
    let first = etas[0];
    if etas.iter().all(|&e| e == first) {
        return logit(target) - first;
    }
    let mean_at = |d: f64| etas.iter().map(|e| logistic(e + d)).sum::<f64>() / etas.len() as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputationMode {
    /// Bernoulli draws from the point-estimate probabilities.
    #[default]
    Improper,
    /// Coefficients drawn from their asymptotic normal distribution per
    /// imputation, then Bernoulli draws. Requires a fitted covariance.
    Proper,
}

fn draw_model(model: &RiskModel, rng: &mut impl Rng) -> Result<RiskModel> {
    let cov = model
        .covariance
        .ok_or_else(|| Error::invalid("proper imputation needs a risk model with covariance"))?;
    let cov = Matrix3::from_fn(|i, j| cov[i][j]);
    // Dropped covariates have zero variance; jitter keeps Cholesky defined.
    let chol = (cov + Matrix3::identity() * 1e-14)
        .cholesky()
        .ok_or_else(|| Error::Undefined("risk model covariance is not positive definite".into()))?;
    let z = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    let d = chol.l() * z;
    let mut drawn = model.clone();
    drawn.intercept += d[0];
    drawn.coef_age += d[1];
    drawn.coef_logpsa += d[2];
    Ok(drawn)
}

/// Patient-level groups of unverified cases, in patient-id order.
fn unverified_patients(cases: &[CaseRecord]) -> BTreeMap<&PatientId, Vec<usize>> {
    let mut groups: BTreeMap<&PatientId, Vec<usize>> = BTreeMap::new();
    for (i, c) in cases.iter().enumerate() {
        if c.is_unverified() {
            groups.entry(&c.patient_id).or_default().push(i);
        }
    }
    groups
}

/// `m` completed label vectors aligned with `cases`.
///
/// One Bernoulli draw per patient is applied to all of that patient's
/// unverified cases, using the risk of the patient's first unverified case.
/// Imputation `j` uses RNG stream `(seed, j)`.
pub fn impute_statuses(
    cases: &[CaseRecord],
    model: &RiskModel,
    m: usize,
    seed: u64,
    mode: ImputationMode,
    exec: Execution,
) -> Result<Vec<Vec<bool>>> {
    if m < 2 {
        return Err(Error::invalid("at least 2 imputations are required"));
    }
    let groups = unverified_patients(cases);
    let base: Vec<bool> = cases.iter().map(|c| c.label().unwrap_or(false)).collect();
    let results = exec.map_indexed(m as u64, |j| -> Result<Vec<bool>> {
        let mut rng = stream_rng(seed, j);
        let drawn;
        let model = match mode {
            ImputationMode::Improper => model,
            ImputationMode::Proper => {
                drawn = draw_model(model, &mut rng)?;
                &drawn
            }
        };
        let mut labels = base.clone();
        for idx in groups.values() {
            let first = &cases[idx[0]];
            let p = case_probability(model, f64::from(first.age), first.psa)?;
            let status = rng.random::<f64>() < p;
            for &i in idx {
                labels[i] = status;
            }
        }
        Ok(labels)
    });
    results.into_iter().collect()
}

/// Rubin's-rules pooled AUROC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiPooledAuroc {
    /// Q: mean of per-imputation estimates.
    pub q_pooled: f64,
    /// U: mean of per-imputation variances.
    pub within_var: f64,
    /// B: sample variance of per-imputation estimates.
    pub between_var: f64,
    /// T = B (1 + 1/m) + U.
    pub total_var: f64,
    /// Imputations actually pooled.
    pub m: usize,
    pub t_quantile: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Imputations dropped because the completed data had a single class.
    pub excluded_imputations: usize,
    pub n_unverified: usize,
}

/// Pool per-imputation estimates and variances.
pub fn rubin_pool(estimates: &[f64], variances: &[f64]) -> Result<MiPooledAuroc> {
    if estimates.len() != variances.len() {
        return Err(Error::LengthMismatch { left: estimates.len(), right: variances.len() });
    }
    let m = estimates.len();
    if m < 2 {
        return Err(Error::invalid("Rubin pooling needs at least 2 imputations"));
    }
    if let Some(v) = variances.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::invalid(format!("negative or NaN variance {v}")));
    }
    let mf = m as f64;
    let q = estimates.iter().sum::<f64>() / mf;
    let u = variances.iter().sum::<f64>() / mf;
    let b = estimates.iter().map(|e| (e - q).powi(2)).sum::<f64>() / (mf - 1.0);
    pooled(q, u, b, m, 0, 0)
}

fn pooled(q: f64, u: f64, b: f64, m: usize, excluded: usize, n_unverified: usize) -> Result<MiPooledAuroc> {
    let t = b * (1.0 + 1.0 / m as f64) + u;
    let dist = StudentsT::new(0.0, 1.0, (m - 1) as f64)
        .map_err(|e| Error::invalid(format!("Student t: {e}")))?;
    let tq = dist.inverse_cdf(0.975);
    let half = tq * t.sqrt();
    Ok(MiPooledAuroc {
        q_pooled: q,
        within_var: u,
        between_var: b,
        total_var: t,
        m,
        t_quantile: tq,
        ci_low: q - half,
        ci_high: q + half,
        excluded_imputations: excluded,
        n_unverified,
    })
}

/// Verification-bias adjusted AUROC. `scores` is aligned with `cases`; every
/// case must have a score. With no unverified cases every imputation equals
/// the complete data, so the complete-case AUROC and its DeLong variance are
/// returned directly (B = 0, T = U).
pub fn pooled_auroc_mi(
    cases: &[CaseRecord],
    scores: &[f64],
    model: &RiskModel,
    m: usize,
    seed: u64,
    mode: ImputationMode,
    exec: Execution,
) -> Result<MiPooledAuroc> {
    if cases.len() != scores.len() {
        return Err(Error::LengthMismatch { left: cases.len(), right: scores.len() });
    }
    if m < 2 {
        return Err(Error::invalid("at least 2 imputations are required"));
    }
    let n_unverified = cases.iter().filter(|c| c.is_unverified()).count();
    if n_unverified == 0 {
        let labels: Vec<bool> = cases.iter().map(|c| c.label() == Some(true)).collect();
        let est = auroc_delong(&labels, scores)?;
        return pooled(est.auroc, est.variance, 0.0, m, 0, 0);
    }
    let imputations = impute_statuses(cases, model, m, seed, mode, exec)?;
    let per = exec.map_slice(&imputations, |labels| auroc_delong(labels, scores));
    let mut estimates = Vec::with_capacity(m);
    let mut variances = Vec::with_capacity(m);
    let mut excluded = 0;
    for r in per {
        match r {
            Ok(e) => {
                estimates.push(e.auroc);
                variances.push(e.variance);
            }
            Err(Error::SingleClass(_)) => excluded += 1,
            Err(e) => return Err(e),
        }
    }
    if estimates.len() < 2 {
        return Err(Error::SingleClass(format!(
            "{excluded} of {m} imputations had a single class; AUROC not estimable"
        )));
    }
    let mut out = rubin_pool(&estimates, &variances)?;
    out.excluded_imputations = excluded;
    out.n_unverified = n_unverified;
    Ok(out)
}
