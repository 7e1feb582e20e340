//! Markdown and CSV views for subcommands whose core types have no renderer.

use std::fmt::Write;

use dxi_core::agreement::{AgreementEstimate, AgreementTable, PrevalenceAdjusted};
use dxi_core::cohort::ValidationReport;
use dxi_core::mi::MiPooledAuroc;
use dxi_core::roc::{BenefitHarm, BinaryMetrics, OperatingPoint, StratifiedAuroc};
use dxi_core::simulate::PlanSummary;

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

fn opt_pct(x: Option<f64>) -> String {
    x.map(pct).unwrap_or_else(|| "n/a".into())
}

fn estimate_cell(e: &Option<AgreementEstimate>) -> String {
    match e {
        Some(e) => format!("{} ({} to {}), n={}", pct(e.mean), pct(e.ci_low), pct(e.ci_high), e.n_cases),
        None => "n/a".into(),
    }
}

pub fn validation(r: &ValidationReport) -> String {
    let mut out = String::from("# Cohort validation\n\n| Item | Value |\n|---|---|\n");
    let rows = [
        ("Cases", r.n_cases.to_string()),
        ("Patients", r.n_patients.to_string()),
        ("Readings", r.n_readings.to_string()),
        ("Readers", r.n_readers.to_string()),
        ("Single-reader cases", r.single_reader_cases.to_string()),
        ("Labeled cases", r.n_labeled.to_string()),
        ("Positive cases", r.n_positive.to_string()),
        ("Prevalence", opt_pct(r.prevalence)),
        ("Unverified cases", r.n_unverified.to_string()),
        ("Predictions", r.n_predictions.to_string()),
        ("Cases without prediction", r.cases_without_prediction.to_string()),
    ];
    for (k, v) in rows {
        let _ = writeln!(out, "| {k} | {v} |");
    }
    if let Some(rc) = &r.readers_per_case {
        let _ = writeln!(out, "| Readers per case (min / median / max) | {} / {} / {} |", rc.min, rc.median, rc.max);
    }
    for w in &r.warnings {
        let _ = writeln!(out, "\n- warning: {w}");
    }
    if !r.referentially_intact() {
        let _ = writeln!(
            out,
            "\nUnknown case ids: {} in readings, {} in predictions.",
            r.unknown_reading_cases.len(),
            r.unknown_prediction_cases.len()
        );
    }
    out
}

pub fn agreement(
    ir: &AgreementTable,
    soc: &AgreementTable,
    adjusted: Option<(PrevalenceAdjusted, PrevalenceAdjusted)>,
) -> String {
    let mut out = format!(
        "# Agreement at {}\n\n| | All | Negative | Positive |\n|---|---|---|---|\n",
        ir.cutoff.label()
    );
    for (name, t) in [("Inter-reader", ir), ("Standard of care", soc)] {
        let _ = writeln!(
            out,
            "| {name} | {} | {} | {} |",
            estimate_cell(&t.all),
            estimate_cell(&t.negative),
            estimate_cell(&t.positive)
        );
    }
    if let Some((a, b)) = adjusted {
        let _ = writeln!(
            out,
            "\nPrevalence-adjusted at p = {}: inter-reader {}, standard of care {}.",
            a.p,
            pct(a.adjusted),
            pct(b.adjusted)
        );
    }
    for w in ir.warnings.iter().chain(&soc.warnings) {
        let _ = writeln!(out, "\n- warning: {w}");
    }
    out
}

pub fn agreement_csv(ir: &AgreementTable, soc: &AgreementTable) -> String {
    let mut out = String::from("kind,split,mean,ci_low,ci_high,n_cases\n");
    for (name, t) in [("inter_reader", ir), ("standard_of_care", soc)] {
        for (split, e) in [("all", &t.all), ("negative", &t.negative), ("positive", &t.positive)] {
            if let Some(e) = e {
                let _ = writeln!(out, "{name},{split},{},{},{},{}", e.mean, e.ci_low, e.ci_high, e.n_cases);
            }
        }
    }
    out
}

pub fn auroc_mi(p: &MiPooledAuroc, strata: &[StratifiedAuroc]) -> String {
    let mut out = format!(
        "# AUROC\n\nPooled AUROC {:.3} (95% CI {:.3} to {:.3}) over {} imputations; {} unverified cases imputed.\n",
        p.q_pooled, p.ci_low, p.ci_high, p.m, p.n_unverified
    );
    if p.excluded_imputations > 0 {
        let _ = writeln!(out, "\n{} imputations had a single class and were dropped.", p.excluded_imputations);
    }
    for s in strata {
        let _ = writeln!(out, "\n## By {:?}\n\n| Stratum | n | AUROC | 95% CI |\n|---|---|---|---|", s.stratifier);
        for r in &s.strata {
            let ci = match (r.ci_low, r.ci_high) {
                (Some(l), Some(h)) => format!("{l:.3} to {h:.3}"),
                _ => r.skipped.clone().unwrap_or_else(|| "n/a".into()),
            };
            let auc = r.auroc.map(|a| format!("{a:.3}")).unwrap_or_else(|| "n/a".into());
            let _ = writeln!(out, "| {} | {} | {auc} | {ci} |", r.stratum, r.n_cases);
        }
    }
    out
}

pub fn strata_csv(p: &MiPooledAuroc, strata: &[StratifiedAuroc]) -> String {
    let mut out = String::from("stratifier,stratum,n_cases,auroc,ci_low,ci_high\n");
    let _ = writeln!(out, "all,all,,{},{},{}", p.q_pooled, p.ci_low, p.ci_high);
    let f = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for s in strata {
        for r in &s.strata {
            let _ = writeln!(
                out,
                "{:?},{},{},{},{},{}",
                s.stratifier,
                r.stratum,
                r.n_cases,
                f(r.auroc),
                f(r.ci_low),
                f(r.ci_high)
            );
        }
    }
    out
}

type MetricRow = (OperatingPoint, BinaryMetrics, BenefitHarm);

pub fn metrics(rows: &[MetricRow]) -> String {
    let mut out = String::from(
        "# Metrics against standard of care\n\n| Rule | Threshold | Sens | Spec | PPV | NPV | TP/FP/TN/FN | GG>=2 : GG1 | Avoided : GG1 |\n|---|---|---|---|---|---|---|---|---|\n",
    );
    for (op, m, b) in rows {
        let _ = writeln!(
            out,
            "| {} | {:.3} | {} | {} | {} | {} | {}/{}/{}/{} | {} | {} |",
            op.rule,
            op.threshold,
            opt_pct(m.sensitivity),
            opt_pct(m.specificity),
            opt_pct(m.ppv),
            opt_pct(m.npv),
            m.tp,
            m.fp,
            m.tn,
            m.fn_,
            b.detections_to_gg1,
            b.avoided_to_gg1
        );
    }
    out
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from("rule,threshold,sensitivity,specificity,ppv,npv,tp,fp,tn,fn\n");
    let f = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for (op, m, _) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            op.rule,
            op.threshold,
            f(m.sensitivity),
            f(m.specificity),
            f(m.ppv),
            f(m.npv),
            m.tp,
            m.fp,
            m.tn,
            m.fn_
        );
    }
    out
}

pub fn plan_summary(s: &PlanSummary) -> String {
    format!(
        "# Plan simulation\n\n{} simulations at true agreement {} (benchmark {}, margin {}):\n\n- conclusion rate: {}\n- Wald coverage: {}\n- percentile coverage: {}\n",
        s.simulations,
        pct(s.scenario.true_agreement),
        pct(s.scenario.benchmark),
        pct(s.scenario.margin),
        pct(s.rejection_rate),
        pct(s.coverage),
        pct(s.percentile_coverage)
    )
}
