//! Acceptance criteria 1–10. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::time::Instant;

use dxi_core::agreement::{pairwise_case_agreement, prevalence_adjust};
use dxi_core::cohort::{CaseRecord, PatientId, Strata, Verification};
use dxi_core::exec::{stream_rng, Execution};
use dxi_core::interchange::{bootstrap_wald_ci, Decision, InterchangeResult};
use dxi_core::mi::{pooled_auroc_mi, rubin_pool, ImputationMode, RiskModel};
use dxi_core::power::{ci_halfwidth, halfwidth_table};
use dxi_core::roc::{auroc, auroc_delong, binarize, krippendorff_alpha, select_operating_point, OperatingRule};
use dxi_core::simulate::{
    render_plan_markdown, simulate_scores, simulate_table3, summarize_plan, BinormalSpec, PlanScenario, Table3Config,
};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// 1. Prevalence adjustment against the six published adjusted values.
fn criterion_1() -> Outcome {
    // (p, inter-reader pos, neg, published P_adj, SoC pos, neg, published Q_adj)
    let cohorts = [
        ("PRIME", 0.30, 0.887, 0.658, 0.727, 0.895, 0.581, 0.675),
        ("STHLM3-MRI", 0.17, 0.869, 0.738, 0.760, 0.846, 0.724, 0.746),
        ("IPI-PROSTAGRAM", 0.04, 0.869, 0.738, 0.743, 0.846, 0.724, 0.730),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, p, irp, irn, pub_p, qp, qn, pub_q) in cohorts {
        let pa = prevalence_adjust(p, irp, irn).unwrap().adjusted;
        let qa = prevalence_adjust(p, qp, qn).unwrap().adjusted;
        let ok = (pa - pub_p).abs() <= 0.002 + 1e-12 && (qa - pub_q).abs() <= 0.002 + 1e-12;
        pass &= ok;
        parts.push(format!("{name} P {:.2}/{:.1} Q {:.2}/{:.1}", pa * 100.0, pub_p * 100.0, qa * 100.0, pub_q * 100.0));
    }
    check(pass, parts.join("; "))
}

// 2. Table 4 half-widths.
fn criterion_2() -> Outcome {
    let ps = [0.70, 0.75, 0.80];
    let ns = [476u64, 1143, 391];
    let published = [[4.12, 3.89, 3.59], [2.67, 2.51, 2.32], [4.54, 4.29, 3.96]];
    let table = halfwidth_table(&ps, &ns).unwrap();
    let mut within = 0;
    let mut exact = 0;
    for (r, row) in table.cells.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            let pp = cell.x * 100.0;
            if (pp - published[r][c]).abs() <= 0.02 + 1e-9 {
                within += 1;
            }
            if format!("{pp:.2}") == format!("{:.2}", published[r][c]) {
                exact += 1;
            }
            assert_eq!(cell, &ci_halfwidth(ps[c], ns[r]).unwrap());
        }
    }
    check(within == 9 && exact >= 6, format!("{within}/9 within ±0.02 pp, {exact}/9 exact at 2 decimals"))
}

// 3. Agreement ceiling at matched specificity.
fn criterion_3() -> Outcome {
    let sim = simulate_scores(BinormalSpec { target_auroc: 0.99, prevalence: 0.30, n_cases: 100_000 }, 303).unwrap();
    let op = select_operating_point(&sim.labels, &sim.scores, OperatingRule::MatchedSpecificity { target: 0.57 })
        .unwrap();
    let pred = binarize(&sim.scores, op.threshold);
    let agreement =
        sim.labels.iter().zip(&pred).filter(|(a, b)| a == b).count() as f64 / sim.labels.len() as f64;
    check(
        (agreement - 0.699).abs() <= 0.005,
        format!("agreement {agreement:.4} (sens {:.4}, spec {:.4}) vs 0.699 ± 0.005", op.sensitivity, op.specificity),
    )
}

/// Krippendorff's alpha from a 2x2 (truth, prediction) table of proportions,
/// via the coincidence matrix for two coders and large N.
fn analytic_alpha(prevalence: f64, sens: f64, spec: f64) -> f64 {
    let tp = prevalence * sens;
    let fn_ = prevalence - tp;
    let tn = (1.0 - prevalence) * spec;
    let fp = 1.0 - prevalence - tn;
    // coincidences per unit: o_11 = 2 tp, o_00 = 2 tn, o_01 = o_10 = fp + fn
    let n1 = 2.0 * tp + fp + fn_;
    let n0 = 2.0 * tn + fp + fn_;
    let n = n0 + n1;
    1.0 - (2.0 * (fp + fn_)) / (2.0 * n0 * n1 / n)
}

// 4. Operating-point table reproduction.
fn criterion_4() -> Outcome {
    // (sens, spec, alpha, agreement) per printed row: matched rows A–F, then Youden A–F.
    let published = [
        (0.77, 0.57, 0.24, 0.632),
        (0.83, 0.57, 0.28, 0.649),
        (0.90, 0.57, 0.33, 0.670),
        (0.95, 0.57, 0.36, 0.685),
        (0.98, 0.57, 0.38, 0.695),
        (1.00, 0.57, 0.39, 0.699),
        (0.64, 0.73, 0.33, 0.700),
        (0.68, 0.76, 0.40, 0.732),
        (0.75, 0.78, 0.49, 0.772),
        (0.82, 0.83, 0.61, 0.825),
        (0.86, 0.89, 0.73, 0.882),
        (0.95, 0.95, 0.88, 0.951),
    ];
    let t = simulate_table3(&Table3Config::default(), Execution::Parallel).unwrap();
    let mut misses = Vec::new();
    for (row, &(s, p, a, g)) in t.rows.iter().zip(&published) {
        let rule = if matches!(row.rule, OperatingRule::Youden) { "youden" } else { "matched" };
        let ok = (row.sensitivity - s).abs() <= 0.04
            && (row.specificity - p).abs() <= 0.04
            && (row.agreement - g).abs() <= 0.04
            && (row.alpha - a).abs() <= 0.06;
        println!(
            "    {rule:<7} {} auroc {:.3} sens {:.3}/{s:.2} spec {:.3}/{p:.2} alpha {:.3}/{a:.2} agreement {:.3}/{g:.3}{}",
            row.system,
            row.auroc,
            row.sensitivity,
            row.specificity,
            row.alpha,
            row.agreement,
            if ok { "" } else { "  <- outside tolerance" }
        );
        if !ok {
            misses.push(format!("{rule} {}", row.system));
        }
    }
    let oracle = analytic_alpha(0.30, 0.77, 0.57);
    let large = simulate_table3(
        &Table3Config { targets: vec![0.75], n_cases: 100_000, ..Table3Config::default() },
        Execution::Parallel,
    )
    .unwrap();
    let alpha_a = large.rows[0].alpha;
    let converged = (alpha_a - 0.239).abs() <= 0.01;
    let pass = misses.is_empty() && converged && (oracle - 0.239).abs() < 0.001;
    check(
        pass,
        format!(
            "{}/12 rows within tolerance{}; row A alpha at n=1e5 {alpha_a:.4} vs 0.239 ± 0.01 (analytic oracle {oracle:.4})",
            12 - misses.len(),
            if misses.is_empty() { String::new() } else { format!(" (outside: {})", misses.join(", ")) }
        ),
    )
}

// 5. Figure 2 decision.
fn criterion_5() -> Outcome {
    let r = InterchangeResult::from_interval("Figure 2 scenario", 0.74, (0.709, 0.778), 0.675, 0.05, Some(0.727))
        .unwrap();
    let md = render_plan_markdown(&r);
    let ok = r.decision == Decision::Interchangeable && md.contains("62.5%");
    check(ok, format!("decision {}, decision line {:.1}% rendered: {}", r.decision, r.decision_line * 100.0, md.contains("62.5%")))
}

// 6. Rubin's rules.
fn criterion_6() -> Outcome {
    let p = rubin_pool(&[0.80, 0.82], &[0.001, 0.001]).unwrap();
    let hand = (p.q_pooled - 0.81).abs() < 1e-15
        && (p.between_var - 2e-4).abs() < 1e-15
        && (p.total_var - 1.3e-3).abs() < 1e-15;
    let mut rng = stream_rng(6, 0);
    let mut violations = 0;
    for _ in 0..1000 {
        let m = rng.random_range(2..200);
        let est: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
        let var: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 0.01).collect();
        let r = rubin_pool(&est, &var).unwrap();
        if r.total_var < r.within_var {
            violations += 1;
        }
    }
    check(
        hand && violations == 0,
        format!(
            "Q {:.4} B {:.1e} T {:.2e}; T >= U violated on {violations}/1000 fuzzed inputs",
            p.q_pooled, p.between_var, p.total_var
        ),
    )
}

fn brute_pairwise(d: &[bool]) -> f64 {
    let (mut agree, mut total) = (0u64, 0u64);
    for i in 0..d.len() {
        for j in i + 1..d.len() {
            total += 1;
            agree += u64::from(d[i] == d[j]);
        }
    }
    agree as f64 / total as f64
}

/// Coincidence-matrix Krippendorff alpha, any number of coders per unit.
fn brute_alpha(units: &[Vec<bool>]) -> Option<f64> {
    let mut o = [[0.0f64; 2]; 2];
    for values in units {
        let m = values.len();
        if m < 2 {
            continue;
        }
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    o[usize::from(values[i])][usize::from(values[j])] += 1.0 / (m - 1) as f64;
                }
            }
        }
    }
    let n_c = [o[0][0] + o[0][1], o[1][0] + o[1][1]];
    let n = n_c[0] + n_c[1];
    let expected = n_c[0] * n_c[1] + n_c[1] * n_c[0];
    if expected == 0.0 {
        return None;
    }
    Some(1.0 - (n - 1.0) * (o[0][1] + o[1][0]) / expected)
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b { 0.0 } else { (a - b).abs() / b.abs().max(f64::MIN_POSITIVE) }
}

// 7. Estimator oracle equivalence.
fn criterion_7() -> Outcome {
    let mut rng = stream_rng(7, 0);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 500 {
        let readers = rng.random_range(2..=12);
        let d: Vec<bool> = (0..readers).map(|_| rng.random()).collect();
        worst = worst.max(rel_err(pairwise_case_agreement(&d).unwrap(), brute_pairwise(&d)));

        let units = rng.random_range(2..=50);
        let bias = rng.random::<f64>();
        let a: Vec<bool> = (0..units).map(|_| rng.random::<f64>() < bias).collect();
        let b: Vec<bool> = a.iter().map(|&x| if rng.random::<f64>() < 0.7 { x } else { rng.random() }).collect();
        let pairs: Vec<Vec<bool>> = a.iter().zip(&b).map(|(&x, &y)| vec![x, y]).collect();
        match (krippendorff_alpha(&a, &b), brute_alpha(&pairs)) {
            (Ok(x), Some(y)) => worst = worst.max(rel_err(x, y)),
            (Err(_), None) => {}
            _ => return check(false, "alpha defined-ness disagrees with brute force"),
        }
        checked += 1;
    }
    check(worst <= 1e-12, format!("500 instances, worst relative error {worst:.2e}"))
}

// 8. Bootstrap determinism across thread counts and Wald coverage.
fn criterion_8() -> Outcome {
    let n = 400;
    let mut rng = stream_rng(8, 0);
    let soc: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.3).collect();
    let ai: Vec<bool> = soc.iter().map(|&s| if rng.random::<f64>() < 0.75 { s } else { !s }).collect();
    let ids: Vec<PatientId> = (0..n).map(|i| PatientId::from(format!("p{}", i / 2))).collect();
    let max_threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).max(4);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| bootstrap_wald_ci(&soc, &ai, &ids, 10_000, 88, Execution::Parallel).unwrap())
    };
    let one = run(1);
    let many = run(max_threads);
    let identical = one == many;

    let scenario = PlanScenario {
        benchmark: 0.675,
        margin: 0.05,
        true_agreement: 0.75,
        n_cases: 400,
        prevalence: 0.30,
        reps: 10_000,
        seed: 800,
        context_inter_reader: None,
    };
    let summary = summarize_plan(&scenario, 1000, Execution::Parallel).unwrap();
    let covered = (0.92..=0.97).contains(&summary.coverage);
    check(
        identical && covered,
        format!(
            "1 vs {max_threads} threads identical: {identical}; Wald coverage {:.1}% over 1000 cohorts (percentile {:.1}%)",
            summary.coverage * 100.0,
            summary.percentile_coverage * 100.0
        ),
    )
}

// 9. Size of the interchangeability test.
fn criterion_9() -> Outcome {
    let scenario = PlanScenario {
        benchmark: 0.675,
        margin: 0.05,
        true_agreement: 0.625,
        n_cases: 476,
        prevalence: 0.30,
        reps: 10_000,
        seed: 900,
        context_inter_reader: None,
    };
    let summary = summarize_plan(&scenario, 1000, Execution::Parallel).unwrap();
    let rate = summary.rejection_rate;
    check((rate - 0.025).abs() <= 0.015, format!("rejection rate {:.1}% over 1000 simulations (target 2.5 ± 1.5 pp)", rate * 100.0))
}

// 10. AUROC properties.
fn criterion_10() -> Outcome {
    let mut rng = stream_rng(10, 0);
    let mut ok = true;
    for _ in 0..200 {
        let n = rng.random_range(4..80);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let base = auroc(&labels, &scores).unwrap();
        let transformed: Vec<f64> = scores.iter().map(|s| (0.7 * s).exp() + s.powi(3)).collect();
        ok &= auroc(&labels, &transformed).unwrap() == base;
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        ok &= (auroc(&labels, &negated).unwrap() + base - 1.0).abs() < 1e-12;
    }
    let ties = auroc(&[true, false, true, false], &[3.0; 4]).unwrap();
    ok &= ties == 0.5;

    let cases: Vec<CaseRecord> = (0..300)
        .map(|i| CaseRecord {
            case_id: format!("c{i}").into(),
            patient_id: format!("p{i}").into(),
            age: 50 + (i % 25) as u32,
            psa: 2.0 + (i % 9) as f64,
            historical_pirads: 3,
            verification: if i % 3 == 0 {
                Verification::HistologyVerified { gleason_grade_group: 2 }
            } else {
                Verification::ConsensusNegative
            },
            strata: Strata::default(),
        })
        .collect();
    let scores: Vec<f64> = (0..300).map(|_| rng.random_range(0.0..100.0)).collect();
    let labels: Vec<bool> = cases.iter().map(|c| c.label().unwrap()).collect();
    let mi = pooled_auroc_mi(&cases, &scores, &RiskModel::base_rate(0.03), 100, 1, ImputationMode::Improper, Execution::Parallel)
        .unwrap();
    let cc = auroc_delong(&labels, &scores).unwrap();
    let mi_equal = mi.q_pooled == cc.auroc && mi.between_var == 0.0;
    check(ok && mi_equal, format!("transform/complement/ties hold: {ok}; MI equals complete case: {mi_equal}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("prevalence adjustment reproduces published adjusted values", criterion_1),
        ("expected CI half-widths reproduce the sample-size table", criterion_2),
        ("matched-specificity agreement ceiling", criterion_3),
        ("operating-point table reproduction", criterion_4),
        ("plan figure decision and 62.5% line", criterion_5),
        ("Rubin's rules hand example and T >= U", criterion_6),
        ("pairwise agreement and alpha match brute force", criterion_7),
        ("bootstrap thread-count determinism and Wald coverage", criterion_8),
        ("size of the interchangeability test", criterion_9),
        ("AUROC properties and MI complete-case equality", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "criterion {:>2}: {} - {name}: {} [{secs:.1}s]",
            k + 1,
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
        if !outcome.pass {
            failed += 1;
        }
    }
    println!("acceptance: {}/10 passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
