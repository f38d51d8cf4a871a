//! One line per acceptance criterion; exits nonzero if any fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use bmo_lab::carleson::{random_measure, CarlesonMeasure};
use bmo_lab::process::random_adapted;
use bmo_lab::stopping::random_stopping_time;
use bmo_lab::verify::{derive_seed, run_suite, CaseRecord, Suite, VerificationReport};
use bmo_lab::{build_random, AdaptedProcess, FiltrationTree, StoppingTime};

const SEED: u64 = 20_240_601;

struct Outcome {
    passed: bool,
    detail: String,
}

fn select<'a>(r: &'a VerificationReport, prefixes: &[&str]) -> Vec<&'a CaseRecord> {
    r.cases
        .iter()
        .filter(|c| prefixes.iter().any(|p| c.check.starts_with(p)) || c.check == "error")
        .collect()
}

fn summarize(cases: &[&CaseRecord]) -> Outcome {
    let failures = cases.iter().filter(|c| !c.passed).count();
    let worst = cases.iter().map(|c| c.residual).fold(0.0_f64, f64::max);
    let mut detail = format!("{} cases, {failures} failures, max residual {worst:.3e}", cases.len());
    if let Some(c) = cases.iter().find(|c| !c.passed) {
        detail.push_str(&format!(
            "; first failure {} trial {} seed {}: lhs {} rhs {}",
            c.check, c.trial, c.seed, c.lhs, c.rhs
        ));
    }
    Outcome {
        passed: failures == 0 && !cases.is_empty(),
        detail,
    }
}

fn trials_of(r: &VerificationReport) -> usize {
    r.cases.iter().map(|c| c.trial).max().map_or(0, |t| t + 1)
}

fn suite(s: Suite) -> (VerificationReport, f64) {
    let mut cfg = s.config();
    cfg.seed = SEED;
    let start = Instant::now();
    let r = run_suite(s, &cfg).expect("suite parameters are valid");
    (r, start.elapsed().as_secs_f64())
}

fn bit_exact_round_trips() -> Outcome {
    let mut checked = 0;
    let mut bad = Vec::new();
    for i in 0..200u64 {
        let seed = derive_seed(SEED, i);
        let depth = 1 + (i % 5) as usize;
        let t = Arc::new(build_random(seed, depth, 1 + (i % 3) as usize).unwrap());
        let back = FiltrationTree::from_json(&t.to_json()).unwrap();
        let tree_ok = back == *t
            && (0..=depth).all(|n| {
                t.level(n)
                    .iter()
                    .zip(back.level(n))
                    .all(|(a, b)| a.mass.to_bits() == b.mass.to_bits())
            });
        let g = random_adapted(&t, seed ^ 1, 1 + (i % 3) as usize).unwrap();
        let g2 = AdaptedProcess::from_json(&g.to_json()).unwrap();
        let proc_ok = g.to_json() == g2.to_json()
            && g.levels().iter().flatten().zip(g2.levels().iter().flatten()).all(|(a, b)| a.to_bits() == b.to_bits());
        let mu = random_measure(&t, seed ^ 2, 5.0);
        let mu2 = CarlesonMeasure::from_json(&mu.to_json(), None).unwrap();
        let mu_ok = mu
            .densities()
            .iter()
            .flatten()
            .zip(mu2.densities().iter().flatten())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        let tau = random_stopping_time(&t, seed ^ 3, 0.35);
        let tau_ok = StoppingTime::from_json(t.clone(), &tau.to_json()).unwrap().stops() == tau.stops();
        checked += 1;
        if !(tree_ok && proc_ok && mu_ok && tau_ok) {
            bad.push(i);
        }
    }
    Outcome {
        passed: bad.is_empty(),
        detail: format!("{checked} tree/process/measure/tau round trips, mismatches at {bad:?}"),
    }
}

fn main() -> ExitCode {
    let (characterization, t1) = suite(Suite::Characterization);
    let (lemma, _) = suite(Suite::Lemma);
    let (fast, _) = suite(Suite::FastPaths);
    let (inequality, _) = suite(Suite::CarlesonInequality);
    let (converse, _) = suite(Suite::Converse);
    let (operators, _) = suite(Suite::Operators);
    let reports = [&characterization, &lemma, &fast, &inequality, &converse, &operators];

    let mut lines: Vec<(usize, &str, Outcome)> = Vec::new();

    let mut o = summarize(&select(&characterization, &["characterization-"]));
    let shape = trials_of(&characterization) == 200
        && characterization.parameters.max_depth <= 5
        && characterization.parameters.max_branch <= 3
        && characterization.cases.iter().all(|c| c.depth <= 5);
    o.passed &= shape && t1 < 30.0;
    o.detail.push_str(&format!(", {} trees, {t1:.2} s", trials_of(&characterization)));
    lines.push((1, "characterization identity", o));

    let mut o = summarize(&select(&lemma, &["lemma"]));
    o.passed &= trials_of(&lemma) == 100 && lemma.parameters.max_stopping_times <= 30;
    o.detail.push_str(&format!(", {} trees", trials_of(&lemma)));
    lines.push((2, "stopping-time form equals subset form", o));

    let mut defs = select(&characterization, &["definition-omega"]);
    defs.extend(select(&lemma, &["definition-omega"]));
    lines.push((3, "definition form equals omega form", summarize(&defs)));

    let mut o = summarize(&select(&fast, &["atom-fast", "node-fast"]));
    o.passed &= trials_of(&fast) == 100;
    lines.push((4, "fast paths equal brute force", o));

    let mut o = summarize(&select(&inequality, &["inequality", "layer-cake", "converse-"]));
    o.passed &= trials_of(&inequality) == 500;
    let weak = inequality.checks.get("inequality-weak").map_or(0, |c| c.failures);
    o.detail.push_str(&format!(", weak-norm form failures {weak}"));
    lines.push((5, "Carleson inequality", o));

    let mut o = summarize(&select(&converse, &["indicator-", "converse-"]));
    let violated = converse.checks.get("converse-violated").map_or(0, |c| c.cases);
    o.passed &= violated > 0 && converse.parameters.max_stopping_times <= 26;
    o.detail.push_str(&format!(", {violated} reduced-constant runs"));
    lines.push((6, "converse construction", o));

    let mut o = summarize(&select(
        &operators,
        &["transform-bound", "transform-equality", "lift-isometry", "square-bound", "square-pointwise"],
    ));
    o.passed &= trials_of(&operators) == 100;
    lines.push((7, "operator bounds", o));

    let mut o = summarize(&select(&operators, &["maximal-pointwise", "maximal-indicator"]));
    let ratio = operators.checks.get("maximal-ratio").map_or(f64::NAN, |c| c.max_residual);
    o.passed &= trials_of(&operators) == 100;
    o.detail.push_str(&format!(", largest recorded BMO ratio of the maximal function {ratio:.4}"));
    lines.push((8, "maximal operator invariants", o));

    let mut identical = 0;
    for r in reports {
        let (again, _) = suite(r.suite);
        identical += usize::from(again.to_json(true) == r.to_json(true));
    }
    let mut o = bit_exact_round_trips();
    o.passed &= identical == reports.len();
    o.detail = format!("{identical}/{} suites rerun byte-identical; {}", reports.len(), o.detail);
    lines.push((9, "determinism and format", o));

    let mut all = true;
    for (n, name, o) in &lines {
        all &= o.passed;
        println!("criterion {n} {name}: {} ({})", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {}", if all { "PASS" } else { "FAIL" });
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
