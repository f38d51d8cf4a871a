//! Seeded verification suites.
//!
//! Each suite runs `trials` independent trials in parallel. Trial `i` draws
//! everything from its own seed `derive_seed(seed, i)`, and streams inside a
//! trial use `derive_seed(trial_seed, j)`, so any case can be replayed from the
//! seed stored in its record. Reports are assembled in trial order; the only
//! nondeterministic field is the wall-clock time, which comparison mode drops.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::carleson::{
    carleson_alpha_norm, carleson_inequality_check, converse_extraction, from_martingale,
    random_measure, tent_mass, CarlesonMeasure,
};
use crate::error::{Error, Result};
use crate::filtration::{build_dyadic, build_random, FiltrationTree};
use crate::norms::{
    bmo_alpha_norm, bmo_ratio, conditional_bmo_alpha_norm, process_bmo_alpha_norm, Alpha, Mode,
};
use crate::operators::{l2_lift, maximal, square_function, transform};
use crate::process::{
    dist_sq, norm, random_adapted, random_martingale, AdaptedProcess, Martingale,
    PredictableSequence,
};
use crate::stopping::{
    count_stopping_times, enumerate_stopping_times, indicator_process, random_stopping_time,
};
use crate::tolerance::{
    rel_diff, IDENTITY_REL, INEQUALITY_SLACK, MODE_AGREEMENT_REL, REEVAL_REL,
};

pub const REPORT_SCHEMA: &str = "report/v1";

pub const SEED_SCHEME: &str = "splitmix64: trial_seed = derive(seed, trial), stream_j = derive(trial_seed, j), derive(s, i) = mix(s ^ mix(i))";

/// The SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(parent: u64, index: u64) -> u64 {
    splitmix64(parent ^ splitmix64(index))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    /// `sqrt(|||mu_f|||_alpha) = ||f||_{BMO^alpha}` and the omega form.
    Characterization,
    /// Stopping-time form of the norm against the subset form.
    Lemma,
    /// Fast scans against brute force, for both norms.
    FastPaths,
    /// The Carleson inequality and the converse with the optimal constant.
    CarlesonInequality,
    /// Indicator processes and converse extraction on enumerable trees.
    Converse,
    /// Transform, lift, square function and maximal function.
    Operators,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Characterization,
        Suite::Lemma,
        Suite::FastPaths,
        Suite::CarlesonInequality,
        Suite::Converse,
        Suite::Operators,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Characterization => "characterization",
            Suite::Lemma => "lemma",
            Suite::FastPaths => "fast-paths",
            Suite::CarlesonInequality => "carleson-inequality",
            Suite::Converse => "converse",
            Suite::Operators => "operators",
        }
    }

    /// Default parameters for the suite.
    pub fn config(self) -> SuiteConfig {
        let base = SuiteConfig {
            trials: 100,
            seed: 0,
            alphas: vec![0.0, 0.25, 0.5, 0.9],
            ps: Vec::new(),
            family: TreeFamily::Random,
            max_depth: 3,
            max_branch: 3,
            max_stopping_times: 1 << 14,
            tolerances: Tolerances::default(),
        };
        match self {
            Suite::Characterization => SuiteConfig {
                trials: 200,
                max_depth: 5,
                ..base
            },
            Suite::Lemma => SuiteConfig {
                max_stopping_times: 30,
                ..base
            },
            Suite::FastPaths => base,
            Suite::CarlesonInequality => SuiteConfig {
                trials: 500,
                alphas: vec![0.1, 0.25, 0.45],
                ps: vec![1.5, 2.0, 3.0],
                family: TreeFamily::Dyadic,
                max_depth: 3,
                max_branch: 2,
                ..base
            },
            Suite::Converse => SuiteConfig {
                alphas: vec![0.1, 0.25, 0.45, 0.9],
                ps: vec![2.0],
                max_stopping_times: 26,
                ..base
            },
            Suite::Operators => SuiteConfig {
                max_depth: 4,
                ..base
            },
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Suite::ALL.iter().map(|x| x.as_str()).collect();
                Error::Argument(format!("unknown suite {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreeFamily {
    /// Uniform binary trees of depth exactly `max_depth`.
    Dyadic,
    /// Random trees, depth uniform in `1..=max_depth`, branching `1..=max_branch`.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub trials: usize,
    pub seed: u64,
    pub alphas: Vec<f64>,
    pub ps: Vec<f64>,
    pub family: TreeFamily,
    pub max_depth: usize,
    pub max_branch: usize,
    /// Trees are redrawn until they have at most this many stopping times
    /// (suites that enumerate only).
    pub max_stopping_times: u128,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative, for identities exact at desk scale.
    pub identity: f64,
    /// Relative, for two computation modes of the same quantity.
    pub mode_agreement: f64,
    /// Relative, for re-evaluations of the same formula.
    pub reeval: f64,
    /// Additive slack on inequalities.
    pub inequality_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            identity: IDENTITY_REL,
            mode_agreement: MODE_AGREEMENT_REL,
            reeval: REEVAL_REL,
            inequality_slack: INEQUALITY_SLACK,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    /// `residual = rel_diff(lhs, rhs) <= tolerance`.
    Identity,
    /// `residual = lhs - rhs <= tolerance`.
    Inequality,
    /// A boolean property; `residual` is the size of the worst violation.
    Invariant,
    /// Recorded, never asserted; `residual = lhs / rhs`.
    Record,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub check: String,
    pub kind: CheckKind,
    pub trial: usize,
    pub seed: u64,
    pub depth: usize,
    pub alpha: Option<f64>,
    pub p: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// The failing instance, inline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay: Option<Value>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub cases: usize,
    pub failures: usize,
    /// Largest residual (for records: largest ratio).
    pub max_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema: String,
    pub suite: Suite,
    pub parameters: SuiteConfig,
    pub seed_scheme: String,
    pub checks: BTreeMap<String, CheckSummary>,
    pub cases: Vec<CaseRecord>,
    pub failures: usize,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_ms: Option<u128>,
}

pub const CSV_HEADER: &str = "suite,alpha,p,depth,seed,lhs,rhs,residual,verdict";

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Pretty JSON; `comparison` drops the wall-clock field so that reruns
    /// compare byte for byte.
    pub fn to_json(&self, comparison: bool) -> String {
        let mut r = self.clone();
        if comparison {
            r.wall_clock_ms = None;
        }
        serde_json::to_string_pretty(&r).expect("report serializes")
    }

    /// One row per case; the suite column is `suite:check`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for c in &self.cases {
            out.push_str(&csv_row(&format!("{}:{}", self.suite, c.check), c));
        }
        out
    }

    /// Failing cases, in order.
    pub fn failures(&self) -> impl Iterator<Item = &CaseRecord> {
        self.cases.iter().filter(|c| !c.passed)
    }
}

pub fn csv_row(suite: &str, c: &CaseRecord) -> String {
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    format!(
        "{suite},{},{},{},{},{},{},{},{}\n",
        opt(c.alpha),
        opt(c.p),
        c.depth,
        c.seed,
        c.lhs,
        c.rhs,
        c.residual,
        if c.passed { "pass" } else { "fail" }
    )
}

/// Case collector for one trial.
struct Trial {
    tol: Tolerances,
    trial: usize,
    seed: u64,
    depth: usize,
    cases: Vec<CaseRecord>,
}

impl Trial {
    fn new(tol: Tolerances, trial: usize, seed: u64) -> Self {
        Trial {
            tol,
            trial,
            seed,
            depth: 0,
            cases: Vec::new(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        check: &str,
        kind: CheckKind,
        alpha: Option<f64>,
        p: Option<f64>,
        lhs: f64,
        rhs: f64,
        residual: f64,
        tolerance: f64,
        passed: bool,
    ) {
        self.cases.push(CaseRecord {
            check: check.to_string(),
            kind,
            trial: self.trial,
            seed: self.seed,
            depth: self.depth,
            alpha,
            p,
            lhs,
            rhs,
            residual,
            tolerance,
            passed,
            note: None,
            replay: None,
        });
    }

    fn identity(&mut self, check: &str, alpha: Option<f64>, p: Option<f64>, lhs: f64, rhs: f64, tol: f64) {
        let r = rel_diff(lhs, rhs);
        self.push(check, CheckKind::Identity, alpha, p, lhs, rhs, r, tol, r <= tol);
    }

    fn inequality(&mut self, check: &str, alpha: Option<f64>, p: Option<f64>, lhs: f64, rhs: f64) {
        let r = lhs - rhs;
        self.push(
            check,
            CheckKind::Inequality,
            alpha,
            p,
            lhs,
            rhs,
            r,
            self.tol.inequality_slack,
            r <= self.tol.inequality_slack,
        );
    }

    fn invariant(&mut self, check: &str, alpha: Option<f64>, p: Option<f64>, ok: bool, violation: f64) {
        self.push(check, CheckKind::Invariant, alpha, p, violation, 0.0, violation, 0.0, ok);
    }

    fn record(&mut self, check: &str, alpha: Option<f64>, p: Option<f64>, lhs: f64, rhs: f64) {
        let ratio = if rhs == 0.0 { 0.0 } else { lhs / rhs };
        self.push(check, CheckKind::Record, alpha, p, lhs, rhs, ratio, 0.0, true);
    }

    fn error(&mut self, err: &Error) {
        self.push("error", CheckKind::Invariant, None, None, 0.0, 0.0, 0.0, 0.0, false);
        self.cases.last_mut().expect("just pushed").note = Some(err.to_string());
    }

    /// Attaches the instance to every failing case.
    fn finish(mut self, instance: impl FnOnce() -> Value) -> Vec<CaseRecord> {
        if self.cases.iter().any(|c| !c.passed) {
            let v = instance();
            for c in self.cases.iter_mut().filter(|c| !c.passed) {
                c.replay = Some(v.clone());
            }
        }
        self.cases
    }
}

fn alpha(x: f64) -> Result<Alpha> {
    Alpha::new(x)
}

/// Draws a tree for the configured family from stream 0 of the trial.
fn draw_tree(cfg: &SuiteConfig, trial_seed: u64) -> Result<Arc<FiltrationTree>> {
    match cfg.family {
        TreeFamily::Dyadic => Ok(Arc::new(build_dyadic(cfg.max_depth)?)),
        TreeFamily::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(trial_seed, 0));
            let depth = rng.random_range(1..=cfg.max_depth.max(1));
            Ok(Arc::new(build_random(
                derive_seed(trial_seed, 1),
                depth,
                cfg.max_branch,
            )?))
        }
    }
}

/// Redraws until the tree has at most `max_stopping_times` stopping times.
fn draw_enumerable_tree(cfg: &SuiteConfig, trial_seed: u64) -> Result<Arc<FiltrationTree>> {
    for attempt in 0..10_000u64 {
        let t = draw_tree(cfg, derive_seed(trial_seed, 1000 + attempt))?;
        if count_stopping_times(&t) <= cfg.max_stopping_times {
            return Ok(t);
        }
    }
    Err(Error::Argument(format!(
        "no tree with at most {} stopping times found for this family",
        cfg.max_stopping_times
    )))
}

fn instance(f: Option<&Martingale>, g: Option<&AdaptedProcess>, mu: Option<&CarlesonMeasure>) -> Value {
    let mut v = serde_json::Map::new();
    if let Some(f) = f {
        v.insert("martingale".into(), serde_json::to_value(f.to_document()).expect("json"));
    }
    if let Some(g) = g {
        v.insert("process".into(), serde_json::to_value(g.to_document()).expect("json"));
    }
    if let Some(mu) = mu {
        v.insert("measure".into(), serde_json::to_value(mu.to_document()).expect("json"));
    }
    Value::Object(v)
}

fn characterization_trial(cfg: &SuiteConfig, t: &mut Trial) -> Result<Value> {
    let tree = draw_tree(cfg, t.seed)?;
    t.depth = tree.depth();
    let scalar = random_martingale(&tree, derive_seed(t.seed, 2), 1)?;
    let vector = random_martingale(&tree, derive_seed(t.seed, 3), 3)?;
    for f in [&scalar, &vector] {
        let mu = from_martingale(f);
        for &a in &cfg.alphas {
            let al = alpha(a)?;
            let bmo = bmo_alpha_norm(f, al, Mode::AtomFast)?;
            let car = carleson_alpha_norm(&mu, al, Mode::NodeFast)?;
            let tag = if f.dim() == 1 { "scalar" } else { "vector" };
            t.identity(&format!("characterization-{tag}"), Some(a), None, car.value.sqrt(), bmo.value, t.tol.identity);
            let omega = bmo_alpha_norm(f, al, Mode::OmegaForm)?;
            t.identity(&format!("definition-omega-{tag}"), Some(a), None, bmo.value, omega.value, t.tol.reeval);
            let replay = bmo_ratio(f, al, &bmo.witness)?;
            t.identity(&format!("witness-replay-{tag}"), Some(a), None, replay, bmo.value, t.tol.reeval);
        }
    }
    Ok(json!({
        "scalar": serde_json::to_value(scalar.to_document())?,
        "vector": serde_json::to_value(vector.to_document())?,
    }))
}

fn lemma_trial(cfg: &SuiteConfig, t: &mut Trial) -> Result<Value> {
    let tree = draw_enumerable_tree(cfg, t.seed)?;
    t.depth = tree.depth();
    let dim = 1 + t.trial % 2;
    let f = random_martingale(&tree, derive_seed(t.seed, 2), dim)?;
    for &a in &cfg.alphas {
        let al = alpha(a)?;
        let subset = bmo_alpha_norm(&f, al, Mode::SubsetBruteforce)?;
        let stopping = bmo_alpha_norm(&f, al, Mode::StoppingBruteforce)?;
        let omega = bmo_alpha_norm(&f, al, Mode::OmegaForm)?;
        t.identity("lemma", Some(a), None, stopping.value, subset.value, t.tol.mode_agreement);
        t.identity("definition-omega", Some(a), None, subset.value, omega.value, t.tol.reeval);
        let replay = bmo_ratio(&f, al, &stopping.witness)?;
        t.identity("witness-replay", Some(a), None, replay, stopping.value, t.tol.reeval);
    }
    Ok(instance(Some(&f), None, None))
}

fn fast_paths_trial(cfg: &SuiteConfig, t: &mut Trial) -> Result<Value> {
    let tree = draw_enumerable_tree(cfg, t.seed)?;
    t.depth = tree.depth();
    let f = random_martingale(&tree, derive_seed(t.seed, 2), 1 + t.trial % 3)?;
    let mu = random_measure(&tree, derive_seed(t.seed, 3), 2.0);
    let mu_f = from_martingale(&f);
    for &a in &cfg.alphas {
        let al = alpha(a)?;
        let fast = bmo_alpha_norm(&f, al, Mode::AtomFast)?;
        let brute = bmo_alpha_norm(&f, al, Mode::SubsetBruteforce)?;
        t.identity("atom-fast", Some(a), None, fast.value, brute.value, t.tol.mode_agreement);
        if a < 1.0 {
            for (name, m) in [("node-fast", &mu), ("node-fast-martingale", &mu_f)] {
                let fast = carleson_alpha_norm(m, al, Mode::NodeFast)?;
                let brute = carleson_alpha_norm(m, al, Mode::StoppingBruteforce)?;
                t.identity(name, Some(a), None, fast.value, brute.value, t.tol.mode_agreement);
            }
        }
    }
    Ok(instance(Some(&f), None, Some(&mu)))
}

fn carleson_inequality_trial(cfg: &SuiteConfig, t: &mut Trial) -> Result<Value> {
    let tree = draw_tree(cfg, t.seed)?;
    t.depth = tree.depth();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(t.seed, 2));
    let scale = rng.random_range(0.1..10.0);
    let g = random_adapted(&tree, derive_seed(t.seed, 3), 1)?;
    let g = AdaptedProcess::new(
        tree.clone(),
        1,
        g.levels()
            .iter()
            .map(|l| l.iter().map(|v| v * scale).collect())
            .collect(),
    )?;
    // odd trials use the measure of a martingale
    let mu = if t.trial % 2 == 0 {
        random_measure(&tree, derive_seed(t.seed, 4), 3.0)
    } else {
        from_martingale(&random_martingale(&tree, derive_seed(t.seed, 4), 1)?)
    };
    for &a in &cfg.alphas {
        let al = alpha(a)?;
        for &p in &cfg.ps {
            let rec = carleson_inequality_check(&g, &mu, p, al)?;
            t.inequality("inequality", Some(a), Some(p), rec.lhs, rec.rhs);
            t.inequality("inequality-weak", Some(a), Some(p), rec.lhs, rec.rhs_weak);
            t.identity("layer-cake", Some(a), Some(p), rec.lhs_layer_cake, rec.lhs, t.tol.mode_agreement);
        }
        let p = cfg.ps.first().copied().unwrap_or(2.0);
        let c_p = carleson_alpha_norm(&mu, al, Mode::NodeFast)?.value;
        let conv = converse_extraction(&mu, al, c_p, p)?;
        t.invariant(
            "converse-satisfied",
            Some(a),
            Some(p),
            conv.norm_bound_satisfied && conv.lhs_matches_tent && conv.maximal_matches,
            (conv.max_ratio - c_p).max(0.0),
        );
        t.identity("converse-equality", Some(a), Some(p), conv.max_ratio, c_p, t.tol.mode_agreement);
    }
    Ok(instance(None, Some(&g), Some(&mu)))
}

fn converse_trial(cfg: &SuiteConfig, t: &mut Trial) -> Result<Value> {
    let tree = draw_enumerable_tree(cfg, t.seed)?;
    t.depth = tree.depth();
    let mu = if t.trial % 2 == 0 {
        random_measure(&tree, derive_seed(t.seed, 2), 2.0)
    } else {
        from_martingale(&random_martingale(&tree, derive_seed(t.seed, 2), 1)?)
    };
    let p = cfg.ps.first().copied().unwrap_or(2.0);

    let mut lhs_ok = true;
    let mut max_ok = true;
    for tau in enumerate_stopping_times(&tree)? {
        let ind = indicator_process(&tau);
        lhs_ok &= crate::carleson::inequality_lhs(&ind, &mu, p)? == tent_mass(&mu, &tau)?;
        let finite = tau.leaf_values();
        max_ok &= maximal(&ind)
            .0
            .values()
            .iter()
            .zip(&finite)
            .all(|(m, f)| *m == if f.is_some() { 1.0 } else { 0.0 });
    }
    t.invariant("indicator-lhs-equals-tent", None, Some(p), lhs_ok, if lhs_ok { 0.0 } else { 1.0 });
    t.invariant("indicator-maximal", None, Some(p), max_ok, if max_ok { 0.0 } else { 1.0 });

    for &a in &cfg.alphas {
        let al = alpha(a)?;
        let c_p = carleson_alpha_norm(&mu, al, Mode::NodeFast)?.value;
        let ok = converse_extraction(&mu, al, c_p, p)?;
        t.invariant(
            "converse-satisfied",
            Some(a),
            Some(p),
            ok.norm_bound_satisfied && ok.cross_check,
            (ok.max_ratio - c_p).max(0.0),
        );
        if ok.max_ratio > 0.0 {
            let reduced = ok.max_ratio - 1e-6;
            let bad = converse_extraction(&mu, al, reduced, p)?;
            t.invariant(
                "converse-violated",
                Some(a),
                Some(p),
                !bad.norm_bound_satisfied,
                if bad.norm_bound_satisfied { 1.0 } else { 0.0 },
            );
        }
    }
    Ok(instance(None, None, Some(&mu)))
}

fn operators_trial(cfg: &SuiteConfig, t: &mut Trial) -> Result<Value> {
    let tree = draw_tree(cfg, t.seed)?;
    t.depth = tree.depth();
    let f = random_martingale(&tree, derive_seed(t.seed, 2), 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(t.seed, 3));
    let predictable = |rng: &mut ChaCha8Rng, gen: &mut dyn FnMut(&mut ChaCha8Rng) -> f64| {
        let values = (0..=tree.depth())
            .map(|k| (0..tree.num_atoms(k.max(1) - 1)).map(|_| gen(rng)).collect())
            .collect();
        PredictableSequence::new(tree.clone(), values)
    };
    let v = predictable(&mut rng, &mut |r| r.random_range(-2.0..2.0))?;
    let c = rng.random_range(0.5..2.0);
    let signs = predictable(&mut rng, &mut |r| if r.random_bool(0.5) { c } else { -c })?;

    let tf = transform(&f, &v)?;
    let sf = transform(&f, &signs)?;
    let u = l2_lift(&f)?;
    let s = square_function(&f);

    // |S_N - S_{n-1}| <= ||U_N - U_{n-1}|| on every leaf and level
    let mut worst = f64::NEG_INFINITY;
    let last = tree.depth();
    for n in 0..=last {
        for (i, atom) in tree.level(n).iter().enumerate() {
            let s_prev = s.previous(n, i).map_or(0.0, |x| x[0]);
            let zero = vec![0.0; u.dim()];
            let u_prev = u.previous(n, i).unwrap_or(&zero);
            for leaf in atom.leaves.clone() {
                let lhs = (s.value(last, leaf)[0] - s_prev).abs();
                let rhs = dist_sq(u.value(last, leaf), u_prev).sqrt();
                worst = worst.max(lhs - rhs);
            }
        }
    }
    t.invariant("square-pointwise", None, None, worst <= t.tol.reeval, worst.max(0.0));

    for &a in &cfg.alphas {
        let al = alpha(a)?;
        let nf = bmo_alpha_norm(&f, al, Mode::AtomFast)?.value;
        let ntf = bmo_alpha_norm(&tf, al, Mode::AtomFast)?.value;
        t.inequality("transform-bound", Some(a), None, ntf, v.bound() * nf);
        let nsf = bmo_alpha_norm(&sf, al, Mode::AtomFast)?.value;
        t.identity("transform-equality", Some(a), None, nsf, c * nf, t.tol.identity);
        let nu = bmo_alpha_norm(&u, al, Mode::AtomFast)?.value;
        t.identity("lift-isometry", Some(a), None, nu, nf, t.tol.identity);
        let ns = process_bmo_alpha_norm(&s, al);
        t.inequality("square-bound", Some(a), None, ns, nf);
        t.record("square-conditional-ratio", Some(a), None, conditional_bmo_alpha_norm(&s, al), nf);
        let (_, running) = maximal(&f);
        t.record("maximal-ratio", Some(a), None, process_bmo_alpha_norm(&running, al), nf);
    }

    // maximal function invariants on f and on an arbitrary adapted process
    let g = random_adapted(&tree, derive_seed(t.seed, 4), 2)?;
    for (name, p) in [("maximal-pointwise", f.process()), ("maximal-pointwise-vector", &g)] {
        let (mg, running) = maximal(p);
        let mut worst = 0.0_f64;
        for n in 0..=last {
            let anc = tree.leaf_ancestors(n);
            for leaf in 0..tree.num_leaves() {
                worst = worst.max(norm(p.value(n, anc[leaf])) - mg.values()[leaf]);
                worst = worst.max(norm(p.value(n, anc[leaf])) - running.value(n, anc[leaf])[0]);
                if n > 0 {
                    let prev = running.value(n - 1, tree.leaf_ancestors(n - 1)[leaf])[0];
                    worst = worst.max(prev - running.value(n, anc[leaf])[0]);
                }
            }
        }
        t.invariant(name, None, None, worst <= 0.0, worst);
    }
    let mut ok = true;
    for j in 0..8 {
        let tau = random_stopping_time(&tree, derive_seed(t.seed, 10 + j), 0.3);
        let (m, _) = maximal(&indicator_process(&tau));
        let finite = tau.leaf_values();
        ok &= m
            .values()
            .iter()
            .zip(&finite)
            .all(|(x, f)| *x == if f.is_some() { 1.0 } else { 0.0 });
    }
    t.invariant("maximal-indicator", None, None, ok, if ok { 0.0 } else { 1.0 });
    Ok(instance(Some(&f), None, None))
}

type TrialFn = fn(&SuiteConfig, &mut Trial) -> Result<Value>;

fn trial_fn(suite: Suite) -> TrialFn {
    match suite {
        Suite::Characterization => characterization_trial,
        Suite::Lemma => lemma_trial,
        Suite::FastPaths => fast_paths_trial,
        Suite::CarlesonInequality => carleson_inequality_trial,
        Suite::Converse => converse_trial,
        Suite::Operators => operators_trial,
    }
}

/// Runs trial `trial` alone; its cases are identical to those in the full report.
pub fn run_trial(suite: Suite, cfg: &SuiteConfig, trial: usize) -> Vec<CaseRecord> {
    let mut t = Trial::new(cfg.tolerances, trial, derive_seed(cfg.seed, trial as u64));
    match trial_fn(suite)(cfg, &mut t) {
        Ok(inst) => t.finish(|| inst),
        Err(e) => {
            t.error(&e);
            t.finish(|| Value::Null)
        }
    }
}

fn validate(cfg: &SuiteConfig) -> Result<()> {
    if let Some(a) = cfg.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::out_of_range("alpha", a, "[0, 1]"));
    }
    if let Some(p) = cfg.ps.iter().find(|p| !(p.is_finite() && **p > 1.0)) {
        return Err(Error::out_of_range("p", p, "(1, inf)"));
    }
    if cfg.max_branch == 0 {
        return Err(Error::out_of_range("max_branch", 0, ">= 1"));
    }
    validate_tolerances(&cfg.tolerances)
}

fn validate_tolerances(t: &Tolerances) -> Result<()> {
    for (name, v) in [
        ("identity tolerance", t.identity),
        ("mode-agreement tolerance", t.mode_agreement),
        ("re-evaluation tolerance", t.reeval),
        ("inequality slack", t.inequality_slack),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::out_of_range(name, v, "[0, inf)"));
        }
    }
    Ok(())
}

/// Parameter ranges a suite needs beyond the generic checks.
fn validate_for(suite: Suite, cfg: &SuiteConfig) -> Result<()> {
    validate(cfg)?;
    let need_open = matches!(suite, Suite::CarlesonInequality | Suite::Converse);
    if need_open {
        if let Some(a) = cfg.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::out_of_range("alpha", a, "(0, 1) for this suite"));
        }
    }
    if matches!(suite, Suite::Characterization) {
        if let Some(a) = cfg.alphas.iter().find(|a| **a >= 1.0) {
            return Err(Error::out_of_range("alpha", a, "[0, 1) for this suite"));
        }
    }
    if matches!(suite, Suite::CarlesonInequality) && cfg.ps.is_empty() {
        return Err(Error::Argument("carleson-inequality needs at least one p".into()));
    }
    Ok(())
}

pub fn run_suite(suite: Suite, cfg: &SuiteConfig) -> Result<VerificationReport> {
    validate_for(suite, cfg)?;
    let start = Instant::now();
    let cases: Vec<CaseRecord> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| run_trial(suite, cfg, i))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let mut checks: BTreeMap<String, CheckSummary> = BTreeMap::new();
    for c in &cases {
        let e = checks.entry(c.check.clone()).or_insert(CheckSummary {
            cases: 0,
            failures: 0,
            max_residual: f64::NEG_INFINITY,
        });
        e.cases += 1;
        e.failures += usize::from(!c.passed);
        e.max_residual = e.max_residual.max(c.residual);
    }
    let failures = cases.iter().filter(|c| !c.passed).count();
    Ok(VerificationReport {
        schema: REPORT_SCHEMA.to_string(),
        suite,
        parameters: cfg.clone(),
        seed_scheme: SEED_SCHEME.to_string(),
        checks,
        cases,
        failures,
        verdict: if failures == 0 { Verdict::Pass } else { Verdict::Fail },
        wall_clock_ms: Some(start.elapsed().as_millis()),
    })
}

pub fn check_characterization(cfg: &SuiteConfig) -> Result<VerificationReport> {
    run_suite(Suite::Characterization, cfg)
}

pub fn check_lemma_stopping_form(cfg: &SuiteConfig) -> Result<VerificationReport> {
    run_suite(Suite::Lemma, cfg)
}

pub fn check_carleson_inequality(cfg: &SuiteConfig) -> Result<VerificationReport> {
    run_suite(Suite::CarlesonInequality, cfg)
}

pub fn check_operators(cfg: &SuiteConfig) -> Result<VerificationReport> {
    run_suite(Suite::Operators, cfg)
}

/// A grid over alpha, p and depth. Without `ps` every row is a
/// characterization check; with `ps` every row is a Carleson inequality check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub seed: u64,
    pub trials: usize,
    pub alphas: Vec<f64>,
    pub ps: Vec<f64>,
    pub depths: Vec<usize>,
    pub max_branch: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// Rows ordered by alpha, then p, then depth, then trial. The trial seed is
/// `derive(derive(seed, depth), trial)`, so every alpha and p sees the same
/// instances at a given depth.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<Vec<CaseRecord>> {
    validate_tolerances(&cfg.tolerances)?;
    if cfg.max_branch == 0 {
        return Err(Error::out_of_range("max_branch", 0, ">= 1"));
    }
    for &a in &cfg.alphas {
        let ok = if cfg.ps.is_empty() {
            (0.0..1.0).contains(&a)
        } else {
            a > 0.0 && a < 1.0
        };
        if !ok {
            let allowed = if cfg.ps.is_empty() { "[0, 1)" } else { "(0, 1)" };
            return Err(Error::out_of_range("alpha", a, allowed));
        }
    }
    if let Some(p) = cfg.ps.iter().find(|p| !(p.is_finite() && **p > 1.0)) {
        return Err(Error::out_of_range("p", p, "(1, inf)"));
    }
    let ps: Vec<Option<f64>> = if cfg.ps.is_empty() {
        vec![None]
    } else {
        cfg.ps.iter().copied().map(Some).collect()
    };
    let mut jobs = Vec::new();
    for &a in &cfg.alphas {
        for &p in &ps {
            for &d in &cfg.depths {
                for trial in 0..cfg.trials {
                    jobs.push((a, p, d, trial));
                }
            }
        }
    }
    Ok(jobs
        .into_par_iter()
        .map(|(a, p, depth, trial)| {
            let seed = derive_seed(derive_seed(cfg.seed, depth as u64), trial as u64);
            let mut t = Trial::new(cfg.tolerances, trial, seed);
            t.depth = depth;
            if let Err(e) = campaign_case(&mut t, cfg.max_branch, a, p) {
                t.error(&e);
            }
            t.finish(|| Value::Null)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect())
}

fn campaign_case(t: &mut Trial, max_branch: usize, a: f64, p: Option<f64>) -> Result<()> {
    let tree = Arc::new(build_random(derive_seed(t.seed, 0), t.depth, max_branch)?);
    let al = alpha(a)?;
    match p {
        None => {
            let f = random_martingale(&tree, derive_seed(t.seed, 1), 1)?;
            let car = carleson_alpha_norm(&from_martingale(&f), al, Mode::NodeFast)?;
            let bmo = bmo_alpha_norm(&f, al, Mode::AtomFast)?;
            t.identity("characterization", Some(a), None, car.value.sqrt(), bmo.value, t.tol.identity);
        }
        Some(p) => {
            let g = random_adapted(&tree, derive_seed(t.seed, 1), 1)?;
            let mu = random_measure(&tree, derive_seed(t.seed, 2), 1.0);
            let rec = carleson_inequality_check(&g, &mu, p, al)?;
            t.inequality("inequality", Some(a), Some(p), rec.lhs, rec.rhs);
        }
    }
    Ok(())
}

/// CSV for campaign rows; the suite column is `campaign:check`.
pub fn campaign_csv(rows: &[CaseRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in rows {
        out.push_str(&csv_row(&format!("campaign:{}", c.check), c));
    }
    out
}
