//! Fractional Carleson measures on `Omega x {0, .., N}`.
//!
//! A measure is given by densities `mu_k >= 0` on the leaves, so that
//! `mu(E) = sum_{(leaf, k) in E} mu_k(leaf) P(leaf)`. Its `alpha`-norm is
//! `sup_tau mu(tent(tau)) / P(tau < inf)^{1+2 alpha}`. The tent of a stopping
//! time is the disjoint union of the tents of its stop atoms, so the same
//! mediant bound as for `BMO^alpha` puts the supremum on a single node; that
//! is the [`Mode::NodeFast`] path.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtration::{AtomRef, FiltrationTree};
use crate::norms::{direct_sum, layer_cake_points, lp_norm, weak_lq_norm, Alpha, Mode, NormResult, Witness};
use crate::operators::maximal;
use crate::process::{differences, norm, norm_sq, same_tree, AdaptedProcess, Martingale, TreeRef};
use crate::stopping::{
    enumerate_stopping_times, for_each_stopping_time, indicator_process, max_enum, StoppingTime,
};
use crate::tolerance::{rel_eq, INEQUALITY_SLACK, MODE_AGREEMENT_REL};

pub const MEASURE_SCHEMA: &str = "measure/v1";

#[derive(Clone, Debug)]
pub struct CarlesonMeasure {
    tree: Arc<FiltrationTree>,
    /// `densities[k][leaf]`.
    densities: Vec<Vec<f64>>,
}

impl PartialEq for CarlesonMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.densities == other.densities && *self.tree == *other.tree
    }
}

impl CarlesonMeasure {
    pub fn new(tree: Arc<FiltrationTree>, densities: Vec<Vec<f64>>) -> Result<Self> {
        if densities.len() != tree.depth() + 1 {
            return Err(Error::validation(
                "measure",
                "densities",
                format!("expected {} levels, got {}", tree.depth() + 1, densities.len()),
            ));
        }
        for (k, d) in densities.iter().enumerate() {
            if d.len() != tree.num_leaves() {
                return Err(Error::validation(
                    "measure",
                    format!("densities[{k}]"),
                    format!("expected {} leaf values, got {}", tree.num_leaves(), d.len()),
                ));
            }
            if let Some(i) = d.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::validation(
                    "measure",
                    format!("densities[{k}][{i}]"),
                    format!("density {} is not a finite nonnegative number", d[i]),
                ));
            }
        }
        Ok(CarlesonMeasure { tree, densities })
    }

    pub fn zero(tree: Arc<FiltrationTree>) -> Self {
        let densities = vec![vec![0.0; tree.num_leaves()]; tree.depth() + 1];
        CarlesonMeasure { tree, densities }
    }

    pub fn tree(&self) -> &Arc<FiltrationTree> {
        &self.tree
    }

    pub fn densities(&self) -> &[Vec<f64>] {
        &self.densities
    }

    pub fn density(&self, k: usize) -> &[f64] {
        &self.densities[k]
    }

    /// `mu(Omega x {0..N})`.
    pub fn total_mass(&self) -> f64 {
        self.sum_where(|_, _| true)
    }

    /// `mu` of the set of `(leaf, k)` accepted by `keep`, summed with `k`
    /// outermost and leaves left to right.
    fn sum_where(&self, keep: impl Fn(usize, usize) -> bool) -> f64 {
        let mut total = 0.0;
        for (k, d) in self.densities.iter().enumerate() {
            for (leaf, v) in d.iter().enumerate() {
                if keep(leaf, k) {
                    total += v * self.tree.leaf_mass(leaf);
                }
            }
        }
        total
    }

    pub fn to_document(&self) -> MeasureDocument {
        MeasureDocument {
            schema: MEASURE_SCHEMA.to_string(),
            tree: Some(TreeRef::Inline(self.tree.to_document())),
            densities: self.densities.clone(),
        }
    }

    /// Loads a measure; `tree` is used when the document carries none.
    pub fn from_document(
        doc: &MeasureDocument,
        tree: Option<Arc<FiltrationTree>>,
        base: Option<&std::path::Path>,
    ) -> Result<Self> {
        if doc.schema != MEASURE_SCHEMA {
            return Err(Error::Schema {
                expected: MEASURE_SCHEMA,
                found: doc.schema.clone(),
            });
        }
        let tree = match (&doc.tree, tree) {
            (Some(r), _) => Arc::new(r.resolve(base)?),
            (None, Some(t)) => t,
            (None, None) => {
                return Err(Error::validation(
                    "measure",
                    "tree",
                    "no tree in the document and none supplied",
                ))
            }
        };
        Self::new(tree, doc.densities.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("measure serializes")
    }

    pub fn from_json(s: &str, tree: Option<Arc<FiltrationTree>>) -> Result<Self> {
        Self::from_document(&crate::error::parse_json(s)?, tree, None)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasureDocument {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeRef>,
    pub densities: Vec<Vec<f64>>,
}

fn check_alpha(alpha: Alpha) -> Result<()> {
    if alpha.get() >= 1.0 {
        return Err(Error::out_of_range("alpha", alpha.get(), "[0, 1)"));
    }
    Ok(())
}

/// `mu(tent(tau))`.
pub fn tent_mass(mu: &CarlesonMeasure, tau: &StoppingTime) -> Result<f64> {
    same_tree(&mu.tree, tau.tree())?;
    let values = tau.leaf_values();
    Ok(tent_mass_by_leaf(mu, &values))
}

fn tent_mass_by_leaf(mu: &CarlesonMeasure, tau: &[Option<usize>]) -> f64 {
    mu.sum_where(|leaf, k| tau[leaf].is_some_and(|t| k >= t))
}

/// `||| mu |||_alpha` computed by `mode` (`node-fast` or `stopping-bruteforce`).
pub fn carleson_alpha_norm(mu: &CarlesonMeasure, alpha: Alpha, mode: Mode) -> Result<NormResult> {
    check_alpha(alpha)?;
    let exponent = alpha.carleson_exponent();
    let tree = &mu.tree;
    let (value, stops) = match mode {
        Mode::NodeFast => {
            // tails[k][leaf] = sum_{j >= k} mu_j(leaf) P(leaf)
            let depth = tree.depth();
            let mut tails = vec![vec![0.0; tree.num_leaves()]; depth + 1];
            for k in (0..=depth).rev() {
                for leaf in 0..tree.num_leaves() {
                    let above = if k < depth { tails[k + 1][leaf] } else { 0.0 };
                    tails[k][leaf] = above + mu.densities[k][leaf] * tree.leaf_mass(leaf);
                }
            }
            let mut best = (f64::NEG_INFINITY, AtomRef::ROOT);
            for n in 0..=depth {
                for (i, atom) in tree.level(n).iter().enumerate() {
                    let c: f64 = tails[n][atom.leaves.clone()].iter().sum();
                    let r = c / atom.mass.powf(exponent);
                    if r > best.0 {
                        best = (r, AtomRef::new(n, i));
                    }
                }
            }
            (best.0, vec![best.1])
        }
        Mode::StoppingBruteforce => {
            let mut best = f64::NEG_INFINITY;
            let mut witness = Vec::new();
            let mut tau = vec![None; tree.num_leaves()];
            for_each_stopping_time(tree, max_enum(), |stops| {
                if stops.is_empty() {
                    return;
                }
                tau.fill(None);
                let mut p = 0.0;
                for s in stops {
                    let atom = &tree.level(s.level)[s.index];
                    p += atom.mass;
                    tau[atom.leaves.clone()].fill(Some(s.level));
                }
                let r = tent_mass_by_leaf(mu, &tau) / p.powf(exponent);
                if r > best {
                    best = r;
                    witness = stops.to_vec();
                }
            })?;
            (best, witness)
        }
        other => {
            return Err(Error::Argument(format!(
                "mode {other} does not apply to Carleson norms; use node-fast or stopping-bruteforce"
            )))
        }
    };
    let stops = StoppingTime::new(tree.clone(), stops)?.stops().to_vec();
    Ok(NormResult {
        value,
        witness: Witness::Stops { stops },
        mode,
    })
}

/// `mu(tent(tau)) / P(tau < inf)^{1+2 alpha}`; zero for `tau = inf`.
pub fn carleson_ratio(mu: &CarlesonMeasure, alpha: Alpha, tau: &StoppingTime) -> Result<f64> {
    if tau.is_never() {
        return Ok(0.0);
    }
    Ok(tent_mass(mu, tau)? / tau.prob_finite().powf(alpha.carleson_exponent()))
}

/// The measure `|d_k f|^2 dP (x) dm`.
pub fn from_martingale(f: &Martingale) -> CarlesonMeasure {
    let d = differences(f);
    let tree = f.tree().clone();
    let densities = (0..=tree.depth())
        .map(|k| {
            let mut out = vec![0.0; tree.num_leaves()];
            for (i, atom) in tree.level(k).iter().enumerate() {
                out[atom.leaves.clone()].fill(norm_sq(d.value(k, i)));
            }
            out
        })
        .collect();
    CarlesonMeasure { tree, densities }
}

/// Random densities: each `mu_k(leaf)` is zero with probability 1/4 and
/// otherwise uniform on `(0, scale)`.
pub fn random_measure(tree: &Arc<FiltrationTree>, seed: u64, scale: f64) -> CarlesonMeasure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let densities = (0..=tree.depth())
        .map(|_| {
            (0..tree.num_leaves())
                .map(|_| {
                    if rng.random_bool(0.25) {
                        0.0
                    } else {
                        scale * rng.random::<f64>()
                    }
                })
                .collect()
        })
        .collect();
    CarlesonMeasure {
        tree: tree.clone(),
        densities,
    }
}

/// Both sides of the Carleson inequality for one `(f, mu, p, alpha)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityRecord {
    /// `int |f_k|^p mu_k dP dm`, summed directly.
    pub lhs: f64,
    /// The same integral through the layer-cake formula.
    pub lhs_layer_cake: f64,
    /// `(p/(p-1)) |||mu|||_alpha ||Mf||_{1/(2 alpha)} ||Mf||_{p-1}^{p-1}`.
    pub rhs: f64,
    /// The intermediate bound with the weak `L^{1/(2 alpha)}` norm of `Mf`.
    pub rhs_weak: f64,
    pub carleson_norm: f64,
    pub holds: bool,
    pub holds_weak: bool,
}

fn check_inequality_params(p: f64, alpha: Alpha) -> Result<()> {
    if !(p.is_finite() && p > 1.0) {
        return Err(Error::out_of_range("p", p, "(1, inf)"));
    }
    if !(alpha.get() > 0.0 && alpha.get() < 1.0) {
        return Err(Error::out_of_range("alpha", alpha.get(), "(0, 1)"));
    }
    Ok(())
}

/// `(|f_k(leaf)|, mu_k(leaf) P(leaf))` for every `(leaf, k)`, `k` outermost.
fn inequality_points(f: &AdaptedProcess, mu: &CarlesonMeasure) -> Vec<(f64, f64)> {
    let tree = &mu.tree;
    let mut out = Vec::with_capacity((tree.depth() + 1) * tree.num_leaves());
    for k in 0..=tree.depth() {
        let anc = tree.leaf_ancestors(k);
        for leaf in 0..tree.num_leaves() {
            out.push((
                norm(f.value(k, anc[leaf])),
                mu.densities[k][leaf] * tree.leaf_mass(leaf),
            ));
        }
    }
    out
}

/// `int |f_k|^p mu_k dP dm`.
pub fn inequality_lhs(f: &AdaptedProcess, mu: &CarlesonMeasure, p: f64) -> Result<f64> {
    same_tree(f.tree(), &mu.tree)?;
    Ok(direct_sum(&inequality_points(f, mu), p))
}

pub fn carleson_inequality_check(
    f: &AdaptedProcess,
    mu: &CarlesonMeasure,
    p: f64,
    alpha: Alpha,
) -> Result<InequalityRecord> {
    check_inequality_params(p, alpha)?;
    same_tree(f.tree(), &mu.tree)?;
    let points = inequality_points(f, mu);
    let lhs = direct_sum(&points, p);
    let lhs_layer_cake = layer_cake_points(&points, p);
    let carleson_norm = carleson_alpha_norm(mu, alpha, Mode::NodeFast)?.value;
    let (mf, _) = maximal(f);
    let q = 1.0 / (2.0 * alpha.get());
    let tail = lp_norm(&mf, p - 1.0)?.powf(p - 1.0);
    let factor = p / (p - 1.0) * carleson_norm;
    let rhs = factor * lp_norm(&mf, q)? * tail;
    let rhs_weak = factor * weak_lq_norm(&mf, q)? * tail;
    Ok(InequalityRecord {
        lhs,
        lhs_layer_cake,
        rhs,
        rhs_weak,
        carleson_norm,
        holds: lhs <= rhs + INEQUALITY_SLACK,
        holds_weak: lhs <= rhs_weak + INEQUALITY_SLACK,
    })
}

/// Outcome of plugging every indicator process `1{tau <= n}` into the
/// inequality with constant `c_p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConverseRecord {
    pub stopping_times: usize,
    /// Every indicator's lhs equals `mu(tent(tau))` bit for bit.
    pub lhs_matches_tent: bool,
    /// Every indicator's maximal function equals `1{tau < inf}`.
    pub maximal_matches: bool,
    /// Every indicator satisfies the inequality with constant `c_p`.
    pub inequality_holds: bool,
    pub max_ratio: f64,
    pub witness: Vec<AtomRef>,
    /// `||| mu |||_alpha` by the node scan.
    pub carleson_norm: f64,
    /// `max_ratio` agrees with `carleson_norm`.
    pub cross_check: bool,
    /// `||| mu |||_alpha <= c_p`.
    pub norm_bound_satisfied: bool,
}

pub fn converse_extraction(
    mu: &CarlesonMeasure,
    alpha: Alpha,
    c_p: f64,
    p: f64,
) -> Result<ConverseRecord> {
    check_inequality_params(p, alpha)?;
    let tree = &mu.tree;
    let q = 1.0 / (2.0 * alpha.get());
    let exponent = alpha.carleson_exponent();
    let all = enumerate_stopping_times(tree)?;
    let mut rec = ConverseRecord {
        stopping_times: all.len(),
        lhs_matches_tent: true,
        maximal_matches: true,
        inequality_holds: true,
        max_ratio: 0.0,
        witness: Vec::new(),
        carleson_norm: carleson_alpha_norm(mu, alpha, Mode::NodeFast)?.value,
        cross_check: false,
        norm_bound_satisfied: true,
    };
    let mut best = f64::NEG_INFINITY;
    for tau in &all {
        let g = indicator_process(tau);
        let lhs = inequality_lhs(&g, mu, p)?;
        let tent = tent_mass(mu, tau)?;
        rec.lhs_matches_tent &= lhs == tent;
        let (mg, _) = maximal(&g);
        let finite = tau.leaf_values();
        rec.maximal_matches &= mg
            .values()
            .iter()
            .zip(&finite)
            .all(|(m, t)| *m == if t.is_some() { 1.0 } else { 0.0 });
        let rhs = c_p * lp_norm(&mg, q)? * lp_norm(&mg, p - 1.0)?.powf(p - 1.0);
        rec.inequality_holds &= lhs <= rhs + INEQUALITY_SLACK;
        if tau.is_never() {
            continue;
        }
        let r = tent / tau.prob_finite().powf(exponent);
        rec.norm_bound_satisfied &= r <= c_p + INEQUALITY_SLACK;
        if r > best {
            best = r;
            rec.witness = tau.stops().to_vec();
        }
    }
    rec.max_ratio = best.max(0.0);
    rec.cross_check = rel_eq(rec.max_ratio, rec.carleson_norm, MODE_AGREEMENT_REL);
    Ok(rec)
}
