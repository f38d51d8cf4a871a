//! Norm functionals: `L^p`, weak `L^q`, the layer-cake integral, and the
//! `BMO^alpha` norm in its four computable forms.
//!
//! For a level-`n` atom `A` write `osc(n, A) = int_A |f - f_{n-1}|^2 dP`. The
//! norm is the supremum over `n` and `A in F_n` of
//! `P(A)^{-1/2-alpha} osc(n, A)^{1/2}`. Every `A in F_n` is a disjoint union of
//! level-`n` atoms `A_i`, and with `M = max_i osc(n, A_i) / P(A_i)^{1+2 alpha}`
//!
//! ```text
//! osc(n, A) = sum_i osc(n, A_i) <= M sum_i P(A_i)^{1+2 alpha} <= M P(A)^{1+2 alpha}
//! ```
//!
//! because `1 + 2 alpha >= 1`. So the supremum is attained on a single atom,
//! which is what [`Mode::AtomFast`] scans. [`Mode::SubsetBruteforce`] keeps
//! every union of atoms as an oracle for that reduction.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtration::{omega_weight, AtomRef};
use crate::process::{
    conditional_expectation, dist_sq, martingale_from_final, norm, AdaptedProcess, Martingale,
    RandomVariable,
};
use crate::stopping::{for_each_stopping_time, max_enum, stopped_before, StoppingTime};

/// The fractional exponent `alpha in [0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Alpha(f64);

impl Alpha {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::out_of_range("alpha", alpha, "[0, 1]"));
        }
        Ok(Alpha(alpha))
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// `1 + 2 alpha`, the exponent of `P` in the squared ratios.
    pub fn carleson_exponent(self) -> f64 {
        1.0 + 2.0 * self.0
    }
}

impl TryFrom<f64> for Alpha {
    type Error = Error;

    fn try_from(a: f64) -> Result<Self> {
        Alpha::new(a)
    }
}

impl From<Alpha> for f64 {
    fn from(a: Alpha) -> f64 {
        a.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Every nonempty union of level-`n` atoms, every `n`.
    SubsetBruteforce,
    /// Single atoms only.
    AtomFast,
    /// Every stopping time, through `P(tau < inf)^{-1/2-alpha} ||f - f_{tau-1}||_2`.
    StoppingBruteforce,
    /// `sup_n || omega_n^{-alpha} E(|f - f_{n-1}|^2 | F_n)^{1/2} ||_inf`.
    OmegaForm,
    /// Single tree nodes (Carleson norm only).
    NodeFast,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::SubsetBruteforce,
        Mode::AtomFast,
        Mode::StoppingBruteforce,
        Mode::OmegaForm,
        Mode::NodeFast,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::SubsetBruteforce => "subset-bruteforce",
            Mode::AtomFast => "atom-fast",
            Mode::StoppingBruteforce => "stopping-bruteforce",
            Mode::OmegaForm => "omega-form",
            Mode::NodeFast => "node-fast",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown mode {s:?}")))
    }
}

/// Where a supremum is attained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Witness {
    /// A union of atoms on one level.
    Atoms { level: usize, atoms: Vec<usize> },
    /// A stopping time, given by its stop atoms.
    Stops { stops: Vec<AtomRef> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormResult {
    pub value: f64,
    pub witness: Witness,
    pub mode: Mode,
}

fn check_exponent(what: &'static str, p: f64) -> Result<()> {
    if p.is_finite() && p > 0.0 {
        Ok(())
    } else {
        Err(Error::out_of_range(what, p, "(0, inf)"))
    }
}

/// `(sum |X|^p mass)^{1/p}`, a quasi-norm for `p < 1`.
pub fn lp_norm(x: &RandomVariable, p: f64) -> Result<f64> {
    check_exponent("p", p)?;
    let tree = x.tree();
    let s: f64 = x
        .abs()
        .iter()
        .enumerate()
        .map(|(leaf, v)| v.powf(p) * tree.leaf_mass(leaf))
        .sum();
    Ok(s.powf(1.0 / p))
}

/// `sup_{lambda > 0} lambda P(|X| > lambda)^{1/q}`, evaluated exactly as the
/// maximum over the distinct values `v` of `|X|` of `v P(|X| >= v)^{1/q}`.
pub fn weak_lq_norm(x: &RandomVariable, q: f64) -> Result<f64> {
    check_exponent("q", q)?;
    let tree = x.tree();
    let pairs: Vec<(f64, f64)> = x
        .abs()
        .into_iter()
        .enumerate()
        .map(|(leaf, v)| (v, tree.leaf_mass(leaf)))
        .collect();
    let mut best = 0.0_f64;
    for (v, tail) in distinct_tails(pairs) {
        if v > 0.0 {
            best = best.max(v * tail.powf(1.0 / q));
        }
    }
    Ok(best)
}

/// Measure against which [`layer_cake`] integrates.
#[derive(Clone, Copy, Debug)]
pub enum Weights<'a> {
    /// `P` itself.
    Probability,
    /// `density dP`, one nonnegative density value per leaf.
    Density(&'a [f64]),
}

/// `p int_0^inf lambda^{p-1} mu(|X| > lambda) d lambda`.
pub fn layer_cake(x: &RandomVariable, p: f64, weights: Weights<'_>) -> Result<f64> {
    check_exponent("p", p)?;
    let tree = x.tree();
    let pairs: Vec<(f64, f64)> = match weights {
        Weights::Probability => x
            .abs()
            .into_iter()
            .enumerate()
            .map(|(leaf, v)| (v, tree.leaf_mass(leaf)))
            .collect(),
        Weights::Density(d) => {
            if d.len() != tree.num_leaves() {
                return Err(Error::Argument(format!(
                    "density has {} values, tree has {} leaves",
                    d.len(),
                    tree.num_leaves()
                )));
            }
            if d.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(Error::Argument("density must be finite and nonnegative".into()));
            }
            x.abs()
                .into_iter()
                .enumerate()
                .map(|(leaf, v)| (v, d[leaf] * tree.leaf_mass(leaf)))
                .collect()
        }
    };
    Ok(layer_cake_points(&pairs, p))
}

/// Layer-cake integral over weighted points `(value, weight)`, `value >= 0`.
///
/// Between consecutive distinct values `v_{j-1} < v_j` the distribution
/// function is constant, equal to the weight of `{value >= v_j}`, and
/// `p int lambda^{p-1}` over that gap is `v_j^p - v_{j-1}^p`.
pub fn layer_cake_points(points: &[(f64, f64)], p: f64) -> f64 {
    let mut prev_pow = 0.0;
    let mut total = 0.0;
    for (v, tail) in distinct_tails(points.iter().map(|&(v, w)| (v.abs(), w)).collect()) {
        if v > 0.0 {
            let pow = v.powf(p);
            total += (pow - prev_pow) * tail;
            prev_pow = pow;
        }
    }
    total
}

/// Distinct values in increasing order, each with the total weight of the
/// points at or above it (suffix sums, accumulated from the top).
fn distinct_tails(mut points: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut tail = 0.0;
    for &(v, w) in points.iter().rev() {
        tail += w;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = tail,
            _ => out.push((v, tail)),
        }
    }
    out.reverse();
    out
}

/// `sum |value|^p weight`.
pub fn direct_sum(points: &[(f64, f64)], p: f64) -> f64 {
    points.iter().map(|&(v, w)| v.abs().powf(p) * w).sum()
}

fn ratio(osc: f64, mass: f64, alpha: Alpha, p: f64) -> f64 {
    mass.powf(-1.0 / p - alpha.get()) * osc.powf(1.0 / p)
}

/// `int_A |g_N - g_{n-1}|^p dP` for the level-`n` atom `A`, `g_{-1} = 0`.
fn atom_oscillation(g: &AdaptedProcess, n: usize, atom: usize, p: f64) -> f64 {
    let tree = g.tree();
    let dim = g.dim();
    let zero = vec![0.0; dim];
    let prev = g.previous(n, atom).unwrap_or(&zero);
    let last = g.horizon();
    tree.level(n)[atom]
        .leaves
        .clone()
        .map(|leaf| {
            let d2 = dist_sq(g.value(last, leaf), prev);
            let d = if p == 2.0 { d2 } else { d2.sqrt().powf(p) };
            d * tree.leaf_mass(leaf)
        })
        .sum()
}

/// Max over `(n, A)`, single level-`n` atoms, of the oscillation ratio with
/// exponent `p`. Ties go to the smallest `n`, then the smallest atom.
fn atom_scan(g: &AdaptedProcess, alpha: Alpha, p: f64) -> (f64, Witness) {
    let tree = g.tree();
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for n in 0..=tree.depth() {
        for (i, atom) in tree.level(n).iter().enumerate() {
            let r = ratio(atom_oscillation(g, n, i, p), atom.mass, alpha, p);
            if r > best.0 {
                best = (r, n, i);
            }
        }
    }
    (
        best.0,
        Witness::Atoms {
            level: best.1,
            atoms: vec![best.2],
        },
    )
}

fn subset_cap_check(g: &AdaptedProcess) -> Result<()> {
    let tree = g.tree();
    let total = (0..=tree.depth()).fold(0u128, |acc, n| {
        let a = tree.num_atoms(n) as u32;
        let subsets = if a >= 127 { u128::MAX } else { (1u128 << a) - 1 };
        acc.saturating_add(subsets)
    });
    let cap = max_enum();
    if total > cap {
        return Err(Error::Size {
            what: "subset enumeration",
            size: total,
            cap,
            hint: Some("use atom-fast mode or raise BMO_LAB_MAX_ENUM"),
        });
    }
    Ok(())
}

/// Max over all nonempty unions `A` of level-`n` atoms, integrating over the
/// leaves of `A` directly.
fn subset_scan(g: &AdaptedProcess, alpha: Alpha, p: f64) -> Result<(f64, Witness)> {
    subset_cap_check(g)?;
    let tree = g.tree();
    let dim = g.dim();
    let last = g.horizon();
    let zero = vec![0.0; dim];
    let mut best = (f64::NEG_INFINITY, 0, 0u128);
    for n in 0..=tree.depth() {
        let level = tree.level(n);
        let count = level.len();
        for mask in 1u128..(1u128 << count) {
            let mut mass = 0.0;
            let mut osc = 0.0;
            for (i, atom) in level.iter().enumerate() {
                if mask >> i & 1 == 0 {
                    continue;
                }
                mass += atom.mass;
                let prev = g.previous(n, i).unwrap_or(&zero);
                for leaf in atom.leaves.clone() {
                    let d = norm(
                        &g.value(last, leaf)
                            .iter()
                            .zip(prev)
                            .map(|(a, b)| a - b)
                            .collect::<Vec<_>>(),
                    );
                    osc += d.powf(p) * tree.leaf_mass(leaf);
                }
            }
            let r = ratio(osc, mass, alpha, p);
            if r > best.0 {
                best = (r, n, mask);
            }
        }
    }
    let atoms = (0..128).filter(|i| best.2 >> i & 1 == 1).collect();
    Ok((best.0, Witness::Atoms { level: best.1, atoms }))
}

/// `||f||_{BMO^alpha}` computed by `mode`.
pub fn bmo_alpha_norm(f: &Martingale, alpha: Alpha, mode: Mode) -> Result<NormResult> {
    let (value, witness) = match mode {
        Mode::AtomFast => atom_scan(f, alpha, 2.0),
        Mode::SubsetBruteforce => subset_scan(f, alpha, 2.0)?,
        Mode::StoppingBruteforce => stopping_scan(f, alpha)?,
        Mode::OmegaForm => omega_scan(f, alpha)?,
        Mode::NodeFast => {
            return Err(Error::Argument(
                "node-fast applies to Carleson norms; use atom-fast".into(),
            ))
        }
    };
    Ok(NormResult { value, witness, mode })
}

/// Max over every stopping time `tau` with `P(tau < inf) > 0` of
/// `P(tau < inf)^{-1/2-alpha} ||f - f_{tau-1}||_2`.
fn stopping_scan(f: &Martingale, alpha: Alpha) -> Result<(f64, Witness)> {
    let tree = f.tree();
    let dim = f.dim();
    let last = f.horizon();
    let zero = vec![0.0; dim];
    let mut best = f64::NEG_INFINITY;
    let mut witness = Vec::new();
    for_each_stopping_time(tree, max_enum(), |stops| {
        if stops.is_empty() {
            return;
        }
        let mut mass = 0.0;
        let mut sq = 0.0;
        for s in stops {
            let atom = &tree.level(s.level)[s.index];
            mass += atom.mass;
            let prev = f.previous(s.level, s.index).unwrap_or(&zero);
            for leaf in atom.leaves.clone() {
                sq += dist_sq(f.value(last, leaf), prev) * tree.leaf_mass(leaf);
            }
        }
        let r = ratio(sq, mass, alpha, 2.0);
        if r > best {
            best = r;
            witness = stops.to_vec();
        }
    })?;
    let witness = StoppingTime::new(tree.clone(), witness)?;
    Ok((
        best,
        Witness::Stops {
            stops: witness.stops().to_vec(),
        },
    ))
}

/// `sup_n || omega_n^{-alpha} E(|f - f_{n-1}|^2 | F_n)^{1/2} ||_inf`, with the
/// sup norm taken over leaves (every leaf has positive mass).
fn omega_scan(f: &Martingale, alpha: Alpha) -> Result<(f64, Witness)> {
    let tree = f.tree();
    let last = f.final_value();
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for n in 0..=tree.depth() {
        let prev = if n == 0 {
            RandomVariable::constant(tree.clone(), &vec![0.0; f.dim()])?
        } else {
            f.lift(n - 1)?
        };
        let sq: Vec<f64> = (0..tree.num_leaves())
            .map(|leaf| dist_sq(last.value(leaf), prev.value(leaf)))
            .collect();
        let sq = RandomVariable::scalar(tree.clone(), sq)?;
        let cond = conditional_expectation(&sq, n)?;
        let omega = omega_weight(tree, n)?;
        let ancestors = tree.leaf_ancestors(n);
        for leaf in 0..tree.num_leaves() {
            let a = ancestors[leaf];
            let v = omega.values()[leaf].powf(-alpha.get()) * cond[a].sqrt();
            if v > best.0 {
                best = (v, n, a);
            }
        }
    }
    Ok((
        best.0,
        Witness::Atoms {
            level: best.1,
            atoms: vec![best.2],
        },
    ))
}

/// Evaluates the defining ratio of the `BMO^alpha` norm at `witness`.
pub fn bmo_ratio(f: &Martingale, alpha: Alpha, witness: &Witness) -> Result<f64> {
    let tree = f.tree();
    match witness {
        Witness::Atoms { level, atoms } => {
            tree.check_level(*level)?;
            let refs: Vec<AtomRef> = atoms.iter().map(|&i| AtomRef::new(*level, i)).collect();
            let mut mass = 0.0;
            for r in &refs {
                mass += tree.mass(*r)?;
            }
            let before = if *level == 0 {
                RandomVariable::constant(tree.clone(), &vec![0.0; f.dim()])?
            } else {
                f.lift(level - 1)?
            };
            let last = f.final_value();
            let mut osc = 0.0;
            for r in &refs {
                for leaf in tree.level(r.level)[r.index].leaves.clone() {
                    osc += dist_sq(last.value(leaf), before.value(leaf)) * tree.leaf_mass(leaf);
                }
            }
            Ok(ratio(osc, mass, alpha, 2.0))
        }
        Witness::Stops { stops } => {
            let tau = StoppingTime::new(tree.clone(), stops.clone())?;
            let before = stopped_before(f, &tau)?;
            let last = f.final_value();
            let diff: Vec<f64> = last
                .values()
                .iter()
                .zip(before.values())
                .map(|(a, b)| a - b)
                .collect();
            let diff = RandomVariable::new(tree.clone(), f.dim(), diff)?;
            let l2 = lp_norm(&diff, 2.0)?;
            Ok(tau.prob_finite().powf(-0.5 - alpha.get()) * l2)
        }
    }
}

/// The exponent-`p` variant `sup P(A)^{-1/p-alpha} (int_A |f - f_{n-1}|^p)^{1/p}`
/// over single atoms.
pub fn bmo_alpha_p_norm(f: &Martingale, alpha: Alpha, p: f64) -> Result<f64> {
    check_p_variant(p)?;
    Ok(atom_scan(f, alpha, p).0)
}

/// The exponent-`p` variant over all unions of atoms (brute force).
pub fn bmo_alpha_p_norm_subsets(f: &Martingale, alpha: Alpha, p: f64) -> Result<NormResult> {
    check_p_variant(p)?;
    let (value, witness) = subset_scan(f, alpha, p)?;
    Ok(NormResult {
        value,
        witness,
        mode: Mode::SubsetBruteforce,
    })
}

fn check_p_variant(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(Error::out_of_range("p", p, "[1, inf)"))
    }
}

/// The `BMO^alpha` functional of an adapted process measured against its own
/// previous value: `sup_{n, A} P(A)^{-1/2-alpha} (int_A |g_N - g_{n-1}|^2)^{1/2}`
/// with `g_{-1} = 0`.
pub fn process_bmo_alpha_norm(g: &AdaptedProcess, alpha: Alpha) -> f64 {
    atom_scan(g, alpha, 2.0).0
}

/// Same, with the witness atom.
pub fn process_bmo_alpha_norm_with_witness(g: &AdaptedProcess, alpha: Alpha) -> NormResult {
    let (value, witness) = atom_scan(g, alpha, 2.0);
    NormResult {
        value,
        witness,
        mode: Mode::AtomFast,
    }
}

/// The `BMO^alpha` norm of the martingale closed by `g_N`, i.e. measured with
/// conditional expectations instead of the process's own past.
pub fn conditional_bmo_alpha_norm(g: &AdaptedProcess, alpha: Alpha) -> f64 {
    let f = martingale_from_final(&g.final_value());
    atom_scan(&f, alpha, 2.0).0
}
