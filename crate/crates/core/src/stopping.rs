//! Stopping times as antichains of stop atoms, their tents, and exhaustive
//! enumeration.
//!
//! A stopping time is determined by the set of atoms where it first fires:
//! `tau(w)` is the level of the unique stop atom above the leaf of `w`, and
//! `tau = inf` on leaves with no stop atom above them. Every antichain gives a
//! stopping time and every stopping time arises this way, so enumerating
//! antichains enumerates all stopping times.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtration::{AtomRef, FiltrationTree};
use crate::process::{norm, same_tree, AdaptedProcess, Martingale, RandomVariable};

pub const TAU_SCHEMA: &str = "tau/v1";

pub const DEFAULT_MAX_ENUM: u128 = 1_000_000;

/// Environment variable overriding [`DEFAULT_MAX_ENUM`].
pub const MAX_ENUM_ENV: &str = "BMO_LAB_MAX_ENUM";

/// The enumeration cap shared by every brute-force path.
pub fn max_enum() -> u128 {
    std::env::var(MAX_ENUM_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_MAX_ENUM)
}

#[derive(Clone, Debug)]
pub struct StoppingTime {
    tree: Arc<FiltrationTree>,
    /// Stop atoms ordered left to right.
    stops: Vec<AtomRef>,
}

impl PartialEq for StoppingTime {
    fn eq(&self, other: &Self) -> bool {
        self.stops == other.stops && *self.tree == *other.tree
    }
}

impl StoppingTime {
    /// Validates that `stops` is an antichain of atoms of `tree`.
    pub fn new(tree: Arc<FiltrationTree>, mut stops: Vec<AtomRef>) -> Result<Self> {
        for &s in &stops {
            tree.atom(s)?;
        }
        stops.sort_by_key(|s| (tree.level(s.level)[s.index].leaves.start, s.level));
        for w in stops.windows(2) {
            let a = &tree.level(w[0].level)[w[0].index].leaves;
            let b = &tree.level(w[1].level)[w[1].index].leaves;
            if a.end > b.start {
                return Err(Error::validation(
                    "stopping time",
                    format!("stops [{}, {}]", w[1].level, w[1].index),
                    format!(
                        "overlaps stop [{}, {}]; stop atoms must form an antichain",
                        w[0].level, w[0].index
                    ),
                ));
            }
        }
        Ok(StoppingTime { tree, stops })
    }

    /// `tau = inf` everywhere.
    pub fn never(tree: Arc<FiltrationTree>) -> Self {
        StoppingTime { tree, stops: Vec::new() }
    }

    pub fn tree(&self) -> &Arc<FiltrationTree> {
        &self.tree
    }

    pub fn stops(&self) -> &[AtomRef] {
        &self.stops
    }

    pub fn is_never(&self) -> bool {
        self.stops.is_empty()
    }

    /// `P(tau < inf)`.
    pub fn prob_finite(&self) -> f64 {
        self.stops
            .iter()
            .map(|s| self.tree.level(s.level)[s.index].mass)
            .sum()
    }

    /// `tau` on every leaf (`None` for infinity).
    pub fn leaf_values(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.tree.num_leaves()];
        for s in &self.stops {
            out[self.tree.level(s.level)[s.index].leaves.clone()].fill(Some(s.level));
        }
        out
    }

    pub fn tau(&self, leaf: usize) -> Option<usize> {
        self.stops
            .iter()
            .find(|s| self.tree.level(s.level)[s.index].leaves.contains(&leaf))
            .map(|s| s.level)
    }

    /// Whether `{tau <= n}` contains the level-`n` atom `atom`.
    pub fn stopped_on(&self, n: usize, atom: usize) -> bool {
        let r = AtomRef::new(n, atom);
        self.stops
            .iter()
            .any(|&s| self.tree.is_ancestor_or_self(s, r))
    }

    pub fn tent(&self) -> Tent {
        let mut atoms = Vec::new();
        for s in &self.stops {
            let mut range = s.index..s.index + 1;
            for k in s.level..=self.tree.depth() {
                atoms.extend(range.clone().map(|i| AtomRef::new(k, i)));
                if k < self.tree.depth() {
                    let lvl = self.tree.level(k);
                    range = lvl[range.start].children.start..lvl[range.end - 1].children.end;
                }
            }
        }
        atoms.sort();
        Tent {
            tree: self.tree.clone(),
            atoms,
        }
    }

    pub fn to_document(&self) -> TauDocument {
        TauDocument {
            schema: TAU_SCHEMA.to_string(),
            stops: self.stops.clone(),
        }
    }

    pub fn from_document(tree: Arc<FiltrationTree>, doc: &TauDocument) -> Result<Self> {
        if doc.schema != TAU_SCHEMA {
            return Err(Error::Schema {
                expected: TAU_SCHEMA,
                found: doc.schema.clone(),
            });
        }
        Self::new(tree, doc.stops.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("stopping time serializes")
    }

    pub fn from_json(tree: Arc<FiltrationTree>, s: &str) -> Result<Self> {
        Self::from_document(tree, &crate::error::parse_json(s)?)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TauDocument {
    pub schema: String,
    pub stops: Vec<AtomRef>,
}

/// `{(w, k) : k >= tau(w), tau(w) < inf}`: the atom `(k, i)` stands for all
/// pairs `(w, k)` with `w` in that atom.
#[derive(Clone, Debug)]
pub struct Tent {
    tree: Arc<FiltrationTree>,
    atoms: Vec<AtomRef>,
}

impl Tent {
    pub fn atoms(&self) -> &[AtomRef] {
        &self.atoms
    }

    pub fn contains(&self, leaf: usize, k: usize) -> bool {
        if k > self.tree.depth() {
            return false;
        }
        let a = AtomRef::new(k, self.tree.leaf_ancestors(k)[leaf]);
        self.atoms.binary_search(&a).is_ok()
    }
}

/// `tau_A`: equal to `n` on `A` and infinite elsewhere.
pub fn tau_a(tree: &Arc<FiltrationTree>, n: usize, atoms: &[AtomRef]) -> Result<StoppingTime> {
    if atoms.is_empty() {
        return Err(Error::Argument("tau_A needs a nonempty atom set".into()));
    }
    if let Some(a) = atoms.iter().find(|a| a.level != n) {
        return Err(Error::Argument(format!(
            "tau_A atoms must all be at level {n}, found level {}",
            a.level
        )));
    }
    StoppingTime::new(tree.clone(), atoms.to_vec())
}

/// `inf{n : |g_n| > lambda}`.
pub fn first_passage(g: &AdaptedProcess, lambda: f64) -> StoppingTime {
    let tree = g.tree();
    let mut stops = Vec::new();
    let mut stopped: Vec<bool> = Vec::new();
    for n in 0..=tree.depth() {
        let level = tree.level(n);
        let mut now = vec![false; level.len()];
        for (i, atom) in level.iter().enumerate() {
            let above = atom.parent.is_some_and(|p| stopped[p]);
            if above {
                now[i] = true;
            } else if norm(g.value(n, i)) > lambda {
                now[i] = true;
                stops.push(AtomRef::new(n, i));
            }
        }
        stopped = now;
    }
    StoppingTime::new(tree.clone(), stops).expect("first passage atoms form an antichain")
}

/// The number of stopping times: `T(leaf) = 2`, `T(v) = 1 + prod T(children)`.
/// Saturates at `u128::MAX`.
pub fn count_stopping_times(tree: &FiltrationTree) -> u128 {
    let depth = tree.depth();
    let mut counts = vec![2u128; tree.num_atoms(depth)];
    for n in (0..depth).rev() {
        counts = tree
            .level(n)
            .iter()
            .map(|a| {
                counts[a.children.clone()]
                    .iter()
                    .fold(1u128, |acc, &c| acc.saturating_mul(c))
                    .saturating_add(1)
            })
            .collect();
    }
    counts[0]
}

/// Visits every stopping time (including `tau = inf`) as its stop set, in
/// depth-first stop-before-defer order. Returns the number visited.
pub fn for_each_stopping_time(
    tree: &FiltrationTree,
    cap: u128,
    mut visit: impl FnMut(&[AtomRef]),
) -> Result<u128> {
    let count = count_stopping_times(tree);
    if count > cap {
        return Err(Error::Size {
            what: "stopping-time enumeration",
            size: count,
            cap,
            hint: Some("use a fast mode or raise BMO_LAB_MAX_ENUM"),
        });
    }
    let mut acc = Vec::new();
    visit_node(tree, AtomRef::ROOT, &mut acc, &mut |s: &mut Vec<AtomRef>| visit(s));
    Ok(count)
}

fn visit_node(
    tree: &FiltrationTree,
    r: AtomRef,
    acc: &mut Vec<AtomRef>,
    k: &mut dyn FnMut(&mut Vec<AtomRef>),
) {
    acc.push(r);
    k(acc);
    acc.pop();
    let children = tree.level(r.level)[r.index].children.clone();
    visit_siblings(tree, r.level + 1, children, acc, k);
}

fn visit_siblings(
    tree: &FiltrationTree,
    level: usize,
    range: std::ops::Range<usize>,
    acc: &mut Vec<AtomRef>,
    k: &mut dyn FnMut(&mut Vec<AtomRef>),
) {
    if range.is_empty() {
        k(acc);
        return;
    }
    let rest = range.start + 1..range.end;
    visit_node(tree, AtomRef::new(level, range.start), acc, &mut |acc| {
        visit_siblings(tree, level, rest.clone(), acc, k)
    });
}

/// All stopping times, capped by [`max_enum`].
pub fn enumerate_stopping_times(tree: &Arc<FiltrationTree>) -> Result<Vec<StoppingTime>> {
    enumerate_stopping_times_capped(tree, max_enum())
}

pub fn enumerate_stopping_times_capped(
    tree: &Arc<FiltrationTree>,
    cap: u128,
) -> Result<Vec<StoppingTime>> {
    let mut out = Vec::new();
    for_each_stopping_time(tree, cap, |stops| {
        out.push(StoppingTime {
            tree: tree.clone(),
            stops: stops.to_vec(),
        })
    })?;
    Ok(out)
}

/// `f_n = 1{tau <= n}`.
pub fn indicator_process(tau: &StoppingTime) -> AdaptedProcess {
    let tree = tau.tree.clone();
    let mut levels: Vec<Vec<f64>> = Vec::with_capacity(tree.depth() + 1);
    for n in 0..=tree.depth() {
        let level = tree.level(n);
        let mut values = vec![0.0; level.len()];
        for (i, atom) in level.iter().enumerate() {
            let above = atom.parent.map_or(0.0, |p| levels[n - 1][p]);
            if above == 1.0 || tau.stops.binary_search_by_key(&(atom.leaves.start, n), |s| {
                (tree.level(s.level)[s.index].leaves.start, s.level)
            }).is_ok()
            {
                values[i] = 1.0;
            }
        }
        levels.push(values);
    }
    AdaptedProcess::new(tree, 1, levels).expect("indicator process is well formed")
}

/// `f_{tau-1}` pointwise: `0` where `tau = 0` and `f_N` where `tau = inf`.
pub fn stopped_before(f: &Martingale, tau: &StoppingTime) -> Result<RandomVariable> {
    same_tree(f.tree(), &tau.tree)?;
    let tree = &tau.tree;
    let dim = f.dim();
    let mut values = f.final_value().values().to_vec();
    for s in &tau.stops {
        let atom = &tree.level(s.level)[s.index];
        let prev = f.previous(s.level, s.index).map(<[f64]>::to_vec);
        for leaf in atom.leaves.clone() {
            let slot = &mut values[leaf * dim..(leaf + 1) * dim];
            match &prev {
                Some(p) => slot.copy_from_slice(p),
                None => slot.fill(0.0),
            }
        }
    }
    RandomVariable::new(tree.clone(), dim, values)
}

/// A random stopping time: walking down from the root, each atom not already
/// below a stop becomes a stop with probability `p_stop`.
pub fn random_stopping_time(tree: &Arc<FiltrationTree>, seed: u64, p_stop: f64) -> StoppingTime {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stops = Vec::new();
    let mut stopped: Vec<bool> = Vec::new();
    for n in 0..=tree.depth() {
        let level = tree.level(n);
        let mut now = vec![false; level.len()];
        for (i, atom) in level.iter().enumerate() {
            if atom.parent.is_some_and(|p| stopped[p]) {
                now[i] = true;
            } else if rng.random_bool(p_stop.clamp(0.0, 1.0)) {
                now[i] = true;
                stops.push(AtomRef::new(n, i));
            }
        }
        stopped = now;
    }
    StoppingTime {
        tree: tree.clone(),
        stops,
    }
    .canonical()
}

impl StoppingTime {
    fn canonical(self) -> Self {
        StoppingTime::new(self.tree, self.stops).expect("antichain by construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtration::{build_dyadic, build_random};
    use crate::process::martingale_from_final;

    fn dyadic(depth: usize) -> Arc<FiltrationTree> {
        Arc::new(build_dyadic(depth).unwrap())
    }

    fn r1() -> Martingale {
        let t = dyadic(1);
        martingale_from_final(&RandomVariable::scalar(t, vec![1.0, -1.0]).unwrap())
    }

    fn d2f() -> Martingale {
        let t = dyadic(2);
        martingale_from_final(&RandomVariable::scalar(t, vec![2.0, 0.0, -1.0, -1.0]).unwrap())
    }

    #[test]
    fn tau_a_examples() {
        let t = dyadic(0);
        let tau = tau_a(&t, 0, &[AtomRef::ROOT]).unwrap();
        assert_eq!(tau.prob_finite(), 1.0);
        assert_eq!(tau.leaf_values(), vec![Some(0)]);

        let t1 = dyadic(1);
        let tau = tau_a(&t1, 1, &[AtomRef::new(1, 0)]).unwrap();
        assert_eq!(tau.prob_finite(), 0.5);
        assert_eq!(tau.leaf_values(), vec![Some(1), None]);

        let t2 = dyadic(2);
        let tau = tau_a(&t2, 1, &[AtomRef::new(1, 0), AtomRef::new(1, 1)]).unwrap();
        assert!(tau.leaf_values().iter().all(|&v| v == Some(1)));

        assert!(tau_a(&t2, 1, &[AtomRef::new(1, 0), AtomRef::new(2, 3)]).is_err());
        assert!(tau_a(&t2, 1, &[]).is_err());
    }

    #[test]
    fn antichain_enforced() {
        let t = dyadic(2);
        let err = StoppingTime::new(t.clone(), vec![AtomRef::new(1, 0), AtomRef::new(2, 1)]);
        assert!(err.is_err());
        let dup = StoppingTime::new(t.clone(), vec![AtomRef::new(2, 1), AtomRef::new(2, 1)]);
        assert!(dup.is_err());
        assert!(StoppingTime::new(t, vec![AtomRef::new(2, 1), AtomRef::new(1, 1)]).is_ok());
    }

    #[test]
    fn first_passage_examples() {
        let f = r1();
        let tau = first_passage(&f, 0.5);
        assert_eq!(tau.leaf_values(), vec![Some(1), Some(1)]);
        assert!(first_passage(&f, 2.0).is_never());

        let g = d2f();
        let tau = first_passage(&g, 0.5);
        assert_eq!(tau.stops(), &[AtomRef::new(1, 0), AtomRef::new(1, 1)]);
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_stopping_times(&dyadic(0)).unwrap().len(), 2);
        assert_eq!(enumerate_stopping_times(&dyadic(1)).unwrap().len(), 5);
        let all = enumerate_stopping_times(&dyadic(2)).unwrap();
        assert_eq!(all.len(), 26);
        assert_eq!(count_stopping_times(&dyadic(2)), 26);
        // stop-before-defer: tau = 0 first, tau = inf last
        assert_eq!(all[0].stops(), &[AtomRef::ROOT]);
        assert!(all.last().unwrap().is_never());
        let mut distinct: Vec<_> = all.iter().map(|t| t.stops().to_vec()).collect();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), 26);
    }

    #[test]
    fn enumeration_cap() {
        let t = dyadic(4);
        let err = enumerate_stopping_times_capped(&t, 1000).unwrap_err();
        assert!(matches!(err, Error::Size { .. }));
        assert!(err.to_string().contains("fast mode"));
    }

    #[test]
    fn enumerated_times_are_valid() {
        let t = Arc::new(build_random(17, 3, 2).unwrap());
        for tau in enumerate_stopping_times(&t).unwrap() {
            let again = StoppingTime::new(t.clone(), tau.stops().to_vec()).unwrap();
            assert_eq!(again, tau);
            let values = tau.leaf_values();
            let tent = tau.tent();
            for n in 0..=t.depth() {
                // {tau <= n} is a union of level-n atoms
                for atom in t.level(n) {
                    let inside: Vec<bool> = atom
                        .leaves
                        .clone()
                        .map(|l| values[l].is_some_and(|v| v <= n))
                        .collect();
                    assert!(inside.iter().all(|&b| b) || inside.iter().all(|&b| !b));
                }
                for leaf in 0..t.num_leaves() {
                    let expect = values[leaf].is_some_and(|v| n >= v);
                    assert_eq!(tent.contains(leaf, n), expect);
                }
            }
            let p: f64 = (0..t.num_leaves())
                .filter(|&l| values[l].is_some())
                .map(|l| t.leaf_mass(l))
                .sum();
            assert!((p - tau.prob_finite()).abs() < 1e-12);
            assert_eq!(first_passage(&indicator_process(&tau), 0.5), tau);
        }
    }

    #[test]
    fn indicator_examples() {
        let t = dyadic(2);
        let zero = tau_a(&t, 0, &[AtomRef::ROOT]).unwrap();
        assert!(indicator_process(&zero).levels().iter().flatten().all(|&v| v == 1.0));
        let never = StoppingTime::never(t.clone());
        assert!(indicator_process(&never).levels().iter().flatten().all(|&v| v == 0.0));
        let left = tau_a(&t, 1, &[AtomRef::new(1, 0)]).unwrap();
        let ind = indicator_process(&left);
        assert_eq!(ind.level(0), &[0.0]);
        assert_eq!(ind.level(1), &[1.0, 0.0]);
        assert_eq!(ind.level(2), &[1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn stopped_before_examples() {
        let f = r1();
        let t = f.tree().clone();
        let zero = tau_a(&t, 0, &[AtomRef::ROOT]).unwrap();
        assert_eq!(stopped_before(&f, &zero).unwrap().values(), &[0.0, 0.0]);
        let never = StoppingTime::never(t.clone());
        assert_eq!(stopped_before(&f, &never).unwrap().values(), &[1.0, -1.0]);
        let one = tau_a(&t, 1, &[AtomRef::new(1, 0), AtomRef::new(1, 1)]).unwrap();
        assert_eq!(stopped_before(&f, &one).unwrap().values(), &[0.0, 0.0]);
    }

    #[test]
    fn tau_json_round_trip() {
        let t = Arc::new(build_random(2, 3, 3).unwrap());
        let tau = random_stopping_time(&t, 5, 0.3);
        let s = tau.to_json();
        assert!(s.starts_with(r#"{"schema":"tau/v1","stops":["#));
        let back = StoppingTime::from_json(t, &s).unwrap();
        assert_eq!(back, tau);
        assert_eq!(back.to_json(), s);
    }
}
