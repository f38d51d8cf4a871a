//! Random variables, adapted processes and martingales on a filtration tree.
//!
//! Values are stored flat, `dim` consecutive reals per atom, so scalar and
//! finite-dimensional Hilbert-valued processes share one representation.
//! Every `|.|` below is the Euclidean norm of a value.

use std::ops::Deref;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtration::{FiltrationTree, TreeDocument};

pub const PROCESS_SCHEMA: &str = "process/v1";
pub const RV_SCHEMA: &str = "rv/v1";

/// Absolute tolerance of the martingale property check.
pub const MARTINGALE_TOLERANCE: f64 = 1e-10;

pub(crate) fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    norm_sq(v).sqrt()
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn same_tree(a: &Arc<FiltrationTree>, b: &Arc<FiltrationTree>) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(Error::TreeMismatch)
    }
}

fn check_finite(what: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::validation(what, format!("value {i}"), "not finite")),
        None => Ok(()),
    }
}

/// A function on the leaves (the finest atoms) with values in `R^dim`.
#[derive(Clone, Debug)]
pub struct RandomVariable {
    tree: Arc<FiltrationTree>,
    dim: usize,
    values: Vec<f64>,
}

impl PartialEq for RandomVariable {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.values == other.values && *self.tree == *other.tree
    }
}

impl RandomVariable {
    pub fn new(tree: Arc<FiltrationTree>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::out_of_range("dim", 0, ">= 1"));
        }
        if values.len() != tree.num_leaves() * dim {
            return Err(Error::validation(
                "random variable",
                "values",
                format!(
                    "expected {} values ({} leaves x dim {dim}), got {}",
                    tree.num_leaves() * dim,
                    tree.num_leaves(),
                    values.len()
                ),
            ));
        }
        check_finite("random variable", &values)?;
        Ok(RandomVariable { tree, dim, values })
    }

    pub fn scalar(tree: Arc<FiltrationTree>, values: Vec<f64>) -> Result<Self> {
        Self::new(tree, 1, values)
    }

    pub fn constant(tree: Arc<FiltrationTree>, value: &[f64]) -> Result<Self> {
        let values = value.repeat(tree.num_leaves());
        Self::new(tree, value.len(), values)
    }

    pub fn tree(&self) -> &Arc<FiltrationTree> {
        &self.tree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, leaf: usize) -> &[f64] {
        &self.values[leaf * self.dim..(leaf + 1) * self.dim]
    }

    /// `|X|` on each leaf.
    pub fn abs(&self) -> Vec<f64> {
        self.values.chunks(self.dim).map(norm).collect()
    }

    /// `E X` (componentwise).
    pub fn expectation(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (leaf, atom) in self.tree.leaves().iter().enumerate() {
            for (o, v) in out.iter_mut().zip(self.value(leaf)) {
                *o += v * atom.mass;
            }
        }
        out
    }

    pub fn to_document(&self) -> RvDocument {
        RvDocument {
            schema: RV_SCHEMA.to_string(),
            tree: TreeRef::Inline(self.tree.to_document()),
            dim: Some(self.dim),
            leaves: self.values.chunks(self.dim).map(<[f64]>::to_vec).collect(),
        }
    }

    pub fn from_document(doc: &RvDocument, base: Option<&Path>) -> Result<Self> {
        if doc.schema != RV_SCHEMA {
            return Err(Error::Schema {
                expected: RV_SCHEMA,
                found: doc.schema.clone(),
            });
        }
        let tree = Arc::new(doc.tree.resolve(base)?);
        let dim = infer_dim(doc.dim, doc.leaves.first());
        let values = flatten_rows("random variable", "leaves", &doc.leaves, dim)?;
        Self::new(tree, dim, values)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("random variable serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(&crate::error::parse_json(s)?, None)
    }
}

/// A process `(g_n)_{n=0..N}`; `g_n` is stored per level-`n` atom, so
/// adaptedness holds by construction.
#[derive(Clone, Debug)]
pub struct AdaptedProcess {
    tree: Arc<FiltrationTree>,
    dim: usize,
    levels: Vec<Vec<f64>>,
}

impl PartialEq for AdaptedProcess {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.levels == other.levels && *self.tree == *other.tree
    }
}

impl AdaptedProcess {
    pub fn new(tree: Arc<FiltrationTree>, dim: usize, levels: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::out_of_range("dim", 0, ">= 1"));
        }
        if levels.len() != tree.depth() + 1 {
            return Err(Error::validation(
                "process",
                "levels",
                format!("expected {} levels, got {}", tree.depth() + 1, levels.len()),
            ));
        }
        for (n, level) in levels.iter().enumerate() {
            if level.len() != tree.num_atoms(n) * dim {
                return Err(Error::validation(
                    "process",
                    format!("levels[{n}]"),
                    format!(
                        "expected {} atoms x dim {dim}, got {} values",
                        tree.num_atoms(n),
                        level.len()
                    ),
                ));
            }
            check_finite("process", level)?;
        }
        Ok(AdaptedProcess { tree, dim, levels })
    }

    /// Builds a process by evaluating `value(level, atom, out)` on every atom.
    pub fn from_fn(
        tree: Arc<FiltrationTree>,
        dim: usize,
        mut value: impl FnMut(usize, usize, &mut [f64]),
    ) -> Result<Self> {
        let levels = (0..=tree.depth())
            .map(|n| {
                let mut level = vec![0.0; tree.num_atoms(n) * dim];
                for (i, out) in level.chunks_mut(dim).enumerate() {
                    value(n, i, out);
                }
                level
            })
            .collect();
        Self::new(tree, dim, levels)
    }

    pub fn zero(tree: Arc<FiltrationTree>, dim: usize) -> Self {
        Self::from_fn(tree, dim, |_, _, _| {}).expect("zero process is valid")
    }

    pub fn tree(&self) -> &Arc<FiltrationTree> {
        &self.tree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> usize {
        self.tree.depth()
    }

    pub fn level(&self, n: usize) -> &[f64] {
        &self.levels[n]
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    pub fn value(&self, n: usize, atom: usize) -> &[f64] {
        &self.levels[n][atom * self.dim..(atom + 1) * self.dim]
    }

    /// `g_N` as a random variable.
    pub fn final_value(&self) -> RandomVariable {
        RandomVariable {
            tree: self.tree.clone(),
            dim: self.dim,
            values: self.levels[self.tree.depth()].clone(),
        }
    }

    /// `g_n` lifted to the leaves.
    pub fn lift(&self, n: usize) -> Result<RandomVariable> {
        self.tree.check_level(n)?;
        let mut values = vec![0.0; self.tree.num_leaves() * self.dim];
        for (i, atom) in self.tree.level(n).iter().enumerate() {
            let v = self.value(n, i);
            for leaf in atom.leaves.clone() {
                values[leaf * self.dim..(leaf + 1) * self.dim].copy_from_slice(v);
            }
        }
        Ok(RandomVariable {
            tree: self.tree.clone(),
            dim: self.dim,
            values,
        })
    }

    /// The value of `g_{n-1}` on the parent of level-`n` atom `atom`, with `g_{-1} = 0`.
    pub fn previous(&self, n: usize, atom: usize) -> Option<&[f64]> {
        if n == 0 {
            None
        } else {
            let parent = self.tree.level(n)[atom].parent.expect("non-root atom");
            Some(self.value(n - 1, parent))
        }
    }

    pub fn to_document(&self) -> ProcessDocument {
        ProcessDocument {
            schema: PROCESS_SCHEMA.to_string(),
            tree: TreeRef::Inline(self.tree.to_document()),
            dim: Some(self.dim),
            levels: self
                .levels
                .iter()
                .map(|l| l.chunks(self.dim).map(<[f64]>::to_vec).collect())
                .collect(),
        }
    }

    pub fn from_document(doc: &ProcessDocument, base: Option<&Path>) -> Result<Self> {
        if doc.schema != PROCESS_SCHEMA {
            return Err(Error::Schema {
                expected: PROCESS_SCHEMA,
                found: doc.schema.clone(),
            });
        }
        let tree = Arc::new(doc.tree.resolve(base)?);
        let dim = infer_dim(doc.dim, doc.levels.first().and_then(|l| l.first()));
        let levels = doc
            .levels
            .iter()
            .enumerate()
            .map(|(n, rows)| flatten_rows("process", &format!("levels[{n}]"), rows, dim))
            .collect::<Result<Vec<_>>>()?;
        Self::new(tree, dim, levels)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("process serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(&crate::error::parse_json(s)?, None)
    }
}

fn infer_dim(declared: Option<usize>, first: Option<&Vec<f64>>) -> usize {
    declared.or(first.map(Vec::len)).unwrap_or(1)
}

fn flatten_rows(what: &'static str, field: &str, rows: &[Vec<f64>], dim: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(rows.len() * dim);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::validation(
                what,
                format!("{field}[{i}]"),
                format!("expected {dim} components, got {}", row.len()),
            ));
        }
        out.extend_from_slice(row);
    }
    Ok(out)
}

/// An adapted process satisfying `E(f_{n+1} | F_n) = f_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Martingale(AdaptedProcess);

impl Deref for Martingale {
    type Target = AdaptedProcess;

    fn deref(&self) -> &AdaptedProcess {
        &self.0
    }
}

impl Martingale {
    /// Checks the martingale property on every internal atom.
    pub fn new(process: AdaptedProcess) -> Result<Self> {
        let tree = process.tree.clone();
        let dim = process.dim;
        for n in 0..tree.depth() {
            let children = tree.level(n + 1);
            for (i, atom) in tree.level(n).iter().enumerate() {
                let v = process.value(n, i);
                for c in 0..dim {
                    let lhs = v[c] * atom.mass;
                    let rhs: f64 = atom
                        .children
                        .clone()
                        .map(|j| process.value(n + 1, j)[c] * children[j].mass)
                        .sum();
                    if (lhs - rhs).abs() > MARTINGALE_TOLERANCE {
                        return Err(Error::validation(
                            "martingale",
                            format!("level {n} atom {i} component {c}"),
                            format!("value*mass {lhs} differs from children sum {rhs}"),
                        ));
                    }
                }
            }
        }
        Ok(Martingale(process))
    }

    pub fn zero(tree: Arc<FiltrationTree>, dim: usize) -> Self {
        Martingale(AdaptedProcess::zero(tree, dim))
    }

    pub fn process(&self) -> &AdaptedProcess {
        &self.0
    }

    pub fn into_process(self) -> AdaptedProcess {
        self.0
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::new(AdaptedProcess::from_json(s)?)
    }
}

/// `d_k f` for `k = 0..=N`, stored per level-`k` atom (`d_0 f = f_0`).
#[derive(Clone, Debug, PartialEq)]
pub struct DifferenceSequence(AdaptedProcess);

impl Deref for DifferenceSequence {
    type Target = AdaptedProcess;

    fn deref(&self) -> &AdaptedProcess {
        &self.0
    }
}

impl DifferenceSequence {
    /// `sum_{k<=n} d_k f` on every level-`n` atom.
    pub fn partial_sums(&self) -> AdaptedProcess {
        let tree = self.0.tree.clone();
        let dim = self.0.dim;
        let mut levels: Vec<Vec<f64>> = Vec::with_capacity(tree.depth() + 1);
        for n in 0..=tree.depth() {
            let mut level = self.0.levels[n].clone();
            if n > 0 {
                for (i, atom) in tree.level(n).iter().enumerate() {
                    let p = atom.parent.expect("non-root atom");
                    for c in 0..dim {
                        level[i * dim + c] += levels[n - 1][p * dim + c];
                    }
                }
            }
            levels.push(level);
        }
        AdaptedProcess { tree, dim, levels }
    }
}

/// A scalar multiplier sequence `v_k`, where `v_k` is constant on the atoms of
/// `F_{k-1}` and `v_0` is a single global scalar.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictableSequence {
    tree: Arc<FiltrationTree>,
    /// `values[k]` is indexed by the atoms of level `max(k, 1) - 1`.
    values: Vec<Vec<f64>>,
}

impl PredictableSequence {
    pub fn new(tree: Arc<FiltrationTree>, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != tree.depth() + 1 {
            return Err(Error::validation(
                "predictable sequence",
                "values",
                format!("expected {} entries, got {}", tree.depth() + 1, values.len()),
            ));
        }
        for (k, v) in values.iter().enumerate() {
            let expected = tree.num_atoms(k.max(1) - 1);
            if v.len() != expected {
                return Err(Error::validation(
                    "predictable sequence",
                    format!("values[{k}]"),
                    format!("expected {expected} values (one per level-{} atom), got {}", k.max(1) - 1, v.len()),
                ));
            }
            check_finite("predictable sequence", v)?;
        }
        Ok(PredictableSequence { tree, values })
    }

    pub fn constant(tree: Arc<FiltrationTree>, c: f64) -> Result<Self> {
        let values = (0..=tree.depth())
            .map(|k| vec![c; tree.num_atoms(k.max(1) - 1)])
            .collect();
        Self::new(tree, values)
    }

    pub fn tree(&self) -> &Arc<FiltrationTree> {
        &self.tree
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// `v_k` on the level-`k` atom `atom`.
    pub fn at(&self, k: usize, atom: usize) -> f64 {
        if k == 0 {
            self.values[0][0]
        } else {
            let parent = self.tree.level(k)[atom].parent.expect("non-root atom");
            self.values[k][parent]
        }
    }

    /// `sup_k ||v_k||_inf`.
    pub fn bound(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// `E(X | F_n)` as flat per-atom values on level `n`.
pub fn conditional_expectation(x: &RandomVariable, n: usize) -> Result<Vec<f64>> {
    let tree = &x.tree;
    tree.check_level(n)?;
    let dim = x.dim;
    let mut out = vec![0.0; tree.num_atoms(n) * dim];
    for (i, atom) in tree.level(n).iter().enumerate() {
        let slot = &mut out[i * dim..(i + 1) * dim];
        for leaf in atom.leaves.clone() {
            let m = tree.leaf_mass(leaf);
            for (s, v) in slot.iter_mut().zip(x.value(leaf)) {
                *s += v * m;
            }
        }
        for s in slot.iter_mut() {
            *s /= atom.mass;
        }
    }
    Ok(out)
}

/// The martingale `f_n = E(X | F_n)` closed by `X`.
pub fn martingale_from_final(x: &RandomVariable) -> Martingale {
    let tree = x.tree.clone();
    let dim = x.dim;
    let depth = tree.depth();
    // integrals of X over each atom, bottom-up
    let mut integrals: Vec<Vec<f64>> = vec![Vec::new(); depth + 1];
    integrals[depth] = x
        .values
        .chunks(dim)
        .zip(tree.leaves())
        .flat_map(|(v, a)| v.iter().map(move |c| c * a.mass))
        .collect();
    for n in (0..depth).rev() {
        let mut level = vec![0.0; tree.num_atoms(n) * dim];
        for (i, atom) in tree.level(n).iter().enumerate() {
            for j in atom.children.clone() {
                for c in 0..dim {
                    level[i * dim + c] += integrals[n + 1][j * dim + c];
                }
            }
        }
        integrals[n] = level;
    }
    let mut levels = integrals;
    levels[depth] = x.values.clone();
    for n in 0..depth {
        for (i, atom) in tree.level(n).iter().enumerate() {
            for c in 0..dim {
                levels[n][i * dim + c] /= atom.mass;
            }
        }
    }
    Martingale(AdaptedProcess { tree, dim, levels })
}

/// `d_k f = f_k - f_{k-1}` on level-`k` atoms, with `f_{-1} = 0`.
pub fn differences(f: &Martingale) -> DifferenceSequence {
    differences_of(f.process())
}

pub(crate) fn differences_of(g: &AdaptedProcess) -> DifferenceSequence {
    let dim = g.dim;
    let levels = (0..=g.horizon())
        .map(|n| {
            let mut level = g.levels[n].clone();
            for i in 0..g.tree.num_atoms(n) {
                if let Some(prev) = g.previous(n, i) {
                    for c in 0..dim {
                        level[i * dim + c] -= prev[c];
                    }
                }
            }
            level
        })
        .collect();
    DifferenceSequence(AdaptedProcess {
        tree: g.tree.clone(),
        dim,
        levels,
    })
}

/// Leaf values i.i.d. standard normal per coordinate, closed into a martingale.
pub fn random_martingale(tree: &Arc<FiltrationTree>, seed: u64, dim: usize) -> Result<Martingale> {
    if dim == 0 {
        return Err(Error::out_of_range("dim", 0, ">= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..tree.num_leaves() * dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    Ok(martingale_from_final(&RandomVariable::new(tree.clone(), dim, values)?))
}

/// An adapted process with i.i.d. standard normal values on every atom.
pub fn random_adapted(tree: &Arc<FiltrationTree>, seed: u64, dim: usize) -> Result<AdaptedProcess> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AdaptedProcess::from_fn(tree.clone(), dim, |_, _, out| {
        for o in out {
            *o = StandardNormal.sample(&mut rng);
        }
    })
}

/// The `tree` field of process, random-variable and measure documents: either
/// an inline `tree/v1` document or a path to one.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeRef {
    Inline(TreeDocument),
    Path(String),
}

impl TreeRef {
    /// Loads the tree; relative paths are resolved against `base`.
    pub fn resolve(&self, base: Option<&Path>) -> Result<FiltrationTree> {
        match self {
            TreeRef::Inline(doc) => FiltrationTree::from_document(doc),
            TreeRef::Path(p) => {
                let path = match base {
                    Some(b) if Path::new(p).is_relative() => b.join(p),
                    _ => Path::new(p).to_path_buf(),
                };
                FiltrationTree::from_json(&std::fs::read_to_string(path)?)
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProcessDocument {
    pub schema: String,
    pub tree: TreeRef,
    /// Inferred from the first value when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    pub levels: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RvDocument {
    pub schema: String,
    pub tree: TreeRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    pub leaves: Vec<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtration::{build_dyadic, build_random};

    fn dyadic(depth: usize) -> Arc<FiltrationTree> {
        Arc::new(build_dyadic(depth).unwrap())
    }

    #[test]
    fn conditional_expectation_examples() {
        let t = dyadic(2);
        let c = RandomVariable::constant(t.clone(), &[3.5]).unwrap();
        for n in 0..=2 {
            assert!(conditional_expectation(&c, n).unwrap().iter().all(|&v| v == 3.5));
        }

        let t1 = dyadic(1);
        let x = RandomVariable::scalar(t1, vec![1.0, 3.0]).unwrap();
        assert_eq!(conditional_expectation(&x, 0).unwrap(), vec![2.0]);

        let x = RandomVariable::scalar(t.clone(), vec![2.0, 0.0, -1.0, -1.0]).unwrap();
        assert_eq!(conditional_expectation(&x, 1).unwrap(), vec![1.0, -1.0]);
        assert!(conditional_expectation(&x, 3).is_err());
    }

    #[test]
    fn martingale_examples() {
        let t1 = dyadic(1);
        let r1 = martingale_from_final(&RandomVariable::scalar(t1, vec![1.0, -1.0]).unwrap());
        assert_eq!(r1.level(0), &[0.0]);
        assert_eq!(r1.level(1), &[1.0, -1.0]);
        let d = differences(&r1);
        assert_eq!(d.level(0), &[0.0]);
        assert_eq!(d.level(1), &[1.0, -1.0]);

        let t2 = dyadic(2);
        let d2f =
            martingale_from_final(&RandomVariable::scalar(t2.clone(), vec![2.0, 0.0, -1.0, -1.0]).unwrap());
        assert_eq!(d2f.level(0), &[0.0]);
        assert_eq!(d2f.level(1), &[1.0, -1.0]);
        let d = differences(&d2f);
        assert_eq!(d.level(1), &[1.0, -1.0]);
        assert_eq!(d.level(2), &[1.0, -1.0, 0.0, 0.0]);

        let zero = martingale_from_final(&RandomVariable::constant(t2.clone(), &[0.0]).unwrap());
        assert!(zero.levels().iter().flatten().all(|&v| v == 0.0));

        let c = martingale_from_final(&RandomVariable::constant(t2, &[2.5]).unwrap());
        let d = differences(&c);
        assert_eq!(d.level(0), &[2.5]);
        assert!(d.level(1).iter().chain(d.level(2)).all(|&v| v == 0.0));
    }

    #[test]
    fn martingale_check_rejects_non_martingale() {
        let t = dyadic(1);
        let p = AdaptedProcess::new(t, 1, vec![vec![0.5], vec![1.0, -1.0]]).unwrap();
        let err = Martingale::new(p).unwrap_err().to_string();
        assert!(err.contains("level 0 atom 0"), "{err}");
    }

    #[test]
    fn shape_validation() {
        let t = dyadic(1);
        assert!(RandomVariable::scalar(t.clone(), vec![1.0]).is_err());
        assert!(RandomVariable::scalar(t.clone(), vec![1.0, f64::NAN]).is_err());
        assert!(AdaptedProcess::new(t.clone(), 1, vec![vec![0.0]]).is_err());
        assert!(AdaptedProcess::new(t.clone(), 2, vec![vec![0.0], vec![0.0; 4]]).is_err());
        assert!(PredictableSequence::new(t.clone(), vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(PredictableSequence::new(t, vec![vec![1.0], vec![2.0]]).is_ok());
    }

    #[test]
    fn random_martingale_properties() {
        let t = Arc::new(build_random(5, 4, 3).unwrap());
        let f = random_martingale(&t, 11, 1).unwrap();
        assert!(Martingale::new(f.process().clone()).is_ok());
        let g = random_martingale(&t, 11, 1).unwrap();
        assert_eq!(f, g);

        let v = random_martingale(&t, 12, 3).unwrap();
        for c in 0..3 {
            let levels = v
                .levels()
                .iter()
                .map(|l| l.chunks(3).map(|x| x[c]).collect())
                .collect();
            let slice = AdaptedProcess::new(t.clone(), 1, levels).unwrap();
            assert!(Martingale::new(slice).is_ok());
        }
    }

    #[test]
    fn partial_sums_telescope() {
        let t = Arc::new(build_random(8, 4, 3).unwrap());
        let f = random_martingale(&t, 1, 2).unwrap();
        let s = differences(&f).partial_sums();
        for n in 0..=4 {
            for (a, b) in s.level(n).iter().zip(f.level(n)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn predictable_lookup() {
        let t = dyadic(2);
        let v = PredictableSequence::new(
            t,
            vec![vec![0.5], vec![-2.0], vec![1.0, 3.0]],
        )
        .unwrap();
        assert_eq!(v.at(0, 0), 0.5);
        assert_eq!(v.at(1, 1), -2.0);
        assert_eq!(v.at(2, 1), 1.0);
        assert_eq!(v.at(2, 2), 3.0);
        assert_eq!(v.bound(), 3.0);
    }

    #[test]
    fn json_round_trips() {
        let t = Arc::new(build_random(3, 3, 3).unwrap());
        let f = random_martingale(&t, 4, 2).unwrap();
        let s = f.to_json();
        let back = AdaptedProcess::from_json(&s).unwrap();
        assert_eq!(&back, f.process());
        assert_eq!(back.to_json(), s);

        let x = f.final_value();
        let s = x.to_json();
        let back = RandomVariable::from_json(&s).unwrap();
        assert_eq!(back, x);
        assert_eq!(back.to_json(), s);
    }

    #[test]
    fn tree_by_path() {
        let dir = std::env::temp_dir().join(format!("bmo-lab-proc-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let t = build_dyadic(1).unwrap();
        std::fs::write(dir.join("t.json"), t.to_json()).unwrap();
        let doc = r#"{"schema":"process/v1","tree":"t.json","dim":1,"levels":[[[0.0]],[[1.0],[-1.0]]]}"#;
        let p = AdaptedProcess::from_document(&serde_json::from_str(doc).unwrap(), Some(&dir)).unwrap();
        assert_eq!(p.level(1), &[1.0, -1.0]);
        std::fs::remove_dir_all(&dir).ok();
    }
}
