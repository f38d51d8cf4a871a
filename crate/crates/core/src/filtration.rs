//! Finite filtrations as rooted atom trees.
//!
//! Level `n` of the tree lists the atoms of `F_n` from left to right. Every
//! internal atom splits into a contiguous run of atoms on the next level, so
//! the descendants of an atom at any deeper level (in particular its leaves)
//! form a contiguous index range. All leaves sit at level `N = depth`, which
//! is also the horizon of every process defined on the tree.

use std::ops::Range;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::RandomVariable;

pub const TREE_SCHEMA: &str = "tree/v1";

/// Tolerance used when validating supplied masses.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Size limits applied by the generators and the loader.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeLimits {
    pub max_depth: usize,
    pub max_nodes: usize,
}

impl Default for TreeLimits {
    fn default() -> Self {
        TreeLimits {
            max_depth: 20,
            max_nodes: 1 << 22,
        }
    }
}

/// Position of an atom: its level and its index in the level's left-to-right order.
///
/// Serialized as the pair `[level, index]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct AtomRef {
    pub level: usize,
    pub index: usize,
}

impl AtomRef {
    pub const ROOT: AtomRef = AtomRef { level: 0, index: 0 };

    pub fn new(level: usize, index: usize) -> Self {
        AtomRef { level, index }
    }
}

impl From<(usize, usize)> for AtomRef {
    fn from((level, index): (usize, usize)) -> Self {
        AtomRef { level, index }
    }
}

impl From<AtomRef> for (usize, usize) {
    fn from(r: AtomRef) -> Self {
        (r.level, r.index)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub mass: f64,
    /// Index of the parent on the previous level; `None` for the root.
    pub parent: Option<usize>,
    /// Children as indices on the next level (empty for leaves).
    pub children: Range<usize>,
    /// Leaves below this atom as indices on level `depth`.
    pub leaves: Range<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiltrationTree {
    depth: usize,
    levels: Vec<Vec<Atom>>,
}

/// Nested form of a tree node, as used by the JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub mass: f64,
    #[serde(default)]
    pub children: Vec<NodeSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TreeDocument {
    pub schema: String,
    pub depth: usize,
    pub root: NodeSpec,
}

impl FiltrationTree {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn num_leaves(&self) -> usize {
        self.levels[self.depth].len()
    }

    pub fn num_atoms(&self, level: usize) -> usize {
        self.levels.get(level).map_or(0, Vec::len)
    }

    pub fn num_nodes(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    /// Atoms of `F_level`, left to right. Panics on an invalid level.
    pub fn level(&self, level: usize) -> &[Atom] {
        &self.levels[level]
    }

    pub fn leaves(&self) -> &[Atom] {
        &self.levels[self.depth]
    }

    pub fn leaf_mass(&self, leaf: usize) -> f64 {
        self.levels[self.depth][leaf].mass
    }

    pub fn check_level(&self, level: usize) -> Result<()> {
        if level > self.depth {
            return Err(Error::out_of_range(
                "level",
                level,
                format!("0..={}", self.depth),
            ));
        }
        Ok(())
    }

    pub fn atom(&self, r: AtomRef) -> Result<&Atom> {
        self.check_level(r.level)?;
        self.levels[r.level].get(r.index).ok_or_else(|| {
            Error::out_of_range(
                "atom index",
                r.index,
                format!("0..{} on level {}", self.levels[r.level].len(), r.level),
            )
        })
    }

    pub fn mass(&self, r: AtomRef) -> Result<f64> {
        Ok(self.atom(r)?.mass)
    }

    pub fn atoms_at_level(&self, level: usize) -> Result<Vec<AtomRef>> {
        self.check_level(level)?;
        Ok((0..self.levels[level].len())
            .map(|index| AtomRef { level, index })
            .collect())
    }

    /// The ancestor at `level` of the atom `r` (which must be at `level` or deeper).
    pub fn atom_containing(&self, r: AtomRef, level: usize) -> Result<AtomRef> {
        self.atom(r)?;
        if level > r.level {
            return Err(Error::out_of_range(
                "ancestor level",
                level,
                format!("0..={}", r.level),
            ));
        }
        let mut index = r.index;
        for l in (level + 1..=r.level).rev() {
            index = self.levels[l][index].parent.expect("non-root atom has a parent");
        }
        Ok(AtomRef { level, index })
    }

    /// For every leaf, the index of its ancestor on `level`.
    pub fn leaf_ancestors(&self, level: usize) -> Vec<usize> {
        let mut out = vec![0; self.num_leaves()];
        for (i, atom) in self.levels[level].iter().enumerate() {
            out[atom.leaves.clone()].fill(i);
        }
        out
    }

    /// Whether `a` is an ancestor of (or equal to) `b`.
    pub fn is_ancestor_or_self(&self, a: AtomRef, b: AtomRef) -> bool {
        if a.level > b.level {
            return false;
        }
        let la = &self.levels[a.level][a.index].leaves;
        let lb = &self.levels[b.level][b.index].leaves;
        la.start <= lb.start && lb.end <= la.end
    }

    /// Builds a tree from its nested description, validating every invariant.
    pub fn from_spec(depth: usize, root: &NodeSpec) -> Result<Self> {
        Self::from_spec_with(depth, root, &TreeLimits::default())
    }

    pub fn from_spec_with(depth: usize, root: &NodeSpec, limits: &TreeLimits) -> Result<Self> {
        if depth > limits.max_depth {
            return Err(Error::Size {
                what: "tree depth",
                size: depth as u128,
                cap: limits.max_depth as u128,
                hint: None,
            });
        }
        if (root.mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::validation(
                "tree",
                "root",
                format!("root mass must be 1, got {}", root.mass),
            ));
        }
        let mut count = 0usize;
        validate_node(root, 0, depth, "root".to_string(), &mut count, limits)?;

        let mut frontier: Vec<&NodeSpec> = vec![root];
        let mut levels = Vec::with_capacity(depth + 1);
        let mut parents: Vec<Option<usize>> = vec![None];
        for _ in 0..=depth {
            let mut next = Vec::new();
            let mut next_parents = Vec::new();
            let mut atoms = Vec::with_capacity(frontier.len());
            for (i, (node, parent)) in frontier.iter().zip(&parents).enumerate() {
                let start = next.len();
                for child in &node.children {
                    next.push(child);
                    next_parents.push(Some(i));
                }
                atoms.push(Atom {
                    mass: node.mass,
                    parent: *parent,
                    children: start..next.len(),
                    leaves: 0..0,
                });
            }
            levels.push(atoms);
            frontier = next;
            parents = next_parents;
        }
        let tree = FiltrationTree::finish(depth, levels);
        tree.check_level_sums()?;
        Ok(tree)
    }

    /// Fills the leaf ranges bottom-up.
    fn finish(depth: usize, mut levels: Vec<Vec<Atom>>) -> Self {
        for (i, atom) in levels[depth].iter_mut().enumerate() {
            atom.leaves = i..i + 1;
        }
        for n in (0..depth).rev() {
            let (upper, lower) = levels.split_at_mut(n + 1);
            for atom in upper[n].iter_mut() {
                let first = &lower[0][atom.children.start];
                let last = &lower[0][atom.children.end - 1];
                atom.leaves = first.leaves.start..last.leaves.end;
            }
        }
        FiltrationTree { depth, levels }
    }

    fn check_level_sums(&self) -> Result<()> {
        for (n, atoms) in self.levels.iter().enumerate() {
            let total: f64 = atoms.iter().map(|a| a.mass).sum();
            if (total - 1.0).abs() > MASS_TOLERANCE {
                return Err(Error::validation(
                    "tree",
                    format!("level {n}"),
                    format!("atom masses sum to {total}, expected 1"),
                ));
            }
        }
        Ok(())
    }

    /// Grows a tree level by level; `split` returns the children masses of an
    /// atom given its level and mass.
    fn grow(
        depth: usize,
        limits: &TreeLimits,
        mut split: impl FnMut(usize, f64) -> Vec<f64>,
    ) -> Result<Self> {
        if depth > limits.max_depth {
            return Err(Error::Size {
                what: "tree depth",
                size: depth as u128,
                cap: limits.max_depth as u128,
                hint: None,
            });
        }
        let mut levels: Vec<Vec<Atom>> = vec![vec![Atom {
            mass: 1.0,
            parent: None,
            children: 0..0,
            leaves: 0..0,
        }]];
        let mut total = 1usize;
        for n in 0..depth {
            let mut next = Vec::new();
            for (i, atom) in levels[n].iter_mut().enumerate() {
                let start = next.len();
                for mass in split(n, atom.mass) {
                    next.push(Atom {
                        mass,
                        parent: Some(i),
                        children: 0..0,
                        leaves: 0..0,
                    });
                }
                atom.children = start..next.len();
                total += atom.children.len();
                if total > limits.max_nodes {
                    return Err(Error::Size {
                        what: "tree nodes",
                        size: total as u128,
                        cap: limits.max_nodes as u128,
                        hint: None,
                    });
                }
            }
            levels.push(next);
        }
        Ok(FiltrationTree::finish(depth, levels))
    }

    pub fn to_spec(&self) -> NodeSpec {
        self.spec_of(AtomRef::ROOT)
    }

    fn spec_of(&self, r: AtomRef) -> NodeSpec {
        let atom = &self.levels[r.level][r.index];
        NodeSpec {
            mass: atom.mass,
            children: atom
                .children
                .clone()
                .map(|c| self.spec_of(AtomRef::new(r.level + 1, c)))
                .collect(),
        }
    }

    pub fn to_document(&self) -> TreeDocument {
        TreeDocument {
            schema: TREE_SCHEMA.to_string(),
            depth: self.depth,
            root: self.to_spec(),
        }
    }

    pub fn from_document(doc: &TreeDocument) -> Result<Self> {
        if doc.schema != TREE_SCHEMA {
            return Err(Error::Schema {
                expected: TREE_SCHEMA,
                found: doc.schema.clone(),
            });
        }
        Self::from_spec(doc.depth, &doc.root)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("tree serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: TreeDocument = crate::error::parse_json(s)?;
        Self::from_document(&doc)
    }
}

fn validate_node(
    node: &NodeSpec,
    level: usize,
    depth: usize,
    path: String,
    count: &mut usize,
    limits: &TreeLimits,
) -> Result<()> {
    *count += 1;
    if *count > limits.max_nodes {
        return Err(Error::Size {
            what: "tree nodes",
            size: *count as u128,
            cap: limits.max_nodes as u128,
            hint: None,
        });
    }
    if !node.mass.is_finite() || node.mass <= 0.0 || node.mass > 1.0 + MASS_TOLERANCE {
        return Err(Error::validation(
            "tree",
            path,
            format!("mass {} outside (0, 1]", node.mass),
        ));
    }
    if level == depth {
        if !node.children.is_empty() {
            return Err(Error::validation(
                "tree",
                path,
                format!("atom at horizon level {depth} has children"),
            ));
        }
        return Ok(());
    }
    if node.children.is_empty() {
        return Err(Error::validation(
            "tree",
            path,
            format!("leaf at level {level} above the horizon {depth}"),
        ));
    }
    let total: f64 = node.children.iter().map(|c| c.mass).sum();
    if (total - node.mass).abs() > MASS_TOLERANCE {
        return Err(Error::validation(
            "tree",
            path,
            format!("children masses sum to {total}, parent mass is {}", node.mass),
        ));
    }
    for (i, child) in node.children.iter().enumerate() {
        validate_node(
            child,
            level + 1,
            depth,
            format!("{path}.children[{i}]"),
            count,
            limits,
        )?;
    }
    Ok(())
}

/// The uniform binary tree: each atom at level `n` has mass `2^-n`.
pub fn build_dyadic(depth: usize) -> Result<FiltrationTree> {
    build_dyadic_with(depth, &TreeLimits::default())
}

pub fn build_dyadic_with(depth: usize, limits: &TreeLimits) -> Result<FiltrationTree> {
    FiltrationTree::grow(depth, limits, |_, mass| vec![mass / 2.0, mass / 2.0])
}

/// A random tree, deterministic in `seed`. Each internal atom gets between 1
/// and `max_branch` children whose masses are a random positive partition of
/// the parent's mass; the last child takes the exact remainder.
pub fn build_random(seed: u64, depth: usize, max_branch: usize) -> Result<FiltrationTree> {
    build_random_with(seed, depth, max_branch, &TreeLimits::default())
}

pub fn build_random_with(
    seed: u64,
    depth: usize,
    max_branch: usize,
    limits: &TreeLimits,
) -> Result<FiltrationTree> {
    if max_branch == 0 {
        return Err(Error::out_of_range("max_branch", 0, ">= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FiltrationTree::grow(depth, limits, |_, mass| {
        let k = rng.random_range(1..=max_branch);
        if k == 1 {
            return vec![mass];
        }
        // Exp(1) weights give a Dirichlet(1, .., 1) split; the floor keeps
        // every child away from zero mass.
        let weights: Vec<f64> = (0..k)
            .map(|_| 0.05 + Distribution::<f64>::sample(&Exp1, &mut rng))
            .collect();
        let total: f64 = weights.iter().sum();
        let mut out = Vec::with_capacity(k);
        let mut used = 0.0;
        for w in &weights[..k - 1] {
            let m = mass * w / total;
            used += m;
            out.push(m);
        }
        out.push(mass - used);
        out
    })
}

/// `omega_n`: on each leaf, the mass of the level-`n` atom containing it.
pub fn omega_weight(tree: &Arc<FiltrationTree>, level: usize) -> Result<RandomVariable> {
    tree.check_level(level)?;
    let mut values = vec![0.0; tree.num_leaves()];
    for atom in tree.level(level) {
        values[atom.leaves.clone()].fill(atom.mass);
    }
    RandomVariable::new(tree.clone(), 1, values)
}
