//! Rooted trees, tree densities, elementary weights and the Runge-Kutta order
//! conditions `Φ(t) = 1/γ(t)`.
//!
//! Trees are kept canonical: every child list is sorted by the level sequence
//! of the child, so isomorphic trees are structurally equal and compare equal.
//!
//! [`ConditionSet`] evaluates all elementary weights up to a given order in one
//! bottom-up sweep and is generic over the scalar, so the exact verifier and
//! the floating-point scheme search share the same definition of the residual.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::ops::{Add, Mul};

use num_traits::{One, Zero};

use crate::rational::Rational;
use crate::tableau::Tableau;

/// Largest order accepted by [`enumerate_trees`].
pub const MAX_TREE_ORDER: usize = 10;

/// Cap used by [`verified_order`].
pub const MAX_VERIFIED_ORDER: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OrderError {
    #[error("tree order {0} outside 1..={MAX_TREE_ORDER}")]
    MaxOrderOutOfRange(usize),
    #[error("invalid level sequence")]
    BadLevelSequence,
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RootedTree {
    children: Vec<RootedTree>,
}

impl RootedTree {
    pub fn leaf() -> Self {
        RootedTree {
            children: Vec::new(),
        }
    }

    /// Root joined to the given subtrees, in canonical order.
    pub fn new(mut children: Vec<RootedTree>) -> Self {
        children.sort();
        RootedTree { children }
    }

    pub fn children(&self) -> &[RootedTree] {
        &self.children
    }

    pub fn order(&self) -> usize {
        1 + self.children.iter().map(RootedTree::order).sum::<usize>()
    }

    /// γ(t) = |t| · Π γ(child).
    pub fn density(&self) -> Rational {
        Rational::from_integer(self.density_u64() as i64)
    }

    pub fn density_u64(&self) -> u64 {
        self.order() as u64 * self.children.iter().map(RootedTree::density_u64).product::<u64>()
    }

    /// Preorder node depths, root at depth 0.
    pub fn level_sequence(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.order());
        self.push_levels(0, &mut out);
        out
    }

    fn push_levels(&self, depth: u8, out: &mut Vec<u8>) {
        out.push(depth);
        for ch in &self.children {
            ch.push_levels(depth + 1, out);
        }
    }

    /// Rebuilds (and canonicalizes) a tree from any valid level sequence.
    pub fn from_level_sequence(seq: &[u8]) -> Result<Self, OrderError> {
        if seq.first() != Some(&0) {
            return Err(OrderError::BadLevelSequence);
        }
        let (tree, used) = Self::parse_levels(seq, 0)?;
        if used != seq.len() {
            return Err(OrderError::BadLevelSequence);
        }
        Ok(tree)
    }

    fn parse_levels(seq: &[u8], start: usize) -> Result<(Self, usize), OrderError> {
        let depth = seq[start];
        let mut children = Vec::new();
        let mut i = start + 1;
        while i < seq.len() && seq[i] > depth {
            if seq[i] != depth + 1 {
                return Err(OrderError::BadLevelSequence);
            }
            let (child, next) = Self::parse_levels(seq, i)?;
            children.push(child);
            i = next;
        }
        Ok((RootedTree::new(children), i))
    }

    /// Every tree obtained by attaching one new leaf to some node.
    fn grafts(&self) -> Vec<RootedTree> {
        let mut out = Vec::with_capacity(self.order());
        let mut at_root = self.children.clone();
        at_root.push(RootedTree::leaf());
        out.push(RootedTree::new(at_root));
        for (k, child) in self.children.iter().enumerate() {
            for grown in child.grafts() {
                let mut ch = self.children.clone();
                ch[k] = grown;
                out.push(RootedTree::new(ch));
            }
        }
        out
    }
}

impl Ord for RootedTree {
    fn cmp(&self, other: &Self) -> Ordering {
        self.level_sequence().cmp(&other.level_sequence())
    }
}

impl PartialOrd for RootedTree {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for RootedTree {
    /// Butcher bracket notation: `τ` for a leaf, `[τ,τ]` for a root with two leaves.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.children.is_empty() {
            return f.write_str("τ");
        }
        f.write_str("[")?;
        for (i, ch) in self.children.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", ch)?;
        }
        f.write_str("]")
    }
}

impl fmt::Debug for RootedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// All non-isomorphic rooted trees with `1 ..= max_order` nodes, sorted by
/// order and then by level sequence.
pub fn enumerate_trees(max_order: usize) -> Result<Vec<RootedTree>, OrderError> {
    if !(1..=MAX_TREE_ORDER).contains(&max_order) {
        return Err(OrderError::MaxOrderOutOfRange(max_order));
    }
    let mut all = vec![RootedTree::leaf()];
    let mut layer = vec![RootedTree::leaf()];
    for _ in 2..=max_order {
        let mut next: Vec<RootedTree> = layer.iter().flat_map(RootedTree::grafts).collect();
        next.sort();
        next.dedup();
        all.extend(next.iter().cloned());
        layer = next;
    }
    Ok(all)
}

/// Trees with exactly `order` nodes.
pub fn trees_of_order(order: usize) -> Result<Vec<RootedTree>, OrderError> {
    Ok(enumerate_trees(order)?
        .into_iter()
        .filter(|t| t.order() == order)
        .collect())
}

/// Anything shaped like a rooted tree. Lets the weight recursion run on
/// child lists in arbitrary order, not just canonical ones.
pub trait Branching: Sized {
    fn branches(&self) -> &[Self];
}

impl Branching for RootedTree {
    fn branches(&self) -> &[Self] {
        &self.children
    }
}

/// Per-stage weights φ_i(t) = Π_children (Σ_j a_ij φ_j(child)), with
/// φ_i(leaf) = 1.
pub fn stage_weights<T: Branching>(tab: &Tableau, t: &T) -> Vec<Rational> {
    let s = tab.stages();
    let mut phi = vec![Rational::one(); s];
    for child in t.branches() {
        let inner = stage_weights(tab, child);
        for (i, p) in phi.iter_mut().enumerate() {
            let sum: Rational = (0..i).map(|j| &tab.a()[i][j] * &inner[j]).sum();
            *p *= &sum;
        }
    }
    phi
}

/// Φ(t) = Σ_i b_i φ_i(t), exact.
pub fn elementary_weight_of<T: Branching>(tab: &Tableau, t: &T) -> Rational {
    let phi = stage_weights(tab, t);
    tab.b().iter().zip(&phi).map(|(b, p)| b * p).sum()
}

pub fn elementary_weight(tab: &Tableau, t: &RootedTree) -> Rational {
    elementary_weight_of(tab, t)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderCondition {
    pub tree: RootedTree,
    pub density: Rational,
    /// Φ(t) − 1/γ(t).
    pub residual: Rational,
}

impl OrderCondition {
    pub fn satisfied(&self) -> bool {
        self.residual.is_zero()
    }
}

/// Scalars the weight sweep can run over: exact rationals and `f64`.
pub trait Weight: Clone + Zero + One + Add<Output = Self> + Mul<Output = Self> {
    /// 1/γ for a tree density γ ≥ 1.
    fn inverse_density(gamma: u64) -> Self;
    fn sub(self, rhs: Self) -> Self;
}

impl Weight for f64 {
    fn inverse_density(gamma: u64) -> Self {
        1.0 / gamma as f64
    }
    fn sub(self, rhs: Self) -> Self {
        self - rhs
    }
}

impl Weight for Rational {
    fn inverse_density(gamma: u64) -> Self {
        Rational::from_bigints(1.into(), gamma.into()).expect("tree density is positive")
    }
    fn sub(self, rhs: Self) -> Self {
        self - rhs
    }
}

/// Every tree up to an order, indexed so each tree points at its children.
#[derive(Debug, Clone)]
pub struct ConditionSet {
    trees: Vec<RootedTree>,
    children: Vec<Vec<usize>>,
    densities: Vec<u64>,
}

impl ConditionSet {
    pub fn up_to_order(p: usize) -> Result<Self, OrderError> {
        let trees = enumerate_trees(p)?;
        let index: BTreeMap<&RootedTree, usize> =
            trees.iter().enumerate().map(|(i, t)| (t, i)).collect();
        let children = trees
            .iter()
            .map(|t| t.children().iter().map(|c| index[c]).collect())
            .collect();
        let densities = trees.iter().map(RootedTree::density_u64).collect();
        Ok(ConditionSet {
            trees,
            children,
            densities,
        })
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn trees(&self) -> &[RootedTree] {
        &self.trees
    }

    pub fn densities(&self) -> &[u64] {
        &self.densities
    }

    /// Φ(t) for every tree, in the set's order. `a` is the full square matrix;
    /// only its strictly-lower part is read.
    pub fn elementary_weights<T: Weight>(&self, a: &[Vec<T>], b: &[T]) -> Vec<T> {
        let s = b.len();
        let mut a_phi: Vec<Vec<T>> = Vec::with_capacity(self.trees.len());
        let mut out = Vec::with_capacity(self.trees.len());
        for kids in &self.children {
            let mut phi = vec![T::one(); s];
            for &k in kids {
                for (p, ap) in phi.iter_mut().zip(&a_phi[k]) {
                    *p = p.clone() * ap.clone();
                }
            }
            let mut ap = vec![T::zero(); s];
            for (i, slot) in ap.iter_mut().enumerate() {
                let mut acc = T::zero();
                for j in 0..i {
                    acc = acc + a[i][j].clone() * phi[j].clone();
                }
                *slot = acc;
            }
            let mut w = T::zero();
            for (bi, pi) in b.iter().zip(&phi) {
                w = w + bi.clone() * pi.clone();
            }
            a_phi.push(ap);
            out.push(w);
        }
        out
    }

    /// Φ(t) − 1/γ(t) for every tree.
    pub fn residuals<T: Weight>(&self, a: &[Vec<T>], b: &[T]) -> Vec<T> {
        self.elementary_weights(a, b)
            .into_iter()
            .zip(&self.densities)
            .map(|(w, &g)| w.sub(T::inverse_density(g)))
            .collect()
    }
}

/// Exact residuals for every tree of order ≤ `p`.
pub fn order_residuals(tab: &Tableau, p: usize) -> Result<Vec<OrderCondition>, OrderError> {
    let set = ConditionSet::up_to_order(p)?;
    let res = set.residuals(tab.a(), tab.b());
    Ok(set
        .trees
        .into_iter()
        .zip(set.densities)
        .zip(res)
        .map(|((tree, g), residual)| OrderCondition {
            tree,
            density: Rational::from_integer(g as i64),
            residual,
        })
        .collect())
}

/// Largest `p ≤ 8` for which every condition of order ≤ `p` holds exactly.
/// Zero means the scheme is not even consistent.
pub fn verified_order(tab: &Tableau) -> usize {
    let conds = order_residuals(tab, MAX_VERIFIED_ORDER).expect("cap is within range");
    let first_failure = conds
        .iter()
        .filter(|c| !c.satisfied())
        .map(|c| c.tree.order())
        .min();
    match first_failure {
        Some(o) => o - 1,
        None => MAX_VERIFIED_ORDER,
    }
}
