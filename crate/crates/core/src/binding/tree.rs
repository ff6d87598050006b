//! Rooted binary trees and the recursive binding `r_p = M₁·left + M₂·right`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SquareMatrix;
use crate::error::{check_dim, Error, Result};
use crate::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChildRole {
    Left,
    Right,
}

/// A rooted binary tree given by a parent array.
///
/// `parent[root]` and `role[root]` are `None`. Payloads are only needed for
/// binding; structural queries ignore them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSpec {
    pub parent: Vec<Option<usize>>,
    pub role: Vec<Option<ChildRole>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub payload: BTreeMap<usize, Vec<f64>>,
}

impl TreeSpec {
    /// Build and validate the structure (payloads may be attached later).
    pub fn new(parent: Vec<Option<usize>>, role: Vec<Option<ChildRole>>) -> Result<Self> {
        let t = Self {
            parent,
            role,
            payload: BTreeMap::new(),
        };
        t.validate_structure()?;
        Ok(t)
    }

    /// Path `0 – 1 – … – (n−1)`, rooted at 0, each node the left child of its predecessor.
    pub fn path(n: usize) -> Self {
        let parent = (0..n).map(|i| i.checked_sub(1)).collect();
        let role = (0..n)
            .map(|i| (i > 0).then_some(ChildRole::Left))
            .collect();
        Self {
            parent,
            role,
            payload: BTreeMap::new(),
        }
    }

    /// Complete binary tree of the given depth in heap order (root 0, children 2i+1, 2i+2).
    pub fn complete(depth: u32) -> Self {
        let n = (1usize << (depth + 1)) - 1;
        let parent = (0..n).map(|i| (i > 0).then(|| (i - 1) / 2)).collect();
        let role = (0..n)
            .map(|i| {
                (i > 0).then_some(if i % 2 == 1 {
                    ChildRole::Left
                } else {
                    ChildRole::Right
                })
            })
            .collect();
        Self {
            parent,
            role,
            payload: BTreeMap::new(),
        }
    }

    /// Random binary tree on `n` nodes: each new node attaches to a uniformly
    /// chosen earlier node that still has a free child slot.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut parent = vec![None; n];
        let mut role = vec![None; n];
        let mut free: Vec<(usize, ChildRole)> = Vec::new();
        for i in 0..n {
            if i > 0 {
                let k = rng.random_range(0..free.len());
                let (p, r) = free.swap_remove(k);
                parent[i] = Some(p);
                role[i] = Some(r);
            }
            free.push((i, ChildRole::Left));
            free.push((i, ChildRole::Right));
        }
        Self {
            parent,
            role,
            payload: BTreeMap::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.parent.len()
    }

    pub fn root(&self) -> Option<usize> {
        self.parent.iter().position(Option::is_none)
    }

    /// `(left, right)` children of `node`.
    pub fn children(&self, node: usize) -> (Option<usize>, Option<usize>) {
        let mut out = (None, None);
        for (c, p) in self.parent.iter().enumerate() {
            if *p == Some(node) {
                match self.role[c] {
                    Some(ChildRole::Left) => out.0 = Some(c),
                    Some(ChildRole::Right) => out.1 = Some(c),
                    None => {}
                }
            }
        }
        out
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        !self.parent.contains(&Some(node))
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&n| self.is_leaf(n)).collect()
    }

    /// Edges `(parent, child)` in child-index order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(c, p)| p.map(|p| (p, c)))
            .collect()
    }

    /// Depth of every node (root at 0). Assumes a valid structure.
    pub fn depths(&self) -> Vec<usize> {
        (0..self.node_count())
            .map(|mut n| {
                let mut d = 0;
                while let Some(p) = self.parent[n] {
                    n = p;
                    d += 1;
                }
                d
            })
            .collect()
    }

    pub fn validate_structure(&self) -> Result<()> {
        let n = self.parent.len();
        if n == 0 {
            return Err(Error::MalformedTree("tree has no nodes".into()));
        }
        if self.role.len() != n {
            return Err(Error::MalformedTree(format!(
                "parent array has {n} entries but role array has {}",
                self.role.len()
            )));
        }
        let roots: Vec<usize> = (0..n).filter(|&i| self.parent[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::MalformedTree(format!(
                "expected exactly one root, found {}",
                roots.len()
            )));
        }
        let mut slots: BTreeMap<(usize, ChildRole), usize> = BTreeMap::new();
        for c in 0..n {
            match (self.parent[c], self.role[c]) {
                (None, None) => {}
                (None, Some(_)) => {
                    return Err(Error::MalformedTree(format!("root {c} has a child role")))
                }
                (Some(_), None) => {
                    return Err(Error::MalformedTree(format!("node {c} has no child role")))
                }
                (Some(p), Some(r)) => {
                    if p >= n || p == c {
                        return Err(Error::MalformedTree(format!("node {c} has invalid parent {p}")));
                    }
                    if let Some(prev) = slots.insert((p, r), c) {
                        return Err(Error::MalformedTree(format!(
                            "nodes {prev} and {c} share role {r:?} under parent {p}"
                        )));
                    }
                }
            }
        }
        // every upward walk must reach the root within n steps
        for start in 0..n {
            let mut node = start;
            let mut steps = 0;
            while let Some(p) = self.parent[node] {
                node = p;
                steps += 1;
                if steps > n {
                    return Err(Error::MalformedTree(format!("cycle through node {start}")));
                }
            }
        }
        Ok(())
    }

    /// Full validation for binding: structure plus a payload of length `dim` on every leaf.
    pub fn validate_payloads(&self, dim: usize) -> Result<()> {
        self.validate_structure()?;
        for leaf in self.leaves() {
            let p = self
                .payload
                .get(&leaf)
                .ok_or_else(|| Error::MalformedTree(format!("leaf {leaf} has no payload")))?;
            check_dim(dim, p.len())?;
        }
        Ok(())
    }

    /// Nodes ordered so every child precedes its parent.
    pub fn postorder(&self) -> Vec<usize> {
        let depths = self.depths();
        let mut order: Vec<usize> = (0..self.node_count()).collect();
        order.sort_by(|a, b| depths[*b].cmp(&depths[*a]).then(a.cmp(b)));
        order
    }
}

/// Child-role matrices `(M₁, M₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeBinding {
    pub m1: SquareMatrix,
    pub m2: SquareMatrix,
}

impl TreeBinding {
    pub fn new(m1: SquareMatrix, m2: SquareMatrix) -> Result<Self> {
        check_dim(m1.side(), m2.side())?;
        Ok(Self { m1, m2 })
    }

    pub fn dim(&self) -> usize {
        self.m1.side()
    }
}

/// Representation of every node: leaves carry their payload, an internal node
/// is `M₁·rep(left) + M₂·rep(right)`; a missing child contributes nothing.
pub fn bind_tree(binding: &TreeBinding, tree: &TreeSpec) -> Result<Vec<Vector>> {
    let dim = binding.dim();
    tree.validate_payloads(dim)?;
    let mut reps: Vec<Option<Vector>> = vec![None; tree.node_count()];
    for node in tree.postorder() {
        let rep = if tree.is_leaf(node) {
            Vector::from_column_slice(&tree.payload[&node])
        } else {
            let (left, right) = tree.children(node);
            let mut acc = Vector::zeros(dim);
            if let Some(l) = left {
                acc += binding.m1.apply(reps[l].as_ref().expect("child computed first"))?;
            }
            if let Some(r) = right {
                acc += binding.m2.apply(reps[r].as_ref().expect("child computed first"))?;
            }
            acc
        };
        reps[node] = Some(rep);
    }
    Ok(reps.into_iter().map(|r| r.expect("all nodes visited")).collect())
}
