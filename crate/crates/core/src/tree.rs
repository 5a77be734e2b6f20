//! Finite Cayley-tree combinatorics.
//!
//! A [`Tree`] is the ball `V_n` of radius `depth` around the root of the
//! Cayley tree of order `k`, materialized in breadth-first order. Vertices
//! are addressed either by their root path ([`VertexId`]) or by their
//! breadth-first index; the index order has two properties the enumeration
//! code relies on:
//!
//! * `V_m` is exactly the index prefix `0..ball_len(m)`, and `W_m` the range
//!   `generation_range(m)`;
//! * the children of every vertex occupy a contiguous index range, listed in
//!   child-index order.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Upper bound on the number of materialized vertices.
pub const MAX_VERTICES: usize = 1 << 22;

/// Number of direct successors of the root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RootMode {
    /// The root has `k + 1` children, so every vertex of the infinite tree
    /// has degree `k + 1`.
    #[default]
    Full,
    /// The root has `k` children (the half-tree).
    Reduced,
}

impl FromStr for RootMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(RootMode::Full),
            "reduced" => Ok(RootMode::Reduced),
            other => Err(Error::Validation(format!(
                "unknown root mode {other:?} (expected \"full\" or \"reduced\")"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TreeShape {
    pub k: usize,
    pub depth: usize,
    #[serde(default)]
    pub root_mode: RootMode,
}

impl TreeShape {
    pub fn new(k: usize, depth: usize, root_mode: RootMode) -> Result<Self> {
        if k == 0 {
            return Err(Error::Validation("branching factor k must be >= 1".into()));
        }
        let shape = TreeShape {
            k,
            depth,
            root_mode,
        };
        shape.try_ball_len(depth)?;
        Ok(shape)
    }

    pub fn full(k: usize, depth: usize) -> Result<Self> {
        Self::new(k, depth, RootMode::Full)
    }

    pub fn reduced(k: usize, depth: usize) -> Result<Self> {
        Self::new(k, depth, RootMode::Reduced)
    }

    /// Number of children of the root.
    pub fn root_degree(&self) -> usize {
        match self.root_mode {
            RootMode::Full => self.k + 1,
            RootMode::Reduced => self.k,
        }
    }

    /// `|W_m|`; `m` is not range-checked against the depth.
    pub fn generation_len(&self, m: usize) -> usize {
        self.try_generation_len(m).unwrap_or(usize::MAX)
    }

    /// `|V_m|`; `m` is not range-checked against the depth.
    pub fn ball_len(&self, m: usize) -> usize {
        self.try_ball_len(m).unwrap_or(usize::MAX)
    }

    fn try_generation_len(&self, m: usize) -> Result<usize> {
        let mut len: usize = 1;
        for j in 0..m {
            let factor = if j == 0 { self.root_degree() } else { self.k };
            len = len
                .checked_mul(factor)
                .filter(|&l| l <= MAX_VERTICES)
                .ok_or_else(|| too_large(self))?;
        }
        Ok(len)
    }

    fn try_ball_len(&self, m: usize) -> Result<usize> {
        let mut total: usize = 0;
        for j in 0..=m {
            total = total
                .checked_add(self.try_generation_len(j)?)
                .filter(|&t| t <= MAX_VERTICES)
                .ok_or_else(|| too_large(self))?;
        }
        Ok(total)
    }
}

fn too_large(shape: &TreeShape) -> Error {
    Error::Capacity {
        what: "tree vertices",
        needed: tree_size_estimate(shape),
        limit: MAX_VERTICES as u128,
    }
}

fn tree_size_estimate(shape: &TreeShape) -> u128 {
    let mut gen: u128 = 1;
    let mut total: u128 = 1;
    for j in 0..shape.depth {
        let factor = if j == 0 { shape.root_degree() } else { shape.k } as u128;
        gen = gen.saturating_mul(factor);
        total = total.saturating_add(gen);
    }
    total
}

/// A vertex addressed by the sequence of child indices from the root; the
/// empty path is the root `x⁰`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct VertexId(Vec<u32>);

impl VertexId {
    pub fn root() -> Self {
        VertexId(Vec::new())
    }

    pub fn from_path(path: Vec<u32>) -> Self {
        VertexId(path)
    }

    pub fn path(&self) -> &[u32] {
        &self.0
    }

    /// Distance to the root.
    pub fn generation(&self) -> usize {
        self.0.len()
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn parent(&self) -> Option<VertexId> {
        if self.0.is_empty() {
            None
        } else {
            Some(VertexId(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    pub fn child(&self, i: u32) -> VertexId {
        let mut path = self.0.clone();
        path.push(i);
        VertexId(path)
    }
}

/// Root prints as `r`, other vertices as `r.i.j…`.
impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("r")?;
        for i in &self.0 {
            write!(f, ".{i}")?;
        }
        Ok(())
    }
}

impl FromStr for VertexId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split('.');
        if parts.next() != Some("r") {
            return Err(Error::Domain(format!(
                "vertex path {s:?} must start with \"r\""
            )));
        }
        parts
            .map(|p| {
                p.parse::<u32>()
                    .map_err(|_| Error::Domain(format!("bad child index {p:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(VertexId)
    }
}

impl Serialize for VertexId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VertexId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Materialized ball `V_depth` in breadth-first order.
#[derive(Debug, Clone)]
pub struct Tree {
    shape: TreeShape,
    ids: Vec<VertexId>,
    parent: Vec<Option<usize>>,
    children: Vec<Range<usize>>,
    offsets: Vec<usize>,
    index: HashMap<VertexId, usize>,
}

impl Tree {
    pub fn new(shape: TreeShape) -> Result<Self> {
        let shape = TreeShape::new(shape.k, shape.depth, shape.root_mode)?;
        let n = shape.ball_len(shape.depth);
        let mut ids = Vec::with_capacity(n);
        let mut parent = Vec::with_capacity(n);
        let mut children = Vec::with_capacity(n);
        let mut offsets = vec![0, 1];

        ids.push(VertexId::root());
        parent.push(None);
        for m in 0..shape.depth {
            let (start, end) = (offsets[m], offsets[m + 1]);
            for x in start..end {
                let degree = if x == 0 { shape.root_degree() } else { shape.k };
                let first = ids.len();
                for i in 0..degree {
                    ids.push(ids[x].child(i as u32));
                    parent.push(Some(x));
                }
                children.push(first..ids.len());
            }
            offsets.push(ids.len());
        }
        // leaves
        children.resize(ids.len(), ids.len()..ids.len());

        let index = ids
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, id)| (id, i))
            .collect();
        Ok(Tree {
            shape,
            ids,
            parent,
            children,
            offsets,
            index,
        })
    }

    pub fn shape(&self) -> TreeShape {
        self.shape
    }

    pub fn depth(&self) -> usize {
        self.shape.depth
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, x: usize) -> &VertexId {
        &self.ids[x]
    }

    pub fn ids(&self) -> &[VertexId] {
        &self.ids
    }

    pub fn index_of(&self, id: &VertexId) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::Domain(format!("vertex {id} is not in the tree")))
    }

    pub fn parent_index(&self, x: usize) -> Option<usize> {
        self.parent[x]
    }

    pub fn children_range(&self, x: usize) -> Range<usize> {
        self.children[x].clone()
    }

    /// Generation (distance to the root) of the vertex with index `x`.
    pub fn generation_of(&self, x: usize) -> usize {
        self.ids[x].generation()
    }

    /// Index range of `W_m`.
    pub fn generation_range(&self, m: usize) -> Result<Range<usize>> {
        self.check_generation(m)?;
        Ok(self.offsets[m]..self.offsets[m + 1])
    }

    /// `|V_m|`, i.e. the index prefix length covering the ball of radius `m`.
    pub fn ball_len(&self, m: usize) -> Result<usize> {
        self.check_generation(m)?;
        Ok(self.offsets[m + 1])
    }

    /// Index range of the outermost generation `W_depth`.
    pub fn boundary_range(&self) -> Range<usize> {
        self.offsets[self.depth()]..self.offsets[self.depth() + 1]
    }

    pub fn is_boundary(&self, x: usize) -> bool {
        self.generation_of(x) == self.depth()
    }

    /// Parent-child pairs of `L_depth` as index pairs, in child order.
    pub fn edge_indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..self.len()).map(|y| (self.parent[y].expect("non-root has a parent"), y))
    }

    /// Direct successors `S(x)`.
    pub fn successors(&self, x: &VertexId) -> Result<Vec<VertexId>> {
        let i = self.index_of(x)?;
        if self.generation_of(i) >= self.depth() {
            return Err(Error::Domain(format!(
                "vertex {x} is on the boundary generation {}; its successors lie outside the tree",
                self.depth()
            )));
        }
        Ok(self.ids[self.children_range(i)].to_vec())
    }

    /// The sphere `W_m`.
    pub fn generation(&self, m: usize) -> Result<Vec<VertexId>> {
        Ok(self.ids[self.generation_range(m)?].to_vec())
    }

    /// The ball `V_m`.
    pub fn ball(&self, m: usize) -> Result<Vec<VertexId>> {
        Ok(self.ids[..self.ball_len(m)?].to_vec())
    }

    /// The edge set `L_m` as (parent, child) pairs.
    pub fn edges(&self, m: usize) -> Result<Vec<(VertexId, VertexId)>> {
        let len = self.ball_len(m)?;
        Ok((1..len)
            .map(|y| {
                (
                    self.ids[self.parent[y].unwrap()].clone(),
                    self.ids[y].clone(),
                )
            })
            .collect())
    }

    fn check_generation(&self, m: usize) -> Result<()> {
        if m > self.depth() {
            Err(Error::Domain(format!(
                "generation {m} exceeds tree depth {}",
                self.depth()
            )))
        } else {
            Ok(())
        }
    }
}
