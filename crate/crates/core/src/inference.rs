//! Posterior inference of the hidden layer given a fully observed layer.
//!
//! Given `σ` on `V_n`, the hidden posterior factorizes over the tree as
//!
//! ```text
//! P(s | σ) ∝ Π_{L_n} θ^{(1+s(x)s(y))/2} · Π_{V_n} E(s(x), σ(x)) · Π_{W_n} z(s(x), σ(x))
//! ```
//!
//! so sum-product and max-product message passing are exact. Exhaustive
//! enumeration over `2^{|V_n|}` hidden configurations is provided as an
//! oracle for small trees.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::BoundaryLaw;
use crate::model::{energy_loss, BilayerConfig, BilayerState, DerivedParams, PairTable, Spin};
use crate::tree::{Tree, TreeShape, VertexId};

/// Largest hidden-configuration count enumerated by [`exact_posterior`].
pub const MAX_HIDDEN_STATES: u128 = 1 << 22;

/// Log-probability slack under which two max-product scores count as tied.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceProblem {
    pub shape: TreeShape,
    pub derived: DerivedParams,
    pub law: BoundaryLaw,
    /// Observed spins in breadth-first vertex order.
    pub sigma: Vec<Spin>,
}

impl InferenceProblem {
    pub fn new(
        shape: TreeShape,
        derived: DerivedParams,
        law: BoundaryLaw,
        sigma: Vec<Spin>,
    ) -> Result<Self> {
        if derived.k != shape.k {
            return Err(Error::Domain(format!(
                "parameters use k = {} but the tree has k = {}",
                derived.k, shape.k
            )));
        }
        let len = shape.ball_len(shape.depth);
        if sigma.len() != len {
            return Err(Error::Domain(format!(
                "observed layer covers {} vertices but the tree has {len}",
                sigma.len()
            )));
        }
        Ok(InferenceProblem {
            shape,
            derived,
            law,
            sigma,
        })
    }

    /// Per-vertex log unary factors, indexed `[x][hidden bit]`.
    fn log_unary(&self, tree: &Tree) -> Vec<[f64; 2]> {
        let log_e = self.derived.emission_weights().map(f64::ln);
        let log_field = self.law.boundary_log_field(&self.shape);
        (0..tree.len())
            .map(|x| {
                Spin::BOTH.map(|s| {
                    let state = BilayerState::new(s, self.sigma[x]);
                    let field = if tree.is_boundary(x) {
                        log_field[state]
                    } else {
                        0.0
                    };
                    log_e[state] + field
                })
            })
            .collect()
    }

    /// `log ψ(s, s')` indexed by hidden bits.
    fn log_pair(&self) -> [[f64; 2]; 2] {
        let lt = self.derived.theta.ln();
        [[lt, 0.0], [0.0, lt]]
    }

    /// Unnormalized log posterior of one hidden layer.
    pub fn log_score(&self, tree: &Tree, hidden: &[Spin]) -> f64 {
        let unary = self.log_unary(tree);
        let pair = self.log_pair();
        let u: f64 = (0..tree.len()).map(|x| unary[x][hidden[x].bit()]).sum();
        let p: f64 = tree
            .edge_indices()
            .map(|(x, y)| pair[hidden[x].bit()][hidden[y].bit()])
            .sum();
        u + p
    }
}

/// Per-vertex hidden marginals, `rows[x] = [P(s(x) = −1), P(s(x) = +1)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalTable {
    pub rows: Vec<[f64; 2]>,
}

impl MarginalTable {
    pub fn prob(&self, x: usize, s: Spin) -> f64 {
        self.rows[x][s.bit()]
    }

    pub fn max_abs_diff(&self, other: &MarginalTable) -> f64 {
        self.rows
            .iter()
            .zip(&other.rows)
            .flat_map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs()])
            .fold(0.0, f64::max)
    }

    /// Vertex path → `P(s = +1)`.
    pub fn labeled(&self, tree: &Tree) -> BTreeMap<String, f64> {
        self.rows
            .iter()
            .enumerate()
            .map(|(x, r)| (tree.id(x).to_string(), r[1]))
            .collect()
    }
}

/// Normalized posterior over all hidden layers; bit `x` of the index is the
/// hidden bit of vertex `x`.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub len: usize,
    pub probs: Vec<f64>,
}

impl Posterior {
    pub fn hidden(&self, index: usize) -> Vec<Spin> {
        (0..self.len).map(|x| Spin::from_bit(index >> x)).collect()
    }

    pub fn probability(&self, hidden: &[Spin]) -> f64 {
        let index = hidden
            .iter()
            .enumerate()
            .fold(0, |acc, (x, s)| acc | (s.bit() << x));
        self.probs[index]
    }

    pub fn marginals(&self) -> MarginalTable {
        let mut rows = vec![[0.0; 2]; self.len];
        for (i, p) in self.probs.iter().enumerate() {
            for (x, row) in rows.iter_mut().enumerate() {
                row[(i >> x) & 1] += p;
            }
        }
        MarginalTable { rows }
    }

    pub fn max_probability(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }
}

pub fn exact_posterior(problem: &InferenceProblem) -> Result<Posterior> {
    let tree = Tree::new(problem.shape)?;
    let len = tree.len();
    let needed = 1u128.checked_shl(len as u32).unwrap_or(u128::MAX);
    if needed > MAX_HIDDEN_STATES || len >= 64 {
        return Err(Error::Capacity {
            what: "hidden-layer enumeration",
            needed,
            limit: MAX_HIDDEN_STATES,
        });
    }
    let unary = problem.log_unary(&tree);
    let pair = problem.log_pair();
    let mut logw = vec![0.0; 1usize << len];
    for (x, u) in unary.iter().enumerate() {
        for (i, l) in logw.iter_mut().enumerate() {
            *l += u[(i >> x) & 1];
        }
    }
    for (x, y) in tree.edge_indices() {
        for (i, l) in logw.iter_mut().enumerate() {
            *l += pair[(i >> x) & 1][(i >> y) & 1];
        }
    }
    let (probs, _) = crate::measure::normalize_log(logw);
    Ok(Posterior { len, probs })
}

fn log_sum_exp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn log_normalize(v: [f64; 2]) -> [f64; 2] {
    let z = log_sum_exp2(v[0], v[1]);
    [v[0] - z, v[1] - z]
}

/// Sum-product marginals by an upward then downward pass.
pub fn bp_marginals(problem: &InferenceProblem) -> Result<MarginalTable> {
    let tree = Tree::new(problem.shape)?;
    let n = tree.len();
    let unary = problem.log_unary(&tree);
    let pair = problem.log_pair();

    // inward[x]: unary at x plus messages from the children of x
    let mut inward = unary;
    // up[x]: message from x to its parent, over the parent's spin
    let mut up = vec![[0.0; 2]; n];
    for x in (0..n).rev() {
        for c in tree.children_range(x) {
            for s in 0..2 {
                inward[x][s] += up[c][s];
            }
        }
        if x > 0 {
            up[x] =
                log_normalize([0, 1].map(|sp| {
                    log_sum_exp2(pair[sp][0] + inward[x][0], pair[sp][1] + inward[x][1])
                }));
        }
    }

    // down[x]: message from the parent of x to x, over the spin of x
    let mut down = vec![[0.0; 2]; n];
    let mut rows = vec![[0.0; 2]; n];
    for x in 0..n {
        let belief = log_normalize([inward[x][0] + down[x][0], inward[x][1] + down[x][1]]);
        rows[x] = belief.map(f64::exp);
        for c in tree.children_range(x) {
            let cavity = [belief[0] - up[c][0], belief[1] - up[c][1]];
            down[c] = log_normalize(
                [0, 1].map(|s| log_sum_exp2(pair[0][s] + cavity[0], pair[1][s] + cavity[1])),
            );
        }
    }
    Ok(MarginalTable { rows })
}

/// Bit of the larger score, preferring `+1` within [`TIE_TOL`].
fn prefer_plus(scores: [f64; 2]) -> usize {
    if scores[1] >= scores[0] - TIE_TOL {
        1
    } else {
        0
    }
}

/// Max-product MAP estimate of the hidden layer. Ties resolve to `+1`,
/// decided at the root first and then down the tree in vertex order.
pub fn map_estimate(problem: &InferenceProblem) -> Result<Vec<Spin>> {
    let tree = Tree::new(problem.shape)?;
    let n = tree.len();
    let unary = problem.log_unary(&tree);
    let pair = problem.log_pair();

    let mut inward = unary;
    let mut up = vec![[0.0; 2]; n];
    let mut best = vec![[0usize; 2]; n];
    for x in (0..n).rev() {
        for c in tree.children_range(x) {
            for s in 0..2 {
                inward[x][s] += up[c][s];
            }
        }
        if x > 0 {
            for sp in 0..2 {
                let scores = [pair[sp][0] + inward[x][0], pair[sp][1] + inward[x][1]];
                let b = prefer_plus(scores);
                best[x][sp] = b;
                up[x][sp] = scores[b];
            }
            let m = up[x][0].max(up[x][1]);
            up[x] = [up[x][0] - m, up[x][1] - m];
        }
    }

    let mut bits = vec![0usize; n];
    bits[0] = prefer_plus(inward[0]);
    for x in 1..n {
        let p = tree.parent_index(x).expect("non-root vertex has a parent");
        bits[x] = best[x][bits[p]];
    }
    Ok(bits.into_iter().map(Spin::from_bit).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseResult {
    pub map: Vec<Spin>,
    pub marginals: MarginalTable,
    /// Number of vertices where the MAP hidden spin differs from `σ`.
    pub flips: usize,
}

pub fn denoise(problem: &InferenceProblem) -> Result<DenoiseResult> {
    let map = map_estimate(problem)?;
    let marginals = bp_marginals(problem)?;
    let flips = map
        .iter()
        .zip(&problem.sigma)
        .filter(|(a, b)| a != b)
        .count();
    Ok(DenoiseResult {
        map,
        marginals,
        flips,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeScore {
    pub parent: VertexId,
    pub child: VertexId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub edges: Vec<EdgeScore>,
    pub total: f64,
}

/// `s(x)s(y) − σ(x)σ(y)` per edge, in breadth-first edge order.
pub fn anomaly_scores(hidden: &[Spin], sigma: &[Spin], shape: &TreeShape) -> Result<AnomalyReport> {
    let tree = Tree::new(*shape)?;
    let cfg = BilayerConfig::new(hidden.to_vec(), sigma.to_vec())?;
    let total = energy_loss(&cfg, &tree)?;
    let edges = tree
        .edge_indices()
        .map(|(x, y)| EdgeScore {
            parent: tree.id(x).clone(),
            child: tree.id(y).clone(),
            score: f64::from(
                hidden[x].value() * hidden[y].value() - sigma[x].value() * sigma[y].value(),
            ),
        })
        .collect();
    Ok(AnomalyReport { edges, total })
}

/// Vertex path → spin.
pub fn layer_to_map(tree: &Tree, layer: &[Spin]) -> BTreeMap<String, Spin> {
    layer
        .iter()
        .enumerate()
        .map(|(x, &s)| (tree.id(x).to_string(), s))
        .collect()
}

/// Reads a layer given either as an array in breadth-first order or as a
/// map from vertex path to spin covering every vertex.
pub fn layer_from_json(tree: &Tree, value: &serde_json::Value) -> Result<Vec<Spin>> {
    let parse = |v: &serde_json::Value| -> Result<Spin> {
        serde_json::from_value(v.clone()).map_err(|e| Error::Validation(e.to_string()))
    };
    match value {
        serde_json::Value::Array(items) => {
            if items.len() != tree.len() {
                return Err(Error::Domain(format!(
                    "layer has {} entries but the tree has {} vertices",
                    items.len(),
                    tree.len()
                )));
            }
            items.iter().map(parse).collect()
        }
        serde_json::Value::Object(map) => {
            let mut out = vec![None; tree.len()];
            for (key, v) in map {
                let id: VertexId = key.parse()?;
                out[tree.index_of(&id)?] = Some(parse(v)?);
            }
            out.into_iter()
                .enumerate()
                .map(|(x, s)| {
                    s.ok_or_else(|| {
                        Error::Domain(format!("no spin given for vertex {}", tree.id(x)))
                    })
                })
                .collect()
        }
        _ => Err(Error::Validation(
            "layer must be a JSON array or object".into(),
        )),
    }
}

/// Unary-only posterior of a single vertex, `∝ E(s, σ)·f(s, σ)` with `f`
/// the root field.
pub fn single_vertex_posterior(
    law: &BoundaryLaw,
    derived: &DerivedParams,
    shape: &TreeShape,
    sigma: Spin,
) -> [f64; 2] {
    let e: PairTable = derived.emission_weights();
    let f = law.boundary_log_field(shape).map(f64::exp);
    let w = Spin::BOTH.map(|s| {
        let st = BilayerState::new(s, sigma);
        e[st] * f[st]
    });
    let t = w[0] + w[1];
    [w[0] / t, w[1] / t]
}
