//! Gibbs-measure objects built from translation-invariant fixed points.
//!
//! A fixed point `(u, v, w)` fixes the boundary law
//! `z = (1, u/a, v/b, w/c)` over the bilayer states `(−,−), (−,+), (+,−), (+,+)`.
//! The finite-volume measure on `V_n` is
//!
//! ```text
//! μ_n(s, σ) ∝ Π_{L_n} θ^{(s(x)s(y) − σ(x)σ(y))/2} · Π_{V_n} E(s(x), σ(x)) · Π_{W_n} z(s(x), σ(x))
//! ```
//!
//! and is enumerated exactly for small trees. Every vertex of `V_n` with
//! `n ≥ 1` receives boundary messages from `k` successors; in the full root
//! mode the root of `V_0` stands in for `k + 1` of them, so its field is
//! `z^{(k+1)/k}`. With that convention the family `μ_n` is compatible in
//! both root modes whenever `(u, v, w)` solves the fixed-point system, and
//! [`check_compatibility`] measures exactly that.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BilayerConfig, BilayerState, DerivedParams, PairTable, Spin};
use crate::solver::{critical_value, solve_k1_symmetric, solve_scalar, FixedPoint3};
use crate::tree::{RootMode, Tree, TreeShape};

/// Largest state count `4^{|V_n|}` enumerated by [`finite_volume`].
pub const MAX_JOINT_STATES: u128 = 1 << 24;

/// Boundary law `z(ε, δ)` with the gauge `z(−1, −1) = 1`, and its fields
/// `h = log z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryLaw {
    pub z: PairTable,
    pub h: PairTable,
}

impl BoundaryLaw {
    /// Normalizes an arbitrary positive table by its `(−,−)` entry.
    pub fn from_z(z: PairTable) -> Result<Self> {
        if z.0.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::Validation(format!(
                "boundary law must be positive, got {:?}",
                z.0
            )));
        }
        let base = z.0[0];
        let z = z.map(|v| v / base);
        Ok(BoundaryLaw {
            z,
            h: z.map(f64::ln),
        })
    }

    /// Recovers `(u, v, w) = (a·z(−,+), b·z(+,−), c·z(+,+))`.
    pub fn to_point(&self, params: &DerivedParams) -> [f64; 3] {
        let w = self.vertex_weights(params).0;
        [w.0[1], w.0[2], w.0[3]]
    }

    /// `W = E·z`.
    pub fn vertex_weights(&self, params: &DerivedParams) -> VertexWeight {
        let e = params.emission_weights();
        VertexWeight(PairTable::from_fn(|s| e[s] * self.z[s]))
    }

    /// Field applied at the root when it is the only (boundary) vertex.
    fn root_field(&self, k: usize, root_mode: RootMode) -> PairTable {
        match root_mode {
            RootMode::Reduced => self.z,
            RootMode::Full => {
                let power = (k as f64 + 1.0) / k as f64;
                self.z.map(|v| v.powf(power))
            }
        }
    }

    /// Log field on the boundary vertices of a tree of the given shape.
    pub(crate) fn boundary_log_field(&self, shape: &TreeShape) -> PairTable {
        if shape.depth == 0 {
            self.root_field(shape.k, shape.root_mode).map(f64::ln)
        } else {
            self.h
        }
    }
}

pub fn boundary_law(point: &FixedPoint3, params: &DerivedParams) -> Result<BoundaryLaw> {
    let [u, v, w] = point.coords();
    BoundaryLaw::from_z(PairTable([1.0, u / params.a, v / params.b, w / params.c]))
}

/// Per-vertex weight `W(ε, δ) = E(ε, δ)·z(ε, δ)`; equals `(1, u, v, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VertexWeight(pub PairTable);

impl VertexWeight {
    pub fn from_point(point: [f64; 3]) -> Self {
        VertexWeight(PairTable([1.0, point[0], point[1], point[2]]))
    }
}

// ---------------------------------------------------------------------------
// Exact finite-volume measures
// ---------------------------------------------------------------------------

/// Exact normalized joint law over `(s_n, σ_n)`.
///
/// The configuration index stores the state of vertex `x` (breadth-first
/// index) in base-4 digit `x`, with digit value [`BilayerState::index`].
/// Consequently the marginal on `V_m` is obtained by summing over the
/// high digits.
#[derive(Debug, Clone)]
pub struct FiniteVolumeMeasure {
    pub shape: TreeShape,
    /// Log normalizer of the gauge-fixed weights (emission relative to the
    /// `(−,−)` entry).
    pub log_z: f64,
    pub probs: Vec<f64>,
}

impl FiniteVolumeMeasure {
    pub fn vertex_count(&self) -> usize {
        (self.probs.len().trailing_zeros() / 2) as usize
    }

    pub fn probability(&self, cfg: &BilayerConfig) -> Result<f64> {
        if cfg.len() != self.vertex_count() {
            return Err(Error::Domain(
                "configuration does not match the measure".into(),
            ));
        }
        Ok(self.probs[encode(cfg)])
    }

    /// Marginal on the first `len` vertices (a ball prefix).
    pub fn prefix_marginal(&self, len: usize) -> Vec<f64> {
        let block = 1usize << (2 * len);
        let mut out = vec![0.0; block];
        for (i, p) in self.probs.iter().enumerate() {
            out[i & (block - 1)] += p;
        }
        out
    }

    pub fn vertex_marginal(&self, x: usize) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (i, p) in self.probs.iter().enumerate() {
            out[digit(i, x)] += p;
        }
        out
    }

    /// Joint marginal of the states at `x` and `y`, indexed `[x_state][y_state]`.
    pub fn pair_marginal(&self, x: usize, y: usize) -> [[f64; 4]; 4] {
        let mut out = [[0.0; 4]; 4];
        for (i, p) in self.probs.iter().enumerate() {
            out[digit(i, x)][digit(i, y)] += p;
        }
        out
    }
}

fn digit(index: usize, x: usize) -> usize {
    (index >> (2 * x)) & 3
}

/// Index of a configuration in [`FiniteVolumeMeasure::probs`].
pub fn encode(cfg: &BilayerConfig) -> usize {
    (0..cfg.len()).fold(0, |acc, x| acc | (cfg.state(x).index() << (2 * x)))
}

/// Inverse of [`encode`] for a tree with `len` vertices.
pub fn decode(index: usize, len: usize) -> BilayerConfig {
    let states: Vec<BilayerState> = (0..len)
        .map(|x| BilayerState::from_index(digit(index, x)))
        .collect();
    BilayerConfig {
        hidden: states.iter().map(|s| s.hidden).collect(),
        observed: states.iter().map(|s| s.observed).collect(),
    }
}

fn check_joint_capacity(vertices: usize) -> Result<()> {
    let needed = 1u128.checked_shl(2 * vertices as u32).unwrap_or(u128::MAX);
    if needed > MAX_JOINT_STATES || vertices > 12 {
        return Err(Error::Capacity {
            what: "finite-volume enumeration",
            needed,
            limit: MAX_JOINT_STATES,
        });
    }
    Ok(())
}

/// Normalizes log weights by max subtraction; returns `(probs, log Z)`.
pub(crate) fn normalize_log(mut logw: Vec<f64>) -> (Vec<f64>, f64) {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in logw.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in logw.iter_mut() {
        *v /= total;
    }
    (logw, max + total.ln())
}

pub fn finite_volume(
    shape: &TreeShape,
    params: &DerivedParams,
    law: &BoundaryLaw,
) -> Result<FiniteVolumeMeasure> {
    let vertices = shape.ball_len(shape.depth);
    check_joint_capacity(vertices)?;
    let tree = Tree::new(*shape)?;
    let log_e = params.emission_weights().map(f64::ln);
    let log_field = law.boundary_log_field(shape);
    let half_log_theta = 0.5 * params.theta.ln();
    let pair = BilayerState::ALL.map(|p| {
        BilayerState::ALL.map(|c| {
            let mismatch =
                p.hidden.value() * c.hidden.value() - p.observed.value() * c.observed.value();
            half_log_theta * f64::from(mismatch)
        })
    });

    let mut logw = vec![0.0; 1usize << (2 * vertices)];
    for x in 0..vertices {
        let mut unary = log_e.0;
        if tree.is_boundary(x) {
            for (u, f) in unary.iter_mut().zip(log_field.0) {
                *u += f;
            }
        }
        for (i, l) in logw.iter_mut().enumerate() {
            *l += unary[digit(i, x)];
        }
    }
    for (x, y) in tree.edge_indices() {
        for (i, l) in logw.iter_mut().enumerate() {
            *l += pair[digit(i, x)][digit(i, y)];
        }
    }
    let (probs, log_z) = normalize_log(logw);
    Ok(FiniteVolumeMeasure {
        shape: *shape,
        log_z,
        probs,
    })
}

/// `max |Σ_{W_n} μ_n(s ∨ w, σ ∨ ω) − μ_{n−1}(s, σ)|` over configurations on
/// `V_{n−1}`, with `n = shape.depth`.
pub fn check_compatibility(
    shape: &TreeShape,
    params: &DerivedParams,
    law: &BoundaryLaw,
) -> Result<f64> {
    if shape.depth == 0 {
        return Err(Error::Precondition(
            "compatibility needs depth n >= 1".into(),
        ));
    }
    let outer = finite_volume(shape, params, law)?;
    let inner_shape = TreeShape::new(shape.k, shape.depth - 1, shape.root_mode)?;
    let inner = finite_volume(&inner_shape, params, law)?;
    let summed = outer.prefix_marginal(inner.vertex_count());
    Ok(summed
        .iter()
        .zip(&inner.probs)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max))
}

// ---------------------------------------------------------------------------
// Edge conditionals
// ---------------------------------------------------------------------------

/// Conditional law of the hidden pair `(s(x), s(y))` on one edge given the
/// observed pair. Field names read hidden `x` then hidden `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeConditional {
    pub pp: f64,
    pub mp: f64,
    pub pm: f64,
    pub mm: f64,
}

impl EdgeConditional {
    /// `[(+,+), (−,+), (+,−), (−,−)]`.
    pub fn as_array(&self) -> [f64; 4] {
        [self.pp, self.mp, self.pm, self.mm]
    }

    pub fn get(&self, sx: Spin, sy: Spin) -> f64 {
        match (sx, sy) {
            (Spin::Plus, Spin::Plus) => self.pp,
            (Spin::Minus, Spin::Plus) => self.mp,
            (Spin::Plus, Spin::Minus) => self.pm,
            (Spin::Minus, Spin::Minus) => self.mm,
        }
    }

    pub fn max_abs_diff(&self, other: &EdgeConditional) -> f64 {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn from_weights(weights: [f64; 4]) -> Self {
        let total: f64 = weights.iter().sum();
        EdgeConditional {
            pp: weights[0] / total,
            mp: weights[1] / total,
            pm: weights[2] / total,
            mm: weights[3] / total,
        }
    }
}

/// `P(s(x), s(y) | σ(x), σ(y)) ∝ θ^{(1+s(x)s(y))/2} W(s(x),σ(x)) W(s(y),σ(y))`.
pub fn edge_conditional(
    sigma: (Spin, Spin),
    params: &DerivedParams,
    weights: &VertexWeight,
) -> EdgeConditional {
    let log_theta = params.theta.ln();
    let log_w = weights.0.map(f64::ln);
    let order = [
        (Spin::Plus, Spin::Plus),
        (Spin::Minus, Spin::Plus),
        (Spin::Plus, Spin::Minus),
        (Spin::Minus, Spin::Minus),
    ];
    let logs = order.map(|(sx, sy)| {
        let agree = if sx == sy { log_theta } else { 0.0 };
        agree + log_w.get(sx, sigma.0) + log_w.get(sy, sigma.1)
    });
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    EdgeConditional::from_weights(logs.map(|l| (l - max).exp()))
}

/// The `k = 1` conditionals as printed alongside the unique measure, for
/// comparison with [`edge_conditional`]. Only the observed pairs `(+,+)`
/// and `(−,+)` are printed.
pub fn printed_k1_conditional(theta: f64, u1: f64, sigma: (Spin, Spin)) -> Option<EdgeConditional> {
    match sigma {
        (Spin::Plus, Spin::Plus) => {
            let n = 2.0 * theta + u1 + u1 * u1;
            Some(EdgeConditional {
                pp: theta / n,
                mp: u1 / n,
                pm: theta / n,
                mm: u1 * u1 / n,
            })
        }
        (Spin::Minus, Spin::Plus) => {
            let n = theta + (1.0 + theta) * u1 + u1 * u1;
            Some(EdgeConditional {
                pp: u1 / n,
                mp: theta / n,
                pm: u1 * u1 / n,
                mm: theta * u1 / n,
            })
        }
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Curve data
// ---------------------------------------------------------------------------

/// `μ₀, μ₁, μ₂` probabilities of hidden `(+,+)` on an edge for
/// `a = b = c = 1`; `μ₁`/`μ₂` use the `I₁` fixed points `(1, v, v)` with
/// `v < 1` and `v > 1` and are absent where those do not exist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRowUnit {
    pub theta: f64,
    pub mu0: f64,
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
}

/// `μ*` probabilities of hidden `(+,+)` given observed `(+,+)` and `(−,+)`
/// for `k = 1`, `a = b`, `c = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRowK1 {
    pub theta: f64,
    pub mu_star_pp_pp: f64,
    pub mu_star_pp_mp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConditionalVariant {
    /// Normalized `θ^{(1+ss')/2} W W` weights.
    #[default]
    Derived,
    /// The closed forms as printed for `k = 1`.
    Printed,
}

fn pp_given_any(theta: f64, weights: &VertexWeight) -> Result<f64> {
    let params = DerivedParams::new(1, theta, 1.0, 1.0, 1.0)?;
    Ok(edge_conditional((Spin::Plus, Spin::Plus), &params, weights).pp)
}

pub fn curve_unit_emission(k: usize, theta: f64) -> Result<CurveRowUnit> {
    let mu0 = theta / (2.0 * (1.0 + theta));
    let roots = solve_scalar(k, theta)?;
    let branches = if roots.len() == 3 {
        Some((roots[0], roots[2]))
    } else if critical_value(k).is_some_and(|c| (theta - c).abs() <= 1e-12 * c) {
        // the two branches merge into (1,1,1) at the bifurcation
        Some((1.0, 1.0))
    } else {
        None
    };
    let (mu1, mu2) = match branches {
        Some((v1, v2)) => (
            Some(pp_given_any(
                theta,
                &VertexWeight::from_point([1.0, v1, v1]),
            )?),
            Some(pp_given_any(
                theta,
                &VertexWeight::from_point([1.0, v2, v2]),
            )?),
        ),
        None => (None, None),
    };
    Ok(CurveRowUnit {
        theta,
        mu0,
        mu1,
        mu2,
    })
}

pub fn curve_k1(a: f64, theta: f64, variant: ConditionalVariant) -> Result<CurveRowK1> {
    let point = solve_k1_symmetric(theta, a)?;
    let params = DerivedParams::new(1, theta, a, a, 1.0)?;
    let (pp_pp, pp_mp) = match variant {
        ConditionalVariant::Derived => {
            let w = VertexWeight::from_point(point.coords());
            (
                edge_conditional((Spin::Plus, Spin::Plus), &params, &w).pp,
                edge_conditional((Spin::Minus, Spin::Plus), &params, &w).pp,
            )
        }
        ConditionalVariant::Printed => (
            printed_k1_conditional(theta, point.u, (Spin::Plus, Spin::Plus))
                .unwrap()
                .pp,
            printed_k1_conditional(theta, point.u, (Spin::Minus, Spin::Plus))
                .unwrap()
                .pp,
        ),
    };
    Ok(CurveRowK1 {
        theta,
        mu_star_pp_pp: pp_pp,
        mu_star_pp_mp: pp_mp,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_unit_curve_csv<W: Write>(rows: &[CurveRowUnit], mut out: W) -> io::Result<()> {
    writeln!(out, "theta,mu0,mu1,mu2")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.theta, r.mu0, opt(r.mu1), opt(r.mu2))?;
    }
    Ok(())
}

pub fn write_k1_curve_csv<W: Write>(rows: &[CurveRowK1], mut out: W) -> io::Result<()> {
    writeln!(out, "theta,mu_star_pp_pp,mu_star_pp_mp")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.theta, r.mu_star_pp_pp, r.mu_star_pp_mp)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Tree-indexed Markov chain
// ---------------------------------------------------------------------------

/// Parent-to-child transition law over bilayer states plus the root law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilayerKernel {
    pub shape: TreeShape,
    /// `rows[parent][child]`, states in [`BilayerState::ALL`] order.
    pub rows: [[f64; 4]; 4],
    pub pi0: [f64; 4],
}

/// `K((ε,δ) → (j,û)) ∝ θ^{(εj − δû)/2} E(j,û) z(j,û)`; the root law is the
/// exact root marginal of `μ_1` for the given shape's root mode.
pub fn markov_kernel(
    shape: &TreeShape,
    params: &DerivedParams,
    law: &BoundaryLaw,
) -> Result<BilayerKernel> {
    let weights = law.vertex_weights(params);
    let half_log_theta = 0.5 * params.theta.ln();
    let rows = BilayerState::ALL.map(|parent| {
        let logs = BilayerState::ALL.map(|child| {
            let mismatch = f64::from(
                parent.hidden.value() * child.hidden.value()
                    - parent.observed.value() * child.observed.value(),
            );
            half_log_theta * mismatch + weights.0[child].ln()
        });
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let unnorm = logs.map(|l| (l - max).exp());
        let total: f64 = unnorm.iter().sum();
        unnorm.map(|v| v / total)
    });
    let one = TreeShape::new(shape.k, 1, shape.root_mode)?;
    let pi0 = finite_volume(&one, params, law)?.vertex_marginal(0);
    Ok(BilayerKernel {
        shape: *shape,
        rows,
        pi0,
    })
}

/// Closed-form root law `π(ε,δ) ∝ E(ε,δ) z(ε,δ)^{d/k}` with `d` the root
/// degree. Kept as a cross-check for the enumerated `pi0`.
pub fn root_law_closed_form(
    shape: &TreeShape,
    params: &DerivedParams,
    law: &BoundaryLaw,
) -> [f64; 4] {
    let e = params.emission_weights();
    let power = shape.root_degree() as f64 / shape.k as f64;
    let unnorm = BilayerState::ALL.map(|s| e[s] * law.z[s].powf(power));
    let total: f64 = unnorm.iter().sum();
    unnorm.map(|v| v / total)
}

impl BilayerKernel {
    pub fn max_row_sum_defect(&self) -> f64 {
        self.rows
            .iter()
            .chain(std::iter::once(&self.pi0))
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Forward sample on a tree of this kernel's root mode.
    pub fn sample_with<R: Rng + ?Sized>(&self, tree: &Tree, rng: &mut R) -> Result<BilayerConfig> {
        if tree.shape().root_mode != self.shape.root_mode || tree.shape().k != self.shape.k {
            return Err(Error::Domain(
                "tree shape does not match the kernel's branching/root mode".into(),
            ));
        }
        let mut states = vec![BilayerState::ALL[0]; tree.len()];
        states[0] = BilayerState::from_index(draw(&self.pi0, rng));
        for x in 0..tree.len() {
            let row = &self.rows[states[x].index()];
            for y in tree.children_range(x) {
                states[y] = BilayerState::from_index(draw(row, rng));
            }
        }
        Ok(BilayerConfig {
            hidden: states.iter().map(|s| s.hidden).collect(),
            observed: states.iter().map(|s| s.observed).collect(),
        })
    }
}

fn draw<R: Rng + ?Sized>(probs: &[f64; 4], rng: &mut R) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if r < acc {
            return i;
        }
    }
    3
}

/// Deterministic forward sample seeded by `seed`.
pub fn sample(kernel: &BilayerKernel, tree: &Tree, seed: u64) -> Result<BilayerConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    kernel.sample_with(tree, &mut rng)
}
