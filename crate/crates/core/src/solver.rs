//! Positive translation-invariant fixed points of the boundary-law recursion.
//!
//! With `u = a·z(−1,+1)`, `v = b·z(+1,−1)`, `w = c·z(+1,+1)` the recursion
//! becomes the map `F: R³₊ → R³₊`
//!
//! ```text
//! u' = a ((θ   + u + v + θ⁻¹w) / D)^k
//! v' = b ((θ⁻¹ + u + v + θ w ) / D)^k      D = 1 + θu + θ⁻¹v + w
//! w' = c ((1 + θ⁻¹u + θv + w ) / D)^k
//! ```
//!
//! Three routes to its fixed points live here:
//!
//! * scalar reductions on the invariant planes `I₁ = {u=1, v=w}`,
//!   `I₂ = {v=1, u=w}`, `I₃ = {w=1, u=v}` (valid for `a = b = c = 1`), all of
//!   the form `x = ((1 + γx)/(γ + x))^k` and solved by bracketing on a
//!   polynomial;
//! * closed forms and a monotone bisection on the diagonal `u = v, w = 1`
//!   (valid for `a = b, c = 1`);
//! * a multistart damped Newton search on the full system.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{big_theta, DerivedParams};

/// Largest acceptable `max_i |F_i(t) − t_i|` for a reported fixed point.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// Relative distance below which two fixed points are the same point.
pub const DEDUP_TOL: f64 = 1e-6;
/// Newton candidates this close (relative) to a solution obtained from a
/// one-dimensional reduction are identified with it. Near a bifurcation the
/// fixed point is degenerate and Newton only reaches it to about the cube
/// root of machine precision.
pub const ANCHOR_TOL: f64 = 1e-4;
/// Tolerance for invariant-set membership.
pub const MEMBERSHIP_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint3 {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    /// `max_i |F_i(t) − t_i|`.
    pub residual: f64,
}

impl FixedPoint3 {
    /// Wraps a point and evaluates its residual under `F`.
    pub fn new(u: f64, v: f64, w: f64, params: &DerivedParams) -> Self {
        FixedPoint3 {
            u,
            v,
            w,
            residual: residual([u, v, w], params),
        }
    }

    pub fn coords(&self) -> [f64; 3] {
        [self.u, self.v, self.w]
    }
}

impl fmt::Display for FixedPoint3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({:.10}, {:.10}, {:.10}) [residual {:.1e}]",
            self.u, self.v, self.w, self.residual
        )
    }
}

struct Sums {
    numer: [f64; 3],
    denom: f64,
}

fn sums([u, v, w]: [f64; 3], theta: f64) -> Sums {
    let inv = theta.recip();
    Sums {
        numer: [
            theta + u + v + inv * w,
            inv + u + v + theta * w,
            1.0 + inv * u + theta * v + w,
        ],
        denom: 1.0 + theta * u + inv * v + w,
    }
}

/// One application of `F`.
pub fn apply_f(point: [f64; 3], params: &DerivedParams) -> [f64; 3] {
    let s = sums(point, params.theta);
    let k = params.k as i32;
    let coef = [params.a, params.b, params.c];
    std::array::from_fn(|i| coef[i] * (s.numer[i] / s.denom).powi(k))
}

/// `max_i |F_i(t) − t_i|`.
pub fn residual(point: [f64; 3], params: &DerivedParams) -> f64 {
    let image = apply_f(point, params);
    (0..3)
        .map(|i| (image[i] - point[i]).abs())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Scalar reduction
// ---------------------------------------------------------------------------

/// The scalar fixed-point equation `x = ((1 + γx)/(γ + x))^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarEquation {
    pub k: usize,
    pub gamma: f64,
}

impl ScalarEquation {
    pub fn new(k: usize, gamma: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::Validation("k must be >= 1".into()));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Validation(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        Ok(ScalarEquation { k, gamma })
    }

    /// `γ_c = (k+1)/(k−1)`; `None` for `k = 1`.
    pub fn critical_gamma(&self) -> Option<f64> {
        critical_value(self.k)
    }

    pub fn rhs(&self, x: f64) -> f64 {
        ((1.0 + self.gamma * x) / (self.gamma + x)).powi(self.k as i32)
    }

    /// With `x = t^k` the equation is `t^{k+1} − γt^k + γt − 1 = 0`, which
    /// factors as `(t − 1)·q(t)` with the palindromic
    /// `q(t) = t^k + (1 − γ)(t^{k−1} + … + t) + 1`.
    fn cofactor(&self, t: f64) -> f64 {
        let mut inner = 0.0;
        for _ in 1..self.k {
            inner = (inner + 1.0) * t;
        }
        t.powi(self.k as i32) + (1.0 - self.gamma) * inner + 1.0
    }

    /// All positive roots, ascending. Always contains 1.
    ///
    /// `q` is palindromic, so its positive roots pair up as `r, 1/r`; by the
    /// Descartes bound there is at most one such pair, and it exists iff
    /// `q(1) < 0`. The two members are bracketed independently on `(0, 1)`
    /// and `(1, 1 + γ]` (Cauchy bound) and refined by bisection.
    pub fn roots(&self) -> Vec<f64> {
        let q = |t: f64| self.cofactor(t);
        if q(1.0) >= 0.0 {
            return vec![1.0];
        }
        let k = self.k as i32;
        let small = bisect(q, 0.0, 1.0);
        let large = bisect(q, 1.0, 1.0 + self.gamma);
        vec![small.powi(k), 1.0, large.powi(k)]
    }
}

pub fn solve_scalar(k: usize, gamma: f64) -> Result<Vec<f64>> {
    Ok(ScalarEquation::new(k, gamma)?.roots())
}

/// `(k+1)/(k−1)`, the bifurcation value of the scalar equation.
pub fn critical_value(k: usize) -> Option<f64> {
    (k >= 2).then(|| (k as f64 + 1.0) / (k as f64 - 1.0))
}

/// Bisection to full double precision on a bracket with a sign change.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = f(lo);
    debug_assert!(f_lo * f(hi) <= 0.0, "bracket without sign change");
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

// ---------------------------------------------------------------------------
// Solution sets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetLabel {
    /// `u = 1, v = w`
    I1,
    /// `v = 1, u = w`
    I2,
    /// `w = 1, u = v`
    I3,
    /// `u = v, w = 1` outside the `a = b = c = 1` regime.
    SymmetricDiagonal,
    OffSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    #[serde(flatten)]
    pub point: FixedPoint3,
    pub labels: Vec<SetLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSet {
    pub params: DerivedParams,
    pub count: usize,
    pub solutions: Vec<Solution>,
}

impl SolutionSet {
    fn from_points(params: &DerivedParams, mut points: Vec<FixedPoint3>) -> Self {
        points.sort_by(|p, q| p.coords().partial_cmp(&q.coords()).unwrap());
        let solutions: Vec<Solution> = points
            .into_iter()
            .map(|point| Solution {
                labels: classify_point(&point, params),
                point,
            })
            .collect();
        SolutionSet {
            params: *params,
            count: solutions.len(),
            solutions,
        }
    }

    pub fn points(&self) -> impl Iterator<Item = &FixedPoint3> {
        self.solutions.iter().map(|s| &s.point)
    }

    /// Whether `point` matches a member of the set at relative tolerance `tol`.
    pub fn contains(&self, point: [f64; 3], tol: f64) -> bool {
        self.points()
            .any(|p| relative_distance(p.coords(), point) < tol)
    }

    /// Same points (both directions) at relative tolerance `tol`.
    pub fn same_points(&self, other: &SolutionSet, tol: f64) -> bool {
        self.count == other.count
            && self.points().all(|p| other.contains(p.coords(), tol))
            && other.points().all(|p| self.contains(p.coords(), tol))
    }
}

/// Max componentwise relative difference.
pub fn relative_distance(p: [f64; 3], q: [f64; 3]) -> f64 {
    (0..3)
        .map(|i| {
            let scale = p[i].abs().max(q[i].abs());
            if scale == 0.0 {
                0.0
            } else {
                (p[i] - q[i]).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

fn close(x: f64, y: f64) -> bool {
    (x - y).abs() <= MEMBERSHIP_TOL * x.abs().max(y.abs()).max(1.0)
}

pub fn classify_point(point: &FixedPoint3, params: &DerivedParams) -> Vec<SetLabel> {
    let FixedPoint3 { u, v, w, .. } = *point;
    let mut labels = Vec::new();
    if params.is_unit_emission() {
        if close(u, 1.0) && close(v, w) {
            labels.push(SetLabel::I1);
        }
        if close(v, 1.0) && close(u, w) {
            labels.push(SetLabel::I2);
        }
        if close(w, 1.0) && close(u, v) {
            labels.push(SetLabel::I3);
        }
    } else if close(w, 1.0) && close(u, v) {
        labels.push(SetLabel::SymmetricDiagonal);
    }
    if labels.is_empty() {
        labels.push(SetLabel::OffSet);
    }
    labels
}

fn push_unique(points: &mut Vec<FixedPoint3>, p: FixedPoint3, tol: f64) -> bool {
    if points
        .iter()
        .any(|q| relative_distance(q.coords(), p.coords()) < tol)
    {
        false
    } else {
        points.push(p);
        true
    }
}

/// Fixed points on the three invariant planes (requires `a = b = c = 1`).
pub fn solve_invariant_sets(params: &DerivedParams) -> Result<SolutionSet> {
    if !params.is_unit_emission() {
        return Err(Error::Precondition(format!(
            "invariant-set reduction needs a = b = c = 1, got a={}, b={}, c={}",
            params.a, params.b, params.c
        )));
    }
    let (k, theta) = (params.k, params.theta);
    let mut points = Vec::new();
    for x in solve_scalar(k, theta)? {
        push_unique(&mut points, FixedPoint3::new(1.0, x, x, params), DEDUP_TOL);
    }
    for x in solve_scalar(k, theta.recip())? {
        push_unique(&mut points, FixedPoint3::new(x, 1.0, x, params), DEDUP_TOL);
    }
    for x in solve_scalar(k, big_theta(theta))? {
        push_unique(&mut points, FixedPoint3::new(x, x, 1.0, params), DEDUP_TOL);
    }
    Ok(SolutionSet::from_points(params, points))
}

/// Number of translation-invariant measures guaranteed in the `a = b = c = 1`
/// regime, with the two critical values of `θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseRegion {
    pub k: usize,
    pub theta: f64,
    pub count_lower_bound: usize,
    pub theta_c_high: f64,
    pub theta_c_low: f64,
}

/// Three measures strictly outside `[θ_c_low, θ_c_high]`, one inside. At the
/// two endpoints the scalar equation has a triple root at 1 and the count
/// is 1.
pub fn classify_tigm_count(k: usize, theta: f64) -> Result<PhaseRegion> {
    let high = critical_value(k)
        .ok_or_else(|| Error::Precondition("phase classification needs k >= 2".into()))?;
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::Validation(format!(
            "theta must be positive, got {theta}"
        )));
    }
    let low = high.recip();
    let count = if theta > high || theta < low { 3 } else { 1 };
    Ok(PhaseRegion {
        k,
        theta,
        count_lower_bound: count,
        theta_c_high: high,
        theta_c_low: low,
    })
}

/// The unique positive solution for `k = 1`, `a = b`, `c = 1`:
/// `(u₁, u₁, 1)` with `u₁² + (1 − a)Θu₁ − a = 0`.
pub fn solve_k1_symmetric(theta: f64, a: f64) -> Result<FixedPoint3> {
    let params = DerivedParams::new(1, theta, a, a, 1.0)?;
    let u = k1_root(theta, a);
    Ok(FixedPoint3::new(u, u, 1.0, &params))
}

fn k1_root(theta: f64, a: f64) -> f64 {
    let p = (a - 1.0) * big_theta(theta);
    0.5 * (p + (p * p + 4.0 * a).sqrt())
}

/// The fixed point on the diagonal `u = v, w = 1` for `a = b, c = 1`: the
/// unique root of `u = a((1 + Θu)/(Θ + u))^k`.
///
/// The right side is non-increasing in `u` for `Θ ≤ 1`, so the difference
/// changes sign exactly once on `(0, a/Θ^k + 1]`. At `θ = 1` it is constant
/// and the root is `u = a`.
pub fn solve_symmetric_diagonal(k: usize, theta: f64, a: f64) -> Result<FixedPoint3> {
    let params = DerivedParams::new(k, theta, a, a, 1.0)?;
    let big = big_theta(theta);
    let rhs = |u: f64| a * ((1.0 + big * u) / (big + u)).powi(k as i32);
    let hi = a * big.powi(-(k as i32)) + 1.0;
    let u = bisect(|u| u - rhs(u), 0.0, hi);
    Ok(FixedPoint3::new(u, u, 1.0, &params))
}

/// On a solution with `a = b, c = 1`: `u = v` holds iff `w = 1` holds.
pub fn lemma_xy_z1(point: &FixedPoint3, params: &DerivedParams) -> Result<bool> {
    if !params.is_flip_symmetric() {
        return Err(Error::Precondition("needs a = b and c = 1".into()));
    }
    let res = residual(point.coords(), params);
    if res >= RESIDUAL_TOL {
        return Err(Error::Precondition(format!(
            "point is not a fixed point (residual {res:.3e})"
        )));
    }
    let tol = 1e-7;
    Ok(((point.u - point.v).abs() < tol) == ((point.w - 1.0).abs() < tol))
}

// ---------------------------------------------------------------------------
// Full system: multistart damped Newton
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultistartConfig {
    /// Start values per coordinate; the seed grid is its cube.
    pub grid: Vec<f64>,
    pub max_iterations: usize,
}

impl Default for MultistartConfig {
    fn default() -> Self {
        MultistartConfig {
            grid: vec![1e-2, 1e-1, 1.0, 1e1, 1e2],
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOutcome {
    pub point: FixedPoint3,
    pub iterations: usize,
}

/// `g(y) = log F(e^y) − y`, whose zeros are the fixed points of `F`.
fn log_defect(y: [f64; 3], params: &DerivedParams) -> ([f64; 3], [[f64; 3]; 3]) {
    let t = y.map(f64::exp);
    let theta = params.theta;
    let inv = theta.recip();
    let s = sums(t, theta);
    let k = params.k as f64;
    let coef = [params.a, params.b, params.c];
    let d_numer = [[1.0, 1.0, inv], [1.0, 1.0, theta], [inv, theta, 1.0]];
    let d_denom = [theta, inv, 1.0];

    let mut g = [0.0; 3];
    let mut jac = [[0.0; 3]; 3];
    for i in 0..3 {
        g[i] = coef[i].ln() + k * (s.numer[i].ln() - s.denom.ln()) - y[i];
        for j in 0..3 {
            jac[i][j] = k * t[j] * (d_numer[i][j] / s.numer[i] - d_denom[j] / s.denom);
        }
        jac[i][i] -= 1.0;
    }
    (g, jac)
}

fn norm2(v: &[f64; 3]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for c in col..3 {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Damped Newton from `seed` in logarithmic coordinates (which keeps every
/// iterate in the positive orthant). Steps are halved until the defect norm
/// decreases. Returns `None` if the result is not a fixed point to
/// [`RESIDUAL_TOL`].
pub fn newton_from_seed(
    seed: [f64; 3],
    params: &DerivedParams,
    max_iterations: usize,
) -> Option<NewtonOutcome> {
    const MAX_LOG_STEP: f64 = 8.0;
    if seed.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
        return None;
    }
    let mut y = seed.map(f64::ln);
    let (mut g, mut jac) = log_defect(y, params);
    let mut iterations = 0;
    while iterations < max_iterations {
        if g.iter().all(|v| v.abs() < 1e-15) {
            break;
        }
        let Some(mut step) = solve3(jac, g.map(|v| -v)) else {
            break;
        };
        let longest = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if longest > MAX_LOG_STEP {
            step = step.map(|s| s * MAX_LOG_STEP / longest);
        }
        let current = norm2(&g);
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let trial: [f64; 3] = std::array::from_fn(|i| y[i] + lambda * step[i]);
            let (g_trial, jac_trial) = log_defect(trial, params);
            if g_trial.iter().all(|v| v.is_finite()) && norm2(&g_trial) < current {
                accepted = Some((trial, g_trial, jac_trial));
                break;
            }
            lambda *= 0.5;
        }
        let Some((trial, g_trial, jac_trial)) = accepted else {
            break;
        };
        iterations += 1;
        let moved = (0..3).fold(0.0f64, |m, i| m.max((trial[i] - y[i]).abs()));
        y = trial;
        g = g_trial;
        jac = jac_trial;
        if moved < 1e-16 {
            break;
        }
    }
    let t = y.map(f64::exp);
    let point = FixedPoint3::new(t[0], t[1], t[2], params);
    (point.residual < RESIDUAL_TOL).then_some(NewtonOutcome { point, iterations })
}

/// Seeds from the one-dimensional reductions that apply to `params`.
fn reduction_seeds(params: &DerivedParams) -> Vec<[f64; 3]> {
    let mut seeds = Vec::new();
    if params.is_unit_emission() {
        if let Ok(set) = solve_invariant_sets(params) {
            seeds.extend(set.points().map(|p| p.coords()));
        }
    }
    if params.is_flip_symmetric() {
        if let Ok(p) = solve_symmetric_diagonal(params.k, params.theta, params.a) {
            seeds.push(p.coords());
        }
        if params.k == 1 {
            let u = k1_root(params.theta, params.a);
            seeds.push([u, u, 1.0]);
        }
    }
    seeds
}

/// All positive fixed points of `F` found from the reduction seeds and the
/// logarithmic start grid, deduplicated and labelled.
pub fn solve_full_3d(params: &DerivedParams, config: &MultistartConfig) -> SolutionSet {
    let mut anchors: Vec<FixedPoint3> = Vec::new();
    for seed in reduction_seeds(params) {
        if let Some(out) = newton_from_seed(seed, params, config.max_iterations) {
            push_unique(&mut anchors, out.point, DEDUP_TOL);
        }
    }

    let mut found: Vec<FixedPoint3> = Vec::new();
    for &u in &config.grid {
        for &v in &config.grid {
            for &w in &config.grid {
                let Some(out) = newton_from_seed([u, v, w], params, config.max_iterations) else {
                    continue;
                };
                let near_anchor = anchors
                    .iter()
                    .any(|a| relative_distance(a.coords(), out.point.coords()) < ANCHOR_TOL);
                if !near_anchor {
                    found.push(out.point);
                }
            }
        }
    }
    // deterministic merge: most accurate representative of each cluster first
    found.sort_by(|p, q| p.residual.total_cmp(&q.residual));
    let mut points = anchors;
    for p in found {
        push_unique(&mut points, p, DEDUP_TOL);
    }
    SolutionSet::from_points(params, points)
}

// ---------------------------------------------------------------------------
// Published reference rows
// ---------------------------------------------------------------------------

/// A row of the published numerical table: `(k, θ, a)` with `b = a`, `c = 1`
/// and a printed triple `(x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub k: usize,
    pub theta: f64,
    pub a: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

const fn row(k: usize, theta: f64, a: f64, x: f64, y: f64, z: f64) -> ReferenceRow {
    ReferenceRow {
        k,
        theta,
        a,
        x,
        y,
        z,
    }
}

pub const REFERENCE_ROWS: [ReferenceRow; 11] = [
    row(2, 0.1, 2.0, 1.268048128, 1.268048128, 1.0),
    row(2, 0.1, 2.0, 0.2005870619, 1.263964993, 0.6570348177),
    row(2, 0.1, 2.0, 192.3741268, 3.052913735, 152.1989357),
    row(2, 0.1, 0.5, 0.7886136007, 0.7886136007, 1.0),
    row(2, 0.1, 0.5, 0.005198204231, 0.7911611517, 0.1586966909),
    row(2, 0.1, 0.5, 49.85366406, 0.3275559308, 63.01328616),
    row(2, 0.1, 1.0, 1.0, 1.0, 1.0),
    row(2, 0.1, 1.0, 0.1010204092, 1.0, 0.1010204092),
    row(2, 0.1, 1.0, 98.98989796, 1.0, 98.98989796),
    row(2, 1.3, 1.0, 1.0, 1.0, 1.0),
    row(2, 1.3, 0.5, 0.5376526550, 0.5376526550, 1.0),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRowCheck {
    pub inputs: ReferenceRow,
    /// Residual with `(u, v, w) = (x, y, z)`.
    pub residual_raw: f64,
    /// Residual with `(u, v, w) = (x^k, y^k, z^k)`.
    pub residual_powered: f64,
    pub classification: RowClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowClass {
    FixedPointRaw,
    FixedPointPowered,
    NotAFixedPoint,
}

/// Residual of a printed row under both readings of its variables; a row
/// counts as a fixed point if a residual is below `1e-6` (the rows carry ten
/// significant digits).
pub fn check_reference_row(row: &ReferenceRow) -> Result<ReferenceRowCheck> {
    let params = DerivedParams::new(row.k, row.theta, row.a, row.a, 1.0)?;
    let k = row.k as i32;
    let raw = residual([row.x, row.y, row.z], &params);
    let powered = residual([row.x.powi(k), row.y.powi(k), row.z.powi(k)], &params);
    let classification = if raw < 1e-6 {
        RowClass::FixedPointRaw
    } else if powered < 1e-6 {
        RowClass::FixedPointPowered
    } else {
        RowClass::NotAFixedPoint
    };
    Ok(ReferenceRowCheck {
        inputs: *row,
        residual_raw: raw,
        residual_powered: powered,
        classification,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit(k: usize, theta: f64) -> DerivedParams {
        DerivedParams::new(k, theta, 1.0, 1.0, 1.0).unwrap()
    }

    /// Closed form of the two nontrivial `I₁` roots for `k = 2`, `θ ≥ 3`.
    fn closed_form_k2(theta: f64) -> (f64, f64) {
        let base = theta * theta - 2.0 * theta - 1.0;
        let disc = (theta - 1.0) * ((theta + 1.0) * (theta - 3.0)).sqrt();
        (0.5 * (base - disc), 0.5 * (base + disc))
    }

    #[test]
    fn apply_f_trivial_points() {
        assert_eq!(apply_f([1.0, 1.0, 1.0], &unit(3, 2.5)), [1.0, 1.0, 1.0]);
        let out = apply_f([0.3, 7.0, 2.0], &unit(2, 1.0));
        for x in out {
            assert_relative_eq!(x, 1.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn apply_f_closed_form_point() {
        let (v1, _) = closed_form_k2(4.0);
        assert!(residual([1.0, v1, v1], &unit(2, 4.0)) < 1e-12);
    }

    #[test]
    fn apply_f_row_by_row() {
        // k = 1, direct evaluation of each row of the map
        let d = DerivedParams::new(1, 2.0, 0.7, 1.3, 0.9).unwrap();
        let (u, v, w) = (0.4, 2.0, 1.5);
        let den = 1.0 + 2.0 * u + 0.5 * v + w;
        let expected = [
            0.7 * (2.0 + u + v + 0.5 * w) / den,
            1.3 * (0.5 + u + v + 2.0 * w) / den,
            0.9 * (1.0 + 0.5 * u + 2.0 * v + w) / den,
        ];
        let out = apply_f([u, v, w], &d);
        for i in 0..3 {
            assert_relative_eq!(out[i], expected[i], max_relative = 1e-15);
        }
    }

    #[test]
    fn scalar_at_boundary_is_unique() {
        assert_eq!(solve_scalar(2, 3.0).unwrap(), vec![1.0]);
        assert_eq!(solve_scalar(2, 2.9).unwrap(), vec![1.0]);
        assert_eq!(solve_scalar(3, 0.2).unwrap(), vec![1.0]);
        for gamma in [0.1, 0.5, 2.0, 50.0] {
            assert_eq!(solve_scalar(1, gamma).unwrap(), vec![1.0]);
        }
    }

    #[test]
    fn scalar_three_roots() {
        // t³ − 10t² + 10t − 1 = (t − 1)(t² − 9t + 1)
        let roots = solve_scalar(2, 10.0).unwrap();
        assert_eq!(roots.len(), 3);
        let disc = 77f64.sqrt();
        assert_relative_eq!(roots[0], ((9.0 - disc) / 2.0).powi(2), max_relative = 1e-13);
        assert_relative_eq!(roots[2], ((9.0 + disc) / 2.0).powi(2), max_relative = 1e-13);
        assert!((roots[0] - 0.012660).abs() < 1e-6);
        assert!((roots[2] - 78.987340).abs() < 1e-6);
        let eq = ScalarEquation::new(2, 10.0).unwrap();
        for x in roots {
            assert_relative_eq!(eq.rhs(x), x, max_relative = 1e-12);
        }
    }

    #[test]
    fn scalar_rejects_bad_gamma() {
        assert!(solve_scalar(2, 0.0).is_err());
        assert!(solve_scalar(2, f64::NAN).is_err());
        assert!(solve_scalar(0, 1.0).is_err());
    }

    #[test]
    fn invariant_sets_k2_theta4() {
        let set = solve_invariant_sets(&unit(2, 4.0)).unwrap();
        let (v1, v2) = closed_form_k2(4.0);
        assert_eq!(set.count, 3);
        assert!(set.contains([1.0, 1.0, 1.0], 1e-12));
        assert!(set.contains([1.0, v1, v1], 1e-10));
        assert!(set.contains([1.0, v2, v2], 1e-10));
        assert!((v1 - 0.145898).abs() < 1e-6 && (v2 - 6.854102).abs() < 1e-6);
    }

    #[test]
    fn invariant_sets_small_theta_uses_i2() {
        let set = solve_invariant_sets(&unit(2, 0.1)).unwrap();
        assert_eq!(set.count, 3);
        let disc = 77f64.sqrt();
        let lo = ((9.0 - disc) / 2.0).powi(2);
        let hi = ((9.0 + disc) / 2.0).powi(2);
        assert!(set.contains([lo, 1.0, lo], 1e-10));
        assert!(set.contains([hi, 1.0, hi], 1e-10));
        assert_eq!(solve_invariant_sets(&unit(2, 2.0)).unwrap().count, 1);
    }

    #[test]
    fn invariant_sets_need_unit_emission() {
        let d = DerivedParams::new(2, 4.0, 0.5, 1.0, 1.0).unwrap();
        assert!(matches!(
            solve_invariant_sets(&d),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn phase_regions() {
        let r = classify_tigm_count(2, 4.0).unwrap();
        assert_eq!(r.count_lower_bound, 3);
        assert_eq!(r.theta_c_high, 3.0);
        assert_relative_eq!(r.theta_c_low, 1.0 / 3.0);
        assert_eq!(classify_tigm_count(2, 1.0).unwrap().count_lower_bound, 1);
        assert_eq!(classify_tigm_count(3, 1.0).unwrap().theta_c_high, 2.0);
        assert!(matches!(
            classify_tigm_count(1, 2.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn k1_closed_form() {
        let p = solve_k1_symmetric(2.0, 0.3).unwrap();
        let big = 0.8;
        assert!((p.u * p.u + (1.0 - 0.3) * big * p.u - 0.3).abs() < 1e-12);
        assert!((p.u - 0.335142).abs() < 1e-5);
        assert!(p.residual < 1e-12);
        assert_eq!(solve_k1_symmetric(0.4, 1.0).unwrap().u, 1.0);
        assert_relative_eq!(
            solve_k1_symmetric(1.0, 4.0).unwrap().u,
            4.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn diagonal_matches_k1_and_unit_a() {
        for theta in [0.3, 1.0, 2.0, 7.0] {
            let d = solve_symmetric_diagonal(1, theta, 0.3).unwrap();
            let c = solve_k1_symmetric(theta, 0.3).unwrap();
            assert_relative_eq!(d.u, c.u, max_relative = 1e-13);
            assert_relative_eq!(
                solve_symmetric_diagonal(3, theta, 1.0).unwrap().u,
                1.0,
                max_relative = 1e-14
            );
        }
        // θ = 1: the right side is the constant a
        assert_relative_eq!(
            solve_symmetric_diagonal(2, 1.0, 0.7).unwrap().u,
            0.7,
            max_relative = 1e-14
        );
    }

    #[test]
    fn diagonal_root_is_fixed_point() {
        for (k, theta, a) in [(2, 1.3, 0.5), (3, 0.1, 2.0), (2, 10.0, 0.01)] {
            let p = solve_symmetric_diagonal(k, theta, a).unwrap();
            assert!(p.residual < 1e-12, "{p}");
        }
    }

    #[test]
    fn newton_from_closed_form_seed() {
        let (v1, _) = closed_form_k2(4.0);
        let out = newton_from_seed([1.0, v1, v1], &unit(2, 4.0), 200).unwrap();
        assert!(out.iterations <= 3);
        assert!(out.point.residual < 1e-12);
    }

    #[test]
    fn full_search_unit_emission_small_theta() {
        let d = unit(2, 0.1);
        let full = solve_full_3d(&d, &MultistartConfig::default());
        let reduced = solve_invariant_sets(&d).unwrap();
        assert!(full.same_points(&reduced, 1e-6), "{full:#?}");
        let labels: Vec<_> = full.solutions.iter().map(|s| s.labels.clone()).collect();
        assert!(labels.contains(&vec![SetLabel::I1, SetLabel::I2, SetLabel::I3]));
        assert_eq!(
            labels.iter().filter(|l| **l == vec![SetLabel::I2]).count(),
            2
        );
    }

    #[test]
    fn full_search_k1_unique() {
        let d = DerivedParams::new(1, 2.0, 0.3, 0.3, 1.0).unwrap();
        let full = solve_full_3d(&d, &MultistartConfig::default());
        assert_eq!(full.count, 1);
        let expected = solve_k1_symmetric(2.0, 0.3).unwrap();
        assert!(full.contains(expected.coords(), 1e-8));
        assert_eq!(full.solutions[0].labels, vec![SetLabel::SymmetricDiagonal]);
    }

    #[test]
    fn xy_z1_holds_on_solutions() {
        let d = DerivedParams::new(2, 0.1, 2.0, 2.0, 1.0).unwrap();
        let set = solve_full_3d(&d, &MultistartConfig::default());
        assert!(set.count >= 1);
        for p in set.points() {
            assert!(lemma_xy_z1(p, &d).unwrap());
        }
        let bogus = FixedPoint3::new(3.0, 3.0, 1.0, &d);
        assert!(lemma_xy_z1(&bogus, &d).is_err());
    }

    #[test]
    fn reference_rows_are_reported() {
        for row in REFERENCE_ROWS {
            let check = check_reference_row(&row).unwrap();
            assert!(check.residual_raw.is_finite() && check.residual_powered.is_finite());
        }
        // the trivial rows are exact fixed points
        let trivial = check_reference_row(&REFERENCE_ROWS[6]).unwrap();
        assert_eq!(trivial.classification, RowClass::FixedPointRaw);
    }
}
