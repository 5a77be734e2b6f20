//! Model parameters, derived transfer constants, bilayer configurations and
//! the energy evaluators.
//!
//! Every vertex carries a hidden spin `s(x)` and an observed spin `σ(x)`.
//! The joint weight of a configuration on a finite tree is
//!
//! ```text
//! exp(-β H) ,  H = -J Σ_edges (s(x)s(y) - σ(x)σ(y)) - Σ_x p(σ(x) | s(x))
//! ```
//!
//! and after normalizing by the `(−1,−1)` emission entry only four numbers
//! survive: `θ = exp(2Jβ)` and the emission ratios `a`, `b`, `c`.

use std::fmt;
use std::ops::{Index, IndexMut, Neg};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::tree::Tree;

/// An Ising spin, `−1` or `+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Spin {
    Minus,
    Plus,
}

impl Spin {
    pub const BOTH: [Spin; 2] = [Spin::Minus, Spin::Plus];

    pub fn value(self) -> i8 {
        match self {
            Spin::Minus => -1,
            Spin::Plus => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.value())
    }

    pub fn from_value(v: i64) -> Result<Spin> {
        match v {
            -1 => Ok(Spin::Minus),
            1 => Ok(Spin::Plus),
            other => Err(Error::Validation(format!(
                "spin must be -1 or +1, got {other}"
            ))),
        }
    }

    /// 0 for `−1`, 1 for `+1`.
    pub fn bit(self) -> usize {
        match self {
            Spin::Minus => 0,
            Spin::Plus => 1,
        }
    }

    pub fn from_bit(bit: usize) -> Spin {
        if bit & 1 == 1 {
            Spin::Plus
        } else {
            Spin::Minus
        }
    }
}

impl Neg for Spin {
    type Output = Spin;

    fn neg(self) -> Spin {
        match self {
            Spin::Minus => Spin::Plus,
            Spin::Plus => Spin::Minus,
        }
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Spin::Minus => "-1",
            Spin::Plus => "+1",
        })
    }
}

impl FromStr for Spin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Spin> {
        match s.trim() {
            "-1" | "-" => Ok(Spin::Minus),
            "+1" | "1" | "+" => Ok(Spin::Plus),
            other => Err(Error::Validation(format!(
                "cannot parse spin from {other:?}"
            ))),
        }
    }
}

impl Serialize for Spin {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_i8(self.value())
    }
}

impl<'de> Deserialize<'de> for Spin {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(deserializer)?;
        Spin::from_value(v).map_err(serde::de::Error::custom)
    }
}

/// A (hidden, observed) spin pair at one vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BilayerState {
    pub hidden: Spin,
    pub observed: Spin,
}

impl BilayerState {
    /// The four states in table order `(−,−), (−,+), (+,−), (+,+)`.
    pub const ALL: [BilayerState; 4] = [
        BilayerState::new(Spin::Minus, Spin::Minus),
        BilayerState::new(Spin::Minus, Spin::Plus),
        BilayerState::new(Spin::Plus, Spin::Minus),
        BilayerState::new(Spin::Plus, Spin::Plus),
    ];

    pub const fn new(hidden: Spin, observed: Spin) -> Self {
        BilayerState { hidden, observed }
    }

    pub fn index(self) -> usize {
        2 * self.hidden.bit() + self.observed.bit()
    }

    pub fn from_index(i: usize) -> Self {
        BilayerState::new(Spin::from_bit(i >> 1), Spin::from_bit(i))
    }
}

/// A value per bilayer state, indexed in the order of [`BilayerState::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTable(pub [f64; 4]);

impl PairTable {
    pub fn from_fn(f: impl Fn(BilayerState) -> f64) -> Self {
        PairTable(BilayerState::ALL.map(f))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        PairTable(self.0.map(f))
    }

    pub fn get(&self, hidden: Spin, observed: Spin) -> f64 {
        self.0[BilayerState::new(hidden, observed).index()]
    }
}

impl Index<BilayerState> for PairTable {
    type Output = f64;

    fn index(&self, s: BilayerState) -> &f64 {
        &self.0[s.index()]
    }
}

impl IndexMut<BilayerState> for PairTable {
    fn index_mut(&mut self, s: BilayerState) -> &mut f64 {
        &mut self.0[s.index()]
    }
}

/// Emission log-weights `p(δ | ε)`, keyed by hidden spin then observed spin.
///
/// `mp` is the entry for hidden `−1`, observed `+1`, and so on. The values are
/// raw log-weights; they need not be normalized log-probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Emission {
    pub mm: f64,
    pub mp: f64,
    pub pm: f64,
    pub pp: f64,
}

impl Emission {
    pub fn uniform(value: f64) -> Self {
        Emission {
            mm: value,
            mp: value,
            pm: value,
            pp: value,
        }
    }

    pub fn get(&self, hidden: Spin, observed: Spin) -> f64 {
        match (hidden, observed) {
            (Spin::Minus, Spin::Minus) => self.mm,
            (Spin::Minus, Spin::Plus) => self.mp,
            (Spin::Plus, Spin::Minus) => self.pm,
            (Spin::Plus, Spin::Plus) => self.pp,
        }
    }

    fn entries(&self) -> [f64; 4] {
        [self.mm, self.mp, self.pm, self.pp]
    }
}

/// Physical inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub k: usize,
    #[serde(rename = "J")]
    pub coupling: f64,
    pub beta: f64,
    pub emission: Emission,
}

impl ModelParams {
    pub fn new(k: usize, coupling: f64, beta: f64, emission: Emission) -> Result<Self> {
        let params = ModelParams {
            k,
            coupling,
            beta,
            emission,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Validation("k must be >= 1".into()));
        }
        if !self.coupling.is_finite() {
            return Err(Error::Validation("J must be finite".into()));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::Validation(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if self.emission.entries().iter().any(|e| !e.is_finite()) {
            return Err(Error::Validation("emission entries must be finite".into()));
        }
        Ok(())
    }

    /// Transfer constants `θ = exp(2Jβ)` and the emission ratios
    /// `exp(β (p(δ|ε) − p(−1|−1)))`.
    pub fn derive(&self) -> Result<DerivedParams> {
        self.validate()?;
        let e = &self.emission;
        let ratio = |entry: f64| (self.beta * (entry - e.mm)).exp();
        DerivedParams::new(
            self.k,
            (2.0 * self.coupling * self.beta).exp(),
            ratio(e.mp),
            ratio(e.pm),
            ratio(e.pp),
        )
    }
}

/// Transfer constants that fully determine the measures.
///
/// `a`, `b`, `c` are the emission weights of the states (hidden −1, observed
/// +1), (hidden +1, observed −1) and (hidden +1, observed +1) relative to
/// (hidden −1, observed −1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub k: usize,
    pub theta: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl DerivedParams {
    pub fn new(k: usize, theta: f64, a: f64, b: f64, c: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::Validation("k must be >= 1".into()));
        }
        for (name, v) in [("theta", theta), ("a", a), ("b", b), ("c", c)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(DerivedParams { k, theta, a, b, c })
    }

    /// Emission weight table `E` with `E(−1,−1) = 1`.
    pub fn emission_weights(&self) -> PairTable {
        PairTable([1.0, self.a, self.b, self.c])
    }

    pub fn is_unit_emission(&self) -> bool {
        self.a == 1.0 && self.b == 1.0 && self.c == 1.0
    }

    /// `a = b` and `c = 1`: the spin-flip symmetric emission regime.
    pub fn is_flip_symmetric(&self) -> bool {
        self.a == self.b && self.c == 1.0
    }

    /// `Θ = 2 / (θ + θ⁻¹)`.
    pub fn big_theta(&self) -> f64 {
        big_theta(self.theta)
    }
}

pub fn big_theta(theta: f64) -> f64 {
    2.0 / (theta + theta.recip())
}

/// Model input accepted from configuration documents: either physical
/// parameters `{k, J, beta, emission}` or derived ones `{k, theta, a, b, c}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelSpec {
    Physical(ModelParams),
    Derived(DerivedParams),
}

const PHYSICAL_KEYS: [&str; 3] = ["J", "beta", "emission"];
const DERIVED_KEYS: [&str; 4] = ["theta", "a", "b", "c"];

impl ModelSpec {
    pub fn derived(&self) -> Result<DerivedParams> {
        match self {
            ModelSpec::Physical(p) => p.derive(),
            ModelSpec::Derived(d) => Ok(*d),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(s).map_err(|e| Error::Validation(format!("bad JSON: {e}")))?;
        Self::from_json(&value)
    }

    /// Parses a model document; exactly one of the two key groups may be
    /// present. Unrelated keys are ignored so the model can be embedded in a
    /// larger run configuration.
    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Validation("model config must be a JSON object".into()))?;
        let has_physical = PHYSICAL_KEYS.iter().any(|k| obj.contains_key(*k));
        let has_derived = DERIVED_KEYS.iter().any(|k| obj.contains_key(*k));
        let parse_err = |e: serde_json::Error| Error::Validation(format!("model config: {e}"));
        match (has_physical, has_derived) {
            (true, false) => {
                let p: ModelParams = serde_json::from_value(value.clone()).map_err(parse_err)?;
                p.validate()?;
                Ok(ModelSpec::Physical(p))
            }
            (false, true) => {
                let d: DerivedParams = serde_json::from_value(value.clone()).map_err(parse_err)?;
                Ok(ModelSpec::Derived(DerivedParams::new(
                    d.k, d.theta, d.a, d.b, d.c,
                )?))
            }
            (true, true) => Err(Error::Validation(
                "model config mixes physical {J, beta, emission} and derived {theta, a, b, c} keys"
                    .into(),
            )),
            (false, false) => Err(Error::Validation(
                "model config needs either {k, J, beta, emission} or {k, theta, a, b, c}".into(),
            )),
        }
    }
}

/// Hidden and observed layers on the vertices of a finite tree, indexed by
/// breadth-first vertex index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BilayerConfig {
    pub hidden: Vec<Spin>,
    pub observed: Vec<Spin>,
}

impl BilayerConfig {
    pub fn new(hidden: Vec<Spin>, observed: Vec<Spin>) -> Result<Self> {
        if hidden.len() != observed.len() {
            return Err(Error::Domain(format!(
                "hidden layer has {} vertices, observed layer {}",
                hidden.len(),
                observed.len()
            )));
        }
        Ok(BilayerConfig { hidden, observed })
    }

    pub fn len(&self) -> usize {
        self.hidden.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.is_empty()
    }

    pub fn state(&self, x: usize) -> BilayerState {
        BilayerState::new(self.hidden[x], self.observed[x])
    }

    pub fn check_tree(&self, tree: &Tree) -> Result<()> {
        if self.hidden.len() != tree.len() || self.observed.len() != tree.len() {
            return Err(Error::Domain(format!(
                "configuration covers {} vertices but the tree has {}",
                self.hidden.len(),
                tree.len()
            )));
        }
        Ok(())
    }

    /// Global spin flip of both layers.
    pub fn flipped(&self) -> BilayerConfig {
        BilayerConfig {
            hidden: self.hidden.iter().map(|&s| -s).collect(),
            observed: self.observed.iter().map(|&s| -s).collect(),
        }
    }
}

/// `H_n(s, σ) = −J Σ_{L_n} (s(x)s(y) − σ(x)σ(y)) − Σ_{V_n} p(σ(x) | s(x))`.
pub fn hamiltonian(cfg: &BilayerConfig, tree: &Tree, params: &ModelParams) -> Result<f64> {
    let loss = energy_loss(cfg, tree)?;
    let emission: f64 = (0..cfg.len())
        .map(|x| params.emission.get(cfg.hidden[x], cfg.observed[x]))
        .sum();
    Ok(-params.coupling * loss - emission)
}

/// `Σ_{L_n} (s(x)s(y) − σ(x)σ(y))`: the mismatch between hidden and observed
/// pairwise agreement.
pub fn energy_loss(cfg: &BilayerConfig, tree: &Tree) -> Result<f64> {
    cfg.check_tree(tree)?;
    Ok(tree
        .edge_indices()
        .map(|(x, y)| edge_mismatch(cfg, x, y))
        .sum())
}

pub(crate) fn edge_mismatch(cfg: &BilayerConfig, x: usize, y: usize) -> f64 {
    let hidden = cfg.hidden[x].value() * cfg.hidden[y].value();
    let observed = cfg.observed[x].value() * cfg.observed[y].value();
    f64::from(hidden - observed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{RootMode, TreeShape};
    use approx::assert_relative_eq;

    use Spin::{Minus as M, Plus as P};

    fn single_edge() -> Tree {
        Tree::new(TreeShape::reduced(1, 1).unwrap()).unwrap()
    }

    fn zero_emission(j: f64) -> ModelParams {
        ModelParams::new(1, j, 1.0, Emission::uniform(0.0)).unwrap()
    }

    #[test]
    fn derive_theta() {
        let p = ModelParams::new(2, 0.0, 1.7, Emission::uniform(0.0)).unwrap();
        assert_eq!(p.derive().unwrap().theta, 1.0);

        let p = ModelParams::new(2, 2f64.ln(), 1.0, Emission::uniform(0.0)).unwrap();
        assert_relative_eq!(p.derive().unwrap().theta, 4.0, max_relative = 1e-15);
    }

    #[test]
    fn derive_equal_emission_gives_unit_ratios() {
        let p = ModelParams::new(3, 0.4, 2.0, Emission::uniform(-0.693)).unwrap();
        let d = p.derive().unwrap();
        assert!(d.is_unit_emission());
    }

    #[test]
    fn derive_ratio_layout() {
        let e = Emission {
            mm: 0.1,
            mp: 0.5,
            pm: -0.3,
            pp: 0.2,
        };
        let d = ModelParams::new(2, 1.0, 2.0, e).unwrap().derive().unwrap();
        assert_relative_eq!(d.a, (2.0 * 0.4f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(d.b, (2.0 * -0.4f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(d.c, (2.0 * 0.1f64).exp(), max_relative = 1e-14);
        let table = d.emission_weights();
        for s in BilayerState::ALL {
            let expected = (2.0 * (e.get(s.hidden, s.observed) - e.mm)).exp();
            assert_relative_eq!(table[s], expected, max_relative = 1e-14);
        }
    }

    #[test]
    fn derive_rejects_bad_input() {
        assert!(ModelParams::new(2, 1.0, 0.0, Emission::uniform(0.0)).is_err());
        let mut e = Emission::uniform(0.0);
        e.pp = f64::NAN;
        assert!(matches!(
            ModelParams::new(2, 1.0, 1.0, e),
            Err(Error::Validation(_))
        ));
        assert!(DerivedParams::new(2, -1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn hamiltonian_single_edge() {
        let t = single_edge();
        let cfg = BilayerConfig::new(vec![P, P], vec![P, M]).unwrap();
        assert_eq!(hamiltonian(&cfg, &t, &zero_emission(1.0)).unwrap(), -2.0);

        let cfg = BilayerConfig::new(vec![P, M], vec![P, P]).unwrap();
        assert_eq!(hamiltonian(&cfg, &t, &zero_emission(1.0)).unwrap(), 2.0);
    }

    #[test]
    fn identical_layers_have_zero_energy() {
        let t = Tree::new(TreeShape::full(2, 2).unwrap()).unwrap();
        let s: Vec<Spin> = (0..t.len()).map(|i| Spin::from_bit(i * 7 % 3)).collect();
        let cfg = BilayerConfig::new(s.clone(), s).unwrap();
        assert_eq!(hamiltonian(&cfg, &t, &zero_emission(1.3)).unwrap(), 0.0);
    }

    #[test]
    fn hamiltonian_shape_mismatch() {
        let t = single_edge();
        let cfg = BilayerConfig::new(vec![P], vec![P]).unwrap();
        assert!(matches!(
            hamiltonian(&cfg, &t, &zero_emission(1.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn energy_loss_examples() {
        let chain = Tree::new(TreeShape::new(1, 3, RootMode::Reduced).unwrap()).unwrap();
        let s = vec![P; 4];
        let alternating: Vec<Spin> = (0..4)
            .map(|x| {
                if chain.generation_of(x).is_multiple_of(2) {
                    P
                } else {
                    M
                }
            })
            .collect();
        let cfg = BilayerConfig::new(s.clone(), alternating).unwrap();
        assert_eq!(energy_loss(&cfg, &chain).unwrap(), 6.0);

        let cfg = BilayerConfig::new(s.clone(), vec![M; 4]).unwrap();
        assert_eq!(energy_loss(&cfg, &chain).unwrap(), 0.0);

        let cfg = BilayerConfig::new(s.clone(), s).unwrap();
        assert_eq!(energy_loss(&cfg, &chain).unwrap(), 0.0);
    }

    #[test]
    fn flip_keeps_edge_terms() {
        let t = Tree::new(TreeShape::full(2, 2).unwrap()).unwrap();
        let cfg = BilayerConfig::new(
            (0..t.len()).map(|i| Spin::from_bit(i % 2)).collect(),
            (0..t.len()).map(|i| Spin::from_bit(i / 3)).collect(),
        )
        .unwrap();
        let flipped = cfg.flipped();
        assert_eq!(flipped.flipped(), cfg);
        assert_eq!(
            energy_loss(&cfg, &t).unwrap(),
            energy_loss(&flipped, &t).unwrap()
        );

        // a = b, c = 1
        let symmetric = Emission {
            mm: 0.3,
            mp: -0.8,
            pm: -0.8,
            pp: 0.3,
        };
        let p = ModelParams::new(2, 0.7, 1.1, symmetric).unwrap();
        assert!(p.derive().unwrap().is_flip_symmetric());
        assert_relative_eq!(
            hamiltonian(&cfg, &t, &p).unwrap(),
            hamiltonian(&flipped, &t, &p).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn flip_changes_energy_without_symmetry() {
        let root = Tree::new(TreeShape::full(2, 0).unwrap()).unwrap();
        // a != b: p(+1 | -1) = 0.5 vs p(-1 | +1) = -0.5
        let e = Emission {
            mm: 0.0,
            mp: 0.5,
            pm: -0.5,
            pp: 0.0,
        };
        let p = ModelParams::new(2, 1.0, 1.0, e).unwrap();
        let cfg = BilayerConfig::new(vec![M], vec![P]).unwrap();
        // H(−,+) = −0.5, H(+,−) = +0.5
        assert_eq!(hamiltonian(&cfg, &root, &p).unwrap(), -0.5);
        assert_eq!(hamiltonian(&cfg.flipped(), &root, &p).unwrap(), 0.5);
    }

    #[test]
    fn model_spec_key_groups() {
        let physical = r#"{"k": 2, "J": 0.5, "beta": 1.0,
            "emission": {"mm": 0.0, "mp": 0.0, "pm": 0.0, "pp": 0.0}}"#;
        let d = ModelSpec::from_json_str(physical)
            .unwrap()
            .derived()
            .unwrap();
        assert_relative_eq!(d.theta, 1f64.exp(), max_relative = 1e-15);

        let derived = r#"{"k": 2, "theta": 4.0, "a": 1, "b": 1, "c": 1}"#;
        assert!(matches!(
            ModelSpec::from_json_str(derived).unwrap(),
            ModelSpec::Derived(DerivedParams { k: 2, .. })
        ));

        let both = r#"{"k": 2, "theta": 4.0, "a": 1, "b": 1, "c": 1, "J": 1.0}"#;
        assert!(ModelSpec::from_json_str(both).is_err());
        assert!(ModelSpec::from_json_str(r#"{"k": 2}"#).is_err());
        assert!(ModelSpec::from_json_str(r#"{"k": 2, "theta": 4.0}"#).is_err());
    }

    #[test]
    fn both_entry_points_agree() {
        let p = ModelParams::new(
            2,
            0.35,
            1.4,
            Emission {
                mm: -0.2,
                mp: -1.1,
                pm: -0.9,
                pp: 0.05,
            },
        )
        .unwrap();
        let d = p.derive().unwrap();
        let doc = serde_json::to_string(&d).unwrap();
        assert_eq!(
            ModelSpec::from_json_str(&doc).unwrap().derived().unwrap(),
            d
        );
    }
}
