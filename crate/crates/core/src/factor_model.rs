//! Exact information theory over uniform mixtures of independent factor pairs.
//!
//! A corpus is modelled as `m` sub-datasets. Each sub-dataset carries a
//! task-relevant factor `u` and a task-irrelevant factor `v`, drawn
//! independently from finite distributions. The corpus is the uniform
//! mixture of its sub-datasets, so `u` and `v` become dependent as soon as
//! the sub-datasets differ. Everything here is evaluated exactly by
//! enumerating supports; all logarithms are base 2 and results are in bits.

use std::collections::HashMap;
use std::fmt;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `sum(mass) == 1` and on negative masses.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error("support has {support} symbols but {mass} masses")]
    LengthMismatch { support: usize, mass: usize },
    #[error("distribution has an empty support")]
    EmptySupport,
    #[error("symbol {0:?} appears more than once in one support")]
    DuplicateSymbol(String),
    #[error("mass {value} for symbol {symbol:?} is negative or not finite")]
    InvalidMass { symbol: String, value: f64 },
    #[error("masses sum to {0}, expected 1 within 1e-12")]
    NotNormalized(f64),
    #[error("a mixture needs at least one component")]
    EmptyMixture,
    #[error("operation is only defined for two sub-datasets, got {0}")]
    UnsupportedArity(usize),
    #[error("supports overlap on factor {0}; use the overlapping-support bound instead")]
    OverlappingSupports(Factor),
    #[error("{0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, FactorError>;

/// Which of the two observation factors an operation targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Factor {
    U,
    V,
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Factor::U => f.write_str("u"),
            Factor::V => f.write_str("v"),
        }
    }
}

impl std::str::FromStr for Factor {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "u" | "U" => Ok(Factor::U),
            "v" | "V" => Ok(Factor::V),
            other => Err(format!("unknown factor {other:?}, expected u or v")),
        }
    }
}

/// A finite distribution over opaque string symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionDoc", into = "DistributionDoc")]
pub struct DiscreteDistribution {
    support: Vec<String>,
    mass: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DistributionDoc {
    symbols: Vec<String>,
    mass: Vec<f64>,
}

impl TryFrom<DistributionDoc> for DiscreteDistribution {
    type Error = FactorError;

    fn try_from(doc: DistributionDoc) -> Result<Self> {
        DiscreteDistribution::new(doc.symbols, doc.mass)
    }
}

impl From<DiscreteDistribution> for DistributionDoc {
    fn from(d: DiscreteDistribution) -> Self {
        DistributionDoc {
            symbols: d.support,
            mass: d.mass,
        }
    }
}

impl DiscreteDistribution {
    /// Validates and builds a distribution. Masses are never renormalized.
    pub fn new<S: Into<String>>(support: Vec<S>, mass: Vec<f64>) -> Result<Self> {
        let support: Vec<String> = support.into_iter().map(Into::into).collect();
        if support.len() != mass.len() {
            return Err(FactorError::LengthMismatch {
                support: support.len(),
                mass: mass.len(),
            });
        }
        if support.is_empty() {
            return Err(FactorError::EmptySupport);
        }
        let mut seen = HashMap::with_capacity(support.len());
        for (s, &p) in support.iter().zip(&mass) {
            if seen.insert(s.as_str(), ()).is_some() {
                return Err(FactorError::DuplicateSymbol(s.clone()));
            }
            if !p.is_finite() || p < -MASS_TOLERANCE {
                return Err(FactorError::InvalidMass {
                    symbol: s.clone(),
                    value: p,
                });
            }
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(FactorError::NotNormalized(total));
        }
        let mass = mass.into_iter().map(|p| p.max(0.0)).collect();
        Ok(Self { support, mass })
    }

    pub fn point<S: Into<String>>(symbol: S) -> Self {
        Self {
            support: vec![symbol.into()],
            mass: vec![1.0],
        }
    }

    pub fn uniform<S: Into<String>>(symbols: Vec<S>) -> Result<Self> {
        let n = symbols.len();
        if n == 0 {
            return Err(FactorError::EmptySupport);
        }
        Self::new(symbols, vec![1.0 / n as f64; n])
    }

    pub fn support(&self) -> &[String] {
        &self.support
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Mass of `symbol`, zero when it is outside the support.
    pub fn prob(&self, symbol: &str) -> f64 {
        self.support
            .iter()
            .position(|s| s == symbol)
            .map_or(0.0, |i| self.mass[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.support
            .iter()
            .map(String::as_str)
            .zip(self.mass.iter().copied())
    }

    /// Symbols carrying strictly positive mass.
    pub fn positive_support(&self) -> impl Iterator<Item = &str> + '_ {
        self.iter().filter(|(_, p)| *p > 0.0).map(|(s, _)| s)
    }
}

/// Shannon entropy in bits, with `0 log 0 = 0`.
pub fn entropy(d: &DiscreteDistribution) -> f64 {
    entropy_of_masses(d.mass())
}

pub(crate) fn entropy_of_masses(mass: &[f64]) -> f64 {
    let h: f64 = mass
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum();
    h.max(0.0)
}

/// One sub-dataset: independent task-relevant and task-irrelevant factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubDatasetFactors {
    pub u: DiscreteDistribution,
    pub v: DiscreteDistribution,
}

impl SubDatasetFactors {
    pub fn new(u: DiscreteDistribution, v: DiscreteDistribution) -> Self {
        Self { u, v }
    }

    pub fn factor(&self, which: Factor) -> &DiscreteDistribution {
        match which {
            Factor::U => &self.u,
            Factor::V => &self.v,
        }
    }

    pub fn factor_mut(&mut self, which: Factor) -> &mut DiscreteDistribution {
        match which {
            Factor::U => &mut self.u,
            Factor::V => &mut self.v,
        }
    }
}

/// Uniform mixture of `m >= 1` sub-datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureDoc", into = "MixtureDoc")]
pub struct MixtureModel {
    components: Vec<SubDatasetFactors>,
}

#[derive(Serialize, Deserialize)]
struct MixtureDoc {
    components: Vec<SubDatasetFactors>,
}

impl TryFrom<MixtureDoc> for MixtureModel {
    type Error = FactorError;

    fn try_from(doc: MixtureDoc) -> Result<Self> {
        MixtureModel::new(doc.components)
    }
}

impl From<MixtureModel> for MixtureDoc {
    fn from(m: MixtureModel) -> Self {
        MixtureDoc {
            components: m.components,
        }
    }
}

impl MixtureModel {
    pub fn new(components: Vec<SubDatasetFactors>) -> Result<Self> {
        if components.is_empty() {
            return Err(FactorError::EmptyMixture);
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[SubDatasetFactors] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    fn require_two(&self) -> Result<(&SubDatasetFactors, &SubDatasetFactors)> {
        match self.components.as_slice() {
            [a, b] => Ok((a, b)),
            other => Err(FactorError::UnsupportedArity(other.len())),
        }
    }
}

/// Tabulated joint distribution of `(u, v)`; rows are `u`, columns are `v`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointDistribution {
    u_support: Vec<String>,
    v_support: Vec<String>,
    mass: Vec<f64>,
}

impl JointDistribution {
    /// Builds a joint table from row-major masses.
    pub fn new(u_support: Vec<String>, v_support: Vec<String>, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != u_support.len() * v_support.len() {
            return Err(FactorError::LengthMismatch {
                support: u_support.len() * v_support.len(),
                mass: mass.len(),
            });
        }
        if let Some((i, &p)) = mass
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < -MASS_TOLERANCE)
        {
            return Err(FactorError::InvalidMass {
                symbol: format!("cell {i}"),
                value: p,
            });
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(FactorError::NotNormalized(total));
        }
        Ok(Self {
            u_support,
            v_support,
            mass,
        })
    }

    pub fn u_support(&self) -> &[String] {
        &self.u_support
    }

    pub fn v_support(&self) -> &[String] {
        &self.v_support
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.mass[row * self.v_support.len() + col]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.mass.chunks_exact(self.v_support.len())
    }

    pub fn u_marginal(&self) -> Vec<f64> {
        self.rows().map(|r| r.iter().sum()).collect()
    }

    pub fn v_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.v_support.len()];
        for row in self.rows() {
            for (acc, p) in out.iter_mut().zip(row) {
                *acc += p;
            }
        }
        out
    }
}

/// Symbols in order of first appearance across the components.
fn union_support(mix: &MixtureModel, which: Factor) -> (Vec<String>, HashMap<&str, usize>) {
    let mut order = Vec::new();
    let mut index = HashMap::new();
    for c in mix.components() {
        for s in c.factor(which).support() {
            if !index.contains_key(s.as_str()) {
                index.insert(s.as_str(), order.len());
                order.push(s.clone());
            }
        }
    }
    (order, index)
}

/// Marginal of one factor under the uniform mixture.
pub fn mixture_marginal(mix: &MixtureModel, which: Factor) -> DiscreteDistribution {
    let (support, index) = union_support(mix, which);
    let mut mass = vec![0.0; support.len()];
    for c in mix.components() {
        for (s, p) in c.factor(which).iter() {
            mass[index[s]] += p;
        }
    }
    let w = 1.0 / mix.len() as f64;
    for p in &mut mass {
        *p *= w;
    }
    DiscreteDistribution { support, mass }
}

/// Joint table `p(u, v) = (1/m) sum_i p_ui(u) p_vi(v)`.
pub fn joint_mixture(mix: &MixtureModel) -> JointDistribution {
    let (u_support, u_index) = union_support(mix, Factor::U);
    let (v_support, v_index) = union_support(mix, Factor::V);
    let cols = v_support.len();
    let mut mass = vec![0.0; u_support.len() * cols];
    let w = 1.0 / mix.len() as f64;
    for c in mix.components() {
        for (su, pu) in c.u.iter() {
            let row = u_index[su] * cols;
            for (sv, pv) in c.v.iter() {
                mass[row + v_index[sv]] += w * pu * pv;
            }
        }
    }
    JointDistribution {
        u_support,
        v_support,
        mass,
    }
}

/// Mutual information of a joint table in bits. Zero cells contribute nothing.
pub fn mutual_information(j: &JointDistribution) -> f64 {
    let pu = j.u_marginal();
    let pv = j.v_marginal();
    let mut mi = 0.0;
    for (row, &pu_i) in j.rows().zip(&pu) {
        for (&p, &pv_j) in row.iter().zip(&pv) {
            if p > 0.0 {
                mi += p * (p / (pu_i * pv_j)).log2();
            }
        }
    }
    // Negative values are pure rounding; MI is non-negative.
    mi.max(0.0)
}

/// Normalized mutual information plus a flag for the `0/0` case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Nmi {
    pub value: f64,
    /// Set when `H(u) + H(v) = 0`; the value is then defined as 0.
    pub degenerate: bool,
}

/// Everything [`normalized_mi`] computes along the way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixtureInformation {
    pub h_u: f64,
    pub h_v: f64,
    pub mutual_information: f64,
    pub nmi: Nmi,
}

pub fn mixture_information(mix: &MixtureModel) -> MixtureInformation {
    let joint = joint_mixture(mix);
    let h_u = entropy_of_masses(&joint.u_marginal());
    let h_v = entropy_of_masses(&joint.v_marginal());
    let mi = mutual_information(&joint);
    let denom = h_u + h_v;
    let nmi = if denom > 0.0 {
        Nmi {
            value: (2.0 * mi / denom).clamp(0.0, 1.0),
            degenerate: false,
        }
    } else {
        Nmi {
            value: 0.0,
            degenerate: true,
        }
    };
    MixtureInformation {
        h_u,
        h_v,
        mutual_information: mi,
        nmi,
    }
}

/// `2 I(u, v) / (H(u) + H(v))` over the mixture.
pub fn normalized_mi(mix: &MixtureModel) -> Nmi {
    mixture_information(mix).nmi
}

/// Sum of every component's factor entropies.
pub fn c_diversity(mix: &MixtureModel) -> f64 {
    mix.components()
        .iter()
        .map(|c| entropy(&c.u) + entropy(&c.v))
        .sum()
}

fn overlap_mass(a: &DiscreteDistribution, b: &DiscreteDistribution) -> f64 {
    a.iter()
        .filter(|(s, _)| b.support().iter().any(|t| t == s))
        .map(|(s, p)| p + b.prob(s))
        .fold(0.0, |acc, x| acc + x)
}

/// Mass both sub-datasets place on their shared symbols, summed over both
/// factors. Ranges from 0 (disjoint) to 4 (identical supports).
pub fn c_interleave(mix: &MixtureModel) -> Result<f64> {
    let (a, b) = mix.require_two()?;
    Ok(overlap_mass(&a.u, &b.u) + overlap_mass(&a.v, &b.v))
}

fn supports_disjoint(a: &DiscreteDistribution, b: &DiscreteDistribution) -> bool {
    a.positive_support()
        .all(|s| !b.positive_support().any(|t| t == s))
}

/// Whether both factors have disjoint positive-mass supports across the two
/// components.
pub fn is_fully_disjoint(mix: &MixtureModel) -> Result<bool> {
    let (a, b) = mix.require_two()?;
    Ok(supports_disjoint(&a.u, &b.u) && supports_disjoint(&a.v, &b.v))
}

/// Closed-form NMI for two sub-datasets with disjoint supports:
/// `4 / (C_diversity + 4)`.
pub fn prop1_predicted_nmi(mix: &MixtureModel) -> Result<f64> {
    let (a, b) = mix.require_two()?;
    if !supports_disjoint(&a.u, &b.u) {
        return Err(FactorError::OverlappingSupports(Factor::U));
    }
    if !supports_disjoint(&a.v, &b.v) {
        return Err(FactorError::OverlappingSupports(Factor::V));
    }
    Ok(4.0 / (c_diversity(mix) + 4.0))
}

/// Upper bound on the NMI of two possibly overlapping sub-datasets:
/// `1 - C_div / (C_div + 4 - C_interleave)`.
pub fn prop2_nmi_upper_bound(mix: &MixtureModel) -> Result<f64> {
    let c_int = c_interleave(mix)?;
    let c_div = c_diversity(mix);
    Ok(interleave_bound(c_div, c_int))
}

/// Written as `(4 - C_int) / (C_div + 4 - C_int)`, which is exactly
/// `4 / (C_div + 4)` when `C_int = 0`. The `0/0` case (identical point
/// masses) is 0, matching the NMI of that mixture.
pub(crate) fn interleave_bound(c_div: f64, c_int: f64) -> f64 {
    let slack = (4.0 - c_int).max(0.0);
    let denom = c_div + slack;
    if denom <= 0.0 {
        0.0
    } else {
        (slack / denom).clamp(0.0, 1.0)
    }
}

/// How shared symbols are weighted in the overlapping trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapFamily {
    /// Independent random masses on every symbol, shared or not.
    #[default]
    Arbitrary,
    /// Every shared symbol carries the same mass in both sub-datasets.
    Symmetric,
}

impl std::str::FromStr for OverlapFamily {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "arbitrary" => Ok(Self::Arbitrary),
            "symmetric" => Ok(Self::Symmetric),
            other => Err(format!(
                "unknown overlap family {other:?}, expected arbitrary or symmetric"
            )),
        }
    }
}

/// Settings for the randomized proposition harness.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationConfig {
    /// Number of disjoint trials and, separately, overlapping trials.
    pub trials: usize,
    pub seed: u64,
    pub min_support: usize,
    pub max_support: usize,
    /// Shared alphabet size for overlapping trials; at least `max_support`.
    pub alphabet: usize,
    pub overlap: OverlapFamily,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            seed: 0,
            min_support: 1,
            max_support: 8,
            alphabet: 12,
            overlap: OverlapFamily::Arbitrary,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub nmi: f64,
    pub c_diversity: f64,
    pub c_interleave: f64,
    /// Closed-form prediction for disjoint trials, the upper bound otherwise.
    pub predicted: f64,
    /// `nmi - predicted`: an equality residual for disjoint trials, and a
    /// bound violation when positive for overlapping trials.
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub config: VerificationConfig,
    pub disjoint: Vec<TrialRecord>,
    pub overlapping: Vec<TrialRecord>,
    pub max_equality_residual: f64,
    /// Largest `|bound(C_int = 0) - 4/(C_div+4)|` over the disjoint trials.
    pub max_bound_identity_gap: f64,
    pub max_bound_violation: f64,
    pub bound_violations: usize,
}

/// Tolerance used when counting bound violations.
pub const PROPOSITION_TOLERANCE: f64 = 1e-10;

fn random_masses(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut mass: Vec<f64> = raw.iter().map(|x| x / total).collect();
    // Push the rounding error onto the largest atom so the sum is as close
    // to 1 as floating point allows.
    let drift = 1.0 - mass.iter().sum::<f64>();
    if let Some(max) = mass
        .iter_mut()
        .max_by(|a, b| a.partial_cmp(b).expect("finite"))
    {
        *max += drift;
    }
    mass
}

fn random_disjoint_factor(
    rng: &mut ChaCha8Rng,
    prefix: &str,
    cfg: &VerificationConfig,
) -> DiscreteDistribution {
    let n = rng.random_range(cfg.min_support..=cfg.max_support);
    let symbols: Vec<String> = (0..n).map(|i| format!("{prefix}{i}")).collect();
    let mass = random_masses(rng, n);
    DiscreteDistribution::new(symbols, mass).expect("generated masses are normalized")
}

fn random_overlapping_pair(
    rng: &mut ChaCha8Rng,
    prefix: &str,
    cfg: &VerificationConfig,
) -> (DiscreteDistribution, DiscreteDistribution) {
    let alphabet: Vec<String> = (0..cfg.alphabet).map(|i| format!("{prefix}{i}")).collect();
    let n1 = rng.random_range(cfg.min_support..=cfg.max_support);
    let n2 = rng.random_range(cfg.min_support..=cfg.max_support);
    let first: Vec<String> = alphabet.choose_multiple(rng, n1).cloned().collect();
    let mut second: Vec<String> = alphabet.choose_multiple(rng, n2).cloned().collect();
    // Guarantee at least one shared symbol.
    if !second.iter().any(|s| first.contains(s)) {
        let shared = first.choose(rng).expect("non-empty").clone();
        second[0] = shared;
    }
    let m1 = random_masses(rng, n1);
    let m2 = random_masses(rng, n2);
    (
        DiscreteDistribution::new(first, m1).expect("generated"),
        DiscreteDistribution::new(second, m2).expect("generated"),
    )
}

/// Two distributions sharing `1..=3` symbols with identical masses, plus
/// private symbols on either side.
fn random_symmetric_pair(
    rng: &mut ChaCha8Rng,
    prefix: &str,
    cfg: &VerificationConfig,
) -> (DiscreteDistribution, DiscreteDistribution) {
    let shared = rng.random_range(1..=cfg.min_support.max(3).min(cfg.max_support));
    let own_a = rng.random_range(0..=cfg.max_support - shared);
    let own_b = rng.random_range(0..=cfg.max_support - shared);
    let shared_frac = if own_a > 0 && own_b > 0 {
        rng.random_range(0.05..0.95)
    } else {
        1.0
    };
    let shared_mass: Vec<f64> = random_masses(rng, shared)
        .into_iter()
        .map(|p| p * shared_frac)
        .collect();
    let mut side = |tag: &str, own: usize| {
        let mut symbols: Vec<String> = (0..shared).map(|i| format!("{prefix}s{i}")).collect();
        let mut mass = shared_mass.clone();
        if own > 0 {
            symbols.extend((0..own).map(|i| format!("{prefix}{tag}{i}")));
            mass.extend(
                random_masses(rng, own)
                    .into_iter()
                    .map(|p| p * (1.0 - shared_frac)),
            );
        }
        // Put the rounding drift on a private atom so shared masses stay equal.
        let drift = 1.0 - mass.iter().sum::<f64>();
        *mass.last_mut().expect("non-empty") += drift;
        DiscreteDistribution::new(symbols, mass).expect("generated masses are normalized")
    };
    let a = side("a", own_a);
    let b = side("b", own_b);
    (a, b)
}

/// Checks both propositions on seeded random two-component mixtures.
pub fn verify_propositions(cfg: &VerificationConfig) -> Result<VerificationReport> {
    if cfg.trials == 0 {
        return Err(FactorError::InvalidConfig(
            "trials must be at least 1".into(),
        ));
    }
    if cfg.min_support == 0 || cfg.min_support > cfg.max_support {
        return Err(FactorError::InvalidConfig(format!(
            "support range {}..={} is empty or starts at zero",
            cfg.min_support, cfg.max_support
        )));
    }
    if cfg.alphabet < cfg.max_support {
        return Err(FactorError::InvalidConfig(format!(
            "alphabet {} is smaller than max support {}",
            cfg.alphabet, cfg.max_support
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut disjoint = Vec::with_capacity(cfg.trials);
    let mut max_equality_residual: f64 = 0.0;
    let mut max_bound_identity_gap: f64 = 0.0;
    for _ in 0..cfg.trials {
        let mix = MixtureModel::new(vec![
            SubDatasetFactors::new(
                random_disjoint_factor(&mut rng, "a_u", cfg),
                random_disjoint_factor(&mut rng, "a_v", cfg),
            ),
            SubDatasetFactors::new(
                random_disjoint_factor(&mut rng, "b_u", cfg),
                random_disjoint_factor(&mut rng, "b_v", cfg),
            ),
        ])?;
        let nmi = normalized_mi(&mix).value;
        let predicted = prop1_predicted_nmi(&mix)?;
        let c_div = c_diversity(&mix);
        let c_int = c_interleave(&mix)?;
        let bound = prop2_nmi_upper_bound(&mix)?;
        let residual = nmi - predicted;
        max_equality_residual = max_equality_residual.max(residual.abs());
        max_bound_identity_gap = max_bound_identity_gap.max((bound - predicted).abs());
        disjoint.push(TrialRecord {
            nmi,
            c_diversity: c_div,
            c_interleave: c_int,
            predicted,
            residual,
        });
    }

    let mut overlapping = Vec::with_capacity(cfg.trials);
    let mut max_bound_violation = f64::NEG_INFINITY;
    let mut bound_violations = 0;
    for _ in 0..cfg.trials {
        let ((u1, u2), (v1, v2)) = match cfg.overlap {
            OverlapFamily::Arbitrary => (
                random_overlapping_pair(&mut rng, "u", cfg),
                random_overlapping_pair(&mut rng, "v", cfg),
            ),
            OverlapFamily::Symmetric => (
                random_symmetric_pair(&mut rng, "u", cfg),
                random_symmetric_pair(&mut rng, "v", cfg),
            ),
        };
        let mix = MixtureModel::new(vec![
            SubDatasetFactors::new(u1, v1),
            SubDatasetFactors::new(u2, v2),
        ])?;
        let nmi = normalized_mi(&mix).value;
        let bound = prop2_nmi_upper_bound(&mix)?;
        let residual = nmi - bound;
        if residual > PROPOSITION_TOLERANCE {
            bound_violations += 1;
        }
        max_bound_violation = max_bound_violation.max(residual);
        overlapping.push(TrialRecord {
            nmi,
            c_diversity: c_diversity(&mix),
            c_interleave: c_interleave(&mix)?,
            predicted: bound,
            residual,
        });
    }

    Ok(VerificationReport {
        config: cfg.clone(),
        disjoint,
        overlapping,
        max_equality_residual,
        max_bound_identity_gap,
        max_bound_violation,
        bound_violations,
    })
}
