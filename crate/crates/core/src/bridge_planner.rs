//! Factor-level interventions on a [`MixtureModel`]: bridge data shared by
//! every sub-dataset, full symmetrization of one factor, and a grid search
//! for the smallest bridge that reaches a target NMI.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factor_model::{
    mixture_marginal, normalized_mi, prop2_nmi_upper_bound, DiscreteDistribution, Factor,
    FactorError, MixtureModel, SubDatasetFactors,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BridgeError {
    #[error("epsilon must lie strictly between 0 and 1, got {0}")]
    InvalidEpsilon(f64),
    #[error("a bridge needs at least one symbol")]
    NoBridgeSymbols,
    #[error("bridge symbol {0:?} is listed twice")]
    DuplicateBridgeSymbol(String),
    #[error("target NMI must lie in [0, 1), got {0}")]
    InvalidTarget(f64),
    #[error("epsilon grid is empty")]
    EmptyGrid,
    #[error("epsilon grid must be strictly ascending; {previous} is followed by {next}")]
    GridNotAscending { previous: f64, next: f64 },
    #[error(transparent)]
    Factor(#[from] FactorError),
}

pub type Result<T> = std::result::Result<T, BridgeError>;

/// Bridge symbols without a mass fraction, as used by [`plan_bridge`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeTemplate {
    pub factor: Factor,
    pub symbols: Vec<String>,
}

impl BridgeTemplate {
    pub fn new<S: Into<String>>(factor: Factor, symbols: Vec<S>) -> Result<Self> {
        let t = Self {
            factor,
            symbols: symbols.into_iter().map(Into::into).collect(),
        };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        if self.symbols.is_empty() {
            return Err(BridgeError::NoBridgeSymbols);
        }
        let mut seen = HashSet::new();
        for s in &self.symbols {
            if !seen.insert(s.as_str()) {
                return Err(BridgeError::DuplicateBridgeSymbol(s.clone()));
            }
        }
        Ok(())
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<BridgeSpec> {
        BridgeSpec::new(self.factor, self.symbols.clone(), epsilon)
    }
}

/// Mass `epsilon` moved onto `symbols` in every component's chosen factor,
/// split evenly; the existing masses are scaled by `1 - epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeSpec {
    pub factor: Factor,
    pub symbols: Vec<String>,
    pub epsilon: f64,
}

impl BridgeSpec {
    pub fn new<S: Into<String>>(factor: Factor, symbols: Vec<S>, epsilon: f64) -> Result<Self> {
        let spec = Self {
            factor,
            symbols: symbols.into_iter().map(Into::into).collect(),
            epsilon,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(BridgeError::InvalidEpsilon(self.epsilon));
        }
        self.template().validate()
    }

    pub fn template(&self) -> BridgeTemplate {
        BridgeTemplate {
            factor: self.factor,
            symbols: self.symbols.clone(),
        }
    }
}

fn bridge_distribution(
    d: &DiscreteDistribution,
    symbols: &[String],
    epsilon: f64,
) -> Result<DiscreteDistribution> {
    let share = epsilon / symbols.len() as f64;
    let mut support: Vec<String> = d.support().to_vec();
    let mut mass: Vec<f64> = d.mass().iter().map(|p| p * (1.0 - epsilon)).collect();
    for s in symbols {
        // A bridge symbol already in the support absorbs its share.
        match support.iter().position(|t| t == s) {
            Some(i) => mass[i] += share,
            None => {
                support.push(s.clone());
                mass.push(share);
            }
        }
    }
    Ok(DiscreteDistribution::new(support, mass)?)
}

/// Adds the bridge to every component. Works for any number of components.
pub fn apply_bridge(mix: &MixtureModel, spec: &BridgeSpec) -> Result<MixtureModel> {
    spec.validate()?;
    let components = mix
        .components()
        .iter()
        .map(|c| {
            let mut out = c.clone();
            *out.factor_mut(spec.factor) =
                bridge_distribution(c.factor(spec.factor), &spec.symbols, spec.epsilon)?;
            Ok(out)
        })
        .collect::<Result<Vec<SubDatasetFactors>>>()?;
    Ok(MixtureModel::new(components)?)
}

/// Replaces the chosen factor of every component by its mixture marginal.
/// A mixture whose components already agree on that factor is returned
/// unchanged.
pub fn symmetrize_factor(mix: &MixtureModel, factor: Factor) -> MixtureModel {
    let first = mix.components()[0].factor(factor);
    if mix.components().iter().all(|c| c.factor(factor) == first) {
        return mix.clone();
    }
    let shared = mixture_marginal(mix, factor);
    let components = mix
        .components()
        .iter()
        .map(|c| {
            let mut out = c.clone();
            *out.factor_mut(factor) = shared.clone();
            out
        })
        .collect();
    MixtureModel::new(components).expect("component count unchanged")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub epsilon: f64,
    pub nmi: f64,
    /// Overlapping-support NMI bound after the bridge; two components only.
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BridgePlan {
    pub template: BridgeTemplate,
    pub target_nmi: f64,
    pub baseline_nmi: f64,
    pub baseline_bound: Option<f64>,
    /// Smallest grid epsilon with NMI at or below the target.
    pub epsilon_star: Option<f64>,
    pub achieved_nmi: Option<f64>,
    pub bound_after: Option<f64>,
    pub feasible: bool,
    /// NMI never increases along the grid.
    pub monotone: bool,
    pub grid: Vec<GridPoint>,
}

/// Tolerance for the monotonicity flag.
const MONOTONE_SLACK: f64 = 1e-12;

fn bound_if_pair(mix: &MixtureModel) -> Option<f64> {
    (mix.len() == 2).then(|| prop2_nmi_upper_bound(mix).expect("two components"))
}

/// Evaluates the exact NMI at every grid epsilon (in parallel, reported in
/// grid order) and picks the smallest epsilon meeting `target_nmi`.
pub fn plan_bridge(
    mix: &MixtureModel,
    template: &BridgeTemplate,
    target_nmi: f64,
    grid: &[f64],
) -> Result<BridgePlan> {
    template.validate()?;
    if !(0.0..1.0).contains(&target_nmi) {
        return Err(BridgeError::InvalidTarget(target_nmi));
    }
    if grid.is_empty() {
        return Err(BridgeError::EmptyGrid);
    }
    for w in grid.windows(2) {
        if w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater) {
            return Err(BridgeError::GridNotAscending {
                previous: w[0],
                next: w[1],
            });
        }
    }
    let points = grid
        .par_iter()
        .map(|&epsilon| {
            let bridged = apply_bridge(mix, &template.with_epsilon(epsilon)?)?;
            Ok(GridPoint {
                epsilon,
                nmi: normalized_mi(&bridged).value,
                bound: bound_if_pair(&bridged),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let monotone = points
        .windows(2)
        .all(|w| w[1].nmi <= w[0].nmi + MONOTONE_SLACK);
    let hit = points.iter().find(|p| p.nmi <= target_nmi);
    Ok(BridgePlan {
        template: template.clone(),
        target_nmi,
        baseline_nmi: normalized_mi(mix).value,
        baseline_bound: bound_if_pair(mix),
        epsilon_star: hit.map(|p| p.epsilon),
        achieved_nmi: hit.map(|p| p.nmi),
        bound_after: hit.and_then(|p| p.bound),
        feasible: hit.is_some(),
        monotone,
        grid: points,
    })
}

/// `0.1, 0.2, ..., 0.9`.
pub fn default_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// Outcome of a real-robot finetuning run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceOutcome {
    pub setting: &'static str,
    pub shortcut_degree: f64,
    pub ood_success_rate: f64,
}

/// Published hardware outcomes for the two interventions. Reference only:
/// nothing in this crate reproduces or tests against them.
pub const REAL_WORLD_REFERENCE: [ReferenceOutcome; 3] = [
    ReferenceOutcome {
        setting: "baseline",
        shortcut_degree: 0.6,
        ood_success_rate: 0.2,
    },
    ReferenceOutcome {
        setting: "third object (bridge)",
        shortcut_degree: 0.0,
        ood_success_rate: 0.75,
    },
    ReferenceOutcome {
        setting: "viewpoint augmentation",
        shortcut_degree: 0.15,
        ood_success_rate: 0.55,
    },
];
