//! Sub-dataset fragmentation analysis: exact factor-level information
//! measures, kernel diversity and disparity scores for embeddings, a toy
//! shortcut-learning simulator, and bridge-data planning.

pub mod bridge_planner;
pub mod embedding_metrics;
pub mod factor_model;
pub mod io;
pub mod shortcut_sim;

pub use bridge_planner::{
    apply_bridge, plan_bridge, symmetrize_factor, BridgeError, BridgePlan, BridgeSpec,
    BridgeTemplate,
};
pub use embedding_metrics::{
    disparity, diversity, fragmentation_ratio, temperature_sweep, Aggregation, EmbeddingSet,
    EstimatorConfig, EstimatorMode, MetricError, MetricReport, Partition,
};
pub use factor_model::{
    c_diversity, c_interleave, mutual_information, normalized_mi, prop1_predicted_nmi,
    prop2_nmi_upper_bound, verify_propositions, DiscreteDistribution, Factor, FactorError,
    MixtureModel, Nmi, SubDatasetFactors, VerificationConfig, VerificationReport,
};
pub use io::{IoError, MixtureDocument};
pub use shortcut_sim::{
    evaluate_ood, fit_ridge, generate_dataset, sweep, EvalResult, Knob, KnobValue, Layout,
    LinearPolicy, SimConfig, SimError, SweepReport,
};
