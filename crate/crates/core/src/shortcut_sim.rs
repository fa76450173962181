//! Toy shortcut-learning simulator with a closed-form ridge learner.
//!
//! Each sub-dataset owns a set of object positions (the task-relevant
//! factor, together with a one-hot instruction) and a range of camera
//! viewpoints (the task-irrelevant factor). Training pairs every position of
//! a sub-dataset only with that sub-dataset's viewpoints, so the viewpoint is
//! spuriously predictive of the target. A ridge regressor is fitted on the
//! pooled data and probed on swapped pairings: the positions and instruction
//! of one sub-dataset seen from another sub-dataset's viewpoint.
//!
//! Observation columns are `[scene_x, scene_y, instruction one-hot..., view_sin, view_cos]`.
//! The scene features are the centroid of the sub-dataset's object positions,
//! so with several positions per sub-dataset only the instruction tells the
//! tasks apart. The viewpoint angle `θ` (degrees) is encoded as
//! `gain * (sin θ, cos θ)`.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Camera angles the simulator accepts, in degrees.
pub const VIEWPOINT_RANGE: (f64, f64) = (-10.0, 90.0);
pub const MAX_POSITIONS_PER_SUBDATASET: usize = 5;
pub const DEFAULT_LAMBDA: f64 = 1e-3;
pub const DEFAULT_DELTA: f64 = 0.1;
pub const DEFAULT_EPISODES_PER_TASK: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("viewpoints {low:.3}..{high:.3} of sub-dataset {subdataset} leave the allowed range [-10, 90] degrees")]
    InfeasibleGeometry {
        subdataset: usize,
        low: f64,
        high: f64,
    },
    #[error("ridge strength must be positive and finite, got {0}")]
    InvalidLambda(f64),
    #[error("success tolerance must be positive and finite, got {0}")]
    InvalidDelta(f64),
    #[error("dataset has no rows")]
    EmptyData,
    #[error("row counts disagree: {0}")]
    RowMismatch(String),
    #[error("normal equations are not positive definite")]
    Singular,
    #[error("policy expects {expected} features but the configuration produces {actual}")]
    IncompatiblePolicy { expected: usize, actual: usize },
    #[error("out-of-distribution evaluation needs at least two sub-datasets")]
    NoSwapPairs,
    #[error("cannot parse {value:?} for knob {knob}: {reason}")]
    KnobValue {
        knob: Knob,
        value: String,
        reason: String,
    },
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Positions of different sub-datasets alternate along one line.
    Intertwined,
    /// Each sub-dataset occupies its own band; for two sub-datasets these
    /// are the half-planes `x < 0` and `x > 0`.
    Separated,
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Layout::Intertwined => f.write_str("intertwined"),
            Layout::Separated => f.write_str("separated"),
        }
    }
}

impl FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "intertwined" => Ok(Layout::Intertwined),
            "separated" => Ok(Layout::Separated),
            other => Err(format!("expected intertwined or separated, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub subdatasets: usize,
    pub positions_per_subdataset: usize,
    pub layout: Layout,
    /// One viewpoint center per sub-dataset, degrees.
    pub viewpoint_centers: Vec<f64>,
    /// Half-width of every sub-dataset's viewpoint range, degrees.
    pub viewpoint_radius: f64,
    pub viewpoint_gain: f64,
    pub include_instruction: bool,
    /// Give every task its own fixed viewpoint inside the sub-dataset range.
    pub per_task_viewpoints: bool,
    pub noise_std: f64,
    pub episodes_per_task: usize,
    /// Evaluation trials per task and swapped pairing.
    pub eval_trials: usize,
    /// Viewpoint used when probing from each sub-dataset's side; defaults to
    /// the centers.
    pub eval_viewpoints: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            subdatasets: 2,
            positions_per_subdataset: 1,
            layout: Layout::Separated,
            viewpoint_centers: vec![20.0, 60.0],
            viewpoint_radius: 0.0,
            viewpoint_gain: 20.0,
            include_instruction: true,
            per_task_viewpoints: false,
            noise_std: 0.01,
            episodes_per_task: DEFAULT_EPISODES_PER_TASK,
            eval_trials: 20,
            eval_viewpoints: None,
            seed: 0,
        }
    }
}

/// Column ranges of the observation matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeatureLayout {
    pub scene: Range<usize>,
    pub instruction: Option<Range<usize>>,
    pub viewpoint: Range<usize>,
}

impl FeatureLayout {
    /// Task-relevant block: scene plus instruction.
    pub fn u_block(&self) -> Range<usize> {
        self.scene.start..self.viewpoint.start
    }

    pub fn v_block(&self) -> Range<usize> {
        self.viewpoint.clone()
    }

    pub fn width(&self) -> usize {
        self.viewpoint.end
    }
}

impl SimConfig {
    pub fn task_count(&self) -> usize {
        self.subdatasets * self.positions_per_subdataset
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(SimError::Config(msg));
        if self.subdatasets == 0 {
            return fail("need at least one sub-dataset".into());
        }
        if !(1..=MAX_POSITIONS_PER_SUBDATASET).contains(&self.positions_per_subdataset) {
            return fail(format!(
                "positions_per_subdataset must be in 1..={MAX_POSITIONS_PER_SUBDATASET}, got {}",
                self.positions_per_subdataset
            ));
        }
        if self.viewpoint_centers.len() != self.subdatasets {
            return fail(format!(
                "{} viewpoint centers for {} sub-datasets",
                self.viewpoint_centers.len(),
                self.subdatasets
            ));
        }
        if !(self.viewpoint_radius.is_finite() && self.viewpoint_radius >= 0.0) {
            return fail(format!(
                "viewpoint_radius must be >= 0, got {}",
                self.viewpoint_radius
            ));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return fail(format!("noise_std must be >= 0, got {}", self.noise_std));
        }
        if !(self.viewpoint_gain.is_finite() && self.viewpoint_gain > 0.0) {
            return fail(format!(
                "viewpoint_gain must be > 0, got {}",
                self.viewpoint_gain
            ));
        }
        if self.episodes_per_task == 0 || self.eval_trials == 0 {
            return fail("episodes_per_task and eval_trials must be positive".into());
        }
        let (lo, hi) = VIEWPOINT_RANGE;
        for (i, &c) in self.viewpoint_centers.iter().enumerate() {
            let low = c - self.viewpoint_radius;
            let high = c + self.viewpoint_radius;
            if !c.is_finite() || low < lo || high > hi {
                return Err(SimError::InfeasibleGeometry {
                    subdataset: i,
                    low,
                    high,
                });
            }
        }
        if let Some(eval) = &self.eval_viewpoints {
            if eval.len() != self.subdatasets {
                return fail(format!(
                    "{} evaluation viewpoints for {} sub-datasets",
                    eval.len(),
                    self.subdatasets
                ));
            }
            if let Some((i, &v)) = eval
                .iter()
                .enumerate()
                .find(|(_, v)| !v.is_finite() || **v < lo || **v > hi)
            {
                return Err(SimError::InfeasibleGeometry {
                    subdataset: i,
                    low: v,
                    high: v,
                });
            }
        }
        Ok(())
    }

    pub fn feature_layout(&self) -> FeatureLayout {
        let scene = 0..2;
        let (instruction, next) = if self.include_instruction {
            (Some(2..2 + self.task_count()), 2 + self.task_count())
        } else {
            (None, 2)
        };
        FeatureLayout {
            scene,
            instruction,
            viewpoint: next..next + 2,
        }
    }

    /// Object position of task `slot` in sub-dataset `sub`.
    pub fn position(&self, sub: usize, slot: usize) -> [f64; 2] {
        let m = self.subdatasets as f64;
        let k = self.positions_per_subdataset as f64;
        let x = match self.layout {
            Layout::Separated => {
                let width = 2.0 / m;
                -1.0 + width * sub as f64 + width * (slot as f64 + 0.5) / k
            }
            Layout::Intertwined => {
                let g = (slot * self.subdatasets + sub) as f64;
                -1.0 + 2.0 * (g + 0.5) / (m * k)
            }
        };
        [x, 0.0]
    }

    fn scene_centroid(&self, sub: usize) -> [f64; 2] {
        let k = self.positions_per_subdataset;
        let mut c = [0.0; 2];
        for slot in 0..k {
            let p = self.position(sub, slot);
            c[0] += p[0];
            c[1] += p[1];
        }
        [c[0] / k as f64, c[1] / k as f64]
    }

    /// Training viewpoint for one episode; `unit` is a uniform draw in
    /// `[0, 1)` shared by all tasks for the same episode index.
    pub fn training_viewpoint(&self, sub: usize, slot: usize, unit: f64) -> f64 {
        let c = self.viewpoint_centers[sub];
        let r = self.viewpoint_radius;
        if self.per_task_viewpoints {
            per_task_viewpoint(c, r, slot, self.positions_per_subdataset)
        } else {
            c + r * (2.0 * unit - 1.0)
        }
    }

    /// Viewpoint used when probing task `slot` from sub-dataset `sub`'s side.
    pub fn eval_viewpoint(&self, sub: usize, slot: usize) -> f64 {
        if self.per_task_viewpoints {
            per_task_viewpoint(
                self.viewpoint_centers[sub],
                self.viewpoint_radius,
                slot,
                self.positions_per_subdataset,
            )
        } else {
            self.eval_viewpoints
                .as_ref()
                .map_or(self.viewpoint_centers[sub], |v| v[sub])
        }
    }

    /// Evaluation viewpoints with the default resolved.
    pub fn resolved_eval_viewpoints(&self) -> Vec<f64> {
        self.eval_viewpoints
            .clone()
            .unwrap_or_else(|| self.viewpoint_centers.clone())
    }

    /// Same configuration with every viewpoint center moved to their mean,
    /// so all sub-datasets share one viewpoint distribution.
    pub fn symmetrized(&self) -> Self {
        let mean = self.viewpoint_centers.iter().sum::<f64>() / self.subdatasets as f64;
        Self {
            viewpoint_centers: vec![mean; self.subdatasets],
            eval_viewpoints: None,
            ..self.clone()
        }
    }
}

/// Midpoints of `k` equal bins spanning `center ± radius`.
fn per_task_viewpoint(center: f64, radius: f64, slot: usize, k: usize) -> f64 {
    center - radius + (2 * slot + 1) as f64 * radius / k as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimDataset {
    pub observations: DMatrix<f64>,
    /// Two columns: the target position.
    pub targets: DMatrix<f64>,
    pub subdataset_ids: Vec<usize>,
    pub task_ids: Vec<usize>,
    pub episodes_per_task: usize,
    pub layout: FeatureLayout,
}

impl SimDataset {
    pub fn rows(&self) -> usize {
        self.observations.nrows()
    }

    pub fn u_features(&self) -> DMatrix<f64> {
        let r = self.layout.u_block();
        self.observations.columns(r.start, r.len()).into_owned()
    }

    pub fn v_features(&self) -> DMatrix<f64> {
        let r = self.layout.v_block();
        self.observations.columns(r.start, r.len()).into_owned()
    }
}

struct NoiseSource {
    normal: Option<Normal<f64>>,
}

impl NoiseSource {
    fn new(std: f64) -> Self {
        Self {
            normal: (std > 0.0).then(|| Normal::new(0.0, std).expect("std validated")),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.normal.as_ref().map_or(0.0, |n| n.sample(rng))
    }
}

#[allow(clippy::too_many_arguments)]
fn encode_observation(
    cfg: &SimConfig,
    layout: &FeatureLayout,
    sub: usize,
    slot: usize,
    viewpoint_deg: f64,
    noise: &NoiseSource,
    rng: &mut ChaCha8Rng,
    out: &mut [f64],
) {
    let centroid = cfg.scene_centroid(sub);
    out[layout.scene.start] = centroid[0] + noise.sample(rng);
    out[layout.scene.start + 1] = centroid[1] + noise.sample(rng);
    if let Some(instr) = &layout.instruction {
        for x in &mut out[instr.clone()] {
            *x = 0.0;
        }
        out[instr.start + sub * cfg.positions_per_subdataset + slot] = 1.0;
    }
    let theta = viewpoint_deg.to_radians();
    out[layout.viewpoint.start] = cfg.viewpoint_gain * theta.sin() + noise.sample(rng);
    out[layout.viewpoint.start + 1] = cfg.viewpoint_gain * theta.cos() + noise.sample(rng);
}

/// Builds the training set. Deterministic in `cfg`, including the seed.
///
/// Within a sub-dataset viewpoint and task are drawn independently, except
/// in per-task viewpoint mode. The uniform viewpoint draws are shared across
/// tasks episode by episode, so sub-datasets with identical ranges get
/// identical viewpoint columns.
pub fn generate_dataset(cfg: &SimConfig) -> Result<SimDataset> {
    cfg.validate()?;
    let layout = cfg.feature_layout();
    let episodes = cfg.episodes_per_task;
    let rows = cfg.task_count() * episodes;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let units: Vec<f64> = (0..episodes).map(|_| rng.random::<f64>()).collect();
    let noise = NoiseSource::new(cfg.noise_std);

    let mut obs = DMatrix::zeros(rows, layout.width());
    let mut targets = DMatrix::zeros(rows, 2);
    let mut subdataset_ids = Vec::with_capacity(rows);
    let mut task_ids = Vec::with_capacity(rows);
    let mut buf = vec![0.0; layout.width()];
    let mut row = 0;
    for sub in 0..cfg.subdatasets {
        for slot in 0..cfg.positions_per_subdataset {
            let target = cfg.position(sub, slot);
            for &unit in &units {
                let view = cfg.training_viewpoint(sub, slot, unit);
                encode_observation(cfg, &layout, sub, slot, view, &noise, &mut rng, &mut buf);
                for (c, &x) in buf.iter().enumerate() {
                    obs[(row, c)] = x;
                }
                targets[(row, 0)] = target[0];
                targets[(row, 1)] = target[1];
                subdataset_ids.push(sub);
                task_ids.push(sub * cfg.positions_per_subdataset + slot);
                row += 1;
            }
        }
    }
    Ok(SimDataset {
        observations: obs,
        targets,
        subdataset_ids,
        task_ids,
        episodes_per_task: episodes,
        layout,
    })
}

/// Linear policy `y = W_u^T u + W_v^T v + b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearPolicy {
    /// `p_u x q` coefficients on the task-relevant block.
    pub weights_u: DMatrix<f64>,
    /// `p_v x q` coefficients on the task-irrelevant block.
    pub weights_v: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub lambda: f64,
}

impl LinearPolicy {
    pub fn feature_count(&self) -> usize {
        self.weights_u.nrows() + self.weights_v.nrows()
    }

    pub fn weights(&self) -> DMatrix<f64> {
        let (pu, pv, q) = (
            self.weights_u.nrows(),
            self.weights_v.nrows(),
            self.weights_u.ncols(),
        );
        let mut w = DMatrix::zeros(pu + pv, q);
        w.rows_mut(0, pu).copy_from(&self.weights_u);
        w.rows_mut(pu, pv).copy_from(&self.weights_v);
        w
    }

    /// Prediction for one observation laid out as `[u, v]`.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let pu = self.weights_u.nrows();
        (0..self.bias.len())
            .map(|k| {
                let mut y = self.bias[k];
                for (i, xi) in x[..pu].iter().enumerate() {
                    y += self.weights_u[(i, k)] * xi;
                }
                for (i, xi) in x[pu..].iter().enumerate() {
                    y += self.weights_v[(i, k)] * xi;
                }
                y
            })
            .collect()
    }

    /// `|W_v| / |W_u|` in Frobenius norm.
    pub fn weight_ratio(&self) -> f64 {
        let nu = self.weights_u.norm();
        let nv = self.weights_v.norm();
        if nv == 0.0 {
            0.0
        } else {
            nv / nu
        }
    }

    /// Largest absolute entry of `(Σ + λI) W - C`, relative to `max(1, |C|_max)`,
    /// where `Σ` and `C` are the centered second moments of `(u, v)` and `y`.
    pub fn normal_equation_residual(
        &self,
        u: &DMatrix<f64>,
        v: &DMatrix<f64>,
        y: &DMatrix<f64>,
    ) -> Result<f64> {
        let x = hstack(u, v)?;
        let m = Moments::new(&x, y)?;
        let lhs = (&m.xx + DMatrix::identity(x.ncols(), x.ncols()) * self.lambda) * self.weights();
        let scale = m.xy.amax().max(1.0);
        Ok((lhs - &m.xy).amax() / scale)
    }
}

fn hstack(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if u.nrows() != v.nrows() {
        return Err(SimError::RowMismatch(format!(
            "u has {} rows, v has {}",
            u.nrows(),
            v.nrows()
        )));
    }
    let mut x = DMatrix::zeros(u.nrows(), u.ncols() + v.ncols());
    x.columns_mut(0, u.ncols()).copy_from(u);
    x.columns_mut(u.ncols(), v.ncols()).copy_from(v);
    Ok(x)
}

/// Population (divide-by-n) centered moments.
struct Moments {
    x_mean: DVector<f64>,
    y_mean: DVector<f64>,
    xx: DMatrix<f64>,
    xy: DMatrix<f64>,
}

impl Moments {
    fn new(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(SimError::EmptyData);
        }
        if y.nrows() != n {
            return Err(SimError::RowMismatch(format!(
                "features have {n} rows, targets have {}",
                y.nrows()
            )));
        }
        let x_mean = column_means(x);
        let y_mean = column_means(y);
        let xc = center(x, &x_mean);
        let yc = center(y, &y_mean);
        let nf = n as f64;
        Ok(Self {
            xx: xc.tr_mul(&xc) / nf,
            xy: xc.tr_mul(&yc) / nf,
            x_mean,
            y_mean,
        })
    }
}

fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

fn center(m: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (mut col, mu) in out.column_iter_mut().zip(mean.iter()) {
        col.add_scalar_mut(-mu);
    }
    out
}

/// Closed-form ridge regression on centered features:
/// `(Σ + λI) W = C`, `b = mean(y) - W^T mean(x)`.
pub fn fit_ridge_blocks(
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    y: &DMatrix<f64>,
    lambda: f64,
) -> Result<LinearPolicy> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(SimError::InvalidLambda(lambda));
    }
    let x = hstack(u, v)?;
    let m = Moments::new(&x, y)?;
    let p = x.ncols();
    let system = &m.xx + DMatrix::identity(p, p) * lambda;
    let chol = system.cholesky().ok_or(SimError::Singular)?;
    let w = chol.solve(&m.xy);
    let bias = &m.y_mean - w.tr_mul(&m.x_mean);
    Ok(LinearPolicy {
        weights_u: w.rows(0, u.ncols()).into_owned(),
        weights_v: w.rows(u.ncols(), v.ncols()).into_owned(),
        bias,
        lambda,
    })
}

pub fn fit_ridge(data: &SimDataset, lambda: f64) -> Result<LinearPolicy> {
    if data.rows() == 0 {
        return Err(SimError::EmptyData);
    }
    fit_ridge_blocks(
        &data.u_features(),
        &data.v_features(),
        &data.targets,
        lambda,
    )
}

/// Loss gradients at zero weights with the bias at its optimum:
/// `-2 E[(y - Ey)(x - Ex)]` per block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockGradients {
    /// `p_u x q`.
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl BlockGradients {
    pub fn magnitude_u(&self) -> f64 {
        self.u.norm()
    }

    pub fn magnitude_v(&self) -> f64 {
        self.v.norm()
    }
}

pub fn initial_gradients_blocks(
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> Result<BlockGradients> {
    let x = hstack(u, v)?;
    let m = Moments::new(&x, y)?;
    let g = m.xy * -2.0;
    Ok(BlockGradients {
        u: g.rows(0, u.ncols()).into_owned(),
        v: g.rows(u.ncols(), v.ncols()).into_owned(),
    })
}

pub fn initial_gradients(data: &SimDataset) -> Result<BlockGradients> {
    initial_gradients_blocks(&data.u_features(), &data.v_features(), &data.targets)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalResult {
    pub ood_success_rate: f64,
    pub shortcut_degree: f64,
    pub success_tolerance: f64,
    pub trials: usize,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Automated shortcut rubric for one trial.
///
/// 1.0 when the prediction lands within `delta` of the shortcut target and
/// closer to it than to the instructed target; 0.5 when the midpoint of the
/// two targets is the nearest of {instructed, midpoint, shortcut}; else 0.
/// Ties resolve in that order, so coinciding targets always score 0.
pub fn shortcut_score(prediction: &[f64], instructed: &[f64], shortcut: &[f64], delta: f64) -> f64 {
    let mid: Vec<f64> = instructed
        .iter()
        .zip(shortcut)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let d_instr = distance(prediction, instructed);
    let d_mid = distance(prediction, &mid);
    let d_short = distance(prediction, shortcut);
    if d_short <= delta && d_short < d_instr {
        1.0
    } else if d_mid < d_instr && d_mid <= d_short {
        0.5
    } else {
        0.0
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta.is_finite() && delta > 0.0 {
        Ok(())
    } else {
        Err(SimError::InvalidDelta(delta))
    }
}

/// Probes `policy` with swapped pairings. For every ordered pair of
/// sub-datasets `(a, b)`, each task of `b` is instructed while the camera
/// shows `a`'s evaluation viewpoint; the shortcut target is the task in the
/// same slot of `a`.
pub fn evaluate_ood(policy: &LinearPolicy, cfg: &SimConfig, delta: f64) -> Result<EvalResult> {
    if cfg.subdatasets < 2 {
        return Err(SimError::NoSwapPairs);
    }
    evaluate(policy, cfg, delta, true)
}

/// Same protocol without swapping: task and viewpoint come from the same
/// sub-dataset, so instructed and shortcut targets coincide.
pub fn evaluate_in_distribution(
    policy: &LinearPolicy,
    cfg: &SimConfig,
    delta: f64,
) -> Result<EvalResult> {
    evaluate(policy, cfg, delta, false)
}

fn evaluate(policy: &LinearPolicy, cfg: &SimConfig, delta: f64, swap: bool) -> Result<EvalResult> {
    check_delta(delta)?;
    cfg.validate()?;
    let layout = cfg.feature_layout();
    if policy.feature_count() != layout.width() {
        return Err(SimError::IncompatiblePolicy {
            expected: policy.feature_count(),
            actual: layout.width(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let noise = NoiseSource::new(cfg.noise_std);
    let mut buf = vec![0.0; layout.width()];
    let (mut successes, mut score, mut trials) = (0usize, 0.0, 0usize);
    for view_side in 0..cfg.subdatasets {
        for task_side in 0..cfg.subdatasets {
            if swap == (view_side == task_side) {
                continue;
            }
            for slot in 0..cfg.positions_per_subdataset {
                let view = cfg.eval_viewpoint(view_side, slot);
                let instructed = cfg.position(task_side, slot);
                let shortcut = cfg.position(view_side, slot);
                for _ in 0..cfg.eval_trials {
                    encode_observation(
                        cfg, &layout, task_side, slot, view, &noise, &mut rng, &mut buf,
                    );
                    let pred = policy.predict(&buf);
                    if distance(&pred, &instructed) <= delta {
                        successes += 1;
                    }
                    score += shortcut_score(&pred, &instructed, &shortcut, delta);
                    trials += 1;
                }
            }
        }
    }
    Ok(EvalResult {
        ood_success_rate: successes as f64 / trials as f64,
        shortcut_degree: score / trials as f64,
        success_tolerance: delta,
        trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Knob {
    ViewpointRadius,
    ViewpointCenterDistance,
    PositionsPerSubdataset,
    Layout,
    PerTaskViewpoints,
}

impl fmt::Display for Knob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Knob::ViewpointRadius => "viewpoint_radius",
            Knob::ViewpointCenterDistance => "viewpoint_center_distance",
            Knob::PositionsPerSubdataset => "positions_per_subdataset",
            Knob::Layout => "layout",
            Knob::PerTaskViewpoints => "per_task_viewpoints",
        })
    }
}

impl FromStr for Knob {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "viewpoint_radius" => Knob::ViewpointRadius,
            "viewpoint_center_distance" => Knob::ViewpointCenterDistance,
            "positions_per_subdataset" => Knob::PositionsPerSubdataset,
            "layout" => Knob::Layout,
            "per_task_viewpoints" => Knob::PerTaskViewpoints,
            other => return Err(format!("unknown knob {other:?}")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum KnobValue {
    Number(f64),
    Count(usize),
    Layout(Layout),
    Flag(bool),
}

impl fmt::Display for KnobValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KnobValue::Number(x) => write!(f, "{x}"),
            KnobValue::Count(n) => write!(f, "{n}"),
            KnobValue::Layout(l) => write!(f, "{l}"),
            KnobValue::Flag(b) => write!(f, "{b}"),
        }
    }
}

impl Knob {
    pub fn parse_value(self, raw: &str) -> Result<KnobValue> {
        let err = |reason: String| SimError::KnobValue {
            knob: self,
            value: raw.to_string(),
            reason,
        };
        let raw = raw.trim();
        match self {
            Knob::ViewpointRadius | Knob::ViewpointCenterDistance => raw
                .parse::<f64>()
                .map_err(|e| err(e.to_string()))
                .and_then(|x| {
                    if x.is_finite() && x >= 0.0 {
                        Ok(KnobValue::Number(x))
                    } else {
                        Err(err("must be a non-negative number".into()))
                    }
                }),
            Knob::PositionsPerSubdataset => raw
                .parse::<usize>()
                .map(KnobValue::Count)
                .map_err(|e| err(e.to_string())),
            Knob::Layout => raw.parse::<Layout>().map(KnobValue::Layout).map_err(err),
            Knob::PerTaskViewpoints => raw
                .parse::<bool>()
                .map(KnobValue::Flag)
                .map_err(|e| err(e.to_string())),
        }
    }

    pub fn parse_values<S: AsRef<str>>(self, raw: &[S]) -> Result<Vec<KnobValue>> {
        raw.iter().map(|s| self.parse_value(s.as_ref())).collect()
    }

    /// Grid used when no values are given.
    pub fn default_values(self) -> Vec<KnobValue> {
        match self {
            Knob::ViewpointRadius => [0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 30.0]
                .into_iter()
                .map(KnobValue::Number)
                .collect(),
            Knob::ViewpointCenterDistance => [0.0, 5.0, 10.0, 20.0, 40.0, 60.0, 80.0]
                .into_iter()
                .map(KnobValue::Number)
                .collect(),
            Knob::PositionsPerSubdataset => (1..=MAX_POSITIONS_PER_SUBDATASET)
                .map(KnobValue::Count)
                .collect(),
            Knob::Layout => vec![
                KnobValue::Layout(Layout::Intertwined),
                KnobValue::Layout(Layout::Separated),
            ],
            Knob::PerTaskViewpoints => vec![KnobValue::Flag(false), KnobValue::Flag(true)],
        }
    }

    /// `base` with this knob set to `value`. Evaluation viewpoints stay
    /// pinned to the base configuration, except when the centers themselves
    /// move: then each side is probed at its own (moved) center.
    pub fn apply(self, base: &SimConfig, value: KnobValue) -> Result<SimConfig> {
        let mut cfg = base.clone();
        let mismatch = || SimError::KnobValue {
            knob: self,
            value: value.to_string(),
            reason: "wrong value type for this knob".into(),
        };
        match (self, value) {
            (Knob::ViewpointRadius, KnobValue::Number(r)) => cfg.viewpoint_radius = r,
            (Knob::ViewpointCenterDistance, KnobValue::Number(d)) => {
                let m = cfg.subdatasets;
                let mid = base.viewpoint_centers.iter().sum::<f64>() / m as f64;
                cfg.viewpoint_centers = (0..m)
                    .map(|i| mid + d * (i as f64 - (m as f64 - 1.0) / 2.0))
                    .collect();
                cfg.eval_viewpoints = None;
            }
            (Knob::PositionsPerSubdataset, KnobValue::Count(k)) => cfg.positions_per_subdataset = k,
            (Knob::PositionsPerSubdataset, KnobValue::Number(x))
                if x.fract() == 0.0 && x >= 0.0 =>
            {
                cfg.positions_per_subdataset = x as usize
            }
            (Knob::Layout, KnobValue::Layout(l)) => cfg.layout = l,
            (Knob::PerTaskViewpoints, KnobValue::Flag(b)) => cfg.per_task_viewpoints = b,
            _ => return Err(mismatch()),
        }
        if self != Knob::ViewpointCenterDistance {
            cfg.eval_viewpoints = Some(base.resolved_eval_viewpoints());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub knob_value: KnobValue,
    pub ood_success: f64,
    pub shortcut_degree: f64,
    pub weight_ratio: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub knob: Knob,
    pub lambda: f64,
    pub delta: f64,
    pub base: SimConfig,
    pub rows: Vec<SweepRow>,
}

/// Generate, fit, and evaluate once per knob value. Points run in parallel
/// and are reported in the order given.
pub fn sweep(
    base: &SimConfig,
    knob: Knob,
    values: &[KnobValue],
    lambda: f64,
    delta: f64,
) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(SimError::Config(
            "sweep needs at least one knob value".into(),
        ));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(SimError::InvalidLambda(lambda));
    }
    check_delta(delta)?;
    base.validate()?;
    let configs = values
        .iter()
        .map(|&v| knob.apply(base, v))
        .collect::<Result<Vec<_>>>()?;
    let rows = configs
        .par_iter()
        .zip(values.par_iter())
        .map(|(cfg, &value)| {
            let data = generate_dataset(cfg)?;
            let policy = fit_ridge(&data, lambda)?;
            let eval = evaluate_ood(&policy, cfg, delta)?;
            Ok(SweepRow {
                knob_value: value,
                ood_success: eval.ood_success_rate,
                shortcut_degree: eval.shortcut_degree,
                weight_ratio: policy.weight_ratio(),
                seed: cfg.seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport {
        knob,
        lambda,
        delta,
        base: base.clone(),
        rows,
    })
}
