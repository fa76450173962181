//! Kernel-based diversity and disparity scores over embedding matrices.
//!
//! Both scores invert an expected Gaussian similarity `exp(-t ||a - b||^2)`:
//! diversity over pairs drawn inside one sub-dataset, disparity over pairs
//! drawn from two different sub-datasets. The temperature `t` acts as a soft
//! distance threshold.
//!
//! Summation is deterministic. Rows of each group are first put in a
//! canonical order (lexicographic on the bit patterns of their entries), then
//! kernel values are summed row by row inside fixed-size chunks and the chunk
//! totals are reduced in chunk order. Results therefore do not depend on the
//! order of rows in the input or on the number of worker threads.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rows per reduction chunk.
const CHUNK_ROWS: usize = 16;
/// Sampled pairs per reduction chunk.
const CHUNK_PAIRS: usize = 4096;
/// Norm tolerance for rows flagged as normalized.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Temperatures used when none are given.
pub const DEFAULT_TEMPERATURES: [f64; 7] = [0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("embedding set must have at least one row and one column (got {rows}x{cols})")]
    EmptyEmbeddings { rows: usize, cols: usize },
    #[error("expected {expected} values for the declared shape, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("row {0} has zero norm and cannot be normalized")]
    ZeroNorm(usize),
    #[error("embeddings must be row-normalized before computing metrics")]
    NotNormalized,
    #[error("partition has {labels} labels for {rows} rows")]
    PartitionSize { labels: usize, rows: usize },
    #[error("row index {index} is out of range for {rows} rows")]
    IndexOutOfRange { index: usize, rows: usize },
    #[error("a group needs at least {needed} rows, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("disparity needs at least two non-empty groups, got {0}")]
    InsufficientGroups(usize),
    #[error("temperature must be finite and non-negative, got {0}")]
    InvalidTemperature(f64),
    #[error("no temperatures given")]
    NoTemperatures,
    #[error("subsample estimator needs a pair budget of at least 1")]
    ZeroBudget,
    #[error("kernel mean underflowed to zero at temperature {0}")]
    KernelUnderflow(f64),
}

pub type Result<T> = std::result::Result<T, MetricError>;

/// `N x d` row-major matrix of feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
    normalized: bool,
}

impl EmbeddingSet {
    /// Wraps raw row-major values. The `normalized` flag is derived from the
    /// data, not trusted from the caller.
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(MetricError::EmptyEmbeddings { rows, cols: dim });
        }
        if data.len() != rows * dim {
            return Err(MetricError::ShapeMismatch {
                expected: rows * dim,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(MetricError::NonFinite {
                row: i / dim,
                col: i % dim,
            });
        }
        let normalized = data
            .chunks_exact(dim)
            .all(|r| (norm(r) - 1.0).abs() <= UNIT_NORM_TOLERANCE);
        Ok(Self {
            rows,
            dim,
            data,
            normalized,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(MetricError::ShapeMismatch {
                    expected: dim,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }
}

fn norm(row: &[f64]) -> f64 {
    row.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales every row to unit Euclidean norm.
pub fn normalize_rows(e: &EmbeddingSet) -> Result<EmbeddingSet> {
    let mut data = e.data.clone();
    for (i, row) in data.chunks_exact_mut(e.dim).enumerate() {
        let n = norm(row);
        if n == 0.0 {
            return Err(MetricError::ZeroNorm(i));
        }
        for x in row.iter_mut() {
            *x /= n;
        }
    }
    Ok(EmbeddingSet {
        rows: e.rows,
        dim: e.dim,
        data,
        normalized: true,
    })
}

/// Sub-dataset label per row, with groups derived in label order.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    labels: Vec<String>,
    groups: BTreeMap<String, Vec<usize>>,
}

impl Partition {
    pub fn new<S: Into<String>>(labels: Vec<S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(MetricError::InsufficientGroups(0));
        }
        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, l) in labels.iter().enumerate() {
            groups.entry(l.clone()).or_default().push(i);
        }
        Ok(Self { labels, groups })
    }

    /// Builds a partition from `(row index, label)` pairs covering `0..rows`
    /// exactly once.
    pub fn from_assignments(rows: usize, pairs: &[(usize, String)]) -> Result<Self> {
        if pairs.len() != rows {
            return Err(MetricError::PartitionSize {
                labels: pairs.len(),
                rows,
            });
        }
        let mut labels: Vec<Option<String>> = vec![None; rows];
        for (index, label) in pairs {
            let slot = labels.get_mut(*index).ok_or(MetricError::IndexOutOfRange {
                index: *index,
                rows,
            })?;
            if slot.is_some() {
                return Err(MetricError::PartitionSize {
                    labels: pairs.len(),
                    rows,
                });
            }
            *slot = Some(label.clone());
        }
        Self::new(
            labels
                .into_iter()
                .map(|l| l.expect("every slot filled"))
                .collect(),
        )
    }

    /// A single group containing every row.
    pub fn single(rows: usize, label: &str) -> Result<Self> {
        Self::new(vec![label; rows])
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    /// Groups in ascending label order.
    pub fn groups(&self) -> impl Iterator<Item = (&str, &[usize])> + '_ {
        self.groups.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn group(&self, label: &str) -> Option<&[usize]> {
        self.groups.get(label).map(Vec::as_slice)
    }

    fn check_rows(&self, rows: usize) -> Result<()> {
        if self.labels.len() != rows {
            return Err(MetricError::PartitionSize {
                labels: self.labels.len(),
                rows,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorMode {
    Exact,
    Subsample,
}

/// How expectations over pairs are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub mode: EstimatorMode,
    /// Pairs drawn per expectation in subsample mode.
    pub pair_budget: usize,
    pub seed: u64,
}

impl EstimatorConfig {
    pub fn exact() -> Self {
        Self {
            mode: EstimatorMode::Exact,
            pair_budget: 0,
            seed: 0,
        }
    }

    pub fn subsample(pair_budget: usize, seed: u64) -> Self {
        Self {
            mode: EstimatorMode::Subsample,
            pair_budget,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.mode == EstimatorMode::Subsample && self.pair_budget == 0 {
            return Err(MetricError::ZeroBudget);
        }
        Ok(())
    }
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self::exact()
    }
}

/// How per-group diversities combine into the fragmentation ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Arithmetic,
    Geometric,
}

fn check_temperatures(temps: &[f64]) -> Result<()> {
    if temps.is_empty() {
        return Err(MetricError::NoTemperatures);
    }
    if let Some(&t) = temps.iter().find(|t| !t.is_finite() || **t < 0.0) {
        return Err(MetricError::InvalidTemperature(t));
    }
    Ok(())
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
fn accumulate(sums: &mut [f64], d2: f64, temps: &[f64]) {
    for (s, &t) in sums.iter_mut().zip(temps) {
        *s += (-t * d2).exp();
    }
}

fn reduce(partials: Vec<Vec<f64>>, width: usize) -> Vec<f64> {
    let mut total = vec![0.0; width];
    for p in partials {
        for (acc, x) in total.iter_mut().zip(p) {
            *acc += x;
        }
    }
    total
}

fn cmp_rows(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .map(|x| x.to_bits())
        .cmp(b.iter().map(|x| x.to_bits()))
}

/// Rows of a group in canonical order.
fn canonical_rows<'a>(e: &'a EmbeddingSet, group: &[usize]) -> Result<Vec<&'a [f64]>> {
    let mut rows = Vec::with_capacity(group.len());
    for &i in group {
        if i >= e.rows {
            return Err(MetricError::IndexOutOfRange {
                index: i,
                rows: e.rows,
            });
        }
        rows.push(e.row(i));
    }
    rows.sort_by(|a, b| cmp_rows(a, b));
    Ok(rows)
}

fn expectation_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn within_sums(
    rows: &[&[f64]],
    temps: &[f64],
    cfg: &EstimatorConfig,
    stream: u64,
) -> (Vec<f64>, u64) {
    let n = rows.len();
    let width = temps.len();
    match cfg.mode {
        EstimatorMode::Exact => {
            // Each unordered pair stands for both of its orderings.
            let starts: Vec<usize> = (0..n).step_by(CHUNK_ROWS).collect();
            let partials: Vec<Vec<f64>> = starts
                .par_iter()
                .map(|&start| {
                    let mut sums = vec![0.0; width];
                    for i in start..(start + CHUNK_ROWS).min(n) {
                        for j in (i + 1)..n {
                            accumulate(&mut sums, squared_distance(rows[i], rows[j]), temps);
                        }
                    }
                    sums
                })
                .collect();
            let mut total = reduce(partials, width);
            for s in &mut total {
                *s *= 2.0;
            }
            (total, (n * (n - 1)) as u64)
        }
        EstimatorMode::Subsample => {
            let mut rng = expectation_rng(cfg.seed, stream);
            let pairs: Vec<(u32, u32)> = (0..cfg.pair_budget)
                .map(|_| {
                    let i = rng.random_range(0..n);
                    let mut j = rng.random_range(0..n - 1);
                    if j >= i {
                        j += 1;
                    }
                    (i as u32, j as u32)
                })
                .collect();
            (sum_pairs(&pairs, rows, rows, temps), cfg.pair_budget as u64)
        }
    }
}

fn cross_sums(
    a: &[&[f64]],
    b: &[&[f64]],
    temps: &[f64],
    cfg: &EstimatorConfig,
    stream: u64,
) -> (Vec<f64>, u64) {
    let width = temps.len();
    match cfg.mode {
        EstimatorMode::Exact => {
            let starts: Vec<usize> = (0..a.len()).step_by(CHUNK_ROWS).collect();
            let partials: Vec<Vec<f64>> = starts
                .par_iter()
                .map(|&start| {
                    let mut sums = vec![0.0; width];
                    for ra in &a[start..(start + CHUNK_ROWS).min(a.len())] {
                        for rb in b {
                            accumulate(&mut sums, squared_distance(ra, rb), temps);
                        }
                    }
                    sums
                })
                .collect();
            (reduce(partials, width), (a.len() * b.len()) as u64)
        }
        EstimatorMode::Subsample => {
            let mut rng = expectation_rng(cfg.seed, stream);
            let pairs: Vec<(u32, u32)> = (0..cfg.pair_budget)
                .map(|_| {
                    (
                        rng.random_range(0..a.len()) as u32,
                        rng.random_range(0..b.len()) as u32,
                    )
                })
                .collect();
            (sum_pairs(&pairs, a, b, temps), cfg.pair_budget as u64)
        }
    }
}

fn sum_pairs(pairs: &[(u32, u32)], a: &[&[f64]], b: &[&[f64]], temps: &[f64]) -> Vec<f64> {
    let width = temps.len();
    let partials: Vec<Vec<f64>> = pairs
        .par_chunks(CHUNK_PAIRS)
        .map(|chunk| {
            let mut sums = vec![0.0; width];
            for &(i, j) in chunk {
                accumulate(
                    &mut sums,
                    squared_distance(a[i as usize], b[j as usize]),
                    temps,
                );
            }
            sums
        })
        .collect();
    reduce(partials, width)
}

fn require_normalized(e: &EmbeddingSet) -> Result<()> {
    if e.normalized {
        Ok(())
    } else {
        Err(MetricError::NotNormalized)
    }
}

/// Expected kernel value over ordered pairs of distinct rows of `group`,
/// one entry per temperature.
pub fn within_kernel_means(
    e: &EmbeddingSet,
    group: &[usize],
    temps: &[f64],
    cfg: &EstimatorConfig,
) -> Result<Vec<f64>> {
    within_kernel_means_stream(e, group, temps, cfg, 0)
}

fn within_kernel_means_stream(
    e: &EmbeddingSet,
    group: &[usize],
    temps: &[f64],
    cfg: &EstimatorConfig,
    stream: u64,
) -> Result<Vec<f64>> {
    require_normalized(e)?;
    check_temperatures(temps)?;
    cfg.validate()?;
    if group.len() < 2 {
        return Err(MetricError::InsufficientData {
            needed: 2,
            got: group.len(),
        });
    }
    let rows = canonical_rows(e, group)?;
    let (sums, count) = within_sums(&rows, temps, cfg, stream);
    Ok(sums.into_iter().map(|s| s / count as f64).collect())
}

/// Expected kernel value over pairs `(a, b)` with `a` from `first` and `b`
/// from `second`, one entry per temperature.
pub fn cross_kernel_means(
    e: &EmbeddingSet,
    first: &[usize],
    second: &[usize],
    temps: &[f64],
    cfg: &EstimatorConfig,
) -> Result<Vec<f64>> {
    cross_kernel_means_stream(e, first, second, temps, cfg, 0)
}

fn cross_kernel_means_stream(
    e: &EmbeddingSet,
    first: &[usize],
    second: &[usize],
    temps: &[f64],
    cfg: &EstimatorConfig,
    stream: u64,
) -> Result<Vec<f64>> {
    require_normalized(e)?;
    check_temperatures(temps)?;
    cfg.validate()?;
    for g in [first, second] {
        if g.is_empty() {
            return Err(MetricError::InsufficientData { needed: 1, got: 0 });
        }
    }
    let a = canonical_rows(e, first)?;
    let b = canonical_rows(e, second)?;
    let (sums, count) = cross_sums(&a, &b, temps, cfg, stream);
    Ok(sums.into_iter().map(|s| s / count as f64).collect())
}

fn invert(means: &[f64], temps: &[f64]) -> Result<Vec<f64>> {
    means
        .iter()
        .zip(temps)
        .map(|(&m, &t)| {
            if m > 0.0 {
                Ok(1.0 / m)
            } else {
                Err(MetricError::KernelUnderflow(t))
            }
        })
        .collect()
}

/// Inverse mean within-group kernel similarity. Always at least 1.
pub fn diversity(e: &EmbeddingSet, group: &[usize], t: f64, cfg: &EstimatorConfig) -> Result<f64> {
    let means = within_kernel_means(e, group, &[t], cfg)?;
    Ok(invert(&means, &[t])?[0])
}

/// Stream ids for the subsample estimator: one per group, then one per
/// ordered group pair.
fn pair_stream(groups: usize, i: usize, j: usize) -> u64 {
    (groups + i * groups + j) as u64
}

fn cross_mean_sum(
    e: &EmbeddingSet,
    groups: &[&[usize]],
    temps: &[f64],
    cfg: &EstimatorConfig,
) -> Result<Vec<f64>> {
    let m = groups.len();
    let mut total = vec![0.0; temps.len()];
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let means = match cfg.mode {
                // The kernel is symmetric, so E_ij = E_ji exactly.
                EstimatorMode::Exact if j < i => continue,
                EstimatorMode::Exact => {
                    let mut means =
                        cross_kernel_means_stream(e, groups[i], groups[j], temps, cfg, 0)?;
                    for x in &mut means {
                        *x *= 2.0;
                    }
                    means
                }
                EstimatorMode::Subsample => cross_kernel_means_stream(
                    e,
                    groups[i],
                    groups[j],
                    temps,
                    cfg,
                    pair_stream(m, i, j),
                )?,
            };
            for (acc, x) in total.iter_mut().zip(means) {
                *acc += x;
            }
        }
    }
    Ok(total)
}

fn non_empty_groups(p: &Partition) -> Vec<&[usize]> {
    p.groups()
        .map(|(_, g)| g)
        .filter(|g| !g.is_empty())
        .collect()
}

/// `m(m-1)` divided by the summed cross-group kernel expectations.
pub fn disparity(e: &EmbeddingSet, p: &Partition, t: f64, cfg: &EstimatorConfig) -> Result<f64> {
    Ok(disparity_many(e, p, &[t], cfg)?[0])
}

fn disparity_many(
    e: &EmbeddingSet,
    p: &Partition,
    temps: &[f64],
    cfg: &EstimatorConfig,
) -> Result<Vec<f64>> {
    p.check_rows(e.rows)?;
    let groups = non_empty_groups(p);
    let m = groups.len();
    if m < 2 {
        return Err(MetricError::InsufficientGroups(m));
    }
    let sums = cross_mean_sum(e, &groups, temps, cfg)?;
    let means: Vec<f64> = sums.iter().map(|s| s / (m * (m - 1)) as f64).collect();
    invert(&means, temps)
}

/// Disparity divided by the aggregated per-group diversity.
pub fn fragmentation_ratio(disparity: f64, diversities: &[f64], agg: Aggregation) -> f64 {
    let n = diversities.len() as f64;
    let combined = match agg {
        Aggregation::Arithmetic => diversities.iter().sum::<f64>() / n,
        Aggregation::Geometric => (diversities.iter().map(|d| d.ln()).sum::<f64>() / n).exp(),
    };
    disparity / combined
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorMeta {
    pub mode: EstimatorMode,
    pub pair_budget: usize,
    pub seed: u64,
    pub aggregation: Aggregation,
}

/// Scores for every group and temperature of one corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub temperatures: Vec<f64>,
    pub groups: Vec<String>,
    pub group_sizes: Vec<usize>,
    /// `diversity[g][k]` is group `g` at temperature `k`.
    pub diversity: Vec<Vec<f64>>,
    /// Absent when the partition has a single group.
    pub disparity: Option<Vec<f64>>,
    pub ratio: Option<Vec<f64>>,
    pub estimator: EstimatorMeta,
    pub warnings: Vec<String>,
}

/// Evaluates diversity for every group and disparity/ratio for every
/// temperature. Singleton groups get diversity 1 and a warning.
pub fn temperature_sweep(
    e: &EmbeddingSet,
    p: &Partition,
    temperatures: &[f64],
    cfg: &EstimatorConfig,
    agg: Aggregation,
) -> Result<MetricReport> {
    require_normalized(e)?;
    check_temperatures(temperatures)?;
    cfg.validate()?;
    p.check_rows(e.rows)?;

    let mut warnings = Vec::new();
    let mut groups = Vec::new();
    let mut group_sizes = Vec::new();
    let mut diversity = Vec::new();
    for (gi, (label, rows)) in p.groups().enumerate() {
        groups.push(label.to_string());
        group_sizes.push(rows.len());
        if rows.len() < 2 {
            warnings.push(format!(
                "group {label:?} has a single row; diversity defined as 1"
            ));
            diversity.push(vec![1.0; temperatures.len()]);
            continue;
        }
        let means = within_kernel_means_stream(e, rows, temperatures, cfg, gi as u64)?;
        diversity.push(invert(&means, temperatures)?);
    }

    let (disparity, ratio) = if groups.len() >= 2 {
        let disp = disparity_many(e, p, temperatures, cfg)?;
        let ratio = disp
            .iter()
            .enumerate()
            .map(|(k, &d)| {
                let per_group: Vec<f64> = diversity.iter().map(|row| row[k]).collect();
                fragmentation_ratio(d, &per_group, agg)
            })
            .collect();
        (Some(disp), Some(ratio))
    } else {
        (None, None)
    };

    Ok(MetricReport {
        temperatures: temperatures.to_vec(),
        groups,
        group_sizes,
        diversity,
        disparity,
        ratio,
        estimator: EstimatorMeta {
            mode: cfg.mode,
            pair_budget: cfg.pair_budget,
            seed: cfg.seed,
            aggregation: agg,
        },
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(rows: &[Vec<f64>]) -> EmbeddingSet {
        normalize_rows(&EmbeddingSet::from_rows(rows).unwrap()).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn normalize_examples() {
        let e = normalize_rows(&EmbeddingSet::from_rows(&[vec![3.0, 4.0]]).unwrap()).unwrap();
        assert_eq!(e.row(0), &[0.6, 0.8]);
        assert!(e.is_normalized());

        let again = normalize_rows(&e).unwrap();
        for (a, b) in again.as_slice().iter().zip(e.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }

        let err =
            normalize_rows(&EmbeddingSet::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap());
        assert_eq!(err, Err(MetricError::ZeroNorm(1)));
    }

    #[test]
    fn normalize_random_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f64> = (0..80).map(|_| rng.random_range(-3.0..3.0)).collect();
        let e = normalize_rows(&EmbeddingSet::new(10, 8, data).unwrap()).unwrap();
        for r in e.iter_rows() {
            assert!((norm(r) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_embeddings() {
        assert!(EmbeddingSet::new(0, 3, vec![]).is_err());
        assert!(EmbeddingSet::new(1, 2, vec![1.0]).is_err());
        assert_eq!(
            EmbeddingSet::new(1, 2, vec![1.0, f64::NAN]),
            Err(MetricError::NonFinite { row: 0, col: 1 })
        );
        let raw = EmbeddingSet::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        assert!(!raw.is_normalized());
        assert_eq!(
            diversity(&raw, &[0, 1], 1.0, &EstimatorConfig::exact()),
            Err(MetricError::NotNormalized)
        );
    }

    #[test]
    fn diversity_analytic_cases() {
        let exact = EstimatorConfig::exact();
        let same = unit(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(diversity(&same, &[0, 1, 2], 7.0, &exact).unwrap(), 1.0);

        for t in [0.5, 1.0, 3.0] {
            let anti = unit(&[vec![0.0, 1.0, 0.0], vec![0.0, -1.0, 0.0]]);
            let d = diversity(&anti, &[0, 1], t, &exact).unwrap();
            assert!(rel(d, (4.0 * t).exp()) < 1e-12);

            let ortho = unit(&[
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ]);
            let d = diversity(&ortho, &[0, 1, 2], t, &exact).unwrap();
            assert!(rel(d, (2.0 * t).exp()) < 1e-12);
        }
    }

    #[test]
    fn diversity_errors() {
        let e = unit(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let exact = EstimatorConfig::exact();
        assert_eq!(
            diversity(&e, &[0], 1.0, &exact),
            Err(MetricError::InsufficientData { needed: 2, got: 1 })
        );
        assert_eq!(
            diversity(&e, &[0, 1], -1.0, &exact),
            Err(MetricError::InvalidTemperature(-1.0))
        );
        assert_eq!(
            diversity(&e, &[0, 1], 1.0, &EstimatorConfig::subsample(0, 1)),
            Err(MetricError::ZeroBudget)
        );
        assert!(matches!(
            diversity(&e, &[0, 5], 1.0, &exact),
            Err(MetricError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn disparity_analytic_cases() {
        let exact = EstimatorConfig::exact();
        let t = 1.5;
        let e = unit(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let p = Partition::new(vec!["a", "b"]).unwrap();
        assert!(rel(disparity(&e, &p, t, &exact).unwrap(), (2.0 * t).exp()) < 1e-12);

        let e = unit(&[vec![1.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(disparity(&e, &p, t, &exact).unwrap(), 1.0);

        let e = unit(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let p3 = Partition::new(vec!["a", "b", "c"]).unwrap();
        assert!(rel(disparity(&e, &p3, t, &exact).unwrap(), (2.0 * t).exp()) < 1e-12);

        let one = Partition::new(vec!["a", "a", "a"]).unwrap();
        assert_eq!(
            disparity(&e, &one, t, &exact),
            Err(MetricError::InsufficientGroups(1))
        );
    }

    #[test]
    fn ratio_examples() {
        let exact = EstimatorConfig::exact();
        let e = unit(&[
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 0.0],
        ]);
        let p = Partition::new(vec!["a", "a", "b", "b"]).unwrap();
        let r = temperature_sweep(&e, &p, &[1.0], &exact, Aggregation::Arithmetic).unwrap();
        assert_eq!(r.ratio.unwrap()[0], 1.0);

        let t = 2.0;
        let e = unit(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let p = Partition::new(vec!["a", "b"]).unwrap();
        let r = temperature_sweep(&e, &p, &[t], &exact, Aggregation::Arithmetic).unwrap();
        assert_eq!(r.diversity, vec![vec![1.0], vec![1.0]]);
        assert_eq!(r.warnings.len(), 2);
        assert!(rel(r.ratio.unwrap()[0], (2.0 * t).exp()) < 1e-12);

        assert!(
            (fragmentation_ratio(8.0, &[2.0, 8.0], Aggregation::Arithmetic) - 1.6).abs() < 1e-15
        );
        assert!(
            (fragmentation_ratio(8.0, &[2.0, 8.0], Aggregation::Geometric) - 2.0).abs() < 1e-12
        );
    }

    #[test]
    fn single_temperature_sweep_matches_direct_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let e = unit(&rows);
        let labels: Vec<String> = (0..30).map(|i| format!("g{}", i % 3)).collect();
        let p = Partition::new(labels).unwrap();
        for cfg in [EstimatorConfig::exact(), EstimatorConfig::subsample(500, 4)] {
            let r = temperature_sweep(&e, &p, &[2.0], &cfg, Aggregation::Arithmetic).unwrap();
            let d = disparity(&e, &p, 2.0, &cfg).unwrap();
            assert_eq!(r.disparity.as_ref().unwrap()[0].to_bits(), d.to_bits());
            if cfg.mode == EstimatorMode::Exact {
                for (gi, (_, g)) in p.groups().enumerate() {
                    let direct = diversity(&e, g, 2.0, &cfg).unwrap();
                    assert_eq!(r.diversity[gi][0].to_bits(), direct.to_bits());
                }
            }
        }
    }

    #[test]
    fn partition_from_assignments() {
        let p =
            Partition::from_assignments(3, &[(2, "b".into()), (0, "a".into()), (1, "b".into())])
                .unwrap();
        assert_eq!(p.labels(), &["a", "b", "b"]);
        assert_eq!(p.group("b").unwrap(), &[1, 2]);
        assert!(Partition::from_assignments(2, &[(0, "a".into()), (0, "b".into())]).is_err());
        assert!(Partition::from_assignments(1, &[(4, "a".into())]).is_err());
    }

    #[test]
    fn subsample_is_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let e = unit(&rows);
        let g: Vec<usize> = (0..50).collect();
        let a = diversity(&e, &g, 1.0, &EstimatorConfig::subsample(1000, 42)).unwrap();
        let b = diversity(&e, &g, 1.0, &EstimatorConfig::subsample(1000, 42)).unwrap();
        let c = diversity(&e, &g, 1.0, &EstimatorConfig::subsample(1000, 43)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_ne!(a.to_bits(), c.to_bits());
    }
}
