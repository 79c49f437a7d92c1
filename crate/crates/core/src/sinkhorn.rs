//! Outlier-aware entropic optimal transport between two point sets.
//!
//! A score matrix `S` (M×N) of descriptor similarities is extended with one
//! outlier row and one outlier column whose entries all equal `alpha`. Mass
//! is then transported between the two augmented sets with marginals
//!
//! ```text
//! a = [1, …, 1, N]      (M+1 entries)
//! b = [1, …, 1, M]      (N+1 entries)
//! ```
//!
//! so every real point carries unit mass and each outlier bin can absorb
//! all of the other side. The plan solves
//!
//! ```text
//! min_{P ∈ U(a,b)}  ⟨−S̄, P⟩ + λ Σ P_ij (log P_ij − 1)
//! ```
//!
//! i.e. cost `−S̄`: higher similarity attracts more mass. The solver works on
//! scaled dual potentials `u = f/λ`, `v = g/λ` entirely in the log domain:
//!
//! ```text
//! u_i ← log a_i − logsumexp_j(S̄_ij/λ + v_j)
//! v_j ← log b_j − logsumexp_i(S̄_ij/λ + u_i)
//! P_ij = exp(S̄_ij/λ + u_i + v_j)
//! ```
//!
//! The column update runs last, so column sums match `b` to rounding and the
//! rows carry whatever residual is left after the fixed iteration budget.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::descriptors::Descriptors;
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform};
use crate::kdtree::KdTree;
use crate::procrustes::CorrespondenceSet;

/// M×N matrix of descriptor similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    values: DMatrix<f64>,
}

impl ScoreMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidArgument("score matrix must be at least 1x1".into()));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("score matrix has non-finite entries".into()));
        }
        Ok(Self { values })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::new(DMatrix::from_fn(rows, cols, f))
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn augment(&self, alpha: f64) -> Result<AugmentedScoreMatrix> {
        augment(self, alpha)
    }
}

/// `S[i][j] = ⟨source_i, target_j⟩`.
pub fn score_map(source: &Descriptors, target: &Descriptors) -> Result<ScoreMatrix> {
    if source.dim() != target.dim() {
        return Err(Error::DescriptorDimensionMismatch(source.dim(), target.dim()));
    }
    if source.is_empty() || target.is_empty() {
        return Err(Error::InvalidArgument("score map needs at least one descriptor per side".into()));
    }
    let mut values = DMatrix::zeros(source.len(), target.len());
    for i in 0..source.len() {
        let fx = source.row(i);
        for j in 0..target.len() {
            values[(i, j)] = fx.iter().zip(target.row(j)).map(|(a, b)| a * b).sum();
        }
    }
    ScoreMatrix::new(values)
}

/// (M+1)×(N+1) score matrix whose last row and column hold the outlier score `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedScoreMatrix {
    values: DMatrix<f64>,
    alpha: f64,
}

impl AugmentedScoreMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of real source points `M`.
    pub fn source_len(&self) -> usize {
        self.values.nrows() - 1
    }

    /// Number of real target points `N`.
    pub fn target_len(&self) -> usize {
        self.values.ncols() - 1
    }

    /// The real `M×N` block.
    pub fn interior(&self) -> ScoreMatrix {
        ScoreMatrix {
            values: self
                .values
                .view((0, 0), (self.source_len(), self.target_len()))
                .into_owned(),
        }
    }

    pub fn marginals(&self) -> Marginals {
        Marginals::new(self.source_len(), self.target_len())
    }
}

pub fn augment(s: &ScoreMatrix, alpha: f64) -> Result<AugmentedScoreMatrix> {
    if !alpha.is_finite() {
        return Err(Error::InvalidArgument("alpha must be finite".into()));
    }
    let (m, n) = (s.nrows(), s.ncols());
    let values = DMatrix::from_fn(m + 1, n + 1, |i, j| {
        if i < m && j < n {
            s.values[(i, j)]
        } else {
            alpha
        }
    });
    Ok(AugmentedScoreMatrix { values, alpha })
}

/// Row and column masses of the augmented problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Marginals {
    /// `a = [1; M] ++ [N]`, `b = [1; N] ++ [M]`.
    pub fn new(m: usize, n: usize) -> Self {
        let mut a = vec![1.0; m + 1];
        a[m] = n as f64;
        let mut b = vec![1.0; n + 1];
        b[n] = m as f64;
        Self { a, b }
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn total_mass(&self) -> f64 {
        self.a.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinkhornConfig {
    /// Entropy weight λ (> 0).
    pub lambda: f64,
    /// Iteration budget k (≥ 1). One iteration is a row update followed by a column update.
    pub iterations: usize,
    /// Stop early once the row-marginal violation falls below this value.
    pub tolerance: Option<f64>,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            iterations: 50,
            tolerance: None,
        }
    }
}

impl SinkhornConfig {
    pub fn new(lambda: f64, iterations: usize) -> Result<Self> {
        let cfg = Self {
            lambda,
            iterations,
            tolerance: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = Some(tolerance);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Nonnegative (M+1)×(N+1) coupling, kept alongside its elementwise logarithm.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    values: DMatrix<f64>,
    log_values: DMatrix<f64>,
    iterations: usize,
}

impl TransportPlan {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument("plan entries must be finite and nonnegative".into()));
        }
        let log_values = values.map(f64::ln);
        Ok(Self {
            values,
            log_values,
            iterations: 0,
        })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Elementwise natural log; exact even where `values` underflows to zero.
    pub fn log_values(&self) -> &DMatrix<f64> {
        &self.log_values
    }

    /// Sinkhorn iterations that produced this plan (0 for hand-built plans).
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.values.row_iter().map(|r| r.sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        self.values.column_iter().map(|c| c.sum()).collect()
    }

    /// `max(|row sums − a|, |col sums − b|)`.
    pub fn marginal_violation(&self, m: &Marginals) -> f64 {
        let rows = self
            .row_sums()
            .iter()
            .zip(m.a())
            .map(|(s, a)| (s - a).abs())
            .fold(0.0, f64::max);
        let cols = self
            .col_sums()
            .iter()
            .zip(m.b())
            .map(|(s, b)| (s - b).abs())
            .fold(0.0, f64::max);
        rows.max(cols)
    }
}

/// `log Σ exp(v_i)` with the max-shift trick. `-∞` entries contribute zero mass.
pub fn logsumexp(v: &[f64]) -> Result<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if v.is_empty() {
        return Err(Error::EmptyVector);
    }
    if max == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument("logsumexp of all -inf".into()));
    }
    if max.is_nan() || max == f64::INFINITY {
        return Err(Error::NumericalFailure("logsumexp input is not finite".into()));
    }
    let sum: f64 = v.iter().map(|x| (x - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Log-domain Sinkhorn; see the module docs for the update rules.
pub fn sinkhorn(s: &AugmentedScoreMatrix, m: &Marginals, cfg: &SinkhornConfig) -> Result<TransportPlan> {
    cfg.validate()?;
    let rows = s.values.nrows();
    let cols = s.values.ncols();
    if m.a.len() != rows || m.b.len() != cols {
        return Err(Error::ShapeMismatch {
            expected: (rows, cols),
            found: (m.a.len(), m.b.len()),
        });
    }

    // Row-major copy of S̄/λ.
    let inv_lambda = 1.0 / cfg.lambda;
    let mut kernel = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            kernel[i * cols + j] = s.values[(i, j)] * inv_lambda;
        }
    }
    let log_a: Vec<f64> = m.a.iter().map(|x| x.ln()).collect();
    let log_b: Vec<f64> = m.b.iter().map(|x| x.ln()).collect();

    let mut u = vec![0.0; rows];
    let mut v = vec![0.0; cols];
    let mut col_max = vec![0.0; cols];
    let mut col_sum = vec![0.0; cols];
    let mut iterations = 0;

    for _ in 0..cfg.iterations {
        iterations += 1;
        for i in 0..rows {
            let row = &kernel[i * cols..(i + 1) * cols];
            u[i] = log_a[i] - row_logsumexp(row, &v);
        }
        column_logsumexp(&kernel, cols, &u, &mut col_max, &mut col_sum);
        for j in 0..cols {
            v[j] = log_b[j] - (col_max[j] + col_sum[j].ln());
        }
        if let Some(tol) = cfg.tolerance {
            if row_violation(&kernel, cols, &u, &v, &m.a) < tol {
                break;
            }
        }
    }

    if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure("non-finite dual potential".into()));
    }

    let log_values = DMatrix::from_fn(rows, cols, |i, j| kernel[i * cols + j] + u[i] + v[j]);
    let values = log_values.map(f64::exp);
    if values.iter().any(|p| !p.is_finite()) {
        return Err(Error::NumericalFailure("non-finite plan entry".into()));
    }
    Ok(TransportPlan {
        values,
        log_values,
        iterations,
    })
}

fn row_logsumexp(row: &[f64], v: &[f64]) -> f64 {
    let max = row
        .iter()
        .zip(v)
        .map(|(k, vj)| k + vj)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().zip(v).map(|(k, vj)| (k + vj - max).exp()).sum();
    max + sum.ln()
}

fn column_logsumexp(kernel: &[f64], cols: usize, u: &[f64], max: &mut [f64], sum: &mut [f64]) {
    max.fill(f64::NEG_INFINITY);
    sum.fill(0.0);
    for (row, ui) in kernel.chunks_exact(cols).zip(u) {
        for (m, k) in max.iter_mut().zip(row) {
            *m = m.max(k + ui);
        }
    }
    for (row, ui) in kernel.chunks_exact(cols).zip(u) {
        for ((s, m), k) in sum.iter_mut().zip(max.iter()).zip(row) {
            *s += (k + ui - m).exp();
        }
    }
}

fn row_violation(kernel: &[f64], cols: usize, u: &[f64], v: &[f64], a: &[f64]) -> f64 {
    kernel
        .chunks_exact(cols)
        .zip(u)
        .zip(a)
        .map(|((row, ui), ai)| {
            let s: f64 = row.iter().zip(v).map(|(k, vj)| (k + ui + vj).exp()).sum();
            (s - ai).abs()
        })
        .fold(0.0, f64::max)
}

/// Entropy `E(P) = −Σ P_ij (log P_ij − 1)`.
pub fn entropy(p: &TransportPlan) -> f64 {
    -p.values
        .iter()
        .zip(p.log_values.iter())
        .map(|(v, l)| v * (l - 1.0))
        .sum::<f64>()
}

/// `⟨−S̄, P⟩ − λ E(P)`, the quantity the solver minimizes.
///
/// Fails on nonpositive plan entries, where the entropy term is undefined.
pub fn entropic_objective(p: &TransportPlan, s: &AugmentedScoreMatrix, lambda: f64) -> Result<f64> {
    if p.values.shape() != s.values.shape() {
        return Err(Error::ShapeMismatch {
            expected: s.values.shape(),
            found: p.values.shape(),
        });
    }
    for i in 0..p.values.nrows() {
        for j in 0..p.values.ncols() {
            if p.values[(i, j)] <= 0.0 {
                return Err(Error::NonPositivePlan(i, j));
            }
        }
    }
    let transport: f64 = p.values.iter().zip(s.values.iter()).map(|(pv, sv)| -sv * pv).sum();
    Ok(transport - lambda * entropy(p))
}

/// Hard matches read off a transport plan.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Extraction {
    pub correspondences: CorrespondenceSet,
    /// Source rows whose largest entry sits in the outlier column.
    pub source_outliers: Vec<usize>,
    /// Real target columns that no source row selected.
    pub unused_targets: Vec<usize>,
}

/// Row-wise argmax over the real source rows. A row whose maximum is the
/// outlier column yields no pair; the outlier row itself is never scanned.
/// Ties resolve to the lowest column index.
pub fn extract_correspondences(p: &TransportPlan) -> Extraction {
    let rows = p.values.nrows() - 1;
    let bin = p.values.ncols() - 1;
    let mut pairs = Vec::new();
    let mut source_outliers = Vec::new();
    let mut used = vec![false; bin];
    for i in 0..rows {
        let mut best = 0;
        for j in 1..=bin {
            if p.values[(i, j)] > p.values[(i, best)] {
                best = j;
            }
        }
        if best == bin {
            source_outliers.push(i);
        } else {
            used[best] = true;
            pairs.push((i, best));
        }
    }
    Extraction {
        correspondences: CorrespondenceSet::new(pairs),
        source_outliers,
        unused_targets: (0..bin).filter(|&j| !used[j]).collect(),
    }
}

/// Binary (M+1)×(N+1) matrix of ground-truth matches including outlier bins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthMatrix {
    values: DMatrix<u8>,
}

impl GroundTruthMatrix {
    /// Wraps a raw 0/1 matrix without completing the outlier bins.
    pub fn from_dense(values: DMatrix<u8>) -> Result<Self> {
        if values.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument("ground truth must be binary".into()));
        }
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidArgument("ground truth must be at least 1x1".into()));
        }
        Ok(Self { values })
    }

    /// Marks the given real pairs and flags every unmatched real row (column)
    /// in its outlier column (row). The bin-bin corner stays 0.
    pub fn from_matches(m: usize, n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut values = DMatrix::<u8>::zeros(m + 1, n + 1);
        for &(i, j) in pairs {
            if i >= m || j >= n {
                return Err(Error::IndexOutOfBounds {
                    source_index: i,
                    target_index: j,
                });
            }
            values[(i, j)] = 1;
        }
        for i in 0..m {
            if (0..n).all(|j| values[(i, j)] == 0) {
                values[(i, n)] = 1;
            }
        }
        for j in 0..n {
            if (0..m).all(|i| values[(i, j)] == 0) {
                values[(m, j)] = 1;
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &DMatrix<u8> {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.values[(i, j)] == 1
    }

    pub fn source_len(&self) -> usize {
        self.values.nrows() - 1
    }

    pub fn target_len(&self) -> usize {
        self.values.ncols() - 1
    }

    pub fn count(&self) -> usize {
        self.values.iter().map(|&v| v as usize).sum()
    }

    /// Real `(source, target)` matches.
    pub fn matches(&self) -> Vec<(usize, usize)> {
        let (m, n) = (self.source_len(), self.target_len());
        let mut out = Vec::new();
        for i in 0..m {
            for j in 0..n {
                if self.get(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn source_outliers(&self) -> Vec<usize> {
        let n = self.target_len();
        (0..self.source_len()).filter(|&i| self.get(i, n)).collect()
    }

    pub fn target_outliers(&self) -> Vec<usize> {
        let m = self.source_len();
        (0..self.target_len()).filter(|&j| self.get(m, j)).collect()
    }

    /// Every real row and column has at least one nonzero entry.
    pub fn is_complete(&self) -> bool {
        let (r, c) = self.values.shape();
        (0..r - 1).all(|i| self.values.row(i).iter().any(|&v| v == 1))
            && (0..c - 1).all(|j| self.values.column(j).iter().any(|&v| v == 1))
    }
}

/// Thresholded distance matching between `t(source)` and `target`.
///
/// `M̄_ij = 1` when `‖t(x_i) − y_j‖ ≤ threshold`; rows and columns without
/// any match are flagged in their outlier bins. One-to-many matches are kept.
pub fn build_ground_truth(
    source: &PointCloud,
    target: &PointCloud,
    t: &RigidTransform,
    threshold: f64,
) -> Result<GroundTruthMatrix> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument("threshold must be positive".into()));
    }
    let tree = KdTree::new(target.points());
    let mut pairs = Vec::new();
    for (i, p) in source.points().iter().enumerate() {
        let q = t.apply_point(p);
        pairs.extend(tree.within_radius(&q, threshold).into_iter().map(|n| (i, n.index)));
    }
    GroundTruthMatrix::from_matches(source.len(), target.len(), &pairs)
}

/// `−Σ M̄_ij log P̄_ij / Σ M̄_ij`.
///
/// Entries whose probability underflowed to zero contribute `−log(f64::MIN_POSITIVE)`
/// instead of infinity.
pub fn nll_loss(p: &TransportPlan, gt: &GroundTruthMatrix) -> Result<f64> {
    if p.values.shape() != gt.values.shape() {
        return Err(Error::ShapeMismatch {
            expected: p.values.shape(),
            found: gt.values.shape(),
        });
    }
    let count = gt.count();
    if count == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    let floor = f64::MIN_POSITIVE.ln();
    let total: f64 = p
        .log_values
        .iter()
        .zip(gt.values.iter())
        .filter(|(_, &g)| g == 1)
        .map(|(l, _)| l.max(floor))
        .sum();
    Ok(-total / count as f64)
}

/// Loss of the full matching layer: augment, solve, then score against `gt`.
pub fn matching_loss(
    scores: &ScoreMatrix,
    alpha: f64,
    gt: &GroundTruthMatrix,
    cfg: &SinkhornConfig,
) -> Result<f64> {
    let aug = augment(scores, alpha)?;
    let plan = sinkhorn(&aug, &aug.marginals(), cfg)?;
    nll_loss(&plan, gt)
}

/// Central finite differences of [`matching_loss`] with respect to the given
/// score entries, using step `h`.
pub fn loss_sensitivity(
    scores: &ScoreMatrix,
    alpha: f64,
    gt: &GroundTruthMatrix,
    cfg: &SinkhornConfig,
    entries: &[(usize, usize)],
    h: f64,
) -> Result<Vec<f64>> {
    entries
        .iter()
        .map(|&(i, j)| {
            if i >= scores.nrows() || j >= scores.ncols() {
                return Err(Error::InvalidArgument(format!("score entry ({i}, {j}) out of range")));
            }
            let mut plus = scores.clone();
            plus.values[(i, j)] += h;
            let mut minus = scores.clone();
            minus.values[(i, j)] -= h;
            let lp = matching_loss(&plus, alpha, gt, cfg)?;
            let lm = matching_loss(&minus, alpha, gt, cfg)?;
            Ok((lp - lm) / (2.0 * h))
        })
        .collect()
}
