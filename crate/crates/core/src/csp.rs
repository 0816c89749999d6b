//! Common Spatial Patterns: trace-normalized spatial covariances, the
//! composite decomposition, whitening and simultaneous diagonalization.

use crate::eigen::{normalize_sign, symmetric_eigen};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::types::{ClassLabel, Epoch};

pub const DEFAULT_PAIRS: usize = 2;
/// Ridge added to each class covariance, relative to its mean diagonal.
pub const DEFAULT_RIDGE: f64 = 1e-9;
/// Composite eigenvalues below this fraction of the largest are discarded.
pub const RANK_TOLERANCE: f64 = 1e-10;
const ZERO_ENERGY: f64 = 1e-30;

/// Channel x channel covariance with unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialCovariance {
    pub matrix: Matrix,
    pub trial_count: usize,
}

/// `X Xᵀ / trace(X Xᵀ)` for one trial (channels x samples).
pub fn normalized_covariance(trial: &Matrix) -> Result<SpatialCovariance> {
    if trial.cols() < 2 {
        return Err(Error::InvalidArgument(format!(
            "trial needs at least 2 samples, got {}",
            trial.cols()
        )));
    }
    if !trial.is_finite() {
        return Err(Error::InvalidArgument("trial contains non-finite samples".into()));
    }
    let gram = trial.gram();
    let trace = gram.trace();
    if !(trace > ZERO_ENERGY) {
        return Err(Error::ZeroSignal);
    }
    Ok(SpatialCovariance {
        matrix: gram.scale(1.0 / trace),
        trial_count: 1,
    })
}

/// Mean of the normalized covariances of every epoch carrying `label`.
pub fn average_covariance(epochs: &[Epoch], label: ClassLabel) -> Result<SpatialCovariance> {
    let trials: Vec<&Epoch> = epochs.iter().filter(|e| e.label == label).collect();
    if trials.len() < 2 {
        return Err(Error::TooFewTrials(format!(
            "{} {label} epochs, at least 2 required",
            trials.len()
        )));
    }
    let n = trials[0].data.rows();
    let mut sum = Matrix::zeros(n, n);
    for e in &trials {
        if e.data.rows() != n {
            return Err(Error::DimMismatch(format!(
                "epoch with {} channels in a set of {n}-channel epochs",
                e.data.rows()
            )));
        }
        sum = sum.add(&normalized_covariance(&e.data)?.matrix);
    }
    Ok(SpatialCovariance {
        matrix: sum.scale(1.0 / trials.len() as f64),
        trial_count: trials.len(),
    })
}

/// `ANC = ANC_l + ANC_r = m0 diag(sigma) m0ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeDecomposition {
    /// Orthonormal eigenvectors as columns.
    pub m0: Matrix,
    /// Eigenvalues, descending.
    pub sigma: Vec<f64>,
}

pub fn composite_eigendecomposition(anc_l: &Matrix, anc_r: &Matrix) -> Result<CompositeDecomposition> {
    if anc_l.shape() != anc_r.shape() || !anc_l.is_square() {
        return Err(Error::DimMismatch(format!(
            "class covariances are {}x{} and {}x{}",
            anc_l.rows(),
            anc_l.cols(),
            anc_r.rows(),
            anc_r.cols()
        )));
    }
    let eig = symmetric_eigen(&anc_l.add(anc_r))?;
    Ok(CompositeDecomposition {
        m0: eig.vectors,
        sigma: eig.values,
    })
}

/// A trained set of spatial filters.
///
/// Rows of `projection` are filters: the `n_pairs` most LEFT-discriminative
/// (largest LEFT variance share, descending) followed by the `n_pairs` most
/// RIGHT-discriminative (smallest LEFT share, ascending).
#[derive(Debug, Clone, PartialEq)]
pub struct CspModel {
    projection: Matrix,
    eigenvalues: Vec<f64>,
    channel_names: Vec<String>,
    n_pairs: usize,
    ridge: f64,
}

impl CspModel {
    pub fn new(
        projection: Matrix,
        eigenvalues: Vec<f64>,
        channel_names: Vec<String>,
        n_pairs: usize,
        ridge: f64,
    ) -> Result<Self> {
        if n_pairs == 0 || projection.rows() != 2 * n_pairs || eigenvalues.len() != 2 * n_pairs {
            return Err(Error::DimMismatch(format!(
                "{} filters and {} eigenvalues for {n_pairs} pairs",
                projection.rows(),
                eigenvalues.len()
            )));
        }
        if projection.cols() != channel_names.len() {
            return Err(Error::DimMismatch(format!(
                "filters span {} channels but {} channel names given",
                projection.cols(),
                channel_names.len()
            )));
        }
        if !projection.is_finite() || eigenvalues.iter().any(|v| !v.is_finite()) || !ridge.is_finite() {
            return Err(Error::InvalidArgument("CSP model contains non-finite values".into()));
        }
        Ok(CspModel {
            projection,
            eigenvalues,
            channel_names,
            n_pairs,
            ridge,
        })
    }

    pub fn projection(&self) -> &Matrix {
        &self.projection
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    pub fn n_filters(&self) -> usize {
        2 * self.n_pairs
    }

    pub fn n_channels(&self) -> usize {
        self.projection.cols()
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }
}

/// Everything computed while training, for inspection and verification.
#[derive(Debug, Clone)]
pub struct CspTraining {
    pub model: CspModel,
    /// Class-averaged normalized covariances, before the ridge.
    pub anc_left: SpatialCovariance,
    pub anc_right: SpatialCovariance,
    pub composite: CompositeDecomposition,
    /// Dimensions kept after whitening.
    pub whitened_rank: usize,
}

pub fn train_csp(epochs: &[Epoch], n_pairs: usize, channel_names: &[String]) -> Result<CspModel> {
    train_csp_detailed(epochs, n_pairs, channel_names).map(|t| t.model)
}

pub fn train_csp_detailed(epochs: &[Epoch], n_pairs: usize, channel_names: &[String]) -> Result<CspTraining> {
    let n = channel_names.len();
    if n_pairs == 0 || 2 * n_pairs > n {
        return Err(Error::DimMismatch(format!(
            "{n_pairs} filter pairs need between 1 and {} pairs for {n} channels",
            n / 2
        )));
    }
    if let Some(e) = epochs.iter().find(|e| e.data.rows() != n) {
        return Err(Error::DimMismatch(format!(
            "epoch has {} channels, expected {n}",
            e.data.rows()
        )));
    }
    let anc_left = average_covariance(epochs, ClassLabel::Left)?;
    let anc_right = average_covariance(epochs, ClassLabel::Right)?;

    let regularize = |c: &Matrix| {
        let mut r = c.clone();
        r.add_diagonal(DEFAULT_RIDGE * c.trace() / n as f64);
        r
    };
    let left = regularize(&anc_left.matrix);
    let right = regularize(&anc_right.matrix);
    let composite = composite_eigendecomposition(&left, &right)?;

    let sigma_max = composite.sigma.first().copied().unwrap_or(0.0);
    let kept: Vec<usize> = (0..n)
        .filter(|&i| composite.sigma[i] >= RANK_TOLERANCE * sigma_max && composite.sigma[i] > 0.0)
        .collect();
    if kept.len() < 2 * n_pairs {
        return Err(Error::RankDeficient {
            usable: kept.len(),
            required: 2 * n_pairs,
        });
    }

    // T = Σ^{-1/2} m0ᵀ restricted to the kept dimensions.
    let mut whitening = Matrix::zeros(kept.len(), n);
    for (r, &i) in kept.iter().enumerate() {
        let inv_sqrt = 1.0 / composite.sigma[i].sqrt();
        for c in 0..n {
            whitening[(r, c)] = composite.m0[(c, i)] * inv_sqrt;
        }
    }
    let s_left = whitening.matmul(&left).matmul(&whitening.transpose());
    let diag = symmetric_eigen(&s_left)?;
    let filters = diag.vectors.transpose().matmul(&whitening);

    let rank = kept.len();
    let chosen: Vec<usize> = (0..n_pairs).chain((0..n_pairs).map(|k| rank - 1 - k)).collect();
    let mut projection = filters.select_rows(&chosen);
    for r in 0..projection.rows() {
        normalize_sign(projection.row_mut(r));
    }
    let eigenvalues = chosen.iter().map(|&k| diag.values[k]).collect();

    let model = CspModel::new(projection, eigenvalues, channel_names.to_vec(), n_pairs, DEFAULT_RIDGE)?;
    Ok(CspTraining {
        model,
        anc_left,
        anc_right,
        composite,
        whitened_rank: rank,
    })
}

/// Projects an epoch (channels x samples) onto the spatial filters.
pub fn apply_csp(model: &CspModel, epoch_data: &Matrix) -> Result<Matrix> {
    if epoch_data.rows() != model.n_channels() {
        return Err(Error::DimMismatch(format!(
            "model expects {} channels, epoch has {}",
            model.n_channels(),
            epoch_data.rows()
        )));
    }
    Ok(model.projection.matmul(epoch_data))
}
