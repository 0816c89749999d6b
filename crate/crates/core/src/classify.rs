//! Log-variance features on CSP-projected epochs and a two-class LDA.

use crate::error::{Error, Result};
use crate::matrix::{cholesky_solve, dot, Matrix};
use crate::types::ClassLabel;

/// Floor applied to a zero component variance before taking the log.
pub const VARIANCE_FLOOR: f64 = 1e-30;
/// Shrinkage on the pooled covariance, relative to its mean diagonal.
pub const SHRINKAGE: f64 = 1e-6;
pub const SCORE_SCALE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: Option<ClassLabel>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        FeatureVector { values, label: None }
    }

    pub fn labelled(values: Vec<f64>, label: ClassLabel) -> Self {
        FeatureVector {
            values,
            label: Some(label),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Sample variance (denominator `n - 1`) in two passes.
fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

/// `f_j = ln(var_j / Σ_k var_k)` for each row of a projected epoch.
pub fn log_variance_features(projected: &Matrix) -> Result<FeatureVector> {
    if projected.cols() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples per component, got {}",
            projected.cols()
        )));
    }
    let vars: Vec<f64> = projected.row_iter().map(sample_variance).collect();
    let total: f64 = vars.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateEpoch);
    }
    let values = vars
        .iter()
        .map(|&v| (if v > 0.0 { v } else { VARIANCE_FLOOR } / total).ln())
        .collect();
    Ok(FeatureVector::new(values))
}

/// Hyperplane `weights · f + bias`; positive scores mean RIGHT.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    weights: Vec<f64>,
    bias: f64,
    score_scale: f64,
}

impl LdaModel {
    pub fn new(weights: Vec<f64>, bias: f64, score_scale: f64) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite()) || weights.iter().all(|&w| w == 0.0) {
            return Err(Error::InvalidArgument(
                "LDA weights must be finite and not all zero".into(),
            ));
        }
        if !bias.is_finite() {
            return Err(Error::InvalidArgument("LDA bias must be finite".into()));
        }
        if !(score_scale > 0.0) || !score_scale.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "score scale must be positive, got {score_scale}"
            )));
        }
        Ok(LdaModel {
            weights,
            bias,
            score_scale,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn score_scale(&self) -> f64 {
        self.score_scale
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }
}

fn class_stats(rows: &[&[f64]], d: usize) -> (Vec<f64>, Matrix) {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = Matrix::zeros(d, d);
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    (mean, cov.scale(1.0 / (n - 1.0)))
}

pub fn train_lda(features: &[FeatureVector]) -> Result<LdaModel> {
    let d = features.first().map_or(0, FeatureVector::dim);
    if d == 0 {
        return Err(Error::TooFewSamples("no feature vectors".into()));
    }
    if features.iter().any(|f| f.dim() != d) {
        return Err(Error::DimMismatch("feature vectors differ in length".into()));
    }
    let split = |label| -> Vec<&[f64]> {
        features
            .iter()
            .filter(|f| f.label == Some(label))
            .map(|f| f.values.as_slice())
            .collect()
    };
    let (neg, pos) = (split(ClassLabel::Left), split(ClassLabel::Right));
    if neg.len() < 2 || pos.len() < 2 {
        return Err(Error::TooFewSamples(format!(
            "{} LEFT and {} RIGHT vectors, at least 2 of each required",
            neg.len(),
            pos.len()
        )));
    }
    let (mu_neg, cov_neg) = class_stats(&neg, d);
    let (mu_pos, cov_pos) = class_stats(&pos, d);
    let (n_neg, n_pos) = (neg.len() as f64, pos.len() as f64);
    let mut pooled = cov_neg
        .scale(n_neg - 1.0)
        .add(&cov_pos.scale(n_pos - 1.0))
        .scale(1.0 / (n_neg + n_pos - 2.0));
    pooled.add_diagonal(SHRINKAGE * pooled.trace() / d as f64);

    let chol = pooled.cholesky().ok_or(Error::Singular)?;
    let delta: Vec<f64> = mu_pos.iter().zip(&mu_neg).map(|(p, n)| p - n).collect();
    let weights = cholesky_solve(&chol, &delta);
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Singular);
    }
    let midpoint: Vec<f64> = mu_pos.iter().zip(&mu_neg).map(|(p, n)| (p + n) / 2.0).collect();
    let bias = -dot(&weights, &midpoint);

    let scores: Vec<f64> = features.iter().map(|f| dot(&weights, &f.values) + bias).collect();
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let std = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();

    LdaModel::new(weights, bias, std.max(SCORE_SCALE_FLOOR))
}

pub fn lda_score(model: &LdaModel, f: &FeatureVector) -> Result<f64> {
    if f.dim() != model.dim() {
        return Err(Error::DimMismatch(format!(
            "model has {} weights, feature vector has {} values",
            model.dim(),
            f.dim()
        )));
    }
    Ok(dot(&model.weights, &f.values) + model.bias)
}

/// Positive scores are RIGHT; zero and negative scores are LEFT.
pub fn label_for_score(score: f64) -> ClassLabel {
    if score > 0.0 {
        ClassLabel::Right
    } else {
        ClassLabel::Left
    }
}

pub fn classify(model: &LdaModel, f: &FeatureVector) -> Result<ClassLabel> {
    lda_score(model, f).map(label_for_score)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labelled(rows: &[(f64, ClassLabel)]) -> Vec<FeatureVector> {
        rows.iter().map(|&(v, l)| FeatureVector::labelled(vec![v], l)).collect()
    }

    #[test]
    fn equal_variance_rows() {
        let m = Matrix::from_rows(&[[1.0, -1.0, 1.0, -1.0], [2.0, 0.0, 2.0, 0.0]]).unwrap();
        let f = log_variance_features(&m).unwrap();
        for v in f.values {
            assert!((v - 0.5f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn features_ignore_scale() {
        let m = Matrix::from_rows(&[[1.0, 3.0, -2.0, 0.5], [0.1, 0.0, 0.4, -0.3]]).unwrap();
        let a = log_variance_features(&m).unwrap();
        let b = log_variance_features(&m.scale(1234.5)).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_and_floored_rows() {
        let flat = Matrix::from_rows(&[[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]]).unwrap();
        assert!(matches!(log_variance_features(&flat), Err(Error::DegenerateEpoch)));
        let half = Matrix::from_rows(&[[1.0, 1.0, 1.0], [0.0, 2.0, 4.0]]).unwrap();
        let f = log_variance_features(&half).unwrap();
        assert!((f.values[0] - (VARIANCE_FLOOR / 4.0).ln()).abs() < 1e-12);
        assert_eq!(f.values[1], 0.0);
    }

    #[test]
    fn symmetric_one_dimensional_boundary() {
        use ClassLabel::*;
        let fs = labelled(&[(-2.0, Left), (-1.0, Left), (1.0, Right), (2.0, Right)]);
        let m = train_lda(&fs).unwrap();
        assert!(m.weights()[0] > 0.0);
        assert!(m.bias().abs() < 1e-9);
        let mid = lda_score(&m, &FeatureVector::new(vec![0.0])).unwrap();
        assert!(mid.abs() < 1e-9);
        assert!(lda_score(&m, &FeatureVector::new(vec![1.5])).unwrap() > 0.0);
    }

    #[test]
    fn translation_keeps_predictions() {
        use ClassLabel::*;
        let base = [(-2.0, 0.3, Left), (-1.2, -0.4, Left), (-1.7, 0.9, Left), (1.1, 0.2, Right), (2.3, -0.5, Right), (1.6, 0.1, Right)];
        let make = |t: (f64, f64)| -> Vec<FeatureVector> {
            base.iter()
                .map(|&(a, b, l)| FeatureVector::labelled(vec![a + t.0, b + t.1], l))
                .collect()
        };
        let before = make((0.0, 0.0));
        let after = make((17.0, -4.5));
        let m0 = train_lda(&before).unwrap();
        let m1 = train_lda(&after).unwrap();
        for (x, y) in before.iter().zip(&after) {
            assert_eq!(classify(&m0, x).unwrap(), classify(&m1, y).unwrap());
        }
    }

    #[test]
    fn too_few_samples() {
        use ClassLabel::*;
        assert!(matches!(
            train_lda(&labelled(&[(-1.0, Left), (1.0, Right), (2.0, Right)])),
            Err(Error::TooFewSamples(_))
        ));
        assert!(matches!(train_lda(&[]), Err(Error::TooFewSamples(_))));
    }

    #[test]
    fn singular_pooled_covariance() {
        use ClassLabel::*;
        // identical points within each class: zero pooled scatter, zero shrinkage
        let fs = labelled(&[(-1.0, Left), (-1.0, Left), (1.0, Right), (1.0, Right)]);
        assert!(matches!(train_lda(&fs), Err(Error::Singular)));
    }

    #[test]
    fn tie_breaks_left() {
        let m = LdaModel::new(vec![1.0], 0.0, 1.0).unwrap();
        assert_eq!(classify(&m, &FeatureVector::new(vec![0.0])).unwrap(), ClassLabel::Left);
        assert_eq!(classify(&m, &FeatureVector::new(vec![3.2])).unwrap(), ClassLabel::Right);
        assert_eq!(classify(&m, &FeatureVector::new(vec![-0.001])).unwrap(), ClassLabel::Left);
        assert!(matches!(
            classify(&m, &FeatureVector::new(vec![1.0, 2.0])),
            Err(Error::DimMismatch(_))
        ));
    }

    #[test]
    fn model_validation() {
        assert!(LdaModel::new(vec![0.0, 0.0], 0.0, 1.0).is_err());
        assert!(LdaModel::new(vec![1.0], f64::NAN, 1.0).is_err());
        assert!(LdaModel::new(vec![1.0], 0.0, 0.0).is_err());
    }
}
