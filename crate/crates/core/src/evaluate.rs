//! Confusion matrices, accuracy, stratified k-fold evaluation and the
//! feedback squashing used by the online display.

use std::fmt::Write as _;
use std::io::Write;

use crate::classify::{label_for_score, log_variance_features, lda_score, train_lda, FeatureVector, LdaModel};
use crate::csp::{apply_csp, train_csp, CspModel};
use crate::error::{Error, Result};
use crate::io::fmt_real;
use crate::matrix::Matrix;
use crate::preprocess::extract_epochs;
use crate::types::{default_channel_names, seconds_to_samples, ClassLabel, Epoch, MarkerStream, SignalBuffer};

pub const DEFAULT_FOLDS: usize = 5;

/// Counts indexed `[true][predicted]`, LEFT first.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn new(counts: [[u64; 2]; 2]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn record(&mut self, target: ClassLabel, prediction: ClassLabel) {
        self.counts[target.index()][prediction.index()] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for i in 0..2 {
            for j in 0..2 {
                self.counts[i][j] += other.counts[i][j];
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        self.counts[0][0] + self.counts[1][1]
    }

    pub fn row_total(&self, target: ClassLabel) -> u64 {
        self.counts[target.index()].iter().sum()
    }

    /// Percentage of correct predictions.
    pub fn accuracy(&self) -> Result<f64> {
        match self.total() {
            0 => Err(Error::Empty),
            t => Ok(100.0 * self.correct() as f64 / t as f64),
        }
    }

    /// Percentage of `target` samples predicted correctly, `None` without samples.
    pub fn class_accuracy(&self, target: ClassLabel) -> Option<f64> {
        let i = target.index();
        match self.row_total(target) {
            0 => None,
            t => Some(100.0 * self.counts[i][i] as f64 / t as f64),
        }
    }
}

pub fn confusion(targets: &[ClassLabel], predictions: &[ClassLabel]) -> Result<ConfusionMatrix> {
    if targets.len() != predictions.len() {
        return Err(Error::LengthMismatch(targets.len(), predictions.len()));
    }
    if targets.is_empty() {
        return Err(Error::Empty);
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in targets.iter().zip(predictions) {
        cm.record(t, p);
    }
    Ok(cm)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    cm.accuracy()
}

/// Two decimals, as printed in every report.
pub fn format_percent(p: f64) -> String {
    format!("{p:.2}")
}

/// Signed confidence in `[-1, 1]`; negative leans LEFT.
pub fn feedback_strength(model: &LdaModel, score: f64) -> f64 {
    (score / model.score_scale()).tanh()
}

/// Fold index for every label: the `i`-th member of a class goes to fold `i % folds`.
pub fn stratified_folds(labels: &[ClassLabel], folds: usize) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {folds}")));
    }
    for class in ClassLabel::ALL {
        let n = labels.iter().filter(|&&l| l == class).count();
        if n < folds {
            return Err(Error::TooFewTrials(format!(
                "{n} {class} epochs cannot fill {folds} folds"
            )));
        }
    }
    let mut seen = [0usize; 2];
    Ok(labels
        .iter()
        .map(|l| {
            let i = seen[l.index()];
            seen[l.index()] += 1;
            i % folds
        })
        .collect())
}

/// A trained CSP + LDA pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub csp: CspModel,
    pub lda: LdaModel,
}

/// Decision on one block of samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub label: ClassLabel,
    pub score: f64,
    pub feedback: f64,
}

impl Pipeline {
    pub fn train(epochs: &[Epoch], n_pairs: usize, channel_names: &[String]) -> Result<Self> {
        let csp = train_csp(epochs, n_pairs, channel_names)?;
        let features = epochs
            .iter()
            .map(|e| {
                let f = log_variance_features(&apply_csp(&csp, &e.data)?)?;
                Ok(FeatureVector::labelled(f.values, e.label))
            })
            .collect::<Result<Vec<_>>>()?;
        let lda = train_lda(&features)?;
        Ok(Pipeline { csp, lda })
    }

    pub fn new(csp: CspModel, lda: LdaModel) -> Result<Self> {
        if csp.n_filters() != lda.dim() {
            return Err(Error::DimMismatch(format!(
                "CSP model has {} filters, LDA model expects {} features",
                csp.n_filters(),
                lda.dim()
            )));
        }
        Ok(Pipeline { csp, lda })
    }

    pub fn decide(&self, data: &Matrix) -> Result<Decision> {
        let features = log_variance_features(&apply_csp(&self.csp, data)?)?;
        let score = lda_score(&self.lda, &features)?;
        Ok(Decision {
            label: label_for_score(score),
            score,
            feedback: feedback_strength(&self.lda, score),
        })
    }
}

fn channel_count(epochs: &[Epoch]) -> Result<usize> {
    epochs
        .first()
        .map(|e| e.data.rows())
        .ok_or_else(|| Error::TooFewTrials("no epochs".into()))
}

/// Trains on every fold but one in turn; `train_fold[k]` lists the epochs
/// fold `k`'s model was fitted on.
fn run_folds<T, F>(epochs: &[Epoch], n_pairs: usize, folds: usize, score_fold: F) -> Result<(Vec<usize>, Vec<T>)>
where
    T: Send,
    F: Fn(&Pipeline, &[usize]) -> Result<T> + Sync,
{
    let labels: Vec<ClassLabel> = epochs.iter().map(|e| e.label).collect();
    let assignment = stratified_folds(&labels, folds)?;
    let names = default_channel_names(channel_count(epochs)?);
    let results: Vec<Result<T>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..folds)
            .map(|k| {
                let (assignment, names, score_fold) = (&assignment, &names, &score_fold);
                s.spawn(move || {
                    let train: Vec<Epoch> = epochs
                        .iter()
                        .zip(assignment)
                        .filter(|(_, &f)| f != k)
                        .map(|(e, _)| e.clone())
                        .collect();
                    let held_out: Vec<usize> = (0..epochs.len()).filter(|&i| assignment[i] == k).collect();
                    let pipeline = Pipeline::train(&train, n_pairs, names)?;
                    score_fold(&pipeline, &held_out)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("fold worker panicked"))
            .collect()
    });
    Ok((assignment, results.into_iter().collect::<Result<Vec<_>>>()?))
}

/// Held-out per-epoch results of a stratified k-fold run.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineEvaluation {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    /// Fold each epoch was held out in.
    pub fold_of: Vec<usize>,
}

pub fn evaluate_offline(epochs: &[Epoch], n_pairs: usize, folds: usize) -> Result<OfflineEvaluation> {
    let (fold_of, per_fold) = run_folds(epochs, n_pairs, folds, |p, held_out| {
        let mut cm = ConfusionMatrix::default();
        for &i in held_out {
            cm.record(epochs[i].label, p.decide(&epochs[i].data)?.label);
        }
        Ok(cm)
    })?;
    let mut confusion = ConfusionMatrix::default();
    per_fold.iter().for_each(|cm| confusion.merge(cm));
    Ok(OfflineEvaluation {
        accuracy: confusion.accuracy()?,
        confusion,
        fold_of,
    })
}

/// Sliding-window settings shared by windowed evaluation and replay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowConfig {
    pub epoch_offset_s: f64,
    pub epoch_length_s: f64,
    pub window_s: f64,
    pub step_s: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            epoch_offset_s: crate::preprocess::DEFAULT_EPOCH_OFFSET_S,
            epoch_length_s: crate::preprocess::DEFAULT_EPOCH_LENGTH_S,
            window_s: 1.0,
            step_s: 0.25,
        }
    }
}

/// True class of the window `[start, start + width)` (sample indices): the cue
/// whose scored interval `[cue + offset, cue + offset + length)` contains it.
pub fn window_target(
    markers: &MarkerStream,
    start: usize,
    width: usize,
    fs: f64,
    config: &WindowConfig,
) -> Option<ClassLabel> {
    let len = seconds_to_samples(config.epoch_length_s, fs);
    markers.cues().find_map(|(t, label)| {
        let from = seconds_to_samples(t + config.epoch_offset_s, fs);
        let (s, e) = (start as i64, (start + width) as i64);
        (s >= from && e <= from + len).then_some(label)
    })
}

/// One scored window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowRecord {
    /// End of the window, seconds from the start of the recording.
    pub time_s: f64,
    pub target: ClassLabel,
    pub decision: Decision,
    pub cue_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedEvaluation {
    pub per_window: ConfusionMatrix,
    pub per_cue: ConfusionMatrix,
    pub per_epoch: ConfusionMatrix,
    pub windows: Vec<WindowRecord>,
    pub skipped_cues: usize,
}

/// Stratified k-fold over cues of a band-passed recording. Each fold's model is
/// trained on whole epochs and scored on the sliding windows of held-out cues;
/// a cue's verdict is the sign of its mean window score.
pub fn evaluate_windowed(
    filtered: &SignalBuffer,
    markers: &MarkerStream,
    n_pairs: usize,
    folds: usize,
    config: &WindowConfig,
) -> Result<WindowedEvaluation> {
    if !(config.window_s > 0.0) || !(config.step_s > 0.0) {
        return Err(Error::InvalidArgument("window and step must be positive".into()));
    }
    if config.window_s > config.epoch_length_s {
        return Err(Error::InvalidArgument(format!(
            "window {} s exceeds the scored interval of {} s",
            config.window_s, config.epoch_length_s
        )));
    }
    let set = extract_epochs(filtered, markers, config.epoch_offset_s, config.epoch_length_s)?;
    let epochs = set.epochs;
    let fs = filtered.sample_rate_hz();
    let width = seconds_to_samples(config.window_s, fs) as usize;
    let epoch_len = seconds_to_samples(config.epoch_length_s, fs) as usize;
    let offsets: Vec<usize> = (0..)
        .map(|k| seconds_to_samples(k as f64 * config.step_s, fs) as usize)
        .take_while(|&o| o + width <= epoch_len)
        .collect();

    let (_, per_fold) = run_folds(&epochs, n_pairs, folds, |p, held_out| {
        let mut out = Vec::new();
        for &i in held_out {
            let e = &epochs[i];
            let epoch_start = seconds_to_samples(e.onset_s, fs) as usize;
            let whole = p.decide(&e.data)?;
            let mut records = Vec::with_capacity(offsets.len());
            for &o in &offsets {
                match p.decide(&e.data.columns(o, width)) {
                    Ok(decision) => records.push(WindowRecord {
                        time_s: (epoch_start + o + width) as f64 / fs,
                        target: e.label,
                        decision,
                        cue_index: i,
                    }),
                    Err(Error::DegenerateEpoch) => log::debug!("degenerate window in cue {i}"),
                    Err(err) => return Err(err),
                }
            }
            out.push((i, whole.label, records));
        }
        Ok(out)
    })?;

    let mut cues: Vec<(usize, ClassLabel, Vec<WindowRecord>)> = per_fold.into_iter().flatten().collect();
    cues.sort_by_key(|c| c.0);
    let mut per_window = ConfusionMatrix::default();
    let mut per_cue = ConfusionMatrix::default();
    let mut per_epoch = ConfusionMatrix::default();
    let mut windows = Vec::new();
    for (i, whole, records) in cues {
        let target = epochs[i].label;
        per_epoch.record(target, whole);
        if records.is_empty() {
            continue;
        }
        let mean = records.iter().map(|r| r.decision.score).sum::<f64>() / records.len() as f64;
        per_cue.record(target, label_for_score(mean));
        for r in &records {
            per_window.record(r.target, r.decision.label);
        }
        windows.extend(records);
    }
    if per_window.total() == 0 {
        return Err(Error::EmptyResult { skipped: set.skipped });
    }
    Ok(WindowedEvaluation {
        per_window,
        per_cue,
        per_epoch,
        windows,
        skipped_cues: set.skipped,
    })
}

/// Text block: the matrix, per-class accuracy and overall accuracy.
pub fn render_confusion(title: &str, cm: &ConfusionMatrix) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{title}");
    let _ = writeln!(s, "  true\\pred     LEFT    RIGHT");
    for t in ClassLabel::ALL {
        let row = cm.counts[t.index()];
        let _ = writeln!(s, "  {:<9} {:>8} {:>8}", t.as_str(), row[0], row[1]);
    }
    for t in ClassLabel::ALL {
        let acc = cm.class_accuracy(t).map_or_else(|| "n/a".to_string(), format_percent);
        let _ = writeln!(s, "  {} accuracy: {acc}%", t.as_str());
    }
    let overall = cm.accuracy().map_or_else(|_| "n/a".to_string(), format_percent);
    let _ = writeln!(s, "  accuracy: {overall}% ({} of {})", cm.correct(), cm.total());
    s
}

/// Report header listing every setting, one `key: value` per line.
pub fn render_header(title: &str, settings: &[(&str, String)]) -> String {
    let mut s = format!("# {title}\n");
    for (k, v) in settings {
        let _ = writeln!(s, "# {k}: {v}");
    }
    s
}

/// CSV of `time,target,prediction,score,feedback`, one row per window.
pub fn write_window_csv<'a, W: Write>(
    mut w: W,
    rows: impl IntoIterator<Item = (f64, Option<ClassLabel>, &'a Decision)>,
) -> Result<()> {
    writeln!(w, "time,target,prediction,score,feedback")?;
    for (t, target, d) in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_real(t),
            target.map_or("NONE", ClassLabel::as_str),
            d.label.as_str(),
            fmt_real(d.score),
            fmt_real(d.feedback)
        )?;
    }
    w.flush()?;
    Ok(())
}
