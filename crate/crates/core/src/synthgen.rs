//! Synthetic cue-paced sessions with known class-dependent spatial covariance.
//!
//! During the cue interval `[t_i, t_i + period)` the signal is
//! `L_c z + noise_floor w`, where `L_c` is the Cholesky factor of the cued
//! class covariance and `z`, `w` are unit white Gaussian vectors drawn from
//! [`Xorshift64Star`]. Outside cue intervals the average of the two class
//! covariances is used. The result is band-passed with the default filter
//! order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::read_matrix_rows;
use crate::matrix::Matrix;
use crate::preprocess::{apply_filter, design_bandpass, DEFAULT_BAND_HZ, DEFAULT_EPOCH_LENGTH_S, DEFAULT_EPOCH_OFFSET_S, DEFAULT_FILTER_ORDER};
use crate::rng::Xorshift64Star;
use crate::types::{default_channel_names, seconds_to_samples, ClassLabel, Marker, MarkerLabel, MarkerStream, SignalBuffer, DEFAULT_SAMPLE_RATE_HZ};

pub const DEFAULT_CUE_PERIOD_S: f64 = 4.0;
pub const DEFAULT_N_CUES: usize = 40;
pub const DEFAULT_NOISE_FLOOR: f64 = 0.1;
/// The fixation cross precedes each cue by this much.
pub const CROSS_LEAD_S: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SessionSpec {
    pub n_channels: usize,
    pub fs: f64,
    pub n_cues: usize,
    pub cue_period_s: f64,
    pub cov_left: Matrix,
    pub cov_right: Matrix,
    pub band: (f64, f64),
    pub noise_floor: f64,
    pub seed: u64,
    /// Shuffle the balanced cue order instead of alternating LEFT, RIGHT.
    pub shuffle: bool,
}

impl SessionSpec {
    /// Defaults for everything except the class covariances.
    pub fn new(cov_left: Matrix, cov_right: Matrix) -> Self {
        SessionSpec {
            n_channels: cov_left.rows(),
            fs: DEFAULT_SAMPLE_RATE_HZ,
            n_cues: DEFAULT_N_CUES,
            cue_period_s: DEFAULT_CUE_PERIOD_S,
            cov_left,
            cov_right,
            band: DEFAULT_BAND_HZ,
            noise_floor: DEFAULT_NOISE_FLOOR,
            seed: 0,
            shuffle: false,
        }
    }

    /// Unit-variance channels except one per class: channel 0 has variance
    /// `strength` under LEFT, channel `n - 1` under RIGHT.
    pub fn separated(n_channels: usize, strength: f64, seed: u64) -> Self {
        let mut left = vec![1.0; n_channels];
        let mut right = vec![1.0; n_channels];
        left[0] = strength;
        right[n_channels - 1] = strength;
        SessionSpec {
            seed,
            ..SessionSpec::new(Matrix::from_diag(&left), Matrix::from_diag(&right))
        }
    }

    /// Both classes share the identity covariance.
    pub fn identical(n_channels: usize, seed: u64) -> Self {
        SessionSpec {
            seed,
            ..SessionSpec::new(Matrix::identity(n_channels), Matrix::identity(n_channels))
        }
    }

    pub fn duration_s(&self) -> f64 {
        (self.n_cues + 1) as f64 * self.cue_period_s
    }

    /// Onset of cue `i`.
    pub fn cue_time(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.cue_period_s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.n_channels < 2 {
            return bad(format!("need at least 2 channels, got {}", self.n_channels));
        }
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return bad(format!("sample rate must be positive, got {}", self.fs));
        }
        if self.n_cues == 0 || self.n_cues % 2 != 0 {
            return bad(format!("cue count must be even and positive, got {}", self.n_cues));
        }
        let epoch_end = DEFAULT_EPOCH_OFFSET_S + DEFAULT_EPOCH_LENGTH_S;
        if !(self.cue_period_s > epoch_end) || !self.cue_period_s.is_finite() {
            return bad(format!(
                "cue period {} s must exceed the {epoch_end} s epoch window",
                self.cue_period_s
            ));
        }
        if !(self.noise_floor >= 0.0) || !self.noise_floor.is_finite() {
            return bad(format!("noise floor must be nonnegative, got {}", self.noise_floor));
        }
        for (name, c) in [("cov_left", &self.cov_left), ("cov_right", &self.cov_right)] {
            if c.shape() != (self.n_channels, self.n_channels) {
                return bad(format!(
                    "{name} is {}x{}, expected {n}x{n}",
                    c.rows(),
                    c.cols(),
                    n = self.n_channels
                ));
            }
            if c.asymmetry() > 1e-12 * c.frobenius_norm().max(1.0) || c.cholesky().is_none() {
                return bad(format!("{name} is not symmetric positive definite"));
            }
        }
        design_bandpass(self.band.0, self.band.1, DEFAULT_FILTER_ORDER, self.fs)
            .map_err(|e| Error::InvalidSpec(e.to_string()))?;
        Ok(())
    }
}

fn parse_diag(value: &str, key: &str) -> Result<Matrix> {
    let d: Vec<f64> = value
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidSpec(format!("{key}: bad diagonal `{value}`")))?;
    Ok(Matrix::from_diag(&d))
}

fn parse_covariance(value: &str, key: &str, base_dir: &Path) -> Result<Matrix> {
    if let Some(rest) = value.strip_prefix("diag:") {
        parse_diag(rest, key)
    } else if let Some(rest) = value.strip_prefix("file:") {
        let path = base_dir.join(rest.trim());
        let file = std::fs::File::open(&path)
            .map_err(|e| Error::InvalidSpec(format!("{key}: cannot open {}: {e}", path.display())))?;
        read_matrix_rows(std::io::BufReader::new(file))
            .map_err(|e| Error::InvalidSpec(format!("{key}: {}: {e}", path.display())))
    } else {
        Err(Error::InvalidSpec(format!("{key}: expected `diag:` or `file:`, got `{value}`")))
    }
}

/// Parses `key=value` lines; `#` starts a comment. `file:` paths are resolved
/// against `base_dir`.
pub fn parse_session_spec(text: &str, base_dir: &Path) -> Result<SessionSpec> {
    let mut n_channels = None;
    let mut fs = DEFAULT_SAMPLE_RATE_HZ;
    let mut n_cues = DEFAULT_N_CUES;
    let mut period = DEFAULT_CUE_PERIOD_S;
    let mut band = DEFAULT_BAND_HZ;
    let mut noise = DEFAULT_NOISE_FLOOR;
    let mut seed = 0u64;
    let mut shuffle = false;
    let (mut cov_left, mut cov_right) = (None, None);

    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| Error::InvalidSpec(format!("line {}: expected key=value", i + 1)))?;
        let num = |v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::InvalidSpec(format!("line {}: {key}: `{v}` is not a number", i + 1)))
        };
        let int = |v: &str| -> Result<u64> {
            v.parse()
                .map_err(|_| Error::InvalidSpec(format!("line {}: {key}: `{v}` is not an integer", i + 1)))
        };
        match key {
            "n_channels" => n_channels = Some(int(value)? as usize),
            "fs" => fs = num(value)?,
            "n_cues" => n_cues = int(value)? as usize,
            "cue_period_s" => period = num(value)?,
            "noise_floor" => noise = num(value)?,
            "seed" => seed = int(value)?,
            "shuffle" => {
                shuffle = value
                    .parse()
                    .map_err(|_| Error::InvalidSpec(format!("line {}: shuffle must be true or false", i + 1)))?
            }
            "band" => {
                let (lo, hi) = value
                    .split_once(',')
                    .ok_or_else(|| Error::InvalidSpec(format!("line {}: band must be `low,high`", i + 1)))?;
                band = (num(lo.trim())?, num(hi.trim())?);
            }
            "cov_left" => cov_left = Some(parse_covariance(value, key, base_dir)?),
            "cov_right" => cov_right = Some(parse_covariance(value, key, base_dir)?),
            _ => return Err(Error::InvalidSpec(format!("line {}: unknown key `{key}`", i + 1))),
        }
    }
    let missing = |k: &str| Error::InvalidSpec(format!("missing `{k}`"));
    let cov_left = cov_left.ok_or_else(|| missing("cov_left"))?;
    let cov_right = cov_right.ok_or_else(|| missing("cov_right"))?;
    let spec = SessionSpec {
        n_channels: n_channels.unwrap_or(cov_left.rows()),
        fs,
        n_cues,
        cue_period_s: period,
        cov_left,
        cov_right,
        band,
        noise_floor: noise,
        seed,
        shuffle,
    };
    spec.validate()?;
    Ok(spec)
}

/// Class of every cue: balanced, alternating from LEFT unless shuffled.
fn cue_classes(spec: &SessionSpec, rng: &mut Xorshift64Star) -> Vec<ClassLabel> {
    let mut classes: Vec<ClassLabel> = (0..spec.n_cues)
        .map(|i| if i % 2 == 0 { ClassLabel::Left } else { ClassLabel::Right })
        .collect();
    if spec.shuffle {
        rng.shuffle(&mut classes);
    }
    classes
}

/// Draws a session. The PRNG is consumed in a fixed order: the cue shuffle
/// (if any), then per sample the `n` values of `z` followed by the `n` of `w`.
pub fn generate_session(spec: &SessionSpec) -> Result<(SignalBuffer, MarkerStream)> {
    spec.validate()?;
    let n = spec.n_channels;
    let mut rng = Xorshift64Star::new(spec.seed);
    let classes = cue_classes(spec, &mut rng);

    let mut markers = vec![Marker::new(0.0, MarkerLabel::SessionStart)];
    for (i, &c) in classes.iter().enumerate() {
        let t = spec.cue_time(i);
        markers.push(Marker::new(t - CROSS_LEAD_S, MarkerLabel::Cross));
        markers.push(Marker::new(t, MarkerLabel::cue_for(c)));
    }

    let chol = |m: &Matrix| m.cholesky().ok_or_else(|| Error::InvalidSpec("covariance is not SPD".into()));
    let factors = [chol(&spec.cov_left)?, chol(&spec.cov_right)?];
    let rest = chol(&spec.cov_left.add(&spec.cov_right).scale(0.5))?;

    let total = seconds_to_samples(spec.duration_s(), spec.fs) as usize;
    let bounds: Vec<(usize, usize)> = (0..spec.n_cues)
        .map(|i| {
            let start = seconds_to_samples(spec.cue_time(i), spec.fs) as usize;
            let end = seconds_to_samples(spec.cue_time(i) + spec.cue_period_s, spec.fs) as usize;
            (start, end)
        })
        .collect();

    let mut x = Matrix::zeros(n, total);
    let mut z = vec![0.0; n];
    let mut cue = 0;
    for j in 0..total {
        while cue < bounds.len() && j >= bounds[cue].1 {
            cue += 1;
        }
        let l = match bounds.get(cue) {
            Some(&(start, _)) if j >= start => &factors[classes[cue].index()],
            _ => &rest,
        };
        z.iter_mut().for_each(|v| *v = rng.next_gaussian());
        let mixed = l.mat_vec(&z);
        for (i, m) in mixed.into_iter().enumerate() {
            x[(i, j)] = m + spec.noise_floor * rng.next_gaussian();
        }
    }

    let raw = SignalBuffer::new(spec.fs, default_channel_names(n), x)?;
    let filter = design_bandpass(spec.band.0, spec.band.1, DEFAULT_FILTER_ORDER, spec.fs)?;
    Ok((apply_filter(&filter, &raw)?, MarkerStream::new(markers)?))
}
