//! Temporal band-pass filtering and cue-locked epoch extraction.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::types::{seconds_to_samples, Epoch, MarkerStream, SignalBuffer};

pub const DEFAULT_BAND_HZ: (f64, f64) = (8.0, 30.0);
pub const DEFAULT_FILTER_ORDER: usize = 4;
pub const DEFAULT_EPOCH_OFFSET_S: f64 = 0.5;
pub const DEFAULT_EPOCH_LENGTH_S: f64 = 3.0;

const SUPPORTED_ORDERS: [usize; 4] = [2, 4, 6, 8];
const POLE_MARGIN: f64 = 1e-9;
const REAL_POLE_TOLERANCE: f64 = 1e-9;

/// One biquad `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Section {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Section {
    fn response_at(&self, w: f64) -> Complex64 {
        let eval = |c: &[f64; 3]| -> Complex64 {
            c.iter()
                .enumerate()
                .map(|(k, &v)| Complex64::from_polar(v, -w * k as f64))
                .sum()
        };
        eval(&self.b) / eval(&self.a)
    }
}

/// A band-pass filter. `feedforward`/`feedback` hold the expanded transfer
/// function with `feedback[0] == 1`; `sections` is the same transfer function
/// factored into biquads, which is what filtering runs.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCoefficients {
    pub feedforward: Vec<f64>,
    pub feedback: Vec<f64>,
    pub sections: Vec<Section>,
    pub low_hz: f64,
    pub high_hz: f64,
    /// Band-pass order, i.e. the number of poles.
    pub order: usize,
    pub sample_rate_hz: f64,
}

impl FilterCoefficients {
    /// Complex response `H(e^{jω})` at `freq_hz`.
    pub fn response_at(&self, freq_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / self.sample_rate_hz;
        self.sections.iter().map(|s| s.response_at(w)).product()
    }
}

/// Designs a Butterworth band-pass filter by bilinear transform with
/// frequency pre-warping.
///
/// `order` is the order of the resulting band-pass (number of poles), so the
/// analog low-pass prototype has order `order / 2`.
pub fn design_bandpass(low_hz: f64, high_hz: f64, order: usize, fs: f64) -> Result<FilterCoefficients> {
    let band_ok = fs.is_finite()
        && fs > 0.0
        && low_hz > 0.0
        && low_hz < high_hz
        && high_hz < fs / 2.0
        && SUPPORTED_ORDERS.contains(&order);
    if !band_ok {
        return Err(Error::InvalidBand {
            low_hz,
            high_hz,
            order,
            fs,
        });
    }

    let n = order / 2;
    let fs2 = 2.0 * fs;
    let warp = |f: f64| fs2 * (PI * f / fs).tan();
    let (wl, wh) = (warp(low_hz), warp(high_hz));
    let bw = wh - wl;
    let w0_sq = wl * wh;

    // Analog prototype poles on the left half of the unit circle, each mapped
    // to a conjugate-symmetric pair by the low-pass to band-pass substitution.
    let mut analog_poles = Vec::with_capacity(2 * n);
    for k in 1..=n {
        let theta = PI * (2 * k + n - 1) as f64 / (2 * n) as f64;
        let p = Complex64::from_polar(1.0, theta);
        let half = p * (bw / 2.0);
        let disc = (half * half - w0_sq).sqrt();
        analog_poles.push(half + disc);
        analog_poles.push(half - disc);
    }

    let digital_poles: Vec<Complex64> = analog_poles
        .iter()
        .map(|&s| (fs2 + s) / (fs2 - s))
        .collect();

    // n analog zeros at s = 0 and n at infinity map to z = 1 and z = -1.
    let denom: Complex64 = analog_poles.iter().map(|&s| fs2 - s).product();
    let gain = (bw.powi(n as i32) * fs2.powi(n as i32) / denom).re;

    let feedforward: Vec<f64> = one_minus_z2_power(n).into_iter().map(|c| gain * c).collect();
    let feedback: Vec<f64> = poly_from_roots(&digital_poles)
        .into_iter()
        .map(|c| c.re)
        .collect();
    let sections = biquads(&digital_poles, gain);

    if digital_poles.iter().any(|p| p.norm() >= 1.0 - POLE_MARGIN) || !sections.iter().all(|s| is_stable(&s.a)) {
        return Err(Error::Unstable);
    }
    if sections.iter().flat_map(|s| s.a.iter().chain(&s.b)).any(|c| !c.is_finite()) {
        return Err(Error::Unstable);
    }

    Ok(FilterCoefficients {
        feedforward,
        feedback,
        sections,
        low_hz,
        high_hz,
        order,
        sample_rate_hz: fs,
    })
}

/// Pairs conjugate poles (and the real poles among themselves) into biquads,
/// each with zeros at `z = ±1`, ordered by increasing pole radius. The gain is
/// spread evenly over the sections.
fn biquads(poles: &[Complex64], gain: f64) -> Vec<Section> {
    let is_real = |p: &Complex64| p.im.abs() <= REAL_POLE_TOLERANCE * p.norm().max(1.0);
    let mut upper: Vec<Complex64> = poles.iter().copied().filter(|p| !is_real(p) && p.im > 0.0).collect();
    let mut real: Vec<f64> = poles.iter().filter(|p| is_real(p)).map(|p| p.re).collect();
    real.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    let mut denominators: Vec<(f64, [f64; 3])> = upper
        .drain(..)
        .map(|p| (p.norm(), [1.0, -2.0 * p.re, p.norm_sqr()]))
        .collect();
    for pair in real.chunks(2) {
        let (r1, r2) = (pair[0], pair.get(1).copied().unwrap_or(0.0));
        denominators.push((r1.abs().max(r2.abs()), [1.0, -(r1 + r2), r1 * r2]));
    }
    denominators.sort_by(|x, y| x.0.total_cmp(&y.0));
    let per = gain.powf(1.0 / denominators.len() as f64);
    denominators
        .into_iter()
        .map(|(_, a)| Section { b: [per, 0.0, -per], a })
        .collect()
}

/// Coefficients of `(1 - z^-2)^n` in ascending powers of `z^-1`.
fn one_minus_z2_power(n: usize) -> Vec<f64> {
    let mut c = vec![0.0; 2 * n + 1];
    let mut binom = 1.0;
    for k in 0..=n {
        c[2 * k] = if k % 2 == 0 { binom } else { -binom };
        binom = binom * (n - k) as f64 / (k + 1) as f64;
    }
    c
}

fn poly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    let mut poly = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); poly.len() + 1];
        for (i, &c) in poly.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        poly = next;
    }
    poly
}

/// Schur-Cohn step-down test: true iff every root of the monic polynomial
/// `a` (ascending powers of `z^-1`) lies strictly inside the unit circle.
pub fn is_stable(a: &[f64]) -> bool {
    if a.is_empty() || a[0] != 1.0 {
        return false;
    }
    let mut poly = a.to_vec();
    while poly.len() > 1 {
        let m = poly.len() - 1;
        let k = poly[m];
        if !(k.abs() < 1.0 - POLE_MARGIN) {
            return false;
        }
        let denom = 1.0 - k * k;
        poly = (0..m)
            .map(|i| (poly[i] - k * poly[m - i]) / denom)
            .collect();
    }
    true
}

/// Applies the filter causally to every channel, starting from rest.
pub fn apply_filter(coeffs: &FilterCoefficients, buffer: &SignalBuffer) -> Result<SignalBuffer> {
    let input = buffer.samples();
    let mut out = Matrix::zeros(input.rows(), input.cols());
    for ch in 0..input.rows() {
        filter_into(coeffs, input.row(ch), out.row_mut(ch));
    }
    buffer.with_samples(out)
}

/// Cascade of transposed direct form II biquads over one channel.
pub fn filter_into(coeffs: &FilterCoefficients, x: &[f64], y: &mut [f64]) {
    y.copy_from_slice(x);
    for s in &coeffs.sections {
        let [b0, b1, b2] = s.b;
        let [_, a1, a2] = s.a;
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in y.iter_mut() {
            let xn = *v;
            let out = b0 * xn + z1;
            z1 = b1 * xn - a1 * out + z2;
            z2 = b2 * xn - a2 * out;
            *v = out;
        }
    }
}

/// Result of cue-locked epoching.
#[derive(Debug, Clone)]
pub struct EpochSet {
    pub epochs: Vec<Epoch>,
    /// Cues whose window ran past either end of the recording.
    pub skipped: usize,
}

/// Cuts one epoch per LEFT/RIGHT cue covering `[t + offset_s, t + offset_s + length_s)`.
pub fn extract_epochs(
    buffer: &SignalBuffer,
    markers: &MarkerStream,
    offset_s: f64,
    length_s: f64,
) -> Result<EpochSet> {
    if !(length_s > 0.0) || !offset_s.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "epoch length must be positive (got {length_s}) and offset finite (got {offset_s})"
        )));
    }
    let fs = buffer.sample_rate_hz();
    let width = seconds_to_samples(length_s, fs);
    if width < 1 {
        return Err(Error::InvalidArgument(format!(
            "epoch of {length_s} s is shorter than one sample"
        )));
    }
    let total = buffer.n_samples() as i64;
    let mut epochs = Vec::new();
    let mut skipped = 0;
    for (t, label) in markers.cues() {
        let onset_s = t + offset_s;
        let start = seconds_to_samples(onset_s, fs);
        if start < 0 || start + width > total {
            log::debug!("skipping {label} cue at {t} s: window outside recording");
            skipped += 1;
            continue;
        }
        epochs.push(Epoch {
            label,
            data: buffer.samples().columns(start as usize, width as usize),
            onset_s,
        });
    }
    if epochs.is_empty() {
        return Err(Error::EmptyResult { skipped });
    }
    Ok(EpochSet { epochs, skipped })
}
