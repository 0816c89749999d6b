//! Domain types shared by every stage of the pipeline.

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 128.0;

/// Electrode names of the 14-channel consumer headset, in recording order.
pub const DEFAULT_CHANNELS: [&str; 14] = [
    "AF3", "F7", "F3", "FC5", "T7", "P7", "O1", "O2", "P8", "T8", "FC6", "F4", "F8", "AF4",
];

/// Default channel names for `n` channels: the headset montage when `n == 14`,
/// `CH1..CHn` otherwise.
pub fn default_channel_names(n: usize) -> Vec<String> {
    if n == DEFAULT_CHANNELS.len() {
        DEFAULT_CHANNELS.iter().map(|s| s.to_string()).collect()
    } else {
        (1..=n).map(|i| format!("CH{i}")).collect()
    }
}

/// Seconds to the nearest sample index.
pub fn seconds_to_samples(seconds: f64, sample_rate_hz: f64) -> i64 {
    (seconds * sample_rate_hz).round() as i64
}

/// A rectangular block of multichannel samples (channels x samples, microvolts).
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBuffer {
    sample_rate_hz: f64,
    channel_names: Vec<String>,
    samples: Matrix,
}

impl SignalBuffer {
    pub fn new(sample_rate_hz: f64, channel_names: Vec<String>, samples: Matrix) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sample rate must be positive and finite, got {sample_rate_hz}"
            )));
        }
        if samples.rows() == 0 || samples.cols() == 0 {
            return Err(Error::InvalidArgument(
                "signal needs at least one channel and one sample".into(),
            ));
        }
        if channel_names.len() != samples.rows() {
            return Err(Error::DimMismatch(format!(
                "{} channel names for {} channels",
                channel_names.len(),
                samples.rows()
            )));
        }
        let mut seen = HashSet::new();
        for name in &channel_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate channel name `{name}`")));
            }
        }
        if !samples.is_finite() {
            return Err(Error::InvalidArgument("signal contains non-finite samples".into()));
        }
        Ok(SignalBuffer {
            sample_rate_hz,
            channel_names,
            samples,
        })
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn samples(&self) -> &Matrix {
        &self.samples
    }

    pub fn n_channels(&self) -> usize {
        self.samples.rows()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.cols()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.sample_rate_hz
    }

    /// Replaces the sample block, keeping rate and channel names.
    pub fn with_samples(&self, samples: Matrix) -> Result<Self> {
        SignalBuffer::new(self.sample_rate_hz, self.channel_names.clone(), samples)
    }

    /// Copies the block starting at `start_s` and lasting `length_s` seconds.
    ///
    /// Both bounds are rounded to the nearest sample.
    pub fn slice_window(&self, start_s: f64, length_s: f64) -> Result<Matrix> {
        if !(length_s > 0.0) || !length_s.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "window length must be positive, got {length_s}"
            )));
        }
        if !(start_s >= 0.0) || !start_s.is_finite() {
            return Err(Error::OutOfRange(format!("window start {start_s} s is negative")));
        }
        let start = seconds_to_samples(start_s, self.sample_rate_hz) as usize;
        let width = seconds_to_samples(length_s, self.sample_rate_hz) as usize;
        if width == 0 {
            return Err(Error::InvalidArgument(format!(
                "window of {length_s} s is shorter than one sample"
            )));
        }
        if start + width > self.n_samples() {
            return Err(Error::OutOfRange(format!(
                "samples {start}..{} exceed buffer of {} samples",
                start + width,
                self.n_samples()
            )));
        }
        Ok(self.samples.columns(start, width))
    }
}

/// Two-class motor imagery label, encoded LEFT = -1 and RIGHT = +1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassLabel {
    Left,
    Right,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 2] = [ClassLabel::Left, ClassLabel::Right];

    pub fn sign(self) -> i8 {
        match self {
            ClassLabel::Left => -1,
            ClassLabel::Right => 1,
        }
    }

    pub fn from_sign(sign: i8) -> Option<Self> {
        match sign {
            -1 => Some(ClassLabel::Left),
            1 => Some(ClassLabel::Right),
            _ => None,
        }
    }

    /// Row/column index in a confusion matrix.
    pub fn index(self) -> usize {
        match self {
            ClassLabel::Left => 0,
            ClassLabel::Right => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Left => "LEFT",
            ClassLabel::Right => "RIGHT",
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            ClassLabel::Left => ClassLabel::Right,
            ClassLabel::Right => ClassLabel::Left,
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Stimulation event kinds, with GDF-style numeric codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MarkerLabel {
    SessionStart,
    LeftCue,
    RightCue,
    Cross,
}

impl MarkerLabel {
    pub const ALL: [MarkerLabel; 4] = [
        MarkerLabel::SessionStart,
        MarkerLabel::LeftCue,
        MarkerLabel::RightCue,
        MarkerLabel::Cross,
    ];

    pub fn code(self) -> u32 {
        match self {
            MarkerLabel::SessionStart => 768,
            MarkerLabel::LeftCue => 769,
            MarkerLabel::RightCue => 770,
            MarkerLabel::Cross => 786,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            MarkerLabel::SessionStart => "SESSION_START",
            MarkerLabel::LeftCue => "LEFT_CUE",
            MarkerLabel::RightCue => "RIGHT_CUE",
            MarkerLabel::Cross => "CROSS",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == name)
    }

    /// The class a cue asks the subject to imagine, if any.
    pub fn class(self) -> Option<ClassLabel> {
        match self {
            MarkerLabel::LeftCue => Some(ClassLabel::Left),
            MarkerLabel::RightCue => Some(ClassLabel::Right),
            _ => None,
        }
    }

    pub fn cue_for(class: ClassLabel) -> Self {
        match class {
            ClassLabel::Left => MarkerLabel::LeftCue,
            ClassLabel::Right => MarkerLabel::RightCue,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Marker {
    pub time_s: f64,
    pub label: MarkerLabel,
}

impl Marker {
    pub fn new(time_s: f64, label: MarkerLabel) -> Self {
        Marker { time_s, label }
    }

    pub fn code(&self) -> u32 {
        self.label.code()
    }
}

/// Markers ordered by time, ties broken by ascending code.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MarkerStream {
    markers: Vec<Marker>,
}

impl MarkerStream {
    pub fn new(mut markers: Vec<Marker>) -> Result<Self> {
        for m in &markers {
            if !(m.time_s >= 0.0) || !m.time_s.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "marker time {} must be a nonnegative finite number",
                    m.time_s
                )));
            }
        }
        markers.sort_by(|a, b| a.time_s.total_cmp(&b.time_s).then(a.code().cmp(&b.code())));
        Ok(MarkerStream { markers })
    }

    pub fn as_slice(&self) -> &[Marker] {
        &self.markers
    }

    pub fn len(&self) -> usize {
        self.markers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.markers.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Marker> {
        self.markers.iter()
    }

    /// LEFT_CUE / RIGHT_CUE markers with their class.
    pub fn cues(&self) -> impl Iterator<Item = (f64, ClassLabel)> + '_ {
        self.markers
            .iter()
            .filter_map(|m| m.label.class().map(|c| (m.time_s, c)))
    }
}

impl<'a> IntoIterator for &'a MarkerStream {
    type Item = &'a Marker;
    type IntoIter = std::slice::Iter<'a, Marker>;

    fn into_iter(self) -> Self::IntoIter {
        self.markers.iter()
    }
}

/// A labelled, fixed-length multichannel trial cut around a cue.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub label: ClassLabel,
    pub data: Matrix,
    pub onset_s: f64,
}
