//! Sliding-window streaming classification, debouncing into hand commands,
//! and paced replay of a recorded session into a command sink.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::sync::mpsc::sync_channel;
use std::time::{Duration, Instant};

use crate::evaluate::{render_confusion, render_header, window_target, ConfusionMatrix, Decision, Pipeline, WindowConfig};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::types::{seconds_to_samples, ClassLabel, MarkerStream, SignalBuffer};

pub const DEFAULT_WINDOW_S: f64 = 1.0;
pub const DEFAULT_STEP_S: f64 = 0.25;
pub const DEFAULT_DEBOUNCE: usize = 3;
/// Windows buffered between the producer and the classifier.
const QUEUE_DEPTH: usize = 64;

/// One window of the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamWindow {
    pub index: usize,
    /// First sample of the window.
    pub start: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub data: Matrix,
}

/// Windows at `t = 0, step, 2 step, ...` while `t + window` fits in the buffer.
pub struct StreamWindows<'a> {
    buffer: &'a SignalBuffer,
    width: usize,
    step_s: f64,
    next: usize,
}

impl StreamWindows<'_> {
    pub fn width(&self) -> usize {
        self.width
    }

    fn start_of(&self, k: usize) -> usize {
        seconds_to_samples(k as f64 * self.step_s, self.buffer.sample_rate_hz()) as usize
    }
}

impl Iterator for StreamWindows<'_> {
    type Item = StreamWindow;

    fn next(&mut self) -> Option<StreamWindow> {
        let start = self.start_of(self.next);
        if start + self.width > self.buffer.n_samples() {
            return None;
        }
        let fs = self.buffer.sample_rate_hz();
        let w = StreamWindow {
            index: self.next,
            start,
            start_s: start as f64 / fs,
            end_s: (start + self.width) as f64 / fs,
            data: self.buffer.samples().columns(start, self.width),
        };
        self.next += 1;
        Some(w)
    }
}

pub fn stream_windows(buffer: &SignalBuffer, window_s: f64, step_s: f64) -> Result<StreamWindows<'_>> {
    if !(window_s > 0.0 && window_s.is_finite()) || !(step_s > 0.0 && step_s.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "window ({window_s} s) and step ({step_s} s) must be positive"
        )));
    }
    let fs = buffer.sample_rate_hz();
    let width = seconds_to_samples(window_s, fs) as usize;
    if seconds_to_samples(step_s, fs) < 1 || width < 2 {
        return Err(Error::InvalidArgument(format!(
            "window ({window_s} s) needs 2 samples and step ({step_s} s) one sample at {fs} Hz"
        )));
    }
    if width > buffer.n_samples() {
        return Err(Error::WindowTooLong {
            window_s,
            duration_s: buffer.duration_s(),
        });
    }
    Ok(StreamWindows {
        buffer,
        width,
        step_s,
        next: 0,
    })
}

/// Classifier output for one window, stamped at the window's end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionEvent {
    pub time_s: f64,
    pub label: ClassLabel,
    pub score: f64,
    pub feedback: f64,
}

impl DecisionEvent {
    fn from_decision(time_s: f64, d: Decision) -> Self {
        DecisionEvent {
            time_s,
            label: d.label,
            score: d.score,
            feedback: d.feedback,
        }
    }

    pub fn decision(&self) -> Decision {
        Decision {
            label: self.label,
            score: self.score,
            feedback: self.feedback,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OnlineResult {
    pub events: Vec<DecisionEvent>,
    /// Windows with zero total variance; they produce no event.
    pub degenerate: usize,
}

pub fn online_classify(windows: impl IntoIterator<Item = StreamWindow>, pipeline: &Pipeline) -> Result<OnlineResult> {
    let mut out = OnlineResult::default();
    for w in windows {
        match pipeline.decide(&w.data) {
            Ok(d) => out.events.push(DecisionEvent::from_decision(w.end_s, d)),
            Err(Error::DegenerateEpoch) => out.degenerate += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Command byte emitted for each class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommandMapping {
    pub left: u8,
    pub right: u8,
}

impl Default for CommandMapping {
    /// LEFT opens the hand, RIGHT closes it.
    fn default() -> Self {
        CommandMapping { left: b'a', right: b'q' }
    }
}

impl CommandMapping {
    pub fn swapped(self) -> Self {
        CommandMapping {
            left: self.right,
            right: self.left,
        }
    }

    pub fn byte_for(&self, label: ClassLabel) -> u8 {
        match label {
            ClassLabel::Left => self.left,
            ClassLabel::Right => self.right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandEvent {
    pub time_s: f64,
    pub byte: u8,
}

/// Emits a command once `k` consecutive events agree and the command differs
/// from the previous one emitted.
#[derive(Debug, Clone)]
pub struct Debouncer {
    k: usize,
    mapping: CommandMapping,
    run_label: Option<ClassLabel>,
    run_length: usize,
    last_emitted: Option<u8>,
}

impl Debouncer {
    pub fn new(k: usize, mapping: CommandMapping) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("debounce must be at least 1".into()));
        }
        Ok(Debouncer {
            k,
            mapping,
            run_label: None,
            run_length: 0,
            last_emitted: None,
        })
    }

    pub fn push(&mut self, event: &DecisionEvent) -> Option<CommandEvent> {
        if self.run_label == Some(event.label) {
            self.run_length += 1;
        } else {
            self.run_label = Some(event.label);
            self.run_length = 1;
        }
        if self.run_length < self.k {
            return None;
        }
        let byte = self.mapping.byte_for(event.label);
        if self.last_emitted == Some(byte) {
            return None;
        }
        self.last_emitted = Some(byte);
        Some(CommandEvent {
            time_s: event.time_s,
            byte,
        })
    }
}

pub fn decide_command(events: &[DecisionEvent], debounce_k: usize, mapping: CommandMapping) -> Result<Vec<CommandEvent>> {
    let mut d = Debouncer::new(debounce_k, mapping)?;
    Ok(events.iter().filter_map(|e| d.push(e)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pacing {
    /// Release each window as soon as the classifier is ready.
    Fast,
    /// Release each window when its end time has elapsed, scaled by `speed`.
    Realtime { speed: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayConfig {
    pub window_s: f64,
    pub step_s: f64,
    pub debounce: usize,
    pub mapping: CommandMapping,
    pub pacing: Pacing,
    /// Cue-relative interval windows are scored against.
    pub scoring: WindowConfig,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            window_s: DEFAULT_WINDOW_S,
            step_s: DEFAULT_STEP_S,
            debounce: DEFAULT_DEBOUNCE,
            mapping: CommandMapping::default(),
            pacing: Pacing::Realtime { speed: 1.0 },
            scoring: WindowConfig::default(),
        }
    }
}

/// Wall-clock release statistics (all zero in fast mode).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PacingStats {
    pub windows: usize,
    /// Windows released before their scheduled time.
    pub early: usize,
    pub max_lag_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplaySummary {
    pub events: Vec<DecisionEvent>,
    /// Cue class of each event's window, when it lies in a scored interval.
    pub targets: Vec<Option<ClassLabel>>,
    pub commands: Vec<CommandEvent>,
    pub per_window: ConfusionMatrix,
    pub degenerate: usize,
    pub pacing: PacingStats,
    /// Set when the replay stopped before the end of the recording.
    pub partial: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("command sink disconnected after {} commands: {source}", .summary.commands.len())]
    SinkDisconnected {
        summary: Box<ReplaySummary>,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Pipeline(#[from] Error),
}

impl ReplayError {
    pub fn code(&self) -> &'static str {
        match self {
            ReplayError::SinkDisconnected { .. } => "SINK_DISCONNECTED",
            ReplayError::Pipeline(e) => e.code(),
        }
    }
}

struct Released {
    window: StreamWindow,
    lag_s: f64,
    early: bool,
}

/// Streams an already band-passed recording through the pipeline, writing one
/// byte per emitted command to `sink`. The decision and command sequences do
/// not depend on the pacing.
pub fn run_replay(
    filtered: &SignalBuffer,
    markers: &MarkerStream,
    pipeline: &Pipeline,
    config: &ReplayConfig,
    sink: &mut dyn Write,
) -> std::result::Result<ReplaySummary, ReplayError> {
    if let Pacing::Realtime { speed } = config.pacing {
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(Error::InvalidArgument(format!("speed must be positive, got {speed}")).into());
        }
    }
    if pipeline.csp.n_channels() != filtered.n_channels() {
        return Err(Error::DimMismatch(format!(
            "model expects {} channels, recording has {}",
            pipeline.csp.n_channels(),
            filtered.n_channels()
        ))
        .into());
    }
    let windows = stream_windows(filtered, config.window_s, config.step_s)?;
    let width = windows.width();
    let fs = filtered.sample_rate_hz();
    let mut debouncer = Debouncer::new(config.debounce, config.mapping)?;
    let mut summary = ReplaySummary::default();
    let pacing = config.pacing;

    std::thread::scope(|s| {
        let (tx, rx) = sync_channel::<Released>(QUEUE_DEPTH);
        s.spawn(move || {
            let origin = Instant::now();
            for window in windows {
                let (lag_s, early) = match pacing {
                    Pacing::Fast => (0.0, false),
                    Pacing::Realtime { speed } => {
                        let due = origin + Duration::from_secs_f64(window.end_s / speed);
                        let now = Instant::now();
                        if now < due {
                            std::thread::sleep(due - now);
                        }
                        let released = Instant::now();
                        (released.saturating_duration_since(due).as_secs_f64(), released < due)
                    }
                };
                if tx.send(Released { window, lag_s, early }).is_err() {
                    break;
                }
            }
        });

        for r in rx {
            if let Pacing::Realtime { .. } = pacing {
                summary.pacing.windows += 1;
                summary.pacing.early += usize::from(r.early);
                summary.pacing.max_lag_s = summary.pacing.max_lag_s.max(r.lag_s);
            }
            let decision = match pipeline.decide(&r.window.data) {
                Ok(d) => d,
                Err(Error::DegenerateEpoch) => {
                    summary.degenerate += 1;
                    continue;
                }
                Err(e) => {
                    summary.partial = true;
                    return Err(ReplayError::Pipeline(e));
                }
            };
            let event = DecisionEvent::from_decision(r.window.end_s, decision);
            let target = window_target(markers, r.window.start, width, fs, &config.scoring);
            if let Some(t) = target {
                summary.per_window.record(t, event.label);
            }
            summary.events.push(event);
            summary.targets.push(target);
            if let Some(cmd) = debouncer.push(&event) {
                log::info!("t={:.3}s command '{}'", cmd.time_s, cmd.byte as char);
                if let Err(source) = sink.write_all(&[cmd.byte]).and_then(|_| sink.flush()) {
                    summary.partial = true;
                    return Err(ReplayError::SinkDisconnected {
                        summary: Box::new(std::mem::take(&mut summary)),
                        source,
                    });
                }
                summary.commands.push(cmd);
            }
        }
        Ok(())
    })?;
    Ok(summary)
}

/// Writes every byte to each inner sink in turn.
pub struct Tee {
    sinks: Vec<Box<dyn Write>>,
}

impl Tee {
    pub fn new(sinks: Vec<Box<dyn Write>>) -> Self {
        Tee { sinks }
    }
}

impl Write for Tee {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        for s in &mut self.sinks {
            s.write_all(buf)?;
        }
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        self.sinks.iter_mut().try_for_each(|s| s.flush())
    }
}

/// Text report: settings header, per-window confusion and the command log.
pub fn render_replay_report(summary: &ReplaySummary, settings: &[(&str, String)]) -> String {
    let mut s = render_header("replay report", settings);
    if summary.partial {
        let _ = writeln!(s, "status: PARTIAL (replay aborted)");
    } else {
        let _ = writeln!(s, "status: complete");
    }
    let _ = writeln!(s, "windows classified: {}", summary.events.len());
    let _ = writeln!(s, "degenerate windows: {}", summary.degenerate);
    if summary.pacing.windows > 0 {
        let _ = writeln!(
            s,
            "pacing: {} windows, {} early, max lag {:.1} ms",
            summary.pacing.windows,
            summary.pacing.early,
            summary.pacing.max_lag_s * 1e3
        );
    }
    s.push_str(&render_confusion("per-window confusion (windows inside scored cue intervals)", &summary.per_window));
    let _ = writeln!(s, "commands: {}", summary.commands.len());
    for c in &summary.commands {
        let _ = writeln!(s, "  {:.3} {}", c.time_s, c.byte as char);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::default_channel_names;
    use ClassLabel::{Left, Right};

    fn buffer(seconds: usize) -> SignalBuffer {
        let n = 128 * seconds;
        let data: Vec<f64> = (0..2 * n).map(|i| ((i * 7919) % 101) as f64 - 50.0).collect();
        SignalBuffer::new(128.0, default_channel_names(2), Matrix::from_vec(2, n, data).unwrap()).unwrap()
    }

    fn events(labels: &[ClassLabel]) -> Vec<DecisionEvent> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &label)| DecisionEvent {
                time_s: 1.0 + i as f64 * 0.25,
                label,
                score: label.sign() as f64,
                feedback: 0.0,
            })
            .collect()
    }

    #[test]
    fn window_counts() {
        let b = buffer(8);
        let w: Vec<StreamWindow> = stream_windows(&b, 1.0, 0.25).unwrap().collect();
        assert_eq!(w.len(), 29);
        assert_eq!(w[1].start, 32);
        assert_eq!(w[28].end_s, 8.0);
        assert_eq!(stream_windows(&b, 8.0, 0.25).unwrap().count(), 1);
        assert!(matches!(stream_windows(&b, 8.5, 0.25), Err(Error::WindowTooLong { .. })));
    }

    #[test]
    fn debounce_rules() {
        let m = CommandMapping::default();
        let c = decide_command(&events(&[Left, Left, Left]), 3, m).unwrap();
        assert_eq!(c, vec![CommandEvent { time_s: 1.5, byte: b'a' }]);

        let alternating: Vec<ClassLabel> = (0..20).map(|i| if i % 2 == 0 { Left } else { Right }).collect();
        assert!(decide_command(&events(&alternating), 3, m).unwrap().is_empty());

        let c = decide_command(&events(&[Left, Left, Left, Left, Left, Right, Right, Right]), 3, m).unwrap();
        let bytes: Vec<u8> = c.iter().map(|c| c.byte).collect();
        assert_eq!(bytes, b"aq");
        assert_eq!(c[1].time_s, 1.0 + 7.0 * 0.25);

        let c = decide_command(&events(&[Right]), 1, m.swapped()).unwrap();
        assert_eq!(c[0].byte, b'a');
        assert!(decide_command(&[], 0, m).is_err());
    }

    #[test]
    fn empty_stream_has_no_events() {
        let csp = crate::csp::CspModel::new(Matrix::identity(2), vec![0.9, 0.1], default_channel_names(2), 1, 1e-9).unwrap();
        let lda = crate::classify::LdaModel::new(vec![1.0, -1.0], 0.0, 1.0).unwrap();
        let p = Pipeline::new(csp, lda).unwrap();
        assert_eq!(online_classify(Vec::new(), &p).unwrap(), OnlineResult::default());
    }

    #[test]
    fn tee_writes_everywhere() {
        let a = std::rc::Rc::new(std::cell::RefCell::new(Vec::new()));
        struct Shared(std::rc::Rc<std::cell::RefCell<Vec<u8>>>);
        impl Write for Shared {
            fn write(&mut self, b: &[u8]) -> io::Result<usize> {
                self.0.borrow_mut().extend_from_slice(b);
                Ok(b.len())
            }
            fn flush(&mut self) -> io::Result<()> {
                Ok(())
            }
        }
        let mut t = Tee::new(vec![Box::new(Shared(a.clone())), Box::new(Shared(a.clone()))]);
        t.write_all(b"q").unwrap();
        assert_eq!(a.borrow().as_slice(), b"qq");
    }
}
