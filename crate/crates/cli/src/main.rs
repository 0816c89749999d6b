//! `mibci`: synthesize, train, evaluate and replay motor-imagery sessions, and
//! run the simulated hand.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;

use clap::{Args, Parser, Subcommand};

use mibci_core::evaluate::{evaluate_windowed, render_confusion, render_header, write_window_csv, DEFAULT_FOLDS};
use mibci_core::handsim::{self, HandSimulator};
use mibci_core::io::{load_csp_model, load_lda_model, read_markers_csv, read_signal_csv, save_csp_model, save_lda_model, write_markers_csv, write_signal_csv};
use mibci_core::online::{render_replay_report, run_replay, Tee, DEFAULT_DEBOUNCE, DEFAULT_STEP_S, DEFAULT_WINDOW_S};
use mibci_core::preprocess::{apply_filter, design_bandpass, extract_epochs};
use mibci_core::synthgen::{generate_session, parse_session_spec};
use mibci_core::{CommandMapping, ConfusionMatrix, Error, MarkerStream, Pacing, Pipeline, ReplayConfig, ReplayError, SignalBuffer, WindowConfig};

const EXIT_USAGE: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_CONNECTION: u8 = 4;

#[derive(Parser)]
#[command(name = "mibci", version, about = "Motor-imagery CSP + LDA pipeline and simulated prosthetic hand")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic session from a session file.
    Synth(SynthArgs),
    /// Train CSP + LDA models on a recorded session.
    Train(TrainArgs),
    /// Cross-validate the pipeline on a recorded session.
    Evaluate(EvaluateArgs),
    /// Stream a recorded session through trained models into a command sink.
    Replay(ReplayArgs),
    /// Run the simulated five-servo hand.
    HandSim(HandSimArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Session file (`key=value` lines).
    spec: PathBuf,
    #[arg(long, default_value = "signal.csv")]
    signal_out: PathBuf,
    #[arg(long, default_value = "markers.csv")]
    markers_out: PathBuf,
    /// Overrides the seed in the session file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SessionArgs {
    #[arg(long)]
    signal: PathBuf,
    #[arg(long)]
    markers: PathBuf,
    /// Pass band in Hz as `low,high`.
    #[arg(long, default_value = "8,30", value_parser = parse_band)]
    band: (f64, f64),
    /// Number of filter poles.
    #[arg(long, default_value_t = 4)]
    order: usize,
    /// Start of the scored interval after each cue, seconds.
    #[arg(long, default_value_t = 0.5)]
    window_offset: f64,
    /// Length of the scored interval, seconds.
    #[arg(long, default_value_t = 3.0)]
    window_length: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    session: SessionArgs,
    /// CSP filter pairs.
    #[arg(long, default_value_t = 2)]
    pairs: usize,
    #[arg(long, default_value = "csp.model")]
    csp_out: PathBuf,
    #[arg(long, default_value = "lda.model")]
    lda_out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    session: SessionArgs,
    #[arg(long, default_value_t = 2)]
    pairs: usize,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    /// Sliding window length, seconds.
    #[arg(long, default_value_t = DEFAULT_WINDOW_S)]
    window: f64,
    /// Sliding window step, seconds.
    #[arg(long, default_value_t = DEFAULT_STEP_S)]
    step: f64,
    /// Text report path; the report always goes to stdout as well.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    windows_csv: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    session: SessionArgs,
    #[arg(long)]
    csp: PathBuf,
    #[arg(long)]
    lda: PathBuf,
    #[arg(long, default_value_t = DEFAULT_WINDOW_S)]
    window: f64,
    #[arg(long, default_value_t = DEFAULT_STEP_S)]
    step: f64,
    /// Consecutive agreeing windows required per command.
    #[arg(long, default_value_t = DEFAULT_DEBOUNCE)]
    debounce: usize,
    /// Release windows without wall-clock pacing.
    #[arg(long, conflicts_with = "speed")]
    fast: bool,
    /// Realtime pacing speed-up factor.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Hand simulator endpoint, `host:port`.
    #[arg(long)]
    connect: Option<String>,
    /// File receiving the command bytes.
    #[arg(long)]
    capture: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    windows_csv: Option<PathBuf>,
    /// Map LEFT to close ('q') and RIGHT to open ('a').
    #[arg(long)]
    swap_mapping: bool,
}

#[derive(Args)]
struct HandSimArgs {
    /// TCP port to listen on (0 picks a free port).
    #[arg(long, conflicts_with = "stdin", required_unless_present = "stdin")]
    listen: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Read commands from standard input instead of TCP.
    #[arg(long)]
    stdin: bool,
    /// Trace file, one line per received byte; stdout when absent.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Exit after the first client disconnects.
    #[arg(long)]
    once: bool,
}

fn parse_band(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected `low,high`")?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok((parse(lo)?, parse(hi)?))
}

struct Failure {
    exit: u8,
    code: &'static str,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            exit: EXIT_USAGE,
            code: "INVALID_ARG",
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let exit = match e {
            Error::EmptyResult { .. }
            | Error::ZeroSignal
            | Error::TooFewTrials(_)
            | Error::TooFewSamples(_)
            | Error::NumericFailure(_)
            | Error::RankDeficient { .. }
            | Error::Singular
            | Error::DegenerateEpoch
            | Error::Unstable
            | Error::Empty => EXIT_NUMERIC,
            _ => EXIT_USAGE,
        };
        Failure {
            exit,
            code: e.code(),
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::Io(e).into()
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn with_path<T>(path: &Path, r: mibci_core::Result<T>) -> CliResult<T> {
    r.map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::from(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_text(path: &Path, text: &str) -> CliResult {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BCI_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Replay(a) => replay(a),
        Command::HandSim(a) => hand_sim(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error [{}]: {}", f.code, f.message);
            ExitCode::from(f.exit)
        }
    }
}

fn synth(a: SynthArgs) -> CliResult {
    let text = fs::read_to_string(&a.spec).map_err(|e| Failure {
        exit: EXIT_USAGE,
        code: "INVALID_SPEC",
        message: format!("{}: {e}", a.spec.display()),
    })?;
    let base = a.spec.parent().unwrap_or(Path::new("."));
    let mut spec = with_path(&a.spec, parse_session_spec(&text, base))?;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let (signal, markers) = with_path(&a.spec, generate_session(&spec))?;
    write_signal_csv(&signal, &a.signal_out)?;
    write_markers_csv(&markers, &a.markers_out)?;
    log::info!(
        "wrote {} samples x {} channels and {} markers",
        signal.n_samples(),
        signal.n_channels(),
        markers.len()
    );
    Ok(())
}

/// Loaded and band-passed session.
struct Session {
    filtered: SignalBuffer,
    markers: MarkerStream,
}

impl SessionArgs {
    fn validate(&self) -> CliResult {
        let (lo, hi) = self.band;
        if !(lo > 0.0 && lo < hi) {
            return Err(Failure::usage(format!("band {lo},{hi}: need 0 < low < high")));
        }
        if self.order == 0 || self.order % 2 != 0 {
            return Err(Failure::usage(format!("order {} must be even and positive", self.order)));
        }
        if !(self.window_length > 0.0) || !(self.window_offset >= 0.0) {
            return Err(Failure::usage("window length must be positive and offset nonnegative"));
        }
        Ok(())
    }

    fn load(&self) -> CliResult<Session> {
        let signal = with_path(&self.signal, read_signal_csv(&self.signal))?;
        let markers = with_path(&self.markers, read_markers_csv(&self.markers))?;
        let coeffs = design_bandpass(self.band.0, self.band.1, self.order, signal.sample_rate_hz())?;
        let filtered = apply_filter(&coeffs, &signal)?;
        Ok(Session { filtered, markers })
    }

    fn settings(&self) -> Vec<(&'static str, String)> {
        vec![
            ("signal", self.signal.display().to_string()),
            ("markers", self.markers.display().to_string()),
            ("band_hz", format!("{},{}", self.band.0, self.band.1)),
            ("order", self.order.to_string()),
            ("window_offset_s", self.window_offset.to_string()),
            ("window_length_s", self.window_length.to_string()),
        ]
    }
}

fn check_pairs(pairs: usize, channels: usize) -> CliResult {
    if pairs == 0 || 2 * pairs > channels {
        return Err(Failure::usage(format!(
            "--pairs {pairs}: need 1 <= 2*pairs <= {channels} channels"
        )));
    }
    Ok(())
}

fn train(a: TrainArgs) -> CliResult {
    a.session.validate()?;
    let s = a.session.load()?;
    check_pairs(a.pairs, s.filtered.n_channels())?;
    let set = extract_epochs(&s.filtered, &s.markers, a.session.window_offset, a.session.window_length)?;
    let pipeline = Pipeline::train(&set.epochs, a.pairs, s.filtered.channel_names())?;
    let mut cm = ConfusionMatrix::default();
    for e in &set.epochs {
        cm.record(e.label, pipeline.decide(&e.data)?.label);
    }
    let saved = save_csp_model(&pipeline.csp, &a.csp_out).and_then(|()| save_lda_model(&pipeline.lda, &a.lda_out));
    if let Err(e) = saved {
        let _ = fs::remove_file(&a.csp_out);
        let _ = fs::remove_file(&a.lda_out);
        return Err(e.into());
    }
    let mut settings = a.session.settings();
    settings.push(("pairs", a.pairs.to_string()));
    settings.push(("epochs", set.epochs.len().to_string()));
    settings.push(("skipped_cues", set.skipped.to_string()));
    settings.push(("csp_out", a.csp_out.display().to_string()));
    settings.push(("lda_out", a.lda_out.display().to_string()));
    print!("{}", render_header("training report", &settings));
    print!("{}", render_confusion("training-set confusion (per epoch)", &cm));
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> CliResult {
    a.session.validate()?;
    if a.folds < 2 {
        return Err(Failure::usage(format!("--folds {} must be at least 2", a.folds)));
    }
    let s = a.session.load()?;
    check_pairs(a.pairs, s.filtered.n_channels())?;
    let config = WindowConfig {
        epoch_offset_s: a.session.window_offset,
        epoch_length_s: a.session.window_length,
        window_s: a.window,
        step_s: a.step,
    };
    let r = evaluate_windowed(&s.filtered, &s.markers, a.pairs, a.folds, &config)?;
    let mut settings = a.session.settings();
    settings.extend([
        ("pairs", a.pairs.to_string()),
        ("folds", a.folds.to_string()),
        ("window_s", a.window.to_string()),
        ("step_s", a.step.to_string()),
        ("skipped_cues", r.skipped_cues.to_string()),
    ]);
    let mut report = render_header("evaluation report", &settings);
    report.push_str(&render_confusion("per-window confusion (held-out)", &r.per_window));
    report.push_str(&render_confusion("per-cue confusion (sign of mean window score)", &r.per_cue));
    report.push_str(&render_confusion("per-epoch confusion (held-out)", &r.per_epoch));
    print!("{report}");
    if let Some(path) = &a.report {
        write_text(path, &report)?;
    }
    if let Some(path) = &a.windows_csv {
        write_window_csv(create(path)?, r.windows.iter().map(|w| (w.time_s, Some(w.target), &w.decision)))?;
    }
    Ok(())
}

fn replay(a: ReplayArgs) -> CliResult {
    a.session.validate()?;
    if a.debounce == 0 {
        return Err(Failure::usage("--debounce must be at least 1"));
    }
    if !a.fast && !(a.speed > 0.0 && a.speed.is_finite()) {
        return Err(Failure::usage(format!("--speed {} must be positive", a.speed)));
    }
    let csp = with_path(&a.csp, load_csp_model(&a.csp))?;
    let lda = with_path(&a.lda, load_lda_model(&a.lda))?;
    let pipeline = Pipeline::new(csp, lda)?;
    let s = a.session.load()?;

    let mut sinks: Vec<Box<dyn Write>> = Vec::new();
    if let Some(endpoint) = &a.connect {
        let stream = TcpStream::connect(endpoint).map_err(|e| Failure {
            exit: EXIT_CONNECTION,
            code: "CONNECT_FAILED",
            message: format!("{endpoint}: {e}"),
        })?;
        stream.set_nodelay(true)?;
        sinks.push(Box::new(stream));
    }
    if let Some(path) = &a.capture {
        sinks.push(Box::new(create(path)?));
    }
    let mut sink = Tee::new(sinks);

    let mapping = if a.swap_mapping {
        CommandMapping::default().swapped()
    } else {
        CommandMapping::default()
    };
    let config = ReplayConfig {
        window_s: a.window,
        step_s: a.step,
        debounce: a.debounce,
        mapping,
        pacing: if a.fast { Pacing::Fast } else { Pacing::Realtime { speed: a.speed } },
        scoring: WindowConfig {
            epoch_offset_s: a.session.window_offset,
            epoch_length_s: a.session.window_length,
            window_s: a.window,
            step_s: a.step,
        },
    };
    let outcome = run_replay(&s.filtered, &s.markers, &pipeline, &config, &mut sink);
    drop(sink);
    let (summary, failure) = match outcome {
        Ok(summary) => (summary, None),
        Err(ReplayError::SinkDisconnected { summary, source }) => {
            let f = Failure {
                exit: EXIT_CONNECTION,
                code: "SINK_DISCONNECTED",
                message: format!("command sink disconnected after {} commands: {source}", summary.commands.len()),
            };
            (*summary, Some(f))
        }
        Err(ReplayError::Pipeline(e)) => return Err(e.into()),
    };

    let mut settings = a.session.settings();
    settings.extend([
        ("csp", a.csp.display().to_string()),
        ("lda", a.lda.display().to_string()),
        ("window_s", a.window.to_string()),
        ("step_s", a.step.to_string()),
        ("debounce", a.debounce.to_string()),
        ("pacing", if a.fast { "fast".to_string() } else { format!("realtime x{}", a.speed) }),
        ("mapping", format!("LEFT={} RIGHT={}", mapping.left as char, mapping.right as char)),
        ("connect", a.connect.clone().unwrap_or_else(|| "none".into())),
        ("capture", a.capture.as_ref().map_or("none".into(), |p| p.display().to_string())),
    ]);
    let report = render_replay_report(&summary, &settings);
    print!("{report}");
    if let Some(path) = &a.report {
        write_text(path, &report)?;
    }
    if let Some(path) = &a.windows_csv {
        let rows = summary.events.iter().zip(&summary.targets);
        let decisions: Vec<_> = rows.map(|(e, t)| (e.time_s, *t, e.decision())).collect();
        write_window_csv(create(path)?, decisions.iter().map(|(t, target, d)| (*t, *target, d)))?;
    }
    failure.map_or(Ok(()), Err)
}

fn hand_sim(a: HandSimArgs) -> CliResult {
    let trace: Box<dyn Write + Send> = match &a.trace {
        Some(path) => Box::new(create(path)?),
        None => Box::new(io::stdout()),
    };
    let mut sim = HandSimulator::new(Some(trace));
    if a.stdin {
        sim.run_reader(io::stdin().lock())?;
    } else {
        let port = a.listen.expect("clap requires --listen without --stdin");
        let listener = handsim::bind(&format!("{}:{port}", a.host))?;
        let mut out = io::stdout().lock();
        writeln!(out, "listening on {}", listener.local_addr()?)?;
        out.flush()?;
        drop(out);
        handsim::run_server(&listener, &mut sim, &AtomicBool::new(false), a.once)?;
    }
    let servos: Vec<String> = sim.state().servo_deg.iter().map(|d| d.to_string()).collect();
    eprintln!("final state: {} ({} bytes)", servos.join(" "), sim.bytes_received());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_parsing() {
        assert_eq!(parse_band("8,30"), Ok((8.0, 30.0)));
        assert_eq!(parse_band(" 1.5 , 40 "), Ok((1.5, 40.0)));
        assert!(parse_band("8").is_err());
        assert!(parse_band("8,x").is_err());
    }

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(Failure::from(Error::TooFewTrials("x".into())).exit, EXIT_NUMERIC);
        assert_eq!(Failure::from(Error::Singular).exit, EXIT_NUMERIC);
        assert_eq!(Failure::from(Error::InvalidSpec("x".into())).exit, EXIT_USAGE);
        assert_eq!(Failure::from(Error::VersionMismatch("x".into())).exit, EXIT_USAGE);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
