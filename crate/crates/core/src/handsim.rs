//! Simulated five-servo hand driven by single-byte serial commands.
//!
//! `q` closes the whole hand, `a` opens it, `w` closes finger one (the thumb)
//! and `s` opens it. Any other byte is ignored.

use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};

pub const OPEN_DEG: f64 = 0.0;
pub const CLOSED_DEG: f64 = 180.0;
pub const SERVOS: usize = 5;
const ACCEPT_POLL: Duration = Duration::from_millis(20);

/// Servo set-points in degrees, finger one first. Starts fully open.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HandState {
    pub servo_deg: [f64; SERVOS],
}

impl HandState {
    pub fn open() -> Self {
        HandState {
            servo_deg: [OPEN_DEG; SERVOS],
        }
    }
}

/// Whether `byte` is one of the four protocol commands.
pub fn is_command(byte: u8) -> bool {
    matches!(byte, b'q' | b'a' | b'w' | b's')
}

pub fn apply_command(state: HandState, byte: u8) -> HandState {
    let mut s = state;
    match byte {
        b'q' => s.servo_deg = [CLOSED_DEG; SERVOS],
        b'a' => s.servo_deg = [OPEN_DEG; SERVOS],
        b'w' => s.servo_deg[0] = CLOSED_DEG,
        b's' => s.servo_deg[0] = OPEN_DEG,
        _ => log::debug!("ignoring byte 0x{byte:02x}"),
    }
    s
}

/// Byte as shown in the trace: the character when printable, `0xNN` otherwise.
pub fn display_byte(byte: u8) -> String {
    if byte.is_ascii_graphic() {
        (byte as char).to_string()
    } else {
        format!("0x{byte:02x}")
    }
}

/// `<epoch_ms> <byte> <s1> <s2> <s3> <s4> <s5>`
pub fn trace_line(epoch_ms: u128, byte: u8, state: &HandState) -> String {
    let servos: Vec<String> = state.servo_deg.iter().map(|d| d.to_string()).collect();
    format!("{epoch_ms} {} {}", display_byte(byte), servos.join(" "))
}

fn epoch_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

/// Hand state plus the trace it appends one line per received byte to.
pub struct HandSimulator {
    state: HandState,
    trace: Option<Box<dyn Write + Send>>,
    bytes_received: u64,
}

impl HandSimulator {
    pub fn new(trace: Option<Box<dyn Write + Send>>) -> Self {
        HandSimulator {
            state: HandState::open(),
            trace,
            bytes_received: 0,
        }
    }

    pub fn state(&self) -> HandState {
        self.state
    }

    pub fn bytes_received(&self) -> u64 {
        self.bytes_received
    }

    pub fn feed(&mut self, bytes: &[u8]) -> io::Result<()> {
        for &b in bytes {
            self.state = apply_command(self.state, b);
            self.bytes_received += 1;
            if let Some(t) = self.trace.as_mut() {
                writeln!(t, "{}", trace_line(epoch_ms(), b, &self.state))?;
            }
        }
        if let Some(t) = self.trace.as_mut() {
            t.flush()?;
        }
        Ok(())
    }

    /// Feeds everything `reader` yields until end of stream.
    pub fn run_reader<R: Read>(&mut self, mut reader: R) -> io::Result<()> {
        let mut buf = [0u8; 256];
        loop {
            match reader.read(&mut buf) {
                Ok(0) => return Ok(()),
                Ok(n) => self.feed(&buf[..n])?,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e),
            }
        }
    }
}

pub fn bind(endpoint: &str) -> Result<TcpListener> {
    let addrs: Vec<_> = endpoint
        .to_socket_addrs()
        .map_err(|source| Error::BindFailed {
            endpoint: endpoint.to_string(),
            source,
        })?
        .collect();
    TcpListener::bind(&addrs[..]).map_err(|source| Error::BindFailed {
        endpoint: endpoint.to_string(),
        source,
    })
}

/// Serves one connection at a time, keeping the hand state across
/// connections, until `shutdown` is set or, with `once`, the first client
/// disconnects. Connection errors are logged and the next client awaited.
pub fn run_server(listener: &TcpListener, sim: &mut HandSimulator, shutdown: &AtomicBool, once: bool) -> Result<()> {
    listener.set_nonblocking(true)?;
    while !shutdown.load(Ordering::SeqCst) {
        let stream = match listener.accept() {
            Ok((stream, peer)) => {
                log::info!("client connected from {peer}");
                stream
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                std::thread::sleep(ACCEPT_POLL);
                continue;
            }
            Err(e) => {
                log::error!("accept failed: {e}");
                continue;
            }
        };
        if let Err(e) = serve(stream, sim, shutdown) {
            log::error!("connection error: {e}");
        }
        log::info!("client disconnected, {} bytes so far", sim.bytes_received());
        if once {
            break;
        }
    }
    Ok(())
}

fn serve(mut stream: TcpStream, sim: &mut HandSimulator, shutdown: &AtomicBool) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(Duration::from_millis(100)))?;
    let mut buf = [0u8; 256];
    while !shutdown.load(Ordering::SeqCst) {
        match stream.read(&mut buf) {
            Ok(0) => return Ok(()),
            Ok(n) => sim.feed(&buf[..n])?,
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut | io::ErrorKind::Interrupted) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(())
}
