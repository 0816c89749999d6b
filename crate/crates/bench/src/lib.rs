//! Shared inputs for the benchmarks.

use mibci_core::preprocess::{extract_epochs, DEFAULT_EPOCH_LENGTH_S, DEFAULT_EPOCH_OFFSET_S};
use mibci_core::synthgen::generate_session;
use mibci_core::{Epoch, Matrix, MarkerStream, SessionSpec, SignalBuffer, Xorshift64Star};

/// A band-passed 14-channel session with well-separated classes.
pub fn session(n_cues: usize, seed: u64) -> (SignalBuffer, MarkerStream) {
    let spec = SessionSpec {
        n_cues,
        ..SessionSpec::separated(14, 4.0, seed)
    };
    generate_session(&spec).expect("fixture spec is valid")
}

pub fn epochs(n_cues: usize, seed: u64) -> Vec<Epoch> {
    let (signal, markers) = session(n_cues, seed);
    extract_epochs(&signal, &markers, DEFAULT_EPOCH_OFFSET_S, DEFAULT_EPOCH_LENGTH_S)
        .expect("fixture has cues")
        .epochs
}

/// A random symmetric positive definite `n x n` matrix.
pub fn spd(n: usize, seed: u64) -> Matrix {
    let mut rng = Xorshift64Star::new(seed);
    let mut a = Matrix::zeros(n, 2 * n);
    for i in 0..n {
        for j in 0..2 * n {
            a[(i, j)] = rng.next_gaussian();
        }
    }
    a.gram()
}
