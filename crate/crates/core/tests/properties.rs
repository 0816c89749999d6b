mod support;

use proptest::prelude::*;

use mibci_core::classify::{log_variance_features, LdaModel};
use mibci_core::csp::{composite_eigendecomposition, normalized_covariance, train_csp, train_csp_detailed};
use mibci_core::eigen::symmetric_eigen;
use mibci_core::evaluate::{confusion, feedback_strength, stratified_folds};
use mibci_core::handsim::{apply_command, HandState};
use mibci_core::io::{read_csp_model, read_lda_model, read_markers, read_signal, write_csp_model, write_lda_model, write_markers, write_signal};
use mibci_core::online::{decide_command, stream_windows, CommandMapping, DecisionEvent};
use mibci_core::preprocess::{design_bandpass, filter_into, is_stable};
use mibci_core::types::default_channel_names;
use mibci_core::{ClassLabel, Epoch, Marker, MarkerLabel, MarkerStream, Matrix, SignalBuffer, Xorshift64Star};

use support::oracle;

fn gaussian(rows: usize, cols: usize, rng: &mut Xorshift64Star) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.next_gaussian();
        }
    }
    m
}

fn spd(n: usize, rng: &mut Xorshift64Star) -> Matrix {
    let a = gaussian(n, n + 3, rng);
    let mut g = a.gram();
    g.add_diagonal(0.1);
    g.scale(1.0 / g.trace())
}

fn labelled_epochs(n: usize, per_class: usize, samples: usize, seed: u64) -> Vec<Epoch> {
    let mut rng = Xorshift64Star::new(seed);
    let mix = [gaussian(n, n, &mut rng), gaussian(n, n, &mut rng)];
    (0..2 * per_class)
        .map(|i| {
            let label = if i % 2 == 0 { ClassLabel::Left } else { ClassLabel::Right };
            Epoch {
                label,
                data: mix[label.index()].matmul(&gaussian(n, samples, &mut rng)),
                onset_s: 0.0,
            }
        })
        .collect()
}

fn label(b: bool) -> ClassLabel {
    if b {
        ClassLabel::Right
    } else {
        ClassLabel::Left
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn normalized_covariance_is_unit_trace_symmetric_psd(seed in any::<u64>(), n in 2usize..10, samples in 2usize..80) {
        let mut rng = Xorshift64Star::new(seed);
        let scale = 10f64.powf(rng.next_f64() * 8.0 - 4.0);
        let trial = gaussian(n, samples, &mut rng).scale(scale);
        let c = normalized_covariance(&trial).unwrap().matrix;
        prop_assert!((c.trace() - 1.0).abs() <= 1e-9);
        prop_assert!(c.asymmetry() <= 1e-12);
        let min = symmetric_eigen(&c).unwrap().values.last().copied().unwrap();
        prop_assert!(min >= -1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn composite_decomposition_reconstructs(seed in any::<u64>(), n in 2usize..15) {
        let mut rng = Xorshift64Star::new(seed);
        let (l, r) = (spd(n, &mut rng), spd(n, &mut rng));
        let anc = l.add(&r);
        let d = composite_eigendecomposition(&l, &r).unwrap();
        let rebuilt = d.m0.matmul(&Matrix::from_diag(&d.sigma)).matmul(&d.m0.transpose());
        prop_assert!(rebuilt.sub(&anc).frobenius_norm() / anc.frobenius_norm() < 1e-9);
    }

    #[test]
    fn jacobi_matches_classical_oracle(seed in any::<u64>(), n in 1usize..9) {
        let mut rng = Xorshift64Star::new(seed);
        let a = gaussian(n, n, &mut rng);
        let sym = a.add(&a.transpose());
        let mine = symmetric_eigen(&sym).unwrap();
        let mut ascending = mine.values.clone();
        ascending.reverse();
        let reference = oracle::classical_jacobi_eigenvalues(&sym);
        let scale = sym.frobenius_norm().max(1.0);
        for (x, y) in ascending.iter().zip(&reference) {
            prop_assert!((x - y).abs() <= 1e-10 * scale);
        }
        let vtv = oracle::matmul(&mine.vectors.transpose(), &mine.vectors);
        prop_assert!(vtv.max_abs_diff(&Matrix::identity(n)) < 1e-12);
    }

    #[test]
    fn csp_filters_have_unit_composite_power(seed in any::<u64>(), n in 4usize..9, pairs in 1usize..3) {
        let epochs = labelled_epochs(n, 8, 64, seed);
        let t = train_csp_detailed(&epochs, pairs, &default_channel_names(n)).unwrap();
        let anc = t.anc_left.matrix.add(&t.anc_right.matrix);
        for r in 0..t.model.n_filters() {
            let w = t.model.projection().row(r);
            prop_assert!((anc.quadratic_form(w) - 1.0).abs() <= 1e-6);
            let lam = t.anc_left.matrix.quadratic_form(w);
            prop_assert!((0.0..=1.0 + 1e-9).contains(&lam));
        }
        let ev = t.model.eigenvalues();
        prop_assert!(ev[..pairs].windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(ev[pairs..].windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(ev[pairs - 1] >= ev[2 * pairs - 1]);
    }

    #[test]
    fn csp_ignores_global_scaling(seed in any::<u64>(), exp in -3i32..4) {
        let epochs = labelled_epochs(6, 6, 64, seed);
        let k = 10f64.powi(exp);
        let scaled: Vec<Epoch> = epochs.iter().map(|e| Epoch { data: e.data.scale(k), ..e.clone() }).collect();
        let names = default_channel_names(6);
        let a = train_csp(&epochs, 2, &names).unwrap();
        let b = train_csp(&scaled, 2, &names).unwrap();
        prop_assert!(a.projection().max_abs_diff(b.projection()) <= 1e-6);
    }

    #[test]
    fn features_ignore_scaling(seed in any::<u64>(), k in 1e-4f64..1e4) {
        let mut rng = Xorshift64Star::new(seed);
        let m = gaussian(4, 50, &mut rng);
        let a = log_variance_features(&m).unwrap();
        let b = log_variance_features(&m.scale(k)).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        for (j, row) in m.row_iter().enumerate() {
            let total: f64 = m.row_iter().map(oracle::variance).sum();
            prop_assert!((a.values[j] - (oracle::variance(row) / total).ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn filter_is_linear_and_shift_invariant(seed in any::<u64>(), shift in 0usize..40, alpha in -5.0f64..5.0) {
        let f = design_bandpass(8.0, 30.0, 4, 128.0).unwrap();
        let mut rng = Xorshift64Star::new(seed);
        let x: Vec<f64> = (0..200).map(|_| rng.next_gaussian()).collect();
        let u: Vec<f64> = (0..200).map(|_| rng.next_gaussian()).collect();
        let run = |input: &[f64]| {
            let mut y = vec![0.0; input.len()];
            filter_into(&f, input, &mut y);
            y
        };
        let y = run(&x);
        let mut delayed = vec![0.0; shift];
        delayed.extend_from_slice(&x);
        let yd = run(&delayed);
        for k in 0..x.len() {
            prop_assert!((yd[k + shift] - y[k]).abs() < 1e-12);
        }
        let combo: Vec<f64> = x.iter().zip(&u).map(|(a, b)| alpha * a + b).collect();
        let yc = run(&combo);
        let yu = run(&u);
        for k in 0..x.len() {
            prop_assert!((yc[k] - (alpha * y[k] + yu[k])).abs() < 1e-9);
        }
    }

    #[test]
    fn designed_filters_are_stable(low in 0.5f64..40.0, width in 1.0f64..40.0, order_idx in 0usize..4, fs_idx in 0usize..3) {
        let fs = [128.0, 256.0, 500.0][fs_idx];
        let order = [2, 4, 6, 8][order_idx];
        let high = low + width;
        prop_assume!(high < fs / 2.0 - 0.5);
        let f = design_bandpass(low, high, order, fs).unwrap();
        prop_assert_eq!(f.sections.len(), order / 2);
        prop_assert!(f.sections.iter().all(|s| is_stable(&s.a)));
        let pi = std::f64::consts::PI;
        // unity gain sits at the pre-warped analog centre mapped back to z
        let center = fs / pi * ((pi * low / fs).tan() * (pi * high / fs).tan()).sqrt().atan();
        let gain: f64 = f.sections.iter().map(|s| oracle::magnitude_response(&s.b, &s.a, center, fs)).product();
        prop_assert!(oracle::db(gain).abs() < 1e-9, "gain {} dB at {center} Hz", oracle::db(gain));
    }

    #[test]
    fn signal_file_round_trip(seed in any::<u64>(), n in 1usize..5, s in 1usize..60) {
        let mut rng = Xorshift64Star::new(seed);
        let m = gaussian(n, s, &mut rng).scale(1e3 * rng.next_f64());
        let b = SignalBuffer::new(128.0, default_channel_names(n), m).unwrap();
        let mut out = Vec::new();
        write_signal(&b, &mut out).unwrap();
        let back = read_signal(out.as_slice()).unwrap();
        prop_assert_eq!(back.samples(), b.samples());
        prop_assert_eq!(back.channel_names(), b.channel_names());
        prop_assert!((back.sample_rate_hz() - 128.0).abs() < 1e-6);
    }

    #[test]
    fn marker_file_round_trip(times in proptest::collection::vec((0.0f64..1e4, 0usize..4), 0..30)) {
        let markers: Vec<Marker> = times.iter().map(|&(t, k)| Marker::new(t, MarkerLabel::ALL[k])).collect();
        let stream = MarkerStream::new(markers).unwrap();
        let mut out = Vec::new();
        write_markers(&stream, &mut out).unwrap();
        prop_assert_eq!(read_markers(out.as_slice()).unwrap(), stream);
    }

    #[test]
    fn model_files_round_trip(seed in any::<u64>(), n in 2usize..16, pairs in 1usize..4) {
        prop_assume!(2 * pairs <= n);
        let mut rng = Xorshift64Star::new(seed);
        let p = gaussian(2 * pairs, n, &mut rng);
        let ev: Vec<f64> = (0..2 * pairs).map(|_| rng.next_f64()).collect();
        let csp = mibci_core::CspModel::new(p, ev, default_channel_names(n), pairs, 1e-9).unwrap();
        let mut out = Vec::new();
        write_csp_model(&csp, &mut out).unwrap();
        prop_assert_eq!(read_csp_model(out.as_slice()).unwrap(), csp);

        let w: Vec<f64> = (0..2 * pairs).map(|_| rng.next_gaussian()).collect();
        let lda = LdaModel::new(w, rng.next_gaussian(), 0.1 + rng.next_f64()).unwrap();
        let mut out = Vec::new();
        write_lda_model(&lda, &mut out).unwrap();
        prop_assert_eq!(read_lda_model(out.as_slice()).unwrap(), lda);
    }

    #[test]
    fn confusion_matches_tally(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
        let t: Vec<ClassLabel> = pairs.iter().map(|p| label(p.0)).collect();
        let p: Vec<ClassLabel> = pairs.iter().map(|p| label(p.1)).collect();
        let cm = confusion(&t, &p).unwrap();
        let signs = |v: &[ClassLabel]| v.iter().map(|l| l.sign()).collect::<Vec<i8>>();
        prop_assert_eq!(cm.counts, oracle::tally(&signs(&t), &signs(&p)));
        let acc = cm.accuracy().unwrap();
        prop_assert!((0.0..=100.0).contains(&acc));
        let flipped: Vec<ClassLabel> = p.iter().map(|l| l.opposite()).collect();
        let cf = confusion(&t, &flipped).unwrap();
        for c in ClassLabel::ALL {
            prop_assert_eq!(cf.row_total(c), cm.row_total(c));
        }
    }

    #[test]
    fn feedback_is_odd_and_bounded(score in -1e6f64..1e6, scale in 1e-3f64..1e3) {
        let m = LdaModel::new(vec![1.0], 0.0, scale).unwrap();
        let f = feedback_strength(&m, score);
        prop_assert!((-1.0..=1.0).contains(&f));
        prop_assert_eq!(feedback_strength(&m, -score), -f);
    }

    #[test]
    fn folds_partition_each_class(bits in proptest::collection::vec(any::<bool>(), 10..120), k in 2usize..6) {
        let labels: Vec<ClassLabel> = bits.iter().map(|&b| label(b)).collect();
        let counts = [labels.iter().filter(|l| **l == ClassLabel::Left).count(), labels.iter().filter(|l| **l == ClassLabel::Right).count()];
        prop_assume!(counts[0] >= k && counts[1] >= k);
        let folds = stratified_folds(&labels, k).unwrap();
        for c in ClassLabel::ALL {
            let sizes: Vec<usize> = (0..k).map(|f| labels.iter().zip(&folds).filter(|(l, g)| **l == c && **g == f).count()).collect();
            let (min, max) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            prop_assert!(max - min <= 1);
        }
        prop_assert!(folds.iter().all(|&f| f < k));
    }

    #[test]
    fn debounce_never_repeats(bits in proptest::collection::vec(any::<bool>(), 0..100), k in 1usize..6) {
        let events: Vec<DecisionEvent> = bits.iter().enumerate().map(|(i, &b)| DecisionEvent {
            time_s: 1.0 + 0.25 * i as f64,
            label: label(b),
            score: 0.0,
            feedback: 0.0,
        }).collect();
        let cmds = decide_command(&events, k, CommandMapping::default()).unwrap();
        prop_assert!(cmds.windows(2).all(|w| w[0].byte != w[1].byte && w[0].time_s < w[1].time_s));
        if let Some(first) = cmds.first() {
            prop_assert!(first.time_s >= events[k - 1].time_s);
        }
        for c in &cmds {
            let i = events.iter().position(|e| e.time_s == c.time_s).unwrap();
            prop_assert!(i + 1 >= k);
            let l = events[i].label;
            prop_assert!(events[i + 1 - k..=i].iter().all(|e| e.label == l));
        }
    }

    #[test]
    fn window_count_formula(seconds in 2usize..20, window_q in 1usize..8, step_q in 1usize..8) {
        let n = 128 * seconds;
        let b = SignalBuffer::new(128.0, default_channel_names(1), Matrix::zeros(1, n)).unwrap();
        let window = window_q as f64 * 0.25;
        let step = step_q as f64 * 0.125;
        let expected = ((seconds as f64 - window) / step).floor() as usize + 1;
        prop_assert_eq!(stream_windows(&b, window, step).unwrap().count(), expected);
    }
}

#[test]
fn handsim_matches_reference_on_all_short_sequences() {
    const ALPHABET: [u8; 5] = [b'q', b'a', b'w', b's', b'x'];
    let mut checked = 0;
    for len in 0..=4u32 {
        for code in 0..5usize.pow(len) {
            let mut c = code;
            let seq: Vec<u8> = (0..len)
                .map(|_| {
                    let b = ALPHABET[c % 5];
                    c /= 5;
                    b
                })
                .collect();
            let state = seq.iter().fold(HandState::open(), |s, &b| apply_command(s, b));
            assert_eq!(state.servo_deg, oracle::reference_hand(&seq), "sequence {:?}", String::from_utf8_lossy(&seq));
            checked += 1;
        }
    }
    assert_eq!(checked, 1 + 5 + 25 + 125 + 625);
}

#[test]
fn protocol_commands_are_idempotent() {
    let mut rng = Xorshift64Star::new(1);
    for _ in 0..200 {
        let mut s = HandState::open();
        for d in s.servo_deg.iter_mut() {
            *d = if rng.next_f64() < 0.5 { 0.0 } else { 180.0 };
        }
        for b in [b'q', b'a', b'w', b's'] {
            let once = apply_command(s, b);
            assert_eq!(apply_command(once, b), once);
        }
    }
}
