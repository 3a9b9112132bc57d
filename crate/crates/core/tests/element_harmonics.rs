use reset_shaping::hosidf::harmonic_gain;
use reset_shaping::lti::{hz_to_rad, logspace, wrap_deg};
use reset_shaping::reset::{make_gfore, make_pfore, PforeParams, ResetElement};
use reset_shaping::sim::{count_resets, harmonics, run_element, samples_per_period, snap_frequency_even, ResetVerdict, SignalSpec};

/// Worst (relative magnitude, phase deg) error of simulated harmonics 1, 3, 5.
fn worst_error(r: &ResetElement, ts: f64, freqs: &[f64]) -> (f64, f64) {
    let (mut wm, mut wp): (f64, f64) = (0.0, 0.0);
    for &f0 in freqs {
        let f = snap_frequency_even(f0, ts);
        let n = samples_per_period(f, ts).unwrap();
        let settle = n * ((0.1 / (n as f64 * ts)).ceil() as usize).max(4);
        let len = settle + 2 * n;
        let sig = SignalSpec::sine(f, 1.0);
        let input: Vec<f64> = (0..len).map(|k| sig.sample(k, ts)).collect();
        let (out, events) = run_element(r, ts, &input).unwrap();
        assert_eq!(count_resets(&events, len, ts, f, settle).verdict, ResetVerdict::Nominal);
        let sim = harmonics(&out, ts, f, settle, 5).unwrap();
        for order in [1u32, 3, 5] {
            let h = harmonic_gain(r, hz_to_rad(f), order).unwrap();
            let s = sim[order as usize - 1];
            wm = wm.max((s.norm() / h.norm() - 1.0).abs());
            wp = wp.max(wrap_deg((s / h).arg().to_degrees()).abs());
        }
    }
    (wm, wp)
}

fn elements() -> [ResetElement; 2] {
    [
        make_gfore(126.9604, 126.9604, 0.0).unwrap(),
        make_pfore(&PforeParams { omega_r_hz: 126.9604, omega_l_hz: 205.548, omega_f_hz: 672.3213, gamma_r: 0.0 }).unwrap(),
    ]
}

/// The reset output jumps twice per period; sampling that step aliases the
/// harmonic tail back onto bin n, scaling it by roughly
/// `(pi n/N) cot(pi n/N)`. At N = 34 (980 Hz, 30 us) that is -7% for n = 5,
/// so agreement within 2% needs a finer step.
#[test]
fn harmonics_converge_with_sample_rate() {
    let freqs = logspace(10.0, 1000.0, 15);
    for r in elements() {
        let (m, p) = worst_error(&r, 3e-6, &freqs);
        assert!(m <= 0.02 && p <= 1.0, "{m} {p}");
    }
}

#[test]
fn coarse_step_error_follows_aliasing_estimate() {
    let ts = 30e-6;
    let f = snap_frequency_even(1000.0, ts);
    let n = samples_per_period(f, ts).unwrap() as f64;
    for r in elements() {
        let (m, _) = worst_error(&r, ts, &[f]);
        let x = std::f64::consts::PI * 5.0 / n;
        let predicted = 1.0 - x / x.tan();
        assert!((m - predicted).abs() < 0.01, "{m} vs {predicted}");
    }
}
