//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N: PASS|FAIL` line (run with `--nocapture` to see them).

use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reset_shaping::hosidf::{complementary_harmonics, harmonic_gain, sensitivity_harmonics, theta_d};
use reset_shaping::lti::{bilinear_discretize, hz_to_rad, log_grid, logspace, mag_db, wrap_deg};
use reset_shaping::reset::{make_gfore, make_pfore, PforeParams, ResetElement};
use reset_shaping::sim::{
    count_resets, count_resets_per_period, harmonics, measure_frf_sweep, run_closed_loop, run_closed_loop_linear,
    run_element, samples_per_period, snap_frequency, snap_frequency_even, ResetVerdict, SignalSpec, SweepSelector,
    DEFAULT_TS,
};
use reset_shaping::tuning::{fractional_lead_lag_fit, omega_r_from_omega_l, tune_cglp, CglpDesign, ShapingParams};
use reset_shaping::RationalTf;
use rshape::commands::loop_summary;
use rshape::{load_preset, BuiltCase, CaseConfig};

/// CgLp corner sets `(phase lead, w_l, w_r, w_f)` and the crossover each
/// was designed for.
const CGLP_SETS: [(f64, f64, f64, f64); 4] = [
    (5.0, 261.6517, 161.6139, 405.6638),
    (10.0, 219.3114, 135.4616, 486.4864),
    (15.0, 205.5480, 126.9604, 672.3213),
    (20.0, 181.2853, 111.9741, 882.7832),
];
const DESIGN_CROSSOVER_HZ: [f64; 4] = [278.0, 288.9, 309.3, 329.3];

fn report(n: u32, what: &str, pass: bool, detail: &str, elapsed: Duration) {
    println!(
        "criterion {n:>2}: {} - {what} ({detail}) [{:.1} ms]",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64() * 1e3
    );
}

fn preset(n: usize) -> (CaseConfig, BuiltCase) {
    let cfg = load_preset(n).unwrap();
    let built = cfg.build(&rshape::presets_dir()).unwrap();
    (cfg, built)
}

#[test]
fn criterion_01_reset_corner_reference_values() {
    let t0 = Instant::now();
    let got: Vec<f64> = CGLP_SETS.iter().map(|c| omega_r_from_omega_l(c.1, 0.0).unwrap()).collect();
    let elapsed = t0.elapsed();
    let worst = CGLP_SETS.iter().zip(&got).map(|(c, g)| (g - c.2).abs()).fold(0.0, f64::max);
    let pass = worst <= 1e-3 && elapsed < Duration::from_millis(1);
    report(1, "w_r from w_l at gamma_r = 0", pass, &format!("max |err| = {worst:.2e} Hz"), elapsed);
    assert!(pass, "{got:?}");
}

#[test]
fn criterion_02_clegg_closed_forms() {
    let t0 = Instant::now();
    let clegg = make_gfore(0.0, 1.0 / (2.0 * PI), 0.0).unwrap();
    let phase1 = -(PI / 4.0).atan();
    let mut worst: f64 = 0.0;
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    for f in logspace(0.1, 1e4, 20) {
        let w = hz_to_rad(f);
        let th = theta_d(&clegg, w).unwrap()[(0, 0)];
        let h1 = harmonic_gain(&clegg, w, 1).unwrap();
        let h3 = harmonic_gain(&clegg, w, 3).unwrap();
        worst = worst
            .max(rel(th, 4.0 / PI))
            .max(rel(h1.norm(), (1.0 + 16.0 / (PI * PI)).sqrt() / w))
            .max(rel(h1.arg(), phase1))
            .max(rel(h3.norm(), 4.0 / PI / (3.0 * w)))
            .max(h3.arg().abs());
    }
    // the quoted -38.148 deg is a rounding of -atan(pi/4) = -38.1460 deg
    let quoted = (phase1.to_degrees() + 38.148).abs();
    let pass = worst <= 1e-9 && quoted < 5e-3;
    report(
        2,
        "Clegg integrator describing functions",
        pass,
        &format!("max rel err = {worst:.1e}, angle H1 = {:.4} deg", phase1.to_degrees()),
        t0.elapsed(),
    );
    assert!(pass);
}

/// Element output harmonics against the describing functions; returns the
/// worst relative magnitude error, worst phase error and a failure list.
fn cross_validate(name: &str, r: &ResetElement, freqs: &[f64], failures: &mut Vec<String>) -> (f64, f64) {
    let ts = DEFAULT_TS;
    let (mut worst_mag, mut worst_phase): (f64, f64) = (0.0, 0.0);
    for &f in freqs {
        let n = samples_per_period(f, ts).unwrap();
        // settle for at least 0.1 s (10 time constants of the slowest pole)
        let settle = n * ((0.1 / (n as f64 * ts)).ceil() as usize).max(4);
        let len = settle + 4 * n;
        let sig = SignalSpec::sine(f, 1.0);
        let input: Vec<f64> = (0..len).map(|k| sig.sample(k, ts)).collect();
        let (out, events) = run_element(r, ts, &input).unwrap();
        let verdict = count_resets(&events, len, ts, f, settle).verdict;
        if verdict != ResetVerdict::Nominal {
            failures.push(format!("{name} {f:.1} Hz: {verdict}"));
        }
        let sim = harmonics(&out, ts, f, settle, 5).unwrap();
        for order in [1u32, 3, 5] {
            let h = harmonic_gain(r, hz_to_rad(f), order).unwrap();
            let s = sim[order as usize - 1];
            let mag = (s.norm() / h.norm() - 1.0).abs();
            let phase = wrap_deg((s / h).arg().to_degrees()).abs();
            worst_mag = worst_mag.max(mag);
            worst_phase = worst_phase.max(phase);
            if mag > 0.02 || phase > 1.0 {
                failures.push(format!("{name} {f:.1} Hz n={order}: {:+.2}% {phase:.2} deg", 100.0 * (s.norm() / h.norm() - 1.0)));
            }
        }
    }
    (worst_mag, worst_phase)
}

#[test]
fn criterion_03_describing_functions_match_simulation() {
    let t0 = Instant::now();
    let freqs: Vec<f64> = logspace(10.0, 1000.0, 15).into_iter().map(|f| snap_frequency_even(f, DEFAULT_TS)).collect();
    let gfore = make_gfore(126.9604, 126.9604, 0.0).unwrap();
    let pfore = make_pfore(&PforeParams { omega_r_hz: 126.9604, omega_l_hz: 205.548, omega_f_hz: 672.3213, gamma_r: 0.0 }).unwrap();
    let mut failures = Vec::new();
    let (gm, gp) = cross_validate("GFORE", &gfore, &freqs, &mut failures);
    let (pm, pp) = cross_validate("PFORE", &pfore, &freqs, &mut failures);
    let elapsed = t0.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(60);
    report(
        3,
        "element harmonics n = 1,3,5 vs simulation, 15 frequencies",
        pass,
        &format!(
            "worst mag {:.2}%, worst phase {:.3} deg; {} violations",
            100.0 * gm.max(pm),
            gp.max(pp),
            failures.len()
        ),
        elapsed,
    );
    for f in &failures {
        println!("    {f}");
    }
    assert!(pass, "{failures:#?}");
}

#[test]
fn criterion_04_unit_reset_factor_is_linear() {
    let t0 = Instant::now();
    let mut cfg = load_preset(4).unwrap();
    cfg.cglp.as_mut().unwrap().gamma_r = 1.0;
    let built = cfg.build(&rshape::presets_dir()).unwrap();
    let mut worst: f64 = 0.0;
    for reference in [SignalSpec::sine(80.0, 1.0), SignalSpec::triangle(50.0, 1.0), SignalSpec::step(1.0)] {
        let mut sc = cfg.scenario(&built, reference).unwrap();
        sc.duration_s = 0.1;
        let hybrid = run_closed_loop(&sc).unwrap();
        let linear = run_closed_loop_linear(&sc).unwrap();
        let rms = (hybrid.y.iter().zip(&linear.y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / hybrid.y.len() as f64).sqrt();
        worst = worst.max(rms);
        assert!(hybrid.resets.is_empty());
    }
    let pass = worst <= 1e-9;
    report(4, "gamma_r = 1 closed loop equals the linear loop", pass, &format!("max RMS diff = {worst:.1e}"), t0.elapsed());
    assert!(pass);
}

#[test]
fn criterion_05_cglp_gain_flatness() {
    let t0 = Instant::now();
    let (mut lo, mut hi) = (f64::MAX, f64::MIN);
    for (c, &wb) in CGLP_SETS.iter().zip(&DESIGN_CROSSOVER_HZ) {
        let d = CglpDesign::from_corners(c.1, c.3, 0.0).unwrap();
        for f in logspace(10.0, wb, 200) {
            let g = mag_db(d.first_harmonic(f).unwrap());
            lo = lo.min(g);
            hi = hi.max(g);
        }
    }
    let pass = lo >= -1.0 && hi <= 2.0;
    report(5, "CgLp first-harmonic gain in [-1, +2] dB up to crossover", pass, &format!("range [{lo:.3}, {hi:.3}] dB"), t0.elapsed());
    assert!(pass);
}

#[test]
fn criterion_06_phase_lead_at_crossover() {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for (c, &wb) in CGLP_SETS.iter().zip(&DESIGN_CROSSOVER_HZ) {
        let d = CglpDesign::from_corners(c.1, c.3, 0.0).unwrap();
        let phase = d.first_harmonic(wb).unwrap().arg().to_degrees();
        worst = worst.max((phase - c.0).abs());
        detail.push(format!("{:.2}", phase));
    }
    let pass = worst <= 1.5;
    report(6, "CgLp phase lead at design crossover", pass, &format!("phases [{}] deg, max err {worst:.3}", detail.join(", ")), t0.elapsed());
    assert!(pass);
}

fn reset_verdict_at_80hz(n: usize) -> (ResetVerdict, Vec<usize>) {
    let (cfg, built) = preset(n);
    let f = snap_frequency(80.0, cfg.scenario.ts);
    let mut sc = cfg.scenario(&built, SignalSpec::sine(f, 1.0)).unwrap();
    sc.duration_s = sc.settle_samples() as f64 * sc.ts + 20.0 / f;
    let c = count_resets_per_period(&run_closed_loop(&sc).unwrap(), f);
    (c.verdict, c.counts)
}

#[test]
fn criterion_07_multiple_resets_and_cure() {
    let t0 = Instant::now();
    let (plain, pc) = reset_verdict_at_80hz(5);
    let (shaped, sc) = reset_verdict_at_80hz(7);
    let elapsed = t0.elapsed();
    let pass = plain == ResetVerdict::Multiple && shaped == ResetVerdict::Nominal && elapsed < Duration::from_secs(30);
    report(
        7,
        "80 Hz sine: unshaped MULTIPLE, shaped NOMINAL",
        pass,
        &format!(
            "case5 {plain} (max {}/period), case7 {shaped} (max {}/period)",
            pc.iter().max().unwrap_or(&0),
            sc.iter().max().unwrap_or(&0)
        ),
        elapsed,
    );
    assert!(pass);
}

/// Steady-state peak |e| / |r| in dB at each band frequency.
fn band_error_peaks(n: usize, grid: &[f64]) -> Vec<f64> {
    let (cfg, built) = preset(n);
    let sc = cfg.scenario(&built, SignalSpec::sine(grid[0], 1.0)).unwrap();
    measure_frf_sweep(&sc, grid, SweepSelector::Ser)
        .into_iter()
        .map(|p| 20.0 * p.result.unwrap().peak_ratio.log10())
        .collect()
}

#[test]
fn criterion_08_error_band_excess_and_removal() {
    let t0 = Instant::now();
    let grid: Vec<f64> = (0..=16).map(|i| 80.0 + 5.0 * i as f64).collect();
    let base = band_error_peaks(1, &grid);
    let lead = band_error_peaks(5, &grid);
    let shaped = band_error_peaks(7, &grid);
    let excess = lead.iter().zip(&base).map(|(a, b)| a - b).fold(f64::MIN, f64::max);
    let shaped_excess = shaped.iter().zip(&base).map(|(a, b)| a - b).fold(f64::MIN, f64::max);
    let pass = excess > 0.0 && shaped_excess <= 0.5;
    report(
        8,
        "80-160 Hz error: 20 deg lead exceeds baseline, shaping removes it",
        pass,
        &format!("max excess unshaped {excess:+.3} dB, shaped {shaped_excess:+.3} dB"),
        t0.elapsed(),
    );
    assert!(pass);
}

#[test]
fn criterion_09_monotone_bandwidth() {
    let t0 = Instant::now();
    let mut rows = Vec::new();
    for n in 1..=5 {
        let (cfg, built) = preset(n);
        rows.push(loop_summary(&built, &cfg.analysis.grid()).unwrap());
    }
    let increasing = |v: Vec<f64>| v.windows(2).all(|w| w[1] > w[0]);
    let wb: Vec<f64> = rows.iter().map(|r| r.margins.crossover_hz).collect();
    let wc: Vec<f64> = rows.iter().map(|r| r.bandwidth_hz).collect();
    let margins_ok = rows.iter().all(|r| r.margins.phase_margin_deg >= 60.0 && r.margins.gain_margin_db >= 6.0);
    let pass = increasing(wb.clone()) && increasing(wc.clone()) && margins_ok;
    let min_pm = rows.iter().map(|r| r.margins.phase_margin_deg).fold(f64::MAX, f64::min);
    let min_gm = rows.iter().map(|r| r.margins.gain_margin_db).fold(f64::MAX, f64::min);
    report(
        9,
        "cases 1-5: w_b and w_c strictly increasing, PM >= 60, GM >= 6",
        pass,
        &format!("w_b {wb:.1?} Hz, w_c {wc:.1?} Hz, min PM {min_pm:.2}, min GM {min_gm:.2} dB"),
        t0.elapsed(),
    );
    assert!(pass);
}

/// Second-order factor `s^2 + 2 zeta w s + w^2` with a random corner in
/// [fs/500, fs/50] and zeta in [0.2, 1).
fn random_quadratic(rng: &mut ChaCha8Rng, fs: f64) -> Vec<f64> {
    let w = hz_to_rad(10f64.powf(rng.gen_range((fs / 500.0).log10()..(fs / 50.0).log10())));
    let zeta = rng.gen_range(0.2..1.0);
    vec![1.0, 2.0 * zeta * w, w * w]
}

#[test]
fn criterion_10_bilinear_fidelity() {
    let t0 = Instant::now();
    let ts = DEFAULT_TS;
    let fs = 1.0 / ts;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_db, mut worst_deg): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let pairs = rng.gen_range(1..=3);
        let mut tf = RationalTf::gain(rng.gen_range(0.1..10.0));
        for _ in 0..pairs {
            let q = RationalTf::new(random_quadratic(&mut rng, fs), random_quadratic(&mut rng, fs)).unwrap();
            tf = tf.series(&q);
        }
        assert!(tf.is_stable() && tf.den_degree() <= 6);
        let d = bilinear_discretize(&tf, ts).unwrap();
        for f in log_grid(1.0, fs / 10.0, 20) {
            let (c, z) = (tf.eval_frf(f).unwrap(), d.eval_frf(f));
            worst_db = worst_db.max((mag_db(z) - mag_db(c)).abs());
            worst_deg = worst_deg.max(wrap_deg((z / c).arg().to_degrees()).abs());
        }
    }
    let pass = worst_db <= 0.2 && worst_deg <= 2.0;
    report(
        10,
        "bilinear discretization of 50 random systems up to fs/10",
        pass,
        &format!("max {worst_db:.4} dB, {worst_deg:.3} deg"),
        t0.elapsed(),
    );
    assert!(pass);
}

#[test]
fn criterion_11_fractional_fit_quality() {
    let t0 = Instant::now();
    let (mut worst_db, mut worst_deg): (f64, f64) = (0.0, 0.0);
    for (lambda, q) in [(-0.4, 1.3), (-0.9, 1.15)] {
        let p = ShapingParams { omega_l_hz: 200.0, omega_h_hz: 800.0, lambda, q, order: 2, symmetric_notches: false };
        let fit = fractional_lead_lag_fit(&p).unwrap();
        assert_eq!((fit.tf.num_degree(), fit.tf.den_degree()), (2, 2));
        for f in logspace(40.0, 4000.0, 400) {
            let (target, got) = (p.fractional_lead_lag(f), fit.tf.eval_frf(f).unwrap());
            worst_db = worst_db.max((mag_db(got) - mag_db(target)).abs());
            worst_deg = worst_deg.max(wrap_deg((got / target).arg().to_degrees()).abs());
        }
    }
    let pass = worst_db <= 1.0 && worst_deg <= 3.0;
    report(11, "order-2/2 fit of the fractional lead-lag, 40 Hz - 4 kHz", pass, &format!("max {worst_db:.4} dB, {worst_deg:.3} deg"), t0.elapsed());
    assert!(pass);
}

#[test]
fn criterion_12_identities() {
    let t0 = Instant::now();
    let mut worst_ts: f64 = 0.0;
    let mut worst_kc: f64 = 0.0;
    let mut designs: Vec<CglpDesign> = Vec::new();
    for n in 1..=7 {
        let (cfg, built) = preset(n);
        let grid = cfg.analysis.grid();
        let s = sensitivity_harmonics(&built.model, &grid, &[1]).unwrap();
        let t = complementary_harmonics(&built.model, &grid, &[1]).unwrap();
        for i in 0..grid.len() {
            let sum: Complex64 = s.get(i, 1).unwrap() + t.get(i, 1).unwrap();
            worst_ts = worst_ts.max((sum - 1.0).norm());
        }
        designs.extend(built.design);
    }
    for (c, &wb) in CGLP_SETS.iter().zip(&DESIGN_CROSSOVER_HZ) {
        designs.push(tune_cglp(c.0, wb, 0.0).unwrap());
    }
    for d in &designs {
        worst_kc = worst_kc.max((d.dc_identity() - 1.0).abs());
    }
    let pass = worst_ts <= 1e-12 && worst_kc <= 1e-12;
    report(
        12,
        "T + S = 1 on every preset grid, k_c (1 + D_r) = 1",
        pass,
        &format!("max |T+S-1| = {worst_ts:.1e}, max |k_c(1+D_r)-1| = {worst_kc:.1e} over {} designs", designs.len()),
        t0.elapsed(),
    );
    assert!(pass);
}

#[test]
fn presets_are_shipped() {
    assert!(Path::new(&rshape::presets_dir()).join("case1.toml").exists());
}
