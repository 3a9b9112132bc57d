//! Fixed-step simulation of the dual-loop reset control system, with
//! reference generators, harmonic extraction and reset analytics.

use std::collections::hash_map::DefaultHasher;
use std::f64::consts::PI;
use std::fs;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hosidf::LoopModel;
use crate::lti::{DiscreteCascade, FrfPoint};
use crate::reset::{base_linear, step_reset, ResetElement, ResetState};

/// One sample of `A sin(2 pi k / n)` computed from the reduced phase so that
/// every period is bit-identical and half-period samples are exactly zero.
pub fn sine_sample(amplitude: f64, k: usize, n: usize) -> f64 {
    let m = k % n;
    if (2 * m).is_multiple_of(n) {
        return 0.0;
    }
    amplitude * (2.0 * PI * m as f64 / n as f64).sin()
}

fn triangle_phase(p: f64) -> f64 {
    if p < 0.25 {
        4.0 * p
    } else if p < 0.75 {
        2.0 - 4.0 * p
    } else {
        4.0 * p - 4.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    Sine,
    Triangle,
    Step,
    Chirp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub kind: SignalKind,
    #[serde(default)]
    pub freq_hz: f64,
    pub amplitude: f64,
    /// Chirp end frequency; the ramp runs over `chirp_duration_s`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chirp_end_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chirp_duration_s: Option<f64>,
}

impl SignalSpec {
    pub fn sine(freq_hz: f64, amplitude: f64) -> Self {
        Self { kind: SignalKind::Sine, freq_hz, amplitude, chirp_end_hz: None, chirp_duration_s: None }
    }

    pub fn triangle(freq_hz: f64, amplitude: f64) -> Self {
        Self { kind: SignalKind::Triangle, ..Self::sine(freq_hz, amplitude) }
    }

    pub fn step(amplitude: f64) -> Self {
        Self { kind: SignalKind::Step, ..Self::sine(0.0, amplitude) }
    }

    pub fn chirp(f_start_hz: f64, f_end_hz: f64, duration_s: f64, amplitude: f64) -> Self {
        Self {
            kind: SignalKind::Chirp,
            freq_hz: f_start_hz,
            amplitude,
            chirp_end_hz: Some(f_end_hz),
            chirp_duration_s: Some(duration_s),
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.kind, SignalKind::Sine | SignalKind::Triangle)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidParameter("signal amplitude must be finite".into()));
        }
        if self.kind != SignalKind::Step && !(self.freq_hz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "{:?} signal needs a positive frequency",
                self.kind
            )));
        }
        if self.kind == SignalKind::Chirp {
            let ok = self.chirp_end_hz.is_some_and(|f| f > 0.0)
                && self.chirp_duration_s.is_some_and(|t| t > 0.0);
            if !ok {
                return Err(Error::InvalidParameter("chirp needs positive end frequency and duration".into()));
            }
        }
        Ok(())
    }

    /// Continuous-time value.
    pub fn value(&self, t: f64) -> f64 {
        reference_signal(self, t)
    }

    /// Value at sample `k`. Periodic kinds with an integer number of
    /// samples per period are evaluated from the reduced phase.
    pub fn sample(&self, k: usize, ts: f64) -> f64 {
        if self.is_periodic() {
            if let Some(n) = samples_per_period(self.freq_hz, ts) {
                return match self.kind {
                    SignalKind::Sine => sine_sample(self.amplitude, k, n),
                    _ => self.amplitude * triangle_phase((k % n) as f64 / n as f64),
                };
            }
        }
        self.value(k as f64 * ts)
    }
}

/// Reference/disturbance generator.
pub fn reference_signal(spec: &SignalSpec, t: f64) -> f64 {
    let a = spec.amplitude;
    match spec.kind {
        SignalKind::Sine => a * (2.0 * PI * spec.freq_hz * t).sin(),
        SignalKind::Triangle => {
            let p = (spec.freq_hz * t).rem_euclid(1.0);
            a * triangle_phase(p)
        }
        SignalKind::Step => {
            if t >= 0.0 {
                a
            } else {
                0.0
            }
        }
        SignalKind::Chirp => {
            let f0 = spec.freq_hz;
            let f1 = spec.chirp_end_hz.unwrap_or(f0);
            let dur = spec.chirp_duration_s.unwrap_or(f64::INFINITY);
            let rate = (f1 - f0) / dur;
            let phase = if t <= dur {
                f0 * t + 0.5 * rate * t * t
            } else {
                f0 * dur + 0.5 * rate * dur * dur + f1 * (t - dur)
            };
            a * (2.0 * PI * phase).sin()
        }
    }
}

/// `Some(n)` when `1 / (f ts)` is an integer to within 1e-9.
pub fn samples_per_period(freq_hz: f64, ts: f64) -> Option<usize> {
    let n = 1.0 / (freq_hz * ts);
    let r = n.round();
    if r >= 2.0 && (n - r).abs() <= 1e-9 * r {
        Some(r as usize)
    } else {
        None
    }
}

/// Nearest frequency with an integer number of samples per period.
pub fn snap_frequency(freq_hz: f64, ts: f64) -> f64 {
    let n = (1.0 / (freq_hz * ts)).round().max(2.0);
    1.0 / (n * ts)
}

/// Nearest frequency with an even number of samples per period, so that
/// sine zero crossings land exactly on samples.
pub fn snap_frequency_even(freq_hz: f64, ts: f64) -> f64 {
    let n = (0.5 / (freq_hz * ts)).round().max(1.0) * 2.0;
    1.0 / (n * ts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseSpec {
    #[default]
    None,
    /// Zero-mean Gaussian measurement noise. Samples are drawn from a
    /// ChaCha8 stream seeded with the scenario seed; each sample uses two
    /// uniforms `u1, u2` in [0, 1) and `rms * sqrt(-2 ln(1 - u1)) cos(2 pi u2)`.
    White { rms: f64 },
}

/// Placement of the two linear blocks after the reset element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesOrder {
    /// `R -> k_c C_l -> C_t`.
    #[default]
    LeadLagFirst,
    /// `R -> C_t -> k_c C_l`.
    TrackingFirst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub model: LoopModel,
    pub ts: f64,
    pub duration_s: f64,
    pub reference: SignalSpec,
    pub disturbance: Option<SignalSpec>,
    pub noise: NoiseSpec,
    pub settle_periods: usize,
    /// Lower bound on the discarded settling time, in seconds.
    pub min_settle_s: f64,
    pub seed: u64,
    pub series_order: SeriesOrder,
}

pub const DEFAULT_TS: f64 = 30e-6;

impl Scenario {
    pub fn new(model: LoopModel, reference: SignalSpec) -> Self {
        Self {
            model,
            ts: DEFAULT_TS,
            duration_s: 0.2,
            reference,
            disturbance: None,
            noise: NoiseSpec::None,
            settle_periods: 10,
            min_settle_s: 0.0,
            seed: 0,
            series_order: SeriesOrder::LeadLagFirst,
        }
    }

    pub fn samples(&self) -> usize {
        (self.duration_s / self.ts).round() as usize
    }

    /// Discarded samples: whole reference periods covering both the period
    /// count and the minimum settling time.
    pub fn settle_samples(&self) -> usize {
        if !(self.reference.freq_hz > 0.0) || self.reference.kind == SignalKind::Step {
            return (self.min_settle_s / self.ts).ceil() as usize;
        }
        let period = 1.0 / self.reference.freq_hz;
        let periods = (self.settle_periods as f64).max((self.min_settle_s / period).ceil());
        (periods * period / self.ts).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ts > 0.0 && self.duration_s > 0.0) {
            return Err(Error::InvalidParameter("sample time and duration must be positive".into()));
        }
        self.reference.validate()?;
        if let Some(d) = &self.disturbance {
            d.validate()?;
        }
        if let NoiseSpec::White { rms } = self.noise {
            if !(rms >= 0.0 && rms.is_finite()) {
                return Err(Error::InvalidParameter("noise RMS must be >= 0".into()));
            }
        }
        if self.model.plant.as_rational().is_none() {
            return Err(Error::InvalidParameter(
                "simulation needs a rational plant model; measured FRFs are analysis-only".into(),
            ));
        }
        self.model.validate()
    }

    fn hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        format!("{self:?}").hash(&mut h);
        h.finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signal {
    R,
    E,
    Es,
    Ur,
    U,
    X,
    Y,
}

/// Sampled signals of one run. `e` is also the reset-stage input `e_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub ts: f64,
    pub r: Vec<f64>,
    pub e: Vec<f64>,
    pub e_s: Vec<f64>,
    pub u_r: Vec<f64>,
    pub u: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub resets: Vec<usize>,
    pub settle_samples: usize,
    pub scenario_hash: u64,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn signal(&self, s: Signal) -> &[f64] {
        match s {
            Signal::R => &self.r,
            Signal::E => &self.e,
            Signal::Es => &self.e_s,
            Signal::Ur => &self.u_r,
            Signal::U => &self.u,
            Signal::X => &self.x,
            Signal::Y => &self.y,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# t_s={:e}", self.ts)?;
        writeln!(w, "t,r,e,e_s,u_r,u,x,y,reset_flag")?;
        let mut next = self.resets.iter().peekable();
        for k in 0..self.len() {
            let flag = if next.peek() == Some(&&k) {
                next.next();
                1
            } else {
                0
            };
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
                k as f64 * self.ts,
                self.r[k],
                self.e[k],
                self.e_s[k],
                self.u_r[k],
                self.u[k],
                self.x[k],
                self.y[k],
                flag
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn save_reset_log(&self, path: &Path) -> Result<()> {
        let text: String = self.resets.iter().map(|i| format!("{i}\n")).collect();
        fs::write(path, text)?;
        Ok(())
    }
}

/// How the reset stage is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ResetMode {
    Hybrid,
    /// The element is replaced by its Tustin-discretized base-linear filter.
    Linear,
}

enum ResetBlock {
    Hybrid(ResetState, ResetElement),
    Linear(DiscreteCascade),
}

impl ResetBlock {
    fn step(&mut self, e_r: f64, e_s: f64) -> Result<f64> {
        match self {
            ResetBlock::Hybrid(state, r) => step_reset(state, r, e_r, e_s),
            ResetBlock::Linear(f) => f.step(e_r),
        }
    }

    fn events(&self) -> Vec<usize> {
        match self {
            ResetBlock::Hybrid(state, _) => state.events().to_vec(),
            ResetBlock::Linear(_) => Vec::new(),
        }
    }
}

/// Runs the closed loop: per sample `e = r - y[k-1]`, trigger `e_s`, reset
/// stage, linear chain, plant input `u - C_d(y[k-1]) + d`, plant, `y = x + n`.
/// The feedback path therefore carries one sample of computation delay.
pub fn run_closed_loop(sc: &Scenario) -> Result<SimTrace> {
    simulate(sc, ResetMode::Hybrid)
}

/// Same loop with the reset element replaced by its base-linear filter.
pub fn run_closed_loop_linear(sc: &Scenario) -> Result<SimTrace> {
    simulate(sc, ResetMode::Linear)
}

fn simulate(sc: &Scenario, mode: ResetMode) -> Result<SimTrace> {
    sc.validate()?;
    let ts = sc.ts;
    let m = &sc.model;
    let plant_tf = m.plant.as_rational().expect("validated");
    let mut plant = DiscreteCascade::from_tf(plant_tf, ts)?;
    let mut damping = DiscreteCascade::from_tf(&m.damping, ts)?;
    let mut tracking = DiscreteCascade::from_tf(&m.tracking, ts)?;
    let mut lead_lag = DiscreteCascade::from_tf(&m.cglp.lead_lag.scaled(m.cglp.k_c), ts)?;
    let mut shaping = m.shaping.as_ref().map(|cs| DiscreteCascade::from_tf(cs, ts)).transpose()?;
    let mut reset = match mode {
        ResetMode::Hybrid => ResetBlock::Hybrid(ResetState::new(&m.cglp.reset, ts)?, m.cglp.reset.clone()),
        ResetMode::Linear => ResetBlock::Linear(DiscreteCascade::from_tf(&base_linear(&m.cglp.reset), ts)?),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);

    let n = sc.samples();
    let mut tr = SimTrace {
        ts,
        r: Vec::with_capacity(n),
        e: Vec::with_capacity(n),
        e_s: Vec::with_capacity(n),
        u_r: Vec::with_capacity(n),
        u: Vec::with_capacity(n),
        x: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        resets: Vec::new(),
        settle_samples: sc.settle_samples(),
        scenario_hash: sc.hash(),
    };
    let diverged = |index: usize| move |_: Error| Error::Divergence { index };
    let mut y_prev = 0.0;
    for k in 0..n {
        let r = sc.reference.sample(k, ts);
        let e = r - y_prev;
        let e_s = match shaping.as_mut() {
            Some(f) => f.step(e).map_err(diverged(k))?,
            None => e,
        };
        let u_r = reset.step(e, e_s).map_err(diverged(k))?;
        let u = match sc.series_order {
            SeriesOrder::LeadLagFirst => tracking.step(lead_lag.step(u_r).map_err(diverged(k))?),
            SeriesOrder::TrackingFirst => lead_lag.step(tracking.step(u_r).map_err(diverged(k))?),
        }
        .map_err(diverged(k))?;
        let d = sc.disturbance.map_or(0.0, |s| s.sample(k, ts));
        let plant_in = u - damping.step(y_prev).map_err(diverged(k))? + d;
        let x = plant.step(plant_in).map_err(diverged(k))?;
        let noise = match sc.noise {
            NoiseSpec::None => 0.0,
            NoiseSpec::White { rms } => {
                let u1: f64 = rng.gen();
                let u2: f64 = rng.gen();
                rms * (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * PI * u2).cos()
            }
        };
        let y = x + noise;
        if !y.is_finite() || y.abs() > 1e12 {
            return Err(Error::Divergence { index: k });
        }
        tr.r.push(r);
        tr.e.push(e);
        tr.e_s.push(e_s);
        tr.u_r.push(u_r);
        tr.u.push(u);
        tr.x.push(x);
        tr.y.push(y);
        y_prev = y;
    }
    tr.resets = reset.events();
    Ok(tr)
}

/// Drives an isolated reset element with `e_r = e_s = input[k]`.
pub fn run_element(r: &ResetElement, ts: f64, input: &[f64]) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut st = ResetState::new(r, ts)?;
    let out = input
        .iter()
        .map(|&e| step_reset(&mut st, r, e, e))
        .collect::<Result<Vec<_>>>()?;
    Ok((out, st.events().to_vec()))
}

/// Single-bin DFT amplitudes `(2j/N) sum x e^{-j k w t}` for `k = 1..=n_max`
/// over every whole period after `settle_samples` (peak convention: `A sin`
/// gives `A`).
pub fn harmonics(signal: &[f64], ts: f64, f0: f64, settle_samples: usize, n_max: usize) -> Result<Vec<Complex64>> {
    let n = samples_per_period(f0, ts).ok_or(Error::NonIntegerPeriod { samples_per_period: 1.0 / (f0 * ts) })?;
    let available = signal.len().saturating_sub(settle_samples) / n;
    if available < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 whole periods after settling, have {available}"
        )));
    }
    let window = &signal[settle_samples..settle_samples + available * n];
    let len = window.len() as f64;
    Ok((1..=n_max)
        .map(|h| {
            let sum = window
                .iter()
                .enumerate()
                .fold(Complex64::new(0.0, 0.0), |acc, (i, &x)| {
                    let k = settle_samples + i;
                    // reduced phase keeps the twiddle exact over long windows
                    let m = (h * k) % n;
                    acc + x * Complex64::from_polar(1.0, -2.0 * PI * m as f64 / n as f64)
                });
            Complex64::new(0.0, 2.0 / len) * sum
        })
        .collect())
}

pub fn steady_state_harmonics(trace: &SimTrace, signal: Signal, f0: f64, n_max: usize) -> Result<Vec<Complex64>> {
    harmonics(trace.signal(signal), trace.ts, f0, trace.settle_samples, n_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ResetVerdict {
    /// Some period has more than two resets.
    Multiple,
    /// Exactly two resets in every period.
    Nominal,
    /// Fewer than two resets in every period.
    Quiescent,
    /// A mix of two and fewer than two.
    Irregular,
}

impl std::fmt::Display for ResetVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ResetVerdict::Multiple => "MULTIPLE",
            ResetVerdict::Nominal => "NOMINAL",
            ResetVerdict::Quiescent => "QUIESCENT",
            ResetVerdict::Irregular => "IRREGULAR",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResetCount {
    pub counts: Vec<usize>,
    pub verdict: ResetVerdict,
}

/// Buckets reset indices into whole reference periods after
/// `settle_samples`.
pub fn count_resets(events: &[usize], len: usize, ts: f64, f0: f64, settle_samples: usize) -> ResetCount {
    let period = 1.0 / (f0 * ts);
    let periods = ((len - settle_samples.min(len)) as f64 / period + 1e-9).floor() as usize;
    let mut counts = vec![0usize; periods];
    for &k in events.iter().filter(|&&k| k >= settle_samples) {
        let p = (((k - settle_samples) as f64 + 1e-9) / period).floor() as usize;
        if p < periods {
            counts[p] += 1;
        }
    }
    let verdict = if counts.iter().any(|&c| c > 2) {
        ResetVerdict::Multiple
    } else if counts.iter().all(|&c| c == 2) && !counts.is_empty() {
        ResetVerdict::Nominal
    } else if counts.iter().all(|&c| c < 2) {
        ResetVerdict::Quiescent
    } else {
        ResetVerdict::Irregular
    };
    ResetCount { counts, verdict }
}

pub fn count_resets_per_period(trace: &SimTrace, f0: f64) -> ResetCount {
    count_resets(&trace.resets, trace.len(), trace.ts, f0, trace.settle_samples)
}

/// RMS of `r[k - delay] - y[k]` over the settled window.
pub fn rms_error(trace: &SimTrace, delay_samples: usize) -> f64 {
    let start = trace.settle_samples.max(delay_samples);
    if start >= trace.len() {
        return f64::NAN;
    }
    let sum: f64 = (start..trace.len())
        .map(|k| {
            let d = trace.r[k - delay_samples] - trace.y[k];
            d * d
        })
        .sum();
    (sum / (trace.len() - start) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepSelector {
    #[serde(rename = "S_er")]
    Ser,
    #[serde(rename = "T_yr")]
    Tyr,
}

impl SweepSelector {
    pub fn label(&self) -> &'static str {
        match self {
            SweepSelector::Ser => "S_er",
            SweepSelector::Tyr => "T_yr",
        }
    }
}

/// One successful sweep measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepMeasurement {
    /// Fundamental ratio of the selected signal to `r`.
    pub response: Complex64,
    /// Steady-state peak of the selected signal over the reference amplitude;
    /// unlike `response` this includes the harmonic content.
    pub peak_ratio: f64,
    pub verdict: ResetVerdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub requested_hz: f64,
    pub freq_hz: f64,
    pub result: std::result::Result<SweepMeasurement, Error>,
}

/// Number of analysed periods per sweep point.
pub const SWEEP_ANALYSIS_PERIODS: usize = 4;

/// Sine sweep: each grid frequency is snapped to an integer period, run
/// independently (in parallel) and reduced to the fundamental ratio of `e`
/// or `y` to `r`. Results keep grid order; failures are recorded per point.
pub fn measure_frf_sweep(template: &Scenario, grid_hz: &[f64], selector: SweepSelector) -> Vec<SweepPoint> {
    grid_hz
        .par_iter()
        .map(|&f_req| {
            let f = snap_frequency(f_req, template.ts);
            let mut sc = template.clone();
            sc.reference = SignalSpec::sine(f, template.reference.amplitude);
            let n = samples_per_period(f, sc.ts).expect("snapped");
            let settle = sc.settle_samples();
            sc.duration_s = (settle + SWEEP_ANALYSIS_PERIODS * n) as f64 * sc.ts;
            let result = run_closed_loop(&sc).and_then(|tr| {
                let sel = match selector {
                    SweepSelector::Ser => Signal::E,
                    SweepSelector::Tyr => Signal::Y,
                };
                let out = steady_state_harmonics(&tr, sel, f, 1)?[0];
                let inp = steady_state_harmonics(&tr, Signal::R, f, 1)?[0];
                let peak = tr.signal(sel)[tr.settle_samples..].iter().fold(0.0f64, |a, v| a.max(v.abs()));
                Ok(SweepMeasurement {
                    response: out / inp,
                    peak_ratio: peak / sc.reference.amplitude.abs(),
                    verdict: count_resets_per_period(&tr, f).verdict,
                })
            });
            SweepPoint { requested_hz: f_req, freq_hz: f, result }
        })
        .collect()
}

/// Successful sweep points as FRF samples.
pub fn sweep_frf(points: &[SweepPoint]) -> Vec<FrfPoint> {
    points
        .iter()
        .filter_map(|p| p.result.as_ref().ok().map(|m| FrfPoint { freq_hz: p.freq_hz, response: m.response }))
        .collect()
}
