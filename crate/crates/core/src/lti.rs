//! Rational transfer functions in the Laplace variable, frequency response,
//! the controller building blocks used by the dual-loop design, loop metrics
//! and Tustin discretization.
//!
//! All constructors take frequencies in Hz and convert to rad/s internally.
//! Polynomials are stored in descending powers of `s` with a monic
//! denominator.

use std::collections::VecDeque;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly;

pub fn hz_to_rad(f: f64) -> f64 {
    2.0 * PI * f
}

/// Wraps an angle in degrees into (-180, 180].
pub fn wrap_deg(mut a: f64) -> f64 {
    a %= 360.0;
    if a > 180.0 {
        a -= 360.0;
    } else if a <= -180.0 {
        a += 360.0;
    }
    a
}

/// Continuously unwrapped phase (degrees) along a sequence of complex values.
pub fn unwrap_phase_deg(values: &[Complex64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(values.len());
    for v in values {
        let p = v.arg().to_degrees();
        match out.last() {
            None => out.push(p),
            Some(&prev) => out.push(prev + wrap_deg(p - prev)),
        }
    }
    out
}

pub fn mag_db(v: Complex64) -> f64 {
    20.0 * v.norm().log10()
}

/// Log-spaced grid from `f_min` to `f_max` (inclusive) with the given number
/// of points per decade.
pub fn log_grid(f_min: f64, f_max: f64, points_per_decade: usize) -> Vec<f64> {
    assert!(f_min > 0.0 && f_max > f_min && points_per_decade > 0);
    let decades = (f_max / f_min).log10();
    let n = (decades * points_per_decade as f64).ceil() as usize;
    (0..=n)
        .map(|i| f_min * 10f64.powf(decades * i as f64 / n as f64))
        .collect()
}

/// `n` log-spaced points over [f_min, f_max].
pub fn logspace(f_min: f64, f_max: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let (a, b) = (f_min.log10(), f_max.log10());
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

/// One sample of a frequency response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrfPoint {
    pub freq_hz: f64,
    pub response: Complex64,
}

impl FrfPoint {
    pub fn new(freq_hz: f64, response: Complex64) -> Result<Self> {
        if !(freq_hz > 0.0) || !freq_hz.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "FRF frequency must be positive and finite, got {freq_hz}"
            )));
        }
        if !response.re.is_finite() || !response.im.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "non-finite FRF response at {freq_hz} Hz"
            )));
        }
        Ok(Self { freq_hz, response })
    }

    pub fn mag_db(&self) -> f64 {
        mag_db(self.response)
    }
}

/// Real-coefficient rational transfer function with optional input delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalTf {
    num: Vec<f64>,
    den: Vec<f64>,
    delay_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Composition {
    Series,
    Parallel,
    /// Negative feedback with the second operand in the return path.
    Feedback,
}

impl RationalTf {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        Self::with_delay(num, den, 0.0)
    }

    pub fn with_delay(num: Vec<f64>, den: Vec<f64>, delay_s: f64) -> Result<Self> {
        if num.is_empty() || den.is_empty() {
            return Err(Error::InvalidParameter(
                "coefficient sequences must be non-empty".into(),
            ));
        }
        if num.iter().chain(&den).any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite coefficient".into()));
        }
        if !(delay_s >= 0.0) || !delay_s.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "delay must be >= 0, got {delay_s}"
            )));
        }
        let den = poly::trim(den);
        if den[0] == 0.0 {
            return Err(Error::InvalidParameter(
                "denominator is identically zero".into(),
            ));
        }
        let lead = den[0];
        Ok(Self {
            num: poly::scale(&poly::trim(num), 1.0 / lead),
            den: poly::scale(&den, 1.0 / lead),
            delay_s,
        })
    }

    pub fn gain(k: f64) -> Self {
        Self::new(vec![k], vec![1.0]).expect("finite gain")
    }

    /// `1/s`
    pub fn integrator() -> Self {
        Self::new(vec![1.0], vec![1.0, 0.0]).unwrap()
    }

    /// `s`
    pub fn differentiator() -> Self {
        Self::new(vec![1.0, 0.0], vec![1.0]).unwrap()
    }

    /// Unity-DC-gain first-order low-pass `w/(s + w)`.
    pub fn lowpass(corner_hz: f64) -> Result<Self> {
        positive("corner frequency", corner_hz)?;
        let w = hz_to_rad(corner_hz);
        Self::new(vec![w], vec![1.0, w])
    }

    /// Lead-lag `(1 + s/w_l) / (1 + s/w_f)`.
    pub fn lead_lag(zero_hz: f64, pole_hz: f64) -> Result<Self> {
        positive("lead-lag zero", zero_hz)?;
        positive("lead-lag pole", pole_hz)?;
        let (wl, wf) = (hz_to_rad(zero_hz), hz_to_rad(pole_hz));
        Self::new(vec![1.0 / wl, 1.0], vec![1.0 / wf, 1.0])
    }

    /// Second-order notch
    /// `((s/w)^2 + s/(q_num w) + 1) / ((s/w)^2 + s/(q_den w) + 1)`.
    /// At `w` its gain is `q_den / q_num`.
    pub fn notch(center_hz: f64, q_num: f64, q_den: f64) -> Result<Self> {
        positive("notch frequency", center_hz)?;
        positive("notch Q", q_num)?;
        positive("notch Q", q_den)?;
        let w = hz_to_rad(center_hz);
        Self::new(
            vec![1.0 / (w * w), 1.0 / (q_num * w), 1.0],
            vec![1.0 / (w * w), 1.0 / (q_den * w), 1.0],
        )
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn delay_s(&self) -> f64 {
        self.delay_s
    }

    pub fn set_delay(mut self, delay_s: f64) -> Result<Self> {
        if !(delay_s >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "delay must be >= 0, got {delay_s}"
            )));
        }
        self.delay_s = delay_s;
        Ok(self)
    }

    pub fn num_degree(&self) -> usize {
        poly::degree(&self.num)
    }

    pub fn den_degree(&self) -> usize {
        poly::degree(&self.den)
    }

    pub fn is_proper(&self) -> bool {
        self.num_degree() <= self.den_degree()
    }

    /// Evaluates the rational part at an arbitrary complex `s` (no delay).
    pub fn eval_s(&self, s: Complex64) -> Complex64 {
        poly::eval(&self.num, s) / poly::eval(&self.den, s)
    }

    /// Frequency response at `freq_hz`, including the delay phase.
    pub fn eval_frf(&self, freq_hz: f64) -> Result<Complex64> {
        if !(freq_hz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "evaluation frequency must be positive, got {freq_hz}"
            )));
        }
        let w = hz_to_rad(freq_hz);
        let s = Complex64::new(0.0, w);
        let d = poly::eval(&self.den, s);
        if d == Complex64::new(0.0, 0.0) {
            return Err(Error::PoleOnGrid { freq_hz });
        }
        let mut h = poly::eval(&self.num, s) / d;
        if self.delay_s > 0.0 {
            h *= Complex64::from_polar(1.0, -w * self.delay_s);
        }
        Ok(h)
    }

    /// Frequency response over a grid.
    pub fn frf(&self, grid_hz: &[f64]) -> Result<Vec<FrfPoint>> {
        grid_hz
            .iter()
            .map(|&f| FrfPoint::new(f, self.eval_frf(f)?))
            .collect()
    }

    /// DC value of the rational part. Infinite for a pole at the origin.
    pub fn dc_gain(&self) -> f64 {
        let n = *self.num.last().unwrap();
        let d = *self.den.last().unwrap();
        n / d
    }

    pub fn compose(kind: Composition, a: &Self, b: &Self) -> Result<Self> {
        match kind {
            Composition::Series => Self::with_delay(
                poly::mul(&a.num, &b.num),
                poly::mul(&a.den, &b.den),
                a.delay_s + b.delay_s,
            ),
            Composition::Parallel => {
                if a.delay_s != b.delay_s {
                    return Err(Error::InvalidParameter(
                        "parallel composition of operands with different delays is not rational"
                            .into(),
                    ));
                }
                Self::with_delay(
                    poly::add(&poly::mul(&a.num, &b.den), &poly::mul(&b.num, &a.den)),
                    poly::mul(&a.den, &b.den),
                    a.delay_s,
                )
            }
            Composition::Feedback => {
                if a.delay_s != 0.0 || b.delay_s != 0.0 {
                    return Err(Error::DelayInAlgebraicLoop);
                }
                // a / (1 + a b) = Na Db / (Da Db + Na Nb)
                Self::new(
                    poly::mul(&a.num, &b.den),
                    poly::add(&poly::mul(&a.den, &b.den), &poly::mul(&a.num, &b.num)),
                )
            }
        }
    }

    pub fn series(&self, other: &Self) -> Self {
        Self::compose(Composition::Series, self, other).expect("series of valid operands")
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::with_delay(poly::scale(&self.num, k), self.den.clone(), self.delay_s)
            .expect("finite scale")
    }

    /// `1 / self`; requires a nonzero numerator and no delay.
    pub fn inverse(&self) -> Result<Self> {
        if self.delay_s != 0.0 {
            return Err(Error::InvalidParameter("cannot invert a delay".into()));
        }
        if self.num.iter().all(|&c| c == 0.0) {
            return Err(Error::InvalidParameter("cannot invert zero".into()));
        }
        Self::new(self.den.clone(), self.num.clone())
    }

    pub fn poles(&self) -> Vec<Complex64> {
        poly::roots(&self.den)
    }

    pub fn zeros(&self) -> Vec<Complex64> {
        poly::roots(&self.num)
    }

    /// True if every pole lies strictly in the open left half-plane.
    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.re < 0.0)
    }

    /// Splits the rational part into a product of real sections of order at
    /// most two. The delay is not carried into the sections.
    pub fn sections(&self) -> Result<Vec<RationalTf>> {
        if !self.is_proper() {
            return Err(Error::Improper {
                num: self.num_degree(),
                den: self.den_degree(),
            });
        }
        let num = poly::trim(self.num.clone());
        if num.iter().all(|&c| c == 0.0) {
            return Ok(vec![RationalTf::gain(0.0)]);
        }
        let gain = num[0];
        let mut pole_groups = poly::quadratic_factors(&self.poles(), 1e-9);
        let mut zero_groups = poly::quadratic_factors(&self.zeros(), 1e-9);
        pole_groups.sort_by_key(|g| std::cmp::Reverse(g.len()));
        zero_groups.sort_by_key(|g| std::cmp::Reverse(g.len()));
        if pole_groups.is_empty() {
            return Ok(vec![RationalTf::gain(gain)]);
        }
        let mut zeros = zero_groups.into_iter();
        let mut out = Vec::with_capacity(pole_groups.len());
        for (i, den) in pole_groups.into_iter().enumerate() {
            let num = zeros.next().unwrap_or_else(|| vec![1.0]);
            let num = if i == 0 { poly::scale(&num, gain) } else { num };
            out.push(RationalTf::new(num, den)?);
        }
        Ok(out)
    }
}

fn positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{what} must be positive, got {v}"
        )))
    }
}

/// Resolved non-minimum-phase resonant damping controller parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NrcParams {
    pub gamma: f64,
    pub corner_multiplier: f64,
    pub k: f64,
    pub omega_a_hz: f64,
}

/// `k (s - w_a) / (s + w_a)` with `k = gamma / |G(0)|` and
/// `w_a = n * first_mode_hz`.
pub fn make_nrc(
    gamma: f64,
    corner_multiplier: f64,
    plant_dc_gain: f64,
    first_mode_hz: f64,
) -> Result<(NrcParams, RationalTf)> {
    positive("plant DC gain", plant_dc_gain)?;
    positive("NRC corner multiplier", corner_multiplier)?;
    positive("first resonance", first_mode_hz)?;
    if !gamma.is_finite() {
        return Err(Error::InvalidParameter("NRC gamma must be finite".into()));
    }
    let k = gamma / plant_dc_gain;
    let omega_a_hz = corner_multiplier * first_mode_hz;
    let wa = hz_to_rad(omega_a_hz);
    let tf = RationalTf::new(vec![k, -k * wa], vec![1.0, wa])?;
    Ok((
        NrcParams {
            gamma,
            corner_multiplier,
            k,
            omega_a_hz,
        },
        tf,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NotchParams {
    pub omega_hz: f64,
    pub q_num: f64,
    pub q_den: f64,
}

/// PI + notches + low-pass tracking controller parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingParams {
    pub kp: f64,
    pub omega_i_hz: f64,
    pub notches: Vec<NotchParams>,
    pub omega_lpf_hz: f64,
}

/// `kp (1 + w_i/s) * prod N_j(s) * w_lpf/(s + w_lpf)`. A zero `omega_i_hz`
/// drops the integrator.
pub fn make_tracking_controller(p: &TrackingParams) -> Result<RationalTf> {
    if !p.kp.is_finite() {
        return Err(Error::InvalidParameter("kp must be finite".into()));
    }
    if p.omega_i_hz < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "integrator corner must be >= 0, got {}",
            p.omega_i_hz
        )));
    }
    let pi = if p.omega_i_hz == 0.0 {
        RationalTf::gain(p.kp)
    } else {
        let wi = hz_to_rad(p.omega_i_hz);
        RationalTf::new(vec![p.kp, p.kp * wi], vec![1.0, 0.0])?
    };
    let mut c = pi;
    for n in &p.notches {
        c = c.series(&RationalTf::notch(n.omega_hz, n.q_num, n.q_den)?);
    }
    Ok(c.series(&RationalTf::lowpass(p.omega_lpf_hz)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrossingKind {
    GainDown,
    GainUp,
    PhaseMinus180,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub kind: CrossingKind,
    pub freq_hz: f64,
    /// Phase (deg) at a gain crossing, magnitude (dB) at a phase crossing.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopMargins {
    pub crossover_hz: f64,
    pub phase_margin_deg: f64,
    /// `f64::INFINITY` when the phase never reaches -180 deg above crossover.
    pub gain_margin_db: f64,
    pub crossings: Vec<Crossing>,
}

fn check_grid(frf: &[FrfPoint]) -> Result<()> {
    if frf.len() < 2 {
        return Err(Error::InvalidParameter("grid needs at least two points".into()));
    }
    if frf.windows(2).any(|w| !(w[1].freq_hz > w[0].freq_hz)) {
        return Err(Error::InvalidParameter(
            "frequency grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Log-frequency position where a linear quantity crosses `level` between
/// two grid points.
fn interp_log_freq(f0: f64, f1: f64, v0: f64, v1: f64, level: f64) -> (f64, f64) {
    let t = if v1 == v0 { 0.0 } else { (level - v0) / (v1 - v0) };
    let lf = f0.ln() + t * (f1.ln() - f0.ln());
    (lf.exp(), t)
}

/// Crossover frequency (lowest downward 0 dB crossing), phase margin and
/// gain margin of an open-loop frequency response.
pub fn margins_and_crossover(loop_frf: &[FrfPoint]) -> Result<LoopMargins> {
    check_grid(loop_frf)?;
    let mags: Vec<f64> = loop_frf.iter().map(|p| p.mag_db()).collect();
    let resp: Vec<Complex64> = loop_frf.iter().map(|p| p.response).collect();
    let phase = unwrap_phase_deg(&resp);
    let mut crossings = Vec::new();

    for i in 0..loop_frf.len() - 1 {
        let (f0, f1) = (loop_frf[i].freq_hz, loop_frf[i + 1].freq_hz);
        let (m0, m1) = (mags[i], mags[i + 1]);
        let down = m0 > 0.0 && m1 <= 0.0;
        let up = m0 <= 0.0 && m1 > 0.0;
        if down || up {
            let (f, t) = interp_log_freq(f0, f1, m0, m1, 0.0);
            crossings.push(Crossing {
                kind: if down { CrossingKind::GainDown } else { CrossingKind::GainUp },
                freq_hz: f,
                value: phase[i] + t * (phase[i + 1] - phase[i]),
            });
        }
        // distance from -180 (mod 360), wrapped to (-180, 180]
        let q0 = wrap_deg(phase[i] + 180.0);
        let q1 = wrap_deg(phase[i + 1] + 180.0);
        let straddles = (q0 > 0.0 && q1 <= 0.0) || (q0 < 0.0 && q1 >= 0.0) || (i == 0 && q0 == 0.0);
        if straddles && (q1 - q0).abs() < 180.0 {
            let (f, t) = if q0 == 0.0 {
                (f0, 0.0)
            } else {
                interp_log_freq(f0, f1, q0, q1, 0.0)
            };
            crossings.push(Crossing {
                kind: CrossingKind::PhaseMinus180,
                freq_hz: f,
                value: m0 + t * (m1 - m0),
            });
        }
    }

    let cross = crossings
        .iter()
        .find(|c| c.kind == CrossingKind::GainDown)
        .ok_or(Error::NoCrossover)?;
    let crossover_hz = cross.freq_hz;
    let phase_margin_deg = wrap_deg(180.0 + cross.value);
    let gain_margin_db = crossings
        .iter()
        .find(|c| c.kind == CrossingKind::PhaseMinus180 && c.freq_hz >= crossover_hz)
        .map(|c| -c.value)
        .unwrap_or(f64::INFINITY);
    Ok(LoopMargins {
        crossover_hz,
        phase_margin_deg,
        gain_margin_db,
        crossings,
    })
}

/// Lowest frequency where |T| leaves the +/-3 dB band around its value at the
/// first grid point.
pub fn closed_loop_bandwidth(frf: &[FrfPoint]) -> Result<f64> {
    check_grid(frf)?;
    let mags: Vec<f64> = frf.iter().map(|p| p.mag_db()).collect();
    let dc = mags[0];
    for i in 1..frf.len() {
        let dev = mags[i] - dc;
        if dev.abs() > 3.0 {
            let level = if dev > 0.0 { dc + 3.0 } else { dc - 3.0 };
            let (f, _) = interp_log_freq(frf[i - 1].freq_hz, frf[i].freq_hz, mags[i - 1], mags[i], level);
            return Ok(f);
        }
    }
    Err(Error::BandwidthBeyondGrid)
}

/// Direct-form-II-transposed difference equation with an optional integer
/// output delay.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFilter {
    b: Vec<f64>,
    a: Vec<f64>,
    ts: f64,
    state: Vec<f64>,
    delay: VecDeque<f64>,
}

impl DiscreteFilter {
    /// `a[0]` must be nonzero; coefficients are normalized so that `a[0] = 1`.
    pub fn new(b: Vec<f64>, a: Vec<f64>, ts: f64) -> Result<Self> {
        Self::with_delay(b, a, ts, 0)
    }

    pub fn with_delay(mut b: Vec<f64>, mut a: Vec<f64>, ts: f64, delay_samples: usize) -> Result<Self> {
        if !(ts > 0.0) {
            return Err(Error::InvalidParameter(format!("sample time must be > 0, got {ts}")));
        }
        if a.is_empty() || b.is_empty() || a[0] == 0.0 {
            return Err(Error::InvalidParameter("invalid difference-equation coefficients".into()));
        }
        let order = a.len().max(b.len()) - 1;
        b.resize(order + 1, 0.0);
        a.resize(order + 1, 0.0);
        let a0 = a[0];
        b.iter_mut().for_each(|c| *c /= a0);
        a.iter_mut().for_each(|c| *c /= a0);
        Ok(Self {
            b,
            a,
            ts,
            state: vec![0.0; order],
            delay: std::iter::repeat_n(0.0, delay_samples).collect(),
        })
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }

    pub fn order(&self) -> usize {
        self.state.len()
    }

    pub fn delay_samples(&self) -> usize {
        self.delay.len()
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|s| *s = 0.0);
        self.delay.iter_mut().for_each(|s| *s = 0.0);
    }

    pub fn step(&mut self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite filter input {x}")));
        }
        let y = self.b[0] * x + self.state.first().copied().unwrap_or(0.0);
        let m = self.state.len();
        for i in 0..m {
            let next = if i + 1 < m { self.state[i + 1] } else { 0.0 };
            self.state[i] = self.b[i + 1] * x - self.a[i + 1] * y + next;
        }
        if self.delay.is_empty() {
            Ok(y)
        } else {
            self.delay.push_back(y);
            Ok(self.delay.pop_front().unwrap())
        }
    }

    /// Frequency response of the difference equation at `freq_hz`.
    pub fn eval_frf(&self, freq_hz: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -hz_to_rad(freq_hz) * self.ts);
        let horner = |c: &[f64]| c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &x| acc * z_inv + x);
        let h = horner(&self.b) / horner(&self.a);
        h * z_inv.powu(self.delay.len() as u32)
    }
}

/// Convenience alias for [`step_filter`]-style free-function use.
pub fn step_filter(f: &mut DiscreteFilter, x: f64) -> Result<f64> {
    f.step(x)
}

fn delay_samples(delay_s: f64, ts: f64) -> Result<usize> {
    if delay_s == 0.0 {
        return Ok(0);
    }
    let n = (delay_s / ts).round();
    if (delay_s - n * ts).abs() > 1e-9 * ts.max(delay_s) {
        return Err(Error::FractionalDelay { delay_s, ts });
    }
    Ok(n as usize)
}

/// Tustin substitution `s = (2/ts)(z-1)/(z+1)`. The delay must be an integer
/// number of samples and becomes an output buffer.
pub fn bilinear_discretize(tf: &RationalTf, ts: f64) -> Result<DiscreteFilter> {
    if !(ts > 0.0) {
        return Err(Error::InvalidParameter(format!("sample time must be > 0, got {ts}")));
    }
    if !tf.is_proper() {
        return Err(Error::Improper {
            num: tf.num_degree(),
            den: tf.den_degree(),
        });
    }
    let delay = delay_samples(tf.delay_s(), ts)?;
    let n = tf.den_degree();
    let c = 2.0 / ts;
    let to_z = |coeffs: &[f64]| -> Vec<f64> {
        // coefficient of s^k is coeffs[len-1-k]
        let mut out = vec![0.0; n + 1];
        for (idx, &ck) in coeffs.iter().enumerate() {
            let k = coeffs.len() - 1 - idx;
            if ck == 0.0 {
                continue;
            }
            let term = poly::mul(&poly::pow(&[1.0, -1.0], k), &poly::pow(&[1.0, 1.0], n - k));
            let scale = ck * c.powi(k as i32);
            for (o, t) in out.iter_mut().zip(&term) {
                *o += scale * t;
            }
        }
        out
    };
    let num = &tf.num()[tf.num().len() - 1 - tf.num_degree()..];
    let den = &tf.den()[tf.den().len() - 1 - n..];
    DiscreteFilter::with_delay(to_z(num), to_z(den), ts, delay)
}

/// Series chain of low-order Tustin sections; better conditioned than a
/// single high-order difference equation.
#[derive(Debug, Clone)]
pub struct DiscreteCascade {
    stages: Vec<DiscreteFilter>,
}

impl DiscreteCascade {
    pub fn from_tf(tf: &RationalTf, ts: f64) -> Result<Self> {
        let delay = delay_samples(tf.delay_s(), ts)?;
        let mut stages = tf
            .sections()?
            .iter()
            .map(|s| bilinear_discretize(s, ts))
            .collect::<Result<Vec<_>>>()?;
        if delay > 0 {
            stages.push(DiscreteFilter::with_delay(vec![1.0], vec![1.0], ts, delay)?);
        }
        Ok(Self { stages })
    }

    pub fn step(&mut self, x: f64) -> Result<f64> {
        self.stages.iter_mut().try_fold(x, |v, s| s.step(v))
    }

    pub fn eval_frf(&self, freq_hz: f64) -> Complex64 {
        self.stages
            .iter()
            .map(|s| s.eval_frf(freq_hz))
            .product()
    }

    pub fn reset(&mut self) {
        self.stages.iter_mut().for_each(|s| s.reset());
    }
}
