//! Higher-order sinusoidal-input describing functions of reset elements and
//! the harmonic loop mappings of the dual-loop (damping + tracking)
//! architecture.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{margins_and_crossover, unwrap_phase_deg, FrfPoint, LoopMargins, RationalTf};
use crate::reset::{base_linear, ResetElement};

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

struct ResetTerms {
    lambda_inv: DMatrix<f64>,
    delta: DMatrix<f64>,
    /// `Delta_r^-1 A_rho Delta`
    gain: DMatrix<f64>,
}

fn reset_terms(r: &ResetElement, omega: f64) -> Result<ResetTerms> {
    if !(omega > 0.0) {
        return Err(Error::InvalidParameter(format!("omega must be positive, got {omega}")));
    }
    let n = r.order();
    let ident = DMatrix::<f64>::identity(n, n);
    let a = r.a();
    let rho = r.reset_matrix();
    let lambda = &ident * (omega * omega) + a * a;
    let lambda_inv = lambda
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter(format!("w^2 I + A^2 singular at {omega} rad/s")))?;
    let e = (a * (PI / omega)).exp();
    let delta = &ident + &e;
    let delta_r = &ident + &rho * &e;
    let delta_r_inv = delta_r
        .try_inverse()
        .ok_or(Error::DegenerateReset { omega })?;
    let gain = delta_r_inv * &rho * &delta;
    Ok(ResetTerms { lambda_inv, delta, gain })
}

/// `Theta_D(w) = -(2 w^2 / pi) Delta (Gamma_r - Lambda^-1)` with
/// `Gamma_r = Delta_r^-1 A_rho Delta Lambda^-1`. `omega` in rad/s.
pub fn theta_d(r: &ResetElement, omega: f64) -> Result<DMatrix<f64>> {
    let t = reset_terms(r, omega)?;
    let gamma_r = &t.gain * &t.lambda_inv;
    Ok(&t.delta * (gamma_r - &t.lambda_inv) * (-2.0 * omega * omega / PI))
}

/// HOSIDF `H_n(w)` of a reset element triggered by its own input.
/// Odd orders only carry energy; even orders return exactly zero.
pub fn harmonic_gain(r: &ResetElement, omega: f64, n: u32) -> Result<Complex64> {
    if n == 0 {
        return Err(Error::InvalidParameter("harmonic order must be >= 1".into()));
    }
    if n.is_multiple_of(2) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let th = to_complex(&theta_d(r, omega)?);
    let k = r.order();
    let ident = DMatrix::<Complex64>::identity(k, k);
    let a = to_complex(r.a());
    let b = to_complex(&DMatrix::from_column_slice(k, 1, r.b().as_slice()));
    let c = to_complex(&DMatrix::from_row_slice(1, k, r.c().as_slice()));
    let resolvent = |w: f64| -> Result<DMatrix<Complex64>> {
        (&ident * (J * w) - &a)
            .try_inverse()
            .ok_or_else(|| Error::InvalidParameter(format!("jw I - A singular at {w} rad/s")))
    };
    if n == 1 {
        let h = &c * resolvent(omega)? * (&ident + &th * J) * &b;
        Ok(h[(0, 0)] + r.d())
    } else {
        let h = &c * resolvent(n as f64 * omega)? * (&th * J) * &b;
        Ok(h[(0, 0)])
    }
}

/// HOSIDF of a reset element whose resets are triggered by a phase-shifted
/// copy of its sinusoidal input: for `e_r = sin(w t)` the trigger is
/// `sin(w t + trigger_phase)`, so resets fire at `w t = k pi - trigger_phase`.
///
/// Derived from the antiperiodic steady state: after a reset at `t0` the
/// state deviation from the linear steady state is `e^{A(t-t0)} v` with
/// `v = (Delta_r^-1 A_rho Delta - I) x_ss(t0)`. With `trigger_phase = 0`
/// this reduces to [`harmonic_gain`].
pub fn harmonic_gain_shifted(
    r: &ResetElement,
    omega: f64,
    n: u32,
    trigger_phase: f64,
) -> Result<Complex64> {
    if n == 0 {
        return Err(Error::InvalidParameter("harmonic order must be >= 1".into()));
    }
    if n.is_multiple_of(2) {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let t = reset_terms(r, omega)?;
    let k = r.order();
    let ident = DMatrix::<Complex64>::identity(k, k);
    let a = to_complex(r.a());
    let b = DVector::from_iterator(k, r.b().iter().map(|&v| Complex64::new(v, 0.0)));
    let resolvent = |w: f64| -> Result<DMatrix<Complex64>> {
        (&ident * (J * w) - &a)
            .try_inverse()
            .ok_or_else(|| Error::InvalidParameter(format!("jw I - A singular at {w} rad/s")))
    };
    let x_phasor = resolvent(omega)? * &b;
    let theta = -trigger_phase;
    let rot = Complex64::from_polar(1.0, theta);
    let x0 = DVector::from_iterator(k, x_phasor.iter().map(|v| (v * rot).im));
    let m = &t.gain - DMatrix::<f64>::identity(k, k);
    let v = &t.delta * m * x0;
    let v = DVector::from_iterator(k, v.iter().map(|&x| Complex64::new(x, 0.0)));
    let q = resolvent(n as f64 * omega)? * v;
    let cq: Complex64 = r
        .c()
        .iter()
        .zip(q.iter())
        .map(|(&ci, qi)| qi * ci)
        .sum();
    let extra = J * 2.0 * (omega / PI) * Complex64::from_polar(1.0, -(n as f64) * theta) * cq;
    if n == 1 {
        let cx: Complex64 = r
            .c()
            .iter()
            .zip(x_phasor.iter())
            .map(|(&ci, xi)| xi * ci)
            .sum();
        Ok(cx + r.d() + extra)
    } else {
        Ok(extra)
    }
}

/// Complex harmonic gains over (frequency, odd order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicResponse {
    freqs_hz: Vec<f64>,
    orders: Vec<u32>,
    /// `table[i][j]` is the gain at `freqs_hz[i]` for `orders[j]`.
    table: Vec<Vec<Complex64>>,
}

impl HarmonicResponse {
    pub fn new(freqs_hz: Vec<f64>, orders: Vec<u32>, table: Vec<Vec<Complex64>>) -> Result<Self> {
        validate_grid(&freqs_hz, &orders)?;
        if table.len() != freqs_hz.len() || table.iter().any(|row| row.len() != orders.len()) {
            return Err(Error::InvalidParameter("incomplete harmonic table".into()));
        }
        Ok(Self { freqs_hz, orders, table })
    }

    pub fn freqs_hz(&self) -> &[f64] {
        &self.freqs_hz
    }

    pub fn orders(&self) -> &[u32] {
        &self.orders
    }

    pub fn get(&self, freq_index: usize, order: u32) -> Option<Complex64> {
        let j = self.orders.iter().position(|&o| o == order)?;
        self.table.get(freq_index).map(|row| row[j])
    }

    /// One order as an FRF over the base-frequency grid.
    pub fn row(&self, order: u32) -> Option<Vec<FrfPoint>> {
        let j = self.orders.iter().position(|&o| o == order)?;
        Some(
            self.freqs_hz
                .iter()
                .zip(&self.table)
                .map(|(&f, row)| FrfPoint { freq_hz: f, response: row[j] })
                .collect(),
        )
    }

    /// Root-sum-square magnitude over all orders at each base frequency.
    pub fn rss_magnitude(&self) -> Vec<f64> {
        self.table
            .iter()
            .map(|row| row.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt())
            .collect()
    }

    /// Writes `freq_hz,order,mag_db,phase_deg,rss_db` rows; phase is
    /// unwrapped along frequency per order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "freq_hz,order,mag_db,phase_deg,rss_db")?;
        let phases: Vec<Vec<f64>> = (0..self.orders.len())
            .map(|j| unwrap_phase_deg(&self.table.iter().map(|row| row[j]).collect::<Vec<_>>()))
            .collect();
        let rss = self.rss_magnitude();
        for (i, &f) in self.freqs_hz.iter().enumerate() {
            for (j, &o) in self.orders.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    f,
                    o,
                    20.0 * self.table[i][j].norm().log10(),
                    phases[j][i],
                    20.0 * rss[i].log10()
                )?;
            }
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

fn validate_grid(freqs_hz: &[f64], orders: &[u32]) -> Result<()> {
    if freqs_hz.is_empty() || freqs_hz.windows(2).any(|w| !(w[1] > w[0])) || !(freqs_hz[0] > 0.0) {
        return Err(Error::InvalidParameter(
            "base frequency grid must be positive and strictly increasing".into(),
        ));
    }
    if orders.is_empty() || orders.iter().any(|&o| o % 2 == 0) {
        return Err(Error::InvalidParameter(
            "harmonic orders must be odd (even orders are identically zero)".into(),
        ));
    }
    Ok(())
}

pub const DEFAULT_ORDERS: [u32; 5] = [1, 3, 5, 7, 9];

/// Plant description for frequency-domain analysis.
#[derive(Debug, Clone, PartialEq)]
pub enum PlantResponse {
    Rational(RationalTf),
    /// Measured response, interpolated log-linearly in frequency on
    /// magnitude (dB) and unwrapped phase.
    Measured(Vec<FrfPoint>),
}

impl PlantResponse {
    pub fn eval(&self, freq_hz: f64) -> Result<Complex64> {
        match self {
            PlantResponse::Rational(tf) => tf.eval_frf(freq_hz),
            PlantResponse::Measured(points) => interpolate_frf(points, freq_hz),
        }
    }

    pub fn as_rational(&self) -> Option<&RationalTf> {
        match self {
            PlantResponse::Rational(tf) => Some(tf),
            PlantResponse::Measured(_) => None,
        }
    }
}

fn interpolate_frf(points: &[FrfPoint], freq_hz: f64) -> Result<Complex64> {
    let (lo, hi) = (points[0].freq_hz, points[points.len() - 1].freq_hz);
    if !(freq_hz >= lo && freq_hz <= hi) {
        return Err(Error::OutsideFrfRange { freq_hz, min_hz: lo, max_hz: hi });
    }
    let i = points.partition_point(|p| p.freq_hz <= freq_hz).saturating_sub(1);
    if i + 1 >= points.len() || points[i].freq_hz == freq_hz {
        return Ok(points[i].response);
    }
    let (p0, p1) = (points[i], points[i + 1]);
    let t = (freq_hz.ln() - p0.freq_hz.ln()) / (p1.freq_hz.ln() - p0.freq_hz.ln());
    let (m0, m1) = (p0.response.norm().ln(), p1.response.norm().ln());
    let a0 = p0.response.arg();
    let da = crate::lti::wrap_deg((p1.response.arg() - a0).to_degrees()).to_radians();
    Ok(Complex64::from_polar((m0 + t * (m1 - m0)).exp(), a0 + t * da))
}

/// Reset element in series with the gain correction and lead-lag filter.
#[derive(Debug, Clone, PartialEq)]
pub struct CglpStage {
    pub reset: ResetElement,
    pub k_c: f64,
    pub lead_lag: RationalTf,
}

impl CglpStage {
    /// Linear pass-through: unity gain, no resets, no harmonics.
    pub fn identity() -> Self {
        Self {
            reset: ResetElement::unity(),
            k_c: 1.0,
            lead_lag: RationalTf::gain(1.0),
        }
    }

    /// `R_bl(s) k_c C_l(s)`.
    pub fn base_linear(&self) -> RationalTf {
        base_linear(&self.reset).series(&self.lead_lag).scaled(self.k_c)
    }
}

/// How the base-linear loop inside the higher-order sensitivity terms is
/// formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseLinearLoop {
    /// `R_bl k_c C_l C_t G / (1 + G C_d)`: the full outer loop with resets
    /// disabled.
    #[default]
    Full,
    /// `R_bl G / (1 + G C_d)` exactly as the reset stage alone.
    ResetOnly,
}

/// The dual-loop assembly: plant, damping controller, tracking controller,
/// CgLp stage and optional shaping filter in the reset-trigger path.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopModel {
    pub plant: PlantResponse,
    pub damping: RationalTf,
    pub tracking: RationalTf,
    pub cglp: CglpStage,
    pub shaping: Option<RationalTf>,
    pub base_linear_loop: BaseLinearLoop,
}

impl LoopModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.cglp.k_c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gain correction must be positive, got {}",
                self.cglp.k_c
            )));
        }
        Ok(())
    }

    /// `G / (1 + G C_d)` at `freq_hz`.
    pub fn damped_plant(&self, freq_hz: f64) -> Result<Complex64> {
        let g = self.plant.eval(freq_hz)?;
        let inner = Complex64::new(1.0, 0.0) + g * self.damping.eval_frf(freq_hz)?;
        if inner.norm() < 1e-12 {
            return Err(Error::InnerLoopSingular { freq_hz });
        }
        Ok(g / inner)
    }

    /// Phase of the shaping filter at `freq_hz` (zero when absent).
    fn trigger_phase(&self, freq_hz: f64) -> Result<f64> {
        match &self.shaping {
            Some(cs) => Ok(cs.eval_frf(freq_hz)?.arg()),
            None => Ok(0.0),
        }
    }

    /// CgLp harmonic gain: reset HOSIDF at `w` times `k_c C_l(j n w)`.
    pub fn cglp_gain(&self, freq_hz: f64, n: u32) -> Result<Complex64> {
        let omega = 2.0 * PI * freq_hz;
        let h = if self.shaping.is_some() {
            harmonic_gain_shifted(&self.cglp.reset, omega, n, self.trigger_phase(freq_hz)?)?
        } else {
            harmonic_gain(&self.cglp.reset, omega, n)?
        };
        if h == Complex64::new(0.0, 0.0) {
            return Ok(h);
        }
        Ok(h * self.cglp.k_c * self.cglp.lead_lag.eval_frf(n as f64 * freq_hz)?)
    }

    fn base_linear_loop_at(&self, freq_hz: f64) -> Result<Complex64> {
        let p = self.damped_plant(freq_hz)?;
        let r_bl = base_linear(&self.cglp.reset).eval_frf(freq_hz)?;
        Ok(match self.base_linear_loop {
            BaseLinearLoop::Full => {
                r_bl * self.cglp.k_c
                    * self.cglp.lead_lag.eval_frf(freq_hz)?
                    * self.tracking.eval_frf(freq_hz)?
                    * p
            }
            BaseLinearLoop::ResetOnly => r_bl * p,
        })
    }
}

fn tabulate<F>(grid_hz: &[f64], orders: &[u32], mut f: F) -> Result<HarmonicResponse>
where
    F: FnMut(f64, u32) -> Result<Complex64>,
{
    validate_grid(grid_hz, orders)?;
    let table = grid_hz
        .iter()
        .map(|&w| orders.iter().map(|&n| f(w, n)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    HarmonicResponse::new(grid_hz.to_vec(), orders.to_vec(), table)
}

/// `H_n(w) k_c C_l(j n w)` over the grid.
pub fn cglp_harmonics(model: &LoopModel, grid_hz: &[f64], orders: &[u32]) -> Result<HarmonicResponse> {
    model.validate()?;
    tabulate(grid_hz, orders, |f, n| model.cglp_gain(f, n))
}

/// Dual open loop `L_D` and outer open loop `L` harmonic responses.
pub fn open_loop_harmonics(
    model: &LoopModel,
    grid_hz: &[f64],
    orders: &[u32],
) -> Result<(HarmonicResponse, HarmonicResponse)> {
    model.validate()?;
    let dual = tabulate(grid_hz, orders, |f, n| {
        let fh = n as f64 * f;
        let g = model.plant.eval(fh)?;
        let h = model.cglp_gain(f, n)?;
        Ok(g * (h * model.tracking.eval_frf(fh)? + model.damping.eval_frf(fh)?))
    })?;
    let outer = tabulate(grid_hz, orders, |f, n| outer_loop(model, f, n))?;
    Ok((dual, outer))
}

fn outer_loop(model: &LoopModel, f: f64, n: u32) -> Result<Complex64> {
    let fh = n as f64 * f;
    let h = model.cglp_gain(f, n)?;
    if h == Complex64::new(0.0, 0.0) {
        // still surface inner-loop singularities at the harmonic frequency
        model.damped_plant(fh)?;
        return Ok(h);
    }
    Ok(h * model.tracking.eval_frf(fh)? * model.damped_plant(fh)?)
}

/// Shared machinery for the sensitivity and complementary mappings:
/// returns `(S_er_1, [L_n S_bl(j n w) (|S_er_1| angle n*angle(S_er_1))])`.
fn harmonic_closed_loop(
    model: &LoopModel,
    grid_hz: &[f64],
    orders: &[u32],
) -> Result<(Vec<Complex64>, Vec<Complex64>, Vec<Vec<Complex64>>)> {
    model.validate()?;
    validate_grid(grid_hz, orders)?;
    let one = Complex64::new(1.0, 0.0);
    let mut l1 = Vec::with_capacity(grid_hz.len());
    let mut s1 = Vec::with_capacity(grid_hz.len());
    for &f in grid_hz {
        let l = outer_loop(model, f, 1)?;
        let den = one + l;
        if den.norm() < 1e-12 {
            return Err(Error::SingularLoop { freq_hz: f });
        }
        l1.push(l);
        s1.push(one / den);
    }
    let phase = unwrap_phase_deg(&s1);
    let mut higher = Vec::with_capacity(grid_hz.len());
    for (i, &f) in grid_hz.iter().enumerate() {
        let mut row = Vec::with_capacity(orders.len());
        for &n in orders {
            if n == 1 {
                row.push(Complex64::new(0.0, 0.0));
                continue;
            }
            let fh = n as f64 * f;
            let ln = outer_loop(model, f, n)?;
            let lbl = model.base_linear_loop_at(fh)?;
            let den = one + lbl;
            if den.norm() < 1e-12 {
                return Err(Error::SingularLoop { freq_hz: fh });
            }
            let rotated = Complex64::from_polar(s1[i].norm(), (n as f64 * phase[i]).to_radians());
            row.push(ln / den * rotated);
        }
        higher.push(row);
    }
    Ok((l1, s1, higher))
}

/// Error sensitivity harmonics `S_er_n`.
pub fn sensitivity_harmonics(model: &LoopModel, grid_hz: &[f64], orders: &[u32]) -> Result<HarmonicResponse> {
    let (_, s1, higher) = harmonic_closed_loop(model, grid_hz, orders)?;
    let table = higher
        .into_iter()
        .zip(&s1)
        .map(|(row, &s)| {
            row.into_iter()
                .zip(orders)
                .map(|(v, &n)| if n == 1 { s } else { -v })
                .collect()
        })
        .collect();
    HarmonicResponse::new(grid_hz.to_vec(), orders.to_vec(), table)
}

/// Complementary sensitivity harmonics `T_yr_n`.
pub fn complementary_harmonics(model: &LoopModel, grid_hz: &[f64], orders: &[u32]) -> Result<HarmonicResponse> {
    let (l1, s1, higher) = harmonic_closed_loop(model, grid_hz, orders)?;
    let table = higher
        .into_iter()
        .zip(l1.iter().zip(&s1))
        .map(|(row, (&l, &s))| {
            row.into_iter()
                .zip(orders)
                .map(|(v, &n)| if n == 1 { l * s } else { v })
                .collect()
        })
        .collect();
    HarmonicResponse::new(grid_hz.to_vec(), orders.to_vec(), table)
}

/// Crossover and margins read from the first-order row.
pub fn crossover_from_harmonics(h: &HarmonicResponse) -> Result<LoopMargins> {
    let row = h
        .row(1)
        .ok_or_else(|| Error::InvalidParameter("harmonic response lacks order 1".into()))?;
    margins_and_crossover(&row)
}
