//! CgLp synthesis from a desired phase lead and shaping-filter synthesis
//! with a rational approximation of the fractional lead-lag term.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hosidf::{harmonic_gain, CglpStage};
use crate::lti::{hz_to_rad, logspace, FrfPoint, RationalTf};
use crate::poly;
use crate::reset::{make_pfore, PforeParams};

/// `w_r = w_l / sqrt(1 + (4 (1 - g) / (pi (1 + g)))^2)`.
pub fn omega_r_from_omega_l(omega_l_hz: f64, gamma_r: f64) -> Result<f64> {
    if gamma_r <= -1.0 || gamma_r > 1.0 {
        return Err(Error::InvalidParameter(format!(
            "reset factor must lie in (-1, 1], got {gamma_r}"
        )));
    }
    let ratio = 4.0 * (1.0 - gamma_r) / (PI * (1.0 + gamma_r));
    Ok(omega_l_hz / (1.0 + ratio * ratio).sqrt())
}

/// `k_c = (w_f - w_l) / w_f`.
pub fn gain_correction(omega_l_hz: f64, omega_f_hz: f64) -> Result<f64> {
    if !(omega_l_hz > 0.0 && omega_f_hz > omega_l_hz) {
        return Err(Error::InvalidParameter(format!(
            "gain correction requires w_f > w_l > 0, got w_l = {omega_l_hz}, w_f = {omega_f_hz}"
        )));
    }
    Ok((omega_f_hz - omega_l_hz) / omega_f_hz)
}

/// Fully resolved CgLp: PFORE reset stage, gain correction and lead-lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CglpDesign {
    pub phase_lead_deg: f64,
    pub target_hz: f64,
    pub gamma_r: f64,
    pub pfore: PforeParams,
    pub k_c: f64,
}

impl CglpDesign {
    /// Resolves `w_r`, `k_c` and the feedthrough from a `(w_l, w_f)` pair.
    pub fn from_corners(omega_l_hz: f64, omega_f_hz: f64, gamma_r: f64) -> Result<Self> {
        let k_c = gain_correction(omega_l_hz, omega_f_hz)?;
        let omega_r_hz = omega_r_from_omega_l(omega_l_hz, gamma_r)?;
        Ok(Self {
            phase_lead_deg: f64::NAN,
            target_hz: f64::NAN,
            gamma_r,
            pfore: PforeParams { omega_r_hz, omega_l_hz, omega_f_hz, gamma_r },
            k_c,
        })
    }

    pub fn lead_lag(&self) -> RationalTf {
        RationalTf::lead_lag(self.pfore.omega_l_hz, self.pfore.omega_f_hz)
            .expect("validated corners")
    }

    pub fn stage(&self) -> Result<CglpStage> {
        Ok(CglpStage {
            reset: make_pfore(&self.pfore)?,
            k_c: self.k_c,
            lead_lag: self.lead_lag(),
        })
    }

    /// First-harmonic CgLp gain at `freq_hz`.
    pub fn first_harmonic(&self, freq_hz: f64) -> Result<Complex64> {
        let stage = self.stage()?;
        let h = harmonic_gain(&stage.reset, hz_to_rad(freq_hz), 1)?;
        Ok(h * self.k_c * stage.lead_lag.eval_frf(freq_hz)?)
    }

    /// `k_c (1 + D_r)`; identically one for this parameterization.
    pub fn dc_identity(&self) -> f64 {
        let d_r = self.pfore.omega_l_hz / (self.pfore.omega_f_hz - self.pfore.omega_l_hz);
        self.k_c * (1.0 + d_r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneOptions {
    /// Lower bound on (phase-peak frequency / target).
    pub min_peak_ratio: f64,
    /// Preferred (phase-peak frequency / target); the outer search picks
    /// the `w_f/w_l` spread whose phase peak lands here.
    pub peak_ratio: f64,
    /// Largest `w_f/w_l` spread considered.
    pub max_spread: f64,
    pub phase_tol_deg: f64,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            min_peak_ratio: 1.05,
            peak_ratio: 1.45,
            max_spread: 200.0,
            phase_tol_deg: 0.1,
        }
    }
}

/// First-harmonic phase (deg) of a unit-`w_l` CgLp with spread `rho` at the
/// normalized frequency `x = f / w_l`. The response depends only on these
/// two ratios for a fixed reset factor.
fn normalized_phase(x: f64, rho: f64, gamma_r: f64) -> f64 {
    let d = CglpDesign::from_corners(1.0, rho, gamma_r).expect("rho > 1");
    d.first_harmonic(x).map(|h| h.arg().to_degrees()).unwrap_or(f64::NAN)
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Normalized location (log10 of `f/w_l`) and value of the phase peak.
fn phase_peak(rho: f64, gamma_r: f64) -> (f64, f64) {
    let n = 240;
    let (lo, hi) = (-2.0, 2.0);
    let step = (hi - lo) / n as f64;
    let best = (0..=n)
        .map(|i| lo + step * i as f64)
        .map(|lx| (lx, normalized_phase(10f64.powf(lx), rho, gamma_r)))
        .fold((lo, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc });
    golden_max(
        |lx| normalized_phase(10f64.powf(lx), rho, gamma_r),
        best.0 - step,
        best.0 + step,
        1e-10,
    )
}

/// For spread `rho`, the normalized frequency below the peak where the
/// phase equals `phi` (log-space bisection), plus the peak location.
fn lead_point(rho: f64, gamma_r: f64, phi: f64) -> Option<(f64, f64)> {
    let (lpk, pmax) = phase_peak(rho, gamma_r);
    if pmax < phi {
        return None;
    }
    let mut lo = lpk - 4.0;
    let mut hi = lpk;
    if normalized_phase(10f64.powf(lo), rho, gamma_r) >= phi {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normalized_phase(10f64.powf(mid), rho, gamma_r) < phi {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Some((0.5 * (lo + hi), lpk))
}

/// Finds `(w_l, w_f)` so that the first-harmonic CgLp phase at `target_hz`
/// equals `phase_lead_deg` with the phase peak placed above the target.
pub fn tune_cglp(phase_lead_deg: f64, target_hz: f64, gamma_r: f64) -> Result<CglpDesign> {
    tune_cglp_with(phase_lead_deg, target_hz, gamma_r, &TuneOptions::default())
}

pub fn tune_cglp_with(
    phase_lead_deg: f64,
    target_hz: f64,
    gamma_r: f64,
    opts: &TuneOptions,
) -> Result<CglpDesign> {
    if !(phase_lead_deg > 0.0 && phase_lead_deg < 60.0) {
        return Err(Error::InvalidParameter(format!(
            "phase lead must lie in (0, 60) deg, got {phase_lead_deg}"
        )));
    }
    if !(target_hz > 0.0) {
        return Err(Error::InvalidParameter(format!("target must be positive, got {target_hz}")));
    }
    if !(opts.peak_ratio >= opts.min_peak_ratio) {
        return Err(Error::InvalidParameter(
            "preferred peak ratio is below the minimum".into(),
        ));
    }
    let ln_max = opts.max_spread.ln();
    let (_, max_phase) = phase_peak(opts.max_spread, gamma_r);
    if max_phase < phase_lead_deg {
        return Err(Error::InfeasiblePhaseLead {
            requested_deg: phase_lead_deg,
            max_deg: max_phase,
        });
    }
    // smallest feasible spread: bisection on ln(rho)
    let (mut lo, mut hi) = (1e-6, ln_max);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if phase_peak(mid.exp(), gamma_r).1 >= phase_lead_deg {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let ln_min = hi + 1e-9;
    let ratio = |ln_rho: f64| -> f64 {
        match lead_point(ln_rho.exp(), gamma_r, phase_lead_deg) {
            Some((lx, lpk)) => 10f64.powf(lpk - lx),
            None => 1.0,
        }
    };
    let (ln_rho, _) = golden_max(|l| -(ratio(l) - opts.peak_ratio).abs(), ln_min, ln_max, 1e-9);
    let rho = ln_rho.exp();
    let (lx, lpk) = lead_point(rho, gamma_r, phase_lead_deg).ok_or(Error::InfeasiblePhaseLead {
        requested_deg: phase_lead_deg,
        max_deg: max_phase,
    })?;
    let peak_ratio = 10f64.powf(lpk - lx);
    if peak_ratio < opts.min_peak_ratio {
        return Err(Error::InfeasiblePhaseLead {
            requested_deg: phase_lead_deg,
            max_deg: max_phase,
        });
    }
    let omega_l_hz = target_hz / 10f64.powf(lx);
    let mut design = CglpDesign::from_corners(omega_l_hz, rho * omega_l_hz, gamma_r)?;
    design.phase_lead_deg = phase_lead_deg;
    design.target_hz = target_hz;
    let achieved = design.first_harmonic(target_hz)?.arg().to_degrees();
    if (achieved - phase_lead_deg).abs() > opts.phase_tol_deg {
        return Err(Error::InvalidParameter(format!(
            "tuning missed the phase target: {achieved:.4} vs {phase_lead_deg} deg"
        )));
    }
    Ok(design)
}

/// Shaping-filter parameters (frequencies in Hz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapingParams {
    pub omega_l_hz: f64,
    pub omega_h_hz: f64,
    pub lambda: f64,
    pub q: f64,
    #[serde(default = "default_fit_order")]
    pub order: usize,
    /// Use the same notch orientation at both band edges instead of the
    /// mirrored pair.
    #[serde(default)]
    pub symmetric_notches: bool,
}

fn default_fit_order() -> usize {
    2
}

impl ShapingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_l_hz > 0.0 && self.omega_h_hz > self.omega_l_hz) {
            return Err(Error::InvalidParameter("shaping band requires 0 < w_L < w_H".into()));
        }
        if !(self.q > 0.0) || self.order == 0 || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter("shaping requires Q > 0, order >= 1".into()));
        }
        Ok(())
    }

    /// `((1 + s/w_L)/(1 + s/w_H))^lambda` at `freq_hz`.
    pub fn fractional_lead_lag(&self, freq_hz: f64) -> Complex64 {
        let s = Complex64::new(0.0, hz_to_rad(freq_hz));
        let r = (1.0 + s / hz_to_rad(self.omega_l_hz)) / (1.0 + s / hz_to_rad(self.omega_h_hz));
        (r.ln() * self.lambda).exp()
    }

    /// 60 log-spaced points over `[w_L/5, 5 w_H]`.
    pub fn fit_grid(&self) -> Vec<f64> {
        logspace(self.omega_l_hz / 5.0, 5.0 * self.omega_h_hz, 60)
    }

    pub fn notches(&self) -> Result<(RationalTf, RationalTf)> {
        let n1 = RationalTf::notch(self.omega_l_hz, 1.0, self.q)?;
        let n2 = if self.symmetric_notches {
            RationalTf::notch(self.omega_h_hz, 1.0, self.q)?
        } else {
            RationalTf::notch(self.omega_h_hz, self.q, 1.0)?
        };
        Ok((n1, n2))
    }
}

/// Rational approximation of the fractional lead-lag over the fit grid.
pub fn fractional_lead_lag_fit(p: &ShapingParams) -> Result<RationalFit> {
    p.validate()?;
    if p.lambda == 0.0 {
        return Ok(RationalFit::exact(RationalTf::gain(1.0)));
    }
    let samples: Vec<FrfPoint> = p
        .fit_grid()
        .into_iter()
        .map(|f| FrfPoint { freq_hz: f, response: p.fractional_lead_lag(f) })
        .collect();
    fit_rational_frf(&samples, p.order, p.order)
}

/// `C_s = R_bl / (N_s1 N_s2 C_L)` with `C_L` replaced by its rational fit.
pub fn make_shaping_filter(p: &ShapingParams, r_bl: &RationalTf) -> Result<RationalTf> {
    p.validate()?;
    if !r_bl.is_proper() {
        return Err(Error::Improper { num: r_bl.num_degree(), den: r_bl.den_degree() });
    }
    let fit = fractional_lead_lag_fit(p)?;
    let (n1, n2) = p.notches()?;
    let c_l = minimum_phase(&fit.tf)?;
    Ok(r_bl
        .series(&n1.inverse()?)
        .series(&n2.inverse()?)
        .series(&c_l.inverse()?))
}

/// Reflects right-half-plane zeros so the inverse is stable.
fn minimum_phase(tf: &RationalTf) -> Result<RationalTf> {
    let zeros = tf.zeros();
    if zeros.iter().all(|z| z.re < 0.0) {
        return Ok(tf.clone());
    }
    let lead = poly::trim(tf.num().to_vec())[0];
    let reflected: Vec<Complex64> = zeros
        .iter()
        .map(|z| if z.re > 0.0 { Complex64::new(-z.re, z.im) } else { *z })
        .collect();
    RationalTf::new(poly::scale(&poly::from_roots(&reflected), lead), tf.den().to_vec())
}

/// Result of a rational least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalFit {
    pub tf: RationalTf,
    /// Sum of squared complex errors of each accepted iterate.
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Poles were mirrored into the left half-plane after fitting.
    pub reflected_poles: bool,
}

impl RationalFit {
    fn exact(tf: RationalTf) -> Self {
        Self {
            tf,
            residual_history: vec![0.0],
            iterations: 0,
            converged: true,
            reflected_poles: false,
        }
    }

    pub fn residual(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&f64::NAN)
    }
}

fn eval_ascending(c: &[f64], s: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &x| acc * s + x)
}

/// Sanathanan-Koerner iteration: the linearized problem
/// `min sum |w_i (N(s_i) - H_i D(s_i))|^2` with `w_i = 1/|D_prev(s_i)|` and
/// `D(0) = 1`, on a frequency axis normalized by the grid's geometric mean.
/// An iterate is accepted only if it lowers the true residual.
pub fn fit_rational_frf(samples: &[FrfPoint], num_order: usize, den_order: usize) -> Result<RationalFit> {
    let unknowns = num_order + 1 + den_order;
    if samples.len() < 4 * (num_order + den_order).max(1) {
        return Err(Error::InvalidParameter(format!(
            "need at least {} samples for a {num_order}/{den_order} fit",
            4 * (num_order + den_order).max(1)
        )));
    }
    if samples.windows(2).any(|w| !(w[1].freq_hz > w[0].freq_hz)) {
        return Err(Error::InvalidParameter("sample frequencies must be strictly increasing".into()));
    }
    let w0 = hz_to_rad(
        (samples.iter().map(|p| p.freq_hz.ln()).sum::<f64>() / samples.len() as f64).exp(),
    );
    let s: Vec<Complex64> = samples.iter().map(|p| Complex64::new(0.0, hz_to_rad(p.freq_hz) / w0)).collect();
    let h: Vec<Complex64> = samples.iter().map(|p| p.response).collect();

    let residual = |num: &[f64], den: &[f64]| -> f64 {
        s.iter()
            .zip(&h)
            .map(|(&si, &hi)| (eval_ascending(num, si) / eval_ascending(den, si) - hi).norm_sqr())
            .sum()
    };

    let mut den_prev: Vec<f64> = vec![1.0; 1].into_iter().chain(std::iter::repeat_n(0.0, den_order)).collect();
    let mut best: Option<(Vec<f64>, Vec<f64>, f64)> = None;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut prev_coeffs: Option<DVector<f64>> = None;

    for it in 0..20 {
        iterations = it + 1;
        let rows = 2 * s.len();
        let mut a = DMatrix::<f64>::zeros(rows, unknowns);
        let mut b = DVector::<f64>::zeros(rows);
        for (i, (&si, &hi)) in s.iter().zip(&h).enumerate() {
            let w = 1.0 / eval_ascending(&den_prev, si).norm();
            let mut sk = Complex64::new(1.0, 0.0);
            for k in 0..=num_order {
                let v = sk * w;
                a[(2 * i, k)] = v.re;
                a[(2 * i + 1, k)] = v.im;
                sk *= si;
            }
            let mut sk = si;
            for k in 1..=den_order {
                let v = -hi * sk * w;
                a[(2 * i, num_order + k)] = v.re;
                a[(2 * i + 1, num_order + k)] = v.im;
                sk *= si;
            }
            let rhs = hi * w;
            b[2 * i] = rhs.re;
            b[2 * i + 1] = rhs.im;
        }
        // column equilibration
        let norms: Vec<f64> = (0..unknowns).map(|j| a.column(j).norm().max(1e-300)).collect();
        for (j, &n) in norms.iter().enumerate() {
            a.column_mut(j).scale_mut(1.0 / n);
        }
        let svd = a.svd(true, true);
        let sv = &svd.singular_values;
        let (smax, smin) = (sv.max(), sv.min());
        if !(smin > 1e-13 * smax) {
            return Err(Error::RankDeficient);
        }
        let mut x = svd.solve(&b, 0.0).map_err(|_| Error::RankDeficient)?;
        for (j, &n) in norms.iter().enumerate() {
            x[j] /= n;
        }
        let num: Vec<f64> = x.iter().take(num_order + 1).copied().collect();
        let den: Vec<f64> = std::iter::once(1.0).chain(x.iter().skip(num_order + 1).copied()).collect();
        let r = residual(&num, &den);
        let improved = best.as_ref().is_none_or(|(_, _, rb)| r <= *rb);
        if improved {
            history.push(r);
            best = Some((num.clone(), den.clone(), r));
        } else {
            break;
        }
        if let Some(prev) = &prev_coeffs {
            let delta = (&x - prev).norm() / x.norm().max(1e-300);
            if delta < 1e-10 {
                converged = true;
                break;
            }
        }
        if r == 0.0 {
            converged = true;
            break;
        }
        prev_coeffs = Some(x);
        den_prev = den;
    }

    let (num, den, _) = best.expect("at least one iterate");
    // back to physical s: coefficient of s^k scales by w0^-k; flip to descending
    let to_desc = |c: &[f64]| -> Vec<f64> {
        c.iter().enumerate().map(|(k, &v)| v / w0.powi(k as i32)).rev().collect()
    };
    let tf = RationalTf::new(to_desc(&num), to_desc(&den))?;
    let poles = tf.poles();
    let reflected_poles = poles.iter().any(|p| p.re > 0.0);
    let tf = if reflected_poles {
        let lead = tf.den()[0];
        let mirrored: Vec<Complex64> = poles
            .iter()
            .map(|p| if p.re > 0.0 { Complex64::new(-p.re, p.im) } else { *p })
            .collect();
        RationalTf::new(tf.num().to_vec(), poly::scale(&poly::from_roots(&mirrored), lead))?
    } else {
        tf
    };
    Ok(RationalFit {
        tf,
        residual_history: history,
        iterations,
        converged,
        reflected_poles,
    })
}
