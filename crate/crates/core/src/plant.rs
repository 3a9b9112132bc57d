//! Synthetic collocated modal plant and FRF CSV ingestion/export.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{hz_to_rad, unwrap_phase_deg, FrfPoint, RationalTf};
use crate::poly;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub freq_hz: f64,
    pub zeta: f64,
    /// Sign of the modal residue; +1 for every mode gives a collocated plant.
    #[serde(default = "one")]
    pub residue_sign: f64,
    /// Relative modal participation before DC normalization.
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalPlant {
    pub dc_gain: f64,
    pub modes: Vec<Mode>,
    #[serde(default)]
    pub delay_s: f64,
}

impl Default for ModalPlant {
    /// Stand-in for the identified stage: modes at 710, 1150 and 2582 Hz,
    /// light damping and a 60 us delay.
    fn default() -> Self {
        let mode = |f| Mode { freq_hz: f, zeta: 0.015, residue_sign: 1.0, weight: 1.0 };
        Self {
            dc_gain: 1.0,
            modes: vec![mode(710.0), mode(1150.0), mode(2582.0)],
            delay_s: 60e-6,
        }
    }
}

impl ModalPlant {
    pub fn validate(&self) -> Result<()> {
        if !(self.dc_gain.is_finite() && self.dc_gain != 0.0) {
            return Err(Error::InvalidParameter("plant DC gain must be finite and nonzero".into()));
        }
        if !(self.delay_s >= 0.0 && self.delay_s.is_finite()) {
            return Err(Error::InvalidParameter("plant delay must be >= 0".into()));
        }
        for m in &self.modes {
            if !(m.freq_hz > 0.0 && m.zeta > 0.0 && m.zeta < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "mode at {} Hz needs f > 0 and damping in (0, 1), got {}",
                    m.freq_hz, m.zeta
                )));
            }
            if m.residue_sign.abs() != 1.0 || !(m.weight > 0.0) {
                return Err(Error::InvalidParameter("residue sign must be +-1 and weight > 0".into()));
            }
        }
        if self.modes.windows(2).any(|w| !(w[1].freq_hz > w[0].freq_hz)) {
            return Err(Error::InvalidParameter("mode frequencies must be strictly increasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltPlant {
    pub tf: RationalTf,
    /// False when the residue pattern breaks pole-zero interlacing.
    pub interlaced: bool,
}

/// Sum of `k_i w_i^2 / (s^2 + 2 z_i w_i s + w_i^2)` normalized to the
/// requested DC gain, with the delay attached.
pub fn build_modal_plant(m: &ModalPlant) -> Result<BuiltPlant> {
    m.validate()?;
    if m.modes.is_empty() {
        return Ok(BuiltPlant {
            tf: RationalTf::with_delay(vec![m.dc_gain], vec![1.0], m.delay_s)?,
            interlaced: true,
        });
    }
    let total: f64 = m.modes.iter().map(|md| md.residue_sign * md.weight).sum();
    if total == 0.0 {
        return Err(Error::InvalidParameter("modal residues cancel at DC".into()));
    }
    let dens: Vec<Vec<f64>> = m
        .modes
        .iter()
        .map(|md| {
            let w = hz_to_rad(md.freq_hz);
            vec![1.0, 2.0 * md.zeta * w, w * w]
        })
        .collect();
    let mut num = vec![0.0];
    for (i, md) in m.modes.iter().enumerate() {
        let w = hz_to_rad(md.freq_hz);
        let k = m.dc_gain * md.residue_sign * md.weight / total;
        let others = dens
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .fold(vec![1.0], |acc, (_, d)| poly::mul(&acc, d));
        num = poly::add(&num, &poly::scale(&others, k * w * w));
    }
    let den = dens.iter().fold(vec![1.0], |acc, d| poly::mul(&acc, d));
    let tf = RationalTf::with_delay(num, den, m.delay_s)?;
    let interlaced = check_interlacing(&tf, m);
    Ok(BuiltPlant { tf, interlaced })
}

/// Each anti-resonance must sit strictly between consecutive resonances.
fn check_interlacing(tf: &RationalTf, m: &ModalPlant) -> bool {
    let zeros = tf.zeros();
    if zeros.len() != 2 * (m.modes.len() - 1) {
        return false;
    }
    let mut zf: Vec<f64> = zeros
        .iter()
        .filter(|z| z.im > 0.0)
        .map(|z| z.norm() / (2.0 * std::f64::consts::PI))
        .collect();
    if zf.len() != m.modes.len() - 1 {
        return false;
    }
    zf.sort_by(|a, b| a.partial_cmp(b).unwrap());
    zf.iter()
        .zip(m.modes.windows(2))
        .all(|(&z, w)| z > w[0].freq_hz && z < w[1].freq_hz)
}

/// Parses the `freq_hz,mag_db,phase_deg` schema.
pub fn parse_frf_csv(text: &str) -> Result<Vec<FrfPoint>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let (hline, header) = lines
        .next()
        .ok_or(Error::FrfData { line: 1, msg: "empty file".into() })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != ["freq_hz", "mag_db", "phase_deg"] {
        return Err(Error::FrfData {
            line: hline + 1,
            msg: format!("expected header freq_hz,mag_db,phase_deg, got {header}"),
        });
    }
    let mut out: Vec<FrfPoint> = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::FrfData { line: lineno, msg: format!("expected 3 fields, got {}", fields.len()) });
        }
        let mut vals = [0.0; 3];
        for (v, (name, s)) in vals.iter_mut().zip(["freq_hz", "mag_db", "phase_deg"].iter().zip(&fields)) {
            *v = s.parse::<f64>().map_err(|_| Error::FrfData {
                line: lineno,
                msg: format!("{name} is not a number: {s:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::FrfData { line: lineno, msg: format!("{name} is not finite") });
            }
        }
        let [f, mag, ph] = vals;
        if let Some(prev) = out.last() {
            if !(f > prev.freq_hz) {
                return Err(Error::FrfData { line: lineno, msg: "frequency grid is not increasing".into() });
            }
        }
        let resp = Complex64::from_polar(10f64.powf(mag / 20.0), ph.to_radians());
        out.push(FrfPoint::new(f, resp).map_err(|e| Error::FrfData { line: lineno, msg: e.to_string() })?);
    }
    Ok(out)
}

pub fn load_frf_csv(path: &Path) -> Result<Vec<FrfPoint>> {
    parse_frf_csv(&fs::read_to_string(path)?)
}

pub fn write_frf_csv<W: Write>(mut w: W, points: &[FrfPoint], comment: Option<&str>) -> Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "freq_hz,mag_db,phase_deg")?;
    let resp: Vec<Complex64> = points.iter().map(|p| p.response).collect();
    let phase = unwrap_phase_deg(&resp);
    for (p, ph) in points.iter().zip(phase) {
        writeln!(w, "{:e},{:e},{:e}", p.freq_hz, p.mag_db(), ph)?;
    }
    Ok(())
}

pub fn save_frf_csv(path: &Path, points: &[FrfPoint], comment: Option<&str>) -> Result<()> {
    let mut buf = Vec::new();
    write_frf_csv(&mut buf, points, comment)?;
    fs::write(path, buf)?;
    Ok(())
}
