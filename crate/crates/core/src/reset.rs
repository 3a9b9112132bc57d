//! Hybrid reset elements: flow `x' = A x + B e_r`, jump `x+ = A_rho x` when
//! the trigger signal crosses zero, output `u_r = C x + D e_r`.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{hz_to_rad, RationalTf};
use crate::poly;

#[derive(Debug, Clone, PartialEq)]
pub struct ResetElement {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: RowDVector<f64>,
    d: f64,
    /// Diagonal of the reset matrix.
    rho: DVector<f64>,
}

/// Proportional first-order reset element parameters (frequencies in Hz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PforeParams {
    pub omega_r_hz: f64,
    pub omega_l_hz: f64,
    pub omega_f_hz: f64,
    pub gamma_r: f64,
}

impl ResetElement {
    pub fn new(
        a: DMatrix<f64>,
        b: DVector<f64>,
        c: RowDVector<f64>,
        d: f64,
        rho: DVector<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n || b.len() != n || c.len() != n || rho.len() != n {
            return Err(Error::InvalidParameter(
                "inconsistent reset element dimensions".into(),
            ));
        }
        if rho.iter().any(|g| !(g.abs() <= 1.0)) {
            return Err(Error::InvalidParameter(
                "reset factors must satisfy |gamma| <= 1".into(),
            ));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) || !d.is_finite() {
            return Err(Error::InvalidParameter("non-finite reset element matrix".into()));
        }
        Ok(Self { a, b, c, d, rho })
    }

    pub fn first_order(a: f64, b: f64, c: f64, d: f64, gamma: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, a),
            DVector::from_element(1, b),
            RowDVector::from_element(1, c),
            d,
            DVector::from_element(1, gamma),
        )
    }

    /// Static unity gain that never resets; stands in for "no CgLp".
    pub fn unity() -> Self {
        Self::first_order(-1.0, 0.0, 0.0, 1.0, 1.0).unwrap()
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn c(&self) -> &RowDVector<f64> {
        &self.c
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn rho(&self) -> &DVector<f64> {
        &self.rho
    }

    pub fn reset_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.rho)
    }

    /// Copy of the element with every reset factor replaced by `gamma`.
    pub fn with_reset_factor(&self, gamma: f64) -> Result<Self> {
        let mut out = self.clone();
        out.rho.fill(gamma);
        Self::new(out.a, out.b, out.c, out.d, out.rho)
    }
}

/// Generalized first-order reset element with `A = -2 pi w_alpha`,
/// `B = 2 pi w_beta`, `C = 1`, `D = 0`.
pub fn make_gfore(omega_alpha_hz: f64, omega_beta_hz: f64, gamma_r: f64) -> Result<ResetElement> {
    if !(omega_alpha_hz >= 0.0) || !(omega_beta_hz > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "GFORE requires w_alpha >= 0 and w_beta > 0, got {omega_alpha_hz}, {omega_beta_hz}"
        )));
    }
    if !(gamma_r > -1.0 && gamma_r < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "GFORE reset factor must lie in (-1, 1), got {gamma_r}"
        )));
    }
    ResetElement::first_order(
        -hz_to_rad(omega_alpha_hz),
        hz_to_rad(omega_beta_hz),
        1.0,
        0.0,
        gamma_r,
    )
}

/// Proportional FORE: `A = -2 pi w_r`, `B = 1`, `C = 2 pi w_r`,
/// `D = w_l / (w_f - w_l)`.
pub fn make_pfore(p: &PforeParams) -> Result<ResetElement> {
    if !(p.omega_l_hz > 0.0) || !(p.omega_r_hz > 0.0) {
        return Err(Error::InvalidParameter(
            "PFORE requires w_l > 0 and w_r > 0".into(),
        ));
    }
    if !(p.omega_f_hz > p.omega_l_hz) {
        return Err(Error::InvalidParameter(format!(
            "PFORE requires w_f > w_l (feedthrough singular), got w_l = {}, w_f = {}",
            p.omega_l_hz, p.omega_f_hz
        )));
    }
    if !(p.gamma_r >= -1.0 && p.gamma_r <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "reset factor must lie in [-1, 1], got {}",
            p.gamma_r
        )));
    }
    let wr = hz_to_rad(p.omega_r_hz);
    let d = if p.omega_f_hz.is_infinite() {
        0.0
    } else {
        p.omega_l_hz / (p.omega_f_hz - p.omega_l_hz)
    };
    ResetElement::first_order(-wr, 1.0, wr, d, p.gamma_r)
}

/// Base-linear transfer function `C (sI - A)^-1 B + D`, via the
/// Faddeev-LeVerrier expansion of the resolvent.
pub fn base_linear(r: &ResetElement) -> RationalTf {
    let n = r.order();
    let a = &r.a;
    let ident = DMatrix::<f64>::identity(n, n);
    // char poly coefficients, descending: [1, c_{n-1}, ..., c_0]
    let mut charpoly = vec![1.0];
    let mut m = ident.clone();
    // adj(sI - A) = sum_k M_k s^{n-k}
    let mut adj_terms = Vec::with_capacity(n);
    for k in 1..=n {
        adj_terms.push(m.clone());
        let am = a * &m;
        let ck = -am.trace() / k as f64;
        charpoly.push(ck);
        m = am + &ident * ck;
    }
    let num_adj: Vec<f64> = adj_terms
        .iter()
        .map(|mk| (&r.c * mk * &r.b)[(0, 0)])
        .collect();
    // C adj B has degree n-1; pad to align with charpoly
    let mut num = vec![0.0];
    num.extend(num_adj);
    let num = poly::add(&num, &poly::scale(&charpoly, r.d));
    RationalTf::new(num, charpoly).expect("monic characteristic polynomial")
}

/// Execution state of one reset element at a fixed sample time.
///
/// The trapezoidal flow is kept in predictor form: `predictor` holds
/// `Phi x[k-1]+ + K e[k-1]`, so the current state is `predictor + K e[k]`.
/// This is the Tustin discretization of the base-linear flow, so with
/// `A_rho = I` the element reproduces the discretized base-linear filter.
#[derive(Debug, Clone)]
pub struct ResetState {
    x: DVector<f64>,
    predictor: DVector<f64>,
    prev_trigger: f64,
    events: Vec<usize>,
    index: usize,
    ts: f64,
    phi: DMatrix<f64>,
    k: DVector<f64>,
}

impl ResetState {
    pub fn new(r: &ResetElement, ts: f64) -> Result<Self> {
        if !(ts > 0.0) {
            return Err(Error::InvalidParameter(format!("sample time must be > 0, got {ts}")));
        }
        let n = r.order();
        let h = ts / 2.0;
        let ident = DMatrix::<f64>::identity(n, n);
        let m = (&ident - &r.a * h)
            .try_inverse()
            .ok_or_else(|| Error::InvalidParameter("I - (ts/2) A is singular".into()))?;
        let phi = &m * (&ident + &r.a * h);
        let k = &m * &r.b * h;
        Ok(Self {
            x: DVector::zeros(n),
            predictor: DVector::zeros(n),
            prev_trigger: 0.0,
            events: Vec::new(),
            index: 0,
            ts,
            phi,
            k,
        })
    }

    /// State after the most recent step (post-reset if one fired).
    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    /// Sample indices at which a reset was applied.
    pub fn events(&self) -> &[usize] {
        &self.events
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }

    /// Number of samples processed.
    pub fn samples(&self) -> usize {
        self.index
    }
}

/// Trigger crossing test: a strict sign change, or arrival at exactly zero
/// from a nonzero sample.
fn crossed(prev: f64, current: f64) -> bool {
    prev != 0.0 && (current == 0.0 || (prev > 0.0) != (current > 0.0))
}

/// Advances the element by one sample. The reset test runs first on the
/// current-sample state; the flow update then prepares the next sample and
/// the output uses the (possibly reset) state. When the trigger lands
/// exactly on zero the output is the mean of the pre- and post-reset
/// values, which places the jump at the sample instant rather than half a
/// sample earlier.
pub fn step_reset(state: &mut ResetState, r: &ResetElement, e_r: f64, e_s: f64) -> Result<f64> {
    let index = state.index;
    if !e_r.is_finite() || !e_s.is_finite() {
        return Err(Error::NonFinite { index });
    }
    let mut x = &state.predictor + &state.k * e_r;
    let mut cx = None;
    if crossed(state.prev_trigger, e_s) {
        let active = x
            .iter()
            .zip(r.rho.iter())
            .any(|(xi, g)| (g - 1.0) * xi != 0.0);
        if active {
            let pre = (&r.c * &x)[(0, 0)];
            x.component_mul_assign(&r.rho);
            state.events.push(index);
            if e_s == 0.0 {
                // crossing exactly on the sample: the jump sits at the
                // sample instant, so report the mean of both sides
                cx = Some(0.5 * (pre + (&r.c * &x)[(0, 0)]));
            }
        }
    }
    state.prev_trigger = e_s;
    state.predictor = &state.phi * &x + &state.k * e_r;
    let u = cx.unwrap_or_else(|| (&r.c * &x)[(0, 0)]) + r.d * e_r;
    if !u.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    state.x = x;
    state.index += 1;
    Ok(u)
}
