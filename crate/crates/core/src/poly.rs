//! Real-coefficient polynomial helpers. Coefficients are stored in
//! descending powers of the variable.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub fn eval(coeffs: &[f64], s: Complex64) -> Complex64 {
    coeffs
        .iter()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
}

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    let mut out = vec![0.0; n];
    for (i, &x) in a.iter().rev().enumerate() {
        out[n - 1 - i] += x;
    }
    for (i, &y) in b.iter().rev().enumerate() {
        out[n - 1 - i] += y;
    }
    out
}

pub fn scale(a: &[f64], k: f64) -> Vec<f64> {
    a.iter().map(|&x| x * k).collect()
}

/// Drops exactly-zero leading coefficients, keeping at least one entry.
pub fn trim(mut a: Vec<f64>) -> Vec<f64> {
    while a.len() > 1 && a[0] == 0.0 {
        a.remove(0);
    }
    a
}

pub fn degree(a: &[f64]) -> usize {
    let lead = a.iter().position(|&c| c != 0.0).unwrap_or(a.len() - 1);
    a.len() - 1 - lead
}

/// `(x - r)^k` style power of a first-degree polynomial.
pub fn pow(base: &[f64], k: usize) -> Vec<f64> {
    (0..k).fold(vec![1.0], |acc, _| mul(&acc, base))
}

/// Polynomial roots from the companion-matrix eigenvalues.
pub fn roots(coeffs: &[f64]) -> Vec<Complex64> {
    let c = trim(coeffs.to_vec());
    let n = c.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    // Exact zero roots are split off so the companion matrix stays small.
    let trailing = c.iter().rev().take_while(|&&x| x == 0.0).count();
    let core = &c[..c.len() - trailing];
    let m = core.len() - 1;
    let mut out = vec![Complex64::new(0.0, 0.0); trailing];
    if m == 0 {
        return out;
    }
    if m == 1 {
        out.push(Complex64::new(-core[1] / core[0], 0.0));
        return out;
    }
    // Substituting s = alpha p with alpha = |c_m / c_0|^(1/m) evens out the
    // coefficient magnitudes before the companion eigenvalue solve; each
    // root is then Newton-polished on the original polynomial.
    let alpha = (core[m] / core[0]).abs().powf(1.0 / m as f64);
    let alpha = if alpha.is_finite() && alpha > 0.0 { alpha } else { 1.0 };
    let mut comp = DMatrix::<f64>::zeros(m, m);
    for j in 0..m {
        comp[(0, j)] = -core[j + 1] / (core[0] * alpha.powi(j as i32 + 1));
    }
    for i in 1..m {
        comp[(i, i - 1)] = 1.0;
    }
    out.extend(comp.complex_eigenvalues().iter().map(|&p| polish(core, p * alpha)));
    out
}

fn eval_with_derivative(c: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &a in c {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

/// Newton refinement that only accepts steps which reduce |p(z)|.
fn polish(c: &[f64], mut z: Complex64) -> Complex64 {
    let (mut pz, mut dz) = eval_with_derivative(c, z);
    for _ in 0..8 {
        if pz.norm() == 0.0 || dz.norm() == 0.0 {
            break;
        }
        let cand = z - pz / dz;
        let (pc, dc) = eval_with_derivative(c, cand);
        if !(pc.norm() < pz.norm()) {
            break;
        }
        z = cand;
        pz = pc;
        dz = dc;
    }
    z
}

/// Rebuilds a monic real polynomial from roots whose complex members come in
/// conjugate pairs.
pub fn from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut acc = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); acc.len() + 1];
        for (i, &a) in acc.iter().enumerate() {
            next[i] += a;
            next[i + 1] -= a * r;
        }
        acc = next;
    }
    acc.into_iter().map(|c| c.re).collect()
}

/// Groups roots into real factors of degree <= 2: conjugate pairs stay
/// together, real roots are paired in order of magnitude.
pub fn quadratic_factors(roots: &[Complex64], tol: f64) -> Vec<Vec<f64>> {
    let mut reals: Vec<f64> = Vec::new();
    let mut pairs: Vec<Complex64> = Vec::new();
    for &r in roots {
        if r.im.abs() <= tol * r.norm().max(1.0) {
            reals.push(r.re);
        } else if r.im > 0.0 {
            pairs.push(r);
        }
    }
    reals.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap());
    pairs.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
    let mut out: Vec<Vec<f64>> = pairs
        .iter()
        .map(|p| vec![1.0, -2.0 * p.re, p.norm_sqr()])
        .collect();
    for chunk in reals.chunks(2) {
        match chunk {
            [a, b] => out.push(vec![1.0, -(a + b), a * b]),
            [a] => out.push(vec![1.0, -a]),
            _ => unreachable!(),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_aligns_low_order_terms() {
        assert_eq!(add(&[1.0, 2.0, 3.0], &[10.0]), vec![1.0, 2.0, 13.0]);
    }

    #[test]
    fn roots_of_quadratic() {
        let mut r = roots(&[1.0, 3.0, 2.0]);
        r.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert!((r[0].re + 2.0).abs() < 1e-12 && (r[1].re + 1.0).abs() < 1e-12);
    }

    #[test]
    fn from_roots_inverts_roots() {
        let p = [1.0, 0.5, 7.0, 3.0];
        let back = from_roots(&roots(&p));
        for (a, b) in p.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn widely_spread_roots_are_accurate() {
        // controller-like spread: 15 Hz to 5 kHz corners in rad/s
        let truth = [
            Complex64::new(-94.2478, 0.0),
            Complex64::new(-1291.4959, 0.0),
            Complex64::new(-4224.3064, 0.0),
            Complex64::new(-31415.9265, 0.0),
            Complex64::new(-1620.03, 16138.75),
            Complex64::new(-1620.03, -16138.75),
            Complex64::new(-202.79, 16221.92),
            Complex64::new(-202.79, -16221.92),
        ];
        let found = roots(&from_roots(&truth));
        for t in &truth {
            let best = found.iter().map(|z| (z - t).norm() / t.norm()).fold(f64::MAX, f64::min);
            assert!(best < 1e-10, "{t}: {best:e}");
        }
    }

    #[test]
    fn zero_roots_split_off() {
        let r = roots(&[1.0, 1.0, 0.0]);
        assert_eq!(r.len(), 2);
        assert!(r.iter().any(|z| z.norm() == 0.0));
    }
}
