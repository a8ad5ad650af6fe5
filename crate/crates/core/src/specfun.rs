//! Bessel functions of the first kind, Zernike polynomials and the Bessel
//! sum identities used as numerical self-checks.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest Bessel order served by [`bessel_j`].
pub const MAX_ORDER: i32 = 650;

/// Below this argument the power series is used instead of Miller's method.
const SERIES_LIMIT: f64 = 2.0;

/// J_n(x) for integer order n in [-1, 650].
pub fn bessel_j(n: i32, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("bessel_j: non-finite argument {x}")));
    }
    if !(-1..=MAX_ORDER).contains(&n) {
        return Err(Error::Domain(format!("bessel_j: order {n} outside [-1, {MAX_ORDER}]")));
    }
    if n < 0 {
        return Ok(-bessel_j_seq(1, x)[1]);
    }
    Ok(bessel_j_seq(n as usize, x)[n as usize])
}

/// J_0(x), ..., J_nmax(x) in one pass.
///
/// Negative arguments use J_n(-x) = (-1)^n J_n(x).
pub fn bessel_j_seq(nmax: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; nmax + 1];
    bessel_j_fill(x, &mut out);
    out
}

/// Fills `out[n] = J_n(x)` for n in `0..out.len()`.
pub fn bessel_j_fill(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    let ax = x.abs();
    if ax == 0.0 {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[0] = 1.0;
        return;
    }
    if ax < SERIES_LIMIT {
        series_fill(ax, out);
    } else {
        miller_fill(ax, out);
    }
    if x < 0.0 {
        for (n, v) in out.iter_mut().enumerate() {
            if n % 2 == 1 {
                *v = -*v;
            }
        }
    }
}

fn series_fill(x: f64, out: &mut [f64]) {
    let q = -0.25 * x * x;
    // lead = (x/2)^n / n!
    let mut lead = 1.0;
    for (n, slot) in out.iter_mut().enumerate() {
        if n > 0 {
            lead *= 0.5 * x / n as f64;
        }
        if lead == 0.0 {
            *slot = 0.0;
            continue;
        }
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..60 {
            term *= q / (k as f64 * (n + k) as f64);
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        *slot = lead * sum;
    }
}

fn miller_fill(x: f64, out: &mut [f64]) {
    let nmax = out.len() - 1;
    let top = nmax.max(x.ceil() as usize);
    let mut start = top + 40 + (60.0 * top as f64).sqrt() as usize;
    start += start % 2;

    let mut next = 0.0_f64; // J_{k+1}
    let mut cur = 1e-300_f64; // J_k
    let mut norm = 0.0;
    let two_over_x = 2.0 / x;
    for v in out.iter_mut() {
        *v = 0.0;
    }
    let mut k = start;
    loop {
        if k <= nmax {
            out[k] = cur;
        }
        if k % 2 == 0 {
            norm += if k == 0 { cur } else { 2.0 * cur };
        }
        if k == 0 {
            break;
        }
        let prev = k as f64 * two_over_x * cur - next;
        next = cur;
        cur = prev;
        k -= 1;
        if cur.abs() > 1e250 {
            let s = 1e-250;
            cur *= s;
            next *= s;
            norm *= s;
            for v in out.iter_mut().skip(k) {
                *v *= s;
            }
        }
    }
    let inv = 1.0 / norm;
    for v in out.iter_mut() {
        *v *= inv;
    }
}

/// Fourier-Zernike mode label with the OSA/ANSI linear index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ZernikeIndex {
    pub n: u32,
    pub m: i32,
}

impl ZernikeIndex {
    pub fn new(n: u32, m: i32) -> Result<Self> {
        let am = m.unsigned_abs();
        if am > n || (n - am) % 2 != 0 {
            return Err(Error::Domain(format!("invalid Zernike index (n={n}, m={m})")));
        }
        Ok(Self { n, m })
    }

    /// k = (n(n+2) + m) / 2
    pub fn linear(&self) -> usize {
        let n = self.n as i64;
        ((n * (n + 2) + self.m as i64) / 2) as usize
    }

    pub fn from_linear(k: usize) -> Self {
        let mut n = ((-3.0 + (9.0 + 8.0 * k as f64).sqrt()) / 2.0).ceil() as i64;
        // guard against rounding at triangular numbers
        while n > 0 && (n - 1) * (n + 2) / 2 >= k as i64 {
            n -= 1;
        }
        while n * (n + 3) / 2 < k as i64 {
            n += 1;
        }
        let m = 2 * k as i64 - n * (n + 2);
        Self { n: n as u32, m: m as i32 }
    }

    pub fn count_up_to(n_max: u32) -> usize {
        let n = n_max as usize;
        (n + 1) * (n + 2) / 2
    }
}

/// Normalized radial polynomial sqrt(n+1) R_n^|m|(u), u in [0, 1].
pub fn zernike_radial(idx: ZernikeIndex, u: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("zernike_radial: u={u} outside [0,1]")));
    }
    Ok(radial_unchecked(idx.n, idx.m.unsigned_abs(), u))
}

/// Same as [`zernike_radial`] without the range check; valid for any real u.
pub fn radial_unchecked(n: u32, am: u32, u: f64) -> f64 {
    // R_n^m(u) = (-1)^k u^m P_k^{(m,0)}(1 - 2u^2), k = (n-m)/2
    let k = (n - am) / 2;
    let a = am as f64;
    let t = 1.0 - 2.0 * u * u;
    let mut p_prev = 1.0;
    let mut p = if k == 0 { 1.0 } else { 0.5 * (2.0 * (a + 1.0) + (a + 2.0) * (t - 1.0)) };
    for j in 2..=k {
        let j = j as f64;
        let c = 2.0 * j + a;
        let a1 = 2.0 * j * (j + a) * (c - 2.0);
        let a2 = (c - 1.0) * a * a;
        let a3 = (c - 2.0) * (c - 1.0) * c;
        let a4 = 2.0 * (j - 1.0 + a) * (j - 1.0) * c;
        let next = ((a2 + a3 * t) * p - a4 * p_prev) / a1;
        p_prev = p;
        p = next;
    }
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    ((n + 1) as f64).sqrt() * sign * u.powi(am as i32) * p
}

/// Angular factor: sqrt2 cos(|m|t) for m>0, 1 for m=0, sqrt2 sin(|m|t) for m<0.
pub fn zernike_angular(m: i32, theta: f64) -> f64 {
    let am = m.unsigned_abs() as f64;
    match m.signum() {
        1 => SQRT_2 * (am * theta).cos(),
        -1 => SQRT_2 * (am * theta).sin(),
        _ => 1.0,
    }
}

/// d/dtheta of [`zernike_angular`], expressed as -m * Theta_{-m}.
pub fn zernike_angular_deriv(m: i32, theta: f64) -> f64 {
    -(m as f64) * zernike_angular(-m, theta)
}

fn default_terms(x: f64, n_terms: usize) -> usize {
    if n_terms == 0 {
        x.ceil() as usize + 60
    } else {
        n_terms
    }
}

/// Partial sum of sum_{n>=0} [J_{n-1}(x) - J_{n+3}(x)]^2, which tends to 1.
///
/// `n_terms = 0` picks ceil(x) + 60 terms.
pub fn verify_bessel_identity_1(x: f64, n_terms: usize) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("identity 1 requires x >= 0, got {x}")));
    }
    let terms = default_terms(x, n_terms);
    check_order(terms + 3)?;
    let j = bessel_j_seq(terms + 3, x);
    let jm = |n: i64| if n < 0 { -j[1] } else { j[n as usize] };
    Ok((0..terms as i64).map(|n| (jm(n - 1) - jm(n + 3)).powi(2)).sum())
}

/// Partial sum of (4/3) sum_n n(n+2) [J_n(x) + J_{n+2}(x)]^2, which tends to x^2.
pub fn verify_bessel_identity_2(x: f64, n_terms: usize) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("identity 2 requires x >= 0, got {x}")));
    }
    let terms = default_terms(x, n_terms);
    check_order(terms + 2)?;
    let j = bessel_j_seq(terms + 2, x);
    let s: f64 = (0..terms)
        .map(|n| (n * (n + 2)) as f64 * (j[n] + j[n + 2]).powi(2))
        .sum();
    Ok(4.0 / 3.0 * s)
}

fn check_order(n: usize) -> Result<()> {
    if n > MAX_ORDER as usize {
        return Err(Error::Domain(format!("needs Bessel order {n} > {MAX_ORDER}")));
    }
    Ok(())
}
