//! Fourier-Zernike modes: Fourier transforms of the pupil Zernike
//! polynomials, made real by dropping their i^(n+2|m|) phase.
//!
//! psi_nm(r, phi) = sqrt(n+1) J_{n+1}(2 pi r) / (sqrt(pi) r) Theta_m(phi)
//!
//! The projection of a point source at s onto mode k is
//! Gamma_k(s) = psi_k(s) / sqrt(pi).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::Scene;
use crate::specfun::{bessel_j_seq, zernike_angular, zernike_angular_deriv, ZernikeIndex};

/// Radial argument below which J_{n+1}(2 pi r)/r is replaced by its limit.
const R_SMALL: f64 = 1e-8;

/// Single mode value psi_nm(r, phi).
pub fn mode_value(idx: ZernikeIndex, r: f64, phi: f64) -> f64 {
    radial_factor(idx.n, r) * PI.sqrt() * zernike_angular(idx.m, phi)
}

/// Gamma_k(s) for a single mode.
pub fn projection(idx: ZernikeIndex, r: f64, phi: f64) -> f64 {
    radial_factor(idx.n, r) * zernike_angular(idx.m, phi)
}

/// 2 sqrt(n+1) J_{n+1}(2 pi r) / (2 pi r), the radial part of Gamma.
fn radial_factor(n: u32, r: f64) -> f64 {
    if r.abs() < R_SMALL {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let x = 2.0 * PI * r;
    let j = bessel_j_seq(n as usize + 1, x);
    2.0 * ((n + 1) as f64).sqrt() * j[n as usize + 1] / x
}

/// 1 - Gamma_0(r)^2 without cancellation near r = 0.
pub fn one_minus_gamma0_sq(r: f64) -> f64 {
    let x = 2.0 * PI * r;
    if x.abs() < 2.0 {
        // Gamma_0 = 1 + a with a = sum_{k>=1} (-x^2/4)^k / (k! (k+1)!)
        let q = -0.25 * x * x;
        let mut term = 1.0;
        let mut a = 0.0;
        for k in 1..40 {
            term *= q / (k as f64 * (k + 1) as f64);
            a += term;
            if term.abs() < 1e-18 * a.abs() {
                break;
            }
        }
        -a * (2.0 + a)
    } else {
        let g = radial_factor(0, r);
        1.0 - g * g
    }
}

/// Radial parts of Gamma and of its r-derivative for all orders up to `n_max`.
#[derive(Debug, Clone)]
pub struct RadialTable {
    pub g: Vec<f64>,
    pub dg: Vec<f64>,
}

pub fn radial_table(n_max: u32, r: f64) -> RadialTable {
    let nm = n_max as usize;
    let mut g = vec![0.0; nm + 1];
    let mut dg = vec![0.0; nm + 1];
    let x = 2.0 * PI * r;
    let j = bessel_j_seq(nm + 3, x);
    let jm = |k: i64| if k < 0 { -j[1] } else { j[k as usize] };
    for n in 0..=nm {
        let s = ((n + 1) as f64).sqrt();
        g[n] = if r.abs() < R_SMALL {
            if n == 0 { 1.0 } else { 0.0 }
        } else {
            2.0 * s * j[n + 1] / x
        };
        dg[n] = PI / s * (jm(n as i64 - 1) - jm(n as i64 + 3));
    }
    RadialTable { g, dg }
}

/// 1 - sum_{n <= n_max} sum_m Gamma_nm(s)^2, summed directly over the tail
/// so it stays accurate when tiny.
pub fn truncation_leakage(n_max: u32, r: f64) -> f64 {
    if r.abs() < R_SMALL {
        return 0.0;
    }
    let x = 2.0 * PI * r;
    let top = n_max as usize + 80 + x.ceil() as usize;
    let j = bessel_j_seq(top + 1, x);
    (n_max as usize + 1..=top)
        .map(|n| {
            let t = 2.0 * (n + 1) as f64 * j[n + 1] / x;
            t * t
        })
        .sum()
}

/// Projections and their polar derivatives for every mode at one point.
#[derive(Debug, Clone)]
pub struct ModeSample {
    pub gamma: Vec<f64>,
    pub d_r: Vec<f64>,
    pub d_phi: Vec<f64>,
}

/// Truncated Fourier-Zernike basis in OSA/ANSI order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierZernikeBasis {
    pub n_max: u32,
    pub modes: Vec<ZernikeIndex>,
    /// Global rotation alpha: modes use Theta_m(phi - alpha).
    pub rotation: f64,
    /// Always true: the i^(n+2|m|) phase is stripped so modes are real.
    pub real_convention: bool,
}

impl FourierZernikeBasis {
    pub fn new(n_max: u32) -> Self {
        let count = ZernikeIndex::count_up_to(n_max);
        Self {
            n_max,
            modes: (0..count).map(ZernikeIndex::from_linear).collect(),
            rotation: 0.0,
            real_convention: true,
        }
    }

    pub fn rotated(mut self, alpha: f64) -> Self {
        self.rotation = alpha;
        self
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Gamma_k and its derivatives at polar point (r, phi).
    pub fn sample(&self, r: f64, phi: f64) -> ModeSample {
        let t = radial_table(self.n_max, r);
        let a = phi - self.rotation;
        let mut gamma = Vec::with_capacity(self.len());
        let mut d_r = Vec::with_capacity(self.len());
        let mut d_phi = Vec::with_capacity(self.len());
        for z in &self.modes {
            let n = z.n as usize;
            let th = zernike_angular(z.m, a);
            gamma.push(t.g[n] * th);
            d_r.push(t.dg[n] * th);
            d_phi.push(t.g[n] * zernike_angular_deriv(z.m, a));
        }
        ModeSample { gamma, d_r, d_phi }
    }

    pub fn projections(&self, r: f64, phi: f64) -> Vec<f64> {
        self.sample(r, phi).gamma
    }

    /// Mixture probabilities P_k = (1-b) Gamma_k^2(star) + b Gamma_k^2(planet).
    pub fn scene_probabilities(&self, scene: &Scene) -> Vec<f64> {
        let (rs, ps) = scene.star_polar();
        let (re, pe) = scene.planet_polar();
        let gs = self.projections(rs, ps);
        let ge = self.projections(re, pe);
        gs.iter()
            .zip(&ge)
            .map(|(s, e)| (1.0 - scene.b) * s * s + scene.b * e * e)
            .collect()
    }

    pub fn scene_mode_probability(&self, idx: ZernikeIndex, scene: &Scene) -> f64 {
        let (rs, ps) = scene.star_polar();
        let (re, pe) = scene.planet_polar();
        let a = self.rotation;
        let s = projection(idx, rs, ps - a);
        let e = projection(idx, re, pe - a);
        (1.0 - scene.b) * s * s + scene.b * e * e
    }

    /// Probability mass outside the truncated basis.
    pub fn scene_leakage(&self, scene: &Scene) -> f64 {
        let (rs, _) = scene.star_polar();
        let (re, _) = scene.planet_polar();
        (1.0 - scene.b) * truncation_leakage(self.n_max, rs)
            + scene.b * truncation_leakage(self.n_max, re)
    }

    /// Probabilities and their (r_delta, phi_delta) gradients for all modes.
    pub fn scene_probabilities_with_gradient(
        &self,
        scene: &Scene,
    ) -> Result<(Vec<f64>, Vec<[f64; 2]>)> {
        if scene.r_delta == 0.0 {
            return Err(Error::Domain("gradient undefined at r_delta = 0 (polar chart)".into()));
        }
        let b = scene.b;
        let (rs, ps) = scene.star_polar();
        let (re, pe) = scene.planet_polar();
        let s = self.sample(rs, ps);
        let e = self.sample(re, pe);
        let mut p = Vec::with_capacity(self.len());
        let mut g = Vec::with_capacity(self.len());
        for k in 0..self.len() {
            let (gs, ge) = (s.gamma[k], e.gamma[k]);
            p.push((1.0 - b) * gs * gs + b * ge * ge);
            let dr = 2.0 * b * (1.0 - b) * (gs * s.d_r[k] + ge * e.d_r[k]);
            let dphi = 2.0 * ((1.0 - b) * gs * s.d_phi[k] + b * ge * e.d_phi[k]);
            g.push([dr, dphi]);
        }
        Ok((p, g))
    }

    pub fn mode_probability_gradient(&self, idx: ZernikeIndex, scene: &Scene) -> Result<[f64; 2]> {
        let k = idx.linear();
        if k >= self.len() {
            return Err(Error::Domain(format!("mode {k} outside basis")));
        }
        Ok(self.scene_probabilities_with_gradient(scene)?.1[k])
    }
}

/// Angles within this distance of a multiple of pi/2 use a pi/4-rotated basis.
pub const AXIS_GUARD: f64 = 1e-6;

pub fn near_axis(phi: f64) -> bool {
    let q = phi.rem_euclid(PI / 2.0);
    q < AXIS_GUARD || PI / 2.0 - q < AXIS_GUARD
}

/// Basis for a scene: rotated by pi/4 when phi sits on a mode symmetry axis.
pub fn basis_for(n_max: u32, scene: &Scene) -> FourierZernikeBasis {
    let b = FourierZernikeBasis::new(n_max);
    if near_axis(scene.phi_delta) {
        b.rotated(PI / 4.0)
    } else {
        b
    }
}
