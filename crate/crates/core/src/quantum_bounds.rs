//! Quantum limits: Chernoff exponent for detection, Fisher information matrix
//! over (r_delta, phi_delta) for localization, and the photon budgets they
//! imply.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modebasis::one_minus_gamma0_sq;
use crate::optics::{sigma_to_r, Scene, TelescopePrescription};
use crate::quadrature::gauss_legendre_on;
use crate::specfun::bessel_j_seq;

/// Upper end of the high-contrast regime.
pub const HIGH_CONTRAST_B: f64 = 1e-2;

pub fn kappa(b: f64) -> f64 {
    1.0 - 2.0 * b
}

/// 1 - kappa^2 without cancellation at small b.
pub fn one_minus_kappa_sq(b: f64) -> f64 {
    4.0 * b * (1.0 - b)
}

/// Exact quantum Chernoff exponent
/// -log[(1-b) Gamma_0^2(b r) + b Gamma_0^2((1-b) r)].
pub fn qce(scene: &Scene) -> f64 {
    let b = scene.b;
    let r = scene.r_delta;
    let miss = (1.0 - b) * one_minus_gamma0_sq(b * r) + b * one_minus_gamma0_sq((1.0 - b) * r);
    -(-miss).ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighContrastValue {
    pub value: f64,
    /// Set when b is above the regime where the asymptotic form applies.
    pub out_of_regime: bool,
}

/// b [1 - Gamma_0(r)^2].
pub fn qce_high_contrast(r_delta: f64, b: f64) -> HighContrastValue {
    HighContrastValue { value: b * one_minus_gamma0_sq(r_delta), out_of_regime: b > HIGH_CONTRAST_B }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherKind {
    QuantumBound,
    Classical(String),
}

/// Symmetric 2x2 information matrix over (r_delta, phi_delta).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherMatrix {
    pub entries: [[f64; 2]; 2],
    pub kind: FisherKind,
    pub scene: Scene,
}

impl FisherMatrix {
    pub fn new(entries: [[f64; 2]; 2], kind: FisherKind, scene: Scene) -> Self {
        Self { entries, kind, scene }
    }

    pub fn trace(&self) -> f64 {
        self.entries[0][0] + self.entries[1][1]
    }

    pub fn eigenvalues(&self) -> [f64; 2] {
        let [[a, b], [_, d]] = self.entries;
        let m = 0.5 * (a + d);
        let r = (0.25 * (a - d).powi(2) + b * b).sqrt();
        [m - r, m + r]
    }

    pub fn is_psd(&self) -> bool {
        self.eigenvalues()[0] >= -1e-12 * self.trace().abs()
    }

    /// True when `other - self` is positive semidefinite up to `tol * trace(other)`.
    pub fn dominated_by(&self, other: &FisherMatrix, tol: f64) -> bool {
        let mut d = other.clone();
        for i in 0..2 {
            for j in 0..2 {
                d.entries[i][j] -= self.entries[i][j];
            }
        }
        d.eigenvalues()[0] >= -tol * other.trace().abs()
    }

    pub fn inverse(&self) -> Result<[[f64; 2]; 2]> {
        let [[a, b], [c, d]] = self.entries;
        let det = a * d - b * c;
        if !(det.abs() > 0.0) || !det.is_finite() {
            return Err(Error::Domain("singular Fisher matrix".into()));
        }
        Ok([[d / det, -b / det], [-c / det, a / det]])
    }
}

fn j2_ratio(r: f64) -> f64 {
    // 2 J2(2 pi r) / (pi r)
    let x = 2.0 * PI * r;
    if x.abs() < 1e-8 {
        return 0.0;
    }
    2.0 * bessel_j_seq(2, x)[2] / (PI * r)
}

/// Closed-form QFIM for the circular pupil:
/// (1-k^2) pi^2 [diag(1, r^2) - k^2 (2 J2(2 pi r)/(pi r))^2 diag(1, 0)].
pub fn qfim_polar(scene: &Scene) -> Result<FisherMatrix> {
    if scene.r_delta == 0.0 {
        return Err(Error::Domain("QFIM undefined at r_delta = 0 (polar chart)".into()));
    }
    let k2 = kappa(scene.b).powi(2);
    let pre = one_minus_kappa_sq(scene.b) * PI * PI;
    let r = scene.r_delta;
    let k11 = pre * (1.0 - k2 * j2_ratio(r).powi(2));
    let k22 = pre * r * r;
    Ok(FisherMatrix::new([[k11, 0.0], [0.0, k22]], FisherKind::QuantumBound, *scene))
}

/// QFIM assembled from pupil averages, K = (1/4)(1-k^2)[K1 - k^2 I0],
/// with K1_ij = 4 <d_i(2 pi u.r) d_j(2 pi u.r)> over the pupil and
/// I0_ij = 4 d_i Gamma_0 d_j Gamma_0, all by polar Gauss-Legendre quadrature.
pub fn qfim_quadrature(scene: &Scene, nodes: usize) -> Result<FisherMatrix> {
    if scene.r_delta == 0.0 {
        return Err(Error::Domain("QFIM undefined at r_delta = 0 (polar chart)".into()));
    }
    let (rho, wr) = gauss_legendre_on(nodes, 0.0, 1.0);
    let (th, wt) = gauss_legendre_on(nodes, 0.0, 2.0 * PI);
    let (r, phi) = (scene.r_delta, scene.phi_delta);
    let (c, s) = (phi.cos(), phi.sin());
    let mut k1 = [[0.0; 2]; 2];
    let mut dg = [0.0; 2];
    for (p, wp) in rho.iter().zip(&wr) {
        for (t, wtt) in th.iter().zip(&wt) {
            let w = wp * wtt * p / PI;
            let (ux, uy) = (p * t.cos(), p * t.sin());
            let d = [
                2.0 * PI * (ux * c + uy * s),
                2.0 * PI * r * (-ux * s + uy * c),
            ];
            for i in 0..2 {
                for j in 0..2 {
                    k1[i][j] += 4.0 * w * d[i] * d[j];
                }
            }
            // Gamma_0 = <exp(i 2 pi u.r)>, real; derivative of the cosine
            let phase = 2.0 * PI * r * (ux * c + uy * s);
            for i in 0..2 {
                dg[i] -= w * phase.sin() * d[i];
            }
        }
    }
    let k2 = kappa(scene.b).powi(2);
    let mut e = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            e[i][j] = 0.25 * one_minus_kappa_sq(scene.b) * (k1[i][j] - k2 * 4.0 * dg[i] * dg[j]);
        }
    }
    Ok(FisherMatrix::new(e, FisherKind::QuantumBound, *scene))
}

/// High-contrast QFIM: diag(4 pi^2 b [1 - (2 J2(2 pi r)/(pi r))^2], 4 pi^2 b r^2).
pub fn qfim_high_contrast(r_delta: f64, b: f64) -> FisherMatrix {
    let c = 4.0 * PI * PI * b;
    let scene = Scene { r_delta, phi_delta: 0.0, b };
    FisherMatrix::new(
        [[c * (1.0 - j2_ratio(r_delta).powi(2)), 0.0], [0.0, c * r_delta * r_delta]],
        FisherKind::QuantumBound,
        scene,
    )
}

/// sqrt(((K^-1)_11 + r^2 (K^-1)_22) / N), the localization patch radius.
pub fn sigma_loc(fisher: &FisherMatrix, n_photons: f64) -> Result<f64> {
    if !(n_photons > 0.0) {
        return Err(Error::Domain("photon count must be positive".into()));
    }
    if !(fisher.entries[0][0] > 0.0 && fisher.entries[1][1] > 0.0) {
        return Err(Error::Domain("Fisher matrix has non-positive diagonal".into()));
    }
    let inv = fisher.inverse()?;
    let r = fisher.scene.r_delta;
    Ok(((inv[0][0] + r * r * inv[1][1]) / n_photons).sqrt())
}

/// Photons needed for sigma_loc / r_delta to reach `rel_error`.
pub fn photons_for_localization(fisher: &FisherMatrix, rel_error: f64) -> Result<f64> {
    let one = sigma_loc(fisher, 1.0)?;
    Ok((one / (rel_error * fisher.scene.r_delta)).powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionBudget {
    pub target_error: f64,
    pub photons_required: f64,
    pub exposure_seconds: f64,
}

impl DetectionBudget {
    pub fn is_infinite(&self) -> bool {
        self.photons_required.is_infinite()
    }
}

/// Budget for a given error exponent: N = -ln(P_e) / xi.
pub fn budget_from_exponent(xi: f64, target_error: f64, photon_flux: f64) -> Result<DetectionBudget> {
    if !(target_error > 0.0 && target_error < 1.0) {
        return Err(Error::Domain(format!("target error {target_error} outside (0,1)")));
    }
    let photons = if xi > 0.0 { -target_error.ln() / xi } else { f64::INFINITY };
    Ok(DetectionBudget {
        target_error,
        photons_required: photons,
        exposure_seconds: photons / photon_flux,
    })
}

/// Quantum-limited detection budget for a scene.
pub fn detection_budget(
    scene: &Scene,
    target_error: f64,
    prescription: &TelescopePrescription,
) -> Result<DetectionBudget> {
    budget_from_exponent(qce(scene), target_error, prescription.photon_flux_hz)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapCell {
    pub r_delta_over_sigma: f64,
    pub b: f64,
    pub photons: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapTarget {
    /// Photons to reach a detection error probability.
    Detection { target_error_ppm: u32 },
    /// Photons to reach a relative localization error sigma_loc / r_delta.
    Localization { rel_error_ppm: u32 },
}

/// Photon-requirement map over separations (in Airy units) and contrasts.
pub fn photon_map(
    r_over_sigma: &[f64],
    bs: &[f64],
    target: MapTarget,
    prescription: &TelescopePrescription,
) -> Result<Vec<MapCell>> {
    let cells: Vec<(f64, f64)> =
        bs.iter().flat_map(|&b| r_over_sigma.iter().map(move |&x| (x, b))).collect();
    cells
        .par_iter()
        .map(|&(x, b)| {
            let scene = Scene::new(sigma_to_r(x), PI / 4.0, b)?;
            let photons = match target {
                MapTarget::Detection { target_error_ppm } => {
                    budget_from_exponent(qce(&scene), target_error_ppm as f64 * 1e-6, 1.0)?
                        .photons_required
                }
                MapTarget::Localization { rel_error_ppm } => {
                    photons_for_localization(&qfim_polar(&scene)?, rel_error_ppm as f64 * 1e-6)?
                }
            };
            Ok(MapCell {
                r_delta_over_sigma: x,
                b,
                photons,
                seconds: photons / prescription.photon_flux_hz,
            })
        })
        .collect()
}
