//! Monte-Carlo localization with a mode sorter: photon counts drawn from the
//! mode probabilities, maximum-likelihood estimates of (r_delta, phi_delta),
//! and the spread of repeated estimates.
//!
//! Randomness: ChaCha20 (`rand_chacha`). Trial `i` of a run with seed `s`
//! draws from the generator seeded with `s` on stream `i`.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical_info::fundamental_miss;
use crate::error::{Error, Result};
use crate::modebasis::FourierZernikeBasis;
use crate::optics::{sigma_to_r, Scene, SIGMA_AIRY};
use crate::quantum_bounds::{qfim_polar, sigma_loc};

pub const RNG_NAME: &str = "ChaCha20";

/// Largest out-of-basis probability the sampler accepts.
pub const MAX_DEFECT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    /// One entry per basis mode followed by the leakage bucket for photons
    /// outside the truncated basis.
    pub counts: Vec<u64>,
    pub total_photons: u64,
    pub n_max: u32,
    /// Bookkeeping only; estimators never read it.
    #[serde(skip)]
    pub scene_truth: Option<Scene>,
}

impl MeasurementRecord {
    pub fn leakage(&self) -> u64 {
        *self.counts.last().unwrap_or(&0)
    }
}

/// Mode probabilities with the leakage mass appended.
pub fn outcome_probabilities(basis: &FourierZernikeBasis, scene: &Scene) -> Vec<f64> {
    let mut p = basis.scene_probabilities(scene);
    p.push(basis.scene_leakage(scene));
    p
}

/// Seed of trial `trial` in a run seeded with `seed`.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng.next_u64()
}

/// Poisson total, then a multinomial split by sequential binomials. The
/// fundamental mode is drawn last and takes the remainder, so its
/// near-unit probability never enters a binomial.
pub fn sample_measurement(
    scene: &Scene,
    basis: &FourierZernikeBasis,
    mean_photons: f64,
    rng_seed: u64,
) -> Result<MeasurementRecord> {
    if !(mean_photons > 0.0) || !mean_photons.is_finite() {
        return Err(Error::Domain(format!("mean photon count must be positive, got {mean_photons}")));
    }
    let p = outcome_probabilities(basis, scene);
    let defect = *p.last().unwrap();
    if defect > MAX_DEFECT {
        return Err(Error::Precondition(format!(
            "n_max = {} leaves {defect:.3} of the probability outside the basis",
            basis.n_max
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
    let total = Poisson::new(mean_photons)
        .map_err(|e| Error::Domain(e.to_string()))?
        .sample(&mut rng) as u64;
    let mut counts = vec![0u64; p.len()];
    let mut left = total;
    let mut mass: f64 = p[1..].iter().sum::<f64>() + (1.0 - fundamental_miss(scene));
    for k in 1..p.len() {
        if left == 0 || mass <= 0.0 {
            break;
        }
        let q = (p[k] / mass).clamp(0.0, 1.0);
        let x = Binomial::new(left, q).map_err(|e| Error::Domain(e.to_string()))?.sample(&mut rng);
        counts[k] = x;
        left -= x;
        mass -= p[k];
    }
    counts[0] = left;
    Ok(MeasurementRecord { counts, total_photons: total, n_max: basis.n_max, scene_truth: Some(*scene) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationEstimate {
    pub r_hat: f64,
    pub phi_hat: f64,
    pub loglik: f64,
    pub converged: bool,
    pub n_evals: usize,
}

/// Search settings for [`mle_localize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleSettings {
    /// r range in units of sigma_airy.
    pub r_min: f64,
    pub r_max: f64,
    pub n_radii: usize,
    pub n_angles: usize,
    /// Simplex diameter, in units of sigma_airy.
    pub tol: f64,
    pub max_evals: usize,
}

impl Default for MleSettings {
    fn default() -> Self {
        Self { r_min: 1e-3, r_max: 3.0, n_radii: 64, n_angles: 64, tol: 1e-6, max_evals: 500 }
    }
}

/// Multinomial log-likelihood of a record. The fundamental-mode term uses
/// log1p of the miss probability to keep its tiny r-dependence.
pub fn log_likelihood(record: &MeasurementRecord, basis: &FourierZernikeBasis, scene: &Scene) -> f64 {
    let p = outcome_probabilities(basis, scene);
    let mut l = 0.0;
    for (k, (&c, &pk)) in record.counts.iter().zip(&p).enumerate() {
        if c == 0 {
            continue;
        }
        let lp = if k == 0 { (-fundamental_miss(scene)).ln_1p() } else { pk.ln() };
        l += c as f64 * lp;
    }
    if l.is_nan() {
        f64::NEG_INFINITY
    } else {
        l
    }
}

/// Mode intensities are even in phi and invariant under phi -> phi + pi,
/// so phi is only identifiable in [0, pi/2].
pub fn fold_angle(phi: f64) -> f64 {
    let q = phi.rem_euclid(PI);
    if q > FRAC_PI_2 {
        PI - q
    } else {
        q
    }
}

/// The image of a folded angle closest to `reference`.
pub fn unfold_angle(folded: f64, reference: f64) -> f64 {
    let cands = [folded, -folded, PI - folded, PI + folded];
    let d = |a: f64| {
        let x = (a - reference).rem_euclid(2.0 * PI);
        x.min(2.0 * PI - x)
    };
    cands
        .into_iter()
        .min_by(|a, b| d(*a).total_cmp(&d(*b)))
        .unwrap()
        .rem_euclid(2.0 * PI)
}

/// Maximum-likelihood (r_delta, phi_delta) with b known: log-spaced grid in
/// r times an angle grid over [0, pi/2], then Nelder-Mead from the best grid
/// point. `converged` is false when the simplex hit the evaluation limit or
/// the estimate sits on the lower r bound.
pub fn mle_localize(
    record: &MeasurementRecord,
    basis: &FourierZernikeBasis,
    b_known: f64,
    settings: &MleSettings,
) -> Result<LocalizationEstimate> {
    if record.total_photons == 0 || record.counts.iter().all(|&c| c == 0) {
        return Err(Error::Domain("record holds no photons".into()));
    }
    if record.counts.len() != basis.len() + 1 {
        return Err(Error::Precondition(format!(
            "record has {} outcomes, basis needs {}",
            record.counts.len(),
            basis.len() + 1
        )));
    }
    Scene::new(1.0, 0.0, b_known)?;
    let r_lo = sigma_to_r(settings.r_min);
    let nll = |x: [f64; 2]| -> f64 {
        let r = x[0] * SIGMA_AIRY;
        if r < r_lo || x[1] < -FRAC_PI_2 || x[1] > PI {
            return f64::INFINITY;
        }
        let s = Scene { r_delta: r, phi_delta: x[1].rem_euclid(2.0 * PI), b: b_known };
        -log_likelihood(record, basis, &s)
    };
    let ratio = (settings.r_max / settings.r_min).powf(1.0 / (settings.n_radii - 1) as f64);
    let dphi = FRAC_PI_2 / settings.n_angles as f64;
    let mut best = ([settings.r_min, 0.5 * dphi], f64::INFINITY);
    for i in 0..settings.n_radii {
        let r = settings.r_min * ratio.powi(i as i32);
        for j in 0..settings.n_angles {
            let x = [r, (j as f64 + 0.5) * dphi];
            let f = nll(x);
            if f < best.1 {
                best = (x, f);
            }
        }
    }
    let step = [best.0[0] * (ratio - 1.0), dphi];
    let nm = nelder_mead(nll, best.0, step, settings.tol, settings.max_evals);
    let r_hat = nm.x[0] * SIGMA_AIRY;
    let on_bound = r_hat <= r_lo * (1.0 + 1e-3);
    Ok(LocalizationEstimate {
        r_hat,
        phi_hat: fold_angle(nm.x[1]),
        loglik: -nm.f,
        converged: nm.converged && !on_bound,
        n_evals: settings.n_radii * settings.n_angles + nm.evals,
    })
}

struct Simplex {
    x: [f64; 2],
    f: f64,
    evals: usize,
    converged: bool,
}

/// Nelder-Mead on (r/sigma, phi). The diameter is measured as the largest
/// vertex separation in (r, r*phi), both in units of sigma.
fn nelder_mead(f: impl Fn([f64; 2]) -> f64, x0: [f64; 2], step: [f64; 2], tol: f64, max_evals: usize) -> Simplex {
    let mut v = [x0, [x0[0] + step[0], x0[1]], [x0[0], x0[1] + step[1]]];
    let mut fv = [f(v[0]), f(v[1]), f(v[2])];
    let mut evals = 3;
    let lin = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    let diameter = |v: &[[f64; 2]; 3]| {
        let mut d: f64 = 0.0;
        for i in 0..3 {
            for j in i + 1..3 {
                let r = 0.5 * (v[i][0] + v[j][0]).abs();
                d = d.max((v[i][0] - v[j][0]).abs()).max(r * (v[i][1] - v[j][1]).abs());
            }
        }
        d
    };
    let mut converged = false;
    while evals < max_evals {
        let mut idx = [0, 1, 2];
        idx.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
        v = idx.map(|i| v[i]);
        fv = idx.map(|i| fv[i]);
        if diameter(&v) < tol {
            converged = true;
            break;
        }
        let c = lin(v[0], v[1], 0.5);
        let xr = lin(v[2], c, 2.0);
        let fr = f(xr);
        evals += 1;
        if fr < fv[0] {
            let xe = lin(v[2], c, 3.0);
            let fe = f(xe);
            evals += 1;
            if fe < fr {
                (v[2], fv[2]) = (xe, fe);
            } else {
                (v[2], fv[2]) = (xr, fr);
            }
        } else if fr < fv[1] {
            (v[2], fv[2]) = (xr, fr);
        } else {
            let (xc, fc) = if fr < fv[2] {
                let x = lin(v[2], c, 1.5);
                (x, f(x))
            } else {
                let x = lin(v[2], c, 0.5);
                (x, f(x))
            };
            evals += 1;
            if fc < fv[2].min(fr) {
                (v[2], fv[2]) = (xc, fc);
            } else {
                for i in 1..3 {
                    v[i] = lin(v[0], v[i], 0.5);
                    fv[i] = f(v[i]);
                }
                evals += 2;
            }
        }
    }
    let k = (0..3).min_by(|&a, &b| fv[a].total_cmp(&fv[b])).unwrap();
    Simplex { x: v[k], f: fv[k], evals, converged }
}

/// sqrt(trace) of the sample covariance of the estimates in Cartesian form.
pub fn fit_uncertainty_patch(estimates: &[LocalizationEstimate]) -> Result<f64> {
    let pts: Vec<[f64; 2]> = estimates.iter().map(|e| [e.r_hat * e.phi_hat.cos(), e.r_hat * e.phi_hat.sin()]).collect();
    patch_from_points(&pts)
}

fn patch_from_points(pts: &[[f64; 2]]) -> Result<f64> {
    if pts.len() < 30 {
        return Err(Error::Precondition(format!("need at least 30 estimates, got {}", pts.len())));
    }
    let n = pts.len() as f64;
    let mean = [pts.iter().map(|p| p[0]).sum::<f64>() / n, pts.iter().map(|p| p[1]).sum::<f64>() / n];
    let var = pts.iter().map(|p| (p[0] - mean[0]).powi(2) + (p[1] - mean[1]).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloConfig {
    pub scene: Scene,
    pub n_max: u32,
    pub mean_photons: f64,
    pub trials: usize,
    pub seed: u64,
    /// Relative error in the b handed to the estimator (0 for the known-b case).
    pub b_mismatch: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub truth_r: f64,
    pub truth_phi: f64,
    pub est_r: f64,
    /// Unfolded into the image closest to the true angle.
    pub est_phi: f64,
    pub loglik: f64,
    pub converged: bool,
    pub n_photons: u64,
}

/// Independent trials in parallel; results come back in trial order.
pub fn run_trials(cfg: &MonteCarloConfig) -> Result<Vec<TrialResult>> {
    if cfg.trials == 0 {
        return Err(Error::Domain("need at least one trial".into()));
    }
    let basis = FourierZernikeBasis::new(cfg.n_max);
    let b_est = cfg.scene.b * (1.0 + cfg.b_mismatch);
    let settings = MleSettings::default();
    (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(cfg.seed, t as u64);
            let rec = sample_measurement(&cfg.scene, &basis, cfg.mean_photons, seed)?;
            let est = mle_localize(&rec, &basis, b_est, &settings)?;
            Ok(TrialResult {
                trial: t,
                seed,
                truth_r: cfg.scene.r_delta,
                truth_phi: cfg.scene.phi_delta,
                est_r: est.r_hat,
                est_phi: unfold_angle(est.phi_hat, cfg.scene.phi_delta),
                loglik: est.loglik,
                converged: est.converged,
                n_photons: rec.total_photons,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub truth_r: f64,
    pub truth_phi: f64,
    pub trials: usize,
    pub patch: f64,
    pub sigma_loc: f64,
    pub ratio: f64,
    pub mean_r: f64,
    pub stderr_r: f64,
    pub mean_phi: f64,
    pub stderr_phi: f64,
    pub converged_fraction: f64,
}

impl ClusterSummary {
    /// Largest |mean - truth| in standard errors over r and phi.
    pub fn bias_in_stderr(&self) -> f64 {
        ((self.mean_r - self.truth_r) / self.stderr_r)
            .abs()
            .max(((self.mean_phi - self.truth_phi) / self.stderr_phi).abs())
    }
}

fn mean_and_stderr(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let m = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Patch of a cluster of trials against the quantum localization bound with
/// the mean photon count.
pub fn summarize(cfg: &MonteCarloConfig, results: &[TrialResult]) -> Result<ClusterSummary> {
    let pts: Vec<[f64; 2]> = results.iter().map(|t| [t.est_r * t.est_phi.cos(), t.est_r * t.est_phi.sin()]).collect();
    let patch = patch_from_points(&pts)?;
    let bound = sigma_loc(&qfim_polar(&cfg.scene)?, cfg.mean_photons)?;
    let (mean_r, stderr_r) = mean_and_stderr(results.iter().map(|t| t.est_r));
    // angles relative to the truth so the average never wraps
    let (dphi, stderr_phi) = mean_and_stderr(results.iter().map(|t| {
        let d = (t.est_phi - t.truth_phi).rem_euclid(2.0 * PI);
        if d > PI {
            d - 2.0 * PI
        } else {
            d
        }
    }));
    Ok(ClusterSummary {
        truth_r: cfg.scene.r_delta,
        truth_phi: cfg.scene.phi_delta,
        trials: results.len(),
        patch,
        sigma_loc: bound,
        ratio: patch / bound,
        mean_r,
        stderr_r,
        mean_phi: cfg.scene.phi_delta + dphi,
        stderr_phi,
        converged_fraction: results.iter().filter(|t| t.converged).count() as f64 / results.len() as f64,
    })
}

/// Truth positions equally spaced in arc parameter along an Archimedean
/// spiral from r_min to r_max (units of sigma) over `turns` turns.
pub fn spiral(points: usize, r_min: f64, r_max: f64, turns: f64, b: f64) -> Result<Vec<Scene>> {
    if points == 0 || !(r_min > 0.0 && r_max >= r_min) {
        return Err(Error::Domain("spiral needs points >= 1 and 0 < r_min <= r_max".into()));
    }
    (0..points)
        .map(|i| {
            let t = if points == 1 { 0.0 } else { i as f64 / (points - 1) as f64 };
            // offset keeps the first point off the mode symmetry axes
            let phi = PI / 8.0 + 2.0 * PI * turns * t;
            Scene::new(sigma_to_r(r_min + (r_max - r_min) * t), phi, b)
        })
        .collect()
}
