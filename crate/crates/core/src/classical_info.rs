//! Classical information of concrete measurements: Chernoff exponents of
//! binary and coronagraph detection, and Fisher information of mode sorting
//! and of direct imaging behind a coronagraph.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coronagraph::grid::PropagatorPlan;
use crate::coronagraph::CoronagraphOperator;
use crate::error::{Error, Result};
use crate::modebasis::{basis_for, near_axis, one_minus_gamma0_sq, radial_table, FourierZernikeBasis};
use crate::optics::{tilted_pupil_field, Scene, SIGMA_AIRY};
use crate::quadrature::composite_gauss_legendre;
use crate::quantum_bounds::{FisherKind, FisherMatrix};
use crate::specfun::{zernike_angular, ZernikeIndex};

const GOLDEN_TOL: f64 = 1e-10;

/// A coronagraph must leak at most this fraction of the on-axis PSF for the
/// one-sided detection formula to apply.
pub const NULL_LEAK_LIMIT: f64 = 1e-3;

fn log_sum_exp(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.filter(|x| *x > f64::NEG_INFINITY).collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Chernoff exponent -min_t log sum_a p0^t p1^(1-t), from log-probabilities
/// (use -inf for impossible outcomes). Golden-section search on (0, 1) plus
/// the one-sided limits at both ends.
pub fn chernoff_exponent_log(lp0: &[f64], lp1: &[f64]) -> f64 {
    let f = |t: f64| {
        log_sum_exp(lp0.iter().zip(lp1).map(|(&a, &b)| {
            if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                t * a + (1.0 - t) * b
            }
        }))
    };
    // limits t -> 0+ and t -> 1-: outcomes impossible under the other
    // hypothesis drop out
    let both = |a: f64, b: f64| a > f64::NEG_INFINITY && b > f64::NEG_INFINITY;
    let at0 = log_sum_exp(lp0.iter().zip(lp1).filter(|(a, b)| both(**a, **b)).map(|(_, b)| *b));
    let at1 = log_sum_exp(lp0.iter().zip(lp1).filter(|(a, b)| both(**a, **b)).map(|(a, _)| *a));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0, 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_TOL {
        if fc < fd {
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
    let best = f(0.5 * (a + b)).min(at0).min(at1);
    if best == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        (-best).max(0.0)
    }
}

/// Chernoff exponent of two discrete distributions.
pub fn chernoff_exponent(p0: &[f64], p1: &[f64]) -> f64 {
    let l = |p: &[f64]| p.iter().map(|&x| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY }).collect::<Vec<_>>();
    chernoff_exponent_log(&l(p0), &l(p1))
}

/// Probability that a photon from the scene misses the fundamental mode.
pub fn fundamental_miss(scene: &Scene) -> f64 {
    let (rs, _) = scene.star_polar();
    let (re, _) = scene.planet_polar();
    (1.0 - scene.b) * one_minus_gamma0_sq(rs) + scene.b * one_minus_gamma0_sq(re)
}

/// CCE of the binary sorter {|psi_0><psi_0|, complement}. Under the
/// one-star hypothesis every photon lands in the fundamental mode.
pub fn cce_spade_binary(scene: &Scene) -> f64 {
    let m = fundamental_miss(scene);
    if m <= 0.0 {
        return 0.0;
    }
    let lp0 = [0.0, f64::NEG_INFINITY];
    let lp1 = [(-m).ln_1p(), m.ln()];
    chernoff_exponent_log(&lp0, &lp1)
}

fn check_null(op: &CoronagraphOperator) -> Result<()> {
    let leak = op.throughput(0.0, 0.0);
    if leak > NULL_LEAK_LIMIT {
        return Err(Error::Precondition(format!("{} passes {leak:.3e} of the on-axis PSF", op.name)));
    }
    Ok(())
}

/// CCE of photon counting behind a coronagraph: -log(1 - T) with T the
/// scene's total throughput.
pub fn cce_coronagraph(op: &CoronagraphOperator, scene: &Scene) -> Result<f64> {
    check_null(op)?;
    let t = op.scene_throughput(scene);
    Ok(-(-t).ln_1p())
}

/// High-contrast form b * T(r_delta).
pub fn cce_coronagraph_high_contrast(op: &CoronagraphOperator, r_delta: f64, b: f64) -> Result<f64> {
    check_null(op)?;
    Ok(b * op.throughput(r_delta, 0.0))
}

/// SPADE CFIM in (r_delta, phi_delta) from analytic mode-probability gradients.
/// Modes with zero probability contribute nothing.
pub fn cfim_spade(basis: &FourierZernikeBasis, scene: &Scene) -> Result<FisherMatrix> {
    let per = mode_information(basis, scene)?;
    let mut e = [[0.0; 2]; 2];
    for m in &per {
        for i in 0..2 {
            for j in 0..2 {
                e[i][j] += m.entries[i][j];
            }
        }
    }
    Ok(FisherMatrix::new(e, FisherKind::Classical(format!("spade{}", basis.n_max)), *scene))
}

/// SPADE CFIM with the basis rotated off the angular singularity when needed.
pub fn cfim_spade_auto(n_max: u32, scene: &Scene) -> Result<FisherMatrix> {
    cfim_spade(&basis_for(n_max, scene), scene)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeInformation {
    pub mode: ZernikeIndex,
    pub probability: f64,
    pub entries: [[f64; 2]; 2],
}

/// Per-mode terms (grad P)(grad P)^T / P of the SPADE CFIM.
pub fn mode_information(basis: &FourierZernikeBasis, scene: &Scene) -> Result<Vec<ModeInformation>> {
    if basis.rotation == 0.0 && near_axis(scene.phi_delta) {
        return Err(Error::Precondition(format!(
            "phi_delta = {} lies on a mode symmetry axis; rotate the basis by pi/4",
            scene.phi_delta
        )));
    }
    let (p, g) = basis.scene_probabilities_with_gradient(scene)?;
    Ok(basis
        .modes
        .iter()
        .zip(p.iter().zip(&g))
        .map(|(&mode, (&pk, gk))| {
            let mut entries = [[0.0; 2]; 2];
            if pk > 0.0 {
                for i in 0..2 {
                    for j in 0..2 {
                        entries[i][j] = gk[i] * gk[j] / pk;
                    }
                }
            }
            ModeInformation { mode, probability: pk, entries }
        })
        .collect())
}

/// Radial and angular information summed per radial order n.
pub fn group_information(modes: &[ModeInformation]) -> Vec<[f64; 2]> {
    let n_max = modes.iter().map(|m| m.mode.n).max().unwrap_or(0) as usize;
    let mut out = vec![[0.0; 2]; n_max + 1];
    for m in modes {
        out[m.mode.n as usize][0] += m.entries[0][0];
        out[m.mode.n as usize][1] += m.entries[1][1];
    }
    out
}

/// p_1s / p_1e: share of photons outside the fundamental mode coming from
/// the star rather than the planet.
pub fn brightness_leakage_ratio(r_delta: f64, b: f64) -> Result<f64> {
    if !(b > 0.0 && b <= 1e-2) || !(r_delta > 0.0) {
        return Err(Error::Domain(format!("need 0 < b <= 1e-2 and r_delta > 0, got b={b}, r={r_delta}")));
    }
    Ok((1.0 - b) * one_minus_gamma0_sq(b * r_delta) / (b * one_minus_gamma0_sq((1.0 - b) * r_delta)))
}

/// Polar quadrature over the image plane for direct-imaging information.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagingQuadrature {
    pub r_max: f64,
    pub panel_width: f64,
    pub order: usize,
    /// 0 picks 4 n_max + 16.
    pub n_angles: usize,
    /// Relative probability floor.
    pub p_floor: f64,
}

impl Default for ImagingQuadrature {
    fn default() -> Self {
        Self { r_max: 150.0, panel_width: 0.5, order: 8, n_angles: 0, p_floor: 1e-18 }
    }
}

/// Basis order that keeps the truncation leakage of a source at radius r
/// negligible.
pub fn n_max_for_radius(r: f64) -> u32 {
    (10.0f64).max((2.0 * PI * r).ceil() + 16.0) as u32
}

/// Output coefficients of one source and their derivatives with respect to
/// (r_delta, phi_delta), given d(source radius)/d(r_delta).
fn source_terms(op: &CoronagraphOperator, basis: &FourierZernikeBasis, r: f64, phi: f64, dr: f64) -> [Vec<Complex64>; 3] {
    let s = basis.sample(r, phi);
    let scale = |v: &[f64], k: f64| v.iter().map(|x| x * k).collect::<Vec<f64>>();
    [op.apply_real(&s.gamma), op.apply_real(&scale(&s.d_r, dr)), op.apply_real(&s.d_phi)]
}

/// Direct-imaging CFIM behind a modal coronagraph: the output intensity
/// p(x) = (1-b)|E_star|^2 + b|E_planet|^2 and its analytic gradients are
/// integrated as (dp)(dp)^T/p over the image plane.
pub fn cfim_direct_imaging(op: &CoronagraphOperator, scene: &Scene, quad: &ImagingQuadrature) -> Result<FisherMatrix> {
    if scene.r_delta <= 0.0 {
        return Err(Error::Domain("direct-imaging CFIM needs r_delta > 0".into()));
    }
    let basis = op.basis();
    let b = scene.b;
    let (rs, ps) = scene.star_polar();
    let (re, pe) = scene.planet_polar();
    let star = source_terms(op, &basis, rs, ps, b);
    let planet = source_terms(op, &basis, re, pe, 1.0 - b);
    let modes: Vec<ZernikeIndex> = basis.modes.clone();
    let n_ang = if quad.n_angles == 0 { 4 * op.n_max as usize + 16 } else { quad.n_angles };
    let panels = (quad.r_max / quad.panel_width).ceil() as usize;
    let (rr, rw) = composite_gauss_legendre(quad.order, panels, 0.0, quad.r_max);
    let sqrt_pi = PI.sqrt();
    let angles: Vec<f64> = (0..n_ang).map(|j| 2.0 * PI * (j as f64 + 0.5) / n_ang as f64).collect();
    let theta: Vec<Vec<f64>> = angles.iter().map(|&a| modes.iter().map(|m| zernike_angular(m.m, a)).collect()).collect();
    // per point: (weight, p, dp_r, dp_phi)
    let pts: Vec<[f64; 4]> = rr
        .par_iter()
        .zip(rw.par_iter())
        .flat_map_iter(|(&r, &w)| {
            let t = radial_table(op.n_max, r);
            let rad: Vec<f64> = modes.iter().map(|m| t.g[m.n as usize] * sqrt_pi).collect();
            let wa = w * r * 2.0 * PI / n_ang as f64;
            let star = &star;
            let planet = &planet;
            theta.iter().map(move |th| {
                let mut e = [Complex64::new(0.0, 0.0); 6];
                for (k, (rk, tk)) in rad.iter().zip(th).enumerate() {
                    let psi = rk * tk;
                    if psi == 0.0 {
                        continue;
                    }
                    for q in 0..3 {
                        e[q] += star[q][k] * psi;
                        e[3 + q] += planet[q][k] * psi;
                    }
                }
                let p = (1.0 - b) * e[0].norm_sqr() + b * e[3].norm_sqr();
                let d = |q: usize| 2.0 * (1.0 - b) * (e[0].conj() * e[q]).re + 2.0 * b * (e[3].conj() * e[3 + q]).re;
                [wa, p, d(1), d(2)]
            })
        })
        .collect();
    let pmax = pts.iter().map(|v| v[1]).fold(0.0, f64::max);
    let floor = quad.p_floor * pmax;
    let mut m = [[0.0; 2]; 2];
    for v in &pts {
        if v[1] > floor {
            let g = [v[2], v[3]];
            for i in 0..2 {
                for j in 0..2 {
                    m[i][j] += v[0] * g[i] * g[j] / v[1];
                }
            }
        }
    }
    Ok(FisherMatrix::new(m, FisherKind::Classical(format!("direct-{}", op.name)), *scene))
}

/// Options for the sampled-grid direct-imaging CFIM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridImagingOptions {
    /// Remove the sampled-pupil component from every input before the train,
    /// so grid-limited leakage of the on-axis star does not swamp the planet.
    pub null_projection: bool,
    /// Relative central-difference step; h = step * max(sigma_airy, r_delta).
    pub step: f64,
    pub p_floor: f64,
}

impl Default for GridImagingOptions {
    fn default() -> Self {
        Self { null_projection: true, step: 1e-4, p_floor: 1e-18 }
    }
}

/// Direct-imaging CFIM from sampled grid images, gradients by central
/// differences in (r_delta, phi_delta).
pub fn cfim_direct_imaging_grid(plan: &PropagatorPlan, scene: &Scene, opts: &GridImagingOptions) -> Result<FisherMatrix> {
    if scene.r_delta <= 0.0 {
        return Err(Error::Domain("direct-imaging CFIM needs r_delta > 0".into()));
    }
    let g = plan.grid;
    let disk = plan.disk();
    let p0: Vec<Complex64> = disk.coverage.iter().map(|c| Complex64::new(c.sqrt(), 0.0)).collect();
    let n0 = disk.inner(&p0, &p0).re.sqrt();
    let p0: Vec<Complex64> = p0.iter().map(|v| v / n0).collect();
    let intensity = |sc: &Scene| -> Result<Vec<f64>> {
        let mut total = vec![0.0; g.n * g.n];
        for (pos, wgt) in [(sc.star_position(), 1.0 - sc.b), (sc.planet_position(), sc.b)] {
            let mut f = disk.gather(&tilted_pupil_field(g, pos));
            if opts.null_projection {
                let c = disk.inner(&p0, &f);
                f.iter_mut().zip(&p0).for_each(|(a, b)| *a -= c * b);
            }
            let out = plan.apply(&disk.scatter(&f))?;
            total.iter_mut().zip(&out.samples).for_each(|(t, v)| *t += wgt * v.norm_sqr());
        }
        Ok(total)
    };
    let h = opts.step * SIGMA_AIRY.max(scene.r_delta);
    let shifted = |dr: f64, dp: f64| Scene::new(scene.r_delta + dr, scene.phi_delta + dp, scene.b);
    let p = intensity(scene)?;
    let pr = (intensity(&shifted(h, 0.0)?)?, intensity(&shifted(-h, 0.0)?)?);
    let pp = (intensity(&shifted(0.0, h)?)?, intensity(&shifted(0.0, -h)?)?);
    let pmax = p.iter().cloned().fold(0.0, f64::max);
    let floor = opts.p_floor * pmax;
    let area = g.pixel_area(crate::optics::Domain::Focal);
    let mut m = [[0.0; 2]; 2];
    for i in 0..p.len() {
        if p[i] > floor {
            let gr = [(pr.0[i] - pr.1[i]) / (2.0 * h), (pp.0[i] - pp.1[i]) / (2.0 * h)];
            for a in 0..2 {
                for c in 0..2 {
                    m[a][c] += area * gr[a] * gr[c] / p[i];
                }
            }
        }
    }
    Ok(FisherMatrix::new(m, FisherKind::Classical(format!("grid-{}", plan.name)), *scene))
}

/// Diagnostic only: b sum_{k>0} |tau_k|^2 (dp_k)(dp_k)^T / p_k with
/// p_k = |<chi_k|psi_0(r_delta)>|^2, the mode-sorting CFIM in the
/// coronagraph's own eigenmodes. Conjectured, not proven, to bound the
/// direct-imaging CFIM from above.
pub fn conjectured_imaging_bound(op: &CoronagraphOperator, scene: &Scene) -> Result<FisherMatrix> {
    let d = op.decompose()?;
    let s = op.basis().sample(scene.r_delta, scene.phi_delta);
    let mut m = [[0.0; 2]; 2];
    for (v, tau) in d.modes.iter().zip(&d.transmissions).skip(1) {
        let proj = |x: &[f64]| v.iter().zip(x).map(|(a, b)| a.conj() * *b).sum::<Complex64>();
        let (c, cr, cp) = (proj(&s.gamma), proj(&s.d_r), proj(&s.d_phi));
        let pk = c.norm_sqr();
        if pk <= 0.0 {
            continue;
        }
        let gk = [2.0 * (c.conj() * cr).re, 2.0 * (c.conj() * cp).re];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] += scene.b * tau.norm_sqr() * gk[i] * gk[j] / pk;
            }
        }
    }
    Ok(FisherMatrix::new(m, FisherKind::Classical(format!("conjectured-{}", op.name)), *scene))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveValue {
    Exponent(f64),
    Fisher([[f64; 2]; 2]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub r_delta_over_sigma: f64,
    pub b: f64,
    pub value: CurveValue,
}

/// One system's information values over a parameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformationCurve {
    pub system: String,
    pub points: Vec<CurvePoint>,
    pub truncation: Option<u32>,
    pub grid: Option<crate::optics::GridSpec>,
}

impl InformationCurve {
    /// Evaluates `f` at every (r_delta/sigma, b) pair in parallel.
    pub fn build(
        system: &str,
        params: &[(f64, f64)],
        truncation: Option<u32>,
        f: impl Fn(&Scene) -> Result<CurveValue> + Sync,
    ) -> Result<Self> {
        let points = params
            .par_iter()
            .map(|&(rs, b)| {
                let scene = Scene::new(crate::optics::sigma_to_r(rs), PI / 4.0, b)?;
                Ok(CurvePoint { r_delta_over_sigma: rs, b, value: f(&scene)? })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { system: system.into(), points, truncation, grid: None })
    }

    /// True when every value is at most the matching bound value (plus a
    /// relative tolerance), entrywise for exponents and in the Loewner order
    /// for Fisher matrices.
    pub fn dominated_by(&self, bound: &InformationCurve, tol: f64) -> bool {
        self.points.iter().zip(&bound.points).all(|(a, q)| match (a.value, q.value) {
            (CurveValue::Exponent(x), CurveValue::Exponent(y)) => x <= y + tol * y.abs(),
            (CurveValue::Fisher(x), CurveValue::Fisher(y)) => {
                let scene = Scene { r_delta: a.r_delta_over_sigma, phi_delta: 0.0, b: a.b };
                let f = |m| FisherMatrix::new(m, FisherKind::QuantumBound, scene);
                f(x).dominated_by(&f(y), tol)
            }
            _ => false,
        })
    }
}
