//! Sampled-field propagation through coronagraph optical trains.
//!
//! Pupil fields follow the [`crate::optics::pupil_field`] convention: sample =
//! point value * sqrt(pixel coverage of the unit disk).

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{default_remap, focal_phase, CoronagraphOperator, DesignKind, PiaaRemap};
use crate::error::{Error, Result};
use crate::modebasis::FourierZernikeBasis;
use crate::optics::{disk_coverage, propagate, propagate_inverse, Domain, GridSpec, OpticalField};
use crate::quadrature::gauss_legendre_on;
use crate::specfun::{radial_unchecked, zernike_angular, ZernikeIndex};

const C0: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Largest basis order accepted by [`extract_operator`].
pub const EXTRACT_MAX_ORDER: u32 = 30;

/// Default sampling per design. The vortex null on a finite grid leaks
/// roughly 0.044 / half_width of the on-axis energy, so it gets a wide focal
/// window (128 pupil pixels per radius); the others use the library default.
pub fn coronagraph_grid(design: DesignKind) -> GridSpec {
    match design {
        DesignKind::Vortex => GridSpec { n: 1024, half_width: 64.0 },
        _ => GridSpec::default(),
    }
}

/// Pixels touched by the unit disk.
#[derive(Debug, Clone)]
pub struct DiskSampler {
    pub grid: GridSpec,
    pub index: Vec<usize>,
    pub points: Vec<[f64; 2]>,
    pub coverage: Vec<f64>,
}

impl DiskSampler {
    pub fn new(grid: GridSpec) -> Self {
        let cov = disk_coverage(grid, 8);
        let n = grid.n;
        let mut index = Vec::new();
        let mut points = Vec::new();
        let mut coverage = Vec::new();
        for (i, &c) in cov.iter().enumerate() {
            if c > 0.0 {
                index.push(i);
                points.push([grid.coord(Domain::Pupil, i % n), grid.coord(Domain::Pupil, i / n)]);
                coverage.push(c);
            }
        }
        Self { grid, index, points, coverage }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn area(&self) -> f64 {
        self.grid.pixel_area(Domain::Pupil)
    }

    pub fn gather(&self, field: &OpticalField) -> Vec<Complex64> {
        self.index.iter().map(|&i| field.samples[i]).collect()
    }

    pub fn scatter(&self, values: &[Complex64]) -> OpticalField {
        let mut f = OpticalField::zeros(self.grid, Domain::Pupil);
        for (&i, v) in self.index.iter().zip(values) {
            f.samples[i] = *v;
        }
        f
    }

    pub fn inner(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<Complex64>() * self.area()
    }

    /// Sampled pupil Zernikes, Gram-Schmidt orthonormalized in OSA order so the
    /// first one is exactly the sampled pupil.
    pub fn zernikes(&self, n_max: u32) -> Vec<Vec<f64>> {
        let count = ZernikeIndex::count_up_to(n_max);
        let sq: Vec<f64> = self.coverage.iter().map(|c| c.sqrt()).collect();
        let polar: Vec<(f64, f64)> = self.points.iter().map(|p| (p[0].hypot(p[1]).min(1.0), p[1].atan2(p[0]))).collect();
        let raw: Vec<Vec<f64>> = (0..count)
            .into_par_iter()
            .map(|k| {
                let z = ZernikeIndex::from_linear(k);
                polar
                    .iter()
                    .zip(&sq)
                    .map(|(&(r, t), s)| radial_unchecked(z.n, z.m.unsigned_abs(), r) * zernike_angular(z.m, t) * s / PI.sqrt())
                    .collect()
            })
            .collect();
        let da = self.area();
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
        for mut v in raw {
            for _ in 0..2 {
                for q in &out {
                    let d: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() * da;
                    v.iter_mut().zip(q).for_each(|(x, y)| *x -= d * y);
                }
            }
            let nrm = (v.iter().map(|x| x * x).sum::<f64>() * da).sqrt();
            v.iter_mut().for_each(|x| *x /= nrm);
            out.push(v);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FocalMask {
    /// Removes the fundamental mode only.
    FundamentalNotch,
    /// pi phase shift over a disk of the given focal radius.
    PhaseDisk { radius: f64 },
    Vortex { charge: i32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Element {
    Apodizer,
    FocalMask(FocalMask),
    LyotStop,
    InverseApodizer,
    Identity,
}

/// Optical train acting on pupil fields; `apply` returns the final focal field.
#[derive(Debug, Clone)]
pub struct PropagatorPlan {
    pub name: String,
    pub grid: GridSpec,
    pub elements: Vec<Element>,
    design: DesignKind,
    remap: Option<PiaaRemap>,
    disk: DiskSampler,
    vortex_phase: Vec<Complex64>,
}

impl PropagatorPlan {
    pub fn perfect(grid: GridSpec) -> Self {
        Self {
            name: "perfect".into(),
            grid,
            elements: vec![Element::Identity, Element::FocalMask(FocalMask::FundamentalNotch), Element::Identity],
            design: DesignKind::Perfect,
            remap: None,
            disk: DiskSampler::new(grid),
            vortex_phase: Vec::new(),
        }
    }

    pub fn vortex(grid: GridSpec, charge: i32) -> Result<Self> {
        if charge == 0 {
            return Err(Error::Domain("vortex charge must be nonzero".into()));
        }
        let phase = OpticalField::from_fn(grid, Domain::Focal, |x, y| {
            if x == 0.0 && y == 0.0 {
                C0
            } else {
                Complex64::from_polar(1.0, charge as f64 * y.atan2(x))
            }
        })
        .samples;
        Ok(Self {
            name: format!("vortex{charge}"),
            grid,
            elements: vec![Element::Identity, Element::FocalMask(FocalMask::Vortex { charge }), Element::LyotStop],
            design: DesignKind::Vortex,
            remap: None,
            disk: DiskSampler::new(grid),
            vortex_phase: phase,
        })
    }

    pub fn piaacmc(grid: GridSpec, remap: PiaaRemap) -> Self {
        let radius = remap.mask_radius();
        Self {
            name: "piaacmc".into(),
            grid,
            elements: vec![
                Element::Apodizer,
                Element::FocalMask(FocalMask::PhaseDisk { radius }),
                Element::LyotStop,
                Element::InverseApodizer,
            ],
            design: DesignKind::Piaacmc,
            remap: Some(remap),
            disk: DiskSampler::new(grid),
            vortex_phase: Vec::new(),
        }
    }

    pub fn for_design(design: DesignKind, grid: GridSpec, vortex_charge: i32) -> Result<Self> {
        match design {
            DesignKind::Perfect => Ok(Self::perfect(grid)),
            DesignKind::Vortex => Self::vortex(grid, vortex_charge),
            DesignKind::Piaacmc => Ok(Self::piaacmc(grid, default_remap()?.clone())),
        }
    }

    pub fn design(&self) -> DesignKind {
        self.design
    }

    pub fn disk(&self) -> &DiskSampler {
        &self.disk
    }

    /// Pupil field -> final focal field.
    pub fn apply(&self, field: &OpticalField) -> Result<OpticalField> {
        Ok(propagate(&self.lyot_plane(field)?))
    }

    /// Pupil field -> field leaving the last pupil-plane element.
    pub fn lyot_plane(&self, field: &OpticalField) -> Result<OpticalField> {
        if field.domain != Domain::Pupil || field.grid != self.grid {
            return Err(Error::GridMismatch(format!(
                "plan expects pupil field on {:?}, got {:?} on {:?}",
                self.grid, field.domain, field.grid
            )));
        }
        let out = self.apply_batch(&[self.disk.gather(field)])?;
        Ok(self.disk.scatter(&out[0]))
    }

    /// Applies the train to several disk-sampled pupil fields at once and
    /// returns disk-sampled Lyot-plane fields.
    pub fn apply_batch(&self, inputs: &[Vec<Complex64>]) -> Result<Vec<Vec<Complex64>>> {
        let npix = self.disk.len();
        if inputs.iter().any(|v| v.len() != npix) {
            return Err(Error::GridMismatch(format!("expected {npix} disk samples")));
        }
        Ok(match self.design {
            DesignKind::Perfect => {
                let p0: Vec<Complex64> = self.disk.coverage.iter().map(|c| Complex64::new(c.sqrt(), 0.0)).collect();
                let n0 = self.disk.inner(&p0, &p0).re.sqrt();
                let p0: Vec<Complex64> = p0.iter().map(|v| v / n0).collect();
                inputs
                    .iter()
                    .map(|f| {
                        let c = self.disk.inner(&p0, f);
                        f.iter().zip(&p0).map(|(a, b)| a - c * b).collect()
                    })
                    .collect()
            }
            DesignKind::Vortex => inputs
                .iter()
                .map(|f| {
                    let mut focal = propagate(&self.disk.scatter(f));
                    focal.samples.par_iter_mut().zip(&self.vortex_phase).for_each(|(v, p)| *v *= p);
                    let back = propagate_inverse(&focal);
                    // unit-disk Lyot stop
                    self.disk
                        .index
                        .iter()
                        .zip(&self.disk.coverage)
                        .map(|(&i, c)| back.samples[i] * c.sqrt())
                        .collect()
                })
                .collect(),
            DesignKind::Piaacmc => self.piaacmc_batch(inputs),
        })
    }

    /// Remap, pi-phase disk and inverse remap evaluated as one change of
    /// variables: with v(u) the remapped position of pupil point u,
    /// out(u) = f(u) - 2 (P g)(v(u)) / A(|v|), and the mask transform of g is
    /// G(r) = int f(u) / A(|v(u)|) exp(-2 pi i v(u).r) du.
    fn piaacmc_batch(&self, inputs: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
        let remap = self.remap.as_ref().expect("piaacmc plan carries a remap");
        let m = remap.mask_radius();
        let (tr, tw) = gauss_legendre_on(20, 0.0, m);
        let n_ang = 64;
        let mut focal = Vec::with_capacity(tr.len() * n_ang);
        let mut fw = Vec::with_capacity(tr.len() * n_ang);
        for (t, w) in tr.iter().zip(&tw) {
            for j in 0..n_ang {
                let a = 2.0 * PI * j as f64 / n_ang as f64;
                focal.push([t * a.cos(), t * a.sin()]);
                fw.push(w * t * 2.0 * PI / n_ang as f64);
            }
        }
        let da = self.disk.area();
        let (v, inv_a): (Vec<[f64; 2]>, Vec<f64>) = self
            .disk
            .points
            .par_iter()
            .map(|p| {
                let r = p[0].hypot(p[1]);
                let q = remap.rho_out(r.min(1.0));
                let s = if r > 0.0 { q / r } else { 0.0 };
                ([p[0] * s, p[1] * s], 1.0 / remap.amplitude(q))
            })
            .unzip();
        let sq: Vec<f64> = self.disk.coverage.iter().map(|c| c.sqrt()).collect();
        let nb = inputs.len();
        // G[a][k]
        let g: Vec<Vec<Complex64>> = focal
            .par_iter()
            .map(|r| {
                let mut acc = vec![C0; nb];
                for i in 0..v.len() {
                    let e = Complex64::from_polar(sq[i] * inv_a[i] * da, -2.0 * PI * (v[i][0] * r[0] + v[i][1] * r[1]));
                    for (k, f) in inputs.iter().enumerate() {
                        acc[k] += e * f[i];
                    }
                }
                acc
            })
            .collect();
        let corr: Vec<Vec<Complex64>> = (0..v.len())
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![C0; nb];
                for (a, r) in focal.iter().enumerate() {
                    let e = Complex64::from_polar(fw[a], 2.0 * PI * (v[i][0] * r[0] + v[i][1] * r[1]));
                    for k in 0..nb {
                        acc[k] += e * g[a][k];
                    }
                }
                let s = 2.0 * sq[i] * inv_a[i];
                acc.iter_mut().for_each(|x| *x *= s);
                acc
            })
            .collect();
        inputs
            .iter()
            .enumerate()
            .map(|(k, f)| f.iter().zip(&corr).map(|(x, c)| x - c[k]).collect())
            .collect()
    }
}

/// C = 1 - |psi_0><psi_0| on a focal field, with psi_0 the propagated
/// sampled pupil of the same grid.
pub fn perfect_apply(field: &OpticalField) -> Result<OpticalField> {
    if field.domain != Domain::Focal {
        return Err(Error::GridMismatch("perfect_apply expects a focal field".into()));
    }
    let psi0 = propagate(&crate::optics::pupil_field(field.grid));
    let c = crate::optics::overlap(&psi0, field)?;
    let mut out = field.clone();
    out.axpy(-c, &psi0)?;
    Ok(out)
}

/// PIAACMC with the null-producing prolate on the field's own grid.
pub fn piaacmc_apply(field: &OpticalField) -> Result<OpticalField> {
    PropagatorPlan::piaacmc(field.grid, default_remap()?.clone()).apply(field)
}

/// Charge-2 vortex with a unit Lyot stop on the field's own grid; use
/// [`coronagraph_grid`] sampling to keep the on-axis leak below 1e-3.
pub fn vortex_apply(field: &OpticalField) -> Result<OpticalField> {
    PropagatorPlan::vortex(field.grid, 2)?.apply(field)
}

/// M_jk = <psi_j, apply(psi_k)> over the sampled basis, returned as an operator.
pub fn extract_operator(plan: &PropagatorPlan, basis: &FourierZernikeBasis) -> Result<CoronagraphOperator> {
    if basis.n_max > EXTRACT_MAX_ORDER {
        return Err(Error::Precondition(format!("basis order {} exceeds {EXTRACT_MAX_ORDER}", basis.n_max)));
    }
    if basis.rotation != 0.0 {
        return Err(Error::Precondition("extraction uses the unrotated basis".into()));
    }
    let z = plan.disk.zernikes(basis.n_max);
    let inputs: Vec<Vec<Complex64>> = z.iter().map(|v| v.iter().map(|&x| Complex64::new(x, 0.0)).collect()).collect();
    let outputs = plan.apply_batch(&inputs)?;
    let k = z.len();
    let da = plan.disk.area();
    let ph: Vec<Complex64> = (0..k).map(|i| focal_phase(ZernikeIndex::from_linear(i))).collect();
    let m = DMatrix::from_fn(k, k, |j, l| {
        let d: Complex64 = z[j].iter().zip(&outputs[l]).map(|(a, b)| b * *a).sum::<Complex64>() * da;
        d * ph[j] / ph[l]
    });
    let mut op = CoronagraphOperator::from_matrix(&plan.name, basis.n_max, m)?;
    op.grid = Some(plan.grid);
    Ok(op)
}
