//! Circular-aperture imaging model on a centered sampling grid.
//!
//! Pupil coordinate u is scaled so the aperture is the unit disk; focal
//! coordinate r is conjugate to it, so the PSF is J1(2 pi r) / (sqrt(pi) r).
//! Grids have an even number of pixels per side and pixel (n/2, n/2) is the
//! origin, so sample (i, j) sits at ((j - n/2) d, (i - n/2) d) with rows
//! indexing y. Focal and pupil pitches satisfy dr * du = 1 / n.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::bessel_j_seq;

/// First zero of the Airy pattern in focal units.
pub const SIGMA_AIRY: f64 = 0.6098;

pub fn sigma_to_r(x: f64) -> f64 {
    x * SIGMA_AIRY
}

pub fn r_to_sigma(r: f64) -> f64 {
    r / SIGMA_AIRY
}

/// Amplitude of the unit-norm pupil: 1/sqrt(pi) on the closed unit disk.
pub fn pupil_function(u: [f64; 2]) -> f64 {
    if u[0] * u[0] + u[1] * u[1] <= 1.0 {
        1.0 / PI.sqrt()
    } else {
        0.0
    }
}

/// J1(2 pi r) / (sqrt(pi) r), the Fourier transform of [`pupil_function`].
pub fn psf_radial(r: f64) -> f64 {
    if r.abs() < 1e-8 {
        return PI.sqrt();
    }
    bessel_j_seq(1, 2.0 * PI * r)[1] / (PI.sqrt() * r)
}

pub fn psf(r: [f64; 2]) -> f64 {
    psf_radial(r[0].hypot(r[1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Pupil,
    Focal,
}

/// Square sampling grid: `n` pixels per side spanning +-`half_width` in the
/// focal plane. The conjugate pupil pitch is 1 / (2 half_width).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub half_width: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { n: 1024, half_width: 16.0 }
    }
}

impl GridSpec {
    pub fn new(n: usize, half_width: f64) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::Precondition(format!("grid size {n} must be even and >= 2")));
        }
        if !(half_width > 0.0) {
            return Err(Error::Precondition("grid half_width must be positive".into()));
        }
        Ok(Self { n, half_width })
    }

    pub fn focal_pitch(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn pupil_pitch(&self) -> f64 {
        1.0 / (self.n as f64 * self.focal_pitch())
    }

    pub fn pitch(&self, domain: Domain) -> f64 {
        match domain {
            Domain::Pupil => self.pupil_pitch(),
            Domain::Focal => self.focal_pitch(),
        }
    }

    /// Coordinate of pixel index `i` along one axis.
    pub fn coord(&self, domain: Domain, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64) * self.pitch(domain)
    }

    pub fn pixel_area(&self, domain: Domain) -> f64 {
        self.pitch(domain).powi(2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpticalField {
    pub grid: GridSpec,
    pub domain: Domain,
    /// Row-major samples, row index is y.
    pub samples: Vec<Complex64>,
}

impl OpticalField {
    pub fn zeros(grid: GridSpec, domain: Domain) -> Self {
        Self { grid, domain, samples: vec![Complex64::new(0.0, 0.0); grid.n * grid.n] }
    }

    pub fn from_fn(grid: GridSpec, domain: Domain, f: impl Fn(f64, f64) -> Complex64 + Sync) -> Self {
        let n = grid.n;
        let mut samples = vec![Complex64::new(0.0, 0.0); n * n];
        samples.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            let y = grid.coord(domain, i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = f(grid.coord(domain, j), y);
            }
        });
        Self { grid, domain, samples }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.samples.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.pixel_area(self.domain)
    }

    pub fn scale(&mut self, s: Complex64) {
        self.samples.iter_mut().for_each(|v| *v *= s);
    }

    pub fn normalized(mut self) -> Self {
        let n = self.norm_sqr();
        if n > 0.0 {
            self.scale(Complex64::new(1.0 / n.sqrt(), 0.0));
        }
        self
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.samples.iter().map(|v| v.norm_sqr()).collect()
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid || self.domain != other.domain {
            return Err(Error::GridMismatch(format!(
                "{:?}/{:?} vs {:?}/{:?}",
                self.grid, self.domain, other.grid, other.domain
            )));
        }
        Ok(())
    }

    /// a*x + self
    pub fn axpy(&mut self, a: Complex64, x: &Self) -> Result<()> {
        self.check_compatible(x)?;
        self.samples.iter_mut().zip(&x.samples).for_each(|(s, v)| *s += a * v);
        Ok(())
    }
}

/// Discrete inner product sum conj(a) b dA.
pub fn overlap(a: &OpticalField, b: &OpticalField) -> Result<Complex64> {
    a.check_compatible(b)?;
    let s: Complex64 = a
        .samples
        .par_iter()
        .zip(b.samples.par_iter())
        .map(|(x, y)| x.conj() * y)
        .sum();
    Ok(s * a.grid.pixel_area(a.domain))
}

struct Planned {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Planned {
    let mut planner = FftPlanner::new();
    Planned { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
}

fn fft_rows(data: &mut [Complex64], p: &Planned, inverse: bool) {
    let f = if inverse { &p.inv } else { &p.fwd };
    data.par_chunks_mut(p.n).for_each_init(
        || vec![Complex64::new(0.0, 0.0); f.get_inplace_scratch_len()],
        |scratch, row| f.process_with_scratch(row, scratch),
    );
}

fn transpose(data: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = data[j * n + i];
        }
    });
    out
}

/// Centered 2D DFT: roll origin to index 0, transform, roll back.
fn centered_fft2(samples: &[Complex64], n: usize, inverse: bool) -> Vec<Complex64> {
    let h = n / 2;
    let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
    buf.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let si = (i + h) % n;
        for (j, v) in row.iter_mut().enumerate() {
            *v = samples[si * n + (j + h) % n];
        }
    });
    let p = plans(n);
    fft_rows(&mut buf, &p, inverse);
    let mut t = transpose(&buf, n);
    fft_rows(&mut t, &p, inverse);
    let buf = transpose(&t, n);
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let si = (i + h) % n;
        for (j, v) in row.iter_mut().enumerate() {
            *v = buf[si * n + (j + h) % n];
        }
    });
    out
}

fn other(domain: Domain) -> Domain {
    match domain {
        Domain::Pupil => Domain::Focal,
        Domain::Focal => Domain::Pupil,
    }
}

/// Forward transform exp(-2 pi i u.r) between pupil and focal planes.
/// Applied twice it returns the input with coordinates negated.
pub fn propagate(field: &OpticalField) -> OpticalField {
    let area = field.grid.pixel_area(field.domain);
    let mut samples = centered_fft2(&field.samples, field.grid.n, false);
    samples.par_iter_mut().for_each(|v| *v *= area);
    OpticalField { grid: field.grid, domain: other(field.domain), samples }
}

/// Inverse transform exp(+2 pi i u.r); undoes [`propagate`].
pub fn propagate_inverse(field: &OpticalField) -> OpticalField {
    let area = field.grid.pixel_area(field.domain);
    let mut samples = centered_fft2(&field.samples, field.grid.n, true);
    samples.par_iter_mut().for_each(|v| *v *= area);
    OpticalField { grid: field.grid, domain: other(field.domain), samples }
}

/// Fraction of each pupil pixel covered by the unit disk, from `ss` x `ss`
/// subsamples per pixel.
pub fn disk_coverage(grid: GridSpec, ss: usize) -> Vec<f64> {
    let n = grid.n;
    let du = grid.pupil_pitch();
    let mut w = vec![0.0; n * n];
    let reach = 1.0 + du;
    w.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let y = grid.coord(Domain::Pupil, i);
        if y.abs() > reach {
            return;
        }
        for (j, v) in row.iter_mut().enumerate() {
            let x = grid.coord(Domain::Pupil, j);
            if x.abs() > reach {
                continue;
            }
            let mut hits = 0usize;
            for a in 0..ss {
                let sy = y + ((a as f64 + 0.5) / ss as f64 - 0.5) * du;
                for b in 0..ss {
                    let sx = x + ((b as f64 + 0.5) / ss as f64 - 0.5) * du;
                    if sx * sx + sy * sy <= 1.0 {
                        hits += 1;
                    }
                }
            }
            *v = hits as f64 / (ss * ss) as f64;
        }
    });
    w
}

/// Amplitude weights sqrt(coverage); they integrate |P|^2 to the exact
/// pixel-covered area and so keep overlaps close to the continuum ones.
pub fn pupil_weights(grid: GridSpec) -> Vec<f64> {
    disk_coverage(grid, 8).into_iter().map(f64::sqrt).collect()
}

/// Sampled unit-norm pupil field.
pub fn pupil_field(grid: GridSpec) -> OpticalField {
    let w = pupil_weights(grid);
    let samples = w.iter().map(|&v| Complex64::new(v / PI.sqrt(), 0.0)).collect();
    OpticalField { grid, domain: Domain::Pupil, samples }.normalized()
}

/// Pupil field of a point source at focal position `s`: pupil * exp(2 pi i u.s).
pub fn tilted_pupil_field(grid: GridSpec, s: [f64; 2]) -> OpticalField {
    let mut f = pupil_field(grid);
    let n = grid.n;
    f.samples.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let y = grid.coord(Domain::Pupil, i);
        for (j, v) in row.iter_mut().enumerate() {
            if *v != Complex64::new(0.0, 0.0) {
                let x = grid.coord(Domain::Pupil, j);
                *v *= Complex64::from_polar(1.0, 2.0 * PI * (x * s[0] + y * s[1]));
            }
        }
    });
    f
}

/// Focal field psi_0(r - s) built by propagating the tilted sampled pupil.
pub fn shifted_source_field(s: [f64; 2], grid: GridSpec) -> Result<OpticalField> {
    if grid.half_width < s[0].hypot(s[1]) + 3.0 {
        return Err(Error::Precondition(format!(
            "grid half_width {} < |s| + 3 for s = {:?}",
            grid.half_width, s
        )));
    }
    Ok(propagate(&tilted_pupil_field(grid, s)))
}

/// The analytic PSF sampled point-wise on the focal grid.
pub fn sampled_psf_field(grid: GridSpec, s: [f64; 2]) -> OpticalField {
    OpticalField::from_fn(grid, Domain::Focal, |x, y| {
        Complex64::new(psf([x - s[0], y - s[1]]), 0.0)
    })
}

/// Star-planet configuration with the optical axis on the center of intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub r_delta: f64,
    pub phi_delta: f64,
    pub b: f64,
}

impl Scene {
    pub fn new(r_delta: f64, phi_delta: f64, b: f64) -> Result<Self> {
        if !(r_delta >= 0.0) || !r_delta.is_finite() {
            return Err(Error::Domain(format!("r_delta must be finite and >= 0, got {r_delta}")));
        }
        if !(b > 0.0 && b < 1.0) {
            return Err(Error::Domain(format!("b must lie in (0,1), got {b}")));
        }
        Ok(Self { r_delta, phi_delta: phi_delta.rem_euclid(2.0 * PI), b })
    }

    /// Star in polar form (b r, phi + pi).
    pub fn star_polar(&self) -> (f64, f64) {
        (self.b * self.r_delta, self.phi_delta + PI)
    }

    /// Planet in polar form ((1-b) r, phi).
    pub fn planet_polar(&self) -> (f64, f64) {
        ((1.0 - self.b) * self.r_delta, self.phi_delta)
    }

    pub fn star_position(&self) -> [f64; 2] {
        let (c, s) = (self.phi_delta.cos(), self.phi_delta.sin());
        [-self.b * self.r_delta * c, -self.b * self.r_delta * s]
    }

    pub fn planet_position(&self) -> [f64; 2] {
        let (c, s) = (self.phi_delta.cos(), self.phi_delta.sin());
        let a = (1.0 - self.b) * self.r_delta;
        [a * c, a * s]
    }

    pub fn center_of_intensity(&self) -> [f64; 2] {
        let s = self.star_position();
        let e = self.planet_position();
        [
            (1.0 - self.b) * s[0] + self.b * e[0],
            (1.0 - self.b) * s[1] + self.b * e[1],
        ]
    }
}

/// Telescope and source parameters used to convert photon counts to time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelescopePrescription {
    pub diameter_m: f64,
    pub center_wavelength_m: f64,
    pub bandwidth_m: f64,
    pub star_vmag: f64,
    pub reference_flux_si: f64,
    pub photon_flux_hz: f64,
}

impl Default for TelescopePrescription {
    fn default() -> Self {
        Self {
            diameter_m: 6.5,
            center_wavelength_m: 1.29e-6,
            bandwidth_m: 1.3e-8,
            star_vmag: 5.357,
            reference_flux_si: 1.589e-23,
            photon_flux_hz: 6.0e7,
        }
    }
}

impl TelescopePrescription {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let p: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        for (key, v) in [
            ("diameter_m", p.diameter_m),
            ("center_wavelength_m", p.center_wavelength_m),
            ("bandwidth_m", p.bandwidth_m),
            ("reference_flux_si", p.reference_flux_si),
            ("photon_flux_hz", p.photon_flux_hz),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("key `{key}` must be positive, got {v}")));
            }
        }
        if !p.star_vmag.is_finite() {
            return Err(Error::Config("key `star_vmag` must be finite".into()));
        }
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_config_string(&self) -> String {
        format!(
            "diameter_m = {:e}\ncenter_wavelength_m = {:e}\nbandwidth_m = {:e}\nstar_vmag = {}\nreference_flux_si = {:e}\nphoton_flux_hz = {:e}\n",
            self.diameter_m,
            self.center_wavelength_m,
            self.bandwidth_m,
            self.star_vmag,
            self.reference_flux_si,
            self.photon_flux_hz
        )
    }
}
