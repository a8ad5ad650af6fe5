//! Detected intensity behind a coronagraph and raster output.

use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::PropagatorPlan;
use super::CoronagraphOperator;
use crate::error::{Error, Result};
use crate::optics::{tilted_pupil_field, Domain, Scene};

/// Square raster of focal-plane samples; pixel (i, j) sits at
/// ((j - n/2) * pitch, (i - n/2) * pitch) with pitch = 2 * half_width / n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    pub n: usize,
    pub half_width: f64,
    /// Row-major, row index is y.
    pub data: Vec<f64>,
}

pub const RASTER_MAGIC: [u8; 8] = *b"EXRAST01";

impl Raster {
    pub fn pitch(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64) * self.pitch()
    }

    /// Sum of intensity times pixel area.
    pub fn total(&self) -> f64 {
        self.data.iter().sum::<f64>() * self.pitch().powi(2)
    }

    pub fn peak(&self) -> f64 {
        self.data.iter().cloned().fold(0.0, f64::max)
    }

    /// Strict local maxima (8-neighbourhood) above `fraction` of the peak.
    pub fn local_maxima(&self, fraction: f64) -> Vec<(usize, usize)> {
        let n = self.n;
        let thr = fraction * self.peak();
        let mut out = Vec::new();
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                let v = self.data[i * n + j];
                if v <= thr {
                    continue;
                }
                let mut top = true;
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let w = self.data[(i as i64 + di) as usize * n + (j as i64 + dj) as usize];
                        if w >= v {
                            top = false;
                        }
                    }
                }
                if top {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Binary layout, little endian: 8-byte magic "EXRAST01", u32 width,
    /// u32 height, then width*height f32 samples row by row.
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&RASTER_MAGIC)?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads the layout of [`Self::write_to`]; the geometry is not stored, so
    /// `half_width` is supplied by the caller.
    pub fn read_from(r: &mut impl Read, half_width: f64) -> Result<Self> {
        let io = |e: std::io::Error| Error::Config(e.to_string());
        let mut head = [0u8; 16];
        r.read_exact(&mut head).map_err(io)?;
        if head[..8] != RASTER_MAGIC {
            return Err(Error::Config("bad raster magic".into()));
        }
        let w = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
        let h = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
        if w != h {
            return Err(Error::Config(format!("raster is {w}x{h}, expected square")));
        }
        let mut buf = vec![0u8; 4 * w * h];
        r.read_exact(&mut buf).map_err(io)?;
        let data = buf.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        Ok(Self { n: w, half_width, data })
    }
}

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Field sum_j a_j psi_j on a raster.
pub fn modal_field(n_max: u32, coeffs: &[Complex64], n: usize, half_width: f64) -> Vec<Complex64> {
    let pitch = 2.0 * half_width / n as f64;
    let c = |i: usize| (i as f64 - (n / 2) as f64) * pitch;
    let basis = crate::modebasis::FourierZernikeBasis::new(n_max);
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let y = c(i);
        for (j, v) in row.iter_mut().enumerate() {
            let x = c(j);
            let (r, phi) = (x.hypot(y), y.atan2(x));
            let g = basis.projections(r, phi);
            *v = g.iter().zip(coeffs).map(|(g, a)| a * (g * SQRT_PI)).sum();
        }
    });
    out
}

#[derive(Clone, Copy)]
pub enum ImageSource<'a> {
    Modal(&'a CoronagraphOperator),
    Grid(&'a PropagatorPlan),
}

/// |C psi_0(r - s)|^2 for a single unit-energy source at focal position s.
///
/// For a grid plan the raster is the central n x n block of the plan's focal
/// grid and `half_width` is ignored.
pub fn source_image(src: ImageSource<'_>, s: [f64; 2], n: usize, half_width: f64) -> Result<Raster> {
    match src {
        ImageSource::Modal(op) => {
            let e = modal_field(op.n_max, &op.source_output(s[0].hypot(s[1]), s[1].atan2(s[0])), n, half_width);
            Ok(Raster { n, half_width, data: e.iter().map(|v| v.norm_sqr()).collect() })
        }
        ImageSource::Grid(plan) => {
            let g = plan.grid;
            if n > g.n {
                return Err(Error::Precondition(format!("raster {n} larger than grid {}", g.n)));
            }
            let out = plan.apply(&tilted_pupil_field(g, s))?;
            let off = g.n / 2 - n / 2;
            let mut data = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    data.push(out.samples[(i + off) * g.n + j + off].norm_sqr());
                }
            }
            let hw = g.pitch(Domain::Focal) * n as f64 / 2.0;
            Ok(Raster { n, half_width: hw, data })
        }
    }
}

/// p(r) = (1-b) |C psi_star|^2 + b |C psi_planet|^2 sampled on a raster.
pub fn output_state_image(src: ImageSource<'_>, scene: &Scene, n: usize, half_width: f64) -> Result<Raster> {
    let star = source_image(src.clone(), scene.star_position(), n, half_width)?;
    let planet = source_image(src, scene.planet_position(), n, half_width)?;
    let data = star.data.iter().zip(&planet.data).map(|(a, b)| (1.0 - scene.b) * a + scene.b * b).collect();
    Ok(Raster { data, ..star })
}

/// Total detected probability from the full grid image.
pub fn grid_detected_energy(plan: &PropagatorPlan, scene: &Scene) -> Result<f64> {
    let g = plan.grid;
    let star = plan.apply(&tilted_pupil_field(g, scene.star_position()))?;
    let planet = plan.apply(&tilted_pupil_field(g, scene.planet_position()))?;
    Ok((1.0 - scene.b) * star.norm_sqr() + scene.b * planet.norm_sqr())
}

/// Image of singular mode chi_k: |sum_j v_j psi_j|^2.
pub fn mode_image(n_max: u32, mode: &[Complex64], n: usize, half_width: f64) -> Raster {
    let f = modal_field(n_max, mode, n, half_width);
    Raster { n, half_width, data: f.iter().map(|v| v.norm_sqr()).collect() }
}
