//! Circular prolate apodization: leading eigenfunction of the finite Fourier
//! transform restricted to the unit pupil and a focal disk of radius m.
//!
//! In the rotationally symmetric sector the pupil -> focal disk -> pupil
//! operator has kernel k(p, q) = 4 pi^2 int_0^m J0(2 pi r p) J0(2 pi r q) r dr
//! against the measure q dq on [0, 1]. An on-axis source behind a pi-phase
//! disk of radius m is nulled when the leading eigenvalue equals 1/2.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre_on;
use crate::specfun::bessel_j_seq;

const PUPIL_NODES: usize = 128;
const FOCAL_NODES: usize = 64;
const POWER_TOL: f64 = 1e-10;
const TABLE_POINTS: usize = 4096;

/// Discretized radial transform between the pupil [0, 1] and a focal disk
/// [0, m] for one angular order.
#[derive(Debug, Clone)]
pub struct RadialTransform {
    pub order: u32,
    pub mask_radius: f64,
    pub focal_nodes: Vec<f64>,
    /// 4 pi^2 w_a r_a for the focal rule.
    pub focal_weights: Vec<f64>,
}

impl RadialTransform {
    pub fn new(order: u32, mask_radius: f64, nodes: usize) -> Self {
        let (r, w) = gauss_legendre_on(nodes, 0.0, mask_radius);
        let fw = r.iter().zip(&w).map(|(r, w)| 4.0 * PI * PI * r * w).collect();
        Self { order, mask_radius, focal_nodes: r, focal_weights: fw }
    }

    /// Rows J_order(2 pi r_a p) for each pupil radius p.
    pub fn kernel_rows(&self, pupil: &[f64]) -> Vec<Vec<f64>> {
        let l = self.order as usize;
        pupil
            .iter()
            .map(|&p| {
                self.focal_nodes.iter().map(|&r| bessel_j_seq(l, 2.0 * PI * r * p)[l]).collect()
            })
            .collect()
    }
}

/// Closed-form kernel k_l(p, q) = 4 pi^2 int_0^m J_l(a r) J_l(b r) r dr with
/// a = 2 pi p, b = 2 pi q (Lommel integral).
pub fn lommel_kernel(order: u32, m: f64, p: f64, q: f64) -> f64 {
    let l = order as usize;
    let (a, b) = (2.0 * PI * p, 2.0 * PI * q);
    let ja = bessel_j_seq(l + 1, a * m);
    let jb = bessel_j_seq(l + 1, b * m);
    let jm1 = |j: &[f64]| if l == 0 { -j[1] } else { j[l - 1] };
    let val = if (a - b).abs() < 1e-9 * (1.0 + a.abs()) {
        0.5 * m * m * (ja[l] * ja[l] - jm1(&ja) * ja[l + 1])
    } else {
        m * (b * jm1(&jb) * ja[l] - a * jm1(&ja) * jb[l]) / (a * a - b * b)
    };
    4.0 * PI * PI * val
}

/// Leading eigenpair of the l = 0 restricted transform for a given mask radius.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prolate {
    pub mask_radius: f64,
    pub eigenvalue: f64,
    pupil_nodes: Vec<f64>,
    pupil_weights: Vec<f64>,
    focal_nodes: Vec<f64>,
    /// Nystrom coefficients: A(p) = sum_a coef_a J0(2 pi r_a p).
    coef: Vec<f64>,
}

impl Prolate {
    pub fn new(mask_radius: f64) -> Result<Self> {
        if !(mask_radius > 0.0) {
            return Err(Error::Domain("mask radius must be positive".into()));
        }
        let (p, w) = gauss_legendre_on(PUPIL_NODES, 0.0, 1.0);
        let t = RadialTransform::new(0, mask_radius, FOCAL_NODES);
        let rows = t.kernel_rows(&p);
        let d: Vec<f64> = p.iter().zip(&w).map(|(p, w)| (p * w).sqrt()).collect();
        // S = D B^T F B D, applied matrix-free
        let apply = |y: &[f64]| -> Vec<f64> {
            let mut focal = vec![0.0; t.focal_nodes.len()];
            for (i, row) in rows.iter().enumerate() {
                let v = d[i] * y[i];
                for (a, k) in row.iter().enumerate() {
                    focal[a] += k * v;
                }
            }
            for (f, fw) in focal.iter_mut().zip(&t.focal_weights) {
                *f *= fw;
            }
            rows.iter()
                .enumerate()
                .map(|(i, row)| d[i] * row.iter().zip(&focal).map(|(k, f)| k * f).sum::<f64>())
                .collect()
        };
        let mut y = d.clone();
        let mut lambda = 0.0;
        let mut converged = false;
        for _ in 0..10_000 {
            let z = apply(&y);
            let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            let next: Vec<f64> = z.iter().map(|v| v / norm).collect();
            let lam = y.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
            let diff = next.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            y = next;
            if diff < POWER_TOL && (lam - lambda).abs() < POWER_TOL * lam.abs() {
                lambda = lam;
                converged = true;
                break;
            }
            lambda = lam;
        }
        if !converged {
            return Err(Error::NonConvergence("prolate power iteration".into()));
        }
        let g: Vec<f64> = y.iter().zip(&d).map(|(v, d)| v / d).collect();
        let mut coef = vec![0.0; t.focal_nodes.len()];
        for (i, row) in rows.iter().enumerate() {
            let v = w[i] * p[i] * g[i];
            for (a, k) in row.iter().enumerate() {
                coef[a] += k * v;
            }
        }
        for (c, fw) in coef.iter_mut().zip(&t.focal_weights) {
            *c *= fw / lambda;
        }
        let mut out = Self {
            mask_radius,
            eigenvalue: lambda,
            pupil_nodes: p,
            pupil_weights: w,
            focal_nodes: t.focal_nodes,
            coef,
        };
        // 2 int A^2 p dp = 1 with A(0) > 0, so the uniform pupil maps to A = 1
        let n2: f64 = 2.0
            * out
                .pupil_nodes
                .iter()
                .zip(&out.pupil_weights)
                .map(|(p, w)| w * p * out.value(*p).powi(2))
                .sum::<f64>();
        let s = out.value(0.0).signum() / n2.sqrt();
        out.coef.iter_mut().for_each(|c| *c *= s);
        Ok(out)
    }

    /// Mask radius where the leading eigenvalue is 1/2 (on-axis null).
    pub fn for_null() -> Result<Self> {
        let lam = |m: f64| Prolate::new(m).map(|p| p.eigenvalue);
        let (mut lo, mut hi) = (0.05, 1.0);
        if !(lam(lo)? < 0.5 && lam(hi)? > 0.5) {
            return Err(Error::NonConvergence("null mask radius not bracketed".into()));
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if lam(mid)? < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        Prolate::new(0.5 * (lo + hi))
    }

    /// Apodization amplitude A(p), normalized so 2 int_0^1 A^2 p dp = 1.
    pub fn value(&self, p: f64) -> f64 {
        self.focal_nodes
            .iter()
            .zip(&self.coef)
            .map(|(r, c)| c * bessel_j_seq(0, 2.0 * PI * r * p)[0])
            .sum()
    }

    /// dA/dp.
    pub fn derivative(&self, p: f64) -> f64 {
        self.focal_nodes
            .iter()
            .zip(&self.coef)
            .map(|(r, c)| -c * 2.0 * PI * r * bessel_j_seq(1, 2.0 * PI * r * p)[1])
            .sum()
    }
}

/// Lossless radial remap of the uniform pupil onto the prolate amplitude.
///
/// Output radius q receives the input annulus at p_in(q) = sqrt(E(q)), with
/// E(q) = 2 int_0^q A^2 t dt, so a field f maps to A(q) f(p_in(q) u/|u|).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PiaaRemap {
    pub prolate: Prolate,
    grid: Vec<f64>,
    amp: Vec<f64>,
    damp: Vec<f64>,
    cum: Vec<f64>,
}

impl PiaaRemap {
    pub fn new(prolate: Prolate) -> Self {
        let n = TABLE_POINTS;
        let grid: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let amp: Vec<f64> = grid.iter().map(|&q| prolate.value(q)).collect();
        let damp: Vec<f64> = grid.iter().map(|&q| prolate.derivative(q)).collect();
        let (x, w) = gauss_legendre_on(6, 0.0, 1.0);
        let mut cum = vec![0.0; n + 1];
        for i in 0..n {
            let (a, b) = (grid[i], grid[i + 1]);
            let s: f64 = x
                .iter()
                .zip(&w)
                .map(|(t, wt)| {
                    let q = a + (b - a) * t;
                    wt * 2.0 * prolate.value(q).powi(2) * q
                })
                .sum::<f64>()
                * (b - a);
            cum[i + 1] = cum[i] + s;
        }
        // absorb the residual quadrature error so E(1) = 1 exactly
        let total = cum[n];
        cum.iter_mut().for_each(|c| *c /= total);
        Self { prolate, grid, amp, damp, cum }
    }

    pub fn mask_radius(&self) -> f64 {
        self.prolate.mask_radius
    }

    fn locate(&self, q: f64) -> (usize, f64) {
        let n = self.grid.len() - 1;
        let t = (q.clamp(0.0, 1.0) * n as f64).min(n as f64 - 1e-12);
        let i = t.floor() as usize;
        (i.min(n - 1), t - i as f64)
    }

    /// Amplitude A(q) by cubic interpolation of the table.
    pub fn amplitude(&self, q: f64) -> f64 {
        let (i, t) = self.locate(q);
        let h = 1.0 / (self.grid.len() - 1) as f64;
        hermite(self.amp[i], self.amp[i + 1], self.damp[i] * h, self.damp[i + 1] * h, t)
    }

    /// E(q), cumulative normalized energy.
    pub fn energy(&self, q: f64) -> f64 {
        let (i, t) = self.locate(q);
        let n = self.grid.len() - 1;
        let h = 1.0 / n as f64;
        let de = |j: usize| 2.0 * self.amp[j].powi(2) * self.grid[j] * h;
        hermite(self.cum[i], self.cum[i + 1], de(i), de(i + 1), t)
    }

    /// Input radius feeding output radius q.
    pub fn rho_in(&self, q: f64) -> f64 {
        self.energy(q).max(0.0).sqrt()
    }

    /// Output radius fed by input radius p (inverse of [`Self::rho_in`]).
    pub fn rho_out(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        let target = p * p;
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut q = (p / self.amp[0]).min(1.0);
        for _ in 0..200 {
            let e = self.energy(q) - target;
            if e > 0.0 {
                hi = q;
            } else {
                lo = q;
            }
            let de = 2.0 * self.amplitude(q).powi(2) * q;
            let step = if de > 0.0 { q - e / de } else { f64::NAN };
            let next = if step.is_finite() && step > lo && step < hi { step } else { 0.5 * (lo + hi) };
            if (next - q).abs() < 1e-16 || hi - lo < 1e-16 {
                return next;
            }
            q = next;
        }
        q
    }
}

fn hermite(y0: f64, y1: f64, m0: f64, m1: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * m0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * m1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorized_kernel_matches_lommel() {
        for order in [0u32, 1, 3] {
            let t = RadialTransform::new(order, 0.4, 64);
            let p = [0.0, 0.2, 0.55, 0.9, 1.0];
            let rows = t.kernel_rows(&p);
            for i in 0..p.len() {
                for j in 0..p.len() {
                    let quad: f64 = rows[i]
                        .iter()
                        .zip(&rows[j])
                        .zip(&t.focal_weights)
                        .map(|((a, b), w)| a * b * w)
                        .sum();
                    let closed = lommel_kernel(order, 0.4, p[i], p[j]);
                    assert!((quad - closed).abs() < 1e-12, "l={order} {i},{j}: {quad} {closed}");
                }
            }
        }
    }

    #[test]
    fn eigen_relation_holds_off_nodes() {
        let pr = Prolate::new(0.3).unwrap();
        let (q, w) = gauss_legendre_on(200, 0.0, 1.0);
        for &p in &[0.0, 0.37, 0.81, 1.0] {
            let lhs: f64 = q
                .iter()
                .zip(&w)
                .map(|(t, wt)| wt * t * lommel_kernel(0, 0.3, p, *t) * pr.value(*t))
                .sum();
            assert!((lhs - pr.eigenvalue * pr.value(p)).abs() < 1e-10);
        }
    }

    #[test]
    fn eigenvalue_grows_with_mask() {
        let a = Prolate::new(0.2).unwrap().eigenvalue;
        let b = Prolate::new(0.3).unwrap().eigenvalue;
        let c = Prolate::new(0.5).unwrap().eigenvalue;
        assert!(a < b && b < c && c < 1.0);
    }

    #[test]
    fn null_radius() {
        let pr = Prolate::for_null().unwrap();
        assert!((pr.eigenvalue - 0.5).abs() < 1e-10);
        assert!((pr.mask_radius - 0.26545).abs() < 1e-4, "{}", pr.mask_radius);
        // monotone taper toward the rim
        let v: Vec<f64> = (0..=10).map(|i| pr.value(i as f64 / 10.0)).collect();
        assert!(v.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn remap_round_trip() {
        let remap = PiaaRemap::new(Prolate::for_null().unwrap());
        assert!((remap.energy(1.0) - 1.0).abs() < 1e-15);
        for i in 0..=20 {
            let p = i as f64 / 20.0;
            let q = remap.rho_out(p);
            assert!((remap.rho_in(q) - p).abs() < 1e-12, "p={p}");
        }
        // energy conservation: dE/dq = 2 A^2 q
        let q = 0.6;
        let h = 1e-5;
        let de = (remap.energy(q + h) - remap.energy(q - h)) / (2.0 * h);
        assert!((de - 2.0 * remap.amplitude(q).powi(2) * q).abs() < 1e-7);
    }
}
