//! Coronagraphs as mode-selective attenuators C = sum_k tau_k |chi_k><chi_k|.
//!
//! Two independent routes are provided. [`CoronagraphOperator`] holds the
//! operator as a matrix over the real Fourier-Zernike focal basis, built
//! semi-analytically (exact for the Perfect and vortex designs, radial
//! quadrature for the PIAACMC). [`grid::PropagatorPlan`] pushes sampled fields
//! through the optical train with FFTs and matrix Fourier transforms, and
//! [`grid::extract_operator`] projects it back onto the same basis.

pub mod grid;
pub mod image;
pub mod prolate;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modebasis::FourierZernikeBasis;
use crate::optics::{GridSpec, Scene};
use crate::quadrature::gauss_legendre_on;
use crate::specfun::{bessel_j_seq, radial_unchecked, ZernikeIndex};

pub use prolate::{PiaaRemap, Prolate};

const C0: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const C1: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Singular values closer than this are treated as one degenerate cluster.
pub const CLUSTER_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    Perfect,
    Piaacmc,
    Vortex,
}

impl std::str::FromStr for DesignKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "perfect" | "pc" => Ok(Self::Perfect),
            "piaacmc" => Ok(Self::Piaacmc),
            "vortex" | "vc" => Ok(Self::Vortex),
            _ => Err(Error::Config(format!("unknown coronagraph design '{s}'"))),
        }
    }
}

/// Coronagraph as a matrix on the real focal Fourier-Zernike basis
/// (OSA order, unrotated): output coefficients = matrix * input coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CoronagraphOperator {
    pub name: String,
    pub n_max: u32,
    /// Sampling grid for operators extracted from a propagator.
    pub grid: Option<GridSpec>,
    pub matrix: DMatrix<Complex64>,
}

/// Singular-mode form of an operator, ascending in |tau|.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeDecomposition {
    /// Coefficient vectors of chi_k in the focal basis.
    pub modes: Vec<Vec<Complex64>>,
    pub transmissions: Vec<Complex64>,
}

impl ModeDecomposition {
    pub fn truncation(&self) -> usize {
        self.modes.len()
    }

    /// Largest |<chi_j, chi_k> - delta_jk|.
    pub fn gram_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, a) in self.modes.iter().enumerate() {
            for (k, b) in self.modes.iter().enumerate() {
                let d: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
                let target = if j == k { 1.0 } else { 0.0 };
                worst = worst.max((d - target).norm());
            }
        }
        worst
    }

    /// sum_k |tau_k|^2 |<chi_k, a>|^2: the energy the operator passes for
    /// input coefficients `a`.
    pub fn modal_energy(&self, a: &[Complex64]) -> f64 {
        self.modes
            .iter()
            .zip(&self.transmissions)
            .map(|(v, t)| {
                let p: Complex64 = v.iter().zip(a).map(|(x, y)| x.conj() * y).sum();
                t.norm_sqr() * p.norm_sqr()
            })
            .sum()
    }
}

/// JSON container for an operator and its decomposition.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct OperatorFile {
    name: String,
    n_max: u32,
    grid: Option<GridSpec>,
    basis: String,
    /// Row-major [re, im] entries.
    matrix: Vec<Complex64>,
    modes: Vec<Vec<Complex64>>,
    transmissions: Vec<Complex64>,
}

impl CoronagraphOperator {
    pub fn from_matrix(name: &str, n_max: u32, matrix: DMatrix<Complex64>) -> Result<Self> {
        let k = ZernikeIndex::count_up_to(n_max);
        if matrix.nrows() != k || matrix.ncols() != k {
            return Err(Error::Precondition(format!(
                "matrix is {}x{}, basis has {k} modes",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { name: name.to_string(), n_max, grid: None, matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn basis(&self) -> FourierZernikeBasis {
        FourierZernikeBasis::new(self.n_max)
    }

    pub fn apply(&self, a: &[Complex64]) -> Vec<Complex64> {
        let v = DVector::from_column_slice(a);
        (&self.matrix * v).as_slice().to_vec()
    }

    pub fn apply_real(&self, a: &[f64]) -> Vec<Complex64> {
        let c: Vec<Complex64> = a.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.apply(&c)
    }

    /// Output coefficients for a point source at polar (r, phi).
    pub fn source_output(&self, r: f64, phi: f64) -> Vec<Complex64> {
        self.apply_real(&self.basis().projections(r, phi))
    }

    /// Energy fraction of a point source at (r, phi) that passes.
    pub fn throughput(&self, r: f64, phi: f64) -> f64 {
        self.source_output(r, phi).iter().map(|v| v.norm_sqr()).sum()
    }

    /// Trace of C rho C^dagger for the scene: total detected probability.
    pub fn scene_throughput(&self, scene: &Scene) -> f64 {
        let (rs, ps) = scene.star_polar();
        let (re, pe) = scene.planet_polar();
        (1.0 - scene.b) * self.throughput(rs, ps) + scene.b * self.throughput(re, pe)
    }

    /// Spectral norm.
    pub fn norm(&self) -> f64 {
        self.matrix.clone().singular_values().max()
    }

    /// Singular-mode decomposition, ascending in |tau|. Degenerate clusters
    /// are resolved by diagonalizing the radial order n (then m) inside the
    /// cluster, so the ordering is reproducible.
    pub fn decompose(&self) -> Result<ModeDecomposition> {
        let k = self.dim();
        let blocks = coupled_blocks(&self.matrix);
        let mut sigma: Vec<f64> = Vec::with_capacity(k);
        let mut vecs: Vec<DVector<Complex64>> = Vec::with_capacity(k);
        for block in &blocks {
            let b = block.len();
            let sub = DMatrix::from_fn(b, b, |i, j| self.matrix[(block[i], block[j])]);
            let svd = sub
                .try_svd(false, true, 1e-14, 10_000)
                .ok_or_else(|| Error::NonConvergence(format!("SVD of {b}x{b} block")))?;
            let v_t = svd.v_t.expect("requested V");
            for (s, row) in svd.singular_values.iter().zip(v_t.row_iter()) {
                let mut full = DVector::from_element(k, C0);
                for (i, &g) in block.iter().enumerate() {
                    full[g] = row[i].conj();
                }
                sigma.push(*s);
                vecs.push(full);
            }
        }
        let key: Vec<f64> = (0..k)
            .map(|i| {
                let z = ZernikeIndex::from_linear(i);
                z.n as f64 + z.m as f64 / (4.0 * (self.n_max as f64 + 1.0))
            })
            .collect();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| sigma[a].total_cmp(&sigma[b]));
        let mut modes = Vec::with_capacity(k);
        let mut taus = Vec::with_capacity(k);
        let mut start = 0;
        while start < k {
            let mut end = start + 1;
            while end < k && sigma[order[end]] - sigma[order[start]] < CLUSTER_TOL {
                end += 1;
            }
            let cluster: Vec<&DVector<Complex64>> = order[start..end].iter().map(|&i| &vecs[i]).collect();
            let resolved = resolve_cluster(&cluster, &key);
            for v in resolved {
                let v = fix_phase(v);
                let mv = &self.matrix * &v;
                let diag: Complex64 = v.iter().zip(mv.iter()).map(|(a, b)| a.conj() * b).sum();
                let s = mv.norm();
                let tau = if diag.norm() > 1e-14 { Complex64::from_polar(s, diag.arg()) } else { Complex64::new(s, 0.0) };
                taus.push(tau);
                modes.push(v.as_slice().to_vec());
            }
            start = end;
        }
        Ok(ModeDecomposition { modes, transmissions: taus })
    }

    pub fn to_json(&self) -> Result<String> {
        let d = self.decompose()?;
        let file = OperatorFile {
            name: self.name.clone(),
            n_max: self.n_max,
            grid: self.grid,
            basis: "fourier-zernike-osa-real".into(),
            matrix: self.matrix.transpose().as_slice().to_vec(),
            modes: d.modes,
            transmissions: d.transmissions,
        };
        serde_json::to_string(&file).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<(Self, ModeDecomposition)> {
        let f: OperatorFile = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let k = ZernikeIndex::count_up_to(f.n_max);
        if f.matrix.len() != k * k {
            return Err(Error::Config(format!("matrix has {} entries, expected {}", f.matrix.len(), k * k)));
        }
        let matrix = DMatrix::from_row_slice(k, k, &f.matrix);
        let op = Self { name: f.name, n_max: f.n_max, grid: f.grid, matrix };
        Ok((op, ModeDecomposition { modes: f.modes, transmissions: f.transmissions }))
    }
}

/// Connected index groups of the coupling graph |M_jk| + |M_kj| > 0.
fn coupled_blocks(m: &DMatrix<Complex64>) -> Vec<Vec<usize>> {
    let k = m.nrows();
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for j in 0..k {
        for i in 0..k {
            if i != j && m[(i, j)] != C0 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..k {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

fn resolve_cluster(vecs: &[&DVector<Complex64>], key: &[f64]) -> Vec<DVector<Complex64>> {
    let c = vecs.len();
    if c == 1 {
        return vec![vecs[0].clone()];
    }
    let h = DMatrix::from_fn(c, c, |i, j| {
        vecs[i].iter().zip(vecs[j].iter()).zip(key).map(|((a, b), w)| a.conj() * b * *w).sum::<Complex64>()
    });
    let off: f64 = (0..c).flat_map(|i| (0..c).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| h[(i, j)].norm()).fold(0.0, f64::max);
    if off < 1e-12 {
        let mut idx: Vec<usize> = (0..c).collect();
        idx.sort_by(|&a, &b| h[(a, a)].re.total_cmp(&h[(b, b)].re));
        return idx.into_iter().map(|i| vecs[i].clone()).collect();
    }
    let eig = h.symmetric_eigen();
    let mut idx: Vec<usize> = (0..c).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    idx.into_iter()
        .map(|e| {
            let mut v = DVector::from_element(vecs[0].len(), C0);
            for (i, src) in vecs.iter().enumerate() {
                v.axpy(eig.eigenvectors[(i, e)], src, C1);
            }
            v.normalize()
        })
        .collect()
}

/// Rotate so the largest component is real and positive.
fn fix_phase(v: DVector<Complex64>) -> DVector<Complex64> {
    let mut best = C0;
    for x in v.iter() {
        if x.norm() > best.norm() + 1e-12 {
            best = *x;
        }
    }
    if best == C0 {
        return v;
    }
    let p = best.conj() / best.norm();
    v.map(|x| x * p)
}

/// Phase relating the pupil Zernike to the focal mode: FT(Z_k) = phase * psi_k.
pub fn focal_phase(idx: ZernikeIndex) -> Complex64 {
    let am = idx.m.unsigned_abs();
    let mi = Complex64::new(0.0, -1.0).powu(am);
    if ((idx.n - am) / 2) % 2 == 0 {
        mi
    } else {
        -mi
    }
}

/// C = 1 - |psi_0><psi_0|.
pub fn perfect(n_max: u32) -> CoronagraphOperator {
    let k = ZernikeIndex::count_up_to(n_max);
    let mut m = DMatrix::identity(k, k);
    m[(0, 0)] = C0;
    CoronagraphOperator { name: "perfect".into(), n_max, grid: None, matrix: m }
}

/// Real-basis coordinates of the complex mode J e^{i mu phi} of order n.
fn complex_mode(n: u32, mu: i32) -> Vec<(usize, Complex64)> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let lin = |m: i32| ZernikeIndex { n, m }.linear();
    match mu.signum() {
        0 => vec![(lin(0), C1)],
        1 => vec![(lin(mu), Complex64::new(s, 0.0)), (lin(-mu), Complex64::new(0.0, s))],
        _ => vec![(lin(-mu), Complex64::new(s, 0.0)), (lin(mu), Complex64::new(0.0, -s))],
    }
}

/// Vortex of even topological charge followed by a full-pupil Lyot stop.
///
/// In the focal plane the phase ramp sends J_{n+1}(2 pi r)/r e^{i mu phi} to
/// the same radial profile with order mu + q; the Lyot stop keeps it exactly
/// when |mu + q| <= n and removes it otherwise, since the pupil-plane image of
/// such a field vanishes inside the aperture.
pub fn vortex(n_max: u32, charge: i32) -> Result<CoronagraphOperator> {
    if charge == 0 || charge % 2 != 0 {
        return Err(Error::Domain(format!("vortex charge must be even and nonzero, got {charge}")));
    }
    let k = ZernikeIndex::count_up_to(n_max);
    let mut m = DMatrix::from_element(k, k, C0);
    for n in 0..=n_max {
        let n_i = n as i32;
        for mu in (-n_i..=n_i).step_by(2) {
            let nu = mu + charge;
            if nu.abs() > n_i {
                continue;
            }
            let out = complex_mode(n, nu);
            let inp = complex_mode(n, mu);
            for &(i, a) in &out {
                for &(j, b) in &inp {
                    m[(i, j)] += a * b.conj();
                }
            }
        }
    }
    Ok(CoronagraphOperator { name: format!("vortex{charge}"), n_max, grid: None, matrix: m })
}

const PIAA_PUPIL_NODES: usize = 256;
const PIAA_FOCAL_NODES: usize = 48;

/// PIAACMC: lossless remap U onto the prolate amplitude, pi-phase disk of the
/// prolate's radius, unit Lyot stop, inverse remap.
///
/// Pupil matrix c_jk = delta_jk - 2 <U Z_j, P U Z_k>, where P restricts the
/// focal field to the mask disk; each |m| sector is a radial quadrature.
pub fn piaacmc(n_max: u32, remap: &PiaaRemap) -> CoronagraphOperator {
    let k = ZernikeIndex::count_up_to(n_max);
    let mut m = DMatrix::identity(k, k);
    let (rho, w) = gauss_legendre_on(PIAA_PUPIL_NODES, 0.0, 1.0);
    let (rf, wf) = gauss_legendre_on(PIAA_FOCAL_NODES, 0.0, remap.mask_radius());
    let fw: Vec<f64> = rf.iter().zip(&wf).map(|(r, w)| 4.0 * PI * PI * r * w).collect();
    let amp: Vec<f64> = rho.iter().map(|&q| remap.amplitude(q)).collect();
    let rin: Vec<f64> = rho.iter().map(|&q| remap.rho_in(q)).collect();
    for l in 0..=n_max {
        let li = l as usize;
        let bess: Vec<Vec<f64>> = rf
            .iter()
            .map(|&r| rho.iter().map(|&q| bessel_j_seq(li, 2.0 * PI * r * q)[li]).collect())
            .collect();
        let ns: Vec<u32> = (l..=n_max).step_by(2).collect();
        // h[n][a] = int J_l(2 pi r_a q) (U Z_n)(q) q dq
        let h: Vec<Vec<f64>> = ns
            .iter()
            .map(|&n| {
                let g: Vec<f64> = (0..rho.len()).map(|i| w[i] * rho[i] * amp[i] * radial_unchecked(n, l, rin[i])).collect();
                bess.iter().map(|row| row.iter().zip(&g).map(|(j, g)| j * g).sum()).collect()
            })
            .collect();
        for (a, &na) in ns.iter().enumerate() {
            for (b, &nb) in ns.iter().enumerate() {
                let pab: f64 = 2.0 * h[a].iter().zip(&h[b]).zip(&fw).map(|((x, y), f)| x * y * f).sum::<f64>();
                let sign = if ((na as i32 - nb as i32) / 2) % 2 == 0 { 1.0 } else { -1.0 };
                let signs: &[i32] = if l == 0 { &[0] } else { &[1, -1] };
                for &s in signs {
                    let mm = s * l as i32;
                    let i = ZernikeIndex { n: na, m: mm }.linear();
                    let j = ZernikeIndex { n: nb, m: mm }.linear();
                    m[(i, j)] -= Complex64::new(2.0 * pab * sign, 0.0);
                }
            }
        }
    }
    CoronagraphOperator { name: "piaacmc".into(), n_max, grid: None, matrix: m }
}

/// Remap for the null-producing prolate; computed once per process.
pub fn default_remap() -> Result<&'static PiaaRemap> {
    static REMAP: std::sync::OnceLock<std::result::Result<PiaaRemap, Error>> = std::sync::OnceLock::new();
    REMAP
        .get_or_init(|| Prolate::for_null().map(PiaaRemap::new))
        .as_ref()
        .map_err(|e| e.clone())
}

/// Modal operator for a named design.
pub fn build(design: DesignKind, n_max: u32, vortex_charge: i32) -> Result<CoronagraphOperator> {
    match design {
        DesignKind::Perfect => Ok(perfect(n_max)),
        DesignKind::Vortex => vortex(n_max, vortex_charge),
        DesignKind::Piaacmc => Ok(piaacmc(n_max, default_remap()?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tip_tilt_energy(v: &[Complex64]) -> f64 {
        v[1].norm_sqr() + v[2].norm_sqr()
    }

    #[test]
    fn perfect_spectrum() {
        let d = perfect(4).decompose().unwrap();
        assert!(d.transmissions[0].norm() < 1e-15);
        assert!(d.transmissions[1..].iter().all(|t| (t.norm() - 1.0).abs() < 1e-12));
        assert!(d.gram_error() < 1e-12);
        // canonical order inside the unit cluster follows the basis
        assert!((d.modes[1][1].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vortex_structure() {
        let op = vortex(6, 2).unwrap();
        assert!((op.norm() - 1.0).abs() < 1e-12);
        let d = op.decompose().unwrap();
        let zeros = d.transmissions.iter().filter(|t| t.norm() < 1e-12).count();
        assert_eq!(zeros, 7);
        assert!(d.transmissions.iter().all(|t| t.norm() < 1e-12 || (t.norm() - 1.0).abs() < 1e-12));
        // on-axis null and half the tip-tilt energy
        assert!(op.throughput(0.0, 0.0) < 1e-30);
        let r = 1e-4;
        let p = op.throughput(r, 0.3);
        let tt = (PI * r).powi(2);
        assert!((p / tt - 0.5).abs() < 1e-3, "{}", p / tt);
        assert!((tip_tilt_energy(&d.modes[1]) - 1.0).abs() < 1e-12);
        assert!(vortex(4, 1).is_err());
    }

    #[test]
    fn piaacmc_sectors() {
        let remap = default_remap().unwrap();
        let op = piaacmc(8, remap);
        // exact on-axis null up to quadrature
        assert!(op.throughput(0.0, 0.0) < 1e-12, "{}", op.throughput(0.0, 0.0));
        assert!(op.norm() <= 1.0 + 1e-9);
        let d = op.decompose().unwrap();
        let t2: Vec<f64> = d.transmissions.iter().map(|t| t.norm_sqr()).collect();
        assert!(t2[0] < 1e-12);
        assert!((t2[1] - 0.6757).abs() < 2e-3, "{:?}", &t2[..4]);
        assert!((t2[1] - t2[2]).abs() < 1e-9);
        assert!(tip_tilt_energy(&d.modes[1]) > 0.9);
        assert!(d.gram_error() < 1e-10);
        // symmetric and real up to the focal phases
        let asym = (&op.matrix - op.matrix.transpose()).norm();
        assert!(asym < 1e-12);
    }

    #[test]
    fn focal_phases() {
        assert_eq!(focal_phase(ZernikeIndex { n: 0, m: 0 }), C1);
        assert_eq!(focal_phase(ZernikeIndex { n: 1, m: 1 }), Complex64::new(0.0, -1.0));
        assert_eq!(focal_phase(ZernikeIndex { n: 2, m: 0 }), -C1);
        assert_eq!(focal_phase(ZernikeIndex { n: 3, m: -1 }), Complex64::new(0.0, 1.0));
    }

    #[test]
    fn json_round_trip() {
        let op = vortex(3, 2).unwrap();
        let text = op.to_json().unwrap();
        let (back, d) = CoronagraphOperator::from_json(&text).unwrap();
        assert_eq!(back.matrix, op.matrix);
        assert_eq!(d.truncation(), 10);
        assert!(CoronagraphOperator::from_json("{}").is_err());
    }
}
