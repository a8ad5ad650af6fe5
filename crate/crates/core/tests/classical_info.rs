use std::f64::consts::PI;

use exolimits::classical_info::*;
use exolimits::coronagraph::{self, DesignKind};
use exolimits::coronagraph::grid::PropagatorPlan;
use exolimits::modebasis::{one_minus_gamma0_sq, FourierZernikeBasis};
use exolimits::optics::{sigma_to_r, GridSpec, Scene};
use exolimits::quantum_bounds::{qce, qfim_high_contrast, qfim_polar};
use proptest::prelude::*;

const B: f64 = 1e-9;

fn scene(rs: f64, b: f64) -> Scene {
    Scene::new(sigma_to_r(rs), PI / 4.0, b).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn direct(design: DesignKind, s: &Scene) -> [[f64; 2]; 2] {
    let op = coronagraph::build(design, n_max_for_radius(s.r_delta), 2).unwrap();
    cfim_direct_imaging(&op, s, &ImagingQuadrature::default()).unwrap().entries
}

#[test]
fn binary_sorter_saturates_qce() {
    let s = scene(0.5, B);
    assert!(rel(cce_spade_binary(&s), qce(&s)) < 1e-6);
    assert_eq!(cce_spade_binary(&Scene::new(0.0, 0.0, B).unwrap()), 0.0);
    // with b -> 0 the complement outcome is impossible under H0 but the
    // exponent stays finite
    let s = scene(0.2, 1e-12);
    assert!(cce_spade_binary(&s).is_finite());
}

#[test]
fn coronagraph_exponents() {
    let pc = coronagraph::perfect(20);
    let s = scene(0.3, B);
    let xi = cce_coronagraph(&pc, &s).unwrap();
    assert!(rel(xi / B, one_minus_gamma0_sq(s.r_delta)) < 1e-4);
    assert!(rel(xi, qce(&s)) < 1e-4);
    assert_eq!(cce_coronagraph(&pc, &Scene::new(0.0, 0.0, B).unwrap()).unwrap(), 0.0);

    // the vortex gives up at most about a factor 2 at small separation
    let vc = coronagraph::vortex(20, 2).unwrap();
    let best = (1..=50)
        .map(|i| {
            let s = scene(0.01 * i as f64, B);
            qce(&s) / cce_coronagraph(&vc, &s).unwrap()
        })
        .fold(0.0, f64::max);
    assert!((1.5..=2.5).contains(&best), "{best}");

    // an operator that passes the on-axis PSF is rejected
    let id = coronagraph::CoronagraphOperator::from_matrix(
        "identity",
        4,
        nalgebra::DMatrix::identity(15, 15),
    )
    .unwrap();
    assert!(cce_coronagraph(&id, &s).is_err());
}

#[test]
fn coronagraph_high_contrast_form() {
    let s = scene(0.4, B);
    for d in [DesignKind::Perfect, DesignKind::Piaacmc, DesignKind::Vortex] {
        let op = coronagraph::build(d, 20, 2).unwrap();
        let full = cce_coronagraph(&op, &s).unwrap();
        let hc = cce_coronagraph_high_contrast(&op, s.r_delta, B).unwrap();
        assert!(rel(full, hc) < 1e-3, "{d:?} {full} {hc}");
    }
}

#[test]
fn spade_saturates_qfim() {
    let basis = FourierZernikeBasis::new(60);
    for rs in [0.05, 0.2, 0.5] {
        let s = scene(rs, B);
        let c = cfim_spade(&basis, &s).unwrap();
        let q = qfim_high_contrast(s.r_delta, B);
        assert!(rel(c.entries[0][0], q.entries[0][0]) < 1e-2, "{rs}: {:?} {:?}", c.entries, q.entries);
        assert!(rel(c.entries[1][1], q.entries[1][1]) < 1e-2, "{rs}: {:?} {:?}", c.entries, q.entries);
        assert!(c.entries[0][1].abs() < 1e-9 * c.trace());
    }
    // radial saturation out to 1 sigma
    for rs in [0.75, 1.0] {
        let s = scene(rs, B);
        let c = cfim_spade(&basis, &s).unwrap();
        let q = qfim_polar(&s).unwrap();
        assert!(rel(c.entries[0][0], q.entries[0][0]) < 1e-2, "{rs}");
    }
}

#[test]
fn spade_axis_policy() {
    let s = Scene::new(sigma_to_r(0.3), 0.0, B).unwrap();
    assert!(cfim_spade(&FourierZernikeBasis::new(20), &s).is_err());
    let c = cfim_spade_auto(40, &s).unwrap();
    let q = qfim_high_contrast(s.r_delta, B);
    assert!(rel(c.entries[1][1], q.entries[1][1]) < 1e-2);
}

#[test]
fn fundamental_mode_information_scales_as_b_squared() {
    let basis = FourierZernikeBasis::new(20);
    let i0 = |b: f64| {
        let m = mode_information(&basis, &scene(0.3, b)).unwrap();
        m[0].entries[0][0]
    };
    let k = i0(1e-4) / i0(1e-5);
    assert!((k - 100.0).abs() < 1.0, "{k}");
}

#[test]
fn radial_information_moves_outward() {
    let basis = FourierZernikeBasis::new(40);
    let groups = |rs: f64| group_information(&mode_information(&basis, &scene(rs, B)).unwrap());
    let g = groups(0.2);
    let total: f64 = g.iter().map(|x| x[0]).sum();
    assert!(g[1][0] > 0.5 * total, "{:?}", &g[..4]);
    let argmax = |g: &[[f64; 2]]| (0..g.len()).max_by(|&a, &b| g[a][0].total_cmp(&g[b][0])).unwrap();
    let peaks: Vec<usize> = [0.2, 1.0, 2.0].iter().map(|&rs| argmax(&groups(rs))).collect();
    assert!(peaks.windows(2).all(|w| w[0] <= w[1]), "{peaks:?}");
}

#[test]
fn leakage_ratio() {
    let r = sigma_to_r(0.5);
    assert!(brightness_leakage_ratio(r, 1e-9).unwrap() < 1e-8);
    let k = brightness_leakage_ratio(r, 1e-4).unwrap() / brightness_leakage_ratio(r, 1e-5).unwrap();
    assert!((k - 10.0).abs() < 1e-2);
    assert!(brightness_leakage_ratio(r, 1e-300).unwrap() < 1e-290);
}

#[test]
fn perfect_imaging_approaches_qfim() {
    let s = scene(0.1, B);
    let c = direct(DesignKind::Perfect, &s);
    let q = qfim_high_contrast(s.r_delta, B);
    eprintln!("perfect {c:?} {:?}", q.entries);
    assert!(rel(c[0][0], q.entries[0][0]) < 0.02);
    assert!(rel(c[1][1], q.entries[1][1]) < 0.02);
}

#[test]
fn vortex_loses_angular_information() {
    let s = scene(0.1, B);
    let c = direct(DesignKind::Vortex, &s);
    let q = qfim_high_contrast(s.r_delta, B);
    let ratio = q.entries[1][1] / c[1][1];
    eprintln!("vortex {c:?} ratio {ratio}");
    assert!((50.0..=200.0).contains(&ratio), "{ratio}");
}

#[test]
fn systems_converge_beyond_diffraction() {
    let s = scene(3.0, B);
    let q = qfim_polar(&s).unwrap();
    for d in [DesignKind::Perfect, DesignKind::Piaacmc, DesignKind::Vortex] {
        let c = direct(d, &s);
        eprintln!("{d:?} {c:?} {:?}", q.entries);
        assert!(rel(c[0][0], q.entries[0][0]) < 0.2, "{d:?}");
    }
}

#[test]
fn ordering_and_dominance() {
    for rs in [0.1, 0.3, 0.5] {
        let s = scene(rs, B);
        let q = qfim_polar(&s).unwrap();
        let [pc, pi, vc] = [DesignKind::Perfect, DesignKind::Piaacmc, DesignKind::Vortex].map(|d| direct(d, &s));
        for i in 0..2 {
            assert!(pc[i][i] >= pi[i][i] && pi[i][i] >= vc[i][i], "{rs} {i}: {pc:?} {pi:?} {vc:?}");
        }
        for m in [pc, pi, vc] {
            let f = exolimits::quantum_bounds::FisherMatrix::new(m, q.kind.clone(), s);
            assert!(f.dominated_by(&q, 1e-9), "{rs}: {m:?} {:?}", q.entries);
        }
    }
}

#[test]
fn conjectured_bound_is_reported() {
    let s = scene(0.3, B);
    let op = coronagraph::build(DesignKind::Piaacmc, n_max_for_radius(s.r_delta), 2).unwrap();
    let c = cfim_direct_imaging(&op, &s, &ImagingQuadrature::default()).unwrap();
    let j = conjectured_imaging_bound(&op, &s).unwrap();
    eprintln!("piaacmc {:?} conjectured {:?}", c.entries, j.entries);
    assert!(j.is_psd());
}

#[test]
fn grid_route_agrees_with_modal_route() {
    let s = scene(0.5, B);
    let plan = PropagatorPlan::perfect(GridSpec::new(512, 32.0).unwrap());
    let g = cfim_direct_imaging_grid(&plan, &s, &GridImagingOptions::default()).unwrap();
    let half = cfim_direct_imaging_grid(&plan, &s, &GridImagingOptions { step: 5e-5, ..Default::default() }).unwrap();
    let m = direct(DesignKind::Perfect, &s);
    eprintln!("grid {:?} half-step {:?} modal {m:?}", g.entries, half.entries);
    for i in 0..2 {
        assert!(rel(g.entries[i][i], half.entries[i][i]) < 1e-4);
        assert!(rel(g.entries[i][i], m[i][i]) < 0.05, "{i}");
    }
}

#[test]
fn curves_respect_bounds() {
    let params: Vec<(f64, f64)> = [0.1, 0.4, 0.8].iter().flat_map(|&r| [(r, 1e-9), (r, 1e-3), (r, 0.3)]).collect();
    let bound = InformationCurve::build("quantum_bound", &params, None, |s| Ok(CurveValue::Exponent(qce(s)))).unwrap();
    let spade =
        InformationCurve::build("spade", &params, None, |s| Ok(CurveValue::Exponent(cce_spade_binary(s)))).unwrap();
    let vc = coronagraph::vortex(20, 2).unwrap();
    let vortex = InformationCurve::build("vortex", &params, Some(20), |s| {
        Ok(CurveValue::Exponent(cce_coronagraph(&vc, s)?))
    })
    .unwrap();
    assert!(spade.dominated_by(&bound, 1e-9));
    assert!(vortex.dominated_by(&bound, 1e-9));
    assert!(!bound.dominated_by(&vortex, 1e-9));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exponents_never_beat_qce(rs in 0.01f64..2.0, lb in -9.0f64..-0.5, design in 0usize..3) {
        let s = Scene::new(sigma_to_r(rs), 0.7, 10f64.powf(lb)).unwrap();
        let q = qce(&s);
        prop_assert!(cce_spade_binary(&s) <= q * (1.0 + 1e-9));
        let d = [DesignKind::Perfect, DesignKind::Piaacmc, DesignKind::Vortex][design];
        let op = coronagraph::build(d, 16, 2).unwrap();
        prop_assert!(cce_coronagraph(&op, &s).unwrap() <= q * (1.0 + 1e-9));
    }

    #[test]
    fn spade_cfim_is_dominated(rs in 0.01f64..1.5, lb in -9.0f64..-0.5, phi in 0.1f64..1.4) {
        let s = Scene::new(sigma_to_r(rs), phi, 10f64.powf(lb)).unwrap();
        let c = cfim_spade(&FourierZernikeBasis::new(30), &s).unwrap();
        prop_assert!(c.is_psd());
        prop_assert!(c.dominated_by(&qfim_polar(&s).unwrap(), 1e-9));
    }
}
