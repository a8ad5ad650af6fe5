//! Integration-time tables at r_delta = 0.1 sigma, b = 1e-9.

use std::f64::consts::PI;

use exolimits::classical_info::{
    cce_coronagraph, cce_spade_binary, cfim_direct_imaging, cfim_spade_auto, n_max_for_radius, ImagingQuadrature,
};
use exolimits::coronagraph::{self, DesignKind};
use exolimits::optics::{sigma_to_r, Scene, TelescopePrescription};
use exolimits::quantum_bounds::{budget_from_exponent, photons_for_localization, qce, qfim_polar, FisherMatrix};
use exolimits::Result;
use serde::Serialize;

pub const TABLE_R_OVER_SIGMA: f64 = 0.1;
pub const TABLE_B: f64 = 1e-9;
pub const DETECTION_ERRORS: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];
pub const LOCALIZATION_ERRORS: [f64; 4] = [1.0, 0.5, 0.1, 0.01];
pub const SYSTEMS: [&str; 5] = ["quantum_bound", "spade", "perfect", "piaacmc", "vortex"];
/// SPADE truncation used for localization rows.
pub const SPADE_N_MAX: u32 = 60;

#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub system: String,
    pub seconds: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Table {
    pub number: u32,
    pub column_label: String,
    pub columns: Vec<f64>,
    pub rows: Vec<TableRow>,
}

impl Table {
    pub fn row(&self, system: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.system == system)
    }

    pub fn render(&self) -> String {
        let mut s = format!("{:<16}", "system");
        for c in &self.columns {
            s += &format!("{:>14}", format!("{}={c}", self.column_label));
        }
        s.push('\n');
        for r in &self.rows {
            s += &format!("{:<16}", r.system);
            for v in &r.seconds {
                s += &format!("{:>14.0}", v);
            }
            s.push('\n');
        }
        s
    }
}

pub fn table_scene() -> Scene {
    Scene::new(sigma_to_r(TABLE_R_OVER_SIGMA), PI / 4.0, TABLE_B).expect("valid table scene")
}

fn design(system: &str) -> Option<DesignKind> {
    system.parse().ok().filter(|_| system != "spade" && system != "quantum_bound")
}

/// Detection times for the error targets; coronagraph operators truncated at `n_max`.
pub fn detection_table(presc: &TelescopePrescription, n_max: u32) -> Result<Table> {
    let scene = table_scene();
    let rows = SYSTEMS
        .iter()
        .map(|&sys| {
            let xi = match design(sys) {
                Some(d) => cce_coronagraph(&coronagraph::build(d, n_max, 2)?, &scene)?,
                None if sys == "spade" => cce_spade_binary(&scene),
                None => qce(&scene),
            };
            let seconds = DETECTION_ERRORS
                .iter()
                .map(|&pe| Ok(budget_from_exponent(xi, pe, presc.photon_flux_hz)?.exposure_seconds))
                .collect::<Result<Vec<_>>>()?;
            Ok(TableRow { system: sys.into(), seconds })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table { number: 2, column_label: "P_e".into(), columns: DETECTION_ERRORS.to_vec(), rows })
}

/// Fisher matrix behind each localization row.
pub fn localization_fisher(system: &str, scene: &Scene, n_max: Option<u32>) -> Result<FisherMatrix> {
    match design(system) {
        Some(d) => {
            let op = coronagraph::build(d, n_max.unwrap_or_else(|| n_max_for_radius(scene.r_delta)), 2)?;
            cfim_direct_imaging(&op, scene, &ImagingQuadrature::default())
        }
        None if system == "spade" => cfim_spade_auto(SPADE_N_MAX, scene),
        None => qfim_polar(scene),
    }
}

/// Localization times for the relative-error targets. Coronagraph rows use
/// direct imaging; `n_max` overrides the separation-based truncation.
pub fn localization_table(presc: &TelescopePrescription, n_max: Option<u32>) -> Result<Table> {
    let scene = table_scene();
    let rows = SYSTEMS
        .iter()
        .map(|&sys| {
            let k = localization_fisher(sys, &scene, n_max)?;
            let seconds = LOCALIZATION_ERRORS
                .iter()
                .map(|&e| Ok(photons_for_localization(&k, e)? / presc.photon_flux_hz))
                .collect::<Result<Vec<_>>>()?;
            Ok(TableRow { system: sys.into(), seconds })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table { number: 3, column_label: "loc".into(), columns: LOCALIZATION_ERRORS.to_vec(), rows })
}
