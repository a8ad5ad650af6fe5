//! Browser bindings: bound summaries, coronagraph throughput curves and
//! simulated coronagraph images.

use std::f64::consts::PI;

use exolimits::classical_info::{cce_coronagraph, cce_spade_binary};
use exolimits::coronagraph::image::{output_state_image, ImageSource};
use exolimits::coronagraph::{self, DesignKind};
use exolimits::optics::{sigma_to_r, Scene, TelescopePrescription};
use exolimits::quantum_bounds::{budget_from_exponent, photons_for_localization, qce, qfim_polar};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Operator truncation used by every call here.
pub const N_MAX: u32 = 16;

#[derive(Debug, Serialize)]
pub struct BoundSummary {
    pub qce: f64,
    pub spade_binary: f64,
    pub perfect: f64,
    pub piaacmc: f64,
    pub vortex: f64,
    pub k_rr: f64,
    pub k_phiphi: f64,
    /// Seconds to P_e = 1e-3 at the default photon flux, quantum limit.
    pub detection_seconds: f64,
    /// Seconds to sigma_loc / r_delta = 0.1, quantum limit.
    pub localization_seconds: f64,
}

fn err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn design(name: &str) -> exolimits::Result<DesignKind> {
    name.parse()
}

pub fn bound_summary(r_over_sigma: f64, b: f64) -> exolimits::Result<BoundSummary> {
    let scene = Scene::new(sigma_to_r(r_over_sigma), PI / 4.0, b)?;
    let flux = TelescopePrescription::default().photon_flux_hz;
    let cce = |d| cce_coronagraph(&coronagraph::build(d, N_MAX, 2)?, &scene);
    let k = qfim_polar(&scene)?;
    let xi = qce(&scene);
    Ok(BoundSummary {
        qce: xi,
        spade_binary: cce_spade_binary(&scene),
        perfect: cce(DesignKind::Perfect)?,
        piaacmc: cce(DesignKind::Piaacmc)?,
        vortex: cce(DesignKind::Vortex)?,
        k_rr: k.entries[0][0],
        k_phiphi: k.entries[1][1],
        detection_seconds: budget_from_exponent(xi, 1e-3, flux)?.exposure_seconds,
        localization_seconds: photons_for_localization(&k, 0.1)? / flux,
    })
}

/// Off-axis throughput at `count` separations spread over [0, max] sigma.
pub fn throughput(design_name: &str, max_over_sigma: f64, count: usize) -> exolimits::Result<Vec<f64>> {
    let op = coronagraph::build(design(design_name)?, N_MAX, 2)?;
    Ok((0..count)
        .map(|i| {
            let x = max_over_sigma * i as f64 / (count.max(2) - 1) as f64;
            op.throughput(sigma_to_r(x), 0.0)
        })
        .collect())
}

/// Detected intensity for a star plus companion, normalized to its peak.
pub fn image(design_name: &str, r_over_sigma: f64, phi: f64, b: f64, pixels: usize) -> exolimits::Result<Vec<f32>> {
    let op = coronagraph::build(design(design_name)?, N_MAX, 2)?;
    let scene = Scene::new(sigma_to_r(r_over_sigma), phi, b)?;
    let raster = output_state_image(ImageSource::Modal(&op), &scene, pixels, 2.0)?;
    let peak = raster.peak();
    Ok(raster.data.iter().map(|&v| if peak > 0.0 { (v / peak) as f32 } else { 0.0 }).collect())
}

#[wasm_bindgen(js_name = boundSummary)]
pub fn bound_summary_js(r_over_sigma: f64, b: f64) -> Result<String, JsValue> {
    let s = bound_summary(r_over_sigma, b).map_err(err)?;
    serde_json::to_string(&s).map_err(err)
}

#[wasm_bindgen(js_name = throughputCurve)]
pub fn throughput_js(design_name: &str, max_over_sigma: f64, count: usize) -> Result<Vec<f64>, JsValue> {
    throughput(design_name, max_over_sigma, count).map_err(err)
}

#[wasm_bindgen(js_name = coronagraphImage)]
pub fn image_js(design_name: &str, r_over_sigma: f64, phi: f64, b: f64, pixels: usize) -> Result<Vec<f32>, JsValue> {
    image(design_name, r_over_sigma, phi, b, pixels).map_err(err)
}
