use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use exolimits::classical_info::{
    cce_coronagraph, cce_spade_binary, cfim_direct_imaging, cfim_spade_auto, group_information, mode_information,
    n_max_for_radius, ImagingQuadrature,
};
use exolimits::coronagraph::grid::{coronagraph_grid, extract_operator, PropagatorPlan};
use exolimits::coronagraph::image::{mode_image, output_state_image, ImageSource, Raster};
use exolimits::coronagraph::{self, CoronagraphOperator, DesignKind};
use exolimits::estimation::{run_trials, spiral, summarize, MonteCarloConfig, TrialResult, RNG_NAME};
use exolimits::modebasis::{basis_for, FourierZernikeBasis};
use exolimits::optics::{sigma_to_r, Scene, TelescopePrescription};
use exolimits::quantum_bounds::{photon_map, qce, qfim_polar, FisherMatrix, MapTarget};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{write_csv, write_csv_records, RunManifest};
use crate::tables::{detection_table, localization_table, Table};
use crate::{parse_grid, BoundsArgs, BoundsTarget, CliError, CoronagraphArgs, CoronagraphOutput, MontecarloArgs, Route, TablesArgs};

pub struct Context {
    pub out_dir: PathBuf,
    pub config: Option<PathBuf>,
    pub presc: TelescopePrescription,
}

impl Context {
    fn manifest(&self, command: &str, args: &impl Serialize) -> RunManifest {
        let params = match serde_json::to_value(args) {
            Ok(serde_json::Value::Object(m)) => m.into_iter().collect(),
            _ => BTreeMap::new(),
        };
        let mut m = RunManifest::new(command, self.config.clone(), params);
        m.parameters.insert("photon_flux_hz".into(), self.presc.photon_flux_hz.into());
        m
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

fn known_system(s: &str) -> Result<(), CliError> {
    match s {
        "quantum_bound" | "spade" | "perfect" | "piaacmc" | "vortex" => Ok(()),
        _ => Err(CliError::Usage(format!("unknown system `{s}`"))),
    }
}

fn design_of(system: &str) -> Option<DesignKind> {
    match system {
        "perfect" | "piaacmc" | "vortex" => system.parse().ok(),
        _ => None,
    }
}

#[derive(Serialize)]
struct CurveRow {
    system: String,
    r_delta_over_sigma: f64,
    b: f64,
    value: f64,
    truncation: Option<u32>,
}

#[derive(Serialize)]
struct FisherRow {
    system: String,
    r_delta_over_sigma: f64,
    b: f64,
    k_rr: f64,
    k_rphi: f64,
    k_phiphi: f64,
    truncation: Option<u32>,
}

#[derive(Serialize)]
struct ModeInfoRow {
    r_delta_over_sigma: f64,
    b: f64,
    n: usize,
    radial: f64,
    angular: f64,
    truncation: u32,
}

fn cells(args: &BoundsArgs) -> Result<Vec<(f64, f64)>, CliError> {
    let rs = parse_grid(&args.r_delta_over_sigma)?;
    let bs = parse_grid(&args.contrast_b)?;
    if rs.iter().any(|&r| r < 0.0) || bs.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
        return Err(CliError::Usage("separations must be >= 0 and contrasts in (0,1)".into()));
    }
    Ok(bs.iter().flat_map(|&b| rs.iter().map(move |&r| (r, b))).collect())
}

fn trunc(args: &BoundsArgs, r: f64, spade_default: u32) -> u32 {
    if args.n_max > 0 {
        args.n_max
    } else if spade_default > 0 {
        spade_default
    } else {
        n_max_for_radius(r)
    }
}

pub fn bounds(ctx: &Context, args: &BoundsArgs) -> Result<RunManifest, CliError> {
    let mut m = ctx.manifest("bounds", args);
    for s in &args.systems {
        known_system(s)?;
    }
    let grid = cells(args)?;
    match args.target {
        BoundsTarget::Qce => {
            let ops = coronagraph_ops(&args.systems, if args.n_max > 0 { args.n_max } else { 20 })?;
            let mut rows = Vec::new();
            for sys in &args.systems {
                let part = grid
                    .par_iter()
                    .map(|&(rs, b)| {
                        let s = Scene::new(sigma_to_r(rs), args.phi_delta, b)?;
                        let (v, t) = match (sys.as_str(), ops.get(sys)) {
                            ("quantum_bound", _) => (qce(&s), None),
                            ("spade", _) => (cce_spade_binary(&s), None),
                            (_, Some(op)) => (cce_coronagraph(op, &s)?, Some(op.n_max)),
                            _ => unreachable!(),
                        };
                        Ok(CurveRow { system: sys.clone(), r_delta_over_sigma: rs, b, value: v, truncation: t })
                    })
                    .collect::<exolimits::Result<Vec<_>>>()?;
                rows.extend(part);
            }
            let p = ctx.path("bounds_qce.csv");
            write_csv(&p, None, &rows)?;
            m.outputs.push(p);
        }
        BoundsTarget::Qfim => {
            let mut rows = Vec::new();
            for sys in &args.systems {
                let part = grid
                    .par_iter()
                    .map(|&(rs, b)| {
                        let s = Scene::new(sigma_to_r(rs), args.phi_delta, b)?;
                        let (k, t): (FisherMatrix, Option<u32>) = match sys.as_str() {
                            "quantum_bound" => (qfim_polar(&s)?, None),
                            "spade" => {
                                let n = trunc(args, s.r_delta, 60);
                                (cfim_spade_auto(n, &s)?, Some(n))
                            }
                            other => {
                                let n = trunc(args, s.r_delta, 0);
                                let op = coronagraph::build(design_of(other).unwrap(), n, 2)?;
                                (cfim_direct_imaging(&op, &s, &ImagingQuadrature::default())?, Some(n))
                            }
                        };
                        Ok(FisherRow {
                            system: sys.clone(),
                            r_delta_over_sigma: rs,
                            b,
                            k_rr: k.entries[0][0],
                            k_rphi: k.entries[0][1],
                            k_phiphi: k.entries[1][1],
                            truncation: t,
                        })
                    })
                    .collect::<exolimits::Result<Vec<_>>>()?;
                rows.extend(part);
            }
            let p = ctx.path("bounds_qfim.csv");
            write_csv(&p, None, &rows)?;
            m.outputs.push(p);
        }
        BoundsTarget::BudgetMap => {
            let rs = parse_grid(&args.r_delta_over_sigma)?;
            let bs = parse_grid(&args.contrast_b)?;
            let target = match args.rel_loc_error {
                Some(e) => MapTarget::Localization { rel_error_ppm: ppm(e)? },
                None => MapTarget::Detection { target_error_ppm: ppm(args.pe_target)? },
            };
            let map = photon_map(&rs, &bs, target, &ctx.presc)?;
            let p = ctx.path("bounds_budget_map.csv");
            write_csv(&p, None, &map)?;
            m.outputs.push(p);
        }
        BoundsTarget::ModeInfo => {
            let n = if args.n_max > 0 { args.n_max } else { 40 };
            let mut rows = Vec::new();
            for &(rs, b) in &grid {
                let s = Scene::new(sigma_to_r(rs), args.phi_delta, b)?;
                let g = group_information(&mode_information(&basis_for(n, &s), &s)?);
                for (k, v) in g.iter().enumerate() {
                    rows.push(ModeInfoRow { r_delta_over_sigma: rs, b, n: k, radial: v[0], angular: v[1], truncation: n });
                }
            }
            let p = ctx.path("bounds_mode_info.csv");
            write_csv(&p, None, &rows)?;
            m.outputs.push(p);
        }
    }
    Ok(m)
}

fn ppm(x: f64) -> Result<u32, CliError> {
    if !(x > 0.0 && x < 1.0e3) {
        return Err(CliError::Usage(format!("target {x} out of range")));
    }
    Ok((x * 1e6).round() as u32)
}

fn coronagraph_ops(systems: &[String], n_max: u32) -> Result<BTreeMap<String, CoronagraphOperator>, CliError> {
    let mut ops = BTreeMap::new();
    for s in systems {
        if let Some(d) = design_of(s) {
            ops.insert(s.clone(), coronagraph::build(d, n_max, 2)?);
        }
    }
    Ok(ops)
}

fn write_table(ctx: &Context, t: &Table, m: &mut RunManifest) -> Result<(), CliError> {
    let mut header = vec!["system".to_string()];
    header.extend(t.columns.iter().map(|c| format!("{}={c}", t.column_label)));
    let rows: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|r| std::iter::once(r.system.clone()).chain(r.seconds.iter().map(|v| v.to_string())).collect())
        .collect();
    let p = ctx.path(&format!("table{}.csv", t.number));
    write_csv_records(&p, None, &header, &rows)?;
    m.outputs.push(p);
    println!("Table {} (seconds, r_delta/sigma = 0.1, b = 1e-9)\n{}", t.number, t.render());
    Ok(())
}

pub fn tables(ctx: &Context, args: &TablesArgs) -> Result<RunManifest, CliError> {
    let mut m = ctx.manifest("tables", args);
    let which: Vec<u32> = match args.table {
        Some(t @ (2 | 3)) => vec![t],
        Some(t) => return Err(CliError::Usage(format!("no table {t}; choose 2 or 3"))),
        None => vec![2, 3],
    };
    for t in which {
        let table = if t == 2 {
            detection_table(&ctx.presc, args.n_max.unwrap_or(20))?
        } else {
            localization_table(&ctx.presc, args.n_max)?
        };
        write_table(ctx, &table, &mut m)?;
    }
    Ok(m)
}

#[derive(Serialize)]
struct ImageSummary {
    design: String,
    route: String,
    r_delta_over_sigma: f64,
    b: f64,
    pixels: usize,
    half_width: f64,
    total: f64,
    peak: f64,
    maxima: usize,
}

#[derive(Serialize)]
struct SpectrumRow {
    index: usize,
    tau_re: f64,
    tau_im: f64,
    transmission: f64,
}

#[derive(Serialize)]
struct ThroughputRow {
    r_delta_over_sigma: f64,
    throughput: f64,
}

fn write_raster(path: &Path, r: &Raster) -> Result<(), CliError> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    r.write_to(&mut BufWriter::new(f)).map_err(|e| CliError::io(path, e))
}

pub fn coronagraph(ctx: &Context, args: &CoronagraphArgs) -> Result<RunManifest, CliError> {
    let mut m = ctx.manifest("coronagraph", args);
    let design: DesignKind = args.design.parse().map_err(|_| CliError::Usage(format!("unknown design `{}`", args.design)))?;
    let name = format!("{design:?}").to_lowercase();
    if !(args.contrast_b > 0.0 && args.contrast_b < 1.0) || args.r_delta_over_sigma < 0.0 {
        return Err(CliError::Usage("need r_delta >= 0 and b in (0,1)".into()));
    }
    let plan = match args.route {
        Route::Grid => Some(PropagatorPlan::for_design(design, coronagraph_grid(design), args.vortex_charge)?),
        Route::Modal => None,
    };
    let op = || -> Result<CoronagraphOperator, CliError> {
        Ok(match &plan {
            Some(p) => extract_operator(p, &FourierZernikeBasis::new(args.n_max))?,
            None => coronagraph::build(design, args.n_max, args.vortex_charge)?,
        })
    };
    match args.output {
        CoronagraphOutput::Image => {
            let scene = Scene::new(sigma_to_r(args.r_delta_over_sigma), args.phi_delta, args.contrast_b)?;
            let modal;
            let src = match &plan {
                Some(p) => ImageSource::Grid(p),
                None => {
                    modal = op()?;
                    ImageSource::Modal(&modal)
                }
            };
            let img = output_state_image(src, &scene, args.pixels, args.half_width)?;
            let p = ctx.path(&format!("coronagraph_{name}_image.raw"));
            write_raster(&p, &img)?;
            m.outputs.push(p);
            let summary = ImageSummary {
                design: name.clone(),
                route: format!("{:?}", args.route).to_lowercase(),
                r_delta_over_sigma: args.r_delta_over_sigma,
                b: args.contrast_b,
                pixels: img.n,
                half_width: img.half_width,
                total: img.total(),
                peak: img.peak(),
                maxima: if img.peak() > 0.0 { img.local_maxima(0.1).len() } else { 0 },
            };
            let p = ctx.path(&format!("coronagraph_{name}_image.csv"));
            write_csv(&p, None, &[summary])?;
            m.outputs.push(p);
        }
        CoronagraphOutput::Eigenmodes => {
            let op = op()?;
            let d = op.decompose()?;
            let rows: Vec<SpectrumRow> = d
                .transmissions
                .iter()
                .enumerate()
                .map(|(i, t)| SpectrumRow { index: i, tau_re: t.re, tau_im: t.im, transmission: t.norm_sqr() })
                .collect();
            let p = ctx.path(&format!("coronagraph_{name}_spectrum.csv"));
            write_csv(&p, None, &rows)?;
            m.outputs.push(p);
            let p = ctx.path(&format!("coronagraph_{name}_operator.json"));
            std::fs::write(&p, op.to_json()?).map_err(|e| CliError::io(&p, e))?;
            m.outputs.push(p);
            for (k, mode) in d.modes.iter().take(args.modes).enumerate() {
                let img = mode_image(op.n_max, mode, args.pixels, args.half_width);
                let p = ctx.path(&format!("coronagraph_{name}_mode{k:03}.raw"));
                write_raster(&p, &img)?;
                m.outputs.push(p);
            }
        }
        CoronagraphOutput::Throughput => {
            let seps = parse_grid(&args.separations)?;
            let rows: Vec<ThroughputRow> = match &plan {
                Some(p) => seps
                    .iter()
                    .map(|&x| {
                        let s = sigma_to_r(x);
                        let f = exolimits::optics::tilted_pupil_field(p.grid, [s * args.phi_delta.cos(), s * args.phi_delta.sin()]);
                        Ok(ThroughputRow { r_delta_over_sigma: x, throughput: p.apply(&f)?.norm_sqr() })
                    })
                    .collect::<exolimits::Result<Vec<_>>>()?,
                None => {
                    let op = op()?;
                    seps.iter()
                        .map(|&x| ThroughputRow { r_delta_over_sigma: x, throughput: op.throughput(sigma_to_r(x), args.phi_delta) })
                        .collect()
                }
            };
            let p = ctx.path(&format!("coronagraph_{name}_throughput.csv"));
            write_csv(&p, None, &rows)?;
            m.outputs.push(p);
        }
    }
    Ok(m)
}

#[derive(Serialize)]
struct TrialRow {
    cluster: usize,
    trial: usize,
    seed: u64,
    truth_r: f64,
    truth_phi: f64,
    est_r: f64,
    est_phi: f64,
    loglik: f64,
    converged: bool,
    n_photons: u64,
}

impl TrialRow {
    fn new(cluster: usize, t: TrialResult) -> Self {
        Self {
            cluster,
            trial: t.trial,
            seed: t.seed,
            truth_r: t.truth_r,
            truth_phi: t.truth_phi,
            est_r: t.est_r,
            est_phi: t.est_phi,
            loglik: t.loglik,
            converged: t.converged,
            n_photons: t.n_photons,
        }
    }
}

#[derive(Serialize)]
struct SummaryRow {
    cluster: usize,
    truth_r_over_sigma: f64,
    truth_phi: f64,
    trials: usize,
    patch: f64,
    sigma_loc: f64,
    ratio: f64,
    bias_in_stderr: f64,
    converged_fraction: f64,
}

pub fn montecarlo(ctx: &Context, args: &MontecarloArgs) -> Result<RunManifest, CliError> {
    let mut m = ctx.manifest("montecarlo", args);
    m.seed = Some(args.seed);
    m.rng = Some(RNG_NAME.into());
    if args.trials == 0 {
        return Err(CliError::Usage("trials must be at least 1".into()));
    }
    let truths = match args.spiral {
        Some(k) => spiral(k, args.spiral_min, args.spiral_max, args.spiral_turns, args.contrast_b)?,
        None => vec![Scene::new(sigma_to_r(args.r_delta_over_sigma), args.phi_delta, args.contrast_b)?],
    };
    let mut trials = Vec::new();
    let mut summary = Vec::new();
    for (c, scene) in truths.iter().enumerate() {
        let cfg = MonteCarloConfig {
            scene: *scene,
            n_max: args.n_max,
            mean_photons: args.photons,
            trials: args.trials,
            // clusters draw from disjoint seed families
            seed: args.seed.wrapping_add(c as u64),
            b_mismatch: args.b_mismatch,
        };
        let res = run_trials(&cfg)?;
        if res.len() >= 30 {
            let s = summarize(&cfg, &res)?;
            println!(
                "cluster {c}: r/sigma = {:.3}, phi = {:.3}, patch/sigma_loc = {:.3}, bias = {:.2} SE",
                scene.r_delta / exolimits::optics::SIGMA_AIRY,
                scene.phi_delta,
                s.ratio,
                s.bias_in_stderr()
            );
            summary.push(SummaryRow {
                cluster: c,
                truth_r_over_sigma: scene.r_delta / exolimits::optics::SIGMA_AIRY,
                truth_phi: scene.phi_delta,
                trials: s.trials,
                patch: s.patch,
                sigma_loc: s.sigma_loc,
                ratio: s.ratio,
                bias_in_stderr: s.bias_in_stderr(),
                converged_fraction: s.converged_fraction,
            });
        }
        trials.extend(res.into_iter().map(|t| TrialRow::new(c, t)));
    }
    let p = ctx.path("montecarlo_trials.csv");
    write_csv(&p, Some(args.seed), &trials)?;
    m.outputs.push(p);
    if !summary.is_empty() {
        let p = ctx.path("montecarlo_summary.csv");
        write_csv(&p, Some(args.seed), &summary)?;
        m.outputs.push(p);
    }
    Ok(m)
}
