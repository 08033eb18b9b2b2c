//! Configuration files, run orchestration, sweeps, and artifact output.
//!
//! Configuration is flat `key = value` text with `#` comments and
//! unit-suffixed keys, so a file is unambiguous without a schema. Unknown
//! keys are errors: a typo must never silently fall back to a default.
//!
//! Every output file starts with a header embedding the configuration hash
//! and the crate version, and a fixed seed makes sweep outputs byte-stable
//! across runs.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::config::{
    validate, AdvectionScheme, CellProps, ChemicalProps, FluidProps, NumericalParams, Scenario,
    ScenarioConfig, SensorKind, SensorSpec, SimulationConfig, SourceSpec, VesselConfig,
};
use crate::scenarios::{run_scenario1, run_scenario2, sample_counts, RunError, RunRecord};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration errors:\n{}", .0.iter().map(|e| format!("  - {e}")).collect::<Vec<_>>().join("\n"))]
    Parse(Vec<ParseProblem>),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("output directory {0} exists and is not empty; pass --overwrite or --resume")]
    OutputExists(PathBuf),
    #[error("{failed} of {total} sweep points failed; see the point summaries")]
    SweepFailures { failed: usize, total: usize },
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("usage error: {0}")]
    Usage(String),
}

#[derive(Debug, Clone)]
pub struct ParseProblem {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ParseProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "line {n}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "scenario",
    "with_cells",
    "n_cells",
    "vessel_radius_um",
    "hematocrit",
    "cell_speed_mm_s",
    "fluid_density_kg_m3",
    "fluid_viscosity_pa_s",
    "diffusion_m2_s",
    "cell_volume_um3",
    "cell_surface_um2",
    "sensor_length_um",
    "absorption_velocity_m_s",
    "smoothing_width_um",
    "inlet_concentration_per_m3",
    "source_length_um",
    "source_flux_per_s_m2",
    "resolution_um",
    "cfl",
    "max_periods",
    "convergence_tol",
    "advection_scheme",
    "source_start_spacings",
    "sweep_past_um",
    "dump_fields",
];

/// Parses flat `key = value` configuration text into a validated
/// configuration. All problems are reported together.
pub fn parse_config(text: &str) -> Result<SimulationConfig, CliError> {
    let mut problems: Vec<ParseProblem> = Vec::new();
    let mut values: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            problems.push(ParseProblem {
                line: Some(lineno + 1),
                key: line.to_string(),
                message: "expected `key = value`".to_string(),
            });
            continue;
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            problems.push(ParseProblem {
                line: Some(lineno + 1),
                key: key.clone(),
                message: "unknown key".to_string(),
            });
            continue;
        }
        if values.insert(key.clone(), (lineno + 1, value)).is_some() {
            problems.push(ParseProblem {
                line: Some(lineno + 1),
                key,
                message: "duplicate key".to_string(),
            });
        }
    }

    let missing = |key: &str, problems: &mut Vec<ParseProblem>| {
        problems.push(ParseProblem {
            line: None,
            key: key.to_string(),
            message: "missing required key".to_string(),
        });
    };
    let get_f64 = |key: &str, problems: &mut Vec<ParseProblem>| -> Option<f64> {
        match values.get(key) {
            Some((line, v)) => match v.parse::<f64>() {
                Ok(x) => Some(x),
                Err(_) => {
                    problems.push(ParseProblem {
                        line: Some(*line),
                        key: key.to_string(),
                        message: format!("cannot parse `{v}` as a number"),
                    });
                    None
                }
            },
            None => None,
        }
    };
    let get_bool = |key: &str, problems: &mut Vec<ParseProblem>| -> Option<bool> {
        match values.get(key) {
            Some((line, v)) => match v.as_str() {
                "true" => Some(true),
                "false" => Some(false),
                _ => {
                    problems.push(ParseProblem {
                        line: Some(*line),
                        key: key.to_string(),
                        message: format!("cannot parse `{v}` as true/false"),
                    });
                    None
                }
            },
            None => None,
        }
    };

    let scenario = match values.get("scenario") {
        Some((line, v)) => match v.as_str() {
            "band" => Some(Scenario::BandOnWall),
            "sphere" => Some(Scenario::SphereInFlow),
            _ => {
                problems.push(ParseProblem {
                    line: Some(*line),
                    key: "scenario".to_string(),
                    message: format!("expected `band` or `sphere`, got `{v}`"),
                });
                None
            }
        },
        None => {
            missing("scenario", &mut problems);
            None
        }
    };
    let require_f64 = |key: &str, problems: &mut Vec<ParseProblem>| -> Option<f64> {
        if values.contains_key(key) {
            get_f64(key, problems)
        } else {
            missing(key, problems);
            None
        }
    };

    let with_cells = if values.contains_key("with_cells") {
        get_bool("with_cells", &mut problems)
    } else {
        missing("with_cells", &mut problems);
        None
    };
    let radius = require_f64("vessel_radius_um", &mut problems).map(|x| x * 1e-6);
    let hematocrit = require_f64("hematocrit", &mut problems);
    let speed = require_f64("cell_speed_mm_s", &mut problems).map(|x| x * 1e-3);
    let density = require_f64("fluid_density_kg_m3", &mut problems);
    let viscosity = require_f64("fluid_viscosity_pa_s", &mut problems);
    let diffusion = require_f64("diffusion_m2_s", &mut problems);
    let volume = require_f64("cell_volume_um3", &mut problems).map(|x| x * 1e-18);
    let surface = require_f64("cell_surface_um2", &mut problems).map(|x| x * 1e-12);
    let sensor_length = require_f64("sensor_length_um", &mut problems).map(|x| x * 1e-6);
    let absorption = require_f64("absorption_velocity_m_s", &mut problems);
    let smoothing = require_f64("smoothing_width_um", &mut problems).map(|x| x * 1e-6);

    let inlet = get_f64("inlet_concentration_per_m3", &mut problems);
    let source_length = get_f64("source_length_um", &mut problems).map(|x| x * 1e-6);
    let source_flux = get_f64("source_flux_per_s_m2", &mut problems);
    match scenario {
        Some(Scenario::BandOnWall) => {
            if !values.contains_key("inlet_concentration_per_m3") {
                missing("inlet_concentration_per_m3", &mut problems);
            }
        }
        Some(Scenario::SphereInFlow) => {
            if !values.contains_key("source_length_um") {
                missing("source_length_um", &mut problems);
            }
            if !values.contains_key("source_flux_per_s_m2") {
                missing("source_flux_per_s_m2", &mut problems);
            }
        }
        None => {}
    }

    let advection = match values.get("advection_scheme") {
        Some((line, v)) => match v.as_str() {
            "van_leer" => AdvectionScheme::VanLeer,
            "upwind" => AdvectionScheme::FirstOrderUpwind,
            _ => {
                problems.push(ParseProblem {
                    line: Some(*line),
                    key: "advection_scheme".to_string(),
                    message: format!("expected `van_leer` or `upwind`, got `{v}`"),
                });
                AdvectionScheme::VanLeer
            }
        },
        None => AdvectionScheme::VanLeer,
    };

    let defaults = NumericalParams::default();
    let numerics = NumericalParams {
        resolution: get_f64("resolution_um", &mut problems)
            .map(|x| x * 1e-6)
            .unwrap_or(defaults.resolution),
        cfl: get_f64("cfl", &mut problems).unwrap_or(defaults.cfl),
        max_periods: get_f64("max_periods", &mut problems)
            .map(|x| x as usize)
            .unwrap_or(defaults.max_periods),
        convergence_tol: get_f64("convergence_tol", &mut problems)
            .unwrap_or(defaults.convergence_tol),
        merge_threshold: defaults.merge_threshold,
        advection,
        source_start_spacings: get_f64("source_start_spacings", &mut problems)
            .unwrap_or(defaults.source_start_spacings),
        sweep_past: get_f64("sweep_past_um", &mut problems)
            .map(|x| x * 1e-6)
            .unwrap_or(defaults.sweep_past),
        dump_fields: get_bool("dump_fields", &mut problems).unwrap_or(false),
    };

    if !problems.is_empty() {
        return Err(CliError::Parse(problems));
    }
    let (scenario, with_cells) = (scenario.unwrap(), with_cells.unwrap());
    let n_cells = match values.get("n_cells") {
        Some((_, v)) => v.parse::<usize>().unwrap_or(0),
        None => match scenario {
            Scenario::BandOnWall => 10,
            Scenario::SphereInFlow => 20,
        },
    };
    let config = SimulationConfig {
        vessel: VesselConfig {
            radius: radius.unwrap(),
            hematocrit: hematocrit.unwrap(),
            cell_speed: speed.unwrap(),
        },
        fluid: FluidProps {
            density: density.unwrap(),
            viscosity: viscosity.unwrap(),
        },
        chemical: ChemicalProps {
            diffusion: diffusion.unwrap(),
        },
        cell: CellProps {
            volume: volume.unwrap(),
            surface: surface.unwrap(),
        },
        scenario: ScenarioConfig {
            scenario,
            inlet_concentration: inlet.unwrap_or(0.0),
            with_cells,
            n_cells,
            sensor: SensorSpec {
                kind: match scenario {
                    Scenario::BandOnWall => SensorKind::WallBand,
                    Scenario::SphereInFlow => SensorKind::MovingSphere,
                },
                length: sensor_length.unwrap(),
                absorption_velocity: absorption.unwrap(),
                smoothing_width: smoothing.unwrap(),
            },
            source: match scenario {
                Scenario::BandOnWall => None,
                Scenario::SphereInFlow => Some(SourceSpec {
                    length: source_length.unwrap(),
                    flux: source_flux.unwrap(),
                    smoothing_width: smoothing.unwrap(),
                }),
            },
        },
        numerics,
    };
    validate(config).map_err(|e| {
        CliError::Parse(vec![ParseProblem {
            line: None,
            key: "validation".to_string(),
            message: e.to_string(),
        }])
    })
}

/// One CLI invocation: which config, where to write, what to vary.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub config_path: PathBuf,
    pub out_dir: PathBuf,
    pub sweep: bool,
    pub scenario_override: Option<Scenario>,
    pub no_cells: bool,
    pub resolution_override: Option<f64>,
    pub seed: u64,
    pub resume: bool,
    pub overwrite: bool,
    pub workers: usize,
}

impl RunManifest {
    pub fn from_args(args: &[String]) -> Result<RunManifest, CliError> {
        let mut config_path = None;
        let mut out_dir = PathBuf::from("out");
        let mut sweep = false;
        let mut scenario_override = None;
        let mut no_cells = false;
        let mut resolution_override = None;
        let mut seed = 0u64;
        let mut resume = false;
        let mut overwrite = false;
        let usage = |msg: &str| CliError::Usage(format!("{msg}\n{USAGE}"));
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            match arg.as_str() {
                "--config" => {
                    config_path = Some(PathBuf::from(
                        it.next().ok_or_else(|| usage("--config needs a path"))?,
                    ))
                }
                "--out" => {
                    out_dir = PathBuf::from(it.next().ok_or_else(|| usage("--out needs a path"))?)
                }
                "--sweep" => sweep = true,
                "--scenario" => {
                    let v = it.next().ok_or_else(|| usage("--scenario needs 1 or 2"))?;
                    scenario_override = Some(match v.as_str() {
                        "1" => Scenario::BandOnWall,
                        "2" => Scenario::SphereInFlow,
                        _ => return Err(usage("--scenario must be 1 or 2")),
                    });
                }
                "--no-cells" => no_cells = true,
                "--resolution" => {
                    let v = it.next().ok_or_else(|| usage("--resolution needs µm"))?;
                    resolution_override = Some(
                        v.parse::<f64>()
                            .map_err(|_| usage("--resolution must be a number (µm)"))?
                            * 1e-6,
                    );
                }
                "--seed" => {
                    seed = it
                        .next()
                        .ok_or_else(|| usage("--seed needs an integer"))?
                        .parse::<u64>()
                        .map_err(|_| usage("--seed must be a non-negative integer"))?;
                }
                "--resume" => resume = true,
                "--overwrite" => overwrite = true,
                other => return Err(usage(&format!("unknown flag `{other}`"))),
            }
        }
        let workers = std::env::var("CAPSIM_WORKERS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .unwrap_or_else(|| {
                std::thread::available_parallelism()
                    .map(|n| n.get())
                    .unwrap_or(1)
            })
            .max(1);
        Ok(RunManifest {
            config_path: config_path.ok_or_else(|| usage("--config is required"))?,
            out_dir,
            sweep,
            scenario_override,
            no_cells,
            resolution_override,
            seed,
            resume,
            overwrite,
            workers,
        })
    }
}

pub const USAGE: &str = "usage: capsim --config PATH [--out DIR] [--sweep] [--scenario {1,2}] \
[--no-cells] [--resolution UM] [--seed N] [--resume] [--overwrite]\n\
The CAPSIM_WORKERS environment variable bounds the sweep worker pool.";

/// FNV-1a hash of the canonical configuration text plus overrides; embedded
/// in every output header so artifacts are traceable to their inputs.
pub fn config_hash(text: &str, manifest: &RunManifest) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100_0000_01b3);
        }
    };
    eat(text.as_bytes());
    eat(format!(
        "|sweep={}|scenario={:?}|no_cells={}|res={:?}|seed={}",
        manifest.sweep,
        manifest.scenario_override,
        manifest.no_cells,
        manifest.resolution_override,
        manifest.seed
    )
    .as_bytes());
    h
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn header(hash: u64) -> String {
    format!("# config_hash = {hash:016x}\n# version = capsim {VERSION}\n")
}

/// One sweep point: the paper's axes.
#[derive(Debug, Clone)]
struct SweepPoint {
    name: String,
    config: SimulationConfig,
}

fn sweep_points(base: &SimulationConfig) -> Vec<SweepPoint> {
    let speeds = [0.2e-3, 1.0e-3, 2.0e-3];
    let diffusions = [("Dsmallmol", 2.0e-9), ("Dlargemol", 1.0e-10)];
    let mut points = Vec::new();
    for &(dname, d) in &diffusions {
        for &v in &speeds {
            for &cells in &[true, false] {
                let mut cfg = base.clone();
                cfg.vessel.cell_speed = v;
                cfg.chemical.diffusion = d;
                cfg.scenario.with_cells = cells;
                let name = format!(
                    "{}_v{:.1}_{}_{}",
                    match cfg.scenario.scenario {
                        Scenario::BandOnWall => "band",
                        Scenario::SphereInFlow => "sphere",
                    },
                    v * 1e3,
                    dname,
                    if cells { "cells" } else { "empty" }
                );
                points.push(SweepPoint { name, config: cfg });
            }
        }
    }
    points
}

fn run_point(config: &SimulationConfig) -> Result<RunRecord, RunError> {
    match config.scenario.scenario {
        Scenario::BandOnWall => run_scenario1(config),
        Scenario::SphereInFlow => run_scenario2(config),
    }
}

/// Executes a manifest: a single run, or the 12-point sweep mirroring the
/// published tables. Returns the process exit code.
pub fn execute(manifest: &RunManifest) -> Result<(), CliError> {
    let text = fs::read_to_string(&manifest.config_path).map_err(|source| CliError::Io {
        path: manifest.config_path.clone(),
        source,
    })?;
    let mut base = parse_config(&text)?;
    if let Some(s) = manifest.scenario_override {
        if base.scenario.scenario != s {
            return Err(CliError::Usage(
                "--scenario override conflicts with the config file; write a config for the \
                 requested scenario"
                    .to_string(),
            ));
        }
    }
    if manifest.no_cells {
        base.scenario.with_cells = false;
    }
    if let Some(res) = manifest.resolution_override {
        base.numerics.resolution = res;
    }
    let hash = config_hash(&text, manifest);

    if manifest.out_dir.exists() {
        let non_empty = fs::read_dir(&manifest.out_dir)
            .map(|mut d| d.next().is_some())
            .unwrap_or(false);
        if non_empty && !(manifest.overwrite || manifest.resume) {
            return Err(CliError::OutputExists(manifest.out_dir.clone()));
        }
    }
    fs::create_dir_all(&manifest.out_dir).map_err(|source| CliError::Io {
        path: manifest.out_dir.clone(),
        source,
    })?;
    let mut manifest_txt = header(hash);
    manifest_txt.push_str(&format!(
        "config_path = {}\nsweep = {}\nseed = {}\nworkers = {}\n",
        manifest.config_path.display(),
        manifest.sweep,
        manifest.seed,
        manifest.workers
    ));
    write_text(&manifest.out_dir.join("manifest.txt"), &manifest_txt)?;

    let points = if manifest.sweep {
        sweep_points(&base)
    } else {
        vec![SweepPoint {
            name: "run".to_string(),
            config: base.clone(),
        }]
    };

    // Bounded worker pool over the points; per-point outputs are written by
    // the worker, the merged tables single-threaded afterwards.
    let queue = Mutex::new(points.iter().enumerate().collect::<Vec<_>>());
    let results: Mutex<Vec<(usize, Result<RunRecord, String>)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..manifest.workers.min(points.len()) {
            scope.spawn(|| loop {
                let job = queue.lock().unwrap().pop();
                let Some((idx, point)) = job else { break };
                let dir = manifest.out_dir.join(&point.name);
                if manifest.resume && point_complete(&dir) {
                    let mut res = results.lock().unwrap();
                    res.push((idx, Err("resumed".to_string())));
                    continue;
                }
                let outcome = run_point(&point.config);
                let stored = match outcome {
                    Ok(record) => {
                        let seed = manifest.seed.wrapping_add(idx as u64);
                        if let Err(e) = write_point(&dir, hash, &record, seed) {
                            Err(format!("write failed: {e}"))
                        } else {
                            Ok(record)
                        }
                    }
                    Err(e) => {
                        let _ = fs::create_dir_all(&dir);
                        let _ = write_text(
                            &dir.join("summary.txt"),
                            &format!("{}status = error\nerror = {e}\n", header(hash)),
                        );
                        Err(e.to_string())
                    }
                };
                results.lock().unwrap().push((idx, stored));
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(i, _)| *i);

    let mut records: Vec<(String, RunRecord)> = Vec::new();
    let mut failed = 0usize;
    for (idx, res) in &results {
        match res {
            Ok(record) => records.push((points[*idx].name.clone(), record.clone())),
            Err(msg) if msg == "resumed" => {}
            Err(_) => failed += 1,
        }
    }
    if manifest.sweep {
        emit_tables(&manifest.out_dir, hash, &records)?;
    }
    if failed > 0 {
        return Err(CliError::SweepFailures {
            failed,
            total: points.len(),
        });
    }
    Ok(())
}

fn point_complete(dir: &Path) -> bool {
    fs::read_to_string(dir.join("summary.txt"))
        .map(|s| s.contains("status = ok"))
        .unwrap_or(false)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a run's summary, series, force profile and sampled counts.
fn write_point(dir: &Path, hash: u64, record: &RunRecord, seed: u64) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_text(&dir.join("summary.txt"), &summary_text(hash, record))?;

    let mut series = header(hash);
    series.push_str(
        "t_s,coordinate_m,flux_per_s,inlet_advective_per_s,inlet_diffusive_per_s,\
         outlet_outflow_per_s,absorption_per_s,emission_per_s,mass_change_rate_per_s\n",
    );
    for s in &record.metrics.flux_series {
        series.push_str(&format!(
            "{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}\n",
            s.t,
            s.coordinate,
            s.flux,
            s.ledger.inlet_advective,
            s.ledger.inlet_diffusive,
            s.ledger.outlet_outflow,
            s.ledger.absorption,
            s.ledger.emission,
            s.ledger.mass_change_rate
        ));
    }
    write_text(&dir.join("series.csv"), &series)?;

    if !record.metrics.force_series.is_empty() {
        let mut force = header(hash);
        force.push_str("offset_m,force_n\n");
        for (z, f) in &record.metrics.force_series {
            force.push_str(&format!("{z:.9e},{f:.9e}\n"));
        }
        write_text(&dir.join("force.csv"), &force)?;
    }

    // Solver noise can leave ~1e-15-level negatives in an all-but-zero flux
    // tail; the Poisson sampler insists on true rates.
    let flux: Vec<f64> = record
        .metrics
        .flux_series
        .iter()
        .map(|s| s.flux.max(0.0))
        .collect();
    let counts = sample_counts(&flux, record.diagnostics.dt, seed);
    let mut counts_csv = header(hash);
    counts_csv.push_str(&format!("# seed = {seed}\nt_s,flux_per_s,count\n"));
    for (s, k) in record.metrics.flux_series.iter().zip(counts.iter()) {
        counts_csv.push_str(&format!("{:.9e},{:.9e},{k}\n", s.t, s.flux));
    }
    write_text(&dir.join("counts.csv"), &counts_csv)?;

    // Cell profile polyline for plotting, when cells are present.
    if record.config.scenario.with_cells {
        if let Ok(gap) = crate::geometry::gap_for_speed(record.config.vessel.cell_speed) {
            if let Ok(shape) = crate::geometry::solve_shape(
                record.config.vessel.radius,
                gap.gap,
                record.config.cell.volume,
                record.config.cell.surface,
            ) {
                let mut profile = header(hash);
                profile.push_str("z_m,y_m\n");
                for (z, y) in shape.sample_curve(256) {
                    profile.push_str(&format!("{z:.9e},{y:.9e}\n"));
                }
                write_text(&dir.join("profile.csv"), &profile)?;
            }
        }
    }
    if let Some(dumps) = &record.dumps {
        write_text(
            &dir.join("grid.txt"),
            &format!("{}{}", header(hash), dumps.grid),
        )?;
        write_text(
            &dir.join("flow.csv"),
            &format!("{}{}", header(hash), dumps.flow),
        )?;
        write_text(
            &dir.join("concentration.csv"),
            &format!("{}{}", header(hash), dumps.concentration),
        )?;
    }
    Ok(())
}

fn summary_text(hash: u64, record: &RunRecord) -> String {
    let mut s = header(hash);
    s.push_str("status = ok\n");
    let c = &record.config;
    s.push_str(&format!(
        "scenario = {}\nwith_cells = {}\nn_cells = {}\n",
        match c.scenario.scenario {
            Scenario::BandOnWall => "band",
            Scenario::SphereInFlow => "sphere",
        },
        c.scenario.with_cells,
        c.scenario.n_cells
    ));
    s.push_str(&format!(
        "vessel_radius_um = {}\nhematocrit = {}\ncell_speed_mm_s = {}\ndiffusion_m2_s = {:e}\n",
        c.vessel.radius * 1e6,
        c.vessel.hematocrit,
        c.vessel.cell_speed * 1e3,
        c.chemical.diffusion
    ));
    s.push_str(&format!(
        "resolution_um = {}\ncell_spacing_um = {:.6}\nreynolds = {:.6e}\npeclet = {:.6e}\n",
        c.numerics.resolution * 1e6,
        record.derived.cell_spacing * 1e6,
        record.derived.reynolds,
        record.derived.peclet
    ));
    if let Some(cds) = record.derived.downstream_concentration {
        s.push_str(&format!("downstream_concentration_per_m3 = {cds:.6e}\n"));
    }
    let m = &record.metrics;
    if let Some(avg) = m.average_rate {
        s.push_str(&format!("average_rate_per_s = {avg:.6e}\n"));
    }
    s.push_str(&format!("max_rate_per_s = {:.6e}\n", m.max_rate));
    if let Some(counts) = m.counts_near_source {
        s.push_str(&format!("counts_near_source = {counts:.6e}\n"));
    }
    if let Some(tail) = m.final_flux_mean {
        s.push_str(&format!("final_flux_mean_per_s = {tail:.6e}\n"));
    }
    if let (Some(fmax), Some(fmin), Some(var)) = (m.force_max, m.force_min, m.force_variation) {
        s.push_str(&format!(
            "band_force_max_n = {fmax:.6e}\nband_force_min_n = {fmin:.6e}\nband_force_variation = {var:.6}\n"
        ));
    }
    let d = &record.diagnostics;
    s.push_str(&format!(
        "converged = {}\nperiods_run = {}\nsteps = {}\ndt_s = {:.6e}\n",
        d.converged, d.periods_run, d.steps, d.dt
    ));
    if let Some(pc) = d.period_change {
        s.push_str(&format!("period_change = {pc:.6e}\n"));
    }
    if let Some(g) = d.pressure_gradient {
        s.push_str(&format!("pressure_gradient_pa_m = {g:.6e}\n"));
    }
    s.push_str(&format!(
        "max_window_ledger_residual = {:.6e}\nmax_divergence = {:.6e}\ngap_clamped = {}\n",
        d.max_window_residual, d.max_divergence, d.gap_clamped
    ));
    if let Some(r) = d.surface_concentration_ratio {
        s.push_str(&format!("sensor_surface_concentration_ratio = {r:.6e}\n"));
    }
    for b in &record.baselines.entries {
        s.push_str(&format!(
            "baseline_{} = {:.6e}  # {} [{}]\n",
            b.name, b.value, b.formula, b.unit
        ));
    }
    s
}

/// Published reference values for the standard parameter set, used to fill
/// the comparison columns of the sweep tables. Laid out per speed
/// {0.2, 1, 2} mm/s.
mod reference {
    pub const SPEEDS_MM_S: [f64; 3] = [0.2, 1.0, 2.0];
    pub const BAND_PRESSURE_GRADIENT: [f64; 3] = [1.8e5, 9.1e5, 1.8e6];
    pub const BAND_FORCE_CELLS_PN: [f64; 3] = [10.2, 51.0, 102.0];
    pub const BAND_FORCE_EMPTY_PN: [f64; 3] = [10.0, 50.0, 100.0];
    pub const BAND_RATE_LARGEMOL_CELLS: [f64; 3] = [260.0, 570.0, 800.0];
    pub const BAND_RATE_LARGEMOL_EMPTY: [f64; 3] = [310.0, 590.0, 760.0];
    pub const BAND_RATE_SMALLMOL_CELLS: [f64; 3] = [490.0, 1700.0, 3700.0];
    pub const BAND_RATE_SMALLMOL_EMPTY: [f64; 3] = [560.0, 2500.0, 4200.0];
    pub const SPHERE_MAX_LARGEMOL_CELLS: [f64; 3] = [900.0, 250.0, 130.0];
    pub const SPHERE_MAX_LARGEMOL_EMPTY: [f64; 3] = [1000.0, 280.0, 150.0];
    pub const SPHERE_COUNTS_LARGEMOL_CELLS: [f64; 3] = [25.0, 5.2, 2.7];
    pub const SPHERE_COUNTS_LARGEMOL_EMPTY: [f64; 3] = [33.0, 6.4, 3.3];
    pub const SPHERE_MAX_SMALLMOL_CELLS: [f64; 3] = [3000.0, 2000.0, 1500.0];
    pub const SPHERE_MAX_SMALLMOL_EMPTY: [f64; 3] = [3500.0, 2300.0, 1600.0];
    pub const SPHERE_COUNTS_SMALLMOL_CELLS: [f64; 3] = [140.0, 45.0, 27.0];
    pub const SPHERE_COUNTS_SMALLMOL_EMPTY: [f64; 3] = [170.0, 58.0, 33.0];
}

/// Emits CSV tables mirroring the published row layout, one per scenario,
/// with reference and relative-difference columns. Missing sweep points
/// leave gaps.
pub fn emit_tables(
    out_dir: &Path,
    hash: u64,
    records: &[(String, RunRecord)],
) -> Result<(), CliError> {
    use reference::*;
    let find = |cells: bool, d: f64, v: f64| -> Option<&RunRecord> {
        records.iter().map(|(_, r)| r).find(|r| {
            r.config.scenario.with_cells == cells
                && (r.config.chemical.diffusion - d).abs() < 1e-18
                && (r.config.vessel.cell_speed - v * 1e-3).abs() < 1e-9
        })
    };
    let is_band = records
        .first()
        .map(|(_, r)| r.config.scenario.scenario == Scenario::BandOnWall)
        .unwrap_or(false);
    let mut rows: Vec<(String, [Option<f64>; 3], [f64; 3])> = Vec::new();
    let d_small_mol = 2.0e-9;
    let d_large_mol = 1.0e-10;
    if is_band {
        let grab = |cells: bool, d: f64, f: &dyn Fn(&RunRecord) -> Option<f64>| {
            let mut out = [None; 3];
            for (k, &v) in SPEEDS_MM_S.iter().enumerate() {
                out[k] = find(cells, d, v).and_then(f);
            }
            out
        };
        rows.push((
            "pressure_gradient_pa_m".into(),
            grab(true, d_large_mol, &|r| r.diagnostics.pressure_gradient),
            BAND_PRESSURE_GRADIENT,
        ));
        rows.push((
            "max_band_force_pn".into(),
            grab(true, d_large_mol, &|r| {
                r.metrics.force_max.map(|f| f * 1e12)
            }),
            BAND_FORCE_CELLS_PN,
        ));
        rows.push((
            "max_band_force_pn_no_cells".into(),
            grab(false, d_large_mol, &|r| {
                r.metrics.force_max.map(|f| f * 1e12)
            }),
            BAND_FORCE_EMPTY_PN,
        ));
        rows.push((
            "avg_rate_large_molecules_per_s".into(),
            grab(true, d_large_mol, &|r| r.metrics.average_rate),
            BAND_RATE_LARGEMOL_CELLS,
        ));
        rows.push((
            "avg_rate_large_molecules_per_s_no_cells".into(),
            grab(false, d_large_mol, &|r| r.metrics.average_rate),
            BAND_RATE_LARGEMOL_EMPTY,
        ));
        rows.push((
            "avg_rate_small_molecules_per_s".into(),
            grab(true, d_small_mol, &|r| r.metrics.average_rate),
            BAND_RATE_SMALLMOL_CELLS,
        ));
        rows.push((
            "avg_rate_small_molecules_per_s_no_cells".into(),
            grab(false, d_small_mol, &|r| r.metrics.average_rate),
            BAND_RATE_SMALLMOL_EMPTY,
        ));
    } else {
        let grab = |cells: bool, d: f64, f: &dyn Fn(&RunRecord) -> Option<f64>| {
            let mut out = [None; 3];
            for (k, &v) in SPEEDS_MM_S.iter().enumerate() {
                out[k] = find(cells, d, v).and_then(f);
            }
            out
        };
        rows.push((
            "max_rate_large_molecules_per_s".into(),
            grab(true, d_large_mol, &|r| Some(r.metrics.max_rate)),
            SPHERE_MAX_LARGEMOL_CELLS,
        ));
        rows.push((
            "max_rate_large_molecules_per_s_no_cells".into(),
            grab(false, d_large_mol, &|r| Some(r.metrics.max_rate)),
            SPHERE_MAX_LARGEMOL_EMPTY,
        ));
        rows.push((
            "counts_near_source_large_molecules".into(),
            grab(true, d_large_mol, &|r| r.metrics.counts_near_source),
            SPHERE_COUNTS_LARGEMOL_CELLS,
        ));
        rows.push((
            "counts_near_source_large_molecules_no_cells".into(),
            grab(false, d_large_mol, &|r| r.metrics.counts_near_source),
            SPHERE_COUNTS_LARGEMOL_EMPTY,
        ));
        rows.push((
            "max_rate_small_molecules_per_s".into(),
            grab(true, d_small_mol, &|r| Some(r.metrics.max_rate)),
            SPHERE_MAX_SMALLMOL_CELLS,
        ));
        rows.push((
            "max_rate_small_molecules_per_s_no_cells".into(),
            grab(false, d_small_mol, &|r| Some(r.metrics.max_rate)),
            SPHERE_MAX_SMALLMOL_EMPTY,
        ));
        rows.push((
            "counts_near_source_small_molecules".into(),
            grab(true, d_small_mol, &|r| r.metrics.counts_near_source),
            SPHERE_COUNTS_SMALLMOL_CELLS,
        ));
        rows.push((
            "counts_near_source_small_molecules_no_cells".into(),
            grab(false, d_small_mol, &|r| r.metrics.counts_near_source),
            SPHERE_COUNTS_SMALLMOL_EMPTY,
        ));
    }
    let mut csv = header(hash);
    csv.push_str(
        "metric,v0.2,v1,v2,ref_v0.2,ref_v1,ref_v2,rel_diff_v0.2,rel_diff_v1,rel_diff_v2\n",
    );
    for (name, values, refs) in rows {
        csv.push_str(&name);
        for v in values.iter() {
            match v {
                Some(x) => csv.push_str(&format!(",{x:.6e}")),
                None => csv.push(','),
            }
        }
        for r in refs.iter() {
            csv.push_str(&format!(",{r:.6e}"));
        }
        for (v, r) in values.iter().zip(refs.iter()) {
            match v {
                Some(x) => csv.push_str(&format!(",{:.4}", (x - r) / r)),
                None => csv.push(','),
            }
        }
        csv.push('\n');
    }
    let name = if is_band {
        "table_band.csv"
    } else {
        "table_sphere.csv"
    };
    write_text(&out_dir.join(name), &csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BAND_CONFIG: &str = include_str!("../../../configs/band.cfg");
    const SPHERE_CONFIG: &str = include_str!("../../../configs/sphere.cfg");

    #[test]
    fn shipped_band_config_reproduces_the_standard_parameters() {
        let cfg = parse_config(BAND_CONFIG).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs();
        assert!(close(cfg.vessel.radius, 3.0e-6));
        assert_eq!(cfg.vessel.hematocrit, 0.25);
        assert_eq!(cfg.fluid.viscosity, 1.0e-3);
        assert_eq!(cfg.fluid.density, 1.0e3);
        assert!(close(cfg.cell.volume, 90.0e-18));
        assert!(close(cfg.cell.surface, 135.0e-12));
        assert_eq!(cfg.scenario.inlet_concentration, 1.0e17);
        assert!(close(cfg.scenario.sensor.length, 2.0e-6));
        assert_eq!(cfg.scenario.n_cells, 10);
        assert!(cfg.scenario.with_cells);
    }

    #[test]
    fn shipped_sphere_config_parses() {
        let cfg = parse_config(SPHERE_CONFIG).unwrap();
        let src = cfg.scenario.source.unwrap();
        assert!((src.length - 10.0e-6).abs() <= 1e-18);
        assert_eq!(src.flux, 1.0e13);
        assert_eq!(cfg.scenario.n_cells, 20);
    }

    #[test]
    fn empty_file_lists_every_missing_key() {
        match parse_config("") {
            Err(CliError::Parse(problems)) => {
                assert!(problems.len() >= 10, "{problems:?}");
                assert!(problems.iter().all(|p| p.message.contains("missing")));
            }
            other => panic!("expected parse errors, got {other:?}"),
        }
    }

    #[test]
    fn unknown_and_unparsable_keys_are_errors() {
        let text = format!("{BAND_CONFIG}\nradius_typo_um = 3\n");
        match parse_config(&text) {
            Err(CliError::Parse(problems)) => {
                assert!(problems.iter().any(|p| p.key == "radius_typo_um"));
            }
            other => panic!("expected parse errors, got {other:?}"),
        }
        let bad = BAND_CONFIG.replace("vessel_radius_um = 3", "vessel_radius_um = abc");
        assert!(matches!(parse_config(&bad), Err(CliError::Parse(_))));
    }

    #[test]
    fn negative_radius_fails_validation() {
        let bad = BAND_CONFIG.replace("vessel_radius_um = 3", "vessel_radius_um = -3");
        match parse_config(&bad) {
            Err(CliError::Parse(problems)) => {
                assert!(problems.iter().any(|p| p.message.contains("radius")));
            }
            other => panic!("expected validation errors, got {other:?}"),
        }
    }

    #[test]
    fn sweep_covers_the_published_grid() {
        let base = parse_config(BAND_CONFIG).unwrap();
        let points = sweep_points(&base);
        assert_eq!(points.len(), 12);
        let names: Vec<&str> = points.iter().map(|p| p.name.as_str()).collect();
        assert!(names.contains(&"band_v1.0_Dlargemol_cells"));
        assert!(names.contains(&"band_v0.2_Dsmallmol_empty"));
    }

    #[test]
    fn config_hash_tracks_inputs() {
        let manifest = RunManifest {
            config_path: PathBuf::from("x"),
            out_dir: PathBuf::from("y"),
            sweep: false,
            scenario_override: None,
            no_cells: false,
            resolution_override: None,
            seed: 0,
            resume: false,
            overwrite: false,
            workers: 1,
        };
        let a = config_hash(BAND_CONFIG, &manifest);
        let b = config_hash(SPHERE_CONFIG, &manifest);
        assert_ne!(a, b);
        let mut manifest2 = manifest.clone();
        manifest2.seed = 1;
        assert_ne!(a, config_hash(BAND_CONFIG, &manifest2));
    }
}
