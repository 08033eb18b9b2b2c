//! Physical and scenario parameters, validation, and derived quantities.
//!
//! Everything is stored in SI units. Configuration files use unit-suffixed
//! keys (micrometres, mm/s, ...) and are converted once at parse time, so the
//! solver core never sees mixed units.

use std::fmt;

/// Bulk fluid properties of the plasma.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidProps {
    /// Density \[kg/m³\].
    pub density: f64,
    /// Dynamic viscosity \[Pa·s\].
    pub viscosity: f64,
}

/// Vessel geometry and the imposed cell speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VesselConfig {
    /// Vessel radius R \[m\].
    pub radius: f64,
    /// Hematocrit h: fraction of vessel volume occupied by cells.
    pub hematocrit: f64,
    /// Cell speed v_cell \[m/s\].
    pub cell_speed: f64,
}

/// Transported chemical.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChemicalProps {
    /// Diffusion coefficient D \[m²/s\].
    pub diffusion: f64,
}

/// Red-cell volume and surface-area targets used by the shape solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellProps {
    /// Cell volume V \[m³\].
    pub volume: f64,
    /// Cell surface area S \[m²\].
    pub surface: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensorKind {
    /// Ring of devices embedded in the vessel wall.
    WallBand,
    /// Spherical device riding mid-stream with the cells.
    MovingSphere,
}

/// The absorbing sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSpec {
    pub kind: SensorKind,
    /// Sensor length ℓ \[m\]; the sphere uses ℓ as its diameter.
    pub length: f64,
    /// Robin absorption velocity k \[m/s\]; large k approximates a perfect absorber.
    pub absorption_velocity: f64,
    /// Edge smoothing width w \[m\] for the time-dependent wall flux.
    pub smoothing_width: f64,
}

/// The emitting source band on the vessel wall (sphere scenario only).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec {
    /// Source length λ \[m\].
    pub length: f64,
    /// Emission flux K \[molecules/(s·m²)\].
    pub flux: f64,
    /// Edge smoothing width w \[m\].
    pub smoothing_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Scenario 1: absorbing band fixed on the wall, chemical fed at the inlet.
    BandOnWall,
    /// Scenario 2: absorbing sphere between two cells, source band on the wall.
    SphereInFlow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    /// Inlet concentration C \[molecules/m³\] (scenario 1; must be 0 in scenario 2).
    pub inlet_concentration: f64,
    pub with_cells: bool,
    /// Number of cells in the modelled vessel segment.
    pub n_cells: usize,
    pub sensor: SensorSpec,
    pub source: Option<SourceSpec>,
}

/// Advection discretization for the transport step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvectionScheme {
    FirstOrderUpwind,
    /// MUSCL reconstruction with the van Leer limiter (default).
    VanLeer,
}

/// Numerical knobs. Defaults reproduce the standard runs.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericalParams {
    /// Grid spacing dr = dz \[m\].
    pub resolution: f64,
    /// Advective CFL number for the explicit step.
    pub cfl: f64,
    /// Step budget for scenario 1, in periods L/v_cell.
    pub max_periods: usize,
    /// Relative period-to-period flux change declaring steady state.
    pub convergence_tol: f64,
    /// Open-volume fractions below this are merged into a fluid neighbour.
    pub merge_threshold: f64,
    pub advection: AdvectionScheme,
    /// Scenario 2: initial source position downstream of the sensor, in units of L.
    pub source_start_spacings: f64,
    /// Scenario 2: sweep continues until the sensor is this far past the source \[m\].
    pub sweep_past: f64,
    /// Emit (z, r, field) dumps alongside the run summaries.
    pub dump_fields: bool,
}

impl Default for NumericalParams {
    fn default() -> Self {
        Self {
            resolution: 0.1e-6,
            cfl: 0.4,
            max_periods: 100,
            convergence_tol: 0.01,
            merge_threshold: 0.05,
            advection: AdvectionScheme::VanLeer,
            source_start_spacings: 3.0,
            sweep_past: 50.0e-6,
            dump_fields: false,
        }
    }
}

/// Complete description of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub vessel: VesselConfig,
    pub fluid: FluidProps,
    pub chemical: ChemicalProps,
    pub cell: CellProps,
    pub scenario: ScenarioConfig,
    pub numerics: NumericalParams,
}

/// Scalars computed from a validated configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedQuantities {
    /// Cell spacing L = V/(π R² h) \[m\].
    pub cell_spacing: f64,
    /// Reynolds number ρ v R / η with the vessel radius as the length scale.
    pub reynolds: f64,
    /// Péclet number v ℓ / D with the sensor length as the length scale.
    pub peclet: f64,
    /// Scenario 2 initial downstream concentration \[molecules/m³\].
    pub downstream_concentration: Option<f64>,
}

/// A single violated constraint: which field, what was required, what was given.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub constraint: String,
    pub value: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} (got {})",
            self.field, self.constraint, self.value
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid configuration:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("downstream concentration undefined at zero speed")]
    ZeroSpeedDownstream,
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl SimulationConfig {
    /// Standard parameter set: 3 µm vessel, plasma-like fluid, 25 % hematocrit,
    /// 90 µm³ / 135 µm² cells, wall-band sensor with a 10-cell segment.
    pub fn standard_band(cell_speed: f64, diffusion: f64, with_cells: bool) -> Self {
        Self {
            vessel: VesselConfig {
                radius: 3.0e-6,
                hematocrit: 0.25,
                cell_speed,
            },
            fluid: FluidProps {
                density: 1.0e3,
                viscosity: 1.0e-3,
            },
            chemical: ChemicalProps { diffusion },
            cell: CellProps {
                volume: 90.0e-18,
                surface: 135.0e-12,
            },
            scenario: ScenarioConfig {
                scenario: Scenario::BandOnWall,
                inlet_concentration: 1.0e17,
                with_cells,
                n_cells: 10,
                sensor: SensorSpec {
                    kind: SensorKind::WallBand,
                    length: 2.0e-6,
                    absorption_velocity: 1.0,
                    smoothing_width: 0.2e-6,
                },
                source: None,
            },
            numerics: NumericalParams::default(),
        }
    }

    /// Standard parameter set for the moving-sphere scenario (20-cell segment).
    pub fn standard_sphere(cell_speed: f64, diffusion: f64, with_cells: bool) -> Self {
        let mut cfg = Self::standard_band(cell_speed, diffusion, with_cells);
        cfg.scenario.scenario = Scenario::SphereInFlow;
        cfg.scenario.inlet_concentration = 0.0;
        cfg.scenario.n_cells = 20;
        cfg.scenario.sensor.kind = SensorKind::MovingSphere;
        cfg.scenario.source = Some(SourceSpec {
            length: 10.0e-6,
            flux: 1.0e13,
            smoothing_width: 0.2e-6,
        });
        cfg
    }
}

/// Checks every type invariant and returns the configuration unchanged if all
/// hold, otherwise the complete list of violations.
pub fn validate(config: SimulationConfig) -> Result<SimulationConfig, ConfigError> {
    let mut v: Vec<Violation> = Vec::new();
    let mut push = |field: &str, constraint: &str, value: String| {
        v.push(Violation {
            field: field.to_string(),
            constraint: constraint.to_string(),
            value,
        });
    };

    let c = &config;
    if !(c.fluid.density > 0.0) {
        push(
            "fluid.density",
            "must be > 0",
            format!("{}", c.fluid.density),
        );
    }
    if !(c.fluid.viscosity > 0.0) {
        push(
            "fluid.viscosity",
            "must be > 0",
            format!("{}", c.fluid.viscosity),
        );
    }
    if !(c.vessel.radius > 0.0) {
        push(
            "vessel.radius",
            "must be > 0",
            format!("{}", c.vessel.radius),
        );
    }
    let h = c.vessel.hematocrit;
    if !(h > 0.0 && h < 1.0) {
        if c.scenario.with_cells {
            push(
                "vessel.hematocrit",
                "hematocrit must be in (0,1) when cells present",
                format!("{h}"),
            );
        } else {
            push("vessel.hematocrit", "must be in (0,1)", format!("{h}"));
        }
    }
    if !(c.vessel.cell_speed >= 0.0) {
        push(
            "vessel.cell_speed",
            "must be >= 0",
            format!("{}", c.vessel.cell_speed),
        );
    }
    if !(c.chemical.diffusion > 0.0) {
        push(
            "chemical.diffusion",
            "must be > 0",
            format!("{}", c.chemical.diffusion),
        );
    }
    if !(c.cell.volume > 0.0) {
        push("cell.volume", "must be > 0", format!("{}", c.cell.volume));
    }
    if !(c.cell.surface > 0.0) {
        push("cell.surface", "must be > 0", format!("{}", c.cell.surface));
    }

    let s = &c.scenario.sensor;
    if !(s.length > 0.0) {
        push("sensor.length", "must be > 0", format!("{}", s.length));
    }
    if !(s.absorption_velocity > 0.0) {
        push(
            "sensor.absorption_velocity",
            "must be > 0",
            format!("{}", s.absorption_velocity),
        );
    }
    if !(s.smoothing_width > 0.0 && s.smoothing_width < s.length) {
        push(
            "sensor.smoothing_width",
            "w < ℓ violated; smoothing width must be in (0, sensor length)",
            format!("w = {}, ℓ = {}", s.smoothing_width, s.length),
        );
    }
    if let Some(src) = &c.scenario.source {
        if !(src.length > 0.0) {
            push("source.length", "must be > 0", format!("{}", src.length));
        }
        if !(src.flux >= 0.0) {
            push("source.flux", "must be >= 0", format!("{}", src.flux));
        }
        if !(src.smoothing_width > 0.0 && src.smoothing_width < src.length) {
            push(
                "source.smoothing_width",
                "must be in (0, source length)",
                format!("w = {}, λ = {}", src.smoothing_width, src.length),
            );
        }
    }
    if c.scenario.n_cells == 0 {
        push("scenario.n_cells", "must be >= 1", "0".to_string());
    }

    match c.scenario.scenario {
        Scenario::BandOnWall => {
            if !(c.scenario.inlet_concentration > 0.0) {
                push(
                    "scenario.inlet_concentration",
                    "band scenario requires C > 0",
                    format!("{}", c.scenario.inlet_concentration),
                );
            }
            if c.scenario.source.is_some() {
                push(
                    "scenario.source",
                    "band scenario takes no source band",
                    "present".to_string(),
                );
            }
            if s.kind != SensorKind::WallBand {
                push(
                    "sensor.kind",
                    "band scenario requires a wall-band sensor",
                    format!("{:?}", s.kind),
                );
            }
        }
        Scenario::SphereInFlow => {
            if c.scenario.source.is_none() {
                push(
                    "scenario.source",
                    "sphere scenario requires a source band",
                    "absent".to_string(),
                );
            }
            if c.scenario.inlet_concentration != 0.0 {
                push(
                    "scenario.inlet_concentration",
                    "sphere scenario requires a zero-concentration inlet",
                    format!("{}", c.scenario.inlet_concentration),
                );
            }
            if s.kind != SensorKind::MovingSphere {
                push(
                    "sensor.kind",
                    "sphere scenario requires a moving-sphere sensor",
                    format!("{:?}", s.kind),
                );
            }
        }
    }

    let n = &c.numerics;
    if !(n.resolution > 0.0) {
        push(
            "numerics.resolution",
            "must be > 0",
            format!("{}", n.resolution),
        );
    }
    if !(n.cfl > 0.0 && n.cfl <= 0.5) {
        push("numerics.cfl", "must be in (0, 0.5]", format!("{}", n.cfl));
    }
    if !(n.convergence_tol > 0.0) {
        push(
            "numerics.convergence_tol",
            "must be > 0",
            format!("{}", n.convergence_tol),
        );
    }
    if !(n.merge_threshold > 0.0 && n.merge_threshold < 0.5) {
        push(
            "numerics.merge_threshold",
            "must be in (0, 0.5)",
            format!("{}", n.merge_threshold),
        );
    }

    if v.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError::Invalid(v))
    }
}

/// Computes the derived scalars for a validated configuration.
///
/// The empty-vessel variant of the downstream concentration uses h = 0: with
/// no cells the plasma fills the whole cross-section.
pub fn derive(config: &SimulationConfig) -> Result<DerivedQuantities, ConfigError> {
    let r = config.vessel.radius;
    let h = config.vessel.hematocrit;
    let v = config.vessel.cell_speed;
    let cell_spacing = config.cell.volume / (std::f64::consts::PI * r * r * h);
    let reynolds = config.fluid.density * v * r / config.fluid.viscosity;
    let peclet = v * config.scenario.sensor.length / config.chemical.diffusion;

    let downstream_concentration = match &config.scenario.source {
        Some(src) => {
            if v == 0.0 {
                return Err(ConfigError::ZeroSpeedDownstream);
            }
            let h_eff = if config.scenario.with_cells { h } else { 0.0 };
            Some(2.0 * src.length * src.flux / (r * v * (1.0 - h_eff)))
        }
        None => None,
    };

    Ok(DerivedQuantities {
        cell_spacing,
        reynolds,
        peclet,
        downstream_concentration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_band_config_is_valid() {
        let cfg = SimulationConfig::standard_band(1.0e-3, 1.0e-10, true);
        assert!(validate(cfg).is_ok());
    }

    #[test]
    fn standard_sphere_config_is_valid() {
        let cfg = SimulationConfig::standard_sphere(1.0e-3, 2.0e-9, true);
        assert!(validate(cfg).is_ok());
    }

    #[test]
    fn zero_hematocrit_with_cells_is_rejected() {
        let mut cfg = SimulationConfig::standard_band(1.0e-3, 1.0e-10, true);
        cfg.vessel.hematocrit = 0.0;
        match validate(cfg) {
            Err(ConfigError::Invalid(v)) => {
                assert!(v.iter().any(|x| x
                    .constraint
                    .contains("hematocrit must be in (0,1) when cells present")));
            }
            other => panic!("expected violation list, got {other:?}"),
        }
    }

    #[test]
    fn oversized_smoothing_width_is_rejected() {
        let mut cfg = SimulationConfig::standard_band(1.0e-3, 1.0e-10, true);
        cfg.scenario.sensor.smoothing_width = 3.0e-6; // ℓ = 2 µm
        match validate(cfg) {
            Err(ConfigError::Invalid(v)) => {
                assert!(v.iter().any(|x| x.constraint.contains("w < ℓ violated")));
            }
            other => panic!("expected violation list, got {other:?}"),
        }
    }

    #[test]
    fn all_violations_are_reported_not_just_the_first() {
        let mut cfg = SimulationConfig::standard_band(1.0e-3, 1.0e-10, true);
        cfg.vessel.radius = -3.0e-6;
        cfg.fluid.viscosity = 0.0;
        cfg.chemical.diffusion = -1.0;
        match validate(cfg) {
            Err(ConfigError::Invalid(v)) => assert!(v.len() >= 3, "got {v:?}"),
            other => panic!("expected violation list, got {other:?}"),
        }
    }

    #[test]
    fn validate_is_idempotent() {
        let cfg = SimulationConfig::standard_band(1.0e-3, 1.0e-10, true);
        let once = validate(cfg).unwrap();
        let twice = validate(once.clone()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn cell_spacing_matches_hand_value() {
        // V = 90 µm³, R = 3 µm, h = 0.25 → L = 12.7 µm.
        let cfg = SimulationConfig::standard_band(1.0e-3, 1.0e-10, true);
        let d = derive(&cfg).unwrap();
        assert!(
            (d.cell_spacing - 12.732e-6).abs() < 0.01e-6,
            "{}",
            d.cell_spacing
        );
        // L · (π R² h) = V to machine precision.
        let back = d.cell_spacing
            * std::f64::consts::PI
            * cfg.vessel.radius.powi(2)
            * cfg.vessel.hematocrit;
        assert!((back - cfg.cell.volume).abs() <= 1e-15 * cfg.cell.volume);
    }

    #[test]
    fn reynolds_number_is_small() {
        // ρ = 1e3, v = 1 mm/s, R = 3 µm, η = 1e-3 → Re = 3e-3.
        let cfg = SimulationConfig::standard_band(1.0e-3, 1.0e-10, true);
        let d = derive(&cfg).unwrap();
        assert!((d.reynolds - 3.0e-3).abs() < 1e-12);
        assert!(d.reynolds < 1.0e-2);
    }

    #[test]
    fn downstream_concentration_matches_hand_value() {
        // λ = 10 µm, K = 1e13 /s/m², R = 3 µm, v = 1 mm/s, h = 0.25 → ≈ 8.89e16 /m³.
        let cfg = SimulationConfig::standard_sphere(1.0e-3, 1.0e-10, true);
        let d = derive(&cfg).unwrap();
        let c_ds = d.downstream_concentration.unwrap();
        assert!((c_ds - 8.889e16).abs() / 8.889e16 < 1e-3, "{c_ds}");
        // Empty-vessel variant uses h = 0.
        let empty = SimulationConfig::standard_sphere(1.0e-3, 1.0e-10, false);
        let c0 = derive(&empty).unwrap().downstream_concentration.unwrap();
        assert!((c0 - 2.0 * 10.0e-6 * 1.0e13 / (3.0e-6 * 1.0e-3)).abs() / c0 < 1e-12);
    }

    #[test]
    fn zero_speed_downstream_is_an_error() {
        let mut cfg = SimulationConfig::standard_sphere(1.0e-3, 1.0e-10, true);
        cfg.vessel.cell_speed = 0.0;
        assert!(matches!(
            derive(&cfg),
            Err(ConfigError::ZeroSpeedDownstream)
        ));
    }

    #[test]
    fn derive_is_homogeneous_in_speed() {
        // Doubling v doubles Re and Pe and halves the downstream concentration.
        for &v in &[0.2e-3, 0.7e-3, 1.0e-3, 1.9e-3] {
            let a = derive(&SimulationConfig::standard_sphere(v, 1.0e-10, true)).unwrap();
            let b = derive(&SimulationConfig::standard_sphere(2.0 * v, 1.0e-10, true)).unwrap();
            assert!((b.reynolds / a.reynolds - 2.0).abs() < 1e-12);
            assert!((b.peclet / a.peclet - 2.0).abs() < 1e-12);
            let ca = a.downstream_concentration.unwrap();
            let cb = b.downstream_concentration.unwrap();
            assert!((cb / ca - 0.5).abs() < 1e-12);
        }
    }
}
