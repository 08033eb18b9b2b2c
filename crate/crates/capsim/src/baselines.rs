//! Closed-form reference quantities used for validation and cell-free
//! comparisons. Every entry is reproducible from the configuration alone.

use crate::config::{DerivedQuantities, Scenario, SimulationConfig};

/// Diffusion-limited capture rate 4πDaC of a perfectly absorbing sphere of
/// radius `a` in a far-field concentration `C` \[molecules/s\].
pub fn absorbing_sphere_rate(diffusion: f64, radius: f64, concentration: f64) -> f64 {
    4.0 * std::f64::consts::PI * diffusion * radius * concentration
}

/// Shear force on a wall band of length `band_length` in fully developed pipe
/// flow with mean speed `mean_speed`: traction 4vη/R over area 2πRℓ = 8πηvℓ.
pub fn wall_band_shear_force(
    mean_speed: f64,
    viscosity: f64,
    vessel_radius: f64,
    band_length: f64,
) -> f64 {
    let traction = 4.0 * mean_speed * viscosity / vessel_radius;
    traction * 2.0 * std::f64::consts::PI * vessel_radius * band_length
}

/// Wetted band area 2πRℓ and the number of individual ℓ-sized devices that
/// tile the ring, rounded to the nearest whole device (at least one).
pub fn band_area_and_count(vessel_radius: f64, band_length: f64) -> (f64, u32) {
    let area = 2.0 * std::f64::consts::PI * vessel_radius * band_length;
    let count = (2.0 * std::f64::consts::PI * vessel_radius / band_length)
        .round()
        .max(1.0) as u32;
    (area, count)
}

/// One named closed-form result with its unit and formula tag.
#[derive(Debug, Clone)]
pub struct BaselineEntry {
    pub name: &'static str,
    pub value: f64,
    pub unit: &'static str,
    pub formula: &'static str,
}

/// The baseline set attached to every run summary.
#[derive(Debug, Clone, Default)]
pub struct BaselineReport {
    pub entries: Vec<BaselineEntry>,
}

impl BaselineReport {
    pub fn for_config(config: &SimulationConfig, derived: &DerivedQuantities) -> Self {
        let mut entries = Vec::new();
        let r = config.vessel.radius;
        let v = config.vessel.cell_speed;
        let eta = config.fluid.viscosity;
        let d = config.chemical.diffusion;
        let l = config.scenario.sensor.length;
        let (area, count) = band_area_and_count(r, l);
        entries.push(BaselineEntry {
            name: "band_area",
            value: area,
            unit: "m^2",
            formula: "2*pi*R*l",
        });
        entries.push(BaselineEntry {
            name: "band_device_count",
            value: count as f64,
            unit: "1",
            formula: "round(2*pi*R/l)",
        });
        entries.push(BaselineEntry {
            name: "wall_band_shear_force",
            value: wall_band_shear_force(v, eta, r, l),
            unit: "N",
            formula: "8*pi*eta*v*l",
        });
        match config.scenario.scenario {
            Scenario::BandOnWall => {
                // Sphere with the same surface area as the band.
                let a_equiv = (r * l / 2.0).sqrt();
                entries.push(BaselineEntry {
                    name: "area_equivalent_sphere_rate",
                    value: absorbing_sphere_rate(d, a_equiv, config.scenario.inlet_concentration),
                    unit: "molecules/s",
                    formula: "4*pi*D*sqrt(R*l/2)*C",
                });
            }
            Scenario::SphereInFlow => {
                if let (Some(src), Some(c_ds)) =
                    (&config.scenario.source, derived.downstream_concentration)
                {
                    entries.push(BaselineEntry {
                        name: "source_production_rate",
                        value: 2.0 * std::f64::consts::PI * r * src.length * src.flux,
                        unit: "molecules/s",
                        formula: "2*pi*R*lambda*K",
                    });
                    entries.push(BaselineEntry {
                        name: "downstream_sphere_rate",
                        value: absorbing_sphere_rate(d, 0.5 * l, c_ds),
                        unit: "molecules/s",
                        formula: "4*pi*D*(l/2)*C_downstream",
                    });
                }
            }
        }
        entries.push(BaselineEntry {
            name: "reynolds",
            value: derived.reynolds,
            unit: "1",
            formula: "rho*v*R/eta",
        });
        entries.push(BaselineEntry {
            name: "peclet",
            value: derived.peclet,
            unit: "1",
            formula: "v*l/D",
        });
        BaselineReport { entries }
    }
}
