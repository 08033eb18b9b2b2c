//! Steady creeping-flow solver on the staggered cut-cell grid.
//!
//! Inertia is dropped entirely: at these scales the Reynolds number is ~1e-3,
//! so the momentum balance is linear and solutions superpose exactly. That
//! linearity is load-bearing — the zero-net-force pressure gradient comes
//! from an affine fit through two solves with a shared factorization.
//!
//! The coupled velocity–pressure saddle system is assembled per axial column
//! and factored with the banded LU. Periodic domains interleave the column
//! blocks (0, nz−1, 1, nz−2, …) so the wrap coupling stays inside the band.
//! Window solves (for the sphere sensor) take Dirichlet velocity caps from a
//! tiled periodic solution and splice back into it.

use crate::grid::{AxiGrid, VolumeClass, NO_GROUP};
use crate::linsolve::{BandMatrix, LinSolveError};

#[derive(Debug, thiserror::Error)]
pub enum StokesError {
    #[error("linear solve failed: {0}")]
    LinSolve(#[from] LinSolveError),
    #[error("degenerate probe: force does not respond to the pressure gradient")]
    DegenerateProbe,
    #[error("zero-force verification failed: residual force {force:.3e} N exceeds {tol:.3e} N")]
    ForceResidual { force: f64, tol: f64 },
    #[error("no cells in this grid: {0}")]
    NoCells(&'static str),
    #[error("band placement outside the domain")]
    BandOutsideDomain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    /// Moving with the cells; the wall slides backwards at −v_cell.
    Comoving,
    /// Vessel frame; used for empty-vessel band runs.
    Lab,
}

/// Discrete steady flow on a grid: face velocities, periodic pressure part,
/// and the imposed mean axial gradient.
#[derive(Debug, Clone)]
pub struct FlowField {
    pub nz: usize,
    pub nr: usize,
    pub dz: f64,
    pub dr: f64,
    /// z-face velocities, (nz+1)*nr; the last column equals column 0 for
    /// fields built on periodic grids.
    pub u_z: Vec<f64>,
    /// r-face velocities, nz*(nr+1).
    pub u_r: Vec<f64>,
    /// Periodic pressure part per volume \[Pa\]; the full pressure is
    /// p − mean_gradient · z.
    pub p: Vec<f64>,
    /// Imposed mean axial pressure gradient G (> 0 drives +z) \[Pa/m\].
    pub mean_gradient: f64,
    pub wall_speed: f64,
    pub frame: Frame,
}

impl FlowField {
    #[inline]
    pub fn uz(&self, i: usize, j: usize) -> f64 {
        self.u_z[i * self.nr + j]
    }
    #[inline]
    pub fn ur(&self, i: usize, j: usize) -> f64 {
        self.u_r[i * (self.nr + 1) + j]
    }

    /// Net volumetric flux through the z-plane at face column i \[m³/s\].
    pub fn flux_through_plane(&self, grid: &AxiGrid, i: usize) -> f64 {
        (0..self.nr)
            .map(|j| grid.ap_z[grid.zface(i, j)] * grid.area_z(j) * self.uz(i, j))
            .sum()
    }

    /// Largest face speed, for CFL bounds.
    pub fn max_speed(&self) -> f64 {
        let a = self.u_z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let b = self.u_r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        a.max(b)
    }

    /// Worst per-group divergence relative to the characteristic flux scale.
    pub fn max_relative_divergence(&self, grid: &AxiGrid) -> f64 {
        let mut div = vec![0.0f64; grid.n_groups];
        let mut scale = vec![0.0f64; grid.n_groups];
        for i in 0..grid.nz {
            for j in 0..grid.nr {
                let g = grid.group_of[grid.idx(i, j)];
                if g == NO_GROUP {
                    continue;
                }
                let g = g as usize;
                let fw = grid.ap_z[grid.zface(i, j)] * grid.area_z(j) * self.uz(i, j);
                let fe = grid.ap_z[grid.zface(i + 1, j)] * grid.area_z(j) * self.uz(i + 1, j);
                let fs = grid.ap_r[grid.rface(i, j)] * grid.area_r(j) * self.ur(i, j);
                let fn_ = grid.ap_r[grid.rface(i, j + 1)] * grid.area_r(j + 1) * self.ur(i, j + 1);
                div[g] += fe - fw + fn_ - fs;
                scale[g] += fe.abs() + fw.abs() + fn_.abs() + fs.abs();
            }
        }
        let flux_scale = scale.iter().cloned().fold(1e-300, f64::max);
        div.iter().map(|d| d.abs() / flux_scale).fold(0.0, f64::max)
    }

    /// Renders the (z, r, u_z, u_r, p) volume-centre dump. Velocities are
    /// face averages; the pressure column carries the full field including
    /// the mean-gradient part.
    pub fn dump_csv(&self, grid: &crate::grid::AxiGrid) -> String {
        let mut out = String::from("z_m,r_m,u_z_m_s,u_r_m_s,p_pa\n");
        for i in 0..self.nz {
            for j in 0..self.nr {
                let z = grid.z_center(i);
                let uz = 0.5 * (self.uz(i, j) + self.uz(i + 1, j));
                let ur = 0.5 * (self.ur(i, j) + self.ur(i, j + 1));
                let p = self.p[i * self.nr + j] - self.mean_gradient * z;
                out.push_str(&format!(
                    "{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}\n",
                    z,
                    grid.r_center(j),
                    uz,
                    ur,
                    p
                ));
            }
        }
        out
    }

    /// Replicates a periodic-domain field n times along z.
    pub fn tile(&self, n: usize) -> FlowField {
        let nz = self.nz * n;
        let mut u_z = Vec::with_capacity((nz + 1) * self.nr);
        for _ in 0..n {
            u_z.extend_from_slice(&self.u_z[0..self.nz * self.nr]);
        }
        u_z.extend_from_slice(&self.u_z[0..self.nr]);
        let mut u_r = Vec::with_capacity(nz * (self.nr + 1));
        let mut p = Vec::with_capacity(nz * self.nr);
        for _ in 0..n {
            u_r.extend_from_slice(&self.u_r[0..self.nz * (self.nr + 1)]);
            p.extend_from_slice(&self.p[0..self.nz * self.nr]);
        }
        FlowField {
            nz,
            nr: self.nr,
            dz: self.dz,
            dr: self.dr,
            u_z,
            u_r,
            p,
            mean_gradient: self.mean_gradient,
            wall_speed: self.wall_speed,
            frame: self.frame,
        }
    }

    /// Overwrites columns [c0, c0 + window.nz) with a window solution and
    /// offsets the pressure east of the window so it stays continuous.
    pub fn implant(&mut self, window: &FlowField, c0: usize) {
        let nr = self.nr;
        let wnz = window.nz;
        for i in 0..=wnz {
            for j in 0..nr {
                self.u_z[(c0 + i) * nr + j] = window.u_z[i * nr + j];
            }
        }
        for i in 0..wnz {
            for j in 0..=nr {
                self.u_r[(c0 + i) * (nr + 1) + j] = window.u_r[i * (nr + 1) + j];
            }
        }
        // Pressure jump across the window relative to the tiled part.
        let mut jump = 0.0;
        let mut count = 0.0;
        let last = wnz - 1;
        for j in 0..nr {
            let tiled = self.p[(c0 + last) * nr + j];
            let win = window.p[last * nr + j];
            jump += win - tiled;
            count += 1.0;
        }
        jump /= count;
        for i in 0..wnz {
            for j in 0..nr {
                self.p[(c0 + i) * nr + j] = window.p[i * nr + j];
            }
        }
        for i in (c0 + wnz)..self.nz {
            for j in 0..nr {
                self.p[i * nr + j] += jump;
            }
        }
    }
}

/// Boundary data for one solve. The factorization depends only on geometry,
/// so one `StokesSolver` serves any number of (wall_speed, gradient) pairs.
#[derive(Debug, Clone)]
pub struct StokesBc {
    pub wall_speed: f64,
    pub mean_gradient: f64,
    pub frame: Frame,
    /// Dirichlet cap data for window solves; `None` on periodic domains.
    pub caps: Option<CapData>,
}

/// Velocities on and just outside the two cap planes of a window, sampled
/// from the surrounding field, plus the pressure pin value.
#[derive(Debug, Clone)]
pub struct CapData {
    /// u_z on the west cap plane, nr values.
    pub west_uz: Vec<f64>,
    /// u_z on the east cap plane.
    pub east_uz: Vec<f64>,
    /// u_r in the ghost column west of the window, nr+1 values.
    pub west_ur: Vec<f64>,
    /// u_r in the ghost column east of the window.
    pub east_ur: Vec<f64>,
    /// Pressure value pinned at the first open volume.
    pub pin_pressure: f64,
}

impl CapData {
    /// Samples cap data for window columns [c0, c1) of a surrounding field.
    pub fn from_field(field: &FlowField, c0: usize, c1: usize) -> CapData {
        let nr = field.nr;
        let west_uz = (0..nr).map(|j| field.uz(c0, j)).collect();
        let east_uz = (0..nr).map(|j| field.uz(c1, j)).collect();
        let west_ur = (0..=nr).map(|j| field.ur(c0 - 1, j)).collect();
        let east_ur = (0..=nr).map(|j| field.ur(c1, j)).collect();
        CapData {
            west_uz,
            east_uz,
            west_ur,
            east_ur,
            pin_pressure: field.p[c0 * nr],
        }
    }
}

/// What a known (non-unknown) quantity in a matrix row refers to.
#[derive(Debug, Clone, Copy)]
enum Known {
    Wall,
    CapUzWest(usize),
    CapUzEast(usize),
    CapUrWest(usize),
    CapUrEast(usize),
    /// Mean-gradient body force; coefficient multiplies G.
    Gradient,
    /// Pressure pin; coefficient multiplies the pin value (already scaled).
    Pin,
}

struct Assembled {
    n: usize,
    kl: usize,
    ku: usize,
    triplets: Vec<(u32, u32, f64)>,
    knowns: Vec<(u32, Known, f64)>,
    /// Unknown index maps.
    uz: Vec<i32>,
    ur: Vec<i32>,
    pg: Vec<i32>,
    /// Pressure scale: p = p_scale * p̂.
    p_scale: f64,
}

/// Factored Stokes operator for one grid.
pub struct StokesSolver<'g> {
    grid: &'g AxiGrid,
    viscosity: f64,
    asm: Assembled,
    band: BandMatrix,
}

impl<'g> StokesSolver<'g> {
    pub fn new(grid: &'g AxiGrid, viscosity: f64) -> Result<Self, StokesError> {
        let asm = assemble(grid, viscosity);
        let mut band = BandMatrix::new(asm.n, asm.kl, asm.ku);
        for &(r, c, v) in &asm.triplets {
            band.add(r as usize, c as usize, v)
                .expect("entry within measured band");
        }
        band.factor()?;
        Ok(Self {
            grid,
            viscosity,
            asm,
            band,
        })
    }

    pub fn solve(&self, bc: &StokesBc) -> FlowField {
        let grid = self.grid;
        let asm = &self.asm;
        let mut rhs = vec![0.0; asm.n];
        let zero_caps = CapData {
            west_uz: vec![],
            east_uz: vec![],
            west_ur: vec![],
            east_ur: vec![],
            pin_pressure: 0.0,
        };
        let caps = bc.caps.as_ref().unwrap_or(&zero_caps);
        for &(row, kind, coeff) in &asm.knowns {
            let value = match kind {
                Known::Wall => bc.wall_speed,
                Known::CapUzWest(j) => caps.west_uz[j],
                Known::CapUzEast(j) => caps.east_uz[j],
                Known::CapUrWest(j) => caps.west_ur[j],
                Known::CapUrEast(j) => caps.east_ur[j],
                Known::Gradient => bc.mean_gradient,
                Known::Pin => caps.pin_pressure / asm.p_scale,
            };
            rhs[row as usize] -= coeff * value;
        }
        self.band.solve(&mut rhs);

        let (nz, nr) = (grid.nz, grid.nr);
        let mut f = FlowField {
            nz,
            nr,
            dz: grid.dz,
            dr: grid.dr,
            u_z: vec![0.0; (nz + 1) * nr],
            u_r: vec![0.0; nz * (nr + 1)],
            p: vec![0.0; nz * nr],
            mean_gradient: bc.mean_gradient,
            wall_speed: bc.wall_speed,
            frame: bc.frame,
        };
        for i in 0..=nz {
            for j in 0..nr {
                let k = asm.uz[i * nr + j];
                f.u_z[i * nr + j] = if k >= 0 {
                    rhs[k as usize]
                } else if grid.periodic_z && i == nz {
                    let k0 = asm.uz[j];
                    if k0 >= 0 {
                        rhs[k0 as usize]
                    } else {
                        0.0
                    }
                } else if let Some(c) = &bc.caps {
                    if i == 0 {
                        c.west_uz[j]
                    } else if i == nz {
                        c.east_uz[j]
                    } else {
                        0.0
                    }
                } else {
                    0.0
                };
            }
        }
        for i in 0..nz {
            for j in 0..=nr {
                let k = asm.ur[i * (nr + 1) + j];
                if k >= 0 {
                    f.u_r[i * (nr + 1) + j] = rhs[k as usize];
                }
            }
        }
        for i in 0..nz {
            for j in 0..nr {
                let g = grid.group_of[grid.idx(i, j)];
                if g != NO_GROUP {
                    let k = asm.pg[g as usize];
                    if k >= 0 {
                        f.p[i * nr + j] = rhs[k as usize] * asm.p_scale;
                    }
                }
            }
        }
        f
    }

    /// Finds the mean gradient giving zero net axial force on the cell.
    ///
    /// The force is affine in G under Stokes linearity, so two solves pin it
    /// and a third verifies the root against the tolerance
    /// 1e-3 · 6πη v r (the free-sphere drag scale).
    pub fn zero_force_gradient(
        &self,
        wall_speed: f64,
        cell_radius: f64,
    ) -> Result<(f64, FlowField), StokesError> {
        let v_cell = wall_speed.abs();
        let probe = if v_cell > 0.0 {
            8.0 * self.viscosity * v_cell / (self.grid.radius * self.grid.radius)
        } else {
            1.0
        };
        let bc0 = StokesBc {
            wall_speed,
            mean_gradient: 0.0,
            frame: Frame::Comoving,
            caps: None,
        };
        let f0 = self.solve(&bc0);
        let force0 = force_on_period_cell(self.grid, &f0, self.viscosity);
        let bc1 = StokesBc {
            mean_gradient: probe,
            ..bc0.clone()
        };
        let f1 = self.solve(&bc1);
        let force1 = force_on_period_cell(self.grid, &f1, self.viscosity);
        let slope = (force1 - force0) / probe;
        if slope.abs() < 1e-300 {
            return Err(StokesError::DegenerateProbe);
        }
        let g_star = -force0 / slope;
        let bc = StokesBc {
            mean_gradient: g_star,
            ..bc0
        };
        let field = self.solve(&bc);
        let residual = force_on_period_cell(self.grid, &field, self.viscosity);
        let tol =
            1e-3 * 6.0 * std::f64::consts::PI * self.viscosity * v_cell.max(1e-12) * cell_radius;
        if residual.abs() > tol {
            return Err(StokesError::ForceResidual {
                force: residual,
                tol,
            });
        }
        Ok((g_star, field))
    }

    /// Finds the gradient that produces the requested net volumetric flux
    /// through the domain (e.g. 0 in the comoving frame for a mean lab speed
    /// equal to the wall speed).
    pub fn gradient_for_flux(
        &self,
        wall_speed: f64,
        frame: Frame,
        target_flux: f64,
    ) -> Result<(f64, FlowField), StokesError> {
        let scale_v = wall_speed.abs().max(1e-6);
        let probe = 8.0 * self.viscosity * scale_v / (self.grid.radius * self.grid.radius);
        let bc0 = StokesBc {
            wall_speed,
            mean_gradient: 0.0,
            frame,
            caps: None,
        };
        let q0 = self.solve(&bc0).flux_through_plane(self.grid, 0);
        let bc1 = StokesBc {
            mean_gradient: probe,
            ..bc0.clone()
        };
        let q1 = self.solve(&bc1).flux_through_plane(self.grid, 0);
        let slope = (q1 - q0) / probe;
        if slope.abs() < 1e-300 {
            return Err(StokesError::DegenerateProbe);
        }
        let g = (target_flux - q0) / slope;
        let bc = StokesBc {
            mean_gradient: g,
            ..bc0
        };
        Ok((g, self.solve(&bc)))
    }
}

/// Axial force report, decomposed into a pressure part (normal stresses and
/// the mean-gradient head) and a viscous part (shear tractions).
#[derive(Debug, Clone)]
pub struct TractionReport {
    /// Total axial force \[N\].
    pub axial_force: f64,
    pub pressure_part: f64,
    pub viscous_part: f64,
    /// Wetted area the force acts on \[m²\].
    pub area: f64,
    /// Optional per-position series (position \[m\], force \[N\]).
    pub samples: Vec<(f64, f64)>,
}

/// Wall shear traction −η ∂u_z/∂r|_R per column, positive = downstream drag
/// on the wall. Quadratic one-sided extraction, exact for parabolic profiles.
pub fn wall_shear_traction(grid: &AxiGrid, flow: &FlowField, viscosity: f64) -> Vec<f64> {
    let nr = grid.nr;
    let h = 0.5 * grid.dr;
    (0..grid.nz)
        .map(|i| {
            let u0 = flow.wall_speed;
            let u1 = flow.uz(i, nr - 1);
            let u2 = flow.uz(i, nr - 2);
            let dudr = (8.0 * u0 - 9.0 * u1 + u2) / (6.0 * h);
            -viscosity * dudr
        })
        .collect()
}

/// Net axial force on the single cell of a periodic one-period domain:
/// the momentum balance reduces to G·πR²L plus the wall shear drag.
pub fn force_on_period_cell(grid: &AxiGrid, flow: &FlowField, viscosity: f64) -> f64 {
    let shear = wall_shear_traction(grid, flow, viscosity);
    let wall_area = 2.0 * std::f64::consts::PI * grid.radius * grid.dz;
    // Traction on the wall is −η ∂u/∂r; the reaction on the fluid is its
    // negative, and the balance gives F_cell = G·πR²L + Σ η ∂u/∂r · dA.
    let wall_on_fluid: f64 = shear.iter().map(|t| -t * wall_area).sum();
    let bore = std::f64::consts::PI * grid.radius * grid.radius * grid.z_extent;
    flow.mean_gradient * bore + wall_on_fluid
}

/// Net axial force on cell `cell_index` of a multi-cell field, from a
/// control-volume momentum balance over the slab between the two pocket
/// planes that bracket the cell.
pub fn force_on_cell(
    grid: &AxiGrid,
    flow: &FlowField,
    viscosity: f64,
    train: &crate::geometry::CellTrain,
    cell_index: usize,
) -> Result<TractionReport, StokesError> {
    if train.front_positions.is_empty() {
        return Err(StokesError::NoCells("force_on_cell needs a cell train"));
    }
    let spacing = train.spacing;
    // Cell k sits inside [k·L, (k+1)·L] with pockets at the multiples.
    let i1 = ((cell_index as f64) * spacing / grid.dz).round() as usize;
    let i2 = (((cell_index + 1) as f64) * spacing / grid.dz).round() as usize;
    if i2 > grid.nz || i1 >= i2 {
        return Err(StokesError::BandOutsideDomain);
    }
    let nr = grid.nr;
    let sigma = |i: usize| -> (f64, f64) {
        // (pressure part, viscous part) of ∫ σ_zz dA at plane i, using the
        // periodic pressure part only; the mean-gradient head is added as a
        // body-force volume term below.
        let mut pres = 0.0;
        let mut visc = 0.0;
        for j in 0..nr {
            let ap = grid.ap_z[grid.zface(i, j)];
            if ap == 0.0 {
                continue;
            }
            let area = ap * grid.area_z(j);
            let p_w = flow.p[(i - 1) * nr + j];
            let p_e = flow.p[i * nr + j];
            pres += -0.5 * (p_w + p_e) * area;
            let dudz = (flow.uz(i + 1, j) - flow.uz(i - 1, j)) / (2.0 * grid.dz);
            visc += 2.0 * viscosity * dudz * area;
        }
        (pres, visc)
    };
    let (p2, v2) = sigma(i2.min(grid.nz - 1).max(1));
    let (p1, v1) = sigma(i1.max(1));
    let shear = wall_shear_traction(grid, flow, viscosity);
    let wall_area = 2.0 * std::f64::consts::PI * grid.radius * grid.dz;
    let mut wall_on_fluid = 0.0;
    for t in &shear[i1..i2] {
        wall_on_fluid += -t * wall_area;
    }
    let mut v_fluid = 0.0;
    for i in i1..i2 {
        for j in 0..nr {
            v_fluid += grid.open_volume(i, j);
        }
    }
    let v_cell = train.shape.volume;
    let g = flow.mean_gradient;
    let pressure_part = (p2 - p1) + g * (v_fluid + v_cell);
    let viscous_part = (v2 - v1) + wall_on_fluid;
    Ok(TractionReport {
        axial_force: pressure_part + viscous_part,
        pressure_part,
        viscous_part,
        area: train.shape.surface,
        samples: Vec::new(),
    })
}

/// Shear force on a wall band of length `band_length` as it slides through
/// one spacing period. Returns the per-position series plus the maximum.
///
/// The band is flush with the wall, so pressure contributes no axial force;
/// the report's pressure part is identically zero and the headline number is
/// pure shear, matching the closed-form 8πηvℓ in an empty vessel.
pub fn force_on_band(
    grid: &AxiGrid,
    flow: &FlowField,
    viscosity: f64,
    band_length: f64,
    band_smoothing: f64,
    period: f64,
    n_samples: usize,
) -> Result<TractionReport, StokesError> {
    if period > grid.z_extent + 1e-12 * grid.z_extent {
        return Err(StokesError::BandOutsideDomain);
    }
    let shear = wall_shear_traction(grid, flow, viscosity);
    let wall_area = 2.0 * std::f64::consts::PI * grid.radius * grid.dz;
    let center0 = 0.5 * grid.z_extent;
    let band = crate::grid::BandTrack {
        center0,
        speed: 0.0,
        length: band_length,
        smoothing: band_smoothing,
        kind: crate::grid::BandKind::Absorbing { rate: 0.0 },
    };
    let mut samples = Vec::with_capacity(n_samples);
    let mut max_force = f64::MIN;
    for k in 0..n_samples {
        let offset = period * (k as f64 / n_samples as f64 - 0.5);
        let mut force = 0.0;
        for (i, t) in shear.iter().enumerate() {
            // Evaluate the band weight periodically around the band centre.
            let mut z = grid.z_center(i) - offset;
            if grid.periodic_z {
                let l = grid.z_extent;
                z -= ((z - center0) / l).round() * l;
            }
            let w = band.weight(z, 0.0);
            if w > 0.0 {
                force += t * w * wall_area;
            }
        }
        samples.push((offset, force));
        max_force = max_force.max(force);
    }
    let area = 2.0 * std::f64::consts::PI * grid.radius * band_length;
    Ok(TractionReport {
        axial_force: max_force,
        pressure_part: 0.0,
        viscous_part: max_force,
        area,
        samples,
    })
}

/// Assembles the saddle-point system for a grid. Unknowns are ordered by
/// column blocks; periodic grids interleave columns from both ends so the
/// wrap coupling stays banded.
fn assemble(grid: &AxiGrid, viscosity: f64) -> Assembled {
    let (nz, nr, dz, dr) = (grid.nz, grid.nr, grid.dz, grid.dr);
    let eta = viscosity;
    let capped = !grid.periodic_z;
    let p_scale = eta / dz;

    // Column visit order.
    let order: Vec<usize> = if capped {
        (0..nz).collect()
    } else {
        let mut o = Vec::with_capacity(nz);
        let (mut lo, mut hi) = (0usize, nz);
        while lo < hi {
            o.push(lo);
            lo += 1;
            if lo < hi {
                hi -= 1;
                o.push(hi);
            }
        }
        o
    };

    // Unknown enumeration.
    let mut uz = vec![-1i32; (nz + 1) * nr];
    let mut ur = vec![-1i32; nz * (nr + 1)];
    let mut pg = vec![-1i32; grid.n_groups];
    let mut n = 0i32;
    for &i in &order {
        // u_z face i (west face of column i). On capped grids face 0 is
        // Dirichlet; the east cap (face nz) never enumerates.
        if !(capped && i == 0) {
            for j in 0..nr {
                if grid.ap_z[grid.zface(i, j)] > 0.0 {
                    uz[i * nr + j] = n;
                    n += 1;
                }
            }
        }
        for j in 1..nr {
            if grid.ap_r[grid.rface(i, j)] > 0.0 {
                ur[i * (nr + 1) + j] = n;
                n += 1;
            }
        }
        for g in 0..grid.n_groups {
            let rep = grid.group_rep[g] as usize;
            if rep / nr == i {
                pg[g] = n;
                n += 1;
            }
        }
    }
    let n = n as usize;

    let mut triplets: Vec<(u32, u32, f64)> = Vec::with_capacity(12 * n);
    let mut knowns: Vec<(u32, Known, f64)> = Vec::new();

    let pidx = |i: usize, j: usize| -> i32 {
        let g = grid.group_of[i * nr + j];
        if g == NO_GROUP {
            -1
        } else {
            pg[g as usize]
        }
    };

    // Pressure pin: first open volume in visit order replaces its group's
    // continuity row.
    let mut pin_group = usize::MAX;
    'outer: for &i in &order {
        for j in 0..nr {
            let g = grid.group_of[grid.idx(i, j)];
            if g != NO_GROUP && grid.class[grid.idx(i, j)] == VolumeClass::Fluid {
                pin_group = g as usize;
                break 'outer;
            }
        }
    }
    assert_ne!(pin_group, usize::MAX, "grid has no fluid volume");

    // --- z-momentum rows ----------------------------------------------
    for i in 0..nz {
        if capped && i == 0 {
            continue;
        }
        for j in 0..nr {
            let row = uz[i * nr + j];
            if row < 0 {
                continue;
            }
            let row = row as u32;
            let theta_face = grid.ap_z[grid.zface(i, j)];
            let area_face = grid.area_z(j);
            let mut diag = 0.0;

            // Column indices west/east of the face.
            let col_w = if i == 0 { nz - 1 } else { i - 1 };
            let col_e = i;

            // West/east viscous exchange through the neighbour mid-planes.
            for (col, face_nb) in [(col_w, i as i32 - 1), (col_e, i as i32 + 1)] {
                let theta = grid.ap_zmid[grid.idx(col, j)];
                let area = grid.area_z(j);
                let c = eta * theta * area / dz;
                if c > 0.0 {
                    // Neighbour u_z face index with wrap/caps.
                    let nb_face = if capped {
                        face_nb
                    } else {
                        (face_nb + nz as i32) % nz as i32
                    };
                    diag -= c;
                    if nb_face >= 0 && nb_face <= nz as i32 {
                        let nbf = nb_face as usize;
                        let k = if nbf == nz {
                            if capped {
                                -1
                            } else {
                                uz[j] // wrap, same as face 0 (never happens: modulo)
                            }
                        } else {
                            uz[nbf * nr + j]
                        };
                        if k >= 0 {
                            triplets.push((row, k as u32, c));
                        } else if capped && nbf == 0 {
                            knowns.push((row, Known::CapUzWest(j), c));
                        } else if capped && nbf == nz {
                            knowns.push((row, Known::CapUzEast(j), c));
                        }
                        // Solid neighbour faces hold u = 0: no entry.
                    }
                }
                let blocked = eta * (1.0 - theta) * area / (0.5 * dz);
                diag -= blocked;
            }
            // North viscous: wall ghost at j = nr−1, else exchange.
            {
                let area = 2.0 * std::f64::consts::PI * ((j + 1) as f64) * dr * dz;
                if j + 1 == nr {
                    let c = eta * area / (0.5 * dr);
                    diag -= c;
                    knowns.push((row, Known::Wall, c));
                } else {
                    let t1 = grid.ap_r[grid.rface(col_w, j + 1)];
                    let t2 = grid.ap_r[grid.rface(col_e, j + 1)];
                    let theta = 0.5 * (t1 + t2);
                    let c = eta * theta * area / dr;
                    if c > 0.0 {
                        diag -= c;
                        let k = uz[i * nr + j + 1];
                        if k >= 0 {
                            triplets.push((row, k as u32, c));
                        }
                    }
                    let blocked = eta * (1.0 - theta) * area / (0.5 * dr);
                    diag -= blocked;
                }
            }
            // South viscous: axis has zero area.
            if j > 0 {
                let area = 2.0 * std::f64::consts::PI * (j as f64) * dr * dz;
                let t1 = grid.ap_r[grid.rface(col_w, j)];
                let t2 = grid.ap_r[grid.rface(col_e, j)];
                let theta = 0.5 * (t1 + t2);
                let c = eta * theta * area / dr;
                if c > 0.0 {
                    diag -= c;
                    let k = uz[i * nr + j - 1];
                    if k >= 0 {
                        triplets.push((row, k as u32, c));
                    }
                }
                let blocked = eta * (1.0 - theta) * area / (0.5 * dr);
                diag -= blocked;
            }

            // Pressure force + mean-gradient body force.
            let pw = pidx(col_w, j);
            let pe = pidx(col_e, j);
            let c_p = theta_face * area_face * p_scale;
            if pw >= 0 {
                triplets.push((row, pw as u32, c_p));
            }
            if pe >= 0 {
                triplets.push((row, pe as u32, -c_p));
            }
            knowns.push((row, Known::Gradient, theta_face * area_face * dz));

            triplets.push((row, row, diag));
        }
    }

    // --- r-momentum rows ----------------------------------------------
    for i in 0..nz {
        for j in 1..nr {
            let row = ur[i * (nr + 1) + j];
            if row < 0 {
                continue;
            }
            let row = row as u32;
            let r_f = j as f64 * dr;
            let theta_face = grid.ap_r[grid.rface(i, j)];
            let mut diag = 0.0;

            // North exchange (towards larger r).
            {
                let theta = grid.ap_rmid[grid.idx(i, j)];
                let area = 2.0 * std::f64::consts::PI * (r_f + 0.5 * dr) * dz;
                let c = eta * theta * area / dr;
                if c > 0.0 {
                    diag -= c;
                    if j + 1 < nr {
                        let k = ur[i * (nr + 1) + j + 1];
                        if k >= 0 {
                            triplets.push((row, k as u32, c));
                        }
                    }
                    // j+1 == nr: wall, u_r = 0.
                }
                let blocked = eta * (1.0 - theta) * area / (0.5 * dr);
                diag -= blocked;
            }
            // South exchange (towards the axis; u_r = 0 at j = 0).
            {
                let theta = grid.ap_rmid[grid.idx(i, j - 1)];
                let area = 2.0 * std::f64::consts::PI * (r_f - 0.5 * dr) * dz;
                let c = eta * theta * area / dr;
                if c > 0.0 {
                    diag -= c;
                    if j > 1 {
                        let k = ur[i * (nr + 1) + j - 1];
                        if k >= 0 {
                            triplets.push((row, k as u32, c));
                        }
                    }
                }
                let blocked = eta * (1.0 - theta) * area / (0.5 * dr);
                diag -= blocked;
            }
            // East/west exchange.
            for dir in [-1i32, 1] {
                let face_col = if dir < 0 { i } else { i + 1 };
                let t1 = if j >= 1 {
                    grid.ap_z[grid.zface(face_col, j - 1)]
                } else {
                    1.0
                };
                let t2 = grid.ap_z[grid.zface(face_col, j)];
                let theta = 0.5 * (t1 + t2);
                let area = 2.0 * std::f64::consts::PI * r_f * dr;
                let c = eta * theta * area / dz;
                if c > 0.0 {
                    diag -= c;
                    let nb = i as i32 + dir;
                    if capped {
                        if nb < 0 {
                            knowns.push((row, Known::CapUrWest(j), c));
                        } else if nb >= nz as i32 {
                            knowns.push((row, Known::CapUrEast(j), c));
                        } else {
                            let k = ur[nb as usize * (nr + 1) + j];
                            if k >= 0 {
                                triplets.push((row, k as u32, c));
                            }
                        }
                    } else {
                        let nb = ((nb + nz as i32) % nz as i32) as usize;
                        let k = ur[nb * (nr + 1) + j];
                        if k >= 0 {
                            triplets.push((row, k as u32, c));
                        }
                    }
                }
                let blocked = eta * (1.0 - theta) * area / (0.5 * dz);
                diag -= blocked;
            }
            // Curvature term −η u_r / r².
            let v_open = theta_face * 2.0 * std::f64::consts::PI * r_f * dr * dz;
            diag -= eta * v_open / (r_f * r_f);

            // Pressure force.
            let ps = pidx(i, j - 1);
            let pn = pidx(i, j);
            let c_p = theta_face * grid.area_r(j) * p_scale;
            if ps >= 0 {
                triplets.push((row, ps as u32, c_p));
            }
            if pn >= 0 {
                triplets.push((row, pn as u32, -c_p));
            }

            triplets.push((row, row, diag));
        }
    }

    // --- continuity rows ------------------------------------------------
    for g in 0..grid.n_groups {
        let prow = pg[g];
        if prow < 0 {
            continue;
        }
        let prow = prow as u32;
        if g == pin_group {
            triplets.push((prow, prow, 1.0));
            knowns.push((prow, Known::Pin, -1.0));
            continue;
        }
        for i in 0..nz {
            for j in 0..nr {
                if grid.group_of[grid.idx(i, j)] != g as u32 {
                    continue;
                }
                // West/east z-faces.
                for (face, sign) in [(i, -1.0f64), (i + 1, 1.0)] {
                    let theta = grid.ap_z[grid.zface(face, j)];
                    if theta == 0.0 {
                        continue;
                    }
                    let coeff = sign * theta * grid.area_z(j) * p_scale;
                    let face_idx = if !capped && face == nz { 0 } else { face };
                    let k = if capped && (face_idx == 0 || face_idx == nz) {
                        -1
                    } else {
                        uz[face_idx * nr + j]
                    };
                    if k >= 0 {
                        triplets.push((prow, k as u32, coeff));
                    } else if capped && face_idx == 0 {
                        knowns.push((prow, Known::CapUzWest(j), coeff));
                    } else if capped && face_idx == nz {
                        knowns.push((prow, Known::CapUzEast(j), coeff));
                    }
                }
                // South/north r-faces (axis and wall are zero).
                for (jf, sign) in [(j, -1.0f64), (j + 1, 1.0)] {
                    if jf == 0 || jf == nr {
                        continue;
                    }
                    let theta = grid.ap_r[grid.rface(i, jf)];
                    if theta == 0.0 {
                        continue;
                    }
                    let k = ur[i * (nr + 1) + jf];
                    if k >= 0 {
                        triplets.push((prow, k as u32, sign * theta * grid.area_r(jf) * p_scale));
                    }
                }
            }
        }
    }

    // Coalesce duplicate entries and measure the band.
    triplets.sort_unstable_by_key(|&(r, c, _)| ((r as u64) << 32) | c as u64);
    let mut merged: Vec<(u32, u32, f64)> = Vec::with_capacity(triplets.len());
    for t in triplets {
        if let Some(last) = merged.last_mut() {
            if last.0 == t.0 && last.1 == t.1 {
                last.2 += t.2;
                continue;
            }
        }
        merged.push(t);
    }
    let mut kl = 0usize;
    let mut ku = 0usize;
    for &(r, c, _) in &merged {
        if r >= c {
            kl = kl.max((r - c) as usize);
        } else {
            ku = ku.max((c - r) as usize);
        }
    }

    Assembled {
        n,
        kl,
        ku,
        triplets: merged,
        knowns,
        uz,
        ur,
        pg,
        p_scale,
    }
}
