//! Staggered axisymmetric grid with cut-cell classification against the cell
//! train and the sensor sphere, plus the moving wall-band tracks.
//!
//! Volumes are annular rings indexed by (axial column i, radial row j) with
//! centres at ((i+1/2)dz, (j+1/2)dr). Velocities live on faces, pressure and
//! concentration at centres. Solid bodies are resolved through open-area
//! fractions (apertures) on faces and open-volume fractions per ring, all
//! computed from closed-form arc intersections rather than point sampling.

use std::io::Write;

use crate::geometry::CellTrain;

#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("resolution {dr} m too coarse for gap {gap} m: need dr <= {required} m for 6 volumes across the gap")]
    TooCoarse { dr: f64, gap: f64, required: f64 },
    #[error("domain extent and radius must be positive")]
    BadDomain,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeClass {
    Fluid,
    Solid,
    Cut,
}

/// Sphere sensor on the vessel axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center_z: f64,
    pub radius: f64,
}

/// Solid bodies a grid is classified against.
#[derive(Debug, Clone, Default)]
pub struct SolidLayout {
    pub train: Option<CellTrain>,
    pub sphere: Option<Sphere>,
}

impl SolidLayout {
    /// Solid radial intervals (inner, outer) at axial position z.
    pub fn radial_intervals(&self, z: f64, out: &mut Vec<(f64, f64)>) {
        out.clear();
        if let Some(train) = &self.train {
            out.extend(train.solid_intervals_at(z));
        }
        if let Some(s) = &self.sphere {
            let d = z - s.center_z;
            if d.abs() <= s.radius {
                out.push((0.0, (s.radius * s.radius - d * d).max(0.0).sqrt()));
            }
        }
    }

    /// Solid axial spans at radial height r.
    pub fn axial_spans(&self, r: f64, out: &mut Vec<(f64, f64)>) {
        out.clear();
        if let Some(train) = &self.train {
            out.extend(train.solid_spans_at_height(r));
        }
        if let Some(s) = &self.sphere {
            if r <= s.radius {
                let g = (s.radius * s.radius - r * r).max(0.0).sqrt();
                out.push((s.center_z - g, s.center_z + g));
            }
        }
    }

    pub fn is_solid(&self, z: f64, r: f64) -> bool {
        if let Some(train) = &self.train {
            if train.is_solid(z, r) {
                return true;
            }
        }
        if let Some(s) = &self.sphere {
            let d = z - s.center_z;
            if d * d + r * r <= s.radius * s.radius {
                return true;
            }
        }
        false
    }

    /// Axial positions inside [z0, z1] where the radial solid measure over
    /// [r0, r1] loses smoothness: arc joins and boundary crossings. Between
    /// consecutive events the measure is an analytic function of z.
    fn event_zs(&self, z0: f64, z1: f64, r0: f64, r1: f64, out: &mut Vec<f64>) {
        out.clear();
        let mut push = |z: f64| {
            if z > z0 && z < z1 {
                out.push(z);
            }
        };
        if let Some(train) = &self.train {
            let sh = &train.shape;
            let joins = [
                0.0,
                sh.outer_radius,
                sh.outer_radius + sh.straight_len - sh.tail_radius,
                sh.outer_radius + sh.straight_len,
                sh.total_length,
            ];
            for &front in &train.front_positions {
                if front - sh.total_length > z1 || front < z0 {
                    continue;
                }
                for &zeta in &joins {
                    push(front - zeta);
                }
                for &r in &[r0, r1] {
                    if let Some((enter, exit)) = sh.solid_span_at_height(r) {
                        push(front - enter);
                        push(front - exit);
                    }
                }
                // Radial heights where the profile kinks cross the band
                // [r0, r1]: tail radius and rim extremes.
                for &y in &[sh.tail_radius, sh.outer_radius - 2.0 * sh.rim_radius] {
                    if y > r0 && y < r1 {
                        if let Some((enter, exit)) = sh.solid_span_at_height(y) {
                            push(front - enter);
                            push(front - exit);
                        }
                    }
                }
            }
        }
        if let Some(s) = &self.sphere {
            push(s.center_z - s.radius);
            push(s.center_z);
            push(s.center_z + s.radius);
            for &r in &[r0, r1] {
                if r <= s.radius {
                    let g = (s.radius * s.radius - r * r).max(0.0).sqrt();
                    push(s.center_z - g);
                    push(s.center_z + g);
                }
            }
        }
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.dedup_by(|a, b| (*a - *b).abs() < 1e-18);
    }
}

pub const NO_GROUP: u32 = u32::MAX;

/// The staggered computational grid. See the module docs for the layout.
#[derive(Debug, Clone)]
pub struct AxiGrid {
    pub nz: usize,
    pub nr: usize,
    pub dz: f64,
    pub dr: f64,
    pub z_extent: f64,
    pub radius: f64,
    pub periodic_z: bool,
    /// Per-volume classification, index i*nr + j.
    pub class: Vec<VolumeClass>,
    /// Open-volume fraction per volume.
    pub vol_frac: Vec<f64>,
    /// Aperture of z-normal faces, (nz+1)*nr; column nz duplicates column 0
    /// on periodic grids.
    pub ap_z: Vec<f64>,
    /// Aperture of r-normal faces, nz*(nr+1).
    pub ap_r: Vec<f64>,
    /// Aperture of the mid-column plane of each volume (staggered CV faces).
    pub ap_zmid: Vec<f64>,
    /// Aperture of the mid-row plane of each volume.
    pub ap_rmid: Vec<f64>,
    /// Pressure/concentration group per volume; NO_GROUP for solid volumes.
    /// Small cut volumes share the group of their largest fluid neighbour.
    pub group_of: Vec<u32>,
    pub n_groups: usize,
    /// Open volume per group \[m³\].
    pub group_volume: Vec<f64>,
    /// Lowest-index member volume of each group.
    pub group_rep: Vec<u32>,
}

impl AxiGrid {
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.nr + j
    }
    #[inline]
    pub fn r_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dr
    }
    #[inline]
    pub fn z_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dz
    }
    /// Metric area of a z-normal face at row j.
    #[inline]
    pub fn area_z(&self, j: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.r_center(j) * self.dr
    }
    /// Metric area of an r-normal face at radial index j (radius j*dr).
    #[inline]
    pub fn area_r(&self, j: usize) -> f64 {
        2.0 * std::f64::consts::PI * (j as f64) * self.dr * self.dz
    }
    /// Full metric volume of a ring at row j.
    #[inline]
    pub fn vol_full(&self, j: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.r_center(j) * self.dr * self.dz
    }
    #[inline]
    pub fn zface(&self, i: usize, j: usize) -> usize {
        i * self.nr + j
    }
    #[inline]
    pub fn rface(&self, i: usize, j: usize) -> usize {
        i * (self.nr + 1) + j
    }
    /// Open volume of one ring \[m³\].
    #[inline]
    pub fn open_volume(&self, i: usize, j: usize) -> f64 {
        self.vol_frac[self.idx(i, j)] * self.vol_full(j)
    }
    pub fn total_fluid_volume(&self) -> f64 {
        let mut v = 0.0;
        for i in 0..self.nz {
            for j in 0..self.nr {
                v += self.open_volume(i, j);
            }
        }
        v
    }

    /// Writes the structured text dump: header plus one classification code
    /// per volume (F/S/C), one axial column per line.
    pub fn write_dump(&self, mut w: impl Write) -> Result<(), GridError> {
        writeln!(
            w,
            "nz = {}\nnr = {}\ndz_m = {:e}\ndr_m = {:e}\nperiodic_z = {}",
            self.nz, self.nr, self.dz, self.dr, self.periodic_z
        )?;
        for i in 0..self.nz {
            let mut line = String::with_capacity(self.nr);
            for j in 0..self.nr {
                line.push(match self.class[self.idx(i, j)] {
                    VolumeClass::Fluid => 'F',
                    VolumeClass::Solid => 'S',
                    VolumeClass::Cut => 'C',
                });
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Replicates a periodic grid n times along z. The result keeps the exact
    /// per-period pattern bit-for-bit and is non-periodic (inlet/outlet ends).
    pub fn tile(&self, n: usize) -> AxiGrid {
        assert!(self.periodic_z, "only periodic grids can be tiled");
        let nz = self.nz * n;
        let mut g = AxiGrid {
            nz,
            nr: self.nr,
            dz: self.dz,
            dr: self.dr,
            z_extent: self.z_extent * n as f64,
            radius: self.radius,
            periodic_z: false,
            class: tile_vec(&self.class, self.nz * self.nr, n),
            vol_frac: tile_vec(&self.vol_frac, self.nz * self.nr, n),
            ap_z: Vec::with_capacity((nz + 1) * self.nr),
            ap_r: tile_vec(&self.ap_r, self.nz * (self.nr + 1), n),
            ap_zmid: tile_vec(&self.ap_zmid, self.nz * self.nr, n),
            ap_rmid: tile_vec(&self.ap_rmid, self.nz * self.nr, n),
            group_of: Vec::new(),
            n_groups: 0,
            group_volume: Vec::new(),
            group_rep: Vec::new(),
        };
        for _ in 0..n {
            g.ap_z.extend_from_slice(&self.ap_z[0..self.nz * self.nr]);
        }
        g.ap_z.extend_from_slice(&self.ap_z[0..self.nr]);
        g.rebuild_groups(0.05);
        g
    }

    /// Recomputes classification for columns [c0, c1) against a new layout
    /// (e.g. after adding the sensor sphere), then rebuilds groups.
    pub fn stamp(&mut self, layout: &SolidLayout, c0: usize, c1: usize, merge_threshold: f64) {
        classify_columns(self, layout, c0, c1);
        snap_consistency(self, c0.saturating_sub(1), (c1 + 1).min(self.nz));
        self.rebuild_groups(merge_threshold);
    }

    /// Extracts columns [c0, c1) as a standalone non-periodic grid.
    pub fn slice(&self, c0: usize, c1: usize, merge_threshold: f64) -> AxiGrid {
        let nz = c1 - c0;
        let nr = self.nr;
        let mut g = AxiGrid {
            nz,
            nr,
            dz: self.dz,
            dr: self.dr,
            z_extent: nz as f64 * self.dz,
            radius: self.radius,
            periodic_z: false,
            class: self.class[c0 * nr..c1 * nr].to_vec(),
            vol_frac: self.vol_frac[c0 * nr..c1 * nr].to_vec(),
            ap_z: self.ap_z[c0 * nr..(c1 + 1) * nr].to_vec(),
            ap_r: self.ap_r[c0 * (nr + 1)..c1 * (nr + 1)].to_vec(),
            ap_zmid: self.ap_zmid[c0 * nr..c1 * nr].to_vec(),
            ap_rmid: self.ap_rmid[c0 * nr..c1 * nr].to_vec(),
            group_of: Vec::new(),
            n_groups: 0,
            group_volume: Vec::new(),
            group_rep: Vec::new(),
        };
        g.rebuild_groups(merge_threshold);
        g
    }

    /// Rebuilds pressure/transport groups: every open volume gets a group,
    /// and volumes with open fraction below `merge_threshold` are merged into
    /// the neighbour behind their largest open face.
    pub fn rebuild_groups(&mut self, merge_threshold: f64) {
        let n = self.nz * self.nr;
        // Union-find parent array.
        let mut parent: Vec<u32> = (0..n as u32).collect();
        fn find(parent: &mut [u32], mut x: u32) -> u32 {
            while parent[x as usize] != x {
                parent[x as usize] = parent[parent[x as usize] as usize];
                x = parent[x as usize];
            }
            x
        }
        // Pass 1: silence open volumes with no open faces at all.
        for i in 0..self.nz {
            for j in 0..self.nr {
                let v = self.idx(i, j);
                if self.vol_frac[v] == 0.0 {
                    continue;
                }
                let aps = self.face_apertures(i, j);
                if !aps.iter().any(|&(ap, _)| ap > 0.0) {
                    self.vol_frac[v] = 0.0;
                    self.class[v] = VolumeClass::Solid;
                }
            }
        }
        // Pass 2: attach small volumes to their largest-open-face neighbour.
        for i in 0..self.nz {
            for j in 0..self.nr {
                let v = self.idx(i, j);
                if self.vol_frac[v] == 0.0 || self.vol_frac[v] >= merge_threshold {
                    continue;
                }
                let mut best: Option<(f64, usize)> = None;
                for &(ap, nb) in self.face_apertures(i, j).iter() {
                    if ap > 0.0 {
                        if let Some(nbv) = nb {
                            if self.vol_frac[nbv] > 0.0 {
                                let score = ap * 1.0; // areas comparable; aperture decides
                                if best.map_or(true, |(b, _)| score > b) {
                                    best = Some((score, nbv));
                                }
                            }
                        }
                    }
                }
                if let Some((_, target)) = best {
                    let rv = find(&mut parent, v as u32);
                    let rt = find(&mut parent, target as u32);
                    if rv != rt {
                        // Attach the small volume's tree under the target's.
                        parent[rv as usize] = rt;
                    }
                }
            }
        }
        // Pass 3: number the groups by root, lowest member first.
        let mut group_of = vec![NO_GROUP; n];
        let mut n_groups = 0usize;
        let mut group_volume: Vec<f64> = Vec::new();
        let mut group_rep: Vec<u32> = Vec::new();
        for v in 0..n {
            if self.vol_frac[v] == 0.0 {
                continue;
            }
            let root = find(&mut parent, v as u32) as usize;
            if group_of[root] == NO_GROUP {
                group_of[root] = n_groups as u32;
                group_volume.push(0.0);
                group_rep.push(v as u32);
                n_groups += 1;
            }
            group_of[v] = group_of[root];
            let j = v % self.nr;
            group_volume[group_of[v] as usize] += self.vol_frac[v] * self.vol_full(j);
        }
        self.group_of = group_of;
        self.n_groups = n_groups;
        self.group_volume = group_volume;
        self.group_rep = group_rep;
    }

    /// The four face apertures of a volume with the neighbouring volume index
    /// (None across the domain boundary): [west, east, south, north].
    fn face_apertures(&self, i: usize, j: usize) -> [(f64, Option<usize>); 4] {
        let west_nb = if i > 0 {
            Some(self.idx(i - 1, j))
        } else if self.periodic_z {
            Some(self.idx(self.nz - 1, j))
        } else {
            None
        };
        let east_nb = if i + 1 < self.nz {
            Some(self.idx(i + 1, j))
        } else if self.periodic_z {
            Some(self.idx(0, j))
        } else {
            None
        };
        let south_nb = if j > 0 {
            Some(self.idx(i, j - 1))
        } else {
            None
        };
        let north_nb = if j + 1 < self.nr {
            Some(self.idx(i, j + 1))
        } else {
            None
        };
        [
            (self.ap_z[self.zface(i, j)], west_nb),
            (self.ap_z[self.zface(i + 1, j)], east_nb),
            (self.ap_r[self.rface(i, j)], south_nb),
            (self.ap_r[self.rface(i, j + 1)], north_nb),
        ]
    }
}

fn tile_vec<T: Clone>(v: &[T], len: usize, n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(len * n);
    for _ in 0..n {
        out.extend_from_slice(&v[0..len]);
    }
    out
}

/// r-weighted fluid measure of the radial span [r0, r1] at axial position z:
/// ∫ r dr over the open part, normalized by (r1² − r0²)/2.
fn radial_open_fraction(
    layout: &SolidLayout,
    z: f64,
    r0: f64,
    r1: f64,
    scratch: &mut Vec<(f64, f64)>,
) -> f64 {
    let full = 0.5 * (r1 * r1 - r0 * r0);
    if full <= 0.0 {
        return 1.0;
    }
    layout.radial_intervals(z, scratch);
    let mut solid = 0.0;
    for &(a, b) in scratch.iter() {
        let lo = a.max(r0);
        let hi = b.min(r1);
        if hi > lo {
            solid += 0.5 * (hi * hi - lo * lo);
        }
    }
    ((full - solid) / full).clamp(0.0, 1.0)
}

/// Fluid fraction of the axial span [z0, z1] at radial height r.
fn axial_open_fraction(
    layout: &SolidLayout,
    r: f64,
    z0: f64,
    z1: f64,
    scratch: &mut Vec<(f64, f64)>,
) -> f64 {
    let full = z1 - z0;
    layout.axial_spans(r, scratch);
    let mut solid = 0.0;
    for &(a, b) in scratch.iter() {
        let lo = a.max(z0);
        let hi = b.min(z1);
        if hi > lo {
            solid += hi - lo;
        }
    }
    ((full - solid) / full).clamp(0.0, 1.0)
}

/// Builds the grid over a cylindrical segment. `z_extent` is divided into
/// `round(z_extent/resolution)` columns; the radius always divides exactly.
pub fn build_grid(
    z_extent: f64,
    radius: f64,
    resolution: f64,
    periodic_z: bool,
    layout: &SolidLayout,
) -> Result<AxiGrid, GridError> {
    if !(z_extent > 0.0 && radius > 0.0 && resolution > 0.0) {
        return Err(GridError::BadDomain);
    }
    let nr = (radius / resolution).round().max(1.0) as usize;
    let dr = radius / nr as f64;
    let nz = (z_extent / resolution).round().max(1.0) as usize;
    let dz = z_extent / nz as f64;
    if let Some(train) = &layout.train {
        let gap = radius - train.shape.outer_radius;
        if gap / dr < 6.0 - 1e-9 {
            return Err(GridError::TooCoarse {
                dr,
                gap,
                required: gap / 6.0,
            });
        }
    }
    let mut grid = AxiGrid {
        nz,
        nr,
        dz,
        dr,
        z_extent,
        radius,
        periodic_z,
        class: vec![VolumeClass::Fluid; nz * nr],
        vol_frac: vec![1.0; nz * nr],
        ap_z: vec![1.0; (nz + 1) * nr],
        ap_r: vec![1.0; nz * (nr + 1)],
        ap_zmid: vec![1.0; nz * nr],
        ap_rmid: vec![1.0; nz * nr],
        group_of: Vec::new(),
        n_groups: 0,
        group_volume: Vec::new(),
        group_rep: Vec::new(),
    };
    classify_columns(&mut grid, layout, 0, nz);
    if periodic_z {
        // The wrap face duplicates column 0.
        for j in 0..nr {
            let (dst, srcf) = (grid.zface(nz, j), grid.zface(0, j));
            grid.ap_z[dst] = grid.ap_z[srcf];
        }
    }
    snap_consistency(&mut grid, 0, nz);
    grid.rebuild_groups(0.05);
    Ok(grid)
}

/// Computes classification, volume fractions and apertures for columns
/// [c0, c1) from closed-form solid intersections.
fn classify_columns(grid: &mut AxiGrid, layout: &SolidLayout, c0: usize, c1: usize) {
    let (nr, dz, dr) = (grid.nr, grid.dz, grid.dr);
    let mut scratch: Vec<(f64, f64)> = Vec::new();
    let mut events: Vec<f64> = Vec::new();
    let has_bodies = layout.train.is_some() || layout.sphere.is_some();
    const EPS: f64 = 1e-12;

    for i in c0..c1 {
        let z0 = i as f64 * dz;
        let z1 = z0 + dz;
        let zmid = z0 + 0.5 * dz;
        for j in 0..nr {
            let r0 = j as f64 * dr;
            let r1 = r0 + dr;
            let v = grid.idx(i, j);
            if !has_bodies {
                grid.vol_frac[v] = 1.0;
                grid.class[v] = VolumeClass::Fluid;
                grid.ap_zmid[v] = 1.0;
                grid.ap_rmid[v] = 1.0;
                continue;
            }
            // Volume fraction: adaptive Simpson over z of the radial open
            // fraction, split where the integrand loses smoothness so the
            // quadrature is exact to rounding.
            layout.event_zs(z0, z1, r0, r1, &mut events);
            let mut acc = 0.0;
            let mut a = z0;
            for k in 0..=events.len() {
                let b = if k < events.len() { events[k] } else { z1 };
                if b > a {
                    let f = |z: f64, s: &mut Vec<(f64, f64)>| {
                        radial_open_fraction(layout, z, r0, r1, s)
                    };
                    acc += adaptive_simpson(&f, a, b, 1e-13 * dz, &mut scratch);
                    a = b;
                }
            }
            let mut frac = acc / dz;
            if frac < EPS {
                frac = 0.0;
            }
            if frac > 1.0 - EPS {
                frac = 1.0;
            }
            grid.vol_frac[v] = frac;
            grid.class[v] = if frac == 0.0 {
                VolumeClass::Solid
            } else if frac == 1.0 {
                VolumeClass::Fluid
            } else {
                VolumeClass::Cut
            };
            grid.ap_zmid[v] = snap(radial_open_fraction(layout, zmid, r0, r1, &mut scratch));
            grid.ap_rmid[v] = snap(axial_open_fraction(
                layout,
                r0 + 0.5 * dr,
                z0,
                z1,
                &mut scratch,
            ));
        }
        // z-faces bounding this column.
        for j in 0..nr {
            let r0 = j as f64 * dr;
            let r1 = r0 + dr;
            let (fw, fe) = (grid.zface(i, j), grid.zface(i + 1, j));
            if has_bodies {
                grid.ap_z[fw] = snap(radial_open_fraction(layout, z0, r0, r1, &mut scratch));
                grid.ap_z[fe] = snap(radial_open_fraction(layout, z1, r0, r1, &mut scratch));
            } else {
                grid.ap_z[fw] = 1.0;
                grid.ap_z[fe] = 1.0;
            }
        }
        // r-faces within this column (the axis face j = 0 has zero area).
        for j in 0..=nr {
            let r = j as f64 * dr;
            let f = grid.rface(i, j);
            grid.ap_r[f] = if has_bodies {
                snap(axial_open_fraction(layout, r, z0, z1, &mut scratch))
            } else {
                1.0
            };
        }
    }
}

/// Adaptive Simpson quadrature over a smooth segment, with scratch reuse.
fn adaptive_simpson(
    f: &dyn Fn(f64, &mut Vec<(f64, f64)>) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    scratch: &mut Vec<(f64, f64)>,
) -> f64 {
    fn rec(
        f: &dyn Fn(f64, &mut Vec<(f64, f64)>) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: usize,
        scratch: &mut Vec<(f64, f64)>,
    ) -> f64 {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm, scratch);
        let frm = f(rm, scratch);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            rec(
                f,
                a,
                fa,
                m,
                fm,
                left,
                lm,
                flm,
                tol / 2.0,
                depth - 1,
                scratch,
            ) + rec(
                f,
                m,
                fm,
                b,
                fb,
                right,
                rm,
                frm,
                tol / 2.0,
                depth - 1,
                scratch,
            )
        }
    }
    let fa = f(a, scratch);
    let fb = f(b, scratch);
    let m = 0.5 * (a + b);
    let fm = f(m, scratch);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, fa, b, fb, whole, m, fm, tol, 28, scratch)
}

fn snap(x: f64) -> f64 {
    const EPS: f64 = 1e-12;
    if x < EPS {
        0.0
    } else if x > 1.0 - EPS {
        1.0
    } else {
        x
    }
}

/// Enforces the aperture consistency rules around fully solid volumes and
/// fully fluid pairs for columns [c0, c1).
fn snap_consistency(grid: &mut AxiGrid, c0: usize, c1: usize) {
    let (nz, nr) = (grid.nz, grid.nr);
    for i in c0..c1 {
        for j in 0..nr {
            let v = grid.idx(i, j);
            if grid.class[v] == VolumeClass::Solid {
                // No flux crosses into a fully solid volume.
                let (fw, fe) = (grid.zface(i, j), grid.zface(i + 1, j));
                let (fs, fn_) = (grid.rface(i, j), grid.rface(i, j + 1));
                grid.ap_z[fw] = 0.0;
                grid.ap_z[fe] = 0.0;
                grid.ap_r[fs] = 0.0;
                grid.ap_r[fn_] = 0.0;
                grid.ap_zmid[v] = 0.0;
                grid.ap_rmid[v] = 0.0;
                if grid.periodic_z {
                    if i == 0 {
                        let f = grid.zface(nz, j);
                        grid.ap_z[f] = 0.0;
                    }
                    if i + 1 == nz {
                        let f = grid.zface(0, j);
                        grid.ap_z[f] = 0.0;
                    }
                }
            }
        }
    }
    // Faces between two fully fluid volumes are fully open.
    for i in c0..c1 {
        for j in 0..nr {
            let v = grid.idx(i, j);
            if grid.class[v] != VolumeClass::Fluid {
                continue;
            }
            if i > 0 && grid.class[grid.idx(i - 1, j)] == VolumeClass::Fluid {
                let f = grid.zface(i, j);
                grid.ap_z[f] = 1.0;
            }
            if j > 0 && grid.class[grid.idx(i, j - 1)] == VolumeClass::Fluid {
                let f = grid.rface(i, j);
                grid.ap_r[f] = 1.0;
            }
        }
    }
}

/// What a moving wall band does: absorb with a Robin coefficient, or emit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandKind {
    /// Absorbing sensor with Robin coefficient k \[m/s\].
    Absorbing { rate: f64 },
    /// Source with emission flux K \[molecules/(s·m²)\].
    Source { flux: f64 },
}

/// A band on the vessel wall that drifts backwards in the comoving frame:
/// center(t) = center(0) − speed·t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandTrack {
    pub center0: f64,
    /// Drift speed (the cell speed; 0 for lab-frame runs).
    pub speed: f64,
    pub length: f64,
    pub smoothing: f64,
    pub kind: BandKind,
}

impl BandTrack {
    pub fn center(&self, t: f64) -> f64 {
        self.center0 - self.speed * t
    }

    /// Smoothed indicator: 1 on the band interior, cosine ramps of width
    /// `smoothing` centred on each edge, 0 outside. The ramps are symmetric,
    /// so ∫ weight dz equals the band length exactly.
    pub fn weight(&self, z: f64, t: f64) -> f64 {
        let x = (z - self.center(t)).abs();
        let half = 0.5 * self.length;
        let w = self.smoothing;
        if x <= half - 0.5 * w {
            1.0
        } else if x >= half + 0.5 * w {
            0.0
        } else {
            0.5 * (1.0 + (std::f64::consts::PI * (x - (half - 0.5 * w)) / w).cos())
        }
    }

    /// Moves the nominal centre, used by the periodic shift.
    pub fn rebase(&mut self, dz: f64) {
        self.center0 += dz;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_train, solve_shape, CellShape};

    const UM: f64 = 1.0e-6;

    fn v1_train(n_cells: usize) -> CellTrain {
        let shape = solve_shape(3.0 * UM, 0.9 * UM, 90.0e-18, 135.0e-12).unwrap();
        build_train(shape, 12.732e-6, n_cells).unwrap()
    }

    #[test]
    fn empty_vessel_is_all_fluid() {
        let g = build_grid(12.0 * UM, 3.0 * UM, 0.1 * UM, true, &SolidLayout::default()).unwrap();
        assert_eq!(g.nr, 30);
        assert!(g.class.iter().all(|&c| c == VolumeClass::Fluid));
        assert!(g.vol_frac.iter().all(|&f| f == 1.0));
        assert!(g.ap_z.iter().all(|&a| a == 1.0));
        assert!(g.ap_r.iter().all(|&a| a == 1.0));
        assert_eq!(g.n_groups, g.nz * g.nr);
        // dr divides R exactly by construction.
        assert!((g.dr * g.nr as f64 - g.radius).abs() < 1e-25);
    }

    #[test]
    fn gap_rows_are_fluid_over_the_straight_segment() {
        let train = v1_train(1);
        let layout = SolidLayout {
            train: Some(train.clone()),
            sphere: None,
        };
        let g = build_grid(train.spacing, 3.0 * UM, 0.1 * UM, true, &layout).unwrap();
        // Column through the straight segment: nose − r − a/2 from the front.
        let z =
            train.front_positions[0] - train.shape.outer_radius - 0.5 * train.shape.straight_len;
        let i = (z / g.dz) as usize;
        let mut fluid_rows = 0;
        let mut solid_rows = 0;
        for j in 0..g.nr {
            match g.class[g.idx(i, j)] {
                VolumeClass::Fluid => fluid_rows += 1,
                VolumeClass::Solid => solid_rows += 1,
                VolumeClass::Cut => {}
            }
        }
        // Gap of 0.9 µm spans 9 rows of 0.1 µm above the profile.
        assert_eq!(fluid_rows, 9, "fluid rows in the gap");
        assert!(
            solid_rows >= 20,
            "profile interior is solid, got {solid_rows}"
        );
    }

    #[test]
    fn sphere_blocks_a_ten_row_disk_on_axis() {
        let layout = SolidLayout {
            train: None,
            sphere: Some(Sphere {
                center_z: 6.0 * UM,
                radius: 1.0 * UM,
            }),
        };
        let g = build_grid(12.0 * UM, 3.0 * UM, 0.1 * UM, false, &layout).unwrap();
        let i = (6.0 * UM / g.dz) as usize;
        let solid: usize = (0..g.nr)
            .filter(|&j| g.class[g.idx(i, j)] == VolumeClass::Solid)
            .count();
        // Rows with centre radius below 1 µm: j = 0..9.
        assert!(
            (9..=10).contains(&solid),
            "expected a ~10-row solid disk, got {solid}"
        );
    }

    #[test]
    fn classification_matches_dense_point_sampling() {
        let train = v1_train(1);
        let layout = SolidLayout {
            train: Some(train.clone()),
            sphere: Some(Sphere {
                center_z: 0.2 * UM,
                radius: 1.0 * UM,
            }),
        };
        let g = build_grid(train.spacing, 3.0 * UM, 0.15 * UM, true, &layout).unwrap();
        for i in 0..g.nz {
            for j in 0..g.nr {
                // r-weighted 24x24 sampling oracle.
                let mut fluid = 0.0;
                let mut total = 0.0;
                for a in 0..24 {
                    for b in 0..24 {
                        let z = (i as f64 + (a as f64 + 0.5) / 24.0) * g.dz;
                        let r = (j as f64 + (b as f64 + 0.5) / 24.0) * g.dr;
                        total += r;
                        if !layout.is_solid(z, r) {
                            fluid += r;
                        }
                    }
                }
                let oracle = fluid / total;
                let got = g.vol_frac[g.idx(i, j)];
                assert!(
                    (got - oracle).abs() < 0.08,
                    "volume fraction mismatch at ({i},{j}): {got} vs oracle {oracle}"
                );
            }
        }
    }

    #[test]
    fn classified_fluid_volume_matches_the_analytic_value() {
        // Volume fractions come from event-split quadrature of closed-form
        // intersections, so the classified fluid volume matches
        // π R² L − V_cell at every resolution; refinement changes it only at
        // rounding level, well inside the O(dr²) budget.
        let train = v1_train(1);
        let exact = std::f64::consts::PI * (3.0 * UM).powi(2) * train.spacing - train.shape.volume;
        let mut prev: Option<f64> = None;
        for &res in &[0.1 * UM, 0.05 * UM, 0.025 * UM] {
            let layout = SolidLayout {
                train: Some(train.clone()),
                sphere: None,
            };
            let g = build_grid(train.spacing, 3.0 * UM, res, true, &layout).unwrap();
            let v = g.total_fluid_volume();
            assert!(
                (v - exact).abs() / exact < 1e-9,
                "res {res}: {v} vs {exact}"
            );
            if let Some(p) = prev {
                assert!((v - p).abs() / exact < 1e-9);
            }
            prev = Some(v);
        }
    }

    #[test]
    fn solid_adjacent_faces_are_blocked_and_fluid_faces_open() {
        let train = v1_train(1);
        let layout = SolidLayout {
            train: Some(train.clone()),
            sphere: None,
        };
        let g = build_grid(train.spacing, 3.0 * UM, 0.1 * UM, true, &layout).unwrap();
        for i in 0..g.nz {
            for j in 0..g.nr {
                if g.class[g.idx(i, j)] == VolumeClass::Solid {
                    assert_eq!(g.ap_z[g.zface(i, j)], 0.0);
                    assert_eq!(g.ap_z[g.zface(i + 1, j)], 0.0);
                    assert_eq!(g.ap_r[g.rface(i, j)], 0.0);
                    assert_eq!(g.ap_r[g.rface(i, j + 1)], 0.0);
                }
                if g.class[g.idx(i, j)] == VolumeClass::Fluid && i > 0 {
                    if g.class[g.idx(i - 1, j)] == VolumeClass::Fluid {
                        assert_eq!(g.ap_z[g.zface(i, j)], 1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn small_cut_volumes_share_a_neighbour_group() {
        let train = v1_train(1);
        let layout = SolidLayout {
            train: Some(train.clone()),
            sphere: None,
        };
        let mut g = build_grid(train.spacing, 3.0 * UM, 0.1 * UM, true, &layout).unwrap();
        g.rebuild_groups(0.05);
        for i in 0..g.nz {
            for j in 0..g.nr {
                let v = g.idx(i, j);
                if g.vol_frac[v] > 0.0 && g.vol_frac[v] < 0.05 {
                    let gid = g.group_of[v];
                    assert_ne!(gid, NO_GROUP);
                    let members: Vec<usize> =
                        (0..g.nz * g.nr).filter(|&w| g.group_of[w] == gid).collect();
                    assert!(members.len() >= 2, "small volume ({i},{j}) left alone");
                }
            }
        }
    }

    #[test]
    fn tiling_replicates_the_period_exactly() {
        let train = v1_train(1);
        let layout = SolidLayout {
            train: Some(train.clone()),
            sphere: None,
        };
        let g = build_grid(train.spacing, 3.0 * UM, 0.1 * UM, true, &layout).unwrap();
        let t = g.tile(4);
        assert_eq!(t.nz, 4 * g.nz);
        assert!(!t.periodic_z);
        for rep in 0..4 {
            for i in 0..g.nz {
                for j in 0..g.nr {
                    assert_eq!(
                        t.vol_frac[t.idx(rep * g.nz + i, j)],
                        g.vol_frac[g.idx(i, j)]
                    );
                    assert_eq!(t.ap_z[t.zface(rep * g.nz + i, j)], g.ap_z[g.zface(i, j)]);
                }
            }
        }
        for j in 0..g.nr {
            assert_eq!(t.ap_z[t.zface(t.nz, j)], g.ap_z[g.zface(0, j)]);
        }
    }

    #[test]
    fn too_coarse_resolution_is_rejected_with_remedy() {
        let train = v1_train(1);
        let layout = SolidLayout {
            train: Some(train),
            sphere: None,
        };
        match build_grid(12.732 * UM, 3.0 * UM, 0.3 * UM, true, &layout) {
            Err(GridError::TooCoarse { required, .. }) => {
                assert!(required <= 0.9 * UM / 6.0 + 1e-12 * UM);
            }
            other => panic!("expected TooCoarse, got {other:?}"),
        }
    }

    #[test]
    fn band_weight_profile_and_integral() {
        let band = BandTrack {
            center0: 10.0 * UM,
            speed: 1.0e-3,
            length: 2.0 * UM,
            smoothing: 0.2 * UM,
            kind: BandKind::Absorbing { rate: 1.0 },
        };
        // Centre → 1; edge → 0.5 (midpoint of the ramp).
        assert_eq!(band.weight(10.0 * UM, 0.0), 1.0);
        let edge = 10.0 * UM + 1.0 * UM;
        assert!((band.weight(edge, 0.0) - 0.5).abs() < 1e-12);
        assert_eq!(band.weight(12.0 * UM, 0.0), 0.0);
        // ∫ weight dz = ℓ for the 2 µm band.
        let n = 400_000;
        let z0 = 8.0 * UM;
        let z1 = 12.0 * UM;
        let h = (z1 - z0) / n as f64;
        let mut integral = 0.5 * (band.weight(z0, 0.0) + band.weight(z1, 0.0));
        for k in 1..n {
            integral += band.weight(z0 + k as f64 * h, 0.0);
        }
        integral *= h;
        assert!(
            (integral - band.length).abs() < 1e-6 * band.length,
            "integral {integral}"
        );
    }

    #[test]
    fn band_weight_translates_with_the_drift() {
        let band = BandTrack {
            center0: 10.0 * UM,
            speed: 1.0e-3,
            length: 2.0 * UM,
            smoothing: 0.2 * UM,
            kind: BandKind::Absorbing { rate: 1.0 },
        };
        // The band drifts toward −z: weight(z, t) = weight(z − v·Δt, t + Δt).
        let dt = 1.7e-3;
        for k in 0..200 {
            let z = (5.0 + 0.05 * k as f64) * UM;
            let a = band.weight(z, 2.0e-3);
            let b = band.weight(z - band.speed * dt, 2.0e-3 + dt);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_rim_shape_classifies_cleanly() {
        // s = r leaves a capsule with a flat rear dimple; make sure the
        // classifier handles the q = 0 edge case.
        let shape = CellShape::from_parameters(2.0 * UM, 6.0 * UM, 2.0 * UM).unwrap();
        let train = build_train(shape, 12.732e-6, 1).unwrap();
        let layout = SolidLayout {
            train: Some(train),
            sphere: None,
        };
        let g = build_grid(12.732 * UM, 3.0 * UM, 0.1 * UM, true, &layout).unwrap();
        assert!(g.class.iter().any(|&c| c == VolumeClass::Solid));
    }
}
