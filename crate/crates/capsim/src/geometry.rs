//! Rigid axisymmetric cell profile and the constraint solver that sizes it.
//!
//! The meridional generating curve has four pieces, nose to tail:
//!
//! 1. a quarter-circle of radius `r` from the axis up to the widest point,
//! 2. a straight segment of length `a` parallel to the axis at radius `r`,
//! 3. a half-circle rim of radius `q` that wraps around the trailing edge,
//!    ending at radius `s` with an axial tangent,
//! 4. a quarter-circle of radius `s` centred on the axis that curves forward
//!    to meet the axis, carving the concave rear dimple.
//!
//! Adjacent pieces meet with continuous slope, which forces `q = (r − s)/2`
//! and leaves exactly three free parameters. `r` is set by the flow gap at
//! the wall; `a` and `s` are solved from the cell volume and surface-area
//! targets. All pieces are arcs or lines, so the volume and surface of the
//! solid of revolution have closed forms.

use std::f64::consts::PI;

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("speed must be non-negative, got {0} m/s")]
    NegativeSpeed(f64),
    #[error("tail radius s = {s} must satisfy 0 < s <= r = {r}")]
    BadTailRadius { s: f64, r: f64 },
    #[error("axial offset {zeta} is outside the cell span [0, {len}]")]
    OutsideCell { zeta: f64, len: f64 },
    #[error("targets infeasible for this gap: {0}")]
    Infeasible(String),
    #[error("shape solve did not converge after {iters} iterations (residuals {res_v:.3e}, {res_s:.3e})")]
    NoConvergence {
        iters: usize,
        res_v: f64,
        res_s: f64,
    },
    #[error("cells overlap: total length {len} m exceeds spacing {spacing} m")]
    Overlap { len: f64, spacing: f64 },
    #[error("train needs at least one cell")]
    EmptyTrain,
}

/// Wall gap as a function of cell speed, from the standard 3 µm-vessel table.
///
/// Speeds between table entries are linearly interpolated; speeds outside
/// [0.2, 2] mm/s clamp to the nearest entry and set `clamped`.
pub fn gap_for_speed(cell_speed: f64) -> Result<GapEstimate, GeometryError> {
    const TABLE: [(f64, f64); 3] = [(0.2e-3, 0.7e-6), (1.0e-3, 0.9e-6), (2.0e-3, 1.0e-6)];
    if cell_speed < 0.0 {
        return Err(GeometryError::NegativeSpeed(cell_speed));
    }
    if cell_speed <= TABLE[0].0 {
        return Ok(GapEstimate {
            gap: TABLE[0].1,
            clamped: cell_speed < TABLE[0].0,
        });
    }
    if cell_speed >= TABLE[2].0 {
        return Ok(GapEstimate {
            gap: TABLE[2].1,
            clamped: cell_speed > TABLE[2].0,
        });
    }
    for w in TABLE.windows(2) {
        let (v0, g0) = w[0];
        let (v1, g1) = w[1];
        if cell_speed <= v1 {
            let f = (cell_speed - v0) / (v1 - v0);
            return Ok(GapEstimate {
                gap: g0 + f * (g1 - g0),
                clamped: false,
            });
        }
    }
    unreachable!()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapEstimate {
    pub gap: f64,
    pub clamped: bool,
}

/// A solved cell profile. All lengths in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellShape {
    /// Outer profile radius r = R − gap.
    pub outer_radius: f64,
    /// Straight-segment length a.
    pub straight_len: f64,
    /// Trailing quarter-circle radius s.
    pub tail_radius: f64,
    /// Rear rim half-circle radius q = (r − s)/2.
    pub rim_radius: f64,
    /// Axial extent r + a + q.
    pub total_length: f64,
    /// Volume of the solid of revolution \[m³\].
    pub volume: f64,
    /// Surface area of the solid of revolution \[m²\].
    pub surface: f64,
}

/// Closed-form volume and surface area for profile parameters (r, a, s).
///
/// The front cap is a hemisphere, the rim ring a half-torus, and the rear
/// dimple a spherical zone, so both integrals reduce to elementary terms.
/// In the degenerate rim case s = r the cap volume exactly cancels the
/// dimple and V = π r² a.
pub fn volume_and_surface(r: f64, a: f64, s: f64) -> Result<(f64, f64), GeometryError> {
    if !(s > 0.0 && s <= r) {
        return Err(GeometryError::BadTailRadius { s, r });
    }
    let q = (r - s) / 2.0;
    let volume = (2.0 / 3.0) * PI * r.powi(3) + PI * r * r * a - (2.0 / 3.0) * PI * s.powi(3)
        + PI * PI * q * q * (r - q);
    let surface =
        2.0 * PI * r * r + 2.0 * PI * r * a + 2.0 * PI * PI * q * (r - q) + 2.0 * PI * s * s;
    Ok((volume, surface))
}

impl CellShape {
    /// Builds a shape directly from (r, a, s), computing the derived fields.
    pub fn from_parameters(r: f64, a: f64, s: f64) -> Result<Self, GeometryError> {
        let (volume, surface) = volume_and_surface(r, a, s)?;
        if a + 1e-12 * r < s {
            return Err(GeometryError::Infeasible(format!(
                "straight segment a = {a} shorter than tail radius s = {s}; the dimple would reach the nose cap"
            )));
        }
        let q = (r - s) / 2.0;
        Ok(Self {
            outer_radius: r,
            straight_len: a,
            tail_radius: s,
            rim_radius: q,
            total_length: r + a + q,
            volume,
            surface,
        })
    }

    /// Outer profile radius y(ζ) at axial offset ζ from the nose.
    pub fn outer_radius_at(&self, zeta: f64) -> Result<f64, GeometryError> {
        let (r, a, q) = (self.outer_radius, self.straight_len, self.rim_radius);
        if !(0.0..=self.total_length).contains(&zeta) {
            return Err(GeometryError::OutsideCell {
                zeta,
                len: self.total_length,
            });
        }
        Ok(if zeta <= r {
            (zeta * (2.0 * r - zeta)).max(0.0).sqrt()
        } else if zeta <= r + a {
            r
        } else {
            let d = zeta - (r + a);
            (r - q) + (q * q - d * d).max(0.0).sqrt()
        })
    }

    /// Solid radial interval (inner, outer) at axial offset ζ, or `None`
    /// outside the body. The interval is annular in the dimple and rim
    /// regions and reaches the axis elsewhere.
    pub fn solid_interval_at(&self, zeta: f64) -> Option<(f64, f64)> {
        let (r, a, s, q) = (
            self.outer_radius,
            self.straight_len,
            self.tail_radius,
            self.rim_radius,
        );
        if !(0.0..=self.total_length).contains(&zeta) {
            return None;
        }
        if zeta <= r {
            Some((0.0, (zeta * (2.0 * r - zeta)).max(0.0).sqrt()))
        } else if zeta <= r + a - s {
            Some((0.0, r))
        } else if zeta <= r + a {
            let d = r + a - zeta;
            Some(((s * s - d * d).max(0.0).sqrt(), r))
        } else {
            let d = zeta - (r + a);
            let g = (q * q - d * d).max(0.0).sqrt();
            Some(((r - q) - g, (r - q) + g))
        }
    }

    /// Solid axial interval (ζ_enter, ζ_exit) at radial height y, or `None`
    /// above the profile. Used for exact face apertures.
    pub fn solid_span_at_height(&self, y: f64) -> Option<(f64, f64)> {
        let (r, a, s, q) = (
            self.outer_radius,
            self.straight_len,
            self.tail_radius,
            self.rim_radius,
        );
        if y < 0.0 || y > r {
            return None;
        }
        let enter = r - (r * r - y * y).max(0.0).sqrt();
        let exit = if y >= s {
            let d = y - (r - q);
            r + a + (q * q - d * d).max(0.0).sqrt()
        } else {
            r + a - (s * s - y * y).max(0.0).sqrt()
        };
        Some((enter, exit))
    }

    /// True if the meridional point (ζ, y) lies inside the body.
    pub fn is_solid(&self, zeta: f64, y: f64) -> bool {
        match self.solid_interval_at(zeta) {
            Some((inner, outer)) => y >= inner && y <= outer,
            None => false,
        }
    }

    /// Samples the generating curve nose-to-tail as a polyline of (ζ, y)
    /// pairs, `n` points per arc, for dumps and quadrature cross-checks.
    pub fn sample_curve(&self, n_per_piece: usize) -> Vec<(f64, f64)> {
        let (r, a, s, q) = (
            self.outer_radius,
            self.straight_len,
            self.tail_radius,
            self.rim_radius,
        );
        let n = n_per_piece.max(2);
        let mut pts = Vec::with_capacity(4 * n);
        // Front cap: circle centred (r, 0), φ from π to π/2.
        for i in 0..n {
            let phi = PI - (PI / 2.0) * (i as f64) / ((n - 1) as f64);
            pts.push((r + r * phi.cos(), r * phi.sin()));
        }
        // Straight segment.
        for i in 1..n {
            pts.push((r + a * (i as f64) / ((n - 1) as f64), r));
        }
        // Rim half-circle: centre (r + a, r − q), φ from π/2 to −π/2.
        for i in 1..n {
            let phi = PI / 2.0 - PI * (i as f64) / ((n - 1) as f64);
            pts.push((r + a + q * phi.cos(), (r - q) + q * phi.sin()));
        }
        // Rear dimple: circle centred (r + a, 0), φ from π/2 to π.
        for i in 1..n {
            let phi = PI / 2.0 + (PI / 2.0) * (i as f64) / ((n - 1) as f64);
            pts.push((r + a + s * phi.cos(), s * phi.sin()));
        }
        pts
    }
}

/// Solves (a, s) so the profile with r = R − gap meets the volume and
/// surface targets, by damped Newton iteration with the analytic Jacobian.
pub fn solve_shape(
    vessel_radius: f64,
    gap: f64,
    volume_target: f64,
    surface_target: f64,
) -> Result<CellShape, GeometryError> {
    let r = vessel_radius - gap;
    if !(r > 0.0) {
        return Err(GeometryError::Infeasible(format!(
            "gap {gap} m leaves no cell radius inside vessel radius {vessel_radius} m"
        )));
    }
    // A sphere is the smallest surface enclosing the volume; targets below
    // that bound can never be met.
    let min_surface = (36.0 * PI * volume_target * volume_target).cbrt();
    if surface_target < min_surface {
        return Err(GeometryError::Infeasible(format!(
            "surface target {surface_target} m² below the spherical bound {min_surface:.3e} m²"
        )));
    }

    let mut a = volume_target / (PI * r * r);
    let mut s = r / 2.0;
    let scale_v = volume_target;
    let scale_s = surface_target;
    let residual = |a: f64, s: f64| -> (f64, f64) {
        let q = (r - s) / 2.0;
        let v = (2.0 / 3.0) * PI * r.powi(3) + PI * r * r * a - (2.0 / 3.0) * PI * s.powi(3)
            + PI * PI * q * q * (r - q);
        let su =
            2.0 * PI * r * r + 2.0 * PI * r * a + 2.0 * PI * PI * q * (r - q) + 2.0 * PI * s * s;
        (
            (v - volume_target) / scale_v,
            (su - surface_target) / scale_s,
        )
    };

    let max_iters = 100;
    let (mut f1, mut f2) = residual(a, s);
    for iter in 0..max_iters {
        let norm = f1.abs().max(f2.abs());
        if norm < 1e-13 {
            let shape = CellShape::from_parameters(r, a, s)?;
            debug_assert!((shape.volume - volume_target).abs() / volume_target < 1e-10);
            return Ok(shape);
        }
        let q = (r - s) / 2.0;
        let j11 = PI * r * r / scale_v;
        let j12 = (-2.0 * PI * s * s - (PI * PI / 2.0) * q * (2.0 * r - 3.0 * q)) / scale_v;
        let j21 = 2.0 * PI * r / scale_s;
        let j22 = (4.0 - PI) * PI * s / scale_s;
        let det = j11 * j22 - j12 * j21;
        if det.abs() < 1e-300 {
            return Err(GeometryError::NoConvergence {
                iters: iter,
                res_v: f1 * scale_v,
                res_s: f2 * scale_s,
            });
        }
        let da = (-f1 * j22 + f2 * j12) / det;
        let ds = (-f2 * j11 + f1 * j21) / det;

        // Backtracking line search, keeping iterates inside 0 < s <= r, a > 0.
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let an = a + lambda * da;
            let sn = (s + lambda * ds).clamp(1e-6 * r, r);
            if an > 0.0 {
                let (g1, g2) = residual(an, sn);
                if g1.abs().max(g2.abs()) < norm {
                    a = an;
                    s = sn;
                    f1 = g1;
                    f2 = g2;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(GeometryError::NoConvergence {
                iters: iter,
                res_v: f1 * scale_v,
                res_s: f2 * scale_s,
            });
        }
    }
    Err(GeometryError::NoConvergence {
        iters: max_iters,
        res_v: f1 * scale_v,
        res_s: f2 * scale_s,
    })
}

/// A single-file train of identical cells at uniform spacing.
///
/// Bodies are centred inside consecutive spacing periods, so the open pockets
/// between cells are centred on integer multiples of the spacing. Domain
/// boundaries placed at multiples of the spacing therefore cut mid-pocket,
/// well away from any cell surface.
#[derive(Debug, Clone)]
pub struct CellTrain {
    pub shape: CellShape,
    pub spacing: f64,
    /// Axial nose position of each cell, ascending.
    pub front_positions: Vec<f64>,
}

/// Places `n_cells` copies at spacing `spacing` (fronts in arithmetic
/// progression), centred in the periods of a domain of length
/// `n_cells * spacing`.
pub fn build_train(
    shape: CellShape,
    spacing: f64,
    n_cells: usize,
) -> Result<CellTrain, GeometryError> {
    if n_cells == 0 {
        return Err(GeometryError::EmptyTrain);
    }
    if !(shape.total_length < spacing) {
        return Err(GeometryError::Overlap {
            len: shape.total_length,
            spacing,
        });
    }
    let first_front = (spacing + shape.total_length) / 2.0;
    let front_positions = (0..n_cells)
        .map(|j| first_front + j as f64 * spacing)
        .collect();
    Ok(CellTrain {
        shape,
        spacing,
        front_positions,
    })
}

impl CellTrain {
    /// Domain length that holds the train with mid-pocket boundaries.
    pub fn domain_length(&self) -> f64 {
        self.spacing * self.front_positions.len() as f64
    }

    /// True if the point (z, radius) lies inside any cell body. The nose of
    /// each cell is its leading (largest-z) point.
    pub fn is_solid(&self, z: f64, radius: f64) -> bool {
        self.front_positions.iter().any(|&front| {
            let zeta = front - z;
            zeta >= 0.0 && zeta <= self.shape.total_length && self.shape.is_solid(zeta, radius)
        })
    }

    /// Solid z-intervals at radial height `radius`, ascending and disjoint.
    pub fn solid_spans_at_height(&self, radius: f64) -> Vec<(f64, f64)> {
        match self.shape.solid_span_at_height(radius) {
            None => Vec::new(),
            Some((enter, exit)) => self
                .front_positions
                .iter()
                .map(|&front| (front - exit, front - enter))
                .collect(),
        }
    }

    /// Solid radial intervals at axial position z, one per overlapping body.
    pub fn solid_intervals_at(&self, z: f64) -> Vec<(f64, f64)> {
        self.front_positions
            .iter()
            .filter_map(|&front| {
                let zeta = front - z;
                if (0.0..=self.shape.total_length).contains(&zeta) {
                    self.shape.solid_interval_at(zeta)
                } else {
                    None
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const UM: f64 = 1.0e-6;
    const UM3: f64 = 1.0e-18;
    const UM2: f64 = 1.0e-12;

    /// Adaptive Simpson quadrature, used as the independent oracle.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
            let m = 0.5 * (a + b);
            let fm = f(m);
            ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
        }
        fn rec(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            fa: f64,
            b: f64,
            fb: f64,
            whole: f64,
            m: f64,
            fm: f64,
            tol: f64,
            depth: usize,
        ) -> f64 {
            let (left, lm, flm) = simpson(f, a, fa, m, fm);
            let (right, rm, frm) = simpson(f, m, fm, b, fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
                    + rec(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
            }
        }
        let fa = f(a);
        let fb = f(b);
        let (whole, m, fm) = simpson(f, a, fa, b, fb);
        rec(f, a, fa, b, fb, whole, m, fm, tol, 40)
    }

    /// Volume oracle: π ∫ (y_out² − y_in²) dζ from the profile query alone,
    /// integrated piecewise between the arc joins.
    fn volume_by_quadrature(shape: &CellShape) -> f64 {
        let (r, a, s) = (shape.outer_radius, shape.straight_len, shape.tail_radius);
        let joins = [0.0, r, r + a - s, r + a, shape.total_length];
        let integrand = |z: f64| -> f64 {
            match shape.solid_interval_at(z) {
                Some((inner, outer)) => outer * outer - inner * inner,
                None => 0.0,
            }
        };
        let mut total = 0.0;
        for w in joins.windows(2) {
            total += adaptive_simpson(&integrand, w[0], w[1], 1e-16 * UM3);
        }
        PI * total
    }

    /// Surface oracle: 2π ∫ y ds along the polyline, Richardson-extrapolated.
    fn surface_by_quadrature(shape: &CellShape) -> f64 {
        let sum = |n: usize| -> f64 {
            let pts = shape.sample_curve(n);
            pts.windows(2)
                .map(|w| {
                    let (z0, y0) = w[0];
                    let (z1, y1) = w[1];
                    let ds = ((z1 - z0).powi(2) + (y1 - y0).powi(2)).sqrt();
                    PI * (y0 + y1) * ds
                })
                .sum()
        };
        let coarse = sum(4000);
        let fine = sum(8000);
        fine + (fine - coarse) / 3.0
    }

    #[test]
    fn gap_table_endpoints_and_interpolation() {
        assert_eq!(gap_for_speed(0.2e-3).unwrap().gap, 0.7e-6);
        assert_eq!(gap_for_speed(1.0e-3).unwrap().gap, 0.9e-6);
        assert_eq!(gap_for_speed(2.0e-3).unwrap().gap, 1.0e-6);
        // Halfway between the first two rows.
        let g = gap_for_speed(0.6e-3).unwrap();
        assert!((g.gap - 0.8e-6).abs() < 1e-12);
        assert!(!g.clamped);
        let lo = gap_for_speed(0.05e-3).unwrap();
        assert_eq!(lo.gap, 0.7e-6);
        assert!(lo.clamped);
        assert!(gap_for_speed(-1.0e-3).is_err());
    }

    #[test]
    fn degenerate_rim_reduces_to_capsule_formulas() {
        // s = r cancels the cap against the dimple: V = π r² a,
        // S = 2π r (2r + a).
        let r = 2.0 * UM;
        let a = 5.0 * UM;
        let (v, s) = volume_and_surface(r, a, r).unwrap();
        assert!((v - PI * r * r * a).abs() < 1e-12 * v);
        assert!((s - 2.0 * PI * r * (2.0 * r + a)).abs() < 1e-12 * s);
        // Hand values: 62.83 µm³ and 113.1 µm².
        assert!((v / UM3 - 62.83).abs() < 0.01);
        assert!((s / UM2 - 113.1).abs() < 0.1);
    }

    #[test]
    fn closed_forms_match_quadrature_oracle() {
        for &(r, a, s) in &[
            (2.1, 6.0, 1.9),
            (2.3, 4.9, 2.0),
            (2.0, 6.8, 1.8),
            (1.5, 3.0, 0.7),
            (2.5, 5.0, 2.5), // degenerate rim
        ] {
            let shape = CellShape::from_parameters(r * UM, a * UM, s * UM).unwrap();
            let v_q = volume_by_quadrature(&shape);
            let s_q = surface_by_quadrature(&shape);
            assert!(
                (shape.volume - v_q).abs() / shape.volume < 1e-9,
                "volume mismatch for ({r},{a},{s}): {} vs {}",
                shape.volume,
                v_q
            );
            assert!(
                (shape.surface - s_q).abs() / shape.surface < 1e-9,
                "surface mismatch for ({r},{a},{s}): {} vs {}",
                shape.surface,
                s_q
            );
        }
    }

    #[test]
    fn profile_joins_are_c1() {
        let shape = CellShape::from_parameters(2.1 * UM, 6.0 * UM, 1.9 * UM).unwrap();
        let (r, a) = (shape.outer_radius, shape.straight_len);
        // One-sided slopes from the arc parameterizations at each join.
        // Cap→straight at ζ = r: cap slope (r−ζ)/y = 0, straight slope 0.
        // Straight→rim at ζ = r+a: rim slope −d/g·… = 0 at d = 0.
        // Rim→dimple at ζ = r+a (inner branch): both slopes 0 by symmetry.
        let eps = 1e-9 * r;
        for &join in &[r, r + a] {
            let y_left = shape.outer_radius_at(join - eps).unwrap();
            let y_right = shape.outer_radius_at(join + eps).unwrap();
            assert!((y_left - y_right).abs() < 1e-12 * r, "value jump at {join}");
            let d_left = (shape.outer_radius_at(join).unwrap() - y_left) / eps;
            let d_right = (y_right - shape.outer_radius_at(join).unwrap()) / eps;
            // Slopes are 0 at both joins up to the O(eps) arc curvature.
            assert!(d_left.abs() < 1e-3, "left slope {d_left} at {join}");
            assert!(d_right.abs() < 1e-3, "right slope {d_right} at {join}");
        }
        // Dimple and rim meet at (r+a, s) with a common axial tangent:
        // both interval ends move quadratically near the join.
        let (in0, _) = shape.solid_interval_at(r + a - eps).unwrap();
        assert!((in0 - shape.tail_radius).abs() < 1e-6 * r);
    }

    #[test]
    fn nose_and_straight_segment_examples() {
        let shape = CellShape::from_parameters(2.1 * UM, 6.0 * UM, 1.9 * UM).unwrap();
        assert_eq!(shape.outer_radius_at(0.0).unwrap(), 0.0);
        let mid = shape.outer_radius + shape.straight_len / 2.0;
        assert_eq!(shape.outer_radius_at(mid).unwrap(), 2.1 * UM);
        assert!(shape.outer_radius_at(-1.0 * UM).is_err());
        assert!(shape.outer_radius_at(shape.total_length + UM).is_err());
    }

    #[test]
    fn volume_and_surface_increase_with_straight_length() {
        let r = 2.1 * UM;
        let s = 1.5 * UM;
        let mut prev = volume_and_surface(r, 1.0 * UM, s).unwrap();
        for i in 2..20 {
            let cur = volume_and_surface(r, i as f64 * UM, s).unwrap();
            assert!(cur.0 > prev.0 && cur.1 > prev.1);
            prev = cur;
        }
    }

    #[test]
    fn solve_shape_hits_targets_for_all_table_speeds() {
        let vessel_radius = 3.0 * UM;
        let v_target = 90.0 * UM3;
        let s_target = 135.0 * UM2;
        let mut last_len = 0.0;
        for &v in &[0.2e-3, 1.0e-3, 2.0e-3] {
            let gap = gap_for_speed(v).unwrap().gap;
            let shape = solve_shape(vessel_radius, gap, v_target, s_target).unwrap();
            assert!((shape.volume - v_target).abs() / v_target < 1e-6);
            assert!((shape.surface - s_target).abs() / s_target < 1e-6);
            // The gap is respected exactly: max profile radius is R − gap.
            assert_eq!(shape.outer_radius, vessel_radius - gap);
            // Faster cells are narrower and longer.
            assert!(shape.total_length > last_len);
            last_len = shape.total_length;
        }
    }

    #[test]
    fn solve_shape_agrees_with_grid_search_oracle() {
        // Coarse 2-D scan over (a, s) minimizing the combined residual,
        // then confirm the Newton solution sits in the best scan cell.
        let vessel_radius = 3.0 * UM;
        let gap = 0.9 * UM;
        let r = vessel_radius - gap;
        let v_target = 90.0 * UM3;
        let s_target = 135.0 * UM2;
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let n = 240;
        for i in 1..=n {
            let a = 10.0 * UM * i as f64 / n as f64;
            for j in 1..n {
                let s = r * j as f64 / n as f64;
                let (vv, ss) = volume_and_surface(r, a, s).unwrap();
                let res = ((vv - v_target) / v_target).abs() + ((ss - s_target) / s_target).abs();
                if res < best.0 {
                    best = (res, a, s);
                }
            }
        }
        let shape = solve_shape(vessel_radius, gap, v_target, s_target).unwrap();
        let da = 10.0 * UM / n as f64;
        let ds = r / n as f64;
        assert!(
            (shape.straight_len - best.1).abs() < 1.5 * da,
            "a = {} vs scan {}",
            shape.straight_len,
            best.1
        );
        assert!(
            (shape.tail_radius - best.2).abs() < 1.5 * ds,
            "s = {} vs scan {}",
            shape.tail_radius,
            best.2
        );
    }

    #[test]
    fn solve_shape_inverts_degenerate_targets() {
        // Targets generated by the capsule formulas recover s = r, a = a0.
        let vessel_radius = 3.0 * UM;
        let gap = 0.9 * UM;
        let r = vessel_radius - gap;
        let a0 = 5.0 * UM;
        let (v_t, s_t) = volume_and_surface(r, a0, r).unwrap();
        let shape = solve_shape(vessel_radius, gap, v_t, s_t).unwrap();
        assert!(
            (shape.tail_radius - r).abs() < 1e-8 * r,
            "{}",
            shape.tail_radius
        );
        assert!((shape.straight_len - a0).abs() < 1e-8 * a0);
    }

    #[test]
    fn infeasible_targets_are_rejected() {
        // Surface below the spherical bound for the volume.
        assert!(solve_shape(3.0 * UM, 0.9 * UM, 90.0 * UM3, 10.0 * UM2).is_err());
        // Gap wider than the vessel.
        assert!(solve_shape(3.0 * UM, 4.0 * UM, 90.0 * UM3, 135.0 * UM2).is_err());
    }

    #[test]
    fn inside_outside_is_consistent_with_profile() {
        let shape = CellShape::from_parameters(2.1 * UM, 6.0 * UM, 1.9 * UM).unwrap();
        // Outside the dimple/rim region the body reaches the axis: points
        // below the profile are solid, above are fluid.
        let n = 200;
        for i in 0..n {
            let zeta = (shape.outer_radius + shape.straight_len - shape.tail_radius)
                * (i as f64 + 0.5)
                / n as f64;
            let y = shape.outer_radius_at(zeta).unwrap();
            assert!(shape.is_solid(zeta, (y - 1e-9 * UM).max(0.0)));
            assert!(!shape.is_solid(zeta, y + 1e-9 * UM));
        }
        // Inside the dimple the axis is fluid.
        let z_dimple = shape.outer_radius + shape.straight_len - 0.3 * shape.tail_radius;
        assert!(!shape.is_solid(z_dimple, 0.0));
    }

    #[test]
    fn height_spans_match_interval_queries() {
        let shape = CellShape::from_parameters(2.1 * UM, 6.1 * UM, 1.9 * UM).unwrap();
        for i in 0..300 {
            let y = shape.outer_radius * (i as f64 + 0.5) / 300.0;
            let (enter, exit) = shape.solid_span_at_height(y).unwrap();
            for &(zeta, expect) in &[
                (enter + 1e-3 * UM, true),
                (exit - 1e-3 * UM, true),
                (enter - 1e-3 * UM, false),
                (exit + 1e-3 * UM, false),
            ] {
                if (0.0..=shape.total_length).contains(&zeta) {
                    assert_eq!(
                        shape.is_solid(zeta, y),
                        expect,
                        "y = {y}, zeta = {zeta}, span = ({enter}, {exit})"
                    );
                }
            }
        }
    }

    #[test]
    fn train_layout_centres_pockets_on_spacing_multiples() {
        let shape = CellShape::from_parameters(2.1 * UM, 6.0 * UM, 1.9 * UM).unwrap();
        let spacing = 12.732 * UM;
        let train = build_train(shape, spacing, 10).unwrap();
        assert_eq!(train.front_positions.len(), 10);
        assert!(train.domain_length() >= 127.0 * UM);
        let diffs: Vec<f64> = train
            .front_positions
            .windows(2)
            .map(|w| w[1] - w[0])
            .collect();
        for d in diffs {
            assert!((d - spacing).abs() < 1e-12 * spacing);
        }
        // Mid-pocket stations (multiples of the spacing) are open fluid.
        for k in 0..=10 {
            let z = k as f64 * spacing;
            assert!(!train.is_solid(z, 0.0));
            assert!(!train.is_solid(z, 2.0 * UM));
        }
        // Single cell: no spacing constraint beyond the domain fit.
        assert!(build_train(shape, spacing, 1).is_ok());
        // Overlap rejected.
        assert!(matches!(
            build_train(shape, 5.0 * UM, 3),
            Err(GeometryError::Overlap { .. })
        ));
    }
}
