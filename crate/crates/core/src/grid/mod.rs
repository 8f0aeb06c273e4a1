//! Finite-difference discretization of obstacle problems on planar domains.
//!
//! Nodes sit on the lattice `hℤ²` clipped to a box around the domain. Nodes
//! with negative level value are unknowns; the rest carry the Dirichlet value.
//! Rows use the Shortley–Weller five-point stencil, so arms that cross ∂Ω are
//! shortened to the intersection point and folded into the right-hand side.

mod diagnostics;
mod solve;

pub use diagnostics::{
    bilinear, coincidence_mask, interpolate_where, complementarity_residual, dirichlet_energy, field_energy, normal_derivative, variational_form,
    variational_inequality_check, write_field_csv, write_flux_csv, CoincidenceSet, Complementarity,
    NormalDerivatives,
};
pub use solve::{
    auto_omega, penalty_beta, penalty_solve, psor_solve, psor_solve_with_source, GridSolution, IterationLog,
    Method, PenaltyOptions, PsorOptions, Relaxation,
};

use crate::error::{Error, Result};
use crate::geometry::optimize::bisect;
use crate::geometry::{ball_radii, DomainSpec, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Interior,
    /// Unknown with at least one arm cut by the boundary.
    BoundaryAdjacent,
    Exterior,
}

/// Arm directions: east, west, north, south.
pub const DIRECTIONS: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// One stencil row: `diag·u_i − Σ coef_k·u[nbr_k] − bcoef·g`.
///
/// Arms that end on the boundary point `nbr` back at the node with a zero
/// coefficient so the sweep needs no branches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub node: usize,
    pub diag: f64,
    pub nbr: [usize; 4],
    pub coef: [f64; 4],
    pub bcoef: f64,
}

/// Node classification and the assembled operator `−div(σ∇·)`.
#[derive(Debug, Clone)]
pub struct Grid {
    domain: DomainSpec,
    h: f64,
    half: usize,
    side: usize,
    kinds: Vec<NodeKind>,
    arms: Vec<[f64; 4]>,
    rows: Vec<Row>,
    row_of: Vec<usize>,
    sigma: Option<Vec<f64>>,
    segments: Vec<Segment>,
}

/// A run of consecutive rows in sweep order. Uniform runs cover consecutive
/// nodes whose four arms are full lattice links with one shared coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Segment {
    pub start: usize,
    pub len: usize,
    pub uniform: bool,
}

fn segments(rows: &[Row], side: usize) -> Vec<Segment> {
    let uniform = |r: &Row| {
        let k = r.node;
        r.bcoef == 0.0
            && r.nbr == [k + 1, k - 1, k + side, k - side]
            && r.coef.iter().all(|&c| c == r.coef[0])
    };
    let mut out: Vec<Segment> = Vec::new();
    for (idx, r) in rows.iter().enumerate() {
        let u = uniform(r);
        if let Some(last) = out.last_mut() {
            let prev = &rows[idx - 1];
            let extends = if u {
                last.uniform && prev.node + 1 == r.node && prev.coef[0] == r.coef[0]
            } else {
                !last.uniform
            };
            if extends {
                last.len += 1;
                continue;
            }
        }
        out.push(Segment {
            start: idx,
            len: 1,
            uniform: u,
        });
    }
    out
}

/// [`Grid::assemble`] as a free function.
pub fn assemble(domain: &DomainSpec, h: f64) -> Result<Grid> {
    Grid::assemble(domain, h)
}

impl Grid {
    /// Laplacian grid; requires `h ≤ ρ/8`.
    pub fn assemble(domain: &DomainSpec, h: f64) -> Result<Self> {
        check_resolution(domain, h)?;
        Self::classify(domain, h)
    }

    /// Grid for `−div(σ∇·)` with faces weighted by the harmonic mean of the
    /// nodal conductivities; requires `h ≤ ρ/8`.
    pub fn assemble_with_conductivity(domain: &DomainSpec, h: f64, sigma: impl Fn(Point) -> f64) -> Result<Self> {
        check_resolution(domain, h)?;
        Self::build(domain, h, Some(&sigma))
    }

    /// Laplacian grid without the resolution check; fails only when no node
    /// falls inside the domain.
    pub fn classify(domain: &DomainSpec, h: f64) -> Result<Self> {
        Self::build(domain, h, None::<&fn(Point) -> f64>)
    }

    fn build<F: Fn(Point) -> f64>(domain: &DomainSpec, h: f64, sigma: Option<&F>) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Resolution(format!("grid spacing must be positive, got {h}")));
        }
        let half = (domain.bounding_radius() / h).ceil() as usize + 1;
        let side = 2 * half + 1;
        let total = side * side;
        let coord = |i: usize| (i as f64 - half as f64) * h;
        let level: Vec<f64> = (0..total)
            .map(|k| domain.level([coord(k % side), coord(k / side)]))
            .collect();
        let inside: Vec<bool> = level.iter().map(|&l| l < 0.0).collect();
        let node_sigma: Option<Vec<f64>> =
            sigma.map(|s| (0..total).map(|k| s([coord(k % side), coord(k / side)])).collect());

        let mut kinds = vec![NodeKind::Exterior; total];
        let mut arms = vec![[1.0; 4]; total];
        let mut rows = Vec::new();
        let mut row_of = vec![usize::MAX; total];
        let h2 = h * h;
        for k in 0..total {
            if !inside[k] {
                continue;
            }
            let (i, j) = (k % side, k / side);
            let p = [coord(i), coord(j)];
            let mut theta = [1.0; 4];
            let mut link = [None; 4];
            for (d, &(di, dj)) in DIRECTIONS.iter().enumerate() {
                // the box margin guarantees every unknown has all four neighbours
                let q = ((j as i64 + dj) as usize) * side + (i as i64 + di) as usize;
                if inside[q] {
                    link[d] = Some(q);
                } else if level[q] > 0.0 {
                    let f = |t: f64| domain.level([p[0] + t * h * di as f64, p[1] + t * h * dj as f64]);
                    theta[d] = bisect(f, 0.0, 1.0, 0.0).clamp(f64::MIN_POSITIVE, 1.0);
                }
            }
            let s_here = node_sigma.as_ref().map_or(1.0, |s| s[k]);
            let mut row = Row {
                node: k,
                diag: 0.0,
                nbr: [k; 4],
                coef: [0.0; 4],
                bcoef: 0.0,
            };
            for d in 0..4 {
                let opposite = d ^ 1;
                let c = 2.0 / (h2 * theta[d] * (theta[d] + theta[opposite]));
                let face = match (link[d], node_sigma.as_ref()) {
                    (Some(q), Some(s)) => 2.0 * s_here * s[q] / (s_here + s[q]),
                    _ => s_here,
                };
                row.diag += face * c;
                match link[d] {
                    Some(q) => {
                        row.nbr[d] = q;
                        row.coef[d] = face * c;
                    }
                    None => row.bcoef += face * c,
                }
            }
            kinds[k] = if link.iter().all(Option::is_some) {
                NodeKind::Interior
            } else {
                NodeKind::BoundaryAdjacent
            };
            arms[k] = theta;
            row_of[k] = rows.len();
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Resolution(format!(
                "no grid node at spacing {h} lies inside the {}",
                domain.name()
            )));
        }
        let segments = segments(&rows, side);
        Ok(Self {
            segments,
            domain: *domain,
            h,
            half,
            side,
            kinds,
            arms,
            rows,
            row_of,
            sigma: node_sigma,
        })
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Nodes per box side.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.side * self.side
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn unknowns(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub(crate) fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        self.kinds[node]
    }

    pub fn is_unknown(&self, node: usize) -> bool {
        self.kinds[node] != NodeKind::Exterior
    }

    /// Fractional arm lengths `θ ∈ (0, 1]` in [`DIRECTIONS`] order.
    pub fn arms(&self, node: usize) -> [f64; 4] {
        self.arms[node]
    }

    pub fn row(&self, node: usize) -> Option<&Row> {
        self.rows.get(self.row_of[node])
    }

    pub fn conductivity(&self, node: usize) -> f64 {
        self.sigma.as_ref().map_or(1.0, |s| s[node])
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.side + i
    }

    pub fn coords(&self, node: usize) -> (usize, usize) {
        (node % self.side, node / self.side)
    }

    pub fn point(&self, node: usize) -> Point {
        let (i, j) = self.coords(node);
        [self.coordinate(i), self.coordinate(j)]
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        (i as f64 - self.half as f64) * self.h
    }

    /// Box node nearest to `p`, if inside the box.
    pub fn nearest(&self, p: Point) -> Option<usize> {
        let i = (p[0] / self.h).round() + self.half as f64;
        let j = (p[1] / self.h).round() + self.half as f64;
        let max = (self.side - 1) as f64;
        if (0.0..=max).contains(&i) && (0.0..=max).contains(&j) {
            Some(self.index(i as usize, j as usize))
        } else {
            None
        }
    }

    /// Lower-left lattice indices of the cell containing `p` (may be outside the box).
    pub(crate) fn cell(&self, p: Point) -> (i64, i64) {
        (
            (p[0] / self.h + self.half as f64).floor() as i64,
            (p[1] / self.h + self.half as f64).floor() as i64,
        )
    }

    /// `f` evaluated at every box node.
    pub fn sample(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        (0..self.len()).map(|k| f(self.point(k))).collect()
    }

    /// `A u − f` at every unknown, in row order.
    pub fn residual(&self, u: &[f64], dirichlet: f64, source: f64) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| {
                let s: f64 = (0..4).map(|d| r.coef[d] * u[r.nbr[d]]).sum();
                r.diag * u[r.node] - s - r.bcoef * dirichlet - source
            })
            .collect()
    }
}

fn check_resolution(domain: &DomainSpec, h: f64) -> Result<()> {
    let (rho, _) = ball_radii(domain)?;
    if !(h <= rho / 8.0) {
        return Err(Error::Resolution(format!(
            "spacing {h} does not resolve the inscribed ball (need h ≤ ρ/8 = {})",
            rho / 8.0
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_disk_node_count() {
        let grid = Grid::classify(&DomainSpec::ball(1.0).unwrap(), 0.25).unwrap();
        let mut count = 0;
        for i in -8i32..=8 {
            for j in -8i32..=8 {
                let (x, y) = (i as f64 * 0.25, j as f64 * 0.25);
                if x.hypot(y) < 1.0 {
                    count += 1;
                }
            }
        }
        assert_eq!(grid.unknowns(), count);
    }

    #[test]
    fn coarse_spacing_rejected() {
        let d = DomainSpec::ball(1.0).unwrap();
        assert!(matches!(Grid::assemble(&d, 0.25), Err(Error::Resolution(_))));
        assert!(Grid::assemble(&d, 0.125).is_ok());
        assert!(matches!(Grid::classify(&DomainSpec::shifted_ball(0.05, [0.1, 0.1]).unwrap(), 0.25), Err(Error::Resolution(_))));
    }

    #[test]
    fn ellipse_arms_in_unit_interval() {
        let grid = Grid::assemble(&DomainSpec::ellipse(1.0, 1.3).unwrap(), 1.0 / 64.0).unwrap();
        let mut cut = 0;
        for r in grid.rows() {
            for t in grid.arms(r.node) {
                assert!(t > 0.0 && t <= 1.0);
                if t < 1.0 {
                    cut += 1;
                }
            }
            for d in 0..4 {
                if r.nbr[d] != r.node {
                    assert!(grid.is_unknown(r.nbr[d]));
                }
            }
        }
        assert!(cut > 0);
    }

    #[test]
    fn arm_endpoints_lie_on_boundary() {
        let d = DomainSpec::ellipse(1.0, 1.3).unwrap();
        let grid = Grid::assemble(&d, 1.0 / 32.0).unwrap();
        for r in grid.rows() {
            let p = grid.point(r.node);
            for (k, &(di, dj)) in DIRECTIONS.iter().enumerate() {
                let t = grid.arms(r.node)[k];
                if t < 1.0 {
                    let q = [p[0] + t * grid.h() * di as f64, p[1] + t * grid.h() * dj as f64];
                    assert!(d.signed_distance(q).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn stencil_exact_on_quadratics() {
        // u = (1 − |x|²)/4 solves −Δu = 1 with u = 0 on the unit circle
        let d = DomainSpec::ball(1.0).unwrap();
        let grid = Grid::assemble(&d, 1.0 / 16.0).unwrap();
        let u = grid.sample(|p| if d.level(p) < 0.0 { (1.0 - p[0] * p[0] - p[1] * p[1]) / 4.0 } else { 0.0 });
        let r = grid.residual(&u, 0.0, 1.0);
        assert!(r.iter().all(|v| v.abs() < 1e-9), "{:?}", r.iter().cloned().fold(0.0, f64::max));
    }

    #[test]
    fn harmonic_mean_faces() {
        let d = DomainSpec::ball(1.0).unwrap();
        let grid = Grid::assemble_with_conductivity(&d, 0.1, |p| if p[0] < 0.05 { 2.0 } else { 1.0 }).unwrap();
        let k = grid.nearest([0.0, 0.0]).unwrap();
        let row = grid.row(k).unwrap();
        let unit = 1.0 / (grid.h() * grid.h());
        assert!((row.coef[0] - unit * 4.0 / 3.0).abs() < 1e-9);
        assert!((row.coef[1] - unit * 2.0).abs() < 1e-9);
    }
}
