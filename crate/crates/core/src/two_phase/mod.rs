//! Two-phase obstacle problem on `B_L(0)` with conductivity `σ₊` in an inner
//! domain `D` and `σ₋` outside, plus the diagnostics built on it: the
//! Dirichlet overdetermination on ∂D, transmission of the conormal flux,
//! moving-plane scans and the penalized problem on `D`.

mod moving_plane;

pub use moving_plane::{
    moving_plane_scan, moving_plane_scans, write_moving_plane_csv, MovingPlaneEvent, MovingPlaneReport,
    MOVING_PLANE_COLUMNS,
};

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{ball_radii, sample_boundary, BoundarySample, DomainSpec, Obstacle, Point};
use crate::grid::{
    interpolate_where, penalty_solve, psor_solve, Grid, GridSolution, PenaltyOptions, PsorOptions, DIRECTIONS,
};
use crate::radial::{solve_radial_one_phase, RadialSolution};

/// Piecewise-constant conductivity: `σ₊` inside `D`, `σ₋` outside.
#[derive(Debug, Clone, PartialEq)]
pub struct Conductivity {
    sigma_plus: f64,
    sigma_minus: f64,
    inner: DomainSpec,
}

impl Conductivity {
    pub fn new(sigma_plus: f64, sigma_minus: f64, inner: DomainSpec) -> Result<Self> {
        let positive = |s: f64| s > 0.0 && s.is_finite();
        if !positive(sigma_plus) || !positive(sigma_minus) {
            return Err(Error::InvalidConductivity(format!(
                "conductivities must be positive, got σ₊ = {sigma_plus}, σ₋ = {sigma_minus}"
            )));
        }
        if sigma_plus == sigma_minus {
            return Err(Error::InvalidConductivity(format!(
                "σ₊ = σ₋ = {sigma_plus} is a one-phase medium"
            )));
        }
        Ok(Self {
            sigma_plus,
            sigma_minus,
            inner,
        })
    }

    pub fn sigma_plus(&self) -> f64 {
        self.sigma_plus
    }

    pub fn sigma_minus(&self) -> f64 {
        self.sigma_minus
    }

    pub fn inner(&self) -> &DomainSpec {
        &self.inner
    }

    pub fn inside(&self, p: Point) -> bool {
        self.inner.level(p) < 0.0
    }

    pub fn at(&self, p: Point) -> f64 {
        if self.inside(p) {
            self.sigma_plus
        } else {
            self.sigma_minus
        }
    }

    /// The same medium with both conductivities multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.sigma_plus * factor, self.sigma_minus * factor, self.inner)
    }
}

/// How the interface value `d` is estimated from the samples of `u` on ∂D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InterfaceEstimate {
    /// Midrange `(max + min)/2`, the minimax constant.
    #[default]
    Minimax,
    /// Arithmetic mean.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPhaseOptions {
    pub psor: PsorOptions,
    /// Interface samples on ∂D.
    pub samples: usize,
}

impl Default for TwoPhaseOptions {
    fn default() -> Self {
        Self {
            psor: PsorOptions::default(),
            samples: 256,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoPhaseSolution {
    pub field: GridSolution,
    pub conductivity: Conductivity,
    pub outer_radius: f64,
    pub interface: Vec<BoundarySample>,
    /// `u⁺` on ∂D, extrapolated from nodes inside `D`.
    pub interface_values: Vec<f64>,
    /// `∂_ν u⁺` and `∂_ν u⁻` at the interface samples.
    pub flux_plus: Vec<f64>,
    pub flux_minus: Vec<f64>,
    /// Samples that needed the shortened offsets `h/2, h`.
    pub shrunk: usize,
    pub estimate: InterfaceEstimate,
    pub d_best: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Plus,
    Minus,
}

impl TwoPhaseSolution {
    /// Extracts interface data from a solved field on `B_L`.
    pub fn from_field(
        field: GridSolution,
        conductivity: Conductivity,
        outer_radius: f64,
        samples: usize,
        estimate: InterfaceEstimate,
    ) -> Result<Self> {
        let interface = sample_boundary(conductivity.inner(), samples)?;
        let grid = Arc::clone(&field.grid);
        let h = grid.h();
        let inside = |k: usize| grid.is_unknown(k) && conductivity.inside(grid.point(k));
        let outside = |k: usize| grid.is_unknown(k) && !conductivity.inside(grid.point(k));
        let mut interface_values = Vec::with_capacity(samples);
        let mut flux_plus = Vec::with_capacity(samples);
        let mut flux_minus = Vec::with_capacity(samples);
        let mut shrunk = 0;
        for s in &interface {
            let p = s.point;
            let nu = s.outward_normal;
            let along = |t: f64| [p[0] + t * nu[0], p[1] + t * nu[1]];
            let mut found = None;
            for (step, reduced) in [(h, false), (0.5 * h, true)] {
                let plus = [0.0, -step, -2.0 * step].map(|t| interpolate_where(&grid, &field.u, along(t), inside));
                let minus = [0.0, step, 2.0 * step].map(|t| interpolate_where(&grid, &field.u, along(t), outside));
                if let ([Some(p0), Some(p1), Some(p2)], [Some(m0), Some(m1), Some(m2)]) = (plus, minus) {
                    let fp = (3.0 * p0 - 4.0 * p1 + p2) / (2.0 * step);
                    let fm = (-3.0 * m0 + 4.0 * m1 - m2) / (2.0 * step);
                    found = Some((p0, fp, fm, reduced));
                    break;
                }
            }
            let (value, fp, fm, reduced) = found.ok_or(Error::Interpolation { x: p[0], y: p[1] })?;
            interface_values.push(value);
            flux_plus.push(fp);
            flux_minus.push(fm);
            shrunk += usize::from(reduced);
        }
        let (d_best, deviation) = estimate_value(&interface_values, estimate);
        Ok(Self {
            field,
            conductivity,
            outer_radius,
            interface,
            interface_values,
            flux_plus,
            flux_minus,
            shrunk,
            estimate,
            d_best,
            deviation,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.field.grid
    }

    pub fn phase(&self, node: usize) -> Phase {
        if self.conductivity.inside(self.grid().point(node)) {
            Phase::Plus
        } else {
            Phase::Minus
        }
    }

    /// `(min u⁺ − d, min u⁻, max u⁻ − d)` over the unknowns of each phase.
    pub fn phase_bounds(&self) -> (f64, f64, f64) {
        let mut plus_margin = f64::INFINITY;
        let mut minus_min = f64::INFINITY;
        let mut minus_excess = f64::NEG_INFINITY;
        for r in self.grid().rows() {
            let u = self.field.u[r.node];
            match self.phase(r.node) {
                Phase::Plus => plus_margin = plus_margin.min(u - self.d_best),
                Phase::Minus => {
                    minus_min = minus_min.min(u);
                    minus_excess = minus_excess.max(u - self.d_best);
                }
            }
        }
        (plus_margin, minus_min, minus_excess)
    }
}

fn estimate_value(values: &[f64], estimate: InterfaceEstimate) -> (f64, f64) {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let center = match estimate {
        InterfaceEstimate::Minimax => 0.5 * (max + min),
        InterfaceEstimate::Mean => values.iter().sum::<f64>() / values.len() as f64,
    };
    (center, (max - center).max(center - min))
}

/// Checks `D̄ ⊂ B_L(0)` and `supp ψ⁺ ⊂ D`; returns the inradius of `D`.
pub fn check_two_phase_hypotheses(cond: &Conductivity, outer_radius: f64, psi: &Obstacle) -> Result<f64> {
    if psi.dimension() != 2 {
        return Err(Error::Precondition(format!(
            "grid solves are planar; obstacle has dimension {}",
            psi.dimension()
        )));
    }
    if psi.max_value() <= 0.0 {
        return Err(Error::Hypothesis(format!("max ψ = {} is not positive", psi.max_value())));
    }
    let (rho, big_r) = ball_radii(cond.inner())?;
    if !(big_r < outer_radius) {
        return Err(Error::Hypothesis(format!(
            "inner domain reaches radius {big_r}, outside B_L with L = {outer_radius}"
        )));
    }
    if !(psi.support_radius() < rho) {
        return Err(Error::Hypothesis(format!(
            "obstacle support radius {} is not inside D (inradius {rho})",
            psi.support_radius()
        )));
    }
    Ok(rho)
}

/// Projected relaxation for `min{−div(σ∇u), u − ψ} = 0` in `B_L(0)`, `u = 0`
/// on `∂B_L(0)`, followed by interface extraction.
pub fn solve_two_phase_grid(
    cond: &Conductivity,
    outer_radius: f64,
    psi: &Obstacle,
    estimate: InterfaceEstimate,
    h: f64,
    opts: &TwoPhaseOptions,
) -> Result<TwoPhaseSolution> {
    check_two_phase_hypotheses(cond, outer_radius, psi)?;
    let outer = DomainSpec::ball(outer_radius)?;
    let grid = Arc::new(Grid::assemble_with_conductivity(&outer, h, |p| cond.at(p))?);
    let samples = grid.sample(|p| psi.at(p));
    let field = psor_solve(&grid, &samples, 0.0, &opts.psor)?;
    TwoPhaseSolution::from_field(field, cond.clone(), outer_radius, opts.samples, estimate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletDeviation {
    pub d_best: f64,
    pub deviation: f64,
    /// `0 < d_best < max ψ`.
    pub consistent: bool,
}

pub fn dirichlet_deviation(sol: &TwoPhaseSolution) -> DirichletDeviation {
    let top = sol
        .grid()
        .rows()
        .iter()
        .map(|r| sol.field.psi[r.node])
        .fold(f64::NEG_INFINITY, f64::max);
    DirichletDeviation {
        d_best: sol.d_best,
        deviation: sol.deviation,
        consistent: sol.d_best > 0.0 && sol.d_best < top,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionResidual {
    /// `max |σ₊ ∂_ν u⁺ − σ₋ ∂_ν u⁻|`
    pub residual: f64,
    /// `max |σ₊ ∂_ν u⁺|`, for normalization.
    pub flux_scale: f64,
    /// `|mean (σ₊ ∂_ν u⁺ − σ₋ ∂_ν u⁻)|` over the samples. The pointwise
    /// one-sided derivatives carry an O(1) oscillation from the first-order
    /// interface stencil; the mean does not.
    pub mean_jump: f64,
}

pub fn transmission_residual(sol: &TwoPhaseSolution) -> TransmissionResidual {
    let (sp, sm) = (sol.conductivity.sigma_plus(), sol.conductivity.sigma_minus());
    let mut out = TransmissionResidual {
        residual: 0.0,
        flux_scale: 0.0,
        mean_jump: 0.0,
    };
    let mut sum = 0.0;
    for (fp, fm) in sol.flux_plus.iter().zip(&sol.flux_minus) {
        let jump = sp * fp - sm * fm;
        sum += jump;
        out.residual = out.residual.max(jump.abs());
        out.flux_scale = out.flux_scale.max((sp * fp).abs());
    }
    out.mean_jump = (sum / sol.flux_plus.len().max(1) as f64).abs();
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Connectedness {
    /// Components of the outer phase `B_L ∖ D̄` on the grid.
    pub components: usize,
    pub min_u_minus: f64,
    pub max_u_minus: f64,
    pub d_best: f64,
    /// Largest `|u|` at nodes outside `B_L` (imposed zero data).
    pub boundary_value: f64,
}

impl Connectedness {
    pub fn connected(&self) -> bool {
        self.components == 1
    }

    /// `0 < min u⁻` and `max u⁻ < d_best + tol`.
    pub fn bounds_hold(&self, tol: f64) -> bool {
        self.min_u_minus > 0.0 && self.max_u_minus < self.d_best + tol
    }
}

/// 4-connected components of the nodes selected by `member`, labelled in
/// lexicographic order of their first node.
pub(crate) fn components(grid: &Grid, member: impl Fn(usize) -> bool) -> Vec<Option<usize>> {
    let side = grid.side();
    let mut label = vec![None; grid.len()];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..grid.len() {
        if label[start].is_some() || !member(start) {
            continue;
        }
        label[start] = Some(next);
        queue.push_back(start);
        while let Some(k) = queue.pop_front() {
            let (i, j) = grid.coords(k);
            for (di, dj) in DIRECTIONS {
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                if ni < 0 || nj < 0 || ni >= side as i64 || nj >= side as i64 {
                    continue;
                }
                let q = grid.index(ni as usize, nj as usize);
                if label[q].is_none() && member(q) {
                    label[q] = Some(next);
                    queue.push_back(q);
                }
            }
        }
        next += 1;
    }
    label
}

pub fn connectedness_check(sol: &TwoPhaseSolution) -> Connectedness {
    let grid = sol.grid();
    let minus = |k: usize| grid.is_unknown(k) && sol.phase(k) == Phase::Minus;
    let labels = components(grid, minus);
    let count = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut min_u = f64::INFINITY;
    let mut max_u = f64::NEG_INFINITY;
    let mut boundary_value = 0.0f64;
    for k in 0..grid.len() {
        if minus(k) {
            min_u = min_u.min(sol.field.u[k]);
            max_u = max_u.max(sol.field.u[k]);
        } else if !grid.is_unknown(k) {
            boundary_value = boundary_value.max(sol.field.u[k].abs());
        }
    }
    Connectedness {
        components: count,
        min_u_minus: min_u,
        max_u_minus: max_u,
        d_best: sol.d_best,
        boundary_value,
    }
}

/// Field dump with columns `x, y, u, psi, coincidence, phase` (phase `+` or `-`).
pub fn write_two_phase_field_csv(sol: &TwoPhaseSolution, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "u", "psi", "coincidence", "phase"])?;
    for r in sol.grid().rows() {
        let k = r.node;
        let p = sol.grid().point(k);
        let phase = match sol.phase(k) {
            Phase::Plus => "+",
            Phase::Minus => "-",
        };
        w.write_record([
            p[0].to_string(),
            p[1].to_string(),
            sol.field.u[k].to_string(),
            sol.field.psi[k].to_string(),
            u8::from(sol.field.coincidence[k]).to_string(),
            phase.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedRecord {
    /// Radius of the comparison ball `B_ρ ⊂ D` carrying `u_ρ`.
    pub rho: f64,
    pub d: f64,
    pub eps: Vec<f64>,
    /// `sup |v^ε − u⁺|` with the obstacle `u_ρ`.
    pub sup_diff_rho: Vec<f64>,
    /// `sup |v^ε − u⁺|` with the obstacle `ψ`.
    pub sup_diff_psi: Vec<f64>,
    /// `min (v^ε − d)` over the unknowns, obstacle `u_ρ`.
    pub min_margin: Vec<f64>,
    /// Largest change of the projected-relaxation solution on `D` when ψ is
    /// replaced by `u_ρ`.
    pub obstacle_swap: f64,
}

impl PenalizedRecord {
    pub fn above_d(&self) -> bool {
        self.min_margin.iter().all(|&m| m > 0.0)
    }

    pub fn monotone(&self) -> bool {
        self.sup_diff_rho.windows(2).all(|w| w[1] < w[0])
    }
}

/// Radius of the comparison ball used for `u_ρ`: midway between the obstacle
/// support and the inradius of `D`.
pub fn comparison_radius(cond: &Conductivity, psi: &Obstacle) -> Result<f64> {
    let (rho_d, _) = ball_radii(cond.inner())?;
    Ok(0.5 * (psi.support_radius() + rho_d))
}

/// `u_ρ` extended by zero outside `B_ρ`.
fn extended(radial: &RadialSolution, p: Point) -> f64 {
    radial.eval(p[0].hypot(p[1])).unwrap_or(0.0)
}

/// Penalized problems `−Δv = β((u_ρ − v)/ε)` in `D`, `v = d_best` on ∂D, for
/// each ε, compared with the two-phase solution `u⁺`. The returned field is
/// the `u_ρ`-obstacle solve at the last ε.
pub fn penalized_two_phase(
    sol: &TwoPhaseSolution,
    psi: &Obstacle,
    eps: &[f64],
    psor: &PsorOptions,
    penalty: &PenaltyOptions,
) -> Result<(Option<GridSolution>, PenalizedRecord)> {
    let cond = &sol.conductivity;
    check_two_phase_hypotheses(cond, sol.outer_radius, psi)?;
    let rho = comparison_radius(cond, psi)?;
    let radial = solve_radial_one_phase(psi, rho, 0.0)?;
    let d = sol.d_best;
    let grid = Arc::new(Grid::assemble(cond.inner(), sol.grid().h())?);
    let obstacle_rho = grid.sample(|p| extended(&radial, p));
    let obstacle_psi = grid.sample(|p| psi.at(p));
    let outer = sol.grid();
    let u_plus: Vec<Option<f64>> = (0..grid.len())
        .map(|k| outer.nearest(grid.point(k)).map(|q| sol.field.u[q]))
        .collect();
    let sup_diff = |v: &GridSolution| {
        grid.rows()
            .iter()
            .filter_map(|r| u_plus[r.node].map(|u| (v.u[r.node] - u).abs()))
            .fold(0.0, f64::max)
    };

    let mut record = PenalizedRecord {
        rho,
        d,
        eps: eps.to_vec(),
        sup_diff_rho: Vec::new(),
        sup_diff_psi: Vec::new(),
        min_margin: Vec::new(),
        obstacle_swap: 0.0,
    };
    let mut last = None;
    for &e in eps {
        let v = penalty_solve(&grid, &obstacle_rho, d, e, penalty)?;
        record.sup_diff_rho.push(sup_diff(&v));
        record.min_margin.push(
            grid.rows()
                .iter()
                .map(|r| v.u[r.node] - d)
                .fold(f64::INFINITY, f64::min),
        );
        let w = penalty_solve(&grid, &obstacle_psi, d, e, penalty)?;
        record.sup_diff_psi.push(sup_diff(&w));
        last = Some(v);
    }
    let with_rho = psor_solve(&grid, &obstacle_rho, d, psor)?;
    let with_psi = psor_solve(&grid, &obstacle_psi, d, psor)?;
    record.obstacle_swap = grid
        .rows()
        .iter()
        .map(|r| (with_rho.u[r.node] - with_psi.u[r.node]).abs())
        .fold(0.0, f64::max);
    Ok((last, record))
}
