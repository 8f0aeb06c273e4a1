//! Neumann overdetermination audits: flux defect, the stability constant `K`,
//! and the comparison and inclusion structure against radial solutions.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{ball_radii, diameter, norm, sample_boundary, DomainSpec, Obstacle};
use crate::grid::{
    coincidence_mask, normal_derivative, psor_solve, psor_solve_with_source, Grid, GridSolution, PsorOptions,
};
use crate::radial::{solve_radial_one_phase, RadialSolution};

/// Boundary samples used for the flux fit unless configured otherwise.
pub const DEFAULT_FLUX_SAMPLES: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityOptions {
    pub psor: PsorOptions,
    /// At least [`DEFAULT_FLUX_SAMPLES`].
    pub samples: usize,
    /// Fixed Neumann constant instead of the minimax fit.
    pub c_override: Option<f64>,
    /// Radius of a torsion calibration run at the same `h`, reported as a flux budget.
    pub calibrate_radius: Option<f64>,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            psor: PsorOptions::default(),
            samples: DEFAULT_FLUX_SAMPLES,
            c_override: None,
            calibrate_radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub dimension: usize,
    pub domain: String,
    pub params: Vec<f64>,
    pub h: f64,
    pub tol: f64,
    pub omega: f64,
    pub rho: f64,
    pub big_r: f64,
    pub r_star: f64,
    pub c: f64,
    pub eps: f64,
    /// `−∂_r u_{R*}(R*)`.
    pub flux_at_rstar: f64,
    pub k: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    /// `c < 0`; otherwise the report is flagged and `satisfied` is false.
    pub valid: bool,
    pub converged: bool,
    /// Flux error of the torsion calibration at the same spacing, if requested.
    pub flux_budget: Option<f64>,
    pub warnings: Vec<String>,
}

pub const REPORT_COLUMNS: [&str; 14] = [
    "N", "domain", "params", "h", "rho", "R", "Rstar", "c", "eps", "K", "lhs", "rhs", "satisfied", "warnings",
];

impl StabilityReport {
    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.dimension.to_string(),
            self.domain.clone(),
            join_params(&self.params),
            self.h.to_string(),
            self.rho.to_string(),
            self.big_r.to_string(),
            self.r_star.to_string(),
            self.c.to_string(),
            self.eps.to_string(),
            self.k.to_string(),
            self.lhs.to_string(),
            self.rhs.to_string(),
            self.satisfied.to_string(),
            self.warnings.join("; "),
        ]
    }
}

pub(crate) fn join_params(p: &[f64]) -> String {
    p.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

/// Writes reports as CSV with [`REPORT_COLUMNS`].
pub fn write_reports_csv(reports: &[StabilityReport], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_COLUMNS)?;
    for r in reports {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

/// Checks the containment hypothesis `supp ψ⁺ ⊂ B_ρ` and returns `(ρ, R)`.
pub fn check_hypotheses(domain: &DomainSpec, psi: &Obstacle) -> Result<(f64, f64)> {
    if psi.dimension() != 2 {
        return Err(Error::Precondition(format!(
            "grid audits are planar; obstacle has dimension {}",
            psi.dimension()
        )));
    }
    if psi.max_value() <= 0.0 {
        return Err(Error::Hypothesis(format!("max ψ = {} is not positive", psi.max_value())));
    }
    let (rho, big_r) = ball_radii(domain)?;
    if !(psi.support_radius() < rho) {
        return Err(Error::Hypothesis(format!(
            "obstacle support radius {} is not inside the inscribed ball ρ = {rho}",
            psi.support_radius()
        )));
    }
    Ok((rho, big_r))
}

/// Grid obstacle solve with zero Dirichlet data.
pub fn solve_on(domain: &DomainSpec, psi: &Obstacle, h: f64, opts: &PsorOptions) -> Result<GridSolution> {
    let grid = Arc::new(Grid::assemble(domain, h)?);
    let samples = grid.sample(|p| psi.at(p));
    psor_solve(&grid, &samples, 0.0, opts)
}

/// Minimax fit `(c, ε)` of a set of flux values.
pub fn fit_constant(flux: &[f64]) -> (f64, f64) {
    let max = flux.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = flux.iter().cloned().fold(f64::INFINITY, f64::min);
    (0.5 * (max + min), 0.5 * (max - min))
}

/// Solves on the grid and audits the stability inequality `R − ρ ≤ K ε`.
pub fn stability_report(domain: &DomainSpec, psi: &Obstacle, h: f64) -> Result<StabilityReport> {
    stability_report_with(domain, psi, h, &StabilityOptions::default())
}

pub fn stability_report_with(
    domain: &DomainSpec,
    psi: &Obstacle,
    h: f64,
    opts: &StabilityOptions,
) -> Result<StabilityReport> {
    check_hypotheses(domain, psi)?;
    let sol = solve_on(domain, psi, h, &opts.psor)?;
    report_from_solution(&sol, psi, opts)
}

/// Builds the report for an existing solve with zero Dirichlet data.
pub fn report_from_solution(sol: &GridSolution, psi: &Obstacle, opts: &StabilityOptions) -> Result<StabilityReport> {
    let domain = sol.grid.domain();
    let (rho, big_r) = check_hypotheses(domain, psi)?;
    let r_star = diameter(domain)?;
    if opts.samples < DEFAULT_FLUX_SAMPLES {
        return Err(Error::Precondition(format!(
            "need at least {DEFAULT_FLUX_SAMPLES} flux samples, got {}",
            opts.samples
        )));
    }
    let samples = sample_boundary(domain, opts.samples)?;
    let nd = normal_derivative(sol, &samples)?;
    let (c, eps) = match opts.c_override {
        Some(c) => (c, nd.flux.iter().map(|f| (f - c).abs()).fold(0.0, f64::max)),
        None => fit_constant(&nd.flux),
    };
    let outer = solve_radial_one_phase(psi, r_star, 0.0)?;
    let flux_at_rstar = -outer.boundary_flux;
    let n = psi.dimension() as f64;
    let k = 2.0 * r_star / ((n - 1.0) * flux_at_rstar);
    let lhs = big_r - rho;
    let rhs = k * eps;
    let valid = c < 0.0;
    let mut warnings = Vec::new();
    if !sol.converged() {
        warnings.push(format!(
            "solver stopped after {} sweeps with update {:e}",
            sol.log.sweeps, sol.log.final_update
        ));
    }
    if nd.shrunk_count() > 0 {
        warnings.push(format!("{} flux samples used shortened offsets", nd.shrunk_count()));
    }
    if !valid {
        warnings.push(format!("fitted Neumann constant c = {c} is not negative"));
    }
    let flux_budget = match opts.calibrate_radius {
        Some(r) => Some(torsion_calibration(r, sol.grid.h(), &opts.psor)?.flux_error),
        None => None,
    };
    let omega = match sol.method {
        crate::grid::Method::ProjectedRelaxation { omega } => omega,
        _ => f64::NAN,
    };
    Ok(StabilityReport {
        dimension: psi.dimension(),
        domain: domain.name().to_string(),
        params: domain.params(),
        h: sol.grid.h(),
        tol: opts.psor.tol,
        omega,
        rho,
        big_r,
        r_star,
        c,
        eps,
        flux_at_rstar,
        k,
        lhs,
        rhs,
        satisfied: valid && lhs <= rhs,
        valid,
        converged: sol.converged(),
        flux_budget,
        warnings,
    })
}

/// Radial comparison solutions `u_ρ` and `u_R` with zero boundary data.
pub fn comparison_solutions(domain: &DomainSpec, psi: &Obstacle) -> Result<(RadialSolution, RadialSolution)> {
    let (rho, big_r) = check_hypotheses(domain, psi)?;
    Ok((
        solve_radial_one_phase(psi, rho, 0.0)?,
        solve_radial_one_phase(psi, big_r, 0.0)?,
    ))
}

/// `(v₁, v₂)`: the largest amounts by which `u_ρ ≤ u` (on `B_ρ`) and
/// `u ≤ u_R` (on Ω) fail at grid nodes.
pub fn sandwich_violations(sol: &GridSolution, inner: &RadialSolution, outer: &RadialSolution) -> (f64, f64) {
    let mut v1 = 0.0f64;
    let mut v2 = 0.0f64;
    for r in sol.grid.rows() {
        let p = sol.grid.point(r.node);
        let d = norm(p);
        let u = sol.u[r.node];
        if let Ok(low) = inner.eval(d) {
            v1 = v1.max(low - u);
        }
        if let Ok(high) = outer.eval(d) {
            v2 = v2.max(u - high);
        }
    }
    (v1, v2)
}

pub fn sandwich_check(domain: &DomainSpec, psi: &Obstacle, h: f64, opts: &PsorOptions) -> Result<(f64, f64)> {
    let (inner, outer) = comparison_solutions(domain, psi)?;
    let sol = solve_on(domain, psi, h, opts)?;
    Ok(sandwich_violations(&sol, &inner, &outer))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inclusions {
    /// `I_ρ ⊇ I`
    pub inner_contains_grid: bool,
    /// `I ⊇ I_R`
    pub grid_contains_outer: bool,
    /// `I_ρ ⊇ I_R`
    pub inner_contains_outer: bool,
    pub a_inner: f64,
    pub a_outer: f64,
    /// Circumscribing radius of the grid coincidence set.
    pub grid_radius: f64,
}

impl Inclusions {
    pub fn all(&self) -> bool {
        self.inner_contains_grid && self.grid_contains_outer && self.inner_contains_outer
    }
}

/// Tests `I_ρ ⊇ I ⊇ I_R`, where the radial sets are the node sets within the
/// contact radii, allowing one cell diagonal of slack in each inclusion.
pub fn inclusions(sol: &GridSolution, inner: &RadialSolution, outer: &RadialSolution, ctol: f64) -> Inclusions {
    let slack = std::f64::consts::SQRT_2 * sol.grid.h();
    let mask = coincidence_mask(sol, ctol);
    let (a_in, a_out) = (inner.contact_radius, outer.contact_radius);
    let mut inner_contains_grid = true;
    let mut grid_contains_outer = true;
    for r in sol.grid.rows() {
        let d = norm(sol.grid.point(r.node));
        if mask.mask[r.node] && d > a_in + slack {
            inner_contains_grid = false;
        }
        if !mask.mask[r.node] && d <= a_out - slack {
            grid_contains_outer = false;
        }
    }
    Inclusions {
        inner_contains_grid,
        grid_contains_outer,
        inner_contains_outer: a_out <= a_in + slack,
        a_inner: a_in,
        a_outer: a_out,
        grid_radius: mask.radius,
    }
}

pub fn inclusion_check(
    domain: &DomainSpec,
    psi: &Obstacle,
    h: f64,
    ctol: f64,
    opts: &PsorOptions,
) -> Result<Inclusions> {
    let (inner, outer) = comparison_solutions(domain, psi)?;
    let sol = solve_on(domain, psi, h, opts)?;
    Ok(inclusions(&sol, &inner, &outer, ctol))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorsionCalibration {
    /// `max |∂_ν u + R/2|` over the boundary samples.
    pub flux_error: f64,
    /// `max |u − (R² − |x|²)/4|` over the unknowns.
    pub field_error: f64,
    pub converged: bool,
}

/// Solves `−Δ_h u = 1` on `B_R(0)` with zero data and compares with the
/// closed form `(R² − |x|²)/4` and its flux `−R/2`.
pub fn torsion_calibration(radius: f64, h: f64, opts: &PsorOptions) -> Result<TorsionCalibration> {
    let domain = DomainSpec::ball(radius)?;
    let grid = Arc::new(Grid::assemble(&domain, h)?);
    let free = vec![f64::NEG_INFINITY; grid.len()];
    let sol = psor_solve_with_source(&grid, &free, 0.0, 1.0, opts)?;
    let field_error = grid
        .rows()
        .iter()
        .map(|r| {
            let p = grid.point(r.node);
            (sol.u[r.node] - (radius * radius - p[0] * p[0] - p[1] * p[1]) / 4.0).abs()
        })
        .fold(0.0, f64::max);
    let samples = sample_boundary(&domain, DEFAULT_FLUX_SAMPLES)?;
    let nd = normal_derivative(&sol, &samples)?;
    let flux_error = nd.flux.iter().map(|f| (f + 0.5 * radius).abs()).fold(0.0, f64::max);
    Ok(TorsionCalibration {
        flux_error,
        field_error,
        converged: sol.converged(),
    })
}
