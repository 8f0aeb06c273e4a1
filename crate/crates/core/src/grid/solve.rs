use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};

use super::diagnostics::{coincidence_mask, field_energy};
use super::Grid;

/// Relaxation parameter choice for the sweeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Relaxation {
    Fixed(f64),
    /// `2 / (1 + sin(π h / extent))` with `extent` the box width.
    Auto,
}

impl Relaxation {
    pub fn resolve(self, grid: &Grid) -> f64 {
        match self {
            Relaxation::Fixed(w) => w,
            Relaxation::Auto => auto_omega(grid),
        }
    }
}

/// Optimal SOR parameter of the model Poisson problem on the grid box.
pub fn auto_omega(grid: &Grid) -> f64 {
    let extent = grid.h() * (grid.side() - 1) as f64;
    2.0 / (1.0 + (PI * grid.h() / extent).sin())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsorOptions {
    pub omega: Relaxation,
    pub tol: f64,
    pub max_sweeps: usize,
    /// Record the discrete Dirichlet energy after every sweep.
    pub record_energy: bool,
}

impl Default for PsorOptions {
    fn default() -> Self {
        Self {
            omega: Relaxation::Fixed(1.5),
            tol: 1e-10,
            max_sweeps: 200_000,
            record_energy: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyOptions {
    pub omega: Relaxation,
    pub tol: f64,
    /// Sweep budget per continuation level.
    pub max_sweeps: usize,
    /// First ε of the halving continuation.
    pub start_eps: f64,
}

impl Default for PenaltyOptions {
    fn default() -> Self {
        Self {
            omega: Relaxation::Auto,
            tol: 1e-10,
            max_sweeps: 200_000,
            start_eps: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationLog {
    pub sweeps: usize,
    pub final_update: f64,
    pub converged: bool,
    /// Energy before the first sweep and after each sweep, when recorded.
    pub energies: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    ProjectedRelaxation { omega: f64 },
    /// `admissibility_constant` is `C = max(ψ − v)/ε`.
    Penalty { eps: f64, admissibility_constant: f64 },
    /// Field supplied by the caller.
    Prescribed,
}

/// Nodal field over the whole grid box; non-unknown nodes hold the Dirichlet value.
#[derive(Debug, Clone)]
pub struct GridSolution {
    pub grid: Arc<Grid>,
    pub u: Vec<f64>,
    pub psi: Vec<f64>,
    pub dirichlet: f64,
    /// Constant right-hand side `f` of `−div(σ∇u) = f` off the coincidence set.
    pub source: f64,
    /// Coincidence mask at the default tolerance `h²‖ψ‖∞`.
    pub coincidence: Vec<bool>,
    pub log: IterationLog,
    pub method: Method,
}

impl GridSolution {
    /// Wraps an arbitrary field, e.g. for testing diagnostics.
    pub fn from_field(grid: Arc<Grid>, u: Vec<f64>, psi: Vec<f64>, dirichlet: f64, source: f64) -> Self {
        let mut sol = Self {
            grid,
            u,
            psi,
            dirichlet,
            source,
            coincidence: Vec::new(),
            log: IterationLog::default(),
            method: Method::Prescribed,
        };
        sol.coincidence = coincidence_mask(&sol, sol.default_ctol()).mask;
        sol
    }

    /// `h²·max |ψ|` over the unknowns.
    pub fn default_ctol(&self) -> f64 {
        let sup = self
            .grid
            .rows()
            .iter()
            .map(|r| self.psi[r.node].abs())
            .fold(0.0, f64::max);
        self.grid.h().powi(2) * sup
    }

    pub fn converged(&self) -> bool {
        self.log.converged
    }
}

fn check_inputs(grid: &Grid, psi: &[f64], dirichlet: f64) -> Result<()> {
    if psi.len() != grid.len() {
        return Err(Error::Precondition(format!(
            "obstacle has {} samples, grid has {} nodes",
            psi.len(),
            grid.len()
        )));
    }
    if !dirichlet.is_finite() {
        return Err(Error::Precondition(format!("Dirichlet value must be finite, got {dirichlet}")));
    }
    Ok(())
}

fn check_omega(omega: f64) -> Result<()> {
    if !(1.0..2.0).contains(&omega) {
        return Err(Error::Precondition(format!("relaxation must lie in [1, 2), got {omega}")));
    }
    Ok(())
}

fn initial_field(grid: &Grid, psi: &[f64], dirichlet: f64) -> Vec<f64> {
    let mut u = vec![dirichlet; grid.len()];
    for r in grid.rows() {
        u[r.node] = psi[r.node].max(dirichlet);
    }
    u
}

/// Projected SOR for `min{−div(σ∇u), u − ψ} = 0`, `u = g` on ∂Ω.
pub fn psor_solve(grid: &Arc<Grid>, psi: &[f64], dirichlet: f64, opts: &PsorOptions) -> Result<GridSolution> {
    psor_solve_with_source(grid, psi, dirichlet, 0.0, opts)
}

/// [`psor_solve`] with a constant source: `min{−div(σ∇u) − f, u − ψ} = 0`.
pub fn psor_solve_with_source(
    grid: &Arc<Grid>,
    psi: &[f64],
    dirichlet: f64,
    source: f64,
    opts: &PsorOptions,
) -> Result<GridSolution> {
    check_inputs(grid, psi, dirichlet)?;
    let omega = opts.omega.resolve(grid);
    check_omega(omega)?;
    let mut u = initial_field(grid, psi, dirichlet);
    let mut log = IterationLog::default();
    if opts.record_energy {
        log.energies.push(field_energy(grid, &u, false));
    }
    let rows = grid.rows();
    let side = grid.side();
    while log.sweeps < opts.max_sweeps {
        let mut update = 0.0f64;
        for seg in grid.segments() {
            let block = &rows[seg.start..seg.start + seg.len];
            if seg.uniform {
                let c = block[0].coef[0];
                let inv = 1.0 / block[0].diag;
                let first = block[0].node;
                for k in first..first + seg.len {
                    let gs = (c * (u[k + 1] + u[k - 1] + u[k + side] + u[k - side]) + source) * inv;
                    let old = u[k];
                    let new = (old + omega * (gs - old)).max(psi[k]);
                    update = update.max((new - old).abs());
                    u[k] = new;
                }
            } else {
                for r in block {
                    let s = r.coef[0] * u[r.nbr[0]]
                        + r.coef[1] * u[r.nbr[1]]
                        + r.coef[2] * u[r.nbr[2]]
                        + r.coef[3] * u[r.nbr[3]];
                    let gs = (s + r.bcoef * dirichlet + source) / r.diag;
                    let old = u[r.node];
                    let new = (old + omega * (gs - old)).max(psi[r.node]);
                    update = update.max((new - old).abs());
                    u[r.node] = new;
                }
            }
        }
        log.sweeps += 1;
        log.final_update = update;
        if opts.record_energy {
            log.energies.push(field_energy(grid, &u, false));
        }
        if update < opts.tol {
            log.converged = true;
            break;
        }
    }
    let mut sol = GridSolution::from_field(Arc::clone(grid), u, psi.to_vec(), dirichlet, source);
    sol.log = log;
    sol.method = Method::ProjectedRelaxation { omega };
    Ok(sol)
}

/// `(β, β′, β″)` of the fixed penalty shape: zero for `t ≤ 0`, `t³ − t⁴/2`
/// on `[0, 1]`, `t − 1/2` beyond.
pub fn penalty_beta(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if t <= 1.0 {
        let t2 = t * t;
        (t2 * t - 0.5 * t2 * t2, 3.0 * t2 - 2.0 * t2 * t, 6.0 * t * (1.0 - t))
    } else {
        (t - 0.5, 1.0, 0.0)
    }
}

/// Root of `diag·v − s − β((ψ − v)/ε) = 0`, which is increasing in `v`.
///
/// Newton steps are kept inside a shrinking bracket; any step leaving it is
/// replaced by bisection.
fn penalty_node(diag: f64, s: f64, psi: f64, eps: f64, start: f64) -> f64 {
    let mut lo = s / diag;
    let mut hi = lo.max(psi);
    if hi <= lo {
        return lo;
    }
    let mut v = start.clamp(lo, hi);
    for _ in 0..100 {
        let (b, db, _) = penalty_beta((psi - v) / eps);
        let f = diag * v - s - b;
        if f == 0.0 {
            return v;
        }
        if f > 0.0 {
            hi = v;
        } else {
            lo = v;
        }
        let newton = v - f / (diag + db / eps);
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - v).abs() <= 1e-15 * v.abs().max(1.0) || hi - lo <= 1e-15 * v.abs().max(1.0) {
            return next;
        }
        v = next;
    }
    v
}

/// Penalized problem `−div(σ∇v) = β((ψ − v)/ε)`, `v = g` on ∂Ω, by nonlinear
/// SOR with a scalar Newton solve per node and ε-halving continuation from
/// `opts.start_eps`.
pub fn penalty_solve(
    grid: &Arc<Grid>,
    psi: &[f64],
    dirichlet: f64,
    eps: f64,
    opts: &PenaltyOptions,
) -> Result<GridSolution> {
    check_inputs(grid, psi, dirichlet)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Precondition(format!("penalty parameter must lie in (0, 1), got {eps}")));
    }
    let omega = opts.omega.resolve(grid);
    check_omega(omega)?;
    let mut schedule = Vec::new();
    let mut level = opts.start_eps;
    while level > eps * (1.0 + 1e-12) {
        schedule.push(level);
        level *= 0.5;
    }
    schedule.push(eps);

    let mut v = initial_field(grid, psi, dirichlet);
    let mut log = IterationLog::default();
    for &e in &schedule {
        let mut sweeps = 0;
        log.converged = false;
        while sweeps < opts.max_sweeps {
            let mut update = 0.0f64;
            for r in grid.rows() {
                let s = r.coef[0] * v[r.nbr[0]]
                    + r.coef[1] * v[r.nbr[1]]
                    + r.coef[2] * v[r.nbr[2]]
                    + r.coef[3] * v[r.nbr[3]]
                    + r.bcoef * dirichlet;
                let old = v[r.node];
                let target = penalty_node(r.diag, s, psi[r.node], e, old);
                let new = old + omega * (target - old);
                update = update.max((new - old).abs());
                v[r.node] = new;
            }
            sweeps += 1;
            log.final_update = update;
            if update < opts.tol {
                log.converged = true;
                break;
            }
        }
        log.sweeps += sweeps;
    }
    let dip = grid
        .rows()
        .iter()
        .map(|r| psi[r.node] - v[r.node])
        .fold(0.0, f64::max);
    let mut sol = GridSolution::from_field(Arc::clone(grid), v, psi.to_vec(), dirichlet, 0.0);
    sol.log = log;
    sol.method = Method::Penalty {
        eps,
        admissibility_constant: dip / eps,
    };
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;

    fn disk(h: f64) -> Arc<Grid> {
        Arc::new(Grid::assemble(&DomainSpec::ball(1.0).unwrap(), h).unwrap())
    }

    #[test]
    fn beta_examples() {
        assert_eq!(penalty_beta(-1.0), (0.0, 0.0, 0.0));
        assert_eq!(penalty_beta(1.0), (0.5, 1.0, 0.0));
        assert_eq!(penalty_beta(3.0), (2.5, 1.0, 0.0));
    }

    #[test]
    fn beta_derivatives_match_finite_differences() {
        let step = 1e-6;
        for i in 0..1000 {
            let t = -0.5 + 2.0 * i as f64 / 999.0;
            let (_, d1, d2) = penalty_beta(t);
            let fd1 = (penalty_beta(t + step).0 - penalty_beta(t - step).0) / (2.0 * step);
            let fd2 = (penalty_beta(t + step).1 - penalty_beta(t - step).1) / (2.0 * step);
            assert!((fd1 - d1).abs() < 1e-6, "t = {t}");
            assert!((fd2 - d2).abs() < 1e-6, "t = {t}");
        }
    }

    #[test]
    fn inactive_obstacle_gives_zero() {
        let grid = disk(1.0 / 32.0);
        let psi = vec![-1e6; grid.len()];
        let opts = PsorOptions {
            omega: Relaxation::Auto,
            ..Default::default()
        };
        let sol = psor_solve(&grid, &psi, 0.0, &opts).unwrap();
        assert!(sol.converged());
        assert!(sol.u.iter().all(|v| v.abs() < 1e-10));
        assert!(sol.coincidence.iter().all(|&c| !c));
        let pen = penalty_solve(&grid, &psi, 0.0, 0.05, &PenaltyOptions::default()).unwrap();
        assert!(pen.u.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn high_dirichlet_value_lifts_off_obstacle() {
        let grid = disk(1.0 / 32.0);
        let psi = grid.sample(|p| 1.0 - 8.0 * (p[0] * p[0] + p[1] * p[1]));
        let opts = PsorOptions {
            omega: Relaxation::Auto,
            ..Default::default()
        };
        let sol = psor_solve(&grid, &psi, 1.2, &opts).unwrap();
        for r in grid.rows() {
            assert!(sol.u[r.node] > psi[r.node]);
        }
        assert!(sol.coincidence.iter().all(|&c| !c));
    }

    #[test]
    fn admissible_and_flagged_when_budget_runs_out() {
        let grid = disk(1.0 / 32.0);
        let psi = grid.sample(|p| 1.0 - 8.0 * (p[0] * p[0] + p[1] * p[1]));
        let opts = PsorOptions {
            max_sweeps: 3,
            ..Default::default()
        };
        let sol = psor_solve(&grid, &psi, 0.0, &opts).unwrap();
        assert!(!sol.converged());
        assert_eq!(sol.log.sweeps, 3);
        for r in grid.rows() {
            assert!(sol.u[r.node] >= psi[r.node] - 1e-12);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let grid = disk(1.0 / 16.0);
        let psi = vec![0.0; grid.len()];
        let opts = PsorOptions {
            omega: Relaxation::Fixed(2.0),
            ..Default::default()
        };
        assert!(psor_solve(&grid, &psi, 0.0, &opts).is_err());
        assert!(psor_solve(&grid, &psi[1..], 0.0, &PsorOptions::default()).is_err());
        assert!(penalty_solve(&grid, &psi, 0.0, 1.0, &PenaltyOptions::default()).is_err());
    }

    #[test]
    fn penalty_node_solves_scalar_equation() {
        for (diag, s, psi, eps) in [(4.0, 1.0, 2.0, 0.1), (4.0, 1.0, 0.1, 0.01), (1e4, 3.0, 1.0, 0.025)] {
            let v = penalty_node(diag, s, psi, eps, 0.0);
            let r = diag * v - s - penalty_beta((psi - v) / eps).0;
            assert!(r.abs() < 1e-9 * diag, "{r}");
        }
    }
}
