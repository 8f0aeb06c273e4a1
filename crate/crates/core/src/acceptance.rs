//! Acceptance suite: twelve criteria, each reduced to named measurements and
//! a pass flag. Tolerances are fixed here and not configurable.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::optimize::bisect;
use crate::geometry::{norm, DomainSpec, Obstacle};
use crate::grid::{penalty_beta, penalty_solve, psor_solve, Grid, PenaltyOptions, PsorOptions, Relaxation};
use crate::radial::{
    boundary_flux_monotonicity, exterior_nonexistence_probe, solve_radial_one_phase, solve_radial_two_phase,
};
use crate::runner::directions;
use crate::serrin::{
    comparison_solutions, inclusions, report_from_solution, sandwich_violations, solve_on, torsion_calibration,
    StabilityOptions,
};
use crate::two_phase::{
    dirichlet_deviation, moving_plane_scan, moving_plane_scans, solve_two_phase_grid, Conductivity,
    InterfaceEstimate, MovingPlaneEvent, TwoPhaseOptions,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    /// Deterministic outputs, compared bitwise by criterion 12.
    pub measurements: Vec<(String, f64)>,
    /// Names of the required checks that failed.
    pub failures: Vec<String>,
    pub seconds: f64,
    /// Set when the criterion could not be evaluated.
    pub error: Option<String>,
}

impl Outcome {
    fn new(id: usize, name: &'static str) -> Self {
        Self {
            id,
            name,
            passed: true,
            measurements: Vec::new(),
            failures: Vec::new(),
            seconds: 0.0,
            error: None,
        }
    }

    fn measure(&mut self, key: impl Into<String>, value: f64) -> f64 {
        self.measurements.push((key.into(), value));
        value
    }

    fn with_runtime_limit(mut self, seconds: f64) -> Self {
        self.check("runtime", self.seconds < seconds);
        self
    }

    fn check(&mut self, name: &str, ok: bool) {
        if !ok {
            self.passed = false;
            self.failures.push(name.to_string());
        }
    }

    /// Records `value` and requires `ok`.
    fn require(&mut self, key: impl Into<String>, value: f64, ok: bool) {
        let key = key.into();
        self.measure(key.clone(), value);
        self.check(&key, ok);
    }

    /// One summary line: `PASS|FAIL [id] name: key=value ...`.
    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        let values: Vec<String> = self.measurements.iter().map(|(k, v)| format!("{k}={v:.6e}")).collect();
        let mut s = format!("{status} [{:>2}] {}: {}", self.id, self.name, values.join(" "));
        if !self.failures.is_empty() {
            s.push_str(&format!(" failed=[{}]", self.failures.join(", ")));
        }
        if let Some(e) = &self.error {
            s.push_str(&format!(" error={e}"));
        }
        s.push_str(&format!(" ({:.1}s)", self.seconds));
        s
    }
}

fn timed(id: usize, name: &'static str, body: impl FnOnce(&mut Outcome) -> Result<()>) -> Outcome {
    let clock = Instant::now();
    let mut out = Outcome::new(id, name);
    if let Err(e) = body(&mut out) {
        out.check("evaluation", false);
        out.error = Some(e.to_string());
    }
    out.seconds = clock.elapsed().as_secs_f64();
    out
}

fn psor() -> PsorOptions {
    PsorOptions {
        omega: Relaxation::Auto,
        ..Default::default()
    }
}

/// `ψ = 1 − 8r²` in the plane.
fn cap() -> Obstacle {
    Obstacle::cap(2, 1.0, 8.0).expect("valid cap")
}

/// `ψ = 1 − 4r²` in dimension `n`.
fn cap4(n: usize) -> Obstacle {
    Obstacle::cap(n, 1.0, 4.0).expect("valid cap")
}

fn unit_ball() -> DomainSpec {
    DomainSpec::ball(1.0).expect("valid ball")
}

fn stability_domains() -> Result<Vec<DomainSpec>> {
    Ok(vec![
        DomainSpec::ellipse(1.0, 1.3)?,
        DomainSpec::shifted_ball(1.0, [0.2, 0.0])?,
        DomainSpec::perturbed_ball(1.0, 0.02, 3)?,
        DomainSpec::perturbed_ball(1.0, 0.05, 3)?,
        DomainSpec::perturbed_ball(1.0, 0.1, 3)?,
    ])
}

pub fn torsion_calibration_criterion() -> Outcome {
    timed(1, "torsion calibration", |o| {
        let coarse = torsion_calibration(1.0, 1.0 / 128.0, &psor())?;
        let fine = torsion_calibration(1.0, 1.0 / 256.0, &psor())?;
        o.require("flux_err_h128", coarse.flux_error, coarse.flux_error <= 1e-2);
        o.require("field_err_h128", coarse.field_error, coarse.field_error <= 5e-4);
        o.measure("field_err_h256", fine.field_error);
        o.measure("flux_err_h256", fine.flux_error);
        let drop = coarse.field_error / fine.field_error;
        o.require("field_err_drop", drop, drop >= 3.0);
        o.check("converged", coarse.converged && fine.converged);
        Ok(())
    })
    .with_runtime_limit(30.0)
}

pub fn radial_oracle_criterion() -> Outcome {
    timed(2, "radial oracle agreement", |o| {
        let psi = cap();
        let sol = solve_radial_one_phase(&psi, 1.0, 0.0)?;
        let matching = |a: f64| 1.0 - 8.0 * a * a + 16.0 * a * a * a.ln();
        let bracketed = matching(0.16) * matching(0.17) < 0.0;
        let root = bisect(matching, 0.16, 0.17, 0.0);
        let a = sol.contact_radius;
        o.require("a", a, bracketed && (0.16..0.17).contains(&a));
        o.require("a_minus_oracle", (a - root).abs(), (a - root).abs() <= 1e-10);
        let identity = sol.invariants().flux_identity;
        o.require("flux_identity", identity, identity <= 1e-10);
        let grid_sol = solve_on(&unit_ball(), &psi, 1.0 / 256.0, &psor())?;
        let mut err = 0.0f64;
        for r in grid_sol.grid.rows() {
            let p = grid_sol.grid.point(r.node);
            err = err.max((grid_sol.u[r.node] - sol.eval(norm(p))?).abs());
        }
        o.require("field_err_h256", err, err <= 5e-3);
        o.check("converged", grid_sol.converged());
        Ok(())
    })
}

pub fn flux_monotonicity_criterion() -> Outcome {
    timed(3, "boundary flux monotonicity", |o| {
        let radii = [0.5, 0.75, 1.0, 1.5, 2.0];
        let table = boundary_flux_monotonicity(&cap(), &radii)?;
        for (r, f) in &table {
            o.require(format!("minus_flux_r{r}"), *f, *f > 1e-6);
        }
        let margin = table
            .windows(2)
            .map(|w| w[0].1 - w[1].1)
            .fold(f64::INFINITY, f64::min);
        o.require("min_margin", margin, margin > 1e-6);
        Ok(())
    })
}

pub fn symmetry_criterion() -> Outcome {
    timed(4, "Neumann rigidity on the ball", |o| {
        let psi = cap();
        let sol = solve_on(&unit_ball(), &psi, 1.0 / 256.0, &psor())?;
        let rep = report_from_solution(&sol, &psi, &StabilityOptions { psor: psor(), ..Default::default() })?;
        o.require("eps", rep.eps, rep.eps <= 5e-3);
        o.require("R_minus_rho", rep.lhs, rep.lhs == 0.0);
        o.measure("c", rep.c);
        o.check("converged", rep.converged);
        Ok(())
    })
}

pub fn stability_criterion() -> Outcome {
    timed(5, "stability inequality R - rho <= K eps", |o| {
        let psi = cap();
        let opts = StabilityOptions {
            psor: psor(),
            ..Default::default()
        };
        let reports: Vec<_> = stability_domains()?
            .par_iter()
            .map(|d| {
                let sol = solve_on(d, &psi, 1.0 / 128.0, &opts.psor)?;
                report_from_solution(&sol, &psi, &opts)
            })
            .collect::<Result<_>>()?;
        for rep in &reports {
            let tag = format!("{}{:?}", rep.domain, rep.params);
            o.measure(format!("{tag}.lhs"), rep.lhs);
            o.measure(format!("{tag}.rhs"), rep.rhs);
            o.measure(format!("{tag}.converged"), f64::from(u8::from(rep.converged)));
            if rep.converged {
                o.check(&format!("{tag}.satisfied"), rep.satisfied);
            }
        }
        o.check("any_converged", reports.iter().any(|r| r.converged));
        Ok(())
    })
    .with_runtime_limit(300.0)
}

pub fn proof_structure_criterion() -> Outcome {
    timed(6, "sandwich and coincidence inclusions", |o| {
        let psi = cap();
        let rows: Vec<_> = stability_domains()?
            .par_iter()
            .map(|d| {
                let (inner, outer) = comparison_solutions(d, &psi)?;
                let sol = solve_on(d, &psi, 1.0 / 128.0, &psor())?;
                let (v1, v2) = sandwich_violations(&sol, &inner, &outer);
                let inc = inclusions(&sol, &inner, &outer, sol.default_ctol());
                Ok((format!("{}{:?}", d.name(), d.params()), v1, v2, inc.all()))
            })
            .collect::<Result<_>>()?;
        for (tag, v1, v2, all) in rows {
            o.require(format!("{tag}.v1"), v1, v1 <= 1e-3);
            o.require(format!("{tag}.v2"), v2, v2 <= 1e-3);
            o.require(format!("{tag}.inclusions"), f64::from(u8::from(all)), all);
        }
        Ok(())
    })
}

pub fn energy_descent_criterion() -> Outcome {
    timed(7, "energy descent with omega = 1", |o| {
        let grid = Arc::new(Grid::assemble(&unit_ball(), 1.0 / 64.0)?);
        let psi = grid.sample(|p| cap().at(p));
        let opts = PsorOptions {
            omega: Relaxation::Fixed(1.0),
            record_energy: true,
            ..Default::default()
        };
        let sol = psor_solve(&grid, &psi, 0.0, &opts)?;
        let energies = &sol.log.energies;
        let worst = energies
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max);
        o.require("sweeps", energies.len() as f64, energies.len() >= 2 && sol.converged());
        o.require("max_energy_increase", worst, worst <= 0.0);
        o.measure("final_energy", *energies.last().unwrap_or(&f64::NAN));
        Ok(())
    })
}

pub fn penalty_criterion() -> Outcome {
    timed(8, "penalty convergence and beta shape", |o| {
        let grid = Arc::new(Grid::assemble(&unit_ball(), 1.0 / 64.0)?);
        let psi = grid.sample(|p| cap().at(p));
        let reference = psor_solve(&grid, &psi, 0.0, &psor())?;
        let eps = [0.1, 0.05, 0.025];
        let mut errors = Vec::new();
        for e in eps {
            let v = penalty_solve(&grid, &psi, 0.0, e, &PenaltyOptions::default())?;
            let err = grid
                .rows()
                .iter()
                .map(|r| (v.u[r.node] - reference.u[r.node]).abs())
                .fold(0.0, f64::max);
            errors.push(o.measure(format!("sup_err_eps{e}"), err));
        }
        for k in 0..2 {
            let ratio = errors[k] / errors[k + 1];
            o.require(format!("ratio_{}", k + 1), ratio, (1.5..=3.0).contains(&ratio));
        }
        let mut dead = true;
        let mut convex = true;
        let mut linear = true;
        for k in 0..1000 {
            let t = -2.0 + 5.0 * k as f64 / 999.0;
            let (b, db, ddb) = penalty_beta(t);
            convex &= ddb >= 0.0;
            if t <= 0.0 {
                dead &= b == 0.0 && db == 0.0 && ddb == 0.0;
            }
            if t >= 1.0 {
                linear &= b == t - 0.5 && db == 1.0;
            }
        }
        o.require("beta_dead_zone", f64::from(u8::from(dead)), dead);
        o.require("beta_convex", f64::from(u8::from(convex)), convex);
        o.require("beta_linear_branch", f64::from(u8::from(linear)), linear);
        Ok(())
    })
}

pub fn two_phase_closed_form_criterion() -> Outcome {
    timed(9, "two-phase closed form", |o| {
        let sol = solve_radial_two_phase(&cap4(3), 1.0, 2.0, 2.0, 1.0)?;
        let a_exact = 1.0 / (2.0 * 3f64.sqrt());
        let d_exact = 3f64.sqrt() / 9.0;
        let a = sol.inner.contact_radius;
        o.require("a_err", (a - a_exact).abs(), (a - a_exact).abs() <= 1e-10);
        let d_err = (sol.interface_value - d_exact).abs();
        o.require("d_err", d_err, d_err <= 1e-10);
        // Matching with both annulus terms written out: ψ(a) + F(1/a − 1) + 2F(1 − 1/2) = 0, F = −8a³.
        let matching = |a: f64| 1.0 - 4.0 * a * a - 8.0 * a * a * a * (1.0 / a - 1.0) - 8.0 * a * a * a;
        let root = bisect(matching, 0.2, 0.4, 0.0);
        o.require("a_vs_bisection", (root - a).abs(), (root - a).abs() <= 1e-10);

        let oracle = solve_radial_two_phase(&cap4(2), 1.0, 2.0, 2.0, 1.0)?;
        let cond = Conductivity::new(2.0, 1.0, unit_ball())?;
        let opts = TwoPhaseOptions {
            psor: psor(),
            samples: 256,
        };
        let grid = solve_two_phase_grid(&cond, 2.0, &cap4(2), InterfaceEstimate::Minimax, 1.0 / 128.0, &opts)?;
        let err = (grid.d_best - oracle.interface_value).abs();
        o.measure("d_oracle_n2", oracle.interface_value);
        o.require("d_grid_err_n2", err, err <= 2e-2);
        o.check("converged", grid.field.converged());
        Ok(())
    })
}

pub fn two_phase_rigidity_criterion() -> Outcome {
    timed(10, "Dirichlet rigidity and moving planes", |o| {
        let h = 1.0 / 128.0;
        let opts = TwoPhaseOptions {
            psor: psor(),
            samples: 256,
        };
        let psi = cap4(2);
        let centered = Conductivity::new(2.0, 1.0, unit_ball())?;
        let sol = solve_two_phase_grid(&centered, 2.0, &psi, InterfaceEstimate::Minimax, h, &opts)?;
        let base = dirichlet_deviation(&sol).deviation;
        o.require("centered_deviation", base, base <= 5e-3);
        let scans = moving_plane_scans(&sol, &directions(8))?;
        let origin = scans
            .iter()
            .all(|r| r.event == MovingPlaneEvent::OriginReached && r.lambda_star == 0.0);
        o.require("all_origin_reached", f64::from(u8::from(origin)), origin);
        let w = scans
            .iter()
            .map(|r| r.max_abs_w_minus.max(r.max_abs_w_plus))
            .fold(0.0, f64::max);
        o.require("max_abs_w", w, w <= 5e-3);

        let shifted = Conductivity::new(2.0, 1.0, DomainSpec::shifted_ball(1.0, [0.2, 0.0])?)?;
        let sol = solve_two_phase_grid(&shifted, 2.0, &psi, InterfaceEstimate::Minimax, h, &opts)?;
        let dev = dirichlet_deviation(&sol).deviation;
        o.require("shifted_deviation_ratio", dev / base, dev >= 10.0 * base);
        let scan = moving_plane_scan(&sol, [1.0, 0.0])?;
        let tangency = scan.event == MovingPlaneEvent::InternalTangency;
        o.require("shifted_tangency", f64::from(u8::from(tangency)), tangency);
        o.require(
            "shifted_lambda_star",
            scan.lambda_star,
            (scan.lambda_star - 0.2).abs() <= h,
        );
        o.measure("shifted_min_w_minus", scan.min_w_minus);
        Ok(())
    })
}

pub fn exterior_criterion() -> Outcome {
    timed(11, "exterior problem and planar exclusion", |o| {
        let three = exterior_nonexistence_probe(&cap4(3), 1.0, 2.0, 1.0, &[8.0, 16.0])?;
        let change = ((three[1].1 - three[0].1) / three[0].1).abs();
        o.require("n3_change_L8_L16", change, change < 0.01);
        let exact = solve_radial_two_phase(&cap4(3), 1.0, f64::INFINITY, 2.0, 1.0)?;
        let oracle = |a: f64| 1.0 - 12.0 * a * a - 8.0 * a * a * a;
        let bracketed = oracle(0.26) * oracle(0.27) < 0.0;
        let root = bisect(oracle, 0.26, 0.27, 0.0);
        let a_err = (exact.inner.contact_radius - root).abs();
        o.require("n3_exterior_a_err", a_err, bracketed && a_err <= 1e-10);
        let d_err = (exact.interface_value - 16.0 * root.powi(3)).abs();
        o.require("n3_exterior_d_err", d_err, d_err <= 1e-10);
        let two = exterior_nonexistence_probe(&cap4(2), 1.0, 2.0, 1.0, &[4.0, 8.0, 16.0])?;
        for w in two.windows(2) {
            let drift = ((w[1].1 - w[0].1) / w[0].1).abs();
            o.require(format!("n2_drift_L{}_L{}", w[0].0, w[1].0), drift, drift > 0.1);
        }
        Ok(())
    })
}

/// Criteria 1 to 11 in order.
pub fn run_numbered() -> Vec<Outcome> {
    vec![
        torsion_calibration_criterion(),
        radial_oracle_criterion(),
        flux_monotonicity_criterion(),
        symmetry_criterion(),
        stability_criterion(),
        proof_structure_criterion(),
        energy_descent_criterion(),
        penalty_criterion(),
        two_phase_closed_form_criterion(),
        two_phase_rigidity_criterion(),
        exterior_criterion(),
    ]
}

/// Criterion 12: two passes must agree bit for bit in every measurement.
pub fn determinism(first: &[Outcome], second: &[Outcome]) -> Outcome {
    let mut out = Outcome::new(12, "bitwise determinism");
    let mut mismatches = 0usize;
    let mut compared = 0usize;
    for (a, b) in first.iter().zip(second) {
        let same = a.error == b.error
            && a.measurements.len() == b.measurements.len()
            && a.measurements
                .iter()
                .zip(&b.measurements)
                .all(|((ka, va), (kb, vb))| ka == kb && va.to_bits() == vb.to_bits());
        compared += a.measurements.len();
        if !same {
            mismatches += 1;
        }
    }
    out.measure("criteria_compared", first.len().min(second.len()) as f64);
    out.measure("measurements_compared", compared as f64);
    out.require(
        "mismatched_criteria",
        mismatches as f64,
        mismatches == 0 && first.len() == second.len() && !first.is_empty(),
    );
    out
}

/// Runs `f` inside a dedicated rayon pool with `threads` workers.
pub fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// All twelve criteria. The first pass runs on one thread, the determinism
/// pass on eight.
pub fn run_all() -> Vec<Outcome> {
    let clock = Instant::now();
    let mut first = in_pool(1, run_numbered);
    let second = in_pool(8, run_numbered);
    let mut det = determinism(&first, &second);
    det.seconds = clock.elapsed().as_secs_f64();
    first.push(det);
    first
}

/// `id,name,passed,seconds,measurements` with measurements as `key=value` pairs.
pub fn write_csv(outcomes: &[Outcome], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "name", "passed", "seconds", "measurements"])?;
    for o in outcomes {
        let values: Vec<String> = o.measurements.iter().map(|(k, v)| format!("{k}={v}")).collect();
        w.write_record([
            o.id.to_string(),
            o.name.to_string(),
            o.passed.to_string(),
            o.seconds.to_string(),
            values.join(" "),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinism_flags_bit_differences() {
        let mut a = Outcome::new(1, "x");
        a.measure("v", 0.1);
        let mut b = a.clone();
        assert!(determinism(&[a.clone()], &[b.clone()]).passed);
        b.measurements[0].1 = f64::from_bits(0.1f64.to_bits() + 1);
        assert!(!determinism(&[a], &[b]).passed);
        assert!(!determinism(&[], &[]).passed);
    }

    #[test]
    fn line_format() {
        let mut o = Outcome::new(3, "demo");
        o.require("m", 1.0, false);
        assert!(o.line().starts_with("FAIL [ 3] demo: m=1.000000e0"));
    }
}
