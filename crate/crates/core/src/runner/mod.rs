//! Batch experiment driver behind the `obstacle-lab` binary.

pub mod config;

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{sample_boundary, DomainKind, DomainSpec, Point};
use crate::grid::{
    coincidence_mask, complementarity_residual, variational_inequality_check, write_field_csv, write_flux_csv,
    normal_derivative,
};
use crate::radial::{boundary_flux_monotonicity, exterior_nonexistence_probe, solve_radial_one_phase};
use crate::serrin::{
    comparison_solutions, inclusions, report_from_solution, sandwich_violations, solve_on, stability_report_with,
    torsion_calibration, StabilityOptions, StabilityReport, REPORT_COLUMNS,
};
use crate::two_phase::{
    connectedness_check, dirichlet_deviation, moving_plane_scans, penalized_two_phase, solve_two_phase_grid,
    transmission_residual, write_two_phase_field_csv, Conductivity, TwoPhaseOptions,
    TwoPhaseSolution, MOVING_PLANE_COLUMNS,
};

pub use config::{ExperimentConfig, ExperimentKind, KeyType, KEYS};

/// Environment variable naming the output root.
pub const OUTPUT_ROOT_VAR: &str = "OBSTACLE_LAB_OUT";
const DEFAULT_OUTPUT_ROOT: &str = "obstacle-lab-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    /// Unparseable or rejected config, I/O failures and other errors.
    Failure = 1,
    Hypothesis = 2,
    NonConvergence = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn for_error(err: &Error) -> Self {
        match err {
            Error::Hypothesis(_) | Error::Nonexistence(_) => Self::Hypothesis,
            _ => Self::Failure,
        }
    }
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR).map_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT), PathBuf::from)
}

/// Results of one experiment, held in memory until written.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Extra files `(name, contents)` written next to `results.csv`.
    pub artifacts: Vec<(String, Vec<u8>)>,
    pub converged: bool,
}

impl Experiment {
    fn new(kind: ExperimentKind) -> Self {
        Self {
            columns: columns(kind).iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            artifacts: Vec::new(),
            converged: true,
        }
    }

    fn artifact(&mut self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        self.artifacts.push((name.to_string(), buf));
        Ok(())
    }

    pub fn results_csv(&self) -> Result<Vec<u8>> {
        table_csv(&self.columns, &self.rows)
    }
}

fn table_csv(columns: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(columns)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

const TWO_PHASE_COLUMNS: [&str; 18] = [
    "domain",
    "params",
    "sigma_plus",
    "sigma_minus",
    "L",
    "h",
    "d_best",
    "deviation",
    "consistent",
    "transmission",
    "mean_jump",
    "flux_scale",
    "components",
    "min_u_minus",
    "max_u_minus",
    "sweeps",
    "converged",
    "shrunk",
];

/// Columns of `results.csv` for each kind.
pub fn columns(kind: ExperimentKind) -> &'static [&'static str] {
    match kind {
        ExperimentKind::Radial => &[
            "N",
            "R",
            "g",
            "a",
            "plateau_radius",
            "boundary_flux",
            "value_mismatch",
            "slope_mismatch",
            "flux_identity",
        ],
        ExperimentKind::Serrin | ExperimentKind::StabilitySweep => &REPORT_COLUMNS,
        ExperimentKind::TwoPhase => &TWO_PHASE_COLUMNS,
        ExperimentKind::MovingPlane => &MOVING_PLANE_COLUMNS,
        ExperimentKind::ExteriorProbe => &["N", "r_D", "L", "d", "relative_change"],
        ExperimentKind::Calibrate => &["R", "h", "flux_error", "field_error", "converged"],
    }
}

fn fmt_params(p: &[f64]) -> String {
    p.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

/// Runs the experiment without touching the filesystem.
pub fn execute(cfg: &ExperimentConfig) -> Result<Experiment> {
    let mut exp = Experiment::new(cfg.kind);
    match cfg.kind {
        ExperimentKind::Radial => radial(cfg, &mut exp)?,
        ExperimentKind::Serrin => serrin(cfg, &mut exp)?,
        ExperimentKind::StabilitySweep => stability_sweep(cfg, &mut exp)?,
        ExperimentKind::TwoPhase => two_phase(cfg, &mut exp)?,
        ExperimentKind::MovingPlane => moving_plane(cfg, &mut exp)?,
        ExperimentKind::ExteriorProbe => probe(cfg, &mut exp)?,
        ExperimentKind::Calibrate => {
            let cal = torsion_calibration(cfg.calibrate_radius, cfg.h, &cfg.psor())?;
            exp.converged = cal.converged;
            exp.rows.push(vec![
                cfg.calibrate_radius.to_string(),
                cfg.h.to_string(),
                cal.flux_error.to_string(),
                cal.field_error.to_string(),
                cal.converged.to_string(),
            ]);
        }
    }
    Ok(exp)
}

fn radial(cfg: &ExperimentConfig, exp: &mut Experiment) -> Result<()> {
    let sol = solve_radial_one_phase(&cfg.obstacle, cfg.radial_radius, cfg.dirichlet)?;
    let inv = sol.invariants();
    exp.rows.push(vec![
        cfg.obstacle.dimension().to_string(),
        cfg.radial_radius.to_string(),
        cfg.dirichlet.to_string(),
        sol.contact_radius.to_string(),
        sol.plateau_radius.to_string(),
        sol.boundary_flux.to_string(),
        inv.value_mismatch.to_string(),
        inv.slope_mismatch.to_string(),
        inv.flux_identity.to_string(),
    ]);
    let extent = if cfg.radial_radius.is_finite() {
        cfg.radial_radius
    } else {
        4.0 * cfg.obstacle.support_radius()
    };
    let profile: Vec<Vec<String>> = (0..=200)
        .map(|k| {
            let r = extent * k as f64 / 200.0;
            Ok(vec![
                r.to_string(),
                sol.eval(r)?.to_string(),
                cfg.obstacle.value(r).to_string(),
            ])
        })
        .collect::<Result<_>>()?;
    exp.artifacts.push((
        "profile.csv".into(),
        table_csv(&["r".into(), "u".into(), "psi".into()], &profile)?,
    ));
    let radii: Vec<f64> = cfg
        .radii
        .iter()
        .copied()
        .filter(|&r| r > cfg.obstacle.support_radius())
        .collect();
    let mono = boundary_flux_monotonicity(&cfg.obstacle, &radii)?;
    let rows: Vec<Vec<String>> = mono.iter().map(|(r, f)| vec![r.to_string(), f.to_string()]).collect();
    exp.artifacts.push((
        "flux_monotonicity.csv".into(),
        table_csv(&["radius".into(), "minus_flux".into()], &rows)?,
    ));
    Ok(())
}

fn stability_options(cfg: &ExperimentConfig) -> StabilityOptions {
    StabilityOptions {
        psor: cfg.psor(),
        samples: cfg.samples,
        c_override: None,
        calibrate_radius: None,
    }
}

fn serrin(cfg: &ExperimentConfig, exp: &mut Experiment) -> Result<()> {
    crate::serrin::check_hypotheses(&cfg.domain, &cfg.obstacle)?;
    let sol = solve_on(&cfg.domain, &cfg.obstacle, cfg.h, &cfg.psor())?;
    let report = report_from_solution(&sol, &cfg.obstacle, &stability_options(cfg))?;
    exp.converged = report.converged;
    exp.rows.push(report.csv_record());

    let ctol = cfg.ctol.unwrap_or_else(|| sol.default_ctol());
    let mask = coincidence_mask(&sol, ctol);
    let comp = complementarity_residual(&sol);
    let vi = variational_inequality_check(&sol, cfg.trials, cfg.seed);
    let (inner, outer) = comparison_solutions(&cfg.domain, &cfg.obstacle)?;
    let (v1, v2) = sandwich_violations(&sol, &inner, &outer);
    let inc = inclusions(&sol, &inner, &outer, ctol);
    let checks = vec![vec![
        comp.superharmonicity.to_string(),
        comp.admissibility.to_string(),
        comp.complementarity.to_string(),
        vi.to_string(),
        v1.to_string(),
        v2.to_string(),
        inc.all().to_string(),
        mask.count.to_string(),
        mask.radius.to_string(),
        sol.log.sweeps.to_string(),
        sol.converged().to_string(),
    ]];
    let names = [
        "superharmonicity",
        "admissibility",
        "complementarity",
        "vi_min",
        "sandwich_inner",
        "sandwich_outer",
        "inclusions",
        "coincidence_nodes",
        "coincidence_radius",
        "sweeps",
        "converged",
    ];
    exp.artifacts.push((
        "checks.csv".into(),
        table_csv(&names.map(String::from), &checks)?,
    ));
    exp.artifact("field.csv", |buf| write_field_csv(&sol, &mask.mask, buf))?;
    let samples = sample_boundary(&cfg.domain, cfg.samples)?;
    let nd = normal_derivative(&sol, &samples)?;
    exp.artifact("flux.csv", |buf| write_flux_csv(&samples, &nd.flux, buf))
}

fn stability_sweep(cfg: &ExperimentConfig, exp: &mut Experiment) -> Result<()> {
    let (radius, mode) = match cfg.domain.kind() {
        DomainKind::PerturbedBall { radius, mode, .. } => (radius, mode),
        DomainKind::Ball { radius } => (radius, 3),
        _ => {
            return Err(Error::Config {
                line: 0,
                message: "stability-sweep perturbs a ball; use domain.kind = ball or perturbed-ball".into(),
            })
        }
    };
    let opts = stability_options(cfg);
    let reports: Vec<StabilityReport> = cfg
        .amplitudes
        .par_iter()
        .map(|&amp| {
            let domain = DomainSpec::perturbed_ball(radius, amp, mode)?;
            stability_report_with(&domain, &cfg.obstacle, cfg.h, &opts)
        })
        .collect::<Result<_>>()?;
    exp.converged = reports.iter().all(|r| r.converged);
    exp.rows = reports.iter().map(StabilityReport::csv_record).collect();
    Ok(())
}

fn solve_two_phase(cfg: &ExperimentConfig) -> Result<TwoPhaseSolution> {
    let cond = Conductivity::new(cfg.sigma_plus, cfg.sigma_minus, cfg.domain)?;
    let opts = TwoPhaseOptions {
        psor: cfg.psor(),
        samples: cfg.samples,
    };
    solve_two_phase_grid(&cond, cfg.outer_radius, &cfg.obstacle, cfg.estimate, cfg.h, &opts)
}

fn two_phase(cfg: &ExperimentConfig, exp: &mut Experiment) -> Result<()> {
    let sol = solve_two_phase(cfg)?;
    let dev = dirichlet_deviation(&sol);
    let tr = transmission_residual(&sol);
    let conn = connectedness_check(&sol);
    exp.converged = sol.field.converged();
    exp.rows.push(vec![
        cfg.domain.name().to_string(),
        fmt_params(&cfg.domain.params()),
        cfg.sigma_plus.to_string(),
        cfg.sigma_minus.to_string(),
        cfg.outer_radius.to_string(),
        cfg.h.to_string(),
        dev.d_best.to_string(),
        dev.deviation.to_string(),
        dev.consistent.to_string(),
        tr.residual.to_string(),
        tr.mean_jump.to_string(),
        tr.flux_scale.to_string(),
        conn.components.to_string(),
        conn.min_u_minus.to_string(),
        conn.max_u_minus.to_string(),
        sol.field.log.sweeps.to_string(),
        sol.field.converged().to_string(),
        sol.shrunk.to_string(),
    ]);
    exp.artifact("field.csv", |buf| write_two_phase_field_csv(&sol, buf))?;
    let interface: Vec<Vec<String>> = sol
        .interface
        .iter()
        .enumerate()
        .map(|(k, s)| {
            vec![
                s.point[0].to_string(),
                s.point[1].to_string(),
                sol.interface_values[k].to_string(),
                sol.flux_plus[k].to_string(),
                sol.flux_minus[k].to_string(),
            ]
        })
        .collect();
    exp.artifacts.push((
        "interface.csv".into(),
        table_csv(&["x", "y", "u", "flux_plus", "flux_minus"].map(String::from), &interface)?,
    ));
    if let Some(eps) = &cfg.eps {
        let (_, rec) = penalized_two_phase(&sol, &cfg.obstacle, eps, &cfg.psor(), &cfg.penalty())?;
        let rows: Vec<Vec<String>> = rec
            .eps
            .iter()
            .enumerate()
            .map(|(k, e)| {
                vec![
                    e.to_string(),
                    rec.sup_diff_rho[k].to_string(),
                    rec.sup_diff_psi[k].to_string(),
                    rec.min_margin[k].to_string(),
                ]
            })
            .collect();
        exp.artifacts.push((
            "penalized.csv".into(),
            table_csv(&["eps", "sup_diff_rho", "sup_diff_psi", "min_margin"].map(String::from), &rows)?,
        ));
    }
    Ok(())
}

/// `k` unit directions at angles `2πj/k`.
pub fn directions(k: usize) -> Vec<Point> {
    (0..k)
        .map(|j| {
            let a = TAU * j as f64 / k as f64;
            [a.cos(), a.sin()]
        })
        .collect()
}

fn moving_plane(cfg: &ExperimentConfig, exp: &mut Experiment) -> Result<()> {
    let sol = solve_two_phase(cfg)?;
    exp.converged = sol.field.converged();
    let reports = moving_plane_scans(&sol, &directions(cfg.directions))?;
    exp.rows = reports.iter().map(|r| r.csv_record()).collect();
    Ok(())
}

fn probe(cfg: &ExperimentConfig, exp: &mut Experiment) -> Result<()> {
    let values = exterior_nonexistence_probe(
        &cfg.obstacle,
        cfg.interface_radius,
        cfg.sigma_plus,
        cfg.sigma_minus,
        &cfg.schedule,
    )?;
    let mut prev: Option<f64> = None;
    for (l, d) in values {
        let change = prev.map_or(String::new(), |p| ((d - p) / p).abs().to_string());
        exp.rows.push(vec![
            cfg.obstacle.dimension().to_string(),
            cfg.interface_radius.to_string(),
            l.to_string(),
            d.to_string(),
            change,
        ]);
        prev = Some(d);
    }
    Ok(())
}

/// What a `run` or `sweep` produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub status: ExitStatus,
    pub directory: PathBuf,
    pub files: Vec<PathBuf>,
}

fn write_manifest(
    dir: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    status: ExitStatus,
    files: &[PathBuf],
    started: SystemTime,
    elapsed: f64,
) -> Result<PathBuf> {
    let started = started.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let names: Vec<String> = files
        .iter()
        .filter_map(|f| f.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    let mut text = format!(
        "# obstacle-lab run manifest\nrun.command = {command}\nrun.version = {}\nrun.started_unix = {started}\nrun.elapsed_seconds = {elapsed}\nrun.status = {}\nrun.files = {}\n# config\n",
        env!("CARGO_PKG_VERSION"),
        status.code(),
        names.join(", "),
    );
    text.push_str(&cfg.echo());
    let path = dir.join("manifest.txt");
    fs::write(&path, text)?;
    Ok(path)
}

/// Executes `cfg` and writes `results.csv`, the artifacts and `manifest.txt`
/// into `root/<experiment.output>`.
pub fn run(cfg: &ExperimentConfig, root: &Path) -> Result<RunOutcome> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let exp = execute(cfg)?;
    let dir = root.join(&cfg.output);
    fs::create_dir_all(&dir)?;
    let mut files = vec![dir.join("results.csv")];
    fs::write(&files[0], exp.results_csv()?)?;
    for (name, bytes) in &exp.artifacts {
        let path = dir.join(name);
        fs::write(&path, bytes)?;
        files.push(path);
    }
    let status = if exp.converged {
        ExitStatus::Success
    } else {
        ExitStatus::NonConvergence
    };
    let manifest = write_manifest(&dir, "run", cfg, status, &files, started, clock.elapsed().as_secs_f64())?;
    files.push(manifest);
    Ok(RunOutcome {
        status,
        directory: dir,
        files,
    })
}

/// Runs `cfg` once per value of `param` and writes the combined table to
/// `root/<experiment.output>/sweep.csv`, one block of rows per value in input
/// order. An empty value list writes the header only.
pub fn sweep(cfg: &ExperimentConfig, param: &str, values: &[String], root: &Path) -> Result<RunOutcome> {
    match config::key_type(param) {
        Some(KeyType::Number | KeyType::List) => {}
        Some(KeyType::Text) => {
            return Err(Error::Config {
                line: 0,
                message: format!("sweep parameter `{param}` is not numeric"),
            })
        }
        None => {
            return Err(Error::Config {
                line: 0,
                message: format!("unknown sweep parameter `{param}`"),
            })
        }
    }
    let started = SystemTime::now();
    let clock = Instant::now();
    let configs: Vec<ExperimentConfig> = values
        .iter()
        .map(|v| {
            config::parse_number(v, true).map_err(|m| Error::Config {
                line: 0,
                message: format!("sweep value for {param}: {m}"),
            })?;
            cfg.with_value(param, v)
        })
        .collect::<Result<_>>()?;
    let results: Vec<Experiment> = configs.par_iter().map(execute).collect::<Result<_>>()?;

    let mut header = vec![param.to_string()];
    header.extend(columns(cfg.kind).iter().map(|c| c.to_string()));
    let mut rows = Vec::new();
    for (value, exp) in values.iter().zip(&results) {
        for r in &exp.rows {
            let mut row = vec![value.clone()];
            row.extend(r.iter().cloned());
            rows.push(row);
        }
    }
    let dir = root.join(&cfg.output);
    fs::create_dir_all(&dir)?;
    let path = dir.join("sweep.csv");
    fs::write(&path, table_csv(&header, &rows)?)?;
    let status = if results.iter().all(|e| e.converged) {
        ExitStatus::Success
    } else {
        ExitStatus::NonConvergence
    };
    let mut files = vec![path];
    let manifest = write_manifest(&dir, "sweep", cfg, status, &files, started, clock.elapsed().as_secs_f64())?;
    files.push(manifest);
    Ok(RunOutcome {
        status,
        directory: dir,
        files,
    })
}
