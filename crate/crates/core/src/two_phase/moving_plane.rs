use std::f64::consts::TAU;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::optimize::bisect;
use crate::geometry::{ball_radii, dot, norm, DomainSpec, Point};
use crate::grid::bilinear;

use super::{components, Phase, TwoPhaseSolution};

/// Curve samples used for the event tests.
const CURVE_SAMPLES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MovingPlaneEvent {
    OriginReached,
    InternalTangency,
    Orthogonality,
}

impl fmt::Display for MovingPlaneEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::OriginReached => "origin-reached",
            Self::InternalTangency => "internal-tangency",
            Self::Orthogonality => "orthogonality",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MovingPlaneReport {
    pub gamma: Point,
    pub lambda_star: f64,
    pub event: MovingPlaneEvent,
    /// Tangency point `p` or orthogonality point `q`.
    pub point: Option<Point>,
    /// `min w⁻` over Σ and `min w⁺` over `D^{λ*}`; `+∞` when the set is empty.
    pub min_w_minus: f64,
    pub min_w_plus: f64,
    pub max_abs_w_minus: f64,
    pub max_abs_w_plus: f64,
    /// Label of Σ among the components of the reflected exterior patch;
    /// `None` when the scan reached the origin and the whole patch is used.
    pub component: Option<usize>,
    pub sigma_nodes: usize,
    pub cap_nodes: usize,
    /// Distance tolerance for tangency (`h`).
    pub tangency_tol: f64,
    /// Angle tolerance for orthogonality (`h/ρ_D`).
    pub orthogonality_tol: f64,
}

/// Reflection across `x·γ = λ`.
fn reflect(x: Point, gamma: Point, lambda: f64) -> Point {
    let s = 2.0 * (lambda - dot(x, gamma));
    [x[0] + s * gamma[0], x[1] + s * gamma[1]]
}

struct Boundary<'a> {
    domain: &'a DomainSpec,
    t: Vec<f64>,
    points: Vec<Point>,
}

impl<'a> Boundary<'a> {
    fn new(domain: &'a DomainSpec) -> Self {
        let t: Vec<f64> = (0..CURVE_SAMPLES).map(|k| TAU * k as f64 / CURVE_SAMPLES as f64).collect();
        let points = t.iter().map(|&t| domain.curve(t)).collect();
        Self { domain, t, points }
    }

    fn normal(&self, t: f64) -> Point {
        let d = self.domain.curve_tangent(t);
        let n = norm(d);
        [d[1] / n, -d[0] / n]
    }

    /// Largest level of a reflected cap point at distance at least `band`
    /// from the plane, with the sample attaining it.
    fn tangency(&self, gamma: Point, lambda: f64, band: f64) -> (f64, Option<Point>) {
        let mut best = (f64::NEG_INFINITY, None);
        for &s in &self.points {
            if dot(s, gamma) >= lambda + band {
                let v = self.domain.level(reflect(s, gamma, lambda));
                if v > best.0 {
                    best = (v, Some(s));
                }
            }
        }
        best
    }

    /// Smallest `ν·γ` over the crossings of ∂D with the plane, with the
    /// crossing attaining it.
    fn orthogonality(&self, gamma: Point, lambda: f64) -> (f64, Option<Point>) {
        let n = self.points.len();
        let mut best = (f64::INFINITY, None);
        for k in 0..n {
            let (a, b) = (k, (k + 1) % n);
            let fa = dot(self.points[a], gamma) - lambda;
            let fb = dot(self.points[b], gamma) - lambda;
            if (fa > 0.0) == (fb > 0.0) {
                continue;
            }
            let (ta, tb) = (self.t[a], if b == 0 { TAU } else { self.t[b] });
            let t = bisect(|t| dot(self.domain.curve(t), gamma) - lambda, ta, tb, 0.0);
            let v = dot(self.normal(t), gamma);
            if v < best.0 {
                best = (v, Some(self.domain.curve(t)));
            }
        }
        best
    }
}

/// Moves `π_λ = {x·γ = λ}` from the top of `D̄` down to `λ = 0`, stops at the
/// first internal tangency or orthogonality, and evaluates the reflected
/// differences `w^±(x) = u(x) − u(x^{λ*})` on Σ and `D^{λ*}`.
pub fn moving_plane_scan(sol: &TwoPhaseSolution, gamma: Point) -> Result<MovingPlaneReport> {
    let len = norm(gamma);
    if !(len > 0.0 && len.is_finite()) {
        return Err(Error::Precondition(format!("direction {gamma:?} is not a nonzero vector")));
    }
    let gamma = [gamma[0] / len, gamma[1] / len];
    let domain = sol.conductivity.inner();
    let h = sol.grid().h();
    let (rho_d, _) = ball_radii(domain)?;
    let boundary = Boundary::new(domain);
    let top = boundary
        .points
        .iter()
        .map(|&p| dot(p, gamma))
        .fold(f64::NEG_INFINITY, f64::max);

    let tangent = |l: f64| boundary.tangency(gamma, l, h).0;
    let orth = |l: f64| -boundary.orthogonality(gamma, l).0;
    let step = 0.25 * h;
    let mut prev = top;
    let mut found = None;
    let mut k = 1;
    loop {
        let lambda = (top - k as f64 * step).max(0.0);
        let t_hit = tangent(lambda) > 0.0;
        let o_hit = orth(lambda) > 0.0;
        if t_hit || o_hit {
            let root = |f: &dyn Fn(f64) -> f64| bisect(f, lambda, prev, 0.0);
            let lt = if t_hit { Some(root(&tangent)) } else { None };
            let lo = if o_hit { Some(root(&orth)) } else { None };
            // Just past an orthogonality the reflected cap leaves D next to the
            // plane, so tangency only wins when both roots coincide.
            found = Some(match (lt, lo) {
                (Some(a), Some(b)) if a >= b - 1e-6 * h => (a, MovingPlaneEvent::InternalTangency),
                (Some(a), None) => (a, MovingPlaneEvent::InternalTangency),
                (_, Some(b)) => (b, MovingPlaneEvent::Orthogonality),
                (None, None) => unreachable!(),
            });
            break;
        }
        if lambda <= 0.0 {
            break;
        }
        prev = lambda;
        k += 1;
    }

    let (lambda_star, event, point) = match found {
        Some((l, _)) if l <= h => (0.0, MovingPlaneEvent::OriginReached, None),
        None => (0.0, MovingPlaneEvent::OriginReached, None),
        Some((l, MovingPlaneEvent::InternalTangency)) => {
            let past = (l - step).max(0.0);
            let p = boundary.tangency(gamma, past, h).1.map(|s| reflect(s, gamma, l));
            (l, MovingPlaneEvent::InternalTangency, p)
        }
        Some((l, e)) => (l, e, boundary.orthogonality(gamma, l).1),
    };
    Ok(reflected_differences(sol, gamma, lambda_star, event, point, h, h / rho_d))
}

fn reflected_differences(
    sol: &TwoPhaseSolution,
    gamma: Point,
    lambda: f64,
    event: MovingPlaneEvent,
    point: Option<Point>,
    tangency_tol: f64,
    orthogonality_tol: f64,
) -> MovingPlaneReport {
    let grid = sol.grid();
    let u = &sol.field.u;
    let outer = sol.outer_radius;
    let inner = sol.conductivity.inner();
    let patch = |k: usize| {
        let x = grid.point(k);
        grid.is_unknown(k)
            && sol.phase(k) == Phase::Minus
            && dot(x, gamma) < lambda
            && norm(reflect(x, gamma, lambda)) < outer
    };
    let labels = components(grid, patch);
    let component = point.and_then(|p| {
        (0..grid.len())
            .filter(|&k| labels[k].is_some())
            .min_by(|&a, &b| {
                let da = norm([grid.point(a)[0] - p[0], grid.point(a)[1] - p[1]]);
                let db = norm([grid.point(b)[0] - p[0], grid.point(b)[1] - p[1]]);
                da.total_cmp(&db)
            })
            .and_then(|k| labels[k])
    });
    let w = |k: usize| bilinear(grid, u, reflect(grid.point(k), gamma, lambda)).map(|v| u[k] - v);

    let mut report = MovingPlaneReport {
        gamma,
        lambda_star: lambda,
        event,
        point,
        min_w_minus: f64::INFINITY,
        min_w_plus: f64::INFINITY,
        max_abs_w_minus: 0.0,
        max_abs_w_plus: 0.0,
        component,
        sigma_nodes: 0,
        cap_nodes: 0,
        tangency_tol,
        orthogonality_tol,
    };
    for k in 0..grid.len() {
        let in_sigma = match (labels[k], component) {
            (Some(l), Some(c)) => l == c,
            (Some(_), None) => point.is_none(),
            _ => false,
        };
        if in_sigma {
            if let Some(v) = w(k) {
                report.sigma_nodes += 1;
                report.min_w_minus = report.min_w_minus.min(v);
                report.max_abs_w_minus = report.max_abs_w_minus.max(v.abs());
            }
            continue;
        }
        let x = grid.point(k);
        let in_cap = grid.is_unknown(k)
            && sol.phase(k) == Phase::Plus
            && dot(x, gamma) < lambda
            && inner.level(reflect(x, gamma, lambda)) < 0.0;
        if in_cap {
            if let Some(v) = w(k) {
                report.cap_nodes += 1;
                report.min_w_plus = report.min_w_plus.min(v);
                report.max_abs_w_plus = report.max_abs_w_plus.max(v.abs());
            }
        }
    }
    report
}

/// Scans several directions concurrently; reports come back in input order.
pub fn moving_plane_scans(sol: &TwoPhaseSolution, directions: &[Point]) -> Result<Vec<MovingPlaneReport>> {
    directions.par_iter().map(|&g| moving_plane_scan(sol, g)).collect()
}

pub const MOVING_PLANE_COLUMNS: [&str; 8] = [
    "gamma_x",
    "gamma_y",
    "lambda_star",
    "event",
    "px",
    "py",
    "min_w_minus",
    "min_w_plus",
];

impl MovingPlaneReport {
    /// Record for [`MOVING_PLANE_COLUMNS`]; `px, py` are empty without an event point.
    pub fn csv_record(&self) -> Vec<String> {
        let (px, py) = match self.point {
            Some(p) => (p[0].to_string(), p[1].to_string()),
            None => (String::new(), String::new()),
        };
        vec![
            self.gamma[0].to_string(),
            self.gamma[1].to_string(),
            self.lambda_star.to_string(),
            self.event.to_string(),
            px,
            py,
            self.min_w_minus.to_string(),
            self.min_w_plus.to_string(),
        ]
    }
}

pub fn write_moving_plane_csv(reports: &[MovingPlaneReport], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MOVING_PLANE_COLUMNS)?;
    for r in reports {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Obstacle;
    use crate::grid::{PsorOptions, Relaxation};
    use crate::two_phase::{solve_two_phase_grid, Conductivity, InterfaceEstimate, TwoPhaseOptions};

    fn solve(d: DomainSpec, h: f64) -> TwoPhaseSolution {
        let cond = Conductivity::new(2.0, 1.0, d).unwrap();
        let psi = Obstacle::cap(2, 1.0, 4.0).unwrap();
        let opts = TwoPhaseOptions {
            psor: PsorOptions {
                omega: Relaxation::Auto,
                ..Default::default()
            },
            samples: 256,
        };
        solve_two_phase_grid(&cond, 2.0, &psi, InterfaceEstimate::Minimax, h, &opts).unwrap()
    }

    proptest::proptest! {
        #[test]
        fn reflection_is_an_involution(
            theta in 0.0..std::f64::consts::TAU,
            lambda in -2.0..2.0f64,
            x in -3.0..3.0f64,
            y in -3.0..3.0f64,
        ) {
            let g = [theta.cos(), theta.sin()];
            let p = [x, y];
            let q = reflect(reflect(p, g, lambda), g, lambda);
            proptest::prop_assert!((p[0] - q[0]).abs() < 1e-13 && (p[1] - q[1]).abs() < 1e-13);
            proptest::prop_assert!((dot(reflect(p, g, lambda), g) - (2.0 * lambda - dot(p, g))).abs() < 1e-13);
        }
    }

    #[test]
    fn centered_ball_reaches_origin() {
        let sol = solve(DomainSpec::ball(1.0).unwrap(), 1.0 / 32.0);
        for g in [[1.0, 0.0], [0.0, -1.0], [1.0, 1.0]] {
            let r = moving_plane_scan(&sol, g).unwrap();
            assert_eq!(r.event, MovingPlaneEvent::OriginReached, "{r:?}");
            assert_eq!(r.lambda_star, 0.0);
            assert!(r.sigma_nodes > 0 && r.cap_nodes > 0);
        }
    }

    #[test]
    fn shifted_ball_tangency_at_shift() {
        let sol = solve(DomainSpec::shifted_ball(1.0, [0.2, 0.0]).unwrap(), 1.0 / 32.0);
        let r = moving_plane_scan(&sol, [1.0, 0.0]).unwrap();
        assert_eq!(r.event, MovingPlaneEvent::InternalTangency, "{r:?}");
        assert!((r.lambda_star - 0.2).abs() < 1.0 / 32.0, "{r:?}");
        let p = r.point.unwrap();
        assert!((p[0] + 0.8).abs() < 0.05 && p[1].abs() < 0.05, "{p:?}");
        assert!(r.component.is_some() && r.sigma_nodes > 0);
    }

    #[test]
    fn ellipse_events() {
        let sol = solve(DomainSpec::ellipse(1.0, 1.3).unwrap(), 1.0 / 32.0);
        let axis = moving_plane_scan(&sol, [0.0, 1.0]).unwrap();
        assert_eq!(axis.event, MovingPlaneEvent::OriginReached, "{axis:?}");
        let diag = moving_plane_scan(&sol, [1.0, 1.0]).unwrap();
        assert_eq!(diag.event, MovingPlaneEvent::Orthogonality, "{diag:?}");
        // ν ⊥ γ where y = −(b²/a²)x meets the ellipse.
        let x = 1.0 / (1.0f64 + 1.69).sqrt();
        let expected = (1.69 * x - x) / 2f64.sqrt();
        assert!((diag.lambda_star - expected).abs() < 1e-6, "{diag:?} {expected}");
        let mut buf = Vec::new();
        write_moving_plane_csv(&[axis, diag], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("gamma_x,gamma_y,lambda_star,event,px,py,min_w_minus,min_w_plus\n"));
        assert!(text.contains(",origin-reached,,,"));
    }
}
