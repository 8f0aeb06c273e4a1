//! Domains, obstacles and the centered-ball quantities `ρ`, `R`, `R*`.
//!
//! `ρ` and `R` are the radii of the largest centered ball inside the domain
//! and the smallest centered ball containing it; `R*` is the diameter.

mod domain;
mod obstacle;
pub mod optimize;

use std::f64::consts::TAU;

pub use domain::{DomainKind, DomainSpec};
pub use obstacle::{Obstacle, Profile};

use crate::error::{Error, Result};
use optimize::{golden_max, golden_min};

pub type Point = [f64; 2];

pub fn norm(p: Point) -> f64 {
    p[0].hypot(p[1])
}

pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Number of curve samples used to locate extremal boundary points.
pub const EXTREMAL_SAMPLES: usize = 1024;

const REFINE_TOL: f64 = 1e-10;

/// A point on ∂Ω with its outward unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySample {
    pub point: Point,
    pub outward_normal: Point,
    /// Arc length from the curve origin (`t = 0`).
    pub arc_parameter: f64,
}

/// Radii `(ρ, R)` of the largest centered ball in the domain and the
/// smallest centered ball containing it.
pub fn ball_radii(domain: &DomainSpec) -> Result<(f64, f64)> {
    let inside = domain.signed_distance([0.0, 0.0]);
    if inside >= 0.0 {
        return Err(Error::InvalidDomain(format!(
            "origin is not inside the {} (signed distance {inside})",
            domain.name()
        )));
    }
    let radius_at = |t: f64| norm(domain.curve(t));
    let rho = if domain.has_exact_sdf() {
        -inside
    } else {
        refine_extremum(&radius_at, false)
    };
    let big_r = match domain.kind() {
        DomainKind::Ball { radius } => radius,
        DomainKind::ShiftedBall { radius, center } => radius + norm(center),
        _ => refine_extremum(&radius_at, true),
    };
    Ok((rho, big_r))
}

fn refine_extremum(f: &impl Fn(f64) -> f64, maximize: bool) -> f64 {
    let step = TAU / EXTREMAL_SAMPLES as f64;
    let pick = |a: &(usize, f64), b: &(usize, f64)| {
        if maximize {
            a.1.total_cmp(&b.1)
        } else {
            b.1.total_cmp(&a.1)
        }
    };
    let (i, best) = (0..EXTREMAL_SAMPLES)
        .map(|i| (i, f(i as f64 * step)))
        .max_by(pick)
        .expect("nonempty sample set");
    let t = i as f64 * step;
    let refined = if maximize {
        golden_max(f, t - step, t + step, REFINE_TOL).1
    } else {
        golden_min(f, t - step, t + step, REFINE_TOL).1
    };
    if maximize {
        refined.max(best)
    } else {
        refined.min(best)
    }
}

/// Diameter `R*` of the domain: the largest distance between two boundary
/// points, refined by alternating golden-section searches.
pub fn diameter(domain: &DomainSpec) -> Result<f64> {
    diameter_with(domain, EXTREMAL_SAMPLES)
}

pub fn diameter_with(domain: &DomainSpec, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Sampling(format!("diameter needs at least 2 samples, got {n}")));
    }
    let (_, big_r) = ball_radii(domain)?;
    let step = TAU / n as f64;
    let pts: Vec<Point> = (0..n).map(|i| domain.curve(i as f64 * step)).collect();
    let mut best = (0, 0, 0.0f64);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (pts[i][0] - pts[j][0]).hypot(pts[i][1] - pts[j][1]);
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    let dist = |s: f64, t: f64| {
        let p = domain.curve(s);
        let q = domain.curve(t);
        (p[0] - q[0]).hypot(p[1] - q[1])
    };
    let (mut s, mut t) = (best.0 as f64 * step, best.1 as f64 * step);
    let mut value = best.2;
    for _ in 0..6 {
        let (s1, v1) = golden_max(|x| dist(x, t), s - step, s + step, REFINE_TOL);
        let (t1, v2) = golden_max(|x| dist(s1, x), t - step, t + step, REFINE_TOL);
        if v1.max(v2) <= value {
            break;
        }
        s = s1;
        t = t1;
        value = v1.max(v2);
    }
    // The diameter of a set contained in B_R(0) cannot exceed 2R nor fall
    // below R when the origin is inside.
    Ok(value.clamp(big_r, 2.0 * big_r))
}

/// `n` boundary samples approximately equispaced in arc length, with
/// outward normals from central differences of the signed distance.
pub fn sample_boundary(domain: &DomainSpec, n: usize) -> Result<Vec<BoundarySample>> {
    if n < 4 {
        return Err(Error::Sampling(format!("need at least 4 boundary samples, got {n}")));
    }
    let table = ArcTable::new(domain, (16 * n).max(8192));
    let step = 1e-6 * domain.bounding_radius();
    let total = table.total();
    (0..n)
        .map(|k| {
            let s = total * k as f64 / n as f64;
            let t = table.parameter_at(s);
            let point = domain.curve(t);
            let gx = (domain.signed_distance([point[0] + step, point[1]])
                - domain.signed_distance([point[0] - step, point[1]]))
                / (2.0 * step);
            let gy = (domain.signed_distance([point[0], point[1] + step])
                - domain.signed_distance([point[0], point[1] - step]))
                / (2.0 * step);
            let g = gx.hypot(gy);
            if g < 1e-8 {
                return Err(Error::DegenerateNormal {
                    x: point[0],
                    y: point[1],
                    norm: g,
                });
            }
            Ok(BoundarySample {
                point,
                outward_normal: [gx / g, gy / g],
                arc_parameter: s,
            })
        })
        .collect()
}

/// Total boundary length (trapezoid rule on the curve speed).
pub fn perimeter(domain: &DomainSpec) -> f64 {
    ArcTable::new(domain, 8192).total()
}

struct ArcTable {
    params: Vec<f64>,
    lengths: Vec<f64>,
}

impl ArcTable {
    fn new(domain: &DomainSpec, m: usize) -> Self {
        let dt = TAU / m as f64;
        let speed = |t: f64| norm(domain.curve_tangent(t));
        let mut params = Vec::with_capacity(m + 1);
        let mut lengths = Vec::with_capacity(m + 1);
        let mut acc = 0.0;
        let mut prev = speed(0.0);
        params.push(0.0);
        lengths.push(0.0);
        for i in 1..=m {
            let t = i as f64 * dt;
            let cur = speed(t);
            acc += 0.5 * (prev + cur) * dt;
            prev = cur;
            params.push(t);
            lengths.push(acc);
        }
        Self { params, lengths }
    }

    fn total(&self) -> f64 {
        *self.lengths.last().expect("nonempty table")
    }

    fn parameter_at(&self, s: f64) -> f64 {
        let i = self.lengths.partition_point(|&l| l <= s).clamp(1, self.lengths.len() - 1);
        let (l0, l1) = (self.lengths[i - 1], self.lengths[i]);
        let w = if l1 > l0 { (s - l0) / (l1 - l0) } else { 0.0 };
        self.params[i - 1] + w * (self.params[i] - self.params[i - 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn family() -> Vec<DomainSpec> {
        vec![
            DomainSpec::ball(1.2).unwrap(),
            DomainSpec::ellipse(1.0, 1.3).unwrap(),
            DomainSpec::shifted_ball(1.0, [0.2, 0.0]).unwrap(),
            DomainSpec::perturbed_ball(1.0, 0.02, 4).unwrap(),
            DomainSpec::perturbed_ball(1.0, 0.1, 4).unwrap(),
        ]
    }

    #[test]
    fn ball_radii_examples() {
        assert_eq!(ball_radii(&DomainSpec::ball(1.2).unwrap()).unwrap(), (1.2, 1.2));
        let (rho, r) = ball_radii(&DomainSpec::ellipse(1.0, 1.3).unwrap()).unwrap();
        assert!((rho - 1.0).abs() < 1e-12 && (r - 1.3).abs() < 1e-12);
        let (rho, r) = ball_radii(&DomainSpec::shifted_ball(1.0, [0.2, 0.0]).unwrap()).unwrap();
        assert!((rho - 0.8).abs() < 1e-12 && (r - 1.2).abs() < 1e-12);
    }

    #[test]
    fn ball_radii_exact_for_balls() {
        for r in [0.5, 1.0, 2.0] {
            assert_eq!(ball_radii(&DomainSpec::ball(r).unwrap()).unwrap(), (r, r));
        }
    }

    #[test]
    fn perturbed_ball_radii() {
        let (rho, r) = ball_radii(&DomainSpec::perturbed_ball(1.0, 0.1, 4).unwrap()).unwrap();
        assert!((rho - 0.9).abs() < 1e-9, "{rho}");
        assert!((r - 1.1).abs() < 1e-9, "{r}");
    }

    #[test]
    fn origin_outside_is_invalid() {
        let d = DomainSpec::shifted_ball(1.0, [1.5, 0.0]).unwrap();
        assert!(matches!(ball_radii(&d), Err(Error::InvalidDomain(_))));
    }

    #[test]
    fn diameter_examples() {
        let cases = [
            (DomainSpec::ball(1.2).unwrap(), 2.4),
            (DomainSpec::ellipse(1.0, 1.3).unwrap(), 2.6),
            (DomainSpec::shifted_ball(1.0, [0.2, 0.0]).unwrap(), 2.0),
        ];
        for (d, expected) in cases {
            let got = diameter(&d).unwrap();
            assert!((got - expected).abs() < 1e-10, "{}: {got}", d.name());
        }
        assert!(diameter_with(&DomainSpec::ball(1.0).unwrap(), 1).is_err());
    }

    #[test]
    fn ball_geometry_ordering() {
        for d in family() {
            let (rho, r) = ball_radii(&d).unwrap();
            let rs = diameter(&d).unwrap();
            assert!(rho <= r && r <= rs && rs <= 2.0 * r, "{}: {rho} {r} {rs}", d.name());
        }
    }

    #[test]
    fn sample_boundary_ball_quadrants() {
        let s = sample_boundary(&DomainSpec::ball(1.0).unwrap(), 4).unwrap();
        let expected = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (sample, e) in s.iter().zip(expected) {
            assert!((sample.point[0] - e[0]).abs() < 1e-9 && (sample.point[1] - e[1]).abs() < 1e-9);
            assert!((sample.outward_normal[0] - e[0]).abs() < 1e-8);
            assert!((sample.outward_normal[1] - e[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn sample_boundary_unit_normals() {
        for d in family() {
            for s in sample_boundary(&d, 64).unwrap() {
                assert!((norm(s.outward_normal) - 1.0).abs() < 1e-12);
                assert!(d.signed_distance(s.point).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn sample_boundary_is_nearly_equispaced() {
        let d = DomainSpec::ellipse(1.0, 1.3).unwrap();
        let s = sample_boundary(&d, 64).unwrap();
        let gaps: Vec<f64> = s
            .windows(2)
            .map(|w| (w[0].point[0] - w[1].point[0]).hypot(w[0].point[1] - w[1].point[1]))
            .collect();
        let max = gaps.iter().cloned().fold(0.0, f64::max);
        let min = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min < 1.01);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            sample_boundary(&DomainSpec::ball(1.0).unwrap(), 3),
            Err(Error::Sampling(_))
        ));
    }
}
