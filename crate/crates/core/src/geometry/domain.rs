use std::f64::consts::TAU;

use crate::error::{Error, Result};

use super::optimize::golden_min;
use super::{norm, Point};

/// The built-in star-shaped domain families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainKind {
    Ball { radius: f64 },
    Ellipse { semi_x: f64, semi_y: f64 },
    ShiftedBall { radius: f64, center: Point },
    /// Boundary `r = radius·(1 + amplitude·cos(mode·θ))`.
    PerturbedBall { radius: f64, amplitude: f64, mode: u32 },
}

/// A bounded planar domain described by a signed distance function
/// (negative inside) and an explicit boundary parametrization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    kind: DomainKind,
}

impl DomainSpec {
    pub fn new(kind: DomainKind) -> Result<Self> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidDomain(format!("{what} must be positive, got {v}")))
            }
        };
        match kind {
            DomainKind::Ball { radius } => positive(radius, "radius")?,
            DomainKind::Ellipse { semi_x, semi_y } => {
                positive(semi_x, "semi-axis")?;
                positive(semi_y, "semi-axis")?;
            }
            DomainKind::ShiftedBall { radius, center } => {
                positive(radius, "radius")?;
                if !center.iter().all(|c| c.is_finite()) {
                    return Err(Error::InvalidDomain("center must be finite".into()));
                }
            }
            DomainKind::PerturbedBall {
                radius,
                amplitude,
                mode,
            } => {
                positive(radius, "radius")?;
                if !(0.0..1.0).contains(&amplitude) {
                    return Err(Error::InvalidDomain(format!(
                        "amplitude must lie in [0, 1), got {amplitude}"
                    )));
                }
                if mode == 0 {
                    return Err(Error::InvalidDomain("mode must be ≥ 1".into()));
                }
            }
        }
        Ok(Self { kind })
    }

    pub fn ball(radius: f64) -> Result<Self> {
        Self::new(DomainKind::Ball { radius })
    }

    pub fn ellipse(semi_x: f64, semi_y: f64) -> Result<Self> {
        Self::new(DomainKind::Ellipse { semi_x, semi_y })
    }

    pub fn shifted_ball(radius: f64, center: Point) -> Result<Self> {
        Self::new(DomainKind::ShiftedBall { radius, center })
    }

    pub fn perturbed_ball(radius: f64, amplitude: f64, mode: u32) -> Result<Self> {
        Self::new(DomainKind::PerturbedBall {
            radius,
            amplitude,
            mode,
        })
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            DomainKind::Ball { .. } => "ball",
            DomainKind::Ellipse { .. } => "ellipse",
            DomainKind::ShiftedBall { .. } => "shifted-ball",
            DomainKind::PerturbedBall { .. } => "perturbed-ball",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self.kind {
            DomainKind::Ball { radius } => vec![radius],
            DomainKind::Ellipse { semi_x, semi_y } => vec![semi_x, semi_y],
            DomainKind::ShiftedBall { radius, center } => vec![radius, center[0], center[1]],
            DomainKind::PerturbedBall {
                radius,
                amplitude,
                mode,
            } => vec![radius, amplitude, mode as f64],
        }
    }

    /// Whether [`signed_distance`](Self::signed_distance) is the true
    /// Euclidean distance evaluated in closed form.
    pub fn has_exact_sdf(&self) -> bool {
        !matches!(self.kind, DomainKind::PerturbedBall { .. })
    }

    /// Signed distance to the boundary, negative inside.
    pub fn signed_distance(&self, p: Point) -> f64 {
        match self.kind {
            DomainKind::Ball { radius } => norm(p) - radius,
            DomainKind::ShiftedBall { radius, center } => {
                (p[0] - center[0]).hypot(p[1] - center[1]) - radius
            }
            DomainKind::Ellipse { semi_x, semi_y } => {
                let d = ellipse_distance(semi_x, semi_y, p);
                if self.level(p) < 0.0 {
                    -d
                } else {
                    d
                }
            }
            DomainKind::PerturbedBall { .. } => {
                let d = self.curve_distance(p);
                if self.level(p) < 0.0 {
                    -d
                } else {
                    d
                }
            }
        }
    }

    /// A cheap implicit function with the same zero set and sign as the
    /// signed distance. Used for node classification and boundary crossings.
    pub fn level(&self, p: Point) -> f64 {
        match self.kind {
            DomainKind::Ball { .. } | DomainKind::ShiftedBall { .. } => self.signed_distance(p),
            DomainKind::Ellipse { semi_x, semi_y } => {
                semi_x.min(semi_y) * ((p[0] / semi_x).hypot(p[1] / semi_y) - 1.0)
            }
            DomainKind::PerturbedBall {
                radius,
                amplitude,
                mode,
            } => {
                let r = norm(p);
                let theta = p[1].atan2(p[0]);
                r - radius * (1.0 + amplitude * (mode as f64 * theta).cos())
            }
        }
    }

    /// Radius of a centered disk containing the closure of the domain.
    pub fn bounding_radius(&self) -> f64 {
        match self.kind {
            DomainKind::Ball { radius } => radius,
            DomainKind::Ellipse { semi_x, semi_y } => semi_x.max(semi_y),
            DomainKind::ShiftedBall { radius, center } => radius + norm(center),
            DomainKind::PerturbedBall {
                radius, amplitude, ..
            } => radius * (1.0 + amplitude),
        }
    }

    /// Boundary point at curve parameter `t ∈ [0, 2π)`, counterclockwise.
    pub fn curve(&self, t: f64) -> Point {
        let (s, c) = t.sin_cos();
        match self.kind {
            DomainKind::Ball { radius } => [radius * c, radius * s],
            DomainKind::Ellipse { semi_x, semi_y } => [semi_x * c, semi_y * s],
            DomainKind::ShiftedBall { radius, center } => {
                [center[0] + radius * c, center[1] + radius * s]
            }
            DomainKind::PerturbedBall {
                radius,
                amplitude,
                mode,
            } => {
                let rho = radius * (1.0 + amplitude * (mode as f64 * t).cos());
                [rho * c, rho * s]
            }
        }
    }

    /// `dγ/dt` of [`curve`](Self::curve).
    pub fn curve_tangent(&self, t: f64) -> Point {
        let (s, c) = t.sin_cos();
        match self.kind {
            DomainKind::Ball { radius } | DomainKind::ShiftedBall { radius, .. } => {
                [-radius * s, radius * c]
            }
            DomainKind::Ellipse { semi_x, semi_y } => [-semi_x * s, semi_y * c],
            DomainKind::PerturbedBall {
                radius,
                amplitude,
                mode,
            } => {
                let m = mode as f64;
                let rho = radius * (1.0 + amplitude * (m * t).cos());
                let drho = -radius * amplitude * m * (m * t).sin();
                [drho * c - rho * s, drho * s + rho * c]
            }
        }
    }

    fn curve_distance(&self, p: Point) -> f64 {
        const COARSE: usize = 256;
        let dist2 = |t: f64| {
            let q = self.curve(t);
            (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)
        };
        let step = TAU / COARSE as f64;
        let best = (0..COARSE)
            .map(|i| (i, dist2(i as f64 * step)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i as f64 * step)
            .unwrap_or(0.0);
        let (_, d2) = golden_min(dist2, best - step, best + step, 1e-14);
        d2.max(0.0).sqrt()
    }
}

/// Distance from `p` to the ellipse `x²/a² + y²/b² = 1`.
///
/// Robust bisection on the Lagrange-multiplier equation after reduction to
/// the first quadrant with the larger semi-axis first.
fn ellipse_distance(a: f64, b: f64, p: Point) -> f64 {
    let (e0, e1, y0, y1) = if a >= b {
        (a, b, p[0].abs(), p[1].abs())
    } else {
        (b, a, p[1].abs(), p[0].abs())
    };
    if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g != 0.0 {
                let r0 = (e0 / e1) * (e0 / e1);
                let sbar = ellipse_root(r0, z0, z1, g);
                let x0 = r0 * y0 / (sbar + r0);
                let x1 = y1 / (sbar + 1.0);
                (x0 - y0).hypot(x1 - y1)
            } else {
                0.0
            }
        } else {
            (y1 - e1).abs()
        }
    } else {
        let numer = e0 * y0;
        let denom = e0 * e0 - e1 * e1;
        if numer < denom {
            let xde0 = numer / denom;
            let x0 = e0 * xde0;
            let x1 = e1 * (1.0 - xde0 * xde0).max(0.0).sqrt();
            (x0 - y0).hypot(x1)
        } else {
            (y0 - e0).abs()
        }
    }
}

fn ellipse_root(r0: f64, z0: f64, z1: f64, g: f64) -> f64 {
    let n0 = r0 * z0;
    let mut s0 = z1 - 1.0;
    let mut s1 = if g < 0.0 { 0.0 } else { n0.hypot(z1) - 1.0 };
    let mut s = 0.0;
    for _ in 0..1100 {
        s = 0.5 * (s0 + s1);
        if s == s0 || s == s1 {
            break;
        }
        let ratio0 = n0 / (s + r0);
        let ratio1 = z1 / (s + 1.0);
        let g = ratio0 * ratio0 + ratio1 * ratio1 - 1.0;
        if g > 0.0 {
            s0 = s;
        } else if g < 0.0 {
            s1 = s;
        } else {
            break;
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn family() -> Vec<DomainSpec> {
        vec![
            DomainSpec::ball(1.2).unwrap(),
            DomainSpec::ellipse(1.0, 1.3).unwrap(),
            DomainSpec::ellipse(1.4, 0.7).unwrap(),
            DomainSpec::shifted_ball(1.0, [0.2, 0.0]).unwrap(),
            DomainSpec::perturbed_ball(1.0, 0.1, 3).unwrap(),
        ]
    }

    #[test]
    fn curve_points_lie_on_the_zero_set() {
        for d in family() {
            for i in 0..97 {
                let t = i as f64 * TAU / 97.0;
                let p = d.curve(t);
                assert!(d.signed_distance(p).abs() < 1e-10, "{} at t={t}", d.name());
                assert!(d.level(p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn origin_is_inside() {
        for d in family() {
            assert!(d.signed_distance([0.0, 0.0]) < 0.0);
        }
    }

    #[test]
    fn signed_distance_is_one_lipschitz_on_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for d in family() {
            let b = 1.5 * d.bounding_radius();
            for _ in 0..400 {
                let p = [rng.gen_range(-b..b), rng.gen_range(-b..b)];
                let q = [p[0] + rng.gen_range(-0.2..0.2), p[1] + rng.gen_range(-0.2..0.2)];
                let lhs = (d.signed_distance(p) - d.signed_distance(q)).abs();
                let rhs = (p[0] - q[0]).hypot(p[1] - q[1]);
                assert!(lhs <= rhs * (1.0 + 1e-9) + 1e-12, "{}: {lhs} > {rhs}", d.name());
            }
        }
    }

    #[test]
    fn ellipse_distance_matches_brute_force() {
        let d = DomainSpec::ellipse(1.0, 1.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let brute = (0..200_000)
                .map(|i| {
                    let q = d.curve(i as f64 * TAU / 200_000.0);
                    (q[0] - p[0]).hypot(q[1] - p[1])
                })
                .fold(f64::INFINITY, f64::min);
            let got = d.signed_distance(p).abs();
            assert!(got <= brute + 1e-12 && brute - got < 1e-7, "{p:?}: {got} vs {brute}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(DomainSpec::ball(0.0).is_err());
        assert!(DomainSpec::perturbed_ball(1.0, 1.0, 2).is_err());
        assert!(DomainSpec::perturbed_ball(1.0, 0.1, 0).is_err());
    }
}
