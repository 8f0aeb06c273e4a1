use crate::error::{Error, Result};

use super::Point;

/// Radial profile families with closed-form first and second derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    /// `h - k r²`
    Cap { height: f64, curvature: f64 },
    /// Flat top of height `h` on `[0, r0]`, then `h - k q(r - r0)` where `q`
    /// is a C² blend of a cubic (width `w`) into a parabola.
    Plateau {
        height: f64,
        curvature: f64,
        plateau_radius: f64,
        smoothing: f64,
    },
}

/// A radially symmetric obstacle `ψ(x) = profile(|x|) - offset` in dimension `N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    dimension: usize,
    profile: Profile,
    offset: f64,
}

// q(t) = 0 (t ≤ 0), t³/(3w) (0 < t ≤ w), t² - wt + w²/3 (t > w)
fn blend(t: f64, w: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if t <= w {
        (t * t * t / (3.0 * w), t * t / w, 2.0 * t / w)
    } else {
        (t * t - w * t + w * w / 3.0, 2.0 * t - w, 2.0)
    }
}

impl Obstacle {
    pub fn cap(dimension: usize, height: f64, curvature: f64) -> Result<Self> {
        check_dimension(dimension)?;
        if !(height > 0.0 && height.is_finite()) {
            return Err(Error::InvalidObstacle(format!("cap height must be positive, got {height}")));
        }
        if !(curvature > 0.0 && curvature.is_finite()) {
            return Err(Error::InvalidObstacle(format!("cap curvature must be positive, got {curvature}")));
        }
        Ok(Self {
            dimension,
            profile: Profile::Cap { height, curvature },
            offset: 0.0,
        })
    }

    pub fn plateau(
        dimension: usize,
        height: f64,
        curvature: f64,
        plateau_radius: f64,
        smoothing: f64,
    ) -> Result<Self> {
        check_dimension(dimension)?;
        let ok = height > 0.0
            && curvature > 0.0
            && plateau_radius > 0.0
            && smoothing > 0.0
            && [height, curvature, plateau_radius, smoothing].iter().all(|v| v.is_finite());
        if !ok {
            return Err(Error::InvalidObstacle(
                "plateau parameters must be finite and positive".into(),
            ));
        }
        Ok(Self {
            dimension,
            profile: Profile::Plateau {
                height,
                curvature,
                plateau_radius,
                smoothing,
            },
            offset: 0.0,
        })
    }

    /// The same profile shifted down by `shift`. The result may have
    /// `max ψ ≤ 0`; solvers reject such obstacles.
    pub fn lowered(&self, shift: f64) -> Self {
        Self {
            offset: self.offset + shift,
            ..*self
        }
    }

    pub fn with_dimension(&self, dimension: usize) -> Result<Self> {
        check_dimension(dimension)?;
        Ok(Self { dimension, ..*self })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    /// `(ψ, ψ', ψ'')` at radius `r ≥ 0`.
    pub fn eval(&self, r: f64) -> (f64, f64, f64) {
        match self.profile {
            Profile::Cap { height, curvature } => (
                height - curvature * r * r - self.offset,
                -2.0 * curvature * r,
                -2.0 * curvature,
            ),
            Profile::Plateau {
                height,
                curvature,
                plateau_radius,
                smoothing,
            } => {
                let (q, dq, ddq) = blend(r - plateau_radius, smoothing);
                (
                    height - curvature * q - self.offset,
                    -curvature * dq,
                    -curvature * ddq,
                )
            }
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        self.eval(r).0
    }

    pub fn derivative(&self, r: f64) -> f64 {
        self.eval(r).1
    }

    pub fn second_derivative(&self, r: f64) -> f64 {
        self.eval(r).2
    }

    /// ψ at a point of the plane (uses `|p|`).
    pub fn at(&self, p: Point) -> f64 {
        self.value(p[0].hypot(p[1]))
    }

    pub fn max_value(&self) -> f64 {
        match self.profile {
            Profile::Cap { height, .. } | Profile::Plateau { height, .. } => height - self.offset,
        }
    }

    /// Outer radius of the flat top where ψ attains its maximum.
    pub fn summit_radius(&self) -> f64 {
        match self.profile {
            Profile::Cap { .. } => 0.0,
            Profile::Plateau { plateau_radius, .. } => plateau_radius,
        }
    }

    /// Radius of the closed support of `max{ψ, 0}`; zero when `max ψ ≤ 0`.
    pub fn support_radius(&self) -> f64 {
        let top = self.max_value();
        if top <= 0.0 {
            return 0.0;
        }
        match self.profile {
            Profile::Cap { curvature, .. } => (top / curvature).sqrt(),
            Profile::Plateau {
                curvature,
                plateau_radius,
                smoothing: w,
                ..
            } => {
                let c = top / curvature;
                let t = if c <= w * w / 3.0 {
                    (3.0 * w * c).cbrt()
                } else {
                    0.5 * (w + (4.0 * c - w * w / 3.0).sqrt())
                };
                plateau_radius + t
            }
        }
    }

    /// Sup-norm of ψ over the closed ball of the given radius.
    pub fn sup_norm(&self, radius: f64) -> f64 {
        self.max_value().abs().max(self.value(radius).abs())
    }

    pub fn name(&self) -> &'static str {
        match self.profile {
            Profile::Cap { .. } => "cap",
            Profile::Plateau { .. } => "plateau",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = match self.profile {
            Profile::Cap { height, curvature } => vec![height, curvature],
            Profile::Plateau {
                height,
                curvature,
                plateau_radius,
                smoothing,
            } => vec![height, curvature, plateau_radius, smoothing],
        };
        if self.offset != 0.0 {
            p.push(-self.offset);
        }
        p
    }
}

fn check_dimension(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidObstacle(format!("dimension must be ≥ 2, got {n}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plateau() -> Obstacle {
        Obstacle::plateau(2, 1.0, 6.0, 0.1, 0.05).unwrap()
    }

    #[test]
    fn cap_support_and_values() {
        let psi = Obstacle::cap(2, 1.0, 8.0).unwrap();
        assert_eq!(psi.value(0.0), 1.0);
        assert!((psi.support_radius() - (1.0f64 / 8.0).sqrt()).abs() < 1e-15);
        assert_eq!(psi.derivative(0.5), -8.0);
    }

    #[test]
    fn profile_vanishes_beyond_support() {
        for psi in [Obstacle::cap(2, 1.0, 8.0).unwrap(), plateau(), Obstacle::cap(3, 1.0, 4.0).unwrap()] {
            let s = psi.support_radius();
            assert!(psi.value(s).abs() < 1e-12);
            for delta in [1e-3, 1e-2, 1e-1] {
                assert!(psi.value(s + delta) <= 0.0);
            }
        }
    }

    #[test]
    fn plateau_is_c2_at_joints() {
        let psi = plateau();
        for r in [0.1, 0.15] {
            let (a, da, dda) = psi.eval(r - 1e-9);
            let (b, db, ddb) = psi.eval(r + 1e-9);
            assert!((a - b).abs() < 1e-8);
            assert!((da - db).abs() < 1e-7);
            assert!((dda - ddb).abs() < 1e-6);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let psi = plateau();
        let step = 1e-6;
        for i in 1..200 {
            let r = i as f64 * 0.003;
            let fd1 = (psi.value(r + step) - psi.value(r - step)) / (2.0 * step);
            let fd2 = (psi.derivative(r + step) - psi.derivative(r - step)) / (2.0 * step);
            assert!((fd1 - psi.derivative(r)).abs() < 1e-6, "r = {r}");
            assert!((fd2 - psi.second_derivative(r)).abs() < 1e-4, "r = {r}");
        }
    }

    #[test]
    fn lowered_obstacle_can_lose_positive_part() {
        let psi = Obstacle::cap(2, 1.0, 8.0).unwrap().lowered(1.5);
        assert!(psi.max_value() < 0.0);
        assert_eq!(psi.support_radius(), 0.0);
    }

    #[test]
    fn constructor_rejects_bad_parameters() {
        assert!(Obstacle::cap(1, 1.0, 8.0).is_err());
        assert!(Obstacle::cap(2, -1.0, 8.0).is_err());
        assert!(Obstacle::plateau(2, 1.0, 0.0, 0.1, 0.1).is_err());
    }
}
