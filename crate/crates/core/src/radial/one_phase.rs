use crate::error::{Error, Result};
use crate::geometry::Obstacle;

use super::{contact_radius, flux_constant, kernel_integral};

/// Radial obstacle solution on `B_R` (or the exterior-decaying problem when
/// `R = ∞`, `N ≥ 3`) with constant Dirichlet value.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialSolution {
    pub obstacle: Obstacle,
    pub domain_radius: f64,
    pub dirichlet_value: f64,
    /// Free-boundary radius `a`: the coincidence set is `[0, a]`.
    pub contact_radius: f64,
    /// Outer radius `r_*` of the flat summit of ψ.
    pub plateau_radius: f64,
    /// Outer form `A + B r^{2-N}` (`N ≥ 3`) or `A + B log r` (`N = 2`).
    pub outer_a: f64,
    pub outer_b: f64,
    /// `∂_r u` at the domain radius (0 when `R = ∞`).
    pub boundary_flux: f64,
}

/// Residuals of the structural properties of a [`RadialSolution`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialInvariants {
    pub value_mismatch: f64,
    pub slope_mismatch: f64,
    /// `min (u - ψ)` over the radial grid.
    pub min_gap: f64,
    /// Largest increase of `r^{N-1} ∂_r u` between consecutive grid points.
    pub flux_increase: f64,
    /// `|R^{N-1} ∂_r u(R) - a^{N-1} ψ'(a)|`.
    pub flux_identity: f64,
}

const INVARIANT_GRID: usize = 1000;

impl RadialSolution {
    pub(crate) fn from_contact(psi: &Obstacle, domain_radius: f64, dirichlet_value: f64, a: f64) -> Self {
        let n = psi.dimension();
        let f = flux_constant(psi, a);
        let (outer_a, outer_b) = if n == 2 {
            (psi.value(a) - f * a.ln(), f)
        } else {
            let m = n as f64 - 2.0;
            (psi.value(a) + f * a.powf(2.0 - n as f64) / m, -f / m)
        };
        let boundary_flux = if domain_radius.is_infinite() {
            0.0
        } else {
            f * domain_radius.powi(1 - n as i32)
        };
        Self {
            obstacle: *psi,
            domain_radius,
            dirichlet_value,
            contact_radius: a,
            plateau_radius: psi.summit_radius(),
            outer_a,
            outer_b,
            boundary_flux,
        }
    }

    pub fn dimension(&self) -> usize {
        self.obstacle.dimension()
    }

    /// `a^{N-1} ψ'(a)`, the constant value of `r^{N-1} ∂_r u` outside `[0, a]`.
    pub fn flux_constant(&self) -> f64 {
        flux_constant(&self.obstacle, self.contact_radius)
    }

    fn value_unchecked(&self, r: f64) -> f64 {
        let a = self.contact_radius;
        if r <= a {
            self.obstacle.value(r)
        } else {
            self.obstacle.value(a) + self.flux_constant() * kernel_integral(self.dimension(), a, r)
        }
    }

    fn slope_unchecked(&self, r: f64) -> f64 {
        if r <= self.contact_radius {
            self.obstacle.derivative(r)
        } else {
            self.flux_constant() * r.powi(1 - self.dimension() as i32)
        }
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        self.check_range(r)?;
        Ok(self.value_unchecked(r))
    }

    /// `∂_r u(r)`.
    pub fn slope(&self, r: f64) -> Result<f64> {
        self.check_range(r)?;
        Ok(self.slope_unchecked(r))
    }

    fn check_range(&self, r: f64) -> Result<()> {
        if !(r >= 0.0 && r <= self.domain_radius) {
            return Err(Error::OutOfRange {
                r,
                max: self.domain_radius,
            });
        }
        Ok(())
    }

    /// Checks matching, `u ≥ ψ`, flux monotonicity and the flux identity on a
    /// radial grid of [`INVARIANT_GRID`] points.
    pub fn invariants(&self) -> RadialInvariants {
        let a = self.contact_radius;
        let n = self.dimension() as i32;
        let outer = self.obstacle.value(a) + self.flux_constant() * kernel_integral(self.dimension(), a, a);
        let outer_slope = self.flux_constant() * a.powi(1 - n);
        let top = if self.domain_radius.is_finite() {
            self.domain_radius
        } else {
            4.0 * self.obstacle.support_radius().max(a)
        };
        let mut min_gap = f64::INFINITY;
        let mut flux_increase = 0.0f64;
        let mut prev = f64::INFINITY;
        for i in 0..=INVARIANT_GRID {
            let r = top * i as f64 / INVARIANT_GRID as f64;
            min_gap = min_gap.min(self.value_unchecked(r) - self.obstacle.value(r));
            let q = r.powi(n - 1) * self.slope_unchecked(r);
            if prev.is_finite() {
                flux_increase = flux_increase.max(q - prev);
            }
            prev = q;
        }
        let flux_identity = if self.domain_radius.is_finite() {
            (self.domain_radius.powi(n - 1) * self.boundary_flux - self.flux_constant()).abs()
        } else {
            0.0
        };
        RadialInvariants {
            value_mismatch: (outer - self.obstacle.value(a)).abs(),
            slope_mismatch: (outer_slope - self.obstacle.derivative(a)).abs(),
            min_gap,
            flux_increase,
            flux_identity,
        }
    }
}

/// Free function form of [`RadialSolution::eval`].
pub fn eval_radial(sol: &RadialSolution, r: f64) -> Result<f64> {
    sol.eval(r)
}

/// Solves the radial obstacle problem on `B_R` with `u = g` on `∂B_R`.
///
/// `R = ∞` selects the exterior problem with `u → g` at infinity (`N ≥ 3`).
pub fn solve_radial_one_phase(psi: &Obstacle, domain_radius: f64, dirichlet_value: f64) -> Result<RadialSolution> {
    let n = psi.dimension();
    if !(dirichlet_value >= 0.0 && dirichlet_value.is_finite()) {
        return Err(Error::Precondition(format!(
            "Dirichlet value must be finite and nonnegative, got {dirichlet_value}"
        )));
    }
    if psi.max_value() > 0.0 && dirichlet_value >= psi.max_value() {
        return Err(Error::Degenerate(format!(
            "Dirichlet value {dirichlet_value} ≥ max ψ = {}; the obstacle is inactive",
            psi.max_value()
        )));
    }
    if domain_radius.is_infinite() && n == 2 {
        return Err(Error::Nonexistence(n));
    }
    if psi.max_value() > 0.0 && !(psi.support_radius() < domain_radius) {
        return Err(Error::Precondition(format!(
            "support radius {} must be below the domain radius {domain_radius}",
            psi.support_radius()
        )));
    }
    let matching = |a: f64| {
        psi.value(a) + flux_constant(psi, a) * kernel_integral(n, a, domain_radius) - dirichlet_value
    };
    let a = contact_radius(psi, matching)?;
    Ok(RadialSolution::from_contact(psi, domain_radius, dirichlet_value, a))
}

/// `(radius, -∂_r u_radius(radius))` for each radius, with zero Dirichlet data.
pub fn boundary_flux_monotonicity(psi: &Obstacle, radii: &[f64]) -> Result<Vec<(f64, f64)>> {
    let support = psi.support_radius();
    if let Some(&bad) = radii.iter().find(|&&r| !(r > support)) {
        return Err(Error::Precondition(format!(
            "radius {bad} does not exceed the support radius {support}"
        )));
    }
    radii
        .iter()
        .map(|&r| solve_radial_one_phase(psi, r, 0.0).map(|s| (r, -s.boundary_flux)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::optimize::bisect;

    fn cap8() -> Obstacle {
        Obstacle::cap(2, 1.0, 8.0).unwrap()
    }

    #[test]
    fn disk_contact_radius_matches_scalar_equation() {
        let sol = solve_radial_one_phase(&cap8(), 1.0, 0.0).unwrap();
        // Oracle: the matching equation written out by hand for ψ = 1 - 8r², R = 1.
        let oracle = |a: f64| 1.0 - 8.0 * a * a + 16.0 * a * a * a.ln();
        assert!(oracle(0.16) > 0.0 && oracle(0.17) < 0.0);
        let root = bisect(oracle, 0.16, 0.17, 0.0);
        assert!((sol.contact_radius - root).abs() < 1e-12, "{} vs {root}", sol.contact_radius);
        assert!(sol.contact_radius > 0.16 && sol.contact_radius < 0.17);
    }

    #[test]
    fn flux_identity_and_signs() {
        let sol = solve_radial_one_phase(&cap8(), 1.0, 0.0).unwrap();
        let a = sol.contact_radius;
        assert!((sol.boundary_flux - a * (-16.0 * a)).abs() < 1e-12);
        assert!(sol.boundary_flux < 0.0);
        let inv = sol.invariants();
        assert!(inv.flux_identity <= 1e-10);
        assert!(inv.value_mismatch <= 1e-10 && inv.slope_mismatch <= 1e-10);
        assert!(inv.min_gap >= -1e-12);
        assert!(inv.flux_increase <= 1e-12);
    }

    #[test]
    fn eval_at_special_radii() {
        let sol = solve_radial_one_phase(&cap8(), 1.0, 0.0).unwrap();
        assert_eq!(sol.eval(0.0).unwrap(), 1.0);
        assert!(sol.eval(1.0).unwrap().abs() < 1e-12);
        let a = sol.contact_radius;
        assert_eq!(sol.eval(a).unwrap(), cap8().value(a));
        assert!(matches!(sol.eval(1.5), Err(Error::OutOfRange { .. })));
        assert!(matches!(eval_radial(&sol, -0.1), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn outer_coefficients_reproduce_eval() {
        for n in [2, 3, 4] {
            let psi = cap8().with_dimension(n).unwrap();
            let sol = solve_radial_one_phase(&psi, 1.0, 0.0).unwrap();
            for r in [0.4f64, 0.7, 1.0] {
                let k = if n == 2 { r.ln() } else { r.powf(2.0 - n as f64) };
                let v = sol.outer_a + sol.outer_b * k;
                assert!((v - sol.eval(r).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nonzero_dirichlet_value() {
        let psi = cap8();
        let sol = solve_radial_one_phase(&psi, 1.0, 0.3).unwrap();
        assert!((sol.eval(1.0).unwrap() - 0.3).abs() < 1e-12);
        let zero = solve_radial_one_phase(&psi, 1.0, 0.0).unwrap();
        assert!(sol.contact_radius < zero.contact_radius);
    }

    #[test]
    fn exterior_decays_to_dirichlet_value() {
        let psi = Obstacle::cap(3, 1.0, 4.0).unwrap();
        let sol = solve_radial_one_phase(&psi, f64::INFINITY, 0.0).unwrap();
        // u = ψ(a) + F (1/a - 1/r) with F = -8a³; decay at infinity gives 1 - 12a² = 0
        assert!((sol.contact_radius - (1.0f64 / 12.0).sqrt()).abs() < 1e-12);
        assert!(sol.eval(1e8).unwrap().abs() < 1e-8);
    }

    #[test]
    fn plateau_summit_is_flat() {
        let psi = Obstacle::plateau(2, 1.0, 6.0, 0.1, 0.05).unwrap();
        let sol = solve_radial_one_phase(&psi, 1.0, 0.0).unwrap();
        assert!(sol.contact_radius > sol.plateau_radius);
        for i in 0..=2000 {
            let r = i as f64 / 2000.0;
            let v = sol.eval(r).unwrap();
            if r <= sol.plateau_radius {
                assert_eq!(v, 1.0);
            } else {
                assert!(v < 1.0, "r = {r}");
            }
        }
    }

    #[test]
    fn error_paths() {
        let low = cap8().lowered(2.0);
        assert!(matches!(solve_radial_one_phase(&low, 1.0, 0.0), Err(Error::NoDetachment { .. })));
        assert!(matches!(solve_radial_one_phase(&cap8(), 1.0, 1.0), Err(Error::Degenerate(_))));
        assert!(matches!(solve_radial_one_phase(&cap8(), 0.2, 0.0), Err(Error::Precondition(_))));
        assert!(matches!(
            solve_radial_one_phase(&cap8(), f64::INFINITY, 0.0),
            Err(Error::Nonexistence(2))
        ));
    }

    #[test]
    fn flux_monotone_in_radius() {
        let out = boundary_flux_monotonicity(&cap8(), &[0.5, 1.0, 2.0]).unwrap();
        assert!(out[0].1 > out[1].1 && out[1].1 > out[2].1 && out[2].1 > 0.0);
        let same = boundary_flux_monotonicity(&cap8(), &[1.0, 1.0]).unwrap();
        assert_eq!(same[0].1, same[1].1);
        assert!(matches!(
            boundary_flux_monotonicity(&cap8(), &[0.3]),
            Err(Error::Precondition(_))
        ));
    }
}
