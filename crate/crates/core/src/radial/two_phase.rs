use crate::error::{Error, Result};
use crate::geometry::Obstacle;

use super::{contact_radius, flux_constant, kernel_integral, RadialSolution};

/// Radial two-phase solution: obstacle problem with conductivity `σ₊` in
/// `B_{r_D}` and `σ₋` in `B_L \ B_{r_D}` (or the whole exterior).
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhaseRadialSolution {
    /// One-phase solution on `B_{r_D}` with Dirichlet value `d`.
    pub inner: RadialSolution,
    pub interface_radius: f64,
    pub outer_radius: f64,
    /// Constant value of `r^{N-1} ∂_r u` on the outer annulus.
    pub outer_flux: f64,
    pub interface_value: f64,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
}

/// Residuals of the structural properties of a [`TwoPhaseRadialSolution`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPhaseInvariants {
    pub continuity: f64,
    /// `|σ₊ ∂_r u(r_D⁻) - σ₋ ∂_r u(r_D⁺)|`
    pub flux_jump: f64,
    /// `min (u - d)` on `[0, r_D)`.
    pub inner_margin: f64,
    /// `min (min(u, d - u))` on `(r_D, L)`.
    pub outer_margin: f64,
}

const INVARIANT_GRID: usize = 1000;

impl TwoPhaseRadialSolution {
    pub fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0 && r <= self.outer_radius) {
            return Err(Error::OutOfRange {
                r,
                max: self.outer_radius,
            });
        }
        if r <= self.interface_radius {
            return self.inner.eval(r);
        }
        Ok(self.outer_value(r))
    }

    fn outer_value(&self, r: f64) -> f64 {
        self.interface_value + self.outer_flux * kernel_integral(self.dimension(), self.interface_radius, r)
    }

    pub fn invariants(&self) -> TwoPhaseInvariants {
        let rd = self.interface_radius;
        let n = self.dimension() as i32;
        let inner_at = self.inner.eval(rd).expect("interface is in range");
        let slope_in = self.inner.slope(rd).expect("interface is in range");
        let slope_out = self.outer_flux * rd.powi(1 - n);
        let top = if self.outer_radius.is_finite() {
            self.outer_radius
        } else {
            8.0 * rd
        };
        let mut inner_margin = f64::INFINITY;
        let mut outer_margin = f64::INFINITY;
        for i in 0..INVARIANT_GRID {
            let r = rd * i as f64 / INVARIANT_GRID as f64;
            inner_margin = inner_margin.min(self.inner.eval(r).expect("in range") - self.interface_value);
            let s = rd + (top - rd) * (i as f64 + 0.5) / INVARIANT_GRID as f64;
            let u = self.outer_value(s);
            outer_margin = outer_margin.min(u.min(self.interface_value - u));
        }
        TwoPhaseInvariants {
            continuity: (inner_at - self.outer_value(rd)).abs(),
            flux_jump: (self.sigma_plus * slope_in - self.sigma_minus * slope_out).abs(),
            inner_margin,
            outer_margin,
        }
    }
}

/// Solves the radial two-phase obstacle problem with `u = 0` on `|x| = L`
/// (or `u → 0` at infinity when `L = ∞`, `N ≥ 3`).
pub fn solve_radial_two_phase(
    psi: &Obstacle,
    interface_radius: f64,
    outer_radius: f64,
    sigma_plus: f64,
    sigma_minus: f64,
) -> Result<TwoPhaseRadialSolution> {
    let n = psi.dimension();
    let positive = |s: f64| s > 0.0 && s.is_finite();
    if !positive(sigma_plus) || !positive(sigma_minus) || sigma_plus == sigma_minus {
        return Err(Error::InvalidConductivity(format!(
            "need distinct positive conductivities, got σ₊ = {sigma_plus}, σ₋ = {sigma_minus}"
        )));
    }
    if outer_radius.is_infinite() && n == 2 {
        return Err(Error::Nonexistence(n));
    }
    if psi.max_value() > 0.0 && !(psi.support_radius() < interface_radius) {
        return Err(Error::Precondition(format!(
            "support radius {} must be below the interface radius {interface_radius}",
            psi.support_radius()
        )));
    }
    if !(interface_radius < outer_radius) {
        return Err(Error::Precondition(format!(
            "interface radius {interface_radius} must be below the outer radius {outer_radius}"
        )));
    }
    let ratio = sigma_plus / sigma_minus;
    let outer_kernel = kernel_integral(n, interface_radius, outer_radius);
    let matching = |a: f64| {
        let f = flux_constant(psi, a);
        psi.value(a) + f * kernel_integral(n, a, interface_radius) + ratio * f * outer_kernel
    };
    let a = contact_radius(psi, matching)?;
    let f = flux_constant(psi, a);
    let d = -ratio * f * outer_kernel;
    Ok(TwoPhaseRadialSolution {
        inner: RadialSolution::from_contact(psi, interface_radius, d, a),
        interface_radius,
        outer_radius,
        outer_flux: ratio * f,
        interface_value: d,
        sigma_plus,
        sigma_minus,
    })
}

/// Interface values `d(L)` of the truncated two-phase problems on `B_L`.
///
/// In the plane `d(L)` keeps growing with `L`; for `N ≥ 3` it converges to the
/// exterior value, which makes the same call a useful control.
pub fn exterior_nonexistence_probe(
    psi: &Obstacle,
    interface_radius: f64,
    sigma_plus: f64,
    sigma_minus: f64,
    schedule: &[f64],
) -> Result<Vec<(f64, f64)>> {
    schedule
        .iter()
        .map(|&l| {
            solve_radial_two_phase(psi, interface_radius, l, sigma_plus, sigma_minus).map(|s| (l, s.interface_value))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::optimize::bisect;

    fn cap3() -> Obstacle {
        Obstacle::cap(3, 1.0, 4.0).unwrap()
    }

    #[test]
    fn bounded_closed_form() {
        let sol = solve_radial_two_phase(&cap3(), 1.0, 2.0, 2.0, 1.0).unwrap();
        let a = 1.0 / (2.0 * 3f64.sqrt());
        assert!((sol.inner.contact_radius - a).abs() < 1e-10);
        assert!((sol.interface_value - 3f64.sqrt() / 9.0).abs() < 1e-10);
        // independent oracle: 1 - 12a² + 8a³ - 8a³ written with its two annulus terms
        let oracle = |a: f64| 1.0 - 4.0 * a * a - 8.0 * a * a * a * (1.0 / a - 1.0) - 2.0 * 8.0 * a * a * a * 0.5;
        let root = bisect(oracle, 0.2, 0.4, 0.0);
        assert!((root - sol.inner.contact_radius).abs() < 1e-12);
    }

    #[test]
    fn exterior_closed_form() {
        let sol = solve_radial_two_phase(&cap3(), 1.0, f64::INFINITY, 2.0, 1.0).unwrap();
        let oracle = |a: f64| 1.0 - 12.0 * a * a - 8.0 * a * a * a;
        assert!(oracle(0.26) > 0.0 && oracle(0.27) < 0.0);
        let root = bisect(oracle, 0.26, 0.27, 0.0);
        assert!((sol.inner.contact_radius - root).abs() < 1e-12);
        assert!((sol.interface_value - 16.0 * root.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn transmission_and_ordering() {
        for (l, sp, sm) in [(2.0, 2.0, 1.0), (3.0, 0.5, 1.5), (f64::INFINITY, 1.0, 4.0)] {
            let sol = solve_radial_two_phase(&cap3(), 1.0, l, sp, sm).unwrap();
            let inv = sol.invariants();
            assert!(inv.continuity <= 1e-10 && inv.flux_jump <= 1e-10, "{inv:?}");
            assert!(inv.inner_margin > 0.0 && inv.outer_margin > 0.0, "{inv:?}");
            assert!(sol.interface_value > 0.0 && sol.interface_value < 1.0);
        }
    }

    #[test]
    fn only_the_ratio_matters() {
        let base = solve_radial_two_phase(&cap3(), 1.0, 2.0, 2.0, 1.0).unwrap();
        let scaled = solve_radial_two_phase(&cap3(), 1.0, 2.0, 7.0, 3.5).unwrap();
        assert!((base.interface_value - scaled.interface_value).abs() < 1e-12);
        assert!((base.inner.contact_radius - scaled.inner.contact_radius).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let plane = cap3().with_dimension(2).unwrap();
        assert_eq!(
            solve_radial_two_phase(&plane, 1.0, f64::INFINITY, 2.0, 1.0),
            Err(Error::Nonexistence(2))
        );
        assert!(matches!(
            solve_radial_two_phase(&cap3(), 1.0, 2.0, 1.0, 1.0),
            Err(Error::InvalidConductivity(_))
        ));
        assert!(matches!(
            solve_radial_two_phase(&cap3(), 0.3, 2.0, 2.0, 1.0),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            solve_radial_two_phase(&cap3().lowered(3.0), 1.0, 2.0, 2.0, 1.0),
            Err(Error::NoDetachment { .. })
        ));
    }

    #[test]
    fn probe_empty_schedule() {
        assert!(exterior_nonexistence_probe(&cap3(), 1.0, 2.0, 1.0, &[]).unwrap().is_empty());
    }

    #[test]
    fn probe_drift_in_plane_vs_space() {
        let plane = cap3().with_dimension(2).unwrap();
        let d2 = exterior_nonexistence_probe(&plane, 1.0, 2.0, 1.0, &[4.0, 8.0, 16.0]).unwrap();
        assert!(d2.windows(2).all(|w| w[1].1 > w[0].1));
        let d3 = exterior_nonexistence_probe(&cap3(), 1.0, 2.0, 1.0, &[4.0, 8.0, 16.0]).unwrap();
        let limit = solve_radial_two_phase(&cap3(), 1.0, f64::INFINITY, 2.0, 1.0).unwrap().interface_value;
        assert!((d3[2].1 - limit).abs() < (d3[0].1 - limit).abs());
    }
}
