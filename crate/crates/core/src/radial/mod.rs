//! Semi-analytic radial solutions of the obstacle problem.
//!
//! On a centered ball the solution coincides with ψ on `[0, a]` and is radial
//! harmonic on `(a, R)`. There `r^{N-1} u'(r)` is constant and equal to
//! `a^{N-1} ψ'(a)`, so the whole solution is determined by the scalar contact
//! radius `a`, found by bisection on the C¹ matching condition.

mod one_phase;
mod two_phase;

pub use one_phase::{boundary_flux_monotonicity, eval_radial, solve_radial_one_phase, RadialInvariants, RadialSolution};
pub use two_phase::{exterior_nonexistence_probe, solve_radial_two_phase, TwoPhaseInvariants, TwoPhaseRadialSolution};

use crate::error::{Error, Result};
use crate::geometry::optimize::bisect;
use crate::geometry::Obstacle;

/// Points in the sign-change scan of the matching function.
pub const MATCHING_SCAN: usize = 1000;

/// Offset of the left bracket end from the summit radius.
pub const BRACKET_OFFSET: f64 = 1e-12;

/// `∫_{r1}^{r2} s^{1-N} ds`; `r2` may be `+∞` when `N ≥ 3`.
pub(crate) fn kernel_integral(n: usize, r1: f64, r2: f64) -> f64 {
    if n == 2 {
        (r2 / r1).ln()
    } else {
        let e = 2.0 - n as f64;
        let far = if r2.is_infinite() { 0.0 } else { r2.powf(e) };
        (r1.powf(e) - far) / (n as f64 - 2.0)
    }
}

/// Flux constant `a^{N-1} ψ'(a)`.
pub(crate) fn flux_constant(psi: &Obstacle, a: f64) -> f64 {
    a.powi(psi.dimension() as i32 - 1) * psi.derivative(a)
}

/// Locates the unique root of `matching` on `(r_* + offset, support]`.
///
/// Scans [`MATCHING_SCAN`] points for sign changes first; zero brackets mean
/// the obstacle never detaches, more than one means the root is ambiguous.
pub(crate) fn contact_radius(psi: &Obstacle, matching: impl Fn(f64) -> f64) -> Result<f64> {
    let lo = psi.summit_radius() + BRACKET_OFFSET;
    let hi = psi.support_radius();
    if psi.max_value() <= 0.0 || hi <= lo {
        return Err(Error::NoDetachment { lo, hi });
    }
    let xs: Vec<f64> = (0..=MATCHING_SCAN)
        .map(|i| {
            if i == MATCHING_SCAN {
                hi
            } else {
                lo + (hi - lo) * i as f64 / MATCHING_SCAN as f64
            }
        })
        .collect();
    let signs: Vec<f64> = xs.iter().map(|&x| sign(matching(x))).collect();
    // An exact zero at a scan point counts once, not once per adjacent cell.
    let mut brackets = Vec::new();
    for i in 0..xs.len() {
        if signs[i] == 0.0 {
            brackets.push((xs[i], xs[i]));
        } else if i > 0 && signs[i - 1] * signs[i] < 0.0 {
            brackets.push((xs[i - 1], xs[i]));
        }
    }
    match brackets.len() {
        0 => Err(Error::NoDetachment { lo, hi }),
        1 => {
            let (a0, b0) = brackets[0];
            let a = if a0 == b0 { a0 } else { bisect(&matching, a0, b0, 0.0) };
            let slope = psi.derivative(a);
            if slope >= 0.0 {
                return Err(Error::InvalidMatching { a, slope });
            }
            Ok(a)
        }
        count => Err(Error::MultipleRoots { count }),
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
