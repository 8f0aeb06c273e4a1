use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{BoundarySample, Point};

use super::{Grid, GridSolution};

#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceSet {
    /// Per box node; only unknowns can be set.
    pub mask: Vec<bool>,
    pub count: usize,
    /// Largest `|x|` over the mask (0 when empty).
    pub radius: f64,
}

/// Nodes with `u − ψ ≤ ctol`.
pub fn coincidence_mask(sol: &GridSolution, ctol: f64) -> CoincidenceSet {
    let grid = &sol.grid;
    let mut mask = vec![false; grid.len()];
    let mut count = 0;
    let mut radius = 0.0f64;
    for r in grid.rows() {
        let k = r.node;
        if sol.u[k] - sol.psi[k] <= ctol {
            mask[k] = true;
            count += 1;
            let p = grid.point(k);
            radius = radius.max(p[0].hypot(p[1]));
        }
    }
    CoincidenceSet { mask, count, radius }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalDerivatives {
    pub flux: Vec<f64>,
    /// Samples evaluated with the shortened offsets `h/2, h`.
    pub shrunk: Vec<bool>,
}

impl NormalDerivatives {
    pub fn shrunk_count(&self) -> usize {
        self.shrunk.iter().filter(|&&s| s).count()
    }
}

/// Biquadratic interpolation from the nearest 3×3 block of unknowns.
pub(crate) fn interpolate(grid: &Grid, u: &[f64], p: Point) -> Option<f64> {
    interpolate_where(grid, u, p, |k| grid.is_unknown(k))
}

/// Biquadratic interpolation from the nearest 3×3 block whose nodes all pass
/// `accept`. Block starts range over three cells behind and one ahead of the
/// containing cell, so points on the edge of the accepted region are reached
/// by mild extrapolation. Only if none of those is usable (thin slivers of
/// the accepted region) are blocks up to four cells away tried.
pub fn interpolate_where(grid: &Grid, u: &[f64], p: Point, accept: impl Fn(usize) -> bool) -> Option<f64> {
    let (cx, cy) = grid.cell(p);
    let h = grid.h();
    let side = grid.side() as i64;
    let near = |i0: i64, c: i64| (c - 3..=c + 1).contains(&i0);
    let mut starts: Vec<(bool, f64, i64, i64)> = Vec::with_capacity(81);
    for i0 in (cx - 4)..=(cx + 4) {
        for j0 in (cy - 4)..=(cy + 4) {
            if i0 < 0 || j0 < 0 || i0 + 2 >= side || j0 + 2 >= side {
                continue;
            }
            let dx = grid.coordinate(i0 as usize + 1) - p[0];
            let dy = grid.coordinate(j0 as usize + 1) - p[1];
            starts.push((!(near(i0, cx) && near(j0, cy)), dx * dx + dy * dy, i0, j0));
        }
    }
    starts.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let weights = |t: f64| [0.5 * (t - 1.0) * (t - 2.0), -t * (t - 2.0), 0.5 * t * (t - 1.0)];
    for &(_, _, i0, j0) in &starts {
        let (i0, j0) = (i0 as usize, j0 as usize);
        let usable = (0..3).all(|a| (0..3).all(|b| accept(grid.index(i0 + a, j0 + b))));
        if !usable {
            continue;
        }
        let wx = weights((p[0] - grid.coordinate(i0)) / h);
        let wy = weights((p[1] - grid.coordinate(j0)) / h);
        let mut v = 0.0;
        for b in 0..3 {
            let mut row = 0.0;
            for a in 0..3 {
                row += wx[a] * u[grid.index(i0 + a, j0 + b)];
            }
            v += wy[b] * row;
        }
        return Some(v);
    }
    None
}

/// Bilinear interpolation on the cell containing `p`; `None` outside the box.
pub fn bilinear(grid: &Grid, u: &[f64], p: Point) -> Option<f64> {
    let (ci, cj) = grid.cell(p);
    let side = grid.side() as i64;
    if ci < 0 || cj < 0 || ci + 1 >= side || cj + 1 >= side {
        return None;
    }
    let (i, j) = (ci as usize, cj as usize);
    let tx = (p[0] - grid.coordinate(i)) / grid.h();
    let ty = (p[1] - grid.coordinate(j)) / grid.h();
    let v00 = u[grid.index(i, j)];
    let v10 = u[grid.index(i + 1, j)];
    let v01 = u[grid.index(i, j + 1)];
    let v11 = u[grid.index(i + 1, j + 1)];
    Some((1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11))
}

/// Outward normal derivative at each boundary sample from the one-sided
/// three-point formula along `−ν` with offsets `h, 2h`, falling back to
/// `h/2, h` when the interpolation stencil would leave Ω.
pub fn normal_derivative(sol: &GridSolution, samples: &[BoundarySample]) -> Result<NormalDerivatives> {
    let grid = &sol.grid;
    let h = grid.h();
    let mut flux = Vec::with_capacity(samples.len());
    let mut shrunk = Vec::with_capacity(samples.len());
    for s in samples {
        let p = s.point;
        let nu = s.outward_normal;
        let at = |t: f64| interpolate(grid, &sol.u, [p[0] - t * nu[0], p[1] - t * nu[1]]);
        let mut done = false;
        for (step, reduced) in [(h, false), (0.5 * h, true)] {
            if let (Some(u1), Some(u2)) = (at(step), at(2.0 * step)) {
                flux.push((-3.0 * sol.dirichlet + 4.0 * u1 - u2) / (-2.0 * step));
                shrunk.push(reduced);
                done = true;
                break;
            }
        }
        if !done {
            return Err(Error::Interpolation { x: p[0], y: p[1] });
        }
    }
    Ok(NormalDerivatives { flux, shrunk })
}

/// `Σ (u_a − u_b)²` over lattice edges, i.e. `Σ h²|∇_h u|²`.
///
/// With `full_box` every box edge counts; otherwise only edges touching an unknown.
pub fn field_energy(grid: &Grid, u: &[f64], full_box: bool) -> f64 {
    let side = grid.side();
    let mut e = 0.0;
    for j in 0..side {
        for i in 0..side {
            let k = grid.index(i, j);
            let here = grid.is_unknown(k);
            if i + 1 < side {
                let q = k + 1;
                if full_box || here || grid.is_unknown(q) {
                    e += (u[k] - u[q]).powi(2);
                }
            }
            if j + 1 < side {
                let q = k + side;
                if full_box || here || grid.is_unknown(q) {
                    e += (u[k] - u[q]).powi(2);
                }
            }
        }
    }
    e
}

/// Discrete Dirichlet energy of a solution over the domain edges.
pub fn dirichlet_energy(sol: &GridSolution) -> f64 {
    field_energy(&sol.grid, &sol.u, false)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complementarity {
    /// `max(0, max Δ_h u)` (with a source: `max(0, max(Δ_h u + f))`).
    pub superharmonicity: f64,
    /// `max(0, max(ψ − u))`.
    pub admissibility: f64,
    /// `max |(u − ψ)·Δ_h u|`.
    pub complementarity: f64,
}

pub fn complementarity_residual(sol: &GridSolution) -> Complementarity {
    let grid = &sol.grid;
    let res = grid.residual(&sol.u, sol.dirichlet, sol.source);
    let mut out = Complementarity {
        superharmonicity: 0.0,
        admissibility: 0.0,
        complementarity: 0.0,
    };
    for (r, &ru) in grid.rows().iter().zip(&res) {
        let gap = sol.u[r.node] - sol.psi[r.node];
        out.superharmonicity = out.superharmonicity.max(-ru);
        out.admissibility = out.admissibility.max(-gap);
        out.complementarity = out.complementarity.max((gap * ru).abs());
    }
    out
}

/// Discrete form `h² Σ (A u − f)_i (v − u)_i` for a test field `v`.
pub fn variational_form(sol: &GridSolution, v: &[f64]) -> f64 {
    let grid = &sol.grid;
    let res = grid.residual(&sol.u, sol.dirichlet, sol.source);
    let s: f64 = grid
        .rows()
        .iter()
        .zip(&res)
        .map(|(r, &ru)| ru * (v[r.node] - sol.u[r.node]))
        .sum();
    grid.h().powi(2) * s
}

/// Smallest value of the discrete variational form over `trials` random
/// admissible fields `v = max(ψ, u + bump)`, each bump a sum of three
/// Gaussians with seeded random centers, widths and signed amplitudes.
pub fn variational_inequality_check(sol: &GridSolution, trials: usize, seed: u64) -> f64 {
    let grid = &sol.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extent = grid.domain().bounding_radius();
    let scale = sol
        .grid
        .rows()
        .iter()
        .map(|r| sol.u[r.node].abs())
        .fold(0.0, f64::max)
        .max(1.0);
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let bumps: Vec<(Point, f64, f64)> = (0..3)
            .map(|_| {
                let c = [rng.gen_range(-extent..extent), rng.gen_range(-extent..extent)];
                let width = rng.gen_range(2.0 * grid.h()..0.5 * extent);
                let amp: f64 = rng.sample(StandardNormal);
                (c, width, 0.1 * scale * amp)
            })
            .collect();
        let mut v = sol.u.clone();
        for r in grid.rows() {
            let p = grid.point(r.node);
            let bump: f64 = bumps
                .iter()
                .map(|&(c, w, a)| a * (-((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)) / (2.0 * w * w)).exp())
                .sum();
            v[r.node] = sol.psi[r.node].max(sol.u[r.node] + bump);
        }
        worst = worst.min(variational_form(sol, &v));
    }
    if worst.is_finite() {
        worst
    } else {
        0.0
    }
}

/// Field dump with columns `x, y, u, psi, coincidence` over the unknowns.
pub fn write_field_csv(sol: &GridSolution, coincidence: &[bool], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "u", "psi", "coincidence"])?;
    for r in sol.grid.rows() {
        let p = sol.grid.point(r.node);
        w.write_record([
            p[0].to_string(),
            p[1].to_string(),
            sol.u[r.node].to_string(),
            sol.psi[r.node].to_string(),
            u8::from(coincidence[r.node]).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Flux dump with columns `arc_parameter, x, y, nu_x, nu_y, flux`.
pub fn write_flux_csv(samples: &[BoundarySample], flux: &[f64], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["arc_parameter", "x", "y", "nu_x", "nu_y", "flux"])?;
    for (s, f) in samples.iter().zip(flux) {
        w.write_record(
            [s.arc_parameter, s.point[0], s.point[1], s.outward_normal[0], s.outward_normal[1], *f]
                .iter()
                .map(f64::to_string),
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::geometry::{sample_boundary, DomainSpec};
    use crate::grid::{psor_solve, PsorOptions, Relaxation};

    fn disk(h: f64) -> Arc<Grid> {
        Arc::new(Grid::assemble(&DomainSpec::ball(1.0).unwrap(), h).unwrap())
    }

    fn cap_run(h: f64) -> GridSolution {
        let grid = disk(h);
        let psi = grid.sample(|p| 1.0 - 8.0 * (p[0] * p[0] + p[1] * p[1]));
        let opts = PsorOptions {
            omega: Relaxation::Auto,
            tol: 1e-13,
            ..Default::default()
        };
        psor_solve(&grid, &psi, 0.0, &opts).unwrap()
    }

    #[test]
    fn interpolation_exact_on_quadratics() {
        let grid = disk(1.0 / 16.0);
        let f = |p: Point| 1.0 + 2.0 * p[0] - p[1] + 3.0 * p[0] * p[1] - p[0] * p[0] + 0.5 * p[1] * p[1];
        let u = grid.sample(f);
        for p in [[0.013, -0.27], [0.8, 0.1], [-0.55, 0.55], [0.0, 0.9]] {
            let v = interpolate(&grid, &u, p).unwrap();
            assert!((v - f(p)).abs() < 1e-12, "{p:?}");
        }
        assert!(interpolate(&grid, &u, [3.0, 3.0]).is_none());
    }

    #[test]
    fn bilinear_exact_on_bilinear_fields() {
        let grid = disk(1.0 / 16.0);
        let f = |p: Point| 0.5 + p[0] - 2.0 * p[1] + 3.0 * p[0] * p[1];
        let u = grid.sample(f);
        for p in [[0.013, -0.27], [0.8, 0.1], [-0.55, 0.55]] {
            assert!((bilinear(&grid, &u, p).unwrap() - f(p)).abs() < 1e-12);
        }
        assert!(bilinear(&grid, &u, [5.0, 0.0]).is_none());
    }

    #[test]
    fn zero_field_has_zero_flux_and_energy() {
        let grid = disk(1.0 / 32.0);
        let sol = GridSolution::from_field(grid.clone(), vec![0.0; grid.len()], vec![-1.0; grid.len()], 0.0, 0.0);
        let samples = sample_boundary(grid.domain(), 64).unwrap();
        let nd = normal_derivative(&sol, &samples).unwrap();
        assert!(nd.flux.iter().all(|&f| f == 0.0));
        assert_eq!(dirichlet_energy(&sol), 0.0);
    }

    #[test]
    fn affine_energy_on_full_box() {
        let grid = disk(1.0 / 32.0);
        let u = grid.sample(|p| p[0]);
        let width = grid.h() * (grid.side() - 1) as f64;
        let e = field_energy(&grid, &u, true);
        // x-edges contribute h² each: side·(side − 1)·h² = width² + width·h
        assert!((e - width * width).abs() <= width * grid.h() + 1e-9);
    }

    #[test]
    fn coincidence_extremes() {
        let sol = cap_run(1.0 / 32.0);
        let all = coincidence_mask(&sol, f64::INFINITY);
        assert_eq!(all.count, sol.grid.unknowns());
        let lifted = GridSolution::from_field(
            sol.grid.clone(),
            sol.u.iter().map(|v| v + 1.0).collect(),
            sol.psi.clone(),
            0.0,
            0.0,
        );
        assert_eq!(coincidence_mask(&lifted, 0.0).count, 0);
    }

    #[test]
    fn solved_cap_satisfies_complementarity() {
        let sol = cap_run(1.0 / 32.0);
        let c = complementarity_residual(&sol);
        let row_norm = 2.0 * sol.grid.rows().iter().map(|r| r.diag).fold(0.0, f64::max);
        assert!(c.superharmonicity <= row_norm * 1e-13, "{c:?}");
        assert!(c.admissibility == 0.0);
        assert!(c.complementarity <= row_norm * 1e-13, "{c:?}");
    }

    #[test]
    fn obstacle_itself_has_no_defect_where_superharmonic() {
        let grid = disk(1.0 / 16.0);
        let psi = grid.sample(|p| 1.0 - 8.0 * (p[0] * p[0] + p[1] * p[1]));
        let sol = GridSolution::from_field(grid, psi.clone(), psi, 0.0, 0.0);
        assert_eq!(complementarity_residual(&sol).complementarity, 0.0);
    }

    #[test]
    fn variational_inequality_examples() {
        let sol = cap_run(1.0 / 32.0);
        assert_eq!(variational_form(&sol, &sol.u), 0.0);
        let bump: Vec<f64> = sol
            .u
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let p = sol.grid.point(k);
                v + (-(p[0] * p[0] + p[1] * p[1]) * 4.0).exp()
            })
            .collect();
        assert!(variational_form(&sol, &bump) >= -1e-10);
        assert!(variational_inequality_check(&sol, 100, 42) >= -1e-8);
        assert_eq!(
            variational_inequality_check(&sol, 10, 7),
            variational_inequality_check(&sol, 10, 7)
        );
    }

    #[test]
    fn csv_headers() {
        let sol = cap_run(1.0 / 16.0);
        let mut buf = Vec::new();
        write_field_csv(&sol, &sol.coincidence, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,y,u,psi,coincidence\n"));
        assert_eq!(text.lines().count(), sol.grid.unknowns() + 1);
        let samples = sample_boundary(sol.grid.domain(), 8).unwrap();
        let mut buf = Vec::new();
        write_flux_csv(&samples, &[0.0; 8], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("arc_parameter,x,y,nu_x,nu_y,flux\n"));
    }
}
