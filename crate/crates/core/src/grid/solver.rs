//! Gauss-Seidel solver for `det(G + Hu) = c f Omega` and the discrete
//! psh projection.
//!
//! At a node the local matrix `M = G + H_nbr u` excludes the node value,
//! which enters each diagonal entry as `-u(x)/h^2`. Setting
//! `u(x) = h^2 s` with `s` the smaller root of `det(M - s I) = r` solves the
//! node equation and keeps `M - s I` positive semidefinite.

use serde::{Deserialize, Serialize};

use super::hessian::{visit_matrix, Herm2};
use super::{check_len, ma_measure, Grid, HermitianField, MeasureField, PotentialField};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Sup-norm bound on `|det(G + Hu) - c r|`.
    pub tol: f64,
    pub tol_psd: f64,
    pub max_sweeps: usize,
    /// Starting node of every sweep and reduction.
    pub origin: [usize; 4],
    /// Sweeps between residual evaluations and solvability updates.
    pub check_every: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            tol_psd: 1e-10,
            max_sweeps: 50_000,
            origin: [0; 4],
            check_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveDiagnostics {
    pub sweeps: usize,
    pub residual: f64,
    /// `c` in `det(G + Hu) = c f Omega`; 1 in the continuum.
    pub solvability_constant: f64,
    pub sup_norm: f64,
    pub converged: bool,
    /// Most negative eigenvalue of `G + Hu` at exit (0 if psh).
    pub clamping: f64,
    /// `|\int MA(u) - c \int f Omega|` with `MA(u)` re-evaluated through
    /// [`crate::grid::ma_measure`].
    pub mass_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    pub u: PotentialField,
    pub diagnostics: SolveDiagnostics,
}

/// Smaller root `s` of `det(M - s I) = r`.
#[inline]
pub fn node_root(m: &Herm2, r: f64) -> f64 {
    let half = 0.5 * (m.a - m.d);
    0.5 * (m.a + m.d) - (half * half + m.b.norm_sqr() + r).sqrt()
}

struct Evaluation {
    residual: f64,
    clamping: f64,
}

/// Clamped determinants, then `c` as the mass ratio, then the residual
/// against that `c`.
fn evaluate(u: &[f64], bg: &HermitianField, target: &[f64], target_sum: f64, grid: &Grid, origin: [usize; 4], dets: &mut [f64]) -> (Evaluation, f64) {
    let h2 = grid.h() * grid.h();
    let q = 0.25 / h2;
    let mut det_sum = 0.0;
    let mut clamping: f64 = 0.0;
    grid.visit(origin, |v| {
        let m = visit_matrix(u, v, &bg.entries[v.idx], q).shift(-u[v.idx] / h2);
        let (l1, l2) = m.eigenvalues();
        let det = l1.max(0.0) * l2.max(0.0);
        clamping = clamping.min(l1);
        det_sum += det;
        dets[v.idx] = det;
    });
    let c = det_sum / target_sum;
    let residual = dets.iter().zip(target).fold(0.0f64, |r, (d, t)| r.max((d - c * t).abs()));
    (
        Evaluation { residual, clamping },
        c,
    )
}

fn sup_normalize(u: &mut [f64]) {
    let m = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for v in u.iter_mut() {
        *v -= m;
    }
}

/// Solves `det(G + Hu) = c f Omega` on the periodic grid. The solvability
/// constant `c` is re-estimated at every check as the mass ratio
/// `\sum det(G + Hu) / \sum f Omega`, and `u` is kept sup-normalized.
/// Non-convergence is reported in the diagnostics, not as an error.
pub fn solve(f: &[f64], bg: &HermitianField, omega: &MeasureField, grid: &Grid, initial: Option<&PotentialField>, opts: &SolverOptions) -> Result<Solution> {
    check_len("f", f.len(), grid)?;
    check_len("G", bg.entries.len(), grid)?;
    omega.validate(grid)?;
    if f.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(invalid("f", "must be finite and nonnegative"));
    }
    if !(opts.tol > 0.0 && opts.check_every > 0 && opts.max_sweeps > 0) {
        return Err(invalid("solver options", "tol, check_every and max_sweeps must be positive"));
    }
    let mass = omega.integrate(f, grid);
    let bg_mass = bg.mass(grid);
    if (mass - bg_mass).abs() > 1e-9 * bg_mass {
        return Err(invalid("f", format!("mass {mass} differs from the background mass {bg_mass}")));
    }
    let target: Vec<f64> = f.iter().zip(&omega.weights).map(|(a, w)| a * w).collect();
    let target_sum = grid.sum(|i| target[i], opts.origin);
    let mut u = match initial {
        Some(p) => {
            check_len("initial", p.values.len(), grid)?;
            p.values.clone()
        }
        None => vec![0.0; grid.len()],
    };
    let h2 = grid.h() * grid.h();
    let q = 0.25 / h2;
    let mut dets = vec![0.0; grid.len()];
    let mut c = 1.0;
    let mut sweeps = 0;
    let mut last = Evaluation {
        residual: f64::INFINITY,
        clamping: 0.0,
    };
    let mut converged = false;
    while sweeps < opts.max_sweeps {
        grid.visit(opts.origin, |v| {
            let m = visit_matrix(&u, v, &bg.entries[v.idx], q);
            u[v.idx] = h2 * node_root(&m, c * target[v.idx]);
        });
        sweeps += 1;
        sup_normalize(&mut u);
        if sweeps == 1 || sweeps % opts.check_every == 0 || sweeps == opts.max_sweeps {
            let (ev, next_c) = evaluate(&u, bg, &target, target_sum, grid, opts.origin, &mut dets);
            c = next_c;
            last = ev;
            if last.residual < opts.tol {
                converged = true;
                break;
            }
        }
    }
    let vol = grid.cell_volume();
    let field = PotentialField {
        values: u,
        sup_normalized: true,
    };
    Ok(Solution {
        diagnostics: SolveDiagnostics {
            sweeps,
            residual: last.residual,
            solvability_constant: c,
            sup_norm: field.sup_norm(),
            converged,
            clamping: last.clamping.min(0.0),
            mass_defect: (ma_measure(&field, bg, grid).mass(grid) - c * target_sum * vol).abs(),
        },
        u: field,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Projection {
    pub u: PotentialField,
    pub sweeps: usize,
    /// `min_x lambda_min(G + Hu)` at exit.
    pub min_eigenvalue: f64,
    pub converged: bool,
}

/// `min_x lambda_min(G + Hu)`.
pub fn min_form_eigenvalue(u: &[f64], bg: &HermitianField, grid: &Grid) -> f64 {
    let h2 = grid.h() * grid.h();
    let mut out = f64::INFINITY;
    grid.visit([0; 4], |v| {
        let m = visit_matrix(u, v, &bg.entries[v.idx], 0.25 / h2).shift(-u[v.idx] / h2);
        out = out.min(m.min_eigenvalue());
    });
    out
}

/// Lowers `u` node by node to `h^2 lambda_min(M)` until
/// `lambda_min(G + Hu) >= -tol_psd` everywhere. The output never exceeds
/// the input.
pub fn psh_project(u: &PotentialField, bg: &HermitianField, grid: &Grid, tol_psd: f64, max_sweeps: usize) -> Result<Projection> {
    check_len("u", u.values.len(), grid)?;
    check_len("G", bg.entries.len(), grid)?;
    let h2 = grid.h() * grid.h();
    let mut v = u.values.clone();
    let mut min_eig = min_form_eigenvalue(&v, bg, grid);
    let mut sweeps = 0;
    while min_eig < -tol_psd && sweeps < max_sweeps {
        grid.visit([0; 4], |x| {
            let cap = h2 * visit_matrix(&v, x, &bg.entries[x.idx], 0.25 / h2).min_eigenvalue();
            if v[x.idx] > cap {
                v[x.idx] = cap;
            }
        });
        sweeps += 1;
        min_eig = min_form_eigenvalue(&v, bg, grid);
    }
    Ok(Projection {
        u: PotentialField {
            values: v,
            sup_normalized: false,
        },
        sweeps,
        min_eigenvalue: min_eig,
        converged: min_eig >= -tol_psd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TrigPotential;

    #[test]
    fn root_factorization() {
        let m = Herm2::new(3.0, 2.0, num_complex::Complex64::new(0.4, -0.7));
        for r in [0.0, 0.5, 4.0] {
            let s = node_root(&m, r);
            let shifted = m.shift(-s);
            assert!((shifted.det() - r).abs() < 1e-12);
            assert!(shifted.min_eigenvalue() >= -1e-12);
        }
    }

    #[test]
    fn flat_case_in_one_sweep() {
        let g = Grid::new(8).unwrap();
        let sol = solve(&vec![1.0; g.len()], &HermitianField::flat(&g), &MeasureField::uniform(&g), &g, None, &SolverOptions::default()).unwrap();
        assert!(sol.diagnostics.converged);
        assert_eq!(sol.diagnostics.sweeps, 1);
        assert!(sol.u.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_unnormalized_density() {
        let g = Grid::new(8).unwrap();
        let err = solve(&vec![2.0; g.len()], &HermitianField::flat(&g), &MeasureField::uniform(&g), &g, None, &SolverOptions::default());
        assert!(err.is_err());
    }

    #[test]
    fn manufactured_solution_small_grid() {
        let g = Grid::new(8).unwrap();
        let pot = TrigPotential::manufactured();
        let f = pot.flat_density(&g);
        let bg = HermitianField::flat(&g);
        let sol = solve(&f, &bg, &MeasureField::uniform(&g), &g, None, &SolverOptions::default()).unwrap();
        assert!(sol.diagnostics.converged, "{:?}", sol.diagnostics);
        let mut exact = pot.field(&g);
        exact.sup_normalize();
        let err = sol.u.values.iter().zip(&exact.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < g.h() * g.h(), "err {err}");
        let ma = ma_measure(&sol.u, &bg, &g);
        assert!(ma.clamping == 0.0);
    }

    #[test]
    fn projection_lowers_spike() {
        let g = Grid::new(8).unwrap();
        let bg = HermitianField::flat(&g);
        let mut u = PotentialField::zeros(&g);
        u.values[100] = 0.5;
        let p = psh_project(&u, &bg, &g, 1e-10, 10_000).unwrap();
        assert!(p.converged);
        assert!(p.u.values.iter().zip(&u.values).all(|(a, b)| a <= b));
        assert!(p.u.values[100] <= g.h() * g.h() * 1.0 + 1e-15);
        let again = psh_project(&p.u, &bg, &g, 1e-10, 10_000).unwrap();
        assert_eq!(again.sweeps, 0);
        assert_eq!(again.u, p.u);
        let flat = psh_project(&PotentialField::zeros(&g), &bg, &g, 1e-10, 10).unwrap();
        assert_eq!(flat.sweeps, 0);
    }
}
