//! Tolerance-based checks of the continuum inequalities on solved fields.

use serde::Serialize;

use super::capacity::{capacity, EnvelopeOptions};
use super::hessian::{form_field, mixed_determinant};
use super::solver::{solve, SolverOptions};
use super::{check_len, lp_norm, normalize_density, Grid, HermitianField, MeasureField, PotentialField};
use crate::error::{invalid, Result};
use crate::fit::{fit_power_law, ExponentFit};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// `\int_{phi < psi} MA(psi)`.
    pub lhs: f64,
    /// `\int_{phi < psi} MA(phi)`.
    pub rhs: f64,
    pub violation: f64,
    pub total_mass: f64,
    pub set_size: usize,
}

/// `max(0, \int_{phi<psi} MA(psi) - \int_{phi<psi} MA(phi))`.
pub fn comparison_check(phi: &PotentialField, psi: &PotentialField, bg: &HermitianField, grid: &Grid) -> Result<ComparisonReport> {
    check_len("phi", phi.values.len(), grid)?;
    check_len("psi", psi.values.len(), grid)?;
    let a = form_field(psi, bg, grid);
    let b = form_field(phi, bg, grid);
    let vol = grid.cell_volume();
    let set: Vec<usize> = (0..grid.len()).filter(|i| phi.values[*i] < psi.values[*i]).collect();
    let lhs = set.iter().map(|i| a[*i].det_psd()).sum::<f64>() * vol;
    let rhs = set.iter().map(|i| b[*i].det_psd()).sum::<f64>() * vol;
    Ok(ComparisonReport {
        lhs,
        rhs,
        violation: (lhs - rhs).max(0.0),
        total_mass: bg.mass(grid),
        set_size: set.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixedReport {
    /// `max_x (sqrt(f g) w - D(A, B))_+`.
    pub max_violation: f64,
    /// How far the hypotheses `MA(psi) >= f Omega`, `MA(phi) >= g Omega`
    /// fail pointwise (0 when they hold).
    pub hypothesis_slack: f64,
}

/// Pointwise `D(G + H psi, G + H phi) >= sqrt(f g) Omega` with both forms
/// clamped to the PSD cone.
pub fn mixed_ma_check(phi: &PotentialField, psi: &PotentialField, f: &[f64], g: &[f64], omega: &MeasureField, bg: &HermitianField, grid: &Grid, n: u32) -> Result<MixedReport> {
    if n != 2 {
        return Err(crate::Error::Unsupported(format!("mixed check in dimension {n}; the grid is 2-dimensional")));
    }
    check_len("f", f.len(), grid)?;
    check_len("g", g.len(), grid)?;
    let a = form_field(psi, bg, grid);
    let b = form_field(phi, bg, grid);
    let mut out = MixedReport {
        max_violation: 0.0,
        hypothesis_slack: 0.0,
    };
    for i in 0..grid.len() {
        let (ac, bc) = (a[i].clamp_psd(), b[i].clamp_psd());
        let w = omega.weights[i];
        out.hypothesis_slack = out.hypothesis_slack.max(f[i] * w - ac.det()).max(g[i] * w - bc.det());
        let bound = (f[i] * g[i]).sqrt() * w;
        out.max_violation = out.max_violation.max(bound - mixed_determinant(&ac, &bc));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SublevelReport {
    /// `cap({psi + 2s < phi})`.
    pub lhs: f64,
    /// `((C + 1)/s)^n \int_{psi + s < phi} MA(psi)`.
    pub rhs: f64,
    pub prefactor: f64,
    pub violation: f64,
    pub c: f64,
    pub s: f64,
    pub capacity_converged: bool,
}

/// `((C + 1)/s)^n`.
pub fn sublevel_prefactor(c: f64, s: f64, n: u32) -> f64 {
    ((c + 1.0) / s).powi(n as i32)
}

/// Checks `cap({psi + 2s < phi}) <= ((C+1)/s)^n \int_{psi + s < phi} MA(psi)`
/// for `0 <= phi <= C`. Sets use strict inequalities.
pub fn sublevel_capacity_check(phi: &PotentialField, psi: &PotentialField, s: f64, bg: &HermitianField, grid: &Grid, opts: &EnvelopeOptions) -> Result<SublevelReport> {
    check_len("phi", phi.values.len(), grid)?;
    check_len("psi", psi.values.len(), grid)?;
    if phi.min() < -1e-12 {
        return Err(invalid("phi", format!("must be shifted to min >= 0, got {}", phi.min())));
    }
    let c = phi.max();
    if !(s > 0.0 && s < c + 1.0) {
        return Err(invalid("s", format!("{s} outside (0, C + 1) with C = {c}")));
    }
    let far: Vec<bool> = (0..grid.len()).map(|i| psi.values[i] + 2.0 * s < phi.values[i]).collect();
    let near: Vec<usize> = (0..grid.len()).filter(|i| psi.values[*i] + s < phi.values[*i]).collect();
    let cap = capacity(&far, bg, grid, opts)?;
    let forms = form_field(psi, bg, grid);
    let mass = near.iter().map(|i| forms[*i].det_psd()).sum::<f64>() * grid.cell_volume();
    let prefactor = sublevel_prefactor(c, s, Grid::COMPLEX_DIM);
    let rhs = prefactor * mass;
    Ok(SublevelReport {
        lhs: cap.value,
        rhs,
        prefactor,
        violation: (cap.value - rhs).max(0.0),
        c,
        s,
        capacity_converged: cap.converged,
    })
}

/// `max(dist(x, 0), floor)^{-2 gamma}`, mass-normalized against `Omega`.
pub fn peaked_density(grid: &Grid, gamma: f64, floor: f64, omega: &MeasureField, target: f64) -> Result<Vec<f64>> {
    let raw = (0..grid.len()).map(|i| grid.torus_distance(i, 0).max(floor).powf(-2.0 * gamma)).collect();
    Ok(normalize_density(raw, omega, target, grid)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct APrioriRecord {
    pub gamma: f64,
    pub lp_norm: f64,
    pub sup_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct APrioriReport {
    pub records: Vec<APrioriRecord>,
    /// `log ||u||_inf` against `log ||f||_p^n`.
    pub fit: ExponentFit,
}

/// Solves for a family of peaked densities and fits the growth of
/// `||u||_inf` against `||f||_{L^p}^n`.
pub fn a_priori_scaling(grid: &Grid, bg: &HermitianField, omega: &MeasureField, p: f64, gammas: &[f64], opts: &SolverOptions) -> Result<APrioriReport> {
    if !(p > 1.0) {
        return Err(invalid("p", "must exceed 1"));
    }
    let mut records = Vec::new();
    for &gamma in gammas {
        let f = peaked_density(grid, gamma, grid.h(), omega, bg.mass(grid))?;
        let sol = solve(&f, bg, omega, grid, None, opts)?;
        records.push(APrioriRecord {
            gamma,
            lp_norm: lp_norm(&f, p, omega, grid),
            sup_norm: sol.u.sup_norm(),
            converged: sol.diagnostics.converged,
        });
    }
    let ok: Vec<&APrioriRecord> = records.iter().filter(|r| r.converged).collect();
    let n = Grid::COMPLEX_DIM as i32;
    let xs: Vec<f64> = ok.iter().map(|r| r.lp_norm.powi(n)).collect();
    let ys: Vec<f64> = ok.iter().map(|r| r.sup_norm).collect();
    let fit = fit_power_law(&xs, &ys, 3)?;
    Ok(APrioriReport { records, fit })
}
