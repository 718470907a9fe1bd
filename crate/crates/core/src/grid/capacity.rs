//! Relative capacity through the extremal envelope
//! `u_K = sup{u psh : u <= 0, u <= -1 on K}`, whose Monge-Ampere mass on
//! `K` realizes `cap(K) = sup{\int_K (G + H rho)^2 : -1 <= rho <= 0}`.

use serde::{Deserialize, Serialize};

use super::hessian::visit_matrix;
use super::{check_len, Grid, HermitianField, MeasureField, NodeSet, PotentialField};
use crate::error::{invalid, Error, Result};
use crate::fit::{fit_power_law, ExponentFit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeOptions {
    /// Stop once a sweep moves no node by more than this.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_sweeps: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Envelope {
    pub u: PotentialField,
    pub sweeps: usize,
    pub last_change: f64,
    pub converged: bool,
}

/// Gauss-Seidel iteration `u(x) <- min(obstacle(x), h^2 lambda_min(M(x)))`
/// from `u = 0`.
pub fn extremal_envelope(set: &[bool], bg: &HermitianField, grid: &Grid, opts: &EnvelopeOptions) -> Result<Envelope> {
    check_len("K", set.len(), grid)?;
    check_len("G", bg.entries.len(), grid)?;
    let h2 = grid.h() * grid.h();
    let mut u = vec![0.0; grid.len()];
    let mut sweeps = 0;
    let mut change = f64::INFINITY;
    while change >= opts.tol && sweeps < opts.max_sweeps {
        change = 0.0;
        grid.visit([0; 4], |v| {
            let obstacle: f64 = if set[v.idx] { -1.0 } else { 0.0 };
            let next = obstacle.min(h2 * visit_matrix(&u, v, &bg.entries[v.idx], 0.25 / h2).min_eigenvalue());
            change = change.max((next - u[v.idx]).abs());
            u[v.idx] = next;
        });
        sweeps += 1;
    }
    Ok(Envelope {
        u: PotentialField {
            values: u,
            sup_normalized: false,
        },
        sweeps,
        last_change: change,
        converged: change < opts.tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Capacity {
    pub value: f64,
    pub sweeps: usize,
    pub converged: bool,
}

pub fn capacity(set: &[bool], bg: &HermitianField, grid: &Grid, opts: &EnvelopeOptions) -> Result<Capacity> {
    check_len("K", set.len(), grid)?;
    if !set.iter().any(|k| *k) {
        return Ok(Capacity {
            value: 0.0,
            sweeps: 0,
            converged: true,
        });
    }
    let env = extremal_envelope(set, bg, grid, opts)?;
    let h2 = grid.h() * grid.h();
    let u = &env.u.values;
    let mut value = 0.0;
    grid.visit([0; 4], |v| {
        if set[v.idx] {
            value += visit_matrix(u, v, &bg.entries[v.idx], 0.25 / h2).shift(-u[v.idx] / h2).det_psd();
        }
    });
    value *= grid.cell_volume();
    Ok(Capacity {
        value,
        sweeps: env.sweeps,
        converged: env.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominationRecord {
    pub capacity: f64,
    pub omega_mass: f64,
    pub density_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Domination {
    pub records: Vec<DominationRecord>,
    pub omega_fit: ExponentFit,
    pub density_fit: ExponentFit,
    /// Fitted `alpha` in `Omega(K) <= C cap(K)^{1 + alpha}`.
    pub alpha_hat: f64,
    /// Fitted `chi` in `\int_K f Omega <= C cap(K)^{1 + chi}`.
    pub chi_hat: f64,
}

/// Required ratio between the largest and smallest capacity in a
/// domination family.
pub const DOMINATION_MIN_RATIO: f64 = 10.0;

/// Finite-range estimates of the domination exponents from a family of
/// node sets. Fails with [`Error::DegenerateFit`] unless the capacities span
/// a factor `min_ratio`. On the grid a single node already carries a
/// capacity of order one, so metric balls cannot span a full decade.
pub fn domination_check(
    omega: &MeasureField,
    f: &[f64],
    bg: &HermitianField,
    grid: &Grid,
    family: &[NodeSet],
    min_ratio: f64,
    opts: &EnvelopeOptions,
) -> Result<Domination> {
    omega.validate(grid)?;
    check_len("f", f.len(), grid)?;
    let mut records = Vec::with_capacity(family.len());
    for set in family {
        let cap = capacity(set, bg, grid, opts)?;
        if !cap.converged {
            return Err(Error::NotConverged {
                sweeps: cap.sweeps,
                residual: f64::NAN,
            });
        }
        let fk: Vec<f64> = f.iter().zip(set).map(|(v, k)| if *k { *v } else { 0.0 }).collect();
        records.push(DominationRecord {
            capacity: cap.value,
            omega_mass: omega.mass_of(set, grid),
            density_mass: omega.integrate(&fk, grid),
        });
    }
    let caps: Vec<f64> = records.iter().map(|r| r.capacity).collect();
    let (lo, hi) = caps.iter().filter(|c| **c > 0.0).fold((f64::INFINITY, 0.0f64), |(a, b), c| (a.min(*c), b.max(*c)));
    if !(hi / lo >= min_ratio) {
        return Err(Error::DegenerateFit(format!("capacities span {lo:.3e}..{hi:.3e}, ratio below {min_ratio}")));
    }
    let omega_fit = fit_power_law(&caps, &records.iter().map(|r| r.omega_mass).collect::<Vec<_>>(), 3)?;
    let density_fit = fit_power_law(&caps, &records.iter().map(|r| r.density_mass).collect::<Vec<_>>(), 3)?;
    Ok(Domination {
        alpha_hat: omega_fit.slope - 1.0,
        chi_hat: density_fit.slope - 1.0,
        records,
        omega_fit,
        density_fit,
    })
}

/// Balls about node 0 with radii `r_j`.
pub fn ball_family(grid: &Grid, radii: &[f64]) -> Result<Vec<NodeSet>> {
    if radii.iter().any(|r| !(*r >= 0.0 && *r < 0.5)) {
        return Err(invalid("radii", "must lie in [0, 1/2)"));
    }
    Ok(radii.iter().map(|r| super::ball(grid, 0, *r)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_full() {
        let g = Grid::new(8).unwrap();
        let bg = HermitianField::flat(&g);
        let opts = EnvelopeOptions::default();
        assert_eq!(capacity(&vec![false; g.len()], &bg, &g, &opts).unwrap().value, 0.0);
        let full = capacity(&vec![true; g.len()], &bg, &g, &opts).unwrap();
        assert!((full.value - 1.0).abs() < 1e-8, "{full:?}");
        let env = extremal_envelope(&vec![true; g.len()], &bg, &g, &opts).unwrap();
        assert!(env.u.values.iter().all(|v| *v == -1.0));
    }

    #[test]
    fn nested_balls_are_monotone() {
        let g = Grid::new(8).unwrap();
        let bg = HermitianField::flat(&g);
        let opts = EnvelopeOptions::default();
        let family = ball_family(&g, &[0.0, 0.13, 0.26]).unwrap();
        let caps: Vec<f64> = family.iter().map(|k| capacity(k, &bg, &g, &opts).unwrap().value).collect();
        assert!(caps.windows(2).all(|w| w[0] <= w[1] + 1e-9), "{caps:?}");
        assert!(caps[0] > 0.0);
    }
}
