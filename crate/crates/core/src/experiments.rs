//! Stability experiments: density pairs from perturbation families, paired
//! solves, the sup-difference normalization, and exponent fits against the
//! reference exponents.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fit::{fit_power_law, ExponentFit};
use crate::grid::capacity::EnvelopeOptions;
use crate::grid::checks::{comparison_check, sublevel_capacity_check, ComparisonReport, SublevelReport};
use crate::grid::solver::{psh_project, solve, Solution, SolveDiagnostics, SolverOptions};
use crate::grid::{normalize_density, Grid, HermitianField, MeasureField, PlaneWave, PotentialField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FamilyKind {
    /// A few seeded plane waves.
    Trig,
    /// `max(dist(x, x0), h)^{-2 gamma}` about a seeded node.
    Peak { gamma: f64 },
    /// Indicator of a ball smoothed by `tanh` over `width`.
    IndicatorMollified { radius: f64, width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationFamily {
    pub kind: FamilyKind,
    /// Amplitudes `theta_j` of the perturbation.
    pub amplitudes: Vec<f64>,
    pub seed: u64,
}

impl PerturbationFamily {
    /// `theta_j = 10^{-3 + j/2}`, `j = 0..5`.
    pub fn default_amplitudes() -> Vec<f64> {
        (0..6).map(|j| 10f64.powf(-3.0 + 0.5 * j as f64)).collect()
    }

    pub fn new(kind: FamilyKind, amplitudes: Vec<f64>, seed: u64) -> Result<Self> {
        if amplitudes.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(invalid("amplitudes", "must be finite and nonnegative"));
        }
        match kind {
            FamilyKind::Peak { gamma } if !(gamma > 0.0 && gamma < 2.0) => return Err(invalid("gamma", "need 0 < gamma < 2 for integrability")),
            FamilyKind::IndicatorMollified { radius, width } if !(radius > 0.0 && radius < 0.5 && width > 0.0) => {
                return Err(invalid("radius", "need 0 < radius < 1/2 and width > 0"))
            }
            _ => {}
        }
        Ok(Self { kind, amplitudes, seed })
    }

    /// Zero-mean (against `Omega`) perturbation with sup norm 1.
    pub fn perturbation(&self, grid: &Grid, omega: &MeasureField) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let raw: Vec<f64> = match self.kind {
            FamilyKind::Trig => {
                let waves: Vec<PlaneWave> = (0..3)
                    .map(|_| {
                        let mut k = [0; 4];
                        while k == [0; 4] {
                            k = std::array::from_fn(|_| rng.gen_range(-2..=2));
                        }
                        PlaneWave {
                            amplitude: rng.gen_range(0.5..1.0),
                            k,
                            phase: rng.gen_range(0.0..std::f64::consts::TAU),
                        }
                    })
                    .collect();
                (0..grid.len()).map(|i| waves.iter().map(|w| w.value(grid.position(i))).sum()).collect()
            }
            FamilyKind::Peak { gamma } => {
                let centre = rng.gen_range(0..grid.len());
                (0..grid.len()).map(|i| grid.torus_distance(i, centre).max(grid.h()).powf(-2.0 * gamma)).collect()
            }
            FamilyKind::IndicatorMollified { radius, width } => {
                let centre = rng.gen_range(0..grid.len());
                (0..grid.len())
                    .map(|i| 0.5 * (1.0 - ((grid.torus_distance(i, centre) - radius) / width).tanh()))
                    .collect()
            }
        };
        let mean = omega.integrate(&raw, grid) / omega.integrate(&vec![1.0; grid.len()], grid);
        let centred: Vec<f64> = raw.iter().map(|v| v - mean).collect();
        let sup = centred.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if sup == 0.0 {
            return centred;
        }
        centred.iter().map(|v| v / sup).collect()
    }
}

/// `g = clip(f + theta eta, 0)`, renormalized to the mass of `f`. Returns
/// the density and the mass removed by clipping.
pub fn perturbed_density(f: &[f64], eta: &[f64], theta: f64, omega: &MeasureField, grid: &Grid) -> Result<(Vec<f64>, f64)> {
    let raw: Vec<f64> = f.iter().zip(eta).map(|(a, e)| a + theta * e).collect();
    let clipped: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
    let bias: Vec<f64> = raw.iter().zip(&clipped).map(|(r, c)| c - r).collect();
    let clip_mass = omega.integrate(&bias, grid);
    let (g, _) = normalize_density(clipped, omega, omega.integrate(f, grid), grid)?;
    Ok((g, clip_mass))
}

/// Shifts `psi` by `(max(phi - psi) - max(psi - phi)) / 2`, after which the
/// two maxima agree.
pub fn normalize_pair(phi: &PotentialField, psi: &PotentialField) -> (PotentialField, PotentialField) {
    let up = phi.values.iter().zip(&psi.values).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
    let down = phi.values.iter().zip(&psi.values).map(|(a, b)| b - a).fold(f64::NEG_INFINITY, f64::max);
    let c = 0.5 * (up - down);
    let mut shifted = psi.shifted(c);
    shifted.sup_normalized = false;
    (phi.clone(), shifted)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRecord {
    pub index: usize,
    pub amplitude: f64,
    /// `||f - g||_{L^1(Omega)}`.
    pub theta: f64,
    pub d_sup: f64,
    /// `||phi - psi||_{L^s(omega^n)}`.
    pub d_s: f64,
    pub residual_f: f64,
    pub residual_g: f64,
    pub clipped_mass: f64,
    pub converged: bool,
    pub grid_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceExponents {
    pub eps: f64,
    /// `1/(n + 3 + eps)`.
    pub first_pass: f64,
    /// `1/(n + 2 + eps)`.
    pub improved: f64,
    /// `1/(n + eps)`.
    pub main: f64,
    /// `1/n`, no better exponent is possible.
    pub sharp_limit: f64,
}

impl ReferenceExponents {
    pub fn new(n: u32, eps: f64) -> Self {
        let n = n as f64;
        Self {
            eps,
            first_pass: 1.0 / (n + 3.0 + eps),
            improved: 1.0 / (n + 2.0 + eps),
            main: 1.0 / (n + eps),
            sharp_limit: 1.0 / n,
        }
    }
}

/// `s / (n q + s + eps)` with `q = p / (p - 1)`.
pub fn egz_reference(n: u32, s: f64, p: f64, eps: f64) -> f64 {
    let q = p / (p - 1.0);
    s / (n as f64 * q + s + eps)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilitySweep {
    pub records: Vec<StabilityRecord>,
    /// `log d_sup` against `log theta`; `None` when every `d_sup` is 0.
    pub fit: Option<ExponentFit>,
    pub references: ReferenceExponents,
    /// References at the swept `eps` values.
    pub reference_table: Vec<ReferenceExponents>,
    /// `1/(n + 1)`.
    pub floor: f64,
    pub meets_floor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSetup {
    pub eps: f64,
    /// Exponent of the `L^s` distance.
    pub s: f64,
    pub solver: SolverOptions,
}

impl Default for SweepSetup {
    fn default() -> Self {
        Self {
            eps: 0.1,
            s: 2.0,
            solver: SolverOptions::default(),
        }
    }
}

/// `eps` values tabulated in reports.
pub const REPORT_EPS: [f64; 3] = [0.01, 0.1, 0.5];

/// `(\int |u|^s det G)^{1/s}`.
pub fn ls_norm(u: &[f64], s: f64, bg: &HermitianField, grid: &Grid) -> f64 {
    let sum: f64 = u.iter().zip(&bg.entries).map(|(v, g)| v.abs().powf(s) * g.det()).sum();
    (sum * grid.cell_volume()).powf(1.0 / s)
}

fn build_records(family: &PerturbationFamily, f: &[f64], bg: &HermitianField, omega: &MeasureField, grid: &Grid, setup: &SweepSetup) -> Result<Vec<StabilityRecord>> {
    let f = normalize_density(f.to_vec(), omega, bg.mass(grid), grid)?.0;
    let eta = family.perturbation(grid, omega);
    let base: Solution = solve(&f, bg, omega, grid, None, &setup.solver)?;
    let mut records = Vec::with_capacity(family.amplitudes.len());
    for (index, &amp) in family.amplitudes.iter().enumerate() {
        let (g, clipped_mass) = perturbed_density(&f, &eta, amp, omega, grid)?;
        let diff: Vec<f64> = f.iter().zip(&g).map(|(a, b)| (a - b).abs()).collect();
        let sol = solve(&g, bg, omega, grid, Some(&base.u), &setup.solver)?;
        let (phi, psi) = normalize_pair(&base.u, &sol.u);
        let delta: Vec<f64> = phi.values.iter().zip(&psi.values).map(|(a, b)| a - b).collect();
        records.push(StabilityRecord {
            index,
            amplitude: amp,
            theta: omega.integrate(&diff, grid),
            d_sup: delta.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            d_s: ls_norm(&delta, setup.s, bg, grid),
            residual_f: base.diagnostics.residual,
            residual_g: sol.diagnostics.residual,
            clipped_mass,
            converged: base.diagnostics.converged && sol.diagnostics.converged,
            grid_size: grid.size(),
        });
    }
    Ok(records)
}

fn usable(records: &[StabilityRecord]) -> Result<Vec<&StabilityRecord>> {
    let ok: Vec<&StabilityRecord> = records.iter().filter(|r| r.converged).collect();
    if ok.len() < 4 {
        return Err(Error::InsufficientRecords { got: ok.len(), needed: 4 });
    }
    Ok(ok)
}

/// Solves `f` and each perturbed `g`, normalizes the pairs and fits
/// `log ||phi - psi||_inf` against `log ||f - g||_1`. Unconverged records
/// are kept in the output but never enter the fit.
pub fn run_stability_sweep(family: &PerturbationFamily, f: &[f64], bg: &HermitianField, omega: &MeasureField, grid: &Grid, setup: &SweepSetup) -> Result<StabilitySweep> {
    let n = Grid::COMPLEX_DIM;
    let records = build_records(family, f, bg, omega, grid, setup)?;
    let ok = usable(&records)?;
    let fit = if ok.iter().all(|r| r.d_sup == 0.0) {
        None
    } else {
        let xs: Vec<f64> = ok.iter().map(|r| r.theta).collect();
        let ys: Vec<f64> = ok.iter().map(|r| r.d_sup).collect();
        Some(fit_power_law(&xs, &ys, 4)?)
    };
    let floor = 1.0 / (n as f64 + 1.0);
    Ok(StabilitySweep {
        meets_floor: fit.as_ref().is_some_and(|f| f.slope >= floor),
        fit,
        references: ReferenceExponents::new(n, setup.eps),
        reference_table: REPORT_EPS.iter().map(|e| ReferenceExponents::new(n, *e)).collect(),
        floor,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EgzSweep {
    pub records: Vec<StabilityRecord>,
    /// `log d_sup` against `log d_s`.
    pub fit: Option<ExponentFit>,
    pub s: f64,
    pub p: f64,
    pub reference: f64,
    pub reference_table: Vec<(f64, f64)>,
    pub exceeds_reference: bool,
}

pub fn run_egz_sweep(family: &PerturbationFamily, f: &[f64], bg: &HermitianField, omega: &MeasureField, grid: &Grid, setup: &SweepSetup, p: f64) -> Result<EgzSweep> {
    if !(setup.s > 0.0) {
        return Err(invalid("s", "must be positive"));
    }
    if !(p > 1.0) {
        return Err(invalid("p", "must exceed 1"));
    }
    let n = Grid::COMPLEX_DIM;
    let records = build_records(family, f, bg, omega, grid, setup)?;
    let ok = usable(&records)?;
    let fit = if ok.iter().all(|r| r.d_sup == 0.0) {
        None
    } else {
        let xs: Vec<f64> = ok.iter().map(|r| r.d_s).collect();
        let ys: Vec<f64> = ok.iter().map(|r| r.d_sup).collect();
        Some(fit_power_law(&xs, &ys, 4)?)
    };
    let reference = egz_reference(n, setup.s, p, setup.eps);
    Ok(EgzSweep {
        exceeds_reference: fit.as_ref().is_some_and(|f| f.slope >= reference),
        fit,
        s: setup.s,
        p,
        reference,
        reference_table: REPORT_EPS.iter().map(|e| (*e, egz_reference(n, setup.s, p, *e))).collect(),
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProofSets {
    /// `(k, \int_{E_k} g Omega)` with `E_k = {psi < phi - k a t}`.
    pub level_masses: Vec<(u32, f64)>,
    /// `\int_G g Omega` with `G = {f < (1 - t^2) g}`.
    pub g_set_mass: f64,
    pub l1: f64,
    /// `t^2 \int_G g Omega <= ||f - g||_1`.
    pub inequality_holds: bool,
}

pub fn proof_set_diagnostics(phi: &PotentialField, psi: &PotentialField, f: &[f64], g: &[f64], omega: &MeasureField, grid: &Grid, t: f64, a: f64) -> Result<ProofSets> {
    if !(t > 0.0 && t < 1.0) {
        return Err(invalid("t", "must lie in (0, 1)"));
    }
    let masked = |keep: &dyn Fn(usize) -> bool| -> f64 {
        let v: Vec<f64> = (0..grid.len()).map(|i| if keep(i) { g[i] } else { 0.0 }).collect();
        omega.integrate(&v, grid)
    };
    let level_masses = [0u32, 2, 4]
        .iter()
        .map(|&k| (k, masked(&|i| psi.values[i] < phi.values[i] - k as f64 * a * t)))
        .collect();
    let g_set_mass = masked(&|i| f[i] < (1.0 - t * t) * g[i]);
    let diff: Vec<f64> = f.iter().zip(g).map(|(x, y)| (x - y).abs()).collect();
    let l1 = omega.integrate(&diff, grid);
    Ok(ProofSets {
        level_masses,
        g_set_mass,
        l1,
        inequality_holds: t * t * g_set_mass <= l1 * (1.0 + 1e-12),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCheck {
    pub i: usize,
    pub j: usize,
    pub comparison: ComparisonReport,
    pub sublevel: SublevelReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairChecks {
    pub grid_size: usize,
    pub solves: Vec<SolveDiagnostics>,
    pub projection_sweeps: Vec<usize>,
    pub pairs: Vec<PairCheck>,
    /// Largest `violation / total_mass` over the comparison checks.
    pub comparison_worst: f64,
    /// Largest `violation / rhs` over the sublevel checks.
    pub sublevel_worst: f64,
}

/// Solves `count` densities `1 + theta eta_j` (trig family, seeds
/// `seed + j`), projects each solution onto psh functions and runs the
/// comparison and sublevel-capacity checks on every pair. Pairs are
/// normalized, then shifted by `-min phi`; `s = C / 4`.
pub fn pair_checks(grid: &Grid, bg: &HermitianField, omega: &MeasureField, count: usize, theta: f64, seed: u64, solver: &SolverOptions, envelope: &EnvelopeOptions) -> Result<PairChecks> {
    if count < 2 {
        return Err(invalid("count", "need at least two solutions"));
    }
    let mut sols = Vec::with_capacity(count);
    let mut solves = Vec::with_capacity(count);
    let mut projection_sweeps = Vec::with_capacity(count);
    for j in 0..count {
        let family = PerturbationFamily::new(FamilyKind::Trig, vec![theta], seed + j as u64)?;
        let eta = family.perturbation(grid, omega);
        let ones = vec![1.0; grid.len()];
        let (f, _) = perturbed_density(&ones, &eta, theta, omega, grid)?;
        let f = normalize_density(f, omega, bg.mass(grid), grid)?.0;
        let sol = solve(&f, bg, omega, grid, None, solver)?;
        if !sol.diagnostics.converged {
            return Err(Error::NotConverged {
                sweeps: sol.diagnostics.sweeps,
                residual: sol.diagnostics.residual,
            });
        }
        let proj = psh_project(&sol.u, bg, grid, solver.tol_psd, solver.max_sweeps)?;
        projection_sweeps.push(proj.sweeps);
        solves.push(sol.diagnostics);
        sols.push(proj.u);
    }
    let mut pairs = Vec::new();
    for i in 0..count {
        for j in i + 1..count {
            let (phi, psi) = normalize_pair(&sols[i], &sols[j]);
            let comparison = comparison_check(&phi, &psi, bg, grid)?;
            let m = phi.min();
            let (phi, psi) = (phi.shifted(-m), psi.shifted(-m));
            let sublevel = sublevel_capacity_check(&phi, &psi, phi.max() / 4.0, bg, grid, envelope)?;
            pairs.push(PairCheck { i, j, comparison, sublevel });
        }
    }
    let ratio = |v: f64, d: f64| if v == 0.0 { 0.0 } else { v / d };
    Ok(PairChecks {
        grid_size: grid.size(),
        comparison_worst: pairs.iter().map(|p| ratio(p.comparison.violation, p.comparison.total_mass)).fold(0.0, f64::max),
        sublevel_worst: pairs.iter().map(|p| ratio(p.sublevel.violation, p.sublevel.rhs)).fold(0.0, f64::max),
        solves,
        projection_sweeps,
        pairs,
    })
}
