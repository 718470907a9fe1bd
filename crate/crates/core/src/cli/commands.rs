use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use super::config::RunConfig;
use super::output::{write_csv, write_summary};
use crate::error::{invalid, Error, Result};
use crate::experiments::{pair_checks, perturbed_density, run_egz_sweep, run_stability_sweep, FamilyKind, PerturbationFamily, StabilityRecord, SweepSetup};
use crate::exponents::{beta_sequence, chi_beta_sequence, default_delta0, kappa, kappa_closed_form, kappa_inverse, ChiParams, DeltaSchedule, GrowthFunction, KappaParams, RecurrenceState};
use crate::fit::ExponentFit;
use crate::grid::capacity::{ball_family, capacity, domination_check, EnvelopeOptions, DOMINATION_MIN_RATIO};
use crate::grid::checks::peaked_density;
use crate::grid::io::{write_field, FieldSidecar};
use crate::grid::solver::{solve, SolverOptions};
use crate::grid::{mixed_determinant, normalize_density, Grid, Herm2, HermitianField, MeasureField};
use crate::radial::{default_h_schedule, sharpness_report, RadialProfile};

pub(super) struct Outcome {
    pub converged: bool,
    pub message: String,
}

impl Outcome {
    fn ok(message: String) -> Self {
        Self { converged: true, message }
    }
}

pub(super) fn execute(cfg: &RunConfig) -> Result<Outcome> {
    match cfg.command.as_str() {
        "exponents" => exponents(cfg),
        "sharpness" => sharpness(cfg),
        "solve" => solve_cmd(cfg),
        "stability" => stability(cfg),
        "egz" => egz(cfg),
        "capacity" => capacity_cmd(cfg),
        "properties" => properties(cfg),
        other => Err(invalid("command", format!("unknown command {other:?}"))),
    }
}

fn exponents(cfg: &RunConfig) -> Result<Outcome> {
    let dir = cfg.command_dir();
    let (n, eps, k_max) = (cfg.n, cfg.eps, cfg.k_max);
    let zero = beta_sequence(RecurrenceState::new(n, eps, DeltaSchedule::Zero)?, k_max)?;
    let delta0 = match cfg.delta0 {
        Some(d) => d,
        None => default_delta0(n, eps)?,
    };
    let slack = beta_sequence(RecurrenceState::new(n, eps, DeltaSchedule::Geometric { delta0 })?, k_max)?;
    let rows: Vec<Vec<f64>> = (0..=k_max)
        .map(|k| vec![k as f64, if k == 0 { 0.0 } else { slack.state.deltas.delta(k) }, slack.state.betas[k], zero.state.betas[k]])
        .collect();
    write_csv(&dir.join("beta.csv"), &["k", "delta_k", "beta_k", "beta_k_zero_schedule"], &rows)?;

    let kp = KappaParams::new(n, 1.0, 1.0, GrowthFunction::monomial(cfg.m)?)?;
    let mut kappa_rows = Vec::new();
    let mut worst_rel = 0.0f64;
    let mut worst_roundtrip = 0.0f64;
    for j in 0..=16 {
        let r = 10f64.powf(-8.0 + 0.5 * j as f64);
        let numeric = kappa(r, &kp)?;
        let closed = kappa_closed_form(r, &kp)?;
        let rel = (numeric - closed).abs() / closed;
        let roundtrip = (kappa_inverse(numeric, &kp)? - r).abs() / r;
        worst_rel = worst_rel.max(rel);
        worst_roundtrip = worst_roundtrip.max(roundtrip);
        kappa_rows.push(vec![r, numeric, closed, rel, roundtrip]);
    }
    write_csv(&dir.join("kappa.csv"), &["r", "kappa", "kappa_closed_form", "relative_difference", "inverse_roundtrip_error"], &kappa_rows)?;

    let chi = match cfg.chi {
        Some(chi) => {
            let seq = chi_beta_sequence(ChiParams::new(n, chi)?, &DeltaSchedule::Zero, k_max)?;
            let rows: Vec<Vec<f64>> = seq.betas.iter().enumerate().map(|(k, b)| vec![k as f64, *b]).collect();
            write_csv(&dir.join("chi.csv"), &["k", "beta_k"], &rows)?;
            Some(json!({
                "chi": chi,
                "observed_limit": seq.observed_limit,
                "fixed_point": seq.fixed_point,
                "claimed_denominator": seq.claimed_denominator,
            }))
        }
        None => None,
    };

    let results = json!({
        "limit": zero.limit,
        "zero_schedule": {
            "final_beta": zero.state.betas[k_max],
            "gap": zero.gap,
            "first_within_1e-9": zero.first_within(1e-9),
        },
        "slack_schedule": {
            "delta0": delta0,
            "final_beta": slack.state.betas[k_max],
            "gap": slack.gap,
        },
        "kappa": {
            "m": cfg.m,
            "max_relative_difference": worst_rel,
            "max_inverse_roundtrip_error": worst_roundtrip,
        },
        "chi": chi,
    });
    write_summary(&dir.join("summary.json"), cfg, &results)?;
    Ok(Outcome::ok(format!(
        "A = {:.12} (n = {n}, eps = {eps}); beta_{k_max} = {:.12}; outputs in {}",
        zero.limit,
        zero.state.betas[k_max],
        dir.display()
    )))
}

fn sharpness(cfg: &RunConfig) -> Result<Outcome> {
    let dir = cfg.command_dir();
    let profile = RadialProfile::new(cfg.b, cfg.d, cfg.alpha, cfg.n, cfg.smoothing_width)?;
    let report = sharpness_report(&profile, &default_h_schedule(cfg.n))?;
    let rows: Vec<Vec<f64>> = report
        .rows
        .iter()
        .map(|r| vec![r.h_norm, r.sup_distance, r.l1_distance, r.l1_error_estimate, r.pieces[0], r.pieces[1], r.pieces[2]])
        .collect();
    write_csv(
        &dir.join("sharpness.csv"),
        &["h_norm", "sup_distance", "l1_distance", "l1_error_estimate", "l1_inner", "l1_middle", "l1_outer"],
        &rows,
    )?;
    let a = cfg.alpha;
    let results = json!({
        "ma_constant": profile.ma_constant,
        "expected": { "sup_slope": 2.0 * a, "l1_slope": 2.0 * cfg.n as f64 * a, "ratio": cfg.n },
        "sup_fit": fit_summary(&report.sup_fit),
        "l1_fit": fit_summary(&report.l1_fit),
        "core_l1_fit": fit_summary(&report.core_l1_fit),
        "implied_m_lower_bound": report.implied_m_lower_bound,
        "ratio_within_tolerance": report.ratio_within_tolerance,
        "inconclusive": report.inconclusive,
    });
    write_summary(&dir.join("summary.json"), cfg, &results)?;
    Ok(Outcome::ok(format!(
        "sup slope {:.4}, L1 slope {:.4}, ratio {:.3}; outputs in {}",
        report.sup_fit.slope,
        report.l1_fit.slope,
        report.implied_m_lower_bound,
        dir.display()
    )))
}

fn fit_summary(f: &ExponentFit) -> serde_json::Value {
    json!({
        "slope": f.slope,
        "intercept": f.intercept,
        "residual": f.residual,
        "samples": f.samples.len(),
        "decades": f.decades(),
    })
}

struct GridSetup {
    grid: Grid,
    bg: HermitianField,
    omega: MeasureField,
}

fn grid_setup(cfg: &RunConfig) -> Result<GridSetup> {
    let grid = Grid::new(cfg.grid_size)?;
    let bg = match cfg.background.as_str() {
        "flat" => HermitianField::flat(&grid),
        "cosine" => HermitianField::cosine_degenerate(&grid, cfg.cosine_c)?,
        other => return Err(invalid("background", format!("unknown family {other:?}"))),
    };
    let omega = MeasureField::uniform(&grid);
    Ok(GridSetup { grid, bg, omega })
}

fn family(cfg: &RunConfig) -> Result<PerturbationFamily> {
    let kind = match cfg.perturbation.as_str() {
        "trig" => FamilyKind::Trig,
        "peak" => FamilyKind::Peak { gamma: cfg.gamma },
        "indicator" => FamilyKind::IndicatorMollified {
            radius: cfg.radius,
            width: cfg.width,
        },
        other => return Err(invalid("perturbation", format!("unknown family {other:?}"))),
    };
    PerturbationFamily::new(kind, cfg.amplitudes.clone(), cfg.seed)
}

fn solver_options(cfg: &RunConfig) -> SolverOptions {
    SolverOptions {
        tol: cfg.tol,
        tol_psd: cfg.tol_psd,
        max_sweeps: cfg.max_sweeps,
        ..SolverOptions::default()
    }
}

fn sweep_setup(cfg: &RunConfig) -> SweepSetup {
    SweepSetup {
        eps: cfg.eps,
        s: cfg.s,
        solver: solver_options(cfg),
    }
}

/// Solves for `1 + theta eta`, `theta` the largest configured amplitude.
fn solve_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let dir = cfg.command_dir();
    let GridSetup { grid, bg, omega } = grid_setup(cfg)?;
    let fam = family(cfg)?;
    let theta = cfg.amplitudes.iter().copied().fold(0.0, f64::max);
    let eta = fam.perturbation(&grid, &omega);
    let (f, clipped_mass) = perturbed_density(&vec![1.0; grid.len()], &eta, theta, &omega, &grid)?;
    let f = normalize_density(f, &omega, bg.mass(&grid), &grid)?.0;
    let sol = solve(&f, &bg, &omega, &grid, None, &solver_options(cfg))?;
    let d = &sol.diagnostics;
    let meta = json!({
        "background": cfg.background,
        "perturbation": cfg.perturbation,
        "theta": theta,
        "seed": cfg.seed,
        "solvability_constant": d.solvability_constant,
    });
    write_field(&dir, &sol.u.values, &FieldSidecar::new("u", grid.size(), meta.clone()))?;
    write_field(&dir, &f, &FieldSidecar::new("f", grid.size(), meta))?;
    write_summary(&dir.join("summary.json"), cfg, &json!({ "theta": theta, "clipped_mass": clipped_mass, "diagnostics": d }))?;
    Ok(Outcome {
        converged: d.converged,
        message: format!(
            "{} sweeps, residual {:.3e}, c = {:.6}, |u|_inf = {:.6}; outputs in {}",
            d.sweeps,
            d.residual,
            d.solvability_constant,
            d.sup_norm,
            dir.display()
        ),
    })
}

const RECORD_HEADER: [&str; 10] = ["index", "amplitude", "theta", "d_sup", "d_s", "residual_f", "residual_g", "clipped_mass", "converged", "grid_size"];

fn record_rows(records: &[StabilityRecord]) -> Vec<Vec<f64>> {
    records
        .iter()
        .map(|r| {
            vec![
                r.index as f64,
                r.amplitude,
                r.theta,
                r.d_sup,
                r.d_s,
                r.residual_f,
                r.residual_g,
                r.clipped_mass,
                if r.converged { 1.0 } else { 0.0 },
                r.grid_size as f64,
            ]
        })
        .collect()
}

fn stability(cfg: &RunConfig) -> Result<Outcome> {
    let dir = cfg.command_dir();
    let GridSetup { grid, bg, omega } = grid_setup(cfg)?;
    let sweep = run_stability_sweep(&family(cfg)?, &vec![1.0; grid.len()], &bg, &omega, &grid, &sweep_setup(cfg))?;
    write_csv(&dir.join("records.csv"), &RECORD_HEADER, &record_rows(&sweep.records))?;
    let results = json!({
        "fit": sweep.fit.as_ref().map(fit_summary),
        "references": sweep.references,
        "reference_table": sweep.reference_table,
        "floor": sweep.floor,
        "meets_floor": sweep.meets_floor,
    });
    write_summary(&dir.join("summary.json"), cfg, &results)?;
    let slope = sweep.fit.as_ref().map_or(f64::NAN, |f| f.slope);
    Ok(Outcome {
        converged: sweep.records.iter().all(|r| r.converged),
        message: format!("fitted exponent {slope:.4} (floor {:.4}); outputs in {}", sweep.floor, dir.display()),
    })
}

fn egz(cfg: &RunConfig) -> Result<Outcome> {
    let dir = cfg.command_dir();
    let GridSetup { grid, bg, omega } = grid_setup(cfg)?;
    let sweep = run_egz_sweep(&family(cfg)?, &vec![1.0; grid.len()], &bg, &omega, &grid, &sweep_setup(cfg), cfg.p)?;
    write_csv(&dir.join("records.csv"), &RECORD_HEADER, &record_rows(&sweep.records))?;
    let results = json!({
        "fit": sweep.fit.as_ref().map(fit_summary),
        "s": sweep.s,
        "p": sweep.p,
        "reference": sweep.reference,
        "reference_table": sweep.reference_table,
        "exceeds_reference": sweep.exceeds_reference,
    });
    write_summary(&dir.join("summary.json"), cfg, &results)?;
    let slope = sweep.fit.as_ref().map_or(f64::NAN, |f| f.slope);
    Ok(Outcome {
        converged: sweep.records.iter().all(|r| r.converged),
        message: format!("fitted exponent {slope:.4} (reference {:.4}); outputs in {}", sweep.reference, dir.display()),
    })
}

#[derive(Serialize)]
struct BallRow {
    radius: f64,
    nodes: usize,
    capacity: f64,
    omega_mass: f64,
    sweeps: usize,
    converged: bool,
}

fn capacity_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let dir = cfg.command_dir();
    let GridSetup { grid, bg, omega } = grid_setup(cfg)?;
    let opts = EnvelopeOptions::default();
    let mut radii = cfg.radii.clone();
    radii.sort_by(f64::total_cmp);
    let family = ball_family(&grid, &radii)?;
    let mut balls = Vec::with_capacity(family.len());
    for (set, radius) in family.iter().zip(&radii) {
        let cap = capacity(set, &bg, &grid, &opts)?;
        balls.push(BallRow {
            radius: *radius,
            nodes: set.iter().filter(|k| **k).count(),
            capacity: cap.value,
            omega_mass: omega.mass_of(set, &grid),
            sweeps: cap.sweeps,
            converged: cap.converged,
        });
    }
    let full = capacity(&vec![true; grid.len()], &bg, &grid, &opts)?;
    let rows: Vec<Vec<f64>> = balls
        .iter()
        .map(|b| vec![b.radius, b.nodes as f64, b.capacity, b.omega_mass, b.sweeps as f64, if b.converged { 1.0 } else { 0.0 }])
        .collect();
    write_csv(&dir.join("capacity.csv"), &["radius", "nodes", "capacity", "omega_mass", "sweeps", "converged"], &rows)?;
    let monotone = balls.windows(2).all(|w| w[1].capacity >= w[0].capacity - opts.tol);
    let f = peaked_density(&grid, cfg.gamma, grid.h(), &omega, bg.mass(&grid))?;
    let domination = match domination_check(&omega, &f, &bg, &grid, &family, DOMINATION_MIN_RATIO, &opts) {
        Ok(d) => json!({ "alpha_hat": d.alpha_hat, "chi_hat": d.chi_hat, "omega_fit": fit_summary(&d.omega_fit), "density_fit": fit_summary(&d.density_fit) }),
        Err(Error::DegenerateFit(reason)) => json!({ "degenerate": reason }),
        Err(e) => return Err(e),
    };
    let results = json!({
        "full": { "capacity": full.value, "total_mass": bg.mass(&grid), "sweeps": full.sweeps },
        "balls": balls,
        "monotone": monotone,
        "domination": domination,
    });
    write_summary(&dir.join("summary.json"), cfg, &results)?;
    let converged = full.converged && balls.iter().all(|b| b.converged);
    Ok(Outcome {
        converged,
        message: format!("cap(full) = {:.10}, {} balls, monotone: {monotone}; outputs in {}", full.value, balls.len(), dir.display()),
    })
}

/// Random PSD matrix `X X^*` with uniform entries in the unit square.
fn random_psd(rng: &mut ChaCha8Rng) -> Herm2 {
    let mut x = [Complex64::new(0.0, 0.0); 4];
    for e in &mut x {
        *e = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    let a = x[0].norm_sqr() + x[1].norm_sqr();
    let d = x[2].norm_sqr() + x[3].norm_sqr();
    let b = x[0] * x[2].conj() + x[1] * x[3].conj();
    Herm2::new(a, d, b)
}

/// Smallest `D(A, B) - sqrt(det A det B)` over `samples` random PSD pairs.
fn mixed_determinant_slack(samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let (a, b) = (random_psd(&mut rng), random_psd(&mut rng));
            mixed_determinant(&a, &b) - (a.det().max(0.0) * b.det().max(0.0)).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

const PAIR_COUNT: usize = 5;
const PAIR_THETA: f64 = 0.5;

fn properties(cfg: &RunConfig) -> Result<Outcome> {
    let dir = cfg.command_dir();
    let GridSetup { grid, bg, omega } = grid_setup(cfg)?;
    let slack = mixed_determinant_slack(100_000, cfg.seed);
    let checks = pair_checks(&grid, &bg, &omega, PAIR_COUNT, PAIR_THETA, cfg.seed, &solver_options(cfg), &EnvelopeOptions::default())?;
    let rows: Vec<Vec<f64>> = checks
        .pairs
        .iter()
        .map(|p| {
            vec![
                p.i as f64,
                p.j as f64,
                p.comparison.lhs,
                p.comparison.rhs,
                p.comparison.violation,
                p.comparison.total_mass,
                p.sublevel.lhs,
                p.sublevel.rhs,
                p.sublevel.violation,
                p.sublevel.c,
                p.sublevel.s,
            ]
        })
        .collect();
    write_csv(
        &dir.join("pairs.csv"),
        &["i", "j", "comparison_lhs", "comparison_rhs", "comparison_violation", "total_mass", "capacity", "sublevel_rhs", "sublevel_violation", "c", "s"],
        &rows,
    )?;
    let results = json!({
        "mixed_determinant": { "samples": 100_000, "min_slack": slack, "holds": slack >= -1e-12 },
        "comparison_worst": checks.comparison_worst,
        "sublevel_worst": checks.sublevel_worst,
        "solves": checks.solves,
        "projection_sweeps": checks.projection_sweeps,
    });
    write_summary(&dir.join("properties.json"), cfg, &results)?;
    Ok(Outcome::ok(format!(
        "mixed-determinant slack {slack:.3e}; worst comparison {:.3e}, worst sublevel {:.3e}; outputs in {}",
        checks.comparison_worst,
        checks.sublevel_worst,
        dir.display()
    )))
}
