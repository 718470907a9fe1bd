//! C ABI over `ma-lab`.
//!
//! Every function returns a [`MaStatus`]; results go through out-pointers.
//! On failure a message is available from [`ma_last_error_message`] until
//! the next call on the same thread. Handles are opaque and must be freed
//! with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use ma_lab::exponents::{beta_limit, beta_sequence, kappa, kappa_inverse, DeltaSchedule, GrowthFunction, KappaParams, RecurrenceState};
use ma_lab::grid::solver::{solve, SolverOptions};
use ma_lab::grid::{Grid, HermitianField, MeasureField};
use ma_lab::radial::{l1_ma_distance, sup_distance, RadialProfile, TranslatedProfile};
use ma_lab::Error;
use num_complex::Complex64;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotConverged = 3,
    BufferTooSmall = 4,
    Internal = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> MaStatus {
    match err {
        Error::NotConverged { .. } | Error::Quadrature { .. } | Error::Bracket { .. } | Error::InsufficientRecords { .. } | Error::DegenerateFit(_) => MaStatus::NotConverged,
        Error::Io(_) | Error::Json(_) | Error::Output { .. } => MaStatus::Internal,
        _ => MaStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), MaStatus>) -> MaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MaStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            MaStatus::Internal
        }
    }
}

fn lift<T>(r: ma_lab::Result<T>) -> Result<T, MaStatus> {
    r.map_err(|e| {
        set_error(&e.to_string());
        status_of(&e)
    })
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), MaStatus> {
    if p.is_null() {
        set_error(&format!("{name} is null"));
        Err(MaStatus::NullPointer)
    } else {
        Ok(())
    }
}

/// Message for the last failed call on this thread; empty if none.
#[no_mangle]
pub extern "C" fn ma_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ma_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Limit of the exponent recurrence in dimension `n` with slack `eps`.
///
/// # Safety
/// `out` must be valid for one `double` write.
#[no_mangle]
pub unsafe extern "C" fn ma_beta_limit(n: u32, eps: f64, out: *mut f64) -> MaStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = lift(beta_limit(n, eps))?;
        Ok(())
    })
}

/// Writes `beta_0..=beta_{k_max}` to `out`. `delta0 > 0` selects the
/// geometric schedule `delta0 2^{-k}`, `delta0 = 0` the zero schedule.
///
/// # Safety
/// `out` must be valid for `len` `double` writes.
#[no_mangle]
pub unsafe extern "C" fn ma_beta_sequence(n: u32, eps: f64, delta0: f64, k_max: usize, out: *mut f64, len: usize) -> MaStatus {
    guard(|| {
        non_null(out, "out")?;
        if len < k_max + 1 {
            set_error(&format!("buffer holds {len} values, need {}", k_max + 1));
            return Err(MaStatus::BufferTooSmall);
        }
        let schedule = if delta0 == 0.0 { DeltaSchedule::Zero } else { DeltaSchedule::Geometric { delta0 } };
        let seq = lift(RecurrenceState::new(n, eps, schedule).and_then(|s| beta_sequence(s, k_max)))?;
        std::slice::from_raw_parts_mut(out, k_max + 1).copy_from_slice(&seq.state.betas);
        Ok(())
    })
}

fn kappa_params(n: u32, m: f64) -> Result<KappaParams, MaStatus> {
    lift(GrowthFunction::monomial(m).and_then(|g| KappaParams::new(n, 1.0, 1.0, g)))
}

/// `kappa(r)` for the growth `y^m` with unit constants, by quadrature.
///
/// # Safety
/// `out` must be valid for one `double` write.
#[no_mangle]
pub unsafe extern "C" fn ma_kappa(n: u32, m: f64, r: f64, out: *mut f64) -> MaStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = lift(kappa(r, &kappa_params(n, m)?))?;
        Ok(())
    })
}

/// Inverse of [`ma_kappa`].
///
/// # Safety
/// `out` must be valid for one `double` write.
#[no_mangle]
pub unsafe extern "C" fn ma_kappa_inverse(n: u32, m: f64, t: f64, out: *mut f64) -> MaStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = lift(kappa_inverse(t, &kappa_params(n, m)?))?;
        Ok(())
    })
}

/// Opaque singular radial profile.
pub struct MaProfile(RadialProfile);

/// Builds and validates a profile. On success `*out` owns a handle.
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn ma_profile_new(b: f64, d: f64, alpha: f64, n: u32, smoothing_width: f64, out: *mut *mut MaProfile) -> MaStatus {
    guard(|| {
        non_null(out, "out")?;
        let p = lift(RadialProfile::new(b, d, alpha, n, smoothing_width))?;
        lift(p.require_valid())?;
        *out = Box::into_raw(Box::new(MaProfile(p)));
        Ok(())
    })
}

/// # Safety
/// `p` must come from [`ma_profile_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ma_profile_free(p: *mut MaProfile) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn translate(p: *const MaProfile, h_norm: f64) -> Result<TranslatedProfile, MaStatus> {
    non_null(p, "profile")?;
    let base = unsafe { &(*p).0 };
    let mut h = vec![Complex64::new(0.0, 0.0); base.n as usize];
    h[0] = Complex64::new(h_norm, 0.0);
    lift(TranslatedProfile::new(*base, h))
}

/// Sup distance between the profile and its translate by `h_norm e_1`.
///
/// # Safety
/// `p` must be a live handle and `out` valid for one `double` write.
#[no_mangle]
pub unsafe extern "C" fn ma_profile_sup_distance(p: *const MaProfile, h_norm: f64, out: *mut f64) -> MaStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = sup_distance(&translate(p, h_norm)?).value;
        Ok(())
    })
}

/// L1 distance between the Monge-Ampere densities of the profile and its
/// translate by `h_norm e_1`, with the quadrature error estimate.
///
/// # Safety
/// `p` must be a live handle; `out` and `error_estimate` valid for one
/// `double` write each (`error_estimate` may be null).
#[no_mangle]
pub unsafe extern "C" fn ma_profile_l1_distance(p: *const MaProfile, h_norm: f64, out: *mut f64, error_estimate: *mut f64) -> MaStatus {
    guard(|| {
        non_null(out, "out")?;
        let d = lift(l1_ma_distance(&translate(p, h_norm)?))?;
        *out = d.total;
        if !error_estimate.is_null() {
            *error_estimate = d.error_estimate;
        }
        Ok(())
    })
}

/// Opaque torus grid with its background form and uniform reference measure.
pub struct MaGrid {
    grid: Grid,
    background: HermitianField,
    omega: MeasureField,
}

/// Solver diagnostics returned by [`ma_grid_solve`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MaSolveDiagnostics {
    pub sweeps: usize,
    pub residual: f64,
    pub solvability_constant: f64,
    pub sup_norm: f64,
    pub converged: bool,
}

/// Grid with `size^4` nodes. `cosine_c < 0` selects the flat background,
/// `0 <= cosine_c <= 1` the cosine family.
///
/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn ma_grid_new(size: usize, cosine_c: f64, out: *mut *mut MaGrid) -> MaStatus {
    guard(|| {
        non_null(out, "out")?;
        let grid = lift(Grid::new(size))?;
        let background = if cosine_c < 0.0 { HermitianField::flat(&grid) } else { lift(HermitianField::cosine_degenerate(&grid, cosine_c))? };
        let omega = MeasureField::uniform(&grid);
        *out = Box::into_raw(Box::new(MaGrid { grid, background, omega }));
        Ok(())
    })
}

/// # Safety
/// `g` must come from [`ma_grid_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ma_grid_free(g: *mut MaGrid) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Number of nodes, 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ma_grid_len(g: *const MaGrid) -> usize {
    g.as_ref().map_or(0, |g| g.grid.len())
}

/// Solves `det(G + Hu) = c f` with `f` of total mass equal to the background
/// volume. The potential is written to `u` even when the solver stops
/// without converging, in which case `MA_STATUS_NOT_CONVERGED` is returned.
///
/// # Safety
/// `g` must be a live handle, `f` and `u` valid for `len` doubles, and
/// `diagnostics` null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ma_grid_solve(g: *const MaGrid, f: *const f64, u: *mut f64, len: usize, tol: f64, max_sweeps: usize, diagnostics: *mut MaSolveDiagnostics) -> MaStatus {
    guard(|| {
        non_null(g, "grid")?;
        non_null(f, "f")?;
        non_null(u, "u")?;
        let g = &*g;
        if len != g.grid.len() {
            set_error(&format!("buffers hold {len} values, grid has {}", g.grid.len()));
            return Err(MaStatus::BufferTooSmall);
        }
        let opts = SolverOptions {
            tol,
            max_sweeps,
            ..SolverOptions::default()
        };
        let density = std::slice::from_raw_parts(f, len);
        let sol = lift(solve(density, &g.background, &g.omega, &g.grid, None, &opts))?;
        std::slice::from_raw_parts_mut(u, len).copy_from_slice(&sol.u.values);
        let d = &sol.diagnostics;
        if !diagnostics.is_null() {
            *diagnostics = MaSolveDiagnostics {
                sweeps: d.sweeps,
                residual: d.residual,
                solvability_constant: d.solvability_constant,
                sup_norm: d.sup_norm,
                converged: d.converged,
            };
        }
        if d.converged {
            Ok(())
        } else {
            set_error(&format!("not converged after {} sweeps (residual {:.3e})", d.sweeps, d.residual));
            Err(MaStatus::NotConverged)
        }
    })
}
