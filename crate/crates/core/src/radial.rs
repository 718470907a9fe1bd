//! The radial sharpness construction: a potential that behaves like
//! `B |z|^{2 alpha}` near the origin and like `log |z| + D` at infinity,
//! its translates, and the two distances whose power laws force the
//! stability exponent to be at most `1/n`.
//!
//! Radial functions are handled through their profile `v(t)` in
//! `t = ln |z|`. For such a function the complex Hessian has eigenvalues
//! `v'/(2|z|^2)` (multiplicity `n - 1`) and `v''/(4|z|^2)`, so it is
//! plurisubharmonic iff `v` is convex and nondecreasing, and its
//! Monge-Ampere density is `v'^{n-1} v'' / (2^{n+1} |z|^{2n})`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fit::{fit_power_law, ExponentFit};
use crate::quadrature::{integrate_with_breaks, Tolerance};

pub type Point = [Complex64];

pub fn norm(z: &Point) -> f64 {
    z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Area of the unit sphere `S^k` in `R^{k+1}`.
pub fn sphere_area(k: usize) -> f64 {
    use std::f64::consts::PI;
    match k {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (k as f64 - 1.0) * sphere_area(k - 2),
    }
}

/// `\int_{|z| <= R} |z|^{2n(alpha-1)} d lambda` over `C^n`.
pub fn core_ball_integral(n: u32, alpha: f64, radius: f64) -> f64 {
    let q = 2.0 * n as f64 * alpha;
    sphere_area(2 * n as usize - 1) * radius.powf(q) / q
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialProfile {
    pub b: f64,
    pub d: f64,
    pub alpha: f64,
    pub n: u32,
    pub smoothing_width: f64,
    /// `c(n, alpha)` in `det(u_{j\bar k}) = c B^n |z|^{2n(alpha-1)}`,
    /// calibrated by finite differences at construction.
    pub ma_constant: f64,
}

/// Which constraint of a profile failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileViolation {
    pub constraint: &'static str,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileValidation {
    pub valid: bool,
    pub violations: Vec<ProfileViolation>,
}

pub const DEFAULT_SMOOTHING_WIDTH: f64 = 0.05;

impl RadialProfile {
    /// Builds a profile and calibrates its Monge-Ampere constant. Only
    /// finiteness and `n >= 2` are enforced here; see [`Self::validate`].
    pub fn new(b: f64, d: f64, alpha: f64, n: u32, smoothing_width: f64) -> Result<Self> {
        crate::exponents::check_dimension(n)?;
        for (name, x) in [("B", b), ("D", d), ("alpha", alpha), ("smoothing_width", smoothing_width)] {
            if !x.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        if !(smoothing_width > 0.0) {
            return Err(invalid("smoothing_width", "must be positive"));
        }
        if !(alpha > 0.0) {
            return Err(invalid("alpha", "must be positive"));
        }
        let mut p = Self {
            b,
            d,
            alpha,
            n,
            smoothing_width,
            ma_constant: f64::NAN,
        };
        p.ma_constant = calibrate_ma_constant(n, alpha);
        Ok(p)
    }

    pub fn validate(&self) -> ProfileValidation {
        let mut violations = Vec::new();
        let mut fail = |constraint: &'static str, detail: String| violations.push(ProfileViolation { constraint, detail });
        if !(self.b > 0.0 && self.d > 0.0) {
            fail("B > 0, D > 0", format!("B = {}, D = {}", self.b, self.d));
        }
        if !(self.d < self.b) {
            fail("D < B", format!("D = {} >= B = {}", self.d, self.b));
        }
        let at_two = self.b * 2f64.powf(2.0 * self.alpha);
        let log_two = std::f64::consts::LN_2 + self.d;
        if !(at_two < log_two) {
            fail("B 2^(2 alpha) < ln 2 + D", format!("{at_two} >= {log_two}"));
        }
        let cap = 1.0 / (2.0 * self.n as f64);
        if !(self.alpha > 0.0 && self.alpha < cap) {
            fail("0 < alpha < 1/(2n)", format!("alpha = {} not in (0, {cap})", self.alpha));
        }
        // The smoothing collar must leave both branches exact at its ends.
        let w = self.smoothing_width;
        if !(self.b - self.d >= w) {
            fail("B - D >= smoothing width", format!("{} < {w}", self.b - self.d));
        }
        let r = 2.0 + w;
        let gap = r.ln() + self.d - self.b * r.powf(2.0 * self.alpha);
        if !(gap >= w) {
            fail("log branch leads by the smoothing width at 2 + width", format!("{gap} < {w}"));
        }
        if !(2.0 * self.alpha * self.b * r.powf(2.0 * self.alpha) < 1.0) {
            fail("log branch still gaining at 2 + width", "2 alpha B (2+w)^(2 alpha) >= 1".into());
        }
        ProfileValidation {
            valid: violations.is_empty(),
            violations,
        }
    }

    pub fn require_valid(&self) -> Result<()> {
        let v = self.validate();
        match v.violations.first() {
            None => Ok(()),
            Some(first) => Err(invalid("profile", format!("{}: {}", first.constraint, first.detail))),
        }
    }

    fn power_branch(&self, r: f64) -> f64 {
        self.b * r.powf(2.0 * self.alpha)
    }

    fn log_branch(&self, r: f64) -> f64 {
        r.ln() + self.d
    }

    /// Outer edge of the smoothing collar.
    pub fn collar_end(&self) -> f64 {
        2.0 + self.smoothing_width
    }

    /// `(v, v', v'', v''')` of the smoothed profile in `t = ln r`.
    fn jet(&self, r: f64) -> [f64; 4] {
        let a = self.power_branch(r);
        let two_a = 2.0 * self.alpha;
        let aj = [a, two_a * a, two_a * two_a * a, two_a.powi(3) * a];
        if r <= 1.0 {
            return aj;
        }
        let bj = [self.log_branch(r), 1.0, 0.0, 0.0];
        if r >= self.collar_end() {
            return bj;
        }
        let pj = regularized_abs(aj[0] - bj[0], self.smoothing_width);
        let d1 = aj[1] - bj[1];
        let d2 = aj[2] - bj[2];
        let d3 = aj[3] - bj[3];
        [
            0.5 * (aj[0] + bj[0] + pj[0]),
            0.5 * (aj[1] + bj[1] + pj[1] * d1),
            0.5 * (aj[2] + bj[2] + pj[2] * d1 * d1 + pj[1] * d2),
            0.5 * (aj[3] + bj[3] + pj[3] * d1.powi(3) + 3.0 * pj[2] * d1 * d2 + pj[1] * d3),
        ]
    }

    fn normalization(&self) -> f64 {
        self.ma_constant / self.alpha.powi(self.n as i32 + 1)
    }

    /// Monge-Ampere density of the smoothed potential at radius `r`.
    pub fn ma_density_radial(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return f64::INFINITY;
        }
        if r >= self.collar_end() {
            return 0.0;
        }
        let n = self.n as i32;
        let [_, v1, v2, _] = self.jet(r);
        self.normalization() * v1.powi(n - 1) * v2 / (2f64.powi(n + 1) * r.powi(2 * n))
    }

    /// Radial derivative of [`Self::ma_density_radial`].
    pub fn ma_density_radial_derivative(&self, r: f64) -> f64 {
        if r >= self.collar_end() {
            return 0.0;
        }
        let n = self.n as i32;
        let [_, v1, v2, v3] = self.jet(r);
        let nf = n as f64;
        let dt = (nf - 1.0) * v1.powi(n - 2) * v2 * v2 + v1.powi(n - 1) * v3 - 2.0 * nf * v1.powi(n - 1) * v2;
        self.normalization() * dt / (2f64.powi(n + 1) * r.powi(2 * n)) / r
    }

    pub fn rho_hat_radial(&self, r: f64) -> f64 {
        if r <= 1.0 {
            self.power_branch(r)
        } else if r <= 2.0 {
            self.power_branch(r).max(self.log_branch(r))
        } else {
            self.log_branch(r)
        }
    }

    pub fn rho_smooth_radial(&self, r: f64) -> f64 {
        if r <= 0.0 {
            0.0
        } else {
            self.jet(r)[0]
        }
    }

    /// First and second `ln r` derivatives of the smoothed profile.
    pub fn log_derivatives(&self, r: f64) -> (f64, f64) {
        let j = self.jet(r);
        (j[1], j[2])
    }
}

/// `p(x)` and its first three derivatives: a C^2 convex even function equal
/// to `|x|` for `|x| >= w`, so that `(a + b + p(a - b)) / 2` is a regularized
/// maximum that is convex and nondecreasing in both arguments.
fn regularized_abs(x: f64, w: f64) -> [f64; 4] {
    if x >= w {
        return [x, 1.0, 0.0, 0.0];
    }
    if x <= -w {
        return [-x, -1.0, 0.0, 0.0];
    }
    let w3 = w * w * w;
    [
        3.0 * w / 8.0 + 3.0 * x * x / (4.0 * w) - x.powi(4) / (8.0 * w3),
        1.5 * x / w - 0.5 * x.powi(3) / w3,
        1.5 / w - 1.5 * x * x / w3,
        -3.0 * x / w3,
    ]
}

/// Determinant of a square complex matrix (row-major) by partial pivoting.
fn complex_det(mut m: Vec<Complex64>, k: usize) -> Complex64 {
    let mut det = Complex64::new(1.0, 0.0);
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&a, &b| m[a * k + col].norm().total_cmp(&m[b * k + col].norm()))
            .expect("non-empty");
        if m[pivot * k + col].norm() == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if pivot != col {
            for j in 0..k {
                m.swap(pivot * k + j, col * k + j);
            }
            det = -det;
        }
        let p = m[col * k + col];
        det *= p;
        for row in col + 1..k {
            let factor = m[row * k + col] / p;
            for j in col..k {
                let v = m[col * k + j];
                m[row * k + j] -= factor * v;
            }
        }
    }
    det
}

/// Complex Hessian `u_{j\bar k}` of a function on `C^n` by central
/// differences of step `step` in the underlying real coordinates.
pub fn fd_complex_hessian(u: &dyn Fn(&Point) -> f64, z: &Point, step: f64) -> Vec<Complex64> {
    let n = z.len();
    let dim = 2 * n;
    let shifted = |moves: &[(usize, f64)]| {
        let mut w = z.to_vec();
        for &(axis, s) in moves {
            let j = axis / 2;
            if axis % 2 == 0 {
                w[j].re += s;
            } else {
                w[j].im += s;
            }
        }
        u(&w)
    };
    let u0 = u(z);
    let mut real = vec![0.0; dim * dim];
    for a in 0..dim {
        real[a * dim + a] = (shifted(&[(a, step)]) - 2.0 * u0 + shifted(&[(a, -step)])) / (step * step);
        for b in a + 1..dim {
            let v = (shifted(&[(a, step), (b, step)]) - shifted(&[(a, step), (b, -step)])
                - shifted(&[(a, -step), (b, step)])
                + shifted(&[(a, -step), (b, -step)]))
                / (4.0 * step * step);
            real[a * dim + b] = v;
            real[b * dim + a] = v;
        }
    }
    let r = |a: usize, b: usize| real[a * dim + b];
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for j in 0..n {
        for k in 0..n {
            let (xj, yj, xk, yk) = (2 * j, 2 * j + 1, 2 * k, 2 * k + 1);
            out[j * n + k] = 0.25 * Complex64::new(r(xj, xk) + r(yj, yk), r(xj, yk) - r(yj, xk));
        }
    }
    out
}

/// Finite-difference Monge-Ampere density `det(u_{j\bar k})`.
pub fn fd_ma_density(u: &dyn Fn(&Point) -> f64, z: &Point, step: f64) -> f64 {
    complex_det(fd_complex_hessian(u, z, step), z.len()).re
}

/// Calibrates `c(n, alpha)` from `|z|^{2 alpha}` at a generic point of norm
/// 1/2, with two levels of Richardson extrapolation in the step size.
pub fn calibrate_ma_constant(n: u32, alpha: f64) -> f64 {
    let k = n as usize;
    let raw: Vec<Complex64> = (0..k)
        .map(|j| Complex64::from_polar(1.0 + 0.3 * j as f64, 0.7 + 1.3 * j as f64))
        .collect();
    let scale = 0.5 / norm(&raw);
    let z: Vec<Complex64> = raw.iter().map(|c| c * scale).collect();
    let u = |w: &Point| norm(w).powf(2.0 * alpha);
    let d: Vec<f64> = [0.01, 0.005, 0.0025].iter().map(|s| fd_ma_density(&u, &z, *s)).collect();
    let r1 = (4.0 * d[1] - d[0]) / 3.0;
    let r2 = (4.0 * d[2] - d[1]) / 3.0;
    let extrapolated = (16.0 * r2 - r1) / 15.0;
    extrapolated / 0.5f64.powf(2.0 * n as f64 * (alpha - 1.0))
}

pub fn validate_profile(p: &RadialProfile) -> ProfileValidation {
    p.validate()
}

pub fn rho_hat(z: &Point, p: &RadialProfile) -> f64 {
    p.rho_hat_radial(norm(z))
}

pub fn rho_smooth(z: &Point, p: &RadialProfile) -> f64 {
    p.rho_smooth_radial(norm(z))
}

/// `rho(z + h) - ln(1 + |z|^2) / 2`: the translate written in the affine
/// chart of projective space.
pub fn projective_lift(z: &Point, p: &RadialProfile, h: &Point) -> f64 {
    let shifted: Vec<Complex64> = z.iter().zip(h).map(|(a, b)| a + b).collect();
    rho_smooth(&shifted, p) - 0.5 * (1.0 + norm(z).powi(2)).ln()
}

/// `c(n, alpha) B^n |z|^{2n(alpha-1)}` on the core `0 < |z| <= 3/4`.
pub fn ma_density(z: &Point, p: &RadialProfile) -> Result<f64> {
    let r = norm(z);
    if r == 0.0 {
        return Err(invalid("z", "the density is singular at the origin"));
    }
    if r > 0.75 {
        return Err(invalid("z", format!("|z| = {r} is outside the core |z| <= 3/4")));
    }
    let n = p.n as f64;
    Ok(p.ma_constant * p.b.powf(n) * r.powf(2.0 * n * (p.alpha - 1.0)))
}

/// A profile with a translation vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslatedProfile {
    pub base: RadialProfile,
    pub h: Vec<Complex64>,
    pub h_norm: f64,
}

impl TranslatedProfile {
    pub fn new(base: RadialProfile, h: Vec<Complex64>) -> Result<Self> {
        if h.len() != base.n as usize {
            return Err(invalid("h", format!("expected {} components, got {}", base.n, h.len())));
        }
        let h_norm = norm(&h);
        if !(h_norm < 0.25) {
            return Err(invalid("h", format!("|h| = {h_norm} must be below 1/4")));
        }
        Ok(Self { base, h, h_norm })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupDistance {
    pub value: f64,
    /// `B |h|^{2 alpha}`, attained at the origin.
    pub origin_witness: f64,
    pub argmax_norm: f64,
}

fn difference_at(p: &RadialProfile, z: &[Complex64], h: &[Complex64]) -> f64 {
    let shifted: Vec<Complex64> = z.iter().zip(h).map(|(a, b)| a + b).collect();
    (p.rho_smooth_radial(norm(&shifted)) - p.rho_smooth_radial(norm(z))).abs()
}

/// Compass search in `R^{2n}` maximizing `|rho_h - rho|`.
fn refine(p: &RadialProfile, h: &[Complex64], start: Vec<Complex64>, step0: f64) -> (f64, Vec<Complex64>) {
    let mut best = start;
    let mut best_val = difference_at(p, &best, h);
    let mut step = step0;
    while step > 1e-12 * step0.max(1e-300) {
        let mut improved = false;
        for axis in 0..2 * best.len() {
            for sign in [1.0, -1.0] {
                let mut trial = best.clone();
                let s = sign * step;
                if axis % 2 == 0 {
                    trial[axis / 2].re += s;
                } else {
                    trial[axis / 2].im += s;
                }
                let v = difference_at(p, &trial, h);
                if v > best_val {
                    best_val = v;
                    best = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (best_val, best)
}

/// `sup_z |(rho_h - rho)(z)|` over the chart (the Fubini-Study correction
/// cancels in the difference). Combines a dense radial-angular sample,
/// golden-section search on the line through `0` and `-h`, and seeded
/// random restarts, each refined by compass search.
pub fn sup_distance(tp: &TranslatedProfile) -> SupDistance {
    let p = &tp.base;
    let h = &tp.h;
    let hn = tp.h_norm;
    let origin_witness = p.b * hn.powf(2.0 * p.alpha);
    if hn == 0.0 {
        return SupDistance {
            value: 0.0,
            origin_witness,
            argmax_norm: 0.0,
        };
    }
    let unit: Vec<Complex64> = h.iter().map(|c| c / hn).collect();
    let perp: Vec<Complex64> = unit.iter().map(|c| c * Complex64::i()).collect();
    let along = |s: f64, t: f64| -> Vec<Complex64> { unit.iter().zip(&perp).map(|(u, q)| u * s + q * t).collect() };

    let mut candidates: Vec<(f64, Vec<Complex64>)> = Vec::new();
    let zero = vec![Complex64::new(0.0, 0.0); h.len()];
    candidates.push((difference_at(p, &zero, h), zero));

    for i in 0..160 {
        let r = hn * 1e-4 * (4.0 / (hn * 1e-4)).powf(i as f64 / 159.0);
        for j in 0..64 {
            let th = std::f64::consts::PI * j as f64 / 63.0;
            let z = along(r * th.cos(), r * th.sin());
            candidates.push((difference_at(p, &z, h), z));
        }
    }

    // Golden-section on the segment tau * unit, tau in [-2|h|, |h|].
    let line = |tau: f64| difference_at(p, &along(tau, 0.0), h);
    let (lo, hi) = (-2.0 * hn, hn);
    let coarse = (0..=200)
        .map(|i| lo + (hi - lo) * i as f64 / 200.0)
        .max_by(|a, b| line(*a).total_cmp(&line(*b)))
        .expect("non-empty");
    let dx = (hi - lo) / 200.0;
    let (mut a, mut b) = (coarse - dx, coarse + dx);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if line(c) >= line(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let tau = 0.5 * (a + b);
    candidates.push((line(tau), along(tau, 0.0)));

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..16 {
        let z: Vec<Complex64> = (0..h.len())
            .map(|_| Complex64::new(rng.gen_range(-3.0..3.0) * hn, rng.gen_range(-3.0..3.0) * hn))
            .collect();
        candidates.push((difference_at(p, &z, h), z));
    }

    candidates.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for (_, z) in candidates.into_iter().take(6) {
        let refined = refine(p, h, z, 0.25 * hn);
        if refined.0 > best.0 {
            best = refined;
        }
    }
    SupDistance {
        value: best.0.max(origin_witness),
        origin_witness,
        argmax_norm: norm(&best.1),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct L1Distance {
    pub total: f64,
    /// Contributions of `|z| <= 2|h|`, `2|h| < |z| <= 1/2` and `|z| > 1/2`.
    pub pieces: [f64; 3],
    pub error_estimate: f64,
    /// `2 \int (MA(rho) - MA(rho_h))_+`, equal to `total` since both
    /// measures carry the same mass.
    pub global_check: f64,
    /// `2 c B^n \int_{|z| <= 3|h|} |z|^{2n(alpha-1)}`, bounding the first piece.
    pub inner_majorant: f64,
    /// `|h| \int_{|z| > 1/2 - |h|} |grad MA(rho)|`, bounding the last piece.
    pub outer_gradient_bound: f64,
    pub converged: bool,
}

const INNER_TOL: Tolerance = Tolerance {
    abs: 0.0,
    rel: 1e-9,
    max_intervals: 400,
};

struct Integrator<'a> {
    p: &'a RadialProfile,
    hn: f64,
    converged: bool,
    error: f64,
}

impl Integrator<'_> {
    /// Outer radial integral of `g(r) r^{2n-1}` over `[lo, hi]`. When
    /// `lo == 0` the first segment is mapped through `r = b u^k` with
    /// `k = 1/(2 n alpha)`, which removes the `r^{2n alpha - 1}` singularity.
    fn radial(&mut self, g: &mut dyn FnMut(f64) -> f64, lo: f64, hi: f64, breaks: &[f64]) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let n2 = 2 * self.p.n as i32 - 1;
        let mut pts: Vec<f64> = breaks.iter().copied().filter(|x| *x > lo && *x < hi).collect();
        pts.push(lo);
        pts.push(hi);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let tol = Tolerance::new(0.0, 1e-7).with_max_intervals(2000);
        let mut total = 0.0;
        let mut start = 0;
        if lo == 0.0 {
            let b = pts[1];
            let k = 1.0 / (2.0 * self.p.n as f64 * self.p.alpha);
            let q = integrate_with_breaks(
                |u: f64| {
                    if u <= 0.0 {
                        return 0.0;
                    }
                    let r = b * u.powf(k);
                    g(r) * r.powi(n2) * b * k * u.powf(k - 1.0)
                },
                &[0.0, 0.5, 1.0],
                tol,
            );
            self.record(q.converged, q.error);
            total += q.value;
            start = 1;
        }
        let q = integrate_with_breaks(|r: f64| g(r) * r.powi(n2), &pts[start..], tol);
        self.record(q.converged, q.error);
        total + q.value
    }

    fn record(&mut self, converged: bool, error: f64) {
        self.converged &= converged;
        self.error += error;
    }

    fn breaks(&self) -> Vec<f64> {
        let h = self.hn;
        let base = [0.5 * h, h, 2.0 * h, 3.0 * h, 0.5, 0.75, 1.0, 2.0, self.p.collar_end()];
        let mut out = Vec::new();
        for x in base {
            out.extend([x, x - h, x + h]);
        }
        out.retain(|x| *x > 0.0);
        out
    }

    /// `\int_{lo < |z| <= hi} (MA(rho)(z) - MA(rho)(z + h))_+`, polar about 0.
    fn positive_part(&mut self, lo: f64, hi: f64) -> f64 {
        let p = *self.p;
        let hn = self.hn;
        let breaks = self.breaks();
        let mut inner_conv = true;
        let mut g = |r: f64| {
            let a = p.ma_density_radial(r);
            if a == 0.0 {
                return 0.0;
            }
            let mut pts = vec![0.0, std::f64::consts::PI];
            let c = -hn / (2.0 * r);
            if c > -1.0 {
                pts.push(c.acos());
            }
            let q = integrate_with_breaks(
                |th: f64| {
                    let d2 = r * r + hn * hn + 2.0 * r * hn * th.cos();
                    let bval = p.ma_density_radial(d2.max(0.0).sqrt());
                    (a - bval).max(0.0) * th.sin().powi(2 * p.n as i32 - 2)
                },
                &pts,
                INNER_TOL,
            );
            inner_conv &= q.converged;
            q.value
        };
        let v = self.radial(&mut g, lo, hi.min(self.p.collar_end()), &breaks);
        self.converged &= inner_conv;
        v * sphere_area(2 * self.p.n as usize - 2)
    }

    /// `\int_{lo < |z| <= hi} (MA(rho)(z + h) - MA(rho)(z))_+`, polar about `-h`.
    fn negative_part(&mut self, lo: f64, hi: f64) -> f64 {
        let p = *self.p;
        let hn = self.hn;
        let mut breaks = self.breaks();
        for x in [lo, hi] {
            if x.is_finite() {
                breaks.extend([x, (x - hn).abs(), x + hn]);
            }
        }
        let mut inner_conv = true;
        let mut g = |rho: f64| {
            let bval = p.ma_density_radial(rho);
            if bval == 0.0 {
                return 0.0;
            }
            // |z|^2 = rho^2 + hn^2 - 2 rho hn cos(theta), increasing in theta.
            let denom = 2.0 * rho * hn;
            let c_hi = (rho * rho + hn * hn - lo * lo) / denom;
            let c_lo = if hi.is_finite() {
                (rho * rho + hn * hn - hi * hi) / denom
            } else {
                -2.0
            };
            if c_hi <= -1.0 || c_lo >= 1.0 {
                return 0.0;
            }
            let th_a = c_hi.min(1.0).acos();
            let th_b = c_lo.max(-1.0).acos();
            let mut pts = vec![th_a, th_b];
            let kink = hn / (2.0 * rho);
            if kink < 1.0 {
                let t = kink.acos();
                if t > th_a && t < th_b {
                    pts.push(t);
                }
            }
            let q = integrate_with_breaks(
                |th: f64| {
                    let z2 = rho * rho + hn * hn - 2.0 * rho * hn * th.cos();
                    let aval = p.ma_density_radial(z2.max(0.0).sqrt());
                    (bval - aval).max(0.0) * th.sin().powi(2 * p.n as i32 - 2)
                },
                &pts,
                INNER_TOL,
            );
            inner_conv &= q.converged;
            q.value
        };
        let rho_lo = (lo - hn).max(0.0);
        let rho_hi = (hi + hn).min(self.p.collar_end());
        let v = self.radial(&mut g, rho_lo, rho_hi, &breaks);
        self.converged &= inner_conv;
        v * sphere_area(2 * self.p.n as usize - 2)
    }
}

/// `\int |MA(rho_bar) - MA(rho_bar_h)|` over projective space, computed in
/// the affine chart as the sum of three radial shells. Each shell splits
/// into the parts where either density dominates; each part is integrated
/// in polar coordinates centred on its own singularity, so both integrands
/// stay bounded. Depends on `h` only through `|h|`.
pub fn l1_ma_distance(tp: &TranslatedProfile) -> Result<L1Distance> {
    let p = &tp.base;
    let hn = tp.h_norm;
    let nf = p.n as f64;
    let inner_majorant = 2.0 * p.ma_constant * p.b.powf(nf) * core_ball_integral(p.n, p.alpha, 3.0 * hn);
    let mut integ = Integrator {
        p,
        hn,
        converged: true,
        error: 0.0,
    };
    let outer_lo = 0.5 - hn;
    let grad = integrate_with_breaks(
        |r: f64| p.ma_density_radial_derivative(r).abs() * r.powi(2 * p.n as i32 - 1),
        &[outer_lo, 0.75, 1.0, 2.0, p.collar_end()],
        Tolerance::new(0.0, 1e-8),
    );
    let outer_gradient_bound = hn * sphere_area(2 * p.n as usize - 1) * grad.value;
    if hn == 0.0 {
        return Ok(L1Distance {
            total: 0.0,
            pieces: [0.0; 3],
            error_estimate: 0.0,
            global_check: 0.0,
            inner_majorant,
            outer_gradient_bound,
            converged: true,
        });
    }
    let shells = [(0.0, 2.0 * hn), (2.0 * hn, 0.5), (0.5, f64::INFINITY)];
    let mut pieces = [0.0; 3];
    for (slot, (lo, hi)) in pieces.iter_mut().zip(shells) {
        *slot = integ.positive_part(lo, hi) + integ.negative_part(lo, hi);
    }
    let global_check = 2.0 * integ.positive_part(0.0, f64::INFINITY);
    let total: f64 = pieces.iter().sum();
    if !integ.converged {
        return Err(Error::Quadrature {
            value: total,
            error: integ.error,
        });
    }
    Ok(L1Distance {
        total,
        pieces,
        error_estimate: integ.error + (total - global_check).abs(),
        global_check,
        inner_majorant,
        outer_gradient_bound,
        converged: true,
    })
}

/// Per-`h` row of a sharpness run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharpnessRow {
    pub h_norm: f64,
    pub sup_distance: f64,
    pub l1_distance: f64,
    pub l1_error_estimate: f64,
    pub pieces: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharpnessReport {
    pub n: u32,
    pub rows: Vec<SharpnessRow>,
    pub sup_fit: ExponentFit,
    pub l1_fit: ExponentFit,
    /// Fit of the two inner shells alone, which carry the singular part.
    pub core_l1_fit: ExponentFit,
    /// `slope_L1 / slope_sup`, a lower bound for any admissible `m` in
    /// `||phi - psi|| <= C ||f - g||^{1/m}`.
    pub implied_m_lower_bound: f64,
    pub ratio_within_tolerance: bool,
    /// Set when a fit's max residual exceeds [`SHARPNESS_MAX_RESIDUAL`].
    pub inconclusive: bool,
}

/// Largest tolerated log-space fit residual in a sharpness run.
pub const SHARPNESS_MAX_RESIDUAL: f64 = 0.05;
/// Relative tolerance on `slope_L1 / slope_sup = n`.
pub const SHARPNESS_RATIO_TOL: f64 = 0.10;

/// Fits both distance curves and derives the implied bound on `m`.
pub fn sharpness_from_samples(n: u32, h_norms: &[f64], sups: &[f64], l1s: &[f64]) -> Result<(ExponentFit, ExponentFit, f64, bool, bool)> {
    let sup_fit = fit_power_law(h_norms, sups, 4)?;
    let l1_fit = fit_power_law(h_norms, l1s, 4)?;
    if sup_fit.decades() < 1.0 - 1e-9 {
        return Err(invalid("h_samples", format!("span {:.3} decades, need 1", sup_fit.decades())));
    }
    let ratio = l1_fit.slope / sup_fit.slope;
    let nf = n as f64;
    let within = (ratio - nf).abs() <= SHARPNESS_RATIO_TOL * nf;
    let inconclusive = sup_fit.residual > SHARPNESS_MAX_RESIDUAL || l1_fit.residual > SHARPNESS_MAX_RESIDUAL;
    Ok((sup_fit, l1_fit, ratio, within, inconclusive))
}

pub fn sharpness_report(p: &RadialProfile, h_samples: &[Vec<Complex64>]) -> Result<SharpnessReport> {
    p.require_valid()?;
    if h_samples.len() < 4 {
        return Err(invalid("h_samples", format!("need at least 4, got {}", h_samples.len())));
    }
    let mut rows = Vec::with_capacity(h_samples.len());
    for h in h_samples {
        let tp = TranslatedProfile::new(*p, h.clone())?;
        let sup = sup_distance(&tp);
        let l1 = l1_ma_distance(&tp)?;
        rows.push(SharpnessRow {
            h_norm: tp.h_norm,
            sup_distance: sup.value,
            l1_distance: l1.total,
            l1_error_estimate: l1.error_estimate,
            pieces: l1.pieces,
        });
    }
    let hs: Vec<f64> = rows.iter().map(|r| r.h_norm).collect();
    let sups: Vec<f64> = rows.iter().map(|r| r.sup_distance).collect();
    let l1s: Vec<f64> = rows.iter().map(|r| r.l1_distance).collect();
    let (sup_fit, l1_fit, ratio, within, inconclusive) = sharpness_from_samples(p.n, &hs, &sups, &l1s)?;
    let core: Vec<f64> = rows.iter().map(|r| r.pieces[0] + r.pieces[1]).collect();
    let core_l1_fit = fit_power_law(&hs, &core, 4)?;
    Ok(SharpnessReport {
        n: p.n,
        rows,
        sup_fit,
        l1_fit,
        core_l1_fit,
        implied_m_lower_bound: ratio,
        ratio_within_tolerance: within,
        inconclusive,
    })
}

/// `|h| = 10^{-3 + j/4}`, `j = 0..4`, along the first coordinate axis.
pub fn default_h_schedule(n: u32) -> Vec<Vec<Complex64>> {
    (0..=4)
        .map(|j| {
            let mut h = vec![Complex64::new(0.0, 0.0); n as usize];
            h[0] = Complex64::new(10f64.powf(-3.0 + j as f64 / 4.0), 0.0);
            h
        })
        .collect()
}

/// Uniformly distributed unit vector in `C^n`, scaled to `len`.
pub fn random_direction(n: u32, len: f64, rng: &mut impl Rng) -> Vec<Complex64> {
    use rand_distr_free::standard_normal;
    let v: Vec<Complex64> = (0..n).map(|_| Complex64::new(standard_normal(rng), standard_normal(rng))).collect();
    let s = len / norm(&v);
    v.into_iter().map(|c| c * s).collect()
}

mod rand_distr_free {
    use rand::Rng;

    /// Box-Muller standard normal sample.
    pub fn standard_normal(rng: &mut impl Rng) -> f64 {
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}
