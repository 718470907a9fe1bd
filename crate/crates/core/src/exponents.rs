//! Stability-exponent machinery: the capacity modulus `kappa`, its inverse,
//! `gamma = C * kappa^{-1}`, and the iterated exponent recurrence with its
//! limit.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::quadrature::{integrate, Tolerance};

/// Absolute bound on the neglected tail of the `kappa` integral.
const TAIL_BOUND: f64 = 1e-12;

/// Monomial growth `Q(y) = scale * y^power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthFunction {
    power: f64,
    scale: f64,
}

impl GrowthFunction {
    pub fn new(power: f64, scale: f64) -> Result<Self> {
        if !(power > 0.0 && power.is_finite()) {
            return Err(invalid("m", format!("growth power must be positive (got {power}); the kappa integral diverges otherwise")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid("scale", format!("must be positive (got {scale})")));
        }
        Ok(Self { power, scale })
    }

    pub fn monomial(power: f64) -> Result<Self> {
        Self::new(power, 1.0)
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.scale * y.powf(self.power)
    }
}

/// Parameters of the modulus `kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KappaParams {
    n: u32,
    a_bound: f64,
    c_n: f64,
    growth: GrowthFunction,
}

impl KappaParams {
    pub fn new(n: u32, a_bound: f64, c_n: f64, growth: GrowthFunction) -> Result<Self> {
        check_dimension(n)?;
        if !(a_bound > 0.0 && a_bound.is_finite()) {
            return Err(invalid("A", format!("L^p bound must be positive (got {a_bound})")));
        }
        if !(c_n > 0.0 && c_n.is_finite()) {
            return Err(invalid("C_n", format!("must be positive (got {c_n})")));
        }
        Ok(Self {
            n,
            a_bound,
            c_n,
            growth,
        })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn growth(&self) -> GrowthFunction {
        self.growth
    }

    fn prefactor(&self) -> f64 {
        self.c_n * self.a_bound.powf(1.0 / self.n as f64)
    }

    /// Coefficient `K` in `kappa(r) = K r^{m/n^2}`.
    fn closed_form_coefficient(&self) -> f64 {
        let n = self.n as f64;
        let m = self.growth.power;
        self.prefactor() * self.growth.scale.powf(-1.0 / n) * (n / m + 1.0)
    }
}

pub(crate) fn check_dimension(n: u32) -> Result<()> {
    if n < 2 {
        return Err(invalid(
            "n",
            format!("complex dimension must be at least 2 (got {n}); for n = 1 the operator is the Laplacian"),
        ));
    }
    Ok(())
}

fn check_positive(name: &'static str, x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(invalid(name, format!("must be positive and finite (got {x})")));
    }
    Ok(())
}

/// `kappa(r)` by adaptive quadrature of `\int_{r^{-1/n}}^\infty y^{-1} Q(y)^{-1/n} dy`.
///
/// The integral is taken in `t = ln y` up to a cutoff beyond which the
/// analytic tail is below `1e-12 * min(1, Q(r^{-1/n})^{-1/n})`.
pub fn kappa(r: f64, p: &KappaParams) -> Result<f64> {
    check_positive("r", r)?;
    let n = p.n as f64;
    let q = p.growth;
    let y0 = r.powf(-1.0 / n);
    let boundary = q.eval(y0).powf(-1.0 / n);
    let tail_bound = TAIL_BOUND * boundary.min(1.0);
    // tail(Y) = scale^{-1/n} (n/m) Y^{-m/n}
    let t_max = -(n / q.power) * (tail_bound * q.power * q.scale.powf(1.0 / n) / n).ln();
    let t0 = y0.ln();
    let integral = if t_max > t0 {
        let quad = integrate(
            |t: f64| q.eval(t.exp()).powf(-1.0 / n),
            t0,
            t_max,
            Tolerance::new(tail_bound, 1e-13),
        );
        if !quad.converged {
            return Err(Error::Quadrature {
                value: quad.value,
                error: quad.error,
            });
        }
        quad.value
    } else {
        0.0
    };
    Ok(p.prefactor() * (integral + boundary))
}

/// Closed form `kappa(r) = C_n A^{1/n} scale^{-1/n} (n/m + 1) r^{m/n^2}`.
pub fn kappa_closed_form(r: f64, p: &KappaParams) -> Result<f64> {
    check_positive("r", r)?;
    let n = p.n as f64;
    Ok(p.closed_form_coefficient() * r.powf(p.growth.power / (n * n)))
}

/// Inverse of `kappa` from the closed form.
pub fn kappa_inverse(t: f64, p: &KappaParams) -> Result<f64> {
    check_positive("t", t)?;
    let n = p.n as f64;
    let r = (t / p.closed_form_coefficient()).powf(n * n / p.growth.power);
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Bracket {
            target: t,
            expansions: 0,
        });
    }
    Ok(r)
}

/// Inverse of the quadrature `kappa` by bisection (in `ln r`) on an
/// exponentially expanded bracket.
pub fn kappa_inverse_bisect(t: f64, p: &KappaParams) -> Result<f64> {
    const MAX_EXPANSIONS: usize = 64;
    const MAX_ITER: usize = 200;
    const REL_TOL: f64 = 1e-10;
    check_positive("t", t)?;
    let mut lo = 0.0f64; // ln r
    let mut hi = 0.0f64;
    let mut expansions = 0;
    while kappa(lo.exp(), p)? > t {
        expansions += 1;
        if expansions > MAX_EXPANSIONS {
            return Err(Error::Bracket { target: t, expansions });
        }
        hi = lo;
        lo -= 2f64.powi(expansions.min(10) as i32);
    }
    while kappa(hi.exp(), p)? < t {
        expansions += 1;
        if expansions > MAX_EXPANSIONS {
            return Err(Error::Bracket { target: t, expansions });
        }
        lo = hi;
        hi += 2f64.powi(expansions.min(10) as i32);
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..MAX_ITER {
        mid = 0.5 * (lo + hi);
        let k = kappa(mid.exp(), p)?;
        if (k - t).abs() <= REL_TOL * t {
            return Ok(mid.exp());
        }
        if k < t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid.exp())
}

/// `gamma(t) = C kappa^{-1}(t)`; increasing with `gamma(0+) = 0`.
pub fn gamma(t: f64, c: f64, p: &KappaParams) -> Result<f64> {
    check_positive("C", c)?;
    Ok(c * kappa_inverse(t, p)?)
}

/// Limit `A` of the exponent recurrence: the larger root of
/// `A^2 - (n + 2 - eps) A + 2n - (n + 2) eps = 0`, equivalently of
/// `A (1 + 2n / (A (A + eps))) = n + 2`.
pub fn beta_limit(n: u32, eps: f64) -> Result<f64> {
    check_dimension(n)?;
    check_eps(eps)?;
    let n = n as f64;
    let disc = (n - 2.0).powi(2) + 2.0 * (n + 2.0) * eps + eps * eps;
    Ok(0.5 * (n + 2.0 - eps + disc.sqrt()))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(invalid("eps", format!("must be finite and non-negative (got {eps})")));
    }
    Ok(())
}

/// The `delta_k` slack schedule of the recurrence (`k >= 1`).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeltaSchedule {
    Zero,
    /// `delta_k = delta0 * 2^{-k}`.
    Geometric { delta0: f64 },
    /// `values[k - 1] = delta_k`; zero past the end.
    Explicit { values: Vec<f64> },
}

impl DeltaSchedule {
    pub fn delta(&self, k: usize) -> f64 {
        match self {
            DeltaSchedule::Zero => 0.0,
            DeltaSchedule::Geometric { delta0 } => delta0 * 0.5f64.powi(k as i32),
            DeltaSchedule::Explicit { values } => values.get(k.wrapping_sub(1)).copied().unwrap_or(0.0),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            DeltaSchedule::Zero => true,
            DeltaSchedule::Geometric { delta0 } => *delta0 >= 0.0 && delta0.is_finite(),
            DeltaSchedule::Explicit { values } => values.iter().all(|d| *d >= 0.0 && d.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid("delta", "schedule entries must be finite and non-negative"))
        }
    }
}

/// One step of the recurrence
/// `b' (1 + 2n / (b (b + c))) = n + 2 - shift + 5 d - 2 d / (b + c)`.
fn recurrence_step(n: f64, beta: f64, c: f64, shift: f64, delta: f64) -> f64 {
    (n + 2.0 - shift + 5.0 * delta - 2.0 * delta / (beta + c)) / (1.0 + 2.0 * n / (beta * (beta + c)))
}

fn iterate(n: u32, c: f64, shift: f64, schedule: &DeltaSchedule, k_max: usize) -> Result<Vec<f64>> {
    schedule.validate()?;
    let nf = n as f64;
    let mut betas = Vec::with_capacity(k_max + 1);
    betas.push(nf + 2.0);
    for k in 1..=k_max {
        let prev = betas[k - 1];
        let next = recurrence_step(nf, prev, c, shift, schedule.delta(k));
        // Stagnation at rounding level is convergence, not a failure to decrease.
        if next > prev + 4.0 * f64::EPSILON * prev {
            return Err(Error::InadmissibleSchedule { step: k, prev, next });
        }
        betas.push(next);
    }
    Ok(betas)
}

/// Dimension, slack and schedule of the exponent recurrence. `betas` is
/// filled by [`beta_sequence`], starting from `beta_0 = n + 2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecurrenceState {
    pub n: u32,
    pub eps: f64,
    pub deltas: DeltaSchedule,
    pub betas: Vec<f64>,
}

impl RecurrenceState {
    pub fn new(n: u32, eps: f64, deltas: DeltaSchedule) -> Result<Self> {
        check_dimension(n)?;
        check_eps(eps)?;
        deltas.validate()?;
        Ok(Self {
            n,
            eps,
            deltas,
            betas: Vec::new(),
        })
    }

    /// Geometric schedule with the largest `delta0 = 2^{-j}` for which the
    /// first step decreases.
    pub fn with_default_schedule(n: u32, eps: f64) -> Result<Self> {
        let delta0 = default_delta0(n, eps)?;
        Self::new(n, eps, DeltaSchedule::Geometric { delta0 })
    }
}

pub fn default_delta0(n: u32, eps: f64) -> Result<f64> {
    check_dimension(n)?;
    check_eps(eps)?;
    let nf = n as f64;
    let beta0 = nf + 2.0;
    (0..64)
        .map(|j| 0.5f64.powi(j))
        .find(|d0| recurrence_step(nf, beta0, eps, 0.0, d0 * 0.5) < beta0)
        .ok_or_else(|| invalid("delta0", "no power of two makes the first step decrease"))
}

/// Output of [`beta_sequence`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaSequence {
    pub state: RecurrenceState,
    pub limit: f64,
    /// `|beta_{k_max} - limit|`.
    pub gap: f64,
}

impl BetaSequence {
    /// First index `k` with `|beta_k - limit| <= tol`.
    pub fn first_within(&self, tol: f64) -> Option<usize> {
        self.state.betas.iter().position(|b| (b - self.limit).abs() <= tol)
    }
}

/// Runs the recurrence for `k_max` steps. `betas[0] = n + 2`.
pub fn beta_sequence(mut state: RecurrenceState, k_max: usize) -> Result<BetaSequence> {
    let betas = iterate(state.n, state.eps, 0.0, &state.deltas, k_max)?;
    let limit = beta_limit(state.n, state.eps)?;
    let gap = (betas[k_max] - limit).abs();
    state.betas = betas;
    Ok(BetaSequence { state, limit, gap })
}

/// Dimension and capacity-domination exponent for the fixed-`chi` variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiParams {
    pub n: u32,
    pub chi: f64,
}

impl ChiParams {
    pub fn new(n: u32, chi: f64) -> Result<Self> {
        check_dimension(n)?;
        check_positive("chi", chi)?;
        Ok(Self { n, chi })
    }

    fn slack(&self) -> f64 {
        self.n as f64 / self.chi
    }

    fn shift(&self) -> f64 {
        let c = self.slack();
        c / (self.n as f64 + c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSequence {
    pub betas: Vec<f64>,
    /// Last computed term.
    pub observed_limit: f64,
    /// Fixed point of the `delta = 0` recurrence from its quadratic.
    pub fixed_point: f64,
    /// `n + n / chi`, the denominator asserted for this variant.
    pub claimed_denominator: f64,
}

/// The recurrence with `eps` replaced by `n / chi` and the extra shift
/// `(n/chi) / (n + n/chi)` on the right-hand side.
pub fn chi_beta_sequence(p: ChiParams, deltas: &DeltaSchedule, k_max: usize) -> Result<ChiSequence> {
    let c = p.slack();
    let shift = p.shift();
    let betas = iterate(p.n, c, shift, deltas, k_max)?;
    Ok(ChiSequence {
        observed_limit: betas[k_max],
        betas,
        fixed_point: chi_fixed_point(p),
        claimed_denominator: p.n as f64 + c,
    })
}

/// Larger root of `b^2 + (c - K) b + 2n - K c = 0`, `K = n + 2 - shift`.
pub fn chi_fixed_point(p: ChiParams) -> f64 {
    let n = p.n as f64;
    let c = p.slack();
    let k = n + 2.0 - p.shift();
    let b = k - c;
    0.5 * (b + (b * b - 4.0 * (2.0 * n - k * c)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: u32, m: f64) -> KappaParams {
        KappaParams::new(n, 1.0, 1.0, GrowthFunction::monomial(m).unwrap()).unwrap()
    }

    #[test]
    fn kappa_closed_form_value() {
        let p = params(2, 2.0);
        assert!((kappa_closed_form(1.0, &p).unwrap() - 2.0).abs() < 1e-15);
        assert!((kappa(1.0, &p).unwrap() - 2.0).abs() < 1e-10);
        assert!((kappa_inverse(2.0, &p).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn kappa_with_scale_and_bound() {
        let q = GrowthFunction::new(3.0, 2.5).unwrap();
        let p = KappaParams::new(3, 4.0, 0.7, q).unwrap();
        for r in [1e-7, 1e-3, 0.5] {
            let a = kappa(r, &p).unwrap();
            let b = kappa_closed_form(r, &p).unwrap();
            assert!((a - b).abs() <= 1e-9 * b, "r={r}: {a} vs {b}");
        }
    }

    #[test]
    fn kappa_monotone() {
        let p = params(3, 1.5);
        let vals: Vec<f64> = (0..40).map(|j| kappa(10f64.powf(-8.0 + 0.2 * j as f64), &p).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn kappa_rejects_bad_input() {
        let p = params(2, 2.0);
        assert!(kappa(0.0, &p).is_err());
        assert!(kappa(-1.0, &p).is_err());
        assert!(GrowthFunction::monomial(0.0).is_err());
        assert!(GrowthFunction::monomial(-1.0).is_err());
        assert!(KappaParams::new(1, 1.0, 1.0, GrowthFunction::monomial(1.0).unwrap()).is_err());
    }

    #[test]
    fn kappa_inverse_roundtrip_and_bisection() {
        let p = params(2, 2.0);
        for j in 0..=6 {
            let r = 10f64.powi(-j);
            let t = kappa(r, &p).unwrap();
            let inv = kappa_inverse(t, &p).unwrap();
            assert!((inv - r).abs() <= 1e-9 * r);
            let bis = kappa_inverse_bisect(t, &p).unwrap();
            assert!((kappa(bis, &p).unwrap() - t).abs() <= 1e-10 * t);
        }
        // t -> 0+ gives r -> 0+
        let small: Vec<f64> = [1e-2, 1e-4, 1e-6].iter().map(|t| kappa_inverse(*t, &p).unwrap()).collect();
        assert!(small.windows(2).all(|w| w[1] < w[0]) && small[2] < 1e-12);
    }

    #[test]
    fn gamma_slope_and_composition() {
        let p = params(2, 2.0);
        assert!(gamma(1.0, 0.0, &p).is_err());
        let ts: Vec<f64> = (0..8).map(|j| 10f64.powf(-4.0 + 0.5 * j as f64)).collect();
        let gs: Vec<f64> = ts.iter().map(|t| gamma(*t, 3.0, &p).unwrap()).collect();
        let fit = crate::fit::fit_power_law(&ts, &gs, 4).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-3);
        let r = 0.37;
        let g = gamma(kappa(r, &p).unwrap(), 3.0, &p).unwrap();
        assert!((g - 3.0 * r).abs() < 1e-9);
    }

    // Independent fixed-point iteration of A <- (n+2) / (1 + 2n/(A(A+eps))).
    fn fixed_point_oracle(n: f64, eps: f64) -> f64 {
        let mut a = n + 2.0;
        for _ in 0..100_000 {
            a = (n + 2.0) / (1.0 + 2.0 * n / (a * (a + eps)));
        }
        a
    }

    #[test]
    fn beta_limit_values() {
        assert_eq!(beta_limit(2, 0.0).unwrap(), 2.0);
        assert!((beta_limit(2, 0.1).unwrap() - 2.4).abs() < 1e-12);
        assert!((fixed_point_oracle(2.0, 0.1) - 2.4).abs() < 1e-12);
        for n in [2u32, 3, 4, 7] {
            for eps in [0.0, 0.01, 0.1, 1.0, 3.0] {
                let a = beta_limit(n, eps).unwrap();
                let nf = n as f64;
                let residual = a * (1.0 + 2.0 * nf / (a * (a + eps))) - (nf + 2.0);
                assert!(residual.abs() < 1e-12, "n={n} eps={eps} residual={residual}");
                if eps > 0.0 {
                    assert!((a - fixed_point_oracle(nf, eps)).abs() < 1e-11);
                }
            }
            assert_eq!(beta_limit(n, 0.0).unwrap(), n as f64);
        }
        assert!(beta_limit(1, 0.1).is_err());
        assert!(beta_limit(2, -0.1).is_err());
    }

    #[test]
    fn first_step_value() {
        let state = RecurrenceState::new(2, 0.1, DeltaSchedule::Zero).unwrap();
        let seq = beta_sequence(state, 1).unwrap();
        let oracle = 4.0 / (1.0 + 4.0 / (4.0 * 4.1));
        assert_eq!(seq.state.betas[0], 4.0);
        assert!((seq.state.betas[1] - oracle).abs() < 1e-15);
        assert!((seq.state.betas[1] - 3.2157).abs() < 1e-4);
    }

    #[test]
    fn default_schedule_decreases_to_limit() {
        for n in [2u32, 3, 4] {
            for eps in [0.01, 0.1, 1.0] {
                let state = RecurrenceState::with_default_schedule(n, eps).unwrap();
                let seq = beta_sequence(state, 400).unwrap();
                let b = &seq.state.betas;
                assert!(b[1] < b[0]);
                assert!(b.iter().all(|x| *x > n as f64));
                assert!(seq.gap < 1e-6, "n={n} eps={eps} gap={}", seq.gap);
            }
        }
    }

    #[test]
    fn inadmissible_schedule_reported() {
        let state = RecurrenceState::new(2, 0.1, DeltaSchedule::Geometric { delta0: 4.0 }).unwrap();
        assert!(matches!(beta_sequence(state, 5), Err(Error::InadmissibleSchedule { step: 1, .. })));
        assert!(RecurrenceState::new(2, 0.1, DeltaSchedule::Explicit { values: vec![-1.0] }).is_err());
    }

    #[test]
    fn chi_variant() {
        let p = ChiParams::new(2, 2.0).unwrap();
        let seq = chi_beta_sequence(p, &DeltaSchedule::Zero, 2000).unwrap();
        assert_eq!(seq.claimed_denominator, 3.0);
        assert!((seq.observed_limit - seq.fixed_point).abs() < 1e-12);

        let p1 = ChiParams::new(2, 1.0).unwrap();
        let s1 = chi_beta_sequence(p1, &DeltaSchedule::Zero, 2000).unwrap();
        assert!((s1.observed_limit - (1.5 + 14.25f64.sqrt()) / 2.0).abs() < 1e-12);

        // chi -> infinity recovers the eps = 0 recurrence.
        let big = chi_beta_sequence(ChiParams::new(3, 1e9).unwrap(), &DeltaSchedule::Zero, 50).unwrap();
        let plain = beta_sequence(RecurrenceState::new(3, 0.0, DeltaSchedule::Zero).unwrap(), 50).unwrap();
        for (a, b) in big.betas.iter().zip(&plain.state.betas) {
            assert!((a - b).abs() < 1e-7);
        }
        assert!(ChiParams::new(2, 0.0).is_err());
    }
}
