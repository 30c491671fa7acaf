//! Problem constants and stochastic primitives of the Sparre Andersen
//! renewal risk model.
//!
//! The surplus process earns premium at rate `p` and suffers claims at the
//! epochs of a renewal process. Claim interarrival times have hazard rate
//! `λ(w)` where `w` is the time elapsed since the last claim, so the
//! conditional survival of the next waiting time is
//!
//! ```text
//! P{ T₁ > t | elapsed = w } = exp( −∫_w^{w+t} λ(u) du )
//! ```
//!
//! Claim sizes are i.i.d. with distribution `G`. This module houses:
//!
//! - [`ModelParams`] — premium rate `p`, discount rate `c`, horizon `T`,
//!   hazard bound `Λ`;
//! - [`HazardFunction`] — three concrete hazard families (constant,
//!   piecewise-linear table, Erlang-2) with exact integrated hazards and
//!   inverse-transform waiting-time sampling;
//! - [`ClaimDistribution`] — exponential, deterministic (point mass), and
//!   continuous piecewise-linear empirical claim laws.
//!
//! All types are immutable after construction and freely shareable across
//! threads; randomness enters only through caller-supplied uniform variates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How strictly parameter validation enforces the model assumptions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMode {
    /// Enforce the standing assumptions: `c > 0`, `Λ > 0`, and a hazard that
    /// is strictly positive on `(0, T]`.
    #[default]
    Strict,
    /// Additionally admit the boundary cases `c = 0` and `λ ≡ 0`. The zero-
    /// hazard limit has a closed-form value function and is the primary
    /// solver oracle, so it must be constructible — but only on request.
    Degenerate,
}

/// The problem constants: premium rate, discount rate, horizon, hazard bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Premium income rate `p > 0` (currency per unit time).
    pub premium_rate: f64,
    /// Discount rate `c` (per unit time); `> 0` in strict mode.
    pub discount_rate: f64,
    /// Decision horizon `T > 0`.
    pub horizon: f64,
    /// Uniform hazard bound `Λ` with `λ(w) ≤ Λ` on `[0, T]`; `> 0` in strict
    /// mode.
    pub hazard_bound: f64,
    /// Validation regime; defaults to [`ValidationMode::Strict`].
    #[serde(default)]
    pub validation_mode: ValidationMode,
}

impl ModelParams {
    /// Build strict-mode parameters, validating immediately.
    pub fn new(premium_rate: f64, discount_rate: f64, horizon: f64, hazard_bound: f64) -> Result<Self> {
        let params = Self {
            premium_rate,
            discount_rate,
            horizon,
            hazard_bound,
            validation_mode: ValidationMode::Strict,
        };
        params.validate()?;
        Ok(params)
    }

    /// Build parameters under an explicit validation mode.
    pub fn with_mode(
        premium_rate: f64,
        discount_rate: f64,
        horizon: f64,
        hazard_bound: f64,
        validation_mode: ValidationMode,
    ) -> Result<Self> {
        let params = Self {
            premium_rate,
            discount_rate,
            horizon,
            hazard_bound,
            validation_mode,
        };
        params.validate()?;
        Ok(params)
    }

    /// Check the field invariants. `p` and `T` must be positive and finite in
    /// every mode; `c` and `Λ` must be positive in strict mode and only
    /// nonnegative in degenerate mode.
    pub fn validate(&self) -> Result<()> {
        let finite = self.premium_rate.is_finite()
            && self.discount_rate.is_finite()
            && self.horizon.is_finite()
            && self.hazard_bound.is_finite();
        if !finite {
            return Err(Error::Config("model parameters must be finite".into()));
        }
        if self.premium_rate <= 0.0 {
            return Err(Error::Config(format!(
                "premium_rate must be > 0, got {}",
                self.premium_rate
            )));
        }
        if self.horizon <= 0.0 {
            return Err(Error::Config(format!("horizon must be > 0, got {}", self.horizon)));
        }
        let lower_ok = |v: f64| match self.validation_mode {
            ValidationMode::Strict => v > 0.0,
            ValidationMode::Degenerate => v >= 0.0,
        };
        if !lower_ok(self.discount_rate) {
            return Err(Error::Config(format!(
                "discount_rate must be {} in {:?} mode, got {}",
                if self.validation_mode == ValidationMode::Strict { "> 0" } else { ">= 0" },
                self.validation_mode,
                self.discount_rate
            )));
        }
        if !lower_ok(self.hazard_bound) {
            return Err(Error::Config(format!(
                "hazard_bound must be {} in {:?} mode, got {}",
                if self.validation_mode == ValidationMode::Strict { "> 0" } else { ">= 0" },
                self.validation_mode,
                self.hazard_bound
            )));
        }
        Ok(())
    }
}

/// Interarrival hazard rate `λ(w)` as a function of the elapsed time `w`
/// since the last claim.
///
/// Evaluation beyond `w = T` clamps to `λ(T)` (constant extension): path
/// simulation may integrate slightly past the horizon before the sample is
/// discarded, and the model only constrains `λ` on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HazardFunction {
    /// Memoryless case `λ(w) = λ₀`: claims arrive by a Poisson process and
    /// the model loses its `w`-dependence.
    Constant {
        /// The constant rate `λ₀ ≥ 0` (zero only in degenerate mode).
        rate: f64,
    },
    /// Continuous piecewise-linear hazard through `(w_i, λ_i)` knots. Knots
    /// must be strictly increasing in `w` and cover `[0, T]`.
    PiecewiseLinear {
        /// `(w_i, λ_i)` pairs, strictly increasing in `w_i`.
        knots: Vec<(f64, f64)>,
    },
    /// Hazard of the Erlang(2, β) interarrival law: `λ(w) = β²w/(1+βw)`.
    /// Vanishes at `w = 0` and increases toward `β`, so the renewal model is
    /// genuinely non-Markov in `(t, x)` alone.
    ErlangTwo {
        /// The Erlang rate parameter `β > 0`.
        beta: f64,
    },
}

/// Absolute tolerance of the bisection used to invert the integrated hazard
/// when sampling waiting times for non-constant hazards.
pub const WAITING_TIME_BISECTION_TOL: f64 = 1e-10;

impl HazardFunction {
    /// The hazard rate `λ(w)` at elapsed time `w ∈ [0, T]`.
    ///
    /// # Errors
    /// Domain error if `w` lies outside `[0, T]` (beyond a relative
    /// floating-point slack of `1e-12`).
    pub fn hazard_at(&self, w: f64, horizon: f64) -> Result<f64> {
        let slack = 1e-12 * horizon.max(1.0);
        if !w.is_finite() || w < -slack || w > horizon + slack {
            return Err(Error::Domain(format!(
                "hazard queried at w = {w}, outside [0, {horizon}]"
            )));
        }
        Ok(self.rate_clamped(w.clamp(0.0, horizon)))
    }

    /// `λ(min(w, T))` with no domain check — the constant extension used
    /// internally by integration and simulation.
    fn rate_clamped(&self, w: f64) -> f64 {
        let w = w.max(0.0);
        match self {
            HazardFunction::Constant { rate } => *rate,
            HazardFunction::PiecewiseLinear { knots } => {
                let last = knots.len() - 1;
                if w <= knots[0].0 {
                    return knots[0].1;
                }
                if w >= knots[last].0 {
                    return knots[last].1;
                }
                // Binary search for the knot interval containing w.
                let idx = knots.partition_point(|&(wi, _)| wi <= w) - 1;
                let (w0, l0) = knots[idx];
                let (w1, l1) = knots[idx + 1];
                l0 + (l1 - l0) * (w - w0) / (w1 - w0)
            }
            HazardFunction::ErlangTwo { beta } => beta * beta * w / (1.0 + beta * w),
        }
    }

    /// Exact antiderivative value `∫_0^v λ(u) du` for `v` within the variant's
    /// own domain (no horizon clamping — callers split at `T` first).
    fn raw_integral_from_zero(&self, v: f64) -> f64 {
        match self {
            HazardFunction::Constant { rate } => rate * v,
            HazardFunction::PiecewiseLinear { knots } => {
                // Exact trapezoid accumulation: λ is linear between knots.
                let mut acc = 0.0;
                let mut prev = (0.0f64).min(knots[0].0);
                // Treat the region before the first knot as constant λ₀
                // (knots are validated to start at w = 0, so this is vacuous
                // in practice but keeps the helper total).
                if v <= knots[0].0 {
                    return knots[0].1 * (v - prev).max(0.0);
                }
                acc += knots[0].1 * (knots[0].0 - prev).max(0.0);
                prev = knots[0].0;
                for i in 1..knots.len() {
                    let (w1, l1) = knots[i];
                    let (w0, l0) = knots[i - 1];
                    if v <= w1 {
                        let lam_v = l0 + (l1 - l0) * (v - w0) / (w1 - w0);
                        acc += 0.5 * (l0 + lam_v) * (v - prev);
                        return acc;
                    }
                    acc += 0.5 * (l0 + l1) * (w1 - prev);
                    prev = w1;
                }
                // Beyond the last knot: constant extension at the last level.
                acc + knots[knots.len() - 1].1 * (v - prev)
            }
            HazardFunction::ErlangTwo { beta } => {
                // ∫ β²u/(1+βu) du = βv − ln(1+βv), since β²u/(1+βu) = β − β/(1+βu).
                beta * v - (beta * v).ln_1p()
            }
        }
    }

    /// The integrated hazard `∫_w^{w+t} λ(u) du`, clamping `λ` to `λ(T)`
    /// beyond the horizon (constant extension).
    ///
    /// # Errors
    /// Domain error if `w < 0` or `t < 0`.
    pub fn integrated_hazard(&self, w: f64, t: f64, horizon: f64) -> Result<f64> {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::Domain(format!("integrated hazard needs w ≥ 0, got {w}")));
        }
        if !t.is_finite() || t < 0.0 {
            return Err(Error::Domain(format!("integrated hazard needs t ≥ 0, got {t}")));
        }
        let a = w;
        let b = w + t;
        let a_in = a.min(horizon);
        let b_in = b.min(horizon);
        let mut total = self.raw_integral_from_zero(b_in) - self.raw_integral_from_zero(a_in);
        if b > horizon {
            let tail_start = a.max(horizon);
            total += self.rate_clamped(horizon) * (b - tail_start);
        }
        Ok(total.max(0.0))
    }

    /// Conditional survival `P{ T₁ > t | elapsed = w } = exp(−∫_w^{w+t} λ)`.
    pub fn conditional_survival(&self, w: f64, t: f64, horizon: f64) -> Result<f64> {
        Ok((-self.integrated_hazard(w, t, horizon)?).exp())
    }

    /// Inverse-transform sample of the conditional waiting time: the smallest
    /// `t ≥ 0` with `∫_w^{w+t} λ ≥ −ln(1−u01)`.
    ///
    /// Returns `+∞` when the available hazard mass (out to one horizon past
    /// `T`) cannot reach the target — the caller truncates paths at `T`, so
    /// any sample beyond that window behaves identically to "no claim".
    /// Non-constant hazards are inverted by bisection to absolute tolerance
    /// [`WAITING_TIME_BISECTION_TOL`].
    ///
    /// # Errors
    /// Domain error if `u01 ∉ [0, 1)` or `w < 0`.
    pub fn sample_waiting_time(&self, w: f64, u01: f64, horizon: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&u01) {
            return Err(Error::Domain(format!("uniform variate must lie in [0,1), got {u01}")));
        }
        if !w.is_finite() || w < 0.0 {
            return Err(Error::Domain(format!("waiting-time sample needs w ≥ 0, got {w}")));
        }
        // Target integrated hazard: z = −ln(1−u).
        let z = -(-u01).ln_1p();
        if z == 0.0 {
            return Ok(0.0);
        }
        if let HazardFunction::Constant { rate } = self {
            return Ok(if *rate > 0.0 { z / rate } else { f64::INFINITY });
        }
        // Bracket out to one full horizon beyond T; any sample that far out is
        // indistinguishable from "no claim before T" for every caller.
        let t_hi = (horizon - w).max(0.0) + horizon + 1.0;
        if self.integrated_hazard(w, t_hi, horizon)? < z {
            return Ok(f64::INFINITY);
        }
        let (mut lo, mut hi) = (0.0f64, t_hi);
        while hi - lo > WAITING_TIME_BISECTION_TOL {
            let mid = 0.5 * (lo + hi);
            if self.integrated_hazard(w, mid, horizon)? >= z {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// Largest hazard value attained on `[0, T]` (used to validate against
    /// the bound `Λ` and by stability checks).
    pub fn sup_on_horizon(&self, horizon: f64) -> f64 {
        match self {
            HazardFunction::Constant { rate } => *rate,
            HazardFunction::PiecewiseLinear { knots } => knots
                .iter()
                .take_while(|&&(w, _)| w <= horizon)
                .map(|&(_, l)| l)
                .fold(self.rate_clamped(horizon), f64::max),
            HazardFunction::ErlangTwo { beta } => beta * beta * horizon / (1.0 + beta * horizon),
        }
    }

    /// Check variant invariants against the owning parameters: nonnegative
    /// and `≤ Λ` on `[0, T]`, table knots strictly increasing and covering
    /// `[0, T]`, and (strict mode) positivity on `(0, T]`.
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        let horizon = params.horizon;
        let slack = 1e-12 * params.hazard_bound.max(1.0);
        match self {
            HazardFunction::Constant { rate } => {
                if !rate.is_finite() || *rate < 0.0 {
                    return Err(Error::Config(format!("constant hazard must be ≥ 0, got {rate}")));
                }
                if params.validation_mode == ValidationMode::Strict && *rate <= 0.0 {
                    return Err(Error::Config(
                        "zero hazard requires degenerate validation mode".into(),
                    ));
                }
            }
            HazardFunction::PiecewiseLinear { knots } => {
                if knots.len() < 2 {
                    return Err(Error::Config("hazard table needs at least two knots".into()));
                }
                if knots[0].0.abs() > 1e-12 {
                    return Err(Error::Config(format!(
                        "hazard table must start at w = 0, got {}",
                        knots[0].0
                    )));
                }
                if knots[knots.len() - 1].0 < horizon - 1e-12 {
                    return Err(Error::Config(format!(
                        "hazard table must cover [0, {horizon}], last knot at {}",
                        knots[knots.len() - 1].0
                    )));
                }
                for pair in knots.windows(2) {
                    if pair[1].0 <= pair[0].0 {
                        return Err(Error::Config("hazard-table knots must be strictly increasing".into()));
                    }
                }
                for &(w, l) in knots {
                    if !w.is_finite() || !l.is_finite() || l < 0.0 {
                        return Err(Error::Config(format!("hazard-table value at w = {w} must be finite and ≥ 0")));
                    }
                    if params.validation_mode == ValidationMode::Strict && w > 0.0 && l <= 0.0 {
                        return Err(Error::Config(format!(
                            "strict mode requires λ > 0 on (0, T]; table is 0 at w = {w}"
                        )));
                    }
                }
            }
            HazardFunction::ErlangTwo { beta } => {
                if !beta.is_finite() || *beta <= 0.0 {
                    return Err(Error::Config(format!("erlang_two beta must be > 0, got {beta}")));
                }
            }
        }
        let sup = self.sup_on_horizon(horizon);
        if sup > params.hazard_bound + slack {
            return Err(Error::Config(format!(
                "hazard exceeds its bound: sup λ = {sup} > Λ = {}",
                params.hazard_bound
            )));
        }
        Ok(())
    }
}

/// Claim-size distribution `G` on `[0, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClaimDistribution {
    /// Exponential claims with mean `μ`: `G(u) = 1 − e^{−u/μ}`.
    Exponential {
        /// Mean claim size `μ > 0`.
        mean: f64,
    },
    /// Every claim has the same size `d₀ > 0` (point mass). A deliberate
    /// discontinuous extension: atoms give exactly computable integral
    /// fixtures for the grid quadrature.
    Deterministic {
        /// The claim size `d₀ > 0`.
        size: f64,
    },
    /// Continuous piecewise-linear CDF through `(u_i, G(u_i))` points.
    /// The first point carries probability zero, so `G` is continuous on
    /// `[0, ∞)` as the model assumes for non-atomic laws.
    EmpiricalTable {
        /// `(u_i, G(u_i))` pairs: `u_i` strictly increasing, `G` values
        /// nondecreasing from exactly `0` to exactly `1`.
        points: Vec<(f64, f64)>,
    },
}

impl ClaimDistribution {
    /// The CDF `G(u)`; `0` for `u < 0`, tends to `1` as `u → ∞`.
    pub fn cdf(&self, u: f64) -> f64 {
        if u < 0.0 {
            return 0.0;
        }
        match self {
            ClaimDistribution::Exponential { mean } => -(-u / mean).exp_m1(),
            ClaimDistribution::Deterministic { size } => {
                if u >= *size {
                    1.0
                } else {
                    0.0
                }
            }
            ClaimDistribution::EmpiricalTable { points } => {
                let last = points.len() - 1;
                if u <= points[0].0 {
                    return 0.0;
                }
                if u >= points[last].0 {
                    return 1.0;
                }
                let idx = points.partition_point(|&(ui, _)| ui <= u) - 1;
                let (u0, p0) = points[idx];
                let (u1, p1) = points[idx + 1];
                p0 + (p1 - p0) * (u - u0) / (u1 - u0)
            }
        }
    }

    /// Generalized-inverse sample: under uniform `u01` the output has law `G`.
    ///
    /// # Errors
    /// Domain error if `u01 ∉ [0, 1)`.
    pub fn sample(&self, u01: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&u01) {
            return Err(Error::Domain(format!("uniform variate must lie in [0,1), got {u01}")));
        }
        Ok(match self {
            ClaimDistribution::Exponential { mean } => -mean * (-u01).ln_1p(),
            ClaimDistribution::Deterministic { size } => *size,
            ClaimDistribution::EmpiricalTable { points } => {
                if u01 <= 0.0 {
                    return Ok(points[0].0);
                }
                // First index with G(u_i) ≥ u01; invert linearly on the
                // segment arriving there (flat runs collapse to their left
                // edge, the generalized inverse).
                let idx = points.partition_point(|&(_, pi)| pi < u01);
                let (u1, p1) = points[idx];
                let (u0, p0) = points[idx - 1];
                if p1 > p0 {
                    u0 + (u1 - u0) * (u01 - p0) / (p1 - p0)
                } else {
                    u1
                }
            }
        })
    }

    /// Check variant invariants.
    pub fn validate(&self) -> Result<()> {
        match self {
            ClaimDistribution::Exponential { mean } => {
                if !mean.is_finite() || *mean <= 0.0 {
                    return Err(Error::Config(format!("exponential claim mean must be > 0, got {mean}")));
                }
            }
            ClaimDistribution::Deterministic { size } => {
                if !size.is_finite() || *size <= 0.0 {
                    return Err(Error::Config(format!("deterministic claim size must be > 0, got {size}")));
                }
            }
            ClaimDistribution::EmpiricalTable { points } => {
                if points.len() < 2 {
                    return Err(Error::Config("claim table needs at least two points".into()));
                }
                if points[0].0 < 0.0 {
                    return Err(Error::Config("claim support must be nonnegative".into()));
                }
                if points[0].1 != 0.0 {
                    return Err(Error::Config(
                        "claim table must start at probability exactly 0 (continuous CDF)".into(),
                    ));
                }
                if (points[points.len() - 1].1 - 1.0).abs() > 1e-9 {
                    return Err(Error::Config("claim table must end at probability 1".into()));
                }
                for pair in points.windows(2) {
                    if pair[1].0 <= pair[0].0 {
                        return Err(Error::Config("claim-table points must be strictly increasing".into()));
                    }
                    if pair[1].1 < pair[0].1 {
                        return Err(Error::Config("claim-table probabilities must be nondecreasing".into()));
                    }
                }
                for &(u, p) in points {
                    if !u.is_finite() || !p.is_finite() || !(0.0..=1.0).contains(&p) {
                        return Err(Error::Config(format!("claim-table entry ({u}, {p}) out of range")));
                    }
                }
            }
        }
        Ok(())
    }
}
