//! Event-driven simulation of one controlled surplus trajectory.
//!
//! Between claims the surplus is deterministic — it earns premium at rate
//! `p` and pays whatever the strategy's continuous component prescribes — so
//! a path is advanced exactly from event to event with no time discretization:
//!
//! ```text
//! X_t = x + p(t−s) − (claims so far) − (dividends so far)
//! W_t = time elapsed since the last claim
//! ```
//!
//! Claims arrive with elapsed-time hazard `λ(w)`; a claim larger than the
//! current surplus ruins the company (`X < 0`; `X = 0` is still solvent), and
//! ruin stops all dividends. Paths that survive to the horizon `T` pay their
//! strategy's terminal lump. The running functional is the discounted
//! dividend stream `∫ e^{−c(t−s)} dL_t` accumulated in closed form: lumps are
//! discounted at their epoch; continuous stretches use [`discounted_annuity`].
//!
//! Everything here is a pure function of its inputs plus an owned RNG stream,
//! so any number of paths may run concurrently.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClaimDistribution, HazardFunction, ModelParams};

/// Absolute slack used when comparing a surplus against a barrier or
/// threshold level (all state variables are order-one in the model units).
const LEVEL_EPS: f64 = 1e-12;

// ======================================================================
// State, strategies, events
// ======================================================================

/// Instantaneous state of a path: calendar time, surplus, elapsed time since
/// the last claim.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathState {
    /// Current calendar time `t ∈ [s, T]`.
    pub t: f64,
    /// Current surplus `x ≥ 0` (until ruin).
    pub x: f64,
    /// Elapsed time since the last claim, `0 ≤ w ≤ t`.
    pub w: f64,
}

/// A barrier level, constant or piecewise-linear in calendar time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BarrierLevel {
    /// Horizontal barrier `b(t) ≡ level`.
    Constant {
        /// The barrier height `≥ 0`.
        level: f64,
    },
    /// Piecewise-linear barrier through `(t_i, b_i)` knots covering `[0, T]`.
    PiecewiseLinear {
        /// `(t_i, b_i)` pairs, strictly increasing in `t_i`, `b_i ≥ 0`.
        knots: Vec<(f64, f64)>,
    },
}

impl BarrierLevel {
    /// Barrier height at time `t` (clamped to the knot range).
    pub fn value_at(&self, t: f64) -> f64 {
        match self {
            BarrierLevel::Constant { level } => *level,
            BarrierLevel::PiecewiseLinear { knots } => {
                let last = knots.len() - 1;
                if t <= knots[0].0 {
                    return knots[0].1;
                }
                if t >= knots[last].0 {
                    return knots[last].1;
                }
                let idx = knots.partition_point(|&(ti, _)| ti <= t) - 1;
                let (t0, b0) = knots[idx];
                let (t1, b1) = knots[idx + 1];
                b0 + (b1 - b0) * (t - t0) / (t1 - t0)
            }
        }
    }

    /// Right-hand slope `b′(t)` (0 for constant barriers and beyond the knots).
    fn slope_after(&self, t: f64) -> f64 {
        match self {
            BarrierLevel::Constant { .. } => 0.0,
            BarrierLevel::PiecewiseLinear { knots } => {
                let last = knots.len() - 1;
                if t >= knots[last].0 || t < knots[0].0 {
                    return 0.0;
                }
                let idx = knots.partition_point(|&(ti, _)| ti <= t).saturating_sub(1);
                let (t0, b0) = knots[idx];
                let (t1, b1) = knots[idx + 1];
                (b1 - b0) / (t1 - t0)
            }
        }
    }

    /// Next knot time strictly after `t`, if any (segment boundary for the
    /// deterministic flow).
    fn next_knot_after(&self, t: f64) -> Option<f64> {
        match self {
            BarrierLevel::Constant { .. } => None,
            BarrierLevel::PiecewiseLinear { knots } => knots
                .iter()
                .map(|&(ti, _)| ti)
                .find(|&ti| ti > t + LEVEL_EPS),
        }
    }

    fn validate(&self, params: &ModelParams) -> Result<()> {
        match self {
            BarrierLevel::Constant { level } => {
                if !level.is_finite() || *level < 0.0 {
                    return Err(Error::Config(format!("barrier level must be ≥ 0, got {level}")));
                }
            }
            BarrierLevel::PiecewiseLinear { knots } => {
                if knots.len() < 2 {
                    return Err(Error::Config("barrier table needs at least two knots".into()));
                }
                if knots[0].0.abs() > 1e-12 {
                    return Err(Error::Config(format!(
                        "barrier table must start at t = 0, got {}",
                        knots[0].0
                    )));
                }
                if knots[knots.len() - 1].0 < params.horizon - 1e-12 {
                    return Err(Error::Config(format!(
                        "barrier table must cover [0, {}], last knot at {}",
                        params.horizon,
                        knots[knots.len() - 1].0
                    )));
                }
                for pair in knots.windows(2) {
                    if pair[1].0 <= pair[0].0 {
                        return Err(Error::Config("barrier-table knots must be strictly increasing".into()));
                    }
                }
                for &(t, b) in knots {
                    if !t.is_finite() || !b.is_finite() || b < 0.0 {
                        return Err(Error::Config(format!("barrier value at t = {t} must be finite and ≥ 0")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A feedback dividend strategy: what to pay, decided from the current state.
///
/// All variants are admissible by construction — they can never pay more than
/// the company holds, so cumulative dividends respect
/// `L_t ≤ x + p(t−s) − (claims so far)` pathwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    /// Reflection at a barrier `b(t)`: pay the excess `max(0, x − b)` as a
    /// lump at every decision epoch, and skim at rate `p − b′(t)` (clamped at
    /// 0) while the surplus sits on the barrier.
    Barrier {
        /// The barrier level, constant or time-dependent.
        level: BarrierLevel,
    },
    /// Pay at constant rate `rate` while the surplus exceeds `level`; when
    /// `rate > p` the surplus slides down to the level and then pays exactly
    /// `p` (staying put) until the next claim.
    ThresholdRate {
        /// Threshold surplus level `≥ 0`.
        level: f64,
        /// Payout rate `≥ 0` applied above the level.
        rate: f64,
    },
    /// Pay the entire surplus immediately, then skim all premium income —
    /// reflection at the zero barrier. The first claim of positive size ruins.
    LiquidateNow,
    /// Pay nothing until the horizon, then the whole terminal surplus.
    PayAllAtT,
    /// Never pay anything (a bound fixture, not a sensible strategy).
    NoDividend,
}

static ZERO_BARRIER: BarrierLevel = BarrierLevel::Constant { level: 0.0 };

/// The continuous-flow controller a strategy reduces to between epochs.
#[derive(Clone, Copy)]
enum Controller<'a> {
    Reflect(&'a BarrierLevel),
    Threshold { level: f64, rate: f64 },
    Coast,
}

impl Strategy {
    /// The lump paid at a decision epoch (path start and immediately after
    /// each claim): barriers pay the excess over the barrier, immediate
    /// liquidation pays everything, terminal liquidation pays only at `T`.
    pub fn lump_at(&self, state: &PathState, params: &ModelParams) -> f64 {
        match self {
            Strategy::Barrier { level } => (state.x - level.value_at(state.t)).max(0.0),
            Strategy::LiquidateNow => state.x,
            Strategy::PayAllAtT => {
                if (state.t - params.horizon).abs() <= 1e-12 {
                    state.x
                } else {
                    0.0
                }
            }
            Strategy::ThresholdRate { .. } | Strategy::NoDividend => 0.0,
        }
    }

    /// Whether this strategy liquidates the remaining surplus at the horizon.
    fn pays_terminal_lump(&self) -> bool {
        !matches!(self, Strategy::NoDividend)
    }

    fn controller(&self) -> Controller<'_> {
        match self {
            Strategy::Barrier { level } => Controller::Reflect(level),
            Strategy::LiquidateNow => Controller::Reflect(&ZERO_BARRIER),
            Strategy::ThresholdRate { level, rate } => Controller::Threshold {
                level: *level,
                rate: *rate,
            },
            Strategy::PayAllAtT | Strategy::NoDividend => Controller::Coast,
        }
    }

    /// Check the strategy data against the model parameters.
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        match self {
            Strategy::Barrier { level } => level.validate(params),
            Strategy::ThresholdRate { level, rate } => {
                if !level.is_finite() || *level < 0.0 {
                    return Err(Error::Config(format!("threshold level must be ≥ 0, got {level}")));
                }
                if !rate.is_finite() || *rate < 0.0 {
                    return Err(Error::Config(format!("threshold payout rate must be ≥ 0, got {rate}")));
                }
                Ok(())
            }
            Strategy::LiquidateNow | Strategy::PayAllAtT | Strategy::NoDividend => Ok(()),
        }
    }
}

/// What happened at one point of a simulated path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// A claim arrived and was absorbed (surplus stayed ≥ 0).
    Claim,
    /// A lump dividend was paid.
    LumpDividend,
    /// A claim exceeded the surplus; the amount is the fatal claim size and
    /// the recorded surplus is the (negative) deficit.
    Ruin,
    /// The simulation reached its stopping time.
    Horizon,
}

impl std::fmt::Display for EventKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EventKind::Claim => "claim",
            EventKind::LumpDividend => "lump_dividend",
            EventKind::Ruin => "ruin",
            EventKind::Horizon => "horizon",
        })
    }
}

/// One recorded path event. Continuous dividend stretches are not events;
/// they show up through `dividends_after`, the cumulative (undiscounted)
/// dividends paid up to and including this event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathEvent {
    /// Calendar time of the event.
    pub time: f64,
    /// What happened.
    pub kind: EventKind,
    /// Claim size or lump amount (0 for horizon markers).
    pub amount: f64,
    /// Surplus immediately after the event.
    pub surplus_after: f64,
    /// Elapsed time since the last claim immediately after the event.
    pub w_after: f64,
    /// Cumulative undiscounted dividends paid so far.
    pub dividends_after: f64,
}

/// The full outcome of one simulated path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    /// Ordered event list; at most one ruin event, and it is last.
    pub events: Vec<PathEvent>,
    /// The path's sample of `∫ e^{−c(t−s)} dL_t` — the quantity whose
    /// expectation is the strategy value.
    pub discounted_dividends: f64,
    /// Ruin time, if the path was ruined before the stopping time.
    pub ruin_time: Option<f64>,
    /// Surplus after the last event: 0 after a terminal liquidation, the
    /// (negative) deficit at ruin, or the untouched surplus otherwise.
    pub terminal_surplus: f64,
    /// State at the stopping time for surviving paths (`None` after ruin).
    /// Lets a caller restart the simulation mid-horizon, which is how the
    /// dynamic-programming cross-check composes path segments.
    pub end_state: Option<PathState>,
}

// ======================================================================
// Discounting helper
// ======================================================================

/// Present value at time `s` of a constant payout stream: `rate` per unit
/// time over `[a, b]`, discounted at rate `c`:
///
/// ```text
/// ∫_a^b e^{−c(t−s)} · rate dt  =  rate · (e^{−c(a−s)} − e^{−c(b−s)}) / c
/// ```
///
/// with the `c = 0` limit `rate·(b−a)`.
///
/// # Errors
/// Domain error if `b < a`, `a < s`, `rate < 0`, or `c < 0`.
pub fn discounted_annuity(rate: f64, a: f64, b: f64, s: f64, c: f64) -> Result<f64> {
    if b < a {
        return Err(Error::Domain(format!("annuity interval reversed: [{a}, {b}]")));
    }
    if a < s {
        return Err(Error::Domain(format!("annuity starts at {a}, before valuation time {s}")));
    }
    if rate < 0.0 || c < 0.0 {
        return Err(Error::Domain(format!("annuity needs rate ≥ 0 and c ≥ 0, got rate = {rate}, c = {c}")));
    }
    if c == 0.0 {
        return Ok(rate * (b - a));
    }
    // e^{−c(a−s)} − e^{−c(b−s)} = −e^{−c(a−s)}·expm1(−c(b−a)), stable for small c.
    Ok(rate * (-c * (a - s)).exp() * (-(-c * (b - a)).exp_m1()) / c)
}

// ======================================================================
// The simulator
// ======================================================================

/// Running accumulator shared by the deterministic-flow handlers.
struct Flow<'a> {
    premium: f64,
    discount: f64,
    valuation_time: f64,
    /// Pinned-to-barrier flag (meaningful only for reflection controllers).
    pinned: bool,
    controller: Controller<'a>,
    /// Present value of dividends, discounted to `valuation_time`.
    discounted: f64,
    /// Undiscounted cumulative dividends.
    cumulative: f64,
}

impl Flow<'_> {
    fn pay_stream(&mut self, rate: f64, a: f64, b: f64) -> Result<()> {
        if rate <= 0.0 || b <= a {
            return Ok(());
        }
        self.discounted += discounted_annuity(rate, a, b, self.valuation_time, self.discount)?;
        self.cumulative += rate * (b - a);
        Ok(())
    }

    fn pay_lump(&mut self, amount: f64, t: f64) {
        self.discounted += amount * (-self.discount * (t - self.valuation_time)).exp();
        self.cumulative += amount;
    }

    /// Advance the deterministic dynamics from `*t` to `t_end`, updating the
    /// surplus and the dividend accumulators. Exact: solves each linear
    /// segment in closed form instead of time-stepping.
    fn advance(&mut self, t: &mut f64, x: &mut f64, t_end: f64) -> Result<()> {
        while *t < t_end {
            match self.controller {
                Controller::Coast => {
                    *x += self.premium * (t_end - *t);
                    *t = t_end;
                }
                Controller::Reflect(level) => {
                    // Process one barrier segment (constant slope) at a time.
                    let seg_end = level.next_knot_after(*t).map_or(t_end, |k| k.min(t_end));
                    let b_here = level.value_at(*t);
                    let slope = level.slope_after(*t);
                    // Touching the barrier pins the path only when reflection
                    // can actually hold it there (slope ≤ p); a barrier that
                    // outruns the premium leaves the surplus behind instead.
                    if !self.pinned && *x >= b_here - LEVEL_EPS && slope <= self.premium + LEVEL_EPS {
                        self.pinned = true;
                        continue;
                    }
                    if self.pinned {
                        if slope > self.premium + LEVEL_EPS {
                            // The barrier outruns the premium: detach and grow.
                            self.pinned = false;
                            continue;
                        }
                        // Ride the barrier, skimming the excess premium.
                        self.pay_stream(self.premium - slope, *t, seg_end)?;
                        *x = level.value_at(seg_end);
                        *t = seg_end;
                    } else {
                        // Below the barrier: grow at p, maybe hitting it.
                        let hit = if self.premium > slope + LEVEL_EPS {
                            *t + (b_here - *x) / (self.premium - slope)
                        } else {
                            f64::INFINITY
                        };
                        if hit < seg_end {
                            *x = level.value_at(hit);
                            *t = hit;
                            self.pinned = true;
                        } else {
                            *x += self.premium * (seg_end - *t);
                            *t = seg_end;
                        }
                    }
                }
                Controller::Threshold { level, rate } => {
                    if *x < level - LEVEL_EPS {
                        // Below the threshold: pure growth until it is reached.
                        let hit = *t + (level - *x) / self.premium;
                        if hit < t_end {
                            *x = level;
                            *t = hit;
                        } else {
                            *x += self.premium * (t_end - *t);
                            *t = t_end;
                        }
                    } else if rate <= self.premium {
                        // Net drift up (or flat): pay the full rate throughout.
                        self.pay_stream(rate, *t, t_end)?;
                        *x += (self.premium - rate) * (t_end - *t);
                        *t = t_end;
                    } else if *x > level + LEVEL_EPS {
                        // Net drift down: decline toward the threshold.
                        let hit = *t + (*x - level) / (rate - self.premium);
                        let seg_end = hit.min(t_end);
                        self.pay_stream(rate, *t, seg_end)?;
                        if hit <= t_end {
                            *x = level;
                        } else {
                            *x -= (rate - self.premium) * (t_end - *t);
                        }
                        *t = seg_end;
                    } else {
                        // Sitting on the threshold with rate > p: slide,
                        // paying exactly the premium.
                        self.pay_stream(self.premium, *t, t_end)?;
                        *x = level;
                        *t = t_end;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Simulate one path from `(s, x, w)` to the horizon, paying the strategy's
/// terminal lump if the path survives. See the module docs for the dynamics.
///
/// # Errors
/// Domain error if `(s, x, w)` violates `0 ≤ w ≤ s ≤ T`, `x ≥ 0`;
/// configuration error if the strategy data is invalid.
#[allow(clippy::too_many_arguments)]
pub fn simulate_path<R: Rng + ?Sized>(
    params: &ModelParams,
    hazard: &HazardFunction,
    claims: &ClaimDistribution,
    strategy: &Strategy,
    s: f64,
    x: f64,
    w: f64,
    rng: &mut R,
) -> Result<PathRecord> {
    simulate_stopped(params, hazard, claims, strategy, s, x, w, rng, params.horizon, true)
}

/// Simulate the prefix of a path on `[s, until)`: dividends paid strictly
/// before `until` are accumulated (discounted to `s`), no terminal lump is
/// paid at `until`, and the state there is returned for a restart. A restart
/// at `end_state` reproduces exactly what the unstopped path would have done,
/// because decision-epoch lumps at `until` are deferred to the restart.
///
/// # Errors
/// Domain error if the start point is invalid or `until ∉ (s, T]`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_prefix<R: Rng + ?Sized>(
    params: &ModelParams,
    hazard: &HazardFunction,
    claims: &ClaimDistribution,
    strategy: &Strategy,
    s: f64,
    x: f64,
    w: f64,
    rng: &mut R,
    until: f64,
) -> Result<PathRecord> {
    if !(until > s && until <= params.horizon + 1e-12) {
        return Err(Error::Domain(format!(
            "prefix must stop inside ({s}, {}], got {until}",
            params.horizon
        )));
    }
    simulate_stopped(params, hazard, claims, strategy, s, x, w, rng, until.min(params.horizon), false)
}

#[allow(clippy::too_many_arguments)]
fn simulate_stopped<R: Rng + ?Sized>(
    params: &ModelParams,
    hazard: &HazardFunction,
    claims: &ClaimDistribution,
    strategy: &Strategy,
    s: f64,
    x0: f64,
    w0: f64,
    rng: &mut R,
    stop: f64,
    terminal_sweep: bool,
) -> Result<PathRecord> {
    params.validate()?;
    strategy.validate(params)?;
    let horizon = params.horizon;
    let slack = 1e-12 * horizon.max(1.0);
    if !(0.0 - slack..=horizon + slack).contains(&s) || !x0.is_finite() || x0 < 0.0 {
        return Err(Error::Domain(format!(
            "start point (s = {s}, x = {x0}) outside the domain 0 ≤ s ≤ {horizon}, x ≥ 0"
        )));
    }
    if !(0.0 - slack..=s + slack).contains(&w0) {
        return Err(Error::Domain(format!("elapsed time w = {w0} violates 0 ≤ w ≤ s = {s}")));
    }

    let s = s.clamp(0.0, horizon);
    let mut t = s;
    let mut x = x0;
    let mut w = w0.clamp(0.0, s);
    let mut events: Vec<PathEvent> = Vec::new();
    let mut ruin_time = None;
    let mut flow = Flow {
        premium: params.premium_rate,
        discount: params.discount_rate,
        valuation_time: s,
        pinned: false,
        controller: strategy.controller(),
        discounted: 0.0,
        cumulative: 0.0,
    };

    // Decision epoch at the start.
    let lump = strategy.lump_at(&PathState { t, x, w }, params);
    if lump > 0.0 {
        x -= lump;
        flow.pay_lump(lump, t);
        events.push(PathEvent {
            time: t,
            kind: EventKind::LumpDividend,
            amount: lump,
            surplus_after: x,
            w_after: w,
            dividends_after: flow.cumulative,
        });
    }

    loop {
        if t >= stop {
            break;
        }
        let wait = hazard.sample_waiting_time(w, rng.gen::<f64>(), horizon)?;
        let t_claim = t + wait;
        let t_next = t_claim.min(stop);
        let dt = t_next - t;
        flow.advance(&mut t, &mut x, t_next)?;
        w += dt;

        if t_claim < stop {
            // The claim fires strictly before the stopping time.
            let claim = claims.sample(rng.gen::<f64>())?;
            let x_after = x - claim;
            w = 0.0;
            if x_after < 0.0 {
                ruin_time = Some(t);
                x = x_after;
                events.push(PathEvent {
                    time: t,
                    kind: EventKind::Ruin,
                    amount: claim,
                    surplus_after: x,
                    w_after: w,
                    dividends_after: flow.cumulative,
                });
                break;
            }
            x = x_after;
            flow.pinned = false;
            events.push(PathEvent {
                time: t,
                kind: EventKind::Claim,
                amount: claim,
                surplus_after: x,
                w_after: w,
                dividends_after: flow.cumulative,
            });
            // Decision epoch right after the claim.
            let lump = strategy.lump_at(&PathState { t, x, w }, params);
            if lump > 0.0 {
                x -= lump;
                flow.pay_lump(lump, t);
                events.push(PathEvent {
                    time: t,
                    kind: EventKind::LumpDividend,
                    amount: lump,
                    surplus_after: x,
                    w_after: w,
                    dividends_after: flow.cumulative,
                });
            }
        }
    }

    let mut end_state = None;
    if ruin_time.is_none() {
        if terminal_sweep && strategy.pays_terminal_lump() && x > 0.0 {
            let lump = x;
            x = 0.0;
            flow.pay_lump(lump, t);
            events.push(PathEvent {
                time: t,
                kind: EventKind::LumpDividend,
                amount: lump,
                surplus_after: x,
                w_after: w,
                dividends_after: flow.cumulative,
            });
        }
        end_state = Some(PathState { t, x, w });
        events.push(PathEvent {
            time: t,
            kind: EventKind::Horizon,
            amount: 0.0,
            surplus_after: x,
            w_after: w,
            dividends_after: flow.cumulative,
        });
    }

    Ok(PathRecord {
        events,
        discounted_dividends: flow.discounted,
        ruin_time,
        terminal_surplus: x,
        end_state,
    })
}

// ======================================================================
// Tests
// ======================================================================
