//! Structural checks: the theorems the value function must satisfy, run as
//! executable assertions against a solved field (and, for the dynamic
//! programming check, against the Monte Carlo engine).
//!
//! Every check is a pure function of its inputs and reports the *worst*
//! violation it found together with where it found it; a check passes iff
//! that worst violation is within its tolerance. The grid checks default to
//! the scheme tolerance `tol_g = 5·(Δ + Δx)` (see
//! [`ValueField::scheme_tolerance`]); the slope check uses a near-machine
//! tolerance because the projection enforces it by construction.
//!
//! The checks:
//!
//! - **Static sandwich** — `max(x, V̲) ≤ V ≤ min(x + p(T−s), V̄)` with the
//!   analytic envelopes of [`crate::hjbgrid`].
//! - **Time monotonicity and Lipschitz bound** — `V(s+Δ) ≤ V(s)` and
//!   `V(s) − V(s+Δ) ≤ 2pΔ` at fixed `(x, w)`.
//! - **Unit slope floor** — `V(s, x+Δx, w) − V(s, x, w) ≥ Δx`, exact from
//!   the obstacle projection, plus a sanity cap on how steep a credible
//!   field can be.
//! - **Renewal inequality** — `V(s,x,w) ≥ e^{−cΔ−∫_w^{w+Δ}λ}·V(s+Δ,x,w+Δ)`:
//!   survive one step with no claim, collect nothing, keep the future.
//! - **Memorylessness** — under a constant hazard the elapsed time `w` is
//!   irrelevant and every `w`-row must coincide.
//! - **Dynamic programming cross-check** — for probe points and a family of
//!   admissible strategies, the simulated one-step value
//!   `E[∫ e^{−c(t−s)} dL + e^{−c·h}·Ṽ(state after h)]` never beats the field
//!   (any strategy family lower-bounds the supremum), and its best member
//!   comes close if the family is rich enough.
//!
//! The elapsed-time continuity of the value (`V(s,x,w+h) → V(s,x,w)` as
//! `h ↓ 0`) has no quantitative modulus to test against, so it is checked as
//! a refinement trend instead: [`w_direction_modulus`] shrinks as the grid
//! step halves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjbgrid::{subsolution_bound, supersolution_bound, AnalyticBounds, NodeRef, ValueField};
use crate::model::{ClaimDistribution, HazardFunction, ModelParams};
use crate::montecarlo::estimate_with;
use crate::paths::{simulate_prefix, Strategy};

// ======================================================================
// Report plumbing
// ======================================================================

/// Outcome of one structural check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    /// Which property was checked.
    pub name: String,
    /// `worst_violation ≤ tolerance`?
    pub pass: bool,
    /// Largest violation found (negative values mean slack to spare).
    pub worst_violation: f64,
    /// The tolerance the violation was compared against.
    pub tolerance: f64,
    /// Where the worst violation occurred, when meaningful.
    pub worst_point: Option<NodeRef>,
    /// One human-readable line of context.
    pub detail: String,
}

impl CheckResult {
    fn new(
        name: &str,
        worst_violation: f64,
        tolerance: f64,
        worst_point: Option<NodeRef>,
        detail: String,
    ) -> Self {
        CheckResult {
            name: name.to_string(),
            pass: worst_violation <= tolerance,
            worst_violation,
            tolerance,
            worst_point,
            detail,
        }
    }
}

/// A bundle of check results: the verification suite's output.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    /// All checks that ran, in execution order.
    pub checks: Vec<CheckResult>,
}

impl PropertyReport {
    /// Add a check outcome.
    pub fn push(&mut self, check: CheckResult) {
        self.checks.push(check);
    }

    /// Did every check pass?
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// The failed check with the largest violation-over-tolerance excess.
    pub fn worst_failure(&self) -> Option<&CheckResult> {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .max_by(|a, b| {
                let ea = a.worst_violation - a.tolerance;
                let eb = b.worst_violation - b.tolerance;
                ea.partial_cmp(&eb).unwrap_or(std::cmp::Ordering::Equal)
            })
    }

    /// Fixed-width human-readable table, one line per check.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let status = if c.pass { "PASS" } else { "FAIL" };
            let at = match &c.worst_point {
                Some(n) => format!("at (s = {:.4}, x = {:.4}, w = {:.4})", n.s, n.x, n.w),
                None => String::new(),
            };
            out.push_str(&format!(
                "{status}  {:<24} worst {:>13.6e}  tol {:>10.4e}  {at}\n",
                c.name, c.worst_violation, c.tolerance
            ));
            if !c.detail.is_empty() {
                out.push_str(&format!("      {}\n", c.detail));
            }
        }
        out
    }
}

fn node_ref(field: &ValueField, i: usize, j: usize, k: usize) -> NodeRef {
    NodeRef {
        i_s: i,
        j_x: j,
        k_w: k,
        s: field.s_at(i),
        x: field.x_at(j),
        w: field.w_at(k),
        value: field.value(i, j, k),
    }
}

// ======================================================================
// Grid checks
// ======================================================================

/// Sandwich check: `max(x, V̲) − tol ≤ V ≤ min(x + p(T−s), V̄) + tol` at
/// every node. The trivial half (`x ≤ V ≤ x + p(T−s)`) holds exactly for a
/// solved field; the analytic envelopes are the sharper, model-aware part.
pub fn check_static_bounds(
    field: &ValueField,
    params: &ModelParams,
    bounds: &AnalyticBounds,
    tol: f64,
) -> Result<CheckResult> {
    let mut worst = f64::NEG_INFINITY;
    let mut worst_at = (0usize, 0usize, 0usize);
    for i in 0..=field.n_s {
        let s = field.s_at(i).min(params.horizon);
        let remaining = params.premium_rate * (params.horizon - s);
        for k in 0..=i {
            let w = field.w_at(k).min(s);
            for j in 0..=field.n_x {
                let x = field.x_at(j);
                let v = field.value(i, j, k);
                let upper = (x + remaining).min(supersolution_bound(s, x, w, bounds)?);
                let lower = x.max(subsolution_bound(s, x, w, bounds)?);
                let violation = (v - upper).max(lower - v);
                if violation > worst {
                    worst = violation;
                    worst_at = (i, j, k);
                }
            }
        }
    }
    let (i, j, k) = worst_at;
    Ok(CheckResult::new(
        "static_bounds",
        worst,
        tol,
        Some(node_ref(field, i, j, k)),
        format!(
            "sandwich max(x, lower envelope) ≤ V ≤ min(x + p(T−s), upper envelope); \
             N1 = {:.6}, N2 = {:.6}",
            bounds.n1, bounds.n2
        ),
    ))
}

/// Time monotonicity `V(s+Δ,x,w) ≤ V(s,x,w)` and the Lipschitz bound
/// `V(s,x,w) − V(s+Δ,x,w) ≤ 2pΔ`, at every node pair sharing `(x, w)`.
pub fn check_time_properties(field: &ValueField, params: &ModelParams, tol: f64) -> CheckResult {
    let two_p_dt = 2.0 * params.premium_rate * field.ds;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_at = (0usize, 0usize, 0usize);
    for i in 0..field.n_s {
        for k in 0..=i {
            for j in 0..=field.n_x {
                let here = field.value(i, j, k);
                let later = field.value(i + 1, j, k);
                // (1) later ≤ here; (2) here − later ≤ 2pΔ.
                let violation = (later - here).max(here - later - two_p_dt);
                if violation > worst {
                    worst = violation;
                    worst_at = (i, j, k);
                }
            }
        }
    }
    let (i, j, k) = worst_at;
    CheckResult::new(
        "time_monotone_lipschitz",
        worst,
        tol,
        Some(node_ref(field, i, j, k)),
        format!("V(s+Δ) ≤ V(s) and V(s) − V(s+Δ) ≤ 2pΔ = {two_p_dt:.6}"),
    )
}

/// Unit slope floor `V(s, x+Δx, w) − V(s, x, w) ≥ Δx` (exact from the
/// projection; tolerance `1e−9·Δx` in value units so the reported violation
/// for a flat segment is `Δx` itself), plus a sanity cap
/// `ΔV ≤ Δx + p·T` per step — a field steeper than that, or any non-finite
/// difference, fails outright.
pub fn check_space_properties(field: &ValueField, params: &ModelParams) -> CheckResult {
    let dx = field.dx;
    let cap = dx + params.premium_rate * params.horizon;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_at = (0usize, 0usize, 0usize);
    let mut cap_broken: Option<(usize, usize, usize, f64)> = None;
    for i in 0..=field.n_s {
        for k in 0..=i {
            for j in 0..field.n_x {
                let dv = field.value(i, j + 1, k) - field.value(i, j, k);
                let violation = dx - dv;
                if violation > worst {
                    worst = violation;
                    worst_at = (i, j, k);
                }
                if !dv.is_finite() || dv > cap {
                    cap_broken.get_or_insert((i, j, k, dv));
                }
            }
        }
    }
    let tol = 1e-9 * dx;
    if let Some((i, j, k, dv)) = cap_broken {
        return CheckResult::new(
            "space_slope",
            f64::INFINITY,
            tol,
            Some(node_ref(field, i, j, k)),
            format!("adjacent difference {dv} exceeds the sanity cap Δx + p·T = {cap:.6} (or is not finite)"),
        );
    }
    let (i, j, k) = worst_at;
    CheckResult::new(
        "space_slope",
        worst,
        tol,
        Some(node_ref(field, i, j, k)),
        format!("V(x+Δx) − V(x) ≥ Δx = {dx:.6}, violation reported in value units"),
    )
}

/// Renewal inequality: surviving one step with no claim and collecting
/// nothing is always admissible, so
/// `V(s,x,w) ≥ exp(−cΔ − ∫_w^{w+Δ} λ(u) du) · V(s+Δ, x, w+Δ)`.
pub fn check_renewal_inequality(
    field: &ValueField,
    hazard: &HazardFunction,
    params: &ModelParams,
    tol: f64,
) -> Result<CheckResult> {
    let ds = field.ds;
    // One survival factor per w-row, shared across slices.
    let factors: Vec<f64> = (0..field.n_s)
        .map(|k| {
            let w = field.w_at(k).min(params.horizon);
            Ok((-params.discount_rate * ds - hazard.integrated_hazard(w, ds, params.horizon)?).exp())
        })
        .collect::<Result<_>>()?;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_at = (0usize, 0usize, 0usize);
    for i in 0..field.n_s {
        for (k, &factor) in factors.iter().enumerate().take(i + 1) {
            for j in 0..=field.n_x {
                let violation = factor * field.value(i + 1, j, k + 1) - field.value(i, j, k);
                if violation > worst {
                    worst = violation;
                    worst_at = (i, j, k);
                }
            }
        }
    }
    let (i, j, k) = worst_at;
    Ok(CheckResult::new(
        "renewal_inequality",
        worst,
        tol,
        Some(node_ref(field, i, j, k)),
        format!(
            "V(s,x,w) ≥ e^(−cΔ − ∫λ)·V(s+Δ,x,w+Δ); first-row factor {:.6}",
            factors.first().copied().unwrap_or(1.0)
        ),
    ))
}

/// Under a constant (memoryless) hazard the elapsed time since the last
/// claim carries no information, so every `w`-row of a slice must agree.
///
/// # Errors
/// Configuration error if the hazard is not constant — the property simply
/// does not apply, and callers should skip the check instead.
pub fn check_poisson_w_invariance(field: &ValueField, hazard: &HazardFunction, tol: f64) -> Result<CheckResult> {
    if !matches!(hazard, HazardFunction::Constant { .. }) {
        return Err(Error::Config(
            "w-invariance only holds for a constant (memoryless) hazard; skip this check otherwise".into(),
        ));
    }
    let (spread, i, j) = field.max_w_spread();
    Ok(CheckResult::new(
        "poisson_w_invariance",
        spread,
        tol,
        Some(node_ref(field, i, j, 0)),
        "max over (s, x) of the spread of V across w".to_string(),
    ))
}

/// Largest adjacent-`w` difference `|V(s,x,w+Δ) − V(s,x,w)|` anywhere in the
/// field. The value's continuity in `w` is a limit statement with no stated
/// rate, so it is verified as a refinement trend: this modulus shrinks as
/// the grid step halves (see the module tests and the guide).
pub fn w_direction_modulus(field: &ValueField) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..=field.n_s {
        for k in 0..i {
            for j in 0..=field.n_x {
                worst = worst.max((field.value(i, j, k + 1) - field.value(i, j, k)).abs());
            }
        }
    }
    worst
}

// ======================================================================
// Dynamic programming cross-check
// ======================================================================

/// A probe point for the dynamic programming check; must lie on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbePoint {
    /// Valuation time.
    pub s: f64,
    /// Initial surplus.
    pub x: f64,
    /// Elapsed time since the last claim (`≤ s`).
    pub w: f64,
}

fn grid_index(coord: f64, step: f64, n: usize, what: &str) -> Result<usize> {
    let f = coord / step;
    let idx = f.round();
    if idx < 0.0 || idx > n as f64 || (f - idx).abs() > 1e-6 {
        return Err(Error::Domain(format!(
            "probe {what} = {coord} is off-grid (step {step}); the dynamic programming check needs grid points"
        )));
    }
    Ok(idx as usize)
}

/// Dynamic programming cross-check at probe points.
///
/// For each probe `(s, x, w)` and each strategy in `family`, simulate to
/// `s + step` (or ruin) and average
/// `∫ e^{−c(t−s)} dL + e^{−c(t_end−s)}·Ṽ(state at t_end)`, where `Ṽ`
/// interpolates the field trilinearly and ruin contributes no continuation
/// value. Two assertions per probe, both with `3·stderr` noise allowance:
///
/// - one-sided, every strategy: `estimate ≤ V(probe) + tol` — admissible
///   strategies never beat the value function;
/// - two-sided, best strategy: `|best − V(probe)| ≤ tol + family_slack` —
///   a rich enough family comes close to attaining it.
///
/// `step` must be a positive multiple of `Δ` with `s + step ≤ T`.
///
/// # Errors
/// Domain error for off-grid probes or a bad step; configuration error for
/// an empty family or empty probe list.
#[allow(clippy::too_many_arguments)]
pub fn dpp_cross_check(
    field: &ValueField,
    params: &ModelParams,
    hazard: &HazardFunction,
    claims: &ClaimDistribution,
    probes: &[ProbePoint],
    step: f64,
    family: &[Strategy],
    n_paths: u64,
    seed: u64,
    tol: f64,
    family_slack: f64,
) -> Result<CheckResult> {
    if family.is_empty() {
        return Err(Error::Config("dynamic programming check needs a non-empty strategy family".into()));
    }
    if probes.is_empty() {
        return Err(Error::Config("dynamic programming check needs at least one probe point".into()));
    }
    let steps = step / field.ds;
    if !step.is_finite() || step <= 0.0 || (steps - steps.round()).abs() > 1e-6 {
        return Err(Error::Domain(format!(
            "step {step} must be a positive multiple of Δ = {}",
            field.ds
        )));
    }

    let mut worst = f64::NEG_INFINITY;
    let mut worst_at: Option<NodeRef> = None;
    let mut detail = String::new();
    for probe in probes {
        let i = grid_index(probe.s, field.ds, field.n_s, "s")?;
        let j = grid_index(probe.x, field.dx, field.n_x, "x")?;
        let k = grid_index(probe.w, field.ds, field.n_s, "w")?;
        if k > i {
            return Err(Error::Domain(format!(
                "probe (s = {}, x = {}, w = {}) violates w ≤ s",
                probe.s, probe.x, probe.w
            )));
        }
        if probe.s + step > params.horizon + 1e-9 {
            return Err(Error::Domain(format!(
                "probe s = {} plus step {step} overshoots the horizon {}",
                probe.s, params.horizon
            )));
        }
        let (s, x, w) = (field.s_at(i), field.x_at(j), field.w_at(k));
        let until = (s + step).min(params.horizon);
        let v_here = field.value(i, j, k);

        let mut best: Option<(usize, f64, f64)> = None;
        for (si, strategy) in family.iter().enumerate() {
            let est = estimate_with(n_paths, seed, 0, |_, rng| {
                let record = simulate_prefix(params, hazard, claims, strategy, s, x, w, rng, until)?;
                let continuation = match record.end_state {
                    Some(state) => {
                        (-params.discount_rate * (state.t - s)).exp() * field.value_at(state.t, state.x, state.w)
                    }
                    None => 0.0,
                };
                Ok(record.discounted_dividends + continuation)
            })?;
            // One-sided: no admissible strategy beats the field.
            let one_sided = est.mean - v_here - 3.0 * est.stderr;
            if one_sided > worst {
                worst = one_sided;
                worst_at = Some(node_ref(field, i, j, k));
            }
            if best.map(|(_, m, _)| est.mean > m).unwrap_or(true) {
                best = Some((si, est.mean, est.stderr));
            }
        }
        // Two-sided at the best member: the family nearly attains the sup.
        let (bi, bmean, bstderr) = best.expect("non-empty family");
        let two_sided = (bmean - v_here).abs() - 3.0 * bstderr - family_slack;
        if two_sided > worst {
            worst = two_sided;
            worst_at = Some(node_ref(field, i, j, k));
        }
        detail = format!(
            "last probe (s = {s}, x = {x}, w = {w}): field {v_here:.6}, best family member #{bi} \
             gives {bmean:.6} ± {bstderr:.2e} over {n_paths} paths"
        );
    }
    Ok(CheckResult::new("dynamic_programming", worst, tol, worst_at, detail))
}

// ======================================================================
// Suite driver
// ======================================================================

/// Run every applicable grid check with one tolerance, in a fixed order.
/// The memorylessness check is included only for constant hazards; the
/// dynamic programming check is separate because it needs Monte Carlo
/// settings (see [`dpp_cross_check`]).
pub fn run_grid_checks(
    field: &ValueField,
    params: &ModelParams,
    hazard: &HazardFunction,
    tol: f64,
) -> Result<PropertyReport> {
    let bounds = AnalyticBounds::new(params);
    let mut report = PropertyReport::default();
    report.push(check_static_bounds(field, params, &bounds, tol)?);
    report.push(check_time_properties(field, params, tol));
    report.push(check_space_properties(field, params));
    report.push(check_renewal_inequality(field, hazard, params, tol)?);
    if matches!(hazard, HazardFunction::Constant { .. }) {
        report.push(check_poisson_w_invariance(field, hazard, tol)?);
    }
    Ok(report)
}

// ======================================================================
// Tests
// ======================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hjbgrid::{solve_vi, GridSpec};
    use crate::model::ValidationMode;

    fn annuity_params() -> ModelParams {
        ModelParams::with_mode(1.0, 0.05, 1.0, 0.0, ValidationMode::Degenerate).unwrap()
    }

    fn poisson_setup() -> (ModelParams, HazardFunction, ClaimDistribution, ValueField) {
        let params = ModelParams::new(1.0, 0.05, 1.0, 1.0).unwrap();
        let hazard = HazardFunction::Constant { rate: 1.0 };
        let claims = ClaimDistribution::Exponential { mean: 1.0 };
        let spec = GridSpec { n_s: 50, n_x: 50, x_max: 3.0 };
        let field = solve_vi(&spec, &params, &hazard, &claims).unwrap();
        (params, hazard, claims, field)
    }

    #[test]
    fn solved_poisson_field_passes_the_whole_grid_suite() {
        let (params, hazard, _claims, field) = poisson_setup();
        let report = run_grid_checks(&field, &params, &hazard, field.scheme_tolerance()).unwrap();
        assert!(report.pass(), "suite failed:\n{}", report.render_table());
        assert_eq!(report.checks.len(), 5);
        assert!(report.worst_failure().is_none());
        // The table renders one PASS line (plus detail) per check.
        let table = report.render_table();
        assert_eq!(table.matches("PASS").count(), 5);
        assert!(!table.contains("FAIL"));
    }

    #[test]
    fn static_bounds_fail_by_exactly_the_injected_shift() {
        let params = annuity_params();
        let hazard = HazardFunction::Constant { rate: 0.0 };
        let claims = ClaimDistribution::Exponential { mean: 1.0 };
        let spec = GridSpec { n_s: 40, n_x: 40, x_max: 3.0 };
        let field = solve_vi(&spec, &params, &hazard, &claims).unwrap();
        let bounds = AnalyticBounds::new(&params);
        let tol = field.scheme_tolerance();

        let clean = check_static_bounds(&field, &params, &bounds, tol).unwrap();
        assert!(clean.pass, "unshifted field should pass: {clean:?}");

        // Shift the whole surface up by M1: at the terminal slice all bounds
        // collapse to x, so the violation is exactly M1.
        let shifted = ValueField::from_fn(field.n_s, field.n_x, field.x_max, field.horizon, |s, x, w| {
            field.value_at(s, x, w) + bounds.m1
        });
        let broken = check_static_bounds(&shifted, &params, &bounds, tol).unwrap();
        assert!(!broken.pass);
        assert!(
            (broken.worst_violation - bounds.m1).abs() < 1e-9,
            "violation {} should equal M1 = {}",
            broken.worst_violation,
            bounds.m1
        );
    }

    #[test]
    fn time_check_accepts_constant_in_s_fixtures_with_zero_slack() {
        let params = annuity_params();
        // V = x has no s-dependence: part (1) binds with zero slack.
        let fixture = ValueField::from_fn(20, 20, 2.0, 1.0, |_, x, _| x);
        let result = check_time_properties(&fixture, &params, 1e-9);
        assert!(result.pass);
        assert_eq!(result.worst_violation, 0.0);
    }

    #[test]
    fn time_check_brackets_the_closed_form_increment() {
        let params = annuity_params();
        let hazard = HazardFunction::Constant { rate: 0.0 };
        let claims = ClaimDistribution::Exponential { mean: 1.0 };
        let spec = GridSpec { n_s: 50, n_x: 30, x_max: 2.0 };
        let field = solve_vi(&spec, &params, &hazard, &claims).unwrap();
        let result = check_time_properties(&field, &params, field.scheme_tolerance());
        assert!(result.pass, "{result:?}");
        // The annuity increment is ≈ pΔe^{−c(T−s)} ∈ (0, pΔ]: comfortably
        // inside [0, 2pΔ], so the worst violation is strictly negative.
        assert!(result.worst_violation < 0.0);
    }

    #[test]
    fn space_check_reports_a_flat_segment_as_a_dx_violation() {
        let params = annuity_params();
        // Flatten V in x across one step: slope 0 on the first pair.
        let fixture = ValueField::from_fn(10, 10, 1.0, 1.0, |_, x, _| x.max(0.2));
        let result = check_space_properties(&fixture, &params);
        assert!(!result.pass);
        assert!(
            (result.worst_violation - fixture.dx).abs() < 1e-12,
            "flat segment should violate by Δx = {}, got {}",
            fixture.dx,
            result.worst_violation
        );

        // And a wild jump trips the sanity cap.
        let spiky = ValueField::from_fn(10, 10, 1.0, 1.0, |_, x, _| if x > 0.5 { x + 100.0 } else { x });
        let spiky_result = check_space_properties(&spiky, &params);
        assert!(!spiky_result.pass);
        assert!(spiky_result.worst_violation.is_infinite());
    }

    #[test]
    fn renewal_factor_matches_the_hand_value() {
        // c = 0.05, λ = 1, Δ = 0.01: factor e^{−1.05·0.01} ≈ 0.98956.
        let params = ModelParams::new(1.0, 0.05, 1.0, 1.0).unwrap();
        let hazard = HazardFunction::Constant { rate: 1.0 };
        let factor = (-(params.discount_rate + 1.0) * 0.01f64).exp();
        assert!((factor - 0.98956).abs() < 1e-5);

        // A field that *grows* toward the terminal slice violates renewal by
        // exactly factor·V(s+Δ) − V(s) at the earliest slice.
        let fixture = ValueField::from_fn(100, 4, 1.0, 1.0, |s, _, _| s);
        let result = check_renewal_inequality(&fixture, &hazard, &params, 1e-9).unwrap();
        assert!(!result.pass);
        assert!(
            (result.worst_violation - factor * 0.01).abs() < 1e-12,
            "expected {} got {}",
            factor * 0.01,
            result.worst_violation
        );
    }

    #[test]
    fn renewal_holds_near_the_terminal_slice_of_a_solved_field() {
        let (params, hazard, _claims, field) = poisson_setup();
        let result = check_renewal_inequality(&field, &hazard, &params, field.scheme_tolerance()).unwrap();
        assert!(result.pass, "{result:?}");
        // Hand form at the terminal-adjacent slice: V(T−Δ,x,w) ≥ e^{−(c+λ)Δ}·x.
        let factor = (-(params.discount_rate + 1.0) * field.ds).exp();
        let i = field.n_s - 1;
        for j in [0, field.n_x / 2, field.n_x] {
            for k in [0, i] {
                assert!(field.value(i, j, k) >= factor * field.x_at(j) - 1e-12);
            }
        }
    }

    #[test]
    fn w_invariance_applies_only_to_constant_hazards() {
        let (_params, hazard, _claims, field) = poisson_setup();
        let ok = check_poisson_w_invariance(&field, &hazard, 1e-9).unwrap();
        assert!(ok.pass);
        assert_eq!(ok.worst_violation, 0.0);

        // Non-constant hazard: the check refuses to run.
        let erlang = HazardFunction::ErlangTwo { beta: 1.0 };
        let err = check_poisson_w_invariance(&field, &erlang, 1e-9).unwrap_err();
        assert_eq!(err.exit_code(), 64);

        // Injected w-gradient: fails loudly.
        let warped = ValueField::from_fn(20, 10, 1.0, 1.0, |_, x, w| x + w);
        let bad = check_poisson_w_invariance(&warped, &hazard, 1e-6).unwrap();
        assert!(!bad.pass);
        assert!(bad.worst_violation > 0.5);
    }

    #[test]
    fn w_modulus_shrinks_under_refinement() {
        // No fixed tolerance exists for continuity in w, so test the trend:
        // halving the step should (roughly) halve the adjacent-w modulus.
        let params = ModelParams::new(1.0, 0.05, 1.0, 3.0).unwrap();
        let hazard = HazardFunction::ErlangTwo { beta: 3.0 };
        let claims = ClaimDistribution::Exponential { mean: 1.0 };
        let coarse = solve_vi(&GridSpec { n_s: 30, n_x: 30, x_max: 3.0 }, &params, &hazard, &claims).unwrap();
        let fine = solve_vi(&GridSpec { n_s: 60, n_x: 60, x_max: 3.0 }, &params, &hazard, &claims).unwrap();
        let m_coarse = w_direction_modulus(&coarse);
        let m_fine = w_direction_modulus(&fine);
        assert!(m_coarse > 0.0, "elapsed-time dependence should be visible");
        assert!(
            m_fine < 0.95 * m_coarse,
            "w-modulus should shrink under refinement: coarse {m_coarse}, fine {m_fine}"
        );
    }

    #[test]
    fn dpp_matches_the_zero_hazard_closed_form_with_zero_variance() {
        let params = annuity_params();
        let hazard = HazardFunction::Constant { rate: 0.0 };
        let claims = ClaimDistribution::Exponential { mean: 1.0 };
        let spec = GridSpec { n_s: 50, n_x: 50, x_max: 5.0 };
        let field = solve_vi(&spec, &params, &hazard, &claims).unwrap();
        let probes = [ProbePoint { s: 0.5, x: 1.0, w: 0.24 }];
        let family = [Strategy::LiquidateNow, Strategy::NoDividend];
        let result = dpp_cross_check(
            &field,
            &params,
            &hazard,
            &claims,
            &probes,
            0.2,
            &family,
            64,
            7,
            field.scheme_tolerance(),
            2.0 * field.scheme_tolerance(),
        )
        .unwrap();
        assert!(result.pass, "{result:?}");
        // Deterministic model: liquidate-now attains the closed form, with
        // literally zero Monte Carlo variance; the field itself is within
        // its O(Δ) bias of the same number, so the observed excess is tiny.
        assert!(result.worst_violation < 1e-2);

        // A single suboptimal strategy still satisfies the one-sided bound.
        let lonely = dpp_cross_check(
            &field,
            &params,
            &hazard,
            &claims,
            &probes,
            0.2,
            &[Strategy::NoDividend],
            64,
            7,
            field.scheme_tolerance(),
            f64::INFINITY, // two-sided attainment is off the table on purpose
        )
        .unwrap();
        assert!(lonely.pass, "{lonely:?}");
    }

    #[test]
    fn dpp_to_the_horizon_is_direct_policy_evaluation() {
        let (params, hazard, claims, field) = poisson_setup();
        // s + step = T: Ṽ(T,·,·) = x, so the check reduces to simulating the
        // strategies to the horizon against terminal data.
        let probes = [ProbePoint { s: 0.5, x: 1.02, w: 0.0 }];
        let family = [
            Strategy::LiquidateNow,
            Strategy::Barrier {
                level: crate::paths::BarrierLevel::Constant { level: 1.0 },
            },
        ];
        let result = dpp_cross_check(
            &field,
            &params,
            &hazard,
            &claims,
            &probes,
            0.5,
            &family,
            4_000,
            20_240_818,
            field.scheme_tolerance(),
            4.0 * field.scheme_tolerance(),
        )
        .unwrap();
        assert!(result.pass, "{result:?}");
    }

    #[test]
    fn dpp_rejects_off_grid_probes_and_bad_steps() {
        let (params, hazard, claims, field) = poisson_setup();
        let family = [Strategy::LiquidateNow];
        // Off-grid x.
        let off = dpp_cross_check(
            &field,
            &params,
            &hazard,
            &claims,
            &[ProbePoint { s: 0.5, x: 1.0101, w: 0.0 }],
            0.2,
            &family,
            16,
            1,
            0.1,
            0.1,
        );
        assert_eq!(off.unwrap_err().exit_code(), 64);
        // w > s.
        let bad_w = dpp_cross_check(
            &field,
            &params,
            &hazard,
            &claims,
            &[ProbePoint { s: 0.2, x: 1.02, w: 0.4 }],
            0.2,
            &family,
            16,
            1,
            0.1,
            0.1,
        );
        assert_eq!(bad_w.unwrap_err().exit_code(), 64);
        // Step not a multiple of Δ.
        let bad_step = dpp_cross_check(
            &field,
            &params,
            &hazard,
            &claims,
            &[ProbePoint { s: 0.5, x: 1.02, w: 0.0 }],
            0.013,
            &family,
            16,
            1,
            0.1,
            0.1,
        );
        assert_eq!(bad_step.unwrap_err().exit_code(), 64);
        // Overshooting the horizon.
        let overshoot = dpp_cross_check(
            &field,
            &params,
            &hazard,
            &claims,
            &[ProbePoint { s: 0.9, x: 1.02, w: 0.0 }],
            0.2,
            &family,
            16,
            1,
            0.1,
            0.1,
        );
        assert_eq!(overshoot.unwrap_err().exit_code(), 64);
        // Empty family.
        let empty = dpp_cross_check(&field, &params, &hazard, &claims, &[], 0.2, &[], 16, 1, 0.1, 0.1);
        assert_eq!(empty.unwrap_err().exit_code(), 64);
    }

    #[test]
    fn reports_serialize_and_render() {
        let (params, hazard, _claims, field) = poisson_setup();
        let report = run_grid_checks(&field, &params, &hazard, field.scheme_tolerance()).unwrap();
        let json = serde_json::to_string_pretty(&report).unwrap();
        let back: PropertyReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        assert!(json.contains("static_bounds"));
    }
}
