//! Numerical toolkit for the finite-horizon singular dividend problem under
//! Sparre Andersen renewal risk.
//!
//! An insurer's surplus earns premiums at rate `p` and pays claims of law `G`
//! whose interarrival times have hazard `λ(w)`, where `w` is the elapsed time
//! since the last claim. The insurer may pay dividends — including lump sums —
//! and seeks to maximize the expected discounted payout up to a horizon `T`,
//! receiving the terminal surplus if it survives. Because the waiting times
//! need not be exponential, the pair `(surplus, elapsed time since last
//! claim)` is the Markov state, and the value function `V(s, x, w)` lives on
//! the triangular domain `0 ≤ w ≤ s ≤ T`, `x ≥ 0`.
//!
//! The toolkit has three legs that check each other:
//!
//! - **Simulation** ([`paths`], [`montecarlo`]): exact event-driven paths
//!   under explicit dividend strategies, with reproducible, thread-count
//!   independent Monte Carlo valuation.
//! - **PDE solver** ([`hjbgrid`]): an explicit monotone finite-difference
//!   scheme for the variational inequality
//!   `max{1 − V_x, 𝓛[V]} = 0`, `V(T, x, w) = x`,
//!   on the triangular grid, plus analytic growth envelopes.
//! - **Verification** ([`verify`]): structural properties of the value
//!   function — bounds, monotonicity, Lipschitz regularity, a renewal
//!   inequality, and a Monte Carlo dynamic-programming cross-check — run
//!   against solved fields and reported check by check.
//!
//! The [`cli`] module packages the three legs behind a `sadiv` binary driven
//! by a single JSON configuration.
//!
//! # Quick start
//!
//! Value a liquidate-now strategy by simulation and compare with the
//! closed form `x + (1 − e^{−cT})/c` for the deterministic annuity that
//! remains after paying out the initial surplus:
//!
//! ```
//! use sadiv::model::{ClaimDistribution, HazardFunction, ModelParams, ValidationMode};
//! use sadiv::montecarlo::estimate_value;
//! use sadiv::paths::Strategy;
//!
//! // A degenerate model with no claims at all: λ ≡ 0.
//! let params = ModelParams::with_mode(1.0, 0.05, 1.0, 0.0, ValidationMode::Degenerate).unwrap();
//! let hazard = HazardFunction::Constant { rate: 0.0 };
//! let claims = ClaimDistribution::Exponential { mean: 1.0 };
//!
//! let est = estimate_value(
//!     &params, &hazard, &claims, &Strategy::LiquidateNow,
//!     0.0, 2.0, 0.0, // start at s = 0 with surplus x = 2, elapsed time w = 0
//!     64, 7,         // paths, master seed
//! ).unwrap();
//!
//! let closed_form = 2.0 + (1.0 - (-0.05f64).exp()) / 0.05;
//! assert!((est.mean - closed_form).abs() < 1e-12); // deterministic: zero variance
//! assert_eq!(est.stderr, 0.0);
//! ```
//!
//! Solve the variational inequality for a Poisson model and read the value
//! surface:
//!
//! ```
//! use sadiv::hjbgrid::{solve_vi, GridSpec};
//! use sadiv::model::{ClaimDistribution, HazardFunction, ModelParams};
//!
//! let params = ModelParams::new(1.0, 0.05, 1.0, 1.0).unwrap();
//! let hazard = HazardFunction::Constant { rate: 1.0 };
//! let claims = ClaimDistribution::Exponential { mean: 1.0 };
//! let spec = GridSpec { n_s: 50, n_x: 50, x_max: 3.0 };
//!
//! let field = solve_vi(&spec, &params, &hazard, &claims).unwrap();
//! let v = field.value_at(0.5, 1.0, 0.2);
//! assert!(v >= 1.0 && v <= 1.0 + 0.5); // x ≤ V ≤ x + p(T − s)
//! ```

pub mod error;
pub mod model;
pub mod paths;
pub mod montecarlo;
pub mod hjbgrid;
pub mod verify;
pub mod cli;

pub use error::{Error, Result};
pub use hjbgrid::{
    extract_free_boundary, generator_apply, residual_check, solve_vi, AnalyticBounds, FreeBoundaryPoint, GridSpec,
    ResidualReport, ValueField,
};
pub use model::{ClaimDistribution, HazardFunction, ModelParams, ValidationMode};
pub use montecarlo::{estimate_value, merge_estimates, EstimateWithCI};
pub use paths::{simulate_path, BarrierLevel, PathRecord, Strategy};
pub use verify::{dpp_cross_check, run_grid_checks, CheckResult, ProbePoint, PropertyReport};

// The guide chapters double as compiled examples: every fenced Rust block in
// the book is run as a doc-test of this crate.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/monte-carlo.md")]
    mod monte_carlo {}
    #[doc = include_str!("../../../book/src/hjb-solver.md")]
    mod hjb_solver {}
    #[doc = include_str!("../../../book/src/bounds-and-checks.md")]
    mod bounds_and_checks {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
