//! Monte Carlo estimation of a strategy's value
//! `J(s,x,w;π) = E[∫ e^{−c(t−s)} dL_t]` with confidence intervals and a
//! deterministic parallel reduction.
//!
//! Each path owns an RNG seeded by a counter-based hash of
//! `(master_seed, path_index)`, so path `i` draws the same stream no matter
//! which worker runs it or in what order. Samples are collected in path-index
//! order and reduced sequentially with compensated summation, which makes the
//! estimate **bitwise independent of the thread count** — the reproducibility
//! contract the acceptance checks pin down.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClaimDistribution, HazardFunction, ModelParams};
use crate::paths::{simulate_path, Strategy};

/// A mean with its Monte Carlo error bars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    /// Sample mean of the discounted dividend stream.
    pub mean: f64,
    /// Standard error: sample standard deviation / √n_paths.
    pub stderr: f64,
    /// Number of simulated paths.
    pub n_paths: u64,
    /// `mean − 1.96·stderr`.
    pub ci95_low: f64,
    /// `mean + 1.96·stderr`.
    pub ci95_high: f64,
    /// The master seed the paths were derived from.
    pub seed: u64,
    /// First path index of this estimate's range (0 for a whole run; workers
    /// splitting a run use disjoint ranges, which [`merge_estimates`] checks).
    pub path_start: u64,
}

/// Derive the 32-byte RNG seed for one path from `(master_seed, path_index)`.
///
/// The derivation (a SplitMix64 chain keyed by both inputs) is part of the
/// reproducibility contract: estimates published for a given master seed stay
/// valid across releases.
pub fn path_seed(master_seed: u64, path_index: u64) -> [u8; 32] {
    fn splitmix64(state: &mut u64) {
        *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        *state = z ^ (z >> 31);
    }
    let mut state = master_seed ^ path_index.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(31);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        splitmix64(&mut state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    seed
}

/// Compensated (Kahan) sum of a slice, used so the reduction does not depend
/// on how work was distributed.
fn kahan_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0f64;
    for &v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

fn summarize(samples: &[f64], master_seed: u64, path_start: u64) -> EstimateWithCI {
    let n = samples.len();
    let mean = kahan_sum(samples) / n as f64;
    let squared: Vec<f64> = samples.iter().map(|&v| (v - mean) * (v - mean)).collect();
    let m2 = kahan_sum(&squared);
    let stderr = (m2 / (n as f64 - 1.0) / n as f64).sqrt();
    EstimateWithCI {
        mean,
        stderr,
        n_paths: n as u64,
        ci95_low: mean - 1.96 * stderr,
        ci95_high: mean + 1.96 * stderr,
        seed: master_seed,
        path_start,
    }
}

/// Run `n_paths` independent replications of an arbitrary per-path functional
/// and summarize them. `f` receives the path index and that path's own RNG.
///
/// This is the generic engine behind [`estimate_value`]; verification code
/// reuses it for functionals other than the plain discounted dividend sum
/// (e.g. the dynamic-programming one-step composition).
///
/// # Errors
/// Configuration error if `n_paths < 2`; any error raised by `f` is
/// propagated (the first one in path-index order).
pub fn estimate_with<F>(n_paths: u64, master_seed: u64, path_start: u64, f: F) -> Result<EstimateWithCI>
where
    F: Fn(u64, &mut ChaCha8Rng) -> Result<f64> + Sync,
{
    if n_paths < 2 {
        return Err(Error::Config(format!(
            "need at least 2 paths for a standard error, got {n_paths}"
        )));
    }
    let samples: Vec<Result<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|offset| {
            let index = path_start + offset;
            let mut rng = ChaCha8Rng::from_seed(path_seed(master_seed, index));
            f(index, &mut rng)
        })
        .collect();
    let mut values = Vec::with_capacity(samples.len());
    for sample in samples {
        values.push(sample?);
    }
    Ok(summarize(&values, master_seed, path_start))
}

/// Estimate the strategy value `J(s,x,w;π)` from `n_paths` simulated paths.
///
/// # Errors
/// Configuration error if `n_paths < 2` or the strategy data is invalid;
/// domain error if `(s,x,w)` is outside `0 ≤ w ≤ s ≤ T`, `x ≥ 0`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_value(
    params: &ModelParams,
    hazard: &HazardFunction,
    claims: &ClaimDistribution,
    strategy: &Strategy,
    s: f64,
    x: f64,
    w: f64,
    n_paths: u64,
    master_seed: u64,
) -> Result<EstimateWithCI> {
    estimate_value_range(params, hazard, claims, strategy, s, x, w, n_paths, master_seed, 0)
}

/// [`estimate_value`] over an explicit path-index range
/// `[path_start, path_start + n_paths)` — the worker-shard form whose results
/// [`merge_estimates`] can pool back together.
#[allow(clippy::too_many_arguments)]
pub fn estimate_value_range(
    params: &ModelParams,
    hazard: &HazardFunction,
    claims: &ClaimDistribution,
    strategy: &Strategy,
    s: f64,
    x: f64,
    w: f64,
    n_paths: u64,
    master_seed: u64,
    path_start: u64,
) -> Result<EstimateWithCI> {
    estimate_with(n_paths, master_seed, path_start, |_, rng| {
        Ok(simulate_path(params, hazard, claims, strategy, s, x, w, rng)?.discounted_dividends)
    })
}

/// Pool worker estimates over disjoint path ranges into the estimate a single
/// run over the union would have produced (means agree to well under 1e−12;
/// variances are pooled by the standard pairwise-merge identity).
///
/// # Errors
/// Configuration error if `parts` is empty, the master seeds differ, or the
/// path-index ranges overlap.
pub fn merge_estimates(parts: &[EstimateWithCI]) -> Result<EstimateWithCI> {
    if parts.is_empty() {
        return Err(Error::Config("cannot merge an empty set of estimates".into()));
    }
    let seed = parts[0].seed;
    if parts.iter().any(|p| p.seed != seed) {
        return Err(Error::Config("estimates to merge come from different master seeds".into()));
    }
    let mut ranges: Vec<(u64, u64)> = parts.iter().map(|p| (p.path_start, p.path_start + p.n_paths)).collect();
    ranges.sort_unstable();
    for pair in ranges.windows(2) {
        if pair[1].0 < pair[0].1 {
            return Err(Error::Config(format!(
                "estimates to merge overlap on path indices [{}, {})",
                pair[1].0,
                pair[0].1.min(pair[1].1)
            )));
        }
    }

    let mut n = parts[0].n_paths as f64;
    let mut mean = parts[0].mean;
    let mut m2 = parts[0].stderr * parts[0].stderr * n * (n - 1.0);
    for part in &parts[1..] {
        let nb = part.n_paths as f64;
        let m2b = part.stderr * part.stderr * nb * (nb - 1.0);
        let delta = part.mean - mean;
        let total = n + nb;
        mean += delta * nb / total;
        m2 += m2b + delta * delta * n * nb / total;
        n = total;
    }
    let stderr = (m2 / (n - 1.0) / n).sqrt();
    Ok(EstimateWithCI {
        mean,
        stderr,
        n_paths: n as u64,
        ci95_low: mean - 1.96 * stderr,
        ci95_high: mean + 1.96 * stderr,
        seed,
        path_start: ranges[0].0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ValidationMode;
    use crate::paths::BarrierLevel;

    fn poisson_unit() -> (ModelParams, HazardFunction, ClaimDistribution) {
        let params = ModelParams::new(1.0, 0.05, 1.0, 1.0).unwrap();
        let hazard = HazardFunction::Constant { rate: 1.0 };
        let claims = ClaimDistribution::Exponential { mean: 1.0 };
        (params, hazard, claims)
    }

    #[test]
    fn deterministic_paths_produce_zero_stderr() {
        // Without claims, LiquidateNow is the same sample every time.
        let params = ModelParams::with_mode(1.0, 0.05, 1.0, 0.0, ValidationMode::Degenerate).unwrap();
        let hazard = HazardFunction::Constant { rate: 0.0 };
        let claims = ClaimDistribution::Exponential { mean: 1.0 };
        let est =
            estimate_value(&params, &hazard, &claims, &Strategy::LiquidateNow, 0.0, 2.0, 0.0, 64, 7).unwrap();
        let expected = 2.0 + (1.0 - (-0.05f64).exp()) / 0.05;
        assert!((est.mean - expected).abs() < 1e-12);
        assert_eq!(est.stderr, 0.0);
        assert_eq!(est.ci95_low, est.mean);
        assert_eq!(est.ci95_high, est.mean);
    }

    #[test]
    fn immediate_liquidation_matches_the_poisson_closed_form() {
        // Lump x, then skim p until the first claim ruins the zero surplus:
        // J = x + p(1 − e^{−(λ+c)T})/(λ+c) for constant hazard λ.
        let (params, hazard, claims) = poisson_unit();
        let est = estimate_value(
            &params,
            &hazard,
            &claims,
            &Strategy::LiquidateNow,
            0.0,
            2.0,
            0.0,
            20_000,
            20_240_818,
        )
        .unwrap();
        let rate: f64 = 1.0 + 0.05;
        let expected = 2.0 + (1.0 - (-rate).exp()) / rate;
        assert!(
            (est.mean - expected).abs() < 4.0 * est.stderr,
            "estimate {} ± {} vs closed form {expected}",
            est.mean,
            est.stderr
        );
        assert!(est.stderr > 0.0 && est.stderr < 0.01);
    }

    #[test]
    fn estimates_are_independent_of_the_thread_count() {
        let (params, hazard, claims) = poisson_unit();
        let strat = Strategy::Barrier {
            level: BarrierLevel::Constant { level: 0.5 },
        };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                estimate_value(&params, &hazard, &claims, &strat, 0.0, 1.0, 0.0, 4_000, 99).unwrap()
            })
        };
        let single = run(1);
        let several = run(8);
        assert_eq!(single.mean.to_bits(), several.mean.to_bits());
        assert_eq!(single.stderr.to_bits(), several.stderr.to_bits());
    }

    #[test]
    fn merged_shards_match_the_monolithic_run() {
        let (params, hazard, claims) = poisson_unit();
        let strat = Strategy::Barrier {
            level: BarrierLevel::Constant { level: 1.0 },
        };
        let whole =
            estimate_value(&params, &hazard, &claims, &strat, 0.0, 2.0, 0.0, 4_000, 1234).unwrap();
        let shards: Vec<EstimateWithCI> = (0..4)
            .map(|k| {
                estimate_value_range(
                    &params, &hazard, &claims, &strat, 0.0, 2.0, 0.0, 1_000, 1234, 1_000 * k,
                )
                .unwrap()
            })
            .collect();
        let merged = merge_estimates(&shards).unwrap();
        assert_eq!(merged.n_paths, whole.n_paths);
        assert!((merged.mean - whole.mean).abs() < 1e-12);
        assert!((merged.stderr - whole.stderr).abs() < 1e-12);
    }

    #[test]
    fn merge_rejects_overlap_and_identity_merges_pass_through() {
        let (params, hazard, claims) = poisson_unit();
        let strat = Strategy::PayAllAtT;
        let est = estimate_value(&params, &hazard, &claims, &strat, 0.0, 1.0, 0.0, 100, 5).unwrap();
        let single = merge_estimates(std::slice::from_ref(&est)).unwrap();
        assert_eq!(single, est);
        // Overlapping ranges must be rejected.
        let err = merge_estimates(&[est, est]).unwrap_err();
        assert_eq!(err.exit_code(), 64);
        assert!(merge_estimates(&[]).is_err());
        // Balanced pooling of two equal-size parts averages the means.
        let a = EstimateWithCI { mean: 1.0, stderr: 0.1, n_paths: 100, ci95_low: 0.0, ci95_high: 0.0, seed: 5, path_start: 0 };
        let b = EstimateWithCI { mean: 3.0, stderr: 0.1, n_paths: 100, ci95_low: 0.0, ci95_high: 0.0, seed: 5, path_start: 100 };
        let pooled = merge_estimates(&[a, b]).unwrap();
        assert!((pooled.mean - 2.0).abs() < 1e-15);
    }

    #[test]
    fn richer_companies_are_worth_more_under_coupled_paths() {
        let (params, hazard, claims) = poisson_unit();
        let strat = Strategy::Barrier {
            level: BarrierLevel::Constant { level: 1.0 },
        };
        let hi = estimate_value(&params, &hazard, &claims, &strat, 0.0, 2.0, 0.0, 2_000, 31).unwrap();
        let lo = estimate_value(&params, &hazard, &claims, &strat, 0.0, 1.5, 0.0, 2_000, 31).unwrap();
        assert!(hi.mean >= lo.mean - 3.0 * (hi.stderr + lo.stderr));
    }

    #[test]
    fn too_few_paths_is_a_configuration_error() {
        let (params, hazard, claims) = poisson_unit();
        let err =
            estimate_value(&params, &hazard, &claims, &Strategy::NoDividend, 0.0, 1.0, 0.0, 1, 0).unwrap_err();
        assert_eq!(err.exit_code(), 64);
    }

    #[test]
    fn path_seeds_are_distinct_across_indices_and_masters() {
        let mut seen = std::collections::HashSet::new();
        for master in 0..8u64 {
            for index in 0..64u64 {
                assert!(seen.insert(path_seed(master, index)), "seed collision at ({master}, {index})");
            }
        }
    }
}
