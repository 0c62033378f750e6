//! The balls-into-bins mechanism and its privacy-audit engine.
//!
//! The mechanism throws one real ball into a uniformly chosen special bin,
//! `k` noisy balls into uniform bins, and one more noisy ball per head of
//! `n` coins of bias `p`. The audit engine checks the defining likelihood
//! ratio inequality in two modes: `exact` convolves the binomial mass
//! functions of the special-bin noise counts, `monte-carlo` samples the
//! mechanism and evaluates the closed-form ratio per outcome.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::params::{BibParams, MAX_EPSILON};
use crate::rng::{substream, StreamDomain};

/// Exact convolution is quadratic in `k + n`; beyond this cap the caller is
/// directed to the Monte Carlo mode.
pub const EXACT_MODE_CAP: u64 = 10_000;

/// Relative slack used when comparing floating-point quantities that are
/// mathematically equal on the boundary (e.g. `n*rho` against the closed-form
/// noise requirement, or a ratio exactly equal to `e^eps`).
const BOUNDARY_SLACK: f64 = 1e-12;

/// Per-bin ball counts of one mechanism output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinLoadVector {
    loads: Vec<u64>,
}

impl BinLoadVector {
    /// Tally a multiset of 1-based bin indices into per-bin loads.
    pub fn from_multiset(balls: &[u64], m: u64) -> Result<Self> {
        let mut loads = vec![0u64; m as usize];
        for &ball in balls {
            if ball < 1 || ball > m {
                return Err(Error::invalid_input(format!(
                    "ball landed in bin {ball}, outside 1..={m}"
                )));
            }
            loads[(ball - 1) as usize] += 1;
        }
        Ok(BinLoadVector { loads })
    }

    pub fn load(&self, bin: u64) -> u64 {
        self.loads[(bin - 1) as usize]
    }

    pub fn total(&self) -> u64 {
        self.loads.iter().sum()
    }

    /// Total load over a set of bins; the likelihood-ratio numerator or
    /// denominator of the audit.
    pub fn sum_over(&self, bins: &[u64]) -> u64 {
        bins.iter().map(|&b| self.load(b)).sum()
    }
}

fn validate_special_set(params: &BibParams, special: &[u64]) -> Result<()> {
    if special.len() as u64 != params.s {
        return Err(Error::invalid_input(format!(
            "special set has {} bins but s = {}",
            special.len(),
            params.s
        )));
    }
    let mut seen = std::collections::BTreeSet::new();
    for &bin in special {
        if bin < 1 || bin > params.m {
            return Err(Error::invalid_input(format!(
                "special bin {bin} outside 1..={}",
                params.m
            )));
        }
        if !seen.insert(bin) {
            return Err(Error::invalid_input(format!("duplicate special bin {bin}")));
        }
    }
    Ok(())
}

/// Sample a binomial count; `rand_distr` rejects the degenerate biases, so
/// handle them first.
pub(crate) fn binomial_count(n: u64, p: f64, rng: &mut impl Rng) -> u64 {
    if n == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("validated bias").sample(rng)
    }
}

/// Run the mechanism once, returning the multiset of 1-based bin indices.
pub fn mechanism(params: &BibParams, special: &[u64], rng: &mut impl Rng) -> Result<Vec<u64>> {
    validate_special_set(params, special)?;
    let heads = binomial_count(params.n, params.p, rng);
    let mut out = Vec::with_capacity(1 + params.k as usize + heads as usize);
    out.push(special[rng.gen_range(0..special.len())]);
    for _ in 0..params.k + heads {
        out.push(rng.gen_range(1..=params.m));
    }
    Ok(out)
}

/// Sufficient condition for `(epsilon, delta)` privacy:
/// `k + n p >= 32 ln(2/delta) / epsilon^2 * m / s`.
pub fn check_privacy_condition(params: &BibParams, epsilon: f64, delta: f64) -> Result<bool> {
    if !(epsilon > 0.0 && epsilon <= MAX_EPSILON) {
        return Err(Error::invalid_parameter(format!(
            "epsilon must satisfy 0 < epsilon <= {MAX_EPSILON}, got {epsilon}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid_parameter(format!(
            "delta must satisfy 0 < delta < 1, got {delta}"
        )));
    }
    let required = 32.0 * (2.0 / delta).ln() / (epsilon * epsilon)
        * (params.m as f64 / params.s as f64);
    // The slack keeps boundary configurations (noise exactly at the closed
    // form) from flipping on the last ulp.
    Ok(params.expected_noise() >= required * (1.0 - BOUNDARY_SLACK))
}

/// Probability mass function of `Bin(k, p1) + Bin(n, p2)` on `0..=k+n`,
/// computed by convolving the two binomial pmfs.
fn noise_count_pmf(params: &BibParams) -> Vec<f64> {
    let frac = params.s as f64 / params.m as f64;
    let a = binomial_pmf(params.k, frac);
    let b = binomial_pmf(params.n, params.p * frac);
    let mut out = vec![0.0f64; a.len() + b.len() - 1];
    for (i, &pa) in a.iter().enumerate() {
        if pa == 0.0 {
            continue;
        }
        for (j, &pb) in b.iter().enumerate() {
            out[i + j] += pa * pb;
        }
    }
    out
}

/// Binomial pmf over the full support, evaluated in log space to avoid
/// under/overflow in the factorials.
fn binomial_pmf(n: u64, p: f64) -> Vec<f64> {
    if n == 0 {
        return vec![1.0];
    }
    if p <= 0.0 {
        let mut v = vec![0.0; n as usize + 1];
        v[0] = 1.0;
        return v;
    }
    if p >= 1.0 {
        let mut v = vec![0.0; n as usize + 1];
        v[n as usize] = 1.0;
        return v;
    }
    let dist = statrs::distribution::Binomial::new(p, n).expect("validated bias");
    use statrs::distribution::Discrete;
    (0..=n).map(|x| dist.ln_pmf(x).exp()).collect()
}

/// Exact `Pr[(1 + X1) / X2 >= e^epsilon]` where `X1, X2` are independent
/// copies of the special-bin noise count `Bin(k, s/m) + Bin(n, p s/m)`.
/// `X2 = 0` makes the ratio infinite and counts as a failure.
pub fn exact_privacy_failure(params: &BibParams, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid_parameter(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    if params.k + params.n > EXACT_MODE_CAP {
        return Err(Error::SizeLimit(format!(
            "exact mode supports k + n <= {EXACT_MODE_CAP}, got {}; use the \
             monte-carlo mode instead",
            params.k + params.n
        )));
    }
    let pmf = noise_count_pmf(params);
    // Suffix sums accumulated from the far tail for accuracy.
    let mut suffix = vec![0.0f64; pmf.len() + 1];
    for i in (0..pmf.len()).rev() {
        suffix[i] = suffix[i + 1] + pmf[i];
    }
    let e_eps = epsilon.exp();
    let mut failure = pmf[0]; // X2 = 0: infinite ratio.
    for x2 in 1..pmf.len() {
        if pmf[x2] == 0.0 {
            continue;
        }
        // Failure iff 1 + x1 >= e^eps * x2, with slack so that ratios exactly
        // equal to e^eps stay inclusive under rounding.
        let threshold = e_eps * x2 as f64 * (1.0 - BOUNDARY_SLACK);
        let x1_min = (threshold - 1.0).ceil().max(0.0) as usize;
        if x1_min < pmf.len() {
            failure += pmf[x2] * suffix[x1_min];
        }
    }
    Ok(failure.min(1.0))
}

/// How the failure probability was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuditMode {
    #[serde(rename = "exact")]
    Exact,
    #[serde(rename = "monte-carlo")]
    MonteCarlo,
}

/// Result of a privacy audit: the estimated (or exact) probability that the
/// likelihood ratio between neighboring inputs reaches `e^epsilon`, next to
/// the `delta` it is being checked against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyAuditReport {
    pub mode: AuditMode,
    pub failure_probability: f64,
    pub delta_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standard_error: Option<f64>,
}

impl PrivacyAuditReport {
    pub fn exact(params: &BibParams, epsilon: f64, delta: f64) -> Result<Self> {
        Ok(PrivacyAuditReport {
            mode: AuditMode::Exact,
            failure_probability: exact_privacy_failure(params, epsilon)?,
            delta_bound: delta,
            trials: None,
            standard_error: None,
        })
    }
}

/// Sample the likelihood ratio `sum_{i in S} w_i / sum_{i in S'} w_i` under
/// `W ~ M(S)` and report how often it reaches `e^epsilon`. A zero denominator
/// counts as a failure. Trials run on independent substreams of `seed`, so
/// the report does not depend on the parallelism degree.
pub fn monte_carlo_privacy_loss(
    params: &BibParams,
    special: &[u64],
    special_prime: &[u64],
    epsilon: f64,
    delta: f64,
    trials: u64,
    seed: u64,
) -> Result<PrivacyAuditReport> {
    validate_special_set(params, special)?;
    validate_special_set(params, special_prime)?;
    if special_prime.len() != special.len() {
        return Err(Error::invalid_input(
            "neighboring special sets must have equal size",
        ));
    }
    let overlap = {
        let s: std::collections::BTreeSet<u64> = special.iter().copied().collect();
        special_prime.iter().filter(|b| s.contains(b)).count() as u64
    };
    monte_carlo_privacy_loss_overlap(params, overlap, epsilon, delta, trials, seed)
}

/// Overlap-parametrized Monte Carlo audit.
///
/// The ratio statistic depends on the special sets only through their
/// memberships, so it is enough to know `|S intersect S'|`. Each ball draws
/// one uniform index in `[m]` partitioned as
/// `[both | S only | S' only | neither]`, which reproduces the exact joint
/// membership law of a uniform ball. This form also audits instances whose
/// structured special sets are too large to enumerate.
pub fn monte_carlo_privacy_loss_overlap(
    params: &BibParams,
    overlap: u64,
    epsilon: f64,
    delta: f64,
    trials: u64,
    seed: u64,
) -> Result<PrivacyAuditReport> {
    if trials < 1 {
        return Err(Error::invalid_parameter("trials must be >= 1"));
    }
    if overlap > params.s || 2 * params.s - overlap > params.m {
        return Err(Error::invalid_input(format!(
            "overlap {overlap} impossible for s = {}, m = {}",
            params.s, params.m
        )));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid_parameter(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    let e_eps_guard = epsilon.exp() * (1.0 - BOUNDARY_SLACK);
    let p = *params;
    let failures: Vec<u32> = exec::map_indexed(trials as usize, |trial| {
        let mut rng = substream(seed, StreamDomain::Audit, 0, trial as u64);
        let fail = sample_ratio_failure(&p, overlap, e_eps_guard, &mut rng);
        fail as u32
    });
    let fail_count: u64 = failures.iter().map(|&f| f as u64).sum();
    let p_hat = fail_count as f64 / trials as f64;
    let se = (p_hat * (1.0 - p_hat) / trials as f64).sqrt();
    Ok(PrivacyAuditReport {
        mode: AuditMode::MonteCarlo,
        failure_probability: p_hat,
        delta_bound: delta,
        trials: Some(trials),
        standard_error: Some(se),
    })
}

/// One trial: run the mechanism with input S, compute whether the ratio
/// reaches the (slack-guarded) threshold.
fn sample_ratio_failure(
    params: &BibParams,
    overlap: u64,
    e_eps_guard: f64,
    rng: &mut impl Rng,
) -> bool {
    let s = params.s;
    // Real ball: uniform over S; it lies in S' iff it falls in the overlap.
    let mut numerator: u64 = 1;
    let mut denominator: u64 = (rng.gen_range(0..s) < overlap) as u64;
    let noisy = params.k + binomial_count(params.n, params.p, rng);
    let s_only_end = s; // [0, overlap) both, [overlap, s) S only
    let sp_only_end = 2 * s - overlap; // [s, 2s-overlap) S' only
    for _ in 0..noisy {
        let idx = rng.gen_range(0..params.m);
        if idx < s_only_end {
            numerator += 1;
            if idx < overlap {
                denominator += 1;
            }
        } else if idx < sp_only_end {
            denominator += 1;
        }
    }
    if denominator == 0 {
        return true;
    }
    numerator as f64 >= e_eps_guard * denominator as f64
}
