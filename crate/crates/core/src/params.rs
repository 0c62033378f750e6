//! Protocol parameter derivation.
//!
//! Everything downstream consumes validated parameter records built here:
//! [`FeParams`] for a frequency-estimation instance, [`BibParams`] for the
//! balls-into-bins mechanism, and [`HhdParams`] for a layered heavy-hitter
//! instance. All derivations are pure functions of their inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Privacy analysis only covers 0 < epsilon <= 3.
pub const MAX_EPSILON: f64 = 3.0;

/// Which frequency-estimation protocol a parameter record drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeVariant {
    /// Small domain: send the input directly, blanket noise with probability rho.
    Fe0,
    /// Large domain: send a hash triple, floor(rho) + Bernoulli blanket noises.
    Fe1,
}

/// Derived constants for one frequency-estimation instance.
///
/// Serialized field names are the wire contract consumed/produced by the CLI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeParams {
    /// Number of users.
    pub n: u64,
    /// Domain size; elements are 1..=B.
    #[serde(rename = "B")]
    pub domain_size: u64,
    /// Bin count of the hash range (FE1). For FE0 this equals the domain size,
    /// which makes the blanket-noise rate formula uniform across variants.
    #[serde(rename = "b")]
    pub bins: u64,
    /// Prime modulus of the hash family, in [B, 2B) (FE1 only; 0 for FE0).
    #[serde(rename = "q")]
    pub prime: u64,
    /// Expected blanket noises per user.
    pub rho: f64,
    /// Pairwise hash collision probability (0 for FE0).
    pub p_col: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// Fraction of users assumed to follow the protocol; rho is scaled by its
    /// inverse so the honest users alone supply the privacy blanket.
    pub gamma_robust: f64,
    pub variant: FeVariant,
}

fn check_privacy_inputs(epsilon: f64, delta: f64, gamma_robust: f64) -> Result<()> {
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
    if !(gamma_robust > 0.0 && gamma_robust <= 1.0) {
        return Err(Error::invalid_parameter(format!(
            "gamma_robust must satisfy 0 < gamma_robust <= 1, got {gamma_robust}"
        )));
    }
    Ok(())
}

impl FeParams {
    /// Build a small-domain (FE0) instance. Fails if the implied noise rate
    /// exceeds 1, in which case FE1 is the supported protocol.
    pub fn fe0(
        n: u64,
        domain_size: u64,
        epsilon: f64,
        delta: f64,
        gamma_robust: f64,
    ) -> Result<Self> {
        if domain_size < 1 {
            return Err(Error::invalid_parameter("domain size B must be >= 1"));
        }
        let rho = blanket_noise_rate(n, domain_size, epsilon, delta, gamma_robust)?;
        if rho > 1.0 {
            return Err(Error::Config(format!(
                "fe0 requires rho <= 1 but rho = {rho:.6}; use the fe1 variant \
                 (hashed large-domain protocol) for these parameters"
            )));
        }
        Ok(FeParams {
            n,
            domain_size,
            bins: domain_size,
            prime: 0,
            rho,
            p_col: 0.0,
            epsilon,
            delta,
            gamma_robust,
            variant: FeVariant::Fe0,
        })
    }

    /// Build a large-domain (FE1) instance with `bins` hash buckets.
    pub fn fe1(
        n: u64,
        domain_size: u64,
        bins: u64,
        epsilon: f64,
        delta: f64,
        gamma_robust: f64,
    ) -> Result<Self> {
        if domain_size > 1 << 32 {
            return Err(Error::invalid_parameter(format!(
                "fe1 supports domains up to 2^32, got B = {domain_size}"
            )));
        }
        if bins < 2 || bins > domain_size / 2 {
            return Err(Error::invalid_parameter(format!(
                "fe1 requires 2 <= b <= B/2, got b = {bins}, B = {domain_size}"
            )));
        }
        let prime = smallest_prime_geq(domain_size)?;
        let p_col = collision_probability(prime, bins)?;
        let rho = blanket_noise_rate(n, bins, epsilon, delta, gamma_robust)?;
        Ok(FeParams {
            n,
            domain_size,
            bins,
            prime,
            rho,
            p_col,
            epsilon,
            delta,
            gamma_robust,
            variant: FeVariant::Fe1,
        })
    }

    /// Expected messages per user: one real output plus rho blanket noises.
    pub fn expected_messages_per_user(&self) -> f64 {
        1.0 + self.rho
    }
}

/// Default bin count for FE1 when the caller does not choose one:
/// `max(2, floor(n / ln^2 n))`, clamped to the valid range `[2, B/2]`.
pub fn default_bins(n: u64, domain_size: u64) -> u64 {
    let ln = (n.max(2) as f64).ln();
    let b = ((n as f64) / (ln * ln)).floor() as u64;
    b.max(2).min((domain_size / 2).max(2))
}

/// Parameters of the balls-into-bins mechanism: one real ball into a special
/// bin among `m` bins, `k` fixed noisy balls, and `n` coin flips of bias `p`
/// each adding a noisy ball.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BibParams {
    pub m: u64,
    pub s: u64,
    pub k: u64,
    pub n: u64,
    pub p: f64,
}

impl BibParams {
    pub fn new(m: u64, s: u64, k: u64, n: u64, p: f64) -> Result<Self> {
        if m < 1 {
            return Err(Error::invalid_parameter("bin count m must be >= 1"));
        }
        if s < 1 || s > m {
            return Err(Error::invalid_parameter(format!(
                "special-bin count must satisfy 1 <= s <= m, got s = {s}, m = {m}"
            )));
        }
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(Error::invalid_parameter(format!(
                "coin bias p must lie in [0, 1], got {p}"
            )));
        }
        Ok(BibParams { m, s, k, n, p })
    }

    /// Expected number of noisy balls, `k + n p`.
    pub fn expected_noise(&self) -> f64 {
        self.k as f64 + self.n as f64 * self.p
    }
}

/// Derived constants for one heavy-hitter detection instance over a
/// power-of-two domain, decomposed into `L = log2 B` prefix layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HhdParams {
    pub n: u64,
    #[serde(rename = "B")]
    pub domain_size: u64,
    /// Shared bin budget; per-layer instances may clamp it (see `layers`).
    #[serde(rename = "b")]
    pub bins: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub gamma_robust: f64,
    /// Heavy-hitter threshold fraction; elements with frequency >= phi*n are heavy.
    pub phi: f64,
    /// Failure probability budget of the detector.
    pub gamma_hh: f64,
    /// Constant in the subsampling rate; the concentration argument needs > 8.
    pub c_sub: f64,
    /// Per-tuple forwarding probability in non-final layers, clamped to (0, 1].
    pub q_sub: f64,
    /// Pruning threshold compared against raw subsampled counts.
    #[serde(rename = "Delta")]
    pub delta_prune: f64,
    /// Final reporting threshold, `phi * n`.
    pub tau: f64,
    /// Layer count, `log2 B`.
    #[serde(rename = "L")]
    pub layer_count: u32,
    /// Per-layer frequency-estimation instances; index l-1 holds layer l over
    /// domain 2^l. Layers with 2^l <= b encode prefixes directly (FE0-style);
    /// larger layers hash (FE1) with the layer prime in [2^l, 2^(l+1)).
    pub layers: Vec<FeParams>,
    /// Non-fatal diagnostics raised during derivation.
    pub warnings: Vec<String>,
}

impl HhdParams {
    /// Derive every constant from the user-facing inputs.
    #[allow(clippy::too_many_arguments)]
    pub fn derive(
        n: u64,
        domain_size: u64,
        bins: u64,
        epsilon: f64,
        delta: f64,
        phi: f64,
        gamma_hh: f64,
        c_sub: f64,
        gamma_robust: f64,
    ) -> Result<Self> {
        if domain_size < 2 || !domain_size.is_power_of_two() {
            return Err(Error::invalid_parameter(format!(
                "domain size B must be a power of two >= 2, got {domain_size}"
            )));
        }
        if domain_size > 1 << 32 {
            return Err(Error::invalid_parameter(format!(
                "hhd supports domains up to 2^32, got B = {domain_size}"
            )));
        }
        if n < 1 {
            return Err(Error::invalid_parameter("user count n must be >= 1"));
        }
        if !(phi > 0.0 && phi < 1.0) {
            return Err(Error::invalid_parameter(format!(
                "phi must satisfy 0 < phi < 1, got {phi}"
            )));
        }
        if !(gamma_hh > 0.0 && gamma_hh < 1.0) {
            return Err(Error::invalid_parameter(format!(
                "gamma_hh must satisfy 0 < gamma_hh < 1, got {gamma_hh}"
            )));
        }
        if !(c_sub > 0.0) || c_sub.is_nan() {
            return Err(Error::invalid_parameter(format!(
                "c_sub must be positive, got {c_sub}"
            )));
        }
        if bins < 2 {
            return Err(Error::invalid_parameter("bin count b must be >= 2"));
        }
        check_privacy_inputs(epsilon, delta, gamma_robust)?;

        let mut warnings = Vec::new();
        if phi * (bins as f64) < 1.0 {
            warnings.push(format!(
                "phi * b = {:.6} < 1: the per-layer candidate-count bound assumes \
                 phi = Omega(1/b) and may not hold",
                phi * bins as f64
            ));
        }

        let layer_count = domain_size.trailing_zeros();
        let q_sub = (c_sub / (phi * n as f64) * (domain_size as f64 / gamma_hh).ln()).min(1.0);
        let delta_prune = q_sub / 2.0 * phi * n as f64;
        let tau = phi * n as f64;

        // Half the budget goes to the final layer, the rest is split evenly
        // over the first L-1 layers.
        let mut layers = Vec::with_capacity(layer_count as usize);
        for layer in 1..=layer_count {
            let (eps_l, delta_l) = if layer == layer_count {
                (epsilon / 2.0, delta / 2.0)
            } else {
                (
                    epsilon / (2.0 * layer_count as f64),
                    delta / (2.0 * layer_count as f64),
                )
            };
            let layer_domain = 1u64 << layer;
            let lp = if layer_domain <= bins {
                // Direct prefix encoding; rho may exceed 1 here, which the
                // layer randomizer supports by sending floor(rho) noises plus
                // a Bernoulli remainder.
                FeParams {
                    n,
                    domain_size: layer_domain,
                    bins: layer_domain,
                    prime: 0,
                    rho: blanket_noise_rate(n, layer_domain, eps_l, delta_l, gamma_robust)?,
                    p_col: 0.0,
                    epsilon: eps_l,
                    delta: delta_l,
                    gamma_robust,
                    variant: FeVariant::Fe0,
                }
            } else {
                // Clamp the shared bin budget so the layer keeps b <= B/2.
                let layer_bins = bins.min(layer_domain / 2);
                let prime = smallest_prime_geq(layer_domain)?;
                FeParams {
                    n,
                    domain_size: layer_domain,
                    bins: layer_bins,
                    prime,
                    rho: blanket_noise_rate(n, layer_bins, eps_l, delta_l, gamma_robust)?,
                    p_col: collision_probability(prime, layer_bins)?,
                    epsilon: eps_l,
                    delta: delta_l,
                    gamma_robust,
                    variant: FeVariant::Fe1,
                }
            };
            layers.push(lp);
        }

        Ok(HhdParams {
            n,
            domain_size,
            bins,
            epsilon,
            delta,
            gamma_robust,
            phi,
            gamma_hh,
            c_sub,
            q_sub,
            delta_prune,
            tau,
            layer_count,
            layers,
            warnings,
        })
    }

    /// Parameter record of layer `l` (1-based).
    pub fn layer(&self, l: u32) -> &FeParams {
        &self.layers[(l - 1) as usize]
    }

    /// Closed-form expected messages per user:
    /// `(1 + rho_L) + q_sub * sum_{l<L} (1 + rho_l)`.
    pub fn expected_messages_per_user(&self) -> f64 {
        let last = self.layers.last().expect("at least one layer");
        let inner: f64 = self.layers[..self.layers.len() - 1]
            .iter()
            .map(|lp| 1.0 + lp.rho)
            .sum();
        (1.0 + last.rho) + self.q_sub * inner
    }
}

/// Smallest prime `q >= B`. Bertrand's postulate guarantees `q < 2B`, which
/// is asserted.
pub fn smallest_prime_geq(lower: u64) -> Result<u64> {
    if lower < 2 {
        return Err(Error::invalid_parameter(format!(
            "prime search requires B >= 2, got {lower}"
        )));
    }
    let mut candidate = lower;
    loop {
        if is_prime(candidate) {
            assert!(
                candidate < 2 * lower,
                "prime search escaped [B, 2B), which contradicts Bertrand's postulate"
            );
            return Ok(candidate);
        }
        candidate += 1;
    }
}

/// Deterministic trial division; fine for the 64-bit desk-scale domains here.
fn is_prime(x: u64) -> bool {
    if x < 2 {
        return false;
    }
    if x % 2 == 0 {
        return x == 2;
    }
    if x % 3 == 0 {
        return x == 3;
    }
    let mut d = 5u64;
    while d * d <= x {
        if x % d == 0 || x % (d + 2) == 0 {
            return false;
        }
        d += 6;
    }
    true
}

/// Expected blanket noises per user:
/// `32 ln(2/delta) / (gamma_robust * epsilon^2) * (domain_or_bins / n)`.
///
/// `domain_or_bins` is the domain size B for FE0 and the bin count b for FE1.
pub fn blanket_noise_rate(
    n: u64,
    domain_or_bins: u64,
    epsilon: f64,
    delta: f64,
    gamma_robust: f64,
) -> Result<f64> {
    check_privacy_inputs(epsilon, delta, gamma_robust)?;
    if n < 1 {
        return Err(Error::invalid_parameter("user count n must be >= 1"));
    }
    Ok(32.0 * (2.0 / delta).ln() / (gamma_robust * epsilon * epsilon)
        * (domain_or_bins as f64 / n as f64))
}

/// Exact pairwise collision probability of the hash family
/// `h_{u,v}(x) = ((u x + v) mod q) mod b` over uniform `(u, v)`:
/// `floor(q/b) * ((q mod b) + q - b) / (q (q - 1))`.
///
/// The value is the same for every pair of distinct inputs.
pub fn collision_probability(q: u64, b: u64) -> Result<f64> {
    if b < 1 || b > q {
        return Err(Error::invalid_parameter(format!(
            "bin count must satisfy 1 <= b <= q, got b = {b}, q = {q}"
        )));
    }
    if !is_prime(q) {
        return Err(Error::invalid_parameter(format!("q = {q} is not prime")));
    }
    let numer = (q / b) as f64 * ((q % b) + q - b) as f64;
    Ok(numer / (q as f64 * (q - 1) as f64))
}

/// Maximum-error bound `alpha` such that the protocol is `(alpha, beta)`
/// accurate. FE1: `2 max(3 ln(2B/beta), sqrt(3 ln(2B/beta) (n/b + 32 ln(2/delta)/eps^2)))`;
/// FE0 drops the factor 2 and the `n/b` term.
pub fn error_bound_alpha(params: &FeParams, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::invalid_parameter(format!(
            "beta must satisfy 0 < beta <= 1, got {beta}"
        )));
    }
    let log_term = 3.0 * (2.0 * params.domain_size as f64 / beta).ln();
    let noise_scale = 32.0 * (2.0 / params.delta).ln() / (params.epsilon * params.epsilon);
    Ok(match params.variant {
        FeVariant::Fe0 => log_term.max((log_term * noise_scale).sqrt()),
        FeVariant::Fe1 => {
            let spread = params.n as f64 / params.bins as f64 + noise_scale;
            2.0 * log_term.max((log_term * spread).sqrt())
        }
    })
}
