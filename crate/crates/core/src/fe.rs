//! Frequency estimation in the shuffle model.
//!
//! Two protocols share this module. The small-domain protocol (FE0) sends the
//! input itself plus, with probability `rho`, one uniform blanket noise. The
//! large-domain protocol (FE1) sends one hash triple `(u, v, h_{u,v}(x))`
//! plus `floor(rho)` uniform noise triples and one more with probability
//! `rho - floor(rho)`. Analyzers count matching messages and undo the noise
//! and collision bias; estimates are intentionally not clamped so they stay
//! unbiased.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::params::{BibParams, FeParams, FeVariant};

/// One small-domain message: a domain element in `1..=B`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fe0Message {
    pub value: u64,
}

/// One large-domain message: hash descriptor `(u, v)` with the hashed bin `w`.
/// `u` lies in `1..=q-1`, `v` in `0..=q-1`, `w` in `0..=b-1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fe1Message {
    pub u: u64,
    pub v: u64,
    pub w: u64,
}

/// The analyzer's entire view: an unordered multiset of homogeneous messages.
/// Analyzers never depend on the backing order; serialization applies a
/// uniform random permutation under the run's seed.
#[derive(Clone, Debug, PartialEq)]
pub struct MessageBag<M> {
    messages: Vec<M>,
}

impl<M> MessageBag<M> {
    pub fn new() -> Self {
        MessageBag { messages: Vec::new() }
    }

    pub fn from_messages(messages: Vec<M>) -> Self {
        MessageBag { messages }
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, M> {
        self.messages.iter()
    }

    pub fn as_slice(&self) -> &[M] {
        &self.messages
    }

    pub fn into_messages(self) -> Vec<M> {
        self.messages
    }
}

impl<M> Default for MessageBag<M> {
    fn default() -> Self {
        Self::new()
    }
}

impl<M> From<Vec<M>> for MessageBag<M> {
    fn from(messages: Vec<M>) -> Self {
        MessageBag { messages }
    }
}

/// An estimated frequency; may be negative because the bias correction is
/// subtracted from a small count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEstimate {
    pub element: u64,
    pub estimate: f64,
}

fn check_element(x: u64, params: &FeParams) -> Result<()> {
    if x < 1 || x > params.domain_size {
        return Err(Error::invalid_input(format!(
            "element {x} outside domain 1..={}",
            params.domain_size
        )));
    }
    Ok(())
}

/// FE0 randomizer: the real input, plus one uniform blanket noise with
/// probability `rho`. Requires `rho <= 1`.
pub fn randomize_fe0(x: u64, params: &FeParams, rng: &mut impl Rng) -> Result<Vec<Fe0Message>> {
    check_element(x, params)?;
    if params.variant != FeVariant::Fe0 {
        return Err(Error::Config("randomize_fe0 requires fe0 params".into()));
    }
    if params.rho > 1.0 {
        return Err(Error::Config(format!(
            "fe0 requires rho <= 1 but rho = {:.6}; use the fe1 variant for \
             these parameters",
            params.rho
        )));
    }
    let mut out = Vec::with_capacity(2);
    out.push(Fe0Message { value: x });
    if params.rho > 0.0 && rng.gen::<f64>() < params.rho {
        out.push(Fe0Message {
            value: rng.gen_range(1..=params.domain_size),
        });
    }
    Ok(out)
}

/// FE0 analyzer: `g_hat = count(x) - n * rho / B`.
pub fn analyze_fe0(bag: &MessageBag<Fe0Message>, params: &FeParams, x: u64) -> FrequencyEstimate {
    let count = bag.iter().filter(|m| m.value == x).count() as u64;
    FrequencyEstimate {
        element: x,
        estimate: fe0_corrected(count, params),
    }
}

/// FE0 analyzer for all elements at once; one counting pass, then the same
/// correction as the single-element analyzer, so results are bit-identical.
pub fn analyze_fe0_all(bag: &MessageBag<Fe0Message>, params: &FeParams) -> Vec<FrequencyEstimate> {
    let counts = exec::accumulate_counts(
        bag.as_slice(),
        params.domain_size as usize + 1,
        |m, counts| counts[m.value as usize] += 1,
    );
    (1..=params.domain_size)
        .map(|x| FrequencyEstimate {
            element: x,
            estimate: fe0_corrected(counts[x as usize], params),
        })
        .collect()
}

fn fe0_corrected(count: u64, params: &FeParams) -> f64 {
    count as f64 - params.n as f64 * params.rho / params.domain_size as f64
}

/// The hash family `h_{u,v}(x) = ((u x + v) mod q) mod b`.
///
/// Arguments are range-checked; arithmetic runs in 128 bits. Domains above
/// 2^32 are rejected so the intermediate product stays far from overflow.
pub fn hash_eval(u: u64, v: u64, x: u64, q: u64, b: u64) -> Result<u64> {
    if q < 2 || q > 1 << 33 {
        return Err(Error::invalid_input(format!(
            "prime modulus q = {q} outside supported range"
        )));
    }
    if u < 1 || u >= q {
        return Err(Error::invalid_input(format!("u = {u} outside 1..={}", q - 1)));
    }
    if v >= q {
        return Err(Error::invalid_input(format!("v = {v} outside 0..={}", q - 1)));
    }
    if x < 1 || x > q {
        return Err(Error::invalid_input(format!("x = {x} outside 1..={q}")));
    }
    if b < 1 || b > q {
        return Err(Error::invalid_input(format!("b = {b} outside 1..={q}")));
    }
    Ok(hash_eval_unchecked(u, v, x, q, b))
}

#[inline]
pub(crate) fn hash_eval_unchecked(u: u64, v: u64, x: u64, q: u64, b: u64) -> u64 {
    (((u as u128 * x as u128 + v as u128) % q as u128) % b as u128) as u64
}

/// FE1 randomizer: one real triple hashing the input, `floor(rho)` uniform
/// noise triples, and one more noise triple with probability
/// `rho - floor(rho)`.
pub fn randomize_fe1(x: u64, params: &FeParams, rng: &mut impl Rng) -> Result<Vec<Fe1Message>> {
    check_element(x, params)?;
    if params.variant != FeVariant::Fe1 {
        return Err(Error::Config("randomize_fe1 requires fe1 params".into()));
    }
    let q = params.prime;
    let noise_floor = params.rho.floor();
    let mut out = Vec::with_capacity(1 + noise_floor as usize + 1);
    let u = rng.gen_range(1..q);
    let v = rng.gen_range(0..q);
    out.push(Fe1Message {
        u,
        v,
        w: hash_eval_unchecked(u, v, x, q, params.bins),
    });
    let extra = (params.rho - noise_floor > 0.0
        && rng.gen::<f64>() < params.rho - noise_floor) as u64;
    for _ in 0..noise_floor as u64 + extra {
        out.push(uniform_fe1_noise(q, params.bins, rng));
    }
    Ok(out)
}

#[inline]
pub(crate) fn uniform_fe1_noise(q: u64, bins: u64, rng: &mut impl Rng) -> Fe1Message {
    Fe1Message {
        u: rng.gen_range(1..q),
        v: rng.gen_range(0..q),
        w: rng.gen_range(0..bins),
    }
}

/// FE1 single-element analyzer:
/// `g_hat = (X - n rho / b - n p_col) / (1 - p_col)` where `X` counts the
/// triples whose hash of `x` equals their bin.
pub fn analyze_fe1_single(
    bag: &MessageBag<Fe1Message>,
    params: &FeParams,
    x: u64,
) -> FrequencyEstimate {
    let count = bag
        .iter()
        .filter(|m| hash_eval_unchecked(m.u, m.v, x, params.prime, params.bins) == m.w)
        .count() as u64;
    FrequencyEstimate {
        element: x,
        estimate: fe1_corrected(count, params),
    }
}

fn fe1_corrected(count: u64, params: &FeParams) -> f64 {
    (count as f64 - params.n as f64 * params.rho / params.bins as f64
        - params.n as f64 * params.p_col)
        / (1.0 - params.p_col)
}

/// Bias-corrected estimate from a raw match count, dispatching on the
/// variant. Used by the heavy-hitter analyzer's final layer.
pub(crate) fn estimate_from_count(count: u64, params: &FeParams) -> f64 {
    match params.variant {
        FeVariant::Fe0 => fe0_corrected(count, params),
        FeVariant::Fe1 => fe1_corrected(count, params),
    }
}

/// All solutions `x` in `1..=B` of `h_{u,v}(x) = w`, via the closed form
/// `u^{-1} (w + i b - v) mod q` for `i` in `0..=floor((q-1-w)/b)`. The
/// 1-based domain uses residue representatives `{1, ..., q}`: residue 0
/// stands for element `q`, which only lies in the domain when `B = q`
/// (a prime domain size). Sorted ascending.
pub fn enumerate_preimages(
    u: u64,
    v: u64,
    w: u64,
    q: u64,
    b: u64,
    domain_size: u64,
) -> Result<Vec<u64>> {
    if q < 2 || u < 1 || u >= q || v >= q || b < 1 || b > q || w >= b || domain_size > q {
        return Err(Error::invalid_input(format!(
            "preimage query (u={u}, v={v}, w={w}, q={q}, b={b}, B={domain_size}) out of range"
        )));
    }
    let mut out = Vec::with_capacity(((q - 1 - w) / b + 1) as usize);
    for_each_preimage(u, v, w, q, b, domain_size, |x| out.push(x));
    out.sort_unstable();
    Ok(out)
}

/// Allocation-free preimage walk; arguments must already be range-checked.
#[inline]
pub(crate) fn for_each_preimage(
    u: u64,
    v: u64,
    w: u64,
    q: u64,
    b: u64,
    domain_size: u64,
    mut f: impl FnMut(u64),
) {
    let u_inv = mod_inverse(u, q);
    let mut residue = w; // w + i*b for i = 0, 1, ...
    loop {
        // x = u^{-1} (residue - v) mod q, with residue 0 represented as q.
        let diff = (residue + q - v) % q;
        let x = (u_inv as u128 * diff as u128 % q as u128) as u64;
        let x = if x == 0 { q } else { x };
        if x <= domain_size {
            f(x);
        }
        match residue.checked_add(b) {
            Some(next) if next <= q - 1 => residue = next,
            _ => break,
        }
    }
}

/// Modular inverse by extended Euclid; `q` prime and `1 <= u < q`.
fn mod_inverse(u: u64, q: u64) -> u64 {
    let (mut old_r, mut r) = (u as i128, q as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let quotient = old_r / r;
        (old_r, r) = (r, old_r - quotient * r);
        (old_s, s) = (s, old_s - quotient * s);
    }
    debug_assert_eq!(old_r, 1, "u and q must be coprime");
    old_s.rem_euclid(q as i128) as u64
}

/// FE1 analyzer for every element in `1..=B` at once.
///
/// Each triple increments the counts of its preimage set, so the pass costs
/// `|bag| * q/b` instead of `|bag| * B`; the per-element correction is then
/// applied exactly as in [`analyze_fe1_single`], making the results
/// bit-identical to the one-by-one loop.
pub fn analyze_fe1_all(bag: &MessageBag<Fe1Message>, params: &FeParams) -> Vec<FrequencyEstimate> {
    let q = params.prime;
    let b = params.bins;
    let domain = params.domain_size;
    let counts = exec::accumulate_counts(
        bag.as_slice(),
        domain as usize + 1,
        move |m, counts| {
            for_each_preimage(m.u, m.v, m.w, q, b, domain, |x| counts[x as usize] += 1);
        },
    );
    (1..=domain)
        .map(|x| FrequencyEstimate {
            element: x,
            estimate: fe1_corrected(counts[x as usize], params),
        })
        .collect()
}

/// The balls-into-bins instance whose output law equals the noise component
/// of this protocol's view; its privacy condition is the protocol's privacy
/// condition. FE0 maps to `M(B, 1, 0, n, rho)`; FE1 maps to
/// `M((q-1) q b, (q-1) q, n floor(rho), n, rho - floor(rho))`.
pub fn bib_equivalent(params: &FeParams) -> Result<BibParams> {
    match params.variant {
        FeVariant::Fe0 => BibParams::new(params.domain_size, 1, 0, params.n, params.rho),
        FeVariant::Fe1 => {
            let q = params.prime;
            let s = q
                .checked_sub(1)
                .and_then(|x| x.checked_mul(q))
                .ok_or_else(|| Error::invalid_parameter("q too large for the BIB mapping"))?;
            let m = s
                .checked_mul(params.bins)
                .ok_or_else(|| Error::invalid_parameter("q^2 b overflows the BIB mapping"))?;
            let k = params
                .n
                .checked_mul(params.rho.floor() as u64)
                .ok_or_else(|| Error::invalid_parameter("n floor(rho) overflows"))?;
            BibParams::new(m, s, k, params.n, params.rho - params.rho.floor())
        }
    }
}

/// `|S intersect S'|` for the FE1 mapping's special sets of two distinct
/// inputs: the number of hash descriptors on which they collide,
/// `floor(q/b) ((q mod b) + q - b)`, i.e. `p_col (q-1) q` as an exact integer.
pub fn bib_neighbor_overlap(params: &FeParams) -> Result<u64> {
    match params.variant {
        FeVariant::Fe0 => Ok(0),
        FeVariant::Fe1 => {
            let q = params.prime;
            let b = params.bins;
            Ok((q / b) * ((q % b) + q - b))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bib::check_privacy_condition;
    use crate::params::FeParams;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn fe0_params(n: u64, domain: u64, rho: f64) -> FeParams {
        // Built directly: the constructor would derive rho from (eps, delta),
        // while these tests pin rho.
        FeParams {
            n,
            domain_size: domain,
            bins: domain,
            prime: 0,
            rho,
            p_col: 0.0,
            epsilon: 1.0,
            delta: 0.5,
            gamma_robust: 1.0,
            variant: FeVariant::Fe0,
        }
    }

    fn fe1_params(n: u64, domain: u64, bins: u64, rho: f64) -> FeParams {
        let mut p = FeParams::fe1(n.max(1), domain, bins, 1.0, 0.5, 1.0).unwrap();
        p.n = n;
        p.rho = rho;
        p
    }

    #[test]
    fn fe0_randomizer_hits_both_branch_extremes() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let p = fe0_params(10, 8, 0.0);
        assert_eq!(randomize_fe0(3, &p, &mut rng).unwrap(), vec![Fe0Message { value: 3 }]);
        let p = fe0_params(10, 8, 1.0);
        for _ in 0..50 {
            let out = randomize_fe0(3, &p, &mut rng).unwrap();
            assert_eq!(out.len(), 2);
            assert_eq!(out[0].value, 3);
        }
    }

    #[test]
    fn fe0_randomizer_mean_size_tracks_rho() {
        let rho = 0.4642;
        let p = fe0_params(100_000, 64, rho);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let runs = 100_000u64;
        let total: u64 = (0..runs)
            .map(|_| randomize_fe0(7, &p, &mut rng).unwrap().len() as u64)
            .sum();
        let mean = total as f64 / runs as f64;
        let sigma = (rho * (1.0 - rho) / runs as f64).sqrt();
        assert!((mean - (1.0 + rho)).abs() <= 3.0 * sigma, "mean = {mean}");
    }

    #[test]
    fn fe0_randomizer_rejects_rho_above_one() {
        let p = fe0_params(10, 8, 1.5);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let err = randomize_fe0(3, &p, &mut rng).unwrap_err();
        assert!(err.to_string().contains("rho"));
    }

    #[test]
    fn fe0_analyzer_examples() {
        // No correction.
        let p = fe0_params(3, 8, 0.0);
        let bag = MessageBag::from(vec![
            Fe0Message { value: 5 },
            Fe0Message { value: 5 },
            Fe0Message { value: 5 },
        ]);
        assert_eq!(analyze_fe0(&bag, &p, 5).estimate, 3.0);
        // 5 copies, n=100, rho=0.5, B=10: 5 - 5 = 0.
        let p = fe0_params(100, 10, 0.5);
        let bag = MessageBag::from(vec![Fe0Message { value: 2 }; 5]);
        assert_eq!(analyze_fe0(&bag, &p, 2).estimate, 0.0);
        // Degenerate empty bag.
        let p = fe0_params(0, 10, 0.5);
        let bag = MessageBag::new();
        assert_eq!(analyze_fe0(&bag, &p, 2).estimate, 0.0);
    }

    #[test]
    fn hash_eval_hand_cases() {
        assert_eq!(hash_eval(2, 3, 2, 11, 3).unwrap(), 1); // (7 mod 11) mod 3
        assert_eq!(hash_eval(2, 3, 9, 11, 3).unwrap(), 1); // (21 mod 11) = 10, mod 3 = 1
        for x in 1..=10 {
            assert_eq!(hash_eval(1, 0, x, 11, 11).unwrap(), x % 11);
        }
        assert!(hash_eval(0, 3, 2, 11, 3).is_err());
        assert!(hash_eval(2, 11, 2, 11, 3).is_err());
    }

    #[test]
    fn fe1_randomizer_structure() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        // rho = 0: singleton whose bin is consistent with the hash.
        let p = fe1_params(100, 100, 10, 0.0);
        for x in [1u64, 50, 100] {
            let out = randomize_fe1(x, &p, &mut rng).unwrap();
            assert_eq!(out.len(), 1);
            let m = out[0];
            assert_eq!(hash_eval(m.u, m.v, x, p.prime, p.bins).unwrap(), m.w);
        }
        // rho = 4.643: size in {5, 6} and the real triple is first.
        let p = fe1_params(100, 100, 10, 4.643);
        for _ in 0..100 {
            let out = randomize_fe1(42, &p, &mut rng).unwrap();
            assert!(out.len() == 5 || out.len() == 6);
            let m = out[0];
            assert_eq!(hash_eval(m.u, m.v, 42, p.prime, p.bins).unwrap(), m.w);
        }
    }

    #[test]
    fn fe1_randomizer_mean_size_tracks_rho() {
        let rho = 4.643;
        let p = fe1_params(100_000, 100, 10, rho);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let runs = 100_000u64;
        let total: u64 = (0..runs)
            .map(|_| randomize_fe1(9, &p, &mut rng).unwrap().len() as u64)
            .sum();
        let mean = total as f64 / runs as f64;
        let frac: f64 = rho - rho.floor();
        let sigma = (frac * (1.0 - frac) / runs as f64).sqrt();
        assert!((mean - (1.0 + rho)).abs() <= 3.0 * sigma, "mean = {mean}");
    }

    #[test]
    fn fe1_single_analyzer_hand_case() {
        // Bag {(2,3,1), (2,3,0)}, x = 2, q = 11, b = 3, n = 2, rho = 0:
        // X = 1 and g_hat = (1 - 2 * 3/11) / (1 - 3/11) = 5/8.
        let mut p = fe1_params(2, 10, 3, 0.0);
        assert_eq!(p.prime, 11);
        p.p_col = 3.0 / 11.0;
        let bag = MessageBag::from(vec![
            Fe1Message { u: 2, v: 3, w: 1 },
            Fe1Message { u: 2, v: 3, w: 0 },
        ]);
        assert_relative_eq!(
            analyze_fe1_single(&bag, &p, 2).estimate,
            0.625,
            max_relative = 1e-15
        );
        // Empty bag with n = 0.
        let p = fe1_params(0, 10, 3, 0.0);
        assert_eq!(analyze_fe1_single(&MessageBag::new(), &p, 2).estimate, 0.0);
    }

    #[test]
    fn fe1_all_users_same_input_recovers_n() {
        let n = 500u64;
        let p = fe1_params(n, 64, 8, 0.0);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let mut msgs = Vec::new();
        for _ in 0..n {
            msgs.extend(randomize_fe1(17, &p, &mut rng).unwrap());
        }
        let bag = MessageBag::from(msgs);
        let est = analyze_fe1_single(&bag, &p, 17).estimate;
        assert_relative_eq!(est, n as f64, epsilon = 1e-9);
    }

    #[test]
    fn preimage_hand_case_and_roundtrip() {
        let pre = enumerate_preimages(2, 3, 1, 11, 3, 10).unwrap();
        assert_eq!(pre, vec![2, 6, 9, 10]);
        for &x in &pre {
            assert_eq!(hash_eval(2, 3, x, 11, 3).unwrap(), 1);
        }
        // Identity hash when b = q: the preimage of w is {w} inside 1..=B.
        for w in 0..11 {
            let pre = enumerate_preimages(1, 0, w, 11, 11, 10).unwrap();
            if w >= 1 {
                assert_eq!(pre, vec![w]);
            } else {
                assert!(pre.is_empty());
            }
        }
    }

    #[test]
    fn preimages_match_brute_force_scan() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        for _ in 0..300 {
            let q = crate::params::smallest_prime_geq(rng.gen_range(3..2000)).unwrap();
            let b = rng.gen_range(1..=q);
            let domain = rng.gen_range(1..=q);
            let u = rng.gen_range(1..q);
            let v = rng.gen_range(0..q);
            let w = rng.gen_range(0..b);
            let fast = enumerate_preimages(u, v, w, q, b, domain).unwrap();
            let slow: Vec<u64> = (1..=domain)
                .filter(|&x| hash_eval_unchecked(u, v, x, q, b) == w)
                .collect();
            assert_eq!(fast, slow, "mismatch at u={u} v={v} w={w} q={q} b={b} B={domain}");
        }
    }

    #[test]
    fn batch_analyzer_is_bit_identical_to_single() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        for _ in 0..20 {
            let domain = rng.gen_range(8..200);
            let bins = rng.gen_range(2..=domain / 2);
            let n = rng.gen_range(1..300);
            let p = fe1_params(n, domain, bins, rng.gen_range(0.0..3.0));
            let mut msgs = Vec::new();
            for _ in 0..n {
                msgs.extend(randomize_fe1(rng.gen_range(1..=domain), &p, &mut rng).unwrap());
            }
            let bag = MessageBag::from(msgs);
            let batch = analyze_fe1_all(&bag, &p);
            for est in &batch {
                let single = analyze_fe1_single(&bag, &p, est.element);
                assert!(
                    est.estimate.to_bits() == single.estimate.to_bits(),
                    "estimate for {} differs: {} vs {}",
                    est.element,
                    est.estimate,
                    single.estimate
                );
            }
        }
    }

    #[test]
    fn batch_analyzer_on_empty_and_singleton_bags() {
        let p = fe1_params(10, 20, 4, 1.0);
        let empty = analyze_fe1_all(&MessageBag::new(), &p);
        let expected = (0.0 - 10.0 * 1.0 / 4.0 - 10.0 * p.p_col) / (1.0 - p.p_col);
        for est in &empty {
            assert_eq!(est.estimate, expected);
        }
        // A single triple increments exactly its preimage set.
        let m = Fe1Message { u: 3, v: 5, w: 2 };
        let bag = MessageBag::from(vec![m]);
        let pre = enumerate_preimages(m.u, m.v, m.w, p.prime, p.bins, p.domain_size).unwrap();
        let batch = analyze_fe1_all(&bag, &p);
        for est in &batch {
            let hit = pre.contains(&est.element);
            let base = if hit { 1.0 } else { 0.0 };
            let want = (base - 10.0 * 1.0 / 4.0 - 10.0 * p.p_col) / (1.0 - p.p_col);
            assert_eq!(est.estimate, want);
        }
    }

    #[test]
    fn unbiasedness_smoke() {
        // Small version of the acceptance criterion: mean estimate over
        // repeated runs approaches the true frequency.
        let n = 600u64;
        let domain = 32u64;
        let p = fe1_params(n, domain, 8, 1.3);
        let data: Vec<u64> = (0..n).map(|i| i % domain + 1).collect();
        let trials = 120;
        let mut sums = vec![0.0f64; domain as usize + 1];
        let mut sq = vec![0.0f64; domain as usize + 1];
        for t in 0..trials {
            let mut rng = ChaCha12Rng::seed_from_u64(1000 + t);
            let mut msgs = Vec::new();
            for &x in &data {
                msgs.extend(randomize_fe1(x, &p, &mut rng).unwrap());
            }
            let bag = MessageBag::from(msgs);
            for est in analyze_fe1_all(&bag, &p) {
                sums[est.element as usize] += est.estimate;
                sq[est.element as usize] += est.estimate * est.estimate;
            }
        }
        let t = trials as f64;
        for x in 1..=domain {
            let mean = sums[x as usize] / t;
            let var = (sq[x as usize] / t - mean * mean).max(0.0);
            let se = (var / t).sqrt().max(1e-9);
            let truth = (n / domain) as f64;
            assert!(
                (mean - truth).abs() <= 5.0 * se,
                "element {x}: mean {mean} vs {truth} (se {se})"
            );
        }
    }

    #[test]
    fn noise_view_maps_to_a_private_bib_instance() {
        let p = FeParams::fe1(10_000, 1000, 100, 1.0, 0.05, 1.0).unwrap();
        let bib = bib_equivalent(&p).unwrap();
        assert_eq!(bib.m, (p.prime - 1) * p.prime * p.bins);
        assert_eq!(bib.s, (p.prime - 1) * p.prime);
        assert_eq!(bib.k, p.n * p.rho.floor() as u64);
        assert!(check_privacy_condition(&bib, p.epsilon, p.delta).unwrap());

        let p = FeParams::fe0(10_000, 50, 1.0, 0.05, 1.0).unwrap();
        let bib = bib_equivalent(&p).unwrap();
        assert_eq!((bib.m, bib.s, bib.k), (50, 1, 0));
        assert!(check_privacy_condition(&bib, p.epsilon, p.delta).unwrap());
    }

    #[test]
    fn neighbor_overlap_matches_collision_probability() {
        let p = FeParams::fe1(1000, 1000, 100, 1.0, 1e-6, 1.0).unwrap();
        let overlap = bib_neighbor_overlap(&p).unwrap();
        let pairs = (p.prime - 1) * p.prime;
        assert_relative_eq!(
            overlap as f64 / pairs as f64,
            p.p_col,
            max_relative = 1e-12
        );
    }
}
