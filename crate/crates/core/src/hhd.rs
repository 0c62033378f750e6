//! Heavy-hitter detection over a prefix tree of frequency-estimation layers.
//!
//! Domain elements are 0-based here (`0..B`), because candidate prefixes
//! expand as `c -> {2c, 2c+1}`; the experiment harness converts from the
//! 1-based FE domain by subtracting one.
//!
//! Each user inserts the length-`l` prefix of its value into layer `l`'s FE
//! instance. Tuples from layers below the last are forwarded with probability
//! `q_sub`; the last layer always sends. The analyzer walks the prefix tree,
//! pruning candidates whose raw subsampled count falls below `Delta` (that
//! count is exactly the concentration variable the pruning threshold was
//! sized for), then filters the surviving leaves with the final layer's
//! bias-corrected estimates against `tau`.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bib::binomial_count;
use crate::error::{Error, Result};
use crate::exec;
use crate::fe::{estimate_from_count, for_each_preimage, hash_eval_unchecked, MessageBag};
use crate::params::{FeParams, FeVariant, HhdParams};

/// Layer-specific message body: small layers carry the prefix directly,
/// hashed layers carry an FE1 triple.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerPayload {
    Direct { value: u64 },
    Hashed { u: u64, v: u64, w: u64 },
}

/// One heavy-hitter message: the layer index (1-based) plus the layer's FE
/// message.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HhdMessage {
    pub layer: u32,
    pub payload: LayerPayload,
}

/// Surviving candidate prefixes of one layer, exposed for diagnostics.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub layer: u32,
    pub prefixes: BTreeSet<u64>,
}

/// Length-`len` prefix of `x` viewed as a `total_bits`-bit value:
/// `floor(x / 2^(total_bits - len))`.
pub fn prefix(x: u64, len: u32, total_bits: u32) -> Result<u64> {
    if total_bits == 0 || total_bits > 63 {
        return Err(Error::invalid_input(format!(
            "total bit count must be in 1..=63, got {total_bits}"
        )));
    }
    if x >= 1u64 << total_bits {
        return Err(Error::invalid_input(format!(
            "value {x} does not fit in {total_bits} bits"
        )));
    }
    if len < 1 || len > total_bits {
        return Err(Error::invalid_input(format!(
            "prefix length {len} outside 1..={total_bits}"
        )));
    }
    Ok(x >> (total_bits - len))
}

fn uniform_layer_noise(lp: &FeParams, rng: &mut impl Rng) -> LayerPayload {
    match lp.variant {
        FeVariant::Fe0 => LayerPayload::Direct {
            value: rng.gen_range(0..lp.domain_size),
        },
        FeVariant::Fe1 => LayerPayload::Hashed {
            u: rng.gen_range(1..lp.prime),
            v: rng.gen_range(0..lp.prime),
            w: rng.gen_range(0..lp.bins),
        },
    }
}

/// Run one user's randomizer: every layer's FE randomizer on the value's
/// prefix, with per-tuple Ber(q_sub) forwarding below the final layer.
///
/// The forwarding coin and the noise count are drawn jointly (kept noises
/// follow `Bin(floor(rho), q_sub)` and the fractional noise survives with
/// probability `(rho - floor(rho)) * q_sub`), which is the same distribution
/// as subsampling each tuple individually but only spends randomness on
/// messages that are actually sent.
pub fn randomize(x: u64, params: &HhdParams, rng: &mut impl Rng) -> Result<Vec<HhdMessage>> {
    if x >= params.domain_size {
        return Err(Error::invalid_input(format!(
            "element {x} outside 0..{}",
            params.domain_size
        )));
    }
    let total_bits = params.layer_count;
    let mut out = Vec::new();
    for layer in 1..=total_bits {
        let lp = params.layer(layer);
        let pfx = prefix(x, layer, total_bits)?;
        let keep = if layer == total_bits { 1.0 } else { params.q_sub };

        let send_real = keep >= 1.0 || rng.gen::<f64>() < keep;
        if send_real {
            let payload = match lp.variant {
                FeVariant::Fe0 => LayerPayload::Direct { value: pfx },
                FeVariant::Fe1 => {
                    let u = rng.gen_range(1..lp.prime);
                    let v = rng.gen_range(0..lp.prime);
                    // 1-based FE element for the hash is prefix + 1.
                    let w = hash_eval_unchecked(u, v, pfx + 1, lp.prime, lp.bins);
                    LayerPayload::Hashed { u, v, w }
                }
            };
            out.push(HhdMessage { layer, payload });
        }

        let noise_floor = lp.rho.floor();
        let kept_noises = binomial_count(noise_floor as u64, keep, rng);
        for _ in 0..kept_noises {
            out.push(HhdMessage { layer, payload: uniform_layer_noise(lp, rng) });
        }
        let frac = lp.rho - noise_floor;
        if frac > 0.0 && rng.gen::<f64>() < frac * keep {
            out.push(HhdMessage { layer, payload: uniform_layer_noise(lp, rng) });
        }
    }
    Ok(out)
}

/// Per-layer raw match counts, indexed by 0-based prefix. Layer `l` occupies
/// `counts[l - 1]`, a vector of length `2^l`.
fn layer_counts(bag: &MessageBag<HhdMessage>, params: &HhdParams) -> Result<Vec<Vec<u64>>> {
    // Validate once so the parallel counting pass cannot fail.
    for m in bag.iter() {
        if m.layer < 1 || m.layer > params.layer_count {
            return Err(Error::invalid_input(format!(
                "message layer {} outside 1..={}",
                m.layer, params.layer_count
            )));
        }
        let lp = params.layer(m.layer);
        match (m.payload, lp.variant) {
            (LayerPayload::Direct { value }, FeVariant::Fe0) => {
                if value >= lp.domain_size {
                    return Err(Error::invalid_input(format!(
                        "prefix {value} outside layer-{} domain",
                        m.layer
                    )));
                }
            }
            (LayerPayload::Hashed { u, v, w }, FeVariant::Fe1) => {
                if u < 1 || u >= lp.prime || v >= lp.prime || w >= lp.bins {
                    return Err(Error::invalid_input(format!(
                        "hash triple out of range at layer {}",
                        m.layer
                    )));
                }
            }
            _ => {
                return Err(Error::invalid_input(format!(
                    "message payload kind does not match layer {} variant",
                    m.layer
                )));
            }
        }
    }

    // Flat counts with per-layer offsets keep the accumulation one parallel
    // pass; layer l starts at 2^l - 2.
    let total: usize = (2u64.pow(params.layer_count + 1) - 2) as usize;
    let layers: Vec<FeParams> = params.layers.clone();
    let flat = exec::accumulate_counts(bag.as_slice(), total, move |m, counts| {
        let lp = &layers[(m.layer - 1) as usize];
        let offset = (2u64.pow(m.layer) - 2) as usize;
        match m.payload {
            LayerPayload::Direct { value } => counts[offset + value as usize] += 1,
            LayerPayload::Hashed { u, v, w } => {
                for_each_preimage(u, v, w, lp.prime, lp.bins, lp.domain_size, |x| {
                    counts[offset + (x - 1) as usize] += 1;
                });
            }
        }
    });
    Ok((1..=params.layer_count)
        .map(|l| {
            let offset = (2u64.pow(l) - 2) as usize;
            flat[offset..offset + 2usize.pow(l)].to_vec()
        })
        .collect())
}

fn expand(parents: &BTreeSet<u64>) -> BTreeSet<u64> {
    parents.iter().flat_map(|&c| [2 * c, 2 * c + 1]).collect()
}

/// Shared tree walk: prune candidates layer by layer against `Delta` (raw
/// subsampled counts), then filter the final layer's children against `tau`
/// using bias-corrected estimates.
fn candidate_pipeline(
    bag: &MessageBag<HhdMessage>,
    params: &HhdParams,
) -> Result<(Vec<CandidateSet>, BTreeSet<u64>)> {
    let counts = layer_counts(bag, params)?;
    let mut trace = Vec::with_capacity(params.layer_count.saturating_sub(1) as usize);
    let mut current: BTreeSet<u64> = [0u64].into();
    for layer in 1..params.layer_count {
        let layer_count = &counts[(layer - 1) as usize];
        let kept: BTreeSet<u64> = expand(&current)
            .into_iter()
            .filter(|&c| layer_count[c as usize] as f64 >= params.delta_prune)
            .collect();
        trace.push(CandidateSet { layer, prefixes: kept.clone() });
        current = kept;
    }
    let last = params.layer(params.layer_count);
    let final_counts = &counts[(params.layer_count - 1) as usize];
    let heavy: BTreeSet<u64> = expand(&current)
        .into_iter()
        .filter(|&c| estimate_from_count(final_counts[c as usize], last) >= params.tau)
        .collect();
    Ok((trace, heavy))
}

/// Detect heavy elements: the set of 0-based values whose final-layer
/// estimate reaches `tau` after surviving every pruning layer.
pub fn analyze(bag: &MessageBag<HhdMessage>, params: &HhdParams) -> Result<BTreeSet<u64>> {
    candidate_pipeline(bag, params).map(|(_, heavy)| heavy)
}

/// The pruned candidate set of every non-final layer, for diagnostics and
/// the candidate-growth checks.
pub fn candidate_trace(
    bag: &MessageBag<HhdMessage>,
    params: &HhdParams,
) -> Result<Vec<CandidateSet>> {
    candidate_pipeline(bag, params).map(|(trace, _)| trace)
}

/// Both the trace and the heavy set from one pass over the bag.
pub fn analyze_with_trace(
    bag: &MessageBag<HhdMessage>,
    params: &HhdParams,
) -> Result<(Vec<CandidateSet>, BTreeSet<u64>)> {
    candidate_pipeline(bag, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn derive(n: u64, b_domain: u64, bins: u64) -> HhdParams {
        HhdParams::derive(n, b_domain, bins, 1.0, 1e-4, 0.05, 0.1, 16.0, 1.0).unwrap()
    }

    fn zero_noise(params: &mut HhdParams) {
        for lp in &mut params.layers {
            lp.rho = 0.0;
        }
    }

    #[test]
    fn prefix_hand_cases() {
        assert_eq!(prefix(5, 1, 3).unwrap(), 1); // top bit of 0b101
        assert_eq!(prefix(5, 2, 3).unwrap(), 2); // 0b10
        assert_eq!(prefix(5, 3, 3).unwrap(), 5); // full value
        assert!(prefix(8, 1, 3).is_err());
        assert!(prefix(5, 0, 3).is_err());
        assert!(prefix(5, 4, 3).is_err());
    }

    #[test]
    fn prefix_consistency() {
        let total = 10u32;
        for x in [0u64, 1, 5, 513, 1023] {
            for j in 1..=total {
                for i in 1..=j {
                    let via_j = prefix(prefix(x, j, total).unwrap(), i, j).unwrap();
                    assert_eq!(via_j, prefix(x, i, total).unwrap());
                }
            }
        }
    }

    #[test]
    fn randomizer_with_no_subsampling_and_no_noise_sends_one_per_layer() {
        let mut params = derive(100, 16, 4);
        params.q_sub = 1.0;
        zero_noise(&mut params);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for x in 0..16u64 {
            let msgs = randomize(x, &params, &mut rng).unwrap();
            assert_eq!(msgs.len(), 4);
            for (i, m) in msgs.iter().enumerate() {
                assert_eq!(m.layer as usize, i + 1);
                let pfx = prefix(x, m.layer, 4).unwrap();
                match m.payload {
                    LayerPayload::Direct { value } => assert_eq!(value, pfx),
                    LayerPayload::Hashed { u, v, w } => {
                        let lp = params.layer(m.layer);
                        assert_eq!(hash_eval_unchecked(u, v, pfx + 1, lp.prime, lp.bins), w);
                    }
                }
            }
        }
    }

    #[test]
    fn randomizer_with_zero_forwarding_sends_only_the_final_layer() {
        let mut params = derive(100, 16, 4);
        params.q_sub = 0.0;
        zero_noise(&mut params);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let msgs = randomize(9, &params, &mut rng).unwrap();
        assert_eq!(msgs.len(), 1);
        assert_eq!(msgs[0].layer, 4);
    }

    #[test]
    fn mean_messages_per_user_matches_the_closed_form() {
        let params =
            HhdParams::derive(100_000, 256, 117, 1.0, 0.01, 0.01, 0.1, 16.0, 1.0).unwrap();
        let expected = params.expected_messages_per_user();
        let users = 100_000u64;
        let total: usize = (0..users)
            .map(|i| {
                let mut rng = ChaCha12Rng::seed_from_u64(9000 + i);
                randomize(i % 256, &params, &mut rng).unwrap().len()
            })
            .sum();
        let mean = total as f64 / users as f64;
        assert!(
            (mean - expected).abs() <= 0.01 * expected,
            "mean {mean} vs expected {expected}"
        );
    }

    #[test]
    fn analyzer_finds_a_universally_held_element() {
        let mut params = derive(200, 32, 8);
        params.q_sub = 1.0;
        zero_noise(&mut params);
        // Delta and tau well below n.
        params.delta_prune = 50.0;
        params.tau = 50.0;
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut msgs = Vec::new();
        for _ in 0..200 {
            msgs.extend(randomize(19, &params, &mut rng).unwrap());
        }
        let bag = MessageBag::from(msgs);
        let (trace, heavy) = analyze_with_trace(&bag, &params).unwrap();
        assert_eq!(heavy, [19u64].into());
        for set in &trace {
            assert_eq!(set.prefixes.len(), 1, "layer {} not a singleton", set.layer);
        }
    }

    #[test]
    fn analyzer_returns_empty_on_an_empty_bag() {
        let params = derive(100, 16, 4);
        let heavy = analyze(&MessageBag::new(), &params).unwrap();
        assert!(heavy.is_empty());
    }

    #[test]
    fn analyzer_rejects_out_of_range_layers() {
        let params = derive(100, 16, 4);
        let bag = MessageBag::from(vec![HhdMessage {
            layer: 9,
            payload: LayerPayload::Direct { value: 0 },
        }]);
        assert!(analyze(&bag, &params).is_err());
        // Payload kind must match the layer variant.
        let bag = MessageBag::from(vec![HhdMessage {
            layer: 1,
            payload: LayerPayload::Hashed { u: 1, v: 0, w: 0 },
        }]);
        assert!(analyze(&bag, &params).is_err());
    }

    #[test]
    fn candidates_stay_within_children_of_the_previous_layer() {
        let params = derive(500, 64, 8);
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let mut msgs = Vec::new();
        for i in 0..500u64 {
            msgs.extend(randomize(i % 64, &params, &mut rng).unwrap());
        }
        let bag = MessageBag::from(msgs);
        let trace = candidate_trace(&bag, &params).unwrap();
        let mut prev: BTreeSet<u64> = [0u64].into();
        for set in &trace {
            let children = expand(&prev);
            assert!(set.prefixes.is_subset(&children));
            assert!(set.prefixes.len() <= 2 * prev.len().max(1));
            prev = set.prefixes.clone();
        }
    }

    #[test]
    fn planted_heavies_are_recalled_without_noise_layers() {
        // Deterministic smoke test of the full pipeline shape: heavies at
        // 0.2 n, the rest uniform-ish, no DP noise, no subsampling.
        let n = 1000u64;
        let mut params = derive(n, 64, 8);
        params.q_sub = 1.0;
        zero_noise(&mut params);
        params.delta_prune = 100.0;
        params.tau = 150.0;
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let mut msgs = Vec::new();
        for i in 0..n {
            let x = if i < 200 { 13 } else if i < 400 { 44 } else { i % 64 };
            msgs.extend(randomize(x, &params, &mut rng).unwrap());
        }
        let bag = MessageBag::from(msgs);
        let heavy = analyze(&bag, &params).unwrap();
        assert!(heavy.contains(&13));
        assert!(heavy.contains(&44));
        // Light elements appear ~13 times; far below tau.
        assert_eq!(heavy.len(), 2);
    }
}
