//! End-to-end experiment harness: dataset generation, the trusted shuffler,
//! protocol execution loops, and report assembly.
//!
//! Reproducibility contract: a master seed determines every random choice
//! through per-(trial, user) substreams, so reports are identical whatever
//! the parallelism degree. Wall-clock timings are the one exception and are
//! excluded from the deterministic fingerprint.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::fe::{
    analyze_fe0_all, analyze_fe1_all, randomize_fe0, randomize_fe1, FrequencyEstimate, MessageBag,
};
use crate::hhd;
use crate::params::{error_bound_alpha, FeParams, FeVariant, HhdParams};
use crate::rng::{substream, StreamDomain};

/// How a synthetic dataset is produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum DatasetSpec {
    /// Every user draws uniformly from the domain.
    Uniform,
    /// Element ranks follow a Zipf law with the given exponent.
    Zipf { exponent: f64 },
    /// Exact planted counts per element, plus `tail` uniform fillers;
    /// the counts and tail must sum to n.
    Planted { heavy: Vec<(u64, u64)>, tail: u64 },
}

/// A synthetic input: one domain element per user, with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// One value in `1..=B` per user.
    pub values: Vec<u64>,
    #[serde(rename = "B")]
    pub domain_size: u64,
    pub spec: DatasetSpec,
    pub seed: u64,
}

impl Dataset {
    pub fn n(&self) -> u64 {
        self.values.len() as u64
    }
}

/// Generate a dataset deterministically from `(spec, n, B, seed)`.
pub fn generate_dataset(
    spec: &DatasetSpec,
    n: u64,
    domain_size: u64,
    seed: u64,
) -> Result<Dataset> {
    if domain_size < 1 {
        return Err(Error::invalid_parameter("domain size B must be >= 1"));
    }
    let mut rng = substream(seed, StreamDomain::Dataset, 0, 0);
    let values = match spec {
        DatasetSpec::Uniform => (0..n).map(|_| rng.gen_range(1..=domain_size)).collect(),
        DatasetSpec::Zipf { exponent } => {
            if !(*exponent > 0.0) || !exponent.is_finite() {
                return Err(Error::invalid_parameter(format!(
                    "zipf exponent must be positive, got {exponent}"
                )));
            }
            let dist = rand_distr::Zipf::new(domain_size, *exponent)
                .map_err(|e| Error::invalid_parameter(format!("zipf: {e}")))?;
            (0..n)
                .map(|_| rand_distr::Distribution::sample(&dist, &mut rng) as u64)
                .collect()
        }
        DatasetSpec::Planted { heavy, tail } => {
            let mut values = Vec::with_capacity(n as usize);
            let mut planted_total = 0u64;
            for &(element, count) in heavy {
                if element < 1 || element > domain_size {
                    return Err(Error::invalid_input(format!(
                        "planted element {element} outside 1..={domain_size}"
                    )));
                }
                planted_total = planted_total
                    .checked_add(count)
                    .ok_or_else(|| Error::invalid_input("planted counts overflow"))?;
                values.extend(std::iter::repeat(element).take(count as usize));
            }
            if planted_total + tail != n {
                return Err(Error::invalid_input(format!(
                    "planted counts ({planted_total}) + tail ({tail}) must equal n ({n})"
                )));
            }
            for _ in 0..*tail {
                values.push(rng.gen_range(1..=domain_size));
            }
            values
        }
    };
    Ok(Dataset { values, domain_size, spec: spec.clone(), seed })
}

/// Exact frequency of every element `1..=B`, indexed by element.
pub fn true_frequencies(dataset: &Dataset) -> Vec<u64> {
    let mut counts = vec![0u64; dataset.domain_size as usize + 1];
    for &v in &dataset.values {
        counts[v as usize] += 1;
    }
    counts
}

/// The trusted shuffler: the multiset union of all users' messages, stored
/// in a uniformly random order drawn from `rng`.
pub fn shuffle<M>(per_user: Vec<Vec<M>>, rng: &mut impl Rng) -> MessageBag<M> {
    let mut all: Vec<M> = per_user.into_iter().flatten().collect();
    all.shuffle(rng);
    MessageBag::from(all)
}

/// Wall-clock seconds spent in each pipeline phase, summed over trials.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub randomize_s: f64,
    pub shuffle_s: f64,
    pub analyze_s: f64,
}

/// One experiment trial, as a CSV row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub max_error: f64,
    pub messages_per_user: f64,
    pub within_bound: bool,
    pub randomize_s: f64,
    pub shuffle_s: f64,
    pub analyze_s: f64,
}

/// Accuracy-experiment report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub trials: u64,
    /// Per-trial `max_x |g_hat(x) - g(x)|`.
    pub max_errors: Vec<f64>,
    pub mean_messages_per_user: f64,
    /// The bound the protocol promises at confidence `1 - beta`.
    pub alpha_bound: f64,
    pub beta: f64,
    /// Trials whose max error stayed within `alpha_bound`.
    pub bound_satisfied_count: u64,
    pub wall_times: PhaseTimings,
    pub per_trial: Vec<TrialRecord>,
}

impl ErrorReport {
    /// Zero out wall-clock fields; the remaining content is a pure function
    /// of (dataset, params, seed).
    pub fn clear_timings(&mut self) {
        self.wall_times = PhaseTimings::default();
        for r in &mut self.per_trial {
            r.randomize_s = 0.0;
            r.shuffle_s = 0.0;
            r.analyze_s = 0.0;
        }
    }

    /// Seed-determined content only (bit-exact floats), for determinism checks.
    pub fn fingerprint(&self) -> String {
        let errors: Vec<u64> = self.max_errors.iter().map(|e| e.to_bits()).collect();
        let msgs: Vec<u64> = self
            .per_trial
            .iter()
            .map(|r| r.messages_per_user.to_bits())
            .collect();
        format!(
            "{};{:?};{};{};{};{:?}",
            self.trials,
            errors,
            self.mean_messages_per_user.to_bits(),
            self.alpha_bound.to_bits(),
            self.bound_satisfied_count,
            msgs
        )
    }

    /// Write the per-trial rows as CSV.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for record in &self.per_trial {
            w.serialize(record)
                .map_err(|e| Error::Codec(format!("csv: {e}")))?;
        }
        w.flush().map_err(|e| Error::Codec(format!("csv: {e}")))?;
        Ok(())
    }
}

fn check_dataset_compat(dataset: &Dataset, n: u64, domain_size: u64) -> Result<()> {
    if dataset.n() != n {
        return Err(Error::invalid_input(format!(
            "dataset has {} users but params expect n = {n}",
            dataset.n()
        )));
    }
    if dataset.domain_size != domain_size {
        return Err(Error::invalid_input(format!(
            "dataset domain {} does not match params domain {domain_size}",
            dataset.domain_size
        )));
    }
    if let Some(&bad) = dataset.values.iter().find(|&&v| v < 1 || v > domain_size) {
        return Err(Error::invalid_input(format!(
            "dataset value {bad} outside 1..={domain_size}"
        )));
    }
    Ok(())
}

/// Run the full frequency-estimation pipeline `trials` times and aggregate
/// the maximum estimation errors against the `(alpha, beta)` bound.
pub fn run_fe_experiment(
    dataset: &Dataset,
    params: &FeParams,
    trials: u64,
    beta: f64,
    seed: u64,
) -> Result<ErrorReport> {
    check_dataset_compat(dataset, params.n, params.domain_size)?;
    if trials < 1 {
        return Err(Error::invalid_parameter("trials must be >= 1"));
    }
    if params.variant == FeVariant::Fe0 && params.rho > 1.0 {
        return Err(Error::Config(format!(
            "fe0 requires rho <= 1 but rho = {:.6}; use the fe1 variant",
            params.rho
        )));
    }
    let alpha_bound = error_bound_alpha(params, beta)?;
    let truth = true_frequencies(dataset);

    let records = match params.variant {
        FeVariant::Fe0 => run_fe_trials(
            dataset,
            trials,
            seed,
            alpha_bound,
            &truth,
            |x, rng| randomize_fe0(x, params, rng).expect("params validated"),
            |bag| analyze_fe0_all(bag, params),
        ),
        FeVariant::Fe1 => run_fe_trials(
            dataset,
            trials,
            seed,
            alpha_bound,
            &truth,
            |x, rng| randomize_fe1(x, params, rng).expect("params validated"),
            |bag| analyze_fe1_all(bag, params),
        ),
    };

    Ok(assemble_error_report(records, trials, alpha_bound, beta))
}

/// Trials run in parallel; within a trial, users randomize sequentially on
/// their own substreams.
fn run_fe_trials<M, R, A>(
    dataset: &Dataset,
    trials: u64,
    seed: u64,
    alpha_bound: f64,
    truth: &[u64],
    randomize: R,
    analyze_all: A,
) -> Vec<TrialRecord>
where
    M: Send,
    R: Fn(u64, &mut rand_chacha::ChaCha12Rng) -> Vec<M> + Sync,
    A: Fn(&MessageBag<M>) -> Vec<FrequencyEstimate> + Sync,
{
    let n = dataset.values.len().max(1) as f64;
    exec::map_indexed(trials as usize, |trial| {
        let trial = trial as u64;
        let t0 = Instant::now();
        let per_user: Vec<Vec<M>> = dataset
            .values
            .iter()
            .enumerate()
            .map(|(user, &x)| {
                let mut rng = substream(seed, StreamDomain::Randomize, trial, user as u64);
                randomize(x, &mut rng)
            })
            .collect();
        let randomize_s = t0.elapsed().as_secs_f64();

        let t0 = Instant::now();
        let mut shuffle_rng = substream(seed, StreamDomain::Shuffle, trial, 0);
        let bag = shuffle(per_user, &mut shuffle_rng);
        let shuffle_s = t0.elapsed().as_secs_f64();

        let t0 = Instant::now();
        let estimates = analyze_all(&bag);
        let max_error = max_abs_error(&estimates, truth);
        let analyze_s = t0.elapsed().as_secs_f64();

        TrialRecord {
            trial,
            max_error,
            messages_per_user: bag.len() as f64 / n,
            within_bound: max_error <= alpha_bound,
            randomize_s,
            shuffle_s,
            analyze_s,
        }
    })
}

fn max_abs_error(estimates: &[FrequencyEstimate], truth: &[u64]) -> f64 {
    estimates
        .iter()
        .map(|e| (e.estimate - truth[e.element as usize] as f64).abs())
        .fold(0.0, f64::max)
}

fn assemble_error_report(
    records: Vec<TrialRecord>,
    trials: u64,
    alpha_bound: f64,
    beta: f64,
) -> ErrorReport {
    let max_errors: Vec<f64> = records.iter().map(|r| r.max_error).collect();
    let mean_messages_per_user =
        records.iter().map(|r| r.messages_per_user).sum::<f64>() / trials as f64;
    let bound_satisfied_count = records.iter().filter(|r| r.within_bound).count() as u64;
    let wall_times = PhaseTimings {
        randomize_s: records.iter().map(|r| r.randomize_s).sum(),
        shuffle_s: records.iter().map(|r| r.shuffle_s).sum(),
        analyze_s: records.iter().map(|r| r.analyze_s).sum(),
    };
    ErrorReport {
        trials,
        max_errors,
        mean_messages_per_user,
        alpha_bound,
        beta,
        bound_satisfied_count,
        wall_times,
        per_trial: records,
    }
}

/// One heavy-hitter trial, as a CSV row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecallTrialRecord {
    pub trial: u64,
    pub reported_size: u64,
    pub all_heavies_reported: bool,
    pub false_positives: u64,
    pub max_candidate_set: u64,
}

/// Heavy-hitter experiment report. Elements are reported in the dataset's
/// 1-based domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub trials: u64,
    /// Elements whose true frequency reaches `phi * n`, from the dataset.
    pub true_heavy: Vec<u64>,
    /// Per-trial size of the reported set.
    pub reported_sizes: Vec<u64>,
    /// Trials in which every true heavy element was reported.
    pub recall_count: u64,
    /// Per-trial count of reported elements that are not true heavies.
    pub false_positive_counts: Vec<u64>,
    /// Max over trials of each pruning layer's candidate-set size.
    pub max_candidates_per_layer: Vec<u64>,
    /// Per-trial max over layers of the candidate-set size.
    pub per_trial_max_candidates: Vec<u64>,
    pub mean_messages_per_user: f64,
    pub per_trial: Vec<RecallTrialRecord>,
}

impl RecallReport {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for record in &self.per_trial {
            w.serialize(record)
                .map_err(|e| Error::Codec(format!("csv: {e}")))?;
        }
        w.flush().map_err(|e| Error::Codec(format!("csv: {e}")))?;
        Ok(())
    }
}

/// Run the heavy-hitter pipeline `trials` times, recording recall of the
/// exact heavy set, reported-set sizes, and candidate-set growth.
///
/// Trials run sequentially (each holds a large transient bag); users
/// randomize in parallel within a trial.
pub fn run_hhd_experiment(
    dataset: &Dataset,
    params: &HhdParams,
    trials: u64,
    seed: u64,
) -> Result<RecallReport> {
    check_dataset_compat(dataset, params.n, params.domain_size)?;
    if trials < 1 {
        return Err(Error::invalid_parameter("trials must be >= 1"));
    }
    let truth = true_frequencies(dataset);
    let true_heavy: Vec<u64> = (1..=dataset.domain_size)
        .filter(|&x| truth[x as usize] as f64 >= params.tau)
        .collect();
    let heavy_set: BTreeSet<u64> = true_heavy.iter().copied().collect();

    let mut records = Vec::with_capacity(trials as usize);
    let mut max_candidates_per_layer = vec![0u64; params.layer_count.saturating_sub(1) as usize];
    let mut total_messages = 0u64;
    for trial in 0..trials {
        let per_user: Vec<Vec<hhd::HhdMessage>> =
            exec::map_indexed(dataset.values.len(), |user| {
                let mut rng = substream(seed, StreamDomain::Randomize, trial, user as u64);
                // The harness domain is 1-based; the prefix tree is 0-based.
                hhd::randomize(dataset.values[user] - 1, params, &mut rng)
                    .expect("params validated")
            });
        let mut shuffle_rng = substream(seed, StreamDomain::Shuffle, trial, 0);
        let bag = shuffle(per_user, &mut shuffle_rng);
        total_messages += bag.len() as u64;

        let (trace, heavy0) = hhd::analyze_with_trace(&bag, params)?;
        let reported: BTreeSet<u64> = heavy0.into_iter().map(|x| x + 1).collect();
        let mut max_candidate_set = 0u64;
        for set in &trace {
            let size = set.prefixes.len() as u64;
            max_candidate_set = max_candidate_set.max(size);
            let slot = (set.layer - 1) as usize;
            max_candidates_per_layer[slot] = max_candidates_per_layer[slot].max(size);
        }
        records.push(RecallTrialRecord {
            trial,
            reported_size: reported.len() as u64,
            all_heavies_reported: heavy_set.is_subset(&reported),
            false_positives: reported.difference(&heavy_set).count() as u64,
            max_candidate_set,
        });
    }

    Ok(RecallReport {
        trials,
        true_heavy,
        reported_sizes: records.iter().map(|r| r.reported_size).collect(),
        recall_count: records.iter().filter(|r| r.all_heavies_reported).count() as u64,
        false_positive_counts: records.iter().map(|r| r.false_positives).collect(),
        max_candidates_per_layer,
        per_trial_max_candidates: records.iter().map(|r| r.max_candidate_set).collect(),
        mean_messages_per_user: total_messages as f64
            / (trials as f64 * dataset.values.len().max(1) as f64),
        per_trial: records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fe::Fe0Message;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn shuffle_preserves_the_multiset() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let bags = vec![vec![1u64, 2], vec![3], vec![], vec![2, 2]];
        let bag = shuffle(bags, &mut rng);
        let mut sorted = bag.into_messages();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![1, 2, 2, 2, 3]);
        let empty: Vec<Vec<u64>> = Vec::new();
        assert!(shuffle(empty, &mut rng).is_empty());
    }

    #[test]
    fn shuffle_count_preserved_on_random_bags() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..50 {
            let bags: Vec<Vec<u32>> = (0..rng.gen_range(0..20))
                .map(|_| (0..rng.gen_range(0..30)).map(|_| rng.gen()).collect())
                .collect();
            let total: usize = bags.iter().map(Vec::len).sum();
            assert_eq!(shuffle(bags, &mut rng).len(), total);
        }
    }

    #[test]
    fn planted_dataset_is_exact() {
        let d = generate_dataset(
            &DatasetSpec::Planted { heavy: vec![(7, 100)], tail: 0 },
            100,
            50,
            9,
        )
        .unwrap();
        assert_eq!(d.values, vec![7u64; 100]);
        // Counts summing over n are rejected.
        assert!(generate_dataset(
            &DatasetSpec::Planted { heavy: vec![(7, 101)], tail: 0 },
            100,
            50,
            9,
        )
        .is_err());
        assert!(generate_dataset(
            &DatasetSpec::Planted { heavy: vec![(7, 90)], tail: 5 },
            100,
            50,
            9,
        )
        .is_err());
    }

    #[test]
    fn datasets_are_deterministic_per_seed() {
        for spec in [
            DatasetSpec::Uniform,
            DatasetSpec::Zipf { exponent: 1.1 },
            DatasetSpec::Planted { heavy: vec![(3, 10)], tail: 90 },
        ] {
            let a = generate_dataset(&spec, 100, 16, 77).unwrap();
            let b = generate_dataset(&spec, 100, 16, 77).unwrap();
            assert_eq!(a, b);
            let c = generate_dataset(&spec, 100, 16, 78).unwrap();
            assert_ne!(a.values, c.values);
        }
    }

    #[test]
    fn uniform_dataset_is_balanced() {
        let n = 1_000_000u64;
        let domain = 10u64;
        let d = generate_dataset(&DatasetSpec::Uniform, n, domain, 5).unwrap();
        let counts = true_frequencies(&d);
        let expect = n as f64 / domain as f64;
        let sigma = (n as f64 * (1.0 / domain as f64) * (1.0 - 1.0 / domain as f64)).sqrt();
        for x in 1..=domain {
            assert!(
                (counts[x as usize] as f64 - expect).abs() <= 10.0 * sigma,
                "element {x}: {}",
                counts[x as usize]
            );
        }
    }

    #[test]
    fn zipf_dataset_is_skewed_toward_small_ranks() {
        let d = generate_dataset(&DatasetSpec::Zipf { exponent: 1.1 }, 50_000, 100, 3).unwrap();
        let counts = true_frequencies(&d);
        assert!(counts[1] > counts[50] * 5, "{} vs {}", counts[1], counts[50]);
        assert!(d.values.iter().all(|&v| (1..=100).contains(&v)));
    }

    #[test]
    fn noiseless_fe0_pipeline_has_zero_error() {
        // rho forced to 0: the analyzer sees exact counts.
        let n = 500u64;
        let domain = 20u64;
        let dataset = generate_dataset(&DatasetSpec::Uniform, n, domain, 11).unwrap();
        let params = FeParams {
            n,
            domain_size: domain,
            bins: domain,
            prime: 0,
            rho: 0.0,
            p_col: 0.0,
            epsilon: 1.0,
            delta: 1e-6,
            gamma_robust: 1.0,
            variant: FeVariant::Fe0,
        };
        let report = run_fe_experiment(&dataset, &params, 5, 0.1, 123).unwrap();
        assert!(report.max_errors.iter().all(|&e| e == 0.0));
        assert_eq!(report.bound_satisfied_count, 5);
        assert_eq!(report.mean_messages_per_user, 1.0);
    }

    #[test]
    fn fe_experiment_is_deterministic_and_messages_track_rho() {
        let n = 2000u64;
        let domain = 64u64;
        let dataset = generate_dataset(&DatasetSpec::Zipf { exponent: 1.1 }, n, domain, 21).unwrap();
        let params = FeParams::fe1(n, domain, 16, 1.0, 1e-4, 1.0).unwrap();
        let a = run_fe_experiment(&dataset, &params, 20, 0.1, 99).unwrap();
        let b = run_fe_experiment(&dataset, &params, 20, 0.1, 99).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let expect = 1.0 + params.rho;
        assert!(
            (a.mean_messages_per_user - expect).abs() <= 0.01 * expect,
            "messages {} vs {}",
            a.mean_messages_per_user,
            expect
        );
    }

    #[test]
    fn analyzer_is_insensitive_to_bag_order() {
        let n = 300u64;
        let domain = 32u64;
        let params = FeParams::fe1(n, domain, 8, 1.0, 1e-4, 1.0).unwrap();
        let dataset = generate_dataset(&DatasetSpec::Uniform, n, domain, 13).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let mut msgs = Vec::new();
        for &x in &dataset.values {
            msgs.extend(crate::fe::randomize_fe1(x, &params, &mut rng).unwrap());
        }
        let bag = MessageBag::from(msgs.clone());
        let baseline = crate::fe::analyze_fe1_all(&bag, &params);
        for _ in 0..5 {
            msgs.shuffle(&mut rng);
            let permuted = crate::fe::analyze_fe1_all(&MessageBag::from(msgs.clone()), &params);
            for (a, b) in baseline.iter().zip(&permuted) {
                assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
            }
        }
    }

    #[test]
    fn estimate_mass_is_conserved_in_expectation() {
        // Mean over trials of sum_x g_hat(x) should approach n.
        let n = 800u64;
        let domain = 40u64;
        let dataset = generate_dataset(&DatasetSpec::Zipf { exponent: 1.1 }, n, domain, 17).unwrap();
        let params = FeParams::fe1(n, domain, 10, 1.0, 1e-4, 1.0).unwrap();
        let trials = 100u64;
        let sums: Vec<f64> = (0..trials)
            .map(|trial| {
                let per_user: Vec<_> = dataset
                    .values
                    .iter()
                    .enumerate()
                    .map(|(user, &x)| {
                        let mut rng = substream(17, StreamDomain::Randomize, trial, user as u64);
                        crate::fe::randomize_fe1(x, &params, &mut rng).unwrap()
                    })
                    .collect();
                let mut srng = substream(17, StreamDomain::Shuffle, trial, 0);
                let bag = shuffle(per_user, &mut srng);
                crate::fe::analyze_fe1_all(&bag, &params)
                    .iter()
                    .map(|e| e.estimate)
                    .sum()
            })
            .collect();
        let mean = sums.iter().sum::<f64>() / trials as f64;
        let var = sums.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / trials as f64;
        let se = (var / trials as f64).sqrt().max(1e-9);
        assert!(
            (mean - n as f64).abs() <= 4.0 * se,
            "mean mass {mean} vs n {n} (se {se})"
        );
    }

    #[test]
    fn hhd_experiment_recalls_a_dominant_element() {
        let n = 400u64;
        let mut params = HhdParams::derive(n, 32, 8, 1.0, 1e-4, 0.2, 0.1, 16.0, 1.0).unwrap();
        params.q_sub = 1.0;
        for lp in &mut params.layers {
            lp.rho = 0.0;
        }
        let dataset = generate_dataset(
            &DatasetSpec::Planted { heavy: vec![(5, 400)], tail: 0 },
            n,
            32,
            19,
        )
        .unwrap();
        let report = run_hhd_experiment(&dataset, &params, 4, 55).unwrap();
        assert_eq!(report.true_heavy, vec![5]);
        assert_eq!(report.recall_count, 4);
        assert!(report.reported_sizes.iter().all(|&s| s == 1));
        assert!(report.false_positive_counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn hhd_experiment_is_deterministic() {
        let n = 300u64;
        let params = HhdParams::derive(n, 16, 4, 1.0, 1e-3, 0.1, 0.1, 16.0, 1.0).unwrap();
        let dataset = generate_dataset(&DatasetSpec::Uniform, n, 16, 23).unwrap();
        let a = run_hhd_experiment(&dataset, &params, 3, 66).unwrap();
        let b = run_hhd_experiment(&dataset, &params, 3, 66).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reports_serialize_to_csv_rows() {
        let records = vec![TrialRecord {
            trial: 0,
            max_error: 1.5,
            messages_per_user: 2.25,
            within_bound: true,
            randomize_s: 0.0,
            shuffle_s: 0.0,
            analyze_s: 0.0,
        }];
        let report = assemble_error_report(records, 1, 10.0, 0.1);
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("trial,max_error,messages_per_user,within_bound"));
        assert!(text.contains("0,1.5,2.25,true"));
    }

    #[test]
    fn experiment_rejects_mismatched_dataset() {
        let dataset = generate_dataset(&DatasetSpec::Uniform, 100, 16, 1).unwrap();
        let params = FeParams::fe1(200, 16, 4, 1.0, 1e-4, 1.0).unwrap();
        assert!(run_fe_experiment(&dataset, &params, 1, 0.1, 0).is_err());
    }

    #[test]
    fn mixed_bag_type_cannot_be_constructed() {
        // Homogeneity is enforced by the type system; this is the compile-time
        // shape of the "mixed message types" error.
        let bags: Vec<Vec<Fe0Message>> = vec![vec![Fe0Message { value: 1 }]];
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let bag = shuffle(bags, &mut rng);
        assert_eq!(bag.len(), 1);
    }
}
