//! Noise model over votes and its maximum-likelihood estimate.
//!
//! A vote is any consistent dollar set of size at most `B`, drawn with
//! probability proportional to `exp(overlap with the ground truth)`. The
//! support is enumerated once so sampling is exact.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Allocation, BudgetMode, Election, ProjectKind};
use crate::strategy::{candidate_votes, Rule};
use crate::tally::{knapsack_dense, scores_from_votes};
use crate::utility::overlap_utility;

pub struct NoiseModel {
    election: Election,
    ground_truth: Vec<u64>,
    support: Vec<Vec<u64>>,
    overlaps: Vec<u64>,
    weights: WeightedIndex<f64>,
}

fn require_fixed(election: &Election) -> Result<()> {
    if election.mode() == BudgetMode::FixedBudget {
        Ok(())
    } else {
        Err(Error::WrongMode {
            operation: "noise model",
            mode: election.mode().to_string(),
        })
    }
}

/// Every allocation within caps spending at most `B`.
fn underfull_support(election: &Election, limit: u128) -> Result<Vec<Vec<u64>>> {
    let budget = election.budget();
    let mut count = 0u128;
    for b in 0..=budget {
        let mut sub = election.config().clone();
        sub.budget = b;
        count += crate::strategy::count_candidate_votes(&Election::new(sub)?, Rule::Knapsack);
    }
    if count > limit {
        return Err(Error::EnumerationLimit { count, limit });
    }
    let mut all = Vec::with_capacity(count as usize);
    for b in (0..=budget).rev() {
        let mut sub = election.config().clone();
        sub.budget = b;
        all.extend(candidate_votes(&Election::new(sub)?, Rule::Knapsack, limit)?);
    }
    Ok(all)
}

impl NoiseModel {
    pub fn new(election: Election, ground_truth: &Allocation, limit: u128) -> Result<Self> {
        require_fixed(&election)?;
        let truth = election.dense(ground_truth)?;
        if truth.iter().sum::<u64>() != election.budget() {
            return Err(Error::Model(format!(
                "ground truth spends {} of {}",
                truth.iter().sum::<u64>(),
                election.budget()
            )));
        }
        let support = underfull_support(&election, limit)?;
        let overlaps: Vec<u64> = support
            .iter()
            .map(|v| v.iter().zip(&truth).map(|(a, b)| *a.min(b)).sum())
            .collect();
        // Shift by B so the largest weight is 1.
        let b = election.budget() as f64;
        let weights = WeightedIndex::new(overlaps.iter().map(|&o| (o as f64 - b).exp()))
            .map_err(|e| Error::Model(e.to_string()))?;
        Ok(NoiseModel {
            election,
            ground_truth: truth,
            support,
            overlaps,
            weights,
        })
    }

    pub fn election(&self) -> &Election {
        &self.election
    }

    pub fn ground_truth(&self) -> Allocation {
        self.election.allocation(&self.ground_truth)
    }

    pub fn support_size(&self) -> usize {
        self.support.len()
    }

    /// Exact probability of drawing `vote`.
    pub fn probability(&self, vote: &Allocation) -> Result<f64> {
        let dense = self.election.dense(vote)?;
        let z: f64 = self.overlaps.iter().map(|&o| (o as f64).exp()).sum();
        Ok(self
            .support
            .iter()
            .position(|v| *v == dense)
            .map_or(0.0, |i| (self.overlaps[i] as f64).exp() / z))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Allocation {
        self.election.allocation(&self.support[self.weights.sample(rng)])
    }

    /// `n` votes from a generator seeded with `seed`.
    pub fn sample_votes(&self, n: usize, seed: u64) -> Vec<Allocation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample(&mut rng)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MleEstimate {
    pub allocation: Allocation,
    /// Summed overlap with the votes.
    pub score: u64,
    /// Number of complete allocations attaining the score.
    pub maximizers: usize,
}

fn dense_votes(election: &Election, votes: &[Allocation]) -> Result<Vec<Vec<u64>>> {
    votes
        .iter()
        .map(|v| {
            let d = election.dense(v)?;
            if d.iter().sum::<u64>() > election.budget() {
                return Err(Error::Model(format!("vote {v} spends more than the budget")));
            }
            Ok(d)
        })
        .collect()
}

/// Summed overlap between `allocation` and each vote.
pub fn likelihood_score(allocation: &Allocation, votes: &[Allocation]) -> u64 {
    votes.iter().map(|v| overlap_utility(allocation, v)).sum()
}

/// Complete allocation maximizing summed overlap with the votes, found by
/// enumeration. Among maximizers the one whose dollars rank earliest in the
/// tie-break order (compared as sorted rank lists) is returned.
pub fn mle_estimate(votes: &[Allocation], election: &Election, limit: u128) -> Result<MleEstimate> {
    require_fixed(election)?;
    let dense = dense_votes(election, votes)?;
    let candidates = candidate_votes(election, Rule::Knapsack, limit)?;
    let scores: Vec<u64> = candidates
        .par_iter()
        .map(|c| {
            dense
                .iter()
                .map(|v| c.iter().zip(v).map(|(a, b)| *a.min(b)).sum::<u64>())
                .sum()
        })
        .collect();
    let best = *scores.iter().max().ok_or(Error::EmptyData("no complete allocation"))?;
    let rank_key = |c: &Vec<u64>| {
        let mut ranks: Vec<usize> = crate::model::expand_dense(election, c)
            .into_iter()
            .map(|f| election.tie_rank(f))
            .collect();
        ranks.sort_unstable();
        ranks
    };
    let winners: Vec<&Vec<u64>> = candidates
        .iter()
        .zip(&scores)
        .filter(|(_, &s)| s == best)
        .map(|(c, _)| c)
        .collect();
    let chosen = winners
        .iter()
        .min_by_key(|c| rank_key(c))
        .expect("at least one maximizer");
    Ok(MleEstimate {
        allocation: election.allocation_of(chosen, ProjectKind::Expenditure),
        score: best,
        maximizers: winners.len(),
    })
}

/// The per-dollar top-`B` rule applied directly to votes that may spend
/// less than the budget.
pub fn knapsack_of_votes(votes: &[Allocation], election: &Election) -> Result<Allocation> {
    require_fixed(election)?;
    let dense = dense_votes(election, votes)?;
    let scores = scores_from_votes(election, dense.iter().map(Vec::as_slice));
    Ok(election.allocation_of(
        &knapsack_dense(election, &scores, election.budget()),
        ProjectKind::Expenditure,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactEstimate {
    pub allocation: Allocation,
    pub log_likelihood: f64,
}

/// Complete allocation maximizing the full noise-model likelihood, including
/// the normalizing constant. Consistent sets with at most `B` dollars do not
/// form a symmetric family, so that constant depends on the candidate and the
/// overlap argmax alone can settle on a different set.
pub fn exact_mle_estimate(
    votes: &[Allocation],
    election: &Election,
    limit: u128,
) -> Result<ExactEstimate> {
    require_fixed(election)?;
    let dense = dense_votes(election, votes)?;
    let support = underfull_support(election, limit)?;
    let candidates = candidate_votes(election, Rule::Knapsack, limit)?;
    let n = dense.len() as f64;
    let scored: Vec<f64> = candidates
        .par_iter()
        .map(|c| {
            let shared = |t: &Vec<u64>| c.iter().zip(t).map(|(a, b)| *a.min(b)).sum::<u64>();
            let overlap: u64 = dense.iter().map(shared).sum();
            let z: f64 = support.iter().map(|t| (shared(t) as f64).exp()).sum();
            overlap as f64 - n * z.ln()
        })
        .collect();
    let mut best = 0;
    for (i, s) in scored.iter().enumerate() {
        if *s > scored[best] {
            best = i;
        }
    }
    Ok(ExactEstimate {
        allocation: election.allocation_of(&candidates[best], ProjectKind::Expenditure),
        log_likelihood: scored[best],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub seed: u64,
    pub profiles: usize,
    /// Profiles where the tally's likelihood score differs from the maximum.
    pub mismatches: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub seed: u64,
    pub trials: usize,
    pub samples: usize,
    /// Trials where the overlap argmax equals the ground truth.
    pub recovered: usize,
    pub rate: f64,
    /// Trials where the full-likelihood argmax equals the ground truth.
    pub exact_recovered: usize,
    pub exact_rate: f64,
}

/// Random fixed-budget election with total cost at most `max_cost` and a
/// uniformly drawn complete ground truth.
fn random_truth(rng: &mut ChaCha8Rng, max_cost: u64, limit: u128) -> Result<(Election, Allocation)> {
    let config = crate::strategy::random_config(rng, crate::strategy::InstanceShape::fixed(max_cost));
    let election = Election::new(config)?;
    let pool = crate::strategy::enumerate_valid_votes(&election, limit)?;
    let truth = pool[rng.gen_range(0..pool.len())].clone();
    Ok((election, truth))
}

/// On `profiles` random instances, draws `voters` votes from the noise model
/// and checks that the tally reaches the enumerated maximum likelihood score.
/// Profile `i` uses seed `seed + i`.
pub fn verify_mle_equivalence(
    profiles: usize,
    voters: usize,
    max_cost: u64,
    seed: u64,
    limit: u128,
) -> Result<EquivalenceReport> {
    let results: Vec<Result<Option<u64>>> = (0..profiles)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let (election, truth) = random_truth(&mut rng, max_cost, limit)?;
            let model = NoiseModel::new(election, &truth, limit)?;
            let votes: Vec<Allocation> = (0..voters).map(|_| model.sample(&mut rng)).collect();
            let est = mle_estimate(&votes, model.election(), limit)?;
            let tally = knapsack_of_votes(&votes, model.election())?;
            Ok((likelihood_score(&tally, &votes) != est.score).then_some(s))
        })
        .collect();
    let mut mismatches = Vec::new();
    for r in results {
        mismatches.extend(r?);
    }
    Ok(EquivalenceReport {
        seed,
        profiles,
        mismatches,
    })
}

/// Fraction of random instances where the estimate from `samples` noisy
/// votes is exactly the ground truth.
pub fn verify_recovery(
    trials: usize,
    samples: usize,
    max_cost: u64,
    seed: u64,
    limit: u128,
) -> Result<RecoveryReport> {
    let results: Vec<Result<(bool, bool)>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let (election, truth) = random_truth(&mut rng, max_cost, limit)?;
            let model = NoiseModel::new(election, &truth, limit)?;
            let votes: Vec<Allocation> = (0..samples).map(|_| model.sample(&mut rng)).collect();
            let est = mle_estimate(&votes, model.election(), limit)?;
            let exact = exact_mle_estimate(&votes, model.election(), limit)?;
            Ok((est.allocation == truth, exact.allocation == truth))
        })
        .collect();
    let (mut recovered, mut exact_recovered) = (0, 0);
    for r in results {
        let (a, b) = r?;
        recovered += a as usize;
        exact_recovered += b as usize;
    }
    let denom = trials.max(1) as f64;
    Ok(RecoveryReport {
        seed,
        trials,
        samples,
        recovered,
        rate: recovered as f64 / denom,
        exact_recovered,
        exact_rate: exact_recovered as f64 / denom,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub draws: usize,
    pub seed: u64,
    /// Draws of the ground truth itself.
    pub truth_draws: usize,
    /// Draws of sets with overlap `B - 1`.
    pub near_draws: usize,
    pub near_sets: usize,
    /// Empirical probability of the truth over that of one overlap `B - 1` set.
    pub ratio: f64,
    pub relative_error: f64,
}

/// Empirical check that one extra shared dollar multiplies the probability by `e`.
pub fn probability_ratio(model: &NoiseModel, draws: usize, seed: u64) -> RatioReport {
    let b = model.election.budget();
    let near_sets = model.overlaps.iter().filter(|&&o| o + 1 == b).count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut truth_draws, mut near_draws) = (0usize, 0usize);
    for _ in 0..draws {
        match model.overlaps[model.weights.sample(&mut rng)] {
            o if o == b => truth_draws += 1,
            o if o + 1 == b => near_draws += 1,
            _ => {}
        }
    }
    let ratio = truth_draws as f64 / (near_draws as f64 / near_sets as f64);
    RatioReport {
        draws,
        seed,
        truth_draws,
        near_draws,
        near_sets,
        ratio,
        relative_error: (ratio - std::f64::consts::E).abs() / std::f64::consts::E,
    }
}
