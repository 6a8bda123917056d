//! Seeded synthetic ballot profiles in every elicitation format.
//!
//! Each voter holds a private value for every project. Values grow
//! sublinearly with cost, so value per dollar falls with cost. Voters who must
//! respect the budget (knapsack, ranking, pairwise value-for-money choices)
//! rank by value per dollar, while approval voters pick their top-K by raw
//! value and so lean toward expensive projects.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::comparisons::assign_pairs;
use crate::error::Result;
use crate::model::{Allocation, Ballot, ElectionConfig, PairChoice, ProjectId, ProjectSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub voters: usize,
    pub projects: usize,
    /// Comparisons per voter for the pairwise format.
    pub pairs: usize,
    pub approval_limit: usize,
    pub ranking_length: usize,
    pub seed: u64,
    /// Value scales as `cost^value_exponent`; below 1, larger projects are
    /// worth more in total and less per dollar.
    pub value_exponent: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            voters: 200,
            projects: 10,
            pairs: 5,
            approval_limit: 4,
            ranking_length: 4,
            seed: 0,
            value_exponent: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProfile {
    pub config: ElectionConfig,
    /// One ballot per voter and format, voter-major.
    pub ballots: Vec<Ballot>,
}

fn by_key_desc(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

pub fn generate(opts: &SynthOptions) -> Result<SyntheticProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = opts.projects.max(2);
    let costs: Vec<u64> = (0..n).map(|_| rng.gen_range(1..=20)).collect();
    let quality: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let total: u64 = costs.iter().sum();
    let budget = (total / 3).max(*costs.iter().max().unwrap()).min(total);
    let ids: Vec<ProjectId> = (0..n).map(|p| ProjectId::new(format!("p{p}"))).collect();
    let mut config = ElectionConfig::fixed(
        ids.iter().zip(&costs).map(|(id, &c)| ProjectSpec::new(id.clone(), c)).collect(),
        budget,
    )
    .with_approval_limit(opts.approval_limit.min(n));
    config.ranking_length = Some(opts.ranking_length.min(n));

    let pair_count = opts.pairs.min(n * (n - 1) / 2);
    let mut ballots = Vec::with_capacity(opts.voters * 4);
    for v in 0..opts.voters {
        let voter = format!("v{v}");
        let value: Vec<f64> = (0..n)
            .map(|p| (costs[p] as f64).powf(opts.value_exponent) * quality[p] * rng.gen_range(0.5..1.5))
            .collect();
        let per_dollar: Vec<f64> = (0..n).map(|p| value[p] / costs[p] as f64).collect();
        let thrifty = by_key_desc(&per_dollar);

        let mut allocation = Allocation::new();
        let mut left = budget;
        for &p in &thrifty {
            let w = costs[p].min(left);
            if w > 0 {
                allocation.set(ids[p].clone(), w);
                left -= w;
            }
        }
        ballots.push(Ballot::knapsack(voter.clone(), allocation));

        let k = opts.approval_limit.min(n);
        ballots.push(Ballot::approval(
            voter.clone(),
            by_key_desc(&value).into_iter().take(k).map(|p| ids[p].clone()),
        ));

        let comparisons = assign_pairs(&ids, &voter, pair_count, opts.seed)?
            .into_iter()
            .map(|(a, b)| {
                let (ia, ib) = (index(&ids, &a), index(&ids, &b));
                let winner = if per_dollar[ib] > per_dollar[ia] { b.clone() } else { a.clone() };
                PairChoice { pair: [a, b], winner }
            })
            .collect();
        ballots.push(Ballot::pairwise(voter.clone(), comparisons));

        let r = opts.ranking_length.min(n);
        ballots.push(Ballot::ranking(voter, thrifty.into_iter().take(r).map(|p| ids[p].clone())));
    }
    Ok(SyntheticProfile { config, ballots })
}

fn index(ids: &[ProjectId], id: &ProjectId) -> usize {
    ids.iter().position(|x| x == id).expect("pair drawn from ids")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Election;

    #[test]
    fn ballots_validate_and_are_reproducible() {
        let opts = SynthOptions { voters: 30, seed: 4, ..Default::default() };
        let a = generate(&opts).unwrap();
        let e = Election::new(a.config.clone()).unwrap();
        assert_eq!(a.ballots.len(), 120);
        for b in &a.ballots {
            e.validate_ballot(b).unwrap();
        }
        assert_eq!(a, generate(&opts).unwrap());
        assert_ne!(a, generate(&SynthOptions { seed: 5, ..opts }).unwrap());
    }

    #[test]
    fn zero_voters() {
        let p = generate(&SynthOptions { voters: 0, ..Default::default() }).unwrap();
        assert!(p.ballots.is_empty());
        Election::new(p.config).unwrap();
    }
}
