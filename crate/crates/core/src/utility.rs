//! Voter utility and cost models over allocations.

use std::collections::BTreeMap;

use num_rational::Ratio;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::model::{Allocation, Election, ProjectId};

/// Exact per-dollar value.
pub type Value = Ratio<i64>;

fn union_ids<'a>(a: &'a Allocation, b: &'a Allocation) -> impl Iterator<Item = &'a str> {
    let mut ids: Vec<&str> = a.iter().chain(b.iter()).map(|(p, _)| p.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
}

/// `sum_p |a_p - b_p|` without any completeness requirement.
pub fn l1_distance(a: &Allocation, b: &Allocation) -> u64 {
    union_ids(a, b).map(|p| a.get(p).abs_diff(b.get(p))).sum()
}

/// Dollar disagreement between an outcome and a voter's ideal. Only defined
/// when both spend exactly `budget`: on underfull outcomes this cost would
/// penalise money that was never spent.
pub fn l1_cost(outcome: &Allocation, ideal: &Allocation, budget: u64) -> Result<u64> {
    for (what, a) in [("outcome", outcome), ("ideal", ideal)] {
        if a.total() != budget {
            return Err(Error::Model(format!(
                "l1 cost needs complete allocations; {what} spends {} of {budget}",
                a.total()
            )));
        }
    }
    Ok(l1_distance(outcome, ideal))
}

/// Dollars on which the outcome and the ideal agree.
pub fn overlap_utility(outcome: &Allocation, ideal: &Allocation) -> u64 {
    union_ids(outcome, ideal)
        .map(|p| outcome.get(p).min(ideal.get(p)))
        .sum()
}

pub(crate) fn l1_dense(a: &[u64], b: &[u64]) -> u64 {
    a.iter().zip(b).map(|(x, y)| x.abs_diff(*y)).sum()
}

/// Checks `2 * overlap = B + |S_v| - l1` for a complete outcome and a vote
/// spending at most `budget`; for a complete vote this is `overlap = B - l1/2`.
pub fn check_equivalence(outcome: &Allocation, ideal: &Allocation, budget: u64) -> Result<bool> {
    if outcome.total() != budget {
        return Err(Error::Model(format!(
            "outcome spends {} of {budget}",
            outcome.total()
        )));
    }
    if ideal.total() > budget {
        return Err(Error::Model(format!(
            "vote spends {} which exceeds {budget}",
            ideal.total()
        )));
    }
    let lhs = 2 * overlap_utility(outcome, ideal) as u128;
    let rhs = budget as u128 + ideal.total() as u128;
    Ok(lhs + l1_distance(outcome, ideal) as u128 == rhs)
}

/// Expenditure plus revenue disagreement, plus the deficit gap when both
/// deficits are given.
pub fn balanced_disutility(
    outcome_exp: &Allocation,
    outcome_rev: &Allocation,
    ideal_exp: &Allocation,
    ideal_rev: &Allocation,
    deficits: Option<(u64, u64)>,
) -> u64 {
    l1_distance(outcome_exp, ideal_exp)
        + l1_distance(outcome_rev, ideal_rev)
        + deficits.map_or(0, |(outcome, ideal)| outcome.abs_diff(ideal))
}

/// Per-dollar marginal values of each project. A project's value for
/// receiving `w` dollars is the sum of its first `w` marginals; dollars past
/// the end of a sequence are worth zero.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConcaveMarginals {
    marginals: BTreeMap<ProjectId, Vec<Value>>,
}

impl ConcaveMarginals {
    /// Fails unless every sequence is non-negative and non-increasing.
    pub fn new(marginals: BTreeMap<ProjectId, Vec<Value>>) -> Result<Self> {
        for (p, seq) in &marginals {
            if let Some(v) = seq.iter().find(|v| **v < Value::zero()) {
                return Err(Error::Model(format!("negative marginal {v} for `{p}`")));
            }
            if let Some(t) = seq.windows(2).position(|w| w[1] > w[0]) {
                return Err(Error::Model(format!(
                    "marginals of `{p}` increase at dollar {}",
                    t + 2
                )));
            }
        }
        Ok(ConcaveMarginals { marginals })
    }

    /// Value 1 for each dollar up to the ideal amount, then 0.
    pub fn overlap_shaped(ideal: &Allocation) -> Self {
        let marginals = ideal
            .iter()
            .map(|(p, w)| (p.clone(), vec![Value::from_integer(1); w as usize]))
            .collect();
        ConcaveMarginals { marginals }
    }

    pub fn get(&self, project: &str, dollar: u64) -> Value {
        self.marginals
            .get(project)
            .and_then(|seq| seq.get((dollar as usize).checked_sub(1)?))
            .copied()
            .unwrap_or_else(Value::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ProjectId, &[Value])> {
        self.marginals.iter().map(|(p, s)| (p, s.as_slice()))
    }

    /// Marginals laid out by flat subproject index of `election`.
    pub fn flat(&self, election: &Election) -> Result<Vec<Value>> {
        let mut flat = vec![Value::zero(); election.subproject_count()];
        for (id, seq) in &self.marginals {
            let p = election
                .index_of(id.as_str())
                .ok_or_else(|| Error::UnknownProject(id.clone()))?;
            if seq.len() as u64 > election.cost(p) {
                return Err(Error::Model(format!(
                    "`{id}` has {} marginals but costs {}",
                    seq.len(),
                    election.cost(p)
                )));
            }
            let start = election.offset(p);
            flat[start..start + seq.len()].copy_from_slice(seq);
        }
        Ok(flat)
    }
}

pub fn additive_concave_utility(outcome: &Allocation, marginals: &ConcaveMarginals) -> Value {
    outcome
        .iter()
        .flat_map(|(p, w)| (1..=w).map(move |t| marginals.get(p.as_str(), t)))
        .sum()
}

pub(crate) fn concave_dense(election: &Election, flat: &[Value], amounts: &[u64]) -> Value {
    amounts
        .iter()
        .enumerate()
        .flat_map(|(p, &w)| {
            let start = election.offset(p);
            flat[start..start + w as usize].iter().copied()
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum UtilityModel {
    L1Cost,
    Overlap,
    AdditiveConcave(ConcaveMarginals),
}

impl UtilityModel {
    /// Utility of `outcome` for a voter whose ideal is `ideal`, oriented so
    /// that larger is better: the l1 cost is negated.
    pub fn utility(&self, outcome: &Allocation, ideal: &Allocation) -> Value {
        match self {
            UtilityModel::L1Cost => -Value::from_integer(l1_distance(outcome, ideal) as i64),
            UtilityModel::Overlap => Value::from_integer(overlap_utility(outcome, ideal) as i64),
            UtilityModel::AdditiveConcave(m) => additive_concave_utility(outcome, m),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            UtilityModel::L1Cost => "l1",
            UtilityModel::Overlap => "overlap",
            UtilityModel::AdditiveConcave(_) => "additive-concave",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn alloc(pairs: &[(&str, u64)]) -> Allocation {
        pairs.iter().map(|&(p, w)| (p, w)).collect()
    }

    fn r(n: i64) -> Value {
        Value::from_integer(n)
    }

    #[test]
    fn three_voter_pair() {
        let ideal = alloc(&[("P1", 4), ("P2", 5), ("P3", 1)]);
        let out = alloc(&[("P1", 3), ("P2", 5), ("P3", 2)]);
        assert_eq!(l1_cost(&out, &ideal, 10).unwrap(), 2);
        assert_eq!(overlap_utility(&out, &ideal), 9);
        assert!(check_equivalence(&out, &ideal, 10).unwrap());
        let m = ConcaveMarginals::overlap_shaped(&ideal);
        assert_eq!(additive_concave_utility(&out, &m), r(9));
    }

    #[test]
    fn boundary_values() {
        let a = alloc(&[("x", 4)]);
        let b = alloc(&[("y", 4)]);
        assert_eq!(l1_cost(&a, &a, 4).unwrap(), 0);
        assert_eq!(l1_cost(&a, &b, 4).unwrap(), 8);
        assert_eq!(overlap_utility(&a, &a), 4);
        assert_eq!(overlap_utility(&alloc(&[("p", 10)]), &alloc(&[("p", 5)])), 5);
        assert!(check_equivalence(&a, &a, 4).unwrap());
    }

    #[test]
    fn l1_rejects_underfull() {
        // Outcome funds only 2 of 4 dollars; the cost would charge the voter
        // for dollars nobody spent.
        let out = alloc(&[("x", 2)]);
        let ideal = alloc(&[("x", 2), ("y", 2)]);
        assert!(matches!(l1_cost(&out, &ideal, 4), Err(Error::Model(_))));
    }

    #[test]
    fn concave_validation_and_sums() {
        let ok = ConcaveMarginals::new([(ProjectId::from("p"), vec![r(3), r(2), r(1)])].into()).unwrap();
        assert_eq!(additive_concave_utility(&alloc(&[("p", 2)]), &ok), r(5));
        assert_eq!(additive_concave_utility(&alloc(&[("p", 2)]), &ConcaveMarginals::default()), r(0));
        assert!(ConcaveMarginals::new([(ProjectId::from("p"), vec![r(1), r(2)])].into()).is_err());
        assert!(ConcaveMarginals::new([(ProjectId::from("p"), vec![r(-1)])].into()).is_err());
    }

    #[test]
    fn balanced_examples() {
        let e = alloc(&[("x", 2)]);
        let rev = alloc(&[("t", 2)]);
        assert_eq!(balanced_disutility(&e, &rev, &e, &rev, None), 0);
        let ideal = alloc(&[("P1", 4), ("P2", 5), ("P3", 1)]);
        let out = alloc(&[("P1", 3), ("P2", 5), ("P3", 2)]);
        assert_eq!(balanced_disutility(&out, &rev, &ideal, &rev, None), 2);
        assert_eq!(balanced_disutility(&e, &rev, &e, &rev, Some((2, 0))), 2);
    }

    #[test]
    fn corollary_regime_underfull_vote() {
        let out = alloc(&[("a", 3), ("b", 2)]);
        let vote = alloc(&[("a", 1), ("c", 1)]);
        assert!(check_equivalence(&out, &vote, 5).unwrap());
        assert!(check_equivalence(&vote, &out, 5).is_err());
    }

    /// Two random allocations of exactly `budget` over `caps`.
    fn complete_pair() -> impl Strategy<Value = (Vec<u64>, Allocation, Allocation)> {
        prop::collection::vec(1u64..6, 1..6).prop_flat_map(|caps| {
            let total: u64 = caps.iter().sum();
            (Just(caps), 0..=total, any::<u64>(), any::<u64>())
        })
        .prop_map(|(caps, budget, s1, s2)| {
            let a = fill(&caps, budget, s1);
            let b = fill(&caps, budget, s2);
            (caps, a, b)
        })
    }

    /// Deterministic pseudo-random fill of `budget` dollars respecting caps.
    fn fill(caps: &[u64], budget: u64, seed: u64) -> Allocation {
        let mut w = vec![0u64; caps.len()];
        let mut state = seed | 1;
        let mut left = budget;
        while left > 0 {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let p = (state % caps.len() as u64) as usize;
            if w[p] < caps[p] {
                w[p] += 1;
                left -= 1;
            }
        }
        w.iter()
            .enumerate()
            .map(|(i, &x)| (ProjectId::new(format!("p{i}")), x))
            .collect()
    }

    proptest! {
        #[test]
        fn overlap_l1_identity((_, a, b) in complete_pair()) {
            let budget = a.total();
            prop_assert_eq!(2 * overlap_utility(&a, &b), 2 * budget - l1_cost(&a, &b, budget).unwrap());
            prop_assert!(check_equivalence(&a, &b, budget).unwrap());
        }

        #[test]
        fn overlap_symmetric_and_concave_matches((_, a, b) in complete_pair()) {
            prop_assert_eq!(overlap_utility(&a, &b), overlap_utility(&b, &a));
            let m = ConcaveMarginals::overlap_shaped(&b);
            prop_assert_eq!(additive_concave_utility(&a, &m), r(overlap_utility(&a, &b) as i64));
        }

        #[test]
        fn triangle_inequality((caps, a, b) in complete_pair(), s in any::<u64>()) {
            let c = fill(&caps, a.total(), s);
            prop_assert!(l1_distance(&a, &c) <= l1_distance(&a, &b) + l1_distance(&b, &c));
        }

        #[test]
        fn free_disposal((caps, a, b) in complete_pair(), extra in any::<u64>()) {
            // adding dollars to the outcome never lowers overlap
            let mut more = a.clone();
            let i = (extra % caps.len() as u64) as usize;
            let id = format!("p{i}");
            if more.get(&id) < caps[i] {
                more.set(id.as_str(), more.get(&id) + 1);
            }
            prop_assert!(overlap_utility(&more, &b) >= overlap_utility(&a, &b));
        }
    }
}
