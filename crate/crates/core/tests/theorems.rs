use pbvote_core::strategy::{
    knapsack_partial_counterexample, verify_integral_bound, verify_partial_strategyproofness,
    verify_partial_suite, verify_strategyproofness, verify_welfare_suite, Domination,
    InstanceShape, Rule, DEFAULT_ENUMERATION_LIMIT,
};
use pbvote_core::BudgetMode;

const LIMIT: u128 = DEFAULT_ENUMERATION_LIMIT;

#[test]
fn sincere_vote_dominates_fixed_budget() {
    let r = verify_strategyproofness(InstanceShape::fixed(12), 200, 1000, LIMIT).unwrap();
    assert!(r.passed(), "{}", serde_json::to_string(&r.violations[0]).unwrap());
    assert!(r.votes_checked > 200);
}

#[test]
fn sincere_vote_dominates_balanced_budget() {
    let r = verify_strategyproofness(InstanceShape::balanced(10), 100, 2000, LIMIT).unwrap();
    assert!(r.passed(), "{}", serde_json::to_string(&r.violations[0]).unwrap());
}

#[test]
fn sincere_vote_dominates_deficit_augmented() {
    let shape = InstanceShape {
        mode: BudgetMode::DeficitAugmented,
        ..InstanceShape::balanced(8)
    };
    let r = verify_strategyproofness(shape, 100, 3000, LIMIT).unwrap();
    assert!(r.passed(), "{}", serde_json::to_string(&r.violations[0]).unwrap());
}

#[test]
fn tally_maximizes_welfare() {
    let r = verify_welfare_suite(InstanceShape::fixed(12), 100, 4000, LIMIT).unwrap();
    assert!(r.failures.is_empty());
    let r = verify_welfare_suite(InstanceShape::balanced(10), 100, 4500, LIMIT).unwrap();
    assert!(r.failures.is_empty());
}

#[test]
fn domination_closure_usually_but_not_always_available() {
    let strict = verify_partial_suite(12, 300, 5000, Domination::Strict, LIMIT).unwrap();
    let weak = verify_partial_suite(12, 300, 5000, Domination::Weak, LIMIT).unwrap();
    assert!(strict.failures.len() < weak.failures.len());
    assert!(strict.failures.len() * 20 < 300, "{} failures", strict.failures.len());
    let pinned = knapsack_partial_counterexample();
    let r = verify_partial_strategyproofness(&pinned, Rule::Knapsack, Domination::Strict, LIMIT).unwrap();
    assert!(!r.holds);
}

#[test]
fn integral_rule_loses_at_most_one_project() {
    let r = verify_integral_bound(100, 6000, LIMIT).unwrap();
    assert!(r.violations.is_empty());
    assert!(r.strict_gains > 0, "no manipulable instance sampled");
}
