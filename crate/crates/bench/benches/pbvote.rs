use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pbvote_core::comparisons::{funded_projects, ComparisonMatrix};
use pbvote_core::mle::{mle_estimate, NoiseModel};
use pbvote_core::strategy::{
    best_response, kapproval_counterexample, verify_strategyproofness, InstanceShape, Rule,
    DEFAULT_ENUMERATION_LIMIT,
};
use pbvote_core::synth::{generate, SynthOptions};
use pbvote_core::tally::{ballots_for, score_ballots, tally, Method};
use pbvote_core::{Allocation, Election, ElectionConfig, ProjectSpec};

fn tallies(c: &mut Criterion) {
    let mut group = c.benchmark_group("tally");
    for voters in [100, 1000, 10_000] {
        let profile = generate(&SynthOptions { voters, projects: 20, ..SynthOptions::default() }).unwrap();
        let election = Election::new(profile.config.clone()).unwrap();
        for method in [Method::Knapsack, Method::KApproval, Method::Ranking] {
            group.bench_with_input(BenchmarkId::new(method.to_string(), voters), &profile.ballots, |b, ballots| {
                b.iter(|| tally(method, ballots, &election, None).unwrap())
            });
        }
        let knapsack = ballots_for(Method::Knapsack, &profile.ballots);
        group.bench_with_input(BenchmarkId::new("scores", voters), &knapsack, |b, ballots| {
            b.iter(|| score_ballots(ballots, &election).unwrap())
        });
    }
    group.finish();
}

fn set_borda(c: &mut Criterion) {
    let profile = generate(&SynthOptions { voters: 2000, projects: 20, pairs: 10, ..SynthOptions::default() }).unwrap();
    let election = Election::new(profile.config.clone()).unwrap();
    let matrix = ComparisonMatrix::from_ballots(&election, &profile.ballots).unwrap();
    let costs = matrix.costs_in(&election).unwrap();
    let funded = funded_projects(&tally(Method::Knapsack, &profile.ballots, &election, None).unwrap().allocation);
    c.bench_function("set_borda/20 projects", |b| b.iter(|| matrix.set_borda_score(&funded, &costs).unwrap()));
    c.bench_function("comparison_matrix/2000 voters", |b| {
        b.iter(|| ComparisonMatrix::from_ballots(&election, &profile.ballots).unwrap())
    });
}

fn strategy(c: &mut Criterion) {
    let instance = kapproval_counterexample();
    c.bench_function("best_response/kapproval example", |b| {
        b.iter(|| best_response(&instance, Rule::KApproval { k: 2 }, DEFAULT_ENUMERATION_LIMIT).unwrap())
    });
    c.bench_function("strategyproofness/20 instances C<=12", |b| {
        b.iter(|| verify_strategyproofness(InstanceShape::fixed(12), 20, 1, DEFAULT_ENUMERATION_LIMIT).unwrap())
    });
}

fn mle(c: &mut Criterion) {
    let election = Election::new(ElectionConfig::fixed(
        vec![ProjectSpec::new("P1", 5), ProjectSpec::new("P2", 5), ProjectSpec::new("P3", 10)],
        10,
    ))
    .unwrap();
    let truth: Allocation = [("P1", 3), ("P2", 5), ("P3", 2)].into_iter().collect();
    let model = NoiseModel::new(election.clone(), &truth, DEFAULT_ENUMERATION_LIMIT).unwrap();
    c.bench_function("mle/sample 1000 votes", |b| b.iter(|| model.sample_votes(1000, 3)));
    let votes = model.sample_votes(200, 3);
    c.bench_function("mle/estimate from 200 votes", |b| {
        b.iter(|| mle_estimate(&votes, &election, DEFAULT_ENUMERATION_LIMIT).unwrap())
    });
}

criterion_group!(benches, tallies, set_borda, strategy, mle);
criterion_main!(benches);
