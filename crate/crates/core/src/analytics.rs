//! Cost-bias diagnostics over a ballot log.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::comparisons::{agreement_report, funded_projects, AgreementReport, ComparisonMatrix};
use crate::error::Result;
use crate::model::{Allocation, Ballot, BallotPayload, BudgetMode, Election, ProjectId};
use crate::tally::{tally, Method};

/// Ballot formats that name a set of supported projects.
pub const SUPPORT_FORMATS: [&str; 3] = ["knapsack", "kapproval", "ranking"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub project: ProjectId,
    pub cost: u64,
    /// Cumulative share of projects at or above this cost, the uniform reference.
    pub uniform: f64,
    /// Cumulative share of votes per format, in `SUPPORT_FORMATS` order.
    /// `None` when the log holds no votes of that format.
    pub shares: Vec<Option<f64>>,
}

/// Cumulative fraction of votes going to projects at or above each cost,
/// with projects laid out in descending cost order. A vote for a project is
/// any ballot that funds, approves or ranks it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    pub rows: Vec<CurveRow>,
}

fn supported(ballot: &Ballot) -> Vec<&ProjectId> {
    match &ballot.payload {
        BallotPayload::Knapsack { allocation } => allocation.support().collect(),
        BallotPayload::KApproval { approvals } => approvals.iter().collect(),
        BallotPayload::Ranking { ranking } => ranking.iter().collect(),
        BallotPayload::Pairwise { .. } => Vec::new(),
    }
}

pub fn cost_curve(ballots: &[Ballot], election: &Election) -> Result<CostCurve> {
    let mut order: Vec<usize> = election.expenditure_projects().collect();
    // Stable sort keeps tie-break priority among equal costs.
    order.sort_by_key(|&p| (std::cmp::Reverse(election.cost(p)), election.project_rank(p)));
    let mut votes = vec![vec![0u64; election.project_count()]; SUPPORT_FORMATS.len()];
    for b in ballots {
        election.validate_ballot(b)?;
        let Some(f) = SUPPORT_FORMATS.iter().position(|&n| n == b.payload.format_name()) else {
            continue;
        };
        for id in supported(b) {
            if let Some(p) = election.index_of(id.as_str()) {
                votes[f][p] += 1;
            }
        }
    }
    let totals: Vec<u64> = votes.iter().map(|v| v.iter().sum()).collect();
    let mut running = vec![0u64; SUPPORT_FORMATS.len()];
    let rows = order
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            for f in 0..running.len() {
                running[f] += votes[f][p];
            }
            CurveRow {
                project: election.id(p).clone(),
                cost: election.cost(p),
                uniform: (i + 1) as f64 / order.len() as f64,
                shares: running
                    .iter()
                    .zip(&totals)
                    .map(|(&r, &t)| (t > 0).then(|| r as f64 / t as f64))
                    .collect(),
            }
        })
        .collect();
    Ok(CostCurve { rows })
}

impl CostCurve {
    /// Tab-separated table with a header line; empty cells for absent formats.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("rank\tproject\tcost\tuniform");
        for f in SUPPORT_FORMATS {
            out.push('\t');
            out.push_str(f);
        }
        out.push('\n');
        for (i, r) in self.rows.iter().enumerate() {
            let _ = write!(out, "{}\t{}\t{}\t{:.6}", i + 1, r.project, r.cost, r.uniform);
            for s in &r.shares {
                out.push('\t');
                if let Some(s) = s {
                    let _ = write!(out, "{s:.6}");
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Mean cost of the funded projects divided by the budget; `None` when
/// nothing is funded or the budget is zero.
pub fn average_winning_cost(outcome: &Allocation, election: &Election) -> Option<f64> {
    let costs: Vec<u64> = outcome
        .support()
        .filter_map(|id| election.index_of(id.as_str()))
        .map(|p| election.cost(p))
        .collect();
    if costs.is_empty() || election.budget() == 0 {
        return None;
    }
    let mean = costs.iter().sum::<u64>() as f64 / costs.len() as f64;
    Some(mean / election.budget() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub ballots: usize,
    pub allocation: Allocation,
    pub average_winning_cost: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub methods: Vec<MethodSummary>,
    /// Absent when the log holds no pairwise comparisons.
    pub agreement: Option<AgreementReport>,
    pub curve: CostCurve,
}

/// Tallies every fixed-budget method over its own ballots and compares the
/// funded sets with the pairwise comparisons in the log.
pub fn pipeline(ballots: &[Ballot], election: &Election) -> Result<PipelineReport> {
    let methods: Vec<Method> = if election.mode() == BudgetMode::FixedBudget {
        vec![Method::Knapsack, Method::KApproval, Method::Ranking]
    } else {
        vec![Method::Balanced]
    };
    let mut summaries = Vec::new();
    for method in methods {
        let count = crate::tally::ballots_for(method, ballots).len();
        let outcome = tally(method, ballots, election, None)?;
        summaries.push(MethodSummary {
            method,
            ballots: count,
            average_winning_cost: average_winning_cost(&outcome.allocation, election),
            allocation: outcome.allocation,
        });
    }
    let matrix = ComparisonMatrix::from_ballots(election, ballots)?;
    let agreement = if matrix.total() > 0 {
        let outcomes: Vec<(String, Vec<ProjectId>)> = summaries
            .iter()
            .map(|s| (s.method.to_string(), funded_projects(&s.allocation)))
            .collect();
        Some(agreement_report(&matrix, &outcomes, &matrix.costs_in(election)?)?)
    } else {
        None
    };
    Ok(PipelineReport {
        methods: summaries,
        agreement,
        curve: cost_curve(ballots, election)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostBiasStudy {
    pub first_seed: u64,
    pub profiles: usize,
    pub knapsack_cost_mean: f64,
    pub kapproval_cost_mean: f64,
    pub knapsack_agreement_mean: f64,
    pub kapproval_agreement_mean: f64,
    /// Profiles where knapsack's average winning cost is strictly lower.
    pub cost_wins: usize,
    /// Profiles where knapsack's agreement is strictly higher.
    pub agreement_wins: usize,
}

impl CostBiasStudy {
    pub fn direction_holds(&self) -> bool {
        self.knapsack_cost_mean < self.kapproval_cost_mean
            && self.knapsack_agreement_mean > self.kapproval_agreement_mean
    }
}

/// Runs the pipeline on `profiles` synthetic profiles with consecutive seeds
/// starting at `opts.seed` and averages the knapsack and K-approval figures.
pub fn cost_bias_study(opts: &crate::synth::SynthOptions, profiles: usize) -> Result<CostBiasStudy> {
    use rayon::prelude::*;
    let rows: Vec<Result<[f64; 4]>> = (0..profiles as u64)
        .into_par_iter()
        .map(|i| {
            let o = crate::synth::SynthOptions { seed: opts.seed.wrapping_add(i), ..*opts };
            let p = crate::synth::generate(&o)?;
            let e = Election::new(p.config)?;
            let r = pipeline(&p.ballots, &e)?;
            let cost = |m: Method| {
                r.methods
                    .iter()
                    .find(|s| s.method == m)
                    .and_then(|s| s.average_winning_cost)
                    .unwrap_or(0.0)
            };
            let agree = |m: Method| {
                r.agreement.as_ref().map_or(0.0, |a| {
                    a.methods
                        .iter()
                        .find(|x| x.method == m.as_str())
                        .map_or(0.0, |x| x.agreement)
                })
            };
            Ok([
                cost(Method::Knapsack),
                cost(Method::KApproval),
                agree(Method::Knapsack),
                agree(Method::KApproval),
            ])
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let n = rows.len().max(1) as f64;
    let mean = |i: usize| rows.iter().map(|r| r[i]).sum::<f64>() / n;
    Ok(CostBiasStudy {
        first_seed: opts.seed,
        profiles,
        knapsack_cost_mean: mean(0),
        kapproval_cost_mean: mean(1),
        knapsack_agreement_mean: mean(2),
        kapproval_agreement_mean: mean(3),
        cost_wins: rows.iter().filter(|r| r[0] < r[1]).count(),
        agreement_wins: rows.iter().filter(|r| r[2] > r[3]).count(),
    })
}
