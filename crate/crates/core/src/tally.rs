//! Aggregation rules.
//!
//! Knapsack-family rules score every subproject and keep the best ones under
//! the election's tie-break order. Because ballots are prefix-closed, dollar
//! scores never increase along a project, so any top-k cut under a consistent
//! order is itself prefix-closed.

use std::cmp::Reverse;
use std::fmt;
use std::str::FromStr;

use num_integer::Integer;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::comparisons::ranking_amounts;
use crate::error::{Error, Result};
use crate::model::{
    expand_dense, Allocation, Ballot, BallotPayload, BudgetMode, Election, ProjectId, ProjectKind,
    SubprojectId,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Knapsack,
    #[serde(rename = "kapproval")]
    KApproval,
    Integral,
    ApproxIntegral,
    Balanced,
    Deficit,
    Ranking,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Knapsack,
        Method::KApproval,
        Method::Integral,
        Method::ApproxIntegral,
        Method::Balanced,
        Method::Deficit,
        Method::Ranking,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Knapsack => "knapsack",
            Method::KApproval => "kapproval",
            Method::Integral => "integral",
            Method::ApproxIntegral => "approx-integral",
            Method::Balanced => "balanced",
            Method::Deficit => "deficit",
            Method::Ranking => "ranking",
        }
    }

    /// Ballot format the method consumes.
    pub fn ballot_format(self) -> &'static str {
        match self {
            Method::Knapsack | Method::Balanced | Method::Deficit => "knapsack",
            Method::KApproval | Method::Integral | Method::ApproxIntegral => "kapproval",
            Method::Ranking => "ranking",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectScores {
    pub project: ProjectId,
    /// Score of dollar `t` at position `t - 1`.
    pub scores: Vec<i64>,
}

/// Score of every subproject, grouped by project in election order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreTable {
    projects: Vec<ProjectScores>,
}

impl ScoreTable {
    fn from_flat(election: &Election, flat: &[i64]) -> Self {
        let projects = (0..election.project_count())
            .map(|p| {
                let start = election.offset(p);
                ProjectScores {
                    project: election.id(p).clone(),
                    scores: flat[start..start + election.cost(p) as usize].to_vec(),
                }
            })
            .collect();
        ScoreTable { projects }
    }

    pub fn get(&self, sub: &SubprojectId) -> Option<i64> {
        let entry = self.projects.iter().find(|e| e.project == sub.project)?;
        entry.scores.get((sub.dollar as usize).checked_sub(1)?).copied()
    }

    pub fn project(&self, id: &str) -> Option<&[i64]> {
        self.projects
            .iter()
            .find(|e| e.project.as_str() == id)
            .map(|e| e.scores.as_slice())
    }

    pub fn entries(&self) -> &[ProjectScores] {
        &self.projects
    }

    fn flat(&self, election: &Election) -> Result<Vec<i64>> {
        let mut flat = vec![0; election.subproject_count()];
        for e in &self.projects {
            let p = election
                .index_of(e.project.as_str())
                .ok_or_else(|| Error::UnknownProject(e.project.clone()))?;
            if e.scores.len() as u64 != election.cost(p) {
                return Err(Error::Config(format!(
                    "score table for `{}` has {} entries, cost is {}",
                    e.project,
                    e.scores.len(),
                    election.cost(p)
                )));
            }
            let start = election.offset(p);
            flat[start..start + e.scores.len()].copy_from_slice(&e.scores);
        }
        Ok(flat)
    }
}

/// An exact fraction in lowest terms, written as `"n/d"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fraction {
    numer: u64,
    denom: u64,
}

impl Fraction {
    pub fn new(numer: u64, denom: u64) -> Self {
        assert!(denom > 0, "zero denominator");
        let g = numer.gcd(&denom);
        Fraction {
            numer: numer / g,
            denom: denom / g,
        }
    }

    pub fn numer(self) -> u64 {
        self.numer
    }

    pub fn denom(self) -> u64 {
        self.denom
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer, self.denom)
    }
}

impl Serialize for Fraction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let (n, m) = s
            .split_once('/')
            .ok_or_else(|| serde::de::Error::custom("expected `n/d`"))?;
        let numer = n.trim().parse().map_err(serde::de::Error::custom)?;
        let denom: u64 = m.trim().parse().map_err(serde::de::Error::custom)?;
        if denom == 0 {
            return Err(serde::de::Error::custom("zero denominator"));
        }
        Ok(Fraction::new(numer, denom))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialFunding {
    pub project: ProjectId,
    pub dollars: u64,
    pub fraction: Fraction,
}

/// Funded projects of an integral rule, in funding order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FundedSet {
    pub projects: Vec<ProjectId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partial: Option<PartialFunding>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub method: Method,
    /// Expenditure amounts; every expenditure project is listed.
    pub allocation: Allocation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revenue_allocation: Option<Allocation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub funded: Option<FundedSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deficit: Option<u64>,
}

fn require_mode(election: &Election, mode: BudgetMode, operation: &'static str) -> Result<()> {
    if election.mode() == mode {
        Ok(())
    } else {
        Err(Error::WrongMode {
            operation,
            mode: election.mode().to_string(),
        })
    }
}

/// Flat subproject scores from dense per-project votes. Expenditure dollars
/// count the votes that include them; revenue dollars count, negatively, the
/// votes that leave them out.
pub(crate) fn scores_from_votes<'a>(
    election: &Election,
    votes: impl IntoIterator<Item = &'a [u64]>,
) -> Vec<i64> {
    let mut scores = vec![0i64; election.subproject_count()];
    let mut voters = 0i64;
    for v in votes {
        voters += 1;
        for f in expand_dense(election, v) {
            scores[f] += 1;
        }
    }
    for p in election.revenue_projects() {
        let start = election.offset(p);
        for s in &mut scores[start..start + election.cost(p) as usize] {
            *s -= voters;
        }
    }
    scores
}

fn knapsack_votes(ballots: &[Ballot], election: &Election) -> Result<Vec<Vec<u64>>> {
    ballots.iter().map(|b| election.knapsack_vote(b)).collect()
}

/// Subprojects of `candidates` sorted best first: score descending, then tie-break rank.
fn ranked(election: &Election, scores: &[i64], candidates: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut fs: Vec<usize> = candidates.collect();
    fs.sort_unstable_by_key(|&f| (Reverse(scores[f]), election.tie_rank(f)));
    fs
}

fn collapse_dense(election: &Election, chosen: &[usize]) -> Vec<u64> {
    let mut amounts = vec![0u64; election.project_count()];
    for &f in chosen {
        amounts[election.unflatten(f).0] += 1;
    }
    debug_assert!(chosen.iter().all(|&f| {
        let (p, t) = election.unflatten(f);
        t <= amounts[p]
    }));
    amounts
}

/// Best `budget` expenditure dollars under `scores`.
pub(crate) fn knapsack_dense(election: &Election, scores: &[i64], budget: u64) -> Vec<u64> {
    let candidates = election
        .expenditure_projects()
        .flat_map(|p| election.offset(p)..election.offset(p) + election.cost(p) as usize);
    let order = ranked(election, scores, candidates);
    collapse_dense(election, &order[..budget as usize])
}

/// Best equal-size pair of expenditure and revenue dollar sets; among
/// equally scored sizes the larger one wins.
pub(crate) fn paired_dense(election: &Election, scores: &[i64]) -> Vec<u64> {
    let span = |p: usize| election.offset(p)..election.offset(p) + election.cost(p) as usize;
    let exp = ranked(
        election,
        scores,
        election.expenditure_projects().flat_map(span),
    );
    let rev = ranked(election, scores, election.revenue_projects().flat_map(span));
    let mut best = (0i64, 0usize);
    let mut acc = 0i64;
    for k in 1..=exp.len().min(rev.len()) {
        acc += scores[exp[k - 1]] + scores[rev[k - 1]];
        if acc >= best.0 {
            best = (acc, k);
        }
    }
    let k = best.1;
    let chosen: Vec<usize> = exp[..k].iter().chain(&rev[..k]).copied().collect();
    collapse_dense(election, &chosen)
}

pub fn score_ballots(ballots: &[Ballot], election: &Election) -> Result<ScoreTable> {
    let votes = knapsack_votes(ballots, election)?;
    let flat = scores_from_votes(election, votes.iter().map(Vec::as_slice));
    Ok(ScoreTable::from_flat(election, &flat))
}

fn expenditure_outcome(method: Method, election: &Election, amounts: &[u64]) -> Outcome {
    Outcome {
        method,
        allocation: election.allocation_of(amounts, ProjectKind::Expenditure),
        revenue_allocation: None,
        funded: None,
        deficit: None,
    }
}

/// Knapsack Vote: the `B` highest-scoring dollars under the tie-break order.
pub fn knapsack_tally(ballots: &[Ballot], election: &Election) -> Result<Outcome> {
    require_mode(election, BudgetMode::FixedBudget, "knapsack tally")?;
    let votes = knapsack_votes(ballots, election)?;
    let scores = scores_from_votes(election, votes.iter().map(Vec::as_slice));
    let amounts = knapsack_dense(election, &scores, election.budget());
    Ok(expenditure_outcome(Method::Knapsack, election, &amounts))
}

/// Knapsack selection from a precomputed score table.
pub fn knapsack_from_scores(scores: &ScoreTable, election: &Election) -> Result<Allocation> {
    require_mode(election, BudgetMode::FixedBudget, "knapsack selection")?;
    let flat = scores.flat(election)?;
    let amounts = knapsack_dense(election, &flat, election.budget());
    Ok(election.allocation_of(&amounts, ProjectKind::Expenditure))
}

/// Projects ordered by approval count, ties by project priority.
fn approval_order(election: &Election, counts: &[u64]) -> Vec<usize> {
    let mut ps: Vec<usize> = election.expenditure_projects().collect();
    ps.sort_by_key(|&p| (Reverse(counts[p]), election.project_rank(p)));
    ps
}

pub(crate) fn approval_counts(election: &Election, votes: &[Vec<usize>]) -> Vec<u64> {
    let mut counts = vec![0u64; election.project_count()];
    for v in votes {
        for &p in v {
            counts[p] += 1;
        }
    }
    counts
}

/// K-approval greedy: walk projects by approvals and fund each one that
/// still fits. A project that does not fit is skipped, not a stopping point.
pub(crate) fn kapproval_dense(election: &Election, counts: &[u64]) -> (Vec<u64>, Vec<usize>) {
    let mut amounts = vec![0u64; election.project_count()];
    let mut funded = Vec::new();
    let mut spent = 0u64;
    for p in approval_order(election, counts) {
        if spent + election.cost(p) <= election.budget() {
            spent += election.cost(p);
            amounts[p] = election.cost(p);
            funded.push(p);
        }
    }
    (amounts, funded)
}

pub fn kapproval_tally(ballots: &[Ballot], k: usize, election: &Election) -> Result<Outcome> {
    require_mode(election, BudgetMode::FixedBudget, "K-approval tally")?;
    let votes = ballots
        .iter()
        .map(|b| election.approval_vote(b, k))
        .collect::<Result<Vec<_>>>()?;
    let counts = approval_counts(election, &votes);
    let (amounts, funded) = kapproval_dense(election, &counts);
    let mut outcome = expenditure_outcome(Method::KApproval, election, &amounts);
    outcome.funded = Some(FundedSet {
        projects: funded.iter().map(|&p| election.id(p).clone()).collect(),
        partial: None,
    });
    Ok(outcome)
}

/// Integral greedy: fund projects by approvals until the next one does not
/// fit. With `fractional_last`, that project takes the remaining budget.
pub(crate) fn integral_dense(
    election: &Election,
    counts: &[u64],
    fractional_last: bool,
) -> (Vec<u64>, Vec<usize>, Option<usize>) {
    let mut amounts = vec![0u64; election.project_count()];
    let mut funded = Vec::new();
    let mut partial = None;
    let mut remaining = election.budget();
    for p in approval_order(election, counts) {
        let cost = election.cost(p);
        if cost <= remaining {
            remaining -= cost;
            amounts[p] = cost;
            funded.push(p);
        } else {
            if fractional_last && remaining > 0 {
                amounts[p] = remaining;
                partial = Some(p);
            }
            break;
        }
    }
    (amounts, funded, partial)
}

pub fn integral_knapsack_tally(
    ballots: &[Ballot],
    election: &Election,
    fractional_last: bool,
) -> Result<Outcome> {
    require_mode(election, BudgetMode::FixedBudget, "integral knapsack tally")?;
    let votes = ballots
        .iter()
        .map(|b| election.budget_set_vote(b))
        .collect::<Result<Vec<_>>>()?;
    let counts = approval_counts(election, &votes);
    let (amounts, funded, partial) = integral_dense(election, &counts, fractional_last);
    let method = if fractional_last {
        Method::ApproxIntegral
    } else {
        Method::Integral
    };
    let mut outcome = expenditure_outcome(method, election, &amounts);
    outcome.funded = Some(FundedSet {
        projects: funded.iter().map(|&p| election.id(p).clone()).collect(),
        partial: partial.map(|p| PartialFunding {
            project: election.id(p).clone(),
            dollars: amounts[p],
            fraction: Fraction::new(amounts[p], election.cost(p)),
        }),
    });
    Ok(outcome)
}

fn paired_outcome(method: Method, election: &Election, amounts: &[u64]) -> Outcome {
    Outcome {
        method,
        allocation: election.allocation_of(amounts, ProjectKind::Expenditure),
        revenue_allocation: Some(election.allocation_of(amounts, ProjectKind::Revenue)),
        funded: None,
        deficit: election.synthetic_deficit().map(|d| amounts[d]),
    }
}

/// Joint revenue/expenditure rule: maximize the summed score of an
/// equal-size pair of dollar sets.
pub fn balanced_budget_tally(ballots: &[Ballot], election: &Election) -> Result<Outcome> {
    require_mode(election, BudgetMode::BalancedBudget, "balanced-budget tally")?;
    let votes = knapsack_votes(ballots, election)?;
    let scores = scores_from_votes(election, votes.iter().map(Vec::as_slice));
    Ok(paired_outcome(
        Method::Balanced,
        election,
        &paired_dense(election, &scores),
    ))
}

/// Balanced rule with the deficit treated as one more revenue item.
pub fn deficit_augmented_tally(ballots: &[Ballot], election: &Election) -> Result<Outcome> {
    require_mode(election, BudgetMode::DeficitAugmented, "deficit-augmented tally")?;
    let votes = knapsack_votes(ballots, election)?;
    let scores = scores_from_votes(election, votes.iter().map(Vec::as_slice));
    Ok(paired_outcome(
        Method::Deficit,
        election,
        &paired_dense(election, &scores),
    ))
}

/// Rankings read as knapsack votes, then tallied per dollar.
pub fn ranking_tally(ballots: &[Ballot], election: &Election) -> Result<Outcome> {
    require_mode(election, BudgetMode::FixedBudget, "ranking tally")?;
    let votes = ballots
        .iter()
        .map(|b| election.ranking_vote(b).map(|r| ranking_amounts(election, &r).0))
        .collect::<Result<Vec<_>>>()?;
    let scores = scores_from_votes(election, votes.iter().map(Vec::as_slice));
    let amounts = knapsack_dense(election, &scores, election.budget());
    Ok(expenditure_outcome(Method::Ranking, election, &amounts))
}

/// Ballots of the format `method` consumes, in log order.
pub fn ballots_for(method: Method, ballots: &[Ballot]) -> Vec<Ballot> {
    ballots
        .iter()
        .filter(|b| b.payload.format_name() == method.ballot_format())
        .cloned()
        .collect()
}

/// Runs `method` over the ballots of its own format; other formats are ignored.
/// `k` overrides the election's approval limit for K-approval.
pub fn tally(
    method: Method,
    ballots: &[Ballot],
    election: &Election,
    k: Option<usize>,
) -> Result<Outcome> {
    let own = ballots_for(method, ballots);
    match method {
        Method::Knapsack => knapsack_tally(&own, election),
        Method::KApproval => {
            kapproval_tally(&own, k.unwrap_or_else(|| election.approval_limit()), election)
        }
        Method::Integral => integral_knapsack_tally(&own, election, false),
        Method::ApproxIntegral => integral_knapsack_tally(&own, election, true),
        Method::Balanced => balanced_budget_tally(&own, election),
        Method::Deficit => deficit_augmented_tally(&own, election),
        Method::Ranking => ranking_tally(&own, election),
    }
}

/// Approvals per project over K-approval-format ballots.
pub fn approval_tally_counts(
    ballots: &[Ballot],
    election: &Election,
) -> Result<Vec<(ProjectId, u64)>> {
    let votes = ballots
        .iter()
        .filter(|b| matches!(b.payload, BallotPayload::KApproval { .. }))
        .map(|b| election.approval_vote(b, usize::MAX))
        .collect::<Result<Vec<_>>>()?;
    let counts = approval_counts(election, &votes);
    Ok(election
        .expenditure_projects()
        .map(|p| (election.id(p).clone(), counts[p]))
        .collect())
}
