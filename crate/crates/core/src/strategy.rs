//! Exhaustive best-response search and randomized incentive checks.
//!
//! Everything here enumerates every vote a single voter could cast, so it is
//! only meant for small elections. The number of candidate votes is counted
//! exactly before enumeration and compared against a caller-supplied limit.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    expand_dense, Allocation, Ballot, BudgetMode, Election, ElectionConfig,
    ProjectId, ProjectKind, ProjectSpec, SubprojectId, TieBreakSpec,
};
use crate::tally::{
    approval_counts, integral_dense, kapproval_dense, knapsack_dense, paired_dense,
    scores_from_votes,
};
use crate::utility::{
    concave_dense, l1_dense, l1_distance, overlap_utility, ConcaveMarginals, UtilityModel, Value,
};

/// Default cap on the number of candidate votes a search may enumerate.
pub const DEFAULT_ENUMERATION_LIMIT: u128 = 100_000;

/// Aggregation rule a focal voter responds to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule")]
pub enum Rule {
    Knapsack,
    Balanced,
    Deficit,
    #[serde(rename = "kapproval")]
    KApproval {
        k: usize,
    },
    Integral,
    ApproxIntegral,
}

impl Rule {
    fn is_set_rule(self) -> bool {
        matches!(self, Rule::KApproval { .. } | Rule::Integral | Rule::ApproxIntegral)
    }

    fn required_mode(self) -> BudgetMode {
        match self {
            Rule::Balanced => BudgetMode::BalancedBudget,
            Rule::Deficit => BudgetMode::DeficitAugmented,
            _ => BudgetMode::FixedBudget,
        }
    }
}

/// A focal voter facing fixed ballots from everyone else.
#[derive(Clone, Debug)]
pub struct StrategyInstance {
    pub config: ElectionConfig,
    pub others: Vec<Ballot>,
    pub model: UtilityModel,
    /// The focal voter's sincere vote. For set rules, its support is the
    /// sincere project set.
    pub ideal: Allocation,
}

/// Whether `k` dominating `j` needs a strictly larger marginal or only an
/// equal one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domination {
    #[default]
    Strict,
    Weak,
}

impl Domination {
    fn dominates(self, vk: Value, vj: Value) -> bool {
        match self {
            Domination::Strict => vk > vj,
            Domination::Weak => vk >= vj,
        }
    }
}

pub fn format_value(v: Value) -> String {
    if *v.denom() == 1 {
        v.numer().to_string()
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

fn check_mode(election: &Election, rule: Rule) -> Result<()> {
    if election.mode() == rule.required_mode() {
        Ok(())
    } else {
        Err(Error::WrongMode {
            operation: "strategy search",
            mode: election.mode().to_string(),
        })
    }
}

/// Number of ways each total can be reached by amounts `0..=cap` over `caps`.
fn sum_counts(caps: &[u64]) -> Vec<u128> {
    let mut ways = vec![1u128];
    for &c in caps {
        let mut next = vec![0u128; ways.len() + c as usize];
        for (s, &w) in ways.iter().enumerate() {
            for a in 0..=c as usize {
                next[s + a] = next[s + a].saturating_add(w);
            }
        }
        ways = next;
    }
    ways
}

fn caps_of(election: &Election, ps: &[usize]) -> Vec<u64> {
    ps.iter().map(|&p| election.cost(p)).collect()
}

/// Exact number of candidate votes `rule` admits in `election`.
pub fn count_candidate_votes(election: &Election, rule: Rule) -> u128 {
    let exp: Vec<usize> = election.expenditure_projects().collect();
    let rev: Vec<usize> = election
        .revenue_projects()
        .filter(|&p| Some(p) != election.synthetic_deficit())
        .collect();
    match rule {
        Rule::Knapsack => sum_counts(&caps_of(election, &exp))
            .get(election.budget() as usize)
            .copied()
            .unwrap_or(0),
        Rule::Balanced | Rule::Deficit => {
            let we = sum_counts(&caps_of(election, &exp));
            let wr = sum_counts(&caps_of(election, &rev));
            let mut total = 0u128;
            for (e, &a) in we.iter().enumerate() {
                for (r, &b) in wr.iter().enumerate() {
                    let ok = if rule == Rule::Balanced { e == r } else { e >= r };
                    if ok {
                        total = total.saturating_add(a.saturating_mul(b));
                    }
                }
            }
            total
        }
        Rule::KApproval { k } => {
            // subsets by size
            let mut by_size = vec![0u128; exp.len() + 1];
            by_size[0] = 1;
            for _ in &exp {
                for i in (1..by_size.len()).rev() {
                    by_size[i] = by_size[i].saturating_add(by_size[i - 1]);
                }
            }
            by_size.iter().take(k + 1).fold(0u128, |a, &b| a.saturating_add(b))
        }
        Rule::Integral | Rule::ApproxIntegral => {
            let b = election.budget() as usize;
            let mut by_cost = vec![0u128; b + 1];
            by_cost[0] = 1;
            for &p in &exp {
                let c = election.cost(p) as usize;
                for s in (c..=b).rev() {
                    by_cost[s] = by_cost[s].saturating_add(by_cost[s - c]);
                }
            }
            by_cost.iter().fold(0u128, |a, &x| a.saturating_add(x))
        }
    }
}

/// All vectors over `ps` within caps, first project's amount descending.
fn bounded_vectors(election: &Election, ps: &[usize], out: &mut Vec<Vec<u64>>, total: Option<u64>) {
    fn rec(
        election: &Election,
        ps: &[usize],
        i: usize,
        left: Option<u64>,
        cur: &mut Vec<u64>,
        out: &mut Vec<Vec<u64>>,
    ) {
        if i == ps.len() {
            if left.map_or(true, |l| l == 0) {
                out.push(cur.clone());
            }
            return;
        }
        let cap = election.cost(ps[i]);
        let rest: u64 = ps[i + 1..].iter().map(|&p| election.cost(p)).sum();
        let hi = left.map_or(cap, |l| cap.min(l));
        let lo = left.map_or(0, |l| l.saturating_sub(rest));
        for a in (lo..=hi).rev() {
            cur[ps[i]] = a;
            rec(election, ps, i + 1, left.map(|l| l - a), cur, out);
        }
        cur[ps[i]] = 0;
    }
    let mut cur = vec![0u64; election.project_count()];
    rec(election, ps, 0, total, &mut cur, out);
}

fn subsets(election: &Election, max_size: usize, max_cost: u64) -> Vec<Vec<u64>> {
    fn rec(
        election: &Election,
        ps: &[usize],
        i: usize,
        size_left: usize,
        cost_left: u64,
        cur: &mut Vec<u64>,
        out: &mut Vec<Vec<u64>>,
    ) {
        if i == ps.len() {
            out.push(cur.clone());
            return;
        }
        let c = election.cost(ps[i]);
        if size_left > 0 && c <= cost_left {
            cur[ps[i]] = c;
            rec(election, ps, i + 1, size_left - 1, cost_left - c, cur, out);
            cur[ps[i]] = 0;
        }
        rec(election, ps, i + 1, size_left, cost_left, cur, out);
    }
    let ps: Vec<usize> = election.expenditure_projects().collect();
    let mut out = Vec::new();
    let mut cur = vec![0u64; election.project_count()];
    rec(election, &ps, 0, max_size, max_cost, &mut cur, &mut out);
    out
}

fn require_within(count: u128, limit: u128) -> Result<()> {
    if count > limit {
        Err(Error::EnumerationLimit { count, limit })
    } else {
        Ok(())
    }
}

/// Dense candidate votes for `rule`, in a deterministic order. Set votes
/// carry each chosen project at full cost.
pub(crate) fn candidate_votes(election: &Election, rule: Rule, limit: u128) -> Result<Vec<Vec<u64>>> {
    check_mode(election, rule)?;
    require_within(count_candidate_votes(election, rule), limit)?;
    let exp: Vec<usize> = election.expenditure_projects().collect();
    let mut out = Vec::new();
    match rule {
        Rule::Knapsack => bounded_vectors(election, &exp, &mut out, Some(election.budget())),
        Rule::Balanced | Rule::Deficit => {
            let rev: Vec<usize> = election
                .revenue_projects()
                .filter(|&p| Some(p) != election.synthetic_deficit())
                .collect();
            let mut exps = Vec::new();
            bounded_vectors(election, &exp, &mut exps, None);
            let mut revs = Vec::new();
            bounded_vectors(election, &rev, &mut revs, None);
            for e in &exps {
                let se: u64 = e.iter().sum();
                for r in &revs {
                    let sr: u64 = r.iter().sum();
                    let ok = if rule == Rule::Balanced { se == sr } else { se >= sr };
                    if ok {
                        let mut v: Vec<u64> = e.iter().zip(r).map(|(a, b)| a + b).collect();
                        if let Some(d) = election.synthetic_deficit() {
                            v[d] = se - sr;
                        }
                        out.push(v);
                    }
                }
            }
        }
        Rule::KApproval { k } => out = subsets(election, k, u64::MAX),
        Rule::Integral | Rule::ApproxIntegral => {
            out = subsets(election, usize::MAX, election.budget())
        }
    }
    Ok(out)
}

/// Every valid knapsack vote of the election's mode, deduplicated and in a
/// deterministic order. In fixed-budget mode these are the complete allocations.
pub fn enumerate_valid_votes(election: &Election, limit: u128) -> Result<Vec<Allocation>> {
    let rule = match election.mode() {
        BudgetMode::FixedBudget => Rule::Knapsack,
        BudgetMode::BalancedBudget => Rule::Balanced,
        BudgetMode::DeficitAugmented => Rule::Deficit,
    };
    Ok(candidate_votes(election, rule, limit)?
        .iter()
        .map(|v| election.allocation_of_all(v))
        .collect())
}

impl Election {
    /// Allocation listing every configured project, zeros included.
    fn allocation_of_all(&self, amounts: &[u64]) -> Allocation {
        (0..self.project_count())
            .filter(|&p| Some(p) != self.synthetic_deficit())
            .map(|p| (self.id(p).clone(), amounts[p]))
            .collect()
    }
}

/// Focal utility over dense outcomes.
enum Focal {
    L1(Vec<u64>),
    Overlap(Vec<u64>),
    Concave(Vec<Value>),
}

impl Focal {
    fn new(election: &Election, model: &UtilityModel, ideal: &[u64]) -> Result<Self> {
        Ok(match model {
            UtilityModel::L1Cost => Focal::L1(ideal.to_vec()),
            UtilityModel::Overlap => Focal::Overlap(ideal.to_vec()),
            UtilityModel::AdditiveConcave(m) => Focal::Concave(m.flat(election)?),
        })
    }

    /// Larger is better. Overlap counts shared expenditure dollars minus
    /// revenue dollars the voter did not want raised.
    fn value(&self, election: &Election, outcome: &[u64]) -> Value {
        match self {
            Focal::L1(ideal) => -Value::from_integer(l1_dense(outcome, ideal) as i64),
            Focal::Overlap(ideal) => {
                let mut total = 0i64;
                for p in 0..outcome.len() {
                    total += match election.kind(p) {
                        ProjectKind::Expenditure => outcome[p].min(ideal[p]) as i64,
                        ProjectKind::Revenue => -(outcome[p].saturating_sub(ideal[p]) as i64),
                    };
                }
                Value::from_integer(total)
            }
            Focal::Concave(flat) => concave_dense(election, flat, outcome),
        }
    }
}

/// Aggregate of the other voters, ready to absorb one more vote.
struct Field<'a> {
    election: &'a Election,
    rule: Rule,
    scores: Vec<i64>,
    counts: Vec<u64>,
}

impl<'a> Field<'a> {
    fn new(election: &'a Election, rule: Rule, others: &[Ballot]) -> Result<Self> {
        check_mode(election, rule)?;
        let (scores, counts) = if rule.is_set_rule() {
            let votes = others
                .iter()
                .map(|b| match rule {
                    Rule::KApproval { k } => election.approval_vote(b, k),
                    _ => election.budget_set_vote(b),
                })
                .collect::<Result<Vec<_>>>()?;
            (Vec::new(), approval_counts(election, &votes))
        } else {
            let votes = others
                .iter()
                .map(|b| election.knapsack_vote(b))
                .collect::<Result<Vec<_>>>()?;
            (scores_from_votes(election, votes.iter().map(Vec::as_slice)), Vec::new())
        };
        Ok(Field {
            election,
            rule,
            scores,
            counts,
        })
    }

    fn decide_scores(&self, scores: &[i64]) -> Vec<u64> {
        match self.rule {
            Rule::Knapsack => knapsack_dense(self.election, scores, self.election.budget()),
            _ => paired_dense(self.election, scores),
        }
    }

    fn decide_counts(&self, counts: &[u64]) -> Vec<u64> {
        match self.rule {
            Rule::KApproval { .. } => kapproval_dense(self.election, counts).0,
            Rule::Integral => integral_dense(self.election, counts, false).0,
            _ => integral_dense(self.election, counts, true).0,
        }
    }

    /// Outcome without the focal voter.
    fn without_focal(&self) -> Vec<u64> {
        if self.rule.is_set_rule() {
            self.decide_counts(&self.counts)
        } else {
            self.decide_scores(&self.scores)
        }
    }

    /// Outcome once `vote` is added.
    fn with_vote(&self, vote: &[u64]) -> Vec<u64> {
        if self.rule.is_set_rule() {
            let mut counts = self.counts.clone();
            for (p, &w) in vote.iter().enumerate() {
                if w > 0 {
                    counts[p] += 1;
                }
            }
            self.decide_counts(&counts)
        } else {
            let mut scores = self.scores.clone();
            for p in self.election.revenue_projects() {
                let start = self.election.offset(p);
                for s in &mut scores[start..start + self.election.cost(p) as usize] {
                    *s -= 1;
                }
            }
            for f in expand_dense(self.election, vote) {
                scores[f] += 1;
            }
            self.decide_scores(&scores)
        }
    }
}

fn sincere_vote(election: &Election, rule: Rule, ideal: &Allocation) -> Result<Vec<u64>> {
    if rule.is_set_rule() {
        let ballot = Ballot::approval("focal", ideal.support().cloned());
        let set = match rule {
            Rule::KApproval { k } => election.approval_vote(&ballot, k)?,
            _ => election.budget_set_vote(&ballot)?,
        };
        let mut v = vec![0u64; election.project_count()];
        for p in set {
            v[p] = election.cost(p);
        }
        Ok(v)
    } else {
        election.knapsack_vote(&Ballot::knapsack("focal", ideal.clone()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestResponse {
    /// First maximizer in enumeration order.
    pub vote: Allocation,
    pub utility: Value,
    /// Every maximizing vote, in enumeration order.
    pub argmax: Vec<Allocation>,
    pub sincere_utility: Value,
    pub candidates: usize,
}

struct Scan {
    candidates: Vec<Vec<u64>>,
    utilities: Vec<Value>,
    sincere: Value,
}

fn scan(instance: &StrategyInstance, rule: Rule, limit: u128) -> Result<(Election, Scan)> {
    let election = Election::new(instance.config.clone())?;
    let field = Field::new(&election, rule, &instance.others)?;
    let candidates = candidate_votes(&election, rule, limit)?;
    let ideal_dense = sincere_vote(&election, rule, &instance.ideal)?;
    let focal = Focal::new(&election, &instance.model, &ideal_dense)?;
    let utilities: Vec<Value> = candidates
        .par_iter()
        .map(|v| focal.value(&election, &field.with_vote(v)))
        .collect();
    let sincere = focal.value(&election, &field.with_vote(&ideal_dense));
    Ok((
        election,
        Scan {
            candidates,
            utilities,
            sincere,
        },
    ))
}

/// Exhaustive best response of the focal voter to the other ballots.
pub fn best_response(instance: &StrategyInstance, rule: Rule, limit: u128) -> Result<BestResponse> {
    let (election, s) = scan(instance, rule, limit)?;
    let best = s
        .utilities
        .iter()
        .copied()
        .max()
        .ok_or(Error::EmptyData("no valid votes"))?;
    let argmax: Vec<Allocation> = s
        .candidates
        .iter()
        .zip(&s.utilities)
        .filter(|(_, &u)| u == best)
        .map(|(v, _)| election.allocation(v))
        .collect();
    Ok(BestResponse {
        vote: argmax[0].clone(),
        utility: best,
        argmax,
        sincere_utility: s.sincere,
        candidates: s.candidates.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub seed: u64,
    pub config: ElectionConfig,
    pub others: Vec<Ballot>,
    pub ideal: Allocation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub instance: InstanceRecord,
    pub model: String,
    pub sincere_utility: String,
    pub alternative: Allocation,
    pub alternative_utility: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub check: String,
    pub seed: u64,
    pub trials: usize,
    pub votes_checked: u64,
    pub models: Vec<String>,
    pub violations: Vec<Violation>,
}

impl StrategyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Shape of randomly generated elections.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceShape {
    pub mode: BudgetMode,
    /// Upper bound on the summed cost of all configured projects.
    pub max_cost: u64,
    /// Upper bound on the number of voters, focal voter included.
    pub max_voters: usize,
}

impl InstanceShape {
    pub fn fixed(max_cost: u64) -> Self {
        InstanceShape {
            mode: BudgetMode::FixedBudget,
            max_cost,
            max_voters: 5,
        }
    }

    pub fn balanced(max_cost: u64) -> Self {
        InstanceShape {
            mode: BudgetMode::BalancedBudget,
            max_cost,
            max_voters: 5,
        }
    }
}

/// Random consistent subproject order: dollars of each project keep their
/// relative order while projects interleave freely.
fn random_tie_break(rng: &mut ChaCha8Rng, projects: &[ProjectSpec]) -> TieBreakSpec {
    let mut slots: Vec<usize> = projects
        .iter()
        .enumerate()
        .flat_map(|(i, p)| std::iter::repeat(i).take(p.cost as usize))
        .collect();
    slots.shuffle(rng);
    let mut next = vec![0u64; projects.len()];
    let order = slots
        .into_iter()
        .map(|i| {
            next[i] += 1;
            SubprojectId::new(projects[i].id.clone(), next[i])
        })
        .collect();
    TieBreakSpec::Subprojects(order)
}

fn random_costs(rng: &mut ChaCha8Rng, count: usize, max_each: u64, budget_left: &mut u64) -> Vec<u64> {
    (0..count)
        .map(|i| {
            let reserve = (count - i - 1) as u64;
            let hi = max_each.min(*budget_left - reserve).max(1);
            let c = rng.gen_range(1..=hi);
            *budget_left -= c;
            c
        })
        .collect()
}

/// Random election of the given shape.
pub fn random_config(rng: &mut ChaCha8Rng, shape: InstanceShape) -> ElectionConfig {
    let mut left = shape.max_cost.max(2);
    let mut projects = Vec::new();
    match shape.mode {
        BudgetMode::FixedBudget => {
            let n = rng.gen_range(2..=5usize).min(left as usize);
            for (i, c) in random_costs(rng, n, 4, &mut left).into_iter().enumerate() {
                projects.push(ProjectSpec::new(format!("p{i}"), c));
            }
        }
        BudgetMode::BalancedBudget | BudgetMode::DeficitAugmented => {
            let n_rev = rng.gen_range(1..=2usize);
            let n_exp = rng.gen_range(1..=3usize).min(left as usize - n_rev);
            let costs = random_costs(rng, n_exp + n_rev, 3, &mut left);
            for (i, &c) in costs[..n_exp].iter().enumerate() {
                projects.push(ProjectSpec::new(format!("p{i}"), c));
            }
            for (i, &c) in costs[n_exp..].iter().enumerate() {
                projects.push(ProjectSpec::revenue(format!("r{i}"), c));
            }
        }
    }
    let total: u64 = projects.iter().map(|p| p.cost).sum();
    let budget = if shape.mode == BudgetMode::FixedBudget {
        rng.gen_range(1..=total)
    } else {
        0
    };
    let tie = random_tie_break(rng, &projects);
    ElectionConfig::fixed(projects, budget)
        .with_mode(shape.mode)
        .with_tie_break(tie)
}

/// A vote drawn uniformly from all valid knapsack votes of the election.
fn random_vote(rng: &mut ChaCha8Rng, pool: &[Allocation]) -> Allocation {
    pool[rng.gen_range(0..pool.len())].clone()
}

fn random_instance(seed: u64, shape: InstanceShape, model: UtilityModel, limit: u128) -> Result<StrategyInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = random_config(&mut rng, shape);
    let election = Election::new(config.clone())?;
    let pool = enumerate_valid_votes(&election, limit)?;
    let voters = rng.gen_range(1..=shape.max_voters.max(1));
    let others = (1..voters)
        .map(|i| Ballot::knapsack(format!("v{i}"), random_vote(&mut rng, &pool)))
        .collect();
    let ideal = random_vote(&mut rng, &pool);
    Ok(StrategyInstance {
        config,
        others,
        model,
        ideal,
    })
}

fn record(seed: u64, inst: &StrategyInstance) -> InstanceRecord {
    InstanceRecord {
        seed,
        config: inst.config.clone(),
        others: inst.others.clone(),
        ideal: inst.ideal.clone(),
    }
}

/// Checks on `trials` random instances that the sincere vote is a best
/// response under the l1 and overlap models. Instance `i` is generated from
/// seed `seed + i`, so any violation can be replayed on its own.
pub fn verify_strategyproofness(
    shape: InstanceShape,
    trials: usize,
    seed: u64,
    limit: u128,
) -> Result<StrategyReport> {
    let rule = match shape.mode {
        BudgetMode::FixedBudget => Rule::Knapsack,
        BudgetMode::BalancedBudget => Rule::Balanced,
        BudgetMode::DeficitAugmented => Rule::Deficit,
    };
    let models = [UtilityModel::L1Cost, UtilityModel::Overlap];
    let per_instance: Vec<Result<(u64, Vec<Violation>)>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i as u64);
            let mut checked = 0u64;
            let mut violations = Vec::new();
            for model in &models {
                let inst = random_instance(s, shape, model.clone(), limit)?;
                let (election, scan) = scan(&inst, rule, limit)?;
                checked += scan.candidates.len() as u64;
                let worst = scan
                    .candidates
                    .iter()
                    .zip(&scan.utilities)
                    .find(|(_, &u)| u > scan.sincere);
                if let Some((v, &u)) = worst {
                    violations.push(Violation {
                        instance: record(s, &inst),
                        model: model.name().into(),
                        sincere_utility: format_value(scan.sincere),
                        alternative: election.allocation(v),
                        alternative_utility: format_value(u),
                    });
                }
            }
            Ok((checked, violations))
        })
        .collect();
    let mut report = StrategyReport {
        check: format!("sincere-dominance/{}", shape.mode),
        seed,
        trials,
        votes_checked: 0,
        models: models.iter().map(|m| m.name().to_string()).collect(),
        violations: Vec::new(),
    };
    for r in per_instance {
        let (checked, v) = r?;
        report.votes_checked += checked;
        report.violations.extend(v);
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WelfareCheck {
    pub outcome: Allocation,
    pub welfare: i64,
    pub max_welfare: i64,
    pub maximizers: usize,
    pub attains_max: bool,
}

/// Social overlap of every feasible outcome, compared with the tally.
pub fn verify_welfare_maximization(
    election: &Election,
    ballots: &[Ballot],
    limit: u128,
) -> Result<WelfareCheck> {
    let rule = match election.mode() {
        BudgetMode::FixedBudget => Rule::Knapsack,
        BudgetMode::BalancedBudget => Rule::Balanced,
        BudgetMode::DeficitAugmented => Rule::Deficit,
    };
    let field = Field::new(election, rule, ballots)?;
    let votes = ballots
        .iter()
        .map(|b| election.knapsack_vote(b))
        .collect::<Result<Vec<_>>>()?;
    let focals: Vec<Focal> = votes.iter().map(|v| Focal::Overlap(v.clone())).collect();
    let welfare = |outcome: &[u64]| -> i64 {
        let total: Value = focals.iter().map(|f| f.value(election, outcome)).sum();
        total.to_integer()
    };
    let outcomes = candidate_votes(election, rule, limit)?;
    let values: Vec<i64> = outcomes.par_iter().map(|o| welfare(o)).collect();
    let max_welfare = values.iter().copied().max().ok_or(Error::EmptyData("no feasible outcome"))?;
    let chosen = field.without_focal();
    let w = welfare(&chosen);
    Ok(WelfareCheck {
        outcome: election.allocation(&chosen),
        welfare: w,
        max_welfare,
        maximizers: values.iter().filter(|&&v| v == max_welfare).count(),
        attains_max: w == max_welfare,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WelfareReport {
    pub seed: u64,
    pub trials: usize,
    pub failures: Vec<InstanceRecord>,
}

/// Welfare check on random fixed-budget or balanced profiles.
pub fn verify_welfare_suite(
    shape: InstanceShape,
    trials: usize,
    seed: u64,
    limit: u128,
) -> Result<WelfareReport> {
    let results: Vec<Result<Option<InstanceRecord>>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i as u64);
            let inst = random_instance(s, shape, UtilityModel::Overlap, limit)?;
            let election = Election::new(inst.config.clone())?;
            let mut all = inst.others.clone();
            all.push(Ballot::knapsack("focal", inst.ideal.clone()));
            let check = verify_welfare_maximization(&election, &all, limit)?;
            Ok((!check.attains_max).then(|| record(s, &inst)))
        })
        .collect();
    let mut failures = Vec::new();
    for r in results {
        failures.extend(r?);
    }
    Ok(WelfareReport {
        seed,
        trials,
        failures,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialReport {
    pub utility: String,
    /// Outcome of the other voters alone, at subproject granularity.
    pub others_outcome: Allocation,
    pub argmax: Vec<Allocation>,
    /// Members of the argmax set closed under domination.
    pub closed: Vec<Allocation>,
    pub holds: bool,
}

/// Full best-response set under an additive concave model and the members
/// that contain every subproject dominating one of their own.
pub fn verify_partial_strategyproofness(
    instance: &StrategyInstance,
    rule: Rule,
    domination: Domination,
    limit: u128,
) -> Result<PartialReport> {
    if !matches!(instance.model, UtilityModel::AdditiveConcave(_)) {
        return Err(Error::Model("partial strategy-proofness needs an additive concave model".into()));
    }
    if matches!(rule, Rule::Balanced | Rule::Deficit) {
        return Err(Error::Model("partial strategy-proofness applies to fixed-budget rules".into()));
    }
    let (election, s) = scan(instance, rule, limit)?;
    let UtilityModel::AdditiveConcave(m) = &instance.model else { unreachable!() };
    let marginals = m.flat(&election)?;
    let field = Field::new(&election, rule, &instance.others)?;
    let w_minus = field.without_focal();
    let popular = expand_dense(&election, &w_minus);
    let best = s.utilities.iter().copied().max().ok_or(Error::EmptyData("no valid votes"))?;
    let mut argmax = Vec::new();
    let mut closed = Vec::new();
    for (v, &u) in s.candidates.iter().zip(&s.utilities) {
        if u != best {
            continue;
        }
        let chosen = expand_dense(&election, v);
        let mut member = vec![false; election.subproject_count()];
        for &f in &chosen {
            member[f] = true;
        }
        let is_closed = chosen.iter().all(|&j| {
            popular
                .iter()
                .all(|&k| member[k] || !domination.dominates(marginals[k], marginals[j]))
        });
        let alloc = election.allocation(v);
        if is_closed {
            closed.push(alloc.clone());
        }
        argmax.push(alloc);
    }
    Ok(PartialReport {
        utility: format_value(best),
        others_outcome: election.allocation(&w_minus),
        holds: !closed.is_empty(),
        argmax,
        closed,
    })
}

/// Random non-increasing integer marginals for every expenditure project.
fn random_marginals(rng: &mut ChaCha8Rng, election: &Election) -> ConcaveMarginals {
    let map = election
        .expenditure_projects()
        .map(|p| {
            let mut seq: Vec<i64> = (0..election.cost(p)).map(|_| rng.gen_range(0..=4)).collect();
            seq.sort_unstable_by(|a, b| b.cmp(a));
            (election.id(p).clone(), seq.into_iter().map(Value::from_integer).collect())
        })
        .collect();
    ConcaveMarginals::new(map).expect("sorted non-negative marginals")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialSuiteReport {
    pub seed: u64,
    pub trials: usize,
    pub domination: Domination,
    pub failures: Vec<InstanceRecord>,
}

/// Partial strategy-proofness of the knapsack rule on random instances with
/// random concave marginals.
pub fn verify_partial_suite(
    max_cost: u64,
    trials: usize,
    seed: u64,
    domination: Domination,
    limit: u128,
) -> Result<PartialSuiteReport> {
    let results: Vec<Result<Option<InstanceRecord>>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i as u64);
            let mut inst = random_instance(s, InstanceShape::fixed(max_cost), UtilityModel::Overlap, limit)?;
            let election = Election::new(inst.config.clone())?;
            let mut rng = ChaCha8Rng::seed_from_u64(s ^ 0x9e37_79b9_7f4a_7c15);
            inst.model = UtilityModel::AdditiveConcave(random_marginals(&mut rng, &election));
            let report = verify_partial_strategyproofness(&inst, Rule::Knapsack, domination, limit)?;
            Ok((!report.holds).then(|| record(s, &inst)))
        })
        .collect();
    let mut failures = Vec::new();
    for r in results {
        failures.extend(r?);
    }
    Ok(PartialSuiteReport {
        seed,
        trials,
        domination,
        failures,
    })
}

fn per_dollar_values(values: &[(&str, i64, u64)]) -> ConcaveMarginals {
    ConcaveMarginals::new(
        values
            .iter()
            .map(|&(p, v, c)| {
                (
                    ProjectId::from(p),
                    vec![Value::new(v, c as i64); c as usize],
                )
            })
            .collect(),
    )
    .expect("constant marginals")
}

/// K-approval instance where a focal voter facing known polls does better
/// by dropping a high-value expensive project: five projects costing
/// 200/100/100/100/200, budget 400, 2-approval, polls 100/50/50/50/20 and
/// ties broken e, d, c, b, a. The focal voter values the projects at
/// 500/100/150/200/500, spread evenly over their dollars.
pub fn kapproval_counterexample() -> StrategyInstance {
    let costs = [("a", 200), ("b", 100), ("c", 100), ("d", 100), ("e", 200)];
    let config = ElectionConfig::fixed(
        costs.iter().map(|&(p, c)| ProjectSpec::new(p, c)).collect(),
        400,
    )
    .with_tie_break(TieBreakSpec::Projects(
        ["e", "d", "c", "b", "a"].map(ProjectId::from).to_vec(),
    ))
    .with_approval_limit(2);
    let mut others = Vec::new();
    for (n, set) in [(50, &["a", "b"][..]), (50, &["a", "c"]), (20, &["d", "e"]), (30, &["d"])] {
        for _ in 0..n {
            others.push(Ballot::approval(format!("o{}", others.len()), set.iter().copied()));
        }
    }
    let values = [500, 100, 150, 200, 500];
    let marginals = per_dollar_values(
        &costs
            .iter()
            .zip(values)
            .map(|(&(p, c), v)| (p, v, c))
            .collect::<Vec<_>>(),
    );
    StrategyInstance {
        config,
        others,
        model: UtilityModel::AdditiveConcave(marginals),
        ideal: [("a", 200), ("e", 200)].into_iter().collect(),
    }
}

/// Strictly integral instance where deviating pays: costs a=2, b=2, c=3,
/// budget 5, ties favour the more expensive project, others approve a, b, c
/// 15, 11 and 10 times, and the focal voter's favourite set is {b, c}.
pub fn integral_counterexample() -> StrategyInstance {
    let config = ElectionConfig::fixed(
        vec![
            ProjectSpec::new("a", 2),
            ProjectSpec::new("b", 2),
            ProjectSpec::new("c", 3),
        ],
        5,
    )
    .with_tie_break(TieBreakSpec::Projects(["c", "a", "b"].map(ProjectId::from).to_vec()));
    let mut others = Vec::new();
    for (n, set) in [(10, &["a", "c"][..]), (5, &["a", "b"]), (6, &["b"])] {
        for _ in 0..n {
            others.push(Ballot::approval(format!("o{}", others.len()), set.iter().copied()));
        }
    }
    StrategyInstance {
        config,
        others,
        model: UtilityModel::Overlap,
        ideal: [("b", 2), ("c", 3)].into_iter().collect(),
    }
}

/// Knapsack instance with no domination-closed best response. Budget 8,
/// costs p0=1, p1=2, p2=1, p3=2, p4=3. Without the focal voter every dollar
/// wins except p3's second, which loses a score tie to p2. The only best
/// response keeps p1's worthless second dollar and skips p2: adding p2
/// instead would knock out p3's second dollar, not p1's, because p1 wins on
/// the other votes alone.
pub fn knapsack_partial_counterexample() -> StrategyInstance {
    let costs = [("p0", 1), ("p1", 2), ("p2", 1), ("p3", 2), ("p4", 3)];
    let tie = [("p4", 1), ("p4", 2), ("p1", 1), ("p3", 1), ("p1", 2), ("p2", 1), ("p0", 1), ("p3", 2), ("p4", 3)];
    let config = ElectionConfig::fixed(
        costs.iter().map(|&(p, c)| ProjectSpec::new(p, c)).collect(),
        8,
    )
    .with_tie_break(TieBreakSpec::Subprojects(
        tie.iter().map(|&(p, t)| SubprojectId::new(p, t)).collect(),
    ));
    let full: Allocation = [("p0", 1), ("p1", 2), ("p3", 2), ("p4", 3)].into_iter().collect();
    let mixed: Allocation = [("p0", 1), ("p1", 2), ("p2", 1), ("p3", 1), ("p4", 3)].into_iter().collect();
    let others = (0..4)
        .map(|i| Ballot::knapsack(format!("v{i}"), if i % 2 == 0 { full.clone() } else { mixed.clone() }))
        .collect();
    let marginals: [(&str, &[i64]); 5] = [("p0", &[1]), ("p1", &[2, 0]), ("p2", &[1]), ("p3", &[4, 4]), ("p4", &[4, 1, 1])];
    let model = ConcaveMarginals::new(
        marginals
            .iter()
            .map(|&(p, m)| (ProjectId::from(p), m.iter().map(|&x| Value::from_integer(x)).collect()))
            .collect(),
    )
    .expect("non-increasing marginals");
    StrategyInstance {
        config,
        others,
        model: UtilityModel::AdditiveConcave(model),
        ideal: full,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegralDemo {
    pub sincere_vote: Vec<ProjectId>,
    pub sincere_outcome: Vec<ProjectId>,
    pub sincere_utility: String,
    pub deviation: Vec<ProjectId>,
    pub deviation_outcome: Vec<ProjectId>,
    pub deviation_utility: String,
    pub best_utility: String,
}

fn funded_ids(election: &Election, amounts: &[u64]) -> Vec<ProjectId> {
    (0..amounts.len())
        .filter(|&p| amounts[p] == election.cost(p))
        .map(|p| election.id(p).clone())
        .collect()
}

/// Replays the integral instance with the sincere vote and the {a, c} deviation.
pub fn integral_demo() -> Result<IntegralDemo> {
    let inst = integral_counterexample();
    let election = Election::new(inst.config.clone())?;
    let field = Field::new(&election, Rule::Integral, &inst.others)?;
    let sincere = sincere_vote(&election, Rule::Integral, &inst.ideal)?;
    let deviation = sincere_vote(
        &election,
        Rule::Integral,
        &[("a", 2), ("c", 3)].into_iter().collect(),
    )?;
    let focal = Focal::new(&election, &inst.model, &sincere)?;
    let (o1, o2) = (field.with_vote(&sincere), field.with_vote(&deviation));
    let best = best_response(&inst, Rule::Integral, DEFAULT_ENUMERATION_LIMIT)?;
    Ok(IntegralDemo {
        sincere_vote: funded_ids(&election, &sincere),
        sincere_outcome: funded_ids(&election, &o1),
        sincere_utility: format_value(focal.value(&election, &o1)),
        deviation: funded_ids(&election, &deviation),
        deviation_outcome: funded_ids(&election, &o2),
        deviation_utility: format_value(focal.value(&election, &o2)),
        best_utility: format_value(best.utility),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegralBoundReport {
    pub seed: u64,
    pub trials: usize,
    /// Instances where the sincere vote lost more than one project's value.
    pub violations: Vec<InstanceRecord>,
    /// Instances where some deviation strictly beat the sincere vote.
    pub strict_gains: usize,
}

/// Under the strictly integral rule the sincere vote can lose, but never by
/// more than the value of one project of the voter's favourite set.
pub fn verify_integral_bound(trials: usize, seed: u64, limit: u128) -> Result<IntegralBoundReport> {
    let results: Vec<Result<(bool, bool, InstanceRecord)>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let n = rng.gen_range(2..=5usize);
            let projects: Vec<ProjectSpec> = (0..n)
                .map(|i| ProjectSpec::new(format!("p{i}"), rng.gen_range(1..=6)))
                .collect();
            let total: u64 = projects.iter().map(|p| p.cost).sum();
            let max_cost = projects.iter().map(|p| p.cost).max().unwrap();
            let budget = rng.gen_range(max_cost..=total);
            let tie = TieBreakSpec::Projects({
                let mut ids: Vec<ProjectId> = projects.iter().map(|p| p.id.clone()).collect();
                ids.shuffle(&mut rng);
                ids
            });
            let config = ElectionConfig::fixed(projects, budget).with_tie_break(tie);
            let election = Election::new(config.clone())?;
            let sets = candidate_votes(&election, Rule::Integral, limit)?;
            let nonempty: Vec<&Vec<u64>> = sets.iter().filter(|v| v.iter().any(|&w| w > 0)).collect();
            let voters = rng.gen_range(0..=8usize);
            let others: Vec<Ballot> = (0..voters)
                .map(|i| {
                    let v = sets[rng.gen_range(0..sets.len())].clone();
                    Ballot::approval(format!("v{i}"), funded_ids(&election, &v))
                })
                .collect();
            let ideal_dense = nonempty[rng.gen_range(0..nonempty.len())].clone();
            let ideal = election.allocation(&ideal_dense);
            let inst = StrategyInstance {
                config,
                others,
                model: UtilityModel::Overlap,
                ideal,
            };
            let best = best_response(&inst, Rule::Integral, limit)?;
            let slack = (0..n)
                .filter(|&p| ideal_dense[p] > 0)
                .map(|p| election.cost(p))
                .max()
                .unwrap_or(0);
            let ok = best.sincere_utility + Value::from_integer(slack as i64) >= best.utility;
            Ok((ok, best.utility > best.sincere_utility, record(s, &inst)))
        })
        .collect();
    let mut report = IntegralBoundReport {
        seed,
        trials,
        violations: Vec::new(),
        strict_gains: 0,
    };
    for r in results {
        let (ok, gain, rec) = r?;
        if !ok {
            report.violations.push(rec);
        }
        report.strict_gains += gain as usize;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoterGain {
    pub voter: String,
    pub before: i64,
    pub after: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupDemo {
    pub sincere_outcome: Allocation,
    pub coalition_outcome: Allocation,
    pub coalition: Vec<VoterGain>,
    /// Best gain any single voter can get alone against sincere others.
    pub single_voter_gains: Vec<VoterGain>,
}

/// Five projects of cap 2, budget 2, ties b, d, c, e, a. Voters 1 and 2 want
/// $2 on a, voter 3 wants b and c, voter 4 wants d and e. Voters 3 and 4
/// jointly voting b and d change the outcome in their favour.
pub fn group_manipulation_demo() -> Result<GroupDemo> {
    let config = ElectionConfig::fixed(
        ["a", "b", "c", "d", "e"].iter().map(|&p| ProjectSpec::new(p, 2)).collect(),
        2,
    )
    .with_tie_break(TieBreakSpec::Projects(
        ["b", "d", "c", "e", "a"].map(ProjectId::from).to_vec(),
    ));
    let election = Election::new(config.clone())?;
    let ideals: Vec<(&str, Allocation)> = vec![
        ("1", [("a", 2)].into_iter().collect()),
        ("2", [("a", 2)].into_iter().collect()),
        ("3", [("b", 1), ("c", 1)].into_iter().collect()),
        ("4", [("d", 1), ("e", 1)].into_iter().collect()),
    ];
    let sincere: Vec<Ballot> = ideals.iter().map(|(v, a)| Ballot::knapsack(*v, a.clone())).collect();
    let joint: Allocation = [("b", 1), ("d", 1)].into_iter().collect();
    let mut manipulated = sincere.clone();
    manipulated[2] = Ballot::knapsack("3", joint.clone());
    manipulated[3] = Ballot::knapsack("4", joint);

    let out1 = crate::tally::knapsack_tally(&sincere, &election)?.allocation;
    let out2 = crate::tally::knapsack_tally(&manipulated, &election)?.allocation;
    let overlap = |o: &Allocation, i: &Allocation| crate::utility::overlap_utility(o, i) as i64;
    let coalition = ideals[2..]
        .iter()
        .map(|(v, ideal)| VoterGain {
            voter: v.to_string(),
            before: overlap(&out1, ideal),
            after: overlap(&out2, ideal),
        })
        .collect();
    let mut single_voter_gains = Vec::new();
    for (i, (v, ideal)) in ideals.iter().enumerate() {
        let mut others = sincere.clone();
        others.remove(i);
        let inst = StrategyInstance {
            config: config.clone(),
            others,
            model: UtilityModel::Overlap,
            ideal: ideal.clone(),
        };
        let best = best_response(&inst, Rule::Knapsack, DEFAULT_ENUMERATION_LIMIT)?;
        single_voter_gains.push(VoterGain {
            voter: v.to_string(),
            before: best.sincere_utility.to_integer(),
            after: best.utility.to_integer(),
        });
    }
    Ok(GroupDemo {
        sincere_outcome: out1,
        coalition_outcome: out2,
        coalition,
        single_voter_gains,
    })
}

/// Whether `set` (projects at full cost) appears in a list of allocations.
pub fn contains_set(list: &[Allocation], set: &[&str]) -> bool {
    list.iter().any(|a| {
        let support: Vec<&str> = a.support().map(|p| p.as_str()).collect();
        support.len() == set.len() && set.iter().all(|s| support.contains(s))
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityFailure {
    pub seed: u64,
    pub config: ElectionConfig,
    pub a: Allocation,
    pub b: Allocation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub seed: u64,
    pub pairs: usize,
    pub failures: Vec<IdentityFailure>,
}

/// Checks `2 * overlap = 2B - l1` on random pairs of complete allocations.
/// Pair `i` draws its election and both allocations from seed `seed + i`.
pub fn verify_overlap_identity(pairs: usize, max_cost: u64, seed: u64, limit: u128) -> Result<IdentityReport> {
    let results: Vec<Result<Option<IdentityFailure>>> = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let config = random_config(&mut rng, InstanceShape::fixed(max_cost));
            let election = Election::new(config.clone())?;
            let pool = enumerate_valid_votes(&election, limit)?;
            let a = pool[rng.gen_range(0..pool.len())].clone();
            let b = pool[rng.gen_range(0..pool.len())].clone();
            let lhs = 2 * overlap_utility(&a, &b);
            let rhs = 2 * election.budget() - l1_distance(&a, &b);
            Ok((lhs != rhs).then_some(IdentityFailure { seed: s, config, a, b }))
        })
        .collect();
    let mut failures = Vec::new();
    for r in results {
        failures.extend(r?);
    }
    Ok(IdentityReport { seed, pairs, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn election(caps: &[u64], budget: u64) -> Election {
        Election::new(ElectionConfig::fixed(
            caps.iter().enumerate().map(|(i, &c)| ProjectSpec::new(format!("p{}", i + 1), c)).collect(),
            budget,
        ))
        .unwrap()
    }

    fn dense_votes(e: &Election) -> Vec<Vec<u64>> {
        enumerate_valid_votes(e, DEFAULT_ENUMERATION_LIMIT)
            .unwrap()
            .iter()
            .map(|a| e.dense(a).unwrap())
            .collect()
    }

    #[test]
    fn enumerate_small_cases() {
        assert_eq!(dense_votes(&election(&[1, 1], 1)), vec![vec![1, 0], vec![0, 1]]);
        assert_eq!(
            dense_votes(&election(&[2, 2], 2)),
            vec![vec![2, 0], vec![1, 1], vec![0, 2]]
        );
    }

    #[test]
    fn enumerate_three_voter_count_matches_independent_count() {
        let e = election(&[5, 5, 10], 10);
        let votes = dense_votes(&e);
        // independent: count triples directly
        let mut direct = 0;
        for a in 0..=5u64 {
            for b in 0..=5u64 {
                for c in 0..=10u64 {
                    if a + b + c == 10 {
                        direct += 1;
                    }
                }
            }
        }
        assert_eq!(votes.len(), direct);
        assert_eq!(votes.len(), 36);
        let mut dedup = votes.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 36);
    }

    #[test]
    fn enumeration_limit_refuses_with_count() {
        let e = election(&[5, 5, 10], 10);
        match enumerate_valid_votes(&e, 35) {
            Err(Error::EnumerationLimit { count, limit }) => {
                assert_eq!((count, limit), (36, 35));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn counts_agree_with_enumeration() {
        let e = Election::new(
            ElectionConfig::fixed(
                vec![
                    ProjectSpec::new("x", 2),
                    ProjectSpec::new("y", 3),
                    ProjectSpec::revenue("t", 2),
                    ProjectSpec::revenue("u", 1),
                ],
                0,
            )
            .with_mode(BudgetMode::BalancedBudget),
        )
        .unwrap();
        let n = candidate_votes(&e, Rule::Balanced, u128::MAX).unwrap().len() as u128;
        assert_eq!(n, count_candidate_votes(&e, Rule::Balanced));
        let f = election(&[2, 3, 1, 4], 5);
        for rule in [Rule::Knapsack, Rule::KApproval { k: 2 }, Rule::Integral] {
            let n = candidate_votes(&f, rule, u128::MAX).unwrap().len() as u128;
            assert_eq!(n, count_candidate_votes(&f, rule), "{rule:?}");
        }
    }

    #[test]
    fn unanimity_best_response_is_ideal() {
        let ideal: Allocation = [("p1", 3), ("p2", 5), ("p3", 2)].into_iter().collect();
        let inst = StrategyInstance {
            config: ElectionConfig::fixed(
                vec![ProjectSpec::new("p1", 5), ProjectSpec::new("p2", 5), ProjectSpec::new("p3", 10)],
                10,
            ),
            others: vec![],
            model: UtilityModel::Overlap,
            ideal: ideal.clone(),
        };
        let b = best_response(&inst, Rule::Knapsack, DEFAULT_ENUMERATION_LIMIT).unwrap();
        assert_eq!(b.utility, Value::from_integer(10));
        assert_eq!(b.argmax, vec![ideal]);
        assert_eq!(b.sincere_utility, b.utility);
    }

    #[test]
    fn kapproval_counterexample_best_responses() {
        let inst = kapproval_counterexample();
        let b = best_response(&inst, Rule::KApproval { k: 2 }, DEFAULT_ENUMERATION_LIMIT).unwrap();
        assert_eq!(b.utility, Value::from_integer(850));
        assert!(contains_set(&b.argmax, &["c", "d"]));
    }

    #[test]
    fn integral_counterexample_deviation_pays() {
        let d = integral_demo().unwrap();
        let ids = |v: &[ProjectId]| v.iter().map(|p| p.to_string()).collect::<Vec<_>>();
        assert_eq!(ids(&d.sincere_outcome), ["a", "b"]);
        assert_eq!(ids(&d.deviation_outcome), ["a", "c"]);
        assert_eq!(d.sincere_utility, "2");
        assert_eq!(d.deviation_utility, "3");
        assert_eq!(d.best_utility, "3");
    }

    #[test]
    fn group_demo_outcomes() {
        let g = group_manipulation_demo().unwrap();
        assert_eq!(g.sincere_outcome.support().map(|p| p.as_str()).collect::<Vec<_>>(), ["a"]);
        assert_eq!(g.sincere_outcome.get("a"), 2);
        assert_eq!(g.coalition_outcome.get("b"), 1);
        assert_eq!(g.coalition_outcome.get("d"), 1);
        assert!(g.coalition.iter().all(|v| v.before == 0 && v.after == 1));
        assert!(g.single_voter_gains.iter().all(|v| v.before == v.after));
    }

    #[test]
    fn small_random_suites_pass() {
        let r = verify_strategyproofness(InstanceShape::fixed(10), 30, 1, DEFAULT_ENUMERATION_LIMIT).unwrap();
        assert!(r.passed(), "{:?}", r.violations.first());
        let r = verify_welfare_suite(InstanceShape::fixed(10), 30, 2, DEFAULT_ENUMERATION_LIMIT).unwrap();
        assert!(r.failures.is_empty());
        let r = verify_partial_suite(10, 30, 3, Domination::Strict, DEFAULT_ENUMERATION_LIMIT).unwrap();
        assert!(r.failures.is_empty());
    }

    #[test]
    fn single_voter_sincere_outcome_is_ideal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let config = random_config(&mut rng, InstanceShape::fixed(12));
            let e = Election::new(config).unwrap();
            let pool = enumerate_valid_votes(&e, DEFAULT_ENUMERATION_LIMIT).unwrap();
            let ideal = random_vote(&mut rng, &pool);
            let out = crate::tally::knapsack_tally(&[Ballot::knapsack("v", ideal.clone())], &e).unwrap();
            assert_eq!(out.allocation, ideal);
        }
    }

    #[test]
    fn lone_voter_ideal_shaped_response_is_closed() {
        let ideal: Allocation = [("p1", 2), ("p2", 1)].into_iter().collect();
        let inst = StrategyInstance {
            config: ElectionConfig::fixed(
                vec![ProjectSpec::new("p1", 2), ProjectSpec::new("p2", 2), ProjectSpec::new("p3", 2)],
                3,
            ),
            others: vec![],
            model: UtilityModel::AdditiveConcave(ConcaveMarginals::overlap_shaped(&ideal)),
            ideal: ideal.clone(),
        };
        for d in [Domination::Strict, Domination::Weak] {
            let r = verify_partial_strategyproofness(&inst, Rule::Knapsack, d, DEFAULT_ENUMERATION_LIMIT).unwrap();
            assert!(r.closed.contains(&ideal), "{d:?}");
        }
    }

    #[test]
    fn pinned_instance_has_no_closed_best_response() {
        let inst = knapsack_partial_counterexample();
        for d in [Domination::Strict, Domination::Weak] {
            let r = verify_partial_strategyproofness(&inst, Rule::Knapsack, d, DEFAULT_ENUMERATION_LIMIT).unwrap();
            assert_eq!(r.utility, "17");
            assert_eq!(r.argmax.len(), 1);
            assert_eq!(r.argmax[0].get("p2"), 0);
            assert_eq!(r.argmax[0].get("p1"), 2);
            assert!(!r.holds, "{d:?}");
        }
    }

    #[test]
    fn partial_requires_concave_model() {
        let inst = integral_counterexample();
        assert!(verify_partial_strategyproofness(&inst, Rule::Integral, Domination::Strict, 100).is_err());
    }
}
