//! Election domain types and the per-dollar expansion every rule is built on.
//!
//! A project of cost `c` is split into `c` unit subprojects, dollar `1..=c`.
//! A set of subprojects is *consistent* when it is prefix-closed within each
//! project, which makes it interchangeable with an [`Allocation`].

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{BallotViolation, Error, Result};

/// Identifier of the synthetic revenue item added in deficit-augmented mode.
pub const DEFICIT_PROJECT: &str = "deficit";

/// Default number of places on a ranking ballot.
pub const DEFAULT_RANKING_LENGTH: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProjectId(String);

impl ProjectId {
    pub fn new(id: impl Into<String>) -> Self {
        ProjectId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ProjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ProjectId {
    fn from(s: &str) -> Self {
        ProjectId(s.to_owned())
    }
}

impl From<String> for ProjectId {
    fn from(s: String) -> Self {
        ProjectId(s)
    }
}

impl Borrow<str> for ProjectId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectKind {
    #[default]
    Expenditure,
    Revenue,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectSpec {
    pub id: ProjectId,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    /// Cost cap in dollars.
    pub cost: u64,
    #[serde(default)]
    pub kind: ProjectKind,
}

impl ProjectSpec {
    pub fn new(id: impl Into<ProjectId>, cost: u64) -> Self {
        ProjectSpec {
            id: id.into(),
            name: String::new(),
            cost,
            kind: ProjectKind::Expenditure,
        }
    }

    pub fn revenue(id: impl Into<ProjectId>, cost: u64) -> Self {
        ProjectSpec {
            kind: ProjectKind::Revenue,
            ..ProjectSpec::new(id, cost)
        }
    }

    pub fn display_name(&self) -> &str {
        if self.name.is_empty() {
            self.id.as_str()
        } else {
            &self.name
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetMode {
    #[default]
    FixedBudget,
    BalancedBudget,
    DeficitAugmented,
}

impl fmt::Display for BudgetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BudgetMode::FixedBudget => "fixed-budget",
            BudgetMode::BalancedBudget => "balanced-budget",
            BudgetMode::DeficitAugmented => "deficit-augmented",
        })
    }
}

/// The `dollar`-th unit of `project`, counted from 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubprojectId {
    pub project: ProjectId,
    pub dollar: u64,
}

impl SubprojectId {
    pub fn new(project: impl Into<ProjectId>, dollar: u64) -> Self {
        SubprojectId {
            project: project.into(),
            dollar,
        }
    }
}

impl fmt::Display for SubprojectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.project, self.dollar)
    }
}

/// Tie-break order as written in a config file: either a project order
/// (expanded project by project, dollars ascending) or an explicit order
/// over every subproject.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TieBreakSpec {
    Projects(Vec<ProjectId>),
    Subprojects(Vec<SubprojectId>),
}

/// A total order over subprojects; earlier entries win ties.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TieBreakOrder {
    order: Vec<SubprojectId>,
}

impl TieBreakOrder {
    pub fn new(order: Vec<SubprojectId>) -> Self {
        TieBreakOrder { order }
    }

    /// Expands a project order into a subproject order.
    pub fn from_project_order<'a>(projects: impl IntoIterator<Item = (&'a ProjectId, u64)>) -> Self {
        let order = projects
            .into_iter()
            .flat_map(|(id, cost)| (1..=cost).map(move |t| SubprojectId::new(id.clone(), t)))
            .collect();
        TieBreakOrder { order }
    }

    pub fn as_slice(&self) -> &[SubprojectId] {
        &self.order
    }

    /// Checks that dollars of every project appear in ascending order.
    pub fn is_consistent(&self) -> bool {
        let mut next: HashMap<&ProjectId, u64> = HashMap::new();
        self.order.iter().all(|s| {
            let expected = next.entry(&s.project).or_insert(1);
            let ok = s.dollar == *expected;
            *expected += 1;
            ok
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElectionConfig {
    pub projects: Vec<ProjectSpec>,
    /// Total budget in dollars. Unused outside fixed-budget mode.
    #[serde(default)]
    pub budget: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_break: Option<TieBreakSpec>,
    #[serde(default)]
    pub mode: BudgetMode,
    /// Display scale of one dollar, e.g. 1000 when costs are entered in thousands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<u64>,
    /// K for K-approval ballots; unlimited when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approval_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking_length: Option<usize>,
}

impl ElectionConfig {
    pub fn fixed(projects: Vec<ProjectSpec>, budget: u64) -> Self {
        ElectionConfig {
            projects,
            budget,
            tie_break: None,
            mode: BudgetMode::FixedBudget,
            unit: None,
            approval_limit: None,
            ranking_length: None,
        }
    }

    pub fn with_mode(mut self, mode: BudgetMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_tie_break(mut self, tie_break: TieBreakSpec) -> Self {
        self.tie_break = Some(tie_break);
        self
    }

    pub fn with_approval_limit(mut self, k: usize) -> Self {
        self.approval_limit = Some(k);
        self
    }
}

/// Dollars per project. Projects that are absent hold zero, and zero
/// entries are ignored by equality.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Allocation(BTreeMap<ProjectId, u64>);

impl Allocation {
    pub fn new() -> Self {
        Allocation(BTreeMap::new())
    }

    pub fn get(&self, project: &str) -> u64 {
        self.0.get(project).copied().unwrap_or(0)
    }

    pub fn set(&mut self, project: impl Into<ProjectId>, amount: u64) {
        self.0.insert(project.into(), amount);
    }

    pub fn total(&self) -> u64 {
        self.0.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ProjectId, u64)> {
        self.0.iter().map(|(p, &w)| (p, w))
    }

    /// Projects with a nonzero amount.
    pub fn support(&self) -> impl Iterator<Item = &ProjectId> {
        self.0.iter().filter(|(_, &w)| w > 0).map(|(p, _)| p)
    }

    pub fn is_zero(&self) -> bool {
        self.0.values().all(|&w| w == 0)
    }
}

impl PartialEq for Allocation {
    fn eq(&self, other: &Self) -> bool {
        let nonzero = |a: &Allocation| a.0.iter().filter(|(_, &w)| w > 0).count();
        nonzero(self) == nonzero(other)
            && self.0.iter().all(|(p, &w)| other.get(p.as_str()) == w)
    }
}

impl Eq for Allocation {}

impl<P: Into<ProjectId>> FromIterator<(P, u64)> for Allocation {
    fn from_iter<I: IntoIterator<Item = (P, u64)>>(iter: I) -> Self {
        Allocation(iter.into_iter().map(|(p, w)| (p.into(), w)).collect())
    }
}

impl fmt::Display for Allocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, (p, w)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{p}:{w}")?;
        }
        f.write_str(")")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairChoice {
    pub pair: [ProjectId; 2],
    pub winner: ProjectId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "kebab-case")]
pub enum BallotPayload {
    Knapsack { allocation: Allocation },
    #[serde(rename = "kapproval")]
    KApproval { approvals: Vec<ProjectId> },
    Pairwise { comparisons: Vec<PairChoice> },
    Ranking { ranking: Vec<ProjectId> },
}

impl BallotPayload {
    pub fn format_name(&self) -> &'static str {
        match self {
            BallotPayload::Knapsack { .. } => "knapsack",
            BallotPayload::KApproval { .. } => "kapproval",
            BallotPayload::Pairwise { .. } => "pairwise",
            BallotPayload::Ranking { .. } => "ranking",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ballot {
    pub voter_id: String,
    #[serde(flatten)]
    pub payload: BallotPayload,
}

impl Ballot {
    pub fn knapsack(voter_id: impl Into<String>, allocation: Allocation) -> Self {
        Ballot {
            voter_id: voter_id.into(),
            payload: BallotPayload::Knapsack { allocation },
        }
    }

    pub fn approval<P: Into<ProjectId>>(
        voter_id: impl Into<String>,
        approvals: impl IntoIterator<Item = P>,
    ) -> Self {
        Ballot {
            voter_id: voter_id.into(),
            payload: BallotPayload::KApproval {
                approvals: approvals.into_iter().map(Into::into).collect(),
            },
        }
    }

    pub fn ranking<P: Into<ProjectId>>(
        voter_id: impl Into<String>,
        ranking: impl IntoIterator<Item = P>,
    ) -> Self {
        Ballot {
            voter_id: voter_id.into(),
            payload: BallotPayload::Ranking {
                ranking: ranking.into_iter().map(Into::into).collect(),
            },
        }
    }

    pub fn pairwise(voter_id: impl Into<String>, comparisons: Vec<PairChoice>) -> Self {
        Ballot {
            voter_id: voter_id.into(),
            payload: BallotPayload::Pairwise { comparisons },
        }
    }
}

/// A validated election with index structures for the per-dollar view.
///
/// Projects are addressed by position; subprojects by a flat index
/// `offset(p) + t - 1`. In deficit-augmented mode a synthetic revenue project
/// is appended after the configured ones.
#[derive(Clone, Debug)]
pub struct Election {
    config: ElectionConfig,
    projects: Vec<ProjectSpec>,
    index: HashMap<ProjectId, usize>,
    offsets: Vec<usize>,
    /// flat subproject -> tie-break rank
    rank: Vec<usize>,
    /// tie-break rank -> flat subproject
    order: Vec<usize>,
    synthetic: Option<usize>,
}

impl Election {
    pub fn new(config: ElectionConfig) -> Result<Self> {
        if config.projects.is_empty() {
            return Err(Error::Config("at least one project is required".into()));
        }
        let mut projects = config.projects.clone();
        let mut index = HashMap::with_capacity(projects.len() + 1);
        for (i, p) in projects.iter().enumerate() {
            if p.cost == 0 {
                return Err(Error::Config(format!("project `{}` has zero cost", p.id)));
            }
            if config.mode == BudgetMode::DeficitAugmented && p.id.as_str() == DEFICIT_PROJECT {
                return Err(Error::Config(format!(
                    "project id `{DEFICIT_PROJECT}` is reserved in deficit-augmented mode"
                )));
            }
            if index.insert(p.id.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate project id `{}`", p.id)));
            }
        }
        let expenditure_cap: u64 = projects
            .iter()
            .filter(|p| p.kind == ProjectKind::Expenditure)
            .map(|p| p.cost)
            .sum();
        let has_revenue = projects.iter().any(|p| p.kind == ProjectKind::Revenue);
        match config.mode {
            BudgetMode::FixedBudget => {
                if has_revenue {
                    return Err(Error::Config(
                        "revenue projects require balanced-budget or deficit-augmented mode".into(),
                    ));
                }
                if config.budget > expenditure_cap {
                    return Err(Error::Config(format!(
                        "budget {} exceeds total project capacity {expenditure_cap}",
                        config.budget
                    )));
                }
            }
            BudgetMode::BalancedBudget => {
                if !has_revenue || expenditure_cap == 0 {
                    return Err(Error::Config(
                        "balanced-budget mode needs at least one revenue and one expenditure project"
                            .into(),
                    ));
                }
            }
            BudgetMode::DeficitAugmented => {
                if expenditure_cap == 0 {
                    return Err(Error::Config(
                        "deficit-augmented mode needs at least one expenditure project".into(),
                    ));
                }
            }
        }
        let synthetic = if config.mode == BudgetMode::DeficitAugmented {
            let spec = ProjectSpec {
                id: ProjectId::from(DEFICIT_PROJECT),
                name: "Budget deficit".into(),
                cost: expenditure_cap,
                kind: ProjectKind::Revenue,
            };
            index.insert(spec.id.clone(), projects.len());
            projects.push(spec);
            Some(projects.len() - 1)
        } else {
            None
        };

        let mut offsets = Vec::with_capacity(projects.len() + 1);
        let mut acc = 0usize;
        for p in &projects {
            offsets.push(acc);
            acc += p.cost as usize;
        }
        offsets.push(acc);

        let mut election = Election {
            config,
            projects,
            index,
            offsets,
            rank: vec![usize::MAX; acc],
            order: Vec::with_capacity(acc),
            synthetic,
        };
        election.install_tie_break()?;
        Ok(election)
    }

    fn install_tie_break(&mut self) -> Result<()> {
        let configured = self.config.projects.len();
        let order: Vec<SubprojectId> = match &self.config.tie_break {
            None => TieBreakOrder::from_project_order(
                self.projects[..configured].iter().map(|p| (&p.id, p.cost)),
            )
            .order,
            Some(TieBreakSpec::Projects(ids)) => {
                let mut seen = BTreeSet::new();
                let mut costed = Vec::with_capacity(ids.len());
                for id in ids {
                    let i = self.require_configured(id)?;
                    if !seen.insert(i) {
                        return Err(Error::Config(format!("tie-break lists `{id}` twice")));
                    }
                    costed.push((id, self.projects[i].cost));
                }
                if seen.len() != configured {
                    return Err(Error::Config(
                        "tie-break order must list every project".into(),
                    ));
                }
                TieBreakOrder::from_project_order(costed).order
            }
            Some(TieBreakSpec::Subprojects(subs)) => subs.clone(),
        };
        let user_len = order.len();
        let mut order = TieBreakOrder::new(order);
        if let Some(s) = self.synthetic {
            let spec = &self.projects[s];
            order
                .order
                .extend((1..=spec.cost).map(|t| SubprojectId::new(spec.id.clone(), t)));
        }
        if !order.is_consistent() {
            return Err(Error::Config(
                "tie-break order is not consistent: dollars of a project must appear in ascending order"
                    .into(),
            ));
        }
        for (r, sub) in order.order.iter().enumerate() {
            let p = match self.index.get(&sub.project) {
                Some(&p) if r >= user_len || Some(p) != self.synthetic => p,
                _ => return Err(Error::UnknownProject(sub.project.clone())),
            };
            if sub.dollar == 0 || sub.dollar > self.projects[p].cost {
                return Err(Error::Config(format!(
                    "tie-break entry {sub} is outside the project's cost cap"
                )));
            }
            let f = self.flat(p, sub.dollar);
            self.rank[f] = r;
            self.order.push(f);
        }
        if self.order.len() != self.rank.len() {
            return Err(Error::Config(
                "tie-break order must cover every subproject exactly once".into(),
            ));
        }
        Ok(())
    }

    fn require_configured(&self, id: &ProjectId) -> Result<usize> {
        match self.index.get(id) {
            Some(&i) if Some(i) != self.synthetic => Ok(i),
            _ => Err(Error::UnknownProject(id.clone())),
        }
    }

    pub fn config(&self) -> &ElectionConfig {
        &self.config
    }

    pub fn mode(&self) -> BudgetMode {
        self.config.mode
    }

    pub fn budget(&self) -> u64 {
        self.config.budget
    }

    /// All projects, including the synthetic deficit item when present.
    pub fn projects(&self) -> &[ProjectSpec] {
        &self.projects
    }

    pub fn project_count(&self) -> usize {
        self.projects.len()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, p: usize) -> &ProjectId {
        &self.projects[p].id
    }

    pub fn cost(&self, p: usize) -> u64 {
        self.projects[p].cost
    }

    pub fn kind(&self, p: usize) -> ProjectKind {
        self.projects[p].kind
    }

    pub fn synthetic_deficit(&self) -> Option<usize> {
        self.synthetic
    }

    pub fn approval_limit(&self) -> usize {
        self.config
            .approval_limit
            .unwrap_or(self.config.projects.len())
    }

    pub fn ranking_length(&self) -> usize {
        self.config.ranking_length.unwrap_or(DEFAULT_RANKING_LENGTH)
    }

    /// Total number of subprojects across all projects.
    pub fn subproject_count(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn offset(&self, p: usize) -> usize {
        self.offsets[p]
    }

    pub fn flat(&self, p: usize, dollar: u64) -> usize {
        debug_assert!(dollar >= 1 && dollar <= self.cost(p));
        self.offsets[p] + dollar as usize - 1
    }

    /// Project and 1-based dollar of a flat subproject index.
    pub fn unflatten(&self, f: usize) -> (usize, u64) {
        let p = self.offsets.partition_point(|&o| o <= f) - 1;
        (p, (f - self.offsets[p] + 1) as u64)
    }

    pub fn subproject(&self, f: usize) -> SubprojectId {
        let (p, t) = self.unflatten(f);
        SubprojectId::new(self.id(p).clone(), t)
    }

    pub fn tie_rank(&self, f: usize) -> usize {
        self.rank[f]
    }

    /// Flat subprojects from highest to lowest tie-break priority.
    pub fn tie_order(&self) -> &[usize] {
        &self.order
    }

    pub fn tie_break_order(&self) -> TieBreakOrder {
        TieBreakOrder::new(self.order.iter().map(|&f| self.subproject(f)).collect())
    }

    /// Project-level priority, taken from each project's first dollar.
    pub fn project_rank(&self, p: usize) -> usize {
        self.rank[self.offsets[p]]
    }

    pub fn projects_by_priority(&self) -> Vec<usize> {
        let mut ps: Vec<usize> = (0..self.projects.len()).collect();
        ps.sort_by_key(|&p| self.project_rank(p));
        ps
    }

    pub fn expenditure_projects(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.projects.len()).filter(|&p| self.kind(p) == ProjectKind::Expenditure)
    }

    pub fn revenue_projects(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.projects.len()).filter(|&p| self.kind(p) == ProjectKind::Revenue)
    }

    pub fn total_cost(&self, kind: ProjectKind) -> u64 {
        self.projects
            .iter()
            .filter(|p| p.kind == kind)
            .map(|p| p.cost)
            .sum()
    }

    /// Dense per-project amounts; checks ids and caps.
    pub fn dense(&self, allocation: &Allocation) -> Result<Vec<u64>> {
        let mut amounts = vec![0; self.projects.len()];
        for (id, w) in allocation.iter() {
            let p = self
                .index_of(id.as_str())
                .ok_or_else(|| Error::UnknownProject(id.clone()))?;
            if w > self.cost(p) {
                return Err(Error::OverCap {
                    project: id.clone(),
                    amount: w,
                    cap: self.cost(p),
                });
            }
            amounts[p] = w;
        }
        Ok(amounts)
    }

    /// Allocation over the projects of `kind`, listing zeros explicitly.
    /// The synthetic deficit project is never included.
    pub fn allocation_of(&self, amounts: &[u64], kind: ProjectKind) -> Allocation {
        (0..self.projects.len())
            .filter(|&p| self.kind(p) == kind && Some(p) != self.synthetic)
            .map(|p| (self.id(p).clone(), amounts[p]))
            .collect()
    }

    /// Allocation over every configured project (both kinds), zeros omitted.
    pub fn allocation(&self, amounts: &[u64]) -> Allocation {
        (0..self.projects.len())
            .filter(|&p| amounts[p] > 0 && Some(p) != self.synthetic)
            .map(|p| (self.id(p).clone(), amounts[p]))
            .collect()
    }

    /// Validates a knapsack ballot against the budget rule of the mode and
    /// returns dense amounts. In deficit-augmented mode the synthetic item
    /// receives the ballot's implied deficit, which balances it.
    pub fn knapsack_vote(&self, ballot: &Ballot) -> Result<Vec<u64>> {
        let BallotPayload::Knapsack { allocation } = &ballot.payload else {
            return Err(wrong_format(ballot, "knapsack"));
        };
        let mut amounts = vec![0; self.projects.len()];
        for (id, w) in allocation.iter() {
            let p = match self.index_of(id.as_str()) {
                Some(p) if Some(p) == self.synthetic => {
                    return Err(Error::ballot(
                        &ballot.voter_id,
                        BallotViolation::ReservedProject(id.clone()),
                    ))
                }
                Some(p) => p,
                None => {
                    return Err(Error::ballot(
                        &ballot.voter_id,
                        BallotViolation::UnknownProject(id.clone()),
                    ))
                }
            };
            if w > self.cost(p) {
                return Err(Error::ballot(
                    &ballot.voter_id,
                    BallotViolation::OverCap {
                        project: id.clone(),
                        amount: w,
                        cap: self.cost(p),
                    },
                ));
            }
            amounts[p] = w;
        }
        let expenditure: u64 = self.expenditure_projects().map(|p| amounts[p]).sum();
        let revenue: u64 = self.revenue_projects().map(|p| amounts[p]).sum();
        match self.mode() {
            BudgetMode::FixedBudget => {
                if expenditure != self.budget() {
                    return Err(Error::ballot(
                        &ballot.voter_id,
                        BallotViolation::BudgetNotFullyAllocated {
                            allocated: expenditure,
                            budget: self.budget(),
                        },
                    ));
                }
            }
            BudgetMode::BalancedBudget => {
                if expenditure != revenue {
                    return Err(Error::ballot(
                        &ballot.voter_id,
                        BallotViolation::Unbalanced {
                            expenditure,
                            revenue,
                        },
                    ));
                }
            }
            BudgetMode::DeficitAugmented => {
                if revenue > expenditure {
                    return Err(Error::ballot(
                        &ballot.voter_id,
                        BallotViolation::Surplus {
                            expenditure,
                            revenue,
                        },
                    ));
                }
                amounts[self.synthetic.unwrap()] = expenditure - revenue;
            }
        }
        Ok(amounts)
    }

    fn project_list(&self, voter_id: &str, ids: &[ProjectId]) -> Result<Vec<usize>> {
        let mut seen = BTreeSet::new();
        ids.iter()
            .map(|id| {
                let p = self.require_configured(id).map_err(|_| {
                    Error::ballot(voter_id, BallotViolation::UnknownProject(id.clone()))
                })?;
                if !seen.insert(p) {
                    return Err(Error::ballot(
                        voter_id,
                        BallotViolation::DuplicateProject(id.clone()),
                    ));
                }
                Ok(p)
            })
            .collect()
    }

    /// Approved project indices of a K-approval ballot with at most `limit` approvals.
    pub fn approval_vote(&self, ballot: &Ballot, limit: usize) -> Result<Vec<usize>> {
        let BallotPayload::KApproval { approvals } = &ballot.payload else {
            return Err(wrong_format(ballot, "kapproval"));
        };
        let ps = self.project_list(&ballot.voter_id, approvals)?;
        if ps.len() > limit {
            return Err(Error::ballot(
                &ballot.voter_id,
                BallotViolation::TooManyApprovals {
                    approved: ps.len(),
                    limit,
                },
            ));
        }
        Ok(ps)
    }

    /// Selected project indices of an integral ballot whose cost fits the budget.
    pub fn budget_set_vote(&self, ballot: &Ballot) -> Result<Vec<usize>> {
        let BallotPayload::KApproval { approvals } = &ballot.payload else {
            return Err(wrong_format(ballot, "kapproval"));
        };
        let ps = self.project_list(&ballot.voter_id, approvals)?;
        let cost: u64 = ps.iter().map(|&p| self.cost(p)).sum();
        if cost > self.budget() {
            return Err(Error::ballot(
                &ballot.voter_id,
                BallotViolation::OverBudget {
                    cost,
                    budget: self.budget(),
                },
            ));
        }
        Ok(ps)
    }

    /// `(winner, loser)` index pairs of a pairwise ballot.
    pub fn pairwise_vote(&self, ballot: &Ballot) -> Result<Vec<(usize, usize)>> {
        let BallotPayload::Pairwise { comparisons } = &ballot.payload else {
            return Err(wrong_format(ballot, "pairwise"));
        };
        comparisons
            .iter()
            .map(|c| {
                let ps = self.project_list(&ballot.voter_id, &c.pair).map_err(|e| match e {
                    Error::InvalidBallot {
                        violation: BallotViolation::DuplicateProject(p),
                        ..
                    } => Error::ballot(&ballot.voter_id, BallotViolation::DegeneratePair(p)),
                    e => e,
                })?;
                if c.winner == c.pair[0] {
                    Ok((ps[0], ps[1]))
                } else if c.winner == c.pair[1] {
                    Ok((ps[1], ps[0]))
                } else {
                    Err(Error::ballot(
                        &ballot.voter_id,
                        BallotViolation::WinnerNotInPair {
                            winner: c.winner.clone(),
                        },
                    ))
                }
            })
            .collect()
    }

    pub fn ranking_vote(&self, ballot: &Ballot) -> Result<Vec<usize>> {
        let BallotPayload::Ranking { ranking } = &ballot.payload else {
            return Err(wrong_format(ballot, "ranking"));
        };
        let ps = self.project_list(&ballot.voter_id, ranking)?;
        if ps.len() > self.ranking_length() {
            return Err(Error::ballot(
                &ballot.voter_id,
                BallotViolation::RankingTooLong {
                    ranked: ps.len(),
                    limit: self.ranking_length(),
                },
            ));
        }
        Ok(ps)
    }

    /// Validates a ballot of any format against this election's rules.
    pub fn validate_ballot(&self, ballot: &Ballot) -> Result<()> {
        match &ballot.payload {
            BallotPayload::Knapsack { .. } => self.knapsack_vote(ballot).map(drop),
            BallotPayload::KApproval { .. } => {
                self.approval_vote(ballot, self.approval_limit()).map(drop)
            }
            BallotPayload::Pairwise { .. } => self.pairwise_vote(ballot).map(drop),
            BallotPayload::Ranking { .. } => self.ranking_vote(ballot).map(drop),
        }
    }
}

fn wrong_format(ballot: &Ballot, expected: &'static str) -> Error {
    Error::ballot(
        &ballot.voter_id,
        BallotViolation::WrongFormat {
            expected,
            found: ballot.payload.format_name(),
        },
    )
}

/// Per-dollar view of an allocation: `{D(p, t) : 1 <= t <= w_p}`.
pub fn expand_per_dollar(
    allocation: &Allocation,
    election: &Election,
) -> Result<BTreeSet<SubprojectId>> {
    let amounts = election.dense(allocation)?;
    Ok(amounts
        .iter()
        .enumerate()
        .flat_map(|(p, &w)| (1..=w).map(move |t| SubprojectId::new(election.id(p).clone(), t)))
        .collect())
}

/// Inverse of [`expand_per_dollar`]; rejects sets that are not prefix-closed.
pub fn collapse_per_dollar(subset: &BTreeSet<SubprojectId>) -> Result<Allocation> {
    let mut dollars: BTreeMap<&ProjectId, Vec<u64>> = BTreeMap::new();
    for s in subset {
        dollars.entry(&s.project).or_default().push(s.dollar);
    }
    let mut allocation = Allocation::new();
    for (project, ts) in dollars {
        // BTreeSet order keeps each project's dollars ascending.
        for (i, &t) in ts.iter().enumerate() {
            let expected = i as u64 + 1;
            if t != expected {
                return Err(Error::Inconsistent {
                    project: project.clone(),
                    present: t,
                    missing: expected,
                });
            }
        }
        allocation.set(project.clone(), ts.len() as u64);
    }
    Ok(allocation)
}

/// Flat indices of the dollar prefixes `1..=amounts[p]`.
pub(crate) fn expand_dense(election: &Election, amounts: &[u64]) -> Vec<usize> {
    amounts
        .iter()
        .enumerate()
        .flat_map(|(p, &w)| (0..w as usize).map(move |t| election.offset(p) + t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_voter() -> Election {
        Election::new(ElectionConfig::fixed(
            vec![
                ProjectSpec::new("P1", 5),
                ProjectSpec::new("P2", 5),
                ProjectSpec::new("P3", 10),
            ],
            10,
        ))
        .unwrap()
    }

    fn alloc(pairs: &[(&str, u64)]) -> Allocation {
        pairs.iter().map(|&(p, w)| (p, w)).collect()
    }

    #[test]
    fn expand_first_four_dollars() {
        let e = three_voter();
        let got = expand_per_dollar(&alloc(&[("P1", 4)]), &e).unwrap();
        let want: BTreeSet<_> = (1..=4).map(|t| SubprojectId::new("P1", t)).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn expand_zero_is_empty() {
        let e = three_voter();
        assert!(expand_per_dollar(&Allocation::new(), &e).unwrap().is_empty());
        assert!(expand_per_dollar(&alloc(&[("P1", 0), ("P3", 0)]), &e)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn expand_skips_unfunded_project() {
        let e = three_voter();
        let got = expand_per_dollar(&alloc(&[("P1", 5), ("P2", 5), ("P3", 0)]), &e).unwrap();
        assert_eq!(got.len(), 10);
        assert!(got.iter().all(|s| s.project.as_str() != "P3"));
    }

    #[test]
    fn expand_over_cap_names_project() {
        let e = three_voter();
        let err = expand_per_dollar(&alloc(&[("P1", 6)]), &e).unwrap_err();
        assert!(matches!(err, Error::OverCap { ref project, .. } if project.as_str() == "P1"));
    }

    #[test]
    fn collapse_example_two_outcome() {
        let mut set = BTreeSet::new();
        set.extend((1..=5).map(|t| SubprojectId::new("P2", t)));
        set.extend((1..=3).map(|t| SubprojectId::new("P1", t)));
        set.extend((1..=2).map(|t| SubprojectId::new("P3", t)));
        let got = collapse_per_dollar(&set).unwrap();
        assert_eq!(got, alloc(&[("P1", 3), ("P2", 5), ("P3", 2)]));
    }

    #[test]
    fn collapse_empty_and_gap() {
        assert!(collapse_per_dollar(&BTreeSet::new()).unwrap().is_zero());
        let gap: BTreeSet<_> = [SubprojectId::new("P1", 2)].into_iter().collect();
        let err = collapse_per_dollar(&gap).unwrap_err();
        assert!(matches!(err, Error::Inconsistent { present: 2, missing: 1, .. }));
    }

    #[test]
    fn allocation_equality_ignores_zeros() {
        assert_eq!(alloc(&[("a", 2), ("b", 0)]), alloc(&[("a", 2)]));
        assert_ne!(alloc(&[("a", 2)]), alloc(&[("a", 1)]));
        assert_ne!(alloc(&[("a", 2)]), alloc(&[("a", 2), ("b", 1)]));
    }

    #[test]
    fn config_rejects_bad_inputs() {
        let dup = ElectionConfig::fixed(vec![ProjectSpec::new("a", 1), ProjectSpec::new("a", 2)], 1);
        assert!(matches!(Election::new(dup), Err(Error::Config(_))));
        let over = ElectionConfig::fixed(vec![ProjectSpec::new("a", 1)], 2);
        assert!(matches!(Election::new(over), Err(Error::Config(_))));
        let zero = ElectionConfig::fixed(vec![ProjectSpec::new("a", 0)], 0);
        assert!(matches!(Election::new(zero), Err(Error::Config(_))));
        let empty = ElectionConfig::fixed(vec![], 0);
        assert!(matches!(Election::new(empty), Err(Error::Config(_))));
        let balanced = ElectionConfig::fixed(vec![ProjectSpec::new("a", 2)], 0)
            .with_mode(BudgetMode::BalancedBudget);
        assert!(matches!(Election::new(balanced), Err(Error::Config(_))));
    }

    #[test]
    fn inconsistent_tie_break_rejected() {
        let cfg = ElectionConfig::fixed(vec![ProjectSpec::new("a", 2), ProjectSpec::new("b", 1)], 1)
            .with_tie_break(TieBreakSpec::Subprojects(vec![
                SubprojectId::new("a", 2),
                SubprojectId::new("b", 1),
                SubprojectId::new("a", 1),
            ]));
        assert!(matches!(Election::new(cfg), Err(Error::Config(_))));
        let partial = ElectionConfig::fixed(vec![ProjectSpec::new("a", 2), ProjectSpec::new("b", 1)], 1)
            .with_tie_break(TieBreakSpec::Subprojects(vec![
                SubprojectId::new("a", 1),
                SubprojectId::new("a", 2),
            ]));
        assert!(matches!(Election::new(partial), Err(Error::Config(_))));
    }

    #[test]
    fn interleaved_tie_break_is_accepted() {
        let cfg = ElectionConfig::fixed(vec![ProjectSpec::new("a", 2), ProjectSpec::new("b", 1)], 1)
            .with_tie_break(TieBreakSpec::Subprojects(vec![
                SubprojectId::new("a", 1),
                SubprojectId::new("b", 1),
                SubprojectId::new("a", 2),
            ]));
        let e = Election::new(cfg).unwrap();
        assert_eq!(e.tie_order(), &[0, 2, 1]);
        assert_eq!(e.projects_by_priority(), vec![0, 1]);
    }

    #[test]
    fn project_tie_break_expands_project_major() {
        let cfg = ElectionConfig::fixed(vec![ProjectSpec::new("a", 2), ProjectSpec::new("b", 1)], 1)
            .with_tie_break(TieBreakSpec::Projects(vec!["b".into(), "a".into()]));
        let e = Election::new(cfg).unwrap();
        let order = e.tie_break_order();
        assert_eq!(
            order.as_slice(),
            &[
                SubprojectId::new("b", 1),
                SubprojectId::new("a", 1),
                SubprojectId::new("a", 2)
            ]
        );
        assert!(order.is_consistent());
    }

    #[test]
    fn knapsack_ballot_must_fill_budget() {
        let e = three_voter();
        let short = Ballot::knapsack("v", alloc(&[("P1", 4), ("P2", 5)]));
        let err = e.knapsack_vote(&short).unwrap_err();
        let Error::InvalidBallot { voter_id, violation } = err else {
            panic!("unexpected error")
        };
        assert_eq!(voter_id, "v");
        assert_eq!(violation.code(), "budget-not-fully-allocated");
        let full = Ballot::knapsack("v", alloc(&[("P1", 4), ("P2", 5), ("P3", 1)]));
        assert_eq!(e.knapsack_vote(&full).unwrap(), vec![4, 5, 1]);
    }

    #[test]
    fn deficit_ballot_fills_synthetic_item() {
        let cfg = ElectionConfig::fixed(
            vec![
                ProjectSpec::new("x", 2),
                ProjectSpec::new("y", 2),
                ProjectSpec::revenue("tax", 3),
            ],
            0,
        )
        .with_mode(BudgetMode::DeficitAugmented);
        let e = Election::new(cfg).unwrap();
        assert_eq!(e.project_count(), 4);
        assert_eq!(e.cost(3), 4);
        let b = Ballot::knapsack("v", alloc(&[("x", 2), ("y", 1), ("tax", 1)]));
        assert_eq!(e.knapsack_vote(&b).unwrap(), vec![2, 1, 1, 2]);
        let surplus = Ballot::knapsack("v", alloc(&[("x", 1), ("tax", 2)]));
        assert!(e.knapsack_vote(&surplus).is_err());
        let reserved = Ballot::knapsack("v", alloc(&[("deficit", 1)]));
        assert!(e.knapsack_vote(&reserved).is_err());
    }

    #[test]
    fn approval_and_pairwise_validation() {
        let e = three_voter();
        assert!(e.approval_vote(&Ballot::approval("v", ["P1", "P2"]), 2).is_ok());
        let err = e
            .approval_vote(&Ballot::approval("v", ["P1", "P2", "P3"]), 2)
            .unwrap_err();
        assert!(matches!(
            err,
            Error::InvalidBallot { violation: BallotViolation::TooManyApprovals { .. }, .. }
        ));
        let bad = Ballot::pairwise(
            "v",
            vec![PairChoice {
                pair: ["P1".into(), "P2".into()],
                winner: "P3".into(),
            }],
        );
        assert!(e.pairwise_vote(&bad).is_err());
        let same = Ballot::pairwise(
            "v",
            vec![PairChoice {
                pair: ["P1".into(), "P1".into()],
                winner: "P1".into(),
            }],
        );
        assert!(matches!(
            e.pairwise_vote(&same),
            Err(Error::InvalidBallot { violation: BallotViolation::DegeneratePair(_), .. })
        ));
    }

    #[test]
    fn ballot_json_shape() {
        let b = Ballot::knapsack("A", alloc(&[("P1", 4), ("P2", 5), ("P3", 1)]));
        let json = serde_json::to_string(&b).unwrap();
        assert_eq!(
            json,
            r#"{"voter_id":"A","format":"knapsack","allocation":{"P1":4,"P2":5,"P3":1}}"#
        );
        let back: Ballot = serde_json::from_str(&json).unwrap();
        assert_eq!(back, b);
        let k: Ballot =
            serde_json::from_str(r#"{"voter_id":"B","format":"kapproval","approvals":["P1"]}"#)
                .unwrap();
        assert_eq!(k, Ballot::approval("B", ["P1"]));
    }

    #[test]
    fn config_json_tie_break_forms() {
        let cfg: ElectionConfig = serde_json::from_str(
            r#"{"projects":[{"id":"a","cost":2},{"id":"b","cost":1}],"budget":2,"tie_break":["b","a"]}"#,
        )
        .unwrap();
        assert_eq!(cfg.tie_break, Some(TieBreakSpec::Projects(vec!["b".into(), "a".into()])));
        let cfg: ElectionConfig = serde_json::from_str(
            r#"{"projects":[{"id":"a","cost":1}],"budget":1,"tie_break":[{"project":"a","dollar":1}]}"#,
        )
        .unwrap();
        assert!(matches!(cfg.tie_break, Some(TieBreakSpec::Subprojects(_))));
        assert!(Election::new(cfg).is_ok());
    }
}
