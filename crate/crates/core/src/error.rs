use std::fmt;

use crate::model::ProjectId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid election config: {0}")]
    Config(String),

    #[error("unknown project `{0}`")]
    UnknownProject(ProjectId),

    #[error("project `{project}`: amount {amount} exceeds cost cap {cap}")]
    OverCap {
        project: ProjectId,
        amount: u64,
        cap: u64,
    },

    #[error("inconsistent subproject set: project `{project}` has dollar {present} but not dollar {missing}")]
    Inconsistent {
        project: ProjectId,
        present: u64,
        missing: u64,
    },

    #[error("ballot from voter `{voter_id}`: {violation}")]
    InvalidBallot {
        voter_id: String,
        violation: BallotViolation,
    },

    #[error("{operation} is not available in {mode} mode")]
    WrongMode {
        operation: &'static str,
        mode: String,
    },

    #[error("search space of {count} candidates exceeds the enumeration limit of {limit}")]
    EnumerationLimit { count: u128, limit: u128 },

    #[error("invalid utility model: {0}")]
    Model(String),

    #[error("score is undefined: {0}")]
    UndefinedScore(&'static str),

    #[error("no data: {0}")]
    EmptyData(&'static str),

    #[error("cannot draw {requested} pairs: only {available} distinct pairs exist")]
    TooManyPairs { requested: usize, available: usize },
}

impl Error {
    pub(crate) fn ballot(voter_id: &str, violation: BallotViolation) -> Self {
        Error::InvalidBallot {
            voter_id: voter_id.to_owned(),
            violation,
        }
    }

    /// True for errors that reject the request's size rather than its content.
    pub fn is_refusal(&self) -> bool {
        matches!(self, Error::EnumerationLimit { .. })
    }
}

/// The ballot invariant a submission broke.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BallotViolation {
    /// Knapsack ballot total differs from the budget.
    BudgetNotFullyAllocated { allocated: u64, budget: u64 },
    /// Balanced-mode ballot with expenditure total != revenue total.
    Unbalanced { expenditure: u64, revenue: u64 },
    /// Deficit-mode ballot raising more revenue than it spends.
    Surplus { expenditure: u64, revenue: u64 },
    OverCap { project: ProjectId, amount: u64, cap: u64 },
    UnknownProject(ProjectId),
    ReservedProject(ProjectId),
    TooManyApprovals { approved: usize, limit: usize },
    OverBudget { cost: u64, budget: u64 },
    RankingTooLong { ranked: usize, limit: usize },
    DuplicateProject(ProjectId),
    WinnerNotInPair { winner: ProjectId },
    DegeneratePair(ProjectId),
    WrongFormat { expected: &'static str, found: &'static str },
}

impl BallotViolation {
    /// Stable machine-readable name of the invariant.
    pub fn code(&self) -> &'static str {
        match self {
            BallotViolation::BudgetNotFullyAllocated { .. } => "budget-not-fully-allocated",
            BallotViolation::Unbalanced { .. } => "budget-not-balanced",
            BallotViolation::Surplus { .. } => "negative-deficit",
            BallotViolation::OverCap { .. } => "amount-exceeds-cap",
            BallotViolation::UnknownProject(_) => "unknown-project",
            BallotViolation::ReservedProject(_) => "reserved-project",
            BallotViolation::TooManyApprovals { .. } => "too-many-approvals",
            BallotViolation::OverBudget { .. } => "selection-over-budget",
            BallotViolation::RankingTooLong { .. } => "ranking-too-long",
            BallotViolation::DuplicateProject(_) => "duplicate-project",
            BallotViolation::WinnerNotInPair { .. } => "winner-not-in-pair",
            BallotViolation::DegeneratePair(_) => "degenerate-pair",
            BallotViolation::WrongFormat { .. } => "wrong-ballot-format",
        }
    }
}

impl fmt::Display for BallotViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BallotViolation::BudgetNotFullyAllocated { allocated, budget } => {
                write!(f, "budget not fully allocated ({allocated} of {budget})")
            }
            BallotViolation::Unbalanced {
                expenditure,
                revenue,
            } => write!(
                f,
                "budget not balanced (expenditure {expenditure}, revenue {revenue})"
            ),
            BallotViolation::Surplus {
                expenditure,
                revenue,
            } => write!(
                f,
                "revenue {revenue} exceeds expenditure {expenditure}; only deficits are representable"
            ),
            BallotViolation::OverCap {
                project,
                amount,
                cap,
            } => write!(f, "project `{project}` amount {amount} exceeds cost cap {cap}"),
            BallotViolation::UnknownProject(p) => write!(f, "unknown project `{p}`"),
            BallotViolation::ReservedProject(p) => {
                write!(f, "project `{p}` is synthetic and cannot be voted on directly")
            }
            BallotViolation::TooManyApprovals { approved, limit } => {
                write!(f, "{approved} approvals exceed the limit of {limit}")
            }
            BallotViolation::OverBudget { cost, budget } => {
                write!(f, "selected projects cost {cost}, over the budget of {budget}")
            }
            BallotViolation::RankingTooLong { ranked, limit } => {
                write!(f, "{ranked} ranked projects exceed the limit of {limit}")
            }
            BallotViolation::DuplicateProject(p) => write!(f, "project `{p}` listed twice"),
            BallotViolation::WinnerNotInPair { winner } => {
                write!(f, "winner `{winner}` is not a member of its pair")
            }
            BallotViolation::DegeneratePair(p) => write!(f, "pair compares `{p}` with itself"),
            BallotViolation::WrongFormat { expected, found } => {
                write!(f, "expected a {expected} ballot, found {found}")
            }
        }
    }
}
