//! Budget aggregation: knapsack voting, K-approval and integral rules,
//! balanced and deficit budgets, pairwise comparisons, and brute-force
//! incentive checks.

pub mod analytics;
pub mod comparisons;
pub mod error;
pub mod mle;
pub mod model;
pub mod strategy;
pub mod synth;
pub mod tally;
pub mod utility;

pub use error::{BallotViolation, Error, Result};
pub use model::{
    Allocation, Ballot, BallotPayload, BudgetMode, Election, ElectionConfig, PairChoice, ProjectId,
    ProjectKind, ProjectSpec, SubprojectId, TieBreakOrder, TieBreakSpec,
};
pub use tally::{Method, Outcome, ScoreTable};
