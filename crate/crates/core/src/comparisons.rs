//! Pairwise value-for-money comparisons, majority orders, Set-Borda scoring
//! and conversion of ranking ballots into knapsack votes.

use num_rational::Ratio;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Allocation, Ballot, Election, ProjectId, ProjectKind};

/// `counts[j][k]` is the number of voters who picked `j` over `k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonMatrix {
    projects: Vec<ProjectId>,
    counts: Vec<Vec<u64>>,
}

impl ComparisonMatrix {
    pub fn new(projects: Vec<ProjectId>) -> Self {
        let n = projects.len();
        ComparisonMatrix {
            projects,
            counts: vec![vec![0; n]; n],
        }
    }

    /// Empty matrix over the expenditure projects, listed in tie-break priority.
    pub fn for_election(election: &Election) -> Self {
        let projects = election
            .projects_by_priority()
            .into_iter()
            .filter(|&p| election.kind(p) == ProjectKind::Expenditure)
            .map(|p| election.id(p).clone())
            .collect();
        Self::new(projects)
    }

    /// Matrix built from every pairwise ballot in `ballots`; other formats are skipped.
    pub fn from_ballots(election: &Election, ballots: &[Ballot]) -> Result<Self> {
        let mut m = Self::for_election(election);
        for b in ballots.iter().filter(|b| b.payload.format_name() == "pairwise") {
            for (w, l) in election.pairwise_vote(b)? {
                m.record_comparison([election.id(w), election.id(l)], election.id(w))?;
            }
        }
        Ok(m)
    }

    pub fn projects(&self) -> &[ProjectId] {
        &self.projects
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.projects.iter().position(|p| p.as_str() == id)
    }

    fn require(&self, id: &ProjectId) -> Result<usize> {
        self.index_of(id.as_str())
            .ok_or_else(|| Error::UnknownProject(id.clone()))
    }

    pub fn record_comparison(&mut self, pair: [&ProjectId; 2], winner: &ProjectId) -> Result<()> {
        let a = self.require(pair[0])?;
        let b = self.require(pair[1])?;
        if a == b {
            return Err(Error::Config(format!("comparison of `{}` with itself", pair[0])));
        }
        let w = self.require(winner)?;
        let l = if w == a {
            b
        } else if w == b {
            a
        } else {
            return Err(Error::Config(format!("winner `{winner}` is not in the pair")));
        };
        self.counts[w][l] += 1;
        Ok(())
    }

    pub fn count(&self, j: usize, k: usize) -> u64 {
        self.counts[j][k]
    }

    pub fn count_by_id(&self, j: &str, k: &str) -> Option<u64> {
        Some(self.counts[self.index_of(j)?][self.index_of(k)?])
    }

    /// Total number of recorded comparisons.
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn beats(&self, j: usize, k: usize) -> bool {
        self.counts[j][k] > self.counts[k][j]
    }

    /// Order obtained by repeatedly removing a Condorcet winner. When no
    /// Condorcet winner exists among the remaining projects, the one with the
    /// best Copeland score is removed instead and the result is flagged as
    /// not transitive. Remaining ties follow the matrix's project order.
    pub fn majority_order(&self) -> MajorityOrder {
        let n = self.projects.len();
        if self.total() == 0 {
            return MajorityOrder {
                order: self.projects.clone(),
                is_transitive: true,
            };
        }
        let mut remaining: Vec<usize> = (0..n).collect();
        let mut order = Vec::with_capacity(n);
        let mut is_transitive = true;
        while !remaining.is_empty() {
            let condorcet = remaining
                .iter()
                .copied()
                .find(|&j| remaining.iter().all(|&k| k == j || self.beats(j, k)));
            let pick = condorcet.unwrap_or_else(|| {
                is_transitive = false;
                let copeland = |j: usize| -> i64 {
                    remaining
                        .iter()
                        .map(|&k| self.beats(j, k) as i64 - self.beats(k, j) as i64)
                        .sum()
                };
                // max_by_key keeps the last maximum; iterate in reverse to keep the first.
                remaining
                    .iter()
                    .rev()
                    .copied()
                    .max_by_key(|&j| copeland(j))
                    .expect("non-empty")
            });
            remaining.retain(|&j| j != pick);
            order.push(self.projects[pick].clone());
        }
        MajorityOrder { order, is_transitive }
    }

    /// Cost-weighted agreement of `funded` with the majority,
    /// `1/(C(M-C)) * sum_{j in S, k not in S} c_j c_k (n(j,k) - n(k,j))`
    /// where `C` is the cost of `S` and `M` the cost of all projects.
    /// `costs` is aligned with [`projects`](Self::projects).
    pub fn set_borda_score(&self, funded: &[ProjectId], costs: &[u64]) -> Result<Ratio<i128>> {
        if costs.len() != self.projects.len() {
            return Err(Error::Config(format!(
                "{} costs given for {} projects",
                costs.len(),
                self.projects.len()
            )));
        }
        let in_s = self.membership(funded)?;
        let c: i128 = (0..costs.len()).filter(|&p| in_s[p]).map(|p| costs[p] as i128).sum();
        let m: i128 = costs.iter().map(|&x| x as i128).sum();
        if c == 0 || c == m {
            return Err(Error::UndefinedScore(
                "set-Borda score needs a nonempty proper subset of projects",
            ));
        }
        let mut total = 0i128;
        for j in (0..costs.len()).filter(|&j| in_s[j]) {
            for k in (0..costs.len()).filter(|&k| !in_s[k]) {
                let diff = self.counts[j][k] as i128 - self.counts[k][j] as i128;
                total += costs[j] as i128 * costs[k] as i128 * diff;
            }
        }
        Ok(Ratio::new(total, c * (m - c)))
    }

    fn membership(&self, funded: &[ProjectId]) -> Result<Vec<bool>> {
        let mut in_s = vec![false; self.projects.len()];
        for id in funded {
            in_s[self.require(id)?] = true;
        }
        Ok(in_s)
    }

    /// Costs of the matrix projects, looked up in `election`.
    pub fn costs_in(&self, election: &Election) -> Result<Vec<u64>> {
        self.projects
            .iter()
            .map(|id| {
                election
                    .index_of(id.as_str())
                    .map(|p| election.cost(p))
                    .ok_or_else(|| Error::UnknownProject(id.clone()))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajorityOrder {
    pub order: Vec<ProjectId>,
    pub is_transitive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodAgreement {
    pub method: String,
    pub funded: Vec<ProjectId>,
    /// Exact Set-Borda score as `"n/d"`, absent when undefined for this funded set.
    pub set_borda: Option<String>,
    /// Mean over comparisons of +1 (majority side funded over unfunded),
    /// -1 (the reverse) or 0 (both or neither funded).
    pub agreement: f64,
    pub standard_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub comparisons: u64,
    pub methods: Vec<MethodAgreement>,
}

/// Agreement of each method's funded set with the recorded comparisons.
pub fn agreement_report(
    matrix: &ComparisonMatrix,
    outcomes: &[(String, Vec<ProjectId>)],
    costs: &[u64],
) -> Result<AgreementReport> {
    let n = matrix.total();
    if n == 0 {
        return Err(Error::EmptyData("no pairwise comparisons recorded"));
    }
    let methods = outcomes
        .iter()
        .map(|(method, funded)| {
            let in_s = matrix.membership(funded)?;
            let (mut agree, mut disagree) = (0u64, 0u64);
            for j in (0..in_s.len()).filter(|&j| in_s[j]) {
                for k in (0..in_s.len()).filter(|&k| !in_s[k]) {
                    agree += matrix.count(j, k);
                    disagree += matrix.count(k, j);
                }
            }
            let nf = n as f64;
            let mean = (agree as f64 - disagree as f64) / nf;
            let sum_sq = (agree + disagree) as f64;
            let standard_error = if n > 1 {
                let var = (sum_sq - nf * mean * mean) / (nf - 1.0);
                (var.max(0.0) / nf).sqrt()
            } else {
                0.0
            };
            let set_borda = match matrix.set_borda_score(funded, costs) {
                Ok(r) => Some(format!("{}/{}", r.numer(), r.denom())),
                Err(Error::UndefinedScore(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(MethodAgreement {
                method: method.clone(),
                funded: funded.clone(),
                set_borda,
                agreement: mean,
                standard_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AgreementReport {
        comparisons: n,
        methods,
    })
}

/// Funded projects of an allocation: those receiving any money.
pub fn funded_projects(allocation: &Allocation) -> Vec<ProjectId> {
    allocation.support().cloned().collect()
}

/// `count` distinct unordered pairs drawn uniformly without replacement,
/// reproducible from `(seed, voter_id)`. The two sides of each pair are
/// also shuffled.
pub fn assign_pairs(
    project_ids: &[ProjectId],
    voter_id: &str,
    count: usize,
    seed: u64,
) -> Result<Vec<(ProjectId, ProjectId)>> {
    let n = project_ids.len();
    let available = n * n.saturating_sub(1) / 2;
    if count > available {
        return Err(Error::TooManyPairs {
            requested: count,
            available,
        });
    }
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(voter_id.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(key);

    let all: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let picks = sample(&mut rng, available, count);
    Ok(picks
        .into_iter()
        .map(|i| {
            let (a, b) = all[i];
            let (a, b) = if rng.gen_bool(0.5) { (b, a) } else { (a, b) };
            (project_ids[a].clone(), project_ids[b].clone())
        })
        .collect())
}

/// Dense knapsack amounts for a ranking: each ranked project is funded in
/// full while it fits, the first one that does not fit takes what is left,
/// and unranked projects get nothing. The flag is set when the ranking runs
/// out before the budget is spent.
pub(crate) fn ranking_amounts(election: &Election, ranking: &[usize]) -> (Vec<u64>, bool) {
    let mut amounts = vec![0u64; election.project_count()];
    let mut remaining = election.budget();
    for &p in ranking {
        if remaining == 0 {
            break;
        }
        let w = election.cost(p).min(remaining);
        amounts[p] = w;
        remaining -= w;
    }
    (amounts, remaining > 0)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingConversion {
    pub allocation: Allocation,
    pub underfull: bool,
}

pub fn ranking_to_knapsack(ballot: &Ballot, election: &Election) -> Result<RankingConversion> {
    let ranking = election.ranking_vote(ballot)?;
    let (amounts, underfull) = ranking_amounts(election, &ranking);
    Ok(RankingConversion {
        allocation: election.allocation_of(&amounts, ProjectKind::Expenditure),
        underfull,
    })
}
