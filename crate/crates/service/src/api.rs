use std::collections::BTreeMap;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use pbvote_core::analytics::{average_winning_cost, cost_curve, CostCurve};
use pbvote_core::comparisons::{
    agreement_report, assign_pairs, funded_projects, AgreementReport, MajorityOrder,
};
use pbvote_core::tally::{approval_tally_counts, ballots_for, score_ballots, tally};
use pbvote_core::{Ballot, ElectionConfig, Method, Outcome, ProjectId, ScoreTable};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::ServiceError;
use crate::store::{CreateOptions, ElectionState, Meta, Receipt, Status, Store};

type ApiResult<T> = Result<T, ServiceError>;

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/elections", post(create_election))
        .route("/elections/{id}", get(get_election))
        .route("/elections/{id}/status", post(set_status))
        .route("/elections/{id}/ballots", post(submit_ballot))
        .route("/elections/{id}/pairs", get(get_pairs))
        .route("/elections/{id}/results", get(get_results))
        .with_state(store)
}

async fn healthz() -> Json<Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    config: ElectionConfig,
    #[serde(default)]
    pair_seed: Option<u64>,
    #[serde(default)]
    live_results: bool,
}

#[derive(Serialize)]
struct ElectionView {
    #[serde(flatten)]
    meta: Meta,
    config: ElectionConfig,
    /// Ballots in effect after resubmissions.
    ballots: usize,
    /// All accepted submissions, superseded ones included.
    submissions: usize,
    comparisons: u64,
}

fn view(state: &ElectionState) -> ElectionView {
    ElectionView {
        meta: state.meta.clone(),
        config: state.config.clone(),
        ballots: state.ballots().len(),
        submissions: state.log.len(),
        comparisons: state.comparisons.total(),
    }
}

fn invalid(e: serde_json::Error) -> ServiceError {
    pbvote_core::Error::Config(e.to_string()).into()
}

/// Accepts either a bare config or `{"config": ..., "pair_seed": ..., "live_results": ...}`.
async fn create_election(
    State(store): State<Arc<Store>>,
    Json(body): Json<Value>,
) -> ApiResult<(StatusCode, Json<ElectionView>)> {
    let req = if body.get("config").is_some() {
        serde_json::from_value::<CreateRequest>(body).map_err(invalid)?
    } else {
        CreateRequest {
            config: serde_json::from_value(body).map_err(invalid)?,
            pair_seed: None,
            live_results: false,
        }
    };
    let opts = CreateOptions {
        pair_seed: req.pair_seed,
        live_results: req.live_results,
    };
    let (id, handle) = store.create(req.config, opts).await?;
    tracing::info!(election = %id, "election created");
    let state = handle.read().await;
    Ok((StatusCode::CREATED, Json(view(&state))))
}

async fn get_election(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
) -> ApiResult<Json<ElectionView>> {
    let handle = store.get(&id).await?;
    let state = handle.read().await;
    Ok(Json(view(&state)))
}

#[derive(Deserialize)]
struct StatusRequest {
    status: Status,
}

async fn set_status(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    Json(body): Json<Value>,
) -> ApiResult<Json<ElectionView>> {
    let req: StatusRequest =
        serde_json::from_value(body).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    let handle = store.get(&id).await?;
    let mut state = handle.write().await;
    state.set_status(req.status)?;
    Ok(Json(view(&state)))
}

async fn submit_ballot(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    Json(body): Json<Value>,
) -> ApiResult<(StatusCode, Json<Receipt>)> {
    let handle = store.get(&id).await?;
    let ballot: Ballot = serde_json::from_value(body)
        .map_err(|e| ServiceError::MalformedBallot(e.to_string()))?;
    let mut state = handle.write().await;
    let receipt = state.submit(ballot)?;
    Ok((StatusCode::CREATED, Json(receipt)))
}

#[derive(Deserialize)]
struct PairsQuery {
    voter: String,
    #[serde(default = "one")]
    count: usize,
}

fn one() -> usize {
    1
}

#[derive(Serialize)]
struct PairsView {
    voter: String,
    pairs: Vec<[ProjectId; 2]>,
}

async fn get_pairs(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    Query(q): Query<PairsQuery>,
) -> ApiResult<Json<PairsView>> {
    let handle = store.get(&id).await?;
    let state = handle.read().await;
    let pairs = assign_pairs(state.comparisons.projects(), &q.voter, q.count, state.meta.pair_seed)?;
    Ok(Json(PairsView {
        voter: q.voter,
        pairs: pairs.into_iter().map(|(a, b)| [a, b]).collect(),
    }))
}

#[derive(Deserialize)]
struct ResultsQuery {
    method: Option<String>,
    /// Overrides the configured approval limit for K-approval.
    k: Option<usize>,
}

#[derive(Serialize)]
struct Diagnostics {
    /// Per-dollar scores, for methods tallying knapsack-format ballots.
    #[serde(skip_serializing_if = "Option::is_none")]
    scores: Option<ScoreTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    approval_counts: Option<BTreeMap<ProjectId, u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    agreement: Option<AgreementReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    majority_order: Option<MajorityOrder>,
    average_winning_cost: Option<f64>,
    cost_curve: CostCurve,
}

#[derive(Serialize)]
struct ResultsView {
    election_id: String,
    status: Status,
    /// Ballots of the method's format that were tallied.
    ballots: usize,
    outcome: Outcome,
    diagnostics: Diagnostics,
}

async fn get_results(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    Query(q): Query<ResultsQuery>,
) -> ApiResult<Json<ResultsView>> {
    let method: Method = q
        .method
        .as_deref()
        .unwrap_or("knapsack")
        .parse()
        .map_err(ServiceError::BadRequest)?;
    let handle = store.get(&id).await?;
    let state = handle.read().await;
    if state.meta.status != Status::Closed && !state.meta.live_results {
        return Err(ServiceError::Conflict(format!(
            "election is {:?}; results are available after it closes",
            state.meta.status
        )));
    }
    let ballots = state.ballots();
    let election = &state.election;
    let outcome = tally(method, &ballots, election, q.k)?;
    let own = ballots_for(method, &ballots);

    let scores = match method.ballot_format() {
        "knapsack" => Some(score_ballots(&own, election)?),
        _ => None,
    };
    let approval_counts = ballots
        .iter()
        .any(|b| b.payload.format_name() == "kapproval")
        .then(|| approval_tally_counts(&ballots, election))
        .transpose()?
        .map(|v| v.into_iter().collect());
    let matrix = &state.comparisons;
    let (agreement, majority_order) = if matrix.total() > 0 {
        let funded = funded_projects(&outcome.allocation);
        let report = match agreement_report(
            matrix,
            &[(method.to_string(), funded)],
            &matrix.costs_in(election)?,
        ) {
            Ok(r) => Some(r),
            Err(pbvote_core::Error::EmptyData(_)) => None,
            Err(e) => return Err(e.into()),
        };
        (report, Some(matrix.majority_order()))
    } else {
        (None, None)
    };
    Ok(Json(ResultsView {
        election_id: state.meta.id.clone(),
        status: state.meta.status,
        ballots: own.len(),
        diagnostics: Diagnostics {
            scores,
            approval_counts,
            agreement,
            majority_order,
            average_winning_cost: average_winning_cost(&outcome.allocation, election),
            cost_curve: cost_curve(&ballots, election)?,
        },
        outcome,
    }))
}
