use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use senscomp_core::composer::{compose, RecommendationReport};
use senscomp_core::context::{discover, AvailableKind};
use senscomp_core::cost::{rank, Ranking, WeightVector};
use senscomp_core::deploy::{generate_plan, DeploymentPlan};
use senscomp_core::kb::{resolve_kind, to_document, validate_kb, EntityDoc, KbDocument, KindRef, Question, Task, Violation};
use senscomp_core::qa::ConstraintSet;
use senscomp_core::Solution;

use crate::{ApiError, AppState, ServerSession};

type Shared = State<Arc<AppState>>;
type Body<T> = Result<Json<T>, JsonRejection>;

pub fn api() -> Router<Arc<AppState>> {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/questions", get(questions))
        .route("/sessions/{id}/questions/{qid}/answers", get(answers))
        .route("/sessions/{id}/answers", post(answer))
        .route("/sessions/{id}/answers/{qid}", axum::routing::delete(undo_answer))
        .route("/sessions/{id}/tasks", get(tasks))
        .route("/sessions/{id}/task", post(select_task))
        .route("/sessions/{id}/context", get(context))
        .route("/sessions/{id}/weights", post(weights))
        .route("/sessions/{id}/plan", post(plan))
        .route("/kb", get(kb_document))
        .route("/kb/entities", post(add_entity))
        .route("/kb/validate", get(kb_validate))
}

fn session(state: &AppState, id: &str) -> Result<ServerSession, ApiError> {
    state.sessions.get(id).ok_or_else(|| ApiError::unknown_session(id))
}

fn store(state: &AppState, id: &str, s: ServerSession) -> Result<(), ApiError> {
    if state.sessions.put(id, s) {
        Ok(())
    } else {
        Err(ApiError::unknown_session(id))
    }
}

#[derive(Serialize)]
struct Created {
    session_id: String,
    kb_version: String,
    expires_in_seconds: u64,
}

async fn create_session(State(state): Shared) -> impl IntoResponse {
    let kb = state.kb();
    let id = state.sessions.create(kb.clone());
    let body = Created {
        session_id: id,
        kb_version: kb.version_hash().to_owned(),
        expires_in_seconds: state.sessions.ttl().as_secs(),
    };
    (StatusCode::CREATED, Json(body))
}

#[derive(Serialize)]
struct Questions<'a> {
    questions: Vec<&'a Question>,
}

async fn questions(State(state): Shared, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let s = session(&state, &id)?;
    let body = serde_json::to_value(Questions {
        questions: s.qa.available_questions(),
    })
    .expect("serializes");
    Ok(Json(body))
}

#[derive(Serialize)]
struct Answers {
    question_id: String,
    answers: Vec<String>,
}

async fn answers(State(state): Shared, Path((id, qid)): Path<(String, String)>) -> Result<Json<Answers>, ApiError> {
    let s = session(&state, &id)?;
    let answers = s.qa.answers_for(&qid)?;
    Ok(Json(Answers { question_id: qid, answers }))
}

#[derive(Serialize)]
struct Summary<'a> {
    constraints: &'a ConstraintSet,
    selected_task: Option<&'a str>,
    tasks: Vec<&'a Task>,
    questions: Vec<&'a Question>,
}

fn summary(s: &ServerSession) -> serde_json::Value {
    serde_json::to_value(Summary {
        constraints: s.qa.constraints(),
        selected_task: s.qa.selected_task(),
        tasks: s.qa.matching_tasks(),
        questions: s.qa.available_questions(),
    })
    .expect("serializes")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswerBody {
    question_id: String,
    answer: String,
}

async fn answer(State(state): Shared, Path(id): Path<String>, body: Body<AnswerBody>) -> Result<impl IntoResponse, ApiError> {
    let Json(body) = body?;
    let mut s = session(&state, &id)?;
    let before = s.qa.selected_task().map(str::to_owned);
    s.qa = s.qa.apply_answer(&body.question_id, &body.answer)?;
    if s.qa.selected_task().map(str::to_owned) != before {
        s.clear_results();
    }
    let out = summary(&s);
    store(&state, &id, s)?;
    Ok(Json(out))
}

async fn undo_answer(State(state): Shared, Path((id, qid)): Path<(String, String)>) -> Result<impl IntoResponse, ApiError> {
    let mut s = session(&state, &id)?;
    s.qa = s.qa.remove_answer(&qid);
    let out = summary(&s);
    store(&state, &id, s)?;
    Ok(Json(out))
}

#[derive(Serialize)]
struct Tasks<'a> {
    tasks: Vec<&'a Task>,
}

async fn tasks(State(state): Shared, Path(id): Path<String>) -> Result<impl IntoResponse, ApiError> {
    let s = session(&state, &id)?;
    let body = serde_json::to_value(Tasks {
        tasks: s.qa.matching_tasks(),
    })
    .expect("serializes");
    Ok(Json(body))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskBody {
    task_id: String,
}

#[derive(Serialize)]
struct SolutionView<'a> {
    hash: String,
    expression: String,
    resources: usize,
    #[serde(flatten)]
    solution: &'a Solution,
}

#[derive(Serialize)]
struct Composed<'a> {
    task_id: &'a str,
    solutions: Vec<SolutionView<'a>>,
    truncated: bool,
    depth_limited: bool,
    report: &'a RecommendationReport,
}

async fn select_task(State(state): Shared, Path(id): Path<String>, body: Body<TaskBody>) -> Result<impl IntoResponse, ApiError> {
    let Json(body) = body?;
    let mut s = session(&state, &id)?;
    s.qa = s.qa.select_task(&body.task_id)?;
    let outcome = Arc::new(compose(s.kb(), &body.task_id, &state.config.limits)?);
    s.clear_results();
    s.outcome = Some(outcome.clone());
    store(&state, &id, s)?;
    let view = Composed {
        task_id: &body.task_id,
        solutions: outcome
            .solutions
            .iter()
            .map(|sol| SolutionView {
                hash: sol.canonical_hash(),
                expression: sol.expression(),
                resources: sol.resource_count(),
                solution: sol,
            })
            .collect(),
        truncated: outcome.truncated,
        depth_limited: outcome.depth_limited,
        report: &outcome.report,
    };
    Ok(Json(serde_json::to_value(view).expect("serializes")))
}

#[derive(Serialize)]
struct Context {
    available: Vec<AvailableKind>,
}

async fn context(State(state): Shared, Path(id): Path<String>) -> Result<Json<Context>, ApiError> {
    let s = session(&state, &id)?;
    let kb = s.kb();
    // Kinds the selected task already delivers are not extras.
    let produced: HashSet<_> = s
        .qa
        .selected_task()
        .and_then(|t| kb.task(t))
        .map(|t| t.required_stream.iter().collect())
        .unwrap_or_default();
    let available = discover(kb)
        .entries()
        .into_iter()
        .filter(|e| !produced.contains(&e.kind))
        .collect();
    Ok(Json(Context { available }))
}

async fn weights(
    State(state): Shared,
    Path(id): Path<String>,
    body: Body<BTreeMap<String, f64>>,
) -> Result<Json<Ranking>, ApiError> {
    let Json(body) = body.map_err(|e| {
        ApiError::new(StatusCode::BAD_REQUEST, "invalid_weights", e.body_text())
    })?;
    let mut s = session(&state, &id)?;
    let outcome = s.outcome.clone().ok_or_else(ApiError::no_task_selected)?;
    if outcome.solutions.is_empty() {
        return Err(ApiError::new(StatusCode::CONFLICT, "no_solutions", "the selected task has no solutions to rank"));
    }
    let w = WeightVector::new(body);
    let ranking = rank(s.kb(), &outcome.solutions, &w)?;
    s.weights = Some(w);
    s.ranking = Some(ranking.clone());
    store(&state, &id, s)?;
    Ok(Json(ranking))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanBody {
    solution_hash: String,
    #[serde(default)]
    extras: Vec<KindRef>,
}

async fn plan(State(state): Shared, Path(id): Path<String>, body: Body<PlanBody>) -> Result<Json<DeploymentPlan>, ApiError> {
    let Json(body) = body?;
    let mut s = session(&state, &id)?;
    let outcome = s.outcome.clone().ok_or_else(ApiError::no_task_selected)?;
    let solution = outcome
        .solutions
        .iter()
        .find(|x| x.canonical_hash() == body.solution_hash)
        .ok_or_else(|| {
            ApiError::new(
                StatusCode::NOT_FOUND,
                "unknown_solution",
                format!("no solution `{}` for the selected task", body.solution_hash),
            )
        })?;
    let mut extras = Vec::new();
    for r in &body.extras {
        let kind = resolve_kind(s.kb(), r).ok_or_else(|| {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "underivable_extra", format!("unknown kind {r:?}"))
        })?;
        extras.push(kind);
    }
    let plan = generate_plan(s.kb(), solution, &extras)?;
    s.chosen_solution = Some(body.solution_hash);
    store(&state, &id, s)?;
    Ok(Json(plan))
}

async fn kb_document(State(state): Shared) -> impl IntoResponse {
    let kb = state.kb();
    let doc: KbDocument = to_document(&kb);
    ([(header::ETAG, format!("\"{}\"", kb.version_hash()))], Json(doc))
}

#[derive(Serialize)]
struct Ingested {
    kb_version: String,
    #[serde(rename = "type")]
    entity_type: &'static str,
    id: String,
}

async fn add_entity(State(state): Shared, body: Body<EntityDoc>) -> Result<impl IntoResponse, ApiError> {
    let Json(doc) = body?;
    let (entity_type, id) = match &doc {
        EntityDoc::Sensor(x) => ("sensor", x.id.clone()),
        EntityDoc::Dpc(x) => ("dpc", x.id.clone()),
        EntityDoc::Task(x) => ("task", x.id.clone()),
        EntityDoc::Question(x) => ("question", x.id.clone()),
    };
    let kb = state.ingest(&doc).await?;
    let body = Ingested {
        kb_version: kb.version_hash().to_owned(),
        entity_type,
        id,
    };
    Ok((StatusCode::CREATED, Json(body)))
}

#[derive(Serialize)]
struct Validation {
    kb_version: String,
    clean: bool,
    violations: Vec<Violation>,
}

async fn kb_validate(State(state): Shared) -> Json<Validation> {
    let kb = state.kb();
    let report = validate_kb(&kb);
    Json(Validation {
        kb_version: kb.version_hash().to_owned(),
        clean: report.is_clean(),
        violations: report.violations,
    })
}
