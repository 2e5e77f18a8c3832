use axum::extract::rejection::JsonRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::{json, Value};

use senscomp_core::composer::ComposeError;
use senscomp_core::cost::CostError;
use senscomp_core::deploy::PlanError;
use senscomp_core::kb::KbError;
use senscomp_core::qa::QaError;

/// A 4xx/5xx reply with a machine-readable `code`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            details: None,
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn unknown_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_session", format!("no live session `{id}`"))
    }

    pub fn no_task_selected() -> Self {
        Self::new(StatusCode::CONFLICT, "no_task_selected", "select a task first")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"error": {"code": self.code, "message": self.message}});
        if let Some(d) = self.details {
            body["error"]["details"] = d;
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

impl From<QaError> for ApiError {
    fn from(e: QaError) -> Self {
        let msg = e.to_string();
        match e {
            QaError::UnknownQuestion(_) => Self::new(StatusCode::NOT_FOUND, "unknown_question", msg),
            QaError::UnknownTask(_) => Self::new(StatusCode::NOT_FOUND, "unknown_task", msg),
            QaError::TaskNotMatching(_) => Self::new(StatusCode::CONFLICT, "task_not_matching", msg),
            QaError::Unavailable(_)
            | QaError::AlreadyAnswered(_)
            | QaError::NotOffered { .. }
            | QaError::Malformed(_) => Self::new(StatusCode::BAD_REQUEST, "invalid_answer", msg),
        }
    }
}

impl From<ComposeError> for ApiError {
    fn from(e: ComposeError) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_task", e.to_string())
    }
}

impl From<CostError> for ApiError {
    fn from(e: CostError) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_weights", e.to_string())
    }
}

impl From<PlanError> for ApiError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::UnderivableExtra(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "underivable_extra", e.to_string())
            }
            other => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
        }
    }
}

impl From<KbError> for ApiError {
    fn from(e: KbError) -> Self {
        let details = match &e {
            KbError::Invalid(r) | KbError::Malformed { report: r, .. } => Some(json!(r.violations)),
            _ => None,
        };
        let err = match e {
            KbError::Io { .. } => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
            _ => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "kb_validation_failed", e.to_string()),
        };
        match details {
            Some(d) => err.with_details(d),
            None => err,
        }
    }
}
