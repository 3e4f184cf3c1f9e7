//! JSON-over-HTTP front end for a loaded model document.
//!
//! | method | path       | body                                  |
//! |--------|------------|---------------------------------------|
//! | POST   | `/predict` | patient covariates + `dose1..dose3`   |
//! | POST   | `/whatif`  | `{"patient": {...}, "regimens": [...]}` |
//! | GET    | `/health`  |                                       |
//! | GET    | `/model`   |                                       |
//!
//! The handlers are plain functions over [`AppState`] so they can be tested
//! without a socket; [`router`] only adapts them to axum.

use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use inrclass::predict::{
    FieldError, ModelInfo, PredictRequest, PredictResponse, RequestError, WhatIfRequest,
    WhatIfResponse,
};
use inrclass::store::LoadedModel;
use serde::{Deserialize, Serialize};

/// Holds at most one model; replacement swaps the whole `Arc`.
#[derive(Debug, Default)]
pub struct AppState {
    model: RwLock<Option<Arc<LoadedModel>>>,
}

impl AppState {
    pub fn new(model: Option<LoadedModel>) -> Self {
        Self {
            model: RwLock::new(model.map(Arc::new)),
        }
    }

    pub fn current(&self) -> Option<Arc<LoadedModel>> {
        self.model.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn replace(&self, model: LoadedModel) {
        *self.model.write().unwrap_or_else(|e| e.into_inner()) = Some(Arc::new(model));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: error.into(),
                fields: Vec::new(),
            },
        }
    }

    fn no_model() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "no model loaded")
    }
}

impl From<RequestError> for ApiError {
    fn from(e: RequestError) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            body: ErrorBody {
                error: "invalid request".into(),
                fields: e.errors,
            },
        }
    }
}

impl From<inrclass::Error> for ApiError {
    fn from(e: inrclass::Error) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())
    }
}

fn json_body<T: Serialize>(status: StatusCode, value: &T) -> Response {
    let bytes = serde_json::to_vec(value).expect("response serializes");
    (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        json_body(self.status, &self.body)
    }
}

fn model(state: &AppState) -> Result<Arc<LoadedModel>, ApiError> {
    state.current().ok_or_else(ApiError::no_model)
}

fn parse_json(body: &[u8]) -> Result<serde_json::Value, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError {
        status: StatusCode::BAD_REQUEST,
        body: ErrorBody {
            error: "malformed JSON".into(),
            fields: vec![FieldError {
                field: "body".into(),
                message: e.to_string(),
            }],
        },
    })
}

pub fn handle_predict(state: &AppState, body: &[u8]) -> Result<PredictResponse, ApiError> {
    let model = model(state)?;
    let request = PredictRequest::from_value(&parse_json(body)?)?;
    Ok(model.predict(&request)?)
}

pub fn handle_whatif(state: &AppState, body: &[u8]) -> Result<WhatIfResponse, ApiError> {
    let model = model(state)?;
    let request = WhatIfRequest::from_value(&parse_json(body)?)?;
    Ok(model.whatif(&request)?)
}

pub fn handle_model(state: &AppState) -> Result<ModelInfo, ApiError> {
    Ok(model(state)?.info())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_loaded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_fingerprint: Option<String>,
}

pub fn handle_health(state: &AppState) -> Health {
    let model = state.current();
    Health {
        status: "ok".into(),
        model_loaded: model.is_some(),
        model_fingerprint: model.map(|m| m.fingerprint.clone()),
    }
}

fn respond<T: Serialize>(result: Result<T, ApiError>) -> Response {
    match result {
        Ok(v) => json_body(StatusCode::OK, &v),
        Err(e) => e.into_response(),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route(
            "/predict",
            post(|State(s): State<Arc<AppState>>, body: Bytes| async move {
                respond(handle_predict(&s, &body))
            }),
        )
        .route(
            "/whatif",
            post(|State(s): State<Arc<AppState>>, body: Bytes| async move {
                respond(handle_whatif(&s, &body))
            }),
        )
        .route(
            "/health",
            get(|State(s): State<Arc<AppState>>| async move {
                json_body(StatusCode::OK, &handle_health(&s))
            }),
        )
        .route(
            "/model",
            get(|State(s): State<Arc<AppState>>| async move { respond(handle_model(&s)) }),
        )
        .with_state(state)
}

/// Serves until the listener fails or `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
