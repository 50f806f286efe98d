//! Simulated website: links its consent requests from every response and
//! logs the decision signals that come back, per session.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::extract::{Request, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use super::{
    requests_header, Acknowledgment, ConsentRequest, DecisionSignal, RequestDocument, SignalError,
    SignalFormat, DECISIONS_BIN_HEADER, DECISIONS_HEADER, REQUESTS_HEADER, SESSION_HEADER,
};
use crate::dialogue::{generate_choices_only, generate_complete};
use crate::markup::{emit_markup, escape};
use crate::taxonomy::Registry;

pub const DECISIONS_PATH: &str = "/consent-decisions";
pub const LOG_PATH: &str = "/log";
pub const ANONYMOUS_SESSION: &str = "anonymous";

/// Website config file. Relative paths resolve against the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteConfig {
    pub title: String,
    pub requests_path: String,
    pub requests_file: PathBuf,
    /// Used to render the notice text of the fallback markup; without it
    /// the page only carries the choices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub format: SignalFormat,
    pub signal: DecisionSignal,
    pub digest: String,
}

pub type SessionLog = BTreeMap<String, Vec<LogEntry>>;

#[derive(Debug)]
pub struct Website {
    pub config: SiteConfig,
    pub document: RequestDocument,
    request_ids: Vec<String>,
    page: String,
    log: Mutex<SessionLog>,
}

impl Website {
    pub fn load(config_path: impl AsRef<Path>) -> Result<Self, SignalError> {
        let config_path = config_path.as_ref();
        let base = config_path.parent().unwrap_or(Path::new("."));
        let config: SiteConfig = serde_json::from_str(&std::fs::read_to_string(config_path)?)
            .map_err(|e| SignalError::Config(format!("{}: {e}", config_path.display())))?;
        let document: RequestDocument =
            serde_json::from_str(&std::fs::read_to_string(base.join(&config.requests_file))?)
                .map_err(|e| SignalError::Document(e.to_string()))?;
        let registry = match &config.registry {
            Some(p) => {
                Some(Registry::load(base.join(p)).map_err(|e| SignalError::Config(e.to_string()))?)
            }
            None => None,
        };
        Self::new(config, document, registry.as_ref())
    }

    pub fn new(
        config: SiteConfig,
        document: RequestDocument,
        registry: Option<&Registry>,
    ) -> Result<Self, SignalError> {
        if !config.requests_path.starts_with('/')
            || [DECISIONS_PATH, LOG_PATH, "/"].contains(&config.requests_path.as_str())
        {
            return Err(SignalError::Config(format!(
                "unusable requests_path `{}`",
                config.requests_path
            )));
        }
        let mut requests = document.requests();
        if let Some(reg) = registry {
            for r in &mut requests {
                match r.validate(reg) {
                    Ok(()) | Err(SignalError::UnknownVocabulary(_)) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        let page = render_page(&config.title, &requests, registry)?;
        Ok(Website {
            request_ids: requests.iter().map(|r| r.id.clone()).collect(),
            config,
            document,
            page,
            log: Mutex::new(SessionLog::new()),
        })
    }

    pub fn requests_header(&self) -> String {
        requests_header(&self.config.requests_path, self.document.vocab)
    }

    pub fn page(&self) -> &str {
        &self.page
    }

    pub fn log(&self) -> SessionLog {
        self.log.lock().expect("log lock").clone()
    }

    /// Parse whichever decision header is present and log it.
    pub fn receive(&self, headers: &HeaderMap) -> Result<Option<Acknowledgment>, SignalError> {
        let text = header_str(headers, DECISIONS_HEADER)?;
        let bin = header_str(headers, DECISIONS_BIN_HEADER)?;
        let (format, signal) = match (text, bin) {
            (None, None) => return Ok(None),
            (Some(t), None) => (
                SignalFormat::TextHeader,
                DecisionSignal::parse_text_header(t)?,
            ),
            (None, Some(b)) => (
                SignalFormat::BinaryWord,
                DecisionSignal::parse_binary_header(b, &self.request_ids)?,
            ),
            (Some(_), Some(_)) => {
                return Err(SignalError::Header(format!(
                    "both {DECISIONS_HEADER} and {DECISIONS_BIN_HEADER} present"
                )))
            }
        };
        signal.check_disjoint()?;
        if let Some(id) = signal
            .ids()
            .into_iter()
            .find(|id| !self.request_ids.iter().any(|r| r == id))
        {
            return Err(SignalError::UnknownRequest(id.to_owned()));
        }
        let session = header_str(headers, SESSION_HEADER)?
            .unwrap_or(ANONYMOUS_SESSION)
            .to_owned();
        let received = DecisionSignal {
            word: None,
            ..signal.normalized()
        };
        let digest = received.digest();
        tracing::info!(%session, ?format, %digest, "decision signal received");
        self.log
            .lock()
            .expect("log lock")
            .entry(session.clone())
            .or_default()
            .push(LogEntry {
                format,
                signal: received.clone(),
                digest: digest.clone(),
            });
        Ok(Some(Acknowledgment {
            session,
            received,
            digest,
        }))
    }
}

fn header_str<'a>(headers: &'a HeaderMap, name: &str) -> Result<Option<&'a str>, SignalError> {
    headers
        .get(name)
        .map(|v| {
            v.to_str()
                .map_err(|_| SignalError::Header(format!("{name} is not ASCII")))
        })
        .transpose()
}

fn render_page(
    title: &str,
    requests: &[ConsentRequest],
    registry: Option<&Registry>,
) -> Result<String, SignalError> {
    let markup = match (requests.is_empty(), registry) {
        (true, _) => String::new(),
        (false, Some(reg)) => emit_markup(&generate_complete(requests, reg)?),
        (false, None) => emit_markup(&generate_choices_only("site-notice", requests)?),
    };
    let title = escape(title);
    Ok(format!(
        "<!doctype html>\n<html>\n<head><title>{title}</title></head>\n<body>\n<h1>{title}</h1>\n{markup}</body>\n</html>\n"
    ))
}

fn error_response(status: StatusCode, e: impl std::fmt::Display) -> Response {
    (status, Json(serde_json::json!({ "error": e.to_string() }))).into_response()
}

async fn link_and_log(State(site): State<Arc<Website>>, req: Request, next: Next) -> Response {
    // POST /consent-decisions logs for itself so it can answer with the ack
    if req.uri().path() != DECISIONS_PATH {
        if let Err(e) = site.receive(req.headers()) {
            return error_response(StatusCode::BAD_REQUEST, e);
        }
    }
    let mut res = next.run(req).await;
    if let Ok(v) = HeaderValue::from_str(&site.requests_header()) {
        res.headers_mut().insert(REQUESTS_HEADER, v);
    }
    res
}

async fn index(State(site): State<Arc<Website>>) -> Html<String> {
    Html(site.page.clone())
}

async fn requests_doc(State(site): State<Arc<Website>>) -> Json<RequestDocument> {
    Json(site.document.clone())
}

async fn decisions(State(site): State<Arc<Website>>, headers: HeaderMap) -> Response {
    match site.receive(&headers) {
        Ok(Some(ack)) => Json(ack).into_response(),
        Ok(None) => error_response(StatusCode::BAD_REQUEST, "no decision header"),
        Err(e) => error_response(StatusCode::BAD_REQUEST, e),
    }
}

async fn log(State(site): State<Arc<Website>>) -> Json<SessionLog> {
    Json(site.log())
}

pub fn website_router(site: Arc<Website>) -> Router {
    Router::new()
        .route("/", get(index))
        .route(&site.config.requests_path, get(requests_doc))
        .route(DECISIONS_PATH, post(decisions))
        .route(LOG_PATH, get(log))
        .layer(middleware::from_fn_with_state(site.clone(), link_and_log))
        .with_state(site)
}

/// Bind and serve in the background; returns the bound address.
pub async fn spawn_website(
    site: Arc<Website>,
    addr: SocketAddr,
) -> Result<SocketAddr, SignalError> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let app = website_router(site);
    tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            tracing::error!("website server stopped: {e}");
        }
    });
    Ok(local)
}

/// Serve until the process is interrupted.
pub async fn serve_website(site: Arc<Website>, addr: SocketAddr) -> Result<(), SignalError> {
    let listener = TcpListener::bind(addr).await?;
    tracing::info!("website listening on {}", listener.local_addr()?);
    axum::serve(listener, website_router(site)).await?;
    Ok(())
}
