//! User agent: fetches a site's consent requests, answers what the user's
//! preferences decide, and asks the human (through the UI endpoints) for the
//! rest.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use reqwest::Url;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::net::TcpListener;
use tokio::sync::{oneshot, Notify};

use super::website::DECISIONS_PATH;
use super::{
    parse_requests_header, Acknowledgment, ConsentRequest, DecisionSignal, RequestDocument,
    SignalError, SignalFormat, DECISIONS_BIN_HEADER, DECISIONS_HEADER, REQUESTS_HEADER,
    SESSION_HEADER,
};
use crate::dialogue::{
    apply_human_decision, generate_complete, ControlAction, DialogueSpec, HumanDecision,
};
use crate::matching::{
    build_prefilter, match_request, prefilter_check, Decision, DecisionStore, Outcome,
    PreferenceSet, PrefilterPair, PrefilterResult,
};
use crate::taxonomy::{ConceptMapping, ConceptRef, Registry, VocabularyDocument};

pub const DEFAULT_FPR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentMode {
    Headless,
    Interactive,
}

/// Why a request ended with its outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Rule {
        index: usize,
        specificity: usize,
        path: Vec<ConceptRef>,
    },
    Human {
        dialogue_id: String,
    },
    /// Nothing decided it: no rule applied and no human answered.
    Unanswered,
    /// The request names a vocabulary this agent does not know.
    UnknownVocabulary {
        vocab: u8,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub request_id: String,
    pub purpose: String,
    pub outcome: Outcome,
    pub provenance: Provenance,
    /// The bloom prefilter ruled out every preference rule.
    #[serde(default)]
    pub prefiltered: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionReport {
    pub url: String,
    pub session: String,
    pub mode: AgentMode,
    pub requests_url: Option<String>,
    pub entries: Vec<ReportEntry>,
    /// What was sent to the website; `None` when there was nothing to say.
    pub signal: Option<DecisionSignal>,
    pub ack: Option<Acknowledgment>,
    pub human_interactions: usize,
    pub warnings: Vec<String>,
}

impl SessionReport {
    pub fn unanswered(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.outcome == Outcome::Prompt)
            .map(|e| e.request_id.as_str())
            .collect()
    }
}

/// Body of `POST /decision`: either the raw control activations in click
/// order, or the request ids the user accepted and refused.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionBody {
    pub dialogue_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activations: Option<Vec<String>>,
    #[serde(default)]
    pub accepted: Vec<String>,
    #[serde(default)]
    pub refused: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegistryView {
    pub vocabularies: Vec<VocabularyDocument>,
    pub mappings: Vec<ConceptMapping>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VisitBody {
    pub url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<AgentMode>,
}

#[derive(Debug, Clone)]
pub struct AgentOptions {
    pub mode: AgentMode,
    pub format: SignalFormat,
    pub target_fpr: f64,
    /// Where `PUT /preferences` persists the rules.
    pub prefs_path: Option<PathBuf>,
    /// Directory for per-site decision logs; in memory when unset.
    pub store_dir: Option<PathBuf>,
    /// How long an interactive visit waits for the human.
    pub decision_timeout: Option<Duration>,
}

impl Default for AgentOptions {
    fn default() -> Self {
        AgentOptions {
            mode: AgentMode::Headless,
            format: SignalFormat::TextHeader,
            target_fpr: DEFAULT_FPR,
            prefs_path: None,
            store_dir: None,
            decision_timeout: None,
        }
    }
}

struct Snapshot {
    prefs: PreferenceSet,
    prefilter: PrefilterPair,
}

struct Pending {
    spec: DialogueSpec,
    reply: oneshot::Sender<(HumanDecision, usize)>,
}

pub struct Agent {
    registry: Arc<Registry>,
    options: AgentOptions,
    snapshot: RwLock<Arc<Snapshot>>,
    stores: Mutex<HashMap<String, DecisionStore>>,
    pending: Mutex<VecDeque<Pending>>,
    pending_changed: Notify,
    reports: Mutex<Vec<SessionReport>>,
    visits: AtomicU64,
    client: reqwest::Client,
}

impl std::fmt::Debug for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Agent")
            .field("options", &self.options)
            .finish_non_exhaustive()
    }
}

impl Agent {
    pub fn new(
        registry: Registry,
        prefs: PreferenceSet,
        options: AgentOptions,
    ) -> Result<Self, SignalError> {
        prefs.validate(&registry)?;
        let prefilter = build_prefilter(&prefs, options.target_fpr)?;
        if let Some(dir) = &options.store_dir {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Agent {
            registry: Arc::new(registry),
            snapshot: RwLock::new(Arc::new(Snapshot { prefs, prefilter })),
            options,
            stores: Mutex::new(HashMap::new()),
            pending: Mutex::new(VecDeque::new()),
            pending_changed: Notify::new(),
            reports: Mutex::new(Vec::new()),
            visits: AtomicU64::new(0),
            client: reqwest::Client::new(),
        })
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn options(&self) -> &AgentOptions {
        &self.options
    }

    pub fn registry_view(&self) -> RegistryView {
        RegistryView {
            vocabularies: self
                .registry
                .vocabularies()
                .map(|v| v.to_document())
                .collect(),
            mappings: self.registry.mappings().to_vec(),
        }
    }

    pub fn preferences(&self) -> PreferenceSet {
        self.current().prefs.clone()
    }

    fn current(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    /// Replace the rule set. Visits already running keep the snapshot they
    /// started with.
    pub fn set_preferences(&self, prefs: PreferenceSet) -> Result<(), SignalError> {
        prefs.validate(&self.registry)?;
        let prefilter = build_prefilter(&prefs, self.options.target_fpr)?;
        if let Some(path) = &self.options.prefs_path {
            std::fs::write(path, prefs.to_json())?;
        }
        *self.snapshot.write().expect("snapshot lock") = Arc::new(Snapshot { prefs, prefilter });
        Ok(())
    }

    pub fn pending(&self) -> Vec<DialogueSpec> {
        self.pending
            .lock()
            .expect("pending lock")
            .iter()
            .map(|p| p.spec.clone())
            .collect()
    }

    /// Resolves once at least one dialogue is waiting for the human.
    pub async fn wait_for_pending(&self) -> Vec<DialogueSpec> {
        loop {
            let notified = self.pending_changed.notified();
            let now = self.pending();
            if !now.is_empty() {
                return now;
            }
            notified.await;
        }
    }

    pub fn reports(&self) -> Vec<SessionReport> {
        self.reports.lock().expect("reports lock").clone()
    }

    /// Apply a human decision to a pending dialogue. The dialogue stays
    /// pending until a terminal control is activated.
    pub fn decide(&self, body: &DecisionBody) -> Result<HumanDecision, SignalError> {
        let mut queue = self.pending.lock().expect("pending lock");
        let pos = queue
            .iter()
            .position(|p| p.spec.dialogue_id == body.dialogue_id)
            .ok_or_else(|| SignalError::UnknownDialogue(body.dialogue_id.clone()))?;
        let spec = &queue[pos].spec;
        let activations = match &body.activations {
            Some(a) => a.clone(),
            None => activations_for(spec, &body.accepted, &body.refused)?,
        };
        let decision = apply_human_decision(spec, &activations)?;
        if decision.terminal.is_some() {
            let p = queue.remove(pos).expect("position is in range");
            // the visit may have timed out already
            let _ = p.reply.send((decision.clone(), activations.len()));
            drop(queue);
            self.pending_changed.notify_waiters();
        }
        Ok(decision)
    }

    fn session_token(&self, url: &str) -> String {
        let n = self.visits.fetch_add(1, Ordering::SeqCst);
        let mut h = Sha256::new();
        h.update(url.as_bytes());
        h.update(n.to_le_bytes());
        h.update(self.current().prefs.to_json().as_bytes());
        hex::encode(&h.finalize()[..16])
    }

    fn with_store<T>(
        &self,
        origin: &str,
        f: impl FnOnce(&mut DecisionStore) -> T,
    ) -> Result<T, SignalError> {
        let mut stores = self.stores.lock().expect("store lock");
        if !stores.contains_key(origin) {
            let store = match &self.options.store_dir {
                Some(dir) => {
                    DecisionStore::open(dir.join(format!("{}.jsonl", store_name(origin))))?
                }
                None => DecisionStore::in_memory(),
            };
            stores.insert(origin.to_owned(), store);
        }
        Ok(f(stores.get_mut(origin).expect("inserted above")))
    }

    /// One full round: fetch, match, ask, signal.
    pub async fn visit(&self, url: &str, mode: AgentMode) -> Result<SessionReport, SignalError> {
        let session = self.session_token(url);
        self.visit_session(url, mode, session).await
    }

    async fn visit_session(
        &self,
        url: &str,
        mode: AgentMode,
        session: String,
    ) -> Result<SessionReport, SignalError> {
        let page = Url::parse(url).map_err(|e| SignalError::Transport(format!("{url}: {e}")))?;
        let origin = page.origin().ascii_serialization();
        let fetched = fetch_document(&self.client, url, &session).await?;
        let snapshot = self.current();
        let mut warnings = Vec::new();
        let mut report = SessionReport {
            url: url.to_owned(),
            session: session.clone(),
            mode,
            requests_url: fetched.as_ref().map(|f| f.requests_url.to_string()),
            entries: Vec::new(),
            signal: None,
            ack: None,
            human_interactions: 0,
            warnings: Vec::new(),
        };
        let Some(fetched) = fetched else {
            self.reports
                .lock()
                .expect("reports lock")
                .push(report.clone());
            return Ok(report);
        };
        let vocab = fetched.document.vocab;
        let mut requests = fetched.document.requests();
        let mut entries: Vec<ReportEntry> = Vec::new();
        for r in &mut requests {
            let entry = match r.validate(&self.registry) {
                Err(SignalError::UnknownVocabulary(v)) => {
                    tracing::warn!(request = %r.id, vocab = v, "unknown vocabulary, asking the user instead");
                    warnings.push(format!("request `{}` uses unknown vocabulary {v}", r.id));
                    ReportEntry {
                        request_id: r.id.clone(),
                        purpose: r.purpose.clone(),
                        outcome: Outcome::Prompt,
                        provenance: Provenance::UnknownVocabulary { vocab: v },
                        prefiltered: false,
                    }
                }
                Err(e) => return Err(e),
                Ok(()) => {
                    let prefiltered = prefilter_check(&snapshot.prefilter, r, &self.registry)
                        == PrefilterResult::NoRuleCanApply;
                    let decision = if prefiltered {
                        Decision::prompt(&r.id)
                    } else {
                        self.with_store(&origin, |s| {
                            match_request(r, &snapshot.prefs, &self.registry, s)
                        })??
                    };
                    rule_entry(r, decision, prefiltered)
                }
            };
            entries.push(entry);
        }

        let prompts: Vec<ConsentRequest> = requests
            .iter()
            .zip(&entries)
            .filter(|(_, e)| e.outcome == Outcome::Prompt)
            .map(|(r, _)| r.clone())
            .collect();
        if mode == AgentMode::Interactive && !prompts.is_empty() {
            let spec = generate_complete(&prompts, &self.registry)?;
            let dialogue_id = spec.dialogue_id.clone();
            let (tx, rx) = oneshot::channel();
            self.pending
                .lock()
                .expect("pending lock")
                .push_back(Pending { spec, reply: tx });
            self.pending_changed.notify_waiters();
            let answer = match self.options.decision_timeout {
                Some(t) => tokio::time::timeout(t, rx).await.ok().and_then(Result::ok),
                None => rx.await.ok(),
            };
            match answer {
                Some((human, clicks)) => {
                    report.human_interactions = clicks;
                    for e in entries.iter_mut().filter(|e| e.outcome == Outcome::Prompt) {
                        let outcome = if human.signal.consent.contains(&e.request_id) {
                            Outcome::Consent
                        } else if human.signal.object.contains(&e.request_id) {
                            if self.with_store(&origin, |s| s.consent_in_force(&e.request_id))? {
                                Outcome::Withdraw
                            } else {
                                Outcome::Object
                            }
                        } else {
                            continue;
                        };
                        e.outcome = outcome;
                        e.provenance = Provenance::Human {
                            dialogue_id: dialogue_id.clone(),
                        };
                    }
                }
                None => {
                    self.pending
                        .lock()
                        .expect("pending lock")
                        .retain(|p| p.spec.dialogue_id != dialogue_id);
                    warnings.push(format!("dialogue `{dialogue_id}` got no answer"));
                }
            }
        }

        let mut signal = DecisionSignal::default();
        for e in &entries {
            match e.outcome {
                Outcome::Consent => signal.consent.push(e.request_id.clone()),
                Outcome::Withdraw => signal.withdraw.push(e.request_id.clone()),
                Outcome::Object => signal.object.push(e.request_id.clone()),
                Outcome::Prompt => {}
            }
        }
        self.with_store(&origin, |s| -> Result<(), SignalError> {
            for e in entries.iter().filter(|e| e.outcome != Outcome::Prompt) {
                s.record(&Decision {
                    request_id: e.request_id.clone(),
                    outcome: e.outcome,
                    matched_rule: match &e.provenance {
                        Provenance::Rule { index, .. } => Some(*index),
                        _ => None,
                    },
                    specificity: None,
                    path: Vec::new(),
                })?;
            }
            Ok(())
        })??;

        if !signal.is_empty() {
            let ids: Vec<String> = requests.iter().map(|r| r.id.clone()).collect();
            let target = page
                .join(DECISIONS_PATH)
                .map_err(|e| SignalError::Transport(e.to_string()))?;
            let ack = send_decisions(
                &self.client,
                target.as_str(),
                &session,
                &signal,
                self.options.format,
                vocab,
                &ids,
            )
            .await?;
            if ack.digest != signal.digest() {
                warnings.push(format!(
                    "acknowledgment digest {} does not match what was sent",
                    ack.digest
                ));
            }
            if self.options.format == SignalFormat::BinaryWord {
                signal.word = Some(signal.to_word(vocab, &ids)?);
            }
            report.ack = Some(ack);
            report.signal = Some(signal);
        }
        report.entries = entries;
        report.warnings = warnings;
        self.reports
            .lock()
            .expect("reports lock")
            .push(report.clone());
        Ok(report)
    }
}

fn store_name(origin: &str) -> String {
    origin
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn rule_entry(r: &ConsentRequest, d: Decision, prefiltered: bool) -> ReportEntry {
    let provenance = match (d.matched_rule, d.specificity) {
        (Some(index), Some(specificity)) => Provenance::Rule {
            index,
            specificity,
            path: d.path,
        },
        _ => Provenance::Unanswered,
    };
    ReportEntry {
        request_id: r.id.clone(),
        purpose: r.purpose.clone(),
        outcome: d.outcome,
        provenance,
        prefiltered,
    }
}

/// Toggle every accepted request on, then save. Ids outside the dialogue
/// are rejected; requests in neither list end up refused.
fn activations_for(
    spec: &DialogueSpec,
    accepted: &[String],
    refused: &[String],
) -> Result<Vec<String>, SignalError> {
    let bound = spec.request_ids();
    for id in accepted.iter().chain(refused) {
        if !bound.contains(id) {
            return Err(SignalError::UnknownRequest(id.clone()));
        }
        if accepted.contains(id) && refused.contains(id) {
            return Err(SignalError::Disjointness(id.clone()));
        }
    }
    let control = |action: ControlAction| {
        spec.controls()
            .find(|(_, c)| c.action == action)
            .map(|(_, c)| c.control_id.clone())
    };
    let mut out = Vec::new();
    for id in accepted {
        let toggle = spec
            .controls()
            .find(|(_, c)| c.action == ControlAction::Toggle && c.bound_requests.contains(id))
            .map(|(_, c)| c);
        match toggle {
            Some(t) if !t.preselected => out.push(t.control_id.clone()),
            Some(_) => {}
            None => return Err(SignalError::UnknownRequest(id.clone())),
        }
    }
    out.extend(control(ControlAction::SaveSelections));
    Ok(out)
}

/// A page's consent-requests document and where it came from.
#[derive(Debug, Clone)]
pub struct FetchedDocument {
    pub requests_url: Url,
    pub document: RequestDocument,
}

/// Follow the page's requests link. `None` when the page links nothing.
pub async fn fetch_document(
    client: &reqwest::Client,
    url: &str,
    session: &str,
) -> Result<Option<FetchedDocument>, SignalError> {
    let page = Url::parse(url).map_err(|e| SignalError::Transport(format!("{url}: {e}")))?;
    let res = client
        .get(page.clone())
        .header(SESSION_HEADER, session)
        .send()
        .await?;
    let Some(link) = res.headers().get(REQUESTS_HEADER) else {
        return Ok(None);
    };
    let link = link
        .to_str()
        .map_err(|_| SignalError::Header(format!("{REQUESTS_HEADER} is not ASCII")))?;
    let (path, _vocab) = parse_requests_header(link)?;
    let requests_url = page
        .join(&path)
        .map_err(|e| SignalError::Header(e.to_string()))?;
    let res = client
        .get(requests_url.clone())
        .header(SESSION_HEADER, session)
        .send()
        .await?
        .error_for_status()?;
    let body = res.text().await?;
    let document: RequestDocument =
        serde_json::from_str(&body).map_err(|e| SignalError::Document(e.to_string()))?;
    Ok(Some(FetchedDocument {
        requests_url,
        document,
    }))
}

/// Fetch and validate a page's consent requests.
pub async fn fetch_requests(
    client: &reqwest::Client,
    url: &str,
    registry: &Registry,
) -> Result<Vec<ConsentRequest>, SignalError> {
    let Some(fetched) = fetch_document(client, url, "fetch").await? else {
        return Ok(Vec::new());
    };
    let mut requests = fetched.document.requests();
    for r in &mut requests {
        r.validate(registry)?;
    }
    Ok(requests)
}

/// POST a decision signal. `request_ids` is the order of the requests
/// document and is only used for the binary form.
pub async fn send_decisions(
    client: &reqwest::Client,
    url: &str,
    session: &str,
    signal: &DecisionSignal,
    format: SignalFormat,
    vocab: u8,
    request_ids: &[String],
) -> Result<Acknowledgment, SignalError> {
    signal.check_disjoint()?;
    for id in signal.ids() {
        if !request_ids.iter().any(|r| r == id) {
            return Err(SignalError::UnknownRequest(id.to_owned()));
        }
    }
    let req = client.post(url).header(SESSION_HEADER, session);
    let req = match format {
        SignalFormat::TextHeader => req.header(DECISIONS_HEADER, signal.to_text_header()?),
        SignalFormat::BinaryWord => req.header(
            DECISIONS_BIN_HEADER,
            signal.to_binary_header(vocab, request_ids)?,
        ),
    };
    let res = req.send().await?;
    let status = res.status();
    let body = res.text().await?;
    if !status.is_success() {
        return Err(SignalError::Transport(format!("{status}: {body}")));
    }
    serde_json::from_str(&body)
        .map_err(|e| SignalError::Transport(format!("bad acknowledgment: {e}")))
}

/// Visit `url` once with the agent's preferences.
pub async fn run_agent(
    agent: &Agent,
    url: &str,
    mode: AgentMode,
) -> Result<SessionReport, SignalError> {
    agent.visit(url, mode).await
}

fn status_for(e: &SignalError) -> StatusCode {
    match e {
        SignalError::UnknownDialogue(_) => StatusCode::NOT_FOUND,
        SignalError::Transport(_) => StatusCode::BAD_GATEWAY,
        SignalError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

fn error_response(e: SignalError) -> Response {
    (
        status_for(&e),
        Json(serde_json::json!({ "error": e.to_string() })),
    )
        .into_response()
}

async fn get_pending(State(agent): State<Arc<Agent>>) -> Json<Vec<DialogueSpec>> {
    Json(agent.pending())
}

async fn post_decision(
    State(agent): State<Arc<Agent>>,
    Json(body): Json<DecisionBody>,
) -> Response {
    match agent.decide(&body) {
        Ok(d) => Json(d).into_response(),
        Err(e) => error_response(e),
    }
}

async fn get_report(State(agent): State<Arc<Agent>>) -> Json<Vec<SessionReport>> {
    Json(agent.reports())
}

async fn get_registry(State(agent): State<Arc<Agent>>) -> Json<RegistryView> {
    Json(agent.registry_view())
}

async fn get_preferences(State(agent): State<Arc<Agent>>) -> Json<PreferenceSet> {
    Json(agent.preferences())
}

async fn put_preferences(
    State(agent): State<Arc<Agent>>,
    Json(prefs): Json<PreferenceSet>,
) -> Response {
    let n = prefs.rules.len();
    match agent.set_preferences(prefs) {
        Ok(()) => Json(serde_json::json!({ "rules": n })).into_response(),
        Err(e) => error_response(e),
    }
}

/// Headless visits answer with the report; interactive ones run in the
/// background so the UI can answer the dialogue.
async fn post_visit(State(agent): State<Arc<Agent>>, Json(body): Json<VisitBody>) -> Response {
    let mode = body.mode.unwrap_or(agent.options.mode);
    let session = agent.session_token(&body.url);
    match mode {
        AgentMode::Headless => match agent.visit_session(&body.url, mode, session).await {
            Ok(r) => Json(r).into_response(),
            Err(e) => error_response(e),
        },
        AgentMode::Interactive => {
            let a = agent.clone();
            let s = session.clone();
            tokio::spawn(async move {
                if let Err(e) = a.visit_session(&body.url, mode, s).await {
                    tracing::error!("visit failed: {e}");
                }
            });
            (
                StatusCode::ACCEPTED,
                Json(serde_json::json!({ "session": session })),
            )
                .into_response()
        }
    }
}

pub fn agent_router(agent: Arc<Agent>) -> Router {
    Router::new()
        .route("/pending", get(get_pending))
        .route("/decision", post(post_decision))
        .route("/report", get(get_report))
        .route("/registry", get(get_registry))
        .route("/preferences", get(get_preferences).put(put_preferences))
        .route("/visit", post(post_visit))
        .with_state(agent)
}

pub async fn spawn_agent_service(
    agent: Arc<Agent>,
    addr: SocketAddr,
) -> Result<SocketAddr, SignalError> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let app = agent_router(agent);
    tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            tracing::error!("agent service stopped: {e}");
        }
    });
    Ok(local)
}

pub async fn serve_agent(agent: Arc<Agent>, addr: SocketAddr) -> Result<(), SignalError> {
    let listener = TcpListener::bind(addr).await?;
    tracing::info!("agent service listening on {}", listener.local_addr()?);
    axum::serve(listener, agent_router(agent)).await?;
    Ok(())
}

/// Outcome counts, handy for summaries.
pub fn outcome_counts(report: &SessionReport) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for e in &report.entries {
        *out.entry(format!("{:?}", e.outcome)).or_insert(0) += 1;
    }
    out
}
