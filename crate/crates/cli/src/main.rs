use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read as _, Write as _};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use adpc_core::dialogue::{flatten_layers, ChoicesOnlyCall, TemplateDocument, UserSettings};
use adpc_core::matching::corpus::{corpus, CorpusParams};
use adpc_core::matching::oracle::oracle_match;
use adpc_core::policy::{
    decode_base64url, decode_policy, encode_base64url, encode_policy, strip_for_header, FieldMask,
};
use adpc_core::signal::agent::{serve_agent, spawn_agent_service, Agent, AgentMode, AgentOptions};
use adpc_core::signal::website::{serve_website, Website};
use adpc_core::taxonomy::{build_codebook, load_vocabulary_file, RegistryDocument};
use adpc_core::{
    emit_markup, generate_choices_only, generate_complete, generate_from_template, lint,
    match_request, parse_markup, DecisionStore, DialogueSpec, Outcome, PolicyDocument,
    PreferenceSet, Registry, RequestDocument, Severity, SignalError, SignalFormat,
};

const DEFAULT_REGISTRY: &str = "fixtures/registry.json";

#[derive(Parser)]
#[command(
    name = "adpc",
    version,
    about = "Consent request encoding, preference matching and consent dialogues"
)]
struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile and check purpose vocabularies.
    #[command(subcommand)]
    Taxonomy(TaxonomyCmd),
    /// Encode, decode and strip bit-string policies.
    #[command(subcommand)]
    Policy(PolicyCmd),
    /// Decide consent requests from preference rules.
    Match(MatchArgs),
    /// Run the simulated website or the user agent service.
    #[command(subcommand)]
    Serve(ServeCmd),
    /// Visit a website as the user agent.
    #[command(subcommand)]
    Agent(AgentCmd),
    /// Generate and lint consent dialogues.
    #[command(subcommand)]
    Dialogue(DialogueCmd),
}

#[derive(Subcommand)]
enum TaxonomyCmd {
    /// Build the prefix codebook of a vocabulary.
    Compile {
        vocab: PathBuf,
        /// JSON object of concept id to weight.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check vocabulary or registry files.
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct RegistryArg {
    #[arg(long, default_value = DEFAULT_REGISTRY)]
    registry: PathBuf,
}

#[derive(Subcommand)]
enum PolicyCmd {
    /// Policy JSON to base64url.
    Encode {
        /// Policy JSON file; stdin when absent.
        input: Option<PathBuf>,
        #[command(flatten)]
        registry: RegistryArg,
    },
    /// base64url to policy JSON.
    Decode {
        /// Encoded policy; stdin when absent.
        input: Option<String>,
        #[command(flatten)]
        registry: RegistryArg,
    },
    /// Policy JSON to a compact header word keeping only some fields.
    Strip {
        input: Option<PathBuf>,
        /// Comma list of purposes, data, controllers, legal_basis.
        #[arg(long, default_value = "purposes")]
        keep: String,
        #[command(flatten)]
        registry: RegistryArg,
    },
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long, required_unless_present = "oracle_check")]
    prefs: Option<PathBuf>,
    #[arg(long, required_unless_present = "oracle_check")]
    requests: Option<PathBuf>,
    #[command(flatten)]
    registry: RegistryArg,
    /// Print the ancestor path and the winning rule.
    #[arg(long)]
    explain: bool,
    /// Decision log used to tell objections from withdrawals.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Compare the matcher with the brute-force oracle on a random corpus.
    #[arg(long)]
    oracle_check: bool,
    #[arg(long, default_value_t = 1000)]
    cases: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Subcommand)]
enum ServeCmd {
    Website {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    Agent {
        #[arg(long)]
        prefs: PathBuf,
        #[command(flatten)]
        registry: RegistryArg,
        #[arg(long, default_value_t = 8081)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, value_enum, default_value_t = ModeArg::Interactive)]
        mode: ModeArg,
        #[arg(long)]
        store_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Headless,
    Interactive,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Binary,
}

#[derive(Subcommand)]
enum AgentCmd {
    /// Fetch, match and signal once; prints the session report.
    Run {
        #[arg(long, conflicts_with = "interactive")]
        headless: bool,
        /// Serve the UI endpoints and wait for the human on prompts.
        #[arg(long)]
        interactive: bool,
        #[arg(long)]
        prefs: PathBuf,
        #[arg(long)]
        url: String,
        #[command(flatten)]
        registry: RegistryArg,
        #[arg(long, value_enum, default_value_t = FormatArg::Text)]
        format: FormatArg,
        /// Port of the UI endpoints in interactive mode.
        #[arg(long, default_value_t = 8081)]
        port: u16,
        /// Seconds to wait for the human in interactive mode.
        #[arg(long, default_value_t = 300)]
        timeout: u64,
        #[arg(long)]
        store_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GenMode {
    Complete,
    Template,
    Choices,
}

#[derive(Subcommand)]
enum DialogueCmd {
    /// Generate a dialogue spec (or its fallback markup).
    Gen {
        #[arg(long, value_enum)]
        mode: GenMode,
        #[arg(long)]
        requests: PathBuf,
        #[command(flatten)]
        registry: RegistryArg,
        /// Controller template (template mode).
        #[arg(long, required_if_eq("mode", "template"))]
        template: Option<PathBuf>,
        /// Controller call naming the notice and the requests (choices mode).
        #[arg(long)]
        call: Option<PathBuf>,
        #[arg(long, default_value = "controller-notice")]
        notice_ref: String,
        #[arg(long)]
        flatten: bool,
        /// Emit the HTML fallback markup instead of the spec.
        #[arg(long)]
        html: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Lint a dialogue spec (JSON) or a page with fallback markup (HTML).
    Lint {
        input: PathBuf,
        #[command(flatten)]
        registry: RegistryArg,
    },
}

/// Failure with its exit code: 2 bad input, 3 transport.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(e: impl std::fmt::Display) -> Self {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }
}

impl From<SignalError> for Failure {
    fn from(e: SignalError) -> Self {
        let code = if matches!(e, SignalError::Transport(_)) {
            3
        } else {
            2
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

/// What a successful command prints; `code` is 0 or 1.
struct Done {
    code: u8,
    json: Value,
    text: String,
}

impl Done {
    fn ok(json: Value, text: impl Into<String>) -> Self {
        Done {
            code: 0,
            json,
            text: text.into(),
        }
    }
}

type CmdResult = Result<Done, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn read_or_stdin(path: Option<&Path>) -> Result<String, Failure> {
    match path {
        Some(p) => read(p),
        None => {
            let mut s = String::new();
            std::io::stdin()
                .read_to_string(&mut s)
                .map_err(Failure::input)?;
            Ok(s)
        }
    }
}

fn write_out(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_registry(arg: &RegistryArg) -> Result<Registry, Failure> {
    Registry::load(&arg.registry)
        .map_err(|e| Failure::input(format!("{}: {e}", arg.registry.display())))
}

fn load_requests(
    path: &Path,
    registry: &Registry,
) -> Result<Vec<adpc_core::ConsentRequest>, Failure> {
    let doc: RequestDocument = serde_json::from_str(&read(path)?)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let mut requests = doc.requests();
    for r in &mut requests {
        r.validate(registry)?;
    }
    Ok(requests)
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn taxonomy(cmd: TaxonomyCmd) -> CmdResult {
    match cmd {
        TaxonomyCmd::Compile {
            vocab,
            weights,
            output,
        } => {
            let v = load_vocabulary_file(&vocab).map_err(Failure::input)?;
            let weights: BTreeMap<String, f64> = match weights {
                Some(p) => serde_json::from_str(&read(&p)?)
                    .map_err(|e| Failure::input(format!("{}: {e}", p.display())))?,
                None => BTreeMap::new(),
            };
            let book = build_codebook(&v, &weights).map_err(Failure::input)?;
            let doc = book.to_document(&v);
            let text = pretty(&doc) + "\n";
            match output {
                Some(p) => {
                    write_out(&p, &text)?;
                    Ok(Done::ok(
                        json!({ "output": p, "entries": doc.entries.len() }),
                        format!("wrote {} codes to {}", doc.entries.len(), p.display()),
                    ))
                }
                None => Ok(Done::ok(to_value(&doc), text.trim_end())),
            }
        }
        TaxonomyCmd::Validate { paths } => {
            let mut report = Vec::new();
            let mut text = String::new();
            let mut failed = None;
            for p in &paths {
                let raw = read(p)?;
                let is_registry = serde_json::from_str::<RegistryDocument>(&raw).is_ok();
                let result = if is_registry {
                    Registry::load(p)
                        .map(|r| format!("registry with {} vocabularies", r.vocabularies().count()))
                } else {
                    load_vocabulary_file(p).map(|v| {
                        format!(
                            "{} v{} (registry id {}, {} concepts)",
                            v.name(),
                            v.version(),
                            v.registry_id(),
                            v.len()
                        )
                    })
                };
                match result {
                    Ok(summary) => {
                        let _ = writeln!(text, "ok {}: {summary}", p.display());
                        report.push(json!({ "path": p, "ok": true, "summary": summary }));
                    }
                    Err(e) => {
                        let _ = writeln!(text, "invalid {}: {e}", p.display());
                        report.push(json!({ "path": p, "ok": false, "error": e.to_string() }));
                        failed.get_or_insert(e.to_string());
                    }
                }
            }
            match failed {
                None => Ok(Done::ok(Value::Array(report), text.trim_end())),
                Some(_) => Err(Failure {
                    code: 2,
                    message: text.trim_end().to_owned(),
                }),
            }
        }
    }
}

fn policy(cmd: PolicyCmd) -> CmdResult {
    match cmd {
        PolicyCmd::Encode { input, registry } => {
            let reg = load_registry(&registry)?;
            let doc: PolicyDocument =
                serde_json::from_str(&read_or_stdin(input.as_deref())?).map_err(Failure::input)?;
            let bytes = encode_policy(&doc.to_policy(&reg).map_err(Failure::input)?, &reg)
                .map_err(Failure::input)?;
            let b64 = encode_base64url(&bytes);
            Ok(Done::ok(
                json!({ "encoded": b64, "bytes": bytes.len() }),
                b64,
            ))
        }
        PolicyCmd::Decode { input, registry } => {
            let reg = load_registry(&registry)?;
            let text = match input {
                Some(s) => s,
                None => read_or_stdin(None)?,
            };
            let bytes = decode_base64url(text.trim()).map_err(Failure::input)?;
            let p = decode_policy(&bytes, &reg).map_err(Failure::input)?;
            let doc = PolicyDocument::from_policy(&p, &reg).map_err(Failure::input)?;
            Ok(Done::ok(to_value(&doc), pretty(&doc)))
        }
        PolicyCmd::Strip {
            input,
            keep,
            registry,
        } => {
            let reg = load_registry(&registry)?;
            let mask = FieldMask::parse_list(&keep).map_err(Failure::input)?;
            let doc: PolicyDocument =
                serde_json::from_str(&read_or_stdin(input.as_deref())?).map_err(Failure::input)?;
            let p = doc.to_policy(&reg).map_err(Failure::input)?;
            let full = encode_base64url(&encode_policy(&p, &reg).map_err(Failure::input)?);
            let word = strip_for_header(&p, mask, &reg).map_err(Failure::input)?;
            let b64 = encode_base64url(&word.to_bytes());
            Ok(Done::ok(json!({ "word": b64, "full": full }), b64))
        }
    }
}

fn describe_outcome(o: Outcome) -> &'static str {
    match o {
        Outcome::Consent => "Consent",
        Outcome::Object => "Object",
        Outcome::Withdraw => "Withdraw",
        Outcome::Prompt => "Prompt",
    }
}

fn matching(args: MatchArgs) -> CmdResult {
    if args.oracle_check {
        return oracle_check(args.seed, args.cases);
    }
    let reg = load_registry(&args.registry)?;
    let prefs_path = args.prefs.expect("clap requires --prefs");
    let prefs = PreferenceSet::from_json(&read(&prefs_path)?).map_err(Failure::input)?;
    prefs.validate(&reg).map_err(Failure::input)?;
    let requests = load_requests(&args.requests.expect("clap requires --requests"), &reg)?;
    let store = match &args.store {
        Some(p) => DecisionStore::open(p).map_err(Failure::input)?,
        None => DecisionStore::in_memory(),
    };
    let mut decisions = Vec::new();
    let mut text = String::new();
    for r in &requests {
        let d = match_request(r, &prefs, &reg, &store).map_err(Failure::input)?;
        let _ = write!(text, "{}: {}", d.request_id, describe_outcome(d.outcome));
        if args.explain {
            match (d.matched_rule, d.specificity) {
                (Some(i), Some(s)) => {
                    let rule = &prefs.rules[i];
                    let path: Vec<String> = d.path.iter().map(|c| c.id().to_owned()).collect();
                    let _ = write!(
                        text,
                        "\n  rule {i}: {:?} {} (specificity {s})\n  path: {}",
                        rule.effect,
                        rule.target,
                        path.join(" -> ")
                    );
                }
                _ => text.push_str("\n  no rule applies"),
            }
        }
        text.push('\n');
        decisions.push(d);
    }
    Ok(Done::ok(to_value(&decisions), text.trim_end()))
}

fn oracle_check(seed: u64, cases: usize) -> CmdResult {
    let mut checked = 0usize;
    let mut mismatches = Vec::new();
    for (n, case) in corpus(seed, cases, CorpusParams::default())
        .into_iter()
        .enumerate()
    {
        let store = DecisionStore::from_entries(case.store.clone());
        for r in &case.requests {
            let got =
                match_request(r, &case.prefs, &case.registry, &store).map_err(Failure::input)?;
            let want = oracle_match(r, &case.prefs, &case.registry, &case.store);
            checked += 1;
            let same = want.is_some_and(|w| {
                (w.outcome, w.matched_rule, w.specificity)
                    == (got.outcome, got.matched_rule, got.specificity)
            });
            if !same {
                mismatches.push(json!({ "case": n, "request": r.id }));
            }
        }
    }
    let text = format!(
        "{checked} requests in {cases} cases, {} disagreements",
        mismatches.len()
    );
    Ok(Done {
        code: u8::from(!mismatches.is_empty()),
        json: json!({ "cases": cases, "requests": checked, "mismatches": mismatches }),
        text,
    })
}

fn addr(host: &str, port: u16) -> Result<SocketAddr, Failure> {
    format!("{host}:{port}").parse().map_err(Failure::input)
}

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Runtime::new().map_err(Failure::input)
}

fn load_agent(
    prefs: &Path,
    registry: &RegistryArg,
    options: AgentOptions,
) -> Result<Agent, Failure> {
    let reg = load_registry(registry)?;
    let p = PreferenceSet::from_json(&read(prefs)?).map_err(Failure::input)?;
    Ok(Agent::new(reg, p, options)?)
}

fn serve(cmd: ServeCmd) -> CmdResult {
    match cmd {
        ServeCmd::Website { config, port, host } => {
            let site = Arc::new(Website::load(&config)?);
            let at = addr(&host, port)?;
            runtime()?.block_on(serve_website(site, at))?;
        }
        ServeCmd::Agent {
            prefs,
            registry,
            port,
            host,
            mode,
            store_dir,
        } => {
            let options = AgentOptions {
                mode: match mode {
                    ModeArg::Headless => AgentMode::Headless,
                    ModeArg::Interactive => AgentMode::Interactive,
                },
                prefs_path: Some(prefs.clone()),
                store_dir,
                ..Default::default()
            };
            let agent = Arc::new(load_agent(&prefs, &registry, options)?);
            let at = addr(&host, port)?;
            runtime()?.block_on(serve_agent(agent, at))?;
        }
    }
    Ok(Done::ok(Value::Null, ""))
}

fn agent(cmd: AgentCmd) -> CmdResult {
    let AgentCmd::Run {
        headless: _,
        interactive,
        prefs,
        url,
        registry,
        format,
        port,
        timeout,
        store_dir,
    } = cmd;
    let mode = if interactive {
        AgentMode::Interactive
    } else {
        AgentMode::Headless
    };
    let options = AgentOptions {
        mode,
        format: match format {
            FormatArg::Text => SignalFormat::TextHeader,
            FormatArg::Binary => SignalFormat::BinaryWord,
        },
        store_dir,
        decision_timeout: Some(Duration::from_secs(timeout)),
        ..Default::default()
    };
    let agent = Arc::new(load_agent(&prefs, &registry, options)?);
    let report = runtime()?.block_on(async {
        if mode == AgentMode::Interactive {
            let at = spawn_agent_service(agent.clone(), addr("127.0.0.1", port)?).await?;
            eprintln!("waiting for decisions on http://{at}/pending");
        }
        Ok::<_, Failure>(agent.visit(&url, mode).await?)
    })?;
    let text = pretty(&report);
    Ok(Done::ok(to_value(&report), text))
}

fn is_html(path: &Path, text: &str) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("html" | "htm")
    ) || text.trim_start().starts_with('<')
}

fn dialogue(cmd: DialogueCmd) -> CmdResult {
    match cmd {
        DialogueCmd::Gen {
            mode,
            requests,
            registry,
            template,
            call,
            notice_ref,
            flatten,
            html,
            output,
        } => {
            let reg = load_registry(&registry)?;
            let reqs = load_requests(&requests, &reg)?;
            let settings = UserSettings {
                flatten_layers: flatten,
            };
            let mut spec = match mode {
                GenMode::Complete => generate_complete(&reqs, &reg),
                GenMode::Template => {
                    let path = template.expect("clap requires --template");
                    let t = TemplateDocument::from_json(&read(&path)?).map_err(Failure::input)?;
                    generate_from_template(&t, &reqs, &reg, &settings)
                }
                GenMode::Choices => match call {
                    Some(p) => {
                        let c = ChoicesOnlyCall::from_json(&read(&p)?).map_err(Failure::input)?;
                        c.select(&reqs)
                            .and_then(|chosen| generate_choices_only(&c.notice_ref, &chosen))
                    }
                    None => generate_choices_only(&notice_ref, &reqs),
                },
            }
            .map_err(Failure::input)?;
            if flatten && !matches!(mode, GenMode::Template) {
                spec = flatten_layers(&spec);
            }
            let findings = lint(&spec);
            let body = if html {
                emit_markup(&spec)
            } else {
                spec.to_json() + "\n"
            };
            if let Some(p) = &output {
                write_out(p, &body)?;
            }
            let code = u8::from(findings.iter().any(|f| f.severity == Severity::Error));
            let text = match &output {
                Some(p) => format!("wrote {} ({} findings)", p.display(), findings.len()),
                None => body.trim_end().to_owned(),
            };
            Ok(Done {
                code,
                json: json!({ "spec": spec, "findings": findings, "output": output }),
                text,
            })
        }
        DialogueCmd::Lint { input, registry } => {
            let raw = read(&input)?;
            let reg = Registry::load(&registry.registry).ok();
            let (spec, warnings) = if is_html(&input, &raw) {
                let m = parse_markup(&raw).map_err(Failure::input)?;
                (m.to_spec(reg.as_ref()), m.warnings)
            } else {
                let spec: DialogueSpec = serde_json::from_str(&raw).map_err(Failure::input)?;
                (spec, Vec::new())
            };
            let findings = lint(&spec);
            let mut text = String::new();
            for f in &findings {
                let _ = writeln!(
                    text,
                    "{} {:?} {}: {}",
                    f.rule, f.severity, f.location, f.message
                );
            }
            for w in &warnings {
                let _ = writeln!(text, "markup warning: {w}");
            }
            if findings.is_empty() {
                text.push_str("no findings\n");
            }
            let code = u8::from(findings.iter().any(|f| f.severity == Severity::Error));
            Ok(Done {
                code,
                json: json!({ "findings": findings, "markup_warnings": warnings }),
                text: text.trim_end().to_owned(),
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let result = match cli.command {
        Command::Taxonomy(c) => taxonomy(c),
        Command::Policy(c) => policy(c),
        Command::Match(a) => matching(a),
        Command::Serve(c) => serve(c),
        Command::Agent(c) => agent(c),
        Command::Dialogue(c) => dialogue(c),
    };
    match result {
        Ok(done) => {
            // a closed pipe downstream is not our failure
            let mut out = std::io::stdout().lock();
            let _ = if cli.json {
                writeln!(out, "{}", done.json)
            } else if !done.text.is_empty() {
                writeln!(out, "{}", done.text)
            } else {
                Ok(())
            };
            ExitCode::from(done.code)
        }
        Err(f) => {
            if cli.json {
                let _ = writeln!(
                    std::io::stdout().lock(),
                    "{}",
                    json!({ "error": f.message, "code": f.code })
                );
            } else {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}
