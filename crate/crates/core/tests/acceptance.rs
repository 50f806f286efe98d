//! Acceptance run: one PASS/FAIL line per criterion.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

use adpc_core::dialogue::corpus::{generate_mode, random_requests, random_spec};
use adpc_core::dialogue::{generate_from_template, TemplateDocument, UserSettings};
use adpc_core::matching::corpus::{corpus, random_vocabulary, CorpusParams};
use adpc_core::matching::oracle::{oracle_match, path_costs};
use adpc_core::policy::{decode_policy, encode_policy, LegalBasisCode};
use adpc_core::signal::agent::{Agent, AgentMode, AgentOptions};
use adpc_core::signal::website::{spawn_website, Website};
use adpc_core::signal::RequestDocument;
use adpc_core::taxonomy::build_codebook;
use adpc_core::{
    apply_human_decision, build_prefilter, emit_markup, generate_complete, lint, match_request,
    parse_markup, prefilter_check, ConceptRef, ConsentRequest, ControlAction, DecisionStore,
    DialogueSpec, LintRule, Outcome, PolicyBitString, PreferenceRule, PreferenceSet,
    PrefilterResult, Quality, Registry, Severity, SourceMode,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn registry() -> Registry {
    Registry::load(fixtures().join("registry.json")).expect("fixture registry")
}

fn newsletter() -> Vec<ConsentRequest> {
    let doc: RequestDocument = serde_json::from_str(
        &std::fs::read_to_string(fixtures().join("requests/newsletter.json")).unwrap(),
    )
    .unwrap();
    doc.requests()
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

// ---- codec ----

fn random_policy(rng: &mut StdRng, reg: &Registry, vocab_id: u8) -> PolicyBitString {
    let vocab = reg.get(vocab_id).unwrap();
    let mut p = PolicyBitString::empty(rng.random_range(0..64), vocab);
    let density = rng.random_range(0.0..1.0);
    p.purposes
        .iter_mut()
        .for_each(|b| *b = rng.random_bool(density));
    p.data_categories
        .iter_mut()
        .for_each(|b| *b = rng.random_bool(density));
    let mut controllers: BTreeSet<u16> = BTreeSet::new();
    for _ in 0..rng.random_range(0..24) {
        controllers.insert(rng.random_range(0..=4095));
    }
    p.controllers = controllers.into_iter().collect();
    let bases = [
        LegalBasisCode::Consent,
        LegalBasisCode::LegitimateInterest,
        LegalBasisCode::Contract,
        LegalBasisCode::Other,
    ];
    p.legal_basis = (0..p.set_purpose_count())
        .map(|_| *bases.choose(rng).unwrap())
        .collect();
    p
}

fn codec_round_trip() -> Verdict {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(0xC0DEC);
    let mut reg = Registry::new();
    for id in 1..=16u8 {
        let purposes = rng.random_range(1..=300);
        let data = rng.random_range(1..=120);
        reg.insert(random_vocabulary(&mut rng, id, purposes, data))
            .unwrap();
    }
    let mut failures = 0;
    for _ in 0..10_000 {
        let vocab = rng.random_range(1..=16);
        let p = random_policy(&mut rng, &reg, vocab);
        let bytes = encode_policy(&p, &reg).unwrap();
        // layout size computed from the field table
        let bits = 6
            + 8
            + p.purposes.len()
            + p.data_categories.len()
            + 12
            + 12 * p.controllers.len()
            + 2 * p.set_purpose_count();
        if bytes.len() != bits.div_ceil(8) || decode_policy(&bytes, &reg).as_ref() != Ok(&p) {
            failures += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        failures == 0 && elapsed < Duration::from_secs(10),
        format!("10000 policies, {failures} failures, {}", secs(elapsed)),
    )
}

// ---- prefix codes ----

fn bit_string(bits: &[bool]) -> String {
    bits.iter().map(|b| if *b { '1' } else { '0' }).collect()
}

fn prefix_codes() -> Verdict {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(0x5F);
    let mut problems = Vec::new();
    let mut largest = 0;
    for i in 0..100u8 {
        let total = rng.random_range(2..=497);
        let data = rng.random_range(1..total);
        let vocab = random_vocabulary(&mut rng, i, total - data, data);
        largest = largest.max(vocab.len());
        let a = build_codebook(&vocab, &BTreeMap::new()).unwrap();
        let b = build_codebook(&vocab, &BTreeMap::new()).unwrap();
        let ja = serde_json::to_vec(&a.to_document(&vocab)).unwrap();
        let jb = serde_json::to_vec(&b.to_document(&vocab)).unwrap();
        if ja != jb {
            problems.push(format!("vocabulary {i} not deterministic"));
        }
        let codes: Vec<String> = a.entries().map(|(_, c)| bit_string(c.bits())).collect();
        if codes.len() != vocab.len() {
            problems.push(format!(
                "vocabulary {i} has {} codes for {} concepts",
                codes.len(),
                vocab.len()
            ));
        }
        'pairs: for (x, cx) in codes.iter().enumerate() {
            for (y, cy) in codes.iter().enumerate() {
                if x != y && cy.starts_with(cx.as_str()) {
                    problems.push(format!("vocabulary {i}: {cx} prefixes {cy}"));
                    break 'pairs;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        problems.is_empty() && elapsed < Duration::from_secs(30),
        format!(
            "100 vocabularies up to {largest} concepts, {} problems{}, {}",
            problems.len(),
            problems
                .first()
                .map(|p| format!(" ({p})"))
                .unwrap_or_default(),
            secs(elapsed)
        ),
    )
}

// ---- matcher and prefilter ----

fn matcher_oracle(false_negatives: &mut usize, probes: &mut usize) -> Verdict {
    let start = Instant::now();
    let mut disagreements = 0;
    let mut requests = 0;
    for case in corpus(1000, 1000, CorpusParams::default()) {
        let store = DecisionStore::from_entries(case.store.clone());
        let pair = build_prefilter(&case.prefs, 0.01).unwrap();
        for req in &case.requests {
            requests += 1;
            let got = match_request(req, &case.prefs, &case.registry, &store).ok();
            let want = oracle_match(req, &case.prefs, &case.registry, &case.store);
            let key = |d: &adpc_core::Decision| (d.outcome, d.matched_rule, d.specificity);
            if got.as_ref().map(key) != want.as_ref().map(key) {
                disagreements += 1;
            }
            // a rule can apply when its target is reachable from the purpose
            let vocab = case.registry.get(req.vocab).unwrap();
            let start = ConceptRef::new(req.vocab, req.purpose.clone());
            let anchor = req
                .parent
                .as_ref()
                .map(|p| ConceptRef::new(req.vocab, p.clone()));
            let registered = vocab.contains(&req.purpose);
            let reach = path_costs(
                &case.registry,
                &start,
                if registered { None } else { anchor.as_ref() },
            );
            if case
                .prefs
                .rules
                .iter()
                .any(|r| reach.contains_key(&r.target))
            {
                *probes += 1;
                if prefilter_check(&pair, req, &case.registry) == PrefilterResult::NoRuleCanApply {
                    *false_negatives += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        disagreements == 0 && elapsed < Duration::from_secs(60),
        format!(
            "1000 cases, {requests} requests, {disagreements} disagreements, {}",
            secs(elapsed)
        ),
    )
}

fn bloom_prefilter(false_negatives: usize, probes: usize) -> Verdict {
    let (n, p) = (1000usize, 0.01f64);
    let ln2 = std::f64::consts::LN_2;
    let m_want = (-(n as f64) * p.ln() / (ln2 * ln2)).ceil() as usize;
    let k_want = ((m_want as f64 / n as f64) * ln2).round() as u32;

    let rules: Vec<PreferenceRule> = (0..n)
        .map(|i| PreferenceRule::prohibit(1, &format!("inserted{i}")))
        .collect();
    let pair = build_prefilter(&PreferenceSet::new(rules.clone()), p).unwrap();
    let filter = &pair.prohibit_filter;
    let missed = rules
        .iter()
        .filter(|r| !filter.contains(&r.target.key()))
        .count();
    let hits = (0..10_000)
        .filter(|i| filter.contains(&ConceptRef::new(1, format!("absent{i}")).key()))
        .count();
    let fpr = hits as f64 / 10_000.0;
    let params = (filter.bit_count(), filter.hash_count());
    verdict(
        params == (m_want, k_want)
            && (m_want, k_want) == (9586, 7)
            && missed == 0
            && false_negatives == 0
            && fpr <= 2.0 * p,
        format!(
            "m={} k={}, FPR {:.4} over 10000 probes, {} inserted keys missed, {false_negatives} false negatives in {probes} corpus probes",
            params.0, params.1, fpr, missed
        ),
    )
}

// ---- end to end ----

fn end_to_end(rt: &tokio::runtime::Runtime) -> Verdict {
    let start = Instant::now();
    let result: Result<Verdict, String> = rt.block_on(async {
        let site =
            Arc::new(Website::load(fixtures().join("site.json")).map_err(|e| e.to_string())?);
        let addr = spawn_website(site.clone(), "127.0.0.1:0".parse().unwrap())
            .await
            .map_err(|e| e.to_string())?;
        let prefs = PreferenceSet::new(vec![PreferenceRule::prohibit(2, "Marketing")]);
        let agent =
            Agent::new(registry(), prefs, AgentOptions::default()).map_err(|e| e.to_string())?;
        let report = agent
            .visit(&format!("http://{addr}/"), AgentMode::Headless)
            .await
            .map_err(|e| e.to_string())?;
        let signal = report.signal.clone().ok_or("no signal sent")?;
        let log = site.log();
        let logged: Vec<_> = log
            .get(&report.session)
            .map(|l| l.iter().map(|e| e.signal.clone()).collect())
            .unwrap_or_default();
        let report_signal = adpc_core::DecisionSignal {
            word: None,
            ..signal.normalized()
        };
        let object_only = signal.object == vec!["q1".to_owned()]
            && signal.consent.is_empty()
            && signal.withdraw.is_empty();
        let prompts = report.unanswered().len() + report.human_interactions;
        let log_matches = logged == vec![report_signal] && log.len() == 1;
        let outcomes_match = report.entries.iter().all(|e| e.outcome == Outcome::Object);
        Ok(verdict(
            object_only && prompts == 0 && log_matches && outcomes_match,
            format!(
                "object={:?}, {prompts} prompts, log {}",
                signal.object,
                if log_matches {
                    "matches report"
                } else {
                    "differs from report"
                }
            ),
        ))
    });
    let elapsed = start.elapsed();
    match result {
        Ok(v) => verdict(
            v.pass && elapsed < Duration::from_secs(5),
            format!("{}, {}", v.detail, secs(elapsed)),
        ),
        Err(e) => verdict(false, e),
    }
}

// ---- dialogue generation and lint ----

fn lint_closure() -> Verdict {
    let start = Instant::now();
    let reg = registry();
    let vocabs: Vec<_> = reg.vocabularies().collect();
    let mut rng = StdRng::seed_from_u64(0xD1A1);
    let mut errors = 0;
    for i in 0..500 {
        let vocab = vocabs[i % vocabs.len()];
        let requests = random_requests(&mut rng, &reg, vocab, 8);
        for mode in [
            SourceMode::Complete,
            SourceMode::Template,
            SourceMode::ChoicesOnly,
        ] {
            let spec = generate_mode(&mut rng, mode, &requests, &reg);
            errors += lint(&spec)
                .iter()
                .filter(|f| f.severity == Severity::Error)
                .count();
        }
    }

    let expected = [
        ("l1-preselected.json", LintRule::L1),
        ("l1-preselected.html", LintRule::L1),
        ("l2-no-refuse.json", LintRule::L2),
        ("l3-refuse-deeper.json", LintRule::L3),
        ("l4-generic-recipient.json", LintRule::L4),
        ("l5-unanchored-purpose.json", LintRule::L5),
        ("l6-special-no-explicit.json", LintRule::L6),
        ("l7-no-dismiss.json", LintRule::L7),
    ];
    let mut wrong = Vec::new();
    for (file, rule) in expected {
        let text = std::fs::read_to_string(fixtures().join("lint").join(file)).unwrap();
        let spec: DialogueSpec = if file.ends_with(".html") {
            parse_markup(&text).unwrap().to_spec(Some(&reg))
        } else {
            serde_json::from_str(&text).unwrap()
        };
        let fired: BTreeSet<LintRule> = lint(&spec).into_iter().map(|f| f.rule).collect();
        if fired != BTreeSet::from([rule]) {
            wrong.push(format!("{file} fired {fired:?}"));
        }
    }
    let clean: DialogueSpec =
        serde_json::from_str(&std::fs::read_to_string(fixtures().join("lint/clean.json")).unwrap())
            .unwrap();
    if !lint(&clean).is_empty() {
        wrong.push("clean.json has findings".into());
    }
    verdict(
        errors == 0 && wrong.is_empty(),
        format!(
            "1500 generated dialogues, {errors} lint errors; fixtures: {}, {}",
            if wrong.is_empty() {
                "each fires exactly its rule".to_owned()
            } else {
                wrong.join("; ")
            },
            secs(start.elapsed())
        ),
    )
}

// ---- markup ----

type ControlShape = (String, usize, String, bool);

fn control_shapes(spec: &DialogueSpec) -> BTreeSet<ControlShape> {
    spec.controls()
        .map(|(l, c)| {
            (
                c.control_id.clone(),
                l,
                format!("{:?}", c.action),
                c.preselected,
            )
        })
        .collect()
}

fn anchors(requests: &[ConsentRequest]) -> BTreeMap<String, (String, Option<String>)> {
    requests
        .iter()
        .map(|r| (r.id.clone(), (r.purpose.clone(), r.parent.clone())))
        .collect()
}

const FRAGMENTS: &[&str] = &[
    "<dialog",
    "<dialog>",
    "</dialog>",
    "<section data-adpc-request-id=\"q1\"",
    "<div data-adpc-request-id=",
    ">",
    "\"",
    "'",
    "data-purpose=",
    "data-parent=\"Marketing\"",
    "<button data-decision=consent>",
    "<button id=x data-decision=",
    "<input data-toggle-for=q1 checked",
    "<input id=t type=checkbox data-toggle-for=\"",
    "<a href=#",
    "<a href=\"#-1\">",
    "&amp",
    "&#x0;",
    "<!--",
    "-->",
    "data-recipient=\"(\"",
    "data-controller=\"x (99999999)\"",
    "data-controller=\" ()\"",
    "<p>",
    "</p>",
    "text",
    "\u{0}",
    "<script>",
    "</script>",
    "=",
    "<style>",
    "style=\"url(",
    "<![CDATA[",
    "<table><dialog>",
    "</html>",
    "<data data-recipient=",
    "data-personal-data=\",,\"",
    "\u{202e}",
    "<dialog open style=\"color:red;;;:\">",
];

fn mutate(rng: &mut StdRng, html: &str) -> String {
    let mut chars: Vec<char> = html.chars().collect();
    for _ in 0..rng.random_range(1..12) {
        if chars.is_empty() {
            break;
        }
        let at = rng.random_range(0..chars.len());
        match rng.random_range(0..4) {
            0 => {
                chars.truncate(at);
            }
            1 => {
                let end = (at + rng.random_range(1..40)).min(chars.len());
                chars.drain(at..end);
            }
            2 => {
                let frag = FRAGMENTS.choose(rng).unwrap();
                chars.splice(at..at, frag.chars());
            }
            _ => chars[at] = *['<', '>', '"', '=', '&', '\u{0}', '#'].choose(rng).unwrap(),
        }
    }
    chars.into_iter().collect()
}

fn markup_round_trip() -> Verdict {
    let start = Instant::now();
    let reg = registry();
    let vocab = reg.get(2).unwrap();
    let mut rng = StdRng::seed_from_u64(0x3A);
    let mut mismatches = Vec::new();
    let mut emitted = Vec::new();
    for n in 0..200 {
        let spec = random_spec(&mut rng, &reg, vocab, 0.3);
        let html = emit_markup(&spec);
        let Ok(mut parsed) = parse_markup(&html) else {
            mismatches.push(format!("spec {n}: no dialog found"));
            continue;
        };
        parsed.resolve(&reg);
        let back = parsed.to_spec(Some(&reg));
        if anchors(&parsed.requests) != anchors(&spec.requests) {
            mismatches.push(format!("spec {n}: request ids or anchors"));
        }
        if control_shapes(&back) != control_shapes(&spec) {
            mismatches.push(format!("spec {n}: controls"));
        }
        emitted.push(html);
    }

    let mut crashes = 0;
    let quiet = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    for i in 0..1000 {
        let doc = if i % 2 == 0 {
            let base = emitted[i / 2 % emitted.len()].clone();
            mutate(&mut rng, &base)
        } else {
            (0..rng.random_range(0..60))
                .map(|_| *FRAGMENTS.choose(&mut rng).unwrap())
                .collect()
        };
        let survived = catch_unwind(AssertUnwindSafe(|| {
            if let Ok(mut m) = parse_markup(&doc) {
                let _ = m.to_spec(None);
                m.resolve(&reg);
                let _ = lint(&m.to_spec(Some(&reg)));
            }
        }));
        if survived.is_err() {
            crashes += 1;
        }
    }
    std::panic::set_hook(quiet);

    verdict(
        mismatches.is_empty() && crashes == 0,
        format!(
            "200 specs, {} mismatches{}; 1000 malformed documents, {crashes} crashes, {}",
            mismatches.len(),
            mismatches
                .first()
                .map(|m| format!(" ({m})"))
                .unwrap_or_default(),
            secs(start.elapsed())
        ),
    )
}

// ---- explicit gate ----

fn explicit_fixtures(reg: &Registry) -> Vec<(String, DialogueSpec)> {
    let mut health = newsletter();
    health[0].personal_data.push("HealthData".into());
    let mut plain = health[0].clone();
    plain.id = "q2".into();
    plain.personal_data = vec!["Name".into()];
    let mut both = health.clone();
    both.push(plain);
    for r in health.iter_mut().chain(both.iter_mut()) {
        r.validate(reg).unwrap();
    }
    let template = TemplateDocument::from_json(
        &std::fs::read_to_string(fixtures().join("templates/two-layer.json")).unwrap(),
    )
    .unwrap();
    let templated =
        generate_from_template(&template, &health, reg, &UserSettings::default()).unwrap();
    vec![
        (
            "complete, one request".into(),
            generate_complete(&health, reg).unwrap(),
        ),
        (
            "complete, two requests".into(),
            generate_complete(&both, reg).unwrap(),
        ),
        ("two-layer template".into(), templated),
    ]
}

fn explicit_gate() -> Verdict {
    let reg = registry();
    let mut sequences = 0usize;
    let mut leaks = Vec::new();
    let mut confirmable = 0usize;
    for (name, spec) in explicit_fixtures(&reg) {
        if spec.quality != Quality::Explicit {
            leaks.push(format!("{name} is not explicit"));
            continue;
        }
        let confirm: BTreeSet<String> = spec
            .controls()
            .filter(|(_, c)| c.action == ControlAction::ConfirmExplicit)
            .map(|(_, c)| c.control_id.clone())
            .collect();
        let ids: Vec<String> = spec.controls().map(|(_, c)| c.control_id.clone()).collect();
        let mut frontier: Vec<Vec<String>> = vec![Vec::new()];
        for _depth in 0..=4 {
            let mut next = Vec::new();
            for seq in frontier {
                sequences += 1;
                let d = apply_human_decision(&spec, &seq).unwrap();
                let confirmed = seq.iter().any(|s| confirm.contains(s));
                if !d.signal.consent.is_empty() {
                    if confirmed {
                        confirmable += 1;
                    } else {
                        leaks.push(format!("{name}: {seq:?}"));
                    }
                }
                if seq.len() < 4 {
                    for id in &ids {
                        let mut s = seq.clone();
                        s.push(id.clone());
                        next.push(s);
                    }
                }
            }
            frontier = next;
        }
    }
    verdict(
        leaks.is_empty() && confirmable > 0,
        format!(
            "{sequences} sequences over 3 explicit dialogues, {} consent without confirmation{}, {confirmable} confirmed consents",
            leaks.len(),
            leaks.first().map(|l| format!(" ({l})")).unwrap_or_default()
        ),
    )
}

fn main() -> ExitCode {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .unwrap();
    let mut false_negatives = 0;
    let mut probes = 0;
    let results: Vec<(&str, Verdict)> = vec![
        ("codec round-trip", codec_round_trip()),
        ("prefix-code suite", prefix_codes()),
        (
            "matcher oracle equivalence",
            matcher_oracle(&mut false_negatives, &mut probes),
        ),
        ("bloom prefilter", bloom_prefilter(false_negatives, probes)),
        ("end-to-end harness", end_to_end(&rt)),
        ("dialogue generation/lint closure", lint_closure()),
        ("markup round-trip", markup_round_trip()),
        ("explicit-consent gate", explicit_gate()),
    ];

    let mut failed = 0;
    for (name, v) in &results {
        println!(
            "{} {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
