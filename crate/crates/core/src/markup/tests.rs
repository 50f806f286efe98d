use std::path::PathBuf;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

use super::*;
use crate::dialogue::corpus::random_spec;
use crate::dialogue::{generate_complete, lint, LintFinding, LintRule};
use crate::signal::RequestDocument;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn registry() -> Registry {
    Registry::load(fixtures().join("registry.json")).unwrap()
}

fn page() -> String {
    std::fs::read_to_string(fixtures().join("markup/newsletter.html")).unwrap()
}

fn sorted(mut f: Vec<LintFinding>) -> Vec<LintFinding> {
    f.sort_by(|a, b| (a.rule, &a.location).cmp(&(b.rule, &b.location)));
    f
}

#[test]
fn fixture_page() {
    let mut m = parse_markup(&page()).unwrap();
    assert_eq!(m.layer_count, 2);
    assert_eq!(m.requests.len(), 1);
    let r = &m.requests[0];
    assert_eq!(r.purpose, "SendNewsletters");
    assert_eq!(r.parent.as_deref(), Some("Marketing"));
    assert_eq!(r.personal_data, vec!["EmailAddress", "Name"]);
    assert_eq!(r.controller.number, 12);
    assert_eq!(r.recipients[0].name, "MailDispatch GmbH");
    assert_eq!(r.vocab, UNREGISTERED);
    assert_eq!(m.style.get("color").map(String::as_str), Some("#222"));
    assert!(!m.style.contains_key("background-image"));

    let by_id = |id: &str| {
        m.controls
            .iter()
            .find(|c| c.control.control_id == id)
            .unwrap()
            .clone()
    };
    assert_eq!(by_id("details").layer, 0);
    assert_eq!(by_id("details").control.target_layer, Some(1));
    assert_eq!(by_id("back").layer, 1);
    assert_eq!(by_id("toggle-q1").control.label, "Newsletter");
    assert_eq!(by_id("accept").control.bound_requests, vec!["q1"]);
    assert!(by_id("close").control.bound_requests.is_empty());
    assert!(m
        .notices
        .iter()
        .any(|n| n.layer == 1 && n.field == NoticeField::Controller));

    m.resolve(&registry());
    assert_eq!(m.requests[0].vocab, 2);
    let spec = m.to_spec(Some(&registry()));
    assert_eq!(spec.quality, Quality::Regular);
    assert!(lint(&spec).is_empty(), "{:?}", lint(&spec));
}

#[test]
fn no_dialog() {
    assert_eq!(
        parse_markup("<p>nothing here</p>"),
        Err(MarkupError::NoDialog)
    );
    assert_eq!(parse_markup(""), Err(MarkupError::NoDialog));
}

#[test]
fn checked_toggle_is_preselected() {
    let html = r#"<dialog>
      <section data-adpc-request-id="q1" data-purpose="Analytics"></section>
      <input type="checkbox" id="t1" data-toggle-for="q1" checked>
      <button id="yes" data-decision="consent">Yes</button>
      <button id="no" data-decision="refuse">No</button>
      <button id="x" data-decision="dismiss">Close</button>
    </dialog>"#;
    let spec = parse_markup(html).unwrap().to_spec(Some(&registry()));
    let findings = lint(&spec);
    assert_eq!(findings.len(), 1, "{findings:?}");
    assert_eq!(findings[0].rule, LintRule::L1);
    assert_eq!(findings[0].location, "layers[0].controls[t1]");
}

#[test]
fn confirm_button_makes_explicit() {
    let html = r#"<dialog><section data-adpc-request-id="q1" data-purpose="Analytics" data-personal-data="HealthData"></section>
      <button id="c" data-decision="confirm-explicit">I confirm</button>
      <button id="a" data-decision="consent">Yes</button></dialog>"#;
    let spec = parse_markup(html).unwrap().to_spec(Some(&registry()));
    assert_eq!(spec.quality, Quality::Explicit);
    assert!(spec.requests[0].special_category);
    let rules: Vec<LintRule> = lint(&spec).iter().map(|f| f.rule).collect();
    assert!(!rules.contains(&LintRule::L6));
    assert!(rules.contains(&LintRule::L2));
}

#[test]
fn warnings_not_errors() {
    let html = r#"<dialog><div data-adpc-request-id="q1" data-purpose="Analytics" data-colour="red">
      <p data-controller="nobody">x</p></div>
      <button data-decision="consent">ok</button>
      <button id="b" data-decision="maybe">?</button>
      <input id="t" data-toggle-for="q9"></dialog>
      <p data-purpose="Marketing">outside</p>"#;
    let m = parse_markup(html).unwrap();
    let w = m.warnings.join("\n");
    assert!(w.contains("data-colour"), "{w}");
    assert!(w.contains("not `Name (number)`"), "{w}");
    assert!(w.contains("without an id"), "{w}");
    assert!(w.contains("unknown decision"), "{w}");
    assert!(w.contains("unknown request `q9`"), "{w}");
    assert_eq!(m.controls.len(), 1);
    assert_eq!(m.controls[0].control.control_id, "button-1");
}

#[test]
fn emitted_newsletter() {
    let reg = registry();
    let doc: RequestDocument = serde_json::from_str(
        &std::fs::read_to_string(fixtures().join("requests/newsletter.json")).unwrap(),
    )
    .unwrap();
    let mut reqs = doc.requests();
    reqs[0].validate(&reg).unwrap();
    let spec = generate_complete(&reqs, &reg).unwrap();
    let html = emit_markup(&spec);
    assert!(html.contains(
        r#"data-adpc-request-id="q1" data-purpose="SendNewsletters" data-parent="Marketing""#
    ));
    assert!(html.contains(r#"<data data-recipient="MailDispatch GmbH (77)"></data>"#));
    assert!(html.contains(r#"data-toggle-for="q1"> "#));
    assert!(html.contains(r#"data-decision="dismiss""#));
    let back = parse_markup(&html).unwrap().to_spec(Some(&reg));
    assert_eq!(
        back.requests[0].personal_data,
        spec.requests[0].personal_data
    );
    assert_eq!(back.requests[0].recipients, spec.requests[0].recipients);
    assert_eq!(lint(&back), lint(&spec));
}

#[test]
fn text_is_escaped() {
    let reg = registry();
    let mut rng = StdRng::seed_from_u64(3);
    let mut spec = random_spec(&mut rng, &reg, reg.get(2).unwrap(), 0.0);
    let c = spec.layers[0]
        .controls
        .iter_mut()
        .find(|c| c.action == ControlAction::Dismiss);
    if let Some(c) = c {
        c.label = "<script>alert(\"x\")</script> & co".into();
    }
    let html = emit_markup(&spec);
    assert!(!html.contains("<script>"));
    let back = parse_markup(&html).unwrap();
    assert!(back.controls.iter().any(|c| c
        .control
        .label
        .contains("<script>alert(\"x\")</script> & co")));
}

#[test]
fn round_trip_preserves_lint() {
    let reg = registry();
    let vocab = reg.get(2).unwrap();
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..60 {
        let spec = random_spec(&mut rng, &reg, vocab, 0.3);
        let html = emit_markup(&spec);
        let back = parse_markup(&html).unwrap().to_spec(Some(&reg));
        assert_eq!(sorted(lint(&back)), sorted(lint(&spec)), "{html}");
        assert_eq!(back.layers.len(), spec.layers.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn malformed_html_never_panics(parts in prop::collection::vec(prop::sample::select(vec![
        "<dialog", "<dialog>", "</dialog>", "<section data-adpc-request-id=\"q1\"", ">", "\"", "data-purpose=",
        "<button data-decision=consent>", "<input data-toggle-for=q1 checked", "<a href=#", "&amp", "<!--", "-->",
        "data-recipient=\"(\"", "data-controller=\"x (99999999)\"", "<p>", "text", "\u{0}", "<script>", "=",
    ]), 0..40)) {
        let html: String = parts.concat();
        if let Ok(m) = parse_markup(&html) {
            let _ = m.to_spec(Some(&registry()));
            let _ = m.to_spec(None);
        }
    }
}
