//! Shared inputs for the benches.

use std::path::PathBuf;

use adpc_core::signal::RequestDocument;
use adpc_core::{ConsentRequest, Registry};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn registry() -> Registry {
    Registry::load(fixtures().join("registry.json")).expect("fixture registry")
}

/// Validated requests from `fixtures/requests/<name>`.
pub fn requests(name: &str) -> Vec<ConsentRequest> {
    let reg = registry();
    let text =
        std::fs::read_to_string(fixtures().join("requests").join(name)).expect("request fixture");
    let doc: RequestDocument = serde_json::from_str(&text).expect("request document");
    doc.requests()
        .into_iter()
        .map(|mut r| {
            let _ = r.validate(&reg);
            r
        })
        .collect()
}
