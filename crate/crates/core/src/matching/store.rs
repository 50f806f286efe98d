use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{Decision, MatchError, Outcome};

/// One line of the decision log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreEntry {
    pub request_id: String,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_index: Option<usize>,
    pub timestamp: u64,
}

/// Append-only decision log, optionally mirrored to a JSON-lines file.
#[derive(Debug, Default)]
pub struct DecisionStore {
    entries: Vec<StoreEntry>,
    file: Option<PathBuf>,
}

impl DecisionStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Open (or create on first append) a JSON-lines log.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, MatchError> {
        let path = path.as_ref().to_owned();
        let mut entries = Vec::new();
        if path.exists() {
            for line in BufReader::new(std::fs::File::open(&path)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                entries.push(serde_json::from_str(&line)?);
            }
        }
        Ok(DecisionStore {
            entries,
            file: Some(path),
        })
    }

    pub fn from_entries(entries: Vec<StoreEntry>) -> Self {
        DecisionStore {
            entries,
            file: None,
        }
    }

    pub fn entries(&self) -> &[StoreEntry] {
        &self.entries
    }

    pub fn append(&mut self, entry: StoreEntry) -> Result<(), MatchError> {
        if let Some(path) = &self.file {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(f, "{}", serde_json::to_string(&entry)?)?;
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn record(&mut self, decision: &Decision) -> Result<(), MatchError> {
        self.append(StoreEntry {
            request_id: decision.request_id.clone(),
            outcome: decision.outcome,
            rule_index: decision.matched_rule,
            timestamp: now(),
        })
    }

    /// True when the latest non-prompt entry for `request_id` is a Consent.
    pub fn consent_in_force(&self, request_id: &str) -> bool {
        self.entries
            .iter()
            .rev()
            .filter(|e| e.request_id == request_id && e.outcome != Outcome::Prompt)
            .map(|e| e.outcome)
            .next()
            == Some(Outcome::Consent)
    }
}

pub(crate) fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, outcome: Outcome) -> StoreEntry {
        StoreEntry {
            request_id: id.into(),
            outcome,
            rule_index: None,
            timestamp: 1,
        }
    }

    #[test]
    fn latest_decision_counts() {
        let mut s = DecisionStore::in_memory();
        assert!(!s.consent_in_force("q1"));
        s.append(entry("q1", Outcome::Consent)).unwrap();
        s.append(entry("q1", Outcome::Prompt)).unwrap();
        assert!(s.consent_in_force("q1"));
        assert!(!s.consent_in_force("q2"));
        s.append(entry("q1", Outcome::Withdraw)).unwrap();
        assert!(!s.consent_in_force("q1"));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let mut s = DecisionStore::open(&path).unwrap();
        s.append(entry("q1", Outcome::Consent)).unwrap();
        s.append(StoreEntry {
            rule_index: Some(3),
            ..entry("q2", Outcome::Object)
        })
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text
            .lines()
            .next()
            .unwrap()
            .contains(r#""outcome":"Consent""#));
        let back = DecisionStore::open(&path).unwrap();
        assert_eq!(back.entries(), s.entries());
        assert!(back.consent_in_force("q1"));
    }
}
