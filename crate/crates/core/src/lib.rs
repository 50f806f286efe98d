//! Consent-signal engine.
//!
//! The crate covers the whole loop between a website that asks for consent
//! and a user agent that answers on the user's behalf:
//!
//! * [`taxonomy`] loads hierarchical purpose vocabularies, flattens them and
//!   builds prefix codebooks, and keeps the registry of vocabularies with
//!   cross-vocabulary mappings.
//! * [`policy`] encodes TCF-like consent policies as bit strings and compact
//!   header words.
//! * [`matching`] resolves consent requests against broad user preferences by
//!   hierarchical subsumption, with a bloom-filter prefilter.
//! * [`signal`] is the HTTP wire protocol plus the simulated website and user
//!   agent services.
//! * [`dialogue`] generates consent dialogues user-side and lints them for
//!   dark patterns.
//! * [`markup`] reads and writes the HTML `data-*` fallback markup.

pub mod dialogue;
pub mod markup;
pub mod matching;
pub mod policy;
pub mod signal;
pub mod taxonomy;

pub use dialogue::{
    apply_human_decision, generate_choices_only, generate_complete, generate_from_template, lint,
    Control, ControlAction, DialogueError, DialogueSpec, HumanDecision, Layer, LintFinding,
    LintRule, NoticeElement, NoticeField, Quality, Severity, SourceMode,
};
pub use markup::{emit_markup, parse_markup, MarkupDialogue, MarkupError};
pub use matching::{
    build_prefilter, match_request, prefilter_check, Decision, DecisionStore, Effect, MatchError,
    Outcome, PreferenceRule, PreferenceSet, PrefilterPair, PrefilterResult,
};
pub use policy::{CodecError, CompactWord, PolicyBitString, PolicyDocument};
pub use signal::{
    ConsentRequest, DecisionSignal, Party, RequestDocument, SignalError, SignalFormat,
};
pub use taxonomy::{ConceptKind, ConceptRef, Registry, TaxonomyError, Vocabulary};
