//! Fine-grained hallucination probing for vision-language models.
//!
//! The pipeline runs in stages that communicate through files:
//!
//! 1. [`scene_facts`] defines the fact model (objects, attributes, relation
//!    triples) and the JSON/JSONL interchange format. Facts come either from
//!    an upstream detector dump or from [`caption_extract`].
//! 2. [`qa_gen`] turns a [`FactSet`] into yes-no and wh- probing questions,
//!    including negatives built by swapping in absent objects, values or
//!    predicates.
//! 3. [`dsg`] organizes the questions of one image into dependency trees
//!    rooted at object-existence questions.
//! 4. [`model_client`] sends questions and images to a chat-completions
//!    endpoint and records the answers, resumably.
//! 5. [`eval`] judges answers, gates dependent questions on their roots and
//!    reports accuracy, precision, recall and F1.

pub mod caption_extract;
pub mod dsg;
pub mod eval;
pub mod jsonl;
pub mod lexicon;
pub mod model_client;
pub mod qa_gen;
pub mod scene_facts;
pub mod stats;

pub use caption_extract::{extract_factset, ExtractError};
pub use dsg::{build_forest, propagate, DsgForest, DsgNode};
pub use eval::{evaluate, EvalConfig, EvalReport, MetricBlock, Verdict, VerdictKind};
pub use lexicon::Lexicon;
pub use qa_gen::{generate_all, DistractorVocabulary, GenConfig, QaPair};
pub use scene_facts::{
    load_factset, validate_factset, vocabulary, AttributeFact, AttributeKind, FactSet, ObjectFact,
    RelationFact, Source,
};
