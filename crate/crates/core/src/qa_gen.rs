//! Template-based question generation over a [`FactSet`].
//!
//! Positive questions restate facts (`is there any bike in the image?`,
//! `what color is the umbrella?`). Negative questions swap one slot for
//! something absent from the scene, drawn from a [`DistractorVocabulary`]
//! with every in-scene item removed first; their answers are `no` or a
//! negative pronoun (`none`, `nobody`, `nowhere`).
//!
//! Relation questions follow a fixed dispatch on the predicate:
//!
//! | predicate ends with | question |
//! |---|---|
//! | `ing`, `ed` | `is the {subject} {predicate} the {object} in the image?` |
//! | `over under above near behind on at`, animate object | `who is {predicate} the {object} in the image?` |
//! | same, inanimate object | `what is {predicate} the {subject} in the image?` |
//!
//! and every relation also gets `is there a {subject} {predicate} the {object}?`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lexicon::{progressive, Lexicon};
use crate::scene_facts::{vocabulary, AttributeKind, FactSet, ObjectFact, RelationFact, Source};

const COCO_CATEGORIES: &str = include_str!("../data/coco_categories.json");

const SPATIAL_SUFFIXES: &[&str] = &["over", "under", "above", "near", "behind", "on", "at"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    YesNo,
    Wh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Object,
    Attribute,
    Relation,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Object, Category::Attribute, Category::Relation];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Object => "object",
            Category::Attribute => "attribute",
            Category::Relation => "relation",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerForm {
    Yes,
    No,
    FreeForm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedAnswer {
    pub form: AnswerForm,
    pub text: String,
    #[serde(default)]
    pub alternates: Vec<String>,
}

impl ExpectedAnswer {
    pub fn yes() -> Self {
        ExpectedAnswer {
            form: AnswerForm::Yes,
            text: "yes".into(),
            alternates: Vec::new(),
        }
    }

    pub fn no() -> Self {
        ExpectedAnswer {
            form: AnswerForm::No,
            text: "no".into(),
            alternates: Vec::new(),
        }
    }

    pub fn free(text: impl Into<String>, alternates: Vec<String>) -> Self {
        ExpectedAnswer {
            form: AnswerForm::FreeForm,
            text: text.into(),
            alternates,
        }
    }
}

/// The fact a question is about.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Probe {
    Object {
        name: String,
    },
    Attribute {
        object: String,
        kind: AttributeKind,
        value: String,
    },
    Relation {
        predicate: String,
        subject: String,
        object: String,
    },
}

impl Probe {
    /// Object names this probe mentions, subject first.
    pub fn objects(&self) -> Vec<&str> {
        match self {
            Probe::Object { name } => vec![name],
            Probe::Attribute { object, .. } => vec![object],
            Probe::Relation {
                subject, object, ..
            } => vec![subject, object],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Object,
    Attribute,
    Predicate,
}

/// The absent item a negative question injects.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Distractor {
    pub slot: Slot,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub id: String,
    pub image_id: String,
    pub source: Source,
    pub kind: QuestionKind,
    pub category: Category,
    pub polarity: Polarity,
    pub question: String,
    pub expected: ExpectedAnswer,
    pub probe: Probe,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distractor: Option<Distractor>,
}

pub const NEGATIVE_PRONOUNS: &[&str] = &["none", "nobody", "nowhere"];

impl QaPair {
    /// Checks the structural invariants every generated pair satisfies.
    pub fn check(&self) -> Result<(), String> {
        use AnswerForm::*;
        match (self.polarity, self.kind, self.expected.form) {
            (Polarity::Positive, QuestionKind::YesNo, Yes) => {}
            (Polarity::Negative, QuestionKind::YesNo, No) => {}
            (Polarity::Negative, QuestionKind::Wh, FreeForm)
                if NEGATIVE_PRONOUNS.contains(&self.expected.text.as_str()) => {}
            (Polarity::Positive, QuestionKind::Wh, FreeForm) => {}
            other => return Err(format!("{}: inconsistent answer {other:?}", self.id)),
        }
        if self.expected.form == FreeForm && self.expected.text.split_whitespace().count() > 3 {
            return Err(format!("{}: free-form answer longer than three words", self.id));
        }
        if !self.question.ends_with('?') || self.question[..self.question.len() - 1].contains('?')
        {
            return Err(format!("{}: question must end with a single '?'", self.id));
        }
        if self.polarity == Polarity::Negative && self.distractor.is_none() {
            return Err(format!("{}: negative without distractor", self.id));
        }
        Ok(())
    }

    pub fn is_existence(&self) -> bool {
        self.category == Category::Object
            && self.kind == QuestionKind::YesNo
            && matches!(self.probe, Probe::Object { .. })
    }
}

/// Pools of absent items for negative questions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistractorVocabulary {
    pub objects: BTreeSet<String>,
    pub attributes_by_kind: BTreeMap<AttributeKind, BTreeSet<String>>,
    pub predicates: BTreeSet<String>,
}

impl DistractorVocabulary {
    /// MSCOCO categories, the lexicon's adjectives grouped by kind, counts
    /// 1 to 10, and the lexicon's prepositions plus `-ing` verb forms.
    pub fn from_lexicon(lex: &Lexicon) -> Self {
        let objects: BTreeSet<String> =
            serde_json::from_str(COCO_CATEGORIES).expect("bundled category list");
        let mut attributes_by_kind: BTreeMap<AttributeKind, BTreeSet<String>> = BTreeMap::new();
        for (word, kind) in lex.adjectives() {
            attributes_by_kind
                .entry(kind)
                .or_default()
                .insert(word.to_string());
        }
        attributes_by_kind.insert(AttributeKind::Count, (1..=10).map(|n| n.to_string()).collect());
        let predicates = lex
            .prepositions()
            .map(str::to_string)
            .chain(lex.verbs().map(progressive))
            .collect();
        DistractorVocabulary {
            objects,
            attributes_by_kind,
            predicates,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub seed: u64,
    /// Fraction of the output that is negative, in `[0, 1]`.
    pub negative_ratio: f64,
    pub max_pairs_per_image: Option<usize>,
    /// Ask relation wh-questions about the subject for every spatial
    /// predicate instead of the table's animate/inanimate split.
    pub symmetric_wh: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            negative_ratio: 0.5,
            max_pairs_per_image: None,
            symmetric_wh: false,
        }
    }
}

impl GenConfig {
    /// Number of negatives to pair with `positives` positive questions.
    /// `None` means unbounded (ratio 1).
    pub fn negative_count(&self, positives: usize) -> Option<usize> {
        if self.negative_ratio >= 1.0 {
            return None;
        }
        let n = self.negative_ratio / (1.0 - self.negative_ratio) * positives as f64;
        Some((n + 1e-9).floor() as usize)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenError {
    #[error("distractor pool for {0} is empty after removing in-scene items")]
    ExhaustedVocabulary(&'static str),
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
}

/// Ids are stable across runs and distinct between the two source paths of
/// one image.
fn pair_id(image_id: &str, source: Source, template: &str, fills: &[&str]) -> String {
    let mut h = Sha256::new();
    h.update(image_id.as_bytes());
    h.update([0x1f]);
    h.update(match source {
        Source::Image => "image",
        Source::Caption => "caption",
    });
    h.update([0x1f]);
    h.update(template.as_bytes());
    for f in fills {
        h.update([0x1f]);
        h.update(f.as_bytes());
    }
    h.finalize()[..12]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Independent PRNG stream for one image.
pub fn image_rng(seed: u64, image_id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(image_id.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn article(word: &str) -> &'static str {
    match word.as_bytes().first() {
        Some(b'a' | b'e' | b'i' | b'o' | b'u') => "an",
        _ => "a",
    }
}

struct Builder<'a> {
    fs: &'a FactSet,
}

impl Builder<'_> {
    #[allow(clippy::too_many_arguments)]
    fn pair(
        &self,
        template: &str,
        fills: &[&str],
        kind: QuestionKind,
        category: Category,
        polarity: Polarity,
        question: String,
        expected: ExpectedAnswer,
        probe: Probe,
        distractor: Option<Distractor>,
    ) -> QaPair {
        QaPair {
            id: pair_id(&self.fs.image_id, self.fs.source, template, fills),
            image_id: self.fs.image_id.clone(),
            source: self.fs.source,
            kind,
            category,
            polarity,
            question,
            expected,
            probe,
            distractor,
        }
    }
}

fn existence_pair(b: &Builder, name: &str, polarity: Polarity) -> QaPair {
    let (template, expected, distractor) = match polarity {
        Polarity::Positive => ("exist", ExpectedAnswer::yes(), None),
        Polarity::Negative => (
            "neg_exist",
            ExpectedAnswer::no(),
            Some(Distractor {
                slot: Slot::Object,
                value: name.to_string(),
            }),
        ),
    };
    b.pair(
        template,
        &[name],
        QuestionKind::YesNo,
        Category::Object,
        polarity,
        format!("is there any {name} in the image?"),
        expected,
        Probe::Object {
            name: name.to_string(),
        },
        distractor,
    )
}

/// One positive yes-no existence question per object.
pub fn gen_existence_questions(fs: &FactSet) -> Vec<QaPair> {
    let b = Builder { fs };
    fs.objects
        .iter()
        .map(|o| existence_pair(&b, &o.name, Polarity::Positive))
        .collect()
}

fn attribute_yes_no_question(lex: &Lexicon, object: &str, kind: AttributeKind, value: &str) -> String {
    match kind {
        AttributeKind::Count if value == "1" => format!("is there 1 {object} in the image?"),
        AttributeKind::Count => format!("are there {value} {} in the image?", lex.pluralize(object)),
        _ => format!("is the {object} {value}?"),
    }
}

fn attribute_wh_question(lex: &Lexicon, object: &str, kind: AttributeKind) -> String {
    match kind {
        AttributeKind::Color => format!("what color is the {object}?"),
        AttributeKind::Count => format!("how many {} are in the image?", lex.pluralize(object)),
        AttributeKind::Size => format!("what size is the {object}?"),
        AttributeKind::Material => format!("what is the {object} made of?"),
        AttributeKind::State => format!("what state is the {object} in?"),
        AttributeKind::Other => format!("what does the {object} look like?"),
    }
}

fn count_alternates(lex: &Lexicon, value: &str) -> Vec<String> {
    value
        .parse::<u32>()
        .map(|n| lex.numeral_words(n))
        .unwrap_or_default()
}

/// Yes-no questions for every attribute and one wh-question per attribute
/// kind of each object.
pub fn gen_attribute_questions(fs: &FactSet, lex: &Lexicon) -> Vec<QaPair> {
    let b = Builder { fs };
    let mut out = Vec::new();
    for obj in &fs.objects {
        for attr in &obj.attributes {
            out.push(b.pair(
                &format!("attr_yn_{}", attr.kind),
                &[&obj.name, &attr.value],
                QuestionKind::YesNo,
                Category::Attribute,
                Polarity::Positive,
                attribute_yes_no_question(lex, &obj.name, attr.kind, &attr.value),
                ExpectedAnswer::yes(),
                Probe::Attribute {
                    object: obj.name.clone(),
                    kind: attr.kind,
                    value: attr.value.clone(),
                },
                None,
            ));
        }
        out.extend(attribute_wh_pairs(&b, lex, obj));
    }
    out
}

fn attribute_wh_pairs(b: &Builder, lex: &Lexicon, obj: &ObjectFact) -> Vec<QaPair> {
    let mut kinds: Vec<AttributeKind> = Vec::new();
    for attr in &obj.attributes {
        if !kinds.contains(&attr.kind) {
            kinds.push(attr.kind);
        }
    }
    let mut out = Vec::new();
    for kind in kinds {
        let values: Vec<&str> = obj
            .attributes
            .iter()
            .filter(|a| a.kind == kind && a.value.split_whitespace().count() <= 3)
            .map(|a| a.value.as_str())
            .collect();
        let Some((first, rest)) = values.split_first() else { continue };
        let mut alternates: Vec<String> = rest.iter().map(|s| s.to_string()).collect();
        if kind == AttributeKind::Count {
            for v in &values {
                alternates.extend(count_alternates(lex, v));
            }
        }
        out.push(b.pair(
            &format!("attr_wh_{kind}"),
            &[&obj.name],
            QuestionKind::Wh,
            Category::Attribute,
            Polarity::Positive,
            attribute_wh_question(lex, &obj.name, kind),
            ExpectedAnswer::free(*first, alternates),
            Probe::Attribute {
                object: obj.name.clone(),
                kind,
                value: first.to_string(),
            },
            None,
        ));
    }
    out
}

fn is_spatial(predicate: &str) -> bool {
    SPATIAL_SUFFIXES.iter().any(|s| predicate.ends_with(s))
}

fn is_verbal(predicate: &str) -> bool {
    predicate.ends_with("ing") || predicate.ends_with("ed")
}

fn relation_probe(rel: &RelationFact) -> Probe {
    Probe::Relation {
        predicate: rel.predicate.clone(),
        subject: rel.subject.clone(),
        object: rel.object.clone(),
    }
}

fn there_is_question(subject: &str, predicate: &str, object: &str) -> String {
    format!("is there {} {subject} {predicate} the {object}?", article(subject))
}

/// Relation questions for every triple, dispatched on the predicate.
pub fn gen_relation_questions(fs: &FactSet, lex: &Lexicon) -> Vec<QaPair> {
    gen_relation_questions_with(fs, lex, false)
}

pub fn gen_relation_questions_with(fs: &FactSet, lex: &Lexicon, symmetric_wh: bool) -> Vec<QaPair> {
    let b = Builder { fs };
    let mut out = Vec::new();
    for rel in &fs.relations {
        let (s, p, o) = (rel.subject.as_str(), rel.predicate.as_str(), rel.object.as_str());
        if is_verbal(p) {
            out.push(b.pair(
                "rel_yn_verb",
                &[s, p, o],
                QuestionKind::YesNo,
                Category::Relation,
                Polarity::Positive,
                format!("is the {s} {p} the {o} in the image?"),
                ExpectedAnswer::yes(),
                relation_probe(rel),
                None,
            ));
        } else if is_spatial(p) {
            let (template, question, answer) = if symmetric_wh {
                let pronoun = if lex.is_living(s) { "who" } else { "what" };
                (
                    "rel_wh_subject",
                    format!("{pronoun} is {p} the {o} in the image?"),
                    s,
                )
            } else if lex.is_living(o) {
                ("rel_wh_who", format!("who is {p} the {o} in the image?"), s)
            } else {
                ("rel_wh_what", format!("what is {p} the {s} in the image?"), o)
            };
            if answer.split_whitespace().count() <= 3 {
                out.push(b.pair(
                    template,
                    &[s, p, o],
                    QuestionKind::Wh,
                    Category::Relation,
                    Polarity::Positive,
                    question,
                    ExpectedAnswer::free(answer, Vec::new()),
                    relation_probe(rel),
                    None,
                ));
            }
        }
        out.push(b.pair(
            "rel_yn_there",
            &[s, p, o],
            QuestionKind::YesNo,
            Category::Relation,
            Polarity::Positive,
            there_is_question(s, p, o),
            ExpectedAnswer::yes(),
            relation_probe(rel),
            None,
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NegKind {
    Existence,
    Attribute,
    Relation,
    Wh,
}

fn pick<'a, R: Rng>(rng: &mut R, items: &'a [String]) -> &'a str {
    &items[rng.random_range(0..items.len())]
}

/// Negative counterparts built by slot substitution.
///
/// `positives` is the number of positive questions the negatives balance;
/// the output holds `ratio / (1 - ratio) * positives` pairs (rounded down)
/// unless the distinct substitutions run out first.
pub fn gen_negative_questions(
    fs: &FactSet,
    lex: &Lexicon,
    vocab: &DistractorVocabulary,
    cfg: &GenConfig,
    positives: usize,
) -> Result<Vec<QaPair>, GenError> {
    let target = cfg.negative_count(positives);
    if target == Some(0) {
        return Ok(Vec::new());
    }
    let in_scene = vocabulary(fs);
    // a distractor must not name anything in the scene, whatever its slot
    let scene_words: BTreeSet<&String> = in_scene
        .objects
        .iter()
        .chain(&in_scene.attributes)
        .chain(&in_scene.predicates)
        .collect();
    let absent = |pool: &BTreeSet<String>| -> Vec<String> {
        pool.iter().filter(|w| !scene_words.contains(w)).cloned().collect()
    };
    let absent_objects = absent(&vocab.objects);
    if absent_objects.is_empty() {
        return Err(GenError::ExhaustedVocabulary("objects"));
    }
    let absent_predicates = absent(&vocab.predicates);
    let mut attribute_slots: Vec<(&ObjectFact, AttributeKind, Vec<String>)> = Vec::new();
    for obj in &fs.objects {
        for attr in &obj.attributes {
            if attribute_slots
                .iter()
                .any(|(o, k, _)| o.name == obj.name && *k == attr.kind)
            {
                continue;
            }
            let pool: Vec<String> = vocab
                .attributes_by_kind
                .get(&attr.kind)
                .map(&absent)
                .unwrap_or_default();
            if !pool.is_empty() {
                attribute_slots.push((obj, attr.kind, pool));
            }
        }
    }
    let who_verbs: Vec<String> = in_scene
        .predicates
        .iter()
        .chain(&vocab.predicates)
        .filter(|p| p.ends_with("ing"))
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut kinds = vec![NegKind::Existence];
    if !attribute_slots.is_empty() {
        kinds.push(NegKind::Attribute);
    }
    if !fs.relations.is_empty() {
        kinds.push(NegKind::Relation);
    }
    kinds.push(NegKind::Wh);

    // Upper bound on distinct substitutions, so ratio 1 terminates.
    let capacity = absent_objects.len() * (3 + fs.relations.len())
        + attribute_slots.iter().map(|(_, _, p)| p.len()).sum::<usize>()
        + absent_predicates.len() * fs.relations.len();
    let target = target.unwrap_or(capacity).min(capacity);

    let b = Builder { fs };
    let mut rng = image_rng(cfg.seed, &fs.image_id);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let max_attempts = 20 * target + 100;
    let mut attempts = 0;
    while out.len() < target && attempts < max_attempts {
        let kind = kinds[attempts % kinds.len()];
        attempts += 1;
        let pair = match kind {
            NegKind::Existence => {
                existence_pair(&b, pick(&mut rng, &absent_objects), Polarity::Negative)
            }
            NegKind::Attribute => {
                let (obj, kind, pool) = &attribute_slots[rng.random_range(0..attribute_slots.len())];
                let wrong = pick(&mut rng, pool);
                b.pair(
                    &format!("neg_attr_{kind}"),
                    &[&obj.name, wrong],
                    QuestionKind::YesNo,
                    Category::Attribute,
                    Polarity::Negative,
                    attribute_yes_no_question(lex, &obj.name, *kind, wrong),
                    ExpectedAnswer::no(),
                    Probe::Attribute {
                        object: obj.name.clone(),
                        kind: *kind,
                        value: wrong.to_string(),
                    },
                    Some(Distractor {
                        slot: Slot::Attribute,
                        value: wrong.to_string(),
                    }),
                )
            }
            NegKind::Relation => {
                let rel = &fs.relations[rng.random_range(0..fs.relations.len())];
                let swap_predicate = !absent_predicates.is_empty() && rng.random_bool(0.5);
                let (probe, distractor, template) = if swap_predicate {
                    let p = pick(&mut rng, &absent_predicates);
                    (
                        RelationFact::new(p, rel.subject.clone(), rel.object.clone()),
                        Distractor {
                            slot: Slot::Predicate,
                            value: p.to_string(),
                        },
                        "neg_rel_predicate",
                    )
                } else {
                    let o = pick(&mut rng, &absent_objects);
                    (
                        RelationFact::new(rel.predicate.clone(), rel.subject.clone(), o),
                        Distractor {
                            slot: Slot::Object,
                            value: o.to_string(),
                        },
                        "neg_rel_object",
                    )
                };
                b.pair(
                    template,
                    &[&probe.subject, &probe.predicate, &probe.object],
                    QuestionKind::YesNo,
                    Category::Relation,
                    Polarity::Negative,
                    there_is_question(&probe.subject, &probe.predicate, &probe.object),
                    ExpectedAnswer::no(),
                    relation_probe(&probe),
                    Some(distractor),
                )
            }
            NegKind::Wh => {
                let absent = pick(&mut rng, &absent_objects).to_string();
                let choices = if who_verbs.is_empty() { 2 } else { 3 };
                let (template, fills, question, answer, category) = match rng.random_range(0..choices) {
                    0 => (
                        "neg_wh_where",
                        vec![absent.clone()],
                        format!("where is the {absent} in the image?"),
                        "nowhere",
                        Category::Object,
                    ),
                    1 => (
                        "neg_wh_color",
                        vec![absent.clone()],
                        format!("what color is the {absent}?"),
                        "none",
                        Category::Attribute,
                    ),
                    _ => {
                        let verb = pick(&mut rng, &who_verbs).to_string();
                        (
                            "neg_wh_who",
                            vec![verb.clone(), absent.clone()],
                            format!("who is {verb} the {absent} in the image?"),
                            "nobody",
                            Category::Relation,
                        )
                    }
                };
                let fills: Vec<&str> = fills.iter().map(String::as_str).collect();
                b.pair(
                    template,
                    &fills,
                    QuestionKind::Wh,
                    category,
                    Polarity::Negative,
                    question,
                    ExpectedAnswer::free(answer, Vec::new()),
                    Probe::Object {
                        name: absent.clone(),
                    },
                    Some(Distractor {
                        slot: Slot::Object,
                        value: absent,
                    }),
                )
            }
        };
        if seen.insert(pair.id.clone()) {
            out.push(pair);
        }
    }
    Ok(out)
}

/// All questions for one fact set, positives first.
///
/// Duplicates (by id) are dropped, and when a cap is set the output keeps
/// the earliest pairs in the order existence, attribute, relation, negative.
pub fn generate_all(
    fs: &FactSet,
    lex: &Lexicon,
    vocab: &DistractorVocabulary,
    cfg: &GenConfig,
) -> Result<Vec<QaPair>, GenError> {
    if !(0.0..=1.0).contains(&cfg.negative_ratio) {
        return Err(GenError::InvalidConfig(format!(
            "negative_ratio {} is outside [0, 1]",
            cfg.negative_ratio
        )));
    }
    let mut seen = HashSet::new();
    let mut out: Vec<QaPair> = gen_existence_questions(fs)
        .into_iter()
        .chain(gen_attribute_questions(fs, lex))
        .chain(gen_relation_questions_with(fs, lex, cfg.symmetric_wh))
        .filter(|p| seen.insert(p.id.clone()))
        .collect();
    let negatives = gen_negative_questions(fs, lex, vocab, cfg, out.len())?;
    out.extend(negatives.into_iter().filter(|p| seen.insert(p.id.clone())));
    if let Some(cap) = cfg.max_pairs_per_image {
        out.truncate(cap);
    }
    Ok(out)
}
