//! Closed-world word lists driving caption tagging and question templates.
//!
//! A lexicon file is JSON with six sections:
//!
//! ```json
//! {
//!   "nouns": ["man", "umbrella", "traffic light"],
//!   "adjectives": {"yellow": "color", "wooden": "material"},
//!   "numerals": {"two": 2},
//!   "prepositions": ["on", "near", "next to"],
//!   "verbs": ["hold", "ride"],
//!   "living": ["man"]
//! }
//! ```
//!
//! Verbs are listed as lemmas; their `-s`, `-ing` and `-ed` forms are derived.
//! An optional `irregular_plurals` map (plural to singular) extends the
//! built-in table.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::scene_facts::AttributeKind;

const BUNDLED_LEXICON: &str = include_str!("../data/lexicon.json");

const IRREGULAR_PLURALS: &[(&str, &str)] = &[
    ("men", "man"),
    ("women", "woman"),
    ("people", "person"),
    ("children", "child"),
    ("mice", "mouse"),
    ("geese", "goose"),
    ("teeth", "tooth"),
    ("feet", "foot"),
    ("knives", "knife"),
    ("leaves", "leaf"),
    ("shelves", "shelf"),
    ("calves", "calf"),
    ("wolves", "wolf"),
    ("loaves", "loaf"),
    ("halves", "half"),
    ("sheep", "sheep"),
    ("fish", "fish"),
    ("deer", "deer"),
    ("scissors", "scissors"),
];

const IRREGULAR_VERBS: &[(&str, &str)] = &[
    ("held", "hold"),
    ("sat", "sit"),
    ("stood", "stand"),
    ("ate", "eat"),
    ("rode", "ride"),
    ("wore", "wear"),
    ("flew", "fly"),
    ("threw", "throw"),
    ("caught", "catch"),
    ("drove", "drive"),
    ("fed", "feed"),
    ("laid", "lay"),
    ("swung", "swing"),
    ("hung", "hang"),
    ("drank", "drink"),
];

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot read lexicon {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed lexicon: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("inconsistent lexicon: {}", .0.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("; "))]
    Inconsistent(Vec<LexiconConflict>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LexiconConflict {
    /// A word appears in two classes that must not overlap.
    Overlap {
        word: String,
        first: &'static str,
        second: &'static str,
    },
    LivingNotNoun(String),
}

impl fmt::Display for LexiconConflict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LexiconConflict::Overlap {
                word,
                first,
                second,
            } => write!(f, "{word:?} is listed as both {first} and {second}"),
            LexiconConflict::LivingNotNoun(w) => write!(f, "living entry {w:?} is not a noun"),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LexiconFile {
    nouns: Vec<String>,
    adjectives: BTreeMap<String, String>,
    numerals: BTreeMap<String, u32>,
    prepositions: Vec<String>,
    verbs: Vec<String>,
    living: Vec<String>,
    #[serde(default)]
    irregular_plurals: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    nouns: BTreeSet<String>,
    adjectives: BTreeMap<String, AttributeKind>,
    numerals: BTreeMap<String, u32>,
    prepositions: BTreeSet<String>,
    verbs: BTreeSet<String>,
    living: BTreeSet<String>,
    plural_to_singular: BTreeMap<String, String>,
    singular_to_plural: BTreeMap<String, String>,
    verb_forms: HashMap<String, String>,
    max_preposition_words: usize,
}

impl Lexicon {
    /// The lexicon shipped with the crate: MSCOCO object categories plus
    /// common caption nouns, attributes and predicates.
    pub fn bundled() -> Lexicon {
        Lexicon::from_json(BUNDLED_LEXICON).expect("bundled lexicon is consistent")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Lexicon, LexiconError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Lexicon::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Lexicon, LexiconError> {
        let file: LexiconFile = serde_json::from_str(text)?;
        let norm = |s: &String| crate::scene_facts::normalize_text(s);
        let mut plural_to_singular: BTreeMap<String, String> = IRREGULAR_PLURALS
            .iter()
            .map(|(p, s)| (p.to_string(), s.to_string()))
            .collect();
        plural_to_singular.extend(file.irregular_plurals.iter().map(|(p, s)| (norm(p), norm(s))));

        let lex = Lexicon::build(
            file.nouns.iter().map(norm).collect(),
            file.adjectives
                .iter()
                .map(|(w, k)| (norm(w), AttributeKind::from_label(k)))
                .collect(),
            file.numerals.iter().map(|(w, n)| (norm(w), *n)).collect(),
            file.prepositions.iter().map(norm).collect(),
            file.verbs.iter().map(norm).collect(),
            file.living.iter().map(norm).collect(),
            plural_to_singular,
        );
        let conflicts = lex.conflicts();
        if conflicts.is_empty() {
            Ok(lex)
        } else {
            Err(LexiconError::Inconsistent(conflicts))
        }
    }

    fn build(
        nouns: BTreeSet<String>,
        adjectives: BTreeMap<String, AttributeKind>,
        numerals: BTreeMap<String, u32>,
        prepositions: BTreeSet<String>,
        verbs: BTreeSet<String>,
        living: BTreeSet<String>,
        plural_to_singular: BTreeMap<String, String>,
    ) -> Lexicon {
        let singular_to_plural = plural_to_singular
            .iter()
            .map(|(p, s)| (s.clone(), p.clone()))
            .collect();
        let mut verb_forms = HashMap::new();
        for lemma in &verbs {
            for form in [
                lemma.clone(),
                third_person(lemma),
                progressive(lemma),
                past(lemma),
            ] {
                verb_forms.entry(form).or_insert_with(|| lemma.clone());
            }
        }
        for (form, lemma) in IRREGULAR_VERBS {
            if verbs.contains(*lemma) {
                verb_forms
                    .entry(form.to_string())
                    .or_insert_with(|| lemma.to_string());
            }
        }
        let max_preposition_words = prepositions
            .iter()
            .map(|p| p.split(' ').count())
            .max()
            .unwrap_or(1);
        Lexicon {
            nouns,
            adjectives,
            numerals,
            prepositions,
            verbs,
            living,
            plural_to_singular,
            singular_to_plural,
            verb_forms,
            max_preposition_words,
        }
    }

    /// Word classes that must stay disjoint. Verbs may share words with
    /// adjectives (participles) but with nothing else.
    pub fn conflicts(&self) -> Vec<LexiconConflict> {
        let mut out = Vec::new();
        let classes: [(&'static str, Vec<&String>); 5] = [
            ("noun", self.nouns.iter().collect()),
            ("adjective", self.adjectives.keys().collect()),
            ("numeral", self.numerals.keys().collect()),
            ("preposition", self.prepositions.iter().collect()),
            ("verb", self.verbs.iter().collect()),
        ];
        for (i, (first, a)) in classes.iter().enumerate() {
            for (second, b) in &classes[i + 1..] {
                if *first == "adjective" && *second == "verb" {
                    continue;
                }
                let b: BTreeSet<&String> = b.iter().copied().collect();
                for word in a.iter().filter(|w| b.contains(*w)) {
                    out.push(LexiconConflict::Overlap {
                        word: (*word).clone(),
                        first,
                        second,
                    });
                }
            }
        }
        for w in self.living.iter().filter(|w| !self.nouns.contains(*w)) {
            out.push(LexiconConflict::LivingNotNoun(w.clone()));
        }
        out
    }

    pub fn nouns(&self) -> impl Iterator<Item = &str> {
        self.nouns.iter().map(String::as_str)
    }

    pub fn is_noun(&self, lemma: &str) -> bool {
        self.nouns.contains(lemma)
    }

    /// Adds a noun lemma. Returns false when it was already present.
    pub fn add_noun(&mut self, lemma: impl Into<String>) -> bool {
        self.nouns.insert(lemma.into())
    }

    /// Maps a surface word to its singular noun lemma, if the lexicon knows it.
    pub fn noun_lemma(&self, word: &str) -> Option<String> {
        if self.nouns.contains(word) {
            return Some(word.to_string());
        }
        singular_candidates(word, &self.plural_to_singular)
            .into_iter()
            .find(|c| self.nouns.contains(c))
    }

    /// Lemma of a two-word compound noun such as `traffic light`, matching
    /// plural heads (`traffic lights`) too.
    pub fn compound_lemma(&self, modifier: &str, head: &str) -> Option<String> {
        let direct = format!("{modifier} {head}");
        if self.nouns.contains(&direct) {
            return Some(direct);
        }
        singular_candidates(head, &self.plural_to_singular)
            .into_iter()
            .map(|c| format!("{modifier} {c}"))
            .find(|c| self.nouns.contains(c))
    }

    /// Plural form of a (possibly multi-word) noun; only the head word inflects.
    pub fn pluralize(&self, name: &str) -> String {
        let (head_start, head) = match name.rfind(' ') {
            Some(i) => (i + 1, &name[i + 1..]),
            None => (0, name),
        };
        let plural = match self.singular_to_plural.get(head) {
            Some(p) => p.clone(),
            None => regular_plural(head),
        };
        format!("{}{}", &name[..head_start], plural)
    }

    pub fn adjective_kind(&self, word: &str) -> Option<AttributeKind> {
        self.adjectives.get(word).copied()
    }

    pub fn adjectives(&self) -> impl Iterator<Item = (&str, AttributeKind)> {
        self.adjectives.iter().map(|(w, k)| (w.as_str(), *k))
    }

    /// Integer value of a numeral word or a run of ASCII digits.
    pub fn numeral_value(&self, word: &str) -> Option<u32> {
        if !word.is_empty() && word.bytes().all(|b| b.is_ascii_digit()) {
            return word.parse().ok();
        }
        self.numerals.get(word).copied()
    }

    /// Numeral words spelling `n`, e.g. `["two"]` for 2.
    pub fn numeral_words(&self, n: u32) -> Vec<String> {
        self.numerals
            .iter()
            .filter(|(_, v)| **v == n)
            .map(|(w, _)| w.clone())
            .collect()
    }

    pub fn numerals(&self) -> impl Iterator<Item = (&str, u32)> {
        self.numerals.iter().map(|(w, n)| (w.as_str(), *n))
    }

    pub fn is_preposition(&self, phrase: &str) -> bool {
        self.prepositions.contains(phrase)
    }

    pub fn prepositions(&self) -> impl Iterator<Item = &str> {
        self.prepositions.iter().map(String::as_str)
    }

    pub fn max_preposition_words(&self) -> usize {
        self.max_preposition_words
    }

    /// Lemma of an inflected verb form (`holding` gives `hold`).
    pub fn verb_lemma(&self, word: &str) -> Option<&str> {
        self.verb_forms.get(word).map(String::as_str)
    }

    pub fn verbs(&self) -> impl Iterator<Item = &str> {
        self.verbs.iter().map(String::as_str)
    }

    /// Whether a noun names something animate. Unknown nouns are inanimate.
    pub fn is_living(&self, name: &str) -> bool {
        if self.living.contains(name) {
            return true;
        }
        // "baseball player" is animate because "player" is
        name.rsplit(' ')
            .next()
            .is_some_and(|head| head != name && self.living.contains(head))
    }
}

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u')
}

fn vowel_groups(word: &str) -> usize {
    let b = word.as_bytes();
    (0..b.len())
        .filter(|&i| is_vowel(b[i]) && (i == 0 || !is_vowel(b[i - 1])))
        .count()
}

/// Single-syllable consonant-vowel-consonant words double their final
/// consonant before a vowel suffix (`sit` to `sitting`).
fn doubles_final(word: &str) -> bool {
    let b = word.as_bytes();
    let n = b.len();
    n >= 3
        && !is_vowel(b[n - 1])
        && !matches!(b[n - 1], b'w' | b'x' | b'y')
        && is_vowel(b[n - 2])
        && !is_vowel(b[n - 3])
        && vowel_groups(word) == 1
}

fn is_consonant_y(word: &str) -> bool {
    let b = word.as_bytes();
    b.len() >= 2 && b[b.len() - 1] == b'y' && !is_vowel(b[b.len() - 2])
}

pub(crate) fn progressive(lemma: &str) -> String {
    if let Some(stem) = lemma.strip_suffix("ie") {
        format!("{stem}ying")
    } else if lemma.ends_with('e')
        && !lemma.ends_with("ee")
        && !lemma.ends_with("ye")
        && !lemma.ends_with("oe")
        && lemma.len() > 2
    {
        format!("{}ing", &lemma[..lemma.len() - 1])
    } else if doubles_final(lemma) {
        format!("{lemma}{}ing", &lemma[lemma.len() - 1..])
    } else {
        format!("{lemma}ing")
    }
}

fn past(lemma: &str) -> String {
    if lemma.ends_with('e') {
        format!("{lemma}d")
    } else if is_consonant_y(lemma) {
        format!("{}ied", &lemma[..lemma.len() - 1])
    } else if doubles_final(lemma) {
        format!("{lemma}{}ed", &lemma[lemma.len() - 1..])
    } else {
        format!("{lemma}ed")
    }
}

fn third_person(lemma: &str) -> String {
    regular_plural(lemma)
}

fn regular_plural(word: &str) -> String {
    if ["s", "x", "z", "ch", "sh"].iter().any(|s| word.ends_with(s)) {
        format!("{word}es")
    } else if is_consonant_y(word) {
        format!("{}ies", &word[..word.len() - 1])
    } else {
        format!("{word}s")
    }
}

/// Candidate singular forms in preference order: irregular table, then the
/// `s`, `es`, `ies` and `ves` rules.
fn singular_candidates(word: &str, irregular: &BTreeMap<String, String>) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(s) = irregular.get(word) {
        out.push(s.clone());
    }
    if let Some(stem) = word.strip_suffix('s') {
        if !stem.is_empty() && !stem.ends_with('s') {
            out.push(stem.to_string());
        }
    }
    if let Some(stem) = word.strip_suffix("es") {
        if !stem.is_empty() {
            out.push(stem.to_string());
        }
    }
    if let Some(stem) = word.strip_suffix("ies") {
        if !stem.is_empty() {
            out.push(format!("{stem}y"));
        }
    }
    if let Some(stem) = word.strip_suffix("ves") {
        if !stem.is_empty() {
            out.push(format!("{stem}f"));
            out.push(format!("{stem}fe"));
        }
    }
    out
}
