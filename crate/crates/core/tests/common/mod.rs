#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use fiha::{AttributeKind, DistractorVocabulary, FactSet, Lexicon, ObjectFact, RelationFact, Source};
use proptest::prelude::*;
use proptest::sample::subsequence;

// a mix of MSCOCO categories and common non-category nouns
pub const NAMES: &[&str] = &[
    "man", "woman", "dog", "cat", "umbrella", "car", "table", "cup", "tree", "street", "bench",
    "horse", "fence", "hat", "kite", "boy",
];

pub const ATTRIBUTES: &[(AttributeKind, &str)] = &[
    (AttributeKind::Color, "red"),
    (AttributeKind::Color, "yellow"),
    (AttributeKind::Color, "white"),
    (AttributeKind::Color, "black"),
    (AttributeKind::Size, "small"),
    (AttributeKind::Size, "large"),
    (AttributeKind::Material, "wooden"),
    (AttributeKind::State, "wet"),
    (AttributeKind::State, "parked"),
    (AttributeKind::Count, "2"),
    (AttributeKind::Count, "3"),
    (AttributeKind::Other, "striped"),
];

pub const PREDICATES: &[&str] = &[
    "on", "holding", "next to", "under", "near", "riding", "in front of", "wearing", "behind",
    "with", "sitting on",
];

pub fn lexicon() -> &'static Lexicon {
    static LEX: OnceLock<Lexicon> = OnceLock::new();
    LEX.get_or_init(Lexicon::bundled)
}

pub fn distractors() -> &'static DistractorVocabulary {
    static VOCAB: OnceLock<DistractorVocabulary> = OnceLock::new();
    VOCAB.get_or_init(|| DistractorVocabulary::from_lexicon(lexicon()))
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

/// Valid image-path fact sets over small vocabularies.
pub fn factset() -> impl Strategy<Value = FactSet> {
    let objects = subsequence(NAMES.to_vec(), 0..=6).prop_shuffle();
    (
        "img[0-9]{3}",
        objects,
        prop::collection::vec(subsequence(ATTRIBUTES.to_vec(), 0..=3), 6),
        prop::collection::vec((0usize..6, 0usize..6, prop::sample::select(PREDICATES)), 0..6),
    )
        .prop_map(|(image_id, names, attrs, rels)| {
            let mut fs = FactSet::new(image_id, Source::Image);
            for (name, attrs) in names.iter().zip(attrs) {
                let mut obj = ObjectFact::new(*name);
                for (kind, value) in attrs {
                    obj = obj.with_attribute(kind, value);
                }
                fs.objects.push(obj);
            }
            let n = fs.objects.len();
            for (s, o, p) in rels {
                if n < 2 || s % n == o % n {
                    continue;
                }
                let rel = RelationFact::new(p, &fs.objects[s % n].name, &fs.objects[o % n].name);
                if !fs.relations.contains(&rel) {
                    fs.relations.push(rel);
                }
            }
            fs
        })
}
