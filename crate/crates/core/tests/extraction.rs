mod common;

use std::collections::BTreeSet;

use fiha::caption_extract::tokenize_and_tag;
use fiha::jsonl::read_jsonl;
use fiha::{extract_factset, AttributeKind, FactSet};
use proptest::prelude::*;
use serde::Deserialize;

use common::{fixture, lexicon};

#[derive(Deserialize)]
struct Caption {
    caption: String,
}

#[derive(Deserialize)]
struct GoldRelation {
    predicate: String,
    subject: String,
    object: String,
}

#[derive(Deserialize)]
struct Gold {
    image_id: String,
    caption: String,
    objects: Vec<String>,
    relations: Vec<GoldRelation>,
}

fn fixture_captions() -> Vec<String> {
    let mut out: Vec<String> = read_jsonl::<Caption>(fixture("captions.jsonl"))
        .unwrap()
        .into_iter()
        .map(|c| c.caption)
        .collect();
    out.extend(
        read_jsonl::<Gold>(fixture("gold_captions.jsonl"))
            .unwrap()
            .into_iter()
            .map(|g| g.caption),
    );
    out
}

/// Word salad drawn from the lexicon plus filler, so every pattern gets exercised.
fn caption() -> impl Strategy<Value = String> {
    let words: Vec<&'static str> = vec![
        "a", "the", "two", "three", "man", "woman", "dogs", "dog", "umbrella", "red", "yellow",
        "wooden", "holding", "riding", "on", "next", "to", "in", "front", "of", "with", "and",
        "is", "are", "street", "bench", "city", "sitting", "near", "large", "his", "slice",
        "pizza", "calm", "quietly", ".", "table", "cat",
    ];
    prop::collection::vec(prop::sample::select(words), 1..16).prop_map(|w| w.join(" "))
}

fn object_names(fs: &FactSet) -> BTreeSet<String> {
    fs.objects.iter().map(|o| o.name.clone()).collect()
}

proptest! {
    #[test]
    fn extraction_is_deterministic(c in caption()) {
        let a = extract_factset("x", &c, lexicon());
        let b = extract_factset("x", &c, lexicon());
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn extracted_relations_refer_to_extracted_objects(c in caption()) {
        if let Ok(fs) = extract_factset("x", &c, lexicon()) {
            let names = object_names(&fs);
            for r in &fs.relations {
                prop_assert!(names.contains(&r.subject) && names.contains(&r.object), "{:?}", r);
            }
            prop_assert!(fiha::validate_factset(&fs).is_empty());
        }
    }

    #[test]
    fn attribute_values_come_from_the_caption(c in caption()) {
        let Ok(fs) = extract_factset("x", &c, lexicon()) else { return Ok(()) };
        let tokens = tokenize_and_tag(&c, lexicon()).unwrap();
        for obj in &fs.objects {
            for attr in &obj.attributes {
                let found = tokens.iter().any(|t| {
                    if attr.kind == AttributeKind::Count {
                        lexicon().numeral_value(&t.text).map(|n| n.to_string()) == Some(attr.value.clone())
                    } else {
                        t.text == attr.value
                    }
                });
                prop_assert!(found, "{:?} not in {:?}", attr, c);
            }
        }
    }

    #[test]
    fn new_nouns_never_remove_objects(c in caption(), extra in prop::sample::select(vec!["calm", "quietly", "city", "front", "slice", "and"])) {
        let Ok(before) = extract_factset("x", &c, lexicon()) else { return Ok(()) };
        let mut grown = lexicon().clone();
        grown.add_noun(extra);
        let after = extract_factset("x", &c, &grown).unwrap();
        let lost: Vec<_> = object_names(&before).difference(&object_names(&after)).cloned().collect();
        prop_assert!(lost.is_empty(), "adding {:?} lost {:?} from {:?}", extra, lost, c);
    }
}

#[test]
fn fixture_captions_extract_cleanly() {
    for c in fixture_captions() {
        let fs = extract_factset("x", &c, lexicon()).unwrap();
        assert!(!fs.objects.is_empty(), "{c}");
        assert!(fiha::validate_factset(&fs).is_empty(), "{c}");
        let again = extract_factset("x", &c, lexicon()).unwrap();
        assert_eq!(fs, again);
    }
}

#[test]
fn fixture_nouns_never_remove_objects() {
    for c in fixture_captions() {
        let before = extract_factset("x", &c, lexicon()).unwrap();
        for word in c.split_whitespace() {
            let word = word.trim_matches(|ch: char| !ch.is_alphanumeric()).to_lowercase();
            if word.is_empty() || lexicon().noun_lemma(&word).is_some() {
                continue;
            }
            let mut grown = lexicon().clone();
            grown.add_noun(word.clone());
            let after = extract_factset("x", &c, &grown).unwrap();
            let lost: Vec<_> = object_names(&before).difference(&object_names(&after)).cloned().collect();
            assert!(lost.is_empty(), "adding {word:?} lost {lost:?} from {c:?}");
        }
    }
}

/// Micro-averaged precision over the hand-annotated captions.
fn gold_precision() -> (f64, f64) {
    let gold: Vec<Gold> = read_jsonl(fixture("gold_captions.jsonl")).unwrap();
    let (mut obj_hit, mut obj_all, mut rel_hit, mut rel_all) = (0, 0, 0, 0);
    for g in &gold {
        let fs = extract_factset(&g.image_id, &g.caption, lexicon()).unwrap();
        for o in &fs.objects {
            obj_all += 1;
            obj_hit += g.objects.contains(&o.name) as usize;
        }
        for r in &fs.relations {
            rel_all += 1;
            rel_hit += g
                .relations
                .iter()
                .any(|t| t.predicate == r.predicate && t.subject == r.subject && t.object == r.object)
                as usize;
        }
    }
    (obj_hit as f64 / obj_all as f64, rel_hit as f64 / rel_all as f64)
}

#[test]
fn gold_precision_meets_the_bar() {
    let (objects, relations) = gold_precision();
    eprintln!("object precision {objects:.3}, relation precision {relations:.3}");
    assert!(objects >= 0.9, "object precision {objects}");
    assert!(relations >= 0.8, "relation precision {relations}");
}
