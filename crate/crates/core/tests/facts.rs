mod common;

use std::collections::BTreeSet;

use fiha::jsonl::to_jsonl;
use fiha::scene_facts::{parse_corpus, parse_factset, SchemaMode, Violation};
use fiha::{validate_factset, vocabulary, AttributeFact, AttributeKind, FactSet, ObjectFact, RelationFact, Source};
use proptest::prelude::*;

use common::factset;

/// Breaks exactly one invariant of a valid fact set.
fn inject(fs: &mut FactSet, fault: usize) -> &'static str {
    match fault {
        0 => {
            fs.image_id = "  ".into();
            "image_id"
        }
        1 => {
            fs.source = Source::Caption;
            fs.caption = None;
            "caption"
        }
        2 => {
            fs.objects.push(ObjectFact::new(" lamp "));
            "objects.name"
        }
        3 => {
            fs.objects.push(ObjectFact::new("lamp\npost"));
            "objects.name"
        }
        4 => {
            fs.objects.push(ObjectFact::new("lamp"));
            fs.objects.push(ObjectFact::new("lamp"));
            "objects.name"
        }
        5 => {
            fs.objects.push(ObjectFact::new("lamp").with_attribute(AttributeKind::Color, ""));
            "objects.attributes"
        }
        6 => {
            fs.objects.push(ObjectFact::new("lamp").with_attribute(AttributeKind::Color, "Red"));
            "objects.attributes"
        }
        7 => {
            let attr = AttributeFact::new(AttributeKind::Other, "plaid");
            fs.objects.push(ObjectFact {
                name: "lamp".into(),
                attributes: vec![attr.clone(), attr],
            });
            "objects.attributes"
        }
        8 => {
            fs.objects.push(ObjectFact::new("lamp").with_attribute(AttributeKind::Count, "many"));
            "objects.attributes"
        }
        9 => {
            fs.objects.push(ObjectFact::new("lamp"));
            fs.objects.push(ObjectFact::new("post"));
            fs.relations.push(RelationFact::new(" ", "lamp", "post"));
            "relations.predicate"
        }
        10 => {
            fs.objects.push(ObjectFact::new("lamp"));
            fs.relations.push(RelationFact::new("on", "lamp", "lamp"));
            "relations.predicate"
        }
        _ => {
            fs.objects.push(ObjectFact::new("lamp"));
            fs.relations.push(RelationFact::new("on", "lamp", "ghost"));
            "relations.endpoint"
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn generated_fact_sets_are_valid(fs in factset()) {
        prop_assert_eq!(validate_factset(&fs), Vec::<Violation>::new());
    }

    #[test]
    fn single_faults_are_reported_once(mut fs in factset(), fault in 0usize..12) {
        let field = inject(&mut fs, fault);
        let v = validate_factset(&fs);
        prop_assert_eq!(v.len(), 1, "{:?}", v);
        prop_assert_eq!(v[0].field(), field);
    }

    #[test]
    fn json_round_trip(fs in factset()) {
        let back = parse_factset(&fs.to_json(), SchemaMode::Strict).unwrap();
        prop_assert_eq!(&back, &fs);
        let corpus = parse_corpus(&to_jsonl(&[fs.clone(), fs.clone()]), SchemaMode::Strict).unwrap();
        prop_assert_eq!(corpus, vec![fs.clone(), fs]);
    }

    #[test]
    fn vocabulary_matches_a_recount(fs in factset()) {
        let v = vocabulary(&fs);
        let mut objects = BTreeSet::new();
        let mut attributes = BTreeSet::new();
        let mut predicates = BTreeSet::new();
        for o in &fs.objects {
            objects.insert(o.name.clone());
            for a in &o.attributes {
                attributes.insert(a.value.clone());
            }
        }
        for r in &fs.relations {
            predicates.insert(r.predicate.clone());
        }
        prop_assert_eq!(v.objects, objects);
        prop_assert_eq!(v.attributes, attributes);
        prop_assert_eq!(v.predicates, predicates);
    }
}

#[test]
fn invalid_input_is_rejected_not_repaired() {
    let text = r#"{"image_id":"a","source":"image","objects":[{"name":"man","attributes":[]}],
        "relations":[{"predicate":"holding","subject":"man","object":"umbrella"}]}"#;
    assert!(parse_factset(text, SchemaMode::Strict).is_err());
    let unknown = r#"{"image_id":"a","source":"image","objects":[],"relations":[],"extra":1}"#;
    assert!(parse_factset(unknown, SchemaMode::Strict).is_err());
    assert!(parse_factset(unknown, SchemaMode::Lenient).is_ok());
}
