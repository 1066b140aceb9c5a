mod common;

use fiha::qa_gen::{AnswerForm, Category, Polarity, Probe, QuestionKind};
use fiha::{generate_all, vocabulary, FactSet, GenConfig, QaPair, RelationFact};
use proptest::prelude::*;

use common::{distractors, factset, lexicon};

fn generate(fs: &FactSet, cfg: &GenConfig) -> Vec<QaPair> {
    generate_all(fs, lexicon(), distractors(), cfg).expect("generation succeeds")
}

fn config() -> impl Strategy<Value = GenConfig> {
    (any::<u64>(), prop_oneof![Just(0.0), Just(0.25), Just(0.5), Just(0.75), Just(1.0)], any::<bool>())
        .prop_map(|(seed, negative_ratio, symmetric_wh)| GenConfig {
            seed,
            negative_ratio,
            max_pairs_per_image: None,
            symmetric_wh,
        })
}

fn mentions(question: &str, name: &str) -> bool {
    question.contains(name) || question.contains(&lexicon().pluralize(name))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn distractors_never_occur_in_the_scene(fs in factset(), cfg in config()) {
        let vocab = vocabulary(&fs);
        for p in generate(&fs, &cfg) {
            if p.polarity == Polarity::Negative {
                let d = p.distractor.as_ref().expect("negatives carry a distractor");
                prop_assert!(!vocab.objects.contains(&d.value), "{:?}", p);
                prop_assert!(!vocab.attributes.contains(&d.value), "{:?}", p);
                prop_assert!(!vocab.predicates.contains(&d.value), "{:?}", p);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pairs_are_well_formed(fs in factset(), cfg in config()) {
        for p in generate(&fs, &cfg) {
            prop_assert!(p.check().is_ok(), "{:?}", p.check());
            prop_assert_eq!(&p.image_id, &fs.image_id);
            if p.kind == QuestionKind::YesNo {
                let want = if p.polarity == Polarity::Positive { AnswerForm::Yes } else { AnswerForm::No };
                prop_assert_eq!(p.expected.form, want);
            } else {
                prop_assert!(p.expected.text.split_whitespace().count() <= 3);
            }
            prop_assert!(
                p.probe.objects().iter().any(|o| mentions(&p.question, o)),
                "{:?} names none of {:?}", p.question, p.probe.objects()
            );
        }
    }

    #[test]
    fn positive_probes_exist_in_the_scene(fs in factset(), cfg in config()) {
        for p in generate(&fs, &cfg).iter().filter(|p| p.polarity == Polarity::Positive) {
            let ok = match &p.probe {
                Probe::Object { name } => fs.has_object(name),
                Probe::Attribute { object, kind, value } => fs
                    .object(object)
                    .is_some_and(|o| o.attributes.iter().any(|a| a.kind == *kind && &a.value == value)),
                Probe::Relation { predicate, subject, object } => fs
                    .relations
                    .contains(&RelationFact::new(predicate, subject, object)),
            };
            prop_assert!(ok, "{:?}", p);
        }
    }

    #[test]
    fn generation_is_deterministic(fs in factset(), cfg in config()) {
        let a = generate(&fs, &cfg);
        let b = generate(&fs, &cfg);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn ids_are_unique(fs in factset(), cfg in config()) {
        let pairs = generate(&fs, &cfg);
        let mut ids: Vec<&str> = pairs.iter().map(|p| p.id.as_str()).collect();
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), pairs.len());
    }

    #[test]
    fn rich_scenes_cover_every_category(fs in factset(), cfg in config()) {
        let has_attr = fs.objects.iter().any(|o| !o.attributes.is_empty());
        prop_assume!(!fs.objects.is_empty() && has_attr && !fs.relations.is_empty());
        let pairs = generate(&fs, &cfg);
        for c in Category::ALL {
            prop_assert!(
                pairs.iter().any(|p| p.category == c && p.polarity == Polarity::Positive),
                "no {} pair", c
            );
        }
    }

    #[test]
    fn negatives_follow_the_ratio(fs in factset(), cfg in config()) {
        let pairs = generate(&fs, &cfg);
        let positives = pairs.iter().filter(|p| p.polarity == Polarity::Positive).count();
        let negatives = pairs.len() - positives;
        if let Some(bound) = cfg.negative_count(positives) {
            prop_assert!(negatives <= bound, "{} negatives for {} positives", negatives, positives);
        }
        if cfg.negative_ratio == 0.0 {
            prop_assert_eq!(negatives, 0);
        }
    }

    #[test]
    fn cap_keeps_a_prefix(fs in factset(), cfg in config(), cap in 0usize..8) {
        let full = generate(&fs, &cfg);
        let capped = generate(&fs, &GenConfig { max_pairs_per_image: Some(cap), ..cfg });
        prop_assert_eq!(&full[..cap.min(full.len())], &capped[..]);
    }
}

#[test]
fn template_wording() {
    let mut fs = FactSet::new("img001", fiha::Source::Image);
    fs.objects.push(fiha::ObjectFact::new("man"));
    fs.objects.push(fiha::ObjectFact::new("umbrella"));
    fs.objects.push(fiha::ObjectFact::new("dog"));
    fs.relations.push(RelationFact::new("holding", "man", "umbrella"));
    fs.relations.push(RelationFact::new("behind", "dog", "man"));
    let pairs = generate(&fs, &GenConfig::default());
    let questions: Vec<&str> = pairs.iter().map(|p| p.question.as_str()).collect();
    assert!(questions.contains(&"is the man holding the umbrella in the image?"), "{questions:?}");
    assert!(questions.contains(&"who is behind the man in the image?"), "{questions:?}");
}
