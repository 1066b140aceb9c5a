mod common;

use std::collections::HashMap;

use fiha::dsg::{build_forest_with, propagate_detailed, ForestOptions};
use fiha::eval::{PositiveClass, TokenF1, UnparseablePolicy};
use fiha::model_client::ResponseRecord;
use fiha::qa_gen::Polarity;
use fiha::{evaluate, generate_all, propagate, DsgForest, DsgNode, EvalConfig, FactSet, GenConfig, QaPair, VerdictKind};
use proptest::prelude::*;

use common::{distractors, factset, lexicon};

fn verdict() -> impl Strategy<Value = VerdictKind> {
    prop_oneof![
        Just(VerdictKind::Correct),
        Just(VerdictKind::Incorrect),
        Just(VerdictKind::Unparseable)
    ]
}

/// A forest of made-up ids with a verdict for every id.
fn forest_and_verdicts() -> impl Strategy<Value = (DsgForest, HashMap<String, VerdictKind>)> {
    let leaves = prop::collection::vec(prop::collection::vec(0usize..6, 0..3), 0..5);
    (prop::collection::vec(leaves, 0..6), 0usize..4)
        .prop_flat_map(|(shape, orphans)| {
            let mut ids: Vec<String> = Vec::new();
            let mut roots = Vec::new();
            for (r, _) in shape.iter().enumerate() {
                ids.push(format!("r{r}"));
            }
            for (r, children) in shape.iter().enumerate() {
                let mut node = DsgNode {
                    pair_id: format!("r{r}"),
                    children: Vec::new(),
                    co_roots: Vec::new(),
                };
                for (c, co) in children.iter().enumerate() {
                    let id = format!("r{r}c{c}");
                    ids.push(id.clone());
                    let mut co_roots: Vec<String> = co
                        .iter()
                        .map(|k| k % shape.len())
                        .filter(|k| *k != r)
                        .map(|k| format!("r{k}"))
                        .collect();
                    co_roots.dedup();
                    node.children.push(DsgNode {
                        pair_id: id,
                        children: Vec::new(),
                        co_roots,
                    });
                }
                roots.push(node);
            }
            let orphans: Vec<String> = (0..orphans).map(|o| format!("o{o}")).collect();
            ids.extend(orphans.iter().cloned());
            let forest = DsgForest {
                image_id: "img".into(),
                roots,
                orphans,
            };
            (Just(forest), prop::collection::vec(verdict(), ids.len()), Just(ids))
        })
        .prop_map(|(forest, kinds, ids)| (forest, ids.into_iter().zip(kinds).collect()))
}

fn gen_pairs(fs: &FactSet, seed: u64, ratio: f64) -> Vec<QaPair> {
    let cfg = GenConfig {
        seed,
        negative_ratio: ratio,
        ..GenConfig::default()
    };
    generate_all(fs, lexicon(), distractors(), &cfg).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn propagation_laws((forest, raw) in forest_and_verdicts()) {
        let once = propagate(&forest, &raw).unwrap();
        let twice = propagate(&forest, &once).unwrap();
        prop_assert_eq!(&once, &twice, "not idempotent");

        for (id, before) in &raw {
            let after = once[id];
            prop_assert!(after != VerdictKind::Correct || *before == VerdictKind::Correct, "{} promoted", id);
            prop_assert!(after == *before || after == VerdictKind::Incorrect, "{} changed sideways", id);
        }

        let roots_ok = forest.roots.iter().all(|r| raw[&r.pair_id] == VerdictKind::Correct);
        if roots_ok {
            prop_assert_eq!(&once, &raw, "all roots correct but verdicts changed");
        }

        // brute force: a leaf keeps its verdict iff its parent and co-roots are correct
        for root in &forest.roots {
            prop_assert_eq!(once[&root.pair_id], raw[&root.pair_id]);
            for leaf in &root.children {
                let open = std::iter::once(&root.pair_id)
                    .chain(&leaf.co_roots)
                    .all(|id| raw[id] == VerdictKind::Correct);
                let want = if open { raw[&leaf.pair_id] } else { VerdictKind::Incorrect };
                prop_assert_eq!(once[&leaf.pair_id], want);
            }
        }
        for o in &forest.orphans {
            prop_assert_eq!(once[o], raw[o]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn forests_partition_the_pairs(fs in factset(), seed in any::<u64>(), single in any::<bool>()) {
        let pairs = gen_pairs(&fs, seed, 0.5);
        let opts = ForestOptions { single_root_relations: single };
        let forest = build_forest_with(&pairs, &fs, opts).unwrap();
        let mut in_forest: Vec<&str> = forest.pair_ids();
        let tree = in_forest.len() - forest.orphans.len();
        prop_assert_eq!(tree + forest.orphans.len(), pairs.len());
        in_forest.sort();
        let mut ids: Vec<&str> = pairs.iter().map(|p| p.id.as_str()).collect();
        ids.sort();
        prop_assert_eq!(in_forest, ids);
        prop_assert!(forest.depth() <= 2);

        let by_id: HashMap<&str, &QaPair> = pairs.iter().map(|p| (p.id.as_str(), p)).collect();
        for root in &forest.roots {
            let p = by_id[root.pair_id.as_str()];
            prop_assert!(p.is_existence() && p.polarity == Polarity::Positive);
            for leaf in &root.children {
                prop_assert!(!by_id[leaf.pair_id.as_str()].is_existence());
                if single {
                    prop_assert!(leaf.co_roots.is_empty());
                }
            }
        }
    }

    #[test]
    fn gating_only_lowers_metrics(
        fs in factset(),
        seed in any::<u64>(),
        answers in prop::collection::vec(0usize..10, 256),
        flip_positive in any::<bool>(),
        exclude in any::<bool>(),
    ) {
        let pairs = gen_pairs(&fs, seed, 0.5);
        let forest = build_forest_with(&pairs, &fs, ForestOptions::default()).unwrap();
        let responses: Vec<ResponseRecord> = pairs
            .iter()
            .zip(answers.iter().cycle())
            .map(|(p, a)| {
                let text = match a {
                    0 | 1 => "yes".to_string(),
                    2 | 3 => "No.".to_string(),
                    4 => "maybe".to_string(),
                    5 => String::new(),
                    6 => "nobody".to_string(),
                    7 => "Yes, there is.".to_string(),
                    _ => p.expected.text.clone(),
                };
                ResponseRecord::answered(&p.id, "m", text, 1)
            })
            .collect();
        let cfg = EvalConfig {
            positive_class: if flip_positive { PositiveClass::No } else { PositiveClass::Yes },
            unparseable: if exclude { UnparseablePolicy::Exclude } else { UnparseablePolicy::Incorrect },
            ..EvalConfig::default()
        };
        let (report, verdicts) = evaluate(&pairs, std::slice::from_ref(&forest), &responses, &TokenF1, &cfg).unwrap();
        let delta = report.dsg_delta.as_ref().unwrap();
        for d in delta.all() {
            for c in d.components() {
                prop_assert!(c >= 0.0, "negative delta {:?}", d);
            }
        }
        for v in &verdicts {
            prop_assert!(v.adjusted != VerdictKind::Correct || v.raw == VerdictKind::Correct);
        }
        let raw: HashMap<String, VerdictKind> = verdicts.iter().map(|v| (v.pair_id.clone(), v.raw)).collect();
        let prop = propagate_detailed(&forest, &raw).unwrap();
        prop_assert_eq!(report.skipped_count, prop.gated.len());

        // conservation: category supports add up to the overall support
        for b in [report.raw(), report.dsg_on.clone().unwrap()] {
            let mut sum = fiha::eval::Support::default();
            for block in b.by_category.values() {
                sum += block.support;
            }
            prop_assert_eq!(sum, b.overall.support);
        }
    }
}
