//! Counts over a set of generated pairs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::qa_gen::{Category, Polarity, QaPair, QuestionKind};
use crate::scene_facts::Source;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub total: usize,
    pub images: usize,
    pub mean_per_image: f64,
    pub by_kind: BTreeMap<String, usize>,
    pub by_category: BTreeMap<String, usize>,
    pub by_polarity: BTreeMap<String, usize>,
    /// Keyed by the question's first word ("is", "what", "who", ...).
    pub by_question_word: BTreeMap<String, usize>,
    /// `source -> category -> count`, every cell present.
    pub by_source_category: BTreeMap<String, BTreeMap<String, usize>>,
}

impl PairStats {
    pub fn cell(&self, source: Source, category: Category) -> usize {
        self.by_source_category
            .get(source_name(source))
            .and_then(|m| m.get(category.as_str()))
            .copied()
            .unwrap_or(0)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} pairs over {} images ({:.1} per image)\n",
            self.total, self.images, self.mean_per_image
        );
        let table = |out: &mut String, title: &str, m: &BTreeMap<String, usize>| {
            let _ = writeln!(out, "| {title} | Count | Share |\n|---|---:|---:|");
            for (k, v) in m {
                let share = if self.total == 0 { 0.0 } else { 100.0 * *v as f64 / self.total as f64 };
                let _ = writeln!(out, "| {k} | {v} | {share:.1}% |");
            }
            out.push('\n');
        };
        table(&mut out, "Kind", &self.by_kind);
        table(&mut out, "Category", &self.by_category);
        table(&mut out, "Polarity", &self.by_polarity);
        table(&mut out, "Question word", &self.by_question_word);
        out.push_str("| Source | object | attribute | relation |\n|---|---:|---:|---:|\n");
        for (src, cells) in &self.by_source_category {
            let _ = writeln!(
                out,
                "| {src} | {} | {} | {} |",
                cells["object"], cells["attribute"], cells["relation"]
            );
        }
        out
    }
}

fn source_name(s: Source) -> &'static str {
    match s {
        Source::Image => "image",
        Source::Caption => "caption",
    }
}

fn kind_name(k: QuestionKind) -> &'static str {
    match k {
        QuestionKind::YesNo => "yes_no",
        QuestionKind::Wh => "wh",
    }
}

fn polarity_name(p: Polarity) -> &'static str {
    match p {
        Polarity::Positive => "positive",
        Polarity::Negative => "negative",
    }
}

pub fn pair_stats(pairs: &[QaPair]) -> PairStats {
    let mut s = PairStats {
        total: pairs.len(),
        ..PairStats::default()
    };
    for src in [Source::Image, Source::Caption] {
        s.by_source_category.insert(
            source_name(src).into(),
            Category::ALL.iter().map(|c| (c.as_str().to_string(), 0)).collect(),
        );
    }
    let mut images = BTreeSet::new();
    for p in pairs {
        images.insert(p.image_id.as_str());
        *s.by_kind.entry(kind_name(p.kind).into()).or_default() += 1;
        *s.by_category.entry(p.category.as_str().into()).or_default() += 1;
        *s.by_polarity.entry(polarity_name(p.polarity).into()).or_default() += 1;
        let word = p.question.split_whitespace().next().unwrap_or("").to_string();
        *s.by_question_word.entry(word).or_default() += 1;
        *s.by_source_category
            .get_mut(source_name(p.source))
            .unwrap()
            .get_mut(p.category.as_str())
            .unwrap() += 1;
    }
    s.images = images.len();
    s.mean_per_image = if s.images == 0 { 0.0 } else { s.total as f64 / s.images as f64 };
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::Lexicon;
    use crate::qa_gen::{generate_all, DistractorVocabulary, GenConfig};
    use crate::scene_facts::{AttributeKind, FactSet, ObjectFact, RelationFact};

    #[test]
    fn counts_add_up() {
        let mut fs = FactSet::new("img", Source::Caption);
        fs.objects.push(ObjectFact::new("man"));
        fs.objects
            .push(ObjectFact::new("umbrella").with_attribute(AttributeKind::Color, "yellow"));
        fs.relations.push(RelationFact::new("holding", "man", "umbrella"));
        let lex = Lexicon::bundled();
        let pairs = generate_all(&fs, &lex, &DistractorVocabulary::from_lexicon(&lex), &GenConfig::default()).unwrap();
        let s = pair_stats(&pairs);
        assert_eq!(s.images, 1);
        assert_eq!(s.by_category.values().sum::<usize>(), s.total);
        assert_eq!(s.by_kind.values().sum::<usize>(), s.total);
        let caption: usize = Category::ALL.iter().map(|c| s.cell(Source::Caption, *c)).sum();
        assert_eq!(caption, s.total);
        assert_eq!(s.cell(Source::Image, Category::Object), 0);
        assert!(s.to_markdown().contains("| caption |"));
    }
}
