//! Judging answers and aggregating metrics.
//!
//! Yes-no answers are classified by a small pattern table and compared with
//! the expected form. Wh answers are scored against the expected text by a
//! [`FreeFormScorer`] ([`TokenF1`] unless configured otherwise) and accepted
//! above a threshold. Negative wh questions also accept any negative pronoun.
//!
//! P/R/F1 are computed over yes-no pairs only, with ground-truth *yes* as
//! the positive class by default. Wh pairs are reported in their own block.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsg::{propagate_detailed, DsgError, DsgForest};
use crate::model_client::ResponseRecord;
use crate::qa_gen::{AnswerForm, Category, Polarity, QaPair, QuestionKind};
use crate::scene_facts::Source;

pub const DEFAULT_WH_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Correct,
    Incorrect,
    Unparseable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerClass {
    Yes,
    No,
    Unparseable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NormalizedAnswer {
    YesNo(AnswerClass),
    Wh {
        tokens: Vec<String>,
        /// Canonical negative found in the answer, if any.
        negative: Option<&'static str>,
    },
}

impl NormalizedAnswer {
    pub fn class(&self) -> Option<AnswerClass> {
        match self {
            NormalizedAnswer::YesNo(c) => Some(*c),
            NormalizedAnswer::Wh { .. } => None,
        }
    }

    pub fn tokens(&self) -> &[String] {
        match self {
            NormalizedAnswer::Wh { tokens, .. } => tokens,
            NormalizedAnswer::YesNo(_) => &[],
        }
    }
}

const CONTRACTIONS: &[(&str, &str)] = &[
    ("isn't", "is not"),
    ("aren't", "are not"),
    ("wasn't", "was not"),
    ("weren't", "were not"),
    ("doesn't", "does not"),
    ("don't", "do not"),
    ("can't", "cannot"),
    ("there's", "there is"),
    ("it's", "it is"),
    ("that's", "that is"),
    ("i'm", "i am"),
];

const ARTICLES: &[&str] = &["a", "an", "the"];

// dropped from wh answers before scoring
const STOPWORDS: &[&str] = &[
    "a", "an", "the", "it", "its", "is", "are", "was", "were", "be", "this", "that", "there",
    "they", "these", "those", "of", "in", "image", "picture", "photo", "i", "think", "answer",
];

const NUMBER_WORDS: &[&str] = &[
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve",
];

/// Lowercases, expands contractions and splits into clauses of bare words.
fn clauses(raw: &str) -> Vec<Vec<String>> {
    let mut text = raw.to_lowercase().replace('\u{2019}', "'");
    for (from, to) in CONTRACTIONS {
        text = text.replace(from, to);
    }
    text.split([',', '.', ';', ':', '!', '?', '\n'])
        .map(|clause| {
            clause
                .split_whitespace()
                .map(|w| {
                    w.trim_matches(|c: char| !c.is_alphanumeric())
                        .trim_end_matches("'s")
                        .to_string()
                })
                .filter(|w| !w.is_empty())
                .collect::<Vec<_>>()
        })
        .filter(|c| !c.is_empty())
        .collect()
}

fn classify_yes_no(first: &[String]) -> AnswerClass {
    let words: Vec<&str> = first
        .iter()
        .map(String::as_str)
        .filter(|w| !ARTICLES.contains(w))
        .collect();
    let starts = |p: &[&str]| words.len() >= p.len() && words[..p.len()] == *p;
    const NEGATIVE: &[&[&str]] = &[
        &["no"],
        &["nope"],
        &["not"],
        &["there", "is", "no"],
        &["there", "are", "no"],
        &["there", "is", "not"],
        &["there", "are", "not"],
        &["it", "is", "not"],
    ];
    const AFFIRMATIVE: &[&[&str]] = &[
        &["yes"],
        &["yeah"],
        &["yep"],
        &["there", "is"],
        &["there", "are"],
        &["it", "is"],
    ];
    if NEGATIVE.iter().any(|p| starts(p)) {
        AnswerClass::No
    } else if AFFIRMATIVE.iter().any(|p| starts(p)) {
        AnswerClass::Yes
    } else {
        AnswerClass::Unparseable
    }
}

fn negative_pronoun(words: &[String]) -> Option<&'static str> {
    for (i, w) in words.iter().enumerate() {
        match w.as_str() {
            "none" => return Some("none"),
            "nobody" => return Some("nobody"),
            "nothing" => return Some("nothing"),
            "nowhere" => return Some("nowhere"),
            "no" if words.get(i + 1).is_some_and(|n| n == "one") => return Some("nobody"),
            _ => {}
        }
    }
    None
}

fn wh_tokens(words: impl IntoIterator<Item = String>) -> Vec<String> {
    words
        .into_iter()
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .map(|w| match NUMBER_WORDS.iter().position(|n| *n == w) {
            Some(n) => n.to_string(),
            None => w,
        })
        .collect()
}

pub fn normalize_answer(raw: &str, kind: QuestionKind) -> NormalizedAnswer {
    let clauses = clauses(raw);
    match kind {
        QuestionKind::YesNo => NormalizedAnswer::YesNo(match clauses.first() {
            Some(first) => classify_yes_no(first),
            None => AnswerClass::Unparseable,
        }),
        QuestionKind::Wh => {
            let words: Vec<String> = clauses.into_iter().flatten().collect();
            let negative = negative_pronoun(&words);
            NormalizedAnswer::Wh {
                tokens: wh_tokens(words),
                negative,
            }
        }
    }
}

/// Normalizes a reference answer the same way as a wh response.
pub fn reference_tokens(text: &str) -> Vec<String> {
    wh_tokens(clauses(text).into_iter().flatten())
}

/// Bag-of-tokens F1 between a candidate and a reference.
pub fn token_f1<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> f64 {
    if candidate.is_empty() && reference.is_empty() {
        return 1.0;
    }
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in reference {
        *counts.entry(t.as_ref()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in candidate {
        if let Some(n) = counts.get_mut(t.as_ref()) {
            if *n > 0 {
                *n -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / candidate.len() as f64;
    let r = overlap as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

#[derive(Debug, Error)]
#[error("scorer failed: {0}")]
pub struct ScoreError(pub String);

/// Similarity between a normalized answer and a normalized reference, in [0, 1].
pub trait FreeFormScorer: Sync {
    fn score(&self, candidate: &[String], reference: &[String]) -> Result<f64, ScoreError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TokenF1;

impl FreeFormScorer for TokenF1 {
    fn score(&self, candidate: &[String], reference: &[String]) -> Result<f64, ScoreError> {
        Ok(token_f1(candidate, reference))
    }
}

/// Delegates scoring to an HTTP service, e.g. an embedding-similarity model.
///
/// Sends `{"candidate": "...", "reference": "..."}` as a POST body and
/// expects `{"score": f}` back; the score is clamped to [0, 1].
pub struct HttpScorer {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpScorer {
    pub fn new(url: impl Into<String>, timeout: std::time::Duration) -> Result<Self, ScoreError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ScoreError(e.to_string()))?;
        Ok(HttpScorer {
            url: url.into(),
            client,
        })
    }
}

impl FreeFormScorer for HttpScorer {
    fn score(&self, candidate: &[String], reference: &[String]) -> Result<f64, ScoreError> {
        #[derive(Deserialize)]
        struct Reply {
            score: f64,
        }
        let body = serde_json::json!({
            "candidate": candidate.join(" "),
            "reference": reference.join(" "),
        });
        let reply: Reply = self
            .client
            .post(&self.url)
            .json(&body)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| ScoreError(e.to_string()))?;
        if !reply.score.is_finite() {
            return Err(ScoreError(format!("non-finite score {}", reply.score)));
        }
        Ok(reply.score.clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pair_id: String,
    pub raw: VerdictKind,
    pub adjusted: VerdictKind,
    pub match_score: f64,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("response for {response} judged against pair {pair}")]
    MismatchedIds { pair: String, response: String },
    #[error("verdicts and pairs do not align: {0}")]
    Alignment(String),
    #[error("{missing} pairs have no response (first: {first}); pass allow_partial to score them as unparseable")]
    Coverage { missing: usize, first: String },
    #[error("responses from several models ({0:?}); choose one")]
    MultipleModels(Vec<String>),
    #[error(transparent)]
    Dsg(#[from] DsgError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

pub fn judge(
    pair: &QaPair,
    resp: &ResponseRecord,
    scorer: &dyn FreeFormScorer,
    threshold: f64,
) -> Result<Verdict, EvalError> {
    if resp.pair_id != pair.id {
        return Err(EvalError::MismatchedIds {
            pair: pair.id.clone(),
            response: resp.pair_id.clone(),
        });
    }
    judge_text(pair, &resp.raw_text, scorer, threshold)
}

/// Judges a bare answer string.
pub fn judge_text(
    pair: &QaPair,
    answer: &str,
    scorer: &dyn FreeFormScorer,
    threshold: f64,
) -> Result<Verdict, EvalError> {
    let (raw, match_score) = match normalize_answer(answer, pair.kind) {
        NormalizedAnswer::YesNo(class) => {
            let kind = match (class, pair.expected.form) {
                (AnswerClass::Unparseable, _) => VerdictKind::Unparseable,
                (AnswerClass::Yes, AnswerForm::Yes) | (AnswerClass::No, AnswerForm::No) => {
                    VerdictKind::Correct
                }
                _ => VerdictKind::Incorrect,
            };
            let score = if kind == VerdictKind::Correct { 1.0 } else { 0.0 };
            (kind, score)
        }
        NormalizedAnswer::Wh { tokens, negative } => {
            let mut best = 0.0f64;
            let refs = std::iter::once(&pair.expected.text).chain(&pair.expected.alternates);
            for reference in refs {
                best = best.max(scorer.score(&tokens, &reference_tokens(reference))?);
            }
            let correct = best >= threshold
                || (pair.polarity == Polarity::Negative && negative.is_some());
            if correct && pair.polarity == Polarity::Negative && negative.is_some() {
                best = 1.0;
            }
            let kind = if tokens.is_empty() && negative.is_none() {
                VerdictKind::Unparseable
            } else if correct {
                VerdictKind::Correct
            } else {
                VerdictKind::Incorrect
            };
            (kind, best)
        }
    };
    Ok(Verdict {
        pair_id: pair.id.clone(),
        raw,
        adjusted: raw,
        match_score,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositiveClass {
    #[default]
    Yes,
    No,
}

/// How unparseable yes-no answers enter the confusion matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnparseablePolicy {
    /// Wrong for accuracy; a false negative when the positive class was expected.
    #[default]
    Incorrect,
    /// Left out of every denominator; only the counter records them.
    Exclude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Raw,
    Adjusted,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Support {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub unparseable: usize,
    /// Yes-no pairs in the accuracy denominator.
    pub total: usize,
}

impl std::ops::AddAssign for Support {
    fn add_assign(&mut self, o: Support) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
        self.unparseable += o.unparseable;
        self.total += o.total;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WhBlock {
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub mean_match_score: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricBlock {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: Support,
    pub wh: WhBlock,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl MetricBlock {
    /// Fills in the ratios from the raw counts.
    pub fn from_counts(support: Support, wh_correct: usize, wh_count: usize, wh_score: f64) -> Self {
        let precision = ratio(support.tp, support.tp + support.fp);
        let recall = ratio(support.tp, support.tp + support.fn_);
        // 2PR/(P+R) in count form: one rounding step, so gating can never
        // nudge F1 upward through rounding noise.
        let f1 = ratio(2 * support.tp, 2 * support.tp + support.fp + support.fn_);
        MetricBlock {
            accuracy: ratio(support.tp + support.tn, support.total),
            precision,
            recall,
            f1,
            support,
            wh: WhBlock {
                count: wh_count,
                correct: wh_correct,
                accuracy: ratio(wh_correct, wh_count),
                mean_match_score: if wh_count == 0 { 0.0 } else { wh_score / wh_count as f64 },
            },
        }
    }
}

#[derive(Default)]
struct Tally {
    support: Support,
    wh_count: usize,
    wh_correct: usize,
    wh_score: f64,
}

impl Tally {
    fn add(&mut self, pair: &QaPair, v: &Verdict, which: Which, pos: PositiveClass, up: UnparseablePolicy) {
        let kind = match which {
            Which::Raw => v.raw,
            Which::Adjusted => v.adjusted,
        };
        match pair.kind {
            QuestionKind::Wh => {
                self.wh_count += 1;
                if kind == VerdictKind::Correct {
                    self.wh_correct += 1;
                }
                // a demoted answer scores nothing
                if kind == v.raw {
                    self.wh_score += v.match_score;
                }
            }
            QuestionKind::YesNo => {
                let s = &mut self.support;
                let expected_positive = match pos {
                    PositiveClass::Yes => pair.expected.form == AnswerForm::Yes,
                    PositiveClass::No => pair.expected.form == AnswerForm::No,
                };
                if kind == VerdictKind::Unparseable {
                    s.unparseable += 1;
                    if up == UnparseablePolicy::Exclude {
                        return;
                    }
                }
                s.total += 1;
                match (expected_positive, kind) {
                    (true, VerdictKind::Correct) => s.tp += 1,
                    (true, _) => s.fn_ += 1,
                    (false, VerdictKind::Correct) => s.tn += 1,
                    (false, VerdictKind::Incorrect) => s.fp += 1,
                    (false, VerdictKind::Unparseable) => {}
                }
            }
        }
    }

    fn block(&self) -> MetricBlock {
        MetricBlock::from_counts(self.support, self.wh_correct, self.wh_count, self.wh_score)
    }
}

fn align<'a>(
    verdicts: &'a [Verdict],
    pairs: &'a [QaPair],
) -> Result<Vec<(&'a QaPair, &'a Verdict)>, EvalError> {
    if verdicts.len() != pairs.len() {
        return Err(EvalError::Alignment(format!(
            "{} verdicts for {} pairs",
            verdicts.len(),
            pairs.len()
        )));
    }
    let by_id: HashMap<&str, &Verdict> = verdicts.iter().map(|v| (v.pair_id.as_str(), v)).collect();
    if by_id.len() != verdicts.len() {
        return Err(EvalError::Alignment("duplicate verdict ids".into()));
    }
    pairs
        .iter()
        .map(|p| match by_id.get(p.id.as_str()) {
            Some(v) => Ok((p, *v)),
            None => Err(EvalError::Alignment(format!("no verdict for {}", p.id))),
        })
        .collect()
}

pub fn compute_metrics(
    verdicts: &[Verdict],
    pairs: &[QaPair],
    which: Which,
    positive: PositiveClass,
) -> Result<MetricBlock, EvalError> {
    compute_metrics_with(verdicts, pairs, which, positive, UnparseablePolicy::default())
}

pub fn compute_metrics_with(
    verdicts: &[Verdict],
    pairs: &[QaPair],
    which: Which,
    positive: PositiveClass,
    unparseable: UnparseablePolicy,
) -> Result<MetricBlock, EvalError> {
    let mut t = Tally::default();
    for (p, v) in align(verdicts, pairs)? {
        t.add(p, v, which, positive, unparseable);
    }
    Ok(t.block())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub wh_threshold: f64,
    pub use_dsg: bool,
    pub positive_class: PositiveClass,
    pub unparseable: UnparseablePolicy,
    /// Score missing responses as unparseable instead of failing.
    pub allow_partial: bool,
    /// Which model's responses to score when the file holds several.
    pub model_name: Option<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            wh_threshold: DEFAULT_WH_THRESHOLD,
            use_dsg: true,
            positive_class: PositiveClass::Yes,
            unparseable: UnparseablePolicy::Incorrect,
            allow_partial: false,
            model_name: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub overall: MetricBlock,
    pub by_category: BTreeMap<String, MetricBlock>,
    pub by_source: BTreeMap<String, MetricBlock>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub wh_accuracy: f64,
    pub wh_mean_match_score: f64,
}

impl MetricDelta {
    pub fn between(off: &MetricBlock, on: &MetricBlock) -> Self {
        MetricDelta {
            accuracy: off.accuracy - on.accuracy,
            precision: off.precision - on.precision,
            recall: off.recall - on.recall,
            f1: off.f1 - on.f1,
            wh_accuracy: off.wh.accuracy - on.wh.accuracy,
            wh_mean_match_score: off.wh.mean_match_score - on.wh.mean_match_score,
        }
    }

    pub fn components(&self) -> [f64; 6] {
        [
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.wh_accuracy,
            self.wh_mean_match_score,
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeltaBreakdown {
    pub overall: MetricDelta,
    pub by_category: BTreeMap<String, MetricDelta>,
    pub by_source: BTreeMap<String, MetricDelta>,
}

impl DeltaBreakdown {
    fn between(off: &Breakdown, on: &Breakdown) -> Self {
        let map = |a: &BTreeMap<String, MetricBlock>, b: &BTreeMap<String, MetricBlock>| {
            a.iter()
                .map(|(k, v)| (k.clone(), MetricDelta::between(v, &b[k])))
                .collect()
        };
        DeltaBreakdown {
            overall: MetricDelta::between(&off.overall, &on.overall),
            by_category: map(&off.by_category, &on.by_category),
            by_source: map(&off.by_source, &on.by_source),
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &MetricDelta> {
        std::iter::once(&self.overall)
            .chain(self.by_category.values())
            .chain(self.by_source.values())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_name: String,
    pub pair_count: usize,
    pub overall: MetricBlock,
    pub by_category: BTreeMap<String, MetricBlock>,
    pub by_source: BTreeMap<String, MetricBlock>,
    /// The same breakdown after dependency gating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dsg_on: Option<Breakdown>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dsg_delta: Option<DeltaBreakdown>,
    /// Leaves demoted because a root failed.
    pub skipped_count: usize,
    /// Pairs with no usable response, scored as unparseable.
    pub missing_responses: usize,
}

impl EvalReport {
    pub fn raw(&self) -> Breakdown {
        Breakdown {
            overall: self.overall,
            by_category: self.by_category.clone(),
            by_source: self.by_source.clone(),
        }
    }
}

fn source_key(s: Source) -> &'static str {
    match s {
        Source::Image => "image",
        Source::Caption => "caption",
    }
}

fn breakdown(
    pairs: &[QaPair],
    verdicts: &[Verdict],
    which: Which,
    cfg: &EvalConfig,
) -> Breakdown {
    let mut overall = Tally::default();
    let mut cats: BTreeMap<String, Tally> = Category::ALL
        .iter()
        .map(|c| (c.as_str().to_string(), Tally::default()))
        .collect();
    let mut sources: BTreeMap<String, Tally> = BTreeMap::new();
    for (p, v) in pairs.iter().zip(verdicts) {
        let add = |t: &mut Tally| t.add(p, v, which, cfg.positive_class, cfg.unparseable);
        add(&mut overall);
        add(cats.get_mut(p.category.as_str()).unwrap());
        add(sources.entry(source_key(p.source).to_string()).or_default());
    }
    let blocks = |m: BTreeMap<String, Tally>| m.into_iter().map(|(k, t)| (k, t.block())).collect();
    Breakdown {
        overall: overall.block(),
        by_category: blocks(cats),
        by_source: blocks(sources),
    }
}

/// Judges every pair, gates the verdicts through the forests and builds the report.
///
/// Returns the per-pair verdicts alongside the report.
pub fn evaluate(
    pairs: &[QaPair],
    forests: &[DsgForest],
    responses: &[ResponseRecord],
    scorer: &dyn FreeFormScorer,
    cfg: &EvalConfig,
) -> Result<(EvalReport, Vec<Verdict>), EvalError> {
    let model_name = match &cfg.model_name {
        Some(m) => m.clone(),
        None => {
            let mut names: Vec<String> = responses.iter().map(|r| r.model_name.clone()).collect();
            names.sort();
            names.dedup();
            match names.len() {
                0 => String::new(),
                1 => names.pop().unwrap(),
                _ => return Err(EvalError::MultipleModels(names)),
            }
        }
    };
    let mut answers: HashMap<&str, &ResponseRecord> = HashMap::new();
    for r in responses {
        if r.model_name == model_name && r.error.is_none() {
            answers.insert(&r.pair_id, r);
        }
    }
    let missing: Vec<&QaPair> = pairs.iter().filter(|p| !answers.contains_key(p.id.as_str())).collect();
    if !missing.is_empty() && !cfg.allow_partial {
        return Err(EvalError::Coverage {
            missing: missing.len(),
            first: missing[0].id.clone(),
        });
    }

    let mut verdicts = Vec::with_capacity(pairs.len());
    for p in pairs {
        let v = match answers.get(p.id.as_str()) {
            Some(r) => judge(p, r, scorer, cfg.wh_threshold)?,
            None => Verdict {
                pair_id: p.id.clone(),
                raw: VerdictKind::Unparseable,
                adjusted: VerdictKind::Unparseable,
                match_score: 0.0,
            },
        };
        verdicts.push(v);
    }

    let mut skipped_count = 0;
    if cfg.use_dsg {
        let index: HashMap<&str, usize> =
            pairs.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
        let raw: HashMap<String, VerdictKind> =
            verdicts.iter().map(|v| (v.pair_id.clone(), v.raw)).collect();
        for forest in forests {
            // forests for images outside this pairs file are ignored
            if forest.pair_ids().iter().all(|id| !index.contains_key(id)) {
                continue;
            }
            let prop = propagate_detailed(forest, &raw)?;
            skipped_count += prop.gated.len();
            for id in &prop.gated {
                verdicts[index[id.as_str()]].adjusted = VerdictKind::Incorrect;
            }
        }
    }

    let raw = breakdown(pairs, &verdicts, Which::Raw, cfg);
    let (dsg_on, dsg_delta) = if cfg.use_dsg {
        let on = breakdown(pairs, &verdicts, Which::Adjusted, cfg);
        let delta = DeltaBreakdown::between(&raw, &on);
        (Some(on), Some(delta))
    } else {
        (None, None)
    };
    let report = EvalReport {
        model_name,
        pair_count: pairs.len(),
        overall: raw.overall,
        by_category: raw.by_category,
        by_source: raw.by_source,
        dsg_on,
        dsg_delta,
        skipped_count,
        missing_responses: missing.len(),
    };
    Ok((report, verdicts))
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn cells(b: Option<&MetricBlock>) -> String {
    match b {
        Some(b) => format!(
            "{} | {} | {} | {}",
            pct(b.accuracy),
            pct(b.precision),
            pct(b.recall),
            pct(b.f1)
        ),
        None => "- | - | - | -".into(),
    }
}

/// Renders reports as Markdown tables: one by question source, one by
/// category, and the effect of dependency gating. Values are percentages.
pub fn render_markdown(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    let head = |out: &mut String, groups: &[&str]| {
        let mut h = String::from("| Model |");
        let mut rule = String::from("|---|");
        for g in groups {
            for m in ["Acc.", "P.", "R.", "F1"] {
                let _ = write!(h, " {g} {m} |");
                rule.push_str("---:|");
            }
        }
        out.push_str(&h);
        out.push('\n');
        out.push_str(&rule);
        out.push('\n');
    };

    out.push_str("### By question source\n\n");
    head(&mut out, &["Image", "Caption"]);
    for r in reports {
        let _ = writeln!(
            out,
            "| {} | {} | {} |",
            r.model_name,
            cells(r.by_source.get("image")),
            cells(r.by_source.get("caption"))
        );
    }

    out.push_str("\n### By category\n\n");
    head(&mut out, &["Object", "Attribute", "Relation"]);
    for r in reports {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} |",
            r.model_name,
            cells(r.by_category.get("object")),
            cells(r.by_category.get("attribute")),
            cells(r.by_category.get("relation"))
        );
    }

    if reports.iter().any(|r| r.dsg_on.is_some()) {
        out.push_str("\n### Dependency gating\n\n");
        out.push_str("| Model | Acc. | Acc. (gated) | Δ Acc. | F1 | F1 (gated) | Δ F1 | Skipped |\n");
        out.push_str("|---|---:|---:|---:|---:|---:|---:|---:|\n");
        for r in reports {
            let Some(on) = &r.dsg_on else { continue };
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                r.model_name,
                pct(r.overall.accuracy),
                pct(on.overall.accuracy),
                pct(r.overall.accuracy - on.overall.accuracy),
                pct(r.overall.f1),
                pct(on.overall.f1),
                pct(r.overall.f1 - on.overall.f1),
                r.skipped_count
            );
        }
    }
    out
}
