//! Rule-based fact extraction from English captions.
//!
//! Tagging is closed-world: a word is a noun only if the [`Lexicon`] lists
//! it. Modifiers (adjectives, numerals) attach to the nearest following
//! noun, and a copular `NOUN is ADJ` attaches backwards. Relations come from
//! two left-to-right patterns:
//!
//! * `NOUN [is|are] VERB (DET|ADJ|NUM)* NOUN` gives `(verb, left, right)`
//! * `NOUN x{0,2} PREP (DET|ADJ|NUM)* NOUN` gives `(prep, left, right)`
//!
//! Sentences are processed independently and their facts merged.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::Lexicon;
use crate::scene_facts::{
    normalize_text, AttributeFact, AttributeKind, FactSet, ObjectFact, RelationFact, Source,
};

const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "some", "his", "her", "their", "its",
    "my", "your", "our", "each", "every", "another", "several", "many", "few",
];

const COPULAS: &[&str] = &["is", "are", "was", "were"];

// quantity words that, before "of", act as determiners: "a slice of pizza"
const PARTITIVES: &[&str] = &[
    "slice", "slices", "piece", "pieces", "bunch", "bunches", "group", "groups", "couple",
    "pair", "pairs", "lot", "lots", "herd", "herds", "flock", "flocks", "number", "variety",
    "bit", "set", "row", "rows", "line", "stack", "pile", "crowd", "assortment", "collection",
];

// prepositions that stay with the noun in front of them, however that noun
// was reached
const NOUN_BOUND_PREPOSITIONS: &[&str] = &["with", "of"];

const POSSESSIVES: &[&str] = &["his", "her", "their", "its", "my", "your", "our"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("caption is empty")]
    EmptyCaption,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Tag {
    Noun,
    Adj,
    Num,
    Verb,
    Prep,
    Det,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub lemma: String,
    pub tag: Tag,
    pub position: usize,
    /// Index of the sentence the token belongs to.
    pub sentence: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtractConfig {
    /// How many tokens ahead a modifier may look for its noun.
    pub modifier_window: usize,
    /// How many tokens may separate a noun from a following preposition.
    pub preposition_gap: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            modifier_window: 3,
            preposition_gap: 2,
        }
    }
}

fn clean_word(raw: &str) -> String {
    let lower = raw.to_lowercase();
    let trimmed = lower.trim_matches(|c: char| !c.is_alphanumeric());
    let trimmed = trimmed
        .strip_suffix("'s")
        .or_else(|| trimmed.strip_suffix("\u{2019}s"))
        .unwrap_or(trimmed);
    trimmed
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_string()
}

fn ends_sentence(raw: &str) -> bool {
    raw.trim_end_matches(['"', '\'', ')', ']'])
        .ends_with(['.', '!', '?', ';'])
}

fn tag_word(word: &str, lex: &Lexicon) -> (Tag, String) {
    if let Some(n) = lex.numeral_value(word) {
        return (Tag::Num, n.to_string());
    }
    if lex.is_preposition(word) {
        return (Tag::Prep, word.to_string());
    }
    if lex.adjective_kind(word).is_some() {
        return (Tag::Adj, word.to_string());
    }
    if let Some(lemma) = lex.verb_lemma(word) {
        return (Tag::Verb, lemma.to_string());
    }
    if let Some(lemma) = lex.noun_lemma(word) {
        return (Tag::Noun, lemma);
    }
    if DETERMINERS.contains(&word) {
        return (Tag::Det, word.to_string());
    }
    (Tag::Other, word.to_string())
}

/// Splits a caption on whitespace and tags each word.
///
/// Punctuation is stripped from word edges and possessive `'s` removed; a
/// word that is pure punctuation yields no token. Tag priority is numeral,
/// preposition, adjective, verb, noun, determiner, other.
pub fn tokenize_and_tag(caption: &str, lex: &Lexicon) -> Result<Vec<Token>, ExtractError> {
    let mut tokens = Vec::new();
    let mut sentence = 0;
    for raw in caption.split_whitespace() {
        let text = clean_word(raw);
        if !text.is_empty() {
            let (tag, lemma) = tag_word(&text, lex);
            tokens.push(Token {
                text,
                lemma,
                tag,
                position: tokens.len(),
                sentence,
            });
        }
        if ends_sentence(raw) {
            sentence += 1;
        }
    }
    if tokens.is_empty() {
        return Err(ExtractError::EmptyCaption);
    }
    for i in 0..tokens.len() - 1 {
        if PARTITIVES.contains(&tokens[i].text.as_str())
            && tokens[i + 1].text == "of"
            && tokens[i].sentence == tokens[i + 1].sentence
        {
            tokens[i].tag = Tag::Det;
            tokens[i + 1].tag = Tag::Det;
        }
    }
    Ok(tokens)
}

/// Object resolution for one token stream: which tokens denote which
/// object, and which tokens were absorbed as the first word of a compound.
struct Resolution {
    object_at: Vec<Option<String>>,
    compound_modifier: Vec<bool>,
    /// The modifier noun of an unlisted compound. It is still reported as
    /// an object, so that growing the lexicon never loses one, but takes no
    /// modifiers or relations.
    modifier_noun: Vec<Option<String>>,
}

fn same_sentence(tokens: &[Token], a: usize, b: usize) -> bool {
    tokens[a].sentence == tokens[b].sentence
}

fn resolve(tokens: &[Token], lex: &Lexicon) -> Resolution {
    let n = tokens.len();
    let mut object_at: Vec<Option<String>> = vec![None; n];
    let mut compound_modifier = vec![false; n];
    let mut modifier_noun: Vec<Option<String>> = vec![None; n];
    let mut i = 0;
    while i < n {
        if i + 1 < n && same_sentence(tokens, i, i + 1) {
            if let Some(name) = lex.compound_lemma(&tokens[i].text, &tokens[i + 1].text) {
                compound_modifier[i] = true;
                object_at[i + 1] = Some(name);
                i += 2;
                continue;
            }
        }
        if tokens[i].tag == Tag::Noun {
            // an unlisted noun-noun compound names its head: "city street"
            if i + 1 < n && same_sentence(tokens, i, i + 1) && tokens[i + 1].tag == Tag::Noun {
                compound_modifier[i] = true;
                modifier_noun[i] = Some(tokens[i].lemma.clone());
            } else {
                object_at[i] = Some(tokens[i].lemma.clone());
            }
        }
        i += 1;
    }
    Resolution {
        object_at,
        compound_modifier,
        modifier_noun,
    }
}

fn modifier_fact(tok: &Token, lex: &Lexicon) -> Option<AttributeFact> {
    match tok.tag {
        Tag::Adj => lex
            .adjective_kind(&tok.text)
            .map(|k| AttributeFact::new(k, tok.text.clone())),
        Tag::Num => lex
            .numeral_value(&tok.text)
            .filter(|n| *n > 0)
            .map(|n| AttributeFact::new(AttributeKind::Count, n.to_string())),
        _ => None,
    }
}

fn push_object(out: &mut Vec<ObjectFact>, name: &str) -> usize {
    match out.iter().position(|o| o.name == name) {
        Some(i) => i,
        None => {
            out.push(ObjectFact::new(name));
            out.len() - 1
        }
    }
}

/// Objects and their attributes, in order of first mention.
pub fn extract_objects_attributes(tokens: &[Token], lex: &Lexicon) -> Vec<ObjectFact> {
    extract_objects_with(tokens, lex, &ExtractConfig::default())
}

pub fn extract_objects_with(
    tokens: &[Token],
    lex: &Lexicon,
    cfg: &ExtractConfig,
) -> Vec<ObjectFact> {
    let res = resolve(tokens, lex);
    let mut objects: Vec<ObjectFact> = Vec::new();
    let mut pending: Vec<(usize, AttributeFact)> = Vec::new();
    let mut consumed = vec![false; tokens.len()];

    // copular "NOUN is ADJ"
    for i in 0..tokens.len() {
        if res.object_at[i].is_some()
            && i + 2 < tokens.len()
            && same_sentence(tokens, i, i + 2)
            && COPULAS.contains(&tokens[i + 1].text.as_str())
            && tokens[i + 2].tag == Tag::Adj
        {
            if let Some(fact) = modifier_fact(&tokens[i + 2], lex) {
                consumed[i + 2] = true;
                pending.push((i, fact));
            }
        }
    }

    for (j, tok) in tokens.iter().enumerate() {
        if consumed[j] || res.compound_modifier[j] {
            continue;
        }
        let Some(fact) = modifier_fact(tok, lex) else { continue };
        for k in j + 1..=(j + cfg.modifier_window).min(tokens.len() - 1) {
            if !same_sentence(tokens, j, k) {
                break;
            }
            if res.object_at[k].is_some() {
                pending.push((k, fact));
                break;
            }
            if matches!(tokens[k].tag, Tag::Prep | Tag::Verb) && !res.compound_modifier[k] {
                break;
            }
        }
    }

    pending.sort_by_key(|(k, _)| *k);
    let mut pending = pending.into_iter().peekable();
    for (i, name) in res.object_at.iter().enumerate() {
        if let Some(noun) = &res.modifier_noun[i] {
            push_object(&mut objects, noun);
        }
        let Some(name) = name else { continue };
        let idx = push_object(&mut objects, name);
        while let Some((_, fact)) = pending.next_if(|(k, _)| *k == i) {
            objects[idx].add_attribute(fact);
        }
    }
    objects
}

/// Relation triples between extracted objects, first occurrence kept.
pub fn extract_relations(
    tokens: &[Token],
    objects: &[ObjectFact],
    lex: &Lexicon,
) -> Vec<RelationFact> {
    extract_relations_with(tokens, objects, lex, &ExtractConfig::default())
}

fn skip_modifiers(tokens: &[Token], res: &Resolution, mut m: usize, sentence: usize) -> usize {
    while m < tokens.len()
        && tokens[m].sentence == sentence
        && res.object_at[m].is_none()
        && (matches!(tokens[m].tag, Tag::Det | Tag::Adj | Tag::Num) || res.compound_modifier[m])
    {
        m += 1;
    }
    m
}

fn object_after(tokens: &[Token], res: &Resolution, from: usize, sentence: usize) -> Option<usize> {
    let m = skip_modifiers(tokens, res, from, sentence);
    (m < tokens.len() && tokens[m].sentence == sentence && res.object_at[m].is_some()).then_some(m)
}

/// The head of the noun phrase ending at `i`: for "cup of hot coffee" at
/// "coffee", the "cup" token.
fn phrase_head(tokens: &[Token], res: &Resolution, mut i: usize) -> usize {
    loop {
        let mut k = i;
        while k > 0
            && tokens[k - 1].sentence == tokens[i].sentence
            && res.object_at[k - 1].is_none()
            && tokens[k - 1].text != "of"
            && (matches!(tokens[k - 1].tag, Tag::Det | Tag::Adj | Tag::Num) || res.compound_modifier[k - 1])
        {
            k -= 1;
        }
        if k >= 2
            && tokens[k - 1].text == "of"
            && tokens[k - 2].sentence == tokens[i].sentence
            && res.object_at[k - 2].is_some()
        {
            i = k - 2;
        } else {
            return i;
        }
    }
}

/// Longest preposition phrase starting at `j`, as (phrase, token length).
fn preposition_at(tokens: &[Token], lex: &Lexicon, j: usize) -> Option<(String, usize)> {
    for len in (1..=lex.max_preposition_words()).rev() {
        if j + len > tokens.len() || !same_sentence(tokens, j, j + len - 1) {
            continue;
        }
        let phrase = tokens[j..j + len]
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        if lex.is_preposition(&phrase) {
            return Some((phrase, len));
        }
    }
    None
}

pub fn extract_relations_with(
    tokens: &[Token],
    objects: &[ObjectFact],
    lex: &Lexicon,
    cfg: &ExtractConfig,
) -> Vec<RelationFact> {
    let res = resolve(tokens, lex);
    let known: HashSet<&str> = objects.iter().map(|o| o.name.as_str()).collect();
    let mut out: Vec<RelationFact> = Vec::new();
    let mut emit = |rel: RelationFact| {
        if rel.subject != rel.object
            && known.contains(rel.subject.as_str())
            && known.contains(rel.object.as_str())
            && !out.contains(&rel)
        {
            out.push(rel);
        }
    };

    // Object token -> the token its locating or verb relation hangs from.
    // Chains are followed back so that in "a woman sitting on a bench next to
    // a dog" the second phrase also describes the woman.
    let mut governor: Vec<Option<usize>> = vec![None; tokens.len()];
    let climb = |governor: &[Option<usize>], mut s: usize| {
        while let Some(g) = governor[s] {
            s = g;
        }
        s
    };
    let name = |t: usize| res.object_at[t].clone().unwrap();

    for i in 0..tokens.len() {
        if res.object_at[i].is_none() {
            continue;
        }
        let sentence = tokens[i].sentence;

        // "a suit and a tie": the second conjunct shares the first's governor
        let mut k = i;
        while k > 0 && tokens[k - 1].sentence == sentence && matches!(tokens[k - 1].tag, Tag::Det | Tag::Adj | Tag::Num) {
            k -= 1;
        }
        if k >= 2 && tokens[k - 1].text == "and" && res.object_at[k - 2].is_some() && governor[i].is_none() {
            governor[i] = governor[k - 2];
        }

        // NOUN [is|are] VERB ... NOUN
        let mut k = i + 1;
        if k < tokens.len() && COPULAS.contains(&tokens[k].text.as_str()) {
            k += 1;
        }
        if k < tokens.len() && tokens[k].sentence == sentence && tokens[k].tag == Tag::Verb {
            if let Some(r) = object_after(tokens, &res, k + 1, sentence) {
                // an action needs an animate agent: "walking down the street
                // holding an umbrella" is the walker's
                let mut s = phrase_head(tokens, &res, i);
                let up = climb(&governor, s);
                if !lex.is_living(&name(s)) && lex.is_living(&name(up)) {
                    s = up;
                }
                governor[r] = Some(s);
                emit(RelationFact::new(tokens[k].text.clone(), name(s), name(r)));
            }
        }

        // NOUN x{0,gap} PREP ... NOUN
        for j in i + 1..=(i + 1 + cfg.preposition_gap) {
            if j >= tokens.len() || tokens[j].sentence != sentence || res.object_at[j].is_some() {
                break;
            }
            if let Some((phrase, len)) = preposition_at(tokens, lex, j) {
                if let Some(r) = object_after(tokens, &res, j + len, sentence) {
                    let bound = NOUN_BOUND_PREPOSITIONS.contains(&phrase.as_str());
                    // "in his hands" locates the thing held, not the holder
                    let possessive = tokens[j + len..r].iter().any(|t| POSSESSIVES.contains(&t.text.as_str()));
                    let mut s = phrase_head(tokens, &res, i);
                    if !bound && !possessive {
                        s = climb(&governor, s);
                    }
                    if !bound {
                        governor[r] = Some(s);
                    }
                    emit(RelationFact::new(phrase, name(s), name(r)));
                }
                break;
            }
        }
    }
    out
}

/// Full caption path: tokenize, extract objects with attributes, extract relations.
pub fn extract_factset(
    image_id: &str,
    caption: &str,
    lex: &Lexicon,
) -> Result<FactSet, ExtractError> {
    extract_factset_with(image_id, caption, lex, &ExtractConfig::default())
}

pub fn extract_factset_with(
    image_id: &str,
    caption: &str,
    lex: &Lexicon,
    cfg: &ExtractConfig,
) -> Result<FactSet, ExtractError> {
    if caption.trim().is_empty() {
        return Err(ExtractError::EmptyCaption);
    }
    let tokens = tokenize_and_tag(caption, lex)?;
    let objects = extract_objects_with(&tokens, lex, cfg);
    let relations = extract_relations_with(&tokens, &objects, lex, cfg);
    let fs = FactSet {
        image_id: image_id.trim().to_string(),
        source: Source::Caption,
        caption: Some(normalize_text(caption)),
        objects,
        relations,
    };
    debug_assert!(crate::scene_facts::validate_factset(&fs).is_empty());
    Ok(fs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(caption: &str) -> Vec<Tag> {
        tokenize_and_tag(caption, &Lexicon::bundled())
            .unwrap()
            .into_iter()
            .map(|t| t.tag)
            .collect()
    }

    #[test]
    fn hand_tagged_fixtures() {
        use Tag::*;
        assert_eq!(
            tags("a man holding a yellow umbrella"),
            vec![Det, Noun, Verb, Det, Adj, Noun]
        );
        assert_eq!(tags("two dogs"), vec![Num, Noun]);
        assert_eq!(tags("A cat, on the table."), vec![Det, Noun, Prep, Det, Noun]);
    }

    #[test]
    fn empty_caption_is_rejected() {
        let lex = Lexicon::bundled();
        assert_eq!(tokenize_and_tag("", &lex), Err(ExtractError::EmptyCaption));
        assert_eq!(tokenize_and_tag(" ... ", &lex), Err(ExtractError::EmptyCaption));
        assert_eq!(extract_factset("x", "  ", &lex), Err(ExtractError::EmptyCaption));
    }

    #[test]
    fn positions_increase() {
        let toks = tokenize_and_tag("a dog - near a car. two cats", &Lexicon::bundled()).unwrap();
        assert!(toks.windows(2).all(|w| w[0].position < w[1].position));
        assert_eq!(toks.last().unwrap().sentence, 1);
    }

    fn objects(caption: &str, lex: &Lexicon) -> Vec<ObjectFact> {
        extract_objects_attributes(&tokenize_and_tag(caption, lex).unwrap(), lex)
    }

    #[test]
    fn modifiers_attach_forward() {
        let lex = Lexicon::bundled();
        assert_eq!(
            objects("a yellow umbrella", &lex),
            vec![ObjectFact::new("umbrella").with_attribute(AttributeKind::Color, "yellow")]
        );
        assert_eq!(
            objects("two dogs", &lex),
            vec![ObjectFact::new("dog").with_attribute(AttributeKind::Count, "2")]
        );
        assert!(objects("the sky", &lex).is_empty());
    }

    #[test]
    fn modifier_window_and_barriers() {
        let lex = Lexicon::bundled();
        // four tokens away: out of the window
        let objs = objects("a red and very old rusty car", &lex);
        assert_eq!(objs[0].attributes, vec![AttributeFact::new(AttributeKind::State, "old")]);
        // a preposition blocks attachment
        let objs = objects("a man in red on a bench", &lex);
        assert!(objs.iter().all(|o| o.attributes.is_empty()), "{objs:?}");
    }

    #[test]
    fn copular_attribute() {
        let lex = Lexicon::bundled();
        let objs = objects("the car is red and a dog sleeps", &lex);
        assert_eq!(objs[0], ObjectFact::new("car").with_attribute(AttributeKind::Color, "red"));
        assert!(objs[1].attributes.is_empty());
    }

    #[test]
    fn compounds_and_duplicates_merge() {
        let lex = Lexicon::bundled();
        let objs = objects("a red traffic light and a green traffic light", &lex);
        assert_eq!(
            objs,
            vec![ObjectFact::new("traffic light")
                .with_attribute(AttributeKind::Color, "red")
                .with_attribute(AttributeKind::Color, "green")]
        );
        let objs = objects("two hot dogs", &lex);
        assert_eq!(objs, vec![ObjectFact::new("hot dog").with_attribute(AttributeKind::Count, "2")]);
    }

    fn relations(caption: &str) -> Vec<RelationFact> {
        extract_factset("i", caption, &Lexicon::bundled())
            .unwrap()
            .relations
    }

    #[test]
    fn relation_patterns() {
        assert_eq!(
            relations("a man holding a yellow umbrella"),
            vec![RelationFact::new("holding", "man", "umbrella")]
        );
        assert_eq!(relations("a cat on the table"), vec![RelationFact::new("on", "cat", "table")]);
        assert!(relations("a man").is_empty());
        assert_eq!(
            relations("a man sitting on a bench"),
            vec![RelationFact::new("on", "man", "bench")]
        );
        assert_eq!(
            relations("a woman is riding a horse next to a fence"),
            vec![
                RelationFact::new("riding", "woman", "horse"),
                RelationFact::new("next to", "woman", "fence"),
            ]
        );
        // "with" stays on the noun in front of it
        assert_eq!(
            relations("a man holding a plate with a sandwich"),
            vec![
                RelationFact::new("holding", "man", "plate"),
                RelationFact::new("with", "plate", "sandwich"),
            ]
        );
        assert_eq!(
            relations("a bus parked in front of a building"),
            vec![RelationFact::new("in front of", "bus", "building")]
        );
    }

    #[test]
    fn noun_phrase_heads() {
        let lex = Lexicon::bundled();
        let fs = extract_factset("i", "a girl eating a slice of pizza at a table", &lex).unwrap();
        assert_eq!(
            fs.relations,
            vec![
                RelationFact::new("eating", "girl", "pizza"),
                RelationFact::new("at", "girl", "table"),
            ]
        );
        let fs = extract_factset("i", "a cup of coffee on a desk", &lex).unwrap();
        assert_eq!(fs.relations, vec![RelationFact::new("on", "cup", "desk")]);
        let fs = extract_factset("i", "a busy city street", &lex).unwrap();
        let names: Vec<&str> = fs.objects.iter().map(|o| o.name.as_str()).collect();
        // the modifier noun stays an object but carries nothing
        assert_eq!(names, ["city", "street"]);
        assert!(fs.objects[0].attributes.is_empty());
        assert_eq!(fs.objects[1].attributes.len(), 1);
    }

    #[test]
    fn preposition_gap_is_bounded() {
        // three tokens between the noun and the preposition
        assert!(relations("a dog that is lying under the table").is_empty());
        assert_eq!(
            relations("a dog is lying under the table"),
            vec![RelationFact::new("under", "dog", "table")]
        );
    }

    #[test]
    fn sentences_do_not_interact() {
        let lex = Lexicon::bundled();
        let fs = extract_factset("i", "A man is red. Near a dog.", &lex).unwrap();
        assert!(fs.relations.is_empty());
        assert_eq!(fs.objects.len(), 2);
    }

    #[test]
    fn full_caption_path() {
        let lex = Lexicon::bundled();
        let fs = extract_factset("img", "A man holding a yellow umbrella", &lex).unwrap();
        assert_eq!(fs.source, Source::Caption);
        assert_eq!(fs.caption.as_deref(), Some("a man holding a yellow umbrella"));
        assert_eq!(
            fs.objects,
            vec![
                ObjectFact::new("man"),
                ObjectFact::new("umbrella").with_attribute(AttributeKind::Color, "yellow")
            ]
        );
        assert_eq!(fs.relations, vec![RelationFact::new("holding", "man", "umbrella")]);

        let fs = extract_factset("img", "two dogs near a car", &lex).unwrap();
        assert_eq!(
            fs.objects,
            vec![
                ObjectFact::new("dog").with_attribute(AttributeKind::Count, "2"),
                ObjectFact::new("car")
            ]
        );
        assert_eq!(fs.relations, vec![RelationFact::new("near", "dog", "car")]);

        let fs = extract_factset("img", "clouds in the sky", &lex).unwrap();
        assert!(fs.objects.is_empty() && fs.relations.is_empty());
    }
}
