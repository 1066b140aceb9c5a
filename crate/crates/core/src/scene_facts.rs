//! Scene facts and their interchange format.
//!
//! A [`FactSet`] is everything known about one image: the objects present,
//! their attributes, and binary relations between them. Fact sets are
//! exchanged as JSON, one per file, or JSONL with one per line:
//!
//! ```json
//! {"image_id": "img1", "source": "caption", "caption": "a man holding an umbrella",
//!  "objects": [{"name": "man", "attributes": []},
//!              {"name": "umbrella", "attributes": [{"kind": "color", "value": "yellow"}]}],
//!  "relations": [{"predicate": "holding", "subject": "man", "object": "umbrella"}]}
//! ```
//!
//! Loading normalizes text (lowercase, single spaces) and then rejects any
//! fact set that breaks an invariant; nothing is repaired.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Which extraction path produced a fact set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Image,
    Caption,
}

impl Source {
    pub const ALL: [Source; 2] = [Source::Image, Source::Caption];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Image => "image",
            Source::Caption => "caption",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Color,
    Count,
    Size,
    Material,
    State,
    Other,
}

impl AttributeKind {
    pub const ALL: [AttributeKind; 6] = [
        AttributeKind::Color,
        AttributeKind::Count,
        AttributeKind::Size,
        AttributeKind::Material,
        AttributeKind::State,
        AttributeKind::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttributeKind::Color => "color",
            AttributeKind::Count => "count",
            AttributeKind::Size => "size",
            AttributeKind::Material => "material",
            AttributeKind::State => "state",
            AttributeKind::Other => "other",
        }
    }

    /// Maps a free-form kind label onto the closed set. Anything that is not
    /// one of the named kinds becomes [`AttributeKind::Other`].
    pub fn from_label(label: &str) -> AttributeKind {
        match label.trim().to_lowercase().as_str() {
            "color" | "colour" => AttributeKind::Color,
            "count" | "number" => AttributeKind::Count,
            "size" => AttributeKind::Size,
            "material" => AttributeKind::Material,
            "state" => AttributeKind::State,
            _ => AttributeKind::Other,
        }
    }
}

impl fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttributeFact {
    pub kind: AttributeKind,
    pub value: String,
}

impl AttributeFact {
    pub fn new(kind: AttributeKind, value: impl Into<String>) -> Self {
        AttributeFact {
            kind,
            value: value.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectFact {
    pub name: String,
    pub attributes: Vec<AttributeFact>,
}

impl ObjectFact {
    pub fn new(name: impl Into<String>) -> Self {
        ObjectFact {
            name: name.into(),
            attributes: Vec::new(),
        }
    }

    pub fn with_attribute(mut self, kind: AttributeKind, value: impl Into<String>) -> Self {
        self.attributes.push(AttributeFact::new(kind, value));
        self
    }

    /// Adds an attribute unless an identical one is already present.
    pub fn add_attribute(&mut self, attr: AttributeFact) -> bool {
        if self.attributes.contains(&attr) {
            false
        } else {
            self.attributes.push(attr);
            true
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationFact {
    pub predicate: String,
    pub subject: String,
    pub object: String,
}

impl RelationFact {
    pub fn new(
        predicate: impl Into<String>,
        subject: impl Into<String>,
        object: impl Into<String>,
    ) -> Self {
        RelationFact {
            predicate: predicate.into(),
            subject: subject.into(),
            object: object.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactSet {
    pub image_id: String,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    pub objects: Vec<ObjectFact>,
    pub relations: Vec<RelationFact>,
}

impl FactSet {
    pub fn new(image_id: impl Into<String>, source: Source) -> Self {
        FactSet {
            image_id: image_id.into(),
            source,
            caption: None,
            objects: Vec::new(),
            relations: Vec::new(),
        }
    }

    pub fn object(&self, name: &str) -> Option<&ObjectFact> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn has_object(&self, name: &str) -> bool {
        self.object(name).is_some()
    }

    /// Lowercases every text field and collapses runs of whitespace.
    pub fn normalize(&mut self) {
        self.image_id = self.image_id.trim().to_string();
        if let Some(caption) = &mut self.caption {
            *caption = normalize_text(caption);
        }
        for obj in &mut self.objects {
            obj.name = normalize_text(&obj.name);
            for attr in &mut obj.attributes {
                attr.value = normalize_text(&attr.value);
            }
        }
        for rel in &mut self.relations {
            rel.predicate = normalize_text(&rel.predicate);
            rel.subject = normalize_text(&rel.subject);
            rel.object = normalize_text(&rel.object);
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("fact sets always serialize")
    }
}

pub fn normalize_text(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// One broken invariant, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    EmptyImageId,
    MissingCaption,
    EmptyObjectName { index: usize },
    UntrimmedObjectName { name: String },
    NewlineInObjectName { name: String },
    DuplicateObject { name: String },
    EmptyAttributeValue { object: String },
    NonLowercaseValue { object: String, value: String },
    DuplicateAttribute { object: String, kind: AttributeKind, value: String },
    NonIntegerCount { object: String, value: String },
    EmptyPredicate { index: usize },
    ReflexiveRelation { predicate: String, name: String },
    DanglingEndpoint { predicate: String, name: String },
}

impl Violation {
    pub fn field(&self) -> &'static str {
        match self {
            Violation::EmptyImageId => "image_id",
            Violation::MissingCaption => "caption",
            Violation::EmptyObjectName { .. }
            | Violation::UntrimmedObjectName { .. }
            | Violation::NewlineInObjectName { .. }
            | Violation::DuplicateObject { .. } => "objects.name",
            Violation::EmptyAttributeValue { .. }
            | Violation::NonLowercaseValue { .. }
            | Violation::DuplicateAttribute { .. }
            | Violation::NonIntegerCount { .. } => "objects.attributes",
            Violation::EmptyPredicate { .. } | Violation::ReflexiveRelation { .. } => {
                "relations.predicate"
            }
            Violation::DanglingEndpoint { .. } => "relations.endpoint",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyImageId => write!(f, "image_id is empty"),
            Violation::MissingCaption => write!(f, "caption-sourced fact set has no caption"),
            Violation::EmptyObjectName { index } => write!(f, "object #{index} has an empty name"),
            Violation::UntrimmedObjectName { name } => {
                write!(f, "object name {name:?} has surrounding whitespace")
            }
            Violation::NewlineInObjectName { name } => {
                write!(f, "object name {name:?} contains a newline")
            }
            Violation::DuplicateObject { name } => write!(f, "duplicate object {name:?}"),
            Violation::EmptyAttributeValue { object } => {
                write!(f, "object {object:?} has an empty attribute value")
            }
            Violation::NonLowercaseValue { object, value } => {
                write!(f, "attribute {value:?} of {object:?} is not lowercase")
            }
            Violation::DuplicateAttribute { object, kind, value } => {
                write!(f, "object {object:?} repeats attribute {kind}={value:?}")
            }
            Violation::NonIntegerCount { object, value } => {
                write!(f, "count {value:?} of {object:?} is not a positive integer")
            }
            Violation::EmptyPredicate { index } => {
                write!(f, "relation #{index} has an empty predicate")
            }
            Violation::ReflexiveRelation { predicate, name } => {
                write!(f, "relation {predicate:?} links {name:?} to itself")
            }
            Violation::DanglingEndpoint { predicate, name } => {
                write!(f, "relation {predicate:?} refers to unknown object {name:?}")
            }
        }
    }
}

/// Checks every fact-set invariant. An empty result means the fact set is valid.
pub fn validate_factset(fs: &FactSet) -> Vec<Violation> {
    let mut out = Vec::new();
    if fs.image_id.trim().is_empty() {
        out.push(Violation::EmptyImageId);
    }
    if fs.source == Source::Caption && fs.caption.is_none() {
        out.push(Violation::MissingCaption);
    }

    let mut names = HashSet::new();
    for (index, obj) in fs.objects.iter().enumerate() {
        if obj.name.trim().is_empty() {
            out.push(Violation::EmptyObjectName { index });
        } else if obj.name.trim() != obj.name {
            out.push(Violation::UntrimmedObjectName {
                name: obj.name.clone(),
            });
        }
        if obj.name.contains(['\n', '\r']) {
            out.push(Violation::NewlineInObjectName {
                name: obj.name.clone(),
            });
        }
        if !names.insert(obj.name.as_str()) {
            out.push(Violation::DuplicateObject {
                name: obj.name.clone(),
            });
        }

        let mut seen = HashSet::new();
        for attr in &obj.attributes {
            if attr.value.is_empty() {
                out.push(Violation::EmptyAttributeValue {
                    object: obj.name.clone(),
                });
            } else if attr.value.to_lowercase() != attr.value {
                out.push(Violation::NonLowercaseValue {
                    object: obj.name.clone(),
                    value: attr.value.clone(),
                });
            }
            if attr.kind == AttributeKind::Count && !is_positive_integer(&attr.value) {
                out.push(Violation::NonIntegerCount {
                    object: obj.name.clone(),
                    value: attr.value.clone(),
                });
            }
            if !seen.insert((attr.kind, attr.value.as_str())) {
                out.push(Violation::DuplicateAttribute {
                    object: obj.name.clone(),
                    kind: attr.kind,
                    value: attr.value.clone(),
                });
            }
        }
    }

    for (index, rel) in fs.relations.iter().enumerate() {
        if rel.predicate.trim().is_empty() {
            out.push(Violation::EmptyPredicate { index });
        }
        if rel.subject == rel.object {
            out.push(Violation::ReflexiveRelation {
                predicate: rel.predicate.clone(),
                name: rel.subject.clone(),
            });
        }
        for end in [&rel.subject, &rel.object] {
            if !names.contains(end.as_str()) {
                out.push(Violation::DanglingEndpoint {
                    predicate: rel.predicate.clone(),
                    name: end.clone(),
                });
            }
        }
    }
    out
}

fn is_positive_integer(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) && s.parse::<u64>().is_ok_and(|n| n > 0)
}

/// The deduplicated object names, attribute values and predicates of a fact set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    pub objects: BTreeSet<String>,
    pub attributes: BTreeSet<String>,
    pub predicates: BTreeSet<String>,
}

pub fn vocabulary(fs: &FactSet) -> Vocabulary {
    let mut v = Vocabulary::default();
    for obj in &fs.objects {
        v.objects.insert(obj.name.clone());
        v.attributes
            .extend(obj.attributes.iter().map(|a| a.value.clone()));
    }
    v.predicates
        .extend(fs.relations.iter().map(|r| r.predicate.clone()));
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SchemaMode {
    /// Unknown fields are an error.
    #[default]
    Strict,
    /// Unknown fields are ignored.
    Lenient,
}

#[derive(Debug, Error)]
pub enum FactError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON{}: {message}", line_suffix(*line))]
    Parse { line: Option<usize>, message: String },
    #[error("schema error{}: {message}", line_suffix(*line))]
    Schema { line: Option<usize>, message: String },
    #[error("integrity error in {image_id:?}{}: {}", line_suffix(*line), join_violations(violations))]
    Integrity {
        line: Option<usize>,
        image_id: String,
        violations: Vec<Violation>,
    },
}

fn line_suffix(line: Option<usize>) -> String {
    line.map(|l| format!(" at line {l}")).unwrap_or_default()
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

const FACTSET_FIELDS: &[&str] = &["image_id", "source", "caption", "objects", "relations"];
const OBJECT_FIELDS: &[&str] = &["name", "attributes"];
const ATTRIBUTE_FIELDS: &[&str] = &["kind", "value"];
const RELATION_FIELDS: &[&str] = &["predicate", "subject", "object"];

#[derive(Deserialize)]
struct RawFactSet {
    image_id: String,
    source: Source,
    #[serde(default)]
    caption: Option<String>,
    objects: Vec<RawObject>,
    relations: Vec<RelationFact>,
}

#[derive(Deserialize)]
struct RawObject {
    name: String,
    attributes: Vec<RawAttribute>,
}

#[derive(Deserialize)]
struct RawAttribute {
    kind: String,
    value: String,
}

fn check_fields(v: &Value, allowed: &[&str], what: &str) -> Result<(), String> {
    if let Value::Object(map) = v {
        if let Some(extra) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(format!("unknown field {extra:?} in {what}"));
        }
    }
    Ok(())
}

fn check_unknown_fields(v: &Value) -> Result<(), String> {
    check_fields(v, FACTSET_FIELDS, "fact set")?;
    let list = |key: &str| v.get(key).and_then(Value::as_array).into_iter().flatten();
    for obj in list("objects") {
        check_fields(obj, OBJECT_FIELDS, "object")?;
        for attr in obj.get("attributes").and_then(Value::as_array).into_iter().flatten() {
            check_fields(attr, ATTRIBUTE_FIELDS, "attribute")?;
        }
    }
    for rel in list("relations") {
        check_fields(rel, RELATION_FIELDS, "relation")?;
    }
    Ok(())
}

/// Parses one fact set from JSON text, normalizing and validating it.
pub fn parse_factset(text: &str, mode: SchemaMode) -> Result<FactSet, FactError> {
    parse_at(text, mode, None)
}

fn parse_at(text: &str, mode: SchemaMode, line: Option<usize>) -> Result<FactSet, FactError> {
    let value: Value = serde_json::from_str(text).map_err(|e| FactError::Parse {
        line,
        message: e.to_string(),
    })?;
    if mode == SchemaMode::Strict {
        check_unknown_fields(&value).map_err(|message| FactError::Schema { line, message })?;
    }
    let raw: RawFactSet = serde_json::from_value(value).map_err(|e| FactError::Schema {
        line,
        message: e.to_string(),
    })?;
    let mut fs = FactSet {
        image_id: raw.image_id,
        source: raw.source,
        caption: raw.caption,
        objects: raw
            .objects
            .into_iter()
            .map(|o| ObjectFact {
                name: o.name,
                attributes: o
                    .attributes
                    .into_iter()
                    .map(|a| AttributeFact::new(AttributeKind::from_label(&a.kind), a.value))
                    .collect(),
            })
            .collect(),
        relations: raw.relations,
    };
    fs.normalize();
    let violations = validate_factset(&fs);
    if violations.is_empty() {
        Ok(fs)
    } else {
        Err(FactError::Integrity {
            line,
            image_id: fs.image_id,
            violations,
        })
    }
}

fn read_file(path: &Path) -> Result<String, FactError> {
    std::fs::read_to_string(path).map_err(|source| FactError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads a single-fact-set JSON file in strict mode.
pub fn load_factset(path: impl AsRef<Path>) -> Result<FactSet, FactError> {
    load_factset_with(path, SchemaMode::Strict)
}

pub fn load_factset_with(path: impl AsRef<Path>, mode: SchemaMode) -> Result<FactSet, FactError> {
    parse_factset(&read_file(path.as_ref())?, mode)
}

pub fn write_factset(path: impl AsRef<Path>, fs: &FactSet) -> std::io::Result<()> {
    std::fs::write(path, fs.to_json() + "\n")
}

/// Parses a JSONL corpus; blank lines are skipped and errors carry 1-based line numbers.
pub fn parse_corpus(text: &str, mode: SchemaMode) -> Result<Vec<FactSet>, FactError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_at(l, mode, Some(i + 1)))
        .collect()
}

/// Loads either a JSONL corpus or a single JSON fact set, whichever the file holds.
pub fn load_corpus(path: impl AsRef<Path>, mode: SchemaMode) -> Result<Vec<FactSet>, FactError> {
    let text = read_file(path.as_ref())?;
    let non_blank: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if non_blank.len() > 1 && serde_json::from_str::<Value>(&text).is_ok() {
        // a pretty-printed single document
        return parse_factset(&text, mode).map(|fs| vec![fs]);
    }
    parse_corpus(&text, mode)
}

pub fn write_corpus(path: impl AsRef<Path>, corpus: &[FactSet]) -> std::io::Result<()> {
    let mut text = String::new();
    for fs in corpus {
        text.push_str(&fs.to_json());
        text.push('\n');
    }
    std::fs::write(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn man_umbrella() -> FactSet {
        let mut fs = FactSet::new("img1", Source::Image);
        fs.objects.push(ObjectFact::new("man"));
        fs.objects
            .push(ObjectFact::new("umbrella").with_attribute(AttributeKind::Color, "yellow"));
        fs.relations
            .push(RelationFact::new("holding", "man", "umbrella"));
        fs
    }

    #[test]
    fn minimal_file_loads() {
        let text = r#"{"image_id":"img1","source":"image","objects":[{"name":"man","attributes":[]},{"name":"umbrella","attributes":[]}],"relations":[{"predicate":"holding","subject":"man","object":"umbrella"}]}"#;
        let fs = parse_factset(text, SchemaMode::Strict).unwrap();
        assert_eq!(fs.objects.len(), 2);
        assert_eq!(fs.relations.len(), 1);
    }

    #[test]
    fn dangling_endpoint_is_integrity_error() {
        let text = r#"{"image_id":"img1","source":"image","objects":[{"name":"man","attributes":[]}],"relations":[{"predicate":"walking","subject":"man","object":"dog"}]}"#;
        match parse_factset(text, SchemaMode::Strict) {
            Err(FactError::Integrity { violations, .. }) => assert_eq!(
                violations,
                vec![Violation::DanglingEndpoint {
                    predicate: "walking".into(),
                    name: "dog".into()
                }]
            ),
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_json_is_parse_error() {
        assert!(matches!(
            parse_factset("{\"image_id\": ", SchemaMode::Strict),
            Err(FactError::Parse { .. })
        ));
    }

    #[test]
    fn missing_and_extra_fields_are_schema_errors() {
        let missing = r#"{"image_id":"a","source":"image","objects":[]}"#;
        assert!(matches!(
            parse_factset(missing, SchemaMode::Strict),
            Err(FactError::Schema { .. })
        ));
        let extra = r#"{"image_id":"a","source":"image","objects":[{"name":"cat","attributes":[],"score":0.9}],"relations":[]}"#;
        assert!(matches!(
            parse_factset(extra, SchemaMode::Strict),
            Err(FactError::Schema { .. })
        ));
        let fs = parse_factset(extra, SchemaMode::Lenient).unwrap();
        assert_eq!(fs.objects[0].name, "cat");
    }

    #[test]
    fn load_normalizes_case_and_whitespace() {
        let text = r#"{"image_id":"a","source":"caption","caption":"A  Yellow\tUmbrella","objects":[{"name":" Traffic   Light ","attributes":[{"kind":"Colour","value":"RED"}]}],"relations":[]}"#;
        let fs = parse_factset(text, SchemaMode::Strict).unwrap();
        assert_eq!(fs.caption.as_deref(), Some("a yellow umbrella"));
        assert_eq!(fs.objects[0].name, "traffic light");
        assert_eq!(fs.objects[0].attributes[0], AttributeFact::new(AttributeKind::Color, "red"));
    }

    #[test]
    fn unknown_attribute_kind_collapses_to_other() {
        assert_eq!(AttributeKind::from_label("shape"), AttributeKind::Other);
        assert_eq!(AttributeKind::from_label("COLOR"), AttributeKind::Color);
    }

    #[test]
    fn caption_source_requires_caption() {
        let mut fs = man_umbrella();
        fs.source = Source::Caption;
        assert_eq!(validate_factset(&fs), vec![Violation::MissingCaption]);
    }

    #[test]
    fn validate_reports_named_violations() {
        assert!(validate_factset(&man_umbrella()).is_empty());

        let mut dup = man_umbrella();
        dup.objects.push(ObjectFact::new("car"));
        dup.objects.push(ObjectFact::new("car"));
        assert_eq!(
            validate_factset(&dup),
            vec![Violation::DuplicateObject { name: "car".into() }]
        );

        let mut count = man_umbrella();
        count.objects[0]
            .attributes
            .push(AttributeFact::new(AttributeKind::Count, "many"));
        let v = validate_factset(&count);
        assert!(matches!(v.as_slice(), [Violation::NonIntegerCount { .. }]));
        assert_eq!(v[0].field(), "objects.attributes");

        let mut zero = man_umbrella();
        zero.objects[0]
            .attributes
            .push(AttributeFact::new(AttributeKind::Count, "0"));
        assert!(matches!(
            validate_factset(&zero).as_slice(),
            [Violation::NonIntegerCount { .. }]
        ));

        let mut refl = man_umbrella();
        refl.relations.push(RelationFact::new("near", "man", "man"));
        assert!(matches!(
            validate_factset(&refl).as_slice(),
            [Violation::ReflexiveRelation { .. }]
        ));
    }

    #[test]
    fn vocabulary_dedups_values() {
        let mut fs = FactSet::new("a", Source::Image);
        fs.objects
            .push(ObjectFact::new("car").with_attribute(AttributeKind::Color, "red"));
        fs.objects
            .push(ObjectFact::new("bus").with_attribute(AttributeKind::Color, "red"));
        let v = vocabulary(&fs);
        assert_eq!(v.objects.len(), 2);
        assert_eq!(v.attributes, BTreeSet::from(["red".to_string()]));
        assert!(v.predicates.is_empty());
    }

    #[test]
    fn corpus_errors_carry_line_numbers() {
        let text = "{\"image_id\":\"a\",\"source\":\"image\",\"objects\":[],\"relations\":[]}\n\nnot json\n";
        match parse_corpus(text, SchemaMode::Strict) {
            Err(FactError::Parse { line, .. }) => assert_eq!(line, Some(3)),
            other => panic!("{other:?}"),
        }
    }
}
