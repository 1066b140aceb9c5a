//! Dependency forests over the questions of one image.
//!
//! Each tree is rooted at an object's existence question, and the questions
//! about that object's attributes and relations hang beneath it. A relation
//! question sits under its subject's root and names the object's root in
//! `co_roots`, so it depends on both. At scoring time a failed root marks
//! every question below it incorrect.
//!
//! ```text
//! is there any man?                    (root)
//! ├── is the man holding the umbrella?  (co-root: umbrella)
//! is there any umbrella?               (root)
//! ├── is the umbrella yellow?
//! └── what color is the umbrella?
//! ```

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::VerdictKind;
use crate::qa_gen::{Polarity, Probe, QaPair};
use crate::scene_facts::FactSet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DsgNode {
    pub pair_id: String,
    #[serde(default)]
    pub children: Vec<DsgNode>,
    /// Other roots this node depends on, besides its parent.
    #[serde(default)]
    pub co_roots: Vec<String>,
}

impl DsgNode {
    fn leaf(pair_id: String) -> Self {
        DsgNode {
            pair_id,
            children: Vec::new(),
            co_roots: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DsgForest {
    pub image_id: String,
    pub roots: Vec<DsgNode>,
    /// Pairs attached to no tree, mostly negatives about absent objects.
    pub orphans: Vec<String>,
}

impl DsgForest {
    /// Every pair id in the forest: roots, their leaves, then orphans.
    pub fn pair_ids(&self) -> Vec<&str> {
        let mut out = Vec::new();
        for root in &self.roots {
            out.push(root.pair_id.as_str());
            out.extend(root.children.iter().map(|c| c.pair_id.as_str()));
        }
        out.extend(self.orphans.iter().map(String::as_str));
        out
    }

    pub fn leaf_count(&self) -> usize {
        self.roots.iter().map(|r| r.children.len()).sum()
    }

    pub fn depth(&self) -> usize {
        fn depth(n: &DsgNode) -> usize {
            1 + n.children.iter().map(depth).max().unwrap_or(0)
        }
        self.roots.iter().map(depth).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ForestOptions {
    /// Gate relation questions on the subject's root only.
    pub single_root_relations: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DsgError {
    #[error("pair {pair_id} belongs to image {found:?}, expected {expected:?}")]
    MixedImages {
        pair_id: String,
        expected: String,
        found: String,
    },
    #[error("duplicate pair id {0}")]
    DuplicatePair(String),
    #[error("pair {pair_id} depends on object {object:?}, which has no existence question")]
    MissingRoot { pair_id: String, object: String },
    #[error("no verdict for pair {0}")]
    IncompleteVerdicts(String),
}

pub fn build_forest(pairs: &[QaPair], fs: &FactSet) -> Result<DsgForest, DsgError> {
    build_forest_with(pairs, fs, ForestOptions::default())
}

pub fn build_forest_with(
    pairs: &[QaPair],
    fs: &FactSet,
    opts: ForestOptions,
) -> Result<DsgForest, DsgError> {
    let mut seen = HashSet::new();
    for p in pairs {
        if p.image_id != fs.image_id {
            return Err(DsgError::MixedImages {
                pair_id: p.id.clone(),
                expected: fs.image_id.clone(),
                found: p.image_id.clone(),
            });
        }
        if !seen.insert(p.id.as_str()) {
            return Err(DsgError::DuplicatePair(p.id.clone()));
        }
    }

    // step 1: existence questions about in-scene objects become roots
    let mut roots: Vec<DsgNode> = Vec::new();
    let mut root_of: HashMap<&str, usize> = HashMap::new();
    let mut is_root = HashSet::new();
    for p in pairs {
        if p.polarity != Polarity::Positive || !p.is_existence() {
            continue;
        }
        let Probe::Object { name } = &p.probe else { unreachable!() };
        if fs.has_object(name) && !root_of.contains_key(name.as_str()) {
            root_of.insert(name, roots.len());
            roots.push(DsgNode::leaf(p.id.clone()));
            is_root.insert(p.id.as_str());
        }
    }

    // step 2: everything about a rooted object becomes that root's leaf
    let mut orphans = Vec::new();
    for p in pairs {
        if is_root.contains(p.id.as_str()) {
            continue;
        }
        let objects = p.probe.objects();
        let rooted: Vec<&str> = objects
            .iter()
            .copied()
            .filter(|o| root_of.contains_key(o))
            .collect();
        if p.polarity == Polarity::Positive {
            if let Some(missing) = objects.iter().find(|o| !root_of.contains_key(**o)) {
                if p.is_existence() {
                    orphans.push(p.id.clone());
                    continue;
                }
                return Err(DsgError::MissingRoot {
                    pair_id: p.id.clone(),
                    object: missing.to_string(),
                });
            }
        }
        let Some((parent, others)) = rooted.split_first() else {
            orphans.push(p.id.clone());
            continue;
        };
        let mut node = DsgNode::leaf(p.id.clone());
        if !opts.single_root_relations {
            node.co_roots = others
                .iter()
                .filter(|o| *o != parent)
                .map(|o| roots[root_of[o]].pair_id.clone())
                .collect();
        }
        roots[root_of[parent]].children.push(node);
    }

    Ok(DsgForest {
        image_id: fs.image_id.clone(),
        roots,
        orphans,
    })
}

/// Verdicts after gating, plus the leaves whose gate failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Propagation {
    pub adjusted: HashMap<String, VerdictKind>,
    pub gated: Vec<String>,
}

/// Marks every leaf under a failed root (parent or co-root) incorrect.
/// Roots and orphans keep their verdicts.
pub fn propagate(
    forest: &DsgForest,
    verdicts: &HashMap<String, VerdictKind>,
) -> Result<HashMap<String, VerdictKind>, DsgError> {
    propagate_detailed(forest, verdicts).map(|p| p.adjusted)
}

pub fn propagate_detailed(
    forest: &DsgForest,
    verdicts: &HashMap<String, VerdictKind>,
) -> Result<Propagation, DsgError> {
    let get = |id: &str| {
        verdicts
            .get(id)
            .copied()
            .ok_or_else(|| DsgError::IncompleteVerdicts(id.to_string()))
    };
    for id in forest.pair_ids() {
        get(id)?;
    }
    let mut adjusted = verdicts.clone();
    let mut gated = Vec::new();
    for root in &forest.roots {
        let root_ok = get(&root.pair_id)? == VerdictKind::Correct;
        for child in &root.children {
            let mut open = root_ok;
            for co in &child.co_roots {
                open &= get(co)? == VerdictKind::Correct;
            }
            if !open {
                adjusted.insert(child.pair_id.clone(), VerdictKind::Incorrect);
                gated.push(child.pair_id.clone());
            }
        }
    }
    Ok(Propagation { adjusted, gated })
}

/// Reads forests from a JSON array or from JSONL.
pub fn load_forests(path: impl AsRef<Path>) -> Result<Vec<DsgForest>, std::io::Error> {
    let text = std::fs::read_to_string(path)?;
    if text.trim_start().starts_with('[') {
        serde_json::from_str(&text).map_err(std::io::Error::other)
    } else {
        crate::jsonl::parse_jsonl(&text)
            .map_err(|(line, msg)| std::io::Error::other(format!("line {line}: {msg}")))
    }
}

pub fn write_forests(path: impl AsRef<Path>, forests: &[DsgForest]) -> std::io::Result<()> {
    let mut text = serde_json::to_string(forests).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(path, text)
}
