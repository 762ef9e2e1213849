//! File and wire formats.
//!
//! * Sentence files: UTF-8 text, one sentence per line, tokens separated by
//!   whitespace. LF and CRLF are accepted; LF is written.
//! * Bracketed trees: unlabeled parentheses. A leaf prints as its token, an
//!   internal node as `(` + children joined by spaces + `)`, and the top-level
//!   forest prints flat, e.g. `(My dog) (also likes) (eating sausage)`.
//! * Cluster documents: JSON with `mentions`, `links` and `groups`, in that
//!   key order.
//! * Task descriptors: JSON submitted by annotation gatherers.

use crate::cluster_graph::{
    ClusterError, ClusterGraph, MentionNode, NodeId, DEFAULT_ABBREVIATION_LEN,
};
use crate::palette::Color;
use crate::tree_editor::{valid_token, NodeKind, Shape, TreeDoc, TreeError, TreeNodeId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

pub const TREE_MIME: &str = "text/plain; charset=utf-8";
pub const CLUSTER_MIME: &str = "application/json";

/// Constituent nesting beyond this depth is rejected.
pub const MAX_BRACKET_DEPTH: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormatError {
    #[error("input contains no sentences")]
    NoSentences,
    #[error("token {0:?} contains a bracket")]
    InvalidToken(String),
    #[error("unbalanced brackets at byte {offset}")]
    UnbalancedBrackets { offset: usize },
    #[error("empty constituent at byte {offset}")]
    EmptyConstituent { offset: usize },
    #[error("constituent at byte {offset} brackets a single token")]
    SingleChildConstituent { offset: usize },
    #[error("brackets nested deeper than {MAX_BRACKET_DEPTH}")]
    NestingTooDeep,
    #[error("tree contains no tokens")]
    EmptyTree,
    #[error("tree tokens {found:?} do not match the expected sentence {expected:?}")]
    TokenMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("dangling reference: {0}")]
    DanglingReference(String),
}

impl FormatError {
    pub fn code(&self) -> &'static str {
        match self {
            FormatError::NoSentences => "NoSentences",
            FormatError::InvalidToken(_) => "InvalidToken",
            FormatError::UnbalancedBrackets { .. } => "UnbalancedBrackets",
            FormatError::EmptyConstituent { .. } => "EmptyConstituent",
            FormatError::SingleChildConstituent { .. } => "SingleChildConstituent",
            FormatError::NestingTooDeep => "NestingTooDeep",
            FormatError::EmptyTree => "EmptyTree",
            FormatError::TokenMismatch { .. } => "TokenMismatch",
            FormatError::SchemaViolation(_) => "SchemaViolation",
            FormatError::DanglingReference(_) => "DanglingReference",
        }
    }
}

// ---------------------------------------------------------------------------
// Sentence files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceFile {
    pub sentences: Vec<Vec<String>>,
}

pub fn parse_sentence_file(text: &str) -> Result<SentenceFile, FormatError> {
    let mut sentences = Vec::new();
    for line in text.lines() {
        let tokens: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
        if tokens.is_empty() {
            continue;
        }
        if let Some(bad) = tokens.iter().find(|t| !valid_token(t)) {
            return Err(FormatError::InvalidToken(bad.clone()));
        }
        sentences.push(tokens);
    }
    if sentences.is_empty() {
        return Err(FormatError::NoSentences);
    }
    Ok(SentenceFile { sentences })
}

impl SentenceFile {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            out.push_str(&s.join(" "));
            out.push('\n');
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Bracketed trees
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BracketedTree(pub String);

impl BracketedTree {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for BracketedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn serialize_tree(doc: &TreeDoc) -> BracketedTree {
    let mut out = String::new();
    let root = doc.node(doc.root()).expect("root exists");
    for (i, &c) in root.children.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write_subtree(doc, c, &mut out);
    }
    BracketedTree(out)
}

fn write_subtree(doc: &TreeDoc, id: TreeNodeId, out: &mut String) {
    let node = doc.node(id).expect("reachable node");
    match node.kind {
        NodeKind::Leaf { token_index } => out.push_str(&doc.tokens()[token_index]),
        NodeKind::Internal => {
            out.push('(');
            for (i, &c) in node.children.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write_subtree(doc, c, out);
            }
            out.push(')');
        }
    }
}

/// Parses bracket notation back into a document. When `tokens_expected` is
/// given, the leaves must spell exactly that sentence.
pub fn parse_bracketed<S: AsRef<str>>(
    text: &str,
    tokens_expected: Option<&[S]>,
) -> Result<TreeDoc, FormatError> {
    let mut tokens: Vec<String> = Vec::new();
    // Each frame holds the children collected so far and the byte offset of
    // its opening bracket.
    let mut frames: Vec<(Vec<Shape>, usize)> = vec![(Vec::new(), 0)];
    let mut chars = text.char_indices().peekable();

    while let Some((offset, c)) = chars.next() {
        match c {
            '(' => {
                if frames.len() > MAX_BRACKET_DEPTH {
                    return Err(FormatError::NestingTooDeep);
                }
                frames.push((Vec::new(), offset));
            }
            ')' => {
                if frames.len() == 1 {
                    return Err(FormatError::UnbalancedBrackets { offset });
                }
                let (kids, open) = frames.pop().expect("checked length");
                // Editing can wrap a constituent in another (grouping every
                // child of a node), but never leaves a bracket around a lone
                // token.
                match kids.as_slice() {
                    [] => return Err(FormatError::EmptyConstituent { offset: open }),
                    [Shape::Leaf(_)] => {
                        return Err(FormatError::SingleChildConstituent { offset: open })
                    }
                    _ => frames
                        .last_mut()
                        .expect("base frame")
                        .0
                        .push(Shape::Node(kids)),
                }
            }
            c if c.is_whitespace() => {}
            _ => {
                let mut end = offset + c.len_utf8();
                while let Some(&(i, d)) = chars.peek() {
                    if d.is_whitespace() || d == '(' || d == ')' {
                        break;
                    }
                    end = i + d.len_utf8();
                    chars.next();
                }
                frames
                    .last_mut()
                    .expect("base frame")
                    .0
                    .push(Shape::Leaf(tokens.len()));
                tokens.push(text[offset..end].to_owned());
            }
        }
    }
    if frames.len() > 1 {
        let (_, open) = frames.pop().expect("unclosed frame");
        return Err(FormatError::UnbalancedBrackets { offset: open });
    }
    if tokens.is_empty() {
        return Err(FormatError::EmptyTree);
    }
    if let Some(expected) = tokens_expected {
        if expected.len() != tokens.len()
            || expected.iter().zip(&tokens).any(|(e, t)| e.as_ref() != t)
        {
            return Err(FormatError::TokenMismatch {
                expected: expected.iter().map(|s| s.as_ref().to_owned()).collect(),
                found: tokens,
            });
        }
    }
    let forest = frames.pop().expect("base frame").0;
    TreeDoc::from_forest(&tokens, forest).map_err(|e| match e {
        TreeError::InvalidToken(t) => FormatError::InvalidToken(t),
        other => FormatError::SchemaViolation(other.to_string()),
    })
}

// ---------------------------------------------------------------------------
// Cluster documents
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MentionRecord {
    pub id: NodeId,
    pub token_index: usize,
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupRecord {
    pub color: Color,
    pub members: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterDocument {
    pub mentions: Vec<MentionRecord>,
    pub links: Vec<[NodeId; 2]>,
    pub groups: Vec<GroupRecord>,
}

impl ClusterDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cluster documents always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        serde_json::from_str(text).map_err(|e| FormatError::SchemaViolation(e.to_string()))
    }
}

/// Mentions by id, links as sorted pairs, groups ordered by smallest member
/// (singletons included).
pub fn serialize_clusters(g: &ClusterGraph) -> ClusterDocument {
    ClusterDocument {
        mentions: g
            .nodes()
            .map(|m| MentionRecord {
                id: m.id,
                token_index: m.token_index,
                surface: m.surface.clone(),
            })
            .collect(),
        links: g.links().map(|l| [l.a, l.b]).collect(),
        groups: g
            .groups()
            .into_iter()
            .map(|gr| GroupRecord {
                color: gr.color,
                members: gr.members,
            })
            .collect(),
    }
}

pub fn parse_clusters(doc: &ClusterDocument) -> Result<ClusterGraph, FormatError> {
    parse_clusters_with(doc, DEFAULT_ABBREVIATION_LEN)
}

pub fn parse_clusters_with(
    doc: &ClusterDocument,
    abbreviation_len: usize,
) -> Result<ClusterGraph, FormatError> {
    let mentions = doc
        .mentions
        .iter()
        .map(|m| MentionNode::new(m.id, m.token_index, m.surface.clone(), abbreviation_len));
    let links = doc.links.iter().map(|&[a, b]| (a, b));
    let groups = doc.groups.iter().map(|g| (g.members.clone(), g.color));
    ClusterGraph::from_parts(mentions, links, groups).map_err(|e| match e {
        ClusterError::UnknownNode(id) => {
            FormatError::DanglingReference(format!("node {id} is not a mention"))
        }
        other => FormatError::SchemaViolation(other.to_string()),
    })
}

// ---------------------------------------------------------------------------
// Task descriptors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Clustering,
    Parsing,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Clustering => "clustering",
            TaskKind::Parsing => "parsing",
        })
    }
}

/// Source text plus pre-identified mentions. `token_index` counts
/// whitespace-separated tokens of `text`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusteringPayload {
    pub text: String,
    pub mentions: Vec<MentionRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum TaskBody {
    Clustering(ClusteringPayload),
    Parsing(SentenceFile),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDescriptor {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    #[serde(flatten)]
    pub body: TaskBody,
    /// Gatherer-supplied page fragment, stored and served verbatim.
    #[serde(default)]
    pub display_html: String,
}

pub(crate) fn valid_task_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

impl TaskDescriptor {
    pub fn kind(&self) -> TaskKind {
        match self.body {
            TaskBody::Clustering(_) => TaskKind::Clustering,
            TaskBody::Parsing(_) => TaskKind::Parsing,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        let desc: TaskDescriptor =
            serde_json::from_str(text).map_err(|e| FormatError::SchemaViolation(e.to_string()))?;
        desc.validate()?;
        Ok(desc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("task descriptors always serialize")
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        if let Some(id) = &self.task_id {
            if !valid_task_id(id) {
                return Err(FormatError::SchemaViolation(format!(
                    "task id {id:?} must be 1-64 characters of [A-Za-z0-9_-]"
                )));
            }
        }
        match &self.body {
            TaskBody::Parsing(file) => {
                if file.sentences.is_empty() {
                    return Err(FormatError::NoSentences);
                }
                for (i, s) in file.sentences.iter().enumerate() {
                    if s.is_empty() {
                        return Err(FormatError::SchemaViolation(format!(
                            "sentence {i} is empty"
                        )));
                    }
                    if let Some(bad) = s.iter().find(|t| !valid_token(t)) {
                        return Err(FormatError::InvalidToken(bad.clone()));
                    }
                }
            }
            TaskBody::Clustering(p) => {
                if p.mentions.is_empty() {
                    return Err(FormatError::SchemaViolation(
                        "clustering task has no mentions".into(),
                    ));
                }
                let token_count = p.text.split_whitespace().count();
                let mut ids = BTreeSet::new();
                let mut positions = BTreeSet::new();
                for m in &p.mentions {
                    if !ids.insert(m.id) {
                        return Err(FormatError::SchemaViolation(format!(
                            "duplicate mention id {}",
                            m.id
                        )));
                    }
                    if !positions.insert(m.token_index) {
                        return Err(FormatError::SchemaViolation(format!(
                            "token index {} is used by two mentions",
                            m.token_index
                        )));
                    }
                    if m.token_index >= token_count {
                        return Err(FormatError::SchemaViolation(format!(
                            "mention {} points at token {} but the text has {token_count} tokens",
                            m.id, m.token_index
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

impl ClusteringPayload {
    pub fn initial_graph(&self, abbreviation_len: usize) -> Result<ClusterGraph, FormatError> {
        ClusterGraph::from_mentions(
            self.mentions.iter().map(|m| {
                MentionNode::new(m.id, m.token_index, m.surface.clone(), abbreviation_len)
            }),
        )
        .map_err(|e| FormatError::SchemaViolation(e.to_string()))
    }
}
