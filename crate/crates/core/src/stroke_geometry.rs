//! Turning a drawn stroke over the rendered tree into an edit.
//!
//! The tree is drawn sideways: word nodes sit at `x = 0`, one row per token,
//! and a node's depth above the words grows along `+x`. Every parent-child
//! pair (including virtual-root edges) is a straight edge. A stroke cutting
//! one edge asks to delete the node below it; cutting several asks to group
//! the nodes below them.

use crate::geometry::{segments_intersect, Point};
use crate::tree_editor::{NodeKind, TreeDoc, TreeNodeId};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StrokeError {
    #[error("a stroke needs at least two distinct points")]
    TooFewPoints,
    #[error("stroke contains a non-finite coordinate")]
    NonFinitePoint,
    #[error("rendered edge {child} -> {parent} does not match the document")]
    StaleEdges {
        child: TreeNodeId,
        parent: TreeNodeId,
    },
}

/// A polyline with finite points and no consecutive duplicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stroke {
    points: Vec<Point>,
}

impl Stroke {
    pub fn new(points: impl IntoIterator<Item = Point>) -> Result<Self, StrokeError> {
        let mut out: Vec<Point> = Vec::new();
        for p in points {
            if !p.is_finite() {
                return Err(StrokeError::NonFinitePoint);
            }
            if out.last() != Some(&p) {
                out.push(p);
            }
        }
        if out.len() < 2 {
            return Err(StrokeError::TooFewPoints);
        }
        Ok(Self { points: out })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        self.points.windows(2).map(|w| (w[0], w[1]))
    }
}

impl<'de> Deserialize<'de> for Stroke {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            points: Vec<Point>,
        }
        let raw = Raw::deserialize(deserializer)?;
        Stroke::new(raw.points).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedEdge {
    pub child: TreeNodeId,
    pub parent: TreeNodeId,
    pub p_child: Point,
    pub p_parent: Point,
    /// Leftmost token under `child`; hits are reported in this order.
    pub child_leftmost_token: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderMetrics {
    /// Vertical distance between consecutive word nodes.
    pub row_height: f64,
    /// Horizontal distance per level of height above the words.
    pub depth_step: f64,
}

impl Default for RenderMetrics {
    fn default() -> Self {
        Self {
            row_height: 40.0,
            depth_step: 80.0,
        }
    }
}

/// Node centers under the sideways layout convention. A node's x is its
/// height above the words times `depth_step`; its y is the mean y of its
/// children.
pub fn node_positions(doc: &TreeDoc, metrics: &RenderMetrics) -> BTreeMap<TreeNodeId, Point> {
    let mut out = BTreeMap::new();
    place(doc, doc.root(), metrics, &mut out);
    out
}

fn place(
    doc: &TreeDoc,
    id: TreeNodeId,
    metrics: &RenderMetrics,
    out: &mut BTreeMap<TreeNodeId, Point>,
) -> (Point, u32) {
    let node = doc.node(id).expect("reachable node");
    let (p, height) = match node.kind {
        NodeKind::Leaf { token_index } => {
            (Point::new(0.0, token_index as f64 * metrics.row_height), 0)
        }
        NodeKind::Internal => {
            let placed: Vec<(Point, u32)> = node
                .children
                .iter()
                .map(|&c| place(doc, c, metrics, out))
                .collect();
            let height = 1 + placed.iter().map(|&(_, h)| h).max().unwrap_or(0);
            let y = placed.iter().map(|(p, _)| p.y).sum::<f64>() / placed.len().max(1) as f64;
            (Point::new(height as f64 * metrics.depth_step, y), height)
        }
    };
    out.insert(id, p);
    (p, height)
}

/// Every visible parent-child edge. Edges inside a folded subtree are hidden;
/// the folded node's own edge stays.
pub fn render_edges(doc: &TreeDoc, metrics: &RenderMetrics) -> Vec<RenderedEdge> {
    let positions = node_positions(doc, metrics);
    let mut edges = Vec::new();
    let mut stack = vec![doc.root()];
    while let Some(id) = stack.pop() {
        let node = doc.node(id).expect("reachable node");
        if node.folded {
            continue;
        }
        for &c in &node.children {
            edges.push(RenderedEdge {
                child: c,
                parent: id,
                p_child: positions[&c],
                p_parent: positions[&id],
                child_leftmost_token: doc
                    .leftmost_token(c)
                    .expect("known")
                    .expect("subtree has leaves"),
            });
            stack.push(c);
        }
    }
    edges
}

/// Edges cut by any stroke segment, each once, ordered by the leftmost token
/// under the child (then child id).
pub fn edges_hit<'a>(stroke: &Stroke, edges: &'a [RenderedEdge]) -> Vec<&'a RenderedEdge> {
    let mut seen = BTreeSet::new();
    let mut hit: Vec<&RenderedEdge> = edges
        .iter()
        .filter(|e| {
            stroke
                .segments()
                .any(|(a, b)| segments_intersect(a, b, e.p_child, e.p_parent))
        })
        .filter(|e| seen.insert((e.child, e.parent)))
        .collect();
    hit.sort_by_key(|e| (e.child_leftmost_token, e.child));
    hit
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoOpReason {
    NothingHit,
    LeafUndeletable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "intent", rename_all = "snake_case")]
pub enum EditIntent {
    NoOp { reason: NoOpReason },
    Delete { node: TreeNodeId },
    Group { children: Vec<TreeNodeId> },
}

/// Classifies a stroke: nothing cut is a no-op, one cut deletes the node
/// below it (leaves excepted), several cuts group the nodes below them.
/// Group preconditions are left to the tree editor.
pub fn interpret_stroke(
    doc: &TreeDoc,
    edges: &[RenderedEdge],
    stroke: &Stroke,
) -> Result<EditIntent, StrokeError> {
    for e in edges {
        let fresh = doc.node(e.child).ok().and_then(|n| n.parent) == Some(e.parent);
        if !fresh {
            return Err(StrokeError::StaleEdges {
                child: e.child,
                parent: e.parent,
            });
        }
    }
    let hit = edges_hit(stroke, edges);
    Ok(match hit.as_slice() {
        [] => EditIntent::NoOp {
            reason: NoOpReason::NothingHit,
        },
        [single] => {
            let child = doc.node(single.child).expect("validated above");
            if child.is_leaf() {
                EditIntent::NoOp {
                    reason: NoOpReason::LeafUndeletable,
                }
            } else {
                EditIntent::Delete { node: child.id }
            }
        }
        many => EditIntent::Group {
            children: many.iter().map(|e| e.child).collect(),
        },
    })
}
