//! A worker's editing session: initial state, op log, cursor, and the state
//! materialized from the live prefix of the log.

use super::ServerError;
use crate::cluster_graph::{ClusterError, ClusterGraph, Link, MergeReport, NodeId, SplitReport};
use crate::config::Config;
use crate::force_layout::{init_layout, LayoutState};
use crate::formats::{
    serialize_clusters, serialize_tree, ClusterDocument, TaskBody, TaskDescriptor, TaskKind,
};
use crate::ops::{EditOp, OpKind};
use crate::palette::{Color, Palette};
use crate::tree_editor::{TreeDoc, TreeError, TreeNode, TreeNodeId};
use serde::Serialize;
use std::collections::BTreeMap;

/// Force below which the initial layout counts as settled.
const SETTLE_EPS: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ApplyError {
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("{op} cannot be applied to a {task} task")]
    WrongKind { op: TaskKind, task: TaskKind },
}

impl ApplyError {
    /// Machine-readable name of the failed precondition.
    pub fn code(&self) -> &'static str {
        match self {
            ApplyError::Cluster(e) => match e {
                ClusterError::UnknownNode(_) => "UnknownNode",
                ClusterError::SelfLink(_) => "SelfLink",
                ClusterError::NoSuchLink(..) => "NoSuchLink",
                ClusterError::DuplicateNode(_) => "DuplicateNode",
                ClusterError::DuplicateTokenIndex(_) => "DuplicateTokenIndex",
                ClusterError::NonPositiveRadius => "NonPositiveRadius",
                ClusterError::InconsistentGroups(_) => "InconsistentGroups",
            },
            ApplyError::Tree(e) => match e {
                TreeError::EmptySentence => "EmptySentence",
                TreeError::InvalidToken(_) => "InvalidToken",
                TreeError::UnknownNode(_) => "UnknownNode",
                TreeError::TooFewChildren => "TooFewChildren",
                TreeError::DuplicateNode(_) => "DuplicateNode",
                TreeError::MixedParents => "MixedParents",
                TreeError::NonContiguousSiblings => "NonContiguousSiblings",
                TreeError::RootNotSelectable => "RootNotSelectable",
                TreeError::CannotDeleteLeaf(_) => "CannotDeleteLeaf",
                TreeError::CannotDeleteRoot => "CannotDeleteRoot",
                TreeError::CannotFoldLeaf(_) => "CannotFoldLeaf",
                TreeError::CannotFoldRoot => "CannotFoldRoot",
            },
            ApplyError::WrongKind { .. } => "WrongKind",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionState {
    Clustering(ClusterGraph),
    Parsing(TreeDoc),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodeColor {
    pub id: NodeId,
    pub color: Color,
}

/// What changed, so a client can patch its view instead of refetching.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateDelta {
    Clustering {
        link_added: Option<Link>,
        link_removed: Option<Link>,
        merge: Option<MergeReport>,
        split: Option<SplitReport>,
        colors: Vec<NodeColor>,
    },
    Parsing {
        created: Option<TreeNodeId>,
        deleted: Option<TreeNodeId>,
        toggled: Option<TreeNodeId>,
        /// The node whose child list changed (or the toggled node's parent).
        parent: TreeNodeId,
        children: Vec<TreeNodeId>,
    },
}

impl SessionState {
    pub fn kind(&self) -> TaskKind {
        match self {
            SessionState::Clustering(_) => TaskKind::Clustering,
            SessionState::Parsing(_) => TaskKind::Parsing,
        }
    }

    /// Applies one op, leaving the state untouched on error.
    pub fn apply(&mut self, op: &OpKind) -> Result<StateDelta, ApplyError> {
        if op.task_kind() != self.kind() {
            return Err(ApplyError::WrongKind {
                op: op.task_kind(),
                task: self.kind(),
            });
        }
        match (self, op) {
            (SessionState::Clustering(g), OpKind::AddLink { a, b }) => {
                let report = g.add_link(*a, *b)?;
                let recolored = report.recolored_nodes.clone();
                Ok(cluster_delta(
                    g,
                    Some(Link::new(*a, *b)?),
                    None,
                    &recolored,
                    Some(report),
                    None,
                ))
            }
            (SessionState::Clustering(g), OpKind::RemoveLink { a, b }) => {
                let report = g.remove_link(*a, *b)?;
                let link = Link::new(*a, *b)?;
                let recolored = report.recolored_nodes.clone();
                Ok(cluster_delta(
                    g,
                    None,
                    Some(link),
                    &recolored,
                    None,
                    Some(report),
                ))
            }
            (SessionState::Parsing(doc), OpKind::GroupNodes { children }) => {
                let created = doc.group_nodes(children)?;
                let parent = doc
                    .node(created)?
                    .parent
                    .expect("grouped nodes have a parent");
                Ok(tree_delta(doc, parent, Some(created), None, None))
            }
            (SessionState::Parsing(doc), OpKind::DeleteNode { id }) => {
                let parent = doc.node(*id)?.parent;
                doc.delete_node(*id)?;
                let parent = parent.expect("deletable nodes have a parent");
                Ok(tree_delta(doc, parent, None, Some(*id), None))
            }
            (SessionState::Parsing(doc), OpKind::ToggleFold { id }) => {
                doc.toggle_fold(*id)?;
                let parent = doc.node(*id)?.parent.expect("foldable nodes have a parent");
                Ok(tree_delta(doc, parent, None, None, Some(*id)))
            }
            _ => unreachable!("kinds checked above"),
        }
    }
}

fn cluster_delta(
    g: &ClusterGraph,
    link_added: Option<Link>,
    link_removed: Option<Link>,
    recolored: &[NodeId],
    merge: Option<MergeReport>,
    split: Option<SplitReport>,
) -> StateDelta {
    StateDelta::Clustering {
        link_added,
        link_removed,
        merge,
        split,
        colors: recolored
            .iter()
            .map(|&id| NodeColor {
                id,
                color: g.color_of(id).expect("recolored node exists"),
            })
            .collect(),
    }
}

fn tree_delta(
    doc: &TreeDoc,
    parent: TreeNodeId,
    created: Option<TreeNodeId>,
    deleted: Option<TreeNodeId>,
    toggled: Option<TreeNodeId>,
) -> StateDelta {
    StateDelta::Parsing {
        created,
        deleted,
        toggled,
        parent,
        children: doc
            .node(parent)
            .map(|n| n.children.clone())
            .unwrap_or_default(),
    }
}

/// Builds the starting state for a task. Parsing sessions work on one
/// sentence of the task's sentence file.
pub fn initial_state(
    task: &TaskDescriptor,
    sentence: usize,
    config: &Config,
) -> Result<SessionState, ServerError> {
    match &task.body {
        TaskBody::Clustering(p) => Ok(SessionState::Clustering(
            p.initial_graph(config.abbreviation_len)?,
        )),
        TaskBody::Parsing(file) => {
            let tokens = file
                .sentences
                .get(sentence)
                .ok_or(ServerError::UnknownSentence {
                    sentence,
                    available: file.sentences.len(),
                })?;
            Ok(SessionState::Parsing(
                TreeDoc::init_forest(tokens).map_err(ApplyError::from)?,
            ))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub task_id: String,
    pub sentence: usize,
    initial: SessionState,
    op_log: Vec<EditOp>,
    cursor: usize,
    state: SessionState,
    /// Bumped on every mutation; clients echo it back to detect stale views.
    version: u64,
    layout: Option<LayoutState>,
}

impl Session {
    pub fn new(
        id: String,
        task_id: String,
        sentence: usize,
        initial: SessionState,
        config: &Config,
    ) -> Self {
        let layout = match &initial {
            SessionState::Clustering(g) => Some(settled_layout(g, config)),
            SessionState::Parsing(_) => None,
        };
        Self {
            id,
            task_id,
            sentence,
            state: initial.clone(),
            initial,
            op_log: Vec::new(),
            cursor: 0,
            version: 0,
            layout,
        }
    }

    pub fn kind(&self) -> TaskKind {
        self.state.kind()
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn initial_state(&self) -> &SessionState {
        &self.initial
    }

    pub fn op_log(&self) -> &[EditOp] {
        &self.op_log
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn layout(&self) -> Option<&LayoutState> {
        self.layout.as_ref()
    }

    pub fn layout_mut(&mut self) -> Option<&mut LayoutState> {
        self.layout.as_mut()
    }

    /// Replays `op_log[..cursor]` from the initial state.
    pub fn replay_prefix(&self) -> Result<SessionState, ApplyError> {
        let mut s = self.initial.clone();
        for op in &self.op_log[..self.cursor] {
            s.apply(&op.kind)?;
        }
        Ok(s)
    }

    /// Applies `op` to a copy of the current state without committing.
    pub fn try_apply(&self, op: &EditOp) -> Result<(SessionState, StateDelta), ApplyError> {
        let mut next = self.state.clone();
        let delta = next.apply(&op.kind)?;
        Ok((next, delta))
    }

    /// Commits a state produced by [`Session::try_apply`] for the same op,
    /// dropping any redo branch.
    pub fn commit(&mut self, op: EditOp, next: SessionState) {
        self.op_log.truncate(self.cursor);
        self.op_log.push(op);
        self.cursor += 1;
        self.state = next;
        self.version += 1;
        self.check_replay();
    }

    pub fn apply(&mut self, op: EditOp) -> Result<StateDelta, ApplyError> {
        let (next, delta) = self.try_apply(&op)?;
        self.commit(op, next);
        Ok(delta)
    }

    pub fn can_undo(&self) -> bool {
        self.cursor > 0
    }

    pub fn can_redo(&self) -> bool {
        self.cursor < self.op_log.len()
    }

    pub fn undo(&mut self) -> Result<(), ServerError> {
        if !self.can_undo() {
            return Err(ServerError::NothingToUndo);
        }
        self.move_cursor(self.cursor - 1)
    }

    pub fn redo(&mut self) -> Result<(), ServerError> {
        if !self.can_redo() {
            return Err(ServerError::NothingToRedo);
        }
        self.move_cursor(self.cursor + 1)
    }

    fn move_cursor(&mut self, cursor: usize) -> Result<(), ServerError> {
        let previous = self.cursor;
        self.cursor = cursor;
        match self.replay_prefix() {
            Ok(state) => {
                self.state = state;
                self.version += 1;
                Ok(())
            }
            Err(e) => {
                self.cursor = previous;
                Err(ServerError::CorruptLog(format!("replay failed: {e}")))
            }
        }
    }

    fn check_replay(&self) {
        if cfg!(debug_assertions) {
            let replayed = self.replay_prefix().expect("logged ops replay");
            assert_eq!(
                replayed, self.state,
                "session {} diverged from its op log",
                self.id
            );
        }
    }

    pub fn snapshot(&self, palette: &Palette) -> Snapshot {
        Snapshot {
            session_id: self.id.clone(),
            task_id: self.task_id.clone(),
            kind: self.kind(),
            sentence: match self.kind() {
                TaskKind::Parsing => Some(self.sentence),
                TaskKind::Clustering => None,
            },
            version: self.version,
            cursor: self.cursor,
            log_len: self.op_log.len(),
            can_undo: self.can_undo(),
            can_redo: self.can_redo(),
            state: StateView::new(&self.state, palette),
        }
    }
}

fn settled_layout(g: &ClusterGraph, config: &Config) -> LayoutState {
    let start = init_layout(g, config.canvas, config.layout_seed).expect("config validated canvas");
    if config.settle_steps == 0 {
        return start;
    }
    start
        .run_until_stable(g, &config.layout, SETTLE_EPS, config.settle_steps)
        .map(|(s, _)| s)
        .expect("layout covers every node")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub session_id: String,
    pub task_id: String,
    pub kind: TaskKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sentence: Option<usize>,
    pub version: u64,
    pub cursor: usize,
    pub log_len: usize,
    pub can_undo: bool,
    pub can_redo: bool,
    pub state: StateView,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MentionView {
    pub id: NodeId,
    pub abbreviation: String,
    pub color: Color,
    pub css: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeNodeView {
    #[serde(flatten)]
    pub node: TreeNode,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum StateView {
    Clustering {
        document: ClusterDocument,
        mentions: Vec<MentionView>,
    },
    Parsing {
        tokens: Vec<String>,
        bracketed: String,
        root: TreeNodeId,
        nodes: Vec<TreeNodeView>,
    },
}

impl StateView {
    pub fn new(state: &SessionState, palette: &Palette) -> Self {
        match state {
            SessionState::Clustering(g) => StateView::Clustering {
                document: serialize_clusters(g),
                mentions: g
                    .nodes()
                    .map(|m| {
                        let color = g.color_of(m.id).expect("node exists");
                        MentionView {
                            id: m.id,
                            abbreviation: m.abbreviation.clone(),
                            color,
                            css: palette.css(color),
                        }
                    })
                    .collect(),
            },
            SessionState::Parsing(doc) => StateView::Parsing {
                tokens: doc.tokens().to_vec(),
                bracketed: serialize_tree(doc).0,
                root: doc.root(),
                nodes: doc
                    .nodes()
                    .map(|n| TreeNodeView {
                        node: n.clone(),
                        label: doc.folded_label(n.id).expect("node exists"),
                    })
                    .collect(),
            },
        }
    }
}

/// Positions in view coordinates, kind dependent.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayoutView {
    Clustering {
        canvas: crate::force_layout::Canvas,
        radius: f64,
        positions: BTreeMap<NodeId, crate::geometry::Point>,
        centroids: BTreeMap<NodeId, crate::geometry::Point>,
    },
    Parsing {
        positions: BTreeMap<TreeNodeId, crate::geometry::Point>,
        edges: Vec<crate::stroke_geometry::RenderedEdge>,
    },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster_graph::MentionNode;

    fn parsing_session() -> Session {
        let doc = TreeDoc::init_forest(&["a", "b", "c", "d"]).unwrap();
        Session::new(
            "s".into(),
            "t".into(),
            0,
            SessionState::Parsing(doc),
            &Config::default(),
        )
    }

    fn group(ids: &[u32]) -> EditOp {
        EditOp::new(
            OpKind::GroupNodes {
                children: ids.iter().map(|&i| TreeNodeId(i)).collect(),
            },
            0.0,
        )
    }

    #[test]
    fn undo_redo_and_truncation() {
        let mut s = parsing_session();
        let initial = s.state().clone();
        s.apply(group(&[0, 1])).unwrap();
        let after_one = s.state().clone();
        s.apply(group(&[2, 3])).unwrap();
        s.undo().unwrap();
        assert_eq!(s.state(), &after_one);
        s.redo().unwrap();
        s.undo().unwrap();
        s.undo().unwrap();
        assert_eq!(s.state(), &initial);
        assert!(matches!(s.undo(), Err(ServerError::NothingToUndo)));
        s.redo().unwrap();
        s.apply(group(&[1, 2])).unwrap_err();
        s.apply(EditOp::new(OpKind::ToggleFold { id: TreeNodeId(5) }, 1.0))
            .unwrap();
        assert!(matches!(s.redo(), Err(ServerError::NothingToRedo)));
        assert_eq!(s.op_log().len(), 2);
    }

    #[test]
    fn rejected_op_leaves_state_alone() {
        let mut s = parsing_session();
        let before = s.state().clone();
        let err = s.apply(group(&[0, 2])).unwrap_err();
        assert_eq!(err.code(), "NonContiguousSiblings");
        assert_eq!(s.state(), &before);
        assert_eq!(s.version(), 0);
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let mut s = parsing_session();
        let err = s
            .apply(EditOp::new(
                OpKind::AddLink {
                    a: NodeId(0),
                    b: NodeId(1),
                },
                0.0,
            ))
            .unwrap_err();
        assert_eq!(err.code(), "WrongKind");
    }

    #[test]
    fn clustering_delta_reports_colors() {
        let g = ClusterGraph::from_mentions(
            (1..=3).map(|i| MentionNode::new(NodeId(i), i as usize, "m", 12)),
        )
        .unwrap();
        let mut s = Session::new(
            "s".into(),
            "t".into(),
            0,
            SessionState::Clustering(g),
            &Config::default(),
        );
        assert!(s.layout().is_some());
        let delta = s
            .apply(EditOp::new(
                OpKind::AddLink {
                    a: NodeId(1),
                    b: NodeId(2),
                },
                0.0,
            ))
            .unwrap();
        match delta {
            StateDelta::Clustering {
                colors, link_added, ..
            } => {
                assert_eq!(link_added, Some(Link::new(NodeId(1), NodeId(2)).unwrap()));
                assert_eq!(colors.len(), 2);
                assert!(colors.iter().all(|c| c.color == Color::Slot(0)));
            }
            other => panic!("unexpected delta {other:?}"),
        }
    }
}
