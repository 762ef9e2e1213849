//! Worker edit operations as they are logged and replayed.

use crate::cluster_graph::NodeId;
use crate::formats::TaskKind;
use crate::tree_editor::TreeNodeId;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum OpKind {
    /// Drop `a` (dragged) onto `b` (target).
    AddLink {
        a: NodeId,
        b: NodeId,
    },
    RemoveLink {
        a: NodeId,
        b: NodeId,
    },
    GroupNodes {
        children: Vec<TreeNodeId>,
    },
    DeleteNode {
        id: TreeNodeId,
    },
    ToggleFold {
        id: TreeNodeId,
    },
}

impl OpKind {
    pub fn task_kind(&self) -> TaskKind {
        match self {
            OpKind::AddLink { .. } | OpKind::RemoveLink { .. } => TaskKind::Clustering,
            OpKind::GroupNodes { .. } | OpKind::DeleteNode { .. } | OpKind::ToggleFold { .. } => {
                TaskKind::Parsing
            }
        }
    }
}

/// An operation plus the client clock (seconds) when the worker made it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditOp {
    #[serde(flatten)]
    pub kind: OpKind,
    #[serde(default)]
    pub timestamp: f64,
}

impl EditOp {
    pub fn new(kind: OpKind, timestamp: f64) -> Self {
        Self { kind, timestamp }
    }
}
