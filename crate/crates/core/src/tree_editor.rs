//! Ordered constituency trees over a single sentence.
//!
//! A document starts as a forest of word nodes hanging off a hidden virtual
//! root. Workers build structure with two edits, grouping adjacent siblings
//! under a new node and deleting an internal node (its children are spliced
//! back into the parent), plus folding, which only changes how a subtree is
//! displayed. No edit can reorder leaves: the left-to-right leaf sequence is
//! always the sentence.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TreeNodeId(pub u32);

impl fmt::Display for TreeNodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TreeError {
    #[error("a sentence needs at least one token")]
    EmptySentence,
    #[error("token {0:?} is empty or contains whitespace or brackets")]
    InvalidToken(String),
    #[error("unknown node {0}")]
    UnknownNode(TreeNodeId),
    #[error("grouping needs at least two nodes")]
    TooFewChildren,
    #[error("node {0} is selected twice")]
    DuplicateNode(TreeNodeId),
    #[error("selected nodes do not share a parent")]
    MixedParents,
    #[error("selected nodes are not adjacent siblings")]
    NonContiguousSiblings,
    #[error("the virtual root cannot be selected")]
    RootNotSelectable,
    #[error("node {0} is a leaf and cannot be deleted")]
    CannotDeleteLeaf(TreeNodeId),
    #[error("the virtual root cannot be deleted")]
    CannotDeleteRoot,
    #[error("node {0} is a leaf and cannot be folded")]
    CannotFoldLeaf(TreeNodeId),
    #[error("the virtual root cannot be folded")]
    CannotFoldRoot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NodeKind {
    Leaf { token_index: usize },
    Internal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: TreeNodeId,
    pub kind: NodeKind,
    pub children: Vec<TreeNodeId>,
    pub parent: Option<TreeNodeId>,
    pub folded: bool,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }
}

/// Id-free shape of a (sub)tree, used for structural comparison.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Shape {
    Leaf(usize),
    Node(Vec<Shape>),
}

pub(crate) fn valid_token(token: &str) -> bool {
    !token.is_empty()
        && !token
            .chars()
            .any(|c| c.is_whitespace() || c == '(' || c == ')')
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeDoc {
    tokens: Vec<String>,
    nodes: BTreeMap<TreeNodeId, TreeNode>,
    virtual_root: TreeNodeId,
    next_id: u32,
}

impl TreeDoc {
    /// One leaf per token under the virtual root. Leaf `i` has id `i`; the
    /// root takes the next id.
    pub fn init_forest<S: AsRef<str>>(tokens: &[S]) -> Result<Self, TreeError> {
        let shapes = (0..tokens.len()).map(Shape::Leaf).collect();
        Self::from_forest(tokens, shapes)
    }

    /// Builds a document whose top-level subtrees are `forest`. Leaves must
    /// cover the tokens in order.
    pub(crate) fn from_forest<S: AsRef<str>>(
        tokens: &[S],
        forest: Vec<Shape>,
    ) -> Result<Self, TreeError> {
        if tokens.is_empty() {
            return Err(TreeError::EmptySentence);
        }
        if let Some(bad) = tokens.iter().find(|t| !valid_token(t.as_ref())) {
            return Err(TreeError::InvalidToken(bad.as_ref().to_owned()));
        }
        let n = tokens.len() as u32;
        let root = TreeNodeId(n);
        let mut doc = TreeDoc {
            tokens: tokens.iter().map(|t| t.as_ref().to_owned()).collect(),
            nodes: BTreeMap::new(),
            virtual_root: root,
            next_id: n + 1,
        };
        for i in 0..n {
            doc.nodes.insert(
                TreeNodeId(i),
                TreeNode {
                    id: TreeNodeId(i),
                    kind: NodeKind::Leaf {
                        token_index: i as usize,
                    },
                    children: Vec::new(),
                    parent: None,
                    folded: false,
                },
            );
        }
        doc.nodes.insert(
            root,
            TreeNode {
                id: root,
                kind: NodeKind::Internal,
                children: Vec::new(),
                parent: None,
                folded: false,
            },
        );
        let children = forest
            .into_iter()
            .map(|s| doc.attach_shape(s, root))
            .collect();
        doc.nodes.get_mut(&root).expect("root").children = children;
        debug_assert!(doc.validate().is_ok(), "{:?}", doc.validate());
        Ok(doc)
    }

    fn attach_shape(&mut self, shape: Shape, parent: TreeNodeId) -> TreeNodeId {
        match shape {
            Shape::Leaf(i) => {
                let id = TreeNodeId(i as u32);
                self.nodes.get_mut(&id).expect("leaf exists").parent = Some(parent);
                id
            }
            Shape::Node(kids) => {
                let id = self.fresh_id();
                self.nodes.insert(
                    id,
                    TreeNode {
                        id,
                        kind: NodeKind::Internal,
                        children: Vec::new(),
                        parent: Some(parent),
                        folded: false,
                    },
                );
                let children = kids.into_iter().map(|k| self.attach_shape(k, id)).collect();
                self.nodes.get_mut(&id).expect("just inserted").children = children;
                id
            }
        }
    }

    fn fresh_id(&mut self) -> TreeNodeId {
        let id = TreeNodeId(self.next_id);
        self.next_id += 1;
        id
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn root(&self) -> TreeNodeId {
        self.virtual_root
    }

    pub fn node(&self, id: TreeNodeId) -> Result<&TreeNode, TreeError> {
        self.nodes.get(&id).ok_or(TreeError::UnknownNode(id))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.values()
    }

    /// Number of nodes, including leaves and the virtual root.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn internal_ids(&self) -> Vec<TreeNodeId> {
        self.nodes
            .values()
            .filter(|n| !n.is_leaf() && n.id != self.virtual_root)
            .map(|n| n.id)
            .collect()
    }

    /// Groups adjacent siblings under a new internal node placed where the
    /// leftmost of them was. The selection may be given in any order.
    pub fn group_nodes(&mut self, children: &[TreeNodeId]) -> Result<TreeNodeId, TreeError> {
        if children.len() < 2 {
            return Err(TreeError::TooFewChildren);
        }
        let mut seen = BTreeSet::new();
        let mut parent = None;
        for &c in children {
            if c == self.virtual_root {
                return Err(TreeError::RootNotSelectable);
            }
            let node = self.node(c)?;
            if !seen.insert(c) {
                return Err(TreeError::DuplicateNode(c));
            }
            match parent {
                None => parent = node.parent,
                Some(p) if node.parent != Some(p) => return Err(TreeError::MixedParents),
                Some(_) => {}
            }
        }
        let parent = parent.expect("non-root nodes have parents");

        let siblings = &self.nodes[&parent].children;
        let mut positions: Vec<usize> = children
            .iter()
            .map(|c| {
                siblings
                    .iter()
                    .position(|s| s == c)
                    .expect("child of parent")
            })
            .collect();
        positions.sort_unstable();
        if positions.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(TreeError::NonContiguousSiblings);
        }
        let (first, last) = (positions[0], positions[positions.len() - 1]);

        let id = self.fresh_id();
        let parent_node = self.nodes.get_mut(&parent).expect("parent");
        let grouped: Vec<TreeNodeId> = parent_node.children.splice(first..=last, [id]).collect();
        for c in &grouped {
            self.nodes.get_mut(c).expect("child").parent = Some(id);
        }
        self.nodes.insert(
            id,
            TreeNode {
                id,
                kind: NodeKind::Internal,
                children: grouped,
                parent: Some(parent),
                folded: false,
            },
        );
        Ok(id)
    }

    /// Removes an internal node, splicing its children into its parent at
    /// its position.
    pub fn delete_node(&mut self, id: TreeNodeId) -> Result<(), TreeError> {
        if id == self.virtual_root {
            return Err(TreeError::CannotDeleteRoot);
        }
        let node = self.node(id)?;
        if node.is_leaf() {
            return Err(TreeError::CannotDeleteLeaf(id));
        }
        let parent = node.parent.expect("non-root nodes have parents");
        let node = self.nodes.remove(&id).expect("checked above");
        for c in &node.children {
            self.nodes.get_mut(c).expect("child").parent = Some(parent);
        }
        let siblings = &mut self.nodes.get_mut(&parent).expect("parent").children;
        let at = siblings
            .iter()
            .position(|s| *s == id)
            .expect("child of parent");
        siblings.splice(at..=at, node.children);
        Ok(())
    }

    pub fn toggle_fold(&mut self, id: TreeNodeId) -> Result<(), TreeError> {
        if id == self.virtual_root {
            return Err(TreeError::CannotFoldRoot);
        }
        let node = self.nodes.get_mut(&id).ok_or(TreeError::UnknownNode(id))?;
        if node.is_leaf() {
            return Err(TreeError::CannotFoldLeaf(id));
        }
        node.folded = !node.folded;
        Ok(())
    }

    /// Token indices under a node, in order.
    pub fn token_indices(&self, id: TreeNodeId) -> Result<Vec<usize>, TreeError> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        self.node(id)?;
        while let Some(n) = stack.pop() {
            let node = &self.nodes[&n];
            match node.kind {
                NodeKind::Leaf { token_index } => out.push(token_index),
                NodeKind::Internal => stack.extend(node.children.iter().rev()),
            }
        }
        Ok(out)
    }

    /// Leftmost token index under a node; `None` only for an empty root.
    pub fn leftmost_token(&self, id: TreeNodeId) -> Result<Option<usize>, TreeError> {
        let mut cur = self.node(id)?;
        loop {
            match cur.kind {
                NodeKind::Leaf { token_index } => return Ok(Some(token_index)),
                NodeKind::Internal => match cur.children.first() {
                    Some(c) => cur = &self.nodes[c],
                    None => return Ok(None),
                },
            }
        }
    }

    /// The words of a subtree joined by single spaces; what a folded node
    /// displays.
    pub fn folded_label(&self, id: TreeNodeId) -> Result<String, TreeError> {
        let words: Vec<&str> = self
            .token_indices(id)?
            .into_iter()
            .map(|i| self.tokens[i].as_str())
            .collect();
        Ok(words.join(" "))
    }

    pub fn leaf_order(&self) -> Vec<String> {
        self.token_indices(self.virtual_root)
            .expect("root exists")
            .into_iter()
            .map(|i| self.tokens[i].clone())
            .collect()
    }

    pub fn shape(&self, id: TreeNodeId) -> Result<Shape, TreeError> {
        let node = self.node(id)?;
        Ok(match node.kind {
            NodeKind::Leaf { token_index } => Shape::Leaf(token_index),
            NodeKind::Internal => Shape::Node(
                node.children
                    .iter()
                    .map(|&c| self.shape(c))
                    .collect::<Result<_, _>>()?,
            ),
        })
    }

    /// Same tokens and same bracketing, ignoring internal ids and fold flags.
    pub fn structurally_eq(&self, other: &TreeDoc) -> bool {
        self.tokens == other.tokens
            && self.shape(self.virtual_root).ok() == other.shape(other.virtual_root).ok()
    }

    /// Checks the single-tree, parent-link and leaf-order invariants.
    pub fn validate(&self) -> Result<(), String> {
        let root = self
            .nodes
            .get(&self.virtual_root)
            .ok_or("missing virtual root")?;
        if root.parent.is_some() || root.folded || root.is_leaf() {
            return Err("virtual root must be an unfolded parentless internal node".into());
        }
        let mut visited = BTreeSet::new();
        let mut leaves = Vec::new();
        let mut stack = vec![self.virtual_root];
        while let Some(id) = stack.pop() {
            if !visited.insert(id) {
                return Err(format!("node {id} reached twice"));
            }
            let node = self.nodes.get(&id).ok_or(format!("dangling child {id}"))?;
            if node.id != id {
                return Err(format!("node {id} stored under the wrong key"));
            }
            match node.kind {
                NodeKind::Leaf { token_index } => {
                    if !node.children.is_empty() || node.folded {
                        return Err(format!("leaf {id} has children or is folded"));
                    }
                    leaves.push(token_index);
                }
                NodeKind::Internal => {
                    if node.children.is_empty() && id != self.virtual_root {
                        return Err(format!("internal node {id} has no children"));
                    }
                    if id.0 >= self.next_id {
                        return Err(format!("node {id} is beyond the id counter"));
                    }
                }
            }
            for c in node.children.iter().rev() {
                let child = self.nodes.get(c).ok_or(format!("dangling child {c}"))?;
                if child.parent != Some(id) {
                    return Err(format!("node {c} does not point back to parent {id}"));
                }
                stack.push(*c);
            }
        }
        if visited.len() != self.nodes.len() {
            return Err("some nodes are unreachable from the root".into());
        }
        if leaves != (0..self.tokens.len()).collect::<Vec<_>>() {
            return Err(format!("leaf order {leaves:?} differs from token order"));
        }
        Ok(())
    }
}
