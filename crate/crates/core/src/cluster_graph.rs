//! Mention graph for coreference-style clustering.
//!
//! Workers never create groups directly: they add and remove links between
//! mentions, and the groups are the connected components of the link
//! relation. Each multi-member group carries a unique palette color; a
//! singleton is always grey.
//!
//! Color lifecycle:
//! - merging two groups keeps the color of the group that was dropped onto;
//!   if that group is a grey singleton the dragged group's color survives, and
//!   two singletons receive a fresh color;
//! - when removing a link splits a group, the larger component keeps the
//!   color (on a size tie, the component holding the smallest node id) and the
//!   other one gets a fresh color, unless it is a singleton.

use crate::geometry::Point;
use crate::palette::Color;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

pub const DEFAULT_ABBREVIATION_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClusterError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("cannot link node {0} to itself")]
    SelfLink(NodeId),
    #[error("no link between {0} and {1}")]
    NoSuchLink(NodeId, NodeId),
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("token index {0} is used by more than one mention")]
    DuplicateTokenIndex(usize),
    #[error("effective radius must be a positive finite length")]
    NonPositiveRadius,
    #[error("inconsistent groups: {0}")]
    InconsistentGroups(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionNode {
    pub id: NodeId,
    pub token_index: usize,
    pub surface: String,
    /// First `k` characters of the surface, shown under the node while dragging.
    pub abbreviation: String,
}

impl MentionNode {
    pub fn new(
        id: NodeId,
        token_index: usize,
        surface: impl Into<String>,
        abbreviation_len: usize,
    ) -> Self {
        let surface = surface.into();
        let abbreviation = surface.chars().take(abbreviation_len).collect();
        Self {
            id,
            token_index,
            surface,
            abbreviation,
        }
    }
}

/// An undirected link, stored with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
}

impl Link {
    pub fn new(x: NodeId, y: NodeId) -> Result<Self, ClusterError> {
        match x.cmp(&y) {
            std::cmp::Ordering::Less => Ok(Link { a: x, b: y }),
            std::cmp::Ordering::Greater => Ok(Link { a: y, b: x }),
            std::cmp::Ordering::Equal => Err(ClusterError::SelfLink(x)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    /// Sorted ascending.
    pub members: Vec<NodeId>,
    pub color: Color,
}

impl Group {
    pub fn key(&self) -> NodeId {
        self.members[0]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MergeReport {
    pub merged: bool,
    pub kept_color: Color,
    pub recolored_nodes: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitReport {
    pub split: bool,
    /// Members of the component that kept the old color, if any did.
    pub kept_color_component: Option<Vec<NodeId>>,
    pub new_color: Option<Color>,
    pub recolored_nodes: Vec<NodeId>,
}

/// Union-find over dense indices, union by size.
#[derive(Debug, Clone, Default)]
struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    fn push(&mut self) -> usize {
        let i = self.parent.len();
        self.parent.push(i);
        self.size.push(1);
        i
    }

    fn find(&self, mut x: usize) -> usize {
        while self.parent[x] != x {
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[small] = big;
        self.size[big] += self.size[small];
    }

    fn reset(&mut self) {
        for (i, p) in self.parent.iter_mut().enumerate() {
            *p = i;
        }
        self.size.iter_mut().for_each(|s| *s = 1);
    }
}

#[derive(Debug, Clone)]
pub struct ClusterGraph {
    nodes: BTreeMap<NodeId, MentionNode>,
    links: BTreeSet<Link>,
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
    token_indices: BTreeSet<usize>,
    dense: BTreeMap<NodeId, usize>,
    sets: DisjointSets,
    colors: BTreeMap<NodeId, Color>,
}

impl Default for ClusterGraph {
    fn default() -> Self {
        Self::new()
    }
}

/// Graphs compare by mentions, links and colors; the union-find layout is an
/// implementation detail that depends on history.
impl PartialEq for ClusterGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.links == other.links && self.colors == other.colors
    }
}

impl Eq for ClusterGraph {}

impl ClusterGraph {
    pub fn new() -> Self {
        Self {
            nodes: BTreeMap::new(),
            links: BTreeSet::new(),
            adjacency: BTreeMap::new(),
            token_indices: BTreeSet::new(),
            dense: BTreeMap::new(),
            sets: DisjointSets::default(),
            colors: BTreeMap::new(),
        }
    }

    /// Builds an all-singleton graph from mentions.
    pub fn from_mentions(
        mentions: impl IntoIterator<Item = MentionNode>,
    ) -> Result<Self, ClusterError> {
        let mut g = Self::new();
        for m in mentions {
            g.insert_node(m)?;
        }
        Ok(g)
    }

    /// Adds a new ungrouped mention.
    pub fn insert_node(&mut self, node: MentionNode) -> Result<(), ClusterError> {
        if self.nodes.contains_key(&node.id) {
            return Err(ClusterError::DuplicateNode(node.id));
        }
        if !self.token_indices.insert(node.token_index) {
            return Err(ClusterError::DuplicateTokenIndex(node.token_index));
        }
        let id = node.id;
        let idx = self.sets.push();
        self.dense.insert(id, idx);
        self.adjacency.insert(id, BTreeSet::new());
        self.colors.insert(id, Color::DEFAULT);
        self.nodes.insert(id, node);
        Ok(())
    }

    /// Rebuilds a graph from stored parts, checking that `groups` is exactly
    /// the component partition of `links` and that colors obey the group laws.
    pub fn from_parts(
        mentions: impl IntoIterator<Item = MentionNode>,
        links: impl IntoIterator<Item = (NodeId, NodeId)>,
        groups: impl IntoIterator<Item = (Vec<NodeId>, Color)>,
    ) -> Result<Self, ClusterError> {
        let mut g = Self::from_mentions(mentions)?;
        for (x, y) in links {
            g.ensure_node(x)?;
            g.ensure_node(y)?;
            g.insert_link(Link::new(x, y)?);
        }

        let mut seen = BTreeSet::new();
        let mut used_colors = BTreeSet::new();
        for (members, color) in groups {
            let Some(&first) = members.first() else {
                return Err(ClusterError::InconsistentGroups("empty group".into()));
            };
            for &m in &members {
                g.ensure_node(m)?;
                if !seen.insert(m) {
                    return Err(ClusterError::InconsistentGroups(format!(
                        "node {m} is in two groups"
                    )));
                }
            }
            let root = g.root(first);
            if members.iter().any(|&m| g.root(m) != root) || g.sets.size[root] != members.len() {
                return Err(ClusterError::InconsistentGroups(format!(
                    "group containing {first} is not a connected component"
                )));
            }
            if (members.len() == 1) != color.is_default() {
                return Err(ClusterError::InconsistentGroups(format!(
                    "group containing {first} has color {color} but {} member(s)",
                    members.len()
                )));
            }
            if !color.is_default() && !used_colors.insert(color) {
                return Err(ClusterError::InconsistentGroups(format!(
                    "color {color} is used twice"
                )));
            }
            for &m in &members {
                g.colors.insert(m, color);
            }
        }
        if seen.len() != g.nodes.len() {
            return Err(ClusterError::InconsistentGroups(
                "groups do not cover every mention".into(),
            ));
        }
        Ok(g)
    }

    fn ensure_node(&self, id: NodeId) -> Result<(), ClusterError> {
        if self.nodes.contains_key(&id) {
            Ok(())
        } else {
            Err(ClusterError::UnknownNode(id))
        }
    }

    fn root(&self, id: NodeId) -> usize {
        self.sets.find(self.dense[&id])
    }

    fn insert_link(&mut self, link: Link) -> bool {
        if !self.links.insert(link) {
            return false;
        }
        self.adjacency
            .get_mut(&link.a)
            .expect("known node")
            .insert(link.b);
        self.adjacency
            .get_mut(&link.b)
            .expect("known node")
            .insert(link.a);
        let (ia, ib) = (self.dense[&link.a], self.dense[&link.b]);
        self.sets.union(ia, ib);
        true
    }

    pub fn node(&self, id: NodeId) -> Option<&MentionNode> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &MentionNode> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn links(&self) -> impl Iterator<Item = Link> + '_ {
        self.links.iter().copied()
    }

    pub fn has_link(&self, x: NodeId, y: NodeId) -> bool {
        Link::new(x, y).is_ok_and(|l| self.links.contains(&l))
    }

    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.get(&id).into_iter().flatten().copied()
    }

    pub fn color_of(&self, id: NodeId) -> Result<Color, ClusterError> {
        self.colors
            .get(&id)
            .copied()
            .ok_or(ClusterError::UnknownNode(id))
    }

    pub fn same_group(&self, x: NodeId, y: NodeId) -> Result<bool, ClusterError> {
        self.ensure_node(x)?;
        self.ensure_node(y)?;
        Ok(self.root(x) == self.root(y))
    }

    pub fn group_of(&self, id: NodeId) -> Result<Group, ClusterError> {
        self.ensure_node(id)?;
        let root = self.root(id);
        let members: Vec<NodeId> = self
            .order_sorted()
            .filter(|&m| self.root(m) == root)
            .collect();
        Ok(Group {
            members,
            color: self.colors[&id],
        })
    }

    fn order_sorted(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    /// The connected-component partition, each set listed once, ordered by
    /// smallest member.
    pub fn components(&self) -> Vec<BTreeSet<NodeId>> {
        let mut by_root: BTreeMap<usize, BTreeSet<NodeId>> = BTreeMap::new();
        for id in self.order_sorted() {
            by_root.entry(self.root(id)).or_default().insert(id);
        }
        let mut comps: Vec<_> = by_root.into_values().collect();
        comps.sort_by_key(|c| *c.first().expect("non-empty component"));
        comps
    }

    /// Groups with their colors, ordered by smallest member.
    pub fn groups(&self) -> Vec<Group> {
        self.components()
            .into_iter()
            .map(|members| {
                let members: Vec<NodeId> = members.into_iter().collect();
                let color = self.colors[&members[0]];
                Group { members, color }
            })
            .collect()
    }

    /// Lowest palette slot not held by any group.
    fn fresh_color(&self) -> Color {
        let used: BTreeSet<u32> = self
            .colors
            .values()
            .filter_map(|c| match c {
                Color::Slot(n) => Some(*n),
                Color::Default => None,
            })
            .collect();
        let slot = (0u32..)
            .find(|n| !used.contains(n))
            .expect("u32 slots exhausted");
        Color::Slot(slot)
    }

    fn paint(&mut self, members: impl IntoIterator<Item = NodeId>, color: Color) -> Vec<NodeId> {
        let mut changed = Vec::new();
        for m in members {
            let slot = self.colors.get_mut(&m).expect("known node");
            if *slot != color {
                *slot = color;
                changed.push(m);
            }
        }
        changed
    }

    /// Drops `dragged` onto `target`, adding a permanent link between them.
    pub fn add_link(
        &mut self,
        dragged: NodeId,
        target: NodeId,
    ) -> Result<MergeReport, ClusterError> {
        self.ensure_node(dragged)?;
        self.ensure_node(target)?;
        let link = Link::new(dragged, target)?;

        if self.root(dragged) == self.root(target) {
            self.insert_link(link);
            return Ok(MergeReport {
                merged: false,
                kept_color: self.colors[&target],
                recolored_nodes: Vec::new(),
            });
        }

        let target_color = self.colors[&target];
        let dragged_color = self.colors[&dragged];
        let kept_color = if !target_color.is_default() {
            target_color
        } else if !dragged_color.is_default() {
            dragged_color
        } else {
            self.fresh_color()
        };

        self.insert_link(link);
        let members = self.group_of(target)?.members;
        let recolored_nodes = self.paint(members, kept_color);
        Ok(MergeReport {
            merged: true,
            kept_color,
            recolored_nodes,
        })
    }

    fn reachable(&self, from: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::from([from]);
        let mut queue = VecDeque::from([from]);
        while let Some(n) = queue.pop_front() {
            for m in self.neighbors(n) {
                if seen.insert(m) {
                    queue.push_back(m);
                }
            }
        }
        seen
    }

    fn rebuild_sets(&mut self) {
        self.sets.reset();
        for link in &self.links {
            let (ia, ib) = (self.dense[&link.a], self.dense[&link.b]);
            self.sets.union(ia, ib);
        }
    }

    /// Removes the link between `x` and `y`, splitting their group if it is
    /// no longer connected.
    pub fn remove_link(&mut self, x: NodeId, y: NodeId) -> Result<SplitReport, ClusterError> {
        let link = Link::new(x, y).map_err(|_| ClusterError::NoSuchLink(x, y))?;
        if !self.links.remove(&link) {
            return Err(ClusterError::NoSuchLink(x, y));
        }
        self.adjacency
            .get_mut(&link.a)
            .expect("known node")
            .remove(&link.b);
        self.adjacency
            .get_mut(&link.b)
            .expect("known node")
            .remove(&link.a);

        let old_color = self.colors[&link.a];
        let side_a = self.reachable(link.a);
        if side_a.contains(&link.b) {
            return Ok(SplitReport {
                split: false,
                kept_color_component: None,
                new_color: None,
                recolored_nodes: Vec::new(),
            });
        }
        let side_b = self.reachable(link.b);
        self.rebuild_sets();

        // Majority keeps the color; ties go to the side holding the smallest id.
        let a_wins = match side_a.len().cmp(&side_b.len()) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => side_a.first() < side_b.first(),
        };
        let (major, minor) = if a_wins {
            (side_a, side_b)
        } else {
            (side_b, side_a)
        };

        let mut recolored = Vec::new();
        let kept_color_component = if major.len() > 1 {
            Some(major.iter().copied().collect())
        } else {
            recolored.extend(self.paint(major.iter().copied(), Color::DEFAULT));
            None
        };
        let new_color = if minor.len() > 1 {
            let fresh = self.fresh_color();
            debug_assert_ne!(fresh, old_color);
            recolored.extend(self.paint(minor.iter().copied(), fresh));
            Some(fresh)
        } else {
            recolored.extend(self.paint(minor.iter().copied(), Color::DEFAULT));
            None
        };
        recolored.sort();
        Ok(SplitReport {
            split: true,
            kept_color_component,
            new_color,
            recolored_nodes: recolored,
        })
    }

    /// Checks every structural and color invariant. Used by tests and by the
    /// server's debug-build consistency checks.
    pub fn validate(&self) -> Result<(), String> {
        for link in &self.links {
            if link.a >= link.b {
                return Err(format!("link {link:?} is not normalized"));
            }
            if !self.nodes.contains_key(&link.a) || !self.nodes.contains_key(&link.b) {
                return Err(format!("link {link:?} references an unknown node"));
            }
        }
        let mut colors = BTreeSet::new();
        for group in self.groups() {
            if group.members.iter().any(|m| self.colors[m] != group.color) {
                return Err(format!("group {} is not uniformly colored", group.key()));
            }
            if (group.len() == 1) != group.color.is_default() {
                return Err(format!(
                    "group {} violates the singleton/grey rule",
                    group.key()
                ));
            }
            if !group.color.is_default() && !colors.insert(group.color) {
                return Err(format!("color {} is shared by two groups", group.color));
            }
            let reach = self.reachable(group.key());
            if reach.len() != group.len() || group.members.iter().any(|m| !reach.contains(m)) {
                return Err(format!(
                    "group {} is not a connected component",
                    group.key()
                ));
            }
        }
        Ok(())
    }
}

/// The node a dragged node would link to if dropped now: the nearest other
/// node whose center lies within `radius` of the dragged center, smallest id
/// on ties.
pub fn proximity_target(
    positions: &BTreeMap<NodeId, Point>,
    dragged: NodeId,
    radius: f64,
) -> Result<Option<NodeId>, ClusterError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(ClusterError::NonPositiveRadius);
    }
    let origin = *positions
        .get(&dragged)
        .ok_or(ClusterError::UnknownNode(dragged))?;
    let mut best: Option<(f64, NodeId)> = None;
    // BTreeMap iterates ids ascending, so a strict comparison keeps the
    // smallest id among equidistant candidates.
    for (&id, &p) in positions {
        if id == dragged {
            continue;
        }
        let d = origin.distance(p);
        if d <= radius && best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, id));
        }
    }
    Ok(best.map(|(_, id)| id))
}
