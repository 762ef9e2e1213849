//! Generators and independent oracles shared by the integration suites.
#![allow(dead_code)]

use annoforge::cluster_graph::{ClusterGraph, MentionNode, NodeId};
use annoforge::geometry::Point;
use annoforge::palette::Color;
use annoforge::stroke_geometry::RenderedEdge;
use annoforge::tree_editor::{TreeDoc, TreeNodeId};
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

pub fn n(i: u32) -> NodeId {
    NodeId(i)
}

pub fn t(i: u32) -> TreeNodeId {
    TreeNodeId(i)
}

/// Graph of `count` singleton mentions with ids `1..=count`.
pub fn singleton_graph(count: u32) -> ClusterGraph {
    ClusterGraph::from_mentions(
        (1..=count).map(|i| MentionNode::new(n(i), i as usize * 2, format!("mention {i}"), 12)),
    )
    .unwrap()
}

// -- cluster oracles --------------------------------------------------------

/// Connected components by breadth-first search over an adjacency list
/// rebuilt from the raw link set.
pub fn bfs_components(ids: &[NodeId], links: &[(NodeId, NodeId)]) -> BTreeSet<BTreeSet<NodeId>> {
    let mut adj: BTreeMap<NodeId, Vec<NodeId>> = ids.iter().map(|&i| (i, Vec::new())).collect();
    for &(a, b) in links {
        adj.get_mut(&a).unwrap().push(b);
        adj.get_mut(&b).unwrap().push(a);
    }
    let mut seen = BTreeSet::new();
    let mut out = BTreeSet::new();
    for &start in ids {
        if seen.contains(&start) {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut queue = VecDeque::from([start]);
        seen.insert(start);
        while let Some(x) = queue.pop_front() {
            comp.insert(x);
            for &y in &adj[&x] {
                if seen.insert(y) {
                    queue.push_back(y);
                }
            }
        }
        out.insert(comp);
    }
    out
}

/// Same oracle over dense indices: for each id (in `ids` order, which must be
/// sorted) the smallest id of its component.
pub fn bfs_labels(ids: &[NodeId], links: &[(NodeId, NodeId)]) -> Vec<NodeId> {
    let index = |id: NodeId| ids.binary_search(&id).unwrap();
    let mut adj = vec![Vec::new(); ids.len()];
    for &(a, b) in links {
        let (i, j) = (index(a), index(b));
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut label: Vec<Option<NodeId>> = vec![None; ids.len()];
    let mut queue = VecDeque::new();
    for start in 0..ids.len() {
        if label[start].is_some() {
            continue;
        }
        // Scanning in sorted order makes `start` the component minimum.
        label[start] = Some(ids[start]);
        queue.push_back(start);
        while let Some(x) = queue.pop_front() {
            for &y in &adj[x] {
                if label[y].is_none() {
                    label[y] = Some(ids[start]);
                    queue.push_back(y);
                }
            }
        }
    }
    label.into_iter().map(Option::unwrap).collect()
}

/// The graph's own groups as per-node labels, comparable with `bfs_labels`.
pub fn stored_labels(g: &ClusterGraph, ids: &[NodeId]) -> Vec<NodeId> {
    let mut label = vec![NodeId(u32::MAX); ids.len()];
    for gr in g.groups() {
        let min = *gr.members.iter().min().unwrap();
        for m in gr.members {
            label[ids.binary_search(&m).unwrap()] = min;
        }
    }
    label
}

pub fn stored_partition(g: &ClusterGraph) -> BTreeSet<BTreeSet<NodeId>> {
    g.groups()
        .into_iter()
        .map(|gr| gr.members.into_iter().collect())
        .collect()
}

pub fn links_of(g: &ClusterGraph) -> Vec<(NodeId, NodeId)> {
    g.links().map(|l| (l.a, l.b)).collect()
}

/// Color per member set.
pub fn colors_by_group(g: &ClusterGraph) -> BTreeMap<BTreeSet<NodeId>, Color> {
    g.groups()
        .into_iter()
        .map(|gr| (gr.members.into_iter().collect(), gr.color))
        .collect()
}

/// Static laws: singletons are grey, multi-member groups have distinct
/// real colors.
pub fn check_static_color_laws(g: &ClusterGraph) -> Result<(), String> {
    let mut used = BTreeSet::new();
    for gr in g.groups() {
        match (gr.members.len(), gr.color) {
            (1, Color::Default) => {}
            (1, c) => return Err(format!("singleton {:?} has color {c}", gr.members)),
            (_, Color::Default) => return Err(format!("group {:?} is grey", gr.members)),
            (_, c) => {
                if !used.insert(c) {
                    return Err(format!("color {c} shared by two groups"));
                }
            }
        }
    }
    Ok(())
}

/// Checks the colors after `add_link(dragged, target)` against the state
/// before it.
pub fn check_merge_colors(
    before: &ClusterGraph,
    after: &ClusterGraph,
    dragged: NodeId,
    target: NodeId,
) -> Result<(), String> {
    check_static_color_laws(after)?;
    let old = colors_by_group(before);
    let group_of = |id: NodeId| {
        old.iter()
            .find(|(m, _)| m.contains(&id))
            .map(|(m, c)| (m.clone(), *c))
            .unwrap()
    };
    let (dm, dc) = group_of(dragged);
    let (tm, tc) = group_of(target);
    let new = colors_by_group(after);
    let merged_color = after.color_of(target).unwrap();
    if dm == tm {
        if new != old {
            return Err("linking within a group changed colors".into());
        }
        return Ok(());
    }
    let expected = if tm.len() > 1 {
        Some(tc)
    } else if dm.len() > 1 {
        Some(dc)
    } else {
        None
    };
    match expected {
        Some(c) if merged_color != c => {
            return Err(format!("merged color {merged_color}, expected {c}"))
        }
        None if old.values().any(|&c| c == merged_color) => {
            return Err(format!("fresh color {merged_color} was already in use"))
        }
        _ => {}
    }
    for (members, color) in &old {
        if members != &dm && members != &tm && new.get(members) != Some(color) {
            return Err(format!("bystander group {members:?} changed color"));
        }
    }
    Ok(())
}

/// Checks the colors after `remove_link(a, b)` against the state before it.
pub fn check_split_colors(
    before: &ClusterGraph,
    after: &ClusterGraph,
    a: NodeId,
    b: NodeId,
) -> Result<(), String> {
    check_static_color_laws(after)?;
    let old = colors_by_group(before);
    let new = colors_by_group(after);
    let (om, oc) = old
        .iter()
        .find(|(m, _)| m.contains(&a))
        .map(|(m, c)| (m.clone(), *c))
        .unwrap();
    for (members, color) in &old {
        if members != &om && new.get(members) != Some(color) {
            return Err(format!("bystander group {members:?} changed color"));
        }
    }
    let (am, ac) = new
        .iter()
        .find(|(m, _)| m.contains(&a))
        .map(|(m, c)| (m.clone(), *c))
        .unwrap();
    if am.contains(&b) {
        return if am == om && ac == oc {
            Ok(())
        } else {
            Err("unsplit group changed".into())
        };
    }
    let (bm, bc) = new
        .iter()
        .find(|(m, _)| m.contains(&b))
        .map(|(m, c)| (m.clone(), *c))
        .unwrap();
    let a_keeps = match am.len().cmp(&bm.len()) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => am.first() < bm.first(),
    };
    let ((km, kc), (mm, mc)) = if a_keeps {
        ((am, ac), (bm, bc))
    } else {
        ((bm, bc), (am, ac))
    };
    if km.len() > 1 && kc != oc {
        return Err(format!("majority {km:?} got {kc}, expected {oc}"));
    }
    if mm.len() > 1 && (mc == oc || old.values().any(|&c| c == mc)) {
        return Err(format!("minority {mm:?} color {mc} is not fresh"));
    }
    Ok(())
}

pub enum GraphOp {
    Add(NodeId, NodeId),
    Remove(NodeId, NodeId),
}

/// A random add (60%) or remove of an existing link.
pub fn random_graph_op<R: Rng>(rng: &mut R, g: &ClusterGraph) -> GraphOp {
    let ids: Vec<NodeId> = g.node_ids().collect();
    let links = links_of(g);
    if links.is_empty() || rng.random_bool(0.6) {
        let a = ids[rng.random_range(0..ids.len())];
        let mut b = ids[rng.random_range(0..ids.len())];
        while b == a {
            b = ids[rng.random_range(0..ids.len())];
        }
        GraphOp::Add(a, b)
    } else {
        let (a, b) = links[rng.random_range(0..links.len())];
        if rng.random_bool(0.5) {
            GraphOp::Remove(a, b)
        } else {
            GraphOp::Remove(b, a)
        }
    }
}

/// Random graph reached by `steps` random ops.
pub fn random_graph<R: Rng>(rng: &mut R, count: u32, steps: usize) -> ClusterGraph {
    let mut g = singleton_graph(count);
    if count < 2 {
        return g;
    }
    for _ in 0..steps {
        match random_graph_op(rng, &g) {
            GraphOp::Add(a, b) => {
                g.add_link(a, b).unwrap();
            }
            GraphOp::Remove(a, b) => {
                g.remove_link(a, b).unwrap();
            }
        }
    }
    g
}

// -- trees ------------------------------------------------------------------

pub fn tokens(count: usize) -> Vec<String> {
    (0..count).map(|i| format!("w{i}")).collect()
}

/// Internal nodes (virtual root included) with at least two children.
pub fn groupable_parents(doc: &TreeDoc) -> Vec<TreeNodeId> {
    doc.nodes()
        .filter(|nd| !nd.is_leaf() && nd.children.len() >= 2)
        .map(|nd| nd.id)
        .collect()
}

/// A random valid grouping selection, shuffled.
pub fn random_group<R: Rng>(rng: &mut R, doc: &TreeDoc) -> Option<Vec<TreeNodeId>> {
    let parents = groupable_parents(doc);
    if parents.is_empty() {
        return None;
    }
    let p = parents[rng.random_range(0..parents.len())];
    let kids = &doc.node(p).unwrap().children;
    let len = rng.random_range(2..=kids.len());
    let start = rng.random_range(0..=kids.len() - len);
    let mut sel = kids[start..start + len].to_vec();
    sel.shuffle(rng);
    Some(sel)
}

pub enum TreeOp {
    Group(Vec<TreeNodeId>),
    Delete(TreeNodeId),
    Fold(TreeNodeId),
}

pub fn random_tree_op<R: Rng>(rng: &mut R, doc: &TreeDoc) -> Option<TreeOp> {
    let internals = doc.internal_ids();
    let roll = rng.random_range(0..10);
    if roll < 6 || internals.is_empty() {
        random_group(rng, doc).map(TreeOp::Group)
    } else if roll < 9 {
        Some(TreeOp::Delete(
            internals[rng.random_range(0..internals.len())],
        ))
    } else {
        Some(TreeOp::Fold(
            internals[rng.random_range(0..internals.len())],
        ))
    }
}

pub fn apply_tree_op(doc: &mut TreeDoc, op: &TreeOp) {
    match op {
        TreeOp::Group(sel) => {
            doc.group_nodes(sel).unwrap();
        }
        TreeOp::Delete(id) => doc.delete_node(*id).unwrap(),
        TreeOp::Fold(id) => doc.toggle_fold(*id).unwrap(),
    }
}

/// Random document reached by `steps` random valid ops.
pub fn random_tree<R: Rng>(rng: &mut R, token_count: usize, steps: usize) -> TreeDoc {
    let mut doc = TreeDoc::init_forest(&tokens(token_count)).unwrap();
    for _ in 0..steps {
        if let Some(op) = random_tree_op(rng, &doc) {
            apply_tree_op(&mut doc, &op);
        }
    }
    doc
}

// -- geometry oracles --------------------------------------------------------

/// Closed-segment intersection by the textbook cross-product construction in
/// plain floating point. Returns `None` when any orientation lies within
/// `band` of zero, where the float answer cannot be trusted.
pub fn float_intersect(p1: Point, p2: Point, q1: Point, q2: Point, band: f64) -> Option<bool> {
    let cross =
        |a: Point, b: Point, c: Point| (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    // Disjoint bounding boxes settle the question regardless of orientation.
    let apart =
        |a1: f64, a2: f64, b1: f64, b2: f64| a1.max(a2) < b1.min(b2) || b1.max(b2) < a1.min(a2);
    if apart(p1.x, p2.x, q1.x, q2.x) || apart(p1.y, p2.y, q1.y, q2.y) {
        return Some(false);
    }
    let d = [
        cross(q1, q2, p1),
        cross(q1, q2, p2),
        cross(p1, p2, q1),
        cross(p1, p2, q2),
    ];
    if d.iter().any(|v| v.abs() <= band) {
        return None;
    }
    Some(d[0].signum() != d[1].signum() && d[2].signum() != d[3].signum())
}

/// Edges crossed by a polyline, by checking every (segment, edge) pair with
/// the float oracle. `None` if any pair is within the degeneracy band.
pub fn brute_force_hits(
    points: &[Point],
    edges: &[RenderedEdge],
    band: f64,
) -> Option<BTreeSet<(TreeNodeId, TreeNodeId)>> {
    let mut hits = BTreeSet::new();
    for w in points.windows(2) {
        for e in edges {
            if float_intersect(w[0], w[1], e.p_child, e.p_parent, band)? {
                hits.insert((e.child, e.parent));
            }
        }
    }
    Some(hits)
}

// -- partitions -------------------------------------------------------------

/// Every set partition of `0..n`, as block labels (restricted growth strings).
pub fn all_partitions(n: usize) -> Vec<Vec<usize>> {
    fn go(i: usize, n: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..=max + 1 {
            cur.push(b);
            go(i + 1, n, max.max(b), cur, out);
            cur.pop();
        }
    }
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    let mut cur = vec![0];
    go(1, n, 0, &mut cur, &mut out);
    out
}

pub fn blocks(labels: &[usize]) -> Vec<BTreeSet<u32>> {
    let mut m: BTreeMap<usize, BTreeSet<u32>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        m.entry(l).or_default().insert(i as u32);
    }
    m.into_values().collect()
}

/// Purity by the weighted per-cluster definition, counted directly.
pub fn purity_oracle(system: &[usize], gold: &[usize]) -> f64 {
    let n = system.len() as f64;
    let mut total = 0.0;
    for cluster in blocks(system) {
        let size = cluster.len() as f64;
        let mut best = 0.0f64;
        for entity in blocks(gold) {
            let nij = cluster.intersection(&entity).count() as f64;
            best = best.max(nij / size);
        }
        total += (size / n) * best;
    }
    total
}

/// Rand index by enumerating every pair.
pub fn rand_oracle(system: &[usize], gold: &[usize]) -> f64 {
    let n = system.len();
    let (mut agree, mut pairs) = (0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            pairs += 1;
            if (system[i] == system[j]) == (gold[i] == gold[j]) {
                agree += 1;
            }
        }
    }
    agree as f64 / pairs as f64
}

// -- strokes ----------------------------------------------------------------

/// Random polyline of 2..=5 points over the drawing's bounding box, padded.
pub fn random_stroke_points<R: Rng>(rng: &mut R, edges: &[RenderedEdge]) -> Vec<Point> {
    let (mut max_x, mut max_y) = (0.0f64, 0.0f64);
    for e in edges {
        max_x = max_x.max(e.p_parent.x).max(e.p_child.x);
        max_y = max_y.max(e.p_parent.y).max(e.p_child.y);
    }
    let k = rng.random_range(2..=5);
    (0..k)
        .map(|_| {
            Point::new(
                rng.random_range(-20.0..max_x + 20.0),
                rng.random_range(-20.0..max_y + 20.0),
            )
        })
        .collect()
}

/// A short cut straight across one edge at fraction `s` from the child.
pub fn cut_across(e: &RenderedEdge, s: f64, half_len: f64) -> Vec<Point> {
    let d = e.p_parent - e.p_child;
    let len = d.norm();
    let normal = Point::new(-d.y / len, d.x / len);
    let mid = e.p_child + d * s;
    vec![mid + normal * half_len, mid - normal * half_len]
}

/// A chord across sibling edges `run` (same parent) at fraction `s` of the
/// way from the parent, overshooting the outer edges slightly.
pub fn chord_across(run: &[&RenderedEdge], s: f64) -> Vec<Point> {
    let at = |e: &RenderedEdge| e.p_parent + (e.p_child - e.p_parent) * s;
    let (first, last) = (at(run[0]), at(run[run.len() - 1]));
    let over = (last - first) * 0.02;
    vec![first - over, last + over]
}

/// Partition over mentions `0..n` from a system labeling, with gold entity
/// names taken from a gold labeling.
pub fn labeled(system: &[usize], gold: &[usize]) -> annoforge::metrics::LabeledPartition<u32> {
    let gold = gold
        .iter()
        .enumerate()
        .map(|(i, g)| (i as u32, format!("E{g}")))
        .collect();
    annoforge::metrics::LabeledPartition::new(blocks(system), gold).unwrap()
}

// -- server scripting ---------------------------------------------------------

use annoforge::ops::{EditOp, OpKind};
use annoforge::server::{ServerError, SessionState, TaskStore};

pub mod api;

/// Clustering task over `count` one-token mentions with ids `1..=count`.
pub fn clustering_task_json(id: &str, count: u32) -> String {
    let text: Vec<String> = (1..=count).map(|i| format!("m{i}")).collect();
    let mentions: Vec<serde_json::Value> = (1..=count)
        .map(|i| serde_json::json!({"id": i, "token_index": i - 1, "surface": format!("m{i}")}))
        .collect();
    serde_json::json!({
        "task_id": id,
        "kind": "clustering",
        "payload": {"text": text.join(" "), "mentions": mentions},
    })
    .to_string()
}

/// Parsing task with one sentence per entry of `lengths`.
pub fn parsing_task_json(id: &str, lengths: &[usize]) -> String {
    let sentences: Vec<Vec<String>> = lengths.iter().map(|&l| tokens(l)).collect();
    serde_json::json!({"task_id": id, "kind": "parsing", "payload": {"sentences": sentences}})
        .to_string()
}

pub fn create_task(store: &TaskStore, json: &str) -> String {
    store
        .create_task(annoforge::formats::TaskDescriptor::from_json(json).unwrap())
        .unwrap()
        .0
}

#[derive(Debug, Clone)]
pub enum Step {
    Op(EditOp),
    Undo,
    Redo,
}

/// A random next step for a session in `state`: mostly valid ops, some
/// undos and redos, and occasionally an op that must be rejected.
pub fn random_step<R: Rng>(rng: &mut R, state: &SessionState, clock: f64) -> Step {
    match rng.random_range(0..10) {
        0 => return Step::Undo,
        1 => return Step::Redo,
        _ => {}
    }
    let kind = match state {
        SessionState::Clustering(g) => {
            if rng.random_bool(0.05) {
                let a = g.node_ids().next().unwrap();
                OpKind::AddLink { a, b: a }
            } else {
                match random_graph_op(rng, g) {
                    GraphOp::Add(a, b) => OpKind::AddLink { a, b },
                    GraphOp::Remove(a, b) => OpKind::RemoveLink { a, b },
                }
            }
        }
        SessionState::Parsing(doc) => {
            if rng.random_bool(0.05) {
                OpKind::DeleteNode { id: TreeNodeId(0) }
            } else {
                match random_tree_op(rng, doc) {
                    Some(TreeOp::Group(children)) => OpKind::GroupNodes { children },
                    Some(TreeOp::Delete(id)) => OpKind::DeleteNode { id },
                    Some(TreeOp::Fold(id)) => OpKind::ToggleFold { id },
                    None => OpKind::ToggleFold { id: doc.root() },
                }
            }
        }
    };
    Step::Op(EditOp::new(kind, clock))
}

/// Runs one step against the store. Refusals of invalid steps are fine;
/// anything else is a failure.
pub fn run_step(store: &TaskStore, sid: &str, step: &Step) -> Result<bool, ServerError> {
    let outcome = match step {
        Step::Op(op) => store.apply(sid, op.clone(), None).map(drop),
        Step::Undo => store.undo(sid).map(drop),
        Step::Redo => store.redo(sid).map(drop),
    };
    match outcome {
        Ok(()) => Ok(true),
        Err(ServerError::Apply(_) | ServerError::NothingToUndo | ServerError::NothingToRedo) => {
            Ok(false)
        }
        Err(e) => Err(e),
    }
}

pub fn current_state(store: &TaskStore, sid: &str) -> SessionState {
    store.with_session(sid, |s| s.state().clone()).unwrap()
}
