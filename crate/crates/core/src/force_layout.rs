//! Deterministic force simulation for the clustering canvas.
//!
//! Four forces act on every node: short-range pairwise repulsion, gravity
//! toward the canvas center, a spring along each link, and a pull toward the
//! centroid of the node's group (multi-member groups only). The last one is
//! what keeps groups visually apart. Integration is explicit Euler with
//! velocity damping, and positions are clamped to the canvas.

use crate::cluster_graph::{ClusterGraph, NodeId};
use crate::geometry::Point;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Pairs farther apart than this do not repel.
pub const REPULSION_CUTOFF: f64 = 300.0;
/// Separations below this are treated as this distance.
const MIN_SEPARATION: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LayoutError {
    #[error("canvas dimensions must be positive")]
    EmptyCanvas,
    #[error("node {0} has no position")]
    MissingPosition(NodeId),
    #[error("invalid layout parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutParams {
    pub gravity: f64,
    pub repulsion: f64,
    pub spring_length: f64,
    pub spring_k: f64,
    pub group_pull: f64,
    pub damping: f64,
    /// Effective radius of the shadow circle used for drop targeting.
    pub radius: f64,
    pub dt: f64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            gravity: 0.05,
            repulsion: 800.0,
            spring_length: 60.0,
            spring_k: 0.08,
            group_pull: 0.1,
            damping: 0.6,
            radius: 30.0,
            dt: 1.0,
        }
    }
}

impl LayoutParams {
    pub fn validate(&self) -> Result<(), LayoutError> {
        let strengths = [
            ("gravity", self.gravity),
            ("repulsion", self.repulsion),
            ("spring_length", self.spring_length),
            ("spring_k", self.spring_k),
            ("group_pull", self.group_pull),
        ];
        for (name, v) in strengths {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(LayoutError::InvalidParams(format!(
                    "{name} must be finite and >= 0"
                )));
            }
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(LayoutError::InvalidParams(
                "damping must lie in (0, 1)".into(),
            ));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(LayoutError::InvalidParams("radius must be > 0".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(LayoutError::InvalidParams("dt must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Canvas {
    pub width: f64,
    pub height: f64,
}

impl Default for Canvas {
    fn default() -> Self {
        Self {
            width: 800.0,
            height: 600.0,
        }
    }
}

impl Canvas {
    pub fn center(&self) -> Point {
        Point::new(self.width / 2.0, self.height / 2.0)
    }

    fn clamp(&self, p: Point) -> Point {
        Point::new(p.x.clamp(0.0, self.width), p.y.clamp(0.0, self.height))
    }

    pub fn contains(&self, p: Point) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutState {
    pub positions: BTreeMap<NodeId, Point>,
    pub velocities: BTreeMap<NodeId, Point>,
    pub canvas: Canvas,
    pub rng_seed: u64,
}

/// Seeded scatter of every node inside the canvas, at rest.
pub fn init_layout(
    graph: &ClusterGraph,
    canvas: Canvas,
    seed: u64,
) -> Result<LayoutState, LayoutError> {
    if !(canvas.width > 0.0
        && canvas.height > 0.0
        && canvas.width.is_finite()
        && canvas.height.is_finite())
    {
        return Err(LayoutError::EmptyCanvas);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = BTreeMap::new();
    let mut velocities = BTreeMap::new();
    for id in graph.node_ids() {
        let p = Point::new(
            rng.random_range(0.0..=canvas.width),
            rng.random_range(0.0..=canvas.height),
        );
        positions.insert(id, p);
        velocities.insert(id, Point::default());
    }
    Ok(LayoutState {
        positions,
        velocities,
        canvas,
        rng_seed: seed,
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Unit vector pointing from `a` to `b` for coincident nodes, fixed per
/// (seed, pair).
fn jitter_direction(seed: u64, a: NodeId, b: NodeId) -> Point {
    let h = splitmix64(seed ^ splitmix64(((a.0 as u64) << 32) | b.0 as u64));
    let angle = (h >> 11) as f64 / (1u64 << 53) as f64 * std::f64::consts::TAU;
    Point::new(angle.cos(), angle.sin())
}

impl LayoutState {
    fn position(&self, id: NodeId) -> Result<Point, LayoutError> {
        self.positions
            .get(&id)
            .copied()
            .ok_or(LayoutError::MissingPosition(id))
    }

    /// Moves a node, e.g. while the worker drags it. The point is clamped to
    /// the canvas and the node's velocity reset.
    pub fn set_position(&mut self, id: NodeId, p: Point) -> Result<(), LayoutError> {
        if !self.positions.contains_key(&id) || !p.is_finite() {
            return Err(LayoutError::MissingPosition(id));
        }
        self.positions.insert(id, self.canvas.clamp(p));
        self.velocities.insert(id, Point::default());
        Ok(())
    }

    /// Net force on every node at the current positions.
    pub fn forces(
        &self,
        graph: &ClusterGraph,
        params: &LayoutParams,
    ) -> Result<BTreeMap<NodeId, Point>, LayoutError> {
        let ids: Vec<NodeId> = graph.node_ids().collect();
        let mut pos = Vec::with_capacity(ids.len());
        for &id in &ids {
            pos.push(self.position(id)?);
        }
        let index: BTreeMap<NodeId, usize> =
            ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut force = vec![Point::default(); ids.len()];

        for i in 0..ids.len() {
            for j in (i + 1)..ids.len() {
                let delta = pos[j] - pos[i];
                let d = delta.norm();
                if d > REPULSION_CUTOFF {
                    continue;
                }
                let (dir, dist) = if d < MIN_SEPARATION {
                    let dir = if d > 0.0 {
                        delta * (1.0 / d)
                    } else {
                        jitter_direction(self.rng_seed, ids[i], ids[j])
                    };
                    (dir, MIN_SEPARATION)
                } else {
                    (delta * (1.0 / d), d)
                };
                let f = dir * (params.repulsion / (dist * dist));
                force[i] = force[i] - f;
                force[j] = force[j] + f;
            }
        }

        let center = self.canvas.center();
        for i in 0..ids.len() {
            force[i] = force[i] + (center - pos[i]) * params.gravity;
        }

        for link in graph.links() {
            let (i, j) = (index[&link.a], index[&link.b]);
            let delta = pos[j] - pos[i];
            let d = delta.norm();
            if d == 0.0 {
                continue;
            }
            let f = delta * (params.spring_k * (d - params.spring_length) / d);
            force[i] = force[i] + f;
            force[j] = force[j] - f;
        }

        if params.group_pull > 0.0 {
            for group in graph.groups().into_iter().filter(|g| g.len() > 1) {
                let members: Vec<usize> = group.members.iter().map(|m| index[m]).collect();
                let centroid = mean(members.iter().map(|&i| pos[i]));
                for i in members {
                    force[i] = force[i] + (centroid - pos[i]) * params.group_pull;
                }
            }
        }

        Ok(ids.into_iter().zip(force).collect())
    }

    /// Advances the simulation by one step.
    pub fn step(
        &self,
        graph: &ClusterGraph,
        params: &LayoutParams,
    ) -> Result<LayoutState, LayoutError> {
        let mut next = self.clone();
        next.advance(graph, params)?;
        Ok(next)
    }

    pub fn advance(
        &mut self,
        graph: &ClusterGraph,
        params: &LayoutParams,
    ) -> Result<(), LayoutError> {
        let forces = self.forces(graph, params)?;
        for (id, f) in forces {
            let v = self.velocities.get(&id).copied().unwrap_or_default();
            let mut v = (v + f * params.dt) * params.damping;
            let p = self.positions[&id] + v * params.dt;
            let clamped = self.canvas.clamp(p);
            if clamped.x != p.x {
                v.x = 0.0;
            }
            if clamped.y != p.y {
                v.y = 0.0;
            }
            self.positions.insert(id, clamped);
            self.velocities.insert(id, v);
        }
        Ok(())
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.velocities
            .values()
            .map(|v| 0.5 * (v.x * v.x + v.y * v.y))
            .sum()
    }

    /// Steps until both the largest net force and the largest speed drop
    /// below `eps`, or `max_steps` have run.
    pub fn run_until_stable(
        &self,
        graph: &ClusterGraph,
        params: &LayoutParams,
        eps: f64,
        max_steps: usize,
    ) -> Result<(LayoutState, usize), LayoutError> {
        let mut state = self.clone();
        for taken in 0..max_steps {
            let forces = state.forces(graph, params)?;
            let max_force = forces.values().map(|f| f.norm()).fold(0.0, f64::max);
            let max_speed = state
                .velocities
                .values()
                .map(|v| v.norm())
                .fold(0.0, f64::max);
            if max_force < eps && max_speed < eps {
                return Ok((state, taken));
            }
            state.advance(graph, params)?;
        }
        Ok((state, max_steps))
    }
}

fn mean(points: impl Iterator<Item = Point>) -> Point {
    let (sum, count) = points.fold((Point::default(), 0usize), |(s, c), p| (s + p, c + 1));
    if count == 0 {
        sum
    } else {
        sum * (1.0 / count as f64)
    }
}

/// Mean member position per group, keyed by the group's smallest member id.
/// Groups whose members have no positions are left out.
pub fn group_centroids(state: &LayoutState, graph: &ClusterGraph) -> BTreeMap<NodeId, Point> {
    graph
        .groups()
        .into_iter()
        .filter_map(|g| {
            let pts: Vec<Point> = g
                .members
                .iter()
                .filter_map(|m| state.positions.get(m).copied())
                .collect();
            (!pts.is_empty()).then(|| (g.key(), mean(pts.into_iter())))
        })
        .collect()
}
