//! Annotation engine for coreference clustering and constituency parsing
//! by drag-and-link and stroke-cutting, plus the service that hosts it.
//!
//! * [`cluster_graph`]: mentions, links, and colored groups.
//! * [`force_layout`]: the force simulation behind the clustering view.
//! * [`tree_editor`]: bracketed trees built by grouping and deleting.
//! * [`stroke_geometry`]: which tree edges a free-hand stroke cuts.
//! * [`formats`]: bracketed strings, cluster documents, task descriptors.
//! * [`metrics`]: purity, Rand index, and timing.
//! * [`server`]: task store with op logs, undo/redo, and an HTTP API.

pub mod cluster_graph;
pub mod config;
pub mod force_layout;
pub mod formats;
pub mod geometry;
pub mod metrics;
pub mod ops;
pub mod palette;
pub mod server;
pub mod stroke_geometry;
pub mod tree_editor;

pub use cluster_graph::{ClusterError, ClusterGraph, MentionNode, NodeId};
pub use config::Config;
pub use force_layout::{init_layout, Canvas, LayoutParams, LayoutState};
pub use formats::{
    parse_bracketed, parse_clusters, serialize_clusters, serialize_tree, ClusterDocument,
    TaskDescriptor,
};
pub use geometry::Point;
pub use metrics::{purity, rand_index, LabeledPartition};
pub use ops::{EditOp, OpKind};
pub use palette::{Color, Palette};
pub use tree_editor::{TreeDoc, TreeError, TreeNodeId};
