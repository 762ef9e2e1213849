//! Annotation quality and speed.
//!
//! Purity scores each system cluster by its most frequent gold entity:
//! with `N_ij` the number of mentions of cluster `i` that belong to entity
//! `j`, `N_i` the size of cluster `i` and `N` the number of mentions,
//! `purity = Σ_i (N_i / N) · max_j (N_ij / N_i)`. The Rand index is the share
//! of mention pairs on which system and gold agree (together in both, or
//! apart in both). Mentions the worker never touched count as singleton
//! clusters.

use crate::cluster_graph::NodeId;
use crate::formats::{parse_clusters, ClusterDocument, FormatError, TaskKind};
use crate::ops::EditOp;
use serde::Deserialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("no clustered mentions")]
    EmptyPartition,
    #[error("the Rand index needs at least two mentions")]
    TooFewMentions,
    #[error("mention {0} appears in more than one cluster")]
    OverlappingClusters(String),
    #[error("mention {0} has no gold label")]
    Unlabeled(String),
    #[error("no correct clusters to divide by")]
    NoCorrectClusters,
    #[error("token count must be positive")]
    NoTokens,
    #[error("metric does not apply to a {0} task")]
    WrongKind(TaskKind),
    #[error("event timestamps decrease")]
    UnorderedTimestamps,
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// System clusters against gold entity labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPartition<T: Ord> {
    clusters: Vec<BTreeSet<T>>,
    gold: BTreeMap<T, String>,
}

impl<T: Ord + Clone + Debug> LabeledPartition<T> {
    /// Empty clusters are dropped and gold-labeled mentions absent from every
    /// cluster are added as singletons.
    pub fn new(
        clusters: Vec<BTreeSet<T>>,
        gold: BTreeMap<T, String>,
    ) -> Result<Self, MetricsError> {
        let mut seen = BTreeSet::new();
        let mut kept = Vec::new();
        for c in clusters.into_iter().filter(|c| !c.is_empty()) {
            for m in &c {
                if !seen.insert(m.clone()) {
                    return Err(MetricsError::OverlappingClusters(format!("{m:?}")));
                }
                if !gold.contains_key(m) {
                    return Err(MetricsError::Unlabeled(format!("{m:?}")));
                }
            }
            kept.push(c);
        }
        for id in gold.keys() {
            if !seen.contains(id) {
                kept.push(BTreeSet::from([id.clone()]));
            }
        }
        Ok(Self {
            clusters: kept,
            gold,
        })
    }

    pub fn clusters(&self) -> &[BTreeSet<T>] {
        &self.clusters
    }

    pub fn mention_count(&self) -> usize {
        self.clusters.iter().map(BTreeSet::len).sum()
    }

    fn label_counts(&self, cluster: &BTreeSet<T>) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for m in cluster {
            *counts.entry(self.gold[m].as_str()).or_insert(0) += 1;
        }
        counts
    }

    fn entity_sizes(&self) -> BTreeMap<&str, usize> {
        let mut sizes = BTreeMap::new();
        for c in &self.clusters {
            for m in c {
                *sizes.entry(self.gold[m].as_str()).or_insert(0) += 1;
            }
        }
        sizes
    }

    pub fn purity(&self) -> Result<f64, MetricsError> {
        let n = self.mention_count();
        if n == 0 {
            return Err(MetricsError::EmptyPartition);
        }
        // (N_i / N) · (max_j N_ij / N_i) = max_j N_ij / N
        let majority: usize = self
            .clusters
            .iter()
            .map(|c| self.label_counts(c).into_values().max().unwrap_or(0))
            .sum();
        Ok(majority as f64 / n as f64)
    }

    pub fn rand_index(&self) -> Result<f64, MetricsError> {
        let n = self.mention_count() as u128;
        if n < 2 {
            return Err(MetricsError::TooFewMentions);
        }
        let pairs = |k: u128| k * k.saturating_sub(1) / 2;
        let total = pairs(n);
        let mut together_system = 0u128;
        let mut together_both = 0u128;
        for c in &self.clusters {
            together_system += pairs(c.len() as u128);
            together_both += self
                .label_counts(c)
                .into_values()
                .map(|k| pairs(k as u128))
                .sum::<u128>();
        }
        let together_gold: u128 = self
            .entity_sizes()
            .into_values()
            .map(|k| pairs(k as u128))
            .sum();
        let apart_both = total + together_both - together_system - together_gold;
        Ok((together_both + apart_both) as f64 / total as f64)
    }

    /// Clusters that are exactly one complete gold entity.
    pub fn correct_cluster_count(&self) -> usize {
        let sizes = self.entity_sizes();
        self.clusters
            .iter()
            .filter(|c| {
                let counts = self.label_counts(c);
                counts.len() == 1 && counts.iter().all(|(label, &k)| sizes[label] == k)
            })
            .count()
    }
}

pub fn purity<T: Ord + Clone + Debug>(p: &LabeledPartition<T>) -> Result<f64, MetricsError> {
    p.purity()
}

pub fn rand_index<T: Ord + Clone + Debug>(p: &LabeledPartition<T>) -> Result<f64, MetricsError> {
    p.rand_index()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingLog {
    pub events: Vec<(f64, EditOp)>,
    pub task_kind: TaskKind,
    pub token_count: usize,
    pub correct_cluster_count: usize,
}

impl TimingLog {
    pub fn elapsed(&self) -> Result<f64, MetricsError> {
        if self.events.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(MetricsError::UnorderedTimestamps);
        }
        Ok(match (self.events.first(), self.events.last()) {
            (Some(first), Some(last)) => last.0 - first.0,
            _ => 0.0,
        })
    }
}

/// Seconds spent per correctly built cluster.
pub fn time_per_entity(log: &TimingLog) -> Result<f64, MetricsError> {
    if log.task_kind != TaskKind::Clustering {
        return Err(MetricsError::WrongKind(log.task_kind));
    }
    if log.correct_cluster_count == 0 {
        return Err(MetricsError::NoCorrectClusters);
    }
    Ok(log.elapsed()? / log.correct_cluster_count as f64)
}

/// Seconds spent per sentence token.
pub fn time_per_token(log: &TimingLog) -> Result<f64, MetricsError> {
    if log.task_kind != TaskKind::Parsing {
        return Err(MetricsError::WrongKind(log.task_kind));
    }
    if log.token_count == 0 {
        return Err(MetricsError::NoTokens);
    }
    Ok(log.elapsed()? / log.token_count as f64)
}

/// Gold annotations: either a finished cluster document or an explicit
/// `{"labels": {"<mention id>": "<entity>"}}` map.
#[derive(Debug, Clone, PartialEq)]
pub enum GoldDocument {
    Labels { labels: BTreeMap<NodeId, String> },
    Clusters(ClusterDocument),
}

impl GoldDocument {
    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Labels {
            labels: BTreeMap<String, String>,
        }
        let schema = |e: serde_json::Error| FormatError::SchemaViolation(e.to_string());
        let value: serde_json::Value = serde_json::from_str(text).map_err(schema)?;
        if value.get("labels").is_none() {
            return ClusterDocument::from_json(text).map(GoldDocument::Clusters);
        }
        let raw: Labels = serde_json::from_value(value).map_err(schema)?;
        let labels = raw
            .labels
            .into_iter()
            .map(|(k, v)| match k.parse::<u32>() {
                Ok(id) => Ok((NodeId(id), v)),
                Err(_) => Err(FormatError::SchemaViolation(format!(
                    "label key {k:?} is not a mention id"
                ))),
            })
            .collect::<Result<_, _>>()?;
        Ok(GoldDocument::Labels { labels })
    }

    pub fn labels(&self) -> Result<BTreeMap<NodeId, String>, FormatError> {
        match self {
            GoldDocument::Labels { labels } => Ok(labels.clone()),
            GoldDocument::Clusters(doc) => {
                parse_clusters(doc)?;
                Ok(doc
                    .groups
                    .iter()
                    .flat_map(|g| {
                        let label = format!("entity-{}", g.members[0]);
                        g.members.iter().map(move |&m| (m, label.clone()))
                    })
                    .collect())
            }
        }
    }
}

/// Scores a worker's cluster document against gold.
pub fn partition_from_documents(
    system: &ClusterDocument,
    gold: &GoldDocument,
) -> Result<LabeledPartition<NodeId>, MetricsError> {
    parse_clusters(system)?;
    let clusters = system
        .groups
        .iter()
        .map(|g| g.members.iter().copied().collect())
        .collect();
    LabeledPartition::new(clusters, gold.labels()?)
}
