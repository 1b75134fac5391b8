//! Community detection on the validated projection and label extension to
//! the retweet digraph.

mod louvain;
mod lpa;
mod modularity;

use std::collections::BTreeMap;
use std::io::Write;

use thiserror::Error;

use crate::graph::{DirectedGraph, GraphError, NodeId};
use crate::nullmodels::UndirectedDegrees;
use crate::projection::ValidatedProjection;

pub use louvain::louvain_ucm;
pub use lpa::{seeded_label_propagation, LabelAssignment, LpaOptions};
pub use modularity::modularity_ucm;

#[derive(Debug, Error)]
pub enum CommunityError {
    #[error("size mismatch: graph has {graph} nodes, partition {partition}, fit {fit}")]
    SizeMismatch { graph: usize, partition: usize, fit: usize },
    #[error("label propagation needs at least one seed")]
    EmptySeeds,
    #[error("seed node {0} is not in the graph")]
    UnknownSeed(NodeId),
    #[error("label propagation needs at least one run")]
    NoRuns,
    #[error("expected {expected} labels, found {found}")]
    LabelCount { expected: usize, found: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Simple undirected graph over positional nodes, each carrying an id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    ids: Vec<NodeId>,
    adj: Vec<Vec<usize>>,
    edges: usize,
}

impl UndirectedGraph {
    /// Builds a graph on nodes `0..n` with ids `0..n`. Duplicate edges collapse;
    /// self-loops are ignored.
    pub fn from_index_edges<I>(n: usize, edges: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        Self::with_ids((0..n as NodeId).collect(), edges)
    }

    pub fn with_ids<I>(ids: Vec<NodeId>, edges: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let n = ids.len();
        let mut adj = vec![Vec::new(); n];
        for (a, b) in edges {
            assert!(a < n && b < n, "edge ({a}, {b}) out of range for {n} nodes");
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        let mut count = 0;
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
            count += row.len();
        }
        Self { ids, adj, edges: count / 2 }
    }

    pub fn from_projection(p: &ValidatedProjection) -> Self {
        Self::with_ids(p.nodes.clone(), p.edges.iter().map(|&(i, j, _)| (i, j)))
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    pub fn degrees(&self) -> UndirectedDegrees {
        UndirectedDegrees(self.adj.iter().map(Vec::len).collect())
    }

    /// Each edge once, as `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj.iter().enumerate().flat_map(|(i, row)| row.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }
}

/// Community label for each node, numbered `0..k` by first appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
    count: usize,
}

impl Partition {
    pub fn from_labels(raw: Vec<usize>) -> Self {
        let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
        let labels = raw
            .into_iter()
            .map(|l| {
                let next = seen.len();
                *seen.entry(l).or_insert(next)
            })
            .collect();
        Self { labels, count: seen.len() }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn community_count(&self) -> usize {
        self.count
    }

    /// Node indices of each community, in label order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (v, &l) in self.labels.iter().enumerate() {
            out[l].push(v);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Community {
    pub label: u32,
    pub graph: DirectedGraph,
}

/// Result of splitting a digraph by node label.
#[derive(Debug, Clone, PartialEq)]
pub struct CommunitySplit {
    pub communities: Vec<Community>,
    /// Nodes without a label.
    pub unassigned: usize,
    /// Edges between two differently labelled nodes: `(edges, weight)` per
    /// `(source label, target label)`.
    pub cross: BTreeMap<(u32, u32), (usize, u64)>,
    /// Edges touching at least one unlabelled node.
    pub unassigned_edges: usize,
}

impl CommunitySplit {
    pub fn cross_edge_count(&self) -> usize {
        self.cross.values().map(|&(e, _)| e).sum()
    }

    pub fn write_cross_table<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["source_label", "target_label", "edges", "weight"])?;
        for (&(a, b), &(e, wt)) in &self.cross {
            w.write_record([a.to_string(), b.to_string(), e.to_string(), wt.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One induced subgraph per label, in ascending label order. `labels` is
/// positional over the digraph's nodes.
pub fn extract_communities(g: &DirectedGraph, labels: &[Option<u32>]) -> Result<CommunitySplit, CommunityError> {
    if labels.len() != g.node_count() {
        return Err(CommunityError::LabelCount { expected: g.node_count(), found: labels.len() });
    }
    let mut groups: BTreeMap<u32, Vec<NodeId>> = BTreeMap::new();
    let mut unassigned = 0;
    for (v, l) in labels.iter().enumerate() {
        match l {
            Some(l) => groups.entry(*l).or_default().push(g.id(v)),
            None => unassigned += 1,
        }
    }
    let mut cross: BTreeMap<(u32, u32), (usize, u64)> = BTreeMap::new();
    let mut unassigned_edges = 0;
    for (s, t, w) in g.edges() {
        match (labels[s], labels[t]) {
            (Some(a), Some(b)) if a != b => {
                let cell = cross.entry((a, b)).or_insert((0, 0));
                cell.0 += 1;
                cell.1 += w;
            }
            (Some(_), Some(_)) => {}
            _ => unassigned_edges += 1,
        }
    }
    let communities = groups
        .into_iter()
        .map(|(label, members)| Ok(Community { label, graph: g.induced_subgraph(&members)? }))
        .collect::<Result<Vec<_>, GraphError>>()?;
    Ok(CommunitySplit { communities, unassigned, cross, unassigned_edges })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_components() -> DirectedGraph {
        DirectedGraph::from_edges([], [(1, 2, 3), (2, 3, 1), (10, 11, 2), (11, 10, 1)]).unwrap()
    }

    #[test]
    fn single_label_keeps_everything() {
        let g = two_components();
        let split = extract_communities(&g, &vec![Some(4); g.node_count()]).unwrap();
        assert_eq!(split.communities.len(), 1);
        assert_eq!(split.communities[0].graph, g);
        assert_eq!(split.cross_edge_count(), 0);
    }

    #[test]
    fn component_labels_lose_no_edges() {
        let g = two_components();
        let labels: Vec<Option<u32>> = g.ids().iter().map(|&id| Some(if id < 10 { 0 } else { 1 })).collect();
        let split = extract_communities(&g, &labels).unwrap();
        let kept: usize = split.communities.iter().map(|c| c.graph.edge_count()).sum();
        assert_eq!(kept, g.edge_count());
    }

    #[test]
    fn mixed_edges_are_counted_not_kept() {
        let g = two_components();
        // ids sorted: 1, 2, 3, 10, 11
        let labels = vec![Some(0), Some(1), Some(1), None, Some(2)];
        let split = extract_communities(&g, &labels).unwrap();
        assert_eq!(split.cross.get(&(0, 1)), Some(&(1, 3)));
        assert_eq!(split.unassigned, 1);
        assert_eq!(split.unassigned_edges, 2);
        let kept: usize = split.communities.iter().map(|c| c.graph.edge_count()).sum();
        assert_eq!(kept, 1);
        let mut buf = Vec::new();
        split.write_cross_table(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "source_label,target_label,edges,weight\n0,1,1,3\n");
    }

    #[test]
    fn partition_relabels_by_first_appearance() {
        let p = Partition::from_labels(vec![7, 3, 7, 9]);
        assert_eq!(p.labels(), &[0, 1, 0, 2]);
        assert_eq!(p.members(), vec![vec![0, 2], vec![1], vec![3]]);
    }

    #[test]
    fn undirected_edges_deduplicate() {
        let g = UndirectedGraph::from_index_edges(3, [(0, 1), (1, 0), (1, 2), (2, 2)]);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
        assert_eq!(g.degrees().0, vec![1, 2, 1]);
    }
}
