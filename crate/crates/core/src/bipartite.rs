//! Binary bipartite graph between a top layer (verified accounts) and a bottom
//! layer (unverified accounts).

use thiserror::Error;

use crate::graph::NodeId;
use crate::nullmodels::BipartiteDegrees;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BipartiteError {
    #[error("node {0} is listed on both layers")]
    BothLayers(NodeId),
    #[error("link endpoint {0} is not on the expected layer")]
    UnknownEndpoint(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    top_ids: Vec<NodeId>,
    bottom_ids: Vec<NodeId>,
    top_adj: Vec<Vec<usize>>,
    bottom_adj: Vec<Vec<usize>>,
}

impl BipartiteGraph {
    /// Builds the graph on explicit layers; repeated links collapse to one.
    pub fn new<T, B, L>(top: T, bottom: B, links: L) -> Result<Self, BipartiteError>
    where
        T: IntoIterator<Item = NodeId>,
        B: IntoIterator<Item = NodeId>,
        L: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut top_ids: Vec<NodeId> = top.into_iter().collect();
        let mut bottom_ids: Vec<NodeId> = bottom.into_iter().collect();
        top_ids.sort_unstable();
        top_ids.dedup();
        bottom_ids.sort_unstable();
        bottom_ids.dedup();
        if let Some(&dup) = top_ids.iter().find(|id| bottom_ids.binary_search(id).is_ok()) {
            return Err(BipartiteError::BothLayers(dup));
        }
        let mut top_adj = vec![Vec::new(); top_ids.len()];
        let mut bottom_adj = vec![Vec::new(); bottom_ids.len()];
        for (t, b) in links {
            let ti = top_ids.binary_search(&t).map_err(|_| BipartiteError::UnknownEndpoint(t))?;
            let bi = bottom_ids.binary_search(&b).map_err(|_| BipartiteError::UnknownEndpoint(b))?;
            top_adj[ti].push(bi);
            bottom_adj[bi].push(ti);
        }
        for row in top_adj.iter_mut().chain(bottom_adj.iter_mut()) {
            row.sort_unstable();
            row.dedup();
        }
        Ok(Self { top_ids, bottom_ids, top_adj, bottom_adj })
    }

    /// Builds the graph whose layers are exactly the linked nodes.
    pub fn from_links<L>(links: L) -> Result<Self, BipartiteError>
    where
        L: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let links: Vec<(NodeId, NodeId)> = links.into_iter().collect();
        Self::new(links.iter().map(|l| l.0), links.iter().map(|l| l.1), links.iter().copied())
    }

    pub fn top_ids(&self) -> &[NodeId] {
        &self.top_ids
    }

    pub fn bottom_ids(&self) -> &[NodeId] {
        &self.bottom_ids
    }

    pub fn top_len(&self) -> usize {
        self.top_ids.len()
    }

    pub fn bottom_len(&self) -> usize {
        self.bottom_ids.len()
    }

    pub fn top_neighbors(&self, i: usize) -> &[usize] {
        &self.top_adj[i]
    }

    pub fn bottom_neighbors(&self, alpha: usize) -> &[usize] {
        &self.bottom_adj[alpha]
    }

    pub fn link_count(&self) -> usize {
        self.top_adj.iter().map(Vec::len).sum()
    }

    pub fn has_link(&self, i: usize, alpha: usize) -> bool {
        self.top_adj[i].binary_search(&alpha).is_ok()
    }

    pub fn degrees(&self) -> BipartiteDegrees {
        BipartiteDegrees {
            top: self.top_adj.iter().map(Vec::len).collect(),
            bottom: self.bottom_adj.iter().map(Vec::len).collect(),
        }
    }
}
