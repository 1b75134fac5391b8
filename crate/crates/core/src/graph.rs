//! Directed retweet graphs and the seven-sector bow-tie decomposition.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// External account identifier. Node ids are stable across subgraphs.
pub type NodeId = u64;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("edge {0}->{1} has zero weight")]
    ZeroWeight(NodeId, NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("graph has no nodes")]
    Empty,
    #[error("unknown sector name {0:?}")]
    UnknownSector(String),
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Weighted directed graph without self-loops.
///
/// Nodes are kept sorted by id; adjacency is stored by dense index in both
/// directions so reachability can be run forwards and backwards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    ids: Vec<NodeId>,
    out: Vec<Vec<(usize, u64)>>,
    inc: Vec<Vec<usize>>,
}

impl DirectedGraph {
    /// Builds a graph from a node list and weighted edges. Edge endpoints are
    /// added to the node set; parallel edges have their weights summed.
    pub fn from_edges<N, E>(nodes: N, edges: E) -> Result<Self, GraphError>
    where
        N: IntoIterator<Item = NodeId>,
        E: IntoIterator<Item = (NodeId, NodeId, u64)>,
    {
        let mut ids: Vec<NodeId> = nodes.into_iter().collect();
        let mut merged: BTreeMap<(NodeId, NodeId), u64> = BTreeMap::new();
        for (s, t, w) in edges {
            if s == t {
                return Err(GraphError::SelfLoop(s));
            }
            if w == 0 {
                return Err(GraphError::ZeroWeight(s, t));
            }
            ids.push(s);
            ids.push(t);
            *merged.entry((s, t)).or_insert(0) += w;
        }
        ids.sort_unstable();
        ids.dedup();
        let n = ids.len();
        let mut out = vec![Vec::new(); n];
        let mut inc = vec![Vec::new(); n];
        for ((s, t), w) in merged {
            let si = ids.binary_search(&s).expect("endpoint registered");
            let ti = ids.binary_search(&t).expect("endpoint registered");
            out[si].push((ti, w));
            inc[ti].push(si);
        }
        Ok(Self { ids, out, inc })
    }

    /// Builds a graph directly from index adjacency. Targets in each row must
    /// be distinct and differ from the row index.
    pub(crate) fn from_index_adjacency(ids: Vec<NodeId>, mut out: Vec<Vec<(usize, u64)>>) -> Self {
        debug_assert_eq!(ids.len(), out.len());
        let mut inc = vec![Vec::new(); ids.len()];
        for (s, row) in out.iter_mut().enumerate() {
            row.sort_unstable_by_key(|&(t, _)| t);
            for &(t, _) in row.iter() {
                debug_assert_ne!(s, t);
                inc[t].push(s);
            }
        }
        Self { ids, out, inc }
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn total_weight(&self) -> u64 {
        self.out.iter().flatten().map(|&(_, w)| w).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Node ids in ascending order; position is the dense index.
    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn id(&self, index: usize) -> NodeId {
        self.ids[index]
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index_of(id).is_some()
    }

    pub fn out_neighbors(&self, index: usize) -> &[(usize, u64)] {
        &self.out[index]
    }

    pub fn in_neighbors(&self, index: usize) -> &[usize] {
        &self.inc[index]
    }

    pub fn out_degree(&self, index: usize) -> usize {
        self.out[index].len()
    }

    pub fn in_degree(&self, index: usize) -> usize {
        self.inc[index].len()
    }

    pub fn weight(&self, source: usize, target: usize) -> Option<u64> {
        let row = &self.out[source];
        row.binary_search_by_key(&target, |&(t, _)| t).ok().map(|pos| row[pos].1)
    }

    /// All edges as `(source index, target index, weight)`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.out.iter().enumerate().flat_map(|(s, row)| row.iter().map(move |&(t, w)| (s, t, w)))
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        self.out.iter().map(Vec::len).collect()
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        self.inc.iter().map(Vec::len).collect()
    }

    /// The same graph with every edge reversed.
    pub fn reversed(&self) -> Self {
        let mut out = vec![Vec::new(); self.ids.len()];
        for (s, t, w) in self.edges() {
            out[t].push((s, w));
        }
        Self::from_index_adjacency(self.ids.clone(), out)
    }

    /// Subgraph on `nodes` keeping every edge whose endpoints are both inside.
    pub fn induced_subgraph(&self, nodes: &[NodeId]) -> Result<Self, GraphError> {
        let mut keep = vec![false; self.ids.len()];
        for &id in nodes {
            let idx = self.index_of(id).ok_or(GraphError::UnknownNode(id))?;
            keep[idx] = true;
        }
        let mut remap = vec![usize::MAX; self.ids.len()];
        let mut ids = Vec::new();
        for (i, &k) in keep.iter().enumerate() {
            if k {
                remap[i] = ids.len();
                ids.push(self.ids[i]);
            }
        }
        let out = (0..self.ids.len())
            .filter(|&i| keep[i])
            .map(|i| self.out[i].iter().filter(|&&(t, _)| keep[t]).map(|&(t, w)| (remap[t], w)).collect())
            .collect();
        Ok(Self::from_index_adjacency(ids, out))
    }

    /// Writes the graph as an edge list with header `src,dst,weight`.
    pub fn write_edge_list<W: Write>(&self, writer: W) -> Result<(), GraphError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["src", "dst", "weight"])?;
        for (s, t, weight) in self.edges() {
            w.write_record([self.ids[s].to_string(), self.ids[t].to_string(), weight.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads an edge list with header `src,dst,weight`. The weight column is
    /// optional and defaults to one.
    pub fn read_edge_list<R: Read>(reader: R) -> Result<Self, GraphError> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut edges = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = row as u64 + 2;
            let field = |i: usize| -> Result<u64, GraphError> {
                rec.get(i)
                    .ok_or_else(|| GraphError::Parse { line, msg: format!("missing column {i}") })?
                    .parse()
                    .map_err(|e| GraphError::Parse { line, msg: format!("{e}") })
            };
            let w = if rec.len() > 2 && !rec[2].is_empty() { field(2)? } else { 1 };
            edges.push((field(0)?, field(1)?, w));
        }
        Self::from_edges(std::iter::empty(), edges)
    }
}

/// Strongly connected components as lists of dense indices, computed with an
/// iterative Tarjan traversal. Components come out in reverse topological order.
pub fn scc_indices(g: &DirectedGraph) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let n = g.node_count();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut call: Vec<(usize, usize)> = Vec::new();
    let mut next = 0usize;
    let mut comps = Vec::new();

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(top) = call.last_mut() {
            let v = top.0;
            let row = g.out_neighbors(v);
            if top.1 < row.len() {
                let w = row[top.1].0;
                top.1 += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }
    comps
}

/// Maximal strongly connected node sets, each sorted, ordered by smallest id.
pub fn strongly_connected_components(g: &DirectedGraph) -> Vec<Vec<NodeId>> {
    to_id_sets(g, scc_indices(g))
}

/// Components of the underlying undirected graph, each sorted, ordered by
/// smallest id.
pub fn weakly_connected_components(g: &DirectedGraph) -> Vec<Vec<NodeId>> {
    let n = g.node_count();
    let mut comp = vec![usize::MAX; n];
    let mut comps = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let c = comps.len();
        let mut members = vec![start];
        comp[start] = c;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            let fwd = g.out_neighbors(v).iter().map(|&(t, _)| t);
            let bwd = g.in_neighbors(v).iter().copied();
            for w in fwd.chain(bwd) {
                if comp[w] == usize::MAX {
                    comp[w] = c;
                    members.push(w);
                    queue.push_back(w);
                }
            }
        }
        members.sort_unstable();
        comps.push(members);
    }
    to_id_sets(g, comps)
}

fn to_id_sets(g: &DirectedGraph, comps: Vec<Vec<usize>>) -> Vec<Vec<NodeId>> {
    let mut sets: Vec<Vec<NodeId>> = comps.into_iter().map(|c| c.into_iter().map(|i| g.id(i)).collect()).collect();
    sets.sort_unstable_by_key(|s| s[0]);
    sets
}

/// The seven bow-tie sectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sector {
    #[serde(rename = "SCC")]
    Scc,
    #[serde(rename = "IN")]
    In,
    #[serde(rename = "OUT")]
    Out,
    #[serde(rename = "TUBES")]
    Tubes,
    #[serde(rename = "INTENDRILS")]
    InTendrils,
    #[serde(rename = "OUTTENDRILS")]
    OutTendrils,
    #[serde(rename = "OTHERS")]
    Others,
}

impl Sector {
    pub const ALL: [Sector; 7] =
        [Sector::Scc, Sector::In, Sector::Out, Sector::Tubes, Sector::InTendrils, Sector::OutTendrils, Sector::Others];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Sector::Scc => "SCC",
            Sector::In => "IN",
            Sector::Out => "OUT",
            Sector::Tubes => "TUBES",
            Sector::InTendrils => "INTENDRILS",
            Sector::OutTendrils => "OUTTENDRILS",
            Sector::Others => "OTHERS",
        }
    }

    /// The sector a node lands in once every edge is reversed.
    pub fn mirrored(self) -> Sector {
        match self {
            Sector::In => Sector::Out,
            Sector::Out => Sector::In,
            Sector::InTendrils => Sector::OutTendrils,
            Sector::OutTendrils => Sector::InTendrils,
            s => s,
        }
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Sector {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Sector::ALL
            .into_iter()
            .find(|sec| sec.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| GraphError::UnknownSector(s.to_string()))
    }
}

/// Per-sector node counts, indexed by [`Sector::index`].
pub type SectorSizes = [usize; 7];

/// Assignment of every node of a graph to exactly one bow-tie sector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BowTiePartition {
    ids: Vec<NodeId>,
    sectors: Vec<Sector>,
}

impl BowTiePartition {
    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    /// Sector per dense node index.
    pub fn sectors(&self) -> &[Sector] {
        &self.sectors
    }

    pub fn sector_at(&self, index: usize) -> Sector {
        self.sectors[index]
    }

    pub fn sector_of(&self, id: NodeId) -> Option<Sector> {
        self.ids.binary_search(&id).ok().map(|i| self.sectors[i])
    }

    pub fn sizes(&self) -> SectorSizes {
        sector_sizes(&self.sectors)
    }

    pub fn members(&self, sector: Sector) -> Vec<NodeId> {
        self.ids.iter().zip(&self.sectors).filter(|&(_, &s)| s == sector).map(|(&id, _)| id).collect()
    }

    /// Writes a `node,sector` table.
    pub fn write_table<W: Write>(&self, writer: W) -> Result<(), GraphError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["node", "sector"])?;
        for (id, s) in self.ids.iter().zip(&self.sectors) {
            w.write_record([id.to_string().as_str(), s.name()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn sector_sizes(sectors: &[Sector]) -> SectorSizes {
    let mut sizes = [0usize; 7];
    for s in sectors {
        sizes[s.index()] += 1;
    }
    sizes
}

/// Picks the greatest strongly connected component: most nodes, then most
/// internal edges, then smallest minimum node id.
fn pick_core(g: &DirectedGraph, comps: &[Vec<usize>], comp_of: &[usize]) -> usize {
    let mut internal = vec![0usize; comps.len()];
    for (s, t, _) in g.edges() {
        if comp_of[s] == comp_of[t] {
            internal[comp_of[s]] += 1;
        }
    }
    // Component members are sorted, so members[0] is the smallest index,
    // which is also the smallest id.
    (0..comps.len())
        .min_by(|&a, &b| {
            comps[b].len().cmp(&comps[a].len()).then(internal[b].cmp(&internal[a])).then(comps[a][0].cmp(&comps[b][0]))
        })
        .expect("nonempty graph has a component")
}

fn flood(g: &DirectedGraph, seeds: impl Iterator<Item = usize>, forward: bool, mark: &mut [bool]) {
    let mut stack: Vec<usize> = Vec::new();
    for s in seeds {
        if !mark[s] {
            mark[s] = true;
            stack.push(s);
        }
    }
    while let Some(v) = stack.pop() {
        if forward {
            for &(w, _) in g.out_neighbors(v) {
                if !mark[w] {
                    mark[w] = true;
                    stack.push(w);
                }
            }
        } else {
            for &w in g.in_neighbors(v) {
                if !mark[w] {
                    mark[w] = true;
                    stack.push(w);
                }
            }
        }
    }
}

/// Sector per dense index. The caller guarantees a nonempty graph.
pub(crate) fn bowtie_sectors(g: &DirectedGraph) -> Vec<Sector> {
    let n = g.node_count();
    let comps = scc_indices(g);
    let mut comp_of = vec![0usize; n];
    for (c, members) in comps.iter().enumerate() {
        for &v in members {
            comp_of[v] = c;
        }
    }
    let core = pick_core(g, &comps, &comp_of);
    let in_core = |v: usize| comp_of[v] == core;

    let mut from_core = vec![false; n];
    flood(g, comps[core].iter().copied(), true, &mut from_core);
    let mut to_core = vec![false; n];
    flood(g, comps[core].iter().copied(), false, &mut to_core);

    let mut sectors = vec![Sector::Others; n];
    for v in 0..n {
        sectors[v] = if in_core(v) {
            Sector::Scc
        } else if to_core[v] {
            Sector::In
        } else if from_core[v] {
            Sector::Out
        } else {
            Sector::Others
        };
    }

    let mut from_in = vec![false; n];
    flood(g, (0..n).filter(|&v| sectors[v] == Sector::In), true, &mut from_in);
    let mut to_out = vec![false; n];
    flood(g, (0..n).filter(|&v| sectors[v] == Sector::Out), false, &mut to_out);

    for v in 0..n {
        if sectors[v] != Sector::Others {
            continue;
        }
        sectors[v] = match (from_in[v], to_out[v]) {
            (true, true) => Sector::Tubes,
            (true, false) => Sector::InTendrils,
            (false, true) => Sector::OutTendrils,
            (false, false) => Sector::Others,
        };
    }
    sectors
}

/// Decomposes `g` into SCC, IN, OUT, TUBES, INTENDRILS, OUTTENDRILS and OTHERS
/// around its greatest strongly connected component.
pub fn bowtie_decompose(g: &DirectedGraph) -> Result<BowTiePartition, GraphError> {
    if g.is_empty() {
        return Err(GraphError::Empty);
    }
    Ok(BowTiePartition { ids: g.ids().to_vec(), sectors: bowtie_sectors(g) })
}
