//! Label propagation from fixed seeds, repeated over independent runs.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CommunityError;
use crate::graph::{DirectedGraph, NodeId};
use crate::par;
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LpaOptions {
    pub runs: usize,
    /// Vote with retweet counts rather than one vote per neighbour.
    pub weighted: bool,
    /// Upper bound on sweeps per run.
    pub max_sweeps: usize,
}

impl Default for LpaOptions {
    fn default() -> Self {
        Self { runs: 500, weighted: true, max_sweeps: 1000 }
    }
}

/// Final labels after all runs. `frequency[v]` is the share of runs in which
/// `v` ended with `labels[v]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAssignment {
    pub ids: Vec<NodeId>,
    pub labels: Vec<Option<u32>>,
    pub frequency: Vec<f64>,
    pub runs: usize,
}

impl LabelAssignment {
    pub fn label_of(&self, id: NodeId) -> Option<u32> {
        let v = self.ids.binary_search(&id).ok()?;
        self.labels[v]
    }

    pub fn unassigned(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }

    /// Table `node,label,frequency`; unlabelled nodes have an empty label.
    pub fn write_table<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["node", "label", "frequency"])?;
        for ((id, l), f) in self.ids.iter().zip(&self.labels).zip(&self.frequency) {
            let label = l.map(|l| l.to_string()).unwrap_or_default();
            w.write_record([id.to_string(), label, f.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Undirected view: neighbour and summed weight over both directions.
fn undirected_view(g: &DirectedGraph, weighted: bool) -> Vec<Vec<(usize, f64)>> {
    let mut maps: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); g.node_count()];
    for (s, t, w) in g.edges() {
        let w = if weighted { w as f64 } else { 1.0 };
        *maps[s].entry(t).or_insert(0.0) += w;
        *maps[t].entry(s).or_insert(0.0) += w;
    }
    maps.into_iter().map(|m| m.into_iter().map(|(u, w)| if weighted { (u, w) } else { (u, 1.0) }).collect()).collect()
}

fn single_run<R: Rng>(
    adj: &[Vec<(usize, f64)>],
    seeds: &[Option<u32>],
    max_sweeps: usize,
    rng: &mut R,
) -> Vec<Option<u32>> {
    let mut labels = seeds.to_vec();
    let mut alive: Vec<Vec<bool>> = adj.iter().map(|row| vec![true; row.len()]).collect();
    let mut free: Vec<usize> = (0..adj.len()).filter(|&v| seeds[v].is_none() && !adj[v].is_empty()).collect();
    let mut tally: BTreeMap<u32, f64> = BTreeMap::new();
    let mut voters: Vec<usize> = Vec::new();

    for _ in 0..max_sweeps {
        free.shuffle(rng);
        let mut changed = false;
        for &v in &free {
            let winner = loop {
                tally.clear();
                voters.clear();
                for (k, &(u, w)) in adj[v].iter().enumerate() {
                    if let (true, Some(l)) = (alive[v][k], labels[u]) {
                        *tally.entry(l).or_insert(0.0) += w;
                        voters.push(k);
                    }
                }
                let Some(best) = tally.values().copied().reduce(f64::max) else {
                    break None;
                };
                let mut top = tally.iter().filter(|&(_, &w)| w == best);
                let first = *top.next().unwrap().0;
                if top.next().is_none() {
                    break Some(first);
                }
                let k = voters[rng.random_range(0..voters.len())];
                alive[v][k] = false;
            };
            if let Some(l) = winner {
                if labels[v] != Some(l) {
                    labels[v] = Some(l);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

const BATCH: usize = 64;

/// Propagates seed labels over the undirected view of `g`, `opts.runs` times
/// with independent random streams, and keeps each node's most frequent final
/// label (ties to the smallest label). Seeds keep their label in every run. A
/// tie between labels at a node removes one random voting edge of that node
/// for the rest of the run, then the vote is repeated.
pub fn seeded_label_propagation(
    g: &DirectedGraph,
    seeds: &BTreeMap<NodeId, u32>,
    opts: &LpaOptions,
    seed: u64,
) -> Result<LabelAssignment, CommunityError> {
    if seeds.is_empty() {
        return Err(CommunityError::EmptySeeds);
    }
    if opts.runs == 0 {
        return Err(CommunityError::NoRuns);
    }
    let n = g.node_count();
    let mut fixed = vec![None; n];
    for (&id, &l) in seeds {
        let v = g.index_of(id).ok_or(CommunityError::UnknownSeed(id))?;
        fixed[v] = Some(l);
    }
    let adj = undirected_view(g, opts.weighted);

    let mut counts: Vec<BTreeMap<u32, usize>> = vec![BTreeMap::new(); n];
    let mut start = 0;
    while start < opts.runs {
        let len = BATCH.min(opts.runs - start);
        let batch = par::map_range(len, |r| {
            let mut rng = substream(seed, (start + r) as u64);
            single_run(&adj, &fixed, opts.max_sweeps, &mut rng)
        });
        for run in batch {
            for (v, l) in run.into_iter().enumerate() {
                if let Some(l) = l {
                    *counts[v].entry(l).or_insert(0) += 1;
                }
            }
        }
        start += len;
    }

    let mut labels = Vec::with_capacity(n);
    let mut frequency = Vec::with_capacity(n);
    for c in counts {
        let best = c.iter().fold(None, |acc: Option<(u32, usize)>, (&l, &k)| match acc {
            Some((_, bk)) if bk >= k => acc,
            _ => Some((l, k)),
        });
        match best {
            Some((l, k)) => {
                labels.push(Some(l));
                frequency.push(k as f64 / opts.runs as f64);
            }
            None => {
                labels.push(None);
                frequency.push(0.0);
            }
        }
    }
    Ok(LabelAssignment { ids: g.ids().to_vec(), labels, frequency, runs: opts.runs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(runs: usize) -> LpaOptions {
        LpaOptions { runs, ..LpaOptions::default() }
    }

    #[test]
    fn star_follows_its_center() {
        let g = DirectedGraph::from_edges([], (1..=6).map(|l| (0, l, 1))).unwrap();
        let seeds = BTreeMap::from([(0, 3)]);
        let a = seeded_label_propagation(&g, &seeds, &opts(20), 1).unwrap();
        assert!(a.labels.iter().all(|&l| l == Some(3)));
        assert!(a.frequency.iter().all(|&f| f == 1.0));
    }

    #[test]
    fn components_keep_their_seed() {
        let g = DirectedGraph::from_edges([], [(1, 2, 1), (2, 3, 1), (3, 1, 2), (10, 11, 1), (12, 11, 4)]).unwrap();
        let seeds = BTreeMap::from([(1, 0), (12, 1)]);
        let a = seeded_label_propagation(&g, &seeds, &opts(30), 5).unwrap();
        for id in [1, 2, 3] {
            assert_eq!(a.label_of(id), Some(0));
        }
        for id in [10, 11, 12] {
            assert_eq!(a.label_of(id), Some(1));
        }
    }

    #[test]
    fn balanced_node_splits_between_hubs() {
        // Node 5 sits between two seeded hubs with equal weight.
        let g = DirectedGraph::from_edges([], [(1, 5, 2), (2, 5, 2)]).unwrap();
        let seeds = BTreeMap::from([(1, 0), (2, 1)]);
        let a = seeded_label_propagation(&g, &seeds, &opts(500), 11).unwrap();
        let b = seeded_label_propagation(&g, &seeds, &opts(500), 11).unwrap();
        assert_eq!(a, b);
        let f = a.frequency[g.index_of(5).unwrap()];
        assert!((0.5..0.6).contains(&f), "{f}");
        assert_eq!(a.label_of(1), Some(0));
        assert_eq!(a.label_of(2), Some(1));
    }

    #[test]
    fn unreachable_nodes_stay_unassigned() {
        let g = DirectedGraph::from_edges([9], [(1, 2, 1)]).unwrap();
        let a = seeded_label_propagation(&g, &BTreeMap::from([(1, 0)]), &opts(3), 0).unwrap();
        assert_eq!(a.label_of(9), None);
        assert_eq!(a.unassigned(), 1);
        let mut buf = Vec::new();
        a.write_table(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().ends_with("9,,0\n"));
    }

    #[test]
    fn rejects_bad_seeds() {
        let g = DirectedGraph::from_edges([], [(1, 2, 1)]).unwrap();
        assert!(matches!(seeded_label_propagation(&g, &BTreeMap::new(), &opts(1), 0), Err(CommunityError::EmptySeeds)));
        assert!(matches!(
            seeded_label_propagation(&g, &BTreeMap::from([(7, 0)]), &opts(1), 0),
            Err(CommunityError::UnknownSeed(7))
        ));
    }
}
