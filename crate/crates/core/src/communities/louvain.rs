//! Louvain optimisation of UCM modularity.
//!
//! The expected weight between two groups is not separable in node strengths
//! as it is for Chung-Lu, so every (super)node carries a histogram of the UCM
//! multiplier classes it contains, and every community keeps
//! `exposure[c] = sum over members of p(class c, member)`. The expected weight
//! between a supernode and a community is then a short dot product.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::{Partition, UndirectedGraph};
use crate::nullmodels::{link_probability, UcmFit};
use crate::rng::substream;

const MIN_GAIN: f64 = 1e-12;

struct Level {
    /// Neighbour supernode and summed edge weight, excluding self-loops.
    adj: Vec<Vec<(usize, f64)>>,
    /// Sparse `(class, count)` histogram per supernode.
    classes: Vec<Vec<(usize, f64)>>,
}

struct NullTable {
    /// `prob[c * k + d] = p(class c, class d)`.
    prob: Vec<f64>,
    k: usize,
}

impl NullTable {
    fn row(&self, c: usize) -> &[f64] {
        &self.prob[c * self.k..(c + 1) * self.k]
    }
}

/// Local moving phase. Returns the community of every supernode and whether
/// anything moved.
fn local_moves(level: &Level, table: &NullTable, m: f64, order: &[usize]) -> (Vec<usize>, bool) {
    let n = level.adj.len();
    let k = table.k;
    let mut comm: Vec<usize> = (0..n).collect();
    let mut exposure: Vec<Vec<f64>> = level
        .classes
        .iter()
        .map(|hist| {
            let mut e = vec![0.0; k];
            for &(c, cnt) in hist {
                for (slot, p) in e.iter_mut().zip(table.row(c)) {
                    *slot += cnt * p;
                }
            }
            e
        })
        .collect();
    let mut size = vec![1usize; n];
    let mut empty: Vec<usize> = Vec::new();
    let mut links: BTreeMap<usize, f64> = BTreeMap::new();
    let mut moved_any = false;

    let expected = |hist: &[(usize, f64)], e: &[f64]| -> f64 { hist.iter().map(|&(c, cnt)| cnt * e[c]).sum() };
    let shift = |e: &mut [f64], hist: &[(usize, f64)], sign: f64| {
        for &(c, cnt) in hist {
            for (slot, p) in e.iter_mut().zip(table.row(c)) {
                *slot += sign * cnt * p;
            }
        }
    };

    loop {
        let mut moved = false;
        for &v in order {
            let home = comm[v];
            let hist = &level.classes[v];
            shift(&mut exposure[home], hist, -1.0);
            size[home] -= 1;
            if size[home] == 0 {
                empty.push(home);
            }

            links.clear();
            for &(u, w) in &level.adj[v] {
                *links.entry(comm[u]).or_insert(0.0) += w;
            }
            let gain = |c: usize, w: f64| (w - expected(hist, &exposure[c])) / m;

            let mut best = home;
            let mut best_gain = gain(home, links.get(&home).copied().unwrap_or(0.0));
            for (&c, &w) in &links {
                if c == home {
                    continue;
                }
                let g = gain(c, w);
                if g > best_gain + MIN_GAIN {
                    best = c;
                    best_gain = g;
                }
            }
            // Moving alone into an empty community gains nothing.
            if best_gain < -MIN_GAIN && size[home] > 0 {
                if let Some(&c) = empty.last() {
                    best = c;
                }
            }

            if size[best] == 0 {
                empty.retain(|&c| c != best);
            }
            shift(&mut exposure[best], hist, 1.0);
            size[best] += 1;
            comm[v] = best;
            if best != home {
                moved = true;
            }
        }
        if !moved {
            break;
        }
        moved_any = true;
    }
    (comm, moved_any)
}

/// Collapses communities into supernodes, numbered by first appearance.
fn aggregate(level: &Level, comm: &[usize]) -> (Level, Vec<usize>) {
    let mut renumber: BTreeMap<usize, usize> = BTreeMap::new();
    let mut mapping = vec![0usize; comm.len()];
    for (v, &c) in comm.iter().enumerate() {
        let next = renumber.len();
        mapping[v] = *renumber.entry(c).or_insert(next);
    }
    let n = renumber.len();
    let mut adj_maps: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    let mut class_maps: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    for v in 0..comm.len() {
        let a = mapping[v];
        for &(u, w) in &level.adj[v] {
            let b = mapping[u];
            if a != b {
                *adj_maps[a].entry(b).or_insert(0.0) += w;
            }
        }
        for &(c, cnt) in &level.classes[v] {
            *class_maps[a].entry(c).or_insert(0.0) += cnt;
        }
    }
    let level = Level {
        adj: adj_maps.into_iter().map(|m| m.into_iter().collect()).collect(),
        classes: class_maps.into_iter().map(|m| m.into_iter().collect()).collect(),
    };
    (level, mapping)
}

/// Louvain community detection maximising [`super::modularity_ucm`]. The node
/// visiting order of each level is shuffled from `seed`.
pub fn louvain_ucm(graph: &UndirectedGraph, fit: &UcmFit, seed: u64) -> Partition {
    let n = graph.node_count();
    let m = graph.edge_count() as f64;
    if n == 0 || m == 0.0 {
        return Partition::from_labels((0..n).collect());
    }

    let mut values: BTreeMap<u64, usize> = BTreeMap::new();
    for v in &fit.multipliers {
        let next = values.len();
        values.entry(v.to_bits()).or_insert(next);
    }
    let class_values: Vec<f64> = {
        let mut cv = vec![0.0; values.len()];
        for (&bits, &c) in &values {
            cv[c] = f64::from_bits(bits);
        }
        cv
    };
    let k = class_values.len();
    let mut prob = vec![0.0; k * k];
    for c in 0..k {
        for d in 0..k {
            prob[c * k + d] = link_probability(class_values[c], class_values[d]);
        }
    }
    let table = NullTable { prob, k };

    let mut level = Level {
        adj: (0..n).map(|v| graph.neighbors(v).iter().map(|&u| (u, 1.0)).collect()).collect(),
        classes: fit.multipliers.iter().map(|v| vec![(values[&v.to_bits()], 1.0)]).collect(),
    };
    // Within one supernode, a node never pairs with itself.
    let mut assignment: Vec<usize> = (0..n).collect();
    let mut pass = 0u64;
    loop {
        let mut order: Vec<usize> = (0..level.adj.len()).collect();
        order.shuffle(&mut substream(seed, pass));
        pass += 1;
        let (comm, moved) = local_moves(&level, &table, m, &order);
        if !moved {
            break;
        }
        let (next, mapping) = aggregate(&level, &comm);
        for a in assignment.iter_mut() {
            *a = mapping[*a];
        }
        let shrunk = next.adj.len() < level.adj.len();
        level = next;
        if !shrunk {
            break;
        }
    }
    Partition::from_labels(assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::communities::modularity_ucm;
    use crate::nullmodels::{fit_ucm, FitOptions};

    fn fitted(g: &UndirectedGraph) -> UcmFit {
        fit_ucm(&g.degrees(), &FitOptions::default()).unwrap()
    }

    #[test]
    fn two_triangles_split() {
        let g = UndirectedGraph::from_index_edges(6, vec![(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]);
        let p = louvain_ucm(&g, &fitted(&g), 3);
        assert_eq!(p.labels(), &[0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn clique_stays_whole() {
        // A clique beside a path; the complete graph alone saturates the UCM.
        let mut edges: Vec<(usize, usize)> = (0..6).flat_map(|a| ((a + 1)..6).map(move |b| (a, b))).collect();
        edges.extend([(6, 7), (7, 8), (8, 9)]);
        let g = UndirectedGraph::from_index_edges(10, edges);
        for seed in 0..5 {
            let p = louvain_ucm(&g, &fitted(&g), seed);
            assert!(p.labels()[..6].iter().all(|&l| l == p.labels()[0]));
            assert!(p.labels()[6..].iter().all(|&l| l != p.labels()[0]));
        }
    }

    #[test]
    fn seeded_runs_repeat() {
        let edges = vec![(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3), (5, 6), (6, 7), (7, 0)];
        let g = UndirectedGraph::from_index_edges(8, edges);
        let f = fitted(&g);
        assert_eq!(louvain_ucm(&g, &f, 42), louvain_ucm(&g, &f, 42));
        let q = modularity_ucm(&g, &louvain_ucm(&g, &f, 42), &f).unwrap();
        assert!(q >= 0.0);
    }

    #[test]
    fn edgeless_graph_gives_singletons() {
        let g = UndirectedGraph::from_index_edges(3, vec![]);
        let f = fitted(&g);
        assert_eq!(louvain_ucm(&g, &f, 0).community_count(), 3);
    }
}
