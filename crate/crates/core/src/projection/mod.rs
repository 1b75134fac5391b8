//! Statistically validated projection of the bipartite graph onto its top
//! layer.
//!
//! For every pair of top nodes the number of shared bottom neighbours
//! (V-motifs) is compared with its Poisson-Binomial distribution under the
//! fitted BiCM, where the motif through `alpha` appears with probability
//! `p(i, alpha) * p(j, alpha)`. Pairs whose right-tail p-value survives FDR
//! control become edges.

mod fdr;
mod pb;

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fdr::{step_up, FdrMethod};
pub use pb::{grouped_tail, poisson_binomial_pmf, poisson_binomial_tail};

use crate::bipartite::BipartiteGraph;
use crate::graph::NodeId;
use crate::nullmodels::{link_probability, multiplier_histogram, BicmFit};
use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("alpha {0} outside (0, 1)")]
    InvalidAlpha(f64),
    #[error("fit covers {fit_top}x{fit_bottom} nodes but the graph has {top}x{bottom}")]
    FitMismatch { fit_top: usize, fit_bottom: usize, top: usize, bottom: usize },
}

/// Co-neighbour counts `V_ij` for top pairs `i < j` with `V_ij > 0`, sorted
/// by pair. Pairs without common neighbours are implicit zeros.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VMotifCounts {
    pub top_count: usize,
    pub pairs: Vec<((usize, usize), usize)>,
}

impl VMotifCounts {
    /// Number of unordered top pairs, i.e. tested hypotheses.
    pub fn hypotheses(&self) -> usize {
        self.top_count * self.top_count.saturating_sub(1) / 2
    }

    pub fn get(&self, i: usize, j: usize) -> usize {
        let key = if i < j { (i, j) } else { (j, i) };
        self.pairs.binary_search_by_key(&key, |&(k, _)| k).map(|pos| self.pairs[pos].1).unwrap_or(0)
    }
}

pub fn vmotif_counts(g: &BipartiteGraph) -> VMotifCounts {
    let n = g.top_len();
    let rows = par::map_range(n, |i| {
        let mut counts: Vec<usize> = vec![0; n];
        let mut touched = Vec::new();
        for &alpha in g.top_neighbors(i) {
            for &j in g.bottom_neighbors(alpha) {
                if j > i {
                    if counts[j] == 0 {
                        touched.push(j);
                    }
                    counts[j] += 1;
                }
            }
        }
        touched.sort_unstable();
        touched.into_iter().map(|j| ((i, j), counts[j])).collect::<Vec<_>>()
    });
    VMotifCounts { top_count: n, pairs: rows.into_iter().flatten().collect() }
}

/// Right-tail p-values of observed pairs plus the total hypothesis count.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueTable {
    pub entries: Vec<((usize, usize), f64)>,
    pub hypotheses: usize,
}

/// Pairs rejected by the step-up procedure; untested pairs count as p = 1.
pub fn fdr_select(
    table: &PValueTable,
    alpha: f64,
    method: FdrMethod,
) -> Result<BTreeSet<(usize, usize)>, ProjectionError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ProjectionError::InvalidAlpha(alpha));
    }
    let pvalues: Vec<f64> = table.entries.iter().map(|e| e.1).collect();
    let flags = step_up(&pvalues, table.hypotheses, alpha, method);
    Ok(table.entries.iter().zip(flags).filter(|(_, f)| *f).map(|(e, _)| e.0).collect())
}

/// BiCM p-values of every observed V-motif count.
pub fn vmotif_pvalues(
    g: &BipartiteGraph,
    fit: &BicmFit,
    counts: &VMotifCounts,
) -> Result<PValueTable, ProjectionError> {
    if fit.eta.len() != g.top_len() || fit.theta.len() != g.bottom_len() {
        return Err(ProjectionError::FitMismatch {
            fit_top: fit.eta.len(),
            fit_bottom: fit.theta.len(),
            top: g.top_len(),
            bottom: g.bottom_len(),
        });
    }
    let bottom_classes = multiplier_histogram(&fit.theta);
    let pvalues = par::map_slice(&counts.pairs, |&((i, j), v)| {
        let groups: Vec<(u64, f64)> = bottom_classes
            .iter()
            .map(|&(theta, count)| {
                let q = link_probability(fit.eta[i], theta) * link_probability(fit.eta[j], theta);
                (count as u64, q)
            })
            .collect();
        grouped_tail(&groups, v)
    });
    let entries =
        counts.pairs.iter().zip(pvalues).map(|(&(pair, _), p)| p.map(|p| (pair, p))).collect::<Result<Vec<_>, _>>()?;
    Ok(PValueTable { entries, hypotheses: counts.hypotheses() })
}

/// Validated monopartite graph on the top layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedProjection {
    pub nodes: Vec<NodeId>,
    /// `(i, j, pvalue)` by node index, `i < j`, sorted.
    pub edges: Vec<(usize, usize, f64)>,
    pub hypotheses: usize,
    pub alpha: f64,
    pub method: FdrMethod,
}

impl ValidatedProjection {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Undirected adjacency lists by node index.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(i, j, _) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        for row in &mut adj {
            row.sort_unstable();
        }
        adj
    }

    /// Edge list `i,j,pvalue` with node ids.
    pub fn write_edges<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "j", "pvalue"])?;
        for &(i, j, p) in &self.edges {
            w.write_record([self.nodes[i].to_string(), self.nodes[j].to_string(), format!("{p:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn validated_projection(
    g: &BipartiteGraph,
    fit: &BicmFit,
    alpha: f64,
    method: FdrMethod,
) -> Result<ValidatedProjection, ProjectionError> {
    let counts = vmotif_counts(g);
    let table = vmotif_pvalues(g, fit, &counts)?;
    let selected = fdr_select(&table, alpha, method)?;
    let edges =
        table.entries.iter().filter(|(pair, _)| selected.contains(pair)).map(|&((i, j), p)| (i, j, p)).collect();
    Ok(ValidatedProjection { nodes: g.top_ids().to_vec(), edges, hypotheses: table.hypotheses, alpha, method })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nullmodels::{fit_bicm, FitOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fit(g: &BipartiteGraph) -> BicmFit {
        fit_bicm(&g.degrees(), &FitOptions::default()).unwrap()
    }

    #[test]
    fn shared_pair_counts() {
        let g = BipartiteGraph::from_links([(1, 10), (1, 11), (2, 10), (2, 11), (3, 12)]).unwrap();
        let v = vmotif_counts(&g);
        assert_eq!(v.get(0, 1), 2);
        assert_eq!(v.get(0, 2), 0);
        assert_eq!(v.hypotheses(), 3);
    }

    #[test]
    fn counts_match_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let links: Vec<(u64, u64)> =
            (0..20u64).flat_map(|i| (0..40u64).map(move |a| (i, 100 + a))).filter(|_| rng.random_bool(0.3)).collect();
        let g = BipartiteGraph::new(0..20, 100..140, links).unwrap();
        let v = vmotif_counts(&g);
        for i in 0..20 {
            for j in (i + 1)..20 {
                let dense: usize = (0..40).filter(|&a| g.has_link(i, a) && g.has_link(j, a)).count();
                assert_eq!(v.get(i, j), dense);
            }
        }
    }

    #[test]
    fn no_common_neighbours_no_edges() {
        let g = BipartiteGraph::from_links([(1, 10), (2, 11), (3, 12)]).unwrap();
        let p = validated_projection(&g, &fit(&g), 0.01, FdrMethod::BenjaminiHochberg).unwrap();
        assert!(p.edges.is_empty());
        assert_eq!(p.hypotheses, 3);
    }

    #[test]
    fn single_top_node() {
        let g = BipartiteGraph::from_links([(1, 10), (1, 11)]).unwrap();
        let p = validated_projection(&g, &fit(&g), 0.01, FdrMethod::BenjaminiHochberg).unwrap();
        assert!(p.edges.is_empty());
        assert_eq!(p.hypotheses, 0);
    }

    /// Two groups of five top nodes, each sharing thirty dedicated bottom
    /// nodes. The BiCM is uniform at 1/2, so every motif has probability 1/4
    /// and an intra-group pair sees all 30 of 60 possible motifs.
    #[test]
    fn planted_blocks_separate() {
        let mut links = Vec::new();
        for group in 0..2u64 {
            for t in 0..5u64 {
                for b in 0..30u64 {
                    links.push((group * 5 + t, 100 + group * 30 + b));
                }
            }
        }
        let g = BipartiteGraph::from_links(links).unwrap();
        let f = fit(&g);
        let p = validated_projection(&g, &f, 0.01, FdrMethod::BenjaminiHochberg).unwrap();
        let mut expected = Vec::new();
        for group in 0..2usize {
            for a in 0..5 {
                for b in (a + 1)..5 {
                    expected.push((group * 5 + a, group * 5 + b));
                }
            }
        }
        let got: Vec<(usize, usize)> = p.edges.iter().map(|&(i, j, _)| (i, j)).collect();
        assert_eq!(got, expected);
        let oracle = poisson_binomial_tail(&[0.25; 60], 30).unwrap();
        for &(_, _, pv) in &p.edges {
            assert!((pv - oracle).abs() <= 1e-9 * oracle);
        }
    }

    #[test]
    fn bad_alpha() {
        let t = PValueTable { entries: vec![], hypotheses: 0 };
        assert!(fdr_select(&t, 0.0, FdrMethod::BenjaminiHochberg).is_err());
        assert!(fdr_select(&t, 1.0, FdrMethod::BenjaminiHochberg).is_err());
    }

    #[test]
    fn relabelling_bottom_nodes_changes_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let links: Vec<(u64, u64)> = (0..12u64)
            .flat_map(|i| (0..30u64).map(move |a| (i, a)))
            .filter(|_| rng.random_bool(0.35))
            .map(|(i, a)| (i, 1000 + a))
            .collect();
        let relabelled: Vec<(u64, u64)> = links.iter().map(|&(i, a)| (i, 5000 - a)).collect();
        let g1 = BipartiteGraph::from_links(links).unwrap();
        let g2 = BipartiteGraph::from_links(relabelled).unwrap();
        let p1 = validated_projection(&g1, &fit(&g1), 0.05, FdrMethod::BenjaminiHochberg).unwrap();
        let p2 = validated_projection(&g2, &fit(&g2), 0.05, FdrMethod::BenjaminiHochberg).unwrap();
        assert_eq!(p1.nodes, p2.nodes);
        assert_eq!(p1.edges.len(), p2.edges.len());
        for (a, b) in p1.edges.iter().zip(&p2.edges) {
            assert_eq!((a.0, a.1), (b.0, b.1));
            assert!((a.2 - b.2).abs() <= 1e-9 * a.2.max(1e-300));
        }
    }
}
