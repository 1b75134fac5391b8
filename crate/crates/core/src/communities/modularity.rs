use super::{CommunityError, Partition, UndirectedGraph};
use crate::nullmodels::{link_probability, multiplier_histogram, UcmFit};

/// Modularity with the UCM as null model:
/// `Q = 1/(2m) * sum_{i != j} (a_ij - p_ij) [c_i == c_j]`.
///
/// Graphs without edges have `Q = 0`.
pub fn modularity_ucm(graph: &UndirectedGraph, partition: &Partition, fit: &UcmFit) -> Result<f64, CommunityError> {
    let n = graph.node_count();
    if partition.len() != n || fit.node_count() != n {
        return Err(CommunityError::SizeMismatch { graph: n, partition: partition.len(), fit: fit.node_count() });
    }
    let m = graph.edge_count() as f64;
    if m == 0.0 {
        return Ok(0.0);
    }
    let labels = partition.labels();
    let mut observed = 0.0;
    for (i, j) in graph.edges() {
        if labels[i] == labels[j] {
            observed += 2.0;
        }
    }
    let mut expected = 0.0;
    for members in partition.members() {
        let values: Vec<f64> = members.iter().map(|&i| fit.multipliers[i]).collect();
        let hist = multiplier_histogram(&values);
        for &(a, ca) in &hist {
            for &(b, cb) in &hist {
                expected += ca * cb * link_probability(a, b);
            }
            expected -= ca * link_probability(a, a);
        }
    }
    Ok((observed - expected) / (2.0 * m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nullmodels::{fit_ucm, FitOptions};

    fn two_cliques() -> UndirectedGraph {
        let mut edges = Vec::new();
        for base in [0usize, 4] {
            for a in 0..4 {
                for b in (a + 1)..4 {
                    edges.push((base + a, base + b));
                }
            }
        }
        UndirectedGraph::from_index_edges(8, edges)
    }

    #[test]
    fn whole_graph_partition_is_zero() {
        let g = two_cliques();
        let fit = fit_ucm(&g.degrees(), &FitOptions::default()).unwrap();
        let q = modularity_ucm(&g, &Partition::from_labels(vec![0; 8]), &fit).unwrap();
        assert!(q.abs() <= 2.0 * 8.0 * 1e-8);
    }

    #[test]
    fn cliques_match_direct_sum() {
        let g = two_cliques();
        let fit = fit_ucm(&g.degrees(), &FitOptions::default()).unwrap();
        let part = Partition::from_labels(vec![0, 0, 0, 0, 1, 1, 1, 1]);
        let q = modularity_ucm(&g, &part, &fit).unwrap();
        // Every node has degree 3 of 7 possible: p = 3/7 uniformly.
        let p = 3.0 / 7.0;
        let mut direct = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                if i != j && part.labels()[i] == part.labels()[j] {
                    let a = if g.has_edge(i, j) { 1.0 } else { 0.0 };
                    direct += a - p;
                }
            }
        }
        direct /= 2.0 * 12.0;
        assert!(q > 0.0);
        assert!((q - direct).abs() < 1e-9, "{q} vs {direct}");
        assert!((q - (1.0 - 3.0 / 7.0)).abs() < 1e-9);
    }

    #[test]
    fn singletons_score_zero_and_sizes_must_match() {
        let g = two_cliques();
        let fit = fit_ucm(&g.degrees(), &FitOptions::default()).unwrap();
        let q = modularity_ucm(&g, &Partition::from_labels((0..8).collect()), &fit).unwrap();
        assert_eq!(q, 0.0);
        assert!(modularity_ucm(&g, &Partition::from_labels(vec![0; 7]), &fit).is_err());
    }
}
