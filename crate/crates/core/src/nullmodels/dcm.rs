use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Geometric};

use super::bicm::check_residual;
use super::peel::peel_two_sided;
use super::solver::{Class, ReducedSystem};
use super::{expected_row_degrees, link_probability, max_abs_diff, DirectedDegrees, FitError, FitOptions};
use crate::graph::{DirectedGraph, NodeId};
use crate::rng::substream;

/// Fitted Directed Configuration Model,
/// `q_ij = exp(-gamma_i - delta_j) / (1 + exp(-gamma_i - delta_j))` for `i != j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DcmFit {
    ids: Vec<NodeId>,
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl DcmFit {
    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn probability(&self, source: usize, target: usize) -> f64 {
        if source == target {
            0.0
        } else {
            link_probability(self.gamma[source], self.delta[target])
        }
    }

    pub fn expected_out_degrees(&self) -> Vec<f64> {
        expected_row_degrees(&self.gamma, &self.delta, true)
    }

    pub fn expected_in_degrees(&self) -> Vec<f64> {
        expected_row_degrees(&self.delta, &self.gamma, true)
    }

    /// Variance of each node's sampled out-degree, `sum_j q_ij (1 - q_ij)`.
    pub fn out_degree_variances(&self) -> Vec<f64> {
        (0..self.node_count())
            .map(|i| {
                (0..self.node_count())
                    .map(|j| {
                        let q = self.probability(i, j);
                        q * (1.0 - q)
                    })
                    .sum()
            })
            .collect()
    }

    pub fn in_degree_variances(&self) -> Vec<f64> {
        (0..self.node_count())
            .map(|j| {
                (0..self.node_count())
                    .map(|i| {
                        let q = self.probability(i, j);
                        q * (1.0 - q)
                    })
                    .sum()
            })
            .collect()
    }

    /// Replaces the node ids (positional).
    pub fn with_ids(mut self, ids: Vec<NodeId>) -> Self {
        assert_eq!(ids.len(), self.ids.len(), "id count must match node count");
        self.ids = ids;
        self
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct NodeClass {
    out: Option<usize>,
    inn: Option<usize>,
}

/// Fits the DCM to out- and in-degree sequences of a simple digraph without
/// self-loops. Node ids default to `0..n`.
pub fn fit_dcm(degrees: &DirectedDegrees, opts: &FitOptions) -> Result<DcmFit, FitError> {
    let n = degrees.out.len();
    if degrees.inn.len() != n {
        return Err(FitError::Infeasible("out- and in-degree sequences differ in length".into()));
    }
    let out_sum: usize = degrees.out.iter().sum();
    let in_sum: usize = degrees.inn.iter().sum();
    if out_sum != in_sum {
        return Err(FitError::Infeasible(format!("out- and in-degree sums differ ({out_sum} vs {in_sum})")));
    }
    let peeled = peel_two_sided(&degrees.out, &degrees.inn, true)?;

    let mut classes: BTreeMap<NodeClass, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let key = NodeClass { out: peeled.rows[i].residual(), inn: peeled.cols[i].residual() };
        if key.out.is_some() || key.inn.is_some() {
            classes.entry(key).or_default().push(i);
        }
    }
    let classes: Vec<(NodeClass, Vec<usize>)> = classes.into_iter().collect();
    let row_ids: Vec<usize> = (0..classes.len()).filter(|&c| classes[c].0.out.is_some()).collect();
    let col_ids: Vec<usize> = (0..classes.len()).filter(|&c| classes[c].0.inn.is_some()).collect();

    let count = |c: usize| classes[c].1.len() as f64;
    let rows: Vec<Class> =
        row_ids.iter().map(|&c| Class { count: count(c), degree: classes[c].0.out.unwrap() as f64 }).collect();
    let cols: Vec<Class> =
        col_ids.iter().map(|&c| Class { count: count(c), degree: classes[c].0.inn.unwrap() as f64 }).collect();
    let pairs = row_ids
        .iter()
        .flat_map(|&r| {
            col_ids.iter().map(move |&c| {
                let all = count(r) * count(c);
                if r == c {
                    all - count(r)
                } else {
                    all
                }
            })
        })
        .collect();
    let sys = ReducedSystem { rows, cols, pairs, tied: false };
    let sol = sys.solve(opts)?;

    let mut gamma: Vec<f64> =
        peeled.rows.iter().map(|s| s.forced_multiplier(peeled.steps).unwrap_or(f64::NAN)).collect();
    let mut delta: Vec<f64> =
        peeled.cols.iter().map(|s| s.forced_multiplier(peeled.steps).unwrap_or(f64::NAN)).collect();
    for (&c, &a) in row_ids.iter().zip(&sol.rows) {
        for &i in &classes[c].1 {
            gamma[i] = a;
        }
    }
    for (&c, &b) in col_ids.iter().zip(&sol.cols) {
        for &i in &classes[c].1 {
            delta[i] = b;
        }
    }

    let mut fit = DcmFit { ids: (0..n as NodeId).collect(), gamma, delta, residual: 0.0, iterations: sol.iterations };
    fit.residual = max_abs_diff(&fit.expected_out_degrees(), &degrees.out)
        .max(max_abs_diff(&fit.expected_in_degrees(), &degrees.inn));
    check_residual(fit.residual, fit.iterations, opts)?;
    Ok(fit)
}

/// Fits the DCM to the binary degree sequences of `g`, keeping its node ids.
pub fn fit_dcm_graph(g: &DirectedGraph, opts: &FitOptions) -> Result<DcmFit, FitError> {
    let degrees = DirectedDegrees { out: g.out_degrees(), inn: g.in_degrees() };
    Ok(fit_dcm(&degrees, opts)?.with_ids(g.ids().to_vec()))
}

/// Target nodes grouped by in-multiplier, for skip sampling.
pub(crate) struct TargetGroups {
    groups: Vec<(f64, Vec<usize>)>,
}

impl TargetGroups {
    pub(crate) fn new(fit: &DcmFit) -> Self {
        let mut by_value: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (j, d) in fit.delta.iter().enumerate() {
            by_value.entry(d.to_bits()).or_default().push(j);
        }
        Self { groups: by_value.into_iter().map(|(bits, members)| (f64::from_bits(bits), members)).collect() }
    }
}

/// Draws one graph from the DCM: every ordered pair `i != j` is linked
/// independently with probability `q_ij`. Within a group of targets sharing
/// one probability, successes are located by geometric skips.
pub(crate) fn sample_dcm_grouped<R: Rng>(fit: &DcmFit, groups: &TargetGroups, rng: &mut R) -> DirectedGraph {
    let n = fit.node_count();
    let mut out: Vec<Vec<(usize, u64)>> = vec![Vec::new(); n];
    for (i, row) in out.iter_mut().enumerate() {
        for (delta, members) in &groups.groups {
            let q = link_probability(fit.gamma[i], *delta);
            if q <= 0.0 {
                continue;
            }
            if q >= 1.0 {
                row.extend(members.iter().filter(|&&j| j != i).map(|&j| (j, 1)));
                continue;
            }
            let skip = Geometric::new(q).expect("probability in (0, 1)");
            let mut pos = 0u64;
            loop {
                pos = pos.saturating_add(skip.sample(rng));
                if pos >= members.len() as u64 {
                    break;
                }
                let j = members[pos as usize];
                if j != i {
                    row.push((j, 1));
                }
                pos += 1;
            }
        }
    }
    DirectedGraph::from_index_adjacency(fit.ids().to_vec(), out)
}

/// Draws one graph from the DCM; identical seeds give identical graphs.
pub fn sample_dcm(fit: &DcmFit, seed: u64) -> DirectedGraph {
    let groups = TargetGroups::new(fit);
    sample_dcm_grouped(fit, &groups, &mut substream(seed, 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regular_digraph_is_uniform() {
        // 2-regular on 6 nodes: q = 12 / 30.
        let d = DirectedDegrees { out: vec![2; 6], inn: vec![2; 6] };
        let fit = fit_dcm(&d, &FitOptions::default()).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { 0.0 } else { 0.4 };
                assert!((fit.probability(i, j) - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn silent_node_never_points() {
        let d = DirectedDegrees { out: vec![0, 2, 1, 1], inn: vec![2, 1, 1, 0] };
        let fit = fit_dcm(&d, &FitOptions::default()).unwrap();
        assert!((0..4).all(|j| fit.probability(0, j) == 0.0));
        assert!(fit.residual <= 1e-8);
    }

    #[test]
    fn extreme_probabilities_sample_deterministically() {
        // Complete digraph on 4 nodes: every q is one.
        let full = fit_dcm(&DirectedDegrees { out: vec![3; 4], inn: vec![3; 4] }, &FitOptions::default()).unwrap();
        let g = sample_dcm(&full, 1);
        assert_eq!(g.edge_count(), 12);
        let empty = fit_dcm(&DirectedDegrees { out: vec![0; 4], inn: vec![0; 4] }, &FitOptions::default()).unwrap();
        assert_eq!(sample_dcm(&empty, 1).edge_count(), 0);
    }

    #[test]
    fn same_seed_same_graph() {
        let d = DirectedDegrees { out: vec![1, 2, 3, 1, 0, 2], inn: vec![2, 1, 1, 2, 2, 1] };
        let fit = fit_dcm(&d, &FitOptions::default()).unwrap();
        assert_eq!(sample_dcm(&fit, 9), sample_dcm(&fit, 9));
        assert!(sample_dcm(&fit, 9).edges().all(|(s, t, w)| s != t && w == 1));
    }
}
