use super::bicm::{check_residual, classes_by_residual};
use super::peel::peel_symmetric;
use super::solver::{Class, ReducedSystem};
use super::{link_probability, max_abs_diff, multiplier_histogram, FitError, FitOptions, UndirectedDegrees};

/// Fitted Undirected Configuration Model, `p_ij = x_i x_j / (1 + x_i x_j)`
/// with `x_i = exp(-multiplier_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UcmFit {
    pub multipliers: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl UcmFit {
    pub fn node_count(&self) -> usize {
        self.multipliers.len()
    }

    pub fn probability(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            link_probability(self.multipliers[i], self.multipliers[j])
        }
    }

    pub fn expected_degrees(&self) -> Vec<f64> {
        let hist = multiplier_histogram(&self.multipliers);
        self.multipliers
            .iter()
            .map(|&a| {
                let all: f64 = hist.iter().map(|&(b, c)| c * link_probability(a, b)).sum();
                all - link_probability(a, a)
            })
            .collect()
    }
}

/// Fits the UCM to an undirected degree sequence.
pub fn fit_ucm(degrees: &UndirectedDegrees, opts: &FitOptions) -> Result<UcmFit, FitError> {
    let deg = &degrees.0;
    let total: usize = deg.iter().sum();
    if !total.is_multiple_of(2) {
        return Err(FitError::Infeasible(format!("degree sum {total} is odd")));
    }
    let (states, steps) = peel_symmetric(deg)?;
    let classes = classes_by_residual(&states);
    let rows: Vec<Class> = classes.iter().map(|(k, m)| Class { count: m.len() as f64, degree: *k as f64 }).collect();
    let n = rows.len();
    let mut pairs = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            pairs[r * n + c] = rows[r].count * rows[c].count - if r == c { rows[r].count } else { 0.0 };
        }
    }
    let sys = ReducedSystem { cols: rows.clone(), rows, pairs, tied: true };
    let sol = sys.solve(opts)?;

    let mut multipliers: Vec<f64> = states.iter().map(|s| s.forced_multiplier(steps).unwrap_or(f64::NAN)).collect();
    for ((_, members), &a) in classes.iter().zip(&sol.rows) {
        for &i in members {
            multipliers[i] = a;
        }
    }
    let mut fit = UcmFit { multipliers, residual: 0.0, iterations: sol.iterations };
    fit.residual = max_abs_diff(&fit.expected_degrees(), deg);
    check_residual(fit.residual, fit.iterations, opts)?;
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regular_graph_is_uniform() {
        // 3-regular on 8 nodes: 2m / (n (n - 1)) = 24 / 56.
        let fit = fit_ucm(&UndirectedDegrees(vec![3; 8]), &FitOptions::default()).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let want = if i == j { 0.0 } else { 24.0 / 56.0 };
                assert!((fit.probability(i, j) - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn isolated_node_has_no_links() {
        let fit = fit_ucm(&UndirectedDegrees(vec![0, 1, 2, 1, 2]), &FitOptions::default()).unwrap();
        assert!((1..5).all(|j| fit.probability(0, j) == 0.0));
        assert!(fit.residual <= 1e-8);
    }

    #[test]
    fn hub_connected_to_all() {
        let fit = fit_ucm(&UndirectedDegrees(vec![4, 2, 1, 2, 1]), &FitOptions::default()).unwrap();
        assert!((1..5).all(|j| fit.probability(0, j) == 1.0));
        assert!(fit.residual <= 1e-8);
    }

    #[test]
    fn odd_sum_is_infeasible() {
        assert!(fit_ucm(&UndirectedDegrees(vec![1, 1, 1]), &FitOptions::default()).is_err());
    }
}
