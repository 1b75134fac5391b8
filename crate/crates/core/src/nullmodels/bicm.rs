use std::collections::BTreeMap;

use super::peel::{peel_two_sided, RoleState};
use super::solver::{Class, ReducedSystem};
use super::{expected_row_degrees, link_probability, max_abs_diff, BipartiteDegrees, FitError, FitOptions};

/// Fitted Bipartite Configuration Model.
///
/// `p(i, alpha) = exp(-eta_i - theta_alpha) / (1 + exp(-eta_i - theta_alpha))`.
/// Nodes whose links are forced carry large finite multipliers of the right
/// sign instead of infinities.
#[derive(Debug, Clone, PartialEq)]
pub struct BicmFit {
    pub eta: Vec<f64>,
    pub theta: Vec<f64>,
    /// Max absolute degree mismatch over both layers.
    pub residual: f64,
    pub iterations: usize,
}

impl BicmFit {
    pub fn probability(&self, top: usize, bottom: usize) -> f64 {
        link_probability(self.eta[top], self.theta[bottom])
    }

    pub fn expected_top_degrees(&self) -> Vec<f64> {
        expected_row_degrees(&self.eta, &self.theta, false)
    }

    pub fn expected_bottom_degrees(&self) -> Vec<f64> {
        expected_row_degrees(&self.theta, &self.eta, false)
    }
}

/// Groups active roles by residual degree: `(degree, members)`.
pub(super) fn classes_by_residual(states: &[RoleState]) -> Vec<(usize, Vec<usize>)> {
    let mut by_degree: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in states.iter().enumerate() {
        if let Some(k) = s.residual() {
            by_degree.entry(k).or_default().push(i);
        }
    }
    by_degree.into_iter().collect()
}

pub(super) fn check_residual(residual: f64, iterations: usize, opts: &FitOptions) -> Result<(), FitError> {
    if residual.is_finite() && residual <= 10.0 * opts.tolerance {
        Ok(())
    } else {
        Err(FitError::NotConverged { residual, iterations })
    }
}

/// Fits the BiCM so that expected degrees reproduce both degree sequences.
pub fn fit_bicm(degrees: &BipartiteDegrees, opts: &FitOptions) -> Result<BicmFit, FitError> {
    let top_sum: usize = degrees.top.iter().sum();
    let bottom_sum: usize = degrees.bottom.iter().sum();
    if top_sum != bottom_sum {
        return Err(FitError::Infeasible(format!("layer degree sums differ ({top_sum} vs {bottom_sum})")));
    }
    let peeled = peel_two_sided(&degrees.top, &degrees.bottom, false)?;
    let row_classes = classes_by_residual(&peeled.rows);
    let col_classes = classes_by_residual(&peeled.cols);

    let mk = |cls: &[(usize, Vec<usize>)]| -> Vec<Class> {
        cls.iter().map(|(k, m)| Class { count: m.len() as f64, degree: *k as f64 }).collect()
    };
    let rows = mk(&row_classes);
    let cols = mk(&col_classes);
    let pairs = rows.iter().flat_map(|r| cols.iter().map(move |c| r.count * c.count)).collect();
    let sys = ReducedSystem { rows, cols, pairs, tied: false };
    let sol = sys.solve(opts)?;

    let mut eta: Vec<f64> = peeled.rows.iter().map(|s| s.forced_multiplier(peeled.steps).unwrap_or(f64::NAN)).collect();
    let mut theta: Vec<f64> =
        peeled.cols.iter().map(|s| s.forced_multiplier(peeled.steps).unwrap_or(f64::NAN)).collect();
    for ((_, members), &a) in row_classes.iter().zip(&sol.rows) {
        for &i in members {
            eta[i] = a;
        }
    }
    for ((_, members), &b) in col_classes.iter().zip(&sol.cols) {
        for &i in members {
            theta[i] = b;
        }
    }

    let mut fit = BicmFit { eta, theta, residual: 0.0, iterations: sol.iterations };
    fit.residual = max_abs_diff(&fit.expected_top_degrees(), &degrees.top)
        .max(max_abs_diff(&fit.expected_bottom_degrees(), &degrees.bottom));
    check_residual(fit.residual, fit.iterations, opts)?;
    Ok(fit)
}
