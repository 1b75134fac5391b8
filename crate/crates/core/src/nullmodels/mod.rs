//! Maximum-entropy null models: bipartite (BiCM), directed (DCM) and
//! undirected (UCM) configuration models.
//!
//! Every model is a product of independent link probabilities of the form
//! `1 / (1 + exp(a + b))`, with one multiplier per node and role. Fitting
//! solves the likelihood equations (expected degrees equal observed degrees)
//! on a system reduced to one unknown per distinct degree class, after
//! peeling off nodes whose links are forced present or absent.

mod bicm;
mod dcm;
mod peel;
mod solver;
mod ucm;

use std::collections::BTreeMap;
use std::io::Write;

use thiserror::Error;

use crate::graph::NodeId;

pub use bicm::{fit_bicm, BicmFit};
pub use dcm::{fit_dcm, fit_dcm_graph, sample_dcm, DcmFit};
pub(crate) use dcm::{sample_dcm_grouped, TargetGroups};
pub use ucm::{fit_ucm, UcmFit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("infeasible degree sequence: {0}")]
    Infeasible(String),
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { residual: f64, iterations: usize },
}

/// Convergence settings shared by all fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Maximum absolute difference between expected and observed degree.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 10_000 }
    }
}

/// Degree sequences of both layers of a bipartite graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteDegrees {
    pub top: Vec<usize>,
    pub bottom: Vec<usize>,
}

/// Out- and in-degree sequences of a directed graph, by node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedDegrees {
    pub out: Vec<usize>,
    pub inn: Vec<usize>,
}

/// Degree sequence of a simple undirected graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedDegrees(pub Vec<usize>);

/// Writes a fitted model as a `node,multiplier,role` table. Roles name the
/// multiplier kind, e.g. `top`/`bottom` or `out`/`in`.
pub fn write_multipliers<W: Write>(writer: W, rows: &[(NodeId, f64, &str)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["node", "multiplier", "role"])?;
    for (id, x, role) in rows {
        w.write_record([id.to_string(), x.to_string(), role.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Probability of a link whose endpoint multipliers are `a` and `b`.
#[inline]
pub fn link_probability(a: f64, b: f64) -> f64 {
    let s = a + b;
    if s > 0.0 {
        let e = (-s).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + s.exp())
    }
}

/// Groups multipliers by exact value: `(value, count)` in ascending order.
pub(crate) fn multiplier_histogram(values: &[f64]) -> Vec<(f64, f64)> {
    let mut counts: BTreeMap<u64, f64> = BTreeMap::new();
    for v in values {
        *counts.entry(ordered_bits(*v)).or_insert(0.0) += 1.0;
    }
    counts.into_iter().map(|(bits, c)| (from_ordered_bits(bits), c)).collect()
}

fn ordered_bits(v: f64) -> u64 {
    let b = v.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn from_ordered_bits(b: u64) -> f64 {
    if b >> 63 == 1 {
        f64::from_bits(b & !(1 << 63))
    } else {
        f64::from_bits(!b)
    }
}

/// Expected degree of every row node against all columns, minus the row's own
/// column when `self_column` pairs them.
pub(crate) fn expected_row_degrees(rows: &[f64], cols: &[f64], self_column: bool) -> Vec<f64> {
    let hist = multiplier_histogram(cols);
    let mut cache: BTreeMap<u64, f64> = BTreeMap::new();
    rows.iter()
        .enumerate()
        .map(|(i, &a)| {
            let full = *cache
                .entry(a.to_bits())
                .or_insert_with(|| hist.iter().map(|&(b, c)| c * link_probability(a, b)).sum());
            if self_column {
                full - link_probability(a, cols[i])
            } else {
                full
            }
        })
        .collect()
}

pub(crate) fn max_abs_diff(expected: &[f64], observed: &[usize]) -> f64 {
    expected.iter().zip(observed).map(|(e, &o)| (e - o as f64).abs()).fold(0.0, f64::max)
}
