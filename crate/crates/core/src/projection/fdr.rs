//! False Discovery Rate control by step-up procedures.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FdrMethod {
    /// Benjamini-Hochberg, valid under independence or positive dependence.
    #[default]
    #[serde(rename = "bh")]
    BenjaminiHochberg,
    /// Benjamini-Yekutieli, valid under arbitrary dependence.
    #[serde(rename = "by")]
    BenjaminiYekutieli,
}

impl fmt::Display for FdrMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FdrMethod::BenjaminiHochberg => "bh",
            FdrMethod::BenjaminiYekutieli => "by",
        })
    }
}

impl FromStr for FdrMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bh" | "benjamini-hochberg" => Ok(FdrMethod::BenjaminiHochberg),
            "by" | "benjamini-yekutieli" => Ok(FdrMethod::BenjaminiYekutieli),
            other => Err(format!("unknown FDR method {other:?} (expected bh or by)")),
        }
    }
}

/// Step-up rejection flags for `pvalues`, out of `hypotheses` total tests.
///
/// Tests missing from `pvalues` (when `hypotheses > pvalues.len()`) count as
/// p = 1: they enlarge `m` but can never be rejected. The `r` smallest
/// p-values are rejected, where `r` is the largest rank with
/// `p_(r) <= r * alpha / (m * c(m))`; `c(m) = 1` for BH and the harmonic
/// number for BY.
pub fn step_up(pvalues: &[f64], hypotheses: usize, alpha: f64, method: FdrMethod) -> Vec<bool> {
    let m = hypotheses.max(pvalues.len());
    let mut flags = vec![false; pvalues.len()];
    if m == 0 {
        return flags;
    }
    let correction = match method {
        FdrMethod::BenjaminiHochberg => 1.0,
        FdrMethod::BenjaminiYekutieli => (1..=m).map(|i| 1.0 / i as f64).sum(),
    };
    let mut order: Vec<usize> = (0..pvalues.len()).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]).then(a.cmp(&b)));
    let threshold = |rank: usize| rank as f64 * alpha / (m as f64 * correction);
    let cutoff = order
        .iter()
        .enumerate()
        .rev()
        .find(|&(pos, &idx)| pvalues[idx] <= threshold(pos + 1))
        .map(|(pos, _)| pos + 1)
        .unwrap_or(0);
    for &idx in &order[..cutoff] {
        flags[idx] = true;
    }
    flags
}
