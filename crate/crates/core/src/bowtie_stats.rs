//! Bow-tie sector significance against the DCM ensemble, classification and
//! per-sector account and URL statistics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{bowtie_sectors, sector_sizes, BowTiePartition, DirectedGraph, Sector, SectorSizes};
use crate::ingest::{AccountTable, UrlAnnotations};
use crate::nullmodels::{fit_dcm_graph, sample_dcm_grouped, FitError, FitOptions, TargetGroups};
use crate::par;
use crate::projection::{step_up, FdrMethod};
use crate::rng::substream;

pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Error)]
pub enum BowtieStatsError {
    #[error("at least {MIN_SAMPLES} ensemble samples are needed, got {0}")]
    TooFewSamples(usize),
    #[error("community has no nodes")]
    EmptyCommunity,
    #[error("DCM fit failed")]
    Fit(#[from] FitError),
}

/// Sector sizes of the observed community and of every ensemble sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorSizeDistributions {
    pub observed: SectorSizes,
    /// One entry per sample, in sample order.
    pub samples: Vec<SectorSizes>,
    pub seed: u64,
}

impl SectorSizeDistributions {
    pub fn sizes(&self, sector: Sector) -> Vec<usize> {
        self.samples.iter().map(|s| s[sector.index()]).collect()
    }

    pub fn mean(&self) -> [f64; 7] {
        let mut out = [0.0; 7];
        for s in &self.samples {
            for (o, &x) in out.iter_mut().zip(s) {
                *o += x as f64;
            }
        }
        out.map(|x| x / self.samples.len().max(1) as f64)
    }

    pub fn std_dev(&self) -> [f64; 7] {
        let mean = self.mean();
        let mut out = [0.0; 7];
        for s in &self.samples {
            for k in 0..7 {
                out[k] += (s[k] as f64 - mean[k]).powi(2);
            }
        }
        let denom = self.samples.len().saturating_sub(1).max(1) as f64;
        out.map(|x| (x / denom).sqrt())
    }

    /// Two-tailed empirical p-value for every sector.
    pub fn pvalues(&self) -> [f64; 7] {
        std::array::from_fn(|k| empirical_two_tailed(self.observed[k], &self.sizes(Sector::ALL[k])))
    }
}

/// Add-one two-tailed estimator,
/// `min(1, 2 min((1 + #{x <= obs}) / (S + 1), (1 + #{x >= obs}) / (S + 1)))`.
/// Never returns zero; the floor is `2 / (S + 1)`.
pub fn empirical_two_tailed(observed: usize, samples: &[usize]) -> f64 {
    let s = samples.len() as f64;
    let below = samples.iter().filter(|&&x| x <= observed).count() as f64;
    let above = samples.iter().filter(|&&x| x >= observed).count() as f64;
    let lower = (1.0 + below) / (s + 1.0);
    let upper = (1.0 + above) / (s + 1.0);
    (2.0 * lower.min(upper)).min(1.0)
}

/// Fits the DCM to `community`, draws `samples` graphs from it and decomposes
/// each. Sample `s` uses substream `s` of `seed`, so the result does not
/// depend on the number of threads.
pub fn ensemble_sector_sizes(
    community: &DirectedGraph,
    samples: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<SectorSizeDistributions, BowtieStatsError> {
    if samples < MIN_SAMPLES {
        return Err(BowtieStatsError::TooFewSamples(samples));
    }
    if community.is_empty() {
        return Err(BowtieStatsError::EmptyCommunity);
    }
    let fit = fit_dcm_graph(community, opts)?;
    let groups = TargetGroups::new(&fit);
    let sizes = par::map_range(samples, |s| {
        let sample = sample_dcm_grouped(&fit, &groups, &mut substream(seed, s as u64));
        sector_sizes(&bowtie_sectors(&sample))
    });
    Ok(SectorSizeDistributions { observed: sector_sizes(&bowtie_sectors(community)), samples: sizes, seed })
}

/// Per-sector two-tailed p-values of the observed sector sizes.
pub fn ensemble_block_pvalues(
    community: &DirectedGraph,
    samples: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<[f64; 7], BowtieStatsError> {
    Ok(ensemble_sector_sizes(community, samples, seed, opts)?.pvalues())
}

/// Benjamini-Hochberg over the seven sector hypotheses.
pub fn fdr_blocks(pvalues: &[f64; 7], alpha: f64) -> [bool; 7] {
    let flags = step_up(pvalues, 7, alpha, FdrMethod::BenjaminiHochberg);
    std::array::from_fn(|k| flags[k])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InformativeRule {
    /// Non-OTHERS nodes are at least half of the community.
    #[default]
    Majority,
    /// Non-OTHERS nodes are at least a tenth of OTHERS (same order of magnitude).
    SameOrder,
}

impl fmt::Display for InformativeRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InformativeRule::Majority => "majority",
            InformativeRule::SameOrder => "same-order",
        })
    }
}

impl FromStr for InformativeRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "majority" => Ok(InformativeRule::Majority),
            "same-order" | "same_order" => Ok(InformativeRule::SameOrder),
            other => Err(format!("unknown informative rule {other:?} (expected majority or same-order)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strength {
    Strong,
    Weak,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dominance {
    OutDominant,
    IntendDominant,
    Other,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BowTieClass {
    pub informative: bool,
    pub strength: Strength,
    pub dominance: Dominance,
    /// Largest non-OTHERS sector, if unique.
    pub dominant_sector: Option<Sector>,
    /// Several non-OTHERS sectors share the largest size.
    pub dominance_tie: bool,
}

pub fn classify_bowtie(sizes: &SectorSizes, rule: InformativeRule) -> BowTieClass {
    let others = sizes[Sector::Others.index()];
    let total: usize = sizes.iter().sum();
    let rest = total - others;
    let informative = total > 0
        && match rule {
            InformativeRule::Majority => 2 * rest >= total,
            InformativeRule::SameOrder => 10 * rest >= others,
        };
    if !informative {
        return BowTieClass {
            informative,
            strength: Strength::None,
            dominance: Dominance::None,
            dominant_sector: None,
            dominance_tie: false,
        };
    }
    let strength = if others < sizes[Sector::Scc.index()] { Strength::Strong } else { Strength::Weak };
    let body = || Sector::ALL.into_iter().filter(|&s| s != Sector::Others);
    let max = body().map(|s| sizes[s.index()]).max().unwrap_or(0);
    let top: Vec<Sector> = body().filter(|s| sizes[s.index()] == max).collect();
    let (dominance, dominant_sector) = match top.as_slice() {
        [Sector::Out] => (Dominance::OutDominant, Some(Sector::Out)),
        [Sector::InTendrils] => (Dominance::IntendDominant, Some(Sector::InTendrils)),
        [s] => (Dominance::Other, Some(*s)),
        _ => (Dominance::Other, None),
    };
    BowTieClass { informative, strength, dominance, dominant_sector, dominance_tie: top.len() > 1 }
}

pub type SectorMatrix<T> = [[T; 7]; 7];

/// Account and flow statistics of one community's bow-tie. Matrices are
/// indexed `[source sector][target sector]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorStats {
    pub sizes: SectorSizes,
    pub verified: [usize; 7],
    /// Verified accounts of each sector over all verified accounts of the
    /// community, in percent.
    pub verified_distribution_pct: [f64; 7],
    /// Verified accounts of each sector over that sector's size, in percent.
    pub verified_share_pct: [f64; 7],
    pub scc_node_pct: f64,
    pub scc_edge_pct: f64,
    /// Edges inside SCC over `n (n - 1)` possible ones.
    pub scc_density: f64,
    pub total_weight: u64,
    pub edges: SectorMatrix<usize>,
    pub weight: SectorMatrix<u64>,
    /// Retweets carrying at least one untrusted URL.
    pub untrusted: SectorMatrix<u64>,
    /// `untrusted` over the community's total retweet weight, in percent.
    pub untrusted_pct: SectorMatrix<f64>,
    /// `untrusted` over the cell's own retweet weight, in percent.
    pub untrusted_cell_pct: SectorMatrix<f64>,
}

fn pct(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        100.0 * num / den
    } else {
        0.0
    }
}

/// Sector statistics of `community` under `partition`. On an edge, the number
/// of untrusted retweets is the untrusted URL count capped at the edge weight.
pub fn sector_stats(
    community: &DirectedGraph,
    partition: &BowTiePartition,
    accounts: &AccountTable,
    urls: &UrlAnnotations,
) -> SectorStats {
    let sizes = partition.sizes();
    let mut verified = [0usize; 7];
    for (&id, s) in partition.ids().iter().zip(partition.sectors()) {
        if accounts.is_verified(id) {
            verified[s.index()] += 1;
        }
    }
    let mut edges = [[0usize; 7]; 7];
    let mut weight = [[0u64; 7]; 7];
    let mut untrusted = [[0u64; 7]; 7];
    for (s, t, w) in community.edges() {
        let (a, b) = (partition.sector_at(s).index(), partition.sector_at(t).index());
        edges[a][b] += 1;
        weight[a][b] += w;
        if let Some(c) = urls.get(&(community.id(s), community.id(t))) {
            untrusted[a][b] += c.untrusted.min(w);
        }
    }
    let total_weight: u64 = weight.iter().flatten().sum();
    let total_verified: usize = verified.iter().sum();
    let scc = Sector::Scc.index();
    let n_scc = sizes[scc] as f64;
    let n = community.node_count() as f64;
    SectorStats {
        sizes,
        verified,
        verified_distribution_pct: verified.map(|v| pct(v as f64, total_verified as f64)),
        verified_share_pct: std::array::from_fn(|k| pct(verified[k] as f64, sizes[k] as f64)),
        scc_node_pct: pct(n_scc, n),
        scc_edge_pct: pct(edges[scc][scc] as f64, community.edge_count() as f64),
        scc_density: if n_scc > 1.0 { edges[scc][scc] as f64 / (n_scc * (n_scc - 1.0)) } else { 0.0 },
        total_weight,
        edges,
        weight,
        untrusted,
        untrusted_pct: untrusted.map(|row| row.map(|u| pct(u as f64, total_weight as f64))),
        untrusted_cell_pct: std::array::from_fn(|a| {
            std::array::from_fn(|b| pct(untrusted[a][b] as f64, weight[a][b] as f64))
        }),
    }
}
