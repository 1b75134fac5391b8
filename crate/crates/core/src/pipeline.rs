//! End-to-end orchestration: configuration, stages with persisted artifacts,
//! and the run report.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::bowtie_stats::{
    classify_bowtie, ensemble_sector_sizes, fdr_blocks, sector_stats, BowTieClass, InformativeRule, SectorStats,
    MIN_SAMPLES,
};
use crate::communities::{
    extract_communities, louvain_ucm, modularity_ucm, seeded_label_propagation, LabelAssignment, LpaOptions,
    UndirectedGraph,
};
use crate::graph::{bowtie_decompose, DirectedGraph, NodeId, Sector};
use crate::ingest::{
    annotate_urls, build_bipartite, build_retweet_digraph, load_accounts, load_ratings, load_retweets, read_accounts,
    read_ratings, read_retweets, write_retweets, AccountTable, RatingsTable, RetweetLoad, UnknownIdPolicy,
};
use crate::nullmodels::{fit_bicm, fit_ucm, write_multipliers, FitOptions};
use crate::projection::{validated_projection, FdrMethod, ValidatedProjection};
use crate::rng::stage_seed;

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Project,
    Communities,
    Bowtie,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ingest => "ingest",
            Stage::Project => "project",
            Stage::Communities => "communities",
            Stage::Bowtie => "bowtie",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("{}unknown key {key:?}", at_line(*line))]
    UnknownKey { line: usize, key: String },
    #[error("{}invalid value for {key}: {msg}", at_line(*line))]
    Value { line: usize, key: String, msg: String },
    #[error("missing required setting {0}")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Line 0 marks a value that did not come from a file.
fn at_line(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!("line {line}: ")
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration")]
    Config(#[from] ConfigError),
    #[error("{stage} stage failed: no edges in the retweet file")]
    NoEdges { stage: Stage },
    #[error("{stage} stage failed")]
    Stage {
        stage: Stage,
        #[source]
        source: BoxError,
    },
    #[error("{stage} stage failed: {path}")]
    Artifact {
        stage: Stage,
        path: PathBuf,
        #[source]
        source: BoxError,
    },
}

impl PipelineError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Config(_) => None,
            PipelineError::NoEdges { stage }
            | PipelineError::Stage { stage, .. }
            | PipelineError::Artifact { stage, .. } => Some(*stage),
        }
    }
}

fn at<E: Into<BoxError>>(stage: Stage) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Stage { stage, source: e.into() }
}

fn artifact<E: Into<BoxError>>(stage: Stage, path: &Path) -> impl FnOnce(E) -> PipelineError + '_ {
    move |e| PipelineError::Artifact { stage, path: path.to_path_buf(), source: e.into() }
}

/// Pipeline settings. Read from a flat `key = value` file; `#` starts a
/// comment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub accounts: PathBuf,
    pub retweets: PathBuf,
    pub ratings: Option<PathBuf>,
    /// Not echoed in reports, so identical runs into different directories
    /// produce identical files.
    #[serde(skip)]
    pub output: PathBuf,
    pub alpha_projection: f64,
    pub alpha_blocks: f64,
    pub fdr_method: FdrMethod,
    pub lpa_runs: usize,
    pub lpa_weighted: bool,
    pub lpa_max_sweeps: usize,
    pub ensemble_samples: usize,
    pub master_seed: u64,
    pub unknown_ids: UnknownIdPolicy,
    pub informative_rule: InformativeRule,
    pub min_seed_community_size: usize,
    pub fit_tolerance: f64,
    pub fit_max_iterations: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            accounts: PathBuf::from("accounts.csv"),
            retweets: PathBuf::from("retweets.csv"),
            ratings: None,
            output: PathBuf::from("out"),
            alpha_projection: 0.01,
            alpha_blocks: 0.01,
            fdr_method: FdrMethod::BenjaminiHochberg,
            lpa_runs: 500,
            lpa_weighted: true,
            lpa_max_sweeps: 1000,
            ensemble_samples: 1000,
            master_seed: 0,
            unknown_ids: UnknownIdPolicy::AutoRegister,
            informative_rule: InformativeRule::Majority,
            min_seed_community_size: 2,
            fit_tolerance: 1e-8,
            fit_max_iterations: 10_000,
        }
    }
}

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.parse().map_err(|e: T::Err| ConfigError::Value { line, key: key.to_string(), msg: e.to_string() })
}

impl PipelineConfig {
    pub const KEYS: [&'static str; 17] = [
        "accounts",
        "retweets",
        "ratings",
        "output",
        "alpha_projection",
        "alpha_blocks",
        "fdr_method",
        "lpa_runs",
        "lpa_weighted",
        "lpa_max_sweeps",
        "ensemble_samples",
        "master_seed",
        "unknown_ids",
        "informative_rule",
        "min_seed_community_size",
        "fit_tolerance",
        "fit_max_iterations",
    ];

    /// Parses `key = value` lines over the defaults. Relative paths are
    /// resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen_inputs = (false, false);
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "accounts" => seen_inputs.0 = true,
                "retweets" => seen_inputs.1 = true,
                _ => {}
            }
            cfg.set(key, value, base).map_err(|e| match e {
                ConfigError::Value { key, msg, .. } => ConfigError::Value { line, key, msg },
                ConfigError::UnknownKey { key, .. } => ConfigError::UnknownKey { line, key },
                other => other,
            })?;
        }
        if !seen_inputs.0 {
            return Err(ConfigError::Missing("accounts"));
        }
        if !seen_inputs.1 {
            return Err(ConfigError::Missing("retweets"));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), ConfigError> {
        let path = |v: &str| base.join(v);
        match key {
            "accounts" => self.accounts = path(value),
            "retweets" => self.retweets = path(value),
            "ratings" => self.ratings = (!value.is_empty()).then(|| path(value)),
            "output" => self.output = path(value),
            "alpha_projection" => self.alpha_projection = parse_value(0, key, value)?,
            "alpha_blocks" => self.alpha_blocks = parse_value(0, key, value)?,
            "fdr_method" => self.fdr_method = parse_value(0, key, value)?,
            "lpa_runs" => self.lpa_runs = parse_value(0, key, value)?,
            "lpa_weighted" => self.lpa_weighted = parse_value(0, key, value)?,
            "lpa_max_sweeps" => self.lpa_max_sweeps = parse_value(0, key, value)?,
            "ensemble_samples" => self.ensemble_samples = parse_value(0, key, value)?,
            "master_seed" => self.master_seed = parse_value(0, key, value)?,
            "unknown_ids" => {
                self.unknown_ids = match value {
                    "auto-register" | "auto_register" => UnknownIdPolicy::AutoRegister,
                    "reject" => UnknownIdPolicy::Reject,
                    _ => {
                        return Err(ConfigError::Value {
                            line: 0,
                            key: key.into(),
                            msg: format!("expected auto-register or reject, got {value:?}"),
                        })
                    }
                }
            }
            "informative_rule" => self.informative_rule = parse_value(0, key, value)?,
            "min_seed_community_size" => self.min_seed_community_size = parse_value(0, key, value)?,
            "fit_tolerance" => self.fit_tolerance = parse_value(0, key, value)?,
            "fit_max_iterations" => self.fit_max_iterations = parse_value(0, key, value)?,
            _ => return Err(ConfigError::UnknownKey { line: 0, key: key.to_string() }),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, a) in [("alpha_projection", self.alpha_projection), ("alpha_blocks", self.alpha_blocks)] {
            if !(a > 0.0 && a < 1.0) {
                return Err(ConfigError::Invalid(format!("{name} must lie in (0, 1), got {a}")));
            }
        }
        if self.lpa_runs == 0 || self.lpa_max_sweeps == 0 {
            return Err(ConfigError::Invalid("lpa_runs and lpa_max_sweeps must be at least 1".into()));
        }
        if self.ensemble_samples < MIN_SAMPLES {
            return Err(ConfigError::Invalid(format!(
                "ensemble_samples must be at least {MIN_SAMPLES}, got {}",
                self.ensemble_samples
            )));
        }
        if self.fit_tolerance.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || self.fit_max_iterations == 0 {
            return Err(ConfigError::Invalid("fit_tolerance and fit_max_iterations must be positive".into()));
        }
        Ok(())
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions { tolerance: self.fit_tolerance, max_iterations: self.fit_max_iterations }
    }
}

/// File names of the persisted artifacts.
pub mod files {
    pub const ACCOUNTS: &str = "accounts.csv";
    pub const RETWEETS: &str = "retweets.csv";
    pub const RATINGS: &str = "ratings.csv";
    pub const INGEST: &str = "ingest.json";
    pub const PROJECTION: &str = "projection.json";
    pub const PROJECTION_EDGES: &str = "projection.csv";
    pub const BICM_FIT: &str = "bicm_fit.csv";
    pub const COMMUNITIES: &str = "communities.json";
    pub const LOUVAIN: &str = "louvain.csv";
    pub const LABELS: &str = "labels.csv";
    pub const BOWTIE: &str = "bowtie.json";
    pub const CROSS_EDGES: &str = "cross_edges.csv";
    pub const REPORT: &str = "report.json";

    pub fn sectors_table(label: u32) -> String {
        format!("community_{label}_sectors.csv")
    }

    pub fn diagram(label: u32) -> String {
        format!("community_{label}_bowtie.dot")
    }
}

fn write_file<F>(stage: Stage, path: &Path, body: F) -> Result<(), PipelineError>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> Result<(), BoxError>,
{
    let file = fs::File::create(path).map_err(artifact(stage, path))?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(artifact(stage, path))?;
    w.flush().map_err(artifact(stage, path))
}

fn write_json<T: Serialize>(stage: Stage, path: &Path, value: &T) -> Result<(), PipelineError> {
    write_file(stage, path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

fn read_json<T: DeserializeOwned>(stage: Stage, path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(artifact(stage, path))?;
    serde_json::from_str(&text).map_err(artifact(stage, path))
}

/// Writes files into a staging directory inside `dir` and moves them into
/// place only if every write succeeds; otherwise nothing is left behind.
pub fn commit<F>(stage: Stage, dir: &Path, write: F) -> Result<Vec<PathBuf>, PipelineError>
where
    F: FnOnce(&Path) -> Result<(), PipelineError>,
{
    fs::create_dir_all(dir).map_err(artifact(stage, dir))?;
    let staging = dir.join(format!(".staging-{stage}"));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(artifact(stage, &staging))?;
    }
    fs::create_dir(&staging).map_err(artifact(stage, &staging))?;
    let result = write(&staging).and_then(|()| {
        let mut names: Vec<PathBuf> = fs::read_dir(&staging)
            .map_err(artifact(stage, &staging))?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()
            .map_err(artifact(stage, &staging))?;
        names.sort();
        let mut moved = Vec::with_capacity(names.len());
        for src in names {
            let dst = dir.join(src.file_name().expect("staged file has a name"));
            fs::rename(&src, &dst).map_err(artifact(stage, &dst))?;
            moved.push(dst);
        }
        Ok(moved)
    });
    let _ = fs::remove_dir_all(&staging);
    result
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub accounts: usize,
    pub verified_accounts: usize,
    pub retweet_pairs: usize,
    pub retweet_weight: u64,
    pub self_loops_dropped: usize,
    pub self_loop_weight_dropped: u64,
    pub auto_registered: usize,
    pub rated_domains: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOutput {
    pub accounts: AccountTable,
    pub retweets: RetweetLoad,
    pub ratings: RatingsTable,
}

impl IngestOutput {
    pub fn summary(&self) -> IngestSummary {
        IngestSummary {
            accounts: self.accounts.len(),
            verified_accounts: self.accounts.iter().filter(|(_, a)| a.verified).count(),
            retweet_pairs: self.retweets.records.len(),
            retweet_weight: self.retweets.records.iter().map(|r| r.count).sum(),
            self_loops_dropped: self.retweets.self_loops,
            self_loop_weight_dropped: self.retweets.self_loop_weight,
            auto_registered: self.retweets.auto_registered,
            rated_domains: self.ratings.len(),
        }
    }

    pub fn digraph(&self) -> Result<DirectedGraph, PipelineError> {
        build_retweet_digraph(&self.retweets.records, &self.accounts).map_err(at(Stage::Ingest))
    }

    pub fn write_artifacts(&self, dir: &Path) -> Result<(), PipelineError> {
        let s = Stage::Ingest;
        write_file(s, &dir.join(files::ACCOUNTS), |w| Ok(self.accounts.write(w)?))?;
        write_file(s, &dir.join(files::RETWEETS), |w| Ok(write_retweets(w, &self.retweets.records)?))?;
        write_file(s, &dir.join(files::RATINGS), |w| Ok(self.ratings.write(w)?))?;
        write_json(s, &dir.join(files::INGEST), &self.summary())
    }

    pub fn read_artifacts(dir: &Path) -> Result<Self, PipelineError> {
        let s = Stage::Ingest;
        let open = |name: &str| {
            let path = dir.join(name);
            fs::File::open(&path).map_err(artifact(s, &path)).map(|f| (f, path))
        };
        let (f, path) = open(files::ACCOUNTS)?;
        let mut accounts = read_accounts(f).map_err(artifact(s, &path))?;
        let (f, path) = open(files::RETWEETS)?;
        let mut retweets = read_retweets(f, &mut accounts, UnknownIdPolicy::Reject).map_err(artifact(s, &path))?;
        let (f, path) = open(files::RATINGS)?;
        let ratings = read_ratings(f).map_err(artifact(s, &path))?;
        let summary: IngestSummary = read_json(s, &dir.join(files::INGEST))?;
        retweets.self_loops = summary.self_loops_dropped;
        retweets.self_loop_weight = summary.self_loop_weight_dropped;
        retweets.auto_registered = summary.auto_registered;
        Ok(Self { accounts, retweets, ratings })
    }
}

pub fn run_ingest(cfg: &PipelineConfig) -> Result<IngestOutput, PipelineError> {
    let s = Stage::Ingest;
    let mut accounts = load_accounts(&cfg.accounts).map_err(at(s))?;
    let retweets = load_retweets(&cfg.retweets, &mut accounts, cfg.unknown_ids).map_err(at(s))?;
    if retweets.records.is_empty() {
        return Err(PipelineError::NoEdges { stage: s });
    }
    let ratings = match &cfg.ratings {
        Some(p) => load_ratings(p).map_err(at(s))?,
        None => RatingsTable::default(),
    };
    Ok(IngestOutput { accounts, retweets, ratings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOutput {
    pub verified_nodes: usize,
    pub unverified_nodes: usize,
    pub bipartite_links: usize,
    pub bicm_residual: f64,
    pub bicm_iterations: usize,
    pub projection: ValidatedProjection,
    /// `(node, multiplier, role)` of the BiCM fit.
    #[serde(skip)]
    pub multipliers: Vec<(NodeId, f64, &'static str)>,
}

impl ProjectionOutput {
    pub fn write_artifacts(&self, dir: &Path) -> Result<(), PipelineError> {
        let s = Stage::Project;
        write_json(s, &dir.join(files::PROJECTION), self)?;
        write_file(s, &dir.join(files::PROJECTION_EDGES), |w| Ok(self.projection.write_edges(w)?))?;
        if !self.multipliers.is_empty() {
            write_file(s, &dir.join(files::BICM_FIT), |w| Ok(write_multipliers(w, &self.multipliers)?))?;
        }
        Ok(())
    }

    pub fn read_artifacts(dir: &Path) -> Result<Self, PipelineError> {
        read_json(Stage::Project, &dir.join(files::PROJECTION))
    }
}

pub fn run_project(ingest: &IngestOutput, cfg: &PipelineConfig) -> Result<ProjectionOutput, PipelineError> {
    let s = Stage::Project;
    let bip = build_bipartite(&ingest.retweets.records, &ingest.accounts).map_err(at(s))?;
    let fit = fit_bicm(&bip.degrees(), &cfg.fit_options()).map_err(at(s))?;
    let projection = validated_projection(&bip, &fit, cfg.alpha_projection, cfg.fdr_method).map_err(at(s))?;
    let multipliers = bip
        .top_ids()
        .iter()
        .zip(&fit.eta)
        .map(|(&id, &x)| (id, x, "top"))
        .chain(bip.bottom_ids().iter().zip(&fit.theta).map(|(&id, &x)| (id, x, "bottom")))
        .collect();
    Ok(ProjectionOutput {
        verified_nodes: bip.top_len(),
        unverified_nodes: bip.bottom_len(),
        bipartite_links: bip.link_count(),
        bicm_residual: fit.residual,
        bicm_iterations: fit.iterations,
        projection,
        multipliers,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunitiesOutput {
    /// Louvain community of every projection node, by projection node order.
    pub louvain: Vec<(NodeId, usize)>,
    pub louvain_communities: usize,
    pub modularity: f64,
    pub ucm_residual: f64,
    /// Verified seeds handed to label propagation.
    pub seeds: BTreeMap<NodeId, u32>,
    pub labels: LabelAssignment,
}

impl CommunitiesOutput {
    pub fn write_artifacts(&self, dir: &Path) -> Result<(), PipelineError> {
        let s = Stage::Communities;
        write_json(s, &dir.join(files::COMMUNITIES), self)?;
        write_file(s, &dir.join(files::LOUVAIN), |w| {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(["node", "community"])?;
            for (id, l) in &self.louvain {
                c.write_record([id.to_string(), l.to_string()])?;
            }
            c.flush()?;
            Ok(())
        })?;
        write_file(s, &dir.join(files::LABELS), |w| Ok(self.labels.write_table(w)?))
    }

    pub fn read_artifacts(dir: &Path) -> Result<Self, PipelineError> {
        read_json(Stage::Communities, &dir.join(files::COMMUNITIES))
    }
}

pub fn run_communities(
    ingest: &IngestOutput,
    projection: &ProjectionOutput,
    cfg: &PipelineConfig,
) -> Result<CommunitiesOutput, PipelineError> {
    let s = Stage::Communities;
    let graph = UndirectedGraph::from_projection(&projection.projection);
    let ucm = fit_ucm(&graph.degrees(), &cfg.fit_options()).map_err(at(s))?;
    let partition = louvain_ucm(&graph, &ucm, stage_seed(cfg.master_seed, "louvain"));
    let modularity = modularity_ucm(&graph, &partition, &ucm).map_err(at(s))?;
    let members = partition.members();
    let mut seeds = BTreeMap::new();
    for (c, m) in members.iter().enumerate() {
        if m.len() >= cfg.min_seed_community_size {
            for &v in m {
                seeds.insert(graph.ids()[v], c as u32);
            }
        }
    }
    let digraph = ingest.digraph()?;
    let opts = LpaOptions { runs: cfg.lpa_runs, weighted: cfg.lpa_weighted, max_sweeps: cfg.lpa_max_sweeps };
    let labels =
        seeded_label_propagation(&digraph, &seeds, &opts, stage_seed(cfg.master_seed, "lpa")).map_err(at(s))?;
    Ok(CommunitiesOutput {
        louvain: graph.ids().iter().copied().zip(partition.labels().iter().copied()).collect(),
        louvain_communities: partition.community_count(),
        modularity,
        ucm_residual: ucm.residual,
        seeds,
        labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorBlock {
    pub sector: Sector,
    pub size: usize,
    pub ensemble_mean: f64,
    pub ensemble_std: f64,
    pub pvalue: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityReport {
    pub label: u32,
    pub nodes: usize,
    pub edges: usize,
    pub weight: u64,
    pub verified: usize,
    pub seeds: usize,
    pub ensemble_seed: u64,
    pub ensemble_samples: usize,
    pub classification: BowTieClass,
    pub sectors: Vec<SectorBlock>,
    pub stats: SectorStats,
}

impl CommunityReport {
    pub fn block(&self, sector: Sector) -> &SectorBlock {
        &self.sectors[sector.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberRow {
    pub node: NodeId,
    pub sector: Sector,
    pub verified: bool,
}

/// Bow-tie sector of every member of one community.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectorAssignment {
    pub label: u32,
    pub members: Vec<MemberRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEdges {
    pub source_label: u32,
    pub target_label: u32,
    pub edges: usize,
    pub weight: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BowtieOutput {
    pub communities: Vec<CommunityReport>,
    pub assignments: Vec<SectorAssignment>,
    pub unassigned_nodes: usize,
    pub unassigned_edges: usize,
    pub cross: Vec<CrossEdges>,
}

impl BowtieOutput {
    pub fn write_artifacts(&self, dir: &Path) -> Result<(), PipelineError> {
        let s = Stage::Bowtie;
        write_json(s, &dir.join(files::BOWTIE), self)?;
        write_file(s, &dir.join(files::CROSS_EDGES), |w| {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(["source_label", "target_label", "edges", "weight"])?;
            for x in &self.cross {
                c.serialize((x.source_label, x.target_label, x.edges, x.weight))?;
            }
            c.flush()?;
            Ok(())
        })
    }

    pub fn read_artifacts(dir: &Path) -> Result<Self, PipelineError> {
        read_json(Stage::Bowtie, &dir.join(files::BOWTIE))
    }
}

pub fn run_bowtie(
    ingest: &IngestOutput,
    communities: &CommunitiesOutput,
    cfg: &PipelineConfig,
) -> Result<BowtieOutput, PipelineError> {
    let s = Stage::Bowtie;
    let digraph = ingest.digraph()?;
    let labels: Vec<Option<u32>> = digraph.ids().iter().map(|&id| communities.labels.label_of(id)).collect();
    let split = extract_communities(&digraph, &labels).map_err(at(s))?;
    let urls = annotate_urls(&ingest.retweets.records, &ingest.ratings);

    let mut reports = Vec::with_capacity(split.communities.len());
    let mut assignments = Vec::with_capacity(split.communities.len());
    for community in &split.communities {
        let g = &community.graph;
        let partition = bowtie_decompose(g).map_err(at(s))?;
        let ensemble_seed = stage_seed(cfg.master_seed, &format!("ensemble/{}", community.label));
        let dist = ensemble_sector_sizes(g, cfg.ensemble_samples, ensemble_seed, &cfg.fit_options()).map_err(at(s))?;
        let pvalues = dist.pvalues();
        let significant = fdr_blocks(&pvalues, cfg.alpha_blocks);
        let (mean, sd) = (dist.mean(), dist.std_dev());
        let sizes = partition.sizes();
        let stats = sector_stats(g, &partition, &ingest.accounts, &urls);
        reports.push(CommunityReport {
            label: community.label,
            nodes: g.node_count(),
            edges: g.edge_count(),
            weight: g.total_weight(),
            verified: stats.verified.iter().sum(),
            seeds: communities.seeds.values().filter(|&&l| l == community.label).count(),
            ensemble_seed,
            ensemble_samples: cfg.ensemble_samples,
            classification: classify_bowtie(&sizes, cfg.informative_rule),
            sectors: Sector::ALL
                .iter()
                .map(|&sec| {
                    let k = sec.index();
                    SectorBlock {
                        sector: sec,
                        size: sizes[k],
                        ensemble_mean: mean[k],
                        ensemble_std: sd[k],
                        pvalue: pvalues[k],
                        significant: significant[k],
                    }
                })
                .collect(),
            stats,
        });
        assignments.push(SectorAssignment {
            label: community.label,
            members: partition
                .ids()
                .iter()
                .zip(partition.sectors())
                .map(|(&node, &sector)| MemberRow { node, sector, verified: ingest.accounts.is_verified(node) })
                .collect(),
        });
    }
    Ok(BowtieOutput {
        communities: reports,
        assignments,
        unassigned_nodes: split.unassigned,
        unassigned_edges: split.unassigned_edges,
        cross: split
            .cross
            .iter()
            .map(|(&(a, b), &(edges, weight))| CrossEdges { source_label: a, target_label: b, edges, weight })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSummary {
    pub verified_nodes: usize,
    pub unverified_nodes: usize,
    pub bipartite_links: usize,
    pub bicm_residual: f64,
    pub validated_edges: usize,
    pub hypotheses: usize,
    pub alpha: f64,
    pub method: FdrMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub master_seed: u64,
    pub config: PipelineConfig,
    pub ingest: IngestSummary,
    pub digraph_nodes: usize,
    pub digraph_edges: usize,
    pub projection: ProjectionSummary,
    pub louvain_communities: usize,
    pub modularity: f64,
    pub seed_accounts: usize,
    pub unassigned_nodes: usize,
    pub unassigned_share: f64,
    pub unassigned_edges: usize,
    pub cross_community_edges: usize,
    pub cross_community_weight: u64,
    pub communities: Vec<CommunityReport>,
}

impl RunReport {
    pub fn community(&self, label: u32) -> Option<&CommunityReport> {
        self.communities.iter().find(|c| c.label == label)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn assemble_report(
    cfg: &PipelineConfig,
    ingest: &IngestOutput,
    projection: &ProjectionOutput,
    communities: &CommunitiesOutput,
    bowtie: &BowtieOutput,
) -> RunReport {
    let summary = ingest.summary();
    let digraph_nodes = summary.accounts;
    RunReport {
        master_seed: cfg.master_seed,
        config: cfg.clone(),
        digraph_nodes,
        digraph_edges: summary.retweet_pairs,
        ingest: summary,
        projection: ProjectionSummary {
            verified_nodes: projection.verified_nodes,
            unverified_nodes: projection.unverified_nodes,
            bipartite_links: projection.bipartite_links,
            bicm_residual: projection.bicm_residual,
            validated_edges: projection.projection.edges.len(),
            hypotheses: projection.projection.hypotheses,
            alpha: projection.projection.alpha,
            method: projection.projection.method,
        },
        louvain_communities: communities.louvain_communities,
        modularity: communities.modularity,
        seed_accounts: communities.seeds.len(),
        unassigned_nodes: bowtie.unassigned_nodes,
        unassigned_share: if digraph_nodes > 0 { bowtie.unassigned_nodes as f64 / digraph_nodes as f64 } else { 0.0 },
        unassigned_edges: bowtie.unassigned_edges,
        cross_community_edges: bowtie.cross.iter().map(|c| c.edges).sum(),
        cross_community_weight: bowtie.cross.iter().map(|c| c.weight).sum(),
        communities: bowtie.communities.clone(),
    }
}

/// Bow-tie diagram: one node per sector with `size` the sector count and
/// `shade` the sector's `-log10 p`, plus the retweet flow between sectors.
pub fn render_diagram(community: &CommunityReport) -> String {
    let mut out = String::new();
    let name = |s: Sector| s.name().to_string();
    out.push_str(&format!("digraph community_{} {{\n", community.label));
    out.push_str("  rankdir=LR;\n  node [shape=circle, style=filled, fontname=\"Helvetica\"];\n");
    for b in &community.sectors {
        let shade = 0.0 - b.pvalue.log10();
        let lightness = 1.0 - 0.8 * (shade / 10.0).clamp(0.0, 1.0);
        let width = 0.5 + (b.size as f64).sqrt() * 0.2;
        out.push_str(&format!(
            "  {} [label=\"{}\\n{}\", size={}, shade={:.3}, pvalue={:e}, significant={}, width={:.3}, fillcolor=\"0.000 0.000 {:.3}\"];\n",
            name(b.sector),
            b.sector,
            b.size,
            b.size,
            shade,
            b.pvalue,
            b.significant,
            width,
            lightness,
        ));
    }
    for a in Sector::ALL {
        for b in Sector::ALL {
            let w = community.stats.weight[a.index()][b.index()];
            if a != b && w > 0 {
                out.push_str(&format!("  {} -> {} [label=\"{}\", weight={}];\n", name(a), name(b), w, w));
            }
        }
    }
    out.push_str("}\n");
    out
}

/// Writes `report.json` and, per community, its sector table and diagram.
/// Returns the written paths.
pub fn emit_report(
    report: &RunReport,
    assignments: &[SectorAssignment],
    dir: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    let s = Stage::Report;
    commit(s, dir, |staging| write_report_files(report, assignments, staging))
}

fn write_report_files(report: &RunReport, assignments: &[SectorAssignment], dir: &Path) -> Result<(), PipelineError> {
    let s = Stage::Report;
    write_file(s, &dir.join(files::REPORT), |w| Ok(w.write_all(report.to_json().as_bytes())?))?;
    for c in &report.communities {
        write_file(s, &dir.join(files::diagram(c.label)), |w| Ok(w.write_all(render_diagram(c).as_bytes())?))?;
    }
    for a in assignments {
        write_file(s, &dir.join(files::sectors_table(a.label)), |w| {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(["node", "sector", "verified"])?;
            for m in &a.members {
                c.write_record([m.node.to_string(), m.sector.to_string(), m.verified.to_string()])?;
            }
            c.flush()?;
            Ok(())
        })?;
    }
    Ok(())
}

/// Outputs of every stage of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub ingest: IngestOutput,
    pub projection: ProjectionOutput,
    pub communities: CommunitiesOutput,
    pub bowtie: BowtieOutput,
    pub report: RunReport,
}

impl PipelineRun {
    /// Writes all stage artifacts and the report into `dir` in one commit.
    pub fn write_all(&self, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
        commit(Stage::Report, dir, |staging| {
            self.ingest.write_artifacts(staging)?;
            self.projection.write_artifacts(staging)?;
            self.communities.write_artifacts(staging)?;
            self.bowtie.write_artifacts(staging)?;
            write_report_files(&self.report, &self.bowtie.assignments, staging)
        })
    }
}

/// Runs every stage in memory. Deterministic given the configuration.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun, PipelineError> {
    cfg.validate()?;
    let ingest = run_ingest(cfg)?;
    let projection = run_project(&ingest, cfg)?;
    let communities = run_communities(&ingest, &projection, cfg)?;
    let bowtie = run_bowtie(&ingest, &communities, cfg)?;
    let report = assemble_report(cfg, &ingest, &projection, &communities, &bowtie);
    Ok(PipelineRun { ingest, projection, communities, bowtie, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_overrides() {
        let text = "# inputs\naccounts = a.csv\nretweets = r.csv\nlpa_runs = 7 # few\nfdr_method = by\n";
        let cfg = PipelineConfig::parse(text, Path::new("/data")).unwrap();
        assert_eq!(cfg.accounts, PathBuf::from("/data/a.csv"));
        assert_eq!(cfg.lpa_runs, 7);
        assert_eq!(cfg.fdr_method, FdrMethod::BenjaminiYekutieli);
        assert_eq!(cfg.alpha_projection, 0.01);
        assert_eq!(cfg.alpha_blocks, 0.01);
        assert_eq!(cfg.ensemble_samples, 1000);
        assert_eq!(cfg.ratings, None);
    }

    #[test]
    fn config_errors_carry_lines() {
        let base = Path::new(".");
        assert!(matches!(
            PipelineConfig::parse("accounts = a\nretweets = b\nbogus = 1\n", base),
            Err(ConfigError::UnknownKey { line: 3, .. })
        ));
        assert!(matches!(
            PipelineConfig::parse("accounts = a\nretweets\n", base),
            Err(ConfigError::Syntax { line: 2 })
        ));
        assert!(matches!(
            PipelineConfig::parse("accounts = a\nretweets = b\nlpa_runs = many\n", base),
            Err(ConfigError::Value { line: 3, .. })
        ));
        assert!(matches!(
            PipelineConfig::parse("accounts = a\nretweets = b\nalpha_blocks = 1.5\n", base),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(PipelineConfig::parse("retweets = b\n", base), Err(ConfigError::Missing("accounts"))));
    }

    #[test]
    fn diagram_encodes_size_and_shade() {
        let mut stats_sizes = [0usize; 7];
        stats_sizes[Sector::Out.index()] = 9;
        let blocks: Vec<SectorBlock> = Sector::ALL
            .iter()
            .map(|&sector| SectorBlock {
                sector,
                size: stats_sizes[sector.index()],
                ensemble_mean: 0.0,
                ensemble_std: 0.0,
                pvalue: if sector == Sector::Out { 0.001 } else { 1.0 },
                significant: sector == Sector::Out,
            })
            .collect();
        let g = DirectedGraph::from_edges([1], []).unwrap();
        let part = bowtie_decompose(&g).unwrap();
        let stats = sector_stats(&g, &part, &AccountTable::new(), &Default::default());
        let c = CommunityReport {
            label: 4,
            nodes: 9,
            edges: 0,
            weight: 0,
            verified: 0,
            seeds: 0,
            ensemble_seed: 0,
            ensemble_samples: 100,
            classification: classify_bowtie(&stats_sizes, InformativeRule::Majority),
            sectors: blocks,
            stats,
        };
        let dot = render_diagram(&c);
        assert!(dot.starts_with("digraph community_4 {"));
        assert!(dot.contains("OUT [label=\"OUT\\n9\", size=9, shade=3.000"));
        assert!(dot.contains("SCC [label=\"SCC\\n0\", size=0, shade=0.000"));
    }
}
