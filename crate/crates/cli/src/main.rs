//! `bowtie`: discursive communities and bow-tie analysis of a retweet network.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use bowtie_core::pipeline::{
    assemble_report, commit, emit_report, run_bowtie, run_communities, run_ingest, run_pipeline, run_project,
    BowtieOutput, CommunitiesOutput, IngestOutput, PipelineConfig, ProjectionOutput, RunReport, Stage,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bowtie", version, about = "Discursive communities and bow-tie sectors of retweet networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read accounts, retweets and ratings; write normalized tables.
    Ingest(Options),
    /// Fit the bipartite model and validate the projection on verified accounts.
    Project(Options),
    /// Louvain on the projection, then seeded label propagation.
    Communities(Options),
    /// Bow-tie sectors, ensemble p-values and flow statistics per community.
    Bowtie(Options),
    /// Write report.json, sector tables and DOT diagrams.
    Report(Options),
    /// All stages in one go.
    Run(Options),
}

/// Every flag overrides the matching key of the configuration file.
#[derive(Args)]
struct Options {
    /// Flat `key = value` configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    accounts: Option<String>,
    #[arg(long)]
    retweets: Option<String>,
    #[arg(long)]
    ratings: Option<String>,
    /// Directory for artifacts and reports.
    #[arg(short, long)]
    output: Option<String>,
    #[arg(long)]
    alpha_projection: Option<String>,
    #[arg(long)]
    alpha_blocks: Option<String>,
    /// `bh` or `by`.
    #[arg(long)]
    fdr_method: Option<String>,
    #[arg(long)]
    lpa_runs: Option<String>,
    #[arg(long)]
    lpa_weighted: Option<String>,
    #[arg(long)]
    lpa_max_sweeps: Option<String>,
    #[arg(long)]
    ensemble_samples: Option<String>,
    #[arg(long)]
    master_seed: Option<String>,
    /// `auto-register` or `reject`.
    #[arg(long)]
    unknown_ids: Option<String>,
    /// `majority` or `same-order`.
    #[arg(long)]
    informative_rule: Option<String>,
    #[arg(long)]
    min_seed_community_size: Option<String>,
    #[arg(long)]
    fit_tolerance: Option<String>,
    #[arg(long)]
    fit_max_iterations: Option<String>,
}

impl Options {
    fn overrides(&self) -> [(&'static str, &Option<String>); 17] {
        [
            ("accounts", &self.accounts),
            ("retweets", &self.retweets),
            ("ratings", &self.ratings),
            ("output", &self.output),
            ("alpha_projection", &self.alpha_projection),
            ("alpha_blocks", &self.alpha_blocks),
            ("fdr_method", &self.fdr_method),
            ("lpa_runs", &self.lpa_runs),
            ("lpa_weighted", &self.lpa_weighted),
            ("lpa_max_sweeps", &self.lpa_max_sweeps),
            ("ensemble_samples", &self.ensemble_samples),
            ("master_seed", &self.master_seed),
            ("unknown_ids", &self.unknown_ids),
            ("informative_rule", &self.informative_rule),
            ("min_seed_community_size", &self.min_seed_community_size),
            ("fit_tolerance", &self.fit_tolerance),
            ("fit_max_iterations", &self.fit_max_iterations),
        ]
    }

    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        let cwd = std::env::current_dir().context("resolving the working directory")?;
        for (key, value) in self.overrides() {
            if let Some(v) = value {
                cfg.set(key, v, &cwd).with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(o) => ingest(&o.config()?),
        Command::Project(o) => project(&o.config()?),
        Command::Communities(o) => communities(&o.config()?),
        Command::Bowtie(o) => bowtie(&o.config()?),
        Command::Report(o) => report(&o.config()?),
        Command::Run(o) => run(&o.config()?),
    }
}

fn ingest(cfg: &PipelineConfig) -> Result<()> {
    let out = run_ingest(cfg)?;
    commit(Stage::Ingest, &cfg.output, |d| out.write_artifacts(d))?;
    let s = out.summary();
    println!(
        "ingest: {} accounts ({} verified), {} retweet pairs, weight {}, {} self-loops dropped, {} auto-registered",
        s.accounts, s.verified_accounts, s.retweet_pairs, s.retweet_weight, s.self_loops_dropped, s.auto_registered
    );
    Ok(())
}

fn project(cfg: &PipelineConfig) -> Result<()> {
    let ingest = IngestOutput::read_artifacts(&cfg.output)?;
    let out = run_project(&ingest, cfg)?;
    commit(Stage::Project, &cfg.output, |d| out.write_artifacts(d))?;
    println!(
        "project: {} verified x {} unverified, {} validated edges, BiCM residual {:.2e}",
        out.verified_nodes,
        out.unverified_nodes,
        out.projection.edges.len(),
        out.bicm_residual
    );
    Ok(())
}

fn communities(cfg: &PipelineConfig) -> Result<()> {
    let ingest = IngestOutput::read_artifacts(&cfg.output)?;
    let projection = ProjectionOutput::read_artifacts(&cfg.output)?;
    let out = run_communities(&ingest, &projection, cfg)?;
    commit(Stage::Communities, &cfg.output, |d| out.write_artifacts(d))?;
    println!(
        "communities: {} Louvain communities, Q = {:.4}, {} seeds, {} accounts unlabelled",
        out.louvain_communities,
        out.modularity,
        out.seeds.len(),
        out.labels.unassigned()
    );
    Ok(())
}

fn bowtie(cfg: &PipelineConfig) -> Result<()> {
    let ingest = IngestOutput::read_artifacts(&cfg.output)?;
    let communities = CommunitiesOutput::read_artifacts(&cfg.output)?;
    let out = run_bowtie(&ingest, &communities, cfg)?;
    commit(Stage::Bowtie, &cfg.output, |d| out.write_artifacts(d))?;
    for c in &out.communities {
        println!(
            "bowtie: community {}: {} nodes, {:?} {:?}",
            c.label, c.nodes, c.classification.strength, c.classification.dominance
        );
    }
    Ok(())
}

fn report(cfg: &PipelineConfig) -> Result<()> {
    let dir = &cfg.output;
    let ingest = IngestOutput::read_artifacts(dir)?;
    let projection = ProjectionOutput::read_artifacts(dir)?;
    let communities = CommunitiesOutput::read_artifacts(dir)?;
    let bowtie = BowtieOutput::read_artifacts(dir)?;
    let report = assemble_report(cfg, &ingest, &projection, &communities, &bowtie);
    let written = emit_report(&report, &bowtie.assignments, dir)?;
    summarize(&report, dir, written.len());
    Ok(())
}

fn run(cfg: &PipelineConfig) -> Result<()> {
    let out = run_pipeline(cfg)?;
    let written = out.write_all(&cfg.output)?;
    summarize(&out.report, &cfg.output, written.len());
    Ok(())
}

fn summarize(report: &RunReport, dir: &Path, files: usize) {
    for c in &report.communities {
        let k = &c.classification;
        println!(
            "community {}: {} nodes, {} edges, informative {}, {:?}, {:?}",
            c.label, c.nodes, c.edges, k.informative, k.strength, k.dominance
        );
    }
    println!(
        "{} communities, {:.1}% of accounts unassigned; {} files in {}",
        report.communities.len(),
        100.0 * report.unassigned_share,
        files,
        dir.display()
    );
}
