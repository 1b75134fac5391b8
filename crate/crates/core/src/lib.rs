//! Discursive communities in retweet networks and their bow-tie structure.
//!
//! The pipeline reads accounts and retweets ([`ingest`]), projects the
//! verified x non-verified interaction graph onto verified accounts through a
//! statistically validated projection ([`projection`], [`nullmodels`]), finds
//! communities ([`communities`]) and decomposes each one into bow-tie sectors
//! ([`graph`]) whose sizes are tested against a directed configuration model
//! ensemble ([`bowtie_stats`]). [`pipeline`] ties the stages together.
//!
//! Data-parallel loops go through [`par`]; build without the default
//! `parallel` feature for a sequential library.

pub mod bipartite;
pub mod bowtie_stats;
pub mod communities;
pub mod graph;
pub mod ingest;
pub mod nullmodels;
pub mod par;
pub mod pipeline;
pub mod projection;
pub mod rng;
