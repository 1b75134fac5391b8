//! Synthetic corpus with two verified blocks.
//!
//! Block A: verified 1..=5, core retweeters 101..=130 and leaves 131..=210.
//! Every core account retweets all five verified accounts and is retweeted by
//! one of them, so verified and core form one strongly connected component.
//! Each leaf retweets a single core account once or a few times: 80 leaves in
//! OUT, nothing in OTHERS, a strong OUT-dominant bow-tie. Leaves are not
//! verified-linked, so they stay out of the bipartite graph. In the DCM
//! ensemble a leaf with one in-link is isolated with probability near 1/e, so
//! OTHERS is far larger there than observed.
//!
//! Block B: verified 6..=10, core 301..=330 wired like block A, and leaves
//! 331..=360 that are retweeted by a core account (they sit in IN).
//!
//! Two accounts (900, 901) never retweet, and leaf 150 also retweets verified
//! account 6 once, a cross-block edge.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const VERIFIED_A: std::ops::RangeInclusive<u64> = 1..=5;
pub const VERIFIED_B: std::ops::RangeInclusive<u64> = 6..=10;
pub const CORE_A: std::ops::RangeInclusive<u64> = 101..=130;
pub const LEAVES_A: std::ops::RangeInclusive<u64> = 131..=210;
pub const CORE_B: std::ops::RangeInclusive<u64> = 301..=330;
pub const LEAVES_B: std::ops::RangeInclusive<u64> = 331..=360;
pub const ISOLATED: [u64; 2] = [900, 901];

pub fn unverified_a() -> impl Iterator<Item = u64> {
    CORE_A.chain(LEAVES_A)
}

pub fn unverified_b() -> impl Iterator<Item = u64> {
    CORE_B.chain(LEAVES_B)
}

/// Rows `(author, retweeter, count, urls)`.
pub fn retweet_rows() -> Vec<(u64, u64, u64, String)> {
    let mut rows = Vec::new();
    for (verified, core, leaves, leaves_in) in
        [(VERIFIED_A, CORE_A, LEAVES_A, false), (VERIFIED_B, CORE_B, LEAVES_B, true)]
    {
        let v: Vec<u64> = verified.collect();
        for (k, c) in core.clone().enumerate() {
            for (j, &a) in v.iter().enumerate() {
                let urls = match (k + j) % 4 {
                    0 => "https://www.fakenews.com/story".to_string(),
                    1 => "goodnews.org/a|unrated.net".to_string(),
                    _ => String::new(),
                };
                rows.push((a, c, 1 + (k % 2) as u64, urls));
            }
            rows.push((c, v[k % v.len()], 1, String::new()));
        }
        let c: Vec<u64> = core.clone().collect();
        for (k, l) in leaves.enumerate() {
            let a = c[k % c.len()];
            let count = 1 + (k % 3) as u64;
            let urls = if k % 5 == 0 { "http://fakenews.com/x".to_string() } else { String::new() };
            if leaves_in {
                rows.push((l, a, count, urls));
            } else {
                rows.push((a, l, count, urls));
            }
        }
    }
    rows.push((6, 150, 1, String::new()));
    rows
}

pub struct Corpus {
    pub dir: PathBuf,
    pub config: PathBuf,
}

/// Writes the corpus and a pipeline configuration into `dir`.
pub fn write_corpus(dir: &Path, seed: u64, lpa_runs: usize, samples: usize) -> Corpus {
    fs::create_dir_all(dir).unwrap();
    let mut accounts = String::from("id,verified,screen_name\n");
    for id in VERIFIED_A.chain(VERIFIED_B) {
        writeln!(accounts, "{id},true,verified_{id}").unwrap();
    }
    for id in unverified_a().chain(unverified_b()).chain(ISOLATED) {
        writeln!(accounts, "{id},false,").unwrap();
    }
    fs::write(dir.join("accounts.csv"), accounts).unwrap();

    let mut retweets = String::from("author_id,retweeter_id,count,urls\n");
    for (a, r, c, u) in retweet_rows() {
        writeln!(retweets, "{a},{r},{c},{u}").unwrap();
    }
    fs::write(dir.join("retweets.csv"), retweets).unwrap();
    fs::write(dir.join("ratings.csv"), "domain,trusted\nfakenews.com,false\ngoodnews.org,true\n").unwrap();

    let config = dir.join("pipeline.conf");
    fs::write(
        &config,
        format!(
            "accounts = accounts.csv\nretweets = retweets.csv\nratings = ratings.csv\noutput = out\n\
             master_seed = {seed}\nlpa_runs = {lpa_runs}\nensemble_samples = {samples}\n"
        ),
    )
    .unwrap();
    Corpus { dir: dir.to_path_buf(), config }
}
