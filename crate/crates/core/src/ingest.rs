//! Loading accounts, retweets and domain ratings, and building the graphs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bipartite::{BipartiteError, BipartiteGraph};
use crate::graph::{DirectedGraph, GraphError, NodeId};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Malformed { line: u64, msg: String },
    #[error("missing column {0:?} in header")]
    MissingColumn(&'static str),
    #[error("line {line}: duplicate account id {id}")]
    DuplicateAccount { id: NodeId, line: u64 },
    #[error("line {line}: unknown account id {id}")]
    UnknownAccount { id: NodeId, line: u64 },
    #[error("line {line}: domain {domain} rated both trusted and untrusted")]
    ConflictingRating { domain: String, line: u64 },
    #[error(transparent)]
    Bipartite(#[from] BipartiteError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader)
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn csv_error(e: csv::Error) -> IngestError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    IngestError::Malformed { line, msg: e.to_string() }
}

fn column(headers: &csv::StringRecord, name: &'static str) -> Result<usize, IngestError> {
    headers.iter().position(|h| h.eq_ignore_ascii_case(name)).ok_or(IngestError::MissingColumn(name))
}

fn field<'r>(record: &'r csv::StringRecord, idx: usize, name: &str) -> Result<&'r str, IngestError> {
    record
        .get(idx)
        .ok_or_else(|| IngestError::Malformed { line: line_of(record), msg: format!("missing field {name}") })
}

fn parse_bool(s: &str, line: u64) -> Result<bool, IngestError> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "t" | "y" => Ok(true),
        "false" | "0" | "no" | "f" | "n" => Ok(false),
        _ => Err(IngestError::Malformed { line, msg: format!("invalid boolean {s:?}") }),
    }
}

fn parse_id(s: &str, line: u64) -> Result<NodeId, IngestError> {
    s.parse().map_err(|_| IngestError::Malformed { line, msg: format!("invalid account id {s:?}") })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub verified: bool,
    pub screen_name: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccountTable {
    entries: BTreeMap<NodeId, Account>,
}

impl AccountTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an account; returns false (and changes nothing) if the id exists.
    pub fn insert(&mut self, id: NodeId, account: Account) -> bool {
        if self.entries.contains_key(&id) {
            return false;
        }
        self.entries.insert(id, account);
        true
    }

    pub fn get(&self, id: NodeId) -> Option<&Account> {
        self.entries.get(&id)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn is_verified(&self, id: NodeId) -> bool {
        self.entries.get(&id).is_some_and(|a| a.verified)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Account ids in ascending order.
    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.entries.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Account)> + '_ {
        self.entries.iter().map(|(&id, a)| (id, a))
    }

    /// Table `id,verified,screen_name`.
    pub fn write<W: std::io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["id", "verified", "screen_name"])?;
        for (id, a) in &self.entries {
            w.write_record([id.to_string(), a.verified.to_string(), a.screen_name.clone()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn read_accounts<R: Read>(reader: R) -> Result<AccountTable, IngestError> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let (id_col, ver_col) = (column(&headers, "id")?, column(&headers, "verified")?);
    let name_col = column(&headers, "screen_name").ok();
    let mut table = AccountTable::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = line_of(&record);
        let id = parse_id(field(&record, id_col, "id")?, line)?;
        let verified = parse_bool(field(&record, ver_col, "verified")?, line)?;
        let screen_name = name_col.and_then(|c| record.get(c)).unwrap_or("").to_string();
        if !table.insert(id, Account { verified, screen_name }) {
            return Err(IngestError::DuplicateAccount { id, line });
        }
    }
    Ok(table)
}

pub fn load_accounts(path: &Path) -> Result<AccountTable, IngestError> {
    read_accounts(open(path)?)
}

/// Registrable domain of a URL or host name: lowercase, without scheme,
/// credentials, port, path or a leading `www.`. Returns `None` when no host
/// name is left.
pub fn normalize_domain(raw: &str) -> Option<String> {
    let mut s = raw.trim().to_ascii_lowercase();
    if let Some(pos) = s.find("://") {
        s.drain(..pos + 3);
    }
    if let Some(pos) = s.find(['/', '?', '#']) {
        s.truncate(pos);
    }
    if let Some(pos) = s.rfind('@') {
        s.drain(..=pos);
    }
    if let Some(pos) = s.find(':') {
        s.truncate(pos);
    }
    let host = s.trim_end_matches('.');
    let host = host.strip_prefix("www.").unwrap_or(host);
    if host.is_empty() {
        return None;
    }
    Some(psl::domain_str(host).unwrap_or(host).to_string())
}

/// Aggregated retweets from `author` (the retweeted account) to `retweeter`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetweetRecord {
    pub author: NodeId,
    pub retweeter: NodeId,
    pub count: u64,
    /// Normalized domains of every shared URL, repeated per occurrence.
    pub urls: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnknownIdPolicy {
    /// Add unknown ids as non-verified accounts.
    #[default]
    AutoRegister,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RetweetLoad {
    /// One record per (author, retweeter) pair, sorted by pair.
    pub records: Vec<RetweetRecord>,
    /// Self-retweet rows dropped.
    pub self_loops: usize,
    /// Summed count of the dropped self-retweet rows.
    pub self_loop_weight: u64,
    pub auto_registered: usize,
}

pub fn read_retweets<R: Read>(
    reader: R,
    accounts: &mut AccountTable,
    policy: UnknownIdPolicy,
) -> Result<RetweetLoad, IngestError> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let author_col = column(&headers, "author_id")?;
    let rt_col = column(&headers, "retweeter_id")?;
    let count_col = column(&headers, "count").ok();
    let url_col = column(&headers, "urls").ok();

    let mut load = RetweetLoad::default();
    let mut pairs: BTreeMap<(NodeId, NodeId), (u64, Vec<String>)> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = line_of(&record);
        let author = parse_id(field(&record, author_col, "author_id")?, line)?;
        let retweeter = parse_id(field(&record, rt_col, "retweeter_id")?, line)?;
        let count = match count_col.and_then(|c| record.get(c)).filter(|s| !s.is_empty()) {
            None => 1,
            Some(s) => match s.parse::<u64>() {
                Ok(c) if c >= 1 => c,
                _ => return Err(IngestError::Malformed { line, msg: format!("invalid count {s:?}") }),
            },
        };
        for id in [author, retweeter] {
            if !accounts.contains(id) {
                match policy {
                    UnknownIdPolicy::Reject => return Err(IngestError::UnknownAccount { id, line }),
                    UnknownIdPolicy::AutoRegister => {
                        accounts.insert(id, Account { verified: false, screen_name: String::new() });
                        load.auto_registered += 1;
                    }
                }
            }
        }
        if author == retweeter {
            load.self_loops += 1;
            load.self_loop_weight += count;
            continue;
        }
        let entry = pairs.entry((author, retweeter)).or_insert((0, Vec::new()));
        entry.0 += count;
        if let Some(raw) = url_col.and_then(|c| record.get(c)) {
            entry.1.extend(raw.split('|').filter_map(normalize_domain));
        }
    }
    load.records = pairs
        .into_iter()
        .map(|((author, retweeter), (count, urls))| RetweetRecord { author, retweeter, count, urls })
        .collect();
    Ok(load)
}

/// Table `author_id,retweeter_id,count,urls`, readable by [`read_retweets`].
pub fn write_retweets<W: std::io::Write>(writer: W, records: &[RetweetRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["author_id", "retweeter_id", "count", "urls"])?;
    for r in records {
        w.write_record([r.author.to_string(), r.retweeter.to_string(), r.count.to_string(), r.urls.join("|")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_retweets(
    path: &Path,
    accounts: &mut AccountTable,
    policy: UnknownIdPolicy,
) -> Result<RetweetLoad, IngestError> {
    read_retweets(open(path)?, accounts, policy)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RatingsTable {
    entries: BTreeMap<String, bool>,
}

impl RatingsTable {
    /// `Some(true)` for trusted, `Some(false)` for untrusted, `None` if unrated.
    pub fn trusted(&self, domain: &str) -> Option<bool> {
        self.entries.get(domain).copied()
    }

    pub fn is_untrusted(&self, domain: &str) -> bool {
        self.trusted(domain) == Some(false)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, bool)> + '_ {
        self.entries.iter().map(|(d, &t)| (d.as_str(), t))
    }
}

impl RatingsTable {
    /// Table `domain,trusted`.
    pub fn write<W: std::io::Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["domain", "trusted"])?;
        for (d, t) in &self.entries {
            w.write_record([d.as_str(), if *t { "true" } else { "false" }])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl FromIterator<(String, bool)> for RatingsTable {
    fn from_iter<I: IntoIterator<Item = (String, bool)>>(iter: I) -> Self {
        Self { entries: iter.into_iter().collect() }
    }
}

pub fn read_ratings<R: Read>(reader: R) -> Result<RatingsTable, IngestError> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let (dom_col, trust_col) = (column(&headers, "domain")?, column(&headers, "trusted")?);
    let mut entries = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        let line = line_of(&record);
        let raw = field(&record, dom_col, "domain")?;
        let domain = normalize_domain(raw)
            .ok_or_else(|| IngestError::Malformed { line, msg: format!("invalid domain {raw:?}") })?;
        let trusted = parse_bool(field(&record, trust_col, "trusted")?, line)?;
        match entries.get(&domain) {
            Some(&prev) if prev != trusted => {
                return Err(IngestError::ConflictingRating { domain, line });
            }
            _ => {
                entries.insert(domain, trusted);
            }
        }
    }
    Ok(RatingsTable { entries })
}

pub fn load_ratings(path: &Path) -> Result<RatingsTable, IngestError> {
    read_ratings(open(path)?)
}

/// Verified x non-verified interaction graph: a link wherever the two accounts
/// retweeted each other at least once, in either direction. Records inside one
/// layer are ignored; only accounts with a cross-layer link become nodes.
pub fn build_bipartite(records: &[RetweetRecord], accounts: &AccountTable) -> Result<BipartiteGraph, IngestError> {
    let links =
        records.iter().filter_map(|r| match (accounts.is_verified(r.author), accounts.is_verified(r.retweeter)) {
            (true, false) => Some((r.author, r.retweeter)),
            (false, true) => Some((r.retweeter, r.author)),
            _ => None,
        });
    Ok(BipartiteGraph::from_links(links)?)
}

/// Retweet digraph over every registered account, edge author -> retweeter
/// weighted by the aggregated count.
pub fn build_retweet_digraph(records: &[RetweetRecord], accounts: &AccountTable) -> Result<DirectedGraph, IngestError> {
    Ok(DirectedGraph::from_edges(accounts.ids(), records.iter().map(|r| (r.author, r.retweeter, r.count)))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UrlCounts {
    pub total: u64,
    pub untrusted: u64,
}

pub type UrlAnnotations = BTreeMap<(NodeId, NodeId), UrlCounts>;

/// URL occurrences per edge, and how many point to untrusted domains. Unrated
/// domains count toward the total only.
pub fn annotate_urls(records: &[RetweetRecord], ratings: &RatingsTable) -> UrlAnnotations {
    records
        .iter()
        .map(|r| {
            let untrusted = r.urls.iter().filter(|d| ratings.is_untrusted(d)).count() as u64;
            ((r.author, r.retweeter), UrlCounts { total: r.urls.len() as u64, untrusted })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn accounts(text: &str) -> AccountTable {
        read_accounts(text.as_bytes()).unwrap()
    }

    #[test]
    fn accounts_parse() {
        assert!(accounts("id,verified,screen_name\n").is_empty());
        let t = accounts("id,verified,screen_name\n42,true,alice\n7,false,\n");
        assert_eq!(t.get(42), Some(&Account { verified: true, screen_name: "alice".into() }));
        assert!(!t.is_verified(7));
    }

    #[test]
    fn duplicate_and_malformed_accounts() {
        let dup = read_accounts("id,verified,screen_name\n7,true,a\n7,false,b\n".as_bytes());
        assert!(matches!(dup, Err(IngestError::DuplicateAccount { id: 7, line: 3 })));
        let bad = read_accounts("id,verified,screen_name\n7,maybe,a\n".as_bytes());
        assert!(matches!(bad, Err(IngestError::Malformed { line: 2, .. })));
        let bad_id = read_accounts("id,verified,screen_name\n1,true,a\nx,true,b\n".as_bytes());
        assert!(matches!(bad_id, Err(IngestError::Malformed { line: 3, .. })));
    }

    #[test]
    fn retweets_aggregate_and_drop_self_loops() {
        let mut acc = accounts("id,verified,screen_name\n1,true,a\n2,false,b\n");
        let text = "author_id,retweeter_id,count,urls\n1,2,1,https://www.Example.com/x\n1,2,1,\n2,2,3,\n";
        let load = read_retweets(text.as_bytes(), &mut acc, UnknownIdPolicy::Reject).unwrap();
        assert_eq!(load.records.len(), 1);
        assert_eq!(load.records[0].count, 2);
        assert_eq!(load.records[0].urls, vec!["example.com".to_string()]);
        assert_eq!(load.self_loops, 1);
        assert_eq!(load.self_loop_weight, 3);
        let empty = read_retweets("author_id,retweeter_id,count,urls\n".as_bytes(), &mut acc, UnknownIdPolicy::Reject);
        assert!(empty.unwrap().records.is_empty());
    }

    #[test]
    fn tables_round_trip() {
        let mut acc = accounts("id,verified,screen_name\n1,true,a b\n2,false,\n");
        let text = "author_id,retweeter_id,count,urls\n1,2,3,x.com|https://y.org/p\n2,1,1,\n";
        let load = read_retweets(text.as_bytes(), &mut acc, UnknownIdPolicy::Reject).unwrap();
        let mut buf = Vec::new();
        write_retweets(&mut buf, &load.records).unwrap();
        let again = read_retweets(buf.as_slice(), &mut acc, UnknownIdPolicy::Reject).unwrap();
        assert_eq!(again.records, load.records);
        let mut buf = Vec::new();
        acc.write(&mut buf).unwrap();
        assert_eq!(read_accounts(buf.as_slice()).unwrap(), acc);
        let ratings: RatingsTable = [("x.com".to_string(), false), ("y.org".to_string(), true)].into_iter().collect();
        let mut buf = Vec::new();
        ratings.write(&mut buf).unwrap();
        assert_eq!(read_ratings(buf.as_slice()).unwrap(), ratings);
    }

    #[test]
    fn unknown_ids_follow_policy() {
        let text = "author_id,retweeter_id\n1,9\n";
        let mut acc = accounts("id,verified,screen_name\n1,true,a\n");
        let strict = read_retweets(text.as_bytes(), &mut acc.clone(), UnknownIdPolicy::Reject);
        assert!(matches!(strict, Err(IngestError::UnknownAccount { id: 9, line: 2 })));
        let load = read_retweets(text.as_bytes(), &mut acc, UnknownIdPolicy::AutoRegister).unwrap();
        assert_eq!(load.auto_registered, 1);
        assert!(acc.contains(9) && !acc.is_verified(9));
        assert_eq!(load.records[0].count, 1);
    }

    #[test]
    fn zero_count_is_rejected() {
        let mut acc = AccountTable::new();
        let r =
            read_retweets("author_id,retweeter_id,count\n1,2,0\n".as_bytes(), &mut acc, UnknownIdPolicy::AutoRegister);
        assert!(matches!(r, Err(IngestError::Malformed { line: 2, .. })));
    }

    #[test]
    fn domains_normalize() {
        assert_eq!(normalize_domain("Example.COM").as_deref(), Some("example.com"));
        assert_eq!(normalize_domain("http://www.news.bbc.co.uk:80/a?b").as_deref(), Some("bbc.co.uk"));
        assert_eq!(normalize_domain("user@sub.example.org/").as_deref(), Some("example.org"));
        assert_eq!(normalize_domain("  "), None);
    }

    #[test]
    fn ratings_parse_and_conflict() {
        let r = read_ratings("domain,trusted\nExample.COM,false\nwww.good.org,true\n".as_bytes()).unwrap();
        assert_eq!(r.trusted("example.com"), Some(false));
        assert_eq!(r.trusted("good.org"), Some(true));
        assert!(read_ratings("domain,trusted\n".as_bytes()).unwrap().is_empty());
        let c = read_ratings("domain,trusted\na.com,true\nA.com,false\n".as_bytes());
        assert!(matches!(c, Err(IngestError::ConflictingRating { line: 3, .. })));
        assert!(matches!(
            read_ratings("domain,trusted\na.com,perhaps\n".as_bytes()),
            Err(IngestError::Malformed { line: 2, .. })
        ));
    }

    fn rec(author: NodeId, retweeter: NodeId, count: u64) -> RetweetRecord {
        RetweetRecord { author, retweeter, count, urls: Vec::new() }
    }

    #[test]
    fn bipartite_ignores_direction_and_same_layer() {
        let acc = accounts("id,verified,screen_name\n1,true,\n2,true,\n10,false,\n11,false,\n");
        let recs = [rec(1, 10, 5), rec(11, 2, 1), rec(1, 2, 3), rec(10, 11, 1), rec(10, 1, 1)];
        let b = build_bipartite(&recs, &acc).unwrap();
        assert_eq!(b.top_ids(), &[1, 2]);
        assert_eq!(b.bottom_ids(), &[10, 11]);
        assert_eq!(b.link_count(), 2);
        let twice: Vec<RetweetRecord> = recs.iter().chain(recs.iter()).cloned().collect();
        assert_eq!(build_bipartite(&twice, &acc).unwrap(), b);
    }

    #[test]
    fn digraph_keeps_isolated_accounts() {
        let acc = accounts("id,verified,screen_name\n1,true,\n2,false,\n3,false,\n");
        let g = build_retweet_digraph(&[rec(1, 2, 2), rec(2, 1, 1)], &acc).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.weight(0, 1), Some(2));
        assert_eq!(g.weight(1, 0), Some(1));
        assert_eq!(build_retweet_digraph(&[], &acc).unwrap().edge_count(), 0);
    }

    #[test]
    fn url_annotation_counts_only_untrusted() {
        let ratings: RatingsTable = [("x.com".to_string(), false)].into_iter().collect();
        let mut a = rec(1, 2, 1);
        a.urls = vec!["x.com".into()];
        let mut b = rec(2, 3, 1);
        b.urls = vec!["y.org".into()];
        let ann = annotate_urls(&[a, b, rec(3, 1, 1)], &ratings);
        assert_eq!(ann[&(1, 2)], UrlCounts { total: 1, untrusted: 1 });
        assert_eq!(ann[&(2, 3)], UrlCounts { total: 1, untrusted: 0 });
        assert_eq!(ann[&(3, 1)], UrlCounts { total: 0, untrusted: 0 });
    }
}
