use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chain::{
    oracle_scan, strawman_in, verify_chain, Chain, ChainBuilder, ChainError, ChainLimits, ChainOp, CommGraph,
    StrawmanFinding,
};
use crate::error::ConfigError;
use crate::protocols::FullInformation;
use crate::types::Round;

pub const GRAPH_DIR: &str = "graphs";
pub const CHAIN_INDEX: &str = "chain.jsonl";
pub const CHAIN_SUMMARY: &str = "chain.json";

#[derive(Clone, Debug)]
pub struct ChainOptions {
    pub n: usize,
    pub rounds: Round,
    pub out: PathBuf,
    pub verify: bool,
    pub force: bool,
    pub limits: ChainLimits,
}

#[derive(Debug, Error)]
pub enum ChainCmdError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ChainCmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ChainCmdError::Chain(ChainError::Engine(_)) => 1,
            _ => 2,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainVerification {
    pub all_similar: bool,
    /// Indices `i` such that graphs `i` and `i + 1` are not similar.
    pub failing_pairs: Vec<usize>,
    pub max_differing: usize,
    /// Graph indices where the direct interpreter and the engine disagree.
    pub oracle_mismatches: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strawman: Option<StrawmanFinding>,
}

impl ChainVerification {
    pub fn passed(&self) -> bool {
        self.all_similar && self.oracle_mismatches.is_empty()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainSummary {
    pub n: usize,
    pub rounds: Round,
    pub length: usize,
    pub distinct_graphs: usize,
    pub memo_hits: usize,
    pub start_fingerprint: String,
    pub end_fingerprint: String,
    pub out_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<ChainVerification>,
    pub wall_time_ms: f64,
}

impl ChainSummary {
    pub fn exit_code(&self) -> i32 {
        match &self.verification {
            Some(v) if !v.passed() => 1,
            _ => 0,
        }
    }
}

#[derive(Serialize)]
struct IndexLine<'a> {
    index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    op: Option<&'a ChainOp>,
    file: String,
    fingerprint: String,
}

/// Lowercase hex SHA-256 of the graph's canonical text form.
pub fn fingerprint(g: &CommGraph) -> String {
    Sha256::digest(g.to_text().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn graph_file_name(index: usize) -> String {
    format!("g{index:05}.toml")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ChainCmdError + '_ {
    move |source| ChainCmdError::Io { path: path.to_path_buf(), source }
}

fn prepare_out_dir(out: &Path, force: bool) -> Result<(), ChainCmdError> {
    if out.exists() {
        if !out.is_dir() {
            return Err(ConfigError::field("out", "exists and is not a directory").into());
        }
        let non_empty = fs::read_dir(out).map_err(io_err(out))?.next().is_some();
        if non_empty && !force {
            return Err(ConfigError::field("out", "directory is not empty (pass --force to overwrite)").into());
        }
        let graphs = out.join(GRAPH_DIR);
        if graphs.exists() {
            fs::remove_dir_all(&graphs).map_err(io_err(&graphs))?;
        }
    }
    let graphs = out.join(GRAPH_DIR);
    fs::create_dir_all(&graphs).map_err(io_err(&graphs))
}

fn write_chain(chain: &Chain, out: &Path) -> Result<(), ChainCmdError> {
    let mut index = String::new();
    let ops = std::iter::once(None).chain(chain.steps.iter().map(|s| Some(&s.op)));
    for (i, (g, op)) in chain.graphs().zip(ops).enumerate() {
        let file = format!("{GRAPH_DIR}/{}", graph_file_name(i));
        let path = out.join(&file);
        fs::write(&path, g.to_text()).map_err(io_err(&path))?;
        let line = IndexLine { index: i, op, file, fingerprint: fingerprint(g) };
        index.push_str(&serde_json::to_string(&line).expect("index line serializes"));
        index.push('\n');
    }
    let path = out.join(CHAIN_INDEX);
    fs::write(&path, index).map_err(io_err(&path))
}

fn verify(chain: &Chain) -> Result<ChainVerification, ChainError> {
    let report = verify_chain(chain, &FullInformation)?;
    let failing_pairs = report.pairs.iter().enumerate().filter(|(_, p)| !p.similar).map(|(i, _)| i).collect();
    Ok(ChainVerification {
        all_similar: report.all_similar(),
        failing_pairs,
        max_differing: report.max_differing(),
        oracle_mismatches: oracle_scan(chain, &FullInformation)?,
        strawman: strawman_in(chain, &report),
    })
}

/// Builds the full chain for `(n, R)`, writes one graph file per step plus
/// an index and a summary, and optionally verifies it.
pub fn run_chain(opts: &ChainOptions) -> Result<ChainSummary, ChainCmdError> {
    if opts.rounds == 0 {
        return Err(ConfigError::field("rounds", "must be at least 1").into());
    }
    if opts.n < 2 {
        return Err(ConfigError::field("n", "must be at least 2").into());
    }
    opts.limits.check(opts.n, opts.rounds)?;
    let started = Instant::now();
    let mut builder = ChainBuilder::new(opts.limits);
    let chain = builder.full_chain(opts.n, opts.rounds)?;
    prepare_out_dir(&opts.out, opts.force)?;
    write_chain(&chain, &opts.out)?;
    let verification = if opts.verify { Some(verify(&chain)?) } else { None };
    let distinct: std::collections::HashSet<&CommGraph> = chain.graphs().collect();
    let summary = ChainSummary {
        n: opts.n,
        rounds: opts.rounds,
        length: chain.len(),
        distinct_graphs: distinct.len(),
        memo_hits: builder.memo_hits(),
        start_fingerprint: fingerprint(&chain.start),
        end_fingerprint: fingerprint(chain.end()),
        out_dir: opts.out.clone(),
        verification,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    let path = opts.out.join(CHAIN_SUMMARY);
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(summary)
}

/// Parses a `MAX_N,MAX_R` override of the chain size caps.
pub fn parse_limits(text: &str) -> Result<ChainLimits, ConfigError> {
    let bad = || ConfigError::field("SIMCTL_MAX_CHAIN", format!("expected MAX_N,MAX_R, got {text:?}"));
    let (n, r) = text.split_once(',').ok_or_else(bad)?;
    Ok(ChainLimits { max_n: n.trim().parse().map_err(|_| bad())?, max_rounds: r.trim().parse().map_err(|_| bad())? })
}
