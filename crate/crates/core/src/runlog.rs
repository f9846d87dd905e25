//! Line-delimited JSON run log: one header line, then one line per
//! candidate event.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::archspace::BackboneSkeleton;
use crate::costmodel::HardwareConstraints;
use crate::error::{Error, Result};
use crate::evolution::{Candidate, EvolutionParams, Origin};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunHeader {
    pub record: HeaderTag,
    pub run_id: String,
    pub seed: u64,
    pub params: EvolutionParams,
    pub constraints: HardwareConstraints,
    pub skeleton_hash: String,
    pub skeleton: BackboneSkeleton,
    pub evaluator: String,
    pub code_version: String,
    /// Effective run configuration, echoed by the command-line driver.
    #[serde(default)]
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeaderTag {
    Header,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    /// A candidate was evaluated for the first time in this run.
    Evaluated,
    /// Population snapshot at the end of a generation, with rank.
    Member,
    /// Final result, with rank.
    TopN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateRecord {
    pub run_id: String,
    pub event: Event,
    pub generation: usize,
    pub rank: Option<usize>,
    pub origin: Origin,
    pub config: String,
    pub params: u64,
    pub flops: u64,
    pub fitness: f64,
    pub wall_ms: Option<u64>,
}

impl CandidateRecord {
    pub fn from_candidate(run_id: &str, event: Event, rank: Option<usize>, c: &Candidate) -> Self {
        CandidateRecord {
            run_id: run_id.to_string(),
            event,
            generation: c.generation,
            rank,
            origin: c.origin,
            config: c.config.encode(),
            params: c.cost.params,
            flops: c.cost.flops,
            fitness: c.fitness.score(),
            wall_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub header: RunHeader,
    pub records: Vec<CandidateRecord>,
}

impl RunLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            // infallible for these plain structs
            let _ = writeln!(out, "{}", serde_json::to_string(r).expect("record serializes"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::Format("run log is empty".into()))?;
        let header: RunHeader =
            serde_json::from_str(first).map_err(|e| Error::Format(format!("run log line 1: {e}")))?;
        let records = lines
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Format(format!("run log line {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<CandidateRecord>>>()?;
        Ok(RunLog { header, records })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        RunLog::parse(&std::fs::read_to_string(path)?)
    }

    /// Final top-n records in rank order.
    pub fn top_n(&self) -> Vec<&CandidateRecord> {
        let mut top: Vec<_> = self.records.iter().filter(|r| r.event == Event::TopN).collect();
        top.sort_by_key(|r| r.rank);
        top
    }
}
