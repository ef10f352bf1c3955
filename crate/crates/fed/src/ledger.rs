//! Byte-level communication accounting. The host records every frame it
//! sends or receives; phases within a round are maximal runs of same-
//! direction traffic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HostToGuest,
    GuestToHost,
}

/// Logical grouping for phase assertions: setup, one entry per boosting
/// round, inference batches, and the trailing model export.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Setup,
    Round(u64),
    Inference(u64),
    Export,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LedgerEvent {
    pub stage: Stage,
    pub direction: Direction,
    pub kind: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CommLedger {
    events: Vec<LedgerEvent>,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, stage: Stage, direction: Direction, kind: &str, bytes: usize) {
        self.events.push(LedgerEvent { stage, direction, kind: kind.to_string(), bytes });
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    pub fn total_bytes(&self) -> usize {
        self.events.iter().map(|e| e.bytes).sum()
    }

    pub fn total_messages(&self) -> usize {
        self.events.len()
    }

    pub fn bytes_in(&self, stage: Stage) -> usize {
        self.events.iter().filter(|e| e.stage == stage).map(|e| e.bytes).sum()
    }

    /// Number of direction alternations within a stage: the protocol's
    /// communication phases.
    pub fn phases_in(&self, stage: Stage) -> usize {
        let mut phases = 0;
        let mut last: Option<Direction> = None;
        for e in self.events.iter().filter(|e| e.stage == stage) {
            if last != Some(e.direction) {
                phases += 1;
                last = Some(e.direction);
            }
        }
        phases
    }

    pub fn rounds(&self) -> Vec<u64> {
        let mut rounds: Vec<u64> = self
            .events
            .iter()
            .filter_map(|e| match e.stage {
                Stage::Round(r) => Some(r),
                _ => None,
            })
            .collect();
        rounds.sort_unstable();
        rounds.dedup();
        rounds
    }

    /// (message count, byte total) per message kind.
    pub fn by_kind(&self) -> BTreeMap<String, (usize, usize)> {
        let mut out: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for e in &self.events {
            let entry = out.entry(e.kind.clone()).or_default();
            entry.0 += 1;
            entry.1 += e.bytes;
        }
        out
    }

    pub fn merge(&mut self, other: CommLedger) {
        self.events.extend(other.events);
    }
}
