use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::frp::{StepId, StepState, TxnId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq: u64,
    pub tick: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub txn: Option<TxnId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<StepId>,
    pub actor: String,
    pub event: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_before: Option<StepState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_after: Option<StepState>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub detail: Value,
}

/// Append-only event log of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends a record and returns its sequence number.
    pub fn push(&mut self, mut r: TraceRecord) -> u64 {
        r.seq = self.records.len() as u64 + 1;
        let seq = r.seq;
        self.records.push(r);
        seq
    }

    pub fn events<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a TraceRecord> + 'a {
        self.records.iter().filter(move |r| r.event == name)
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}
