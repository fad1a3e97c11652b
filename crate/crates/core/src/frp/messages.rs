use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::formula::Binding;
use crate::services::{Commitment, Observation, SituationReport};

pub type TxnId = u32;
pub type StepId = String;

/// Task Manager to provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Directive {
    Invoke { commitment: Commitment },
    /// Run a cognitive service over `scope` and report what holds.
    Diagnose {
        commitment: Commitment,
        scope: BTreeSet<String>,
        probe: Vec<crate::formula::Tuple>,
    },
    Cancel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultReason {
    /// The provider broke down while executing.
    Breakdown,
    /// The committed precondition did not hold when execution was due.
    PreconditionUnmet,
    /// The commitment expired before execution started.
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fault {
    pub reason: FaultReason,
    /// Atoms whose truth the provider reports after the failure. `None`
    /// when the fault carries no description.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<Vec<Observation>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticalSituationNotice {
    pub safeguard: String,
    pub binding: Binding,
    pub activation: u32,
    /// The sender handles the situation itself.
    pub self_resolving: bool,
}

/// Provider to Task Manager.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServiceEvent {
    Progress { percent: u8 },
    Completed,
    Canceled,
    Fault { fault: Fault },
    Situation { report: SituationReport },
    CriticalNotice { notice: CriticalSituationNotice },
}

impl ServiceEvent {
    pub fn name(&self) -> &'static str {
        match self {
            ServiceEvent::Progress { .. } => "progress",
            ServiceEvent::Completed => "completed",
            ServiceEvent::Canceled => "canceled",
            ServiceEvent::Fault { .. } => "fault",
            ServiceEvent::Situation { .. } => "situation_report",
            ServiceEvent::CriticalNotice { .. } => "critical_notice",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Directive(Directive),
    Event(ServiceEvent),
}

/// A message on the simulation bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub seq: u64,
    pub sent_at: u64,
    pub deliver_at: u64,
    pub from: String,
    pub to: String,
    pub txn: TxnId,
    pub step: StepId,
    pub payload: Payload,
}
