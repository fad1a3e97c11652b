use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Fault, StepId, StepState, TxnId};
use crate::formula::Task;
use crate::planner::Workflow;
use crate::services::Commitment;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TxnKind {
    /// A submitted task, by submission index.
    Task { index: usize },
    /// Undoes one completed or faulted step of `parent`.
    Compensation { parent: TxnId, step: StepId },
    /// Tries one safe alternative of a safeguard activation.
    Resolution { activation: u32, alternative: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Unable,
    Canceled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub id: StepId,
    pub state: StepState,
    pub service_type: String,
    pub commitment: Commitment,
    /// Restoring task, fixed when the step is invoked.
    pub compensation: Option<Task>,
    pub last_heard: u64,
    pub completed_at: Option<u64>,
    pub fault: Option<Fault>,
    /// Faulted without saying what happened.
    pub needs_diagnosis: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum Phase {
    /// Not yet planned.
    Planning,
    Running,
    /// Waiting for in-flight steps to settle before recovering.
    Draining,
    /// Halted by a safeguard activation.
    Paused,
    Diagnosing {
        step: StepId,
        provider: String,
        deadline: u64,
    },
    Compensating {
        queue: Vec<StepId>,
        current: Option<(StepId, TxnId)>,
    },
    Replanning,
    WindingDown {
        outcome: Outcome,
        canceled_sent: bool,
        queue: Option<Vec<StepId>>,
        current: Option<(StepId, TxnId)>,
    },
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: TxnId,
    pub kind: TxnKind,
    pub task: Task,
    pub submitted_at: u64,
    pub phase: Phase,
    pub workflow: Option<Workflow>,
    /// Every step ever arranged, across replans.
    pub steps: BTreeMap<StepId, StepRecord>,
    /// Steps of the current workflow.
    pub active: Vec<StepId>,
    pub completion_order: Vec<StepId>,
    pub excluded: BTreeSet<String>,
    pub replans: u32,
    pub next_step: usize,
    /// Faulted steps not yet recovered from.
    pub pending: BTreeSet<StepId>,
    pub paused_by: BTreeSet<u32>,
    pub cancel_requested: bool,
    pub unresolvable: bool,
    pub outcome: Option<Outcome>,
    pub finished_at: Option<u64>,
}

impl Transaction {
    pub fn new(id: TxnId, kind: TxnKind, task: Task, now: u64) -> Self {
        Transaction {
            id,
            kind,
            task,
            submitted_at: now,
            phase: Phase::Planning,
            workflow: None,
            steps: BTreeMap::new(),
            active: Vec::new(),
            completion_order: Vec::new(),
            excluded: BTreeSet::new(),
            replans: 0,
            next_step: 1,
            pending: BTreeSet::new(),
            paused_by: BTreeSet::new(),
            cancel_requested: false,
            unresolvable: false,
            outcome: None,
            finished_at: None,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.phase == Phase::Finished
    }

    pub fn is_task(&self) -> bool {
        matches!(self.kind, TxnKind::Task { .. })
    }

    pub fn in_flight(&self) -> impl Iterator<Item = &StepRecord> {
        self.steps.values().filter(|s| s.state.is_in_flight())
    }

    /// Steps of the current workflow that must complete before `id` runs.
    pub fn predecessors(&self, id: &str) -> Vec<StepId> {
        self.workflow
            .as_ref()
            .map(|w| w.plan.predecessors(id).cloned().collect())
            .unwrap_or_default()
    }
}
