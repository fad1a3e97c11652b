use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StepState {
    Arranged,
    Invoked,
    Active,
    Completing,
    Completed,
    Canceling,
    Canceled,
    Faulted,
    Compensating,
    Compensated,
    CompensationFailed,
    Abandoned,
}

impl StepState {
    pub const ALL: [StepState; 12] = [
        StepState::Arranged,
        StepState::Invoked,
        StepState::Active,
        StepState::Completing,
        StepState::Completed,
        StepState::Canceling,
        StepState::Canceled,
        StepState::Faulted,
        StepState::Compensating,
        StepState::Compensated,
        StepState::CompensationFailed,
        StepState::Abandoned,
    ];

    /// States a step may legitimately end a transaction in.
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            StepState::Completed
                | StepState::Canceled
                | StepState::Compensated
                | StepState::CompensationFailed
                | StepState::Abandoned
                | StepState::Faulted
        )
    }

    /// Waiting on a provider.
    pub fn is_in_flight(self) -> bool {
        matches!(
            self,
            StepState::Invoked | StepState::Active | StepState::Canceling | StepState::Completing
        )
    }
}

impl fmt::Display for StepState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Inputs to a step's state machine: provider messages and Task Manager commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StepEvent {
    Invoke,
    Cancel,
    Compensate,
    Progress,
    Completed,
    Acknowledge,
    Canceled,
    Fault,
    Compensated,
    CompensationFailed,
    Timeout,
    Abort,
}

impl StepEvent {
    pub const ALL: [StepEvent; 12] = [
        StepEvent::Invoke,
        StepEvent::Cancel,
        StepEvent::Compensate,
        StepEvent::Progress,
        StepEvent::Completed,
        StepEvent::Acknowledge,
        StepEvent::Canceled,
        StepEvent::Fault,
        StepEvent::Compensated,
        StepEvent::CompensationFailed,
        StepEvent::Timeout,
        StepEvent::Abort,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("protocol violation: {event:?} in state {state:?}")]
pub struct ProtocolViolation {
    pub state: StepState,
    pub event: StepEvent,
}

/// The step transition table.
pub fn transition(s: StepState, e: StepEvent) -> Result<StepState, ProtocolViolation> {
    use StepEvent as E;
    use StepState as S;
    let next = match (s, e) {
        (S::Arranged, E::Invoke) => S::Invoked,
        (S::Invoked | S::Active, E::Progress) => S::Active,
        (S::Invoked | S::Active, E::Completed) => S::Completing,
        (S::Completing, E::Acknowledge) => S::Completed,
        (S::Invoked | S::Active, E::Fault | E::Timeout) => S::Faulted,
        (S::Invoked | S::Active, E::Cancel) => S::Canceling,
        (S::Canceling, E::Canceled) => S::Canceled,
        // A cancel that crosses a completion or progress report on the wire.
        (S::Canceling, E::Progress) => S::Canceling,
        (S::Canceling, E::Completed) => S::Completed,
        // Fault or silence while canceling ends the step as canceled.
        (S::Canceling, E::Fault | E::Timeout) => S::Canceled,
        (S::Faulted | S::Completed, E::Compensate) => S::Compensating,
        (S::Compensating, E::Compensated) => S::Compensated,
        (S::Compensating, E::CompensationFailed) => S::CompensationFailed,
        (s, E::Abort) if !s.is_terminal() => S::Abandoned,
        _ => return Err(ProtocolViolation { state: s, event: e }),
    };
    Ok(next)
}
