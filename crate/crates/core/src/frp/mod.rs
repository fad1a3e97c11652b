//! Failure Recovery Protocol: step state machines, protocol messages and
//! transactions with compensation and re-planning.

mod manager;
mod messages;
mod state;
mod transaction;

pub use messages::{
    CriticalSituationNotice, Directive, Envelope, Fault, FaultReason, Payload, ServiceEvent, StepId, TxnId,
};
pub use state::{transition, ProtocolViolation, StepEvent, StepState};
pub use transaction::{Outcome, Phase, StepRecord, Transaction, TxnKind};
