use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{Commitment, Observation, Provider, ServiceKind, SituationReport};
use crate::formula::{evaluate, Binding, Formula, Tuple};
use crate::frp::{Directive, Fault, FaultReason, ServiceEvent, StepId, TxnId};
use crate::ontology::WorldMap;
use crate::planner::{apply_effect_in_place, apply_writes, effect_writes, Change, Write};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FailureMode {
    /// Stop and report a fault describing what changed.
    FaultWithDescription,
    /// Stop sending anything, forever. A non-zero fraction of the effect's
    /// positive atoms is applied first.
    SilentFailure {
        #[serde(default)]
        fraction: f64,
    },
    /// Apply part of the effect, then report a fault.
    PartialEffect { fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// First execution running at or after this tick.
    Tick(u64),
    /// The n-th execution started by the provider, counting from 1.
    Ordinal(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub id: String,
    pub provider: String,
    pub trigger: Trigger,
    #[serde(flatten)]
    pub mode: FailureMode,
}

/// A safe-making action a provider runs on its own initiative.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeAction {
    pub activation: u32,
    pub effect: Formula,
    pub duration: u32,
}

#[derive(Debug, Clone, PartialEq)]
enum JobKind {
    Work,
    Diagnose {
        scope: BTreeSet<String>,
        probe: Vec<Tuple>,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Job {
    txn: TxnId,
    step: StepId,
    commitment: Commitment,
    kind: JobKind,
    duration: u32,
    elapsed: u32,
    ordinal: u32,
}

/// What a provider did during one call, for the simulator to deliver and log.
#[derive(Debug, Clone, PartialEq)]
pub enum ActorOutput {
    Send {
        txn: TxnId,
        step: StepId,
        event: ServiceEvent,
    },
    /// The authoritative map changed.
    Changed {
        txn: TxnId,
        step: StepId,
        reason: &'static str,
        changes: Vec<Change>,
    },
    SafeActionDone {
        activation: u32,
        changes: Vec<Change>,
    },
    FailureFired {
        failure: String,
        txn: TxnId,
        step: StepId,
    },
    WentSilent,
}

#[derive(Debug, Clone)]
pub struct ProviderActor {
    pub spec: Provider,
    failures: Vec<(FailureEntry, bool)>,
    dead: bool,
    started: u32,
    running: Vec<Job>,
    queued: VecDeque<Job>,
    safe: Option<(SafeAction, u32)>,
}

impl ProviderActor {
    pub fn new(spec: Provider, failures: Vec<FailureEntry>) -> Self {
        ProviderActor {
            spec,
            failures: failures.into_iter().map(|f| (f, false)).collect(),
            dead: false,
            started: 0,
            running: Vec::new(),
            queued: VecDeque::new(),
            safe: None,
        }
    }

    pub fn id(&self) -> &str {
        &self.spec.id
    }

    pub fn is_dead(&self) -> bool {
        self.dead
    }

    /// Jobs held, running or waiting.
    pub fn load(&self) -> u32 {
        (self.running.len() + self.queued.len()) as u32
    }

    pub fn is_busy(&self) -> bool {
        self.load() > 0 || self.safe.is_some()
    }

    /// (transaction, step, service type) of every held job.
    pub fn jobs(&self) -> impl Iterator<Item = (TxnId, &str, &str)> {
        self.running
            .iter()
            .chain(self.queued.iter())
            .map(|j| (j.txn, j.step.as_str(), j.commitment.service_type.as_str()))
    }

    pub fn has_safe_action(&self) -> bool {
        self.safe.is_some()
    }

    pub fn start_safe_action(&mut self, action: SafeAction) {
        let d = action.duration.max(1);
        self.safe = Some((action, d));
    }

    /// Handles a directive delivered by the bus.
    pub fn receive(&mut self, txn: TxnId, step: StepId, d: Directive, extra_ticks: u32) -> Vec<ActorOutput> {
        if self.dead {
            return Vec::new();
        }
        match d {
            Directive::Invoke { commitment } => {
                let duration = commitment.agreed_duration.max(1) + extra_ticks;
                self.queued.push_back(Job {
                    txn,
                    step,
                    commitment,
                    kind: JobKind::Work,
                    duration,
                    elapsed: 0,
                    ordinal: 0,
                });
                Vec::new()
            }
            Directive::Diagnose {
                commitment,
                scope,
                probe,
            } => {
                let duration = commitment.agreed_duration.max(1) + extra_ticks;
                self.queued.push_back(Job {
                    txn,
                    step,
                    commitment,
                    kind: JobKind::Diagnose { scope, probe },
                    duration,
                    elapsed: 0,
                    ordinal: 0,
                });
                Vec::new()
            }
            Directive::Cancel => {
                let before = self.running.len() + self.queued.len();
                self.running.retain(|j| !(j.txn == txn && j.step == step));
                self.queued.retain(|j| !(j.txn == txn && j.step == step));
                if self.running.len() + self.queued.len() < before {
                    vec![ActorOutput::Send {
                        txn,
                        step,
                        event: ServiceEvent::Canceled,
                    }]
                } else {
                    Vec::new()
                }
            }
        }
    }

    /// Advances every held job by one tick.
    pub fn advance(&mut self, now: u64, world: &mut WorldMap) -> Vec<ActorOutput> {
        let mut out = Vec::new();
        if self.dead {
            return out;
        }

        if let Some(i) = self.due_tick_failure(now, true) {
            // A silent failure scheduled by tick strikes whether or not work is held.
            self.failures[i].1 = true;
            if let Some(job) = self.running.first().cloned() {
                self.fire(i, job, world, &mut out);
            } else {
                self.dead = true;
                out.push(ActorOutput::WentSilent);
            }
            return out;
        }

        if let Some((action, left)) = self.safe.as_mut() {
            *left -= 1;
            if *left == 0 {
                let action = action.clone();
                self.safe = None;
                let changes = apply_effect_in_place(world, &action.effect).unwrap_or_default();
                out.push(ActorOutput::SafeActionDone {
                    activation: action.activation,
                    changes,
                });
            } else {
                for j in self.running.iter().chain(self.queued.iter()) {
                    out.push(progress(j));
                }
                return out;
            }
        }

        while (self.running.len() as u32) < self.spec.capacity {
            let Some(mut job) = self.queued.pop_front() else { break };
            self.started += 1;
            job.ordinal = self.started;
            if let Some(fault) = self.refuse_to_start(&job, now, world) {
                out.push(ActorOutput::Send {
                    txn: job.txn,
                    step: job.step,
                    event: ServiceEvent::Fault { fault },
                });
                continue;
            }
            self.running.push(job);
        }

        let mut still_running = Vec::new();
        for mut job in std::mem::take(&mut self.running) {
            if self.dead {
                break;
            }
            job.elapsed += 1;
            if let Some(i) = self.due_failure(&job, now) {
                self.failures[i].1 = true;
                self.fire(i, job, world, &mut out);
                continue;
            }
            if job.elapsed >= job.duration {
                self.complete(job, now, world, &mut out);
            } else {
                out.push(progress(&job));
                still_running.push(job);
            }
        }
        if self.dead {
            self.running.clear();
            self.queued.clear();
            return out;
        }
        self.running = still_running;
        for j in &self.queued {
            out.push(progress(j));
        }
        out
    }

    fn refuse_to_start(&self, job: &Job, now: u64, world: &WorldMap) -> Option<Fault> {
        if job.commitment.expiry < now {
            return Some(Fault {
                reason: FaultReason::Expired,
                description: Some(Vec::new()),
            });
        }
        let pre = &job.commitment.task.precondition;
        if job.kind == JobKind::Work && !evaluate(pre, world, &Binding::new()).unwrap_or(false) {
            // What failed, plus whatever the provider can see of the objects involved.
            let objects = pre.objects();
            let observed = pre
                .atoms()
                .into_iter()
                .filter_map(|a| a.positive().to_tuple())
                .chain(world.tuples_mentioning(&objects).cloned())
                .map(|t| Observation {
                    holds: world.holds(&t),
                    atom: t,
                })
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            return Some(Fault {
                reason: FaultReason::PreconditionUnmet,
                description: Some(observed),
            });
        }
        None
    }

    fn due_tick_failure(&self, now: u64, silent: bool) -> Option<usize> {
        self.failures.iter().position(|(f, fired)| {
            !fired
                && matches!(f.trigger, Trigger::Tick(t) if t <= now)
                && matches!(f.mode, FailureMode::SilentFailure { .. }) == silent
        })
    }

    fn due_failure(&self, job: &Job, now: u64) -> Option<usize> {
        if job.kind != JobKind::Work {
            return None;
        }
        if let Some(i) = self.due_tick_failure(now, false) {
            return Some(i);
        }
        let midpoint = (job.duration / 2).max(1);
        self.failures.iter().position(|(f, fired)| {
            !fired && f.trigger == Trigger::Ordinal(job.ordinal) && job.elapsed >= midpoint
        })
    }

    fn fire(&mut self, i: usize, job: Job, world: &mut WorldMap, out: &mut Vec<ActorOutput>) {
        let entry = self.failures[i].0.clone();
        out.push(ActorOutput::FailureFired {
            failure: entry.id.clone(),
            txn: job.txn,
            step: job.step.clone(),
        });
        let fraction = match entry.mode {
            FailureMode::FaultWithDescription => 0.0,
            FailureMode::SilentFailure { fraction } | FailureMode::PartialEffect { fraction } => fraction,
        };
        let changes = if fraction > 0.0 {
            apply_partial(&job.commitment.task.effect, fraction, world)
        } else {
            Vec::new()
        };
        if !changes.is_empty() {
            out.push(ActorOutput::Changed {
                txn: job.txn,
                step: job.step.clone(),
                reason: "partial_effect",
                changes: changes.clone(),
            });
        }
        match entry.mode {
            FailureMode::SilentFailure { .. } => {
                self.dead = true;
                out.push(ActorOutput::WentSilent);
            }
            _ => {
                let description = changes
                    .iter()
                    .filter_map(|c| match c {
                        Change::Assert { atom } => Some(Observation {
                            atom: atom.clone(),
                            holds: true,
                        }),
                        Change::Retract { atom } => Some(Observation {
                            atom: atom.clone(),
                            holds: false,
                        }),
                        Change::Assign { .. } => None,
                    })
                    .collect();
                out.push(ActorOutput::Send {
                    txn: job.txn,
                    step: job.step,
                    event: ServiceEvent::Fault {
                        fault: Fault {
                            reason: FaultReason::Breakdown,
                            description: Some(description),
                        },
                    },
                });
            }
        }
    }

    fn complete(&mut self, job: Job, now: u64, world: &mut WorldMap, out: &mut Vec<ActorOutput>) {
        match (&job.kind, job.commitment.kind) {
            (JobKind::Diagnose { scope, probe }, _) => {
                let report = SituationReport::observe(world, scope, probe, &self.spec.id, now);
                out.push(ActorOutput::Send {
                    txn: job.txn,
                    step: job.step,
                    event: ServiceEvent::Situation { report },
                });
            }
            (JobKind::Work, ServiceKind::Physical) => {
                match apply_effect_in_place(world, &job.commitment.task.effect) {
                    Ok(changes) => {
                        out.push(ActorOutput::Changed {
                            txn: job.txn,
                            step: job.step.clone(),
                            reason: "effect",
                            changes,
                        });
                        out.push(ActorOutput::Send {
                            txn: job.txn,
                            step: job.step,
                            event: ServiceEvent::Completed,
                        });
                    }
                    Err(_) => out.push(ActorOutput::Send {
                        txn: job.txn,
                        step: job.step,
                        event: ServiceEvent::Fault {
                            fault: Fault {
                                reason: FaultReason::Breakdown,
                                description: Some(Vec::new()),
                            },
                        },
                    }),
                }
            }
            (JobKind::Work, _) => out.push(ActorOutput::Send {
                txn: job.txn,
                step: job.step,
                event: ServiceEvent::Completed,
            }),
        }
    }
}

fn progress(job: &Job) -> ActorOutput {
    let percent = (job.elapsed * 100 / job.duration.max(1)).min(99) as u8;
    ActorOutput::Send {
        txn: job.txn,
        step: job.step.clone(),
        event: ServiceEvent::Progress { percent },
    }
}

/// Asserts the first ⌈fraction·n⌉ of the effect's n positive atoms in
/// lexicographic order.
fn apply_partial(effect: &Formula, fraction: f64, world: &mut WorldMap) -> Vec<Change> {
    let Ok(writes) = effect_writes(effect) else {
        return Vec::new();
    };
    let positives = partial_subset(&writes, fraction);
    apply_writes(world, &positives)
}

pub(crate) fn partial_subset(writes: &[Write], fraction: f64) -> Vec<Write> {
    let mut positives: Vec<Write> = writes
        .iter()
        .filter(|w| matches!(w, Write::Truth(_, true)))
        .cloned()
        .collect();
    positives.sort();
    let n = positives.len();
    let k = ((fraction.clamp(0.0, 1.0) * n as f64).ceil() as usize).min(n);
    positives.truncate(k);
    positives
}
