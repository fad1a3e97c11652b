//! Deterministic discrete-event simulation: the authoritative map, provider
//! actors, a message bus with one tick of latency, and the Task Manager.

mod repository;
mod trace;

use std::collections::{BTreeMap, BTreeSet};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use repository::Repository;
pub use trace::{Trace, TraceRecord};

use crate::formula::{evaluate, satisfying_bindings, substitute, Binding, ComputedRelation, Formula, Task};
use crate::frp::{
    CriticalSituationNotice, Directive, Envelope, Outcome, Payload, ServiceEvent, StepId, StepState,
    Transaction, TxnId, TxnKind,
};
use crate::ontology::{Ontology, WorldMap};
use crate::planner::{apply_effect_in_place, project_state, Change, DEFAULT_SEARCH_BUDGET};
use crate::registry::{Registry, RegistryError};
use crate::safeguards::{AchievabilityReport, Activation, ActivationStatus, Safeguard, SafeguardError, SafeguardStore};
use crate::services::{handle_intention, FailureEntry, Intention, Provider, ProviderActor, SafeAction, ServiceKind};

pub const TASK_MANAGER: &str = "task-manager";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub max_ticks: u64,
    /// Silence after which an in-flight step is considered failed.
    pub timeout_ticks: u64,
    /// Ticks within which a critical situation must be made safe.
    pub response_bound: u64,
    pub search_budget: usize,
    /// Objects of these types (or subtypes) are regions.
    pub region_types: Vec<String>,
    pub max_replans: u32,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            max_ticks: 1000,
            timeout_ticks: 10,
            response_bound: 20,
            search_budget: DEFAULT_SEARCH_BUDGET,
            region_types: vec!["Region".into()],
            max_replans: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSubmission {
    #[serde(flatten)]
    pub task: Task,
    #[serde(default)]
    pub submit_tick: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cancel_tick: Option<u64>,
}

impl TaskSubmission {
    pub fn at(task: Task, submit_tick: u64) -> Self {
        TaskSubmission {
            task,
            submit_tick,
            cancel_tick: None,
        }
    }
}

/// A change to the world nobody planned, applied at the start of a tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousEvent {
    pub tick: u64,
    pub effect: Formula,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SetupError {
    #[error("provider `{provider}`: {source}")]
    Registry {
        provider: String,
        #[source]
        source: RegistryError,
    },
    #[error("duplicate provider id `{0}`")]
    DuplicateProvider(String),
    #[error("failure `{failure}` names unknown provider `{provider}`")]
    UnknownProvider { failure: String, provider: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskVerdict {
    pub index: usize,
    pub txn: Option<TxnId>,
    pub outcome: Option<Outcome>,
    pub submitted_at: u64,
    pub finished_at: Option<u64>,
    pub ticks: Option<u64>,
    pub replans: u32,
    pub steps_completed: usize,
    pub safeguard_activations: usize,
    pub safeguard_resolutions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub ticks: u64,
    pub horizon_exceeded: bool,
    pub tasks: Vec<TaskVerdict>,
    pub activations: Vec<Activation>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ResolutionState {
    pub alternative: usize,
    pub child: Option<TxnId>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub(crate) config: Config,
    pub(crate) ontology: Ontology,
    pub(crate) world: WorldMap,
    pub(crate) repo: Repository,
    pub(crate) registry: Registry,
    pub(crate) specs: BTreeMap<String, Provider>,
    pub(crate) actors: BTreeMap<String, ProviderActor>,
    pub(crate) safeguards: SafeguardStore,
    pub(crate) regions: BTreeSet<String>,
    pub(crate) trace: Trace,
    pub(crate) txns: BTreeMap<TxnId, Transaction>,
    pub(crate) resolutions: BTreeMap<u32, ResolutionState>,
    pub(crate) now: u64,
    bus: Vec<Envelope>,
    bus_seq: u64,
    next_txn: TxnId,
    self_resolvers: BTreeMap<u32, usize>,
    submissions: Vec<TaskSubmission>,
    task_txns: Vec<Option<TxnId>>,
    events: Vec<ExogenousEvent>,
    rng: ChaCha8Rng,
    history: Vec<WorldMap>,
    horizon_exceeded: bool,
}

impl Simulation {
    pub fn new(
        config: Config,
        ontology: Ontology,
        world: WorldMap,
        providers: Vec<Provider>,
        failures: Vec<FailureEntry>,
    ) -> Result<Self, SetupError> {
        let mut registry = Registry::new();
        let mut specs = BTreeMap::new();
        for p in providers {
            registry
                .publish(&p, &ontology, 0)
                .map_err(|source| SetupError::Registry {
                    provider: p.id.clone(),
                    source,
                })?;
            if specs.insert(p.id.clone(), p.clone()).is_some() {
                return Err(SetupError::DuplicateProvider(p.id));
            }
        }
        let mut by_provider: BTreeMap<String, Vec<FailureEntry>> = BTreeMap::new();
        for f in failures {
            if !specs.contains_key(&f.provider) {
                return Err(SetupError::UnknownProvider {
                    failure: f.id,
                    provider: f.provider,
                });
            }
            by_provider.entry(f.provider.clone()).or_default().push(f);
        }
        let actors = specs
            .values()
            .map(|p| {
                let fs = by_provider.remove(&p.id).unwrap_or_default();
                (p.id.clone(), ProviderActor::new(p.clone(), fs))
            })
            .collect();
        let regions = world
            .objects()
            .filter(|o| {
                config
                    .region_types
                    .iter()
                    .any(|r| ontology.is_subtype(&o.type_name, r).unwrap_or(false))
            })
            .map(|o| o.id.clone())
            .collect();
        Ok(Simulation {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            repo: Repository::new(&world),
            config,
            ontology,
            world,
            registry,
            specs,
            actors,
            safeguards: SafeguardStore::new(),
            regions,
            trace: Trace::default(),
            txns: BTreeMap::new(),
            resolutions: BTreeMap::new(),
            now: 0,
            bus: Vec::new(),
            bus_seq: 0,
            next_txn: 1,
            self_resolvers: BTreeMap::new(),
            submissions: Vec::new(),
            task_txns: Vec::new(),
            events: Vec::new(),
            history: Vec::new(),
            horizon_exceeded: false,
        })
    }

    pub fn add_safeguard(&mut self, sg: Safeguard) -> Result<AchievabilityReport, SafeguardError> {
        let report = self
            .safeguards
            .add_safeguard(sg, &self.registry, Some(&self.ontology))?;
        for w in report.warnings() {
            self.record(None, None, "safeguards", "achievability_warning", json!({ "message": w }));
        }
        Ok(report)
    }

    /// Queues a task; returns its submission index.
    pub fn submit(&mut self, s: TaskSubmission) -> usize {
        self.submissions.push(s);
        self.task_txns.push(None);
        self.submissions.len() - 1
    }

    pub fn schedule_event(&mut self, e: ExogenousEvent) {
        self.events.push(e);
    }

    /// Removes a provider's service from the registry. Commitments already
    /// made stay valid; later planning and arrangement no longer see it.
    pub fn withdraw(&mut self, provider: &str, service_type: &str) -> Result<(), RegistryError> {
        let id = self
            .registry
            .entries()
            .find(|e| e.provider == provider && e.description.type_name == service_type)
            .map(|e| e.id)
            .ok_or_else(|| RegistryError::UnknownService(provider.to_string(), service_type.to_string()))?;
        self.registry.unregister(id)?;
        self.record(None, None, provider, "withdrawn", json!({ "service": service_type }));
        Ok(())
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn world(&self) -> &WorldMap {
        &self.world
    }

    pub fn repository(&self) -> &Repository {
        &self.repo
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn ontology(&self) -> &Ontology {
        &self.ontology
    }

    pub fn regions(&self) -> &BTreeSet<String> {
        &self.regions
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn transactions(&self) -> impl Iterator<Item = &Transaction> {
        self.txns.values()
    }

    pub fn transaction(&self, id: TxnId) -> Option<&Transaction> {
        self.txns.get(&id)
    }

    pub fn task_transaction(&self, index: usize) -> Option<&Transaction> {
        self.txns.get(&self.task_txns.get(index).copied().flatten()?)
    }

    pub fn safeguards(&self) -> &SafeguardStore {
        &self.safeguards
    }

    /// The authoritative map at the end of every completed tick.
    pub fn history(&self) -> &[WorldMap] {
        &self.history
    }

    pub(crate) fn record(
        &mut self,
        txn: Option<TxnId>,
        step: Option<&str>,
        actor: &str,
        event: &str,
        detail: Value,
    ) -> u64 {
        self.trace.push(TraceRecord {
            seq: 0,
            tick: self.now,
            txn,
            step: step.map(str::to_string),
            actor: actor.to_string(),
            event: event.to_string(),
            state_before: None,
            state_after: None,
            detail,
        })
    }

    pub(crate) fn record_step(
        &mut self,
        txn: TxnId,
        step: &str,
        event: &str,
        before: StepState,
        after: StepState,
        detail: Value,
    ) -> u64 {
        self.trace.push(TraceRecord {
            seq: 0,
            tick: self.now,
            txn: Some(txn),
            step: Some(step.to_string()),
            actor: TASK_MANAGER.into(),
            event: event.to_string(),
            state_before: Some(before),
            state_after: Some(after),
            detail,
        })
    }

    pub(crate) fn send(&mut self, from: &str, to: &str, txn: TxnId, step: &str, payload: Payload) {
        self.bus_seq += 1;
        self.bus.push(Envelope {
            seq: self.bus_seq,
            sent_at: self.now,
            deliver_at: self.now + 1,
            from: from.into(),
            to: to.into(),
            txn,
            step: step.into(),
            payload,
        });
    }

    pub(crate) fn create_txn(&mut self, kind: TxnKind, task: Task) -> TxnId {
        let id = self.next_txn;
        self.next_txn += 1;
        let detail = json!({ "kind": kind, "task": task.to_string() });
        self.txns.insert(id, Transaction::new(id, kind, task, self.now));
        self.record(Some(id), None, TASK_MANAGER, "submitted", detail);
        id
    }

    /// Everything has settled: no pending input, open transaction, message,
    /// resolution or provider work.
    pub fn is_quiescent(&self) -> bool {
        self.submissions.iter().all(|s| s.submit_tick < self.now)
            && self.task_txns.iter().all(Option::is_some)
            && self.events.iter().all(|e| e.tick < self.now)
            && self.txns.values().all(Transaction::is_finished)
            && self.resolutions.is_empty()
            && self.bus.is_empty()
            && self.actors.values().all(|a| a.is_dead() || !a.is_busy())
            && self.safeguards.activations().iter().all(|a| !a.is_open())
    }

    /// Runs ticks until quiescence or the horizon.
    pub fn run(&mut self) -> RunReport {
        while !self.is_quiescent() {
            if self.now >= self.config.max_ticks {
                self.horizon_exceeded = true;
                self.record(None, None, "simulator", "horizon_exceeded", json!({ "max_ticks": self.config.max_ticks }));
                break;
            }
            self.step();
        }
        self.report()
    }

    pub fn report(&self) -> RunReport {
        let tasks = self
            .task_txns
            .iter()
            .enumerate()
            .map(|(index, id)| {
                let sub = &self.submissions[index];
                let txn = id.and_then(|id| self.txns.get(&id));
                let mine: Vec<&Activation> = self
                    .safeguards
                    .activations()
                    .iter()
                    .filter(|a| id.is_some_and(|id| a.enclosing.contains(&id)))
                    .collect();
                TaskVerdict {
                    index,
                    txn: *id,
                    outcome: txn.and_then(|t| t.outcome),
                    submitted_at: sub.submit_tick,
                    finished_at: txn.and_then(|t| t.finished_at),
                    ticks: txn.and_then(|t| t.finished_at.map(|f| f - t.submitted_at)),
                    replans: txn.map_or(0, |t| t.replans),
                    steps_completed: txn.map_or(0, |t| {
                        t.steps.values().filter(|s| s.completed_at.is_some()).count()
                    }),
                    safeguard_activations: mine.len(),
                    safeguard_resolutions: mine
                        .iter()
                        .filter(|a| matches!(a.status, ActivationStatus::Resolved { .. }))
                        .count(),
                }
            })
            .collect();
        RunReport {
            ticks: self.now,
            horizon_exceeded: self.horizon_exceeded,
            tasks,
            activations: self.safeguards.activations().to_vec(),
        }
    }

    /// Advances the simulation by one tick.
    pub fn step(&mut self) {
        let t = self.now;

        let due: Vec<ExogenousEvent> = self.events.iter().filter(|e| e.tick == t).cloned().collect();
        for e in due {
            let changes = apply_effect_in_place(&mut self.world, &e.effect).unwrap_or_default();
            let cause = self.record(None, None, "environment", "exogenous_event", json!({ "effect": e.effect.to_string() }));
            self.record_changes(cause, &changes);
        }

        for i in 0..self.submissions.len() {
            if self.submissions[i].submit_tick == t && self.task_txns[i].is_none() {
                let task = self.submissions[i].task.clone();
                let id = self.create_txn(TxnKind::Task { index: i }, task);
                self.task_txns[i] = Some(id);
            }
            if self.submissions[i].cancel_tick == Some(t) {
                if let Some(txn) = self.task_txns[i].and_then(|id| self.txns.get_mut(&id)) {
                    if !txn.is_finished() {
                        txn.cancel_requested = true;
                        let id = txn.id;
                        self.record(Some(id), None, TASK_MANAGER, "cancel_requested", Value::Null);
                    }
                }
            }
        }

        let (mut due, rest): (Vec<Envelope>, Vec<Envelope>) =
            std::mem::take(&mut self.bus).into_iter().partition(|e| e.deliver_at <= t);
        self.bus = rest;
        due.sort_by(|a, b| a.to.cmp(&b.to).then(a.seq.cmp(&b.seq)));
        for env in due {
            if env.to == TASK_MANAGER {
                self.tm_receive(env);
            } else {
                self.deliver_to_provider(env);
            }
        }

        let ids: Vec<String> = self.actors.keys().cloned().collect();
        for id in ids {
            let actor = self.actors.get_mut(&id).expect("known actor");
            let out = actor.advance(t, &mut self.world);
            self.handle_outputs(&id, out);
        }

        for a in self.safeguards.check(&self.world, t) {
            self.on_activation(a);
        }
        let vanished: Vec<u32> = self
            .safeguards
            .activations()
            .iter()
            .filter(|a| a.is_open() && !a.self_resolving && !self.resolutions.contains_key(&a.id))
            .map(|a| a.id)
            .filter(|id| !self.safeguards.still_critical(*id))
            .collect();
        for id in vanished {
            self.safeguards.activation_mut(id).expect("activation").status = ActivationStatus::Vanished { at: t };
            self.record(None, None, "safeguards", "safeguard_vanished", json!({ "activation": id }));
        }

        self.drive_resolutions();
        self.drive_all();

        self.history.push(self.world.clone());
        self.now += 1;
    }

    fn record_changes(&mut self, cause: u64, changes: &[Change]) {
        if !changes.is_empty() {
            self.record(None, None, "environment", "map_change", json!({ "cause": cause, "changes": changes }));
        }
    }

    fn deliver_to_provider(&mut self, env: Envelope) {
        let Payload::Directive(d) = env.payload else { return };
        let Some(actor) = self.actors.get_mut(&env.to) else { return };
        let jitter = actor.spec.jitter;
        let extra = match d {
            Directive::Invoke { .. } | Directive::Diagnose { .. } if jitter > 0 => {
                self.rng.random_range(0..=jitter)
            }
            _ => 0,
        };
        let out = actor.receive(env.txn, env.step, d, extra);
        self.handle_outputs(&env.to, out);
    }

    fn handle_outputs(&mut self, provider: &str, out: Vec<crate::services::ActorOutput>) {
        use crate::services::ActorOutput as O;
        for o in out {
            match o {
                O::Send { txn, step, event } => {
                    self.send(provider, TASK_MANAGER, txn, &step, Payload::Event(event));
                }
                O::Changed { txn, step, reason, changes } => {
                    let cause = self.record(Some(txn), Some(&step), provider, reason, Value::Null);
                    self.record_changes(cause, &changes);
                }
                O::SafeActionDone { activation, changes } => {
                    let cause = self.record(None, None, provider, "safe_action_done", json!({ "activation": activation }));
                    self.record_changes(cause, &changes);
                    self.on_safe_action_done(activation);
                }
                O::FailureFired { failure, txn, step } => {
                    self.record(Some(txn), Some(&step), provider, "failure_injected", json!({ "failure": failure }));
                }
                O::WentSilent => {
                    self.record(None, None, provider, "provider_silent", Value::Null);
                }
            }
        }
    }

    fn on_activation(&mut self, id: u32) {
        let a = self.safeguards.activation(id).expect("fresh activation").clone();
        let sg = self.safeguards.get(&a.safeguard).expect("known safeguard").clone();
        self.record(
            None,
            None,
            "safeguards",
            "safeguard_activated",
            json!({ "activation": id, "safeguard": sg.id, "binding": a.binding }),
        );

        // The situation is now known to the Task Manager.
        let phi = substitute(&sg.critical, &a.binding);
        if let Some(lits) = phi.conjuncts() {
            let observed: Vec<_> = lits
                .iter()
                .filter(|l| ComputedRelation::from_name(&l.relation).is_none())
                .filter_map(|l| {
                    l.positive().to_tuple().map(|atom| crate::services::Observation {
                        atom,
                        holds: !l.negated,
                    })
                })
                .collect();
            self.repo.apply_observations(&observed, self.now);
        }

        let objects = a.objects();
        let mut noticing: Vec<(String, Vec<(TxnId, StepId)>)> = Vec::new();
        for (pid, actor) in &self.actors {
            if actor.is_dead() {
                continue;
            }
            let jobs: Vec<(TxnId, StepId)> = actor
                .jobs()
                .filter(|(_, _, ty)| {
                    actor
                        .spec
                        .description(ty)
                        .is_some_and(|d| d.attributes.operation_range.covers(&objects, &self.regions))
                })
                .map(|(txn, step, _)| (txn, step.to_string()))
                .collect();
            if !jobs.is_empty() {
                noticing.push((pid.clone(), jobs));
            }
        }

        let mut resolver = None;
        'search: for (pid, _) in &noticing {
            let actor = &self.actors[pid];
            if actor.has_safe_action() {
                continue;
            }
            for i in 0..sg.safe.len() {
                let task = sg.resolution_task(i, &a.binding).expect("alternative index");
                // Each offered service separately, so one bad grounding does not hide another.
                for d in &actor.spec.offered {
                    let intention = Intention::new(task.clone(), "safeguards").for_type(&d.type_name);
                    if let Ok(c) = handle_intention(&actor.spec, &intention, &self.world, self.now, 0, &self.regions) {
                        if c.kind == ServiceKind::Physical && !self.lands_critical(&c.task.effect) {
                            resolver = Some((pid.clone(), i, c));
                            break 'search;
                        }
                    }
                }
            }
        }

        match resolver {
            Some((pid, i, c)) => {
                self.actors.get_mut(&pid).expect("actor").start_safe_action(SafeAction {
                    activation: id,
                    effect: c.task.effect.clone(),
                    duration: c.agreed_duration,
                });
                self.safeguards.activation_mut(id).expect("activation").self_resolving = true;
                self.self_resolvers.insert(id, i);
                self.record(
                    None,
                    None,
                    &pid,
                    "self_resolving",
                    json!({ "activation": id, "alternative": i, "service": c.service_type, "effect": c.task.effect.to_string() }),
                );
                let jobs = noticing.iter().find(|(p, _)| *p == pid).map(|(_, j)| j.clone()).unwrap_or_default();
                for (txn, step) in jobs {
                    self.notify(&pid, txn, &step, &sg.id, &a, true);
                }
            }
            None => {
                for (pid, jobs) in noticing {
                    for (txn, step) in jobs {
                        self.notify(&pid, txn, &step, &sg.id, &a, false);
                    }
                }
                self.resolutions.insert(id, ResolutionState { alternative: 0, child: None });
            }
        }
    }

    /// Whether applying `effect` to the world would leave some safeguard critical.
    fn lands_critical(&self, effect: &Formula) -> bool {
        let Ok(next) = project_state(&self.world, effect) else {
            return true;
        };
        self.safeguards
            .safeguards()
            .any(|s| !satisfying_bindings(&s.critical, &next).is_empty())
    }

    fn notify(&mut self, from: &str, txn: TxnId, step: &str, sg: &str, a: &Activation, self_resolving: bool) {
        let notice = CriticalSituationNotice {
            safeguard: sg.into(),
            binding: a.binding.clone(),
            activation: a.id,
            self_resolving,
        };
        self.send(from, TASK_MANAGER, txn, step, Payload::Event(ServiceEvent::CriticalNotice { notice }));
    }

    fn on_safe_action_done(&mut self, id: u32) {
        let Some(i) = self.self_resolvers.remove(&id) else { return };
        let Some(a) = self.safeguards.activation(id).cloned() else { return };
        if !a.is_open() {
            return;
        }
        let sg = self.safeguards.get(&a.safeguard).expect("known safeguard");
        let psi = substitute(&sg.safe[i], &a.binding);
        let made_safe = evaluate(&psi, &self.world, &Binding::new()).unwrap_or(false);
        let act = self.safeguards.activation_mut(id).expect("activation");
        act.self_resolving = false;
        if made_safe {
            act.status = ActivationStatus::Resolved { index: i, at: self.now };
            self.record(None, None, "safeguards", "safeguard_resolved", json!({ "activation": id, "alternative": i }));
        } else {
            self.resolutions.insert(id, ResolutionState { alternative: 0, child: None });
        }
    }

    /// Advances the resolution of every open activation the Task Manager handles.
    fn drive_resolutions(&mut self) {
        let ids: Vec<u32> = self.resolutions.keys().copied().collect();
        for aid in ids {
            while let Some(a) = self.safeguards.activation(aid).cloned() {
                let st = self.resolutions[&aid].clone();
                if !a.is_open() {
                    self.resolutions.remove(&aid);
                    break;
                }
                let sg = self.safeguards.get(&a.safeguard).expect("known safeguard").clone();
                match st.child {
                    None if st.alternative >= sg.safe.len() => {
                        self.safeguards.activation_mut(aid).expect("activation").status =
                            ActivationStatus::Unresolvable { at: self.now };
                        self.record(None, None, "safeguards", "safeguard_unresolvable", json!({ "activation": aid }));
                        for t in &a.enclosing {
                            if let Some(txn) = self.txns.get_mut(t) {
                                txn.paused_by.remove(&aid);
                                txn.unresolvable = true;
                            }
                        }
                        self.resolutions.remove(&aid);
                        break;
                    }
                    None => {
                        let task = sg.resolution_task(st.alternative, &a.binding).expect("alternative");
                        self.record(
                            None,
                            None,
                            "safeguards",
                            "resolution_attempt",
                            json!({ "activation": aid, "alternative": st.alternative, "safe": task.effect.to_string() }),
                        );
                        let child = self.create_txn(
                            TxnKind::Resolution {
                                activation: aid,
                                alternative: st.alternative,
                            },
                            task,
                        );
                        self.resolutions.get_mut(&aid).expect("resolution").child = Some(child);
                        break;
                    }
                    Some(child) => {
                        let txn = &self.txns[&child];
                        if !txn.is_finished() {
                            break;
                        }
                        if txn.outcome == Some(Outcome::Completed) {
                            self.safeguards.activation_mut(aid).expect("activation").status =
                                ActivationStatus::Resolved {
                                    index: st.alternative,
                                    at: self.now,
                                };
                            self.record(
                                None,
                                None,
                                "safeguards",
                                "safeguard_resolved",
                                json!({ "activation": aid, "alternative": st.alternative }),
                            );
                            for t in &a.enclosing {
                                if let Some(txn) = self.txns.get_mut(t) {
                                    txn.paused_by.remove(&aid);
                                }
                            }
                            self.resolutions.remove(&aid);
                            break;
                        }
                        let r = self.resolutions.get_mut(&aid).expect("resolution");
                        r.alternative += 1;
                        r.child = None;
                    }
                }
            }
        }
    }

    /// Drives every transaction once, including those created meanwhile.
    fn drive_all(&mut self) {
        let mut done: BTreeSet<TxnId> = BTreeSet::new();
        loop {
            let next = self.txns.keys().copied().find(|id| !done.contains(id));
            let Some(id) = next else { break };
            done.insert(id);
            self.drive(id);
        }
    }
}
