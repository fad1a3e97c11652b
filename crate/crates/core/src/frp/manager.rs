//! The Task Manager: plans, arranges and runs transactions, and recovers
//! from faults by diagnosis, compensation and replanning.

use std::collections::BTreeSet;

use serde_json::{json, Value};

use super::{
    transition, CriticalSituationNotice, Directive, Envelope, FaultReason, Outcome, Payload, Phase,
    ServiceEvent, StepEvent, StepId, StepRecord, StepState, Transaction, TxnId, TxnKind,
};
use crate::formula::{evaluate, Binding, Formula};
use crate::planner::{
    arrange, compensation_for, effect_writes, plan, replan, AbstractPlan, PlanningContext, Workflow,
    Write,
};
use crate::safeguards::ActivationStatus;
use crate::services::{handle_intention, Commitment, Observation, ServiceKind, DEFAULT_EXPIRY};
use crate::simenv::{Simulation, TASK_MANAGER};

const DIAGNOSIS_SUFFIX: &str = "#diagnosis";

/// Bound on phase changes in one drive call.
const MAX_PHASE_CHANGES: usize = 16;

impl Simulation {
    pub(crate) fn tm_receive(&mut self, env: Envelope) {
        let Payload::Event(event) = env.payload else { return };
        let Some(mut txn) = self.txns.remove(&env.txn) else {
            self.record(Some(env.txn), Some(&env.step), TASK_MANAGER, "orphan_message", json!({ "from": env.from }));
            return;
        };
        self.handle_event(&mut txn, &env.from, &env.step, event);
        self.txns.insert(txn.id, txn);
    }

    fn handle_event(&mut self, txn: &mut Transaction, from: &str, step: &str, event: ServiceEvent) {
        let now = self.now;
        let name = event.name();
        let event = match event {
            ServiceEvent::CriticalNotice { notice } => return self.on_notice(txn, from, step, notice),
            ServiceEvent::Situation { report } => {
                self.record(Some(txn.id), Some(step), from, name, json!({ "scope": report.scope, "observed": report.observed }));
                self.repo.apply_report(&report, now);
                self.repo.observe_version(self.world.version());
                if let Phase::Diagnosing { step: s, .. } = &txn.phase {
                    if step.strip_suffix(DIAGNOSIS_SUFFIX) == Some(s.as_str()) {
                        let s = s.clone();
                        if let Some(rec) = txn.steps.get_mut(&s) {
                            rec.needs_diagnosis = false;
                        }
                        txn.phase = Phase::Draining;
                    }
                }
                return;
            }
            e => e,
        };

        if let Some(base) = step.strip_suffix(DIAGNOSIS_SUFFIX) {
            if matches!(event, ServiceEvent::Fault { .. }) {
                if let Phase::Diagnosing { step: s, .. } = &txn.phase {
                    if s == base {
                        let s = s.clone();
                        self.record(Some(txn.id), Some(step), from, "diagnosis_failed", Value::Null);
                        self.assume_worst(txn, &s);
                        txn.phase = Phase::Draining;
                    }
                }
            }
            return;
        }

        let Some(rec) = txn.steps.get_mut(step) else {
            self.record(Some(txn.id), Some(step), from, "unknown_step", json!({ "event": name }));
            return;
        };
        rec.last_heard = now;
        let (se, fault) = match event {
            ServiceEvent::Progress { .. } => (StepEvent::Progress, None),
            ServiceEvent::Completed => (StepEvent::Completed, None),
            ServiceEvent::Canceled => (StepEvent::Canceled, None),
            ServiceEvent::Fault { fault } => (StepEvent::Fault, Some(fault)),
            _ => unreachable!("handled above"),
        };
        let before = rec.state;
        let after = match transition(before, se) {
            Ok(s) => s,
            Err(v) => {
                let detail = json!({ "from": from, "event": name, "state": v.state, "offending": v.event });
                if before.is_terminal() {
                    self.record(Some(txn.id), Some(step), TASK_MANAGER, "protocol_violation", detail);
                } else {
                    rec.state = StepState::Faulted;
                    rec.needs_diagnosis = true;
                    txn.pending.insert(step.to_string());
                    txn.excluded.insert(rec.commitment.provider.clone());
                    self.record_step(txn.id, step, "protocol_violation", before, StepState::Faulted, detail);
                }
                return;
            }
        };
        rec.state = after;
        let rec = rec.clone();
        match (se, after) {
            (StepEvent::Progress, _) => {
                if before != after {
                    self.record_step(txn.id, step, "progress", before, after, Value::Null);
                }
            }
            (StepEvent::Completed, StepState::Completing) => {
                self.record_step(txn.id, step, "completed", before, after, Value::Null);
                let done = transition(after, StepEvent::Acknowledge).expect("completing acknowledges");
                self.record_step(txn.id, step, "acknowledge", after, done, Value::Null);
                self.finish_step(txn, step, done, &rec);
            }
            (StepEvent::Completed, _) => {
                self.record_step(txn.id, step, "completed", before, after, json!({ "note": "completion crossed a cancel" }));
                self.finish_step(txn, step, after, &rec);
            }
            (StepEvent::Fault, StepState::Faulted) => {
                let fault = fault.expect("fault event");
                self.record_step(txn.id, step, "fault", before, after, json!({ "fault": fault }));
                let r = txn.steps.get_mut(step).expect("step");
                match &fault.description {
                    Some(obs) => self.repo.apply_observations(obs, now),
                    None => r.needs_diagnosis = true,
                }
                if matches!(fault.reason, FaultReason::PreconditionUnmet | FaultReason::Expired) {
                    // Refused before starting: nothing to undo.
                    r.compensation = None;
                } else {
                    txn.excluded.insert(r.commitment.provider.clone());
                }
                r.fault = Some(fault);
                txn.pending.insert(step.to_string());
            }
            (StepEvent::Fault, _) => {
                let fault = fault.expect("fault event");
                if let Some(obs) = &fault.description {
                    self.repo.apply_observations(obs, now);
                }
                self.record_step(txn.id, step, "canceled", before, after, json!({ "note": "fault while canceling", "fault": fault }));
            }
            (StepEvent::Canceled, _) => {
                self.record_step(txn.id, step, "canceled", before, after, Value::Null);
            }
            _ => {}
        }
    }

    fn finish_step(&mut self, txn: &mut Transaction, step: &str, state: StepState, rec: &StepRecord) {
        let r = txn.steps.get_mut(step).expect("step");
        r.state = state;
        r.completed_at = Some(self.now);
        txn.completion_order.push(step.to_string());
        self.repo.apply_effect(&rec.commitment.task.effect, self.now);
    }

    fn on_notice(&mut self, txn: &mut Transaction, from: &str, step: &str, notice: CriticalSituationNotice) {
        self.record(
            Some(txn.id),
            Some(step),
            from,
            "critical_notice",
            json!({ "activation": notice.activation, "self_resolving": notice.self_resolving }),
        );
        if notice.self_resolving || !txn.is_task() || txn.is_finished() {
            return;
        }
        let Some(a) = self.safeguards.activation_mut(notice.activation) else { return };
        match a.status {
            ActivationStatus::Open => {}
            ActivationStatus::Unresolvable { .. } => {
                txn.unresolvable = true;
                return;
            }
            _ => return,
        }
        a.enclosing.insert(txn.id);
        let objects = a.objects();
        if txn.paused_by.insert(notice.activation) {
            self.record(Some(txn.id), None, TASK_MANAGER, "paused", json!({ "activation": notice.activation }));
        }
        let hit: Vec<StepId> = txn
            .steps
            .values()
            .filter(|s| matches!(s.state, StepState::Invoked | StepState::Active))
            .filter(|s| {
                let world_object = self
                    .specs
                    .get(&s.commitment.provider)
                    .map(|p| p.world_object.as_str())
                    .unwrap_or_default();
                objects.contains(world_object) || !s.commitment.task.objects().is_disjoint(&objects)
            })
            .map(|s| s.id.clone())
            .collect();
        for s in hit {
            self.cancel_step(txn, &s, "safeguard");
        }
        if txn.phase == Phase::Running {
            txn.phase = Phase::Draining;
        }
    }

    fn cancel_step(&mut self, txn: &mut Transaction, step: &str, why: &str) {
        let rec = txn.steps.get_mut(step).expect("step");
        let before = rec.state;
        let Ok(after) = transition(before, StepEvent::Cancel) else { return };
        rec.state = after;
        let provider = rec.commitment.provider.clone();
        self.record_step(txn.id, step, "cancel", before, after, json!({ "reason": why }));
        self.send(TASK_MANAGER, &provider, txn.id, step, Payload::Directive(Directive::Cancel));
    }

    pub(crate) fn drive(&mut self, id: TxnId) {
        let Some(mut txn) = self.txns.remove(&id) else { return };
        for _ in 0..MAX_PHASE_CHANGES {
            let before = txn.phase.clone();
            self.drive_phase(&mut txn);
            if txn.phase == before || txn.is_finished() {
                break;
            }
        }
        self.txns.insert(id, txn);
    }

    fn drive_phase(&mut self, txn: &mut Transaction) {
        let interrupt = if txn.cancel_requested {
            Some(Outcome::Canceled)
        } else if txn.unresolvable {
            Some(Outcome::Unable)
        } else {
            None
        };
        match txn.phase.clone() {
            Phase::Finished => {}
            Phase::Planning => {
                if let Some(outcome) = interrupt {
                    return self.finish(txn, outcome);
                }
                let check_precondition = txn.is_task();
                match self.make_workflow(txn, check_precondition) {
                    Ok(()) => txn.phase = Phase::Running,
                    Err(reason) => {
                        self.record(Some(txn.id), None, TASK_MANAGER, "plan_failed", json!({ "reason": reason }));
                        self.finish(txn, Outcome::Unable);
                    }
                }
            }
            Phase::Running => {
                if let Some(o) = interrupt {
                    return self.wind_down(txn, o);
                }
                self.check_timeouts(txn);
                if !txn.pending.is_empty() || !txn.paused_by.is_empty() {
                    txn.phase = Phase::Draining;
                    return;
                }
                self.invoke_ready(txn);
                let all_done = txn
                    .active
                    .iter()
                    .all(|s| txn.steps[s].state == StepState::Completed);
                if all_done {
                    if evaluate(&txn.task.effect, &self.world, &Binding::new()).unwrap_or(false) {
                        self.finish(txn, Outcome::Completed);
                    } else {
                        self.record(Some(txn.id), None, TASK_MANAGER, "verification_failed", Value::Null);
                        let objects = txn.task.objects();
                        self.repo.sync(&self.world, &objects, self.now);
                        txn.phase = Phase::Replanning;
                    }
                }
            }
            Phase::Draining => {
                if let Some(o) = interrupt {
                    return self.wind_down(txn, o);
                }
                self.check_timeouts(txn);
                if txn.in_flight().next().is_some() {
                    return;
                }
                if !txn.paused_by.is_empty() {
                    txn.phase = Phase::Paused;
                } else {
                    self.begin_recovery(txn);
                }
            }
            Phase::Paused => {
                if let Some(o) = interrupt {
                    return self.wind_down(txn, o);
                }
                if txn.paused_by.is_empty() {
                    self.record(Some(txn.id), None, TASK_MANAGER, "resumed", Value::Null);
                    self.begin_recovery(txn);
                }
            }
            Phase::Diagnosing { step, deadline, .. } => {
                if let Some(o) = interrupt {
                    return self.wind_down(txn, o);
                }
                if self.now > deadline {
                    self.record(Some(txn.id), Some(&step), TASK_MANAGER, "diagnosis_timeout", Value::Null);
                    self.assume_worst(txn, &step);
                    txn.phase = Phase::Draining;
                }
            }
            Phase::Compensating { mut queue, current } => {
                match self.compensate_next(txn, &mut queue, current) {
                    Some(cur) => txn.phase = Phase::Compensating { queue, current: Some(cur) },
                    None => {
                        txn.pending.clear();
                        txn.phase = Phase::Replanning;
                    }
                }
            }
            Phase::Replanning => {
                if let Some(o) = interrupt {
                    return self.wind_down(txn, o);
                }
                txn.pending.clear();
                txn.replans += 1;
                if txn.replans > self.config.max_replans {
                    self.record(Some(txn.id), None, TASK_MANAGER, "replan_limit", json!({ "replans": txn.replans }));
                    return self.wind_down(txn, Outcome::Unable);
                }
                for s in txn.active.clone() {
                    self.abandon(txn, &s);
                }
                match self.make_workflow(txn, false) {
                    Ok(()) => {
                        self.record(Some(txn.id), None, TASK_MANAGER, "replan", json!({ "replans": txn.replans }));
                        txn.phase = Phase::Running;
                    }
                    Err(reason) => {
                        self.record(Some(txn.id), None, TASK_MANAGER, "replan_failed", json!({ "reason": reason }));
                        self.wind_down(txn, Outcome::Unable);
                    }
                }
            }
            Phase::WindingDown {
                outcome,
                canceled_sent,
                queue,
                current,
            } => {
                if !canceled_sent {
                    let open: Vec<StepId> = txn
                        .steps
                        .values()
                        .filter(|s| !s.state.is_terminal())
                        .map(|s| s.id.clone())
                        .collect();
                    for s in open {
                        match txn.steps[&s].state {
                            StepState::Invoked | StepState::Active => self.cancel_step(txn, &s, "wind_down"),
                            StepState::Arranged => self.abandon(txn, &s),
                            _ => {}
                        }
                    }
                }
                self.check_timeouts(txn);
                let settled = txn.in_flight().next().is_none();
                let mut queue = match (queue, settled) {
                    (Some(q), _) => q,
                    (None, false) => {
                        txn.phase = Phase::WindingDown {
                            outcome,
                            canceled_sent: true,
                            queue: None,
                            current,
                        };
                        return;
                    }
                    (None, true) => self.undo_queue(txn),
                };
                match self.compensate_next(txn, &mut queue, current) {
                    Some(cur) => {
                        txn.phase = Phase::WindingDown {
                            outcome,
                            canceled_sent: true,
                            queue: Some(queue),
                            current: Some(cur),
                        }
                    }
                    None => self.finish(txn, outcome),
                }
            }
        }
    }

    fn finish(&mut self, txn: &mut Transaction, outcome: Outcome) {
        txn.outcome = Some(outcome);
        txn.finished_at = Some(self.now);
        txn.phase = Phase::Finished;
        self.record(
            Some(txn.id),
            None,
            TASK_MANAGER,
            "outcome",
            json!({ "outcome": outcome, "replans": txn.replans }),
        );
    }

    fn wind_down(&mut self, txn: &mut Transaction, outcome: Outcome) {
        self.record(Some(txn.id), None, TASK_MANAGER, "wind_down", json!({ "outcome": outcome }));
        txn.phase = Phase::WindingDown {
            outcome,
            canceled_sent: false,
            queue: None,
            current: None,
        };
    }

    fn abandon(&mut self, txn: &mut Transaction, step: &str) {
        let rec = txn.steps.get_mut(step).expect("step");
        if rec.state != StepState::Arranged {
            return;
        }
        let after = transition(rec.state, StepEvent::Abort).expect("arranged steps can be abandoned");
        rec.state = after;
        self.record_step(txn.id, step, "abandoned", StepState::Arranged, after, Value::Null);
    }

    /// Completed steps in reverse completion order, after faulted ones still
    /// awaiting recovery. Only task transactions undo their work.
    fn undo_queue(&mut self, txn: &Transaction) -> Vec<StepId> {
        if !txn.is_task() {
            return Vec::new();
        }
        let mut candidates: Vec<StepId> = txn.pending.iter().cloned().collect();
        candidates.extend(
            txn.completion_order
                .iter()
                .rev()
                .filter(|s| txn.steps[*s].state == StepState::Completed)
                .cloned(),
        );
        let mut queue = Vec::new();
        for s in candidates {
            if txn.steps[&s].compensation.is_some() {
                queue.push(s);
            } else if txn.steps[&s].state == StepState::Completed {
                self.record(Some(txn.id), Some(&s), TASK_MANAGER, "not_compensable", Value::Null);
            }
        }
        queue
    }

    /// Starts or checks on one compensation. Returns the compensation still
    /// running, or `None` once the queue is exhausted.
    fn compensate_next(
        &mut self,
        txn: &mut Transaction,
        queue: &mut Vec<StepId>,
        current: Option<(StepId, TxnId)>,
    ) -> Option<(StepId, TxnId)> {
        if let Some((step, child)) = current {
            let c = &self.txns[&child];
            if !c.is_finished() {
                return Some((step, child));
            }
            let ok = c.outcome == Some(Outcome::Completed);
            let rec = txn.steps.get_mut(&step).expect("step");
            let before = rec.state;
            let event = if ok { StepEvent::Compensated } else { StepEvent::CompensationFailed };
            let after = transition(before, event).expect("compensating step");
            rec.state = after;
            let name = if ok { "compensated" } else { "compensation_failed" };
            self.record_step(txn.id, &step, name, before, after, json!({ "child": child }));
        }
        if queue.is_empty() {
            return None;
        }
        let step = queue.remove(0);
        let rec = txn.steps.get_mut(&step).expect("step");
        let task = rec.compensation.clone().expect("queued steps have a compensation");
        let before = rec.state;
        let after = transition(before, StepEvent::Compensate).expect("completed or faulted step");
        rec.state = after;
        self.record_step(txn.id, &step, "compensate", before, after, json!({ "task": task.to_string() }));
        let child = self.create_txn(
            TxnKind::Compensation {
                parent: txn.id,
                step: step.clone(),
            },
            task,
        );
        Some((step, child))
    }

    fn begin_recovery(&mut self, txn: &mut Transaction) {
        loop {
            let next = txn
                .pending
                .iter()
                .find(|s| txn.steps[*s].needs_diagnosis)
                .cloned();
            let Some(step) = next else { break };
            if self.start_diagnosis(txn, &step) {
                return;
            }
            self.assume_worst(txn, &step);
        }
        let queue: Vec<StepId> = txn
            .pending
            .iter()
            .filter(|s| txn.steps[*s].state == StepState::Faulted && txn.steps[*s].compensation.is_some())
            .cloned()
            .collect();
        txn.phase = if queue.is_empty() {
            Phase::Replanning
        } else {
            Phase::Compensating { queue, current: None }
        };
    }

    /// Asks the cheapest reachable cognitive provider to report on a step.
    fn start_diagnosis(&mut self, txn: &mut Transaction, step: &str) -> bool {
        let rec = &txn.steps[step];
        let objects = rec.commitment.task.objects();
        let mut candidates: Vec<_> = self
            .registry
            .entries()
            .filter(|e| e.description.kind == ServiceKind::Cognitive)
            .filter(|e| !txn.excluded.contains(&e.provider))
            .filter(|e| self.actors.get(&e.provider).is_some_and(|a| !a.is_dead()))
            .filter(|e| e.description.attributes.operation_range.covers(&objects, &self.regions))
            .collect();
        candidates.sort_by(|a, b| {
            let ka = (ordered_float::OrderedFloat(a.description.attributes.cost), a.description.attributes.avg_realization_time, &a.provider);
            let kb = (ordered_float::OrderedFloat(b.description.attributes.cost), b.description.attributes.avg_realization_time, &b.provider);
            ka.cmp(&kb)
        });
        let Some(e) = candidates.first() else { return false };
        let mut probe: Vec<_> = rec
            .commitment
            .task
            .effect
            .atoms()
            .into_iter()
            .chain(rec.commitment.task.precondition.atoms())
            .filter_map(|a| a.positive().to_tuple())
            .collect();
        probe.sort();
        probe.dedup();
        let duration = e.description.attributes.avg_realization_time;
        let commitment = Commitment {
            provider: e.provider.clone(),
            service_type: e.description.type_name.clone(),
            kind: ServiceKind::Cognitive,
            task: crate::formula::Task::goal(Formula::True),
            agreed_cost: e.description.attributes.cost,
            agreed_duration: duration,
            inputs: Binding::new(),
            expiry: self.now + DEFAULT_EXPIRY,
            reversible: true,
        };
        let provider = e.provider.clone();
        let diag = format!("{step}{DIAGNOSIS_SUFFIX}");
        self.record(
            Some(txn.id),
            Some(step),
            TASK_MANAGER,
            "diagnosis_requested",
            json!({ "provider": provider, "scope": objects }),
        );
        self.send(
            TASK_MANAGER,
            &provider,
            txn.id,
            &diag,
            Payload::Directive(Directive::Diagnose {
                commitment,
                scope: objects,
                probe,
            }),
        );
        let deadline = self.now + u64::from(duration.max(1)) + self.config.timeout_ticks + 2;
        txn.phase = Phase::Diagnosing {
            step: step.to_string(),
            provider,
            deadline,
        };
        true
    }

    /// With nothing to go on, assume the step had no effect at all.
    fn assume_worst(&mut self, txn: &mut Transaction, step: &str) {
        let rec = txn.steps.get_mut(step).expect("step");
        rec.needs_diagnosis = false;
        let observed: Vec<Observation> = effect_writes(&rec.commitment.task.effect)
            .unwrap_or_default()
            .into_iter()
            .filter_map(|w| match w {
                Write::Truth(atom, v) => Some(Observation { atom, holds: !v }),
                Write::Attr { .. } => None,
            })
            .collect();
        self.repo.apply_observations(&observed, self.now);
        self.record(Some(txn.id), Some(step), TASK_MANAGER, "worst_case_assumed", Value::Null);
    }

    fn check_timeouts(&mut self, txn: &mut Transaction) {
        let limit = self.config.timeout_ticks;
        let silent: Vec<StepId> = txn
            .in_flight()
            .filter(|s| self.now.saturating_sub(s.last_heard) > limit)
            .map(|s| s.id.clone())
            .collect();
        for s in silent {
            let rec = txn.steps.get_mut(&s).expect("step");
            let before = rec.state;
            let Ok(after) = transition(before, StepEvent::Timeout) else { continue };
            rec.state = after;
            if after == StepState::Faulted {
                rec.needs_diagnosis = true;
                txn.excluded.insert(rec.commitment.provider.clone());
                txn.pending.insert(s.clone());
            }
            self.record_step(txn.id, &s, "timeout", before, after, json!({ "silent_for": limit + 1 }));
        }
    }

    fn invoke_ready(&mut self, txn: &mut Transaction) {
        for s in txn.active.clone() {
            if txn.steps[&s].state != StepState::Arranged {
                continue;
            }
            let ready = txn
                .predecessors(&s)
                .iter()
                .all(|p| txn.steps[p].state == StepState::Completed);
            if !ready {
                continue;
            }
            let rec = txn.steps.get_mut(&s).expect("step");
            rec.compensation = compensation_for(&rec.commitment.task.effect, self.repo.map(), rec.commitment.reversible);
            let after = transition(rec.state, StepEvent::Invoke).expect("arranged step");
            rec.state = after;
            rec.last_heard = self.now;
            let commitment = rec.commitment.clone();
            self.record_step(
                txn.id,
                &s,
                "invoke",
                StepState::Arranged,
                after,
                json!({ "provider": commitment.provider, "service": commitment.service_type, "task": commitment.task.to_string() }),
            );
            let provider = commitment.provider.clone();
            self.send(TASK_MANAGER, &provider, txn.id, &s, Payload::Directive(Directive::Invoke { commitment }));
        }
    }

    /// Plans and arranges the transaction's task from the repository.
    fn make_workflow(&mut self, txn: &mut Transaction, check_precondition: bool) -> Result<(), String> {
        // Only successor states are pruned, so a resolution may start critical.
        let critical: Vec<Formula> = self.safeguards.safeguards().map(|s| s.critical.clone()).collect();
        let mut ctx = PlanningContext::new(&self.registry, &self.specs, &self.ontology, &self.regions);
        ctx.critical = critical;
        ctx.excluded = txn.excluded.clone();
        ctx.budget = self.config.search_budget;
        let found = if check_precondition {
            plan(&txn.task, &ctx, self.repo.map())
        } else {
            replan(&txn.task, &ctx, self.repo.map())
        };
        let mut p: AbstractPlan = found.map_err(|e| e.to_string())?;
        p.renumber(txn.next_step);
        let now = self.now;
        let actors = &self.actors;
        let world = &self.world;
        let regions = &self.regions;
        let workflow: Workflow = arrange(&p, &self.registry, &txn.excluded, self.repo.map(), |e, intention| {
            let actor = actors.get(&e.provider)?;
            if actor.is_dead() {
                return None;
            }
            Some(handle_intention(&actor.spec, intention, world, now, actor.load(), regions))
        })
        .map_err(|e| {
            let why: Vec<String> = e.refusals.iter().map(|r| format!("{}: {:?}", r.provider, r.reason)).collect();
            format!("{e} ({})", why.join(", "))
        })?;
        txn.next_step += p.len();
        txn.active = p.steps.iter().map(|s| s.id.clone()).collect();
        for s in &p.steps {
            let commitment = workflow.assignments[&s.id].clone();
            txn.steps.insert(
                s.id.clone(),
                StepRecord {
                    id: s.id.clone(),
                    state: StepState::Arranged,
                    service_type: s.service_type.clone(),
                    commitment,
                    compensation: None,
                    last_heard: now,
                    completed_at: None,
                    fault: None,
                    needs_diagnosis: false,
                },
            );
        }
        let steps: Vec<Value> = p
            .steps
            .iter()
            .map(|s| {
                json!({
                    "id": s.id,
                    "service": s.service_type,
                    "provider": workflow.assignments[&s.id].provider,
                    "task": s.task.to_string(),
                })
            })
            .collect();
        let order: BTreeSet<_> = p.order.iter().cloned().collect();
        self.record(Some(txn.id), None, TASK_MANAGER, "planned", json!({ "steps": steps, "order": order }));
        txn.workflow = Some(workflow);
        Ok(())
    }
}
