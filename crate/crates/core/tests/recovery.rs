//! Scripted failure, cancellation and safeguard scenarios, checked against
//! the recorded world history rather than the transaction manager's own view.

mod common;

use std::collections::BTreeSet;

use common::*;
use hrc_kernel::formula::{entails, satisfying_bindings, substitute, Formula};
use hrc_kernel::frp::{Outcome, StepState};
use hrc_kernel::ontology::WorldMap;
use hrc_kernel::safeguards::ActivationStatus;
use hrc_kernel::simenv::{ExogenousEvent, Simulation, TraceRecord};
use serde_json::{json, Value};

fn corpus_doc(name: &str) -> Value {
    let text = std::fs::read_to_string(corpus_dir().join(format!("{name}.json"))).expect("corpus file");
    serde_json::from_str(&text).expect("corpus JSON")
}

fn formula(text: &str) -> Formula {
    text.parse().unwrap_or_else(|e| panic!("{text}: {e}"))
}

fn atoms(m: &WorldMap) -> BTreeSet<String> {
    m.tuples().map(|t| t.to_string()).collect()
}

fn first<'a>(sim: &'a Simulation, event: &'a str) -> &'a TraceRecord {
    sim.trace()
        .events(event)
        .next()
        .unwrap_or_else(|| panic!("no {event} record"))
}

/// The world as it stood when tick `t` began.
fn before(sim: &Simulation, t: u64) -> &WorldMap {
    &sim.history()[t as usize - 1]
}

fn strings(v: &Value) -> BTreeSet<String> {
    v.as_array()
        .expect("array")
        .iter()
        .map(|x| x.as_str().expect("string").to_string())
        .collect()
}

fn changed_atoms(sim: &Simulation, cause: u64) -> BTreeSet<String> {
    sim.trace()
        .events("map_change")
        .filter(|r| r.detail["cause"] == cause)
        .flat_map(|r| r.detail["changes"].as_array().unwrap().iter())
        .map(|c| c["atom"].as_str().unwrap().to_string())
        .collect()
}

fn zone_doc() -> Value {
    corpus_doc("safeguard_interruption")
}

#[test]
fn situation_report_matches_the_world_it_observed() {
    let sim = run(&corpus_scenario("silent_failure_diagnosis"));
    assert_eq!(outcomes(&sim), vec![Some(Outcome::Completed)]);

    let scope = strings(&first(&sim, "diagnosis_requested").detail["scope"]);
    let report = first(&sim, "situation_report");
    assert_eq!(strings(&report.detail["scope"]), scope);
    let observed: BTreeSet<String> = report.detail["observed"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|o| o["holds"] == true)
        .map(|o| o["atom"].as_str().unwrap().to_string())
        .collect();
    let world = &sim.history()[report.tick as usize];
    let expected: BTreeSet<String> = world.tuples_mentioning(&scope).map(|t| t.to_string()).collect();
    assert_eq!(observed, expected);
    // The silent robot left the box in two rooms; the report must say so.
    assert!(observed.contains("isIn(box1, roomA)") && observed.contains("isIn(box1, roomB)"));
}

#[test]
fn completed_irreversible_step_survives_cancellation() {
    let sim = run(&corpus_scenario("non_invertible_cancel"));
    assert_eq!(outcomes(&sim), vec![Some(Outcome::Canceled)]);
    let txn = sim.task_transaction(0).unwrap();
    assert_eq!(txn.steps["s1"].state, StepState::Completed);
    assert_eq!(first(&sim, "not_compensable").step.as_deref(), Some("s1"));

    let cancel = first(&sim, "cancel_requested").tick;
    assert!(sim.world().same_state(before(&sim, cancel)), "wind-down changed the world");
    assert!(atoms(sim.world()).contains("isIn(box1, roomB)"));
}

#[test]
fn descriptive_fault_with_no_effect_leaves_world_alone() {
    let sim = run(&corpus_scenario("provider_substitution"));
    assert_eq!(outcomes(&sim), vec![Some(Outcome::Completed)]);
    let fault = first(&sim, "fault");
    assert_eq!(fault.detail["fault"]["description"], json!([]));
    assert!(sim.history()[fault.tick as usize].same_state(&sim.history()[0]));
}

/// Two boxes moved by one service; robot0 drops one of them.
fn two_box_doc() -> Value {
    let service = |cost: f64| {
        json!({
            "type": "move2", "kind": "physical",
            "precondition": "isIn(?x, ?a) and isIn(?y, ?a) and isAdjacentTo(?a, ?b)",
            "effect": "isIn(?x, ?b) and isIn(?y, ?b) and not isIn(?x, ?a) and not isIn(?y, ?a)",
            "attributes": {"cost": cost, "avg_realization_time": 2}
        })
    };
    let robot = |id: &str, cost: f64| {
        json!({"id": id, "kind": "device", "world_object": id, "services": [service(cost)]})
    };
    json!({
        "name": "two boxes",
        "config": {"seed": 3, "max_ticks": 200},
        "ontology": {"types": [{"name": "Region", "parent": "Nonliving", "kind": "abstract_leaf"}]},
        "map": {
            "objects": [
                {"id": "roomA", "type": "Region"}, {"id": "roomB", "type": "Region"},
                {"id": "box1", "type": "ToolElement"}, {"id": "box2", "type": "ToolElement"},
                {"id": "w0", "type": "RobotElement"},
                {"id": "robot0", "type": "MobileRobot", "subobjects": {"elements": ["w0"]}},
                {"id": "w1", "type": "RobotElement"},
                {"id": "robot1", "type": "MobileRobot", "subobjects": {"elements": ["w1"]}}
            ],
            "facts": [
                "isAdjacentTo(roomA, roomB)", "isAdjacentTo(roomB, roomA)",
                "isIn(box1, roomA)", "isIn(box2, roomA)"
            ]
        },
        "providers": [robot("robot0", 1.0), robot("robot1", 2.0)],
        "tasks": [{
            "precondition": "isIn(box1, roomA) and isIn(box2, roomA)",
            "effect": "isIn(box1, roomB) and isIn(box2, roomB) and not isIn(box1, roomA) and not isIn(box2, roomA)",
            "submit_tick": 0
        }],
        "failures": [{"id": "drop", "provider": "robot0", "trigger": {"ordinal": 1}, "mode": "partial_effect", "fraction": 0.5}]
    })
}

#[test]
fn partial_effect_is_described_and_compensated_exactly() {
    let sim = run(&scenario(&two_box_doc()));
    assert_eq!(outcomes(&sim), vec![Some(Outcome::Completed)]);

    let partial = first(&sim, "partial_effect");
    let asserted = changed_atoms(&sim, partial.seq);
    assert_eq!(asserted, BTreeSet::from(["isIn(box1, roomB)".to_string()]));

    let fault = sim
        .trace()
        .events("fault")
        .find(|r| r.txn == partial.txn && r.step == partial.step)
        .expect("fault after partial effect");
    let described: BTreeSet<String> = fault.detail["fault"]["description"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| {
            assert_eq!(o["holds"], true, "only assertions happened");
            o["atom"].as_str().unwrap().to_string()
        })
        .collect();
    let diff: BTreeSet<String> = atoms(&sim.history()[partial.tick as usize])
        .symmetric_difference(&atoms(before(&sim, partial.tick)))
        .cloned()
        .collect();
    assert_eq!(described, diff);

    // The compensation transaction undoes exactly what was asserted.
    let comp = sim
        .trace()
        .events("submitted")
        .find(|r| r.detail["kind"]["kind"] == "compensation")
        .and_then(|r| r.txn)
        .expect("compensation transaction");
    let comp_txn = sim.transaction(comp).unwrap();
    assert_eq!(comp_txn.outcome, Some(Outcome::Completed));
    let start = before(&sim, comp_txn.submitted_at);
    let end = &sim.history()[comp_txn.finished_at.unwrap() as usize];
    let undone: BTreeSet<String> = atoms(start).symmetric_difference(&atoms(end)).cloned().collect();
    assert_eq!(undone, asserted);
}

#[test]
fn corrected_repository_shortens_the_replan() {
    let mut doc = corpus_doc("silent_failure_diagnosis");
    for p in doc["providers"].as_array_mut().unwrap() {
        if p["id"] == "robot1" {
            p["services"][0]["attributes"]["reversible"] = json!(false);
        }
    }
    doc["tasks"][0]["effect"] = json!("isIn(box1, roomC)");
    let sim = run(&scenario(&doc));
    assert_eq!(outcomes(&sim), vec![Some(Outcome::Completed)]);

    let plans: Vec<&TraceRecord> = sim.trace().events("planned").filter(|r| r.txn == Some(1)).collect();
    assert_eq!(plans[0].detail["steps"].as_array().unwrap().len(), 2);
    let report = first(&sim, "situation_report").seq;
    let replan = plans.iter().find(|r| r.seq > report).expect("replan after diagnosis");
    let steps = replan.detail["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 1, "{steps:?}");
    assert!(steps[0]["task"].as_str().unwrap().contains("isAdjacentTo(roomB, roomC)"));
}

#[test]
fn busy_provider_refuses_a_second_task() {
    let mut doc = corpus_doc("nominal_transport");
    doc["tasks"].as_array_mut().unwrap().push(json!({
        "precondition": "isIn(box1, roomA)",
        "effect": "isIn(box1, roomB)",
        "submit_tick": 1
    }));
    let sim = run(&scenario(&doc));
    assert_eq!(outcomes(&sim), vec![Some(Outcome::Completed), Some(Outcome::Unable)]);
    let second = sim.task_transaction(1).unwrap().id;
    let failed = sim
        .trace()
        .events("plan_failed")
        .find(|r| r.txn == Some(second))
        .expect("plan_failed for the second task");
    assert!(failed.detail["reason"].as_str().unwrap().contains("Busy"), "{}", failed.detail);
}

#[test]
fn idle_capacity_lets_the_robot_resolve_on_its_own() {
    let mut doc = zone_doc();
    let robot = &mut doc["providers"][0];
    robot["capacity"] = json!(2);
    robot["services"].as_array_mut().unwrap().push(json!({
        "type": "retreat", "kind": "physical",
        "precondition": "isIn(robot1, ?a) and isAdjacentTo(?a, ?b)",
        "effect": "isIn(robot1, ?b) and not isIn(robot1, ?a)",
        "attributes": {"cost": 1.0, "avg_realization_time": 1}
    }));
    let sim = run(&scenario(&doc));

    let notice = first(&sim, "critical_notice");
    assert_eq!(notice.detail["self_resolving"], true);
    let rec = first(&sim, "self_resolving");
    let effect = formula(rec.detail["effect"].as_str().unwrap());
    let act = sim.safeguards().activations()[0].clone();
    let sg = sim.safeguards().get(&act.safeguard).unwrap();
    let domain: BTreeSet<String> = sim.world().object_ids().map(str::to_string).collect();
    assert!(
        sg.safe
            .iter()
            .any(|psi| entails(&effect, &substitute(psi, &act.binding), &domain).unwrap()),
        "{effect} makes no alternative true"
    );
    assert!(!act.is_open());
}

#[test]
fn second_alternative_resolves_after_the_first_fails() {
    let mut doc = zone_doc();
    doc["safeguards"][0]["safe"] = json!(["not isIn(alice, ?z)", "not isIn(robot1, ?z)"]);
    let objects = doc["map"]["objects"].as_array_mut().unwrap();
    objects.push(json!({"id": "w2", "type": "RobotElement"}));
    objects.push(json!({"id": "robot2", "type": "MobileRobot", "subobjects": {"elements": ["w2"]}}));
    doc["map"]["facts"].as_array_mut().unwrap().push(json!("isIn(robot2, roomB)"));
    doc["providers"].as_array_mut().unwrap().push(json!({
        "id": "robot2", "kind": "device", "world_object": "robot2",
        "services": [{
            "type": "tow", "kind": "physical",
            "precondition": "isIn(robot1, ?a) and isAdjacentTo(?a, ?b)",
            "effect": "isIn(robot1, ?b) and not isIn(robot1, ?a)",
            "attributes": {"cost": 1.0, "avg_realization_time": 2}
        }]
    }));
    doc["failures"] = json!([{"id": "alice-trips", "provider": "alice", "trigger": {"ordinal": 1}, "mode": "fault_with_description"}]);
    let sim = run(&scenario(&doc));

    let tried: Vec<u64> = sim
        .trace()
        .events("resolution_attempt")
        .map(|r| r.detail["alternative"].as_u64().unwrap())
        .collect();
    assert_eq!(tried.first(), Some(&0));
    assert!(tried.contains(&1));
    let act = &sim.safeguards().activations()[0];
    assert!(matches!(act.status, ActivationStatus::Resolved { index: 1, .. }), "{:?}", act.status);
    let resolved = first(&sim, "safeguard_resolved");
    assert_eq!(resolved.detail["alternative"], 1);
}

#[test]
fn robot_never_acts_while_the_zone_is_shared() {
    let doc = zone_doc();
    let sim = run(&scenario(&doc));
    assert_eq!(outcomes(&sim), vec![Some(Outcome::Completed)]);
    assert_eq!(sim.report().tasks[0].safeguard_resolutions, 1);

    let phi = formula(doc["safeguards"][0]["critical"].as_str().unwrap());
    let mut shared_ticks = 0;
    for r in sim.trace().events("effect").filter(|r| r.actor == "robot1") {
        if !satisfying_bindings(&phi, before(&sim, r.tick)).is_empty() {
            panic!("robot1 effect at tick {} while the zone was shared", r.tick);
        }
    }
    for t in 1..sim.history().len() {
        if !satisfying_bindings(&phi, &sim.history()[t]).is_empty() {
            shared_ticks += 1;
        }
    }
    assert!(shared_ticks > 0, "the scenario never reached the critical state");
}

#[test]
fn withdrawn_service_keeps_commitments_but_leaves_replanning() {
    let mut doc = corpus_doc("provider_substitution");
    doc["failures"] = json!([]);
    let mut sim = scenario(&doc).build().unwrap();
    sim.step();
    sim.withdraw("robot1", "transport").unwrap();
    assert!(sim.registry().entries().all(|e| e.provider != "robot1"));
    assert!(sim.withdraw("robot1", "transport").is_err());
    // After s1 lands, push the box back so the remaining step no longer applies.
    sim.schedule_event(ExogenousEvent {
        tick: 4,
        effect: formula("isIn(box1, roomA) and not isIn(box1, roomB)"),
    });
    sim.run();
    assert_eq!(outcomes(&sim), vec![Some(Outcome::Completed)]);

    let txn = sim.task_transaction(0).unwrap();
    assert_eq!(txn.steps["s1"].state, StepState::Completed);
    assert_eq!(txn.steps["s1"].commitment.provider, "robot1");
    let replan = sim
        .trace()
        .events("planned")
        .filter(|r| r.txn == Some(txn.id))
        .nth(1)
        .expect("a replan after the event");
    for st in replan.detail["steps"].as_array().unwrap() {
        assert_eq!(st["provider"], "robot2");
    }
}

#[test]
fn repository_converges_when_nothing_goes_wrong() {
    let mut r = rng(41);
    let mut docs: Vec<Value> = vec![corpus_doc("nominal_transport"), corpus_doc("cancellation_mid_flight")];
    for i in 0..20 {
        let n = 2 + i % 4;
        let robots = (0..1 + i % 3).map(|k| TransportWorld::robot(&format!("robot{k}"), 1.0 + k as f64, 2)).collect();
        docs.push(TransportWorld::corridor(n, robots).document("corridor"));
        docs.push(TransportWorld::random(&mut r, true).document("random"));
    }
    for doc in docs {
        let sim = run(&scenario(&doc));
        assert!(
            sim.repository().map().same_state(sim.world()),
            "{}: repository {:?} vs world {:?}",
            doc["name"],
            atoms(sim.repository().map()),
            atoms(sim.world())
        );
    }
}

#[test]
fn map_changes_follow_their_cause() {
    for (name, s) in corpus() {
        let sim = run(&s);
        let records = sim.trace().records();
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.seq, i as u64 + 1, "{name}: sequence gap");
            if r.event != "map_change" {
                continue;
            }
            let cause = r.detail["cause"].as_u64().expect("cause");
            assert!(cause < r.seq, "{name}: change {} precedes its cause {cause}", r.seq);
            let c = &records[cause as usize - 1];
            assert!(
                ["effect", "partial_effect", "exogenous_event", "safe_action_done"].contains(&c.event.as_str()),
                "{name}: change caused by {}",
                c.event
            );
            assert_eq!(c.tick, r.tick, "{name}: change recorded on a later tick");
        }
    }
}
