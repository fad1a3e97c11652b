//! Acceptance criteria, one line each. Runs as a plain binary so the lines
//! show up under `cargo test`; exits non-zero if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use hrc_kernel::formula::{evaluate, satisfying_bindings, Binding};
use hrc_kernel::frp::{Outcome, Transaction};
use hrc_kernel::ontology::{
    builtin_ontology, validate_map, AttributeSlot, Multiplicity, ObjectInstance, RangeConstraint,
    SubobjectSpec, TypeDef, TypeKind, WorldMap,
};
use hrc_kernel::planner::{effect_writes, plan, PlanError, PlanningContext, Write};
use hrc_kernel::scenario::Scenario;
use hrc_kernel::simenv::Simulation;
use rand::RngExt;
use serde_json::{json, Value};

struct Verdict {
    pass: bool,
    summary: String,
}

fn verdict(pass: bool, summary: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        summary: summary.into(),
    }
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("formula oracle equivalence", formula_oracle),
        ("planner soundness", planner_soundness),
        ("planner small-scale completeness", planner_completeness),
        ("replacement of failed providers", replacement),
        ("transaction terminality", terminality),
        ("safeguard response bound", response_bound),
        ("compensation restoration", restoration),
        ("ontology validation suite", ontology_suite),
        ("determinism", determinism),
    ];
    let started = Instant::now();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let v = check();
        let mark = if v.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {}: {mark} {name}: {} [{:.2}s]",
            i + 1,
            v.summary,
            t.elapsed().as_secs_f64()
        );
        failed += usize::from(!v.pass);
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.1}s",
        criteria.len() - failed,
        criteria.len(),
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

// 1 ---------------------------------------------------------------------

fn formula_oracle() -> Verdict {
    let t = Instant::now();
    let mut r = rng(1);
    let mut agree = 0;
    let total = 1000;
    for _ in 0..total {
        let vocab = Vocab::random(&mut r, 4, 3);
        let map = vocab.map(&mut r);
        let f = vocab.formula(&mut r, 3, true);
        let b = vocab.binding(&mut r);
        if evaluate(&f, &map, &b) == Ok(oracle_truth(&f, &map, &b)) {
            agree += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(agree == total && secs < 5.0, format!("{agree}/{total} agree with the truth table"))
}

// 2, 3 ------------------------------------------------------------------

struct Planned {
    world: TransportWorld,
    oracle: Option<usize>,
    result: Result<usize, PlanError>,
    scenario: Scenario,
}

fn plan_world(world: TransportWorld, name: &str) -> Planned {
    let scenario = scenario(&world.document(name));
    let sim = scenario.build().expect("generated scenario is valid");
    let providers = scenario.providers.iter().map(|p| (p.id.clone(), p.clone())).collect();
    let ctx = PlanningContext::new(sim.registry(), &providers, sim.ontology(), sim.regions());
    let task = &scenario.tasks[0].task;
    let result = plan(task, &ctx, sim.world()).map(|p| {
        let states = p.execute_projection(sim.world()).expect("projectable plan");
        let last = states.last().unwrap_or(sim.world());
        assert!(
            evaluate(&task.effect, last, &Binding::new()).unwrap_or(false),
            "{name}: projected plan misses the goal"
        );
        p.len()
    });
    Planned {
        oracle: world.oracle_min_steps(&|_| false),
        world,
        result,
        scenario,
    }
}

/// The random planning suite, generated once for criteria 2 and 3.
fn suite() -> &'static Vec<Planned> {
    use std::sync::OnceLock;
    static SUITE: OnceLock<Vec<Planned>> = OnceLock::new();
    SUITE.get_or_init(|| {
        let mut r = rng(2);
        let mut out = Vec::new();
        let mut solvable = 0;
        let mut k = 0;
        while solvable < 200 {
            let w = TransportWorld::random(&mut r, true);
            let p = plan_world(w, &format!("random planning {k}"));
            solvable += usize::from(p.oracle.is_some());
            out.push(p);
            k += 1;
        }
        out
    })
}

fn planner_soundness() -> Verdict {
    let mut executed = 0;
    let mut good = 0;
    let mut minimal = 0;
    let mut problems = Vec::new();
    for p in suite().iter().filter(|p| p.oracle.is_some()) {
        executed += 1;
        let Ok(len) = &p.result else {
            problems.push(format!("{}: no plan", p.scenario.name));
            continue;
        };
        minimal += usize::from(Some(*len) == p.oracle);
        let sim = run(&p.scenario);
        let done = outcomes(&sim) == vec![Some(Outcome::Completed)];
        if done && effect_holds(sim.world(), &p.world.effect()) {
            good += 1;
        } else {
            problems.push(format!("{}: {:?}", p.scenario.name, outcomes(&sim)));
        }
    }
    let wrong_unsolvable = suite()
        .iter()
        .filter(|p| p.oracle.is_none() && p.result.is_ok())
        .count();
    verdict(
        good == executed && executed == 200 && wrong_unsolvable == 0,
        format!(
            "{good}/{executed} executed plans reach the goal, {minimal} of minimal length, \
             {wrong_unsolvable} plans for oracle-unsolvable tasks{}",
            problems.first().map(|p| format!(", first problem {p}")).unwrap_or_default()
        ),
    )
}

fn planner_completeness() -> Verdict {
    let small: Vec<&Planned> = suite().iter().filter(|p| p.oracle.is_some_and(|d| d <= 5)).collect();
    let false_unsolvable = small.iter().filter(|p| p.result.is_err()).count();
    verdict(
        false_unsolvable == 0 && !small.is_empty(),
        format!(
            "{false_unsolvable} false Unsolvable among {} oracle-solvable tasks of at most 5 steps",
            small.len()
        ),
    )
}

// 4 ---------------------------------------------------------------------

fn failure_modes(r: &mut rand_chacha::ChaCha8Rng) -> Value {
    match r.random_range(0..3) {
        0 => json!({"mode": "fault_with_description"}),
        1 => json!({"mode": "partial_effect", "fraction": 0.5}),
        _ => {
            let fraction = [0.0, 0.5, 1.0][r.random_range(0..3)];
            json!({"mode": "silent_failure", "fraction": fraction})
        }
    }
}

fn camera() -> (Vec<Value>, Value) {
    (
        vec![
            json!({"id": "lens1", "type": "SimpleSensor", "attributes": {"sensed_attribute": "light_intensity", "sensed_value": 0.0}}),
            json!({"id": "camera1", "type": "Sensor", "subobjects": {"sensors": ["lens1"]}}),
        ],
        json!({"id": "camera1", "kind": "device", "world_object": "camera1",
               "services": [{"type": "inspect", "kind": "cognitive", "attributes": {"cost": 1.0, "avg_realization_time": 1}}]}),
    )
}

fn replacement_scenario(r: &mut rand_chacha::ChaCha8Rng, k: usize) -> Scenario {
    let rooms = r.random_range(2..=4);
    let n = r.random_range(2..=3);
    let robots = (0..n)
        .map(|i| TransportWorld::robot(&format!("robot{i}"), r.random_range(1..=5) as f64, r.random_range(1..=3)))
        .collect::<Vec<_>>();
    let cheapest = robots
        .iter()
        .min_by(|a, b| (a.cost, a.time, &a.id).partial_cmp(&(b.cost, b.time, &b.id)).unwrap())
        .unwrap()
        .id
        .clone();
    let w = TransportWorld::corridor(rooms, robots);
    let mut doc = w.document(&format!("replacement {k}"));
    let mut mode = failure_modes(r);
    let ordinal = r.random_range(1..=rooms - 1);
    mode["id"] = json!("injected");
    mode["provider"] = json!(cheapest);
    mode["trigger"] = json!({"ordinal": ordinal});
    doc["failures"] = json!([mode]);
    doc["config"]["seed"] = json!(k);
    if r.random_bool(0.5) {
        let (objects, provider) = camera();
        doc["map"]["objects"].as_array_mut().unwrap().extend(objects);
        doc["providers"].as_array_mut().unwrap().push(provider);
    }
    scenario(&doc)
}

fn replacement() -> Verdict {
    let mut r = rng(4);
    let mut completed = 0;
    let mut replanned = 0;
    let mut first_bad = None;
    for k in 0..100 {
        let s = replacement_scenario(&mut r, k);
        let sim = run(&s);
        let ok = outcomes(&sim) == vec![Some(Outcome::Completed)];
        let re = count_events(&sim, "replan") >= 1;
        completed += usize::from(ok);
        replanned += usize::from(re);
        if (!ok || !re) && first_bad.is_none() {
            first_bad = Some(format!("{}: {:?}", s.name, outcomes(&sim)));
        }
    }
    verdict(
        completed == 100 && replanned == 100,
        format!(
            "{completed}/100 Completed, {replanned}/100 with a replan event{}",
            first_bad.map(|b| format!(", first miss {b}")).unwrap_or_default()
        ),
    )
}

// 5 ---------------------------------------------------------------------

fn random_failures(r: &mut rand_chacha::ChaCha8Rng, providers: &[String]) -> Value {
    let n = r.random_range(0..=3);
    let entries: Vec<Value> = (0..n)
        .map(|i| {
            let mut m = failure_modes(r);
            m["id"] = json!(format!("f{i}"));
            m["provider"] = json!(providers[r.random_range(0..providers.len())]);
            m["trigger"] = if r.random_bool(0.5) {
                json!({"tick": r.random_range(0..15)})
            } else {
                json!({"ordinal": r.random_range(1..=3)})
            };
            m
        })
        .collect();
    json!(entries)
}

fn zone_variant(r: &mut rand_chacha::ChaCha8Rng, k: usize, failures: bool) -> Scenario {
    let base = if r.random_bool(0.7) {
        "safeguard_interruption"
    } else {
        "unresolvable_safeguard"
    };
    let mut doc: Value = serde_json::from_str(
        &std::fs::read_to_string(corpus_dir().join(format!("{base}.json"))).unwrap(),
    )
    .unwrap();
    doc["name"] = json!(format!("{base} variant {k}"));
    doc["config"]["seed"] = json!(k);
    doc["events"][0]["tick"] = json!(r.random_range(0..14));
    if failures {
        let ids: Vec<String> = doc["providers"]
            .as_array()
            .unwrap()
            .iter()
            .map(|p| p["id"].as_str().unwrap().to_string())
            .collect();
        doc["failures"] = random_failures(r, &ids);
    }
    scenario(&doc)
}

fn terminality_violations(sim: &Simulation) -> Vec<String> {
    let mut v = Vec::new();
    if sim.report().horizon_exceeded {
        v.push("horizon exceeded".to_string());
    }
    let mut outcome_events: BTreeMap<u32, usize> = BTreeMap::new();
    for rec in sim.trace().events("outcome") {
        *outcome_events.entry(rec.txn.unwrap_or(0)).or_default() += 1;
    }
    for t in sim.transactions() {
        if t.outcome.is_none() || !t.is_finished() {
            v.push(format!("txn {} has no outcome", t.id));
        }
        if outcome_events.get(&t.id) != Some(&1) {
            v.push(format!("txn {} has {:?} outcome events", t.id, outcome_events.get(&t.id)));
        }
        for s in t.steps.values() {
            if !s.state.is_terminal() {
                v.push(format!("txn {} step {} left {:?}", t.id, s.id, s.state));
            }
        }
    }
    v
}

fn terminality() -> Verdict {
    let mut r = rng(5);
    let mut runs: Vec<Scenario> = corpus().into_iter().map(|(_, s)| s).collect();
    let corpus_len = runs.len();
    for k in 0..500 {
        if k % 5 == 4 {
            runs.push(zone_variant(&mut r, k, true));
            continue;
        }
        let w = TransportWorld::random(&mut r, true);
        let mut doc = w.document(&format!("random schedule {k}"));
        let ids: Vec<String> = w.robots.iter().map(|rb| rb.id.clone()).collect();
        doc["failures"] = random_failures(&mut r, &ids);
        doc["config"]["seed"] = json!(k);
        for p in doc["providers"].as_array_mut().unwrap() {
            p["jitter"] = json!(r.random_range(0..=2));
        }
        if r.random_bool(0.3) {
            doc["tasks"][0]["cancel_tick"] = json!(r.random_range(0..20));
        }
        if r.random_bool(0.3) {
            let (objects, provider) = camera();
            doc["map"]["objects"].as_array_mut().unwrap().extend(objects);
            doc["providers"].as_array_mut().unwrap().push(provider);
        }
        runs.push(scenario(&doc));
    }
    let mut violations = Vec::new();
    let mut txns = 0;
    for s in &runs {
        let sim = run(s);
        txns += sim.transactions().count();
        violations.extend(terminality_violations(&sim).into_iter().map(|v| format!("{}: {v}", s.name)));
    }
    verdict(
        violations.is_empty(),
        format!(
            "{} violations over {} runs ({corpus_len} corpus + 500 random) and {txns} transactions{}",
            violations.len(),
            runs.len(),
            violations.first().map(|v| format!(", first {v}")).unwrap_or_default()
        ),
    )
}

// 6 ---------------------------------------------------------------------

const R: usize = 20;

fn task_finished_by(t: &Transaction, tick: usize) -> bool {
    t.finished_at.is_some_and(|f| f as usize <= tick)
}

/// Ticks at which a critical situation was neither made safe nor ended by
/// its transactions within the bound.
fn bound_violations(s: &Scenario, sim: &Simulation) -> Vec<String> {
    let history = sim.history();
    let tasks: Vec<&Transaction> = sim.transactions().filter(|t| t.is_task()).collect();
    let mut out = Vec::new();
    for sg in &s.safeguards {
        for (t, map) in history.iter().enumerate() {
            for b in oracle_bindings(&sg.critical, map) {
                let running: Vec<&&Transaction> = tasks
                    .iter()
                    .filter(|x| x.submitted_at as usize <= t && !task_finished_by(x, t))
                    .collect();
                let end = (t + R).min(history.len() - 1);
                let answered = (t..=end).any(|u| {
                    sg.safe.iter().any(|psi| oracle_truth(psi, &history[u], &b))
                        || running.iter().all(|x| task_finished_by(x, u))
                });
                if !answered {
                    out.push(format!("{}: `{}` under {} at tick {t}", s.name, sg.id, show(&b)));
                }
            }
        }
    }
    out
}

fn show(b: &Binding) -> String {
    b.iter().map(|(k, v)| format!("?{k}={v}")).collect::<Vec<_>>().join(",")
}

fn response_bound() -> Verdict {
    let mut r = rng(6);
    let mut runs: Vec<Scenario> = corpus()
        .into_iter()
        .map(|(_, s)| s)
        .filter(|s| !s.safeguards.is_empty())
        .collect();
    let corpus_len = runs.len();
    for k in 0..50 {
        runs.push(zone_variant(&mut r, k, false));
    }
    let mut critical_ticks = 0;
    let mut violations = Vec::new();
    for s in &runs {
        let sim = run(s);
        for sg in &s.safeguards {
            critical_ticks += sim.history().iter().filter(|m| !satisfying_bindings(&sg.critical, m).is_empty()).count();
        }
        violations.extend(bound_violations(s, &sim));
    }
    verdict(
        violations.is_empty() && critical_ticks > 0,
        format!(
            "{} violations of R = {R} over {critical_ticks} critical ticks in {} runs ({corpus_len} corpus){}",
            violations.len(),
            runs.len(),
            violations.first().map(|v| format!(", first {v}")).unwrap_or_default()
        ),
    )
}

// 7 ---------------------------------------------------------------------

/// Atoms written by the steps that completed, or `None` if one of them is
/// not invertible.
fn touched(t: &Transaction) -> Option<BTreeSet<hrc_kernel::formula::Tuple>> {
    let mut out = BTreeSet::new();
    for s in t.steps.values().filter(|s| s.completed_at.is_some()) {
        if !s.commitment.reversible {
            return None;
        }
        for w in effect_writes(&s.commitment.task.effect).expect("ground effect") {
            if let Write::Truth(tuple, _) = w {
                out.insert(tuple);
            }
        }
    }
    Some(out)
}

fn restoration() -> Verdict {
    let mut r = rng(7);
    let mut runs = vec![corpus_scenario("cancellation_mid_flight")];
    for k in 0..60 {
        let n = r.random_range(1..=2);
        let robots = (0..n)
            .map(|i| TransportWorld::robot(&format!("robot{i}"), r.random_range(1..=3) as f64, r.random_range(1..=3)))
            .collect();
        let w = TransportWorld::corridor(r.random_range(3..=5), robots);
        let mut doc = w.document(&format!("random cancellation {k}"));
        doc["tasks"][0]["cancel_tick"] = json!(r.random_range(1..16));
        doc["config"]["seed"] = json!(k);
        runs.push(scenario(&doc));
    }
    let mut checked = 0;
    let mut with_steps = 0;
    let mut mismatches = Vec::new();
    for s in &runs {
        let before = s.world();
        let sim = run(s);
        let Some(t) = sim.task_transaction(0) else { continue };
        if t.outcome != Some(Outcome::Canceled) {
            continue;
        }
        let Some(atoms) = touched(t) else { continue };
        checked += 1;
        with_steps += usize::from(!atoms.is_empty());
        for a in atoms {
            if before.holds(&a) != sim.world().holds(&a) {
                mismatches.push(format!("{}: {a}", s.name));
            }
        }
    }
    verdict(
        mismatches.is_empty() && with_steps > 0,
        format!(
            "{} mismatched atoms over {checked} canceled transactions ({with_steps} with completed steps){}",
            mismatches.len(),
            mismatches.first().map(|m| format!(", first {m}")).unwrap_or_default()
        ),
    )
}

// 8 ---------------------------------------------------------------------

fn body(id: &str, temp: f64) -> ObjectInstance {
    use hrc_kernel::formula::Value as V;
    ObjectInstance::new(id, "HumanBody")
        .with_attr("body_temperature", V::with_unit(temp, "C"))
        .with_attr("heart_rate", V::with_unit(70.0, "bpm"))
        .with_attr("blood_pressure", V::with_unit(120.0, "mmHg"))
}

fn map_of(objects: Vec<ObjectInstance>) -> WorldMap {
    let mut m = WorldMap::new();
    for o in objects {
        m.insert_object(o);
    }
    m
}

fn map_valid(objects: Vec<ObjectInstance>) -> bool {
    validate_map(&builtin_ontology(), &map_of(objects)).is_valid()
}

fn type_valid(def: TypeDef) -> bool {
    builtin_ontology().register_type(def).is_ok()
}

fn ontology_suite() -> Verdict {
    use hrc_kernel::formula::Value as V;
    let sensor = |id: &str, attr: &str, v: f64| {
        ObjectInstance::new(id, "SimpleSensor")
            .with_attr("sensed_attribute", V::text(attr))
            .with_attr("sensed_value", V::number(v))
    };
    let wheels = || ObjectInstance::new("w", "RobotElement");
    let cases: Vec<(&str, bool, bool)> = vec![
        ("complete human", true, map_valid(vec![body("b", 36.6), ObjectInstance::new("h", "Human").with_sub("Body", &["b"])])),
        ("human missing Body", false, map_valid(vec![ObjectInstance::new("h", "Human")])),
        ("human with two bodies", false, map_valid(vec![body("b1", 36.6), body("b2", 37.0), ObjectInstance::new("h", "Human").with_sub("Body", &["b1", "b2"])])),
        ("body temperature above range", false, map_valid(vec![body("b", 46.0)])),
        ("body temperature at range maximum", true, map_valid(vec![body("b", 45.0)])),
        ("body missing heart rate", false, map_valid(vec![ObjectInstance::new("b", "HumanBody")
            .with_attr("body_temperature", V::with_unit(36.0, "C"))
            .with_attr("blood_pressure", V::with_unit(120.0, "mmHg"))])),
        ("robot with wheels", true, map_valid(vec![wheels(), ObjectInstance::new("r", "MobileRobot").with_sub("elements", &["w"])])),
        ("robot without elements", false, map_valid(vec![ObjectInstance::new("r", "MobileRobot")])),
        ("robot element of the wrong type", false, map_valid(vec![ObjectInstance::new("t", "ToolElement"), ObjectInstance::new("r", "MobileRobot").with_sub("elements", &["t"])])),
        ("sensor with a simple sensor", true, map_valid(vec![sensor("s", "temperature", 21.0), ObjectInstance::new("c", "Sensor").with_sub("sensors", &["s"])])),
        ("sensor without simple sensors", false, map_valid(vec![ObjectInstance::new("c", "Sensor")])),
        ("sensed attribute outside its enumeration", false, map_valid(vec![sensor("s", "pressure", 1.0)])),
        ("instance of an intermediate type", false, map_valid(vec![ObjectInstance::new("d", "Device")])),
        ("instance of an unknown type", false, map_valid(vec![ObjectInstance::new("x", "Spaceship")])),
        ("negative weight", false, map_valid(vec![ObjectInstance::new("t", "ToolElement").with_attr("weight", V::with_unit(-1.0, "kg"))])),
        ("leaf type under Device", true, type_valid(TypeDef::new("Drone", "Device", TypeKind::AbstractLeaf))),
        ("cycle attempt: Robot below MobileRobot", false, type_valid(TypeDef::new("Robot", "MobileRobot", TypeKind::Intermediate))),
        ("range tightened inside the parent range", true, type_valid(TypeDef::new("FeverBody", "BodyElement", TypeKind::PhysicalLeaf)
            .with_attribute(AttributeSlot::required("body_temperature").within(RangeConstraint::interval(37.5, 42.0))))),
        ("range widened beyond the parent range", false, type_valid(TypeDef::new("OddBody", "BodyElement", TypeKind::PhysicalLeaf)
            .with_attribute(AttributeSlot::required("body_temperature").within(RangeConstraint::interval(20.0, 50.0))))),
        ("physical type with an abstract sub-object", false, type_valid(TypeDef::new("Gripper", "DeviceElement", TypeKind::PhysicalLeaf)
            .with_subobject(SubobjectSpec::new("owner", "Human", Multiplicity::Exactly(1))))),
    ];
    let agree = cases.iter().filter(|(_, want, got)| want == got).count();
    let wrong: Vec<&str> = cases.iter().filter(|(_, w, g)| w != g).map(|(n, _, _)| *n).collect();
    verdict(
        agree == cases.len() && cases.len() == 20,
        format!(
            "{agree}/{} cases classified as expected{}",
            cases.len(),
            if wrong.is_empty() { String::new() } else { format!(", wrong: {}", wrong.join("; ")) }
        ),
    )
}

// 9 ---------------------------------------------------------------------

fn determinism() -> Verdict {
    let mut diffs = Vec::new();
    let mut compared = 0;
    for (name, s) in corpus() {
        let a = run(&s).trace().to_jsonl();
        let b = run(&s).trace().to_jsonl();
        compared += 1;
        if a != b {
            diffs.push(format!("{name}: traces differ"));
        }
        if !s.failures.is_empty() {
            continue;
        }
        let reference = outcomes(&run(&s));
        for seed in [1, 2, 3, 11, 99] {
            let mut t = s.clone();
            t.config.seed = seed;
            if outcomes(&run(&t)) != reference {
                diffs.push(format!("{name}: outcome changes with seed {seed}"));
            }
        }
    }
    let jitter_matters = {
        let s = corpus_scenario("nominal_transport");
        let mut t = s.clone();
        t.config.seed = s.config.seed + 1;
        (0..8).any(|k| {
            t.config.seed = s.config.seed + 1 + k;
            run(&s).trace().to_jsonl() != run(&t).trace().to_jsonl()
        })
    };
    verdict(
        diffs.is_empty(),
        format!(
            "{compared} corpus scenarios byte-identical on rerun, outcomes seed-independent where failure-free \
             ({} differences; seeds {} change timing){}",
            diffs.len(),
            if jitter_matters { "do" } else { "do not" },
            diffs.first().map(|d| format!(", first {d}")).unwrap_or_default()
        ),
    )
}
