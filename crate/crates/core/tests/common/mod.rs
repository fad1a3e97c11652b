//! Generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::PathBuf;

use hrc_kernel::formula::{Atom, Binding, Formula, Ground, Term};
use hrc_kernel::frp::Outcome;
use hrc_kernel::ontology::{ObjectInstance, WorldMap};
use hrc_kernel::scenario::Scenario;
use hrc_kernel::simenv::Simulation;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- corpus

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// Every bundled scenario, sorted by file name.
pub fn corpus() -> Vec<(String, Scenario)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .expect("scenario directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            let s = Scenario::load(&p).unwrap_or_else(|e| panic!("{name}: {e}"));
            (name, s)
        })
        .collect()
}

pub fn corpus_scenario(name: &str) -> Scenario {
    Scenario::load(corpus_dir().join(format!("{name}.json"))).expect("corpus scenario")
}

pub fn scenario(doc: &Value) -> Scenario {
    Scenario::from_json(&doc.to_string()).unwrap_or_else(|e| panic!("{e}\n{doc:#}"))
}

/// Builds and runs to quiescence or the horizon.
pub fn run(s: &Scenario) -> Simulation {
    let mut sim = s.build().unwrap_or_else(|e| panic!("{}: {e}", s.name));
    sim.run();
    sim
}

pub fn outcomes(sim: &Simulation) -> Vec<Option<Outcome>> {
    sim.report().tasks.iter().map(|t| t.outcome).collect()
}

pub fn count_events(sim: &Simulation, name: &str) -> usize {
    sim.trace().events(name).count()
}

// ---------------------------------------------------------------- formulas

/// A small vocabulary: objects `o0..`, relations `r0..` with arities, variables.
#[derive(Debug, Clone)]
pub struct Vocab {
    pub objects: Vec<String>,
    pub relations: Vec<(String, usize)>,
    pub vars: Vec<String>,
}

impl Vocab {
    pub fn random(r: &mut ChaCha8Rng, max_objects: usize, max_relations: usize) -> Self {
        let n = r.random_range(1..=max_objects);
        let k = r.random_range(1..=max_relations);
        Vocab {
            objects: (0..n).map(|i| format!("o{i}")).collect(),
            relations: (0..k).map(|i| (format!("r{i}"), r.random_range(1..=2))).collect(),
            vars: vec!["x".into(), "y".into()],
        }
    }

    pub fn map(&self, r: &mut ChaCha8Rng) -> WorldMap {
        let mut m = WorldMap::new();
        for o in &self.objects {
            m.insert_object(ObjectInstance::new(o, "Thing"));
        }
        for (rel, arity) in &self.relations {
            for args in tuples(&self.objects, *arity) {
                if r.random_bool(0.4) {
                    let args = args.into_iter().map(Ground::Obj).collect();
                    m.assert_tuple(hrc_kernel::formula::Tuple::new(rel.clone(), args));
                }
            }
        }
        m
    }

    fn term(&self, r: &mut ChaCha8Rng, vars: bool) -> Term {
        if vars && r.random_bool(0.4) {
            Term::var(self.vars[r.random_range(0..self.vars.len())].clone())
        } else {
            Term::obj(self.objects[r.random_range(0..self.objects.len())].clone())
        }
    }

    pub fn atom(&self, r: &mut ChaCha8Rng, vars: bool) -> Atom {
        let a = if r.random_bool(0.15) {
            let rel = if r.random_bool(0.5) { "eq" } else { "neq" };
            Atom::new(rel, vec![self.term(r, vars), self.term(r, vars)])
        } else {
            let (rel, arity) = &self.relations[r.random_range(0..self.relations.len())];
            Atom::new(rel.clone(), (0..*arity).map(|_| self.term(r, vars)).collect())
        };
        if r.random_bool(0.35) {
            a.negate()
        } else {
            a
        }
    }

    pub fn formula(&self, r: &mut ChaCha8Rng, depth: u32, vars: bool) -> Formula {
        if depth == 0 || r.random_bool(0.3) {
            if r.random_bool(0.03) {
                return Formula::True;
            }
            return Formula::Atom(self.atom(r, vars));
        }
        let n = r.random_range(2..=3);
        let parts: Vec<Formula> = (0..n).map(|_| self.formula(r, depth - 1, vars)).collect();
        if r.random_bool(0.5) {
            Formula::And(parts)
        } else {
            Formula::Or(parts)
        }
    }

    pub fn binding(&self, r: &mut ChaCha8Rng) -> Binding {
        self.vars
            .iter()
            .map(|v| (v.clone(), Ground::obj(self.objects[r.random_range(0..self.objects.len())].clone())))
            .collect()
    }
}

fn tuples(objects: &[String], arity: usize) -> Vec<Vec<String>> {
    let mut out = vec![Vec::new()];
    for _ in 0..arity {
        out = out
            .into_iter()
            .flat_map(|p| {
                objects.iter().map(move |o| {
                    let mut q = p.clone();
                    q.push(o.clone());
                    q
                })
            })
            .collect();
    }
    out
}

fn ground_name(t: &Term, b: &Binding) -> String {
    match t {
        Term::Var(v) => match &b[v] {
            Ground::Obj(o) => o.clone(),
            g => g.to_string(),
        },
        Term::Obj(o) => o.clone(),
        other => panic!("oracle does not handle {other}"),
    }
}

/// Truth-table oracle: first tabulates every ground atom the formula
/// mentions, then folds the connectives over that table.
pub fn oracle_truth(f: &Formula, map: &WorldMap, b: &Binding) -> bool {
    let mut table: BTreeMap<(String, Vec<String>), bool> = BTreeMap::new();
    let mut stack = vec![f];
    while let Some(g) = stack.pop() {
        match g {
            Formula::True => {}
            Formula::And(xs) | Formula::Or(xs) => stack.extend(xs.iter()),
            Formula::Atom(a) => {
                let args: Vec<String> = a.args.iter().map(|t| ground_name(t, b)).collect();
                let value = match a.relation.as_str() {
                    "eq" => args[0] == args[1],
                    "neq" => args[0] != args[1],
                    rel => map.tuples_of(rel).any(|t| {
                        t.args.len() == args.len()
                            && t.args.iter().zip(&args).all(|(g, s)| g.as_obj() == Some(s.as_str()))
                    }),
                };
                table.insert((a.relation.clone(), args), value);
            }
        }
    }
    fold(f, &table, b)
}

fn fold(f: &Formula, table: &BTreeMap<(String, Vec<String>), bool>, b: &Binding) -> bool {
    match f {
        Formula::True => true,
        Formula::And(xs) => xs.iter().all(|x| fold(x, table, b)),
        Formula::Or(xs) => xs.iter().any(|x| fold(x, table, b)),
        Formula::Atom(a) => {
            let args: Vec<String> = a.args.iter().map(|t| ground_name(t, b)).collect();
            table[&(a.relation.clone(), args)] != a.negated
        }
    }
}

/// Every assignment of the free variables to map objects, checked one by one.
pub fn oracle_bindings(f: &Formula, map: &WorldMap) -> BTreeSet<Binding> {
    let vars: Vec<String> = f.free_vars().into_iter().collect();
    let objects: Vec<String> = map.object_ids().map(str::to_string).collect();
    let mut out = BTreeSet::new();
    for combo in tuples(&objects, vars.len()) {
        let b: Binding = vars.iter().cloned().zip(combo.into_iter().map(Ground::Obj)).collect();
        if oracle_truth(f, map, &b) {
            out.insert(b);
        }
    }
    out
}

// ---------------------------------------------------------------- transport worlds

#[derive(Debug, Clone)]
pub struct Robot {
    pub id: String,
    pub cost: f64,
    pub time: u32,
    /// Room indices the robot may operate in; `None` is unbounded.
    pub range: Option<BTreeSet<usize>>,
}

/// Boxes moved between rooms along directed adjacency by robots offering
/// one `transport` service.
#[derive(Debug, Clone)]
pub struct TransportWorld {
    pub rooms: usize,
    pub edges: BTreeSet<(usize, usize)>,
    pub start: Vec<usize>,
    pub goal: Vec<usize>,
    pub robots: Vec<Robot>,
}

pub fn room(i: usize) -> String {
    format!("room{i}")
}

pub fn boxid(i: usize) -> String {
    format!("box{i}")
}

impl TransportWorld {
    /// A random world; ranges are restricted when `ranges` is set.
    pub fn random(r: &mut ChaCha8Rng, ranges: bool) -> Self {
        let rooms = r.random_range(3..=5);
        let mut edges = BTreeSet::new();
        for a in 0..rooms {
            for b in 0..rooms {
                if a != b && r.random_bool(0.35) {
                    edges.insert((a, b));
                }
            }
        }
        let boxes = r.random_range(1..=2);
        let start = (0..boxes).map(|_| r.random_range(0..rooms)).collect();
        let goal = (0..boxes).map(|_| r.random_range(0..rooms)).collect();
        let n = r.random_range(1..=3);
        let robots = (0..n)
            .map(|i| Robot {
                id: format!("robot{i}"),
                cost: r.random_range(1..=4) as f64,
                time: r.random_range(1..=3),
                range: (ranges && r.random_bool(0.5)).then(|| {
                    (0..rooms).filter(|_| r.random_bool(0.7)).collect()
                }),
            })
            .collect();
        TransportWorld {
            rooms,
            edges,
            start,
            goal,
            robots,
        }
    }

    /// A bidirectional corridor `room0 - room1 - ... - room{n-1}` with one box
    /// going from one end to the other.
    pub fn corridor(rooms: usize, robots: Vec<Robot>) -> Self {
        let mut edges = BTreeSet::new();
        for i in 0..rooms - 1 {
            edges.insert((i, i + 1));
            edges.insert((i + 1, i));
        }
        TransportWorld {
            rooms,
            edges,
            start: vec![0],
            goal: vec![rooms - 1],
            robots,
        }
    }

    pub fn robot(id: &str, cost: f64, time: u32) -> Robot {
        Robot {
            id: id.into(),
            cost,
            time,
            range: None,
        }
    }

    pub fn precondition(&self) -> String {
        let parts: Vec<String> = self
            .start
            .iter()
            .enumerate()
            .map(|(i, s)| format!("isIn({}, {})", boxid(i), room(*s)))
            .collect();
        parts.join(" and ")
    }

    pub fn effect(&self) -> String {
        let mut parts = Vec::new();
        for (i, (s, g)) in self.start.iter().zip(&self.goal).enumerate() {
            parts.push(format!("isIn({}, {})", boxid(i), room(*g)));
            if s != g {
                parts.push(format!("not isIn({}, {})", boxid(i), room(*s)));
            }
        }
        parts.join(" and ")
    }

    pub fn map_json(&self) -> Value {
        let mut objects: Vec<Value> = (0..self.rooms).map(|i| json!({"id": room(i), "type": "Region"})).collect();
        for i in 0..self.start.len() {
            objects.push(json!({"id": boxid(i), "type": "ToolElement"}));
        }
        for rb in &self.robots {
            let wheels = format!("{}-wheels", rb.id);
            objects.push(json!({"id": wheels, "type": "RobotElement"}));
            objects.push(json!({"id": rb.id, "type": "MobileRobot", "subobjects": {"elements": [wheels]}}));
        }
        let mut facts: Vec<String> = self
            .edges
            .iter()
            .map(|(a, b)| format!("isAdjacentTo({}, {})", room(*a), room(*b)))
            .collect();
        for (i, s) in self.start.iter().enumerate() {
            facts.push(format!("isIn({}, {})", boxid(i), room(*s)));
        }
        json!({"objects": objects, "facts": facts})
    }

    pub fn providers_json(&self) -> Vec<Value> {
        self.robots
            .iter()
            .map(|rb| {
                let range = match &rb.range {
                    None => json!("unbounded"),
                    Some(rs) => json!({"regions": rs.iter().map(|i| room(*i)).collect::<Vec<_>>()}),
                };
                json!({
                    "id": rb.id, "kind": "device", "world_object": rb.id,
                    "services": [{
                        "type": "transport", "kind": "physical",
                        "precondition": "isIn(?x, ?a) and isAdjacentTo(?a, ?b)",
                        "effect": "isIn(?x, ?b) and not isIn(?x, ?a)",
                        "attributes": {"cost": rb.cost, "avg_realization_time": rb.time, "operation_range": range}
                    }]
                })
            })
            .collect()
    }

    /// The scenario document with one task submitted at tick 0.
    pub fn document(&self, name: &str) -> Value {
        json!({
            "name": name,
            "config": {"seed": 1, "max_ticks": 400},
            "ontology": {"types": [{"name": "Region", "parent": "Nonliving", "kind": "abstract_leaf"}]},
            "map": self.map_json(),
            "providers": self.providers_json(),
            "tasks": [{"precondition": self.precondition(), "effect": self.effect(), "submit_tick": 0}]
        })
    }

    fn usable(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a, b))
            && self.robots.iter().any(|rb| match &rb.range {
                None => true,
                Some(rs) => rs.contains(&a) && rs.contains(&b),
            })
    }

    /// Breadth-first search over box positions; the minimal number of moves,
    /// or `None` when the goal is unreachable. `avoid` prunes states.
    pub fn oracle_min_steps(&self, avoid: &dyn Fn(&[usize]) -> bool) -> Option<usize> {
        let mut seen = BTreeSet::from([self.start.clone()]);
        let mut queue = VecDeque::from([(self.start.clone(), 0)]);
        while let Some((state, d)) = queue.pop_front() {
            if state == self.goal {
                return Some(d);
            }
            for i in 0..state.len() {
                for b in 0..self.rooms {
                    if !self.usable(state[i], b) {
                        continue;
                    }
                    let mut next = state.clone();
                    next[i] = b;
                    if avoid(&next) || !seen.insert(next.clone()) {
                        continue;
                    }
                    queue.push_back((next, d + 1));
                }
            }
            assert!(seen.len() <= 100_000, "oracle state graph too large");
        }
        None
    }
}

/// Atom texts the final world must agree with the goal on.
pub fn effect_holds(world: &WorldMap, effect: &str) -> bool {
    let f: Formula = effect.parse().expect("effect parses");
    hrc_kernel::formula::evaluate(&f, world, &Binding::new()).expect("ground effect")
}
