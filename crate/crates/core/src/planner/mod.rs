//! Forward state-space planning over published service types, partial-order
//! recovery, and arrangement of concrete commitments into a workflow.

mod effect;

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{
    evaluate, satisfying_bindings, substitute, Binding, ComputedRelation, Formula, Ground,
    Task, Term, Value,
};
use crate::frp::StepId;
use crate::ontology::{Ontology, WorldMap};
use crate::registry::{Registry, RegistryEntry};
use crate::services::{
    accepts, Commitment, Intention, Provider, Refusal, ServiceDescription, ServiceKind,
};

pub(crate) use effect::StateCell;
pub use effect::{
    apply_effect_in_place, apply_writes, effect_writes, project_state, restoring_literal,
    revert_changes, Change, EffectError, Write,
};

pub const DEFAULT_SEARCH_BUDGET: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub id: StepId,
    pub service_type: String,
    pub binding: Binding,
    /// The service's precondition and effect under `binding`.
    pub task: Task,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CausalLink {
    pub producer: StepId,
    pub atom: String,
    pub consumer: StepId,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AbstractPlan {
    /// Steps in a valid sequential order.
    pub steps: Vec<PlanStep>,
    pub order: BTreeSet<(StepId, StepId)>,
    pub causal_links: BTreeSet<CausalLink>,
}

impl AbstractPlan {
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn step(&self, id: &str) -> Option<&PlanStep> {
        self.steps.iter().find(|s| s.id == id)
    }

    pub fn predecessors<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a StepId> + 'a {
        self.order.iter().filter(move |(_, b)| b == id).map(|(a, _)| a)
    }

    /// Gives steps fresh ids `s{start}`, `s{start+1}`, ...
    pub fn renumber(&mut self, start: usize) {
        let map: BTreeMap<StepId, StepId> = self
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), format!("s{}", start + i)))
            .collect();
        for s in &mut self.steps {
            s.id = map[&s.id].clone();
        }
        self.order = self
            .order
            .iter()
            .map(|(a, b)| (map[a].clone(), map[b].clone()))
            .collect();
        self.causal_links = self
            .causal_links
            .iter()
            .map(|l| CausalLink {
                producer: map[&l.producer].clone(),
                atom: l.atom.clone(),
                consumer: map[&l.consumer].clone(),
            })
            .collect();
    }

    /// Projects the steps in order from `initial`.
    pub fn execute_projection(&self, initial: &WorldMap) -> Result<Vec<WorldMap>, EffectError> {
        let mut states = vec![initial.clone()];
        for s in &self.steps {
            let next = project_state(states.last().unwrap(), &s.task.effect)?;
            states.push(next);
        }
        Ok(states)
    }

    /// Whether the order relation has no cycle and respects step listing.
    pub fn is_consistent(&self) -> bool {
        let pos: BTreeMap<&str, usize> = self
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect();
        self.order.iter().all(|(a, b)| match (pos.get(a.as_str()), pos.get(b.as_str())) {
            (Some(x), Some(y)) => x < y,
            _ => false,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum PlanError {
    #[error("unsolvable: {reason} ({expanded} states expanded, depth {depth})")]
    Unsolvable {
        reason: String,
        expanded: usize,
        depth: usize,
    },
    #[error("search budget of {budget} states exceeded")]
    SearchBudgetExceeded { budget: usize },
}

/// Everything the search needs besides the task and the start state.
#[derive(Debug, Clone)]
pub struct PlanningContext<'a> {
    pub registry: &'a Registry,
    pub providers: &'a BTreeMap<String, Provider>,
    pub ontology: &'a Ontology,
    pub regions: &'a BTreeSet<String>,
    /// Formulas no intermediate or final projected state may satisfy.
    pub critical: Vec<Formula>,
    pub excluded: BTreeSet<String>,
    pub budget: usize,
}

struct Schema<'a> {
    desc: &'a ServiceDescription,
    providers: Vec<&'a RegistryEntry>,
}

impl<'a> PlanningContext<'a> {
    pub fn new(
        registry: &'a Registry,
        providers: &'a BTreeMap<String, Provider>,
        ontology: &'a Ontology,
        regions: &'a BTreeSet<String>,
    ) -> Self {
        PlanningContext {
            registry,
            providers,
            ontology,
            regions,
            critical: Vec::new(),
            excluded: BTreeSet::new(),
            budget: DEFAULT_SEARCH_BUDGET,
        }
    }

    fn schemas(&self) -> Vec<Schema<'a>> {
        let mut groups: BTreeMap<(String, String, String), Schema<'a>> = BTreeMap::new();
        for e in self.registry.entries() {
            if e.description.kind != ServiceKind::Physical || self.excluded.contains(&e.provider) {
                continue;
            }
            let d = &e.description;
            let key = (d.type_name.clone(), d.precondition.to_string(), d.effect.to_string());
            groups
                .entry(key)
                .or_insert_with(|| Schema {
                    desc: d,
                    providers: Vec::new(),
                })
                .providers
                .push(e);
        }
        groups.into_values().collect()
    }

    fn someone_accepts(&self, schema: &Schema<'_>, ground: &Task, state: &WorldMap) -> bool {
        schema.providers.iter().any(|e| match self.providers.get(&e.provider) {
            Some(p) => accepts(p, &e.description, ground, state, self.regions).is_ok(),
            None => e
                .description
                .attributes
                .operation_range
                .covers(&ground.objects(), self.regions),
        })
    }

    fn domain(&self, desc: &ServiceDescription, var: &str, state: &WorldMap) -> Vec<Ground> {
        let ty = desc.inputs.iter().find(|p| p.name == var).map(|p| p.type_name.as_str());
        state
            .objects()
            .filter(|o| match ty {
                Some(t) if self.ontology.has_type(t) => {
                    self.ontology.is_subtype(&o.type_name, t).unwrap_or(false)
                }
                _ => true,
            })
            .map(|o| Ground::Obj(o.id.clone()))
            .collect()
    }

    fn critical_in(&self, state: &WorldMap) -> bool {
        self.critical
            .iter()
            .any(|f| !satisfying_bindings(f, state).is_empty())
    }
}

fn holds(goal: &Formula, state: &WorldMap) -> bool {
    if goal.is_ground() {
        evaluate(goal, state, &Binding::new()).unwrap_or(false)
    } else {
        !satisfying_bindings(goal, state).is_empty()
    }
}

/// Plans from `initial`, which must satisfy the task precondition.
pub fn plan(task: &Task, ctx: &PlanningContext<'_>, initial: &WorldMap) -> Result<AbstractPlan, PlanError> {
    if !holds(&task.precondition, initial) {
        return Err(PlanError::Unsolvable {
            reason: "precondition does not hold in the initial state".into(),
            expanded: 0,
            depth: 0,
        });
    }
    replan(task, ctx, initial)
}

/// Plans from the current state without requiring the precondition.
pub fn replan(task: &Task, ctx: &PlanningContext<'_>, current: &WorldMap) -> Result<AbstractPlan, PlanError> {
    let mut last = None;
    for goal in task.effect.disjuncts() {
        match search(goal, ctx, current) {
            Ok(p) => return Ok(p),
            Err(e) => {
                last = Some(match (last, e) {
                    (Some(b @ PlanError::SearchBudgetExceeded { .. }), _) => b,
                    (_, e) => e,
                })
            }
        }
    }
    Err(last.unwrap_or(PlanError::Unsolvable {
        reason: "empty goal".into(),
        expanded: 0,
        depth: 0,
    }))
}

struct Node {
    state: WorldMap,
    parent: usize,
    action: Option<(String, Binding, Task)>,
    depth: usize,
}

fn search(goal: &Formula, ctx: &PlanningContext<'_>, initial: &WorldMap) -> Result<AbstractPlan, PlanError> {
    if holds(goal, initial) {
        return Ok(AbstractPlan::default());
    }
    let schemas = ctx.schemas();
    let mut nodes = vec![Node {
        state: initial.clone(),
        parent: 0,
        action: None,
        depth: 0,
    }];
    let mut seen = HashSet::new();
    seen.insert(initial.state_key());
    let mut queue = VecDeque::from([0usize]);
    let mut expanded = 0;
    let mut max_depth = 0;

    while let Some(i) = queue.pop_front() {
        expanded += 1;
        let depth = nodes[i].depth + 1;
        let successors = expand(&schemas, ctx, &nodes[i].state);
        for (service_type, binding, ground, next) in successors {
            if !seen.insert(next.state_key()) {
                continue;
            }
            if ctx.critical_in(&next) {
                continue;
            }
            if nodes.len() >= ctx.budget {
                return Err(PlanError::SearchBudgetExceeded { budget: ctx.budget });
            }
            let reached = holds(goal, &next);
            max_depth = max_depth.max(depth);
            nodes.push(Node {
                state: next,
                parent: i,
                action: Some((service_type, binding, ground)),
                depth,
            });
            let id = nodes.len() - 1;
            if reached {
                return Ok(extract(&nodes, id, initial));
            }
            queue.push_back(id);
        }
    }
    Err(PlanError::Unsolvable {
        reason: "no reachable state satisfies the goal".into(),
        expanded,
        depth: max_depth,
    })
}

type Successor = (String, Binding, Task, WorldMap);

fn expand(schemas: &[Schema<'_>], ctx: &PlanningContext<'_>, state: &WorldMap) -> Vec<Successor> {
    let mut out = Vec::new();
    for schema in schemas {
        let d = schema.desc;
        let pre_bindings = if d.precondition.is_true() {
            vec![Binding::new()]
        } else {
            satisfying_bindings(&d.precondition, state)
        };
        let open: Vec<String> = d
            .effect
            .free_vars()
            .into_iter()
            .filter(|v| !d.precondition.free_vars().contains(v))
            .collect();
        let domains: Vec<Vec<Ground>> = open.iter().map(|v| ctx.domain(d, v, state)).collect();
        for base in pre_bindings {
            for_each_extension(&open, &domains, &mut base.clone(), &mut |b| {
                let ground = Task::new(substitute(&d.precondition, b), substitute(&d.effect, b));
                if !ctx.someone_accepts(schema, &ground, state) {
                    return;
                }
                if let Ok(next) = project_state(state, &ground.effect) {
                    out.push((d.type_name.clone(), b.clone(), ground, next));
                }
            });
        }
    }
    out
}

fn for_each_extension(
    vars: &[String],
    domains: &[Vec<Ground>],
    b: &mut Binding,
    f: &mut impl FnMut(&Binding),
) {
    let Some((v, rest)) = vars.split_first() else {
        f(b);
        return;
    };
    for g in &domains[0] {
        b.insert(v.clone(), g.clone());
        for_each_extension(rest, &domains[1..], b, f);
    }
    b.remove(v);
}

fn extract(nodes: &[Node], mut i: usize, initial: &WorldMap) -> AbstractPlan {
    let mut rev = Vec::new();
    while i != 0 {
        let n = &nodes[i];
        let (t, b, g) = n.action.clone().expect("non-root node has an action");
        rev.push((t, b, g));
        i = n.parent;
    }
    rev.reverse();
    let steps = rev
        .into_iter()
        .enumerate()
        .map(|(k, (service_type, binding, task))| PlanStep {
            id: format!("s{}", k + 1),
            service_type,
            binding,
            task,
        })
        .collect();
    order_steps(steps, initial)
}

fn read_cells(pre: &Formula) -> BTreeSet<StateCell> {
    fn attr_cells(t: &Term, out: &mut BTreeSet<StateCell>) {
        if let Term::Func { name, args } = t {
            match (name.as_str(), args.as_slice()) {
                ("attr", [Term::Obj(o), Term::Lit(Value::Text(k))]) => {
                    out.insert(StateCell::Attr(o.clone(), k.clone()));
                }
                ("range" | "action", [Term::Obj(o)]) => {
                    out.insert(StateCell::Attr(o.clone(), name.clone()));
                }
                _ => {}
            }
            for a in args {
                attr_cells(a, out);
            }
        }
    }
    let mut out = BTreeSet::new();
    for a in pre.atoms() {
        if ComputedRelation::from_name(&a.relation).is_some() {
            a.args.iter().for_each(|t| attr_cells(t, &mut out));
        } else if let Some(t) = a.positive().to_tuple() {
            out.insert(StateCell::Tuple(t));
        }
    }
    out
}

/// Recovers ordering constraints and causal links from a sequential plan.
pub fn order_steps(steps: Vec<PlanStep>, initial: &WorldMap) -> AbstractPlan {
    let reads: Vec<BTreeSet<StateCell>> = steps.iter().map(|s| read_cells(&s.task.precondition)).collect();
    let writes: Vec<Vec<Write>> = steps
        .iter()
        .map(|s| effect_writes(&s.task.effect).unwrap_or_default())
        .collect();
    let write_cells: Vec<BTreeSet<StateCell>> =
        writes.iter().map(|ws| ws.iter().map(Write::cell).collect()).collect();

    let mut order = BTreeSet::new();
    for j in 0..steps.len() {
        for i in 0..j {
            let conflict = !write_cells[i].is_disjoint(&reads[j])
                || !write_cells[i].is_disjoint(&write_cells[j])
                || !reads[i].is_disjoint(&write_cells[j]);
            if conflict {
                order.insert((steps[i].id.clone(), steps[j].id.clone()));
            }
        }
    }

    let mut causal_links = BTreeSet::new();
    let mut state = initial.clone();
    for j in 0..steps.len() {
        for lit in steps[j].task.precondition.atoms() {
            let Some(t) = lit.positive().to_tuple() else { continue };
            let want = !lit.negated;
            if state.holds(&t) != want {
                continue;
            }
            let producer = (0..j).rev().find(|&i| writes[i].contains(&Write::Truth(t.clone(), want)));
            if let Some(i) = producer {
                causal_links.insert(CausalLink {
                    producer: steps[i].id.clone(),
                    atom: lit.to_string(),
                    consumer: steps[j].id.clone(),
                });
            }
        }
        apply_writes(&mut state, &writes[j]);
    }
    AbstractPlan {
        steps,
        order,
        causal_links,
    }
}

/// The ground task restoring, in `before`, every value the effect overwrites.
/// `None` if the service is irreversible or some old value is inexpressible.
pub fn compensation_for(effect: &Formula, before: &WorldMap, reversible: bool) -> Option<Task> {
    if !reversible {
        return None;
    }
    let writes = effect_writes(effect).ok()?;
    let mut literals: Vec<Formula> = Vec::new();
    for w in &writes {
        let lit = restoring_literal(before, w)?;
        if !literals.contains(&lit) {
            literals.push(lit);
        }
    }
    Some(Task::goal(Formula::and(literals)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workflow {
    pub plan: AbstractPlan,
    pub assignments: BTreeMap<StepId, Commitment>,
    pub compensations: BTreeMap<StepId, Option<Task>>,
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[error("no provider committed to step {step}")]
pub struct ArrangementFailure {
    pub step: StepId,
    pub refusals: Vec<Refusal>,
}

/// Per step, in order: asks every non-excluded provider of the step's type
/// and keeps the commitment with the least (cost, duration, provider id).
/// `ask` returns `None` when a provider does not answer in time.
pub fn arrange(
    plan: &AbstractPlan,
    registry: &Registry,
    excluded: &BTreeSet<String>,
    initial: &WorldMap,
    mut ask: impl FnMut(&RegistryEntry, &Intention) -> Option<Result<Commitment, Refusal>>,
) -> Result<Workflow, ArrangementFailure> {
    let mut assignments = BTreeMap::new();
    let mut compensations = BTreeMap::new();
    let mut state = initial.clone();
    for step in &plan.steps {
        let intention = Intention::new(step.task.clone(), "task-manager").for_type(&step.service_type);
        let mut best: Option<Commitment> = None;
        let mut refusals = Vec::new();
        for e in registry.entries() {
            if e.description.type_name != step.service_type
                || e.description.kind != ServiceKind::Physical
                || excluded.contains(&e.provider)
            {
                continue;
            }
            match ask(e, &intention) {
                Some(Ok(c)) if c.task == step.task => {
                    if best.as_ref().is_none_or(|b| c.rank() < b.rank()) {
                        best = Some(c);
                    }
                }
                Some(Ok(_)) => {}
                Some(Err(r)) => refusals.push(r),
                None => {}
            }
        }
        let Some(c) = best else {
            return Err(ArrangementFailure {
                step: step.id.clone(),
                refusals,
            });
        };
        compensations.insert(step.id.clone(), compensation_for(&step.task.effect, &state, c.reversible));
        if let Ok(ws) = effect_writes(&step.task.effect) {
            apply_writes(&mut state, &ws);
        }
        assignments.insert(step.id.clone(), c);
    }
    Ok(Workflow {
        plan: plan.clone(),
        assignments,
        compensations,
    })
}
