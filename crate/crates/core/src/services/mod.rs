//! Service descriptions, providers, and the intention/commitment exchange.

mod actor;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{
    cover_literals, evaluate, parse, satisfying_bindings, Binding, Formula, Ground, Task, Tuple,
};
use crate::ontology::{FormulaError, Ontology, WorldMap};
use crate::planner::effect_writes;

pub use actor::{
    ActorOutput, FailureEntry, FailureMode, ProviderActor, SafeAction, Trigger,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceKind {
    Physical,
    Cognitive,
    Software,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperationRange {
    #[default]
    Unbounded,
    Regions(BTreeSet<String>),
}

impl OperationRange {
    /// Whether every region among `objects` lies inside this range.
    pub fn covers<'a>(
        &self,
        objects: impl IntoIterator<Item = &'a String>,
        regions: &BTreeSet<String>,
    ) -> bool {
        match self {
            OperationRange::Unbounded => true,
            OperationRange::Regions(allowed) => objects
                .into_iter()
                .filter(|o| regions.contains(*o))
                .all(|o| allowed.contains(o)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    #[serde(rename = "type", default = "object_type")]
    pub type_name: String,
}

fn object_type() -> String {
    crate::ontology::ROOT.to_string()
}

fn one() -> u32 {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceAttributes {
    #[serde(default)]
    pub operation_range: OperationRange,
    #[serde(default)]
    pub cost: f64,
    /// In ticks.
    #[serde(default = "one")]
    pub avg_realization_time: u32,
    /// Whether the effect may be undone by compensation.
    #[serde(default = "yes")]
    pub reversible: bool,
}

impl Default for ServiceAttributes {
    fn default() -> Self {
        ServiceAttributes {
            operation_range: OperationRange::Unbounded,
            cost: 0.0,
            avg_realization_time: 1,
            reversible: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceDescription {
    #[serde(rename = "type")]
    pub type_name: String,
    pub kind: ServiceKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<Param>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<Param>,
    #[serde(default = "true_formula")]
    pub precondition: Formula,
    #[serde(default = "true_formula")]
    pub effect: Formula,
    #[serde(default)]
    pub attributes: ServiceAttributes,
}

fn true_formula() -> Formula {
    Formula::True
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DescriptionError {
    #[error("service `{service}`: {source}")]
    Vocabulary {
        service: String,
        source: FormulaError,
    },
    #[error("service `{service}`: effect variable ?{var} is neither in the precondition nor an input")]
    UnboundEffectVariable { service: String, var: String },
    #[error("service `{0}`: a physical service needs a non-trivial conjunctive effect")]
    PhysicalEffect(String),
    #[error("service `{0}`: cognitive and software services cannot change the map")]
    NonPhysicalEffect(String),
    #[error("service `{0}`: cost must be a non-negative number")]
    InvalidCost(String),
}

impl ServiceDescription {
    pub fn physical(type_name: &str, precondition: &str, effect: &str) -> Self {
        ServiceDescription {
            type_name: type_name.into(),
            kind: ServiceKind::Physical,
            inputs: Vec::new(),
            outputs: Vec::new(),
            precondition: parse(precondition).expect("precondition"),
            effect: parse(effect).expect("effect"),
            attributes: ServiceAttributes::default(),
        }
    }

    pub fn cognitive(type_name: &str) -> Self {
        ServiceDescription {
            type_name: type_name.into(),
            kind: ServiceKind::Cognitive,
            inputs: Vec::new(),
            outputs: Vec::new(),
            precondition: Formula::True,
            effect: Formula::True,
            attributes: ServiceAttributes::default(),
        }
    }

    pub fn with_cost(mut self, cost: f64) -> Self {
        self.attributes.cost = cost;
        self
    }

    pub fn with_time(mut self, ticks: u32) -> Self {
        self.attributes.avg_realization_time = ticks;
        self
    }

    pub fn with_range(mut self, range: OperationRange) -> Self {
        self.attributes.operation_range = range;
        self
    }

    pub fn irreversible(mut self) -> Self {
        self.attributes.reversible = false;
        self
    }

    pub fn validate(&self, ontology: &Ontology) -> Result<(), DescriptionError> {
        let service = self.type_name.clone();
        for f in [&self.precondition, &self.effect] {
            ontology
                .check_formula(f)
                .map_err(|source| DescriptionError::Vocabulary {
                    service: service.clone(),
                    source,
                })?;
        }
        if !(self.attributes.cost >= 0.0 && self.attributes.cost.is_finite()) {
            return Err(DescriptionError::InvalidCost(service));
        }
        let mut known = self.precondition.free_vars();
        known.extend(self.inputs.iter().map(|p| p.name.clone()));
        if let Some(var) = self.effect.free_vars().into_iter().find(|v| !known.contains(v)) {
            return Err(DescriptionError::UnboundEffectVariable { service, var });
        }
        match self.kind {
            ServiceKind::Physical => {
                if self.effect.is_true() || self.effect.contains_disjunction() {
                    return Err(DescriptionError::PhysicalEffect(service));
                }
                // Check the effect's shape with placeholder objects for variables.
                let b: Binding = self
                    .effect
                    .free_vars()
                    .into_iter()
                    .map(|v| (v.clone(), Ground::obj(v)))
                    .collect();
                if effect_writes(&crate::formula::substitute(&self.effect, &b)).is_err() {
                    return Err(DescriptionError::PhysicalEffect(service));
                }
            }
            ServiceKind::Cognitive | ServiceKind::Software => {
                if !self.effect.is_true() {
                    return Err(DescriptionError::NonPhysicalEffect(service));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Device,
    Human,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provider {
    pub id: String,
    pub kind: ProviderKind,
    pub world_object: String,
    #[serde(rename = "services", alias = "offered")]
    pub offered: Vec<ServiceDescription>,
    #[serde(default = "one")]
    pub capacity: u32,
    /// Ticks per service type, overriding the advertised average.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub durations: BTreeMap<String, u32>,
    /// Maximum extra ticks drawn per execution.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub jitter: u32,
}

fn is_zero(n: &u32) -> bool {
    *n == 0
}

impl Provider {
    pub fn device(id: &str, world_object: &str, offered: Vec<ServiceDescription>) -> Self {
        Provider {
            id: id.into(),
            kind: ProviderKind::Device,
            world_object: world_object.into(),
            offered,
            capacity: 1,
            durations: BTreeMap::new(),
            jitter: 0,
        }
    }

    pub fn human(id: &str, world_object: &str, offered: Vec<ServiceDescription>) -> Self {
        Provider {
            kind: ProviderKind::Human,
            ..Self::device(id, world_object, offered)
        }
    }

    pub fn description(&self, type_name: &str) -> Option<&ServiceDescription> {
        self.offered.iter().find(|d| d.type_name == type_name)
    }

    pub fn duration_of(&self, type_name: &str) -> u32 {
        let advertised = self.description(type_name).map_or(1, |d| d.attributes.avg_realization_time);
        self.durations.get(type_name).copied().unwrap_or(advertised).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intention {
    pub task: Task,
    pub requester: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline: Option<u64>,
    /// Restricts matching to one service type.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service_type: Option<String>,
}

impl Intention {
    pub fn new(task: Task, requester: &str) -> Self {
        Intention {
            task,
            requester: requester.into(),
            deadline: None,
            service_type: None,
        }
    }

    pub fn for_type(mut self, type_name: &str) -> Self {
        self.service_type = Some(type_name.into());
        self
    }
}

pub const DEFAULT_EXPIRY: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Commitment {
    pub provider: String,
    pub service_type: String,
    pub kind: ServiceKind,
    pub task: Task,
    pub agreed_cost: f64,
    pub agreed_duration: u32,
    #[serde(default, skip_serializing_if = "Binding::is_empty")]
    pub inputs: Binding,
    pub expiry: u64,
    pub reversible: bool,
}

impl Commitment {
    /// Ordering key used to choose among competing commitments.
    pub fn rank(&self) -> (ordered_float::OrderedFloat<f64>, u32, String) {
        (
            ordered_float::OrderedFloat(self.agreed_cost),
            self.agreed_duration,
            self.provider.clone(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefusalReason {
    NoMatchingService,
    OutOfRange,
    Busy,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Refusal {
    pub provider: String,
    pub reason: RefusalReason,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Observation {
    pub atom: Tuple,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SituationReport {
    pub observed: Vec<Observation>,
    pub at: u64,
    pub observer: String,
    /// Objects the report is complete for: any tuple mentioning one of them
    /// that is not reported true does not hold.
    pub scope: BTreeSet<String>,
}

impl SituationReport {
    /// Observes `map` restricted to `scope`, plus the explicit `probe` atoms.
    pub fn observe(
        map: &WorldMap,
        scope: &BTreeSet<String>,
        probe: &[Tuple],
        observer: &str,
        at: u64,
    ) -> Self {
        let mut observed: BTreeSet<Observation> = map
            .tuples_mentioning(scope)
            .map(|t| Observation {
                atom: t.clone(),
                holds: true,
            })
            .collect();
        for t in probe {
            observed.insert(Observation {
                atom: t.clone(),
                holds: map.holds(t),
            });
        }
        SituationReport {
            observed: observed.into_iter().collect(),
            at,
            observer: observer.into(),
            scope: scope.clone(),
        }
    }
}

/// Objects of `task` that are regions.
pub fn task_regions(task: &Task, regions: &BTreeSet<String>) -> BTreeSet<String> {
    task.objects().into_iter().filter(|o| regions.contains(o)).collect()
}

/// Grounds a description against a requested task: every literal of the
/// task effect must be one of the description's effect literals. Variables
/// left open are bound from the task precondition, then from `map`.
pub fn ground_description(
    desc: &ServiceDescription,
    task: &Task,
    map: &WorldMap,
) -> Option<(Task, Binding)> {
    let patterns = desc.effect.atoms();
    let targets = task.effect.atoms();
    let pre_patterns = desc.precondition.conjuncts();
    let pre_targets = task.precondition.atoms();
    let needed = {
        let mut v = desc.precondition.free_vars();
        v.extend(desc.effect.free_vars());
        v
    };
    for b in cover_literals(&patterns, &targets, &Binding::new()) {
        let mut candidates = vec![b.clone()];
        if let Some(pre) = &pre_patterns {
            if !pre_targets.is_empty() {
                let from_pre = cover_literals(pre, &pre_targets, &b);
                candidates.splice(0..0, from_pre);
            }
        }
        for c in candidates {
            if needed.iter().all(|v| c.contains_key(v)) {
                return Some((desc_task(desc, &c), c));
            }
            let open_pre = crate::formula::substitute(&desc.precondition, &c);
            if let Some(extra) = satisfying_bindings(&open_pre, map).into_iter().next() {
                let mut full = c.clone();
                full.extend(extra);
                if needed.iter().all(|v| full.contains_key(v)) {
                    return Some((desc_task(desc, &full), full));
                }
            }
        }
    }
    None
}

fn desc_task(desc: &ServiceDescription, b: &Binding) -> Task {
    Task::new(
        crate::formula::substitute(&desc.precondition, b),
        crate::formula::substitute(&desc.effect, b),
    )
}

/// Whether a human's preferred environment admits every region of `task`.
pub fn preferred_environment_admits(
    provider: &Provider,
    task: &Task,
    map: &WorldMap,
    regions: &BTreeSet<String>,
) -> bool {
    if provider.kind != ProviderKind::Human {
        return true;
    }
    let Some(text) = map
        .attribute(&provider.world_object, "PreferredEnvironment")
        .and_then(|v| v.as_text())
    else {
        return true;
    };
    let Ok(pref) = parse(text) else { return true };
    task_regions(task, regions).into_iter().all(|r| {
        let mut b = Binding::new();
        b.insert("region".into(), Ground::Obj(r));
        evaluate(&pref, map, &b).unwrap_or(false)
    })
}

/// Capability check shared by intention handling and planning: the
/// description's range covers the task and a human provider accepts its regions.
pub fn accepts(
    provider: &Provider,
    desc: &ServiceDescription,
    ground: &Task,
    map: &WorldMap,
    regions: &BTreeSet<String>,
) -> Result<(), RefusalReason> {
    if !desc.attributes.operation_range.covers(&ground.objects(), regions) {
        return Err(RefusalReason::OutOfRange);
    }
    if !preferred_environment_admits(provider, ground, map, regions) {
        return Err(RefusalReason::OutOfRange);
    }
    Ok(())
}

/// Answers an intention with a commitment or a refusal. `load` is the number
/// of jobs the provider currently holds.
pub fn handle_intention(
    provider: &Provider,
    intention: &Intention,
    map: &WorldMap,
    now: u64,
    load: u32,
    regions: &BTreeSet<String>,
) -> Result<Commitment, Refusal> {
    let refuse = |reason| Refusal {
        provider: provider.id.clone(),
        reason,
    };
    if intention.deadline.is_some_and(|d| d < now) {
        return Err(refuse(RefusalReason::Expired));
    }
    let mut reason = RefusalReason::NoMatchingService;
    for desc in &provider.offered {
        if intention
            .service_type
            .as_ref()
            .is_some_and(|t| *t != desc.type_name)
        {
            continue;
        }
        let Some((ground, binding)) = ground_description(desc, &intention.task, map) else {
            continue;
        };
        if let Err(r) = accepts(provider, desc, &ground, map, regions) {
            reason = reason.max(r);
            continue;
        }
        if load >= provider.capacity {
            return Err(refuse(RefusalReason::Busy));
        }
        let inputs = desc
            .inputs
            .iter()
            .filter_map(|p| binding.get(&p.name).map(|g| (p.name.clone(), g.clone())))
            .collect();
        return Ok(Commitment {
            provider: provider.id.clone(),
            service_type: desc.type_name.clone(),
            kind: desc.kind,
            task: ground,
            agreed_cost: desc.attributes.cost,
            agreed_duration: provider.duration_of(&desc.type_name),
            inputs,
            expiry: intention.deadline.unwrap_or(now + DEFAULT_EXPIRY),
            reversible: desc.attributes.reversible,
        });
    }
    Err(refuse(reason))
}
