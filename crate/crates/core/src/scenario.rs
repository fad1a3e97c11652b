//! Scenario files: an ontology extension, an initial map, providers, tasks,
//! safeguards, injected failures and exogenous events, as one JSON document.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::formula::Formula;
use crate::ontology::{builtin_ontology, validate_map, MapDocument, Ontology, OntologyExtension, WorldMap};
use crate::planner::effect_writes;
use crate::registry::Registry;
use crate::safeguards::{Safeguard, SafeguardStore};
use crate::services::{FailureEntry, Provider};
use crate::simenv::{Config, ExogenousEvent, Simulation, TaskSubmission};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub config: Config,
    #[serde(default)]
    pub ontology: OntologyExtension,
    #[serde(default)]
    pub map: MapDocument,
    #[serde(default)]
    pub providers: Vec<Provider>,
    #[serde(default)]
    pub tasks: Vec<TaskSubmission>,
    #[serde(default)]
    pub safeguards: Vec<Safeguard>,
    #[serde(default)]
    pub failures: Vec<FailureEntry>,
    #[serde(default)]
    pub events: Vec<ExogenousEvent>,
}

/// A problem located by a JSON pointer into the scenario document.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Issue {
    pub pointer: String,
    pub message: String,
}

impl Issue {
    fn new(pointer: impl Into<String>, message: impl fmt::Display) -> Self {
        Issue {
            pointer: pointer.into(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "{at}: {}", self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}", .issues.iter().map(Issue::to_string).collect::<Vec<_>>().join("\n"))]
pub struct ScenarioError {
    pub issues: Vec<Issue>,
    /// The file could not be read or is not JSON at all.
    pub unreadable: bool,
}

impl ScenarioError {
    fn unreadable(i: Issue) -> Self {
        ScenarioError {
            issues: vec![i],
            unreadable: true,
        }
    }
}

impl From<Issue> for ScenarioError {
    fn from(i: Issue) -> Self {
        ScenarioError {
            issues: vec![i],
            unreadable: false,
        }
    }
}

const SECTIONS: [&str; 9] = [
    "name", "config", "ontology", "map", "providers", "tasks", "safeguards", "failures", "events",
];

fn section<T: DeserializeOwned + Default>(doc: &serde_json::Map<String, Value>, key: &str, issues: &mut Vec<Issue>) -> T {
    match doc.get(key) {
        None => T::default(),
        Some(v) => serde_json::from_value(v.clone()).unwrap_or_else(|e| {
            issues.push(Issue::new(format!("/{key}"), e));
            T::default()
        }),
    }
}

/// Deserializes an array element by element so errors point at the element.
fn items<T: DeserializeOwned>(doc: &serde_json::Map<String, Value>, key: &str, issues: &mut Vec<Issue>) -> Vec<T> {
    match doc.get(key) {
        None => Vec::new(),
        Some(Value::Array(xs)) => xs
            .iter()
            .enumerate()
            .filter_map(|(i, x)| {
                serde_json::from_value(x.clone())
                    .map_err(|e| issues.push(Issue::new(format!("/{key}/{i}"), e)))
                    .ok()
            })
            .collect(),
        Some(_) => {
            issues.push(Issue::new(format!("/{key}"), "expected an array"));
            Vec::new()
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, ScenarioError> {
        let doc: Value = serde_json::from_str(text).map_err(|e| ScenarioError::unreadable(Issue::new("", e)))?;
        let Value::Object(doc) = doc else {
            return Err(ScenarioError::unreadable(Issue::new("", "a scenario is a JSON object")));
        };
        let mut issues = Vec::new();
        for k in doc.keys() {
            if !SECTIONS.contains(&k.as_str()) {
                issues.push(Issue::new(format!("/{k}"), "unknown section"));
            }
        }
        let map = match doc.get("map") {
            None => MapDocument::default(),
            Some(m) => MapDocument {
                objects: m.get("objects").map_or_else(Vec::new, |_| {
                    items(m.as_object().expect("object map"), "objects", &mut issues)
                }),
                facts: m.get("facts").map_or_else(Vec::new, |_| {
                    items(m.as_object().expect("object map"), "facts", &mut issues)
                }),
            },
        };
        for i in issues.iter_mut().filter(|i| i.pointer.starts_with("/objects") || i.pointer.starts_with("/facts")) {
            i.pointer = format!("/map{}", i.pointer);
        }
        let scenario = Scenario {
            name: section(&doc, "name", &mut issues),
            config: section(&doc, "config", &mut issues),
            ontology: section(&doc, "ontology", &mut issues),
            map,
            providers: items(&doc, "providers", &mut issues),
            tasks: items(&doc, "tasks", &mut issues),
            safeguards: items(&doc, "safeguards", &mut issues),
            failures: items(&doc, "failures", &mut issues),
            events: items(&doc, "events", &mut issues),
        };
        if issues.is_empty() {
            Ok(scenario)
        } else {
            Err(ScenarioError {
                issues,
                unreadable: false,
            })
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| ScenarioError::unreadable(Issue::new("", format!("{}: {e}", path.as_ref().display()))))?;
        Self::from_json(&text)
    }

    /// The builtin ontology extended with the scenario's declarations.
    pub fn build_ontology(&self) -> Result<Ontology, Issue> {
        builtin_ontology()
            .extend(&self.ontology)
            .map_err(|(p, e)| Issue::new(format!("/ontology{p}"), e))
    }

    pub fn world(&self) -> WorldMap {
        WorldMap::from(&self.map)
    }

    /// Every semantic problem, in document order.
    pub fn validate(&self) -> Vec<Issue> {
        let ontology = match self.build_ontology() {
            Ok(o) => o,
            Err(i) => return vec![i],
        };
        let world = self.world();
        let mut issues = Vec::new();

        let mut seen = BTreeSet::new();
        for (i, o) in self.map.objects.iter().enumerate() {
            if !seen.insert(&o.id) {
                issues.push(Issue::new(format!("/map/objects/{i}/id"), format!("duplicate object id `{}`", o.id)));
            }
        }
        for v in validate_map(&ontology, &world).violations {
            let pointer = match self.map.objects.iter().position(|o| o.id == v.object_id) {
                Some(i) => format!("/map/objects/{i}"),
                None => "/map/facts".to_string(),
            };
            issues.push(Issue::new(pointer, format!("{}: {}", v.rule, v.message)));
        }

        let mut registry = Registry::new();
        let mut ids = BTreeSet::new();
        for (i, p) in self.providers.iter().enumerate() {
            if !ids.insert(&p.id) {
                issues.push(Issue::new(format!("/providers/{i}/id"), format!("duplicate provider id `{}`", p.id)));
            }
            if !world.contains_object(&p.world_object) {
                issues.push(Issue::new(
                    format!("/providers/{i}/world_object"),
                    format!("`{}` is not in the map", p.world_object),
                ));
            }
            if p.capacity == 0 {
                issues.push(Issue::new(format!("/providers/{i}/capacity"), "capacity must be at least 1"));
            }
            for (j, d) in p.offered.iter().enumerate() {
                match d.validate(&ontology) {
                    Ok(()) => {
                        registry.register_service(&p.id, p.kind, d.clone(), 0);
                    }
                    Err(e) => issues.push(Issue::new(format!("/providers/{i}/services/{j}"), e)),
                }
            }
        }

        let known = |f: &Formula| f.objects().into_iter().find(|o| !world.contains_object(o));
        for (i, t) in self.tasks.iter().enumerate() {
            for (name, f) in [("precondition", &t.task.precondition), ("effect", &t.task.effect)] {
                let pointer = format!("/tasks/{i}/{name}");
                if let Err(e) = ontology.check_formula(f) {
                    issues.push(Issue::new(&pointer, format!("{e} in `{f}`")));
                } else if let Some(o) = known(f) {
                    issues.push(Issue::new(&pointer, format!("object `{o}` is not in the map")));
                } else if !f.is_ground() {
                    issues.push(Issue::new(&pointer, "task formulas must be ground"));
                }
            }
            if t.cancel_tick.is_some_and(|c| c < t.submit_tick) {
                issues.push(Issue::new(format!("/tasks/{i}/cancel_tick"), "cancel before submission"));
            }
        }

        let mut store = SafeguardStore::new();
        for (i, sg) in self.safeguards.iter().enumerate() {
            if let Err(e) = store.add_safeguard(sg.clone(), &registry, Some(&ontology)) {
                issues.push(Issue::new(format!("/safeguards/{i}"), e));
            }
        }

        for (i, f) in self.failures.iter().enumerate() {
            if !ids.contains(&f.provider) {
                issues.push(Issue::new(
                    format!("/failures/{i}/provider"),
                    format!("unknown provider `{}`", f.provider),
                ));
            }
        }

        for (i, e) in self.events.iter().enumerate() {
            let pointer = format!("/events/{i}/effect");
            if let Err(err) = ontology.check_formula(&e.effect) {
                issues.push(Issue::new(&pointer, format!("{err} in `{}`", e.effect)));
            } else if let Err(err) = effect_writes(&e.effect) {
                issues.push(Issue::new(&pointer, err));
            } else if let Some(o) = known(&e.effect) {
                issues.push(Issue::new(&pointer, format!("object `{o}` is not in the map")));
            }
        }
        issues
    }

    /// A ready-to-run simulation, or every validation issue.
    pub fn build(&self) -> Result<Simulation, ScenarioError> {
        let issues = self.validate();
        if !issues.is_empty() {
            return Err(ScenarioError {
                issues,
                unreadable: false,
            });
        }
        let ontology = self.build_ontology()?;
        let mut sim = Simulation::new(
            self.config.clone(),
            ontology,
            self.world(),
            self.providers.clone(),
            self.failures.clone(),
        )
        .map_err(|e| Issue::new("/providers", e))?;
        for (i, sg) in self.safeguards.iter().enumerate() {
            sim.add_safeguard(sg.clone())
                .map_err(|e| Issue::new(format!("/safeguards/{i}"), e))?;
        }
        for t in &self.tasks {
            sim.submit(t.clone());
        }
        for e in &self.events {
            sim.schedule_event(e.clone());
        }
        Ok(sim)
    }
}
