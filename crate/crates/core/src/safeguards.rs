//! Safeguards: critical situations, their safe-making alternatives, and the
//! activations detected against the authoritative map.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{satisfying_bindings, substitute, Binding, Formula, Task};
use crate::frp::TxnId;
use crate::ontology::{FormulaError, Ontology, WorldMap};
use crate::registry::{DiscoveryFilter, Registry};
use crate::services::ServiceKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Safeguard {
    pub id: String,
    pub critical: Formula,
    /// Alternatives in order of preference.
    pub safe: Vec<Formula>,
    /// Objects (usually regions) the safeguard watches. Empty means everywhere.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub scope: BTreeSet<String>,
}

impl Safeguard {
    pub fn new(id: &str, critical: Formula, safe: Vec<Formula>) -> Self {
        Safeguard {
            id: id.into(),
            critical,
            safe,
            scope: BTreeSet::new(),
        }
    }

    /// The ground resolution task for alternative `i` under `b`.
    pub fn resolution_task(&self, i: usize, b: &Binding) -> Option<Task> {
        let psi = self.safe.get(i)?;
        Some(Task::new(substitute(&self.critical, b), substitute(psi, b)))
    }

    fn in_scope(&self, b: &Binding) -> bool {
        self.scope.is_empty()
            || b.values()
                .filter_map(|g| g.as_obj())
                .any(|o| self.scope.contains(o))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SafeguardError {
    #[error("safeguard `{0}` already exists")]
    DuplicateId(String),
    #[error("safeguard `{id}`: {message}")]
    MalformedFormula { id: String, message: String },
    #[error("safeguard `{id}`: {source}")]
    Vocabulary {
        id: String,
        #[source]
        source: FormulaError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternativeReport {
    pub index: usize,
    pub formula: String,
    /// Service types whose effect matches some literal of the alternative.
    pub services: Vec<String>,
}

/// Which alternatives some registered service could contribute to. Purely
/// advisory: an alternative with no matching service is a warning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AchievabilityReport {
    pub safeguard: String,
    pub alternatives: Vec<AlternativeReport>,
}

impl AchievabilityReport {
    pub fn warnings(&self) -> Vec<String> {
        self.alternatives
            .iter()
            .filter(|a| a.services.is_empty())
            .map(|a| {
                format!(
                    "safeguard `{}`: no registered service contributes to alternative {} ({})",
                    self.safeguard, a.index, a.formula
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ActivationStatus {
    Open,
    /// Alternative `index` was achieved.
    Resolved { index: usize, at: u64 },
    /// The critical formula stopped holding without a resolution.
    Vanished { at: u64 },
    Unresolvable { at: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Activation {
    pub id: u32,
    pub safeguard: String,
    pub binding: Binding,
    pub detected_at: u64,
    pub status: ActivationStatus,
    /// Task transactions paused by this activation.
    pub enclosing: BTreeSet<TxnId>,
    pub self_resolving: bool,
}

impl Activation {
    pub fn is_open(&self) -> bool {
        self.status == ActivationStatus::Open
    }

    /// Objects bound by the activation.
    pub fn objects(&self) -> BTreeSet<String> {
        self.binding
            .values()
            .filter_map(|g| g.as_obj().map(str::to_string))
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct SafeguardStore {
    safeguards: BTreeMap<String, Safeguard>,
    activations: Vec<Activation>,
    latched: BTreeSet<(String, Binding)>,
}

impl SafeguardStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn safeguards(&self) -> impl Iterator<Item = &Safeguard> {
        self.safeguards.values()
    }

    pub fn get(&self, id: &str) -> Option<&Safeguard> {
        self.safeguards.get(id)
    }

    /// Adds a safeguard. Alternatives may not mention variables the critical
    /// formula leaves unbound.
    pub fn add_safeguard(
        &mut self,
        sg: Safeguard,
        registry: &Registry,
        ontology: Option<&Ontology>,
    ) -> Result<AchievabilityReport, SafeguardError> {
        if self.safeguards.contains_key(&sg.id) {
            return Err(SafeguardError::DuplicateId(sg.id));
        }
        let malformed = |message: String| SafeguardError::MalformedFormula {
            id: sg.id.clone(),
            message,
        };
        if sg.safe.is_empty() {
            return Err(malformed("no safe alternatives".into()));
        }
        if sg.critical.is_true() {
            return Err(malformed("critical formula is trivially true".into()));
        }
        let bound = sg.critical.free_vars();
        for (i, psi) in sg.safe.iter().enumerate() {
            let stray: Vec<_> = psi.free_vars().difference(&bound).cloned().collect();
            if !stray.is_empty() {
                return Err(malformed(format!(
                    "alternative {i} uses variables not bound by the critical formula: {stray:?}"
                )));
            }
        }
        if let Some(o) = ontology {
            for f in std::iter::once(&sg.critical).chain(&sg.safe) {
                o.check_formula(f).map_err(|source| SafeguardError::Vocabulary {
                    id: sg.id.clone(),
                    source,
                })?;
            }
        }
        let filter = DiscoveryFilter {
            kind: Some(ServiceKind::Physical),
            ..Default::default()
        };
        let alternatives = sg
            .safe
            .iter()
            .enumerate()
            .map(|(index, psi)| {
                let services: BTreeSet<String> = registry
                    .discover(psi, &filter)
                    .iter()
                    .map(|m| m.entry.description.type_name.clone())
                    .collect();
                AlternativeReport {
                    index,
                    formula: psi.to_string(),
                    services: services.into_iter().collect(),
                }
            })
            .collect();
        let report = AchievabilityReport {
            safeguard: sg.id.clone(),
            alternatives,
        };
        self.safeguards.insert(sg.id.clone(), sg);
        Ok(report)
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn activation(&self, id: u32) -> Option<&Activation> {
        self.activations.get(id.checked_sub(1)? as usize)
    }

    pub fn activation_mut(&mut self, id: u32) -> Option<&mut Activation> {
        self.activations.get_mut(id.checked_sub(1)? as usize)
    }

    /// Evaluates every safeguard on `map`. A (safeguard, binding) pair fires
    /// once and stays latched until its critical formula stops holding.
    /// Returns the ids of new activations.
    pub fn check(&mut self, map: &WorldMap, now: u64) -> Vec<u32> {
        let mut current: BTreeSet<(String, Binding)> = BTreeSet::new();
        for sg in self.safeguards.values() {
            for b in satisfying_bindings(&sg.critical, map) {
                if sg.in_scope(&b) {
                    current.insert((sg.id.clone(), b));
                }
            }
        }
        self.latched.retain(|k| current.contains(k));
        let mut fresh = Vec::new();
        for (sg, binding) in current {
            if self.latched.contains(&(sg.clone(), binding.clone())) {
                continue;
            }
            self.latched.insert((sg.clone(), binding.clone()));
            let id = self.activations.len() as u32 + 1;
            self.activations.push(Activation {
                id,
                safeguard: sg,
                binding,
                detected_at: now,
                status: ActivationStatus::Open,
                enclosing: BTreeSet::new(),
                self_resolving: false,
            });
            fresh.push(id);
        }
        fresh
    }

    /// Whether the critical formula of activation `id` still holds.
    pub fn still_critical(&self, id: u32) -> bool {
        self.activation(id).is_some_and(|a| {
            self.latched.contains(&(a.safeguard.clone(), a.binding.clone()))
        })
    }
}
