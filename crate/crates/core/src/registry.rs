//! Service Registry: published descriptions and discovery by effect matching.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{match_atom, Binding, Formula};
use crate::ontology::Ontology;
use crate::services::{
    DescriptionError, OperationRange, Provider, ProviderKind, ServiceDescription, ServiceKind,
};

pub type EntryId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub id: EntryId,
    pub provider: String,
    pub provider_kind: ProviderKind,
    pub description: ServiceDescription,
    pub published_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("no registry entry with id {0}")]
    UnknownId(EntryId),
    #[error("`{0}` has not published `{1}`")]
    UnknownService(String, String),
    #[error(transparent)]
    InvalidDescription(#[from] DescriptionError),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiscoveryFilter {
    pub max_cost: Option<f64>,
    /// Regions the operation range must cover.
    pub covers: Option<BTreeSet<String>>,
    pub exclude_providers: BTreeSet<String>,
    pub kind: Option<ServiceKind>,
    pub service_type: Option<String>,
}

impl DiscoveryFilter {
    fn admits(&self, e: &RegistryEntry) -> bool {
        let attrs = &e.description.attributes;
        self.max_cost.is_none_or(|c| attrs.cost <= c)
            && self.covers.as_ref().is_none_or(|regions| match &attrs.operation_range {
                OperationRange::Unbounded => true,
                OperationRange::Regions(allowed) => regions.is_subset(allowed),
            })
            && !self.exclude_providers.contains(&e.provider)
            && self.kind.is_none_or(|k| e.description.kind == k)
            && self
                .service_type
                .as_ref()
                .is_none_or(|t| *t == e.description.type_name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Match<'a> {
    pub entry: &'a RegistryEntry,
    pub binding: Binding,
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    entries: BTreeMap<EntryId, RegistryEntry>,
    by_key: BTreeMap<(String, String), EntryId>,
    next_id: EntryId,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &RegistryEntry> {
        self.entries.values()
    }

    pub fn entry(&self, id: EntryId) -> Option<&RegistryEntry> {
        self.entries.get(&id)
    }

    /// Adds or replaces the entry for (provider, type). Re-registering the
    /// same pair keeps its id.
    pub fn register_service(
        &mut self,
        provider: &str,
        provider_kind: ProviderKind,
        description: ServiceDescription,
        now: u64,
    ) -> EntryId {
        let key = (provider.to_string(), description.type_name.clone());
        let id = *self.by_key.entry(key).or_insert_with(|| {
            self.next_id += 1;
            self.next_id
        });
        let published_at = self.entries.get(&id).map_or(now, |e| e.published_at);
        self.entries.insert(
            id,
            RegistryEntry {
                id,
                provider: provider.to_string(),
                provider_kind,
                description,
                published_at,
            },
        );
        id
    }

    pub fn unregister(&mut self, id: EntryId) -> Result<(), RegistryError> {
        let e = self.entries.remove(&id).ok_or(RegistryError::UnknownId(id))?;
        self.by_key.remove(&(e.provider, e.description.type_name));
        Ok(())
    }

    /// Publishes every service a provider offers after validating them.
    pub fn publish(
        &mut self,
        provider: &Provider,
        ontology: &Ontology,
        now: u64,
    ) -> Result<Vec<EntryId>, RegistryError> {
        for d in &provider.offered {
            d.validate(ontology)?;
        }
        Ok(provider
            .offered
            .iter()
            .map(|d| self.register_service(&provider.id, provider.kind, d.clone(), now))
            .collect())
    }

    /// Entries whose effect, under some binding, contains a literal of the
    /// goal. Ordered by (cost, realization time, provider, type, binding).
    pub fn discover(&self, goal: &Formula, filter: &DiscoveryFilter) -> Vec<Match<'_>> {
        let goal_atoms = goal.atoms();
        let mut out = Vec::new();
        for e in self.entries.values().filter(|e| filter.admits(e)) {
            let mut bindings = BTreeSet::new();
            for pattern in e.description.effect.atoms() {
                for target in &goal_atoms {
                    if let Some(b) = match_atom(pattern, target, &Binding::new()) {
                        bindings.insert(b);
                    }
                }
            }
            out.extend(bindings.into_iter().map(|binding| Match { entry: e, binding }));
        }
        out.sort_by(|a, b| {
            let ka = rank(a.entry);
            let kb = rank(b.entry);
            ka.cmp(&kb).then_with(|| a.binding.cmp(&b.binding))
        });
        out
    }

    /// Ordered dump in the same shape as scenario `providers`.
    pub fn dump(&self) -> Vec<Provider> {
        let mut providers: BTreeMap<&str, Provider> = BTreeMap::new();
        for e in self.entries.values() {
            let p = providers.entry(&e.provider).or_insert_with(|| Provider {
                id: e.provider.clone(),
                kind: e.provider_kind,
                world_object: String::new(),
                offered: Vec::new(),
                capacity: 1,
                durations: BTreeMap::new(),
                jitter: 0,
            });
            p.offered.push(e.description.clone());
        }
        providers.into_values().collect()
    }
}

fn rank(e: &RegistryEntry) -> (ordered_float::OrderedFloat<f64>, u32, &str, &str) {
    (
        ordered_float::OrderedFloat(e.description.attributes.cost),
        e.description.attributes.avg_realization_time,
        &e.provider,
        &e.description.type_name,
    )
}
