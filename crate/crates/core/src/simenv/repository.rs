use std::collections::{BTreeMap, BTreeSet};

use crate::formula::{Formula, Tuple};
use crate::ontology::WorldMap;
use crate::planner::{apply_effect_in_place, Change};
use crate::services::{Observation, SituationReport};

/// The Task Manager's belief about the world. It only changes through
/// reported effects, fault descriptions, situation reports and critical
/// notices, so it can lag behind the authoritative map.
#[derive(Debug, Clone)]
pub struct Repository {
    map: WorldMap,
    /// Authoritative version the belief was last reconciled against.
    observed_version: u64,
    updated_at: BTreeMap<String, u64>,
}

impl Repository {
    pub fn new(initial: &WorldMap) -> Self {
        Repository {
            map: initial.clone(),
            observed_version: initial.version(),
            updated_at: BTreeMap::new(),
        }
    }

    pub fn map(&self) -> &WorldMap {
        &self.map
    }

    pub fn observed_version(&self) -> u64 {
        self.observed_version
    }

    pub fn observe_version(&mut self, v: u64) {
        self.observed_version = self.observed_version.max(v);
    }

    /// Ticks since any fact about `object` was last reported, if ever.
    pub fn staleness(&self, object: &str, now: u64) -> Option<u64> {
        self.updated_at.get(object).map(|t| now.saturating_sub(*t))
    }

    fn touch<'a>(&mut self, objects: impl IntoIterator<Item = &'a str>, now: u64) {
        for o in objects {
            self.updated_at.insert(o.to_string(), now);
        }
    }

    /// Records that a committed effect took place.
    pub fn apply_effect(&mut self, effect: &Formula, now: u64) -> Vec<Change> {
        let changes = apply_effect_in_place(&mut self.map, effect).unwrap_or_default();
        let objects = effect.objects();
        self.touch(objects.iter().map(String::as_str), now);
        changes
    }

    /// Sets each observed atom to its reported truth.
    pub fn apply_observations(&mut self, observed: &[Observation], now: u64) {
        for o in observed {
            self.map.set_truth(o.atom.clone(), o.holds);
            let objs: Vec<String> = o.atom.args.iter().filter_map(|g| g.as_obj().map(str::to_string)).collect();
            self.touch(objs.iter().map(String::as_str), now);
        }
    }

    /// Applies a situation report, closed-world over its scope.
    pub fn apply_report(&mut self, report: &SituationReport, now: u64) {
        let stale: Vec<Tuple> = self.map.tuples_mentioning(&report.scope).cloned().collect();
        let reported: BTreeSet<&Tuple> = report.observed.iter().filter(|o| o.holds).map(|o| &o.atom).collect();
        for t in stale {
            if !reported.contains(&t) {
                self.map.retract_tuple(&t);
            }
        }
        self.apply_observations(&report.observed, now);
        self.touch(report.scope.iter().map(String::as_str), now);
    }

    /// Copies everything the authoritative map says about `objects`.
    pub fn sync(&mut self, authoritative: &WorldMap, objects: &BTreeSet<String>, now: u64) {
        let report = SituationReport::observe(authoritative, objects, &[], "environment", now);
        self.apply_report(&report, now);
        for o in objects {
            if let Some(obj) = authoritative.object(o) {
                for (k, v) in &obj.attributes {
                    if self.map.attribute(o, k) != Some(v) {
                        self.map.set_attribute(o, k, v.clone());
                    }
                }
            }
        }
        self.observe_version(authoritative.version());
    }
}
