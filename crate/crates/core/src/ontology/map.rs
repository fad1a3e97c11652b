use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::formula::{parse, Formula, Ground, ParseError, Tuple, Value};

/// A concrete object: an instance of a leaf type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: String,
    #[serde(rename = "type")]
    pub type_name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, Value>,
    /// Role name to the ids filling it.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub subobjects: BTreeMap<String, Vec<String>>,
}

impl ObjectInstance {
    pub fn new(id: impl Into<String>, type_name: impl Into<String>) -> Self {
        ObjectInstance {
            id: id.into(),
            type_name: type_name.into(),
            attributes: BTreeMap::new(),
            subobjects: BTreeMap::new(),
        }
    }

    pub fn with_attr(mut self, name: impl Into<String>, v: Value) -> Self {
        self.attributes.insert(name.into(), v);
        self
    }

    pub fn with_sub(mut self, role: impl Into<String>, ids: &[&str]) -> Self {
        self.subobjects
            .insert(role.into(), ids.iter().map(|s| s.to_string()).collect());
        self
    }
}

/// Everything that determines truth of formulas in a map, without the version.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateKey {
    tuples: Vec<Tuple>,
    attributes: Vec<(String, String, Value)>,
}

/// A map of the environment: objects plus the extensional relation tuples
/// that hold between them. Anything not listed is false.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorldMap {
    objects: BTreeMap<String, ObjectInstance>,
    tuples: BTreeSet<Tuple>,
    version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FactError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("`{0}` is not a single ground positive atom")]
    NotAFact(String),
}

impl WorldMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn bump_version(&mut self) {
        self.version += 1;
    }

    pub fn insert_object(&mut self, obj: ObjectInstance) {
        self.objects.insert(obj.id.clone(), obj);
        self.version += 1;
    }

    pub fn object(&self, id: &str) -> Option<&ObjectInstance> {
        self.objects.get(id)
    }

    pub fn contains_object(&self, id: &str) -> bool {
        self.objects.contains_key(id)
    }

    pub fn object_ids(&self) -> impl Iterator<Item = &str> {
        self.objects.keys().map(String::as_str)
    }

    pub fn objects(&self) -> impl Iterator<Item = &ObjectInstance> {
        self.objects.values()
    }

    pub fn holds(&self, t: &Tuple) -> bool {
        self.tuples.contains(t)
    }

    pub fn tuples(&self) -> impl Iterator<Item = &Tuple> {
        self.tuples.iter()
    }

    pub fn tuples_of<'a>(&'a self, relation: &'a str) -> impl Iterator<Item = &'a Tuple> + 'a {
        let start = Tuple::new(relation, Vec::new());
        self.tuples
            .range(start..)
            .take_while(move |t| t.relation == relation)
    }

    /// Tuples mentioning any of the given objects.
    pub fn tuples_mentioning<'a>(
        &'a self,
        objects: &'a BTreeSet<String>,
    ) -> impl Iterator<Item = &'a Tuple> + 'a {
        self.tuples
            .iter()
            .filter(|t| t.args.iter().any(|a| a.as_obj().is_some_and(|o| objects.contains(o))))
    }

    /// Returns whether the map changed.
    pub fn assert_tuple(&mut self, t: Tuple) -> bool {
        let changed = self.tuples.insert(t);
        self.version += 1;
        changed
    }

    pub fn retract_tuple(&mut self, t: &Tuple) -> bool {
        let changed = self.tuples.remove(t);
        self.version += 1;
        changed
    }

    pub fn set_truth(&mut self, t: Tuple, truth: bool) -> bool {
        if truth {
            self.assert_tuple(t)
        } else {
            self.retract_tuple(&t)
        }
    }

    /// Sets an attribute, returning the previous value. `None` if the object
    /// does not exist.
    pub fn set_attribute(&mut self, object: &str, name: &str, v: Value) -> Option<Option<Value>> {
        let obj = self.objects.get_mut(object)?;
        let prev = obj.attributes.insert(name.to_string(), v);
        self.version += 1;
        Some(prev)
    }

    /// Asserts a fact written in formula syntax, e.g. `isIn(box1, roomA)`.
    pub fn assert_fact(&mut self, text: &str) -> Result<bool, FactError> {
        match parse(text)? {
            Formula::Atom(a) if !a.negated => match a.to_tuple() {
                Some(t) => Ok(self.assert_tuple(t)),
                None => Err(FactError::NotAFact(text.to_string())),
            },
            _ => Err(FactError::NotAFact(text.to_string())),
        }
    }

    pub fn state_key(&self) -> StateKey {
        StateKey {
            tuples: self.tuples.iter().cloned().collect(),
            attributes: self
                .objects
                .values()
                .flat_map(|o| {
                    o.attributes
                        .iter()
                        .map(|(k, v)| (o.id.clone(), k.clone(), v.clone()))
                })
                .collect(),
        }
    }

    /// Same objects, attributes and tuples, ignoring the version counter.
    pub fn same_state(&self, other: &WorldMap) -> bool {
        self.objects == other.objects && self.tuples == other.tuples
    }

    pub fn attribute(&self, object: &str, name: &str) -> Option<&Value> {
        self.objects.get(object)?.attributes.get(name)
    }

    pub fn object_grounds(&self) -> impl Iterator<Item = Ground> + '_ {
        self.objects.keys().map(|k| Ground::Obj(k.clone()))
    }
}

/// JSON form of a map: objects plus facts written in formula syntax.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MapDocument {
    #[serde(default)]
    pub objects: Vec<ObjectInstance>,
    #[serde(default)]
    pub facts: Vec<Tuple>,
}

impl From<&MapDocument> for WorldMap {
    fn from(doc: &MapDocument) -> Self {
        let mut m = WorldMap::new();
        for o in &doc.objects {
            m.insert_object(o.clone());
        }
        for t in &doc.facts {
            m.assert_tuple(t.clone());
        }
        m
    }
}

impl From<&WorldMap> for MapDocument {
    fn from(m: &WorldMap) -> Self {
        MapDocument {
            objects: m.objects().cloned().collect(),
            facts: m.tuples().cloned().collect(),
        }
    }
}
