use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{AttrDomain, ArgKind, Ontology, RelationSemantics, TypeKind, WorldMap};
use crate::formula::{evaluate, Binding, Ground, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleId {
    UnknownType,
    NotInstantiable,
    UnknownAttribute,
    MissingAttribute,
    AttributeDomain,
    AttributeOutOfRange,
    MissingSubobject,
    SubobjectMultiplicity,
    SubobjectType,
    ConstraintViolated,
    UnknownRelation,
    TupleArgument,
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok();
        let name = s.as_ref().and_then(|v| v.as_str()).unwrap_or("?");
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub object_id: String,
    pub rule: RuleId,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, rule: RuleId) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }

    fn push(&mut self, object_id: &str, rule: RuleId, message: impl Into<String>) {
        self.violations.push(Violation {
            object_id: object_id.to_string(),
            rule,
            message: message.into(),
        });
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("object `{0}` is not in the map")]
pub struct UnknownObject(pub String);

/// Checks an object and, recursively, its sub-objects.
pub fn validate_instance(
    ontology: &Ontology,
    map: &WorldMap,
    id: &str,
) -> Result<ValidationReport, UnknownObject> {
    if !map.contains_object(id) {
        return Err(UnknownObject(id.to_string()));
    }
    let mut report = ValidationReport::default();
    let mut visited = BTreeSet::new();
    check_object(ontology, map, id, &mut visited, &mut report);
    Ok(report)
}

/// Checks every object and every relation tuple.
pub fn validate_map(ontology: &Ontology, map: &WorldMap) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut visited = BTreeSet::new();
    for id in map.object_ids() {
        check_object(ontology, map, id, &mut visited, &mut report);
    }
    for t in map.tuples() {
        let Some(def) = ontology.relation(&t.relation) else {
            report.push("", RuleId::UnknownRelation, format!("{t}: unknown relation"));
            continue;
        };
        if def.semantics == RelationSemantics::Computed {
            report.push("", RuleId::TupleArgument, format!("{t}: computed relations have no tuples"));
            continue;
        }
        if def.arity != t.args.len() {
            report.push("", RuleId::TupleArgument, format!("{t}: expected {} arguments", def.arity));
            continue;
        }
        for (g, kind) in t.args.iter().zip(&def.argument_kinds) {
            let ok = match (g, kind) {
                (Ground::Obj(o), ArgKind::Object) => map.contains_object(o),
                (Ground::Val(_), ArgKind::Attribute) => true,
                _ => false,
            };
            if !ok {
                report.push("", RuleId::TupleArgument, format!("{t}: bad argument {g}"));
            }
        }
    }
    report.violations.sort();
    report
}

fn check_object(
    ontology: &Ontology,
    map: &WorldMap,
    id: &str,
    visited: &mut BTreeSet<String>,
    report: &mut ValidationReport,
) {
    if !visited.insert(id.to_string()) {
        return;
    }
    let Some(obj) = map.object(id) else { return };
    let Some(def) = ontology.type_def(&obj.type_name) else {
        report.push(id, RuleId::UnknownType, format!("type `{}` is not defined", obj.type_name));
        return;
    };
    if def.kind == TypeKind::Intermediate {
        report.push(
            id,
            RuleId::NotInstantiable,
            format!("`{}` is an intermediate type", obj.type_name),
        );
    }

    let slots = ontology.resolved_attributes(&obj.type_name);
    for (name, value) in &obj.attributes {
        let Some(vocab) = ontology.attribute(name) else {
            report.push(id, RuleId::UnknownAttribute, format!("attribute `{name}` is not in the vocabulary"));
            continue;
        };
        if let Some(msg) = domain_mismatch(&vocab.domain, value) {
            report.push(id, RuleId::AttributeDomain, format!("{name}: {msg}"));
            continue;
        }
        let range = slots
            .get(name)
            .and_then(|s| s.range.as_ref())
            .or(vocab.range.as_ref());
        if let Some(r) = range {
            if !r.contains(value) {
                report.push(id, RuleId::AttributeOutOfRange, format!("{name} = {value:#} is out of range"));
            }
        }
    }
    for slot in slots.values() {
        if slot.required && !obj.attributes.contains_key(&slot.name) {
            report.push(id, RuleId::MissingAttribute, format!("missing attribute `{}`", slot.name));
        }
    }

    for spec in ontology.resolved_subobjects(&obj.type_name) {
        let Some(fillers) = obj.subobjects.get(&spec.role) else {
            report.push(
                id,
                RuleId::MissingSubobject,
                format!("missing obligatory sub-object `{}`", spec.role),
            );
            continue;
        };
        if !spec.multiplicity.admits(fillers.len()) {
            report.push(
                id,
                RuleId::SubobjectMultiplicity,
                format!("`{}` has {} fillers, expected {:?}", spec.role, fillers.len(), spec.multiplicity),
            );
        }
        for f in fillers {
            let fits = map
                .object(f)
                .is_some_and(|o| ontology.subtype_unchecked(&o.type_name, &spec.type_name));
            if !fits {
                report.push(
                    id,
                    RuleId::SubobjectType,
                    format!("`{}` filler `{f}` is not a {}", spec.role, spec.type_name),
                );
            } else {
                check_object(ontology, map, f, visited, report);
            }
        }
    }

    let mut b = Binding::new();
    b.insert("self".into(), Ground::obj(id));
    for c in ontology.resolved_constraints(&obj.type_name) {
        match evaluate(&c, map, &b) {
            Ok(true) => {}
            Ok(false) => report.push(id, RuleId::ConstraintViolated, format!("constraint `{c}` does not hold")),
            Err(e) => report.push(id, RuleId::ConstraintViolated, format!("constraint `{c}`: {e}")),
        }
    }
}

fn domain_mismatch(domain: &AttrDomain, v: &Value) -> Option<String> {
    match (domain, v) {
        (AttrDomain::Number { unit }, Value::Number { unit: got, .. }) => match (unit, got) {
            (Some(want), Some(got)) if want != got => Some(format!("unit `{got}` but expected `{want}`")),
            _ => None,
        },
        (AttrDomain::Enumeration(symbols), Value::Text(s)) => {
            (!symbols.contains(s)).then(|| format!("`{s}` is not one of {symbols:?}"))
        }
        (AttrDomain::Text, Value::Text(_)) | (AttrDomain::Boolean, Value::Bool(_)) => None,
        _ => Some(format!("value {v:#} has the wrong kind")),
    }
}
