//! Upper ontology: a tree of object types rooted at `Object`, with the
//! attribute and relation vocabularies used to describe maps.

mod builtin;
mod map;
mod validate;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{ComputedRelation, Formula, Term, Value};

pub use builtin::builtin_ontology;
pub use map::{FactError, MapDocument, ObjectInstance, StateKey, WorldMap};
pub use validate::{validate_instance, validate_map, RuleId, ValidationReport, Violation};

pub const ROOT: &str = "Object";
pub const PHYSICAL_ROOT: &str = "PhysicalObject";
pub const ABSTRACT_ROOT: &str = "AbstractObject";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrDomain {
    Number {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        unit: Option<String>,
    },
    Enumeration(Vec<String>),
    Text,
    Boolean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RangeConstraint {
    Interval {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max: Option<f64>,
    },
    Allowed { allowed: Vec<Value> },
}

impl RangeConstraint {
    pub fn interval(min: f64, max: f64) -> Self {
        RangeConstraint::Interval {
            min: Some(min),
            max: Some(max),
        }
    }

    pub fn contains(&self, v: &Value) -> bool {
        match self {
            RangeConstraint::Interval { min, max } => v.as_f64().is_some_and(|x| {
                min.is_none_or(|lo| x >= lo) && max.is_none_or(|hi| x <= hi)
            }),
            RangeConstraint::Allowed { allowed } => allowed.contains(v),
        }
    }

    pub fn is_subset_of(&self, outer: &RangeConstraint) -> bool {
        match (self, outer) {
            (
                RangeConstraint::Interval { min, max },
                RangeConstraint::Interval {
                    min: omin,
                    max: omax,
                },
            ) => {
                let lo_ok = match (min, omin) {
                    (_, None) => true,
                    (None, Some(_)) => false,
                    (Some(a), Some(b)) => a >= b,
                };
                let hi_ok = match (max, omax) {
                    (_, None) => true,
                    (None, Some(_)) => false,
                    (Some(a), Some(b)) => a <= b,
                };
                lo_ok && hi_ok
            }
            (RangeConstraint::Allowed { allowed }, outer) => {
                allowed.iter().all(|v| outer.contains(v))
            }
            (RangeConstraint::Interval { min, max }, RangeConstraint::Allowed { allowed }) => {
                // Only a degenerate interval fits inside a finite set.
                min.is_some()
                    && min == max
                    && allowed.contains(&Value::number(min.unwrap_or_default()))
            }
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            RangeConstraint::Interval {
                min: Some(a),
                max: Some(b),
            } => a > b,
            RangeConstraint::Interval { .. } => false,
            RangeConstraint::Allowed { allowed } => allowed.is_empty(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: String,
    pub domain: AttrDomain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<RangeConstraint>,
}

impl AttributeDef {
    pub fn number(name: &str, unit: Option<&str>, range: Option<RangeConstraint>) -> Self {
        AttributeDef {
            name: name.into(),
            domain: AttrDomain::Number {
                unit: unit.map(str::to_string),
            },
            range,
        }
    }

    pub fn text(name: &str) -> Self {
        AttributeDef {
            name: name.into(),
            domain: AttrDomain::Text,
            range: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgKind {
    Object,
    Attribute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationSemantics {
    Extensional,
    Computed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationDef {
    pub name: String,
    pub arity: usize,
    pub argument_kinds: Vec<ArgKind>,
    pub semantics: RelationSemantics,
}

impl RelationDef {
    pub fn extensional(name: &str, kinds: &[ArgKind]) -> Self {
        RelationDef {
            name: name.into(),
            arity: kinds.len(),
            argument_kinds: kinds.to_vec(),
            semantics: RelationSemantics::Extensional,
        }
    }

    /// Binary relation between objects.
    pub fn binary(name: &str) -> Self {
        Self::extensional(name, &[ArgKind::Object, ArgKind::Object])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeKind {
    PhysicalLeaf,
    AbstractLeaf,
    Intermediate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSlot {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<RangeConstraint>,
    #[serde(default = "yes")]
    pub required: bool,
}

fn yes() -> bool {
    true
}

impl AttributeSlot {
    pub fn required(name: &str) -> Self {
        AttributeSlot {
            name: name.into(),
            range: None,
            required: true,
        }
    }

    pub fn optional(name: &str) -> Self {
        AttributeSlot {
            required: false,
            ..Self::required(name)
        }
    }

    pub fn within(mut self, range: RangeConstraint) -> Self {
        self.range = Some(range);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Multiplicity {
    Exactly(u32),
    AtLeast(u32),
}

impl Default for Multiplicity {
    fn default() -> Self {
        Multiplicity::AtLeast(1)
    }
}

impl Multiplicity {
    pub fn admits(self, n: usize) -> bool {
        match self {
            Multiplicity::Exactly(k) => n == k as usize,
            Multiplicity::AtLeast(k) => n >= k as usize,
        }
    }

    fn count(self) -> u32 {
        match self {
            Multiplicity::Exactly(k) | Multiplicity::AtLeast(k) => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubobjectSpec {
    pub role: String,
    #[serde(rename = "type")]
    pub type_name: String,
    #[serde(default)]
    pub multiplicity: Multiplicity,
}

impl SubobjectSpec {
    pub fn new(role: &str, type_name: &str, multiplicity: Multiplicity) -> Self {
        SubobjectSpec {
            role: role.into(),
            type_name: type_name.into(),
            multiplicity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeDef {
    pub name: String,
    /// `None` only for the root.
    pub parent: Option<String>,
    pub kind: TypeKind,
    #[serde(default)]
    pub attributes: Vec<AttributeSlot>,
    #[serde(default)]
    pub subobjects: Vec<SubobjectSpec>,
    /// Formulas over `?self` that every instance must satisfy.
    #[serde(default)]
    pub constraints: Vec<Formula>,
}

impl TypeDef {
    pub fn new(name: &str, parent: &str, kind: TypeKind) -> Self {
        TypeDef {
            name: name.into(),
            parent: Some(parent.into()),
            kind,
            attributes: Vec::new(),
            subobjects: Vec::new(),
            constraints: Vec::new(),
        }
    }

    pub fn with_attribute(mut self, slot: AttributeSlot) -> Self {
        self.attributes.push(slot);
        self
    }

    pub fn with_subobject(mut self, spec: SubobjectSpec) -> Self {
        self.subobjects.push(spec);
        self
    }

    pub fn with_constraint(mut self, f: Formula) -> Self {
        self.constraints.push(f);
        self
    }

    pub fn is_leaf(&self) -> bool {
        self.kind != TypeKind::Intermediate
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OntologyError {
    #[error("parent type `{0}` does not exist")]
    UnknownParent(String),
    #[error("`{0}` is already defined")]
    DuplicateName(String),
    #[error("range of attribute `{attribute}` in `{type_name}` is not a subset of the inherited range")]
    RangeNotSubsetOfParent { type_name: String, attribute: String },
    #[error("sub-object type `{0}` is not defined")]
    UnresolvedSubobjectType(String),
    #[error("physical type `{type_name}` cannot have abstract sub-object type `{subobject}`")]
    AbstractSubobjectInPhysicalType { type_name: String, subobject: String },
    #[error("attribute `{0}` is not in the vocabulary")]
    UnknownAttribute(String),
    #[error("type `{0}` does not exist")]
    UnknownType(String),
    #[error("`{type_name}` declared as {kind:?} outside its branch")]
    BranchMismatch { type_name: String, kind: TypeKind },
    #[error("invalid range for attribute `{0}`")]
    InvalidRange(String),
    #[error("multiplicity of role `{0}` must be at least 1")]
    InvalidMultiplicity(String),
    #[error("invalid relation `{0}`: {1}")]
    InvalidRelation(String, String),
    #[error("invalid constraint on `{type_name}`: {message}")]
    InvalidConstraint { type_name: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("`{relation}` expects {expected} arguments, got {got}")]
    ArityMismatch {
        relation: String,
        expected: usize,
        got: usize,
    },
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("argument {position} of `{relation}` must be {expected:?}-valued")]
    KindMismatch {
        relation: String,
        position: usize,
        expected: ArgKind,
    },
}

/// The type tree plus vocabularies. Values are immutable once published;
/// registration returns an extended copy.
#[derive(Debug, Clone, PartialEq)]
pub struct Ontology {
    types: BTreeMap<String, TypeDef>,
    attributes: BTreeMap<String, AttributeDef>,
    relations: BTreeMap<String, RelationDef>,
    functions: BTreeMap<String, usize>,
}

impl Ontology {
    /// The two-branch skeleton with the computed comparison relations and the
    /// built-in accessor functions.
    pub fn skeleton() -> Self {
        let mut types = BTreeMap::new();
        types.insert(
            ROOT.to_string(),
            TypeDef {
                name: ROOT.into(),
                parent: None,
                kind: TypeKind::Intermediate,
                attributes: Vec::new(),
                subobjects: Vec::new(),
                constraints: Vec::new(),
            },
        );
        for branch in [PHYSICAL_ROOT, ABSTRACT_ROOT] {
            types.insert(
                branch.to_string(),
                TypeDef::new(branch, ROOT, TypeKind::Intermediate),
            );
        }
        let relations = ComputedRelation::ALL
            .iter()
            .map(|r| {
                (
                    r.name().to_string(),
                    RelationDef {
                        name: r.name().into(),
                        arity: 2,
                        argument_kinds: vec![ArgKind::Attribute; 2],
                        semantics: RelationSemantics::Computed,
                    },
                )
            })
            .collect();
        let functions = [("attr", 2), ("sub", 2), ("action", 1), ("range", 1)]
            .into_iter()
            .map(|(n, a)| (n.to_string(), a))
            .collect();
        Ontology {
            types,
            attributes: BTreeMap::new(),
            relations,
            functions,
        }
    }

    pub fn type_def(&self, name: &str) -> Option<&TypeDef> {
        self.types.get(name)
    }

    pub fn types(&self) -> impl Iterator<Item = &TypeDef> {
        self.types.values()
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeDef> {
        self.attributes.get(name)
    }

    pub fn relation(&self, name: &str) -> Option<&RelationDef> {
        self.relations.get(name)
    }

    pub fn relations(&self) -> impl Iterator<Item = &RelationDef> {
        self.relations.values()
    }

    pub fn has_type(&self, name: &str) -> bool {
        self.types.contains_key(name)
    }

    pub fn children<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a TypeDef> + 'a {
        self.types
            .values()
            .filter(move |t| t.parent.as_deref() == Some(name))
    }

    pub fn register_attribute(&mut self, def: AttributeDef) -> Result<(), OntologyError> {
        if self.attributes.contains_key(&def.name) {
            return Err(OntologyError::DuplicateName(def.name));
        }
        if let Some(r) = &def.range {
            let numeric_interval = matches!(r, RangeConstraint::Interval { .. });
            let is_number = matches!(def.domain, AttrDomain::Number { .. });
            if r.is_empty() || (numeric_interval && !is_number) {
                return Err(OntologyError::InvalidRange(def.name));
            }
        }
        self.attributes.insert(def.name.clone(), def);
        Ok(())
    }

    pub fn register_relation(&mut self, def: RelationDef) -> Result<(), OntologyError> {
        if self.relations.contains_key(&def.name) {
            return Err(OntologyError::DuplicateName(def.name));
        }
        let bad = |why: &str| Err(OntologyError::InvalidRelation(def.name.clone(), why.into()));
        if def.arity == 0 {
            return bad("arity must be at least 1");
        }
        if def.argument_kinds.len() != def.arity {
            return bad("argument kinds must match the arity");
        }
        let reserved = ComputedRelation::from_name(&def.name).is_some();
        match def.semantics {
            RelationSemantics::Computed if !reserved => {
                return bad("no decision procedure with that name")
            }
            RelationSemantics::Extensional if reserved => {
                return bad("name is reserved for a computed relation")
            }
            _ => {}
        }
        self.relations.insert(def.name.clone(), def);
        Ok(())
    }

    /// Adds a type, returning the extended ontology.
    pub fn register_type(&self, def: TypeDef) -> Result<Ontology, OntologyError> {
        let mut next = self.clone();
        next.insert_type(def)?;
        Ok(next)
    }

    pub(crate) fn insert_type(&mut self, def: TypeDef) -> Result<(), OntologyError> {
        if self.types.contains_key(&def.name) {
            return Err(OntologyError::DuplicateName(def.name));
        }
        let Some(parent) = def.parent.as_deref().filter(|p| self.types.contains_key(*p)) else {
            return Err(OntologyError::UnknownParent(
                def.parent.clone().unwrap_or_default(),
            ));
        };

        let branch_root = match def.kind {
            TypeKind::PhysicalLeaf => Some(PHYSICAL_ROOT),
            TypeKind::AbstractLeaf => Some(ABSTRACT_ROOT),
            TypeKind::Intermediate => None,
        };
        if let Some(root) = branch_root {
            if !self.subtype_unchecked(parent, root) {
                return Err(OntologyError::BranchMismatch {
                    type_name: def.name,
                    kind: def.kind,
                });
            }
        }

        let inherited = self.resolved_attributes(parent);
        for slot in &def.attributes {
            let Some(vocab) = self.attributes.get(&slot.name) else {
                return Err(OntologyError::UnknownAttribute(slot.name.clone()));
            };
            let Some(range) = &slot.range else { continue };
            if range.is_empty() {
                return Err(OntologyError::InvalidRange(slot.name.clone()));
            }
            let outer = inherited
                .get(&slot.name)
                .and_then(|s| s.range.clone())
                .or_else(|| vocab.range.clone());
            if outer.is_some_and(|o| !range.is_subset_of(&o)) {
                return Err(OntologyError::RangeNotSubsetOfParent {
                    type_name: def.name.clone(),
                    attribute: slot.name.clone(),
                });
            }
        }

        let physical = self.subtype_unchecked(parent, PHYSICAL_ROOT);
        for sub in &def.subobjects {
            if !self.types.contains_key(&sub.type_name) {
                return Err(OntologyError::UnresolvedSubobjectType(sub.type_name.clone()));
            }
            if sub.multiplicity.count() == 0 {
                return Err(OntologyError::InvalidMultiplicity(sub.role.clone()));
            }
            if physical && !self.subtype_unchecked(&sub.type_name, PHYSICAL_ROOT) {
                return Err(OntologyError::AbstractSubobjectInPhysicalType {
                    type_name: def.name.clone(),
                    subobject: sub.type_name.clone(),
                });
            }
        }

        for c in &def.constraints {
            let invalid = |message: String| OntologyError::InvalidConstraint {
                type_name: def.name.clone(),
                message,
            };
            self.check_formula(c).map_err(|e| invalid(e.to_string()))?;
            if let Some(v) = c.free_vars().into_iter().find(|v| v != "self") {
                return Err(invalid(format!("only ?self may be free, found ?{v}")));
            }
        }

        // A leaf that gains a child becomes an intermediate node.
        if let Some(p) = self.types.get_mut(parent) {
            if p.is_leaf() {
                p.kind = TypeKind::Intermediate;
            }
        }
        self.types.insert(def.name.clone(), def);
        Ok(())
    }

    fn subtype_unchecked(&self, a: &str, b: &str) -> bool {
        let mut cur = Some(a);
        while let Some(name) = cur {
            if name == b {
                return true;
            }
            cur = self.types.get(name).and_then(|t| t.parent.as_deref());
        }
        false
    }

    /// Whether `b` lies on `a`'s parent chain (reflexive).
    pub fn is_subtype(&self, a: &str, b: &str) -> Result<bool, OntologyError> {
        for t in [a, b] {
            if !self.types.contains_key(t) {
                return Err(OntologyError::UnknownType(t.to_string()));
            }
        }
        Ok(self.subtype_unchecked(a, b))
    }

    pub fn is_physical(&self, type_name: &str) -> bool {
        self.subtype_unchecked(type_name, PHYSICAL_ROOT)
    }

    /// Chain from the root down to `name`.
    pub fn lineage(&self, name: &str) -> Vec<&TypeDef> {
        let mut chain = Vec::new();
        let mut cur = self.types.get(name);
        while let Some(t) = cur {
            chain.push(t);
            cur = t.parent.as_deref().and_then(|p| self.types.get(p));
        }
        chain.reverse();
        chain
    }

    /// All attributes of a type including inherited ones, with the tightest
    /// declared range (falling back to the vocabulary's range).
    pub fn resolved_attributes(&self, name: &str) -> BTreeMap<String, AttributeSlot> {
        let mut out: BTreeMap<String, AttributeSlot> = BTreeMap::new();
        for t in self.lineage(name) {
            for slot in &t.attributes {
                let base = self.attributes.get(&slot.name).and_then(|a| a.range.clone());
                let entry = out.entry(slot.name.clone()).or_insert(AttributeSlot {
                    name: slot.name.clone(),
                    range: base,
                    required: false,
                });
                if slot.range.is_some() {
                    entry.range = slot.range.clone();
                }
                entry.required |= slot.required;
            }
        }
        out
    }

    pub fn resolved_subobjects(&self, name: &str) -> Vec<SubobjectSpec> {
        self.lineage(name)
            .into_iter()
            .flat_map(|t| t.subobjects.iter().cloned())
            .collect()
    }

    pub fn resolved_constraints(&self, name: &str) -> Vec<Formula> {
        self.lineage(name)
            .into_iter()
            .flat_map(|t| t.constraints.iter().cloned())
            .collect()
    }

    /// Checks relation names, arities, argument kinds and function names.
    pub fn check_formula(&self, f: &Formula) -> Result<(), FormulaError> {
        let mut result = Ok(());
        f.visit_atoms(&mut |a| {
            if result.is_err() {
                return;
            }
            result = self.check_atom(&a.relation, &a.args);
        });
        result
    }

    fn check_atom(&self, relation: &str, args: &[Term]) -> Result<(), FormulaError> {
        let def = self
            .relations
            .get(relation)
            .ok_or_else(|| FormulaError::UnknownRelation(relation.to_string()))?;
        if def.arity != args.len() {
            return Err(FormulaError::ArityMismatch {
                relation: relation.to_string(),
                expected: def.arity,
                got: args.len(),
            });
        }
        for (i, (t, kind)) in args.iter().zip(&def.argument_kinds).enumerate() {
            self.check_term(t)?;
            let ok = match (kind, t) {
                (ArgKind::Object, Term::Lit(_)) => false,
                (ArgKind::Attribute, Term::Obj(_)) => false,
                (ArgKind::Object, Term::Func { name, .. }) => name == "sub",
                _ => true,
            };
            if !ok {
                return Err(FormulaError::KindMismatch {
                    relation: relation.to_string(),
                    position: i,
                    expected: *kind,
                });
            }
        }
        Ok(())
    }

    fn check_term(&self, t: &Term) -> Result<(), FormulaError> {
        if let Term::Func { name, args } = t {
            match self.functions.get(name) {
                None => return Err(FormulaError::UnknownFunction(name.clone())),
                Some(&n) if n != args.len() => {
                    return Err(FormulaError::ArityMismatch {
                        relation: name.clone(),
                        expected: n,
                        got: args.len(),
                    })
                }
                _ => {}
            }
            for a in args {
                self.check_term(a)?;
            }
        }
        Ok(())
    }

    /// Every type name reachable by walking up from each type ends at the root.
    pub fn is_tree(&self) -> bool {
        self.types.values().all(|t| {
            let mut seen = BTreeSet::new();
            let mut cur = Some(t.name.as_str());
            while let Some(n) = cur {
                if !seen.insert(n) {
                    return false;
                }
                cur = match self.types.get(n) {
                    Some(def) => def.parent.as_deref(),
                    None => return false,
                };
            }
            seen.contains(ROOT)
        })
    }
}

/// Ontology extensions as they appear in scenario files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OntologyExtension {
    #[serde(default)]
    pub attributes: Vec<AttributeDef>,
    #[serde(default)]
    pub relations: Vec<RelationDef>,
    #[serde(default)]
    pub types: Vec<TypeDef>,
}

impl Ontology {
    pub fn extend(&self, ext: &OntologyExtension) -> Result<Ontology, (String, OntologyError)> {
        let mut next = self.clone();
        for (i, a) in ext.attributes.iter().enumerate() {
            next.register_attribute(a.clone())
                .map_err(|e| (format!("/attributes/{i}"), e))?;
        }
        for (i, r) in ext.relations.iter().enumerate() {
            next.register_relation(r.clone())
                .map_err(|e| (format!("/relations/{i}"), e))?;
        }
        for (i, t) in ext.types.iter().enumerate() {
            next.insert_type(t.clone())
                .map_err(|e| (format!("/types/{i}"), e))?;
        }
        Ok(next)
    }
}
