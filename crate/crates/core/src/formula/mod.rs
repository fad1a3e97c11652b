//! Quantifier-free situation formulas.
//!
//! Formulas are built from relation atoms joined by `and` / `or`, with
//! negation allowed only directly on an atom. Terms are variables (`?x`),
//! object references (`box1`), literals (`3`, `"red"`, `true`) and function
//! applications (`attr(?x, "weight")`).
//!
//! A [`Task`] pairs a precondition with an effect: it describes an intended
//! change of a local situation, not an implication.

mod eval;
mod parse;
mod unify;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use ordered_float::OrderedFloat;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use eval::{
    entails, evaluate, ground_term, satisfying_bindings, substitute, substitute_atom, ComputedRelation, EntailError,
    EvalError, MAX_ENTAILMENT_ATOMS,
};
pub use parse::{parse, ParseError};
pub use unify::{cover_literals, match_atom, match_term};

/// An attribute or literal value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Number {
        value: OrderedFloat<f64>,
        unit: Option<String>,
    },
    Text(String),
    Bool(bool),
}

impl Value {
    pub fn number(value: f64) -> Self {
        Value::Number {
            value: OrderedFloat(value),
            unit: None,
        }
    }

    pub fn with_unit(value: f64, unit: impl Into<String>) -> Self {
        Value::Number {
            value: OrderedFloat(value),
            unit: Some(unit.into()),
        }
    }

    pub fn text(s: impl Into<String>) -> Self {
        Value::Text(s.into())
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Number { value, .. } => Some(value.0),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }
}

fn write_number(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        write!(f, "{}", v as i64)
    } else {
        write!(f, "{v}")
    }
}

fn write_string_literal(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // Units are not part of the formula syntax; they print only in
            // diagnostic output.
            Value::Number { value, unit } => {
                write_number(f, value.0)?;
                if let Some(u) = unit {
                    if f.alternate() {
                        write!(f, "[{u}]")?;
                    }
                }
                Ok(())
            }
            Value::Text(s) => write_string_literal(f, s),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Number { value, unit: None } => s.serialize_f64(value.0),
            Value::Number {
                value,
                unit: Some(u),
            } => {
                use serde::ser::SerializeMap;
                let mut m = s.serialize_map(Some(2))?;
                m.serialize_entry("value", &value.0)?;
                m.serialize_entry("unit", u)?;
                m.end()
            }
            Value::Text(t) => s.serialize_str(t),
            Value::Bool(b) => s.serialize_bool(*b),
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Bool(bool),
            Text(String),
            Unit { value: f64, unit: String },
        }
        Ok(match Repr::deserialize(d)? {
            Repr::Num(v) => Value::number(v),
            Repr::Bool(b) => Value::Bool(b),
            Repr::Text(t) => Value::Text(t),
            Repr::Unit { value, unit } => Value::with_unit(value, unit),
        })
    }
}

/// A fully resolved term: an object of the map or a plain value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ground {
    Obj(String),
    Val(Value),
}

impl Ground {
    pub fn obj(id: impl Into<String>) -> Self {
        Ground::Obj(id.into())
    }

    pub fn as_obj(&self) -> Option<&str> {
        match self {
            Ground::Obj(id) => Some(id),
            Ground::Val(_) => None,
        }
    }

    pub fn to_term(&self) -> Term {
        match self {
            Ground::Obj(id) => Term::Obj(id.clone()),
            Ground::Val(v) => Term::Lit(v.clone()),
        }
    }
}

impl fmt::Display for Ground {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ground::Obj(id) => f.write_str(id),
            Ground::Val(v) => v.fmt(f),
        }
    }
}

impl Serialize for Ground {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Ground {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        match parse::parse_term(&text).map_err(serde::de::Error::custom)? {
            Term::Obj(id) => Ok(Ground::Obj(id)),
            Term::Lit(v) => Ok(Ground::Val(v)),
            other => Err(serde::de::Error::custom(format!(
                "`{other}` is not a ground term"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(String),
    Obj(String),
    Lit(Value),
    Func { name: String, args: Vec<Term> },
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn obj(id: impl Into<String>) -> Self {
        Term::Obj(id.into())
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Func { args, .. } => args.iter().for_each(|a| a.collect_vars(out)),
            Term::Obj(_) | Term::Lit(_) => {}
        }
    }

    fn collect_objects(&self, out: &mut BTreeSet<String>) {
        match self {
            Term::Obj(o) => {
                out.insert(o.clone());
            }
            Term::Func { args, .. } => args.iter().for_each(|a| a.collect_objects(out)),
            Term::Var(_) | Term::Lit(_) => {}
        }
    }

    /// The ground form of a term that holds no variables or function calls.
    pub fn as_ground(&self) -> Option<Ground> {
        match self {
            Term::Obj(o) => Some(Ground::Obj(o.clone())),
            Term::Lit(v) => Some(Ground::Val(v.clone())),
            _ => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "?{v}"),
            Term::Obj(o) => f.write_str(o),
            Term::Lit(v) => v.fmt(f),
            Term::Func { name, args } => {
                write!(f, "{name}(")?;
                write_args(f, args)?;
                f.write_str(")")
            }
        }
    }
}

fn write_args(f: &mut fmt::Formatter<'_>, args: &[Term]) -> fmt::Result {
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        fmt::Display::fmt(a, f)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub relation: String,
    pub args: Vec<Term>,
    pub negated: bool,
}

impl Atom {
    pub fn new(relation: impl Into<String>, args: Vec<Term>) -> Self {
        Atom {
            relation: relation.into(),
            args,
            negated: false,
        }
    }

    pub fn negate(mut self) -> Self {
        self.negated = !self.negated;
        self
    }

    pub fn positive(&self) -> Atom {
        Atom {
            negated: false,
            ..self.clone()
        }
    }

    /// The tuple this atom denotes when every argument is ground.
    pub fn to_tuple(&self) -> Option<Tuple> {
        let args = self
            .args
            .iter()
            .map(Term::as_ground)
            .collect::<Option<Vec<_>>>()?;
        Some(Tuple {
            relation: self.relation.clone(),
            args,
        })
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("not ")?;
        }
        write!(f, "{}(", self.relation)?;
        write_args(f, &self.args)?;
        f.write_str(")")
    }
}

/// A ground relation instance, e.g. `isIn(box1, roomA)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tuple {
    pub relation: String,
    pub args: Vec<Ground>,
}

impl Tuple {
    pub fn new(relation: impl Into<String>, args: Vec<Ground>) -> Self {
        Tuple {
            relation: relation.into(),
            args,
        }
    }

    pub fn to_atom(&self) -> Atom {
        Atom::new(
            self.relation.clone(),
            self.args.iter().map(Ground::to_term).collect(),
        )
    }

    pub fn mentions(&self, object: &str) -> bool {
        self.args.iter().any(|a| a.as_obj() == Some(object))
    }
}

impl fmt::Display for Tuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.to_atom().fmt(f)
    }
}

impl Serialize for Tuple {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tuple {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        match parse(&text).map_err(serde::de::Error::custom)? {
            Formula::Atom(a) if !a.negated => a
                .to_tuple()
                .ok_or_else(|| serde::de::Error::custom(format!("`{text}` is not ground"))),
            _ => Err(serde::de::Error::custom(format!(
                "`{text}` is not a single positive atom"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    True,
    Atom(Atom),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

impl Formula {
    pub fn atom(relation: impl Into<String>, args: Vec<Term>) -> Self {
        Formula::Atom(Atom::new(relation, args))
    }

    /// Conjunction; a single operand collapses to itself, none to `true`.
    pub fn and(mut parts: Vec<Formula>) -> Self {
        match parts.len() {
            0 => Formula::True,
            1 => parts.pop().unwrap(),
            _ => Formula::And(parts),
        }
    }

    pub fn or(mut parts: Vec<Formula>) -> Self {
        match parts.len() {
            0 => Formula::True,
            1 => parts.pop().unwrap(),
            _ => Formula::Or(parts),
        }
    }

    pub fn is_true(&self) -> bool {
        matches!(self, Formula::True)
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit_atoms(&mut |a| a.args.iter().for_each(|t| t.collect_vars(&mut out)));
        out
    }

    pub fn objects(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit_atoms(&mut |a| a.args.iter().for_each(|t| t.collect_objects(&mut out)));
        out
    }

    pub fn is_ground(&self) -> bool {
        self.free_vars().is_empty()
    }

    pub fn visit_atoms<'a>(&'a self, f: &mut impl FnMut(&'a Atom)) {
        match self {
            Formula::True => {}
            Formula::Atom(a) => f(a),
            Formula::And(xs) | Formula::Or(xs) => xs.iter().for_each(|x| x.visit_atoms(f)),
        }
    }

    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.visit_atoms(&mut |a| out.push(a));
        out
    }

    pub fn contains_disjunction(&self) -> bool {
        match self {
            Formula::Or(_) => true,
            Formula::And(xs) => xs.iter().any(Formula::contains_disjunction),
            _ => false,
        }
    }

    /// The literals of a disjunction-free formula, flattened in order.
    /// Returns `None` when the formula contains `or`.
    pub fn conjuncts(&self) -> Option<Vec<&Atom>> {
        if self.contains_disjunction() {
            None
        } else {
            Some(self.atoms())
        }
    }

    /// Top-level disjuncts; a non-disjunction is its own single disjunct.
    pub fn disjuncts(&self) -> Vec<&Formula> {
        match self {
            Formula::Or(xs) => xs.iter().collect(),
            other => vec![other],
        }
    }
}

impl From<Atom> for Formula {
    fn from(a: Atom) -> Self {
        Formula::Atom(a)
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => f.write_str("true"),
            Formula::Atom(a) => a.fmt(f),
            Formula::And(xs) => {
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" and ")?;
                    }
                    match x {
                        Formula::And(_) | Formula::Or(_) => write!(f, "({x})")?,
                        _ => x.fmt(f)?,
                    }
                }
                Ok(())
            }
            Formula::Or(xs) => {
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" or ")?;
                    }
                    match x {
                        Formula::Or(_) => write!(f, "({x})")?,
                        _ => x.fmt(f)?,
                    }
                }
                Ok(())
            }
        }
    }
}

impl FromStr for Formula {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

impl Serialize for Formula {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Formula {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}

/// A precondition/effect pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Task {
    #[serde(default = "true_formula")]
    pub precondition: Formula,
    pub effect: Formula,
}

fn true_formula() -> Formula {
    Formula::True
}

impl Task {
    pub fn new(precondition: Formula, effect: Formula) -> Self {
        Task {
            precondition,
            effect,
        }
    }

    /// A task without a precondition.
    pub fn goal(effect: Formula) -> Self {
        Task::new(Formula::True, effect)
    }

    pub fn substitute(&self, b: &Binding) -> Task {
        Task::new(substitute(&self.precondition, b), substitute(&self.effect, b))
    }

    pub fn is_ground(&self) -> bool {
        self.precondition.is_ground() && self.effect.is_ground()
    }

    pub fn objects(&self) -> BTreeSet<String> {
        let mut o = self.precondition.objects();
        o.extend(self.effect.objects());
        o
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} -> {})", self.precondition, self.effect)
    }
}

/// Variable assignment. Keys are variable names without the `?` prefix.
pub type Binding = BTreeMap<String, Ground>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printer_parenthesizes_nested_same_connective() {
        let a = Formula::atom("p", vec![Term::obj("a")]);
        let b = Formula::atom("q", vec![Term::obj("b")]);
        let c = Formula::atom("r", vec![Term::var("x")]);
        let nested = Formula::And(vec![Formula::And(vec![a.clone(), b.clone()]), c.clone()]);
        assert_eq!(nested.to_string(), "(p(a) and q(b)) and r(?x)");
        let mixed = Formula::Or(vec![Formula::And(vec![a.clone(), b.clone()]), c.clone()]);
        assert_eq!(mixed.to_string(), "p(a) and q(b) or r(?x)");
        let mixed = Formula::And(vec![Formula::Or(vec![a, b]), c]);
        assert_eq!(mixed.to_string(), "(p(a) or q(b)) and r(?x)");
    }

    #[test]
    fn value_json_forms() {
        let v: Value = serde_json::from_str(r#"{"value": 37.5, "unit": "C"}"#).unwrap();
        assert_eq!(v, Value::with_unit(37.5, "C"));
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"{"value":37.5,"unit":"C"}"#);
        let v: Value = serde_json::from_str("3").unwrap();
        assert_eq!(v, Value::number(3.0));
        let v: Value = serde_json::from_str("\"red\"").unwrap();
        assert_eq!(v, Value::text("red"));
    }

    #[test]
    fn free_vars_and_objects() {
        let f = parse("isIn(?x, roomA) and not isIn(?y, ?x)").unwrap();
        assert_eq!(
            f.free_vars().into_iter().collect::<Vec<_>>(),
            vec!["x".to_string(), "y".to_string()]
        );
        assert_eq!(f.objects().into_iter().collect::<Vec<_>>(), vec!["roomA"]);
    }
}
