use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{Atom, ComputedRelation, Formula, Term, Tuple, Value};
use crate::ontology::WorldMap;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EffectError {
    #[error("effect `{0}` contains a disjunction")]
    DisjunctiveEffect(String),
    #[error("effect atom `{0}` is not ground")]
    NotGround(String),
    #[error("effect atom `{0}` cannot be applied")]
    Unassignable(String),
}

/// A single observable change to a map.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Change {
    Assert { atom: Tuple },
    Retract { atom: Tuple },
    Assign {
        object: String,
        attribute: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        old: Option<Value>,
        new: Value,
    },
}

/// What an effect literal does to a map, before it is applied.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Write {
    Truth(Tuple, bool),
    Attr { object: String, attribute: String, value: Value },
}

/// Reads `eq(attr(o, "a"), v)` (either orientation) as an assignment.
fn as_assignment(a: &Atom) -> Option<(String, String, Value)> {
    if a.negated || ComputedRelation::from_name(&a.relation) != Some(ComputedRelation::Eq) {
        return None;
    }
    let [l, r] = a.args.as_slice() else { return None };
    let attr = |t: &Term| match t {
        Term::Func { name, args } if name == "attr" => match args.as_slice() {
            [Term::Obj(o), Term::Lit(Value::Text(k))] => Some((o.clone(), k.clone())),
            _ => None,
        },
        _ => None,
    };
    let lit = |t: &Term| match t {
        Term::Lit(v) => Some(v.clone()),
        _ => None,
    };
    attr(l)
        .zip(lit(r))
        .or_else(|| attr(r).zip(lit(l)))
        .map(|((o, k), v)| (o, k, v))
}

/// The writes a ground conjunctive effect performs, in literal order.
pub fn effect_writes(effect: &Formula) -> Result<Vec<Write>, EffectError> {
    let Some(literals) = effect.conjuncts() else {
        return Err(EffectError::DisjunctiveEffect(effect.to_string()));
    };
    let mut out = Vec::with_capacity(literals.len());
    for a in literals {
        if ComputedRelation::from_name(&a.relation).is_some() {
            match as_assignment(a) {
                Some((object, attribute, value)) => out.push(Write::Attr {
                    object,
                    attribute,
                    value,
                }),
                None => return Err(EffectError::Unassignable(a.to_string())),
            }
            continue;
        }
        match a.to_tuple() {
            Some(t) => out.push(Write::Truth(t, !a.negated)),
            None => return Err(EffectError::NotGround(a.to_string())),
        }
    }
    Ok(out)
}

/// Applies writes in place and returns what actually changed.
pub fn apply_writes(map: &mut WorldMap, writes: &[Write]) -> Vec<Change> {
    let mut changes = Vec::new();
    for w in writes {
        match w {
            Write::Truth(t, true) => {
                if map.assert_tuple(t.clone()) {
                    changes.push(Change::Assert { atom: t.clone() });
                }
            }
            Write::Truth(t, false) => {
                if map.retract_tuple(t) {
                    changes.push(Change::Retract { atom: t.clone() });
                }
            }
            Write::Attr {
                object,
                attribute,
                value,
            } => {
                if map.attribute(object, attribute) == Some(value) {
                    map.bump_version();
                    continue;
                }
                if let Some(old) = map.set_attribute(object, attribute, value.clone()) {
                    changes.push(Change::Assign {
                        object: object.clone(),
                        attribute: attribute.clone(),
                        old,
                        new: value.clone(),
                    });
                }
            }
        }
    }
    changes
}

pub fn apply_effect_in_place(map: &mut WorldMap, effect: &Formula) -> Result<Vec<Change>, EffectError> {
    let writes = effect_writes(effect)?;
    Ok(apply_writes(map, &writes))
}

/// The state reached by applying a ground conjunctive effect.
pub fn project_state(state: &WorldMap, effect: &Formula) -> Result<WorldMap, EffectError> {
    let mut next = state.clone();
    apply_effect_in_place(&mut next, effect)?;
    Ok(next)
}

/// Undoes a list of changes, newest first.
pub fn revert_changes(map: &mut WorldMap, changes: &[Change]) {
    for c in changes.iter().rev() {
        match c {
            Change::Assert { atom } => {
                map.retract_tuple(atom);
            }
            Change::Retract { atom } => {
                map.assert_tuple(atom.clone());
            }
            Change::Assign {
                object,
                attribute,
                old: Some(old),
                ..
            } => {
                map.set_attribute(object, attribute, old.clone());
            }
            Change::Assign { .. } => {}
        }
    }
}

/// The literal that restores the value `w` overwrites, as found in `before`.
/// `None` when the previous value cannot be expressed (an attribute that was unset).
pub fn restoring_literal(before: &WorldMap, w: &Write) -> Option<Formula> {
    match w {
        Write::Truth(t, _) => {
            let atom = t.to_atom();
            Some(Formula::Atom(if before.holds(t) { atom } else { atom.negate() }))
        }
        Write::Attr { object, attribute, .. } => {
            let old = before.attribute(object, attribute)?;
            Some(Formula::atom(
                "eq",
                vec![
                    Term::Func {
                        name: "attr".into(),
                        args: vec![Term::obj(object.clone()), Term::Lit(Value::text(attribute.clone()))],
                    },
                    Term::Lit(old.clone()),
                ],
            ))
        }
    }
}

/// What a write or a read refers to, for interference checks.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum StateCell {
    Tuple(Tuple),
    Attr(String, String),
}

impl Write {
    pub(crate) fn cell(&self) -> StateCell {
        match self {
            Write::Truth(t, _) => StateCell::Tuple(t.clone()),
            Write::Attr { object, attribute, .. } => StateCell::Attr(object.clone(), attribute.clone()),
        }
    }
}
