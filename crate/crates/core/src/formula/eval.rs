use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::{Atom, Binding, Formula, Ground, Term, Tuple, Value};
use crate::ontology::WorldMap;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("variable ?{0} is not bound")]
    UnboundVariable(String),
    #[error("object `{0}` does not exist in the map")]
    UnknownObject(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EntailError {
    #[error("formula `{0}` is not ground")]
    NotGround(String),
    #[error("object `{0}` is outside the domain")]
    UnknownObject(String),
    #[error("{0} distinct atoms exceed the enumeration limit")]
    DomainTooLarge(usize),
}

/// Relations decided by a procedure over values instead of map tuples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ComputedRelation {
    Eq,
    Neq,
    Lt,
    Le,
    Gt,
    Ge,
}

impl ComputedRelation {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "eq" => Self::Eq,
            "neq" => Self::Neq,
            "lt" => Self::Lt,
            "le" => Self::Le,
            "gt" => Self::Gt,
            "ge" => Self::Ge,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Eq => "eq",
            Self::Neq => "neq",
            Self::Lt => "lt",
            Self::Le => "le",
            Self::Gt => "gt",
            Self::Ge => "ge",
        }
    }

    pub const ALL: [ComputedRelation; 6] =
        [Self::Eq, Self::Neq, Self::Lt, Self::Le, Self::Gt, Self::Ge];

    pub fn decide(self, a: &Ground, b: &Ground) -> bool {
        match self {
            Self::Eq => grounds_equal(a, b),
            Self::Neq => !grounds_equal(a, b),
            _ => {
                let (Some((x, ux)), Some((y, uy))) = (number(a), number(b)) else {
                    return false;
                };
                if ux.is_some() && uy.is_some() && ux != uy {
                    return false;
                }
                match self {
                    Self::Lt => x < y,
                    Self::Le => x <= y,
                    Self::Gt => x > y,
                    Self::Ge => x >= y,
                    Self::Eq | Self::Neq => unreachable!(),
                }
            }
        }
    }
}

fn number(g: &Ground) -> Option<(f64, Option<&str>)> {
    match g {
        Ground::Val(Value::Number { value, unit }) => Some((value.0, unit.as_deref())),
        _ => None,
    }
}

// Unit tags only matter when both sides carry one.
fn grounds_equal(a: &Ground, b: &Ground) -> bool {
    match (number(a), number(b)) {
        (Some((x, ux)), Some((y, uy))) => x == y && (ux.is_none() || uy.is_none() || ux == uy),
        _ => a == b,
    }
}

/// Resolves a term to a ground value. `Ok(None)` means the term is
/// undefined in this map (e.g. a missing attribute).
pub fn ground_term(t: &Term, map: &WorldMap, b: &Binding) -> Result<Option<Ground>, EvalError> {
    match t {
        Term::Var(v) => b
            .get(v)
            .cloned()
            .map(Some)
            .ok_or_else(|| EvalError::UnboundVariable(v.clone())),
        Term::Obj(o) => {
            if map.contains_object(o) {
                Ok(Some(Ground::Obj(o.clone())))
            } else {
                Err(EvalError::UnknownObject(o.clone()))
            }
        }
        Term::Lit(v) => Ok(Some(Ground::Val(v.clone()))),
        Term::Func { name, args } => {
            let mut vals = Vec::with_capacity(args.len());
            for a in args {
                match ground_term(a, map, b)? {
                    Some(g) => vals.push(g),
                    None => return Ok(None),
                }
            }
            apply_function(name, &vals, map)
        }
    }
}

fn apply_function(name: &str, args: &[Ground], map: &WorldMap) -> Result<Option<Ground>, EvalError> {
    let object = |g: &Ground| g.as_obj().and_then(|id| map.object(id));
    let key = |g: &Ground| match g {
        Ground::Val(Value::Text(s)) => Some(s.clone()),
        _ => None,
    };
    match (name, args) {
        ("attr", [o, k]) => Ok(object(o)
            .zip(key(k))
            .and_then(|(o, k)| o.attributes.get(&k).cloned())
            .map(Ground::Val)),
        ("sub", [o, k]) => Ok(object(o)
            .zip(key(k))
            .and_then(|(o, k)| o.subobjects.get(&k).and_then(|ids| ids.first().cloned()))
            .map(Ground::Obj)),
        // Metadata accessors read the same-named attribute.
        ("range" | "action", [o]) => Ok(object(o)
            .and_then(|o| o.attributes.get(name).cloned())
            .map(Ground::Val)),
        _ => Err(EvalError::UnknownFunction(name.to_string())),
    }
}

fn atom_holds(a: &Atom, map: &WorldMap, b: &Binding) -> Result<bool, EvalError> {
    let mut args = Vec::with_capacity(a.args.len());
    let mut defined = true;
    for t in &a.args {
        match ground_term(t, map, b)? {
            Some(g) => args.push(g),
            None => defined = false,
        }
    }
    let positive = if !defined {
        false
    } else if let Some(rel) = ComputedRelation::from_name(&a.relation) {
        match args.as_slice() {
            [x, y] => rel.decide(x, y),
            _ => false,
        }
    } else {
        map.holds(&Tuple {
            relation: a.relation.clone(),
            args,
        })
    };
    Ok(positive != a.negated)
}

/// Truth of `f` in `map` under binding `b`, with closed-world semantics for
/// extensional relations.
pub fn evaluate(f: &Formula, map: &WorldMap, b: &Binding) -> Result<bool, EvalError> {
    match f {
        Formula::True => Ok(true),
        Formula::Atom(a) => atom_holds(a, map, b),
        Formula::And(xs) => {
            for x in xs {
                if !evaluate(x, map, b)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Formula::Or(xs) => {
            for x in xs {
                if evaluate(x, map, b)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
    }
}

fn substitute_term(t: &Term, b: &Binding) -> Term {
    match t {
        Term::Var(v) => b.get(v).map_or_else(|| t.clone(), Ground::to_term),
        Term::Func { name, args } => Term::Func {
            name: name.clone(),
            args: args.iter().map(|a| substitute_term(a, b)).collect(),
        },
        Term::Obj(_) | Term::Lit(_) => t.clone(),
    }
}

pub fn substitute_atom(a: &Atom, b: &Binding) -> Atom {
    Atom {
        relation: a.relation.clone(),
        args: a.args.iter().map(|t| substitute_term(t, b)).collect(),
        negated: a.negated,
    }
}

/// Replaces bound variables; unbound ones are left in place.
pub fn substitute(f: &Formula, b: &Binding) -> Formula {
    match f {
        Formula::True => Formula::True,
        Formula::Atom(a) => Formula::Atom(substitute_atom(a, b)),
        Formula::And(xs) => Formula::And(xs.iter().map(|x| substitute(x, b)).collect()),
        Formula::Or(xs) => Formula::Or(xs.iter().map(|x| substitute(x, b)).collect()),
    }
}

/// Every assignment of `f`'s free variables to map objects under which `f`
/// holds, ordered by the values of the variables in name order.
///
/// Positive extensional atoms are joined against the map's tuples first;
/// variables they leave unconstrained are enumerated over all objects.
pub fn satisfying_bindings(f: &Formula, map: &WorldMap) -> Vec<Binding> {
    let vars: Vec<String> = f.free_vars().into_iter().collect();
    let objects: Vec<&str> = map.object_ids().collect();
    let mut found: BTreeSet<Vec<String>> = BTreeSet::new();

    for disjunct in f.disjuncts() {
        let join: Vec<&Atom> = match disjunct.conjuncts() {
            Some(atoms) => atoms
                .into_iter()
                .filter(|a| !a.negated && ComputedRelation::from_name(&a.relation).is_none())
                .filter(|a| a.args.iter().all(|t| !matches!(t, Term::Func { .. })))
                .collect(),
            None => Vec::new(),
        };
        join_atoms(&join, map, &mut BTreeMap::new(), &mut |partial| {
            let free: Vec<&String> = vars.iter().filter(|v| !partial.contains_key(*v)).collect();
            enumerate(&free, &objects, &mut partial.clone(), &mut |full| {
                if evaluate(f, map, full).unwrap_or(false) {
                    found.insert(
                        vars.iter()
                            .map(|v| full[v].as_obj().unwrap_or_default().to_string())
                            .collect(),
                    );
                }
            });
        });
    }

    found
        .into_iter()
        .map(|vals| {
            vars.iter()
                .cloned()
                .zip(vals.into_iter().map(Ground::Obj))
                .collect()
        })
        .collect()
}

fn join_atoms(
    atoms: &[&Atom],
    map: &WorldMap,
    b: &mut Binding,
    emit: &mut dyn FnMut(&Binding),
) {
    let Some((first, rest)) = atoms.split_first() else {
        emit(b);
        return;
    };
    for tuple in map.tuples_of(&first.relation) {
        if tuple.args.len() != first.args.len() {
            continue;
        }
        let mut added = Vec::new();
        let mut ok = true;
        for (t, g) in first.args.iter().zip(&tuple.args) {
            let matches = match t {
                Term::Var(v) => match b.get(v) {
                    Some(bound) => bound == g,
                    None if g.as_obj().is_some() => {
                        b.insert(v.clone(), g.clone());
                        added.push(v.clone());
                        true
                    }
                    None => false,
                },
                Term::Obj(o) => g.as_obj() == Some(o.as_str()),
                Term::Lit(v) => matches!(g, Ground::Val(x) if x == v),
                Term::Func { .. } => true,
            };
            if !matches {
                ok = false;
                break;
            }
        }
        if ok {
            join_atoms(rest, map, b, emit);
        }
        for v in added {
            b.remove(&v);
        }
    }
}

fn enumerate(
    vars: &[&String],
    objects: &[&str],
    b: &mut Binding,
    emit: &mut dyn FnMut(&Binding),
) {
    let Some((first, rest)) = vars.split_first() else {
        emit(b);
        return;
    };
    for o in objects {
        b.insert((*first).clone(), Ground::obj(*o));
        enumerate(rest, objects, b, emit);
    }
    b.remove(*first);
}

/// Upper bound on distinct atoms for [`entails`].
pub const MAX_ENTAILMENT_ATOMS: usize = 20;

/// Whether every valuation satisfying `phi` also satisfies `psi`, deciding
/// by enumeration over the atoms the two formulas mention.
pub fn entails(
    phi: &Formula,
    psi: &Formula,
    domain: &BTreeSet<String>,
) -> Result<bool, EntailError> {
    for f in [phi, psi] {
        if !f.is_ground() {
            return Err(EntailError::NotGround(f.to_string()));
        }
        if let Some(o) = f.objects().into_iter().find(|o| !domain.contains(o)) {
            return Err(EntailError::UnknownObject(o));
        }
    }
    let mut index: BTreeMap<Atom, usize> = BTreeMap::new();
    for a in phi.atoms().into_iter().chain(psi.atoms()) {
        if fixed_truth(a).is_none() {
            let n = index.len();
            index.entry(a.positive()).or_insert(n);
        }
    }
    let n = index.len();
    if n > MAX_ENTAILMENT_ATOMS {
        return Err(EntailError::DomainTooLarge(n));
    }
    for valuation in 0u64..(1u64 << n) {
        let truth = |a: &Atom| -> bool {
            let positive = fixed_truth(a)
                .unwrap_or_else(|| valuation >> index[&a.positive()] & 1 == 1);
            positive != a.negated
        };
        if propositional(phi, &truth) && !propositional(psi, &truth) {
            return Ok(false);
        }
    }
    Ok(true)
}

// Computed atoms over literals have a fixed truth value.
fn fixed_truth(a: &Atom) -> Option<bool> {
    let rel = ComputedRelation::from_name(&a.relation)?;
    match a.args.as_slice() {
        [Term::Lit(x), Term::Lit(y)] => {
            Some(rel.decide(&Ground::Val(x.clone()), &Ground::Val(y.clone())))
        }
        _ => None,
    }
}

fn propositional(f: &Formula, truth: &dyn Fn(&Atom) -> bool) -> bool {
    match f {
        Formula::True => true,
        Formula::Atom(a) => truth(a),
        Formula::And(xs) => xs.iter().all(|x| propositional(x, truth)),
        Formula::Or(xs) => xs.iter().any(|x| propositional(x, truth)),
    }
}
