use super::{Atom, Binding, Term};

/// One-way matching of a pattern term against a target term. Pattern
/// variables bind to ground target terms; a variable in the target matches
/// anything without producing a binding.
pub fn match_term(pattern: &Term, target: &Term, b: &mut Binding) -> bool {
    if matches!(target, Term::Var(_)) {
        return true;
    }
    match pattern {
        Term::Var(v) => match b.get(v) {
            Some(g) => g.to_term() == *target,
            None => match target.as_ground() {
                Some(g) => {
                    b.insert(v.clone(), g);
                    true
                }
                None => true,
            },
        },
        Term::Obj(_) | Term::Lit(_) => pattern == target,
        Term::Func { name, args } => match target {
            Term::Func {
                name: tname,
                args: targs,
            } if tname == name && targs.len() == args.len() => {
                args.iter().zip(targs).all(|(p, t)| match_term(p, t, b))
            }
            _ => false,
        },
    }
}

/// Matches a pattern literal against a target literal of the same polarity,
/// extending `b`. Returns the extended binding on success.
pub fn match_atom(pattern: &Atom, target: &Atom, b: &Binding) -> Option<Binding> {
    if pattern.relation != target.relation
        || pattern.negated != target.negated
        || pattern.args.len() != target.args.len()
    {
        return None;
    }
    let mut next = b.clone();
    pattern
        .args
        .iter()
        .zip(&target.args)
        .all(|(p, t)| match_term(p, t, &mut next))
        .then_some(next)
}

/// Every binding extension under which each target literal equals some
/// pattern literal, found by backtracking in target order.
pub fn cover_literals(patterns: &[&Atom], targets: &[&Atom], b: &Binding) -> Vec<Binding> {
    let mut out = Vec::new();
    cover(patterns, targets, b, &mut out);
    out.sort();
    out.dedup();
    out
}

fn cover(patterns: &[&Atom], targets: &[&Atom], b: &Binding, out: &mut Vec<Binding>) {
    let Some((first, rest)) = targets.split_first() else {
        out.push(b.clone());
        return;
    };
    for p in patterns {
        if let Some(next) = match_atom(p, first, b) {
            cover(patterns, rest, &next, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{parse, Formula, Ground};

    fn atom(s: &str) -> Atom {
        match parse(s).unwrap() {
            Formula::Atom(a) => a,
            _ => panic!(),
        }
    }

    #[test]
    fn binds_pattern_variables() {
        let b = match_atom(&atom("isIn(?x, ?b)"), &atom("isIn(box1, roomB)"), &Binding::new()).unwrap();
        assert_eq!(b["x"], Ground::obj("box1"));
        assert_eq!(b["b"], Ground::obj("roomB"));
        assert!(match_atom(&atom("isIn(?x, ?x)"), &atom("isIn(a, b)"), &Binding::new()).is_none());
        assert!(match_atom(&atom("not isIn(?x, ?b)"), &atom("isIn(a, b)"), &Binding::new()).is_none());
    }

    #[test]
    fn target_variables_are_wildcards() {
        let b = match_atom(&atom("isIn(box1, ?b)"), &atom("isIn(?y, roomB)"), &Binding::new()).unwrap();
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn covering_all_targets() {
        let effect = parse("isIn(?x, ?b) and not isIn(?x, ?a)").unwrap();
        let task = parse("isIn(box1, roomB)").unwrap();
        let found = cover_literals(&effect.atoms(), &task.atoms(), &Binding::new());
        assert_eq!(found.len(), 1);
        assert!(!found[0].contains_key("a"));
        let task = parse("isIn(box1, roomB) and isIn(box2, roomB)").unwrap();
        assert!(cover_literals(&effect.atoms(), &task.atoms(), &Binding::new()).is_empty());
    }
}
