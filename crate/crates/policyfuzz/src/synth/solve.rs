//! Internal bounded model finder over the constraint language. Candidate
//! values come from atom literals plus a deterministic "fresh value" ladder,
//! so underconstrained variables still get diverse values (including
//! control characters for strings, which several weakness classes need).
//! There is no randomness here: given the same formula, types and
//! exclusion set, the result is identical.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::constraints::{CmpOp, ConstraintAtom, ConstraintFormula, ConstraintVar};
use super::{ConcreteValue, ValueType};
use crate::digest::digest_chunks;

const LADDER_LEN: usize = 128;
const MAX_ATTEMPTS: usize = 512;
const NODE_BUDGET: usize = 200_000;
const MAX_STR_LEN: usize = 32;

/// A model variable: the value of a field/item, or the definedness flag
/// (φ) of a session item.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SolverVar {
    Value(ConstraintVar),
    Defined(ConstraintVar),
}

pub type Assignment = BTreeMap<SolverVar, ConcreteValue>;

#[derive(Debug, Clone, PartialEq)]
pub enum SolveOutcome {
    Solved(SolvedRows),
    Unsat,
    /// An atom compares incompatible types; treated as UNSAT by callers.
    TypeMismatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolvedRows {
    pub rows: Vec<BTreeMap<ConstraintVar, ConcreteValue>>,
    pub digest: String,
}

/// Canonical digest of a row set: fields sorted inside each row, rows
/// sorted lexicographically. Shared by the distinctness bookkeeping and
/// the oracle's row-resource identity.
pub fn rows_digest(rows: &[BTreeMap<ConstraintVar, ConcreteValue>]) -> String {
    let mut lines: Vec<String> = rows
        .iter()
        .map(|row| {
            row.iter()
                .map(|(var, value)| format!("{var}={}", value.canonical()))
                .collect::<Vec<_>>()
                .join(";")
        })
        .collect();
    lines.sort();
    let joined = lines.join("|");
    digest_chunks([joined.as_bytes()])
}

fn cmp_values(op: CmpOp, lhs: &ConcreteValue, rhs: &ConcreteValue) -> bool {
    match (lhs, rhs) {
        (ConcreteValue::Int(a), ConcreteValue::Int(b)) => op.eval(a, b),
        (ConcreteValue::Str(a), ConcreteValue::Str(b)) => op.eval(a, b),
        (ConcreteValue::Bool(a), ConcreteValue::Bool(b)) => op.eval(a, b),
        _ => false,
    }
}

fn eval_atom(atom: &ConstraintAtom, assignment: &Assignment) -> Option<bool> {
    match atom {
        ConstraintAtom::Cmp { lhs, op, rhs } => assignment
            .get(&SolverVar::Value(lhs.clone()))
            .map(|v| cmp_values(*op, v, rhs)),
        ConstraintAtom::CmpVar { lhs, op, rhs } => {
            let a = assignment.get(&SolverVar::Value(lhs.clone()))?;
            let b = assignment.get(&SolverVar::Value(rhs.clone()))?;
            Some(cmp_values(*op, a, b))
        }
        ConstraintAtom::Defined { var } => assignment
            .get(&SolverVar::Defined(var.clone()))
            .map(|v| matches!(v, ConcreteValue::Bool(true))),
    }
}

/// Three-valued evaluation: `None` when unassigned variables leave the
/// outcome open. Used both for pruning and final checks.
fn eval_partial(formula: &ConstraintFormula, assignment: &Assignment) -> Option<bool> {
    match formula {
        ConstraintFormula::True => Some(true),
        ConstraintFormula::False => Some(false),
        ConstraintFormula::Atom(atom) => eval_atom(atom, assignment),
        ConstraintFormula::Not(inner) => eval_partial(inner, assignment).map(|b| !b),
        ConstraintFormula::And(parts) => {
            let mut all_true = true;
            for p in parts {
                match eval_partial(p, assignment) {
                    Some(false) => return Some(false),
                    Some(true) => {}
                    None => all_true = false,
                }
            }
            if all_true {
                Some(true)
            } else {
                None
            }
        }
        ConstraintFormula::Or(parts) => {
            let mut all_false = true;
            for p in parts {
                match eval_partial(p, assignment) {
                    Some(true) => return Some(true),
                    Some(false) => {}
                    None => all_false = false,
                }
            }
            if all_false {
                Some(false)
            } else {
                None
            }
        }
    }
}

/// Evaluate a formula under a complete value assignment. Returns `None`
/// if the formula references unassigned variables or definedness atoms.
pub fn eval_formula(
    formula: &ConstraintFormula,
    values: &BTreeMap<ConstraintVar, ConcreteValue>,
) -> Option<bool> {
    let assignment: Assignment = values
        .iter()
        .map(|(var, value)| (SolverVar::Value(var.clone()), value.clone()))
        .collect();
    eval_partial(formula, &assignment)
}

/// Deterministic fresh value for an unconstrained slot. Strings stay
/// within printable ASCII plus the U+0000..U+001F control range; every
/// fourth entry carries a control byte. The non-digit skeleton is kept
/// constant ("v" plus optionally U+0017) so downstream digit
/// canonicalization collapses fresh values into a handful of classes.
fn ladder_value(ty: ValueType, var_index: usize, i: usize) -> ConcreteValue {
    match ty {
        ValueType::Int => ConcreteValue::Int(1000 + (var_index as i64) * 97 + (i as i64) * 13),
        ValueType::Str => {
            let mut s = format!("v{i}");
            if i % 4 == 3 {
                s.push('\u{17}');
            }
            s.truncate(MAX_STR_LEN);
            ConcreteValue::Str(s)
        }
        ValueType::Bool => ConcreteValue::Bool(i % 2 == 1),
    }
}

fn push_literal_neighborhood(
    out: &mut BTreeSet<ConcreteValue>,
    lit: &ConcreteValue,
    ty: ValueType,
) {
    if lit.value_type() != ty {
        return;
    }
    match lit {
        ConcreteValue::Int(n) => {
            out.insert(ConcreteValue::Int(n.saturating_sub(1)));
            out.insert(ConcreteValue::Int(*n));
            out.insert(ConcreteValue::Int(n.saturating_add(1)));
        }
        ConcreteValue::Str(s) => {
            if !s.is_empty() {
                out.insert(ConcreteValue::Str(s[..s.len() - 1].to_string()));
            }
            out.insert(ConcreteValue::Str(s.clone()));
            if s.len() < MAX_STR_LEN {
                out.insert(ConcreteValue::Str(format!("{s}!")));
            }
        }
        ConcreteValue::Bool(_) => {
            out.insert(ConcreteValue::Bool(false));
            out.insert(ConcreteValue::Bool(true));
        }
    }
}

/// Candidate values for one variable: literals it is compared against
/// (plus neighbors for the order operators), literals of variables it is
/// related to through var-var atoms, then the fresh-value ladder.
fn candidates(
    var: &ConstraintVar,
    ty: ValueType,
    formula: &ConstraintFormula,
    ladder_len: usize,
    var_index: usize,
) -> Vec<ConcreteValue> {
    let mut from_atoms = BTreeSet::new();
    let mut related: Vec<ConstraintVar> = Vec::new();
    for atom in formula.atoms() {
        match atom {
            ConstraintAtom::Cmp { lhs, rhs, .. } if lhs == var => {
                push_literal_neighborhood(&mut from_atoms, rhs, ty);
            }
            ConstraintAtom::CmpVar { lhs, rhs, .. } => {
                if lhs == var {
                    related.push(rhs.clone());
                } else if rhs == var {
                    related.push(lhs.clone());
                }
            }
            _ => {}
        }
    }
    // One hop of propagation: a var related through x = y can take the
    // literals y is compared against.
    for other in related {
        for atom in formula.atoms() {
            if let ConstraintAtom::Cmp { lhs, rhs, .. } = atom {
                if *lhs == other {
                    push_literal_neighborhood(&mut from_atoms, rhs, ty);
                }
            }
        }
    }
    let mut out: Vec<ConcreteValue> = from_atoms.into_iter().collect();
    for i in 0..ladder_len {
        let v = ladder_value(ty, var_index, i);
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

fn ordered_vars(
    var_types: &BTreeMap<ConstraintVar, ValueType>,
    formula: &ConstraintFormula,
) -> Vec<(SolverVar, ValueType)> {
    let mut vars: Vec<(SolverVar, ValueType)> = var_types
        .iter()
        .map(|(v, ty)| (SolverVar::Value(v.clone()), *ty))
        .collect();
    for atom in formula.atoms() {
        if let ConstraintAtom::Defined { var } = atom {
            let sv = SolverVar::Defined(var.clone());
            if !vars.iter().any(|(v, _)| *v == sv) {
                vars.push((sv, ValueType::Bool));
            }
        }
    }
    vars.sort_by(|(a, _), (b, _)| a.cmp(b));
    vars
}

/// Every atom must compare compatible types under the given typing.
fn check_types(
    formula: &ConstraintFormula,
    var_types: &BTreeMap<ConstraintVar, ValueType>,
) -> bool {
    for atom in formula.atoms() {
        match atom {
            ConstraintAtom::Cmp { lhs, rhs, .. } => match var_types.get(lhs) {
                Some(ty) if *ty == rhs.value_type() => {}
                _ => return false,
            },
            ConstraintAtom::CmpVar { lhs, rhs, .. } => {
                match (var_types.get(lhs), var_types.get(rhs)) {
                    (Some(a), Some(b)) if a == b => {}
                    _ => return false,
                }
            }
            ConstraintAtom::Defined { .. } => {}
        }
    }
    true
}

fn find_base(
    formula: &ConstraintFormula,
    vars: &[(SolverVar, ValueType)],
    candidate_lists: &[Vec<ConcreteValue>],
) -> Option<Assignment> {
    fn dfs(
        formula: &ConstraintFormula,
        vars: &[(SolverVar, ValueType)],
        lists: &[Vec<ConcreteValue>],
        idx: usize,
        current: &mut Assignment,
        nodes: &mut usize,
    ) -> bool {
        if *nodes >= NODE_BUDGET {
            return false;
        }
        if idx == vars.len() {
            return eval_partial(formula, current) == Some(true);
        }
        for value in &lists[idx] {
            *nodes += 1;
            if *nodes >= NODE_BUDGET {
                return false;
            }
            current.insert(vars[idx].0.clone(), value.clone());
            if eval_partial(formula, current) != Some(false)
                && dfs(formula, vars, lists, idx + 1, current, nodes)
            {
                return true;
            }
        }
        current.remove(&vars[idx].0);
        false
    }

    let mut current = Assignment::new();
    let mut nodes = 0usize;
    if dfs(formula, vars, candidate_lists, 0, &mut current, &mut nodes) {
        Some(current)
    } else {
        None
    }
}

/// Satisfying alternatives per variable with every other variable held at
/// the base model. The base value always qualifies, so no list is empty.
fn alternative_lists(
    base: &Assignment,
    formula: &ConstraintFormula,
    vars: &[(SolverVar, ValueType)],
    candidate_lists: &[Vec<ConcreteValue>],
) -> Vec<Vec<ConcreteValue>> {
    let mut out = Vec::with_capacity(vars.len());
    let mut current = base.clone();
    for (i, (var, _ty)) in vars.iter().enumerate() {
        let mut alts: Vec<ConcreteValue> = Vec::new();
        for cand in &candidate_lists[i] {
            let previous = current.insert(var.clone(), cand.clone());
            if eval_partial(formula, &current) == Some(true) {
                alts.push(cand.clone());
            }
            if let Some(prev) = previous {
                current.insert(var.clone(), prev);
            }
        }
        if alts.is_empty() {
            alts.push(
                base.get(&vars[i].0)
                    .cloned()
                    .expect("base assigns all vars"),
            );
        }
        out.push(alts);
    }
    out
}

/// Swap each variable in turn to its `salt`-selected satisfying alternative,
/// keeping the overall assignment a model at every step. Slow path for
/// formulas that couple variables.
fn diversify(
    base: &Assignment,
    formula: &ConstraintFormula,
    vars: &[(SolverVar, ValueType)],
    candidate_lists: &[Vec<ConcreteValue>],
    salt: u64,
) -> Assignment {
    let mut current = base.clone();
    for (i, (var, _ty)) in vars.iter().enumerate() {
        let mut alts: Vec<ConcreteValue> = Vec::new();
        for cand in &candidate_lists[i] {
            let previous = current.insert(var.clone(), cand.clone());
            if eval_partial(formula, &current) == Some(true) {
                alts.push(cand.clone());
            }
            if let Some(prev) = previous {
                current.insert(var.clone(), prev);
            }
        }
        if alts.is_empty() {
            continue;
        }
        let idx = (salt as usize + i) % alts.len();
        current.insert(var.clone(), alts[idx].clone());
    }
    current
}

/// Fast row construction: pick per-variable alternatives by index and keep
/// the result only if it still satisfies the formula (it always does when
/// variables are independent); otherwise fall back to the sequential path.
fn build_row(
    base: &Assignment,
    formula: &ConstraintFormula,
    vars: &[(SolverVar, ValueType)],
    candidate_lists: &[Vec<ConcreteValue>],
    alts: &[Vec<ConcreteValue>],
    salt: u64,
) -> Assignment {
    let mut row = base.clone();
    for (i, (var, _)) in vars.iter().enumerate() {
        let list = &alts[i];
        let idx = (salt as usize + i) % list.len();
        row.insert(var.clone(), list[idx].clone());
    }
    if eval_partial(formula, &row) == Some(true) {
        row
    } else {
        diversify(base, formula, vars, candidate_lists, salt)
    }
}

fn to_row(assignment: &Assignment) -> BTreeMap<ConstraintVar, ConcreteValue> {
    assignment
        .iter()
        .filter_map(|(var, value)| match var {
            SolverVar::Value(v) => Some((v.clone(), value.clone())),
            SolverVar::Defined(_) => None,
        })
        .collect()
}

/// Find `n_rows` assignments satisfying `formula` whose canonical digest is
/// not in `excluded`. Integers are signed 64-bit; strings are printable
/// ASCII plus U+0000..U+001F, at most 32 bytes.
pub fn solve(
    formula: &ConstraintFormula,
    var_types: &BTreeMap<ConstraintVar, ValueType>,
    n_rows: usize,
    excluded: &HashSet<String>,
) -> SolveOutcome {
    if !check_types(formula, var_types) {
        return SolveOutcome::TypeMismatch;
    }
    if n_rows == 0 {
        let digest = rows_digest(&[]);
        if excluded.contains(&digest) {
            return SolveOutcome::Unsat;
        }
        return SolveOutcome::Solved(SolvedRows {
            rows: Vec::new(),
            digest,
        });
    }
    let vars = ordered_vars(var_types, formula);
    let candidate_lists: Vec<Vec<ConcreteValue>> = vars
        .iter()
        .enumerate()
        .map(|(i, (var, ty))| match var {
            SolverVar::Value(v) => candidates(v, *ty, formula, LADDER_LEN, i),
            SolverVar::Defined(_) => {
                vec![ConcreteValue::Bool(false), ConcreteValue::Bool(true)]
            }
        })
        .collect();
    let base = match find_base(formula, &vars, &candidate_lists) {
        Some(b) => b,
        None => return SolveOutcome::Unsat,
    };
    let alts = alternative_lists(&base, formula, &vars, &candidate_lists);
    // The k-th fresh emission is usually produced by attempt k, so start
    // there and wrap; the walk stays exhaustive.
    let start = excluded.len().min(MAX_ATTEMPTS);
    for step in 0..MAX_ATTEMPTS {
        let attempt = (start + step) % MAX_ATTEMPTS;
        let rows: Vec<_> = (0..n_rows)
            .map(|j| {
                let salt = (attempt as u64) * 131 + j as u64;
                to_row(&build_row(
                    &base,
                    formula,
                    &vars,
                    &candidate_lists,
                    &alts,
                    salt,
                ))
            })
            .collect();
        let digest = rows_digest(&rows);
        if !excluded.contains(&digest) {
            return SolveOutcome::Solved(SolvedRows { rows, digest });
        }
    }
    SolveOutcome::Unsat
}

/// Satisfiability check without distinctness bookkeeping.
pub fn check_sat(
    formula: &ConstraintFormula,
    var_types: &BTreeMap<ConstraintVar, ValueType>,
) -> SolveOutcome {
    solve(formula, var_types, 1, &HashSet::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::relalg::FieldRef;

    fn var(name: &str) -> ConstraintVar {
        ConstraintVar::Field(FieldRef::new("t", name))
    }

    fn atom(name: &str, op: CmpOp, value: ConcreteValue) -> ConstraintFormula {
        ConstraintFormula::Atom(ConstraintAtom::Cmp {
            lhs: var(name),
            op,
            rhs: value,
        })
    }

    fn int_types(names: &[&str]) -> BTreeMap<ConstraintVar, ValueType> {
        names.iter().map(|n| (var(n), ValueType::Int)).collect()
    }

    #[test]
    fn forced_equality() {
        let f = atom("x", CmpOp::Eq, ConcreteValue::Int(1));
        match solve(&f, &int_types(&["x"]), 1, &HashSet::new()) {
            SolveOutcome::Solved(s) => {
                assert_eq!(s.rows[0][&var("x")], ConcreteValue::Int(1));
            }
            other => panic!("expected model, got {other:?}"),
        }
    }

    #[test]
    fn contradiction_is_unsat() {
        let f = ConstraintFormula::and(vec![
            atom("x", CmpOp::Eq, ConcreteValue::Int(1)),
            atom("x", CmpOp::Eq, ConcreteValue::Int(2)),
        ]);
        assert_eq!(
            solve(&f, &int_types(&["x"]), 1, &HashSet::new()),
            SolveOutcome::Unsat
        );
    }

    #[test]
    fn interval_with_exclusion_picks_the_remaining_value() {
        // Brute force over the open interval (5, 8): only 6 and 7 satisfy;
        // excluding the digest of [x=6] must yield x=7.
        let f = ConstraintFormula::and(vec![
            atom("x", CmpOp::Gt, ConcreteValue::Int(5)),
            atom("x", CmpOp::Lt, ConcreteValue::Int(8)),
        ]);
        let satisfying: Vec<i64> = (0..20).filter(|x| *x > 5 && *x < 8).collect();
        assert_eq!(satisfying, vec![6, 7]);

        let row6: BTreeMap<_, _> = [(var("x"), ConcreteValue::Int(6))].into_iter().collect();
        let excluded: HashSet<String> = [rows_digest(&[row6])].into_iter().collect();
        match solve(&f, &int_types(&["x"]), 1, &excluded) {
            SolveOutcome::Solved(s) => {
                assert_eq!(s.rows[0][&var("x")], ConcreteValue::Int(7));
            }
            other => panic!("expected model, got {other:?}"),
        }
    }

    #[test]
    fn type_mismatch_detected() {
        let f = atom("x", CmpOp::Eq, ConcreteValue::Str("a".into()));
        assert_eq!(
            solve(&f, &int_types(&["x"]), 1, &HashSet::new()),
            SolveOutcome::TypeMismatch
        );
    }

    #[test]
    fn var_var_equality_uses_propagated_literals() {
        let f = ConstraintFormula::and(vec![
            atom("x", CmpOp::Eq, ConcreteValue::Int(42)),
            ConstraintFormula::Atom(ConstraintAtom::CmpVar {
                lhs: var("y"),
                op: CmpOp::Eq,
                rhs: var("x"),
            }),
        ]);
        match solve(&f, &int_types(&["x", "y"]), 1, &HashSet::new()) {
            SolveOutcome::Solved(s) => {
                assert_eq!(s.rows[0][&var("y")], ConcreteValue::Int(42));
            }
            other => panic!("expected model, got {other:?}"),
        }
    }

    #[test]
    fn fully_pinned_rows_exhaust_on_repeat() {
        let f = atom("x", CmpOp::Eq, ConcreteValue::Int(5));
        let types = int_types(&["x"]);
        let first = match solve(&f, &types, 1, &HashSet::new()) {
            SolveOutcome::Solved(s) => s,
            other => panic!("{other:?}"),
        };
        let excluded: HashSet<String> = [first.digest].into_iter().collect();
        assert_eq!(solve(&f, &types, 1, &excluded), SolveOutcome::Unsat);
    }

    #[test]
    fn unconstrained_strings_eventually_contain_control_bytes() {
        let types: BTreeMap<_, _> = [(var("s"), ValueType::Str)].into_iter().collect();
        let mut excluded = HashSet::new();
        let mut found_control = false;
        for _ in 0..64 {
            match solve(&ConstraintFormula::True, &types, 1, &excluded) {
                SolveOutcome::Solved(s) => {
                    excluded.insert(s.digest.clone());
                    if let ConcreteValue::Str(text) = &s.rows[0][&var("s")] {
                        if text.chars().any(|c| (c as u32) < 0x20) {
                            found_control = true;
                            break;
                        }
                    }
                }
                other => panic!("{other:?}"),
            }
        }
        assert!(found_control, "control characters never surfaced");
    }

    #[test]
    fn solutions_are_deterministic() {
        let f = ConstraintFormula::and(vec![
            atom("x", CmpOp::Ge, ConcreteValue::Int(0)),
            atom("y", CmpOp::Ne, ConcreteValue::Int(3)),
        ]);
        let types = int_types(&["x", "y"]);
        let a = solve(&f, &types, 3, &HashSet::new());
        let b = solve(&f, &types, 3, &HashSet::new());
        assert_eq!(a, b);
    }
}
