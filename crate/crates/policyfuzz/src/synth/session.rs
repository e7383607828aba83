//! Session and cookie synthesis. Each item is a gated symbolic pair
//! ⟨φ, α⟩: φ says whether the item is defined, α is its value. Branch
//! decisions for implemented operations come from the low bits of a copy
//! of the request seed; each decision is checked for path feasibility
//! before it is committed. Values are concretized lazily, only when an
//! item reaches an operation with no constraint translation.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::constraints::{CmpOp, ConstraintAtom, ConstraintFormula, ConstraintVar};
use super::solve::{self, SolveOutcome};
use super::{ConcreteValue, SynthError, SynthOptions, ValueType};
use crate::digest::digest_seed;

/// A request may consume at most this many decision bits: the seed is a
/// 32-bit integer and every decision eats one bit.
pub const MAX_DECISION_BITS: u32 = 32;

const MAX_CONCRETIZE_EXCLUSIONS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SessionKind {
    Session,
    Cookie,
}

impl fmt::Display for SessionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionKind::Session => "session",
            SessionKind::Cookie => "cookie",
        })
    }
}

/// The operation that touched a session item.
#[derive(Debug, Clone, PartialEq)]
pub enum SessionOp {
    IsSet,
    Cmp {
        op: CmpOp,
        rhs: ConcreteValue,
    },
    /// No constraint translation exists; forces concretization. The label
    /// names the operation for traces.
    Opaque(&'static str),
}

/// What the runtime should do with the touched item.
#[derive(Debug, Clone, PartialEq)]
pub enum DoOutcome {
    /// Use this boolean as the operation's result.
    Decision(bool),
    /// The item has a concrete value now; evaluate the operation on it.
    Concrete(ConcreteValue),
    /// Session synthesis is disabled; the item reads as absent.
    Absent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTraceEntry {
    pub kind: SessionKind,
    pub key: String,
    pub op: String,
    pub decision: Option<bool>,
    pub bits_consumed: u32,
}

#[derive(Default)]
struct GcState {
    values: HashMap<(u32, SessionKind, String), ConcreteValue>,
    per_key: HashMap<(SessionKind, String), Vec<ConcreteValue>>,
}

/// The global session cache (`GC`): seed → concrete values, shared and
/// synchronized across workers. Entries are write-once.
pub struct SessionStore {
    gc: Mutex<GcState>,
}

impl SessionStore {
    pub fn new() -> Self {
        Self {
            gc: Mutex::new(GcState::default()),
        }
    }

    pub fn value(&self, seed: u32, kind: SessionKind, key: &str) -> Option<ConcreteValue> {
        let gc = self.gc.lock().unwrap();
        gc.values.get(&(seed, kind, key.to_string())).cloned()
    }

    pub fn has_entry(&self, seed: u32, kind: SessionKind, key: &str) -> bool {
        self.value(seed, kind, key).is_some()
    }

    fn store(
        &self,
        seed: u32,
        kind: SessionKind,
        key: &str,
        value: ConcreteValue,
    ) -> ConcreteValue {
        let mut gc = self.gc.lock().unwrap();
        // Write-once: a racing worker's value wins and ours is discarded.
        if let Some(existing) = gc.values.get(&(seed, kind, key.to_string())) {
            return existing.clone();
        }
        gc.values
            .insert((seed, kind, key.to_string()), value.clone());
        gc.per_key
            .entry((kind, key.to_string()))
            .or_default()
            .push(value.clone());
        value
    }

    fn solved_values(&self, kind: SessionKind, key: &str) -> Vec<ConcreteValue> {
        let gc = self.gc.lock().unwrap();
        gc.per_key
            .get(&(kind, key.to_string()))
            .cloned()
            .unwrap_or_default()
    }
}

impl Default for SessionStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Per-request context (`Start`): a copy of the seed used as a bit stream,
/// and the constraint cache for every item touched during this request.
pub struct SessionContext<'s> {
    store: &'s SessionStore,
    options: SynthOptions,
    seed: u32,
    bits: u32,
    consumed: u32,
    rcache: BTreeMap<(SessionKind, String), Vec<ConstraintFormula>>,
    trace: Vec<DecisionTraceEntry>,
}

impl<'s> SessionContext<'s> {
    pub fn start(store: &'s SessionStore, options: SynthOptions, seed: u32) -> Self {
        Self {
            store,
            options,
            seed,
            bits: seed,
            consumed: 0,
            rcache: BTreeMap::new(),
            trace: Vec::new(),
        }
    }

    pub fn bits_consumed(&self) -> u32 {
        self.consumed
    }

    pub fn trace(&self) -> &[DecisionTraceEntry] {
        &self.trace
    }

    /// Final constraint formulas per item, for feasibility checks and the
    /// execution result.
    pub fn constraints(&self) -> Vec<(String, ConstraintFormula)> {
        self.rcache
            .iter()
            .map(|((kind, key), parts)| {
                (
                    format!("{kind}[{key}]"),
                    ConstraintFormula::and(parts.clone()),
                )
            })
            .collect()
    }

    /// Every stored formula must be satisfiable; checked post-hoc in tests
    /// and by the campaign's feasibility counter.
    pub fn all_satisfiable(&self) -> bool {
        self.rcache.iter().all(|((kind, key), parts)| {
            let formula = ConstraintFormula::and(parts.clone());
            formula_is_sat(&formula, *kind, key)
        })
    }

    fn next_bit(&mut self) -> Result<bool, SynthError> {
        if self.consumed >= MAX_DECISION_BITS {
            return Err(SynthError::BitsExhausted {
                consumed: self.consumed,
            });
        }
        let bit = self.bits & 1 == 1;
        self.bits >>= 1;
        self.consumed += 1;
        Ok(bit)
    }

    /// Procedure-style `Do`. Concrete cache first; implemented operations
    /// draw a decision bit and keep drawing while the implied constraint is
    /// infeasible; anything else concretizes the value.
    pub fn decide(
        &mut self,
        kind: SessionKind,
        key: &str,
        op: &SessionOp,
    ) -> Result<DoOutcome, SynthError> {
        if !self.options.session_synthesis {
            return Ok(DoOutcome::Absent);
        }
        if let Some(value) = self.store.value(self.seed, kind, key) {
            return Ok(DoOutcome::Concrete(value));
        }
        match op {
            SessionOp::IsSet => self.decide_implemented(kind, key, op),
            SessionOp::Cmp { .. } => self.decide_implemented(kind, key, op),
            SessionOp::Opaque(label) => {
                let value = self.concretize(kind, key)?;
                self.trace.push(DecisionTraceEntry {
                    kind,
                    key: key.to_string(),
                    op: format!("concretize({label})"),
                    decision: None,
                    bits_consumed: 0,
                });
                Ok(DoOutcome::Concrete(value))
            }
        }
    }

    fn decide_implemented(
        &mut self,
        kind: SessionKind,
        key: &str,
        op: &SessionOp,
    ) -> Result<DoOutcome, SynthError> {
        let var = ConstraintVar::SessionValue {
            kind,
            key: key.to_string(),
        };
        let mut bits_used = 0u32;
        loop {
            let decision = self.next_bit()?;
            bits_used += 1;
            let cons = to_constraint(&var, op, decision);
            let mut parts = self
                .rcache
                .get(&(kind, key.to_string()))
                .cloned()
                .unwrap_or_default();
            parts.push(cons.clone());
            let formula = ConstraintFormula::and(parts);
            if formula_is_sat(&formula, kind, key) {
                self.rcache
                    .entry((kind, key.to_string()))
                    .or_default()
                    .push(cons);
                self.trace.push(DecisionTraceEntry {
                    kind,
                    key: key.to_string(),
                    op: describe_op(op),
                    decision: Some(decision),
                    bits_consumed: bits_used,
                });
                return Ok(DoOutcome::Decision(decision));
            }
        }
    }

    /// Solve the item's accumulated constraints, avoiding a random subset
    /// of previously solved values for this key, and store the result in
    /// the global cache.
    fn concretize(&mut self, kind: SessionKind, key: &str) -> Result<ConcreteValue, SynthError> {
        let var = ConstraintVar::SessionValue {
            kind,
            key: key.to_string(),
        };
        let parts = self
            .rcache
            .get(&(kind, key.to_string()))
            .cloned()
            .unwrap_or_default();
        let base_formula = ConstraintFormula::and(parts);
        let ty = alpha_type(&base_formula, &var).unwrap_or_else(|| {
            // Unpinned: sampled uniformly, deterministically per (seed, key).
            let rng_seed = digest_seed([
                b"session-type".as_slice(),
                &self.seed.to_le_bytes(),
                format!("{kind}[{key}]").as_bytes(),
            ]);
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            match rng.gen_range(0..3u8) {
                0 => ValueType::Int,
                1 => ValueType::Str,
                _ => ValueType::Bool,
            }
        });

        // Exclude each previously solved value of the same type with
        // probability 1/2, capped; the subset draw is deterministic given
        // the cache contents.
        let prior: Vec<ConcreteValue> = self
            .store
            .solved_values(kind, key)
            .into_iter()
            .filter(|v| v.value_type() == ty)
            .collect();
        let rng_seed = digest_seed([
            b"session-subset".as_slice(),
            &self.seed.to_le_bytes(),
            format!("{kind}[{key}]").as_bytes(),
            &(prior.len() as u64).to_le_bytes(),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut parts = vec![base_formula];
        let mut excluded = 0usize;
        for value in prior {
            if excluded >= MAX_CONCRETIZE_EXCLUSIONS {
                break;
            }
            if rng.gen_bool(0.5) {
                parts.push(
                    ConstraintFormula::Atom(ConstraintAtom::Cmp {
                        lhs: var.clone(),
                        op: CmpOp::Eq,
                        rhs: value,
                    })
                    .negate(),
                );
                excluded += 1;
            }
        }
        let formula = ConstraintFormula::and(parts);
        let var_types: BTreeMap<ConstraintVar, ValueType> =
            [(var.clone(), ty)].into_iter().collect();
        match solve::solve(&formula, &var_types, 1, &std::collections::HashSet::new()) {
            SolveOutcome::Solved(solved) => {
                let value = solved.rows[0]
                    .get(&var)
                    .cloned()
                    .expect("solver assigns the session variable");
                Ok(self.store.store(self.seed, kind, key, value))
            }
            SolveOutcome::Unsat | SolveOutcome::TypeMismatch => Err(SynthError::Unsat {
                context: format!("{kind}[{key}] concretization"),
            }),
        }
    }
}

fn describe_op(op: &SessionOp) -> String {
    match op {
        SessionOp::IsSet => "isset".to_string(),
        SessionOp::Cmp { op, rhs } => format!("{op} {}", rhs.canonical()),
        SessionOp::Opaque(label) => format!("opaque({label})"),
    }
}

/// Constraint for taking `decision` on `op`: isset constrains φ; value
/// comparisons presuppose the item is defined and constrain α.
fn to_constraint(var: &ConstraintVar, op: &SessionOp, decision: bool) -> ConstraintFormula {
    match op {
        SessionOp::IsSet => {
            let atom = ConstraintFormula::Atom(ConstraintAtom::Defined { var: var.clone() });
            if decision {
                atom
            } else {
                atom.negate()
            }
        }
        SessionOp::Cmp { op, rhs } => {
            let defined = ConstraintFormula::Atom(ConstraintAtom::Defined { var: var.clone() });
            let cmp = ConstraintFormula::Atom(ConstraintAtom::Cmp {
                lhs: var.clone(),
                op: *op,
                rhs: rhs.clone(),
            });
            let cmp = if decision { cmp } else { cmp.negate() };
            ConstraintFormula::and(vec![defined, cmp])
        }
        SessionOp::Opaque(_) => ConstraintFormula::True,
    }
}

/// α's type when the accumulated atoms pin it; mixed literal types make
/// the formula unsatisfiable anyway and report as None here.
fn alpha_type(formula: &ConstraintFormula, var: &ConstraintVar) -> Option<ValueType> {
    let mut ty: Option<ValueType> = None;
    for atom in formula.atoms() {
        if let ConstraintAtom::Cmp { lhs, rhs, .. } = atom {
            if lhs == var {
                match ty {
                    None => ty = Some(rhs.value_type()),
                    Some(t) if t == rhs.value_type() => {}
                    Some(_) => return None,
                }
            }
        }
    }
    ty
}

fn formula_is_sat(formula: &ConstraintFormula, kind: SessionKind, key: &str) -> bool {
    let var = ConstraintVar::SessionValue {
        kind,
        key: key.to_string(),
    };
    let ty = alpha_type(formula, &var);
    let has_value_atoms = formula
        .atoms()
        .iter()
        .any(|a| matches!(a, ConstraintAtom::Cmp { lhs, .. } if *lhs == var));
    if has_value_atoms && ty.is_none() {
        return false; // mixed literal types can never agree
    }
    let var_types: BTreeMap<ConstraintVar, ValueType> = ty
        .map(|t| [(var.clone(), t)].into_iter().collect())
        .unwrap_or_default();
    matches!(
        solve::check_sat(formula, &var_types),
        SolveOutcome::Solved(_)
    )
}
