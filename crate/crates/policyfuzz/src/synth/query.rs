//! Query result synthesis. Each query is parsed once into relational
//! algebra; its row bound, field set and constraints are cached. Concrete
//! results are solved lazily when the application actually reads a column,
//! keyed by (query, seed), with a distinctness set preventing identical
//! regenerations under the same typed fields and row count.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::constraints::ConstraintFormula;
use super::relalg::{self, Exposure, FieldRef, MaxRow, ProjectionItem, RelAlgExpr};
use super::solve::{self, SolveOutcome};
use super::sql::{self, SqlError};
use super::types::TypeDomain;
use super::{ConcreteValue, ConstraintVar, SynthError, SynthOptions, ValueType};
use crate::digest::{digest_chunks, digest_seed};

/// Digest used in access logs when a query was executed but never solved.
pub const UNSOLVED_DIGEST: &str = "unsolved";

/// How many rows an unbounded query can synthesize; the row count is
/// `seed % 8` in that case.
const INFINITE_ROW_MODULUS: u64 = 8;

type TableRow = BTreeMap<FieldRef, ConcreteValue>;

/// One database resource touched by a request, as recorded for the oracle.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ResourceAccess {
    pub table: String,
    pub row_digest: String,
}

/// A solved result: the backing-table view used for digests and replay,
/// and the exposed view the application reads (projection and renames
/// applied, set operations deduplicated, COUNT collapsed).
#[derive(Debug, Clone, PartialEq)]
pub struct SolvedResult {
    pub table_rows: Vec<TableRow>,
    pub rows: Vec<BTreeMap<String, ConcreteValue>>,
    pub field_types: BTreeMap<FieldRef, ValueType>,
    pub len: usize,
    pub digest: String,
}

/// Value returned from a column read.
#[derive(Debug, Clone, PartialEq)]
pub enum ReadValue {
    Value(ConcreteValue),
    Null,
}

struct CachedQuery {
    ra: RelAlgExpr,
    max_rows: MaxRow,
    fields: BTreeSet<FieldRef>,
    constraints: ConstraintFormula,
    base_tables: Vec<String>,
    wildcard: bool,
    /// Digest sets keyed by (typed field vector, row count).
    solved: HashMap<String, HashSet<String>>,
}

#[derive(Default)]
struct QueryState {
    cache: HashMap<String, CachedQuery>,
    concrete: HashMap<(String, u32), SolvedResult>,
    types: HashMap<(String, String), TypeDomain>,
    digest_index: HashMap<String, String>,
}

/// Snapshot returned by [`QueryEngine::add`].
#[derive(Debug, Clone)]
pub struct AddInfo {
    pub base_tables: Vec<String>,
    pub had_concrete_result: bool,
    pub query_digest: String,
}

pub struct QueryEngine {
    options: SynthOptions,
    state: Mutex<QueryState>,
}

impl QueryEngine {
    pub fn new(options: SynthOptions) -> Self {
        Self {
            options,
            state: Mutex::new(QueryState::default()),
        }
    }

    pub fn query_digest(query: &str) -> String {
        digest_chunks([query.as_bytes()])
    }

    /// Procedure-style `Add`: parse and cache the query's analyses on first
    /// sight, apply type pins, and report whether a concrete result for
    /// (query, seed) already exists. Reads happen through [`Self::read`].
    pub fn add(&self, query: &str, seed: u32) -> Result<AddInfo, SqlError> {
        // Parsing stays outside the lock.
        let parsed = if !self.state.lock().unwrap().cache.contains_key(query) {
            let ra = sql::parse_sql(query)?;
            let pins = sql::type_pins(&ra);
            Some((ra, pins))
        } else {
            None
        };
        let mut state = self.state.lock().unwrap();
        if let Some((ra, pins)) = parsed {
            if !state.cache.contains_key(query) {
                let entry = CachedQuery {
                    max_rows: relalg::max_row(&ra),
                    fields: relalg::fields(&ra),
                    constraints: sql::constraints(&ra),
                    base_tables: ra.base_tables(),
                    wildcard: ra.is_wildcard(),
                    ra,
                    solved: HashMap::new(),
                };
                for (field, ty) in pins {
                    state
                        .types
                        .entry((query.to_string(), field.field.clone()))
                        .or_insert_with(TypeDomain::uniform)
                        .pin(ty);
                }
                state.cache.insert(query.to_string(), entry);
                let digest = Self::query_digest(query);
                state.digest_index.insert(digest, query.to_string());
            }
        }
        let entry = state.cache.get(query).expect("just inserted");
        Ok(AddInfo {
            base_tables: entry.base_tables.clone(),
            had_concrete_result: state.concrete.contains_key(&(query.to_string(), seed)),
            query_digest: Self::query_digest(query),
        })
    }

    /// Procedure-style `Field` for row 0: ensures the column is known and a
    /// concrete result exists, then returns the value of `name`.
    pub fn field(&self, query: &str, seed: u32, name: &str) -> Result<ReadValue, SynthError> {
        self.read(query, seed, name, 0)
    }

    /// Column read at an arbitrary row index. Unknown columns under a
    /// wildcard projection extend the field set and force a re-solve;
    /// columns hidden by an explicit projection read as null; row indexes
    /// at or past the solved row count read as null.
    pub fn read(
        &self,
        query: &str,
        seed: u32,
        name: &str,
        row_idx: usize,
    ) -> Result<ReadValue, SynthError> {
        let name = name.to_ascii_lowercase();
        loop {
            let mut state = self.state.lock().unwrap();
            let entry = state
                .cache
                .get(query)
                .ok_or_else(|| SynthError::UnknownQuery(query.to_string()))?;

            let key = (query.to_string(), seed);
            if let Some(result) = state.concrete.get(&key) {
                let covered = result.field_types.keys().any(|f| f.field == name)
                    || result
                        .rows
                        .first()
                        .map(|r| r.contains_key(&name))
                        .unwrap_or(false);
                if covered || !entry.wildcard {
                    return Ok(match result.rows.get(row_idx).and_then(|r| r.get(&name)) {
                        Some(v) => ReadValue::Value(v.clone()),
                        None => ReadValue::Null,
                    });
                }
            } else if !entry.wildcard && !exposes_name(&entry.ra, &name) {
                // Hidden by the projection: no solve is triggered at all.
                return Ok(ReadValue::Null);
            }

            // Field workflow: possibly append the name, sample types for
            // every unsampled field, then solve outside the lock.
            let primary_table = entry.base_tables.first().cloned().unwrap_or_default();
            if entry.wildcard && !entry.fields.iter().any(|f| f.field == name) {
                let fref = FieldRef::new(&primary_table, &name);
                state.cache.get_mut(query).unwrap().fields.insert(fref);
                state
                    .types
                    .entry((query.to_string(), name.clone()))
                    .or_insert_with(TypeDomain::uniform);
            }

            let entry = state.cache.get(query).unwrap();
            let fields: BTreeSet<FieldRef> = entry.fields.clone();
            let previous_types: BTreeMap<FieldRef, ValueType> = state
                .concrete
                .get(&key)
                .map(|r| r.field_types.clone())
                .unwrap_or_default();
            let mut field_types: BTreeMap<FieldRef, ValueType> = BTreeMap::new();
            for fref in &fields {
                let ty = if let Some(ty) = previous_types.get(fref) {
                    *ty
                } else {
                    let domain = state
                        .types
                        .entry((query.to_string(), fref.field.clone()))
                        .or_insert_with(TypeDomain::uniform)
                        .clone();
                    sample_type(&domain, query, fref, seed)
                };
                field_types.insert(fref.clone(), ty);
            }

            let entry = state.cache.get(query).unwrap();
            let modulus = match entry.max_rows {
                MaxRow::Infinite => INFINITE_ROW_MODULUS,
                MaxRow::Finite(l) => l,
            };
            let len = if modulus == 0 {
                0
            } else {
                (u64::from(seed) % modulus) as usize
            };
            let typed_key = typed_key(&field_types, len);
            let excluded = entry.solved.get(&typed_key).cloned().unwrap_or_default();
            let formula = entry.constraints.clone();
            let ra = entry.ra.clone();
            let fields_snapshot = fields.len();
            let var_types: BTreeMap<ConstraintVar, ValueType> = field_types
                .iter()
                .map(|(f, ty)| (ConstraintVar::Field(f.clone()), *ty))
                .collect();
            drop(state);

            let outcome = solve::solve(&formula, &var_types, len, &excluded);

            let mut state = self.state.lock().unwrap();
            let entry = state
                .cache
                .get_mut(query)
                .ok_or_else(|| SynthError::UnknownQuery(query.to_string()))?;
            if entry.fields.len() != fields_snapshot {
                continue; // Another worker appended a field; redo with the larger set.
            }
            match outcome {
                SolveOutcome::Solved(solved) => {
                    let digests = entry.solved.entry(typed_key).or_default();
                    if !digests.insert(solved.digest.clone()) {
                        continue; // Raced with an identical emission; re-solve.
                    }
                    let table_rows: Vec<TableRow> = solved
                        .rows
                        .into_iter()
                        .map(|row| {
                            row.into_iter()
                                .filter_map(|(var, value)| match var {
                                    ConstraintVar::Field(f) => Some((f, value)),
                                    _ => None,
                                })
                                .collect()
                        })
                        .collect();
                    let rows = expose_rows(&ra, &table_rows);
                    let result = SolvedResult {
                        len: table_rows.len(),
                        digest: solved.digest,
                        table_rows,
                        rows,
                        field_types,
                    };
                    state.concrete.insert(key, result);
                }
                SolveOutcome::Unsat => {
                    return Err(SynthError::Unsat {
                        context: query.to_string(),
                    })
                }
                SolveOutcome::TypeMismatch => {
                    return Err(SynthError::TypeMismatch {
                        context: query.to_string(),
                    })
                }
            }
        }
    }

    /// Procedure-style `Notify`: bump the hinted type's weight for
    /// (query, field). Ignored when type inference is disabled and for
    /// pinned domains.
    pub fn notify(&self, query: &str, name: &str, hinted: ValueType) {
        if !self.options.type_inference {
            return;
        }
        let mut state = self.state.lock().unwrap();
        state
            .types
            .entry((query.to_string(), name.to_ascii_lowercase()))
            .or_insert_with(TypeDomain::uniform)
            .add_hint(hinted);
    }

    /// Notify through the digest recorded in a tracked value's origin.
    pub fn notify_by_digest(&self, query_digest: &str, name: &str, hinted: ValueType) {
        let query = {
            let state = self.state.lock().unwrap();
            state.digest_index.get(query_digest).cloned()
        };
        if let Some(query) = query {
            self.notify(&query, name, hinted);
        }
    }

    pub fn type_weight(&self, query: &str, name: &str, ty: ValueType) -> Option<u64> {
        let state = self.state.lock().unwrap();
        state
            .types
            .get(&(query.to_string(), name.to_ascii_lowercase()))
            .map(|d| d.weight(ty))
    }

    pub fn result(&self, query: &str, seed: u32) -> Option<SolvedResult> {
        let state = self.state.lock().unwrap();
        state.concrete.get(&(query.to_string(), seed)).cloned()
    }

    pub fn known_fields(&self, query: &str) -> Option<BTreeSet<FieldRef>> {
        let state = self.state.lock().unwrap();
        state.cache.get(query).map(|e| e.fields.clone())
    }

    /// Force a solve for the currently known field set (used by the CLI);
    /// returns `None` when no fields are known yet.
    pub fn materialize(&self, query: &str, seed: u32) -> Result<Option<SolvedResult>, SynthError> {
        let first_field = {
            let state = self.state.lock().unwrap();
            let entry = state
                .cache
                .get(query)
                .ok_or_else(|| SynthError::UnknownQuery(query.to_string()))?;
            match entry.fields.iter().next() {
                Some(f) => f.field.clone(),
                None => return Ok(None),
            }
        };
        self.read(query, seed, &first_field, 0)?;
        Ok(self.result(query, seed))
    }

    /// Access-log entries for one executed query: one per base table,
    /// carrying the solved-row digest (or the unsolved marker).
    pub fn access_entries(&self, query: &str, seed: u32) -> Vec<ResourceAccess> {
        let state = self.state.lock().unwrap();
        let Some(entry) = state.cache.get(query) else {
            return Vec::new();
        };
        let digest = state
            .concrete
            .get(&(query.to_string(), seed))
            .map(|r| r.digest.clone())
            .unwrap_or_else(|| UNSOLVED_DIGEST.to_string());
        entry
            .base_tables
            .iter()
            .map(|table| ResourceAccess {
                table: table.clone(),
                row_digest: digest.clone(),
            })
            .collect()
    }
}

fn sample_type(domain: &TypeDomain, query: &str, field: &FieldRef, seed: u32) -> ValueType {
    // Deterministic given the cache snapshot: the RNG is keyed by the
    // query, field, seed and current weights.
    let weights = format!(
        "{}/{}/{}|{}",
        domain.weight(ValueType::Int),
        domain.weight(ValueType::Str),
        domain.weight(ValueType::Bool),
        domain.is_pinned(),
    );
    let rng_seed = digest_seed([
        query.as_bytes(),
        field.to_string().as_bytes(),
        &seed.to_le_bytes(),
        weights.as_bytes(),
    ]);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    domain.sample(&mut rng)
}

fn typed_key(field_types: &BTreeMap<FieldRef, ValueType>, len: usize) -> String {
    let mut parts: Vec<String> = field_types
        .iter()
        .map(|(f, ty)| format!("{f}:{ty}"))
        .collect();
    parts.sort();
    format!("{}#{}", parts.join(","), len)
}

fn exposes_name(ra: &RelAlgExpr, name: &str) -> bool {
    match relalg::exposure(ra) {
        Exposure::Wildcard => true,
        Exposure::Named(pairs) => pairs.iter().any(|(output, _)| output == name),
    }
}

fn row_satisfies(cond: &ConstraintFormula, row: &TableRow) -> bool {
    let values: BTreeMap<ConstraintVar, ConcreteValue> = row
        .iter()
        .map(|(f, v)| (ConstraintVar::Field(f.clone()), v.clone()))
        .collect();
    solve::eval_formula(cond, &values) == Some(true)
}

/// Evaluate the algebra tree over solved backing rows: selections filter,
/// set operations apply set semantics, LIMIT truncates. Column shaping is
/// applied afterwards.
fn eval_tree(ra: &RelAlgExpr, rows: &[TableRow]) -> Vec<TableRow> {
    match ra {
        RelAlgExpr::BaseTable { .. } => rows.to_vec(),
        RelAlgExpr::Select { condition, input } => eval_tree(input, rows)
            .into_iter()
            .filter(|row| row_satisfies(condition, row))
            .collect(),
        RelAlgExpr::Project { input, .. } | RelAlgExpr::Rename { input, .. } => {
            eval_tree(input, rows)
        }
        RelAlgExpr::Limit { max, input } => {
            let mut out = eval_tree(input, rows);
            out.truncate(*max as usize);
            out
        }
        RelAlgExpr::Union { left, right } => {
            let mut out: Vec<TableRow> = Vec::new();
            for row in eval_tree(left, rows)
                .into_iter()
                .chain(eval_tree(right, rows))
            {
                if !out.contains(&row) {
                    out.push(row);
                }
            }
            out
        }
        RelAlgExpr::Intersect { left, right } => {
            let l = eval_tree(left, rows);
            let mut out = Vec::new();
            for row in eval_tree(right, rows) {
                if l.contains(&row) && !out.contains(&row) {
                    out.push(row);
                }
            }
            out
        }
    }
}

fn as_named_rows(rows: Vec<TableRow>) -> Vec<BTreeMap<String, ConcreteValue>> {
    rows.into_iter()
        .map(|row| row.into_iter().map(|(f, v)| (f.field, v)).collect())
        .collect()
}

/// The application-visible rows for a solved backing set: projections and
/// renames shape columns at their tree position (an aggregate collapses
/// its branch to one row), set operations combine shaped rows with set
/// semantics, LIMIT truncates the shaped result.
pub fn expose_rows(
    ra: &RelAlgExpr,
    table_rows: &[TableRow],
) -> Vec<BTreeMap<String, ConcreteValue>> {
    match ra {
        RelAlgExpr::BaseTable { .. } | RelAlgExpr::Select { .. } => {
            as_named_rows(eval_tree(ra, table_rows))
        }
        RelAlgExpr::Project { items, input } => {
            let base = eval_tree(input, table_rows);
            if let Some(count_name) = items.iter().find_map(|i| match i {
                ProjectionItem::Count(_) => Some(i.output_name()),
                ProjectionItem::Field(_) => None,
            }) {
                let row: BTreeMap<String, ConcreteValue> =
                    [(count_name, ConcreteValue::Int(base.len() as i64))]
                        .into_iter()
                        .collect();
                return vec![row];
            }
            base.into_iter()
                .map(|row| {
                    items
                        .iter()
                        .filter_map(|item| match item {
                            ProjectionItem::Field(f) => row
                                .iter()
                                .find(|(fref, _)| fref.field == f.field)
                                .map(|(_, v)| (f.field.clone(), v.clone())),
                            ProjectionItem::Count(_) => None,
                        })
                        .collect()
                })
                .collect()
        }
        RelAlgExpr::Rename { mappings, input } => expose_rows(input, table_rows)
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|(name, value)| {
                        let renamed = mappings
                            .iter()
                            .find(|(from, _)| *from == name)
                            .map(|(_, to)| to.clone())
                            .unwrap_or(name);
                        (renamed, value)
                    })
                    .collect()
            })
            .collect(),
        RelAlgExpr::Union { left, right } => {
            let mut out: Vec<BTreeMap<String, ConcreteValue>> = Vec::new();
            for row in expose_rows(left, table_rows)
                .into_iter()
                .chain(expose_rows(right, table_rows))
            {
                if !out.contains(&row) {
                    out.push(row);
                }
            }
            out
        }
        RelAlgExpr::Intersect { left, right } => {
            let l = expose_rows(left, table_rows);
            let mut out = Vec::new();
            for row in expose_rows(right, table_rows) {
                if l.contains(&row) && !out.contains(&row) {
                    out.push(row);
                }
            }
            out
        }
        RelAlgExpr::Limit { max, input } => {
            let mut out = expose_rows(input, table_rows);
            out.truncate(*max as usize);
            out
        }
    }
}
