//! Shared test support: a naive reference SQL evaluator (independent of
//! the synthesis path), a random query generator for the replay-soundness
//! property, and corpus path helpers.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use policyfuzz::synth::relalg::{Exposure, ProjectionItem, RelAlgExpr};
use policyfuzz::synth::solve::eval_formula;
use policyfuzz::synth::{ConcreteValue, ConstraintVar};

use rand::Rng;

pub type RefRow = BTreeMap<String, ConcreteValue>;

pub fn corpus_dir(app: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("corpus")
        .join(app)
}

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

/// Naive reference evaluation of an algebra tree over in-memory tables.
/// Written independently of the synthesis-side evaluator: rows are plain
/// field-name maps and every operator is applied literally.
pub fn reference_eval(ra: &RelAlgExpr, tables: &BTreeMap<String, Vec<RefRow>>) -> Vec<RefRow> {
    match ra {
        RelAlgExpr::BaseTable { name } => tables.get(name).cloned().unwrap_or_default(),
        RelAlgExpr::Select { condition, input } => reference_eval(input, tables)
            .into_iter()
            .filter(|row| {
                let values: BTreeMap<ConstraintVar, ConcreteValue> = row
                    .iter()
                    .map(|(field, value)| {
                        // Conditions in the supported grammar only name the
                        // FROM table, so qualify with every base table seen.
                        (
                            ConstraintVar::Field(policyfuzz::synth::FieldRef::new(
                                &base_table_of(input),
                                field,
                            )),
                            value.clone(),
                        )
                    })
                    .collect();
                eval_formula(condition, &values) == Some(true)
            })
            .collect(),
        RelAlgExpr::Project { items, input } => {
            let rows = reference_eval(input, tables);
            if let Some(count_item) = items.iter().find_map(|i| match i {
                ProjectionItem::Count(_) => Some(i.output_name()),
                ProjectionItem::Field(_) => None,
            }) {
                let row: RefRow = [(count_item, ConcreteValue::Int(rows.len() as i64))]
                    .into_iter()
                    .collect();
                return vec![row];
            }
            rows.into_iter()
                .map(|row| {
                    items
                        .iter()
                        .filter_map(|item| match item {
                            ProjectionItem::Field(f) => {
                                row.get(&f.field).map(|v| (f.field.clone(), v.clone()))
                            }
                            ProjectionItem::Count(_) => None,
                        })
                        .collect()
                })
                .collect()
        }
        RelAlgExpr::Rename { mappings, input } => reference_eval(input, tables)
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|(field, value)| {
                        let renamed = mappings
                            .iter()
                            .find(|(from, _)| *from == field)
                            .map(|(_, to)| to.clone())
                            .unwrap_or(field);
                        (renamed, value)
                    })
                    .collect()
            })
            .collect(),
        RelAlgExpr::Union { left, right } => {
            let mut out: Vec<RefRow> = Vec::new();
            for row in reference_eval(left, tables)
                .into_iter()
                .chain(reference_eval(right, tables))
            {
                if !out.contains(&row) {
                    out.push(row);
                }
            }
            out
        }
        RelAlgExpr::Intersect { left, right } => {
            let l = reference_eval(left, tables);
            let mut out = Vec::new();
            for row in reference_eval(right, tables) {
                if l.contains(&row) && !out.contains(&row) {
                    out.push(row);
                }
            }
            out
        }
        RelAlgExpr::Limit { max, input } => {
            let mut rows = reference_eval(input, tables);
            rows.truncate(*max as usize);
            rows
        }
    }
}

fn base_table_of(ra: &RelAlgExpr) -> String {
    ra.base_tables().first().cloned().unwrap_or_default()
}

/// The probe columns a replay case should read, derived from the tree.
pub fn probe_columns(ra: &RelAlgExpr) -> Vec<String> {
    match policyfuzz::synth::relalg::exposure(ra) {
        Exposure::Wildcard => vec!["a".into(), "b".into()],
        Exposure::Named(pairs) => pairs.into_iter().map(|(output, _)| output).collect(),
    }
}

/// One generated replay case: the SQL text and a seed.
#[derive(Debug, Clone)]
pub struct GeneratedQuery {
    pub sql: String,
    pub seed: u32,
}

/// Random query in the supported grammar. Field types are fixed per name
/// (a, d: int; b: str; c: bool) so literal comparisons never conflict with
/// each other's pins.
pub fn generate_query<R: Rng>(rng: &mut R) -> GeneratedQuery {
    let table = ["t", "u", "items"][rng.gen_range(0..3)];
    let fields = ["a", "b", "c", "d"];

    let literal_for = |field: &str, rng: &mut R| -> String {
        match field {
            "b" => format!("'{}'", ["x", "y", "zz"][rng.gen_range(0..3)]),
            "c" => {
                if rng.gen_bool(0.5) {
                    "TRUE".into()
                } else {
                    "FALSE".into()
                }
            }
            _ => rng.gen_range(-3..20i32).to_string(),
        }
    };
    let condition = |rng: &mut R| -> String {
        let atoms = rng.gen_range(1..=3usize);
        let mut parts = Vec::new();
        for _ in 0..atoms {
            let field = fields[rng.gen_range(0..fields.len())];
            let op = match field {
                "b" => ["=", "!=", "<", ">="][rng.gen_range(0..4)],
                "c" => ["=", "!="][rng.gen_range(0..2)],
                _ => ["=", "!=", "<", "<=", ">", ">="][rng.gen_range(0..6)],
            };
            let negate = rng.gen_bool(0.15);
            let atom = format!("{field} {op} {}", literal_for(field, rng));
            parts.push(if negate {
                format!("NOT ({atom})")
            } else {
                atom
            });
        }
        let glue = if rng.gen_bool(0.5) { " AND " } else { " OR " };
        if parts.len() > 1 && rng.gen_bool(0.3) {
            format!("({})", parts.join(glue))
        } else {
            parts.join(glue)
        }
    };

    let projection = match rng.gen_range(0..4u8) {
        0 => "*".to_string(),
        1 => {
            let n = rng.gen_range(1..=3usize);
            let mut cols: Vec<String> = Vec::new();
            for _ in 0..n {
                let f = fields[rng.gen_range(0..fields.len())];
                if !cols.iter().any(|c: &String| c.starts_with(f)) {
                    cols.push(f.to_string());
                }
            }
            cols.join(", ")
        }
        2 => {
            let f = fields[rng.gen_range(0..fields.len())];
            format!("{f} AS {f}_alias")
        }
        _ => format!("COUNT({})", fields[rng.gen_range(0..fields.len())]),
    };

    let mut sql = format!("SELECT {projection} FROM {table}");
    if rng.gen_bool(0.7) {
        sql.push_str(&format!(" WHERE {}", condition(rng)));
    }
    if rng.gen_bool(0.25) {
        let op = if rng.gen_bool(0.5) {
            "UNION"
        } else {
            "INTERSECT"
        };
        sql.push_str(&format!(
            " {op} SELECT {projection} FROM {table} WHERE {}",
            condition(rng)
        ));
    }
    if rng.gen_bool(0.3) {
        sql.push_str(&format!(" LIMIT {}", rng.gen_range(0..6)));
    }
    GeneratedQuery {
        sql,
        seed: rng.gen(),
    }
}

/// Execute one replay case end to end: synthesize, materialize the backing
/// rows as a table, re-evaluate with the reference evaluator, and compare.
/// Returns false when the case was skipped (unsatisfiable under sampled
/// types, which the distinctness rule legitimately produces).
pub fn check_replay_case(case: &GeneratedQuery) -> Result<bool, String> {
    use policyfuzz::synth::{SynthHub, SynthOptions};

    let hub = SynthHub::new(SynthOptions::default());
    let ra =
        policyfuzz::synth::sql::parse_sql(&case.sql).map_err(|e| format!("{}: {e}", case.sql))?;
    hub.queries()
        .add(&case.sql, case.seed)
        .map_err(|e| format!("{}: {e}", case.sql))?;

    for column in probe_columns(&ra) {
        match hub.queries().read(&case.sql, case.seed, &column, 0) {
            Ok(_) => {}
            Err(policyfuzz::synth::SynthError::Unsat { .. })
            | Err(policyfuzz::synth::SynthError::TypeMismatch { .. }) => return Ok(false),
            Err(e) => return Err(format!("{}: {e}", case.sql)),
        }
    }
    let Some(result) = hub.queries().result(&case.sql, case.seed) else {
        return Ok(false);
    };

    // Materialize the backing rows as the real table contents.
    let table_name = ra.base_tables().first().cloned().unwrap_or_default();
    let materialized: Vec<RefRow> = result
        .table_rows
        .iter()
        .map(|row| {
            row.iter()
                .map(|(fref, value)| (fref.field.clone(), value.clone()))
                .collect()
        })
        .collect();
    let tables: BTreeMap<String, Vec<RefRow>> = [(table_name, materialized)].into_iter().collect();

    let expected = reference_eval(&ra, &tables);
    let mut got = result.rows.clone();
    let mut want = expected;
    let key = |r: &RefRow| {
        r.iter()
            .map(|(k, v)| format!("{k}={}", v.canonical()))
            .collect::<Vec<_>>()
            .join(";")
    };
    got.sort_by_key(|r| key(r));
    want.sort_by_key(|r| key(r));
    if got != want {
        return Err(format!(
            "{} (seed {}): synthesized {:?} but reference evaluates to {:?}",
            case.sql, case.seed, got, want
        ));
    }
    Ok(true)
}
