//! Relational algebra trees translated from SQL, plus the three analyses
//! driven by them: maximum row count, referenced fields, and (in
//! `constraints.rs`) the solver-facing formula.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::constraints::ConstraintFormula;

/// A `(table, field)` pair, canonicalized to lowercase.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FieldRef {
    pub table: String,
    pub field: String,
}

impl FieldRef {
    pub fn new(table: &str, field: &str) -> Self {
        debug_assert!(!table.is_empty() && !field.is_empty());
        Self {
            table: table.to_ascii_lowercase(),
            field: field.to_ascii_lowercase(),
        }
    }
}

impl fmt::Display for FieldRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.field)
    }
}

/// Upper bound on result cardinality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxRow {
    Finite(u64),
    Infinite,
}

impl MaxRow {
    fn saturating_add(self, other: MaxRow) -> MaxRow {
        match (self, other) {
            (MaxRow::Finite(a), MaxRow::Finite(b)) => MaxRow::Finite(a.saturating_add(b)),
            _ => MaxRow::Infinite,
        }
    }

    fn min(self, other: MaxRow) -> MaxRow {
        match (self, other) {
            (MaxRow::Finite(a), MaxRow::Finite(b)) => MaxRow::Finite(a.min(b)),
            (MaxRow::Finite(a), MaxRow::Infinite) | (MaxRow::Infinite, MaxRow::Finite(a)) => {
                MaxRow::Finite(a)
            }
            _ => MaxRow::Infinite,
        }
    }
}

/// One projected column: a plain field or `COUNT(field)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProjectionItem {
    Field(FieldRef),
    Count(FieldRef),
}

impl ProjectionItem {
    pub fn output_name(&self) -> String {
        match self {
            ProjectionItem::Field(f) => f.field.clone(),
            ProjectionItem::Count(f) => format!("count({})", f.field),
        }
    }
}

/// The algebra tree. A wildcard projection is represented by the absence
/// of a `Project` node, matching the usual σ/π notation.
#[derive(Debug, Clone, PartialEq)]
pub enum RelAlgExpr {
    BaseTable {
        name: String,
    },
    Select {
        condition: ConstraintFormula,
        input: Box<RelAlgExpr>,
    },
    Project {
        items: Vec<ProjectionItem>,
        input: Box<RelAlgExpr>,
    },
    /// `(source output name, alias)` pairs applied over the input's columns.
    Rename {
        mappings: Vec<(String, String)>,
        input: Box<RelAlgExpr>,
    },
    Union {
        left: Box<RelAlgExpr>,
        right: Box<RelAlgExpr>,
    },
    Intersect {
        left: Box<RelAlgExpr>,
        right: Box<RelAlgExpr>,
    },
    Limit {
        max: u64,
        input: Box<RelAlgExpr>,
    },
}

impl RelAlgExpr {
    /// Limit may appear at most once on any root-to-leaf path.
    pub fn validate(&self) -> bool {
        fn walk(e: &RelAlgExpr, limit_seen: bool) -> bool {
            match e {
                RelAlgExpr::BaseTable { .. } => true,
                RelAlgExpr::Limit { input, .. } => !limit_seen && walk(input, true),
                RelAlgExpr::Select { input, .. }
                | RelAlgExpr::Project { input, .. }
                | RelAlgExpr::Rename { input, .. } => walk(input, limit_seen),
                RelAlgExpr::Union { left, right } | RelAlgExpr::Intersect { left, right } => {
                    walk(left, limit_seen) && walk(right, limit_seen)
                }
            }
        }
        walk(self, false)
    }

    pub fn base_tables(&self) -> Vec<String> {
        let mut out = Vec::new();
        fn walk(e: &RelAlgExpr, out: &mut Vec<String>) {
            match e {
                RelAlgExpr::BaseTable { name } => {
                    if !out.contains(name) {
                        out.push(name.clone());
                    }
                }
                RelAlgExpr::Select { input, .. }
                | RelAlgExpr::Project { input, .. }
                | RelAlgExpr::Rename { input, .. }
                | RelAlgExpr::Limit { input, .. } => walk(input, out),
                RelAlgExpr::Union { left, right } | RelAlgExpr::Intersect { left, right } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        walk(self, &mut out);
        out
    }

    /// Does the tree expose every column of the solved rows (i.e. is there
    /// no restricting projection anywhere)?
    pub fn is_wildcard(&self) -> bool {
        match self {
            RelAlgExpr::BaseTable { .. } => true,
            RelAlgExpr::Project { .. } => false,
            RelAlgExpr::Select { input, .. }
            | RelAlgExpr::Rename { input, .. }
            | RelAlgExpr::Limit { input, .. } => input.is_wildcard(),
            RelAlgExpr::Union { left, right } | RelAlgExpr::Intersect { left, right } => {
                left.is_wildcard() || right.is_wildcard()
            }
        }
    }

    pub fn has_count(&self) -> bool {
        match self {
            RelAlgExpr::Project { items, .. } => {
                items.iter().any(|i| matches!(i, ProjectionItem::Count(_)))
            }
            RelAlgExpr::BaseTable { .. } => false,
            RelAlgExpr::Select { input, .. }
            | RelAlgExpr::Rename { input, .. }
            | RelAlgExpr::Limit { input, .. } => input.has_count(),
            RelAlgExpr::Union { left, right } | RelAlgExpr::Intersect { left, right } => {
                left.has_count() || right.has_count()
            }
        }
    }
}

/// Maximum cardinality of the result: LIMIT caps, unions add, intersections
/// take the minimum, base tables are unbounded.
pub fn max_row(ra: &RelAlgExpr) -> MaxRow {
    match ra {
        RelAlgExpr::BaseTable { .. } => MaxRow::Infinite,
        RelAlgExpr::Select { input, .. }
        | RelAlgExpr::Project { input, .. }
        | RelAlgExpr::Rename { input, .. } => max_row(input),
        RelAlgExpr::Limit { max, input } => MaxRow::Finite(*max).min(max_row(input)),
        RelAlgExpr::Union { left, right } => max_row(left).saturating_add(max_row(right)),
        RelAlgExpr::Intersect { left, right } => max_row(left).min(max_row(right)),
    }
}

/// Fields named anywhere in projections, selections and renames. Under a
/// wildcard projection only the fields used elsewhere are known; missing
/// ones are appended later through the Field workflow.
pub fn fields(ra: &RelAlgExpr) -> BTreeSet<FieldRef> {
    let mut out = BTreeSet::new();
    fn walk(e: &RelAlgExpr, out: &mut BTreeSet<FieldRef>) {
        match e {
            RelAlgExpr::BaseTable { .. } => {}
            RelAlgExpr::Select { condition, input } => {
                condition.collect_fields(out);
                walk(input, out);
            }
            RelAlgExpr::Project { items, input } => {
                for item in items {
                    match item {
                        ProjectionItem::Field(f) | ProjectionItem::Count(f) => {
                            out.insert(f.clone());
                        }
                    }
                }
                walk(input, out);
            }
            RelAlgExpr::Rename { input, .. } => walk(input, out),
            RelAlgExpr::Limit { input, .. } => walk(input, out),
            RelAlgExpr::Union { left, right } | RelAlgExpr::Intersect { left, right } => {
                walk(left, out);
                walk(right, out);
            }
        }
    }
    walk(ra, &mut out);
    out
}

/// What column names a result exposes to the application.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Exposure {
    /// Every solved column, keyed by its own (source) name.
    Wildcard,
    /// `(output name, source field name)` pairs in projection order.
    Named(Vec<(String, String)>),
}

pub fn exposure(ra: &RelAlgExpr) -> Exposure {
    match ra {
        RelAlgExpr::BaseTable { .. } => Exposure::Wildcard,
        RelAlgExpr::Select { input, .. } | RelAlgExpr::Limit { input, .. } => exposure(input),
        RelAlgExpr::Project { items, .. } => Exposure::Named(
            items
                .iter()
                .map(|item| {
                    let source = match item {
                        ProjectionItem::Field(f) => f.field.clone(),
                        ProjectionItem::Count(f) => f.field.clone(),
                    };
                    (item.output_name(), source)
                })
                .collect(),
        ),
        RelAlgExpr::Rename { mappings, input } => match exposure(input) {
            Exposure::Wildcard => Exposure::Named(
                mappings
                    .iter()
                    .map(|(source, alias)| (alias.clone(), source.clone()))
                    .collect(),
            ),
            Exposure::Named(pairs) => Exposure::Named(
                pairs
                    .into_iter()
                    .map(|(output, source)| {
                        let renamed = mappings
                            .iter()
                            .find(|(from, _)| *from == output)
                            .map(|(_, to)| to.clone())
                            .unwrap_or(output);
                        (renamed, source)
                    })
                    .collect(),
            ),
        },
        RelAlgExpr::Union { left, right } | RelAlgExpr::Intersect { left, right } => {
            match (exposure(left), exposure(right)) {
                (Exposure::Wildcard, _) | (_, Exposure::Wildcard) => Exposure::Wildcard,
                (Exposure::Named(mut a), Exposure::Named(b)) => {
                    for pair in b {
                        if !a.contains(&pair) {
                            a.push(pair);
                        }
                    }
                    Exposure::Named(a)
                }
            }
        }
    }
}
