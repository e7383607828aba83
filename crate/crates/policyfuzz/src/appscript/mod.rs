//! AppScript: the small server-side scripting language the bundled corpus
//! is written in. A program is a flat statement list with `if` branching;
//! expressions cover literals, variables, string concatenation,
//! comparisons, session/cookie/param access, database queries and a fixed
//! table of internal functions. The interpreter instruments basic-block
//! edges and routes all state access through the synthesis layer.

mod interp;
mod lexer;
mod links;
mod parser;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::synth::CmpOp;

pub use interp::{execute, ExecutionResult, Origin, TrackedValue, TypeCheckStats, Value};
pub use links::{extract_links, extract_resolved_links, resolve_link};
pub use parser::parse_program;

/// Pseudo-block representing "before the program": the entry edge is
/// `(ENTRY_BLOCK, 0)` and is present in every successful run.
pub const ENTRY_BLOCK: u32 = u32::MAX;

/// A `(predecessor, successor)` basic-block transition.
pub type Edge = (u32, u32);

#[derive(Debug, Error, PartialEq, Eq)]
#[error("syntax error at {line}:{col}: expected {expected}")]
pub struct SyntaxError {
    pub line: u32,
    pub col: u32,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RefTarget {
    Session(String),
    Cookie(String),
    Param(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    LitInt(i64),
    LitStr(String),
    LitBool(bool),
    LitNull,
    Var(String),
    Concat(Box<Expr>, Box<Expr>),
    BinCmp {
        op: CmpOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    IsSet(RefTarget),
    SessionRef(String),
    CookieRef(String),
    ParamRef(String),
    DbQuery(Box<Expr>),
    FetchRow(Box<Expr>),
    Index {
        target: Box<Expr>,
        key: Box<Expr>,
    },
    CallInternal {
        name: String,
        args: Vec<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Assign {
        name: String,
        expr: Expr,
    },
    If {
        cond: Expr,
        then_branch: Vec<Stmt>,
        else_branch: Vec<Stmt>,
        then_block: u32,
        else_block: u32,
    },
    Echo(Expr),
    Header {
        name: Expr,
        value: Expr,
    },
    SessionStart,
    Abort,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub block: u32,
    pub line: u32,
}

/// One basic block; the statement count is informational.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub id: u32,
    pub stmt_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub statements: Vec<Stmt>,
    pub source_path: String,
    pub basic_blocks: Vec<BasicBlock>,
    static_edges: BTreeSet<Edge>,
}

impl Program {
    /// Build from a parsed (blockless) statement list: assigns dense block
    /// ids starting at 0 and precomputes the static edge set.
    pub(crate) fn from_statements(mut statements: Vec<Stmt>, source_path: String) -> Self {
        let mut counts: Vec<usize> = vec![0];
        let mut edges: BTreeSet<Edge> = BTreeSet::new();
        edges.insert((ENTRY_BLOCK, 0));
        let mut next: u32 = 1;
        number_sequence(&mut statements, 0, &mut next, &mut counts, &mut edges);
        let basic_blocks = counts
            .into_iter()
            .enumerate()
            .map(|(id, stmt_count)| BasicBlock {
                id: id as u32,
                stmt_count,
            })
            .collect();
        Program {
            statements,
            source_path,
            basic_blocks,
            static_edges: edges,
        }
    }

    pub fn block_count(&self) -> usize {
        self.basic_blocks.len()
    }

    /// All edges any execution could record, including the entry edge.
    pub fn static_edges(&self) -> &BTreeSet<Edge> {
        &self.static_edges
    }
}

fn alloc_block(next: &mut u32, counts: &mut Vec<usize>) -> u32 {
    let id = *next;
    *next += 1;
    counts.push(0);
    id
}

/// Assign block ids to a statement sequence starting in `entry`; returns
/// the possible exit blocks (several when the sequence ends in an `if`).
fn number_sequence(
    stmts: &mut [Stmt],
    entry: u32,
    next: &mut u32,
    counts: &mut Vec<usize>,
    edges: &mut BTreeSet<Edge>,
) -> Vec<u32> {
    let mut cur = entry;
    let len = stmts.len();
    for (i, stmt) in stmts.iter_mut().enumerate() {
        let is_last = i + 1 == len;
        stmt.block = cur;
        counts[cur as usize] += 1;
        if let StmtKind::If {
            then_branch,
            else_branch,
            then_block,
            else_block,
            ..
        } = &mut stmt.kind
        {
            let t = alloc_block(next, counts);
            let e = alloc_block(next, counts);
            *then_block = t;
            *else_block = e;
            edges.insert((cur, t));
            edges.insert((cur, e));
            let mut exits = number_sequence(then_branch, t, next, counts, edges);
            exits.extend(number_sequence(else_branch, e, next, counts, edges));
            if is_last {
                return exits;
            }
            let join = alloc_block(next, counts);
            for exit in exits {
                edges.insert((exit, join));
            }
            cur = join;
        }
    }
    vec![cur]
}
