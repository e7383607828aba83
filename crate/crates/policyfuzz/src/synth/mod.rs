//! Data synthesis: database query results and session/cookie values are
//! generated from constraints instead of real backing stores, so a 32-bit
//! seed indexes a reproducible application state.

pub mod constraints;
pub mod query;
pub mod relalg;
pub mod session;
pub mod solve;
pub mod sql;
pub mod types;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use constraints::{CmpOp, ConstraintAtom, ConstraintFormula, ConstraintVar};
pub use query::{QueryEngine, ResourceAccess, SolvedResult};
pub use relalg::{FieldRef, MaxRow, RelAlgExpr};
pub use session::{DoOutcome, SessionContext, SessionKind, SessionOp, SessionStore};
pub use sql::SqlError;
pub use types::TypeDomain;

/// The inherent types the synthesizer can assign to a field or item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ValueType {
    Int,
    Str,
    Bool,
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueType::Int => "int",
            ValueType::Str => "str",
            ValueType::Bool => "bool",
        })
    }
}

impl std::str::FromStr for ValueType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "int" | "integer" => Ok(ValueType::Int),
            "str" | "string" => Ok(ValueType::Str),
            "bool" | "boolean" => Ok(ValueType::Bool),
            other => Err(format!("unknown type {other:?}")),
        }
    }
}

/// A concrete synthesized value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConcreteValue {
    Int(i64),
    Str(String),
    Bool(bool),
}

impl ConcreteValue {
    pub fn value_type(&self) -> ValueType {
        match self {
            ConcreteValue::Int(_) => ValueType::Int,
            ConcreteValue::Str(_) => ValueType::Str,
            ConcreteValue::Bool(_) => ValueType::Bool,
        }
    }

    /// Canonical form used in digests; disambiguates across types.
    pub fn canonical(&self) -> String {
        match self {
            ConcreteValue::Int(i) => format!("i:{i}"),
            ConcreteValue::Str(s) => format!("s:{s}"),
            ConcreteValue::Bool(b) => format!("b:{b}"),
        }
    }
}

impl fmt::Display for ConcreteValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConcreteValue::Int(i) => write!(f, "{i}"),
            ConcreteValue::Str(s) => write!(f, "{s}"),
            ConcreteValue::Bool(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Sql(#[from] SqlError),
    #[error("constraints are unsatisfiable for {context}")]
    Unsat { context: String },
    #[error("atom compares incompatible types for {context}")]
    TypeMismatch { context: String },
    #[error("seed bits exhausted after {consumed} decisions")]
    BitsExhausted { consumed: u32 },
    #[error("query was never added to the cache: {0}")]
    UnknownQuery(String),
}

impl SynthError {
    /// Everything here aborts the current request; the distinction only
    /// matters for diagnostics.
    pub fn is_abort(&self) -> bool {
        true
    }
}

/// Feature toggles used by the baseline comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthOptions {
    /// When off, runtime type hints are discarded and weights stay at
    /// their initial uniform values.
    pub type_inference: bool,
    /// When off, session and cookie items behave as absent: isset is
    /// false and reads yield null, with no constraint tracking.
    pub session_synthesis: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            type_inference: true,
            session_synthesis: true,
        }
    }
}

/// Shared synthesis state: the query caches and the global session cache.
/// One hub lives for a whole campaign and is shared by all workers.
pub struct SynthHub {
    pub options: SynthOptions,
    queries: QueryEngine,
    sessions: SessionStore,
}

impl SynthHub {
    pub fn new(options: SynthOptions) -> Self {
        Self {
            options,
            queries: QueryEngine::new(options),
            sessions: SessionStore::new(),
        }
    }

    pub fn queries(&self) -> &QueryEngine {
        &self.queries
    }

    pub fn sessions(&self) -> &SessionStore {
        &self.sessions
    }

    /// Fresh per-request session context (Procedure-style `Start`).
    pub fn start_session(&self, seed: u32) -> SessionContext<'_> {
        SessionContext::start(&self.sessions, self.options, seed)
    }
}

impl Default for SynthHub {
    fn default() -> Self {
        Self::new(SynthOptions::default())
    }
}
