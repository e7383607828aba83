//! The constraint formula shared by query and session synthesis: boolean
//! combinations of comparisons over field or session variables, plus
//! definedness atoms for the session φ variables.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::relalg::FieldRef;
use super::session::SessionKind;
use super::{ConcreteValue, ValueType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    /// The operator seen from the other operand (`a < b` ⇔ `b > a`).
    pub fn flipped(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::Ne => CmpOp::Ne,
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
        }
    }

    pub fn eval<T: PartialOrd + PartialEq>(self, lhs: &T, rhs: &T) -> bool {
        match self {
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        })
    }
}

/// A solver variable: a table field or the value of a session/cookie item.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConstraintVar {
    Field(FieldRef),
    SessionValue { kind: SessionKind, key: String },
}

impl fmt::Display for ConstraintVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintVar::Field(fr) => write!(f, "{fr}"),
            ConstraintVar::SessionValue { kind, key } => write!(f, "{kind}[{key}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConstraintAtom {
    /// Variable compared against a literal.
    Cmp {
        lhs: ConstraintVar,
        op: CmpOp,
        rhs: ConcreteValue,
    },
    /// Variable compared against another variable.
    CmpVar {
        lhs: ConstraintVar,
        op: CmpOp,
        rhs: ConstraintVar,
    },
    /// The φ variable of a session/cookie item: "the item is defined".
    Defined { var: ConstraintVar },
}

impl fmt::Display for ConstraintAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintAtom::Cmp { lhs, op, rhs } => write!(f, "({lhs} {op} {})", rhs.canonical()),
            ConstraintAtom::CmpVar { lhs, op, rhs } => write!(f, "({lhs} {op} {rhs})"),
            ConstraintAtom::Defined { var } => write!(f, "defined({var})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConstraintFormula {
    True,
    False,
    Atom(ConstraintAtom),
    Not(Box<ConstraintFormula>),
    And(Vec<ConstraintFormula>),
    Or(Vec<ConstraintFormula>),
}

impl ConstraintFormula {
    pub fn and(parts: Vec<ConstraintFormula>) -> ConstraintFormula {
        let mut flat = Vec::new();
        for p in parts {
            match p {
                ConstraintFormula::True => {}
                ConstraintFormula::And(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => ConstraintFormula::True,
            1 => flat.pop().unwrap(),
            _ => ConstraintFormula::And(flat),
        }
    }

    pub fn or(parts: Vec<ConstraintFormula>) -> ConstraintFormula {
        let mut flat = Vec::new();
        for p in parts {
            match p {
                ConstraintFormula::False => {}
                ConstraintFormula::Or(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => ConstraintFormula::False,
            1 => flat.pop().unwrap(),
            _ => ConstraintFormula::Or(flat),
        }
    }

    pub fn negate(self) -> ConstraintFormula {
        match self {
            ConstraintFormula::True => ConstraintFormula::False,
            ConstraintFormula::False => ConstraintFormula::True,
            ConstraintFormula::Not(inner) => *inner,
            other => ConstraintFormula::Not(Box::new(other)),
        }
    }

    pub fn atoms(&self) -> Vec<&ConstraintAtom> {
        let mut out = Vec::new();
        fn walk<'a>(f: &'a ConstraintFormula, out: &mut Vec<&'a ConstraintAtom>) {
            match f {
                ConstraintFormula::True | ConstraintFormula::False => {}
                ConstraintFormula::Atom(a) => out.push(a),
                ConstraintFormula::Not(inner) => walk(inner, out),
                ConstraintFormula::And(parts) | ConstraintFormula::Or(parts) => {
                    for p in parts {
                        walk(p, out);
                    }
                }
            }
        }
        walk(self, &mut out);
        out
    }

    pub fn variables(&self) -> BTreeSet<ConstraintVar> {
        let mut out = BTreeSet::new();
        for atom in self.atoms() {
            match atom {
                ConstraintAtom::Cmp { lhs, .. } | ConstraintAtom::Defined { var: lhs } => {
                    out.insert(lhs.clone());
                }
                ConstraintAtom::CmpVar { lhs, rhs, .. } => {
                    out.insert(lhs.clone());
                    out.insert(rhs.clone());
                }
            }
        }
        out
    }

    pub fn collect_fields(&self, out: &mut BTreeSet<FieldRef>) {
        for var in self.variables() {
            if let ConstraintVar::Field(f) = var {
                out.insert(f);
            }
        }
    }

    /// Fields pinned to a type because a select condition compares them to
    /// a concrete literal, or because they feed `COUNT`. First pin wins.
    pub fn type_pins(&self) -> Vec<(FieldRef, ValueType)> {
        let mut pins: Vec<(FieldRef, ValueType)> = Vec::new();
        for atom in self.atoms() {
            if let ConstraintAtom::Cmp {
                lhs: ConstraintVar::Field(f),
                rhs,
                ..
            } = atom
            {
                if !pins.iter().any(|(existing, _)| existing == f) {
                    pins.push((f.clone(), rhs.value_type()));
                }
            }
        }
        pins
    }
}

impl fmt::Display for ConstraintFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintFormula::True => f.write_str("true"),
            ConstraintFormula::False => f.write_str("false"),
            ConstraintFormula::Atom(a) => write!(f, "{a}"),
            ConstraintFormula::Not(inner) => write!(f, "!{inner}"),
            ConstraintFormula::And(parts) => {
                f.write_str("(")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" && ")?;
                    }
                    write!(f, "{p}")?;
                }
                f.write_str(")")
            }
            ConstraintFormula::Or(parts) => {
                f.write_str("(")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" || ")?;
                    }
                    write!(f, "{p}")?;
                }
                f.write_str(")")
            }
        }
    }
}
