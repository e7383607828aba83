//! The AppScript interpreter. Executes one request against one program,
//! recording basic-block edges, routing database reads through query
//! synthesis and session/cookie touches through the concolic session
//! workflow. Missing-parameter reads and wrong-typed internal calls
//! emulate scripting-runtime warnings by prepending text to the body,
//! which is what makes the prepended-content weakness reproducible.

use std::collections::{BTreeMap, HashMap};

use crate::http::{HttpRequest, HttpResponse};
use crate::synth::{
    CmpOp, ConcreteValue, ConstraintFormula, DoOutcome, ResourceAccess, SessionKind, SessionOp,
    SynthError, SynthHub, ValueType,
};

use super::{Edge, Expr, Program, RefTarget, Stmt, StmtKind, ENTRY_BLOCK};

/// A runtime value. Rows and result handles are interpreter-local.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Int(i64),
    Str(String),
    Bool(bool),
    ResultHandle(usize),
    Row { query: String, index: usize },
}

impl Value {
    fn from_concrete(v: ConcreteValue) -> Value {
        match v {
            ConcreteValue::Int(i) => Value::Int(i),
            ConcreteValue::Str(s) => Value::Str(s),
            ConcreteValue::Bool(b) => Value::Bool(b),
        }
    }

    fn as_concrete(&self) -> Option<ConcreteValue> {
        match self {
            Value::Int(i) => Some(ConcreteValue::Int(*i)),
            Value::Str(s) => Some(ConcreteValue::Str(s.clone())),
            Value::Bool(b) => Some(ConcreteValue::Bool(*b)),
            _ => None,
        }
    }

    fn type_name(&self) -> &'static str {
        match self {
            Value::Null => "null",
            Value::Int(_) => "integer",
            Value::Str(_) => "string",
            Value::Bool(_) => "boolean",
            Value::ResultHandle(_) => "resource",
            Value::Row { .. } => "array",
        }
    }

    fn value_type(&self) -> Option<ValueType> {
        self.as_concrete().map(|v| v.value_type())
    }
}

/// Where a value came from; propagated through concatenation and
/// assignment so uses of database fields can be attributed.
#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    QueryField { query_digest: String, field: String },
    Session(String),
    Cookie(String),
    Plain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedValue {
    pub value: Value,
    pub origin: Origin,
}

impl TrackedValue {
    fn plain(value: Value) -> Self {
        TrackedValue {
            value,
            origin: Origin::Plain,
        }
    }
}

/// How often database-field values were used at their sampled type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TypeCheckStats {
    pub cmp_total: u64,
    pub cmp_correct: u64,
    pub call_total: u64,
    pub call_correct: u64,
}

impl TypeCheckStats {
    pub fn merge(&mut self, other: &TypeCheckStats) {
        self.cmp_total += other.cmp_total;
        self.cmp_correct += other.cmp_correct;
        self.call_total += other.call_total;
        self.call_correct += other.call_correct;
    }
}

#[derive(Debug, Clone)]
pub struct ExecutionResult {
    pub response: HttpResponse,
    /// Edge hit counts for this run.
    pub metrics: BTreeMap<Edge, u32>,
    pub access_log: Vec<ResourceAccess>,
    pub session_constraints: Vec<(String, ConstraintFormula)>,
    pub session_trace: Vec<crate::synth::session::DecisionTraceEntry>,
    pub session_feasible: bool,
    pub bits_consumed: u32,
    pub type_checks: TypeCheckStats,
    pub aborted: bool,
    pub abort_reason: Option<String>,
}

#[derive(Debug)]
enum RuntimeError {
    Abort(String),
    UnknownFunction(String),
    Synth(SynthError),
}

impl From<SynthError> for RuntimeError {
    fn from(e: SynthError) -> Self {
        RuntimeError::Synth(e)
    }
}

impl RuntimeError {
    fn reason(&self) -> String {
        match self {
            RuntimeError::Abort(r) => r.clone(),
            RuntimeError::UnknownFunction(name) => format!("unknown internal function {name}"),
            RuntimeError::Synth(e) => e.to_string(),
        }
    }
}

struct HandleState {
    query: String,
    cursor: usize,
}

struct Interp<'a> {
    program: &'a Program,
    request: &'a HttpRequest,
    seed: u32,
    hub: &'a SynthHub,
    session: crate::synth::SessionContext<'a>,
    vars: HashMap<String, TrackedValue>,
    handles: Vec<HandleState>,
    body: Vec<u8>,
    headers: Vec<(String, String)>,
    metrics: BTreeMap<Edge, u32>,
    cur_block: u32,
    executed_queries: Vec<String>,
    stats: TypeCheckStats,
}

/// Run `program` against one request and seed. Pure given the synthesis
/// cache contents: replaying with identical caches yields a byte-identical
/// response.
pub fn execute(
    program: &Program,
    request: &HttpRequest,
    seed: u32,
    hub: &SynthHub,
) -> ExecutionResult {
    let mut interp = Interp {
        program,
        request,
        seed,
        hub,
        session: hub.start_session(seed),
        vars: HashMap::new(),
        handles: Vec::new(),
        body: Vec::new(),
        headers: Vec::new(),
        metrics: BTreeMap::new(),
        cur_block: ENTRY_BLOCK,
        executed_queries: Vec::new(),
        stats: TypeCheckStats::default(),
    };
    interp.enter_block(0);
    let outcome = interp.exec_seq(&program.statements);

    let access_log: Vec<ResourceAccess> = interp
        .executed_queries
        .iter()
        .flat_map(|q| hub.queries().access_entries(q, seed))
        .collect();
    let session_constraints = interp.session.constraints();
    let session_feasible = interp.session.all_satisfiable();
    let bits_consumed = interp.session.bits_consumed();
    let session_trace = interp.session.trace().to_vec();

    let (response, aborted, abort_reason) = match outcome {
        Ok(()) => match HttpResponse::new(request.scheme(), 200, interp.headers, interp.body) {
            Ok(resp) => (resp, false, None),
            Err(e) => (
                HttpResponse::new(request.scheme(), 500, vec![], vec![])
                    .expect("bare 500 response"),
                true,
                Some(format!("invalid response header: {e}")),
            ),
        },
        Err(err) => (
            HttpResponse::new(request.scheme(), 500, vec![], vec![]).expect("bare 500 response"),
            true,
            Some(err.reason()),
        ),
    };

    ExecutionResult {
        response,
        metrics: interp.metrics,
        access_log,
        session_constraints,
        session_trace,
        session_feasible,
        bits_consumed,
        type_checks: interp.stats,
        aborted,
        abort_reason,
    }
}

impl<'a> Interp<'a> {
    fn enter_block(&mut self, block: u32) {
        if block != self.cur_block {
            *self.metrics.entry((self.cur_block, block)).or_insert(0) += 1;
            self.cur_block = block;
        }
    }

    /// Scripting-runtime style warning, prepended to the echo buffer.
    fn warn(&mut self, text: String) {
        let mut with_prefix =
            format!("Warning: {text} in {}\n", self.program.source_path).into_bytes();
        with_prefix.extend_from_slice(&self.body);
        self.body = with_prefix;
    }

    fn exec_seq(&mut self, stmts: &[Stmt]) -> Result<(), RuntimeError> {
        for stmt in stmts {
            self.enter_block(stmt.block);
            match &stmt.kind {
                StmtKind::Assign { name, expr } => {
                    let value = self.eval(expr)?;
                    self.vars.insert(name.clone(), value);
                }
                StmtKind::Echo(expr) => {
                    let value = self.eval(expr)?;
                    let text = display(&value.value);
                    self.body.extend_from_slice(text.as_bytes());
                }
                StmtKind::Header { name, value } => {
                    let name = display(&self.eval(name)?.value);
                    let value = display(&self.eval(value)?.value);
                    self.headers.push((name, value));
                }
                StmtKind::SessionStart => {}
                StmtKind::Abort => return Err(RuntimeError::Abort("abort()".into())),
                StmtKind::If {
                    cond,
                    then_branch,
                    else_branch,
                    then_block,
                    else_block,
                } => {
                    let cond_value = self.eval(cond)?;
                    let taken = truthy(&cond_value.value);
                    let (target, branch) = if taken {
                        (*then_block, then_branch)
                    } else {
                        (*else_block, else_branch)
                    };
                    self.enter_block(target);
                    self.exec_seq(branch)?;
                }
            }
        }
        Ok(())
    }

    fn eval(&mut self, expr: &Expr) -> Result<TrackedValue, RuntimeError> {
        match expr {
            Expr::LitInt(n) => Ok(TrackedValue::plain(Value::Int(*n))),
            Expr::LitStr(s) => Ok(TrackedValue::plain(Value::Str(s.clone()))),
            Expr::LitBool(b) => Ok(TrackedValue::plain(Value::Bool(*b))),
            Expr::LitNull => Ok(TrackedValue::plain(Value::Null)),
            Expr::Var(name) => Ok(self
                .vars
                .get(name)
                .cloned()
                .unwrap_or_else(|| TrackedValue::plain(Value::Null))),
            Expr::Concat(lhs, rhs) => {
                let l = self.eval(lhs)?;
                let r = self.eval(rhs)?;
                let text = format!("{}{}", display(&l.value), display(&r.value));
                let origin = match (&l.origin, &r.origin) {
                    (Origin::Plain, o) => o.clone(),
                    (o, _) => o.clone(),
                };
                Ok(TrackedValue {
                    value: Value::Str(text),
                    origin,
                })
            }
            Expr::BinCmp { op, lhs, rhs } => self.eval_cmp(*op, lhs, rhs),
            Expr::IsSet(target) => self.eval_isset(target),
            Expr::SessionRef(key) => self.read_session(SessionKind::Session, key),
            Expr::CookieRef(key) => self.read_session(SessionKind::Cookie, key),
            Expr::ParamRef(name) => Ok(self.read_param(name)),
            Expr::DbQuery(sql_expr) => {
                let sql = display(&self.eval(sql_expr)?.value);
                self.hub
                    .queries()
                    .add(&sql, self.seed)
                    .map_err(SynthError::from)?;
                self.executed_queries.push(sql.clone());
                self.handles.push(HandleState {
                    query: sql,
                    cursor: 0,
                });
                Ok(TrackedValue::plain(Value::ResultHandle(
                    self.handles.len() - 1,
                )))
            }
            Expr::FetchRow(handle_expr) => {
                let handle = self.eval(handle_expr)?;
                let Value::ResultHandle(idx) = handle.value else {
                    return Ok(TrackedValue::plain(Value::Null));
                };
                let state = &mut self.handles[idx];
                let row_index = state.cursor;
                state.cursor += 1;
                let query = state.query.clone();
                // Once a result is solved, the cursor honors its length.
                if let Some(result) = self.hub.queries().result(&query, self.seed) {
                    if row_index >= result.rows.len() {
                        return Ok(TrackedValue::plain(Value::Null));
                    }
                }
                Ok(TrackedValue::plain(Value::Row {
                    query,
                    index: row_index,
                }))
            }
            Expr::Index { target, key } => {
                let target = self.eval(target)?;
                let key = display(&self.eval(key)?.value);
                match target.value {
                    Value::Row { query, index } => self.read_row_field(&query, &key, index),
                    _ => Ok(TrackedValue::plain(Value::Null)),
                }
            }
            Expr::CallInternal { name, args } => self.call_internal(name, args),
        }
    }

    fn read_param(&mut self, name: &str) -> TrackedValue {
        match self.request.param(name) {
            Some(v) => TrackedValue::plain(Value::Str(v.to_string())),
            None => {
                self.warn(format!("Undefined index: {name}"));
                TrackedValue::plain(Value::Null)
            }
        }
    }

    fn read_row_field(
        &mut self,
        query: &str,
        name: &str,
        row_index: usize,
    ) -> Result<TrackedValue, RuntimeError> {
        use crate::synth::query::ReadValue;
        let origin = Origin::QueryField {
            query_digest: crate::synth::query::QueryEngine::query_digest(query),
            field: name.to_ascii_lowercase(),
        };
        match self.hub.queries().read(query, self.seed, name, row_index)? {
            ReadValue::Value(v) => Ok(TrackedValue {
                value: Value::from_concrete(v),
                origin,
            }),
            ReadValue::Null => Ok(TrackedValue {
                value: Value::Null,
                origin,
            }),
        }
    }

    fn read_session(&mut self, kind: SessionKind, key: &str) -> Result<TrackedValue, RuntimeError> {
        let origin = match kind {
            SessionKind::Session => Origin::Session(key.to_string()),
            SessionKind::Cookie => Origin::Cookie(key.to_string()),
        };
        match self.session.decide(kind, key, &SessionOp::Opaque("read"))? {
            DoOutcome::Concrete(v) => Ok(TrackedValue {
                value: Value::from_concrete(v),
                origin,
            }),
            DoOutcome::Absent => Ok(TrackedValue {
                value: Value::Null,
                origin,
            }),
            DoOutcome::Decision(_) => unreachable!("opaque ops never yield decisions"),
        }
    }

    fn eval_isset(&mut self, target: &RefTarget) -> Result<TrackedValue, RuntimeError> {
        match target {
            RefTarget::Param(name) => Ok(TrackedValue::plain(Value::Bool(
                self.request.param(name).is_some(),
            ))),
            RefTarget::Session(key) => self.isset_symbolic(SessionKind::Session, key),
            RefTarget::Cookie(key) => self.isset_symbolic(SessionKind::Cookie, key),
        }
    }

    fn isset_symbolic(
        &mut self,
        kind: SessionKind,
        key: &str,
    ) -> Result<TrackedValue, RuntimeError> {
        let value = match self.session.decide(kind, key, &SessionOp::IsSet)? {
            DoOutcome::Decision(b) => Value::Bool(b),
            DoOutcome::Concrete(_) => Value::Bool(true),
            DoOutcome::Absent => Value::Bool(false),
        };
        Ok(TrackedValue::plain(value))
    }

    /// Comparison evaluation. Session/cookie operands stay symbolic while
    /// the other side is a concrete scalar; two symbolic operands
    /// concretize one side first.
    fn eval_cmp(
        &mut self,
        op: CmpOp,
        lhs: &Expr,
        rhs: &Expr,
    ) -> Result<TrackedValue, RuntimeError> {
        let l_sym = session_target(lhs);
        let r_sym = session_target(rhs);
        match (l_sym, r_sym) {
            (Some((lk, lkey)), Some(_)) => {
                let left = match self
                    .session
                    .decide(lk, &lkey, &SessionOp::Opaque("compare"))?
                {
                    DoOutcome::Concrete(v) => TrackedValue {
                        value: Value::from_concrete(v),
                        origin: origin_for(lk, &lkey),
                    },
                    DoOutcome::Absent => TrackedValue::plain(Value::Null),
                    DoOutcome::Decision(_) => unreachable!(),
                };
                let (rk, rkey) = session_target(rhs).expect("checked above");
                self.symbolic_cmp(rk, &rkey, op.flipped(), left)
            }
            (Some((kind, key)), None) => {
                let other = self.eval(rhs)?;
                self.symbolic_cmp(kind, &key, op, other)
            }
            (None, Some((kind, key))) => {
                let other = self.eval(lhs)?;
                self.symbolic_cmp(kind, &key, op.flipped(), other)
            }
            (None, None) => {
                let l = self.eval(lhs)?;
                let r = self.eval(rhs)?;
                self.record_cmp_hints(&l, &r);
                self.record_cmp_hints(&r, &l);
                Ok(TrackedValue::plain(Value::Bool(juggle_cmp(
                    op, &l.value, &r.value,
                ))))
            }
        }
    }

    /// `item op other` where `other` is already evaluated. The operator is
    /// oriented with the symbolic item on the left.
    fn symbolic_cmp(
        &mut self,
        kind: SessionKind,
        key: &str,
        op: CmpOp,
        other: TrackedValue,
    ) -> Result<TrackedValue, RuntimeError> {
        match other.value.as_concrete() {
            Some(rhs) => {
                match self.session.decide(
                    kind,
                    key,
                    &SessionOp::Cmp {
                        op,
                        rhs: rhs.clone(),
                    },
                )? {
                    DoOutcome::Decision(b) => Ok(TrackedValue {
                        value: Value::Bool(b),
                        origin: origin_for(kind, key),
                    }),
                    DoOutcome::Concrete(v) => {
                        let concrete = Value::from_concrete(v);
                        Ok(TrackedValue::plain(Value::Bool(juggle_cmp(
                            op,
                            &concrete,
                            &other.value,
                        ))))
                    }
                    DoOutcome::Absent => Ok(TrackedValue::plain(Value::Bool(false))),
                }
            }
            None => {
                // Comparing against null/rows has no constraint translation.
                let item = self.read_session(kind, key)?;
                Ok(TrackedValue::plain(Value::Bool(juggle_cmp(
                    op,
                    &item.value,
                    &other.value,
                ))))
            }
        }
    }

    /// Type hints and correctness accounting for database-field values
    /// compared against concrete values. Field-vs-field comparisons are
    /// deliberately ignored.
    fn record_cmp_hints(&mut self, field_side: &TrackedValue, other_side: &TrackedValue) {
        let Origin::QueryField {
            query_digest,
            field,
        } = &field_side.origin
        else {
            return;
        };
        if matches!(other_side.origin, Origin::QueryField { .. }) {
            return;
        }
        let Some(hinted) = other_side.value.value_type() else {
            return;
        };
        self.hub
            .queries()
            .notify_by_digest(query_digest, field, hinted);
        if let Some(actual) = field_side.value.value_type() {
            self.stats.cmp_total += 1;
            if actual == hinted {
                self.stats.cmp_correct += 1;
            }
        }
    }

    fn call_internal(&mut self, name: &str, args: &[Expr]) -> Result<TrackedValue, RuntimeError> {
        let mut values = Vec::with_capacity(args.len());
        for arg in args {
            values.push(self.eval(arg)?);
        }
        let arity = |n: usize| -> Result<(), RuntimeError> {
            if values.len() == n {
                Ok(())
            } else {
                Err(RuntimeError::Abort(format!(
                    "{name}() expects {n} argument(s)"
                )))
            }
        };
        match name {
            "count" => {
                arity(1)?;
                let n = match &values[0].value {
                    Value::Row { query, index } => self
                        .hub
                        .queries()
                        .result(query, self.seed)
                        .and_then(|r| r.rows.get(*index).map(|row| row.len()))
                        .unwrap_or(0),
                    Value::Null => 0,
                    _ => 1,
                };
                Ok(TrackedValue::plain(Value::Int(n as i64)))
            }
            "strlen" => {
                arity(1)?;
                self.typed_string_call("strlen", &values[0], |s| Value::Int(s.len() as i64))
            }
            "lower" => {
                arity(1)?;
                self.typed_string_call("lower", &values[0], |s| Value::Str(s.to_ascii_lowercase()))
            }
            "intval" => {
                arity(1)?;
                let n = match &values[0].value {
                    Value::Int(i) => *i,
                    Value::Bool(b) => i64::from(*b),
                    Value::Str(s) => parse_int_prefix(s),
                    Value::Null => 0,
                    _ => 0,
                };
                Ok(TrackedValue::plain(Value::Int(n)))
            }
            "serialize" => {
                arity(1)?;
                let text = serialize_value(&values[0].value, self);
                Ok(TrackedValue::plain(Value::Str(text)))
            }
            other => Err(RuntimeError::UnknownFunction(other.to_string())),
        }
    }

    /// An internal function whose declared argument type is string: fires a
    /// Str hint for tracked fields, warns and returns null on wrong-typed
    /// arguments.
    fn typed_string_call(
        &mut self,
        name: &str,
        arg: &TrackedValue,
        apply: impl Fn(&str) -> Value,
    ) -> Result<TrackedValue, RuntimeError> {
        if let Origin::QueryField {
            query_digest,
            field,
        } = &arg.origin
        {
            self.hub
                .queries()
                .notify_by_digest(query_digest, field, ValueType::Str);
            if arg.value.value_type().is_some() {
                self.stats.call_total += 1;
                if matches!(arg.value, Value::Str(_)) {
                    self.stats.call_correct += 1;
                }
            }
        }
        match &arg.value {
            Value::Str(s) => Ok(TrackedValue::plain(apply(s))),
            other => {
                self.warn(format!(
                    "{name}() expects parameter 1 to be string, {} given",
                    other.type_name()
                ));
                Ok(TrackedValue::plain(Value::Null))
            }
        }
    }
}

fn origin_for(kind: SessionKind, key: &str) -> Origin {
    match kind {
        SessionKind::Session => Origin::Session(key.to_string()),
        SessionKind::Cookie => Origin::Cookie(key.to_string()),
    }
}

/// The session/cookie reference syntactically under a comparison operand,
/// if any.
fn session_target(expr: &Expr) -> Option<(SessionKind, String)> {
    match expr {
        Expr::SessionRef(key) => Some((SessionKind::Session, key.clone())),
        Expr::CookieRef(key) => Some((SessionKind::Cookie, key.clone())),
        _ => None,
    }
}

/// PHP-flavored stringification: true → "1", false and null → "".
pub fn display(value: &Value) -> String {
    match value {
        Value::Null => String::new(),
        Value::Int(i) => i.to_string(),
        Value::Str(s) => s.clone(),
        Value::Bool(true) => "1".to_string(),
        Value::Bool(false) => String::new(),
        Value::ResultHandle(_) => "Resource".to_string(),
        Value::Row { .. } => "Array".to_string(),
    }
}

fn truthy(value: &Value) -> bool {
    match value {
        Value::Null => false,
        Value::Int(i) => *i != 0,
        Value::Str(s) => !s.is_empty() && s != "0",
        Value::Bool(b) => *b,
        Value::ResultHandle(_) | Value::Row { .. } => true,
    }
}

fn parse_int_strict(s: &str) -> Option<i64> {
    let t = s.trim();
    if t.is_empty() {
        return None;
    }
    t.parse::<i64>().ok()
}

fn parse_int_prefix(s: &str) -> i64 {
    let t = s.trim_start();
    let mut end = 0;
    for (i, c) in t.char_indices() {
        if c.is_ascii_digit() || (i == 0 && c == '-') {
            end = i + c.len_utf8();
        } else {
            break;
        }
    }
    t[..end].parse().unwrap_or(0)
}

/// Type-juggled comparison: same types compare naturally, an integer and a
/// numeric string compare numerically, anything else is false.
fn juggle_cmp(op: CmpOp, lhs: &Value, rhs: &Value) -> bool {
    match (lhs, rhs) {
        (Value::Int(a), Value::Int(b)) => op.eval(a, b),
        (Value::Str(a), Value::Str(b)) => op.eval(a, b),
        (Value::Bool(a), Value::Bool(b)) => op.eval(a, b),
        (Value::Null, Value::Null) => matches!(op, CmpOp::Eq),
        (Value::Int(a), Value::Str(s)) => match parse_int_strict(s) {
            Some(n) => op.eval(a, &n),
            None => false,
        },
        (Value::Str(s), Value::Int(b)) => match parse_int_strict(s) {
            Some(n) => op.eval(&n, b),
            None => false,
        },
        _ => false,
    }
}

/// JSON-style encoding; control characters in strings are escaped, which
/// is why apps that concatenate raw field values instead of serializing
/// them are the interesting ones.
fn serialize_value(value: &Value, interp: &Interp<'_>) -> String {
    match value {
        Value::Null => "null".to_string(),
        Value::Int(i) => i.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Str(s) => serialize_str(s),
        Value::ResultHandle(_) => "null".to_string(),
        Value::Row { query, index } => {
            let Some(result) = interp.hub.queries().result(query, interp.seed) else {
                return "{}".to_string();
            };
            let Some(row) = result.rows.get(*index) else {
                return "null".to_string();
            };
            let inner: Vec<String> = row
                .iter()
                .map(|(k, v)| {
                    let v = match v {
                        ConcreteValue::Int(i) => i.to_string(),
                        ConcreteValue::Str(s) => serialize_str(s),
                        ConcreteValue::Bool(b) => b.to_string(),
                    };
                    format!("{}:{v}", serialize_str(k))
                })
                .collect();
            format!("{{{}}}", inner.join(","))
        }
    }
}

fn serialize_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
