use std::collections::{BTreeMap, HashMap};

use super::syntax::{BinOp, Expr, Program, Stmt, StmtKind};
use super::value::Value;
use super::{Fault, FaultKind, SandboxLimits, TraceEntry};
use crate::env::{Environment, ToolCall, ToolError, ToolSemantics};

const BUILTINS: &[&str] = &[
    "len", "first", "last", "sum", "avg", "min", "max", "sort", "reverse", "range", "str", "int",
    "dec", "round", "abs", "append", "contains", "keys", "get", "record", "print",
];

enum Flow {
    Normal,
    Return(Value),
}

pub(super) struct Interp<'a> {
    env: &'a Environment,
    scope: Option<&'a [String]>,
    limits: &'a SandboxLimits,
    vars: HashMap<String, Value>,
    line: usize,
    pub steps: u64,
    pub tool_calls: u32,
    pub trace: Vec<TraceEntry>,
    pub output: String,
}

fn runtime(message: impl Into<String>) -> Fault {
    Fault {
        kind: FaultKind::RuntimeError,
        message: message.into(),
        line: None,
    }
}

fn limit(message: impl Into<String>) -> Fault {
    Fault {
        kind: FaultKind::LimitExceeded,
        message: message.into(),
        line: None,
    }
}

impl<'a> Interp<'a> {
    pub fn new(env: &'a Environment, scope: Option<&'a [String]>, limits: &'a SandboxLimits) -> Self {
        Self {
            env,
            scope,
            limits,
            vars: HashMap::new(),
            line: 0,
            steps: 0,
            tool_calls: 0,
            trace: Vec::new(),
            output: String::new(),
        }
    }

    pub fn run(&mut self, program: &Program) -> Result<Value, Fault> {
        match self.block(program) {
            Ok(Flow::Return(v)) => Ok(v),
            Ok(Flow::Normal) => Ok(Value::None),
            Err(mut f) => {
                if f.line.is_none() && self.line > 0 {
                    f.line = Some(self.line);
                }
                Err(f)
            }
        }
    }

    fn tick_n(&mut self, n: u64) -> Result<(), Fault> {
        if self.steps + n > self.limits.max_eval_steps {
            self.steps = self.limits.max_eval_steps;
            return Err(limit(format!(
                "evaluation step budget of {} exhausted",
                self.limits.max_eval_steps
            )));
        }
        self.steps += n;
        Ok(())
    }

    fn tick(&mut self) -> Result<(), Fault> {
        self.tick_n(1)
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<Flow, Fault> {
        for s in stmts {
            if let Flow::Return(v) = self.stmt(s)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Normal)
    }

    fn stmt(&mut self, s: &Stmt) -> Result<Flow, Fault> {
        self.line = s.line;
        self.tick()?;
        match &s.kind {
            StmtKind::Assign(name, e) => {
                let v = self.eval(e)?;
                self.vars.insert(name.clone(), v);
            }
            StmtKind::Expr(e) => {
                self.eval(e)?;
            }
            StmtKind::Return(e) => {
                let v = match e {
                    Some(e) => self.eval(e)?,
                    None => Value::None,
                };
                return Ok(Flow::Return(v));
            }
            StmtKind::If(cond, then, otherwise) => {
                let branch = if self.eval(cond)?.truthy() { then } else { otherwise };
                return self.block(branch);
            }
            StmtKind::While(cond, body) => {
                while self.eval(cond)?.truthy() {
                    if let Flow::Return(v) = self.block(body)? {
                        return Ok(Flow::Return(v));
                    }
                    self.line = s.line;
                }
            }
            StmtKind::For(var, iter, body) => {
                let items = match self.eval(iter)? {
                    Value::List(items) => items,
                    Value::Record(fields) => fields.into_keys().map(Value::Str).collect(),
                    Value::Str(text) => text.chars().map(|c| Value::Str(c.to_string())).collect(),
                    other => {
                        return Err(runtime(format!("cannot loop over {}", other.type_name())))
                    }
                };
                for item in items {
                    self.tick()?;
                    self.vars.insert(var.clone(), item);
                    if let Flow::Return(v) = self.block(body)? {
                        return Ok(Flow::Return(v));
                    }
                    self.line = s.line;
                }
            }
        }
        Ok(Flow::Normal)
    }

    fn eval(&mut self, e: &Expr) -> Result<Value, Fault> {
        self.tick()?;
        match e {
            Expr::Lit(v) => Ok(v.clone()),
            Expr::Var(name) => self
                .vars
                .get(name)
                .cloned()
                .ok_or_else(|| runtime(format!("undefined variable '{name}'"))),
            Expr::List(items) => {
                let mut out = Vec::with_capacity(items.len());
                for i in items {
                    out.push(self.eval(i)?);
                }
                Ok(Value::List(out))
            }
            Expr::Neg(inner) => match self.eval(inner)? {
                Value::Int(i) => Ok(i.checked_neg().map(Value::Int).unwrap_or(Value::Dec(-(i as f64)))),
                Value::Dec(d) => Ok(Value::Dec(-d)),
                other => Err(runtime(format!("cannot negate {}", other.type_name()))),
            },
            Expr::Not(inner) => Ok(Value::Bool(!self.eval(inner)?.truthy())),
            Expr::And(a, b) => {
                let lhs = self.eval(a)?;
                if !lhs.truthy() {
                    return Ok(lhs);
                }
                self.eval(b)
            }
            Expr::Or(a, b) => {
                let lhs = self.eval(a)?;
                if lhs.truthy() {
                    return Ok(lhs);
                }
                self.eval(b)
            }
            Expr::Binary(op, a, b) => {
                let lhs = self.eval(a)?;
                let rhs = self.eval(b)?;
                binary(*op, lhs, rhs)
            }
            Expr::Field(base, name) => match self.eval(base)? {
                Value::Record(fields) => fields.get(name).cloned().ok_or_else(|| {
                    let known: Vec<&str> = fields.keys().map(String::as_str).collect();
                    runtime(format!(
                        "record has no field '{name}' (fields: {})",
                        known.join(", ")
                    ))
                }),
                other => Err(runtime(format!(
                    "cannot read field '{name}' of {}",
                    other.type_name()
                ))),
            },
            Expr::Index(base, idx) => {
                let base = self.eval(base)?;
                let idx = self.eval(idx)?;
                index(&base, &idx)
            }
            Expr::Call(name, args) => self.call(name, args),
        }
    }

    fn call(&mut self, name: &str, args: &[Expr]) -> Result<Value, Fault> {
        let tool_semantics = match name {
            "get_record" => Some(ToolSemantics::GetRecord),
            "filter_records" => Some(ToolSemantics::FilterRecords),
            _ => None,
        };
        if let Some(sem) = tool_semantics {
            let vals = self.tool_args(args)?;
            let [table, field, value] = vals.as_slice() else {
                return Err(runtime(format!("{name} takes (table, field, value)")));
            };
            let Value::Str(table) = table else {
                return Err(runtime(format!("{name}: table must be a name")));
            };
            let tool = self
                .env
                .tool_for(table, sem)
                .filter(|t| self.in_scope(&t.table))
                .map(|t| t.name.clone())
                .ok_or_else(|| runtime(format!("unknown tool: table {table} has no {name} tool")))?;
            return self.invoke(&tool, sem, field, value);
        }
        if let Some(spec) = self.env.tool(name).filter(|t| self.in_scope(&t.table)) {
            let sem = spec.semantics;
            let tool = spec.name.clone();
            let vals = self.tool_args(args)?;
            let [field, value] = vals.as_slice() else {
                return Err(runtime(format!("{name} takes (field, value)")));
            };
            return self.invoke(&tool, sem, field, value);
        }
        if !BUILTINS.contains(&name) {
            return Err(runtime(format!("unknown tool or function '{name}'")));
        }
        let mut vals = Vec::with_capacity(args.len());
        for a in args {
            vals.push(self.eval(a)?);
        }
        self.builtin(name, vals)
    }

    fn in_scope(&self, table: &str) -> bool {
        self.scope.is_none_or(|s| s.iter().any(|t| t == table))
    }

    /// Tool arguments may be bare words: an unbound identifier stands for its name.
    fn tool_args(&mut self, args: &[Expr]) -> Result<Vec<Value>, Fault> {
        let mut out = Vec::with_capacity(args.len());
        for a in args {
            match a {
                Expr::Var(n) if !self.vars.contains_key(n) => {
                    self.tick()?;
                    out.push(Value::Str(n.clone()));
                }
                other => out.push(self.eval(other)?),
            }
        }
        Ok(out)
    }

    fn invoke(
        &mut self,
        tool: &str,
        sem: ToolSemantics,
        field: &Value,
        value: &Value,
    ) -> Result<Value, Fault> {
        let Value::Str(field) = field else {
            return Err(runtime(format!("{tool}: field must be a name")));
        };
        let value = value
            .to_scalar()
            .ok_or_else(|| runtime(format!("{tool}: value must be a scalar, got {}", value.type_name())))?;
        if self.tool_calls >= self.limits.max_tool_calls {
            return Err(limit(format!(
                "tool call budget of {} exhausted",
                self.limits.max_tool_calls
            )));
        }
        self.tool_calls += 1;
        let call = ToolCall::new(tool, field, value);
        let result = self.env.invoke_tool(&call);
        let (records, error) = match &result {
            Ok(r) => (r.clone(), None),
            Err(e) => (Vec::new(), Some(e.clone())),
        };
        self.trace.push(TraceEntry { call, records, error });
        match (result, sem) {
            (Ok(rows), ToolSemantics::GetRecord) => {
                Ok(rows.first().map(Value::from).unwrap_or(Value::None))
            }
            (Ok(rows), ToolSemantics::FilterRecords) => {
                Ok(Value::List(rows.iter().map(Value::from).collect()))
            }
            (Err(ToolError::NoMatch { .. }), _) => Ok(Value::None),
            (Err(e), _) => Err(runtime(e.to_string())),
        }
    }

    fn builtin(&mut self, name: &str, args: Vec<Value>) -> Result<Value, Fault> {
        let arity = |n: usize| -> Result<(), Fault> {
            if args.len() == n {
                Ok(())
            } else {
                Err(runtime(format!("{name} takes {n} argument(s), got {}", args.len())))
            }
        };
        let list_arg = |v: &Value| -> Result<Vec<Value>, Fault> {
            match v {
                Value::List(l) => Ok(l.clone()),
                other => Err(runtime(format!("{name} expects a list, got {}", other.type_name()))),
            }
        };
        match name {
            "len" => {
                arity(1)?;
                match &args[0] {
                    Value::List(l) => Ok(Value::Int(l.len() as i64)),
                    Value::Str(s) => Ok(Value::Int(s.chars().count() as i64)),
                    Value::Record(r) => Ok(Value::Int(r.len() as i64)),
                    other => Err(runtime(format!("len of {}", other.type_name()))),
                }
            }
            "first" | "last" => {
                arity(1)?;
                let l = list_arg(&args[0])?;
                let v = if name == "first" { l.first() } else { l.last() };
                Ok(v.cloned().unwrap_or(Value::None))
            }
            "sum" => {
                arity(1)?;
                let l = list_arg(&args[0])?;
                self.tick_n(l.len() as u64)?;
                l.into_iter().try_fold(Value::Int(0), |acc, v| {
                    if v.as_f64().is_none() {
                        return Err(runtime(format!("sum over non-number {}", v.type_name())));
                    }
                    binary(BinOp::Add, acc, v)
                })
            }
            "avg" => {
                arity(1)?;
                let l = list_arg(&args[0])?;
                if l.is_empty() {
                    return Ok(Value::None);
                }
                let n = l.len() as i64;
                let total = self.builtin("sum", vec![Value::List(l)])?;
                binary(BinOp::Div, total, Value::Int(n))
            }
            "min" | "max" => {
                let items = if args.len() == 1 {
                    list_arg(&args[0])?
                } else {
                    args
                };
                self.tick_n(items.len() as u64)?;
                let mut best: Option<Value> = None;
                for v in items {
                    best = Some(match best {
                        None => v,
                        Some(b) => {
                            let ord = v.compare(&b).ok_or_else(|| {
                                runtime(format!("cannot compare {} and {}", v.type_name(), b.type_name()))
                            })?;
                            let better = if name == "min" { ord.is_lt() } else { ord.is_gt() };
                            if better {
                                v
                            } else {
                                b
                            }
                        }
                    });
                }
                Ok(best.unwrap_or(Value::None))
            }
            "sort" => {
                if args.is_empty() || args.len() > 2 {
                    return Err(runtime("sort takes (list) or (list, field)"));
                }
                let mut l = list_arg(&args[0])?;
                self.tick_n(l.len() as u64)?;
                let key = |v: &Value| -> Result<Value, Fault> {
                    match args.get(1) {
                        None => Ok(v.clone()),
                        Some(Value::Str(f)) => match v {
                            Value::Record(r) => r
                                .get(f)
                                .cloned()
                                .ok_or_else(|| runtime(format!("record has no field '{f}'"))),
                            other => Err(runtime(format!("cannot sort {} by field", other.type_name()))),
                        },
                        Some(_) => Err(runtime("sort field must be a name")),
                    }
                };
                let mut keyed = Vec::with_capacity(l.len());
                for v in l.drain(..) {
                    keyed.push((key(&v)?, v));
                }
                let mut err = None;
                keyed.sort_by(|a, b| {
                    a.0.compare(&b.0).unwrap_or_else(|| {
                        err.get_or_insert_with(|| {
                            runtime(format!("cannot compare {} and {}", a.0.type_name(), b.0.type_name()))
                        });
                        std::cmp::Ordering::Equal
                    })
                });
                match err {
                    Some(e) => Err(e),
                    None => Ok(Value::List(keyed.into_iter().map(|(_, v)| v).collect())),
                }
            }
            "reverse" => {
                arity(1)?;
                let mut l = list_arg(&args[0])?;
                l.reverse();
                Ok(Value::List(l))
            }
            "range" => {
                let (lo, hi) = match args.as_slice() {
                    [Value::Int(n)] => (0, *n),
                    [Value::Int(a), Value::Int(b)] => (*a, *b),
                    _ => return Err(runtime("range takes (n) or (start, end) integers")),
                };
                let n = hi.saturating_sub(lo).max(0) as u64;
                self.tick_n(n)?;
                Ok(Value::List((lo..hi).map(Value::Int).collect()))
            }
            "str" => {
                arity(1)?;
                Ok(Value::Str(args[0].render()))
            }
            "int" => {
                arity(1)?;
                match &args[0] {
                    Value::Int(i) => Ok(Value::Int(*i)),
                    Value::Bool(b) => Ok(Value::Int(*b as i64)),
                    Value::Dec(d) if d.is_finite() && d.abs() < 9.2e18 => Ok(Value::Int(d.trunc() as i64)),
                    Value::Str(s) => s
                        .trim()
                        .parse::<i64>()
                        .map(Value::Int)
                        .map_err(|_| runtime(format!("cannot convert {s:?} to int"))),
                    other => Err(runtime(format!("cannot convert {} to int", other.type_name()))),
                }
            }
            "dec" => {
                arity(1)?;
                match &args[0] {
                    Value::Str(s) => s
                        .trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|d| d.is_finite())
                        .map(Value::Dec)
                        .ok_or_else(|| runtime(format!("cannot convert {s:?} to dec"))),
                    other => other
                        .as_f64()
                        .map(Value::Dec)
                        .ok_or_else(|| runtime(format!("cannot convert {} to dec", other.type_name()))),
                }
            }
            "round" => match args.as_slice() {
                [v] => match v {
                    Value::Int(i) => Ok(Value::Int(*i)),
                    Value::Dec(d) if d.abs() < 9.2e18 => Ok(Value::Int(d.round() as i64)),
                    other => Err(runtime(format!("cannot round {}", other.type_name()))),
                },
                [v, Value::Int(places)] if (0..=12).contains(places) => {
                    let x = v
                        .as_f64()
                        .ok_or_else(|| runtime(format!("cannot round {}", v.type_name())))?;
                    let scale = 10f64.powi(*places as i32);
                    Ok(Value::Dec((x * scale).round() / scale))
                }
                _ => Err(runtime("round takes (number) or (number, places 0..12)")),
            },
            "abs" => {
                arity(1)?;
                match &args[0] {
                    Value::Int(i) => Ok(i.checked_abs().map(Value::Int).unwrap_or(Value::Dec((*i as f64).abs()))),
                    Value::Dec(d) => Ok(Value::Dec(d.abs())),
                    other => Err(runtime(format!("abs of {}", other.type_name()))),
                }
            }
            "append" => {
                arity(2)?;
                let mut l = list_arg(&args[0])?;
                l.push(args[1].clone());
                Ok(Value::List(l))
            }
            "contains" => {
                arity(2)?;
                match (&args[0], &args[1]) {
                    (Value::List(l), x) => Ok(Value::Bool(l.iter().any(|v| v.equals(x)))),
                    (Value::Str(s), Value::Str(sub)) => Ok(Value::Bool(s.contains(sub.as_str()))),
                    (Value::Record(r), Value::Str(k)) => Ok(Value::Bool(r.contains_key(k))),
                    (a, b) => Err(runtime(format!(
                        "contains({}, {}) is not supported",
                        a.type_name(),
                        b.type_name()
                    ))),
                }
            }
            "keys" => {
                arity(1)?;
                match &args[0] {
                    Value::Record(r) => Ok(Value::List(r.keys().cloned().map(Value::Str).collect())),
                    other => Err(runtime(format!("keys of {}", other.type_name()))),
                }
            }
            "get" => {
                if args.len() != 2 && args.len() != 3 {
                    return Err(runtime("get takes (container, key) or (container, key, default)"));
                }
                let default = args.get(2).cloned().unwrap_or(Value::None);
                match (&args[0], &args[1]) {
                    (Value::Record(r), Value::Str(k)) => Ok(r.get(k).cloned().unwrap_or(default)),
                    (Value::List(_), Value::Int(_)) => Ok(index(&args[0], &args[1]).unwrap_or(default)),
                    (Value::None, _) => Ok(default),
                    (a, b) => Err(runtime(format!("get({}, {}) is not supported", a.type_name(), b.type_name()))),
                }
            }
            "record" => {
                if !args.len().is_multiple_of(2) {
                    return Err(runtime("record takes alternating names and values"));
                }
                let mut r = BTreeMap::new();
                for pair in args.chunks(2) {
                    let Value::Str(k) = &pair[0] else {
                        return Err(runtime("record field names must be strings"));
                    };
                    r.insert(k.clone(), pair[1].clone());
                }
                Ok(Value::Record(r))
            }
            "print" => {
                let line: Vec<String> = args.iter().map(Value::render).collect();
                self.output.push_str(&line.join(" "));
                self.output.push('\n');
                if self.output.len() > self.limits.max_output_bytes {
                    return Err(limit(format!(
                        "output exceeds {} bytes",
                        self.limits.max_output_bytes
                    )));
                }
                Ok(Value::None)
            }
            _ => Err(runtime(format!("unknown tool or function '{name}'"))),
        }
    }
}

fn checked_int(op: BinOp, a: i64, b: i64) -> Result<Value, Fault> {
    let promoted = |f: fn(f64, f64) -> f64| finite(f(a as f64, b as f64));
    match op {
        BinOp::Add => a.checked_add(b).map(Value::Int).map_or_else(|| promoted(|x, y| x + y), Ok),
        BinOp::Sub => a.checked_sub(b).map(Value::Int).map_or_else(|| promoted(|x, y| x - y), Ok),
        BinOp::Mul => a.checked_mul(b).map(Value::Int).map_or_else(|| promoted(|x, y| x * y), Ok),
        BinOp::Div => {
            if b == 0 {
                return Err(runtime("division by zero"));
            }
            match a.checked_rem(b) {
                Some(0) => a.checked_div(b).map(Value::Int).map_or_else(|| promoted(|x, y| x / y), Ok),
                _ => promoted(|x, y| x / y),
            }
        }
        BinOp::Rem => {
            if b == 0 {
                return Err(runtime("division by zero"));
            }
            Ok(Value::Int(a.checked_rem(b).unwrap_or(0)))
        }
        _ => unreachable!("comparison handled by caller"),
    }
}

fn finite(x: f64) -> Result<Value, Fault> {
    if x.is_finite() {
        Ok(Value::Dec(x))
    } else {
        Err(runtime("arithmetic produced a non-finite number"))
    }
}

fn binary(op: BinOp, lhs: Value, rhs: Value) -> Result<Value, Fault> {
    use BinOp::*;
    match op {
        Eq => return Ok(Value::Bool(lhs.equals(&rhs))),
        Ne => return Ok(Value::Bool(!lhs.equals(&rhs))),
        Lt | Le | Gt | Ge => {
            let ord = lhs.compare(&rhs).ok_or_else(|| {
                runtime(format!("cannot compare {} and {}", lhs.type_name(), rhs.type_name()))
            })?;
            return Ok(Value::Bool(match op {
                Lt => ord.is_lt(),
                Le => ord.is_le(),
                Gt => ord.is_gt(),
                _ => ord.is_ge(),
            }));
        }
        _ => {}
    }
    match (lhs, rhs) {
        (Value::Int(a), Value::Int(b)) => checked_int(op, a, b),
        (Value::Str(a), b) if op == Add => Ok(Value::Str(a + &b.render())),
        (a, Value::Str(b)) if op == Add && a.as_f64().is_some() => Ok(Value::Str(a.render() + &b)),
        (Value::List(mut a), Value::List(b)) if op == Add => {
            a.extend(b);
            Ok(Value::List(a))
        }
        (a, b) => {
            let (Some(x), Some(y)) = (a.as_f64(), b.as_f64()) else {
                return Err(runtime(format!(
                    "unsupported operands {} and {}",
                    a.type_name(),
                    b.type_name()
                )));
            };
            match op {
                Add => finite(x + y),
                Sub => finite(x - y),
                Mul => finite(x * y),
                Div | Rem if y == 0.0 => Err(runtime("division by zero")),
                Div => finite(x / y),
                _ => finite(x % y),
            }
        }
    }
}

fn index(base: &Value, idx: &Value) -> Result<Value, Fault> {
    match (base, idx) {
        (Value::List(l), Value::Int(i)) => {
            let n = l.len() as i64;
            let j = if *i < 0 { n + i } else { *i };
            if (0..n).contains(&j) {
                Ok(l[j as usize].clone())
            } else {
                Err(runtime(format!("index {i} out of range for list of length {n}")))
            }
        }
        (Value::Str(s), Value::Int(i)) => {
            let chars: Vec<char> = s.chars().collect();
            let n = chars.len() as i64;
            let j = if *i < 0 { n + i } else { *i };
            if (0..n).contains(&j) {
                Ok(Value::Str(chars[j as usize].to_string()))
            } else {
                Err(runtime(format!("index {i} out of range for string of length {n}")))
            }
        }
        (Value::Record(r), Value::Str(k)) => r
            .get(k)
            .cloned()
            .ok_or_else(|| runtime(format!("record has no field '{k}'"))),
        (b, i) => Err(runtime(format!("cannot index {} with {}", b.type_name(), i.type_name()))),
    }
}
