//! Offline stand-in for the remote interpreter.
//!
//! Understands a straight-line subset of Python: imports, assignments,
//! `print`, arithmetic and comparisons, a handful of `math`, `datetime` and
//! `statistics` helpers, and `str.count`. Anything outside that subset is a
//! runtime error. A fixture table can pin results for specific snippets.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::interpreter::{CodeExecutor, ExecStatus, ExecutionResult};

pub const DEFAULT_ALLOWED: [&str; 6] = ["math", "sympy", "itertools", "datetime", "random", "statistics"];
pub const DEFAULT_DENIED: [&str; 6] = ["os", "sys", "subprocess", "socket", "shutil", "pathlib"];
const DENIED_CALLS: [&str; 5] = ["open", "eval", "exec", "compile", "input"];

/// Table-first mock interpreter with an expression-evaluator fallback.
#[derive(Debug, Default)]
pub struct MockInterpreter {
    table: HashMap<String, ExecutionResult>,
    calls: AtomicUsize,
}

impl MockInterpreter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, code: &str, result: ExecutionResult) -> Self {
        self.table.insert(code.trim().to_string(), result);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl CodeExecutor for MockInterpreter {
    fn execute(&self, code: &str, timeout_ms: u64) -> ExecutionResult {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(hit) = self.table.get(code.trim()) {
            return hit.clone();
        }
        if let Err(reason) = screen(code) {
            return ExecutionResult::failed(ExecStatus::Rejected, reason);
        }
        match run(code) {
            Ok(stdout) => ExecutionResult::ok(stdout),
            Err(Fault::Timeout) => ExecutionResult {
                stdout: String::new(),
                stderr: format!("execution exceeded {timeout_ms} ms"),
                status: ExecStatus::Timeout,
                duration_ms: timeout_ms,
            },
            Err(Fault::Error(msg)) => ExecutionResult::failed(ExecStatus::RuntimeError, msg),
        }
    }
}

fn module_root(name: &str) -> &str {
    name.split('.').next().unwrap_or(name).trim()
}

/// Rejects imports outside the allow-list, dunder access and file/eval calls.
pub fn screen(code: &str) -> Result<(), String> {
    if code.contains("__") {
        return Err("dunder access is not allowed".into());
    }
    for line in code.lines().map(str::trim) {
        let modules: Vec<&str> = if let Some(rest) = line.strip_prefix("import ") {
            rest.split(',').map(|m| module_root(m.split(" as ").next().unwrap_or(m))).collect()
        } else if let Some(rest) = line.strip_prefix("from ") {
            vec![module_root(rest.split_whitespace().next().unwrap_or(""))]
        } else {
            Vec::new()
        };
        for m in modules {
            if DEFAULT_DENIED.contains(&m) || !DEFAULT_ALLOWED.contains(&m) {
                return Err(format!("ImportError: import of module '{m}' is not allowed"));
            }
        }
    }
    let tokens = lex(code).unwrap_or_default();
    for w in tokens.windows(2) {
        if let (Tok::Name(n), Tok::Op("(")) = (&w[0], &w[1]) {
            if DENIED_CALLS.contains(&n.as_str()) {
                return Err(format!("call to '{n}' is not allowed"));
            }
        }
    }
    Ok(())
}

enum Fault {
    Timeout,
    Error(String),
}

impl From<String> for Fault {
    fn from(s: String) -> Self {
        Fault::Error(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(String),
    Str(String),
    Name(String),
    Op(&'static str),
    Newline,
}

const OPS: [&str; 27] = [
    "**", "//", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "+", "-", "*", "/", "%", "<", ">", "(", ")", "[", "]",
    ",", ".", "=", ":", ";", "|",
];

fn lex(code: &str) -> Result<Vec<Tok>, String> {
    let chars: Vec<char> = code.chars().collect();
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '\n' => {
                if depth == 0 {
                    out.push(Tok::Newline);
                }
                i += 1;
            }
            '\\' if chars.get(i + 1) == Some(&'\n') => i += 2,
            c if c.is_whitespace() => i += 1,
            c if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.' || chars[i] == '_') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    i += 1;
                    if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                        i += 1;
                    }
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                out.push(Tok::Num(chars[start..i].iter().filter(|&&c| c != '_').collect()));
            }
            '"' | '\'' => {
                let quote = c;
                i += 1;
                let mut s = String::new();
                loop {
                    match chars.get(i) {
                        None | Some('\n') => return Err("SyntaxError: unterminated string literal".into()),
                        Some(&q) if q == quote => break,
                        Some('\\') => {
                            let esc = chars.get(i + 1).copied().unwrap_or('\\');
                            s.push(match esc {
                                'n' => '\n',
                                't' => '\t',
                                other => other,
                            });
                            i += 2;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                i += 1;
                out.push(Tok::Str(s));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Tok::Name(chars[start..i].iter().collect()));
            }
            _ => {
                let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
                let op = OPS
                    .iter()
                    .find(|op| rest.starts_with(**op))
                    .ok_or_else(|| format!("SyntaxError: invalid character '{c}'"))?;
                match *op {
                    "(" | "[" => depth += 1,
                    ")" | "]" => depth = depth.saturating_sub(1),
                    _ => {}
                }
                out.push(Tok::Op(op));
                i += op.len();
            }
        }
    }
    out.push(Tok::Newline);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    None,
    Bool(bool),
    Int(i128),
    Float(f64),
    Str(String),
    List(Vec<Value>),
    /// Seconds since 1970-01-01T00:00:00.
    DateTime(i64),
    /// Whole seconds.
    Delta(i64),
    Module(&'static str),
    Builtin(String),
    Method(Box<Value>, String),
}

impl Value {
    fn type_name(&self) -> &'static str {
        match self {
            Value::None => "NoneType",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "str",
            Value::List(_) => "list",
            Value::DateTime(_) => "datetime.datetime",
            Value::Delta(_) => "datetime.timedelta",
            Value::Module(_) => "module",
            Value::Builtin(_) | Value::Method(..) => "builtin_function_or_method",
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Bool(b) => Some(f64::from(u8::from(b))),
            Value::Int(i) => Some(i as f64),
            Value::Float(f) => Some(f),
            _ => None,
        }
    }

    fn as_int(&self) -> Option<i128> {
        match *self {
            Value::Bool(b) => Some(i128::from(b)),
            Value::Int(i) => Some(i),
            _ => None,
        }
    }

    fn truthy(&self) -> bool {
        match self {
            Value::None => false,
            Value::Bool(b) => *b,
            Value::Int(i) => *i != 0,
            Value::Float(f) => *f != 0.0,
            Value::Str(s) => !s.is_empty(),
            Value::List(l) => !l.is_empty(),
            Value::Delta(d) => *d != 0,
            _ => true,
        }
    }

    fn repr(&self) -> String {
        match self {
            Value::Str(s) => format!("'{s}'"),
            other => other.to_str(),
        }
    }

    fn to_str(&self) -> String {
        match self {
            Value::None => "None".into(),
            Value::Bool(true) => "True".into(),
            Value::Bool(false) => "False".into(),
            Value::Int(i) => i.to_string(),
            Value::Float(f) => py_float_repr(*f),
            Value::Str(s) => s.clone(),
            Value::List(items) => format!("[{}]", items.iter().map(Value::repr).collect::<Vec<_>>().join(", ")),
            Value::DateTime(secs) => {
                let (days, rem) = (secs.div_euclid(86_400), secs.rem_euclid(86_400));
                let (y, m, d) = civil_from_days(days);
                format!("{y:04}-{m:02}-{d:02} {:02}:{:02}:{:02}", rem / 3600, rem % 3600 / 60, rem % 60)
            }
            Value::Delta(secs) => {
                let (days, rem) = (secs.div_euclid(86_400), secs.rem_euclid(86_400));
                let clock = format!("{}:{:02}:{:02}", rem / 3600, rem % 3600 / 60, rem % 60);
                match days {
                    0 => clock,
                    1 | -1 => format!("{days} day, {clock}"),
                    _ => format!("{days} days, {clock}"),
                }
            }
            Value::Module(m) => format!("<module '{m}'>"),
            Value::Builtin(name) | Value::Method(_, name) => format!("<built-in function {name}>"),
        }
    }
}

/// Python's `repr(float)`: shortest round-trip digits, scientific notation
/// outside `1e-4 <= |x| < 1e16`.
pub fn py_float_repr(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    let sci = format!("{:e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    if (-4..16).contains(&exp) {
        let point = exp + 1;
        let body = if point <= 0 {
            format!("0.{}{}", "0".repeat((-point) as usize), digits)
        } else if point as usize >= digits.len() {
            format!("{}{}.0", digits, "0".repeat(point as usize - digits.len()))
        } else {
            format!("{}.{}", &digits[..point as usize], &digits[point as usize..])
        };
        format!("{sign}{body}")
    } else {
        let frac = &digits[1..];
        let mant = if frac.is_empty() { digits[..1].to_string() } else { format!("{}.{}", &digits[..1], frac) };
        format!("{sign}{mant}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn civil_from_days(z: i64) -> (i64, i64, i64) {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    (if m <= 2 { yoe + era * 400 + 1 } else { yoe + era * 400 }, m, d)
}

struct Interp {
    vars: HashMap<String, Value>,
    out: String,
}

struct Parser<'a> {
    toks: &'a [Tok],
    pos: usize,
}

type EvalResult = Result<Value, Fault>;

fn run(code: &str) -> Result<String, Fault> {
    let toks = lex(code)?;
    let mut interp = Interp { vars: HashMap::new(), out: String::new() };
    let mut p = Parser { toks: &toks, pos: 0 };
    while p.pos < toks.len() {
        interp.statement(&mut p)?;
    }
    Ok(interp.out)
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Op(o)) if *o == op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_name(&mut self, name: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Name(n)) if n == name) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> Result<(), Fault> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(Fault::Error(format!("SyntaxError: expected '{op}'")))
        }
    }

    fn name(&mut self) -> Result<String, Fault> {
        match self.next() {
            Some(Tok::Name(n)) => Ok(n),
            _ => Err(Fault::Error("SyntaxError: expected a name".into())),
        }
    }

    fn end_statement(&mut self) -> Result<(), Fault> {
        match self.next() {
            Some(Tok::Newline) | None => Ok(()),
            Some(Tok::Op(";")) => Ok(()),
            Some(t) => Err(Fault::Error(format!("SyntaxError: unexpected token {t:?}"))),
        }
    }
}

fn module(name: &str) -> Option<Value> {
    let m = DEFAULT_ALLOWED.iter().find(|m| **m == name)?;
    Some(Value::Module(m))
}

fn arith_overflow() -> Fault {
    Fault::Error("OverflowError: integer result too large for the mock interpreter".into())
}

impl Interp {
    fn statement(&mut self, p: &mut Parser<'_>) -> Result<(), Fault> {
        match p.peek() {
            Some(Tok::Newline) | Some(Tok::Op(";")) => {
                p.pos += 1;
                return Ok(());
            }
            Some(Tok::Name(kw)) if kw == "import" => {
                p.pos += 1;
                loop {
                    let mut path = p.name()?;
                    while p.eat_op(".") {
                        path = format!("{path}.{}", p.name()?);
                    }
                    let root = module_root(&path).to_string();
                    let alias = if p.eat_name("as") { p.name()? } else { root.clone() };
                    let value =
                        module(&root).ok_or_else(|| format!("ModuleNotFoundError: No module named '{root}'"))?;
                    self.vars.insert(alias, value);
                    if !p.eat_op(",") {
                        break;
                    }
                }
                return p.end_statement();
            }
            Some(Tok::Name(kw)) if kw == "from" => {
                p.pos += 1;
                let root = p.name()?;
                let m = module(&root).ok_or_else(|| format!("ModuleNotFoundError: No module named '{root}'"))?;
                if !p.eat_name("import") {
                    return Err(Fault::Error("SyntaxError: expected 'import'".into()));
                }
                loop {
                    let attr = p.name()?;
                    let alias = if p.eat_name("as") { p.name()? } else { attr.clone() };
                    let value = self.attribute(m.clone(), &attr)?;
                    self.vars.insert(alias, value);
                    if !p.eat_op(",") {
                        break;
                    }
                }
                return p.end_statement();
            }
            Some(Tok::Name(kw)) if kw == "while" => {
                p.pos += 1;
                let cond = self.expr(p)?;
                if cond.truthy() && !self.block_can_exit(p) {
                    return Err(Fault::Timeout);
                }
                return Err(Fault::Error("SyntaxError: loops are not supported by the mock interpreter".into()));
            }
            Some(Tok::Name(kw)) if ["for", "if", "def", "class", "with", "try", "lambda"].contains(&kw.as_str()) => {
                return Err(Fault::Error(format!(
                    "SyntaxError: '{kw}' statements are not supported by the mock interpreter"
                )));
            }
            _ => {}
        }
        if let (Some(Tok::Name(target)), Some(Tok::Op(op))) = (p.peek().cloned(), p.peek_at(1).cloned()) {
            if matches!(op, "=" | "+=" | "-=" | "*=" | "/=") {
                p.pos += 2;
                let rhs = self.expr(p)?;
                let value = match op {
                    "=" => rhs,
                    compound => {
                        let current = self.lookup(&target)?;
                        self.binary(&compound[..1], current, rhs)?
                    }
                };
                self.vars.insert(target, value);
                return p.end_statement();
            }
        }
        self.expr(p)?;
        p.end_statement()
    }

    /// Whether a `while` body contains `break` (scans to the end of input).
    fn block_can_exit(&self, p: &Parser<'_>) -> bool {
        p.toks[p.pos..].iter().any(|t| matches!(t, Tok::Name(n) if n == "break" || n == "return"))
    }

    fn lookup(&self, name: &str) -> EvalResult {
        if let Some(v) = self.vars.get(name) {
            return Ok(v.clone());
        }
        match name {
            "True" => Ok(Value::Bool(true)),
            "False" => Ok(Value::Bool(false)),
            "None" => Ok(Value::None),
            "print" | "abs" | "round" | "min" | "max" | "sum" | "len" | "int" | "float" | "str" | "pow" | "bool" => {
                Ok(Value::Builtin(name.to_string()))
            }
            _ => Err(Fault::Error(format!("NameError: name '{name}' is not defined"))),
        }
    }

    fn expr(&mut self, p: &mut Parser<'_>) -> EvalResult {
        let mut left = self.and_expr(p)?;
        while p.eat_name("or") {
            let right = self.and_expr(p)?;
            left = if left.truthy() { left } else { right };
        }
        Ok(left)
    }

    fn and_expr(&mut self, p: &mut Parser<'_>) -> EvalResult {
        let mut left = self.not_expr(p)?;
        while p.eat_name("and") {
            let right = self.not_expr(p)?;
            left = if left.truthy() { right } else { left };
        }
        Ok(left)
    }

    fn not_expr(&mut self, p: &mut Parser<'_>) -> EvalResult {
        if p.eat_name("not") {
            let v = self.not_expr(p)?;
            return Ok(Value::Bool(!v.truthy()));
        }
        self.comparison(p)
    }

    fn comparison(&mut self, p: &mut Parser<'_>) -> EvalResult {
        let first = self.additive(p)?;
        let mut left = first.clone();
        let mut result: Option<bool> = None;
        loop {
            let op = match p.peek() {
                Some(Tok::Op(op)) if matches!(*op, "<" | ">" | "<=" | ">=" | "==" | "!=") => *op,
                _ => break,
            };
            p.pos += 1;
            let right = self.additive(p)?;
            let holds = compare(op, &left, &right)?;
            result = Some(result.unwrap_or(true) && holds);
            left = right;
        }
        Ok(match result {
            Some(b) => Value::Bool(b),
            None => first,
        })
    }

    fn additive(&mut self, p: &mut Parser<'_>) -> EvalResult {
        let mut left = self.term(p)?;
        loop {
            let op = match p.peek() {
                Some(Tok::Op(op)) if matches!(*op, "+" | "-") => *op,
                _ => return Ok(left),
            };
            p.pos += 1;
            let right = self.term(p)?;
            left = self.binary(op, left, right)?;
        }
    }

    fn term(&mut self, p: &mut Parser<'_>) -> EvalResult {
        let mut left = self.unary(p)?;
        loop {
            let op = match p.peek() {
                Some(Tok::Op(op)) if matches!(*op, "*" | "/" | "//" | "%") => *op,
                _ => return Ok(left),
            };
            p.pos += 1;
            let right = self.unary(p)?;
            left = self.binary(op, left, right)?;
        }
    }

    fn unary(&mut self, p: &mut Parser<'_>) -> EvalResult {
        if p.eat_op("-") {
            let v = self.unary(p)?;
            return match v {
                Value::Int(i) => Ok(Value::Int(-i)),
                Value::Bool(b) => Ok(Value::Int(-i128::from(b))),
                Value::Float(f) => Ok(Value::Float(-f)),
                Value::Delta(d) => Ok(Value::Delta(-d)),
                other => Err(Fault::Error(format!("TypeError: bad operand type for unary -: '{}'", other.type_name()))),
            };
        }
        if p.eat_op("+") {
            return self.unary(p);
        }
        self.power(p)
    }

    fn power(&mut self, p: &mut Parser<'_>) -> EvalResult {
        let base = self.postfix(p)?;
        if p.eat_op("**") {
            let exp = self.unary(p)?;
            return self.binary("**", base, exp);
        }
        Ok(base)
    }

    fn postfix(&mut self, p: &mut Parser<'_>) -> EvalResult {
        let mut v = self.atom(p)?;
        loop {
            if p.eat_op(".") {
                let attr = p.name()?;
                v = self.attribute(v, &attr)?;
            } else if p.eat_op("(") {
                let mut args = Vec::new();
                while !p.eat_op(")") {
                    args.push(self.expr(p)?);
                    if !p.eat_op(",") {
                        p.expect_op(")")?;
                        break;
                    }
                }
                v = self.call(v, args)?;
            } else if p.eat_op("[") {
                let idx = self.expr(p)?;
                p.expect_op("]")?;
                v = index(v, idx)?;
            } else {
                return Ok(v);
            }
        }
    }

    fn atom(&mut self, p: &mut Parser<'_>) -> EvalResult {
        match p.next() {
            Some(Tok::Num(n)) => {
                if n.contains(['.', 'e', 'E']) {
                    n.parse().map(Value::Float).map_err(|_| Fault::Error(format!("SyntaxError: bad number {n}")))
                } else {
                    n.parse().map(Value::Int).map_err(|_| arith_overflow())
                }
            }
            Some(Tok::Str(s)) => {
                let mut s = s;
                while let Some(Tok::Str(more)) = p.peek().cloned() {
                    p.pos += 1;
                    s.push_str(&more);
                }
                Ok(Value::Str(s))
            }
            Some(Tok::Name(n)) => self.lookup(&n),
            Some(Tok::Op("(")) => {
                let v = self.expr(p)?;
                p.expect_op(")")?;
                Ok(v)
            }
            Some(Tok::Op("[")) => {
                let mut items = Vec::new();
                while !p.eat_op("]") {
                    items.push(self.expr(p)?);
                    if !p.eat_op(",") {
                        p.expect_op("]")?;
                        break;
                    }
                }
                Ok(Value::List(items))
            }
            other => Err(Fault::Error(format!("SyntaxError: unexpected {other:?}"))),
        }
    }

    fn attribute(&self, v: Value, attr: &str) -> EvalResult {
        match (&v, attr) {
            (Value::Module("math"), "pi") => Ok(Value::Float(std::f64::consts::PI)),
            (Value::Module("math"), "e") => Ok(Value::Float(std::f64::consts::E)),
            (Value::Module("math"), "tau") => Ok(Value::Float(std::f64::consts::TAU)),
            (Value::Module(m), _) => Ok(Value::Builtin(format!("{m}.{attr}"))),
            (Value::Delta(d), "days") => Ok(Value::Int(i128::from(d.div_euclid(86_400)))),
            (Value::Delta(d), "seconds") => Ok(Value::Int(i128::from(d.rem_euclid(86_400)))),
            (Value::Builtin(b), _) if b == "datetime.datetime" || b == "datetime.date" => {
                Ok(Value::Builtin(format!("{b}.{attr}")))
            }
            (Value::Str(_), _) | (Value::Delta(_), _) | (Value::List(_), _) => {
                Ok(Value::Method(Box::new(v.clone()), attr.to_string()))
            }
            _ => Err(Fault::Error(format!("AttributeError: '{}' object has no attribute '{attr}'", v.type_name()))),
        }
    }

    fn call(&mut self, f: Value, args: Vec<Value>) -> EvalResult {
        let num = |i: usize| -> Result<f64, Fault> {
            args.get(i).and_then(Value::as_f64).ok_or_else(|| Fault::Error("TypeError: must be real number".into()))
        };
        let float = |x: f64| -> EvalResult {
            if x.is_nan() {
                Err(Fault::Error("ValueError: math domain error".into()))
            } else {
                Ok(Value::Float(x))
            }
        };
        match f {
            Value::Builtin(name) => match name.as_str() {
                "print" => {
                    let line: Vec<String> = args.iter().map(Value::to_str).collect();
                    self.out.push_str(&line.join(" "));
                    self.out.push('\n');
                    Ok(Value::None)
                }
                "abs" => match args.first() {
                    Some(Value::Int(i)) => Ok(Value::Int(i.abs())),
                    _ => Ok(Value::Float(num(0)?.abs())),
                },
                "round" => {
                    let x = num(0)?;
                    match args.get(1).and_then(Value::as_int) {
                        None => Ok(Value::Int(x.round_ties_even() as i128)),
                        Some(nd) => {
                            let text = format!("{:.*}", nd.max(0) as usize, x);
                            Ok(Value::Float(text.parse().unwrap_or(x)))
                        }
                    }
                }
                "min" | "max" | "sum" | "statistics.mean" | "statistics.fmean" => {
                    let items = match args.as_slice() {
                        [Value::List(items)] => items.clone(),
                        _ => args.clone(),
                    };
                    if items.is_empty() {
                        return if name == "sum" {
                            Ok(Value::Int(0))
                        } else {
                            Err(Fault::Error(format!("ValueError: {name}() arg is an empty sequence")))
                        };
                    }
                    match name.as_str() {
                        "sum" | "statistics.mean" | "statistics.fmean" => {
                            let mut acc = Value::Int(0);
                            for item in &items {
                                acc = self.binary("+", acc, item.clone())?;
                            }
                            if name == "sum" {
                                Ok(acc)
                            } else {
                                self.binary("/", acc, Value::Int(items.len() as i128))
                            }
                        }
                        _ => {
                            let mut best = items[0].clone();
                            for item in &items[1..] {
                                let better =
                                    if name == "min" { compare("<", item, &best)? } else { compare(">", item, &best)? };
                                if better {
                                    best = item.clone();
                                }
                            }
                            Ok(best)
                        }
                    }
                }
                "len" => match args.first() {
                    Some(Value::Str(s)) => Ok(Value::Int(s.chars().count() as i128)),
                    Some(Value::List(l)) => Ok(Value::Int(l.len() as i128)),
                    _ => Err(Fault::Error("TypeError: object has no len()".into())),
                },
                "int" => match args.first() {
                    Some(Value::Str(s)) => s
                        .trim()
                        .parse()
                        .map(Value::Int)
                        .map_err(|_| Fault::Error(format!("ValueError: invalid literal for int(): '{s}'"))),
                    _ => Ok(Value::Int(num(0)?.trunc() as i128)),
                },
                "float" => match args.first() {
                    Some(Value::Str(s)) => s
                        .trim()
                        .parse()
                        .map(Value::Float)
                        .map_err(|_| Fault::Error(format!("ValueError: could not convert string to float: '{s}'"))),
                    _ => Ok(Value::Float(num(0)?)),
                },
                "str" => Ok(Value::Str(args.first().map(Value::to_str).unwrap_or_default())),
                "bool" => Ok(Value::Bool(args.first().is_some_and(Value::truthy))),
                "pow" | "math.pow" => {
                    let (a, b) =
                        (args.first().cloned().unwrap_or(Value::None), args.get(1).cloned().unwrap_or(Value::None));
                    if name == "math.pow" {
                        float(num(0)?.powf(num(1)?))
                    } else {
                        self.binary("**", a, b)
                    }
                }
                "math.sqrt" => float(num(0)?.sqrt()),
                "math.sin" => float(num(0)?.sin()),
                "math.cos" => float(num(0)?.cos()),
                "math.tan" => float(num(0)?.tan()),
                "math.exp" => float(num(0)?.exp()),
                "math.fabs" => float(num(0)?.abs()),
                "math.log" => match args.len() {
                    1 => float(num(0)?.ln()),
                    _ => float(num(0)?.ln() / num(1)?.ln()),
                },
                "math.log10" => float(num(0)?.log10()),
                "math.log2" => float(num(0)?.log2()),
                "math.floor" => Ok(Value::Int(num(0)?.floor() as i128)),
                "math.ceil" => Ok(Value::Int(num(0)?.ceil() as i128)),
                "math.hypot" => {
                    let parts: Result<Vec<f64>, Fault> = (0..args.len()).map(num).collect();
                    float(parts?.iter().map(|x| x * x).sum::<f64>().sqrt())
                }
                "math.dist" => match (args.first(), args.get(1)) {
                    (Some(Value::List(a)), Some(Value::List(b))) if a.len() == b.len() => {
                        let mut acc = 0.0;
                        for (x, y) in a.iter().zip(b) {
                            let d = x.as_f64().unwrap_or(f64::NAN) - y.as_f64().unwrap_or(f64::NAN);
                            acc += d * d;
                        }
                        float(acc.sqrt())
                    }
                    _ => Err(Fault::Error("TypeError: dist() expects two sequences of equal length".into())),
                },
                "datetime.datetime" | "datetime.date" => {
                    let part = |i: usize, default: i128| args.get(i).and_then(Value::as_int).unwrap_or(default) as i64;
                    let (y, m, d) = (part(0, 1970), part(1, 1), part(2, 1));
                    if !(1..=12).contains(&m) || !(1..=31).contains(&d) {
                        return Err(Fault::Error("ValueError: day is out of range for month".into()));
                    }
                    let secs = days_from_civil(y, m, d) * 86_400 + part(3, 0) * 3600 + part(4, 0) * 60 + part(5, 0);
                    Ok(Value::DateTime(secs))
                }
                other => Err(Fault::Error(format!(
                    "NotImplementedError: '{other}' is not available in the mock interpreter"
                ))),
            },
            Value::Method(recv, method) => match (*recv, method.as_str()) {
                (Value::Str(s), "count") => match args.first() {
                    Some(Value::Str(needle)) if !needle.is_empty() => {
                        Ok(Value::Int(s.matches(needle.as_str()).count() as i128))
                    }
                    Some(Value::Str(_)) => Ok(Value::Int(s.chars().count() as i128 + 1)),
                    _ => Err(Fault::Error("TypeError: must be str".into())),
                },
                (Value::Str(s), "upper") => Ok(Value::Str(s.to_uppercase())),
                (Value::Str(s), "lower") => Ok(Value::Str(s.to_lowercase())),
                (Value::Str(s), "strip") => Ok(Value::Str(s.trim().to_string())),
                (Value::Delta(d), "total_seconds") => Ok(Value::Float(d as f64)),
                (recv, m) => {
                    Err(Fault::Error(format!("AttributeError: '{}' object has no attribute '{m}'", recv.type_name())))
                }
            },
            other => Err(Fault::Error(format!("TypeError: '{}' object is not callable", other.type_name()))),
        }
    }

    fn binary(&self, op: &str, a: Value, b: Value) -> EvalResult {
        use Value::*;
        let bad = |a: &Value, b: &Value| {
            Fault::Error(format!(
                "TypeError: unsupported operand type(s) for {op}: '{}' and '{}'",
                a.type_name(),
                b.type_name()
            ))
        };
        match (op, &a, &b) {
            ("+", Str(x), Str(y)) => return Ok(Str(format!("{x}{y}"))),
            ("*", Str(x), Int(n)) | ("*", Int(n), Str(x)) => return Ok(Str(x.repeat((*n).max(0) as usize))),
            ("-", DateTime(x), DateTime(y)) => return Ok(Delta(x - y)),
            ("+", DateTime(x), Delta(y)) | ("+", Delta(y), DateTime(x)) => return Ok(DateTime(x + y)),
            ("-", DateTime(x), Delta(y)) => return Ok(DateTime(x - y)),
            ("+", Delta(x), Delta(y)) => return Ok(Delta(x + y)),
            ("-", Delta(x), Delta(y)) => return Ok(Delta(x - y)),
            _ => {}
        }
        if let (Some(x), Some(y)) = (a.as_int(), b.as_int()) {
            let zero_div = || Fault::Error("ZeroDivisionError: division by zero".into());
            return match op {
                "+" => x.checked_add(y).map(Int).ok_or_else(arith_overflow),
                "-" => x.checked_sub(y).map(Int).ok_or_else(arith_overflow),
                "*" => x.checked_mul(y).map(Int).ok_or_else(arith_overflow),
                "/" if y == 0 => Err(zero_div()),
                "/" => Ok(Float(x as f64 / y as f64)),
                "//" if y == 0 => Err(zero_div()),
                "//" => Ok(Int(x.div_euclid(y) - i128::from(y < 0 && x.rem_euclid(y) != 0))),
                "%" if y == 0 => Err(zero_div()),
                "%" => {
                    let r = x.rem_euclid(y);
                    Ok(Int(if y < 0 && r != 0 { r + y } else { r }))
                }
                "**" if y >= 0 => {
                    u32::try_from(y).ok().and_then(|e| x.checked_pow(e)).map(Int).ok_or_else(arith_overflow)
                }
                "**" => Ok(Float((x as f64).powf(y as f64))),
                _ => Err(bad(&a, &b)),
            };
        }
        let (Some(x), Some(y)) = (a.as_f64(), b.as_f64()) else {
            return Err(bad(&a, &b));
        };
        let zero_div = || Fault::Error("ZeroDivisionError: float division by zero".into());
        match op {
            "+" => Ok(Float(x + y)),
            "-" => Ok(Float(x - y)),
            "*" => Ok(Float(x * y)),
            "/" if y == 0.0 => Err(zero_div()),
            "/" => Ok(Float(x / y)),
            "//" if y == 0.0 => Err(zero_div()),
            "//" => Ok(Float((x / y).floor())),
            "%" if y == 0.0 => Err(zero_div()),
            "%" => Ok(Float(x - y * (x / y).floor())),
            "**" => {
                let r = x.powf(y);
                if r.is_nan() {
                    Err(Fault::Error("ValueError: complex result not supported by the mock interpreter".into()))
                } else if r.is_infinite() {
                    Err(Fault::Error("OverflowError: (34, 'Numerical result out of range')".into()))
                } else {
                    Ok(Float(r))
                }
            }
            _ => Err(bad(&a, &b)),
        }
    }
}

fn index(v: Value, idx: Value) -> EvalResult {
    let i = idx.as_int().ok_or_else(|| Fault::Error("TypeError: indices must be integers".into()))?;
    let pick = |len: usize| -> Result<usize, Fault> {
        let at = if i < 0 { len as i128 + i } else { i };
        usize::try_from(at)
            .ok()
            .filter(|&a| a < len)
            .ok_or_else(|| Fault::Error("IndexError: index out of range".into()))
    };
    match v {
        Value::List(items) => Ok(items[pick(items.len())?].clone()),
        Value::Str(s) => {
            let chars: Vec<char> = s.chars().collect();
            Ok(Value::Str(chars[pick(chars.len())?].to_string()))
        }
        other => Err(Fault::Error(format!("TypeError: '{}' object is not subscriptable", other.type_name()))),
    }
}

fn compare(op: &str, a: &Value, b: &Value) -> Result<bool, Fault> {
    use std::cmp::Ordering as O;
    let ord = match (a, b) {
        (Value::Str(x), Value::Str(y)) => Some(x.cmp(y)),
        (Value::DateTime(x), Value::DateTime(y)) | (Value::Delta(x), Value::Delta(y)) => Some(x.cmp(y)),
        _ => match (a.as_int(), b.as_int()) {
            (Some(x), Some(y)) => Some(x.cmp(&y)),
            _ => match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => x.partial_cmp(&y),
                _ => None,
            },
        },
    };
    match (op, ord) {
        ("==", o) => Ok(o == Some(O::Equal) || (o.is_none() && a == b)),
        ("!=", o) => Ok(!(o == Some(O::Equal) || (o.is_none() && a == b))),
        (_, None) if a.as_f64().is_some() && b.as_f64().is_some() => Ok(false),
        (_, None) => Err(Fault::Error(format!(
            "TypeError: '{op}' not supported between instances of '{}' and '{}'",
            a.type_name(),
            b.type_name()
        ))),
        ("<", Some(o)) => Ok(o == O::Less),
        (">", Some(o)) => Ok(o == O::Greater),
        ("<=", Some(o)) => Ok(o != O::Greater),
        (">=", Some(o)) => Ok(o != O::Less),
        _ => unreachable!("comparison operators are fixed"),
    }
}
