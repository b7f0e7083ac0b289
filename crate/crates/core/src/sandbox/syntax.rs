use super::value::Value;
use super::{Fault, FaultKind};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Dec(f64),
    Str(String),
    Ident(String),
    Kw(&'static str),
    Punct(&'static str),
    Newline,
    Eof,
}

const KEYWORDS: &[&str] = &[
    "if", "else", "for", "in", "while", "return", "and", "or", "not", "true", "false", "none",
];

const PUNCT: &[&str] = &[
    "==", "!=", "<=", ">=", "(", ")", "[", "]", "{", "}", ",", ".", "=", "<", ">", "+", "-", "*",
    "/", "%", ";",
];

fn parse_error(line: usize, message: impl Into<String>) -> Fault {
    Fault {
        kind: FaultKind::ParseError,
        message: message.into(),
        line: Some(line),
    }
}

fn lex(source: &str) -> Result<Vec<(Tok, usize)>, Fault> {
    let chars: Vec<char> = source.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let mut depth = 0usize;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            if depth == 0 {
                out.push((Tok::Newline, line));
            }
            line += 1;
            i += 1;
        } else if c.is_whitespace() {
            i += 1;
        } else if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let is_dec = i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit();
            if is_dec {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let v: f64 = text
                    .parse()
                    .map_err(|_| parse_error(line, format!("bad number {text}")))?;
                out.push((Tok::Dec(v), line));
            } else {
                let text: String = chars[start..i].iter().collect();
                let v: i64 = text
                    .parse()
                    .map_err(|_| parse_error(line, format!("integer literal {text} is too large")))?;
                out.push((Tok::Int(v), line));
            }
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            match KEYWORDS.iter().find(|k| **k == word) {
                Some(k) => out.push((Tok::Kw(k), line)),
                None => out.push((Tok::Ident(word), line)),
            }
        } else if c == '"' || c == '\'' {
            let quote = c;
            let start_line = line;
            i += 1;
            let mut s = String::new();
            loop {
                let Some(&ch) = chars.get(i) else {
                    return Err(parse_error(start_line, "unterminated string literal"));
                };
                i += 1;
                match ch {
                    '\\' => {
                        let esc = chars
                            .get(i)
                            .ok_or_else(|| parse_error(line, "unterminated string literal"))?;
                        i += 1;
                        s.push(match esc {
                            'n' => '\n',
                            't' => '\t',
                            other => *other,
                        });
                    }
                    '\n' => return Err(parse_error(start_line, "newline inside string literal")),
                    ch if ch == quote => break,
                    ch => s.push(ch),
                }
            }
            out.push((Tok::Str(s), line));
        } else {
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let Some(p) = PUNCT.iter().find(|p| rest.starts_with(**p)) else {
                return Err(parse_error(line, format!("unexpected character {c:?}")));
            };
            match *p {
                "(" | "[" => depth += 1,
                ")" | "]" => depth = depth.saturating_sub(1),
                _ => {}
            }
            out.push((Tok::Punct(p), line));
            i += p.len();
        }
    }
    out.push((Tok::Eof, line));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Value),
    Var(String),
    List(Vec<Expr>),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Field(Box<Expr>, String),
    Index(Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Assign(String, Expr),
    If(Expr, Vec<Stmt>, Vec<Stmt>),
    For(String, Expr, Vec<Stmt>),
    While(Expr, Vec<Stmt>),
    Return(Option<Expr>),
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub line: usize,
    pub kind: StmtKind,
}

pub type Program = Vec<Stmt>;

pub fn parse(source: &str) -> Result<Program, Fault> {
    let toks = lex(source)?;
    let mut p = Parser { toks, pos: 0 };
    let program = p.block_body(true)?;
    Ok(program)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn line(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Kw(q) if *q == k)
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), Fault> {
        if self.is_punct(p) {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&format!("expected '{p}'")))
        }
    }

    fn unexpected(&self, what: &str) -> Fault {
        let found = match self.peek() {
            Tok::Int(i) => i.to_string(),
            Tok::Dec(d) => d.to_string(),
            Tok::Str(s) => format!("{s:?}"),
            Tok::Ident(s) => s.clone(),
            Tok::Kw(k) => (*k).to_string(),
            Tok::Punct(p) => format!("'{p}'"),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of script".into(),
        };
        parse_error(self.line(), format!("{what}, found {found}"))
    }

    fn skip_separators(&mut self) {
        while matches!(self.peek(), Tok::Newline) || self.is_punct(";") {
            self.bump();
        }
    }

    fn block_body(&mut self, top: bool) -> Result<Vec<Stmt>, Fault> {
        let mut stmts = Vec::new();
        loop {
            self.skip_separators();
            match self.peek() {
                Tok::Eof if top => return Ok(stmts),
                Tok::Eof => return Err(self.unexpected("expected '}'")),
                Tok::Punct("}") if !top => return Ok(stmts),
                _ => {}
            }
            let stmt = self.statement()?;
            let ends_in_block = matches!(
                stmt.kind,
                StmtKind::If(..) | StmtKind::For(..) | StmtKind::While(..)
            );
            stmts.push(stmt);
            let at_end = matches!(self.peek(), Tok::Newline | Tok::Eof)
                || self.is_punct(";")
                || (!top && self.is_punct("}"));
            if !at_end && !ends_in_block {
                return Err(self.unexpected("expected end of statement"));
            }
        }
    }

    fn block(&mut self) -> Result<Vec<Stmt>, Fault> {
        self.expect_punct("{")?;
        let body = self.block_body(false)?;
        self.expect_punct("}")?;
        Ok(body)
    }

    fn statement(&mut self) -> Result<Stmt, Fault> {
        let line = self.line();
        let kind = if self.is_kw("if") {
            return self.if_statement();
        } else if self.is_kw("for") {
            self.bump();
            let var = match self.bump() {
                Tok::Ident(name) => name,
                _ => return Err(parse_error(line, "expected loop variable after 'for'")),
            };
            if !self.is_kw("in") {
                return Err(self.unexpected("expected 'in'"));
            }
            self.bump();
            let iter = self.expr()?;
            StmtKind::For(var, iter, self.block()?)
        } else if self.is_kw("while") {
            self.bump();
            let cond = self.expr()?;
            StmtKind::While(cond, self.block()?)
        } else if self.is_kw("return") {
            self.bump();
            if matches!(self.peek(), Tok::Newline | Tok::Eof) || self.is_punct(";") || self.is_punct("}") {
                StmtKind::Return(None)
            } else {
                StmtKind::Return(Some(self.expr()?))
            }
        } else if matches!(self.peek(), Tok::Ident(_))
            && matches!(self.toks.get(self.pos + 1), Some((Tok::Punct("="), _)))
        {
            let Tok::Ident(name) = self.bump() else { unreachable!() };
            self.bump();
            StmtKind::Assign(name, self.expr()?)
        } else {
            StmtKind::Expr(self.expr()?)
        };
        Ok(Stmt { line, kind })
    }

    fn if_statement(&mut self) -> Result<Stmt, Fault> {
        let line = self.line();
        self.bump();
        let cond = self.expr()?;
        let then = self.block()?;
        let save = self.pos;
        while matches!(self.peek(), Tok::Newline) {
            self.bump();
        }
        let otherwise = if self.is_kw("else") {
            self.bump();
            if self.is_kw("if") {
                vec![self.if_statement()?]
            } else {
                self.block()?
            }
        } else {
            self.pos = save;
            Vec::new()
        };
        Ok(Stmt {
            line,
            kind: StmtKind::If(cond, then, otherwise),
        })
    }

    fn expr(&mut self) -> Result<Expr, Fault> {
        let mut lhs = self.and_expr()?;
        while self.is_kw("or") {
            self.bump();
            lhs = Expr::Or(Box::new(lhs), Box::new(self.and_expr()?));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, Fault> {
        let mut lhs = self.not_expr()?;
        while self.is_kw("and") {
            self.bump();
            lhs = Expr::And(Box::new(lhs), Box::new(self.not_expr()?));
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, Fault> {
        if self.is_kw("not") {
            self.bump();
            return Ok(Expr::Not(Box::new(self.not_expr()?)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, Fault> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Tok::Punct("==") => BinOp::Eq,
            Tok::Punct("!=") => BinOp::Ne,
            Tok::Punct("<") => BinOp::Lt,
            Tok::Punct("<=") => BinOp::Le,
            Tok::Punct(">") => BinOp::Gt,
            Tok::Punct(">=") => BinOp::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.additive()?;
        Ok(Expr::Binary(op, Box::new(lhs), Box::new(rhs)))
    }

    fn additive(&mut self) -> Result<Expr, Fault> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Punct("+") => BinOp::Add,
                Tok::Punct("-") => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(self.multiplicative()?));
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, Fault> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Punct("*") => BinOp::Mul,
                Tok::Punct("/") => BinOp::Div,
                Tok::Punct("%") => BinOp::Rem,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr, Fault> {
        if self.is_punct("-") {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, Fault> {
        let mut e = self.primary()?;
        loop {
            if self.is_punct(".") {
                self.bump();
                match self.bump() {
                    Tok::Ident(name) => e = Expr::Field(Box::new(e), name),
                    _ => return Err(parse_error(self.line(), "expected field name after '.'")),
                }
            } else if self.is_punct("[") {
                self.bump();
                let idx = self.expr()?;
                self.expect_punct("]")?;
                e = Expr::Index(Box::new(e), Box::new(idx));
            } else if self.is_punct("(") {
                let Expr::Var(name) = e else {
                    return Err(parse_error(
                        self.line(),
                        "only built-ins and tools can be called",
                    ));
                };
                self.bump();
                let args = self.comma_list(")")?;
                e = Expr::Call(name, args);
            } else {
                return Ok(e);
            }
        }
    }

    fn comma_list(&mut self, close: &str) -> Result<Vec<Expr>, Fault> {
        let mut items = Vec::new();
        while !self.is_punct(close) {
            items.push(self.expr()?);
            if self.is_punct(",") {
                self.bump();
            } else if !self.is_punct(close) {
                return Err(self.unexpected(&format!("expected ',' or '{close}'")));
            }
        }
        self.bump();
        Ok(items)
    }

    fn primary(&mut self) -> Result<Expr, Fault> {
        let line = self.line();
        match self.bump() {
            Tok::Int(i) => Ok(Expr::Lit(Value::Int(i))),
            Tok::Dec(d) => Ok(Expr::Lit(Value::Dec(d))),
            Tok::Str(s) => Ok(Expr::Lit(Value::Str(s))),
            Tok::Kw("true") => Ok(Expr::Lit(Value::Bool(true))),
            Tok::Kw("false") => Ok(Expr::Lit(Value::Bool(false))),
            Tok::Kw("none") => Ok(Expr::Lit(Value::None)),
            Tok::Ident(name) => Ok(Expr::Var(name)),
            Tok::Punct("[") => Ok(Expr::List(self.comma_list("]")?)),
            Tok::Punct("(") => {
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            _ => {
                self.pos -= 1;
                let _ = line;
                Err(self.unexpected("expected an expression"))
            }
        }
    }
}
