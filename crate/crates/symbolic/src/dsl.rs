//! A small operator language for writing equations the way they are typeset.
//!
//! ```text
//! # comment
//! vars u v t;
//! let D = d_u + d_v;
//! [ (v - u) D d_u d_v + t [d_u^2 - d_v^2] d_t ] logP
//!     = 1/2 { [d_u^2 - d_v^2] logP, D^2 logP }_D;
//! ```
//!
//! * `d_x` is the partial derivative in declared variable `x`; a bare
//!   variable is the multiplication operator by that coordinate; `logP` is
//!   the jet symbol.
//! * Juxtaposition is evaluated right to left: an operator followed by an
//!   operator composes, an operator followed by a jet expression applies,
//!   two jet expressions multiply. `*` is the same product but binds looser,
//!   so `A logP * B logP` multiplies two applied factors.
//! * `[...]` and `(...)` group, `^k` is a power, `a/b` is a rational literal.
//! * `{f, g}_X` is the Wronskian `g X f - f X g`.
//! * `@typo[printed | candidate]` keeps the printed text while recording a
//!   suspected misprint; each site can be evaluated either way.

use std::collections::HashMap;

use crate::diffop::{wronskian, DiffOp};
use crate::jet::JetExpr;
use crate::ring::{q, Context, Q};
use crate::SymbolicError;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(i128),
    Ident(String),
    Sym(char),
    Typo,
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
    offset: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, SymbolicError> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let (mut line, mut col) = (1usize, 1usize);
    let mut i = 0;
    while i < chars.len() {
        let (off, c) = chars[i];
        let start = (line, col, off);
        let push = |out: &mut Vec<Token>, tok: Tok| {
            out.push(Token {
                tok,
                line: start.0,
                col: start.1,
                offset: start.2,
            })
        };
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            col += 1;
            i += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i].1 != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_digit() {
            let mut v: i128 = 0;
            while i < chars.len() && chars[i].1.is_ascii_digit() {
                v = v * 10 + chars[i].1.to_digit(10).unwrap() as i128;
                i += 1;
                col += 1;
            }
            push(&mut out, Tok::Num(v));
            continue;
        }
        if c.is_alphabetic() || (c == '@') {
            let mut s = String::new();
            s.push(c);
            i += 1;
            col += 1;
            while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_') {
                s.push(chars[i].1);
                i += 1;
                col += 1;
            }
            if s == "@typo" {
                push(&mut out, Tok::Typo);
            } else if s.starts_with('@') {
                return Err(SymbolicError::Parse {
                    line: start.0,
                    col: start.1,
                    msg: format!("unknown annotation `{s}`"),
                });
            } else {
                push(&mut out, Tok::Ident(s));
            }
            continue;
        }
        if "+-*/^()[]{},_=;|".contains(c) {
            push(&mut out, Tok::Sym(c));
            i += 1;
            col += 1;
            continue;
        }
        return Err(SymbolicError::Parse {
            line,
            col,
            msg: format!("unexpected character `{c}`"),
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
        offset: src.len(),
    });
    Ok(out)
}

#[derive(Clone, Debug)]
enum Expr {
    Num(Q),
    Name(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    /// Right-to-left product of juxtaposed or starred factors.
    Chain(Vec<Expr>),
    Pow(Box<Expr>, u32),
    Wronskian(Box<Expr>, Box<Expr>, Box<Expr>),
    Typo(usize, Box<Expr>, Box<Expr>),
}

/// One `@typo[printed | candidate]` site.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct TypoSite {
    pub index: usize,
    pub line: usize,
    pub printed: String,
    pub candidate: String,
}

/// A parsed fixture: declared variables, definitions and one equation.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub vars: Vec<String>,
    lets: Vec<(String, Expr)>,
    lhs: Expr,
    rhs: Expr,
    pub typos: Vec<TypoSite>,
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Token>,
    pos: usize,
    typos: Vec<TypoSite>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, SymbolicError> {
        let t = &self.toks[self.pos];
        Err(SymbolicError::Parse {
            line: t.line,
            col: t.col,
            msg: msg.into(),
        })
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if t != Tok::Eof {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, c: char) -> Result<(), SymbolicError> {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{c}`, found {:?}", self.peek()))
        }
    }

    fn is_sym(&self, c: char) -> bool {
        *self.peek() == Tok::Sym(c)
    }

    fn expr(&mut self) -> Result<Expr, SymbolicError> {
        let mut acc = if self.is_sym('-') {
            self.bump();
            Expr::Neg(Box::new(self.term()?))
        } else {
            self.term()?
        };
        loop {
            if self.is_sym('+') {
                self.bump();
                acc = Expr::Add(Box::new(acc), Box::new(self.term()?));
            } else if self.is_sym('-') {
                self.bump();
                acc = Expr::Sub(Box::new(acc), Box::new(self.term()?));
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, SymbolicError> {
        let mut parts = vec![self.chain()?];
        while self.is_sym('*') {
            self.bump();
            parts.push(self.chain()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Expr::Chain(parts)
        })
    }

    fn starts_atom(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Num(_) | Tok::Ident(_) | Tok::Typo | Tok::Sym('(') | Tok::Sym('[') | Tok::Sym('{')
        )
    }

    fn chain(&mut self) -> Result<Expr, SymbolicError> {
        let mut parts = vec![self.postfix()?];
        while self.starts_atom() {
            parts.push(self.postfix()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Expr::Chain(parts)
        })
    }

    fn postfix(&mut self) -> Result<Expr, SymbolicError> {
        let a = self.atom()?;
        if self.is_sym('^') {
            self.bump();
            match self.bump() {
                Tok::Num(k) => Ok(Expr::Pow(Box::new(a), k as u32)),
                _ => self.err("expected integer exponent"),
            }
        } else {
            Ok(a)
        }
    }

    fn atom(&mut self) -> Result<Expr, SymbolicError> {
        let line = self.toks[self.pos].line;
        match self.bump() {
            Tok::Num(n) => {
                if self.is_sym('/') {
                    self.bump();
                    match self.bump() {
                        Tok::Num(d) if d != 0 => Ok(Expr::Num(Q::new(n, d))),
                        _ => self.err("expected non-zero denominator"),
                    }
                } else {
                    Ok(Expr::Num(q(n)))
                }
            }
            Tok::Ident(s) => Ok(Expr::Name(s)),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Sym('[') => {
                let e = self.expr()?;
                self.expect(']')?;
                Ok(e)
            }
            Tok::Sym('{') => {
                let f = self.expr()?;
                self.expect(',')?;
                let g = self.expr()?;
                self.expect('}')?;
                self.expect('_')?;
                let d = if self.is_sym('{') {
                    self.bump();
                    let d = self.expr()?;
                    self.expect('}')?;
                    d
                } else {
                    self.atom()?
                };
                Ok(Expr::Wronskian(Box::new(f), Box::new(g), Box::new(d)))
            }
            Tok::Typo => {
                self.expect('[')?;
                let p0 = self.toks[self.pos].offset;
                let printed = self.expr()?;
                let p1 = self.toks[self.pos].offset;
                self.expect('|')?;
                let c0 = self.toks[self.pos].offset;
                let candidate = self.expr()?;
                let c1 = self.toks[self.pos].offset;
                self.expect(']')?;
                let index = self.typos.len();
                self.typos.push(TypoSite {
                    index,
                    line,
                    printed: self.src[p0..p1].trim().to_string(),
                    candidate: self.src[c0..c1].trim().to_string(),
                });
                Ok(Expr::Typo(index, Box::new(printed), Box::new(candidate)))
            }
            t => self.err(format!("unexpected token {t:?}")),
        }
    }
}

pub fn parse(src: &str) -> Result<Fixture, SymbolicError> {
    let mut p = Parser {
        src,
        toks: lex(src)?,
        pos: 0,
        typos: Vec::new(),
    };
    let mut vars = Vec::new();
    let mut lets = Vec::new();
    let mut equation = None;
    while *p.peek() != Tok::Eof {
        match p.peek().clone() {
            Tok::Ident(k) if k == "vars" => {
                p.bump();
                while let Tok::Ident(v) = p.peek().clone() {
                    p.bump();
                    vars.push(v);
                }
                p.expect(';')?;
            }
            Tok::Ident(k) if k == "let" => {
                p.bump();
                let Tok::Ident(name) = p.bump() else {
                    return p.err("expected a name after `let`");
                };
                p.expect('=')?;
                let e = p.expr()?;
                p.expect(';')?;
                lets.push((name, e));
            }
            _ => {
                if equation.is_some() {
                    return p.err("only one equation per fixture");
                }
                let lhs = p.expr()?;
                p.expect('=')?;
                let rhs = p.expr()?;
                p.expect(';')?;
                equation = Some((lhs, rhs));
            }
        }
    }
    let Some((lhs, rhs)) = equation else {
        return p.err("fixture has no equation");
    };
    Ok(Fixture {
        vars,
        lets,
        lhs,
        rhs,
        typos: p.typos,
    })
}

#[derive(Clone, Debug)]
pub enum Value {
    Op(DiffOp),
    Jet(JetExpr),
}

struct Eval<'a> {
    ctx: &'a Context,
    env: HashMap<String, Value>,
    take_candidate: &'a [bool],
}

impl Eval<'_> {
    fn name(&self, s: &str) -> Result<Value, SymbolicError> {
        if let Some(v) = self.env.get(s) {
            return Ok(v.clone());
        }
        if s == "logP" {
            return Ok(Value::Jet(JetExpr::log_p(self.ctx)));
        }
        if let Some(x) = s.strip_prefix("d_") {
            let v = self.ctx.var(x)?;
            return Ok(Value::Op(DiffOp::partial(self.ctx, v)));
        }
        let v = self.ctx.var(s)?;
        let g = self
            .ctx
            .coord_gen(v)
            .ok_or_else(|| SymbolicError::UnknownSymbol(s.to_string()))?;
        Ok(Value::Op(DiffOp::scalar(self.ctx, self.ctx.gen_poly(g))))
    }

    fn mul(&self, a: Value, b: Value) -> Result<Value, SymbolicError> {
        let ctx = self.ctx;
        Ok(match (a, b) {
            (Value::Op(x), Value::Op(y)) => Value::Op(x.compose(ctx, &y)),
            (Value::Op(x), Value::Jet(j)) => Value::Jet(x.apply(ctx, &j)),
            (Value::Jet(i), Value::Jet(j)) => Value::Jet(i.mul(ctx, &j)),
            (Value::Jet(j), Value::Op(x)) => {
                if x.order() == 0 {
                    Value::Jet(x.apply(ctx, &j))
                } else {
                    return Err(SymbolicError::Type(
                        "a jet expression cannot be followed by a differential operator".into(),
                    ));
                }
            }
        })
    }

    fn add(&self, a: Value, b: Value, sign: i128) -> Result<Value, SymbolicError> {
        let ctx = self.ctx;
        let as_jet = |v: Value| -> Result<JetExpr, SymbolicError> {
            match v {
                Value::Jet(j) => Ok(j),
                Value::Op(x) if x.order() == 0 => Ok(x.apply(ctx, &JetExpr::scalar(ctx.one()))),
                Value::Op(_) => Err(SymbolicError::Type(
                    "cannot add a differential operator to a jet expression".into(),
                )),
            }
        };
        Ok(match (a, b) {
            (Value::Op(x), Value::Op(y)) => Value::Op(x.add(&y.scale(q(sign)))),
            (a, b) => Value::Jet(as_jet(a)?.add(&as_jet(b)?.scale(q(sign)))),
        })
    }

    fn eval(&self, e: &Expr) -> Result<Value, SymbolicError> {
        let ctx = self.ctx;
        match e {
            Expr::Num(c) => Ok(Value::Op(DiffOp::scalar(ctx, ctx.constant(*c)))),
            Expr::Name(s) => self.name(s),
            Expr::Neg(x) => Ok(match self.eval(x)? {
                Value::Op(o) => Value::Op(o.scale(q(-1))),
                Value::Jet(j) => Value::Jet(j.scale(q(-1))),
            }),
            Expr::Add(a, b) => self.add(self.eval(a)?, self.eval(b)?, 1),
            Expr::Sub(a, b) => self.add(self.eval(a)?, self.eval(b)?, -1),
            Expr::Chain(parts) => {
                let mut acc = self.eval(parts.last().unwrap())?;
                for p in parts.iter().rev().skip(1) {
                    acc = self.mul(self.eval(p)?, acc)?;
                }
                Ok(acc)
            }
            Expr::Pow(x, k) => Ok(match self.eval(x)? {
                Value::Op(o) => Value::Op(o.pow(ctx, *k)),
                Value::Jet(j) => Value::Jet(j.pow(ctx, *k)),
            }),
            Expr::Wronskian(f, g, d) => {
                let (Value::Jet(f), Value::Jet(g), Value::Op(d)) =
                    (self.eval(f)?, self.eval(g)?, self.eval(d)?)
                else {
                    return Err(SymbolicError::Type(
                        "Wronskian needs two jet expressions and an operator".into(),
                    ));
                };
                Ok(Value::Jet(wronskian(ctx, &f, &g, &d)))
            }
            Expr::Typo(i, printed, candidate) => {
                if self.take_candidate.get(*i).copied().unwrap_or(false) {
                    self.eval(candidate)
                } else {
                    self.eval(printed)
                }
            }
        }
    }
}

impl Fixture {
    /// Evaluates `lhs - rhs` in `ctx`. `take_candidate[i]` selects the
    /// candidate reading of typo site `i`; missing entries read as printed.
    pub fn evaluate(
        &self,
        ctx: &Context,
        take_candidate: &[bool],
    ) -> Result<JetExpr, SymbolicError> {
        for v in &self.vars {
            ctx.var(v)?;
        }
        let mut ev = Eval {
            ctx,
            env: HashMap::new(),
            take_candidate,
        };
        for (name, e) in &self.lets {
            let v = ev.eval(e)?;
            ev.env.insert(name.clone(), v);
        }
        let as_jet = |v: Value| match v {
            Value::Jet(j) => Ok(j),
            Value::Op(x) if x.order() == 0 => Ok(x.apply(ctx, &JetExpr::scalar(ctx.one()))),
            Value::Op(_) => Err(SymbolicError::Type(
                "each side of the equation must be a jet expression".into(),
            )),
        };
        let lhs = as_jet(ev.eval(&self.lhs)?)?;
        let rhs = as_jet(ev.eval(&self.rhs)?)?;
        Ok(lhs.sub(&rhs))
    }

    pub fn verbatim(&self, ctx: &Context) -> Result<JetExpr, SymbolicError> {
        self.evaluate(ctx, &[])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::zero_jet;

    fn ctx() -> Context {
        Context::with_coordinates(vec!["u".into(), "v".into()])
    }

    #[test]
    fn juxtaposition_applies_right_to_left() {
        let c = ctx();
        let f = parse("vars u v; d_u u logP = 0;").unwrap();
        // d_u (u L) = L + u L_u
        let got = f.verbatim(&c).unwrap();
        let l = JetExpr::log_p(&c);
        let mut j = zero_jet(&c);
        j[0] = 1;
        let want = l.add(&JetExpr::symbol(&c, j).scale_poly(&c, &c.sym("u").unwrap()));
        assert_eq!(got, want);
    }

    #[test]
    fn star_separates_factors() {
        let c = ctx();
        let a = parse("vars u v; d_u logP * d_v logP = 0;")
            .unwrap()
            .verbatim(&c)
            .unwrap();
        let b = parse("vars u v; d_u [logP d_v logP] = 0;")
            .unwrap()
            .verbatim(&c)
            .unwrap();
        assert_ne!(a, b);
        assert_eq!(a.degree(), 2);
    }

    #[test]
    fn typo_sites_switch() {
        let c = ctx();
        let f = parse("vars u v; let D = @typo[d_u + d_u | d_u + d_v]; D logP = 0;").unwrap();
        assert_eq!(f.typos.len(), 1);
        assert_eq!(f.typos[0].printed, "d_u + d_u");
        assert_eq!(f.typos[0].candidate, "d_u + d_v");
        let printed = f.evaluate(&c, &[false]).unwrap();
        let cand = f.evaluate(&c, &[true]).unwrap();
        assert_ne!(printed, cand);
    }

    #[test]
    fn wronskian_and_rationals() {
        let c = ctx();
        let f = parse("vars u v; 0 = 1/2 { d_u logP, logP }_{d_u};").unwrap();
        let e = f.verbatim(&c).unwrap();
        assert_eq!(e.degree(), 2);
    }

    #[test]
    fn reports_position_of_errors() {
        match parse("vars u;\n d_u logP = ;") {
            Err(SymbolicError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
