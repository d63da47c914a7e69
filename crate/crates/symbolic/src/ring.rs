//! Coefficient ring: multivariate polynomials with exact rational
//! coefficients over a declared set of generators.
//!
//! A generator is one of
//!
//! * a coordinate: the value of a differentiation variable (`u`, `t_1`, ...),
//! * an exponential `exp(sum lambda_v x_v)` of the differentiation variables,
//!   which is how `e^{-t_l}` is carried on the Dyson side (`c_i` monomials),
//! * a constant symbol such as `eps = 1/n`, optionally truncated at a fixed
//!   degree so that products live in `Q[...][eps]/(eps^{K+1})`.
//!
//! Polynomials are stored in canonical form: a sorted map from exponent
//! vectors to non-zero rationals.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use smallvec::SmallVec;

use crate::SymbolicError;

/// Exact rational scalar.
pub type Q = Ratio<i128>;

pub fn q(n: i128) -> Q {
    Q::from_integer(n)
}

pub fn qf(n: i128, d: i128) -> Q {
    Q::new(n, d)
}

/// Exponent vector over the generators of a [`Context`].
pub type Mono = SmallVec<[u8; 12]>;

#[derive(Clone, Debug, PartialEq)]
pub enum GenKind {
    /// The coordinate function of differentiation variable `var`.
    Coord(usize),
    /// `exp(sum_v lambda_v x_v)`; its derivative in `x_v` is `lambda_v` times itself.
    Exp(Vec<(usize, Q)>),
    /// Independent of every differentiation variable.
    Const,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub name: String,
    pub kind: GenKind,
}

/// Variable and generator declarations shared by every polynomial, jet
/// expression and operator built on top of it.
#[derive(Clone, Debug, PartialEq)]
pub struct Context {
    vars: Vec<String>,
    gens: Vec<Generator>,
    truncation: Option<(usize, u8)>,
}

impl Context {
    pub fn new(vars: Vec<String>) -> Self {
        Context {
            vars,
            gens: Vec::new(),
            truncation: None,
        }
    }

    /// Declares one coordinate generator per differentiation variable, in
    /// variable order.
    pub fn with_coordinates(vars: Vec<String>) -> Self {
        let mut ctx = Context::new(vars);
        for v in 0..ctx.vars.len() {
            let name = ctx.vars[v].clone();
            ctx.push_gen(name, GenKind::Coord(v));
        }
        ctx
    }

    pub fn push_gen(&mut self, name: impl Into<String>, kind: GenKind) -> usize {
        self.gens.push(Generator {
            name: name.into(),
            kind,
        });
        self.gens.len() - 1
    }

    /// Work modulo `gen^{max_degree + 1}`. Only constant generators may be
    /// truncated, so the truncation ideal is closed under differentiation.
    pub fn truncate(&mut self, gen: usize, max_degree: u8) -> Result<(), SymbolicError> {
        if self.gens[gen].kind != GenKind::Const {
            return Err(SymbolicError::Context(format!(
                "only constant generators can be truncated, `{}` is not",
                self.gens[gen].name
            )));
        }
        self.truncation = Some((gen, max_degree));
        Ok(())
    }

    pub fn truncation(&self) -> Option<(usize, u8)> {
        self.truncation
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn gens(&self) -> &[Generator] {
        &self.gens
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn n_gens(&self) -> usize {
        self.gens.len()
    }

    pub fn var(&self, name: &str) -> Result<usize, SymbolicError> {
        self.vars
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| SymbolicError::UnknownSymbol(name.to_string()))
    }

    pub fn gen(&self, name: &str) -> Result<usize, SymbolicError> {
        self.gens
            .iter()
            .position(|g| g.name == name)
            .ok_or_else(|| SymbolicError::UnknownSymbol(name.to_string()))
    }

    /// Coordinate generator attached to a variable, if one was declared.
    pub fn coord_gen(&self, var: usize) -> Option<usize> {
        self.gens.iter().position(|g| g.kind == GenKind::Coord(var))
    }

    pub fn unit_mono(&self) -> Mono {
        SmallVec::from_elem(0, self.gens.len())
    }

    pub fn zero(&self) -> Poly {
        Poly::default()
    }

    pub fn one(&self) -> Poly {
        self.constant(Q::one())
    }

    pub fn constant(&self, c: Q) -> Poly {
        let mut p = Poly::default();
        if !c.is_zero() {
            p.terms.insert(self.unit_mono(), c);
        }
        p
    }

    pub fn gen_poly(&self, gen: usize) -> Poly {
        self.gen_pow(gen, 1)
    }

    pub fn gen_pow(&self, gen: usize, e: u8) -> Poly {
        let mut m = self.unit_mono();
        m[gen] = e;
        let mut p = Poly::default();
        if !self.exceeds(&m) {
            p.terms.insert(m, Q::one());
        }
        p
    }

    /// Polynomial for a named generator.
    pub fn sym(&self, name: &str) -> Result<Poly, SymbolicError> {
        Ok(self.gen_poly(self.gen(name)?))
    }

    fn exceeds(&self, m: &Mono) -> bool {
        matches!(self.truncation, Some((g, k)) if m[g] > k)
    }

    pub fn mul(&self, a: &Poly, b: &Poly) -> Poly {
        let mut out: BTreeMap<Mono, Q> = BTreeMap::new();
        for (ma, ca) in &a.terms {
            for (mb, cb) in &b.terms {
                let mut m = ma.clone();
                for (x, y) in m.iter_mut().zip(mb.iter()) {
                    *x = x.checked_add(*y).expect("exponent overflow");
                }
                if self.exceeds(&m) {
                    continue;
                }
                let c = *ca * *cb;
                match out.entry(m) {
                    std::collections::btree_map::Entry::Vacant(e) => {
                        e.insert(c);
                    }
                    std::collections::btree_map::Entry::Occupied(mut e) => {
                        *e.get_mut() += c;
                        if e.get().is_zero() {
                            e.remove();
                        }
                    }
                }
            }
        }
        Poly { terms: out }
    }

    pub fn pow(&self, a: &Poly, e: u32) -> Poly {
        let mut acc = self.one();
        for _ in 0..e {
            acc = self.mul(&acc, a);
        }
        acc
    }

    /// Truncated exponential `sum_{k<=order} a^k / k!`.
    pub fn exp_series(&self, a: &Poly, order: u32) -> Poly {
        let mut acc = self.one();
        let mut term = self.one();
        for k in 1..=order {
            term = self.mul(&term, a).scale(qf(1, k as i128));
            acc += &term;
        }
        acc
    }

    /// Partial derivative with respect to differentiation variable `var`.
    pub fn derive(&self, p: &Poly, var: usize) -> Poly {
        let mut out = Poly::default();
        for (m, c) in &p.terms {
            for (g, gen) in self.gens.iter().enumerate() {
                let e = m[g];
                if e == 0 {
                    continue;
                }
                match &gen.kind {
                    GenKind::Coord(v) if *v == var => {
                        let mut m2 = m.clone();
                        m2[g] -= 1;
                        out.add_term(m2, *c * q(e as i128));
                    }
                    GenKind::Exp(lin) => {
                        if let Some((_, lam)) = lin.iter().find(|(v, _)| *v == var) {
                            out.add_term(m.clone(), *c * *lam * q(e as i128));
                        }
                    }
                    _ => {}
                }
            }
        }
        out
    }

    /// Replaces every generator by a polynomial image (a ring homomorphism).
    pub fn substitute(&self, p: &Poly, images: &[Poly]) -> Poly {
        assert_eq!(images.len(), self.gens.len());
        let mut out = Poly::default();
        for (m, c) in &p.terms {
            let mut term = self.constant(*c);
            for (g, &e) in m.iter().enumerate() {
                if e > 0 {
                    term = self.mul(&term, &self.pow(&images[g], e as u32));
                }
            }
            out += &term;
        }
        out
    }

    /// Numeric value with generator values supplied in generator order.
    pub fn eval(&self, p: &Poly, values: &[f64]) -> f64 {
        p.terms
            .iter()
            .map(|(m, c)| {
                let mut x = c.to_f64().unwrap_or(f64::NAN);
                for (g, &e) in m.iter().enumerate() {
                    if e > 0 {
                        x *= values[g].powi(e as i32);
                    }
                }
                x
            })
            .sum()
    }

    /// Coefficient of `gen^degree`, as a polynomial in the remaining generators.
    pub fn coefficient_of(&self, p: &Poly, gen: usize, degree: u8) -> Poly {
        let mut out = Poly::default();
        for (m, c) in &p.terms {
            if m[gen] == degree {
                let mut m2 = m.clone();
                m2[gen] = 0;
                out.add_term(m2, *c);
            }
        }
        out
    }

    pub fn fmt_mono(&self, m: &Mono) -> String {
        let mut s = String::new();
        for (g, &e) in m.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !s.is_empty() {
                s.push('*');
            }
            s.push_str(&self.gens[g].name);
            if e > 1 {
                let _ = write!(s, "^{e}");
            }
        }
        s
    }

    pub fn fmt_poly(&self, p: &Poly) -> String {
        if p.is_zero() {
            return "0".into();
        }
        let mut s = String::new();
        for (i, (m, c)) in p.terms.iter().rev().enumerate() {
            let neg = c.is_negative();
            let a = c.abs();
            if i == 0 {
                if neg {
                    s.push('-');
                }
            } else {
                s.push_str(if neg { " - " } else { " + " });
            }
            let ms = self.fmt_mono(m);
            if ms.is_empty() {
                let _ = write!(s, "{a}");
            } else if a.is_one() {
                s.push_str(&ms);
            } else {
                let _ = write!(s, "{a}*{ms}");
            }
        }
        s
    }
}

/// Element of the coefficient ring. Arithmetic that cannot raise degrees
/// (addition, scaling) lives here; products go through [`Context::mul`] so
/// the truncation ideal is honoured.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Poly {
    terms: BTreeMap<Mono, Q>,
}

impl Poly {
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Mono, &Q)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add_term(&mut self, m: Mono, c: Q) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(m);
        match entry {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn scale(&self, c: Q) -> Poly {
        if c.is_zero() {
            return Poly::default();
        }
        Poly {
            terms: self
                .terms
                .iter()
                .map(|(m, x)| (m.clone(), *x * c))
                .collect(),
        }
    }

    /// The constant term, if the polynomial is a constant.
    pub fn as_constant(&self) -> Option<Q> {
        match self.terms.len() {
            0 => Some(Q::zero()),
            1 => {
                let (m, c) = self.terms.iter().next().unwrap();
                m.iter().all(|&e| e == 0).then_some(*c)
            }
            _ => None,
        }
    }

    /// Single-term polynomial `c * x^m`, if it is one.
    pub fn as_monomial(&self) -> Option<(&Mono, &Q)> {
        if self.terms.len() == 1 {
            self.terms.iter().next()
        } else {
            None
        }
    }

    /// Exact division by a single term; `None` if some term is not divisible.
    pub fn div_monomial(&self, m: &Mono, c: &Q) -> Option<Poly> {
        let mut out = Poly::default();
        for (mm, cc) in &self.terms {
            let mut r = mm.clone();
            for (x, y) in r.iter_mut().zip(m.iter()) {
                *x = x.checked_sub(*y)?;
            }
            out.add_term(r, *cc / *c);
        }
        Some(out)
    }
}

impl AddAssign<&Poly> for Poly {
    fn add_assign(&mut self, rhs: &Poly) {
        for (m, c) in &rhs.terms {
            self.add_term(m.clone(), *c);
        }
    }
}

impl SubAssign<&Poly> for Poly {
    fn sub_assign(&mut self, rhs: &Poly) {
        for (m, c) in &rhs.terms {
            self.add_term(m.clone(), -*c);
        }
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-Q::one())
    }
}

impl Mul<Q> for &Poly {
    type Output = Poly;
    fn mul(self, rhs: Q) -> Poly {
        self.scale(rhs)
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Without a context the generators are shown positionally.
        if self.is_zero() {
            return write!(f, "0");
        }
        for (i, (m, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}")?;
            for (g, &e) in m.iter().enumerate() {
                if e > 0 {
                    write!(f, "*g{g}^{e}")?;
                }
            }
        }
        Ok(())
    }
}
