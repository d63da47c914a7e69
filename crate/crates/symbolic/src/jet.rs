//! Jet algebra: polynomials in the formal symbols `d^alpha logP`.
//!
//! A [`Jet`] is a derivative multi-index over the variables of a
//! [`Context`]; the zero multi-index stands for `logP` itself. Jet symbols
//! commute with each other and with ring coefficients, so a [`JetExpr`] is a
//! map from jet monomials to coefficient polynomials.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use smallvec::SmallVec;

use crate::ring::{q, Context, Poly, Q};

/// Derivative multi-index: `alpha[v]` is the order in variable `v`.
pub type Jet = SmallVec<[u8; 8]>;

/// Sorted list of `(jet, exponent)` pairs with positive exponents.
pub type JetMono = SmallVec<[(Jet, u8); 4]>;

pub fn zero_jet(ctx: &Context) -> Jet {
    SmallVec::from_elem(0, ctx.n_vars())
}

pub fn jet_order(j: &Jet) -> u32 {
    j.iter().map(|&e| e as u32).sum()
}

/// Product of two jet monomials.
pub fn mono_mul(a: &JetMono, b: &JetMono) -> JetMono {
    let mut out: JetMono = SmallVec::new();
    let (mut i, mut k) = (0, 0);
    while i < a.len() && k < b.len() {
        match a[i].0.cmp(&b[k].0) {
            std::cmp::Ordering::Less => {
                out.push(a[i].clone());
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[k].clone());
                k += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push((a[i].0.clone(), a[i].1 + b[k].1));
                i += 1;
                k += 1;
            }
        }
    }
    out.extend(a[i..].iter().cloned());
    out.extend(b[k..].iter().cloned());
    out
}

/// Polynomial in jet symbols with coefficients in the ring.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct JetExpr {
    terms: BTreeMap<JetMono, Poly>,
}

impl JetExpr {
    pub fn zero() -> Self {
        JetExpr::default()
    }

    /// The bare symbol `logP`.
    pub fn log_p(ctx: &Context) -> Self {
        Self::symbol(ctx, zero_jet(ctx))
    }

    pub fn symbol(ctx: &Context, jet: Jet) -> Self {
        let mut out = JetExpr::zero();
        let mut m: JetMono = SmallVec::new();
        m.push((jet, 1));
        out.terms.insert(m, ctx.one());
        out
    }

    /// A ring element viewed as a jet expression of degree zero.
    pub fn scalar(p: Poly) -> Self {
        let mut out = JetExpr::zero();
        if !p.is_zero() {
            out.terms.insert(SmallVec::new(), p);
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&JetMono, &Poly)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, m: &JetMono) -> Option<&Poly> {
        self.terms.get(m)
    }

    pub fn add_term(&mut self, m: JetMono, c: &Poly) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c.clone());
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &JetExpr) -> JetExpr {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c);
        }
        out
    }

    pub fn sub(&self, other: &JetExpr) -> JetExpr {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), &-c);
        }
        out
    }

    pub fn scale(&self, c: Q) -> JetExpr {
        JetExpr {
            terms: self
                .terms
                .iter()
                .map(|(m, p)| (m.clone(), p.scale(c)))
                .filter(|(_, p)| !p.is_zero())
                .collect(),
        }
    }

    pub fn scale_poly(&self, ctx: &Context, p: &Poly) -> JetExpr {
        let mut out = JetExpr::zero();
        for (m, c) in &self.terms {
            out.add_term(m.clone(), &ctx.mul(c, p));
        }
        out
    }

    pub fn mul(&self, ctx: &Context, other: &JetExpr) -> JetExpr {
        let mut out = JetExpr::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let c = ctx.mul(ca, cb);
                if !c.is_zero() {
                    out.add_term(mono_mul(ma, mb), &c);
                }
            }
        }
        out
    }

    pub fn pow(&self, ctx: &Context, e: u32) -> JetExpr {
        let mut acc = JetExpr::scalar(ctx.one());
        for _ in 0..e {
            acc = acc.mul(ctx, self);
        }
        acc
    }

    /// Total derivative in variable `var`: coefficients are differentiated
    /// as functions and each jet symbol gains one order in `var`.
    pub fn derive(&self, ctx: &Context, var: usize) -> JetExpr {
        let mut out = JetExpr::zero();
        for (m, c) in &self.terms {
            let dc = ctx.derive(c, var);
            if !dc.is_zero() {
                out.add_term(m.clone(), &dc);
            }
            for (idx, (jet, e)) in m.iter().enumerate() {
                let mut rest: JetMono = m.clone();
                if *e == 1 {
                    rest.remove(idx);
                } else {
                    rest[idx].1 -= 1;
                }
                let mut raised = jet.clone();
                raised[var] += 1;
                let mut single: JetMono = SmallVec::new();
                single.push((raised, 1));
                out.add_term(mono_mul(&rest, &single), &c.scale(q(*e as i128)));
            }
        }
        out
    }

    /// Highest derivative order of any single jet symbol.
    pub fn max_jet_order(&self) -> u32 {
        self.terms
            .keys()
            .flat_map(|m| m.iter().map(|(j, _)| jet_order(j)))
            .max()
            .unwrap_or(0)
    }

    /// Largest number of jet factors (with multiplicity) in a monomial.
    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|m| m.iter().map(|(_, e)| *e as u32).sum())
            .max()
            .unwrap_or(0)
    }

    /// Applies `f` to every coefficient, dropping zeros.
    pub fn map_coeffs(&self, mut f: impl FnMut(&Poly) -> Poly) -> JetExpr {
        let mut out = JetExpr::zero();
        for (m, c) in &self.terms {
            out.add_term(m.clone(), &f(c));
        }
        out
    }

    /// Replaces each jet symbol by an expression (used for changes of
    /// variables where `d^alpha logP` is re-expressed in new derivatives).
    pub fn substitute_jets(
        &self,
        ctx: &Context,
        mut image: impl FnMut(&Jet) -> JetExpr,
    ) -> JetExpr {
        let mut cache: BTreeMap<Jet, JetExpr> = BTreeMap::new();
        let mut out = JetExpr::zero();
        for (m, c) in &self.terms {
            let mut term = JetExpr::scalar(c.clone());
            for (jet, e) in m {
                let img = cache
                    .entry(jet.clone())
                    .or_insert_with(|| image(jet))
                    .clone();
                term = term.mul(ctx, &img.pow(ctx, *e as u32));
            }
            out = out.add(&term);
        }
        out
    }

    /// Evaluates numerically given generator values and a jet valuation.
    pub fn eval(&self, ctx: &Context, gens: &[f64], jet_value: impl Fn(&Jet) -> f64) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| {
                let mut x = ctx.eval(c, gens);
                for (jet, e) in m {
                    x *= jet_value(jet).powi(*e as i32);
                }
                x
            })
            .sum()
    }

    /// If `self = kappa * other` for a single-term ring element `kappa`
    /// (possibly a rational number), returns it. Tries both directions so
    /// that the returned flag says which side carries the factor.
    pub fn monomial_ratio(&self, ctx: &Context, other: &JetExpr) -> Option<Ratio> {
        if self.terms.len() != other.terms.len() {
            return None;
        }
        // Any shared term with a single-monomial coefficient on one side
        // proposes a candidate; the first candidate that verifies wins.
        let mut tried: Vec<(Poly, bool)> = Vec::new();
        for (m, self_c) in &self.terms {
            let other_c = other.terms.get(m)?;
            for (num, den, flip) in [(self_c, other_c, false), (other_c, self_c, true)] {
                let Some((dm, dc)) = den.as_monomial() else {
                    continue;
                };
                let Some(kappa) = num.div_monomial(dm, dc) else {
                    continue;
                };
                if kappa.as_monomial().is_none()
                    || tried.iter().any(|(k, f)| *k == kappa && *f == flip)
                {
                    continue;
                }
                let (a, b) = if flip { (other, self) } else { (self, other) };
                if a.sub(&b.scale_poly(ctx, &kappa)).is_zero() {
                    return Some(Ratio {
                        factor: kappa,
                        on_left: flip,
                    });
                }
                tried.push((kappa, flip));
            }
        }
        None
    }

    pub fn display(&self, ctx: &Context) -> String {
        if self.is_zero() {
            return "0".into();
        }
        let mut s = String::new();
        for (i, (m, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                s.push_str(" + ");
            }
            let _ = write!(s, "({})", ctx.fmt_poly(c));
            for (jet, e) in m {
                s.push('*');
                s.push_str(&fmt_jet(ctx, jet));
                if *e > 1 {
                    let _ = write!(s, "^{e}");
                }
            }
        }
        s
    }
}

/// Result of [`JetExpr::monomial_ratio`]: `on_left == false` means
/// `self = factor * other`, otherwise `other = factor * self`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ratio {
    pub factor: Poly,
    pub on_left: bool,
}

pub fn fmt_jet(ctx: &Context, jet: &Jet) -> String {
    if jet.iter().all(|&e| e == 0) {
        return "logP".into();
    }
    let mut s = String::from("d[");
    let mut first = true;
    for (v, &e) in jet.iter().enumerate() {
        for _ in 0..e {
            if !first {
                s.push(',');
            }
            first = false;
            s.push_str(&ctx.vars()[v]);
        }
    }
    s.push_str("]logP");
    s
}

/// Jet monomial label used in reports: e.g. `d[u,v]logP*d[u]logP`.
pub fn fmt_jet_mono(ctx: &Context, m: &JetMono) -> String {
    if m.is_empty() {
        return "1".into();
    }
    let parts: Vec<String> = m
        .iter()
        .map(|(j, e)| {
            if *e > 1 {
                format!("{}^{e}", fmt_jet(ctx, j))
            } else {
                fmt_jet(ctx, j)
            }
        })
        .collect();
    parts.join("*")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> Context {
        Context::with_coordinates(vec!["u".into(), "v".into()])
    }

    #[test]
    fn derivative_obeys_product_rule() {
        let c = ctx();
        let l = JetExpr::log_p(&c);
        let u = JetExpr::scalar(c.sym("u").unwrap());
        // d_u (u * L^2) = L^2 + 2 u L L_u
        let e = u.mul(&c, &l.pow(&c, 2));
        let d = e.derive(&c, 0);
        let mut ju = zero_jet(&c);
        ju[0] = 1;
        let lu = JetExpr::symbol(&c, ju);
        let expect = l.pow(&c, 2).add(&u.mul(&c, &l).mul(&c, &lu).scale(q(2)));
        assert_eq!(d, expect);
    }

    #[test]
    fn mixed_partials_commute() {
        let c = ctx();
        let e = JetExpr::log_p(&c).pow(&c, 3);
        assert_eq!(e.derive(&c, 0).derive(&c, 1), e.derive(&c, 1).derive(&c, 0));
    }

    #[test]
    fn ratio_detects_monomial_factor() {
        let c = ctx();
        let l = JetExpr::log_p(&c);
        let u = c.sym("u").unwrap();
        let a = l.derive(&c, 0).add(&l.derive(&c, 1).scale(q(3)));
        let b = a.scale_poly(&c, &u).scale(q(-2));
        let r = b.monomial_ratio(&c, &a).unwrap();
        assert!(!r.on_left);
        assert_eq!(r.factor, u.scale(q(-2)));
        let r2 = a.monomial_ratio(&c, &b).unwrap();
        assert!(r2.on_left);
    }
}
