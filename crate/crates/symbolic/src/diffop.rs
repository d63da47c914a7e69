//! Linear differential operators with ring coefficients.
//!
//! `DiffOp` is the finite sum `sum_alpha c_alpha(x) d^alpha`, stored with
//! coefficients to the left of the derivatives. Composition is computed
//! with the multivariate Leibniz rule, so coefficients that depend on the
//! variables (times, window endpoints, `e^{-t}` generators) are handled
//! exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_traits::One;
use smallvec::SmallVec;

use crate::jet::{jet_order, zero_jet, Jet, JetExpr};
use crate::ring::{q, Context, Poly, Q};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DiffOp {
    terms: BTreeMap<Jet, Poly>,
}

impl DiffOp {
    pub fn zero() -> Self {
        DiffOp::default()
    }

    pub fn identity(ctx: &Context) -> Self {
        Self::scalar(ctx, ctx.one())
    }

    /// Multiplication by a ring element.
    pub fn scalar(ctx: &Context, p: Poly) -> Self {
        let mut out = DiffOp::zero();
        out.add_term(zero_jet(ctx), &p);
        out
    }

    /// The first-order operator `d/d var`.
    pub fn partial(ctx: &Context, var: usize) -> Self {
        let mut alpha = zero_jet(ctx);
        alpha[var] = 1;
        let mut out = DiffOp::zero();
        out.add_term(alpha, &ctx.one());
        out
    }

    pub fn monomial(alpha: Jet, c: Poly) -> Self {
        let mut out = DiffOp::zero();
        out.add_term(alpha, &c);
        out
    }

    pub fn add_term(&mut self, alpha: Jet, c: &Poly) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(alpha) {
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

    pub fn terms(&self) -> impl Iterator<Item = (&Jet, &Poly)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, alpha: &Jet) -> Option<&Poly> {
        self.terms.get(alpha)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn order(&self) -> u32 {
        self.terms.keys().map(jet_order).max().unwrap_or(0)
    }

    pub fn add(&self, other: &DiffOp) -> DiffOp {
        let mut out = self.clone();
        for (a, c) in &other.terms {
            out.add_term(a.clone(), c);
        }
        out
    }

    pub fn sub(&self, other: &DiffOp) -> DiffOp {
        let mut out = self.clone();
        for (a, c) in &other.terms {
            out.add_term(a.clone(), &-c);
        }
        out
    }

    pub fn scale(&self, c: Q) -> DiffOp {
        let mut out = DiffOp::zero();
        for (a, p) in &self.terms {
            out.add_term(a.clone(), &p.scale(c));
        }
        out
    }

    /// Left multiplication by a ring element: `p * self`.
    pub fn scale_poly(&self, ctx: &Context, p: &Poly) -> DiffOp {
        let mut out = DiffOp::zero();
        for (a, c) in &self.terms {
            out.add_term(a.clone(), &ctx.mul(p, c));
        }
        out
    }

    /// `self ∘ other` by the Leibniz rule
    /// `d^alpha (b f) = sum_{gamma <= alpha} C(alpha, gamma) (d^gamma b) d^{alpha - gamma} f`.
    pub fn compose(&self, ctx: &Context, other: &DiffOp) -> DiffOp {
        let mut out = DiffOp::zero();
        let mut deriv_cache: BTreeMap<(Jet, Jet), Poly> = BTreeMap::new();
        for (alpha, a) in &self.terms {
            let gammas = sub_indices(alpha);
            for (beta, b) in &other.terms {
                for gamma in &gammas {
                    let db = deriv_cache
                        .entry((beta.clone(), gamma.clone()))
                        .or_insert_with(|| derive_multi(ctx, b, gamma))
                        .clone();
                    if db.is_zero() {
                        continue;
                    }
                    let binom = multi_binomial(alpha, gamma);
                    let mut idx: Jet = SmallVec::with_capacity(alpha.len());
                    for v in 0..alpha.len() {
                        idx.push(alpha[v] - gamma[v] + beta[v]);
                    }
                    let c = ctx.mul(a, &db).scale(binom);
                    out.add_term(idx, &c);
                }
            }
        }
        out
    }

    pub fn pow(&self, ctx: &Context, e: u32) -> DiffOp {
        let mut acc = DiffOp::identity(ctx);
        for _ in 0..e {
            acc = acc.compose(ctx, self);
        }
        acc
    }

    /// `[self, other] = self other - other self`.
    pub fn commutator(&self, ctx: &Context, other: &DiffOp) -> DiffOp {
        self.compose(ctx, other).sub(&other.compose(ctx, self))
    }

    /// Applies the operator to a jet expression by formal differentiation.
    pub fn apply(&self, ctx: &Context, f: &JetExpr) -> JetExpr {
        let mut cache: BTreeMap<Jet, JetExpr> = BTreeMap::new();
        cache.insert(zero_jet(ctx), f.clone());
        let mut out = JetExpr::zero();
        for (alpha, c) in &self.terms {
            let d = derive_jet_cached(ctx, &mut cache, alpha);
            out = out.add(&d.scale_poly(ctx, c));
        }
        out
    }

    /// Applies the operator to a ring element viewed as a function.
    pub fn apply_poly(&self, ctx: &Context, f: &Poly) -> Poly {
        let mut out = ctx.zero();
        for (alpha, c) in &self.terms {
            out += &ctx.mul(c, &derive_multi(ctx, f, alpha));
        }
        out
    }

    /// Substitutes ring generators in every coefficient.
    pub fn substitute(&self, ctx: &Context, images: &[Poly]) -> DiffOp {
        let mut out = DiffOp::zero();
        for (a, c) in &self.terms {
            out.add_term(a.clone(), &ctx.substitute(c, images));
        }
        out
    }

    /// Change of variables with constant Jacobian: coefficients are mapped
    /// through `gen_images` and each `d/dx_v` is replaced by the
    /// constant-coefficient first-order operator `partial_images[v]`.
    pub fn transform(
        &self,
        ctx: &Context,
        gen_images: &[Poly],
        partial_images: &[DiffOp],
    ) -> DiffOp {
        let mut out = DiffOp::zero();
        for (alpha, c) in &self.terms {
            let mut op = DiffOp::scalar(ctx, ctx.substitute(c, gen_images));
            for (v, &e) in alpha.iter().enumerate() {
                if e > 0 {
                    op = op.compose(ctx, &partial_images[v].pow(ctx, e as u32));
                }
            }
            out = out.add(&op);
        }
        out
    }

    /// Coefficients evaluated at numeric generator values.
    pub fn numeric(&self, ctx: &Context, gens: &[f64]) -> NumOp {
        NumOp {
            terms: self
                .terms
                .iter()
                .map(|(a, c)| (a.iter().copied().collect(), ctx.eval(c, gens)))
                .filter(|(_, x)| *x != 0.0)
                .collect(),
        }
    }

    pub fn display(&self, ctx: &Context) -> String {
        if self.is_zero() {
            return "0".into();
        }
        let mut s = String::new();
        for (i, (alpha, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                s.push_str(" + ");
            }
            let _ = write!(s, "({})", ctx.fmt_poly(c));
            for (v, &e) in alpha.iter().enumerate() {
                if e > 0 {
                    let _ = write!(s, "*d_{}", ctx.vars()[v]);
                    if e > 1 {
                        let _ = write!(s, "^{e}");
                    }
                }
            }
        }
        s
    }
}

/// Operator with floating-point coefficients frozen at a point, ready for
/// finite-difference application.
#[derive(Clone, Debug, PartialEq)]
pub struct NumOp {
    pub terms: Vec<(Vec<u8>, f64)>,
}

impl NumOp {
    pub fn order(&self) -> u32 {
        self.terms
            .iter()
            .map(|(a, _)| a.iter().map(|&e| e as u32).sum())
            .max()
            .unwrap_or(0)
    }
}

fn sub_indices(alpha: &Jet) -> Vec<Jet> {
    let mut out: Vec<Jet> = vec![SmallVec::new()];
    for &a in alpha {
        let mut next = Vec::with_capacity(out.len() * (a as usize + 1));
        for g in &out {
            for k in 0..=a {
                let mut g2 = g.clone();
                g2.push(k);
                next.push(g2);
            }
        }
        out = next;
    }
    out
}

fn multi_binomial(alpha: &Jet, gamma: &Jet) -> Q {
    let mut acc = Q::one();
    for (&a, &g) in alpha.iter().zip(gamma.iter()) {
        acc *= q(binomial(a as i128, g as i128));
    }
    acc
}

fn binomial(n: i128, k: i128) -> i128 {
    let mut r = 1i128;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

pub(crate) fn derive_multi(ctx: &Context, p: &Poly, gamma: &[u8]) -> Poly {
    let mut out = p.clone();
    for (v, &e) in gamma.iter().enumerate() {
        for _ in 0..e {
            if out.is_zero() {
                return out;
            }
            out = ctx.derive(&out, v);
        }
    }
    out
}

fn derive_jet_cached(ctx: &Context, cache: &mut BTreeMap<Jet, JetExpr>, alpha: &Jet) -> JetExpr {
    if let Some(e) = cache.get(alpha) {
        return e.clone();
    }
    // Peel one derivative from the last non-zero slot.
    let v = alpha
        .iter()
        .rposition(|&e| e > 0)
        .expect("zero index is cached");
    let mut lower = alpha.clone();
    lower[v] -= 1;
    let base = derive_jet_cached(ctx, cache, &lower);
    let d = base.derive(ctx, v);
    cache.insert(alpha.clone(), d.clone());
    d
}

/// The Wronskian `{f, g}_D = g D f - f D g`.
pub fn wronskian(ctx: &Context, f: &JetExpr, g: &JetExpr, d: &DiffOp) -> JetExpr {
    g.mul(ctx, &d.apply(ctx, f))
        .sub(&f.mul(ctx, &d.apply(ctx, g)))
}

impl DiffOp {
    /// True if every coefficient is a rational constant.
    pub fn has_constant_coefficients(&self) -> bool {
        self.terms.values().all(|c| c.as_constant().is_some())
    }

    /// Drops terms whose coefficient is identically zero after `f`.
    pub fn map_coeffs(&self, mut f: impl FnMut(&Poly) -> Poly) -> DiffOp {
        let mut out = DiffOp::zero();
        for (a, c) in &self.terms {
            out.add_term(a.clone(), &f(c));
        }
        out
    }
}
