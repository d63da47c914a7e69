//! Large-`n` expansion of the finite-`n` equation under edge scaling.
//!
//! With `eps = 1/nbar` the scaled first-order operators are
//! `sqrt(2 nbar) * A` and `sqrt(2 nbar) * B` where
//!
//! ```text
//! A = sum e^{-t_l eps} D^{l,1}        B = sum e^{(t_l - t_m) eps} D^{l,1}
//! ```
//!
//! and the second-order ones are `nbar^2 * A2` and `nbar^2 * B2` with
//!
//! ```text
//! A2 = eps^2 sum e^{-2 t_l eps} D^{l,2} + 2 sum e^{-2 t_l eps} D^{l,1}
//!      + eps sum_{l>=1} (1 - e^{-2 t_l eps}) d_{t_l} - eps^2 e^{-2 t_m eps}
//! B2 = eps^2 sum e^{2(t_l - t_m) eps} D^{l,2} + 2 sum e^{2(t_l - t_m) eps} D^{l,1}
//!      + eps sum_{l>=1} (e^{2(t_l - t_m) eps} - e^{-2 t_m eps}) d_{t_l} - eps^2 e^{-2 t_m eps}
//! ```
//!
//! The cross-multiplied equation
//! `[A1 B2 A1 - B1 A2 B1] L (A1 B1 L + 2n e^{-t_m}) = B2 A1 L * A1 B1 A1 L - A2 B1 L * B1 A1 B1 L`
//! then equals `4 nbar^6 (X - eps^2 Y)` with
//!
//! ```text
//! X = [A B2 A - B A2 B] L * (eps^2 A B L + e^{-t_m eps})
//! Y = B2 A L * A B A L - A2 B L * B A B L
//! ```
//!
//! so the coefficient of `eps^k` in `Z = X - eps^2 Y` is the coefficient of
//! `nbar^{4-k}` in the equation normalised to leading order `nbar^4`. All
//! exponentials are truncated power series in `eps`; truncation at
//! `eps^{K+1}` is exact for every coefficient up to `eps^K` because no step
//! divides by `eps`.

use std::time::Instant;

use serde::Serialize;

use crate::diffop::DiffOp;
use crate::families::{AiryOps, Layout};
use crate::jet::{fmt_jet_mono, JetExpr};
use crate::ring::{q, Context, GenKind, Poly};
use crate::theorem::{expand_with, AiryForm};
use crate::SymbolicError;

/// The scaled operators in an `eps`-truncated context.
pub struct ScaledOps {
    pub ctx: Context,
    pub layout: Layout,
    pub eps: usize,
    pub a: DiffOp,
    pub b: DiffOp,
    pub a2: DiffOp,
    pub b2: DiffOp,
    /// `e^{-t_m eps}` as a series.
    pub decay_m: Poly,
}

impl ScaledOps {
    pub fn build(layout: &Layout, order: u8) -> Result<ScaledOps, SymbolicError> {
        layout.check()?;
        let m = layout.m();
        let mut ctx = layout.coordinate_context();
        let eps = ctx.push_gen("eps", GenKind::Const);
        ctx.truncate(eps, order)?;
        let e = ctx.gen_poly(eps);
        let ex = |arg: Poly| ctx.exp_series(&ctx.mul(&arg, &e), order as u32);
        let t = |l: usize| layout.time(&ctx, l);
        let tm = t(m);
        let e2 = ctx.pow(&e, 2);
        let exp_a = |l: usize, k: i128| ex(t(l).scale(q(-k)));
        let exp_b = |l: usize, k: i128| ex((&t(l) - &tm).scale(q(k)));
        let e2m = exp_a(m, 2);
        let a = layout.weighted(&ctx, 1, |l| exp_a(l, 1));
        let b = layout.weighted(&ctx, 1, |l| exp_b(l, 1));
        let a2 = layout
            .weighted(&ctx, 2, |l| ctx.mul(&e2, &exp_a(l, 2)))
            .add(&layout.weighted(&ctx, 1, |l| exp_a(l, 2).scale(q(2))))
            .add(&layout.weighted_dt(&ctx, |l| ctx.mul(&e, &(&ctx.one() - &exp_a(l, 2)))))
            .sub(&DiffOp::scalar(&ctx, ctx.mul(&e2, &e2m)));
        let b2 = layout
            .weighted(&ctx, 2, |l| ctx.mul(&e2, &exp_b(l, 2)))
            .add(&layout.weighted(&ctx, 1, |l| exp_b(l, 2).scale(q(2))))
            .add(&layout.weighted_dt(&ctx, |l| ctx.mul(&e, &(&exp_b(l, 2) - &e2m))))
            .sub(&DiffOp::scalar(&ctx, ctx.mul(&e2, &e2m)));
        let decay_m = exp_a(m, 1);
        Ok(ScaledOps {
            ctx,
            layout: layout.clone(),
            eps,
            a,
            b,
            a2,
            b2,
            decay_m,
        })
    }

    /// `Z = X - eps^2 Y`; `keep_constant = false` drops the `e^{-t_m eps}`
    /// summand from the second factor of `X` (negative control).
    pub fn z(&self, keep_constant: bool) -> JetExpr {
        let ctx = &self.ctx;
        let l = JetExpr::log_p(ctx);
        let e2 = ctx.pow(&ctx.gen_poly(self.eps), 2);
        let al = self.a.apply(ctx, &l);
        let bl = self.b.apply(ctx, &l);
        let abl = self.a.apply(ctx, &bl);
        let bal = self.b.apply(ctx, &al);
        let bracket = self
            .a
            .apply(ctx, &self.b2.apply(ctx, &al))
            .sub(&self.b.apply(ctx, &self.a2.apply(ctx, &bl)));
        let mut factor = abl.scale_poly(ctx, &e2);
        if keep_constant {
            factor = factor.add(&JetExpr::scalar(self.decay_m.clone()));
        }
        let x = bracket.mul(ctx, &factor);
        let y = self
            .b2
            .apply(ctx, &al)
            .mul(ctx, &self.a.apply(ctx, &bal))
            .sub(&self.a2.apply(ctx, &bl).mul(ctx, &self.b.apply(ctx, &abl)));
        x.sub(&y.scale_poly(ctx, &e2))
    }

    /// Coefficient of `eps^k`.
    pub fn coefficient(&self, z: &JetExpr, k: u8) -> JetExpr {
        z.map_coeffs(|c| self.ctx.coefficient_of(c, self.eps, k))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderReport {
    /// Power of `nbar` this coefficient multiplies (leading order is 4).
    pub nbar_power: i32,
    pub vanishes: bool,
    pub n_terms: usize,
    /// Up to a handful of offending monomials when non-zero.
    pub sample: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SeriesReport {
    pub m: usize,
    pub order: u8,
    pub leading_orders: Vec<OrderReport>,
    pub leading_orders_vanish: bool,
    /// Whether the first surviving order is a monomial multiple of the limit
    /// form of the edge equation, and the factor.
    pub matches_limit_form: bool,
    pub limit_factor: Option<String>,
    /// The same comparison against the theorem form of the edge equation.
    pub matches_theorem_form: bool,
    pub theorem_factor: Option<String>,
    /// Negative control: without the `e^{-t_m eps}` summand.
    pub control_leading_orders_vanish: bool,
    pub control_first_nonzero_nbar_power: Option<i32>,
    pub control_matches_limit_form: bool,
    pub elapsed_ms: u128,
}

fn order_report(ctx: &Context, e: &JetExpr, k: u8) -> OrderReport {
    OrderReport {
        nbar_power: 4 - k as i32,
        vanishes: e.is_zero(),
        n_terms: e.len(),
        sample: e
            .terms()
            .take(4)
            .map(|(m, c)| format!("({}) {}", ctx.fmt_poly(c), fmt_jet_mono(ctx, m)))
            .collect(),
    }
}

/// Runs the full cancellation check for half-line windows with `m + 1`
/// slices, truncating the series at `eps^order` (`order >= 4`).
pub fn series_cancellation(m: usize, order: u8) -> Result<SeriesReport, SymbolicError> {
    if order < 4 {
        return Err(SymbolicError::Context(
            "series order must be at least 4".into(),
        ));
    }
    let start = Instant::now();
    let layout = Layout::half_lines(m);
    let s = ScaledOps::build(&layout, order)?;
    let ctx = &s.ctx;
    let z = s.z(true);
    let leading: Vec<OrderReport> = (0..3)
        .map(|k| order_report(ctx, &s.coefficient(&z, k), k))
        .collect();
    let leading_ok = leading.iter().all(|o| o.vanishes);
    let z3 = s.coefficient(&z, 3);
    let ops = AiryOps::build(&layout, ctx)?;
    let limit = expand_with(&ops, ctx, AiryForm::Limit);
    let theorem = expand_with(&ops, ctx, AiryForm::Theorem);
    let lim = z3.monomial_ratio(ctx, &limit);
    let thm = z3.monomial_ratio(ctx, &theorem);
    let fmt_ratio = |r: &crate::jet::Ratio| {
        if r.on_left {
            format!("limit-side factor {}", ctx.fmt_poly(&r.factor))
        } else {
            ctx.fmt_poly(&r.factor)
        }
    };

    let zc = s.z(false);
    let mut control_first = None;
    for k in 0..=3u8 {
        if !s.coefficient(&zc, k).is_zero() {
            control_first = Some(4 - k as i32);
            break;
        }
    }
    let control_leading = (0..3).all(|k| s.coefficient(&zc, k).is_zero());
    let control_limit = s.coefficient(&zc, 3).monomial_ratio(ctx, &limit).is_some();

    Ok(SeriesReport {
        m,
        order,
        leading_orders: leading,
        leading_orders_vanish: leading_ok,
        matches_limit_form: lim.is_some(),
        limit_factor: lim.as_ref().map(fmt_ratio),
        matches_theorem_form: thm.is_some(),
        theorem_factor: thm.as_ref().map(fmt_ratio),
        control_leading_orders_vanish: control_leading,
        control_first_nonzero_nbar_power: control_first,
        control_matches_limit_form: control_limit,
        elapsed_ms: start.elapsed().as_millis(),
    })
}
