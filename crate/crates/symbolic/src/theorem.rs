//! Expansion of the edge-scaling equation into the jet algebra.

use serde::Serialize;

use crate::diffop::{wronskian, DiffOp};
use crate::families::{AiryOps, Layout};
use crate::jet::JetExpr;
use crate::ring::{q, Context};
use crate::SymbolicError;

/// Which written form of the edge equation to expand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AiryForm {
    /// `D^2[E1+D3+T2] - D D1[E+D2+T1] - 2 D1L D1R D1 - {D^2, D D1}_D`.
    Theorem,
    /// The form reached directly from the large-`n` expansion. It carries
    /// the extra term `D [D1R S_R - D1L S_L]` with
    /// `S_R = sum (t_m - t_l)^2 D^{l,1}` and `S_L = sum t_l^2 D^{l,1}`;
    /// for two times this term vanishes identically.
    Limit,
}

/// `LHS - RHS` of the edge equation as a jet expression in `logP`.
pub fn expand_airy(
    layout: &Layout,
    ctx: &Context,
    form: AiryForm,
) -> Result<JetExpr, SymbolicError> {
    let ops = AiryOps::build(layout, ctx)?;
    Ok(expand_with(&ops, ctx, form))
}

pub fn expand_with(ops: &AiryOps, ctx: &Context, form: AiryForm) -> JetExpr {
    let l = JetExpr::log_p(ctx);
    let dd = ops.d.compose(ctx, &ops.d);
    let ddd1 = ops.d.compose(ctx, &ops.d1);
    let first = dd.compose(ctx, &ops.e1.add(&ops.d3).add(&ops.t2));
    let second = ddd1.compose(ctx, &ops.e.add(&ops.d2).add(&ops.t1));
    let third = ops
        .d1l
        .compose(ctx, &ops.d1r)
        .compose(ctx, &ops.d1)
        .scale(q(2));
    let mut lin: DiffOp = first.sub(&second).sub(&third);
    if form == AiryForm::Limit {
        lin = lin.add(&extra_term(ops, ctx));
    }
    let lhs = lin.apply(ctx, &l);
    let rhs = wronskian(ctx, &dd.apply(ctx, &l), &ddd1.apply(ctx, &l), &ops.d);
    lhs.sub(&rhs)
}

/// `D [D1R S_R - D1L S_L]`.
pub fn extra_term(ops: &AiryOps, ctx: &Context) -> DiffOp {
    ops.d.compose(
        ctx,
        &ops.d1r
            .compose(ctx, &ops.sq_r)
            .sub(&ops.d1l.compose(ctx, &ops.sq_l)),
    )
}

/// Convenience for half-line windows named `u0..um`, times `t1..tm`.
pub fn expand_airy_theorem(m: usize, form: AiryForm) -> Result<(Context, JetExpr), SymbolicError> {
    let layout = Layout::half_lines(m);
    let ctx = layout.coordinate_context();
    let e = expand_airy(&layout, &ctx, form)?;
    Ok((ctx, e))
}
