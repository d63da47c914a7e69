//! Commutator identities between the scaled operators, checked as exact
//! identities of truncated `eps`-series (`eps = 1/nbar`).

use serde::Serialize;

use crate::diffop::DiffOp;
use crate::families::Layout;
use crate::ring::{q, qf, Context, GenKind, Poly};
use crate::SymbolicError;

#[derive(Clone, Debug, Serialize)]
pub struct CommutatorCheck {
    pub name: String,
    /// `[X, Y] == RHS` exactly as written.
    pub holds_as_written: bool,
    /// `[X, Y] == -RHS`.
    pub holds_with_opposite_sign: bool,
    /// Result for the amended reading, when one is proposed.
    pub amended: Option<String>,
    pub amended_holds: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CommutatorReport {
    pub m: usize,
    pub order: u8,
    pub checks: Vec<CommutatorCheck>,
}

struct Series {
    ctx: Context,
    eps: Poly,
    order: u8,
}

impl Series {
    fn exp(&self, arg: &Poly) -> Poly {
        self.ctx
            .exp_series(&self.ctx.mul(arg, &self.eps), self.order as u32)
    }

    /// `(e^{a eps} - e^{b eps}) / eps`, an honest power series.
    fn exp_diff_over_eps(&self, a: &Poly, b: &Poly) -> Poly {
        let ctx = &self.ctx;
        let mut out = ctx.zero();
        let mut pa = a.clone();
        let mut pb = b.clone();
        let mut fact = 1i128;
        let mut epsk = ctx.one();
        for k in 0..=self.order as i128 {
            fact *= k + 1;
            out += &ctx.mul(&epsk, &(&pa - &pb)).scale(qf(1, fact));
            pa = ctx.mul(&pa, a);
            pb = ctx.mul(&pb, b);
            epsk = ctx.mul(&epsk, &self.eps);
        }
        out
    }
}

fn verdict(
    name: &str,
    lhs: &DiffOp,
    rhs: &DiffOp,
    amended: Option<(&str, &DiffOp, &DiffOp)>,
) -> CommutatorCheck {
    CommutatorCheck {
        name: name.into(),
        holds_as_written: lhs == rhs,
        holds_with_opposite_sign: *lhs == rhs.scale(q(-1)),
        amended: amended.map(|(s, _, _)| s.to_string()),
        amended_holds: amended.map(|(_, l, r)| l == r),
    }
}

/// Checks the four commutator formulas used to reorder the scaled equation,
/// plus a textbook sanity identity, for `m + 1` half-line slices.
pub fn check_commutators(m: usize, order: u8) -> Result<CommutatorReport, SymbolicError> {
    let layout = Layout::half_lines(m);
    layout.check()?;
    let mut ctx = layout.coordinate_context();
    let eps_gen = ctx.push_gen("eps", GenKind::Const);
    ctx.truncate(eps_gen, order)?;
    let s = Series {
        eps: ctx.gen_poly(eps_gen),
        ctx: ctx.clone(),
        order,
    };
    let t = |l: usize| layout.time(&ctx, l);
    let tm = t(m);
    let d1 = |w: &dyn Fn(usize) -> Poly| layout.weighted(&ctx, 1, w);
    let d2 = |w: &dyn Fn(usize) -> Poly| layout.weighted(&ctx, 2, w);

    let a_bar = d1(&|l| s.exp(&t(l).scale(q(-1))));
    let b_bar = d1(&|l| s.exp(&(&t(l) - &tm)));
    let mut checks = Vec::new();

    // Textbook: [d_u, u d_u] = d_u.
    let du = DiffOp::partial(&ctx, 0);
    let u = ctx.gen_poly(ctx.coord_gen(0).expect("coordinate"));
    checks.push(verdict(
        "[d_u, u d_u] = d_u",
        &du.commutator(&ctx, &du.scale_poly(&ctx, &u)),
        &du,
        None,
    ));

    // 1. [nbar sum (e^{2(t_l-t_m)eps} - e^{-2 t_m eps}) d_{t_l}, A]
    //    = sum (e^{(t_l-2t_m)eps} - e^{-(t_l+2t_m)eps}) D^{l,1}
    let x1 = layout.weighted_dt(&ctx, |l| {
        s.exp_diff_over_eps(&(&t(l) - &tm).scale(q(2)), &tm.scale(q(-2)))
    });
    let lhs1 = x1.commutator(&ctx, &a_bar);
    let rhs1 = d1(&|l| {
        &s.exp(&(&t(l) - &tm.scale(q(2)))) - &s.exp(&(&t(l) + &tm.scale(q(2))).scale(q(-1)))
    });
    checks.push(verdict(
        "time-derivative part of B2 against A",
        &lhs1,
        &rhs1,
        None,
    ));

    // 2. [nbar sum (1 - e^{-2 t_l eps}) d_{t_l}, B]
    //    = sum (e^{(t_l-3t_m)eps} - e^{-(t_l+t_m)eps}) D^{l,1}
    let zero = ctx.zero();
    let x2 = layout.weighted_dt(&ctx, |l| s.exp_diff_over_eps(&zero, &t(l).scale(q(-2))));
    let lhs2 = x2.commutator(&ctx, &b_bar);
    let rhs2 = d1(&|l| &s.exp(&(&t(l) - &tm.scale(q(3)))) - &s.exp(&(&t(l) + &tm).scale(q(-1))));
    checks.push(verdict(
        "time-derivative part of A2 against B",
        &lhs2,
        &rhs2,
        None,
    ));

    // 3. [A, sum e^{2(t_l-t_m)eps} D^{l,2}] = sum e^{(t_l-2t_m)eps} D^{l,1}
    let y3 = d2(&|l| s.exp(&(&t(l) - &tm).scale(q(2))));
    let lhs3 = a_bar.commutator(&ctx, &y3);
    let rhs3 = d1(&|l| s.exp(&(&t(l) - &tm.scale(q(2)))));
    checks.push(verdict(
        "A against second-order part of B2",
        &lhs3,
        &rhs3,
        None,
    ));

    // 4. [B, sum e^{2 t_l eps} D^{l,2}] = sum e^{-(t_l+t_m)eps} D^{l,1};
    //    amended with e^{-2 t_l eps}, the second-order part of A2.
    let y4 = d2(&|l| s.exp(&t(l).scale(q(2))));
    let y4_amended = d2(&|l| s.exp(&t(l).scale(q(-2))));
    let lhs4 = b_bar.commutator(&ctx, &y4);
    let lhs4_amended = b_bar.commutator(&ctx, &y4_amended);
    let rhs4 = d1(&|l| s.exp(&(&t(l) + &tm).scale(q(-1))));
    checks.push(verdict(
        "B against second-order part with e^{2 t_l eps}",
        &lhs4,
        &rhs4,
        Some(("second argument with e^{-2 t_l eps}", &lhs4_amended, &rhs4)),
    ));

    Ok(CommutatorReport { m, order, checks })
}
