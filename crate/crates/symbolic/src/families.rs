//! The named operator families acting on window endpoints and times.
//!
//! A [`Layout`] fixes which window endpoints are finite (only those carry a
//! derivative) and names the time variables `t_1..t_m`. The slice operators
//! are
//!
//! ```text
//! D^{l,1} = sum_i d/da_i^(l)        D^{l,2} = sum_i a_i^(l) d/da_i^(l)
//! ```
//!
//! and every family below is a combination of these with coefficients in
//! the times: exponential generators `c_i = e^{-(t_i - t_{i-1})}` on the
//! finite-`n` side, polynomials in `t_l` on the edge-scaling side.

use crate::diffop::DiffOp;
use crate::ring::{q, Context, GenKind, Poly};
use crate::SymbolicError;

/// Finite window endpoints per slice and time-variable names.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub slices: Vec<Vec<String>>,
    pub times: Vec<String>,
}

impl Layout {
    /// One finite endpoint per slice, `(-inf, u_l)`, named `u0..um`, with
    /// times `t1..tm`.
    pub fn half_lines(m: usize) -> Layout {
        Layout {
            slices: (0..=m).map(|l| vec![format!("u{l}")]).collect(),
            times: (1..=m).map(|l| format!("t{l}")).collect(),
        }
    }

    /// Half-line windows with caller-chosen names, e.g. `u, v, w` and `t, s`.
    pub fn named(endpoints: &[&str], times: &[&str]) -> Result<Layout, SymbolicError> {
        if endpoints.len() != times.len() + 1 {
            return Err(SymbolicError::Context(format!(
                "{} slices need {} times, got {}",
                endpoints.len(),
                endpoints.len() - 1,
                times.len()
            )));
        }
        Ok(Layout {
            slices: endpoints.iter().map(|e| vec![e.to_string()]).collect(),
            times: times.iter().map(|t| t.to_string()).collect(),
        })
    }

    pub fn m(&self) -> usize {
        self.times.len()
    }

    /// Variable names: all endpoints slice by slice, then the times.
    pub fn vars(&self) -> Vec<String> {
        self.slices
            .iter()
            .flatten()
            .cloned()
            .chain(self.times.iter().cloned())
            .collect()
    }

    pub fn endpoint_vars(&self, l: usize) -> std::ops::Range<usize> {
        let start: usize = self.slices[..l].iter().map(Vec::len).sum();
        start..start + self.slices[l].len()
    }

    /// Variable index of `t_l`, `l >= 1`.
    pub fn time_var(&self, l: usize) -> usize {
        assert!(l >= 1 && l <= self.m());
        self.slices.iter().map(Vec::len).sum::<usize>() + l - 1
    }

    /// Context with one coordinate generator per variable.
    pub fn coordinate_context(&self) -> Context {
        Context::with_coordinates(self.vars())
    }

    pub fn check(&self) -> Result<(), SymbolicError> {
        if self.times.is_empty() {
            return Err(SymbolicError::Context(
                "at least two slices required".into(),
            ));
        }
        if self.slices.len() != self.times.len() + 1 {
            return Err(SymbolicError::Context("slice/time count mismatch".into()));
        }
        let vars = self.vars();
        for (i, v) in vars.iter().enumerate() {
            if vars[..i].contains(v) {
                return Err(SymbolicError::Context(format!("duplicate variable `{v}`")));
            }
        }
        Ok(())
    }

    /// Slice operator `D^{l,1}`.
    pub fn d1(&self, ctx: &Context, l: usize) -> DiffOp {
        let mut op = DiffOp::zero();
        for v in self.endpoint_vars(l) {
            op = op.add(&DiffOp::partial(ctx, v));
        }
        op
    }

    /// Slice operator `D^{l,2}`.
    pub fn d2(&self, ctx: &Context, l: usize) -> DiffOp {
        let mut op = DiffOp::zero();
        for v in self.endpoint_vars(l) {
            let a = ctx.gen_poly(ctx.coord_gen(v).expect("endpoint coordinate"));
            op = op.add(&DiffOp::partial(ctx, v).scale_poly(ctx, &a));
        }
        op
    }

    pub fn dt(&self, ctx: &Context, l: usize) -> DiffOp {
        DiffOp::partial(ctx, self.time_var(l))
    }

    /// `t_l` as a ring element (zero for `l = 0`).
    pub fn time(&self, ctx: &Context, l: usize) -> Poly {
        if l == 0 {
            ctx.zero()
        } else {
            ctx.gen_poly(ctx.coord_gen(self.time_var(l)).expect("time coordinate"))
        }
    }

    /// `sum_l w_l D^{l,k}`.
    pub fn weighted(&self, ctx: &Context, order: u8, w: impl Fn(usize) -> Poly) -> DiffOp {
        let mut op = DiffOp::zero();
        for l in 0..=self.m() {
            let d = if order == 1 {
                self.d1(ctx, l)
            } else {
                self.d2(ctx, l)
            };
            op = op.add(&d.scale_poly(ctx, &w(l)));
        }
        op
    }

    /// `sum_{l>=1} w_l d/dt_l`.
    pub fn weighted_dt(&self, ctx: &Context, w: impl Fn(usize) -> Poly) -> DiffOp {
        let mut op = DiffOp::zero();
        for l in 1..=self.m() {
            op = op.add(&self.dt(ctx, l).scale_poly(ctx, &w(l)));
        }
        op
    }
}

/// Finite-`n` operators, coefficients in the decay generators `c_i`.
#[derive(Clone, Debug)]
pub struct DysonOps {
    pub ctx: Context,
    pub layout: Layout,
    /// Generator index of `c_i` at position `i - 1`.
    pub c: Vec<usize>,
    pub a1: DiffOp,
    pub b1: DiffOp,
    pub a2: DiffOp,
    pub b2: DiffOp,
}

impl DysonOps {
    pub fn build(layout: &Layout) -> Result<DysonOps, SymbolicError> {
        layout.check()?;
        let m = layout.m();
        let mut ctx = layout.coordinate_context();
        let c: Vec<usize> = (1..=m)
            .map(|i| {
                let mut lin = vec![(layout.time_var(i), q(-1))];
                if i > 1 {
                    lin.push((layout.time_var(i - 1), q(1)));
                }
                ctx.push_gen(format!("c{i}"), GenKind::Exp(lin))
            })
            .collect();
        // e^{-t_l} = c_1 ... c_l,  e^{t_l - t_m} = c_{l+1} ... c_m
        let left = |l: usize, p: u8| -> Poly {
            let mut acc = ctx.one();
            for &g in &c[..l] {
                acc = ctx.mul(&acc, &ctx.gen_pow(g, p));
            }
            acc
        };
        let right = |l: usize, p: u8| -> Poly {
            let mut acc = ctx.one();
            for &g in &c[l..] {
                acc = ctx.mul(&acc, &ctx.gen_pow(g, p));
            }
            acc
        };
        let e2m = left(m, 2);
        let a1 = layout.weighted(&ctx, 1, |l| left(l, 1));
        let b1 = layout.weighted(&ctx, 1, |l| right(l, 1));
        let a2 = layout
            .weighted(&ctx, 2, |l| left(l, 2))
            .add(&layout.weighted_dt(&ctx, |l| &ctx.one() - &left(l, 2)))
            .sub(&DiffOp::scalar(&ctx, e2m.clone()));
        let b2 = layout
            .weighted(&ctx, 2, |l| right(l, 2))
            .add(&layout.weighted_dt(&ctx, |l| &right(l, 2) - &e2m))
            .sub(&DiffOp::scalar(&ctx, e2m.clone()));
        Ok(DysonOps {
            ctx,
            layout: layout.clone(),
            c,
            a1,
            b1,
            a2,
            b2,
        })
    }

    /// Generator values for numeric evaluation at endpoint values `a` and
    /// times `t_1..t_m`.
    pub fn generator_values(&self, endpoints: &[f64], times: &[f64]) -> Vec<f64> {
        let mut vals: Vec<f64> = endpoints.iter().chain(times.iter()).copied().collect();
        let mut prev = 0.0;
        for &t in times {
            vals.push((-(t - prev)).exp());
            prev = t;
        }
        vals
    }
}

/// Edge-scaling operators, coefficients polynomial in the times.
#[derive(Clone, Debug)]
pub struct AiryOps {
    pub d: DiffOp,
    pub d1l: DiffOp,
    pub d1r: DiffOp,
    pub d1: DiffOp,
    pub d2: DiffOp,
    pub d3: DiffOp,
    pub e: DiffOp,
    pub e1: DiffOp,
    pub t1: DiffOp,
    pub t2: DiffOp,
    /// `sum (t_m - t_l)^2 D^{l,1}` and `sum t_l^2 D^{l,1}`, which only enter
    /// the limit form of the equation.
    pub sq_r: DiffOp,
    pub sq_l: DiffOp,
}

impl AiryOps {
    /// Builds the family inside `ctx`, which must contain coordinate
    /// generators for every layout variable (it may carry more).
    pub fn build(layout: &Layout, ctx: &Context) -> Result<AiryOps, SymbolicError> {
        layout.check()?;
        let m = layout.m();
        let t = |l: usize| layout.time(ctx, l);
        let tm = t(m);
        let diff = |l: usize| &tm - &t(l);
        let one = ctx.one();
        Ok(AiryOps {
            d: layout.weighted(ctx, 1, |_| one.clone()),
            d1l: layout.weighted(ctx, 1, diff),
            d1r: layout.weighted(ctx, 1, t),
            d1: layout.weighted(ctx, 1, |l| &diff(l) - &t(l)),
            d2: layout.weighted(ctx, 1, |l| &ctx.pow(&diff(l), 2) + &ctx.pow(&t(l), 2)),
            d3: layout.weighted(ctx, 1, |l| &ctx.pow(&diff(l), 3) - &ctx.pow(&t(l), 3)),
            e: layout.weighted(ctx, 2, |_| one.clone()),
            e1: layout.weighted(ctx, 2, |l| &diff(l) - &t(l)),
            t1: layout.weighted_dt(ctx, |l| t(l).scale(q(2))),
            t2: layout.weighted_dt(ctx, |l| ctx.mul(&t(l), &diff(l)).scale(q(2))),
            sq_r: layout.weighted(ctx, 1, |l| ctx.pow(&diff(l), 2)),
            sq_l: layout.weighted(ctx, 1, |l| ctx.pow(&t(l), 2)),
        })
    }

    pub fn named(&self) -> Vec<(&'static str, &DiffOp)> {
        vec![
            ("D", &self.d),
            ("D1L", &self.d1l),
            ("D1R", &self.d1r),
            ("D1", &self.d1),
            ("D2", &self.d2),
            ("D3", &self.d3),
            ("E", &self.e),
            ("E1", &self.e1),
            ("T1", &self.t1),
            ("T2", &self.t2),
        ]
    }
}

/// Time reversal `t'_l = t_m - t_{m-l}` with slice relabelling `l -> m - l`,
/// expressed as generator images and images of the partial derivatives.
/// Requires every slice to carry the same number of finite endpoints.
pub fn reversal(layout: &Layout, ctx: &Context) -> Result<(Vec<Poly>, Vec<DiffOp>), SymbolicError> {
    let m = layout.m();
    let widths: Vec<usize> = layout.slices.iter().map(Vec::len).collect();
    if widths.iter().any(|&w| w != widths[0]) {
        return Err(SymbolicError::Context(
            "reversal needs the same endpoint count in every slice".into(),
        ));
    }
    let nv = ctx.n_vars();
    let mut partials = vec![DiffOp::zero(); nv];
    let mut var_image: Vec<Poly> = vec![ctx.zero(); nv];
    for l in 0..=m {
        let src = layout.endpoint_vars(l);
        let dst = layout.endpoint_vars(m - l);
        for (a, b) in src.zip(dst) {
            partials[a] = DiffOp::partial(ctx, b);
            var_image[a] = ctx.gen_poly(ctx.coord_gen(b).expect("coordinate"));
        }
    }
    let tc = |l: usize| layout.time(ctx, l);
    for k in 1..=m {
        let v = layout.time_var(k);
        // t_k = t'_m - t'_{m-k}
        var_image[v] = &tc(m) - &tc(m - k);
        partials[v] = if k < m {
            DiffOp::partial(ctx, layout.time_var(m - k)).scale(q(-1))
        } else {
            (1..=m).fold(DiffOp::zero(), |acc, j| acc.add(&layout.dt(ctx, j)))
        };
    }
    let mut gen_images = Vec::with_capacity(ctx.n_gens());
    for g in ctx.gens() {
        gen_images.push(match &g.kind {
            GenKind::Coord(v) => var_image[*v].clone(),
            GenKind::Const => ctx.gen_poly(ctx.gen(&g.name)?),
            GenKind::Exp(_) => {
                // c_i -> c_{m+1-i}
                let i: usize =
                    g.name.trim_start_matches('c').parse().map_err(|_| {
                        SymbolicError::Context(format!("cannot reverse `{}`", g.name))
                    })?;
                ctx.sym(&format!("c{}", m + 1 - i))?
            }
        });
    }
    Ok((gen_images, partials))
}
