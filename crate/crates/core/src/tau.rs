//! The generalized one-particle integral and numerical checks of the
//! boundary-to-parameter identities it satisfies.
//!
//! With `f = exp(sum_l t1_l x_l + t2_l x_l^2 + sum_k c11_k x_{k-1} x_k)`,
//! integration by parts in `x_l` gives
//!
//! ```text
//! D^{l,1} tau = [t1_l + 2 t2_l d/dt1_l + c11_l d/dt1_{l-1} + c11_{l+1} d/dt1_{l+1}] tau
//! D^{l,2} tau = [1 + t1_l d/dt1_l + 2 t2_l d/dt2_l + c11_l d/dc11_l + c11_{l+1} d/dc11_{l+1}] tau
//! ```
//!
//! where `D^{l,1}` translates every finite endpoint of slice `l` and
//! `D^{l,2}` dilates them. Both sides are evaluated here by central
//! differences.

use serde::Serialize;

use crate::model::{Endpoint, IntervalUnion, TimeGrid};
use crate::quadrature::{log_tau_fixed, QuadratureSpec, TauParams};
use crate::CoreError;

/// Value of the integral, panels doubled until converged.
pub fn generalized_tau1(
    params: &TauParams,
    windows: &[IntervalUnion],
    spec: &QuadratureSpec,
) -> Result<f64, CoreError> {
    spec.validate()?;
    let mut panels = spec.panels;
    let mut prev = log_tau_fixed(params, windows, spec, panels)?.value();
    for _ in 0..spec.max_doublings {
        panels *= 2;
        let v = log_tau_fixed(params, windows, spec, panels)?.value();
        if (v - prev).abs() <= spec.tol * v.abs() {
            return Ok(v);
        }
        prev = v;
    }
    Err(CoreError::numerical("panel doubling did not converge"))
}

/// Fixed-discretisation value used inside difference stencils.
fn tau_at(
    params: &TauParams,
    windows: &[IntervalUnion],
    spec: &QuadratureSpec,
) -> Result<f64, CoreError> {
    Ok(log_tau_fixed(params, windows, spec, spec.panels)?.value())
}

fn log_tau_at(
    params: &TauParams,
    windows: &[IntervalUnion],
    spec: &QuadratureSpec,
) -> Result<f64, CoreError> {
    let v = log_tau_fixed(params, windows, spec, spec.panels)?;
    if v.sign <= 0.0 {
        return Err(CoreError::numerical("integral vanishes on the stencil"));
    }
    Ok(v.log)
}

/// Map the finite endpoints of slice `l`.
fn move_slice(
    windows: &[IntervalUnion],
    l: usize,
    f: impl Fn(f64) -> f64,
) -> Result<Vec<IntervalUnion>, CoreError> {
    let mut out = windows.to_vec();
    let e: Vec<Endpoint> = windows[l]
        .endpoints()
        .iter()
        .map(|e| match e {
            Endpoint::Finite(x) => Endpoint::Finite(f(*x)),
            other => *other,
        })
        .collect();
    out[l] = IntervalUnion::new(e).map_err(|err| err.at(format!("windows[{l}]")))?;
    Ok(out)
}

/// Which parameter a difference acts on.
#[derive(Clone, Copy, Debug)]
enum Param {
    T1(usize),
    T2(usize),
    C11(usize),
}

fn bump(params: &TauParams, p: Param, d: f64) -> TauParams {
    let mut q = params.clone();
    match p {
        Param::T1(i) => q.t1[i] += d,
        Param::T2(i) => q.t2[i] += d,
        Param::C11(i) => q.c11[i] += d,
    }
    q
}

fn d_param(
    params: &TauParams,
    p: Param,
    windows: &[IntervalUnion],
    h: f64,
    spec: &QuadratureSpec,
) -> Result<f64, CoreError> {
    let plus = tau_at(&bump(params, p, h), windows, spec)?;
    let minus = tau_at(&bump(params, p, -h), windows, spec)?;
    Ok((plus - minus) / (2.0 * h))
}

/// Both sides of the order-1 or order-2 identity on slice `l` at step `h`.
pub fn virasoro_sides(
    l: usize,
    order: u8,
    params: &TauParams,
    windows: &[IntervalUnion],
    h: f64,
    spec: &QuadratureSpec,
) -> Result<(f64, f64), CoreError> {
    let k = params.slices();
    if l >= k {
        return Err(CoreError::invalid(
            "slice",
            format!("{l} outside 0..{}", k - 1),
        ));
    }
    if windows.len() != k {
        return Err(CoreError::invalid(
            "windows",
            "one window per slice required",
        ));
    }
    let tau = tau_at(params, windows, spec)?;
    let (lhs, mut rhs) = match order {
        1 => {
            let plus = tau_at(params, &move_slice(windows, l, |a| a + h)?, spec)?;
            let minus = tau_at(params, &move_slice(windows, l, |a| a - h)?, spec)?;
            let lhs = (plus - minus) / (2.0 * h);
            let rhs = params.t1[l] * tau
                + 2.0 * params.t2[l] * d_param(params, Param::T1(l), windows, h, spec)?;
            (lhs, rhs)
        }
        2 => {
            let plus = tau_at(params, &move_slice(windows, l, |a| a * (1.0 + h))?, spec)?;
            let minus = tau_at(params, &move_slice(windows, l, |a| a * (1.0 - h))?, spec)?;
            let lhs = (plus - minus) / (2.0 * h);
            let rhs = tau
                + params.t1[l] * d_param(params, Param::T1(l), windows, h, spec)?
                + 2.0 * params.t2[l] * d_param(params, Param::T2(l), windows, h, spec)?;
            (lhs, rhs)
        }
        _ => return Err(CoreError::invalid("op_order", "order must be 1 or 2")),
    };
    for (nb, edge) in [
        (l.checked_sub(1), l.checked_sub(1)),
        (Some(l + 1).filter(|j| *j < k), (l + 1 < k).then_some(l)),
    ] {
        if let (Some(j), Some(e)) = (nb, edge) {
            let c = params.c11[e];
            rhs += match order {
                1 => c * d_param(params, Param::T1(j), windows, h, spec)?,
                _ => c * d_param(params, Param::C11(e), windows, h, spec)?,
            };
        }
    }
    Ok((lhs, rhs))
}

/// Residuals over a halving schedule and their successive ratios.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub check: String,
    pub h: Vec<f64>,
    pub residual: Vec<f64>,
    /// `residual[i] / residual[i + 1]`.
    pub ratios: Vec<f64>,
    /// False when a residual grew under refinement.
    pub monotone: bool,
}

impl ConvergenceReport {
    fn new(check: String, h: Vec<f64>, residual: Vec<f64>) -> Self {
        let ratios: Vec<f64> = residual.windows(2).map(|w| w[0] / w[1]).collect();
        let monotone = ratios.iter().all(|r| *r > 1.0);
        ConvergenceReport {
            check,
            h,
            residual,
            ratios,
            monotone,
        }
    }

    /// Second-order convergence: every ratio in `[3.5, 4.5]`.
    pub fn second_order(&self) -> bool {
        !self.ratios.is_empty() && self.ratios.iter().all(|r| (3.5..=4.5).contains(r))
    }
}

pub fn halving_schedule(h0: f64, levels: usize) -> Vec<f64> {
    (0..levels).map(|i| h0 / 2f64.powi(i as i32)).collect()
}

pub fn verify_virasoro_action(
    l: usize,
    order: u8,
    params: &TauParams,
    windows: &[IntervalUnion],
    h: &[f64],
    spec: &QuadratureSpec,
) -> Result<ConvergenceReport, CoreError> {
    let mut res = Vec::with_capacity(h.len());
    for &step in h {
        let (lhs, rhs) = virasoro_sides(l, order, params, windows, step, spec)?;
        res.push((lhs - rhs).abs());
    }
    Ok(ConvergenceReport::new(
        format!("virasoro D^({l},{order})"),
        h.to_vec(),
        res,
    ))
}

/// Lemma check with its negative control.
#[derive(Clone, Debug, Serialize)]
pub struct LemmaReport {
    pub convergence: ConvergenceReport,
    /// `E^{0,1} E^{m,1} log P - d^2 log P / dt1_0 dt1_m` per step: the
    /// identity without its constant.
    pub control: Vec<f64>,
    /// Richardson extrapolation of the control from the two finest steps.
    pub control_extrapolated: f64,
    /// `e^{-t_m} / 2`, the plateau the control must sit on.
    pub expected_plateau: f64,
}

impl LemmaReport {
    pub fn control_plateau_ok(&self, tol: f64) -> bool {
        (self.control_extrapolated.abs() - self.expected_plateau).abs() <= tol
    }
}

/// `(E^{0,1} E^{m,1} log P, d^2 log P / dt1_0 dt1_m)` at step `h`, with
/// `E^{k,1} = sum_l J_{k,l} D^{l,1}` and `J` the inverse Hessian on the
/// locus.
pub fn lemma_sides(
    grid: &TimeGrid,
    windows: &[IntervalUnion],
    h: f64,
    spec: &QuadratureSpec,
) -> Result<(f64, f64), CoreError> {
    let m = grid.m();
    if m == 0 {
        return Err(CoreError::invalid(
            "times",
            "locus requires at least two times",
        ));
    }
    let params = TauParams::locus(grid)?;
    let j = rmtlab_symbolic::jk::jk_matrices(grid.times())?.j;
    let k = m + 1;
    let f = |shifts: &[(usize, f64)]| -> Result<f64, CoreError> {
        let mut w = windows.to_vec();
        for &(l, d) in shifts {
            w = move_slice(&w, l, |a| a + d)?;
        }
        log_tau_at(&params, &w, spec)
    };
    let f0 = f(&[])?;
    let mut hess = vec![vec![0.0; k]; k];
    for a in 0..k {
        if windows[a].finite_endpoints().is_empty() {
            continue;
        }
        hess[a][a] = (f(&[(a, h)])? - 2.0 * f0 + f(&[(a, -h)])?) / (h * h);
        for b in a + 1..k {
            if windows[b].finite_endpoints().is_empty() {
                continue;
            }
            let v = (f(&[(a, h), (b, h)])? - f(&[(a, h), (b, -h)])? - f(&[(a, -h), (b, h)])?
                + f(&[(a, -h), (b, -h)])?)
                / (4.0 * h * h);
            hess[a][b] = v;
            hess[b][a] = v;
        }
    }
    let mut lhs = 0.0;
    for a in 0..k {
        for b in 0..k {
            lhs += j[0][a] * j[m][b] * hess[a][b];
        }
    }
    let g = |d0: f64, dm: f64| -> Result<f64, CoreError> {
        let mut p = params.clone();
        p.t1[0] += d0;
        p.t1[m] += dm;
        log_tau_at(&p, windows, spec)
    };
    let mixed = (g(h, h)? - g(h, -h)? - g(-h, h)? + g(-h, -h)?) / (4.0 * h * h);
    Ok((lhs, mixed))
}

pub fn verify_lemma_e0em(
    grid: &TimeGrid,
    windows: &[IntervalUnion],
    h: &[f64],
    spec: &QuadratureSpec,
) -> Result<LemmaReport, CoreError> {
    if windows.len() != grid.times().len() {
        return Err(CoreError::invalid(
            "windows",
            "one window per time required",
        ));
    }
    let tm = *grid.times().last().expect("non-empty grid");
    let offset = -0.5 * (-tm).exp();
    let mut residual = Vec::new();
    let mut control = Vec::new();
    for &step in h {
        let (lhs, mixed) = lemma_sides(grid, windows, step, spec)?;
        residual.push((lhs - (mixed + offset)).abs());
        control.push(lhs - mixed);
    }
    let n = control.len();
    let control_extrapolated = if n >= 2 {
        let ratio = (h[n - 2] / h[n - 1]).powi(2);
        (ratio * control[n - 1] - control[n - 2]) / (ratio - 1.0)
    } else {
        control[0]
    };
    Ok(LemmaReport {
        convergence: ConvergenceReport::new("lemma e0em".into(), h.to_vec(), residual),
        control,
        control_extrapolated,
        expected_plateau: 0.5 * (-tm).exp(),
    })
}
