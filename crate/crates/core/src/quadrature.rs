//! Deterministic chain quadrature for the stationary Dyson probabilities.
//!
//! Every integral here has the form
//!
//! ```text
//! int x_0^a x_m^b exp( sum_l (t1_l x_l + t2_l x_l^2) + sum_k c11_k x_{k-1} x_k ) dx
//! ```
//!
//! over a product of windows. The nearest-neighbour coupling makes it a
//! chain of one-dimensional integrals, evaluated by propagating a vector of
//! node values from slice to slice in log-scaled form so that no parameter
//! choice can overflow. One particle is this integral at the locus; two
//! particles reduce to a 2x2 determinant of such integrals with
//! `(a, b) in {0, 1}^2` (Andréief's identity applied along the chain).

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::gauss::GaussLegendre;
use crate::model::{build_locus, IntervalUnion, TimeGrid, WindowFamily};
use crate::{CoreError, ProbEstimate};

/// Quadrature controls.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuadratureSpec {
    /// Gauss-Legendre nodes per panel.
    pub nodes: usize,
    /// Initial panels per window component.
    pub panels: usize,
    /// Infinite tails are cut at `mu +- trunc * sigma` of the Gaussian
    /// envelope.
    pub trunc: f64,
    /// Relative agreement required between successive panel doublings.
    pub tol: f64,
    pub max_doublings: u32,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            nodes: 16,
            panels: 4,
            trunc: 10.0,
            tol: 1e-12,
            max_doublings: 7,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.nodes < 4 {
            return Err(CoreError::invalid("nodes", "at least 4 nodes per panel"));
        }
        if self.panels == 0 {
            return Err(CoreError::invalid("panels", "at least one panel"));
        }
        if self.trunc.is_nan() || self.trunc <= 0.0 {
            return Err(CoreError::invalid("trunc", "must be positive"));
        }
        Ok(())
    }
}

/// Parameters of the generalized one-particle integral.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TauParams {
    pub t1: Vec<f64>,
    pub t2: Vec<f64>,
    pub c11: Vec<f64>,
}

impl TauParams {
    /// The locus with `t1 = 0`, where the integrand is the unnormalised
    /// one-particle density. A single time gives the stationary law.
    pub fn locus(grid: &TimeGrid) -> Result<Self, CoreError> {
        let m = grid.m();
        if m == 0 {
            return Ok(TauParams {
                t1: vec![0.0],
                t2: vec![-1.0],
                c11: vec![],
            });
        }
        let l = build_locus(grid)?;
        Ok(TauParams {
            t1: vec![0.0; m + 1],
            t2: l.t2,
            c11: l.c11,
        })
    }

    pub fn slices(&self) -> usize {
        self.t2.len()
    }

    fn check_shape(&self) -> Result<(), CoreError> {
        let k = self.t2.len();
        if k == 0 || self.t1.len() != k || self.c11.len() + 1 != k {
            return Err(CoreError::invalid(
                "params",
                format!(
                    "inconsistent lengths t1={} t2={} c11={}",
                    self.t1.len(),
                    self.t2.len(),
                    self.c11.len()
                ),
            ));
        }
        Ok(())
    }

    /// Hessian `H` of the exponent: diagonal `2 t2`, off-diagonal `c11`.
    pub fn hessian(&self) -> DMatrix<f64> {
        let k = self.t2.len();
        DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                2.0 * self.t2[i]
            } else if i + 1 == j {
                self.c11[i]
            } else if j + 1 == i {
                self.c11[j]
            } else {
                0.0
            }
        })
    }

    /// Negative definiteness via the leading principal minors of `-H`,
    /// computed by the tridiagonal recurrence.
    pub fn is_convergent(&self) -> bool {
        let mut prev = 1.0;
        let mut cur = -2.0 * self.t2[0];
        if cur <= 0.0 {
            return false;
        }
        for k in 1..self.t2.len() {
            let next = -2.0 * self.t2[k] * cur - self.c11[k - 1] * self.c11[k - 1] * prev;
            if next <= 0.0 {
                return false;
            }
            prev = cur;
            cur = next;
        }
        true
    }

    /// Mean and marginal standard deviations of the Gaussian envelope
    /// `exp(t1 x + x^T H x / 2)`.
    pub fn envelope(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        if !self.is_convergent() {
            return None;
        }
        let cov = (-self.hessian()).try_inverse()?;
        let t1 = nalgebra::DVector::from_column_slice(&self.t1);
        let mu = &cov * t1;
        let sd = (0..self.t2.len()).map(|i| cov[(i, i)].sqrt()).collect();
        Some((mu.iter().copied().collect(), sd))
    }

    /// Closed form of the integral over the whole space.
    pub fn full_space_log(&self) -> Result<f64, CoreError> {
        self.check_shape()?;
        if !self.is_convergent() {
            return Err(CoreError::numerical("divergent integral"));
        }
        let neg = -self.hessian();
        let k = self.t2.len() as f64;
        let det = neg.clone().determinant();
        let inv = neg
            .try_inverse()
            .ok_or_else(|| CoreError::numerical("singular quadratic form"))?;
        let t1 = nalgebra::DVector::from_column_slice(&self.t1);
        let quad = (t1.transpose() * inv * &t1)[(0, 0)];
        Ok(0.5 * k * (2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() + 0.5 * quad)
    }
}

/// `sign * exp(log)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignedLog {
    pub sign: f64,
    pub log: f64,
}

impl SignedLog {
    pub const ZERO: SignedLog = SignedLog {
        sign: 0.0,
        log: f64::NEG_INFINITY,
    };

    pub fn value(self) -> f64 {
        if self.sign == 0.0 {
            0.0
        } else {
            self.sign * self.log.exp()
        }
    }

    fn sum(items: impl Iterator<Item = SignedLog> + Clone) -> SignedLog {
        let peak = items
            .clone()
            .filter(|s| s.sign != 0.0)
            .map(|s| s.log)
            .fold(f64::NEG_INFINITY, f64::max);
        if peak == f64::NEG_INFINITY {
            return SignedLog::ZERO;
        }
        let total: f64 = items
            .filter(|s| s.sign != 0.0)
            .map(|s| s.sign * (s.log - peak).exp())
            .sum();
        if total == 0.0 {
            SignedLog::ZERO
        } else {
            SignedLog {
                sign: total.signum(),
                log: peak + total.abs().ln(),
            }
        }
    }
}

/// Nodes and weights on one slice.
#[derive(Clone, Debug)]
pub(crate) struct Rule {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

/// Composite rule on a window, infinite ends cut at the envelope and finite
/// components clipped to it.
pub(crate) fn slice_rule(
    window: &IntervalUnion,
    envelope: Option<(f64, f64)>,
    spec: &QuadratureSpec,
    panels: usize,
    gl: &GaussLegendre,
) -> Result<Rule, CoreError> {
    let mut x = Vec::new();
    let mut w = Vec::new();
    for (a, b) in window.intervals() {
        let (lo_cut, hi_cut) = match envelope {
            Some((mu, sd)) => (mu - spec.trunc * sd, mu + spec.trunc * sd),
            None => (f64::NEG_INFINITY, f64::INFINITY),
        };
        let lo = a.finite().map_or(lo_cut, |v| v.max(lo_cut));
        let hi = b.finite().map_or(hi_cut, |v| v.min(hi_cut));
        if !lo.is_finite() || !hi.is_finite() {
            return Err(CoreError::numerical("divergent integral"));
        }
        if hi <= lo {
            continue;
        }
        let (px, pw) = gl.composite(lo, hi, panels);
        x.extend(px);
        w.extend(pw);
    }
    Ok(Rule { x, w })
}

/// The chain integral with polynomial factors `x_0^a x_m^b` on the given
/// rules.
pub(crate) fn chain_log(params: &TauParams, rules: &[Rule], a: u32, b: u32) -> SignedLog {
    let k = params.t2.len();
    let unary = |l: usize, x: f64| params.t1[l] * x + params.t2[l] * x * x;
    let power = |x: f64, p: u32| -> SignedLog {
        if p == 0 {
            SignedLog {
                sign: 1.0,
                log: 0.0,
            }
        } else if x == 0.0 {
            SignedLog::ZERO
        } else {
            SignedLog {
                sign: x.signum().powi(p as i32),
                log: p as f64 * x.abs().ln(),
            }
        }
    };
    let mut v: Vec<SignedLog> = rules[0]
        .x
        .iter()
        .zip(&rules[0].w)
        .map(|(x, w)| {
            let f = power(*x, a);
            SignedLog {
                sign: f.sign,
                log: f.log + w.ln() + unary(0, *x),
            }
        })
        .collect();
    for l in 1..k {
        let c = params.c11[l - 1];
        let prev_x = &rules[l - 1].x;
        v = rules[l]
            .x
            .iter()
            .zip(&rules[l].w)
            .map(|(y, w)| {
                let s = SignedLog::sum(v.iter().zip(prev_x).map(|(vx, x)| SignedLog {
                    sign: vx.sign,
                    log: vx.log + c * x * y,
                }));
                SignedLog {
                    sign: s.sign,
                    log: s.log + w.ln() + unary(l, *y),
                }
            })
            .collect();
    }
    let last = &rules[k - 1].x;
    SignedLog::sum(v.iter().zip(last).map(|(vy, y)| {
        let f = power(*y, b);
        SignedLog {
            sign: vy.sign * f.sign,
            log: vy.log + f.log,
        }
    }))
}

pub(crate) fn rules_for(
    params: &TauParams,
    windows: &[IntervalUnion],
    spec: &QuadratureSpec,
    panels: usize,
) -> Result<Vec<Rule>, CoreError> {
    params.check_shape()?;
    if windows.len() != params.slices() {
        return Err(CoreError::invalid(
            "windows",
            "one window per slice required",
        ));
    }
    let unbounded = windows.iter().any(|w| {
        w.endpoints().first().is_some_and(|e| e.finite().is_none())
            || w.endpoints().last().is_some_and(|e| e.finite().is_none())
    });
    let env = params.envelope();
    if unbounded && env.is_none() {
        return Err(CoreError::numerical("divergent integral"));
    }
    let gl = GaussLegendre::new(spec.nodes);
    windows
        .iter()
        .enumerate()
        .map(|(l, w)| {
            slice_rule(
                w,
                env.as_ref().map(|(mu, sd)| (mu[l], sd[l])),
                spec,
                panels,
                &gl,
            )
        })
        .collect()
}

/// Log of the one-particle integral at a fixed panel count.
pub fn log_tau_fixed(
    params: &TauParams,
    windows: &[IntervalUnion],
    spec: &QuadratureSpec,
    panels: usize,
) -> Result<SignedLog, CoreError> {
    let rules = rules_for(params, windows, spec, panels)?;
    if rules.iter().any(|r| r.x.is_empty()) {
        return Ok(SignedLog::ZERO);
    }
    Ok(chain_log(params, &rules, 0, 0))
}

/// `log det M` for two particles, `M_ab = chain(x_0^a x_m^b)`.
pub fn log_moment_det(
    params: &TauParams,
    windows: &[IntervalUnion],
    spec: &QuadratureSpec,
    panels: usize,
) -> Result<SignedLog, CoreError> {
    let rules = rules_for(params, windows, spec, panels)?;
    if rules.iter().any(|r| r.x.is_empty()) {
        return Ok(SignedLog::ZERO);
    }
    let m: Vec<SignedLog> = [(0, 0), (1, 1), (0, 1), (1, 0)]
        .iter()
        .map(|&(a, b)| chain_log(params, &rules, a, b))
        .collect();
    let prod = |x: SignedLog, y: SignedLog| SignedLog {
        sign: x.sign * y.sign,
        log: x.log + y.log,
    };
    let pos = prod(m[0], m[1]);
    let neg = prod(m[2], m[3]);
    Ok(SignedLog::sum(
        [
            pos,
            SignedLog {
                sign: -neg.sign,
                log: neg.log,
            },
        ]
        .into_iter(),
    ))
}

fn cache() -> &'static Mutex<HashMap<Vec<u64>, SignedLog>> {
    static CACHE: OnceLock<Mutex<HashMap<Vec<u64>, SignedLog>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Whole-space normaliser of the unnormalised density, cached per
/// `(n, grid, discretisation)` since it does not depend on the windows.
fn log_normaliser(
    n: usize,
    params: &TauParams,
    spec: &QuadratureSpec,
    panels: usize,
) -> Result<SignedLog, CoreError> {
    if n == 1 {
        return Ok(SignedLog {
            sign: 1.0,
            log: params.full_space_log()?,
        });
    }
    let mut key: Vec<u64> = vec![
        n as u64,
        spec.nodes as u64,
        panels as u64,
        spec.trunc.to_bits(),
    ];
    key.extend(params.t2.iter().chain(&params.c11).map(|x| x.to_bits()));
    if let Some(v) = cache().lock().expect("cache lock").get(&key) {
        return Ok(*v);
    }
    let full = vec![IntervalUnion::full(); params.slices()];
    let v = log_moment_det(params, &full, spec, panels)?;
    cache().lock().expect("cache lock").insert(key, v);
    Ok(v)
}

/// `log P_n` at a fixed discretisation; the smooth field used for finite
/// differences.
pub fn log_probability_fixed(
    n: usize,
    grid: &TimeGrid,
    windows: &WindowFamily,
    spec: &QuadratureSpec,
    panels: usize,
) -> Result<f64, CoreError> {
    let params = TauParams::locus(grid)?;
    let num = match n {
        1 => log_tau_fixed(&params, windows.windows(), spec, panels)?,
        2 => log_moment_det(&params, windows.windows(), spec, panels)?,
        _ => return Err(CoreError::Unsupported(format!("quadrature for n = {n}"))),
    };
    if num.sign <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let den = log_normaliser(n, &params, spec, panels)?;
    Ok(num.log - den.log)
}

/// Result of an adaptive quadrature.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuadratureResult {
    pub estimate: ProbEstimate,
    /// Panels per window component at convergence.
    pub panels: usize,
}

/// Panel doubling until successive values agree to `spec.tol`.
pub fn joint_probability_quadrature(
    n: usize,
    grid: &TimeGrid,
    windows: &WindowFamily,
    spec: &QuadratureSpec,
) -> Result<QuadratureResult, CoreError> {
    spec.validate()?;
    if !(1..=2).contains(&n) {
        return Err(CoreError::Unsupported(format!("quadrature for n = {n}")));
    }
    if windows.len() != grid.times().len() {
        return Err(CoreError::invalid(
            "windows",
            "one window per time required",
        ));
    }
    let mut panels = spec.panels;
    let mut prev = log_probability_fixed(n, grid, windows, spec, panels)?.exp();
    let mut prev_err = f64::INFINITY;
    let mut growth = 0;
    for _ in 0..spec.max_doublings {
        panels *= 2;
        let value = log_probability_fixed(n, grid, windows, spec, panels)?.exp();
        let err = (value - prev).abs();
        if err <= spec.tol * value.abs().max(1e-300) || err <= 4.0 * f64::EPSILON {
            return Ok(QuadratureResult {
                estimate: ProbEstimate {
                    value: value.clamp(0.0, 1.0),
                    stderr: err,
                    method: "chain-quadrature".into(),
                    samples: 0,
                },
                panels,
            });
        }
        if err > prev_err {
            growth += 1;
            if growth >= 2 {
                return Err(CoreError::numerical(format!(
                    "panel doubling diverges: error {err:.3e} after {panels} panels"
                )));
            }
        }
        prev_err = err;
        prev = value;
    }
    Err(CoreError::numerical(format!(
        "panel doubling did not reach {:.1e} within {} doublings (last change {prev_err:.3e})",
        spec.tol, spec.max_doublings
    )))
}

/// Scalar OU kernel `e^{-(y - c x)^2 / (1 - c^2)} / sqrt(pi (1 - c^2))`.
pub fn ou_kernel(c: f64, x: f64, y: f64) -> f64 {
    let v = 1.0 - c * c;
    (-(y - c * x) * (y - c * x) / v).exp() / (std::f64::consts::PI * v).sqrt()
}

/// Multi-time density at `points[l]` (one vector of `n` values per time),
/// normalised over unordered configurations.
pub fn joint_density(n: usize, grid: &TimeGrid, points: &[Vec<f64>]) -> Result<f64, CoreError> {
    JointDensity::new(n, grid)?.eval(points)
}

/// A density with its normalising constant computed once.
#[derive(Clone, Debug)]
pub struct JointDensity {
    n: usize,
    decays: Vec<f64>,
    /// `1 / C`.
    scale: f64,
}

impl JointDensity {
    pub fn new(n: usize, grid: &TimeGrid) -> Result<Self, CoreError> {
        let decays = grid.decays();
        let scale = match n {
            1 => 1.0 / std::f64::consts::PI.sqrt(),
            2 => {
                let params = TauParams::locus(grid)?;
                let norm = log_normaliser(2, &params, &QuadratureSpec::default(), 16)?;
                let slices = grid.times().len() as f64;
                1.0 / (norm.log.exp() * 2f64.powf(slices))
            }
            _ => return Err(CoreError::Unsupported(format!("density for n = {n}"))),
        };
        Ok(JointDensity { n, decays, scale })
    }

    pub fn eval(&self, points: &[Vec<f64>]) -> Result<f64, CoreError> {
        let n = self.n;
        if points.len() != self.decays.len() + 1 || points.iter().any(|p| p.len() != n) {
            return Err(CoreError::invalid(
                "points",
                "one n-vector per time required",
            ));
        }
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(CoreError::invalid("points", "values must be finite"));
        }
        if n == 1 {
            let x0 = points[0][0];
            let mut p = (-x0 * x0).exp() * self.scale;
            for (l, cl) in self.decays.iter().enumerate() {
                p *= ou_kernel(*cl, points[l][0], points[l + 1][0]);
            }
            return Ok(p);
        }
        // Two particles: Vandermonde factors at both ends and an explicit
        // 2x2 determinant of unnormalised kernels for every step.
        let kt = |c: f64, x: f64, y: f64| (-(y - c * x) * (y - c * x) / (1.0 - c * c)).exp();
        let v = |p: &[f64]| p[1] - p[0];
        let first = &points[0];
        let last = &points[points.len() - 1];
        let mut p = v(first) * v(last) * (-(first[0] * first[0] + first[1] * first[1])).exp();
        for (l, cl) in self.decays.iter().enumerate() {
            let (x, y) = (&points[l], &points[l + 1]);
            p *= kt(*cl, x[0], y[0]) * kt(*cl, x[1], y[1])
                - kt(*cl, x[0], y[1]) * kt(*cl, x[1], y[0]);
        }
        Ok(p * self.scale)
    }
}
