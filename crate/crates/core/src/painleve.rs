//! Tracy-Widom `F_2` from the Hastings-McLeod solution of Painlevé II,
//! `q'' = s q + 2 q^3`, integrated backwards from `s0 = 8` with Airy data.

use serde::Serialize;

use crate::airy::airy_ai;
use crate::gauss::GaussLegendre;
use crate::{CoreError, ProbEstimate};

pub const S0: f64 = 8.0;
pub const DEFAULT_TOL: f64 = 1e-10;
/// Ratio between the per-step tolerance and the requested tolerance.
const STEP_TOL_FACTOR: f64 = 1e-3;

/// Embedded Dormand-Prince 5(4) pair for a two-component system.
struct DormandPrince {
    rtol: f64,
    atol: f64,
    min_step: f64,
}

type State = [f64; 2];

fn rhs(s: f64, y: State) -> State {
    [y[1], s * y[0] + 2.0 * y[0] * y[0] * y[0]]
}

fn axpy(y: State, h: f64, terms: &[(f64, State)]) -> State {
    let mut out = y;
    for (c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

impl DormandPrince {
    /// One trial step; returns the fifth-order solution and the error norm.
    fn step(&self, s: f64, y: State, h: f64) -> (State, f64) {
        let k1 = rhs(s, y);
        let k2 = rhs(s + h / 5.0, axpy(y, h, &[(1.0 / 5.0, k1)]));
        let k3 = rhs(
            s + 3.0 * h / 10.0,
            axpy(y, h, &[(3.0 / 40.0, k1), (9.0 / 40.0, k2)]),
        );
        let k4 = rhs(
            s + 4.0 * h / 5.0,
            axpy(
                y,
                h,
                &[(44.0 / 45.0, k1), (-56.0 / 15.0, k2), (32.0 / 9.0, k3)],
            ),
        );
        let k5 = rhs(
            s + 8.0 * h / 9.0,
            axpy(
                y,
                h,
                &[
                    (19372.0 / 6561.0, k1),
                    (-25360.0 / 2187.0, k2),
                    (64448.0 / 6561.0, k3),
                    (-212.0 / 729.0, k4),
                ],
            ),
        );
        let k6 = rhs(
            s + h,
            axpy(
                y,
                h,
                &[
                    (9017.0 / 3168.0, k1),
                    (-355.0 / 33.0, k2),
                    (46732.0 / 5247.0, k3),
                    (49.0 / 176.0, k4),
                    (-5103.0 / 18656.0, k5),
                ],
            ),
        );
        let y5 = axpy(
            y,
            h,
            &[
                (35.0 / 384.0, k1),
                (500.0 / 1113.0, k3),
                (125.0 / 192.0, k4),
                (-2187.0 / 6784.0, k5),
                (11.0 / 84.0, k6),
            ],
        );
        let k7 = rhs(s + h, y5);
        let y4 = axpy(
            y,
            h,
            &[
                (5179.0 / 57600.0, k1),
                (7571.0 / 16695.0, k3),
                (393.0 / 640.0, k4),
                (-92097.0 / 339200.0, k5),
                (187.0 / 2100.0, k6),
                (1.0 / 40.0, k7),
            ],
        );
        let mut err: f64 = 0.0;
        for i in 0..2 {
            let scale = self.atol + self.rtol * y[i].abs().max(y5[i].abs());
            err = err.max((y5[i] - y4[i]).abs() / scale);
        }
        (y5, err)
    }

    /// Integrate from `(s, y)` through `targets` (monotone in the direction
    /// of integration), landing exactly on each target.
    fn integrate(
        &self,
        mut s: f64,
        mut y: State,
        targets: &[f64],
    ) -> Result<Vec<State>, CoreError> {
        let mut out = Vec::with_capacity(targets.len());
        let backwards = targets.iter().any(|t| *t < s);
        let mut h: f64 = if backwards { -0.01 } else { 0.01 };
        for &target in targets {
            while (target - s).abs() > 0.0 {
                let remaining = target - s;
                let mut trial = h;
                let mut last = false;
                if trial.abs() >= remaining.abs() {
                    trial = remaining;
                    last = true;
                }
                let (y_new, err) = self.step(s, y, trial);
                if !err.is_finite() || y_new.iter().any(|v| !v.is_finite() || v.abs() > 1e8) {
                    return Err(CoreError::numerical(format!(
                        "Painlevé II solution blew up near s = {s}"
                    )));
                }
                if err <= 1.0 {
                    s = if last { target } else { s + trial };
                    y = y_new;
                }
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                if !(last && err <= 1.0) {
                    h = trial * factor;
                }
                if h.abs() < self.min_step {
                    return Err(CoreError::numerical(format!(
                        "step rejection cascade near s = {s}"
                    )));
                }
            }
            out.push(y);
        }
        Ok(out)
    }
}

/// Samples of the Hastings-McLeod solution.
#[derive(Clone, Debug, Serialize)]
pub struct TwOracle {
    pub s: Vec<f64>,
    pub q: Vec<f64>,
    pub q_prime: Vec<f64>,
}

fn seed() -> Result<State, CoreError> {
    let a = airy_ai(S0)?;
    Ok([a.ai, a.ai_prime])
}

impl TwOracle {
    /// Solve at the given points, which must lie below `s0`; any order.
    pub fn solve(points: &[f64], tol: f64) -> Result<Self, CoreError> {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|a, b| points[*b].total_cmp(&points[*a]));
        let sorted: Vec<f64> = order.iter().map(|&i| points[i]).collect();
        if sorted.first().is_some_and(|s| *s > S0) {
            return Err(CoreError::invalid("s", "points must not exceed s0 = 8"));
        }
        // Local errors are amplified roughly by exp((2 sqrt 2 / 3) |s|^{3/2})
        // once s is negative, so the step tolerance sits well below the
        // target.
        let rtol = tol * STEP_TOL_FACTOR;
        let dp = DormandPrince {
            rtol,
            atol: rtol * 1e-10,
            min_step: 1e-12,
        };
        let states = dp.integrate(S0, seed()?, &sorted)?;
        let mut q = vec![0.0; points.len()];
        let mut qp = vec![0.0; points.len()];
        for (k, &i) in order.iter().enumerate() {
            q[i] = states[k][0];
            qp[i] = states[k][1];
        }
        Ok(TwOracle {
            s: points.to_vec(),
            q,
            q_prime: qp,
        })
    }
}

/// `int_u^inf (s - u) q(s)^2 ds` with `panel` wide Gauss-Legendre panels.
fn log_f2(u: f64, tol: f64, panel: f64, gl: &GaussLegendre) -> Result<f64, CoreError> {
    let panels = ((S0 - u) / panel).ceil().max(1.0) as usize;
    let (xs, ws) = gl.composite(u, S0, panels);
    let sol = TwOracle::solve(&xs, tol)?;
    let body: f64 = xs
        .iter()
        .zip(&ws)
        .zip(&sol.q)
        .map(|((s, w), q)| w * (s - u) * q * q)
        .sum();
    // Beyond s0 the solution is Airy to within Ai(s0)^3.
    let (ts, tw) = gl.composite(S0, 20.0, 12);
    let mut tail = 0.0;
    for (s, w) in ts.iter().zip(&tw) {
        let a = airy_ai(*s)?.ai;
        tail += w * (s - u) * a * a;
    }
    Ok(-(body + tail))
}

/// `F_2(u)` for `u` in `[-10, 6]`. The error estimate compares against a
/// run with a tenfold tighter tolerance and halved panels; it grows sharply
/// below `u = -8`, where the backward problem is ill-conditioned.
pub fn tracy_widom_f2(u: f64) -> Result<ProbEstimate, CoreError> {
    tracy_widom_f2_with(u, DEFAULT_TOL)
}

pub fn tracy_widom_f2_with(u: f64, tol: f64) -> Result<ProbEstimate, CoreError> {
    if !(-10.0..=6.0).contains(&u) {
        return Err(CoreError::invalid("u", format!("{u} outside [-10, 6]")));
    }
    let gl = GaussLegendre::new(12);
    let coarse = log_f2(u, tol, 0.5, &gl)?.exp();
    let fine = log_f2(u, tol * 1e-1, 0.25, &gl)?.exp();
    Ok(ProbEstimate {
        value: coarse,
        stderr: (coarse - fine).abs(),
        method: "painleve-ii".into(),
        samples: 0,
    })
}
