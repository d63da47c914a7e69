//! The Airy function and the extended Airy kernel.
//!
//! `Ai` is evaluated by its Maclaurin series for `|x| <= 8` and by the
//! classical asymptotic expansions beyond. The series cancels heavily away
//! from the origin (its terms reach about `e^{15}` at `|x| = 8` while
//! `Ai(8)` is about `5e-8`), so it is summed in double-double arithmetic.

use std::sync::OnceLock;

use serde::Serialize;

use crate::dd::DD;
use crate::gauss::GaussLegendre;
use crate::CoreError;

/// `Ai(0)` split into leading and trailing doubles.
const AI0: DD = DD::new(0.3550280538878172, 2.05233632436212e-17);
/// `-Ai'(0)` split likewise.
const AIP0: DD = DD::new(0.2588194037928068, -2.522243111610832e-17);

/// Switch point between the power series and the asymptotic expansions.
pub const SEAM: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AiryValue {
    pub ai: f64,
    pub ai_prime: f64,
}

/// `Ai(x)` and `Ai'(x)` for `x` in `[-60, 200]`.
pub fn airy_ai(x: f64) -> Result<AiryValue, CoreError> {
    if !(-60.0..=200.0).contains(&x) {
        return Err(CoreError::invalid("x", format!("{x} outside [-60, 200]")));
    }
    Ok(airy_unchecked(x))
}

/// Same evaluation without the range check; the kernel integrals reach
/// further into the oscillatory region, where the expansion only improves.
pub(crate) fn airy_unchecked(x: f64) -> AiryValue {
    if x.abs() <= SEAM {
        airy_maclaurin(x)
    } else {
        airy_asymptotic(x)
    }
}

const TAYLOR_STEP: f64 = 1.0 / 16.0;
const TAYLOR_LO: f64 = -60.0;
const TAYLOR_HI: f64 = 16.0;
const TAYLOR_CENTRES: usize = 1217;

/// `Ai`, `Ai'` on the grid `-60 + k/16` up to 16, from the reference
/// evaluator.
fn taylor_table() -> &'static [AiryValue] {
    static TABLE: OnceLock<Vec<AiryValue>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..TAYLOR_CENTRES)
            .map(|k| airy_unchecked(TAYLOR_LO + k as f64 * TAYLOR_STEP))
            .collect()
    })
}

/// Fast evaluation for bulk kernel tables: on `[-60, 16]` a Taylor
/// expansion about the nearest cached grid point, with coefficients from
/// `a_{n+2} (n+2)(n+1) = c a_n + a_{n-1}`; elsewhere the reference path.
pub(crate) fn airy_fast(x: f64) -> AiryValue {
    if !(TAYLOR_LO..=TAYLOR_HI).contains(&x) {
        return airy_unchecked(x);
    }
    let k = ((x - TAYLOR_LO) / TAYLOR_STEP).round() as usize;
    let k = k.min(TAYLOR_CENTRES - 1);
    let c = TAYLOR_LO + k as f64 * TAYLOR_STEP;
    let base = taylor_table()[k];
    let d = x - c;
    if d == 0.0 {
        return base;
    }
    // Sliding window a_{n-1}, a_n, a_{n+1} with a_0 = Ai(c), a_1 = Ai'(c).
    let (mut am1, mut a0, mut a1) = (0.0, base.ai, base.ai_prime);
    let mut ai = a0 + a1 * d;
    let mut aip = a1;
    let mut dn = d;
    let tol = 1e-18 * (base.ai.abs() + base.ai_prime.abs() * TAYLOR_STEP);
    let mut quiet = 0;
    for n in 0..60u32 {
        let a2 = (c * a0 + am1) / (((n + 2) * (n + 1)) as f64);
        let dterm = (n + 2) as f64 * a2 * dn;
        dn *= d;
        let term = a2 * dn;
        aip += dterm;
        ai += term;
        if term.abs() <= tol && dterm.abs() * TAYLOR_STEP <= tol {
            quiet += 1;
            if quiet == 2 {
                break;
            }
        } else {
            quiet = 0;
        }
        am1 = a0;
        a0 = a1;
        a1 = a2;
    }
    AiryValue { ai, ai_prime: aip }
}

/// Power series `Ai = Ai(0) f - (-Ai'(0)) g` with the two standard
/// solutions `f = 1 + x^3/6 + ...`, `g = x + x^4/12 + ...`.
pub fn airy_maclaurin(x: f64) -> AiryValue {
    let x = DD::from_f64(x);
    let x3 = x * x * x;
    let (mut f, mut g, mut fp, mut gp) = (DD::ZERO, DD::ZERO, DD::ZERO, DD::ZERO);
    let mut tf = DD::from_f64(1.0);
    let mut tg = x;
    let mut tfp = x * x.div_f64(2.0);
    let mut tgp = DD::from_f64(1.0);
    f = f + tf;
    g = g + tg;
    gp = gp + tgp;
    let mut largest = 1.0f64;
    for k in 0..200 {
        let kf = k as f64;
        fp = fp + tfp;
        tf = (tf * x3).div_f64((3.0 * kf + 2.0) * (3.0 * kf + 3.0));
        tg = (tg * x3).div_f64((3.0 * kf + 3.0) * (3.0 * kf + 4.0));
        tfp = (tfp * x3).div_f64((3.0 * kf + 3.0) * (3.0 * kf + 5.0));
        tgp = (tgp * x3).div_f64((3.0 * kf + 1.0) * (3.0 * kf + 3.0));
        f = f + tf;
        g = g + tg;
        gp = gp + tgp;
        let t = tf
            .abs_hi()
            .max(tg.abs_hi())
            .max(tfp.abs_hi())
            .max(tgp.abs_hi());
        largest = largest.max(t);
        if t < 1e-34 * largest && k > 2 {
            break;
        }
    }
    let ai = AI0 * f - AIP0 * g;
    let aip = AI0 * fp - AIP0 * gp;
    AiryValue {
        ai: ai.to_f64(),
        ai_prime: aip.to_f64(),
    }
}

/// Coefficients `u_k` and `v_k` of the asymptotic expansions.
fn uv(k_max: usize) -> (Vec<f64>, Vec<f64>) {
    let mut u = vec![1.0];
    let mut v = vec![1.0];
    for k in 1..=k_max {
        let kf = k as f64;
        let next = u[k - 1] * (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0)
            / ((2.0 * kf - 1.0) * 216.0 * kf);
        u.push(next);
        v.push(-next * (6.0 * kf + 1.0) / (6.0 * kf - 1.0));
    }
    (u, v)
}

/// Partial sums of `sum (-1)^k c_{2k+p} zeta^{-2k-p}` (alternating in pairs)
/// or `sum (-1)^k c_k zeta^{-k}`, truncated at the smallest term.
fn asym_sum(c: &[f64], zeta: f64, stride: usize, offset: usize) -> f64 {
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut sign = 1.0;
    let mut k = offset;
    let mut last = 0.0;
    while k < c.len() {
        let term = c[k] * zeta.powi(-(k as i32));
        if term.abs() > prev {
            // Divergence has set in: replace the smallest term by half of
            // itself, which halves the error of an alternating tail.
            return sum - 0.5 * last;
        }
        sum += sign * term;
        last = sign * term;
        prev = term.abs();
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
        sign = -sign;
        k += stride;
    }
    sum
}

/// Asymptotic expansions for large `|x|`.
pub fn airy_asymptotic(x: f64) -> AiryValue {
    let (u, v) = uv(60);
    let z = x.abs();
    let zeta = 2.0 / 3.0 * z * z.sqrt();
    let q = z.powf(0.25);
    let sqpi = std::f64::consts::PI.sqrt();
    if x > 0.0 {
        let e = (-zeta).exp();
        AiryValue {
            ai: e / (2.0 * sqpi * q) * asym_sum(&u, zeta, 1, 0),
            ai_prime: -q * e / (2.0 * sqpi) * asym_sum(&v, zeta, 1, 0),
        }
    } else {
        let phase = zeta - std::f64::consts::FRAC_PI_4;
        let (s, c) = phase.sin_cos();
        let u_even = asym_sum(&u, zeta, 2, 0);
        let u_odd = asym_sum(&u, zeta, 2, 1);
        let v_even = asym_sum(&v, zeta, 2, 0);
        let v_odd = asym_sum(&v, zeta, 2, 1);
        AiryValue {
            ai: (c * u_even + s * u_odd) / (sqpi * q),
            ai_prime: q * (s * v_even - c * v_odd) / sqpi,
        }
    }
}

/// Argument beyond which `Ai` is below `1e-16`.
pub(crate) const AIRY_NEGLIGIBLE: f64 = 14.5;

/// Composite Gauss-Legendre rule for `z` in `[lo, hi]` whose panels shrink
/// with the local oscillation frequency of `Ai(w + z)`, where `w` is the
/// smallest argument that will be combined with `z`.
pub(crate) fn oscillation_rule(
    lo: f64,
    hi: f64,
    w: f64,
    gl: &GaussLegendre,
) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    let mut b = hi;
    while b > lo {
        let arg = (w + b).min(w + lo.max(b - 1.0));
        let width = if arg < -1.0 {
            (3.0 / (-arg).sqrt()).min(1.0)
        } else {
            1.0
        };
        let a = (b - width).max(lo);
        let (x, wt) = gl.on(a, b);
        xs.extend(x);
        ws.extend(wt);
        b = a;
    }
    (xs, ws)
}

/// Lower limit of the left-tail integral for the time gap `dt > 0`, from
/// `e^{-Z dt} / (pi sqrt(Z)) < 1e-16`.
pub(crate) fn left_tail_length(dt: f64) -> f64 {
    let mut z: f64 = 36.8 / dt;
    for _ in 0..20 {
        z = ((1e16 / std::f64::consts::PI).ln() - 0.5 * z.max(1.0).ln()) / dt;
        z = z.max(1.0);
    }
    z
}

/// The `(i, j)` entry of the extended Airy kernel for slices with times
/// `times[i]`, `times[j]`, by quadrature in `z`.
pub fn extended_kernel(
    i: usize,
    j: usize,
    x: f64,
    y: f64,
    times: &[f64],
) -> Result<f64, CoreError> {
    if i >= times.len() || j >= times.len() {
        return Err(CoreError::invalid(
            "i/j",
            "slice index outside the time grid",
        ));
    }
    let dt = times[i] - times[j];
    if i != j && dt == 0.0 {
        return Err(CoreError::invalid(
            "times",
            "distinct slices need distinct times",
        ));
    }
    let w = x.min(y);
    let integrand = |z: f64| {
        let a = airy_unchecked(x + z).ai;
        let b = airy_unchecked(y + z).ai;
        a * b
    };
    let mut previous: Option<f64> = None;
    for nodes in [12usize, 20, 32, 48] {
        let gl = GaussLegendre::new(nodes);
        let value = if dt >= 0.0 {
            let hi = (AIRY_NEGLIGIBLE - w).max(1.0);
            let (zs, ws) = oscillation_rule(0.0, hi, w, &gl);
            zs.iter()
                .zip(&ws)
                .map(|(z, wt)| wt * (-z * dt).exp() * integrand(*z))
                .sum::<f64>()
        } else {
            let len = left_tail_length(-dt);
            let (zs, ws) = oscillation_rule(-len, 0.0, w, &gl);
            -zs.iter()
                .zip(&ws)
                .map(|(z, wt)| wt * (z * -dt).exp() * integrand(*z))
                .sum::<f64>()
        };
        if let Some(p) = previous {
            if (value - p).abs() <= 1e-14 * (1.0 + value.abs()) {
                return Ok(value);
            }
        }
        previous = Some(value);
    }
    Err(CoreError::numerical(format!(
        "kernel quadrature did not settle at ({i}, {j}, {x}, {y})"
    )))
}

/// Closed form of the equal-time kernel.
pub fn airy_kernel_diagonal(x: f64, y: f64) -> f64 {
    airy_kernel_from_values(x, airy_unchecked(x), y, airy_unchecked(y))
}

/// The same closed form from precomputed `Ai`, `Ai'` at both arguments.
pub(crate) fn airy_kernel_from_values(x: f64, a: AiryValue, y: f64, b: AiryValue) -> f64 {
    if x == y {
        return a.ai_prime * a.ai_prime - x * a.ai * a.ai;
    }
    let d = x - y;
    if d.abs() < 1e-6 {
        // Expansion about the midpoint, from the closed antiderivatives of
        // `Ai'^2` and `s Ai^2`; the next term is O(d^4).
        let m = 0.5 * (x + y);
        let c = airy_fast(m);
        let (a, ap) = (c.ai, c.ai_prime);
        let k0 = ap * ap - m * a * a;
        return k0 + d * d * (2.0 * m * ap * ap - 2.0 * m * m * a * a + a * ap) / 12.0;
    }
    (a.ai * b.ai_prime - a.ai_prime * b.ai) / d
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    // Reference values computed independently in 50-digit arithmetic.
    const TABLE: &[(f64, f64, f64)] = &[
        (-60.0, 0.07778782447711558377, 1.4503455958642243777),
        (-20.0, -0.17640612707798468959, 0.8928628567364712384),
        (-8.5, -0.33029023763020887902, -0.032313348284639135873),
        (-8.0, -0.052705050356386202622, 0.93556093819830655103),
        (-7.0, 0.18428083525050563728, -0.77100816841012654773),
        (-5.0, 0.35076100902411431979, 0.32719281855444313679),
        (-1.0, 0.5355608832923521188, -0.010160567116645209395),
        (0.0, 0.35502805388781723926, -0.25881940379280679841),
        (0.5, 0.23169360648083348977, -0.22491053266468389314),
        (3.0, 0.0065911393574607191443, -0.011912976705951318474),
        (7.0, 7.4921288639971670808e-7, -2.0081508947387919912e-6),
        (8.0, 4.6922076160992316256e-8, -1.3414392979067865743e-7),
        (8.5, 1.0997009755195506509e-8, -3.2377254404476022559e-8),
        (20.0, 1.6916728686705403136e-27, -7.5863916257483549605e-27),
        (
            100.0,
            2.6344821520881844896e-291,
            -2.6351403616044099336e-290,
        ),
    ];

    #[test]
    fn reference_table() {
        for &(x, ai, aip) in TABLE {
            let v = airy_ai(x).unwrap();
            assert!(rel(v.ai, ai) < 1e-12, "Ai({x}) = {} vs {ai}", v.ai);
            assert!(
                rel(v.ai_prime, aip) < 1e-12,
                "Ai'({x}) = {} vs {aip}",
                v.ai_prime
            );
        }
    }

    #[test]
    fn range_is_enforced() {
        assert!(airy_ai(-60.5).is_err());
        assert!(airy_ai(200.5).is_err());
        assert!(airy_ai(200.0).unwrap().ai >= 0.0);
    }

    #[test]
    fn coefficients() {
        let (u, v) = uv(2);
        assert!((u[1] - 5.0 / 72.0).abs() < 1e-16);
        assert!((v[1] + 7.0 / 72.0).abs() < 1e-16);
        assert!((u[2] - 385.0 / 10368.0).abs() < 1e-16);
    }

    #[test]
    fn diagonal_kernel_is_symmetric() {
        for (x, y) in [(0.3, -1.2), (2.0, 5.0), (-4.0, -3.5)] {
            assert_eq!(airy_kernel_diagonal(x, y), airy_kernel_diagonal(y, x));
        }
    }

    #[test]
    fn seam_agreement() {
        let sqpi = std::f64::consts::PI.sqrt();
        for sign in [1.0, -1.0] {
            for k in 0..=80 {
                let x = 7.0 + 2.0 * k as f64 / 80.0;
                let a = airy_maclaurin(sign * x);
                let b = airy_asymptotic(sign * x);
                // Relative to the modulus in the oscillatory region, where
                // Ai itself has zeros.
                let (env, envp) = if sign > 0.0 {
                    (a.ai.abs(), a.ai_prime.abs())
                } else {
                    (1.0 / (sqpi * x.powf(0.25)), x.powf(0.25) / sqpi)
                };
                assert!(
                    (a.ai - b.ai).abs() <= 1e-12 * env,
                    "Ai seam at {}",
                    sign * x
                );
                assert!(
                    (a.ai_prime - b.ai_prime).abs() <= 1e-12 * envp,
                    "Ai' seam at {}",
                    sign * x
                );
            }
        }
    }

    /// `ln Gamma` by upward shift and the Stirling series.
    fn ln_gamma(z: f64) -> f64 {
        let mut shift = 0.0;
        let mut z = z;
        while z < 20.0 {
            shift -= z.ln();
            z += 1.0;
        }
        let inv = 1.0 / z;
        let inv2 = inv * inv;
        let series =
            inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)));
        shift + (z - 0.5) * z.ln() - z + 0.5 * (2.0 * std::f64::consts::PI).ln() + series
    }

    #[test]
    fn value_at_origin() {
        let oracle = (-(2.0 / 3.0) * 3f64.ln() - ln_gamma(2.0 / 3.0)).exp();
        assert!((oracle - 0.355028053887817).abs() < 1e-14);
        let v = airy_ai(0.0).unwrap();
        assert!(rel(v.ai, oracle) < 1e-13);
        let oracle_p = -(-(1.0 / 3.0) * 3f64.ln() - ln_gamma(1.0 / 3.0)).exp();
        assert!(rel(v.ai_prime, oracle_p) < 1e-13);
    }

    #[test]
    fn satisfies_the_airy_equation() {
        let h = 1e-3;
        for x in [-5.0, 0.0, 3.0] {
            let f = |t: f64| airy_ai(t).unwrap().ai;
            let second = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
            let rhs = x * f(x);
            assert!((second - rhs).abs() <= 1e-6 * (1.0 + rhs.abs()), "x={x}");
        }
    }

    #[test]
    fn derivative_is_consistent() {
        let h = 1e-4;
        for x in [-30.0, -9.0, -2.0, 1.0, 7.9, 8.1, 12.0] {
            let f = |t: f64| airy_ai(t).unwrap().ai;
            let fd = (f(x + h) - f(x - h)) / (2.0 * h);
            let d = airy_ai(x).unwrap().ai_prime;
            assert!((fd - d).abs() <= 1e-7 * (1.0 + d.abs()), "x={x}");
        }
    }

    #[test]
    fn right_envelope() {
        let x: f64 = 20.0;
        let env =
            (-(2.0 / 3.0) * x.powf(1.5)).exp() / (2.0 * std::f64::consts::PI.sqrt() * x.powf(0.25));
        assert!(rel(airy_ai(x).unwrap().ai, env) < 0.01);
    }

    #[test]
    fn kernel_quadrature_matches_closed_form() {
        let times = [0.0];
        for (x, y) in [
            (0.0, 1.0),
            (-3.0, -1.5),
            (2.0, 4.5),
            (-5.0, 6.0),
            (-1.0, -1.0),
        ] {
            let q = extended_kernel(0, 0, x, y, &times).unwrap();
            let c = airy_kernel_diagonal(x, y);
            assert!((q - c).abs() < 1e-13, "({x},{y}) {q} vs {c}");
        }
    }

    #[test]
    fn near_diagonal_expansion() {
        for m in [-3.0, 0.0, 2.0] {
            let d = 5e-7;
            let near = airy_kernel_diagonal(m + d / 2.0, m - d / 2.0);
            let q = extended_kernel(0, 0, m + d / 2.0, m - d / 2.0, &[0.0]).unwrap();
            assert!((near - q).abs() < 1e-14);
        }
    }

    #[test]
    fn kernel_decays_on_a_ray() {
        let times = [0.0, 1.0];
        let mut prev = f64::INFINITY;
        for k in 0..10 {
            let x = 5.0 + k as f64;
            let v = extended_kernel(1, 0, x, x + 0.5, &times).unwrap().abs();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn equal_times_rejected() {
        assert!(extended_kernel(0, 1, 0.0, 0.0, &[0.0, 0.0]).is_err());
    }

    /// The left-tail kernel through the full-line identity
    /// `int e^{dz} Ai(x+z) Ai(y+z) dz = exp(d^3/12 - (x+y)d/2 - (x-y)^2/(4d)) / sqrt(4 pi d)`,
    /// which leaves only a rapidly decaying right-tail integral.
    #[test]
    fn left_tail_matches_heat_kernel_identity() {
        let gl = GaussLegendre::new(24);
        for (dt, x, y) in [(0.7, 0.3, -1.1), (2.0, -2.0, 0.5), (0.25, 1.0, 1.0)] {
            let times = [0.0, dt];
            let k = extended_kernel(0, 1, x, y, &times).unwrap();
            let right = gl.integrate(0.0, 20.0, 40, |z| {
                (dt * z).exp() * airy_ai(x + z).unwrap().ai * airy_ai(y + z).unwrap().ai
            });
            let full = (dt.powi(3) / 12.0 - (x + y) * dt / 2.0 - (x - y) * (x - y) / (4.0 * dt))
                .exp()
                / (4.0 * std::f64::consts::PI * dt).sqrt();
            assert!(
                (k - (right - full)).abs() < 1e-12,
                "dt={dt}: {k} vs {}",
                right - full
            );
        }
    }

    #[test]
    fn fast_evaluator_matches_reference() {
        // Errors are measured against the local envelope
        // sqrt(Ai^2 + Ai'^2 / (1 + |x|)) in units of the phase-limited
        // rounding level of the reference itself (its exponent or phase
        // `2/3 |x|^{3/2}` carries a relative rounding error).
        let mut worst: f64 = 0.0;
        for i in 0..=20000 {
            let x = -60.0 + 78.0 * i as f64 / 20000.0;
            let r = airy_unchecked(x);
            let f = airy_fast(x);
            let s = 1.0 + x.abs();
            let env = (r.ai * r.ai + r.ai_prime * r.ai_prime / s).sqrt();
            let phase = 1.0 + (2.0 / 3.0) * x.abs().powf(1.5);
            let e =
                ((f.ai - r.ai).abs() + (f.ai_prime - r.ai_prime).abs() / s.sqrt()) / (env * phase);
            worst = worst.max(e);
        }
        assert!(worst < 2e-15, "{worst:e}");
    }
}
