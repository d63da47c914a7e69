//! Exact-transition sampling of the Hermitian Ornstein-Uhlenbeck process
//! and Monte Carlo estimates of the stationary Dyson joint probability.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::model::{TimeGrid, WindowFamily};
use crate::{CoreError, ProbEstimate};

/// Which entry kernel an OU step uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarianceClass {
    /// Diagonal entries: stationary variance `1/2`.
    Diag,
    /// Real or imaginary part of an off-diagonal entry: stationary variance `1/4`.
    OffDiag,
}

impl VarianceClass {
    fn stationary_variance(self) -> f64 {
        match self {
            VarianceClass::Diag => 0.5,
            VarianceClass::OffDiag => 0.25,
        }
    }
}

/// One exact OU step of duration `s` from `x_bar`.
pub fn ou_step_entry<R: Rng + ?Sized>(
    x_bar: f64,
    s: f64,
    class: VarianceClass,
    rng: &mut R,
) -> Result<f64, CoreError> {
    if s.is_nan() || s < 0.0 {
        return Err(CoreError::invalid("s", format!("negative duration {s}")));
    }
    if s == 0.0 {
        return Ok(x_bar);
    }
    let c = (-s).exp();
    let sd = ((1.0 - c * c) * class.stationary_variance()).sqrt();
    let z: f64 = rng.sample(StandardNormal);
    Ok(c * x_bar + sd * z)
}

/// Complex Hermitian matrix stored by real and imaginary parts, row-major.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HermitianState {
    pub n: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl HermitianState {
    pub fn zeros(n: usize) -> Self {
        HermitianState {
            n,
            re: vec![0.0; n * n],
            im: vec![0.0; n * n],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> (f64, f64) {
        (self.re[i * self.n + j], self.im[i * self.n + j])
    }

    /// Set `B_ij` and mirror `B_ji = conj(B_ij)`; the diagonal is real.
    pub fn set(&mut self, i: usize, j: usize, re: f64, im: f64) {
        let n = self.n;
        self.re[i * n + j] = re;
        self.re[j * n + i] = re;
        if i == j {
            self.im[i * n + i] = 0.0;
        } else {
            self.im[i * n + j] = im;
            self.im[j * n + i] = -im;
        }
    }

    pub fn is_hermitian(&self) -> bool {
        (0..self.n).all(|i| {
            (0..self.n).all(|j| {
                self.re[i * self.n + j] == self.re[j * self.n + i]
                    && self.im[i * self.n + j] == -self.im[j * self.n + i]
            })
        })
    }

    pub fn trace_sq(&self) -> f64 {
        self.re.iter().chain(&self.im).map(|x| x * x).sum()
    }

    /// Entrywise OU step of duration `s`.
    pub fn step<R: Rng + ?Sized>(&self, s: f64, rng: &mut R) -> Result<Self, CoreError> {
        let mut out = HermitianState::zeros(self.n);
        for i in 0..self.n {
            for j in i..self.n {
                let (re, im) = self.get(i, j);
                if i == j {
                    let v = ou_step_entry(re, s, VarianceClass::Diag, rng)?;
                    out.set(i, i, v, 0.0);
                } else {
                    let a = ou_step_entry(re, s, VarianceClass::OffDiag, rng)?;
                    let b = ou_step_entry(im, s, VarianceClass::OffDiag, rng)?;
                    out.set(i, j, a, b);
                }
            }
        }
        Ok(out)
    }

    /// Ascending eigenvalues. Cyclic Jacobi on the real symmetric embedding
    /// `[[A, -B], [B, A]]` of `A + iB`, whose spectrum is that of the
    /// Hermitian matrix with every eigenvalue doubled.
    pub fn eigenvalues(&self) -> Result<Vec<f64>, CoreError> {
        let n = self.n;
        if n == 1 {
            return Ok(vec![self.re[0]]);
        }
        let m = 2 * n;
        let mut a = vec![0.0; m * m];
        for i in 0..n {
            for j in 0..n {
                let (re, im) = self.get(i, j);
                a[i * m + j] = re;
                a[(i + n) * m + (j + n)] = re;
                a[i * m + (j + n)] = -im;
                a[(i + n) * m + j] = im;
            }
        }
        let mut ev = jacobi_eigenvalues(&mut a, m).map_err(|sweeps| {
            CoreError::numerical(format!(
                "Jacobi did not converge in {sweeps} sweeps for matrix re={:?} im={:?}",
                self.re, self.im
            ))
        })?;
        ev.sort_by(f64::total_cmp);
        Ok(ev.into_iter().step_by(2).collect())
    }
}

/// Cyclic Jacobi on a dense symmetric `m x m` matrix; returns the diagonal
/// once the off-diagonal norm is below `1e-12` times the Frobenius norm.
fn jacobi_eigenvalues(a: &mut [f64], m: usize) -> Result<Vec<f64>, usize> {
    const MAX_SWEEPS: usize = 100;
    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let target = 1e-12 * frob.max(f64::MIN_POSITIVE);
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..m)
            .flat_map(|i| (0..m).filter(move |j| *j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * m + j] * a[i * m + j])
            .sum::<f64>()
            .sqrt();
        if off <= target {
            return Ok((0..m).map(|i| a[i * m + i]).collect());
        }
        for p in 0..m {
            for q in p + 1..m {
                let apq = a[p * m + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * m + p];
                let aqq = a[q * m + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..m {
                    let akp = a[k * m + p];
                    let akq = a[k * m + q];
                    a[k * m + p] = c * akp - s * akq;
                    a[k * m + q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let apk = a[p * m + k];
                    let aqk = a[q * m + k];
                    a[p * m + k] = c * apk - s * aqk;
                    a[q * m + k] = s * apk + c * aqk;
                }
            }
        }
    }
    Err(MAX_SWEEPS)
}

/// A draw from the stationary law `P(B) ~ exp(-Tr B^2)`.
pub fn sample_stationary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> HermitianState {
    let mut b = HermitianState::zeros(n);
    for i in 0..n {
        for j in i..n {
            if i == j {
                let z: f64 = rng.sample(StandardNormal);
                b.set(i, i, z * 0.5f64.sqrt(), 0.0);
            } else {
                let x: f64 = rng.sample(StandardNormal);
                let y: f64 = rng.sample(StandardNormal);
                b.set(i, j, 0.5 * x, 0.5 * y);
            }
        }
    }
    b
}

/// Sorted eigenvalues at each observation time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EigenPath {
    pub slices: Vec<Vec<f64>>,
}

pub fn simulate_path<R: Rng + ?Sized>(
    n: usize,
    grid: &TimeGrid,
    rng: &mut R,
) -> Result<EigenPath, CoreError> {
    if n == 0 {
        return Err(CoreError::invalid("n", "particle count must be positive"));
    }
    let mut b = sample_stationary(n, rng);
    let mut slices = vec![b.eigenvalues()?];
    for s in grid.increments() {
        b = b.step(s, rng)?;
        slices.push(b.eigenvalues()?);
    }
    Ok(EigenPath { slices })
}

/// The generator for path `index`: one ChaCha stream per path, so results
/// do not depend on scheduling.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn path_inside(path: &EigenPath, windows: &WindowFamily) -> bool {
    path.slices
        .iter()
        .zip(windows.windows())
        .all(|(lams, w)| lams.iter().all(|x| w.contains(*x)))
}

/// Fraction of `samples` paths whose eigenvalues stay inside every window.
pub fn mc_joint_probability(
    n: usize,
    grid: &TimeGrid,
    windows: &WindowFamily,
    samples: u64,
    seed: u64,
) -> Result<ProbEstimate, CoreError> {
    if samples == 0 {
        return Err(CoreError::invalid("samples", "at least one sample"));
    }
    if windows.len() != grid.times().len() {
        return Err(CoreError::invalid(
            "windows",
            "one window per time required",
        ));
    }
    let hits = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<u64, CoreError> {
            let mut rng = path_rng(seed, i);
            let path = simulate_path(n, grid, &mut rng)?;
            Ok(path_inside(&path, windows) as u64)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let p = hits as f64 / samples as f64;
    Ok(ProbEstimate {
        value: p,
        stderr: (p * (1.0 - p) / samples as f64).sqrt(),
        method: "monte-carlo".into(),
        samples,
    })
}

/// The first `count` paths of the stream family, for sample dumps.
pub fn sample_paths(
    n: usize,
    grid: &TimeGrid,
    count: u64,
    seed: u64,
) -> Result<Vec<EigenPath>, CoreError> {
    (0..count)
        .into_par_iter()
        .map(|i| simulate_path(n, grid, &mut path_rng(seed, i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::IntervalUnion;

    #[test]
    fn zero_step_is_identity() {
        let mut rng = path_rng(1, 0);
        assert_eq!(
            ou_step_entry(1.25, 0.0, VarianceClass::Diag, &mut rng).unwrap(),
            1.25
        );
        assert!(ou_step_entry(1.0, -0.1, VarianceClass::Diag, &mut rng).is_err());
    }

    #[test]
    fn step_moments() {
        let mut rng = path_rng(3, 0);
        let n = 1_000_000;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for _ in 0..n {
            let x = ou_step_entry(3.0, 2f64.ln(), VarianceClass::Diag, &mut rng).unwrap();
            s1 += x;
            s2 += x * x;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((mean - 1.5).abs() < 4.0 * (0.375f64 / n as f64).sqrt());
        // Variance of the sample variance for a normal is 2 sigma^4 / n.
        assert!((var - 0.375).abs() < 4.0 * (2.0 * 0.375f64 * 0.375 / n as f64).sqrt());
    }

    #[test]
    fn long_step_reaches_stationarity() {
        let mut rng = path_rng(5, 0);
        let n = 200_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| ou_step_entry(10.0, 40.0, VarianceClass::Diag, &mut rng).unwrap())
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 * (0.5 / n as f64).sqrt());
        assert!((var - 0.5).abs() < 4.0 * (0.5f64 / n as f64).sqrt());
    }

    #[test]
    fn stationary_trace_moment() {
        let mut rng = path_rng(11, 0);
        let n = 200_000;
        let ts: Vec<f64> = (0..n)
            .map(|_| sample_stationary(2, &mut rng).trace_sq())
            .collect();
        let mean = ts.iter().sum::<f64>() / n as f64;
        let var = ts.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n as f64;
        assert!(
            (mean - 2.0).abs() < 4.0 * (var / n as f64).sqrt(),
            "E Tr B^2 = {mean}"
        );
    }

    #[test]
    fn hermitian_by_construction() {
        let mut rng = path_rng(2, 9);
        let b = sample_stationary(4, &mut rng);
        assert!(b.is_hermitian());
        assert!(b.step(0.3, &mut rng).unwrap().is_hermitian());
    }

    #[test]
    fn jacobi_on_known_matrix() {
        // [[2, i], [-i, 2]] has eigenvalues 1 and 3.
        let mut b = HermitianState::zeros(2);
        b.set(0, 0, 2.0, 0.0);
        b.set(1, 1, 2.0, 0.0);
        b.set(0, 1, 0.0, 1.0);
        let ev = b.eigenvalues().unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn eigenvalues_preserve_trace_and_norm() {
        let mut rng = path_rng(4, 4);
        for n in [2, 3, 5, 8] {
            let b = sample_stationary(n, &mut rng);
            let ev = b.eigenvalues().unwrap();
            let tr: f64 = (0..n).map(|i| b.get(i, i).0).sum();
            assert!((ev.iter().sum::<f64>() - tr).abs() < 1e-12);
            assert!((ev.iter().map(|x| x * x).sum::<f64>() - b.trace_sq()).abs() < 1e-11);
            assert!(ev.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn edge_of_large_matrices() {
        let n = 50;
        let lo = (2.0 * n as f64).sqrt() - 15.0 * (n as f64).powf(-1.0 / 6.0);
        let hi = (2.0 * n as f64).sqrt() + 15.0 * (n as f64).powf(-1.0 / 6.0);
        let trials = 100;
        let inside = (0..trials)
            .filter(|i| {
                let b = sample_stationary(n, &mut path_rng(8, *i));
                let top = *b.eigenvalues().unwrap().last().unwrap();
                top >= lo && top <= hi
            })
            .count();
        assert!(inside >= 99);
    }

    #[test]
    fn scalar_chain_lag_correlation() {
        let grid = TimeGrid::new(vec![0.0, 0.7]).unwrap();
        let n = 200_000u64;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for i in 0..n {
            let p = simulate_path(1, &grid, &mut path_rng(21, i)).unwrap();
            sxy += p.slices[0][0] * p.slices[1][0];
            sxx += p.slices[0][0] * p.slices[0][0];
        }
        let corr = sxy / sxx;
        assert!((corr - (-0.7f64).exp()).abs() < 4.0 / (n as f64).sqrt() * 1.5);
    }

    #[test]
    fn orthant_probability() {
        let t: f64 = 0.8;
        let grid = TimeGrid::new(vec![0.0, t]).unwrap();
        let w = WindowFamily::half_lines(&[0.0, 0.0]);
        let est = mc_joint_probability(1, &grid, &w, 200_000, 17).unwrap();
        let exact = 0.25 + (-t).exp().asin() / (2.0 * std::f64::consts::PI);
        assert!((est.value - exact).abs() < 4.0 * est.stderr);
    }

    #[test]
    fn single_time_half() {
        let grid = TimeGrid::new(vec![0.0]).unwrap();
        let est =
            mc_joint_probability(1, &grid, &WindowFamily::half_lines(&[0.0]), 100_000, 1).unwrap();
        assert!((est.value - 0.5).abs() < 4.0 * est.stderr);
    }

    #[test]
    fn full_windows_are_certain() {
        let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let w =
            WindowFamily::new(vec![IntervalUnion::full(), IntervalUnion::full()], &grid).unwrap();
        let est = mc_joint_probability(2, &grid, &w, 1000, 1).unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let grid = TimeGrid::new(vec![0.0, 0.5]).unwrap();
        let w = WindowFamily::half_lines(&[0.3, 0.1]);
        let a = mc_joint_probability(2, &grid, &w, 5000, 99).unwrap();
        let b = mc_joint_probability(2, &grid, &w, 5000, 99).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }
}
