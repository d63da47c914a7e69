//! Block Nyström discretisation of `det(I - chi K chi)` for the extended
//! Airy kernel, one block per observation time.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::airy::{
    airy_fast, airy_kernel_from_values, left_tail_length, oscillation_rule, AiryValue,
    AIRY_NEGLIGIBLE,
};
use crate::gauss::GaussLegendre;
use crate::model::{Endpoint, IntervalUnion, WindowFamily};
use crate::{CoreError, ProbEstimate};

pub const DEFAULT_NODES: usize = 80;
pub const DEFAULT_TRUNC: f64 = 12.0;
/// Gauss-Legendre order on each `z` panel of the off-diagonal blocks.
const Z_NODES: usize = 16;

/// Nodes and weights on the complement of one window.
#[derive(Clone, Debug, Serialize)]
pub struct SliceNodes {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelDiscretization {
    pub slices: Vec<SliceNodes>,
    /// Row offset of each slice in the block matrix.
    pub offsets: Vec<usize>,
    pub trunc: f64,
}

impl KernelDiscretization {
    /// Each component of each complement gets its own `n_nodes`-point rule;
    /// an unbounded component `[a, inf)` is cut at `a + trunc`.
    pub fn build(windows: &[IntervalUnion], n_nodes: usize, trunc: f64) -> Result<Self, CoreError> {
        if n_nodes < 4 {
            return Err(CoreError::invalid("nodes", "at least 4 nodes"));
        }
        if trunc <= 0.0 {
            return Err(CoreError::invalid("trunc", "must be positive"));
        }
        let gl = GaussLegendre::new(n_nodes);
        let mut slices = Vec::with_capacity(windows.len());
        let mut offsets = Vec::with_capacity(windows.len());
        let mut offset = 0;
        for (l, w) in windows.iter().enumerate() {
            if w.endpoints().first() != Some(&Endpoint::NegInf) && !w.is_empty() {
                return Err(CoreError::invalid(
                    format!("windows[{l}]"),
                    "the first endpoint must be -inf for edge-scaled probabilities",
                ));
            }
            let mut nodes = Vec::new();
            let mut weights = Vec::new();
            for (a, b) in w.complement().intervals() {
                let a = a.finite().ok_or_else(|| {
                    CoreError::invalid(format!("windows[{l}]"), "complement unbounded below")
                })?;
                let b = b.finite().unwrap_or(a + trunc);
                let (x, wt) = gl.on(a, b);
                nodes.extend(x);
                weights.extend(wt);
            }
            offsets.push(offset);
            offset += nodes.len();
            slices.push(SliceNodes { nodes, weights });
        }
        Ok(KernelDiscretization {
            slices,
            offsets,
            trunc,
        })
    }

    pub fn size(&self) -> usize {
        self.slices.iter().map(|s| s.nodes.len()).sum()
    }
}

/// `A[a][k] = Ai(x_a + z_k)`.
fn airy_table(xs: &[f64], zs: &[f64]) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = xs
        .par_iter()
        .map(|x| zs.iter().map(|z| airy_fast(x + z).ai).collect())
        .collect();
    DMatrix::from_fn(xs.len(), zs.len(), |a, k| rows[a][k])
}

/// The off-diagonal block `K_ij` on the nodes of slices `i` and `j`, with
/// `dt = t_i - t_j`.
fn cross_block(xi: &[f64], xj: &[f64], dt: f64) -> DMatrix<f64> {
    let gl = GaussLegendre::new(Z_NODES);
    let w = xi.iter().chain(xj).cloned().fold(f64::INFINITY, f64::min);
    let (zs, zw) = if dt > 0.0 {
        oscillation_rule(0.0, (AIRY_NEGLIGIBLE - w).max(1.0), w, &gl)
    } else {
        oscillation_rule(-left_tail_length(-dt), 0.0, w, &gl)
    };
    let omega: Vec<f64> = zs
        .iter()
        .zip(&zw)
        .map(|(z, wt)| {
            if dt > 0.0 {
                wt * (-z * dt).exp()
            } else {
                -wt * (z * -dt).exp()
            }
        })
        .collect();
    let ai = airy_table(xi, &zs);
    let aj = airy_table(xj, &zs);
    let scaled = DMatrix::from_fn(aj.nrows(), aj.ncols(), |b, k| aj[(b, k)] * omega[k]);
    ai * scaled.transpose()
}

/// The symmetrised Nyström matrix `W^{1/2} K W^{1/2}`.
pub fn kernel_matrix(
    times: &[f64],
    disc: &KernelDiscretization,
) -> Result<DMatrix<f64>, CoreError> {
    if times.len() != disc.slices.len() {
        return Err(CoreError::invalid("times", "one time per window required"));
    }
    let n = disc.size();
    let mut m = DMatrix::zeros(n, n);
    for (i, si) in disc.slices.iter().enumerate() {
        for (j, sj) in disc.slices.iter().enumerate() {
            if si.nodes.is_empty() || sj.nodes.is_empty() {
                continue;
            }
            let block = if i == j {
                let v: Vec<AiryValue> = si.nodes.iter().map(|x| airy_fast(*x)).collect();
                DMatrix::from_fn(si.nodes.len(), sj.nodes.len(), |a, b| {
                    airy_kernel_from_values(si.nodes[a], v[a], sj.nodes[b], v[b])
                })
            } else {
                let dt = times[i] - times[j];
                if dt == 0.0 {
                    return Err(CoreError::invalid(
                        "times",
                        "distinct slices need distinct times",
                    ));
                }
                cross_block(&si.nodes, &sj.nodes, dt)
            };
            for a in 0..si.nodes.len() {
                for b in 0..sj.nodes.len() {
                    m[(disc.offsets[i] + a, disc.offsets[j] + b)] =
                        si.weights[a].sqrt() * block[(a, b)] * sj.weights[b].sqrt();
                }
            }
        }
    }
    Ok(m)
}

/// `det(I - W^{1/2} K W^{1/2})` at a fixed discretisation.
pub fn fredholm_value(
    times: &[f64],
    windows: &[IntervalUnion],
    n_nodes: usize,
    trunc: f64,
) -> Result<f64, CoreError> {
    let disc = KernelDiscretization::build(windows, n_nodes, trunc)?;
    if disc.size() == 0 {
        return Ok(1.0);
    }
    let m = kernel_matrix(times, &disc)?;
    let n = m.nrows();
    let det = (DMatrix::identity(n, n) - m).lu().determinant();
    if !det.is_finite() {
        return Err(CoreError::numerical("non-finite determinant"));
    }
    Ok(det)
}

/// Edge-scaled joint probability with an error estimate from comparing
/// against half the nodes.
pub fn fredholm_determinant(
    times: &[f64],
    windows: &WindowFamily,
    n_nodes: usize,
    trunc: f64,
) -> Result<ProbEstimate, CoreError> {
    windows.airy_admissible()?;
    let value = fredholm_value(times, windows.windows(), n_nodes, trunc)?;
    let coarse = fredholm_value(times, windows.windows(), n_nodes.div_ceil(2).max(4), trunc)?;
    let err = (value - coarse).abs();
    if err > 1e-3 {
        return Err(CoreError::numerical(format!(
            "node doubling has not converged: {coarse} with {} nodes, {value} with {n_nodes}",
            n_nodes.div_ceil(2)
        )));
    }
    Ok(ProbEstimate {
        value,
        stderr: err,
        method: "fredholm-nystrom".into(),
        samples: 0,
    })
}
