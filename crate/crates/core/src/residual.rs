//! Finite-difference evaluation of differential operators on
//! log-probability fields, and the PDE residuals built from them.
//!
//! All stencils live on the integer lattice `point + h * k`. Values are
//! cached per lattice site so nested stencils share evaluations, and a
//! whole computation's support is prefetched in parallel before the
//! (cheap, sequential) assembly.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use rmtlab_symbolic::jet::Jet;
use rmtlab_symbolic::{wronskian, AiryForm, AiryOps, Context, DysonOps, JetExpr, Layout, NumOp};

use crate::fredholm::{fredholm_value, DEFAULT_NODES, DEFAULT_TRUNC};
use crate::model::{TimeGrid, WindowFamily};
use crate::quadrature::{log_probability_fixed, QuadratureSpec};
use crate::registry::LogProbField;
use crate::CoreError;

/// Central stencils of order 0..=3, offsets and weights before `1/h^k`.
const STENCILS: [&[(i32, f64)]; 4] = [
    &[(0, 1.0)],
    &[(-1, -0.5), (1, 0.5)],
    &[(-1, 1.0), (0, -2.0), (1, 1.0)],
    &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
];

/// Field values cached on the lattice `point + h * k`.
pub struct LatticeSample<'a> {
    field: &'a dyn LogProbField,
    names: Vec<String>,
    pub point: Vec<f64>,
    pub h: f64,
    cache: Mutex<HashMap<Vec<i32>, f64>>,
}

impl<'a> LatticeSample<'a> {
    pub fn new(field: &'a dyn LogProbField, point: &[f64], h: f64) -> Result<Self, CoreError> {
        let names = field.var_names();
        if point.len() != names.len() {
            return Err(CoreError::invalid(
                "point",
                format!("{} coordinates for {} variables", point.len(), names.len()),
            ));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(CoreError::invalid("h", "step must be positive"));
        }
        Ok(LatticeSample {
            field,
            names,
            point: point.to_vec(),
            h,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn coords(&self, k: &[i32]) -> Vec<f64> {
        self.point
            .iter()
            .zip(k)
            .map(|(x, &j)| x + self.h * j as f64)
            .collect()
    }

    fn compute(&self, k: &[i32]) -> Result<f64, CoreError> {
        let x = self.coords(k);
        if let Some(v) = self.field.invalid_var(&x) {
            return Err(CoreError::invalid(
                format!("stencil.{}", self.names[v]),
                format!(
                    "stencil point leaves the validity region ({} = {})",
                    self.names[v], x[v]
                ),
            ));
        }
        let y = self.field.log_prob(&x)?;
        if !y.is_finite() {
            return Err(CoreError::numerical(format!(
                "field is not finite at stencil point {:?}",
                x
            )));
        }
        Ok(y)
    }

    pub fn value(&self, k: &[i32]) -> Result<f64, CoreError> {
        if let Some(v) = self.cache.lock().expect("cache lock").get(k) {
            return Ok(*v);
        }
        let y = self.compute(k)?;
        self.cache.lock().expect("cache lock").insert(k.to_vec(), y);
        Ok(y)
    }

    /// Evaluates all missing sites in parallel.
    pub fn prefetch(&self, sites: impl IntoIterator<Item = Vec<i32>>) -> Result<(), CoreError> {
        let missing: Vec<Vec<i32>> = {
            let cache = self.cache.lock().expect("cache lock");
            let mut seen = std::collections::HashSet::new();
            sites
                .into_iter()
                .filter(|k| !cache.contains_key(k) && seen.insert(k.clone()))
                .collect()
        };
        let values: Vec<Result<f64, CoreError>> =
            missing.par_iter().map(|k| self.compute(k)).collect();
        let mut cache = self.cache.lock().expect("cache lock");
        for (k, v) in missing.into_iter().zip(values) {
            cache.insert(k, v?);
        }
        Ok(())
    }

    /// Number of distinct field evaluations so far.
    pub fn evaluations(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    /// Central-difference application of `op` at lattice site `center`
    /// with step `scale * h`.
    pub fn apply(&self, op: &NumOp, center: &[i32], scale: i32) -> Result<f64, CoreError> {
        apply_with(op, center, scale, self.h, |k| self.value(k))
    }
}

/// Tensor-product stencil of one multi-index: `(site, weight)` with the
/// `1/(scale h)^order` factor left out.
fn stencil(alpha: &[u8], center: &[i32], scale: i32) -> Result<Vec<(Vec<i32>, f64)>, CoreError> {
    let mut out = vec![(center.to_vec(), 1.0)];
    for (v, &e) in alpha.iter().enumerate() {
        if e == 0 {
            continue;
        }
        let st = STENCILS
            .get(e as usize)
            .ok_or_else(|| CoreError::Unsupported(format!("derivative order {e} > 3")))?;
        let mut next = Vec::with_capacity(out.len() * st.len());
        for (k, w) in &out {
            for &(o, wo) in st.iter() {
                let mut k2 = k.clone();
                k2[v] += o * scale;
                next.push((k2, w * wo));
            }
        }
        out = next;
    }
    Ok(out)
}

/// Lattice sites touched by `op` at `center`.
pub fn support(op: &NumOp, center: &[i32], scale: i32) -> Result<Vec<Vec<i32>>, CoreError> {
    let mut sites = Vec::new();
    for (alpha, _) in &op.terms {
        sites.extend(stencil(alpha, center, scale)?.into_iter().map(|(k, _)| k));
    }
    Ok(sites)
}

/// Applies `op` by central differences to lattice values given by `value`.
pub fn apply_with(
    op: &NumOp,
    center: &[i32],
    scale: i32,
    h: f64,
    value: impl Fn(&[i32]) -> Result<f64, CoreError>,
) -> Result<f64, CoreError> {
    let step = scale as f64 * h;
    let mut acc = 0.0;
    for (alpha, c) in &op.terms {
        let order: i32 = alpha.iter().map(|&e| e as i32).sum();
        let mut d = 0.0;
        for (k, w) in stencil(alpha, center, scale)? {
            d += w * value(&k)?;
        }
        acc += c * d / step.powi(order);
    }
    Ok(acc)
}

/// Central-difference application at `point` with step `h`; error `O(h^2)`.
pub fn apply_op_fd(
    op: &NumOp,
    field: &dyn LogProbField,
    point: &[f64],
    h: f64,
) -> Result<f64, CoreError> {
    let lat = LatticeSample::new(field, point, h)?;
    let center = vec![0; point.len()];
    lat.prefetch(support(op, &center, 1)?)?;
    lat.apply(op, &center, 1)
}

/// Richardson combination `(4 D(h/2) - D(h)) / 3`; error `O(h^4)`.
pub fn apply_op_fd_extrapolated(
    op: &NumOp,
    field: &dyn LogProbField,
    point: &[f64],
    h: f64,
) -> Result<f64, CoreError> {
    let lat = LatticeSample::new(field, point, h / 2.0)?;
    let center = vec![0; point.len()];
    let mut sites = support(op, &center, 1)?;
    sites.extend(support(op, &center, 2)?);
    lat.prefetch(sites)?;
    let fine = lat.apply(op, &center, 1)?;
    let coarse = lat.apply(op, &center, 2)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// One refinement level of a residual computation.
#[derive(Clone, Debug, Serialize)]
pub struct ResidualLevel {
    pub h: f64,
    /// Signed `lhs - rhs`.
    pub residual: f64,
    /// Named terms of the equation at this step.
    pub terms: Vec<(String, f64)>,
    pub evaluations: usize,
}

/// Field-accuracy cross-check at one stencil point.
#[derive(Clone, Debug, Serialize)]
pub struct FieldCheck {
    pub point: Vec<f64>,
    pub value: f64,
    /// `|value(N) - value(N/2)|`.
    pub error_estimate: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub model: String,
    pub vars: Vec<String>,
    pub point: Vec<f64>,
    pub levels: Vec<ResidualLevel>,
    pub h: Vec<f64>,
    /// `|residual|` per level.
    pub residual: Vec<f64>,
    /// Largest term magnitude per level.
    pub max_term: Vec<f64>,
    /// `residual[i] / residual[i + 1]`; one fewer than the levels.
    pub ratios: Vec<f64>,
    /// Richardson extrapolation (second order) of the signed residual
    /// from the two finest levels.
    pub richardson: Option<f64>,
    /// Propagated field noise in the residual at the finest level, when
    /// the field carries an error estimate.
    pub noise_floor: Option<f64>,
    pub field_checks: Vec<FieldCheck>,
    /// Every term sat below the field's error estimate: the equation is
    /// satisfied trivially and the residual carries no information.
    pub degenerate: bool,
    pub elapsed_ms: u128,
}

impl ResidualReport {
    fn assemble(
        model: &str,
        vars: Vec<String>,
        point: Vec<f64>,
        levels: Vec<ResidualLevel>,
        start: Instant,
    ) -> Self {
        let h: Vec<f64> = levels.iter().map(|l| l.h).collect();
        let residual: Vec<f64> = levels.iter().map(|l| l.residual.abs()).collect();
        let max_term = levels
            .iter()
            .map(|l| l.terms.iter().fold(0.0f64, |a, (_, v)| a.max(v.abs())))
            .collect();
        let ratios = residual.windows(2).map(|w| w[0] / w[1]).collect();
        let richardson = match levels.len() {
            0 | 1 => None,
            n => {
                let r = (h[n - 2] / h[n - 1]).powi(2);
                Some((r * levels[n - 1].residual - levels[n - 2].residual) / (r - 1.0))
            }
        };
        ResidualReport {
            model: model.into(),
            vars,
            point,
            levels,
            h,
            residual,
            max_term,
            ratios,
            richardson,
            noise_floor: None,
            field_checks: Vec::new(),
            degenerate: false,
            elapsed_ms: start.elapsed().as_millis(),
        }
    }

    /// Largest term magnitude at the finest level.
    pub fn finest_max_term(&self) -> f64 {
        self.max_term.last().copied().unwrap_or(0.0)
    }
}

fn slice_names(windows: &WindowFamily, half_line_names: bool) -> Vec<Vec<String>> {
    windows
        .finite_counts()
        .iter()
        .enumerate()
        .map(|(l, &k)| {
            if half_line_names && k == 1 {
                vec![format!("u{l}")]
            } else {
                (0..k).map(|i| format!("a{l}_{i}")).collect()
            }
        })
        .collect()
}

fn layout_for(windows: &WindowFamily, m: usize) -> Layout {
    Layout {
        slices: slice_names(windows, true),
        times: (1..=m).map(|l| format!("t{l}")).collect(),
    }
}

/// Shared domain check: sorted endpoints per slice, increasing times.
fn invalid_var_for(counts: &[usize], x: &[f64]) -> Option<usize> {
    let mut i = 0;
    for &k in counts {
        for j in 1..k {
            if x[i + j] <= x[i + j - 1] {
                return Some(i + j);
            }
        }
        i += k;
    }
    let mut prev = 0.0;
    for (j, &t) in x[i..].iter().enumerate() {
        if t <= prev {
            return Some(i + j);
        }
        prev = t;
    }
    None
}

fn split_point(windows: &WindowFamily, x: &[f64]) -> Result<(TimeGrid, WindowFamily), CoreError> {
    let k: usize = windows.finite_counts().iter().sum();
    let mut times = vec![0.0];
    times.extend_from_slice(&x[k..]);
    let grid = TimeGrid::new(times)?;
    let w = windows.with_finite_values(&x[..k])?;
    Ok((grid, w))
}

/// `log P_n` of stationary Dyson Brownian motion by chain quadrature at a
/// fixed discretisation.
pub struct DysonField {
    pub n: usize,
    pub windows: WindowFamily,
    pub m: usize,
    pub spec: QuadratureSpec,
    layout: Layout,
}

impl DysonField {
    pub fn new(
        n: usize,
        grid: &TimeGrid,
        windows: &WindowFamily,
        spec: QuadratureSpec,
    ) -> Result<Self, CoreError> {
        if windows.len() != grid.times().len() {
            return Err(CoreError::invalid(
                "windows",
                "one window per time required",
            ));
        }
        spec.validate()?;
        Ok(DysonField {
            n,
            windows: windows.clone(),
            m: grid.m(),
            spec,
            layout: layout_for(windows, grid.m()),
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }
}

impl LogProbField for DysonField {
    fn var_names(&self) -> Vec<String> {
        self.layout.vars()
    }

    fn log_prob(&self, x: &[f64]) -> Result<f64, CoreError> {
        let (grid, w) = split_point(&self.windows, x)?;
        log_probability_fixed(self.n, &grid, &w, &self.spec, self.spec.panels)
    }

    fn invalid_var(&self, x: &[f64]) -> Option<usize> {
        invalid_var_for(&self.windows.finite_counts(), x)
    }
}

/// `log P` of the Airy process by a fixed-size Fredholm determinant.
pub struct AiryField {
    pub windows: WindowFamily,
    pub nodes: usize,
    pub trunc: f64,
    layout: Layout,
}

impl AiryField {
    pub fn new(
        grid: &TimeGrid,
        windows: &WindowFamily,
        nodes: usize,
        trunc: f64,
    ) -> Result<Self, CoreError> {
        if windows.len() != grid.times().len() {
            return Err(CoreError::invalid(
                "windows",
                "one window per time required",
            ));
        }
        windows.airy_admissible()?;
        Ok(AiryField {
            windows: windows.clone(),
            nodes,
            trunc,
            layout: layout_for(windows, grid.m()),
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Value and `|value(N) - value(N/2)|` at `x`.
    pub fn with_error(&self, x: &[f64]) -> Result<(f64, f64), CoreError> {
        let (grid, w) = split_point(&self.windows, x)?;
        let fine = fredholm_value(grid.times(), w.windows(), self.nodes, self.trunc)?;
        let coarse = fredholm_value(
            grid.times(),
            w.windows(),
            self.nodes.div_ceil(2).max(4),
            self.trunc,
        )?;
        Ok((fine, (fine - coarse).abs()))
    }
}

impl LogProbField for AiryField {
    fn var_names(&self) -> Vec<String> {
        self.layout.vars()
    }

    fn log_prob(&self, x: &[f64]) -> Result<f64, CoreError> {
        let (grid, w) = split_point(&self.windows, x)?;
        let p = fredholm_value(grid.times(), w.windows(), self.nodes, self.trunc)?;
        if p <= 0.0 {
            return Err(CoreError::numerical(format!(
                "non-positive determinant {p:e} at {x:?}"
            )));
        }
        Ok(p.ln())
    }

    fn invalid_var(&self, x: &[f64]) -> Option<usize> {
        invalid_var_for(&self.windows.finite_counts(), x)
    }
}

fn base_point(grid: &TimeGrid, windows: &WindowFamily) -> Vec<f64> {
    let mut x = windows.finite_values();
    x.extend_from_slice(&grid.times()[1..]);
    x
}

/// Residual of
///
/// ```text
/// A1 [ B2 A1 logP / (B1 A1 logP + 2n e^{-t_m}) ] - B1 [ A2 B1 logP / (A1 B1 logP + 2n e^{-t_m}) ]
/// ```
///
/// with both quotients materialised on the lattice and the outer
/// operators applied by differencing them.
pub fn dyson_pde_residual(
    n: usize,
    grid: &TimeGrid,
    windows: &WindowFamily,
    h: &[f64],
    spec: &QuadratureSpec,
) -> Result<ResidualReport, CoreError> {
    let start = Instant::now();
    if grid.m() == 0 {
        return Err(CoreError::invalid(
            "times",
            "the equation needs at least two times",
        ));
    }
    if h.is_empty() {
        return Err(CoreError::invalid("h", "empty step schedule"));
    }
    let field = DysonField::new(n, grid, windows, spec.clone())?;
    if field.layout.slices.iter().any(Vec::is_empty) {
        return Err(CoreError::invalid(
            "windows",
            "every window needs a finite endpoint for the boundary operators",
        ));
    }
    let ops = DysonOps::build(&field.layout)?;
    let ctx = &ops.ctx;
    let inner = [
        (ops.b2.compose(ctx, &ops.a1), ops.b1.compose(ctx, &ops.a1)),
        (ops.a2.compose(ctx, &ops.b1), ops.a1.compose(ctx, &ops.b1)),
    ];
    let outer = [&ops.a1, &ops.b1];
    let point = base_point(grid, windows);
    let k: usize = field.windows.finite_counts().iter().sum();
    let vars = field.var_names();
    let gens = |x: &[f64]| ops.generator_values(&x[..k], &x[k..]);
    let shift = |x: &[f64]| 2.0 * n as f64 * (-x[x.len() - 1]).exp();

    let mut levels = Vec::new();
    for &step in h {
        let lat = LatticeSample::new(&field, &point, step)?;
        let center = vec![0i32; point.len()];
        let c_outer: Vec<NumOp> = outer
            .iter()
            .map(|op| op.numeric(ctx, &gens(&point)))
            .collect();
        let mut sites = Vec::new();
        for (j, op) in c_outer.iter().enumerate() {
            for ko in support(op, &center, 1)? {
                let x = lat.coords(&ko);
                let g = gens(&x);
                sites.extend(support(&inner[j].0.numeric(ctx, &g), &ko, 1)?);
                sites.extend(support(&inner[j].1.numeric(ctx, &g), &ko, 1)?);
            }
        }
        lat.prefetch(sites)?;
        let quotient = |j: usize, ko: &[i32]| -> Result<f64, CoreError> {
            let x = lat.coords(ko);
            let g = gens(&x);
            let num = lat.apply(&inner[j].0.numeric(ctx, &g), ko, 1)?;
            let den = lat.apply(&inner[j].1.numeric(ctx, &g), ko, 1)? + shift(&x);
            if den.abs() < 1e-6 {
                let at: Vec<String> = vars
                    .iter()
                    .zip(&x)
                    .map(|(v, y)| format!("{v}={y}"))
                    .collect();
                return Err(CoreError::numerical(format!(
                    "near-singular denominator {den:e} at {}",
                    at.join(", ")
                )));
            }
            Ok(num / den)
        };
        let lhs = apply_with(&c_outer[0], &center, 1, step, |ko| quotient(0, ko))?;
        let rhs = apply_with(&c_outer[1], &center, 1, step, |ko| quotient(1, ko))?;
        levels.push(ResidualLevel {
            h: step,
            residual: lhs - rhs,
            terms: vec![("A1[Q_A]".into(), lhs), ("B1[Q_B]".into(), rhs)],
            evaluations: lat.evaluations(),
        });
    }
    Ok(ResidualReport::assemble(
        &format!("dyson n={n}"),
        vars,
        point,
        levels,
        start,
    ))
}

/// The five groups of the edge equation as jet expressions in `logP`.
fn airy_pieces(
    layout: &Layout,
    ctx: &Context,
    form: AiryForm,
) -> Result<Vec<(String, JetExpr)>, CoreError> {
    let ops = AiryOps::build(layout, ctx)?;
    let l = JetExpr::log_p(ctx);
    let dd = ops.d.compose(ctx, &ops.d);
    let ddd1 = ops.d.compose(ctx, &ops.d1);
    let first = dd.compose(ctx, &ops.e1.add(&ops.d3).add(&ops.t2));
    let second = ddd1.compose(ctx, &ops.e.add(&ops.d2).add(&ops.t1));
    let third = ops.d1l.compose(ctx, &ops.d1r).compose(ctx, &ops.d1);
    let mut pieces = vec![
        ("D^2[E1+D3+T2]".to_string(), first.apply(ctx, &l)),
        (
            "-D D1[E+D2+T1]".to_string(),
            second.apply(ctx, &l).scale(rmtlab_symbolic::ring::q(-1)),
        ),
        (
            "-2 D1L D1R D1".to_string(),
            third.apply(ctx, &l).scale(rmtlab_symbolic::ring::q(-2)),
        ),
    ];
    if form == AiryForm::Limit {
        pieces.push((
            "D[D1R S_R - D1L S_L]".to_string(),
            rmtlab_symbolic::theorem::extra_term(&ops, ctx).apply(ctx, &l),
        ));
    }
    let w = wronskian(ctx, &dd.apply(ctx, &l), &ddd1.apply(ctx, &l), &ops.d);
    pieces.push((
        "-{D^2, D D1}_D".to_string(),
        w.scale(rmtlab_symbolic::ring::q(-1)),
    ));
    Ok(pieces)
}

fn unit_op(jet: &Jet) -> NumOp {
    NumOp {
        terms: vec![(jet.iter().copied().collect(), 1.0)],
    }
}

/// `sum |w| / h^order` of the stencil for one jet.
fn stencil_gain(jet: &Jet, h: f64) -> f64 {
    let mut g = 1.0;
    for &e in jet.iter() {
        let s: f64 = STENCILS[e as usize].iter().map(|(_, w)| w.abs()).sum();
        g *= s / h.powi(e as i32);
    }
    g
}

/// Residual of the edge equation with every operator realised by finite
/// differences of `log P` from Fredholm determinants.
pub fn airy_pde_residual(
    grid: &TimeGrid,
    windows: &WindowFamily,
    h: &[f64],
    nodes: usize,
    trunc: f64,
    form: AiryForm,
) -> Result<ResidualReport, CoreError> {
    let start = Instant::now();
    if grid.m() == 0 {
        return Err(CoreError::invalid(
            "times",
            "the equation needs at least two times",
        ));
    }
    if h.is_empty() {
        return Err(CoreError::invalid("h", "empty step schedule"));
    }
    let nodes = if nodes == 0 { DEFAULT_NODES } else { nodes };
    let trunc = if trunc == 0.0 { DEFAULT_TRUNC } else { trunc };
    let field = AiryField::new(grid, windows, nodes, trunc)?;
    if field.layout.slices.iter().any(Vec::is_empty) {
        return Err(CoreError::invalid(
            "windows",
            "every window needs a finite endpoint for the boundary operators",
        ));
    }
    let ctx = field.layout.coordinate_context();
    let pieces = airy_pieces(&field.layout, &ctx, form)?;
    let mut jets: BTreeMap<Jet, f64> = BTreeMap::new();
    for (_, e) in &pieces {
        for (mono, _) in e.terms() {
            for (j, _) in mono.iter() {
                jets.insert(j.clone(), 0.0);
            }
        }
    }
    let point = base_point(grid, windows);
    let dim = point.len();

    // Field accuracy at the centre and two opposite stencil corners.
    let mut field_checks = Vec::new();
    for s in [0.0, 1.0, -1.0] {
        let hmax = h.iter().fold(0.0f64, |a, b| a.max(*b));
        let x: Vec<f64> = point.iter().map(|p| p + s * hmax).collect();
        if field.invalid_var(&x).is_some() {
            continue;
        }
        let (value, error_estimate) = field.with_error(&x)?;
        field_checks.push(FieldCheck {
            point: x,
            value,
            error_estimate,
        });
    }
    let det_error = field_checks
        .iter()
        .map(|c| c.error_estimate)
        .fold(0.0f64, f64::max);
    let noise = field_checks
        .iter()
        .map(|c| c.error_estimate / c.value.abs().max(f64::MIN_POSITIVE))
        .fold(0.0f64, f64::max);

    let mut levels = Vec::new();
    let mut floor = 0.0;
    let mut degenerate = false;
    for &step in h {
        let lat = LatticeSample::new(&field, &point, step)?;
        let center = vec![0i32; dim];
        let mut sites = Vec::new();
        for j in jets.keys() {
            sites.extend(support(&unit_op(j), &center, 1)?);
        }
        lat.prefetch(sites)?;
        let mut values = BTreeMap::new();
        for j in jets.keys() {
            values.insert(j.clone(), lat.apply(&unit_op(j), &center, 1)?);
        }
        let mut terms = Vec::new();
        let mut total = 0.0;
        let mut level_floor = 0.0;
        for (name, e) in &pieces {
            let v = e.eval(&ctx, &point, |j| values[j]);
            // First-order propagation of the field noise through products
            // of jets.
            for (mono, c) in e.terms() {
                let c = ctx.eval(c, &point).abs();
                let mut exact = 1.0;
                let mut bound = 1.0;
                for (j, p) in mono.iter() {
                    let a = values[j].abs();
                    exact *= a.powi(*p as i32);
                    bound *= (a + noise * stencil_gain(j, step)).powi(*p as i32);
                }
                level_floor += c * (bound - exact);
            }
            if !e.is_empty() {
                terms.push((name.clone(), v));
            }
            total += v;
        }
        let smallest = terms
            .iter()
            .map(|(_, v)| v.abs())
            .fold(f64::INFINITY, f64::min);
        let largest = terms.iter().map(|(_, v)| v.abs()).fold(0.0f64, f64::max);
        // A field indistinguishable from a constant (every term under the
        // determinant error) gives a trivially vanishing equation.
        if largest <= det_error {
            degenerate = true;
        } else if det_error > 0.01 * smallest {
            return Err(CoreError::numerical(format!(
                "field accuracy insufficient: determinant error {det_error:e} exceeds 1% of the smallest term {smallest:e} at h = {step}"
            )));
        }
        floor = level_floor;
        levels.push(ResidualLevel {
            h: step,
            residual: total,
            terms,
            evaluations: lat.evaluations(),
        });
    }
    let mut report = ResidualReport::assemble("airy", field.var_names(), point, levels, start);
    report.noise_floor = Some(floor);
    report.field_checks = field_checks;
    report.degenerate = degenerate;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::IntervalUnion;

    /// Polynomial (or any closure) field over named variables.
    struct Mock<F: Fn(&[f64]) -> f64 + Sync> {
        names: Vec<String>,
        f: F,
    }

    impl<F: Fn(&[f64]) -> f64 + Sync> LogProbField for Mock<F> {
        fn var_names(&self) -> Vec<String> {
            self.names.clone()
        }
        fn log_prob(&self, x: &[f64]) -> Result<f64, CoreError> {
            Ok((self.f)(x))
        }
        fn invalid_var(&self, x: &[f64]) -> Option<usize> {
            x.iter().position(|v| *v < -10.0)
        }
    }

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn first_derivative_of_square() {
        let f = Mock {
            names: names(1),
            f: |x: &[f64]| x[0] * x[0],
        };
        let op = NumOp {
            terms: vec![(vec![1], 1.0)],
        };
        let d = apply_op_fd(&op, &f, &[1.0], 1e-3).unwrap();
        assert!((d - 2.0).abs() < 1e-9);
    }

    #[test]
    fn mixed_derivative_of_product() {
        let f = Mock {
            names: names(2),
            f: |x: &[f64]| x[0] * x[1],
        };
        let op = NumOp {
            terms: vec![(vec![1, 1], 1.0)],
        };
        let d = apply_op_fd(&op, &f, &[0.3, -0.7], 1e-2).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn third_order_stencil_is_exact_on_cubics() {
        let f = Mock {
            names: names(1),
            f: |x: &[f64]| 2.0 * x[0].powi(3) - x[0],
        };
        let op = NumOp {
            terms: vec![(vec![3], 1.0)],
        };
        let d = apply_op_fd(&op, &f, &[0.4], 0.05).unwrap();
        assert!((d - 12.0).abs() < 1e-9);
    }

    #[test]
    fn stencil_leaving_domain_names_variable() {
        let f = Mock {
            names: names(2),
            f: |x: &[f64]| x[0] + x[1],
        };
        let op = NumOp {
            terms: vec![(vec![0, 2], 1.0)],
        };
        let err = apply_op_fd(&op, &f, &[0.0, -9.99], 0.1).unwrap_err();
        assert!(err.to_string().contains("x1"), "{err}");
    }

    #[test]
    fn edge_operators_match_symbolic_application() {
        let layout = Layout::half_lines(1);
        let ctx = layout.coordinate_context();
        let ops = AiryOps::build(&layout, &ctx).unwrap();
        let v = |name: &str| ctx.sym(name).unwrap();
        // A cubic in (u0, u1, t1).
        let (u0, u1, t1) = (v("u0"), v("u1"), v("t1"));
        let mut p = ctx.pow(&u0, 3);
        p = &p
            + &ctx
                .mul(&ctx.mul(&u0, &u1), &t1)
                .scale(rmtlab_symbolic::ring::q(3));
        p = &p - &ctx.mul(&ctx.pow(&u1, 2), &t1);
        p = &p + &ctx.pow(&t1, 3).scale(rmtlab_symbolic::ring::qf(1, 2));
        let ctx2 = ctx.clone();
        let p2 = p.clone();
        let field = Mock {
            names: layout.vars(),
            f: move |x: &[f64]| ctx2.eval(&p2, x),
        };
        let point = [0.3, -0.4, 1.1];
        for (name, op) in ops.named() {
            let exact = ctx.eval(&op.apply_poly(&ctx, &p), &point);
            let fd =
                apply_op_fd_extrapolated(&op.numeric(&ctx, &point), &field, &point, 0.05).unwrap();
            assert!(
                (fd - exact).abs() < 1e-9 * (1.0 + exact.abs()),
                "{name}: {fd} vs {exact}"
            );
        }
        let d3 = ops.d3.compose(&ctx, &ops.d.compose(&ctx, &ops.d));
        let exact = ctx.eval(&d3.apply_poly(&ctx, &p), &point);
        let fd = apply_op_fd_extrapolated(&d3.numeric(&ctx, &point), &field, &point, 0.05).unwrap();
        assert!(
            (fd - exact).abs() < 1e-8 * (1.0 + exact.abs()),
            "{fd} vs {exact}"
        );
    }

    #[test]
    fn dyson_single_particle_two_times() {
        let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let w = WindowFamily::half_lines(&[0.1, -0.2]);
        let r = dyson_pde_residual(
            1,
            &grid,
            &w,
            &[0.04, 0.02, 0.01],
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert!(r.ratios.iter().all(|q| *q >= 3.0), "{r:?}");
        assert!(
            r.richardson.unwrap().abs() <= 1e-3 * r.finest_max_term(),
            "{r:?}"
        );
    }

    #[test]
    fn dyson_reports_are_deterministic() {
        let grid = TimeGrid::new(vec![0.0, 0.8]).unwrap();
        let w = WindowFamily::half_lines(&[0.0, 0.3]);
        let s = QuadratureSpec::default();
        let a = dyson_pde_residual(1, &grid, &w, &[0.04], &s).unwrap();
        let b = dyson_pde_residual(1, &grid, &w, &[0.04], &s).unwrap();
        assert_eq!(
            a.levels[0].residual.to_bits(),
            b.levels[0].residual.to_bits()
        );
    }

    #[test]
    fn dyson_needs_finite_endpoints() {
        let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let w = WindowFamily::new(
            vec![IntervalUnion::full(), IntervalUnion::half_line(0.0)],
            &grid,
        )
        .unwrap();
        assert!(dyson_pde_residual(1, &grid, &w, &[0.04], &QuadratureSpec::default()).is_err());
    }

    #[test]
    fn time_reversal_swaps_the_two_sides() {
        let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let w = WindowFamily::half_lines(&[0.1, -0.2]);
        let h = [0.04, 0.02];
        let s = QuadratureSpec::default();
        let a = dyson_pde_residual(1, &grid, &w, &h, &s).unwrap();
        let b = dyson_pde_residual(1, &grid.reversed(), &w.reversed(), &h, &s).unwrap();
        for (la, lb) in a.levels.iter().zip(&b.levels) {
            assert!(
                (la.terms[0].1 - lb.terms[1].1).abs() < 1e-8,
                "{la:?} {lb:?}"
            );
            assert!(
                (la.terms[1].1 - lb.terms[0].1).abs() < 1e-8,
                "{la:?} {lb:?}"
            );
            assert!((la.residual + lb.residual).abs() < 1e-8 * la.terms[0].1.abs());
        }
    }

    #[test]
    fn dyson_two_particles_converges() {
        let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let w = WindowFamily::half_lines(&[0.5, 0.3]);
        let r = dyson_pde_residual(
            2,
            &grid,
            &w,
            &[0.04, 0.02, 0.01],
            &QuadratureSpec::default(),
        )
        .unwrap();
        assert!(r.ratios.iter().all(|q| *q >= 3.0), "{r:?}");
    }

    #[test]
    fn airy_two_times_converges() {
        let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let w = WindowFamily::half_lines(&[0.5, -0.3]);
        let r = airy_pde_residual(&grid, &w, &[0.1, 0.05], 40, 0.0, AiryForm::Limit).unwrap();
        assert!((3.5..=4.5).contains(&r.ratios[0]), "{r:?}");
        assert!(
            r.richardson.unwrap().abs() < 1e-5 * r.finest_max_term(),
            "{r:?}"
        );
        assert!(!r.degenerate);
    }

    #[test]
    fn airy_far_windows_are_trivial() {
        let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
        let w = WindowFamily::half_lines(&[7.0, 7.0]);
        let r = airy_pde_residual(&grid, &w, &[0.1], 40, 0.0, AiryForm::Limit).unwrap();
        assert!(r.degenerate, "{r:?}");
        assert!(r.finest_max_term() < 1e-8, "{r:?}");
        assert!(r.residual[0] < 1e-8);
    }
}
