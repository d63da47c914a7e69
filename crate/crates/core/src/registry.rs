//! Trait-object registries: experiments keyed by mode name, and the
//! log-probability fields that finite-difference checks consume.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{json, Value};

use rmtlab_symbolic::AiryForm;

use crate::fredholm::{fredholm_determinant, DEFAULT_NODES, DEFAULT_TRUNC};
use crate::model::{ExperimentConfig, IntervalUnion};
use crate::ou::{mc_joint_probability, sample_paths};
use crate::painleve::tracy_widom_f2;
use crate::quadrature::{joint_probability_quadrature, QuadratureSpec, TauParams};
use crate::residual::{airy_pde_residual, dyson_pde_residual, ResidualReport};
use crate::tau::{verify_lemma_e0em, verify_virasoro_action};
use crate::CoreError;

/// A smooth scalar field `x -> log P(x)` over named variables (finite
/// window endpoints followed by times).
pub trait LogProbField: Sync {
    fn var_names(&self) -> Vec<String>;

    fn log_prob(&self, x: &[f64]) -> Result<f64, CoreError>;

    /// Index of a variable whose value puts `x` outside the domain
    /// (unsorted endpoints, non-increasing times), if any.
    fn invalid_var(&self, _x: &[f64]) -> Option<usize> {
        None
    }
}

/// The Fredholm discretisation convention, recorded with every edge-scaled
/// result.
pub const BLOCK_CONVENTION: &str =
    "one block per observation time (m+1 blocks); block l uses the complement of window l";

/// A CSV table produced by an experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// What an experiment hands back: a JSON summary and any tables.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Output {
    pub summary: Value,
    pub tables: Vec<Table>,
}

impl Output {
    fn summary(summary: Value) -> Self {
        Output {
            summary,
            tables: Vec::new(),
        }
    }
}

pub trait Experiment: Send + Sync {
    /// Mode name the experiment is registered under.
    fn name(&self) -> &'static str;

    fn describe(&self) -> &'static str;

    fn run(&self, cfg: &ExperimentConfig) -> Result<Output, CoreError>;
}

/// Experiments keyed by mode name.
#[derive(Default)]
pub struct Registry {
    entries: BTreeMap<&'static str, Box<dyn Experiment>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every built-in experiment.
    pub fn standard() -> Self {
        let mut r = Registry::new();
        r.register(Box::new(DysonMc));
        r.register(Box::new(DysonQuad));
        r.register(Box::new(AiryProb));
        r.register(Box::new(TwTable));
        r.register(Box::new(Residual));
        r.register(Box::new(Symbolic));
        r.register(Box::new(Verify));
        r
    }

    pub fn register(&mut self, e: Box<dyn Experiment>) {
        self.entries.insert(e.name(), e);
    }

    pub fn get(&self, name: &str) -> Option<&dyn Experiment> {
        self.entries.get(name).map(|b| b.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn run(&self, cfg: &ExperimentConfig) -> Result<Output, CoreError> {
        let name = cfg.mode.name();
        let e = self.get(name).ok_or_else(|| {
            CoreError::invalid("mode", format!("no experiment registered for `{name}`"))
        })?;
        e.run(cfg)
    }
}

fn quad_spec(cfg: &ExperimentConfig) -> QuadratureSpec {
    let o = &cfg.options;
    let d = QuadratureSpec::default();
    QuadratureSpec {
        nodes: if o.nodes == 0 { d.nodes } else { o.nodes },
        panels: o.panels.max(1),
        trunc: if o.trunc == 0.0 { d.trunc } else { o.trunc },
        tol: o.tol,
        ..d
    }
}

fn fredholm_opts(cfg: &ExperimentConfig) -> (usize, f64) {
    let o = &cfg.options;
    (
        if o.nodes == 0 { DEFAULT_NODES } else { o.nodes },
        if o.trunc == 0.0 {
            DEFAULT_TRUNC
        } else {
            o.trunc
        },
    )
}

fn steps(cfg: &ExperimentConfig, default: &[f64]) -> Vec<f64> {
    if cfg.options.h.is_empty() {
        default.to_vec()
    } else {
        cfg.options.h.clone()
    }
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serialisable report")
}

fn fmt(x: f64) -> String {
    format!("{x:e}")
}

struct DysonMc;

impl Experiment for DysonMc {
    fn name(&self) -> &'static str {
        "dyson-mc"
    }

    fn describe(&self) -> &'static str {
        "Monte Carlo joint probability of stationary Dyson Brownian motion"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Output, CoreError> {
        let seed = cfg
            .seed
            .ok_or_else(|| CoreError::invalid("seed", "a seed is required for this mode"))?;
        let est = mc_joint_probability(cfg.n, &cfg.grid, &cfg.windows, cfg.options.samples, seed)?;
        let mut out = Output::summary(json!({
            "value": est.value,
            "stderr": est.stderr,
            "n_samples": est.samples,
            "seed": seed,
            "method": est.method,
        }));
        if cfg.options.csv {
            let mut header = vec!["path".to_string(), "slice".to_string()];
            header.extend((1..=cfg.n).map(|i| format!("lambda{i}")));
            let mut t = Table {
                name: "samples".into(),
                header,
                rows: Vec::new(),
            };
            for (p, path) in sample_paths(cfg.n, &cfg.grid, cfg.options.samples, seed)?
                .iter()
                .enumerate()
            {
                for (l, ev) in path.slices.iter().enumerate() {
                    let mut row = vec![p.to_string(), l.to_string()];
                    row.extend(ev.iter().map(|x| fmt(*x)));
                    t.push(row);
                }
            }
            out.tables.push(t);
        }
        Ok(out)
    }
}

struct DysonQuad;

impl Experiment for DysonQuad {
    fn name(&self) -> &'static str {
        "dyson-quad"
    }

    fn describe(&self) -> &'static str {
        "Deterministic chain quadrature of the Dyson joint probability (n = 1, 2)"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Output, CoreError> {
        let r = joint_probability_quadrature(cfg.n, &cfg.grid, &cfg.windows, &quad_spec(cfg))?;
        Ok(Output::summary(json!({
            "value": r.estimate.value,
            "quad_error": r.estimate.stderr,
            "panels": r.panels,
        })))
    }
}

struct AiryProb;

impl Experiment for AiryProb {
    fn name(&self) -> &'static str {
        "airy"
    }

    fn describe(&self) -> &'static str {
        "Airy process joint probability by a block Fredholm determinant"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Output, CoreError> {
        let (nodes, trunc) = fredholm_opts(cfg);
        let est = fredholm_determinant(cfg.grid.times(), &cfg.windows, nodes, trunc)?;
        Ok(Output::summary(json!({
            "value": est.value,
            "error": est.stderr,
            "nodes": nodes,
            "trunc": trunc,
            "method": est.method,
            "block_convention": BLOCK_CONVENTION,
        })))
    }
}

struct TwTable;

impl Experiment for TwTable {
    fn name(&self) -> &'static str {
        "tw"
    }

    fn describe(&self) -> &'static str {
        "Tracy-Widom F2 table by Painleve II and by the Fredholm determinant"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Output, CoreError> {
        let o = &cfg.options;
        let (nodes, trunc) = fredholm_opts(cfg);
        let count = ((o.to - o.from) / o.step + 1e-9).floor() as usize + 1;
        let mut t = Table::new(
            "tw",
            &[
                "u",
                "F2",
                "route",
                "err",
                "F2_fredholm",
                "err_fredholm",
                "abs_delta",
            ],
        );
        let mut max_delta: f64 = 0.0;
        for i in 0..count {
            let u = o.from + i as f64 * o.step;
            let p = tracy_widom_f2(u)?;
            let f =
                fredholm_determinant(&[0.0], &crate::WindowFamily::half_lines(&[u]), nodes, trunc)?;
            let d = (p.value - f.value).abs();
            max_delta = max_delta.max(d);
            t.push(vec![
                format!("{u}"),
                format!("{:.16e}", p.value),
                "painleve".into(),
                fmt(p.stderr),
                format!("{:.16e}", f.value),
                fmt(f.stderr),
                fmt(d),
            ]);
        }
        Ok(Output {
            summary: json!({
                "rows": count,
                "max_abs_delta": max_delta,
                "routes": ["painleve", "fredholm"],
                "nodes": nodes,
                "block_convention": BLOCK_CONVENTION,
            }),
            tables: vec![t],
        })
    }
}

fn residual_table(r: &ResidualReport) -> Table {
    let mut t = Table::new("residual", &["h", "residual", "ratio", "max_term"]);
    for (i, h) in r.h.iter().enumerate() {
        let ratio = if i == 0 {
            String::new()
        } else {
            fmt(r.ratios[i - 1])
        };
        t.push(vec![
            format!("{h}"),
            fmt(r.residual[i]),
            ratio,
            fmt(r.max_term[i]),
        ]);
    }
    t
}

struct Residual;

impl Experiment for Residual {
    fn name(&self) -> &'static str {
        "residual"
    }

    fn describe(&self) -> &'static str {
        "Finite-difference residual of the Dyson or Airy PDE"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Output, CoreError> {
        let model = cfg.options.model.as_deref().unwrap_or("dyson");
        let mut summary;
        let report = match model {
            "dyson" => {
                let r = dyson_pde_residual(
                    cfg.n,
                    &cfg.grid,
                    &cfg.windows,
                    &steps(cfg, &[0.04, 0.02, 0.01]),
                    &quad_spec(cfg),
                )?;
                summary = to_json(&r);
                r
            }
            "airy" => {
                cfg.windows.airy_admissible()?;
                let (nodes, trunc) = fredholm_opts(cfg);
                let r = airy_pde_residual(
                    &cfg.grid,
                    &cfg.windows,
                    &steps(cfg, &[0.1, 0.05]),
                    nodes,
                    trunc,
                    AiryForm::Limit,
                )?;
                summary = to_json(&r);
                summary["block_convention"] = json!(BLOCK_CONVENTION);
                r
            }
            other => {
                return Err(CoreError::invalid(
                    "options.model",
                    format!("unknown model `{other}` (expected dyson or airy)"),
                ))
            }
        };
        summary["model"] = json!(model);
        Ok(Output {
            summary,
            tables: vec![residual_table(&report)],
        })
    }
}

struct Symbolic;

impl Experiment for Symbolic {
    fn name(&self) -> &'static str {
        "symbolic"
    }

    fn describe(&self) -> &'static str {
        "Exact symbolic checks of the operator identities and edge equations"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Output, CoreError> {
        use rmtlab_symbolic::{commutators, corollary, jk, series};
        let check = cfg.options.check.as_deref().unwrap_or("m1");
        let m = cfg.options.m;
        let order = cfg.options.order;
        let (status, details) = match check {
            "m1" => {
                let r = corollary::check_corollary_m1()?;
                (r.status.clone(), to_json(&r))
            }
            "m2" => {
                let r = corollary::check_corollary_m2()?;
                (r.status.clone(), to_json(&r))
            }
            "jk" => {
                let times = if cfg.grid.m() == 0 {
                    (0..=m).map(|l| l as f64).collect()
                } else {
                    cfg.grid.times().to_vec()
                };
                let r = jk::jk_matrices(&times)?;
                let ok = r.j_row_error <= 1e-12 && r.k_row_error <= 1e-12;
                (
                    if ok {
                        "closed-form-rows-match"
                    } else {
                        "mismatch"
                    }
                    .to_string(),
                    to_json(&r),
                )
            }
            "commutators" => {
                let r = commutators::check_commutators(m, order)?;
                let all = r.checks.iter().all(|c| c.holds_as_written);
                (
                    if all {
                        "all-hold"
                    } else {
                        "discrepancies-reported"
                    }
                    .to_string(),
                    to_json(&r),
                )
            }
            "series" => {
                let r = series::series_cancellation(m, order)?;
                let ok = r.leading_orders_vanish && r.matches_limit_form;
                (
                    if ok {
                        "cancels-to-limit-form"
                    } else {
                        "mismatch"
                    }
                    .to_string(),
                    to_json(&r),
                )
            }
            other => {
                return Err(CoreError::invalid(
                    "options.check",
                    format!("unknown check `{other}` (expected m1, m2, jk, commutators or series)"),
                ))
            }
        };
        Ok(Output::summary(json!({
            "check": check,
            "status": status,
            "details": details,
        })))
    }
}

struct Verify;

impl Experiment for Verify {
    fn name(&self) -> &'static str {
        "verify"
    }

    fn describe(&self) -> &'static str {
        "Finite-difference checks of the boundary-to-parameter identities (n = 1)"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Output, CoreError> {
        if cfg.n != 1 {
            return Err(CoreError::Unsupported("verify is defined for n = 1".into()));
        }
        let h = steps(cfg, &[0.02, 0.01, 0.005]);
        let spec = quad_spec(cfg);
        let windows: Vec<IntervalUnion> = cfg.windows.windows().to_vec();
        match cfg.options.lemma.as_deref().unwrap_or("virasoro") {
            "virasoro" => {
                let params = TauParams::locus(&cfg.grid)?;
                let r = verify_virasoro_action(
                    cfg.options.slice,
                    cfg.options.op_order,
                    &params,
                    &windows,
                    &h,
                    &spec,
                )?;
                let mut t = Table::new("virasoro", &["h", "residual"]);
                for (h, res) in r.h.iter().zip(&r.residual) {
                    t.push(vec![format!("{h}"), fmt(*res)]);
                }
                let mut summary = to_json(&r);
                summary["second_order"] = json!(r.second_order());
                Ok(Output {
                    summary,
                    tables: vec![t],
                })
            }
            "e0em" => {
                let r = verify_lemma_e0em(&cfg.grid, &windows, &h, &spec)?;
                let mut t = Table::new("e0em", &["h", "residual", "control"]);
                for ((h, res), c) in r
                    .convergence
                    .h
                    .iter()
                    .zip(&r.convergence.residual)
                    .zip(&r.control)
                {
                    t.push(vec![format!("{h}"), fmt(*res), fmt(*c)]);
                }
                let mut summary = to_json(&r);
                summary["second_order"] = json!(r.convergence.second_order());
                summary["control_plateau_ok"] = json!(r.control_plateau_ok(1e-6));
                Ok(Output {
                    summary,
                    tables: vec![t],
                })
            }
            other => Err(CoreError::invalid(
                "options.lemma",
                format!("unknown lemma `{other}` (expected virasoro or e0em)"),
            )),
        }
    }
}
