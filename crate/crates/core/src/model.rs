//! Shared domain types: observation times, windows on the extended real
//! line, locus constants and the experiment configuration.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::CoreError;

/// A point of the extended real line. Arithmetic is only ever performed on
/// the finite variant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Endpoint {
    NegInf,
    Finite(f64),
    PosInf,
}

impl Endpoint {
    pub fn finite(self) -> Option<f64> {
        match self {
            Endpoint::Finite(x) => Some(x),
            _ => None,
        }
    }

    fn rank(self) -> (i8, f64) {
        match self {
            Endpoint::NegInf => (-1, 0.0),
            Endpoint::Finite(x) => (0, x),
            Endpoint::PosInf => (1, 0.0),
        }
    }

    fn lt(self, other: Endpoint) -> bool {
        let (a, x) = self.rank();
        let (b, y) = other.rank();
        a < b || (a == 0 && b == 0 && x < y)
    }

    /// Strictly below `x`.
    pub fn below(self, x: f64) -> bool {
        match self {
            Endpoint::NegInf => true,
            Endpoint::Finite(a) => a < x,
            Endpoint::PosInf => false,
        }
    }

    /// Strictly above `x`.
    pub fn above(self, x: f64) -> bool {
        match self {
            Endpoint::NegInf => false,
            Endpoint::Finite(a) => a > x,
            Endpoint::PosInf => true,
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::NegInf => write!(f, "-inf"),
            Endpoint::Finite(x) => write!(f, "{x}"),
            Endpoint::PosInf => write!(f, "+inf"),
        }
    }
}

impl Serialize for Endpoint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Endpoint::NegInf => s.serialize_str("-inf"),
            Endpoint::Finite(x) => s.serialize_f64(*x),
            Endpoint::PosInf => s.serialize_str("+inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Endpoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Endpoint;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number, \"-inf\" or \"+inf\"")
            }
            fn visit_f64<E: de::Error>(self, x: f64) -> Result<Endpoint, E> {
                if x.is_finite() {
                    Ok(Endpoint::Finite(x))
                } else {
                    Err(E::custom("non-finite number; use \"-inf\" or \"+inf\""))
                }
            }
            fn visit_i64<E: de::Error>(self, x: i64) -> Result<Endpoint, E> {
                Ok(Endpoint::Finite(x as f64))
            }
            fn visit_u64<E: de::Error>(self, x: u64) -> Result<Endpoint, E> {
                Ok(Endpoint::Finite(x as f64))
            }
            fn visit_str<E: de::Error>(self, s: &str) -> Result<Endpoint, E> {
                match s {
                    "-inf" => Ok(Endpoint::NegInf),
                    "+inf" | "inf" => Ok(Endpoint::PosInf),
                    _ => Err(E::custom(format!("unknown endpoint `{s}`"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Ordered observation times `0 = t_0 < t_1 < ... < t_m`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self, CoreError> {
        if times.is_empty() {
            return Err(CoreError::invalid("times", "at least one time required"));
        }
        if times[0] != 0.0 {
            return Err(CoreError::invalid(
                "times[0]",
                "first time must be exactly 0",
            ));
        }
        for i in 1..times.len() {
            if !times[i].is_finite() || times[i] <= times[i - 1] {
                return Err(CoreError::invalid(
                    format!("times[{i}]"),
                    "times must be finite and strictly increasing",
                ));
            }
        }
        Ok(TimeGrid { times })
    }

    /// Grid from increments `s_1..s_m`.
    pub fn from_increments(incs: &[f64]) -> Result<Self, CoreError> {
        let mut times = vec![0.0];
        for s in incs {
            times.push(times.last().unwrap() + s);
        }
        TimeGrid::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Index of the last time.
    pub fn m(&self) -> usize {
        self.times.len() - 1
    }

    /// `s_i = t_i - t_{i-1}`, `i = 1..m`.
    pub fn increments(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `c_i = e^{-s_i}`, `i = 1..m`.
    pub fn decays(&self) -> Vec<f64> {
        self.increments().iter().map(|s| (-s).exp()).collect()
    }

    /// The same increments in reverse order.
    pub fn reversed(&self) -> TimeGrid {
        let mut incs = self.increments();
        incs.reverse();
        TimeGrid::from_increments(&incs).expect("reversal of a valid grid")
    }
}

/// A finite union of disjoint open intervals `(a_1, a_2) u ... u (a_{2r-1}, a_{2r})`.
///
/// A complement carries closed endpoints; the flag only matters for
/// membership tests at the endpoints themselves.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntervalUnion {
    endpoints: Vec<Endpoint>,
    #[serde(skip)]
    closed: bool,
}

impl IntervalUnion {
    pub fn new(endpoints: Vec<Endpoint>) -> Result<Self, CoreError> {
        Self::check(&endpoints).map_err(|m| CoreError::invalid("endpoints", m))?;
        Ok(IntervalUnion {
            endpoints,
            closed: false,
        })
    }

    fn check(e: &[Endpoint]) -> Result<(), String> {
        if !e.len().is_multiple_of(2) {
            return Err(format!("odd endpoint count {}", e.len()));
        }
        for (i, p) in e.iter().enumerate() {
            if *p == Endpoint::NegInf && i != 0 {
                return Err(format!(
                    "-inf only allowed as the first endpoint (index {i})"
                ));
            }
            if *p == Endpoint::PosInf && i + 1 != e.len() {
                return Err(format!(
                    "+inf only allowed as the last endpoint (index {i})"
                ));
            }
            if let Endpoint::Finite(x) = p {
                if !x.is_finite() {
                    return Err(format!("endpoint {i} is not finite"));
                }
            }
        }
        for i in 1..e.len() {
            if !e[i - 1].lt(e[i]) {
                return Err(format!(
                    "endpoints must be strictly increasing: {} then {} at index {i}",
                    e[i - 1],
                    e[i]
                ));
            }
        }
        Ok(())
    }

    /// `(-inf, u)`.
    pub fn half_line(u: f64) -> Self {
        IntervalUnion::new(vec![Endpoint::NegInf, Endpoint::Finite(u)]).expect("half line")
    }

    /// `(a, b)`.
    pub fn interval(a: f64, b: f64) -> Result<Self, CoreError> {
        IntervalUnion::new(vec![Endpoint::Finite(a), Endpoint::Finite(b)])
    }

    /// The whole line.
    pub fn full() -> Self {
        IntervalUnion::new(vec![Endpoint::NegInf, Endpoint::PosInf]).expect("full line")
    }

    pub fn empty() -> Self {
        IntervalUnion {
            endpoints: Vec::new(),
            closed: false,
        }
    }

    pub fn endpoints(&self) -> &[Endpoint] {
        &self.endpoints
    }

    pub fn is_empty(&self) -> bool {
        self.endpoints.is_empty()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn intervals(&self) -> impl Iterator<Item = (Endpoint, Endpoint)> + '_ {
        self.endpoints.chunks(2).map(|c| (c[0], c[1]))
    }

    /// Finite endpoints in order, with their indices in [`Self::endpoints`].
    pub fn finite_endpoints(&self) -> Vec<(usize, f64)> {
        self.endpoints
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.finite().map(|x| (i, x)))
            .collect()
    }

    /// Copy with the finite endpoints replaced, in order.
    pub fn with_finite_endpoints(&self, values: &[f64]) -> Result<Self, CoreError> {
        let mut it = values.iter();
        let endpoints = self
            .endpoints
            .iter()
            .map(|e| match e {
                Endpoint::Finite(_) => Endpoint::Finite(*it.next().expect("value count")),
                other => *other,
            })
            .collect();
        let mut u = IntervalUnion::new(endpoints)?;
        u.closed = self.closed;
        Ok(u)
    }

    /// Membership with strict inequalities for open sets, inclusive for
    /// complements.
    pub fn contains(&self, x: f64) -> bool {
        self.intervals().any(|(a, b)| {
            if self.closed {
                !a.above(x) && !b.below(x)
            } else {
                a.below(x) && b.above(x)
            }
        })
    }

    /// Complement within the real line. The result carries closed endpoints,
    /// and complementing twice returns the original set.
    pub fn complement(&self) -> IntervalUnion {
        let mut e = self.endpoints.clone();
        if e.first() == Some(&Endpoint::NegInf) {
            e.remove(0);
        } else {
            e.insert(0, Endpoint::NegInf);
        }
        if e.last() == Some(&Endpoint::PosInf) {
            e.pop();
        } else {
            e.push(Endpoint::PosInf);
        }
        IntervalUnion {
            endpoints: e,
            closed: !self.closed,
        }
    }

    /// Whether `self` is a subset of `other` (as open sets).
    pub fn is_subset_of(&self, other: &IntervalUnion) -> bool {
        self.intervals()
            .all(|(a, b)| other.intervals().any(|(c, d)| !a.lt(c) && !d.lt(b)))
    }
}

/// One window per observation time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowFamily {
    windows: Vec<IntervalUnion>,
}

impl WindowFamily {
    pub fn new(windows: Vec<IntervalUnion>, grid: &TimeGrid) -> Result<Self, CoreError> {
        if windows.len() != grid.times().len() {
            return Err(CoreError::invalid(
                "windows",
                format!("{} windows for {} times", windows.len(), grid.times().len()),
            ));
        }
        Ok(WindowFamily { windows })
    }

    pub fn half_lines(us: &[f64]) -> Self {
        WindowFamily {
            windows: us.iter().map(|&u| IntervalUnion::half_line(u)).collect(),
        }
    }

    pub fn windows(&self) -> &[IntervalUnion] {
        &self.windows
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Every window starts at `-inf`, as the edge-scaled process requires.
    pub fn airy_admissible(&self) -> Result<(), CoreError> {
        for (l, w) in self.windows.iter().enumerate() {
            if w.endpoints().first() != Some(&Endpoint::NegInf) {
                return Err(CoreError::invalid(
                    format!("windows[{l}]"),
                    "the first endpoint must be -inf for edge-scaled probabilities",
                ));
            }
        }
        Ok(())
    }

    /// All finite endpoints, slice by slice.
    pub fn finite_values(&self) -> Vec<f64> {
        self.windows
            .iter()
            .flat_map(|w| w.finite_endpoints().into_iter().map(|(_, x)| x))
            .collect()
    }

    /// Number of finite endpoints per slice.
    pub fn finite_counts(&self) -> Vec<usize> {
        self.windows
            .iter()
            .map(|w| w.finite_endpoints().len())
            .collect()
    }

    /// Copy with all finite endpoints replaced, slice by slice.
    pub fn with_finite_values(&self, values: &[f64]) -> Result<Self, CoreError> {
        let mut out = Vec::with_capacity(self.windows.len());
        let mut offset = 0;
        for (l, w) in self.windows.iter().enumerate() {
            let k = w.finite_endpoints().len();
            let u = w
                .with_finite_endpoints(&values[offset..offset + k])
                .map_err(|e| e.at(format!("windows[{l}]")))?;
            out.push(u);
            offset += k;
        }
        Ok(WindowFamily { windows: out })
    }

    pub fn reversed(&self) -> WindowFamily {
        let mut w = self.windows.clone();
        w.reverse();
        WindowFamily { windows: w }
    }
}

/// Parameter values at which the generalized integral reduces to the joint
/// probability.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocusConstants {
    pub t2: Vec<f64>,
    pub c11: Vec<f64>,
}

pub fn build_locus(grid: &TimeGrid) -> Result<LocusConstants, CoreError> {
    if grid.m() == 0 {
        return Err(CoreError::invalid(
            "times",
            "locus requires at least two times",
        ));
    }
    let (t2, c11) = rmtlab_symbolic::jk::locus_from_decay(&grid.decays());
    Ok(LocusConstants { t2, c11 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    DysonMc,
    DysonQuad,
    Airy,
    Tw,
    Residual,
    Symbolic,
    Verify,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::DysonMc => "dyson-mc",
            Mode::DysonQuad => "dyson-quad",
            Mode::Airy => "airy",
            Mode::Tw => "tw",
            Mode::Residual => "residual",
            Mode::Symbolic => "symbolic",
            Mode::Verify => "verify",
        }
    }

    pub fn uses_randomness(self) -> bool {
        matches!(self, Mode::DysonMc)
    }
}

/// Mode-specific knobs; every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Options {
    /// Monte Carlo sample count.
    pub samples: u64,
    /// Gauss-Legendre nodes per panel (chain quadrature) or per slice
    /// (Fredholm determinant).
    pub nodes: usize,
    /// Initial panels per interval for chain quadrature.
    pub panels: usize,
    /// Tail truncation: `L * sigma` for chain quadrature, `L` for the
    /// Fredholm complement sets.
    pub trunc: f64,
    /// Convergence target.
    pub tol: f64,
    /// Finite-difference step schedule, coarsest first.
    pub h: Vec<f64>,
    /// Residual model: `dyson` or `airy`.
    pub model: Option<String>,
    /// Symbolic check name.
    pub check: Option<String>,
    /// Series truncation order.
    pub order: u8,
    /// Lemma for `verify`: `virasoro` or `e0em`.
    pub lemma: Option<String>,
    /// Slice and operator order for the Virasoro check.
    pub slice: usize,
    pub op_order: u8,
    /// Write per-slice eigenvalue samples (Monte Carlo).
    pub csv: bool,
    /// Number of time gaps for grid-free symbolic checks.
    pub m: usize,
    /// Tracy-Widom table range and spacing.
    pub from: f64,
    pub to: f64,
    pub step: f64,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            samples: 100_000,
            nodes: 0,
            panels: 4,
            trunc: 0.0,
            tol: 1e-12,
            h: Vec::new(),
            model: None,
            check: None,
            order: 4,
            lemma: None,
            slice: 0,
            op_order: 1,
            csv: false,
            m: 1,
            from: -6.0,
            to: 2.0,
            step: 0.5,
        }
    }
}

/// Raw JSON form of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub mode: String,
    #[serde(default = "one")]
    pub n: usize,
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default)]
    pub windows: Vec<Vec<Endpoint>>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub options: Options,
}

fn one() -> usize {
    1
}

/// Validated experiment configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub n: usize,
    pub grid: TimeGrid,
    pub windows: WindowFamily,
    pub seed: Option<u64>,
    pub options: Options,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CoreError> {
        let raw: RawConfig =
            serde_json::from_str(text).map_err(|e| CoreError::invalid("config", e.to_string()))?;
        Self::from_raw(raw)
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self, CoreError> {
        let mode: Mode = serde_json::from_value(serde_json::Value::String(raw.mode.clone()))
            .map_err(|_| CoreError::invalid("mode", format!("unknown mode `{}`", raw.mode)))?;
        if raw.n == 0 {
            return Err(CoreError::invalid("n", "particle count must be positive"));
        }
        let times = if raw.times.is_empty() {
            vec![0.0]
        } else {
            raw.times
        };
        let grid = TimeGrid::new(times)?;
        let windows = if raw.windows.is_empty() {
            WindowFamily {
                windows: vec![IntervalUnion::full(); grid.times().len()],
            }
        } else {
            let mut ws = Vec::new();
            for (l, w) in raw.windows.into_iter().enumerate() {
                ws.push(IntervalUnion::new(w).map_err(|e| e.at(format!("windows[{l}]")))?);
            }
            WindowFamily::new(ws, &grid)?
        };
        if mode.uses_randomness() && raw.seed.is_none() {
            return Err(CoreError::invalid(
                "seed",
                "a seed is required for this mode",
            ));
        }
        if mode == Mode::Airy {
            windows.airy_admissible()?;
        }
        let o = &raw.options;
        if o.tol <= 0.0 {
            return Err(CoreError::invalid("options.tol", "must be positive"));
        }
        if o.trunc < 0.0 {
            return Err(CoreError::invalid("options.trunc", "must be non-negative"));
        }
        if o.nodes != 0 && o.nodes < 4 {
            return Err(CoreError::invalid("options.nodes", "at least 4 nodes"));
        }
        if mode == Mode::Tw && !(o.step > 0.0 && o.to >= o.from) {
            return Err(CoreError::invalid(
                "options.step",
                "need step > 0 and to >= from",
            ));
        }
        if o.h.iter().any(|h| *h <= 0.0) {
            return Err(CoreError::invalid("options.h", "steps must be positive"));
        }
        Ok(ExperimentConfig {
            mode,
            n: raw.n,
            grid,
            windows,
            seed: raw.seed,
            options: raw.options,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(x: f64) -> Endpoint {
        Endpoint::Finite(x)
    }

    #[test]
    fn locus_two_times() {
        let g = TimeGrid::new(vec![0.0, 2f64.ln()]).unwrap();
        let l = build_locus(&g).unwrap();
        assert!((l.t2[0] + 4.0 / 3.0).abs() < 1e-15);
        assert!((l.t2[1] + 4.0 / 3.0).abs() < 1e-15);
        assert!((l.c11[0] - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn locus_far_apart() {
        let g = TimeGrid::new(vec![0.0, 60.0]).unwrap();
        let l = build_locus(&g).unwrap();
        assert!((l.t2[0] + 1.0).abs() < 1e-15 && (l.t2[1] + 1.0).abs() < 1e-15);
        assert!(l.c11[0].abs() < 1e-25);
    }

    #[test]
    fn locus_three_times() {
        let g = TimeGrid::new(vec![0.0, 2f64.ln(), 6f64.ln()]).unwrap();
        let l = build_locus(&g).unwrap();
        assert!((l.t2[1] + 35.0 / 24.0).abs() < 1e-14);
    }

    #[test]
    fn locus_needs_two_times() {
        let g = TimeGrid::new(vec![0.0]).unwrap();
        let err = build_locus(&g).unwrap_err();
        assert!(err
            .to_string()
            .contains("locus requires at least two times"));
    }

    #[test]
    fn complements() {
        let a = IntervalUnion::half_line(0.0).complement();
        assert_eq!(a.endpoints(), &[e(0.0), Endpoint::PosInf]);
        assert!(a.contains(0.0) && a.contains(5.0) && !a.contains(-1.0));
        assert!(IntervalUnion::full().complement().is_empty());
        let b = IntervalUnion::new(vec![e(-1.0), e(1.0), e(2.0), e(3.0)]).unwrap();
        let c = b.complement();
        assert_eq!(
            c.endpoints(),
            &[
                Endpoint::NegInf,
                e(-1.0),
                e(1.0),
                e(2.0),
                e(3.0),
                Endpoint::PosInf
            ]
        );
        assert!(c.contains(1.0) && c.contains(2.0) && c.contains(-7.0));
        assert!(!c.contains(0.0) && !c.contains(2.5));
        assert_eq!(c.complement(), b);
    }

    #[test]
    fn open_membership_is_strict() {
        let u = IntervalUnion::interval(-1.0, 1.0).unwrap();
        assert!(!u.contains(1.0) && !u.contains(-1.0) && u.contains(0.999));
    }

    #[test]
    fn rejects_bad_windows() {
        assert!(IntervalUnion::new(vec![e(1.0), e(0.0)]).is_err());
        assert!(IntervalUnion::new(vec![e(0.0), e(1.0), e(1.0), e(2.0)]).is_err());
        assert!(IntervalUnion::new(vec![e(0.0)]).is_err());
        assert!(IntervalUnion::new(vec![e(0.0), Endpoint::NegInf]).is_err());
    }

    #[test]
    fn time_grid_invariants() {
        assert!(TimeGrid::new(vec![0.1, 1.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        let g = TimeGrid::new(vec![0.0, 0.5, 1.25]).unwrap();
        assert_eq!(g.increments(), vec![0.5, 0.75]);
        assert_eq!(g.reversed().times(), &[0.0, 0.75, 1.25]);
    }

    #[test]
    fn config_round_trip() {
        let text = r#"{"mode": "dyson-mc", "n": 2, "times": [0, 1],
            "windows": [["-inf", 0.5], ["-inf", 0.5]], "seed": 7,
            "options": {"samples": 1000}}"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(c.mode, Mode::DysonMc);
        assert_eq!(c.options.samples, 1000);
        assert_eq!(c.windows.windows()[1].endpoints()[0], Endpoint::NegInf);
    }

    #[test]
    fn config_errors_name_the_field() {
        let bad = r#"{"mode": "airy", "times": [0, 1], "windows": [["-inf", 0], [1, 0]]}"#;
        let err = ExperimentConfig::from_json(bad).unwrap_err();
        assert!(err.to_string().contains("windows[1]"), "{err}");
        let unknown = r#"{"mode": "nope"}"#;
        assert!(ExperimentConfig::from_json(unknown)
            .unwrap_err()
            .to_string()
            .contains("mode"));
        let seedless = r#"{"mode": "dyson-mc"}"#;
        assert!(ExperimentConfig::from_json(seedless)
            .unwrap_err()
            .to_string()
            .contains("seed"));
    }
}
