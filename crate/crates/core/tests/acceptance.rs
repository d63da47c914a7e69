//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. The Airy PDE residual check takes
//! minutes and only runs with `RMTLAB_STRETCH=1`.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rmtlab_core::fredholm::fredholm_value;
use rmtlab_core::ou::mc_joint_probability;
use rmtlab_core::painleve::tracy_widom_f2;
use rmtlab_core::quadrature::{joint_probability_quadrature, QuadratureSpec, TauParams};
use rmtlab_core::residual::{airy_pde_residual, dyson_pde_residual, ResidualReport};
use rmtlab_core::tau::{halving_schedule, verify_lemma_e0em, verify_virasoro_action};
use rmtlab_core::{IntervalUnion, TimeGrid, WindowFamily};
use rmtlab_symbolic::corollary::{check_corollary_m1, check_corollary_m2};
use rmtlab_symbolic::jk::jk_matrices;
use rmtlab_symbolic::series::series_cancellation;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Result<Outcome, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn symbolic_two_times() -> Result<Outcome, String> {
    let start = Instant::now();
    let r = check_corollary_m1().map_err(err)?;
    let c = &r.comparisons[0];
    let el = start.elapsed();
    Ok(verdict(
        r.status == "exact-match" && c.exact() && within(el, 1.0),
        format!(
            "status {}, {} terms, {} mismatched, factor {}, {:.2?}",
            r.status,
            c.total_terms,
            c.mismatched.len(),
            c.factor.as_deref().unwrap_or("-"),
            el
        ),
    ))
}

fn symbolic_three_times() -> Result<Outcome, String> {
    let start = Instant::now();
    let r = check_corollary_m2().map_err(err)?;
    let el = start.elapsed();
    let printed = &r.comparisons[0];
    let candidates = &r.comparisons[1];
    let sites_ok = !r.typos.is_empty()
        && r.typos.len() <= 2
        && r.typos
            .iter()
            .all(|t| t.candidate_resolves && !t.site.candidate.is_empty());
    Ok(verdict(
        r.status == "match-modulo-flagged-typos"
            && candidates.exact()
            && sites_ok
            && within(el, 5.0),
        format!(
            "status {}, as printed {}/{} terms, with {} flagged candidates {}/{}, {:.2?}",
            r.status,
            printed.matched,
            printed.total_terms,
            r.typos.len(),
            candidates.matched,
            candidates.total_terms,
            el
        ),
    ))
}

fn series() -> Result<Outcome, String> {
    let mut ok = true;
    let mut parts = Vec::new();
    for m in 1..=3 {
        let start = Instant::now();
        let r = series_cancellation(m, 4).map_err(err)?;
        let el = start.elapsed();
        ok &= r.leading_orders_vanish && r.matches_limit_form;
        if m == 3 {
            ok &= within(el, 60.0);
        }
        parts.push(format!(
            "m={m}: vanish {} limit {} ({:.1?})",
            r.leading_orders_vanish, r.matches_limit_form, el
        ));
    }
    Ok(verdict(ok, parts.join("; ")))
}

fn jk_rows() -> Result<Outcome, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for m in 1..=6 {
        for _ in 0..100 {
            let mut times = vec![0.0];
            for _ in 0..m {
                let s: f64 = rng.random_range(0.05..2.0);
                times.push(times.last().unwrap() + s);
            }
            let r = jk_matrices(&times).map_err(err)?;
            worst = worst.max(r.j_row_error).max(r.k_row_error);
        }
    }
    let el = start.elapsed();
    Ok(verdict(
        worst <= 1e-12 && within(el, 1.0),
        format!("worst row error {worst:.2e} over 600 grids, {el:.2?}"),
    ))
}

fn tracy_widom_routes() -> Result<Outcome, String> {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for u in [-4.0, -2.0, 0.0, 1.0] {
        let f = fredholm_value(&[0.0], &[IntervalUnion::half_line(u)], 80, 12.0).map_err(err)?;
        let p = tracy_widom_f2(u).map_err(err)?.value;
        worst = worst.max((f - p).abs());
    }
    let el = start.elapsed();
    Ok(verdict(
        worst <= 1e-6 && within(el, 10.0),
        format!("max |Fredholm - Painleve| {worst:.2e} at 80 nodes, {el:.2?}"),
    ))
}

fn decorrelation() -> Result<Outcome, String> {
    let start = Instant::now();
    let w = [IntervalUnion::half_line(0.0), IntervalUnion::half_line(0.0)];
    let f0 = fredholm_value(&[0.0], &w[..1], 40, 12.0).map_err(err)?;
    let mut gaps = Vec::new();
    let mut doubling = 0.0f64;
    for dt in [2.0, 4.0, 6.0] {
        let p = fredholm_value(&[0.0, dt], &w, 40, 12.0).map_err(err)?;
        let fine = fredholm_value(&[0.0, dt], &w, 80, 12.0).map_err(err)?;
        doubling = doubling.max((p - fine).abs());
        gaps.push((p - f0 * f0).abs());
    }
    let el = start.elapsed();
    let monotone = gaps.windows(2).all(|g| g[1] < g[0]);
    Ok(verdict(
        monotone && gaps[2] <= 5e-3 && doubling < 0.1 * gaps[2] && within(el, 120.0),
        format!(
            "gaps {:.3e} {:.3e} {:.3e}, node doubling change {doubling:.1e}, {el:.2?}",
            gaps[0], gaps[1], gaps[2]
        ),
    ))
}

fn residual_ok(r: &ResidualReport) -> bool {
    let rich = r.richardson.map(f64::abs).unwrap_or(f64::INFINITY);
    rich <= 1e-3 * r.finest_max_term() && r.ratios.iter().all(|&q| q >= 3.0)
}

fn summary(r: &ResidualReport) -> String {
    let ratios: Vec<String> = r.ratios.iter().map(|q| format!("{q:.2}")).collect();
    format!(
        "ratios [{}], richardson {:.1e} vs max term {:.2e}",
        ratios.join(", "),
        r.richardson.unwrap_or(f64::NAN),
        r.finest_max_term()
    )
}

fn dyson_one_particle() -> Result<Outcome, String> {
    let start = Instant::now();
    let h = [0.04, 0.02, 0.01];
    let spec = QuadratureSpec::default();
    let g1 = TimeGrid::new(vec![0.0, 1.0]).map_err(err)?;
    let r1 = dyson_pde_residual(1, &g1, &WindowFamily::half_lines(&[0.1, -0.2]), &h, &spec)
        .map_err(err)?;
    let g2 = TimeGrid::new(vec![0.0, 0.6, 1.4]).map_err(err)?;
    let r2 = dyson_pde_residual(
        1,
        &g2,
        &WindowFamily::half_lines(&[0.1, -0.2, 0.3]),
        &h,
        &spec,
    )
    .map_err(err)?;
    let el = start.elapsed();
    Ok(verdict(
        residual_ok(&r1) && residual_ok(&r2) && within(el, 60.0),
        format!("m=1: {}; m=2: {}; {el:.2?}", summary(&r1), summary(&r2)),
    ))
}

/// Residuals fall at every refinement unless already at the floor.
fn trend_to_floor(r: &ResidualReport, floor: f64) -> bool {
    r.residual.windows(2).all(|w| w[1] < w[0] || w[1] <= floor)
}

fn dyson_two_particles() -> Result<Outcome, String> {
    let start = Instant::now();
    let g = TimeGrid::new(vec![0.0, 1.0]).map_err(err)?;
    let r = dyson_pde_residual(
        2,
        &g,
        &WindowFamily::half_lines(&[0.5, 0.3]),
        &[0.04, 0.02, 0.01],
        &QuadratureSpec::default(),
    )
    .map_err(err)?;
    let el = start.elapsed();
    let floor = 1e-10 * r.finest_max_term();
    Ok(verdict(
        trend_to_floor(&r, floor) && within(el, 600.0),
        format!("{}; {el:.2?}", summary(&r)),
    ))
}

fn lemma_and_virasoro() -> Result<Outcome, String> {
    let start = Instant::now();
    let spec = QuadratureSpec {
        panels: 8,
        ..QuadratureSpec::default()
    };
    // At 0.04 the first-order action on slice 0 is still pre-asymptotic:
    // its h^2 coefficient nearly vanishes at this point.
    let h = halving_schedule(0.02, 3);
    let iv = |a: f64, b: f64| IntervalUnion::interval(a, b).map_err(err);
    let mut ok = true;
    let mut parts = Vec::new();

    for times in [vec![0.0, 1.0], vec![0.0, 0.5, 1.2]] {
        let grid = TimeGrid::new(times).map_err(err)?;
        let w = vec![iv(-1.0, 1.0)?; grid.times().len()];
        let r = verify_lemma_e0em(&grid, &w, &h, &spec).map_err(err)?;
        let plateau = r.control_plateau_ok(1e-6);
        ok &= r.convergence.second_order() && plateau;
        parts.push(format!(
            "lemma m={}: ratios {:.2?}, control {:.7} vs {:.7}",
            grid.m(),
            r.convergence.ratios,
            r.control_extrapolated.abs(),
            r.expected_plateau
        ));
    }

    let grid = TimeGrid::new(vec![0.0, 0.5, 1.2]).map_err(err)?;
    let mut p = TauParams::locus(&grid).map_err(err)?;
    p.t1 = vec![0.2, -0.1, 0.3];
    let w = vec![
        iv(-1.0, 2.0)?,
        iv(-1.5, 0.5)?,
        IntervalUnion::half_line(1.0),
    ];
    let mut worst = (f64::INFINITY, 0.0f64);
    for order in [1u8, 2] {
        for l in 0..3 {
            let r = verify_virasoro_action(l, order, &p, &w, &h, &spec).map_err(err)?;
            ok &= r.second_order();
            for &q in &r.ratios {
                worst = (worst.0.min(q), worst.1.max(q));
            }
        }
    }
    parts.push(format!(
        "virasoro 6 actions: ratios in [{:.2}, {:.2}]",
        worst.0, worst.1
    ));
    let el = start.elapsed();
    ok &= within(el, 30.0);
    Ok(verdict(ok, format!("{}; {el:.2?}", parts.join("; "))))
}

fn monte_carlo() -> Result<Outcome, String> {
    let start = Instant::now();
    let n_samples = 1_000_000;
    let t = 1.0;
    let g = TimeGrid::new(vec![0.0, t]).map_err(err)?;
    let orthant = mc_joint_probability(1, &g, &WindowFamily::half_lines(&[0.0, 0.0]), n_samples, 7)
        .map_err(err)?;
    let exact = 0.25 + (-t).exp().asin() / (2.0 * PI);
    let z1 = (orthant.value - exact) / orthant.stderr;

    let w = WindowFamily::half_lines(&[0.5, 0.3]);
    let mc = mc_joint_probability(2, &g, &w, n_samples, 8).map_err(err)?;
    let quad = joint_probability_quadrature(2, &g, &w, &QuadratureSpec::default())
        .map_err(err)?
        .estimate;
    let z2 = (mc.value - quad.value) / mc.stderr;
    let el = start.elapsed();
    Ok(verdict(
        z1.abs() <= 4.0 && z2.abs() <= 3.0 && within(el, 120.0),
        format!(
            "n=1 orthant {:.5} vs {:.5} (z {z1:.2}); n=2 {:.5} vs quadrature {:.5} (z {z2:.2}); {el:.2?}",
            orthant.value, exact, mc.value, quad.value
        ),
    ))
}

fn airy_residual() -> Result<Outcome, String> {
    if std::env::var("RMTLAB_STRETCH").as_deref() != Ok("1") {
        return Ok(Outcome::Skip("set RMTLAB_STRETCH=1 to run".into()));
    }
    let start = Instant::now();
    let g = TimeGrid::new(vec![0.0, 1.0]).map_err(err)?;
    let r = airy_pde_residual(
        &g,
        &WindowFamily::half_lines(&[0.5, -0.3]),
        &halving_schedule(0.1, 4),
        80,
        0.0,
        rmtlab_symbolic::AiryForm::Limit,
    )
    .map_err(err)?;
    let el = start.elapsed();
    let floor = r.noise_floor.unwrap_or(0.0);
    let residuals: Vec<String> = r.residual.iter().map(|x| format!("{x:.2e}")).collect();
    Ok(verdict(
        !r.degenerate && trend_to_floor(&r, 3.0 * floor) && within(el, 1800.0),
        format!(
            "residuals [{}], {}, noise floor {floor:.1e}; {el:.1?}",
            residuals.join(", "),
            summary(&r)
        ),
    ))
}

fn main() {
    let checks: [(&str, Check); 11] = [
        ("symbolic two-time equivalence", symbolic_two_times),
        ("symbolic three-time report", symbolic_three_times),
        ("series cancellation", series),
        ("J/K closed forms", jk_rows),
        ("Tracy-Widom cross-route", tracy_widom_routes),
        ("Airy decorrelation", decorrelation),
        ("Dyson PDE residual n=1", dyson_one_particle),
        ("Dyson PDE residual n=2", dyson_two_particles),
        ("lemma and Virasoro checks", lemma_and_virasoro),
        ("Monte Carlo consistency", monte_carlo),
        ("Airy PDE residual (stretch)", airy_residual),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let line = match check() {
            Ok(Outcome::Pass(d)) => format!("PASS {name}: {d}"),
            Ok(Outcome::Fail(d)) => {
                failed += 1;
                format!("FAIL {name}: {d}")
            }
            Ok(Outcome::Skip(d)) => format!("SKIP {name}: {d}"),
            Err(e) => {
                failed += 1;
                format!("FAIL {name}: error: {e}")
            }
        };
        println!("[{:>2}] {line}", i + 1);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
