//! Convergence tables for the Dyson and Airy PDE residuals.
//!
//! `cargo run --release -p rmtlab-core --example residual_study`

use rmtlab_core::quadrature::QuadratureSpec;
use rmtlab_core::residual::{airy_pde_residual, dyson_pde_residual, ResidualReport};
use rmtlab_core::tau::halving_schedule;
use rmtlab_core::{TimeGrid, WindowFamily};
use rmtlab_symbolic::AiryForm;

fn show(title: &str, r: &ResidualReport) {
    println!("{title} ({} ms)", r.elapsed_ms);
    println!(
        "  {:>8}  {:>11}  {:>6}  {:>10}",
        "h", "residual", "ratio", "max term"
    );
    for (i, l) in r.levels.iter().enumerate() {
        let ratio = if i == 0 {
            String::new()
        } else {
            format!("{:.2}", r.ratios[i - 1])
        };
        println!(
            "  {:>8}  {:>11.3e}  {:>6}  {:>10.3e}",
            l.h, l.residual, ratio, r.max_term[i]
        );
    }
    if let Some(x) = r.richardson {
        println!("  extrapolated residual {x:.2e}");
    }
    if let Some(x) = r.noise_floor {
        println!("  field noise floor {x:.2e}");
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = QuadratureSpec::default();
    let h = halving_schedule(0.04, 3);
    let g = TimeGrid::new(vec![0.0, 1.0])?;
    show(
        "Dyson n=1, two times",
        &dyson_pde_residual(1, &g, &WindowFamily::half_lines(&[0.1, -0.2]), &h, &spec)?,
    );
    show(
        "Dyson n=2, two times",
        &dyson_pde_residual(2, &g, &WindowFamily::half_lines(&[0.5, 0.3]), &h, &spec)?,
    );
    let g3 = TimeGrid::new(vec![0.0, 0.6, 1.4])?;
    show(
        "Dyson n=1, three times",
        &dyson_pde_residual(
            1,
            &g3,
            &WindowFamily::half_lines(&[0.1, -0.2, 0.3]),
            &h,
            &spec,
        )?,
    );

    let ha = halving_schedule(0.1, 4);
    show(
        "Airy, two times",
        &airy_pde_residual(
            &g,
            &WindowFamily::half_lines(&[0.5, -0.3]),
            &ha,
            0,
            0.0,
            AiryForm::Limit,
        )?,
    );
    let g3 = TimeGrid::new(vec![0.0, 0.7, 1.5])?;
    let w3 = WindowFamily::half_lines(&[0.5, -0.3, 0.2]);
    for form in [AiryForm::Limit, AiryForm::Theorem] {
        show(
            &format!("Airy, three times, {form:?} form"),
            &airy_pde_residual(&g3, &w3, &ha[..3], 0, 0.0, form)?,
        );
    }
    Ok(())
}
