//! Finite-difference check of every differentiable op and layer.

use csi_sense::nn::gradcheck::{check_fn, run_suite};

fn main() -> csi_sense::Result<()> {
    let trials = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    let mut worst = 0.0f64;
    for (op, report) in run_suite(trials, 2024)? {
        println!(
            "{op:<20} max rel error {:.2e} over {:>5} coordinates ({} skipped at kinks)",
            report.max_rel_error, report.checked, report.skipped
        );
        worst = worst.max(report.max_rel_error);
    }
    println!("worst {worst:.2e}");

    // Any scalar function works too: f(x) = sum x_i^3.
    let x = [0.5, -1.25, 2.0];
    let analytic: Vec<f64> = x.iter().map(|v| 3.0 * v * v).collect();
    let r = check_fn(|v| v.iter().map(|a| a * a * a).sum(), &x, &analytic);
    println!("sum of cubes: {:.2e}", r.max_rel_error);
    Ok(())
}
