//! Manufactured-solution convergence study with fitted orders.

use std::f64::consts::PI;

use nonlocal_core::fixedpoint::FixedPointConfig;
use nonlocal_core::grid::build_grid;
use nonlocal_core::linsolve::SchemeConfig;
use nonlocal_core::systems::make_preset;
use nonlocal_core::verify::{convergence_study, forcing_residual, mms_forcing, ManufacturedSolution, Route};

fn main() -> nonlocal_core::Result<()> {
    let exact = ManufacturedSolution::sine_product(1)?;
    println!("manufactured solution {} (self-check {:.1e})", exact.source(), exact.self_check()?);

    let forced = mms_forcing(&exact, &make_preset("nonlocal_heat_linear")?)?;
    println!("forcing residual {:.1e}", forcing_residual(&exact, &forced)?);

    // Δτ ∝ Δy²
    let grids = [(64, 16), (256, 32), (1024, 64)]
        .iter()
        .map(|&(nt, ny)| build_grid(1.0, nt, 2.0 * PI, ny, 1, 1, 1))
        .collect::<Result<Vec<_>, _>>()?;
    let res = convergence_study(&forced, &exact, &grids, Route::Linear, &SchemeConfig::explicit(), &FixedPointConfig::default())?;
    for (g, (e, l2)) in res.grids.iter().zip(res.sup_errors.iter().zip(&res.l2_errors)) {
        println!("  n_tau {:>5} n_y {:>3}: sup {e:.4e}  l2 {l2:.4e}", g.n_tau, g.n_y);
    }
    println!("spatial order  {:.3} ± {:.3}", res.spatial.order, res.spatial.ci95);
    println!("temporal order {:.3} ± {:.3}", res.temporal.order, res.temporal.ci95);
    Ok(())
}
