//! The temporal route `u ↦ N(M(u))` against the spatial route and the
//! manufactured exact solution.

use std::f64::consts::PI;

use nonlocal_core::fixedpoint::{solve_fully_nonlinear_spatial, solve_fully_nonlinear_temporal, FixedPointConfig};
use nonlocal_core::grid::build_grid;
use nonlocal_core::linsolve::SchemeConfig;
use nonlocal_core::systems::make_preset;
use nonlocal_core::verify::ManufacturedSolution;

fn main() -> nonlocal_core::Result<()> {
    let spec = make_preset("fullnl_exp_mms")?.into_fully_nonlinear()?;
    let exact = ManufacturedSolution::sine_product(1)?;
    let cfg = FixedPointConfig::default();
    println!("{:>6} {:>5} {:>12} {:>12} {:>12} {:>6}", "n_tau", "n_y", "spatial err", "temporal err", "routes diff", "iters");
    for (nt, ny) in [(16, 8), (64, 16), (256, 32)] {
        let g = build_grid(0.25, nt, 2.0 * PI, ny, 1, 1, 1)?;
        let u_star = exact.sample(&g)?;
        let sp = solve_fully_nonlinear_spatial(&spec, &g, &SchemeConfig::explicit(), &cfg)?;
        let (tu, rep) = solve_fully_nonlinear_temporal(&spec, &g, &SchemeConfig::explicit(), &cfg)?;
        println!(
            "{nt:>6} {ny:>5} {:>12.4e} {:>12.4e} {:>12.4e} {:>6}",
            sp.u().sup_distance(&u_star),
            tu.sup_distance(&u_star),
            sp.u().sup_distance(&tu),
            rep.iterations
        );
    }
    Ok(())
}
