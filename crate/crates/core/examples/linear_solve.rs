//! The nonlocal heat equation: explicit and IMEX marching, the reference
//! oracle, and the Schauder ratio.

use std::f64::consts::PI;

use nonlocal_core::grid::build_grid;
use nonlocal_core::linsolve::{schauder_ratio, solve_nonlocal_linear, SchemeConfig};
use nonlocal_core::systems::make_preset;
use nonlocal_core::verify::naive_oracle_solve;

fn main() -> nonlocal_core::Result<()> {
    let spec = make_preset("nonlocal_heat_linear")?.into_linear()?;

    let small = build_grid(0.125, 8, 2.0 * PI, 16, 1, 1, 1)?;
    let (u, _) = solve_nonlocal_linear(&spec, &small, &SchemeConfig::explicit().parallel(false))?;
    let o = naive_oracle_solve(&spec, &small)?;
    let same = u.values().zip(o.values()).all(|(a, b)| a.to_bits() == b.to_bits());
    println!("oracle agreement on {} values: bitwise {same}", u.values().count());

    let g = build_grid(1.0, 256, 2.0 * PI, 32, 1, 1, 1)?;
    let (e, rep) = solve_nonlocal_linear(&spec, &g, &SchemeConfig::explicit())?;
    println!("explicit: cfl ratio {:.3}, sup |u| {:.6}", rep.cfl_ratio, e.sup_norm());

    // half the steps: explicit is unstable, IMEX is not
    let coarse = build_grid(1.0, 128, 2.0 * PI, 32, 1, 1, 1)?;
    match solve_nonlocal_linear(&spec, &coarse, &SchemeConfig::explicit()) {
        Err(err) => println!("explicit at n_tau=128: {err}"),
        Ok(_) => println!("explicit at n_tau=128 unexpectedly ran"),
    }
    let (i, rep) = solve_nonlocal_linear(&spec, &coarse, &SchemeConfig::imex())?;
    println!("imex at n_tau=128: cfl ratio {:.3}, u(T,T,π/2) = {:.6}", rep.cfl_ratio, i.get(128, 128, 8, 0));
    println!("explicit at n_tau=256:        u(T,T,π/2) = {:.6}", e.get(256, 256, 8, 0));

    for c in [1.0, -3.0, 10.0] {
        let s = spec.with_scaled_data(c);
        let (u, _) = solve_nonlocal_linear(&s, &g, &SchemeConfig::explicit())?;
        println!("data scaled by {c:>5}: schauder ratio {:.12}", schauder_ratio(&u, &s, 2.5)?);
    }
    Ok(())
}
