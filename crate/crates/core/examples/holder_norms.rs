//! Parabolic Hölder norms of a strip and of a whole triangle field.

use std::f64::consts::PI;

use nonlocal_core::grid::{build_grid, TriangleField};
use nonlocal_core::holder::{norm_parabolic, norm_triangle};

fn main() -> nonlocal_core::Result<()> {
    let g = build_grid(1.0, 32, 2.0 * PI, 32, 1, 1, 1)?;
    let u = TriangleField::from_fn(&g, |p, o| o[0] = (1.0 + p.t) * (1.0 + p.s) * p.y[0].sin());
    let l = 2.5;
    let rep = norm_parabolic(&u, g.n_tau(), 0, l)?;
    println!("strip t = T, l = {l}, α = {}", rep.alpha);
    for (kind, terms) in [("sup", &rep.sup_terms), ("[.]_y", &rep.seminorm_y), ("[.]_s", &rep.seminorm_s)] {
        for t in terms {
            let ex = t.exponent.map(|e| format!(" exponent {e}")).unwrap_or_default();
            println!("  {kind:6} D_s^{} D_y^{}{ex}: {:.6}", t.s_order, t.y_order, t.value);
        }
    }
    println!("  total {:.6}", rep.total);
    println!("sup over t: {:.6}", norm_triangle(&u, l, false)?);
    println!("with t-derivative: {:.6}", norm_triangle(&u, l, true)?);
    Ok(())
}
