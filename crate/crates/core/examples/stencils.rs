//! Central-difference stencils on a periodic slice, and their second-order
//! accuracy on `sin(y)`.

use std::f64::consts::PI;

use nonlocal_core::grid::{build_grid, stencil_apply, MultiIndex, SpatialSlice};

fn main() -> nonlocal_core::Result<()> {
    let exact: [(&str, fn(f64) -> f64); 3] = [("1", f64::cos), ("11", |y: f64| -y.sin()), ("111", |y: f64| -y.cos())];
    println!("{:>5} {:>5} {:>12} {:>8}", "I", "n_y", "sup error", "order");
    for (label, f) in exact {
        let idx = MultiIndex::parse_label(label, 1).expect("valid label");
        let mut prev = None;
        for n_y in [16, 32, 64, 128] {
            let g = build_grid(1.0, 1, 2.0 * PI, n_y, 1, 1, 1)?;
            let u = SpatialSlice::from_fn(&g, |y| y[0].sin());
            let du = stencil_apply(&u, idx, g.dy(), g.r())?;
            let err = (0..g.n_space()).map(|k| (du.get(k, 0) - f(g.y(k)[0])).abs()).fold(0.0, f64::max);
            let order = prev.map(|p: f64| format!("{:.3}", (p / err).log2())).unwrap_or_default();
            println!("{:>5} {n_y:>5} {err:>12.4e} {order:>8}", idx.to_string());
            prev = Some(err);
        }
    }
    // mixed derivative in two dimensions
    let g = build_grid(1.0, 1, 2.0 * PI, 32, 2, 1, 1)?;
    let u = SpatialSlice::from_fn(&g, |y| (y[0] + 2.0 * y[1]).sin());
    let d12 = stencil_apply(&u, MultiIndex::parse_label("12", 2).expect("valid label"), g.dy(), 1)?;
    let err = (0..g.n_space())
        .map(|k| {
            let y = g.y(k);
            (d12.get(k, 0) + 2.0 * (y[0] + 2.0 * y[1]).sin()).abs()
        })
        .fold(0.0, f64::max);
    println!("d=2, ∂1∂2 sin(y1 + 2 y2) at n_y=32: sup error {err:.4e}");
    Ok(())
}
