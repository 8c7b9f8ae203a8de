//! Differentiating a fully nonlinear problem into a quasilinear system for
//! `(u, v = ∇u)` and inspecting its coefficients.

use nonlocal_core::quasilin::quasilinearize_spatial;
use nonlocal_core::systems::make_preset;

fn main() -> nonlocal_core::Result<()> {
    for name in ["fullnl_heat", "fullnl_exp", "fullnl_exp_2d"] {
        let spec = make_preset(name)?.into_fully_nonlinear()?;
        let induced = quasilinearize_spatial(&spec)?;
        let sk = induced.skeleton()?;
        println!("{name}: F = {}", sk.source);
        println!("  unknowns {:?}", sk.components);
        for e in &sk.top_order {
            let tag = |c: bool| if c { "const" } else { "varies" };
            println!(
                "  {:>3} {:>3}  A: {:28} ({})  B: {:28} ({})",
                e.index,
                e.component,
                e.local,
                tag(e.local_constant),
                e.diagonal,
                tag(e.diagonal_constant)
            );
        }
        for (c, f) in &sk.lower_order {
            println!("  lower order {c}: {f}");
        }
    }
    Ok(())
}
