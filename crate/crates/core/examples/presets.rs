//! The problem catalog with an ellipticity check of every entry.

use std::f64::consts::PI;

use nonlocal_core::grid::build_grid;
use nonlocal_core::systems::{check_ellipticity, make_preset, preset_info, SamplePlan, PRESET_NAMES};

fn main() -> nonlocal_core::Result<()> {
    for name in PRESET_NAMES {
        let info = preset_info(name)?;
        let p = make_preset(name)?;
        let (d, r, m) = p.shape();
        let g = build_grid(1.0, 4, 2.0 * PI, 9, d, r, m)?;
        let rep = check_ellipticity(&p, &SamplePlan::new(&g), info.lambda.unwrap_or(1.0))?;
        let verdict = match (&rep.worst_case, rep.passed) {
            (_, true) => format!("elliptic, λ ≈ {}", rep.lambda_est),
            (Some(w), false) => format!("NOT elliptic: {} ratio {} at t={} s={} y={:?}", w.condition, w.ratio, w.t, w.s, w.y),
            (None, false) => "NOT elliptic".into(),
        };
        println!("{name:26} {:15} {verdict}", p.kind());
        println!("{:26} {}", "", info.summary);
    }
    Ok(())
}
