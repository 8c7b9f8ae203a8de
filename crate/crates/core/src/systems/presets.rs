//! Built-in problem catalog. All presets live on the box `[0, 2π)^d`.

use super::{
    Coefficient, FullyNonlinearSpec, InitialData, JetCoefficient, LinearSystemSpec, Partial, Problem,
    QuasilinearSystemSpec,
};
use crate::error::{Error, Result};
use crate::grid::MultiIndex;

pub const PRESET_NAMES: &[&str] = &[
    "nonlocal_heat_linear",
    "nonlocal_heat_linear_mms",
    "local_family",
    "local_family_mms",
    "nonlocal_negative",
    "nonlocal_biharmonic",
    "quasilinear_demo",
    "fullnl_heat",
    "fullnl_exp",
    "fullnl_exp_mms",
    "fullnl_exp_2d",
];

/// Catalog metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct PresetInfo {
    pub name: &'static str,
    pub summary: &'static str,
    /// Documented ellipticity constant; `None` for negative examples.
    pub lambda: Option<f64>,
    /// Manufactured exact solution, as an expression in `t, s, y1`.
    pub exact: Option<&'static str>,
}

const MMS_EXACT: &str = "(1 + t) * (1 + s) * sin(y1)";

pub fn preset_info(name: &str) -> Result<PresetInfo> {
    let (summary, lambda, exact) = match name {
        "nonlocal_heat_linear" => ("u_s = u_yy(t,s,y) + u_yy(s,s,y), g = (1+t) sin y", Some(1.0), None),
        "nonlocal_heat_linear_mms" => ("nonlocal heat forced towards (1+t)(1+s) sin y", Some(1.0), Some(MMS_EXACT)),
        "local_family" => ("u_s = u_yy(t,s,y), g = (1+t) sin y", Some(1.0), None),
        "local_family_mms" => ("local heat family forced towards (1+t)(1+s) sin y", Some(1.0), Some(MMS_EXACT)),
        "nonlocal_negative" => ("u_s = u_yy(t,s,y) - 2 u_yy(s,s,y): A + B is not elliptic", None, None),
        "nonlocal_biharmonic" => ("u_s = -u_yyyy(t,s,y) - 0.5 u_yyyy(s,s,y)", Some(1.0), None),
        "quasilinear_demo" => ("u_s = (1 + sin²u / 4) u_yy(t,s,y) + u_yy(s,s,y) / 2", Some(1.0), None),
        "fullnl_heat" => ("F = q11 + nq11, g = (1+t) sin y", Some(1.0), None),
        "fullnl_exp" => ("F = q11 + tanh(nq11), g = (1+t) sin y", Some(1.0), None),
        "fullnl_exp_mms" => ("F = q11 + tanh(nq11) + h, exact (1+t)(1+s) sin y", Some(1.0), Some(MMS_EXACT)),
        "fullnl_exp_2d" => ("F = q11 + q22 + tanh(nq11 + nq22), g = (1+t) sin(y1 + 2 y2) / 2", Some(1.0), None),
        _ => return Err(Error::UnknownPreset(name.to_string())),
    };
    let name = PRESET_NAMES.iter().find(|n| **n == name).expect("catalogued");
    Ok(PresetInfo {
        name,
        summary,
        lambda,
        exact,
    })
}

fn sine_data() -> InitialData {
    InitialData::scalar(|t, y| (1.0 + t) * y[0].sin())
        .with_scalar_derivative(MultiIndex::pure(0, 1), |t, y| (1.0 + t) * y[0].cos())
        .with_scalar_derivative(MultiIndex::pure(0, 2), |t, y| -(1.0 + t) * y[0].sin())
        .with_scalar_derivative(MultiIndex::pure(0, 3), |t, y| -(1.0 + t) * y[0].cos())
        .with_scalar_derivative(MultiIndex::pure(0, 4), |t, y| (1.0 + t) * y[0].sin())
        .with_scalar_time_derivative(|_, y| y[0].sin())
}

fn heat(name: &str, b: f64, forcing: Option<Coefficient>) -> Result<LinearSystemSpec> {
    let q11 = MultiIndex::pure(0, 2);
    let mut s = LinearSystemSpec::new(name, 1, 1, 1, sine_data())?;
    s.set_a(q11, Coefficient::scalar(1.0))?;
    if b != 0.0 {
        s.set_b(q11, Coefficient::scalar(b))?;
    }
    if let Some(f) = forcing {
        s.set_f(f)?;
    }
    Ok(s)
}

fn sech2(x: f64) -> f64 {
    let c = x.cosh();
    1.0 / (c * c)
}

/// `h = (1+t) sin y + (1+t)(1+s) sin y + tanh((1+s)² sin y)`, the residual
/// of the exact solution in `F = q11 + tanh(nq11)`.
fn mms_h(t: f64, s: f64, y: f64) -> f64 {
    let sy = y.sin();
    (1.0 + t) * sy + (1.0 + t) * (1.0 + s) * sy + ((1.0 + s) * (1.0 + s) * sy).tanh()
}

fn fullnl_exp(name: &str, forced: bool) -> Result<FullyNonlinearSpec> {
    let q11 = MultiIndex::pure(0, 2);
    let mut spec = FullyNonlinearSpec::new(
        name,
        1,
        move |p, jet| {
            let base = jet.local(q11)[0] + jet.diagonal(q11)[0].tanh();
            Ok(if forced { base + mms_h(p.t, p.s, p.y[0]) } else { base })
        },
        sine_data(),
    )?;
    spec.set_partial(Partial::Q(0), |_, _| Ok(1.0));
    spec.set_partial(Partial::N(0), move |_, jet| Ok(sech2(jet.diagonal(q11)[0])));
    if forced {
        spec.set_partial(Partial::T, |p, _| {
            let sy = p.y[0].sin();
            Ok(sy + (1.0 + p.s) * sy)
        });
        spec.set_partial(Partial::S, |p, _| {
            let sy = p.y[0].sin();
            let w = (1.0 + p.s) * (1.0 + p.s) * sy;
            Ok((1.0 + p.t) * sy + sech2(w) * 2.0 * (1.0 + p.s) * sy)
        });
        spec.set_partial(Partial::Y(0), |p, _| {
            let (sy, cy) = p.y[0].sin_cos();
            let w = (1.0 + p.s) * (1.0 + p.s) * sy;
            Ok((1.0 + p.t) * cy + (1.0 + p.t) * (1.0 + p.s) * cy + sech2(w) * (1.0 + p.s) * (1.0 + p.s) * cy)
        });
    } else {
        spec.set_partial(Partial::T, |_, _| Ok(0.0));
        spec.set_partial(Partial::S, |_, _| Ok(0.0));
        spec.set_partial(Partial::Y(0), |_, _| Ok(0.0));
    }
    Ok(spec)
}

fn fullnl_heat() -> Result<FullyNonlinearSpec> {
    let q11 = MultiIndex::pure(0, 2);
    let mut spec = FullyNonlinearSpec::new(
        "fullnl_heat",
        1,
        move |_, jet| Ok(jet.local(q11)[0] + jet.diagonal(q11)[0]),
        sine_data(),
    )?;
    for p in [Partial::T, Partial::S, Partial::Y(0)] {
        spec.set_partial(p, |_, _| Ok(0.0));
    }
    spec.set_partial(Partial::Q(0), |_, _| Ok(1.0));
    spec.set_partial(Partial::N(0), |_, _| Ok(1.0));
    Ok(spec)
}

fn fullnl_exp_2d() -> Result<FullyNonlinearSpec> {
    let q11 = MultiIndex::pure(0, 2);
    let q22 = MultiIndex::pure(1, 2);
    let g = InitialData::scalar(|t, y| 0.5 * (1.0 + t) * (y[0] + 2.0 * y[1]).sin())
        .with_scalar_derivative(MultiIndex::axis(0), |t, y| 0.5 * (1.0 + t) * (y[0] + 2.0 * y[1]).cos())
        .with_scalar_derivative(MultiIndex::axis(1), |t, y| (1.0 + t) * (y[0] + 2.0 * y[1]).cos())
        .with_scalar_time_derivative(|_, y| 0.5 * (y[0] + 2.0 * y[1]).sin());
    let mut spec = FullyNonlinearSpec::new(
        "fullnl_exp_2d",
        2,
        move |_, jet| {
            Ok(jet.local(q11)[0] + jet.local(q22)[0] + (jet.diagonal(q11)[0] + jet.diagonal(q22)[0]).tanh())
        },
        g,
    )?;
    for p in [Partial::T, Partial::S, Partial::Y(0), Partial::Y(1)] {
        spec.set_partial(p, |_, _| Ok(0.0));
    }
    // slots: 0 = q11, 1 = q12, 2 = q22
    spec.set_partial(Partial::Q(0), |_, _| Ok(1.0));
    spec.set_partial(Partial::Q(1), |_, _| Ok(0.0));
    spec.set_partial(Partial::Q(2), |_, _| Ok(1.0));
    let nsum = move |jet: &crate::grid::Jet| jet.diagonal(q11)[0] + jet.diagonal(q22)[0];
    spec.set_partial(Partial::N(0), move |_, jet| Ok(sech2(nsum(jet))));
    spec.set_partial(Partial::N(1), |_, _| Ok(0.0));
    spec.set_partial(Partial::N(2), move |_, jet| Ok(sech2(nsum(jet))));
    Ok(spec)
}

fn quasilinear_demo() -> Result<QuasilinearSystemSpec> {
    let q11 = MultiIndex::pure(0, 2);
    let g = InitialData::scalar(|t, y| (1.0 + 0.5 * t) * y[0].sin())
        .with_scalar_derivative(MultiIndex::axis(0), |t, y| (1.0 + 0.5 * t) * y[0].cos())
        .with_scalar_time_derivative(|_, y| 0.5 * y[0].sin());
    let mut s = QuasilinearSystemSpec::new("quasilinear_demo", 1, 1, 1, g)?;
    s.set_a_top(
        q11,
        JetCoefficient::eval(|_, jet, out| {
            let su = jet.local(MultiIndex::EMPTY)[0].sin();
            out[0] = 1.0 + 0.25 * su * su;
            Ok(())
        }),
    )?;
    s.set_b_top(q11, JetCoefficient::constant(&[0.5]))?;
    Ok(s)
}

/// Builds a catalog problem with analytic derivative callbacks.
pub fn make_preset(name: &str) -> Result<Problem> {
    Ok(match name {
        "nonlocal_heat_linear" => Problem::Linear(heat(name, 1.0, None)?),
        "nonlocal_heat_linear_mms" => Problem::Linear(heat(
            name,
            1.0,
            Some(Coefficient::scalar_fn(|p| {
                let (t, s) = (p.t, p.s);
                ((1.0 + t) + (1.0 + t) * (1.0 + s) + (1.0 + s) * (1.0 + s)) * p.y[0].sin()
            })),
        )?),
        "local_family" => Problem::Linear(heat(name, 0.0, None)?),
        "local_family_mms" => Problem::Linear(heat(
            name,
            0.0,
            Some(Coefficient::scalar_fn(|p| {
                ((1.0 + p.t) + (1.0 + p.t) * (1.0 + p.s)) * p.y[0].sin()
            })),
        )?),
        "nonlocal_negative" => Problem::Linear(heat(name, -2.0, None)?),
        "nonlocal_biharmonic" => {
            let q = MultiIndex::pure(0, 4);
            let mut s = LinearSystemSpec::new(name, 1, 2, 1, sine_data())?;
            s.set_a(q, Coefficient::scalar(-1.0))?;
            s.set_b(q, Coefficient::scalar(-0.5))?;
            Problem::Linear(s)
        }
        "quasilinear_demo" => Problem::Quasilinear(quasilinear_demo()?),
        "fullnl_heat" => Problem::FullyNonlinear(fullnl_heat()?),
        "fullnl_exp" => Problem::FullyNonlinear(fullnl_exp(name, false)?),
        "fullnl_exp_mms" => Problem::FullyNonlinear(fullnl_exp(name, true)?),
        "fullnl_exp_2d" => Problem::FullyNonlinear(fullnl_exp_2d()?),
        _ => return Err(Error::UnknownPreset(name.to_string())),
    })
}
