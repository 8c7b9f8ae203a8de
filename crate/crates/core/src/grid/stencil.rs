//! Periodic central-difference stencils.
//!
//! Arithmetic contract (relied on by the independent oracle solver, which
//! must reproduce it bit for bit):
//!
//! * first difference: `(u[k+1] - u[k-1]) / (2 Δy)`
//! * second difference: `((u[k+1] - 2 u[k]) + u[k-1]) / (Δy Δy)`
//! * `∂_I` is a sequence of passes: for each axis in ascending order, one
//!   first-difference pass if the axis count is odd, then `count / 2`
//!   second-difference passes. Every pass rounds into a full intermediate
//!   slice.

use super::{MultiIndex, SpatialSlice};
use crate::error::{Error, Result};

/// Reusable scratch space for stencil composition.
#[derive(Default, Clone, Debug)]
pub struct StencilWorkspace {
    a: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Clone, Copy)]
enum Pass {
    First,
    Second,
}

fn passes(index: MultiIndex, d: usize) -> Vec<(usize, Pass)> {
    let mut out = Vec::with_capacity(index.order());
    for axis in 0..d {
        let c = index.count(axis);
        if c % 2 == 1 {
            out.push((axis, Pass::First));
        }
        for _ in 0..c / 2 {
            out.push((axis, Pass::Second));
        }
    }
    out
}

fn apply_pass(
    src: &[f64],
    dst: &mut [f64],
    n_y: usize,
    d: usize,
    m: usize,
    dy: f64,
    axis: usize,
    pass: Pass,
) {
    let n_space = n_y.pow(d as u32);
    // stride between neighbours along `axis`, in nodes
    let stride = if d == 2 && axis == 0 { n_y } else { 1 };
    let den = match pass {
        Pass::First => 2.0 * dy,
        Pass::Second => dy * dy,
    };
    for k in 0..n_space {
        let coord = (k / stride) % n_y;
        let base = k - coord * stride;
        let kp = base + ((coord + 1) % n_y) * stride;
        let km = base + ((coord + n_y - 1) % n_y) * stride;
        for a in 0..m {
            let up = src[kp * m + a];
            let um = src[km * m + a];
            dst[k * m + a] = match pass {
                Pass::First => (up - um) / den,
                Pass::Second => (up - 2.0 * src[k * m + a] + um) / den,
            };
        }
    }
}

/// Writes `∂_I src` into `dst`. Both have layout `[node][component]`.
pub fn derivative_into(
    src: &[f64],
    dst: &mut [f64],
    index: MultiIndex,
    n_y: usize,
    d: usize,
    m: usize,
    dy: f64,
    ws: &mut StencilWorkspace,
) {
    debug_assert_eq!(src.len(), dst.len());
    let steps = passes(index, d);
    match steps.len() {
        0 => dst.copy_from_slice(src),
        1 => apply_pass(src, dst, n_y, d, m, dy, steps[0].0, steps[0].1),
        n => {
            ws.a.resize(src.len(), 0.0);
            ws.b.resize(src.len(), 0.0);
            apply_pass(src, &mut ws.a, n_y, d, m, dy, steps[0].0, steps[0].1);
            for (p, &(axis, pass)) in steps.iter().enumerate().skip(1) {
                if p == n - 1 {
                    let from = if p % 2 == 1 { &ws.a } else { &ws.b };
                    apply_pass(from, dst, n_y, d, m, dy, axis, pass);
                } else if p % 2 == 1 {
                    apply_pass(&ws.a, &mut ws.b, n_y, d, m, dy, axis, pass);
                } else {
                    apply_pass(&ws.b, &mut ws.a, n_y, d, m, dy, axis, pass);
                }
            }
        }
    }
}

/// Central-difference approximation of `∂_I` on a periodic slice.
///
/// `r` is the half-order of the system; orders up to `2r + 1` are accepted.
pub fn stencil_apply(
    slice: &SpatialSlice,
    index: MultiIndex,
    dy: f64,
    r: usize,
) -> Result<SpatialSlice> {
    if index.order() > 2 * r + 1 {
        return Err(Error::UnsupportedOrder(format!(
            "|I| = {} exceeds 2r+1 = {}",
            index.order(),
            2 * r + 1
        )));
    }
    if index.min_dimension() > slice.d {
        return Err(Error::UnsupportedOrder(format!(
            "index {index} uses an axis beyond d = {}",
            slice.d
        )));
    }
    let mut out = SpatialSlice::zeros(slice.n_y, slice.d, slice.m);
    let mut ws = StencilWorkspace::default();
    derivative_into(
        &slice.data,
        &mut out.data,
        index,
        slice.n_y,
        slice.d,
        slice.m,
        dy,
        &mut ws,
    );
    Ok(out)
}
