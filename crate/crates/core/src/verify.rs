//! Manufactured solutions, an independent oracle for the explicit linear
//! scheme, convergence studies and field comparison.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{central_difference, parse, Compiled};
use crate::fixedpoint::{
    solve_fully_nonlinear_spatial, solve_fully_nonlinear_temporal, solve_quasilinear_fixedpoint, FixedPointConfig,
};
use crate::grid::{Jet, MultiIndex, Point, TriangleField, TriangleGrid};
use crate::linsolve::{solve_nonlocal_linear, SchemeConfig};
use crate::systems::{
    Coefficient, FullyNonlinearSpec, InitialData, JetCoefficient, LinearSystemSpec, Problem, QuasilinearSystemSpec,
};

/// Relative tolerance of the load-time derivative self-check.
pub const SELF_CHECK_TOL: f64 = 1e-6;
/// Absolute (scaled by `max(1, |u*_s|)`) tolerance of the forcing check.
pub const FORCING_CHECK_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
struct ScalarExpr {
    source: String,
    code: Arc<Compiled>,
}

impl ScalarExpr {
    fn new(text: &str, d: usize) -> Result<Self> {
        let e = parse(text)?;
        let mut slots = vec!["t", "s", "y1"];
        if d == 2 {
            slots.push("y2");
        }
        Ok(ScalarExpr {
            source: text.into(),
            code: Arc::new(Compiled::new(&e, &slots)?),
        })
    }

    fn at(&self, p: &Point, d: usize) -> Result<f64> {
        let v = [p.t, p.s, p.y[0], p.y[1]];
        self.code.eval(&v[..2 + d])
    }
}

/// An exact solution `u*(t, s, y)` with analytic derivatives.
#[derive(Clone, Debug)]
pub struct ManufacturedSolution {
    pub d: usize,
    pub r: usize,
    u: ScalarExpr,
    u_s: ScalarExpr,
    u_t: ScalarExpr,
    /// `∂_I u*` for `1 <= |I| <= 2r` (required) and `|I| = 2r + 1` (optional).
    derivatives: Vec<(MultiIndex, ScalarExpr)>,
}

/// 100 deterministic sample points of `0 <= s <= t <= 1`, `y ∈ [0, 2π)^d`.
fn lattice(n: usize, d: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let t: f64 = rng.gen_range(0.0..1.0);
            let s = rng.gen_range(0.0..=t);
            let mut y = [0.0; 2];
            for v in y.iter_mut().take(d) {
                *v = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
            }
            Point { t, s, y }
        })
        .collect()
}

impl ManufacturedSolution {
    /// Parses the expressions (in `t, s, y1[, y2]`) and runs the
    /// self-check. Derivatives are keyed by index labels (`"1"`, `"11"`,
    /// `"12"`, ...).
    pub fn new(d: usize, r: usize, u: &str, u_s: &str, u_t: &str, derivatives: &[(&str, &str)]) -> Result<Self> {
        if !(1..=2).contains(&d) || !(1..=2).contains(&r) {
            return Err(Error::InvalidParameter(format!("unsupported d = {d}, r = {r}")));
        }
        let mut ds = Vec::new();
        for (label, text) in derivatives {
            let idx = MultiIndex::parse_label(label, d)
                .filter(|i| i.order() >= 1 && i.order() <= 2 * r + 1)
                .ok_or_else(|| Error::InvalidParameter(format!("bad derivative label \"{label}\"")))?;
            if ds.iter().any(|(i, _)| *i == idx) {
                return Err(Error::InvalidParameter(format!("derivative {label} given twice")));
            }
            ds.push((idx, ScalarExpr::new(text, d)?));
        }
        for idx in MultiIndex::all_up_to(d, 2 * r).into_iter().skip(1) {
            if !ds.iter().any(|(i, _)| *i == idx) {
                return Err(Error::InvalidParameter(format!(
                    "manufactured solution lacks the derivative {}",
                    idx.label()
                )));
            }
        }
        ds.sort_by_key(|(i, _)| *i);
        let ms = ManufacturedSolution {
            d,
            r,
            u: ScalarExpr::new(u, d)?,
            u_s: ScalarExpr::new(u_s, d)?,
            u_t: ScalarExpr::new(u_t, d)?,
            derivatives: ds,
        };
        ms.self_check()?;
        Ok(ms)
    }

    /// `(1 + t)(1 + s) sin y1` in `d = 1`, derivatives to order 5.
    pub fn sine_product(r: usize) -> Result<Self> {
        let cyc = ["cos(y1)", "-sin(y1)", "-cos(y1)", "sin(y1)"];
        let labels: Vec<String> = (1..=2 * r + 1).map(|k| "1".repeat(k)).collect();
        let texts: Vec<String> = (0..2 * r + 1).map(|k| format!("(1 + t) * (1 + s) * {}", cyc[k % 4])).collect();
        let derivs: Vec<(&str, &str)> = labels.iter().zip(&texts).map(|(l, t)| (l.as_str(), t.as_str())).collect();
        Self::new(1, r, "(1 + t) * (1 + s) * sin(y1)", "(1 + t) * sin(y1)", "(1 + s) * sin(y1)", &derivs)
    }

    /// Checks every analytic derivative against a central difference of
    /// its parent expression at 100 lattice points; returns the largest
    /// relative discrepancy.
    pub fn self_check(&self) -> Result<f64> {
        let d = self.d;
        let mut worst = 0.0f64;
        let mut check = |what: &str, analytic: f64, fd: f64| -> Result<()> {
            let rel = (analytic - fd).abs() / analytic.abs().max(1.0);
            worst = worst.max(rel);
            if rel > SELF_CHECK_TOL {
                return Err(Error::SelfCheckFailed(format!(
                    "{what}: analytic {analytic} vs finite difference {fd}"
                )));
            }
            Ok(())
        };
        for p in lattice(100, d, 0x3153) {
            let fd_s = central_difference(|v| self.u.at(&Point { s: v, ..p }, d), p.s, 1.0)?;
            check("u_s", self.u_s.at(&p, d)?, fd_s)?;
            let fd_t = central_difference(|v| self.u.at(&Point { t: v, ..p }, d), p.t, 1.0)?;
            check("u_t", self.u_t.at(&p, d)?, fd_t)?;
            for (idx, e) in &self.derivatives {
                let axes = idx.axes();
                let last = *axes.last().expect("order >= 1");
                let parent = idx.without_axis(last).expect("axis present");
                let fd = central_difference(
                    |v| {
                        let mut q = p;
                        q.y[last] = v;
                        self.derivative(parent, &q)
                    },
                    p.y[last],
                    1.0,
                )?;
                check(&format!("derivative {}", idx.label()), e.at(&p, d)?, fd)?;
            }
        }
        Ok(worst)
    }

    pub fn value(&self, p: &Point) -> Result<f64> {
        self.u.at(p, self.d)
    }

    pub fn u_s(&self, p: &Point) -> Result<f64> {
        self.u_s.at(p, self.d)
    }

    pub fn u_t(&self, p: &Point) -> Result<f64> {
        self.u_t.at(p, self.d)
    }

    /// `∂_I u*` at a point (`I = ∅` gives the value).
    pub fn derivative(&self, index: MultiIndex, p: &Point) -> Result<f64> {
        if index.order() == 0 {
            return self.value(p);
        }
        let (_, e) = self
            .derivatives
            .iter()
            .find(|(i, _)| *i == index)
            .ok_or_else(|| Error::InvalidParameter(format!("no analytic derivative {}", index.label())))?;
        e.at(p, self.d)
    }

    pub fn source(&self) -> &str {
        &self.u.source
    }

    /// Jet of `u*` at `(t, s, y)`: local part at `(t, s, y)`, diagonal at
    /// `(s, s, y)`.
    pub fn jet(&self, p: &Point, order: usize) -> Result<Jet> {
        let mut jet = Jet::zeros(self.d, 1, order);
        let diag = Point { t: p.s, ..*p };
        for idx in MultiIndex::all_up_to(self.d, order) {
            jet.local_mut(idx)[0] = self.derivative(idx, p)?;
            jet.diagonal_mut(idx)[0] = self.derivative(idx, &diag)?;
        }
        Ok(jet)
    }

    pub fn sample(&self, grid: &TriangleGrid) -> Result<TriangleField> {
        let mut out = TriangleField::zeros(&grid.with_components(1));
        for i in 0..=grid.n_tau() {
            for j in 0..=i {
                let slice = out.slice_mut(i, j);
                for (k, v) in slice.iter_mut().enumerate() {
                    *v = self.value(&grid.point(i, j, k))?;
                }
            }
        }
        Ok(out)
    }

    pub fn sup_norm(&self, grid: &TriangleGrid) -> Result<f64> {
        Ok(self.sample(grid)?.sup_norm())
    }

    /// `g(t, y) = u*(t, 0, y)` with every analytic derivative and `g_t`.
    pub fn initial_data(&self) -> InitialData {
        let d = self.d;
        let at0 = |e: ScalarExpr| {
            move |t: f64, y: &[f64; 2], out: &mut [f64]| {
                out[0] = e.at(&Point { t, s: 0.0, y: *y }, d)?;
                Ok(())
            }
        };
        let mut g = InitialData::new(1, at0(self.u.clone())).with_time_derivative(at0(self.u_t.clone()));
        for (idx, e) in &self.derivatives {
            g = g.with_derivative(*idx, at0(e.clone()));
        }
        g
    }
}

/// Right-hand side of a problem applied to the exact solution, at `p`.
fn rhs_of_exact(problem: &Problem, ms: &ManufacturedSolution, p: &Point, with_source: bool) -> Result<f64> {
    let d = ms.d;
    match problem {
        Problem::Linear(spec) => {
            let diag = Point { t: p.s, ..*p };
            let mut acc = 0.0;
            let mut c = [0.0];
            for idx in spec.indices() {
                if !spec.a(idx).is_zero() {
                    spec.a(idx).fill(p, &mut c)?;
                    acc += c[0] * ms.derivative(idx, p)?;
                }
                if !spec.b(idx).is_zero() {
                    spec.b(idx).fill(p, &mut c)?;
                    acc += c[0] * ms.derivative(idx, &diag)?;
                }
            }
            if with_source && !spec.f().is_zero() {
                spec.f().fill(p, &mut c)?;
                acc += c[0];
            }
            Ok(acc)
        }
        Problem::Quasilinear(spec) => {
            let jet = ms.jet(p, spec.jet_order())?;
            let diag = Point { t: p.s, ..*p };
            let mut acc = 0.0;
            let mut c = [0.0];
            for idx in spec.top_indices() {
                if !spec.a_top(idx).is_zero() {
                    spec.a_top(idx).fill(p, &jet, &mut c)?;
                    acc += c[0] * ms.derivative(idx, p)?;
                }
                if !spec.b_top(idx).is_zero() {
                    spec.b_top(idx).fill(p, &jet, &mut c)?;
                    acc += c[0] * ms.derivative(idx, &diag)?;
                }
            }
            if with_source && !spec.f_low().is_zero() {
                spec.f_low().fill(p, &jet, &mut c)?;
                acc += c[0];
            }
            Ok(acc)
        }
        Problem::FullyNonlinear(spec) => {
            let _ = d;
            spec.eval(p, &ms.jet(p, 2)?)
        }
    }
}

/// Adds the forcing `h = u*_s - RHS(u*)` to a scalar skeleton, so that
/// `u*` solves the forced problem exactly; initial data become
/// `u*(t, 0, y)`. The result is checked at 1000 random points.
///
/// Linear skeletons get `f := u*_s - Σ A ∂u* - Σ B ∂u*(s,s)` (replacing
/// any source), quasilinear ones `F_low + h`, fully nonlinear ones `F + h`
/// (with the `t`, `s`, `y` partials of the forced `F` left to finite
/// differences).
pub fn mms_forcing(ms: &ManufacturedSolution, skeleton: &Problem) -> Result<Problem> {
    let (d, r, m) = skeleton.shape();
    if m != 1 {
        return Err(Error::UnsupportedMultiComponent(m));
    }
    if (d, r) != (ms.d, ms.r) {
        return Err(Error::InvalidParameter(format!(
            "solution has (d, r) = ({}, {}), problem has ({d}, {r})",
            ms.d, ms.r
        )));
    }
    let g = ms.initial_data();
    let forced = match skeleton {
        Problem::Linear(spec) => {
            let (sk, msc) = (Problem::Linear(spec.clone()), ms.clone());
            let f = Coefficient::eval(move |p, out| {
                out[0] = msc.u_s(p)? - rhs_of_exact(&sk, &msc, p, false)?;
                Ok(())
            });
            Problem::Linear(spec.with_data(f, g))
        }
        Problem::Quasilinear(spec) => {
            let mut q = QuasilinearSystemSpec::new(&format!("{}_mms", spec.name), d, r, 1, g)?;
            for idx in spec.top_indices() {
                q.set_a_top(idx, spec.a_top(idx).clone())?;
                q.set_b_top(idx, spec.b_top(idx).clone())?;
            }
            let (sk, msc) = (skeleton.clone(), ms.clone());
            let low = spec.f_low().clone();
            q.set_f_low(JetCoefficient::eval(move |p, jet, out| {
                let h = msc.u_s(p)? - rhs_of_exact(&sk, &msc, p, true)?;
                if low.is_zero() {
                    out[0] = h;
                } else {
                    low.fill(p, jet, out)?;
                    out[0] += h;
                }
                Ok(())
            }))?;
            Problem::Quasilinear(q)
        }
        Problem::FullyNonlinear(spec) => {
            let (base, msc) = (spec.clone(), ms.clone());
            let mut f = FullyNonlinearSpec::new(
                &format!("{}_mms", spec.name),
                d,
                move |p, jet| {
                    let h = msc.u_s(p)? - base.eval(p, &msc.jet(p, 2)?)?;
                    Ok(base.eval(p, jet)? + h)
                },
                g,
            )?;
            f.f_q = spec.f_q.clone();
            f.f_n = spec.f_n.clone();
            f.lower_order_dependence = spec.lower_order_dependence;
            f.fd_fallback = true;
            Problem::FullyNonlinear(f)
        }
    };
    let worst = forcing_residual(ms, &forced)?;
    if worst > FORCING_CHECK_TOL {
        return Err(Error::SelfCheckFailed(format!(
            "manufactured solution misses the forced equation by {worst:e}"
        )));
    }
    Ok(forced)
}

/// Largest scaled residual `|u*_s - RHS(u*)| / max(1, |u*_s|)` of a forced
/// problem at 1000 random points.
pub fn forcing_residual(ms: &ManufacturedSolution, forced: &Problem) -> Result<f64> {
    let mut worst = 0.0f64;
    for p in lattice(1000, ms.d, 0x1000) {
        let us = ms.u_s(&p)?;
        let res = (us - rhs_of_exact(forced, ms, &p, true)?).abs() / us.abs().max(1.0);
        worst = worst.max(res);
    }
    Ok(worst)
}

// ----- oracle -----
//
// Plain nested loops over (j, i, k); shares nothing with the marching
// engine beyond the grid and spec types.

fn oracle_d1(u: &[f64], n_y: usize, d: usize, axis: usize, dy: f64) -> Vec<f64> {
    oracle_pass(u, n_y, d, axis, |up, _, um| (up - um) / (2.0 * dy))
}

fn oracle_d2(u: &[f64], n_y: usize, d: usize, axis: usize, dy: f64) -> Vec<f64> {
    oracle_pass(u, n_y, d, axis, |up, c, um| (up - 2.0 * c + um) / (dy * dy))
}

fn oracle_pass(u: &[f64], n_y: usize, d: usize, axis: usize, op: impl Fn(f64, f64, f64) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    if d == 1 {
        for k in 0..n_y {
            out[k] = op(u[(k + 1) % n_y], u[k], u[(k + n_y - 1) % n_y]);
        }
    } else {
        for a in 0..n_y {
            for b in 0..n_y {
                let at = |a: usize, b: usize| u[a * n_y + b];
                out[a * n_y + b] = if axis == 0 {
                    op(at((a + 1) % n_y, b), at(a, b), at((a + n_y - 1) % n_y, b))
                } else {
                    op(at(a, (b + 1) % n_y), at(a, b), at(a, (b + n_y - 1) % n_y))
                };
            }
        }
    }
    out
}

fn oracle_derivative(u: &[f64], idx: MultiIndex, n_y: usize, d: usize, dy: f64) -> Vec<f64> {
    let mut cur = u.to_vec();
    for axis in 0..d {
        let c = idx.count(axis);
        if c % 2 == 1 {
            cur = oracle_d1(&cur, n_y, d, axis, dy);
        }
        for _ in 0..c / 2 {
            cur = oracle_d2(&cur, n_y, d, axis, dy);
        }
    }
    cur
}

/// Independent implementation of the explicit scheme for scalar linear
/// systems on small grids (`n_tau <= 16`, `n_y <= 32`).
pub fn naive_oracle_solve(spec: &LinearSystemSpec, grid: &TriangleGrid) -> Result<TriangleField> {
    if spec.m() != 1 || grid.m() != 1 {
        return Err(Error::UnsupportedMultiComponent(spec.m().max(grid.m())));
    }
    if (grid.d(), grid.r()) != (spec.d(), spec.r()) {
        return Err(Error::GridMismatch("oracle grid does not match the spec".into()));
    }
    if grid.n_tau() > 16 || grid.n_y() > 32 {
        return Err(Error::InvalidParameter("the oracle is restricted to n_tau <= 16, n_y <= 32".into()));
    }
    let (n, n_y, d, dy, dt) = (grid.n_tau(), grid.n_y(), grid.d(), grid.dy(), grid.dtau());
    let np = grid.n_space();
    // u[i][j] as plain vectors
    let mut u: Vec<Vec<Vec<f64>>> = (0..=n).map(|i| vec![vec![0.0; np]; i + 1]).collect();
    for (i, row) in u.iter_mut().enumerate() {
        for k in 0..np {
            let mut v = [0.0];
            spec.g.eval(grid.t(i), &grid.y(k), &mut v)?;
            row[0][k] = v[0];
        }
    }
    let indices = spec.indices();
    let top = 2 * spec.r();
    let (mut sup_a, mut sup_b) = (0.0f64, 0.0f64);
    for j in 0..n {
        let diag_d: Vec<Vec<f64>> = indices.iter().map(|&idx| oracle_derivative(&u[j][j], idx, n_y, d, dy)).collect();
        for i in j + 1..=n {
            let loc_d: Vec<Vec<f64>> = indices.iter().map(|&idx| oracle_derivative(&u[i][j], idx, n_y, d, dy)).collect();
            let mut next = vec![0.0; np];
            for k in 0..np {
                let p = grid.point(i, j, k);
                let mut acc = 0.0;
                let mut c = [0.0];
                for (q, &idx) in indices.iter().enumerate() {
                    if spec.a(idx).is_zero() {
                        continue;
                    }
                    spec.a(idx).fill(&p, &mut c)?;
                    if idx.order() == top {
                        sup_a = sup_a.max(c[0].abs());
                    }
                    acc += c[0] * loc_d[q][k];
                }
                for (q, &idx) in indices.iter().enumerate() {
                    if spec.b(idx).is_zero() {
                        continue;
                    }
                    spec.b(idx).fill(&p, &mut c)?;
                    if idx.order() == top {
                        sup_b = sup_b.max(c[0].abs());
                    }
                    acc += c[0] * diag_d[q][k];
                }
                if !spec.f().is_zero() {
                    spec.f().fill(&p, &mut c)?;
                    acc += c[0];
                }
                next[k] = u[i][j][k] + dt * acc;
                if !next[k].is_finite() {
                    return Err(Error::NonFiniteDetected { i, j: j + 1 });
                }
            }
            u[i].push(Vec::new());
            u[i][j + 1] = next;
        }
        for row in u.iter_mut() {
            row.retain(|s| !s.is_empty());
        }
        let sup = sup_a + sup_b;
        if sup > 0.0 {
            let limit = 0.9 * dy.powi(2 * spec.r() as i32) / (2f64.powi(2 * spec.r() as i32) * (d * d) as f64 * sup);
            if dt > limit {
                return Err(Error::CflViolation {
                    ratio: dt / limit,
                    dtau: dt,
                    limit,
                });
            }
        }
    }
    let mut payload = Vec::new();
    for row in &u {
        for s in row {
            payload.extend_from_slice(s);
        }
    }
    TriangleField::from_payload(grid, &payload)
}

// ----- comparison and convergence -----

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FieldDiff {
    pub sup_diff: f64,
    pub l2_diff: f64,
}

/// Sup and discrete L² (weights `Δτ·Δy^d`) distance over every stored node.
pub fn compare_fields(a: &TriangleField, b: &TriangleField) -> Result<FieldDiff> {
    if !a.grid().same_nodes(b.grid()) {
        return Err(Error::GridMismatch("fields live on different grids".into()));
    }
    let g = a.grid();
    let w = g.dtau() * g.dy().powi(g.d() as i32);
    let mut sup = 0.0f64;
    let mut sq = 0.0;
    for (x, y) in a.values().zip(b.values()) {
        let e = (x - y).abs();
        sup = sup.max(e);
        sq += e * e;
    }
    Ok(FieldDiff {
        sup_diff: sup,
        l2_diff: (w * sq).sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Linear,
    Quasilinear,
    /// Fully nonlinear, quasilinearized in space.
    Spatial,
    /// Fully nonlinear, temporal variant.
    Temporal,
}

impl std::str::FromStr for Route {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "linear" => Route::Linear,
            "quasilinear" => Route::Quasilinear,
            "spatial" => Route::Spatial,
            "temporal" => Route::Temporal,
            _ => return Err(Error::Config(format!("unknown route \"{s}\""))),
        })
    }
}

/// Solves a problem along a route; the result is always the scalar `u`.
pub fn solve_route(
    problem: &Problem,
    grid: &TriangleGrid,
    route: Route,
    scheme: &SchemeConfig,
    cfg: &FixedPointConfig,
) -> Result<TriangleField> {
    Ok(match route {
        Route::Linear => solve_nonlocal_linear(&problem.clone().into_linear()?, grid, scheme)?.0,
        Route::Quasilinear => solve_quasilinear_fixedpoint(&problem.clone().into_quasilinear()?, grid, scheme, cfg)?.0,
        Route::Spatial => solve_fully_nonlinear_spatial(&problem.clone().into_fully_nonlinear()?, grid, scheme, cfg)?.u(),
        Route::Temporal => solve_fully_nonlinear_temporal(&problem.clone().into_fully_nonlinear()?, grid, scheme, cfg)?.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OrderFit {
    pub order: f64,
    /// Half-width of the 95% confidence interval of the slope.
    pub ci95: f64,
    pub intercept: f64,
}

/// Least-squares slope of `log e` against `log h`.
pub fn fit_order(h: &[f64], e: &[f64]) -> Result<OrderFit> {
    if h.len() < 3 || h.len() != e.len() {
        return Err(Error::InvalidGridSequence(format!("an order fit needs at least 3 points, got {}", h.len())));
    }
    if e.iter().chain(h).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter("order fits need positive finite errors and steps".into()));
    }
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let df = n - 2.0;
    let se = (sse / df / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(OrderFit {
        order: slope,
        ci95: t * se,
        intercept,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSummary {
    pub n_tau: usize,
    pub n_y: usize,
    pub dtau: f64,
    pub dy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceResult {
    pub route: Route,
    pub grids: Vec<GridSummary>,
    pub sup_errors: Vec<f64>,
    pub l2_errors: Vec<f64>,
    /// Slope against `Δy`.
    pub spatial: OrderFit,
    /// Slope against `Δτ`.
    pub temporal: OrderFit,
    pub l2_spatial: OrderFit,
}

/// Errors against the exact solution over a refining grid sequence and
/// the fitted orders.
pub fn convergence_study(
    problem: &Problem,
    exact: &ManufacturedSolution,
    grids: &[TriangleGrid],
    route: Route,
    scheme: &SchemeConfig,
    cfg: &FixedPointConfig,
) -> Result<ConvergenceResult> {
    if grids.len() < 3 {
        return Err(Error::InvalidGridSequence(format!("need at least 3 grids, got {}", grids.len())));
    }
    for w in grids.windows(2) {
        if !(w[1].dy() < w[0].dy() && w[1].dtau() < w[0].dtau()) {
            return Err(Error::InvalidGridSequence("grids must refine in both Δτ and Δy".into()));
        }
        if w[1].t_final() != w[0].t_final() || w[1].box_len() != w[0].box_len() {
            return Err(Error::InvalidGridSequence("grids must share T and L".into()));
        }
    }
    let mut sup = Vec::new();
    let mut l2 = Vec::new();
    for g in grids {
        let u = solve_route(problem, g, route, scheme, cfg)?;
        let diff = compare_fields(&u, &exact.sample(u.grid())?)?;
        log::info!("n_tau = {}, n_y = {}: sup error {:e}", g.n_tau(), g.n_y(), diff.sup_diff);
        sup.push(diff.sup_diff);
        l2.push(diff.l2_diff);
    }
    let dy: Vec<f64> = grids.iter().map(|g| g.dy()).collect();
    let dt: Vec<f64> = grids.iter().map(|g| g.dtau()).collect();
    Ok(ConvergenceResult {
        route,
        grids: grids
            .iter()
            .map(|g| GridSummary {
                n_tau: g.n_tau(),
                n_y: g.n_y(),
                dtau: g.dtau(),
                dy: g.dy(),
            })
            .collect(),
        spatial: fit_order(&dy, &sup)?,
        temporal: fit_order(&dt, &sup)?,
        l2_spatial: fit_order(&dy, &l2)?,
        sup_errors: sup,
        l2_errors: l2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sine_product_passes_self_check() {
        let ms = ManufacturedSolution::sine_product(1).unwrap();
        assert!(ms.self_check().unwrap() < 1e-8);
    }

    #[test]
    fn wrong_derivative_is_caught() {
        let err = ManufacturedSolution::new(1, 1, "sin(y1)", "0", "0", &[("1", "cos(y1)"), ("11", "sin(y1)")]).unwrap_err();
        assert!(matches!(err, Error::SelfCheckFailed(_)));
    }

    #[test]
    fn exact_fit_on_power_law() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|x| 3.0 * x * x).collect();
        let f = fit_order(&h, &e).unwrap();
        assert!((f.order - 2.0).abs() < 1e-12);
        assert!(f.ci95 < 1e-9);
    }
}
