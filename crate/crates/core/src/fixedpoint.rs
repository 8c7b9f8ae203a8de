//! Fixed-point iterations for the nonlinear problems.
//!
//! * Γ (quasilinear systems): freeze the coefficients on the jet of the
//!   current iterate and solve the resulting nonlocal linear system.
//! * N∘M (scalar fully nonlinear problems, temporal route): solve the
//!   linear systems for `w1 ≈ u_s` and `w2 ≈ u_t` with coefficients frozen
//!   on the iterate, then integrate `w1` in `s`.
//!
//! Both start from `u_0(t, s, ·) = g(t, ·)` and stop on the sup distance of
//! successive iterates. When the iteration stalls (three consecutive
//! contraction ratios above target, the iteration budget exhausted, a jet
//! leaving the configured ball, or a non-finite value) the time window is
//! halved and the solve restarts on the truncated grid, down to four steps.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{jet_at, slice_derivatives, Jet, MultiIndex, StencilWorkspace, TriangleField, TriangleGrid};
use crate::linsolve::{march, Block, MarchingOperator, OpShape, SchemeConfig, SliceCoefs};
use crate::quasilin::{quasilinearize_spatial, InducedSystem};
use crate::systems::{FullyNonlinearSpec, InitialData, JetCoefficient, Partial, QuasilinearSystemSpec};

/// Closed ball `|z - center|₂ <= radius` in jet space.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointConfig {
    pub tol: f64,
    /// Map applications allowed per window.
    pub max_iter: usize,
    /// First window; `None` means the whole grid.
    pub delta0: Option<f64>,
    pub shrink: f64,
    /// Smallest window, in steps.
    pub min_window_steps: usize,
    pub target_ratio: f64,
    /// Consecutive ratios above target that trigger a shrink.
    pub patience: usize,
    pub ball: Option<Ball>,
    /// Re-apply the map to the converged iterate and report the distance.
    pub certificate: bool,
    /// Report `max |∂³u|` of the converged solution (spatial route).
    pub third_derivatives: bool,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            tol: 1e-8,
            max_iter: 50,
            delta0: None,
            shrink: 0.5,
            min_window_steps: 4,
            target_ratio: 0.5,
            patience: 3,
            ball: None,
            certificate: true,
            third_derivatives: false,
        }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.target_ratio > 0.0 && self.target_ratio < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "target_ratio must lie in (0, 1), got {}",
                self.target_ratio
            )));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidParameter(format!("shrink factor must lie in (0, 1), got {}", self.shrink)));
        }
        if self.max_iter == 0 || self.patience == 0 || self.min_window_steps == 0 {
            return Err(Error::InvalidParameter(
                "max_iter, patience and min_window_steps must be positive".into(),
            ));
        }
        if let Some(b) = &self.ball {
            if !(b.radius > 0.0) {
                return Err(Error::InvalidParameter(format!("ball radius must be positive, got {}", b.radius)));
            }
        }
        Ok(())
    }
}

/// One attempted window.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowAttempt {
    pub delta: f64,
    pub n_tau: usize,
    pub iterations: usize,
    /// Why the window was abandoned; `None` for the accepted one.
    pub outcome: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub converged: bool,
    /// Map applications in the accepted window.
    pub iterations: usize,
    /// `e_k = ‖u_{k+1} - u_k‖∞`.
    pub distances: Vec<f64>,
    /// `e_{k+1} / e_k`.
    pub ratios: Vec<f64>,
    pub windows: Vec<WindowAttempt>,
    /// Accepted window length.
    pub delta: f64,
    pub n_tau: usize,
    /// Largest `‖u_k - g‖∞` seen.
    pub r_max: f64,
    pub cfl_ratio: f64,
    /// `max |(u[i][j+1] - u[i][j]) / Δτ - RHS|` from an independent
    /// assembly of the right-hand side on the converged field.
    pub residual: f64,
    /// `‖map(u*) - u*‖∞`.
    pub certificate: Option<f64>,
    /// `max |u[i][j+1] - 2u[i][j] + u[i][j-1]| / Δτ²` (temporal route).
    pub second_s_difference: Option<f64>,
    /// `max |∂³u|` by stencils (when requested).
    pub third_derivative: Option<f64>,
}

fn fill_jet(jet: &mut Jet, local: &[Vec<f64>], diag: &[Vec<f64>], k: usize, m: usize) {
    let lv = jet.local_values_mut();
    for (p, d) in local.iter().enumerate() {
        lv[p * m..(p + 1) * m].copy_from_slice(&d[k * m..(k + 1) * m]);
    }
    let dv = jet.diagonal_values_mut();
    for (p, d) in diag.iter().enumerate() {
        dv[p * m..(p + 1) * m].copy_from_slice(&d[k * m..(k + 1) * m]);
    }
}

fn ball_check(ball: Option<&Ball>, jet: &Jet, i: usize, j: usize) -> Result<()> {
    if let Some(b) = ball {
        let z = jet.to_z();
        if z.len() != b.center.len() {
            return Err(Error::InvalidParameter(format!(
                "ball centre has {} entries, jets have {}",
                b.center.len(),
                z.len()
            )));
        }
        let dist = z.iter().zip(&b.center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
        if dist > b.radius {
            return Err(Error::BallExit {
                i,
                j,
                distance: dist,
                radius: b.radius,
            });
        }
    }
    Ok(())
}

fn derivs(field: &TriangleField, i: usize, j: usize, order: usize) -> Vec<Vec<f64>> {
    let g = field.grid();
    let mut ws = StencilWorkspace::default();
    slice_derivatives(field.slice(i, j), g.n_y(), g.d(), g.m(), g.dy(), order, &mut ws)
}

fn sample_into(g: &InitialData, grid: &TriangleGrid, t: f64, out: &mut [f64]) -> Result<()> {
    out.copy_from_slice(&g.sample(grid, t)?);
    Ok(())
}

/// `g(t, ·)` extended constantly in `s`.
pub fn extend_data(g: &InitialData, grid: &TriangleGrid) -> Result<TriangleField> {
    let mut u = TriangleField::zeros(grid);
    for i in 0..=grid.n_tau() {
        let v = g.sample(grid, grid.t(i))?;
        for j in 0..=i {
            u.slice_mut(i, j).copy_from_slice(&v);
        }
    }
    Ok(u)
}

struct GammaOp<'a> {
    spec: &'a QuasilinearSystemSpec,
    uk: &'a TriangleField,
    grid: TriangleGrid,
    shape: OpShape,
    ball: Option<&'a Ball>,
}

impl<'a> GammaOp<'a> {
    fn new(spec: &'a QuasilinearSystemSpec, uk: &'a TriangleField, ball: Option<&'a Ball>) -> Result<Self> {
        let g = *uk.grid();
        if (g.d(), g.r(), g.m()) != (spec.d(), spec.r(), spec.m()) {
            return Err(Error::GridMismatch(format!(
                "iterate lives on (d, r, m) = ({}, {}, {}), system is ({}, {}, {})",
                g.d(),
                g.r(),
                g.m(),
                spec.d(),
                spec.r(),
                spec.m()
            )));
        }
        let top = spec.top_indices();
        let shape = OpShape {
            m: spec.m(),
            local: top.iter().copied().filter(|&i| !spec.a_top(i).is_zero()).collect(),
            diag: top.iter().copied().filter(|&i| !spec.b_top(i).is_zero()).collect(),
            has_source: !spec.f_low().is_zero(),
        };
        Ok(GammaOp {
            spec,
            uk,
            grid: g,
            shape,
            ball,
        })
    }
}

fn fill_jet_block(
    c: &JetCoefficient,
    jets: &[Jet],
    grid: &TriangleGrid,
    i: usize,
    j: usize,
    len: usize,
    out: &mut Block,
) -> Result<()> {
    match c {
        JetCoefficient::Zero => *out = Block::Zero,
        JetCoefficient::Constant(v) => *out = Block::Shared(v.clone()),
        JetCoefficient::Eval(_) => {
            let buf = out.nodes_mut(grid.n_space() * len);
            for (k, jet) in jets.iter().enumerate() {
                c.fill(&grid.point(i, j, k), jet, &mut buf[k * len..(k + 1) * len])?;
            }
        }
    }
    Ok(())
}

impl MarchingOperator for GammaOp<'_> {
    type Level = Vec<Vec<f64>>;

    fn grid(&self) -> &TriangleGrid {
        &self.grid
    }

    fn shape(&self) -> &OpShape {
        &self.shape
    }

    fn initial_slice(&self, i: usize, out: &mut [f64]) -> Result<()> {
        sample_into(&self.spec.g, &self.grid, self.grid.t(i), out)
    }

    fn prepare_level(&self, j: usize) -> Result<Vec<Vec<f64>>> {
        Ok(derivs(self.uk, j, j, self.spec.jet_order()))
    }

    fn coefficients(&self, diag: &Vec<Vec<f64>>, i: usize, j: usize, out: &mut SliceCoefs) -> Result<()> {
        let g = &self.grid;
        let m = self.spec.m();
        let local = derivs(self.uk, i, j, self.spec.jet_order());
        let mut jets = Vec::with_capacity(g.n_space());
        for k in 0..g.n_space() {
            let mut jet = Jet::zeros(g.d(), m, self.spec.jet_order());
            fill_jet(&mut jet, &local, diag, k, m);
            ball_check(self.ball, &jet, i, j)?;
            jets.push(jet);
        }
        for (p, &idx) in self.shape.local.iter().enumerate() {
            fill_jet_block(self.spec.a_top(idx), &jets, g, i, j, m * m, &mut out.local[p])?;
        }
        for (p, &idx) in self.shape.diag.iter().enumerate() {
            fill_jet_block(self.spec.b_top(idx), &jets, g, i, j, m * m, &mut out.diag[p])?;
        }
        if self.shape.has_source {
            fill_jet_block(self.spec.f_low(), &jets, g, i, j, m, &mut out.source)?;
        }
        Ok(())
    }
}

/// One application of Γ: the solution of the linear system frozen on the
/// jets of `u_k`.
pub fn gamma_map(u_k: &TriangleField, spec: &QuasilinearSystemSpec, scheme: &SchemeConfig) -> Result<TriangleField> {
    gamma_map_in_ball(u_k, spec, scheme, None).map(|(u, _)| u)
}

/// [`gamma_map`] with an optional admissible ball; also returns the CFL
/// ratio of the frozen solve.
pub fn gamma_map_in_ball(
    u_k: &TriangleField,
    spec: &QuasilinearSystemSpec,
    scheme: &SchemeConfig,
    ball: Option<&Ball>,
) -> Result<(TriangleField, f64)> {
    let op = GammaOp::new(spec, u_k, ball)?;
    let (u, stats) = march(&op, scheme)?;
    Ok((u, stats.cfl_ratio))
}

#[derive(Clone, Copy, PartialEq)]
enum Temporal {
    W1,
    W2,
}

struct TemporalOp<'a> {
    spec: &'a FullyNonlinearSpec,
    uk: &'a TriangleField,
    w2: Option<&'a TriangleField>,
    which: Temporal,
    grid: TriangleGrid,
    shape: OpShape,
    ball: Option<&'a Ball>,
}

impl<'a> TemporalOp<'a> {
    fn new(
        spec: &'a FullyNonlinearSpec,
        uk: &'a TriangleField,
        w2: Option<&'a TriangleField>,
        which: Temporal,
        ball: Option<&'a Ball>,
    ) -> Self {
        let second = spec.second_indices();
        let shape = OpShape {
            m: 1,
            local: second.clone(),
            diag: if which == Temporal::W1 { second } else { Vec::new() },
            has_source: true,
        };
        TemporalOp {
            spec,
            uk,
            w2,
            which,
            grid: *uk.grid(),
            shape,
            ball,
        }
    }
}

impl MarchingOperator for TemporalOp<'_> {
    /// Diagonal jet stacks of `u_k` and second derivatives of `w2` at `(j, j)`.
    type Level = (Vec<Vec<f64>>, Vec<Vec<f64>>);

    fn grid(&self) -> &TriangleGrid {
        &self.grid
    }

    fn shape(&self) -> &OpShape {
        &self.shape
    }

    fn initial_slice(&self, i: usize, out: &mut [f64]) -> Result<()> {
        let g = &self.grid;
        match self.which {
            Temporal::W2 => {
                out.copy_from_slice(&self.spec.g.sample_t(g, g.t(i))?);
            }
            Temporal::W1 => {
                let jets = jet_at(self.uk, i, 0, 2)?;
                for (k, o) in out.iter_mut().enumerate() {
                    *o = self.spec.eval(&g.point(i, 0, k), &jets.point(k))?;
                }
            }
        }
        Ok(())
    }

    fn prepare_level(&self, j: usize) -> Result<Self::Level> {
        let diag = derivs(self.uk, j, j, 2);
        let w2 = match (self.which, self.w2) {
            (Temporal::W1, Some(w2)) => {
                let all = derivs(w2, j, j, 2);
                let d = self.grid.d();
                let first = MultiIndex::count_up_to(d, 1);
                all[first..].to_vec()
            }
            _ => Vec::new(),
        };
        Ok((diag, w2))
    }

    fn coefficients(&self, level: &Self::Level, i: usize, j: usize, out: &mut SliceCoefs) -> Result<()> {
        let g = &self.grid;
        let n = g.n_space();
        let local = derivs(self.uk, i, j, 2);
        let nq = self.shape.local.len();
        let mut jet = Jet::zeros(g.d(), 1, 2);
        let mut a: Vec<&mut [f64]> = Vec::new();
        for b in out.local.iter_mut() {
            a.push(b.nodes_mut(n));
        }
        let mut bb: Vec<&mut [f64]> = Vec::new();
        for b in out.diag.iter_mut() {
            bb.push(b.nodes_mut(n));
        }
        let src = out.source.nodes_mut(n);
        for k in 0..n {
            fill_jet(&mut jet, &local, &level.0, k, 1);
            ball_check(self.ball, &jet, i, j)?;
            let p = g.point(i, j, k);
            for (q, col) in a.iter_mut().enumerate() {
                col[k] = self.spec.partial(Partial::Q(q), &p, &jet)?;
            }
            match self.which {
                Temporal::W2 => {
                    src[k] = self.spec.partial(Partial::T, &p, &jet)?;
                }
                Temporal::W1 => {
                    let mut f = self.spec.partial(Partial::S, &p, &jet)?;
                    for q in 0..nq {
                        let bn = self.spec.partial(Partial::N(q), &p, &jet)?;
                        bb[q][k] = bn;
                        f += bn * level.1[q][k];
                    }
                    src[k] = f;
                }
            }
        }
        Ok(())
    }
}

/// `M(u_k) = (w1, w2)`; `w2` first (a local family), then `w1`.
pub fn temporal_m(u_k: &TriangleField, spec: &FullyNonlinearSpec, scheme: &SchemeConfig) -> Result<(TriangleField, TriangleField)> {
    temporal_m_in_ball(u_k, spec, scheme, None).map(|(w1, w2, _)| (w1, w2))
}

fn check_temporal(spec: &FullyNonlinearSpec, grid: &TriangleGrid) -> Result<()> {
    if spec.lower_order_dependence {
        return Err(Error::UnsupportedNonlinearity(format!(
            "{} depends on u or its first derivatives",
            spec.name
        )));
    }
    if (grid.d(), grid.r(), grid.m()) != (spec.d(), 1, 1) {
        return Err(Error::GridMismatch(format!(
            "scalar second-order problem in d = {} on a grid with (d, r, m) = ({}, {}, {})",
            spec.d(),
            grid.d(),
            grid.r(),
            grid.m()
        )));
    }
    Ok(())
}

fn temporal_m_in_ball(
    u_k: &TriangleField,
    spec: &FullyNonlinearSpec,
    scheme: &SchemeConfig,
    ball: Option<&Ball>,
) -> Result<(TriangleField, TriangleField, f64)> {
    check_temporal(spec, u_k.grid())?;
    let op2 = TemporalOp::new(spec, u_k, None, Temporal::W2, ball);
    let (w2, s2) = march(&op2, scheme)?;
    let op1 = TemporalOp::new(spec, u_k, Some(&w2), Temporal::W1, ball);
    let (w1, s1) = march(&op1, scheme)?;
    Ok((w1, w2, s1.cfl_ratio.max(s2.cfl_ratio)))
}

/// `U[i][j] = g(t_i) + Δτ (w1[i][0]/2 + Σ_{0<l<j} w1[i][l] + w1[i][j]/2)`,
/// with `U[i][0] = g(t_i)` exactly.
pub fn temporal_n(w1: &TriangleField, g: &InitialData) -> Result<TriangleField> {
    let grid = *w1.grid();
    if g.m() != grid.m() {
        return Err(Error::GridMismatch(format!(
            "data has {} components, field has {}",
            g.m(),
            grid.m()
        )));
    }
    let dtau = grid.dtau();
    let mut u = TriangleField::zeros(&grid);
    let len = grid.slice_len();
    let mut inner = vec![0.0; len];
    for i in 0..=grid.n_tau() {
        let gi = g.sample(&grid, grid.t(i))?;
        u.slice_mut(i, 0).copy_from_slice(&gi);
        inner.fill(0.0);
        for j in 1..=i {
            if j >= 2 {
                for (s, w) in inner.iter_mut().zip(w1.slice(i, j - 1)) {
                    *s += w;
                }
            }
            let (w0, wj) = (w1.slice(i, 0), w1.slice(i, j));
            let dst = u.slice_mut(i, j);
            for k in 0..len {
                dst[k] = gi[k] + dtau * (w0[k] / 2.0 + inner[k] + wj[k] / 2.0);
            }
        }
    }
    Ok(u)
}

/// `N∘M(u_k)`.
pub fn temporal_map(u_k: &TriangleField, spec: &FullyNonlinearSpec, scheme: &SchemeConfig) -> Result<TriangleField> {
    let (w1, _) = temporal_m(u_k, spec, scheme)?;
    temporal_n(&w1, &spec.g)
}

/// Whether an error ends the current window (and triggers a shrink).
fn is_shrink_trigger(e: &Error) -> bool {
    matches!(
        e,
        Error::BallExit { .. } | Error::NonFiniteDetected { .. } | Error::MaxIterExceeded(_)
    )
}

struct Iterated {
    u: TriangleField,
    iterations: usize,
    distances: Vec<f64>,
    ratios: Vec<f64>,
    r_max: f64,
    cfl_ratio: f64,
}

/// Picard iteration with window continuation.
///
/// `map(u_k)` returns the next iterate and the CFL ratio of its solves.
fn iterate_with_windows(
    grid: &TriangleGrid,
    cfg: &FixedPointConfig,
    g: &InitialData,
    mut map: impl FnMut(&TriangleField) -> Result<(TriangleField, f64)>,
) -> Result<(Iterated, Vec<WindowAttempt>)> {
    cfg.validate()?;
    let dtau = grid.dtau();
    let mut delta = cfg.delta0.unwrap_or(grid.t_final()).min(grid.t_final());
    let mut windows = Vec::new();
    loop {
        let n = ((delta / dtau) * (1.0 + 1e-12)).floor() as usize;
        let n = n.min(grid.n_tau());
        if n < cfg.min_window_steps {
            let last = windows.last().and_then(|w: &WindowAttempt| w.outcome.clone()).unwrap_or_default();
            return Err(Error::MaxIterExceeded(format!(
                "no window of at least {} steps converged (last failure: {last})",
                cfg.min_window_steps
            )));
        }
        let wg = grid.truncated(n)?;
        let u0 = extend_data(g, &wg)?;
        let mut attempt = WindowAttempt {
            delta: n as f64 * dtau,
            n_tau: n,
            iterations: 0,
            outcome: None,
        };
        let mut state = Iterated {
            u: u0.clone(),
            iterations: 0,
            distances: Vec::new(),
            ratios: Vec::new(),
            r_max: 0.0,
            cfl_ratio: 0.0,
        };
        let result: Result<()> = (|| {
            let mut above = 0usize;
            loop {
                if state.iterations == cfg.max_iter {
                    return Err(Error::MaxIterExceeded(format!(
                        "{} iterations without reaching tol = {:e}",
                        cfg.max_iter, cfg.tol
                    )));
                }
                let (next, cfl) = map(&state.u)?;
                state.iterations += 1;
                state.cfl_ratio = state.cfl_ratio.max(cfl);
                let e = next.sup_distance(&state.u);
                if !e.is_finite() {
                    return Err(Error::NonFiniteDetected { i: n, j: n });
                }
                state.r_max = state.r_max.max(next.sup_distance(&u0));
                if let Some(&prev) = state.distances.last() {
                    let ratio = if prev == 0.0 { 0.0 } else { e / prev };
                    state.ratios.push(ratio);
                    if ratio > cfg.target_ratio {
                        above += 1;
                    } else {
                        above = 0;
                    }
                }
                state.distances.push(e);
                state.u = next;
                if e <= cfg.tol {
                    return Ok(());
                }
                if above >= cfg.patience {
                    return Err(Error::MaxIterExceeded(format!(
                        "{above} consecutive contraction ratios above {}",
                        cfg.target_ratio
                    )));
                }
            }
        })();
        attempt.iterations = state.iterations;
        match result {
            Ok(()) => {
                windows.push(attempt);
                return Ok((state, windows));
            }
            Err(e) if is_shrink_trigger(&e) => {
                log::info!("window {:.6} abandoned: {e}", attempt.delta);
                attempt.outcome = Some(e.to_string());
                windows.push(attempt);
                delta = n as f64 * dtau * cfg.shrink;
            }
            Err(e) => return Err(e),
        }
    }
}

fn report_from(state: &Iterated, windows: Vec<WindowAttempt>) -> SolveReport {
    let grid = state.u.grid();
    SolveReport {
        converged: true,
        iterations: state.iterations,
        distances: state.distances.clone(),
        ratios: state.ratios.clone(),
        windows,
        delta: grid.t_final(),
        n_tau: grid.n_tau(),
        r_max: state.r_max,
        cfl_ratio: state.cfl_ratio,
        residual: 0.0,
        certificate: None,
        second_s_difference: None,
        third_derivative: None,
    }
}

/// `max |(u[i][j+1] - u[i][j]) / Δτ - RHS(i, j)|` for a quasilinear system,
/// with the right-hand side assembled node by node from the jets of `u`.
pub fn quasilinear_residual(u: &TriangleField, spec: &QuasilinearSystemSpec) -> Result<f64> {
    let g = *u.grid();
    let (d, m) = (g.d(), g.m());
    let order = spec.jet_order();
    let ncoef = MultiIndex::count_up_to(d, order) * m;
    let top = spec.top_indices();
    let mut mat = vec![0.0; m * m];
    let mut low = vec![0.0; m];
    let mut worst = 0.0f64;
    for i in 1..=g.n_tau() {
        for j in 0..i {
            let sj = jet_at(u, i, j, 2 * g.r())?;
            let (cur, next) = (u.slice(i, j), u.slice(i, j + 1));
            for k in 0..g.n_space() {
                let full = sj.point(k);
                let mut cj = Jet::zeros(d, m, order);
                cj.local_values_mut().copy_from_slice(&full.local_values()[..ncoef]);
                cj.diagonal_values_mut().copy_from_slice(&full.diagonal_values()[..ncoef]);
                let p = g.point(i, j, k);
                let mut rhs = vec![0.0; m];
                for &idx in &top {
                    for (c, part) in [(spec.a_top(idx), full.local(idx)), (spec.b_top(idx), full.diagonal(idx))] {
                        if c.is_zero() {
                            continue;
                        }
                        c.fill(&p, &cj, &mut mat)?;
                        for a in 0..m {
                            for b in 0..m {
                                rhs[a] += mat[a * m + b] * part[b];
                            }
                        }
                    }
                }
                if !spec.f_low().is_zero() {
                    spec.f_low().fill(&p, &cj, &mut low)?;
                    for a in 0..m {
                        rhs[a] += low[a];
                    }
                }
                for a in 0..m {
                    let ds = (next[k * m + a] - cur[k * m + a]) / g.dtau();
                    worst = worst.max((ds - rhs[a]).abs());
                }
            }
        }
    }
    Ok(worst)
}

/// Same residual for a scalar fully nonlinear problem.
pub fn fully_nonlinear_residual(u: &TriangleField, spec: &FullyNonlinearSpec) -> Result<f64> {
    let g = *u.grid();
    let mut worst = 0.0f64;
    for i in 1..=g.n_tau() {
        for j in 0..i {
            let sj = jet_at(u, i, j, 2)?;
            let (cur, next) = (u.slice(i, j), u.slice(i, j + 1));
            for k in 0..g.n_space() {
                let f = spec.eval(&g.point(i, j, k), &sj.point(k))?;
                worst = worst.max(((next[k] - cur[k]) / g.dtau() - f).abs());
            }
        }
    }
    Ok(worst)
}

fn third_derivative_sup(u: &TriangleField) -> f64 {
    let g = u.grid();
    let mut worst = 0.0f64;
    let idx = MultiIndex::all_of_order(g.d(), 3);
    let mut ws = StencilWorkspace::default();
    let mut out = vec![0.0; g.slice_len()];
    for i in 0..=g.n_tau() {
        for j in 0..=i {
            for &ix in &idx {
                crate::grid::derivative_into(u.slice(i, j), &mut out, ix, g.n_y(), g.d(), g.m(), g.dy(), &mut ws);
                worst = out.iter().fold(worst, |a, v| a.max(v.abs()));
            }
        }
    }
    worst
}

fn second_s_difference(u: &TriangleField) -> Option<f64> {
    let g = u.grid();
    let dt2 = g.dtau() * g.dtau();
    let mut worst: Option<f64> = None;
    for i in 2..=g.n_tau() {
        for j in 1..i {
            let (a, b, c) = (u.slice(i, j + 1), u.slice(i, j), u.slice(i, j - 1));
            for k in 0..a.len() {
                let v = ((a[k] - 2.0 * b[k] + c[k]) / dt2).abs();
                worst = Some(worst.map_or(v, |w: f64| w.max(v)));
            }
        }
    }
    worst
}

/// Picard iteration of Γ from `u_0 = g`.
pub fn solve_quasilinear_fixedpoint(
    spec: &QuasilinearSystemSpec,
    grid: &TriangleGrid,
    scheme: &SchemeConfig,
    cfg: &FixedPointConfig,
) -> Result<(TriangleField, SolveReport)> {
    if (grid.d(), grid.r(), grid.m()) != (spec.d(), spec.r(), spec.m()) {
        return Err(Error::GridMismatch(format!(
            "system has (d, r, m) = ({}, {}, {}), grid has ({}, {}, {})",
            spec.d(),
            spec.r(),
            spec.m(),
            grid.d(),
            grid.r(),
            grid.m()
        )));
    }
    let ball = cfg.ball.as_ref();
    let (state, windows) = iterate_with_windows(grid, cfg, &spec.g, |u| gamma_map_in_ball(u, spec, scheme, ball))?;
    let mut report = report_from(&state, windows);
    report.residual = quasilinear_residual(&state.u, spec)?;
    if cfg.certificate {
        let (again, _) = gamma_map_in_ball(&state.u, spec, scheme, ball)?;
        report.certificate = Some(again.sup_distance(&state.u));
    }
    if cfg.third_derivatives {
        report.third_derivative = Some(third_derivative_sup(&state.u));
    }
    Ok((state.u, report))
}

/// Iteration of `N∘M` from `u_0 = g`.
pub fn solve_fully_nonlinear_temporal(
    spec: &FullyNonlinearSpec,
    grid: &TriangleGrid,
    scheme: &SchemeConfig,
    cfg: &FixedPointConfig,
) -> Result<(TriangleField, SolveReport)> {
    check_temporal(spec, grid)?;
    let spec = spec.resolved()?;
    let ball = cfg.ball.as_ref();
    let step = |u: &TriangleField| -> Result<(TriangleField, f64)> {
        let (w1, _, cfl) = temporal_m_in_ball(u, &spec, scheme, ball)?;
        Ok((temporal_n(&w1, &spec.g)?, cfl))
    };
    let (state, windows) = iterate_with_windows(grid, cfg, &spec.g, step)?;
    let mut report = report_from(&state, windows);
    report.residual = fully_nonlinear_residual(&state.u, &spec)?;
    if cfg.certificate {
        let (again, _) = step(&state.u)?;
        report.certificate = Some(again.sup_distance(&state.u));
    }
    report.second_s_difference = second_s_difference(&state.u);
    if cfg.third_derivatives {
        report.third_derivative = Some(third_derivative_sup(&state.u));
    }
    Ok((state.u, report))
}

/// Result of the spatial route for a scalar fully nonlinear problem.
pub struct SpatialSolution {
    pub induced: InducedSystem,
    /// `(u, v^(1), ..., v^(d))`.
    pub field: TriangleField,
    pub report: SolveReport,
}

impl SpatialSolution {
    pub fn u(&self) -> TriangleField {
        self.field.component(0)
    }

    pub fn gradients(&self) -> Vec<TriangleField> {
        (1..self.field.grid().m()).map(|a| self.field.component(a)).collect()
    }
}

/// Quasilinearizes in space and iterates Γ on the induced system. `grid`
/// is the scalar grid; the induced system runs on `d + 1` components. A
/// configured ball lives in the jet space of the induced system.
pub fn solve_fully_nonlinear_spatial(
    spec: &FullyNonlinearSpec,
    grid: &TriangleGrid,
    scheme: &SchemeConfig,
    cfg: &FixedPointConfig,
) -> Result<SpatialSolution> {
    check_temporal(spec, grid)?;
    let induced = quasilinearize_spatial(spec)?;
    let g = grid.with_components(grid.d() + 1);
    let (field, mut report) = solve_quasilinear_fixedpoint(&induced.spec, &g, scheme, cfg)?;
    report.second_s_difference = second_s_difference(&field.component(0));
    Ok(SpatialSolution { induced, field, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn trapezoid_is_exact_on_linear_integrands() {
        let g = build_grid(1.0, 8, 1.0, 5, 1, 1, 1).unwrap();
        let w = TriangleField::from_fn(&g, |p, o| o[0] = p.s);
        let u = temporal_n(&w, &InitialData::zero(1)).unwrap();
        for i in 0..=8 {
            for j in 0..=i {
                let s = g.s(j);
                for v in u.slice(i, j) {
                    assert!((v - s * s / 2.0).abs() <= 1e-15, "{v} vs {}", s * s / 2.0);
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        let bad = FixedPointConfig {
            target_ratio: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(FixedPointConfig::default().validate().is_ok());
    }
}
