//! Marching solver for nonlocal linear systems on the triangle.
//!
//! A level step `j -> j+1` updates every slice `i >= j+1`:
//!
//! ```text
//! u[i][j+1] = u[i][j] + Δτ·( Σ_I A^I ∂_I u[i][j] + Σ_I B^I ∂_I u[j][j] + f )
//! ```
//!
//! with coefficients at `(t_i, s_j, y)`. The diagonal term is read from the
//! completed slice `(j, j)`, so slices of one level are independent of each
//! other. Per node the accumulator starts at `0.0` and adds, in this order,
//! the `A` terms by canonical index order (matrix-vector products summed
//! over the column index), the `B` terms, and `f`. Absent coefficients are
//! skipped, not multiplied by zero.
//!
//! The IMEX variant (`d = 1`, `r = 1`) treats the local top-order term
//! implicitly: a cyclic tridiagonal solve per component, with the
//! coefficient taken at level `j`.
//!
//! The engine is generic over [`MarchingOperator`], which also drives the
//! frozen-coefficient maps of the nonlinear solvers.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{derivative_into, MultiIndex, Point, StencilWorkspace, TriangleField, TriangleGrid};
use crate::holder::norm_triangle;
use crate::systems::{Coefficient, LinearSystemSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Explicit,
    Imex,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Explicit => "explicit",
            SchemeKind::Imex => "imex",
        }
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit" => Ok(SchemeKind::Explicit),
            "imex" => Ok(SchemeKind::Imex),
            _ => Err(Error::Config(format!("unknown scheme kind \"{s}\" (expected explicit or imex)"))),
        }
    }
}

/// Order in which the slices of one level are visited in serial mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sweep {
    Ascending,
    Descending,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub cfl_safety: f64,
    /// Update the slices of a level concurrently.
    pub parallel: bool,
    pub sweep: Sweep,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            kind: SchemeKind::Explicit,
            cfl_safety: 0.9,
            parallel: false,
            sweep: Sweep::Ascending,
        }
    }
}

impl SchemeConfig {
    pub fn explicit() -> Self {
        Self::default()
    }

    pub fn imex() -> Self {
        SchemeConfig {
            kind: SchemeKind::Imex,
            ..Self::default()
        }
    }

    pub fn parallel(mut self, on: bool) -> Self {
        self.parallel = on;
        self
    }

    pub fn with_sweep(mut self, sweep: Sweep) -> Self {
        self.sweep = sweep;
        self
    }

    pub fn with_safety(mut self, safety: f64) -> Self {
        self.cfl_safety = safety;
        self
    }

    fn validate(&self, grid: &TriangleGrid) -> Result<()> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        if self.kind == SchemeKind::Imex && (grid.d() != 1 || grid.r() != 1) {
            return Err(Error::UnsupportedScheme(format!(
                "imex needs d = 1 and r = 1, got d = {}, r = {}",
                grid.d(),
                grid.r()
            )));
        }
        Ok(())
    }

    /// Largest admissible `Δτ` for the given coefficient bounds.
    pub fn dtau_limit(&self, grid: &TriangleGrid, sup_a: f64, sup_b: f64) -> f64 {
        let r = grid.r() as i32;
        let d = grid.d() as f64;
        let sup = match self.kind {
            SchemeKind::Explicit => sup_a + sup_b,
            SchemeKind::Imex => sup_b,
        };
        if sup == 0.0 {
            return f64::INFINITY;
        }
        self.cfl_safety * grid.dy().powi(2 * r) / (2f64.powi(2 * r) * d * d * sup)
    }
}

/// Coefficient values over one slice.
#[derive(Clone, Debug, PartialEq)]
pub enum Block {
    Zero,
    /// The same values at every node, shared between slices.
    Shared(Arc<[f64]>),
    /// The same values at every node of this slice.
    Uniform(Vec<f64>),
    /// `n_space × len` values, node-major.
    Nodes(Vec<f64>),
}

impl Block {
    #[inline]
    pub fn at(&self, k: usize, len: usize) -> &[f64] {
        match self {
            Block::Zero => &[],
            Block::Shared(v) => v,
            Block::Uniform(v) => v,
            Block::Nodes(v) => &v[k * len..(k + 1) * len],
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Block::Zero)
    }

    /// Turns the block into `Nodes` of the given size, reusing storage.
    pub fn nodes_mut(&mut self, size: usize) -> &mut [f64] {
        if !matches!(self, Block::Nodes(v) if v.len() == size) {
            *self = Block::Nodes(vec![0.0; size]);
        }
        match self {
            Block::Nodes(v) => v,
            _ => unreachable!(),
        }
    }

    pub fn uniform_mut(&mut self, size: usize) -> &mut [f64] {
        if !matches!(self, Block::Uniform(v) if v.len() == size) {
            *self = Block::Uniform(vec![0.0; size]);
        }
        match self {
            Block::Uniform(v) => v,
            _ => unreachable!(),
        }
    }

    /// `max_k ‖M_k‖∞` (row-sum norm) of an `m × m` block.
    fn matrix_norm(&self, m: usize, n_space: usize) -> f64 {
        let rows = |v: &[f64]| {
            (0..m).fold(0.0f64, |acc, a| acc.max(v[a * m..(a + 1) * m].iter().map(|x| x.abs()).sum()))
        };
        match self {
            Block::Zero => 0.0,
            Block::Shared(v) => rows(v),
            Block::Uniform(v) => rows(v),
            Block::Nodes(v) => (0..n_space).fold(0.0, |acc, k| acc.max(rows(&v[k * m * m..(k + 1) * m * m]))),
        }
    }
}

/// Which terms an operator contributes.
#[derive(Clone, Debug, PartialEq)]
pub struct OpShape {
    pub m: usize,
    /// Indices of the local terms `A^I ∂_I u(t, s, ·)`.
    pub local: Vec<MultiIndex>,
    /// Indices of the diagonal terms `B^I ∂_I u(s, s, ·)`.
    pub diag: Vec<MultiIndex>,
    pub has_source: bool,
}

/// Coefficients of one slice, by position in [`OpShape`].
#[derive(Clone, Debug)]
pub struct SliceCoefs {
    pub local: Vec<Block>,
    pub diag: Vec<Block>,
    pub source: Block,
}

impl SliceCoefs {
    pub fn for_shape(shape: &OpShape) -> Self {
        SliceCoefs {
            local: vec![Block::Zero; shape.local.len()],
            diag: vec![Block::Zero; shape.diag.len()],
            source: Block::Zero,
        }
    }
}

/// A linear marching problem: coefficient provider for the level steps.
pub trait MarchingOperator: Sync {
    /// Per-level data shared by all slices of the level.
    type Level: Sync;

    fn grid(&self) -> &TriangleGrid;
    fn shape(&self) -> &OpShape;
    /// Writes `u(t_i, 0, ·)`.
    fn initial_slice(&self, i: usize, out: &mut [f64]) -> Result<()>;
    fn prepare_level(&self, j: usize) -> Result<Self::Level>;
    /// Coefficients for the step from `(i, j)` to `(i, j+1)`.
    fn coefficients(&self, level: &Self::Level, i: usize, j: usize, out: &mut SliceCoefs) -> Result<()>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MarchStats {
    pub cfl_ratio: f64,
    pub sup_a: f64,
    pub sup_b: f64,
    pub dtau_limit: f64,
}

struct RowScratch {
    coefs: SliceCoefs,
    deriv: Vec<f64>,
    acc: Vec<f64>,
    ws: StencilWorkspace,
    tri: CyclicScratch,
}

impl RowScratch {
    fn new(shape: &OpShape, len: usize) -> Self {
        RowScratch {
            coefs: SliceCoefs::for_shape(shape),
            deriv: vec![0.0; len],
            acc: vec![0.0; len],
            ws: StencilWorkspace::default(),
            tri: CyclicScratch::default(),
        }
    }
}

#[inline]
fn add_matvec(acc: &mut [f64], block: &Block, d: &[f64], m: usize, n_space: usize) {
    for k in 0..n_space {
        let a = block.at(k, m * m);
        let dk = &d[k * m..(k + 1) * m];
        let out = &mut acc[k * m..(k + 1) * m];
        for r in 0..m {
            let row = &a[r * m..(r + 1) * m];
            for c in 0..m {
                out[r] += row[c] * dk[c];
            }
        }
    }
}

#[inline]
fn add_vec(acc: &mut [f64], block: &Block, m: usize, n_space: usize) {
    for k in 0..n_space {
        let f = block.at(k, m);
        let out = &mut acc[k * m..(k + 1) * m];
        for a in 0..m {
            out[a] += f[a];
        }
    }
}

/// One slice step; returns the top-order coefficient bounds seen.
#[allow(clippy::too_many_arguments)]
fn step_row<O: MarchingOperator>(
    op: &O,
    level: &O::Level,
    scheme: &SchemeConfig,
    i: usize,
    j: usize,
    cur: &[f64],
    diag_derivs: &[Vec<f64>],
    out: &mut [f64],
    sc: &mut RowScratch,
) -> Result<(f64, f64)> {
    let g = op.grid();
    let shape = op.shape();
    let (n_y, d, m, dy) = (g.n_y(), g.d(), shape.m, g.dy());
    let n_space = g.n_space();
    let top = 2 * g.r();
    op.coefficients(level, i, j, &mut sc.coefs)?;

    let mut sup_a = 0.0f64;
    let mut sup_b = 0.0f64;
    let mut implicit: Option<usize> = None;
    sc.acc.fill(0.0);
    for (p, &idx) in shape.local.iter().enumerate() {
        let block = &sc.coefs.local[p];
        if block.is_zero() {
            continue;
        }
        if idx.order() == top {
            sup_a = sup_a.max(block.matrix_norm(m, n_space));
            if scheme.kind == SchemeKind::Imex {
                implicit = Some(p);
                continue;
            }
        }
        derivative_into(cur, &mut sc.deriv, idx, n_y, d, m, dy, &mut sc.ws);
        add_matvec(&mut sc.acc, block, &sc.deriv, m, n_space);
    }
    for (p, &idx) in shape.diag.iter().enumerate() {
        let block = &sc.coefs.diag[p];
        if block.is_zero() {
            continue;
        }
        if idx.order() == top {
            sup_b = sup_b.max(block.matrix_norm(m, n_space));
        }
        add_matvec(&mut sc.acc, block, &diag_derivs[p], m, n_space);
    }
    if shape.has_source && !sc.coefs.source.is_zero() {
        add_vec(&mut sc.acc, &sc.coefs.source, m, n_space);
    }
    let dtau = g.dtau();
    for ((o, u), a) in out.iter_mut().zip(cur).zip(&sc.acc) {
        *o = u + dtau * a;
    }
    if let Some(p) = implicit {
        imex_solve(&sc.coefs.local[p], out, m, n_y, dtau, dy, &mut sc.tri)?;
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteDetected { i, j: j + 1 });
    }
    Ok((sup_a, sup_b))
}

/// Solves `(1 - Δτ A ∂_yy) x = rhs` in place, per component.
fn imex_solve(block: &Block, rhs: &mut [f64], m: usize, n_y: usize, dtau: f64, dy: f64, tri: &mut CyclicScratch) -> Result<()> {
    for k in 0..n_y {
        let a = block.at(k, m * m);
        for r in 0..m {
            for c in 0..m {
                if r != c && a[r * m + c] != 0.0 {
                    return Err(Error::UnsupportedScheme(
                        "imex needs a diagonal top-order coefficient for m > 1".into(),
                    ));
                }
            }
        }
    }
    let mut sub = vec![0.0; n_y];
    let mut dia = vec![0.0; n_y];
    let mut sup = vec![0.0; n_y];
    let mut x = vec![0.0; n_y];
    for comp in 0..m {
        for k in 0..n_y {
            let c = dtau * block.at(k, m * m)[comp * m + comp] / (dy * dy);
            sub[k] = -c;
            dia[k] = 1.0 + 2.0 * c;
            sup[k] = -c;
            x[k] = rhs[k * m + comp];
        }
        solve_cyclic_tridiagonal(&sub, &dia, &sup, &mut x, tri)?;
        for k in 0..n_y {
            rhs[k * m + comp] = x[k];
        }
    }
    Ok(())
}

#[derive(Default)]
pub(crate) struct CyclicScratch {
    b: Vec<f64>,
    z: Vec<f64>,
    cp: Vec<f64>,
}

fn thomas(sub: &[f64], dia: &[f64], sup: &[f64], x: &mut [f64], cp: &mut [f64]) -> Result<()> {
    let n = x.len();
    let mut den = dia[0];
    if den == 0.0 {
        return Err(Error::InvalidParameter("singular tridiagonal system".into()));
    }
    cp[0] = sup[0] / den;
    x[0] /= den;
    for k in 1..n {
        den = dia[k] - sub[k] * cp[k - 1];
        if den == 0.0 {
            return Err(Error::InvalidParameter("singular tridiagonal system".into()));
        }
        cp[k] = sup[k] / den;
        x[k] = (x[k] - sub[k] * x[k - 1]) / den;
    }
    for k in (0..n - 1).rev() {
        x[k] -= cp[k] * x[k + 1];
    }
    Ok(())
}

/// Periodic tridiagonal solve (row `k`: `sub[k] x[k-1] + dia[k] x[k] +
/// sup[k] x[k+1] = rhs[k]`; indices mod n) by Sherman–Morrison on top of
/// the Thomas algorithm. `x` holds the right-hand side on entry.
pub(crate) fn solve_cyclic_tridiagonal(sub: &[f64], dia: &[f64], sup: &[f64], x: &mut [f64], s: &mut CyclicScratch) -> Result<()> {
    let n = x.len();
    let alpha = sup[n - 1];
    let beta = sub[0];
    let gamma = -dia[0];
    s.b.clear();
    s.b.extend_from_slice(dia);
    s.b[0] = dia[0] - gamma;
    s.b[n - 1] = dia[n - 1] - alpha * beta / gamma;
    s.cp.resize(n, 0.0);
    thomas(sub, &s.b, sup, x, &mut s.cp)?;
    s.z.clear();
    s.z.resize(n, 0.0);
    s.z[0] = gamma;
    s.z[n - 1] = alpha;
    thomas(sub, &s.b, sup, &mut s.z, &mut s.cp)?;
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + s.z[0] + beta * s.z[n - 1] / gamma);
    for k in 0..n {
        x[k] -= fact * s.z[k];
    }
    Ok(())
}

/// Runs the level recursion of `op` over its whole grid.
pub fn march<O: MarchingOperator>(op: &O, scheme: &SchemeConfig) -> Result<(TriangleField, MarchStats)> {
    let g = *op.grid();
    scheme.validate(&g)?;
    let shape = op.shape();
    if shape.m != g.m() {
        return Err(Error::GridMismatch(format!(
            "operator has m = {}, grid has m = {}",
            shape.m,
            g.m()
        )));
    }
    let n = g.n_tau();
    let len = g.slice_len();
    let mut field = TriangleField::zeros(&g);
    for i in 0..=n {
        op.initial_slice(i, field.slice_mut(i, 0))?;
        if field.slice(i, 0).iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteDetected { i, j: 0 });
        }
    }
    let mut stats = MarchStats {
        cfl_ratio: 0.0,
        sup_a: 0.0,
        sup_b: 0.0,
        dtau_limit: f64::INFINITY,
    };
    let mut ws = StencilWorkspace::default();
    let mut serial_scratch = RowScratch::new(shape, len);
    for j in 0..n {
        let level = op.prepare_level(j)?;
        let rows = field.rows_mut();
        let (done, todo) = rows.split_at_mut(j + 1);
        let diag = &done[j][j * len..(j + 1) * len];
        let diag_derivs: Vec<Vec<f64>> = shape
            .diag
            .iter()
            .map(|&idx| {
                let mut out = vec![0.0; len];
                derivative_into(diag, &mut out, idx, g.n_y(), g.d(), g.m(), g.dy(), &mut ws);
                out
            })
            .collect();
        let run = |i: usize, row: &mut Vec<f64>, sc: &mut RowScratch| {
            let (head, tail) = row.split_at_mut((j + 1) * len);
            step_row(op, &level, scheme, i, j, &head[j * len..], &diag_derivs, &mut tail[..len], sc)
        };
        let results: Vec<Result<(f64, f64)>> = if scheme.parallel {
            todo.par_iter_mut()
                .enumerate()
                .map_init(|| RowScratch::new(shape, len), |sc, (off, row)| run(j + 1 + off, row, sc))
                .collect()
        } else {
            let mut out: Vec<Option<Result<(f64, f64)>>> = (0..todo.len()).map(|_| None).collect();
            let order: Vec<usize> = match scheme.sweep {
                Sweep::Ascending => (0..todo.len()).collect(),
                Sweep::Descending => (0..todo.len()).rev().collect(),
            };
            for off in order {
                out[off] = Some(run(j + 1 + off, &mut todo[off], &mut serial_scratch));
            }
            out.into_iter().map(|r| r.expect("every row stepped")).collect()
        };
        for r in results {
            let (a, b) = r?;
            stats.sup_a = stats.sup_a.max(a);
            stats.sup_b = stats.sup_b.max(b);
        }
        stats.dtau_limit = scheme.dtau_limit(&g, stats.sup_a, stats.sup_b);
        stats.cfl_ratio = g.dtau() / stats.dtau_limit;
        if stats.cfl_ratio > 1.0 {
            return Err(Error::CflViolation {
                ratio: stats.cfl_ratio,
                dtau: g.dtau(),
                limit: stats.dtau_limit,
            });
        }
    }
    Ok((field, stats))
}

/// [`MarchingOperator`] of a [`LinearSystemSpec`].
pub struct LinearOperator<'a> {
    spec: &'a LinearSystemSpec,
    grid: TriangleGrid,
    shape: OpShape,
}

impl<'a> LinearOperator<'a> {
    pub fn new(spec: &'a LinearSystemSpec, grid: &TriangleGrid) -> Result<Self> {
        if (grid.d(), grid.r(), grid.m()) != (spec.d(), spec.r(), spec.m()) {
            return Err(Error::GridMismatch(format!(
                "spec has (d, r, m) = ({}, {}, {}), grid has ({}, {}, {})",
                spec.d(),
                spec.r(),
                spec.m(),
                grid.d(),
                grid.r(),
                grid.m()
            )));
        }
        let idx = spec.indices();
        let shape = OpShape {
            m: spec.m(),
            local: idx.iter().copied().filter(|&i| !spec.a(i).is_zero()).collect(),
            diag: idx.iter().copied().filter(|&i| !spec.b(i).is_zero()).collect(),
            has_source: !spec.f().is_zero(),
        };
        Ok(LinearOperator {
            spec,
            grid: *grid,
            shape,
        })
    }
}

fn fill_block(c: &Coefficient, grid: &TriangleGrid, i: usize, j: usize, len: usize, out: &mut Block) -> Result<()> {
    match c {
        Coefficient::Zero => *out = Block::Zero,
        Coefficient::Constant(v) => {
            if !matches!(out, Block::Shared(s) if Arc::ptr_eq(s, v)) {
                *out = Block::Shared(v.clone());
            }
        }
        Coefficient::Eval(f) => {
            let buf = out.nodes_mut(grid.n_space() * len);
            for k in 0..grid.n_space() {
                f(&grid.point(i, j, k), &mut buf[k * len..(k + 1) * len])?;
            }
        }
    }
    Ok(())
}

impl MarchingOperator for LinearOperator<'_> {
    type Level = ();

    fn grid(&self) -> &TriangleGrid {
        &self.grid
    }

    fn shape(&self) -> &OpShape {
        &self.shape
    }

    fn initial_slice(&self, i: usize, out: &mut [f64]) -> Result<()> {
        let v = self.spec.g.sample(&self.grid, self.grid.t(i))?;
        out.copy_from_slice(&v);
        Ok(())
    }

    fn prepare_level(&self, _j: usize) -> Result<()> {
        Ok(())
    }

    fn coefficients(&self, _: &(), i: usize, j: usize, out: &mut SliceCoefs) -> Result<()> {
        let m = self.shape.m;
        for (p, &idx) in self.shape.local.iter().enumerate() {
            fill_block(self.spec.a(idx), &self.grid, i, j, m * m, &mut out.local[p])?;
        }
        for (p, &idx) in self.shape.diag.iter().enumerate() {
            fill_block(self.spec.b(idx), &self.grid, i, j, m * m, &mut out.diag[p])?;
        }
        if self.shape.has_source {
            fill_block(self.spec.f(), &self.grid, i, j, m, &mut out.source)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearSolveReport {
    pub scheme: SchemeKind,
    pub cfl_ratio: f64,
    pub dtau_limit: f64,
    pub wall_time_s: f64,
    pub sup_norm: f64,
    pub schauder_ratio: Option<f64>,
}

/// Solves a nonlocal linear system.
pub fn solve_nonlocal_linear(spec: &LinearSystemSpec, grid: &TriangleGrid, scheme: &SchemeConfig) -> Result<(TriangleField, LinearSolveReport)> {
    let start = Instant::now();
    let op = LinearOperator::new(spec, grid)?;
    let (u, stats) = march(&op, scheme)?;
    let report = LinearSolveReport {
        scheme: scheme.kind,
        cfl_ratio: stats.cfl_ratio,
        dtau_limit: stats.dtau_limit,
        wall_time_s: start.elapsed().as_secs_f64(),
        sup_norm: u.sup_norm(),
        schauder_ratio: None,
    };
    Ok((u, report))
}

/// Solves a system without diagonal terms: every `t` slice evolves as an
/// independent local parabolic problem.
pub fn solve_local_family(spec: &LinearSystemSpec, grid: &TriangleGrid, scheme: &SchemeConfig) -> Result<TriangleField> {
    if !spec.is_local() {
        return Err(Error::InvalidParameter(format!(
            "{} has diagonal coefficients; the local family needs B = 0",
            spec.name
        )));
    }
    Ok(solve_nonlocal_linear(spec, grid, scheme)?.0)
}

/// Samples a `(t, s, y)` coefficient over the triangle.
pub fn sample_coefficient(c: &Coefficient, grid: &TriangleGrid, len: usize) -> Result<TriangleField> {
    let g = grid.with_components(len);
    let mut field = TriangleField::zeros(&g);
    for i in 0..=g.n_tau() {
        for j in 0..=i {
            let slice = field.slice_mut(i, j);
            for k in 0..g.n_space() {
                let p: Point = g.point(i, j, k);
                c.fill(&p, &mut slice[k * len..(k + 1) * len])?;
            }
        }
    }
    Ok(field)
}

/// `g(t, y)` extended constantly in `s`.
pub fn extended_data(spec: &LinearSystemSpec, grid: &TriangleGrid) -> Result<TriangleField> {
    let mut field = TriangleField::zeros(grid);
    for i in 0..=grid.n_tau() {
        let v = spec.g.sample(grid, grid.t(i))?;
        for j in 0..=i {
            field.slice_mut(i, j).copy_from_slice(&v);
        }
    }
    Ok(field)
}

/// `‖u‖^(l) / (‖f‖^(l-2r) + ‖g‖^(l))` with the discrete triangle norms
/// (time derivative included); `g` is extended constantly in `s`.
///
/// Zero data with a zero solution gives 0.
pub fn schauder_ratio(u: &TriangleField, spec: &LinearSystemSpec, l: f64) -> Result<f64> {
    let g = *u.grid();
    let r = g.r();
    let nu = norm_triangle(u, l, true)?;
    let f_field = sample_coefficient(spec.f(), &g, g.m())?;
    let nf = norm_triangle(&f_field, l - (2 * r) as f64, true)?;
    let ng = norm_triangle(&extended_data(spec, &g)?, l, true)?;
    let den = nf + ng;
    if den == 0.0 {
        if nu == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::DivisionByZero(format!(
            "data norms vanish but the solution norm is {nu}"
        )));
    }
    Ok(nu / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cyclic_solver_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [4usize, 5, 9, 32] {
            let sub: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..0.0)).collect();
            let sup: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..0.0)).collect();
            let dia: Vec<f64> = (0..n).map(|k| 1.0 - sub[k] - sup[k] + rng.gen_range(0.0..1.0)).collect();
            let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut x = rhs.clone();
            solve_cyclic_tridiagonal(&sub, &dia, &sup, &mut x, &mut CyclicScratch::default()).unwrap();
            for k in 0..n {
                let res = sub[k] * x[(k + n - 1) % n] + dia[k] * x[k] + sup[k] * x[(k + 1) % n] - rhs[k];
                assert!(res.abs() < 1e-13, "n = {n}, k = {k}: {res}");
            }
        }
    }

    #[test]
    fn cfl_limit_formula() {
        let g = crate::grid::build_grid(0.25, 58, 2.0 * std::f64::consts::PI, 32, 1, 1, 1).unwrap();
        let s = SchemeConfig::explicit();
        let lim = s.dtau_limit(&g, 1.0, 1.0);
        let want = 0.9 * g.dy() * g.dy() / 8.0;
        assert_eq!(lim, want);
        assert!(g.dtau() <= lim);
        assert!(s.dtau_limit(&g, 0.0, 0.0).is_infinite());
        assert_eq!(SchemeConfig::imex().dtau_limit(&g, 5.0, 1.0), 0.9 * g.dy() * g.dy() / 4.0);
    }
}
