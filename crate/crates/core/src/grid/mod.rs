//! Triangular space-time grid, field storage and periodic stencils.
//!
//! The continuum domain `{(t, s, y) : 0 <= s <= t <= T, y ∈ R^d}` is
//! replaced by the lower triangle of an `n_tau × n_tau` time lattice with
//! identical steps in `t` and `s`, times a periodic box `[0, L)^d`. Since
//! both time axes share one step, the diagonal node `(s_j, s_j)` is always
//! stored and never interpolated.

mod index;
mod jet;
pub mod nltf;
mod stencil;

pub use index::MultiIndex;
pub use jet::{jet_at, jet_at_point, Jet, SliceJet};
pub(crate) use jet::slice_derivatives;
pub use stencil::{derivative_into, stencil_apply, StencilWorkspace};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A space-time evaluation point. Only the first `d` entries of `y` are used.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Point {
    pub t: f64,
    pub s: f64,
    pub y: [f64; 2],
}

impl Point {
    pub fn new(t: f64, s: f64, y: &[f64]) -> Self {
        let mut yy = [0.0; 2];
        yy[..y.len()].copy_from_slice(y);
        Point { t, s, y: yy }
    }
}

/// Construction parameters of a [`TriangleGrid`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    #[serde(rename = "T")]
    pub t_final: f64,
    pub n_tau: usize,
    #[serde(rename = "L")]
    pub box_len: f64,
    pub n_y: usize,
    pub d: usize,
    pub r: usize,
    pub m: usize,
}

/// Validated discretization of the triangle times a periodic box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TriangleGrid {
    #[serde(rename = "T")]
    t_final: f64,
    n_tau: usize,
    #[serde(rename = "L")]
    box_len: f64,
    n_y: usize,
    d: usize,
    r: usize,
    m: usize,
    dtau: f64,
    dy: f64,
}

/// Validates parameters and builds the grid.
pub fn build_grid(
    t_final: f64,
    n_tau: usize,
    box_len: f64,
    n_y: usize,
    d: usize,
    r: usize,
    m: usize,
) -> Result<TriangleGrid> {
    TriangleGrid::new(GridParams {
        t_final,
        n_tau,
        box_len,
        n_y,
        d,
        r,
        m,
    })
}

impl TriangleGrid {
    pub fn new(p: GridParams) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(p.t_final.is_finite() && p.t_final > 0.0) {
            return bad(format!("T must be positive and finite, got {}", p.t_final));
        }
        if !(p.box_len.is_finite() && p.box_len > 0.0) {
            return bad(format!("L must be positive and finite, got {}", p.box_len));
        }
        if p.n_tau < 1 {
            return bad("n_tau must be >= 1".into());
        }
        if !(1..=2).contains(&p.d) {
            return bad(format!("d must be 1 or 2, got {}", p.d));
        }
        if !(1..=2).contains(&p.r) {
            return bad(format!("r must be 1 or 2, got {}", p.r));
        }
        if p.m < 1 {
            return bad("m must be >= 1".into());
        }
        let width = 4 * p.r + 1;
        if p.n_y < width {
            return bad(format!(
                "n_y must be >= 4r+1 = {width} (stencil width {width} > {})",
                p.n_y
            ));
        }
        Ok(TriangleGrid {
            t_final: p.t_final,
            n_tau: p.n_tau,
            box_len: p.box_len,
            n_y: p.n_y,
            d: p.d,
            r: p.r,
            m: p.m,
            dtau: p.t_final / p.n_tau as f64,
            dy: p.box_len / p.n_y as f64,
        })
    }

    pub fn params(&self) -> GridParams {
        GridParams {
            t_final: self.t_final,
            n_tau: self.n_tau,
            box_len: self.box_len,
            n_y: self.n_y,
            d: self.d,
            r: self.r,
            m: self.m,
        }
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }
    pub fn n_tau(&self) -> usize {
        self.n_tau
    }
    pub fn box_len(&self) -> f64 {
        self.box_len
    }
    pub fn n_y(&self) -> usize {
        self.n_y
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn r(&self) -> usize {
        self.r
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn dtau(&self) -> f64 {
        self.dtau
    }
    pub fn dy(&self) -> f64 {
        self.dy
    }

    /// Number of spatial nodes, `n_y^d`.
    pub fn n_space(&self) -> usize {
        self.n_y.pow(self.d as u32)
    }

    /// Values stored per `(i, j)` slice.
    pub fn slice_len(&self) -> usize {
        self.n_space() * self.m
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 * self.dtau
    }

    pub fn s(&self, j: usize) -> f64 {
        j as f64 * self.dtau
    }

    /// Spatial coordinates of flat node `k` (row-major, first axis slowest).
    pub fn y(&self, k: usize) -> [f64; 2] {
        match self.d {
            1 => [k as f64 * self.dy, 0.0],
            _ => [
                (k / self.n_y) as f64 * self.dy,
                (k % self.n_y) as f64 * self.dy,
            ],
        }
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Point {
        Point {
            t: self.t(i),
            s: self.s(j),
            y: self.y(k),
        }
    }

    /// Same geometry with a different component count.
    pub fn with_components(&self, m: usize) -> Self {
        let mut g = *self;
        g.m = m;
        g
    }

    /// Restriction to the window `[0, n Δτ]`, keeping `Δτ` bit-identical.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n_tau {
            return Err(Error::InvalidParameter(format!(
                "window of {n} steps outside 1..={}",
                self.n_tau
            )));
        }
        let mut g = *self;
        g.n_tau = n;
        g.t_final = n as f64 * self.dtau;
        Ok(g)
    }

    /// True when both grids share the same nodes and component count.
    pub fn same_nodes(&self, other: &TriangleGrid) -> bool {
        self.n_tau == other.n_tau
            && self.n_y == other.n_y
            && self.d == other.d
            && self.m == other.m
            && self.dtau == other.dtau
            && self.dy == other.dy
    }

    /// Same nodes, ignoring component count.
    pub fn same_geometry(&self, other: &TriangleGrid) -> bool {
        self.with_components(1).same_nodes(&other.with_components(1))
    }
}

/// Values over the spatial grid at one `(i, j)`, laid out `[node][component]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialSlice {
    pub n_y: usize,
    pub d: usize,
    pub m: usize,
    pub data: Vec<f64>,
}

impl SpatialSlice {
    pub fn zeros(n_y: usize, d: usize, m: usize) -> Self {
        SpatialSlice {
            n_y,
            d,
            m,
            data: vec![0.0; n_y.pow(d as u32) * m],
        }
    }

    /// Samples `f(y)` (scalar, `m = 1`) on the grid nodes.
    pub fn from_fn(grid: &TriangleGrid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let data = (0..grid.n_space()).map(|k| f(grid.y(k))).collect();
        SpatialSlice {
            n_y: grid.n_y(),
            d: grid.d(),
            m: 1,
            data,
        }
    }

    pub fn n_space(&self) -> usize {
        self.n_y.pow(self.d as u32)
    }

    /// Shape `(n_y^d, m)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.n_space(), self.m)
    }

    pub fn get(&self, k: usize, a: usize) -> f64 {
        self.data[k * self.m + a]
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// Grid function `u(t_i, s_j, y_k)` on the lower triangle `j <= i`.
///
/// Row `i` holds the slices `j = 0..=i` contiguously, each `n_y^d × m`.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleField {
    grid: TriangleGrid,
    rows: Vec<Vec<f64>>,
}

impl TriangleField {
    pub fn zeros(grid: &TriangleGrid) -> Self {
        let len = grid.slice_len();
        let rows = (0..=grid.n_tau()).map(|i| vec![0.0; (i + 1) * len]).collect();
        TriangleField { grid: *grid, rows }
    }

    /// Fills every node from `f(point, out)` with `out` of length `m`.
    pub fn from_fn(grid: &TriangleGrid, mut f: impl FnMut(&Point, &mut [f64])) -> Self {
        let mut field = Self::zeros(grid);
        let m = grid.m();
        for i in 0..=grid.n_tau() {
            for j in 0..=i {
                let slice = field.slice_mut(i, j);
                for k in 0..grid.n_space() {
                    f(&grid.point(i, j, k), &mut slice[k * m..(k + 1) * m]);
                }
            }
        }
        field
    }

    /// Builds a field from raw payload in `(i, j, node, component)` order.
    pub fn from_payload(grid: &TriangleGrid, payload: &[f64]) -> Result<Self> {
        let len = grid.slice_len();
        let rows_total: usize = (0..=grid.n_tau()).map(|i| (i + 1) * len).sum();
        if payload.len() != rows_total {
            return Err(Error::Format(format!(
                "payload has {} values, grid needs {rows_total}",
                payload.len()
            )));
        }
        let mut rows = Vec::with_capacity(grid.n_tau() + 1);
        let mut off = 0;
        for i in 0..=grid.n_tau() {
            let n = (i + 1) * len;
            rows.push(payload[off..off + n].to_vec());
            off += n;
        }
        Ok(TriangleField { grid: *grid, rows })
    }

    pub fn grid(&self) -> &TriangleGrid {
        &self.grid
    }

    fn check(&self, i: usize, j: usize) -> Result<()> {
        if i > self.grid.n_tau() {
            return Err(Error::IndexOutOfRange(format!(
                "i = {i} > n_tau = {}",
                self.grid.n_tau()
            )));
        }
        if j > i {
            return Err(Error::IndexOutOfRange(format!(
                "j = {j} > i = {i} lies above the diagonal"
            )));
        }
        Ok(())
    }

    /// Checked slice access.
    pub fn try_slice(&self, i: usize, j: usize) -> Result<&[f64]> {
        self.check(i, j)?;
        Ok(self.slice(i, j))
    }

    /// Slice `(i, j)`; panics when `j > i` or `i > n_tau`.
    pub fn slice(&self, i: usize, j: usize) -> &[f64] {
        assert!(j <= i, "slice ({i}, {j}) above the diagonal");
        let len = self.grid.slice_len();
        &self.rows[i][j * len..(j + 1) * len]
    }

    pub fn slice_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        assert!(j <= i, "slice ({i}, {j}) above the diagonal");
        let len = self.grid.slice_len();
        &mut self.rows[i][j * len..(j + 1) * len]
    }

    pub fn get(&self, i: usize, j: usize, k: usize, a: usize) -> f64 {
        self.slice(i, j)[k * self.grid.m() + a]
    }

    /// Borrowed diagonal slice `(j, j)`; the one read path for diagonal values.
    pub fn diagonal(&self, j: usize) -> &[f64] {
        self.slice(j, j)
    }

    /// All rows mutably (crate-internal use by the marching solvers).
    pub(crate) fn rows_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.rows
    }

    /// Slice value copy as a [`SpatialSlice`].
    pub fn spatial_slice(&self, i: usize, j: usize) -> Result<SpatialSlice> {
        self.check(i, j)?;
        Ok(SpatialSlice {
            n_y: self.grid.n_y(),
            d: self.grid.d(),
            m: self.grid.m(),
            data: self.slice(i, j).to_vec(),
        })
    }

    /// Iterates the payload in `(i, j, node, component)` order.
    pub fn payload(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().flat_map(|r| r.iter().copied())
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.rows.iter().flat_map(|r| r.iter())
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// `max |self - other|` over all stored values.
    pub fn sup_distance(&self, other: &TriangleField) -> f64 {
        self.values()
            .zip(other.values())
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    /// Extracts component `a` as a single-component field.
    pub fn component(&self, a: usize) -> TriangleField {
        let m = self.grid.m();
        let grid = self.grid.with_components(1);
        let rows = self
            .rows
            .iter()
            .map(|r| r.iter().skip(a).step_by(m).copied().collect())
            .collect();
        TriangleField { grid, rows }
    }

    /// Interleaves single-or-multi component fields into one field.
    pub fn stack(parts: &[&TriangleField]) -> Result<TriangleField> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidParameter("no fields to stack".into()))?;
        for p in parts {
            if !p.grid.same_geometry(&first.grid) {
                return Err(Error::GridMismatch("stacked fields differ in geometry".into()));
            }
        }
        let m: usize = parts.iter().map(|p| p.grid.m()).sum();
        let grid = first.grid.with_components(m);
        let mut out = TriangleField::zeros(&grid);
        let n_space = grid.n_space();
        for i in 0..=grid.n_tau() {
            for j in 0..=i {
                let dst = out.slice_mut(i, j);
                let mut c0 = 0;
                for p in parts {
                    let pm = p.grid.m();
                    let src = p.slice(i, j);
                    for k in 0..n_space {
                        dst[k * m + c0..k * m + c0 + pm]
                            .copy_from_slice(&src[k * pm..(k + 1) * pm]);
                    }
                    c0 += pm;
                }
            }
        }
        Ok(out)
    }

    /// Copy restricted to the first `n + 1` rows (window `[0, nΔτ]`).
    pub fn truncated(&self, n: usize) -> Result<TriangleField> {
        let grid = self.grid.truncated(n)?;
        Ok(TriangleField {
            grid,
            rows: self.rows[..=n].to_vec(),
        })
    }

    /// Elementwise `a·self + b·other`.
    pub fn lincomb(&self, a: f64, other: &TriangleField, b: f64) -> TriangleField {
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect())
            .collect();
        TriangleField {
            grid: self.grid,
            rows,
        }
    }

    pub fn scaled(&self, c: f64) -> TriangleField {
        let rows = self
            .rows
            .iter()
            .map(|x| x.iter().map(|p| c * p).collect())
            .collect();
        TriangleField {
            grid: self.grid,
            rows,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> TriangleField {
        let rows = self
            .rows
            .iter()
            .map(|x| x.iter().map(|&p| f(p)).collect())
            .collect();
        TriangleField {
            grid: self.grid,
            rows,
        }
    }
}

/// Returns a copy of the diagonal slice `(j, j)`.
pub fn diagonal_slice(field: &TriangleField, j: usize) -> Result<SpatialSlice> {
    if j > field.grid().n_tau() {
        return Err(Error::IndexOutOfRange(format!(
            "diagonal index {j} > n_tau = {}",
            field.grid().n_tau()
        )));
    }
    field.spatial_slice(j, j)
}
