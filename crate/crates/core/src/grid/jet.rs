use super::{derivative_into, MultiIndex, StencilWorkspace, TriangleField};
use crate::error::{Error, Result};

/// Spatial derivatives `∂_I u`, `|I| <= order`, at one node, in both the
/// local `(t, s, y)` and diagonal `(s, s, y)` flavours.
///
/// Entries are stored by the canonical position of `I`, each an `m`-vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    d: usize,
    m: usize,
    order: usize,
    local: Vec<f64>,
    diagonal: Vec<f64>,
}

impl Jet {
    pub fn zeros(d: usize, m: usize, order: usize) -> Self {
        let n = MultiIndex::count_up_to(d, order) * m;
        Jet {
            d,
            m,
            order,
            local: vec![0.0; n],
            diagonal: vec![0.0; n],
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn indices(&self) -> Vec<MultiIndex> {
        MultiIndex::all_up_to(self.d, self.order)
    }

    fn range(&self, index: MultiIndex) -> std::ops::Range<usize> {
        assert!(
            index.order() <= self.order && index.min_dimension() <= self.d,
            "index {index} not in jet of order {}",
            self.order
        );
        let p = index.position(self.d);
        p * self.m..(p + 1) * self.m
    }

    pub fn local(&self, index: MultiIndex) -> &[f64] {
        &self.local[self.range(index)]
    }

    pub fn diagonal(&self, index: MultiIndex) -> &[f64] {
        &self.diagonal[self.range(index)]
    }

    pub fn local_mut(&mut self, index: MultiIndex) -> &mut [f64] {
        let r = self.range(index);
        &mut self.local[r]
    }

    pub fn diagonal_mut(&mut self, index: MultiIndex) -> &mut [f64] {
        let r = self.range(index);
        &mut self.diagonal[r]
    }

    /// Flat local entries in canonical order (`m` values per index).
    pub fn local_values(&self) -> &[f64] {
        &self.local
    }

    pub fn diagonal_values(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn local_values_mut(&mut self) -> &mut [f64] {
        &mut self.local
    }

    pub fn diagonal_values_mut(&mut self) -> &mut [f64] {
        &mut self.diagonal
    }

    /// The argument vector `z = (local, diagonal)`.
    pub fn to_z(&self) -> Vec<f64> {
        let mut z = self.local.clone();
        z.extend_from_slice(&self.diagonal);
        z
    }

    /// Overwrites both parts from a `z` vector produced by [`Jet::to_z`].
    pub fn set_z(&mut self, z: &[f64]) {
        let n = self.local.len();
        self.local.copy_from_slice(&z[..n]);
        self.diagonal.copy_from_slice(&z[n..2 * n]);
    }

    pub fn z_len(&self) -> usize {
        2 * self.local.len()
    }
}

/// Jets for every node of one `(i, j)` slice (vectorized `jet_at`).
#[derive(Clone, Debug)]
pub struct SliceJet {
    d: usize,
    m: usize,
    order: usize,
    n_space: usize,
    /// `local[p]` is `∂_I u` over the slice for index position `p`.
    local: Vec<Vec<f64>>,
    diagonal: Vec<Vec<f64>>,
}

impl SliceJet {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n_space(&self) -> usize {
        self.n_space
    }

    pub fn local(&self, index: MultiIndex) -> &[f64] {
        &self.local[index.position(self.d)]
    }

    pub fn diagonal(&self, index: MultiIndex) -> &[f64] {
        &self.diagonal[index.position(self.d)]
    }

    /// Writes the jet at node `k` into `out`.
    pub fn fill_point(&self, k: usize, out: &mut Jet) {
        debug_assert_eq!(out.order, self.order);
        let m = self.m;
        for (p, (loc, dia)) in self.local.iter().zip(&self.diagonal).enumerate() {
            out.local[p * m..(p + 1) * m].copy_from_slice(&loc[k * m..(k + 1) * m]);
            out.diagonal[p * m..(p + 1) * m].copy_from_slice(&dia[k * m..(k + 1) * m]);
        }
    }

    pub fn point(&self, k: usize) -> Jet {
        let mut j = Jet::zeros(self.d, self.m, self.order);
        self.fill_point(k, &mut j);
        j
    }
}

/// All derivatives `|I| <= order` of one slice.
pub(crate) fn slice_derivatives(
    src: &[f64],
    n_y: usize,
    d: usize,
    m: usize,
    dy: f64,
    order: usize,
    ws: &mut StencilWorkspace,
) -> Vec<Vec<f64>> {
    MultiIndex::all_up_to(d, order)
        .into_iter()
        .map(|idx| {
            let mut out = vec![0.0; src.len()];
            derivative_into(src, &mut out, idx, n_y, d, m, dy, ws);
            out
        })
        .collect()
}

fn check_jet_args(field: &TriangleField, i: usize, j: usize, order: usize) -> Result<()> {
    let g = field.grid();
    if i > g.n_tau() || j > i {
        return Err(Error::IndexOutOfRange(format!(
            "jet at ({i}, {j}) outside the triangle of n_tau = {}",
            g.n_tau()
        )));
    }
    if order > 2 * g.r() {
        return Err(Error::UnsupportedOrder(format!(
            "jet order {order} exceeds 2r = {}",
            2 * g.r()
        )));
    }
    Ok(())
}

/// Jets over slice `(i, j)`: local part from `(i, j)`, diagonal from `(j, j)`.
pub fn jet_at(field: &TriangleField, i: usize, j: usize, order: usize) -> Result<SliceJet> {
    check_jet_args(field, i, j, order)?;
    let g = field.grid();
    let mut ws = StencilWorkspace::default();
    let local = slice_derivatives(field.slice(i, j), g.n_y(), g.d(), g.m(), g.dy(), order, &mut ws);
    let diagonal = if i == j {
        local.clone()
    } else {
        slice_derivatives(field.diagonal(j), g.n_y(), g.d(), g.m(), g.dy(), order, &mut ws)
    };
    Ok(SliceJet {
        d: g.d(),
        m: g.m(),
        order,
        n_space: g.n_space(),
        local,
        diagonal,
    })
}

/// Jet at a single node `k` of slice `(i, j)`.
pub fn jet_at_point(field: &TriangleField, i: usize, j: usize, k: usize, order: usize) -> Result<Jet> {
    let sj = jet_at(field, i, j, order)?;
    if k >= sj.n_space {
        return Err(Error::IndexOutOfRange(format!("node {k} >= {}", sj.n_space)));
    }
    Ok(sj.point(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use std::f64::consts::PI;

    #[test]
    fn diagonal_jet_equals_local_on_the_diagonal() {
        let g = build_grid(1.0, 4, 2.0 * PI, 16, 2, 1, 2).unwrap();
        let f = TriangleField::from_fn(&g, |p, o| {
            o[0] = (p.y[0] + p.t).sin() * (1.0 + p.s);
            o[1] = p.y[1].cos() * p.t;
        });
        for j in 0..=4 {
            let sj = jet_at(&f, j, j, 2).unwrap();
            for idx in MultiIndex::all_up_to(2, 2) {
                assert_eq!(sj.local(idx), sj.diagonal(idx));
            }
        }
    }

    #[test]
    fn jet_of_separable_field() {
        let g = build_grid(1.0, 4, 2.0 * PI, 64, 1, 1, 1).unwrap();
        let f = TriangleField::from_fn(&g, |p, o| o[0] = p.y[0].sin() * (1.0 + p.s));
        let (i, j) = (3, 2);
        let sj = jet_at(&f, i, j, 1).unwrap();
        let dy = g.dy();
        for k in 0..g.n_space() {
            let y = g.y(k)[0];
            let jet = sj.point(k);
            let s = g.s(j);
            assert!((jet.local(MultiIndex::EMPTY)[0] - y.sin() * (1.0 + s)).abs() < 1e-15);
            assert!((jet.local(MultiIndex::axis(0))[0] - y.cos() * (1.0 + s)).abs() < dy * dy);
            assert!((jet.diagonal(MultiIndex::axis(0))[0] - y.cos() * (1.0 + s)).abs() < dy * dy);
        }
    }

    #[test]
    fn zero_field_zero_jet() {
        let g = build_grid(1.0, 3, 1.0, 9, 1, 2, 1).unwrap();
        let f = TriangleField::zeros(&g);
        let sj = jet_at(&f, 3, 1, 4).unwrap();
        let jet = sj.point(5);
        assert!(jet.to_z().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn jet_errors() {
        let g = build_grid(1.0, 3, 1.0, 8, 1, 1, 1).unwrap();
        let f = TriangleField::zeros(&g);
        assert!(matches!(jet_at(&f, 1, 2, 1), Err(Error::IndexOutOfRange(_))));
        assert!(matches!(jet_at(&f, 2, 1, 3), Err(Error::UnsupportedOrder(_))));
    }
}
