//! Discrete estimators of parabolic Hölder norms.
//!
//! For a function `φ(s, y)` on `[0, t] × box`, the parabolic norm of
//! regularity `l` (non-integer) with half-order `r` is assembled from
//!
//! * sup terms `|D_s^i D_y^j φ|∞` for `2ri + j <= ⌊l⌋`,
//! * spatial seminorms `⟨D_s^i D_y^j φ⟩_y^(l-⌊l⌋)` for `2ri + j = ⌊l⌋`,
//! * temporal seminorms `⟨D_s^i D_y^j φ⟩_s^((l-2ri-j)/2r)` whenever
//!   `0 < l - 2ri - j < 2r`.
//!
//! `D_y^j` stands for all spatial derivatives of order `j`; every term takes
//! the maximum over the multi-indices of that order. Spatial derivatives use
//! the grid stencils. `D_s` is a first-order difference in `s` (one-sided at
//! the ends, central inside), so only `i <= 1` is available and regularity
//! indices needing `D_s^2` are refused.
//!
//! Pair sets: spatial seminorms compare every node with every other node when
//! the slice has at most [`EXHAUSTIVE_LIMIT`] nodes. Larger slices use a
//! stride pattern: each node is paired with `node + o` for every offset `o`
//! in a fixed ladder (small offsets one by one, then geometric up to half
//! the box), enlarged until at least [`MIN_SUBSAMPLE_PAIRS`] pairs are
//! visited. Distances are periodic.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{derivative_into, MultiIndex, StencilWorkspace, TriangleField};

pub const EXHAUSTIVE_LIMIT: usize = 128;
pub const MIN_SUBSAMPLE_PAIRS: usize = 10_000;

/// Spatial geometry of a periodic slice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceGeometry {
    pub n_y: usize,
    pub d: usize,
    pub dy: f64,
}

impl SpaceGeometry {
    pub fn n_space(&self) -> usize {
        self.n_y.pow(self.d as u32)
    }

    fn periodic_gap(&self, steps: isize) -> f64 {
        let n = self.n_y as isize;
        let a = steps.rem_euclid(n);
        a.min(n - a) as f64 * self.dy
    }
}

/// Scalar samples `φ(s_j, y_k)` for `j = 0..n_levels` at a fixed `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Strip {
    pub geom: SpaceGeometry,
    pub ds: f64,
    pub n_levels: usize,
    /// Level-major values, `n_levels × n_space`.
    pub values: Vec<f64>,
}

impl Strip {
    pub fn new(geom: SpaceGeometry, ds: f64, values: Vec<Vec<f64>>) -> Self {
        let n_levels = values.len();
        Strip {
            geom,
            ds,
            n_levels,
            values: values.into_iter().flatten().collect(),
        }
    }

    pub fn level(&self, j: usize) -> &[f64] {
        let n = self.geom.n_space();
        &self.values[j * n..(j + 1) * n]
    }

    /// Slice `i`, component `a` of a triangle field: levels `j = 0..=i`.
    pub fn from_field(field: &TriangleField, i: usize, a: usize) -> Self {
        let g = field.grid();
        let m = g.m();
        let levels = (0..=i)
            .map(|j| field.slice(i, j).iter().skip(a).step_by(m).copied().collect())
            .collect();
        Strip::new(
            SpaceGeometry {
                n_y: g.n_y(),
                d: g.d(),
                dy: g.dy(),
            },
            g.dtau(),
            levels,
        )
    }

    fn map_levels(&self, f: impl Fn(&[f64], &mut [f64])) -> Strip {
        let n = self.geom.n_space();
        let mut values = vec![0.0; self.values.len()];
        for j in 0..self.n_levels {
            f(self.level(j), &mut values[j * n..(j + 1) * n]);
        }
        Strip { values, ..self.clone() }
    }

    /// `∂_I` applied on every level.
    pub fn spatial_derivative(&self, index: MultiIndex) -> Strip {
        let geom = self.geom;
        let mut ws = StencilWorkspace::default();
        let ws_cell = std::cell::RefCell::new(&mut ws);
        self.map_levels(|src, dst| {
            derivative_into(src, dst, index, geom.n_y, geom.d, 1, geom.dy, &mut ws_cell.borrow_mut())
        })
    }

    /// First-order difference in `s`: one-sided at the ends, central inside.
    /// A single-level strip has no `s` extent and yields zeros.
    pub fn s_derivative(&self) -> Strip {
        let n = self.geom.n_space();
        let nl = self.n_levels;
        let mut values = vec![0.0; self.values.len()];
        if nl >= 2 {
            for j in 0..nl {
                let (lo, hi, den) = if j == 0 {
                    (0, 1, self.ds)
                } else if j == nl - 1 {
                    (nl - 2, nl - 1, self.ds)
                } else {
                    (j - 1, j + 1, 2.0 * self.ds)
                };
                for k in 0..n {
                    values[j * n + k] = (self.values[hi * n + k] - self.values[lo * n + k]) / den;
                }
            }
        }
        Strip { values, ..self.clone() }
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Which spatial pairs a seminorm visits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairMode {
    /// Exhaustive up to [`EXHAUSTIVE_LIMIT`] nodes, subsampled above.
    Auto,
    Exhaustive,
    Subsample,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

fn offset_ladder(half: usize, count: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..=count.min(half)).collect();
    if count < half {
        let extra = count;
        let lo = (count as f64).ln();
        let hi = (half as f64).ln();
        for q in 1..=extra {
            let v = (lo + (hi - lo) * q as f64 / extra as f64).exp().round() as usize;
            out.push(v.clamp(1, half));
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Offset vectors (in grid steps) of the deterministic stride pattern.
pub fn subsample_offsets(geom: &SpaceGeometry) -> Vec<[isize; 2]> {
    let n_space = geom.n_space();
    let half = geom.n_y / 2;
    let mut count = 4;
    loop {
        let ladder = offset_ladder(half, count);
        let offsets: Vec<[isize; 2]> = match geom.d {
            1 => ladder.iter().map(|&a| [a as isize, 0]).collect(),
            _ => {
                let mut v = Vec::new();
                let mut axis: Vec<isize> = vec![0];
                axis.extend(ladder.iter().map(|&a| a as isize));
                for &a in &axis {
                    for &b in &axis {
                        for sb in [1isize, -1] {
                            let bb = sb * b;
                            if (a == 0 && bb <= 0) || (b == 0 && sb == -1) {
                                continue;
                            }
                            v.push([a, bb]);
                        }
                    }
                }
                v
            }
        };
        let full = count >= half;
        if offsets.len() * n_space >= MIN_SUBSAMPLE_PAIRS || full {
            return offsets;
        }
        count *= 2;
    }
}

fn exhaustive_offsets(geom: &SpaceGeometry) -> Vec<[isize; 2]> {
    let n = geom.n_y as isize;
    match geom.d {
        1 => (1..n).map(|a| [a, 0]).collect(),
        _ => {
            let mut v = Vec::new();
            for a in 0..n {
                for b in 0..n {
                    if a != 0 || b != 0 {
                        v.push([a, b]);
                    }
                }
            }
            v
        }
    }
}

fn offsets_for(geom: &SpaceGeometry, mode: PairMode) -> Vec<[isize; 2]> {
    match mode {
        PairMode::Exhaustive => exhaustive_offsets(geom),
        PairMode::Subsample => subsample_offsets(geom),
        PairMode::Auto => {
            if geom.n_space() <= EXHAUSTIVE_LIMIT {
                exhaustive_offsets(geom)
            } else {
                subsample_offsets(geom)
            }
        }
    }
}

/// `max_s max_{y≠y'} |φ(s,y) - φ(s,y')| / dist(y,y')^α` with periodic distance.
pub fn seminorm_y(strip: &Strip, alpha: f64) -> Result<f64> {
    seminorm_y_with(strip, alpha, PairMode::Auto)
}

pub fn seminorm_y_with(strip: &Strip, alpha: f64, mode: PairMode) -> Result<f64> {
    check_alpha(alpha)?;
    let geom = strip.geom;
    let n = geom.n_y;
    let offsets = offsets_for(&geom, mode);
    let weights: Vec<f64> = offsets
        .iter()
        .map(|o| {
            let dist = match geom.d {
                1 => geom.periodic_gap(o[0]),
                _ => geom.periodic_gap(o[0]).hypot(geom.periodic_gap(o[1])),
            };
            dist.powf(-alpha)
        })
        .collect();
    let mut best = 0.0f64;
    for j in 0..strip.n_levels {
        let level = strip.level(j);
        for (o, w) in offsets.iter().zip(&weights) {
            for k in 0..geom.n_space() {
                let k2 = match geom.d {
                    1 => (k as isize + o[0]).rem_euclid(n as isize) as usize,
                    _ => {
                        let a = ((k / n) as isize + o[0]).rem_euclid(n as isize) as usize;
                        let b = ((k % n) as isize + o[1]).rem_euclid(n as isize) as usize;
                        a * n + b
                    }
                };
                best = best.max((level[k] - level[k2]).abs() * w);
            }
        }
    }
    Ok(best)
}

/// `max_y max_{j<j'} |φ(s_j,y) - φ(s_j',y)| / |s_j - s_j'|^α`, all pairs.
pub fn seminorm_s(strip: &Strip, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let n = strip.geom.n_space();
    let mut best = 0.0f64;
    for gap in 1..strip.n_levels {
        let w = (gap as f64 * strip.ds).powf(-alpha);
        for j in 0..strip.n_levels - gap {
            let a = strip.level(j);
            let b = strip.level(j + gap);
            for k in 0..n {
                best = best.max((a[k] - b[k]).abs() * w);
            }
        }
    }
    Ok(best)
}

/// One assembled contribution to a Hölder norm.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HolderTerm {
    pub s_order: usize,
    pub y_order: usize,
    /// Hölder exponent for seminorm terms, absent for sup terms.
    pub exponent: Option<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HolderReport {
    pub l: f64,
    pub alpha: f64,
    pub sup_terms: Vec<HolderTerm>,
    pub seminorm_y: Vec<HolderTerm>,
    pub seminorm_s: Vec<HolderTerm>,
    pub total: f64,
}

impl HolderReport {
    /// Sum of all listed parts in their stored order.
    pub fn parts_sum(&self) -> f64 {
        self.sup_terms
            .iter()
            .chain(&self.seminorm_y)
            .chain(&self.seminorm_s)
            .fold(0.0, |a, t| a + t.value)
    }
}

fn check_regularity(l: f64, r: usize) -> Result<()> {
    if !(l.is_finite() && l > 0.0) || l.fract() == 0.0 {
        return Err(Error::InvalidRegularityIndex(l));
    }
    let fl = l.floor() as usize;
    if fl > 2 * r + 1 {
        return Err(Error::UnsupportedRegularityIndex(
            l,
            format!("needs spatial derivatives of order {fl} > 2r+1"),
        ));
    }
    if l > (4 * r) as f64 {
        return Err(Error::UnsupportedRegularityIndex(
            l,
            "needs second derivatives in s".into(),
        ));
    }
    Ok(())
}

/// Terms `(i, j)` entering the norm of regularity `l`.
fn norm_terms(l: f64, r: usize) -> (Vec<(usize, usize)>, Vec<(usize, usize)>, Vec<(usize, usize, f64)>) {
    let fl = l.floor() as usize;
    let tr = 2 * r;
    let mut sup = Vec::new();
    let mut top = Vec::new();
    let mut temporal = Vec::new();
    for i in 0..=1usize {
        for j in 0..=fl {
            let k = tr * i + j;
            if k <= fl {
                sup.push((i, j));
            }
            if k == fl {
                top.push((i, j));
            }
            let gap = l - k as f64;
            if gap > 0.0 && gap < tr as f64 {
                temporal.push((i, j, gap / tr as f64));
            }
        }
    }
    sup.sort_by_key(|&(i, j)| (tr * i + j, i));
    top.sort();
    temporal.sort_by_key(|a| (a.0, a.1));
    (sup, top, temporal)
}

/// Parabolic norm `|φ(t_i,·,·)|^(l)` over `[0, t_i] × box` for one component.
pub fn norm_parabolic(field: &TriangleField, i: usize, component: usize, l: f64) -> Result<HolderReport> {
    let g = field.grid();
    if i > g.n_tau() || component >= g.m() {
        return Err(Error::IndexOutOfRange(format!(
            "slice {i} / component {component} outside the field"
        )));
    }
    norm_of_strip(&Strip::from_field(field, i, component), g.r(), l)
}

/// Parabolic norm of a single strip.
pub fn norm_of_strip(strip: &Strip, r: usize, l: f64) -> Result<HolderReport> {
    check_regularity(l, r)?;
    let fl = l.floor() as usize;
    let alpha = l - fl as f64;
    let (sup, top, temporal) = norm_terms(l, r);
    let d = strip.geom.d;

    // derivative strips per (i, multi-index)
    let ds_strip = strip.s_derivative();
    let deriv = |i: usize, idx: MultiIndex| -> Strip {
        let base = if i == 0 { strip } else { &ds_strip };
        if idx.order() == 0 {
            base.clone()
        } else {
            base.spatial_derivative(idx)
        }
    };
    let mut cache: std::collections::HashMap<(usize, usize), Vec<Strip>> = Default::default();
    let mut family = |i: usize, j: usize| -> Vec<Strip> {
        cache
            .entry((i, j))
            .or_insert_with(|| {
                MultiIndex::all_of_order(d, j)
                    .into_iter()
                    .map(|idx| deriv(i, idx))
                    .collect()
            })
            .clone()
    };

    let mut sup_terms = Vec::new();
    for (i, j) in sup {
        let v = family(i, j).iter().fold(0.0f64, |a, s| a.max(s.sup()));
        sup_terms.push(HolderTerm {
            s_order: i,
            y_order: j,
            exponent: None,
            value: v,
        });
    }
    let mut sem_y = Vec::new();
    for (i, j) in top {
        let mut v = 0.0f64;
        for s in family(i, j) {
            v = v.max(seminorm_y(&s, alpha)?);
        }
        sem_y.push(HolderTerm {
            s_order: i,
            y_order: j,
            exponent: Some(alpha),
            value: v,
        });
    }
    let mut sem_s = Vec::new();
    for (i, j, e) in temporal {
        let mut v = 0.0f64;
        for s in family(i, j) {
            v = v.max(seminorm_s(&s, e)?);
        }
        sem_s.push(HolderTerm {
            s_order: i,
            y_order: j,
            exponent: Some(e),
            value: v,
        });
    }
    let mut report = HolderReport {
        l,
        alpha,
        sup_terms,
        seminorm_y: sem_y,
        seminorm_s: sem_s,
        total: 0.0,
    };
    report.total = report.parts_sum();
    Ok(report)
}

/// Finite-difference `u_t` across slices.
///
/// Central in `t` where both neighbours store level `j`, backward at
/// `i = n_tau`, forward on the diagonal `j = i < n_tau`; the corner
/// `(n_tau, n_tau)` reuses the backward difference of level `n_tau - 1`.
pub fn t_derivative(field: &TriangleField) -> Result<TriangleField> {
    let g = *field.grid();
    let n = g.n_tau();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "t-derivative needs n_tau >= 2".into(),
        ));
    }
    let dt = g.dtau();
    let mut out = TriangleField::zeros(&g);
    for i in 0..=n {
        for j in 0..=i {
            let (hi, lo, jj, den) = if j < i && i < n {
                (i + 1, i - 1, j, 2.0 * dt)
            } else if j < i {
                (i, i - 1, j, dt)
            } else if i < n {
                (i + 1, i, j, dt)
            } else {
                (i, i - 1, j - 1, dt)
            };
            let a = field.slice(hi, jj).to_vec();
            let b = field.slice(lo, jj);
            let dst = out.slice_mut(i, j);
            for (k, v) in dst.iter_mut().enumerate() {
                *v = (a[k] - b[k]) / den;
            }
        }
    }
    Ok(out)
}

/// Triangle norm: `[u]^(l)` (flag off) or `‖u‖^(l)` (flag on), as the sup
/// over `t` levels of per-level parabolic norms summed over components.
pub fn norm_triangle(field: &TriangleField, l: f64, with_t_derivative: bool) -> Result<f64> {
    let g = field.grid();
    check_regularity(l, g.r())?;
    let ut = if with_t_derivative {
        Some(t_derivative(field)?)
    } else {
        None
    };
    let mut best = 0.0f64;
    for i in 0..=g.n_tau() {
        let mut level = 0.0;
        for a in 0..g.m() {
            level += norm_parabolic(field, i, a, l)?.total;
            if let Some(ut) = &ut {
                level += norm_parabolic(ut, i, a, l)?.total;
            }
        }
        best = best.max(level);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use std::f64::consts::PI;

    fn geom(n: usize) -> SpaceGeometry {
        SpaceGeometry {
            n_y: n,
            d: 1,
            dy: 2.0 * PI / n as f64,
        }
    }

    fn sine_strip(n: usize, levels: usize, ds: f64, f: impl Fn(f64, f64) -> f64) -> Strip {
        let g = geom(n);
        let vals = (0..levels)
            .map(|j| (0..n).map(|k| f(j as f64 * ds, k as f64 * g.dy)).collect())
            .collect();
        Strip::new(g, ds, vals)
    }

    /// Direct definition: every unordered pair, periodic distance.
    fn brute_seminorm_y_1d(strip: &Strip, alpha: f64) -> f64 {
        let n = strip.geom.n_y;
        let l = n as f64 * strip.geom.dy;
        let mut best = 0.0f64;
        for j in 0..strip.n_levels {
            let v = strip.level(j);
            for a in 0..n {
                for b in a + 1..n {
                    let raw = (b - a) as f64 * strip.geom.dy;
                    let dist = raw.min(l - raw);
                    best = best.max((v[a] - v[b]).abs() / dist.powf(alpha));
                }
            }
        }
        best
    }

    #[test]
    fn constant_field_has_zero_seminorms() {
        let s = sine_strip(16, 4, 0.25, |_, _| 3.0);
        assert_eq!(seminorm_y(&s, 0.5).unwrap(), 0.0);
        assert_eq!(seminorm_s(&s, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn sine_seminorm_matches_pair_enumeration() {
        let s = sine_strip(64, 1, 1.0, |_, y| y.sin());
        let brute = brute_seminorm_y_1d(&s, 0.5);
        let v = seminorm_y(&s, 0.5).unwrap();
        assert!((v - brute).abs() <= 1e-14 * brute);
    }

    #[test]
    fn seminorms_are_homogeneous() {
        let s = sine_strip(64, 5, 0.125, |s, y| (1.0 + s) * y.sin() + 0.3 * (2.0 * y).cos());
        let scaled = Strip {
            values: s.values.iter().map(|v| -3.0 * v).collect(),
            ..s.clone()
        };
        let a = seminorm_y(&s, 0.5).unwrap();
        let b = seminorm_y(&scaled, 0.5).unwrap();
        assert!((b - 3.0 * a).abs() <= 1e-12 * b);
        let doubled = Strip {
            values: s.values.iter().map(|v| 2.0 * v).collect(),
            ..s.clone()
        };
        let a = seminorm_s(&s, 0.5).unwrap();
        let b = seminorm_s(&doubled, 0.5).unwrap();
        assert!((b - 2.0 * a).abs() <= 1e-12 * b);
    }

    #[test]
    fn s_seminorm_of_linear_in_s() {
        // φ = s sin y: max_y|sin y| · max gap^(1-α), attained at the largest gap
        let n_tau = 8;
        let ds = 1.0 / n_tau as f64;
        let s = sine_strip(16, n_tau + 1, ds, |s, y| s * y.sin());
        let sup_sin = (0..16)
            .map(|k| (k as f64 * 2.0 * PI / 16.0).sin().abs())
            .fold(0.0, f64::max);
        let mut brute = 0.0f64;
        for a in 0..=n_tau {
            for b in a + 1..=n_tau {
                let gap = (b - a) as f64 * ds;
                brute = brute.max(sup_sin * gap / gap.powf(0.5));
            }
        }
        let v = seminorm_s(&s, 0.5).unwrap();
        assert!((v - brute).abs() <= 1e-14);
        assert!((v - sup_sin * 1.0f64.powf(0.5)).abs() < 1e-14);
    }

    #[test]
    fn alpha_must_be_in_unit_interval() {
        let s = sine_strip(16, 1, 1.0, |_, y| y.sin());
        assert!(matches!(seminorm_y(&s, 1.0), Err(Error::InvalidAlpha(_))));
        assert!(matches!(seminorm_s(&s, 0.0), Err(Error::InvalidAlpha(_))));
    }

    #[test]
    fn zero_field_norm_is_zero() {
        let g = build_grid(1.0, 4, 2.0 * PI, 16, 1, 1, 1).unwrap();
        let f = TriangleField::zeros(&g);
        let rep = norm_parabolic(&f, 4, 0, 2.5).unwrap();
        assert_eq!(rep.total, 0.0);
        assert!(rep.sup_terms.iter().all(|t| t.value == 0.0));
        assert_eq!(norm_triangle(&f, 2.5, true).unwrap(), 0.0);
        assert_eq!(norm_triangle(&f, 2.5, false).unwrap(), 0.0);
    }

    #[test]
    fn s_independent_sine_at_half() {
        let g = build_grid(1.0, 4, 2.0 * PI, 32, 1, 1, 1).unwrap();
        let f = TriangleField::from_fn(&g, |p, o| o[0] = p.y[0].sin());
        let rep = norm_parabolic(&f, 4, 0, 0.5).unwrap();
        let strip = Strip::from_field(&f, 4, 0);
        let brute = brute_seminorm_y_1d(&strip, 0.5);
        let sup = strip.sup();
        assert_eq!(rep.sup_terms.len(), 1);
        assert_eq!(rep.seminorm_s.len(), 1);
        assert_eq!(rep.seminorm_s[0].value, 0.0);
        assert_eq!(rep.seminorm_s[0].exponent, Some(0.25));
        assert!((rep.total - (sup + brute)).abs() <= 1e-14);
    }

    #[test]
    fn term_structure_for_two_and_a_half() {
        let (sup, top, temporal) = norm_terms(2.5, 1);
        assert_eq!(sup, vec![(0, 0), (0, 1), (0, 2), (1, 0)]);
        assert_eq!(top, vec![(0, 2), (1, 0)]);
        assert_eq!(temporal, vec![(0, 1, 0.75), (0, 2, 0.25), (1, 0, 0.25)]);
    }

    #[test]
    fn regularity_index_validation() {
        let g = build_grid(1.0, 4, 2.0 * PI, 16, 1, 1, 1).unwrap();
        let f = TriangleField::zeros(&g);
        assert!(matches!(norm_parabolic(&f, 2, 0, 2.0), Err(Error::InvalidRegularityIndex(_))));
        assert!(matches!(norm_parabolic(&f, 2, 0, -0.5), Err(Error::InvalidRegularityIndex(_))));
        assert!(matches!(
            norm_parabolic(&f, 2, 0, 4.5),
            Err(Error::UnsupportedRegularityIndex(..))
        ));
        assert!(norm_parabolic(&f, 2, 0, 3.5).is_ok());
    }

    #[test]
    fn report_total_is_sum_of_parts() {
        let g = build_grid(0.5, 6, 2.0 * PI, 16, 1, 1, 1).unwrap();
        let f = TriangleField::from_fn(&g, |p, o| o[0] = (1.0 + p.t) * (p.y[0] + p.s).sin());
        let rep = norm_parabolic(&f, 6, 0, 2.5).unwrap();
        assert!((rep.total - rep.parts_sum()).abs() <= 1e-12 * rep.total);
        assert!(rep.total > 0.0);
    }

    #[test]
    fn t_derivative_is_exact_on_linear_in_t() {
        let g = build_grid(1.0, 4, 2.0 * PI, 16, 1, 1, 1).unwrap();
        let f = TriangleField::from_fn(&g, |p, o| o[0] = p.t * p.y[0].sin());
        let ut = t_derivative(&f).unwrap();
        for i in 0..=4 {
            for j in 0..=i {
                for k in 0..16 {
                    let y = g.y(k)[0];
                    assert!((ut.get(i, j, k, 0) - y.sin()).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn triangle_norm_enumeration_t_sin() {
        // u = t sin y on a 4×4×16 grid, l = α = 0.5: per level i the norm is
        // sup|u| + ⟨u⟩_y + ⟨u⟩_s with ⟨u⟩_s = 0 (s-independent)
        let g = build_grid(1.0, 3, 2.0 * PI, 16, 1, 1, 1).unwrap();
        let f = TriangleField::from_fn(&g, |p, o| o[0] = p.t * p.y[0].sin());
        let mut expect = 0.0f64;
        let mut expect_t = 0.0f64;
        for i in 0..=3 {
            let strip = Strip::from_field(&f, i, 0);
            let level = strip.sup() + brute_seminorm_y_1d(&strip, 0.5);
            expect = expect.max(level);
            let unit = sine_strip(16, i + 1, g.dtau(), |_, y| y.sin());
            expect_t = expect_t.max(level + unit.sup() + brute_seminorm_y_1d(&unit, 0.5));
        }
        let a = norm_triangle(&f, 0.5, false).unwrap();
        let b = norm_triangle(&f, 0.5, true).unwrap();
        assert!((a - expect).abs() <= 1e-12 * expect);
        assert!((b - expect_t).abs() <= 1e-12 * expect_t);
        assert!(b > a);
    }

    #[test]
    fn window_monotonicity() {
        let g = build_grid(1.0, 6, 2.0 * PI, 16, 1, 1, 1).unwrap();
        let f = TriangleField::from_fn(&g, |p, o| o[0] = (1.0 + p.t) * (p.y[0] - p.s).sin());
        let full = norm_triangle(&f, 1.5, true).unwrap();
        let part = norm_triangle(&f.truncated(3).unwrap(), 1.5, true).unwrap();
        // the truncated field differs only in its u_t boundary rule at i = 3
        let part_plain = norm_triangle(&f.truncated(3).unwrap(), 1.5, false).unwrap();
        let full_plain = norm_triangle(&f, 1.5, false).unwrap();
        assert!(part_plain <= full_plain);
        assert!(part.is_finite() && full.is_finite());
    }

    #[test]
    fn subsample_pattern_is_large_enough() {
        for (n, d) in [(256, 1), (16, 2), (32, 2)] {
            let g = SpaceGeometry {
                n_y: n,
                d,
                dy: 1.0 / n as f64,
            };
            let offs = subsample_offsets(&g);
            assert!(offs.len() * g.n_space() >= MIN_SUBSAMPLE_PAIRS);
            assert!(offs.len() < exhaustive_offsets(&g).len());
        }
    }
}
