//! Sampled checks of uniform ellipticity and of the Hölder/Lipschitz
//! regularity of coefficients.
//!
//! Sample plans are deterministic:
//!
//! * nodes: every `node_stride`-th node of the triangle grid in
//!   `(i, j, k)` order;
//! * directions `ξ`: `±1` for `d = 1`, `64·d` equally spaced angles for
//!   `d = 2`;
//! * vectors `v`: `±1` for `m = 1`; for `m > 1` the `±e_a` axes followed by
//!   seeded pseudo-random unit vectors, 32 in total;
//! * jets `z` (jet-dependent problems only): the ball centre plus
//!   `z̄ + ρ w` for radii `ρ = 2^(l/2)`, `l = -8..=8`, with `ρ <= R0`, and
//!   directions `w` made of the coordinate axes (both signs) and seeded
//!   pseudo-random unit vectors. The radii are absolute, so the lattice of
//!   a larger ball contains the lattice of a smaller one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{Partial, Problem};
use crate::error::{Error, Result};
use crate::expr::{central_difference, second_difference};
use crate::grid::{Jet, MultiIndex, Point, TriangleGrid};
use crate::holder::{norm_of_strip, SpaceGeometry, Strip};

#[derive(Clone, Debug, PartialEq)]
pub struct SamplePlan {
    pub grid: TriangleGrid,
    pub node_stride: usize,
    pub xi_per_dim: usize,
    pub v_dirs: usize,
    pub z_center: Option<Vec<f64>>,
    pub z_radius: f64,
    pub z_dirs: usize,
    pub seed: u64,
}

impl SamplePlan {
    pub fn new(grid: &TriangleGrid) -> Self {
        SamplePlan {
            grid: *grid,
            node_stride: 1,
            xi_per_dim: 64,
            v_dirs: 32,
            z_center: None,
            z_radius: 1.0,
            z_dirs: 8,
            seed: 0x5eed,
        }
    }

    pub fn with_ball(mut self, center: Option<Vec<f64>>, radius: f64) -> Self {
        self.z_center = center;
        self.z_radius = radius;
        self
    }

    pub fn with_node_stride(mut self, stride: usize) -> Self {
        self.node_stride = stride.max(1);
        self
    }

    fn nodes(&self) -> Vec<Point> {
        let g = &self.grid;
        let mut out = Vec::new();
        let mut count = 0usize;
        for i in 0..=g.n_tau() {
            for j in 0..=i {
                for k in 0..g.n_space() {
                    if count.is_multiple_of(self.node_stride) {
                        out.push(g.point(i, j, k));
                    }
                    count += 1;
                }
            }
        }
        out
    }

    fn xis(&self, d: usize) -> Vec<Vec<f64>> {
        if d == 1 {
            return vec![vec![1.0], vec![-1.0]];
        }
        let n = self.xi_per_dim * d;
        (0..n)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                vec![th.cos(), th.sin()]
            })
            .collect()
    }

    fn vs(&self, m: usize) -> Vec<Vec<f64>> {
        if m == 1 {
            return vec![vec![1.0], vec![-1.0]];
        }
        let mut out = Vec::new();
        for a in 0..m {
            for sgn in [1.0, -1.0] {
                let mut v = vec![0.0; m];
                v[a] = sgn;
                out.push(v);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x7665);
        while out.len() < self.v_dirs.max(2 * m) {
            out.push(random_unit(&mut rng, m));
        }
        out
    }
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Absolute radius ladder `2^(l/2)`, `l = -8..=8`, truncated at `radius`.
fn radii(radius: f64) -> Vec<f64> {
    (-8..=8)
        .map(|l| 2f64.powf(l as f64 / 2.0))
        .filter(|&r| r <= radius * (1.0 + 1e-12))
        .collect()
}

fn ball_directions(dim: usize, extra: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for a in 0..dim {
        for sgn in [1.0, -1.0] {
            let mut w = vec![0.0; dim];
            w[a] = sgn;
            out.push(w);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..extra {
        out.push(random_unit(&mut rng, dim));
    }
    out
}

fn ball_points(center: &[f64], radius: f64, extra: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out = vec![center.to_vec()];
    let dirs = ball_directions(center.len(), extra, seed);
    for r in radii(radius) {
        for w in &dirs {
            out.push(center.iter().zip(w).map(|(c, x)| c + r * x).collect());
        }
    }
    out
}

/// Jet template consumed by a problem's coefficients, if any.
fn jet_template(problem: &Problem) -> Option<Jet> {
    match problem {
        Problem::Linear(_) => None,
        Problem::Quasilinear(s) => Some(Jet::zeros(s.d(), s.m(), s.jet_order())),
        Problem::FullyNonlinear(s) => Some(Jet::zeros(s.d(), 1, 2)),
    }
}

fn evaluator_failure(e: Error) -> Error {
    match e {
        Error::EvaluatorFailure(_) | Error::MissingDerivativeCallback(_) => e,
        other => Error::EvaluatorFailure(other.to_string()),
    }
}

/// Top-order matrices `A^I`, `B^I` (`|I| = 2r`) at one sample.
fn top_blocks(problem: &Problem, p: &Point, jet: Option<&Jet>, a: &mut [Vec<f64>], b: &mut [Vec<f64>]) -> Result<()> {
    let (d, r, _) = problem.shape();
    let top = MultiIndex::all_of_order(d, 2 * r);
    match problem {
        Problem::Linear(s) => {
            for (n, &i) in top.iter().enumerate() {
                s.a(i).fill(p, &mut a[n])?;
                s.b(i).fill(p, &mut b[n])?;
            }
        }
        Problem::Quasilinear(s) => {
            let jet = jet.expect("jet");
            for (n, &i) in top.iter().enumerate() {
                s.a_top(i).fill(p, jet, &mut a[n])?;
                s.b_top(i).fill(p, jet, &mut b[n])?;
            }
        }
        Problem::FullyNonlinear(s) => {
            let jet = jet.expect("jet");
            for n in 0..top.len() {
                a[n][0] = s.partial(Partial::Q(n), p, jet)?;
                b[n][0] = s.partial(Partial::N(n), p, jet)?;
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EllipticityWitness {
    pub t: f64,
    pub s: f64,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub xi: Vec<f64>,
    pub v: Vec<f64>,
    pub ratio: f64,
    /// `"local"` (A alone) or `"combined"` (A + B).
    pub condition: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EllipticityReport {
    pub passed: bool,
    pub lambda_est: f64,
    pub worst_case: Option<EllipticityWitness>,
    pub samples: usize,
}

/// Evaluates `(-1)^(r-1) Σ_{|I|=2r} ⟨A^I v, v⟩ ξ^I / (|ξ|^{2r} |v|²)` and the
/// same with `A + B` at every sample of the plan.
///
/// `lambda_est` is the smallest sampled ratio, floored at 0; `passed` is
/// `min ratio >= lambda_target` up to a relative rounding allowance of
/// `1e-12`, with `lambda_est > 0`.
pub fn check_ellipticity(problem: &Problem, plan: &SamplePlan, lambda_target: f64) -> Result<EllipticityReport> {
    let (d, r, m) = problem.shape();
    let top = MultiIndex::all_of_order(d, 2 * r);
    let sign = if r % 2 == 1 { 1.0 } else { -1.0 };
    let xis = plan.xis(d);
    let vs = plan.vs(m);
    let nodes = plan.nodes();
    let template = jet_template(problem);
    let zs: Vec<Vec<f64>> = match &template {
        None => vec![Vec::new()],
        Some(j) => {
            let center = plan.z_center.clone().unwrap_or_else(|| vec![0.0; j.z_len()]);
            if center.len() != j.z_len() {
                return Err(Error::InvalidParameter(format!(
                    "ball centre has {} entries, jet needs {}",
                    center.len(),
                    j.z_len()
                )));
            }
            ball_points(&center, plan.z_radius, plan.z_dirs, plan.seed)
        }
    };
    // monomials ξ^I per direction
    let mono: Vec<Vec<f64>> = xis.iter().map(|xi| top.iter().map(|i| i.monomial(xi)).collect()).collect();

    let per_sample = |(node, z): (&Point, &Vec<f64>)| -> Result<(f64, EllipticityWitness)> {
        let mut jet = template.clone();
        if let Some(j) = jet.as_mut() {
            j.set_z(z);
        }
        let mut a = vec![vec![0.0; m * m]; top.len()];
        let mut b = vec![vec![0.0; m * m]; top.len()];
        top_blocks(problem, node, jet.as_ref(), &mut a, &mut b).map_err(evaluator_failure)?;
        let mut best = (f64::INFINITY, 0usize, 0usize, "local");
        let mut sa = vec![0.0; m * m];
        let mut sb = vec![0.0; m * m];
        for (xn, w) in mono.iter().enumerate() {
            sa.fill(0.0);
            sb.fill(0.0);
            for (n, c) in w.iter().enumerate() {
                for e in 0..m * m {
                    sa[e] += c * a[n][e];
                    sb[e] += c * b[n][e];
                }
            }
            for (vn, v) in vs.iter().enumerate() {
                let mut qa = 0.0;
                let mut qb = 0.0;
                for i in 0..m {
                    for k in 0..m {
                        qa += v[i] * sa[i * m + k] * v[k];
                        qb += v[i] * sb[i * m + k] * v[k];
                    }
                }
                let local = sign * qa;
                let combined = sign * (qa + qb);
                if !(local.is_finite() && combined.is_finite()) {
                    return Err(Error::EvaluatorFailure(format!(
                        "non-finite symbol at t = {}, s = {}",
                        node.t, node.s
                    )));
                }
                if local < best.0 {
                    best = (local, xn, vn, "local");
                }
                if combined < best.0 {
                    best = (combined, xn, vn, "combined");
                }
            }
        }
        Ok((
            best.0,
            EllipticityWitness {
                t: node.t,
                s: node.s,
                y: node.y[..d].to_vec(),
                z: z.clone(),
                xi: xis[best.1].clone(),
                v: vs[best.2].clone(),
                ratio: best.0,
                condition: best.3.into(),
            },
        ))
    };

    let pairs: Vec<(&Point, &Vec<f64>)> = nodes.iter().flat_map(|n| zs.iter().map(move |z| (n, z))).collect();
    let results: Vec<Result<(f64, EllipticityWitness)>> = pairs.par_iter().map(|&p| per_sample(p)).collect();
    let mut worst: Option<(f64, EllipticityWitness)> = None;
    for r in results {
        let (v, w) = r?;
        if worst.as_ref().is_none_or(|(b, _)| v < *b) {
            worst = Some((v, w));
        }
    }
    let samples = pairs.len() * xis.len() * vs.len();
    let (min_ratio, witness) = worst.expect("at least one sample");
    let lambda_est = min_ratio.max(0.0);
    Ok(EllipticityReport {
        // unit directions are normalised in floating point
        passed: min_ratio >= lambda_target - 1e-12 * lambda_target.abs() && lambda_est > 0.0,
        lambda_est,
        worst_case: Some(witness),
        samples,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionReport {
    #[serde(rename = "K_est")]
    pub k_est: f64,
    #[serde(rename = "L_est")]
    pub l_est: f64,
    pub ellipticity: EllipticityReport,
    pub z_center: Vec<f64>,
    pub radius: f64,
    /// Number of functions (coefficients and their listed derivatives)
    /// entering `K_est`.
    pub functions: usize,
}

type HFn<'a> = Box<dyn Fn(&Point, &[f64]) -> Result<Vec<f64>> + Sync + 'a>;

/// The coefficient maps `H(t, s, y, z)` of a problem, each flattened.
fn h_family<'a>(problem: &'a Problem) -> Vec<HFn<'a>> {
    let (d, r, m) = problem.shape();
    let template = jet_template(problem);
    let with_jet = move |z: &[f64]| -> Option<Jet> {
        template.clone().map(|mut j| {
            j.set_z(z);
            j
        })
    };
    let mut out: Vec<HFn<'a>> = Vec::new();
    match problem {
        Problem::Linear(s) => {
            for i in MultiIndex::all_up_to(d, 2 * r) {
                for c in [s.a(i), s.b(i)] {
                    if !c.is_zero() {
                        out.push(Box::new(move |p, _| {
                            let mut v = vec![0.0; m * m];
                            c.fill(p, &mut v)?;
                            Ok(v)
                        }));
                    }
                }
            }
        }
        Problem::Quasilinear(s) => {
            for i in s.top_indices() {
                for c in [s.a_top(i), s.b_top(i)] {
                    if !c.is_zero() {
                        let wj = with_jet.clone();
                        out.push(Box::new(move |p, z| {
                            let mut v = vec![0.0; m * m];
                            c.fill(p, &wj(z).expect("jet"), &mut v)?;
                            Ok(v)
                        }));
                    }
                }
            }
            if !s.f_low().is_zero() {
                let wj = with_jet.clone();
                out.push(Box::new(move |p, z| {
                    let mut v = vec![0.0; m];
                    s.f_low().fill(p, &wj(z).expect("jet"), &mut v)?;
                    Ok(v)
                }));
            }
        }
        Problem::FullyNonlinear(s) => {
            let wj = with_jet.clone();
            out.push(Box::new(move |p, z| Ok(vec![s.eval(p, &wj(z).expect("jet"))?])));
        }
    }
    out
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Nodes used for the Lipschitz and Hölder sampling: a 3 × 3 × 3 pattern
/// over `(t, s, y)`.
fn lipschitz_nodes(grid: &TriangleGrid) -> Vec<Point> {
    let n = grid.n_tau();
    let ns = grid.n_space();
    let mut out = Vec::new();
    for i in [0, n / 2, n] {
        for j in [0, i / 2, i] {
            for k in [0, ns / 3, (2 * ns) / 3] {
                out.push(grid.point(i, j, k));
            }
        }
    }
    out.dedup();
    out
}

/// Derivative of one flattened `H` entry-wise, by central differences in
/// `t` (`None`) or in a `z` coordinate.
fn first_partial<'a>(h: &'a HFn<'a>, var: Option<usize>) -> HFn<'a> {
    Box::new(move |p, z| {
        let base = h(p, z)?;
        let mut out = vec![0.0; base.len()];
        for (e, o) in out.iter_mut().enumerate() {
            *o = match var {
                None => central_difference(|v| Ok(h(&Point { t: v, ..*p }, z)?[e]), p.t, 1.0)?,
                Some(a) => {
                    let mut w = z.to_vec();
                    central_difference(
                        |v| {
                            w[a] = v;
                            Ok(h(p, &w)?[e])
                        },
                        z[a],
                        1.0,
                    )?
                }
            };
        }
        Ok(out)
    })
}

fn second_partial<'a>(h: &'a HFn<'a>, x: Option<usize>, y: usize) -> HFn<'a> {
    Box::new(move |p, z| {
        let base = h(p, z)?;
        let mut out = vec![0.0; base.len()];
        for (e, o) in out.iter_mut().enumerate() {
            let x0 = match x {
                None => p.t,
                Some(a) => z[a],
            };
            let mut w = z.to_vec();
            *o = second_difference(
                |u, v| {
                    let mut q = *p;
                    match x {
                        None => q.t = u,
                        Some(a) => w[a] = u,
                    }
                    if x != Some(y) {
                        w[y] = v;
                    }
                    Ok(h(&q, &w)?[e])
                },
                x0,
                z[y],
                1.0,
                x == Some(y),
            )?;
        }
        Ok(out)
    })
}

/// Sampled constants of the regularity assumption on the ball `B(z̄, R0)`.
///
/// * `L_est`: the largest ratio `|H(z1) - H(z2)|∞ / |z1 - z2|` over pairs
///   (centre, lattice point) and (lattice point, lattice point + 1e-4 e_a)
///   at nine sampled nodes, for every coefficient map `H`.
/// * `K_est`: the largest per-level Hölder norm of order 1/2 in `(s, y)`
///   over the grid, for `H`, `H_t`, `H_z`, and the second derivatives
///   `H_tz`, `H_zz` (local-local and local-diagonal), all by central
///   differences, at the centre and at four points on the ball boundary
///   lattice.
pub fn check_assumption(problem: &Problem, z_center: Option<&[f64]>, r0: f64, grid: &TriangleGrid) -> Result<AssumptionReport> {
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::InvalidParameter(format!("ball radius must be positive, got {r0}")));
    }
    let (d, r, _) = problem.shape();
    let template = jet_template(problem);
    let z_len = template.as_ref().map_or(0, Jet::z_len);
    let center: Vec<f64> = match z_center {
        Some(c) if c.len() != z_len => {
            return Err(Error::InvalidParameter(format!(
                "ball centre has {} entries, jet needs {z_len}",
                c.len()
            )))
        }
        Some(c) => c.to_vec(),
        None => vec![0.0; z_len],
    };
    let hs = h_family(problem);
    let nodes = lipschitz_nodes(grid);
    let seed = 0x1ab;

    // Lipschitz constant
    let mut l_est = 0.0f64;
    if z_len > 0 {
        let points = ball_points(&center, r0, 8, seed);
        let step = 1e-4;
        let results: Vec<Result<f64>> = nodes
            .par_iter()
            .map(|p| {
                let mut best = 0.0f64;
                for h in &hs {
                    let hc = h(p, &center).map_err(evaluator_failure)?;
                    for z in &points {
                        let hz = h(p, z).map_err(evaluator_failure)?;
                        let dist = l2_dist(z, &center);
                        if dist > 0.0 {
                            best = best.max(sup_diff(&hz, &hc) / dist);
                        }
                        for a in 0..z_len {
                            let mut w = z.clone();
                            w[a] += step;
                            let hw = h(p, &w).map_err(evaluator_failure)?;
                            best = best.max(sup_diff(&hw, &hz) / step);
                        }
                    }
                }
                Ok(best)
            })
            .collect();
        for v in results {
            l_est = l_est.max(v?);
        }
    }

    // Hölder constant
    let mut family: Vec<HFn> = Vec::new();
    let half = z_len / 2;
    for h in &hs {
        family.push(Box::new(move |p, z| h(p, z)));
        family.push(first_partial(h, None));
        for a in 0..z_len {
            family.push(first_partial(h, Some(a)));
            family.push(second_partial(h, None, a));
        }
        for a in 0..half {
            for b in a..half {
                family.push(second_partial(h, Some(a), b));
            }
            for b in half..z_len {
                family.push(second_partial(h, Some(a), b));
            }
        }
    }
    let k_points: Vec<Vec<f64>> = if z_len == 0 {
        vec![Vec::new()]
    } else {
        let rho = radii(r0).last().copied().unwrap_or(0.0);
        let mut pts = vec![center.clone()];
        for w in ball_directions(z_len, 4, seed ^ 0x4b).into_iter().skip(2 * z_len) {
            pts.push(center.iter().zip(&w).map(|(c, x)| c + rho * x).collect());
        }
        pts
    };
    let geom = SpaceGeometry {
        n_y: grid.n_y(),
        d,
        dy: grid.dy(),
    };
    let jobs: Vec<(usize, usize, usize)> = (0..family.len())
        .flat_map(|f| (0..k_points.len()).flat_map(move |z| (0..=grid.n_tau()).map(move |i| (f, z, i))))
        .collect();
    let results: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(f, zi, i)| {
            let h = &family[f];
            let z = &k_points[zi];
            let width = h(&grid.point(i, 0, 0), z).map_err(evaluator_failure)?.len();
            let mut best = 0.0f64;
            for e in 0..width {
                let levels = (0..=i)
                    .map(|j| {
                        (0..grid.n_space())
                            .map(|k| Ok(h(&grid.point(i, j, k), z)?[e]))
                            .collect::<Result<Vec<f64>>>()
                    })
                    .collect::<Result<Vec<_>>>()
                    .map_err(evaluator_failure)?;
                let strip = Strip::new(geom, grid.dtau(), levels);
                best = best.max(norm_of_strip(&strip, r, 0.5)?.total);
            }
            Ok(best)
        })
        .collect();
    let mut k_est = 0.0f64;
    for v in results {
        k_est = k_est.max(v?);
    }

    let plan = SamplePlan::new(grid)
        .with_ball(Some(center.clone()).filter(|c| !c.is_empty()), r0)
        .with_node_stride((grid.n_tau() + 1) * grid.n_space() / 64 + 1);
    let ellipticity = check_ellipticity(problem, &plan, f64::MIN_POSITIVE)?;
    Ok(AssumptionReport {
        k_est,
        l_est,
        ellipticity,
        z_center: center,
        radius: r0,
        functions: family.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_ladder_is_nested() {
        let small = radii(1.0);
        let big = radii(4.0);
        assert!(small.iter().all(|r| big.contains(r)));
        assert_eq!(*small.last().unwrap(), 1.0);
        let a = ball_points(&[0.0, 0.0], 1.0, 3, 9);
        let b = ball_points(&[0.0, 0.0], 2.0, 3, 9);
        assert!(a.iter().all(|p| b.contains(p)));
    }

    #[test]
    fn direction_sets() {
        let g = crate::grid::build_grid(1.0, 2, 1.0, 9, 2, 1, 1).unwrap();
        let plan = SamplePlan::new(&g);
        assert_eq!(plan.xis(2).len(), 128);
        assert_eq!(plan.xis(1).len(), 2);
        let vs = plan.vs(3);
        assert_eq!(vs.len(), 32);
        assert!(vs.iter().all(|v| (v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12));
    }
}
