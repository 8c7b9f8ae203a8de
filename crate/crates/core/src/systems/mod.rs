//! Problem specifications: nonlocal linear, quasilinear and fully nonlinear
//! systems, their initial data, a preset catalog and sampled checkers for
//! ellipticity and the regularity assumption.
//!
//! Coefficients are indexed by [`MultiIndex`]; matrices are `m × m`
//! row-major, vectors have length `m`. Every evaluator is a pure function
//! that may fail (expression domain errors surface as `EvaluatorFailure`).

mod check;
mod from_expr;
mod presets;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{central_difference, jet_identifier};
use crate::grid::{derivative_into, Jet, MultiIndex, Point, StencilWorkspace, TriangleGrid};

pub use check::{
    check_assumption, check_ellipticity, AssumptionReport, EllipticityReport, EllipticityWitness,
    SamplePlan,
};
pub use from_expr::{expression_coefficient, expression_data, ExpressionProblem};
pub use presets::{make_preset, preset_info, PresetInfo, PRESET_NAMES};

/// `(t, s, y) ↦ values`.
pub type PointFn = Arc<dyn Fn(&Point, &mut [f64]) -> Result<()> + Send + Sync>;
/// `(t, s, y, jet) ↦ values`.
pub type JetFn = Arc<dyn Fn(&Point, &Jet, &mut [f64]) -> Result<()> + Send + Sync>;
/// Scalar `(t, s, y, jet) ↦ value`.
pub type ScalarJetFn = Arc<dyn Fn(&Point, &Jet) -> Result<f64> + Send + Sync>;
/// `(t, y) ↦ values`.
pub type DataFn = Arc<dyn Fn(f64, &[f64; 2], &mut [f64]) -> Result<()> + Send + Sync>;

/// A `(t, s, y)`-dependent coefficient of a linear system.
#[derive(Clone)]
pub enum Coefficient {
    Zero,
    Constant(Arc<[f64]>),
    Eval(PointFn),
}

impl std::fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Coefficient::Zero => write!(f, "Zero"),
            Coefficient::Constant(v) => write!(f, "Constant({v:?})"),
            Coefficient::Eval(_) => write!(f, "Eval(..)"),
        }
    }
}

impl Coefficient {
    pub fn constant(values: &[f64]) -> Self {
        Coefficient::Constant(values.into())
    }

    pub fn scalar(c: f64) -> Self {
        Coefficient::Constant(Arc::from(vec![c]))
    }

    pub fn eval(f: impl Fn(&Point, &mut [f64]) -> Result<()> + Send + Sync + 'static) -> Self {
        Coefficient::Eval(Arc::new(f))
    }

    /// Scalar closure coefficient for `m = 1`.
    pub fn scalar_fn(f: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::eval(move |p, out| {
            out[0] = f(p);
            Ok(())
        })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Coefficient::Zero)
    }

    pub fn fill(&self, p: &Point, out: &mut [f64]) -> Result<()> {
        match self {
            Coefficient::Zero => {
                out.fill(0.0);
                Ok(())
            }
            Coefficient::Constant(v) => {
                out.copy_from_slice(v);
                Ok(())
            }
            Coefficient::Eval(f) => f(p, out),
        }
    }

    /// `c · self`; zero stays structurally zero.
    pub fn scaled(&self, c: f64) -> Self {
        match self {
            Coefficient::Zero => Coefficient::Zero,
            Coefficient::Constant(v) => {
                Coefficient::Constant(v.iter().map(|x| c * x).collect::<Vec<_>>().into())
            }
            Coefficient::Eval(f) => {
                let f = f.clone();
                Coefficient::eval(move |p, out| {
                    f(p, out)?;
                    out.iter_mut().for_each(|x| *x *= c);
                    Ok(())
                })
            }
        }
    }

    /// Pointwise sum of two coefficients of the same shape.
    pub fn plus(&self, other: &Coefficient) -> Self {
        match (self, other) {
            (Coefficient::Zero, o) | (o, Coefficient::Zero) => o.clone(),
            (Coefficient::Constant(a), Coefficient::Constant(b)) => Coefficient::Constant(
                a.iter().zip(b.iter()).map(|(x, y)| x + y).collect::<Vec<_>>().into(),
            ),
            (a, b) => {
                let (a, b) = (a.clone(), b.clone());
                Coefficient::eval(move |p, out| {
                    let mut tmp = vec![0.0; out.len()];
                    a.fill(p, out)?;
                    b.fill(p, &mut tmp)?;
                    out.iter_mut().zip(&tmp).for_each(|(x, y)| *x += y);
                    Ok(())
                })
            }
        }
    }
}

/// A jet-dependent coefficient of a quasilinear system.
#[derive(Clone)]
pub enum JetCoefficient {
    Zero,
    Constant(Arc<[f64]>),
    Eval(JetFn),
}

impl JetCoefficient {
    pub fn constant(values: &[f64]) -> Self {
        JetCoefficient::Constant(values.into())
    }

    pub fn eval(f: impl Fn(&Point, &Jet, &mut [f64]) -> Result<()> + Send + Sync + 'static) -> Self {
        JetCoefficient::Eval(Arc::new(f))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, JetCoefficient::Zero)
    }

    pub fn is_constant(&self) -> bool {
        !matches!(self, JetCoefficient::Eval(_))
    }

    pub fn fill(&self, p: &Point, jet: &Jet, out: &mut [f64]) -> Result<()> {
        match self {
            JetCoefficient::Zero => {
                out.fill(0.0);
                Ok(())
            }
            JetCoefficient::Constant(v) => {
                out.copy_from_slice(v);
                Ok(())
            }
            JetCoefficient::Eval(f) => f(p, jet, out),
        }
    }
}

impl std::fmt::Debug for JetCoefficient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            JetCoefficient::Zero => write!(f, "Zero"),
            JetCoefficient::Constant(v) => write!(f, "Constant({v:?})"),
            JetCoefficient::Eval(_) => write!(f, "Eval(..)"),
        }
    }
}

/// Initial data `g(t, y)` with optional analytic derivatives.
///
/// Missing spatial derivatives are taken by the grid stencils on a sampled
/// slice; a missing `g_t` by a central difference of `g` in `t`.
#[derive(Clone)]
pub struct InitialData {
    m: usize,
    value: DataFn,
    spatial: Vec<(MultiIndex, DataFn)>,
    time: Option<DataFn>,
}

impl std::fmt::Debug for InitialData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InitialData")
            .field("m", &self.m)
            .field("analytic_spatial", &self.spatial.iter().map(|(i, _)| *i).collect::<Vec<_>>())
            .field("analytic_time", &self.time.is_some())
            .finish()
    }
}

impl InitialData {
    pub fn new(m: usize, f: impl Fn(f64, &[f64; 2], &mut [f64]) -> Result<()> + Send + Sync + 'static) -> Self {
        InitialData {
            m,
            value: Arc::new(f),
            spatial: Vec::new(),
            time: None,
        }
    }

    /// Scalar data from a plain closure.
    pub fn scalar(f: impl Fn(f64, &[f64; 2]) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(1, move |t, y, out| {
            out[0] = f(t, y);
            Ok(())
        })
    }

    pub fn zero(m: usize) -> Self {
        Self::new(m, |_, _, out| {
            out.fill(0.0);
            Ok(())
        })
    }

    pub fn with_derivative(
        mut self,
        index: MultiIndex,
        f: impl Fn(f64, &[f64; 2], &mut [f64]) -> Result<()> + Send + Sync + 'static,
    ) -> Self {
        self.spatial.retain(|(i, _)| *i != index);
        self.spatial.push((index, Arc::new(f)));
        self
    }

    pub fn with_scalar_derivative(
        self,
        index: MultiIndex,
        f: impl Fn(f64, &[f64; 2]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.with_derivative(index, move |t, y, out| {
            out[0] = f(t, y);
            Ok(())
        })
    }

    pub fn with_time_derivative(
        mut self,
        f: impl Fn(f64, &[f64; 2], &mut [f64]) -> Result<()> + Send + Sync + 'static,
    ) -> Self {
        self.time = Some(Arc::new(f));
        self
    }

    pub fn with_scalar_time_derivative(self, f: impl Fn(f64, &[f64; 2]) -> f64 + Send + Sync + 'static) -> Self {
        self.with_time_derivative(move |t, y, out| {
            out[0] = f(t, y);
            Ok(())
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn eval(&self, t: f64, y: &[f64; 2], out: &mut [f64]) -> Result<()> {
        (self.value)(t, y, out)
    }

    pub fn analytic_derivative(&self, index: MultiIndex) -> Option<&DataFn> {
        if index.order() == 0 {
            return Some(&self.value);
        }
        self.spatial.iter().find(|(i, _)| *i == index).map(|(_, f)| f)
    }

    pub fn has_time_derivative(&self) -> bool {
        self.time.is_some()
    }

    /// `g_t`, analytic when given, else `(g(t+h) - g(t-h)) / 2h`.
    pub fn eval_t(&self, t: f64, y: &[f64; 2], out: &mut [f64]) -> Result<()> {
        if let Some(f) = &self.time {
            return f(t, y, out);
        }
        let mut tmp = vec![0.0; self.m];
        for a in 0..self.m {
            out[a] = central_difference(
                |tt| {
                    (self.value)(tt, y, &mut tmp)?;
                    Ok(tmp[a])
                },
                t,
                1.0,
            )?;
        }
        Ok(())
    }

    /// `g(t, ·)` on the grid nodes, `[node][component]`.
    pub fn sample(&self, grid: &TriangleGrid, t: f64) -> Result<Vec<f64>> {
        self.sample_with(grid, |y, out| self.eval(t, y, out))
    }

    pub fn sample_t(&self, grid: &TriangleGrid, t: f64) -> Result<Vec<f64>> {
        self.sample_with(grid, |y, out| self.eval_t(t, y, out))
    }

    /// `∂_I g(t, ·)` on the nodes: analytic if registered, else stencils.
    pub fn sample_derivative(&self, grid: &TriangleGrid, t: f64, index: MultiIndex) -> Result<Vec<f64>> {
        if let Some(f) = self.analytic_derivative(index) {
            return self.sample_with(grid, |y, out| f(t, y, out));
        }
        let base = self.sample(grid, t)?;
        let mut out = vec![0.0; base.len()];
        let mut ws = StencilWorkspace::default();
        derivative_into(&base, &mut out, index, grid.n_y(), grid.d(), self.m, grid.dy(), &mut ws);
        Ok(out)
    }

    fn sample_with(
        &self,
        grid: &TriangleGrid,
        mut f: impl FnMut(&[f64; 2], &mut [f64]) -> Result<()>,
    ) -> Result<Vec<f64>> {
        let m = self.m;
        let mut out = vec![0.0; grid.n_space() * m];
        for k in 0..grid.n_space() {
            f(&grid.y(k), &mut out[k * m..(k + 1) * m])?;
        }
        Ok(out)
    }

    /// `c · g` including every registered derivative.
    pub fn scaled(&self, c: f64) -> Self {
        let wrap = |f: &DataFn| -> DataFn {
            let f = f.clone();
            Arc::new(move |t, y, out: &mut [f64]| {
                f(t, y, out)?;
                out.iter_mut().for_each(|x| *x *= c);
                Ok(())
            })
        };
        InitialData {
            m: self.m,
            value: wrap(&self.value),
            spatial: self.spatial.iter().map(|(i, f)| (*i, wrap(f))).collect(),
            time: self.time.as_ref().map(wrap),
        }
    }

    /// Registered analytic derivatives, in registration order.
    pub fn analytic_indices(&self) -> Vec<MultiIndex> {
        self.spatial.iter().map(|(i, _)| *i).collect()
    }
}

fn check_dims(d: usize, r: usize, m: usize) -> Result<()> {
    if !(1..=2).contains(&d) || !(1..=2).contains(&r) || m == 0 {
        return Err(Error::InvalidParameter(format!(
            "unsupported system shape d = {d}, r = {r}, m = {m}"
        )));
    }
    Ok(())
}

fn check_len(what: &str, index: MultiIndex, got: &[f64], want: usize) -> Result<()> {
    if got.len() != want {
        return Err(Error::InvalidParameter(format!(
            "{what} at {index} has {} entries, expected {want}",
            got.len()
        )));
    }
    Ok(())
}

/// `Σ_I A^I ∂_I u(t,s,y) + Σ_I B^I ∂_I u(s,s,y) + f`, `|I| <= 2r`, with
/// initial data `u(t, 0, y) = g(t, y)`.
#[derive(Clone, Debug)]
pub struct LinearSystemSpec {
    pub name: String,
    d: usize,
    r: usize,
    m: usize,
    a: Vec<Coefficient>,
    b: Vec<Coefficient>,
    f: Coefficient,
    pub g: InitialData,
}

impl LinearSystemSpec {
    /// All coefficients zero.
    pub fn new(name: &str, d: usize, r: usize, m: usize, g: InitialData) -> Result<Self> {
        check_dims(d, r, m)?;
        if g.m() != m {
            return Err(Error::InvalidParameter(format!(
                "initial data has {} components, system has {m}",
                g.m()
            )));
        }
        let n = MultiIndex::count_up_to(d, 2 * r);
        Ok(LinearSystemSpec {
            name: name.into(),
            d,
            r,
            m,
            a: vec![Coefficient::Zero; n],
            b: vec![Coefficient::Zero; n],
            f: Coefficient::Zero,
            g,
        })
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

    fn slot(&self, index: MultiIndex) -> Result<usize> {
        if index.order() > 2 * self.r || index.min_dimension() > self.d {
            return Err(Error::UnsupportedOrder(format!(
                "coefficient index {index} outside |I| <= {} in d = {}",
                2 * self.r,
                self.d
            )));
        }
        Ok(index.position(self.d))
    }

    pub fn set_a(&mut self, index: MultiIndex, c: Coefficient) -> Result<&mut Self> {
        let p = self.slot(index)?;
        if let Coefficient::Constant(v) = &c {
            check_len("A", index, v, self.m * self.m)?;
        }
        self.a[p] = c;
        Ok(self)
    }

    pub fn set_b(&mut self, index: MultiIndex, c: Coefficient) -> Result<&mut Self> {
        let p = self.slot(index)?;
        if let Coefficient::Constant(v) = &c {
            check_len("B", index, v, self.m * self.m)?;
        }
        self.b[p] = c;
        Ok(self)
    }

    pub fn set_f(&mut self, c: Coefficient) -> Result<&mut Self> {
        if let Coefficient::Constant(v) = &c {
            check_len("f", MultiIndex::EMPTY, v, self.m)?;
        }
        self.f = c;
        Ok(self)
    }

    pub fn a(&self, index: MultiIndex) -> &Coefficient {
        &self.a[index.position(self.d)]
    }

    pub fn b(&self, index: MultiIndex) -> &Coefficient {
        &self.b[index.position(self.d)]
    }

    pub fn f(&self) -> &Coefficient {
        &self.f
    }

    /// Every multi-index `|I| <= 2r` in canonical order.
    pub fn indices(&self) -> Vec<MultiIndex> {
        MultiIndex::all_up_to(self.d, 2 * self.r)
    }

    /// True when every `B^I` is structurally zero.
    pub fn is_local(&self) -> bool {
        self.b.iter().all(Coefficient::is_zero)
    }

    /// Same operator with `(f, g)` replaced by `(c f, c g)`.
    pub fn with_scaled_data(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.f = self.f.scaled(c);
        out.g = self.g.scaled(c);
        out
    }

    /// Same operator with new data.
    pub fn with_data(&self, f: Coefficient, g: InitialData) -> Self {
        let mut out = self.clone();
        out.f = f;
        out.g = g;
        out
    }

    /// The local system with `A^I + B^I` and no diagonal terms.
    pub fn collapsed(&self) -> Self {
        let mut out = self.clone();
        out.name = format!("{}_collapsed", self.name);
        for (a, b) in out.a.iter_mut().zip(&self.b) {
            *a = a.plus(b);
        }
        out.b = vec![Coefficient::Zero; self.b.len()];
        out
    }
}

/// `u_s = Σ_{|I|=2r} A^I(t,s,y,z) ∂_I u(t,s,y) + Σ_{|I|=2r} B^I(t,s,y,z) ∂_I u(s,s,y) + F(t,s,y,z)`
/// with `z` the jet of order `2r - 1` in both flavours.
#[derive(Clone, Debug)]
pub struct QuasilinearSystemSpec {
    pub name: String,
    d: usize,
    r: usize,
    m: usize,
    a_top: Vec<JetCoefficient>,
    b_top: Vec<JetCoefficient>,
    f_low: JetCoefficient,
    pub g: InitialData,
}

impl QuasilinearSystemSpec {
    pub fn new(name: &str, d: usize, r: usize, m: usize, g: InitialData) -> Result<Self> {
        check_dims(d, r, m)?;
        if g.m() != m {
            return Err(Error::InvalidParameter(format!(
                "initial data has {} components, system has {m}",
                g.m()
            )));
        }
        let n = MultiIndex::all_of_order(d, 2 * r).len();
        Ok(QuasilinearSystemSpec {
            name: name.into(),
            d,
            r,
            m,
            a_top: vec![JetCoefficient::Zero; n],
            b_top: vec![JetCoefficient::Zero; n],
            f_low: JetCoefficient::Zero,
            g,
        })
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

    /// Order of the jet the coefficients consume, `2r - 1`.
    pub fn jet_order(&self) -> usize {
        2 * self.r - 1
    }

    pub fn top_indices(&self) -> Vec<MultiIndex> {
        MultiIndex::all_of_order(self.d, 2 * self.r)
    }

    fn top_slot(&self, index: MultiIndex) -> Result<usize> {
        self.top_indices()
            .iter()
            .position(|i| *i == index)
            .ok_or_else(|| {
                Error::UnsupportedOrder(format!(
                    "top-order index must have |I| = {}, got {index}",
                    2 * self.r
                ))
            })
    }

    pub fn set_a_top(&mut self, index: MultiIndex, c: JetCoefficient) -> Result<&mut Self> {
        let p = self.top_slot(index)?;
        if let JetCoefficient::Constant(v) = &c {
            check_len("A", index, v, self.m * self.m)?;
        }
        self.a_top[p] = c;
        Ok(self)
    }

    pub fn set_b_top(&mut self, index: MultiIndex, c: JetCoefficient) -> Result<&mut Self> {
        let p = self.top_slot(index)?;
        if let JetCoefficient::Constant(v) = &c {
            check_len("B", index, v, self.m * self.m)?;
        }
        self.b_top[p] = c;
        Ok(self)
    }

    pub fn set_f_low(&mut self, c: JetCoefficient) -> Result<&mut Self> {
        if let JetCoefficient::Constant(v) = &c {
            check_len("F", MultiIndex::EMPTY, v, self.m)?;
        }
        self.f_low = c;
        Ok(self)
    }

    pub fn a_top(&self, index: MultiIndex) -> &JetCoefficient {
        &self.a_top[self.top_slot(index).expect("top-order index")]
    }

    pub fn b_top(&self, index: MultiIndex) -> &JetCoefficient {
        &self.b_top[self.top_slot(index).expect("top-order index")]
    }

    pub fn f_low(&self) -> &JetCoefficient {
        &self.f_low
    }

    /// True when no coefficient depends on the jet.
    pub fn is_linear(&self) -> bool {
        self.a_top.iter().chain(&self.b_top).all(JetCoefficient::is_constant) && self.f_low.is_constant()
    }

    /// Reads a linear system as a quasilinear one. Lower-order terms
    /// become part of `F` through the jet.
    pub fn from_linear(spec: &LinearSystemSpec) -> Result<Self> {
        let mut q = QuasilinearSystemSpec::new(&spec.name, spec.d, spec.r, spec.m, spec.g.clone())?;
        let m = spec.m;
        let top = MultiIndex::all_of_order(spec.d, 2 * spec.r);
        let to_jet = |c: &Coefficient| -> JetCoefficient {
            match c {
                Coefficient::Zero => JetCoefficient::Zero,
                Coefficient::Constant(v) => JetCoefficient::Constant(v.clone()),
                Coefficient::Eval(f) => {
                    let f = f.clone();
                    JetCoefficient::eval(move |p, _, out| f(p, out))
                }
            }
        };
        for &i in &top {
            q.set_a_top(i, to_jet(spec.a(i)))?;
            q.set_b_top(i, to_jet(spec.b(i)))?;
        }
        let lower: Vec<MultiIndex> = MultiIndex::all_up_to(spec.d, 2 * spec.r - 1);
        let active: Vec<(MultiIndex, Coefficient, Coefficient)> = lower
            .iter()
            .map(|&i| (i, spec.a(i).clone(), spec.b(i).clone()))
            .filter(|(_, a, b)| !(a.is_zero() && b.is_zero()))
            .collect();
        let f = spec.f().clone();
        if active.is_empty() {
            q.set_f_low(to_jet(&f))?;
        } else {
            q.set_f_low(JetCoefficient::eval(move |p, jet, out| {
                let mut mat = vec![0.0; m * m];
                f.fill(p, out)?;
                for (i, a, b) in &active {
                    for (c, part) in [(a, jet.local(*i)), (b, jet.diagonal(*i))] {
                        if c.is_zero() {
                            continue;
                        }
                        c.fill(p, &mut mat)?;
                        for r in 0..m {
                            for k in 0..m {
                                out[r] += mat[r * m + k] * part[k];
                            }
                        }
                    }
                }
                Ok(())
            }))?;
        }
        Ok(q)
    }
}

/// Partial derivative selector for a fully nonlinear `F`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Partial {
    T,
    S,
    Y(usize),
    /// Local second derivative slot, by position among `|I| = 2` indices.
    Q(usize),
    /// Diagonal second derivative slot.
    N(usize),
}

/// Scalar `u_s = F(t, s, y, ∂²u(t,s,y), ∂²u(s,s,y))` with `r = 1`.
///
/// `F` receives the full order-2 jet; unless `lower_order_dependence` is
/// set it must ignore everything but the second derivatives. Derivative
/// callbacks are optional; missing ones are taken by central differences
/// when `fd_fallback` is on and are an error otherwise.
#[derive(Clone)]
pub struct FullyNonlinearSpec {
    pub name: String,
    d: usize,
    pub f: ScalarJetFn,
    pub f_t: Option<ScalarJetFn>,
    pub f_s: Option<ScalarJetFn>,
    pub f_y: Vec<Option<ScalarJetFn>>,
    pub f_q: Vec<Option<ScalarJetFn>>,
    pub f_n: Vec<Option<ScalarJetFn>>,
    pub g: InitialData,
    pub lower_order_dependence: bool,
    pub fd_fallback: bool,
}

impl std::fmt::Debug for FullyNonlinearSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FullyNonlinearSpec")
            .field("name", &self.name)
            .field("d", &self.d)
            .field("analytic", &self.analytic_partials())
            .field("lower_order_dependence", &self.lower_order_dependence)
            .finish()
    }
}

impl FullyNonlinearSpec {
    pub fn new(
        name: &str,
        d: usize,
        f: impl Fn(&Point, &Jet) -> Result<f64> + Send + Sync + 'static,
        g: InitialData,
    ) -> Result<Self> {
        check_dims(d, 1, 1)?;
        if g.m() != 1 {
            return Err(Error::UnsupportedMultiComponent(g.m()));
        }
        let nq = MultiIndex::all_of_order(d, 2).len();
        Ok(FullyNonlinearSpec {
            name: name.into(),
            d,
            f: Arc::new(f),
            f_t: None,
            f_s: None,
            f_y: vec![None; d],
            f_q: vec![None; nq],
            f_n: vec![None; nq],
            g,
            lower_order_dependence: false,
            fd_fallback: true,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn r(&self) -> usize {
        1
    }

    /// Second-order indices in slot order.
    pub fn second_indices(&self) -> Vec<MultiIndex> {
        MultiIndex::all_of_order(self.d, 2)
    }

    pub fn set_partial(&mut self, which: Partial, f: impl Fn(&Point, &Jet) -> Result<f64> + Send + Sync + 'static) {
        let f: ScalarJetFn = Arc::new(f);
        match which {
            Partial::T => self.f_t = Some(f),
            Partial::S => self.f_s = Some(f),
            Partial::Y(k) => self.f_y[k] = Some(f),
            Partial::Q(p) => self.f_q[p] = Some(f),
            Partial::N(p) => self.f_n[p] = Some(f),
        }
    }

    pub fn partials(&self) -> Vec<Partial> {
        let nq = self.f_q.len();
        let mut out = vec![Partial::T, Partial::S];
        out.extend((0..self.d).map(Partial::Y));
        out.extend((0..nq).map(Partial::Q));
        out.extend((0..nq).map(Partial::N));
        out
    }

    fn callback(&self, which: Partial) -> Option<&ScalarJetFn> {
        match which {
            Partial::T => self.f_t.as_ref(),
            Partial::S => self.f_s.as_ref(),
            Partial::Y(k) => self.f_y.get(k)?.as_ref(),
            Partial::Q(p) => self.f_q.get(p)?.as_ref(),
            Partial::N(p) => self.f_n.get(p)?.as_ref(),
        }
    }

    pub fn analytic_partials(&self) -> Vec<Partial> {
        self.partials().into_iter().filter(|p| self.callback(*p).is_some()).collect()
    }

    pub fn partial_name(&self, which: Partial) -> String {
        let idx = self.second_indices();
        match which {
            Partial::T => "F_t".into(),
            Partial::S => "F_s".into(),
            Partial::Y(k) => format!("F_y{}", k + 1),
            Partial::Q(p) => format!("F_{}", jet_identifier(idx[p], false)),
            Partial::N(p) => format!("F_{}", jet_identifier(idx[p], true)),
        }
    }

    pub fn eval(&self, p: &Point, jet: &Jet) -> Result<f64> {
        (self.f)(p, jet)
    }

    /// Central-difference approximation of a partial of `F`.
    pub fn partial_fd(&self, which: Partial, p: &Point, jet: &Jet) -> Result<f64> {
        let f = &self.f;
        let idx = self.second_indices();
        match which {
            Partial::T => central_difference(|v| f(&Point { t: v, ..*p }, jet), p.t, 1.0),
            Partial::S => central_difference(|v| f(&Point { s: v, ..*p }, jet), p.s, 1.0),
            Partial::Y(k) => {
                let mut q = *p;
                central_difference(
                    |v| {
                        q.y[k] = v;
                        f(&q, jet)
                    },
                    p.y[k],
                    1.0,
                )
            }
            Partial::Q(s) | Partial::N(s) => {
                let diag = matches!(which, Partial::N(_));
                let mut work = jet.clone();
                let x = if diag { jet.diagonal(idx[s])[0] } else { jet.local(idx[s])[0] };
                central_difference(
                    |v| {
                        if diag {
                            work.diagonal_mut(idx[s])[0] = v;
                        } else {
                            work.local_mut(idx[s])[0] = v;
                        }
                        f(p, &work)
                    },
                    x,
                    1.0,
                )
            }
        }
    }

    /// A partial of `F`: the callback when present, else a central difference.
    pub fn partial(&self, which: Partial, p: &Point, jet: &Jet) -> Result<f64> {
        match self.callback(which) {
            Some(cb) => cb(p, jet),
            None if self.fd_fallback => self.partial_fd(which, p, jet),
            None => Err(Error::MissingDerivativeCallback(self.partial_name(which))),
        }
    }

    /// Resolves every callback, filling gaps with finite differences
    /// (logged once here) or failing when the fallback is disabled.
    pub fn resolved(&self) -> Result<FullyNonlinearSpec> {
        let mut out = self.clone();
        for which in self.partials() {
            if self.callback(which).is_some() {
                continue;
            }
            let name = self.partial_name(which);
            if !self.fd_fallback {
                return Err(Error::MissingDerivativeCallback(name));
            }
            log::info!("{}: no analytic {name}, using central differences", self.name);
            let base = self.clone();
            out.set_partial(which, move |p, jet| base.partial_fd(which, p, jet));
        }
        Ok(out)
    }

    /// Same spec with fallback enabled and all callbacks populated.
    pub fn with_fd_fallback(mut self) -> Self {
        self.fd_fallback = true;
        self.resolved().expect("fallback enabled")
    }
}

/// Any of the three specification classes.
#[derive(Clone, Debug)]
pub enum Problem {
    Linear(LinearSystemSpec),
    Quasilinear(QuasilinearSystemSpec),
    FullyNonlinear(FullyNonlinearSpec),
}

impl Problem {
    pub fn name(&self) -> &str {
        match self {
            Problem::Linear(s) => &s.name,
            Problem::Quasilinear(s) => &s.name,
            Problem::FullyNonlinear(s) => &s.name,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Problem::Linear(_) => "linear",
            Problem::Quasilinear(_) => "quasilinear",
            Problem::FullyNonlinear(_) => "fully_nonlinear",
        }
    }

    /// `(d, r, m)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        match self {
            Problem::Linear(s) => (s.d, s.r, s.m),
            Problem::Quasilinear(s) => (s.d, s.r, s.m),
            Problem::FullyNonlinear(s) => (s.d, 1, 1),
        }
    }

    pub fn initial_data(&self) -> &InitialData {
        match self {
            Problem::Linear(s) => &s.g,
            Problem::Quasilinear(s) => &s.g,
            Problem::FullyNonlinear(s) => &s.g,
        }
    }

    pub fn into_linear(self) -> Result<LinearSystemSpec> {
        match self {
            Problem::Linear(s) => Ok(s),
            other => Err(Error::InvalidParameter(format!(
                "`{}` is a {} problem, expected linear",
                other.name(),
                other.kind()
            ))),
        }
    }

    pub fn into_quasilinear(self) -> Result<QuasilinearSystemSpec> {
        match self {
            Problem::Quasilinear(s) => Ok(s),
            Problem::Linear(s) => QuasilinearSystemSpec::from_linear(&s),
            other => Err(Error::InvalidParameter(format!(
                "`{}` is a {} problem, expected quasilinear",
                other.name(),
                other.kind()
            ))),
        }
    }

    pub fn into_fully_nonlinear(self) -> Result<FullyNonlinearSpec> {
        match self {
            Problem::FullyNonlinear(s) => Ok(s),
            other => Err(Error::InvalidParameter(format!(
                "`{}` is a {} problem, expected fully nonlinear",
                other.name(),
                other.kind()
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_spec_slots() {
        let mut s = LinearSystemSpec::new("t", 1, 1, 1, InitialData::zero(1)).unwrap();
        assert!(s.is_local());
        s.set_a(MultiIndex::pure(0, 2), Coefficient::scalar(1.0)).unwrap();
        s.set_b(MultiIndex::pure(0, 2), Coefficient::scalar(2.0)).unwrap();
        assert!(!s.is_local());
        assert!(s.set_a(MultiIndex::pure(0, 3), Coefficient::scalar(1.0)).is_err());
        assert!(s.set_a(MultiIndex::EMPTY, Coefficient::constant(&[1.0, 2.0])).is_err());
        let c = s.collapsed();
        assert!(c.is_local());
        match c.a(MultiIndex::pure(0, 2)) {
            Coefficient::Constant(v) => assert_eq!(&v[..], &[3.0]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn initial_data_fallbacks() {
        let g = InitialData::scalar(|t, y| (1.0 + t * t) * y[0].sin());
        let mut out = [0.0];
        g.eval_t(0.5, &[1.0, 0.0], &mut out).unwrap();
        assert!((out[0] - 1.0 * 1.0f64.sin()).abs() < 1e-9);
        let grid = crate::grid::build_grid(1.0, 2, 2.0 * std::f64::consts::PI, 64, 1, 1, 1).unwrap();
        let d = g.sample_derivative(&grid, 0.0, MultiIndex::axis(0)).unwrap();
        let dy = grid.dy();
        for k in 0..64 {
            assert!((d[k] - grid.y(k)[0].cos()).abs() < dy * dy);
        }
    }

    #[test]
    fn fd_partials_of_a_polynomial() {
        let g = InitialData::zero(1);
        let q11 = MultiIndex::pure(0, 2);
        let spec = FullyNonlinearSpec::new(
            "poly",
            1,
            move |p, jet| Ok(jet.local(q11)[0].powi(2) + 3.0 * jet.diagonal(q11)[0] + p.t * p.s),
            g,
        )
        .unwrap();
        let mut jet = Jet::zeros(1, 1, 2);
        jet.local_mut(q11)[0] = 1.5;
        let p = Point::new(0.5, 0.25, &[0.3]);
        assert!((spec.partial(Partial::Q(0), &p, &jet).unwrap() - 3.0).abs() < 1e-8);
        assert!((spec.partial(Partial::N(0), &p, &jet).unwrap() - 3.0).abs() < 1e-8);
        assert!((spec.partial(Partial::T, &p, &jet).unwrap() - 0.25).abs() < 1e-9);
        let mut strict = spec.clone();
        strict.fd_fallback = false;
        assert!(matches!(
            strict.partial(Partial::S, &p, &jet),
            Err(Error::MissingDerivativeCallback(_))
        ));
        let r = spec.resolved().unwrap();
        assert_eq!(r.analytic_partials().len(), r.partials().len());
    }
}
