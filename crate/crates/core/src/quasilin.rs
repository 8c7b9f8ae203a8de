//! Spatial quasilinearization of scalar fully nonlinear problems.
//!
//! For `u_s = F(t, s, y, ∂²u(t,s,y), ∂²u(s,s,y))` the gradient
//! `v^(k) = ∂u/∂y_k` solves the quasilinear system obtained by
//! differentiating in `y_k`:
//!
//! ```text
//! v^(k)_s = F_{y_k}(v) + Σ_I F_{q_I}(v) ∂_I v^(k)(t,s,y) + Σ_I F_{n_I}(v) ∂_I v^(k)(s,s,y)
//! ```
//!
//! and `u` itself is carried along with an added-and-subtracted Laplacian
//! on both arguments:
//!
//! ```text
//! u_s = Δu(t,s,y) + Δu(s,s,y) + F(t, s, y, Dv(t,s,y), Dv(s,s,y)) - div v(t,s,y) - div v(s,s,y)
//! ```
//!
//! Here `Dv` is the symmetrized Jacobian, bound to `F`'s second-derivative
//! slots (`q_ab = (∂_b v^(a) + ∂_a v^(b)) / 2`). Components are ordered
//! `(u, v^(1), ..., v^(d))`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::jet_identifier;
use crate::grid::{derivative_into, jet_at, Jet, MultiIndex, Point, StencilWorkspace, TriangleField};
use crate::systems::{FullyNonlinearSpec, InitialData, JetCoefficient, Partial, QuasilinearSystemSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    U,
    /// `v^(k+1) = ∂u/∂y_{k+1}`.
    V(usize),
}

impl Role {
    pub fn label(self) -> String {
        match self {
            Role::U => "u".into(),
            Role::V(k) => format!("v{}", k + 1),
        }
    }
}

#[derive(Clone, Debug)]
pub struct InducedSystem {
    pub spec: QuasilinearSystemSpec,
    pub roles: Vec<Role>,
    pub source: FullyNonlinearSpec,
}

/// Entry of [`InducedSystem::skeleton`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoefficientEntry {
    pub index: String,
    pub component: String,
    pub local: String,
    pub diagonal: String,
    pub local_constant: bool,
    pub diagonal_constant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Skeleton {
    pub source: String,
    pub d: usize,
    pub components: Vec<String>,
    pub top_order: Vec<CoefficientEntry>,
    pub lower_order: Vec<(String, String)>,
}

/// `F`'s order-2 jet built from an induced order-1 jet.
fn source_jet(jet: &Jet, d: usize, diagonal: bool) -> Jet {
    let mut out = Jet::zeros(d, 1, 2);
    let part = |idx: MultiIndex| if diagonal { jet.diagonal(idx) } else { jet.local(idx) };
    let assign = |out: &mut Jet, idx: MultiIndex, v: f64| {
        if diagonal {
            out.diagonal_mut(idx)[0] = v;
        } else {
            out.local_mut(idx)[0] = v;
        }
    };
    let base = part(MultiIndex::EMPTY);
    assign(&mut out, MultiIndex::EMPTY, base[0]);
    for k in 0..d {
        assign(&mut out, MultiIndex::axis(k), base[1 + k]);
    }
    for idx in MultiIndex::all_of_order(d, 2) {
        let ax = idx.axes();
        let (a, b) = (ax[0], ax[1]);
        let v = if a == b {
            part(MultiIndex::axis(a))[1 + a]
        } else {
            (part(MultiIndex::axis(b))[1 + a] + part(MultiIndex::axis(a))[1 + b]) / 2.0
        };
        assign(&mut out, idx, v);
    }
    out
}

/// Both `F` jets at once: local slots from the local part, diagonal slots
/// from the diagonal part.
fn combined_source_jet(jet: &Jet, d: usize) -> Jet {
    let loc = source_jet(jet, d, false);
    let dia = source_jet(jet, d, true);
    let mut out = loc;
    out.diagonal_values_mut().copy_from_slice(dia.diagonal_values());
    out
}

fn induced_data(g: &InitialData, d: usize) -> InitialData {
    let g = g.clone();
    InitialData::new(d + 1, move |t, y, out| {
        let mut one = [0.0];
        g.eval(t, y, &mut one)?;
        out[0] = one[0];
        for k in 0..d {
            let idx = MultiIndex::axis(k);
            out[1 + k] = match g.analytic_derivative(idx) {
                Some(f) => {
                    f(t, y, &mut one)?;
                    one[0]
                }
                None => {
                    let mut yy = *y;
                    crate::expr::central_difference(
                        |v| {
                            yy[k] = v;
                            g.eval(t, &yy, &mut one)?;
                            Ok(one[0])
                        },
                        y[k],
                        1.0,
                    )?
                }
            };
        }
        Ok(())
    })
}

/// Builds the induced system of a scalar `r = 1` problem.
///
/// Missing partials of `F` are taken by central differences when the
/// spec allows it; otherwise the call fails with
/// `MissingDerivativeCallback`.
pub fn quasilinearize_spatial(spec: &FullyNonlinearSpec) -> Result<InducedSystem> {
    if spec.g.m() != 1 {
        return Err(Error::UnsupportedMultiComponent(spec.g.m()));
    }
    if spec.lower_order_dependence {
        return Err(Error::UnsupportedNonlinearity(format!(
            "{} depends on u or its first derivatives",
            spec.name
        )));
    }
    let spec = spec.resolved()?;
    let d = spec.d();
    let mm = d + 1;
    let mut q = QuasilinearSystemSpec::new(&format!("{}_induced", spec.name), d, 1, mm, induced_data(&spec.g, d))?;
    let second = spec.second_indices();
    for (pos, &idx) in second.iter().enumerate() {
        let pure = idx.axes()[0] == idx.axes()[1];
        for diagonal in [false, true] {
            let s = spec.clone();
            let which = if diagonal { Partial::N(pos) } else { Partial::Q(pos) };
            let c = JetCoefficient::eval(move |p, jet, out| {
                out.fill(0.0);
                if pure {
                    out[0] = 1.0;
                }
                let fj = combined_source_jet(jet, d);
                let v = s.partial(which, p, &fj)?;
                for k in 1..mm {
                    out[k * mm + k] = v;
                }
                Ok(())
            });
            if diagonal {
                q.set_b_top(idx, c)?;
            } else {
                q.set_a_top(idx, c)?;
            }
        }
    }
    let s = spec.clone();
    q.set_f_low(JetCoefficient::eval(move |p, jet, out| {
        let fj = combined_source_jet(jet, d);
        let mut div = 0.0;
        for k in 0..d {
            div += jet.local(MultiIndex::axis(k))[1 + k];
        }
        let mut div_diag = 0.0;
        for k in 0..d {
            div_diag += jet.diagonal(MultiIndex::axis(k))[1 + k];
        }
        out[0] = s.eval(p, &fj)? - div - div_diag;
        for k in 0..d {
            out[1 + k] = s.partial(Partial::Y(k), p, &fj)?;
        }
        Ok(())
    }))?;
    let roles = std::iter::once(Role::U).chain((0..d).map(Role::V)).collect();
    Ok(InducedSystem { spec: q, roles, source: spec })
}

impl InducedSystem {
    pub fn d(&self) -> usize {
        self.source.d()
    }

    /// Human-readable structure of the induced system. Constancy of the
    /// `v` coefficients is probed at a few fixed jets.
    pub fn skeleton(&self) -> Result<Skeleton> {
        let d = self.d();
        let second = self.source.second_indices();
        let probes: Vec<Jet> = (0..5)
            .map(|n| {
                let mut j = Jet::zeros(d, 1, 2);
                for (p, &idx) in second.iter().enumerate() {
                    let x = 0.37 * (n as f64 + 1.0) * (p as f64 + 1.0);
                    j.local_mut(idx)[0] = x.sin();
                    j.diagonal_mut(idx)[0] = (1.3 * x).cos();
                }
                j
            })
            .collect();
        let point = Point::new(0.1, 0.05, &[0.3, 0.7]);
        let constant = |which: Partial| -> Result<bool> {
            let first = self.source.partial(which, &point, &probes[0])?;
            for j in &probes[1..] {
                if self.source.partial(which, &point, j)? != first {
                    return Ok(false);
                }
            }
            Ok(true)
        };
        let mut top_order = Vec::new();
        for (pos, &idx) in second.iter().enumerate() {
            let pure = idx.axes()[0] == idx.axes()[1];
            let u_term = if pure { "1" } else { "0" };
            top_order.push(CoefficientEntry {
                index: idx.label(),
                component: "u".into(),
                local: u_term.into(),
                diagonal: u_term.into(),
                local_constant: true,
                diagonal_constant: true,
            });
            for k in 0..d {
                top_order.push(CoefficientEntry {
                    index: idx.label(),
                    component: Role::V(k).label(),
                    local: format!("F_{}(v)", jet_identifier(idx, false)),
                    diagonal: format!("F_{}(v)", jet_identifier(idx, true)),
                    local_constant: constant(Partial::Q(pos))?,
                    diagonal_constant: constant(Partial::N(pos))?,
                });
            }
        }
        let mut lower_order = vec![(
            "u".to_string(),
            "F(Dv(t,s,y), Dv(s,s,y)) - div v(t,s,y) - div v(s,s,y)".to_string(),
        )];
        for k in 0..d {
            lower_order.push((Role::V(k).label(), format!("F_y{}(v)", k + 1)));
        }
        Ok(Skeleton {
            source: self.source.name.clone(),
            d,
            components: self.roles.iter().map(|r| r.label()).collect(),
            top_order,
            lower_order,
        })
    }
}

fn check_scalar_fields(fields: &[&TriangleField]) -> Result<()> {
    let g = fields[0].grid();
    for f in fields {
        if f.grid().m() != 1 {
            return Err(Error::UnsupportedMultiComponent(f.grid().m()));
        }
        if !f.grid().same_nodes(g) {
            return Err(Error::GridMismatch("fields live on different grids".into()));
        }
    }
    Ok(())
}

/// `max_{k<l} |∂_{y_l} v^(k) - ∂_{y_k} v^(l)|` over every node.
pub fn check_exchange_symmetry(v: &[TriangleField]) -> Result<f64> {
    if v.len() < 2 {
        return Ok(0.0);
    }
    let refs: Vec<&TriangleField> = v.iter().collect();
    check_scalar_fields(&refs)?;
    let g = *v[0].grid();
    if g.d() != v.len() {
        return Err(Error::InvalidParameter(format!(
            "{} gradient fields for d = {}",
            v.len(),
            g.d()
        )));
    }
    let mut ws = StencilWorkspace::default();
    let len = g.slice_len();
    let mut a = vec![0.0; len];
    let mut b = vec![0.0; len];
    let mut worst = 0.0f64;
    for k in 0..v.len() {
        for l in k + 1..v.len() {
            for i in 0..=g.n_tau() {
                for j in 0..=i {
                    derivative_into(v[k].slice(i, j), &mut a, MultiIndex::axis(l), g.n_y(), g.d(), 1, g.dy(), &mut ws);
                    derivative_into(v[l].slice(i, j), &mut b, MultiIndex::axis(k), g.n_y(), g.d(), 1, g.dy(), &mut ws);
                    for (x, y) in a.iter().zip(&b) {
                        worst = worst.max((x - y).abs());
                    }
                }
            }
        }
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub grad_residual: f64,
    pub pde_residual: f64,
}

/// Residuals of the equivalence between a solution of the original problem
/// and gradients `v`:
///
/// * `grad_residual = max_k ‖v^(k) - D_k u‖∞` over every node;
/// * `pde_residual = max |(u[i][j+1] - u[i][j]) / Δτ - F(t_i, s_j, y, ∂²u[i][j], ∂²u[j][j])|`
///   over `j < i`, the forward difference of the explicit scheme.
pub fn check_equivalence(u: &TriangleField, v: &[TriangleField], original: &FullyNonlinearSpec) -> Result<EquivalenceReport> {
    let mut refs = vec![u];
    refs.extend(v.iter());
    check_scalar_fields(&refs)?;
    let g = *u.grid();
    if v.len() != g.d() || original.d() != g.d() {
        return Err(Error::InvalidParameter(format!(
            "{} gradient fields and a d = {} problem on a d = {} grid",
            v.len(),
            original.d(),
            g.d()
        )));
    }
    let len = g.slice_len();
    let mut ws = StencilWorkspace::default();
    let mut du = vec![0.0; len];
    let mut grad = 0.0f64;
    for (k, vk) in v.iter().enumerate() {
        for i in 0..=g.n_tau() {
            for j in 0..=i {
                derivative_into(u.slice(i, j), &mut du, MultiIndex::axis(k), g.n_y(), g.d(), 1, g.dy(), &mut ws);
                for (a, b) in vk.slice(i, j).iter().zip(&du) {
                    grad = grad.max((a - b).abs());
                }
            }
        }
    }
    let mut pde = 0.0f64;
    let dtau = g.dtau();
    for i in 1..=g.n_tau() {
        for j in 0..i {
            let jet = jet_at(u, i, j, 2)?;
            let (cur, next) = (u.slice(i, j), u.slice(i, j + 1));
            for k in 0..g.n_space() {
                let f = original.eval(&g.point(i, j, k), &jet.point(k))?;
                pde = pde.max(((next[k] - cur[k]) / dtau - f).abs());
            }
        }
    }
    Ok(EquivalenceReport {
        grad_residual: grad,
        pde_residual: pde,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetrized_slots() {
        let mut jet = Jet::zeros(2, 3, 1);
        // ∂_1 v1 = 1, ∂_2 v1 = 2, ∂_1 v2 = 4, ∂_2 v2 = 8
        jet.local_mut(MultiIndex::axis(0)).copy_from_slice(&[0.0, 1.0, 4.0]);
        jet.local_mut(MultiIndex::axis(1)).copy_from_slice(&[0.0, 2.0, 8.0]);
        let f = source_jet(&jet, 2, false);
        let q = MultiIndex::all_of_order(2, 2);
        assert_eq!(f.local(q[0])[0], 1.0);
        assert_eq!(f.local(q[1])[0], 3.0);
        assert_eq!(f.local(q[2])[0], 8.0);
    }
}
