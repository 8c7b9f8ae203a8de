//! Scalar (`m = 1`) problems defined by expression strings.
//!
//! Keys of an [`ExpressionProblem`]:
//!
//! | kind              | keys                                                        |
//! |-------------------|-------------------------------------------------------------|
//! | `linear`          | `A.<id>`, `B.<id>` for local jet ids (`u`, `p1`, `q11`, ...), `f` |
//! | `quasilinear`     | `A.<id>`, `B.<id>` for top-order ids, `F` (lower-order part) |
//! | `fully_nonlinear` | `F`, optional `F.d_<var>` for `var` in `t`, `s`, `y1`, `q11`, `nq11`, ... |
//!
//! Every kind takes `g` and optionally `g_t`. Coefficients of linear
//! problems see `t, s, y1..yd`; the others additionally see the jet
//! identifiers.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{
    Coefficient, FullyNonlinearSpec, InitialData, JetCoefficient, LinearSystemSpec, Partial, Problem,
    QuasilinearSystemSpec,
};
use crate::error::{Error, Result};
use crate::expr::{jet_identifier, parse, Compiled, Expr};
use crate::grid::{Jet, MultiIndex, Point};

fn point_slots(d: usize) -> Vec<String> {
    let mut s = vec!["t".to_string(), "s".to_string()];
    s.extend((1..=d).map(|a| format!("y{a}")));
    s
}

fn jet_slots(d: usize, order: usize) -> Vec<String> {
    let mut s = point_slots(d);
    let idx = MultiIndex::all_up_to(d, order);
    s.extend(idx.iter().map(|&i| jet_identifier(i, false)));
    s.extend(idx.iter().map(|&i| jet_identifier(i, true)));
    s
}

fn compile(text: &str, slots: &[String]) -> Result<(Expr, Arc<Compiled>)> {
    let e = parse(text)?;
    let refs: Vec<&str> = slots.iter().map(String::as_str).collect();
    let c = Compiled::new(&e, &refs)?;
    Ok((e, Arc::new(c)))
}

fn as_failure(e: Error) -> Error {
    match e {
        Error::Domain { .. } => Error::EvaluatorFailure(e.to_string()),
        other => other,
    }
}

fn load_point(p: &Point, d: usize, buf: &mut Vec<f64>) {
    buf.clear();
    buf.push(p.t);
    buf.push(p.s);
    buf.extend_from_slice(&p.y[..d]);
}

/// A scalar `(t, s, y)` coefficient; constant expressions fold to
/// `Constant` (or `Zero`).
pub fn expression_coefficient(text: &str, d: usize) -> Result<Coefficient> {
    let (e, c) = compile(text, &point_slots(d))?;
    if let Some(v) = e.constant_value() {
        return Ok(if v == 0.0 { Coefficient::Zero } else { Coefficient::scalar(v) });
    }
    Ok(Coefficient::eval(move |p, out| {
        let mut buf = Vec::with_capacity(2 + d);
        load_point(p, d, &mut buf);
        out[0] = c.eval(&buf).map_err(as_failure)?;
        Ok(())
    }))
}

fn jet_function(text: &str, d: usize, order: usize) -> Result<(Expr, impl Fn(&Point, &Jet) -> Result<f64> + Send + Sync)> {
    let (e, c) = compile(text, &jet_slots(d, order))?;
    let f = move |p: &Point, jet: &Jet| {
        let mut buf = Vec::with_capacity(c.slots().len());
        load_point(p, d, &mut buf);
        buf.extend_from_slice(jet.local_values());
        buf.extend_from_slice(jet.diagonal_values());
        c.eval(&buf).map_err(as_failure)
    };
    Ok((e, f))
}

fn expression_jet_coefficient(text: &str, d: usize, order: usize) -> Result<JetCoefficient> {
    let (e, f) = jet_function(text, d, order)?;
    if let Some(v) = e.constant_value() {
        return Ok(if v == 0.0 {
            JetCoefficient::Zero
        } else {
            JetCoefficient::constant(&[v])
        });
    }
    Ok(JetCoefficient::eval(move |p, jet, out| {
        out[0] = f(p, jet)?;
        Ok(())
    }))
}

/// Initial data `g(t, y)` with an optional analytic `g_t`.
pub fn expression_data(g: &str, g_t: Option<&str>, d: usize) -> Result<InitialData> {
    let mut slots = vec!["t".to_string()];
    slots.extend((1..=d).map(|a| format!("y{a}")));
    let make = |text: &str| -> Result<Arc<Compiled>> { Ok(compile(text, &slots)?.1) };
    let value = make(g)?;
    let call = move |c: &Compiled, t: f64, y: &[f64; 2]| {
        let mut buf = vec![t];
        buf.extend_from_slice(&y[..d]);
        c.eval(&buf).map_err(as_failure)
    };
    let mut data = InitialData::new(1, move |t, y, out| {
        out[0] = call(&value, t, y)?;
        Ok(())
    });
    if let Some(text) = g_t {
        let c = make(text)?;
        data = data.with_time_derivative(move |t, y, out| {
            out[0] = call(&c, t, y)?;
            Ok(())
        });
    }
    Ok(data)
}

/// Kinds accepted by [`ExpressionProblem`].
pub const EXPRESSION_KINDS: [&str; 3] = ["linear", "quasilinear", "fully_nonlinear"];

/// A scalar problem given as `key → expression` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpressionProblem {
    pub name: String,
    pub kind: String,
    pub d: usize,
    pub r: usize,
    pub entries: BTreeMap<String, String>,
}

impl ExpressionProblem {
    pub fn new(name: &str, kind: &str, d: usize, r: usize) -> Self {
        ExpressionProblem {
            name: name.into(),
            kind: kind.into(),
            d,
            r,
            entries: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, text: &str) -> Self {
        self.entries.insert(key.into(), text.into());
        self
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.entries
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Config(format!("problem definition is missing key \"{key}\"")))
    }

    fn unknown_key(&self, key: &str) -> Error {
        Error::Config(format!("unknown problem key \"{key}\" for kind {}", self.kind))
    }

    fn data(&self) -> Result<InitialData> {
        expression_data(self.required("g")?, self.entries.get("g_t").map(String::as_str), self.d)
    }

    /// Parses the coefficient index of an `A.<id>` / `B.<id>` key.
    fn coefficient_index(&self, key: &str, id: &str, max_order: usize) -> Result<MultiIndex> {
        match crate::expr::parse_jet_identifier(id, self.d) {
            Some((idx, false)) if idx.order() <= max_order => Ok(idx),
            _ => Err(self.unknown_key(key)),
        }
    }

    pub fn build(&self) -> Result<Problem> {
        let (d, r) = (self.d, self.r);
        match self.kind.as_str() {
            "linear" => {
                let mut spec = LinearSystemSpec::new(&self.name, d, r, 1, self.data()?)?;
                for (key, text) in &self.entries {
                    if let Some(id) = key.strip_prefix("A.") {
                        let idx = self.coefficient_index(key, id, 2 * r)?;
                        spec.set_a(idx, expression_coefficient(text, d)?)?;
                    } else if let Some(id) = key.strip_prefix("B.") {
                        let idx = self.coefficient_index(key, id, 2 * r)?;
                        spec.set_b(idx, expression_coefficient(text, d)?)?;
                    } else if key == "f" {
                        spec.set_f(expression_coefficient(text, d)?)?;
                    } else if key != "g" && key != "g_t" {
                        return Err(self.unknown_key(key));
                    }
                }
                Ok(Problem::Linear(spec))
            }
            "quasilinear" => {
                let mut spec = QuasilinearSystemSpec::new(&self.name, d, r, 1, self.data()?)?;
                let order = spec.jet_order();
                for (key, text) in &self.entries {
                    if let Some(id) = key.strip_prefix("A.") {
                        let idx = self.coefficient_index(key, id, 2 * r)?;
                        if idx.order() != 2 * r {
                            return Err(self.unknown_key(key));
                        }
                        spec.set_a_top(idx, expression_jet_coefficient(text, d, order)?)?;
                    } else if let Some(id) = key.strip_prefix("B.") {
                        let idx = self.coefficient_index(key, id, 2 * r)?;
                        if idx.order() != 2 * r {
                            return Err(self.unknown_key(key));
                        }
                        spec.set_b_top(idx, expression_jet_coefficient(text, d, order)?)?;
                    } else if key == "F" {
                        spec.set_f_low(expression_jet_coefficient(text, d, order)?)?;
                    } else if key != "g" && key != "g_t" {
                        return Err(self.unknown_key(key));
                    }
                }
                Ok(Problem::Quasilinear(spec))
            }
            "fully_nonlinear" => {
                if r != 1 {
                    return Err(Error::UnsupportedOrder(format!("fully nonlinear problems need r = 1, got {r}")));
                }
                let (e, f) = jet_function(self.required("F")?, d, 2)?;
                let mut spec = FullyNonlinearSpec::new(&self.name, d, f, self.data()?)?;
                let second = spec.second_indices();
                spec.lower_order_dependence = e.variables().iter().any(|v| {
                    crate::expr::parse_jet_identifier(v, d).is_some_and(|(idx, _)| idx.order() < 2)
                });
                for (key, text) in &self.entries {
                    if let Some(var) = key.strip_prefix("F.d_") {
                        let which = match var {
                            "t" => Partial::T,
                            "s" => Partial::S,
                            _ => {
                                if let Some(k) = var.strip_prefix('y').and_then(|k| k.parse::<usize>().ok()) {
                                    if !(1..=d).contains(&k) {
                                        return Err(self.unknown_key(key));
                                    }
                                    Partial::Y(k - 1)
                                } else {
                                    match crate::expr::parse_jet_identifier(var, d) {
                                        Some((idx, diag)) if idx.order() == 2 => {
                                            let pos = second.iter().position(|&i| i == idx).expect("second-order index");
                                            if diag {
                                                Partial::N(pos)
                                            } else {
                                                Partial::Q(pos)
                                            }
                                        }
                                        _ => return Err(self.unknown_key(key)),
                                    }
                                }
                            }
                        };
                        let (_, pf) = jet_function(text, d, 2)?;
                        spec.set_partial(which, pf);
                    } else if key != "F" && key != "g" && key != "g_t" {
                        return Err(self.unknown_key(key));
                    }
                }
                Ok(Problem::FullyNonlinear(spec))
            }
            other => Err(Error::Config(format!(
                "unknown problem kind \"{other}\" (expected one of {})",
                EXPRESSION_KINDS.join(", ")
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_coefficients_fold() {
        assert!(expression_coefficient("0", 1).unwrap().is_zero());
        assert!(matches!(expression_coefficient("2*0.5", 1).unwrap(), Coefficient::Constant(_)));
        let c = expression_coefficient("t + y1", 1).unwrap();
        let mut out = [0.0];
        c.fill(&Point::new(0.5, 0.25, &[2.0]), &mut out).unwrap();
        assert_eq!(out[0], 2.5);
    }

    #[test]
    fn unknown_variable_fails_at_build() {
        assert!(matches!(expression_coefficient("t + q11", 1), Err(Error::UnboundIdentifier(_))));
        let p = ExpressionProblem::new("x", "linear", 1, 1).with("g", "sin(y1)").with("A.q11", "1").with("C.q11", "1");
        assert!(matches!(p.build(), Err(Error::Config(_))));
    }

    #[test]
    fn fully_nonlinear_from_text() {
        let p = ExpressionProblem::new("fnl", "fully_nonlinear", 1, 1)
            .with("F", "q11 + tanh(nq11)")
            .with("F.d_q11", "1")
            .with("g", "(1 + t)*sin(y1)");
        let Problem::FullyNonlinear(spec) = p.build().unwrap() else { panic!() };
        assert!(!spec.lower_order_dependence);
        assert_eq!(spec.analytic_partials(), vec![Partial::Q(0)]);
        let mut jet = Jet::zeros(1, 1, 2);
        jet.diagonal_mut(MultiIndex::pure(0, 2))[0] = 0.3;
        let fnl = spec.partial(Partial::N(0), &Point::new(0.0, 0.0, &[0.0]), &jet).unwrap();
        assert!((fnl - (1.0 - 0.3f64.tanh().powi(2))).abs() < 1e-8);

        let lower = ExpressionProblem::new("fnl", "fully_nonlinear", 1, 1).with("F", "q11 + u").with("g", "0");
        let Problem::FullyNonlinear(spec) = lower.build().unwrap() else { panic!() };
        assert!(spec.lower_order_dependence);
    }
}
