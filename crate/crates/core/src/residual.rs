//! Input-space derivatives by central finite differences recorded on the
//! tape, and the least-squares and penalty losses built from them.

use std::collections::HashMap;

use crate::autodiff::{BatchMatrix, Tape, Var};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::problems::Problem;
use crate::stencil::{stencil, Steps};

/// Which derivatives a residual form reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Needs {
    /// `orders[k-1]` requests the k-th derivative along the first axis.
    pub orders: [bool; 4],
    pub laplacian: bool,
}

impl Needs {
    pub fn orders(list: &[usize]) -> Self {
        let mut n = Needs::default();
        for &k in list {
            n.orders[k - 1] = true;
        }
        n
    }

    pub fn laplacian() -> Self {
        Needs { orders: [false; 4], laplacian: true }
    }
}

/// Value and requested derivatives of one field on a batch.
#[derive(Debug, Clone, Copy)]
pub struct FieldDerivs {
    pub value: Var,
    pub orders: [Option<Var>; 4],
    pub laplacian: Option<Var>,
}

impl FieldDerivs {
    pub fn d(&self, order: usize) -> Result<Var> {
        if order == 0 {
            return Ok(self.value);
        }
        self.orders
            .get(order - 1)
            .copied()
            .flatten()
            .ok_or_else(|| Error::config(format!("derivative of order {order} was not supplied")))
    }

    pub fn lap(&self) -> Result<Var> {
        self.laplacian.ok_or_else(|| Error::config("laplacian was not supplied"))
    }
}

/// Memoized evaluations of `f` at `x + δ e_axis`.
struct Shifts<'a, F> {
    f: F,
    x: &'a BatchMatrix,
    cache: HashMap<(usize, u64), Var>,
}

impl<'a, F> Shifts<'a, F> {
    fn new(f: F, x: &'a BatchMatrix) -> Self {
        Self { f, x, cache: HashMap::new() }
    }

    fn at<'p>(&mut self, tape: &mut Tape<'p>, axis: usize, delta: f64) -> Result<Var>
    where
        F: FnMut(&mut Tape<'p>, &BatchMatrix) -> Result<Var>,
    {
        let key = if delta == 0.0 { (0, 0) } else { (axis, delta.to_bits()) };
        if let Some(&v) = self.cache.get(&key) {
            return Ok(v);
        }
        let v = if delta == 0.0 {
            (self.f)(tape, self.x)?
        } else {
            let shifted = self.x.shifted(axis, delta);
            (self.f)(tape, &shifted)?
        };
        self.cache.insert(key, v);
        Ok(v)
    }

    fn derivative<'p>(&mut self, tape: &mut Tape<'p>, axis: usize, order: usize, h: f64) -> Result<Var>
    where
        F: FnMut(&mut Tape<'p>, &BatchMatrix) -> Result<Var>,
    {
        let scale = h.powi(-(order as i32));
        let mut terms = Vec::new();
        for &(j, w) in stencil(order)? {
            terms.push((self.at(tape, axis, j as f64 * h)?, w * scale));
        }
        tape.lincomb(&terms)
    }

    fn laplacian<'p>(&mut self, tape: &mut Tape<'p>, h: f64) -> Result<Var>
    where
        F: FnMut(&mut Tape<'p>, &BatchMatrix) -> Result<Var>,
    {
        let d = self.x.cols();
        let w = 1.0 / (h * h);
        let mut terms = vec![(self.at(tape, 0, 0.0)?, -2.0 * d as f64 * w)];
        for axis in 0..d {
            terms.push((self.at(tape, axis, -h)?, w));
            terms.push((self.at(tape, axis, h)?, w));
        }
        tape.lincomb(&terms)
    }
}

/// Central-stencil estimate of `d^k f / dx^k` along the first axis.
pub fn derivative_1d<'p, F>(tape: &mut Tape<'p>, f: F, x: &BatchMatrix, order: usize, steps: &Steps) -> Result<Var>
where
    F: FnMut(&mut Tape<'p>, &BatchMatrix) -> Result<Var>,
{
    if !(1..=4).contains(&order) {
        return Err(Error::config(format!("derivative order {order} not in 1..=4")));
    }
    Shifts::new(f, x).derivative(tape, 0, order, steps.h(order))
}

/// Sum of 3-point second differences over all axes (`2d + 1` evaluations).
pub fn laplacian<'p, F>(tape: &mut Tape<'p>, f: F, x: &BatchMatrix, steps: &Steps) -> Result<Var>
where
    F: FnMut(&mut Tape<'p>, &BatchMatrix) -> Result<Var>,
{
    Shifts::new(f, x).laplacian(tape, steps.h(2))
}

/// Value plus every derivative in `needs`, sharing evaluations between stencils.
pub fn field_derivs<'p, F>(tape: &mut Tape<'p>, f: F, x: &BatchMatrix, needs: Needs, steps: &Steps) -> Result<FieldDerivs>
where
    F: FnMut(&mut Tape<'p>, &BatchMatrix) -> Result<Var>,
{
    let mut s = Shifts::new(f, x);
    let value = s.at(tape, 0, 0.0)?;
    let mut orders = [None; 4];
    for (k, slot) in orders.iter_mut().enumerate() {
        if needs.orders[k] {
            *slot = Some(s.derivative(tape, 0, k + 1, steps.h(k + 1))?);
        }
    }
    let laplacian = if needs.laplacian { Some(s.laplacian(tape, steps.h(2))?) } else { None };
    Ok(FieldDerivs { value, orders, laplacian })
}

/// Derivatives of every model field at `x`.
pub fn model_derivs(tape: &mut Tape<'_>, problem: &Problem, model: &Model, x: &BatchMatrix) -> Result<Vec<FieldDerivs>> {
    let steps = problem.steps();
    let needs = problem.needs();
    (0..model.field_count())
        .map(|i| {
            let field = &model.fields[i];
            let base = model.field_base(i);
            field_derivs(tape, |t: &mut Tape<'_>, p: &BatchMatrix| field.apply(t, base, p, &steps), x, needs, &steps)
        })
        .collect()
}

fn check_finite(tape: &Tape<'_>, r: Var, x: &BatchMatrix) -> Result<()> {
    let v = tape.value(r);
    if let Some(i) = v.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::Training {
            iteration: 0,
            message: format!("non-finite residual {} at x = {:?}", v.data()[i], x.row(i)),
        });
    }
    Ok(())
}

/// Residual columns (one per equation) of `model` on `x`, plus the field derivatives.
pub fn residuals(tape: &mut Tape<'_>, problem: &Problem, model: &Model, x: &BatchMatrix) -> Result<(Vec<Var>, Vec<FieldDerivs>)> {
    if model.field_count() != problem.field_count() {
        return Err(Error::config(format!(
            "{} has {} fields, model has {}",
            problem.name,
            problem.field_count(),
            model.field_count()
        )));
    }
    let derivs = model_derivs(tape, problem, model, x)?;
    let rs = problem.residual(tape, &derivs, x)?;
    for &r in &rs {
        check_finite(tape, r, x)?;
    }
    Ok((rs, derivs))
}

/// Sum over equations of the mean-square residual, and the field outputs.
pub fn ls_loss_with_outputs(tape: &mut Tape<'_>, problem: &Problem, model: &Model, x: &BatchMatrix) -> Result<(Var, Vec<Var>)> {
    let (rs, derivs) = residuals(tape, problem, model, x)?;
    let mut terms = Vec::with_capacity(rs.len());
    for r in rs {
        terms.push((tape.mean_square(r)?, 1.0));
    }
    let loss = if terms.len() == 1 { terms[0].0 } else { tape.lincomb(&terms)? };
    Ok((loss, derivs.iter().map(|d| d.value).collect()))
}

/// Mean-square residual over the batch.
pub fn ls_loss(tape: &mut Tape<'_>, problem: &Problem, model: &Model, x: &BatchMatrix) -> Result<Var> {
    Ok(ls_loss_with_outputs(tape, problem, model, x)?.0)
}

/// Sum of the two mean-square residuals of a two-field problem.
pub fn system_ls_loss(tape: &mut Tape<'_>, problem: &Problem, model: &Model, x: &BatchMatrix) -> Result<Var> {
    if problem.field_count() != 2 {
        return Err(Error::config(format!("{} is not a two-field system", problem.name)));
    }
    ls_loss(tape, problem, model, x)
}

/// Mean-square boundary mismatch. Interval problems use their point
/// conditions (values and derivatives at fixed points); other domains use
/// Dirichlet mismatches on `boundary`.
pub fn boundary_mismatch(tape: &mut Tape<'_>, problem: &Problem, model: &Model, boundary: &BatchMatrix) -> Result<Var> {
    let steps = problem.steps();
    let conditions = problem.point_conditions();
    if !conditions.is_empty() {
        let field = &model.fields[0];
        let base = model.field_base(0);
        let mut squares = Vec::with_capacity(conditions.len());
        for c in &conditions {
            let mut parts = Vec::with_capacity(c.terms.len());
            for &(point, order, coeff) in &c.terms {
                let p = BatchMatrix::scalar(point);
                let f = |t: &mut Tape<'_>, q: &BatchMatrix| field.apply(t, base, q, &steps);
                let v = if order == 0 { f(tape, &p)? } else { derivative_1d(tape, f, &p, order, &steps)? };
                parts.push((v, coeff));
            }
            let lhs = tape.lincomb(&parts)?;
            let m = tape.add_scalar(lhs, -c.target);
            squares.push((tape.mul(m, m)?, 1.0 / conditions.len() as f64));
        }
        return tape.lincomb(&squares);
    }
    let targets = problem.dirichlet_values();
    let outs = model.outputs(tape, boundary, &steps)?;
    let mut terms = Vec::with_capacity(outs.len());
    for (u, g) in outs.into_iter().zip(targets) {
        let m = tape.add_scalar(u, -g);
        terms.push((tape.mean_square(m)?, 1.0));
    }
    tape.lincomb(&terms)
}

/// Signed error of each interval point condition at `theta` (empty for
/// multi-dimensional domains).
pub fn condition_errors(problem: &Problem, model: &Model, theta: &[f64]) -> Result<Vec<f64>> {
    model.check_len(theta)?;
    let steps = problem.steps();
    let field = &model.fields[0];
    let base = model.field_base(0);
    let mut out = Vec::new();
    for c in problem.point_conditions() {
        let mut tape = Tape::new(theta);
        let mut parts = Vec::with_capacity(c.terms.len());
        for &(point, order, coeff) in &c.terms {
            let p = BatchMatrix::scalar(point);
            let f = |t: &mut Tape<'_>, q: &BatchMatrix| field.apply(t, base, q, &steps);
            let v = if order == 0 { f(&mut tape, &p)? } else { derivative_1d(&mut tape, f, &p, order, &steps)? };
            parts.push((v, coeff));
        }
        let lhs = tape.lincomb(&parts)?;
        out.push(tape.value(lhs).data()[0] - c.target);
    }
    Ok(out)
}

/// Interior mean-square residual plus `λ` times the boundary mismatch.
pub fn penalty_loss(
    tape: &mut Tape<'_>,
    problem: &Problem,
    model: &Model,
    interior: &BatchMatrix,
    boundary: &BatchMatrix,
    lambda: f64,
) -> Result<Var> {
    let ls = ls_loss(tape, problem, model, interior)?;
    let b = boundary_mismatch(tape, problem, model, boundary)?;
    tape.lincomb(&[(ls, 1.0), (b, lambda)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stencil::StencilConfig;

    fn poly(t: &mut Tape<'_>, x: &BatchMatrix, f: fn(&[f64]) -> f64) -> Result<Var> {
        Ok(t.constant(x.map_rows(f)))
    }

    #[test]
    fn second_derivative_of_square() {
        let steps = StencilConfig::default().steps(1.0);
        let mut t = Tape::new(&[]);
        let x = BatchMatrix::column(vec![0.3, -1.2, 4.0]);
        let d = derivative_1d(&mut t, |t: &mut Tape<'_>, x: &BatchMatrix| poly(t, x, |p| p[0] * p[0]), &x, 2, &steps).unwrap();
        for v in t.value(d).data() {
            assert!((v - 2.0).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn fourth_derivative_of_quartic() {
        let steps = StencilConfig::default().steps(1.0);
        let mut t = Tape::new(&[]);
        let x = BatchMatrix::column(vec![0.5]);
        let d = derivative_1d(&mut t, |t: &mut Tape<'_>, x: &BatchMatrix| poly(t, x, |p| p[0].powi(4)), &x, 4, &steps).unwrap();
        assert!((t.value(d).item() - 24.0).abs() < 24.0 * 1e-6);
    }

    #[test]
    fn second_derivative_of_sine_at_zero() {
        let steps = StencilConfig::default().steps(1.0);
        let mut t = Tape::new(&[]);
        let x = BatchMatrix::column(vec![0.0]);
        let d = derivative_1d(&mut t, |t: &mut Tape<'_>, x: &BatchMatrix| poly(t, x, |p| p[0].sin()), &x, 2, &steps).unwrap();
        assert!(t.value(d).item().abs() <= steps.h(2).powi(2));
    }

    #[test]
    fn laplacian_examples() {
        let steps = StencilConfig::uniform(1e-3).steps(1.0);
        for d in [1usize, 2, 3, 6] {
            let mut t = Tape::new(&[]);
            let x = BatchMatrix::new(2, d, (0..2 * d).map(|i| 0.1 * i as f64 - 0.3).collect()).unwrap();
            let l = laplacian(&mut t, |t: &mut Tape<'_>, x: &BatchMatrix| poly(t, x, |p| p.iter().map(|v| v * v).sum()), &x, &steps).unwrap();
            for v in t.value(l).data() {
                assert!((v - 2.0 * d as f64).abs() < 1e-6 * 2.0 * d as f64, "d={d}: {v}");
            }
        }
        let mut t = Tape::new(&[]);
        let x = BatchMatrix::from_rows(&[vec![0.7, -0.2]]).unwrap();
        let l = laplacian(&mut t, |t: &mut Tape<'_>, x: &BatchMatrix| poly(t, x, |p| p[0] * p[0] - p[1] * p[1]), &x, &steps).unwrap();
        assert!(t.value(l).item().abs() < 1e-9);
        let c = laplacian(&mut t, |t: &mut Tape<'_>, x: &BatchMatrix| poly(t, x, |_| 3.0), &x, &steps).unwrap();
        assert_eq!(t.value(c).item(), 0.0);
    }

    #[test]
    fn shared_evaluations() {
        let steps = StencilConfig::default().steps(1.0);
        let mut t = Tape::new(&[]);
        let x = BatchMatrix::column(vec![0.2]);
        let mut calls = 0;
        let d = field_derivs(
            &mut t,
            |t: &mut Tape<'_>, x: &BatchMatrix| {
                calls += 1;
                poly(t, x, |p| p[0].powi(3))
            },
            &x,
            Needs::orders(&[1, 2]),
            &steps,
        )
        .unwrap();
        // x, x±h1, x±h2.
        assert_eq!(calls, 5);
        assert!((t.value(d.d(1).unwrap()).item() - 0.12).abs() < 1e-8);
        assert!(d.d(3).is_err());
        assert!(d.lap().is_err());
    }
}
