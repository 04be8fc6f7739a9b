//! Deflated losses `(Σ_k ‖u - u_k‖^{-p_k} + α) · L(u)` and the shift schedule.

use serde::{Deserialize, Serialize};

use crate::autodiff::{BatchMatrix, Tape, Var};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::problems::Problem;
use crate::residual::{boundary_mismatch, ls_loss_with_outputs};

/// Distances below this are treated as a collapse onto the source.
pub const DISTANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ShiftSchedule {
    Constant { alpha: f64 },
    /// `α_n = 10^{p0 + n (p1 - p0) / N_I}`.
    Varying { p0: f64, p1: f64 },
}

impl Default for ShiftSchedule {
    fn default() -> Self {
        ShiftSchedule::Constant { alpha: 1.0 }
    }
}

impl ShiftSchedule {
    /// Varying schedule over `[lo, hi]` given as shift values, e.g. `[0.01, 100]`.
    pub fn range(lo: f64, hi: f64) -> Self {
        ShiftSchedule::Varying { p0: lo.log10(), p1: hi.log10() }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ShiftSchedule::Constant { alpha } if !(alpha >= 0.0 && alpha.is_finite()) => {
                Err(Error::config(format!("shift must be finite and nonnegative, got {alpha}")))
            }
            ShiftSchedule::Varying { p0, p1 } if !(p0 <= p1) => {
                Err(Error::config(format!("shift powers must be nondecreasing, got [{p0}, {p1}]")))
            }
            _ => Ok(()),
        }
    }
}

pub fn shift_at(schedule: &ShiftSchedule, n: usize, n_total: usize) -> f64 {
    match *schedule {
        ShiftSchedule::Constant { alpha } => alpha,
        ShiftSchedule::Varying { p0, p1 } => {
            if n_total == 0 {
                return 10f64.powf(p0);
            }
            10f64.powf(p0 + n as f64 * (p1 - p0) / n_total as f64)
        }
    }
}

/// A frozen solution used to deflate the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct DeflationSource {
    pub label: String,
    pub model: Model,
    pub theta: Vec<f64>,
    pub power: f64,
}

impl DeflationSource {
    pub fn new(label: impl Into<String>, model: Model, theta: Vec<f64>, power: f64) -> Result<Self> {
        if !(power > 0.0) {
            return Err(Error::config(format!("deflation power must be positive, got {power}")));
        }
        model.check_len(&theta)?;
        Ok(Self { label: label.into(), model, theta, power })
    }

    /// Per-field source values on `x`.
    pub fn values(&self, problem: &Problem, x: &BatchMatrix) -> Result<Vec<Vec<f64>>> {
        self.model.values(&self.theta, x, &problem.steps())
    }
}

/// Source values on one batch, ready to enter the tape as constants.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedSource {
    pub fields: Vec<Vec<f64>>,
    pub power: f64,
}

pub fn evaluate_sources(sources: &[DeflationSource], problem: &Problem, x: &BatchMatrix) -> Result<Vec<EvaluatedSource>> {
    sources
        .iter()
        .map(|s| Ok(EvaluatedSource { fields: s.values(problem, x)?, power: s.power }))
        .collect()
}

/// `Σ_k Σ_fields ‖u - u_k‖_{L²(X)}^{-p_k} + α` recorded on the tape.
pub fn deflation_factor(tape: &mut Tape<'_>, outputs: &[Var], sources: &[EvaluatedSource], alpha: f64) -> Result<Var> {
    if sources.is_empty() {
        return Ok(tape.constant_scalar(alpha));
    }
    let mut terms = Vec::new();
    for (k, s) in sources.iter().enumerate() {
        if s.fields.len() != outputs.len() {
            return Err(Error::config(format!(
                "source {k} has {} fields, model has {}",
                s.fields.len(),
                outputs.len()
            )));
        }
        for (&u, uk) in outputs.iter().zip(&s.fields) {
            let c = tape.constant(BatchMatrix::column(uk.clone()));
            let diff = tape.sub(u, c)?;
            let ms = tape.mean_square(diff)?;
            let dist = tape.value(ms).item().sqrt();
            if dist < DISTANCE_FLOOR {
                return Err(Error::domain(format!("distance {dist:e} to deflation source {k}: collapsed onto a known solution")));
            }
            terms.push((tape.pow_const(ms, -s.power / 2.0)?, 1.0));
        }
    }
    let sum = tape.lincomb(&terms)?;
    Ok(tape.add_scalar(sum, alpha))
}

/// Scalars produced while assembling a deflated loss.
#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub loss: Var,
    /// The undeflated least-squares (or penalty) loss.
    pub base: Var,
    pub factor: Var,
}

/// `factor × ls_loss` on one shared batch.
pub fn nd_loss(
    tape: &mut Tape<'_>,
    problem: &Problem,
    model: &Model,
    sources: &[EvaluatedSource],
    x: &BatchMatrix,
    alpha: f64,
) -> Result<LossNodes> {
    let (ls, outputs) = ls_loss_with_outputs(tape, problem, model, x)?;
    let factor = deflation_factor(tape, &outputs, sources, alpha)?;
    let loss = tape.mul(factor, ls)?;
    Ok(LossNodes { loss, base: ls, factor })
}

/// `factor × (ls_loss + λ · boundary mismatch)`.
#[allow(clippy::too_many_arguments)]
pub fn nd_penalty_loss(
    tape: &mut Tape<'_>,
    problem: &Problem,
    model: &Model,
    sources: &[EvaluatedSource],
    interior: &BatchMatrix,
    boundary: &BatchMatrix,
    lambda: f64,
    alpha: f64,
) -> Result<LossNodes> {
    let (ls, outputs) = ls_loss_with_outputs(tape, problem, model, interior)?;
    let b = boundary_mismatch(tape, problem, model, boundary)?;
    let base = tape.lincomb(&[(ls, 1.0), (b, lambda)])?;
    let factor = deflation_factor(tape, &outputs, sources, alpha)?;
    let loss = tape.mul(factor, base)?;
    Ok(LossNodes { loss, base, factor })
}

/// Two-field deflation: distances of both fields enter the factor.
pub fn system_nd_loss(
    tape: &mut Tape<'_>,
    problem: &Problem,
    model: &Model,
    sources: &[EvaluatedSource],
    x: &BatchMatrix,
    alpha: f64,
) -> Result<LossNodes> {
    if problem.field_count() != 2 || model.field_count() != 2 {
        return Err(Error::config(format!("{} is not a two-field system", problem.name)));
    }
    nd_loss(tape, problem, model, sources, x, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_examples() {
        let s = ShiftSchedule::Varying { p0: -2.0, p1: 2.0 };
        assert_eq!(shift_at(&s, 0, 100), 0.01);
        assert_eq!(shift_at(&s, 50, 100), 1.0);
        assert_eq!(shift_at(&s, 100, 100), 100.0);
        assert_eq!(shift_at(&ShiftSchedule::Constant { alpha: 3.0 }, 7, 10), 3.0);
        assert!(ShiftSchedule::Varying { p0: 1.0, p1: 0.0 }.validate().is_err());
    }

    fn factor_for(u: Vec<f64>, src: Vec<f64>, p: f64, alpha: f64) -> Result<f64> {
        let mut t = Tape::new(&[]);
        let uv = t.constant(BatchMatrix::column(u));
        let f = deflation_factor(&mut t, &[uv], &[EvaluatedSource { fields: vec![src], power: p }], alpha)?;
        Ok(t.value(f).item())
    }

    #[test]
    fn factor_examples() {
        let mut t = Tape::new(&[]);
        let u = t.constant(BatchMatrix::column(vec![1.0]));
        let f = deflation_factor(&mut t, &[u], &[], 0.7).unwrap();
        assert_eq!(t.value(f).item(), 0.7);
        assert_eq!(factor_for(vec![1.0, -1.0], vec![0.0, 0.0], 2.0, 1.0).unwrap(), 2.0);
        assert!((factor_for(vec![0.1], vec![0.0], 2.0, 0.0).unwrap() - 100.0).abs() < 1e-12);
        assert!(matches!(factor_for(vec![0.5], vec![0.5], 2.0, 1.0), Err(Error::NumericDomain(_))));
    }
}
