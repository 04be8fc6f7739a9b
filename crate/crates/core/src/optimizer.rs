//! Adam with an exponentially decaying learning rate, and the training loop.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::deflation::{evaluate_sources, nd_loss, nd_penalty_loss, shift_at, system_nd_loss, DeflationSource, ShiftSchedule};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::problems::Problem;
use crate::rng::derive_seed;
use crate::sampler::{sample_boundary, sample_interior};

const BOUNDARY_TAG: u64 = 0x626f_756e_6461_7279;

/// `τ_n = 10^{q0 + n (q1 - q0) / N_I}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub q0: f64,
    pub q1: f64,
}

impl LrSchedule {
    pub fn new(q0: f64, q1: f64) -> Self {
        Self { q0, q1 }
    }

    /// From a table range `[10^q1, 10^q0]`.
    pub fn from_range(lo: f64, hi: f64) -> Self {
        Self { q0: hi.log10(), q1: lo.log10() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q0 >= self.q1) || !self.q0.is_finite() || !self.q1.is_finite() {
            return Err(Error::config(format!("learning-rate powers must decay, got q0={} q1={}", self.q0, self.q1)));
        }
        Ok(())
    }

    pub fn lr_at(&self, n: usize, n_total: usize) -> f64 {
        if n_total == 0 {
            return 10f64.powf(self.q0);
        }
        10f64.powf(self.q0 + n as f64 * (self.q1 - self.q0) / n_total as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// One bias-corrected Adam update of `params`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::config(format!(
                "adam state has {} entries, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Training { iteration: self.t as usize, message: format!("non-finite gradient at parameter {i}") });
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }
}

pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    state.step(params, grads, lr)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LossMode {
    Ls,
    Penalty { lambda: f64 },
    Nd,
    NdPenalty { lambda: f64 },
    SystemNd,
}

impl LossMode {
    pub fn is_deflated(&self) -> bool {
        matches!(self, LossMode::Nd | LossMode::NdPenalty { .. } | LossMode::SystemNd)
    }

    pub fn penalty(&self) -> Option<f64> {
        match *self {
            LossMode::Penalty { lambda } | LossMode::NdPenalty { lambda } => Some(lambda),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch: usize,
    pub boundary_batch: usize,
    pub lr: LrSchedule,
    pub shift: ShiftSchedule,
    pub mode: LossMode,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(iterations: usize, batch: usize, lr: LrSchedule, mode: LossMode, seed: u64) -> Self {
        Self { iterations, batch, boundary_batch: 64, lr, shift: ShiftSchedule::default(), mode, seed }
    }

    pub fn with_shift(mut self, shift: ShiftSchedule) -> Self {
        self.shift = shift;
        self
    }

    pub fn validate(&self, problem: &Problem, model: &Model, sources: &[DeflationSource]) -> Result<()> {
        self.lr.validate()?;
        self.shift.validate()?;
        if self.batch == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if !self.mode.is_deflated() && !sources.is_empty() {
            return Err(Error::config("deflation sources given to an undeflated loss mode"));
        }
        if let Some(l) = self.mode.penalty() {
            if !(l >= 0.0) {
                return Err(Error::config(format!("penalty weight must be nonnegative, got {l}")));
            }
            if self.boundary_batch == 0 && problem.point_conditions().is_empty() {
                return Err(Error::config("penalty mode needs a boundary batch"));
            }
        }
        if self.mode == LossMode::SystemNd && problem.field_count() != 2 {
            return Err(Error::config(format!("system_nd needs a two-field problem, {} has one", problem.name)));
        }
        if model.field_count() != problem.field_count() {
            return Err(Error::config("model and problem disagree on the number of fields"));
        }
        for s in sources {
            if s.model.field_count() != problem.field_count() {
                return Err(Error::config(format!("source {} has the wrong number of fields", s.label)));
            }
        }
        model.validate()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub loss: Vec<f64>,
    /// Root of the undeflated loss.
    pub residual: Vec<f64>,
    pub factor: Vec<f64>,
    pub alpha: Vec<f64>,
    pub lr: Vec<f64>,
    pub params: Vec<f64>,
    pub wall_time: f64,
}

impl TrainReport {
    pub fn len(&self) -> usize {
        self.loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss.is_empty()
    }

    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "iteration,loss,residual,factor,alpha,lr")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                i, self.loss[i], self.residual[i], self.factor[i], self.alpha[i], self.lr[i]
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        self.write_csv(&mut f).map_err(|e| Error::io(path, e))
    }
}

/// Run `cfg.iterations` Adam steps from `theta`, drawing a fresh batch each iteration.
pub fn train(problem: &Problem, model: &Model, theta: Vec<f64>, cfg: &TrainConfig, sources: &[DeflationSource]) -> Result<TrainReport> {
    cfg.validate(problem, model, sources)?;
    model.check_len(&theta)?;
    let start = Instant::now();
    let domain = problem.domain();
    let n_total = cfg.iterations;
    let mut params = theta;
    let mut adam = AdamState::new(params.len());
    let mut report = TrainReport {
        loss: Vec::with_capacity(n_total),
        residual: Vec::with_capacity(n_total),
        factor: Vec::with_capacity(n_total),
        alpha: Vec::with_capacity(n_total),
        lr: Vec::with_capacity(n_total),
        params: Vec::new(),
        wall_time: 0.0,
    };
    let boundary_needed = cfg.mode.penalty().is_some() && problem.point_conditions().is_empty();
    for n in 0..n_total {
        let step = |params: &[f64]| -> Result<(f64, f64, f64, Vec<f64>)> {
            let x = sample_interior(&domain, cfg.batch, derive_seed(cfg.seed, n as u64))?.points;
            let boundary = if boundary_needed {
                sample_boundary(&domain, cfg.boundary_batch, derive_seed(cfg.seed ^ BOUNDARY_TAG, n as u64))?.points
            } else {
                crate::autodiff::BatchMatrix::zeros(0, domain.dim())
            };
            let alpha = shift_at(&cfg.shift, n, n_total);
            let evaluated = evaluate_sources(sources, problem, &x)?;
            let mut tape = Tape::new(params);
            let nodes = match cfg.mode {
                LossMode::Ls | LossMode::Nd => nd_loss(&mut tape, problem, model, &evaluated, &x, if cfg.mode == LossMode::Ls { 1.0 } else { alpha })?,
                LossMode::SystemNd => system_nd_loss(&mut tape, problem, model, &evaluated, &x, alpha)?,
                LossMode::Penalty { lambda } => nd_penalty_loss(&mut tape, problem, model, &[], &x, &boundary, lambda, 1.0)?,
                LossMode::NdPenalty { lambda } => nd_penalty_loss(&mut tape, problem, model, &evaluated, &x, &boundary, lambda, alpha)?,
            };
            let loss = tape.value(nodes.loss).item();
            let base = tape.value(nodes.base).item();
            let factor = tape.value(nodes.factor).item();
            if !loss.is_finite() {
                return Err(Error::Training { iteration: n, message: format!("loss diverged to {loss}") });
            }
            let grads = tape.backward(nodes.loss)?.into_flat();
            Ok((loss, base.sqrt(), factor, grads))
        };
        let (loss, residual, factor, grads) = step(&params).map_err(|e| e.at_iteration(n))?;
        let lr = cfg.lr.lr_at(n, n_total);
        adam.step(&mut params, &grads, lr).map_err(|e| e.at_iteration(n))?;
        report.loss.push(loss);
        report.residual.push(residual);
        report.factor.push(factor);
        report.alpha.push(shift_at(&cfg.shift, n, n_total));
        report.lr.push(lr);
        if n % 500 == 0 || n + 1 == n_total {
            log::debug!("{} iter {n}: loss {loss:.3e} residual {residual:.3e} factor {factor:.3e}", problem.name);
        }
    }
    report.params = params;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_examples() {
        let s = LrSchedule::from_range(1e-3, 1e-2);
        assert_eq!(s.lr_at(0, 10_000), 1e-2);
        assert!((s.lr_at(10_000, 10_000) - 1e-3).abs() < 1e-18);
        assert!((s.lr_at(5_000, 10_000) - 10f64.powf(-2.5)).abs() < 1e-15);
        assert!(LrSchedule::new(-3.0, -2.0).validate().is_err());
    }

    #[test]
    fn adam_first_step() {
        let mut s = AdamState::new(1);
        let mut p = [0.0];
        s.step(&mut p, &[0.5], 0.1).unwrap();
        let want = -0.1 * 0.5 / (0.5 + 1e-8);
        assert!((p[0] - want).abs() < 1e-15, "{}", p[0]);
        assert!((p[0] + 0.099999998).abs() < 1e-9);
    }

    #[test]
    fn adam_zero_gradient() {
        let mut s = AdamState::new(2);
        let mut p = [1.0, -2.0];
        s.step(&mut p, &[0.3, 0.0], 0.1).unwrap();
        let (m1, v1) = (s.m[0], s.v[0]);
        let before = p;
        s.step(&mut p, &[0.0, 0.0], 0.1).unwrap();
        assert_eq!(p[1], before[1]);
        assert_eq!(s.m[0], 0.9 * m1);
        assert_eq!(s.v[0], 0.999 * v1);
        assert!(s.step(&mut p, &[f64::NAN, 0.0], 0.1).is_err());
    }
}
