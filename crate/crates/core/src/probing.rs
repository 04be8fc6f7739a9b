//! Structure-probing bases: `u_J = u + Σ_j c_j ξ_j(x)` with trainable `c_j`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::autodiff::{BatchMatrix, Tape, Var};
use crate::error::{Error, Result};
use crate::model::FieldModel;
use crate::network::{NetHandle, NetworkParams};
use crate::optimizer::AdamState;
use crate::rng::{derive_seed, SplitMix64};
use crate::sampler::{sample_interior, star_radius, Domain};
use crate::stencil::Steps;
use crate::wrappers::{annulus_phase, BoundaryWrapper};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ProbingFamily {
    /// `cos((2j-1) π (x-a) / (2(b-a)))`: zero slope at `a`, zero at `b`.
    CosineMixed1d { a: f64, b: f64 },
    /// `sin(j π (|x|-r)/(R-r))`: zero on both spheres.
    SineAnnulus { r: f64, big_r: f64 },
    /// `sin(k_j·x)`, `cos(k_j·x)` with `|k_j| = j`. Penalty mode only.
    Planewave { directions: Vec<Vec<f64>> },
    /// `sin(j π |x| / ρ(x))`: zero on the star-domain boundary.
    RadialSine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbingBasis {
    #[serde(flatten)]
    pub family: ProbingFamily,
    pub j: usize,
    /// `c_J` is drawn from `U(lo, hi)`; the others start at zero.
    pub c_range: (f64, f64),
}

impl ProbingBasis {
    pub fn cosine_mixed(a: f64, b: f64, j: usize, c_range: (f64, f64)) -> Self {
        Self { family: ProbingFamily::CosineMixed1d { a, b }, j, c_range }
    }

    pub fn sine_annulus(r: f64, big_r: f64, j: usize, c_range: (f64, f64)) -> Self {
        Self { family: ProbingFamily::SineAnnulus { r, big_r }, j, c_range }
    }

    pub fn radial_sine(j: usize, c_range: (f64, f64)) -> Self {
        Self { family: ProbingFamily::RadialSine, j, c_range }
    }

    /// Plane waves in `dim` dimensions with uniformly random directions.
    pub fn planewave(dim: usize, j: usize, c_range: (f64, f64), seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let directions = (0..j)
            .map(|_| loop {
                let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
                let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                if n > 1e-12 {
                    break v.into_iter().map(|c| c / n).collect();
                }
            })
            .collect();
        Self { family: ProbingFamily::Planewave { directions }, j, c_range }
    }

    /// Number of trainable coefficients.
    pub fn coeff_count(&self) -> usize {
        match self.family {
            ProbingFamily::Planewave { .. } => 2 * self.j,
            _ => self.j,
        }
    }

    /// Index of the coefficient drawn at random (`c_J`).
    pub fn leading_index(&self) -> usize {
        match self.family {
            ProbingFamily::Planewave { .. } => 2 * (self.j - 1),
            _ => self.j - 1,
        }
    }

    /// Reject families that would break the wrapper's boundary condition.
    pub fn validate(&self, wrapper: &BoundaryWrapper) -> Result<()> {
        if self.j == 0 {
            return Err(Error::config("probing needs J >= 1"));
        }
        if !(self.c_range.0 <= self.c_range.1) {
            return Err(Error::config(format!("probing range {:?} is empty", self.c_range)));
        }
        let ok = match (&self.family, wrapper) {
            (ProbingFamily::CosineMixed1d { a, b }, BoundaryWrapper::Mixed1d { a: wa, b: wb, .. }) => {
                a == wa && b == wb
            }
            (ProbingFamily::SineAnnulus { r, big_r }, BoundaryWrapper::Annulus { r: wr, big_r: wbr, .. }) => {
                r == wr && big_r == wbr
            }
            (ProbingFamily::RadialSine, BoundaryWrapper::StarDomain { .. }) => true,
            (ProbingFamily::Planewave { directions }, BoundaryWrapper::None) => directions.len() == self.j,
            (_, BoundaryWrapper::None) => true,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!(
                "probing family {:?} does not preserve the {:?} boundary condition",
                self.family, wrapper
            )))
        }
    }

    /// `batch x coeff_count` matrix of basis values `ξ_j(x_i)`.
    pub fn basis_matrix(&self, x: &BatchMatrix) -> BatchMatrix {
        let m = self.coeff_count();
        let mut data = Vec::with_capacity(x.rows() * m);
        for i in 0..x.rows() {
            let p = x.row(i);
            match &self.family {
                ProbingFamily::CosineMixed1d { a, b } => {
                    for j in 1..=self.j {
                        let w = (2 * j - 1) as f64 * PI / (2.0 * (b - a));
                        data.push((w * (p[0] - a)).cos());
                    }
                }
                ProbingFamily::SineAnnulus { r, big_r } => {
                    let phase = annulus_phase(p, *r, *big_r);
                    data.extend((1..=self.j).map(|j| (j as f64 * phase).sin()));
                }
                ProbingFamily::Planewave { directions } => {
                    for (j, k) in directions.iter().enumerate() {
                        let dot: f64 = k.iter().zip(p).map(|(k, x)| k * x).sum::<f64>() * (j + 1) as f64;
                        data.push(dot.sin());
                        data.push(dot.cos());
                    }
                }
                ProbingFamily::RadialSine => {
                    let s = p.iter().map(|v| v * v).sum::<f64>().sqrt() / star_radius(p);
                    data.extend((1..=self.j).map(|j| (j as f64 * PI * s).sin()));
                }
            }
        }
        BatchMatrix::new(x.rows(), m, data).expect("basis matrix shape")
    }
}

/// `base + Σ c_j ξ_j(x)` with `c` read from the network's extra scalars
/// starting at `first_extra`.
pub fn probe_output(
    tape: &mut Tape<'_>,
    base: Var,
    net: &NetHandle,
    first_extra: usize,
    x: &BatchMatrix,
    basis: &ProbingBasis,
) -> Result<Var> {
    let c = net.extras_block(tape, first_extra, basis.coeff_count())?;
    let xi = tape.constant(basis.basis_matrix(x));
    let sum = tape.affine(c, None, xi)?;
    tape.add(base, sum)
}

/// Initial coefficients: zeros except `c_J ~ U(lo, hi)`.
pub fn init_probing_coeffs(basis: &ProbingBasis, seed: u64) -> Vec<f64> {
    let mut c = vec![0.0; basis.coeff_count()];
    let mut rng = SplitMix64::new(seed);
    c[basis.leading_index()] = rng.uniform(basis.c_range.0, basis.c_range.1);
    c
}

/// Outcome of [`pretrain_to_target`].
#[derive(Debug, Clone, PartialEq)]
pub struct Pretrained {
    pub params: NetworkParams,
    /// Discrete L² of `u - target` on a fresh batch.
    pub fit_error: f64,
}

pub const PRETRAIN_ITERATIONS: usize = 500;
pub const PRETRAIN_LR: f64 = 1e-2;
const PRETRAIN_BATCH: usize = 512;
const FIT_CHECK_POINTS: usize = 4096;

/// Fit the wrapped field output to `target` by mean-square regression with Adam.
#[allow(clippy::too_many_arguments)]
pub fn pretrain_to_target(
    field: &FieldModel,
    params: NetworkParams,
    target: &dyn Fn(&BatchMatrix) -> Result<Vec<f64>>,
    domain: &Domain,
    steps: &Steps,
    iterations: usize,
    lr: f64,
    seed: u64,
) -> Result<Pretrained> {
    if params.spec != field.spec {
        return Err(Error::config("parameters do not match the field network"));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::config(format!("learning rate must be positive, got {lr}")));
    }
    let targets = |x: &BatchMatrix| -> Result<BatchMatrix> {
        let t = target(x)?;
        if t.len() != x.rows() {
            return Err(Error::config(format!("target gave {} values for {} points", t.len(), x.rows())));
        }
        Ok(BatchMatrix::column(t))
    };
    let mut values = params.values.clone();
    let mut adam = AdamState::new(values.len());
    for n in 0..iterations {
        let x = sample_interior(domain, PRETRAIN_BATCH, derive_seed(seed, n as u64))?.points;
        let mut tape = Tape::new(&values);
        let u = field.apply(&mut tape, 0, &x, steps)?;
        let g = tape.constant(targets(&x)?);
        let d = tape.sub(u, g)?;
        let loss = tape.mean_square(d)?;
        let l = tape.value(loss).item();
        if !l.is_finite() {
            return Err(Error::Training { iteration: n, message: format!("pretraining loss diverged to {l}") });
        }
        let grads = tape.backward(loss)?.into_flat();
        adam.step(&mut values, &grads, lr).map_err(|e| e.at_iteration(n))?;
    }
    let x = sample_interior(domain, FIT_CHECK_POINTS, derive_seed(seed, u64::MAX))?.points;
    let mut tape = Tape::new(&values);
    let u = field.apply(&mut tape, 0, &x, steps)?;
    let want = targets(&x)?;
    let diff: Vec<f64> = tape.value(u).data().iter().zip(want.data()).map(|(a, b)| a - b).collect();
    let fit_error = crate::sampler::discrete_l2(&diff)?;
    Ok(Pretrained { params: NetworkParams { values, ..params }, fit_error })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_first_mode() {
        let b = ProbingBasis::cosine_mixed(0.0, 1.0, 1, (-5.0, 5.0));
        let x = BatchMatrix::column(vec![0.0, 0.5, 1.0]);
        let m = b.basis_matrix(&x);
        assert_eq!(m.get(0, 0), 1.0);
        assert!((m.get(1, 0) - (PI / 4.0).cos()).abs() < 1e-15);
        assert!(m.get(2, 0).abs() < 1e-15);
        // ξ'(0) by central difference.
        let h = 1e-5;
        let d = b.basis_matrix(&BatchMatrix::column(vec![-h, h]));
        assert!(((d.get(1, 0) - d.get(0, 0)) / (2.0 * h)).abs() < 1e-12);
    }

    #[test]
    fn sine_annulus_vanishes_on_spheres() {
        let b = ProbingBasis::sine_annulus(1.0, 100.0, 6, (-1.0, 1.0));
        let x = BatchMatrix::from_rows(&[vec![0.0, 1.0], vec![-60.0, 80.0]]).unwrap();
        let m = b.basis_matrix(&x);
        assert!(m.data().iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn radial_sine_vanishes_on_star_boundary() {
        let b = ProbingBasis::radial_sine(3, (-1.0, 1.0));
        let dir = [0.3f64, 0.4, (1.0f64 - 0.25).sqrt()];
        let rho = star_radius(&dir);
        let x = BatchMatrix::from_rows(&[dir.iter().map(|c| c * rho).collect()]).unwrap();
        assert!(b.basis_matrix(&x).data().iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn init_rule() {
        let b = ProbingBasis::cosine_mixed(0.0, 1.0, 2, (-5.0, 5.0));
        let c = init_probing_coeffs(&b, 11);
        assert_eq!(c[0], 0.0);
        assert!(c[1] > -5.0 && c[1] < 5.0 && c[1] != 0.0);
        assert_eq!(c, init_probing_coeffs(&b, 11));
        let one = init_probing_coeffs(&ProbingBasis::sine_annulus(1.0, 2.0, 1, (-1.0, 1.0)), 2);
        assert_eq!(one.len(), 1);
        assert!(one[0].abs() < 1.0);
    }

    #[test]
    fn compatibility() {
        let mixed = BoundaryWrapper::mixed(0.0, 1.0, 0.0, 0.0);
        assert!(ProbingBasis::cosine_mixed(0.0, 1.0, 1, (-5.0, 5.0)).validate(&mixed).is_ok());
        assert!(ProbingBasis::sine_annulus(1.0, 2.0, 1, (-1.0, 1.0)).validate(&mixed).is_err());
        let pw = ProbingBasis::planewave(2, 3, (-1.0, 1.0), 4);
        assert_eq!(pw.coeff_count(), 6);
        let ann = BoundaryWrapper::Annulus { r: 1.0, big_r: 2.0, value: 1.0 };
        assert!(pw.validate(&ann).is_err());
        assert!(pw.validate(&BoundaryWrapper::None).is_ok());
    }

    fn annulus_field() -> FieldModel {
        use crate::network::ActivationKind;
        FieldModel::new(2, 2, 8, ActivationKind::Tanh, BoundaryWrapper::Annulus { r: 1.0, big_r: 2.0, value: 1.0 }, None)
    }

    #[test]
    fn pretrain_zero_iterations_is_identity() {
        let f = annulus_field();
        let p = f.init(3, crate::network::InitScheme::Xavier).unwrap();
        let d = Domain::Annulus { dim: 2, r: 1.0, big_r: 2.0 };
        let out = pretrain_to_target(&f, p.clone(), &|x| Ok(vec![2.0; x.rows()]), &d, &Steps([1e-4; 4]), 0, 1e-2, 1).unwrap();
        assert_eq!(out.params, p);
    }

    #[test]
    fn pretrain_onto_itself_fits_exactly() {
        let f = annulus_field();
        let p = f.init(5, crate::network::InitScheme::Xavier).unwrap();
        let d = Domain::Annulus { dim: 2, r: 1.0, big_r: 2.0 };
        let steps = Steps([1e-4; 4]);
        let (ff, pv) = (f.clone(), p.values.clone());
        let own = move |x: &BatchMatrix| Ok(crate::model::Model::single(ff.clone()).values(&pv, x, &steps)?.remove(0));
        let out = pretrain_to_target(&f, p, &own, &d, &steps, 0, 1e-2, 1).unwrap();
        assert!(out.fit_error < 1e-14, "{}", out.fit_error);
    }
}
