//! Wrapped networks: a raw FNN composed with a boundary wrapper and an
//! optional probing basis, one per unknown field.
//!
//! A [`Model`] owns the layout of the concatenated parameter vector
//! `θ = [θ_field0, θ_field1, …]`; each field's block is a complete
//! [`NetworkParams`] vector whose extra scalars hold the wrapper constants
//! first and the probing coefficients after them.

use serde::{Deserialize, Serialize};

use crate::autodiff::{BatchMatrix, Tape, Var};
use crate::error::{Error, Result};
use crate::network::{init_params, ActivationKind, InitScheme, NetHandle, NetworkParams, NetworkSpec};
use crate::probing::{init_probing_coeffs, probe_output, ProbingBasis};
use crate::rng::derive_seed;
use crate::stencil::Steps;
use crate::wrappers::BoundaryWrapper;

const PROBING_SEED_TAG: u64 = 0x7072_6f62;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldModel {
    pub spec: NetworkSpec,
    pub wrapper: BoundaryWrapper,
    pub probing: Option<ProbingBasis>,
    /// Inputs are divided by this before entering the raw network.
    #[serde(default = "unit_scale")]
    pub input_scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl FieldModel {
    pub fn new(
        input_dim: usize,
        depth: usize,
        width: usize,
        activation: ActivationKind,
        wrapper: BoundaryWrapper,
        probing: Option<ProbingBasis>,
    ) -> Self {
        let extra = wrapper.scalar_count() + probing.as_ref().map_or(0, |p| p.coeff_count());
        Self {
            spec: NetworkSpec::new(input_dim, depth, width, activation).with_extra_scalars(extra),
            wrapper,
            probing,
            input_scale: 1.0,
        }
    }

    pub fn with_input_scale(mut self, scale: f64) -> Self {
        self.input_scale = scale;
        self
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if !(self.input_scale > 0.0 && self.input_scale.is_finite()) {
            return Err(Error::config(format!("input scale must be positive, got {}", self.input_scale)));
        }
        let want = self.wrapper.scalar_count() + self.probing.as_ref().map_or(0, |p| p.coeff_count());
        if self.spec.extra_scalars != want {
            return Err(Error::config(format!(
                "network carries {} extra scalars, wrapper and probing need {want}",
                self.spec.extra_scalars
            )));
        }
        if let Some(p) = &self.probing {
            p.validate(&self.wrapper)?;
        }
        Ok(())
    }

    pub fn handle(&self, base: usize) -> NetHandle {
        NetHandle::new(self.spec, base).with_input_scale(self.input_scale)
    }

    /// Record `u_J(x)` for the field stored at `base` in the tape's parameters.
    pub fn apply(&self, tape: &mut Tape<'_>, base: usize, x: &BatchMatrix, steps: &Steps) -> Result<Var> {
        let net = self.handle(base);
        let u = self.wrapper.apply(tape, &net, x, steps)?;
        match &self.probing {
            Some(basis) => probe_output(tape, u, &net, self.wrapper.scalar_count(), x, basis),
            None => Ok(u),
        }
    }

    /// Network initialization plus probing coefficients from a derived seed.
    pub fn init(&self, seed: u64, scheme: InitScheme) -> Result<NetworkParams> {
        let mut p = init_params(self.spec, seed, scheme)?;
        if let Some(basis) = &self.probing {
            let c = init_probing_coeffs(basis, derive_seed(seed, PROBING_SEED_TAG));
            let first = self.wrapper.scalar_count();
            p.extras_mut()[first..first + c.len()].copy_from_slice(&c);
        }
        Ok(p)
    }

    /// Realized initial `c_J`, if probing is enabled.
    pub fn initial_c_j(&self, params: &NetworkParams) -> Option<f64> {
        self.probing
            .as_ref()
            .map(|b| params.extras()[self.wrapper.scalar_count() + b.leading_index()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub fields: Vec<FieldModel>,
}

impl Model {
    pub fn new(fields: Vec<FieldModel>) -> Self {
        Self { fields }
    }

    pub fn single(field: FieldModel) -> Self {
        Self { fields: vec![field] }
    }

    pub fn field_count(&self) -> usize {
        self.fields.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.fields.is_empty() {
            return Err(Error::config("model has no fields"));
        }
        self.fields.iter().try_for_each(FieldModel::validate)
    }

    pub fn param_count(&self) -> usize {
        self.fields.iter().map(FieldModel::param_count).sum()
    }

    pub fn field_base(&self, i: usize) -> usize {
        self.fields[..i].iter().map(FieldModel::param_count).sum()
    }

    pub fn field_range(&self, i: usize) -> std::ops::Range<usize> {
        let b = self.field_base(i);
        b..b + self.fields[i].param_count()
    }

    /// Per-field initialization with seeds derived from `seed` and the field index.
    pub fn init(&self, seed: u64, scheme: InitScheme) -> Result<Vec<NetworkParams>> {
        self.validate()?;
        self.fields
            .iter()
            .enumerate()
            .map(|(i, f)| f.init(if i == 0 { seed } else { derive_seed(seed, i as u64) }, scheme))
            .collect()
    }

    pub fn concat(&self, parts: &[NetworkParams]) -> Result<Vec<f64>> {
        if parts.len() != self.fields.len() {
            return Err(Error::config(format!("{} parameter blocks for {} fields", parts.len(), self.fields.len())));
        }
        let mut theta = Vec::with_capacity(self.param_count());
        for (p, f) in parts.iter().zip(&self.fields) {
            if p.spec != f.spec {
                return Err(Error::config("parameter block does not match its field network"));
            }
            theta.extend_from_slice(&p.values);
        }
        Ok(theta)
    }

    /// Split `theta` into per-field parameter records tagged with `seed` and `scheme`.
    pub fn split(&self, theta: &[f64], seed: u64, scheme: InitScheme) -> Result<Vec<NetworkParams>> {
        self.check_len(theta)?;
        Ok(self
            .fields
            .iter()
            .enumerate()
            .map(|(i, f)| NetworkParams {
                spec: f.spec,
                values: theta[self.field_range(i)].to_vec(),
                seed,
                scheme,
            })
            .collect())
    }

    pub fn check_len(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(Error::config(format!(
                "parameter vector has {} entries, model needs {}",
                theta.len(),
                self.param_count()
            )));
        }
        Ok(())
    }

    /// Record every field's output at `x`.
    pub fn outputs(&self, tape: &mut Tape<'_>, x: &BatchMatrix, steps: &Steps) -> Result<Vec<Var>> {
        (0..self.fields.len())
            .map(|i| self.fields[i].apply(tape, self.field_base(i), x, steps))
            .collect()
    }

    /// Plain field values at `x` (one vector per field).
    pub fn values(&self, theta: &[f64], x: &BatchMatrix, steps: &Steps) -> Result<Vec<Vec<f64>>> {
        self.check_len(theta)?;
        let mut tape = Tape::new(theta);
        let outs = self.outputs(&mut tape, x, steps)?;
        Ok(outs.into_iter().map(|v| tape.value(v).data().to_vec()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stencil::StencilConfig;

    #[test]
    fn zero_probing_matches_unprobed() {
        let w = BoundaryWrapper::mixed(0.0, 1.0, 0.0, 0.0);
        let plain = FieldModel::new(1, 2, 5, ActivationKind::Tanh, w, None);
        let probed = FieldModel::new(
            1,
            2,
            5,
            ActivationKind::Tanh,
            w,
            Some(ProbingBasis::cosine_mixed(0.0, 1.0, 2, (-5.0, 5.0))),
        );
        let p = plain.init(4, InitScheme::Xavier).unwrap();
        let mut q = NetworkParams::zeros(probed.spec);
        let n = p.values.len();
        q.values[..n].copy_from_slice(&p.values);
        let x = BatchMatrix::column(vec![0.1, 0.5, 0.9]);
        let steps = StencilConfig::default().steps(1.0);
        let a = Model::single(plain).values(&p.values, &x, &steps).unwrap();
        let b = Model::single(probed).values(&q.values, &x, &steps).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn layout_and_split() {
        let f = FieldModel::new(3, 1, 4, ActivationKind::Tanh, BoundaryWrapper::StarDomain { value: 1.0 }, None);
        let g = FieldModel::new(3, 1, 4, ActivationKind::Tanh, BoundaryWrapper::StarDomain { value: 0.0 }, None);
        let m = Model::new(vec![f, g]);
        let parts = m.init(9, InitScheme::Xavier).unwrap();
        assert_ne!(parts[0].values, parts[1].values);
        let theta = m.concat(&parts).unwrap();
        assert_eq!(theta.len(), m.param_count());
        assert_eq!(m.field_range(1).start, parts[0].values.len());
        let back = m.split(&theta, 9, InitScheme::Xavier).unwrap();
        assert_eq!(back[1].values, parts[1].values);
        assert!(m.values(&theta[1..], &BatchMatrix::zeros(1, 3), &StencilConfig::default().steps(1.0)).is_err());
    }

    #[test]
    fn probing_seed_recorded() {
        let f = FieldModel::new(
            2,
            1,
            3,
            ActivationKind::ReluCubed,
            BoundaryWrapper::Annulus { r: 1.0, big_r: 100.0, value: 1.0 },
            Some(ProbingBasis::sine_annulus(1.0, 100.0, 4, (-1.0, 1.0))),
        );
        let p = f.init(1, InitScheme::UniformFanin).unwrap();
        let c = f.initial_c_j(&p).unwrap();
        assert!(c.abs() < 1.0 && c != 0.0);
        assert_eq!(&p.extras()[..3], &[0.0, 0.0, 0.0]);
    }
}
