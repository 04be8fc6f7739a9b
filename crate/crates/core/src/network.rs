//! Fully connected feed-forward networks `a^T h_L ∘ … ∘ h_1(x)` with
//! `h_l(y) = σ(W_l y + b_l)`.
//!
//! Parameters live in one flat vector laid out as
//! `W_1, b_1, …, W_L, b_L, a, extra scalars`. Extra scalars are trainable
//! constants used by boundary wrappers and probing bases.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{Activation, BatchMatrix, ParamId, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    ReluCubed,
    Tanh,
}

impl From<ActivationKind> for Activation {
    fn from(k: ActivationKind) -> Self {
        match k {
            ActivationKind::ReluCubed => Activation::ReluCubed,
            ActivationKind::Tanh => Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// `W, b ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    UniformFanin,
    /// `W, b ~ U(-sqrt(fan_in), sqrt(fan_in))`, the range exactly as printed in
    /// the experiment description. Diverges for wide layers; kept for
    /// comparison runs.
    UniformFaninLiteral,
    /// `W ~ N(0, 1/fan_in)`, `b = 0`.
    Xavier,
    /// `W ~ N(0, 2/(fan_in + fan_out))`, `b ~ N(0, 2/fan_in)`.
    He,
}

impl InitScheme {
    fn code(self) -> u8 {
        match self {
            InitScheme::UniformFanin => 0,
            InitScheme::UniformFaninLiteral => 1,
            InitScheme::Xavier => 2,
            InitScheme::He => 3,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => InitScheme::UniformFanin,
            1 => InitScheme::UniformFaninLiteral,
            2 => InitScheme::Xavier,
            3 => InitScheme::He,
            _ => return None,
        })
    }
}

/// Architecture of one network: `depth` hidden layers of uniform `width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub depth: usize,
    pub width: usize,
    pub activation: ActivationKind,
    pub extra_scalars: usize,
}

/// Where each block of a [`NetworkSpec`] sits inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OffsetTable {
    pub layers: Vec<(ParamId, ParamId)>,
    pub output: ParamId,
    pub extras: ParamId,
}

impl OffsetTable {
    pub fn shifted(&self, base: usize) -> Self {
        let s = |p: ParamId| ParamId {
            offset: p.offset + base,
            ..p
        };
        Self {
            layers: self.layers.iter().map(|&(w, b)| (s(w), s(b))).collect(),
            output: s(self.output),
            extras: s(self.extras),
        }
    }

    pub fn total(&self) -> usize {
        self.extras.offset + self.extras.len()
    }
}

impl NetworkSpec {
    pub fn new(input_dim: usize, depth: usize, width: usize, activation: ActivationKind) -> Self {
        Self {
            input_dim,
            depth,
            width,
            activation,
            extra_scalars: 0,
        }
    }

    pub fn with_extra_scalars(mut self, n: usize) -> Self {
        self.extra_scalars = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.depth == 0 || self.width == 0 {
            return Err(Error::config(format!(
                "network needs d, L, N >= 1, got d={}, L={}, N={}",
                self.input_dim, self.depth, self.width
            )));
        }
        Ok(())
    }

    /// Number of network weights, excluding extra scalars.
    pub fn weight_count(&self) -> usize {
        let (d, n, l) = (self.input_dim, self.width, self.depth);
        n * d + n + (l - 1) * (n * n + n) + n
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.extra_scalars
    }

    pub fn offsets(&self) -> OffsetTable {
        let mut layers = Vec::with_capacity(self.depth);
        let mut at = 0;
        let mut fan_in = self.input_dim;
        for _ in 0..self.depth {
            let w = ParamId {
                offset: at,
                rows: self.width,
                cols: fan_in,
            };
            at += w.len();
            let b = ParamId {
                offset: at,
                rows: 1,
                cols: self.width,
            };
            at += b.len();
            layers.push((w, b));
            fan_in = self.width;
        }
        let output = ParamId {
            offset: at,
            rows: 1,
            cols: self.width,
        };
        at += output.len();
        let extras = ParamId {
            offset: at,
            rows: 1,
            cols: self.extra_scalars,
        };
        OffsetTable {
            layers,
            output,
            extras,
        }
    }
}

/// Flat parameter vector of one network plus the provenance of its initial values.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub spec: NetworkSpec,
    pub values: Vec<f64>,
    pub seed: u64,
    pub scheme: InitScheme,
}

impl NetworkParams {
    pub fn zeros(spec: NetworkSpec) -> Self {
        Self {
            spec,
            values: vec![0.0; spec.param_count()],
            seed: 0,
            scheme: InitScheme::UniformFanin,
        }
    }

    pub fn extras(&self) -> &[f64] {
        &self.values[self.spec.offsets().extras.range()]
    }

    pub fn extras_mut(&mut self) -> &mut [f64] {
        let r = self.spec.offsets().extras.range();
        &mut self.values[r]
    }

    /// Bias of hidden layer `layer` (0-based).
    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let r = self.spec.offsets().layers[layer].1.range();
        &mut self.values[r]
    }
}

/// Draw initial parameters. Extra scalars start at zero.
pub fn init_params(spec: NetworkSpec, seed: u64, scheme: InitScheme) -> Result<NetworkParams> {
    spec.validate()?;
    let mut rng = SplitMix64::new(seed);
    let table = spec.offsets();
    let mut values = vec![0.0; spec.param_count()];
    let blocks = table
        .layers
        .iter()
        .map(|&(w, b)| (w, Some(b)))
        .chain(std::iter::once((table.output, None)));
    for (w, b) in blocks {
        let fan_in = w.cols as f64;
        let fan_out = w.rows as f64;
        let (w_draw, b_draw): (Box<dyn Fn(&mut SplitMix64) -> f64>, Box<dyn Fn(&mut SplitMix64) -> f64>) =
            match scheme {
                InitScheme::UniformFanin => {
                    let r = 1.0 / fan_in.sqrt();
                    (Box::new(move |g| g.uniform(-r, r)), Box::new(move |g| g.uniform(-r, r)))
                }
                InitScheme::UniformFaninLiteral => {
                    let r = fan_in.sqrt();
                    (Box::new(move |g| g.uniform(-r, r)), Box::new(move |g| g.uniform(-r, r)))
                }
                InitScheme::Xavier => {
                    let s = (1.0 / fan_in).sqrt();
                    (Box::new(move |g| s * g.normal()), Box::new(|_| 0.0))
                }
                InitScheme::He => {
                    let sw = (2.0 / (fan_in + fan_out)).sqrt();
                    let sb = (2.0 / fan_in).sqrt();
                    (Box::new(move |g| sw * g.normal()), Box::new(move |g| sb * g.normal()))
                }
            };
        for v in &mut values[w.range()] {
            *v = w_draw(&mut rng);
        }
        if let Some(b) = b {
            for v in &mut values[b.range()] {
                *v = b_draw(&mut rng);
            }
        }
    }
    Ok(NetworkParams {
        spec,
        values,
        seed,
        scheme,
    })
}

/// Record the network on `tape`, reading parameters at `base` in the tape's
/// flat vector. Returns a `batch x 1` node.
pub fn forward(tape: &mut Tape<'_>, spec: &NetworkSpec, base: usize, x: Var) -> Result<Var> {
    let (_, cols) = tape.shape(x);
    if cols != spec.input_dim {
        return Err(Error::config(format!(
            "network expects {} input columns, got {cols}",
            spec.input_dim
        )));
    }
    let table = spec.offsets().shifted(base);
    let act = Activation::from(spec.activation);
    let mut h = x;
    for &(w, b) in &table.layers {
        let w = tape.param(w)?;
        let b = tape.param(b)?;
        let z = tape.affine(w, Some(b), h)?;
        h = tape.activation(act, z);
    }
    let a = tape.param(table.output)?;
    tape.affine(a, None, h)
}

/// A network placed at offset `base` of a tape's parameter vector. Inputs
/// are divided by `input_scale` before the first layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetHandle {
    pub spec: NetworkSpec,
    pub base: usize,
    pub input_scale: f64,
}

impl NetHandle {
    pub fn new(spec: NetworkSpec, base: usize) -> Self {
        Self { spec, base, input_scale: 1.0 }
    }

    pub fn with_input_scale(mut self, scale: f64) -> Self {
        self.input_scale = scale;
        self
    }

    /// Raw network output at the rows of `x`.
    pub fn eval(&self, tape: &mut Tape<'_>, x: &BatchMatrix) -> Result<Var> {
        let xv = if self.input_scale == 1.0 {
            tape.constant(x.clone())
        } else {
            let s = self.input_scale;
            tape.constant(x.map(|v| v / s))
        };
        forward(tape, &self.spec, self.base, xv)
    }

    /// Raw network output at a single point, as a `1 x 1` node.
    pub fn eval_point(&self, tape: &mut Tape<'_>, point: &[f64]) -> Result<Var> {
        self.eval(tape, &BatchMatrix::new(1, point.len(), point.to_vec())?)
    }

    /// The `i`-th extra trainable scalar as a `1 x 1` node.
    pub fn extra(&self, tape: &mut Tape<'_>, i: usize) -> Result<Var> {
        self.extras_block(tape, i, 1)
    }

    /// Extra scalars `start..start+len` as a `1 x len` node.
    pub fn extras_block(&self, tape: &mut Tape<'_>, start: usize, len: usize) -> Result<Var> {
        if len == 0 || start + len > self.spec.extra_scalars {
            return Err(Error::config(format!(
                "extra scalars {start}..{} requested, network has {}",
                start + len,
                self.spec.extra_scalars
            )));
        }
        let e = self.spec.offsets().extras;
        tape.param(ParamId {
            offset: self.base + e.offset + start,
            rows: 1,
            cols: len,
        })
    }
}

const MAGIC: &[u8; 8] = b"NNDFPRM\0";
const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 56;

fn checksum(payload: &[u8]) -> [u8; 8] {
    let digest = Sha256::digest(payload);
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    out
}

/// Write a parameter file.
///
/// Layout (all integers little-endian), 56-byte header then payload:
///
/// | offset | size | field                                     |
/// |-------:|-----:|-------------------------------------------|
/// | 0      | 8    | magic `NNDFPRM\0`                         |
/// | 8      | 4    | format version (1)                        |
/// | 12     | 4    | input dimension d                         |
/// | 16     | 4    | depth L                                   |
/// | 20     | 4    | width N                                   |
/// | 24     | 1    | activation (0 relu_cubed, 1 tanh)         |
/// | 25     | 1    | init scheme (0 fan-in, 1 literal, 2 xavier, 3 he) |
/// | 26     | 2    | reserved, zero                            |
/// | 28     | 4    | extra scalar count                        |
/// | 32     | 8    | init seed                                 |
/// | 40     | 8    | value count n                             |
/// | 48     | 8    | first 8 bytes of SHA-256 of the payload   |
/// | 56     | 8n   | values as IEEE-754 binary64               |
pub fn save_params(path: &Path, params: &NetworkParams) -> Result<()> {
    let spec = &params.spec;
    if params.values.len() != spec.param_count() {
        return Err(Error::config("parameter vector length disagrees with spec"));
    }
    let mut payload = Vec::with_capacity(params.values.len() * 8);
    for v in &params.values {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + payload.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for n in [spec.input_dim, spec.depth, spec.width] {
        buf.extend_from_slice(&(n as u32).to_le_bytes());
    }
    buf.push(match spec.activation {
        ActivationKind::ReluCubed => 0,
        ActivationKind::Tanh => 1,
    });
    buf.push(params.scheme.code());
    buf.extend_from_slice(&[0, 0]);
    buf.extend_from_slice(&(spec.extra_scalars as u32).to_le_bytes());
    buf.extend_from_slice(&params.seed.to_le_bytes());
    buf.extend_from_slice(&(params.values.len() as u64).to_le_bytes());
    buf.extend_from_slice(&checksum(&payload));
    buf.extend_from_slice(&payload);
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Read a parameter file, optionally requiring a specific architecture.
pub fn load_params(path: &Path, expected: Option<&NetworkSpec>) -> Result<NetworkParams> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    if buf.len() < HEADER_LEN || &buf[..8] != MAGIC {
        return Err(Error::io(path, "not a parameter file (bad magic or short header)"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
    let version = u32_at(8);
    if version != FORMAT_VERSION {
        return Err(Error::io(
            path,
            format!("format version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    let activation = match buf[24] {
        0 => ActivationKind::ReluCubed,
        1 => ActivationKind::Tanh,
        c => return Err(Error::io(path, format!("unknown activation code {c}"))),
    };
    let scheme = InitScheme::from_code(buf[25])
        .ok_or_else(|| Error::io(path, format!("unknown init scheme code {}", buf[25])))?;
    let spec = NetworkSpec {
        input_dim: u32_at(12) as usize,
        depth: u32_at(16) as usize,
        width: u32_at(20) as usize,
        activation,
        extra_scalars: u32_at(28) as usize,
    };
    let seed = u64_at(32);
    let n = u64_at(40) as usize;
    let stored_sum: [u8; 8] = buf[48..56].try_into().unwrap();
    let payload = &buf[HEADER_LEN..];
    if payload.len() != n * 8 || checksum(payload) != stored_sum {
        return Err(Error::io(path, "checksum failure"));
    }
    if n != spec.param_count() {
        return Err(Error::io(path, "value count disagrees with stored spec"));
    }
    if let Some(want) = expected {
        if *want != spec {
            return Err(Error::config(format!(
                "parameter file holds {spec:?}, expected {want:?}"
            )));
        }
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(NetworkParams {
        spec,
        values,
        seed,
        scheme,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(d: usize, l: usize, n: usize) -> NetworkSpec {
        NetworkSpec::new(d, l, n, ActivationKind::ReluCubed)
    }

    #[test]
    fn full_scale_parameter_count() {
        assert_eq!(spec(1, 3, 100).param_count(), 20_500);
        assert_eq!(spec(1, 3, 100).with_extra_scalars(2).param_count(), 20_502);
    }

    #[test]
    fn init_is_deterministic() {
        let s = spec(2, 2, 8);
        for scheme in [InitScheme::UniformFanin, InitScheme::Xavier, InitScheme::He] {
            let a = init_params(s, 5, scheme).unwrap();
            let b = init_params(s, 5, scheme).unwrap();
            assert_eq!(a.values, b.values);
            let c = init_params(s, 6, scheme).unwrap();
            assert_ne!(a.values, c.values);
        }
    }

    #[test]
    fn xavier_biases_zero() {
        let s = spec(3, 3, 10);
        let p = init_params(s, 1, InitScheme::Xavier).unwrap();
        for (_, b) in s.offsets().layers {
            assert!(p.values[b.range()].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn fanin_bound_for_width_100() {
        let s = spec(1, 3, 100);
        let p = init_params(s, 3, InitScheme::UniformFanin).unwrap();
        let t = s.offsets();
        for &(w, _) in &t.layers[1..] {
            assert!(p.values[w.range()].iter().all(|v| v.abs() <= 0.1));
        }
        assert!(p.values[t.output.range()].iter().all(|v| v.abs() <= 0.1));
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(init_params(spec(0, 1, 1), 0, InitScheme::Xavier).is_err());
    }

    #[test]
    fn zero_params_give_zero_output_and_right_shape() {
        let s = spec(2, 3, 5);
        let p = NetworkParams::zeros(s);
        let mut t = Tape::new(&p.values);
        let x = t.constant(BatchMatrix::filled(7, 2, 0.3));
        let y = forward(&mut t, &s, 0, x).unwrap();
        assert_eq!(t.shape(y), (7, 1));
        assert!(t.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_rejects_wrong_input_width() {
        let s = spec(2, 1, 3);
        let p = NetworkParams::zeros(s);
        let mut t = Tape::new(&p.values);
        let x = t.constant(BatchMatrix::zeros(4, 3));
        assert!(forward(&mut t, &s, 0, x).is_err());
    }

    #[test]
    fn save_load_roundtrip_and_failures() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let s = spec(1, 2, 4).with_extra_scalars(2);
        let mut p = init_params(s, 42, InitScheme::He).unwrap();
        p.extras_mut()[1] = -3.5;
        save_params(&path, &p).unwrap();
        let q = load_params(&path, Some(&s)).unwrap();
        assert_eq!(q, p);
        assert!(p.values.iter().zip(&q.values).all(|(a, b)| a.to_bits() == b.to_bits()));

        let other = spec(1, 2, 5);
        assert!(matches!(load_params(&path, Some(&other)), Err(Error::Config(_))));

        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        let err = load_params(&path, None).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");

        let mut bad = bytes.clone();
        bad[8] = 9;
        fs::write(&path, &bad).unwrap();
        assert!(load_params(&path, None).unwrap_err().to_string().contains("version"));
    }
}
