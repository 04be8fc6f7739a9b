//! Solution registry: persisted records, residual verification,
//! distinctness, and the staged search campaign.
//!
//! Layout on disk: `<root>/<problem>/registry.json` holds an array of
//! [`SolutionRecord`]s; each record owns one parameter file per field,
//! `<id>.f<i>.nnp`, in the same directory.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{BatchMatrix, Tape};
use crate::deflation::{DeflationSource, ShiftSchedule};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::network::{load_params, save_params, ActivationKind, InitScheme};
use crate::optimizer::{train, LossMode, LrSchedule, TrainConfig, TrainReport};
use crate::probing::{pretrain_to_target, PRETRAIN_ITERATIONS, PRETRAIN_LR};
use crate::problems::Problem;
use crate::residual::residuals;
use crate::rng::derive_seed;
use crate::sampler::sample_interior;

pub const REGISTRY_ENV: &str = "NNDEFLATE_REGISTRY";
pub const INDEX_FILE: &str = "registry.json";
/// Every stored residual and every distinctness check uses this seed unless told otherwise.
pub const CANONICAL_VERIFY_SEED: u64 = 0x7665_7269_6679;
pub const VERIFY_SAMPLES: usize = 10_000;
pub const DEFAULT_DELTA: f64 = 0.05;
/// Absolute discrete-L² separation below which two solutions count as the same.
pub const DEFAULT_MIN_SEPARATION: f64 = 0.05;
pub const TRIVIAL_STAGE: &str = "trivial";
pub const DESK_RESIDUAL_THRESHOLD: f64 = 1e-2;
pub const FULL_SCALE_RESIDUAL_THRESHOLD: f64 = 1e-3;
const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRef {
    pub id: String,
    pub power: f64,
}

/// Training settings as stored with a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub iterations: usize,
    pub batch: usize,
    pub lr: LrSchedule,
    pub shift: ShiftSchedule,
    pub mode: LossMode,
    pub seed: u64,
    pub scheme: InitScheme,
    pub sources: Vec<SourceRef>,
    /// Set when the network was first regressed onto `constant - u_k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_guess: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub id: String,
    pub problem: Problem,
    pub model: Model,
    pub param_files: Vec<String>,
    /// Realized initial `c_J` per field (null without probing).
    pub initial_c_j: Vec<Option<f64>>,
    pub train: TrainSettings,
    pub residual: f64,
    pub verify_samples: usize,
    pub verify_seed: u64,
    pub created: String,
    pub stage: String,
}

/// Residual verification result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verification {
    pub residual: f64,
    /// Monte-Carlo standard error of `residual` (delta method).
    pub std_error: f64,
}

/// Discrete L² of the PDE residual (summed over equations) on a fresh batch.
pub fn verify_theta(problem: &Problem, model: &Model, theta: &[f64], n_samples: usize, seed: u64) -> Result<Verification> {
    if n_samples == 0 {
        return Err(Error::config("verification needs at least one sample"));
    }
    model.check_len(theta)?;
    let x = sample_interior(&problem.domain(), n_samples, seed)?.points;
    let d = x.cols();
    let mut squares = Vec::with_capacity(n_samples);
    for chunk in x.data().chunks(CHUNK * d) {
        let xb = BatchMatrix::new(chunk.len() / d, d, chunk.to_vec())?;
        let mut tape = Tape::new(theta);
        let (rs, _) = residuals(&mut tape, problem, model, &xb)?;
        let mut s = vec![0.0; xb.rows()];
        for r in rs {
            for (acc, v) in s.iter_mut().zip(tape.value(r).data()) {
                *acc += v * v;
            }
        }
        squares.extend(s);
    }
    let n = squares.len() as f64;
    let mean = squares.iter().sum::<f64>() / n;
    let var = squares.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let residual = mean.sqrt();
    let std_error = if residual > 0.0 { (var / n).sqrt() / (2.0 * residual) } else { 0.0 };
    Ok(Verification { residual, std_error })
}

/// Relative distance `‖u_a - u_b‖ / (‖u_a‖ + ‖u_b‖ + 1e-12)` on a fresh batch,
/// maximized over fields.
/// Relative and absolute discrete-L² distance, each the max over fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Separation {
    pub relative: f64,
    pub absolute: f64,
}

impl Separation {
    pub fn distinct(&self, delta: f64, min_separation: f64) -> bool {
        self.relative > delta && self.absolute > min_separation
    }
}

pub fn relative_distance(
    problem: &Problem,
    a: (&Model, &[f64]),
    b: (&Model, &[f64]),
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    Ok(separation(problem, a, b, n_samples, seed)?.relative)
}

pub fn separation(
    problem: &Problem,
    a: (&Model, &[f64]),
    b: (&Model, &[f64]),
    n_samples: usize,
    seed: u64,
) -> Result<Separation> {
    if a.0.field_count() != b.0.field_count() {
        return Err(Error::config("records have different field counts"));
    }
    let x = sample_interior(&problem.domain(), n_samples, seed)?.points;
    let steps = problem.steps();
    let d = x.cols();
    let fields = a.0.field_count();
    let (mut diff, mut na, mut nb) = (vec![0.0; fields], vec![0.0; fields], vec![0.0; fields]);
    for chunk in x.data().chunks(CHUNK * d) {
        let xb = BatchMatrix::new(chunk.len() / d, d, chunk.to_vec())?;
        let ua = a.0.values(a.1, &xb, &steps)?;
        let ub = b.0.values(b.1, &xb, &steps)?;
        for f in 0..fields {
            for (p, q) in ua[f].iter().zip(&ub[f]) {
                diff[f] += (p - q) * (p - q);
                na[f] += p * p;
                nb[f] += q * q;
            }
        }
    }
    let n = x.rows() as f64;
    let relative = (0..fields)
        .map(|f| (diff[f] / n).sqrt() / ((na[f] / n).sqrt() + (nb[f] / n).sqrt() + 1e-12))
        .fold(0.0, f64::max);
    let absolute = diff.iter().map(|d| (d / n).sqrt()).fold(0.0, f64::max);
    if !relative.is_finite() || !absolute.is_finite() {
        return Err(Error::domain("non-finite distance between records"));
    }
    Ok(Separation { relative, absolute })
}

/// Freshly initialized parameters with the problem's init adjustments applied.
pub fn initial_theta(problem: &Problem, model: &Model, seed: u64, scheme: InitScheme) -> Result<Vec<f64>> {
    let mut parts = model.init(seed, scheme)?;
    for (i, (p, f)) in parts.iter_mut().zip(&model.fields).enumerate() {
        problem.adjust_init(f, p, derive_seed(seed, 0x1000 + i as u64));
    }
    model.concat(&parts)
}

/// A trained network awaiting admission.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub model: Model,
    pub theta: Vec<f64>,
    pub initial_c_j: Vec<Option<f64>>,
    pub settings: TrainSettings,
    pub stage: String,
    pub report: TrainReport,
}

/// What happened to a candidate.
#[derive(Debug, Clone, PartialEq)]
pub enum Admission {
    Admitted { id: String, residual: f64 },
    ResidualTooLarge { residual: f64 },
    Duplicate { residual: f64, of: String, distance: f64, absolute: f64 },
}

impl Admission {
    pub fn is_admitted(&self) -> bool {
        matches!(self, Admission::Admitted { .. })
    }
}

/// Admission thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissionRule {
    pub residual_threshold: f64,
    pub delta: f64,
    #[serde(default = "default_min_separation")]
    pub min_separation: f64,
    pub verify_samples: usize,
}

fn default_min_separation() -> f64 {
    DEFAULT_MIN_SEPARATION
}

impl Default for AdmissionRule {
    fn default() -> Self {
        Self { residual_threshold: DESK_RESIDUAL_THRESHOLD, delta: DEFAULT_DELTA, min_separation: DEFAULT_MIN_SEPARATION, verify_samples: VERIFY_SAMPLES }
    }
}

impl AdmissionRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !(self.residual_threshold > 0.0) || !(self.min_separation >= 0.0) {
            return Err(Error::config("admission thresholds must be positive"));
        }
        if self.verify_samples == 0 {
            return Err(Error::config("verification needs at least one sample"));
        }
        Ok(())
    }
}

pub struct Registry {
    dir: Option<PathBuf>,
    problem: String,
    records: Vec<SolutionRecord>,
    thetas: HashMap<String, Vec<f64>>,
}

impl Registry {
    /// Registry root from `NNDEFLATE_REGISTRY`, else `./registry`.
    pub fn root_from_env() -> PathBuf {
        std::env::var_os(REGISTRY_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("registry"))
    }

    /// Open (creating if needed) the directory for `problem` under `root`.
    pub fn open(root: &Path, problem: &str) -> Result<Self> {
        let dir = root.join(problem);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let index = dir.join(INDEX_FILE);
        let records: Vec<SolutionRecord> = if index.exists() {
            let text = fs::read_to_string(&index).map_err(|e| Error::io(&index, e))?;
            serde_json::from_str(&text).map_err(|e| Error::io(&index, e))?
        } else {
            Vec::new()
        };
        if let Some(r) = records.iter().find(|r| r.problem.name != problem) {
            return Err(Error::config(format!("record {} in {} belongs to {}", r.id, dir.display(), r.problem.name)));
        }
        Ok(Self { dir: Some(dir), problem: problem.into(), records, thetas: HashMap::new() })
    }

    /// A registry that never touches the file system.
    pub fn in_memory(problem: &str) -> Self {
        Self { dir: None, problem: problem.into(), records: Vec::new(), thetas: HashMap::new() }
    }

    /// Problem names with a registry directory under `root`.
    pub fn problems_under(root: &Path) -> Result<Vec<String>> {
        if !root.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
            let entry = entry.map_err(|e| Error::io(root, e))?;
            if entry.path().join(INDEX_FILE).exists() {
                out.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn problem(&self) -> &str {
        &self.problem
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn records(&self) -> &[SolutionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Result<&SolutionRecord> {
        self.records
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| Error::NotFound { kind: "record", name: id.into() })
    }

    pub fn next_id(&self) -> String {
        format!("u{}", self.records.len() + 1)
    }

    /// Concatenated parameters of a stored record.
    pub fn theta(&self, id: &str) -> Result<Vec<f64>> {
        if let Some(t) = self.thetas.get(id) {
            return Ok(t.clone());
        }
        let rec = self.get(id)?;
        let dir = self.dir.as_ref().ok_or_else(|| Error::NotFound { kind: "parameters for", name: id.into() })?;
        let mut theta = Vec::with_capacity(rec.model.param_count());
        for (file, field) in rec.param_files.iter().zip(&rec.model.fields) {
            theta.extend(load_params(&dir.join(file), Some(&field.spec))?.values);
        }
        rec.model.check_len(&theta)?;
        Ok(theta)
    }

    pub fn source(&self, r: &SourceRef) -> Result<DeflationSource> {
        let rec = self.get(&r.id)?;
        DeflationSource::new(r.id.clone(), rec.model.clone(), self.theta(&r.id)?, r.power)
    }

    pub fn sources(&self, refs: &[SourceRef]) -> Result<Vec<DeflationSource>> {
        refs.iter().map(|r| self.source(r)).collect()
    }

    /// Every stored record as a source with power `power`.
    pub fn all_sources(&self, power: f64) -> Vec<SourceRef> {
        self.records.iter().map(|r| SourceRef { id: r.id.clone(), power }).collect()
    }

    /// Recompute a stored record's residual.
    pub fn verify(&self, id: &str, n_samples: usize, seed: u64) -> Result<Verification> {
        let rec = self.get(id)?;
        verify_theta(&rec.problem, &rec.model, &self.theta(id)?, n_samples, seed)
    }

    /// Relative distance between two stored records and whether it exceeds `delta`.
    pub fn distinct(&self, a: &str, b: &str, n_samples: usize, seed: u64, delta: f64) -> Result<(bool, f64)> {
        let (ra, rb) = (self.get(a)?, self.get(b)?);
        if ra.problem != rb.problem {
            return Err(Error::config(format!("{a} and {b} solve different problems")));
        }
        let (ta, tb) = (self.theta(a)?, self.theta(b)?);
        let dist = relative_distance(&ra.problem, (&ra.model, &ta), (&rb.model, &tb), n_samples, seed)?;
        Ok((dist > delta, dist))
    }

    /// Closest stored record to `(model, theta)` in relative distance.
    pub fn nearest(&self, problem: &Problem, model: &Model, theta: &[f64], n_samples: usize) -> Result<Option<(String, f64)>> {
        Ok(self
            .separations(problem, model, theta, n_samples)?
            .into_iter()
            .min_by(|a, b| a.1.relative.total_cmp(&b.1.relative))
            .map(|(id, s)| (id, s.relative)))
    }

    /// Separation of `(model, theta)` from every stored record.
    pub fn separations(&self, problem: &Problem, model: &Model, theta: &[f64], n_samples: usize) -> Result<Vec<(String, Separation)>> {
        self.records
            .iter()
            .map(|r| {
                let t = self.theta(&r.id)?;
                let s = separation(problem, (model, theta), (&r.model, &t), n_samples, CANONICAL_VERIFY_SEED)?;
                Ok((r.id.clone(), s))
            })
            .collect()
    }

    /// Verify a candidate and store it if its residual and distance pass `rule`.
    pub fn admit(&mut self, problem: &Problem, candidate: Candidate, rule: &AdmissionRule) -> Result<Admission> {
        rule.validate()?;
        let v = verify_theta(problem, &candidate.model, &candidate.theta, rule.verify_samples, CANONICAL_VERIFY_SEED)?;
        if !(v.residual < rule.residual_threshold) {
            return Ok(Admission::ResidualTooLarge { residual: v.residual });
        }
        let clash = self
            .separations(problem, &candidate.model, &candidate.theta, rule.verify_samples)?
            .into_iter()
            .filter(|(_, s)| !s.distinct(rule.delta, rule.min_separation))
            .min_by(|a, b| a.1.relative.total_cmp(&b.1.relative));
        if let Some((of, s)) = clash {
            return Ok(Admission::Duplicate { residual: v.residual, of, distance: s.relative, absolute: s.absolute });
        }
        let id = self.store(problem, candidate, v.residual, rule.verify_samples)?;
        Ok(Admission::Admitted { id, residual: v.residual })
    }

    /// Store the problem's trivial solution (zero network) unless a record
    /// already holds it. Returns the new id.
    pub fn seed_trivial(&mut self, problem: &Problem, model: &Model, scheme: InitScheme) -> Result<Option<String>> {
        if !problem.has_trivial_solution() || self.records.iter().any(|r| r.stage == TRIVIAL_STAGE) {
            return Ok(None);
        }
        let theta = vec![0.0; model.param_count()];
        let v = verify_theta(problem, model, &theta, VERIFY_SAMPLES, CANONICAL_VERIFY_SEED)?;
        let candidate = Candidate {
            model: model.clone(),
            theta,
            initial_c_j: vec![None; model.field_count()],
            settings: TrainSettings {
                iterations: 0,
                batch: 0,
                lr: LrSchedule::new(0.0, 0.0),
                shift: ShiftSchedule::default(),
                mode: LossMode::Ls,
                seed: 0,
                scheme,
                sources: Vec::new(),
                initial_guess: None,
            },
            stage: TRIVIAL_STAGE.into(),
            report: TrainReport::default(),
        };
        self.store(problem, candidate, v.residual, VERIFY_SAMPLES).map(Some)
    }

    /// Append a record without admission checks.
    pub fn store(&mut self, problem: &Problem, candidate: Candidate, residual: f64, verify_samples: usize) -> Result<String> {
        if problem.name != self.problem {
            return Err(Error::config(format!("registry holds {}, not {}", self.problem, problem.name)));
        }
        for s in &candidate.settings.sources {
            self.get(&s.id)?;
        }
        let id = self.next_id();
        let param_files: Vec<String> = (0..candidate.model.field_count()).map(|i| format!("{id}.f{i}.nnp")).collect();
        if let Some(dir) = &self.dir {
            let parts = candidate.model.split(&candidate.theta, candidate.settings.seed, candidate.settings.scheme)?;
            for (file, p) in param_files.iter().zip(&parts) {
                save_params(&dir.join(file), p)?;
            }
        }
        self.records.push(SolutionRecord {
            id: id.clone(),
            problem: problem.clone(),
            model: candidate.model,
            param_files,
            initial_c_j: candidate.initial_c_j,
            train: candidate.settings,
            residual,
            verify_samples,
            verify_seed: CANONICAL_VERIFY_SEED,
            created: chrono::Utc::now().to_rfc3339(),
            stage: candidate.stage,
        });
        self.thetas.insert(id.clone(), candidate.theta);
        self.write_index()?;
        Ok(id)
    }

    fn write_index(&self) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join(INDEX_FILE);
        let tmp = dir.join(format!("{INDEX_FILE}.tmp"));
        let text = serde_json::to_string_pretty(&self.records).map_err(|e| Error::io(&path, e))?;
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    /// Write field values of a record on `grid` as CSV.
    pub fn export(&self, id: &str, grid: &Grid, out: &mut (impl Write + ?Sized)) -> Result<usize> {
        let rec = self.get(id)?;
        let d = rec.problem.dim();
        if grid.axes.len() != d {
            return Err(Error::config(format!("grid has {} axes, {} is {d}-dimensional", grid.axes.len(), rec.problem.name)));
        }
        let theta = self.theta(id)?;
        let points = grid.points();
        let x = BatchMatrix::new(points.len() / d, d, points)?;
        let values = rec.model.values(&theta, &x, &rec.problem.steps())?;
        write_csv(out, &x, &values).map_err(|e| Error::io("<export>", e))?;
        Ok(x.rows())
    }
}

fn write_csv(out: &mut (impl Write + ?Sized), x: &BatchMatrix, values: &[Vec<f64>]) -> std::io::Result<()> {
    let mut header: Vec<String> = (1..=x.cols()).map(|i| format!("x{i}")).collect();
    header.extend(["u", "v"].iter().take(values.len()).map(|s| s.to_string()));
    writeln!(out, "{}", header.join(","))?;
    for i in 0..x.rows() {
        let mut row: Vec<String> = x.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        row.extend(values.iter().map(|f| format!("{:.16e}", f[i])));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Tensor grid `lo:hi:n` per axis, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub axes: Vec<(f64, f64, usize)>,
}

impl Grid {
    /// Parse `lo:hi:n[,lo:hi:n...]`.
    pub fn parse(s: &str) -> Result<Self> {
        let axes = s
            .split(',')
            .map(|a| {
                let parts: Vec<&str> = a.trim().split(':').collect();
                let bad = || Error::config(format!("grid axis '{a}' is not lo:hi:n"));
                if parts.len() != 3 {
                    return Err(bad());
                }
                let lo: f64 = parts[0].parse().map_err(|_| bad())?;
                let hi: f64 = parts[1].parse().map_err(|_| bad())?;
                let n: usize = parts[2].parse().map_err(|_| bad())?;
                if n == 0 || !lo.is_finite() || !hi.is_finite() {
                    return Err(bad());
                }
                Ok((lo, hi, n))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { axes })
    }

    fn axis_values(&(lo, hi, n): &(f64, f64, usize)) -> Vec<f64> {
        if n == 1 {
            return vec![lo];
        }
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.2).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major points, last axis fastest.
    pub fn points(&self) -> Vec<f64> {
        let vals: Vec<Vec<f64>> = self.axes.iter().map(Self::axis_values).collect();
        let d = vals.len();
        let mut out = Vec::with_capacity(self.len() * d);
        let mut idx = vec![0usize; d];
        for _ in 0..self.len() {
            out.extend(idx.iter().enumerate().map(|(k, &i)| vals[k][i]));
            for k in (0..d).rev() {
                idx[k] += 1;
                if idx[k] < vals[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
        out
    }
}

/// Start from a regression onto `constant - u_id` instead of a random network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialGuess {
    pub constant: f64,
    pub id: String,
}

impl InitialGuess {
    /// Parse `c-uk`, e.g. `2-u9`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("initial guess '{s}' is not of the form <constant>-<id>"));
        let (c, id) = s.rsplit_once('-').ok_or_else(bad)?;
        let constant: f64 = c.trim().parse().map_err(|_| bad())?;
        let id = id.trim();
        if id.is_empty() || !constant.is_finite() {
            return Err(bad());
        }
        Ok(Self { constant, id: id.into() })
    }

    pub fn label(&self) -> String {
        format!("{}-{}", self.constant, self.id)
    }
}

/// Everything needed to train one candidate.
#[derive(Debug, Clone)]
pub struct SolveRequest {
    pub model: Model,
    pub scheme: InitScheme,
    pub config: TrainConfig,
    pub sources: Vec<SourceRef>,
    pub stage: String,
    pub initial_guess: Option<InitialGuess>,
}

impl SolveRequest {
    pub fn new(model: Model, scheme: InitScheme, config: TrainConfig, stage: impl Into<String>) -> Self {
        Self { model, scheme, config, sources: Vec::new(), stage: stage.into(), initial_guess: None }
    }

    /// Default model and training settings of `problem` in `mode`.
    pub fn desk(problem: &Problem, mode: LossMode, seed: u64) -> Result<Self> {
        let d = problem.defaults();
        let penalty = mode.penalty().is_some();
        let model = problem.model(d.depth, d.width, d.activation, penalty, None)?;
        let cfg = TrainConfig::new(d.iterations, d.batch, LrSchedule::new(d.lr_powers.0, d.lr_powers.1), mode, seed).with_shift(d.shift);
        Ok(Self::new(model, d.scheme, cfg, if mode.is_deflated() { "nd" } else { "ls" }))
    }

    pub fn with_sources(mut self, sources: Vec<SourceRef>) -> Self {
        self.sources = sources;
        self
    }
}

/// Initialize, train and package a candidate; sources and initial guesses
/// are resolved in `registry`.
pub fn solve(problem: &Problem, registry: &Registry, req: &SolveRequest) -> Result<Candidate> {
    let sources = registry.sources(&req.sources)?;
    let mut theta = initial_theta(problem, &req.model, req.config.seed, req.scheme)?;
    if let Some(g) = &req.initial_guess {
        let rec = registry.get(&g.id)?;
        let src_theta = registry.theta(&g.id)?;
        if rec.model.field_count() != req.model.field_count() {
            return Err(Error::config(format!("{} has the wrong number of fields for an initial guess", g.id)));
        }
        let steps = problem.steps();
        let mut parts = req.model.split(&theta, req.config.seed, req.scheme)?;
        for (i, (field, part)) in req.model.fields.iter().zip(parts.iter_mut()).enumerate() {
            let target = |x: &BatchMatrix| -> Result<Vec<f64>> {
                Ok(rec.model.values(&src_theta, x, &steps)?.swap_remove(i).into_iter().map(|v| g.constant - v).collect())
            };
            let fitted = pretrain_to_target(
                field,
                part.clone(),
                &target,
                &problem.domain(),
                &steps,
                PRETRAIN_ITERATIONS,
                PRETRAIN_LR,
                derive_seed(req.config.seed, 0x2000 + i as u64),
            )?;
            log::info!("initial guess {} field {i}: fit error {:.3e}", g.label(), fitted.fit_error);
            *part = fitted.params;
        }
        theta = req.model.concat(&parts)?;
    }
    let mut c = train_from(problem, req, theta, &sources)?;
    c.settings.initial_guess = req.initial_guess.as_ref().map(InitialGuess::label);
    Ok(c)
}

fn run_candidate(problem: &Problem, req: &SolveRequest, sources: &[DeflationSource]) -> Result<Candidate> {
    let theta = initial_theta(problem, &req.model, req.config.seed, req.scheme)?;
    train_from(problem, req, theta, sources)
}

fn train_from(problem: &Problem, req: &SolveRequest, theta: Vec<f64>, sources: &[DeflationSource]) -> Result<Candidate> {
    let parts = req.model.split(&theta, req.config.seed, req.scheme)?;
    let initial_c_j = req.model.fields.iter().zip(&parts).map(|(f, p)| f.initial_c_j(p)).collect();
    let report = train(problem, &req.model, theta, &req.config, sources)?;
    Ok(Candidate {
        model: req.model.clone(),
        theta: report.params.clone(),
        initial_c_j,
        settings: TrainSettings {
            iterations: req.config.iterations,
            batch: req.config.batch,
            lr: req.config.lr,
            shift: req.config.shift,
            mode: req.config.mode,
            seed: req.config.seed,
            scheme: req.scheme,
            sources: req.sources.clone(),
            initial_guess: None,
        },
        stage: req.stage.clone(),
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageBudget {
    pub seeds: usize,
    pub iterations: usize,
    pub batch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    /// Stages in order: least squares, deflation, probing, probing with varying shift.
    pub stages: [StageBudget; 4],
    /// Shift used by stages 2-4; a deflated stage 1 shares the stage-2 shift.
    pub shifts: [ShiftSchedule; 3],
    pub admission: AdmissionRule,
    pub j_ladder: Vec<usize>,
    pub probing_range: (f64, f64),
    pub power: f64,
    pub lr: LrSchedule,
    pub depth: usize,
    pub width: usize,
    pub activation: ActivationKind,
    pub scheme: InitScheme,
    pub max_solutions: usize,
    /// Candidates trained concurrently within a stage; they share the source set.
    pub jobs: usize,
}

pub const STAGE_LABELS: [&str; 4] = ["ls", "nd", "nd_probe", "nd_probe_vs"];

impl CampaignConfig {
    /// Desk-scale campaign from the problem's defaults.
    pub fn desk(problem: &Problem) -> Self {
        let d = problem.defaults();
        let budget = |seeds| StageBudget { seeds, iterations: d.iterations, batch: d.batch };
        Self {
            stages: [budget(1), budget(2), budget(2), budget(2)],
            shifts: [d.shift, d.shift, ShiftSchedule::range(1e-2, 1e2)],
            admission: AdmissionRule::default(),
            j_ladder: vec![1, 2],
            probing_range: d.probing_range,
            power: 2.0,
            lr: LrSchedule::new(d.lr_powers.0, d.lr_powers.1),
            depth: d.depth,
            width: d.width,
            activation: d.activation,
            scheme: d.scheme,
            max_solutions: 16,
            jobs: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.admission.validate()?;
        self.lr.validate()?;
        self.shifts.iter().try_for_each(ShiftSchedule::validate)?;
        if !(self.power > 0.0) {
            return Err(Error::config("deflation power must be positive"));
        }
        if self.jobs == 0 {
            return Err(Error::config("jobs must be at least 1"));
        }
        if self.j_ladder.contains(&0) {
            return Err(Error::config("probing J must be at least 1"));
        }
        Ok(())
    }
}

/// One training attempt inside a campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct Attempt {
    pub stage: usize,
    pub j: Option<usize>,
    pub seed: u64,
    pub outcome: std::result::Result<Admission, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignOutcome {
    pub admitted: Vec<SolutionRecord>,
    pub attempts: Vec<Attempt>,
    pub wall_time: f64,
}

/// Run the four stages in order, admitting candidates into `registry`.
pub fn run_campaign(problem: &Problem, config: &CampaignConfig, run_seed: u64, registry: &mut Registry) -> Result<CampaignOutcome> {
    config.validate()?;
    problem.validate()?;
    let start = std::time::Instant::now();
    let before = registry.len();
    let mut attempts = Vec::new();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let plain = problem.model(config.depth, config.width, config.activation, false, None)?;
    if let Some(id) = registry.seed_trivial(problem, &plain, config.scheme)? {
        log::info!("{}: trivial solution stored as {id}", problem.name);
    }
    'stages: for (stage, budget) in config.stages.iter().enumerate() {
        let ladder: Vec<Option<usize>> = if stage < 2 { vec![None] } else { config.j_ladder.iter().copied().map(Some).collect() };
        for j in ladder {
            let probing = match j {
                Some(j) => match problem.probing_basis(j, config.probing_range) {
                    Ok(b) => Some(b),
                    Err(e) => {
                        log::info!("stage {} skipped: {e}", stage + 1);
                        continue 'stages;
                    }
                },
                None => None,
            };
            let model = problem.model(config.depth, config.width, config.activation, false, probing)?;
            let mode = match (stage, problem.field_count()) {
                (0, _) if registry.is_empty() => LossMode::Ls,
                (_, 2) => LossMode::SystemNd,
                _ => LossMode::Nd,
            };
            let shift = config.shifts[stage.saturating_sub(1)];
            let seeds: Vec<u64> = (0..budget.seeds)
                .map(|s| derive_seed(run_seed, ((stage as u64) << 32) | ((j.unwrap_or(0) as u64) << 16) | s as u64))
                .collect();
            for group in seeds.chunks(config.jobs) {
                if registry.len() - before >= config.max_solutions {
                    break 'stages;
                }
                let refs = if mode == LossMode::Ls { Vec::new() } else { registry.all_sources(config.power) };
                let sources = registry.sources(&refs)?;
                let reqs: Vec<SolveRequest> = group
                    .iter()
                    .map(|&seed| {
                        let cfg = TrainConfig::new(budget.iterations, budget.batch, config.lr, mode, seed).with_shift(shift);
                        SolveRequest::new(model.clone(), config.scheme, cfg, STAGE_LABELS[stage]).with_sources(refs.clone())
                    })
                    .collect();
                let results: Vec<Result<Candidate>> =
                    pool.install(|| reqs.par_iter().map(|r| run_candidate(problem, r, &sources)).collect());
                for (req, res) in reqs.iter().zip(results) {
                    let outcome = match res {
                        Ok(c) if registry.len() - before < config.max_solutions => {
                            registry.admit(problem, c, &config.admission).map_err(|e| e.to_string())
                        }
                        Ok(_) => continue,
                        Err(e) => Err(e.to_string()),
                    };
                    log::info!("{} stage {} J={j:?} seed {}: {outcome:?}", problem.name, stage + 1, req.config.seed);
                    attempts.push(Attempt { stage: stage + 1, j, seed: req.config.seed, outcome });
                }
            }
        }
    }
    Ok(CampaignOutcome {
        admitted: registry.records()[before..].to_vec(),
        attempts,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_candidate(problem: &Problem, seed: u64) -> Candidate {
        let model = problem.model(2, 6, ActivationKind::Tanh, false, None).unwrap();
        let cfg = TrainConfig::new(5, 16, LrSchedule::new(-2.0, -3.0), LossMode::Ls, seed);
        let req = SolveRequest::new(model, InitScheme::Xavier, cfg, "test");
        run_candidate(problem, &req, &[]).unwrap()
    }

    #[test]
    fn initial_guess_parse() {
        assert_eq!(InitialGuess::parse("2-u9").unwrap(), InitialGuess { constant: 2.0, id: "u9".into() });
        assert_eq!(InitialGuess::parse("-1.5-u3").unwrap().constant, -1.5);
        assert!(InitialGuess::parse("u9").is_err());
        assert!(InitialGuess::parse("2-").is_err());
    }

    #[test]
    fn grid_parse_and_points() {
        let g = Grid::parse("0:1:3").unwrap();
        assert_eq!(g.points(), vec![0.0, 0.5, 1.0]);
        let g2 = Grid::parse("0:1:2,5:6:2").unwrap();
        assert_eq!(g2.points(), vec![0.0, 5.0, 0.0, 6.0, 1.0, 5.0, 1.0, 6.0]);
        assert!(Grid::parse("0:1").is_err());
        assert!(Grid::parse("0:1:0").is_err());
        assert_eq!(Grid::parse("0:1:200").unwrap().len(), 200);
    }

    #[test]
    fn identical_records_not_distinct() {
        let p = Problem::by_name("manufactured_linear").unwrap();
        let mut reg = Registry::in_memory(&p.name);
        let c = linear_candidate(&p, 1);
        let id = reg.store(&p, c, 0.0, 10).unwrap();
        assert_eq!(id, "u1");
        let (d, dist) = reg.distinct("u1", "u1", 500, 3, DEFAULT_DELTA).unwrap();
        assert!(!d);
        assert_eq!(dist, 0.0);
    }

    #[test]
    fn negation_distance_is_one() {
        let p = Problem::by_name("bootstrap_b").unwrap();
        let m = p.model(2, 4, ActivationKind::Tanh, false, None).unwrap();
        let t = initial_theta(&p, &m, 4, InitScheme::Xavier).unwrap();
        // The mixed wrapper is linear in the network output with zero lift.
        let neg: Vec<f64> = t.iter().enumerate().map(|(i, v)| if m.fields[0].spec.offsets().output.range().contains(&i) { -v } else { *v }).collect();
        let d = relative_distance(&p, (&m, &t), (&m, &neg), 1000, 2).unwrap();
        assert!((d - 1.0).abs() < 1e-12, "{d}");
    }

    #[test]
    fn verify_is_deterministic() {
        let p = Problem::by_name("manufactured_linear").unwrap();
        let c = linear_candidate(&p, 2);
        let a = verify_theta(&p, &c.model, &c.theta, 3000, 9).unwrap();
        let b = verify_theta(&p, &c.model, &c.theta, 3000, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.std_error > 0.0);
    }

    #[test]
    fn unknown_source_rejected() {
        let p = Problem::by_name("manufactured_linear").unwrap();
        let mut reg = Registry::in_memory(&p.name);
        let mut c = linear_candidate(&p, 1);
        c.settings.sources.push(SourceRef { id: "u7".into(), power: 2.0 });
        assert!(matches!(reg.store(&p, c, 0.0, 10), Err(Error::NotFound { .. })));
    }

    #[test]
    fn persisted_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = Problem::by_name("manufactured_linear").unwrap();
        let c = linear_candidate(&p, 3);
        let theta = c.theta.clone();
        {
            let mut reg = Registry::open(dir.path(), &p.name).unwrap();
            reg.store(&p, c, 0.5, 10).unwrap();
        }
        let reg = Registry::open(dir.path(), &p.name).unwrap();
        assert_eq!(reg.len(), 1);
        assert_eq!(reg.theta("u1").unwrap(), theta);
        assert_eq!(reg.next_id(), "u2");
        let mut csv = Vec::new();
        assert_eq!(reg.export("u1", &Grid::parse("0:1:5").unwrap(), &mut csv).unwrap(), 5);
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("x1,u\n"));
        assert_eq!(text.lines().count(), 6);
        assert_eq!(Registry::problems_under(dir.path()).unwrap(), vec!["manufactured_linear".to_string()]);
    }

    #[test]
    fn campaign_respects_max_solutions() {
        let p = Problem::by_name("manufactured_linear").unwrap();
        let mut cfg = CampaignConfig::desk(&p);
        cfg.stages = [StageBudget { seeds: 2, iterations: 400, batch: 64 }; 4];
        cfg.width = 8;
        cfg.depth = 2;
        cfg.admission.residual_threshold = 1e3;
        cfg.admission.verify_samples = 500;
        cfg.max_solutions = 1;
        let mut reg = Registry::in_memory(&p.name);
        let out = run_campaign(&p, &cfg, 5, &mut reg).unwrap();
        assert_eq!(out.admitted.len(), 1);
        assert_eq!(out.admitted[0].stage, "ls");
        assert_eq!(out.attempts.len(), 1);
    }
}
