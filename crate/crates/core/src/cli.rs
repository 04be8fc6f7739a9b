//! Command-line front end: `solve`, `deflate`, `campaign`, `verify`, `list`, `export`.
//!
//! Exit codes: 0 success, 1 candidate rejected or I/O failure, 2 usage or
//! configuration error, 3 divergence or collapse onto a deflation source.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::deflation::ShiftSchedule;
use crate::error::Error;
use crate::network::{ActivationKind, InitScheme};
use crate::optimizer::{LossMode, LrSchedule, TrainConfig};
use crate::problems::Problem;
use crate::registry::{
    relative_distance, run_campaign, solve, Admission, CampaignConfig, Grid, InitialGuess, Registry, SolveRequest,
    SourceRef, StageBudget, CANONICAL_VERIFY_SEED,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_REJECTED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "nndeflate", version, about = "Find multiple solutions of nonlinear boundary-value problems")]
struct Cli {
    /// Registry root (overrides NNDEFLATE_REGISTRY).
    #[arg(long, global = true)]
    registry: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Plain least-squares solve.
    Solve(RunArgs),
    /// Deflated solve against stored records.
    Deflate(RunArgs),
    /// Staged search: least squares, deflation, probing, varying shift.
    Campaign(RunArgs),
    /// Recompute the residual of a stored record.
    Verify {
        /// Record id, optionally `problem/id`.
        id: String,
        #[arg(long)]
        problem: Option<String>,
        #[arg(long, default_value_t = crate::registry::VERIFY_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = CANONICAL_VERIFY_SEED)]
        seed: u64,
    },
    /// Print stored records.
    List { problem: Option<String> },
    /// Write record values on a grid as CSV.
    Export {
        id: String,
        #[arg(long)]
        problem: Option<String>,
        /// `lo:hi:n` per axis, comma-separated.
        #[arg(long)]
        grid: String,
        /// Output file (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    problem: Option<String>,
    /// Flat JSON file with the same keys as the flags; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Learning-rate powers `q0,q1`: the rate decays from 10^q0 to 10^q1.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    lr: Option<Vec<f64>>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Varying shift from `lo` to `hi` (values, not powers).
    #[arg(long, value_delimiter = ',', num_args = 1)]
    alpha_range: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 1)]
    sources: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',', num_args = 1)]
    powers: Option<Vec<f64>>,
    #[arg(long)]
    probing_j: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    probing_range: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Train a plain network with a λ-weighted boundary penalty instead of an exact wrapper.
    #[arg(long)]
    penalty: Option<f64>,
    /// Registry root for this run.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    /// `relu_cubed` or `tanh`.
    #[arg(long)]
    activation: Option<String>,
    /// `uniform_fanin`, `uniform_fanin_literal`, `xavier` or `he`.
    #[arg(long)]
    init: Option<String>,
    /// Problem constant override `key=value`, repeatable.
    #[arg(long = "set")]
    constants: Vec<String>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Absolute L² separation required from every stored solution.
    #[arg(long)]
    min_separation: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Start from a fit to `c-uk`, e.g. `2-u9`.
    #[arg(long)]
    initial_guess: Option<String>,
    /// Write the training history here.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    max_solutions: Option<usize>,
    /// Seeds per campaign stage.
    #[arg(long)]
    seeds_per_stage: Option<usize>,
    #[arg(long, value_delimiter = ',', num_args = 1)]
    j_ladder: Option<Vec<usize>>,
    /// Print the merged configuration as JSON and exit.
    #[arg(long)]
    dump_config: bool,
}

/// Flat run configuration; every key mirrors a flag.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Option<String>,
    pub iterations: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    pub alpha_range: Option<Vec<f64>>,
    pub sources: Option<Vec<String>>,
    pub powers: Option<Vec<f64>>,
    pub probing_j: Option<usize>,
    pub probing_range: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub penalty: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub depth: Option<usize>,
    pub width: Option<usize>,
    pub activation: Option<ActivationKind>,
    pub init: Option<InitScheme>,
    pub constants: BTreeMap<String, f64>,
    pub threshold: Option<f64>,
    pub delta: Option<f64>,
    pub min_separation: Option<f64>,
    pub samples: Option<usize>,
    pub initial_guess: Option<String>,
    pub history: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub max_solutions: Option<usize>,
    pub seeds_per_stage: Option<usize>,
    pub j_ladder: Option<Vec<usize>>,
}

fn parse_name<T: DeserializeOwned>(what: &str, s: &str) -> Result<T, Error> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| Error::Config(format!("unknown {what} '{s}'")))
}

fn pair(what: &str, v: &Option<Vec<f64>>) -> Result<Option<(f64, f64)>, Error> {
    match v.as_deref() {
        None => Ok(None),
        Some([a, b]) => Ok(Some((*a, *b))),
        Some(other) => Err(Error::Config(format!("{what} takes two values, got {}", other.len()))),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), message: e.to_string() })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Fill every unset key from `base`.
    pub fn or(self, base: RunConfig) -> RunConfig {
        let mut constants = base.constants;
        constants.extend(self.constants);
        RunConfig {
            problem: self.problem.or(base.problem),
            iterations: self.iterations.or(base.iterations),
            batch: self.batch.or(base.batch),
            lr: self.lr.or(base.lr),
            alpha: self.alpha.or(base.alpha),
            alpha_range: self.alpha_range.or(base.alpha_range),
            sources: self.sources.or(base.sources),
            powers: self.powers.or(base.powers),
            probing_j: self.probing_j.or(base.probing_j),
            probing_range: self.probing_range.or(base.probing_range),
            seed: self.seed.or(base.seed),
            penalty: self.penalty.or(base.penalty),
            output_dir: self.output_dir.or(base.output_dir),
            depth: self.depth.or(base.depth),
            width: self.width.or(base.width),
            activation: self.activation.or(base.activation),
            init: self.init.or(base.init),
            constants,
            threshold: self.threshold.or(base.threshold),
            delta: self.delta.or(base.delta),
            min_separation: self.min_separation.or(base.min_separation),
            samples: self.samples.or(base.samples),
            initial_guess: self.initial_guess.or(base.initial_guess),
            history: self.history.or(base.history),
            jobs: self.jobs.or(base.jobs),
            max_solutions: self.max_solutions.or(base.max_solutions),
            seeds_per_stage: self.seeds_per_stage.or(base.seeds_per_stage),
            j_ladder: self.j_ladder.or(base.j_ladder),
        }
    }

    pub fn build_problem(&self) -> Result<Problem, Error> {
        let name = self.problem.as_deref().ok_or_else(|| Error::Config("no problem given".into()))?;
        let mut p = Problem::by_name(name)?;
        for (k, v) in &self.constants {
            p.set_constant(k, *v)?;
        }
        p.validate()?;
        Ok(p)
    }

    pub fn lr_schedule(&self, problem: &Problem) -> Result<LrSchedule, Error> {
        let (q0, q1) = pair("lr", &self.lr)?.unwrap_or(problem.defaults().lr_powers);
        let s = LrSchedule::new(q0, q1);
        s.validate()?;
        Ok(s)
    }

    pub fn shift(&self, problem: &Problem) -> Result<ShiftSchedule, Error> {
        let s = match (self.alpha, pair("alpha_range", &self.alpha_range)?) {
            (Some(_), Some(_)) => return Err(Error::Config("give either alpha or alpha_range, not both".into())),
            (_, Some((lo, hi))) => {
                if !(lo > 0.0 && hi > 0.0) {
                    return Err(Error::Config("alpha_range values must be positive".into()));
                }
                ShiftSchedule::range(lo, hi)
            }
            (Some(a), None) => ShiftSchedule::Constant { alpha: a },
            (None, None) => problem.defaults().shift,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn source_refs(&self) -> Result<Vec<SourceRef>, Error> {
        let ids = self.sources.clone().unwrap_or_default();
        let powers = match self.powers.as_deref() {
            None => vec![2.0; ids.len()],
            Some([p]) => vec![*p; ids.len()],
            Some(p) if p.len() == ids.len() => p.to_vec(),
            Some(p) => return Err(Error::Config(format!("{} powers for {} sources", p.len(), ids.len()))),
        };
        if powers.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::Config("deflation powers must be positive".into()));
        }
        Ok(ids.into_iter().zip(powers).map(|(id, power)| SourceRef { id, power }).collect())
    }

    pub fn solve_request(&self, problem: &Problem, stage: &str) -> Result<SolveRequest, Error> {
        let d = problem.defaults();
        let probing = match self.probing_j {
            Some(j) => {
                let range = pair("probing_range", &self.probing_range)?.unwrap_or(d.probing_range);
                Some(problem.probing_basis(j, range)?)
            }
            None => None,
        };
        let model = problem.model(
            self.depth.unwrap_or(d.depth),
            self.width.unwrap_or(d.width),
            self.activation.unwrap_or(d.activation),
            self.penalty.is_some(),
            probing,
        )?;
        let sources = self.source_refs()?;
        let mode = match (sources.is_empty(), self.penalty, problem.field_count()) {
            (true, None, _) => LossMode::Ls,
            (true, Some(lambda), _) => LossMode::Penalty { lambda },
            (false, Some(lambda), _) => LossMode::NdPenalty { lambda },
            (false, None, 2) => LossMode::SystemNd,
            (false, None, _) => LossMode::Nd,
        };
        let cfg = TrainConfig::new(
            self.iterations.unwrap_or(d.iterations),
            self.batch.unwrap_or(d.batch),
            self.lr_schedule(problem)?,
            mode,
            self.seed.unwrap_or(1),
        )
        .with_shift(self.shift(problem)?);
        let mut req = SolveRequest::new(model, self.init.unwrap_or(d.scheme), cfg, stage).with_sources(sources);
        req.initial_guess = self.initial_guess.as_deref().map(InitialGuess::parse).transpose()?;
        Ok(req)
    }

    pub fn admission(&self) -> crate::registry::AdmissionRule {
        let mut rule = crate::registry::AdmissionRule::default();
        if let Some(t) = self.threshold {
            rule.residual_threshold = t;
        }
        if let Some(d) = self.delta {
            rule.delta = d;
        }
        if let Some(m) = self.min_separation {
            rule.min_separation = m;
        }
        if let Some(n) = self.samples {
            rule.verify_samples = n;
        }
        rule
    }

    pub fn campaign(&self, problem: &Problem) -> Result<CampaignConfig, Error> {
        let mut c = CampaignConfig::desk(problem);
        let d = problem.defaults();
        let seeds = self.seeds_per_stage;
        for s in c.stages.iter_mut() {
            *s = StageBudget {
                seeds: seeds.unwrap_or(s.seeds),
                iterations: self.iterations.unwrap_or(d.iterations),
                batch: self.batch.unwrap_or(d.batch),
            };
        }
        if self.alpha.is_some() {
            let s = self.shift(problem)?;
            c.shifts[0] = s;
            c.shifts[1] = s;
        }
        if self.alpha_range.is_some() {
            c.shifts[2] = self.shift(problem)?;
        }
        c.admission = self.admission();
        if let Some(j) = &self.j_ladder {
            c.j_ladder = j.clone();
        }
        if let Some(r) = pair("probing_range", &self.probing_range)? {
            c.probing_range = r;
        }
        if let Some(p) = self.powers.as_deref() {
            match p {
                [p] => c.power = *p,
                _ => return Err(Error::Config("campaign takes a single deflation power".into())),
            }
        }
        c.lr = self.lr_schedule(problem)?;
        c.depth = self.depth.unwrap_or(c.depth);
        c.width = self.width.unwrap_or(c.width);
        c.activation = self.activation.unwrap_or(c.activation);
        c.scheme = self.init.unwrap_or(c.scheme);
        c.max_solutions = self.max_solutions.unwrap_or(c.max_solutions);
        c.jobs = self.jobs.unwrap_or(c.jobs);
        c.validate()?;
        Ok(c)
    }
}

impl RunArgs {
    fn to_config(&self) -> Result<RunConfig, Error> {
        let mut constants = BTreeMap::new();
        for kv in &self.constants {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects key=value, got '{kv}'")))?;
            let v: f64 = v.parse().map_err(|_| Error::Config(format!("--set {k}: '{v}' is not a number")))?;
            constants.insert(k.to_string(), v);
        }
        let flags = RunConfig {
            problem: self.problem.clone(),
            iterations: self.iterations,
            batch: self.batch,
            lr: self.lr.clone(),
            alpha: self.alpha,
            alpha_range: self.alpha_range.clone(),
            sources: self.sources.clone(),
            powers: self.powers.clone(),
            probing_j: self.probing_j,
            probing_range: self.probing_range.clone(),
            seed: self.seed,
            penalty: self.penalty,
            output_dir: self.output_dir.clone(),
            depth: self.depth,
            width: self.width,
            activation: self.activation.as_deref().map(|s| parse_name("activation", s)).transpose()?,
            init: self.init.as_deref().map(|s| parse_name("init scheme", s)).transpose()?,
            constants,
            threshold: self.threshold,
            delta: self.delta,
            min_separation: self.min_separation,
            samples: self.samples,
            initial_guess: self.initial_guess.clone(),
            history: self.history.clone(),
            jobs: self.jobs,
            max_solutions: self.max_solutions,
            seeds_per_stage: self.seeds_per_stage,
            j_ladder: self.j_ladder.clone(),
        };
        Ok(match &self.config {
            Some(path) => flags.or(RunConfig::load(path)?),
            None => flags,
        })
    }
}

/// Map a library error onto the documented exit codes.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Usage(_) | Error::NotFound { .. } => EXIT_USAGE,
        Error::Training { .. } | Error::NumericDomain(_) => EXIT_DIVERGED,
        Error::Io { .. } => EXIT_REJECTED,
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::Io { path: "<stdout>".into(), message: e.to_string() }
}

fn registry_root(global: &Option<PathBuf>, cfg: Option<&RunConfig>) -> PathBuf {
    cfg.and_then(|c| c.output_dir.clone())
        .or_else(|| global.clone())
        .unwrap_or_else(Registry::root_from_env)
}

/// Resolve `problem/id`, `--problem`, or a unique id across all registries.
fn locate(root: &Path, id: &str, problem: Option<&str>) -> Result<(Registry, String), Error> {
    let (problem, id) = match (id.split_once('/'), problem) {
        (Some((p, i)), _) => (Some(p.to_string()), i.to_string()),
        (None, p) => (p.map(String::from), id.to_string()),
    };
    if let Some(p) = problem {
        let reg = Registry::open(root, &Problem::by_name(&p)?.name)?;
        reg.get(&id)?;
        return Ok((reg, id));
    }
    let mut hits = Vec::new();
    for p in Registry::problems_under(root)? {
        let reg = Registry::open(root, &p)?;
        if reg.get(&id).is_ok() {
            hits.push(reg);
        }
    }
    match hits.len() {
        0 => Err(Error::NotFound { kind: "record", name: id }),
        1 => Ok((hits.pop().unwrap(), id)),
        _ => Err(Error::Config(format!("'{id}' exists in several problems; use problem/{id}"))),
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<i32, Error> {
    match &cli.command {
        Command::Solve(a) | Command::Deflate(a) => {
            let deflate = matches!(cli.command, Command::Deflate(_));
            let cfg = a.to_config()?;
            if a.dump_config {
                writeln!(out, "{}", serde_json::to_string_pretty(&cfg).expect("config serializes")).map_err(io_err)?;
                return Ok(EXIT_OK);
            }
            if deflate && cfg.sources.as_ref().is_none_or(|s| s.is_empty()) {
                return Err(Error::Config("deflate needs --sources".into()));
            }
            if !deflate && cfg.sources.as_ref().is_some_and(|s| !s.is_empty()) {
                return Err(Error::Config("solve takes no sources; use deflate".into()));
            }
            let problem = cfg.build_problem()?;
            let mut reg = Registry::open(&registry_root(&cli.registry, Some(&cfg)), &problem.name)?;
            let req = cfg.solve_request(&problem, if deflate { "deflate" } else { "solve" })?;
            let cand = solve(&problem, &reg, &req)?;
            if let Some(h) = &cfg.history {
                cand.report.save_csv(h)?;
            }
            for s in &req.sources {
                let rec = reg.get(&s.id)?;
                let d = relative_distance(&problem, (&cand.model, &cand.theta), (&rec.model, &reg.theta(&s.id)?), cfg.admission().verify_samples, CANONICAL_VERIFY_SEED)?;
                writeln!(out, "distance to {} (p={}): {d:.6e}", s.id, s.power).map_err(io_err)?;
            }
            let admission = reg.admit(&problem, cand, &cfg.admission())?;
            report_admission(out, &admission)
        }
        Command::Campaign(a) => {
            let cfg = a.to_config()?;
            if a.dump_config {
                writeln!(out, "{}", serde_json::to_string_pretty(&cfg).expect("config serializes")).map_err(io_err)?;
                return Ok(EXIT_OK);
            }
            let problem = cfg.build_problem()?;
            let campaign = cfg.campaign(&problem)?;
            let mut reg = Registry::open(&registry_root(&cli.registry, Some(&cfg)), &problem.name)?;
            let outcome = run_campaign(&problem, &campaign, cfg.seed.unwrap_or(1), &mut reg)?;
            for at in &outcome.attempts {
                let what = match &at.outcome {
                    Ok(a) => describe(a),
                    Err(e) => format!("failed: {e}"),
                };
                let j = at.j.map(|j| format!(" J={j}")).unwrap_or_default();
                writeln!(out, "stage {}{j} seed {}: {what}", at.stage, at.seed).map_err(io_err)?;
            }
            writeln!(out, "{} solutions admitted in {:.1}s", outcome.admitted.len(), outcome.wall_time).map_err(io_err)?;
            for r in &outcome.admitted {
                writeln!(out, "{} residual {:.6e} stage {}", r.id, r.residual, r.stage).map_err(io_err)?;
            }
            Ok(EXIT_OK)
        }
        Command::Verify { id, problem, samples, seed } => {
            let (reg, id) = locate(&registry_root(&cli.registry, None), id, problem.as_deref())?;
            let v = reg.verify(&id, *samples, *seed)?;
            let rec = reg.get(&id)?;
            writeln!(
                out,
                "{}/{id} residual {:.6e} (std error {:.2e}; stored {:.6e})",
                reg.problem(),
                v.residual,
                v.std_error,
                rec.residual
            )
            .map_err(io_err)?;
            Ok(EXIT_OK)
        }
        Command::List { problem } => {
            let root = registry_root(&cli.registry, None);
            let names = match problem {
                Some(p) => vec![Problem::by_name(p)?.name],
                None => Registry::problems_under(&root)?,
            };
            writeln!(out, "problem,id,stage,residual,seed,sources,created").map_err(io_err)?;
            for n in names {
                let reg = Registry::open(&root, &n)?;
                for r in reg.records() {
                    let src: Vec<String> = r.train.sources.iter().map(|s| format!("{}^{}", s.id, s.power)).collect();
                    writeln!(out, "{n},{},{},{:.6e},{},{},{}", r.id, r.stage, r.residual, r.train.seed, src.join(" "), r.created)
                        .map_err(io_err)?;
                }
            }
            Ok(EXIT_OK)
        }
        Command::Export { id, problem, grid, out: path } => {
            let (reg, id) = locate(&registry_root(&cli.registry, None), id, problem.as_deref())?;
            let grid = Grid::parse(grid)?;
            match path {
                Some(p) => {
                    let mut f = std::io::BufWriter::new(std::fs::File::create(p).map_err(|e| Error::Io { path: p.clone(), message: e.to_string() })?);
                    let n = reg.export(&id, &grid, &mut f)?;
                    f.flush().map_err(|e| Error::Io { path: p.clone(), message: e.to_string() })?;
                    writeln!(out, "wrote {n} rows to {}", p.display()).map_err(io_err)?;
                }
                None => {
                    reg.export(&id, &grid, out)?;
                }
            }
            Ok(EXIT_OK)
        }
    }
}

fn describe(a: &Admission) -> String {
    match a {
        Admission::Admitted { id, residual } => format!("admitted {id} residual {residual:.6e}"),
        Admission::ResidualTooLarge { residual } => format!("rejected: residual {residual:.6e} above threshold"),
        Admission::Duplicate { residual, of, distance, absolute } => {
            format!("rejected: distance {distance:.6e} (absolute {absolute:.6e}) to {of} (residual {residual:.6e})")
        }
    }
}

fn report_admission(out: &mut dyn Write, a: &Admission) -> Result<i32, Error> {
    match a {
        Admission::Admitted { id, residual } => {
            writeln!(out, "{id} residual {residual:.6e}").map_err(io_err)?;
            Ok(EXIT_OK)
        }
        other => {
            writeln!(out, "{}", describe(other)).map_err(io_err)?;
            Ok(EXIT_REJECTED)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("nndeflate").chain(args.iter().copied()), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn unknown_problem_is_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let (code, _, err) = run_str(&["--registry", dir.path().to_str().unwrap(), "solve", "nosuch"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("nosuch"));
    }

    #[test]
    fn bad_flag_is_usage_error() {
        assert_eq!(run_str(&["solve", "--bogus"]).0, EXIT_USAGE);
        assert_eq!(run_str(&["frobnicate"]).0, EXIT_USAGE);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"problem": "painleve", "iterations": 10, "lr": [-2, -3], "seed": 4}"#).unwrap();
        let (code, out, _) = run_str(&["solve", "--config", path.to_str().unwrap(), "--seed", "9", "--lr", "-1,-4", "--dump-config"]);
        assert_eq!(code, 0);
        let cfg: RunConfig = serde_json::from_str(&out).unwrap();
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.iterations, Some(10));
        assert_eq!(cfg.lr, Some(vec![-1.0, -4.0]));
        assert_eq!(cfg.problem.as_deref(), Some("painleve"));
    }

    #[test]
    fn config_round_trip() {
        let cfg = RunConfig {
            problem: Some("bootstrap_b".into()),
            alpha_range: Some(vec![0.01, 100.0]),
            sources: Some(vec!["u1".into(), "u2".into()]),
            powers: Some(vec![2.0]),
            activation: Some(ActivationKind::Tanh),
            init: Some(InitScheme::He),
            constants: [("lambda".to_string(), 1.1)].into_iter().collect(),
            ..Default::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
        assert!(serde_json::from_str::<RunConfig>(r#"{"nope": 1}"#).is_err());
    }

    #[test]
    fn ranges_validated() {
        let mut cfg = RunConfig { problem: Some("painleve".into()), lr: Some(vec![-3.0, -2.0]), ..Default::default() };
        let p = cfg.build_problem().unwrap();
        assert!(cfg.lr_schedule(&p).is_err());
        cfg.lr = None;
        cfg.alpha_range = Some(vec![10.0, 1.0]);
        assert!(cfg.shift(&Problem::by_name("painleve").unwrap()).is_err());
        cfg.alpha_range = Some(vec![0.01, 100.0]);
        assert_eq!(cfg.shift(&Problem::by_name("painleve").unwrap()).unwrap(), ShiftSchedule::Varying { p0: -2.0, p1: 2.0 });
        cfg.sources = Some(vec!["u1".into(), "u2".into()]);
        cfg.powers = Some(vec![1.0, 2.0, 3.0]);
        assert!(cfg.source_refs().is_err());
    }

    #[test]
    fn deflate_requires_known_sources() {
        let dir = tempfile::tempdir().unwrap();
        let r = dir.path().to_str().unwrap();
        let (code, _, err) = run_str(&["--registry", r, "deflate", "painleve", "--sources", "u1", "--iterations", "2"]);
        assert_eq!(code, EXIT_USAGE, "{err}");
        assert_eq!(run_str(&["--registry", r, "deflate", "painleve"]).0, EXIT_USAGE);
    }
}
