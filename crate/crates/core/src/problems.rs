//! The problem catalogue: domain, residual form, boundary data, default
//! wrapper and probing family, and desk-scale training defaults.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::autodiff::{BatchMatrix, Tape, Var};
use crate::deflation::ShiftSchedule;
use crate::error::{Error, Result};
use crate::model::{FieldModel, Model};
use crate::network::{ActivationKind, InitScheme, NetworkParams};
use crate::probing::ProbingBasis;
use crate::residual::{FieldDerivs, Needs};
use crate::rng::SplitMix64;
use crate::sampler::Domain;
use crate::stencil::{StencilConfig, Steps};
use crate::wrappers::BoundaryWrapper;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemKind {
    /// `u'' = 100u² - 1000x` on (0,1), `u(0) = 0`, `u(1) = √10`.
    Painleve,
    /// `u'''' = βx(1+u²)`, `u(0) = u'(1) = u''(1) = 0`, `u''(0) = u''(γ)`.
    Graef { beta: f64, gamma: f64 },
    /// `u'''' + γ(x u''' + 3u'') + R(u u''' - u' u'') = 0`,
    /// `u(0) = u''(0) = 0`, `u(1) = 1`, `u'(1) = 0`.
    ChannelFlow { reynolds: f64, gamma: f64 },
    /// `u'' = λ(1+u⁴)`, `u'(0) = 0`, `u(1) = 0`.
    BootstrapA { lambda: f64 },
    /// `u'' = -(π²/4)u²(u²-10)`, `u'(0) = 0`, `u(1) = 0`.
    BootstrapB,
    /// `-c_d Δu - s_d u + u^q / |x|³ = 0` on `1 < |x| < 100`, `u = 1` on the boundary.
    Yamabe { dim: usize },
    /// `ε_u Δu - uv² + F(1-u) = 0`, `ε_v Δv + uv² - (F+k)v = 0` on the star
    /// domain, `u = 1`, `v = 0` on the boundary.
    ReactionDiffusion { eps_u: f64, eps_v: f64, feed: f64, kill: f64 },
    /// `u'' = 2` on (0,1), `u(0) = 0`, `u(1) = 1`; exact solution `x²`.
    ManufacturedLinear,
}

/// A condition `Σ coeff · u^(order)(point) = target` for interval problems.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCondition {
    pub terms: Vec<(f64, usize, f64)>,
    pub target: f64,
}

impl PointCondition {
    fn value(point: f64, order: usize, target: f64) -> Self {
        Self { terms: vec![(point, order, 1.0)], target }
    }
}

/// A documented solution-count fact with its source.
#[derive(Debug, Clone, PartialEq)]
pub struct Fact {
    pub statement: &'static str,
    pub solutions: Option<usize>,
    pub citation: &'static str,
}

/// Desk-scale training defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Defaults {
    pub depth: usize,
    pub width: usize,
    pub activation: ActivationKind,
    pub scheme: InitScheme,
    pub iterations: usize,
    pub batch: usize,
    /// `(q0, q1)`: the rate decays from `10^q0` to `10^q1`.
    pub lr_powers: (f64, f64),
    pub probing_range: (f64, f64),
    /// Shift for single deflated runs and the constant-shift campaign stages.
    pub shift: ShiftSchedule,
}

pub const REACTION_DIFFUSION_SCALE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub name: String,
    pub kind: ProblemKind,
    #[serde(default)]
    pub stencil: StencilConfig,
}

pub const NAMES: &[&str] = &[
    "painleve",
    "graef",
    "channel_flow",
    "bootstrap_a",
    "bootstrap_b",
    "yamabe2d",
    "yamabe3d",
    "yamabe6d",
    "reaction_diffusion",
    "manufactured_linear",
];

/// Every catalogue entry with its printed constants.
pub fn catalogue() -> Vec<Problem> {
    NAMES.iter().map(|n| Problem::by_name(n).expect("catalogue name")).collect()
}

fn rd_kind(s: f64) -> ProblemKind {
    ProblemKind::ReactionDiffusion { eps_u: 2e-5 * s * s, eps_v: 1e-5 * s * s, feed: 0.04, kill: 0.06 }
}

impl Problem {
    pub fn new(name: impl Into<String>, kind: ProblemKind) -> Self {
        Self { name: name.into(), kind, stencil: StencilConfig::default() }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        let kind = match name {
            "painleve" => ProblemKind::Painleve,
            "graef" => ProblemKind::Graef { beta: 10.0, gamma: 0.2 },
            "channel_flow" => ProblemKind::ChannelFlow { reynolds: -11.0, gamma: 1.5 },
            "bootstrap_a" => ProblemKind::BootstrapA { lambda: 1.2 },
            "bootstrap_b" => ProblemKind::BootstrapB,
            "yamabe" | "yamabe2d" => ProblemKind::Yamabe { dim: 2 },
            "yamabe3d" => ProblemKind::Yamabe { dim: 3 },
            "yamabe6d" => ProblemKind::Yamabe { dim: 6 },
            "reaction_diffusion" => rd_kind(REACTION_DIFFUSION_SCALE),
            "manufactured_linear" => ProblemKind::ManufacturedLinear,
            _ => return Err(Error::NotFound { kind: "problem", name: name.into() }),
        };
        let name = if name == "yamabe" { "yamabe2d" } else { name };
        Ok(Self::new(name, kind))
    }

    /// Override a named constant (`beta`, `gamma`, `reynolds`, `lambda`,
    /// `eps_u`, `eps_v`, `feed`, `kill`, `scale`).
    pub fn set_constant(&mut self, key: &str, value: f64) -> Result<()> {
        let slot: &mut f64 = match (&mut self.kind, key) {
            (ProblemKind::Graef { beta, .. }, "beta") => beta,
            (ProblemKind::Graef { gamma, .. }, "gamma") => gamma,
            (ProblemKind::ChannelFlow { reynolds, .. }, "reynolds") => reynolds,
            (ProblemKind::ChannelFlow { gamma, .. }, "gamma") => gamma,
            (ProblemKind::BootstrapA { lambda }, "lambda") => lambda,
            (ProblemKind::ReactionDiffusion { eps_u, .. }, "eps_u") => eps_u,
            (ProblemKind::ReactionDiffusion { eps_v, .. }, "eps_v") => eps_v,
            (ProblemKind::ReactionDiffusion { feed, .. }, "feed") => feed,
            (ProblemKind::ReactionDiffusion { kill, .. }, "kill") => kill,
            (ProblemKind::ReactionDiffusion { .. }, "scale") => {
                let (feed, kill) = match self.kind {
                    ProblemKind::ReactionDiffusion { feed, kill, .. } => (feed, kill),
                    _ => unreachable!(),
                };
                self.kind = rd_kind(value);
                if let ProblemKind::ReactionDiffusion { feed: f, kill: k, .. } = &mut self.kind {
                    *f = feed;
                    *k = kill;
                }
                return Ok(());
            }
            _ => return Err(Error::config(format!("{} has no constant '{key}'", self.name))),
        };
        *slot = value;
        Ok(())
    }

    pub fn domain(&self) -> Domain {
        match self.kind {
            ProblemKind::Yamabe { dim } => Domain::Annulus { dim, r: 1.0, big_r: 100.0 },
            ProblemKind::ReactionDiffusion { .. } => Domain::Star3d,
            _ => Domain::Interval { a: 0.0, b: 1.0 },
        }
    }

    pub fn dim(&self) -> usize {
        self.domain().dim()
    }

    pub fn field_count(&self) -> usize {
        match self.kind {
            ProblemKind::ReactionDiffusion { .. } => 2,
            _ => 1,
        }
    }

    pub fn steps(&self) -> Steps {
        self.stencil.steps(self.domain().diameter())
    }

    pub fn needs(&self) -> Needs {
        match self.kind {
            ProblemKind::Painleve
            | ProblemKind::BootstrapA { .. }
            | ProblemKind::BootstrapB
            | ProblemKind::ManufacturedLinear => Needs::orders(&[2]),
            ProblemKind::Graef { .. } => Needs::orders(&[4]),
            ProblemKind::ChannelFlow { .. } => Needs::orders(&[1, 2, 3, 4]),
            ProblemKind::Yamabe { .. } | ProblemKind::ReactionDiffusion { .. } => Needs::laplacian(),
        }
    }

    /// Whether the all-zero network under the default wrappers is an exact
    /// (trivial) solution: `u = 0` for bootstrap_b, `(u, v) = (1, 0)` for
    /// reaction-diffusion.
    pub fn has_trivial_solution(&self) -> bool {
        matches!(self.kind, ProblemKind::BootstrapB | ProblemKind::ReactionDiffusion { .. })
    }

    pub fn validate(&self) -> Result<()> {
        self.stencil.validate()?;
        match self.kind {
            ProblemKind::Yamabe { dim } if dim < 2 => Err(Error::config("yamabe needs d >= 2")),
            ProblemKind::Graef { gamma, .. } if !(gamma > 0.0 && gamma < 1.0) => {
                Err(Error::config(format!("graef needs 0 < γ < 1, got {gamma}")))
            }
            _ => Ok(()),
        }
    }

    /// Boundary-exact wrapper for each field.
    pub fn default_wrappers(&self) -> Vec<BoundaryWrapper> {
        match self.kind {
            ProblemKind::Painleve => vec![BoundaryWrapper::dirichlet(0.0, 1.0, 0.0, 10f64.sqrt())],
            ProblemKind::Graef { gamma, .. } => vec![BoundaryWrapper::ThreePointGraef { gamma }],
            ProblemKind::ChannelFlow { .. } => vec![BoundaryWrapper::ChannelFlow],
            ProblemKind::BootstrapA { .. } | ProblemKind::BootstrapB => {
                vec![BoundaryWrapper::mixed(0.0, 1.0, 0.0, 0.0)]
            }
            ProblemKind::Yamabe { .. } => vec![BoundaryWrapper::Annulus { r: 1.0, big_r: 100.0, value: 1.0 }],
            ProblemKind::ReactionDiffusion { .. } => vec![
                BoundaryWrapper::StarDomain { value: 1.0 },
                BoundaryWrapper::StarDomain { value: 0.0 },
            ],
            ProblemKind::ManufacturedLinear => vec![BoundaryWrapper::dirichlet(0.0, 1.0, 0.0, 1.0)],
        }
    }

    /// The boundary-compatible probing basis with `j` modes, if the problem has one.
    pub fn probing_basis(&self, j: usize, c_range: (f64, f64)) -> Result<ProbingBasis> {
        match self.kind {
            ProblemKind::BootstrapA { .. } | ProblemKind::BootstrapB => Ok(ProbingBasis::cosine_mixed(0.0, 1.0, j, c_range)),
            ProblemKind::Yamabe { .. } => Ok(ProbingBasis::sine_annulus(1.0, 100.0, j, c_range)),
            ProblemKind::ReactionDiffusion { .. } => Ok(ProbingBasis::radial_sine(j, c_range)),
            _ => Err(Error::config(format!("{} has no boundary-compatible probing family", self.name))),
        }
    }

    /// Inputs are rescaled to order one before entering the raw network.
    pub fn input_scale(&self) -> f64 {
        match self.kind {
            ProblemKind::Yamabe { .. } => 100.0,
            _ => 1.0,
        }
    }

    pub fn defaults(&self) -> Defaults {
        let base = Defaults {
            depth: 3,
            width: 32,
            activation: ActivationKind::ReluCubed,
            scheme: InitScheme::UniformFanin,
            iterations: 5000,
            batch: 256,
            lr_powers: (-2.0, -4.0),
            probing_range: (-5.0, 5.0),
            shift: ShiftSchedule::default(),
        };
        match self.kind {
            ProblemKind::Yamabe { .. } => Defaults {
                iterations: 2000,
                batch: 1024,
                lr_powers: (-2.0, -3.0),
                probing_range: (-1.0, 1.0),
                ..base
            },
            ProblemKind::ReactionDiffusion { .. } => Defaults {
                width: 24,
                iterations: 15000,
                batch: 512,
                lr_powers: (-2.0, -4.0),
                probing_range: (-1.0, 1.0),
                shift: ShiftSchedule::range(1e-2, 1.0),
                ..base
            },
            _ => base,
        }
    }

    /// Build the model for this problem: exact wrappers unless `penalty`,
    /// optional probing with `probing_j` modes.
    pub fn model(&self, depth: usize, width: usize, activation: ActivationKind, penalty: bool, probing: Option<ProbingBasis>) -> Result<Model> {
        let d = self.dim();
        let wrappers = if penalty {
            vec![BoundaryWrapper::None; self.field_count()]
        } else {
            self.default_wrappers()
        };
        for w in &wrappers {
            w.validate(&self.domain())?;
        }
        let fields = wrappers
            .into_iter()
            .map(|w| FieldModel::new(d, depth, width, activation, w, probing.clone()).with_input_scale(self.input_scale()))
            .collect();
        let m = Model::new(fields);
        m.validate()?;
        Ok(m)
    }

    /// Model with desk defaults and exact wrappers.
    pub fn default_model(&self) -> Result<Model> {
        let d = self.defaults();
        self.model(d.depth, d.width, d.activation, false, None)
    }

    /// Problem-specific adjustments to freshly drawn parameters.
    pub fn adjust_init(&self, field: &FieldModel, params: &mut NetworkParams, seed: u64) {
        if let (ProblemKind::ChannelFlow { .. }, BoundaryWrapper::ChannelFlow) = (&self.kind, &field.wrapper) {
            let last = params.spec.depth - 1;
            params.bias_mut(last).iter_mut().for_each(|b| *b = 0.0);
            params.extras_mut()[0] = SplitMix64::new(seed ^ 0x6368_616e).uniform(-5.0, 0.0);
        }
    }

    /// Interval boundary conditions, used by the penalty loss.
    pub fn point_conditions(&self) -> Vec<PointCondition> {
        match self.kind {
            ProblemKind::Painleve => vec![PointCondition::value(0.0, 0, 0.0), PointCondition::value(1.0, 0, 10f64.sqrt())],
            ProblemKind::Graef { gamma, .. } => vec![
                PointCondition::value(0.0, 0, 0.0),
                PointCondition::value(1.0, 1, 0.0),
                PointCondition::value(1.0, 2, 0.0),
                PointCondition { terms: vec![(0.0, 2, 1.0), (gamma, 2, -1.0)], target: 0.0 },
            ],
            ProblemKind::ChannelFlow { .. } => vec![
                PointCondition::value(0.0, 0, 0.0),
                PointCondition::value(0.0, 2, 0.0),
                PointCondition::value(1.0, 0, 1.0),
                PointCondition::value(1.0, 1, 0.0),
            ],
            ProblemKind::BootstrapA { .. } | ProblemKind::BootstrapB => {
                vec![PointCondition::value(0.0, 1, 0.0), PointCondition::value(1.0, 0, 0.0)]
            }
            ProblemKind::ManufacturedLinear => vec![PointCondition::value(0.0, 0, 0.0), PointCondition::value(1.0, 0, 1.0)],
            ProblemKind::Yamabe { .. } | ProblemKind::ReactionDiffusion { .. } => Vec::new(),
        }
    }

    /// Dirichlet value of each field on the boundary of a multi-dimensional domain.
    pub fn dirichlet_values(&self) -> Vec<f64> {
        match self.kind {
            ProblemKind::Yamabe { .. } => vec![1.0],
            ProblemKind::ReactionDiffusion { .. } => vec![1.0, 0.0],
            _ => Vec::new(),
        }
    }

    pub fn facts(&self) -> Vec<Fact> {
        let f = |statement, solutions, citation| Fact { statement, solutions, citation };
        match self.kind {
            ProblemKind::Painleve => vec![f("exactly two solutions, u1'(0) > 0 and u2'(0) < 0", Some(2), "Hastings & Troy (1989)")],
            ProblemKind::Graef { .. } => vec![f("at least two positive solutions for β = 10, γ = 1/5", None, "Graef, Qian & Yang (2003)")],
            ProblemKind::ChannelFlow { .. } => vec![f("three solutions found by homotopy analysis at R = -11, γ = 1.5", Some(3), "Liao (2012)")],
            ProblemKind::BootstrapA { .. } => vec![f("two solutions for 0 < λ < λ* = 1.30107", Some(2), "Hao, Hauenstein, Li & Sommese (2014)")],
            ProblemKind::BootstrapB => vec![f("eight solutions including the trivial one", Some(8), "Hao, Hauenstein, Li & Sommese (2014)")],
            ProblemKind::Yamabe { dim: 2 } => vec![f("nine solutions found by classical deflation", None, "Farrell, Birkisson & Funke (2015)")],
            ProblemKind::Yamabe { .. } => Vec::new(),
            ProblemKind::ReactionDiffusion { .. } => vec![f("trivial pair u = 1, v = 0; constants are not the published ones", None, "Pearson (1993)")],
            ProblemKind::ManufacturedLinear => vec![f("unique solution x²", Some(1), "closed form")],
        }
    }

    /// Residual columns, left side minus right side of each equation.
    pub fn residual(&self, tape: &mut Tape<'_>, fields: &[FieldDerivs], x: &BatchMatrix) -> Result<Vec<Var>> {
        if fields.len() != self.field_count() {
            return Err(Error::config(format!("{} expects {} fields, got {}", self.name, self.field_count(), fields.len())));
        }
        let f = &fields[0];
        let u = f.value;
        Ok(match self.kind {
            ProblemKind::Painleve => {
                let d2 = f.d(2)?;
                let u2 = tape.mul(u, u)?;
                let r = tape.lincomb(&[(d2, 1.0), (u2, -100.0)])?;
                let forcing = tape.constant(x.map(|x| 1000.0 * x));
                vec![tape.add(r, forcing)?]
            }
            ProblemKind::Graef { beta, .. } => {
                let d4 = f.d(4)?;
                let u2 = tape.mul(u, u)?;
                let one_plus = tape.add_scalar(u2, 1.0);
                let bx = tape.constant(x.map(|x| beta * x));
                let rhs = tape.mul(bx, one_plus)?;
                vec![tape.sub(d4, rhs)?]
            }
            ProblemKind::ChannelFlow { reynolds, gamma } => {
                let (d1, d2, d3, d4) = (f.d(1)?, f.d(2)?, f.d(3)?, f.d(4)?);
                let xc = tape.constant(x.clone());
                let xd3 = tape.mul(xc, d3)?;
                let ud3 = tape.mul(u, d3)?;
                let d1d2 = tape.mul(d1, d2)?;
                vec![tape.lincomb(&[
                    (d4, 1.0),
                    (xd3, gamma),
                    (d2, 3.0 * gamma),
                    (ud3, reynolds),
                    (d1d2, -reynolds),
                ])?]
            }
            ProblemKind::BootstrapA { lambda } => {
                let d2 = f.d(2)?;
                let u4 = tape.pow_const(u, 4.0)?;
                let r = tape.lincomb(&[(d2, 1.0), (u4, -lambda)])?;
                vec![tape.add_scalar(r, -lambda)]
            }
            ProblemKind::BootstrapB => {
                let d2 = f.d(2)?;
                let u2 = tape.mul(u, u)?;
                let u4 = tape.mul(u2, u2)?;
                let k = PI * PI / 4.0;
                vec![tape.lincomb(&[(d2, 1.0), (u4, k), (u2, -10.0 * k)])?]
            }
            ProblemKind::Yamabe { dim } => {
                let (coef, shift, power) = yamabe_constants(dim);
                let lap = f.lap()?;
                let up = tape.pow_const(u, power)?;
                let inv = tape.constant(x.map_rows(|p| p.iter().map(|v| v * v).sum::<f64>().powf(-1.5)));
                let nl = tape.mul(inv, up)?;
                vec![tape.lincomb(&[(lap, -coef), (u, -shift), (nl, 1.0)])?]
            }
            ProblemKind::ReactionDiffusion { eps_u, eps_v, feed, kill } => {
                let g = &fields[1];
                let v = g.value;
                let (lu, lv) = (f.lap()?, g.lap()?);
                let v2 = tape.mul(v, v)?;
                let uv2 = tape.mul(u, v2)?;
                let d1 = tape.lincomb(&[(lu, eps_u), (uv2, -1.0), (u, -feed)])?;
                let d1 = tape.add_scalar(d1, feed);
                let d2 = tape.lincomb(&[(lv, eps_v), (uv2, 1.0), (v, -(feed + kill))])?;
                vec![d1, d2]
            }
            ProblemKind::ManufacturedLinear => vec![tape.add_scalar(f.d(2)?, -2.0)],
        })
    }

    /// Residual at a single point from plain values: `fields[i]` holds
    /// `(u, [u', u'', u''', u''''], Δu)` with `None` for unsupplied entries.
    pub fn residual_at(&self, fields: &[PointValues], x: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new(&[]);
        let mut derivs = Vec::with_capacity(fields.len());
        for pv in fields {
            let value = tape.constant_scalar(pv.value);
            let mut orders = [None; 4];
            for (slot, v) in orders.iter_mut().zip(pv.orders) {
                *slot = v.map(|v| tape.constant_scalar(v));
            }
            let laplacian = pv.laplacian.map(|v| tape.constant_scalar(v));
            derivs.push(FieldDerivs { value, orders, laplacian });
        }
        let xm = BatchMatrix::new(1, x.len(), x.to_vec())?;
        let rs = self.residual(&mut tape, &derivs, &xm)?;
        Ok(rs.into_iter().map(|r| tape.value(r).item()).collect())
    }
}

/// Plain values of one field and its derivatives at a point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PointValues {
    pub value: f64,
    pub orders: [Option<f64>; 4],
    pub laplacian: Option<f64>,
}

/// `(c_d, s_d, q)` so the operator reads `-c_d Δu - s_d u + u^q/|x|³`.
pub fn yamabe_constants(dim: usize) -> (f64, f64, f64) {
    if dim == 2 {
        (8.0, 0.1, 5.0)
    } else {
        let d = dim as f64;
        (4.0 * (d - 1.0) / (d - 2.0), 0.125, (d + 2.0) / (d - 2.0))
    }
}
