//! Uniform Monte-Carlo sampling of problem domains and their boundaries,
//! and the discrete L² norm `(1/Np Σ |u(x_i)|²)^{1/2}`.

use serde::{Deserialize, Serialize};

use crate::autodiff::BatchMatrix;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Radius of the bounding ball used for rejection sampling of the star domain.
const STAR_BOUND: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Interval { a: f64, b: f64 },
    /// `{ x in R^dim : r < |x| < big_r }`.
    Annulus { dim: usize, r: f64, big_r: f64 },
    /// `{ x in R^3 : |x| < ρ(x) }` with `ρ(x) = 1 + 0.1 sin(5 arg(x1 + i x2))`.
    Star3d,
}

/// Star-domain boundary radius at the azimuth of `x`.
pub fn star_radius(x: &[f64]) -> f64 {
    1.0 + 0.1 * (5.0 * x[1].atan2(x[0])).sin()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub points: BatchMatrix,
    pub seed: u64,
    pub iteration: usize,
}

impl Domain {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Domain::Interval { a, b } if !(a < b) => {
                Err(Error::config(format!("interval needs a < b, got ({a}, {b})")))
            }
            Domain::Annulus { dim, r, big_r } if dim == 0 || !(0.0 < r && r < big_r) => Err(
                Error::config(format!("annulus needs d >= 1 and 0 < r < R, got d={dim}, r={r}, R={big_r}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            Domain::Interval { .. } => 1,
            Domain::Annulus { dim, .. } => dim,
            Domain::Star3d => 3,
        }
    }

    /// Length scale used to size finite-difference steps.
    pub fn diameter(&self) -> f64 {
        match *self {
            Domain::Interval { a, b } => b - a,
            Domain::Annulus { big_r, .. } => 2.0 * big_r,
            Domain::Star3d => 2.0 * STAR_BOUND,
        }
    }

    /// Whether `x` lies in the open domain.
    pub fn contains(&self, x: &[f64]) -> bool {
        match *self {
            Domain::Interval { a, b } => a < x[0] && x[0] < b,
            Domain::Annulus { r, big_r, .. } => {
                let s = norm(x);
                r < s && s < big_r
            }
            Domain::Star3d => norm(x) < star_radius(x),
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn random_direction(rng: &mut SplitMix64, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

/// `n_points` i.i.d. uniform samples of the open domain.
pub fn sample_interior(domain: &Domain, n_points: usize, seed: u64) -> Result<SampleBatch> {
    domain.validate()?;
    if n_points == 0 {
        return Err(Error::config("sample_interior needs at least one point"));
    }
    let mut rng = SplitMix64::new(seed);
    let dim = domain.dim();
    let mut data = Vec::with_capacity(n_points * dim);
    match *domain {
        Domain::Interval { a, b } => {
            for _ in 0..n_points {
                // (0,1) open: redraw the measure-zero endpoint.
                let mut u = rng.next_f64();
                while u == 0.0 {
                    u = rng.next_f64();
                }
                data.push(a + (b - a) * u);
            }
        }
        Domain::Annulus { dim, r, big_r } => {
            let (rd, big_rd) = (r.powi(dim as i32), big_r.powi(dim as i32));
            for _ in 0..n_points {
                let dir = random_direction(&mut rng, dim);
                let s = loop {
                    let s = (rd + rng.next_f64() * (big_rd - rd)).powf(1.0 / dim as f64);
                    if s > r && s < big_r {
                        break s;
                    }
                };
                data.extend(dir.iter().map(|c| c * s));
            }
        }
        Domain::Star3d => {
            let max_attempts = 100 * n_points;
            let mut attempts = 0;
            let mut accepted = 0;
            while accepted < n_points {
                if attempts >= max_attempts {
                    return Err(Error::config(format!(
                        "rejection sampling accepted {accepted} of {attempts} draws (below 1%)"
                    )));
                }
                attempts += 1;
                let dir = random_direction(&mut rng, 3);
                let s = STAR_BOUND * rng.next_f64().cbrt();
                let x: Vec<f64> = dir.iter().map(|c| c * s).collect();
                if domain.contains(&x) {
                    data.extend(x);
                    accepted += 1;
                }
            }
        }
    }
    Ok(SampleBatch {
        points: BatchMatrix::new(n_points, dim, data)?,
        seed,
        iteration: 0,
    })
}

/// `n_points` samples of the boundary, uniform with respect to surface measure.
///
/// Intervals alternate between the two endpoints starting at `a`. The star
/// domain weights directions by the surface Jacobian
/// `ρ sqrt(ρ² + (∂ρ/∂φ)² / sin²θ)`, capped where `sin θ < 0.05`; the cap
/// affects about 0.1% of the surface area.
pub fn sample_boundary(domain: &Domain, n_points: usize, seed: u64) -> Result<SampleBatch> {
    domain.validate()?;
    if n_points == 0 {
        return Err(Error::config("sample_boundary needs at least one point"));
    }
    let mut rng = SplitMix64::new(seed);
    let dim = domain.dim();
    let mut data = Vec::with_capacity(n_points * dim);
    match *domain {
        Domain::Interval { a, b } => {
            for i in 0..n_points {
                data.push(if i % 2 == 0 { a } else { b });
            }
        }
        Domain::Annulus { dim, r, big_r } => {
            let (wi, wo) = (r.powi(dim as i32 - 1), big_r.powi(dim as i32 - 1));
            let p_outer = wo / (wi + wo);
            for _ in 0..n_points {
                let dir = random_direction(&mut rng, dim);
                let s = if rng.next_f64() < p_outer { big_r } else { r };
                data.extend(dir.iter().map(|c| c * s));
            }
        }
        Domain::Star3d => {
            const MIN_SIN: f64 = 0.05;
            let weight = |dir: &[f64]| {
                let rho = star_radius(dir);
                let phi = dir[1].atan2(dir[0]);
                let d_rho = 0.5 * (5.0 * phi).cos();
                let sin_t = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt().max(MIN_SIN);
                rho * (rho * rho + d_rho * d_rho / (sin_t * sin_t)).sqrt()
            };
            let w_max = 1.1 * (1.1f64 * 1.1 + 0.25 / (MIN_SIN * MIN_SIN)).sqrt();
            let mut accepted = 0;
            while accepted < n_points {
                let dir = random_direction(&mut rng, 3);
                if rng.next_f64() * w_max < weight(&dir) {
                    let rho = star_radius(&dir);
                    data.extend(dir.iter().map(|c| c * rho));
                    accepted += 1;
                }
            }
        }
    }
    Ok(SampleBatch {
        points: BatchMatrix::new(n_points, dim, data)?,
        seed,
        iteration: 0,
    })
}

/// Root mean square of `values`.
pub fn discrete_l2(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::config("discrete L2 norm of an empty sample"));
    }
    Ok((values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt())
}
