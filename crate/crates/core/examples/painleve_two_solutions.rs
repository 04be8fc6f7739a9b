//! Painlevé: least squares finds u1, deflating u1 with p = 2 finds u2.
//!
//!     cargo run --release --example painleve_two_solutions

use nndeflate::autodiff::BatchMatrix;
use nndeflate::model::Model;
use nndeflate::optimizer::LossMode;
use nndeflate::problems::Problem;
use nndeflate::registry::{relative_distance, solve, verify_theta, Registry, SolveRequest, SourceRef, CANONICAL_VERIFY_SEED, VERIFY_SAMPLES};

fn slope_at_zero(problem: &Problem, model: &Model, theta: &[f64]) -> nndeflate::Result<f64> {
    let h = 1e-4;
    let u = model.values(theta, &BatchMatrix::column(vec![0.0, h]), &problem.steps())?;
    Ok((u[0][1] - u[0][0]) / h)
}

fn main() -> nndeflate::Result<()> {
    let problem = Problem::by_name("painleve")?;
    let mut registry = Registry::in_memory(&problem.name);

    let first = solve(&problem, &registry, &SolveRequest::desk(&problem, LossMode::Ls, 1)?)?;
    let v1 = verify_theta(&problem, &first.model, &first.theta, VERIFY_SAMPLES, CANONICAL_VERIFY_SEED)?;
    println!("u1: residual {:.3e}, u'(0) ~ {:+.3}", v1.residual, slope_at_zero(&problem, &first.model, &first.theta)?);
    let u1 = registry.store(&problem, first, v1.residual, VERIFY_SAMPLES)?;

    let req = SolveRequest::desk(&problem, LossMode::Nd, 2)?.with_sources(vec![SourceRef { id: u1.clone(), power: 2.0 }]);
    let second = solve(&problem, &registry, &req)?;
    let v2 = verify_theta(&problem, &second.model, &second.theta, VERIFY_SAMPLES, CANONICAL_VERIFY_SEED)?;
    println!("u2: residual {:.3e}, u'(0) ~ {:+.3}", v2.residual, slope_at_zero(&problem, &second.model, &second.theta)?);

    let t1 = registry.theta(&u1)?;
    let rec = registry.get(&u1)?;
    let d = relative_distance(&problem, (&second.model, &second.theta), (&rec.model, &t1), VERIFY_SAMPLES, CANONICAL_VERIFY_SEED)?;
    println!("relative distance u1-u2: {d:.3}");
    Ok(())
}
