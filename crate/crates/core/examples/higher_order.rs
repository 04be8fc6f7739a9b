//! Fourth-order problems with three-point and four-condition wrappers:
//! Graef (β = 10, γ = 1/5) and the channel flow (R = -11, γ = 1.5).
//!
//!     cargo run --release --example higher_order

use nndeflate::optimizer::LossMode;
use nndeflate::problems::Problem;
use nndeflate::registry::{solve, verify_theta, Registry, SolveRequest, CANONICAL_VERIFY_SEED, VERIFY_SAMPLES};
use nndeflate::residual::condition_errors;

fn main() -> nndeflate::Result<()> {
    for name in ["graef", "channel_flow"] {
        let problem = Problem::by_name(name)?;
        let registry = Registry::in_memory(&problem.name);
        let c = solve(&problem, &registry, &SolveRequest::desk(&problem, LossMode::Ls, 1)?)?;
        let v = verify_theta(&problem, &c.model, &c.theta, VERIFY_SAMPLES, CANONICAL_VERIFY_SEED)?;
        let errors = condition_errors(&problem, &c.model, &c.theta)?;
        let worst = errors.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        println!("{name}: residual {:.3e}, worst boundary error {worst:.1e}, {:.1}s", v.residual, c.report.wall_time);
    }
    Ok(())
}
