//! Penalty-mode training misses u(0) = 0; the exact wrapper holds it for any weights.
//!
//!     cargo run --release --example penalty_vs_exact

use nndeflate::optimizer::LossMode;
use nndeflate::problems::Problem;
use nndeflate::registry::{solve, verify_theta, Registry, SolveRequest, SourceRef, CANONICAL_VERIFY_SEED, VERIFY_SAMPLES};
use nndeflate::residual::condition_errors;

fn main() -> nndeflate::Result<()> {
    let problem = Problem::by_name("painleve")?;
    let mut registry = Registry::in_memory(&problem.name);
    let first = solve(&problem, &registry, &SolveRequest::desk(&problem, LossMode::Ls, 1)?)?;
    let v = verify_theta(&problem, &first.model, &first.theta, VERIFY_SAMPLES, CANONICAL_VERIFY_SEED)?;
    let u1 = registry.store(&problem, first, v.residual, VERIFY_SAMPLES)?;
    let sources = vec![SourceRef { id: u1, power: 2.0 }];

    let exact = solve(&problem, &registry, &SolveRequest::desk(&problem, LossMode::Nd, 2)?.with_sources(sources.clone()))?;
    let e = condition_errors(&problem, &exact.model, &exact.theta)?;
    println!("exact wrapper: u(0) = {:+.3e}, u(1) - sqrt(10) = {:+.3e}", e[0], e[1]);

    for lambda in [1.0, 100.0] {
        let req = SolveRequest::desk(&problem, LossMode::NdPenalty { lambda }, 2)?.with_sources(sources.clone());
        let c = solve(&problem, &registry, &req)?;
        let e = condition_errors(&problem, &c.model, &c.theta)?;
        println!("penalty {lambda:>5}: u(0) = {:+.3e}, u(1) - sqrt(10) = {:+.3e}", e[0], e[1]);
    }
    Ok(())
}
