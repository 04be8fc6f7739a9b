//! Deflating u1 with power 1 lets training drift back onto u1; power 2 does not.
//!
//!     cargo run --release --example deflation_power

use nndeflate::optimizer::LossMode;
use nndeflate::problems::Problem;
use nndeflate::registry::{relative_distance, solve, verify_theta, Registry, SolveRequest, SourceRef, CANONICAL_VERIFY_SEED, VERIFY_SAMPLES};

fn main() -> nndeflate::Result<()> {
    let problem = Problem::by_name("painleve")?;
    let mut registry = Registry::in_memory(&problem.name);
    let first = solve(&problem, &registry, &SolveRequest::desk(&problem, LossMode::Ls, 1)?)?;
    let v = verify_theta(&problem, &first.model, &first.theta, VERIFY_SAMPLES, CANONICAL_VERIFY_SEED)?;
    let u1 = registry.store(&problem, first, v.residual, VERIFY_SAMPLES)?;
    let (m1, t1) = (registry.get(&u1)?.model.clone(), registry.theta(&u1)?);

    for power in [1.0, 2.0] {
        let req = SolveRequest::desk(&problem, LossMode::Nd, 2)?.with_sources(vec![SourceRef { id: u1.clone(), power }]);
        let c = solve(&problem, &registry, &req)?;
        let d = relative_distance(&problem, (&c.model, &c.theta), (&m1, &t1), VERIFY_SAMPLES, CANONICAL_VERIFY_SEED)?;
        println!("p = {power}: distance to u1 {d:.4}");
    }
    Ok(())
}
