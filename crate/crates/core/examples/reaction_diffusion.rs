//! Gray-Scott steady states on the 3-D star domain: the trivial pair (1, 0)
//! is exact, and one coupled deflated run moves away from it.
//!
//!     cargo run --release --example reaction_diffusion

use nndeflate::network::InitScheme;
use nndeflate::optimizer::LossMode;
use nndeflate::problems::Problem;
use nndeflate::registry::{separation, solve, verify_theta, Registry, SolveRequest, CANONICAL_VERIFY_SEED, VERIFY_SAMPLES};

fn main() -> nndeflate::Result<()> {
    let problem = Problem::by_name("reaction_diffusion")?;
    let mut registry = Registry::in_memory(&problem.name);
    let model = problem.default_model()?;
    let trivial = registry.seed_trivial(&problem, &model, InitScheme::UniformFanin)?.expect("trivial pair");
    println!("{trivial}: residual {:.3e}", registry.get(&trivial)?.residual);

    let req = SolveRequest::desk(&problem, LossMode::SystemNd, 3)?.with_sources(registry.all_sources(2.0));
    let c = solve(&problem, &registry, &req)?;
    let v = verify_theta(&problem, &c.model, &c.theta, VERIFY_SAMPLES, CANONICAL_VERIFY_SEED)?;
    let t0 = registry.theta(&trivial)?;
    let s = separation(&problem, (&c.model, &c.theta), (&model, &t0), VERIFY_SAMPLES, CANONICAL_VERIFY_SEED)?;
    println!(
        "deflated pair: residual {:.3e} ± {:.1e}, distance from trivial {:.3} (absolute {:.3}), {:.1}s",
        v.residual, v.std_error, s.relative, s.absolute, c.report.wall_time
    );
    Ok(())
}
