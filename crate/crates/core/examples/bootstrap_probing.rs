//! Four-stage campaign on u'' = -(π²/4) u² (u² - 10), u'(0) = 0, u(1) = 0.
//! The zero solution is stored first and deflated; cosine probing reaches
//! the large-amplitude solutions.
//!
//!     cargo run --release --example bootstrap_probing

use nndeflate::problems::Problem;
use nndeflate::registry::{run_campaign, CampaignConfig, Registry};

fn main() -> nndeflate::Result<()> {
    let problem = Problem::by_name("bootstrap_b")?;
    let config = CampaignConfig::desk(&problem);
    let mut registry = Registry::in_memory(&problem.name);
    let outcome = run_campaign(&problem, &config, 7, &mut registry)?;
    for a in &outcome.attempts {
        println!("stage {} J={:?}: {:?}", a.stage, a.j, a.outcome);
    }
    for r in registry.records() {
        println!("{} [{}] residual {:.3e} initial c_J {:?}", r.id, r.stage, r.residual, r.initial_c_j[0]);
    }
    println!("{} solutions in {:.1}s", registry.len(), outcome.wall_time);
    Ok(())
}
