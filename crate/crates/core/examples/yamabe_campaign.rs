//! Reduced Yamabe campaign on the 2-D annulus 1 < |x| < 100, ending with
//! a varying shift α ∈ [0.01, 100].
//!
//!     cargo run --release --example yamabe_campaign [seeds-per-stage]

use nndeflate::problems::Problem;
use nndeflate::registry::{run_campaign, CampaignConfig, Registry};

fn main() -> nndeflate::Result<()> {
    let seeds: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let problem = Problem::by_name("yamabe2d")?;
    let mut config = CampaignConfig::desk(&problem);
    for stage in config.stages.iter_mut() {
        stage.seeds = seeds;
    }
    let mut registry = Registry::in_memory(&problem.name);
    let outcome = run_campaign(&problem, &config, 11, &mut registry)?;
    for a in &outcome.attempts {
        println!("stage {} J={:?}: {:?}", a.stage, a.j, a.outcome);
    }
    println!("{} solutions in {:.1}s", registry.len(), outcome.wall_time);
    Ok(())
}
