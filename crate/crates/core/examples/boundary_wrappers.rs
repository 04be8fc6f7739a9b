//! Untrained networks already satisfy every boundary condition.
//!
//!     cargo run --release --example boundary_wrappers

use nndeflate::problems::catalogue;
use nndeflate::registry::initial_theta;
use nndeflate::sampler::sample_boundary;

fn main() -> nndeflate::Result<()> {
    for problem in catalogue() {
        let d = problem.defaults();
        let model = problem.default_model()?;
        let mut worst: f64 = 0.0;
        for seed in 0..20 {
            let theta = initial_theta(&problem, &model, seed, d.scheme)?;
            if problem.dim() == 1 {
                for e in nndeflate::residual::condition_errors(&problem, &model, &theta)? {
                    worst = worst.max(e.abs());
                }
            } else {
                let b = sample_boundary(&problem.domain(), 64, seed)?.points;
                let values = model.values(&theta, &b, &problem.steps())?;
                for (u, g) in values.iter().zip(problem.dirichlet_values()) {
                    for v in u {
                        worst = worst.max((v - g).abs());
                    }
                }
            }
        }
        let kinds: Vec<String> = problem
            .default_wrappers()
            .iter()
            .map(|w| format!("{w:?}").split([' ', '{']).next().unwrap_or_default().to_string())
            .collect();
        println!("{:<20} {:<36} worst boundary error {worst:.2e}", problem.name, kinds.join(","));
    }
    Ok(())
}
