//! Solve the manufactured problem u'' = 2, u(0) = 0, u(1) = 1 (exact u = x²),
//! persist it, reload it and export a grid.
//!
//!     cargo run --release --example registry_export

use nndeflate::optimizer::LossMode;
use nndeflate::problems::Problem;
use nndeflate::registry::{solve, AdmissionRule, Grid, Registry, SolveRequest};

fn main() -> nndeflate::Result<()> {
    let root = std::env::temp_dir().join(format!("nndeflate-example-{}", std::process::id()));
    let problem = Problem::by_name("manufactured_linear")?;
    let mut registry = Registry::open(&root, &problem.name)?;
    let candidate = solve(&problem, &registry, &SolveRequest::desk(&problem, LossMode::Ls, 1)?)?;
    let admission = registry.admit(&problem, candidate, &AdmissionRule::default())?;
    println!("{admission:?}");

    let reopened = Registry::open(&root, &problem.name)?;
    let id = &reopened.records()[0].id;
    let grid = Grid::parse("0:1:11")?;
    let mut csv = Vec::new();
    reopened.export(id, &grid, &mut csv)?;
    for (line, x) in String::from_utf8_lossy(&csv).lines().skip(1).zip(grid.points()) {
        let u: f64 = line.split(',').nth(1).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN);
        println!("x = {x:.1}  u = {u:.6}  x² = {:.6}", x * x);
    }
    std::fs::remove_dir_all(&root).ok();
    Ok(())
}
