//! Reverse-mode parameter gradients of the least-squares loss against central
//! differences, and the finite-difference input derivatives the loss is built on.
//!
//!     cargo run --release --example tape_gradients

use nndeflate::autodiff::{BatchMatrix, Tape};
use nndeflate::network::{ActivationKind, InitScheme};
use nndeflate::problems::Problem;
use nndeflate::registry::initial_theta;
use nndeflate::residual::{derivative_1d, ls_loss};
use nndeflate::sampler::sample_interior;
use nndeflate::stencil::{StencilConfig, Steps};

fn main() -> nndeflate::Result<()> {
    // Coarse input stencils keep roundoff in u'' far below the 1e-6 parameter step.
    let mut problem = Problem::by_name("bootstrap_a")?;
    problem.stencil = StencilConfig::uniform(0.05);
    let model = problem.model(2, 8, ActivationKind::Tanh, false, None)?;
    let theta = initial_theta(&problem, &model, 3, InitScheme::Xavier)?;
    let x = sample_interior(&problem.domain(), 64, 5)?.points;

    let loss = |t: &[f64]| -> nndeflate::Result<f64> {
        let mut tape = Tape::new(t);
        let l = ls_loss(&mut tape, &problem, &model, &x)?;
        Ok(tape.value(l).item())
    };
    let mut tape = Tape::new(&theta);
    let l = ls_loss(&mut tape, &problem, &model, &x)?;
    let grads = tape.backward(l)?;
    println!("loss {:.6e} over {} parameters", tape.value(l).item(), theta.len());

    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        let at = |k: f64| {
            let mut t = theta.clone();
            t[i] += k * h;
            loss(&t)
        };
        let fd = (8.0 * (at(1.0)? - at(-1.0)?) - (at(2.0)? - at(-2.0)?)) / (12.0 * h);
        let g = grads.flat()[i];
        worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-8));
    }
    println!("max relative gradient error {worst:.2e}");

    let steps = Steps([1e-5, 1e-4, 1e-3, 1e-2]);
    let pts = BatchMatrix::column(vec![0.3, 0.7]);
    let sin = |t: &mut Tape<'_>, q: &BatchMatrix| {
        let v = t.constant(q.clone());
        Ok(t.sin(v))
    };
    for order in 1..=4 {
        let mut t = Tape::new(&[]);
        let d = derivative_1d(&mut t, sin, &pts, order, &steps)?;
        let exact: Vec<f64> = [0.3f64, 0.7]
            .iter()
            .map(|&p| match order % 4 {
                1 => p.cos(),
                2 => -p.sin(),
                3 => -p.cos(),
                _ => p.sin(),
            })
            .collect();
        println!("d^{order} sin: fd {:.8?} exact {:.8?}", t.value(d).data(), exact);
    }
    Ok(())
}
