//! Boundary-exact compositions `u(x; θ)` of a raw network `û(x; θ)`.
//!
//! Every wrapper is a closed-form expression in `x`, `û` evaluated at `x`
//! (and possibly at fixed points), and a few trainable scalars, chosen so
//! that the boundary condition holds for every parameter value. Factors that
//! depend only on `x` are computed directly and enter the tape as constants.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::autodiff::{powf_exact, BatchMatrix, Tape, Var};
use crate::error::{Error, Result};
use crate::network::NetHandle;
use crate::sampler::{star_radius, Domain};
use crate::stencil::Steps;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryWrapper {
    /// Bare network; boundary conditions are enforced by a penalty term.
    None,
    /// `u(a) = a0`, `u(b) = b0`:
    /// `(x-a)^pa (x-b)^pb û + (b0-a0)(x-a)/(b-a) + a0`, `0 < p <= 1`.
    Dirichlet1d { a: f64, b: f64, a0: f64, b0: f64, pa: f64, pb: f64 },
    /// `u(a) = a0`, `u'(a) = a1`: `(x-a)^pa û + a1 (x-a) + a0`, `1 < pa <= 2`.
    OneSided1d { a: f64, a0: f64, a1: f64, pa: f64 },
    /// `u'(a) = a0`, `u(b) = b0`:
    /// `(x-a)^pa û(x) - (b-a)^pa û(b) + a0 x + b0 - a0 b`, `1 < pa <= 2`.
    Mixed1d { a: f64, b: f64, a0: f64, b0: f64, pa: f64 },
    /// `u'(a) = a0`, `u'(b) = b0`, with trainable `c1, c2`:
    /// `exp(pa x/(a-b)) (x-a)^pa ((x-b)^pb û + c2) + c1 + l4(x)`.
    Neumann1d { a: f64, b: f64, a0: f64, b0: f64, pa: f64, pb: f64 },
    /// `u(0) = u'(1) = u''(1) = 0`, `u''(0) = u''(γ)`:
    /// `(x-1)^3 û(x) + û(0) + c_γ x (x-1)^3`.
    ThreePointGraef { gamma: f64 },
    /// `u(0) = u''(0) = 0`, `u(1) = 1`, `u'(1) = 0`, trainable `c`:
    /// `x (x-1)^2 (x^2 û + c) e^{2x} + sin(πx/2)`.
    ChannelFlow,
    /// `u = value` on `|x| = r` and `|x| = R`:
    /// `û sin(π (|x|-r)/(R-r)) + value`.
    Annulus { r: f64, big_r: f64, value: f64 },
    /// `u = value` on `|x| = ρ(x)`: `û (|x|² - ρ²(x)) + value`.
    StarDomain { value: f64 },
}

fn check_power(p: f64, lo_open: f64, hi: f64, which: &str) -> Result<()> {
    if p > lo_open && p <= hi {
        Ok(())
    } else {
        Err(Error::config(format!("{which} = {p} outside ({lo_open}, {hi}]")))
    }
}

/// `base^p`, with fractional powers of negative bases taken as `-(|base|^p)`.
fn real_pow(base: f64, p: f64) -> Result<f64> {
    if p.fract() != 0.0 && base < 0.0 {
        return Ok(-powf_exact(-base, p));
    }
    Ok(powf_exact(base, p))
}

fn column_try(x: &BatchMatrix, f: impl Fn(f64) -> Result<f64>) -> Result<BatchMatrix> {
    let mut out = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        out.push(f(x.get(r, 0))?);
    }
    Ok(BatchMatrix::column(out))
}

impl BoundaryWrapper {
    /// Default Dirichlet wrapper with `pa = pb = 1`.
    pub fn dirichlet(a: f64, b: f64, a0: f64, b0: f64) -> Self {
        BoundaryWrapper::Dirichlet1d { a, b, a0, b0, pa: 1.0, pb: 1.0 }
    }

    /// Default mixed wrapper with `pa = 2`.
    pub fn mixed(a: f64, b: f64, a0: f64, b0: f64) -> Self {
        BoundaryWrapper::Mixed1d { a, b, a0, b0, pa: 2.0 }
    }

    pub fn neumann(a: f64, b: f64, a0: f64, b0: f64) -> Self {
        BoundaryWrapper::Neumann1d { a, b, a0, b0, pa: 2.0, pb: 2.0 }
    }

    pub fn one_sided(a: f64, a0: f64, a1: f64) -> Self {
        BoundaryWrapper::OneSided1d { a, a0, a1, pa: 2.0 }
    }

    /// Trainable scalars the wrapper adds to the network.
    pub fn scalar_count(&self) -> usize {
        match self {
            BoundaryWrapper::Neumann1d { .. } => 2,
            BoundaryWrapper::ChannelFlow => 1,
            _ => 0,
        }
    }

    pub fn is_exact(&self) -> bool {
        !matches!(self, BoundaryWrapper::None)
    }

    /// Check power ranges, interval ordering and compatibility with `domain`.
    pub fn validate(&self, domain: &Domain) -> Result<()> {
        let one_d = matches!(domain, Domain::Interval { .. });
        match *self {
            BoundaryWrapper::None => Ok(()),
            BoundaryWrapper::Dirichlet1d { a, b, pa, pb, .. } => {
                require(one_d && a < b, "dirichlet_1d needs an interval with a < b")?;
                check_power(pa, 0.0, 1.0, "p_a")?;
                check_power(pb, 0.0, 1.0, "p_b")
            }
            BoundaryWrapper::OneSided1d { pa, .. } => {
                require(one_d, "one_sided_1d needs an interval")?;
                check_power(pa, 1.0, 2.0, "p_a")
            }
            BoundaryWrapper::Mixed1d { a, b, pa, .. } => {
                require(one_d && a < b, "mixed_1d needs an interval with a < b")?;
                check_power(pa, 1.0, 2.0, "p_a")
            }
            BoundaryWrapper::Neumann1d { a, b, pa, pb, .. } => {
                require(one_d && a < b, "neumann_1d needs an interval with a < b")?;
                check_power(pa, 1.0, 2.0, "p_a")?;
                check_power(pb, 1.0, 2.0, "p_b")
            }
            BoundaryWrapper::ThreePointGraef { gamma } => {
                require(one_d, "three_point_graef needs an interval")?;
                let denom = graef_denominator(gamma);
                require(
                    gamma > 0.0 && gamma < 1.0 && denom != 0.0,
                    "three_point_graef needs 0 < γ < 1 with -12γ²+18γ != 0",
                )
            }
            BoundaryWrapper::ChannelFlow => require(one_d, "channel_flow needs an interval"),
            BoundaryWrapper::Annulus { r, big_r, .. } => require(
                matches!(domain, Domain::Annulus { .. }) && r < big_r,
                "annulus wrapper needs an annulus domain with r < R",
            ),
            BoundaryWrapper::StarDomain { .. } => {
                require(matches!(domain, Domain::Star3d), "star wrapper needs the star domain")
            }
        }
    }

    /// Record `u(x)` on the tape. `net.extra(0..scalar_count())` are the
    /// wrapper's trainable scalars.
    pub fn apply(&self, tape: &mut Tape<'_>, net: &NetHandle, x: &BatchMatrix, steps: &Steps) -> Result<Var> {
        match *self {
            BoundaryWrapper::None => net.eval(tape, x),
            BoundaryWrapper::Dirichlet1d { a, b, a0, b0, pa, pb } => {
                wrap_dirichlet(tape, net, x, a, b, a0, b0, pa, pb)
            }
            BoundaryWrapper::OneSided1d { a, a0, a1, pa } => wrap_one_sided(tape, net, x, a, a0, a1, pa),
            BoundaryWrapper::Mixed1d { a, b, a0, b0, pa } => wrap_mixed(tape, net, x, a, b, a0, b0, pa),
            BoundaryWrapper::Neumann1d { a, b, a0, b0, pa, pb } => {
                wrap_neumann(tape, net, x, a, b, a0, b0, pa, pb)
            }
            BoundaryWrapper::ThreePointGraef { gamma } => {
                wrap_three_point_graef(tape, net, x, gamma, steps.h(2))
            }
            BoundaryWrapper::ChannelFlow => wrap_channel_flow(tape, net, x),
            BoundaryWrapper::Annulus { r, big_r, value } => wrap_annulus(tape, net, x, r, big_r, value),
            BoundaryWrapper::StarDomain { value } => wrap_star(tape, net, x, value),
        }
    }
}

fn require(ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(msg))
    }
}

fn graef_denominator(gamma: f64) -> f64 {
    -12.0 * gamma * gamma + 18.0 * gamma
}

/// `factor ⊙ û + lift`, both columns constant in θ.
fn scale_and_lift(tape: &mut Tape<'_>, raw: Var, factor: BatchMatrix, lift: BatchMatrix) -> Result<Var> {
    let f = tape.constant(factor);
    let l = tape.constant(lift);
    let m = tape.mul(f, raw)?;
    tape.add(m, l)
}

#[allow(clippy::too_many_arguments)]
pub fn wrap_dirichlet(
    tape: &mut Tape<'_>,
    net: &NetHandle,
    x: &BatchMatrix,
    a: f64,
    b: f64,
    a0: f64,
    b0: f64,
    pa: f64,
    pb: f64,
) -> Result<Var> {
    let factor = column_try(x, |x| Ok(real_pow(x - a, pa)? * real_pow(x - b, pb)?))?;
    let lift = x.map(|x| (b0 - a0) * (x - a) / (b - a) + a0);
    let raw = net.eval(tape, x)?;
    scale_and_lift(tape, raw, factor, lift)
}

pub fn wrap_one_sided(
    tape: &mut Tape<'_>,
    net: &NetHandle,
    x: &BatchMatrix,
    a: f64,
    a0: f64,
    a1: f64,
    pa: f64,
) -> Result<Var> {
    let factor = column_try(x, |x| real_pow(x - a, pa))?;
    let lift = x.map(|x| a1 * (x - a) + a0);
    let raw = net.eval(tape, x)?;
    scale_and_lift(tape, raw, factor, lift)
}

#[allow(clippy::too_many_arguments)]
pub fn wrap_mixed(
    tape: &mut Tape<'_>,
    net: &NetHandle,
    x: &BatchMatrix,
    a: f64,
    b: f64,
    a0: f64,
    b0: f64,
    pa: f64,
) -> Result<Var> {
    let factor = column_try(x, |x| real_pow(x - a, pa))?;
    let lift = x.map(|x| a0 * x + b0 - a0 * b);
    let raw = net.eval(tape, x)?;
    let body = scale_and_lift(tape, raw, factor, lift)?;
    let at_b = net.eval_point(tape, &[b])?;
    let at_b = tape.scale(at_b, real_pow(b - a, pa)?);
    tape.sub(body, at_b)
}

#[allow(clippy::too_many_arguments)]
pub fn wrap_neumann(
    tape: &mut Tape<'_>,
    net: &NetHandle,
    x: &BatchMatrix,
    a: f64,
    b: f64,
    a0: f64,
    b0: f64,
    pa: f64,
    pb: f64,
) -> Result<Var> {
    let c1 = net.extra(tape, 0)?;
    let c2 = net.extra(tape, 1)?;
    let inner = column_try(x, |x| real_pow(x - b, pb))?;
    let outer = column_try(x, |x| Ok((pa * x / (a - b)).exp() * real_pow(x - a, pa)?))?;
    let lift = x.map(|x| (b0 - a0) / (2.0 * (b - a)) * (x - a) * (x - a) + a0 * x);
    let raw = net.eval(tape, x)?;
    let inner = tape.constant(inner);
    let t = tape.mul(inner, raw)?;
    let t = tape.add(t, c2)?;
    let outer = tape.constant(outer);
    let t = tape.mul(outer, t)?;
    let t = tape.add(t, c1)?;
    let lift = tape.constant(lift);
    tape.add(t, lift)
}

/// `c_γ = (g''(γ) - g''(0)) / (-12γ² + 18γ)` with `g = (x-1)^3 û`, second
/// derivatives by the 3-point stencil with step `h`.
pub fn wrap_three_point_graef(
    tape: &mut Tape<'_>,
    net: &NetHandle,
    x: &BatchMatrix,
    gamma: f64,
    h: f64,
) -> Result<Var> {
    let denom = graef_denominator(gamma);
    if denom == 0.0 || !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::config(format!("γ = {gamma} makes the Graef wrapper singular")));
    }
    let g_at = |tape: &mut Tape<'_>, p: f64| -> Result<(Var, Var)> {
        let raw = net.eval_point(tape, &[p])?;
        Ok((tape.scale(raw, (p - 1.0).powi(3)), raw))
    };
    let w = 1.0 / (h * h * denom);
    let (gm, _) = g_at(tape, gamma - h)?;
    let (g0, _) = g_at(tape, gamma)?;
    let (gp, _) = g_at(tape, gamma + h)?;
    let (zm, _) = g_at(tape, -h)?;
    let (z0, raw_at_zero) = g_at(tape, 0.0)?;
    let (zp, _) = g_at(tape, h)?;
    let c_gamma = tape.lincomb(&[
        (gm, w),
        (g0, -2.0 * w),
        (gp, w),
        (zm, -w),
        (z0, 2.0 * w),
        (zp, -w),
    ])?;

    let raw = net.eval(tape, x)?;
    let cube = tape.constant(x.map(|x| (x - 1.0).powi(3)));
    let body = tape.mul(cube, raw)?;
    let body = tape.add(body, raw_at_zero)?;
    let shape = tape.constant(x.map(|x| x * (x - 1.0).powi(3)));
    let corr = tape.mul(shape, c_gamma)?;
    tape.add(body, corr)
}

pub fn wrap_channel_flow(tape: &mut Tape<'_>, net: &NetHandle, x: &BatchMatrix) -> Result<Var> {
    let c = net.extra(tape, 0)?;
    let raw = net.eval(tape, x)?;
    let x2 = tape.constant(x.map(|x| x * x));
    let t = tape.mul(x2, raw)?;
    let t = tape.add(t, c)?;
    let factor = tape.constant(x.map(|x| x * (x - 1.0) * (x - 1.0) * (2.0 * x).exp()));
    let t = tape.mul(factor, t)?;
    let lift = tape.constant(x.map(|x| (PI * x / 2.0).sin()));
    tape.add(t, lift)
}

/// Radial profile `sin(π (|x| - r) / (R - r))` shared with the annulus probing basis.
pub fn annulus_phase(x: &[f64], r: f64, big_r: f64) -> f64 {
    let s = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    PI * (s - r) / (big_r - r)
}

pub fn wrap_annulus(
    tape: &mut Tape<'_>,
    net: &NetHandle,
    x: &BatchMatrix,
    r: f64,
    big_r: f64,
    value: f64,
) -> Result<Var> {
    let factor = x.map_rows(|p| annulus_phase(p, r, big_r).sin());
    let lift = BatchMatrix::filled(x.rows(), 1, value);
    let raw = net.eval(tape, x)?;
    scale_and_lift(tape, raw, factor, lift)
}

pub fn wrap_star(tape: &mut Tape<'_>, net: &NetHandle, x: &BatchMatrix, value: f64) -> Result<Var> {
    let factor = x.map_rows(|p| {
        let rho = star_radius(p);
        p.iter().map(|v| v * v).sum::<f64>() - rho * rho
    });
    let lift = BatchMatrix::filled(x.rows(), 1, value);
    let raw = net.eval(tape, x)?;
    scale_and_lift(tape, raw, factor, lift)
}

/// The reaction-diffusion pair: `u = 1`, `v = 0` on the star boundary.
pub fn wrap_star_domain_pair(
    tape: &mut Tape<'_>,
    u_net: &NetHandle,
    v_net: &NetHandle,
    x: &BatchMatrix,
) -> Result<(Var, Var)> {
    Ok((wrap_star(tape, u_net, x, 1.0)?, wrap_star(tape, v_net, x, 0.0)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_params, ActivationKind, InitScheme, NetworkParams, NetworkSpec};
    use crate::stencil::StencilConfig;

    fn steps() -> Steps {
        StencilConfig::default().steps(1.0)
    }

    fn eval(w: &BoundaryWrapper, params: &NetworkParams, xs: &[f64]) -> Vec<f64> {
        let mut t = Tape::new(&params.values);
        let net = NetHandle::new(params.spec, 0);
        let x = BatchMatrix::column(xs.to_vec());
        let u = w.apply(&mut t, &net, &x, &steps()).unwrap();
        t.value(u).data().to_vec()
    }

    fn zero_net(extra: usize) -> NetworkParams {
        NetworkParams::zeros(NetworkSpec::new(1, 2, 4, ActivationKind::Tanh).with_extra_scalars(extra))
    }

    fn random_net(extra: usize, seed: u64) -> NetworkParams {
        let spec = NetworkSpec::new(1, 2, 6, ActivationKind::Tanh).with_extra_scalars(extra);
        let mut p = init_params(spec, seed, InitScheme::Xavier).unwrap();
        for (i, e) in p.extras_mut().iter_mut().enumerate() {
            *e = 0.7 - 0.4 * i as f64;
        }
        p
    }

    #[test]
    fn painleve_dirichlet_example() {
        let w = BoundaryWrapper::dirichlet(0.0, 1.0, 0.0, 10f64.sqrt());
        let p = random_net(0, 3);
        let u = eval(&w, &p, &[0.0, 1.0, 0.5]);
        assert_eq!(u[0], 0.0);
        assert!((u[1] - 10f64.sqrt()).abs() < 1e-15);
        // x(x-1)û + √10 x at x = 0.5.
        let mut t = Tape::new(&p.values);
        let raw = NetHandle::new(p.spec, 0).eval_point(&mut t, &[0.5]).unwrap();
        let expect = 0.5 * -0.5 * t.value(raw).item() + 10f64.sqrt() * 0.5;
        assert!((u[2] - expect).abs() < 1e-15);
        let lift = eval(&w, &zero_net(0), &[0.25]);
        assert_eq!(lift[0], 10f64.sqrt() * 0.25);
    }

    #[test]
    fn one_sided_zero_net_is_lift() {
        let w = BoundaryWrapper::one_sided(0.0, 1.5, -2.0);
        let u = eval(&w, &zero_net(0), &[0.3]);
        assert!((u[0] - (-2.0 * 0.3 + 1.5)).abs() < 1e-15);
    }

    #[test]
    fn mixed_specialisation() {
        let w = BoundaryWrapper::mixed(0.0, 1.0, 0.0, 0.0);
        let p = random_net(0, 9);
        let u = eval(&w, &p, &[0.4, 1.0]);
        let mut t = Tape::new(&p.values);
        let net = NetHandle::new(p.spec, 0);
        let r04 = net.eval_point(&mut t, &[0.4]).unwrap();
        let r1 = net.eval_point(&mut t, &[1.0]).unwrap();
        let expect = 0.16 * t.value(r04).item() - t.value(r1).item();
        assert!((u[0] - expect).abs() < 1e-15);
        assert!(u[1].abs() < 1e-15);
        let lift = eval(&BoundaryWrapper::mixed(0.0, 1.0, 2.0, 3.0), &zero_net(0), &[0.5]);
        assert_eq!(lift[0], 2.0 * 0.5 + 3.0 - 2.0);
    }

    #[test]
    fn neumann_zero_net_lift() {
        let w = BoundaryWrapper::neumann(0.0, 1.0, 0.5, -1.0);
        let mut p = zero_net(2);
        p.extras_mut()[0] = 0.25;
        let u = eval(&w, &p, &[0.3]);
        let l4 = (-1.5) / 2.0 * 0.09 + 0.5 * 0.3;
        assert!((u[0] - (0.25 + l4)).abs() < 1e-15);
    }

    #[test]
    fn graef_denominator_at_one_fifth() {
        assert!((graef_denominator(0.2) - 3.12).abs() < 1e-15);
        let w = BoundaryWrapper::ThreePointGraef { gamma: 0.0 };
        assert!(w.validate(&Domain::Interval { a: 0.0, b: 1.0 }).is_err());
        let u = eval(&BoundaryWrapper::ThreePointGraef { gamma: 0.2 }, &zero_net(0), &[0.1, 0.7]);
        assert_eq!(u, vec![0.0, 0.0]);
    }

    #[test]
    fn channel_flow_lift() {
        let u = eval(&BoundaryWrapper::ChannelFlow, &zero_net(1), &[0.0, 0.3, 1.0]);
        assert_eq!(u[0], 0.0);
        assert!((u[1] - (PI * 0.3 / 2.0).sin()).abs() < 1e-15);
        assert!((u[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn annulus_values() {
        let spec = NetworkSpec::new(2, 1, 1, ActivationKind::Tanh);
        let mut p = NetworkParams::zeros(spec);
        // û ≡ 1: zero weights, bias 1 → tanh(1) scaled by a = 1/tanh(1).
        p.values[2] = 1.0;
        p.values[3] = 1.0 / 1f64.tanh();
        let w = BoundaryWrapper::Annulus { r: 1.0, big_r: 3.0, value: 1.0 };
        let x = BatchMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0], vec![-3.0, 0.0]]).unwrap();
        let mut t = Tape::new(&p.values);
        let u = w.apply(&mut t, &NetHandle::new(spec, 0), &x, &steps()).unwrap();
        let u = t.value(u).data();
        assert_eq!(u[0], 1.0);
        assert!((u[1] - 2.0).abs() < 1e-15);
        assert!((u[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn star_factor_example() {
        let spec = NetworkSpec::new(3, 1, 1, ActivationKind::Tanh);
        let mut p = NetworkParams::zeros(spec);
        p.values[3] = 1.0;
        p.values[4] = 1.0 / 1f64.tanh();
        let x = BatchMatrix::from_rows(&[vec![0.5, 0.0, 0.0]]).unwrap();
        let mut t = Tape::new(&p.values);
        let net = NetHandle::new(spec, 0);
        let (u, v) = wrap_star_domain_pair(&mut t, &net, &net, &x).unwrap();
        assert!((t.value(v).item() + 0.75).abs() < 1e-15);
        assert!((t.value(u).item() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn fractional_powers_are_odd_extensions() {
        assert_eq!(real_pow(-0.25, 0.5).unwrap(), -0.5);
        assert_eq!(real_pow(0.25, 0.5).unwrap(), 0.5);
        assert_eq!(real_pow(-2.0, 2.0).unwrap(), 4.0);
        let w = BoundaryWrapper::Dirichlet1d { a: 0.0, b: 1.0, a0: 0.0, b0: 1.0, pa: 0.5, pb: 0.5 };
        let p = random_net(0, 1);
        let mut t = Tape::new(&p.values);
        let x = BatchMatrix::column(vec![-0.1, 0.0, 0.4, 1.0]);
        let u = w.apply(&mut t, &NetHandle::new(p.spec, 0), &x, &steps()).unwrap();
        let v = t.value(u).data();
        assert!(v.iter().all(|v| v.is_finite()));
        assert_eq!((v[1], v[3]), (0.0, 1.0));
    }

    #[test]
    fn power_ranges_validated() {
        let d = Domain::Interval { a: 0.0, b: 1.0 };
        let bad = BoundaryWrapper::Dirichlet1d { a: 0.0, b: 1.0, a0: 0.0, b0: 0.0, pa: 2.0, pb: 1.0 };
        assert!(bad.validate(&d).is_err());
        assert!(BoundaryWrapper::OneSided1d { a: 0.0, a0: 0.0, a1: 0.0, pa: 1.0 }.validate(&d).is_err());
        assert!(BoundaryWrapper::neumann(0.0, 1.0, 0.0, 0.0).validate(&d).is_ok());
        let ann = BoundaryWrapper::Annulus { r: 1.0, big_r: 2.0, value: 1.0 };
        assert!(ann.validate(&d).is_err());
    }
}
