//! Central finite-difference stencils for input-space derivatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step sizes per derivative order, expressed for a unit-diameter domain.
///
/// Absolute steps are `base[k-1] * diameter`. Defaults sit near the
/// truncation/roundoff optimum of each central stencil in double precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StencilConfig {
    pub base: [f64; 4],
}

impl Default for StencilConfig {
    fn default() -> Self {
        Self {
            base: [1e-5, 1e-4, 1e-3, 1e-2],
        }
    }
}

impl StencilConfig {
    pub fn uniform(h: f64) -> Self {
        Self { base: [h; 4] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::config(format!("stencil steps must be positive, got {:?}", self.base)));
        }
        Ok(())
    }

    /// Absolute steps for a domain of the given diameter.
    pub fn steps(&self, diameter: f64) -> Steps {
        Steps(self.base.map(|h| h * diameter))
    }
}

/// Absolute finite-difference steps `h1..h4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Steps(pub [f64; 4]);

impl Steps {
    pub fn h(&self, order: usize) -> f64 {
        self.0[order - 1]
    }
}

/// Offsets (in multiples of `h`) and unscaled weights of the central stencil
/// for the `order`-th derivative. Multiply weights by `h^-order`.
pub fn stencil(order: usize) -> Result<&'static [(i32, f64)]> {
    Ok(match order {
        1 => &[(-1, -0.5), (1, 0.5)],
        2 => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        3 => &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
        4 => &[(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)],
        _ => return Err(Error::config(format!("derivative order {order} not in 1..=4"))),
    })
}
