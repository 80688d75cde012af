//! Bulk and surface potentials written as `F = F₁ + F₂`.
//!
//! `F₁` is convex and nonnegative, `F₂` is the remainder whose derivative
//! grows at most linearly. The steppers need second derivatives as well, so
//! every part is evaluated as a [`Jet`] (value, slope, curvature).
//!
//! The built-in choice is the double well `θ(φ² − 1)²`, split as
//! `θ(φ⁴ + 1)` plus `−2θφ²`. User-defined splits implement [`SplitPotential`]
//! and are checked by [`PotentialSplit::validate`], which samples the
//! structural conditions the analysis relies on.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::rng::SplitMix64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("double-well parameter must be positive, got {0}")]
    NonPositiveTheta(f64),
    #[error("potential evaluated at non-finite argument {0}")]
    NonFinite(f64),
    #[error("split check `{check}` failed at phi = {phi}: {detail}")]
    Invalid { check: &'static str, phi: f64, detail: String },
}

/// Value and first two derivatives of a scalar function at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub value: f64,
    pub slope: f64,
    pub curvature: f64,
}

impl std::ops::Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        Jet {
            value: self.value + rhs.value,
            slope: self.slope + rhs.slope,
            curvature: self.curvature + rhs.curvature,
        }
    }
}

/// Extension point for potentials beyond the double well.
pub trait SplitPotential: Send + Sync + fmt::Debug {
    /// Convex, nonnegative part `F₁`.
    fn convex(&self, phi: f64) -> Jet;
    /// Remainder `F₂`.
    fn remainder(&self, phi: f64) -> Jet;
    /// Lower bound `C_F` with `F₁ + F₂ ≥ C_F`.
    fn lower_bound(&self) -> f64;
    /// Constant `B_F` with `|F₂'(φ)| ≤ B_F (|φ| + 1)`.
    fn growth_constant(&self) -> f64;
    /// Lipschitz constant of `F₂'`, when known.
    fn remainder_lipschitz(&self) -> Option<f64> {
        None
    }
}

#[derive(Clone)]
pub enum PotentialSplit {
    DoubleWell { theta: f64 },
    Custom(Arc<dyn SplitPotential>),
}

impl fmt::Debug for PotentialSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialSplit::DoubleWell { theta } => write!(f, "DoubleWell {{ theta: {theta} }}"),
            PotentialSplit::Custom(p) => write!(f, "Custom({p:?})"),
        }
    }
}

/// `θ(φ² − 1)²` split into `θ(φ⁴ + 1)` and `−2θφ²`.
pub fn double_well(theta: f64) -> Result<PotentialSplit, PotentialError> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(PotentialError::NonPositiveTheta(theta));
    }
    Ok(PotentialSplit::DoubleWell { theta })
}

/// `(F(φ), F'(φ))`, rejecting non-finite input.
pub fn eval(p: &PotentialSplit, phi: f64) -> Result<(f64, f64), PotentialError> {
    if !phi.is_finite() {
        return Err(PotentialError::NonFinite(phi));
    }
    let j = p.jet(phi);
    Ok((j.value, j.slope))
}

impl PotentialSplit {
    pub fn convex(&self, phi: f64) -> Jet {
        match self {
            PotentialSplit::DoubleWell { theta } => {
                let p2 = phi * phi;
                Jet {
                    value: theta * (p2 * p2 + 1.0),
                    slope: 4.0 * theta * p2 * phi,
                    curvature: 12.0 * theta * p2,
                }
            }
            PotentialSplit::Custom(p) => p.convex(phi),
        }
    }

    pub fn remainder(&self, phi: f64) -> Jet {
        match self {
            PotentialSplit::DoubleWell { theta } => Jet {
                value: -2.0 * theta * phi * phi,
                slope: -4.0 * theta * phi,
                curvature: -4.0 * theta,
            },
            PotentialSplit::Custom(p) => p.remainder(phi),
        }
    }

    /// Full potential `F₁ + F₂`.
    pub fn jet(&self, phi: f64) -> Jet {
        match self {
            // Factored form avoids cancellation between the two parts.
            PotentialSplit::DoubleWell { theta } => {
                let s = phi * phi - 1.0;
                Jet { value: theta * s * s, slope: 4.0 * theta * phi * s, curvature: theta * (12.0 * phi * phi - 4.0) }
            }
            PotentialSplit::Custom(_) => self.convex(phi) + self.remainder(phi),
        }
    }

    pub fn value(&self, phi: f64) -> f64 {
        self.jet(phi).value
    }

    pub fn derivative(&self, phi: f64) -> f64 {
        self.jet(phi).slope
    }

    pub fn lower_bound(&self) -> f64 {
        match self {
            PotentialSplit::DoubleWell { .. } => 0.0,
            PotentialSplit::Custom(p) => p.lower_bound(),
        }
    }

    pub fn growth_constant(&self) -> f64 {
        match self {
            PotentialSplit::DoubleWell { theta } => 4.0 * theta,
            PotentialSplit::Custom(p) => p.growth_constant(),
        }
    }

    pub fn remainder_lipschitz(&self) -> Option<f64> {
        match self {
            PotentialSplit::DoubleWell { theta } => Some(4.0 * theta),
            PotentialSplit::Custom(p) => p.remainder_lipschitz(),
        }
    }

    /// Samples the split conditions on `[-3, 3]` plus a random convexity probe.
    pub fn validate(&self) -> Result<(), PotentialError> {
        let bound = self.lower_bound();
        let growth = self.growth_constant();
        for k in 0..=600 {
            let phi = -3.0 + 0.01 * k as f64;
            let f1 = self.convex(phi);
            let f2 = self.remainder(phi);
            if f1.value < 0.0 {
                return Err(invalid("F1 >= 0", phi, format!("F1 = {}", f1.value)));
            }
            if f1.value + f2.value < bound - 1e-12 * (1.0 + bound.abs()) {
                return Err(invalid("F >= lower bound", phi, format!("F = {}", f1.value + f2.value)));
            }
            if f2.slope.abs() > growth * (phi.abs() + 1.0) * (1.0 + 1e-12) {
                return Err(invalid("growth of F2'", phi, format!("|F2'| = {}", f2.slope.abs())));
            }
            let delta = 1e-5 * (1.0 + phi.abs());
            let fd = (self.jet(phi + delta).value - self.jet(phi - delta).value) / (2.0 * delta);
            let exact = f1.slope + f2.slope;
            let scale = exact.abs().max(1e-3 * (1.0 + f1.value.abs()));
            if (fd - exact).abs() > 1e-6 * scale {
                return Err(invalid("derivative consistency", phi, format!("fd = {fd}, exact = {exact}")));
            }
        }

        let mut rng = SplitMix64::new(0x5EED);
        for _ in 0..1000 {
            let a = rng.next_in(-3.0, 3.0);
            let b = rng.next_in(-3.0, 3.0);
            let lambda = rng.next_unit();
            let fa = self.convex(a).value;
            let fb = self.convex(b).value;
            let mid = self.convex(lambda * a + (1.0 - lambda) * b).value;
            let chord = lambda * fa + (1.0 - lambda) * fb;
            if mid > chord + 1e-12 * (1.0 + fa.abs() + fb.abs()) {
                return Err(invalid("convexity of F1", a, format!("b = {b}, lambda = {lambda}")));
            }
        }
        Ok(())
    }
}

fn invalid(check: &'static str, phi: f64, detail: String) -> PotentialError {
    PotentialError::Invalid { check, phi, detail }
}
