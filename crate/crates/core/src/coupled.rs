//! One-way coupled ocean/floe model step shared by the truth run and every
//! ensemble member.

use num_complex::Complex;
use rand::Rng;

use crate::error::Result;
use crate::floe::{advance_floes, Floe, Integrator};
use crate::ocean::{ModeSet, ModeState, OuModel, SpectralOcean};
use crate::scalar::Real;

/// Floes feel the ocean at the start of the step; the modes then advance
/// with fresh noise.
pub struct CoupledModel<'a, T> {
    pub modes: &'a ModeSet<T>,
    pub ou: &'a OuModel<T>,
    pub integrator: Integrator,
}

impl<T: Real> CoupledModel<'_, T> {
    pub fn dt(&self) -> T {
        self.ou.dt()
    }

    pub fn step<R: Rng + ?Sized>(
        &self,
        ocean: &mut ModeState<T>,
        floes: &mut [Floe<T>],
        rng: &mut R,
        scratch: &mut Vec<Complex<T>>,
    ) -> Result<()> {
        if !floes.is_empty() {
            let field = SpectralOcean::new(self.modes, ocean);
            advance_floes(floes, &field, self.ou.dt(), self.integrator)?;
        }
        self.ou.advance_random(self.modes, ocean, rng, scratch)
    }
}
