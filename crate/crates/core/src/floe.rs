//! Free-drifting floes under quadratic ocean drag on the periodic domain.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::scalar::{norm2, Real, Vec2};
use crate::torus::{wrap, wrap_point};

/// Time integrator for the floe equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Forward Euler velocity, then position from the updated velocity.
    #[default]
    SemiImplicitEuler,
    Rk4,
}

/// Static properties of a floe: they never change during a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloeProps<T> {
    pub radius: T,
    pub mass: T,
    /// Quadratic drag coefficient `α`.
    pub drag: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Floe<T> {
    pub pos: Vec2<T>,
    pub vel: Vec2<T>,
    pub props: FloeProps<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloeState<T> {
    pub floes: Vec<Floe<T>>,
    pub time: T,
}

/// `m = ρ π r² h`.
pub fn floe_mass<T: Real>(rho: T, r: T, h: T) -> Result<T> {
    for (name, v) in [("rho", rho), ("r", r), ("h", h)] {
        if !(v > T::zero()) || !v.is_finite() {
            return Err(Error::invalid(name, format!("must be positive, got {v}")));
        }
    }
    Ok(rho * T::PI() * r * r * h)
}

/// Drag coefficient scaling with wetted area: `α = c_d ρ_o r²`.
pub fn drag_coefficient<T: Real>(c_d: T, rho_ocean: T, r: T) -> T {
    c_d * rho_ocean * r * r
}

/// Quadratic ocean drag `α (u_o - v) |u_o - v|`.
#[inline]
pub fn drag_force<T: Real>(u_o: Vec2<T>, v: Vec2<T>, alpha: T) -> Vec2<T> {
    let rel = [u_o[0] - v[0], u_o[1] - v[1]];
    let s = alpha * norm2(rel);
    [rel[0] * s, rel[1] * s]
}

#[inline]
fn acceleration<T: Real>(props: &FloeProps<T>, u_o: Vec2<T>, v: Vec2<T>) -> Vec2<T> {
    let f = drag_force(u_o, v, props.drag);
    [f[0] / props.mass, f[1] / props.mass]
}

/// Advances one floe by `dt`.
#[inline]
pub fn step_floe<T: Real, F: VelocityField<T> + ?Sized>(floe: &mut Floe<T>, ocean: &F, dt: T, integrator: Integrator) {
    match integrator {
        Integrator::SemiImplicitEuler => {
            let a = acceleration(&floe.props, ocean.velocity(floe.pos), floe.vel);
            floe.vel = [floe.vel[0] + dt * a[0], floe.vel[1] + dt * a[1]];
            floe.pos = [wrap(floe.pos[0] + dt * floe.vel[0]), wrap(floe.pos[1] + dt * floe.vel[1])];
        }
        Integrator::Rk4 => {
            let half = dt / T::lit(2.0);
            let deriv = |x: Vec2<T>, v: Vec2<T>| (v, acceleration(&floe.props, ocean.velocity(x), v));
            let shift = |a: Vec2<T>, b: Vec2<T>, s: T| [a[0] + s * b[0], a[1] + s * b[1]];
            let (x0, v0) = (floe.pos, floe.vel);
            let (k1x, k1v) = deriv(x0, v0);
            let (k2x, k2v) = deriv(shift(x0, k1x, half), shift(v0, k1v, half));
            let (k3x, k3v) = deriv(shift(x0, k2x, half), shift(v0, k2v, half));
            let (k4x, k4v) = deriv(shift(x0, k3x, dt), shift(v0, k3v, dt));
            let sixth = dt / T::lit(6.0);
            let two = T::lit(2.0);
            let comb = |a: Vec2<T>, b: Vec2<T>, c: Vec2<T>, d: Vec2<T>, k: usize| a[k] + two * (b[k] + c[k]) + d[k];
            floe.pos = wrap_point([
                x0[0] + sixth * comb(k1x, k2x, k3x, k4x, 0),
                x0[1] + sixth * comb(k1x, k2x, k3x, k4x, 1),
            ]);
            floe.vel = [
                v0[0] + sixth * comb(k1v, k2v, k3v, k4v, 0),
                v0[1] + sixth * comb(k1v, k2v, k3v, k4v, 1),
            ];
        }
    }
}

pub(crate) fn check_dt<T: Real>(dt: T) -> Result<()> {
    if dt > T::zero() && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("dt", format!("time step must be positive, got {dt}")))
    }
}

/// Advances every floe in place; floes are independent so the loop runs in
/// parallel.
pub fn advance_floes<T: Real, F: VelocityField<T> + ?Sized>(
    floes: &mut [Floe<T>],
    ocean: &F,
    dt: T,
    integrator: Integrator,
) -> Result<()> {
    check_dt(dt)?;
    floes
        .par_iter_mut()
        .with_min_len(256)
        .for_each(|f| step_floe(f, ocean, dt, integrator));
    Ok(())
}

/// One model step of the whole floe population.
pub fn step_floes<T: Real, F: VelocityField<T> + ?Sized>(
    state: &FloeState<T>,
    ocean: &F,
    dt: T,
    integrator: Integrator,
) -> Result<FloeState<T>> {
    let mut next = state.clone();
    advance_floes(&mut next.floes, ocean, dt, integrator)?;
    next.time += dt;
    Ok(next)
}

/// Truncated power law `N(r) ∝ r^{-a}` on `[r_min, r_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLaw<T> {
    pub exponent: T,
    pub r_min: T,
    pub r_max: T,
}

impl<T: Real> PowerLaw<T> {
    pub fn new(exponent: T, r_min: T, r_max: T) -> Result<Self> {
        if (exponent - T::one()).abs() < T::default_epsilon() || !exponent.is_finite() {
            return Err(Error::invalid("alpha_exp", "exponent must differ from 1"));
        }
        if !(r_min > T::zero()) || !(r_max >= r_min) || !r_max.is_finite() {
            return Err(Error::invalid(
                "radius bounds",
                format!("need 0 < r_min <= r_max, got [{r_min}, {r_max}]"),
            ));
        }
        Ok(Self { exponent, r_min, r_max })
    }

    /// Analytic CDF on the support.
    pub fn cdf(&self, r: T) -> T {
        if r <= self.r_min {
            return T::zero();
        }
        if r >= self.r_max {
            return T::one();
        }
        let q = T::one() - self.exponent;
        let lo = self.r_min.powf(q);
        (r.powf(q) - lo) / (self.r_max.powf(q) - lo)
    }

    pub fn inverse_cdf(&self, u: T) -> T {
        if self.r_min == self.r_max {
            return self.r_min;
        }
        let q = T::one() - self.exponent;
        let lo = self.r_min.powf(q);
        let hi = self.r_max.powf(q);
        let r = (lo + u * (hi - lo)).powf(T::one() / q);
        r.max(self.r_min).min(self.r_max)
    }
}

/// i.i.d. radii by inverse-CDF sampling.
pub fn sample_radii<T: Real, R: Rng + ?Sized>(count: usize, law: &PowerLaw<T>, rng: &mut R) -> Vec<T> {
    (0..count)
        .map(|_| law.inverse_cdf(T::lit(rng.random::<f64>())))
        .collect()
}

/// Material constants shared by all floes of a population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material<T> {
    pub ice_density: T,
    pub thickness: T,
    pub ocean_density: T,
    pub drag_scale: T,
}

impl<T: Real> Material<T> {
    pub fn props(&self, radius: T) -> Result<FloeProps<T>> {
        Ok(FloeProps {
            radius,
            mass: floe_mass(self.ice_density, radius, self.thickness)?,
            drag: drag_coefficient(self.drag_scale, self.ocean_density, radius),
        })
    }
}

/// Uniformly placed floes with power-law radii, initially at rest.
pub fn generate_floes<T: Real, R: Rng + ?Sized>(
    count: usize,
    law: &PowerLaw<T>,
    material: &Material<T>,
    rng: &mut R,
) -> Result<FloeState<T>> {
    let radii = sample_radii(count, law, rng);
    let period = T::period();
    let floes = radii
        .into_iter()
        .map(|r| {
            let pos = [
                wrap(T::lit(rng.random::<f64>()) * period),
                wrap(T::lit(rng.random::<f64>()) * period),
            ];
            Ok(Floe {
                pos,
                vel: [T::zero(); 2],
                props: material.props(r)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(FloeState {
        floes,
        time: T::zero(),
    })
}
