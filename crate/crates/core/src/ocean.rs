//! Stochastic spectral ocean: truncated divergence-free Fourier modes, each
//! driven as a damped, forced complex Ornstein-Uhlenbeck process.
//!
//! The physical velocity is `u(x) = Σ_k û_k e_k exp(i k·x)` with the
//! stream-function eigenvector `e_k = i (k_y, -k_x) / |k|`. Coefficients of
//! `k` and `-k` are kept complex conjugate so the field is real.

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{FftNum, FftPlanner};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{ensure_dim, Error, Result};
use crate::field::{FieldGrid, VelocityField};
use crate::scalar::{Real, Vec2};

/// Relative bound on the imaginary residual of a reconstructed field.
pub const REALNESS_TOLERANCE: f64 = 1e-10;

// single precision cannot meet the f64 bound
fn realness_tolerance<T: Real>() -> f64 {
    REALNESS_TOLERANCE.max(1e3 * T::default_epsilon().as_f64())
}

/// Shape of the wavenumber truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// `max(|k_x|, |k_y|) <= k_max`
    #[default]
    MaxNorm,
    /// `k_x² + k_y² <= k_max²`
    Euclidean,
}

/// Wavevectors of the truncated spectrum with their conjugate pairing.
#[derive(Debug, Clone)]
pub struct ModeSet<T> {
    k_max: u32,
    wavenumbers: Vec<[i32; 2]>,
    partner: Vec<usize>,
    pair_of: Vec<usize>,
    representatives: Vec<usize>,
    // eigenvector of mode i is `i * directions[i]`
    directions: Vec<Vec2<T>>,
}

/// All wavevectors with `‖k‖∞ <= k_max`, origin excluded.
pub fn build_mode_set<T: Real>(k_max: u32) -> Result<ModeSet<T>> {
    ModeSet::build(k_max, Truncation::MaxNorm)
}

#[inline]
fn is_representative(k: [i32; 2]) -> bool {
    k[0] > 0 || (k[0] == 0 && k[1] > 0)
}

impl<T: Real> ModeSet<T> {
    pub fn build(k_max: u32, truncation: Truncation) -> Result<Self> {
        if k_max == 0 {
            return Err(Error::invalid("k_max", "must be at least 1"));
        }
        let km = k_max as i32;
        let mut wavenumbers = Vec::new();
        for kx in -km..=km {
            for ky in -km..=km {
                if kx == 0 && ky == 0 {
                    continue;
                }
                let keep = match truncation {
                    Truncation::MaxNorm => true,
                    Truncation::Euclidean => kx * kx + ky * ky <= km * km,
                };
                if keep {
                    wavenumbers.push([kx, ky]);
                }
            }
        }
        let index_of = |k: [i32; 2]| -> usize {
            let side = (2 * km + 1) as usize;
            (k[0] + km) as usize * side + (k[1] + km) as usize
        };
        let side = (2 * km + 1) as usize;
        let mut lookup = vec![usize::MAX; side * side];
        for (i, &k) in wavenumbers.iter().enumerate() {
            lookup[index_of(k)] = i;
        }
        let partner: Vec<usize> = wavenumbers
            .iter()
            .map(|&k| lookup[index_of([-k[0], -k[1]])])
            .collect();
        debug_assert!(partner.iter().all(|&p| p != usize::MAX));

        let mut representatives = Vec::with_capacity(wavenumbers.len() / 2);
        let mut pair_of = vec![0; wavenumbers.len()];
        for (i, &k) in wavenumbers.iter().enumerate() {
            if is_representative(k) {
                pair_of[i] = representatives.len();
                pair_of[partner[i]] = representatives.len();
                representatives.push(i);
            }
        }
        let directions = wavenumbers
            .iter()
            .map(|&[kx, ky]| {
                let (kx, ky) = (T::lit(kx as f64), T::lit(ky as f64));
                let norm = (kx * kx + ky * ky).sqrt();
                [ky / norm, -kx / norm]
            })
            .collect();
        Ok(Self {
            k_max,
            wavenumbers,
            partner,
            pair_of,
            representatives,
            directions,
        })
    }

    pub fn k_max(&self) -> u32 {
        self.k_max
    }

    /// Number of modes (both members of every conjugate pair).
    pub fn len(&self) -> usize {
        self.wavenumbers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavenumbers.is_empty()
    }

    pub fn n_pairs(&self) -> usize {
        self.representatives.len()
    }

    pub fn wavenumbers(&self) -> &[[i32; 2]] {
        &self.wavenumbers
    }

    pub fn partner(&self, mode: usize) -> usize {
        self.partner[mode]
    }

    pub fn pair_of(&self, mode: usize) -> usize {
        self.pair_of[mode]
    }

    /// Mode index carrying the independent coefficient of `pair`.
    pub fn representative(&self, pair: usize) -> usize {
        self.representatives[pair]
    }

    pub fn representatives(&self) -> &[usize] {
        &self.representatives
    }

    /// Divergence-free eigenvector `(i k_y, -i k_x) / |k|`.
    pub fn eigenvector(&self, mode: usize) -> [Complex<T>; 2] {
        let d = self.directions[mode];
        [Complex::new(T::zero(), d[0]), Complex::new(T::zero(), d[1])]
    }
}

/// Per-mode Ornstein-Uhlenbeck parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeParams<T> {
    /// Damping rate `d > 0`.
    pub damping: T,
    /// Phase speed `φ`.
    pub phase_speed: T,
    /// Deterministic forcing `f`.
    pub forcing: Complex<T>,
    /// Noise strength `σ >= 0`.
    pub noise: T,
}

impl<T: Real> ModeParams<T> {
    pub fn new(damping: T, phase_speed: T, forcing: Complex<T>, noise: T) -> Result<Self> {
        let p = Self {
            damping,
            phase_speed,
            forcing,
            noise,
        };
        p.validate()?;
        Ok(p)
    }

    /// Unforced, non-oscillating mode.
    pub fn damped(damping: T, noise: T) -> Result<Self> {
        Self::new(damping, T::zero(), Complex::new(T::zero(), T::zero()), noise)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.damping > T::zero()) || !self.damping.is_finite() {
            return Err(Error::invalid("d", format!("damping must be positive, got {}", self.damping)));
        }
        if !(self.noise >= T::zero()) || !self.noise.is_finite() {
            return Err(Error::invalid("sigma", format!("noise must be non-negative, got {}", self.noise)));
        }
        if !self.phase_speed.is_finite() || !self.forcing.re.is_finite() || !self.forcing.im.is_finite() {
            return Err(Error::invalid("phi/f", "must be finite"));
        }
        Ok(())
    }

    /// Multiplies forcing and noise by `factor`, rescaling the velocity units
    /// of the process.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            forcing: self.forcing * factor,
            noise: self.noise * factor,
            ..*self
        }
    }

    /// Stationary mean `f / (d - iφ)`.
    pub fn stationary_mean(&self) -> Complex<T> {
        self.forcing / Complex::new(self.damping, -self.phase_speed)
    }

    /// Stationary second moment `E|û - mean|² = σ² / (2d)`.
    pub fn stationary_variance(&self) -> T {
        self.noise * self.noise / (T::lit(2.0) * self.damping)
    }
}

/// Exact one-step transition of a single OU mode over a fixed `dt`.
#[derive(Debug, Clone, Copy)]
pub struct OuPropagator<T> {
    decay: Complex<T>,
    offset: Complex<T>,
    noise_scale: T,
}

impl<T: Real> OuPropagator<T> {
    pub fn new(params: &ModeParams<T>, dt: T) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::invalid("dt", format!("time step must be positive, got {dt}")));
        }
        params.validate()?;
        let two = T::lit(2.0);
        let a = -params.damping * dt;
        let b = params.phase_speed * dt;
        let ea = a.exp();
        let decay = Complex::new(ea * b.cos(), ea * b.sin());
        // 1 - e^{(a + ib)} written without cancellation for small dt
        let half_sin = (b / two).sin();
        let one_minus = Complex::new(
            -(a.exp_m1() * b.cos() - two * half_sin * half_sin),
            -ea * b.sin(),
        );
        let offset = params.stationary_mean() * one_minus;
        let noise_scale = params.noise * (-(two * a).exp_m1() / (two * params.damping)).sqrt();
        Ok(Self {
            decay,
            offset,
            noise_scale,
        })
    }

    /// `û ← e^{(-d+iφ)dt} û + f/(d-iφ) (1 - e^{(-d+iφ)dt}) + σ √((1-e^{-2d dt})/(2d)) ξ`
    #[inline]
    pub fn apply(&self, u: Complex<T>, xi: Complex<T>) -> Complex<T> {
        self.decay * u + self.offset + xi * self.noise_scale
    }
}

/// Complex Fourier coefficients of the ocean, one per mode of a [`ModeSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModeState<T> {
    pub coeffs: Vec<Complex<T>>,
    pub time: T,
}

impl<T: Real> ModeState<T> {
    pub fn zeros(set: &ModeSet<T>) -> Self {
        Self {
            coeffs: vec![Complex::new(T::zero(), T::zero()); set.len()],
            time: T::zero(),
        }
    }

    /// Overwrites each non-representative coefficient with the conjugate of
    /// its representative.
    pub fn enforce_conjugate_symmetry(&mut self, set: &ModeSet<T>) {
        for &rep in set.representatives() {
            self.coeffs[set.partner(rep)] = self.coeffs[rep].conj();
        }
    }

    /// `max_k |û(-k) - conj(û(k))|`.
    pub fn conjugate_residual(&self, set: &ModeSet<T>) -> T {
        (0..set.len())
            .map(|i| (self.coeffs[set.partner(i)] - self.coeffs[i].conj()).norm_sqr().sqrt())
            .fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    pub fn scale(&mut self, factor: T) {
        for c in &mut self.coeffs {
            *c *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Precomputed propagators for every conjugate pair at a fixed `dt`.
#[derive(Debug, Clone)]
pub struct OuModel<T> {
    dt: T,
    propagators: Vec<OuPropagator<T>>,
}

impl<T: Real> OuModel<T> {
    /// `params` holds one entry per mode; the representative's entry drives
    /// each pair.
    pub fn new(set: &ModeSet<T>, params: &[ModeParams<T>], dt: T) -> Result<Self> {
        ensure_dim("mode parameters", set.len(), params.len())?;
        let propagators = set
            .representatives()
            .iter()
            .map(|&rep| OuPropagator::new(&params[rep], dt))
            .collect::<Result<_>>()?;
        Ok(Self { dt, propagators })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// Advances `state` in place; `noise` carries one standard complex normal
    /// per conjugate pair.
    pub fn advance(&self, set: &ModeSet<T>, state: &mut ModeState<T>, noise: &[Complex<T>]) -> Result<()> {
        ensure_dim("mode noise", self.propagators.len(), noise.len())?;
        ensure_dim("mode state", set.len(), state.coeffs.len())?;
        for (pair, prop) in self.propagators.iter().enumerate() {
            let rep = set.representative(pair);
            let next = prop.apply(state.coeffs[rep], noise[pair]);
            state.coeffs[rep] = next;
            state.coeffs[set.partner(rep)] = next.conj();
        }
        state.time += self.dt;
        Ok(())
    }

    /// Advances with freshly drawn noise.
    pub fn advance_random<R: Rng + ?Sized>(
        &self,
        set: &ModeSet<T>,
        state: &mut ModeState<T>,
        rng: &mut R,
        scratch: &mut Vec<Complex<T>>,
    ) -> Result<()> {
        scratch.resize(self.propagators.len(), Complex::new(T::zero(), T::zero()));
        fill_noise(rng, scratch);
        self.advance(set, state, scratch)
    }
}

/// One exact OU step for every mode.
pub fn step_modes<T: Real>(
    set: &ModeSet<T>,
    state: &ModeState<T>,
    params: &[ModeParams<T>],
    dt: T,
    noise: &[Complex<T>],
) -> Result<ModeState<T>> {
    let model = OuModel::new(set, params, dt)?;
    let mut next = state.clone();
    model.advance(set, &mut next, noise)?;
    Ok(next)
}

/// Standard complex normal: `E|ξ|² = 1`, independent real and imaginary parts.
pub fn standard_complex_normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Complex<T> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Complex::new(T::lit(re * s), T::lit(im * s))
}

pub fn fill_noise<T: Real, R: Rng + ?Sized>(rng: &mut R, out: &mut [Complex<T>]) {
    for z in out {
        *z = standard_complex_normal(rng);
    }
}

pub fn draw_noise<T: Real, R: Rng + ?Sized>(rng: &mut R, n_pairs: usize) -> Vec<Complex<T>> {
    let mut out = vec![Complex::new(T::zero(), T::zero()); n_pairs];
    fill_noise(rng, &mut out);
    out
}

/// Draws every pair from its stationary complex Gaussian law.
pub fn sample_stationary<T: Real, R: Rng + ?Sized>(
    set: &ModeSet<T>,
    params: &[ModeParams<T>],
    rng: &mut R,
) -> Result<ModeState<T>> {
    ensure_dim("mode parameters", set.len(), params.len())?;
    let mut state = ModeState::zeros(set);
    for &rep in set.representatives() {
        let p = &params[rep];
        p.validate()?;
        let xi: Complex<T> = standard_complex_normal(rng);
        state.coeffs[rep] = p.stationary_mean() + xi * p.stationary_variance().sqrt();
    }
    state.enforce_conjugate_symmetry(set);
    Ok(state)
}

/// Direct summation of the full complex series at arbitrary points.
///
/// Fails with [`Error::NonRealField`] when the imaginary part exceeds
/// [`REALNESS_TOLERANCE`] (f64) relative to the coefficient mass `Σ|û_k|`.
pub fn eval_velocity<T: Real>(set: &ModeSet<T>, state: &ModeState<T>, points: &[Vec2<T>]) -> Result<Vec<Vec2<T>>> {
    ensure_dim("mode state", set.len(), state.coeffs.len())?;
    let mass = state
        .coeffs
        .iter()
        .fold(T::zero(), |acc, c| acc + c.norm_sqr().sqrt());
    let mut out = Vec::with_capacity(points.len());
    let mut worst = 0.0f64;
    for p in points {
        let p = crate::torus::wrap_point(*p);
        let mut acc = [Complex::new(T::zero(), T::zero()); 2];
        for (mode, &[kx, ky]) in set.wavenumbers().iter().enumerate() {
            let phase = T::lit(kx as f64) * p[0] + T::lit(ky as f64) * p[1];
            let z = state.coeffs[mode] * Complex::new(phase.cos(), phase.sin());
            let e = set.eigenvector(mode);
            acc[0] += z * e[0];
            acc[1] += z * e[1];
        }
        if mass > T::zero() {
            let im = acc[0].im.abs().max(acc[1].im.abs());
            worst = worst.max((im / mass).as_f64());
        }
        out.push([acc[0].re, acc[1].re]);
    }
    if !(worst <= realness_tolerance::<T>()) {
        return Err(Error::NonRealField { residual: worst });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
struct PairTerm<T> {
    kx: usize,
    ky: usize,
    coeff: Complex<T>,
    // -2 * direction
    weight: Vec2<T>,
}

/// Fast real-valued evaluator built from one coefficient per conjugate pair.
///
/// Each pair contributes `2 Re(û e_k e^{ik·x}) = -2 Im(û e^{ik·x}) (k_y, -k_x)/|k|`.
#[derive(Debug, Clone)]
pub struct SpectralOcean<T> {
    k_max: usize,
    // sorted by `kx`
    terms: Vec<PairTerm<T>>,
    // `(kx, end)` of each run of equal `kx` in `terms`
    columns: Vec<(usize, usize)>,
}

impl<T: Real> SpectralOcean<T> {
    pub fn new(set: &ModeSet<T>, state: &ModeState<T>) -> Self {
        let km = set.k_max() as i32;
        let two = T::lit(2.0);
        let mut terms: Vec<PairTerm<T>> = set
            .representatives()
            .iter()
            .map(|&rep| {
                let [kx, ky] = set.wavenumbers()[rep];
                let d = set.directions[rep];
                PairTerm {
                    kx: kx as usize,
                    ky: (ky + km) as usize,
                    coeff: state.coeffs[rep],
                    weight: [-two * d[0], -two * d[1]],
                }
            })
            .collect();
        terms.sort_by_key(|t| (t.kx, t.ky));
        let mut columns: Vec<(usize, usize)> = Vec::new();
        for (i, t) in terms.iter().enumerate() {
            match columns.last_mut() {
                Some((kx, end)) if *kx == t.kx => *end = i + 1,
                _ => columns.push((t.kx, i + 1)),
            }
        }
        Self {
            k_max: set.k_max() as usize,
            terms,
            columns,
        }
    }
}

type PhaseTable<T> = SmallVec<[Complex<T>; 24]>;

/// Fills `out` with `e^{imθ}` for `m = lo..=k_max`, where `lo` is `0` or `-k_max`.
#[inline]
fn fill_phases<T: Real>(theta: T, k_max: usize, negative: bool, out: &mut PhaseTable<T>) {
    let step = Complex::new(theta.cos(), theta.sin());
    let offset = if negative { k_max } else { 0 };
    out.resize(offset + k_max + 1, Complex::new(T::zero(), T::zero()));
    out[offset] = Complex::new(T::one(), T::zero());
    for m in 1..=k_max {
        let z = out[offset + m - 1] * step;
        out[offset + m] = z;
        if negative {
            out[offset - m] = z.conj();
        }
    }
}

impl<T: Real> VelocityField<T> for SpectralOcean<T> {
    fn velocity(&self, p: Vec2<T>) -> Vec2<T> {
        let mut ex = PhaseTable::new();
        let mut ey = PhaseTable::new();
        fill_phases(p[0], self.k_max, false, &mut ex);
        fill_phases(p[1], self.k_max, true, &mut ey);
        // factor e^{i kx x} out of each column of terms
        let zero = Complex::new(T::zero(), T::zero());
        let mut u = [T::zero(); 2];
        let mut start = 0;
        for &(kx, end) in &self.columns {
            let (mut s0, mut s1) = (zero, zero);
            for t in &self.terms[start..end] {
                let z = t.coeff * ey[t.ky];
                s0 += z * t.weight[0];
                s1 += z * t.weight[1];
            }
            u[0] += (ex[kx] * s0).im;
            u[1] += (ex[kx] * s1).im;
            start = end;
        }
        u
    }
}

/// Samples the field on the `n × n` node grid using an inverse 2D FFT.
///
/// Wavenumbers are folded modulo `n`, so node values are exact for any
/// `n >= 2` (aliasing only affects off-node behaviour).
pub fn eval_velocity_grid<T: Real + FftNum>(set: &ModeSet<T>, state: &ModeState<T>, n: usize) -> Result<FieldGrid<T>> {
    if n < 2 {
        return Err(Error::invalid("grid_n", format!("need at least 2 nodes per axis, got {n}")));
    }
    ensure_dim("mode state", set.len(), state.coeffs.len())?;
    let zero = Complex::new(T::zero(), T::zero());
    let mut spectra = [vec![zero; n * n], vec![zero; n * n]];
    let ni = n as i64;
    let mut mass = T::zero();
    for (mode, &[kx, ky]) in set.wavenumbers().iter().enumerate() {
        let c = state.coeffs[mode];
        mass += c.norm_sqr().sqrt();
        let ix = (kx as i64).rem_euclid(ni) as usize;
        let iy = (ky as i64).rem_euclid(ni) as usize;
        let e = set.eigenvector(mode);
        for comp in 0..2 {
            spectra[comp][iy * n + ix] += c * e[comp];
        }
    }
    let mut planner = FftPlanner::<T>::new();
    let fft = planner.plan_fft_inverse(n);
    let mut column = vec![zero; n];
    for spectrum in &mut spectra {
        for row in spectrum.chunks_exact_mut(n) {
            fft.process(row);
        }
        for i in 0..n {
            for j in 0..n {
                column[j] = spectrum[j * n + i];
            }
            fft.process(&mut column);
            for j in 0..n {
                spectrum[j * n + i] = column[j];
            }
        }
    }
    let mut worst = T::zero();
    let values = (0..n * n)
        .map(|idx| {
            let im = spectra[0][idx].im.abs().max(spectra[1][idx].im.abs());
            if im > worst {
                worst = im;
            }
            [spectra[0][idx].re, spectra[1][idx].re]
        })
        .collect();
    if mass > T::zero() && !((worst / mass).as_f64() <= realness_tolerance::<T>()) {
        return Err(Error::NonRealField {
            residual: (worst / mass).as_f64(),
        });
    }
    FieldGrid::from_values(n, state.time, values)
}

/// Grid sampling by direct summation at each node.
pub fn eval_velocity_grid_direct<T: Real>(set: &ModeSet<T>, state: &ModeState<T>, n: usize) -> Result<FieldGrid<T>> {
    let mut grid = FieldGrid::zeros(n, state.time)?;
    let nodes: Vec<Vec2<T>> = (0..n * n).map(|idx| grid.node(idx % n, idx / n)).collect();
    let values = eval_velocity(set, state, &nodes)?;
    grid.values_mut().copy_from_slice(&values);
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn single_pair(c: f64) -> (ModeSet<f64>, ModeState<f64>) {
        let set = build_mode_set::<f64>(1).unwrap();
        let mut state = ModeState::zeros(&set);
        let i = set.wavenumbers().iter().position(|&k| k == [1, 0]).unwrap();
        state.coeffs[i] = Complex::new(c, 0.0);
        state.enforce_conjugate_symmetry(&set);
        (set, state)
    }

    fn random_state(k_max: u32, seed: u64) -> (ModeSet<f64>, ModeState<f64>) {
        let set = build_mode_set::<f64>(k_max).unwrap();
        let params = vec![ModeParams::damped(0.5, 0.7).unwrap(); set.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = sample_stationary(&set, &params, &mut rng).unwrap();
        (set, state)
    }

    #[test]
    fn mode_counts() {
        let set = build_mode_set::<f64>(1).unwrap();
        assert_eq!(set.len(), 8);
        assert_eq!(set.n_pairs(), 4);
        assert_eq!(build_mode_set::<f64>(9).unwrap().len(), 360);
        assert!(build_mode_set::<f64>(0).is_err());
        let euclid = ModeSet::<f64>::build(1, Truncation::Euclidean).unwrap();
        assert_eq!(euclid.len(), 4);
    }

    #[test]
    fn pairs_are_consistent() {
        let set = build_mode_set::<f64>(3).unwrap();
        for i in 0..set.len() {
            let k = set.wavenumbers()[i];
            let p = set.partner(i);
            assert_eq!(set.wavenumbers()[p], [-k[0], -k[1]]);
            assert_eq!(set.partner(p), i);
            assert_eq!(set.pair_of(i), set.pair_of(p));
            let e = set.eigenvector(i);
            let ep = set.eigenvector(p);
            assert_eq!(ep[0], e[0].conj());
            assert_eq!(ep[1], e[1].conj());
        }
    }

    #[test]
    fn eigenvector_of_unit_x_mode() {
        let set = build_mode_set::<f64>(1).unwrap();
        let i = set.wavenumbers().iter().position(|&k| k == [1, 0]).unwrap();
        let e = set.eigenvector(i);
        assert_eq!(e[0], Complex::new(0.0, 0.0));
        assert_eq!(e[1], Complex::new(0.0, -1.0));
    }

    #[test]
    fn deterministic_decay() {
        let set = build_mode_set::<f64>(1).unwrap();
        let mut state = ModeState::zeros(&set);
        for c in &mut state.coeffs {
            *c = Complex::new(1.0, 0.0);
        }
        let params = vec![ModeParams::damped(0.5, 0.0).unwrap(); set.len()];
        let noise = vec![Complex::new(0.0, 0.0); set.n_pairs()];
        let next = step_modes(&set, &state, &params, 1.0, &noise).unwrap();
        for c in &next.coeffs {
            assert!((c.re - (-0.5f64).exp()).abs() < 1e-15);
            assert_eq!(c.im, 0.0);
        }
        assert_eq!(next.time, 1.0);
    }

    #[test]
    fn zero_is_fixed_point() {
        let set = build_mode_set::<f64>(2).unwrap();
        let params = vec![ModeParams::damped(0.5, 0.0).unwrap(); set.len()];
        let noise = vec![Complex::new(0.0, 0.0); set.n_pairs()];
        let mut state = ModeState::zeros(&set);
        for _ in 0..100 {
            state = step_modes(&set, &state, &params, 0.1, &noise).unwrap();
        }
        assert!(state.coeffs.iter().all(|c| c.re == 0.0 && c.im == 0.0));
    }

    #[test]
    fn rejects_bad_step_inputs() {
        let set = build_mode_set::<f64>(1).unwrap();
        let params = vec![ModeParams::damped(0.5, 0.0).unwrap(); set.len()];
        let noise = vec![Complex::new(0.0, 0.0); set.n_pairs()];
        let state = ModeState::zeros(&set);
        assert!(step_modes(&set, &state, &params, 0.0, &noise).is_err());
        assert!(step_modes(&set, &state, &params, -1.0, &noise).is_err());
        assert!(step_modes(&set, &state, &params, 0.1, &noise[..1]).is_err());
        assert!(ModeParams::damped(0.0, 0.1).is_err());
        assert!(ModeParams::damped(0.5, -0.1).is_err());
    }

    #[test]
    fn deterministic_limit_matches_analytic_solution() {
        let set = build_mode_set::<f64>(1).unwrap();
        let (d, phi) = (0.5, 1.3);
        let f = Complex::new(0.2, -0.1);
        let params = vec![ModeParams::new(d, phi, f, 0.0).unwrap(); set.len()];
        let u0 = Complex::new(0.7, 0.4);
        let lambda = Complex::new(-d, phi);
        for dt in [1e-3, 1e-2, 1.0] {
            let mut state = ModeState::zeros(&set);
            state.coeffs.iter_mut().for_each(|c| *c = u0);
            state.enforce_conjugate_symmetry(&set);
            let noise = vec![Complex::new(0.0, 0.0); set.n_pairs()];
            let steps = 10;
            for _ in 0..steps {
                state = step_modes(&set, &state, &params, dt, &noise).unwrap();
            }
            let t = dt * steps as f64;
            let e = (lambda * t).exp();
            let exact = e * u0 + f / lambda * (e - 1.0);
            let got = state.coeffs[set.representative(0)];
            assert!((got - exact).norm() <= 1e-12 * exact.norm(), "dt={dt}: {got} vs {exact}");
        }
    }

    #[test]
    fn conjugate_symmetry_survives_stepping() {
        let (set, mut state) = random_state(3, 4);
        let params: Vec<_> = (0..set.len())
            .map(|i| ModeParams::new(0.3 + 0.01 * i as f64, 0.5, Complex::new(0.1, 0.2), 0.4).unwrap())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for dt in [1e-3, 0.37, 5.0] {
            let noise = draw_noise(&mut rng, set.n_pairs());
            state = step_modes(&set, &state, &params, dt, &noise).unwrap();
            assert!(state.conjugate_residual(&set) < 1e-12);
        }
    }

    #[test]
    fn single_pair_field_is_sine() {
        let c = 0.8;
        let (set, state) = single_pair(c);
        let pts: Vec<Vec2<f64>> = (0..50).map(|i| [0.13 * i as f64, 0.07 * i as f64]).collect();
        let u = eval_velocity(&set, &state, &pts).unwrap();
        for (p, v) in pts.iter().zip(&u) {
            assert!(v[0].abs() < 1e-14);
            assert!((v[1] - 2.0 * c * p[0].sin()).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_state_gives_zero_velocity() {
        let set = build_mode_set::<f64>(2).unwrap();
        let state = ModeState::zeros(&set);
        let u = eval_velocity(&set, &state, &[[1.0, 2.0], [6.0, 0.1]]).unwrap();
        assert!(u.iter().all(|v| v == &[0.0, 0.0]));
        let g = eval_velocity_grid(&set, &state, 16).unwrap();
        assert_eq!(g.values().len(), 256);
        assert!(g.flat().all(|x| x == 0.0));
    }

    #[test]
    fn velocity_is_periodic() {
        let (set, state) = random_state(3, 1);
        let p = [1.234, 4.321];
        let a = eval_velocity(&set, &state, &[p]).unwrap()[0];
        let b = eval_velocity(&set, &state, &[[p[0] + TAU, p[1]]]).unwrap()[0];
        let fast = SpectralOcean::new(&set, &state);
        let c = fast.velocity([p[0] + TAU, p[1] - TAU]);
        for k in 0..2 {
            assert!((a[k] - b[k]).abs() < 1e-12);
            assert!((a[k] - c[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn non_conjugate_state_is_rejected() {
        let set = build_mode_set::<f64>(1).unwrap();
        let mut state = ModeState::zeros(&set);
        state.coeffs[0] = Complex::new(1.0, 0.0);
        assert!(matches!(
            eval_velocity(&set, &state, &[[0.3, 0.2]]),
            Err(Error::NonRealField { .. })
        ));
    }

    #[test]
    fn grid_matches_closed_form() {
        let c = -0.35;
        let (set, state) = single_pair(c);
        let g = eval_velocity_grid(&set, &state, 64).unwrap();
        for j in 0..64 {
            for i in 0..64 {
                let [x, _] = g.node(i, j);
                let v = g.get(i, j);
                assert!(v[0].abs() < 1e-10);
                assert!((v[1] - 2.0 * c * x.sin()).abs() < 1e-10);
            }
        }
        assert!(eval_velocity_grid(&set, &state, 1).is_err());
    }

    #[test]
    fn fft_and_direct_paths_agree() {
        for (k_max, n) in [(3, 32), (3, 5), (9, 64)] {
            let (set, state) = random_state(k_max, 11 + k_max as u64);
            let a = eval_velocity_grid(&set, &state, n).unwrap();
            let b = eval_velocity_grid_direct(&set, &state, n).unwrap();
            let fast = SpectralOcean::new(&set, &state);
            for j in 0..n {
                for i in 0..n {
                    let (va, vb) = (a.get(i, j), b.get(i, j));
                    let vf = fast.velocity(a.node(i, j));
                    for k in 0..2 {
                        assert!((va[k] - vb[k]).abs() < 1e-8, "n={n}");
                        assert!((vf[k] - vb[k]).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn grid_is_divergence_free_spectrally() {
        let (set, state) = random_state(3, 7);
        let n = 32;
        let g = eval_velocity_grid(&set, &state, n).unwrap();
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(n);
        let transform = |comp: usize| {
            let mut data: Vec<Complex<f64>> = g.values().iter().map(|v| Complex::new(v[comp], 0.0)).collect();
            for row in data.chunks_exact_mut(n) {
                fwd.process(row);
            }
            let mut col = vec![Complex::new(0.0, 0.0); n];
            for i in 0..n {
                for j in 0..n {
                    col[j] = data[j * n + i];
                }
                fwd.process(&mut col);
                for j in 0..n {
                    data[j * n + i] = col[j];
                }
            }
            data
        };
        let (ux, uy) = (transform(0), transform(1));
        let signed = |i: usize| if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
        let mut worst: f64 = 0.0;
        for j in 0..n {
            for i in 0..n {
                let div = Complex::new(0.0, signed(i)) * ux[j * n + i] + Complex::new(0.0, signed(j)) * uy[j * n + i];
                worst = worst.max(div.norm() / (n * n) as f64);
            }
        }
        assert!(worst < 1e-10, "spectral divergence {worst}");
    }

    #[test]
    fn stationary_variance_of_real_part() {
        // d = 0.5, σ = 0.05: Var(Re û) = σ²/(2d)/2 = 1.25e-3
        let set = build_mode_set::<f64>(1).unwrap();
        let params = vec![ModeParams::damped(0.5, 0.05).unwrap(); set.len()];
        let model = OuModel::new(&set, &params, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut state = sample_stationary(&set, &params, &mut rng).unwrap();
        let rep = set.representative(0);
        let mut scratch = Vec::new();
        let n = 100_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            model.advance_random(&set, &mut state, &mut rng, &mut scratch).unwrap();
            let x = state.coeffs[rep].re;
            s1 += x;
            s2 += x * x;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!((var - 1.25e-3).abs() < 0.1 * 1.25e-3, "var {var}");
    }

    #[test]
    fn works_in_single_precision() {
        let set = build_mode_set::<f32>(2).unwrap();
        let params = vec![ModeParams::damped(0.5f32, 0.05).unwrap(); set.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let state = sample_stationary(&set, &params, &mut rng).unwrap();
        let g = eval_velocity_grid(&set, &state, 16).unwrap();
        let fast = SpectralOcean::new(&set, &state);
        let v = fast.velocity(g.node(3, 5));
        assert!((v[0] - g.get(3, 5)[0]).abs() < 1e-5);
    }
}
