//! Ensemble transform Kalman filter over the augmented floe/mode state.
//!
//! The analysis is the symmetric square-root form: with `S = Y'ᵀR⁻¹Y'/(N-1)
//! = QΛQᵀ`, the anomalies are transformed by `T = Q(Λ+I)^{-1/2}Qᵀ` and the
//! mean moves by `X' w̄` with `w̄ = Q(Λ+I)⁻¹Qᵀ Y'ᵀR⁻¹ d / (N-1)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;

use crate::coupled::CoupledModel;
use crate::error::{ensure_dim, Error, Result};
use crate::floe::{Floe, FloeProps};
use crate::ocean::{ModeSet, ModeState};
use crate::scalar::Real;
use crate::torus::{min_image, wrap};

/// Layout of an augmented state vector: `[x, y, u, v]` for each observed
/// floe followed by `(Re, Im)` of each conjugate-pair representative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub n_floes: usize,
    pub n_pairs: usize,
}

impl StateLayout {
    pub fn new(n_floes: usize, n_pairs: usize) -> Self {
        Self { n_floes, n_pairs }
    }

    pub fn dim(&self) -> usize {
        4 * self.n_floes + 2 * self.n_pairs
    }

    pub fn floe_offset(&self, floe: usize) -> usize {
        4 * floe
    }

    pub fn mode_offset(&self) -> usize {
        4 * self.n_floes
    }

    /// Rows holding floe positions, in observation order `x_0, y_0, x_1, ...`.
    pub fn position_rows(&self) -> Vec<usize> {
        (0..self.n_floes).flat_map(|l| [4 * l, 4 * l + 1]).collect()
    }
}

/// A packed augmented state.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState<T: Real> {
    pub layout: StateLayout,
    pub values: DVector<T>,
}

pub fn pack<T: Real>(floes: &[Floe<T>], set: &ModeSet<T>, modes: &ModeState<T>) -> Result<AugmentedState<T>> {
    ensure_dim("mode state", set.len(), modes.coeffs.len())?;
    let layout = StateLayout::new(floes.len(), set.n_pairs());
    let mut values = DVector::zeros(layout.dim());
    for (l, f) in floes.iter().enumerate() {
        let o = layout.floe_offset(l);
        values[o] = f.pos[0];
        values[o + 1] = f.pos[1];
        values[o + 2] = f.vel[0];
        values[o + 3] = f.vel[1];
    }
    let m0 = layout.mode_offset();
    for (pair, &rep) in set.representatives().iter().enumerate() {
        values[m0 + 2 * pair] = modes.coeffs[rep].re;
        values[m0 + 2 * pair + 1] = modes.coeffs[rep].im;
    }
    Ok(AugmentedState { layout, values })
}

/// Inverse of [`pack`]; the static floe properties are supplied separately
/// and conjugate partners are rebuilt from their representatives.
pub fn unpack<T: Real>(
    state: &AugmentedState<T>,
    set: &ModeSet<T>,
    props: &[FloeProps<T>],
    time: T,
) -> Result<(Vec<Floe<T>>, ModeState<T>)> {
    let layout = state.layout;
    ensure_dim("augmented state", layout.dim(), state.values.len())?;
    ensure_dim("floe properties", layout.n_floes, props.len())?;
    ensure_dim("mode pairs", set.n_pairs(), layout.n_pairs)?;
    let v = &state.values;
    let floes = props
        .iter()
        .enumerate()
        .map(|(l, p)| {
            let o = layout.floe_offset(l);
            Floe {
                pos: [v[o], v[o + 1]],
                vel: [v[o + 2], v[o + 3]],
                props: *p,
            }
        })
        .collect();
    let mut modes = ModeState::zeros(set);
    modes.time = time;
    let m0 = layout.mode_offset();
    for (pair, &rep) in set.representatives().iter().enumerate() {
        modes.coeffs[rep] = Complex::new(v[m0 + 2 * pair], v[m0 + 2 * pair + 1]);
    }
    modes.enforce_conjugate_symmetry(set);
    Ok((floes, modes))
}

/// Ensemble of state vectors stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble<T: Real> {
    pub members: DMatrix<T>,
    pub time: T,
}

impl<T: Real> Ensemble<T> {
    pub fn new(members: DMatrix<T>, time: T) -> Result<Self> {
        if members.ncols() < 2 {
            return Err(Error::invalid("ensemble_size", format!("need at least 2 members, got {}", members.ncols())));
        }
        Ok(Self { members, time })
    }

    pub fn from_columns(columns: &[DVector<T>], time: T) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::invalid("ensemble_size", "no members"));
        }
        let dim = columns[0].len();
        for c in columns {
            ensure_dim("ensemble member", dim, c.len())?;
        }
        Self::new(DMatrix::from_columns(columns), time)
    }

    pub fn size(&self) -> usize {
        self.members.ncols()
    }

    pub fn dim(&self) -> usize {
        self.members.nrows()
    }

    pub fn mean(&self) -> DVector<T> {
        self.members.column_mean()
    }

    /// Trace of the sample covariance.
    pub fn spread(&self) -> T {
        let mean = self.mean();
        let n1 = T::from_count(self.size() - 1);
        self.members
            .column_iter()
            .map(|c| (c - &mean).norm_squared())
            .fold(T::zero(), |a, b| a + b)
            / n1
    }

    pub fn is_finite(&self) -> bool {
        self.members.iter().all(|x| x.is_finite())
    }
}

/// Linear observation of selected state rows with independent Gaussian
/// errors. When `period` is set, observed rows are angles on a circle of
/// that length and all differences use the minimum image.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsModel<T> {
    pub rows: Vec<usize>,
    pub variances: Vec<T>,
    pub period: Option<T>,
}

impl<T: Real> ObsModel<T> {
    pub fn new(rows: Vec<usize>, variances: Vec<T>, period: Option<T>) -> Result<Self> {
        ensure_dim("observation variances", rows.len(), variances.len())?;
        if let Some(v) = variances.iter().find(|v| !(**v > T::zero()) || !v.is_finite()) {
            return Err(Error::invalid("R", format!("observation variances must be positive, got {v}")));
        }
        Ok(Self { rows, variances, period })
    }

    /// Positions of every floe in `layout` observed with std `sigma_obs` on
    /// the periodic domain.
    pub fn floe_positions(layout: &StateLayout, sigma_obs: T) -> Result<Self> {
        let rows = layout.position_rows();
        let n = rows.len();
        Self::new(rows, vec![sigma_obs * sigma_obs; n], Some(T::period()))
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    fn diff(&self, a: T, b: T) -> T {
        match self.period {
            Some(_) => min_image(a - b),
            None => a - b,
        }
    }
}

/// Ensemble-space quantities of one analysis.
#[derive(Debug, Clone)]
pub struct EtkfTransform<T: Real> {
    /// `S = Y'ᵀR⁻¹Y'/(N-1)`
    pub s: DMatrix<T>,
    /// Symmetric square root `(I + S)^{-1/2}`.
    pub t: DMatrix<T>,
    /// Mean update weights.
    pub w_mean: DVector<T>,
}

/// Builds the transform from observation-space anomalies `Y'` (p × N), the
/// innovation `d` and the diagonal of `R`.
///
/// With fewer observations than members the eigenproblem is solved in
/// observation space: for `Ỹ = R^{-1/2}Y'/√(N-1)` and `ỸỸᵀ = UΛUᵀ`,
/// `T = I + ỸᵀU g(Λ) UᵀỸ` with `g(λ) = ((1+λ)^{-1/2} - 1)/λ`, and
/// `w̄ = Ỹᵀ(I + ỸỸᵀ)⁻¹R^{-1/2}d/√(N-1)`. Both forms give the same `T`.
pub fn etkf_transform<T: Real>(y_anom: &DMatrix<T>, innovation: &DVector<T>, variances: &[T]) -> Result<EtkfTransform<T>> {
    let (p, n) = y_anom.shape();
    ensure_dim("innovation", p, innovation.len())?;
    ensure_dim("observation variances", p, variances.len())?;
    let n1 = T::from_count(n - 1);
    let root_n1 = n1.sqrt();
    let mut whitened = y_anom.clone();
    let mut d = innovation.clone();
    for (k, mut row) in whitened.row_iter_mut().enumerate() {
        let sd = variances[k].sqrt();
        row /= sd * root_n1;
        d[k] /= sd;
    }
    let s = whitened.tr_mul(&whitened);
    if p < n {
        let mut g = &whitened * whitened.transpose();
        g = (&g + g.transpose()) * T::lit(0.5);
        let eig = SymmetricEigen::new(g);
        let u = eig.eigenvectors;
        let lambda = eig.eigenvalues.map(|l| if l > T::zero() { l } else { T::zero() });
        let gain = lambda.map(|l| {
            let r = (T::one() + l).sqrt();
            -T::one() / (r * (T::one() + r))
        });
        let inv = lambda.map(|l| T::one() / (T::one() + l));
        // Uᵀ Ỹ, r × N
        let proj = u.tr_mul(&whitened);
        let t = DMatrix::identity(n, n) + proj.tr_mul(&(DMatrix::from_diagonal(&gain) * &proj));
        let coeff = &u * DMatrix::from_diagonal(&inv) * u.tr_mul(&d);
        let w_mean = whitened.tr_mul(&coeff) / root_n1;
        return Ok(EtkfTransform { s, t, w_mean });
    }
    let s_sym = (&s + s.transpose()) * T::lit(0.5);
    let eig = SymmetricEigen::new(s_sym);
    let q = eig.eigenvectors;
    let lambda = eig.eigenvalues.map(|l| if l > T::zero() { l } else { T::zero() });
    let inv_sqrt = lambda.map(|l| T::one() / (T::one() + l).sqrt());
    let inv = lambda.map(|l| T::one() / (T::one() + l));
    let t = &q * DMatrix::from_diagonal(&inv_sqrt) * q.transpose();
    let projected = whitened.tr_mul(&d) / root_n1;
    let w_mean = &q * DMatrix::from_diagonal(&inv) * (q.tr_mul(&projected));
    Ok(EtkfTransform { s, t, w_mean })
}

/// Summary numbers of one analysis step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisDiagnostics<T> {
    /// RMS of the innovation `y - H x̄`.
    pub innovation_rms: T,
    /// RMS forecast standard deviation of the observed quantities.
    pub obs_spread: T,
    /// Total forecast variance (trace of the sample covariance).
    pub forecast_spread: T,
    pub analysis_spread: T,
}

fn ensemble_mean_and_anomalies<T: Real>(ens: &Ensemble<T>, periodic_rows: &[usize]) -> (DVector<T>, DMatrix<T>) {
    let n = ens.size();
    let nf = T::from_count(n);
    let mut mean = ens.mean();
    let mut anom = ens.members.clone();
    for c in 0..n {
        anom.column_mut(c).axpy(-T::one(), &mean, T::one());
    }
    for &r in periodic_rows {
        // circular mean: average wrapped offsets from the first member
        let reference = ens.members[(r, 0)];
        let offsets: Vec<T> = (0..n).map(|c| min_image(ens.members[(r, c)] - reference)).collect();
        let shift = offsets.iter().fold(T::zero(), |a, &b| a + b) / nf;
        mean[r] = wrap(reference + shift);
        for (c, o) in offsets.into_iter().enumerate() {
            anom[(r, c)] = o - shift;
        }
    }
    (mean, anom)
}

/// ETKF analysis of `ens` given observations `y`.
pub fn etkf_analysis<T: Real>(ens: &Ensemble<T>, y: &[T], obs: &ObsModel<T>, inflation: T) -> Result<Ensemble<T>> {
    etkf_analysis_with_diagnostics(ens, y, obs, inflation).map(|(e, _)| e)
}

pub fn etkf_analysis_with_diagnostics<T: Real>(
    ens: &Ensemble<T>,
    y: &[T],
    obs: &ObsModel<T>,
    inflation: T,
) -> Result<(Ensemble<T>, AnalysisDiagnostics<T>)> {
    let n = ens.size();
    if n < 2 {
        return Err(Error::invalid("ensemble_size", format!("need at least 2 members, got {n}")));
    }
    ensure_dim("observations", obs.dim(), y.len())?;
    if !(inflation >= T::one()) || !inflation.is_finite() {
        return Err(Error::invalid("inflation", format!("must be >= 1, got {inflation}")));
    }
    if !ens.is_finite() {
        return Err(Error::NonFinite("forecast ensemble"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("observations"));
    }
    if let Some(&r) = obs.rows.iter().find(|&&r| r >= ens.dim()) {
        return Err(Error::invalid("obs rows", format!("row {r} outside state of dimension {}", ens.dim())));
    }

    let periodic: &[usize] = if obs.period.is_some() { &obs.rows } else { &[] };
    let (mean, mut anom) = ensemble_mean_and_anomalies(ens, periodic);
    if inflation > T::one() {
        anom *= inflation.sqrt();
    }
    let p = obs.dim();
    let mut y_anom = DMatrix::zeros(p, n);
    let mut innovation = DVector::zeros(p);
    for (k, &r) in obs.rows.iter().enumerate() {
        y_anom.row_mut(k).copy_from(&anom.row(r));
        innovation[k] = obs.diff(y[k], mean[r]);
    }
    let transform = etkf_transform(&y_anom, &innovation, &obs.variances)?;

    let mut weights = transform.t.clone();
    for mut col in weights.column_iter_mut() {
        col += &transform.w_mean;
    }
    let mut members = &anom * weights;
    for mut col in members.column_iter_mut() {
        col += &mean;
    }
    if obs.period.is_some() {
        for &r in &obs.rows {
            for c in 0..n {
                members[(r, c)] = wrap(members[(r, c)]);
            }
        }
    }
    let analysis = Ensemble {
        members,
        time: ens.time,
    };
    if !analysis.is_finite() {
        return Err(Error::NonFinite("analysis ensemble"));
    }
    let n1 = T::from_count(n - 1);
    let forecast_spread = anom.norm_squared() / n1;
    let analysis_spread = (&anom * &transform.t).norm_squared() / n1;
    let (innovation_rms, obs_spread) = if p > 0 {
        let pf = T::from_count(p);
        ((innovation.norm_squared() / pf).sqrt(), (y_anom.norm_squared() / (n1 * pf)).sqrt())
    } else {
        (T::zero(), T::zero())
    };
    Ok((
        analysis,
        AnalysisDiagnostics {
            innovation_rms,
            obs_spread,
            forecast_spread,
            analysis_spread,
        },
    ))
}

/// Member propagation between observation times.
pub struct ForecastModel<'a, T> {
    pub coupled: CoupledModel<'a, T>,
    /// Static properties of the floes carried in the state.
    pub floes: &'a [FloeProps<T>],
}

/// Advances every member by `substeps` model steps, each member drawing its
/// noise from its own stream.
pub fn forecast<T: Real, R: Rng + Send>(
    ens: &Ensemble<T>,
    model: &ForecastModel<'_, T>,
    dt_obs: T,
    substeps: usize,
    rngs: &mut [R],
) -> Result<Ensemble<T>> {
    let dt = model.coupled.dt();
    let total = dt * T::from_count(substeps);
    if substeps == 0 || (total - dt_obs).abs() > T::lit(1e-9) * dt_obs.abs().max(T::one()) {
        return Err(Error::invalid(
            "dt_obs",
            format!("{dt_obs} is not {substeps} model steps of {dt}"),
        ));
    }
    ensure_dim("member rngs", ens.size(), rngs.len())?;
    let set = model.coupled.modes;
    let layout = StateLayout::new(model.floes.len(), set.n_pairs());
    ensure_dim("augmented state", layout.dim(), ens.dim())?;

    let columns: Vec<DVector<T>> = ens.members.column_iter().map(|c| c.into_owned()).collect();
    let advanced: Vec<DVector<T>> = columns
        .into_par_iter()
        .zip(rngs.par_iter_mut())
        .map(|(col, rng)| -> Result<DVector<T>> {
            let state = AugmentedState { layout, values: col };
            let (mut floes, mut modes) = unpack(&state, set, model.floes, ens.time)?;
            let mut scratch = Vec::new();
            for _ in 0..substeps {
                model.coupled.step(&mut modes, &mut floes, rng, &mut scratch)?;
            }
            Ok(pack(&floes, set, &modes)?.values)
        })
        .collect::<Result<_>>()?;
    let out = Ensemble {
        members: DMatrix::from_columns(&advanced),
        time: ens.time + dt_obs,
    };
    if !out.is_finite() {
        return Err(Error::NonFinite("forecast ensemble"));
    }
    Ok(out)
}
