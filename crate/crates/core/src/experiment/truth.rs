//! Truth run of the twin experiment and synthetic observations.

use std::collections::HashMap;

use rand_distr::{Distribution, StandardNormal};

use crate::coupled::CoupledModel;
use crate::error::{Error, Result};
use crate::experiment::calibrate::amplitude_scale;
use crate::experiment::config::RunConfig;
use crate::field::{FieldGrid, VelocityField};
use crate::floe::{generate_floes, Floe};
use crate::io::ObservationRecord;
use crate::ocean::{eval_velocity_grid, sample_stationary, ModeParams, ModeSet, ModeState, OuModel, SpectralOcean};
use crate::scalar::Vec2;
use crate::seeds::{stream, Stream};
use crate::torus::wrap;

/// Ocean model shared by the truth and every filter: mode set plus the
/// amplitude-scaled parameters.
#[derive(Debug, Clone)]
pub struct OceanSetup {
    pub modes: ModeSet<f64>,
    pub params: Vec<ModeParams<f64>>,
    pub amplitude_scale: f64,
}

impl OceanSetup {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let modes = cfg.mode_set()?;
        let scale = amplitude_scale(cfg)?;
        let params = cfg.base_mode_params(&modes)?.iter().map(|p| p.scaled(scale)).collect();
        Ok(Self {
            modes,
            params,
            amplitude_scale: scale,
        })
    }

    pub fn ou_model(&self, dt: f64) -> Result<OuModel<f64>> {
        OuModel::new(&self.modes, &self.params, dt)
    }
}

/// Truth trajectory sampled at every observation time `k = 0..=K`.
#[derive(Debug, Clone)]
pub struct TruthRun {
    pub ocean: OceanSetup,
    pub seed: u64,
    /// Whole floe population at `t = 0`.
    pub initial_floes: Vec<Floe<f64>>,
    /// Ocean state at each observation time.
    pub mode_trajectory: Vec<ModeState<f64>>,
    /// Ids of the floes whose trajectories were kept.
    pub tracked: Vec<usize>,
    /// `positions[k][slot]` is the position of `tracked[slot]` at time `k`.
    pub positions: Vec<Vec<Vec2<f64>>>,
    /// Tracked floes at the final time.
    pub final_floes: Vec<Floe<f64>>,
    pub times: Vec<f64>,
}

impl TruthRun {
    pub fn n_cycles(&self) -> usize {
        self.mode_trajectory.len() - 1
    }

    /// Truth velocity grid at observation index `k`.
    pub fn field(&self, k: usize, grid_n: usize) -> Result<FieldGrid<f64>> {
        let mut g = eval_velocity_grid(&self.ocean.modes, &self.mode_trajectory[k], grid_n)?;
        g.set_time(self.times[k]);
        Ok(g)
    }

    pub fn slot_of(&self) -> HashMap<usize, usize> {
        self.tracked.iter().enumerate().map(|(s, &id)| (id, s)).collect()
    }
}

/// Floe population and initial ocean of the truth for `seed`.
///
/// Floes start moving with the local ocean velocity.
pub fn truth_initial_state(cfg: &RunConfig, ocean: &OceanSetup, seed: u64) -> Result<(Vec<Floe<f64>>, ModeState<f64>)> {
    let mut rng = stream(seed, Stream::Floes, &[]);
    let mut floes = generate_floes(cfg.floes.count, &cfg.power_law()?, &cfg.material(), &mut rng)?.floes;
    let modes = sample_stationary(&ocean.modes, &ocean.params, &mut stream(seed, Stream::TruthInit, &[]))?;
    let field = SpectralOcean::new(&ocean.modes, &modes);
    for f in &mut floes {
        f.vel = field.velocity(f.pos);
    }
    Ok((floes, modes))
}

/// Runs the truth. Only the floes in `tracked` are integrated (floes do not
/// interact and do not feed back on the ocean); `None` tracks them all.
pub fn run_truth(cfg: &RunConfig, seed: u64, tracked: Option<&[usize]>) -> Result<TruthRun> {
    cfg.validate()?;
    let ocean = OceanSetup::new(cfg)?;
    let (initial_floes, mut modes) = truth_initial_state(cfg, &ocean, seed)?;
    let tracked: Vec<usize> = match tracked {
        Some(ids) => {
            if let Some(&bad) = ids.iter().find(|&&i| i >= initial_floes.len()) {
                return Err(Error::invalid("tracked floes", format!("id {bad} out of range")));
            }
            ids.to_vec()
        }
        None => (0..initial_floes.len()).collect(),
    };
    let mut floes: Vec<Floe<f64>> = tracked.iter().map(|&i| initial_floes[i]).collect();

    let ou = ocean.ou_model(cfg.time.dt)?;
    let model = CoupledModel {
        modes: &ocean.modes,
        ou: &ou,
        integrator: cfg.floes.integrator,
    };
    let mut rng = stream(seed, Stream::TruthNoise, &[]);
    let mut scratch = Vec::new();
    let cycles = cfg.n_cycles();
    let mut mode_trajectory = Vec::with_capacity(cycles + 1);
    let mut positions = Vec::with_capacity(cycles + 1);
    let mut times = Vec::with_capacity(cycles + 1);
    for k in 0..=cycles {
        if k > 0 {
            for _ in 0..cfg.substeps() {
                model.step(&mut modes, &mut floes, &mut rng, &mut scratch)?;
            }
            if !modes.is_finite() || floes.iter().any(|f| !f.pos.iter().chain(&f.vel).all(|x| x.is_finite())) {
                return Err(Error::NonFinite("truth run"));
            }
        }
        // accumulated step times drift; pin the clock to the observation grid
        modes.time = cfg.obs_time(k);
        mode_trajectory.push(modes.clone());
        positions.push(floes.iter().map(|f| f.pos).collect());
        times.push(cfg.obs_time(k));
    }
    Ok(TruthRun {
        ocean,
        seed,
        initial_floes,
        mode_trajectory,
        tracked,
        positions,
        final_floes: floes,
        times,
    })
}

/// Noisy positions of `ids` at every observation time. Each floe draws from
/// its own stream, so a floe's errors do not depend on which other floes are
/// observed. Noise is added before wrapping.
pub fn generate_observations(truth: &TruthRun, ids: &[usize], sigma_obs: f64, seed: u64) -> Result<Vec<ObservationRecord>> {
    if !(sigma_obs >= 0.0) || !sigma_obs.is_finite() {
        return Err(Error::invalid("sigma_obs", format!("must be non-negative, got {sigma_obs}")));
    }
    let slots = truth.slot_of();
    let mut per_floe = Vec::with_capacity(ids.len());
    for &id in ids {
        let slot = *slots
            .get(&id)
            .ok_or_else(|| Error::invalid("observed floes", format!("floe {id} was not tracked by the truth run")))?;
        let mut rng = stream(seed, Stream::Observation, &[id as u64]);
        let track: Vec<Vec2<f64>> = truth
            .positions
            .iter()
            .map(|snap| {
                let p = snap[slot];
                let ex: f64 = StandardNormal.sample(&mut rng);
                let ey: f64 = StandardNormal.sample(&mut rng);
                [wrap(p[0] + sigma_obs * ex), wrap(p[1] + sigma_obs * ey)]
            })
            .collect();
        per_floe.push((id, track));
    }
    let mut out = Vec::with_capacity(ids.len() * truth.times.len());
    for (k, &time) in truth.times.iter().enumerate() {
        for (id, track) in &per_floe {
            out.push(ObservationRecord {
                time,
                floe_id: *id,
                x: track[k][0],
                y: track[k][1],
            });
        }
    }
    Ok(out)
}

/// Observations indexed by `(time index, floe id)`.
#[derive(Debug, Clone, Default)]
pub struct ObservationTable {
    by_key: HashMap<(usize, usize), Vec2<f64>>,
}

impl ObservationTable {
    pub fn new(records: &[ObservationRecord], dt_obs: f64) -> Result<Self> {
        let mut by_key = HashMap::with_capacity(records.len());
        for r in records {
            let k = (r.time / dt_obs).round();
            if !(k >= 0.0) || (r.time - k * dt_obs).abs() > 1e-6 * dt_obs || !r.x.is_finite() || !r.y.is_finite() {
                return Err(Error::invalid(
                    "observations",
                    format!("record at t = {} for floe {} is off the observation grid", r.time, r.floe_id),
                ));
            }
            by_key.insert((k as usize, r.floe_id), [r.x, r.y]);
        }
        Ok(Self { by_key })
    }

    pub fn get(&self, k: usize, floe: usize) -> Result<Vec2<f64>> {
        self.by_key.get(&(k, floe)).copied().ok_or(Error::MissingObservations(k))
    }

    /// Stacked `x_0, y_0, x_1, ...` for `floes` at index `k`.
    pub fn stacked(&self, k: usize, floes: &[usize]) -> Result<Vec<f64>> {
        let mut y = Vec::with_capacity(2 * floes.len());
        for &id in floes {
            y.extend(self.get(k, id)?);
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        let mut c = RunConfig::desk_scale();
        c.floes.count = 50;
        c.time.t_final = 0.05;
        c.layout.grid_n = 16;
        c
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let c = small();
        let a = run_truth(&c, 3, None).unwrap();
        let b = run_truth(&c, 3, None).unwrap();
        assert_eq!(a.positions, b.positions);
        assert_eq!(a.mode_trajectory, b.mode_trajectory);
        let other = run_truth(&c, 4, None).unwrap();
        assert_ne!(a.positions, other.positions);
        assert_eq!(a.times.len(), 6);
    }

    #[test]
    fn tracking_a_subset_matches_full_run() {
        let c = small();
        let all = run_truth(&c, 5, None).unwrap();
        let some = run_truth(&c, 5, Some(&[7, 2, 40])).unwrap();
        for (k, snap) in some.positions.iter().enumerate() {
            assert_eq!(snap[0], all.positions[k][7]);
            assert_eq!(snap[1], all.positions[k][2]);
            assert_eq!(snap[2], all.positions[k][40]);
        }
        assert!(run_truth(&c, 5, Some(&[50])).is_err());
    }

    #[test]
    fn quiet_ocean_lets_floes_coast_to_rest() {
        let mut c = small();
        c.ocean.noise = 0.0;
        c.ocean.amplitude_scale = Some(1.0);
        let t = run_truth(&c, 1, None).unwrap();
        for m in &t.mode_trajectory {
            assert!(m.coeffs.iter().all(|z| z.norm() == 0.0));
        }
        // floes start with the (zero) local ocean velocity and never move
        assert_eq!(t.positions.first(), t.positions.last());
    }

    #[test]
    fn noiseless_observations_equal_truth() {
        let c = small();
        let t = run_truth(&c, 2, None).unwrap();
        let obs = generate_observations(&t, &[1, 4], 0.0, 2).unwrap();
        assert_eq!(obs.len(), 2 * t.times.len());
        let table = ObservationTable::new(&obs, c.time.dt_obs).unwrap();
        for k in 0..t.times.len() {
            assert_eq!(table.get(k, 4).unwrap(), t.positions[k][4]);
        }
        assert!(matches!(table.get(0, 9), Err(Error::MissingObservations(0))));
    }

    #[test]
    fn observation_errors_do_not_depend_on_the_other_floes() {
        let c = small();
        let t = run_truth(&c, 2, None).unwrap();
        let a = generate_observations(&t, &[3, 8], 0.01, 9).unwrap();
        let b = generate_observations(&t, &[8], 0.01, 9).unwrap();
        let pick = |v: &[ObservationRecord]| v.iter().filter(|r| r.floe_id == 8).copied().collect::<Vec<_>>();
        assert_eq!(pick(&a), pick(&b));
    }
}
