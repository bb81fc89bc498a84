//! Speed-scale calibration of the ocean amplitude and the floe drag.

use serde::{Deserialize, Serialize};

use crate::coupled::CoupledModel;
use crate::error::Result;
use crate::experiment::config::RunConfig;
use crate::experiment::truth::OceanSetup;
use crate::floe::generate_floes;
use crate::ocean::{eval_velocity_grid, sample_stationary, ModeParams, ModeSet, OuModel};
use crate::scalar::norm2;
use crate::seeds::{stream, Stream};

/// Calibration draws use their own fixed seed, so the scale is a property of
/// the configuration and identical for truth and filters of every run.
pub const CALIBRATION_SEED: u64 = 0x5EED_CA11;

/// Median over stationary draws of the maximum grid speed.
pub fn median_max_speed(set: &ModeSet<f64>, params: &[ModeParams<f64>], grid_n: usize, draws: usize) -> Result<f64> {
    let mut rng = stream(CALIBRATION_SEED, Stream::Calibration, &[0]);
    let mut speeds = (0..draws.max(1))
        .map(|_| {
            let s = sample_stationary(set, params, &mut rng)?;
            Ok(eval_velocity_grid(set, &s, grid_n)?.max_speed())
        })
        .collect::<Result<Vec<f64>>>()?;
    speeds.sort_by(f64::total_cmp);
    let m = speeds.len();
    Ok(if m % 2 == 1 {
        speeds[m / 2]
    } else {
        0.5 * (speeds[m / 2 - 1] + speeds[m / 2])
    })
}

/// Global factor applied to noise and forcing so that the typical maximum
/// ocean speed equals the configured target.
pub fn amplitude_scale(cfg: &RunConfig) -> Result<f64> {
    if let Some(s) = cfg.ocean.amplitude_scale {
        return Ok(s);
    }
    let set = cfg.mode_set()?;
    let params = cfg.base_mode_params(&set)?;
    let speed = median_max_speed(&set, &params, cfg.layout.grid_n, cfg.ocean.calibration_draws)?;
    if speed > 0.0 {
        Ok(cfg.ocean.speed_target / speed)
    } else {
        // silent ocean: nothing to scale
        Ok(1.0)
    }
}

/// Outcome of the `calibrate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub amplitude_scale: f64,
    pub ocean_speed_median: f64,
    pub ice_speed_target: f64,
    /// Target actually pursued; free-drifting floes cannot outrun the ocean.
    pub ice_speed_goal: f64,
    pub drag_scale: f64,
    pub ice_speed_max: f64,
    pub ocean_speed_max: f64,
    pub reachable: bool,
}

/// Maximum floe and ocean speeds over `steps` model steps for floes
/// starting at rest.
fn drift_speeds(cfg: &RunConfig, ocean: &OceanSetup, ou: &OuModel<f64>, drag_scale: f64, floes: usize, steps: usize) -> Result<(f64, f64)> {
    let mut c = cfg.clone();
    c.floes.drag_scale = drag_scale;
    let mut rng = stream(CALIBRATION_SEED, Stream::Calibration, &[1]);
    let mut pop = generate_floes(floes, &c.power_law()?, &c.material(), &mut rng)?.floes;
    let mut modes = sample_stationary(&ocean.modes, &ocean.params, &mut rng)?;
    let model = CoupledModel {
        modes: &ocean.modes,
        ou,
        integrator: c.floes.integrator,
    };
    let mut scratch = Vec::new();
    let (mut ice, mut sea) = (0.0f64, 0.0f64);
    for step in 0..steps {
        model.step(&mut modes, &mut pop, &mut rng, &mut scratch)?;
        ice = pop.iter().map(|f| norm2(f.vel)).fold(ice, f64::max);
        if step % 50 == 0 {
            sea = sea.max(eval_velocity_grid(&ocean.modes, &modes, cfg.layout.grid_n)?.max_speed());
        }
    }
    Ok((ice, sea))
}

/// Calibrates the ocean amplitude, then bisects `c_d` (in log space) so that
/// the largest floe speed reached from rest over one time unit matches
/// `ice_speed_target`, capped at 90% of the ocean's maximum speed.
pub fn calibrate(cfg: &RunConfig, ice_speed_target: f64) -> Result<CalibrationReport> {
    cfg.validate()?;
    let ocean = OceanSetup::new(cfg)?;
    let base = cfg.base_mode_params(&ocean.modes)?;
    let ocean_speed_median =
        median_max_speed(&ocean.modes, &base, cfg.layout.grid_n, cfg.ocean.calibration_draws)? * ocean.amplitude_scale;
    let ou = ocean.ou_model(cfg.time.dt)?;
    let steps = (1.0 / cfg.time.dt).round().max(1.0) as usize;
    let floes = cfg.floes.count.min(200);

    let (_, ocean_speed_max) = drift_speeds(cfg, &ocean, &ou, cfg.floes.drag_scale, 1, steps)?;
    let goal = ice_speed_target.min(0.9 * ocean_speed_max);
    let reachable = goal >= ice_speed_target;
    if !reachable {
        log::warn!(
            "ice speed target {ice_speed_target} exceeds what free drift allows (ocean max {ocean_speed_max:.3}); aiming for {goal:.3}"
        );
    }
    let (mut lo, mut hi) = (1e-2f64.ln(), 1e5f64.ln());
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        let (ice, _) = drift_speeds(cfg, &ocean, &ou, mid.exp(), floes, steps)?;
        if ice < goal {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let drag_scale = (0.5 * (lo + hi)).exp();
    let (ice_speed_max, _) = drift_speeds(cfg, &ocean, &ou, drag_scale, floes, steps)?;
    Ok(CalibrationReport {
        amplitude_scale: ocean.amplitude_scale,
        ocean_speed_median,
        ice_speed_target,
        ice_speed_goal: goal,
        drag_scale,
        ice_speed_max,
        ocean_speed_max,
        reachable,
    })
}
