//! Domain-decomposed assimilation cycle and its forecast-only control.

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupled::CoupledModel;
use crate::decomposition::{fuse_fields, gaussian_weights, select_all, Selection, WeightGrid};
use crate::error::{Error, Result};
use crate::etkf::{
    etkf_analysis_with_diagnostics, forecast, pack, unpack, AnalysisDiagnostics, AugmentedState, Ensemble, ForecastModel,
    ObsModel, StateLayout,
};
use crate::experiment::config::RunConfig;
use crate::experiment::truth::{run_truth, truth_initial_state, ObservationTable, OceanSetup, TruthRun};
use crate::field::{FieldGrid, VelocityField};
use crate::floe::{Floe, FloeProps};
use crate::io::ObservationRecord;
use crate::metrics::{nrmse, pcc};
use crate::ocean::{eval_velocity_grid, sample_stationary, ModeSet, ModeState, SpectralOcean};
use crate::scalar::Vec2;
use crate::seeds::{stream, Stream, StreamRng};
use crate::torus::wrap;

/// Observation floes of every subdomain, chosen on the `t = 0` population.
pub fn select_for(cfg: &RunConfig, floes: &[Floe<f64>]) -> Result<Vec<Selection>> {
    select_all(floes, &cfg.subdomains()?, cfg.layout.l_obs, cfg.radius_range())
}

/// Ids of all observed floes in subdomain order.
pub fn observed_ids(selections: &[Selection]) -> Vec<usize> {
    selections.iter().flat_map(|s| s.indices.iter().copied()).collect()
}

/// Observed floes of every subdomain from observation index `start` until
/// the next re-selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionEpoch {
    pub start: usize,
    pub selections: Vec<Selection>,
}

/// Selections at every re-selection time, each made on the truth positions
/// at that time. Re-selecting needs a truth that tracks the whole population.
pub fn selection_schedule(cfg: &RunConfig, truth: &TruthRun) -> Result<Vec<SelectionEpoch>> {
    let everyone = truth.tracked.iter().copied().eq(0..truth.initial_floes.len());
    cfg.selection_times()
        .into_iter()
        .map(|k| {
            let selections = if k == 0 {
                select_for(cfg, &truth.initial_floes)?
            } else if everyone {
                let floes: Vec<Floe<f64>> = truth
                    .initial_floes
                    .iter()
                    .zip(&truth.positions[k])
                    .map(|(f, &pos)| Floe { pos, ..*f })
                    .collect();
                select_for(cfg, &floes)?
            } else {
                return Err(Error::config(
                    "layout.reselect_every",
                    "re-selection needs a truth run that tracks every floe",
                ));
            };
            Ok(SelectionEpoch { start: k, selections })
        })
        .collect()
}

/// Every floe observed at some time of the schedule, sorted.
pub fn scheduled_ids(schedule: &[SelectionEpoch]) -> Vec<usize> {
    let mut ids: Vec<usize> = schedule.iter().flat_map(|e| observed_ids(&e.selections)).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Truth run tracking only the floes `cfg` observes, or the whole
/// population when the selection is refreshed.
pub fn observed_truth(cfg: &RunConfig, seed: u64) -> Result<TruthRun> {
    if cfg.layout.reselect_every > 0 {
        return run_truth(cfg, seed, None);
    }
    let ocean = OceanSetup::new(cfg)?;
    let (population, _) = truth_initial_state(cfg, &ocean, seed)?;
    let mut ids = observed_ids(&select_for(cfg, &population)?);
    ids.sort_unstable();
    run_truth(cfg, seed, Some(&ids))
}

/// Member `m` of the initial ensemble of one filter: modes from the
/// stationary prior, floe positions from the first observation plus noise,
/// floe velocities from the member's own ocean plus noise.
pub fn initial_member<R: Rng>(
    cfg: &RunConfig,
    ocean: &OceanSetup,
    props: &[FloeProps<f64>],
    first_obs: &[f64],
    rng: &mut R,
) -> Result<DVector<f64>> {
    let modes = sample_stationary(&ocean.modes, &ocean.params, rng)?;
    let field = SpectralOcean::new(&ocean.modes, &modes);
    let floes: Vec<Floe<f64>> = props
        .iter()
        .enumerate()
        .map(|(l, &p)| fresh_floe(cfg, &field, p, [first_obs[2 * l], first_obs[2 * l + 1]], rng))
        .collect();
    Ok(pack(&floes, &ocean.modes, &modes)?.values)
}

/// A member's floe newly entering the state: observed position plus noise,
/// the member's ocean velocity there plus noise.
fn fresh_floe<R: Rng>(cfg: &RunConfig, field: &SpectralOcean<f64>, props: FloeProps<f64>, obs: Vec2<f64>, rng: &mut R) -> Floe<f64> {
    let sigma = cfg.filter.sigma_obs;
    let spread = cfg.filter.velocity_spread;
    let mut normal = || -> f64 { StandardNormal.sample(rng) };
    let pos = [wrap(obs[0] + sigma * normal()), wrap(obs[1] + sigma * normal())];
    let u = field.velocity(pos);
    Floe {
        pos,
        vel: [u[0] + spread * normal(), u[1] + spread * normal()],
        props,
    }
}

/// Moves every member onto a new set of observed floes. Floes in both sets
/// keep their state; new ones start from their observation at `k` like the
/// initial ensemble. The ocean part is untouched.
#[allow(clippy::too_many_arguments)]
fn reselect_members(
    cfg: &RunConfig,
    ocean: &OceanSetup,
    ens: &Ensemble<f64>,
    old: (&[usize], &[FloeProps<f64>]),
    new: (&[usize], &[FloeProps<f64>]),
    obs: &[f64],
    rngs: &mut [StreamRng],
) -> Result<Ensemble<f64>> {
    let layout = StateLayout::new(old.0.len(), ocean.modes.n_pairs());
    let slot: HashMap<usize, usize> = old.0.iter().enumerate().map(|(j, &id)| (id, j)).collect();
    let columns = ens
        .members
        .column_iter()
        .zip(rngs.iter_mut())
        .map(|(col, rng)| {
            let state = AugmentedState {
                layout,
                values: col.into_owned(),
            };
            let (floes, modes) = unpack(&state, &ocean.modes, old.1, ens.time)?;
            let field = SpectralOcean::new(&ocean.modes, &modes);
            let next: Vec<Floe<f64>> = new
                .0
                .iter()
                .zip(new.1)
                .enumerate()
                .map(|(l, (id, &p))| match slot.get(id) {
                    Some(&j) => floes[j],
                    None => fresh_floe(cfg, &field, p, [obs[2 * l], obs[2 * l + 1]], rng),
                })
                .collect();
            Ok(pack(&next, &ocean.modes, &modes)?.values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ensemble::from_columns(&columns, ens.time)
}

/// Mode block of the ensemble mean as a (conjugate-symmetric) ocean state.
pub fn mean_modes(ens: &Ensemble<f64>, set: &ModeSet<f64>, n_floes: usize) -> ModeState<f64> {
    let mean = ens.mean();
    let m0 = StateLayout::new(n_floes, set.n_pairs()).mode_offset();
    let mut state = ModeState::zeros(set);
    for (pair, &rep) in set.representatives().iter().enumerate() {
        state.coeffs[rep] = Complex::new(mean[m0 + 2 * pair], mean[m0 + 2 * pair + 1]);
    }
    state.enforce_conjugate_symmetry(set);
    state.time = ens.time;
    state
}

/// Per-subdomain filter output.
#[derive(Debug, Clone)]
pub struct FilterTrack {
    pub subdomain: usize,
    /// Observed floes per epoch as `(start index, ids)`.
    pub floes: Vec<(usize, Vec<usize>)>,
    /// Ensemble-mean ocean at each observation time.
    pub mean_modes: Vec<ModeState<f64>>,
    pub diagnostics: Vec<AnalysisDiagnostics<f64>>,
    pub forecast_s: f64,
    pub analysis_s: f64,
}

/// One ETKF for `subdomain`, cycling through every observation time.
/// `epochs` lists the observed floe ids from each start index on (the first
/// starts at 0) and `props` holds the properties of the whole population.
pub fn run_filter(
    cfg: &RunConfig,
    ocean: &OceanSetup,
    props: &[FloeProps<f64>],
    epochs: &[(usize, Vec<usize>)],
    obs: &ObservationTable,
    seed: u64,
    subdomain: usize,
) -> Result<FilterTrack> {
    if epochs.first().map(|e| e.0) != Some(0) {
        return Err(Error::invalid("selection epochs", "the first epoch must start at index 0"));
    }
    let props_of = |ids: &[usize]| -> Result<Vec<FloeProps<f64>>> {
        ids.iter()
            .map(|&i| props.get(i).copied().ok_or_else(|| Error::invalid("observed floes", format!("no floe {i}"))))
            .collect()
    };
    let n_e = cfg.filter.ensemble_size;
    let cycles = cfg.n_cycles();
    let mut rngs: Vec<StreamRng> = (0..n_e)
        .map(|m| stream(seed, Stream::Ensemble, &[subdomain as u64, m as u64]))
        .collect();
    let mut ids = epochs[0].1.clone();
    let mut local = props_of(&ids)?;
    let first = obs.stacked(0, &ids)?;
    let members = rngs
        .iter_mut()
        .map(|rng| initial_member(cfg, ocean, &local, &first, rng))
        .collect::<Result<Vec<_>>>()?;
    let mut ens = Ensemble::from_columns(&members, 0.0)?;

    let ou = ocean.ou_model(cfg.time.dt)?;
    let coupled = CoupledModel {
        modes: &ocean.modes,
        ou: &ou,
        integrator: cfg.floes.integrator,
    };
    let observe = |n: usize| ObsModel::floe_positions(&StateLayout::new(n, ocean.modes.n_pairs()), cfg.filter.sigma_obs);
    let mut obs_model = observe(ids.len())?;
    let mut mean = Vec::with_capacity(cycles + 1);
    mean.push(mean_modes(&ens, &ocean.modes, ids.len()));
    let mut diagnostics = Vec::with_capacity(cycles);
    let (mut forecast_s, mut analysis_s) = (0.0, 0.0);
    let mut upcoming = epochs[1..].iter().peekable();
    for k in 1..=cycles {
        let t0 = Instant::now();
        let model = ForecastModel {
            coupled: CoupledModel { ..coupled },
            floes: &local,
        };
        ens = forecast(&ens, &model, cfg.time.dt_obs, cfg.substeps(), &mut rngs)?;
        ens.time = cfg.obs_time(k);
        let t1 = Instant::now();
        if !ids.is_empty() {
            let y = obs.stacked(k, &ids)?;
            let (a, d) = etkf_analysis_with_diagnostics(&ens, &y, &obs_model, cfg.filter.inflation)?;
            ens = a;
            diagnostics.push(d);
        }
        let t2 = Instant::now();
        forecast_s += (t1 - t0).as_secs_f64();
        analysis_s += (t2 - t1).as_secs_f64();
        mean.push(mean_modes(&ens, &ocean.modes, ids.len()));
        if let Some((_, next)) = upcoming.next_if(|e| e.0 == k) {
            let next_props = props_of(next)?;
            let y = obs.stacked(k, next)?;
            ens = reselect_members(cfg, ocean, &ens, (&ids, &local), (next, &next_props), &y, &mut rngs)?;
            ids = next.clone();
            local = next_props;
            obs_model = observe(ids.len())?;
        }
        log::debug!(
            "subdomain {subdomain} t = {:.3}: innovation rms {:.4e}, observed spread {:.4e}",
            ens.time,
            diagnostics.last().map_or(0.0, |d| d.innovation_rms),
            diagnostics.last().map_or(0.0, |d| d.obs_spread),
        );
    }
    Ok(FilterTrack {
        subdomain,
        floes: epochs.to_vec(),
        mean_modes: mean,
        diagnostics,
        forecast_s,
        analysis_s,
    })
}

/// Forecast-only control: the ensemble mean of unconstrained ocean members.
#[derive(Debug, Clone)]
pub struct ControlRun {
    pub mean_modes: Vec<ModeState<f64>>,
    pub nrmse_series: Vec<f64>,
    pub pcc_series: Vec<f64>,
}

impl ControlRun {
    pub fn final_nrmse(&self) -> f64 {
        *self.nrmse_series.last().expect("control has at least one time")
    }

    pub fn final_pcc(&self) -> f64 {
        *self.pcc_series.last().expect("control has at least one time")
    }
}

pub fn run_control(cfg: &RunConfig, truth: &TruthRun, seed: u64) -> Result<ControlRun> {
    let ocean = &truth.ocean;
    let n_e = cfg.filter.ensemble_size;
    let mut rngs: Vec<StreamRng> = (0..n_e).map(|m| stream(seed, Stream::Control, &[m as u64])).collect();
    let members = rngs
        .iter_mut()
        .map(|rng| initial_member(cfg, ocean, &[], &[], rng))
        .collect::<Result<Vec<_>>>()?;
    let mut ens = Ensemble::from_columns(&members, 0.0)?;
    let ou = ocean.ou_model(cfg.time.dt)?;
    let model = ForecastModel {
        coupled: CoupledModel {
            modes: &ocean.modes,
            ou: &ou,
            integrator: cfg.floes.integrator,
        },
        floes: &[],
    };
    let mut mean = vec![mean_modes(&ens, &ocean.modes, 0)];
    for k in 1..=cfg.n_cycles() {
        ens = forecast(&ens, &model, cfg.time.dt_obs, cfg.substeps(), &mut rngs)?;
        ens.time = cfg.obs_time(k);
        mean.push(mean_modes(&ens, &ocean.modes, 0));
    }
    let (mut nrmse_series, mut pcc_series) = (Vec::new(), Vec::new());
    for (k, m) in mean.iter().enumerate() {
        let est = eval_velocity_grid(&ocean.modes, m, cfg.layout.grid_n)?;
        let t = truth.field(k, cfg.layout.grid_n)?;
        nrmse_series.push(nrmse(&est, &t)?);
        pcc_series.push(pcc(&est, &t)?);
    }
    Ok(ControlRun {
        mean_modes: mean,
        nrmse_series,
        pcc_series,
    })
}

/// Skill and cost of one assimilation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillReport {
    pub config_hash: String,
    pub seed: u64,
    pub nx: usize,
    pub ny: usize,
    pub l_obs: usize,
    /// Floes actually observed over all subdomains.
    pub total_obs: usize,
    /// Final-time metrics of the fused field.
    pub nrmse: f64,
    pub pcc: f64,
    /// Wall clock of forecast, analysis and fusion.
    pub runtime_s: f64,
    /// Analysis phase on the critical path: the slowest subdomain.
    pub analysis_s: f64,
    /// Analysis time summed over subdomains.
    pub analysis_cpu_s: f64,
    pub forecast_cpu_s: f64,
    pub fusion_s: f64,
    pub control_nrmse: f64,
    pub control_pcc: f64,
    /// Subdomains that held fewer floes than requested.
    pub short_subdomains: Vec<usize>,
    pub times: Vec<f64>,
    pub nrmse_series: Vec<f64>,
    pub pcc_series: Vec<f64>,
    pub control_nrmse_series: Vec<f64>,
    pub control_pcc_series: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AssimilationRun {
    pub report: SkillReport,
    /// Selections made at `t = 0`.
    pub selections: Vec<Selection>,
    pub schedule: Vec<SelectionEpoch>,
    pub tracks: Vec<FilterTrack>,
    /// Fused estimate at each observation time.
    pub fused: Vec<FieldGrid<f64>>,
    pub weights: WeightGrid<f64>,
}

impl AssimilationRun {
    pub fn final_field(&self) -> &FieldGrid<f64> {
        self.fused.last().expect("at least the initial field")
    }
}

/// Fused ocean estimate from per-subdomain mode states. A single subdomain
/// is returned as is.
pub fn fused_field(ocean: &OceanSetup, states: &[&ModeState<f64>], weights: &WeightGrid<f64>, time: f64) -> Result<FieldGrid<f64>> {
    let local = states
        .iter()
        .map(|s| eval_velocity_grid(&ocean.modes, s, weights.n()))
        .collect::<Result<Vec<_>>>()?;
    let mut out = if local.len() == 1 {
        local.into_iter().next().expect("one field")
    } else {
        fuse_fields(&local, weights)?
    };
    out.set_time(time);
    Ok(out)
}

/// Runs every subdomain filter, fuses the local fields at each observation
/// time and scores them against the truth. `control` is computed when not
/// supplied.
pub fn run_assimilation(
    cfg: &RunConfig,
    truth: &TruthRun,
    observations: &[ObservationRecord],
    seed: u64,
    control: Option<&ControlRun>,
) -> Result<AssimilationRun> {
    cfg.validate()?;
    if truth.n_cycles() != cfg.n_cycles() {
        return Err(Error::config(
            "time",
            format!("truth covers {} cycles, config asks for {}", truth.n_cycles(), cfg.n_cycles()),
        ));
    }
    let layout = cfg.subdomains()?;
    let schedule = selection_schedule(cfg, truth)?;
    let selections = schedule[0].selections.clone();
    let table = ObservationTable::new(observations, cfg.time.dt_obs)?;
    let weights = gaussian_weights(&layout, cfg.layout.grid_n, cfg.layout.sigma_weight, cfg.layout.weight_metric)?;
    let ocean = &truth.ocean;

    let start = Instant::now();
    let props: Vec<FloeProps<f64>> = truth.initial_floes.iter().map(|f| f.props).collect();
    let tracks = (0..layout.count())
        .into_par_iter()
        .map(|s| {
            let epochs: Vec<(usize, Vec<usize>)> = schedule
                .iter()
                .map(|e| (e.start, e.selections[s].indices.clone()))
                .collect();
            run_filter(cfg, ocean, &props, &epochs, &table, seed, s)
        })
        .collect::<Result<Vec<_>>>()?;
    let fusion_start = Instant::now();
    let fused = (0..=cfg.n_cycles())
        .map(|k| {
            let states: Vec<&ModeState<f64>> = tracks.iter().map(|t| &t.mean_modes[k]).collect();
            fused_field(ocean, &states, &weights, cfg.obs_time(k))
        })
        .collect::<Result<Vec<_>>>()?;
    let fusion_s = fusion_start.elapsed().as_secs_f64();
    let runtime_s = start.elapsed().as_secs_f64();

    let computed;
    let control = match control {
        Some(c) => c,
        None => {
            computed = run_control(cfg, truth, seed)?;
            &computed
        }
    };
    let (mut nrmse_series, mut pcc_series) = (Vec::new(), Vec::new());
    for (k, est) in fused.iter().enumerate() {
        let t = truth.field(k, cfg.layout.grid_n)?;
        nrmse_series.push(nrmse(est, &t)?);
        pcc_series.push(pcc(est, &t)?);
    }
    let report = SkillReport {
        config_hash: cfg.hash(),
        seed,
        nx: layout.nx(),
        ny: layout.ny(),
        l_obs: cfg.layout.l_obs,
        total_obs: selections.iter().map(|s| s.indices.len()).sum(),
        nrmse: *nrmse_series.last().expect("non-empty"),
        pcc: *pcc_series.last().expect("non-empty"),
        runtime_s,
        analysis_s: tracks.iter().map(|t| t.analysis_s).fold(0.0, f64::max),
        analysis_cpu_s: tracks.iter().map(|t| t.analysis_s).sum(),
        forecast_cpu_s: tracks.iter().map(|t| t.forecast_s).sum(),
        fusion_s,
        control_nrmse: control.final_nrmse(),
        control_pcc: control.final_pcc(),
        short_subdomains: selections.iter().filter(|s| s.is_short()).map(|s| s.subdomain).collect(),
        times: truth.times.clone(),
        nrmse_series,
        pcc_series,
        control_nrmse_series: control.nrmse_series.clone(),
        control_pcc_series: control.pcc_series.clone(),
    };
    Ok(AssimilationRun {
        report,
        selections,
        schedule,
        tracks,
        fused,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::truth::generate_observations;
    use crate::torus::min_image;

    fn small() -> RunConfig {
        let mut c = RunConfig::desk_scale().with_layout(2, 2, 4);
        c.floes.count = 200;
        c.filter.ensemble_size = 6;
        c.time.t_final = 0.1;
        c.layout.grid_n = 16;
        c
    }

    #[test]
    fn initial_members_start_near_the_first_observation() {
        let cfg = small();
        let ocean = OceanSetup::new(&cfg).unwrap();
        let props = vec![cfg.material().props(0.01).unwrap(); 3];
        let first = [0.5, 1.0, 6.2, 0.01, 3.0, 3.0];
        let mut rng = stream(1, Stream::Ensemble, &[0, 0]);
        let x = initial_member(&cfg, &ocean, &props, &first, &mut rng).unwrap();
        let layout = StateLayout::new(3, ocean.modes.n_pairs());
        assert_eq!(x.len(), layout.dim());
        for l in 0..3 {
            let o = layout.floe_offset(l);
            for c in 0..2 {
                assert!((0.0..std::f64::consts::TAU).contains(&x[o + c]));
                assert!(min_image(x[o + c] - first[2 * l + c]).abs() < 6.0 * cfg.filter.sigma_obs);
            }
        }
    }

    #[test]
    fn mean_modes_are_conjugate_symmetric() {
        let cfg = small();
        let ocean = OceanSetup::new(&cfg).unwrap();
        let members: Vec<_> = (0..4)
            .map(|m| initial_member(&cfg, &ocean, &[], &[], &mut stream(2, Stream::Control, &[m])).unwrap())
            .collect();
        let ens = Ensemble::from_columns(&members, 0.3).unwrap();
        let state = mean_modes(&ens, &ocean.modes, 0);
        assert!(state.conjugate_residual(&ocean.modes) < 1e-15);
        assert_eq!(state.time, 0.3);
        let rep = ocean.modes.representatives()[0];
        let avg = members.iter().map(|v| v[0]).sum::<f64>() / 4.0;
        assert!((state.coeffs[rep].re - avg).abs() < 1e-15);
    }

    #[test]
    fn reselecting_the_same_floes_keeps_every_member() {
        let cfg = small();
        let ocean = OceanSetup::new(&cfg).unwrap();
        let props = vec![cfg.material().props(0.01).unwrap(); 2];
        let first = [1.0, 1.0, 2.0, 2.0];
        let mut rngs: Vec<StreamRng> = (0..3).map(|m| stream(4, Stream::Ensemble, &[0, m])).collect();
        let members: Vec<_> = rngs
            .iter_mut()
            .map(|r| initial_member(&cfg, &ocean, &props, &first, r).unwrap())
            .collect();
        let ens = Ensemble::from_columns(&members, 0.0).unwrap();
        let same = reselect_members(&cfg, &ocean, &ens, (&[7, 9], &props), (&[7, 9], &props), &first, &mut rngs).unwrap();
        assert_eq!(same, ens);

        // swapping order and adding a floe keeps the old rows and appends a fresh one
        let three = vec![props[0]; 3];
        let obs = [2.0, 2.0, 1.0, 1.0, 4.0, 5.0];
        let grown = reselect_members(&cfg, &ocean, &ens, (&[7, 9], &props), (&[9, 7, 3], &three), &obs, &mut rngs).unwrap();
        let old = StateLayout::new(2, ocean.modes.n_pairs());
        let new = StateLayout::new(3, ocean.modes.n_pairs());
        for m in 0..3 {
            for c in 0..4 {
                assert_eq!(grown.members[(new.floe_offset(0) + c, m)], ens.members[(old.floe_offset(1) + c, m)]);
                assert_eq!(grown.members[(new.floe_offset(1) + c, m)], ens.members[(old.floe_offset(0) + c, m)]);
            }
            let o = new.floe_offset(2);
            assert!(min_image(grown.members[(o, m)] - 4.0).abs() < 0.1);
            for j in 0..2 * ocean.modes.n_pairs() {
                assert_eq!(grown.members[(new.mode_offset() + j, m)], ens.members[(old.mode_offset() + j, m)]);
            }
        }
    }

    #[test]
    fn one_time_selection_is_a_single_epoch() {
        let cfg = small();
        assert_eq!(cfg.selection_times(), vec![0]);
        let truth = observed_truth(&cfg, 1).unwrap();
        assert_eq!(truth.tracked.len(), 16);
        let schedule = selection_schedule(&cfg, &truth).unwrap();
        assert_eq!(schedule.len(), 1);
        assert_eq!(scheduled_ids(&schedule), truth.tracked);
    }

    #[test]
    fn refreshed_selection_follows_the_drift() {
        let mut cfg = small();
        cfg.layout.reselect_every = 4;
        assert_eq!(cfg.selection_times(), vec![0, 4, 8]);
        let truth = observed_truth(&cfg, 2).unwrap();
        assert_eq!(truth.tracked.len(), cfg.floes.count);
        let schedule = selection_schedule(&cfg, &truth).unwrap();
        let layout = cfg.subdomains().unwrap();
        for epoch in &schedule {
            for s in &epoch.selections {
                for &id in &s.indices {
                    assert!(layout.contains(s.subdomain, truth.positions[epoch.start][id]));
                }
            }
        }
        let ids = scheduled_ids(&schedule);
        let obs = generate_observations(&truth, &ids, cfg.filter.sigma_obs, 2).unwrap();
        let run = run_assimilation(&cfg, &truth, &obs, 2, None).unwrap();
        assert!(run.fused.iter().all(|f| f.is_finite()));
        assert_eq!(run.tracks[0].floes.len(), 3);
        assert_eq!(run.tracks[0].diagnostics.len(), cfg.n_cycles());

        // a truth that tracks only some floes cannot be re-selected
        let partial = run_truth(&cfg, 2, Some(&ids)).unwrap();
        assert!(selection_schedule(&cfg, &partial).is_err());
    }

    #[test]
    fn filter_needs_an_epoch_at_the_start() {
        let cfg = small();
        let ocean = OceanSetup::new(&cfg).unwrap();
        let table = ObservationTable::default();
        assert!(run_filter(&cfg, &ocean, &[], &[(1, vec![])], &table, 1, 0).is_err());
        assert!(run_filter(&cfg, &ocean, &[], &[], &table, 1, 0).is_err());
    }
}
