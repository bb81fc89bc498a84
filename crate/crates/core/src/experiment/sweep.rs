//! Grid-size × observation-budget sweeps over several seeds.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::experiment::assimilate::{
    observed_ids, run_assimilation, run_control, scheduled_ids, select_for, selection_schedule, SkillReport,
};
use crate::experiment::config::{RunConfig, SweepCase};
use crate::experiment::truth::{generate_observations, run_truth, truth_initial_state, OceanSetup};
use crate::io::{read_csv, write_csv};

/// Column names of the sweep table, in order.
pub const SWEEP_HEADER: [&str; 11] = [
    "grid_size",
    "l_obs",
    "total_obs",
    "seed",
    "nrmse",
    "pcc",
    "runtime_s",
    "analysis_s",
    "analysis_cpu_s",
    "control_nrmse",
    "control_pcc",
];

/// Value of the `seed` column on seed-averaged rows.
pub const MEAN_SEED: &str = "mean";

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// `"{nx}x{ny}"`
    pub grid_size: String,
    pub l_obs: usize,
    pub total_obs: usize,
    /// Run seed, or `"mean"` on aggregated rows.
    pub seed: String,
    pub nrmse: f64,
    pub pcc: f64,
    pub runtime_s: f64,
    pub analysis_s: f64,
    pub analysis_cpu_s: f64,
    pub control_nrmse: f64,
    pub control_pcc: f64,
}

impl SweepRow {
    pub fn from_report(r: &SkillReport) -> Self {
        Self {
            grid_size: format!("{}x{}", r.nx, r.ny),
            l_obs: r.l_obs,
            total_obs: r.total_obs,
            seed: r.seed.to_string(),
            nrmse: r.nrmse,
            pcc: r.pcc,
            runtime_s: r.runtime_s,
            analysis_s: r.analysis_s,
            analysis_cpu_s: r.analysis_cpu_s,
            control_nrmse: r.control_nrmse,
            control_pcc: r.control_pcc,
        }
    }

    pub fn is_mean(&self) -> bool {
        self.seed == MEAN_SEED
    }
}

/// Seed average of rows sharing one configuration.
pub fn mean_row(rows: &[SweepRow]) -> Option<SweepRow> {
    let first = rows.first()?;
    let n = rows.len() as f64;
    let avg = |f: fn(&SweepRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Some(SweepRow {
        grid_size: first.grid_size.clone(),
        l_obs: first.l_obs,
        total_obs: (rows.iter().map(|r| r.total_obs as f64).sum::<f64>() / n).round() as usize,
        seed: MEAN_SEED.to_string(),
        nrmse: avg(|r| r.nrmse),
        pcc: avg(|r| r.pcc),
        runtime_s: avg(|r| r.runtime_s),
        analysis_s: avg(|r| r.analysis_s),
        analysis_cpu_s: avg(|r| r.analysis_cpu_s),
        control_nrmse: avg(|r| r.control_nrmse),
        control_pcc: avg(|r| r.control_pcc),
    })
}

/// Runs every `(case, budget, seed)` combination of `template`.
///
/// Per seed the truth and the control are computed once and shared by all
/// configurations. Jobs run one after another so that their wall-clock
/// figures are not inflated by sharing cores; each job still parallelises
/// internally. Rows come out grouped by configuration, per-seed rows first,
/// then the seed mean.
pub fn sweep(template: &RunConfig, cases: &[SweepCase], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    template.validate()?;
    let configs: Vec<RunConfig> = cases
        .iter()
        .flat_map(|c| c.l_obs.iter().map(move |&l| template.with_layout(c.nx, c.ny, l)))
        .collect();
    for c in &configs {
        c.validate()?;
    }
    let mut per_config: Vec<Vec<SweepRow>> = vec![Vec::new(); configs.len()];
    if !configs.is_empty() {
        let ocean = OceanSetup::new(template)?;
        for &seed in seeds {
            let truth = if template.layout.reselect_every > 0 {
                run_truth(template, seed, None)?
            } else {
                let (population, _) = truth_initial_state(template, &ocean, seed)?;
                let mut tracked: Vec<usize> = Vec::new();
                for c in &configs {
                    tracked.extend(observed_ids(&select_for(c, &population)?));
                }
                tracked.sort_unstable();
                tracked.dedup();
                run_truth(template, seed, Some(&tracked))?
            };
            let control = run_control(template, &truth, seed)?;
            for (i, c) in configs.iter().enumerate() {
                let ids = scheduled_ids(&selection_schedule(c, &truth)?);
                let obs = generate_observations(&truth, &ids, c.filter.sigma_obs, seed)?;
                let run = run_assimilation(c, &truth, &obs, seed, Some(&control))?;
                log::info!(
                    "{}x{} l_obs={} seed={seed}: nrmse {:.3} pcc {:.3} analysis {:.2}s",
                    c.layout.nx,
                    c.layout.ny,
                    c.layout.l_obs,
                    run.report.nrmse,
                    run.report.pcc,
                    run.report.analysis_s
                );
                per_config[i].push(SweepRow::from_report(&run.report));
            }
        }
    }
    let mut rows = Vec::new();
    for group in per_config {
        let mean = mean_row(&group);
        rows.extend(group);
        rows.extend(mean);
    }
    Ok(rows)
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write_csv(path, rows, &SWEEP_HEADER)
}

pub fn read_sweep(path: &Path) -> Result<Vec<SweepRow>> {
    read_csv(path, "sweep table")
}
