//! Run configuration and its TOML schema.
//!
//! Every table rejects unknown keys. Missing keys take the defaults below,
//! which are the full-scale values; [`RunConfig::desk_scale`] gives the
//! small scenario used by the acceptance suite.

use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decomposition::{DistanceMetric, SubdomainLayout};
use crate::error::{Error, Result};
use crate::floe::{Integrator, Material, PowerLaw};
use crate::ocean::{ModeParams, ModeSet, Truncation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OceanConfig {
    pub k_max: u32,
    pub truncation: Truncation,
    /// Damping `d` of every mode.
    pub damping: f64,
    /// Phase speed `φ` of every mode.
    pub phase_speed: f64,
    /// Real and imaginary part of the forcing `f` of every mode.
    pub forcing: [f64; 2],
    /// Noise strength `σ` of every mode, before amplitude scaling.
    pub noise: f64,
    /// Target for the typical maximum grid speed of the stationary field.
    pub speed_target: f64,
    /// Explicit amplitude factor; calibrated from `speed_target` when unset.
    pub amplitude_scale: Option<f64>,
    /// Stationary draws used by the amplitude calibration.
    pub calibration_draws: usize,
}

impl Default for OceanConfig {
    fn default() -> Self {
        Self {
            k_max: 9,
            truncation: Truncation::MaxNorm,
            damping: 0.5,
            phase_speed: 0.0,
            forcing: [0.0, 0.0],
            noise: 0.05,
            speed_target: 2.0,
            amplitude_scale: None,
            calibration_draws: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FloeConfig {
    pub count: usize,
    /// Exponent `a` of `N(r) ∝ r^{-a}`.
    pub alpha_exp: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub ice_density: f64,
    pub thickness: f64,
    pub ocean_density: f64,
    /// Drag scale `c_d` in `α = c_d ρ_o r²`. Defaults come from the
    /// `calibrate` command for each preset.
    pub drag_scale: f64,
    pub integrator: Integrator,
}

impl Default for FloeConfig {
    fn default() -> Self {
        Self {
            count: 40_000,
            alpha_exp: 1.3,
            r_min: 0.004,
            r_max: 0.016,
            ice_density: 1.0,
            thickness: 1.0,
            ocean_density: 1.0,
            drag_scale: 2140.0,
            integrator: Integrator::SemiImplicitEuler,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub dt_obs: f64,
    pub t_final: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            dt_obs: 1e-2,
            t_final: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub ensemble_size: usize,
    /// Observation error std of each position component.
    pub sigma_obs: f64,
    /// Std of the Gaussian added to the initial member floe velocities.
    pub velocity_spread: f64,
    /// Multiplicative inflation of the forecast covariance.
    pub inflation: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            ensemble_size: 1000,
            sigma_obs: 0.01,
            velocity_spread: 0.05,
            inflation: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    pub nx: usize,
    pub ny: usize,
    /// Observed floes per subdomain.
    pub l_obs: usize,
    /// Decay scale `σ°` of the fusion weights.
    pub sigma_weight: f64,
    pub weight_metric: DistanceMetric,
    /// Nodes per axis of the evaluation grid.
    pub grid_n: usize,
    /// Observation intervals between re-selections of the observed floes;
    /// 0 selects once at `t = 0`.
    pub reselect_every: usize,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            nx: 1,
            ny: 1,
            l_obs: 200,
            sigma_weight: 2.6,
            weight_metric: DistanceMetric::Periodic,
            grid_n: 64,
            reselect_every: 0,
        }
    }
}

/// Grid sizes and per-subdomain budgets swept by the `sweep` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub cases: Vec<SweepCase>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCase {
    pub nx: usize,
    pub ny: usize,
    pub l_obs: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            cases: vec![
                SweepCase { nx: 1, ny: 1, l_obs: vec![20, 50, 100, 200] },
                SweepCase { nx: 2, ny: 2, l_obs: vec![10, 20, 50, 100] },
                SweepCase { nx: 4, ny: 4, l_obs: vec![5, 10, 20, 50] },
            ],
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Write field snapshots every this many observation intervals; 0 keeps
    /// only the initial and final fields.
    pub field_every: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub ocean: OceanConfig,
    pub floes: FloeConfig,
    pub time: TimeConfig,
    pub filter: FilterConfig,
    pub layout: LayoutConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

fn steps_ratio(num: f64, den: f64) -> Option<usize> {
    let r = num / den;
    let n = r.round();
    (n >= 1.0 && (r - n).abs() <= 1e-9 * n.max(1.0)).then_some(n as usize)
}

impl RunConfig {
    /// Small scenario that runs the whole sweep in minutes on one core.
    pub fn desk_scale() -> Self {
        let mut c = Self::default();
        c.floes.count = 2000;
        c.ocean.k_max = 3;
        c.filter.ensemble_size = 100;
        c.time.t_final = 2.0;
        c.layout.grid_n = 32;
        c.floes.drag_scale = 1800.0;
        c
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| format!("bytes {}..{}", s.start, s.end)).unwrap_or_default();
            Error::config(field, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config { field, reason } => Error::config(format!("{}: {field}", path.display()), reason),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable as TOML")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be positive, got {v}")))
            }
        };
        let o = &self.ocean;
        if o.k_max == 0 {
            return Err(Error::config("ocean.k_max", "must be at least 1"));
        }
        positive("ocean.damping", o.damping)?;
        if !(o.noise >= 0.0) || !o.noise.is_finite() {
            return Err(Error::config("ocean.noise", format!("must be non-negative, got {}", o.noise)));
        }
        if !o.phase_speed.is_finite() || !o.forcing.iter().all(|f| f.is_finite()) {
            return Err(Error::config("ocean.forcing", "must be finite"));
        }
        if let Some(s) = o.amplitude_scale {
            positive("ocean.amplitude_scale", s)?;
        } else {
            positive("ocean.speed_target", o.speed_target)?;
            if o.calibration_draws == 0 {
                return Err(Error::config("ocean.calibration_draws", "must be at least 1"));
            }
        }

        let f = &self.floes;
        if f.count == 0 {
            return Err(Error::config("floes.count", "must be at least 1"));
        }
        positive("floes.r_min", f.r_min)?;
        if !(f.r_max >= f.r_min) || !f.r_max.is_finite() {
            return Err(Error::config("floes.r_max", format!("must be >= r_min, got {}", f.r_max)));
        }
        if (f.alpha_exp - 1.0).abs() < 1e-12 || !f.alpha_exp.is_finite() {
            return Err(Error::config("floes.alpha_exp", "must be finite and differ from 1"));
        }
        positive("floes.ice_density", f.ice_density)?;
        positive("floes.thickness", f.thickness)?;
        positive("floes.ocean_density", f.ocean_density)?;
        if !(f.drag_scale >= 0.0) || !f.drag_scale.is_finite() {
            return Err(Error::config("floes.drag_scale", "must be non-negative"));
        }

        let t = &self.time;
        positive("time.dt", t.dt)?;
        positive("time.dt_obs", t.dt_obs)?;
        positive("time.t_final", t.t_final)?;
        if steps_ratio(t.dt_obs, t.dt).is_none() {
            return Err(Error::config("time.dt_obs", format!("{} is not an integer multiple of dt = {}", t.dt_obs, t.dt)));
        }
        if steps_ratio(t.t_final, t.dt_obs).is_none() {
            return Err(Error::config(
                "time.t_final",
                format!("{} is not an integer multiple of dt_obs = {}", t.t_final, t.dt_obs),
            ));
        }

        let fl = &self.filter;
        if fl.ensemble_size < 2 {
            return Err(Error::config("filter.ensemble_size", "need at least 2 members"));
        }
        positive("filter.sigma_obs", fl.sigma_obs)?;
        if !(fl.velocity_spread >= 0.0) || !fl.velocity_spread.is_finite() {
            return Err(Error::config("filter.velocity_spread", "must be non-negative"));
        }
        if !(fl.inflation >= 1.0) || !fl.inflation.is_finite() {
            return Err(Error::config("filter.inflation", format!("must be >= 1, got {}", fl.inflation)));
        }

        let l = &self.layout;
        if l.nx == 0 || l.ny == 0 {
            return Err(Error::config("layout.nx/ny", "subdomain counts must be at least 1"));
        }
        if l.l_obs == 0 {
            return Err(Error::config("layout.l_obs", "must be at least 1"));
        }
        positive("layout.sigma_weight", l.sigma_weight)?;
        if l.grid_n < 2 {
            return Err(Error::config("layout.grid_n", "need at least 2 nodes per axis"));
        }
        for (i, case) in self.sweep.cases.iter().enumerate() {
            if case.nx == 0 || case.ny == 0 || case.l_obs.contains(&0) {
                return Err(Error::config(format!("sweep.cases[{i}]"), "counts must be at least 1"));
            }
        }
        Ok(())
    }

    /// Model steps per observation interval.
    pub fn substeps(&self) -> usize {
        steps_ratio(self.time.dt_obs, self.time.dt).unwrap_or(1)
    }

    /// Number of observation intervals in the run.
    pub fn n_cycles(&self) -> usize {
        steps_ratio(self.time.t_final, self.time.dt_obs).unwrap_or(1)
    }

    /// Time of observation index `k`.
    pub fn obs_time(&self, k: usize) -> f64 {
        k as f64 * self.time.dt_obs
    }

    pub fn mode_set(&self) -> Result<ModeSet<f64>> {
        ModeSet::build(self.ocean.k_max, self.ocean.truncation)
    }

    /// Unscaled per-mode parameters.
    pub fn base_mode_params(&self, set: &ModeSet<f64>) -> Result<Vec<ModeParams<f64>>> {
        let o = &self.ocean;
        let p = ModeParams::new(o.damping, o.phase_speed, Complex::new(o.forcing[0], o.forcing[1]), o.noise)?;
        Ok(vec![p; set.len()])
    }

    pub fn power_law(&self) -> Result<PowerLaw<f64>> {
        PowerLaw::new(self.floes.alpha_exp, self.floes.r_min, self.floes.r_max)
    }

    pub fn material(&self) -> Material<f64> {
        Material {
            ice_density: self.floes.ice_density,
            thickness: self.floes.thickness,
            ocean_density: self.floes.ocean_density,
            drag_scale: self.floes.drag_scale,
        }
    }

    pub fn subdomains(&self) -> Result<SubdomainLayout> {
        SubdomainLayout::new(self.layout.nx, self.layout.ny)
    }

    pub fn radius_range(&self) -> (f64, f64) {
        (self.floes.r_min, self.floes.r_max)
    }

    /// Observation indices at which the observed floes are chosen.
    pub fn selection_times(&self) -> Vec<usize> {
        match self.layout.reselect_every {
            0 => vec![0],
            every => (0..self.n_cycles()).step_by(every).collect(),
        }
    }

    /// Copy with a different layout and per-subdomain budget.
    pub fn with_layout(&self, nx: usize, ny: usize, l_obs: usize) -> Self {
        let mut c = self.clone();
        c.layout.nx = nx;
        c.layout.ny = ny;
        c.layout.l_obs = l_obs;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_full_scale() {
        let c = RunConfig::default();
        assert_eq!(c.time.dt, 1e-3);
        assert_eq!(c.time.dt_obs, 1e-2);
        assert_eq!(c.time.t_final, 20.0);
        assert_eq!(c.ocean.damping, 0.5);
        assert_eq!(c.ocean.noise, 0.05);
        assert_eq!(c.ocean.k_max, 9);
        assert_eq!(c.floes.alpha_exp, 1.3);
        assert_eq!(c.floes.count, 40_000);
        assert_eq!(c.filter.ensemble_size, 1000);
        assert_eq!(c.filter.sigma_obs, 0.01);
        assert_eq!(c.layout.sigma_weight, 2.6);
        c.validate().unwrap();
        assert_eq!(c.substeps(), 10);
        assert_eq!(c.n_cycles(), 2000);
    }

    #[test]
    fn desk_scale_preset() {
        let c = RunConfig::desk_scale();
        c.validate().unwrap();
        assert_eq!((c.floes.count, c.ocean.k_max, c.filter.ensemble_size), (2000, 3, 100));
        assert_eq!((c.n_cycles(), c.layout.grid_n), (200, 32));
        assert_eq!(c.sweep.seeds.len(), 5);
    }

    #[test]
    fn toml_round_trip_and_hash() {
        let c = RunConfig::desk_scale();
        let back = RunConfig::from_toml_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_ne!(c.with_layout(2, 2, 50).hash(), c.hash());
        assert_eq!(c.hash().len(), 16);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let c = RunConfig::from_toml_str("seed = 9\n[layout]\nnx = 2\nny = 2\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.layout.nx, 2);
        assert_eq!(c.layout.l_obs, 200);
        assert_eq!(c.time.dt, 1e-3);
    }

    #[test]
    fn rejects_bad_files() {
        for text in [
            "bogus = 1",
            "[ocean]\nk_max = 3\nwhat = 2",
            "[time]\ndt_obs = 0.0105",
            "[time]\nt_final = 0.015",
            "[filter]\nensemble_size = 1",
            "[filter]\ninflation = 0.9",
            "[ocean]\nk_max = 0",
            "[ocean]\ndamping = -1.0",
            "[layout]\nnx = 0",
            "[floes]\nalpha_exp = 1.0",
        ] {
            let err = RunConfig::from_toml_str(text).unwrap_err();
            assert!(matches!(err, Error::Config { .. }), "{text}: {err}");
            assert_eq!(err.exit_code(), 2);
        }
    }
}
