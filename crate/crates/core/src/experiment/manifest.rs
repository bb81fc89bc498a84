//! Run manifest: everything needed to audit or reproduce a run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::assimilate::SelectionEpoch;
use crate::experiment::config::RunConfig;
use crate::experiment::truth::TruthRun;
use crate::floe::Floe;
use crate::io::{write_csv, write_toml};
use crate::ocean::{ModeSet, ModeState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub amplitude_scale: f64,
    pub n_modes: usize,
    pub n_cycles: usize,
    /// Observed floes per selection epoch.
    pub schedule: Vec<SelectionEpoch>,
    pub outputs: Vec<String>,
    pub config: RunConfig,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        write_toml(path, self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloeRow {
    pub floe_id: usize,
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub v: f64,
    pub radius: f64,
    pub mass: f64,
    pub drag: f64,
}

impl FloeRow {
    pub fn new(floe_id: usize, f: &Floe<f64>) -> Self {
        Self {
            floe_id,
            x: f.pos[0],
            y: f.pos[1],
            u: f.vel[0],
            v: f.vel[1],
            radius: f.props.radius,
            mass: f.props.mass,
            drag: f.props.drag,
        }
    }
}

pub const FLOE_HEADER: [&str; 8] = ["floe_id", "x", "y", "u", "v", "radius", "mass", "drag"];

pub fn write_floes(path: &Path, rows: &[FloeRow]) -> Result<()> {
    write_csv(path, rows, &FLOE_HEADER)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectedRow {
    /// Observation index from which the floe is observed.
    pub start: usize,
    pub subdomain: usize,
    pub rank: usize,
    pub floe_id: usize,
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub mass: f64,
    pub drag: f64,
}

pub const SELECTED_HEADER: [&str; 9] = ["start", "subdomain", "rank", "floe_id", "x", "y", "radius", "mass", "drag"];

/// Selected observation floes of every epoch with their true position at
/// the selection time and their static properties.
pub fn write_selected(path: &Path, schedule: &[SelectionEpoch], truth: &TruthRun) -> Result<()> {
    let slots = truth.slot_of();
    let mut rows = Vec::new();
    for epoch in schedule {
        for s in &epoch.selections {
            for (rank, &id) in s.indices.iter().enumerate() {
                let slot = *slots
                    .get(&id)
                    .ok_or_else(|| Error::invalid("selected floes", format!("floe {id} was not tracked by the truth run")))?;
                let pos = truth.positions[epoch.start][slot];
                let p = truth.initial_floes[id].props;
                rows.push(SelectedRow {
                    start: epoch.start,
                    subdomain: s.subdomain,
                    rank,
                    floe_id: id,
                    x: pos[0],
                    y: pos[1],
                    radius: p.radius,
                    mass: p.mass,
                    drag: p.drag,
                });
            }
        }
    }
    write_csv(path, &rows, &SELECTED_HEADER)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeRow {
    pub time: f64,
    pub kx: i32,
    pub ky: i32,
    pub re: f64,
    pub im: f64,
}

pub const MODE_HEADER: [&str; 5] = ["time", "kx", "ky", "re", "im"];

/// Coefficients of every mode at each supplied time.
pub fn write_modes(path: &Path, set: &ModeSet<f64>, states: &[&ModeState<f64>]) -> Result<()> {
    let rows: Vec<ModeRow> = states
        .iter()
        .flat_map(|s| {
            set.wavenumbers().iter().zip(&s.coeffs).map(move |(k, c)| ModeRow {
                time: s.time,
                kx: k[0],
                ky: k[1],
                re: c.re,
                im: c.im,
            })
        })
        .collect();
    write_csv(path, &rows, &MODE_HEADER)
}
