use floe_da::decomposition::partition;
use floe_da::experiment::assimilate::{observed_ids, select_for};
use floe_da::experiment::sweep::{read_sweep, write_sweep, SWEEP_HEADER};
use floe_da::experiment::truth::truth_initial_state;
use floe_da::experiment::{generate_observations, run_assimilation, run_control, run_truth, sweep, OceanSetup, RunConfig};
use floe_da::ocean::eval_velocity_grid;
use floe_da::torus::min_image;

fn small() -> RunConfig {
    let mut c = RunConfig::desk_scale();
    c.floes.count = 400;
    c.filter.ensemble_size = 16;
    c.time.t_final = 0.1;
    c.layout.grid_n = 16;
    c.with_layout(2, 2, 5)
}

fn assimilated_field(cfg: &RunConfig, seed: u64) -> Vec<[f64; 2]> {
    let truth = run_truth(cfg, seed, None).unwrap();
    let ids = observed_ids(&select_for(cfg, &truth.initial_floes).unwrap());
    let obs = generate_observations(&truth, &ids, cfg.filter.sigma_obs, seed).unwrap();
    let run = run_assimilation(cfg, &truth, &obs, seed, None).unwrap();
    run.final_field().values().to_vec()
}

#[test]
fn end_to_end_runs_are_reproducible() {
    let cfg = small();
    let a = assimilated_field(&cfg, 11);
    let b = assimilated_field(&cfg, 11);
    assert_eq!(a, b);
    assert_ne!(a, assimilated_field(&cfg, 12));
}

#[test]
fn worker_count_does_not_change_results() {
    let cfg = small();
    let on = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| assimilated_field(&cfg, 5))
    };
    assert_eq!(on(1), on(3));
}

#[test]
fn observation_noise_has_configured_spread() {
    let mut cfg = RunConfig::desk_scale();
    cfg.floes.count = 200;
    cfg.time.t_final = 0.5;
    let truth = run_truth(&cfg, 3, None).unwrap();
    let ids: Vec<usize> = (0..200).collect();
    let obs = generate_observations(&truth, &ids, cfg.filter.sigma_obs, 3).unwrap();
    assert_eq!(obs.len(), 200 * 51);
    let mut errors = Vec::new();
    for r in &obs {
        let k = (r.time / cfg.time.dt_obs).round() as usize;
        let p = truth.positions[k][r.floe_id];
        errors.push(min_image(r.x - p[0]));
        errors.push(min_image(r.y - p[1]));
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    // standard error of a Gaussian sample standard deviation
    let se = sd / (2.0 * (n - 1.0)).sqrt();
    assert!(n >= 1e4);
    assert!((sd - 0.01).abs() < 3.0 * se, "sd {sd}, se {se}");
    assert!(mean.abs() < 3.0 * sd / n.sqrt());
}

#[test]
fn every_observation_time_carries_the_full_budget() {
    let cfg = small();
    let truth = run_truth(&cfg, 2, None).unwrap();
    let ids = observed_ids(&select_for(&cfg, &truth.initial_floes).unwrap());
    let obs = generate_observations(&truth, &ids, 0.01, 2).unwrap();
    for k in 0..=cfg.n_cycles() {
        let t = cfg.obs_time(k);
        let count = obs.iter().filter(|r| (r.time - t).abs() < 1e-12).count();
        assert_eq!(count, 4 * 5);
    }
}

#[test]
fn selections_are_disjoint_and_local() {
    let mut cfg = RunConfig::default().with_layout(4, 4, 20);
    cfg.ocean.k_max = 3;
    cfg.layout.grid_n = 32;
    let ocean = OceanSetup::new(&cfg).unwrap();
    let (floes, _) = truth_initial_state(&cfg, &ocean, 1).unwrap();
    assert_eq!(floes.len(), 40_000);
    let layout = partition(4, 4).unwrap();
    let selections = select_for(&cfg, &floes).unwrap();
    let mut seen = std::collections::HashSet::new();
    for s in &selections {
        assert_eq!(s.indices.len(), 20);
        let b = layout.bounds::<f64>(s.subdomain);
        for &i in &s.indices {
            let p = floes[i].pos;
            assert!(p[0] >= b.min[0] && p[0] < b.max[0] && p[1] >= b.min[1] && p[1] < b.max[1]);
            assert!(seen.insert(i), "floe {i} selected twice");
        }
    }
}

#[test]
fn initial_ocean_has_the_target_speed() {
    let mut cfg = RunConfig::desk_scale();
    cfg.time.t_final = 0.01;
    let truth = run_truth(&cfg, 4, Some(&[])).unwrap();
    let speed = eval_velocity_grid(&truth.ocean.modes, &truth.mode_trajectory[0], cfg.layout.grid_n)
        .unwrap()
        .max_speed();
    assert!((speed - 2.0).abs() < 0.5, "{speed}");
}

#[test]
fn perfect_observations_beat_the_control() {
    let mut cfg = RunConfig::desk_scale().with_layout(1, 1, 60);
    cfg.filter.ensemble_size = 100;
    cfg.time.t_final = 0.5;
    let truth = run_truth(&cfg, 7, None).unwrap();
    let ids = observed_ids(&select_for(&cfg, &truth.initial_floes).unwrap());
    let obs = generate_observations(&truth, &ids, 0.0, 7).unwrap();
    let control = run_control(&cfg, &truth, 7).unwrap();
    let run = run_assimilation(&cfg, &truth, &obs, 7, Some(&control)).unwrap();
    assert!(run.report.nrmse < control.final_nrmse(), "{} vs {}", run.report.nrmse, control.final_nrmse());
    assert!(run.report.pcc > control.final_pcc());
}

#[test]
fn sweep_table_has_one_mean_row_per_configuration() {
    let mut cfg = small();
    cfg.floes.count = 300;
    cfg.time.t_final = 0.05;
    cfg.filter.ensemble_size = 8;
    let cases = RunConfig::desk_scale().sweep.cases;
    let cases: Vec<_> = cases
        .into_iter()
        .map(|mut c| {
            c.l_obs = c.l_obs.iter().map(|&l| (l / 10).max(1)).collect();
            c
        })
        .collect();
    let rows = sweep(&cfg, &cases, &[1, 2]).unwrap();
    assert_eq!(rows.len(), 12 * 3);
    let means: Vec<_> = rows.iter().filter(|r| r.is_mean()).collect();
    assert_eq!(means.len(), 12);
    for chunk in rows.chunks(3) {
        assert_eq!(chunk[0].seed, "1");
        assert_eq!(chunk[1].seed, "2");
        assert!(chunk[2].is_mean());
        assert!((chunk[2].nrmse - 0.5 * (chunk[0].nrmse + chunk[1].nrmse)).abs() < 1e-12);
    }
    let again = sweep(&cfg, &cases, &[1, 2]).unwrap();
    let skill = |r: &floe_da::experiment::SweepRow| (r.grid_size.clone(), r.l_obs, r.seed.clone(), r.nrmse, r.pcc);
    assert_eq!(rows.iter().map(skill).collect::<Vec<_>>(), again.iter().map(skill).collect::<Vec<_>>());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    write_sweep(&path, &rows).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), SWEEP_HEADER.join(","));
    assert_eq!(read_sweep(&path).unwrap(), rows);
}
