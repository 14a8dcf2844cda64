use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use log::{info, warn};
use nalgebra::DMatrix;

use crate::control::{
    run_closed_loop, KernelFilter, LoopStreams, ParticleFilter, RunRecord, SgdController,
    StateFilter, Truth,
};
use crate::error::{Error, Result};
use crate::filter::KernelDensity;
use crate::models::{DubinsModel, HeatModel, LqModel};
use crate::oracle::{
    dp_baseline, dp_projected_nodes, lq_exact_control, riccati_solve, ControlGrid, LqSpec,
    RiccatiSolution,
};
use crate::sde::{streams, ControlSchedule, ControlledModel, RngStream, TimeGrid};

use super::config::{ExperimentConfig, FilterKind, ModelConfig, Scenario};
use super::metrics::{
    axis_rmse, control_l2_distance, control_l2_norm, estimation_rmse, heat_oracle_controls,
    lq_oracle_controls, terminal_distance, tracking_rmse, tracking_rmse_over, Summary,
};
use super::output::{num, opt, run_table, Manifest, OutputDir};

/// A model instantiated from its configuration, with any oracle it needs.
pub enum BuiltModel {
    Lq(LqModel),
    Heat {
        model: Box<HeatModel>,
        riccati: RiccatiSolution,
        c: f64,
        d: f64,
    },
    Dubins(DubinsModel),
}

impl BuiltModel {
    pub fn build(cfg: &ModelConfig, grid: &TimeGrid) -> Result<Self> {
        Ok(match *cfg {
            ModelConfig::Lq {
                dim,
                sigma,
                obs_std,
            } => {
                let spec = LqSpec::benchmark(dim, sigma, grid.t_end())?;
                BuiltModel::Lq(LqModel::new(spec, obs_std)?.with_grid(*grid))
            }
            ModelConfig::Heat {
                a,
                b,
                c,
                d,
                nodes,
                sigma,
                obs_std,
            } => {
                let model = HeatModel::new(a, b, c, d, nodes, sigma, obs_std)?;
                let id = DMatrix::identity(nodes, nodes);
                let riccati = riccati_solve(&model.system.a, &model.system.b, &id, &id, &id, grid)?;
                BuiltModel::Heat {
                    model: Box::new(model),
                    riccati,
                    c,
                    d,
                }
            }
            ModelConfig::Dubins {
                sigma,
                obs_std,
                track_weight,
                control_weight,
                terminal_weight,
                speed,
            } => {
                let mut m =
                    DubinsModel::new(sigma, obs_std, track_weight, control_weight, terminal_weight)?;
                if let Some(v) = speed {
                    m.speed = v;
                }
                m.horizon = grid.t_end();
                BuiltModel::Dubins(m)
            }
        })
    }

    pub fn as_model(&self) -> &dyn ControlledModel {
        match self {
            BuiltModel::Lq(m) => m,
            BuiltModel::Heat { model, .. } => model.as_ref(),
            BuiltModel::Dubins(m) => m,
        }
    }

    /// Reference optimal controls along the recorded truth, where an oracle
    /// exists.
    pub fn oracle_controls(&self, rec: &RunRecord) -> Result<Option<Vec<f64>>> {
        match self {
            BuiltModel::Lq(m) => lq_oracle_controls(m.spec(), rec).map(Some),
            BuiltModel::Heat {
                model,
                riccati,
                c,
                d,
            } => {
                let id = DMatrix::identity(rec.m, rec.m);
                heat_oracle_controls(&model.system, riccati, &id, *c, *d, rec).map(Some)
            }
            BuiltModel::Dubins(_) => Ok(None),
        }
    }

    fn is_dubins(&self) -> bool {
        matches!(self, BuiltModel::Dubins(_))
    }
}

/// Error measures of one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedMetrics {
    /// Time-grid L2 distance between applied and oracle controls.
    pub control_error: Option<f64>,
    /// Time-grid L2 norm of the oracle controls, i.e. the error of `u ≡ 0`.
    pub oracle_norm: Option<f64>,
    pub tracking_rmse: Option<f64>,
    pub terminal_distance: Option<f64>,
    /// RMS filter error of the full state over all nodes.
    pub estimation_rmse: f64,
    pub total_cost: f64,
}

impl SeedMetrics {
    pub fn relative_control_error(&self) -> Option<f64> {
        Some(self.control_error? / self.oracle_norm?)
    }
}

/// Metrics of `rec`, and the oracle controls they were measured against.
pub fn compute_errors(
    model: &BuiltModel,
    rec: &RunRecord,
) -> Result<(SeedMetrics, Option<Vec<f64>>)> {
    let dt = rec.grid.dt();
    let oracle = model.oracle_controls(rec)?;
    let (control_error, oracle_norm) = match &oracle {
        Some(o) => (
            Some(control_l2_distance(dt, &rec.controls, o)?),
            Some(control_l2_norm(dt, o)),
        ),
        None => (None, None),
    };
    let dubins = model.is_dubins();
    let metrics = SeedMetrics {
        control_error,
        oracle_norm,
        tracking_rmse: dubins.then(|| tracking_rmse(rec)),
        terminal_distance: dubins.then(|| terminal_distance(rec)),
        estimation_rmse: estimation_rmse(rec, rec.d, 0..rec.grid.len()),
        total_cost: rec.total_cost(),
    };
    Ok((metrics, oracle))
}

fn build_filter(
    cfg: &ExperimentConfig,
    kind: FilterKind,
    seed: u64,
) -> Result<Option<Box<dyn StateFilter>>> {
    let prior = KernelDensity::gaussian(&cfg.initial_state(), &cfg.prior_std())?;
    Ok(match kind {
        FilterKind::None => None,
        FilterKind::Kernel => {
            let mut rng = RngStream::new(seed, streams::FILTER_INIT);
            Some(Box::new(KernelFilter::new(
                prior,
                cfg.filter.kernel.clone(),
                &mut rng,
            )?))
        }
        FilterKind::Particle => {
            let mut rng = RngStream::new(seed, streams::PARTICLE);
            let pc = cfg.filter.particle;
            Some(Box::new(ParticleFilter::new(
                &prior,
                pc.particles,
                pc.ess_fraction,
                &mut rng,
            )?))
        }
    })
}

/// One closed-loop BSDE-SGD run of `cfg` with the given filter and seed.
pub fn run_seed(
    cfg: &ExperimentConfig,
    model: &BuiltModel,
    grid: &TimeGrid,
    kind: FilterKind,
    seed: u64,
) -> Result<RunRecord> {
    let mut streams = LoopStreams::new(seed);
    let mut truth = Truth::new(cfg.initial_state()).with_events(
        cfg.disturbances.jumps.clone(),
        cfg.disturbances.noise_windows.clone(),
    );
    let mut filter = build_filter(cfg, kind, seed)?;
    let mut ctrl = SgdController::new(cfg.controller.clone())?;
    if let Some(u) = &cfg.initial_control {
        ctrl = ctrl.with_initial_schedule(ControlSchedule::constant(*grid, 0, u)?);
    }
    run_closed_loop(
        model.as_model(),
        &mut truth,
        filter.as_mut().map(|f| f.as_mut() as &mut dyn StateFilter),
        &mut ctrl,
        grid,
        1,
        &mut streams,
    )
}

/// Result of one repeat: metrics on success, the error message otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedOutcome<T> {
    pub seed: u64,
    pub result: std::result::Result<T, String>,
}

/// Tally of succeeded and failed repeats.
pub trait Outcomes {
    fn seeds(&self) -> Vec<u64>;
    fn failed_seeds(&self) -> Vec<u64>;
}

impl<T> Outcomes for [SeedOutcome<T>] {
    fn seeds(&self) -> Vec<u64> {
        self.iter().map(|o| o.seed).collect()
    }

    fn failed_seeds(&self) -> Vec<u64> {
        self.iter()
            .filter(|o| o.result.is_err())
            .map(|o| o.seed)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub config_hash: String,
    pub outcomes: Vec<SeedOutcome<SeedMetrics>>,
    pub wall_clock: Duration,
}

impl ScenarioReport {
    /// Successful metrics in seed order.
    pub fn metrics(&self) -> Vec<&SeedMetrics> {
        self.outcomes
            .iter()
            .filter_map(|o| o.result.as_ref().ok())
            .collect()
    }
}

fn scenario_check(cfg: &ExperimentConfig, allowed: &[Scenario], op: &str) -> Result<()> {
    cfg.validate()?;
    if allowed.contains(&cfg.scenario) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{op} does not run scenario `{}`",
            cfg.scenario
        )))
    }
}

fn write_manifest<C: serde::Serialize>(
    out: &OutputDir,
    cfg: &ExperimentConfig,
    config: &C,
    seeds: Vec<u64>,
    failed: Vec<u64>,
    started: Instant,
    dp_projected_nodes: Option<f64>,
    timings: BTreeMap<String, f64>,
) -> Result<()> {
    out.write_manifest(&Manifest {
        scenario: cfg.scenario.to_string(),
        config_hash: cfg.hash(),
        config,
        seeds,
        failed_seeds: failed,
        files: out.files(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        dp_projected_nodes,
        timings,
    })
}

/// Runs every repeat of a single-filter scenario (`lq10`, `heat`, `dubins`,
/// `dubins-jump`), writing per-seed tables, `summary.csv` and the manifest
/// to `out` when given. A failing seed is recorded and the rest still run.
pub fn run_scenario(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ScenarioReport> {
    scenario_check(
        cfg,
        &[
            Scenario::Lq10,
            Scenario::Heat,
            Scenario::Dubins,
            Scenario::DubinsJump,
        ],
        "run",
    )?;
    let started = Instant::now();
    let grid = cfg.grid.build()?;
    let model = BuiltModel::build(&cfg.model, &grid)?;
    let mut dir = OutputDir::new(out)?;
    let mut outcomes = Vec::with_capacity(cfg.repeats);
    let mut timings = BTreeMap::new();
    for seed in cfg.seeds() {
        let seed_started = Instant::now();
        let result = run_seed(cfg, &model, &grid, cfg.filter.kind, seed).and_then(|rec| {
            let (metrics, oracle) = compute_errors(&model, &rec)?;
            let (header, rows) = run_table(&rec, oracle.as_deref(), model.is_dubins());
            dir.write_csv(&format!("run_seed{seed}.csv"), &header, &rows)?;
            Ok(metrics)
        });
        timings.insert(format!("seed{seed}"), seed_started.elapsed().as_secs_f64());
        match &result {
            Ok(m) => info!("{} seed {seed}: {m:?}", cfg.scenario),
            Err(e) => warn!("{} seed {seed} failed: {e}", cfg.scenario),
        }
        outcomes.push(SeedOutcome {
            seed,
            result: result.map_err(|e| e.to_string()),
        });
    }
    let header: Vec<String> = [
        "seed",
        "status",
        "control_error",
        "oracle_norm",
        "relative_control_error",
        "tracking_rmse",
        "terminal_distance",
        "estimation_rmse",
        "total_cost",
        "message",
    ]
    .map(String::from)
    .to_vec();
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| match &o.result {
            Ok(m) => vec![
                o.seed.to_string(),
                "ok".into(),
                opt(m.control_error),
                opt(m.oracle_norm),
                opt(m.relative_control_error()),
                opt(m.tracking_rmse),
                opt(m.terminal_distance),
                num(m.estimation_rmse),
                num(m.total_cost),
                String::new(),
            ],
            Err(e) => {
                let mut row = vec![o.seed.to_string(), "failed".into()];
                row.extend(std::iter::repeat_n(String::new(), 7));
                row.push(e.clone());
                row
            }
        })
        .collect();
    dir.write_csv("summary.csv", &header, &rows)?;
    let (header, rows) = error_table(cfg.controller.iterations, &outcomes);
    dir.write_csv("errors.csv", &header, &rows)?;
    write_manifest(
        &dir,
        cfg,
        cfg,
        outcomes.seeds(),
        outcomes.failed_seeds(),
        started,
        None,
        timings,
    )?;
    Ok(ScenarioReport {
        config_hash: cfg.hash(),
        outcomes,
        wall_clock: started.elapsed(),
    })
}

/// Across-seed summary of each metric in `summary.csv`, one row per metric:
/// `iterations, metric, count, mean, std_error, min, max`.
pub fn error_table(
    iterations: usize,
    outcomes: &[SeedOutcome<SeedMetrics>],
) -> (Vec<String>, Vec<Vec<String>>) {
    let header = ["iterations", "metric", "count", "mean", "std_error", "min", "max"]
        .map(String::from)
        .to_vec();
    let ok: Vec<&SeedMetrics> = outcomes.iter().filter_map(|o| o.result.as_ref().ok()).collect();
    let columns: [(&str, fn(&SeedMetrics) -> Option<f64>); 6] = [
        ("control_error", |m| m.control_error),
        ("relative_control_error", |m| m.relative_control_error()),
        ("tracking_rmse", |m| m.tracking_rmse),
        ("terminal_distance", |m| m.terminal_distance),
        ("estimation_rmse", |m| Some(m.estimation_rmse)),
        ("total_cost", |m| Some(m.total_cost)),
    ];
    let rows = columns
        .iter()
        .filter_map(|(name, get)| {
            let values: Vec<f64> = ok.iter().filter_map(|m| get(m)).collect();
            Summary::of(&values).map(|s| {
                vec![
                    iterations.to_string(),
                    name.to_string(),
                    s.count.to_string(),
                    num(s.mean),
                    num(s.std_error),
                    num(s.min),
                    num(s.max),
                ]
            })
        })
        .collect();
    (header, rows)
}

/// Closed-loop errors of one filter before and after the disturbance.
///
/// `pre` and `post` pool the position axes of the estimation error; `post_axes`
/// holds the post-disturbance estimation RMSE of each axis separately.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterErrors {
    pub pre: f64,
    pub post: f64,
    pub post_axes: Vec<f64>,
    /// Truth-to-reference RMSE over the post-disturbance nodes.
    pub post_tracking: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterStats {
    pub kernel: FilterErrors,
    pub particle: FilterErrors,
}

impl FilterStats {
    /// Whether the kernel filter follows the true position more closely
    /// after the disturbance.
    pub fn kernel_better(&self) -> bool {
        self.kernel.post < self.particle.post
    }
}

#[derive(Debug, Clone)]
pub struct FilterComparison {
    pub config_hash: String,
    /// First node counted as post-disturbance.
    pub split_node: usize,
    pub outcomes: Vec<SeedOutcome<FilterStats>>,
}

/// Earliest disturbance time, or mid-horizon when there is none.
fn disturbance_time(cfg: &ExperimentConfig) -> f64 {
    let d = &cfg.disturbances;
    d.jumps
        .iter()
        .map(|j| j.time)
        .chain(d.noise_windows.iter().map(|w| w.start))
        .reduce(f64::min)
        .unwrap_or(0.5 * cfg.grid.horizon)
}

/// Runs the kernel filter and the particle filter on every seed of the
/// scenario (same truth and observation noise streams) and compares their
/// position-estimation RMSE before and after the disturbance.
pub fn compare_filters(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<FilterComparison> {
    scenario_check(
        cfg,
        &[Scenario::FilterCompare, Scenario::DubinsJump, Scenario::Dubins],
        "compare filters",
    )?;
    let started = Instant::now();
    let grid = cfg.grid.build()?;
    let model = BuiltModel::build(&cfg.model, &grid)?;
    if cfg.filter.particle.particles != cfg.filter.kernel.samples {
        warn!(
            "particle count {} differs from kernel-filter cloud size {}",
            cfg.filter.particle.particles, cfg.filter.kernel.samples
        );
    }
    let split = {
        let target = disturbance_time(cfg);
        (0..grid.len())
            .find(|&k| grid.node(k) >= target - 1e-12)
            .unwrap_or(grid.len())
    };
    let axes = 3;
    let mut dir = OutputDir::new(out)?;
    let mut outcomes = Vec::new();
    for seed in cfg.seeds() {
        let mut one = |kind: FilterKind, label: &str| -> Result<FilterErrors> {
            let rec = run_seed(cfg, &model, &grid, kind, seed)?;
            let (header, rows) = run_table(&rec, None, true);
            dir.write_csv(&format!("run_seed{seed}_{label}.csv"), &header, &rows)?;
            Ok(FilterErrors {
                pre: estimation_rmse(&rec, axes, 0..split),
                post: estimation_rmse(&rec, axes, split..grid.len()),
                post_axes: axis_rmse(&rec, axes, split..grid.len()),
                post_tracking: tracking_rmse_over(&rec, split..grid.len()),
            })
        };
        let result = one(FilterKind::Kernel, "kernel").and_then(|k| {
            let p = one(FilterKind::Particle, "particle")?;
            Ok(FilterStats {
                kernel: k,
                particle: p,
            })
        });
        match &result {
            Ok(s) => info!("filter comparison seed {seed}: {s:?}"),
            Err(e) => warn!("filter comparison seed {seed} failed: {e}"),
        }
        outcomes.push(SeedOutcome {
            seed,
            result: result.map_err(|e| e.to_string()),
        });
    }
    let header: Vec<String> = [
        "seed",
        "status",
        "kernel_pre_rmse",
        "kernel_post_rmse",
        "particle_pre_rmse",
        "particle_post_rmse",
        "kernel_post_tracking_rmse",
        "particle_post_tracking_rmse",
    ]
    .map(String::from)
    .to_vec();
    let mut header = header;
    for label in ["kernel", "particle"] {
        header.extend(["x", "y", "z"].map(|a| format!("{label}_post_rmse_{a}")));
    }
    header.extend(["kernel_better", "message"].map(String::from));
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| match &o.result {
            Ok(s) => vec![
                o.seed.to_string(),
                "ok".into(),
                num(s.kernel.pre),
                num(s.kernel.post),
                num(s.particle.pre),
                num(s.particle.post),
                num(s.kernel.post_tracking),
                num(s.particle.post_tracking),
            ]
            .into_iter()
            .chain(s.kernel.post_axes.iter().copied().map(num))
            .chain(s.particle.post_axes.iter().copied().map(num))
            .chain([
                s.kernel_better().to_string(),
                String::new(),
            ])
            .collect(),
            Err(e) => {
                let mut row = vec![o.seed.to_string(), "failed".into()];
                row.extend(std::iter::repeat_n(String::new(), 13));
                row.push(e.clone());
                row
            }
        })
        .collect();
    dir.write_csv("filters.csv", &header, &rows)?;
    write_manifest(
        &dir,
        cfg,
        cfg,
        outcomes.seeds(),
        outcomes.failed_seeds(),
        started,
        None,
        BTreeMap::new(),
    )?;
    Ok(FilterComparison {
        config_hash: cfg.hash(),
        split_node: split,
        outcomes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpStats {
    pub sgd_tracking_rmse: f64,
    pub dp_tracking_rmse: f64,
    pub dp_nodes: u64,
    pub sgd_wall_clock: Duration,
    pub dp_wall_clock: Duration,
}

#[derive(Debug, Clone)]
pub struct DpComparison {
    pub config_hash: String,
    /// Tree size the same control grid would need on the fine grid.
    pub projected_nodes: f64,
    pub outcomes: Vec<SeedOutcome<DpStats>>,
}

/// Control averaged over each coarse interval of `coarse`.
fn block_average(rec: &RunRecord, coarse: &TimeGrid) -> Vec<f64> {
    let m = rec.m;
    let mut out = vec![0.0; coarse.steps() * m];
    let mut counts = vec![0usize; coarse.steps()];
    for n in 0..rec.grid.steps() {
        let t = rec.grid.node(n);
        let j = (((t - coarse.t0()) / coarse.dt() + 1e-9).floor() as usize).min(coarse.steps() - 1);
        counts[j] += 1;
        for a in 0..m {
            out[j * m + a] += rec.control_at(n)[a];
        }
    }
    for (j, c) in counts.iter().enumerate() {
        for a in 0..m {
            out[j * m + a] /= (*c).max(1) as f64;
        }
    }
    out
}

/// BSDE-SGD on the configured grid against the tree-search baseline on the
/// coarse decision grid, whose candidates surround the BSDE-SGD controls.
pub fn compare_dp(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<DpComparison> {
    scenario_check(cfg, &[Scenario::DpCompare], "compare dp")?;
    let dp = cfg.dp.as_ref().expect("validated");
    let started = Instant::now();
    let grid = cfg.grid.build()?;
    let coarse = TimeGrid::new(0.0, cfg.grid.horizon, dp.steps)?;
    let model = BuiltModel::build(&cfg.model, &grid)?;
    let coarse_model = BuiltModel::build(&cfg.model, &coarse)?;
    let m = cfg.model.control_dim();
    let candidates = dp.points.pow(m as u32);
    let projected = dp_projected_nodes(candidates, grid.steps() / dp.search.hold);
    let mut dir = OutputDir::new(out)?;
    let mut outcomes = Vec::new();
    let mut timings = BTreeMap::new();
    for seed in cfg.seeds() {
        let mut one = || -> Result<DpStats> {
            let sgd_started = Instant::now();
            let sgd = run_seed(cfg, &model, &grid, cfg.filter.kind, seed)?;
            let sgd_wall_clock = sgd_started.elapsed();
            let (header, rows) = run_table(&sgd, None, true);
            dir.write_csv(&format!("run_seed{seed}_sgd.csv"), &header, &rows)?;
            let centres = block_average(&sgd, &coarse);
            let controls = ControlGrid::tensor_around(&centres, m, &dp.spread, dp.points)?;
            let mut streams = LoopStreams::new(seed);
            let mut truth = Truth::new(cfg.initial_state()).with_events(
                cfg.disturbances.jumps.clone(),
                cfg.disturbances.noise_windows.clone(),
            );
            let mut filter = build_filter(cfg, cfg.filter.kind, seed)?;
            let run = dp_baseline(
                coarse_model.as_model(),
                &mut truth,
                filter.as_mut().map(|f| f.as_mut() as &mut dyn StateFilter),
                controls,
                dp.search.clone(),
                &coarse,
                &mut streams,
            )?;
            let (header, rows) = run_table(&run.record, None, true);
            dir.write_csv(&format!("run_seed{seed}_dp.csv"), &header, &rows)?;
            Ok(DpStats {
                sgd_tracking_rmse: tracking_rmse(&sgd),
                dp_tracking_rmse: tracking_rmse(&run.record),
                dp_nodes: run.nodes,
                sgd_wall_clock,
                dp_wall_clock: run.wall_clock,
            })
        };
        let result = one();
        if let Ok(s) = &result {
            timings.insert(format!("seed{seed}_sgd"), s.sgd_wall_clock.as_secs_f64());
            timings.insert(format!("seed{seed}_dp"), s.dp_wall_clock.as_secs_f64());
        }
        match &result {
            Ok(s) => info!("dp comparison seed {seed}: {s:?}"),
            Err(e) => warn!("dp comparison seed {seed} failed: {e}"),
        }
        outcomes.push(SeedOutcome {
            seed,
            result: result.map_err(|e| e.to_string()),
        });
    }
    let header: Vec<String> = [
        "seed",
        "status",
        "sgd_tracking_rmse",
        "dp_tracking_rmse",
        "dp_nodes",
        "dp_projected_nodes",
        "message",
    ]
    .map(String::from)
    .to_vec();
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| match &o.result {
            Ok(s) => vec![
                o.seed.to_string(),
                "ok".into(),
                num(s.sgd_tracking_rmse),
                num(s.dp_tracking_rmse),
                s.dp_nodes.to_string(),
                format!("{projected:e}"),
                String::new(),
            ],
            Err(e) => {
                let mut row = vec![o.seed.to_string(), "failed".into()];
                row.extend(std::iter::repeat_n(String::new(), 3));
                row.push(format!("{projected:e}"));
                row.push(e.clone());
                row
            }
        })
        .collect();
    dir.write_csv("dp.csv", &header, &rows)?;
    write_manifest(
        &dir,
        cfg,
        cfg,
        outcomes.seeds(),
        outcomes.failed_seeds(),
        started,
        Some(projected),
        timings,
    )?;
    Ok(DpComparison {
        config_hash: cfg.hash(),
        projected_nodes: projected,
        outcomes,
    })
}

/// Writes the closed-form LQ solution (state, target, costate, control) on
/// the configured grid to `oracle_lq.csv`.
pub fn export_lq_oracle(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    scenario_check(cfg, &[Scenario::Lq10], "oracle lq")?;
    let started = Instant::now();
    let grid = cfg.grid.build()?;
    let BuiltModel::Lq(model) = BuiltModel::build(&cfg.model, &grid)? else {
        unreachable!("lq10 builds the LQ model");
    };
    let spec = model.spec();
    let d = spec.dim();
    let mut header: Vec<String> = vec!["step".into(), "time".into()];
    for prefix in ["x", "xstar", "p", "u"] {
        header.extend((0..d).map(|i| format!("{prefix}_{i}")));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let t = grid.node(k);
        let p = spec.exact_costate(t);
        let u = lq_exact_control(spec, t, &p)?;
        let mut row = vec![k.to_string(), num(t)];
        for v in [spec.exact_state(t), spec.target(t), p, u] {
            row.extend(v.iter().copied().map(num));
        }
        rows.push(row);
    }
    let mut dir = OutputDir::new(Some(out))?;
    dir.write_csv("oracle_lq.csv", &header, &rows)?;
    write_manifest(&dir, cfg, cfg, vec![], vec![], started, None, BTreeMap::new())
}

/// Writes the heat-model Riccati solution in long format to `riccati.csv`.
pub fn export_riccati(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    scenario_check(cfg, &[Scenario::Heat], "oracle riccati")?;
    let started = Instant::now();
    let grid = cfg.grid.build()?;
    let BuiltModel::Heat { riccati, .. } = BuiltModel::build(&cfg.model, &grid)? else {
        unreachable!("heat builds the heat model");
    };
    let header: Vec<String> = ["step", "time", "row", "col", "value"]
        .map(String::from)
        .to_vec();
    let mut rows = Vec::new();
    for k in 0..grid.len() {
        let g = riccati.at(k);
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                rows.push(vec![
                    k.to_string(),
                    num(grid.node(k)),
                    i.to_string(),
                    j.to_string(),
                    num(g[(i, j)]),
                ]);
            }
        }
    }
    let mut dir = OutputDir::new(Some(out))?;
    dir.write_csv("riccati.csv", &header, &rows)?;
    write_manifest(&dir, cfg, cfg, vec![], vec![], started, None, BTreeMap::new())
}
