use serde::{Deserialize, Serialize};

use crate::control::sgd::{
    optimize_control_at, ControllerConfig, StateSampler, UniformCloud, WeightedCloud,
};
use crate::error::{check_finite, check_len, Error, Result};
use crate::filter::bsde::{filter_step, FilterConfig, FilterState};
use crate::filter::kernel::KernelDensity;
use crate::filter::particle::{pf_step, ParticleEnsemble};
use crate::sde::grid::TimeGrid;
use crate::sde::model::ControlledModel;
use crate::sde::rng::{streams, RngStream};
use crate::sde::schedule::ControlSchedule;
use crate::sde::simulate::{em_step_into, EmWorkspace};

/// Recursive state estimator driven by the closed loop.
pub trait StateFilter {
    fn dim(&self) -> usize;
    /// Posterior mean.
    fn estimate(&self) -> Vec<f64>;
    /// Posterior standard deviation per axis.
    fn spread(&self) -> Vec<f64>;
    /// Sampler of initial states for the controller.
    fn sampler(&self) -> Box<dyn StateSampler + '_>;
    /// Moves from `t_n` to `t_{n+1}` given the applied control and the new
    /// observation.
    fn step(
        &mut self,
        model: &dyn ControlledModel,
        grid: &TimeGrid,
        n: usize,
        u: &[f64],
        observation: &[f64],
        rng: &mut RngStream,
    ) -> Result<()>;
}

/// Kernel-learning backward-SDE filter.
#[derive(Debug, Clone)]
pub struct KernelFilter {
    pub state: FilterState,
    pub config: FilterConfig,
}

impl KernelFilter {
    pub fn new(prior: KernelDensity, config: FilterConfig, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let state = FilterState::from_prior(prior, config.samples, rng);
        Ok(Self { state, config })
    }
}

impl StateFilter for KernelFilter {
    fn dim(&self) -> usize {
        self.state.density.dim()
    }

    fn estimate(&self) -> Vec<f64> {
        self.state.mean()
    }

    fn spread(&self) -> Vec<f64> {
        let d = self.dim();
        let cov = self.state.density.covariance();
        (0..d).map(|i| cov[i * d + i].sqrt()).collect()
    }

    fn sampler(&self) -> Box<dyn StateSampler + '_> {
        Box::new(UniformCloud {
            d: self.dim(),
            points: &self.state.cloud.points,
        })
    }

    fn step(
        &mut self,
        model: &dyn ControlledModel,
        grid: &TimeGrid,
        n: usize,
        u: &[f64],
        observation: &[f64],
        rng: &mut RngStream,
    ) -> Result<()> {
        self.state.n = n;
        self.state = filter_step(&self.state, model, grid, u, observation, &self.config, rng)?;
        Ok(())
    }
}

/// Bootstrap particle filter.
#[derive(Debug, Clone)]
pub struct ParticleFilter {
    pub ensemble: ParticleEnsemble,
    pub ess_fraction: f64,
}

impl ParticleFilter {
    /// Ensemble of `n` equally weighted draws from `prior`.
    pub fn new(
        prior: &KernelDensity,
        n: usize,
        ess_fraction: f64,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let ensemble = ParticleEnsemble::uniform(prior.dim(), prior.sample(n, rng))?;
        Ok(Self {
            ensemble,
            ess_fraction,
        })
    }
}

impl StateFilter for ParticleFilter {
    fn dim(&self) -> usize {
        self.ensemble.d
    }

    fn estimate(&self) -> Vec<f64> {
        self.ensemble.mean()
    }

    fn spread(&self) -> Vec<f64> {
        let mu = self.ensemble.mean();
        let d = self.dim();
        let mut var = vec![0.0; d];
        for (x, w) in self
            .ensemble
            .particles
            .chunks(d)
            .zip(&self.ensemble.weights)
        {
            for j in 0..d {
                var[j] += w * (x[j] - mu[j]).powi(2);
            }
        }
        var.into_iter().map(f64::sqrt).collect()
    }

    fn sampler(&self) -> Box<dyn StateSampler + '_> {
        Box::new(
            WeightedCloud::new(self.dim(), &self.ensemble.particles, &self.ensemble.weights)
                .expect("particle weights sum to one"),
        )
    }

    fn step(
        &mut self,
        model: &dyn ControlledModel,
        grid: &TimeGrid,
        n: usize,
        u: &[f64],
        observation: &[f64],
        rng: &mut RngStream,
    ) -> Result<()> {
        self.ensemble = pf_step(
            &self.ensemble,
            model,
            grid.node(n),
            u,
            observation,
            grid.dt(),
            self.ess_fraction,
            rng,
        )?;
        Ok(())
    }
}

/// Chooses the control applied on `[t_n, t_{n+1})`.
pub trait Controller {
    fn control(
        &mut self,
        model: &dyn ControlledModel,
        grid: &TimeGrid,
        n: usize,
        filter: Option<&dyn StateFilter>,
        truth: &[f64],
        rng: &mut RngStream,
    ) -> Result<Vec<f64>>;
}

/// Sample-wise SGD controller warm-started from the previous schedule.
#[derive(Debug, Clone)]
pub struct SgdController {
    pub config: ControllerConfig,
    schedule: Option<ControlSchedule>,
}

impl SgdController {
    pub fn new(config: ControllerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            schedule: None,
        })
    }

    /// Starts from `schedule` instead of the zero control.
    pub fn with_initial_schedule(mut self, schedule: ControlSchedule) -> Self {
        self.schedule = Some(schedule);
        self
    }

    pub fn schedule(&self) -> Option<&ControlSchedule> {
        self.schedule.as_ref()
    }
}

impl Controller for SgdController {
    fn control(
        &mut self,
        model: &dyn ControlledModel,
        grid: &TimeGrid,
        n: usize,
        filter: Option<&dyn StateFilter>,
        truth: &[f64],
        rng: &mut RngStream,
    ) -> Result<Vec<f64>> {
        let m = model.dims().m;
        let init = match self.schedule.take() {
            Some(s) if s.start() <= n => s.from_node(n),
            _ => ControlSchedule::zeros(*grid, n, m)?,
        };
        let exact;
        let sampler: Box<dyn StateSampler + '_> = match filter {
            Some(f) => f.sampler(),
            None => {
                exact = UniformCloud {
                    d: truth.len(),
                    points: truth,
                };
                Box::new(exact)
            }
        };
        let (u, schedule) =
            optimize_control_at(model, n, sampler.as_ref(), init, &self.config, 0, rng)?;
        self.schedule = Some(schedule);
        Ok(u)
    }
}

/// Feedback law evaluated on the exact state.
pub struct FnController<F>(pub F);

impl<F> Controller for FnController<F>
where
    F: FnMut(usize, &[f64]) -> Result<Vec<f64>>,
{
    fn control(
        &mut self,
        _model: &dyn ControlledModel,
        _grid: &TimeGrid,
        n: usize,
        _filter: Option<&dyn StateFilter>,
        truth: &[f64],
        _rng: &mut RngStream,
    ) -> Result<Vec<f64>> {
        (self.0)(n, truth)
    }
}

/// Additive displacement of the true state at a given time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpEvent {
    pub time: f64,
    pub displacement: Vec<f64>,
}

/// Interval during which the observation noise standard deviation is
/// multiplied by `std_factor`, unknown to the filters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseWindow {
    pub start: f64,
    pub end: f64,
    pub std_factor: f64,
}

/// Simulator of the true hidden state and its observations.
#[derive(Debug, Clone)]
pub struct Truth {
    pub x: Vec<f64>,
    pub jumps: Vec<JumpEvent>,
    pub noise_windows: Vec<NoiseWindow>,
    ws: EmWorkspace,
    w: Vec<f64>,
    next: Vec<f64>,
}

impl Truth {
    pub fn new(x0: Vec<f64>) -> Self {
        let d = x0.len();
        Self {
            x: x0,
            jumps: Vec::new(),
            noise_windows: Vec::new(),
            ws: EmWorkspace::new(d),
            w: Vec::new(),
            next: vec![0.0; d],
        }
    }

    pub fn with_events(mut self, jumps: Vec<JumpEvent>, noise_windows: Vec<NoiseWindow>) -> Self {
        self.jumps = jumps;
        self.noise_windows = noise_windows;
        self
    }

    /// Euler–Maruyama step over `[t_n, t_{n+1}]` plus any jump in that interval.
    pub fn step(
        &mut self,
        model: &dyn ControlledModel,
        grid: &TimeGrid,
        n: usize,
        u: &[f64],
        rng: &mut RngStream,
    ) -> Result<()> {
        let dims = model.dims();
        self.w.resize(dims.q, 0.0);
        rng.fill_standard_normal(&mut self.w);
        let (t0, t1) = (grid.node(n), grid.node(n + 1));
        em_step_into(
            model,
            t0,
            &self.x,
            u,
            grid.dt(),
            &self.w,
            &mut self.ws,
            &mut self.next,
        );
        std::mem::swap(&mut self.x, &mut self.next);
        for jump in &self.jumps {
            if jump.time > t0 && jump.time <= t1 {
                check_len(
                    "Truth::step",
                    "jump displacement",
                    self.x.len(),
                    jump.displacement.len(),
                )?;
                for (x, dx) in self.x.iter_mut().zip(&jump.displacement) {
                    *x += dx;
                }
            }
        }
        check_finite("Truth::step", n + 1, &self.x)
    }

    /// Reading at time `t` of the current state.
    pub fn observe(
        &self,
        model: &dyn ControlledModel,
        t: f64,
        rng: &mut RngStream,
    ) -> Result<Vec<f64>> {
        let p = model.dims().p;
        let mut clean = vec![0.0; p];
        model.observe(&self.x, &mut clean);
        let mut noise = vec![0.0; p];
        model.obs_noise().add_sample(rng, &mut noise);
        let factor: f64 = self
            .noise_windows
            .iter()
            .filter(|w| t >= w.start && t <= w.end)
            .map(|w| w.std_factor)
            .product();
        let out: Vec<f64> = clean
            .iter()
            .zip(&noise)
            .map(|(c, e)| c + factor * e)
            .collect();
        check_finite("Truth::observe", 0, &out)?;
        Ok(out)
    }
}

/// Everything recorded along one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub grid: TimeGrid,
    pub d: usize,
    pub m: usize,
    pub p: usize,
    /// True states at every node, row-major `(N+1) × d`.
    pub truth: Vec<f64>,
    /// Filter means at every node (the true state when no filter runs).
    pub estimate: Vec<f64>,
    /// Filter standard deviations at every node.
    pub spread: Vec<f64>,
    /// Applied controls on each interval, `N × m`.
    pub controls: Vec<f64>,
    /// Observations at nodes `1..=N`, `N × p`.
    pub observations: Vec<f64>,
    /// `f(t_n, x_n, u_n)` on each interval.
    pub running_cost: Vec<f64>,
    pub terminal_cost: f64,
}

impl RunRecord {
    pub fn truth_at(&self, n: usize) -> &[f64] {
        &self.truth[n * self.d..(n + 1) * self.d]
    }

    pub fn estimate_at(&self, n: usize) -> &[f64] {
        &self.estimate[n * self.d..(n + 1) * self.d]
    }

    pub fn control_at(&self, n: usize) -> &[f64] {
        &self.controls[n * self.m..(n + 1) * self.m]
    }

    /// `Σ f Δt + h` along the true trajectory.
    pub fn total_cost(&self) -> f64 {
        self.running_cost.iter().sum::<f64>() * self.grid.dt() + self.terminal_cost
    }
}

/// Random streams of one closed-loop run, all derived from a single seed.
#[derive(Debug, Clone)]
pub struct LoopStreams {
    pub truth: RngStream,
    pub observation: RngStream,
    pub filter: RngStream,
    pub controller: RngStream,
}

impl LoopStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            truth: RngStream::new(seed, streams::TRUTH),
            observation: RngStream::new(seed, streams::OBSERVATION),
            filter: RngStream::new(seed, streams::FILTER),
            controller: RngStream::new(seed, streams::CONTROLLER),
        }
    }
}

/// Closed-loop driver: at each node choose a control (every `hold` nodes,
/// holding it in between), advance the truth, observe, update the filter.
pub fn run_closed_loop(
    model: &dyn ControlledModel,
    truth: &mut Truth,
    mut filter: Option<&mut dyn StateFilter>,
    controller: &mut dyn Controller,
    grid: &TimeGrid,
    hold: usize,
    streams: &mut LoopStreams,
) -> Result<RunRecord> {
    let dims = model.dims();
    check_len("run_closed_loop", "initial truth", dims.d, truth.x.len())?;
    if let Some(f) = filter.as_deref() {
        check_len("run_closed_loop", "filter dimension", dims.d, f.dim())?;
    }
    if hold == 0 {
        return Err(Error::Argument {
            op: "run_closed_loop",
            msg: "hold must be at least 1".into(),
        });
    }
    let steps = grid.steps();
    let mut rec = RunRecord {
        grid: *grid,
        d: dims.d,
        m: dims.m,
        p: dims.p,
        truth: Vec::with_capacity((steps + 1) * dims.d),
        estimate: Vec::with_capacity((steps + 1) * dims.d),
        spread: Vec::with_capacity((steps + 1) * dims.d),
        controls: Vec::with_capacity(steps * dims.m),
        observations: Vec::with_capacity(steps * dims.p),
        running_cost: Vec::with_capacity(steps),
        terminal_cost: 0.0,
    };
    let record_estimate = |rec: &mut RunRecord, f: Option<&dyn StateFilter>, x: &[f64]| match f {
        Some(f) => {
            rec.estimate.extend(f.estimate());
            rec.spread.extend(f.spread());
        }
        None => {
            rec.estimate.extend_from_slice(x);
            rec.spread.extend(std::iter::repeat_n(0.0, x.len()));
        }
    };
    rec.truth.extend_from_slice(&truth.x);
    record_estimate(&mut rec, filter.as_deref(), &truth.x);
    let mut u = vec![0.0; dims.m];
    for n in 0..steps {
        if n % hold == 0 {
            u = controller
                .control(
                    model,
                    grid,
                    n,
                    filter.as_deref(),
                    &truth.x,
                    &mut streams.controller,
                )
                .map_err(|e| e.at_step(n))?;
            check_len("run_closed_loop", "control", dims.m, u.len())?;
        }
        rec.running_cost
            .push(model.running_cost(grid.node(n), &truth.x, &u));
        rec.controls.extend_from_slice(&u);
        truth
            .step(model, grid, n, &u, &mut streams.truth)
            .map_err(|e| e.at_step(n))?;
        let obs = truth
            .observe(model, grid.node(n + 1), &mut streams.observation)
            .map_err(|e| e.at_step(n + 1))?;
        if let Some(f) = filter.as_deref_mut() {
            f.step(model, grid, n, &u, &obs, &mut streams.filter)
                .map_err(|e| e.at_step(n + 1))?;
        }
        rec.observations.extend_from_slice(&obs);
        rec.truth.extend_from_slice(&truth.x);
        record_estimate(&mut rec, filter.as_deref(), &truth.x);
    }
    rec.terminal_cost = model.terminal_cost(&truth.x);
    Ok(rec)
}
