use serde::{Deserialize, Serialize};

use crate::control::adjoint::{adjoint_into, gradient_into, AdjointBuffers, GradientSample};
use crate::error::{check_len, Error, Result};
use crate::sde::model::ControlledModel;
use crate::sde::rng::RngStream;
use crate::sde::schedule::{ControlBounds, ControlSchedule};
use crate::sde::simulate::{resimulate_into, EmWorkspace, StatePath};

/// Source of initial states for the simulated control paths.
pub trait StateSampler {
    fn dim(&self) -> usize;
    fn draw(&self, rng: &mut RngStream, out: &mut [f64]);
}

/// Uniform draw among the rows of a row-major point array.
#[derive(Debug, Clone, Copy)]
pub struct UniformCloud<'a> {
    pub d: usize,
    pub points: &'a [f64],
}

impl StateSampler for UniformCloud<'_> {
    fn dim(&self) -> usize {
        self.d
    }

    fn draw(&self, rng: &mut RngStream, out: &mut [f64]) {
        let n = self.points.len() / self.d;
        let i = if n == 1 { 0 } else { rng.index(n) };
        out.copy_from_slice(&self.points[i * self.d..(i + 1) * self.d]);
    }
}

/// Draw among rows with probabilities proportional to `weights`.
#[derive(Debug, Clone)]
pub struct WeightedCloud<'a> {
    pub d: usize,
    pub points: &'a [f64],
    cdf: Vec<f64>,
}

impl<'a> WeightedCloud<'a> {
    pub fn new(d: usize, points: &'a [f64], weights: &[f64]) -> Result<Self> {
        check_len(
            "WeightedCloud::new",
            "weights",
            points.len() / d.max(1),
            weights.len(),
        )?;
        let mut acc = 0.0;
        let cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w.max(0.0);
                acc
            })
            .collect();
        if !(acc > 0.0) {
            return Err(Error::Degenerate {
                op: "WeightedCloud::new",
            });
        }
        Ok(Self { d, points, cdf })
    }
}

impl StateSampler for WeightedCloud<'_> {
    fn dim(&self) -> usize {
        self.d
    }

    fn draw(&self, rng: &mut RngStream, out: &mut [f64]) {
        let total = *self.cdf.last().unwrap();
        let target = rng.uniform() * total;
        let i = self
            .cdf
            .partition_point(|c| *c <= target)
            .min(self.cdf.len() - 1);
        out.copy_from_slice(&self.points[i * self.d..(i + 1) * self.d]);
    }
}

/// Full-batch averaging sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    /// Initial states per update (`S`).
    pub initial_states: usize,
    /// Paths per initial state (`Λ`).
    pub paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// SGD iterations per time step (`L`).
    pub iterations: usize,
    /// Base step size `r0`.
    pub step: f64,
    /// Iteration count at which the step size has halved.
    pub step_half_life: f64,
    pub bounds: Option<ControlBounds>,
    pub batch: Option<BatchConfig>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            step: 0.1,
            step_half_life: 100.0,
            bounds: None,
            batch: None,
        }
    }
}

impl ControllerConfig {
    /// Step size `r0 / (1 + l / l_half)` at iteration `l`.
    pub fn step_at(&self, l: usize) -> f64 {
        self.step / (1.0 + l as f64 / self.step_half_life)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step_half_life > 0.0) {
            return Err(Error::Config(
                "controller step and step_half_life must be positive".into(),
            ));
        }
        if let Some(b) = &self.batch {
            if b.initial_states == 0 || b.paths == 0 {
                return Err(Error::Config("batch sizes must be at least 1".into()));
            }
        }
        Ok(())
    }
}

/// `u_i ← proj_U(u_i − r Ψ_i)` on every node of the horizon.
pub fn sgd_update(
    schedule: &mut ControlSchedule,
    gradient: &GradientSample,
    r: f64,
    bounds: Option<&ControlBounds>,
) -> Result<()> {
    check_len(
        "sgd_update",
        "gradient",
        schedule.values().len(),
        gradient.psi.len(),
    )?;
    if !(r > 0.0) {
        return Err(Error::Argument {
            op: "sgd_update",
            msg: format!("step size must be positive, got {r}"),
        });
    }
    apply_step(schedule, &gradient.psi, r, bounds);
    Ok(())
}

fn apply_step(schedule: &mut ControlSchedule, psi: &[f64], r: f64, bounds: Option<&ControlBounds>) {
    for (u, g) in schedule.values_mut().iter_mut().zip(psi) {
        *u -= r * g;
    }
    schedule.project(bounds);
}

/// Buffers reused across SGD iterations.
pub(crate) struct SgdWorkspace {
    pub path: StatePath,
    pub em: EmWorkspace,
    pub adj: AdjointBuffers,
    pub x0: Vec<f64>,
    pub mean_psi: Vec<f64>,
}

impl SgdWorkspace {
    pub fn new<M: ControlledModel + ?Sized>(model: &M, nodes: usize) -> Self {
        let dims = model.dims();
        Self {
            path: StatePath {
                start: 0,
                d: dims.d,
                q: dims.q,
                states: Vec::new(),
                noises: Vec::new(),
            },
            em: EmWorkspace::new(dims.d),
            adj: AdjointBuffers::new(dims, nodes),
            x0: vec![0.0; dims.d],
            mean_psi: vec![0.0; nodes * dims.m],
        }
    }

    /// One simulated path from `x0` and its gradient, left in `adj.psi`.
    pub fn sample_gradient<M: ControlledModel + ?Sized>(
        &mut self,
        model: &M,
        schedule: &ControlSchedule,
        rng: &mut RngStream,
    ) -> Result<()> {
        let nodes = schedule.len();
        self.adj.resize(model.dims(), nodes);
        resimulate_into(model, schedule, &self.x0, rng, &mut self.path, &mut self.em)?;
        adjoint_into(model, &self.path, schedule, &mut self.adj)?;
        gradient_into(model, &self.path, schedule, &mut self.adj)
    }
}

fn check_inputs<M: ControlledModel + ?Sized>(
    op: &'static str,
    model: &M,
    n: usize,
    sampler: &dyn StateSampler,
    schedule: &ControlSchedule,
) -> Result<()> {
    let dims = model.dims();
    check_len(op, "state dimension", dims.d, sampler.dim())?;
    check_len(op, "control dimension", dims.m, schedule.control_dim())?;
    if schedule.start() != n {
        return Err(Error::Argument {
            op,
            msg: format!(
                "schedule starts at node {} but optimisation is at node {n}",
                schedule.start()
            ),
        });
    }
    if n >= schedule.grid().steps() {
        return Err(Error::Argument {
            op,
            msg: format!("no control interval left at node {n}"),
        });
    }
    Ok(())
}

/// Sample-wise SGD at node `n`: each iteration draws an initial state from
/// `sampler`, simulates one controlled path over `[t_n, T]`, solves its
/// adjoint and takes one projected gradient step on the whole schedule.
///
/// `offset` is the number of iterations already spent on this time step,
/// so a warm-started continuation uses the same step sizes as one long run.
/// Returns the control at `t_n` and the final schedule.
pub fn optimize_control_at<M: ControlledModel + ?Sized>(
    model: &M,
    n: usize,
    sampler: &dyn StateSampler,
    init: ControlSchedule,
    cfg: &ControllerConfig,
    offset: usize,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, ControlSchedule)> {
    check_inputs("optimize_control_at", model, n, sampler, &init)?;
    if cfg.batch.is_some() {
        return optimize_control_batch(model, n, sampler, init, cfg, offset, rng);
    }
    let mut schedule = init;
    let mut ws = SgdWorkspace::new(model, schedule.len());
    for l in 0..cfg.iterations {
        sampler.draw(rng, &mut ws.x0);
        ws.sample_gradient(model, &schedule, rng)?;
        apply_step(
            &mut schedule,
            &ws.adj.psi,
            cfg.step_at(offset + l),
            cfg.bounds.as_ref(),
        );
    }
    Ok((schedule.at(n).to_vec(), schedule))
}

/// Full-batch variant: every update averages `Ψ` over `S` initial states and
/// `Λ` paths per state (`S = Λ = 1` when `cfg.batch` is absent).
pub fn optimize_control_batch<M: ControlledModel + ?Sized>(
    model: &M,
    n: usize,
    sampler: &dyn StateSampler,
    init: ControlSchedule,
    cfg: &ControllerConfig,
    offset: usize,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, ControlSchedule)> {
    check_inputs("optimize_control_batch", model, n, sampler, &init)?;
    let batch = cfg.batch.unwrap_or(BatchConfig {
        initial_states: 1,
        paths: 1,
    });
    let mut schedule = init;
    let mut ws = SgdWorkspace::new(model, schedule.len());
    let inv = 1.0 / (batch.initial_states * batch.paths) as f64;
    for l in 0..cfg.iterations {
        ws.mean_psi.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..batch.initial_states {
            sampler.draw(rng, &mut ws.x0);
            for _ in 0..batch.paths {
                ws.sample_gradient(model, &schedule, rng)?;
                for (a, g) in ws.mean_psi.iter_mut().zip(&ws.adj.psi) {
                    *a += g * inv;
                }
            }
        }
        apply_step(
            &mut schedule,
            &ws.mean_psi,
            cfg.step_at(offset + l),
            cfg.bounds.as_ref(),
        );
    }
    Ok((schedule.at(n).to_vec(), schedule))
}

/// Mean and per-entry standard error of `Ψ` over `samples` independent
/// paths at a fixed schedule.
pub fn gradient_statistics<M: ControlledModel + ?Sized>(
    model: &M,
    sampler: &dyn StateSampler,
    schedule: &ControlSchedule,
    samples: usize,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if samples < 2 {
        return Err(Error::Argument {
            op: "gradient_statistics",
            msg: "need at least two samples".into(),
        });
    }
    let mut ws = SgdWorkspace::new(model, schedule.len());
    let len = schedule.values().len();
    let mut mean = vec![0.0; len];
    let mut m2 = vec![0.0; len];
    for s in 0..samples {
        sampler.draw(rng, &mut ws.x0);
        ws.sample_gradient(model, schedule, rng)?;
        let k = (s + 1) as f64;
        for j in 0..len {
            let g = ws.adj.psi[j];
            let delta = g - mean[j];
            mean[j] += delta / k;
            m2[j] += delta * (g - mean[j]);
        }
    }
    let n = samples as f64;
    let se = m2.iter().map(|v| (v / (n - 1.0) / n).sqrt()).collect();
    Ok((mean, se))
}
