use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::sde::model::ControlledModel;
use crate::sde::rng::RngStream;
use crate::sde::schedule::ControlSchedule;

/// One noisy reading `m_n` taken at grid time `t_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub n: usize,
    pub t: f64,
    pub value: Vec<f64>,
}

/// Scratch buffers for repeated Euler–Maruyama steps.
#[derive(Debug, Clone)]
pub struct EmWorkspace {
    drift: Vec<f64>,
    noise: Vec<f64>,
}

impl EmWorkspace {
    pub fn new(d: usize) -> Self {
        Self {
            drift: vec![0.0; d],
            noise: vec![0.0; d],
        }
    }
}

/// `out = x + b(t,x,u) Δt + σ(t,x,u) √Δt ω` without allocating.
pub fn em_step_into<M: ControlledModel + ?Sized>(
    model: &M,
    t: f64,
    x: &[f64],
    u: &[f64],
    dt: f64,
    omega: &[f64],
    ws: &mut EmWorkspace,
    out: &mut [f64],
) {
    model.drift(t, x, u, &mut ws.drift);
    model.diffusion_apply(t, x, u, omega, &mut ws.noise);
    let sq = dt.sqrt();
    for i in 0..x.len() {
        out[i] = x[i] + ws.drift[i] * dt + ws.noise[i] * sq;
    }
}

/// One Euler–Maruyama step of the controlled state.
pub fn em_state_step<M: ControlledModel + ?Sized>(
    model: &M,
    t: f64,
    x: &[f64],
    u: &[f64],
    dt: f64,
    omega: &[f64],
) -> Result<Vec<f64>> {
    const OP: &str = "em_state_step";
    let dims = model.dims();
    check_len(OP, "x", dims.d, x.len())?;
    check_len(OP, "u", dims.m, u.len())?;
    check_len(OP, "omega", dims.q, omega.len())?;
    if !(dt > 0.0) {
        return Err(Error::Argument {
            op: OP,
            msg: format!("dt must be positive, got {dt}"),
        });
    }
    let mut out = vec![0.0; dims.d];
    em_step_into(
        model,
        t,
        x,
        u,
        dt,
        omega,
        &mut EmWorkspace::new(dims.d),
        &mut out,
    );
    check_finite(OP, 0, &out)?;
    Ok(out)
}

/// Simulated state trajectory on nodes `start..=N_T` together with the
/// standard Gaussian increments `ω_i` (`i = start..N_T-1`) that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePath {
    pub start: usize,
    pub d: usize,
    pub q: usize,
    pub states: Vec<f64>,
    pub noises: Vec<f64>,
}

impl StatePath {
    pub fn nodes(&self) -> usize {
        self.states.len() / self.d
    }

    /// State at absolute node `i`.
    pub fn state(&self, i: usize) -> &[f64] {
        let k = i - self.start;
        &self.states[k * self.d..(k + 1) * self.d]
    }

    /// Increment used on the step `i -> i+1`.
    pub fn noise(&self, i: usize) -> &[f64] {
        let k = i - self.start;
        &self.noises[k * self.q..(k + 1) * self.q]
    }

    pub fn terminal(&self) -> &[f64] {
        &self.states[self.states.len() - self.d..]
    }
}

/// Simulates the controlled state from `x0` at the schedule's first node to
/// the final node, drawing fresh increments from `rng`.
pub fn simulate_state_path<M: ControlledModel + ?Sized>(
    model: &M,
    schedule: &ControlSchedule,
    x0: &[f64],
    rng: &mut RngStream,
) -> Result<StatePath> {
    let dims = model.dims();
    let steps = schedule.len() - 1;
    let mut noises = vec![0.0; steps * dims.q];
    rng.fill_standard_normal(&mut noises);
    simulate_with_noise(model, schedule, x0, noises)
}

/// Simulates the state path driven by the given increments.
pub fn simulate_with_noise<M: ControlledModel + ?Sized>(
    model: &M,
    schedule: &ControlSchedule,
    x0: &[f64],
    noises: Vec<f64>,
) -> Result<StatePath> {
    let dims = model.dims();
    let steps = schedule.len() - 1;
    check_len("simulate_state_path", "noise", steps * dims.q, noises.len())?;
    let mut path = StatePath {
        start: schedule.start(),
        d: dims.d,
        q: dims.q,
        states: vec![0.0; (steps + 1) * dims.d],
        noises,
    };
    fill_states(
        model,
        schedule,
        x0,
        &mut path,
        &mut EmWorkspace::new(dims.d),
    )?;
    Ok(path)
}

/// Redraws the increments of `path` and refills its states in place.
pub fn resimulate_into<M: ControlledModel + ?Sized>(
    model: &M,
    schedule: &ControlSchedule,
    x0: &[f64],
    rng: &mut RngStream,
    path: &mut StatePath,
    ws: &mut EmWorkspace,
) -> Result<()> {
    let dims = model.dims();
    let steps = schedule.len() - 1;
    path.start = schedule.start();
    path.d = dims.d;
    path.q = dims.q;
    path.states.resize((steps + 1) * dims.d, 0.0);
    path.noises.resize(steps * dims.q, 0.0);
    rng.fill_standard_normal(&mut path.noises);
    fill_states(model, schedule, x0, path, ws)
}

fn fill_states<M: ControlledModel + ?Sized>(
    model: &M,
    schedule: &ControlSchedule,
    x0: &[f64],
    path: &mut StatePath,
    ws: &mut EmWorkspace,
) -> Result<()> {
    const OP: &str = "simulate_state_path";
    let dims = model.dims();
    check_len(OP, "x0", dims.d, x0.len())?;
    check_len(OP, "control", dims.m, schedule.control_dim())?;
    check_finite(OP, schedule.start(), x0)?;
    let grid = schedule.grid();
    let start = schedule.start();
    let steps = schedule.len() - 1;
    let dt = grid.dt();
    let d = dims.d;
    path.states[..d].copy_from_slice(x0);
    for k in 0..steps {
        let i = start + k;
        let (head, tail) = path.states.split_at_mut((k + 1) * d);
        let x = &head[k * d..];
        let out = &mut tail[..d];
        let w = &path.noises[k * dims.q..(k + 1) * dims.q];
        em_step_into(model, grid.node(i), x, schedule.at(i), dt, w, ws, out);
        check_finite(OP, i + 1, out)?;
    }
    Ok(())
}

/// Noisy reading `g(x) + η`.
pub fn simulate_observation<M: ControlledModel + ?Sized>(
    model: &M,
    x: &[f64],
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let dims = model.dims();
    check_len("simulate_observation", "x", dims.d, x.len())?;
    let mut out = vec![0.0; dims.p];
    model.observe(x, &mut out);
    model.obs_noise().add_sample(rng, &mut out);
    check_finite("simulate_observation", 0, &out)?;
    Ok(out)
}

/// `log N(m; g(x), cov)` under the model's observation noise.
pub fn log_likelihood<M: ControlledModel + ?Sized>(model: &M, x: &[f64], m: &[f64]) -> Result<f64> {
    let dims = model.dims();
    check_len("log_likelihood", "x", dims.d, x.len())?;
    check_len("log_likelihood", "observation", dims.p, m.len())?;
    let mut r = vec![0.0; dims.p];
    model.observe(x, &mut r);
    for (ri, mi) in r.iter_mut().zip(m) {
        *ri = mi - *ri;
    }
    Ok(model.obs_noise().log_density(&r))
}
