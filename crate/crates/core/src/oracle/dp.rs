use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::control::closed_loop::{
    run_closed_loop, Controller, LoopStreams, RunRecord, StateFilter, Truth,
};
use crate::error::{check_len, Error, Result};
use crate::sde::grid::TimeGrid;
use crate::sde::model::ControlledModel;
use crate::sde::rng::RngStream;

/// Candidate controls for each decision of the tree search.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    m: usize,
    per_decision: Vec<Vec<f64>>,
}

impl ControlGrid {
    /// The same flattened candidate list at every decision.
    pub fn shared(m: usize, candidates: Vec<f64>, decisions: usize) -> Result<Self> {
        if m == 0 || candidates.is_empty() || !candidates.len().is_multiple_of(m) {
            return Err(Error::Config(format!(
                "control grid needs a nonempty multiple of {m} values, got {}",
                candidates.len()
            )));
        }
        Ok(Self {
            m,
            per_decision: vec![candidates; decisions],
        })
    }

    /// Tensor grid with `points` values per axis, centred on a per-decision
    /// control (`centres` holds `decisions × m` values) and spaced by
    /// `spread` either side.
    pub fn tensor_around(centres: &[f64], m: usize, spread: &[f64], points: usize) -> Result<Self> {
        check_len("ControlGrid::tensor_around", "spread", m, spread.len())?;
        if m == 0 || points == 0 || !centres.len().is_multiple_of(m) {
            return Err(Error::Config(
                "control grid needs m > 0, points > 0 and whole centres".into(),
            ));
        }
        let offsets: Vec<f64> = if points == 1 {
            vec![0.0]
        } else {
            (0..points)
                .map(|k| -1.0 + 2.0 * k as f64 / (points - 1) as f64)
                .collect()
        };
        let total = points.pow(m as u32);
        let per_decision = centres
            .chunks(m)
            .map(|c| {
                let mut out = Vec::with_capacity(total * m);
                for idx in 0..total {
                    let mut rest = idx;
                    for a in 0..m {
                        out.push(c[a] + spread[a] * offsets[rest % points]);
                        rest /= points;
                    }
                }
                out
            })
            .collect();
        Ok(Self { m, per_decision })
    }

    pub fn control_dim(&self) -> usize {
        self.m
    }

    pub fn decisions(&self) -> usize {
        self.per_decision.len()
    }

    pub fn count(&self, j: usize) -> usize {
        self.per_decision[j].len() / self.m
    }

    pub fn candidate(&self, j: usize, c: usize) -> &[f64] {
        &self.per_decision[j][c * self.m..(c + 1) * self.m]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DpConfig {
    /// Fine steps per decision.
    pub hold: usize,
    /// Noise paths averaged per branch; zero evaluates the noise-free skeleton.
    pub noise_samples: usize,
    /// Upper limit on simulated tree nodes (times noise paths).
    pub budget: f64,
}

impl Default for DpConfig {
    fn default() -> Self {
        Self {
            hold: 1,
            noise_samples: 0,
            budget: 1e9,
        }
    }
}

/// `Σ_{k=1}^{H} C^k`, the number of nodes in a full tree of depth `H`.
pub fn dp_projected_nodes(candidates: usize, decisions: usize) -> f64 {
    let c = candidates as f64;
    if c == 1.0 {
        return decisions as f64;
    }
    c * (c.powi(decisions as i32) - 1.0) / (c - 1.0)
}

/// Best open-loop control sequence found by the tree search.
#[derive(Debug, Clone)]
pub struct DpPlan {
    pub start: usize,
    /// Controls for each remaining decision, `decisions × m`.
    pub controls: Vec<f64>,
    pub cost: f64,
    pub nodes: u64,
}

struct Search<'a> {
    model: &'a dyn ControlledModel,
    grid: &'a TimeGrid,
    controls: &'a ControlGrid,
    hold: usize,
    paths: usize,
    d: usize,
    q: usize,
    /// `paths × steps × q` fine noise increments (already scaled by √Δt).
    noise: Vec<f64>,
    steps: usize,
    start: usize,
    states: Vec<Vec<f64>>,
    scratch: Vec<f64>,
    drift: Vec<f64>,
    choice: Vec<usize>,
    best: Vec<usize>,
    best_cost: f64,
    nodes: u64,
}

impl Search<'_> {
    fn descend(&mut self, depth: usize, node: usize, acc: f64) {
        let big_n = self.grid.steps();
        if node >= big_n {
            let mut term = 0.0;
            for s in 0..self.paths {
                term += self
                    .model
                    .terminal_cost(&self.states[depth][s * self.d..(s + 1) * self.d]);
            }
            let total = acc + term / self.paths as f64;
            if total < self.best_cost {
                self.best_cost = total;
                self.best.clear();
                self.best.extend_from_slice(&self.choice[..depth]);
            }
            return;
        }
        let j = node / self.hold;
        let dt = self.grid.dt();
        let end = (node + self.hold).min(big_n);
        let (d, q) = (self.d, self.q);
        for c in 0..self.controls.count(j) {
            self.nodes += 1;
            let u = self.controls.candidate(j, c);
            let (head, tail) = self.states.split_at_mut(depth + 1);
            let next = &mut tail[0];
            next.copy_from_slice(&head[depth]);
            let mut running = 0.0;
            for s in 0..self.paths {
                let x = &mut next[s * d..(s + 1) * d];
                for k in node..end {
                    let t = self.grid.node(k);
                    running += self.model.running_cost(t, x, u) * dt;
                    self.model.drift(t, x, u, &mut self.drift);
                    if self.noise.is_empty() {
                        for a in 0..d {
                            x[a] += self.drift[a] * dt;
                        }
                    } else {
                        let off = (s * self.steps + (k - self.start)) * q;
                        self.model.diffusion_apply(
                            t,
                            x,
                            u,
                            &self.noise[off..off + q],
                            &mut self.scratch,
                        );
                        for a in 0..d {
                            x[a] += self.drift[a] * dt + self.scratch[a];
                        }
                    }
                }
            }
            self.choice[depth] = c;
            self.descend(depth + 1, end, acc + running / self.paths as f64);
        }
    }
}

/// Exhaustive search over the control-grid tree from `(t_n, x0)`, with
/// decisions every `cfg.hold` fine steps.
pub fn dp_plan(
    model: &dyn ControlledModel,
    grid: &TimeGrid,
    n: usize,
    x0: &[f64],
    controls: &ControlGrid,
    cfg: &DpConfig,
    rng: &mut RngStream,
) -> Result<DpPlan> {
    const OP: &str = "dp_plan";
    let dims = model.dims();
    check_len(OP, "state", dims.d, x0.len())?;
    check_len(OP, "control dimension", dims.m, controls.control_dim())?;
    if cfg.hold == 0 {
        return Err(Error::Config("dp hold must be at least 1".into()));
    }
    let big_n = grid.steps();
    if n >= big_n || !n.is_multiple_of(cfg.hold) {
        return Err(Error::Argument {
            op: OP,
            msg: format!("start node {n} is not a decision node before {big_n}"),
        });
    }
    let needed = big_n.div_ceil(cfg.hold);
    check_len(OP, "control grid decisions", needed, controls.decisions())?;
    let first = n / cfg.hold;
    let depth = needed - first;
    let paths = cfg.noise_samples.max(1);
    let widest = (first..needed)
        .map(|j| controls.count(j))
        .max()
        .unwrap_or(1);
    let projected = dp_projected_nodes(widest, depth) * paths as f64;
    if projected > cfg.budget {
        return Err(Error::Resource {
            projected,
            budget: cfg.budget,
        });
    }
    let steps = big_n - n;
    let mut noise = Vec::new();
    if cfg.noise_samples > 0 {
        noise = vec![0.0; paths * steps * dims.q];
        rng.fill_standard_normal(&mut noise);
        let sq = grid.dt().sqrt();
        noise.iter_mut().for_each(|v| *v *= sq);
    }
    let mut root = Vec::with_capacity(paths * dims.d);
    for _ in 0..paths {
        root.extend_from_slice(x0);
    }
    let mut search = Search {
        model,
        grid,
        controls,
        hold: cfg.hold,
        paths,
        d: dims.d,
        q: dims.q,
        noise,
        steps,
        start: n,
        states: (0..=depth)
            .map(|k| {
                if k == 0 {
                    root.clone()
                } else {
                    vec![0.0; root.len()]
                }
            })
            .collect(),
        scratch: vec![0.0; dims.d],
        drift: vec![0.0; dims.d],
        choice: vec![0; depth],
        best: Vec::with_capacity(depth),
        best_cost: f64::INFINITY,
        nodes: 0,
    };
    search.descend(0, n, 0.0);
    if !search.best_cost.is_finite() {
        return Err(Error::NumericBlowup { op: OP, index: n });
    }
    let controls_out = search
        .best
        .iter()
        .enumerate()
        .flat_map(|(k, &c)| controls.candidate(first + k, c).to_vec())
        .collect();
    Ok(DpPlan {
        start: n,
        controls: controls_out,
        cost: search.best_cost,
        nodes: search.nodes,
    })
}

/// Receding-horizon controller that re-plans by tree search from the filter
/// mean (or the exact state when no filter is attached) at every decision.
#[derive(Debug, Clone)]
pub struct DpController {
    pub controls: ControlGrid,
    pub config: DpConfig,
    pub nodes: u64,
}

impl DpController {
    pub fn new(controls: ControlGrid, config: DpConfig) -> Self {
        Self {
            controls,
            config,
            nodes: 0,
        }
    }
}

impl Controller for DpController {
    fn control(
        &mut self,
        model: &dyn ControlledModel,
        grid: &TimeGrid,
        n: usize,
        filter: Option<&dyn StateFilter>,
        truth: &[f64],
        rng: &mut RngStream,
    ) -> Result<Vec<f64>> {
        let x = match filter {
            Some(f) => f.estimate(),
            None => truth.to_vec(),
        };
        let plan = dp_plan(model, grid, n, &x, &self.controls, &self.config, rng)?;
        self.nodes += plan.nodes;
        Ok(plan.controls[..self.controls.control_dim()].to_vec())
    }
}

/// Outcome of a closed-loop tree-search run.
#[derive(Debug, Clone)]
pub struct DpRun {
    pub record: RunRecord,
    pub nodes: u64,
    pub wall_clock: Duration,
}

/// Runs the tree-search controller in closed loop.
pub fn dp_baseline(
    model: &dyn ControlledModel,
    truth: &mut Truth,
    filter: Option<&mut dyn StateFilter>,
    controls: ControlGrid,
    config: DpConfig,
    grid: &TimeGrid,
    streams: &mut LoopStreams,
) -> Result<DpRun> {
    let started = Instant::now();
    let hold = config.hold;
    let mut ctrl = DpController::new(controls, config);
    let record = run_closed_loop(model, truth, filter, &mut ctrl, grid, hold, streams)?;
    Ok(DpRun {
        record,
        nodes: ctrl.nodes,
        wall_clock: started.elapsed(),
    })
}
