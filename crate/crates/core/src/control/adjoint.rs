use crate::error::{check_finite, check_len, Error, Result};
use crate::sde::model::{ControlledModel, Dims};
use crate::sde::schedule::ControlSchedule;
use crate::sde::simulate::StatePath;

/// Backward pair `(Ȳ_i, Z̄_i)` for `i = start..=N_T` along one simulated path.
/// `Z̄_i` is stored row-major as a `d × q` block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointPath {
    pub start: usize,
    pub d: usize,
    pub q: usize,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl AdjointPath {
    pub fn y(&self, i: usize) -> &[f64] {
        let k = i - self.start;
        &self.y[k * self.d..(k + 1) * self.d]
    }

    pub fn z(&self, i: usize) -> &[f64] {
        let k = i - self.start;
        let b = self.d * self.q;
        &self.z[k * b..(k + 1) * b]
    }
}

/// Per-node gradient `Ψ_i ∈ ℝ^m` for `i = start..=N_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub start: usize,
    pub m: usize,
    pub psi: Vec<f64>,
}

impl GradientSample {
    pub fn at(&self, i: usize) -> &[f64] {
        let k = i - self.start;
        &self.psi[k * self.m..(k + 1) * self.m]
    }
}

/// Scratch space for one adjoint solve and gradient assembly.
#[derive(Debug, Clone)]
pub(crate) struct AdjointBuffers {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub psi: Vec<f64>,
    tmp_d: Vec<f64>,
    acc_d: Vec<f64>,
    tmp_m: Vec<f64>,
}

impl AdjointBuffers {
    pub fn new(dims: Dims, nodes: usize) -> Self {
        Self {
            y: vec![0.0; nodes * dims.d],
            z: vec![0.0; nodes * dims.d * dims.q],
            psi: vec![0.0; nodes * dims.m],
            tmp_d: vec![0.0; dims.d],
            acc_d: vec![0.0; dims.d],
            tmp_m: vec![0.0; dims.m],
        }
    }

    pub fn resize(&mut self, dims: Dims, nodes: usize) {
        self.y.resize(nodes * dims.d, 0.0);
        self.z.resize(nodes * dims.d * dims.q, 0.0);
        self.psi.resize(nodes * dims.m, 0.0);
    }
}

/// Backward recursion on buffers sized for `path.nodes()` nodes.
pub(crate) fn adjoint_into<M: ControlledModel + ?Sized>(
    model: &M,
    path: &StatePath,
    schedule: &ControlSchedule,
    buf: &mut AdjointBuffers,
) -> Result<()> {
    const OP: &str = "solve_adjoint_samplewise";
    let Dims { d, q, .. } = model.dims();
    let grid = schedule.grid();
    let dt = grid.dt();
    let inv_sq = 1.0 / dt.sqrt();
    let start = path.start;
    let nodes = path.nodes();
    let last = start + nodes - 1;
    let bz = d * q;
    let skip_sigma_x = model.diffusion_state_free();

    let (ylast, _) = buf.y[(nodes - 1) * d..].split_at_mut(d);
    model.terminal_cost_x(path.terminal(), ylast);
    check_finite(OP, last, ylast)?;
    buf.z[(nodes - 1) * bz..nodes * bz].fill(0.0);

    for k in (0..nodes - 1).rev() {
        let i = start + k;
        let t1 = grid.node(i + 1);
        let x1 = path.state(i + 1);
        let u = schedule.at(i);
        let (y_lo, y_hi) = buf.y.split_at_mut((k + 1) * d);
        let y_next = &y_hi[..d];
        let y_cur = &mut y_lo[k * d..];

        if i + 1 == last {
            y_cur[..d].copy_from_slice(y_next);
        } else {
            model.drift_x_vjp(t1, x1, u, y_next, &mut buf.acc_d);
            if !skip_sigma_x {
                let z_next = &buf.z[(k + 1) * bz..(k + 2) * bz];
                model.diffusion_x_vjp(t1, x1, u, z_next, &mut buf.tmp_d);
                for (a, b) in buf.acc_d.iter_mut().zip(&buf.tmp_d) {
                    *a += b;
                }
            }
            model.running_cost_x(t1, x1, u, &mut buf.tmp_d);
            for j in 0..d {
                y_cur[j] = y_next[j] + (buf.acc_d[j] + buf.tmp_d[j]) * dt;
            }
            check_finite(OP, i, y_cur)?;
        }

        let w = path.noise(i);
        let z_cur = &mut buf.z[k * bz..(k + 1) * bz];
        for a in 0..d {
            let ya = y_next[a] * inv_sq;
            for b in 0..q {
                z_cur[a * q + b] = ya * w[b];
            }
        }
    }
    Ok(())
}

/// Gradient assembly on buffers already holding the adjoint.
pub(crate) fn gradient_into<M: ControlledModel + ?Sized>(
    model: &M,
    path: &StatePath,
    schedule: &ControlSchedule,
    buf: &mut AdjointBuffers,
) -> Result<()> {
    let Dims { d, m, q, .. } = model.dims();
    let grid = schedule.grid();
    let bz = d * q;
    for k in 0..path.nodes() {
        let i = path.start + k;
        let t = grid.node(i);
        let x = path.state(i);
        let u = schedule.at(i);
        let psi = &mut buf.psi[k * m..(k + 1) * m];
        model.drift_u_vjp(t, x, u, &buf.y[k * d..(k + 1) * d], psi);
        model.diffusion_u_vjp(t, x, u, &buf.z[k * bz..(k + 1) * bz], &mut buf.tmp_m);
        for (p, v) in psi.iter_mut().zip(&buf.tmp_m) {
            *p += v;
        }
        model.running_cost_u(t, x, u, &mut buf.tmp_m);
        for (p, v) in psi.iter_mut().zip(&buf.tmp_m) {
            *p += v;
        }
        check_finite("gradient_sample", i, psi)?;
    }
    Ok(())
}

fn check_alignment<M: ControlledModel + ?Sized>(
    op: &'static str,
    model: &M,
    path: &StatePath,
    schedule: &ControlSchedule,
) -> Result<()> {
    let dims = model.dims();
    check_len(op, "state dimension", dims.d, path.d)?;
    check_len(op, "noise dimension", dims.q, path.q)?;
    check_len(op, "control dimension", dims.m, schedule.control_dim())?;
    check_len(op, "path nodes", schedule.len(), path.nodes())?;
    if path.start != schedule.start() {
        return Err(Error::Argument {
            op,
            msg: format!(
                "path starts at node {} but schedule at node {}",
                path.start,
                schedule.start()
            ),
        });
    }
    Ok(())
}

/// Sample-wise backward recursion
///
/// ```text
/// Ȳ_N = h_x(S_N),  Z̄_N = 0
/// Ȳ_{N−1} = Ȳ_N
/// Ȳ_i = Ȳ_{i+1} + [b_xᵀ Ȳ_{i+1} + σ_xᵀ Z̄_{i+1} + f_x](t_{i+1}, S_{i+1}, u_i) Δt,  i < N − 1
/// Z̄_i = Ȳ_{i+1} ω_iᵀ / √Δt
/// ```
///
/// so that `Ψ` below is an unbiased sample of the gradient of the discrete
/// cost [`path_cost`] divided by `Δt`.
pub fn solve_adjoint_samplewise<M: ControlledModel + ?Sized>(
    model: &M,
    path: &StatePath,
    schedule: &ControlSchedule,
) -> Result<AdjointPath> {
    check_alignment("solve_adjoint_samplewise", model, path, schedule)?;
    let dims = model.dims();
    let mut buf = AdjointBuffers::new(dims, path.nodes());
    adjoint_into(model, path, schedule, &mut buf)?;
    Ok(AdjointPath {
        start: path.start,
        d: dims.d,
        q: dims.q,
        y: buf.y,
        z: buf.z,
    })
}

/// `Ψ_i = b_uᵀ Ȳ_i + σ_uᵀ Z̄_i + f_u` at `(t_i, S_i, u_i)` for every node.
pub fn gradient_sample<M: ControlledModel + ?Sized>(
    model: &M,
    path: &StatePath,
    adjoint: &AdjointPath,
    schedule: &ControlSchedule,
) -> Result<GradientSample> {
    check_alignment("gradient_sample", model, path, schedule)?;
    let dims = model.dims();
    check_len(
        "gradient_sample",
        "adjoint",
        path.nodes() * dims.d,
        adjoint.y.len(),
    )?;
    let mut buf = AdjointBuffers::new(dims, path.nodes());
    buf.y.copy_from_slice(&adjoint.y);
    buf.z.copy_from_slice(&adjoint.z);
    gradient_into(model, path, schedule, &mut buf)?;
    Ok(GradientSample {
        start: path.start,
        m: dims.m,
        psi: buf.psi,
    })
}

/// Discrete cost `Σ_{i<N} f(t_i, S_i, u_i) Δt + h(S_N)` of one path.
pub fn path_cost<M: ControlledModel + ?Sized>(
    model: &M,
    path: &StatePath,
    schedule: &ControlSchedule,
) -> f64 {
    let grid = schedule.grid();
    let dt = grid.dt();
    let last = path.start + path.nodes() - 1;
    let running: f64 = (path.start..last)
        .map(|i| model.running_cost(grid.node(i), path.state(i), schedule.at(i)) * dt)
        .sum();
    running + model.terminal_cost(path.terminal())
}
