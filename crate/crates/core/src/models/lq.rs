use smallvec::SmallVec;

use crate::error::Result;
use crate::oracle::lq::LqSpec;
use crate::sde::grid::TimeGrid;
use crate::sde::model::{ControlledModel, Dims, ObservationNoise};

type Buf = SmallVec<[f64; 16]>;

/// The linear-quadratic benchmark of [`LqSpec`] as a controlled diffusion
/// observed through `m = sin(Y) + η`.
///
/// The diffusion is `σ diag(B u)` with one Brownian component per state.
#[derive(Debug, Clone)]
pub struct LqModel {
    spec: LqSpec,
    d: usize,
    a: Vec<f64>,
    a2: Vec<f64>,
    b: Weight,
    r: Weight,
    k: Weight,
    q: Weight,
    /// `A² (J(T) − X_T)`; the optimal path is this times `∫_0^t ds/β_s`.
    path_dir: Vec<f64>,
    noise: ObservationNoise,
    table: Option<NodeTable>,
}

/// Time-dependent terms tabulated on grid nodes.
#[derive(Debug, Clone)]
struct NodeTable {
    grid: TimeGrid,
    /// `A² J(t) / β_t` per node.
    forcing: Vec<f64>,
    /// `Y*(t)` per node.
    target: Vec<f64>,
}

/// Square matrix stored row-major, with the identity kept implicit.
#[derive(Debug, Clone)]
enum Weight {
    Identity,
    Dense(Vec<f64>),
}

impl Weight {
    fn from_matrix(m: &nalgebra::DMatrix<f64>) -> Self {
        if m.is_identity(0.0) {
            Weight::Identity
        } else {
            Weight::Dense(row_major(m))
        }
    }

    fn apply(&self, d: usize, x: &[f64], out: &mut [f64]) {
        match self {
            Weight::Identity => out[..d].copy_from_slice(&x[..d]),
            Weight::Dense(m) => matvec(m, d, x, out),
        }
    }

    fn apply_t(&self, d: usize, y: &[f64], out: &mut [f64]) {
        match self {
            Weight::Identity => out[..d].copy_from_slice(&y[..d]),
            Weight::Dense(m) => matvec_t(m, d, y, out),
        }
    }

    fn quad(&self, d: usize, x: &[f64]) -> f64 {
        match self {
            Weight::Identity => x[..d].iter().map(|v| v * v).sum(),
            Weight::Dense(m) => quad(m, d, x),
        }
    }
}

fn row_major(m: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn matvec(m: &[f64], d: usize, x: &[f64], out: &mut [f64]) {
    for i in 0..d {
        out[i] = m[i * d..(i + 1) * d]
            .iter()
            .zip(x)
            .map(|(a, b)| a * b)
            .sum();
    }
}

fn matvec_t(m: &[f64], d: usize, y: &[f64], out: &mut [f64]) {
    out[..d].fill(0.0);
    for i in 0..d {
        let yi = y[i];
        for j in 0..d {
            out[j] += m[i * d + j] * yi;
        }
    }
}

fn quad(m: &[f64], d: usize, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..d {
        let row: f64 = m[i * d..(i + 1) * d]
            .iter()
            .zip(x)
            .map(|(a, b)| a * b)
            .sum();
        acc += x[i] * row;
    }
    acc
}

impl LqModel {
    pub fn new(spec: LqSpec, obs_std: f64) -> Result<Self> {
        let d = spec.dim();
        let dir = &spec.a * &spec.a * (spec.j_vec(spec.horizon) - spec.terminal_state());
        Ok(Self {
            d,
            a: row_major(&spec.a),
            a2: row_major(&(&spec.a * &spec.a)),
            b: Weight::from_matrix(&spec.b),
            r: Weight::from_matrix(&spec.r),
            k: Weight::from_matrix(&spec.k),
            q: Weight::from_matrix(&spec.q),
            path_dir: dir.iter().copied().collect(),
            noise: ObservationNoise::isotropic(d, obs_std * obs_std)?,
            spec,
            table: None,
        })
    }

    /// Tabulates the time-dependent terms on the nodes of `grid`; other
    /// times are still evaluated directly.
    pub fn with_grid(mut self, grid: TimeGrid) -> Self {
        let d = self.d;
        let mut forcing = vec![0.0; grid.len() * d];
        let mut target = vec![0.0; grid.len() * d];
        for k in 0..grid.len() {
            let t = grid.node(k);
            self.forcing_direct(t, &mut forcing[k * d..(k + 1) * d]);
            self.target_direct(t, &mut target[k * d..(k + 1) * d]);
        }
        self.table = Some(NodeTable { grid, forcing, target });
        self
    }

    fn lookup(&self, t: f64) -> Option<(usize, &NodeTable)> {
        let table = self.table.as_ref()?;
        let g = &table.grid;
        let k = ((t - g.t0()) / g.dt()).round();
        if k < 0.0 || k as usize > g.steps() {
            return None;
        }
        let k = k as usize;
        ((g.node(k) - t).abs() <= 1e-12 * (1.0 + t.abs())).then_some((k, table))
    }

    fn forcing_direct(&self, t: f64, out: &mut [f64]) {
        let d = self.d;
        let inv_beta = 1.0 / self.spec.beta(t);
        let j: Buf = (0..d).map(|i| self.spec.j_entry(i, t) * inv_beta).collect();
        matvec(&self.a2, d, &j, out);
    }

    fn target_direct(&self, t: f64, out: &mut [f64]) {
        let factor = self.spec.path_factor(t);
        for i in 0..self.d {
            out[i] = factor * self.path_dir[i] + self.spec.dj_entry(i, t);
        }
    }

    pub fn spec(&self) -> &LqSpec {
        &self.spec
    }

    /// Writes the tracking target `Y*(t)` into `out`.
    pub fn target_into(&self, t: f64, out: &mut [f64]) {
        let d = self.d;
        match self.lookup(t) {
            Some((k, table)) => out[..d].copy_from_slice(&table.target[k * d..(k + 1) * d]),
            None => self.target_direct(t, out),
        }
    }

    fn error(&self, t: f64, x: &[f64]) -> Buf {
        let mut e: Buf = SmallVec::from_elem(0.0, self.d);
        self.target_into(t, &mut e);
        for (ei, xi) in e.iter_mut().zip(x) {
            *ei = xi - *ei;
        }
        e
    }
}

impl ControlledModel for LqModel {
    fn dims(&self) -> Dims {
        let d = self.d;
        Dims {
            d,
            m: d,
            p: d,
            q: d,
        }
    }

    fn drift(&self, t: f64, _x: &[f64], u: &[f64], out: &mut [f64]) {
        let d = self.d;
        // A(u − r) = A u + A² J / β
        match self.lookup(t) {
            Some((k, table)) => out[..d].copy_from_slice(&table.forcing[k * d..(k + 1) * d]),
            None => self.forcing_direct(t, out),
        }
        for i in 0..d {
            out[i] += self.a[i * d..(i + 1) * d].iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    fn diffusion(&self, _t: f64, _x: &[f64], u: &[f64], out: &mut [f64]) {
        let d = self.d;
        out[..d * d].fill(0.0);
        let mut bu: Buf = SmallVec::from_elem(0.0, d);
        self.b.apply(d, u, &mut bu);
        for i in 0..d {
            out[i * d + i] = self.spec.sigma * bu[i];
        }
    }

    fn diffusion_apply(&self, _t: f64, _x: &[f64], u: &[f64], w: &[f64], out: &mut [f64]) {
        self.b.apply(self.d, u, out);
        for (o, wi) in out.iter_mut().zip(w) {
            *o *= self.spec.sigma * wi;
        }
    }

    fn drift_divergence(&self, _t: f64, _x: &[f64], _u: &[f64]) -> f64 {
        0.0
    }

    fn drift_x_vjp(&self, _t: f64, _x: &[f64], _u: &[f64], _y: &[f64], out: &mut [f64]) {
        out[..self.d].fill(0.0);
    }

    fn drift_u_vjp(&self, _t: f64, _x: &[f64], _u: &[f64], y: &[f64], out: &mut [f64]) {
        matvec_t(&self.a, self.d, y, out);
    }

    fn diffusion_u_vjp(&self, _t: f64, _x: &[f64], _u: &[f64], z: &[f64], out: &mut [f64]) {
        let d = self.d;
        let diag: Buf = (0..d).map(|i| self.spec.sigma * z[i * d + i]).collect();
        self.b.apply_t(d, &diag, out);
    }

    fn diffusion_state_free(&self) -> bool {
        true
    }

    fn observe(&self, x: &[f64], out: &mut [f64]) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi.sin();
        }
    }

    fn obs_noise(&self) -> &ObservationNoise {
        &self.noise
    }

    fn running_cost(&self, t: f64, x: &[f64], u: &[f64]) -> f64 {
        let e = self.error(t, x);
        0.5 * self.r.quad(self.d, &e) + 0.5 * self.k.quad(self.d, u)
    }

    fn running_cost_x(&self, t: f64, x: &[f64], _u: &[f64], out: &mut [f64]) {
        let e = self.error(t, x);
        self.r.apply(self.d, &e, out);
    }

    fn running_cost_u(&self, _t: f64, _x: &[f64], u: &[f64], out: &mut [f64]) {
        self.k.apply(self.d, u, out);
    }

    fn terminal_cost(&self, x: &[f64]) -> f64 {
        0.5 * self.q.quad(self.d, x)
    }

    fn terminal_cost_x(&self, x: &[f64], out: &mut [f64]) {
        self.q.apply(self.d, x, out);
    }
}
