use crate::error::Result;
use crate::oracle::heat::{heat_discretize, HeatSystem};
use crate::sde::model::{ControlledModel, Dims, ObservationNoise};

/// Discretised heat equation `dP = (A P + B u + C f(t)) dt + σ dW`, observed
/// through `sin(P) + η`, with cost `½∫ r|P|² + q|u|² dt + ½ k|P_T|²`.
#[derive(Debug, Clone)]
pub struct HeatModel {
    pub system: HeatSystem,
    pub sigma: f64,
    pub state_weight: f64,
    pub control_weight: f64,
    pub terminal_weight: f64,
    n: usize,
    /// Nonzero entries `(row, col, value)` of `A`.
    entries: Vec<(usize, usize, f64)>,
    b_diag: Vec<f64>,
    c_diag: Vec<f64>,
    trace: f64,
    noise: ObservationNoise,
}

impl HeatModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(a: f64, b: f64, c: f64, d: f64, n: usize, sigma: f64, obs_std: f64) -> Result<Self> {
        let system = heat_discretize(a, b, c, d, n)?;
        let mut entries = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = system.a[(i, j)];
                if v != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        Ok(Self {
            n,
            trace: system.a.trace(),
            b_diag: system.b.diagonal().iter().copied().collect(),
            c_diag: system.c.diagonal().iter().copied().collect(),
            entries,
            system,
            sigma,
            state_weight: 1.0,
            control_weight: 1.0,
            terminal_weight: 1.0,
            noise: ObservationNoise::isotropic(n, obs_std * obs_std)?,
        })
    }

    pub fn nodes(&self) -> usize {
        self.n
    }
}

impl ControlledModel for HeatModel {
    fn dims(&self) -> Dims {
        let n = self.n;
        Dims {
            d: n,
            m: n,
            p: n,
            q: n,
        }
    }

    fn drift(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        let tt = t * (1.0 - t);
        let h = self.system.h;
        for i in 0..self.n {
            let xi = i as f64 * h;
            out[i] = self.b_diag[i] * u[i] + self.c_diag[i] * xi * (1.0 - xi) * tt;
        }
        for &(i, j, v) in &self.entries {
            out[i] += v * x[j];
        }
    }

    fn diffusion(&self, _t: f64, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        let n = self.n;
        out[..n * n].fill(0.0);
        for i in 0..n {
            out[i * n + i] = self.sigma;
        }
    }

    fn diffusion_apply(&self, _t: f64, _x: &[f64], _u: &[f64], w: &[f64], out: &mut [f64]) {
        for (o, wi) in out.iter_mut().zip(w) {
            *o = self.sigma * wi;
        }
    }

    fn drift_divergence(&self, _t: f64, _x: &[f64], _u: &[f64]) -> f64 {
        self.trace
    }

    fn drift_x_vjp(&self, _t: f64, _x: &[f64], _u: &[f64], y: &[f64], out: &mut [f64]) {
        out[..self.n].fill(0.0);
        for &(i, j, v) in &self.entries {
            out[j] += v * y[i];
        }
    }

    fn drift_u_vjp(&self, _t: f64, _x: &[f64], _u: &[f64], y: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            out[i] = self.b_diag[i] * y[i];
        }
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

    fn running_cost(&self, _t: f64, x: &[f64], u: &[f64]) -> f64 {
        let px: f64 = x.iter().map(|v| v * v).sum();
        let pu: f64 = u.iter().map(|v| v * v).sum();
        0.5 * (self.state_weight * px + self.control_weight * pu)
    }

    fn running_cost_x(&self, _t: f64, x: &[f64], _u: &[f64], out: &mut [f64]) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.state_weight * xi;
        }
    }

    fn running_cost_u(&self, _t: f64, _x: &[f64], u: &[f64], out: &mut [f64]) {
        for (o, ui) in out.iter_mut().zip(u) {
            *o = self.control_weight * ui;
        }
    }

    fn terminal_cost(&self, x: &[f64]) -> f64 {
        0.5 * self.terminal_weight * x.iter().map(|v| v * v).sum::<f64>()
    }

    fn terminal_cost_x(&self, x: &[f64], out: &mut [f64]) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.terminal_weight * xi;
        }
    }
}
