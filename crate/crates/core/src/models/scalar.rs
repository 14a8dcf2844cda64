use crate::error::Result;
use crate::sde::model::{ControlledModel, Dims, ObservationNoise};

/// One-dimensional controlled diffusion
///
/// ```text
/// dS = (a S + c sin S + bu u + b0) dt + (s0 + sx S + su u) dW
/// m  = gx S + gs sin S + η
/// f  = ½ qf (S − x_ref)² + ½ k u²,   h = ½ qh (S − x_term)²
/// ```
///
/// Small enough for exhaustive oracle checks and rich enough to exercise
/// every adjoint term.
#[derive(Debug, Clone)]
pub struct ScalarModel {
    pub a: f64,
    pub c: f64,
    pub bu: f64,
    pub b0: f64,
    pub s0: f64,
    pub sx: f64,
    pub su: f64,
    pub gx: f64,
    pub gs: f64,
    pub qf: f64,
    pub x_ref: f64,
    pub k: f64,
    pub qh: f64,
    pub x_term: f64,
    noise: ObservationNoise,
}

impl ScalarModel {
    /// Linear-Gaussian model `dS = a S dt + s0 dW`, `m = S + η` with no
    /// control effect and zero costs.
    pub fn linear(a: f64, s0: f64, obs_var: f64) -> Result<Self> {
        Ok(Self {
            a,
            c: 0.0,
            bu: 0.0,
            b0: 0.0,
            s0,
            sx: 0.0,
            su: 0.0,
            gx: 1.0,
            gs: 0.0,
            qf: 0.0,
            x_ref: 0.0,
            k: 0.0,
            qh: 0.0,
            x_term: 0.0,
            noise: ObservationNoise::isotropic(1, obs_var)?,
        })
    }

    pub fn with_obs_var(mut self, var: f64) -> Result<Self> {
        self.noise = ObservationNoise::isotropic(1, var)?;
        Ok(self)
    }

    fn sigma(&self, x: f64, u: f64) -> f64 {
        self.s0 + self.sx * x + self.su * u
    }
}

impl ControlledModel for ScalarModel {
    fn dims(&self) -> Dims {
        Dims {
            d: 1,
            m: 1,
            p: 1,
            q: 1,
        }
    }

    fn drift(&self, _t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        out[0] = self.a * x[0] + self.c * x[0].sin() + self.bu * u[0] + self.b0;
    }

    fn diffusion(&self, _t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        out[0] = self.sigma(x[0], u[0]);
    }

    fn diffusion_apply(&self, _t: f64, x: &[f64], u: &[f64], w: &[f64], out: &mut [f64]) {
        out[0] = self.sigma(x[0], u[0]) * w[0];
    }

    fn drift_divergence(&self, _t: f64, x: &[f64], _u: &[f64]) -> f64 {
        self.a + self.c * x[0].cos()
    }

    fn drift_x_vjp(&self, t: f64, x: &[f64], u: &[f64], y: &[f64], out: &mut [f64]) {
        out[0] = self.drift_divergence(t, x, u) * y[0];
    }

    fn drift_u_vjp(&self, _t: f64, _x: &[f64], _u: &[f64], y: &[f64], out: &mut [f64]) {
        out[0] = self.bu * y[0];
    }

    fn diffusion_x_vjp(&self, _t: f64, _x: &[f64], _u: &[f64], z: &[f64], out: &mut [f64]) {
        out[0] = self.sx * z[0];
    }

    fn diffusion_u_vjp(&self, _t: f64, _x: &[f64], _u: &[f64], z: &[f64], out: &mut [f64]) {
        out[0] = self.su * z[0];
    }

    fn diffusion_state_free(&self) -> bool {
        self.sx == 0.0
    }

    fn observe(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.gx * x[0] + self.gs * x[0].sin();
    }

    fn obs_noise(&self) -> &ObservationNoise {
        &self.noise
    }

    fn running_cost(&self, _t: f64, x: &[f64], u: &[f64]) -> f64 {
        let e = x[0] - self.x_ref;
        0.5 * self.qf * e * e + 0.5 * self.k * u[0] * u[0]
    }

    fn running_cost_x(&self, _t: f64, x: &[f64], _u: &[f64], out: &mut [f64]) {
        out[0] = self.qf * (x[0] - self.x_ref);
    }

    fn running_cost_u(&self, _t: f64, _x: &[f64], u: &[f64], out: &mut [f64]) {
        out[0] = self.k * u[0];
    }

    fn terminal_cost(&self, x: &[f64]) -> f64 {
        let e = x[0] - self.x_term;
        0.5 * self.qh * e * e
    }

    fn terminal_cost_x(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.qh * (x[0] - self.x_term);
    }
}
