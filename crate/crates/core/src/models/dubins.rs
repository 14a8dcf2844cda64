use crate::error::Result;
use crate::oracle::dubins::{dubins_reference, dubins_reference_speed};
use crate::sde::model::{ControlledModel, Dims, ObservationNoise};

/// 3-D Dubins airplane with state `(X, Y, Z, θ, φ)` and controls `(u, p)`:
///
/// ```text
/// dX = v cos θ cos φ dt + σ dW₁     dθ = u dt + σ² dB₁
/// dY = v cos θ sin φ dt + σ dW₂     dφ = p dt + σ² dB₂
/// dZ = v sin θ dt + σ dW₃
/// ```
///
/// Observed through three bearing angles from two ground platforms. The
/// cost tracks the reference helix.
#[derive(Debug, Clone)]
pub struct DubinsModel {
    pub speed: f64,
    pub sigma: f64,
    pub track_weight: f64,
    pub control_weight: f64,
    pub terminal_weight: f64,
    pub horizon: f64,
    noise: ObservationNoise,
}

impl DubinsModel {
    pub fn new(
        sigma: f64,
        obs_std: f64,
        track_weight: f64,
        control_weight: f64,
        terminal_weight: f64,
    ) -> Result<Self> {
        Ok(Self {
            speed: dubins_reference_speed(),
            sigma,
            track_weight,
            control_weight,
            terminal_weight,
            horizon: 1.0,
            noise: ObservationNoise::isotropic(3, obs_std * obs_std)?,
        })
    }

    /// Start of the reference at level flight with heading `arctan(1/2π)`.
    pub fn initial_state() -> [f64; 5] {
        let [x, y, z] = dubins_reference(0.0);
        [x, y, z, 0.0, (1.0 / (2.0 * std::f64::consts::PI)).atan()]
    }

    fn position_error(&self, t: f64, x: &[f64]) -> [f64; 3] {
        let r = dubins_reference(t);
        [x[0] - r[0], x[1] - r[1], x[2] - r[2]]
    }
}

impl ControlledModel for DubinsModel {
    fn dims(&self) -> Dims {
        Dims {
            d: 5,
            m: 2,
            p: 3,
            q: 5,
        }
    }

    fn drift(&self, _t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        let (st, ct) = x[3].sin_cos();
        let (sp, cp) = x[4].sin_cos();
        out[0] = self.speed * ct * cp;
        out[1] = self.speed * ct * sp;
        out[2] = self.speed * st;
        out[3] = u[0];
        out[4] = u[1];
    }

    fn diffusion(&self, _t: f64, _x: &[f64], _u: &[f64], out: &mut [f64]) {
        out[..25].fill(0.0);
        for i in 0..5 {
            out[i * 5 + i] = if i < 3 {
                self.sigma
            } else {
                self.sigma * self.sigma
            };
        }
    }

    fn diffusion_apply(&self, _t: f64, _x: &[f64], _u: &[f64], w: &[f64], out: &mut [f64]) {
        let s2 = self.sigma * self.sigma;
        for i in 0..5 {
            out[i] = if i < 3 { self.sigma } else { s2 } * w[i];
        }
    }

    fn drift_divergence(&self, _t: f64, _x: &[f64], _u: &[f64]) -> f64 {
        0.0
    }

    fn drift_x_vjp(&self, _t: f64, x: &[f64], _u: &[f64], y: &[f64], out: &mut [f64]) {
        let v = self.speed;
        let (st, ct) = x[3].sin_cos();
        let (sp, cp) = x[4].sin_cos();
        out[0] = 0.0;
        out[1] = 0.0;
        out[2] = 0.0;
        out[3] = -v * st * cp * y[0] - v * st * sp * y[1] + v * ct * y[2];
        out[4] = -v * ct * sp * y[0] + v * ct * cp * y[1];
    }

    fn drift_u_vjp(&self, _t: f64, _x: &[f64], _u: &[f64], y: &[f64], out: &mut [f64]) {
        out[0] = y[3];
        out[1] = y[4];
    }

    fn diffusion_state_free(&self) -> bool {
        true
    }

    fn observe(&self, x: &[f64], out: &mut [f64]) {
        let den = x[1] + 2.0;
        out[0] = ((x[0] + 3.0) / den).atan();
        out[1] = ((x[0] - 2.0) / den).atan();
        out[2] = ((x[2] - 2.0) / den).atan();
    }

    fn obs_noise(&self) -> &ObservationNoise {
        &self.noise
    }

    fn running_cost(&self, t: f64, x: &[f64], u: &[f64]) -> f64 {
        let e = self.position_error(t, x);
        let track: f64 = e.iter().map(|v| v * v).sum();
        0.5 * self.track_weight * track + 0.5 * self.control_weight * (u[0] * u[0] + u[1] * u[1])
    }

    fn running_cost_x(&self, t: f64, x: &[f64], _u: &[f64], out: &mut [f64]) {
        let e = self.position_error(t, x);
        for i in 0..3 {
            out[i] = self.track_weight * e[i];
        }
        out[3] = 0.0;
        out[4] = 0.0;
    }

    fn running_cost_u(&self, _t: f64, _x: &[f64], u: &[f64], out: &mut [f64]) {
        out[0] = self.control_weight * u[0];
        out[1] = self.control_weight * u[1];
    }

    fn terminal_cost(&self, x: &[f64]) -> f64 {
        let e = self.position_error(self.horizon, x);
        self.terminal_weight * e.iter().map(|v| v * v).sum::<f64>()
    }

    fn terminal_cost_x(&self, x: &[f64], out: &mut [f64]) {
        let e = self.position_error(self.horizon, x);
        for i in 0..3 {
            out[i] = 2.0 * self.terminal_weight * e[i];
        }
        out[3] = 0.0;
        out[4] = 0.0;
    }
}
