//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

/// Scalar Kalman filter for `x' = f x + w`, `w ~ N(0, q)`, `m = h x + v`,
/// `v ~ N(0, r)`.
#[derive(Debug, Clone, Copy)]
pub struct Kalman1 {
    pub f: f64,
    pub q: f64,
    pub h: f64,
    pub r: f64,
    pub mean: f64,
    pub var: f64,
}

impl Kalman1 {
    pub fn predict(&mut self) {
        self.mean *= self.f;
        self.var = self.f * self.f * self.var + self.q;
    }

    pub fn update(&mut self, m: f64) {
        let s = self.h * self.h * self.var + self.r;
        let gain = self.var * self.h / s;
        self.mean += gain * (m - self.h * self.mean);
        self.var *= 1.0 - gain * self.h;
    }

    /// Fixed point of the predict/update variance recursion.
    pub fn stationary_posterior_var(&self) -> f64 {
        let mut k = *self;
        for _ in 0..10_000 {
            k.var = k.f * k.f * k.var + k.q;
            let s = k.h * k.h * k.var + k.r;
            k.var *= 1.0 - k.var * k.h * k.h / s;
        }
        k.var
    }

    pub fn predicted_density(&self, x: f64) -> f64 {
        let m = self.f * self.mean;
        let v = self.f * self.f * self.var + self.q;
        (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
    }
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Checks every analytic derivative a model exposes against central
/// differences at `(t, x, u)`; returns the worst relative error.
pub fn model_derivative_error<M: dfc_core::sde::ControlledModel>(
    model: &M,
    t: f64,
    x: &[f64],
    u: &[f64],
    seed: u64,
) -> f64 {
    use rand::{Rng, SeedableRng};
    let dims = model.dims();
    let (d, m, q) = (dims.d, dims.m, dims.q);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let z: Vec<f64> = (0..d * q).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut compare = |a: f64, b: f64| {
        let err = (a - b).abs() / (1.0 + a.abs().max(b.abs()));
        worst = worst.max(err);
    };
    let drift_dot = |x: &[f64], u: &[f64]| {
        let mut b = vec![0.0; d];
        model.drift(t, x, u, &mut b);
        b.iter().zip(&y).map(|(a, c)| a * c).sum::<f64>()
    };
    let sig_dot = |x: &[f64], u: &[f64]| {
        let mut s = vec![0.0; d * q];
        model.diffusion(t, x, u, &mut s);
        s.iter().zip(&z).map(|(a, c)| a * c).sum::<f64>()
    };
    let mut gx = vec![0.0; d];
    let mut gu = vec![0.0; m];
    let mut sx = vec![0.0; d];
    let mut su = vec![0.0; m];
    let mut fx = vec![0.0; d];
    let mut fu = vec![0.0; m];
    let mut hx = vec![0.0; d];
    model.drift_x_vjp(t, x, u, &y, &mut gx);
    model.drift_u_vjp(t, x, u, &y, &mut gu);
    model.diffusion_x_vjp(t, x, u, &z, &mut sx);
    model.diffusion_u_vjp(t, x, u, &z, &mut su);
    model.running_cost_x(t, x, u, &mut fx);
    model.running_cost_u(t, x, u, &mut fu);
    model.terminal_cost_x(x, &mut hx);
    let mut div = 0.0;
    for k in 0..d {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += h;
        xm[k] -= h;
        compare(gx[k], (drift_dot(&xp, u) - drift_dot(&xm, u)) / (2.0 * h));
        compare(sx[k], (sig_dot(&xp, u) - sig_dot(&xm, u)) / (2.0 * h));
        compare(
            fx[k],
            (model.running_cost(t, &xp, u) - model.running_cost(t, &xm, u)) / (2.0 * h),
        );
        compare(
            hx[k],
            (model.terminal_cost(&xp) - model.terminal_cost(&xm)) / (2.0 * h),
        );
        let mut bp = vec![0.0; d];
        let mut bm = vec![0.0; d];
        model.drift(t, &xp, u, &mut bp);
        model.drift(t, &xm, u, &mut bm);
        div += (bp[k] - bm[k]) / (2.0 * h);
    }
    compare(model.drift_divergence(t, x, u), div);
    for k in 0..m {
        let mut up = u.to_vec();
        let mut um = u.to_vec();
        up[k] += h;
        um[k] -= h;
        compare(gu[k], (drift_dot(x, &up) - drift_dot(x, &um)) / (2.0 * h));
        compare(su[k], (sig_dot(x, &up) - sig_dot(x, &um)) / (2.0 * h));
        compare(
            fu[k],
            (model.running_cost(t, x, &up) - model.running_cost(t, x, &um)) / (2.0 * h),
        );
    }
    let w: Vec<f64> = (0..q).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut applied = vec![0.0; d];
    model.diffusion_apply(t, x, u, &w, &mut applied);
    let mut s = vec![0.0; d * q];
    model.diffusion(t, x, u, &mut s);
    for i in 0..d {
        let direct: f64 = (0..q).map(|j| s[i * q + j] * w[j]).sum();
        compare(applied[i], direct);
    }
    worst
}

/// Scalar OU benchmark `dX = −X dt + 0.5 dW`, `m = X + η`, `η ~ N(0, 0.1)`,
/// with the matching discrete Kalman filter, step and step count.
pub fn kalman_setup() -> (dfc_core::models::ScalarModel, Kalman1, f64, usize) {
    let dt = 0.05;
    let model = dfc_core::models::ScalarModel::linear(-1.0, 0.5, 0.1).unwrap();
    let kf = Kalman1 {
        f: 1.0 - dt,
        q: 0.25 * dt,
        h: 1.0,
        r: 0.1,
        mean: 0.0,
        var: 0.25,
    };
    (model, kf, dt, 50)
}

/// Observations of one truth path of the Kalman benchmark.
pub fn kalman_observations(
    model: &dfc_core::models::ScalarModel,
    dt: f64,
    steps: usize,
    seed: u64,
) -> Vec<f64> {
    use dfc_core::sde::{simulate_observation, RngStream};
    let mut rng = RngStream::new(seed, 1);
    let mut orng = RngStream::new(seed, 2);
    let mut x = rng.standard_normal() * 0.5;
    (0..steps)
        .map(|_| {
            x = x * (1.0 - dt) + 0.5 * dt.sqrt() * rng.standard_normal();
            simulate_observation(model, &[x], &mut orng).unwrap()[0]
        })
        .collect()
}
