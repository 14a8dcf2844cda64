use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sde::rng::RngStream;

/// Dimensions of a controlled model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    /// State dimension.
    pub d: usize,
    /// Control dimension.
    pub m: usize,
    /// Observation dimension.
    pub p: usize,
    /// Brownian dimension.
    pub q: usize,
}

/// Gaussian observation noise `N(0, cov)` with a cached factorisation.
#[derive(Debug, Clone)]
pub struct ObservationNoise {
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    precision: DMatrix<f64>,
    log_norm: f64,
}

impl ObservationNoise {
    pub fn new(cov: DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() || cov.nrows() == 0 {
            return Err(Error::Config(format!(
                "observation covariance must be square and nonempty, got {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let asym = (&cov - cov.transpose()).abs().max();
        if !asym.is_finite() || asym > 1e-12 * cov.abs().max().max(1.0) {
            return Err(Error::Config(
                "observation covariance is not symmetric".into(),
            ));
        }
        let chol = cov.clone().cholesky().ok_or_else(|| {
            Error::Config("observation covariance is not positive definite".into())
        })?;
        let l = chol.l();
        let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::Config("observation covariance is singular".into()));
        }
        let p = cov.nrows() as f64;
        let precision = chol.inverse();
        Ok(Self {
            log_norm: -0.5 * (p * (2.0 * std::f64::consts::PI).ln() + log_det),
            cov,
            chol: l,
            precision,
        })
    }

    /// Isotropic noise with per-component variance `var`.
    pub fn isotropic(p: usize, var: f64) -> Result<Self> {
        Self::new(DMatrix::from_diagonal_element(p, p, var))
    }

    /// Diagonal noise from per-component variances.
    pub fn diagonal(vars: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(vars)))
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Same noise with the covariance multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.cov * factor)
    }

    /// Gaussian log density of a residual `m - g(x)`.
    pub fn log_density(&self, residual: &[f64]) -> f64 {
        let p = self.dim();
        let mut quad = 0.0;
        for i in 0..p {
            let mut row = 0.0;
            for j in 0..p {
                row += self.precision[(i, j)] * residual[j];
            }
            quad += residual[i] * row;
        }
        self.log_norm - 0.5 * quad
    }

    /// Adds a draw of the noise to `out`.
    pub fn add_sample(&self, rng: &mut RngStream, out: &mut [f64]) {
        let p = self.dim();
        let mut z = vec![0.0; p];
        rng.fill_standard_normal(&mut z);
        for i in 0..p {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += self.chol[(i, j)] * z[j];
            }
            out[i] += acc;
        }
    }
}

/// A controlled diffusion `dS = b dt + σ dW` observed through `m = g(S) + η`,
/// together with the running and terminal costs and the derivatives needed
/// by the adjoint solver.
///
/// Matrix-valued partials are exposed through vector-Jacobian products so
/// that large models never materialise Jacobians. The diffusion matrix is a
/// `d × q` row-major array.
pub trait ControlledModel: Send + Sync {
    fn dims(&self) -> Dims;

    fn drift(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]);

    /// Row-major `d × q` diffusion matrix.
    fn diffusion(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]);

    /// `out = σ(t, x, u) w` for `w ∈ ℝ^q`.
    fn diffusion_apply(&self, t: f64, x: &[f64], u: &[f64], w: &[f64], out: &mut [f64]) {
        let Dims { d, q, .. } = self.dims();
        let mut sig = vec![0.0; d * q];
        self.diffusion(t, x, u, &mut sig);
        for i in 0..d {
            out[i] = sig[i * q..(i + 1) * q]
                .iter()
                .zip(w)
                .map(|(a, b)| a * b)
                .sum();
        }
    }

    /// `Σ_i ∂b_i/∂x_i` at fixed control.
    fn drift_divergence(&self, t: f64, x: &[f64], u: &[f64]) -> f64;

    /// `out = b_x(t, x, u)ᵀ y` with `y ∈ ℝ^d`.
    fn drift_x_vjp(&self, t: f64, x: &[f64], u: &[f64], y: &[f64], out: &mut [f64]);

    /// `out = b_u(t, x, u)ᵀ y`, an element of `ℝ^m`.
    fn drift_u_vjp(&self, t: f64, x: &[f64], u: &[f64], y: &[f64], out: &mut [f64]);

    /// `out_k = Σ_{i,j} ∂σ_ij/∂x_k · z_ij` for row-major `z ∈ ℝ^{d×q}`.
    fn diffusion_x_vjp(&self, _t: f64, _x: &[f64], _u: &[f64], _z: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    /// `out_k = Σ_{i,j} ∂σ_ij/∂u_k · z_ij`.
    fn diffusion_u_vjp(&self, _t: f64, _x: &[f64], _u: &[f64], _z: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    /// True when σ does not depend on `x`; lets the adjoint skip that term.
    fn diffusion_state_free(&self) -> bool {
        false
    }

    fn observe(&self, x: &[f64], out: &mut [f64]);

    fn obs_noise(&self) -> &ObservationNoise;

    fn running_cost(&self, t: f64, x: &[f64], u: &[f64]) -> f64;

    fn running_cost_x(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]);

    fn running_cost_u(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]);

    fn terminal_cost(&self, x: &[f64]) -> f64;

    fn terminal_cost_x(&self, x: &[f64], out: &mut [f64]);
}

impl<M: ControlledModel + ?Sized> ControlledModel for &M {
    fn dims(&self) -> Dims {
        (**self).dims()
    }
    fn drift(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        (**self).drift(t, x, u, out)
    }
    fn diffusion(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        (**self).diffusion(t, x, u, out)
    }
    fn diffusion_apply(&self, t: f64, x: &[f64], u: &[f64], w: &[f64], out: &mut [f64]) {
        (**self).diffusion_apply(t, x, u, w, out)
    }
    fn drift_divergence(&self, t: f64, x: &[f64], u: &[f64]) -> f64 {
        (**self).drift_divergence(t, x, u)
    }
    fn drift_x_vjp(&self, t: f64, x: &[f64], u: &[f64], y: &[f64], out: &mut [f64]) {
        (**self).drift_x_vjp(t, x, u, y, out)
    }
    fn drift_u_vjp(&self, t: f64, x: &[f64], u: &[f64], y: &[f64], out: &mut [f64]) {
        (**self).drift_u_vjp(t, x, u, y, out)
    }
    fn diffusion_x_vjp(&self, t: f64, x: &[f64], u: &[f64], z: &[f64], out: &mut [f64]) {
        (**self).diffusion_x_vjp(t, x, u, z, out)
    }
    fn diffusion_u_vjp(&self, t: f64, x: &[f64], u: &[f64], z: &[f64], out: &mut [f64]) {
        (**self).diffusion_u_vjp(t, x, u, z, out)
    }
    fn diffusion_state_free(&self) -> bool {
        (**self).diffusion_state_free()
    }
    fn observe(&self, x: &[f64], out: &mut [f64]) {
        (**self).observe(x, out)
    }
    fn obs_noise(&self) -> &ObservationNoise {
        (**self).obs_noise()
    }
    fn running_cost(&self, t: f64, x: &[f64], u: &[f64]) -> f64 {
        (**self).running_cost(t, x, u)
    }
    fn running_cost_x(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        (**self).running_cost_x(t, x, u, out)
    }
    fn running_cost_u(&self, t: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        (**self).running_cost_u(t, x, u, out)
    }
    fn terminal_cost(&self, x: &[f64]) -> f64 {
        (**self).terminal_cost(x)
    }
    fn terminal_cost_x(&self, x: &[f64], out: &mut [f64]) {
        (**self).terminal_cost_x(x, out)
    }
}
