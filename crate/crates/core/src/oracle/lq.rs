use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::sde::grid::TimeGrid;

/// Linear-quadratic problem `dY = A(u − r(t)) dt + σ diag(B u) dW` with cost
/// `½∫ (Y−Y*)ᵀR(Y−Y*) + uᵀKu dt + ½ Y_TᵀQY_T`, built around a closed-form
/// optimal trajectory.
///
/// The reference is constructed from a vector function `J(t)` whose entries
/// are `t²/2, sin t, t³/3, cos 2πt, sinh t, ln(1+t), tan t, arctan t, t,
/// e^{t−T}` (cycled when `d > 10`). With `B = R = K = Q = I` and
/// `β_t = 1 + σ² + σ²(T − t)`:
///
/// * the optimal trajectory is `X(t) = (α_t/σ²) A² (J(T) − X_T)` where
///   `α_t = ln(β_0 / β_t)` and `X_T = (I + cA²)⁻¹ cA² J(T)`, `c = α_T/σ²`;
/// * the tracking target is `Y*(t) = X(t) + J'(t)`;
/// * the shift is `r(t) = A r̂(t)` with `r̂(t) = −J(t)/β_t`;
/// * the costate is `p(t) = X_T − (J(T) − J(t))` and `u*(t) = −A p(t)/β_t`.
#[derive(Debug, Clone)]
pub struct LqSpec {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub sigma: f64,
    pub horizon: f64,
    a2: DMatrix<f64>,
    x_terminal: DVector<f64>,
}

fn check_spd(name: &str, m: &DMatrix<f64>, d: usize) -> Result<()> {
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::Config(format!(
            "{name} must be {d}x{d}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.abs().max().max(1.0);
    if (m - m.transpose()).abs().max() > 1e-12 * scale {
        return Err(Error::Config(format!("{name} must be symmetric")));
    }
    if m.clone().cholesky().is_none() {
        return Err(Error::Config(format!("{name} must be positive definite")));
    }
    Ok(())
}

/// Matrix with `diag` on the diagonal and `off` elsewhere.
pub fn coupling_matrix(d: usize, diag: f64, off: f64) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| if i == j { diag } else { off })
}

impl LqSpec {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        r: DMatrix<f64>,
        k: DMatrix<f64>,
        q: DMatrix<f64>,
        sigma: f64,
        horizon: f64,
    ) -> Result<Self> {
        let d = a.nrows();
        if d == 0 {
            return Err(Error::Config("LQ dimension must be positive".into()));
        }
        for (name, m) in [("A", &a), ("B", &b), ("R", &r), ("K", &k), ("Q", &q)] {
            check_spd(name, m, d)?;
        }
        if !(sigma >= 0.0 && sigma.is_finite()) || !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Config("LQ needs sigma >= 0 and horizon > 0".into()));
        }
        let a2 = &a * &a;
        let mut spec = Self {
            a,
            b,
            r,
            k,
            q,
            sigma,
            horizon,
            a2,
            x_terminal: DVector::zeros(d),
        };
        let c = spec.path_factor(horizon);
        let lhs = DMatrix::identity(d, d) + &spec.a2 * c;
        let rhs = &spec.a2 * spec.j_vec(horizon) * c;
        spec.x_terminal = lhs
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Config("terminal state system is singular".into()))?;
        Ok(spec)
    }

    /// Benchmark with `A` = 1 on the diagonal and 0.2 elsewhere, and
    /// identity `B, R, K, Q`.
    pub fn benchmark(d: usize, sigma: f64, horizon: f64) -> Result<Self> {
        let id = DMatrix::identity(d, d);
        Self::new(
            coupling_matrix(d, 1.0, 0.2),
            id.clone(),
            id.clone(),
            id.clone(),
            id,
            sigma,
            horizon,
        )
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn beta(&self, t: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        1.0 + s2 + s2 * (self.horizon - t)
    }

    pub fn alpha(&self, t: f64) -> f64 {
        (self.beta(0.0) / self.beta(t)).ln()
    }

    /// `∫_0^t ds/β_s`, equal to `α_t/σ²` and to `t` when `σ = 0`.
    pub fn path_factor(&self, t: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        let ratio = t / self.beta(t);
        if s2 == 0.0 {
            ratio
        } else {
            (s2 * ratio).ln_1p() / s2
        }
    }

    pub fn j_entry(&self, i: usize, t: f64) -> f64 {
        use std::f64::consts::PI;
        match i % 10 {
            0 => t * t / 2.0,
            1 => t.sin(),
            2 => t.powi(3) / 3.0,
            3 => (2.0 * PI * t).cos(),
            4 => t.sinh(),
            5 => t.ln_1p(),
            6 => t.tan(),
            7 => t.atan(),
            8 => t,
            _ => (t - self.horizon).exp(),
        }
    }

    pub fn dj_entry(&self, i: usize, t: f64) -> f64 {
        use std::f64::consts::PI;
        match i % 10 {
            0 => t,
            1 => t.cos(),
            2 => t * t,
            3 => -2.0 * PI * (2.0 * PI * t).sin(),
            4 => t.cosh(),
            5 => 1.0 / (1.0 + t),
            6 => 1.0 / t.cos().powi(2),
            7 => 1.0 / (1.0 + t * t),
            8 => 1.0,
            _ => (t - self.horizon).exp(),
        }
    }

    /// `J(t)`.
    pub fn j_vec(&self, t: f64) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| self.j_entry(i, t))
    }

    /// `J'(t) = Y*(t) − X(t)`.
    pub fn dj_vec(&self, t: f64) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| self.dj_entry(i, t))
    }

    pub fn terminal_state(&self) -> &DVector<f64> {
        &self.x_terminal
    }

    /// Closed-form optimal trajectory from `X_0 = 0`.
    pub fn exact_state(&self, t: f64) -> DVector<f64> {
        &self.a2 * (self.j_vec(self.horizon) - &self.x_terminal) * self.path_factor(t)
    }

    /// Tracking target `Y*(t)`.
    pub fn target(&self, t: f64) -> DVector<f64> {
        self.exact_state(t) + self.dj_vec(t)
    }

    /// Drift shift `r(t) = A r̂(t)`.
    pub fn shift(&self, t: f64) -> DVector<f64> {
        &self.a * self.j_vec(t) * (-1.0 / self.beta(t))
    }

    /// Closed-form costate along the optimal trajectory from `X_0 = 0`.
    pub fn exact_costate(&self, t: f64) -> DVector<f64> {
        &self.x_terminal - (self.j_vec(self.horizon) - self.j_vec(t))
    }

    /// `σ²BᵀRB(T−t) + K + σ²BᵀQB`.
    pub fn control_weight(&self, t: f64) -> DMatrix<f64> {
        let s2 = self.sigma * self.sigma;
        let bt = self.b.transpose();
        &bt * &self.r * &self.b * (s2 * (self.horizon - t)) + &self.k + &bt * &self.q * &self.b * s2
    }
}

/// `u*(t) = −[σ²BᵀRB(T−t) + K + σ²BᵀQB]⁻¹ A p(t)`.
pub fn lq_exact_control(spec: &LqSpec, t: f64, p: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("lq_exact_control", "p", spec.dim(), p.len())?;
    let w = spec.control_weight(t);
    let rhs = -(&spec.a * p);
    w.lu().solve(&rhs).ok_or(Error::NumericBlowup {
        op: "lq_exact_control",
        index: 0,
    })
}

/// `p(t_n) = Q X_N + ∫_{t_n}^T R(X_s − Y*_s) ds` by the trapezoid rule on the
/// grid nodes `n..=N`; `states` holds `X` on those nodes row-major.
pub fn lq_costate(
    spec: &LqSpec,
    grid: &TimeGrid,
    n: usize,
    states: &[f64],
) -> Result<DVector<f64>> {
    let d = spec.dim();
    let nodes = grid.steps() + 1 - n;
    check_len("lq_costate", "states", nodes * d, states.len())?;
    let dt = grid.dt();
    let xn = DVector::from_column_slice(&states[(nodes - 1) * d..]);
    let mut p = &spec.q * xn;
    for k in (0..nodes).filter(|_| nodes > 1) {
        let i = n + k;
        let w = if k == 0 || k == nodes - 1 {
            0.5 * dt
        } else {
            dt
        };
        let x = DVector::from_column_slice(&states[k * d..(k + 1) * d]);
        p += &spec.r * (x - spec.target(grid.node(i))) * w;
    }
    Ok(p)
}

/// Solution of the discretised forward-backward system from `(t_n, y)`.
#[derive(Debug, Clone)]
pub struct FbodeSolution {
    pub start: usize,
    /// States on nodes `n..=N`, row-major.
    pub states: Vec<f64>,
    /// Controls on nodes `n..N`, row-major.
    pub controls: Vec<f64>,
    /// `‖M z − rhs‖_∞` of the assembled system at the computed solution.
    pub residual: f64,
}

impl FbodeSolution {
    pub fn control(&self, i: usize, d: usize) -> &[f64] {
        let k = i - self.start;
        &self.controls[k * d..(k + 1) * d]
    }
}

/// Quadrature used for the costate in the discretised forward-backward system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FbodeScheme {
    /// `p_k = Q X_N + Δt Σ_{i=k}^{N−1} R(X_i − Y*_i)` with the control weight at `t_k`.
    #[default]
    LeftSum,
    /// `p_k = Q X_N + Δt Σ_{i=k+1}^{N−1} R(X_i − Y*_i)` with the control weight at
    /// `t_{k+1}`: the exact minimiser of the Euler–Maruyama discretised cost.
    Discrete,
}

/// Solves the discretised coupled system
///
/// ```text
/// X_{k+1} − X_k = Δt A (u_k − r_k),   u_k = −W⁻¹ A p_k,   X_n = y
/// ```
///
/// with `p_k` given by `scheme`, as one dense linear system in
/// `X_{n+1}, …, X_N`.
pub fn lq_fbode_solve(
    spec: &LqSpec,
    grid: &TimeGrid,
    n: usize,
    y: &[f64],
    scheme: FbodeScheme,
) -> Result<FbodeSolution> {
    const OP: &str = "lq_fbode_solve";
    let d = spec.dim();
    check_len(OP, "initial state", d, y.len())?;
    let big_n = grid.steps();
    if n >= big_n {
        return Err(Error::Argument {
            op: OP,
            msg: format!("start node {n} leaves no interval"),
        });
    }
    let dt = grid.dt();
    let shift = match scheme {
        FbodeScheme::LeftSum => 0,
        FbodeScheme::Discrete => 1,
    };
    let weight_time = |k: usize| grid.node((k + shift).min(big_n));
    let steps = big_n - n;
    let dim = steps * d;
    // unknown block j holds X_{n+1+j}
    let col = |i: usize| (i - n - 1) * d;
    let mut mat = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    let y0 = DVector::from_column_slice(y);
    let targets: Vec<DVector<f64>> = (n..big_n).map(|i| spec.target(grid.node(i))).collect();
    let mut gains = Vec::with_capacity(steps);
    for k in n..big_n {
        let w = spec.control_weight(weight_time(k));
        let winv_a = w
            .lu()
            .solve(&spec.a)
            .ok_or_else(|| Error::Config("control weight is singular".into()))?;
        // G_k = Δt A W_k⁻¹ A
        let g = &spec.a * winv_a * dt;
        gains.push(g);
    }
    for (row_blk, k) in (n..big_n).enumerate() {
        let r0 = row_blk * d;
        let g = &gains[row_blk];
        let gq = g * &spec.q;
        let gr = g * &spec.r * dt;
        // X_{k+1}
        for a in 0..d {
            mat[(r0 + a, col(k + 1) + a)] += 1.0;
        }
        // −X_k
        if k > n {
            for a in 0..d {
                mat[(r0 + a, col(k) + a)] -= 1.0;
            }
        }
        // + G_k Q X_N
        let mut blk = mat.view_mut((r0, col(big_n)), (d, d));
        blk += &gq;
        // + G_k Δt R Σ_{i=k}^{N−1} X_i
        let mut forcing = DVector::<f64>::zeros(d);
        for i in (k + shift)..big_n {
            if i > n {
                let mut blk = mat.view_mut((r0, col(i)), (d, d));
                blk += &gr;
            }
            forcing += &targets[i - n];
        }
        let mut b = &gr * forcing - &spec.a * spec.shift(grid.node(k)) * dt;
        if k == n {
            b += &y0;
            if shift == 0 {
                b -= &gr * &y0;
            }
        }
        rhs.rows_mut(r0, d).copy_from(&b);
    }
    let sol = mat
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Config("fbode system is singular; refine the grid".into()))?;
    let residual = (&mat * &sol - &rhs).amax();
    let mut states = Vec::with_capacity((steps + 1) * d);
    states.extend_from_slice(y);
    states.extend(sol.iter());
    let state = |i: usize| DVector::from_column_slice(&states[(i - n) * d..(i - n + 1) * d]);
    let xn = state(big_n);
    let mut controls = Vec::with_capacity(steps * d);
    let mut tail = DVector::<f64>::zeros(d);
    let mut ps = vec![DVector::<f64>::zeros(d); steps];
    for i in (n..big_n).rev() {
        if shift == 0 {
            tail += &spec.r * (state(i) - &targets[i - n]) * dt;
        }
        ps[i - n] = &spec.q * &xn + &tail;
        if shift == 1 {
            tail += &spec.r * (state(i) - &targets[i - n]) * dt;
        }
    }
    for k in n..big_n {
        let u = lq_exact_control(spec, weight_time(k), &ps[k - n])?;
        controls.extend(u.iter());
    }
    Ok(FbodeSolution {
        start: n,
        states,
        controls,
        residual,
    })
}
