use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::sde::grid::TimeGrid;

/// Method-of-lines discretisation of `P_t = a P_xx + b P_x + c u + d f` on
/// `[0, 1]` with `n` nodes.
#[derive(Debug, Clone)]
pub struct HeatSystem {
    pub a: DMatrix<f64>,
    /// Control input matrix, diagonal with zero boundary entries.
    pub b: DMatrix<f64>,
    /// Forcing input matrix, diagonal with zero boundary entries.
    pub c: DMatrix<f64>,
    pub h: f64,
}

/// Central differences for `P_xx`, backward differences for `P_x`.
pub fn heat_discretize(a: f64, b: f64, c: f64, d: f64, n: usize) -> Result<HeatSystem> {
    if n < 3 {
        return Err(Error::Config(format!(
            "heat grid needs at least 3 nodes, got {n}"
        )));
    }
    let h = 1.0 / (n - 1) as f64;
    let diff = a / (h * h);
    let adv = b / h;
    let mut am = DMatrix::zeros(n, n);
    for i in 0..n {
        am[(i, i)] = -2.0 * diff + adv;
        if i > 0 {
            am[(i, i - 1)] = diff - adv;
        }
        if i + 1 < n {
            am[(i, i + 1)] = diff;
        }
    }
    let interior = |v: f64| {
        DMatrix::from_fn(
            n,
            n,
            |i, j| if i == j && i > 0 && i + 1 < n { v } else { 0.0 },
        )
    };
    Ok(HeatSystem {
        a: am,
        b: interior(c),
        c: interior(d),
        h,
    })
}

/// Riccati matrices `G(t_k)` on every node of a grid.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub grid: TimeGrid,
    pub g: Vec<DMatrix<f64>>,
}

impl RiccatiSolution {
    pub fn at(&self, k: usize) -> &DMatrix<f64> {
        &self.g[k]
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Integrates `dG/dt = −AᵀG − GA + G B R⁻¹ Bᵀ G − Q`, `G(T) = K`, backward
/// in time with classical RK4 on the grid, symmetrising after every step.
pub fn riccati_solve(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
    q: &DMatrix<f64>,
    k: &DMatrix<f64>,
    grid: &TimeGrid,
) -> Result<RiccatiSolution> {
    const OP: &str = "riccati_solve";
    let n = a.nrows();
    check_len(OP, "A columns", n, a.ncols())?;
    check_len(OP, "B rows", n, b.nrows())?;
    check_len(OP, "R size", b.ncols(), r.nrows())?;
    check_len(OP, "Q size", n, q.nrows())?;
    check_len(OP, "K size", n, k.nrows())?;
    let rinv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Config("Riccati control weight R is singular".into()))?;
    let s = b * rinv * b.transpose();
    let at = a.transpose();
    let rhs = |g: &DMatrix<f64>| -(&at * g) - g * a + g * &s * g - q;
    let dt = grid.dt();
    let steps = grid.steps();
    let mut g = vec![DMatrix::zeros(n, n); steps + 1];
    let mut cur = k.clone();
    symmetrize(&mut cur);
    g[steps] = cur.clone();
    for idx in (0..steps).rev() {
        // reverse time: dG/ds = −rhs(G)
        let k1 = -rhs(&cur);
        let k2 = -rhs(&(&cur + &k1 * (0.5 * dt)));
        let k3 = -rhs(&(&cur + &k2 * (0.5 * dt)));
        let k4 = -rhs(&(&cur + &k3 * dt));
        cur += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        symmetrize(&mut cur);
        if cur.iter().any(|v| !v.is_finite() || v.abs() > 1e150) {
            return Err(Error::NumericBlowup { op: OP, index: idx });
        }
        g[idx] = cur.clone();
    }
    Ok(RiccatiSolution { grid: *grid, g })
}

/// `u* = (−R⁻¹BᵀG P − d f) / c`.
pub fn heat_optimal_control(
    g: &DMatrix<f64>,
    p: &DVector<f64>,
    f: &DVector<f64>,
    r: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: f64,
    d: f64,
) -> Result<DVector<f64>> {
    const OP: &str = "heat_optimal_control";
    check_len(OP, "state", g.nrows(), p.len())?;
    check_len(OP, "forcing", b.ncols(), f.len())?;
    if c == 0.0 {
        return Err(Error::Argument {
            op: OP,
            msg: "control coefficient c must be nonzero".into(),
        });
    }
    let feedback = r
        .clone()
        .lu()
        .solve(&(b.transpose() * g * p))
        .ok_or(Error::NumericBlowup { op: OP, index: 0 })?;
    Ok((-feedback - f * d) / c)
}

/// Initial heat profile `100 x (1 − x) e^{−x}` on the nodes.
pub fn heat_initial_profile(n: usize) -> Vec<f64> {
    let h = 1.0 / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let x = i as f64 * h;
            100.0 * x * (1.0 - x) * (-x).exp()
        })
        .collect()
}

/// Forcing `x (1 − x) t (1 − t)` on the nodes.
pub fn heat_forcing(n: usize, t: f64) -> Vec<f64> {
    let h = 1.0 / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let x = i as f64 * h;
            x * (1.0 - x) * t * (1.0 - t)
        })
        .collect()
}
