use nalgebra::{DMatrix, DVector};

use crate::control::RunRecord;
use crate::error::{check_len, Result};
use crate::oracle::{
    dubins_reference, heat_forcing, heat_optimal_control, lq_fbode_solve, FbodeScheme, HeatSystem,
    LqSpec, RiccatiSolution,
};

/// Time-grid L2 norm `sqrt(Σ_n Δt |a_n − b_n|²)` over two `N × m` control
/// tables.
pub fn control_l2_distance(dt: f64, a: &[f64], b: &[f64]) -> Result<f64> {
    check_len("control_l2_distance", "control table", a.len(), b.len())?;
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    Ok((dt * s).sqrt())
}

/// Time-grid L2 norm of one `N × m` control table.
pub fn control_l2_norm(dt: f64, a: &[f64]) -> f64 {
    (dt * a.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

/// LQ optimal control at every node, re-solved from the true state there.
pub fn lq_oracle_controls(spec: &LqSpec, rec: &RunRecord) -> Result<Vec<f64>> {
    let steps = rec.grid.steps();
    let mut out = Vec::with_capacity(steps * rec.m);
    for n in 0..steps {
        let sol = lq_fbode_solve(spec, &rec.grid, n, rec.truth_at(n), FbodeScheme::Discrete)?;
        out.extend_from_slice(&sol.controls[..rec.m]);
    }
    Ok(out)
}

/// Riccati feedback control of the heat system along the recorded truth.
pub fn heat_oracle_controls(
    system: &HeatSystem,
    riccati: &RiccatiSolution,
    state_weight: &DMatrix<f64>,
    c: f64,
    d: f64,
    rec: &RunRecord,
) -> Result<Vec<f64>> {
    let steps = rec.grid.steps();
    let n = rec.d;
    let mut out = Vec::with_capacity(steps * rec.m);
    for k in 0..steps {
        let p = DVector::from_column_slice(rec.truth_at(k));
        let f = DVector::from_vec(heat_forcing(n, rec.grid.node(k)));
        let u = heat_optimal_control(riccati.at(k), &p, &f, state_weight, &system.b, c, d)?;
        out.extend(u.iter());
    }
    Ok(out)
}

/// RMS distance between the true position and the reference helix over all
/// nodes.
pub fn tracking_rmse(rec: &RunRecord) -> f64 {
    tracking_rmse_over(rec, 0..rec.grid.len())
}

/// Tracking RMSE restricted to the nodes `range`.
pub fn tracking_rmse_over(rec: &RunRecord, range: std::ops::Range<usize>) -> f64 {
    let nodes = range.len().max(1);
    let s: f64 = range
        .map(|k| {
            let r = dubins_reference(rec.grid.node(k));
            let x = rec.truth_at(k);
            (0..3).map(|i| (x[i] - r[i]).powi(2)).sum::<f64>()
        })
        .sum();
    (s / nodes as f64).sqrt()
}

/// Distance from the final true position to the reference end point.
pub fn terminal_distance(rec: &RunRecord) -> f64 {
    let n = rec.grid.steps();
    let r = dubins_reference(rec.grid.node(n));
    let x = rec.truth_at(n);
    (0..3).map(|i| (x[i] - r[i]).powi(2)).sum::<f64>().sqrt()
}

/// RMS estimation error of the first `axes` state components over the
/// nodes `range`.
pub fn estimation_rmse(rec: &RunRecord, axes: usize, range: std::ops::Range<usize>) -> f64 {
    let count = range.len().max(1);
    let s: f64 = range
        .map(|k| {
            let x = rec.truth_at(k);
            let e = rec.estimate_at(k);
            (0..axes).map(|i| (x[i] - e[i]).powi(2)).sum::<f64>()
        })
        .sum();
    (s / count as f64).sqrt()
}

/// Per-axis RMS estimation error of the first `axes` components over the
/// nodes `range`.
pub fn axis_rmse(rec: &RunRecord, axes: usize, range: std::ops::Range<usize>) -> Vec<f64> {
    let count = range.len().max(1) as f64;
    let mut acc = vec![0.0; axes];
    for k in range {
        let x = rec.truth_at(k);
        let e = rec.estimate_at(k);
        for i in 0..axes {
            acc[i] += (x[i] - e[i]).powi(2);
        }
    }
    acc.into_iter().map(|s| (s / count).sqrt()).collect()
}

/// Sample summary of one metric across repeats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Standard error of the mean (zero for a single value).
    pub std_error: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std_error = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Some(Self {
            count: values.len(),
            mean,
            std_error,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}
