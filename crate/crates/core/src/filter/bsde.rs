use std::io::Write;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::filter::kernel::KernelDensity;
use crate::sde::grid::TimeGrid;
use crate::sde::model::{ControlledModel, ObservationNoise};
use crate::sde::rng::RngStream;
use crate::sde::simulate::{em_step_into, EmWorkspace};

/// Spatial sample points with attached approximate density values.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCloud {
    pub d: usize,
    /// Row-major `N × d` points.
    pub points: Vec<f64>,
    pub values: Vec<f64>,
}

impl SampleCloud {
    pub fn new(d: usize, points: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if d == 0 || values.is_empty() {
            return Err(Error::Argument {
                op: "SampleCloud::new",
                msg: "cloud needs d >= 1 and at least one point".into(),
            });
        }
        check_len("SampleCloud::new", "points", values.len() * d, points.len())?;
        Ok(Self { d, points, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    /// Unweighted sample mean of the points.
    pub fn mean(&self) -> Vec<f64> {
        let mut mu = vec![0.0; self.d];
        for row in self.points.chunks(self.d) {
            for (m, x) in mu.iter_mut().zip(row) {
                *m += x;
            }
        }
        let n = self.len() as f64;
        mu.iter_mut().for_each(|m| *m /= n);
        mu
    }

    /// One CSV row per point: `i, x_0.., value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["i".to_string()];
        header.extend((0..self.d).map(|j| format!("x_{j}")));
        header.push("value".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![i.to_string()];
            row.extend(self.point(i).iter().map(|v| v.to_string()));
            row.push(self.values[i].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Forward Euler–Maruyama move of every cloud point over one step.
pub fn propagate_cloud<M: ControlledModel + ?Sized>(
    model: &M,
    points: &[f64],
    t: f64,
    u: &[f64],
    dt: f64,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let dims = model.dims();
    check_len("propagate_cloud", "control", dims.m, u.len())?;
    if !points.len().is_multiple_of(dims.d) {
        return Err(Error::Shape {
            op: "propagate_cloud",
            what: "points",
            expected: dims.d * (points.len() / dims.d + 1),
            got: points.len(),
        });
    }
    let mut out = vec![0.0; points.len()];
    let mut ws = EmWorkspace::new(dims.d);
    let mut w = vec![0.0; dims.q];
    for (i, (x, y)) in points
        .chunks(dims.d)
        .zip(out.chunks_mut(dims.d))
        .enumerate()
    {
        rng.fill_standard_normal(&mut w);
        em_step_into(model, t, x, u, dt, &w, &mut ws, y);
        check_finite("propagate_cloud", i, y)?;
    }
    Ok(out)
}

/// Reusable buffers for the time-inverse sampling.
struct BackwardWorkspace {
    drift: Vec<f64>,
    noise: Vec<f64>,
    w: Vec<f64>,
    xt: Vec<f64>,
}

impl BackwardWorkspace {
    fn new(d: usize, q: usize) -> Self {
        Self {
            drift: vec![0.0; d],
            noise: vec![0.0; d],
            w: vec![0.0; q],
            xt: vec![0.0; d],
        }
    }

    fn draw<M: ControlledModel + ?Sized>(
        &mut self,
        model: &M,
        t: f64,
        x: &[f64],
        u: &[f64],
        dt: f64,
        rng: &mut RngStream,
    ) {
        rng.fill_standard_normal(&mut self.w);
        model.drift(t, x, u, &mut self.drift);
        model.diffusion_apply(t, x, u, &self.w, &mut self.noise);
        let sq = dt.sqrt();
        for j in 0..x.len() {
            self.xt[j] = x[j] - self.drift[j] * dt + self.noise[j] * sq;
        }
    }
}

/// One time-inverse draw `x − b(x)Δt + σ√Δt ω` anchored at `x`.
pub fn backward_sample<M: ControlledModel + ?Sized>(
    model: &M,
    t: f64,
    x: &[f64],
    u: &[f64],
    dt: f64,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let dims = model.dims();
    check_len("backward_sample", "x", dims.d, x.len())?;
    check_len("backward_sample", "control", dims.m, u.len())?;
    let mut ws = BackwardWorkspace::new(dims.d, dims.q);
    ws.draw(model, t, x, u, dt, rng);
    check_finite("backward_sample", 0, &ws.xt)?;
    Ok(ws.xt)
}

/// Fixed-point prediction settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub iterations: usize,
    pub tolerance: f64,
}

impl Default for FixedPoint {
    fn default() -> Self {
        Self {
            iterations: 20,
            tolerance: 1e-6,
        }
    }
}

fn predict_with<M, F>(
    model: &M,
    prev: &F,
    t: f64,
    x: &[f64],
    u: &[f64],
    dt: f64,
    fp: FixedPoint,
    ws: &mut BackwardWorkspace,
    rng: &mut RngStream,
) -> Result<f64>
where
    M: ControlledModel + ?Sized,
    F: Fn(&[f64]) -> f64,
{
    const OP: &str = "predict_density_value";
    let div = model.drift_divergence(t, x, u);
    let factor = dt * div.abs();
    if !(factor < 1.0) {
        return Err(Error::Instability { op: OP, factor });
    }
    let mut y = prev(x);
    let mut sum = 0.0;
    let mut last_step = f64::INFINITY;
    let mut growing = 0;
    for l in 1..=fp.iterations {
        ws.draw(model, t, x, u, dt, rng);
        sum += prev(&ws.xt);
        let next = sum / l as f64 - dt * div * y;
        if !next.is_finite() {
            return Err(Error::NumericBlowup { op: OP, index: l });
        }
        let step = (next - y).abs();
        if step > last_step && step > next.abs() {
            growing += 1;
            if growing >= 5 {
                return Err(Error::Instability { op: OP, factor });
            }
        } else {
            growing = 0;
        }
        last_step = step;
        y = next;
        if step <= fp.tolerance * y.abs() {
            break;
        }
    }
    Ok(y.max(0.0))
}

/// Predicted density value `Y_{n+1}(x)` from the previous density by the
/// fixed-point iteration `Y^{l+1} = Ê^{x,l}[p_n] − Δt div b(x) Y^l`, where
/// `Ê^{x,l}` averages `p_n` over the first `l` time-inverse draws.
pub fn predict_density_value<M, F>(
    model: &M,
    prev: &F,
    t: f64,
    x: &[f64],
    u: &[f64],
    dt: f64,
    fp: FixedPoint,
    rng: &mut RngStream,
) -> Result<f64>
where
    M: ControlledModel + ?Sized,
    F: Fn(&[f64]) -> f64,
{
    let dims = model.dims();
    check_len("predict_density_value", "x", dims.d, x.len())?;
    if fp.iterations == 0 {
        return Err(Error::Argument {
            op: "predict_density_value",
            msg: "need at least one fixed-point iteration".into(),
        });
    }
    let mut ws = BackwardWorkspace::new(dims.d, dims.q);
    predict_with(model, prev, t, x, u, dt, fp, &mut ws, rng)
}

/// Log-likelihood of `observation` at every point under `noise`.
pub fn log_likelihoods<M: ControlledModel + ?Sized>(
    model: &M,
    noise: &ObservationNoise,
    points: &[f64],
    observation: &[f64],
) -> Result<Vec<f64>> {
    let dims = model.dims();
    check_len("log_likelihoods", "observation", dims.p, observation.len())?;
    let mut r = vec![0.0; dims.p];
    Ok(points
        .chunks(dims.d)
        .map(|x| {
            model.observe(x, &mut r);
            for (ri, mi) in r.iter_mut().zip(observation) {
                *ri = mi - *ri;
            }
            noise.log_density(&r)
        })
        .collect())
}

/// Posterior values `ρ_i ∝ exp(ℓ_i) Y_i` from log-likelihoods `ℓ_i` and
/// predicted values `Y_i`.
///
/// Values are scaled by `1 / mean_j exp(ℓ_j)`, so that the importance
/// estimate of the mass with the predicted values as proposal equals one.
/// Computed in the log domain; ratios between points are exact.
pub fn bayes_update_logw(predicted: &[f64], loglik: &[f64]) -> Result<Vec<f64>> {
    const OP: &str = "bayes_update";
    check_len(OP, "log-likelihoods", predicted.len(), loglik.len())?;
    if let Some(i) = loglik.iter().position(|l| l.is_nan()) {
        return Err(Error::NumericBlowup { op: OP, index: i });
    }
    if !predicted.iter().any(|y| *y > 0.0) {
        return Err(Error::Degenerate { op: OP });
    }
    let lmax = loglik.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lmax >= f64::MIN_POSITIVE.ln()) {
        return Err(Error::Degenerate { op: OP });
    }
    let mean: f64 = loglik.iter().map(|l| (l - lmax).exp()).sum::<f64>() / loglik.len() as f64;
    let rho: Vec<f64> = predicted
        .iter()
        .zip(loglik)
        .map(|(y, l)| (l - lmax).exp() * y / mean)
        .collect();
    if !rho.iter().any(|r| *r > 0.0) {
        return Err(Error::Degenerate { op: OP });
    }
    Ok(rho)
}

/// Bayes correction of predicted values at `points` by the model likelihood.
pub fn bayes_update<M: ControlledModel + ?Sized>(
    model: &M,
    points: &[f64],
    predicted: &[f64],
    observation: &[f64],
) -> Result<Vec<f64>> {
    let ll = log_likelihoods(model, model.obs_noise(), points, observation)?;
    bayes_update_logw(predicted, &ll)
}

/// Indices of `k` distinct points drawn without replacement with
/// probabilities proportional to `weights` (Efraimidis–Spirakis keys).
/// Points of zero weight are taken only once the positive ones run out.
pub fn select_centers(weights: &[f64], k: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    if k > weights.len() {
        return Err(Error::Argument {
            op: "select_centers",
            msg: format!("cannot select {k} centers from {} points", weights.len()),
        });
    }
    let mut keyed: Vec<(bool, f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let u = rng.uniform().max(f64::MIN_POSITIVE);
            if *w > 0.0 {
                (true, u.ln() / w, i)
            } else {
                (false, u, i)
            }
        })
        .collect();
    keyed.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
    Ok(keyed.into_iter().take(k).map(|(_, _, i)| i).collect())
}

/// Stochastic-gradient settings for the kernel fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub iterations: usize,
    /// Dimensionless base rate for the weights.
    pub rate_alpha: f64,
    /// Dimensionless base rate for the bandwidths.
    pub rate_lambda: f64,
    pub alpha_min: f64,
    pub lambda_min: f64,
    /// Upper clamp on each kernel's standard deviation `λ/√2`, as a multiple
    /// of the cloud spread along that axis.
    pub lambda_max_spread: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            rate_alpha: 0.1,
            rate_lambda: 0.01,
            alpha_min: 1e-12,
            lambda_min: 1e-6,
            lambda_max_spread: 2.0,
        }
    }
}

/// Importance-weighted mean and per-axis standard deviation of the cloud.
fn weighted_moments(d: usize, points: &[f64], values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let total: f64 = values.iter().sum();
    let mut mu = vec![0.0; d];
    for (x, w) in points.chunks(d).zip(values) {
        for j in 0..d {
            mu[j] += w * x[j] / total;
        }
    }
    let mut var = vec![0.0; d];
    for (x, w) in points.chunks(d).zip(values) {
        for j in 0..d {
            let e = x[j] - mu[j];
            var[j] += w * e * e / total;
        }
    }
    (mu, var.into_iter().map(f64::sqrt).collect())
}

/// Starting mixture for the fit: kernels at the selected centers, bandwidth
/// `√2 · std · K^{−1/(d+4)}` per axis with `std` the spread of the points
/// under the `selection` weights, and kernel weights chosen so that the
/// mixture roughly interpolates the values at the centers.
pub fn initial_density(
    d: usize,
    points: &[f64],
    values: &[f64],
    selection: &[f64],
    centers: &[usize],
    lambda_min: f64,
    alpha_min: f64,
) -> Result<KernelDensity> {
    let k = centers.len();
    if k == 0 {
        return Err(Error::Argument {
            op: "initial_density",
            msg: "need at least one center".into(),
        });
    }
    let (_, std) = weighted_moments(d, points, selection);
    let shrink = 2f64.sqrt() * (k as f64).powf(-1.0 / (d as f64 + 4.0));
    let bw_row: Vec<f64> = std.iter().map(|s| (s * shrink).max(lambda_min)).collect();
    let mut c = Vec::with_capacity(k * d);
    for &i in centers {
        c.extend_from_slice(&points[i * d..(i + 1) * d]);
    }
    let bw: Vec<f64> = (0..k).flat_map(|_| bw_row.iter().cloned()).collect();
    let shape = KernelDensity::new(d, c.clone(), vec![1.0; k], bw.clone())?;
    let alpha: Vec<f64> = centers
        .iter()
        .enumerate()
        .map(|(a, &i)| {
            let overlap: f64 = (0..k).map(|b| shape.kernel(b, shape.center(a))).sum();
            (values[i] / overlap).max(alpha_min)
        })
        .collect();
    KernelDensity::new(d, c, alpha, bw)
}

/// Gradient of `(p(x) − target)²` with respect to every `α_k` and `λ_kj`.
pub fn loss_gradient(
    density: &KernelDensity,
    x: &[f64],
    target: f64,
    g_alpha: &mut [f64],
    g_lambda: &mut [f64],
) -> f64 {
    let d = density.dim();
    let k_count = density.num_kernels();
    let mut p = 0.0;
    for k in 0..k_count {
        let phi = density.kernel(k, x);
        g_alpha[k] = phi;
        p += density.weights()[k] * phi;
    }
    let e = p - target;
    for k in 0..k_count {
        let phi = g_alpha[k];
        let a = density.weights()[k];
        let c = density.center(k);
        let l = density.bandwidth(k);
        for j in 0..d {
            let diff = x[j] - c[j];
            g_lambda[k * d + j] = 2.0 * e * a * phi * 2.0 * diff * diff / (l[j] * l[j] * l[j]);
        }
        g_alpha[k] = 2.0 * e * phi;
    }
    e * e
}

/// Fits weights and bandwidths by single-sample SGD on the squared error
/// between the mixture and the cloud values. Training points are drawn with
/// probability proportional to `selection` and the rates decay as
/// `1/(1 + 4j/J)`.
pub fn fit_kernel_density(
    points: &[f64],
    values: &[f64],
    selection: &[f64],
    init: KernelDensity,
    cfg: &FitConfig,
    rng: &mut RngStream,
) -> Result<KernelDensity> {
    const OP: &str = "fit_kernel_density";
    let d = init.dim();
    check_len(OP, "points", values.len() * d, points.len())?;
    check_len(OP, "selection weights", values.len(), selection.len())?;
    if cfg.iterations == 0 || (cfg.rate_alpha == 0.0 && cfg.rate_lambda == 0.0) {
        return Ok(init);
    }
    let mut cdf = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    let mut acc2 = 0.0;
    for (v, w) in values.iter().zip(selection) {
        acc += w.max(0.0);
        acc2 += w.max(0.0) * v.max(0.0);
        cdf.push(acc);
    }
    if !(acc > 0.0 && acc2 > 0.0) {
        return Err(Error::Degenerate { op: OP });
    }
    let scale = acc2 / acc;
    let (_, spread) = weighted_moments(d, points, selection);
    let lam_rate: Vec<f64> = spread
        .iter()
        .map(|s| cfg.rate_lambda * s.max(cfg.lambda_min).powi(2) / (scale * scale))
        .collect();
    let lam_max: Vec<f64> = spread
        .iter()
        .map(|s| (cfg.lambda_max_spread * 2f64.sqrt() * s).max(cfg.lambda_min))
        .collect();
    let k_count = init.num_kernels();
    let mut density = init;
    let mut g_alpha = vec![0.0; k_count];
    let mut g_lambda = vec![0.0; k_count * d];
    let j_half = (cfg.iterations as f64 / 4.0).max(1.0);
    for j in 0..cfg.iterations {
        let target = rng.uniform() * acc;
        let i = cdf.partition_point(|c| *c <= target).min(values.len() - 1);
        let x = &points[i * d..(i + 1) * d];
        loss_gradient(&density, x, values[i], &mut g_alpha, &mut g_lambda);
        if g_alpha.iter().chain(&g_lambda).any(|g| !g.is_finite()) {
            return Err(Error::NumericBlowup { op: OP, index: j });
        }
        let decay = 1.0 / (1.0 + j as f64 / j_half);
        let (alpha, lambda) = density.params_mut();
        for k in 0..k_count {
            alpha[k] = (alpha[k] - cfg.rate_alpha * decay * g_alpha[k]).max(cfg.alpha_min);
            for c in 0..d {
                let idx = k * d + c;
                lambda[idx] = (lambda[idx] - lam_rate[c] * decay * g_lambda[idx])
                    .max(cfg.lambda_min)
                    .min(lam_max[c]);
            }
        }
    }
    Ok(density)
}

/// `n` fresh points drawn from the mixture, with their density values.
pub fn resample(density: &KernelDensity, n: usize, rng: &mut RngStream) -> SampleCloud {
    let points = density.sample(n, rng);
    let values = points
        .chunks(density.dim())
        .map(|x| density.evaluate(x))
        .collect();
    SampleCloud {
        d: density.dim(),
        points,
        values,
    }
}

/// Kernel-learning filter settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Cloud size `N`.
    pub samples: usize,
    /// Kernel count; `⌈√N⌉` when absent.
    pub kernels: Option<usize>,
    pub fixed_point_iterations: usize,
    pub fixed_point_tolerance: f64,
    pub fit: FitConfig,
    /// Covariance multiplier applied when every likelihood underflows.
    pub inflation_factor: f64,
    pub max_inflations: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            kernels: None,
            fixed_point_iterations: 20,
            fixed_point_tolerance: 1e-6,
            fit: FitConfig::default(),
            inflation_factor: 10.0,
            max_inflations: 3,
        }
    }
}

impl FilterConfig {
    pub fn kernel_count(&self) -> usize {
        self.kernels
            .unwrap_or_else(|| (self.samples as f64).sqrt().ceil() as usize)
            .clamp(1, self.samples)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.fixed_point_iterations == 0 {
            return Err(Error::Config(
                "filter needs samples >= 1 and fixed_point_iterations >= 1".into(),
            ));
        }
        if self.kernels.is_some_and(|k| k == 0 || k > self.samples) {
            return Err(Error::Config(
                "filter kernel count must lie in 1..=samples".into(),
            ));
        }
        if !(self.fit.alpha_min > 0.0 && self.fit.lambda_min > 0.0) {
            return Err(Error::Config("kernel clamps must be positive".into()));
        }
        Ok(())
    }
}

/// Filter state at time index `n`.
#[derive(Debug, Clone)]
pub struct FilterState {
    pub n: usize,
    pub density: KernelDensity,
    pub cloud: SampleCloud,
}

impl FilterState {
    /// State seeded with the prior density and a cloud drawn from it.
    pub fn from_prior(density: KernelDensity, samples: usize, rng: &mut RngStream) -> Self {
        let cloud = resample(&density, samples, rng);
        Self {
            n: 0,
            density,
            cloud,
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        self.density.mean()
    }
}

/// Advances the filter from `t_n` to `t_{n+1}`: propagate, predict, Bayes
/// correct, select centers, fit the mixture, resample.
pub fn filter_step<M: ControlledModel + ?Sized>(
    state: &FilterState,
    model: &M,
    grid: &TimeGrid,
    u_applied: &[f64],
    observation: &[f64],
    config: &FilterConfig,
    rng: &mut RngStream,
) -> Result<FilterState> {
    let dims = model.dims();
    check_len("filter_step", "control", dims.m, u_applied.len())?;
    check_len("filter_step", "observation", dims.p, observation.len())?;
    let n = state.n;
    let t = grid.node(n);
    let dt = grid.dt();
    let predicted_points = propagate_cloud(model, &state.cloud.points, t, u_applied, dt, rng)?;
    let fp = FixedPoint {
        iterations: config.fixed_point_iterations,
        tolerance: config.fixed_point_tolerance,
    };
    let prev = |x: &[f64]| state.density.evaluate(x);
    let mut ws = BackwardWorkspace::new(dims.d, dims.q);
    let predicted: Vec<f64> = predicted_points
        .chunks(dims.d)
        .map(|x| predict_with(model, &prev, t, x, u_applied, dt, fp, &mut ws, rng))
        .collect::<Result<_>>()?;

    let mut noise = model.obs_noise().clone();
    let mut attempt = 0;
    let values = loop {
        let ll = log_likelihoods(model, &noise, &predicted_points, observation)?;
        match bayes_update_logw(&predicted, &ll) {
            Ok(v) => break v,
            Err(Error::Degenerate { .. }) if attempt < config.max_inflations => {
                attempt += 1;
                warn!(
                    "filter step {}: every likelihood underflows; inflating observation covariance x{}",
                    n + 1,
                    config.inflation_factor.powi(attempt as i32)
                );
                noise = noise.scaled(config.inflation_factor)?;
            }
            Err(e) => return Err(e),
        }
    };

    // the cloud already follows the predicted density, so a point's share of
    // the posterior is its value relative to the prediction
    let mass: Vec<f64> = values
        .iter()
        .zip(&predicted)
        .map(|(r, y)| if *y > 0.0 { r / y } else { 0.0 })
        .collect();
    let k = config.kernel_count();
    let centers = select_centers(&mass, k, rng)?;
    let init = initial_density(
        dims.d,
        &predicted_points,
        &values,
        &mass,
        &centers,
        config.fit.lambda_min,
        config.fit.alpha_min,
    )?;
    let density = fit_kernel_density(&predicted_points, &values, &mass, init, &config.fit, rng)?;
    let cloud = resample(&density, config.samples, rng);
    check_finite("filter_step", n + 1, &cloud.points)?;
    Ok(FilterState {
        n: n + 1,
        density,
        cloud,
    })
}
