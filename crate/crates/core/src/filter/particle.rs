use std::io::Write;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::filter::bsde::log_likelihoods;
use crate::sde::model::ControlledModel;
use crate::sde::rng::RngStream;
use crate::sde::simulate::{em_step_into, EmWorkspace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParticleConfig {
    pub particles: usize,
    /// Resample when the effective sample size drops below this fraction of N.
    pub ess_fraction: f64,
}

impl Default for ParticleConfig {
    fn default() -> Self {
        Self {
            particles: 1000,
            ess_fraction: 0.5,
        }
    }
}

/// Weighted particle approximation of the filtering distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub d: usize,
    pub particles: Vec<f64>,
    /// Normalised weights, `Σ w_i = 1`.
    pub weights: Vec<f64>,
}

impl ParticleEnsemble {
    /// Equally weighted ensemble from row-major points.
    pub fn uniform(d: usize, particles: Vec<f64>) -> Result<Self> {
        if d == 0 || particles.is_empty() || !particles.len().is_multiple_of(d) {
            return Err(Error::Argument {
                op: "ParticleEnsemble::uniform",
                msg: "need a nonempty row-major particle array".into(),
            });
        }
        let n = particles.len() / d;
        Ok(Self {
            d,
            particles,
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.particles[i * self.d..(i + 1) * self.d]
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mu = vec![0.0; self.d];
        for (x, w) in self.particles.chunks(self.d).zip(&self.weights) {
            for (m, v) in mu.iter_mut().zip(x) {
                *m += w * v;
            }
        }
        mu
    }

    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["i".to_string()];
        header.extend((0..self.d).map(|j| format!("x_{j}")));
        header.push("weight".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![i.to_string()];
            row.extend(self.particle(i).iter().map(|v| v.to_string()));
            row.push(self.weights[i].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Indices selected by systematic resampling: one uniform offset and `n`
/// evenly spaced pointers into the weight CDF.
pub fn systematic_resample(weights: &[f64], n: usize, rng: &mut RngStream) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let step = total / n as f64;
    let mut u = rng.uniform() * step;
    let mut out = Vec::with_capacity(n);
    let mut acc = weights[0];
    let mut i = 0;
    for _ in 0..n {
        while u >= acc && i + 1 < weights.len() {
            i += 1;
            acc += weights[i];
        }
        out.push(i);
        u += step;
    }
    out
}

/// Bootstrap particle filter step: propagate with the model dynamics,
/// reweight by the likelihood, resample systematically when the effective
/// sample size falls below `ess_fraction · N`. When every likelihood
/// underflows the observation is skipped and the weights carry over.
pub fn pf_step<M: ControlledModel + ?Sized>(
    ensemble: &ParticleEnsemble,
    model: &M,
    t: f64,
    u_applied: &[f64],
    observation: &[f64],
    dt: f64,
    ess_fraction: f64,
    rng: &mut RngStream,
) -> Result<ParticleEnsemble> {
    const OP: &str = "pf_step";
    let dims = model.dims();
    check_len(OP, "state dimension", dims.d, ensemble.d)?;
    check_len(OP, "control", dims.m, u_applied.len())?;
    let mut moved = vec![0.0; ensemble.particles.len()];
    let mut ws = EmWorkspace::new(dims.d);
    let mut w = vec![0.0; dims.q];
    for (i, (x, y)) in ensemble
        .particles
        .chunks(dims.d)
        .zip(moved.chunks_mut(dims.d))
        .enumerate()
    {
        rng.fill_standard_normal(&mut w);
        em_step_into(model, t, x, u_applied, dt, &w, &mut ws, y);
        check_finite(OP, i, y)?;
    }
    let ll = log_likelihoods(model, model.obs_noise(), &moved, observation)?;
    let logw: Vec<f64> = ensemble
        .weights
        .iter()
        .zip(&ll)
        .map(|(w, l)| w.ln() + l)
        .collect();
    let lmax = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lmax.is_nan() {
        return Err(Error::NumericBlowup { op: OP, index: 0 });
    }
    let weights = if lmax >= f64::MIN_POSITIVE.ln() {
        let mut weights: Vec<f64> = logw.iter().map(|l| (l - lmax).exp()).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        weights
    } else {
        warn!("pf_step: every likelihood underflows; observation skipped");
        ensemble.weights.clone()
    };
    let mut out = ParticleEnsemble {
        d: dims.d,
        particles: moved,
        weights,
    };
    let n = out.len();
    if out.effective_sample_size() < ess_fraction * n as f64 {
        let idx = systematic_resample(&out.weights, n, rng);
        let mut particles = Vec::with_capacity(out.particles.len());
        for i in idx {
            particles.extend_from_slice(out.particle(i));
        }
        out.particles = particles;
        out.weights = vec![1.0 / n as f64; n];
    }
    Ok(out)
}
