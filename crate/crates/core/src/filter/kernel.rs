use std::f64::consts::PI;
use std::io::Write;

use crate::error::{check_len, Error, Result};
use crate::sde::rng::RngStream;

/// Weighted mixture of axis-aligned Gaussian kernels
/// `p(x) = Σ_k α_k exp(−Σ_j (x̂_kj − x_j)² / λ_kj²)`.
///
/// Kernel `k` has the shape of a normal density with standard deviation
/// `λ_kj / √2` along axis `j`, and integrates to `α_k Π_j √π λ_kj`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDensity {
    d: usize,
    centers: Vec<f64>,
    weights: Vec<f64>,
    bandwidths: Vec<f64>,
}

impl KernelDensity {
    pub fn new(
        d: usize,
        centers: Vec<f64>,
        weights: Vec<f64>,
        bandwidths: Vec<f64>,
    ) -> Result<Self> {
        const OP: &str = "KernelDensity::new";
        if d == 0 || weights.is_empty() {
            return Err(Error::Argument {
                op: OP,
                msg: "need d >= 1 and at least one kernel".into(),
            });
        }
        let k = weights.len();
        check_len(OP, "centers", k * d, centers.len())?;
        check_len(OP, "bandwidths", k * d, bandwidths.len())?;
        if weights.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::Argument {
                op: OP,
                msg: "kernel weights must be positive and finite".into(),
            });
        }
        if bandwidths.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::Argument {
                op: OP,
                msg: "bandwidths must be positive and finite".into(),
            });
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::NumericBlowup { op: OP, index: 0 });
        }
        Ok(Self {
            d,
            centers,
            weights,
            bandwidths,
        })
    }

    /// Single kernel equal to the normal density `N(mean, diag(std²))`.
    pub fn gaussian(mean: &[f64], std: &[f64]) -> Result<Self> {
        check_len("KernelDensity::gaussian", "std", mean.len(), std.len())?;
        let bw: Vec<f64> = std.iter().map(|s| s * 2f64.sqrt()).collect();
        let norm: f64 = bw.iter().map(|l| PI.sqrt() * l).product();
        Self::new(mean.len(), mean.to_vec(), vec![1.0 / norm], bw)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn num_kernels(&self) -> usize {
        self.weights.len()
    }

    pub fn center(&self, k: usize) -> &[f64] {
        &self.centers[k * self.d..(k + 1) * self.d]
    }

    pub fn bandwidth(&self, k: usize) -> &[f64] {
        &self.bandwidths[k * self.d..(k + 1) * self.d]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    /// Value of kernel `k` without its weight.
    pub fn kernel(&self, k: usize, x: &[f64]) -> f64 {
        let c = self.center(k);
        let l = self.bandwidth(k);
        let mut s = 0.0;
        for j in 0..self.d {
            let z = (x[j] - c[j]) / l[j];
            s += z * z;
        }
        (-s).exp()
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        (0..self.num_kernels())
            .map(|k| self.weights[k] * self.kernel(k, x))
            .sum()
    }

    /// Integral of kernel `k` including its weight.
    pub fn kernel_mass(&self, k: usize) -> f64 {
        self.weights[k]
            * self
                .bandwidth(k)
                .iter()
                .map(|l| PI.sqrt() * l)
                .product::<f64>()
    }

    /// Total integral `∫ p`.
    pub fn mass(&self) -> f64 {
        (0..self.num_kernels()).map(|k| self.kernel_mass(k)).sum()
    }

    /// Mean of the normalised mixture.
    pub fn mean(&self) -> Vec<f64> {
        let total = self.mass();
        let mut mu = vec![0.0; self.d];
        for k in 0..self.num_kernels() {
            let w = self.kernel_mass(k) / total;
            for (m, c) in mu.iter_mut().zip(self.center(k)) {
                *m += w * c;
            }
        }
        mu
    }

    /// Row-major `d × d` covariance of the normalised mixture.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.d;
        let total = self.mass();
        let mu = self.mean();
        let mut cov = vec![0.0; d * d];
        for k in 0..self.num_kernels() {
            let w = self.kernel_mass(k) / total;
            let c = self.center(k);
            let l = self.bandwidth(k);
            for i in 0..d {
                cov[i * d + i] += w * 0.5 * l[i] * l[i];
                for j in 0..d {
                    cov[i * d + j] += w * (c[i] - mu[i]) * (c[j] - mu[j]);
                }
            }
        }
        cov
    }

    /// Draws `n` points from the normalised mixture: a kernel is chosen with
    /// probability proportional to its mass, then a normal draw with
    /// standard deviation `λ_k / √2` is taken around its center.
    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Vec<f64> {
        let k_count = self.num_kernels();
        let mut cdf = Vec::with_capacity(k_count);
        let mut acc = 0.0;
        for k in 0..k_count {
            acc += self.kernel_mass(k);
            cdf.push(acc);
        }
        let mut out = vec![0.0; n * self.d];
        for row in out.chunks_mut(self.d) {
            let target = rng.uniform() * acc;
            let k = cdf.partition_point(|c| *c <= target).min(k_count - 1);
            let c = self.center(k);
            let l = self.bandwidth(k);
            for j in 0..self.d {
                row[j] = c[j] + l[j] * std::f64::consts::FRAC_1_SQRT_2 * rng.standard_normal();
            }
        }
        out
    }

    /// One CSV row per kernel: `k, center_0.., weight, bandwidth_0..`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["kernel".to_string()];
        header.extend((0..self.d).map(|j| format!("center_{j}")));
        header.push("weight".into());
        header.extend((0..self.d).map(|j| format!("bandwidth_{j}")));
        w.write_record(&header)?;
        for k in 0..self.num_kernels() {
            let mut row = vec![k.to_string()];
            row.extend(self.center(k).iter().map(|v| v.to_string()));
            row.push(self.weights[k].to_string());
            row.extend(self.bandwidth(k).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.bandwidths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_kernel_is_a_normalised_density() {
        let p = KernelDensity::gaussian(&[1.0], &[0.5]).unwrap();
        assert!((p.mass() - 1.0).abs() < 1e-14);
        let want = 1.0 / (0.5 * (2.0 * PI).sqrt());
        assert!((p.evaluate(&[1.0]) - want).abs() < 1e-14);
        assert!((p.covariance()[0] - 0.25).abs() < 1e-14);
    }

    #[test]
    fn rejects_nonpositive_parameters() {
        assert!(KernelDensity::new(1, vec![0.0], vec![0.0], vec![1.0]).is_err());
        assert!(KernelDensity::new(1, vec![0.0], vec![1.0], vec![-1.0]).is_err());
        assert!(KernelDensity::new(2, vec![0.0], vec![1.0], vec![1.0, 1.0]).is_err());
    }
}
