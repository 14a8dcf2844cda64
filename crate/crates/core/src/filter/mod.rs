//! Kernel-learning backward-SDE filter and a bootstrap particle baseline.

pub mod bsde;
pub mod kernel;
pub mod particle;

pub use bsde::{
    backward_sample, bayes_update, bayes_update_logw, filter_step, fit_kernel_density,
    initial_density, log_likelihoods, loss_gradient, predict_density_value, propagate_cloud,
    resample, select_centers, FilterConfig, FilterState, FitConfig, FixedPoint, SampleCloud,
};
pub use kernel::KernelDensity;
pub use particle::{pf_step, systematic_resample, ParticleConfig, ParticleEnsemble};
