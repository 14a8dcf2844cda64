//! Sample-wise stochastic-maximum-principle control solver and the
//! closed-loop driver.

pub mod adjoint;
pub mod closed_loop;
pub mod sgd;

pub use adjoint::{
    gradient_sample, path_cost, solve_adjoint_samplewise, AdjointPath, GradientSample,
};
pub use closed_loop::{
    run_closed_loop, Controller, FnController, JumpEvent, KernelFilter, LoopStreams, NoiseWindow,
    ParticleFilter, RunRecord, SgdController, StateFilter, Truth,
};
pub use sgd::{
    gradient_statistics, optimize_control_at, optimize_control_batch, sgd_update, BatchConfig,
    ControllerConfig, StateSampler, UniformCloud, WeightedCloud,
};
