//! Reference solutions used to validate the filter and controller.

pub mod dp;
pub mod dubins;
pub mod heat;
pub mod lq;

pub use dp::{
    dp_baseline, dp_plan, dp_projected_nodes, ControlGrid, DpConfig, DpController, DpPlan, DpRun,
};
pub use dubins::{dubins_reference, dubins_reference_speed, dubins_reference_velocity};
pub use heat::{
    heat_discretize, heat_forcing, heat_initial_profile, heat_optimal_control, riccati_solve,
    HeatSystem, RiccatiSolution,
};
pub use lq::{
    coupling_matrix, lq_costate, lq_exact_control, lq_fbode_solve, FbodeScheme, FbodeSolution,
    LqSpec,
};
