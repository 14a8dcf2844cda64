//! Time grids, random streams, model abstraction and Euler–Maruyama paths.

pub mod grid;
pub mod model;
pub mod rng;
pub mod schedule;
pub mod simulate;

pub use grid::TimeGrid;
pub use model::{ControlledModel, Dims, ObservationNoise};
pub use rng::{streams, RngStream};
pub use schedule::{ControlBounds, ControlSchedule};
pub use simulate::{
    em_state_step, em_step_into, log_likelihood, resimulate_into, simulate_observation,
    simulate_state_path, simulate_with_noise, EmWorkspace, ObservationRecord, StatePath,
};
