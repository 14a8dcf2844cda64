//! Concrete controlled models used by the experiments.

pub mod dubins;
pub mod heat;
pub mod lq;
pub mod scalar;

pub use dubins::DubinsModel;
pub use heat::HeatModel;
pub use lq::LqModel;
pub use scalar::ScalarModel;
