use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::sde::grid::TimeGrid;

/// Componentwise box `[lower, upper]` for admissible controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ControlBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len("ControlBounds::new", "upper", lower.len(), upper.len())?;
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::Config("control bounds need lower <= upper".into()));
        }
        Ok(Self { lower, upper })
    }

    /// Same interval `[lo, hi]` on every component.
    pub fn uniform(m: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; m], vec![hi; m])
    }

    pub fn project(&self, u: &mut [f64]) {
        for ((v, lo), hi) in u.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .all(|((v, lo), hi)| lo <= v && v <= hi)
    }
}

/// Piecewise-constant controls `u_i` on the nodes `i = start..=N_T`.
///
/// Values are stored contiguously, one row of length `m` per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    grid: TimeGrid,
    start: usize,
    m: usize,
    values: Vec<f64>,
}

impl ControlSchedule {
    /// Zero schedule over the horizon `start..=N_T`.
    pub fn zeros(grid: TimeGrid, start: usize, m: usize) -> Result<Self> {
        if start > grid.steps() {
            return Err(Error::Argument {
                op: "ControlSchedule::zeros",
                msg: format!("start index {start} beyond final node {}", grid.steps()),
            });
        }
        let len = grid.steps() + 1 - start;
        Ok(Self {
            grid,
            start,
            m,
            values: vec![0.0; len * m],
        })
    }

    /// Schedule holding the same value `u` at every node.
    pub fn constant(grid: TimeGrid, start: usize, u: &[f64]) -> Result<Self> {
        let mut s = Self::zeros(grid, start, u.len())?;
        for row in s.values.chunks_mut(u.len().max(1)) {
            row.copy_from_slice(u);
        }
        Ok(s)
    }

    /// Schedule from row-major values for nodes `start..=N_T`.
    pub fn from_values(grid: TimeGrid, start: usize, m: usize, values: Vec<f64>) -> Result<Self> {
        let s = Self::zeros(grid, start, m)?;
        check_len(
            "ControlSchedule::from_values",
            "values",
            s.values.len(),
            values.len(),
        )?;
        Ok(Self { values, ..s })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// First active node index `n`.
    pub fn start(&self) -> usize {
        self.start
    }

    pub fn control_dim(&self) -> usize {
        self.m
    }

    /// Number of active nodes, `N_T - n + 1`.
    pub fn len(&self) -> usize {
        self.grid.steps() + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Control at absolute node `i`.
    pub fn at(&self, i: usize) -> &[f64] {
        let k = i - self.start;
        &self.values[k * self.m..(k + 1) * self.m]
    }

    pub fn at_mut(&mut self, i: usize) -> &mut [f64] {
        let k = i - self.start;
        &mut self.values[k * self.m..(k + 1) * self.m]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Drops the first node, giving the warm start for the next time step.
    /// The last value is kept.
    pub fn shifted(&self) -> Self {
        if self.start == self.grid.steps() {
            return self.clone();
        }
        Self {
            grid: self.grid,
            start: self.start + 1,
            m: self.m,
            values: self.values[self.m..].to_vec(),
        }
    }

    /// Copy restricted to the horizon starting at node `start >= self.start`.
    pub fn from_node(&self, start: usize) -> Self {
        let k = start - self.start;
        Self {
            grid: self.grid,
            start,
            m: self.m,
            values: self.values[k * self.m..].to_vec(),
        }
    }

    pub fn project(&mut self, bounds: Option<&ControlBounds>) {
        if let Some(b) = bounds {
            for row in self.values.chunks_mut(self.m) {
                b.project(row);
            }
        }
    }
}
