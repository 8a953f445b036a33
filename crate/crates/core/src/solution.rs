use serde::{Deserialize, Serialize};

/// A minimizer together with the diagnostics of the run that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub x: Vec<f64>,
    pub value: f64,
    /// Terms left untruncated by the winning candidate, ascending.
    pub active: Vec<usize>,
    pub pieces_visited: usize,
    /// Full cycles for iterative solvers; 0 for the exact sweeps.
    pub iterations: usize,
    pub converged: bool,
}
