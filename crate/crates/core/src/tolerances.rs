//! Numerical tolerances and tuning constants shared across modules.
//!
//! Everything that is a threshold rather than an input parameter lives in
//! [`Tolerances`], so experiments can be audited from one record.

use serde::{Deserialize, Serialize};

/// Tolerance and tuning record. `Tolerances::default()` is what every
/// builtin scenario and test uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Newton projection stops once `|P(x)| / |grad P(x)|` falls below this.
    pub newton_residual: f64,
    /// Iteration cap for Newton projection; non-convergence counts as "far".
    pub newton_max_iter: usize,
    /// Points with `|grad P|` below this are treated as singular.
    pub grad_floor: f64,
    /// Slack on the length-2 requirement in `line_covered_by_prism`.
    pub cover: f64,
    /// Exact quadratic-cone membership tolerance.
    pub cone: f64,
    /// First-order prefilter constant: `|v . grad P| <= k1 * delta * |grad P|`.
    pub prefilter_k1: f64,
    /// Second-order prefilter constant: `|(v . grad)^2 P| <= k2 * delta * |grad P|`.
    pub prefilter_k2: f64,
    /// Number of arclength samples per line in neighborhood measurements.
    pub n_t: usize,
    /// Relative singular-value cutoff used for rank decisions.
    pub rank_rel: f64,
    /// Adjacency radius, in units of the net scale, for strong broadness.
    pub adjacency_factor: f64,
    /// Random restarts in great-sphere fitting.
    pub fit_restarts: usize,
    /// Maximum angle between a Sigma-line direction and e1.
    pub cap_angle: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            newton_residual: 1e-13,
            newton_max_iter: 50,
            grad_floor: 1e-4,
            cover: 1e-6,
            cone: 1e-9,
            prefilter_k1: 4.0,
            prefilter_k2: 20.0,
            n_t: 256,
            rank_rel: 1e-9,
            adjacency_factor: 3.0,
            fit_restarts: 16,
            cap_angle: 0.1,
        }
    }
}
