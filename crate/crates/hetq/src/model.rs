//! Shared domain types for the two-server heterogeneous queue: validated
//! rate parameters, chain state labels, and stationary distributions.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("rate {name} must be positive and finite, got {value}")]
    NonPositiveRate { name: &'static str, value: f64 },
    #[error("mu1 ({mu1}) must be at least mu2 ({mu2}): server 1 is the fast server")]
    ServerOrderViolation { mu1: f64, mu2: f64 },
    #[error("state ({n1},{n2}) is not reachable")]
    UnreachableState { n1: u32, n2: u32 },
    #[error("probabilities must lie in [0,1] and account for all mass, got sum {sum}")]
    InvalidDistribution { sum: f64 },
}

/// Arrival and service rates of the model, in jobs per unit time.
///
/// Server 1 is the fast server: `mu1 >= mu2` is enforced at construction
/// (equality is allowed; "faster" is then resolved by position).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    lambda: f64,
    mu1: f64,
    mu2: f64,
}

impl ModelParams {
    pub fn new(lambda: f64, mu1: f64, mu2: f64) -> Result<Self, ModelError> {
        for (name, value) in [("lambda", lambda), ("mu1", mu1), ("mu2", mu2)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ModelError::NonPositiveRate { name, value });
            }
        }
        if mu1 < mu2 {
            return Err(ModelError::ServerOrderViolation { mu1, mu2 });
        }
        Ok(Self { lambda, mu1, mu2 })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu1(&self) -> f64 {
        self.mu1
    }

    pub fn mu2(&self) -> f64 {
        self.mu2
    }

    /// Combined service capacity of both servers.
    pub fn total_service_rate(&self) -> f64 {
        self.mu1 + self.mu2
    }

    /// Traffic intensity: offered load over total capacity.
    pub fn traffic_intensity(&self) -> f64 {
        self.lambda / (self.mu1 + self.mu2)
    }

    /// A stationary distribution exists iff the traffic intensity is below 1.
    pub fn is_stable(&self) -> bool {
        self.traffic_intensity() < 1.0
    }
}

/// Validate raw rates into `ModelParams`. Never swaps the server rates.
pub fn validate_params(lambda: f64, mu1: f64, mu2: f64) -> Result<ModelParams, ModelError> {
    ModelParams::new(lambda, mu1, mu2)
}

/// Chain state `(n1, n2)`: `n1` counts jobs at the fast server plus any in
/// queue, `n2` is 1 iff a job occupies the slow server.
///
/// Reachable labels are exactly `(0,0)`, `(1,0)`, and `(n,1)` for `n >= 0`;
/// `(n,0)` with `n >= 2` is rejected because the queue can only be nonempty
/// while both servers are busy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateLabel {
    n1: u32,
    n2: u32,
}

impl StateLabel {
    pub fn new(n1: u32, n2: u32) -> Result<Self, ModelError> {
        if n2 > 1 || (n2 == 0 && n1 > 1) {
            return Err(ModelError::UnreachableState { n1, n2 });
        }
        Ok(Self { n1, n2 })
    }

    pub fn n1(&self) -> u32 {
        self.n1
    }

    pub fn n2(&self) -> u32 {
        self.n2
    }

    /// Position in the canonical state ordering
    /// `(0,0), (1,0), (0,1), (1,1), (2,1), ...`.
    pub fn index(&self) -> usize {
        if self.n2 == 0 {
            self.n1 as usize
        } else {
            self.n1 as usize + 2
        }
    }

    /// Inverse of [`StateLabel::index`].
    pub fn from_index(index: usize) -> Self {
        match index {
            0 => Self { n1: 0, n2: 0 },
            1 => Self { n1: 1, n2: 0 },
            i => Self {
                n1: (i - 2) as u32,
                n2: 1,
            },
        }
    }

    /// Total jobs in the system at this state.
    pub fn total(&self) -> u32 {
        self.n1 + self.n2
    }

    /// Jobs waiting in queue, excluding the two in-service positions.
    pub fn queued(&self) -> u32 {
        if self.n2 == 1 {
            self.n1.saturating_sub(1)
        } else {
            0
        }
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.n1, self.n2)
    }
}

/// Which computation produced a stationary distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistributionSource {
    ClosedForm,
    Oracle,
    SimulationOccupancy,
}

impl fmt::Display for DistributionSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DistributionSource::ClosedForm => "closed-form",
            DistributionSource::Oracle => "oracle",
            DistributionSource::SimulationOccupancy => "simulation-occupancy",
        };
        f.write_str(s)
    }
}

/// Probabilities over the canonical state ordering up to a truncation level.
///
/// Mass beyond the truncation is reported in `residual_tail`, never folded
/// back into the listed entries.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    probs: Vec<f64>,
    truncation_n: u32,
    residual_tail: f64,
    source: DistributionSource,
}

impl StationaryDistribution {
    /// Build from probabilities in canonical state order; the vector length
    /// must be `truncation + 3` for truncation level `N`.
    pub fn from_probs(
        mut probs: Vec<f64>,
        residual_tail: f64,
        source: DistributionSource,
    ) -> Result<Self, ModelError> {
        assert!(probs.len() >= 4, "need at least the four boundary states");
        let mut sum = residual_tail;
        for p in &mut probs {
            // Direct solves can leave probabilities a hair below zero.
            if *p < 0.0 && *p >= -1e-12 {
                *p = 0.0;
            }
            if !(0.0..=1.0 + 1e-12).contains(p) {
                return Err(ModelError::InvalidDistribution { sum: *p });
            }
            sum += *p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ModelError::InvalidDistribution { sum });
        }
        let truncation_n = (probs.len() - 3) as u32;
        Ok(Self {
            probs,
            truncation_n,
            residual_tail,
            source,
        })
    }

    pub fn truncation_n(&self) -> u32 {
        self.truncation_n
    }

    pub fn residual_tail(&self) -> f64 {
        self.residual_tail
    }

    pub fn source(&self) -> DistributionSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probability of a state; zero beyond the truncation.
    pub fn probability(&self, label: StateLabel) -> f64 {
        self.probs.get(label.index()).copied().unwrap_or(0.0)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateLabel, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (StateLabel::from_index(i), p))
    }
}

/// Standard steady-state outputs derived from the stationary distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateMetrics {
    pub rho: f64,
    /// Mean jobs in system.
    pub l: f64,
    /// Mean jobs waiting in queue, excluding the in-service positions.
    pub lq: f64,
    /// Mean time in system.
    pub w: f64,
    /// Mean wait in queue.
    pub wq: f64,
    /// Fast-server busy probability.
    pub util1: f64,
    /// Slow-server busy probability.
    pub util2: f64,
    /// Probability of an empty system.
    pub p_empty: f64,
}
