//! Independent numerical oracle: assemble the truncated generator matrix of
//! the chain directly from its transition semantics and solve for the
//! stationary vector by dense Gaussian elimination with partial pivoting.

use thiserror::Error;

use crate::model::{DistributionSource, ModelParams, StateLabel, StationaryDistribution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("truncation {truncation_n} is too small, need at least 2")]
    TruncationTooSmall { truncation_n: u32 },
    #[error("linear system is singular (pivot {pivot:e} below threshold)")]
    SingularSystem { pivot: f64 },
}

/// Dense generator matrix over the canonical state ordering up to a
/// truncation level. Rows sum to zero; arrivals at the boundary state are
/// dropped, so the top level reflects.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    states: Vec<StateLabel>,
    /// Row-major `dim x dim` rate matrix.
    rates: Vec<f64>,
    truncation_n: u32,
}

impl GeneratorMatrix {
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn truncation_n(&self) -> u32 {
        self.truncation_n
    }

    pub fn states(&self) -> &[StateLabel] {
        &self.states
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.rates[from * self.dim() + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        let d = self.dim();
        &self.rates[from * d..(from + 1) * d]
    }

    /// Infinity norm of `pi * Q`: the stationarity defect of a probability
    /// vector over this generator.
    pub fn stationarity_defect(&self, pi: &[f64]) -> f64 {
        let d = self.dim();
        assert_eq!(pi.len(), d);
        let mut worst = 0.0f64;
        for j in 0..d {
            let mut acc = 0.0;
            for i in 0..d {
                acc += pi[i] * self.rates[i * d + j];
            }
            worst = worst.max(acc.abs());
        }
        worst
    }
}

fn empty_generator(params: &ModelParams, truncation_n: u32) -> Result<GeneratorMatrix, OracleError> {
    if truncation_n < 2 {
        return Err(OracleError::TruncationTooSmall { truncation_n });
    }
    let _ = params;
    let dim = truncation_n as usize + 3;
    Ok(GeneratorMatrix {
        states: (0..dim).map(StateLabel::from_index).collect(),
        rates: vec![0.0; dim * dim],
        truncation_n,
    })
}

fn set_rate(gen: &mut GeneratorMatrix, from: StateLabel, to: StateLabel, rate: f64) {
    let d = gen.dim();
    let (i, j) = (from.index(), to.index());
    gen.rates[i * d + j] = rate;
    gen.rates[i * d + i] -= rate;
}

/// Build the truncated generator from the transition semantics: arrivals
/// take the fast server first, either completion pulls the queue head, and
/// arrivals at the boundary state are dropped.
pub fn build_generator(
    params: &ModelParams,
    truncation_n: u32,
) -> Result<GeneratorMatrix, OracleError> {
    let mut gen = empty_generator(params, truncation_n)?;
    let lambda = params.lambda();
    let (mu1, mu2) = (params.mu1(), params.mu2());
    let s = |n1: u32, n2: u32| StateLabel::new(n1, n2).expect("reachable");

    set_rate(&mut gen, s(0, 0), s(1, 0), lambda);
    set_rate(&mut gen, s(1, 0), s(0, 0), mu1);
    set_rate(&mut gen, s(1, 0), s(1, 1), lambda);
    set_rate(&mut gen, s(0, 1), s(0, 0), mu2);
    set_rate(&mut gen, s(0, 1), s(1, 1), lambda);
    set_rate(&mut gen, s(1, 1), s(0, 1), mu1);
    set_rate(&mut gen, s(1, 1), s(1, 0), mu2);
    for n in 1..=truncation_n {
        if n < truncation_n {
            set_rate(&mut gen, s(n, 1), s(n + 1, 1), lambda);
        }
        if n >= 2 {
            set_rate(&mut gen, s(n, 1), s(n - 1, 1), mu1 + mu2);
        }
    }
    Ok(gen)
}

/// Variant generator with the `(0,1) -> (1,1)` transition rated at the slow
/// service rate instead of the arrival rate. A deliberately miswired chain
/// used as a negative control: its stationary vector departs from the closed
/// form whenever `lambda != mu2`.
pub fn build_generator_mislabeled(
    params: &ModelParams,
    truncation_n: u32,
) -> Result<GeneratorMatrix, OracleError> {
    let mut gen = build_generator(params, truncation_n)?;
    let d = gen.dim();
    let (i, j) = (
        StateLabel::new(0, 1).unwrap().index(),
        StateLabel::new(1, 1).unwrap().index(),
    );
    let delta = params.mu2() - params.lambda();
    gen.rates[i * d + j] += delta;
    gen.rates[i * d + i] -= delta;
    Ok(gen)
}

const PIVOT_THRESHOLD: f64 = 1e-14;

/// Solve `a x = b` in place by Gaussian elimination with partial pivoting.
/// `a` is row-major `n x n`; the solution lands in `b`.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Result<(), OracleError> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_abs = a[col * n + col].abs();
        for row in col + 1..n {
            let cand = a[row * n + col].abs();
            if cand > pivot_abs {
                pivot_abs = cand;
                pivot_row = row;
            }
        }
        if pivot_abs < PIVOT_THRESHOLD {
            return Err(OracleError::SingularSystem { pivot: pivot_abs });
        }
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            b.swap(col, pivot_row);
        }
        let pivot = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            a[row * n + col] = 0.0;
            for k in col + 1..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col * n + k] * b[k];
        }
        b[col] = acc / a[col * n + col];
    }
    Ok(())
}

/// Stationary vector of a generator: solves `pi Q = 0` with one balance
/// equation replaced by the normalization row `sum(pi) = 1`.
pub fn stationary_solve(gen: &GeneratorMatrix) -> Result<StationaryDistribution, OracleError> {
    let n = gen.dim();
    // Transpose so balance equations become rows, then overwrite the last
    // row with the normalization constraint.
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[j * n + i] = gen.rate(i, j);
        }
    }
    for k in 0..n {
        a[(n - 1) * n + k] = 1.0;
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    solve_dense(&mut a, &mut b, n)?;

    if b.iter().any(|&p| p < -1e-12) {
        let worst = b.iter().cloned().fold(f64::INFINITY, f64::min);
        return Err(OracleError::SingularSystem { pivot: worst.abs() });
    }
    StationaryDistribution::from_probs(b, 0.0, DistributionSource::Oracle)
        .map_err(|_| OracleError::SingularSystem { pivot: 0.0 })
}

/// Occupancy moments of a stationary distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupancyMoments {
    pub l: f64,
    pub lq: f64,
    pub util1: f64,
    pub util2: f64,
}

/// Expected jobs in system and in queue, plus per-server busy probabilities,
/// summed over a distribution. The queue excludes the in-service positions.
pub fn occupancy_moments(dist: &StationaryDistribution) -> OccupancyMoments {
    let mut m = OccupancyMoments {
        l: 0.0,
        lq: 0.0,
        util1: 0.0,
        util2: 0.0,
    };
    for (label, p) in dist.iter() {
        m.l += label.total() as f64 * p;
        m.lq += label.queued() as f64 * p;
        if label.n1() >= 1 {
            m.util1 += p;
        }
        if label.n2() == 1 {
            m.util2 += p;
        }
    }
    m
}
