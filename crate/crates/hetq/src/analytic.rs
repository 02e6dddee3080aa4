//! Closed-form steady-state solution of the heterogeneous two-server chain:
//! probability ratios relative to the empty state, the geometric tail,
//! normalization, aggregate metrics, and balance-equation residuals.

use thiserror::Error;

use crate::model::{
    AggregateMetrics, DistributionSource, ModelParams, StateLabel, StationaryDistribution,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("no stationary distribution exists: traffic intensity {rho} >= 1")]
    UnstableSystem { rho: f64 },
    #[error("tail index must be >= 1, got {n}")]
    DomainError { n: i64 },
    #[error("truncation {truncation_n} is too small, need at least {required}")]
    TruncationTooSmall { truncation_n: u32, required: u32 },
}

/// Steady-state probabilities of the three non-empty boundary states,
/// expressed relative to the empty-state probability `p(0,0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormRatios {
    /// p(1,0) / p(0,0)
    pub r10: f64,
    /// p(0,1) / p(0,0)
    pub r01: f64,
    /// p(1,1) / p(0,0)
    pub r11: f64,
}

/// Closed-form boundary ratios. Defined for any positive rates; stability is
/// only needed once the geometric tail is summed.
pub fn closed_form_ratios(params: &ModelParams) -> ClosedFormRatios {
    let lambda = params.lambda();
    let (mu1, mu2) = (params.mu1(), params.mu2());
    let rho = params.traffic_intensity();
    let common = rho / (1.0 + 2.0 * rho);
    ClosedFormRatios {
        r10: (1.0 + rho) / (1.0 + 2.0 * rho) * (lambda / mu1),
        r01: common * (lambda / mu2),
        r11: common * lambda * (lambda + mu2) / (mu1 * mu2),
    }
}

/// Tail ratio `p(n,1) / p(0,0)` for `n >= 1`: the geometric continuation of
/// the boundary ratio `r11`.
pub fn tail_probability(
    params: &ModelParams,
    ratios: &ClosedFormRatios,
    n: i64,
) -> Result<f64, AnalyticError> {
    if n < 1 {
        return Err(AnalyticError::DomainError { n });
    }
    let rho = params.traffic_intensity();
    Ok(rho.powi((n - 1) as i32) * ratios.r11)
}

fn require_stable(params: &ModelParams) -> Result<f64, AnalyticError> {
    let rho = params.traffic_intensity();
    if rho >= 1.0 {
        return Err(AnalyticError::UnstableSystem { rho });
    }
    Ok(rho)
}

/// Empty-state probability `p(0,0)`, fixed by total probability one with the
/// geometric tail summed in closed form.
pub fn normalization(
    params: &ModelParams,
    ratios: &ClosedFormRatios,
) -> Result<f64, AnalyticError> {
    let rho = require_stable(params)?;
    Ok(1.0 / (1.0 + ratios.r10 + ratios.r01 + ratios.r11 / (1.0 - rho)))
}

/// Stationary probabilities up to truncation level `truncation_n`, with the
/// remaining tail mass reported separately (never redistributed).
pub fn stationary_distribution(
    params: &ModelParams,
    truncation_n: u32,
) -> Result<StationaryDistribution, AnalyticError> {
    if truncation_n < 1 {
        return Err(AnalyticError::TruncationTooSmall {
            truncation_n,
            required: 1,
        });
    }
    let rho = require_stable(params)?;
    let ratios = closed_form_ratios(params);
    let p00 = normalization(params, &ratios)?;

    let mut probs = Vec::with_capacity(truncation_n as usize + 3);
    probs.push(p00);
    probs.push(ratios.r10 * p00);
    probs.push(ratios.r01 * p00);
    let mut tail = ratios.r11;
    for _ in 1..=truncation_n {
        probs.push(tail * p00);
        tail *= rho;
    }
    // After the loop `tail` holds r11 * rho^N, so the unlisted mass is the
    // geometric sum tail * p00 / (1 - rho).
    let residual = tail * p00 / (1.0 - rho);
    StationaryDistribution::from_probs(probs, residual, DistributionSource::ClosedForm)
        .map_err(|_| AnalyticError::UnstableSystem { rho })
}

/// Aggregate steady-state metrics from the closed form: occupancy via
/// geometric-series sums, times via Little's law.
pub fn aggregate_metrics(params: &ModelParams) -> Result<AggregateMetrics, AnalyticError> {
    let rho = require_stable(params)?;
    let ratios = closed_form_ratios(params);
    let p00 = normalization(params, &ratios)?;
    let (p10, p01, p11) = (ratios.r10 * p00, ratios.r01 * p00, ratios.r11 * p00);

    let one_minus = 1.0 - rho;
    let l = p10 + p01 + p11 * (1.0 / (one_minus * one_minus) + 1.0 / one_minus);
    let lq = p11 * rho / (one_minus * one_minus);
    let lambda = params.lambda();
    Ok(AggregateMetrics {
        rho,
        l,
        lq,
        w: l / lambda,
        wq: lq / lambda,
        util1: 1.0 - p00 - p01,
        util2: 1.0 - p00 - p10,
        p_empty: p00,
    })
}

/// Absolute residual of one global balance equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceResidual {
    /// The state whose flow balance is evaluated.
    pub state: StateLabel,
    pub residual: f64,
}

/// Evaluate `|outflow - inflow|` of the global balance equations on a
/// distribution, for every state up to one below the truncation level.
///
/// The balance at `(1,1)` takes its inflow from `(0,1)` at the arrival rate;
/// see [`mislabeled_balance_residual`] for the variant this replaces.
pub fn balance_residuals(
    params: &ModelParams,
    dist: &StationaryDistribution,
) -> Result<Vec<BalanceResidual>, AnalyticError> {
    if dist.truncation_n() < 3 {
        return Err(AnalyticError::TruncationTooSmall {
            truncation_n: dist.truncation_n(),
            required: 3,
        });
    }
    let lambda = params.lambda();
    let (mu1, mu2) = (params.mu1(), params.mu2());
    let p = |n1: u32, n2: u32| dist.probability(StateLabel::new(n1, n2).expect("reachable"));

    let mut out = vec![
        BalanceResidual {
            state: StateLabel::new(0, 0).unwrap(),
            residual: (lambda * p(0, 0) - mu1 * p(1, 0) - mu2 * p(0, 1)).abs(),
        },
        BalanceResidual {
            state: StateLabel::new(1, 0).unwrap(),
            residual: ((lambda + mu1) * p(1, 0) - mu2 * p(1, 1) - lambda * p(0, 0)).abs(),
        },
        BalanceResidual {
            state: StateLabel::new(0, 1).unwrap(),
            residual: ((lambda + mu2) * p(0, 1) - mu1 * p(1, 1)).abs(),
        },
        BalanceResidual {
            state: StateLabel::new(1, 1).unwrap(),
            residual: ((lambda + mu1 + mu2) * p(1, 1)
                - lambda * p(0, 1)
                - lambda * p(1, 0)
                - (mu1 + mu2) * p(2, 1))
            .abs(),
        },
    ];
    for n in 2..dist.truncation_n() {
        out.push(BalanceResidual {
            state: StateLabel::new(n, 1).unwrap(),
            residual: ((lambda + mu1 + mu2) * p(n, 1)
                - lambda * p(n - 1, 1)
                - (mu1 + mu2) * p(n + 1, 1))
            .abs(),
        });
    }
    Ok(out)
}

/// Residual of the `(1,1)` balance with its inflow from `(0,1)` mislabeled at
/// the slow service rate instead of the arrival rate. Kept as a negative
/// control: the mislabeled form coincides with the correct one only when
/// `lambda == mu2`.
pub fn mislabeled_balance_residual(
    params: &ModelParams,
    dist: &StationaryDistribution,
) -> Result<f64, AnalyticError> {
    if dist.truncation_n() < 2 {
        return Err(AnalyticError::TruncationTooSmall {
            truncation_n: dist.truncation_n(),
            required: 2,
        });
    }
    let lambda = params.lambda();
    let (mu1, mu2) = (params.mu1(), params.mu2());
    let p = |n1: u32, n2: u32| dist.probability(StateLabel::new(n1, n2).expect("reachable"));
    Ok(((lambda + mu1 + mu2) * p(1, 1)
        - mu2 * p(0, 1)
        - lambda * p(1, 0)
        - (mu1 + mu2) * p(2, 1))
    .abs())
}

/// Distribution of the total job count `n1 + n2`, summing states with equal
/// totals. Index `k` holds `P(n1 + n2 = k)`.
pub fn total_count_distribution(dist: &StationaryDistribution) -> Vec<f64> {
    let mut out = vec![0.0; dist.truncation_n() as usize + 2];
    for (label, p) in dist.iter() {
        out[label.total() as usize] += p;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_params;
    use crate::oracle::{build_generator, stationary_solve};

    fn params(lambda: f64, mu1: f64, mu2: f64) -> ModelParams {
        validate_params(lambda, mu1, mu2).unwrap()
    }

    fn base() -> ModelParams {
        params(1.0, 2.0, 1.0)
    }

    #[test]
    fn ratios_match_hand_rationals() {
        let r = closed_form_ratios(&base());
        assert!((r.r10 - 2.0 / 5.0).abs() < 1e-15);
        assert!((r.r01 - 1.0 / 5.0).abs() < 1e-15);
        assert!((r.r11 - 1.0 / 5.0).abs() < 1e-15);

        let r = closed_form_ratios(&params(2.0, 3.0, 1.0));
        assert!((r.r10 - 0.5).abs() < 1e-15);
        assert!((r.r01 - 0.5).abs() < 1e-15);
        assert!((r.r11 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ratios_depend_only_on_rate_ratios() {
        let a = closed_form_ratios(&base());
        let b = closed_form_ratios(&params(10.0, 20.0, 10.0));
        assert!((a.r10 - b.r10).abs() < 1e-14);
        assert!((a.r01 - b.r01).abs() < 1e-14);
        assert!((a.r11 - b.r11).abs() < 1e-14);
    }

    #[test]
    fn ratios_satisfy_idle_slow_balance() {
        // r11 = r01 * (lambda + mu2) / mu1, from the (0,1) balance.
        for p in [base(), params(2.0, 3.0, 1.0), params(0.7, 5.0, 0.3)] {
            let r = closed_form_ratios(&p);
            let expect = r.r01 * (p.lambda() + p.mu2()) / p.mu1();
            assert!((r.r11 - expect).abs() <= 1e-12 * r.r11);
        }
    }

    #[test]
    fn ratios_match_oracle_at_deep_truncation() {
        for p in [base(), params(2.0, 3.0, 1.0)] {
            let gen = build_generator(&p, 500).unwrap();
            let pi = stationary_solve(&gen).unwrap();
            let p00 = pi.probability(StateLabel::new(0, 0).unwrap());
            let r = closed_form_ratios(&p);
            let check = |label: StateLabel, expect: f64| {
                let got = pi.probability(label) / p00;
                assert!(
                    (got - expect).abs() < 1e-9,
                    "{label}: oracle ratio {got} vs closed form {expect}"
                );
            };
            check(StateLabel::new(1, 0).unwrap(), r.r10);
            check(StateLabel::new(0, 1).unwrap(), r.r01);
            check(StateLabel::new(1, 1).unwrap(), r.r11);
        }
    }

    #[test]
    fn tail_probability_examples() {
        let r = closed_form_ratios(&base());
        assert_eq!(tail_probability(&base(), &r, 1).unwrap(), r.r11);
        assert!((tail_probability(&base(), &r, 2).unwrap() - 1.0 / 15.0).abs() < 1e-15);
        assert!((tail_probability(&base(), &r, 3).unwrap() - 1.0 / 45.0).abs() < 1e-15);
        assert_eq!(
            tail_probability(&base(), &r, 0),
            Err(AnalyticError::DomainError { n: 0 })
        );
    }

    #[test]
    fn tail_matches_oracle() {
        let gen = build_generator(&base(), 500).unwrap();
        let pi = stationary_solve(&gen).unwrap();
        let p00 = pi.probability(StateLabel::new(0, 0).unwrap());
        let r = closed_form_ratios(&base());
        for n in 1..=10 {
            let expect = tail_probability(&base(), &r, n).unwrap();
            let got = pi.probability(StateLabel::new(n as u32, 1).unwrap()) / p00;
            assert!((got - expect).abs() < 1e-9, "n={n}: {got} vs {expect}");
        }
    }

    #[test]
    fn normalization_examples() {
        let r = closed_form_ratios(&base());
        assert!((normalization(&base(), &r).unwrap() - 10.0 / 19.0).abs() < 1e-15);

        // All three boundary ratios are 1/2 and the tail sum is 1, so the
        // normalizer is 3 (oracle-confirmed; see ratios_match_oracle tests).
        let p2 = params(2.0, 3.0, 1.0);
        let r2 = closed_form_ratios(&p2);
        assert!((normalization(&p2, &r2).unwrap() - 1.0 / 3.0).abs() < 1e-15);

        let unstable = params(3.0, 2.0, 1.0);
        let r3 = closed_form_ratios(&unstable);
        assert_eq!(
            normalization(&unstable, &r3),
            Err(AnalyticError::UnstableSystem { rho: 1.0 })
        );
    }

    #[test]
    fn stationary_distribution_small_truncation() {
        let dist = stationary_distribution(&base(), 2).unwrap();
        let expect = [
            (StateLabel::new(0, 0).unwrap(), 10.0 / 19.0),
            (StateLabel::new(1, 0).unwrap(), 4.0 / 19.0),
            (StateLabel::new(0, 1).unwrap(), 2.0 / 19.0),
            (StateLabel::new(1, 1).unwrap(), 2.0 / 19.0),
            (StateLabel::new(2, 1).unwrap(), 2.0 / 57.0),
        ];
        for (label, want) in expect {
            assert!((dist.probability(label) - want).abs() < 1e-15, "{label}");
        }
        assert!((dist.residual_tail() - 1.0 / 57.0).abs() < 1e-15);
        assert_eq!(dist.source(), DistributionSource::ClosedForm);
    }

    #[test]
    fn stationary_distribution_mass_closes() {
        for p in [base(), params(2.0, 3.0, 1.0), params(2.6, 2.0, 1.0)] {
            let dist = stationary_distribution(&p, 1).unwrap();
            assert_eq!(dist.len(), 4);
            let total: f64 = dist.probs().iter().sum::<f64>() + dist.residual_tail();
            assert!((total - 1.0).abs() < 1e-12);
        }
        let dist = stationary_distribution(&params(2.0, 3.0, 1.0), 1).unwrap();
        for (i, want) in [1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0]
            .iter()
            .enumerate()
        {
            assert!((dist.probs()[i] - want).abs() < 1e-15);
        }
        assert!((dist.residual_tail() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn stationary_distribution_matches_oracle() {
        let dist = stationary_distribution(&base(), 500).unwrap();
        let pi = stationary_solve(&build_generator(&base(), 500).unwrap()).unwrap();
        let max_diff = dist
            .probs()
            .iter()
            .zip(pi.probs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff < 1e-9, "max diff {max_diff}");
    }

    #[test]
    fn aggregate_metrics_hand_rationals() {
        let m = aggregate_metrics(&base()).unwrap();
        assert!((m.l - 27.0 / 38.0).abs() < 1e-15);
        assert!((m.lq - 3.0 / 38.0).abs() < 1e-15);
        assert!((m.w - 27.0 / 38.0).abs() < 1e-15);
        assert!((m.wq - 3.0 / 38.0).abs() < 1e-15);
        assert!((m.util1 - 7.0 / 19.0).abs() < 1e-15);
        assert!((m.util2 - 5.0 / 19.0).abs() < 1e-15);
        assert!((m.p_empty - 10.0 / 19.0).abs() < 1e-15);
        // Throughput conservation: busy servers drain exactly the offered load.
        assert!((m.util1 * base().mu1() + m.util2 * base().mu2() - base().lambda()).abs() < 1e-12);
    }

    #[test]
    fn aggregate_metrics_identities_on_grid() {
        for rho in [0.1, 0.3, 0.5, 0.7, 0.9] {
            for ratio in [1.0, 2.0, 5.0, 10.0] {
                let mu2 = 3.0 / (1.0 + ratio);
                let p = params(3.0 * rho, 3.0 - mu2, mu2);
                let m = aggregate_metrics(&p).unwrap();
                assert!(m.lq <= m.l);
                assert!((0.0..=1.0).contains(&m.util1));
                assert!((0.0..=1.0).contains(&m.util2));
                assert!((m.l - m.lq - (m.util1 + m.util2)).abs() < 1e-9);
                assert!((m.util1 * p.mu1() + m.util2 * p.mu2() - p.lambda()).abs() < 1e-9);
                // Little's law holds by construction.
                assert_eq!(m.w, m.l / p.lambda());
                assert_eq!(m.wq, m.lq / p.lambda());
            }
        }
    }

    #[test]
    fn occupancy_moments_agree_with_aggregates() {
        let m = aggregate_metrics(&base()).unwrap();
        let dist = stationary_distribution(&base(), 500).unwrap();
        let mom = crate::oracle::occupancy_moments(&dist);
        assert!((mom.l - m.l).abs() < 1e-8);
        assert!((mom.lq - m.lq).abs() < 1e-8);
        assert!((mom.util1 - m.util1).abs() < 1e-8);
        assert!((mom.util2 - m.util2).abs() < 1e-8);
    }

    #[test]
    fn balance_residuals_vanish_on_closed_form() {
        let dist = stationary_distribution(&base(), 10).unwrap();
        for r in balance_residuals(&base(), &dist).unwrap() {
            assert!(r.residual < 1e-12, "{}: {}", r.state, r.residual);
        }
    }

    #[test]
    fn mislabeled_balance_is_detectably_wrong() {
        // The mislabeled inflow coincides with the correct one only when
        // lambda == mu2; at (2, 3, 1) it leaves half of p(0,0) unbalanced.
        let p = params(2.0, 3.0, 1.0);
        let dist = stationary_distribution(&p, 10).unwrap();
        let p00 = dist.probability(StateLabel::new(0, 0).unwrap());
        let residual = mislabeled_balance_residual(&p, &dist).unwrap();
        assert!((residual - 0.5 * p00).abs() < 1e-12);

        // And it is indistinguishable when lambda == mu2.
        let dist = stationary_distribution(&base(), 10).unwrap();
        assert!(mislabeled_balance_residual(&base(), &dist).unwrap() < 1e-12);
    }

    #[test]
    fn uniform_distribution_is_not_stationary() {
        let uniform = StationaryDistribution::from_probs(
            vec![0.125; 8],
            0.0,
            DistributionSource::Oracle,
        )
        .unwrap();
        let max = balance_residuals(&base(), &uniform)
            .unwrap()
            .iter()
            .map(|r| r.residual)
            .fold(0.0f64, f64::max);
        assert!(max > 1e-3);
    }

    #[test]
    fn balance_requires_enough_states() {
        let dist = stationary_distribution(&base(), 2).unwrap();
        assert!(matches!(
            balance_residuals(&base(), &dist),
            Err(AnalyticError::TruncationTooSmall { .. })
        ));
    }

    #[test]
    fn geometric_tail_ratio_is_rho() {
        for p in [base(), params(2.6, 2.0, 1.0)] {
            let rho = p.traffic_intensity();
            let r = closed_form_ratios(&p);
            for n in 2..=50 {
                let ratio = tail_probability(&p, &r, n).unwrap()
                    / tail_probability(&p, &r, n - 1).unwrap();
                assert!((ratio - rho).abs() <= 1e-12 * rho, "n={n}");
            }
        }
    }

    #[test]
    fn homogeneous_reduction_matches_classic_two_server_queue() {
        for rho in [0.2, 0.5, 0.8] {
            let mu = 1.0;
            let p = params(2.0 * rho * mu, mu, mu);
            let dist = stationary_distribution(&p, 200).unwrap();
            let by_total = total_count_distribution(&dist);
            let p0 = (1.0 - rho) / (1.0 + rho);
            assert!((by_total[0] - p0).abs() < 1e-10, "rho={rho}");
            for k in 1..=50usize {
                let want = 2.0 * rho.powi(k as i32) * p0;
                assert!(
                    (by_total[k] - want).abs() < 1e-10,
                    "rho={rho} k={k}: {} vs {want}",
                    by_total[k]
                );
            }
        }
    }
}
