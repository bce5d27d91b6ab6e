//! Mean-field and infinite-network analytics for the threshold model:
//! fixed-point default probabilities, correlated-factor integrals, and
//! the limiting values under full diversification.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::quad;
use crate::shock::{self, CompartmentVector, ShockDistribution};

/// Convergence tolerance of the fixed-point iteration.
pub const FIXED_POINT_TOL: f64 = 1e-12;
const FIXED_POINT_MAX_ITER: usize = 100_000;

/// Neglected-mass target of the truncated multinomial summation.
const BOX_WIDTH_SIGMAS: f64 = 6.0;
/// Exact composition enumeration below this system size.
const EXACT_ENUMERATION_LIMIT: u64 = 60;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("correlation must lie in (0, 1) for correlated analytics, got {0}")]
    RhoOutOfRange(f64),
    #[error(transparent)]
    Quadrature(#[from] quad::QuadError),
    #[error("first latent-factor integral deviates from p1: got {got}, expected {expected}")]
    MarginalIdentity { got: f64, expected: f64 },
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// `P[Bin(half_k, q) >= m]` via the regularized incomplete beta function.
pub fn binomial_tail(half_k: usize, m: usize, q: f64) -> f64 {
    if m == 0 {
        return 1.0;
    }
    if m > half_k {
        return 0.0;
    }
    if q <= 0.0 {
        return 0.0;
    }
    if q >= 1.0 {
        return 1.0;
    }
    beta_reg(m as f64, (half_k - m + 1) as f64, q)
}

/// Mean-field threshold count for a compartment with post-shock equity
/// `epsilon`: the ceiling of `(k/2) epsilon / leverage`, clamped to
/// `[0, k/2]`; `k/2 + 1` encodes an immune compartment
/// (`epsilon / leverage > 1`).
pub fn mean_field_threshold(half_k: usize, epsilon: f64, leverage: f64) -> usize {
    if epsilon < 0.0 {
        // dead on arrival
        return 0;
    }
    if leverage <= 0.0 {
        return half_k + 1;
    }
    let ratio = epsilon / leverage;
    if ratio > 1.0 {
        return half_k + 1;
    }
    let m = (half_k as f64 * ratio).ceil();
    (m.max(0.0) as usize).min(half_k)
}

/// One mean-field problem instance: degree, per-compartment thresholds,
/// and compartment weights (fixed fractions, exogenous probabilities, or
/// factor-conditional probabilities).
#[derive(Debug, Clone)]
pub struct MeanFieldProblem {
    pub half_k: usize,
    pub thresholds: Vec<usize>,
    pub fractions: Vec<f64>,
}

impl MeanFieldProblem {
    pub fn new(k: usize, leverage: f64, epsilons: &[f64], fractions: Vec<f64>) -> Self {
        assert_eq!(epsilons.len(), fractions.len());
        let half_k = k / 2;
        let thresholds = epsilons
            .iter()
            .map(|&e| mean_field_threshold(half_k, e, leverage))
            .collect();
        Self {
            half_k,
            thresholds,
            fractions,
        }
    }

    fn with_fractions(&self, fractions: Vec<f64>) -> Self {
        Self {
            half_k: self.half_k,
            thresholds: self.thresholds.clone(),
            fractions,
        }
    }
}

/// Fixed point of the mean-field map, reached by iteration from below.
#[derive(Debug, Clone, Copy)]
pub struct FixedPointSolution {
    pub q_star: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// One step of the mean-field map:
/// `q -> sum_mu Pi_mu P[Bin(k/2, q) >= m_mu]`.
pub fn mean_field_iterate(problem: &MeanFieldProblem, q_prev: f64) -> f64 {
    problem
        .fractions
        .iter()
        .zip(&problem.thresholds)
        .map(|(&pi, &m)| pi * binomial_tail(problem.half_k, m, q_prev))
        .sum()
}

/// Least fixed point of the monotone mean-field map, from `q_0 = 0`
/// (equivalently `q_1 = Pi_1`).
pub fn solve_q_of_n(problem: &MeanFieldProblem) -> FixedPointSolution {
    let mut q = 0.0f64;
    for iterations in 1..=FIXED_POINT_MAX_ITER {
        let next = mean_field_iterate(problem, q).clamp(0.0, 1.0);
        if (next - q).abs() < FIXED_POINT_TOL {
            return FixedPointSolution {
                q_star: next,
                iterations,
                residual: (mean_field_iterate(problem, next) - next).abs(),
                converged: true,
            };
        }
        q = next;
    }
    FixedPointSolution {
        q_star: q,
        iterations: FIXED_POINT_MAX_ITER,
        residual: (mean_field_iterate(problem, q) - q).abs(),
        converged: false,
    }
}

fn boxed_compositions(n: u64, probs: &[f64], six_sigma_box: bool) -> Vec<Vec<u64>> {
    let bounds: Vec<(u64, u64)> = probs
        .iter()
        .map(|&p| {
            if !six_sigma_box {
                (0, n)
            } else {
                let mean = n as f64 * p;
                let sd = (n as f64 * p * (1.0 - p)).sqrt();
                let lo = (mean - BOX_WIDTH_SIGMAS * sd).floor().max(0.0) as u64;
                let hi = (mean + BOX_WIDTH_SIGMAS * sd).ceil().min(n as f64) as u64;
                (lo, hi)
            }
        })
        .collect();
    fn rec(
        remaining: u64,
        class: usize,
        bounds: &[(u64, u64)],
        prefix: &mut Vec<u64>,
        out: &mut Vec<Vec<u64>>,
    ) {
        if class == bounds.len() - 1 {
            let (lo, hi) = bounds[class];
            if remaining >= lo && remaining <= hi {
                prefix.push(remaining);
                out.push(prefix.clone());
                prefix.pop();
            }
            return;
        }
        let (lo, hi) = bounds[class];
        for c in lo..=hi.min(remaining) {
            prefix.push(c);
            rec(remaining - c, class + 1, bounds, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, 0, &bounds, &mut Vec::new(), &mut out);
    out
}

/// Expected default fraction at system size `n` with independent shocks:
/// the multinomial mixture of per-composition fixed points.
///
/// Exact enumeration up to n = 60; beyond that the sum is restricted to a
/// six-sigma box per compartment and the neglected probability mass is
/// returned as the error bound.
pub fn expected_q_uncorrelated(
    n: u64,
    probs: &[f64],
    k: usize,
    leverage: f64,
    epsilons: &[f64],
) -> (f64, f64) {
    let base = MeanFieldProblem::new(k, leverage, epsilons, vec![0.0; probs.len()]);
    let comps = boxed_compositions(n, probs, n > EXACT_ENUMERATION_LIMIT);
    let terms: Vec<(f64, f64)> = comps
        .par_iter()
        .map(|counts| {
            let weight = shock::multinomial_pmf(&CompartmentVector::new(counts.clone()), probs);
            if weight == 0.0 {
                return (0.0, 0.0);
            }
            let fractions: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
            let q = solve_q_of_n(&base.with_fractions(fractions)).q_star;
            (weight, weight * q)
        })
        .collect();
    // sequential reduction keeps the result bit-reproducible
    let mut mass = 0.0;
    let mut expectation = 0.0;
    for (w, wq) in terms {
        mass += w;
        expectation += wq;
    }
    (expectation, (1.0 - mass).max(0.0))
}

/// Mean-field fixed point conditional on the common factor value `alpha`:
/// compartment weights replaced by `pi_mu(alpha)`.
pub fn solve_q_alpha(
    alpha: f64,
    dist: &ShockDistribution,
    k: usize,
    leverage: f64,
    epsilons: &[f64],
) -> f64 {
    let fractions = shock::pi_probabilities(alpha, dist);
    let problem = MeanFieldProblem::new(k, leverage, epsilons, fractions);
    solve_q_of_n(&problem).q_star
}

/// Expected default fraction with correlated shocks: the Gaussian average
/// of the factor-conditional fixed point over the common factor.
///
/// `q(alpha)` can jump at a critical factor value, so the primary route is
/// adaptive Simpson (which refines around the jump); Gauss-Hermite serves
/// as the error estimate. Returns `(value, error_estimate)`.
pub fn expected_q_correlated(
    dist: &ShockDistribution,
    k: usize,
    leverage: f64,
    epsilons: &[f64],
) -> Result<(f64, f64), AnalyticsError> {
    let rho = dist.rho();
    if !(0.0 < rho && rho < 1.0) {
        return Err(AnalyticsError::RhoOutOfRange(rho));
    }
    let base = MeanFieldProblem::new(k, leverage, epsilons, vec![0.0; epsilons.len()]);
    let q_of_alpha = |alpha: f64| {
        let fractions = shock::pi_probabilities(alpha, dist);
        solve_q_of_n(&base.with_fractions(fractions)).q_star
    };
    // Two refinement depths of the adaptive rule; the factor-conditional
    // fixed point can jump at a critical alpha, where a fixed-node rule
    // would stall at O(spacing) error.
    let fine = quad::gaussian_integral_upto(rho, f64::INFINITY, &q_of_alpha, 1e-7);
    let coarse = quad::gaussian_integral_upto(rho, f64::INFINITY, &q_of_alpha, 1e-4);
    let estimate = (fine - coarse).abs();
    if estimate > 0.01 {
        return Err(AnalyticsError::Quadrature(quad::QuadError::NonConvergence {
            estimate,
        }));
    }
    Ok((fine, estimate))
}

fn heaviside(x: f64) -> f64 {
    // half maximum convention
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        0.0
    } else {
        0.5
    }
}

/// Infinite-network limit of the expected default fraction, independent
/// shocks: compartments default in sequence while the cumulative default
/// probability exceeds their loss-absorption fraction.
pub fn limit_uncorrelated(probs: &[f64], epsilons: &[f64], leverage: f64) -> f64 {
    assert_eq!(probs.len(), epsilons.len());
    if leverage <= 0.0 {
        return probs[0];
    }
    let mut q = probs[0];
    let mut cumulative = 0.0;
    let mut product = 1.0;
    for mu in 1..probs.len() {
        cumulative += probs[mu - 1];
        product *= heaviside(cumulative - epsilons[mu] / leverage);
        q += probs[mu] * product;
    }
    q
}

/// Infinite-network limit with correlated shocks: `p_1` plus the
/// truncated Gaussian integrals of `pi_mu` up to the factor levels where
/// the cascade condition holds.
pub fn limit_correlated(
    dist: &ShockDistribution,
    epsilons: &[f64],
    leverage: f64,
) -> Result<f64, AnalyticsError> {
    let rho = dist.rho();
    if !(0.0 < rho && rho < 1.0) {
        return Err(AnalyticsError::RhoOutOfRange(rho));
    }
    let probs = dist.probs();
    assert_eq!(probs.len(), epsilons.len());
    let z = dist.latent_thresholds();
    let idio_sd = (1.0 - rho).sqrt();
    let normal = std_normal();

    // Upper integration limits l_mu; -inf marks an immune compartment.
    let limits: Vec<f64> = (1..probs.len())
        .map(|mu| {
            if leverage <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let ratio = epsilons[mu] / leverage;
            if ratio >= 1.0 {
                f64::NEG_INFINITY
            } else if ratio <= 0.0 {
                f64::INFINITY
            } else {
                z[mu - 1] - idio_sd * normal.inverse_cdf(ratio)
            }
        })
        .collect();

    // The first integral equals p1 analytically; compute it and assert.
    let first = quad::gaussian_integral_upto(
        rho,
        f64::INFINITY,
        |a| shock::pi_probabilities(a, dist)[0],
        quad::SIMPSON_TOL,
    );
    if (first - probs[0]).abs() > 1e-6 {
        return Err(AnalyticsError::MarginalIdentity {
            got: first,
            expected: probs[0],
        });
    }

    let mut total = probs[0];
    let mut upper = f64::INFINITY;
    for mu in 1..probs.len() {
        upper = upper.min(limits[mu - 1]);
        if upper == f64::NEG_INFINITY {
            continue;
        }
        total += quad::gaussian_integral_upto(
            rho,
            upper,
            |a| shock::pi_probabilities(a, dist)[mu],
            quad::SIMPSON_TOL,
        );
    }
    Ok(total)
}

/// Diversification regime of the uncorrelated infinite-network limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Limit equals `p_1`: the network adds nothing after diversification.
    Subcritical,
    /// Limit equals 1: the whole system defaults.
    Supercritical,
    /// Intermediate plateau at a partial cumulative probability.
    Partial,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::Subcritical => write!(f, "subcritical"),
            Regime::Supercritical => write!(f, "supercritical"),
            Regime::Partial => write!(f, "partial"),
        }
    }
}

pub fn classify_regime(probs: &[f64], epsilons: &[f64], leverage: f64) -> Regime {
    let limit = limit_uncorrelated(probs, epsilons, leverage);
    if (limit - 1.0).abs() < 1e-9 {
        Regime::Supercritical
    } else if (limit - probs[0]).abs() < 1e-9 {
        Regime::Subcritical
    } else {
        Regime::Partial
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const EPSILONS: [f64; 3] = [-0.1, 0.25, 1.0];

    fn fig2a_dist(rho: f64) -> ShockDistribution {
        ShockDistribution::new(vec![-1.1, -0.75, 0.0], vec![0.02, 0.09, 0.89], rho).unwrap()
    }

    #[test]
    fn threshold_rule_examples() {
        // k = 4, leverage 1: m2 = ceil(2 * 0.25) = 1, m3 = ceil(2 * 1) = 2
        assert_eq!(mean_field_threshold(2, 0.25, 1.0), 1);
        assert_eq!(mean_field_threshold(2, 1.0, 1.0), 2);
        // leverage 2: both thresholds collapse to 1
        assert_eq!(mean_field_threshold(2, 0.25, 2.0), 1);
        assert_eq!(mean_field_threshold(2, 1.0, 2.0), 1);
        // immune when equity exceeds total interbank assets
        assert_eq!(mean_field_threshold(2, 1.0, 0.5), 3);
        assert_eq!(mean_field_threshold(2, -0.1, 1.0), 0);
    }

    #[test]
    fn iterate_hand_arithmetic() {
        let p = MeanFieldProblem::new(4, 1.0, &EPSILONS, vec![0.1, 0.2, 0.7]);
        assert_eq!(p.thresholds, vec![0, 1, 2]);
        // 0.1 + 0.2 (1 - 0.9^2) + 0.7 (0.1^2) = 0.145
        assert_abs_diff_eq!(mean_field_iterate(&p, 0.1), 0.145, epsilon = 1e-12);
        // q = 0 seeds only the dead compartment
        assert_abs_diff_eq!(mean_field_iterate(&p, 0.0), 0.1, epsilon = 1e-15);
        // q = 1 with all thresholds reachable gives certainty
        assert_abs_diff_eq!(mean_field_iterate(&p, 1.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn fixed_points_match_closed_form_quadratics() {
        // 0.5 q^2 - 0.6 q + 0.1 = 0 has roots {0.2, 1}; least is 0.2
        let p = MeanFieldProblem::new(4, 1.0, &EPSILONS, vec![0.1, 0.2, 0.7]);
        let sol = solve_q_of_n(&p);
        assert!(sol.converged);
        assert_abs_diff_eq!(sol.q_star, 0.2, epsilon = 1e-9);
        // leverage 2: 0.9 q^2 - 0.8 q - 0.1 = 0 has roots {1, -1/9}
        let p = MeanFieldProblem::new(4, 2.0, &EPSILONS, vec![0.1, 0.2, 0.7]);
        let sol = solve_q_of_n(&p);
        assert_abs_diff_eq!(sol.q_star, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn no_seeds_no_spread() {
        let p = MeanFieldProblem::new(4, 0.0, &EPSILONS, vec![0.0, 0.3, 0.7]);
        assert_eq!(solve_q_of_n(&p).q_star, 0.0);
    }

    #[test]
    fn mean_field_map_is_monotone_in_q() {
        let p = MeanFieldProblem::new(10, 3.0, &EPSILONS, vec![0.05, 0.25, 0.7]);
        let mut prev = mean_field_iterate(&p, 0.0);
        for i in 1..=100 {
            let q = i as f64 / 100.0;
            let next = mean_field_iterate(&p, q);
            assert!(next >= prev - 1e-15, "map decreased at q = {q}");
            prev = next;
        }
    }

    #[test]
    fn expected_q_zero_leverage_is_p1() {
        let (q, bound) = expected_q_uncorrelated(40, &[0.3, 0.2, 0.5], 4, 0.0, &EPSILONS);
        assert_abs_diff_eq!(q, 0.3, epsilon = 1e-12);
        assert!(bound < 1e-12);
    }

    #[test]
    fn expected_q_small_system_brute_force() {
        // N = 2, k = 2, leverage 2, p = (0.5, 0.25, 0.25):
        // compositions with any bank in compartment 1 cascade fully
        // (thresholds m2 = m3 = 1 of a single in-neighbor), others stay
        // at zero; hand expectation = P(N1 >= 1) = 0.25 + 0.25 + 0.25.
        let (q, bound) = expected_q_uncorrelated(2, &[0.5, 0.25, 0.25], 2, 2.0, &EPSILONS);
        assert_abs_diff_eq!(q, 0.75, epsilon = 1e-9);
        assert!(bound < 1e-12);
    }

    #[test]
    fn truncated_box_tracks_exact_enumeration() {
        let probs = [0.1, 0.2, 0.7];
        let exact = expected_q_uncorrelated(60, &probs, 6, 2.0, &EPSILONS);
        let boxed = expected_q_uncorrelated(61, &probs, 6, 2.0, &EPSILONS);
        // adjacent sizes: expectations within a small finite-size step
        assert!((exact.0 - boxed.0).abs() < 0.02);
        assert!(boxed.1 < 1e-6, "neglected mass {}", boxed.1);
    }

    #[test]
    fn q_alpha_limits() {
        let d = fig2a_dist(0.3);
        let eps = d.post_shock_equities();
        // huge common factor: nobody is seeded, thresholds >= 1 hold
        assert_abs_diff_eq!(solve_q_alpha(50.0, &d, 10, 2.0, &eps), 0.0, epsilon = 1e-9);
        // catastrophic common factor: everyone seeded
        assert_abs_diff_eq!(solve_q_alpha(-50.0, &d, 10, 2.0, &eps), 1.0, epsilon = 1e-9);
        // definitional substitution at alpha = 0
        let pis = shock::pi_probabilities(0.0, &d);
        let p = MeanFieldProblem::new(10, 2.0, &eps, pis);
        assert_abs_diff_eq!(
            solve_q_alpha(0.0, &d, 10, 2.0, &eps),
            solve_q_of_n(&p).q_star,
            epsilon = 1e-12
        );
    }

    #[test]
    fn correlated_expectation_is_continuous_at_rho_zero() {
        let d = fig2a_dist(1e-6);
        let eps = d.post_shock_equities();
        let (q, _) = expected_q_correlated(&d, 10, 2.0, &eps).unwrap();
        // mean-value analogue with pi = p
        let p = MeanFieldProblem::new(10, 2.0, &eps, d.probs().to_vec());
        let reference = solve_q_of_n(&p).q_star;
        assert!((q - reference).abs() < 1e-3, "{q} vs {reference}");
    }

    #[test]
    fn eq13_routes_agree_in_smooth_regime() {
        // leverage too small to propagate: q(alpha) reduces to pi_1(alpha),
        // which is smooth, so the fixed-node rule must agree with the
        // adaptive one
        let d = fig2a_dist(0.3);
        let eps = d.post_shock_equities();
        let (q, err) = expected_q_correlated(&d, 10, 0.1, &eps).unwrap();
        let gh = quad::gaussian_expectation(0.3, |a| solve_q_alpha(a, &d, 10, 0.1, &eps));
        assert!((q - gh).abs() < 1e-6, "{q} vs {gh}");
        assert_abs_diff_eq!(q, 0.02, epsilon = 1e-6);
        assert!(err < 1e-6);
    }

    #[test]
    fn limit_uncorrelated_bimodal_and_three_plateau() {
        let probs = [0.02, 0.09, 0.89];
        for lev in [0.2, 1.0, 4.0, 8.0, 12.0] {
            assert_eq!(limit_uncorrelated(&probs, &EPSILONS, lev), 0.02);
        }
        assert_eq!(limit_uncorrelated(&probs, &EPSILONS, 14.0), 1.0);

        let probs = [0.09, 0.083, 0.827];
        assert_eq!(limit_uncorrelated(&probs, &EPSILONS, 2.0), 0.09);
        assert_abs_diff_eq!(limit_uncorrelated(&probs, &EPSILONS, 4.0), 0.173, epsilon = 1e-12);
        assert_eq!(limit_uncorrelated(&probs, &EPSILONS, 8.0), 1.0);
    }

    #[test]
    fn limit_uncorrelated_zero_leverage() {
        assert_eq!(limit_uncorrelated(&[0.02, 0.09, 0.89], &EPSILONS, 0.0), 0.02);
    }

    #[test]
    fn limit_correlated_reference_value() {
        // cross-implementation oracle (scipy quad over the same closed
        // form): 0.193556123413... -- see the acceptance suite for the
        // discussion of the published 0.28 figure, which corresponds to
        // unscaled standard-normal quantiles in the integration limits
        let d = fig2a_dist(0.1);
        let q = limit_correlated(&d, &EPSILONS, 8.0).unwrap();
        assert_abs_diff_eq!(q, 0.193_556_123_4, epsilon = 1e-6);
    }

    #[test]
    fn limit_correlated_small_leverage_is_p1() {
        let d = fig2a_dist(0.1);
        let q = limit_correlated(&d, &EPSILONS, 0.05).unwrap();
        assert_abs_diff_eq!(q, 0.02, epsilon = 1e-6);
    }

    #[test]
    fn regimes_from_limits() {
        assert_eq!(classify_regime(&[0.02, 0.09, 0.89], &EPSILONS, 14.0), Regime::Supercritical);
        assert_eq!(classify_regime(&[0.02, 0.09, 0.89], &EPSILONS, 8.0), Regime::Subcritical);
        assert_eq!(classify_regime(&[0.09, 0.083, 0.827], &EPSILONS, 4.0), Regime::Partial);
    }

    #[test]
    fn binomial_tail_approaches_heaviside_at_large_degree() {
        // spec margin note: at k/2 = 5000 the binomial fraction still has
        // a standard deviation of ~0.007, so the 0.01 band is checked at
        // a degree where the normal tail is actually below 0.01
        let half_k = 100_000;
        for r in [0.1, 0.3, 0.5, 0.8] {
            let m = mean_field_threshold(half_k, r, 1.0);
            for dq in [0.01, 0.05, 0.2] {
                for q in [r - dq, r + dq] {
                    if !(0.0..=1.0).contains(&q) {
                        continue;
                    }
                    let tail = binomial_tail(half_k, m, q);
                    let theta = heaviside(q - r);
                    assert!(
                        (tail - theta).abs() <= 0.01,
                        "k/2={half_k} r={r} q={q}: {tail} vs {theta}"
                    );
                }
            }
        }
    }

    #[test]
    fn eq13_approaches_eq15_like_inverse_sqrt_k() {
        // the finite-degree expectation converges to the limit from above
        // at O(1/sqrt(k)): the binomial tail lets cascades bootstrap in a
        // 1/sqrt(k)-wide boundary layer around the critical factor value.
        // Reference points frozen from an independent implementation
        // (scipy fixed-point + quad): 0.4730 at k/2=500, 0.2805 at k/2=5000.
        let d = fig2a_dist(0.1);
        let eps = d.post_shock_equities();
        let lim = limit_correlated(&d, &eps, 8.0).unwrap();
        let (q_500, _) = expected_q_correlated(&d, 1000, 8.0, &eps).unwrap();
        let (q_5000, _) = expected_q_correlated(&d, 10_000, 8.0, &eps).unwrap();
        assert_abs_diff_eq!(q_500, 0.4730, epsilon = 0.005);
        assert_abs_diff_eq!(q_5000, 0.2805, epsilon = 0.005);
        let gap_500 = q_500 - lim;
        let gap_5000 = q_5000 - lim;
        assert!(gap_500 > 0.0 && gap_5000 > 0.0, "approach must be from above");
        // a decade in k shrinks the gap by ~1/sqrt(10)
        assert!(
            gap_5000 < 0.5 * gap_500,
            "gap did not shrink: {gap_500} -> {gap_5000}"
        );
    }

    #[test]
    fn expectation_monotone_in_leverage() {
        let probs = [0.05, 0.15, 0.8];
        let mut prev = 0.0;
        for lev in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let (q, _) = expected_q_uncorrelated(40, &probs, 8, lev, &EPSILONS);
            assert!(q >= prev - 1e-9, "not monotone at leverage {lev}");
            prev = q;
        }
    }
}
