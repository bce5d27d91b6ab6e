//! Discrete shock distribution, single-factor Gaussian copula sampling,
//! and exact compartment-count probability mass functions.
//!
//! Shocks take values out of a discrete set `sigma_1 < -1` (immediate
//! default), `sigma_mu in [-1, 0)` (partial equity loss) and
//! `sigma_last = 0` (no loss). Correlation is introduced by decomposing a
//! latent standard normal per bank into a common factor `X ~ N(0, rho)` and
//! an idiosyncratic part `Y_i ~ N(0, 1 - rho)`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::quad::{self, QuadError};

/// Correlations above this are clamped to avoid a zero-variance
/// idiosyncratic component.
pub const RHO_CAP: f64 = 0.999;

#[derive(Debug, Error)]
pub enum ShockError {
    #[error("need at least two shock values, got {0}")]
    TooFewClasses(usize),
    #[error("sigmas and probs must have equal length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("sigma_1 must be < -1 (immediate default), got {0}")]
    FirstShockTooSmall(f64),
    #[error("intermediate shock {0} must lie in [-1, 0)")]
    IntermediateShockOutOfRange(f64),
    #[error("last shock must be 0, got {0}")]
    LastShockNonZero(f64),
    #[error("probabilities must be non-negative and sum to 1 (sum = {0})")]
    InvalidProbabilities(f64),
    #[error("correlation must lie in [0, 1), got {0}")]
    InvalidRho(f64),
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

fn phi(x: f64) -> f64 {
    std_normal().cdf(x)
}

fn phi_inv(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        std_normal().inverse_cdf(p)
    }
}

/// Discrete shock distribution with equicorrelation `rho`.
#[derive(Debug, Clone)]
pub struct ShockDistribution {
    sigmas: Vec<f64>,
    probs: Vec<f64>,
    rho: f64,
    cumulative: Vec<f64>,
}

impl ShockDistribution {
    pub fn new(sigmas: Vec<f64>, probs: Vec<f64>, rho: f64) -> Result<Self, ShockError> {
        if sigmas.len() < 2 {
            return Err(ShockError::TooFewClasses(sigmas.len()));
        }
        if sigmas.len() != probs.len() {
            return Err(ShockError::LengthMismatch(sigmas.len(), probs.len()));
        }
        if !(sigmas[0] < -1.0) {
            return Err(ShockError::FirstShockTooSmall(sigmas[0]));
        }
        for &s in &sigmas[1..sigmas.len() - 1] {
            if !(-1.0..0.0).contains(&s) {
                return Err(ShockError::IntermediateShockOutOfRange(s));
            }
        }
        let last = *sigmas.last().unwrap();
        if last != 0.0 {
            return Err(ShockError::LastShockNonZero(last));
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(ShockError::InvalidProbabilities(sum));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(ShockError::InvalidRho(rho));
        }
        let rho = rho.min(RHO_CAP);
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in &probs {
            acc += p;
            cumulative.push(acc);
        }
        *cumulative.last_mut().unwrap() = 1.0;
        Ok(Self {
            sigmas,
            probs,
            rho,
            cumulative,
        })
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Running sums of the class probabilities (`p_I`, `p_II`, ..., 1).
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn n_classes(&self) -> usize {
        self.sigmas.len()
    }

    /// Post-shock equities `eps_mu = 1 + sigma_mu`.
    pub fn post_shock_equities(&self) -> Vec<f64> {
        self.sigmas.iter().map(|s| 1.0 + s).collect()
    }

    /// Latent-scale thresholds `z_mu = Phi^{-1}(cum_mu)` for the inner
    /// class boundaries (length `n_classes - 1`).
    pub fn latent_thresholds(&self) -> Vec<f64> {
        self.cumulative[..self.cumulative.len() - 1]
            .iter()
            .map(|&c| phi_inv(c))
            .collect()
    }

    /// Compartment index of a shock value drawn from this distribution.
    pub fn compartment_of(&self, value: f64) -> usize {
        self.sigmas
            .iter()
            .position(|&s| s == value)
            .expect("shock value not in distribution")
    }
}

/// Counts of banks per shock compartment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompartmentVector {
    counts: Vec<u64>,
}

impl CompartmentVector {
    pub fn new(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// One sampled shock realization for `n` banks.
#[derive(Debug, Clone)]
pub struct ShockVector {
    pub values: Vec<f64>,
    pub compartments: CompartmentVector,
}

/// Inverse transform through the discrete shock CDF: returns the first
/// class whose cumulative probability covers `u`.
pub fn inverse_shock_cdf(u: f64, dist: &ShockDistribution) -> f64 {
    for (i, &c) in dist.cumulative().iter().enumerate() {
        if u <= c {
            return dist.sigmas()[i];
        }
    }
    *dist.sigmas().last().unwrap()
}

/// Samples a shock vector for `n` banks using the given RNG.
///
/// With `rho = 0` the uniforms are independent; otherwise they come from a
/// single-factor Gaussian copula: one common draw `x ~ N(0, rho)` shared
/// across all banks plus idiosyncratic `y_i ~ N(0, 1 - rho)`.
pub fn sample_shocks_with<R: Rng + ?Sized>(
    dist: &ShockDistribution,
    n: usize,
    rng: &mut R,
) -> ShockVector {
    let mut counts = vec![0u64; dist.n_classes()];
    let mut values = Vec::with_capacity(n);
    if dist.rho() == 0.0 {
        for _ in 0..n {
            let u: f64 = rng.gen();
            let s = inverse_shock_cdf(u, dist);
            counts[dist.compartment_of(s)] += 1;
            values.push(s);
        }
    } else {
        let rho = dist.rho();
        let x = rho.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let idio_sd = (1.0 - rho).sqrt();
        for _ in 0..n {
            let y = idio_sd * rng.sample::<f64, _>(StandardNormal);
            let u = phi(x + y);
            let s = inverse_shock_cdf(u, dist);
            counts[dist.compartment_of(s)] += 1;
            values.push(s);
        }
    }
    ShockVector {
        values,
        compartments: CompartmentVector::new(counts),
    }
}

/// Deterministic sampling entry point: fixed seed, fixed output.
pub fn sample_shocks(dist: &ShockDistribution, n: usize, seed: u64) -> ShockVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_shocks_with(dist, n, &mut rng)
}

fn ln_multinomial_coefficient(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let mut acc = ln_gamma(total as f64 + 1.0);
    for &c in counts {
        acc -= ln_gamma(c as f64 + 1.0);
    }
    acc
}

/// Multinomial PMF of the compartment counts, evaluated in log space.
pub fn multinomial_pmf(counts: &CompartmentVector, probs: &[f64]) -> f64 {
    assert_eq!(counts.counts().len(), probs.len());
    let mut log_p = ln_multinomial_coefficient(counts.counts());
    for (&c, &p) in counts.counts().iter().zip(probs) {
        if c > 0 {
            if p <= 0.0 {
                return 0.0;
            }
            log_p += c as f64 * p.ln();
        }
    }
    log_p.exp()
}

fn pi_from_thresholds(alpha: f64, thresholds: &[f64], rho: f64) -> Vec<f64> {
    let idio_sd = (1.0 - rho).sqrt();
    let fy = |t: f64| {
        if t == f64::INFINITY {
            1.0
        } else if t == f64::NEG_INFINITY {
            0.0
        } else {
            phi(t / idio_sd)
        }
    };
    let n = thresholds.len() + 1;
    let mut pis = Vec::with_capacity(n);
    let mut lower = 0.0;
    for &z in thresholds {
        let upper = fy(z - alpha);
        pis.push((upper - lower).max(0.0));
        lower = upper;
    }
    pis.push((1.0 - lower).max(0.0));
    pis
}

/// Conditional class probabilities `pi_mu(alpha)` given the common factor
/// value `alpha`: `pi_mu = F_Y(z_mu - alpha) - F_Y(z_{mu-1} - alpha)` with
/// `F_Y` the normal CDF with variance `1 - rho`.
pub fn pi_probabilities(alpha: f64, dist: &ShockDistribution) -> Vec<f64> {
    pi_from_thresholds(alpha, &dist.latent_thresholds(), dist.rho())
}

fn cumulative_thresholds(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs[..probs.len() - 1]
        .iter()
        .map(|&p| {
            acc += p;
            phi_inv(acc)
        })
        .collect()
}

/// PMF of the compartment counts under the single-factor copula: the
/// Gaussian mixture of multinomials over the common factor.
///
/// At `rho = 0` this is exactly the multinomial PMF, no quadrature.
pub fn correlated_pmf(
    counts: &CompartmentVector,
    probs: &[f64],
    rho: f64,
) -> Result<f64, QuadError> {
    assert_eq!(counts.counts().len(), probs.len());
    if rho == 0.0 {
        return Ok(multinomial_pmf(counts, probs));
    }
    let rho = rho.min(RHO_CAP);
    let thresholds = cumulative_thresholds(probs);
    let log_coef = ln_multinomial_coefficient(counts.counts());
    let integrand = |alpha: f64| {
        let pis = pi_from_thresholds(alpha, &thresholds, rho);
        let mut log_p = log_coef;
        for (&c, &pi) in counts.counts().iter().zip(&pis) {
            if c > 0 {
                if pi <= 0.0 {
                    return 0.0;
                }
                log_p += c as f64 * pi.ln();
            }
        }
        log_p.exp()
    };
    let (value, _) = quad::gaussian_expectation_checked(rho, integrand, 1e-9)?;
    Ok(value)
}

/// Adaptive-Simpson route for the correlated PMF; test cross-check for the
/// Gauss-Hermite path used by [`correlated_pmf`].
pub fn correlated_pmf_simpson(counts: &CompartmentVector, probs: &[f64], rho: f64) -> f64 {
    if rho == 0.0 {
        return multinomial_pmf(counts, probs);
    }
    let rho = rho.min(RHO_CAP);
    let thresholds = cumulative_thresholds(probs);
    let log_coef = ln_multinomial_coefficient(counts.counts());
    quad::gaussian_integral_upto(
        rho,
        f64::INFINITY,
        |alpha| {
            let pis = pi_from_thresholds(alpha, &thresholds, rho);
            let mut log_p = log_coef;
            for (&c, &pi) in counts.counts().iter().zip(&pis) {
                if c > 0 {
                    if pi <= 0.0 {
                        return 0.0;
                    }
                    log_p += c as f64 * pi.ln();
                }
            }
            log_p.exp()
        },
        quad::SIMPSON_TOL,
    )
}

/// All compositions of `total` into `classes` non-negative parts.
pub fn compositions(total: u64, classes: usize) -> Vec<Vec<u64>> {
    fn rec(remaining: u64, slots: usize, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if slots == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for c in 0..=remaining {
            prefix.push(c);
            rec(remaining - c, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(total, classes, &mut Vec::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dist(rho: f64) -> ShockDistribution {
        ShockDistribution::new(vec![-1.1, -0.75, 0.0], vec![0.02, 0.09, 0.89], rho).unwrap()
    }

    #[test]
    fn inverse_cdf_piecewise_rule() {
        let d = dist(0.0);
        assert_eq!(inverse_shock_cdf(0.0, &d), -1.1);
        assert_eq!(inverse_shock_cdf(1.0, &d), 0.0);
        // 0.02 < 0.05 <= 0.11 -> sigma_2
        assert_eq!(inverse_shock_cdf(0.05, &d), -0.75);
        assert_eq!(inverse_shock_cdf(0.02, &d), -1.1);
    }

    #[test]
    fn rejects_invalid_distributions() {
        assert!(ShockDistribution::new(vec![-0.9, 0.0], vec![0.5, 0.5], 0.0).is_err());
        assert!(ShockDistribution::new(vec![-1.1, -0.5, 0.0], vec![0.5, 0.3, 0.3], 0.0).is_err());
        assert!(ShockDistribution::new(vec![-1.1, 0.0], vec![0.5, 0.5], 1.0).is_err());
        assert!(ShockDistribution::new(vec![-1.1, 0.1], vec![0.5, 0.5], 0.0).is_err());
    }

    #[test]
    fn multinomial_small_cases() {
        let probs = [0.5, 0.3, 0.2];
        let all_first = CompartmentVector::new(vec![2, 0, 0]);
        // log-space evaluation: accurate to ~1 ulp times the gamma count
        assert_abs_diff_eq!(multinomial_pmf(&all_first, &probs), 0.25, epsilon = 1e-13);
        let split = CompartmentVector::new(vec![1, 1, 0]);
        assert_abs_diff_eq!(multinomial_pmf(&split, &probs), 0.30, epsilon = 1e-13);
    }

    #[test]
    fn multinomial_normalizes_over_compositions() {
        let probs = [0.5, 0.3, 0.2];
        let total: f64 = compositions(20, 3)
            .into_iter()
            .map(|c| multinomial_pmf(&CompartmentVector::new(c), &probs))
            .sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn multinomial_survives_large_counts() {
        // log-space evaluation must not overflow at N = 10^4
        let probs = [0.02, 0.09, 0.89];
        let counts = CompartmentVector::new(vec![200, 900, 8900]);
        let p = multinomial_pmf(&counts, &probs);
        assert!(p.is_finite() && p > 0.0);
    }

    #[test]
    fn correlated_pmf_degenerates_to_multinomial() {
        let probs = [0.5, 0.3, 0.2];
        for counts in compositions(2, 3) {
            let cv = CompartmentVector::new(counts);
            assert_abs_diff_eq!(
                correlated_pmf(&cv, &probs, 0.0).unwrap(),
                multinomial_pmf(&cv, &probs),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn correlated_pmf_normalizes() {
        let probs = [0.5, 0.3, 0.2];
        let total: f64 = compositions(2, 3)
            .into_iter()
            .map(|c| correlated_pmf(&CompartmentVector::new(c), &probs, 0.3).unwrap())
            .sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn correlated_pmf_agrees_with_simpson_route() {
        let probs = [0.5, 0.3, 0.2];
        for counts in compositions(3, 3) {
            let cv = CompartmentVector::new(counts);
            let gh = correlated_pmf(&cv, &probs, 0.3).unwrap();
            let simpson = correlated_pmf_simpson(&cv, &probs, 0.3);
            assert_abs_diff_eq!(gh, simpson, epsilon = 1e-8);
        }
    }

    #[test]
    fn pi_probabilities_cdf_limits() {
        let d = dist(0.3);
        let low = pi_probabilities(-60.0, &d);
        assert_abs_diff_eq!(low[0], 1.0, epsilon = 1e-12);
        let high = pi_probabilities(60.0, &d);
        assert_abs_diff_eq!(high[2], 1.0, epsilon = 1e-12);
        let mid = pi_probabilities(0.0, &d);
        assert_abs_diff_eq!(mid.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pi_mixture_recovers_marginals() {
        // E_X[pi_mu(X)] = p_mu
        let d = dist(0.3);
        for (mu, &p) in d.probs().iter().enumerate() {
            let mean = quad::gaussian_expectation(d.rho(), |a| pi_probabilities(a, &d)[mu]);
            assert_abs_diff_eq!(mean, p, epsilon = 1e-8);
        }
    }

    #[test]
    fn sampler_is_deterministic() {
        let d = dist(0.3);
        let a = sample_shocks(&d, 500, 42);
        let b = sample_shocks(&d, 500, 42);
        assert_eq!(a.values, b.values);
        let c = sample_shocks(&d, 500, 43);
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn independent_sampler_matches_marginals() {
        let d = dist(0.0);
        let v = sample_shocks(&d, 100_000, 7);
        for (mu, &p) in d.probs().iter().enumerate() {
            let freq = v.compartments.counts()[mu] as f64 / 100_000.0;
            assert!((freq - p).abs() < 0.01, "class {mu}: {freq} vs {p}");
        }
    }

    #[test]
    fn near_comonotone_limit_collapses_compartments() {
        let d = dist(0.999);
        let mut same = 0;
        for seed in 0..200 {
            let v = sample_shocks(&d, 100, seed);
            if v.compartments.counts().iter().any(|&c| c == 100) {
                same += 1;
            }
        }
        assert!(same >= 190, "only {same}/200 vectors were single-compartment");
    }

    #[test]
    fn initial_default_fraction_is_positively_skewed() {
        // sample skewness of N1/N under rho > 0
        let d = ShockDistribution::new(vec![-1.1, -0.75, 0.0], vec![0.02, 0.09, 0.89], 0.3).unwrap();
        let n = 1000;
        let samples: Vec<f64> = (0..10_000u64)
            .map(|seed| sample_shocks(&d, n, seed).compartments.counts()[0] as f64 / n as f64)
            .collect();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let m2 = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / samples.len() as f64;
        let m3 = samples.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / samples.len() as f64;
        let skew = m3 / m2.powf(1.5);
        assert!(skew > 0.0, "skewness {skew} not positive");
    }
}
