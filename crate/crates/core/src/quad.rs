//! Numerical integration over the latent common factor.
//!
//! Expectations of the form `E[g(X)]` with `X ~ N(0, var)` appear in the
//! correlated compartment PMF and in the correlated mean-field analytics.
//! The primary route is Gauss-Hermite quadrature after the change of
//! variable `alpha = sqrt(2 var) t`; adaptive Simpson on a wide truncated
//! interval serves as the independent cross-check and handles the
//! semi-infinite integrals with a finite upper limit.

use std::sync::OnceLock;

use thiserror::Error;

/// Default number of Gauss-Hermite nodes for the latent-factor integrals.
pub const GH_NODES: usize = 256;

/// Absolute tolerance for the adaptive Simpson cross-check.
pub const SIMPSON_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum QuadError {
    #[error("quadrature did not converge, achieved error estimate {estimate:e}")]
    NonConvergence { estimate: f64 },
}

/// Gauss-Hermite rule for the physicists' weight `exp(-t^2)`.
#[derive(Debug, Clone)]
pub struct HermiteRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl HermiteRule {
    /// Computes nodes and weights by Golub-Welsch: the nodes are the
    /// eigenvalues of the symmetric tridiagonal Jacobi matrix of the
    /// Hermite recurrence (off-diagonal `sqrt(j/2)`), the weights are
    /// `sqrt(pi)` times the squared first eigenvector components.
    pub fn new(n: usize) -> Self {
        assert!(n >= 2);
        let mut jacobi = nalgebra::DMatrix::<f64>::zeros(n, n);
        for j in 1..n {
            let b = (j as f64 / 2.0).sqrt();
            jacobi[(j - 1, j)] = b;
            jacobi[(j, j - 1)] = b;
        }
        let eig = nalgebra::SymmetricEigen::new(jacobi);
        let mu0 = std::f64::consts::PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], mu0 * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        // the rule is symmetric; enforce it exactly against eigen jitter
        let half = n / 2;
        for i in 0..half {
            let node = 0.5 * (pairs[n - 1 - i].0 - pairs[i].0);
            let weight = 0.5 * (pairs[i].1 + pairs[n - 1 - i].1);
            pairs[i] = (-node, weight);
            pairs[n - 1 - i] = (node, weight);
        }
        if n % 2 == 1 {
            pairs[half].0 = 0.0;
        }
        let (nodes, weights) = pairs.into_iter().unzip();
        Self { nodes, weights }
    }

    /// `E[g(X)]` for `X ~ N(0, var)` under this rule.
    pub fn gaussian_expectation(&self, var: f64, g: impl Fn(f64) -> f64) -> f64 {
        let scale = (2.0 * var).sqrt();
        let mut acc = 0.0;
        for (&t, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * g(scale * t);
        }
        acc / std::f64::consts::PI.sqrt()
    }
}

fn rule_256() -> &'static HermiteRule {
    static RULE: OnceLock<HermiteRule> = OnceLock::new();
    RULE.get_or_init(|| HermiteRule::new(GH_NODES))
}

fn rule_128() -> &'static HermiteRule {
    static RULE: OnceLock<HermiteRule> = OnceLock::new();
    RULE.get_or_init(|| HermiteRule::new(GH_NODES / 2))
}

/// `E[g(X)]` for `X ~ N(0, var)` with the cached 256-node rule.
pub fn gaussian_expectation(var: f64, g: impl Fn(f64) -> f64) -> f64 {
    rule_256().gaussian_expectation(var, g)
}

/// Same expectation with an internal error estimate (256 vs 128 nodes).
pub fn gaussian_expectation_checked(
    var: f64,
    g: impl Fn(f64) -> f64,
    tol: f64,
) -> Result<(f64, f64), QuadError> {
    let coarse = rule_128().gaussian_expectation(var, &g);
    let fine = rule_256().gaussian_expectation(var, &g);
    let estimate = (fine - coarse).abs();
    if estimate > tol {
        return Err(QuadError::NonConvergence { estimate });
    }
    Ok((fine, estimate))
}

pub fn normal_pdf(x: f64, var: f64) -> f64 {
    (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Adaptive Simpson quadrature with the usual 15x error rule.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // conservative acceptance: the 15x Richardson bound underestimates on
    // integrands with sharp tails, so the factor is kept as safety margin
    if depth == 0 || delta.abs() <= tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// `∫_{-inf}^{upper} N(0, var)(alpha) g(alpha) d alpha` by adaptive Simpson.
///
/// The lower tail is truncated at 12 standard deviations, where the
/// Gaussian weight is below 1e-31.
pub fn gaussian_integral_upto(var: f64, upper: f64, g: impl Fn(f64) -> f64, tol: f64) -> f64 {
    let sd = var.sqrt();
    let lo = -12.0 * sd;
    let hi = upper.min(12.0 * sd);
    if hi <= lo {
        return 0.0;
    }
    let integrand = |alpha: f64| normal_pdf(alpha, var) * g(alpha);
    adaptive_simpson(&integrand, lo, hi, tol)
}
