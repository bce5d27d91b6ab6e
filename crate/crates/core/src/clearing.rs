//! Balance-sheet shock propagation to its fixed point, plus the
//! equivalent integer threshold cascade for the zero-recovery case.
//!
//! Updates are synchronous: every bank revalues its interbank portfolio
//! using counterparties' default indicators from the previous step. A
//! defaulted counterparty's arc is worth `w * delta * R_j`, a live one `w`.
//! Defaults are absorbing (`E_i < 0` observed at any step).

use crate::graph::FinancialSystem;
use crate::graph::RegularGraph;
use crate::shock::ShockVector;

/// Per-bank balance-sheet state during a cascade.
#[derive(Debug, Clone)]
pub struct BankState {
    pub external_assets: f64,
    pub interbank_asset_value: f64,
    pub equity: f64,
    pub defaulted: bool,
    /// Endogenous recovery rate, meaningful once defaulted.
    pub recovery: f64,
}

/// Outcome of one synchronous propagation step.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    /// Max absolute equity change among banks live at the start of the step.
    pub max_equity_change: f64,
    pub new_defaults: usize,
}

/// Result of one cascade realization.
#[derive(Debug, Clone)]
pub struct CascadeResult {
    pub default_indicators: Vec<bool>,
    pub default_fraction: f64,
    /// Whether any default occurred beyond the initially shocked-to-default set.
    pub triggered: bool,
    pub iterations: usize,
    pub converged: bool,
}

impl CascadeResult {
    fn from_indicators(indicators: Vec<bool>, initial: &[bool], iterations: usize, converged: bool) -> Self {
        let n = indicators.len().max(1);
        let defaults = indicators.iter().filter(|&&d| d).count();
        let triggered = indicators
            .iter()
            .zip(initial)
            .any(|(&now, &init)| now && !init);
        Self {
            default_fraction: defaults as f64 / n as f64,
            default_indicators: indicators,
            triggered,
            iterations,
            converged,
        }
    }
}

/// Fraction of interbank liabilities a defaulted bank can still repay.
pub fn recovery_rate(state: &BankState, liabilities: f64) -> f64 {
    if liabilities <= 0.0 {
        return 0.0;
    }
    let residual = (state.external_assets + state.interbank_asset_value).max(0.0);
    residual.min(liabilities) / liabilities
}

/// Applies the external shock: `A^e_i = 1 + s_i`, equities recomputed,
/// banks with negative equity marked defaulted.
pub fn apply_shock(system: &FinancialSystem, shocks: &ShockVector) -> Vec<BankState> {
    assert_eq!(shocks.values.len(), system.n());
    let w = system.exposure_weight;
    (0..system.n())
        .map(|i| {
            let external = 1.0 + shocks.values[i];
            let indeg = system.graph.in_neighbors(i).len();
            let interbank = indeg as f64 * w;
            let equity = external + interbank - system.interbank_liabilities[i];
            let mut state = BankState {
                external_assets: external,
                interbank_asset_value: interbank,
                equity,
                defaulted: equity < 0.0,
                recovery: 0.0,
            };
            if state.defaulted {
                state.recovery = recovery_rate(&state, system.interbank_liabilities[i]);
            }
            state
        })
        .collect()
}

/// One synchronous revaluation pass over all banks.
pub fn propagate_step(states: &mut [BankState], system: &FinancialSystem) -> StepOutcome {
    let w = system.exposure_weight;
    let delta = system.delta;
    let prev_defaulted: Vec<bool> = states.iter().map(|s| s.defaulted).collect();
    let prev_recovery: Vec<f64> = states.iter().map(|s| s.recovery).collect();

    let mut max_change = 0.0f64;
    let mut new_defaults = 0usize;
    for i in 0..states.len() {
        let neighbors = system.graph.in_neighbors(i);
        let interbank = if delta == 0.0 {
            let live = neighbors
                .iter()
                .filter(|&&j| !prev_defaulted[j as usize])
                .count();
            live as f64 * w
        } else {
            neighbors
                .iter()
                .map(|&j| {
                    let j = j as usize;
                    if prev_defaulted[j] {
                        w * delta * prev_recovery[j]
                    } else {
                        w
                    }
                })
                .sum()
        };
        let equity = states[i].external_assets + interbank - system.interbank_liabilities[i];
        if !prev_defaulted[i] {
            max_change = max_change.max((equity - states[i].equity).abs());
        }
        states[i].interbank_asset_value = interbank;
        states[i].equity = equity;
        if equity < 0.0 && !states[i].defaulted {
            states[i].defaulted = true;
            new_defaults += 1;
        }
        if states[i].defaulted {
            // Re-marked each step: recoveries can shrink as the defaulted
            // bank's own debtors default.
            states[i].recovery = recovery_rate(&states[i], system.interbank_liabilities[i]);
        }
    }
    StepOutcome {
        max_equity_change: max_change,
        new_defaults,
    }
}

/// Iterates the propagation map to its fixed point.
///
/// Stops when a step produces no new defaults and all live-bank equity
/// changes are below `tol` (of the unit initial equity), or at `cutoff`
/// steps. With `delta = 0` the defaulted set grows monotonically and the
/// fixed point is reached in at most `n` steps.
pub fn run_cascade(
    system: &FinancialSystem,
    shocks: &ShockVector,
    tol: f64,
    cutoff: usize,
) -> CascadeResult {
    assert!(tol > 0.0);
    assert!(cutoff >= 1);
    let mut states = apply_shock(system, shocks);
    let initial: Vec<bool> = states.iter().map(|s| s.defaulted).collect();
    let mut iterations = 0usize;
    let mut converged = false;
    while iterations < cutoff {
        iterations += 1;
        let outcome = propagate_step(&mut states, system);
        // With delta = 0 a step without new defaults leaves the indicator
        // vector, and hence all valuations, unchanged: that step is the
        // fixed point no matter the tolerance. With delta > 0 recoveries
        // keep moving, so the equity-change criterion applies.
        let at_fixed_point = if system.delta == 0.0 {
            outcome.new_defaults == 0
        } else {
            outcome.new_defaults == 0 && outcome.max_equity_change < tol
        };
        if at_fixed_point {
            converged = true;
            break;
        }
    }
    let indicators: Vec<bool> = states.iter().map(|s| s.defaulted).collect();
    CascadeResult::from_indicators(indicators, &initial, iterations, converged)
}

/// Smallest count of defaulted borrowers that pushes a bank with post-shock
/// external assets `epsilon` below zero equity; `half_k + 1` means immune.
///
/// Evaluates the same floating-point equity expression as the clearing
/// engine, so both engines share the exact default boundary.
pub fn strict_threshold_count(half_k: usize, epsilon: f64, weight: f64, liabilities: f64) -> usize {
    for m in 0..=half_k {
        if epsilon + (half_k - m) as f64 * weight - liabilities < 0.0 {
            return m;
        }
    }
    half_k + 1
}

/// Pure integer threshold cascade, equivalent to [`run_cascade`] with
/// `delta = 0`: a bank defaults once its count of defaulted in-neighbors
/// reaches the compartment threshold.
pub fn threshold_cascade(
    graph: &RegularGraph,
    shocks: &ShockVector,
    leverage: f64,
) -> CascadeResult {
    let n = graph.n();
    assert_eq!(shocks.values.len(), n);
    let half = graph.half_k();
    let (weight, liab) = if half == 0 {
        (0.0, 0.0)
    } else {
        (leverage / half as f64, leverage)
    };

    // Distinct shock values present, with their threshold counts.
    let mut classes: Vec<(f64, usize)> = Vec::new();
    let class_of: Vec<usize> = shocks
        .values
        .iter()
        .map(|&s| {
            if let Some(idx) = classes.iter().position(|&(v, _)| v == s) {
                idx
            } else {
                let eps = 1.0 + s;
                classes.push((s, strict_threshold_count(half, eps, weight, liab)));
                classes.len() - 1
            }
        })
        .collect();

    let mut defaulted = vec![false; n];
    let mut counts = vec![0usize; n];
    let mut frontier: Vec<u32> = Vec::new();
    for i in 0..n {
        if classes[class_of[i]].1 == 0 {
            defaulted[i] = true;
            frontier.push(i as u32);
        }
    }
    let initial = defaulted.clone();

    let mut iterations = 0usize;
    while !frontier.is_empty() {
        iterations += 1;
        let mut touched: Vec<u32> = Vec::new();
        for &f in &frontier {
            for &creditor in graph.out_neighbors(f as usize) {
                counts[creditor as usize] += 1;
                touched.push(creditor);
            }
        }
        let mut next = Vec::new();
        for &c in &touched {
            let c = c as usize;
            if !defaulted[c] && counts[c] >= classes[class_of[c]].1 {
                defaulted[c] = true;
                next.push(c as u32);
            }
        }
        frontier = next;
    }
    // Iteration counts are engine-specific: this one counts frontier
    // rounds, the clearing engine counts synchronous revaluation steps.
    // The defaulted set is what the two engines must agree on.
    CascadeResult::from_indicators(defaulted, &initial, iterations.max(1), true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_system, generate_k_regular};
    use crate::shock::{CompartmentVector, ShockVector};

    fn shock_vector(values: Vec<f64>) -> ShockVector {
        // compartment bookkeeping is irrelevant for the engines
        ShockVector {
            compartments: CompartmentVector::new(vec![values.len() as u64]),
            values,
        }
    }

    fn two_bank_system(leverage: f64) -> FinancialSystem {
        let g = generate_k_regular(2, 2, 0).unwrap();
        build_system(g, leverage, 0.0).unwrap()
    }

    #[test]
    fn null_shock_is_a_fixed_point() {
        let sys = two_bank_system(2.0);
        let states = apply_shock(&sys, &shock_vector(vec![0.0, 0.0]));
        assert!(states.iter().all(|s| !s.defaulted && (s.equity - 1.0).abs() < 1e-12));
        let res = run_cascade(&sys, &shock_vector(vec![0.0, 0.0]), 0.03, 1000);
        assert_eq!(res.default_fraction, 0.0);
        assert!(!res.triggered);
        assert!(res.converged);
    }

    #[test]
    fn immediate_default_only_from_sigma_below_minus_one() {
        let sys = two_bank_system(2.0);
        let states = apply_shock(&sys, &shock_vector(vec![-1.1, -0.75]));
        assert!(states[0].defaulted);
        assert!((states[0].equity - (-0.1)).abs() < 1e-12);
        assert!(!states[1].defaulted);
        assert!((states[1].equity - 0.25).abs() < 1e-12);
    }

    #[test]
    fn recovery_rate_examples() {
        let state = BankState {
            external_assets: 0.5,
            interbank_asset_value: 2.0,
            equity: -0.5,
            defaulted: true,
            recovery: 0.0,
        };
        assert!((recovery_rate(&state, 3.0) - 2.5 / 3.0).abs() < 1e-12);
        let broke = BankState {
            external_assets: -1.0,
            interbank_asset_value: 0.5,
            equity: -3.0,
            defaulted: true,
            recovery: 0.0,
        };
        assert_eq!(recovery_rate(&broke, 3.0), 0.0);
        let rich = BankState {
            external_assets: 2.0,
            interbank_asset_value: 3.0,
            equity: 2.0,
            defaulted: true,
            recovery: 0.0,
        };
        assert_eq!(recovery_rate(&rich, 3.0), 1.0);
        assert_eq!(recovery_rate(&rich, 0.0), 0.0);
    }

    #[test]
    fn two_bank_cascade_propagates_at_high_leverage() {
        let sys = two_bank_system(2.0);
        let res = run_cascade(&sys, &shock_vector(vec![-1.1, 0.0]), 0.03, 1000);
        assert_eq!(res.default_fraction, 1.0);
        assert!(res.triggered);
        assert_eq!(res.iterations, 2);
        assert!(res.converged);
    }

    #[test]
    fn two_bank_cascade_stops_at_low_leverage() {
        let sys = two_bank_system(0.5);
        let res = run_cascade(&sys, &shock_vector(vec![-1.1, 0.0]), 0.03, 1000);
        assert_eq!(res.default_fraction, 0.5);
        assert!(!res.triggered);
    }

    #[test]
    fn complete_four_bank_system_collapses() {
        let g = generate_k_regular(4, 6, 0).unwrap();
        let sys = build_system(g, 8.0, 0.0).unwrap();
        let res = run_cascade(&sys, &shock_vector(vec![-1.1, 0.0, 0.0, 0.0]), 0.03, 1000);
        assert_eq!(res.default_fraction, 1.0);
        assert!(res.triggered);
    }

    #[test]
    fn zero_leverage_never_propagates() {
        let g = generate_k_regular(5, 4, 1).unwrap();
        let sys = build_system(g, 0.0, 0.0).unwrap();
        let res = run_cascade(&sys, &shock_vector(vec![-1.1, -1.1, 0.0, 0.0, 0.0]), 0.03, 1000);
        assert!((res.default_fraction - 0.4).abs() < 1e-15);
        assert!(!res.triggered);
        assert_eq!(res.iterations, 1);
    }

    #[test]
    fn strict_threshold_count_examples() {
        // eps_2 = 0.25, leverage 2, k = 10: smallest m with 0.4 m > 0.25 is 1
        assert_eq!(strict_threshold_count(5, 0.25, 0.4, 2.0), 1);
        // immune when even all borrowers defaulting cannot erase equity
        assert_eq!(strict_threshold_count(5, 1.0, 0.1, 0.5), 6);
        // negative post-shock equity defaults unconditionally
        assert_eq!(strict_threshold_count(5, -0.1, 0.4, 2.0), 0);
    }

    #[test]
    fn engines_agree_on_the_named_examples() {
        let cases: Vec<(usize, usize, f64, Vec<f64>)> = vec![
            (2, 2, 2.0, vec![-1.1, 0.0]),
            (2, 2, 0.5, vec![-1.1, 0.0]),
            (4, 6, 8.0, vec![-1.1, 0.0, 0.0, 0.0]),
        ];
        for (n, k, lev, shocks) in cases {
            let g = generate_k_regular(n, k, 0).unwrap();
            let sys = build_system(g.clone(), lev, 0.0).unwrap();
            let sv = shock_vector(shocks);
            let a = run_cascade(&sys, &sv, 0.03, 1000);
            let b = threshold_cascade(&g, &sv, lev);
            assert_eq!(a.default_indicators, b.default_indicators);
            assert_eq!(a.triggered, b.triggered);
            assert_eq!(a.default_fraction, b.default_fraction);
        }
    }

    #[test]
    fn defaults_are_monotone_and_terminate_within_n_steps() {
        let g = generate_k_regular(30, 6, 3).unwrap();
        let sys = build_system(g, 4.0, 0.0).unwrap();
        let mut values = vec![0.0; 30];
        values[0] = -1.1;
        values[1] = -1.1;
        for i in 2..20 {
            values[i] = -0.75;
        }
        let sv = shock_vector(values);
        let mut states = apply_shock(&sys, &sv);
        let mut prev_defaults = states.iter().filter(|s| s.defaulted).count();
        let mut prev_equities: Vec<f64> = states.iter().map(|s| s.equity).collect();
        for _ in 0..30 {
            let outcome = propagate_step(&mut states, &sys);
            let defaults = states.iter().filter(|s| s.defaulted).count();
            assert!(defaults >= prev_defaults, "defaulted set shrank");
            for (s, &before) in states.iter().zip(&prev_equities) {
                if !s.defaulted {
                    assert!(s.equity <= before + 1e-12, "live equity increased");
                }
            }
            prev_defaults = defaults;
            prev_equities = states.iter().map(|s| s.equity).collect();
            if outcome.new_defaults == 0 {
                break;
            }
        }
        let res = run_cascade(&sys, &sv, 0.03, 1000);
        assert!(res.iterations <= 30);
        assert!(res.converged);
    }
}
