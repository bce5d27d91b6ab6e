//! Default contagion in interbank networks under correlated external shocks.
//!
//! The crate simulates balance-sheet shock propagation on random k-regular
//! interbank networks, cross-validates the cascade against an equivalent
//! integer threshold model, and provides mean-field and infinite-network
//! analytics for the expected default fraction. The ratio of the
//! network-equilibrium default probability to the exogenous one quantifies
//! how network-adjusted credit valuation (CVNA) diverges from the
//! direct-counterparty adjustment (CVDA).

pub mod analytics;
pub mod clearing;
pub mod config;
pub mod graph;
pub mod harness;
pub mod quad;
pub mod shock;

pub use analytics::{
    classify_regime, expected_q_correlated, expected_q_uncorrelated, limit_correlated,
    limit_uncorrelated, mean_field_iterate, solve_q_alpha, solve_q_of_n, FixedPointSolution,
    MeanFieldProblem, Regime,
};
pub use clearing::{run_cascade, threshold_cascade, BankState, CascadeResult};
pub use config::RunConfig;
pub use graph::{build_system, generate_k_regular, FinancialSystem, RegularGraph};
pub use harness::{
    cvna_ratio, derive_seed, run_cell, run_sweep, size_scan, write_outputs, ExperimentSummary,
};
pub use shock::{
    correlated_pmf, inverse_shock_cdf, multinomial_pmf, pi_probabilities, sample_shocks,
    CompartmentVector, ShockDistribution, ShockVector,
};
