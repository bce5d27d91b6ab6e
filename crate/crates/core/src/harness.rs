//! Monte Carlo sweep orchestration: deterministic seed derivation, cell
//! execution, aggregation, and flat-file output.
//!
//! Every artifact is a pure function of the [`RunConfig`], including its
//! `master_seed`: realizations get non-overlapping seeds derived per
//! (graph instance, shock sample), parallel results are collected in
//! deterministic order, and reductions run sequentially.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analytics::{
    expected_q_correlated, expected_q_uncorrelated, limit_correlated, limit_uncorrelated,
    AnalyticsError,
};
use crate::clearing::{run_cascade, threshold_cascade};
use crate::config::RunConfig;
use crate::graph::{build_system, generate_k_regular, GraphError};
use crate::shock::{sample_shocks, ShockError};

/// Histogram bins on [0, 1].
pub const HIST_BINS: usize = 100;

const GRAPH_STREAM: u64 = 0x67;
const SHOCK_STREAM: u64 = 0x73;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cell (k={k}, leverage={leverage}, rho={rho}): {source}")]
    Graph {
        k: usize,
        leverage: f64,
        rho: f64,
        source: GraphError,
    },
    #[error("cell (k={k}, leverage={leverage}, rho={rho}): {source}")]
    Analytics {
        k: usize,
        leverage: f64,
        rho: f64,
        source: AnalyticsError,
    },
    #[error(transparent)]
    Shock(#[from] ShockError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("cannot serialize config echo: {0}")]
    ConfigEcho(#[from] toml::ser::Error),
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives an independent stream seed from the master seed and a path of
/// identifying integers (stream tag, cell coordinates, instance, sample).
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut state = splitmix64(master ^ 0xD1B5_4A32_D192_ED03);
    for &p in parts {
        state = splitmix64(state ^ splitmix64(p));
    }
    state
}

/// Aggregated statistics of one sweep cell.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub k: usize,
    pub leverage: f64,
    pub rho: f64,
    pub n: usize,
    pub n_realizations: usize,
    pub q_mean: Option<f64>,
    /// Median default fraction over triggered realizations only.
    pub q_median_triggered: Option<f64>,
    pub triggered_fraction: Option<f64>,
    pub histogram: Vec<u64>,
    pub q_analytic: Option<f64>,
    pub q_limit: Option<f64>,
    pub cvna_ratio: Option<f64>,
}

/// `CVNA = CVDA * ratio`; undefined when no exogenous default mass exists.
pub fn cvna_ratio(q_expected: f64, p1: f64) -> Option<f64> {
    if p1 > 0.0 {
        Some(q_expected / p1)
    } else {
        None
    }
}

fn median_sorted(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    })
}

/// Runs one sweep cell: `n_network_instances` graphs times
/// `n_shock_samples` shock vectors, plus the analytic and limit values
/// the configured modes request.
pub fn run_cell(
    config: &RunConfig,
    k: usize,
    leverage: f64,
    rho: f64,
) -> Result<ExperimentSummary, HarnessError> {
    let dist = config.shock_distribution(rho)?;
    let epsilons = dist.post_shock_equities();
    let p1 = dist.probs()[0];

    let mut q_mean = None;
    let mut q_median_triggered = None;
    let mut triggered_fraction = None;
    let mut histogram = vec![0u64; HIST_BINS];
    let mut n_realizations = 0;

    if config.modes.simulate {
        let mut runs: Vec<(f64, bool)> =
            Vec::with_capacity(config.n_network_instances * config.n_shock_samples);
        for g in 0..config.n_network_instances {
            let graph_seed = derive_seed(config.master_seed, &[GRAPH_STREAM, k as u64, g as u64]);
            let graph = generate_k_regular(config.n, k, graph_seed).map_err(|source| {
                HarnessError::Graph {
                    k,
                    leverage,
                    rho,
                    source,
                }
            })?;
            let system = build_system(graph, leverage, config.delta).map_err(|source| {
                HarnessError::Graph {
                    k,
                    leverage,
                    rho,
                    source,
                }
            })?;
            // parallel map, order-preserving collect: aggregation below is
            // sequential so the result is bit-reproducible
            let mut instance_runs: Vec<(f64, bool)> = (0..config.n_shock_samples)
                .into_par_iter()
                .map(|r| {
                    let seed = derive_seed(
                        config.master_seed,
                        &[SHOCK_STREAM, k as u64, rho.to_bits(), g as u64, r as u64],
                    );
                    let shocks = sample_shocks(&dist, config.n, seed);
                    // with zero recovery the frontier cascade produces the
                    // identical default set at O(defaults * k/2) instead of
                    // O(steps * n * k/2)
                    let result = if config.delta == 0.0 {
                        threshold_cascade(&system.graph, &shocks, leverage)
                    } else {
                        run_cascade(&system, &shocks, config.tol, config.cutoff)
                    };
                    (result.default_fraction, result.triggered)
                })
                .collect();
            runs.append(&mut instance_runs);
        }
        n_realizations = runs.len();
        let mut sum = 0.0;
        let mut n_triggered = 0usize;
        let mut triggered_qs = Vec::new();
        for &(q, triggered) in &runs {
            sum += q;
            let bin = ((q * HIST_BINS as f64).floor() as usize).min(HIST_BINS - 1);
            histogram[bin] += 1;
            if triggered {
                n_triggered += 1;
                triggered_qs.push(q);
            }
        }
        q_mean = Some(sum / n_realizations as f64);
        q_median_triggered = median_sorted(triggered_qs);
        triggered_fraction = Some(n_triggered as f64 / n_realizations as f64);
    }

    let q_analytic = if config.modes.analytic {
        if rho == 0.0 {
            Some(expected_q_uncorrelated(config.n as u64, dist.probs(), k, leverage, &epsilons).0)
        } else {
            Some(
                expected_q_correlated(&dist, k, leverage, &epsilons)
                    .map_err(|source| HarnessError::Analytics {
                        k,
                        leverage,
                        rho,
                        source,
                    })?
                    .0,
            )
        }
    } else {
        None
    };

    let q_limit = if config.modes.limit {
        if rho == 0.0 {
            Some(limit_uncorrelated(dist.probs(), &epsilons, leverage))
        } else {
            Some(
                limit_correlated(&dist, &epsilons, leverage).map_err(|source| {
                    HarnessError::Analytics {
                        k,
                        leverage,
                        rho,
                        source,
                    }
                })?,
            )
        }
    } else {
        None
    };

    let ratio = q_mean
        .or(q_analytic)
        .or(q_limit)
        .and_then(|q| cvna_ratio(q, p1));

    Ok(ExperimentSummary {
        k,
        leverage,
        rho,
        n: config.n,
        n_realizations,
        q_mean,
        q_median_triggered,
        triggered_fraction,
        histogram,
        q_analytic,
        q_limit,
        cvna_ratio: ratio,
    })
}

/// Runs every (rho, leverage, k) cell of the config in deterministic order.
pub fn run_sweep(config: &RunConfig) -> Result<Vec<ExperimentSummary>, HarnessError> {
    let mut summaries = Vec::new();
    for &rho in &config.rhos {
        for &leverage in &config.leverages {
            for &k in &config.degrees {
                summaries.push(run_cell(config, k, leverage, rho)?);
            }
        }
    }
    Ok(summaries)
}

/// Complete-network size scan: each size N runs at k = 2(N-1), with the
/// infinite-network reference attached through the limit mode.
pub fn size_scan(config: &RunConfig) -> Result<Vec<ExperimentSummary>, HarnessError> {
    let mut summaries = Vec::new();
    for &size in &config.sizes {
        let mut cell_config = config.clone();
        cell_config.n = size;
        let k = 2 * (size - 1);
        for &rho in &config.rhos {
            for &leverage in &config.leverages {
                summaries.push(run_cell(&cell_config, k, leverage, rho)?);
            }
        }
    }
    Ok(summaries)
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `cells.csv`, one histogram JSON per simulated cell, and a full
/// config echo into the config's output directory. Returns the paths.
pub fn write_outputs(
    summaries: &[ExperimentSummary],
    config: &RunConfig,
) -> Result<Vec<PathBuf>, HarnessError> {
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();

    let csv_path = dir.join("cells.csv");
    {
        let mut writer = csv::Writer::from_path(&csv_path).map_err(|source| HarnessError::Csv {
            path: csv_path.clone(),
            source,
        })?;
        let csv_err = |source| HarnessError::Csv {
            path: csv_path.clone(),
            source,
        };
        writer
            .write_record([
                "k",
                "leverage",
                "rho",
                "n",
                "n_realizations",
                "q_mean",
                "q_median_triggered",
                "triggered_fraction",
                "q_analytic",
                "q_limit",
                "cvna_ratio",
            ])
            .map_err(csv_err)?;
        for s in summaries {
            writer
                .write_record([
                    s.k.to_string(),
                    s.leverage.to_string(),
                    s.rho.to_string(),
                    s.n.to_string(),
                    s.n_realizations.to_string(),
                    fmt_opt(s.q_mean),
                    fmt_opt(s.q_median_triggered),
                    fmt_opt(s.triggered_fraction),
                    fmt_opt(s.q_analytic),
                    fmt_opt(s.q_limit),
                    fmt_opt(s.cvna_ratio),
                ])
                .map_err(csv_err)?;
        }
        writer.flush().map_err(io_err(&csv_path))?;
    }
    written.push(csv_path);

    for s in summaries {
        if s.n_realizations == 0 {
            continue;
        }
        let path = dir.join(format!("hist_{}_{}_{}.json", s.k, s.leverage, s.rho));
        let payload = serde_json::json!({
            "k": s.k,
            "leverage": s.leverage,
            "rho": s.rho,
            "n": s.n,
            "n_realizations": s.n_realizations,
            "bins": HIST_BINS,
            "counts": s.histogram,
        });
        let file = File::create(&path).map_err(io_err(&path))?;
        serde_json::to_writer_pretty(file, &payload).map_err(|source| HarnessError::Io {
            path: path.clone(),
            source: source.into(),
        })?;
        written.push(path);
    }

    let echo_path = dir.join("config_echo.toml");
    let echo = toml::to_string_pretty(config)?;
    let mut file = File::create(&echo_path).map_err(io_err(&echo_path))?;
    file.write_all(echo.as_bytes()).map_err(io_err(&echo_path))?;
    written.push(echo_path);

    Ok(written)
}
