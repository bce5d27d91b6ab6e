//! Random k-regular directed interbank networks and the homogeneous
//! exposure structure built on top of them.
//!
//! Every bank holds `k/2` asset arcs and `k/2` liability arcs. A directed
//! arc `i -> j` means bank `i` holds an asset on `j`, so `j`'s default
//! damages `i`. Construction uses the directed configuration model:
//! `k/2` in-stubs and `k/2` out-stubs per vertex, matched uniformly at
//! random, with whole-matching rejection of self-loops and parallel arcs
//! and an edge-swap repair fallback.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Whole-matching retries before switching to edge-swap repair.
const MATCHING_RETRIES: usize = 1000;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("degree k must be even, got {0}")]
    OddDegree(usize),
    #[error("need k/2 <= n - 1 (k = {k}, n = {n})")]
    DegreeTooLarge { k: usize, n: usize },
    #[error("stub matching failed to produce a simple graph")]
    MatchingFailed,
    #[error("leverage must be non-negative, got {0}")]
    NegativeLeverage(f64),
    #[error("exogenous recovery rate must lie in [0, 1), got {0}")]
    InvalidDelta(f64),
}

/// Directed graph where every vertex has in-degree and out-degree `k/2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegularGraph {
    n: usize,
    k: usize,
    /// `in_neighbors[i]`: banks whose liabilities `i` holds (its borrowers).
    in_neighbors: Vec<Vec<u32>>,
    /// Inverse adjacency: banks holding assets on `i` (its creditors).
    out_neighbors: Vec<Vec<u32>>,
}

impl RegularGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total degree (in + out).
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn half_k(&self) -> usize {
        self.k / 2
    }

    pub fn in_neighbors(&self, bank: usize) -> &[u32] {
        &self.in_neighbors[bank]
    }

    pub fn out_neighbors(&self, bank: usize) -> &[u32] {
        &self.out_neighbors[bank]
    }

    /// Arcs as `(src, dst)` pairs; `src` holds an asset on `dst`.
    pub fn arcs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.in_neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().map(move |&j| (i as u32, j)))
    }

    /// Debug export, one `src,dst` line per arc, zero-indexed.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (src, dst) in self.arcs() {
            writeln!(out, "{src},{dst}")?;
        }
        Ok(())
    }

    fn from_in_adjacency(n: usize, k: usize, in_neighbors: Vec<Vec<u32>>) -> Self {
        let mut out_neighbors = vec![Vec::with_capacity(k / 2); n];
        for (i, ns) in in_neighbors.iter().enumerate() {
            for &j in ns {
                out_neighbors[j as usize].push(i as u32);
            }
        }
        Self {
            n,
            k,
            in_neighbors,
            out_neighbors,
        }
    }
}

/// Generates a random k-regular directed graph on `n` vertices.
///
/// Deterministic for a fixed seed. When `k/2 = n - 1` the complete digraph
/// is returned directly. `k = 0` yields an edgeless graph (no network).
pub fn generate_k_regular(n: usize, k: usize, seed: u64) -> Result<RegularGraph, GraphError> {
    if k % 2 != 0 {
        return Err(GraphError::OddDegree(k));
    }
    let half = k / 2;
    if half > n.saturating_sub(1) {
        return Err(GraphError::DegreeTooLarge { k, n });
    }
    if half == 0 {
        return Ok(RegularGraph::from_in_adjacency(n, 0, vec![Vec::new(); n]));
    }
    if half == n - 1 {
        // Saturated degree forces the complete digraph.
        let in_neighbors = (0..n)
            .map(|i| (0..n as u32).filter(|&j| j as usize != i).collect())
            .collect();
        return Ok(RegularGraph::from_in_adjacency(n, k, in_neighbors));
    }
    if 2 * half > n - 1 {
        // Dense regime: stub matching and edge-swap repair degrade as the
        // graph approaches complete. The complement of a simple
        // (n-1-half)-regular digraph is exactly half-regular, so generate
        // the sparse complement and invert it.
        let sparse = generate_k_regular(n, 2 * (n - 1 - half), seed)?;
        let mut member = vec![false; n];
        let in_neighbors = (0..n)
            .map(|i| {
                for &j in sparse.in_neighbors(i) {
                    member[j as usize] = true;
                }
                let row: Vec<u32> = (0..n as u32)
                    .filter(|&j| j as usize != i && !member[j as usize])
                    .collect();
                for &j in sparse.in_neighbors(i) {
                    member[j as usize] = false;
                }
                row
            })
            .collect();
        return Ok(RegularGraph::from_in_adjacency(n, k, in_neighbors));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // out-stubs in fixed order, in-stubs shuffled
    let out_stubs: Vec<u32> = (0..n as u32).flat_map(|v| std::iter::repeat(v).take(half)).collect();
    let mut in_stubs = out_stubs.clone();

    // Lazy Fisher-Yates: draw the random matching arc by arc and abort at
    // the first self-loop or parallel arc, so a rejected attempt costs only
    // the prefix it consumed instead of a full O(arcs) shuffle.
    let mut adj: Vec<Vec<u32>> = vec![Vec::with_capacity(half); n];
    for _ in 0..MATCHING_RETRIES {
        let mut failed_at = None;
        for i in 0..in_stubs.len() {
            let j = rng.gen_range(i..in_stubs.len());
            in_stubs.swap(i, j);
            let src = out_stubs[i];
            let dst = in_stubs[i];
            if src == dst || adj[src as usize].contains(&dst) {
                failed_at = Some(i);
                break;
            }
            adj[src as usize].push(dst);
        }
        match failed_at {
            None => return Ok(RegularGraph::from_in_adjacency(n, k, adj)),
            Some(i) => {
                for &src in &out_stubs[..i] {
                    adj[src as usize].clear();
                }
            }
        }
    }
    // Accept the multigraph matching and repair bad arcs by edge swaps,
    // restarting from a fresh shuffle if the repair stalls.
    for _ in 0..100 {
        in_stubs.shuffle(&mut rng);
        let arcs: Vec<(u32, u32)> =
            out_stubs.iter().copied().zip(in_stubs.iter().copied()).collect();
        if let Ok(adj) = repair_by_edge_swaps(n, arcs, &mut rng) {
            return Ok(RegularGraph::from_in_adjacency(n, k, adj));
        }
    }
    Err(GraphError::MatchingFailed)
}

fn repair_by_edge_swaps<R: Rng>(
    n: usize,
    mut arcs: Vec<(u32, u32)>,
    rng: &mut R,
) -> Result<Vec<Vec<u32>>, GraphError> {
    use std::collections::HashMap;

    let mut count: HashMap<(u32, u32), u32> = HashMap::with_capacity(arcs.len());
    for &arc in &arcs {
        *count.entry(arc).or_insert(0) += 1;
    }
    let is_bad = |arc: (u32, u32), count: &HashMap<(u32, u32), u32>| {
        arc.0 == arc.1 || count.get(&arc).copied().unwrap_or(0) > 1
    };
    let mut bad: Vec<usize> = (0..arcs.len()).filter(|&i| is_bad(arcs[i], &count)).collect();
    let budget = 1000 * arcs.len().max(1);
    let mut attempts = 0usize;
    while let Some(&idx) = bad.last() {
        if !is_bad(arcs[idx], &count) {
            bad.pop();
            continue;
        }
        attempts += 1;
        if attempts > budget {
            return Err(GraphError::MatchingFailed);
        }
        let other = rng.gen_range(0..arcs.len());
        if other == idx {
            continue;
        }
        let (u, v) = arcs[idx];
        let (x, y) = arcs[other];
        // Swap targets: (u, v), (x, y) -> (u, y), (x, v). Degrees are
        // preserved; the swap is accepted only if both new arcs are simple.
        let a = (u, y);
        let b = (x, v);
        if a.0 == a.1 || b.0 == b.1 || a == b {
            continue;
        }
        let remaining = |arc: (u32, u32)| {
            let mut c = count.get(&arc).copied().unwrap_or(0);
            if arc == (u, v) {
                c -= 1;
            }
            if arc == (x, y) {
                c -= 1;
            }
            c
        };
        if remaining(a) > 0 || remaining(b) > 0 {
            continue;
        }
        *count.get_mut(&(u, v)).unwrap() -= 1;
        *count.get_mut(&(x, y)).unwrap() -= 1;
        *count.entry(a).or_insert(0) += 1;
        *count.entry(b).or_insert(0) += 1;
        arcs[idx] = a;
        arcs[other] = b;
    }
    let mut adj = vec![Vec::new(); n];
    for (src, dst) in arcs {
        adj[src as usize].push(dst);
    }
    Ok(adj)
}

/// The financial-system triplet on a regular graph: uniform exposures
/// `w = leverage / (k/2)` per arc, interbank liabilities `leverage` per
/// bank, net external assets 1 per bank.
#[derive(Debug, Clone)]
pub struct FinancialSystem {
    pub graph: RegularGraph,
    /// Interbank leverage: interbank assets over equity.
    pub leverage: f64,
    /// Exogenous recovery rate in [0, 1).
    pub delta: f64,
    /// Per-arc exposure weight.
    pub exposure_weight: f64,
    pub net_external_assets: Vec<f64>,
    pub interbank_liabilities: Vec<f64>,
}

impl FinancialSystem {
    pub fn n(&self) -> usize {
        self.graph.n()
    }
}

/// Builds the homogeneous financial system on a graph.
pub fn build_system(
    graph: RegularGraph,
    leverage: f64,
    delta: f64,
) -> Result<FinancialSystem, GraphError> {
    if leverage < 0.0 {
        return Err(GraphError::NegativeLeverage(leverage));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(GraphError::InvalidDelta(delta));
    }
    let n = graph.n();
    let half = graph.half_k();
    // k = 0 is the "no network" degenerate case: no arcs, no liabilities.
    let (weight, liab) = if half == 0 {
        (0.0, 0.0)
    } else {
        (leverage / half as f64, leverage)
    };
    Ok(FinancialSystem {
        graph,
        leverage,
        delta,
        exposure_weight: weight,
        net_external_assets: vec![1.0; n],
        interbank_liabilities: vec![liab; n],
    })
}
