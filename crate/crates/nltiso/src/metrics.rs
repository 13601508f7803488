//! Error metrics, adjacency extraction from coefficient states, and
//! support-recovery scoring against generator ground truth.

use ndarray::Array3;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{NodeState, Trace};
use crate::synthgen::TrueGraph;

/// Squared one-step-ahead prediction error.
pub fn ise(y: f64, y_hat: f64) -> f64 {
    let d = y - y_hat;
    d * d
}

/// Estimated causal-strength adjacency: entry `[target][source][lag-1]` is
/// the l2 norm of the matching coefficient group at `timestamp`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyEstimate {
    /// N x N x P tensor of non-negative group norms.
    pub values: Array3<f64>,
    /// Time index at which the states were snapshot.
    pub timestamp: usize,
}

impl AdjacencyEstimate {
    pub fn n_nodes(&self) -> usize {
        self.values.dim().0
    }

    pub fn order(&self) -> usize {
        self.values.dim().2
    }
}

/// Collects the group norms of all node states into an adjacency estimate.
/// States must be one per node, in node order, with identical shapes.
pub fn adjacency_from_state(states: &[NodeState], timestamp: usize) -> Result<AdjacencyEstimate> {
    let first = states.first().ok_or_else(|| {
        Error::InvalidData("adjacency extraction needs at least one node state".into())
    })?;
    let n = first.n_nodes();
    let order = first.order();
    if states.len() != n {
        return Err(Error::DimensionMismatch {
            context: "adjacency extraction: states per node",
            expected: n,
            got: states.len(),
        });
    }
    let mut values = Array3::zeros((n, n, order));
    for (target, state) in states.iter().enumerate() {
        if state.node() != target || state.n_nodes() != n || state.order() != order {
            return Err(Error::InvalidData(format!(
                "state at position {target} does not describe node {target}"
            )));
        }
        for group in state.groups() {
            values[[target, group.source, group.lag - 1]] = group.norm();
        }
    }
    Ok(AdjacencyEstimate { values, timestamp })
}

/// Scales the adjacency so its maximum entry is 1. An all-zero estimate is
/// returned unchanged; ordering of entries is preserved.
pub fn normalize_adjacency(estimate: &AdjacencyEstimate) -> AdjacencyEstimate {
    let max = estimate.values.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return estimate.clone();
    }
    AdjacencyEstimate {
        values: &estimate.values / max,
        timestamp: estimate.timestamp,
    }
}

/// Support-recovery scores of an adjacency estimate against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportMetrics {
    /// Fraction of the top-k cross-node entries that are true edges.
    pub precision: f64,
    /// Fraction of true cross-node edges found among the top-k entries.
    pub recall: f64,
    /// Mean estimated strength over true cross-node edges divided by the
    /// mean over cross-node non-edges; `None` when either set is empty or
    /// the non-edge mean is exactly zero.
    pub edge_ratio: Option<f64>,
    /// Number of top entries scored.
    pub k: usize,
    /// Number of true cross-node edges.
    pub true_edges: usize,
}

/// Scores the top-k cross-node entries of `estimate` against the true edge
/// mask. Self-connections are excluded: the estimator never sparsifies them,
/// so they carry no support information. Ties in the ranking break
/// deterministically by (target, source, lag).
pub fn support_metrics(
    estimate: &AdjacencyEstimate,
    truth: &TrueGraph,
    k: usize,
) -> Result<SupportMetrics> {
    let (n, n2, order) = estimate.values.dim();
    let (tn, tn2, torder) = truth.edge_mask.dim();
    if (n, n2, order) != (tn, tn2, torder) {
        return Err(Error::DimensionMismatch {
            context: "support metrics: estimate vs truth nodes",
            expected: tn * tn2 * torder,
            got: n * n2 * order,
        });
    }
    let cross_count = n * (n - 1) * order;
    if k == 0 || k > cross_count {
        return Err(Error::Range(format!(
            "top-k must lie in 1..={cross_count} cross-node entries, got {k}"
        )));
    }

    let mut cross: Vec<(f64, (usize, usize, usize))> = Vec::with_capacity(cross_count);
    for target in 0..n {
        for source in 0..n {
            if source == target {
                continue;
            }
            for lag in 0..order {
                cross.push((estimate.values[[target, source, lag]], (target, source, lag)));
            }
        }
    }
    cross.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));

    let mut hits = 0usize;
    for &(_, idx) in cross.iter().take(k) {
        if truth.edge_mask[[idx.0, idx.1, idx.2]] {
            hits += 1;
        }
    }
    let true_edges = cross
        .iter()
        .filter(|&&(_, idx)| truth.edge_mask[[idx.0, idx.1, idx.2]])
        .count();
    let precision = hits as f64 / k as f64;
    let recall = if true_edges == 0 {
        1.0 // vacuous: nothing to find
    } else {
        hits as f64 / true_edges as f64
    };

    let mut edge_sum = 0.0;
    let mut non_edge_sum = 0.0;
    let non_edges = cross_count - true_edges;
    for &(v, idx) in &cross {
        if truth.edge_mask[[idx.0, idx.1, idx.2]] {
            edge_sum += v;
        } else {
            non_edge_sum += v;
        }
    }
    let edge_ratio = if true_edges > 0 && non_edges > 0 && non_edge_sum > 0.0 {
        Some((edge_sum / true_edges as f64) / (non_edge_sum / non_edges as f64))
    } else {
        None
    };

    Ok(SupportMetrics {
        precision,
        recall,
        edge_ratio,
        k,
        true_edges,
    })
}

/// Mean squared prediction error per node over the trace records at
/// positions `>= burn_in` (positions count records, which start at t = P).
pub fn time_averaged_ise(trace: &Trace, burn_in: usize) -> Result<Vec<f64>> {
    let steps = trace.steps();
    if burn_in >= steps {
        return Err(Error::Range(format!(
            "burn-in {burn_in} leaves no records out of {steps}"
        )));
    }
    let tail = steps - burn_in;
    Ok((0..trace.n_nodes())
        .map(|n| {
            let row = trace.ise_node(n);
            row.iter().skip(burn_in).sum::<f64>() / tail as f64
        })
        .collect())
}
