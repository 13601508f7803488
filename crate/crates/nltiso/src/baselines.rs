//! Linear counterpart of the kernel estimator: the same composite
//! mirror-descent update and group shrinkage, but with raw lagged samples as
//! features and one scalar weight per (source, lag). Used as the comparison
//! method in the experiments.

use ndarray::{Array1, Array2, Array3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{
    group_shrink_in_place, Hyperparams, RunOutput, StepRecord, Trace, TrajectorySink,
    STABILITY_CAP,
};
use crate::metrics::{ise, AdjacencyEstimate};
use crate::series::SeriesMatrix;

/// Coefficients of one target node in the linear model: one scalar per
/// (lag, source), stored as a P x N matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearNodeState {
    node: usize,
    /// `[lag - 1, source]` weight.
    weights: Array2<f64>,
}

impl LinearNodeState {
    pub fn new(node: usize, n_nodes: usize, order: usize) -> Self {
        Self {
            node,
            weights: Array2::zeros((order, n_nodes)),
        }
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn n_nodes(&self) -> usize {
        self.weights.ncols()
    }

    pub fn order(&self) -> usize {
        self.weights.nrows()
    }

    /// P x N weight matrix, `[lag - 1, source]`.
    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    /// Absolute weights per (lag, source), lag-major, mirroring the kernel
    /// estimator's group-norm snapshot layout.
    pub fn group_norms(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.abs()).collect()
    }
}

/// Lagged samples behind `tau` flattened lag-major: entry `(lag-1)*N + source`
/// is `y_source[tau - lag]`. Length N*P.
pub fn linear_feature_vector(series: &SeriesMatrix, tau: usize, order: usize) -> Result<Array1<f64>> {
    let view = crate::series::lag_view(series, tau, order)?;
    let n = series.n_nodes();
    let mut out = Array1::zeros(order * n);
    for lag in 1..=order {
        for source in 0..n {
            out[(lag - 1) * n + source] = view.get(source, lag);
        }
    }
    Ok(out)
}

/// One mirror-descent update of the linear model: a gradient step on the
/// squared prediction error, then group shrinkage over each source's P lag
/// weights with threshold `step * lambda` (self-connection group exempt).
///
/// The step is the requested `gamma` capped by the inverse feature energy,
/// `min(gamma, STABILITY_CAP / ||x||^2)` (raw `gamma` when `||x|| = 0`), the
/// flat-cap analog of the kernel estimator's per-group rule: linear feature
/// norms have no positive lower bound, so a single global cap is used.
pub fn tirso_step(
    state: &mut LinearNodeState,
    features: &Array1<f64>,
    y: f64,
    h: &Hyperparams,
) -> Result<()> {
    let n = state.n_nodes();
    let order = state.order();
    if features.len() != n * order {
        return Err(Error::DimensionMismatch {
            context: "linear features vs state",
            expected: n * order,
            got: features.len(),
        });
    }
    if h.order != order {
        return Err(Error::DimensionMismatch {
            context: "hyperparams vs linear state: lag order",
            expected: order,
            got: h.order,
        });
    }
    let norm2 = features.dot(features);
    let step = if norm2 > 0.0 {
        h.gamma.min(STABILITY_CAP / norm2)
    } else {
        h.gamma
    };
    let pred = linear_predict(state, features);
    let err = pred - y;
    let scale = step * err;
    for lag in 0..order {
        for source in 0..n {
            state.weights[[lag, source]] -= scale * features[lag * n + source];
        }
    }
    let threshold = step * h.lambda;
    let mut group = vec![0.0; order];
    for source in 0..n {
        if source == state.node {
            continue;
        }
        for lag in 0..order {
            group[lag] = state.weights[[lag, source]];
        }
        group_shrink_in_place(&mut group, threshold);
        for lag in 0..order {
            state.weights[[lag, source]] = group[lag];
        }
    }
    Ok(())
}

/// Inner product of the state's weights with a feature vector.
pub fn linear_predict(state: &LinearNodeState, features: &Array1<f64>) -> f64 {
    let n = state.n_nodes();
    let mut acc = 0.0;
    for lag in 0..state.order() {
        for source in 0..n {
            acc += state.weights[[lag, source]] * features[lag * n + source];
        }
    }
    acc
}

/// Streams the series through the linear model with the same prequential
/// protocol and trajectory-record schema as the kernel driver.
pub fn run_tirso(
    series: &SeriesMatrix,
    h: &Hyperparams,
    sink: &mut dyn TrajectorySink,
) -> Result<RunOutput<LinearNodeState>> {
    let n = series.n_nodes();
    let t_len = series.n_samples();
    if t_len <= h.order {
        return Err(Error::InvalidData(format!(
            "series length {t_len} must exceed lag order {}",
            h.order
        )));
    }
    let steps = t_len - h.order;
    let mut states: Vec<LinearNodeState> =
        (0..n).map(|node| LinearNodeState::new(node, n, h.order)).collect();
    let mut predictions = Array2::zeros((n, steps));
    let mut ise_mat = Array2::zeros((n, steps));
    let cadence = sink.snapshot_cadence();

    for t in h.order..t_len {
        let features = linear_feature_vector(series, t, h.order)?;
        let snapshot = cadence > 0 && (t - h.order) % cadence == 0;
        let per_node: Result<Vec<(f64, f64, Option<Vec<f64>>)>> = states
            .par_iter_mut()
            .map(|state| {
                let pred = linear_predict(state, &features);
                let y = series.value(state.node(), t);
                let err2 = ise(y, pred);
                tirso_step(state, &features, y, h)?;
                let norms = snapshot.then(|| state.group_norms());
                Ok((pred, err2, norms))
            })
            .collect();
        let col = t - h.order;
        for (node, (pred, err2, norms)) in per_node?.into_iter().enumerate() {
            predictions[[node, col]] = pred;
            ise_mat[[node, col]] = err2;
            sink.record(StepRecord {
                t,
                node,
                prediction: pred,
                ise: err2,
                group_norms: norms,
            });
        }
    }
    Ok(RunOutput {
        states,
        trace: Trace::new(h.order, predictions, ise_mat),
    })
}

/// Adjacency estimate from linear states: entry `[target][source][lag-1]` is
/// the absolute weight, the single-coefficient analog of a group norm.
pub fn adjacency_from_linear(
    states: &[LinearNodeState],
    timestamp: usize,
) -> Result<AdjacencyEstimate> {
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
        for lag in 0..order {
            for source in 0..n {
                values[[target, source, lag]] = state.weights[[lag, source]].abs();
            }
        }
    }
    Ok(AdjacencyEstimate { values, timestamp })
}
