//! The streaming kernel estimator: per-node coefficient state, instantaneous
//! loss and gradient, the composite mirror-descent update with closed-form
//! group shrinkage, and the online driver that ties window, kernel vector,
//! and per-node updates together.

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{build_kernel_vector, KernelSpec, KernelVector};
use crate::metrics::ise;
use crate::series::{SeriesMatrix, WindowIndex};

/// Upper bound on the total step-times-curvature mass per update.
///
/// Each (lag, source) group g receives its own step
/// `step_g = min(gamma, STABILITY_CAP / (G * ||kappa_g||^2))` where G is the
/// group count. Because the instantaneous-loss gradient has Lipschitz
/// constant `||kappa||^2` (and every Gaussian group contains an exact 1.0,
/// so `||kappa_g||^2 >= 1`), this keeps the same-sample error multiplier
/// `1 - sum_g step_g ||kappa_g||^2` at or above `1 - STABILITY_CAP` for any
/// window content, which makes the online update stable for arbitrary
/// configured `gamma`. The configured `gamma` still applies verbatim
/// whenever it already sits below the cap.
pub const STABILITY_CAP: f64 = 0.5;

/// Regularization and step-size knobs shared by the kernel estimator and the
/// linear baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Group-lasso weight, >= 0.
    pub lambda: f64,
    /// Requested step size, > 0 and constant over time (capped per group for
    /// stability, see [`STABILITY_CAP`]).
    pub gamma: f64,
    /// Lag order P, >= 1.
    pub order: usize,
    /// Window capacity T_w bounding the retained kernel centers, >= 1.
    pub window_capacity: usize,
}

impl Hyperparams {
    pub fn new(lambda: f64, gamma: f64, order: usize, window_capacity: usize) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                message: format!("must be finite and >= 0, got {lambda}"),
            });
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                message: format!("must be finite and > 0, got {gamma}"),
            });
        }
        if order < 1 {
            return Err(Error::InvalidParameter {
                name: "order",
                message: "lag order must be >= 1".into(),
            });
        }
        if window_capacity < 1 {
            return Err(Error::InvalidParameter {
                name: "window_capacity",
                message: "window capacity must be >= 1".into(),
            });
        }
        Ok(Self {
            lambda,
            gamma,
            order,
            window_capacity,
        })
    }
}

/// One (target, source, lag) coefficient group. Weights align one-to-one
/// with the retained window times, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffGroup {
    pub target: usize,
    pub source: usize,
    pub lag: usize,
    weights: Vec<f64>,
}

impl CoeffGroup {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// l2 norm over the current window; the estimated strength of the edge
    /// source -> target at this lag.
    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    /// Self-connections are exempt from group shrinkage.
    pub fn is_self(&self) -> bool {
        self.source == self.target
    }
}

/// Full coefficient state of one target node: N*P groups ordered lag-major
/// by (lag, source), so flattening them matches the kernel-vector layout
/// index for index.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    node: usize,
    n_nodes: usize,
    order: usize,
    groups: Vec<CoeffGroup>,
    window_len: usize,
}

impl NodeState {
    /// Fresh state with an empty window (no retained times yet).
    pub fn new(node: usize, n_nodes: usize, order: usize) -> Self {
        let mut groups = Vec::with_capacity(n_nodes * order);
        for lag in 1..=order {
            for source in 0..n_nodes {
                groups.push(CoeffGroup {
                    target: node,
                    source,
                    lag,
                    weights: Vec::new(),
                });
            }
        }
        Self {
            node,
            n_nodes,
            order,
            groups,
            window_len: 0,
        }
    }

    /// State with explicit per-group weights (lag-major by (lag, source)),
    /// all of one common window length. Used for warm starts and tests.
    pub fn with_weights(
        node: usize,
        n_nodes: usize,
        order: usize,
        weights: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if weights.len() != n_nodes * order {
            return Err(Error::DimensionMismatch {
                context: "node state groups",
                expected: n_nodes * order,
                got: weights.len(),
            });
        }
        let w_len = weights[0].len();
        if weights.iter().any(|g| g.len() != w_len) {
            return Err(Error::InvalidData("group weight lengths differ".into()));
        }
        if weights.iter().flatten().any(|w| !w.is_finite()) {
            return Err(Error::InvalidData("non-finite coefficient".into()));
        }
        let mut state = Self::new(node, n_nodes, order);
        for (group, w) in state.groups.iter_mut().zip(weights) {
            group.weights = w;
        }
        state.window_len = w_len;
        Ok(state)
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Current retained-window length W shared by all groups.
    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn groups(&self) -> &[CoeffGroup] {
        &self.groups
    }

    pub fn group(&self, lag: usize, source: usize) -> &CoeffGroup {
        &self.groups[(lag - 1) * self.n_nodes + source]
    }

    /// l2 norm of every group, lag-major by (lag, source).
    pub fn group_norms(&self) -> Vec<f64> {
        self.groups.iter().map(CoeffGroup::norm).collect()
    }

    /// Concatenation of all group weights, aligned index-for-index with the
    /// kernel-vector layout.
    pub fn flattened(&self) -> Array1<f64> {
        let mut out = Array1::zeros(self.groups.len() * self.window_len);
        for (g, group) in self.groups.iter().enumerate() {
            for (i, &w) in group.weights.iter().enumerate() {
                out[g * self.window_len + i] = w;
            }
        }
        out
    }

    /// Tracks a window push: drops the oldest weight in every group when the
    /// push evicted a time, then appends the zero initialization for the new
    /// time. Must be called exactly once per retained-time push.
    pub fn advance_window(&mut self, evicted: bool) {
        for group in &mut self.groups {
            if evicted {
                group.weights.remove(0);
            }
            group.weights.push(0.0);
        }
        self.window_len = self.window_len + 1 - usize::from(evicted);
    }
}

fn check_alignment(state: &NodeState, kappa: &KernelVector) -> Result<()> {
    if state.n_nodes != kappa.n_nodes() {
        return Err(Error::DimensionMismatch {
            context: "state vs kernel vector: node count",
            expected: state.n_nodes,
            got: kappa.n_nodes(),
        });
    }
    if state.order != kappa.order() {
        return Err(Error::DimensionMismatch {
            context: "state vs kernel vector: lag order",
            expected: state.order,
            got: kappa.order(),
        });
    }
    if state.window_len != kappa.window_len() {
        return Err(Error::DimensionMismatch {
            context: "state vs kernel vector: window length",
            expected: state.window_len,
            got: kappa.window_len(),
        });
    }
    Ok(())
}

/// Inner product of the node's coefficients with the kernel vector: the
/// one-step-ahead prediction of the node's next sample.
pub fn predict(state: &NodeState, kappa: &KernelVector) -> Result<f64> {
    check_alignment(state, kappa)?;
    let mut acc = 0.0;
    for (g, group) in state.groups.iter().enumerate() {
        let weights = ArrayView1::from(group.weights());
        acc += weights.dot(&kappa.group_by_index(g));
    }
    Ok(acc)
}

/// Half squared prediction error `0.5 (y - prediction)^2`.
pub fn instantaneous_loss(state: &NodeState, kappa: &KernelVector, y: f64) -> Result<f64> {
    let pred = predict(state, kappa)?;
    let d = y - pred;
    Ok(0.5 * d * d)
}

/// Gradient of the instantaneous loss at the current (zero-extended) state,
/// aligned entry-for-entry with the kernel vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    entries: Array1<f64>,
}

impl GradientVector {
    pub fn entries(&self) -> ArrayView1<'_, f64> {
        self.entries.view()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// `kappa * (prediction - y)`: the instantaneous-loss gradient at the state.
pub fn gradient(state: &NodeState, kappa: &KernelVector, y: f64) -> Result<GradientVector> {
    let err = predict(state, kappa)? - y;
    Ok(GradientVector {
        entries: &kappa.entries() * err,
    })
}

/// Multidimensional shrinkage-thresholding `u * [1 - threshold/||u||]_+`,
/// applied in place. Zeroes the whole group when `||u|| <= threshold`
/// (including `u = 0`, which avoids the 0/0 case by continuity).
pub fn group_shrink_in_place(u: &mut [f64], threshold: f64) {
    assert!(threshold >= 0.0, "shrink threshold must be >= 0");
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= threshold {
        u.fill(0.0);
    } else {
        let factor = 1.0 - threshold / norm;
        for v in u.iter_mut() {
            *v *= factor;
        }
    }
}

/// Copying wrapper around [`group_shrink_in_place`].
pub fn group_shrink(u: &[f64], threshold: f64) -> Vec<f64> {
    let mut out = u.to_vec();
    group_shrink_in_place(&mut out, threshold);
    out
}

/// The per-group step sizes used by [`comid_step`] for this kernel vector:
/// `min(gamma, STABILITY_CAP / (G * ||kappa_g||^2))` with G the group count
/// (raw `gamma` if a group norm is zero). Exposed so independent
/// re-implementations of the update objective can agree on its geometry.
pub fn effective_steps(kappa: &KernelVector, gamma: f64) -> Vec<f64> {
    let g_count = kappa.n_groups() as f64;
    (0..kappa.n_groups())
        .map(|g| {
            let kg = kappa.group_by_index(g);
            let norm2 = kg.dot(&kg);
            if norm2 > 0.0 {
                gamma.min(STABILITY_CAP / (g_count * norm2))
            } else {
                gamma
            }
        })
        .collect()
}

/// One composite mirror-descent update on a node state whose window already
/// contains the newest time (zero-extended, see
/// [`NodeState::advance_window`]).
///
/// Per group g: `u_g = alpha_g - step_g * v_g` with `v_g` the gradient block
/// and `step_g` from [`effective_steps`]; cross-node groups are then shrunk
/// with threshold `step_g * lambda`, self-connection groups keep `u_g`
/// untouched. The result is the exact minimizer of the linearized loss plus
/// the per-group proximity terms `||a_g - alpha_g||^2 / (2 step_g)` plus the
/// group-lasso penalty on cross-node groups.
pub fn comid_step(
    state: &mut NodeState,
    kappa: &KernelVector,
    y: f64,
    h: &Hyperparams,
) -> Result<()> {
    check_alignment(state, kappa)?;
    if h.order != state.order {
        return Err(Error::DimensionMismatch {
            context: "hyperparams vs state: lag order",
            expected: state.order,
            got: h.order,
        });
    }
    let err = predict(state, kappa)? - y;
    let steps = effective_steps(kappa, h.gamma);
    for (g, group) in state.groups.iter_mut().enumerate() {
        let step = steps[g];
        let scale = step * err;
        let kg = kappa.group_by_index(g);
        for (w, &k) in group.weights.iter_mut().zip(kg.iter()) {
            *w -= scale * k;
        }
        if !group.is_self() {
            group_shrink_in_place(&mut group.weights, step * h.lambda);
        }
    }
    Ok(())
}

/// Per-(time, node) record handed to a [`TrajectorySink`].
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub t: usize,
    pub node: usize,
    /// One-step-ahead prediction made before the update at `t` (prequential).
    pub prediction: f64,
    /// Squared prediction error at `t`.
    pub ise: f64,
    /// Group norms (lag-major by (lag, source)) after the update at `t`;
    /// present only on steps matching the sink's snapshot cadence.
    pub group_norms: Option<Vec<f64>>,
}

/// Consumer of per-step records emitted by the online drivers.
pub trait TrajectorySink {
    /// Every how many steps `group_norms` snapshots are taken; 0 disables
    /// them. Queried once per run.
    fn snapshot_cadence(&self) -> usize {
        0
    }

    /// Called once per (time, node), nodes in ascending order within a step.
    fn record(&mut self, rec: StepRecord);
}

/// Sink that drops every record.
pub struct NullSink;

impl TrajectorySink for NullSink {
    fn record(&mut self, _rec: StepRecord) {}
}

/// Prequential prediction and squared-error traces for all nodes, covering
/// times `start..start + steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    start: usize,
    predictions: Array2<f64>,
    ise: Array2<f64>,
}

impl Trace {
    pub(crate) fn new(start: usize, predictions: Array2<f64>, ise: Array2<f64>) -> Self {
        Self {
            start,
            predictions,
            ise,
        }
    }

    /// First recorded time index (the lag order).
    pub fn start(&self) -> usize {
        self.start
    }

    /// Number of recorded steps per node.
    pub fn steps(&self) -> usize {
        self.ise.ncols()
    }

    pub fn n_nodes(&self) -> usize {
        self.ise.nrows()
    }

    /// N x steps matrix of one-step-ahead predictions.
    pub fn predictions(&self) -> &Array2<f64> {
        &self.predictions
    }

    /// N x steps matrix of squared prediction errors.
    pub fn ise(&self) -> &Array2<f64> {
        &self.ise
    }

    pub fn ise_node(&self, node: usize) -> ArrayView1<'_, f64> {
        self.ise.row(node)
    }
}

/// Final states plus the full prequential trace of one online run.
#[derive(Debug, Clone)]
pub struct RunOutput<S> {
    pub states: Vec<S>,
    pub trace: Trace,
}

/// Streams the series once, sample by sample: at each time t >= P the shared
/// kernel vector is built once, every node predicts its sample with the
/// state from t-1 (prequential), records the squared error, and applies one
/// [`comid_step`]. Node updates within a step are independent and run in
/// parallel; results do not depend on the thread count.
pub fn run_online(
    series: &SeriesMatrix,
    spec: &KernelSpec,
    h: &Hyperparams,
    sink: &mut dyn TrajectorySink,
) -> Result<RunOutput<NodeState>> {
    let n = series.n_nodes();
    let t_len = series.n_samples();
    if t_len <= h.order {
        return Err(Error::InvalidData(format!(
            "series length {t_len} must exceed lag order {}",
            h.order
        )));
    }
    let steps = t_len - h.order;
    let mut window = WindowIndex::new(h.window_capacity);
    let mut states: Vec<NodeState> = (0..n).map(|node| NodeState::new(node, n, h.order)).collect();
    let mut predictions = Array2::zeros((n, steps));
    let mut ise_mat = Array2::zeros((n, steps));
    let cadence = sink.snapshot_cadence();

    for t in h.order..t_len {
        let evicted = window.push_time(t)?.is_some();
        let kappa = build_kernel_vector(series, t, &window, spec, h.order)?;
        let snapshot = cadence > 0 && (t - h.order) % cadence == 0;
        let per_node: Result<Vec<(f64, f64, Option<Vec<f64>>)>> = states
            .par_iter_mut()
            .map(|state| {
                state.advance_window(evicted);
                let pred = predict(state, &kappa)?;
                let y = series.value(state.node(), t);
                let err2 = ise(y, pred);
                comid_step(state, &kappa, y, h)?;
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use crate::series::SeriesMatrix;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random series, window of length `w_len` ending at tau, random state.
    fn random_instance(
        rng: &mut ChaCha8Rng,
        n: usize,
        order: usize,
        w_len: usize,
        variance: f64,
    ) -> (SeriesMatrix, WindowIndex, KernelVector, NodeState, usize) {
        let t_len = order + w_len + 4;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..t_len).map(|_| rng.random_range(-1.5..1.5)).collect())
            .collect();
        let series = SeriesMatrix::from_rows(rows).unwrap();
        let mut window = WindowIndex::new(w_len);
        let tau = order + w_len - 1;
        for t in order..=tau {
            window.push_time(t).unwrap();
        }
        let spec = KernelSpec::gaussian(variance).unwrap();
        let kappa = build_kernel_vector(&series, tau, &window, &spec, order).unwrap();
        let weights: Vec<Vec<f64>> = (0..n * order)
            .map(|_| (0..w_len).map(|_| rng.random_range(-0.8..0.8)).collect())
            .collect();
        let state = NodeState::with_weights(0, n, order, weights).unwrap();
        (series, window, kappa, state, tau)
    }

    #[test]
    fn predict_all_zero_state_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, _, kappa, state, _) = random_instance(&mut rng, 2, 1, 4, 0.5);
        let zero = NodeState::with_weights(0, 2, 1, vec![vec![0.0; 4]; 2]).unwrap();
        assert_eq!(predict(&zero, &kappa).unwrap(), 0.0);
        drop(state);
    }

    #[test]
    fn predict_one_hot_inner_product() {
        // Single entry: weight 2.0 against a kernel entry of exactly 0.25.
        let d = (4.0f64.ln()).sqrt(); // exp(-d^2 / (2 * 0.5)) = 1/4
        let series = SeriesMatrix::from_rows(vec![vec![0.0, d]]).unwrap();
        let mut window = WindowIndex::new(1);
        window.push_time(1).unwrap();
        let spec = KernelSpec::gaussian(0.5).unwrap();
        // tau=1 vs center t=1 would give 1.0; use a second sample as tau.
        let series2 = SeriesMatrix::from_rows(vec![vec![0.0, d, 0.0]]).unwrap();
        let kappa = build_kernel_vector(&series2, 2, &window, &spec, 1).unwrap();
        // entry = kernel(y[1], y[0]) = kernel(d, 0) = 0.25
        let state = NodeState::with_weights(0, 1, 1, vec![vec![2.0]]).unwrap();
        assert_relative_eq!(predict(&state, &kappa).unwrap(), 0.5, max_relative = 1e-12);
        drop(series);
    }

    #[test]
    fn predict_matches_naive_dot_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let (_, _, kappa, state, _) = random_instance(&mut rng, 3, 2, 6, 0.4);
            let flat = state.flattened();
            let mut naive = 0.0;
            for i in 0..kappa.len() {
                naive += flat[i] * kappa.entries()[i];
            }
            assert_relative_eq!(predict(&state, &kappa).unwrap(), naive, max_relative = 1e-12);
        }
    }

    #[test]
    fn predict_rejects_misaligned_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (_, _, kappa, _, _) = random_instance(&mut rng, 2, 1, 4, 0.5);
        let short = NodeState::with_weights(0, 2, 1, vec![vec![0.0; 3]; 2]).unwrap();
        assert!(predict(&short, &kappa).is_err());
    }

    #[test]
    fn loss_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (_, _, kappa, state, _) = random_instance(&mut rng, 2, 1, 5, 0.5);
        let pred = predict(&state, &kappa).unwrap();
        // perfect prediction
        assert_eq!(instantaneous_loss(&state, &kappa, pred).unwrap(), 0.0);
        // zero state, y = 2 -> 0.5 * 4
        let zero = NodeState::with_weights(0, 2, 1, vec![vec![0.0; 5]; 2]).unwrap();
        assert_eq!(instantaneous_loss(&zero, &kappa, 2.0).unwrap(), 2.0);
        // consistency with predict
        for y in [-1.3, 0.2, 2.7] {
            let d = y - pred;
            assert_relative_eq!(
                instantaneous_loss(&state, &kappa, y).unwrap(),
                0.5 * d * d,
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn gradient_zero_state_is_minus_y_kappa() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (_, _, kappa, _, _) = random_instance(&mut rng, 2, 2, 4, 0.5);
        let zero = NodeState::with_weights(0, 2, 2, vec![vec![0.0; 4]; 4]).unwrap();
        let y = 1.7;
        let v = gradient(&zero, &kappa, y).unwrap();
        for i in 0..kappa.len() {
            assert_eq!(v.entries()[i], -y * kappa.entries()[i]);
        }
    }

    #[test]
    fn gradient_zero_error_is_zero_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (_, _, kappa, state, _) = random_instance(&mut rng, 2, 1, 5, 0.5);
        let y = predict(&state, &kappa).unwrap();
        let v = gradient(&state, &kappa, y).unwrap();
        assert!(v.entries().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (_, _, kappa, state, _) = random_instance(&mut rng, 3, 2, 5, 0.4);
        let y = rng.random_range(-1.0..1.0);
        let analytic = gradient(&state, &kappa, y).unwrap();
        let step = 1e-6;
        let base: Vec<Vec<f64>> = state
            .groups()
            .iter()
            .map(|g| g.weights().to_vec())
            .collect();
        let w_len = state.window_len();
        for _ in 0..20 {
            let flat = rng.random_range(0..kappa.len());
            let (g, i) = (flat / w_len, flat % w_len);
            let mut plus = base.clone();
            plus[g][i] += step;
            let mut minus = base.clone();
            minus[g][i] -= step;
            let sp = NodeState::with_weights(0, 3, 2, plus).unwrap();
            let sm = NodeState::with_weights(0, 3, 2, minus).unwrap();
            let fd = (instantaneous_loss(&sp, &kappa, y).unwrap()
                - instantaneous_loss(&sm, &kappa, y).unwrap())
                / (2.0 * step);
            let a = analytic.entries()[flat];
            let denom = 1.0f64.max(a.abs()).max(fd.abs());
            assert!(
                ((a - fd) / denom).abs() < 1e-6,
                "coordinate {flat}: analytic {a}, finite difference {fd}"
            );
        }
    }

    #[test]
    fn group_shrink_hand_values() {
        assert_eq!(group_shrink(&[0.0, 0.0, 0.0], 1.0), vec![0.0, 0.0, 0.0]);
        assert_eq!(group_shrink(&[3.0, 4.0], 2.5), vec![1.5, 2.0]);
        // ||u|| == threshold exactly -> zero
        assert_eq!(group_shrink(&[3.0, 4.0], 5.0), vec![0.0, 0.0]);
        // threshold beyond the norm -> zero
        assert_eq!(group_shrink(&[1.0], 2.0), vec![0.0]);
    }

    #[test]
    fn group_shrink_never_increases_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..500 {
            let u: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let thr = rng.random_range(0.0..3.0);
            let before = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            let after_v = group_shrink(&u, thr);
            let after = after_v.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(after <= before + 1e-15);
        }
    }

    #[test]
    fn comid_lambda_zero_is_plain_capped_gradient_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (_, _, kappa, state, _) = random_instance(&mut rng, 3, 2, 5, 0.4);
        let y = 0.9;
        let h = Hyperparams::new(0.0, 10.0, 2, 100).unwrap();
        let mut updated = state.clone();
        comid_step(&mut updated, &kappa, y, &h).unwrap();

        let err = predict(&state, &kappa).unwrap() - y;
        let steps = effective_steps(&kappa, h.gamma);
        for (g, (before, after)) in state.groups().iter().zip(updated.groups()).enumerate() {
            let kg = kappa.group_by_index(g);
            for i in 0..before.weights().len() {
                let expect = before.weights()[i] - steps[g] * err * kg[i];
                assert_eq!(after.weights()[i], expect, "group {g}, weight {i}");
            }
        }
    }

    #[test]
    fn comid_large_lambda_zeroes_cross_groups_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (_, _, kappa, state, _) = random_instance(&mut rng, 3, 2, 5, 0.4);
        let y = -0.4;
        let h = Hyperparams::new(1e9, 10.0, 2, 100).unwrap();
        let mut updated = state.clone();
        comid_step(&mut updated, &kappa, y, &h).unwrap();

        let err = predict(&state, &kappa).unwrap() - y;
        let steps = effective_steps(&kappa, h.gamma);
        for (g, (before, after)) in state.groups().iter().zip(updated.groups()).enumerate() {
            if after.is_self() {
                // untouched by shrinkage: exactly the gradient step
                let kg = kappa.group_by_index(g);
                for i in 0..before.weights().len() {
                    let expect = before.weights()[i] - steps[g] * err * kg[i];
                    assert_eq!(after.weights()[i], expect);
                }
                assert!(after.norm() > 0.0);
            } else {
                assert!(after.weights().iter().all(|&w| w == 0.0));
            }
        }
    }

    #[test]
    fn comid_groups_update_independently() {
        // The full update equals re-deriving every group on its own from the
        // shared prediction error: group separability.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (_, _, kappa, state, _) = random_instance(&mut rng, 3, 2, 6, 0.3);
        let y = 0.35;
        let h = Hyperparams::new(0.07, 10.0, 2, 100).unwrap();
        let mut updated = state.clone();
        comid_step(&mut updated, &kappa, y, &h).unwrap();

        let err = predict(&state, &kappa).unwrap() - y;
        let steps = effective_steps(&kappa, h.gamma);
        for (g, (before, after)) in state.groups().iter().zip(updated.groups()).enumerate() {
            let kg = kappa.group_by_index(g);
            let mut u: Vec<f64> = before
                .weights()
                .iter()
                .zip(kg.iter())
                .map(|(w, k)| w - steps[g] * err * k)
                .collect();
            if !before.is_self() {
                u = group_shrink(&u, steps[g] * h.lambda);
            }
            assert_eq!(after.weights(), &u[..], "group {g}");
        }
    }

    #[test]
    fn comid_decreases_update_objective() {
        // J(a) = <v, a - alpha> + sum_g ||a_g - alpha_g||^2 / (2 step_g)
        //        + lambda * sum_cross ||a_g||; minimizer must not exceed J(alpha).
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..30 {
            let (_, _, kappa, state, _) = random_instance(&mut rng, 3, 2, 5, 0.4);
            let y = rng.random_range(-1.0..1.0);
            let lambda = rng.random_range(0.0..0.5);
            let h = Hyperparams::new(lambda, 10.0, 2, 100).unwrap();
            let mut updated = state.clone();
            comid_step(&mut updated, &kappa, y, &h).unwrap();

            let err = predict(&state, &kappa).unwrap() - y;
            let steps = effective_steps(&kappa, h.gamma);
            let w_len = state.window_len();
            let objective = |cand: &NodeState| -> f64 {
                let mut j = 0.0;
                for (g, (cg, sg)) in cand.groups().iter().zip(state.groups()).enumerate() {
                    let kg = kappa.group_by_index(g);
                    let mut prox = 0.0;
                    for i in 0..w_len {
                        let diff = cg.weights()[i] - sg.weights()[i];
                        j += err * kg[i] * diff; // <v, a - alpha>
                        prox += diff * diff;
                    }
                    j += prox / (2.0 * steps[g]);
                    if !cg.is_self() {
                        j += lambda * cg.norm();
                    }
                }
                j
            };
            let j_alpha = objective(&state);
            let j_new = objective(&updated);
            assert!(
                j_new <= j_alpha + 1e-12,
                "objective rose: {j_new} > {j_alpha}"
            );
        }
    }

    #[test]
    fn newest_weight_is_image_of_zero_initialization() {
        // After advance + update, the newest weight in every group must be
        // the gradient-plus-shrinkage image of its zero initialization.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..40).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let series = SeriesMatrix::from_rows(rows).unwrap();
        let spec = KernelSpec::gaussian(0.3).unwrap();
        let h = Hyperparams::new(0.05, 10.0, 2, 8).unwrap();

        let mut window = WindowIndex::new(h.window_capacity);
        let mut state = NodeState::new(1, 3, 2);
        for t in h.order..series.n_samples() {
            let evicted = window.push_time(t).unwrap().is_some();
            state.advance_window(evicted);
            let kappa = build_kernel_vector(&series, t, &window, &spec, h.order).unwrap();
            let before = state.clone();
            let y = series.value(1, t);
            comid_step(&mut state, &kappa, y, &h).unwrap();

            let err = predict(&before, &kappa).unwrap() - y;
            let steps = effective_steps(&kappa, h.gamma);
            let w = state.window_len();
            for (g, group) in state.groups().iter().enumerate() {
                let kg = kappa.group_by_index(g);
                let u_new = -steps[g] * err * kg[w - 1];
                if group.is_self() {
                    assert_eq!(group.weights()[w - 1], u_new);
                } else {
                    // shrinkage scales the whole group by a common factor
                    let mut u: Vec<f64> = before.groups()[g]
                        .weights()
                        .iter()
                        .zip(kg.iter())
                        .map(|(wv, k)| wv - steps[g] * err * k)
                        .collect();
                    group_shrink_in_place(&mut u, steps[g] * h.lambda);
                    assert_eq!(group.weights()[w - 1], u[w - 1]);
                }
            }
        }
    }

    #[test]
    fn run_online_constant_series_error_decreases() {
        let series = SeriesMatrix::from_rows(vec![vec![1.0; 30]]).unwrap();
        let spec = KernelSpec::gaussian(0.5).unwrap();
        let h = Hyperparams::new(0.0, 10.0, 1, 100).unwrap();
        let out = run_online(&series, &spec, &h, &mut NullSink).unwrap();
        let ise_row = out.trace.ise_node(0);
        for i in 1..10 {
            assert!(
                ise_row[i] < ise_row[i - 1],
                "ISE did not decrease at step {i}: {} vs {}",
                ise_row[i],
                ise_row[i - 1]
            );
        }
    }

    #[test]
    fn run_online_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..60).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let series = SeriesMatrix::from_rows(rows).unwrap();
        let spec = KernelSpec::gaussian(0.2).unwrap();
        let h = Hyperparams::new(0.1, 10.0, 2, 20).unwrap();
        let a = run_online(&series, &spec, &h, &mut NullSink).unwrap();
        let b = run_online(&series, &spec, &h, &mut NullSink).unwrap();
        assert_eq!(a.trace.ise(), b.trace.ise());
        assert_eq!(a.trace.predictions(), b.trace.predictions());
        for (sa, sb) in a.states.iter().zip(&b.states) {
            assert_eq!(sa, sb);
        }
    }

    #[test]
    fn run_online_rejects_too_short_series() {
        let series = SeriesMatrix::from_rows(vec![vec![1.0, 2.0]]).unwrap();
        let spec = KernelSpec::gaussian(0.5).unwrap();
        let h = Hyperparams::new(0.0, 1.0, 2, 10).unwrap();
        assert!(run_online(&series, &spec, &h, &mut NullSink).is_err());
    }

    #[test]
    fn sink_receives_every_step_and_cadenced_snapshots() {
        struct Collect {
            recs: Vec<StepRecord>,
        }
        impl TrajectorySink for Collect {
            fn snapshot_cadence(&self) -> usize {
                3
            }
            fn record(&mut self, rec: StepRecord) {
                self.recs.push(rec);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let rows: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..20).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let series = SeriesMatrix::from_rows(rows).unwrap();
        let spec = KernelSpec::gaussian(0.5).unwrap();
        let h = Hyperparams::new(0.1, 10.0, 1, 50).unwrap();
        let mut sink = Collect { recs: Vec::new() };
        run_online(&series, &spec, &h, &mut sink).unwrap();
        assert_eq!(sink.recs.len(), 2 * (20 - 1));
        for rec in &sink.recs {
            let snap_step = (rec.t - 1) % 3 == 0;
            assert_eq!(rec.group_norms.is_some(), snap_step, "t={}", rec.t);
            if let Some(norms) = &rec.group_norms {
                assert_eq!(norms.len(), 2);
            }
        }
    }

    #[test]
    fn hyperparams_reject_out_of_range() {
        assert!(Hyperparams::new(-0.1, 1.0, 1, 1).is_err());
        assert!(Hyperparams::new(0.0, 0.0, 1, 1).is_err());
        assert!(Hyperparams::new(0.0, 1.0, 0, 1).is_err());
        assert!(Hyperparams::new(0.0, 1.0, 1, 0).is_err());
        assert!(Hyperparams::new(f64::NAN, 1.0, 1, 1).is_err());
    }
}
