//! Sample containers, lag indexing, and the sliding window of retained
//! sample times.

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

/// Immutable N x T record of observed samples, node n in row n, time t in
/// column t. Streaming is modeled as progressive revelation by a cursor, so
/// every run over the same matrix is replayable.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMatrix {
    values: Array2<f64>,
    node_ids: Vec<String>,
}

impl SeriesMatrix {
    /// Builds a matrix, rejecting empty shapes, non-finite entries, and a
    /// label count that disagrees with the row count.
    pub fn new(values: Array2<f64>, node_ids: Vec<String>) -> Result<Self> {
        let (n, t) = values.dim();
        if n == 0 || t == 0 {
            return Err(Error::InvalidData(format!(
                "series must be at least 1 x 1, got {n} x {t}"
            )));
        }
        if node_ids.len() != n {
            return Err(Error::DimensionMismatch {
                context: "series node labels",
                expected: n,
                got: node_ids.len(),
            });
        }
        if let Some((idx, v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite sample {v} at node {}, time {}",
                idx.0, idx.1
            )));
        }
        Ok(Self { values, node_ids })
    }

    /// Convenience constructor from per-node rows with default labels
    /// `node_0..node_{N-1}`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let t = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != t) {
            return Err(Error::InvalidData("rows have unequal lengths".into()));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let values = Array2::from_shape_vec((n, t), flat)
            .map_err(|e| Error::InvalidData(e.to_string()))?;
        Self::new(values, default_node_ids(n))
    }

    pub fn n_nodes(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.values.ncols()
    }

    pub fn value(&self, node: usize, t: usize) -> f64 {
        self.values[[node, t]]
    }

    pub fn row(&self, node: usize) -> ArrayView1<'_, f64> {
        self.values.row(node)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }
}

/// Default labels used by generators and tests.
pub fn default_node_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("node_{i}")).collect()
}

/// Read access to the P lagged samples behind one time index: `(source, lag)`
/// yields `y_source[tau - lag]` for `1 <= lag <= P`.
#[derive(Debug, Clone, Copy)]
pub struct LagView<'a> {
    series: &'a SeriesMatrix,
    tau: usize,
    order: usize,
}

impl<'a> LagView<'a> {
    /// `y_source[tau - lag]`. `lag` must lie in `1..=order`.
    pub fn get(&self, source: usize, lag: usize) -> f64 {
        assert!(
            lag >= 1 && lag <= self.order,
            "lag {lag} outside 1..={}",
            self.order
        );
        self.series.value(source, self.tau - lag)
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn order(&self) -> usize {
        self.order
    }
}

/// Positions a lag view at `tau`; fails unless `order <= tau < T` so that all
/// P past samples exist for every node.
pub fn lag_view(series: &SeriesMatrix, tau: usize, order: usize) -> Result<LagView<'_>> {
    if tau < order || tau >= series.n_samples() {
        return Err(Error::TimeOutOfRange {
            tau,
            order,
            len: series.n_samples(),
        });
    }
    Ok(LagView { series, tau, order })
}

/// FIFO window over the most recent sample times. Bounded by `capacity`; a
/// push past capacity evicts the oldest retained time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowIndex {
    retained: Vec<usize>,
    capacity: usize,
}

impl WindowIndex {
    /// `capacity` is the maximum number of retained times (must be >= 1).
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "window capacity must be >= 1");
        Self {
            retained: Vec::new(),
            capacity,
        }
    }

    /// Appends a strictly newer time. Returns the evicted oldest time when
    /// the window was already at capacity, `None` otherwise.
    pub fn push_time(&mut self, t: usize) -> Result<Option<usize>> {
        if let Some(&newest) = self.retained.last() {
            if t <= newest {
                return Err(Error::NonMonotoneTime { pushed: t, newest });
            }
        }
        let evicted = if self.retained.len() == self.capacity {
            Some(self.retained.remove(0))
        } else {
            None
        };
        self.retained.push(t);
        Ok(evicted)
    }

    /// Retained times, oldest first, strictly increasing.
    pub fn times(&self) -> &[usize] {
        &self.retained
    }

    pub fn len(&self) -> usize {
        self.retained.len()
    }

    pub fn is_empty(&self) -> bool {
        self.retained.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}
