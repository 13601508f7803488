//! Scalar kernel evaluation and assembly of the stacked kernel vector over
//! all (lag, source, retained time) triples.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{SeriesMatrix, WindowIndex};

/// Kernel family. Only the Gaussian kernel is implemented; the enumeration
/// leaves room for alternatives without breaking the serialized config shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Gaussian,
}

/// Scalar kernel specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Variance sigma^2 in the exponent denominator `2 sigma^2`; same units
    /// as squared signal amplitude.
    pub variance: f64,
}

impl KernelSpec {
    pub fn gaussian(variance: f64) -> Result<Self> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::InvalidParameter {
                name: "kernel variance",
                message: format!("must be finite and > 0, got {variance}"),
            });
        }
        Ok(Self {
            kind: KernelKind::Gaussian,
            variance,
        })
    }
}

/// `exp(-(x - x')^2 / (2 sigma^2))`: symmetric, in (0, 1], equal to 1 iff
/// `x == x'`.
pub fn kernel_eval(spec: &KernelSpec, x: f64, xp: f64) -> f64 {
    match spec.kind {
        KernelKind::Gaussian => {
            let d = x - xp;
            (-(d * d) / (2.0 * spec.variance)).exp()
        }
    }
}

/// Kernel similarities between the lagged samples behind `tau` and every
/// retained kernel center, flattened lag-major: the entry for
/// `(lag, source, t)` sits at `((lag-1)*N + source) * W + rank(t)` where
/// `rank` is the position of `t` among the retained times (oldest first).
///
/// Contiguous runs of length W are the per-(lag, source) groups that the
/// estimator shrinks as units.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelVector {
    entries: Array1<f64>,
    n_nodes: usize,
    order: usize,
    window_len: usize,
}

impl KernelVector {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> ArrayView1<'_, f64> {
        self.entries.view()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Retained-window length W shared by all groups.
    pub fn window_len(&self) -> usize {
        self.window_len
    }

    /// Number of (lag, source) groups, `P * N`.
    pub fn n_groups(&self) -> usize {
        self.order * self.n_nodes
    }

    /// Flat position of the entry for `(lag, source, rank)`.
    pub fn flat_index(&self, lag: usize, source: usize, rank: usize) -> usize {
        debug_assert!(lag >= 1 && lag <= self.order);
        debug_assert!(source < self.n_nodes && rank < self.window_len);
        ((lag - 1) * self.n_nodes + source) * self.window_len + rank
    }

    /// The W entries of one (lag, source) group.
    pub fn group(&self, lag: usize, source: usize) -> ArrayView1<'_, f64> {
        let start = ((lag - 1) * self.n_nodes + source) * self.window_len;
        self.entries.slice(ndarray::s![start..start + self.window_len])
    }

    /// Group slice by flat group index `(lag-1)*N + source`.
    pub fn group_by_index(&self, g: usize) -> ArrayView1<'_, f64> {
        let start = g * self.window_len;
        self.entries.slice(ndarray::s![start..start + self.window_len])
    }
}

/// Builds the stacked kernel vector at time `tau` over the retained times in
/// `window`: entry `(lag, source, t) = kernel(y_source[tau-lag], y_source[t-lag])`.
///
/// Every retained time must itself allow `order` lags, which holds whenever
/// windows are fed times starting at `order`.
pub fn build_kernel_vector(
    series: &SeriesMatrix,
    tau: usize,
    window: &WindowIndex,
    spec: &KernelSpec,
    order: usize,
) -> Result<KernelVector> {
    let n = series.n_nodes();
    let t_len = series.n_samples();
    if tau < order || tau >= t_len {
        return Err(Error::TimeOutOfRange {
            tau,
            order,
            len: t_len,
        });
    }
    if window.is_empty() {
        return Err(Error::InvalidData("window holds no retained times".into()));
    }
    let times = window.times();
    if times[0] < order || *times.last().unwrap() >= t_len {
        return Err(Error::TimeOutOfRange {
            tau: if times[0] < order { times[0] } else { *times.last().unwrap() },
            order,
            len: t_len,
        });
    }
    let w = times.len();
    let mut entries = Array1::zeros(order * n * w);
    for lag in 1..=order {
        for source in 0..n {
            let x = series.value(source, tau - lag);
            let base = ((lag - 1) * n + source) * w;
            for (rank, &t) in times.iter().enumerate() {
                entries[base + rank] = kernel_eval(spec, x, series.value(source, t - lag));
            }
        }
    }
    Ok(KernelVector {
        entries,
        n_nodes: n,
        order,
        window_len: w,
    })
}
