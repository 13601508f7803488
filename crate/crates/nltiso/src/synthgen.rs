//! Synthetic generators with known ground truth: a stationary nonlinear VAR
//! whose edge nonlinearities are fixed random kernel expansions, and a
//! time-varying VAR whose adjacency drifts sinusoidally under a fixed
//! bounded nonlinearity.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{default_node_ids, SeriesMatrix};

/// Dimensions, distributions, and seeds for both generators. Fields that a
/// particular generator does not use (e.g. drift for the stationary one) are
/// simply ignored by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_nodes: usize,
    pub n_samples: usize,
    pub order: usize,
    /// Probability that a (target, source, lag) triple carries an edge.
    pub edge_prob: f64,
    /// Mean of the Gaussian edge-weight distribution.
    pub adjacency_mean: f64,
    /// Variance of the Gaussian edge-weight distribution.
    pub adjacency_var: f64,
    /// Variance of the kernel-expansion coefficients (stationary mode).
    pub beta_var: f64,
    /// Variance of the generating Gaussian kernel (stationary mode).
    pub gen_kernel_var: f64,
    /// Variance of the additive sample noise.
    pub noise_var: f64,
    /// Variance of the first P initialization samples.
    pub init_var: f64,
    /// Number of fixed kernel centers per edge (stationary mode).
    pub n_centers: usize,
    /// Adjacency drift increment amplitude (time-varying mode).
    pub drift_amplitude: f64,
    /// Adjacency drift frequency in radians per time step (time-varying mode).
    pub drift_frequency: f64,
    pub seed: u64,
}

impl GenConfig {
    /// Stationary-experiment defaults: 5 nodes, 3000 samples, order 2,
    /// sparse graph with strong positive weights and a narrow generating
    /// kernel.
    pub fn stationary(seed: u64) -> Self {
        Self {
            n_nodes: 5,
            n_samples: 3000,
            order: 2,
            edge_prob: 0.1,
            adjacency_mean: 8.0,
            adjacency_var: 3.0,
            beta_var: 0.03,
            gen_kernel_var: 0.03,
            noise_var: 0.01,
            init_var: 0.1,
            n_centers: 10,
            drift_amplitude: 0.0,
            drift_frequency: 0.0,
            seed,
        }
    }

    /// Time-varying-experiment defaults: dense standard-normal initial
    /// adjacency drifting as `0.01 sin(0.03 t)` per step.
    pub fn timevarying(seed: u64) -> Self {
        Self {
            n_nodes: 5,
            n_samples: 3000,
            order: 2,
            edge_prob: 1.0,
            adjacency_mean: 0.0,
            adjacency_var: 1.0,
            beta_var: 0.03,
            gen_kernel_var: 0.03,
            noise_var: 0.01,
            init_var: 0.1,
            n_centers: 10,
            drift_amplitude: 0.01,
            drift_frequency: 0.03,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 {
            return Err(Error::InvalidParameter {
                name: "n_nodes",
                message: "must be >= 1".into(),
            });
        }
        if self.order == 0 {
            return Err(Error::InvalidParameter {
                name: "order",
                message: "must be >= 1".into(),
            });
        }
        if self.n_samples <= self.order {
            return Err(Error::InvalidParameter {
                name: "n_samples",
                message: format!("must exceed lag order {}", self.order),
            });
        }
        if !(0.0..=1.0).contains(&self.edge_prob) {
            return Err(Error::InvalidParameter {
                name: "edge_prob",
                message: format!("must lie in [0, 1], got {}", self.edge_prob),
            });
        }
        for (name, v) in [
            ("adjacency_var", self.adjacency_var),
            ("beta_var", self.beta_var),
            ("gen_kernel_var", self.gen_kernel_var),
            ("noise_var", self.noise_var),
            ("init_var", self.init_var),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "variance",
                    message: format!("{name} must be finite and > 0, got {v}"),
                });
            }
        }
        if self.n_centers == 0 {
            return Err(Error::InvalidParameter {
                name: "n_centers",
                message: "must be >= 1".into(),
            });
        }
        if !self.adjacency_mean.is_finite()
            || !self.drift_amplitude.is_finite()
            || !self.drift_frequency.is_finite()
        {
            return Err(Error::InvalidParameter {
                name: "generator scalars",
                message: "adjacency mean and drift parameters must be finite".into(),
            });
        }
        Ok(())
    }
}

/// The fixed nonlinearity attached to one true edge in stationary mode: a
/// kernel expansion over `centers` with coefficients `beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeFunction {
    pub target: usize,
    pub source: usize,
    /// 1-based lag.
    pub lag: usize,
    pub centers: Vec<f64>,
    pub beta: Vec<f64>,
}

impl EdgeFunction {
    /// `sum_m beta_m exp(-(x - c_m)^2 / (2 variance))`.
    pub fn response(&self, variance: f64, x: f64) -> f64 {
        self.centers
            .iter()
            .zip(&self.beta)
            .map(|(c, b)| {
                let d = x - c;
                b * (-(d * d) / (2.0 * variance)).exp()
            })
            .sum()
    }
}

/// Generator-side ground truth: adjacency weights, the edge mask, the fixed
/// per-edge nonlinearities (stationary mode), and the seed that produced
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueGraph {
    /// `[target][source][lag-1]` edge weight; zero wherever the mask is off.
    pub adjacency: Array3<f64>,
    pub edge_mask: Array3<bool>,
    /// One entry per true edge, in (target, source, lag) iteration order;
    /// empty in sine (time-varying) mode.
    pub functions: Vec<EdgeFunction>,
    pub seed: u64,
}

impl TrueGraph {
    pub fn n_nodes(&self) -> usize {
        self.adjacency.dim().0
    }

    pub fn order(&self) -> usize {
        self.adjacency.dim().2
    }

    /// Number of true edges between distinct nodes.
    pub fn cross_edge_count(&self) -> usize {
        self.edge_mask
            .indexed_iter()
            .filter(|((t, s, _), &m)| m && t != s)
            .count()
    }
}

/// Stationary nonlinear VAR: edges drawn Bernoulli(edge_prob) over all
/// (target, source, lag) triples (self-loops included), each true edge given
/// a Gaussian weight and a fixed random kernel expansion; samples then follow
/// the lagged model plus Gaussian noise. Deterministic given the seed.
pub fn gen_stationary(cfg: &GenConfig) -> Result<(SeriesMatrix, TrueGraph)> {
    cfg.validate()?;
    let (n, t_len, order) = (cfg.n_nodes, cfg.n_samples, cfg.order);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let weight_dist = normal(cfg.adjacency_mean, cfg.adjacency_var)?;
    let center_dist = normal(0.0, 1.0)?;
    let beta_dist = normal(0.0, cfg.beta_var)?;
    let init_dist = normal(0.0, cfg.init_var)?;
    let noise_dist = normal(0.0, cfg.noise_var)?;

    let mut adjacency = Array3::zeros((n, n, order));
    let mut edge_mask = Array3::from_elem((n, n, order), false);
    let mut functions = Vec::new();
    for target in 0..n {
        for source in 0..n {
            for lag in 1..=order {
                if rng.random_bool(cfg.edge_prob) {
                    edge_mask[[target, source, lag - 1]] = true;
                    adjacency[[target, source, lag - 1]] = weight_dist.sample(&mut rng);
                    let centers: Vec<f64> =
                        (0..cfg.n_centers).map(|_| center_dist.sample(&mut rng)).collect();
                    let beta: Vec<f64> =
                        (0..cfg.n_centers).map(|_| beta_dist.sample(&mut rng)).collect();
                    functions.push(EdgeFunction {
                        target,
                        source,
                        lag,
                        centers,
                        beta,
                    });
                }
            }
        }
    }

    // per-target index into `functions` for the generation loop
    let mut edges_of: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, f) in functions.iter().enumerate() {
        edges_of[f.target].push(i);
    }

    let mut values = ndarray::Array2::zeros((n, t_len));
    for node in 0..n {
        for t in 0..order {
            values[[node, t]] = init_dist.sample(&mut rng);
        }
    }
    for t in order..t_len {
        for target in 0..n {
            let mut s = 0.0;
            for &i in &edges_of[target] {
                let f = &functions[i];
                let x = values[[f.source, t - f.lag]];
                s += adjacency[[f.target, f.source, f.lag - 1]]
                    * f.response(cfg.gen_kernel_var, x);
            }
            values[[target, t]] = s + noise_dist.sample(&mut rng);
        }
    }

    let series = SeriesMatrix::new(values, default_node_ids(n))?;
    Ok((
        series,
        TrueGraph {
            adjacency,
            edge_mask,
            functions,
            seed: cfg.seed,
        },
    ))
}

/// `0.4 sin(pi x^2) + 0.3 sin(2 pi x) + 0.3 sin(3 pi x)`: the bounded
/// nonlinearity applied on every edge in time-varying mode.
pub fn sine_nonlinearity(x: f64) -> f64 {
    use std::f64::consts::PI;
    0.4 * (PI * x * x).sin() + 0.3 * (2.0 * PI * x).sin() + 0.3 * (3.0 * PI * x).sin()
}

/// One drift step: every nonzero entry is incremented by
/// `amplitude * sin(frequency * t)`; exact zeros stay zero, preserving the
/// sparsity pattern. `t` is absolute time (the step counter never resets).
pub fn drift_adjacency(
    adjacency: &Array3<f64>,
    t: usize,
    amplitude: f64,
    frequency: f64,
) -> Array3<f64> {
    let increment = amplitude * (frequency * t as f64).sin();
    adjacency.mapv(|a| if a != 0.0 { a + increment } else { 0.0 })
}

/// Per-step record of the drifting adjacency: `per_step[t]` is the tensor
/// used to generate the sample at time t (the initial draw for t < P).
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyTrajectory {
    pub per_step: Vec<Array3<f64>>,
}

impl AdjacencyTrajectory {
    pub fn len(&self) -> usize {
        self.per_step.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_step.is_empty()
    }

    pub fn final_adjacency(&self) -> &Array3<f64> {
        self.per_step.last().expect("trajectory never empty")
    }
}

/// Time-varying VAR: full-support standard-normal initial adjacency (self
/// entries included), drifted by [`drift_adjacency`] before each new sample;
/// every edge applies [`sine_nonlinearity`] to its lagged input. Returns the
/// series plus the full adjacency trajectory. Deterministic given the seed.
pub fn gen_timevarying(cfg: &GenConfig) -> Result<(SeriesMatrix, AdjacencyTrajectory)> {
    cfg.validate()?;
    let (n, t_len, order) = (cfg.n_nodes, cfg.n_samples, cfg.order);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init_adj_dist = normal(cfg.adjacency_mean, cfg.adjacency_var)?;
    let init_dist = normal(0.0, cfg.init_var)?;
    let noise_dist = normal(0.0, cfg.noise_var)?;

    let mut adjacency = Array3::zeros((n, n, order));
    for target in 0..n {
        for source in 0..n {
            for lag in 0..order {
                adjacency[[target, source, lag]] = init_adj_dist.sample(&mut rng);
            }
        }
    }

    let mut per_step = Vec::with_capacity(t_len);
    let mut values = ndarray::Array2::zeros((n, t_len));
    for node in 0..n {
        for t in 0..order {
            values[[node, t]] = init_dist.sample(&mut rng);
        }
    }
    for _ in 0..order.min(t_len) {
        per_step.push(adjacency.clone());
    }
    for t in order..t_len {
        adjacency = drift_adjacency(&adjacency, t, cfg.drift_amplitude, cfg.drift_frequency);
        per_step.push(adjacency.clone());
        for target in 0..n {
            let mut s = 0.0;
            for source in 0..n {
                for lag in 1..=order {
                    s += adjacency[[target, source, lag - 1]]
                        * sine_nonlinearity(values[[source, t - lag]]);
                }
            }
            values[[target, t]] = s + noise_dist.sample(&mut rng);
        }
    }

    let series = SeriesMatrix::new(values, default_node_ids(n))?;
    Ok((series, AdjacencyTrajectory { per_step }))
}

fn normal(mean: f64, variance: f64) -> Result<Normal<f64>> {
    Normal::new(mean, variance.sqrt()).map_err(|e| Error::InvalidParameter {
        name: "distribution",
        message: e.to_string(),
    })
}
