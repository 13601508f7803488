//! Effective run settings: per-mode defaults, overlaid by an optional flat
//! key-value config file, overlaid by command-line flags (flags win).

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use nltiso::estimator::Hyperparams;
use nltiso::ingest::TimestampFormat;
use nltiso::kernel::KernelSpec;
use nltiso::synthgen::GenConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nltiso,
    Tirso,
    Both,
}

impl Method {
    /// Concrete estimator names selected by this choice, in artifact order.
    pub fn selected(self) -> Vec<&'static str> {
        match self {
            Method::Nltiso => vec!["nltiso"],
            Method::Tirso => vec!["tirso"],
            Method::Both => vec!["nltiso", "tirso"],
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "nltiso" => Ok(Method::Nltiso),
            "tirso" => Ok(Method::Tirso),
            "both" => Ok(Method::Both),
            other => bail!("unknown method {other:?} (expected nltiso, tirso, or both)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ExperimentKind {
    Stationary,
    Timevarying,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Stationary => "stationary",
            ExperimentKind::Timevarying => "timevarying",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TsFormat {
    None,
    Epoch,
    Iso8601,
}

impl TsFormat {
    pub fn to_ingest(self) -> TimestampFormat {
        match self {
            TsFormat::None => TimestampFormat::None,
            TsFormat::Epoch => TimestampFormat::EpochSeconds,
            TsFormat::Iso8601 => TimestampFormat::Iso8601,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TsFormat::None => "none",
            TsFormat::Epoch => "epoch",
            TsFormat::Iso8601 => "iso8601",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(TsFormat::None),
            "epoch" => Ok(TsFormat::Epoch),
            "iso8601" => Ok(TsFormat::Iso8601),
            other => bail!("unknown timestamp format {other:?} (expected none, epoch, or iso8601)"),
        }
    }
}

/// Fully resolved settings for one run. Holds every tunable regardless of
/// mode; modes ignore what they do not use.
#[derive(Debug, Clone)]
pub struct Settings {
    pub method: Method,
    pub seed: u64,
    pub lambda: f64,
    pub gamma: f64,
    pub kernel_var: f64,
    pub window: usize,
    pub order: usize,
    pub snapshot_every: usize,
    pub burn_in: usize,
    pub nodes: usize,
    pub samples: usize,
    // generator knobs
    pub edge_prob: f64,
    pub adjacency_mean: f64,
    pub adjacency_var: f64,
    pub beta_var: f64,
    pub gen_kernel_var: f64,
    pub noise_var: f64,
    pub init_var: f64,
    pub n_centers: usize,
    pub drift_amplitude: f64,
    pub drift_frequency: f64,
    // ingest / estimate knobs
    pub standardize: bool,
    pub timestamp_format: TsFormat,
    pub resample_period: Option<f64>,
    pub average_window: usize,
    // evaluation knobs
    pub top_k: Option<usize>,
    pub truth_threshold: f64,
}

impl Settings {
    /// Baseline defaults shared by every mode; experiment-specific values
    /// are layered on top by [`Settings::for_experiment`].
    pub fn base() -> Self {
        Self {
            method: Method::Both,
            seed: 0,
            lambda: 0.1,
            gamma: 10.0,
            kernel_var: 0.1,
            window: 2000,
            order: 2,
            snapshot_every: 100,
            burn_in: 500,
            nodes: 5,
            samples: 3000,
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
            standardize: true,
            timestamp_format: TsFormat::None,
            resample_period: None,
            average_window: 0,
            top_k: None,
            truth_threshold: 1e-6,
        }
    }

    /// Published defaults for the built-in experiments.
    pub fn for_experiment(kind: ExperimentKind) -> Self {
        let mut s = Self::base();
        match kind {
            ExperimentKind::Stationary => {}
            ExperimentKind::Timevarying => {
                s.lambda = 1e-6;
                s.kernel_var = 0.02;
                s.edge_prob = 1.0;
                s.adjacency_mean = 0.0;
                s.adjacency_var = 1.0;
                s.drift_amplitude = 0.01;
                s.drift_frequency = 0.03;
            }
        }
        s
    }

    /// Defaults for estimation on user data: stationary estimation
    /// hyperparameters, kernel method only, trailing average over 720 steps.
    pub fn for_estimate() -> Self {
        let mut s = Self::base();
        s.method = Method::Nltiso;
        s.average_window = 720;
        s
    }

    /// Apply one `key = value` pair from a config file.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: std::error::Error + Send + Sync + 'static,
        {
            value
                .parse::<T>()
                .with_context(|| format!("config key {key}: cannot parse {value:?}"))
        }
        match key {
            "method" => self.method = Method::parse(value)?,
            "seed" => self.seed = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "kernel_var" => self.kernel_var = num(key, value)?,
            "window" => self.window = num(key, value)?,
            "order" => self.order = num(key, value)?,
            "snapshot_every" => self.snapshot_every = num(key, value)?,
            "burn_in" => self.burn_in = num(key, value)?,
            "nodes" => self.nodes = num(key, value)?,
            "samples" => self.samples = num(key, value)?,
            "edge_prob" => self.edge_prob = num(key, value)?,
            "adjacency_mean" => self.adjacency_mean = num(key, value)?,
            "adjacency_var" => self.adjacency_var = num(key, value)?,
            "beta_var" => self.beta_var = num(key, value)?,
            "gen_kernel_var" => self.gen_kernel_var = num(key, value)?,
            "noise_var" => self.noise_var = num(key, value)?,
            "init_var" => self.init_var = num(key, value)?,
            "n_centers" => self.n_centers = num(key, value)?,
            "drift_amplitude" => self.drift_amplitude = num(key, value)?,
            "drift_frequency" => self.drift_frequency = num(key, value)?,
            "standardize" => self.standardize = num(key, value)?,
            "timestamp_format" => self.timestamp_format = TsFormat::parse(value)?,
            "resample_period" => self.resample_period = Some(num(key, value)?),
            "average_window" => self.average_window = num(key, value)?,
            "top_k" => self.top_k = Some(num(key, value)?),
            "truth_threshold" => self.truth_threshold = num(key, value)?,
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    /// Overlay a flat `key = value` config file. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').with_context(|| {
                format!("{} line {}: expected key = value", path.display(), i + 1)
            })?;
            self.apply(key.trim(), value.trim())
                .with_context(|| format!("{} line {}", path.display(), i + 1))?;
        }
        Ok(())
    }

    pub fn hyperparams(&self) -> Result<Hyperparams> {
        Ok(Hyperparams::new(self.lambda, self.gamma, self.order, self.window)?)
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        Ok(KernelSpec::gaussian(self.kernel_var)?)
    }

    pub fn gen_config(&self) -> GenConfig {
        GenConfig {
            n_nodes: self.nodes,
            n_samples: self.samples,
            order: self.order,
            edge_prob: self.edge_prob,
            adjacency_mean: self.adjacency_mean,
            adjacency_var: self.adjacency_var,
            beta_var: self.beta_var,
            gen_kernel_var: self.gen_kernel_var,
            noise_var: self.noise_var,
            init_var: self.init_var,
            n_centers: self.n_centers,
            drift_amplitude: self.drift_amplitude,
            drift_frequency: self.drift_frequency,
            seed: self.seed,
        }
    }
}

/// The replayable configuration echoed into every artifact: everything that
/// shapes the numbers, nothing that does not (thread count and output paths
/// are deliberately absent so reruns compare byte-for-byte).
#[derive(Debug, Clone, Serialize)]
pub struct EffectiveConfig {
    pub mode: String,
    pub method: Method,
    pub seed: u64,
    pub lambda: f64,
    pub gamma: f64,
    pub kernel_var: f64,
    pub window: usize,
    pub order: usize,
    pub snapshot_every: usize,
    pub burn_in: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<GenConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standardize: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp_format: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resample_period: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub average_window: Option<usize>,
}

impl EffectiveConfig {
    pub fn new(mode: impl Into<String>, s: &Settings) -> Self {
        Self {
            mode: mode.into(),
            method: s.method,
            seed: s.seed,
            lambda: s.lambda,
            gamma: s.gamma,
            kernel_var: s.kernel_var,
            window: s.window,
            order: s.order,
            snapshot_every: s.snapshot_every,
            burn_in: s.burn_in,
            generator: None,
            input: None,
            standardize: None,
            timestamp_format: None,
            resample_period: None,
            average_window: None,
        }
    }

    /// Flatten into `key = value` pairs for CSV preambles; nested objects
    /// join their path with dots, floats carry 17 significant digits.
    pub fn preamble_pairs(&self) -> Vec<(String, String)> {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut out = Vec::new();
        flatten_value("", &value, &mut out);
        out
    }
}

fn flatten_value(prefix: &str, value: &serde_json::Value, out: &mut Vec<(String, String)>) {
    match value {
        serde_json::Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten_value(&key, v, out);
            }
        }
        serde_json::Value::Number(n) => {
            let rendered = if let Some(f) = n.as_f64().filter(|_| n.is_f64()) {
                crate::artifacts::fmt_float(f)
            } else {
                n.to_string()
            };
            out.push((prefix.to_string(), rendered));
        }
        serde_json::Value::String(s) => out.push((prefix.to_string(), s.clone())),
        serde_json::Value::Bool(b) => out.push((prefix.to_string(), b.to_string())),
        serde_json::Value::Null => out.push((prefix.to_string(), "null".to_string())),
        serde_json::Value::Array(items) => {
            let rendered: Vec<String> = items
                .iter()
                .map(|v| match v {
                    serde_json::Value::Number(n) if n.is_f64() => {
                        crate::artifacts::fmt_float(n.as_f64().unwrap())
                    }
                    other => other.to_string(),
                })
                .collect();
            out.push((prefix.to_string(), rendered.join(",")));
        }
    }
}
