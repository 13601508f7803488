//! Subcommand implementations: synthetic experiments, dataset generation,
//! estimation on user CSVs, and evaluation of stored artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ndarray::Array3;
use serde::{Deserialize, Serialize};
use serde_json::json;

use nltiso::baselines::{adjacency_from_linear, run_tirso};
use nltiso::estimator::run_online;
use nltiso::ingest::{load_csv, resample_uniform, standardize, CsvOptions};
use nltiso::metrics::{adjacency_from_state, support_metrics, time_averaged_ise, AdjacencyEstimate, SupportMetrics};
use nltiso::series::SeriesMatrix;
use nltiso::synthgen::{gen_stationary, gen_timevarying, EdgeFunction, TrueGraph};

use crate::artifacts::{
    fmt_float, json_string, read_adjacency_csv, read_trace_csv, write_adjacency_csv, write_csv,
    write_json, write_snapshots_csv, write_trace_csv, write_trajectory_csv, RecordingSink,
};
use crate::config::{EffectiveConfig, ExperimentKind, Settings};

/// Ground-truth artifact schema (`truth.json`).
#[derive(Debug, Serialize, Deserialize)]
pub struct TruthFile {
    pub config: EffectiveConfigEcho,
    pub seed: u64,
    pub kind: String,
    pub node_ids: Vec<String>,
    /// `[target][source][lag-1]` weights at generation start.
    pub adjacency: Vec<Vec<Vec<f64>>>,
    pub edge_mask: Vec<Vec<Vec<bool>>>,
    /// Convenience listing of the nonzero entries of `adjacency`.
    pub edges: Vec<EdgeSummary>,
    /// Fixed per-edge nonlinearities (empty for the sine generator).
    pub functions: Vec<EdgeFunction>,
    /// Adjacency at the last generated sample; present only when it drifts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_adjacency: Option<Vec<Vec<Vec<f64>>>>,
}

/// The config echo is written as arbitrary JSON so old artifacts stay
/// readable when fields are added.
pub type EffectiveConfigEcho = serde_json::Value;

#[derive(Debug, Serialize, Deserialize)]
pub struct EdgeSummary {
    pub target: usize,
    pub source: usize,
    pub lag: usize,
    pub weight: f64,
}

fn array3_to_nested(a: &Array3<f64>) -> Vec<Vec<Vec<f64>>> {
    let (n1, n2, n3) = a.dim();
    (0..n1)
        .map(|i| {
            (0..n2)
                .map(|j| (0..n3).map(|k| a[[i, j, k]]).collect())
                .collect()
        })
        .collect()
}

fn mask_to_nested(a: &Array3<bool>) -> Vec<Vec<Vec<bool>>> {
    let (n1, n2, n3) = a.dim();
    (0..n1)
        .map(|i| {
            (0..n2)
                .map(|j| (0..n3).map(|k| a[[i, j, k]]).collect())
                .collect()
        })
        .collect()
}

fn nested_to_array3<T: Copy + Default>(nested: &[Vec<Vec<T>>], what: &str) -> Result<Array3<T>> {
    let n1 = nested.len();
    let n2 = nested.first().map_or(0, Vec::len);
    let n3 = nested.first().and_then(|v| v.first()).map_or(0, Vec::len);
    if n1 == 0 || n2 == 0 || n3 == 0 {
        bail!("{what}: empty tensor");
    }
    let mut out = Array3::default((n1, n2, n3));
    for (i, plane) in nested.iter().enumerate() {
        if plane.len() != n2 {
            bail!("{what}: ragged tensor at index {i}");
        }
        for (j, row) in plane.iter().enumerate() {
            if row.len() != n3 {
                bail!("{what}: ragged tensor at index {i},{j}");
            }
            for (k, &v) in row.iter().enumerate() {
                out[[i, j, k]] = v;
            }
        }
    }
    Ok(out)
}

fn edge_summaries(adjacency: &Array3<f64>, mask: &Array3<bool>) -> Vec<EdgeSummary> {
    mask.indexed_iter()
        .filter(|(_, &m)| m)
        .map(|((target, source, lag0), _)| EdgeSummary {
            target,
            source,
            lag: lag0 + 1,
            weight: adjacency[[target, source, lag0]],
        })
        .collect()
}

/// Write the series CSV with the standard preamble: one row per time step,
/// one column per node.
fn write_series_artifact(
    path: &Path,
    preamble: &[(String, String)],
    series: &SeriesMatrix,
) -> Result<()> {
    let header: Vec<String> = series.node_ids().to_vec();
    let rows = (0..series.n_samples()).map(|t| {
        (0..series.n_nodes())
            .map(|n| fmt_float(series.value(n, t)))
            .collect()
    });
    write_csv(path, preamble, &header, rows)
}

/// Generate the synthetic data for `kind` and write the data + truth
/// artifacts. Returns the series, the stationary truth (when it exists), and
/// the list of files written.
fn generate_artifacts(
    kind: ExperimentKind,
    settings: &Settings,
    out_dir: &Path,
    cfg: &EffectiveConfig,
    preamble: &[(String, String)],
) -> Result<(SeriesMatrix, Option<TrueGraph>, Vec<String>)> {
    let gen_cfg = settings.gen_config();
    let cfg_echo = serde_json::to_value(cfg)?;
    let mut written = Vec::new();
    match kind {
        ExperimentKind::Stationary => {
            let (series, truth) = gen_stationary(&gen_cfg)?;
            write_series_artifact(&out_dir.join("series.csv"), preamble, &series)?;
            written.push("series.csv".into());
            write_adjacency_csv(
                &out_dir.join("true_adjacency.csv"),
                preamble,
                series.node_ids(),
                &truth.adjacency,
            )?;
            written.push("true_adjacency.csv".into());
            let truth_file = TruthFile {
                config: cfg_echo,
                seed: truth.seed,
                kind: kind.as_str().to_string(),
                node_ids: series.node_ids().to_vec(),
                adjacency: array3_to_nested(&truth.adjacency),
                edge_mask: mask_to_nested(&truth.edge_mask),
                edges: edge_summaries(&truth.adjacency, &truth.edge_mask),
                functions: truth.functions.clone(),
                final_adjacency: None,
            };
            write_json(&out_dir.join("truth.json"), &truth_file)?;
            written.push("truth.json".into());
            Ok((series, Some(truth), written))
        }
        ExperimentKind::Timevarying => {
            let (series, trajectory) = gen_timevarying(&gen_cfg)?;
            write_series_artifact(&out_dir.join("series.csv"), preamble, &series)?;
            written.push("series.csv".into());
            let initial = &trajectory.per_step[0];
            let final_adj = trajectory.final_adjacency();
            write_adjacency_csv(
                &out_dir.join("true_adjacency.csv"),
                preamble,
                series.node_ids(),
                final_adj,
            )?;
            written.push("true_adjacency.csv".into());
            write_trajectory_csv(
                &out_dir.join("adjacency_trajectory.csv"),
                preamble,
                &trajectory,
            )?;
            written.push("adjacency_trajectory.csv".into());
            let mask = initial.mapv(|v| v != 0.0);
            let truth_file = TruthFile {
                config: cfg_echo,
                seed: settings.seed,
                kind: kind.as_str().to_string(),
                node_ids: series.node_ids().to_vec(),
                adjacency: array3_to_nested(initial),
                edge_mask: mask_to_nested(&mask),
                edges: edge_summaries(initial, &mask),
                functions: Vec::new(),
                final_adjacency: Some(array3_to_nested(final_adj)),
            };
            write_json(&out_dir.join("truth.json"), &truth_file)?;
            written.push("truth.json".into());
            Ok((series, None, written))
        }
    }
}

/// Support-metrics artifact schema (`support_metrics_<method>.json`).
#[derive(Serialize)]
struct SupportFile<'a> {
    config: &'a serde_json::Value,
    method: &'a str,
    metrics: &'a SupportMetrics,
}

/// Run one estimator over the series and write its artifact set. Returns the
/// per-method summary for `summary.json`.
fn run_one_method(
    name: &str,
    series: &SeriesMatrix,
    settings: &Settings,
    out_dir: &Path,
    cfg_echo: &serde_json::Value,
    preamble: &[(String, String)],
    truth: Option<&TrueGraph>,
) -> Result<serde_json::Value> {
    let h = settings.hyperparams()?;
    let last_t = series.n_samples() - 1;
    let mut sink = RecordingSink::new(
        h.order,
        series.n_nodes(),
        settings.snapshot_every,
        settings.average_window,
    );
    let (trace, adjacency) = match name {
        "nltiso" => {
            let spec = settings.kernel_spec()?;
            let out = run_online(series, &spec, &h, &mut sink)?;
            let adj = adjacency_from_state(&out.states, last_t)?;
            (out.trace, adj)
        }
        "tirso" => {
            let out = run_tirso(series, &h, &mut sink)?;
            let adj = adjacency_from_linear(&out.states, last_t)?;
            (out.trace, adj)
        }
        other => bail!("unknown method {other:?}"),
    };

    let labels = series.node_ids();
    let mut written: Vec<String> = Vec::new();
    let mut write = |file: String| written.push(file);

    let predictions = format!("predictions_{name}.csv");
    write_trace_csv(
        &out_dir.join(&predictions),
        preamble,
        labels,
        &trace,
        trace.predictions(),
    )?;
    write(predictions);

    let ise_file = format!("ise_{name}.csv");
    write_trace_csv(&out_dir.join(&ise_file), preamble, labels, &trace, trace.ise())?;
    write(ise_file);

    let adjacency_file = format!("estimated_adjacency_{name}.csv");
    write_adjacency_csv(&out_dir.join(&adjacency_file), preamble, labels, &adjacency.values)?;
    write(adjacency_file);

    if settings.snapshot_every > 0 {
        let snapshots_file = format!("snapshots_{name}.csv");
        write_snapshots_csv(
            &out_dir.join(&snapshots_file),
            preamble,
            series.n_nodes(),
            h.order,
            &sink.snapshots,
        )?;
        write(snapshots_file);
    }

    let mut averaged_steps = None;
    if let Some(avg) = sink.averaged_adjacency(h.order, last_t) {
        let avg_file = format!("averaged_adjacency_{name}.csv");
        write_adjacency_csv(&out_dir.join(&avg_file), preamble, labels, &avg.values)?;
        write(avg_file);
        averaged_steps = Some(sink.averaged_steps());
    }

    let support = match truth {
        Some(truth_graph) if truth_graph.cross_edge_count() > 0 => {
            let k = settings.top_k.unwrap_or_else(|| truth_graph.cross_edge_count());
            let metrics = support_metrics(&adjacency, truth_graph, k)?;
            let support_file = format!("support_metrics_{name}.json");
            write_json(
                &out_dir.join(&support_file),
                &SupportFile {
                    config: cfg_echo,
                    method: name,
                    metrics: &metrics,
                },
            )?;
            write(support_file);
            Some(metrics)
        }
        _ => None,
    };

    // Summary statistic only: clamp so short runs still report a tail mean.
    let burn_in_used = settings.burn_in.min(trace.steps() - 1);
    let per_node = time_averaged_ise(&trace, burn_in_used)?;
    let mean_ise = per_node.iter().sum::<f64>() / per_node.len() as f64;
    Ok(json!({
        "time_averaged_ise": per_node,
        "mean_ise": mean_ise,
        "burn_in_used": burn_in_used,
        "averaged_steps": averaged_steps,
        "support": support,
        "artifacts": written,
    }))
}

fn write_summary(
    out_dir: &Path,
    cfg_echo: &serde_json::Value,
    node_ids: &[String],
    data_artifacts: Vec<String>,
    methods: BTreeMap<String, serde_json::Value>,
) -> Result<()> {
    write_json(
        &out_dir.join("summary.json"),
        &json!({
            "config": cfg_echo,
            "node_ids": node_ids,
            "data_artifacts": data_artifacts,
            "methods": methods,
        }),
    )
}

/// `experiment <kind>`: generate with published defaults, run the selected
/// estimators, and write the full artifact set.
pub fn cmd_experiment(kind: ExperimentKind, settings: &Settings, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
    let mut cfg = EffectiveConfig::new(format!("experiment {}", kind.as_str()), settings);
    cfg.generator = Some(settings.gen_config());
    let preamble = cfg.preamble_pairs();
    let cfg_echo = serde_json::to_value(&cfg)?;

    let (series, truth, data_artifacts) =
        generate_artifacts(kind, settings, out_dir, &cfg, &preamble)?;
    let mut methods = BTreeMap::new();
    for name in settings.method.selected() {
        let summary = run_one_method(
            name,
            &series,
            settings,
            out_dir,
            &cfg_echo,
            &preamble,
            truth.as_ref(),
        )?;
        methods.insert(name.to_string(), summary);
    }
    write_summary(out_dir, &cfg_echo, series.node_ids(), data_artifacts, methods)
}

/// `generate <kind>`: data and truth artifacts only, no estimation.
pub fn cmd_generate(kind: ExperimentKind, settings: &Settings, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
    let mut cfg = EffectiveConfig::new(format!("generate {}", kind.as_str()), settings);
    cfg.generator = Some(settings.gen_config());
    let preamble = cfg.preamble_pairs();
    let cfg_echo = serde_json::to_value(&cfg)?;

    let (series, _, data_artifacts) = generate_artifacts(kind, settings, out_dir, &cfg, &preamble)?;
    write_summary(out_dir, &cfg_echo, series.node_ids(), data_artifacts, BTreeMap::new())
}

/// `estimate --input <csv>`: ingest (optionally resample and standardize),
/// run the selected estimators, write artifacts.
pub fn cmd_estimate(input: &Path, settings: &Settings, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
    let opts = CsvOptions {
        timestamp: settings.timestamp_format.to_ingest(),
        default_period: 1.0,
    };
    let table = load_csv(input, &opts)?;
    let table = match settings.resample_period {
        Some(period) => resample_uniform(&table, period)?,
        None => table,
    };
    let (series, standardization) = if settings.standardize {
        let s = standardize(&table)?;
        (s.series, Some((s.means, s.scales)))
    } else {
        (table.to_series()?, None)
    };

    let mut cfg = EffectiveConfig::new("estimate", settings);
    cfg.input = Some(input.display().to_string());
    cfg.standardize = Some(settings.standardize);
    cfg.timestamp_format = Some(settings.timestamp_format.as_str().to_string());
    cfg.resample_period = settings.resample_period;
    cfg.average_window = Some(settings.average_window);
    let preamble = cfg.preamble_pairs();
    let cfg_echo = serde_json::to_value(&cfg)?;

    let mut methods = BTreeMap::new();
    for name in settings.method.selected() {
        let summary =
            run_one_method(name, &series, settings, out_dir, &cfg_echo, &preamble, None)?;
        methods.insert(name.to_string(), summary);
    }
    let units: Vec<&str> = table.units.iter().map(|u| u.as_str()).collect();
    let mut summary = json!({
        "config": cfg_echo,
        "node_ids": series.node_ids(),
        "units": units,
        "sample_period": table.period,
        "methods": methods,
    });
    if let Some((means, scales)) = standardization {
        summary["standardization"] = json!({ "means": means, "scales": scales });
    }
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(())
}

pub struct EvaluateRequest {
    pub estimate: PathBuf,
    pub truth: PathBuf,
    pub truth_threshold: f64,
    pub top_k: Option<usize>,
    pub ise: Option<PathBuf>,
    pub burn_in: usize,
    pub out_dir: Option<PathBuf>,
}

/// `evaluate`: score a stored adjacency estimate against ground truth
/// (truth.json or a thresholded adjacency CSV), optionally summarizing a
/// stored ISE trace. Returns the JSON report.
pub fn cmd_evaluate(req: &EvaluateRequest) -> Result<String> {
    let (est_values, _est_labels) = read_adjacency_csv(&req.estimate)?;
    let estimate = AdjacencyEstimate {
        values: est_values,
        timestamp: 0,
    };

    let truth = if req.truth.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(&req.truth)
            .with_context(|| format!("cannot read {}", req.truth.display()))?;
        let file: TruthFile = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse {}", req.truth.display()))?;
        TrueGraph {
            adjacency: nested_to_array3(&file.adjacency, "truth adjacency")?,
            edge_mask: nested_to_array3(&file.edge_mask, "truth edge mask")?,
            functions: file.functions,
            seed: file.seed,
        }
    } else {
        let (values, _) = read_adjacency_csv(&req.truth)?;
        let mask = values.mapv(|v| v.abs() > req.truth_threshold);
        TrueGraph {
            adjacency: values,
            edge_mask: mask,
            functions: Vec::new(),
            seed: 0,
        }
    };

    let k = req.top_k.unwrap_or_else(|| truth.cross_edge_count());
    let support = support_metrics(&estimate, &truth, k)?;

    let ise_summary = match &req.ise {
        Some(path) => {
            let (header, columns) = read_trace_csv(path)?;
            if header.first().map(String::as_str) != Some("t") || columns.len() < 2 {
                bail!("{}: expected a trace artifact with a leading t column", path.display());
            }
            let steps = columns[0].len();
            if req.burn_in >= steps {
                bail!("burn-in {} leaves no records out of {steps}", req.burn_in);
            }
            let tail = (steps - req.burn_in) as f64;
            let per_node: Vec<f64> = columns[1..]
                .iter()
                .map(|col| col.iter().skip(req.burn_in).sum::<f64>() / tail)
                .collect();
            let mean = per_node.iter().sum::<f64>() / per_node.len() as f64;
            Some(json!({
                "burn_in": req.burn_in,
                "per_node": per_node,
                "mean": mean,
                "nodes": header[1..].to_vec(),
            }))
        }
        None => None,
    };

    let report = json!({
        "mode": "evaluate",
        "estimate": req.estimate.display().to_string(),
        "truth": req.truth.display().to_string(),
        "top_k": k,
        "support": support,
        "ise": ise_summary,
    });
    if let Some(dir) = &req.out_dir {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        write_json(&dir.join("evaluation.json"), &report)?;
    }
    json_string(&report)
}
