//! Artifact encoding: CSV and JSON writers with 17-significant-digit floats
//! (so every emitted number reloads to the exact same f64), a config
//! preamble on each CSV, and the matching readers used by `evaluate`.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use ndarray::Array3;
use serde::Serialize;

use nltiso::estimator::{StepRecord, Trace, TrajectorySink};
use nltiso::metrics::AdjacencyEstimate;
use nltiso::synthgen::AdjacencyTrajectory;

/// 17 significant digits: the shortest fixed width that round-trips every
/// finite f64 exactly.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// serde_json formatter that emits floats via [`fmt_float`]; everything else
/// keeps the default compact encoding.
struct SigDigitFormatter;

impl serde_json::ser::Formatter for SigDigitFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        writer.write_all(fmt_float(value).as_bytes())
    }
}

/// Serialize `value` as compact JSON with full-precision floats.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    );
    let mut ser = serde_json::Serializer::with_formatter(file, SigDigitFormatter);
    value
        .serialize(&mut ser)
        .with_context(|| format!("cannot serialize {}", path.display()))?;
    let mut file = ser.into_inner();
    file.write_all(b"\n")?;
    file.flush()?;
    Ok(())
}

/// Same encoding as [`write_json`], returned as a string (stdout reports).
pub fn json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigitFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf)?)
}

/// Write a CSV artifact: `# key = value` preamble, then a header row, then
/// data rows.
pub fn write_csv(
    path: &Path,
    preamble: &[(String, String)],
    header: &[String],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut out = BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    );
    for (key, value) in preamble {
        writeln!(out, "# {key} = {value}")?;
    }
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Per-step per-node trace (predictions or squared errors): one row per time
/// index, one column per node.
pub fn write_trace_csv(
    path: &Path,
    preamble: &[(String, String)],
    labels: &[String],
    trace: &Trace,
    values: &ndarray::Array2<f64>,
) -> Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend_from_slice(labels);
    let rows = (0..trace.steps()).map(|i| {
        let mut row = Vec::with_capacity(labels.len() + 1);
        row.push((trace.start() + i).to_string());
        for node in 0..values.nrows() {
            row.push(fmt_float(values[[node, i]]));
        }
        row
    });
    write_csv(path, preamble, &header, rows)
}

/// Adjacency tensor as P stacked N x N blocks: row `(lag-1)*N + target`,
/// column `source`. The default 5-node order-2 experiment emits a 10 x 5
/// grid.
pub fn write_adjacency_csv(
    path: &Path,
    preamble: &[(String, String)],
    labels: &[String],
    values: &Array3<f64>,
) -> Result<()> {
    let (n, _, order) = values.dim();
    let rows = (0..order * n).map(|r| {
        let (lag, target) = (r / n + 1, r % n);
        (0..n)
            .map(|source| fmt_float(values[[target, source, lag - 1]]))
            .collect()
    });
    write_csv(path, preamble, &labels.to_vec(), rows)
}

/// Read an adjacency artifact back: N from the header, P from the row count.
pub fn read_adjacency_csv(path: &Path) -> Result<(Array3<f64>, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let labels: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let n = labels.len();
    if n == 0 {
        bail!("{}: no columns", path.display());
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != n {
            bail!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                rows.len() + 1,
                record.len(),
                n
            );
        }
        let row: Vec<f64> = record
            .iter()
            .map(|cell| {
                cell.parse::<f64>()
                    .with_context(|| format!("{}: bad value {cell:?}", path.display()))
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    if rows.is_empty() || rows.len() % n != 0 {
        bail!(
            "{}: {} data rows do not stack into whole {n}-row blocks",
            path.display(),
            rows.len()
        );
    }
    let order = rows.len() / n;
    let mut values = Array3::zeros((n, n, order));
    for (r, row) in rows.iter().enumerate() {
        let (lag, target) = (r / n + 1, r % n);
        for (source, &v) in row.iter().enumerate() {
            values[[target, source, lag - 1]] = v;
        }
    }
    Ok((values, labels))
}

/// Numeric trace artifact reader: returns (header, columns).
pub fn read_trace_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for record in reader.records() {
        let record = record?;
        if record.len() != header.len() {
            bail!("{}: ragged row", path.display());
        }
        for (j, cell) in record.iter().enumerate() {
            columns[j].push(
                cell.parse::<f64>()
                    .with_context(|| format!("{}: bad value {cell:?}", path.display()))?,
            );
        }
    }
    Ok((header, columns))
}

/// Group-norm snapshots in long format: t, target, source, lag, weight.
pub fn write_snapshots_csv(
    path: &Path,
    preamble: &[(String, String)],
    n_nodes: usize,
    order: usize,
    snapshots: &[(usize, usize, Vec<f64>)],
) -> Result<()> {
    let header: Vec<String> = ["t", "target", "source", "lag", "weight"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = snapshots.iter().flat_map(|(t, target, norms)| {
        norms.iter().enumerate().map(move |(g, &w)| {
            let (lag, source) = (g / n_nodes + 1, g % n_nodes);
            debug_assert!(lag <= order);
            vec![
                t.to_string(),
                target.to_string(),
                source.to_string(),
                lag.to_string(),
                fmt_float(w),
            ]
        })
    });
    write_csv(path, preamble, &header, rows)
}

/// Full drifting-adjacency history, wide format: one row per time step, one
/// column per (target, source, lag) entry.
pub fn write_trajectory_csv(
    path: &Path,
    preamble: &[(String, String)],
    trajectory: &AdjacencyTrajectory,
) -> Result<()> {
    let first = trajectory
        .per_step
        .first()
        .context("trajectory has no steps")?;
    let (n, _, order) = first.dim();
    let mut header = vec!["t".to_string()];
    for target in 0..n {
        for source in 0..n {
            for lag in 1..=order {
                header.push(format!("w{target}_{source}_l{lag}"));
            }
        }
    }
    let rows = trajectory.per_step.iter().enumerate().map(|(t, a)| {
        let mut row = Vec::with_capacity(header.len());
        row.push(t.to_string());
        for target in 0..n {
            for source in 0..n {
                for lag in 0..order {
                    row.push(fmt_float(a[[target, source, lag]]));
                }
            }
        }
        row
    });
    write_csv(path, preamble, &header, rows)
}

/// Trajectory sink that retains group-norm snapshots at a fixed cadence for
/// the snapshot artifact, and (optionally) every step's norms over a
/// trailing window for the averaged-adjacency artifact.
pub struct RecordingSink {
    start: usize,
    n_nodes: usize,
    csv_cadence: usize,
    avg_window: usize,
    /// (t, target, lag-major group norms), at `csv_cadence` spacing.
    pub snapshots: Vec<(usize, usize, Vec<f64>)>,
    ring: VecDeque<Vec<Vec<f64>>>,
    current: Vec<Vec<f64>>,
}

impl RecordingSink {
    /// `start` is the first recorded time index (the lag order).
    pub fn new(start: usize, n_nodes: usize, csv_cadence: usize, avg_window: usize) -> Self {
        Self {
            start,
            n_nodes,
            csv_cadence,
            avg_window,
            snapshots: Vec::new(),
            ring: VecDeque::new(),
            current: Vec::with_capacity(n_nodes),
        }
    }

    /// Mean group norms over the trailing window, as an adjacency tensor
    /// stamped with the last recorded time. None when averaging is off or
    /// nothing was recorded.
    pub fn averaged_adjacency(&self, order: usize, last_t: usize) -> Option<AdjacencyEstimate> {
        if self.avg_window == 0 || self.ring.is_empty() {
            return None;
        }
        let n = self.n_nodes;
        let mut values = Array3::zeros((n, n, order));
        for step in &self.ring {
            for (target, norms) in step.iter().enumerate() {
                for (g, &w) in norms.iter().enumerate() {
                    let (lag, source) = (g / n, g % n);
                    values[[target, source, lag]] += w;
                }
            }
        }
        values /= self.ring.len() as f64;
        Some(AdjacencyEstimate {
            values,
            timestamp: last_t,
        })
    }

    /// Number of steps actually averaged (at most the trailing window).
    pub fn averaged_steps(&self) -> usize {
        self.ring.len()
    }
}

impl TrajectorySink for RecordingSink {
    fn snapshot_cadence(&self) -> usize {
        if self.avg_window > 0 {
            1
        } else {
            self.csv_cadence
        }
    }

    fn record(&mut self, rec: StepRecord) {
        let Some(norms) = rec.group_norms else {
            return;
        };
        if self.csv_cadence > 0 && (rec.t - self.start) % self.csv_cadence == 0 {
            self.snapshots.push((rec.t, rec.node, norms.clone()));
        }
        if self.avg_window > 0 {
            self.current.push(norms);
            if self.current.len() == self.n_nodes {
                self.ring.push_back(std::mem::take(&mut self.current));
                if self.ring.len() > self.avg_window {
                    self.ring.pop_front();
                }
            }
        }
    }
}
