//! CSV ingest for recorded sensor tables: parsing with positional error
//! reporting, per-column standardization, and linear-interpolation
//! resampling onto a uniform grid.

use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::series::SeriesMatrix;

/// Physical quantity encoded by the first character of a column label:
/// `T` temperature, `P` pressure, `L` level; anything else is unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitTag {
    Temperature,
    Pressure,
    Level,
    Unknown,
}

impl UnitTag {
    pub fn from_label(label: &str) -> Self {
        match label.chars().next().map(|c| c.to_ascii_uppercase()) {
            Some('T') => UnitTag::Temperature,
            Some('P') => UnitTag::Pressure,
            Some('L') => UnitTag::Level,
            _ => UnitTag::Unknown,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            UnitTag::Temperature => "temperature",
            UnitTag::Pressure => "pressure",
            UnitTag::Level => "level",
            UnitTag::Unknown => "unknown",
        }
    }
}

/// How the leading timestamp column of an input file is encoded, if at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimestampFormat {
    /// No timestamp column: every column is data, rows are uniformly spaced.
    #[default]
    None,
    /// First column is seconds (fractional allowed) since an arbitrary epoch.
    EpochSeconds,
    /// First column is an ISO-8601 datetime, with or without a zone suffix.
    Iso8601,
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub timestamp: TimestampFormat,
    /// Sample period assumed when no timestamp column is present, or when
    /// one is present but too short to infer spacing from.
    pub default_period: f64,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            timestamp: TimestampFormat::None,
            default_period: 1.0,
        }
    }
}

/// A parsed delimited table: column-major finite data plus labels, unit
/// tags, optional timestamps, and the (inferred or assumed) sample period.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub labels: Vec<String>,
    pub units: Vec<UnitTag>,
    /// Median timestamp spacing when timestamps were parsed, otherwise the
    /// configured default. Always finite and positive.
    pub period: f64,
    pub timestamps: Option<Vec<f64>>,
    /// `columns[j][i]` is row i of column j; all columns share one length.
    pub columns: Vec<Vec<f64>>,
}

impl RawTable {
    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    /// Reinterpret columns as nodes: node n's samples are column n's rows.
    pub fn to_series(&self) -> Result<SeriesMatrix> {
        let (n, len) = (self.n_columns(), self.n_rows());
        let mut values = Array2::zeros((n, len));
        for (j, col) in self.columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                values[[j, i]] = v;
            }
        }
        SeriesMatrix::new(values, self.labels.clone())
    }
}

/// Parse a headered CSV file. The header row supplies column labels (and
/// unit tags via their first character); when `opts.timestamp` is not
/// `None`, the first column holds timestamps in the stated encoding. Lines
/// starting with `#` are skipped, so files may carry a comment preamble.
/// Any cell that fails to parse, or parses to a non-finite value, is
/// reported with its line number and column label.
pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<RawTable> {
    if !(opts.default_period.is_finite() && opts.default_period > 0.0) {
        return Err(Error::InvalidParameter {
            name: "default_period",
            message: format!("must be finite and > 0, got {}", opts.default_period),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let has_timestamp = opts.timestamp != TimestampFormat::None;
    let first_data = usize::from(has_timestamp);
    if headers.len() <= first_data {
        return Err(Error::InvalidData(format!(
            "{} has no data columns",
            path.display()
        )));
    }
    let time_label = has_timestamp.then(|| headers[0].to_string());
    let labels: Vec<String> = headers.iter().skip(first_data).map(str::to_string).collect();
    let units: Vec<UnitTag> = labels.iter().map(|l| UnitTag::from_label(l)).collect();

    let mut timestamps: Vec<f64> = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); labels.len()];
    for record in reader.records() {
        let record = record?; // ragged rows surface here with their position
        let line = record.position().map_or(0, |p| p.line());
        if has_timestamp {
            let cell = &record[0];
            let t = parse_timestamp(cell, opts.timestamp).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line,
                column: time_label.clone().unwrap(),
                message: format!("invalid timestamp {cell:?}"),
            })?;
            timestamps.push(t);
        }
        for (j, cell) in record.iter().skip(first_data).enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                column: labels[j].clone(),
                message: format!("invalid numeric value {cell:?}"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    column: labels[j].clone(),
                    message: format!("non-finite value {cell:?}"),
                });
            }
            columns[j].push(value);
        }
    }
    if columns[0].is_empty() {
        return Err(Error::InvalidData(format!(
            "{} has a header but no data rows",
            path.display()
        )));
    }

    let period = if has_timestamp {
        infer_period(&timestamps).unwrap_or(opts.default_period)
    } else {
        opts.default_period
    };
    Ok(RawTable {
        labels,
        units,
        period,
        timestamps: has_timestamp.then_some(timestamps),
        columns,
    })
}

fn parse_timestamp(cell: &str, format: TimestampFormat) -> Option<f64> {
    match format {
        TimestampFormat::None => None,
        TimestampFormat::EpochSeconds => cell.parse::<f64>().ok().filter(|t| t.is_finite()),
        TimestampFormat::Iso8601 => parse_iso8601(cell),
    }
}

/// Accepts RFC 3339 (zone-suffixed) datetimes and the two common naive
/// layouts `YYYY-MM-DDTHH:MM:SS[.frac]` / `YYYY-MM-DD HH:MM:SS[.frac]`,
/// the latter interpreted as UTC. Returns epoch seconds.
fn parse_iso8601(cell: &str) -> Option<f64> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(cell) {
        return Some(dt.timestamp_micros() as f64 / 1e6);
    }
    for layout in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(cell, layout) {
            return Some(naive.and_utc().timestamp_micros() as f64 / 1e6);
        }
    }
    None
}

/// Median positive spacing, or None when fewer than two timestamps exist or
/// the median spacing is not usable as a period.
fn infer_period(timestamps: &[f64]) -> Option<f64> {
    if timestamps.len() < 2 {
        return None;
    }
    let mut diffs: Vec<f64> = timestamps.windows(2).map(|w| w[1] - w[0]).collect();
    diffs.sort_by(|a, b| a.partial_cmp(b).expect("timestamps are finite"));
    let mid = diffs.len() / 2;
    let median = if diffs.len() % 2 == 1 {
        diffs[mid]
    } else {
        0.5 * (diffs[mid - 1] + diffs[mid])
    };
    (median.is_finite() && median > 0.0).then_some(median)
}

/// A per-column affine normalization of a table, together with what is
/// needed to undo it: `original = standardized * scale + mean`.
#[derive(Debug, Clone)]
pub struct Standardized {
    /// Standardized data as a series matrix (nodes = table columns).
    pub series: SeriesMatrix,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardized {
    /// Map one standardized value back to the original column units.
    pub fn restore_value(&self, node: usize, x: f64) -> f64 {
        x * self.scales[node] + self.means[node]
    }
}

/// Shift each column to zero mean and scale it to unit sample variance
/// (the unbiased estimator, dividing by L - 1). A constant column cannot be
/// scaled and is reported as degenerate by label.
pub fn standardize(table: &RawTable) -> Result<Standardized> {
    let len = table.n_rows();
    if len < 2 {
        return Err(Error::Range(format!(
            "standardization needs at least 2 rows, got {len}"
        )));
    }
    let n = table.n_columns();
    let mut values = Array2::zeros((n, len));
    let mut means = Vec::with_capacity(n);
    let mut scales = Vec::with_capacity(n);
    for (j, col) in table.columns.iter().enumerate() {
        let mean = col.iter().sum::<f64>() / len as f64;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (len - 1) as f64;
        let constant = col.iter().all(|&x| x == col[0]);
        if constant || var == 0.0 {
            return Err(Error::DegenerateColumn {
                label: table.labels[j].clone(),
            });
        }
        let scale = var.sqrt();
        for (i, &x) in col.iter().enumerate() {
            values[[j, i]] = (x - mean) / scale;
        }
        means.push(mean);
        scales.push(scale);
    }
    Ok(Standardized {
        series: SeriesMatrix::new(values, table.labels.clone())?,
        means,
        scales,
    })
}

/// Linearly interpolate every column onto the uniform grid
/// `t0, t0 + period, ...` spanning the recorded timestamps (inclusive of the
/// endpoint when the span is a whole number of periods). Grid points that
/// coincide with recorded timestamps reproduce the recorded values exactly,
/// so a table already uniform at `period` passes through unchanged.
pub fn resample_uniform(table: &RawTable, period: f64) -> Result<RawTable> {
    let ts = table
        .timestamps
        .as_ref()
        .ok_or_else(|| Error::Range("resampling requires a timestamp column".into()))?;
    if !(period.is_finite() && period > 0.0) {
        return Err(Error::InvalidParameter {
            name: "period",
            message: format!("must be finite and > 0, got {period}"),
        });
    }
    if ts.len() < 2 {
        return Err(Error::Range(format!(
            "resampling needs at least 2 timestamps, got {}",
            ts.len()
        )));
    }
    for (i, w) in ts.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(Error::InvalidData(format!(
                "timestamps must be strictly increasing: row {} has {} after {}",
                i + 1,
                w[1],
                w[0]
            )));
        }
    }
    let t0 = ts[0];
    let t_end = *ts.last().unwrap();
    // Tolerate one part in 1e9 of rounding when the span is a whole number
    // of periods, so the endpoint lands on the grid.
    let count = ((t_end - t0) / period * (1.0 + 1e-9)).floor() as usize + 1;
    let grid: Vec<f64> = (0..count).map(|k| t0 + k as f64 * period).collect();

    let mut columns = Vec::with_capacity(table.columns.len());
    for col in &table.columns {
        let mut out = Vec::with_capacity(grid.len());
        let mut j = 0usize;
        for &g in &grid {
            if g >= t_end {
                out.push(*col.last().unwrap());
                continue;
            }
            while ts[j + 1] < g {
                j += 1;
            }
            let (ta, tb) = (ts[j], ts[j + 1]);
            let (va, vb) = (col[j], col[j + 1]);
            out.push(va + (g - ta) / (tb - ta) * (vb - va));
        }
        columns.push(out);
    }
    Ok(RawTable {
        labels: table.labels.clone(),
        units: table.units.clone(),
        period,
        timestamps: Some(grid),
        columns,
    })
}

/// Write a series as headered CSV, one row per time step, one column per
/// node, with floats carrying 17 significant digits so a reload is exact.
pub fn write_series_csv(path: &Path, series: &SeriesMatrix) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(series.node_ids())?;
    for t in 0..series.n_samples() {
        let row: Vec<String> = (0..series.n_nodes())
            .map(|n| format!("{:.16e}", series.value(n, t)))
            .collect();
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}
