//! Window-matrix data model for streaming multichannel measurements.
//!
//! A measurement stream is a sequence of sample columns, each holding one
//! synchronized reading of `p` channels. A [`WindowMatrix`] is a block of
//! `n_g` consecutive columns; a [`MatrixFlow`] is an ordered group of `q`
//! such windows that one covariance-equality test treats as `q` populations.
//! [`StreamCursor`] buffers arriving columns and emits complete flows.
//!
//! CSV I/O serializes floats with 17 significant digits, which round-trips
//! every finite `f64` bit-exactly.

use nalgebra::DMatrix;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

/// Errors from window construction, streaming ingestion, and CSV I/O.
#[derive(Debug, Error)]
pub enum FlowError {
    #[error("window must have at least one channel and one sample, got {rows}x{cols}")]
    EmptyWindow { rows: usize, cols: usize },
    #[error("non-finite entry at channel {channel}, sample {sample}")]
    NonFinite { channel: usize, sample: usize },
    #[error("column {index} has {got} entries, expected {expected} channels")]
    ColumnLength {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("a flow needs at least 2 windows, got {got}")]
    TooFewWindows { got: usize },
    #[error(
        "window {index} is {got_rows}x{got_cols}, expected {rows}x{cols} like the first window"
    )]
    WindowShape {
        index: usize,
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("channel count must be at least 1")]
    ZeroChannels,
    #[error("window size {got} is below the minimum 4 required by the four-tuple estimators")]
    WindowTooSmall { got: usize },
    #[error("flow length q={got} is below the minimum 2 (at least two populations)")]
    FlowTooShort { got: usize },
    #[error("columns ({total}) do not split into {q} equal windows")]
    UnevenPartition { total: usize, q: usize },
    #[error("line {line}: expected {expected} fields, got {got}")]
    RaggedRow {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}, field {field}: {token:?} is not a finite number")]
    BadField {
        line: usize,
        field: usize,
        token: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// CSV layout switch: whether file rows are time samples or channels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// Each file row is one time sample; columns are channels (default).
    #[default]
    RowsAreSamples,
    /// Each file row is one channel; columns are time samples.
    ColumnsAreSamples,
}

/// One window-truncated measurement block: `p` channels × `n_g` samples.
///
/// Entries must be finite and the block non-empty. The four-tuple estimators
/// additionally require `n_g ≥ 4`, which is enforced by those operations
/// (and by [`StreamCursor`] for analysis streams), not by this constructor;
/// smaller windows remain constructible for plain covariance computation.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowMatrix {
    data: DMatrix<f64>,
}

impl WindowMatrix {
    /// Wraps a `p × n_g` matrix whose columns are samples.
    ///
    /// # Errors
    /// [`FlowError::EmptyWindow`] if either dimension is zero;
    /// [`FlowError::NonFinite`] naming the first offending entry.
    pub fn new(data: DMatrix<f64>) -> Result<Self, FlowError> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(FlowError::EmptyWindow {
                rows: data.nrows(),
                cols: data.ncols(),
            });
        }
        for j in 0..data.ncols() {
            for i in 0..data.nrows() {
                if !data[(i, j)].is_finite() {
                    return Err(FlowError::NonFinite {
                        channel: i,
                        sample: j,
                    });
                }
            }
        }
        Ok(Self { data })
    }

    /// Builds a window from sample columns, each of length `p`.
    pub fn from_columns(p: usize, columns: &[Vec<f64>]) -> Result<Self, FlowError> {
        if p == 0 {
            return Err(FlowError::ZeroChannels);
        }
        if columns.is_empty() {
            return Err(FlowError::EmptyWindow { rows: p, cols: 0 });
        }
        for (index, col) in columns.iter().enumerate() {
            if col.len() != p {
                return Err(FlowError::ColumnLength {
                    index,
                    expected: p,
                    got: col.len(),
                });
            }
        }
        let data = DMatrix::from_fn(p, columns.len(), |i, j| columns[j][i]);
        Self::new(data)
    }

    /// Channel count `p`.
    pub fn p(&self) -> usize {
        self.data.nrows()
    }

    /// Window size `n_g` (samples per window).
    pub fn n_g(&self) -> usize {
        self.data.ncols()
    }

    /// Underlying `p × n_g` matrix, columns are samples.
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Copy with the per-window sample mean removed from every column.
    ///
    /// The trace estimators are exactly location invariant, so centering
    /// never changes their value in exact arithmetic; it removes the large
    /// common component of raw sensor data before the estimators' cancelling
    /// sums, which is what makes those sums well conditioned.
    pub fn centered(&self) -> WindowMatrix {
        WindowMatrix {
            data: centered_matrix(&self.data),
        }
    }
}

/// Subtracts the row means (per-channel means across samples) of `m`.
pub(crate) fn centered_matrix(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.ncols() as f64;
    let mut out = m.clone();
    for i in 0..m.nrows() {
        let mean = m.row(i).sum() / n;
        for j in 0..m.ncols() {
            out[(i, j)] -= mean;
        }
    }
    out
}

/// An ordered sequence of `q ≥ 2` windows sharing one shape, analyzed as
/// `q` populations by the covariance-equality test.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixFlow {
    windows: Vec<WindowMatrix>,
}

impl MatrixFlow {
    /// Validates window count and shape uniformity.
    ///
    /// # Errors
    /// [`FlowError::TooFewWindows`] for fewer than two windows;
    /// [`FlowError::WindowShape`] naming the first mismatched window.
    pub fn new(windows: Vec<WindowMatrix>) -> Result<Self, FlowError> {
        if windows.len() < 2 {
            return Err(FlowError::TooFewWindows { got: windows.len() });
        }
        let (rows, cols) = (windows[0].p(), windows[0].n_g());
        for (index, w) in windows.iter().enumerate().skip(1) {
            if w.p() != rows || w.n_g() != cols {
                return Err(FlowError::WindowShape {
                    index,
                    rows,
                    cols,
                    got_rows: w.p(),
                    got_cols: w.n_g(),
                });
            }
        }
        Ok(Self { windows })
    }

    /// Partitions a `p × (q·n_g)` matrix into `q` consecutive windows.
    pub fn from_concatenated(data: &DMatrix<f64>, q: usize) -> Result<Self, FlowError> {
        if q < 2 {
            return Err(FlowError::FlowTooShort { got: q });
        }
        if data.ncols() == 0 || data.ncols() % q != 0 {
            return Err(FlowError::UnevenPartition {
                total: data.ncols(),
                q,
            });
        }
        let n_g = data.ncols() / q;
        let windows = (0..q)
            .map(|g| WindowMatrix::new(data.columns(g * n_g, n_g).into_owned()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(windows)
    }

    /// Number of windows `q`.
    pub fn q(&self) -> usize {
        self.windows.len()
    }

    /// Channel count `p`.
    pub fn p(&self) -> usize {
        self.windows[0].p()
    }

    /// Samples per window `n_g`.
    pub fn n_g(&self) -> usize {
        self.windows[0].n_g()
    }

    /// All windows in order.
    pub fn windows(&self) -> &[WindowMatrix] {
        &self.windows
    }

    /// Window `g` (0-based).
    pub fn window(&self, g: usize) -> &WindowMatrix {
        &self.windows[g]
    }

    /// Concatenates the windows back into one `p × (q·n_g)` matrix.
    pub fn concatenated(&self) -> DMatrix<f64> {
        let p = self.p();
        let n_g = self.n_g();
        let mut out = DMatrix::zeros(p, self.q() * n_g);
        for (g, w) in self.windows.iter().enumerate() {
            out.columns_mut(g * n_g, n_g).copy_from(w.data());
        }
        out
    }
}

/// Buffers arriving sample columns and emits complete flows.
///
/// Single-writer: one cursor owns one stream. Emitted flows are immutable
/// snapshots, safe to hand to concurrent consumers. Fewer than `q·n_g`
/// columns are buffered between emissions at all times.
#[derive(Clone, Debug)]
pub struct StreamCursor {
    p: usize,
    n_g: usize,
    q: usize,
    /// Column-major buffer of fewer than q·n_g pending columns.
    buffer: Vec<f64>,
    completed: u64,
}

impl StreamCursor {
    /// Creates a cursor for flows of `q ≥ 2` windows of `n_g ≥ 4` samples.
    pub fn new(p: usize, n_g: usize, q: usize) -> Result<Self, FlowError> {
        if p == 0 {
            return Err(FlowError::ZeroChannels);
        }
        if n_g < 4 {
            return Err(FlowError::WindowTooSmall { got: n_g });
        }
        if q < 2 {
            return Err(FlowError::FlowTooShort { got: q });
        }
        Ok(Self {
            p,
            n_g,
            q,
            buffer: Vec::new(),
            completed: 0,
        })
    }

    /// Appends sample columns in arrival order and returns every flow
    /// completed by this batch; leftover columns stay buffered.
    ///
    /// # Errors
    /// [`FlowError::ColumnLength`] or [`FlowError::NonFinite`] reject the
    /// whole batch before any column is consumed.
    pub fn ingest_samples(&mut self, columns: &[Vec<f64>]) -> Result<Vec<MatrixFlow>, FlowError> {
        for (index, col) in columns.iter().enumerate() {
            if col.len() != self.p {
                return Err(FlowError::ColumnLength {
                    index,
                    expected: self.p,
                    got: col.len(),
                });
            }
            if let Some(channel) = col.iter().position(|x| !x.is_finite()) {
                return Err(FlowError::NonFinite {
                    channel,
                    sample: index,
                });
            }
        }
        for col in columns {
            self.buffer.extend_from_slice(col);
        }
        let flow_cols = self.q * self.n_g;
        let mut flows = Vec::new();
        while self.buffer.len() >= flow_cols * self.p {
            let rest = self.buffer.split_off(flow_cols * self.p);
            let data = DMatrix::from_column_slice(self.p, flow_cols, &self.buffer);
            self.buffer = rest;
            flows.push(MatrixFlow::from_concatenated(&data, self.q)?);
            self.completed += 1;
        }
        Ok(flows)
    }

    /// Columns currently buffered (always less than `q·n_g`).
    pub fn buffered_columns(&self) -> usize {
        self.buffer.len() / self.p
    }

    /// Total flows emitted so far.
    pub fn completed_flows(&self) -> u64 {
        self.completed
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_g(&self) -> usize {
        self.n_g
    }

    pub fn q(&self) -> usize {
        self.q
    }
}

fn io_err(path: &Path, source: std::io::Error) -> FlowError {
    FlowError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads a numeric CSV into a `p × m` matrix (channels × samples).
///
/// With [`Orientation::RowsAreSamples`] each file row is one sample, so the
/// returned channel count is the field count per row. `skip_header` drops
/// the first line. An empty file yields a `0 × 0` matrix.
///
/// # Errors
/// [`FlowError::RaggedRow`] and [`FlowError::BadField`] name the offending
/// 1-based line (non-finite tokens such as `NaN` are rejected as bad fields).
pub fn read_matrix_csv(
    path: &Path,
    orientation: Orientation,
    skip_header: bool,
) -> Result<DMatrix<f64>, FlowError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let lineno = idx + 1;
        if skip_header && idx == 0 {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = Vec::new();
        for (fidx, token) in line.split(',').enumerate() {
            let token = token.trim();
            let value: f64 = token.parse().map_err(|_| FlowError::BadField {
                line: lineno,
                field: fidx + 1,
                token: token.to_string(),
            })?;
            if !value.is_finite() {
                return Err(FlowError::BadField {
                    line: lineno,
                    field: fidx + 1,
                    token: token.to_string(),
                });
            }
            fields.push(value);
        }
        if rows.is_empty() {
            width = fields.len();
        } else if fields.len() != width {
            return Err(FlowError::RaggedRow {
                line: lineno,
                expected: width,
                got: fields.len(),
            });
        }
        rows.push(fields);
    }
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, 0));
    }
    let m = match orientation {
        // File rows are samples: transpose into channels × samples.
        Orientation::RowsAreSamples => DMatrix::from_fn(width, rows.len(), |i, j| rows[j][i]),
        Orientation::ColumnsAreSamples => DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]),
    };
    Ok(m)
}

/// Writes a `p × m` matrix (channels × samples) as numeric CSV.
///
/// Floats are printed with 17 significant digits, so a read-back under the
/// same orientation reproduces every entry bit-exactly.
pub fn write_matrix_csv(
    path: &Path,
    data: &DMatrix<f64>,
    orientation: Orientation,
) -> Result<(), FlowError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(file);
    let (outer, inner, by_sample) = match orientation {
        Orientation::RowsAreSamples => (data.ncols(), data.nrows(), true),
        Orientation::ColumnsAreSamples => (data.nrows(), data.ncols(), false),
    };
    let mut line = String::new();
    for o in 0..outer {
        line.clear();
        for i in 0..inner {
            if i > 0 {
                line.push(',');
            }
            let v = if by_sample { data[(i, o)] } else { data[(o, i)] };
            line.push_str(&format!("{v:.16e}"));
        }
        line.push('\n');
        out.write_all(line.as_bytes()).map_err(|e| io_err(path, e))?;
    }
    out.flush().map_err(|e| io_err(path, e))
}

/// Loads a CSV stream and partitions it into complete flows.
///
/// Equivalent to feeding the file's sample columns through a
/// [`StreamCursor`]; trailing columns that do not fill a flow are dropped.
/// An empty file yields an empty sequence.
///
/// # Errors
/// Parse and dimension failures name the offending line; a channel-count
/// mismatch against `p` is a [`FlowError::ColumnLength`] error.
pub fn load_csv(
    path: &Path,
    p: usize,
    n_g: usize,
    q: usize,
    orientation: Orientation,
    skip_header: bool,
) -> Result<Vec<MatrixFlow>, FlowError> {
    let data = read_matrix_csv(path, orientation, skip_header)?;
    if data.ncols() == 0 {
        // Validate the requested geometry even for an empty stream.
        StreamCursor::new(p, n_g, q)?;
        return Ok(Vec::new());
    }
    if data.nrows() != p {
        return Err(FlowError::ColumnLength {
            index: 0,
            expected: p,
            got: data.nrows(),
        });
    }
    let mut cursor = StreamCursor::new(p, n_g, q)?;
    let columns: Vec<Vec<f64>> = (0..data.ncols())
        .map(|j| data.column(j).iter().copied().collect())
        .collect();
    cursor.ingest_samples(&columns)
}

/// Writes a flow's concatenated columns as CSV; [`load_csv`] with the same
/// geometry and orientation reproduces the flow exactly.
pub fn save_csv(path: &Path, flow: &MatrixFlow, orientation: Orientation) -> Result<(), FlowError> {
    write_matrix_csv(path, &flow.concatenated(), orientation)
}
