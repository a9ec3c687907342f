//! Dataset ingestion, min-max normalization, synthetic generators and result
//! files.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// An `n x d` sample matrix stored row-major, with optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Vec<f64>,
    n: usize,
    d: usize,
    pub labels: Option<Vec<usize>>,
}

impl DataMatrix {
    pub fn new(values: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        if values.len() != n * d {
            return Err(Error::DimensionMismatch(format!(
                "{} values cannot form a {n}x{d} matrix",
                values.len()
            )));
        }
        Ok(DataMatrix {
            values,
            n,
            d,
            labels: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} columns, expected {d}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::new(values, rows.len(), d)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} samples",
                labels.len(),
                self.n
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        self.values.chunks_exact(self.d.max(1)).take(self.n)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// New matrix holding the given rows (labels carried along).
    pub fn select_rows(&self, indices: &[usize]) -> DataMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        DataMatrix {
            values,
            n: indices.len(),
            d: self.d,
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }
}

/// Squared Euclidean distance.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Min-max scale every column into `[0, 1]`. Constant columns become zero.
pub fn normalize(raw: &DataMatrix) -> Result<DataMatrix> {
    let (n, d) = (raw.n, raw.d);
    for (idx, v) in raw.values.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFiniteInput {
                row: idx / d,
                col: idx % d,
            });
        }
    }
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for row in raw.rows() {
        for j in 0..d {
            lo[j] = lo[j].min(row[j]);
            hi[j] = hi[j].max(row[j]);
        }
    }
    let mut values = Vec::with_capacity(n * d);
    for row in raw.rows() {
        for j in 0..d {
            let span = hi[j] - lo[j];
            values.push(if span > 0.0 {
                // min maps to 0 and max to 1 exactly; clamp guards the ulp
                // overshoot the division can produce in between.
                ((row[j] - lo[j]) / span).clamp(0.0, 1.0)
            } else {
                0.0
            });
        }
    }
    Ok(DataMatrix {
        values,
        n,
        d,
        labels: raw.labels.clone(),
    })
}

/// Read a comma-separated file. Cells are whitespace-trimmed. The optional
/// label column is excluded from the features; labels that are all
/// non-negative integers are kept verbatim, anything else is coded by order
/// of first appearance.
pub fn load_csv(
    path: impl AsRef<Path>,
    has_header: bool,
    label_column: Option<usize>,
) -> Result<DataMatrix> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    let mut width = None;
    let mut n = 0;
    let row_offset = usize::from(has_header);
    for (r, record) in reader.records().enumerate() {
        let row = r + row_offset;
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row,
            col: 0,
            message: e.to_string(),
        })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::DimensionMismatch(format!(
                    "{}: row {row} has {} cells, expected {w}",
                    path.display(),
                    record.len()
                )))
            }
            _ => {}
        }
        if let Some(lc) = label_column {
            if lc >= record.len() {
                return Err(Error::DimensionMismatch(format!(
                    "label column {lc} out of range for {} cells",
                    record.len()
                )));
            }
        }
        for (col, cell) in record.iter().enumerate() {
            if Some(col) == label_column {
                raw_labels.push(cell.to_string());
                continue;
            }
            let v = f64::from_str(cell)
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    row,
                    col,
                    message: format!("{cell:?} is not a finite number"),
                })?;
            values.push(v);
        }
        n += 1;
    }
    let width = width.unwrap_or(0);
    let d = width - usize::from(label_column.is_some());
    let data = DataMatrix::new(values, n, d)?;
    match label_column {
        Some(_) => data.with_labels(code_labels(&raw_labels)),
        None => Ok(data),
    }
}

fn code_labels(raw: &[String]) -> Vec<usize> {
    let numeric: Option<Vec<usize>> = raw.iter().map(|s| s.parse().ok()).collect();
    if let Some(v) = numeric {
        return v;
    }
    let mut codes = HashMap::new();
    raw.iter()
        .map(|s| {
            let next = codes.len();
            *codes.entry(s.as_str()).or_insert(next)
        })
        .collect()
}

/// Write a matrix (and its labels, as a trailing column) as CSV with a header.
pub fn write_csv(data: &DataMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let mut header: Vec<String> = (0..data.d).map(|j| format!("x{j}")).collect();
    if data.labels.is_some() {
        header.push("label".into());
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..data.n {
        let mut cells: Vec<String> = data.row(i).iter().map(|v| format!("{v}")).collect();
        if let Some(l) = &data.labels {
            cells.push(l[i].to_string());
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Spirals,
    NestedCircles,
    Moons,
    Blobs,
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spirals" => Ok(GeneratorKind::Spirals),
            "nested_circles" | "circles" => Ok(GeneratorKind::NestedCircles),
            "moons" => Ok(GeneratorKind::Moons),
            "blobs" => Ok(GeneratorKind::Blobs),
            other => Err(Error::InvalidSpec(format!("unknown generator {other:?}"))),
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeneratorKind::Spirals => "spirals",
            GeneratorKind::NestedCircles => "nested_circles",
            GeneratorKind::Moons => "moons",
            GeneratorKind::Blobs => "blobs",
        })
    }
}

/// Reproducible synthetic dataset description, written `kind:n:k:noise:seed`
/// on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n: usize,
    pub num_clusters: usize,
    pub noise: f64,
    pub seed: u64,
}

impl FromStr for GeneratorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        if parts.len() != 5 {
            return Err(Error::InvalidSpec(format!(
                "{s:?}: expected kind:n:k:noise:seed"
            )));
        }
        let bad = |what: &str| Error::InvalidSpec(format!("{s:?}: bad {what}"));
        Ok(GeneratorSpec {
            kind: parts[0].parse()?,
            n: parts[1].parse().map_err(|_| bad("sample count"))?,
            num_clusters: parts[2].parse().map_err(|_| bad("cluster count"))?,
            noise: parts[3].parse().map_err(|_| bad("noise"))?,
            seed: parts[4].parse().map_err(|_| bad("seed"))?,
        })
    }
}

impl fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}:{}:{}",
            self.kind, self.n, self.num_clusters, self.noise, self.seed
        )
    }
}

/// Generate a labelled dataset. The output is a pure function of `spec`:
/// randomness comes only from a ChaCha8 stream seeded with `spec.seed`.
///
/// Shapes (before noise):
/// - `spirals`: Archimedean arms `r ∝ θ` for `θ ∈ [π/4, 2π]`, arm `c` rotated
///   by `2πc/k`, sampled uniformly in `θ`, scaled to unit outer radius;
/// - `nested_circles`: concentric rings of radius `(c+1)/k`, point counts
///   proportional to circumference;
/// - `moons`: interleaved unit half-circles, alternately upper and lower;
/// - `blobs`: isotropic Gaussians (std = `noise`) centred on the unit circle.
pub fn generate(spec: &GeneratorSpec) -> Result<DataMatrix> {
    let GeneratorSpec {
        kind,
        n,
        num_clusters: k,
        noise,
        seed,
    } = *spec;
    if k == 0 || n < k {
        return Err(Error::InvalidSpec(format!(
            "need n >= num_clusters >= 1, got n={n}, num_clusters={k}"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidSpec(format!("noise must be >= 0, got {noise}")));
    }
    let sizes = match kind {
        GeneratorKind::NestedCircles => proportional_sizes(n, k),
        _ => even_sizes(n, k),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (c, &m) in sizes.iter().enumerate() {
        for s in 0..m {
            // position along the shape in [0, 1]
            let t = if m > 1 { s as f64 / (m - 1) as f64 } else { 0.5 };
            let (x, y) = match kind {
                GeneratorKind::Spirals => {
                    let theta = PI / 4.0 + t * 1.75 * PI;
                    let r = theta / (2.0 * PI);
                    let phi = theta + 2.0 * PI * c as f64 / k as f64;
                    (r * phi.cos(), r * phi.sin())
                }
                GeneratorKind::NestedCircles => {
                    let r = (c + 1) as f64 / k as f64;
                    let phi = 2.0 * PI * s as f64 / m as f64;
                    (r * phi.cos(), r * phi.sin())
                }
                GeneratorKind::Moons => {
                    let phi = PI * t;
                    if c % 2 == 0 {
                        (c as f64 + phi.cos(), phi.sin())
                    } else {
                        (c as f64 - phi.cos(), 0.5 - phi.sin())
                    }
                }
                GeneratorKind::Blobs => {
                    if k == 1 {
                        (0.0, 0.0)
                    } else {
                        let phi = PI / 2.0 + 2.0 * PI * c as f64 / k as f64;
                        (phi.cos(), phi.sin())
                    }
                }
            };
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            rows.push(vec![x + noise * dx, y + noise * dy]);
            labels.push(c);
        }
    }
    DataMatrix::from_rows(&rows)?.with_labels(labels)
}

fn even_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|c| n / k + usize::from(c < n % k)).collect()
}

/// Sizes proportional to `c + 1`, each at least one, summing to `n`
/// (largest-remainder rounding, remainders to the outer rings first).
fn proportional_sizes(n: usize, k: usize) -> Vec<usize> {
    let total = (k * (k + 1) / 2) as f64;
    let spare = n - k;
    let shares: Vec<f64> = (0..k).map(|c| spare as f64 * (c + 1) as f64 / total).collect();
    let mut sizes: Vec<usize> = shares.iter().map(|s| 1 + s.floor() as usize).collect();
    let mut left = n - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let fa = shares[a] - shares[a].floor();
        let fb = shares[b] - shares[b].floor();
        fb.total_cmp(&fa).then(b.cmp(&a))
    });
    for &c in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[c] += 1;
        left -= 1;
    }
    sizes
}

/// Summary metrics written next to a label file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub ari: f64,
    pub nmi: f64,
    pub k_used: usize,
    pub num_leaves: usize,
    pub runtime_seconds: f64,
}

/// Write `labels` as a one-column CSV at `path`. When `metrics` is given it
/// is written as JSON next to it, at `path` with a `.json` extension.
pub fn write_result(
    labels: &[usize],
    metrics: Option<&MetricRecord>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if labels.is_empty() {
        return Err(Error::InvalidArgument("no labels to write".into()));
    }
    let mut body = String::with_capacity(labels.len() * 3);
    for l in labels {
        body.push_str(&l.to_string());
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))?;
    if let Some(m) = metrics {
        write_metrics(m, path.with_extension("json"))?;
    }
    Ok(())
}

pub fn write_metrics(metrics: &MetricRecord, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let rounded = MetricRecord {
        ari: round_significant(metrics.ari, 6),
        nmi: round_significant(metrics.nmi, 6),
        runtime_seconds: round_significant(metrics.runtime_seconds, 6),
        ..metrics.clone()
    };
    let json = serde_json::to_string_pretty(&rounded).expect("metric record serializes");
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

/// Format with `digits` significant digits, no exponent.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn round_significant(x: f64, digits: usize) -> f64 {
    format_significant(x, digits).parse().unwrap_or(x)
}
