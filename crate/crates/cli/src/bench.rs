//! Benchmark harness: every method on every dataset, one CSV row per dataset
//! plus an averages row.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use gbtrsc::dataio::{format_significant, DataMatrix};
use gbtrsc::metrics::{ari, nmi};
use gbtrsc::spectral::{baseline_sc_knn_with, cluster_with, ClusterConfig};
use rayon::prelude::*;

/// Neighbours in the SC-kNN baseline graph.
pub const SC_KNN_NEIGHBORS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    MdlGbtrsc,
    ScKnn,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "mdl_gbtrsc" | "gbtrsc" => Ok(Method::MdlGbtrsc),
            "sc_knn" => Ok(Method::ScKnn),
            other => Err(format!("unknown method `{other}` (expected mdl_gbtrsc or sc_knn)")),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::MdlGbtrsc => "mdl_gbtrsc",
            Method::ScKnn => "sc_knn",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub ari: f64,
    pub nmi: f64,
    pub runtime_seconds: f64,
}

/// A dataset to benchmark, or the reason it could not be loaded.
pub struct BenchInput {
    pub name: String,
    pub data: Result<DataMatrix, String>,
}

pub struct BenchRow {
    pub name: String,
    pub scores: Vec<Option<Score>>,
}

pub fn run_method(method: Method, x: &DataMatrix, cfg: &ClusterConfig) -> Result<Score, String> {
    let truth = x.labels.as_ref().ok_or("dataset has no ground truth")?;
    let k = distinct(truth);
    let start = Instant::now();
    let labels = match method {
        Method::MdlGbtrsc => cluster_with(x, Some(k), cfg).map(|r| r.partition.labels),
        Method::ScKnn => baseline_sc_knn_with(x, k, SC_KNN_NEIGHBORS, cfg).map(|p| p.labels),
    }
    .map_err(|e| e.to_string())?;
    let runtime_seconds = start.elapsed().as_secs_f64();
    Ok(Score {
        ari: ari(truth, &labels).map_err(|e| e.to_string())?,
        nmi: nmi(truth, &labels).map_err(|e| e.to_string())?,
        runtime_seconds,
    })
}

fn distinct(labels: &[usize]) -> usize {
    let mut seen = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Run every method on every input; rows come back in input order.
pub fn run(inputs: &[BenchInput], methods: &[Method], cfg: &ClusterConfig) -> Vec<BenchRow> {
    inputs
        .par_iter()
        .map(|input| {
            let scores = methods
                .iter()
                .map(|&m| {
                    let outcome = input.data.as_ref().map_err(Clone::clone).and_then(|x| run_method(m, x, cfg));
                    match outcome {
                        Ok(s) => Some(s),
                        Err(e) => {
                            eprintln!("warning: {} / {m}: {e}", input.name);
                            None
                        }
                    }
                })
                .collect();
            BenchRow {
                name: input.name.clone(),
                scores,
            }
        })
        .collect()
}

/// CSV table: `dataset` then `<method>_ari,<method>_nmi,<method>_runtime`
/// per method. Cells carry 6 significant digits; failures are `NA`. The last
/// row averages each column over its non-`NA` cells as written.
pub fn to_csv(rows: &[BenchRow], methods: &[Method]) -> String {
    let mut out = String::from("dataset");
    for m in methods {
        out.push_str(&format!(",{m}_ari,{m}_nmi,{m}_runtime"));
    }
    out.push('\n');

    let columns = 3 * methods.len();
    let mut sums = vec![(0.0f64, 0usize); columns];
    for row in rows {
        out.push_str(&csv_field(&row.name));
        for (m, score) in row.scores.iter().enumerate() {
            let cells = match score {
                Some(s) => [s.ari, s.nmi, s.runtime_seconds].map(|v| format_significant(v, 6)),
                None => ["NA", "NA", "NA"].map(String::from),
            };
            for (c, cell) in cells.iter().enumerate() {
                out.push(',');
                out.push_str(cell);
                if let Ok(v) = cell.parse::<f64>() {
                    let slot = &mut sums[3 * m + c];
                    slot.0 += v;
                    slot.1 += 1;
                }
            }
        }
        out.push('\n');
    }

    out.push_str("average");
    for (sum, count) in sums {
        out.push(',');
        if count == 0 {
            out.push_str("NA");
        } else {
            out.push_str(&format!("{}", sum / count as f64));
        }
    }
    out.push('\n');
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// True when at least one method produced a score on at least one dataset.
pub fn any_succeeded(rows: &[BenchRow]) -> bool {
    rows.iter().flat_map(|r| &r.scores).any(Option::is_some)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(name: &str, scores: Vec<Option<Score>>) -> BenchRow {
        BenchRow {
            name: name.into(),
            scores,
        }
    }

    fn score(v: f64) -> Option<Score> {
        Some(Score {
            ari: v,
            nmi: v / 2.0,
            runtime_seconds: 0.123456789,
        })
    }

    #[test]
    fn averages_skip_na() {
        let rows = vec![
            row("a", vec![score(1.0)]),
            row("b", vec![None]),
            row("c", vec![score(0.5)]),
        ];
        let csv = to_csv(&rows, &[Method::ScKnn]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "dataset,sc_knn_ari,sc_knn_nmi,sc_knn_runtime");
        assert_eq!(lines[2], "b,NA,NA,NA");
        assert_eq!(lines[3], "c,0.500000,0.250000,0.123457");
        assert_eq!(lines[4], "average,0.75,0.375,0.123457");
    }

    #[test]
    fn method_names() {
        assert_eq!("SC-KNN".parse::<Method>().unwrap(), Method::ScKnn);
        assert_eq!("mdl_gbtrsc".parse::<Method>().unwrap(), Method::MdlGbtrsc);
        assert!("kmeans".parse::<Method>().is_err());
    }
}
