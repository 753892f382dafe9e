//! Labeled datasets: CSV ingestion, normalization, splitting and synthetic
//! Gaussian-blob generators shaped like common membership-inference
//! benchmarks.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// One row borrowed from a dataset.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub features: &'a [f64],
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub name: String,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl LabeledDataset {
    pub fn new(
        name: impl Into<String>,
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        classes: usize,
    ) -> Result<Self> {
        let ds = LabeledDataset {
            name: name.into(),
            features,
            labels,
            classes,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.len() != self.labels.len() {
            return Err(Error::Dimension {
                context: "dataset labels",
                expected: self.features.len(),
                actual: self.labels.len(),
            });
        }
        if self.classes < 2 {
            return Err(Error::Input(format!(
                "dataset needs at least 2 classes, got {}",
                self.classes
            )));
        }
        let m = self.feature_count();
        for (i, row) in self.features.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Dimension {
                    context: "dataset row",
                    expected: m,
                    actual: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("row {i} has a non-finite feature")));
            }
        }
        if let Some(bad) = self.labels.iter().find(|&&l| l >= self.classes) {
            return Err(Error::Input(format!(
                "label {bad} outside [0, {})",
                self.classes
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn example(&self, i: usize) -> Example<'_> {
        Example {
            features: &self.features[i],
            label: self.labels[i],
        }
    }

    pub fn examples(&self) -> Vec<Example<'_>> {
        (0..self.len()).map(|i| self.example(i)).collect()
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> LabeledDataset {
        LabeledDataset {
            name: name.into(),
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// Min-max scales every feature column into [-1, 1]. Constant columns map to 0.
    pub fn normalize(&mut self) {
        let m = self.feature_count();
        for j in 0..m {
            let (lo, hi) = self
                .features
                .iter()
                .map(|r| r[j])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            let span = hi - lo;
            for row in &mut self.features {
                row[j] = if span > 0.0 {
                    (2.0 * (row[j] - lo) / span - 1.0).clamp(-1.0, 1.0)
                } else {
                    0.0
                };
            }
        }
    }

    pub fn max_abs_feature(&self) -> f64 {
        self.features
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Writes the dataset as CSV with columns `f0..f{m-1},label`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_csv_to(&mut out)
            .map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_csv_to<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.feature_count())
            .map(|j| format!("f{j}"))
            .chain(std::iter::once("label".to_string()))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (row, label) in self.features.iter().zip(&self.labels) {
            for v in row {
                write!(out, "{v:?},")?;
            }
            writeln!(out, "{label}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvFormat {
    pub label_column: String,
    #[serde(default)]
    pub normalize: bool,
    /// Fixes the class count; otherwise it is inferred as `max label + 1`.
    #[serde(default)]
    pub classes: Option<usize>,
}

impl Default for CsvFormat {
    fn default() -> Self {
        CsvFormat {
            label_column: "label".into(),
            normalize: false,
            classes: None,
        }
    }
}

pub fn load_dataset(path: &Path, format: &CsvFormat) -> Result<LabeledDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_dataset(file, &path.display().to_string(), &name, format)
}

pub fn read_dataset<R: std::io::Read>(
    reader: R,
    source: &str,
    name: &str,
    format: &CsvFormat,
) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == format.label_column)
        .ok_or_else(|| Error::Data {
            path: source.to_string(),
            line: 1,
            message: format!("no column named '{}'", format.label_column),
        })?;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Data {
                path: source.to_string(),
                line,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let mut row = Vec::with_capacity(headers.len() - 1);
        for (j, field) in record.iter().enumerate() {
            if j == label_idx {
                let label: usize = field.parse().map_err(|_| Error::Data {
                    path: source.to_string(),
                    line,
                    message: format!("label '{field}' is not a non-negative integer"),
                })?;
                if let Some(c) = format.classes {
                    if label >= c {
                        return Err(Error::Data {
                            path: source.to_string(),
                            line,
                            message: format!("unknown label {label} (classes = {c})"),
                        });
                    }
                }
                labels.push(label);
            } else {
                let v: f64 = field.parse().map_err(|_| Error::Data {
                    path: source.to_string(),
                    line,
                    message: format!("column '{}' holds non-numeric value '{field}'", &headers[j]),
                })?;
                if !v.is_finite() {
                    return Err(Error::Data {
                        path: source.to_string(),
                        line,
                        message: format!("column '{}' is not finite", &headers[j]),
                    });
                }
                row.push(v);
            }
        }
        features.push(row);
    }
    if labels.len() < 2 {
        return Err(Error::Data {
            path: source.to_string(),
            line: labels.len() + 1,
            message: "need at least 2 rows".into(),
        });
    }
    let classes = format
        .classes
        .unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1).max(2));
    let mut ds = LabeledDataset::new(name, features, labels, classes)?;
    if format.normalize {
        ds.normalize();
    }
    Ok(ds)
}

/// Reads a CSV of query rows. A `label_column`, when present, is dropped.
pub fn load_queries(path: &Path, label_column: Option<&str>) -> Result<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers()?.clone();
    let skip = label_column.and_then(|l| headers.iter().position(|h| h == l));
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .enumerate()
            .filter(|(j, _)| Some(*j) != skip)
            .map(|(_, f)| {
                f.parse::<f64>().map_err(|_| Error::Data {
                    path: path.display().to_string(),
                    line: i + 2,
                    message: format!("non-numeric value '{f}'"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub rows: usize,
    pub features: usize,
    /// Standard deviation of the class centres relative to unit within-class noise.
    pub separation: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    /// 30 classes, 1200 rows, weakly separated: prone to overfitting.
    pub fn location_like(seed: u64) -> Self {
        SyntheticSpec {
            classes: 30,
            rows: 1200,
            features: 40,
            separation: 0.35,
            seed,
        }
    }

    /// Two well separated classes, 10000 rows, 14 features.
    pub fn adult_like(seed: u64) -> Self {
        SyntheticSpec {
            classes: 2,
            rows: 10_000,
            features: 14,
            separation: 2.0,
            seed,
        }
    }
}

/// Gaussian blobs: class centres ~ N(0, separation^2 I), rows ~ N(centre, I).
/// Labels are balanced (row i gets class i mod C) and rows are shuffled.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    if spec.classes < 2 || spec.rows < 2 || spec.features < 1 {
        return Err(Error::Input(format!(
            "synthetic spec needs classes >= 2, rows >= 2, features >= 1 (got {}, {}, {})",
            spec.classes, spec.rows, spec.features
        )));
    }
    if !(spec.separation >= 0.0 && spec.separation.is_finite()) {
        return Err(Error::Input("separation must be finite and >= 0".into()));
    }
    let mut stream = rng::stream(spec.seed);
    let centres: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            (0..spec.features)
                .map(|_| spec.separation * standard_normal(&mut stream))
                .collect()
        })
        .collect();
    let mut order: Vec<usize> = (0..spec.rows).collect();
    order.shuffle(&mut stream);
    let mut features = Vec::with_capacity(spec.rows);
    let mut labels = Vec::with_capacity(spec.rows);
    for i in order {
        let label = i % spec.classes;
        let row = centres[label]
            .iter()
            .map(|c| c + standard_normal(&mut stream))
            .collect();
        features.push(row);
        labels.push(label);
    }
    LabeledDataset::new(
        format!(
            "synthetic-c{}-n{}-m{}",
            spec.classes, spec.rows, spec.features
        ),
        features,
        labels,
        spec.classes,
    )
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    crate::mechanisms::sample_gaussian(1.0, rng)
}

/// Shuffles row indices and cuts them into consecutive parts of the given sizes.
pub fn split_indices(
    len: usize,
    sizes: &[usize],
    stream: &mut rng::Stream,
) -> Result<Vec<Vec<usize>>> {
    let need: usize = sizes.iter().sum();
    if need > len {
        return Err(Error::Input(format!(
            "cannot split {len} rows into parts totalling {need}"
        )));
    }
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(stream);
    let mut parts = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &s in sizes {
        parts.push(idx[start..start + s].to_vec());
        start += s;
    }
    Ok(parts)
}

/// Per-class row counts, useful for audits and reports.
pub fn class_histogram(ds: &LabeledDataset) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for &l in &ds.labels {
        *h.entry(l).or_insert(0) += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> &'static str {
        "a,b,label\n0.5,1.0,0\n-1.0,2.0,1\n3.0,0.0,1\n2.0,-2.0,0\n"
    }

    #[test]
    fn loads_toy_csv() {
        let ds = read_dataset(toy().as_bytes(), "toy.csv", "toy", &CsvFormat::default()).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.feature_count(), 2);
        assert_eq!(ds.classes, 2);
        assert_eq!(ds.features[1], vec![-1.0, 2.0]);
    }

    #[test]
    fn text_in_numeric_column_names_the_line() {
        let csv = "a,b,label\n0.5,1.0,0\n-1.0,oops,1\n";
        let err = read_dataset(csv.as_bytes(), "bad.csv", "bad", &CsvFormat::default()).unwrap_err();
        match err {
            Error::Data { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("oops"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_label_rejected() {
        let fmt = CsvFormat {
            classes: Some(2),
            ..CsvFormat::default()
        };
        let csv = "a,label\n0.5,0\n1.0,2\n";
        let err = read_dataset(csv.as_bytes(), "x.csv", "x", &fmt).unwrap_err();
        assert!(matches!(err, Error::Data { line: 3, .. }));
    }

    #[test]
    fn normalization_maps_into_unit_box() {
        let fmt = CsvFormat {
            normalize: true,
            ..CsvFormat::default()
        };
        let ds = read_dataset(toy().as_bytes(), "toy.csv", "toy", &fmt).unwrap();
        for v in ds.features.iter().flatten() {
            assert!((-1.0..=1.0).contains(v));
        }
        assert_eq!(ds.max_abs_feature(), 1.0);
    }

    #[test]
    fn synthetic_is_deterministic_and_shaped() {
        let spec = SyntheticSpec {
            classes: 3,
            rows: 30,
            features: 4,
            separation: 1.0,
            seed: 5,
        };
        let a = make_synthetic(&spec).unwrap();
        let b = make_synthetic(&spec).unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        a.write_csv_to(&mut ba).unwrap();
        b.write_csv_to(&mut bb).unwrap();
        assert_eq!(ba, bb);
        assert_eq!(a.len(), 30);
        assert_eq!(a.feature_count(), 4);
        assert!(class_histogram(&a).values().all(|&c| c == 10));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let spec = SyntheticSpec {
            classes: 2,
            rows: 10,
            features: 3,
            separation: 1.0,
            seed: 1,
        };
        let a = make_synthetic(&spec).unwrap();
        let mut bytes = Vec::new();
        a.write_csv_to(&mut bytes).unwrap();
        let b = read_dataset(&bytes[..], "mem", &a.name, &CsvFormat::default()).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn split_parts_are_disjoint() {
        let mut s = rng::stream(3);
        let parts = split_indices(20, &[5, 5, 10], &mut s).unwrap();
        let mut all: Vec<usize> = parts.concat();
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
        assert!(split_indices(3, &[2, 2], &mut s).is_err());
    }
}
