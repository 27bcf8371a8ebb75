//! Functional datasets on a shared time grid, CSV I/O and stratified splitting.
//!
//! File layout: a header `t,<t_0>,...,<t_m>` followed by one row per curve,
//! `label,<x_0>,...,<x_m>`. Labels are 1-based on disk and 0-based in memory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GRID_TOL: f64 = 1e-12;

/// Uniform grid on [0, 1] with an odd number of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;

    fn try_from(points: Vec<f64>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(g: TimeGrid) -> Self {
        g.points
    }
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        let m = points.len();
        if m < 3 || m % 2 == 0 {
            return Err(Error::Validation(format!(
                "grid must have an odd number (>= 3) of points, got {m}"
            )));
        }
        if points[0] != 0.0 || points[m - 1] != 1.0 {
            return Err(Error::Validation(format!(
                "grid must start at 0 and end at 1, got [{}, {}]",
                points[0],
                points[m - 1]
            )));
        }
        let step = 1.0 / (m - 1) as f64;
        for (i, w) in points.windows(2).enumerate() {
            let d = w[1] - w[0];
            if !(d > 0.0) {
                return Err(Error::Validation(format!(
                    "grid is not strictly increasing at index {}",
                    i + 1
                )));
            }
            if (d - step).abs() > GRID_TOL {
                return Err(Error::Validation(format!(
                    "grid spacing is not uniform at index {} (step {d}, expected {step})",
                    i + 1
                )));
            }
        }
        Ok(Self { points })
    }

    /// `intervals + 1` equally spaced points; `intervals` must be even.
    pub fn uniform(intervals: usize) -> Result<Self> {
        if intervals == 0 || intervals % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "grid needs an even, positive number of intervals, got {intervals}"
            )));
        }
        let mut points: Vec<f64> = (0..=intervals)
            .map(|i| i as f64 / intervals as f64)
            .collect();
        points[intervals] = 1.0;
        Self::new(points)
    }

    /// The 101-point grid 0, 0.01, ..., 1.
    pub fn standard() -> Self {
        Self::uniform(100).expect("standard grid is valid")
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn step(&self) -> f64 {
        1.0 / (self.points.len() - 1) as f64
    }
}

/// One observed curve and, optionally, its 0-based category.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSample {
    pub values: Vec<f64>,
    pub label: Option<usize>,
}

impl FunctionalSample {
    pub fn new(values: Vec<f64>, label: Option<usize>) -> Self {
        Self { values, label }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFunctionalDataset {
    grid: TimeGrid,
    samples: Vec<FunctionalSample>,
    n_classes: usize,
}

impl LabeledFunctionalDataset {
    /// Validates curve lengths and labels; every class in `0..n_classes` must occur.
    pub fn new(grid: TimeGrid, samples: Vec<FunctionalSample>, n_classes: usize) -> Result<Self> {
        Self::build(grid, samples, n_classes, true)
    }

    /// Like [`Self::new`] but allows categories with no samples, which
    /// happens for small held-out sets and partial reports.
    pub fn new_allow_empty_classes(
        grid: TimeGrid,
        samples: Vec<FunctionalSample>,
        n_classes: usize,
    ) -> Result<Self> {
        Self::build(grid, samples, n_classes, false)
    }

    fn build(
        grid: TimeGrid,
        samples: Vec<FunctionalSample>,
        n_classes: usize,
        require_all_classes: bool,
    ) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 categories, got {n_classes}"
            )));
        }
        let mut counts = vec![0usize; n_classes];
        for (i, s) in samples.iter().enumerate() {
            if s.values.len() != grid.len() {
                return Err(Error::Validation(format!(
                    "sample {i} has {} values but the grid has {} points",
                    s.values.len(),
                    grid.len()
                )));
            }
            match s.label {
                Some(l) if l < n_classes => counts[l] += 1,
                Some(l) => {
                    return Err(Error::Validation(format!(
                        "sample {i} has label {} outside 1..={n_classes}",
                        l + 1
                    )))
                }
                None => return Err(Error::Validation(format!("sample {i} has no label"))),
            }
            if let Some(j) = s.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "sample {i} has a non-finite value at grid index {j}"
                )));
            }
        }
        if require_all_classes {
            if let Some(k) = counts.iter().position(|&c| c == 0) {
                return Err(Error::Validation(format!("category {} has no samples", k + 1)));
            }
        }
        Ok(Self {
            grid,
            samples,
            n_classes,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[FunctionalSample] {
        &self.samples
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// 0-based labels.
    pub fn labels(&self) -> Vec<usize> {
        self.samples
            .iter()
            .map(|s| s.label.expect("validated"))
            .collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for s in &self.samples {
            counts[s.label.expect("validated")] += 1;
        }
        counts
    }

    pub fn curves(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.iter().map(|s| s.values.as_slice())
    }

    fn subset(&self, idx: &[usize]) -> Self {
        Self {
            grid: self.grid.clone(),
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            n_classes: self.n_classes,
        }
    }
}

/// Reads a dataset. With `n_classes = None` the category count is the largest label.
pub fn load_dataset(path: impl AsRef<Path>, n_classes: Option<usize>) -> Result<LabeledFunctionalDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_dataset(file, n_classes)
}

pub fn read_dataset(
    reader: impl std::io::Read,
    n_classes: Option<usize>,
) -> Result<LabeledFunctionalDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        Some(r) => r.map_err(|e| Error::Parse {
            row: 1,
            message: e.to_string(),
        })?,
        None => {
            return Err(Error::Parse {
                row: 1,
                message: "missing header row".into(),
            })
        }
    };
    if header.get(0).map(str::trim) != Some("t") {
        return Err(Error::Parse {
            row: 1,
            message: "header must start with `t`".into(),
        });
    }
    let points = header
        .iter()
        .skip(1)
        .enumerate()
        .map(|(j, f)| parse_f64(f, 1, j + 2))
        .collect::<Result<Vec<_>>>()?;
    let grid = TimeGrid::new(points)?;

    let mut samples = Vec::new();
    let mut max_label = 0usize;
    for (i, rec) in records.enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        if rec.len() == 1 && rec.get(0).map_or(true, |s| s.trim().is_empty()) {
            continue;
        }
        if rec.len() != grid.len() + 1 {
            return Err(Error::Parse {
                row,
                message: format!(
                    "expected a label and {} values, found {} fields",
                    grid.len(),
                    rec.len()
                ),
            });
        }
        let raw = rec.get(0).unwrap_or("").trim();
        let label: usize = raw.parse().map_err(|_| Error::Parse {
            row,
            message: format!("label `{raw}` is not a positive integer"),
        })?;
        if label == 0 {
            return Err(Error::Validation(format!(
                "row {row}: label 0 is out of range (labels are 1-based)"
            )));
        }
        if let Some(k) = n_classes {
            if label > k {
                return Err(Error::Validation(format!(
                    "row {row}: label {label} is outside 1..={k}"
                )));
            }
        }
        max_label = max_label.max(label);
        let values = rec
            .iter()
            .skip(1)
            .enumerate()
            .map(|(j, f)| parse_f64(f, row, j + 2))
            .collect::<Result<Vec<_>>>()?;
        samples.push(FunctionalSample::new(values, Some(label - 1)));
    }
    let k = n_classes.unwrap_or(max_label);
    LabeledFunctionalDataset::new(grid, samples, k)
}

fn parse_f64(field: &str, row: usize, col: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        row,
        message: format!("column {col}: `{field}` is not a number"),
    })
}

pub fn save_dataset(dataset: &LabeledFunctionalDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    write_dataset(dataset, &mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn write_dataset(dataset: &LabeledFunctionalDataset, w: &mut impl Write) -> std::io::Result<()> {
    write!(w, "t")?;
    for t in dataset.grid.points() {
        write!(w, ",{t}")?;
    }
    writeln!(w)?;
    for s in &dataset.samples {
        write!(w, "{}", s.label.expect("validated") + 1)?;
        for x in &s.values {
            write!(w, ",{x}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Splits each class separately, sending `round(n_k * test_fraction)` samples to the test set.
/// Both splits keep the input order.
pub fn stratified_split(
    dataset: &LabeledFunctionalDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(LabeledFunctionalDataset, LabeledFunctionalDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.n_classes];
    for (i, s) in dataset.samples.iter().enumerate() {
        by_class[s.label.expect("validated")].push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (k, mut idx) in by_class.into_iter().enumerate() {
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        if n_test == 0 || n_test == idx.len() {
            return Err(Error::Validation(format!(
                "category {} has {} samples, too few to split with fraction {test_fraction}",
                k + 1,
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((dataset.subset(&train), dataset.subset(&test)))
}
