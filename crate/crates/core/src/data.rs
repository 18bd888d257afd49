//! Datasets: CSV ingestion, z-score normalization, stratified splitting and
//! synthetic interaction tasks.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::{Matrix2D, Rng};

/// Features with standard deviation below this are centred but not scaled.
pub const MIN_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix2D,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
    pub label_name: String,
    pub norm_stats: Option<NormStats>,
}

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Dataset {
    pub fn new(
        features: Matrix2D,
        labels: Vec<usize>,
        class_names: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::shape(format!(
                "{} labels for {} samples",
                labels.len(),
                features.rows()
            )));
        }
        if feature_names.len() != features.cols() {
            return Err(Error::shape(format!(
                "{} feature names for {} features",
                feature_names.len(),
                features.cols()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::arg(format!(
                "label {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        Ok(Self {
            features,
            labels,
            class_names,
            feature_names,
            label_name: "label".to_string(),
            norm_stats: None,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of samples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order. Metadata is carried over.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            feature_names: self.feature_names.clone(),
            label_name: self.label_name.clone(),
            norm_stats: self.norm_stats.clone(),
        }
    }

    /// Same samples and labels with a new feature matrix.
    pub fn with_features(&self, features: Matrix2D, feature_names: Vec<String>) -> Result<Self> {
        let mut ds = Dataset::new(
            features,
            self.labels.clone(),
            self.class_names.clone(),
            feature_names,
        )?;
        ds.label_name = self.label_name.clone();
        Ok(ds)
    }
}

/// Which CSV column carries the label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl LabelColumn {
    /// Interprets a command-line value: integers are indices, anything else a name.
    pub fn parse(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        }
    }

    fn resolve(&self, header: Option<&[String]>, width: usize) -> Result<usize> {
        match self {
            LabelColumn::Name(name) => {
                let header = header.ok_or_else(|| {
                    Error::Schema(format!(
                        "label column {name:?} given by name but the file has no header"
                    ))
                })?;
                header.iter().position(|h| h == name).ok_or_else(|| {
                    Error::Schema(format!("label column {name:?} not found in header"))
                })
            }
            LabelColumn::Index(i) => {
                // a header may also use a numeric name
                if let Some(pos) = header.and_then(|h| h.iter().position(|c| c == &i.to_string())) {
                    return Ok(pos);
                }
                if *i < width {
                    Ok(*i)
                } else {
                    Err(Error::Schema(format!(
                        "label column index {i} out of range for {width} columns"
                    )))
                }
            }
        }
    }
}

fn split_line(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

/// Parses CSV text. `row` numbers in errors are 1-based file lines.
pub fn parse_csv(text: &str, label_column: &LabelColumn, has_header: bool) -> Result<Dataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty());

    let header: Option<Vec<String>> = if has_header {
        let (_, line) = lines
            .next()
            .ok_or_else(|| Error::Schema("file is empty; expected a header".into()))?;
        Some(split_line(line).into_iter().map(String::from).collect())
    } else {
        None
    };

    let rows: Vec<(usize, Vec<&str>)> = lines.map(|(n, l)| (n, split_line(l))).collect();
    let width = match (&header, rows.first()) {
        (Some(h), _) => h.len(),
        (None, Some((_, r))) => r.len(),
        (None, None) => return Err(Error::Schema("file contains no rows".into())),
    };
    if width < 2 {
        return Err(Error::Schema(format!(
            "need at least one feature column and a label column, found {width} column(s)"
        )));
    }
    let label_idx = label_column.resolve(header.as_deref(), width)?;
    let column_name = |c: usize| -> String {
        header
            .as_ref()
            .map_or_else(|| c.to_string(), |h| h[c].clone())
    };

    let feature_cols: Vec<usize> = (0..width).filter(|&c| c != label_idx).collect();
    let feature_names: Vec<String> = feature_cols.iter().map(|&c| column_name(c)).collect();

    let mut data = Vec::with_capacity(rows.len() * feature_cols.len());
    let mut labels = Vec::with_capacity(rows.len());
    let mut class_names: Vec<String> = Vec::new();
    for (line_no, cells) in &rows {
        if cells.len() != width {
            return Err(Error::Parse {
                row: *line_no,
                column: "*".into(),
                message: format!(
                    "expected {width} cells, found {} (quoted cells are not supported)",
                    cells.len()
                ),
            });
        }
        for &c in &feature_cols {
            let cell = cells[c];
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                row: *line_no,
                column: column_name(c),
                message: format!("cannot parse {cell:?} as a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row: *line_no,
                    column: column_name(c),
                    message: format!("non-finite value {cell:?}"),
                });
            }
            data.push(value);
        }
        let label = cells[label_idx];
        let code = match class_names.iter().position(|c| c == label) {
            Some(code) => code,
            None => {
                class_names.push(label.to_string());
                class_names.len() - 1
            }
        };
        labels.push(code);
    }
    let features = Matrix2D::new(rows.len(), feature_cols.len(), data)?;
    let mut ds = Dataset::new(features, labels, class_names, feature_names)?;
    ds.label_name = column_name(label_idx);
    Ok(ds)
}

/// Reads a CSV file; labels are encoded by order of first appearance.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: &LabelColumn,
    has_header: bool,
) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text, label_column, has_header)
}

/// Renders features plus the label column (as class names) with a header row.
pub fn to_csv_string(ds: &Dataset) -> String {
    let mut out = String::new();
    for name in &ds.feature_names {
        out.push_str(name);
        out.push(',');
    }
    out.push_str(&ds.label_name);
    out.push('\n');
    for (row, &label) in ds.features.iter_rows().zip(&ds.labels) {
        for v in row {
            // `{}` on f64 prints the shortest representation that round-trips
            let _ = write!(out, "{v},");
        }
        out.push_str(&ds.class_names[label]);
        out.push('\n');
    }
    out
}

pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_csv_string(ds)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Per-feature mean and population standard deviation of `features`.
pub fn zscore_fit_matrix(features: &Matrix2D) -> NormStats {
    let n = features.rows().max(1) as f64;
    let mean: Vec<f64> = features.column_sums().into_iter().map(|s| s / n).collect();
    let mut var = vec![0.0; features.cols()];
    for row in features.iter_rows() {
        for ((v, &x), &mu) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - mu) * (x - mu);
        }
    }
    let std = var
        .into_iter()
        .map(|v| {
            let s = (v / n).sqrt();
            if s < MIN_STD {
                1.0
            } else {
                s
            }
        })
        .collect();
    NormStats { mean, std }
}

pub fn zscore_fit(train: &Dataset) -> NormStats {
    zscore_fit_matrix(&train.features)
}

pub fn zscore_apply_matrix(features: &Matrix2D, stats: &NormStats) -> Result<Matrix2D> {
    if stats.mean.len() != features.cols() || stats.std.len() != features.cols() {
        return Err(Error::shape(format!(
            "normalization stats for {} features applied to {}",
            stats.mean.len(),
            features.cols()
        )));
    }
    let mut out = features.clone();
    for r in 0..out.rows() {
        for (j, v) in out.row_mut(r).iter_mut().enumerate() {
            *v = (*v - stats.mean[j]) / stats.std[j];
        }
    }
    Ok(out)
}

pub fn zscore_apply(ds: &Dataset, stats: &NormStats) -> Result<Dataset> {
    let mut out = ds.clone();
    out.features = zscore_apply_matrix(&ds.features, stats)?;
    out.norm_stats = Some(stats.clone());
    Ok(out)
}

/// Partitions sample indices into three groups, class by class.
///
/// Each class is shuffled with `rng` and divided by largest-remainder
/// rounding of `count × fraction`; ties in the remainder go to the earlier
/// split. A split with a positive fraction that would receive none of a class
/// takes one sample from the split furthest above its target. Indices within
/// each returned group are ascending.
pub fn stratified_split_indices(
    labels: &[usize],
    n_classes: usize,
    fractions: [f64; 3],
    rng: &mut Rng,
) -> Result<[Vec<usize>; 3]> {
    if fractions.iter().any(|&f| !(f >= 0.0) || !f.is_finite()) {
        return Err(Error::arg(format!(
            "split fractions must be >= 0, got {fractions:?}"
        )));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::arg(format!(
            "split fractions must sum to 1, got {total}"
        )));
    }
    let active = fractions.iter().filter(|&&f| f > 0.0).count();

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_classes {
            return Err(Error::arg(format!(
                "label {l} out of range for {n_classes} classes"
            )));
        }
        by_class[l].push(i);
    }

    let mut out: [Vec<usize>; 3] = Default::default();
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let count = members.len();
        if count < active {
            return Err(Error::arg(format!(
                "class {class} has {count} sample(s) but {active} splits need one each"
            )));
        }
        rng.shuffle(&mut members);

        let targets: Vec<f64> = fractions.iter().map(|f| f * count as f64).collect();
        let mut alloc: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
        let mut remaining = count - alloc.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..3).collect();
        // stable sort: equal remainders keep split order
        order.sort_by(|&a, &b| {
            let ra = targets[a] - targets[a].floor();
            let rb = targets[b] - targets[b].floor();
            rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
        });
        for &s in order.iter().cycle() {
            if remaining == 0 {
                break;
            }
            if fractions[s] > 0.0 {
                alloc[s] += 1;
                remaining -= 1;
            }
        }
        for s in 0..3 {
            if fractions[s] > 0.0 && alloc[s] == 0 {
                let donor = (0..3)
                    .filter(|&d| alloc[d] > 1)
                    .max_by(|&a, &b| {
                        let ea = alloc[a] as f64 - targets[a];
                        let eb = alloc[b] as f64 - targets[b];
                        ea.partial_cmp(&eb).unwrap_or(std::cmp::Ordering::Equal)
                    })
                    .expect("count >= active guarantees a donor");
                alloc[donor] -= 1;
                alloc[s] += 1;
            }
        }

        let mut start = 0;
        for s in 0..3 {
            out[s].extend_from_slice(&members[start..start + alloc[s]]);
            start += alloc[s];
        }
    }
    for group in &mut out {
        group.sort_unstable();
    }
    Ok(out)
}

/// Stratified train/validation/test partition of `ds`.
pub fn stratified_split(ds: &Dataset, fractions: [f64; 3], rng: &mut Rng) -> Result<[Dataset; 3]> {
    let [a, b, c] = stratified_split_indices(&ds.labels, ds.n_classes(), fractions, rng)?;
    Ok([ds.subset(&a), ds.subset(&b), ds.subset(&c)])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionRule {
    /// Label is `x₀·x₁ > 0`.
    ProductSign,
    /// Label is `x₀·x₁·x₂ > 0`.
    ThreeWayProductSign,
}

impl InteractionRule {
    /// Number of leading features the rule reads.
    pub fn arity(self) -> usize {
        match self {
            InteractionRule::ProductSign => 2,
            InteractionRule::ThreeWayProductSign => 3,
        }
    }

    /// Class of a clean feature row: 1 when the product is positive.
    pub fn label(self, row: &[f64]) -> usize {
        usize::from(row[..self.arity()].iter().product::<f64>() > 0.0)
    }
}

/// Gaussian features whose label depends only on the sign of a product.
///
/// Clean features are drawn first (row-major), labels computed from them, then
/// a second matrix of `N(0, noise_std²)` noise is drawn and added.
pub fn synth_interaction(
    n_samples: usize,
    n_features: usize,
    rule: InteractionRule,
    noise_std: f64,
    rng: &mut Rng,
) -> Result<Dataset> {
    let needed = rule.arity();
    if n_features < needed {
        return Err(Error::arg(format!(
            "{rule:?} needs at least {needed} features, got {n_features}"
        )));
    }
    if n_samples == 0 {
        return Err(Error::arg("n_samples must be >= 1"));
    }
    let clean = rng.normal(n_samples * n_features, 0.0, 1.0)?;
    let labels: Vec<usize> = clean
        .chunks_exact(n_features)
        .map(|row| rule.label(row))
        .collect();
    let noise = rng.normal(n_samples * n_features, 0.0, noise_std)?;
    let data: Vec<f64> = clean.iter().zip(&noise).map(|(a, b)| a + b).collect();
    let features = Matrix2D::new(n_samples, n_features, data)?;
    Dataset::new(
        features,
        labels,
        vec!["0".into(), "1".into()],
        (0..n_features).map(|i| format!("x{i}")).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_appearance_encoding() {
        let ds = parse_csv("1,2,a\n3,4,b\n5,6,a\n", &LabelColumn::Index(2), false).unwrap();
        assert_eq!(ds.labels, vec![0, 1, 0]);
        assert_eq!(ds.class_names, vec!["a", "b"]);
        assert_eq!(ds.feature_names, vec!["0", "1"]);
    }

    #[test]
    fn header_names() {
        let ds = parse_csv(
            "x1,x2,y\n1,2,p\n3,4,q\n",
            &LabelColumn::Name("y".into()),
            true,
        )
        .unwrap();
        assert_eq!(ds.feature_names, vec!["x1", "x2"]);
        assert_eq!(ds.label_name, "y");
        let ds = parse_csv("y,x1,x2\nq,1,2\n", &LabelColumn::Index(0), true).unwrap();
        assert_eq!(ds.feature_names, vec!["x1", "x2"]);
        assert_eq!(ds.features.row(0), &[1.0, 2.0]);
    }

    #[test]
    fn bad_cell_names_row_and_column() {
        let err =
            parse_csv("x1,x2,y\nabc,2,p\n", &LabelColumn::Name("y".into()), true).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "x1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_errors() {
        assert!(matches!(
            parse_csv("x1,x2,y\n1,2,p\n", &LabelColumn::Name("z".into()), true),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            parse_csv("1,2,p\n", &LabelColumn::Index(7), false),
            Err(Error::Schema(_))
        ));
        // a quoted cell with a comma splits into too many cells
        assert!(matches!(
            parse_csv("x1,y\n\"1,5\",p\n", &LabelColumn::Name("y".into()), true),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            load_csv("/definitely/not/here.csv", &LabelColumn::Index(0), false),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn zscore_examples() {
        let m = Matrix2D::from_rows(&[[1.0, 5.0], [3.0, 5.0]]).unwrap();
        let stats = zscore_fit_matrix(&m);
        assert_eq!(stats.mean, vec![2.0, 5.0]);
        assert_eq!(stats.std, vec![1.0, 1.0]);
        let z = zscore_apply_matrix(&m, &stats).unwrap();
        assert_eq!(z.as_slice(), &[-1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn zscore_self_check() {
        let mut rng = Rng::new(3);
        let m = Matrix2D::new(50, 4, rng.normal(200, 7.0, 3.0).unwrap()).unwrap();
        let z = zscore_apply_matrix(&m, &zscore_fit_matrix(&m)).unwrap();
        for j in 0..4 {
            let col = z.column(j);
            let mean = col.iter().sum::<f64>() / 50.0;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 50.0).sqrt();
            assert!(mean.abs() < 1e-12);
            assert!((std - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_proportions() {
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let [train, val, test] =
            stratified_split_indices(&labels, 2, [0.8, 0.0, 0.2], &mut Rng::new(1)).unwrap();
        assert!(val.is_empty());
        assert_eq!(train.len(), 80);
        assert_eq!(test.iter().filter(|&&i| labels[i] == 0).count(), 10);
        assert_eq!(test.iter().filter(|&&i| labels[i] == 1).count(), 10);
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let labels: Vec<usize> = (0..37).map(|i| (i * 7) % 3).collect();
        let a = stratified_split_indices(&labels, 3, [0.6, 0.2, 0.2], &mut Rng::new(4)).unwrap();
        let b = stratified_split_indices(&labels, 3, [0.6, 0.2, 0.2], &mut Rng::new(4)).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn split_errors() {
        let labels = vec![0, 0, 0, 1];
        assert!(stratified_split_indices(&labels, 2, [0.5, 0.25, 0.25], &mut Rng::new(0)).is_err());
        assert!(stratified_split_indices(&labels, 2, [0.5, 0.6, 0.0], &mut Rng::new(0)).is_err());
        assert!(stratified_split_indices(&labels, 2, [1.2, -0.2, 0.0], &mut Rng::new(0)).is_err());
    }

    #[test]
    fn small_class_still_reaches_every_split() {
        // 3 samples at (0.8, 0.1, 0.1) floor to (2, 0, 0); each small split takes one
        let labels = vec![0, 0, 0];
        let [a, b, c] =
            stratified_split_indices(&labels, 1, [0.8, 0.1, 0.1], &mut Rng::new(0)).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (1, 1, 1));
    }

    #[test]
    fn product_sign_rule() {
        assert_eq!(InteractionRule::ProductSign.label(&[1.2, -0.4, 3.0]), 0);
        assert_eq!(
            InteractionRule::ThreeWayProductSign.label(&[1.2, -0.4, -3.0]),
            1
        );
        let mut rng = Rng::new(0);
        let ds = synth_interaction(50, 4, InteractionRule::ProductSign, 0.0, &mut rng).unwrap();
        for (row, &l) in ds.features.iter_rows().zip(&ds.labels) {
            assert_eq!(l, usize::from(row[0] * row[1] > 0.0));
        }
        assert!(
            synth_interaction(10, 2, InteractionRule::ThreeWayProductSign, 0.0, &mut rng).is_err()
        );
        assert!(synth_interaction(10, 1, InteractionRule::ProductSign, 0.0, &mut rng).is_err());
    }
}
