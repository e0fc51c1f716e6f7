//! Dataset ingestion, standardization, splitting, and the error/MNLL
//! metrics reported during training.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::likelihoods::gaussian_loglik;
use crate::likelihoods::logsumexp;
use crate::model::{PredictiveSummary, Task};
use crate::numerics::{Matrix, Rng};
use crate::{Error, Result};

/// Targets of a dataset: a real-valued matrix for regression, class
/// indices for classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    Regression(Matrix),
    Classification(Vec<usize>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Regression(y) => y.rows(),
            Targets::Classification(labels) => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn gather(&self, indices: &[usize]) -> Targets {
        match self {
            Targets::Regression(y) => Targets::Regression(y.gather_rows(indices)),
            Targets::Classification(labels) => {
                Targets::Classification(indices.iter().map(|&i| labels[i]).collect())
            }
        }
    }

    pub fn n_classes(&self) -> Option<usize> {
        match self {
            Targets::Classification(labels) => {
                Some(labels.iter().copied().max().map_or(0, |m| m + 1))
            }
            _ => None,
        }
    }
}

/// Per-column statistics recorded when a dataset is standardized, so
/// predictions can be mapped back to original units. Standard deviations
/// use the ddof=1 (sample) convention; zero-variance columns are centered
/// and their std recorded as 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_std: Vec<f64>,
}

impl Standardizer {
    /// Column means and sample stds of `x`, and of `y` for regression.
    pub fn fit(x: &Matrix, targets: &Targets) -> Standardizer {
        let (x_mean, x_std) = column_stats(x);
        let (y_mean, y_std) = match targets {
            Targets::Regression(y) => column_stats(y),
            Targets::Classification(_) => (Vec::new(), Vec::new()),
        };
        Standardizer {
            x_mean,
            x_std,
            y_mean,
            y_std,
        }
    }

    pub fn apply_x(&self, x: &Matrix) -> Matrix {
        apply_stats(x, &self.x_mean, &self.x_std)
    }

    pub fn apply_targets(&self, targets: &Targets) -> Targets {
        match targets {
            Targets::Regression(y) => {
                Targets::Regression(apply_stats(y, &self.y_mean, &self.y_std))
            }
            t => t.clone(),
        }
    }

    pub fn invert_y(&self, y: &Matrix) -> Matrix {
        Matrix::from_fn(y.rows(), y.cols(), |i, j| {
            y.get(i, j) * self.y_std[j] + self.y_mean[j]
        })
    }

    pub fn invert_x(&self, x: &Matrix) -> Matrix {
        Matrix::from_fn(x.rows(), x.cols(), |i, j| {
            x.get(i, j) * self.x_std[j] + self.x_mean[j]
        })
    }
}

fn column_stats(m: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows() as f64;
    let mut means = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (j, &v) in m.row(i).iter().enumerate() {
            means[j] += v;
        }
    }
    for mean in &mut means {
        *mean /= n;
    }
    let mut stds = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (j, &v) in m.row(i).iter().enumerate() {
            stds[j] += (v - means[j]) * (v - means[j]);
        }
    }
    for std in &mut stds {
        *std = (*std / (n - 1.0)).sqrt();
        if *std == 0.0 {
            *std = 1.0;
        }
    }
    (means, stds)
}

fn apply_stats(m: &Matrix, means: &[f64], stds: &[f64]) -> Matrix {
    Matrix::from_fn(m.rows(), m.cols(), |i, j| {
        (m.get(i, j) - means[j]) / stds[j]
    })
}

/// An in-memory dataset. `standardizer` is present exactly when the
/// features (and regression targets) are on the standardized scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Matrix,
    pub targets: Targets,
    pub feature_names: Vec<String>,
    pub standardizer: Option<Standardizer>,
}

impl Dataset {
    pub fn new(x: Matrix, targets: Targets) -> Dataset {
        assert_eq!(x.rows(), targets.len(), "row count mismatch");
        let feature_names = (0..x.cols()).map(|j| format!("x{j}")).collect();
        Dataset {
            x,
            targets,
            feature_names,
            standardizer: None,
        }
    }

    pub fn n_points(&self) -> usize {
        self.x.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn output_dim(&self) -> usize {
        match &self.targets {
            Targets::Regression(y) => y.cols(),
            Targets::Classification(labels) => {
                labels.iter().copied().max().map_or(0, |m| m + 1)
            }
        }
    }

    pub fn task(&self) -> Task {
        match &self.targets {
            Targets::Regression(_) => Task::Regression,
            Targets::Classification(_) => Task::Classification {
                n_classes: self.output_dim(),
            },
        }
    }

    pub fn gather(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.gather_rows(indices),
            targets: self.targets.gather(indices),
            feature_names: self.feature_names.clone(),
            standardizer: self.standardizer.clone(),
        }
    }
}

/// Which column holds the labels, and how to interpret them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub label_col: String,
    pub task: TaskKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    Classification,
}

/// Load a comma-separated, UTF-8, '.'-decimal file. The first row is
/// treated as a header exactly when any of its cells fails to parse as a
/// number; otherwise column names are positional (`c0`, `c1`, ...) and
/// the schema's label column must be one of those.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let path_str = path.display().to_string();
    let mut lines = text.lines().enumerate().peekable();

    let (header, has_header) = match lines.peek() {
        Some((_, first)) => {
            let cells: Vec<&str> = first.split(',').collect();
            if cells.iter().any(|c| c.trim().parse::<f64>().is_err()) {
                let names: Vec<String> =
                    cells.iter().map(|c| c.trim().to_string()).collect();
                (names, true)
            } else {
                ((0..cells.len()).map(|j| format!("c{j}")).collect(), false)
            }
        }
        None => {
            return Err(Error::Schema(format!("{path_str} is empty")));
        }
    };
    if has_header {
        lines.next();
    }

    let label_idx = header
        .iter()
        .position(|name| name == &schema.label_col)
        .ok_or_else(|| {
            Error::Schema(format!(
                "label column '{}' not found in {path_str} (columns: {})",
                schema.label_col,
                header.join(", ")
            ))
        })?;
    let n_cols = header.len();

    let mut x_data = Vec::new();
    let mut y_values = Vec::new();
    let mut n_rows = 0usize;
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n_cols {
            return Err(Error::Parse {
                path: path_str,
                row: line_no + 1,
                col: 1,
                message: format!("expected {n_cols} cells, found {}", cells.len()),
            });
        }
        for (j, cell) in cells.iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                path: path_str.clone(),
                row: line_no + 1,
                col: j + 1,
                message: format!("non-numeric cell '{}'", cell.trim()),
            })?;
            if j == label_idx {
                y_values.push((line_no + 1, value));
            } else {
                x_data.push(value);
            }
        }
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(Error::Schema(format!("{path_str} has no data rows")));
    }

    let targets = match schema.task {
        TaskKind::Regression => Targets::Regression(Matrix::from_vec(
            n_rows,
            1,
            y_values.into_iter().map(|(_, v)| v).collect(),
        )),
        TaskKind::Classification => {
            let mut labels = Vec::with_capacity(n_rows);
            for (row, v) in y_values {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(Error::Parse {
                        path: path_str,
                        row,
                        col: label_idx + 1,
                        message: format!("label {v} is not a nonnegative integer"),
                    });
                }
                labels.push(v as usize);
            }
            Targets::Classification(labels)
        }
    };

    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != label_idx)
        .map(|(_, name)| name.clone())
        .collect();

    Ok(Dataset {
        x: Matrix::from_vec(n_rows, n_cols - 1, x_data),
        targets,
        feature_names,
        standardizer: None,
    })
}

/// Standardize features (and regression targets) to mean 0, sample std 1.
pub fn standardize(ds: &Dataset) -> Dataset {
    assert!(ds.n_points() >= 2, "standardize needs at least two rows");
    let stats = Standardizer::fit(&ds.x, &ds.targets);
    Dataset {
        x: stats.apply_x(&ds.x),
        targets: stats.apply_targets(&ds.targets),
        feature_names: ds.feature_names.clone(),
        standardizer: Some(stats),
    }
}

/// Seeded permutation split of a raw dataset. Standardization statistics
/// are computed on the training part only and applied to both parts.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> (Dataset, Dataset) {
    assert!(
        test_fraction > 0.0 && test_fraction < 1.0,
        "test fraction must be in (0, 1)"
    );
    assert!(
        ds.standardizer.is_none(),
        "split expects a raw (unstandardized) dataset"
    );
    let n = ds.n_points();
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let n_test = n_test.clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);
    let test_idx = &order[..n_test];
    let train_idx = &order[n_test..];

    let mut train = ds.gather(train_idx);
    let mut test = ds.gather(test_idx);
    let stats = Standardizer::fit(&train.x, &train.targets);
    train.x = stats.apply_x(&train.x);
    train.targets = stats.apply_targets(&train.targets);
    train.standardizer = Some(stats.clone());
    test.x = stats.apply_x(&test.x);
    test.targets = stats.apply_targets(&test.targets);
    test.standardizer = Some(stats);
    (train, test)
}

/// Task error (RMSE for regression on the standardized scale, error rate
/// for classification) and mean negative log-likelihood of the truth
/// under the predictive mixture.
pub fn metrics(pred: &PredictiveSummary, truth: &Targets) -> (f64, f64) {
    match (pred, truth) {
        (
            PredictiveSummary::Regression {
                mean,
                samples,
                noise_var,
                ..
            },
            Targets::Regression(y),
        ) => {
            assert_eq!(mean.shape(), y.shape(), "prediction/truth shape mismatch");
            let n = y.rows();
            let mut sq_err = 0.0;
            for i in 0..n {
                for (p, t) in mean.row(i).iter().zip(y.row(i)) {
                    sq_err += (p - t) * (p - t);
                }
            }
            let rmse = (sq_err / (n * y.cols()) as f64).sqrt();

            let log_lambda = noise_var.ln();
            let mut mnll = 0.0;
            for i in 0..n {
                let per_sample: Vec<f64> = samples
                    .iter()
                    .map(|f| gaussian_loglik(y.row(i), f.row(i), log_lambda))
                    .collect();
                mnll -= logsumexp(&per_sample) - (samples.len() as f64).ln();
            }
            (rmse, mnll / n as f64)
        }
        (
            PredictiveSummary::Classification { log_probs, labels },
            Targets::Classification(truth_labels),
        ) => {
            assert_eq!(labels.len(), truth_labels.len(), "prediction/truth size");
            let n = truth_labels.len();
            let errors = labels
                .iter()
                .zip(truth_labels)
                .filter(|(a, b)| a != b)
                .count();
            let mut mnll = 0.0;
            for (i, &label) in truth_labels.iter().enumerate() {
                assert!(label < log_probs.cols(), "label outside predicted classes");
                mnll -= log_probs.get(i, label);
            }
            (errors as f64 / n as f64, mnll / n as f64)
        }
        _ => panic!("prediction kind does not match target kind"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_round_trips_values() {
        let f = write_temp("a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
        let schema = CsvSchema {
            label_col: "y".into(),
            task: TaskKind::Regression,
        };
        let ds = load_csv(f.path(), &schema).unwrap();
        assert_eq!(ds.x, Matrix::from_vec(3, 2, vec![1., 2., 4., 5., 7., 8.]));
        match ds.targets {
            Targets::Regression(y) => {
                assert_eq!(y, Matrix::from_vec(3, 1, vec![3., 6., 9.]))
            }
            _ => panic!(),
        }
        assert_eq!(ds.feature_names, vec!["a", "b"]);
    }

    #[test]
    fn csv_without_header_uses_positional_names() {
        let f = write_temp("1,2,0\n3,4,1\n");
        let schema = CsvSchema {
            label_col: "c2".into(),
            task: TaskKind::Classification,
        };
        let ds = load_csv(f.path(), &schema).unwrap();
        assert_eq!(ds.targets, Targets::Classification(vec![0, 1]));
    }

    #[test]
    fn csv_missing_label_column_is_schema_error() {
        let f = write_temp("a,b\n1,2\n");
        let schema = CsvSchema {
            label_col: "y".into(),
            task: TaskKind::Regression,
        };
        match load_csv(f.path(), &schema) {
            Err(Error::Schema(msg)) => assert!(msg.contains("'y'")),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn csv_non_numeric_cell_reports_location() {
        let f = write_temp("a,y\n1,2\nx,4\n");
        let schema = CsvSchema {
            label_col: "y".into(),
            task: TaskKind::Regression,
        };
        match load_csv(f.path(), &schema) {
            Err(Error::Parse { row, col, .. }) => {
                assert_eq!((row, col), (3, 1));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_ragged_row_reports_location() {
        let f = write_temp("a,b,y\n1,2,3\n1,2\n");
        let schema = CsvSchema {
            label_col: "y".into(),
            task: TaskKind::Regression,
        };
        match load_csv(f.path(), &schema) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn standardize_simple_column() {
        let ds = Dataset::new(
            Matrix::from_vec(3, 1, vec![1.0, 2.0, 3.0]),
            Targets::Regression(Matrix::from_vec(3, 1, vec![0.0, 0.0, 0.0])),
        );
        let out = standardize(&ds);
        let col: Vec<f64> = out.x.iter().collect();
        assert!((col[0] + 1.0).abs() < 1e-12);
        assert!(col[1].abs() < 1e-12);
        assert!((col[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn standardize_constant_column_is_centered() {
        let ds = Dataset::new(
            Matrix::from_vec(3, 1, vec![5.0, 5.0, 5.0]),
            Targets::Classification(vec![0, 1, 0]),
        );
        let out = standardize(&ds);
        assert!(out.x.iter().all(|v| v == 0.0));
        assert_eq!(out.standardizer.unwrap().x_std, vec![1.0]);
    }

    #[test]
    fn standardize_inverse_recovers_originals() {
        let mut rng = Rng::new(1);
        let x = rng.randn(10, 3).map(|v| v * 4.0 + 2.0);
        let y = rng.randn(10, 2);
        let ds = Dataset::new(x.clone(), Targets::Regression(y.clone()));
        let out = standardize(&ds);
        let stats = out.standardizer.as_ref().unwrap();
        assert!(stats.invert_x(&out.x).max_abs_diff(&x) < 1e-12);
        match &out.targets {
            Targets::Regression(sy) => {
                assert!(stats.invert_y(sy).max_abs_diff(&y) < 1e-12)
            }
            _ => panic!(),
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let mut rng = Rng::new(2);
        let ds = Dataset::new(
            rng.randn(10, 2),
            Targets::Regression(rng.randn(10, 1)),
        );
        let (train, test) = split(&ds, 0.2, 7);
        assert_eq!(train.n_points(), 8);
        assert_eq!(test.n_points(), 2);
        let (train2, test2) = split(&ds, 0.2, 7);
        assert_eq!(train, train2);
        assert_eq!(test, test2);
    }

    #[test]
    fn split_is_disjoint_and_exhaustive() {
        let n = 23;
        let x = Matrix::from_fn(n, 1, |i, _| i as f64);
        let ds = Dataset::new(x, Targets::Classification(vec![0; n]));
        let (train, test) = split(&ds, 0.3, 3);
        let stats = train.standardizer.as_ref().unwrap();
        let mut seen: Vec<i64> = train
            .standardizer
            .as_ref()
            .map(|_| {
                stats
                    .invert_x(&train.x)
                    .iter()
                    .chain(stats.invert_x(&test.x).iter())
                    .map(|v| v.round() as i64)
                    .collect()
            })
            .unwrap();
        seen.sort_unstable();
        assert_eq!(seen, (0..n as i64).collect::<Vec<_>>());
    }

    #[test]
    fn metrics_perfect_classification() {
        let pred = PredictiveSummary::Classification {
            log_probs: Matrix::from_vec(
                2,
                2,
                vec![0.9f64.ln(), 0.1f64.ln(), 0.2f64.ln(), 0.8f64.ln()],
            ),
            labels: vec![0, 1],
        };
        let (err, _) = metrics(&pred, &Targets::Classification(vec![0, 1]));
        assert_eq!(err, 0.0);
    }

    #[test]
    fn metrics_uniform_probabilities_give_log_k() {
        let k = 4;
        let log_probs = Matrix::from_fn(3, k, |_, _| (1.0 / k as f64).ln());
        let pred = PredictiveSummary::Classification {
            log_probs,
            labels: vec![0, 0, 0],
        };
        let (_, mnll) = metrics(&pred, &Targets::Classification(vec![1, 2, 3]));
        assert!((mnll - (k as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn metrics_regression_unit_peak_mnll_is_zero() {
        let y = Matrix::from_vec(3, 1, vec![0.5, -1.0, 2.0]);
        let noise_var = 1.0 / (2.0 * std::f64::consts::PI);
        let pred = PredictiveSummary::Regression {
            mean: y.clone(),
            var: Matrix::from_fn(3, 1, |_, _| noise_var),
            samples: vec![y.clone()],
            noise_var,
        };
        let (rmse, mnll) = metrics(&pred, &Targets::Regression(y));
        assert_eq!(rmse, 0.0);
        assert!(mnll.abs() < 1e-12);
    }

    #[test]
    fn metrics_are_permutation_invariant() {
        let mut rng = Rng::new(3);
        let y = rng.randn(6, 1);
        let sample = rng.randn(6, 1);
        let pred = PredictiveSummary::Regression {
            mean: sample.clone(),
            var: Matrix::from_fn(6, 1, |_, _| 1.0),
            samples: vec![sample.clone()],
            noise_var: 1.0,
        };
        let (rmse, mnll) = metrics(&pred, &Targets::Regression(y.clone()));

        let perm: Vec<usize> = vec![3, 1, 5, 0, 2, 4];
        let pred_p = PredictiveSummary::Regression {
            mean: sample.gather_rows(&perm),
            var: Matrix::from_fn(6, 1, |_, _| 1.0),
            samples: vec![sample.gather_rows(&perm)],
            noise_var: 1.0,
        };
        let (rmse_p, mnll_p) =
            metrics(&pred_p, &Targets::Regression(y.gather_rows(&perm)));
        assert!((rmse - rmse_p).abs() < 1e-12);
        assert!((mnll - mnll_p).abs() < 1e-12);
    }

    #[test]
    fn mnll_log_mean_exp_matches_naive_mean_of_densities() {
        let mut rng = Rng::new(4);
        let y = rng.randn(4, 1);
        let samples: Vec<Matrix> = (0..5).map(|_| rng.randn(4, 1)).collect();
        let noise_var = 0.8;
        let pred = PredictiveSummary::Regression {
            mean: samples[0].clone(),
            var: Matrix::from_fn(4, 1, |_, _| noise_var),
            samples: samples.clone(),
            noise_var,
        };
        let (_, mnll) = metrics(&pred, &Targets::Regression(y.clone()));

        let mut naive = 0.0;
        for i in 0..4 {
            let mean_density: f64 = samples
                .iter()
                .map(|f| gaussian_loglik(y.row(i), f.row(i), noise_var.ln()).exp())
                .sum::<f64>()
                / 5.0;
            naive -= mean_density.ln();
        }
        assert!((mnll - naive / 4.0).abs() < 1e-10);
    }
}
