//! Error matrices and agreement statistics for classified label maps.
//!
//! Matrix rows are the classifier output, columns the reference data.
//! Unclassified predictions are excluded from the matrix and counted
//! separately. Kappa is computed with exact integer numerator and
//! denominator, with one final division.

use std::path::Path;

use thiserror::Error;

use crate::raster::{check_class_name, LabelMap};

#[derive(Debug, Error)]
pub enum AccuracyError {
    #[error("maps have different dimensions: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("reference map contains an unclassified pixel at index {0}")]
    UnclassifiedReference(usize),
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("matrix has no observations")]
    EmptyMatrix,
    #[error("kappa is undefined: denominator N^2 - sum(row_i * col_i) is zero")]
    DegenerateKappa,
    #[error("{path}: {msg}")]
    Malformed {
        path: std::path::PathBuf,
        msg: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// r x r predicted-vs-reference count matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorMatrix {
    classes: Vec<String>,
    counts: Vec<Vec<u64>>,
    excluded_unclassified: u64,
}

impl ErrorMatrix {
    pub fn new(
        classes: Vec<String>,
        counts: Vec<Vec<u64>>,
        excluded_unclassified: u64,
    ) -> Result<Self, AccuracyError> {
        if classes.is_empty() {
            return Err(AccuracyError::InvalidMatrix("no classes".to_string()));
        }
        for name in &classes {
            check_class_name(name).map_err(AccuracyError::InvalidMatrix)?;
        }
        let mut seen = std::collections::BTreeSet::new();
        if !classes.iter().all(|c| seen.insert(c)) {
            return Err(AccuracyError::InvalidMatrix("duplicate class".to_string()));
        }
        if counts.len() != classes.len() || counts.iter().any(|row| row.len() != classes.len()) {
            return Err(AccuracyError::InvalidMatrix(format!(
                "counts must be {0}x{0}",
                classes.len()
            )));
        }
        Ok(ErrorMatrix {
            classes,
            counts,
            excluded_unclassified,
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn count(&self, predicted: usize, reference: usize) -> u64 {
        self.counts[predicted][reference]
    }

    pub fn excluded_unclassified(&self) -> u64 {
        self.excluded_unclassified
    }

    /// N: total observations in the matrix.
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn col_totals(&self) -> Vec<u64> {
        (0..self.classes.len())
            .map(|j| self.counts.iter().map(|row| row[j]).sum())
            .collect()
    }

    /// CSV form: a header row of class names, then one count row per
    /// predicted class.
    pub fn to_csv_string(&self) -> String {
        let mut out = self.classes.join(",");
        out.push('\n');
        for row in &self.counts {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self, AccuracyError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| AccuracyError::InvalidMatrix("empty csv".to_string()))?;
        let classes: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
        let mut counts = Vec::with_capacity(classes.len());
        for (i, line) in lines.enumerate() {
            let row: Result<Vec<u64>, _> =
                line.split(',').map(|c| c.trim().parse::<u64>()).collect();
            let row =
                row.map_err(|_| AccuracyError::InvalidMatrix(format!("row {}: bad count", i + 1)))?;
            counts.push(row);
        }
        ErrorMatrix::new(classes, counts, 0)
    }

    pub fn from_csv_file(path: &Path) -> Result<Self, AccuracyError> {
        let text = std::fs::read_to_string(path).map_err(|source| AccuracyError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_csv_str(&text).map_err(|e| AccuracyError::Malformed {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<(), AccuracyError> {
        std::fs::write(path, self.to_csv_string()).map_err(|source| AccuracyError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Counts predicted-vs-reference pairs over two label maps. `classes` fixes
/// the matrix order; unclassified predictions are excluded from the matrix.
pub fn build_matrix(
    predicted: &LabelMap,
    reference: &LabelMap,
    classes: &[String],
) -> Result<ErrorMatrix, AccuracyError> {
    if (predicted.width(), predicted.height()) != (reference.width(), reference.height()) {
        return Err(AccuracyError::DimensionMismatch(
            predicted.width(),
            predicted.height(),
            reference.width(),
            reference.height(),
        ));
    }
    let index_of = |name: &str| {
        classes
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| AccuracyError::UnknownLabel(name.to_string()))
    };
    let pred_map: Vec<Option<usize>> = predicted
        .classes()
        .iter()
        .map(|c| classes.iter().position(|k| k == c))
        .collect();
    let ref_map: Result<Vec<usize>, AccuracyError> =
        reference.classes().iter().map(|c| index_of(c)).collect();
    let ref_map = ref_map?;

    let r = classes.len();
    let mut counts = vec![vec![0u64; r]; r];
    let mut excluded = 0u64;
    for (idx, (p, t)) in predicted
        .labels()
        .iter()
        .zip(reference.labels())
        .enumerate()
    {
        let t = t.ok_or(AccuracyError::UnclassifiedReference(idx))?;
        let col = ref_map[usize::from(t)];
        match p {
            None => excluded += 1,
            Some(p) => {
                let row = pred_map[usize::from(*p)].ok_or_else(|| {
                    AccuracyError::UnknownLabel(predicted.classes()[usize::from(*p)].clone())
                })?;
                counts[row][col] += 1;
            }
        }
    }
    ErrorMatrix::new(classes.to_vec(), counts, excluded)
}

/// The kappa coefficient of agreement:
/// (N * trace - sum(row_i * col_i)) / (N^2 - sum(row_i * col_i)).
pub fn kappa(matrix: &ErrorMatrix) -> Result<f64, AccuracyError> {
    let n = matrix.total();
    if n == 0 {
        return Err(AccuracyError::EmptyMatrix);
    }
    let rows = matrix.row_totals();
    let cols = matrix.col_totals();
    let marginal: i128 = rows
        .iter()
        .zip(&cols)
        .map(|(r, c)| i128::from(*r) * i128::from(*c))
        .sum();
    let n = i128::from(n);
    let numerator = n * i128::from(matrix.trace()) - marginal;
    let denominator = n * n - marginal;
    if denominator == 0 {
        return Err(AccuracyError::DegenerateKappa);
    }
    Ok(numerator as f64 / denominator as f64)
}

/// trace / N.
pub fn overall_accuracy(matrix: &ErrorMatrix) -> Result<f64, AccuracyError> {
    let n = matrix.total();
    if n == 0 {
        return Err(AccuracyError::EmptyMatrix);
    }
    Ok(matrix.trace() as f64 / n as f64)
}

/// Producer (column-wise) and user (row-wise) accuracy for one class;
/// `None` when the corresponding total is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassAccuracy {
    pub class: String,
    pub producer: Option<f64>,
    pub user: Option<f64>,
}

pub fn producer_user_accuracy(matrix: &ErrorMatrix) -> Result<Vec<ClassAccuracy>, AccuracyError> {
    if matrix.total() == 0 {
        return Err(AccuracyError::EmptyMatrix);
    }
    let rows = matrix.row_totals();
    let cols = matrix.col_totals();
    Ok(matrix
        .classes()
        .iter()
        .enumerate()
        .map(|(i, class)| ClassAccuracy {
            class: class.clone(),
            producer: (cols[i] > 0).then(|| matrix.count(i, i) as f64 / cols[i] as f64),
            user: (rows[i] > 0).then(|| matrix.count(i, i) as f64 / rows[i] as f64),
        })
        .collect())
}

/// All agreement statistics in one bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub kappa: f64,
    pub overall_accuracy: f64,
    pub per_class: Vec<ClassAccuracy>,
}

pub fn accuracy_report(matrix: &ErrorMatrix) -> Result<AccuracyReport, AccuracyError> {
    Ok(AccuracyReport {
        kappa: kappa(matrix)?,
        overall_accuracy: overall_accuracy(matrix)?,
        per_class: producer_user_accuracy(matrix)?,
    })
}

#[cfg(test)]
pub(crate) fn reference_matrix() -> ErrorMatrix {
    // five-class assessment matrix used as a regression fixture
    let classes = ["Vegetation", "Urban", "Rocky", "Water", "Barren"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let counts = vec![
        vec![127, 9, 0, 0, 2],
        vec![0, 88, 1, 0, 32],
        vec![6, 2, 176, 1, 17],
        vec![0, 0, 3, 69, 0],
        vec![17, 91, 20, 0, 119],
    ];
    ErrorMatrix::new(classes, counts, 0).unwrap()
}
