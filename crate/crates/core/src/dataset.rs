use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A learning sample: an n x p predictor matrix, a response vector of
/// length n, and column labels. All values must be finite; ingestion is
/// expected to reject or impute missing values before construction.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Matrix,
    y: Vec<f64>,
    names: Vec<String>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>, names: Vec<String>) -> Result<Self> {
        if y.len() != x.nrows() {
            return Err(Error::Dimension(format!(
                "response has {} entries, predictors have {} rows",
                y.len(),
                x.nrows()
            )));
        }
        if names.len() != x.ncols() {
            return Err(Error::Dimension(format!(
                "{} column names for {} columns",
                names.len(),
                x.ncols()
            )));
        }
        if x.has_non_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::MissingValues(
                "dataset contains NaN or infinite values".into(),
            ));
        }
        Ok(Self { x, y, names })
    }

    /// Convenience constructor with generated column labels x1..xp.
    pub fn from_parts(x: Matrix, y: Vec<f64>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(x, y, names)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    #[inline]
    pub fn x(&self) -> &Matrix {
        &self.x
    }

    #[inline]
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// New dataset keeping only the given rows (benchmark splits).
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let picked: Vec<Vec<f64>> = rows.iter().map(|&i| self.x.row(i).to_vec()).collect();
        let y: Vec<f64> = rows.iter().map(|&i| self.y[i]).collect();
        Dataset::new(Matrix::from_rows(picked)?, y, self.names.clone())
    }
}
