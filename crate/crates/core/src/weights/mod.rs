mod competitors;
mod criteria;
mod qp;
mod solver;

pub use competitors::{
    cesaro_weights_exact, crf_weights, tpe_star, tpe_star_all, wrf_weights, wrf_weights_variant,
    WrfVariant,
};
pub use criteria::{CriterionContext, QpProblem};
pub use qp::{project_simplex, solve_quadratic_simplex, SolveReport};
pub use solver::{solve_one_step, solve_two_steps};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A point on the simplex over the trees: entries nonnegative, summing to
/// one within 1e-8. Serializes as a plain array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector {
    w: Vec<f64>,
}

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidArgument("empty weight vector".into()));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite weight".into()));
        }
        if let Some(&min) = w.iter().min_by(|a, b| a.partial_cmp(b).unwrap()) {
            if min < -1e-12 {
                return Err(Error::InvalidArgument(format!("negative weight {min}")));
            }
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidArgument(format!("weights sum to {sum}")));
        }
        let w = w.into_iter().map(|v| v.max(0.0)).collect();
        Ok(Self { w })
    }

    /// Equal weights 1/m.
    pub fn equal(m: usize) -> Self {
        assert!(m > 0);
        Self {
            w: vec![1.0 / m as f64; m],
        }
    }

    /// Clamp tiny negatives to zero, snap coordinates below 1e-12 to zero,
    /// and renormalize to sum exactly one.
    pub fn from_unnormalized(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::InvalidArgument("empty weight vector".into()));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite weight".into()));
        }
        let mut w: Vec<f64> = raw
            .iter()
            .map(|&v| if v < 1e-12 { 0.0 } else { v })
            .collect();
        let sum: f64 = w.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidArgument("weights sum to zero".into()));
        }
        for v in &mut w {
            *v /= sum;
        }
        Ok(Self { w })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.w.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.w.clone()
    }

    #[inline]
    pub fn get(&self, m: usize) -> f64 {
        self.w[m]
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;
    fn try_from(w: Vec<f64>) -> Result<Self> {
        WeightVector::new(w)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Vec<f64> {
        w.w
    }
}
