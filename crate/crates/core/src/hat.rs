use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::tree::RegressionTree;

/// Row-sparse n x n linear smoother of one tree over the training rows.
/// Row i holds (column, value) pairs with value h_j / n_l for the members
/// j of the leaf reached by x_i; every row sums to 1. Diagonal values are
/// cached.
#[derive(Debug, Clone, PartialEq)]
pub struct HatMatrix {
    rows: Vec<Vec<(u32, f64)>>,
    diag: Vec<f64>,
}

impl HatMatrix {
    #[inline]
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[(u32, f64)] {
        &self.rows[i]
    }

    #[inline]
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn trace(&self) -> f64 {
        self.diag.iter().sum()
    }

    pub fn max_diag(&self) -> f64 {
        self.diag.iter().cloned().fold(0.0, f64::max)
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|&(_, v)| v).sum()
    }

    /// P y: the tree's fitted values over the training rows.
    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.n());
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, v)| v * y[j as usize]).sum())
            .collect()
    }
}

/// Build the hat matrix of a tree over its training data: drop each row
/// down the tree and emit h_j / n_l for the members of the reached leaf.
pub fn hat_matrix(tree: &RegressionTree, data: &Dataset) -> Result<HatMatrix> {
    let n = data.n();
    let mut rows = Vec::with_capacity(n);
    let mut diag = vec![0.0; n];
    for (i, d) in diag.iter_mut().enumerate() {
        let leaf = tree.leaf_for(data.x().row(i));
        let n_l = leaf.weight() as f64;
        if n_l <= 0.0 {
            return Err(Error::InvalidArgument("leaf with zero weight".into()));
        }
        let row: Vec<(u32, f64)> = leaf
            .members
            .iter()
            .map(|&(j, h)| (j, h as f64 / n_l))
            .collect();
        if let Some(&(_, v)) = row.iter().find(|&&(j, _)| j as usize == i) {
            *d = v;
        }
        rows.push(row);
    }
    Ok(HatMatrix { rows, diag })
}

/// Row i of sum_m w_m P_m, merged into sorted (column, value) pairs.
pub fn combined_row(hats: &[HatMatrix], weights: &[f64], i: usize) -> Vec<(u32, f64)> {
    debug_assert_eq!(hats.len(), weights.len());
    let mut merged: std::collections::BTreeMap<u32, f64> = std::collections::BTreeMap::new();
    for (hat, &w) in hats.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for &(j, v) in hat.row(i) {
            *merged.entry(j).or_insert(0.0) += w * v;
        }
    }
    merged.into_iter().collect()
}
