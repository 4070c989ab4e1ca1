use crate::bootstrap::{bootstrap_sample, BootstrapSample};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::grow::{grow_tree, GrowConfig};
use crate::hat::{hat_matrix, HatMatrix};
use crate::matrix::Matrix;
use crate::parallel::{map_indexed, map_indexed_serial};
use crate::rng::tree_rng;
use crate::tree::{RegressionTree, TreeKind};
use crate::weights::WeightVector;
use serde::{Deserialize, Serialize};

/// How the forest's tree weights were chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightMethod {
    #[serde(rename = "rf")]
    Rf,
    #[serde(rename = "1step")]
    OneStep,
    #[serde(rename = "2steps")]
    TwoSteps,
    #[serde(rename = "wrf")]
    Wrf,
    #[serde(rename = "crf")]
    Crf,
}

impl WeightMethod {
    pub fn name(&self) -> &'static str {
        match self {
            WeightMethod::Rf => "rf",
            WeightMethod::OneStep => "1step",
            WeightMethod::TwoSteps => "2steps",
            WeightMethod::Wrf => "wrf",
            WeightMethod::Crf => "crf",
        }
    }
}

impl std::fmt::Display for WeightMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// M_n trees with their bootstrap samples, optional hat matrices, and the
/// current weight vector. Immutable after construction apart from
/// `build_hats` and `set_weights`.
#[derive(Debug, Clone)]
pub struct Forest {
    kind: TreeKind,
    p: usize,
    trees: Vec<RegressionTree>,
    samples: Vec<BootstrapSample>,
    hats: Option<Vec<HatMatrix>>,
    weights: WeightVector,
    method: WeightMethod,
}

impl Forest {
    /// Grow `m_trees` trees on independent bootstraps. Per-tree RNG
    /// streams derive from `master_seed` plus the tree index, so the
    /// result does not depend on build order or parallelism.
    pub fn grow(
        data: &Dataset,
        cfg: &GrowConfig,
        m_trees: usize,
        master_seed: u64,
    ) -> Result<Self> {
        Self::grow_inner(data, cfg, m_trees, master_seed, false)
    }

    /// Sequential growth regardless of the `parallel` feature.
    pub fn grow_serial(
        data: &Dataset,
        cfg: &GrowConfig,
        m_trees: usize,
        master_seed: u64,
    ) -> Result<Self> {
        Self::grow_inner(data, cfg, m_trees, master_seed, true)
    }

    fn grow_inner(
        data: &Dataset,
        cfg: &GrowConfig,
        m_trees: usize,
        master_seed: u64,
        force_serial: bool,
    ) -> Result<Self> {
        if m_trees == 0 {
            return Err(Error::InvalidArgument(
                "forest needs at least one tree".into(),
            ));
        }
        cfg.validate(data.p())?;
        let grow_one = |m: usize| -> Result<(RegressionTree, BootstrapSample)> {
            let mut rng = tree_rng(master_seed, m);
            let sample = bootstrap_sample(data.n(), &mut rng)?;
            let tree = grow_tree(data, &sample, cfg, &mut rng)?;
            Ok((tree, sample))
        };
        let grown = if force_serial {
            map_indexed_serial(m_trees, grow_one)
        } else {
            map_indexed(m_trees, grow_one)
        };
        let mut trees = Vec::with_capacity(m_trees);
        let mut samples = Vec::with_capacity(m_trees);
        for g in grown {
            let (t, s) = g?;
            trees.push(t);
            samples.push(s);
        }
        Ok(Self {
            kind: cfg.kind,
            p: data.p(),
            trees,
            samples,
            hats: None,
            weights: WeightVector::equal(m_trees),
            method: WeightMethod::Rf,
        })
    }

    /// Assemble a forest from parts (deserialized models, hand-built toys).
    pub fn from_parts(
        kind: TreeKind,
        p: usize,
        trees: Vec<RegressionTree>,
        samples: Vec<BootstrapSample>,
        weights: WeightVector,
        method: WeightMethod,
    ) -> Result<Self> {
        if trees.is_empty() || trees.len() != samples.len() || trees.len() != weights.len() {
            return Err(Error::Dimension(format!(
                "{} trees, {} samples, {} weights",
                trees.len(),
                samples.len(),
                weights.len()
            )));
        }
        if p == 0 {
            return Err(Error::Dimension("forest needs at least one feature".into()));
        }
        Ok(Self {
            kind,
            p,
            trees,
            samples,
            hats: None,
            weights,
            method,
        })
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.trees.len()
    }

    #[inline]
    pub fn kind(&self) -> TreeKind {
        self.kind
    }

    #[inline]
    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    #[inline]
    pub fn samples(&self) -> &[BootstrapSample] {
        &self.samples
    }

    #[inline]
    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    #[inline]
    pub fn method(&self) -> WeightMethod {
        self.method
    }

    pub fn set_weights(&mut self, weights: WeightVector, method: WeightMethod) -> Result<()> {
        if weights.len() != self.m() {
            return Err(Error::Dimension(format!(
                "{} weights for {} trees",
                weights.len(),
                self.m()
            )));
        }
        self.weights = weights;
        self.method = method;
        Ok(())
    }

    /// Build per-tree hat matrices over the training data (idempotent).
    pub fn build_hats(&mut self, data: &Dataset) -> Result<()> {
        if self.hats.is_some() {
            return Ok(());
        }
        let built = map_indexed(self.m(), |m| hat_matrix(&self.trees[m], data));
        let mut hats = Vec::with_capacity(self.m());
        for h in built {
            hats.push(h?);
        }
        self.hats = Some(hats);
        Ok(())
    }

    /// Sequential variant of `build_hats` for the bench suite.
    pub fn build_hats_serial(&mut self, data: &Dataset) -> Result<()> {
        if self.hats.is_some() {
            return Ok(());
        }
        let built = map_indexed_serial(self.m(), |m| hat_matrix(&self.trees[m], data));
        let mut hats = Vec::with_capacity(self.m());
        for h in built {
            hats.push(h?);
        }
        self.hats = Some(hats);
        Ok(())
    }

    pub fn hats(&self) -> Option<&[HatMatrix]> {
        self.hats.as_deref()
    }

    /// Per-tree predictions for the rows of `x`: one vector per tree.
    pub fn per_tree_predictions(&self, x: &Matrix) -> Result<Vec<Vec<f64>>> {
        self.check_cols(x)?;
        Ok(map_indexed(self.m(), |m| {
            x.iter_rows()
                .map(|row| self.trees[m].predict_row(row))
                .collect()
        }))
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    fn check_cols(&self, x: &Matrix) -> Result<()> {
        if x.ncols() != self.p {
            return Err(Error::Dimension(format!(
                "{} columns, model expects {}",
                x.ncols(),
                self.p
            )));
        }
        Ok(())
    }
}

/// Weighted forest prediction: for each row of `x`, the convex
/// combination sum_m w_m * (leaf mean reached in tree m).
pub fn aggregate_predict(forest: &Forest, x: &Matrix) -> Result<Vec<f64>> {
    let per_tree = forest.per_tree_predictions(x)?;
    Ok(combine_predictions(&per_tree, forest.weights().as_slice()))
}

/// Convex combination of per-tree prediction vectors, summing over trees
/// in index order.
pub fn combine_predictions(per_tree: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    debug_assert_eq!(per_tree.len(), weights.len());
    let n = per_tree.first().map_or(0, |v| v.len());
    let mut out = vec![0.0; n];
    for (preds, &w) in per_tree.iter().zip(weights) {
        for (o, &v) in out.iter_mut().zip(preds) {
            *o += w * v;
        }
    }
    out
}
