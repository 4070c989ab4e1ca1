use anyhow::{bail, Context, Result};
use optforest::tree::{Node, RegressionTree, TreeKind};
use optforest::weights::{SolveReport, WeightVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// On-disk model: the forest's trees in canonical node form, the selected
/// weights, and how they were chosen.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub method: String,
    pub tree_kind: TreeKind,
    pub weights: WeightVector,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solve_report: Option<SolveReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub feature_names: Vec<String>,
    pub config: ModelConfig,
    pub trees: Vec<Node>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    pub trees: usize,
    pub q: usize,
    pub n_min: u32,
    pub seed: u64,
}

impl ModelFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)
            .with_context(|| format!("writing model to {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading model from {}", path.display()))?;
        let model: ModelFile = serde_json::from_str(&text)?;
        if model.schema_version != 1 {
            bail!("unsupported model schema_version {}", model.schema_version);
        }
        if model.trees.len() != model.weights.len() {
            bail!(
                "{} trees but {} weights in {}",
                model.trees.len(),
                model.weights.len(),
                path.display()
            );
        }
        Ok(model)
    }

    pub fn regression_trees(&self) -> Result<Vec<RegressionTree>> {
        self.trees
            .iter()
            .map(|n| RegressionTree::new(self.tree_kind, n.clone()).map_err(anyhow::Error::from))
            .collect()
    }
}
