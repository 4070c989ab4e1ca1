use crate::bootstrap::bootstrap_sample;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::grow::{grow_cart_with_gains, GrowConfig};
use crate::parallel::map_indexed;
use crate::rng::tree_rng;
use crate::tree::TreeKind;

/// Variable importance: total SSE decrease from splitting on each
/// feature, accumulated over the splits of `m_trees` CART trees grown on
/// independent bootstraps and averaged over trees. Entries are
/// nonnegative.
pub fn variable_importance(
    data: &Dataset,
    cfg: &GrowConfig,
    m_trees: usize,
    master_seed: u64,
) -> Result<Vec<f64>> {
    if cfg.kind != TreeKind::Cart {
        return Err(Error::InvalidArgument(
            "variable importance is computed from CART trees".into(),
        ));
    }
    cfg.validate(data.p())?;
    if m_trees == 0 {
        return Err(Error::InvalidArgument(
            "importance needs at least one tree".into(),
        ));
    }
    let per_tree: Vec<Result<Vec<f64>>> = map_indexed(m_trees, |m| {
        let mut rng = tree_rng(master_seed, m);
        let sample = bootstrap_sample(data.n(), &mut rng)?;
        let mut gains = vec![0.0; data.p()];
        grow_cart_with_gains(data, &sample, cfg, &mut rng, Some(&mut gains))?;
        Ok(gains)
    });
    let mut total = vec![0.0; data.p()];
    for gains in per_tree {
        for (t, g) in total.iter_mut().zip(gains?) {
            *t += g;
        }
    }
    for t in &mut total {
        *t = (*t / m_trees as f64).max(0.0);
    }
    Ok(total)
}

/// Probability sequence from importances: negatives clamp to zero; an
/// all-zero vector falls back to uniform; otherwise normalize to sum 1.
pub fn prob_sequence_from_importance(imp: &[f64]) -> Vec<f64> {
    debug_assert!(imp.iter().all(|v| v.is_finite()));
    let clamped: Vec<f64> = imp.iter().map(|&v| v.max(0.0)).collect();
    let sum: f64 = clamped.iter().sum();
    if sum <= 0.0 {
        return vec![1.0 / imp.len() as f64; imp.len()];
    }
    clamped.into_iter().map(|v| v / sum).collect()
}
