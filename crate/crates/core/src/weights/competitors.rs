use super::WeightVector;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::forest::Forest;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

/// Mean absolute out-of-bag prediction error of one tree: the tree's leaf
/// mean against the held-out response, averaged over the instances with
/// zero bootstrap multiplicity.
pub fn tpe_star(tree_index: usize, forest: &Forest, data: &Dataset) -> Result<f64> {
    let tree = &forest.trees()[tree_index];
    let sample = &forest.samples()[tree_index];
    let mut total = 0.0;
    let mut count = 0usize;
    for i in sample.oob_indices() {
        total += (tree.predict_row(data.x().row(i)) - data.y()[i]).abs();
        count += 1;
    }
    if count == 0 {
        return Err(Error::NoOob(tree_index));
    }
    Ok(total / count as f64)
}

/// tPE* for every tree; None where a tree has no out-of-bag instances.
pub fn tpe_star_all(forest: &Forest, data: &Dataset) -> Vec<Option<f64>> {
    (0..forest.m())
        .map(|m| tpe_star(m, forest, data).ok())
        .collect()
}

/// Fill NoOOB gaps with the mean tPE* of the remaining trees. None when
/// every tree lacks out-of-bag instances.
fn tpe_with_fallback(forest: &Forest, data: &Dataset) -> Option<Vec<f64>> {
    let raw = tpe_star_all(forest, data);
    let known: Vec<f64> = raw.iter().flatten().copied().collect();
    if known.is_empty() {
        return None;
    }
    let mean = known.iter().sum::<f64>() / known.len() as f64;
    Some(raw.into_iter().map(|v| v.unwrap_or(mean)).collect())
}

/// The inverse-error weight family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WrfVariant {
    /// w_m = 1 - tPE*_m (negatives clamp to zero)
    OneMinus,
    /// w_m = exp(1 / tPE*_m)
    ExpInverse,
    /// w_m = (1 / tPE*_m)^λ
    PowerInverse,
}

/// Out-of-bag inverse-error weights, power form w_m ∝ (tPE*_m)^(-λ).
/// Trees with zero error split all the mass uniformly among themselves;
/// trees without OOB instances take the mean tPE* of the rest.
pub fn wrf_weights(forest: &Forest, data: &Dataset, lambda: f64) -> Result<WeightVector> {
    wrf_weights_variant(forest, data, WrfVariant::PowerInverse, lambda)
}

pub fn wrf_weights_variant(
    forest: &Forest,
    data: &Dataset,
    variant: WrfVariant,
    lambda: f64,
) -> Result<WeightVector> {
    let m = forest.m();
    let Some(tpe) = tpe_with_fallback(forest, data) else {
        return Ok(WeightVector::equal(m));
    };

    match variant {
        WrfVariant::PowerInverse | WrfVariant::ExpInverse => {
            let zeros: Vec<usize> = (0..m).filter(|&k| tpe[k] == 0.0).collect();
            if !zeros.is_empty() {
                // limit of the inverse-error weights: perfect trees share
                // all the mass
                let mut w = vec![0.0; m];
                for &k in &zeros {
                    w[k] = 1.0 / zeros.len() as f64;
                }
                return WeightVector::new(w);
            }
            let raw: Vec<f64> = match variant {
                WrfVariant::PowerInverse => {
                    if !lambda.is_finite() || lambda <= 0.0 {
                        return Err(Error::InvalidArgument(format!(
                            "lambda = {lambda} must be positive"
                        )));
                    }
                    tpe.iter().map(|&t| t.powf(-lambda)).collect()
                }
                // shift-invariant form of exp(1/t) to avoid overflow
                WrfVariant::ExpInverse => {
                    let top = tpe
                        .iter()
                        .map(|&t| 1.0 / t)
                        .fold(f64::NEG_INFINITY, f64::max);
                    tpe.iter().map(|&t| (1.0 / t - top).exp()).collect()
                }
                WrfVariant::OneMinus => unreachable!(),
            };
            WeightVector::from_unnormalized(raw)
        }
        WrfVariant::OneMinus => {
            let raw: Vec<f64> = tpe.iter().map(|&t| (1.0 - t).max(0.0)).collect();
            if raw.iter().sum::<f64>() <= 0.0 {
                return Ok(WeightVector::equal(m));
            }
            WeightVector::from_unnormalized(raw)
        }
    }
}

/// Exact Cesàro rank weights for m trees: the tree ranked r (1 = best)
/// gets sum_{k=r}^{m} 1/k, normalized by the total. Returned by rank
/// position, as rationals.
pub fn cesaro_weights_exact(m: usize) -> Vec<BigRational> {
    assert!(m > 0);
    let one = |k: usize| BigRational::new(BigInt::from(1), BigInt::from(k as i64));
    // tail sums: raw[r-1] = 1/r + 1/(r+1) + ... + 1/m
    let mut raw = vec![BigRational::zero(); m];
    let mut tail = BigRational::zero();
    for r in (1..=m).rev() {
        tail += one(r);
        raw[r - 1] = tail.clone();
    }
    let total: BigRational = raw.iter().cloned().sum();
    raw.into_iter().map(|v| v / total.clone()).collect()
}

/// Cesàro-weighted forest: rank trees by tPE* ascending (ties broken by
/// tree index) and assign the exact rank weights.
pub fn crf_weights(forest: &Forest, data: &Dataset) -> Result<WeightVector> {
    let m = forest.m();
    let Some(tpe) = tpe_with_fallback(forest, data) else {
        return Ok(WeightVector::equal(m));
    };
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| tpe[a].partial_cmp(&tpe[b]).unwrap().then(a.cmp(&b)));
    let by_rank = cesaro_weights_exact(m);
    let mut w = vec![0.0; m];
    for (rank, &tree) in order.iter().enumerate() {
        w[tree] = by_rank[rank].to_f64().expect("cesaro weight fits in f64");
    }
    WeightVector::new(w)
}
