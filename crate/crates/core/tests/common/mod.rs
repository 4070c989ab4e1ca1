//! Shared fixtures for the integration and acceptance suites.

#![allow(dead_code)]

use optforest::dataset::Dataset;
use optforest::forest::Forest;
use optforest::grow::GrowConfig;
use optforest::matrix::Matrix;
use optforest::rng::derived_rng;
use optforest::tree::TreeKind;
use optforest::weights::CriterionContext;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct ToyForest {
    pub data: Dataset,
    pub forest: Forest,
    pub ctx: CriterionContext,
}

/// Small random forest with hats and criterion context built: m trees on
/// n points with p features, alternating CART/SUT by seed parity.
pub fn toy_forest(seed: u64) -> ToyForest {
    let mut rng = derived_rng(seed, 100, 0);
    let m = rng.random_range(2..=4);
    let n = rng.random_range(12..=30);
    let p = rng.random_range(1..=3);
    let kind = if seed.is_multiple_of(2) {
        TreeKind::Cart
    } else {
        TreeKind::Sut
    };
    toy_forest_sized(seed, m, n, p, kind)
}

pub fn toy_forest_sized(seed: u64, m: usize, n: usize, p: usize, kind: TreeKind) -> ToyForest {
    let mut rng = derived_rng(seed, 101, 0);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| rng.random::<f64>()).collect())
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| {
            let signal: f64 = r
                .iter()
                .enumerate()
                .map(|(j, &v)| (j + 1) as f64 * 2.0 * v)
                .sum();
            signal + 0.4 * (rng.random::<f64>() - 0.5)
        })
        .collect();
    let data = Dataset::from_parts(Matrix::from_rows(rows).unwrap(), y).unwrap();
    let cfg = match kind {
        TreeKind::Cart => GrowConfig::cart(1.max(p / 2), 4),
        TreeKind::Sut => GrowConfig::sut(1.max(p / 2), 4, vec![1.0 / p as f64; p]),
    };
    let mut forest = Forest::grow(&data, &cfg, m, seed).unwrap();
    forest.build_hats(&data).unwrap();
    let ctx = CriterionContext::new(forest.hats().unwrap(), data.y()).unwrap();
    ToyForest { data, forest, ctx }
}

/// Visit every simplex grid point with coordinates k/steps.
pub fn for_each_grid_point<F: FnMut(&[f64])>(m: usize, steps: usize, mut f: F) {
    let mut point = vec![0.0; m];
    fn recurse<F: FnMut(&[f64])>(
        point: &mut Vec<f64>,
        slot: usize,
        remaining: usize,
        steps: usize,
        f: &mut F,
    ) {
        if slot + 1 == point.len() {
            point[slot] = remaining as f64 / steps as f64;
            f(point);
            return;
        }
        for k in 0..=remaining {
            point[slot] = k as f64 / steps as f64;
            recurse(point, slot + 1, remaining - k, steps, f);
        }
    }
    recurse(&mut point, 0, steps, steps, &mut f);
}

/// Uniform random point on the simplex (normalized exponentials).
pub fn random_simplex_point(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m)
        .map(|_| -rng.random::<f64>().max(1e-12).ln())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Deterministic stand-in with the Yacht Hydrodynamics shape: 22 hull
/// geometries crossed with 14 speeds (n = 308, p = 6), and a resistance
/// response that grows exponentially in the speed coordinate with weak
/// geometry effects and near-zero measurement noise.
pub fn yacht_like_dataset(seed: u64) -> Dataset {
    let mut rng = derived_rng(seed, 102, 0);
    let mut rows = Vec::with_capacity(308);
    let mut y = Vec::with_capacity(308);
    for _hull in 0..22 {
        let lcb = -5.0 + 5.0 * rng.random::<f64>();
        let prism = 0.53 + 0.07 * rng.random::<f64>();
        let len_disp = 4.34 + 0.80 * rng.random::<f64>();
        let beam_draught = 2.81 + 2.54 * rng.random::<f64>();
        let len_beam = 2.73 + 0.91 * rng.random::<f64>();
        let hull_coeff = 0.4
            + 0.5 * (prism - 0.53) / 0.07
            + 0.25 * (beam_draught - 2.81) / 2.54
            + 0.15 * (5.14 - len_disp) / 0.80
            + 0.05 * lcb.sin();
        for k in 0..14 {
            let froude = 0.125 + 0.025 * k as f64;
            let base = hull_coeff * 0.02 * ((22.0 * (froude - 0.125)).exp() - 1.0) + 0.01;
            let noise = 1.0 + 0.01 * (rng.random::<f64>() - 0.5);
            rows.push(vec![lcb, prism, len_disp, beam_draught, len_beam, froude]);
            y.push(base * noise);
        }
    }
    let names = vec![
        "lcb_position".into(),
        "prismatic_coeff".into(),
        "len_disp_ratio".into(),
        "beam_draught_ratio".into(),
        "len_beam_ratio".into(),
        "froude_number".into(),
    ];
    Dataset::new(Matrix::from_rows(rows).unwrap(), y, names).unwrap()
}
