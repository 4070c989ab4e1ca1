use crate::error::{Error, Result};
use crate::hat::HatMatrix;
use crate::parallel::map_indexed;

/// Precomputed ingredients of the weight-choice criteria for one forest:
/// per-tree residual vectors e^(m) = y - P_m y, per-tree hat diagonals and
/// their traces, and the Gram matrix of the residual vectors. The
/// criterion evaluations below work directly from the residuals and
/// diagonals; only the quadratic-program builders use the Gram matrix, so
/// grid-search oracles over the criteria stay independent of the QP path.
#[derive(Debug, Clone)]
pub struct CriterionContext {
    y: Vec<f64>,
    residuals: Vec<Vec<f64>>,
    diags: Vec<Vec<f64>>,
    traces: Vec<f64>,
    gram: Vec<f64>,
}

/// Minimize w' G w + b' w over the simplex.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub g: Vec<f64>,
    pub b: Vec<f64>,
    pub m: usize,
}

impl CriterionContext {
    pub fn new(hats: &[HatMatrix], y: &[f64]) -> Result<Self> {
        if hats.is_empty() {
            return Err(Error::InvalidArgument("no hat matrices".into()));
        }
        let n = y.len();
        if hats.iter().any(|h| h.n() != n) {
            return Err(Error::Dimension(
                "hat matrix size differs from response".into(),
            ));
        }
        let m = hats.len();
        let residuals: Vec<Vec<f64>> = map_indexed(m, |k| {
            let fit = hats[k].apply(y);
            y.iter().zip(fit).map(|(&yi, fi)| yi - fi).collect()
        });
        let diags: Vec<Vec<f64>> = hats.iter().map(|h| h.diag().to_vec()).collect();
        let traces: Vec<f64> = hats.iter().map(|h| h.trace()).collect();
        let gram_rows: Vec<Vec<f64>> = map_indexed(m, |a| {
            (0..m)
                .map(|b| {
                    residuals[a]
                        .iter()
                        .zip(&residuals[b])
                        .map(|(x, y)| x * y)
                        .sum()
                })
                .collect()
        });
        let gram: Vec<f64> = gram_rows.into_iter().flatten().collect();
        Ok(Self {
            y: y.to_vec(),
            residuals,
            diags,
            traces,
            gram,
        })
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.residuals.len()
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn residuals(&self) -> &[Vec<f64>] {
        &self.residuals
    }

    pub fn diags(&self) -> &[Vec<f64>] {
        &self.diags
    }

    pub fn traces(&self) -> &[f64] {
        &self.traces
    }

    /// Gram matrix of the residual vectors, row-major m x m.
    pub fn gram(&self) -> &[f64] {
        &self.gram
    }

    /// Weighted residual vector sum_m w_m e^(m) = y - P(w) y.
    pub fn residual_at(&self, w: &[f64]) -> Vec<f64> {
        debug_assert_eq!(w.len(), self.m());
        let mut r = vec![0.0; self.n()];
        for (res, &wm) in self.residuals.iter().zip(w) {
            if wm == 0.0 {
                continue;
            }
            for (ri, &ei) in r.iter_mut().zip(res) {
                *ri += wm * ei;
            }
        }
        r
    }

    /// Weighted hat diagonal sum_m w_m diag(P_m).
    pub fn diag_at(&self, w: &[f64]) -> Vec<f64> {
        debug_assert_eq!(w.len(), self.m());
        let mut d = vec![0.0; self.n()];
        for (diag, &wm) in self.diags.iter().zip(w) {
            if wm == 0.0 {
                continue;
            }
            for (di, &v) in d.iter_mut().zip(diag) {
                *di += wm * v;
            }
        }
        d
    }

    /// Plug-in noise variance from equal weights: ‖y - P(w0) y‖² / n.
    pub fn sigma2_equal_weights(&self) -> f64 {
        let w0 = vec![1.0 / self.m() as f64; self.m()];
        let r = self.residual_at(&w0);
        r.iter().map(|v| v * v).sum::<f64>() / self.n() as f64
    }

    /// Cubic criterion ‖r(w)‖² + 2 Σ_i r_i(w)² d_i(w). Defined for any w;
    /// the weighting methods minimize it over the simplex.
    pub fn c_prime(&self, w: &[f64]) -> f64 {
        let r = self.residual_at(w);
        let d = self.diag_at(w);
        r.iter()
            .zip(&d)
            .map(|(&ri, &di)| ri * ri * (1.0 + 2.0 * di))
            .sum()
    }

    /// Quadratic criterion ‖r(w)‖² + 2 σ² Σ_m w_m trace(P_m).
    pub fn c_zero(&self, w: &[f64], sigma2: f64) -> f64 {
        debug_assert!(sigma2 >= 0.0);
        let r = self.residual_at(w);
        let fit: f64 = r.iter().map(|v| v * v).sum();
        let penalty: f64 = w.iter().zip(&self.traces).map(|(&wm, &t)| wm * t).sum();
        fit + 2.0 * sigma2 * penalty
    }

    /// Quadratic criterion ‖r(w)‖² + 2 Σ_i ẽ_i² d_i(w) with a fixed
    /// residual estimate ẽ.
    pub fn c_dprime(&self, w: &[f64], e_tilde: &[f64]) -> f64 {
        debug_assert_eq!(e_tilde.len(), self.n());
        let r = self.residual_at(w);
        let d = self.diag_at(w);
        let fit: f64 = r.iter().map(|v| v * v).sum();
        let penalty: f64 = e_tilde.iter().zip(&d).map(|(&ei, &di)| ei * ei * di).sum();
        fit + 2.0 * penalty
    }

    /// Analytic gradient of the cubic criterion:
    /// ∂/∂w_k = Σ_i 2 r_i e_i^(k) (1 + 2 d_i) + 2 Σ_i r_i² d_i^(k).
    pub fn c_prime_gradient(&self, w: &[f64]) -> Vec<f64> {
        let r = self.residual_at(w);
        let d = self.diag_at(w);
        let u: Vec<f64> = r
            .iter()
            .zip(&d)
            .map(|(&ri, &di)| 2.0 * ri * (1.0 + 2.0 * di))
            .collect();
        let v: Vec<f64> = r.iter().map(|&ri| 2.0 * ri * ri).collect();
        (0..self.m())
            .map(|k| {
                let a: f64 = self.residuals[k]
                    .iter()
                    .zip(&u)
                    .map(|(&e, &ui)| e * ui)
                    .sum();
                let b: f64 = self.diags[k].iter().zip(&v).map(|(&dk, &vi)| dk * vi).sum();
                a + b
            })
            .collect()
    }

    /// QP form of the σ²-penalized criterion: G = Gram, b_m = 2 σ² t_m.
    pub fn c_zero_problem(&self, sigma2: f64) -> QpProblem {
        QpProblem {
            g: self.gram.clone(),
            b: self.traces.iter().map(|&t| 2.0 * sigma2 * t).collect(),
            m: self.m(),
        }
    }

    /// QP form of the fixed-residual criterion:
    /// b_k = 2 Σ_i ẽ_i² d_i^(k).
    pub fn c_dprime_problem(&self, e_tilde: &[f64]) -> QpProblem {
        let b = (0..self.m())
            .map(|k| {
                2.0 * self.diags[k]
                    .iter()
                    .zip(e_tilde)
                    .map(|(&dk, &ei)| dk * ei * ei)
                    .sum::<f64>()
            })
            .collect();
        QpProblem {
            g: self.gram.clone(),
            b,
            m: self.m(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bootstrap::BootstrapSample;
    use crate::dataset::Dataset;
    use crate::grow::{grow_cart, GrowConfig};
    use crate::hat::hat_matrix;
    use crate::matrix::Matrix;
    use crate::rng::tree_rng;

    fn four_point_context() -> (CriterionContext, Vec<HatMatrix>, Vec<f64>) {
        let x = Matrix::from_rows(vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]]).unwrap();
        let y = vec![0.0, 1.0, 9.0, 10.0];
        let data = Dataset::from_parts(x, y.clone()).unwrap();
        // two stumps from different bootstraps
        let s1 = BootstrapSample::from_counts(vec![1, 1, 1, 1]).unwrap();
        let s2 = BootstrapSample::from_counts(vec![2, 1, 1, 0]).unwrap();
        let cfg = GrowConfig::cart(1, 2);
        let t1 = grow_cart(&data, &s1, &cfg, &mut tree_rng(0, 0)).unwrap();
        let t2 = grow_cart(&data, &s2, &cfg, &mut tree_rng(0, 1)).unwrap();
        let hats = vec![
            hat_matrix(&t1, &data).unwrap(),
            hat_matrix(&t2, &data).unwrap(),
        ];
        let ctx = CriterionContext::new(&hats, &y).unwrap();
        (ctx, hats, y)
    }

    /// Dense reference evaluation of the cubic criterion from explicit
    /// hat matrices, independent of CriterionContext internals.
    fn c_prime_dense(hats: &[HatMatrix], y: &[f64], w: &[f64]) -> f64 {
        let n = y.len();
        let mut pw = vec![vec![0.0; n]; n];
        for (h, &wm) in hats.iter().zip(w) {
            for (i, row) in pw.iter_mut().enumerate() {
                for &(j, v) in h.row(i) {
                    row[j as usize] += wm * v;
                }
            }
        }
        let mut total = 0.0;
        for i in 0..n {
            let fit: f64 = (0..n).map(|j| pw[i][j] * y[j]).sum();
            let r = y[i] - fit;
            total += r * r * (1.0 + 2.0 * pw[i][i]);
        }
        total
    }

    #[test]
    fn single_tree_collapse() {
        let (_, hats, y) = four_point_context();
        let ctx = CriterionContext::new(&hats[..1], &y).unwrap();
        let r = &ctx.residuals()[0];
        let d = &ctx.diags()[0];
        let expected: f64 = r
            .iter()
            .zip(d)
            .map(|(&ri, &di)| ri * ri * (1.0 + 2.0 * di))
            .sum();
        assert!((ctx.c_prime(&[1.0]) - expected).abs() < 1e-12);
        // c_zero with M = 1: ‖e‖² + 2 σ² t_1
        let sse: f64 = r.iter().map(|v| v * v).sum();
        let got = ctx.c_zero(&[1.0], 0.7);
        assert!((got - (sse + 2.0 * 0.7 * ctx.traces()[0])).abs() < 1e-12);
    }

    #[test]
    fn interpolating_trees_give_zero() {
        // identity hats: every tree reproduces y exactly
        let y = vec![1.0, 2.0, 3.0];
        let tree = crate::tree::RegressionTree::new(
            crate::tree::TreeKind::Cart,
            crate::tree::Node::Split(crate::tree::SplitNode {
                feature: 0,
                cut: 1.5,
                left: Box::new(crate::tree::Node::Leaf(crate::tree::LeafNode {
                    members: vec![(0, 1)],
                    mean: 1.0,
                })),
                right: Box::new(crate::tree::Node::Split(crate::tree::SplitNode {
                    feature: 0,
                    cut: 2.5,
                    left: Box::new(crate::tree::Node::Leaf(crate::tree::LeafNode {
                        members: vec![(1, 1)],
                        mean: 2.0,
                    })),
                    right: Box::new(crate::tree::Node::Leaf(crate::tree::LeafNode {
                        members: vec![(2, 1)],
                        mean: 3.0,
                    })),
                })),
            }),
        )
        .unwrap();
        let x = Matrix::from_rows(vec![vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let data = Dataset::from_parts(x, y.clone()).unwrap();
        let h = hat_matrix(&tree, &data).unwrap();
        let ctx = CriterionContext::new(&[h.clone(), h], &y).unwrap();
        assert_eq!(ctx.c_prime(&[0.3, 0.7]), 0.0);
        assert_eq!(ctx.sigma2_equal_weights(), 0.0);
    }

    #[test]
    fn matches_dense_reference_at_half_half() {
        let (ctx, hats, y) = four_point_context();
        let w = [0.5, 0.5];
        let expected = c_prime_dense(&hats, &y, &w);
        assert!((ctx.c_prime(&w) - expected).abs() < 1e-10);
    }

    #[test]
    fn c_dprime_cases() {
        let (ctx, _, _) = four_point_context();
        let w = [0.4, 0.6];
        // ẽ = 0 leaves only the residual term
        let zero = vec![0.0; ctx.n()];
        let r = ctx.residual_at(&w);
        let sse: f64 = r.iter().map(|v| v * v).sum();
        assert!((ctx.c_dprime(&w, &zero) - sse).abs() < 1e-12);
        // ẽ = r(w) at the same w coincides with the cubic criterion
        assert!((ctx.c_dprime(&w, &r) - ctx.c_prime(&w)).abs() < 1e-12);
        // hand evaluation with a fixed ẽ
        let e_tilde = vec![0.5, -1.0, 2.0, 0.0];
        let d = ctx.diag_at(&w);
        let hand: f64 = sse
            + 2.0
                * e_tilde
                    .iter()
                    .zip(&d)
                    .map(|(&e, &di)| e * e * di)
                    .sum::<f64>();
        assert!((ctx.c_dprime(&w, &e_tilde) - hand).abs() < 1e-12);
    }

    #[test]
    fn sigma2_matches_hand_computation() {
        let (ctx, hats, y) = four_point_context();
        let fits: Vec<Vec<f64>> = hats.iter().map(|h| h.apply(&y)).collect();
        let mean_fit: Vec<f64> = (0..y.len())
            .map(|i| 0.5 * (fits[0][i] + fits[1][i]))
            .collect();
        let hand: f64 = y
            .iter()
            .zip(&mean_fit)
            .map(|(&yi, &fi)| (yi - fi) * (yi - fi))
            .sum::<f64>()
            / y.len() as f64;
        assert!((ctx.sigma2_equal_weights() - hand).abs() < 1e-12);
        // c_zero at w0 with that σ² matches the hand-expanded quadratic
        let w0 = [0.5, 0.5];
        let hand_c0 =
            hand * y.len() as f64 + 2.0 * hand * (0.5 * ctx.traces()[0] + 0.5 * ctx.traces()[1]);
        assert!((ctx.c_zero(&w0, hand) - hand_c0).abs() < 1e-12);
    }

    #[test]
    fn qp_forms_equal_direct_evaluation() {
        let (ctx, _, _) = four_point_context();
        let w = [0.35, 0.65];
        let sigma2 = ctx.sigma2_equal_weights();
        let qp = ctx.c_zero_problem(sigma2);
        let quad = |p: &QpProblem, w: &[f64]| {
            let m = p.m;
            let mut v = 0.0;
            for a in 0..m {
                for b in 0..m {
                    v += w[a] * p.g[a * m + b] * w[b];
                }
                v += p.b[a] * w[a];
            }
            v
        };
        assert!((quad(&qp, &w) - ctx.c_zero(&w, sigma2)).abs() < 1e-10);
        let e_tilde = ctx.residual_at(&[0.2, 0.8]);
        let qp2 = ctx.c_dprime_problem(&e_tilde);
        assert!((quad(&qp2, &w) - ctx.c_dprime(&w, &e_tilde)).abs() < 1e-10);
    }

    #[test]
    fn trace_equals_leaf_count_with_full_multiplicity() {
        let x =
            Matrix::from_rows((0..30).map(|i| vec![i as f64, (i as f64).sin()]).collect()).unwrap();
        let y: Vec<f64> = (0..30).map(|i| (i as f64 * 0.7).cos() * 3.0).collect();
        let data = Dataset::from_parts(x, y.clone()).unwrap();
        let mut rng = tree_rng(21, 0);
        let sample = crate::bootstrap::bootstrap_sample(30, &mut rng).unwrap();
        let tree = grow_cart(&data, &sample, &GrowConfig::cart(1, 5), &mut rng).unwrap();
        let hat = hat_matrix(&tree, &data).unwrap();
        assert!((hat.trace() - tree.leaf_count() as f64).abs() < 1e-8);
    }
}
