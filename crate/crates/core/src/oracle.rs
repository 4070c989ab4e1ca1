//! Synthetic ground truth and optimality checks. With a known mean
//! function and noise variance, the squared loss against the truth and
//! its conditional expectation (the risk) evaluate exactly, and the
//! infeasible best weights over the simplex come from a quadratic
//! program. The ratio study measures how close the criterion-selected
//! weights get to that infeasible optimum as n grows.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::grow::{default_q, GrowConfig};
use crate::hat::{combined_row, HatMatrix};
use crate::matrix::Matrix;
use crate::parallel::map_indexed;
use crate::rng::{derive_seed, derived_rng, TAG_REPLICATION, TAG_SYNTHETIC};
use crate::tree::TreeKind;
use crate::weights::{
    solve_one_step, solve_quadratic_simplex, solve_two_steps, CriterionContext, WeightVector,
};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Named mean functions over [0,1]^p.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MuFunction {
    /// mu(x) = sum_j j * x_j
    Linear,
    /// 10 sin(pi x1 x2) + 20 (x3 - 1/2)^2 + 10 x4 + 5 x5 (needs p >= 5)
    Friedman,
    /// piecewise constant in x1: 2 * min(floor(4 x1), 3)
    Step,
}

impl MuFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            MuFunction::Linear => x.iter().enumerate().map(|(j, &v)| (j + 1) as f64 * v).sum(),
            MuFunction::Friedman => {
                10.0 * (std::f64::consts::PI * x[0] * x[1]).sin()
                    + 20.0 * (x[2] - 0.5).powi(2)
                    + 10.0 * x[3]
                    + 5.0 * x[4]
            }
            MuFunction::Step => 2.0 * ((4.0 * x[0]).floor()).min(3.0),
        }
    }
}

/// Noise model: constant sigma, or sigma_i = sigma * (1 + |x_i1|).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "sigma")]
pub enum NoiseModel {
    Homo(f64),
    Hetero(f64),
}

impl NoiseModel {
    fn sigma(&self) -> f64 {
        match self {
            NoiseModel::Homo(s) | NoiseModel::Hetero(s) => *s,
        }
    }

    fn sigma_at(&self, x: &[f64]) -> f64 {
        match self {
            NoiseModel::Homo(s) => *s,
            NoiseModel::Hetero(s) => s * (1.0 + x[0].abs()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub p: usize,
    pub mu: MuFunction,
    pub noise: NoiseModel,
    pub seed: u64,
}

pub struct SyntheticData {
    pub dataset: Dataset,
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
}

/// Draw X i.i.d. uniform on [0,1]^p and y = mu(X) + e with independent
/// Gaussian noise of the configured variance.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if spec.n == 0 || spec.p == 0 {
        return Err(Error::InvalidArgument("n and p must be positive".into()));
    }
    if spec.mu == MuFunction::Friedman && spec.p < 5 {
        return Err(Error::InvalidArgument(
            "the nonlinear mean needs p >= 5".into(),
        ));
    }
    if spec.noise.sigma() <= 0.0 {
        return Err(Error::InvalidArgument("sigma must be positive".into()));
    }
    let mut rng = derived_rng(spec.seed, TAG_SYNTHETIC, 0);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rows = Vec::with_capacity(spec.n);
    let mut mu = Vec::with_capacity(spec.n);
    let mut sigma2 = Vec::with_capacity(spec.n);
    let mut y = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let row: Vec<f64> = (0..spec.p).map(|_| rng.random::<f64>()).collect();
        let m = spec.mu.eval(&row);
        let s = spec.noise.sigma_at(&row);
        y.push(m + s * std_normal.sample(&mut rng));
        mu.push(m);
        sigma2.push(s * s);
        rows.push(row);
    }
    Ok(SyntheticData {
        dataset: Dataset::from_parts(Matrix::from_rows(rows)?, y)?,
        mu,
        sigma2,
    })
}

/// Per-tree fitted vectors P_m y.
pub fn fits(hats: &[HatMatrix], y: &[f64]) -> Vec<Vec<f64>> {
    hats.iter().map(|h| h.apply(y)).collect()
}

/// Squared loss of the weighted fit against the true mean:
/// ‖P(w) y - mu‖².
pub fn loss_ln(hats: &[HatMatrix], y: &[f64], w: &WeightVector, mu: &[f64]) -> f64 {
    let per_tree = fits(hats, y);
    let fit = crate::forest::combine_predictions(&per_tree, w.as_slice());
    fit.iter().zip(mu).map(|(&f, &m)| (f - m) * (f - m)).sum()
}

/// Exact conditional risk of the weighted smoother:
/// ‖(P(w) - I) mu‖² + Σ_i [P(w) diag(σ²) P(w)']_ii.
pub fn risk_rn(hats: &[HatMatrix], w: &WeightVector, mu: &[f64], sigma2: &[f64]) -> f64 {
    let n = mu.len();
    let weights = w.as_slice();
    // bias term from per-tree smoothed means
    let mu_fits: Vec<Vec<f64>> = hats.iter().map(|h| h.apply(mu)).collect();
    let bias: f64 = (0..n)
        .map(|i| {
            let fit: f64 = mu_fits.iter().zip(weights).map(|(f, &wm)| wm * f[i]).sum();
            (fit - mu[i]) * (fit - mu[i])
        })
        .sum();
    // variance term: rows of P(w) merged across trees
    let variance: f64 = (0..n)
        .map(|i| {
            combined_row(hats, weights, i)
                .iter()
                .map(|&(j, v)| v * v * sigma2[j as usize])
                .sum::<f64>()
        })
        .sum();
    bias + variance
}

/// QP form of the risk over the simplex: R(w) = w' (Phi + Psi) w where
/// Phi is the Gram of the per-tree bias vectors P_m mu - mu and
/// Psi_ms = trace(P_m diag(σ²) P_s').
fn risk_problem(hats: &[HatMatrix], mu: &[f64], sigma2: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = hats.len();
    let n = mu.len();
    let bias_vecs: Vec<Vec<f64>> = hats
        .iter()
        .map(|h| h.apply(mu).iter().zip(mu).map(|(&f, &mi)| f - mi).collect())
        .collect();
    let mut g = vec![0.0; m * m];
    for a in 0..m {
        for b in a..m {
            let phi: f64 = bias_vecs[a]
                .iter()
                .zip(&bias_vecs[b])
                .map(|(x, y)| x * y)
                .sum();
            g[a * m + b] = phi;
            g[b * m + a] = phi;
        }
    }
    // Psi via row-wise sparse dot products
    for i in 0..n {
        let rows: Vec<&[(u32, f64)]> = hats.iter().map(|h| h.row(i)).collect();
        for a in 0..m {
            for b in a..m {
                let mut dot = 0.0;
                let (ra, rb) = (rows[a], rows[b]);
                let (mut ia, mut ib) = (0usize, 0usize);
                while ia < ra.len() && ib < rb.len() {
                    match ra[ia].0.cmp(&rb[ib].0) {
                        std::cmp::Ordering::Less => ia += 1,
                        std::cmp::Ordering::Greater => ib += 1,
                        std::cmp::Ordering::Equal => {
                            dot += ra[ia].1 * rb[ib].1 * sigma2[ra[ia].0 as usize];
                            ia += 1;
                            ib += 1;
                        }
                    }
                }
                g[a * m + b] += dot;
                if a != b {
                    g[b * m + a] += dot;
                }
            }
        }
    }
    (g, vec![0.0; m])
}

/// Infeasible best over the simplex: the weights minimizing the squared
/// loss against the true mean, with the achieved minimum.
pub fn infeasible_best(hats: &[HatMatrix], y: &[f64], mu: &[f64]) -> Result<(WeightVector, f64)> {
    let per_tree = fits(hats, y);
    let m = hats.len();
    let mut g = vec![0.0; m * m];
    for a in 0..m {
        for b in a..m {
            let v: f64 = per_tree[a]
                .iter()
                .zip(&per_tree[b])
                .map(|(x, y)| x * y)
                .sum();
            g[a * m + b] = v;
            g[b * m + a] = v;
        }
    }
    let b: Vec<f64> = per_tree
        .iter()
        .map(|f| -2.0 * f.iter().zip(mu).map(|(&fi, &mi)| fi * mi).sum::<f64>())
        .collect();
    let report = solve_quadratic_simplex(&g, &b)?;
    let loss = loss_ln(hats, y, &report.weights, mu);
    Ok((report.weights, loss))
}

/// Minimum of the exact risk over the simplex (plug-in estimate of the
/// best possible risk for this forest).
pub fn infeasible_best_risk(
    hats: &[HatMatrix],
    mu: &[f64],
    sigma2: &[f64],
) -> Result<(WeightVector, f64)> {
    let (g, b) = risk_problem(hats, mu, sigma2);
    let report = solve_quadratic_simplex(&g, &b)?;
    let risk = risk_rn(hats, &report.weights, mu, sigma2);
    Ok((report.weights, risk))
}

/// Minimum node size rule for the study grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NMinRule {
    Fixed(u32),
    SqrtN,
}

impl NMinRule {
    pub fn value(&self, n: usize) -> u32 {
        match self {
            NMinRule::Fixed(v) => *v,
            NMinRule::SqrtN => (n as f64).sqrt().ceil() as u32,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n_values: Vec<usize>,
    pub p: usize,
    pub m_trees: usize,
    pub kind: TreeKind,
    pub n_min: NMinRule,
    pub q: Option<usize>,
    pub reps: usize,
    pub seed: u64,
    pub mu: MuFunction,
    pub noise: NoiseModel,
    /// Also solve the cubic criterion per replication (slower).
    pub include_one_step: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            n_values: vec![200, 500, 1000],
            p: 5,
            m_trees: 50,
            kind: TreeKind::Sut,
            n_min: NMinRule::Fixed(5),
            q: None,
            reps: 20,
            seed: 0,
            mu: MuFunction::Linear,
            noise: NoiseModel::Homo(1.0),
            include_one_step: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Quartiles {
    pub median: f64,
    pub iqr: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyDiagnostics {
    /// Smallest bootstrap-weighted leaf across all trees and replications.
    pub min_leaf_size: u32,
    /// Largest hat diagonal across trees and replications.
    pub max_hat_diag: f64,
    /// sqrt(n) / min leaf size; bounded when leaves keep order sqrt(n).
    pub condition_sqrt_n_over_min_leaf: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyEntry {
    pub n: usize,
    pub n_min: u32,
    pub loss_ratio_two_steps: Quartiles,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_ratio_one_step: Option<Quartiles>,
    /// Plug-in estimate: risk at the selected weights over the QP minimum
    /// of the exact risk (the denominator is itself estimated).
    pub risk_ratio_two_steps_estimated: Quartiles,
    /// Criterion value at the two-step solution never exceeds the value
    /// at equal weights in any replication.
    pub criterion_descent_ok: bool,
    pub diagnostics: StudyDiagnostics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioReport {
    pub schema_version: u32,
    pub m_trees: usize,
    pub kind: TreeKind,
    pub entries: Vec<StudyEntry>,
}

impl RatioReport {
    pub fn to_text_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "optimal-weight loss ratios ({} trees, {} splits)\n",
            self.m_trees, self.kind
        ));
        out.push_str(
            "     n  n_min  median(2steps)     iqr  median(1step)  risk(est)  min_leaf  max_diag\n",
        );
        for e in &self.entries {
            let one = e
                .loss_ratio_one_step
                .as_ref()
                .map_or("      -".to_string(), |q| format!("{:7.4}", q.median));
            out.push_str(&format!(
                "{:>6}  {:>5}  {:>14.4}  {:>6.4}  {:>13}  {:>9.4}  {:>8}  {:>8.4}\n",
                e.n,
                e.n_min,
                e.loss_ratio_two_steps.median,
                e.loss_ratio_two_steps.iqr,
                one,
                e.risk_ratio_two_steps_estimated.median,
                e.diagnostics.min_leaf_size,
                e.diagnostics.max_hat_diag,
            ));
        }
        out
    }
}

fn quartiles(values: &[f64]) -> Quartiles {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let at = |q: f64| -> f64 {
        if v.len() == 1 {
            return v[0];
        }
        let pos = q * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        v[lo] * (1.0 - frac) + v[hi] * frac
    };
    Quartiles {
        median: at(0.5),
        iqr: at(0.75) - at(0.25),
        min: v[0],
        max: v[v.len() - 1],
    }
}

struct RepOutcome {
    loss_ratio_two: f64,
    loss_ratio_one: Option<f64>,
    risk_ratio_two: f64,
    descent_ok: bool,
    min_leaf: u32,
    max_diag: f64,
}

/// For each n: generate data, grow a forest, select weights by the
/// two-step (and optionally one-step) criterion, and compare the achieved
/// loss to the infeasible best over the simplex. Ratios are >= 1 up to
/// solver tolerance; the theory says they approach 1 as n grows.
pub fn optimality_ratio_study(cfg: &StudyConfig) -> Result<RatioReport> {
    if cfg.reps == 0 || cfg.n_values.is_empty() {
        return Err(Error::InvalidArgument(
            "study needs n values and reps >= 1".into(),
        ));
    }
    let mut entries = Vec::new();
    for (ni, &n) in cfg.n_values.iter().enumerate() {
        let n_min = cfg.n_min.value(n);
        let q = cfg.q.unwrap_or_else(|| default_q(cfg.p));
        let outcomes: Vec<Result<RepOutcome>> = map_indexed(cfg.reps, |rep| {
            run_study_rep(cfg, n, n_min, q, ni * cfg.reps + rep)
        });
        let mut two = Vec::new();
        let mut one = Vec::new();
        let mut risk = Vec::new();
        let mut descent = true;
        let mut min_leaf = u32::MAX;
        let mut max_diag = 0.0f64;
        for o in outcomes {
            let o = o?;
            two.push(o.loss_ratio_two);
            if let Some(r) = o.loss_ratio_one {
                one.push(r);
            }
            risk.push(o.risk_ratio_two);
            descent &= o.descent_ok;
            min_leaf = min_leaf.min(o.min_leaf);
            max_diag = max_diag.max(o.max_diag);
        }
        entries.push(StudyEntry {
            n,
            n_min,
            loss_ratio_two_steps: quartiles(&two),
            loss_ratio_one_step: if one.is_empty() {
                None
            } else {
                Some(quartiles(&one))
            },
            risk_ratio_two_steps_estimated: quartiles(&risk),
            criterion_descent_ok: descent,
            diagnostics: StudyDiagnostics {
                min_leaf_size: min_leaf,
                max_hat_diag: max_diag,
                condition_sqrt_n_over_min_leaf: (n as f64).sqrt() / min_leaf as f64,
            },
        });
    }
    Ok(RatioReport {
        schema_version: 1,
        m_trees: cfg.m_trees,
        kind: cfg.kind,
        entries,
    })
}

fn run_study_rep(
    cfg: &StudyConfig,
    n: usize,
    n_min: u32,
    q: usize,
    stream: usize,
) -> Result<RepOutcome> {
    let rep_seed = derive_seed(cfg.seed, TAG_REPLICATION, stream);
    let synth = generate(&SyntheticSpec {
        n,
        p: cfg.p,
        mu: cfg.mu,
        noise: cfg.noise,
        seed: rep_seed,
    })?;
    let grow_cfg = match cfg.kind {
        TreeKind::Cart => GrowConfig::cart(q, n_min),
        // the study draws features uniformly: with i.i.d. uniform
        // predictors no feature is a priori more informative
        TreeKind::Sut => GrowConfig::sut(q, n_min, vec![1.0 / cfg.p as f64; cfg.p]),
    };
    let mut forest = Forest::grow_serial(&synth.dataset, &grow_cfg, cfg.m_trees, rep_seed)?;
    forest.build_hats_serial(&synth.dataset)?;
    let hats = forest.hats().expect("hats built");
    let y = synth.dataset.y();
    let ctx = CriterionContext::new(hats, y)?;

    let two = solve_two_steps(&ctx)?;
    let (_, best_loss) = infeasible_best(hats, y, &synth.mu)?;
    let loss_two = loss_ln(hats, y, &two.weights, &synth.mu);
    let loss_ratio_two = loss_two / best_loss;

    let loss_ratio_one = if cfg.include_one_step {
        let one = solve_one_step(&ctx)?;
        Some(loss_ln(hats, y, &one.weights, &synth.mu) / best_loss)
    } else {
        None
    };

    let (_, best_risk) = infeasible_best_risk(hats, &synth.mu, &synth.sigma2)?;
    let risk_ratio_two = risk_rn(hats, &two.weights, &synth.mu, &synth.sigma2) / best_risk;

    // descent at the level where it holds exactly: the two-step objective
    // at its solution never exceeds the objective at equal weights
    let sigma2 = ctx.sigma2_equal_weights();
    let step1 =
        solve_quadratic_simplex(&ctx.c_zero_problem(sigma2).g, &ctx.c_zero_problem(sigma2).b)?;
    let e_tilde = ctx.residual_at(step1.weights.as_slice());
    let w0 = vec![1.0 / cfg.m_trees as f64; cfg.m_trees];
    let descent_ok = ctx.c_dprime(two.weights.as_slice(), &e_tilde)
        <= ctx.c_dprime(&w0, &e_tilde) + 1e-9 * (1.0 + ctx.c_dprime(&w0, &e_tilde).abs());

    let min_leaf = forest
        .trees()
        .iter()
        .map(|t| t.min_leaf_weight())
        .min()
        .unwrap_or(0);
    let max_diag = hats.iter().map(|h| h.max_diag()).fold(0.0, f64::max);
    Ok(RepOutcome {
        loss_ratio_two,
        loss_ratio_one,
        risk_ratio_two,
        descent_ok,
        min_leaf,
        max_diag,
    })
}
