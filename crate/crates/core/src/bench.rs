//! Real-data evaluation pipeline: CSV ingestion, train/test/validation
//! splits, the replication loop fitting all five weightings on shared
//! trees, forecast-error summaries, relative risks against the two-step
//! benchmark, and optimizer timing.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::forest::{combine_predictions, Forest, WeightMethod};
use crate::grow::{default_n_min, default_q, GrowConfig};
use crate::importance::{prob_sequence_from_importance, variable_importance};
use crate::matrix::Matrix;
use crate::parallel::map_indexed;
use crate::rng::{derive_seed, derived_rng, TAG_IMPORTANCE, TAG_REPLICATION, TAG_SPLIT};
use crate::tree::TreeKind;
use crate::weights::{
    crf_weights, solve_one_step, solve_two_steps, wrf_weights, CriterionContext, WeightVector,
};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

/// Disjoint row partition covering 0..n, ordered train : test :
/// validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub validation: Vec<usize>,
    pub seed: u64,
}

/// Random partition with the largest-remainder rounding rule: floors
/// first, leftovers to the largest fractional parts (earlier part wins
/// ties).
pub fn make_split(n: usize, ratios: (f64, f64, f64), seed: u64) -> Result<SplitPlan> {
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "split ratios must be positive".into(),
        ));
    }
    let total: f64 = r.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios sum to {total}"
        )));
    }
    let mut sizes = [0usize; 3];
    let mut fracs = [0.0f64; 3];
    let mut assigned = 0;
    for k in 0..3 {
        let exact = r[k] * n as f64;
        sizes[k] = exact.floor() as usize;
        fracs[k] = exact - exact.floor();
        assigned += sizes[k];
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| fracs[b].partial_cmp(&fracs[a]).unwrap().then(a.cmp(&b)));
    for k in 0..n - assigned {
        sizes[order[k % 3]] += 1;
    }
    if sizes.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "n = {n} leaves an empty part under ratios {r:?}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = derived_rng(seed, TAG_SPLIT, 0);
    idx.shuffle(&mut rng);
    let train = idx[..sizes[0]].to_vec();
    let test = idx[sizes[0]..sizes[0] + sizes[1]].to_vec();
    let validation = idx[sizes[0] + sizes[1]..].to_vec();
    Ok(SplitPlan {
        train,
        test,
        validation,
        seed,
    })
}

/// Mean squared error of one replication's forecasts.
pub fn msfe(preds: &[f64], y: &[f64]) -> Result<f64> {
    pair_check(preds, y)?;
    Ok(preds
        .iter()
        .zip(y)
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum::<f64>()
        / y.len() as f64)
}

/// Mean absolute error of one replication's forecasts.
pub fn mafe(preds: &[f64], y: &[f64]) -> Result<f64> {
    pair_check(preds, y)?;
    Ok(preds
        .iter()
        .zip(y)
        .map(|(&p, &t)| (p - t).abs())
        .sum::<f64>()
        / y.len() as f64)
}

fn pair_check(preds: &[f64], y: &[f64]) -> Result<()> {
    if preds.is_empty() || preds.len() != y.len() {
        return Err(Error::Dimension(format!(
            "{} predictions against {} responses",
            preds.len(),
            y.len()
        )));
    }
    Ok(())
}

fn parse_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv {
            path: display.clone(),
            problem: e.to_string(),
        })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv {
            path: display.clone(),
            problem: e.to_string(),
        })?
        .iter()
        .map(|h| h.to_string())
        .collect();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut bad_cells: Vec<String> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv {
            path: display.clone(),
            problem: e.to_string(),
        })?;
        let mut row = Vec::with_capacity(headers.len());
        for (col, field) in record.iter().enumerate() {
            match field.parse::<f64>().ok().filter(|v| v.is_finite()) {
                Some(v) => row.push(v),
                None => {
                    if bad_cells.len() < 20 {
                        bad_cells.push(format!(
                            "row {} column '{}' = {:?}",
                            row_idx + 2, // 1-based, after the header line
                            headers.get(col).map(String::as_str).unwrap_or("?"),
                            field
                        ));
                    } else if bad_cells.len() == 20 {
                        bad_cells.push("...".into());
                    }
                }
            }
        }
        rows.push(row);
    }
    if !bad_cells.is_empty() {
        return Err(Error::MissingValues(format!(
            "{display}: {}",
            bad_cells.join("; ")
        )));
    }
    if rows.is_empty() {
        return Err(Error::Csv {
            path: display,
            problem: "no data rows".into(),
        });
    }
    Ok((headers, rows))
}

/// Load a numeric CSV with a header row, extracting `target` as the
/// response. Missing or non-numeric cells are collected and reported.
pub fn load_csv(path: &Path, target: &str) -> Result<Dataset> {
    let (headers, rows) = parse_numeric_csv(path)?;
    let target_idx = headers
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| Error::Csv {
            path: path.display().to_string(),
            problem: format!(
                "target column '{target}' not found; columns: {}",
                headers.join(", ")
            ),
        })?;
    let mut x = Vec::with_capacity(rows.len());
    let mut y = Vec::with_capacity(rows.len());
    for row in rows {
        let mut features = row;
        y.push(features.remove(target_idx));
        x.push(features);
    }
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    Dataset::new(Matrix::from_rows(x)?, y, names)
}

/// Load a numeric CSV where every column is a feature (prediction input).
pub fn load_features_csv(path: &Path) -> Result<(Matrix, Vec<String>)> {
    let (headers, rows) = parse_numeric_csv(path)?;
    Ok((Matrix::from_rows(rows)?, headers))
}

/// One dataset entry of the manifest: where the CSV lives, which column
/// is the response, and the expected shape used for validation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub path: String,
    pub target: String,
    pub expected_n: usize,
    pub expected_p: usize,
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Load a manifest entry's dataset, resolving relative paths against the
/// manifest location and validating the expected (n, p).
pub fn load_from_manifest(manifest_dir: &Path, entry: &ManifestEntry) -> Result<Dataset> {
    let p = Path::new(&entry.path);
    let full = if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest_dir.join(p)
    };
    let data = load_csv(&full, &entry.target)?;
    if data.n() != entry.expected_n || data.p() != entry.expected_p {
        return Err(Error::Csv {
            path: full.display().to_string(),
            problem: format!(
                "{}: loaded ({}, {}) but manifest expects ({}, {})",
                entry.name,
                data.n(),
                data.p(),
                entry.expected_n,
                entry.expected_p
            ),
        });
    }
    Ok(data)
}

pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [0.5, 1.0, 2.0, 3.0, 5.0];
pub const DEFAULT_RATIOS: (f64, f64, f64) = (0.5, 0.3, 0.2);

/// Replication-loop configuration. `None` fields fall back to the
/// conventional defaults: q = ceil(p/3), n_min = ceil(sqrt(n_train)) for
/// CART and 5 for SUT.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    pub m_trees: usize,
    pub q: Option<usize>,
    pub n_min: Option<u32>,
    pub kind: TreeKind,
    pub reps: usize,
    pub seed: u64,
    pub ratios: (f64, f64, f64),
    pub lambda_grid: Vec<f64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            m_trees: 100,
            q: None,
            n_min: None,
            kind: TreeKind::Cart,
            reps: 50,
            seed: 0,
            ratios: DEFAULT_RATIOS,
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
        }
    }
}

/// The five methods in report order; the two-step optimum is the
/// relative-risk benchmark.
pub const METHOD_ORDER: [WeightMethod; 5] = [
    WeightMethod::Rf,
    WeightMethod::TwoSteps,
    WeightMethod::OneStep,
    WeightMethod::Wrf,
    WeightMethod::Crf,
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub msfe: f64,
    pub mafe: f64,
    pub msfe_rank: usize,
    pub mafe_rank: usize,
    /// method risk / benchmark risk; None when the benchmark risk is zero
    pub relative_msfe: Option<f64>,
    pub relative_mafe: Option<f64>,
    /// outside (0.95, 1.05)? None when the ratio is undefined
    pub msfe_essential: Option<bool>,
    pub mafe_essential: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timings {
    pub two_steps_s: f64,
    pub one_step_s: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub n: usize,
    pub p: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub m_trees: usize,
    pub q: usize,
    pub n_min: u32,
    pub kind: TreeKind,
    pub reps: usize,
    pub seed: u64,
    pub ratios: (f64, f64, f64),
    pub lambda_grid: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub dataset: DatasetInfo,
    pub config: ConfigEcho,
    pub methods: Vec<MethodResult>,
    pub timings: Timings,
    pub reps_completed: usize,
    pub failures: usize,
    /// how often each λ won the validation tuning, by grid order
    pub lambda_counts: Vec<(f64, usize)>,
}

impl EvalReport {
    pub fn method(&self, m: WeightMethod) -> &MethodResult {
        self.methods
            .iter()
            .find(|r| r.method == m.name())
            .expect("all five methods present")
    }

    /// Markdown tables in the conventional layout: one row per metric,
    /// method columns with rank superscripts.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "### {} (n = {}, p = {}, {} trees, {} splits, D = {})\n\n",
            self.dataset.name,
            self.dataset.n,
            self.dataset.p,
            self.config.m_trees,
            self.config.kind,
            self.reps_completed,
        ));
        out.push_str("| Metric | RF | 2steps-WRFopt | 1step-WRFopt | wRF | CRF |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        let row = |label: &str, f: &dyn Fn(&MethodResult) -> (f64, usize)| -> String {
            let cells: Vec<String> = METHOD_ORDER
                .iter()
                .map(|m| {
                    let (v, rank) = f(self.method(*m));
                    format!("{v:.3}^({rank})")
                })
                .collect();
            format!("| {label} | {} |\n", cells.join(" | "))
        };
        out.push_str(&row("MSFE", &|r| (r.msfe, r.msfe_rank)));
        out.push_str(&row("MAFE", &|r| (r.mafe, r.mafe_rank)));
        let rel: Vec<String> = METHOD_ORDER
            .iter()
            .map(|m| {
                let r = self.method(*m);
                match (r.relative_msfe, r.msfe_essential) {
                    (Some(v), Some(true)) => format!("{v:.3}*"),
                    (Some(v), _) => format!("{v:.3}"),
                    _ => "undef".into(),
                }
            })
            .collect();
        out.push_str(&format!("| rel. MSFE | {} |\n", rel.join(" | ")));
        out.push_str(&format!(
            "\nOptimizer wall time: 2steps {:.4}s, 1step {:.4}s, ratio {}\n",
            self.timings.two_steps_s,
            self.timings.one_step_s,
            self.timings
                .ratio
                .map_or("undef".into(), |r| format!("{r:.2}")),
        ));
        if self.failures > 0 {
            out.push_str(&format!("\nFailed replications: {}\n", self.failures));
        }
        out
    }
}

/// Relative risks against a benchmark value, with the "essential" flag
/// for ratios outside (0.95, 1.05). A zero benchmark leaves the ratios
/// undefined.
pub fn relative_risk(values: &[f64], benchmark: f64) -> Vec<(Option<f64>, Option<bool>)> {
    values
        .iter()
        .map(|&v| {
            if benchmark == 0.0 {
                (None, None)
            } else {
                let ratio = v / benchmark;
                (Some(ratio), Some(!(0.95..=1.05).contains(&ratio)))
            }
        })
        .collect()
}

fn ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    let mut out = vec![0usize; values.len()];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = rank + 1;
    }
    out
}

struct RepOutcome {
    msfe: [f64; 5],
    mafe: [f64; 5],
    two_steps_s: f64,
    one_step_s: f64,
    lambda: f64,
}

/// Evaluation data for one replication, exposed for tests: the grown
/// forest, the per-method weights over the same trees, and the split.
pub struct ReplicationFit {
    pub forest: Forest,
    pub split: SplitPlan,
    pub weights: Vec<(WeightMethod, WeightVector)>,
    pub two_steps_s: f64,
    pub one_step_s: f64,
    pub lambda: f64,
}

/// Fit one replication: split, tune on validation, grow one forest on the
/// training split, and compute all five weightings on those same trees.
pub fn run_replication(data: &Dataset, cfg: &BenchConfig, rep: usize) -> Result<ReplicationFit> {
    let split = make_split(data.n(), cfg.ratios, derive_seed(cfg.seed, TAG_SPLIT, rep))?;
    let train = data.subset(&split.train)?;
    let validation = data.subset(&split.validation)?;

    let q = cfg.q.unwrap_or_else(|| default_q(data.p()));
    let n_min = cfg
        .n_min
        .unwrap_or_else(|| default_n_min(cfg.kind, train.n()));
    let grow_cfg = match cfg.kind {
        TreeKind::Cart => GrowConfig::cart(q, n_min),
        TreeKind::Sut => {
            // probability sequence from CART importances on the validation
            // split, refit per replication
            let imp_cfg = GrowConfig::cart(q, default_n_min(TreeKind::Cart, validation.n()));
            let imp = variable_importance(
                &validation,
                &imp_cfg,
                100,
                derive_seed(cfg.seed, TAG_IMPORTANCE, rep),
            )?;
            GrowConfig::sut(q, n_min, prob_sequence_from_importance(&imp))
        }
    };

    let rep_seed = derive_seed(cfg.seed, TAG_REPLICATION, rep);
    let mut forest = Forest::grow(&train, &grow_cfg, cfg.m_trees, rep_seed)?;
    forest.build_hats(&train)?;
    let ctx = CriterionContext::new(forest.hats().expect("hats built"), train.y())?;

    let t = Instant::now();
    let two = solve_two_steps(&ctx)?;
    let two_steps_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let one = solve_one_step(&ctx)?;
    let one_step_s = t.elapsed().as_secs_f64();

    // λ tuned on the validation split by squared forecast error
    let val_per_tree = forest.per_tree_predictions(validation.x())?;
    let mut lambda = cfg.lambda_grid[0];
    let mut best_val = f64::INFINITY;
    let mut wrf_w = None;
    for &l in &cfg.lambda_grid {
        let w = wrf_weights(&forest, &train, l)?;
        let preds = combine_predictions(&val_per_tree, w.as_slice());
        let err = msfe(&preds, validation.y())?;
        if err < best_val {
            best_val = err;
            lambda = l;
            wrf_w = Some(w);
        }
    }
    let wrf_w = wrf_w.expect("nonempty lambda grid");
    let crf_w = crf_weights(&forest, &train)?;

    let weights = vec![
        (WeightMethod::Rf, WeightVector::equal(cfg.m_trees)),
        (WeightMethod::TwoSteps, two.weights),
        (WeightMethod::OneStep, one.weights),
        (WeightMethod::Wrf, wrf_w),
        (WeightMethod::Crf, crf_w),
    ];
    Ok(ReplicationFit {
        forest,
        split,
        weights,
        two_steps_s,
        one_step_s,
        lambda,
    })
}

fn run_rep_outcome(data: &Dataset, cfg: &BenchConfig, rep: usize) -> Result<RepOutcome> {
    let fit = run_replication(data, cfg, rep)?;
    let test = data.subset(&fit.split.test)?;
    let test_per_tree = fit.forest.per_tree_predictions(test.x())?;
    let mut out = RepOutcome {
        msfe: [0.0; 5],
        mafe: [0.0; 5],
        two_steps_s: fit.two_steps_s,
        one_step_s: fit.one_step_s,
        lambda: fit.lambda,
    };
    for (slot, m) in METHOD_ORDER.iter().enumerate() {
        let w = &fit
            .weights
            .iter()
            .find(|(wm, _)| wm == m)
            .expect("method present")
            .1;
        let preds = combine_predictions(&test_per_tree, w.as_slice());
        out.msfe[slot] = msfe(&preds, test.y())?;
        out.mafe[slot] = mafe(&preds, test.y())?;
    }
    Ok(out)
}

/// Run D replications and aggregate forecast errors, ranks, relative
/// risks against the two-step benchmark, and optimizer timings. Solver
/// errors inside a replication are counted as failures rather than
/// aborting the run.
pub fn run_benchmark(data: &Dataset, name: &str, cfg: &BenchConfig) -> Result<EvalReport> {
    if cfg.reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    if cfg.lambda_grid.is_empty() {
        return Err(Error::InvalidArgument(
            "lambda grid must be nonempty".into(),
        ));
    }
    let outcomes: Vec<Result<RepOutcome>> =
        map_indexed(cfg.reps, |rep| run_rep_outcome(data, cfg, rep));

    let mut msfe_sum = [0.0; 5];
    let mut mafe_sum = [0.0; 5];
    let mut two_s = 0.0;
    let mut one_s = 0.0;
    let mut lambda_counts: Vec<(f64, usize)> = cfg.lambda_grid.iter().map(|&l| (l, 0)).collect();
    let mut completed = 0usize;
    let mut failures = 0usize;
    for o in outcomes {
        match o {
            Ok(rep) => {
                for k in 0..5 {
                    msfe_sum[k] += rep.msfe[k];
                    mafe_sum[k] += rep.mafe[k];
                }
                two_s += rep.two_steps_s;
                one_s += rep.one_step_s;
                if let Some(slot) = lambda_counts.iter_mut().find(|(l, _)| *l == rep.lambda) {
                    slot.1 += 1;
                }
                completed += 1;
            }
            Err(_) => failures += 1,
        }
    }
    if completed == 0 {
        return Err(Error::InvalidArgument("every replication failed".into()));
    }
    let d = completed as f64;
    let msfe_mean: Vec<f64> = msfe_sum.iter().map(|v| v / d).collect();
    let mafe_mean: Vec<f64> = mafe_sum.iter().map(|v| v / d).collect();
    let msfe_ranks = ranks(&msfe_mean);
    let mafe_ranks = ranks(&mafe_mean);
    let bench_slot = 1; // two-step position in METHOD_ORDER
    let rel_msfe = relative_risk(&msfe_mean, msfe_mean[bench_slot]);
    let rel_mafe = relative_risk(&mafe_mean, mafe_mean[bench_slot]);

    let methods: Vec<MethodResult> = METHOD_ORDER
        .iter()
        .enumerate()
        .map(|(k, m)| MethodResult {
            method: m.name().into(),
            msfe: msfe_mean[k],
            mafe: mafe_mean[k],
            msfe_rank: msfe_ranks[k],
            mafe_rank: mafe_ranks[k],
            relative_msfe: rel_msfe[k].0,
            relative_mafe: rel_mafe[k].0,
            msfe_essential: rel_msfe[k].1,
            mafe_essential: rel_mafe[k].1,
        })
        .collect();

    let q = cfg.q.unwrap_or_else(|| default_q(data.p()));
    let train_n = make_split(data.n(), cfg.ratios, derive_seed(cfg.seed, TAG_SPLIT, 0))?
        .train
        .len();
    Ok(EvalReport {
        schema_version: 1,
        dataset: DatasetInfo {
            name: name.into(),
            n: data.n(),
            p: data.p(),
        },
        config: ConfigEcho {
            m_trees: cfg.m_trees,
            q,
            n_min: cfg
                .n_min
                .unwrap_or_else(|| default_n_min(cfg.kind, train_n)),
            kind: cfg.kind,
            reps: cfg.reps,
            seed: cfg.seed,
            ratios: cfg.ratios,
            lambda_grid: cfg.lambda_grid.clone(),
        },
        methods,
        timings: Timings {
            two_steps_s: two_s / d,
            one_step_s: one_s / d,
            ratio: if two_s > 0.0 {
                Some(one_s / two_s)
            } else {
                None
            },
        },
        reps_completed: completed,
        failures,
        lambda_counts,
    })
}
