mod model;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use model::{ModelConfig, ModelFile};
use optforest::bench::{
    load_csv, load_features_csv, load_from_manifest, load_manifest, mafe, msfe, run_benchmark,
    BenchConfig, DEFAULT_LAMBDA_GRID, DEFAULT_RATIOS,
};
use optforest::forest::{combine_predictions, Forest, WeightMethod};
use optforest::grow::{default_n_min, default_q, GrowConfig};
use optforest::importance::{prob_sequence_from_importance, variable_importance};
use optforest::oracle::{optimality_ratio_study, MuFunction, NMinRule, NoiseModel, StudyConfig};
use optforest::rng::{derive_seed, TAG_IMPORTANCE};
use optforest::tree::TreeKind;
use optforest::weights::{
    crf_weights, solve_one_step, solve_two_steps, wrf_weights, CriterionContext, WeightVector,
};
use optforest::Dataset;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "optforest",
    version,
    about = "Weighted random forests for regression"
)]
struct Cli {
    /// Worker threads for tree growth and replications (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a forest and its tree weights on a CSV dataset
    Fit(FitArgs),
    /// Predict with a fitted model file
    Predict(PredictArgs),
    /// Replicated train/test evaluation of all five weighting methods
    Bench(BenchArgs),
    /// Synthetic study of the loss ratio against the infeasible optimum
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Rf,
    #[value(name = "1step")]
    OneStep,
    #[value(name = "2steps")]
    TwoSteps,
    Wrf,
    Crf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Cart,
    Sut,
}

impl From<KindArg> for TreeKind {
    fn from(k: KindArg) -> TreeKind {
        match k {
            KindArg::Cart => TreeKind::Cart,
            KindArg::Sut => TreeKind::Sut,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// CSV file with a header row
    #[arg(long)]
    data: PathBuf,
    /// Response column name
    #[arg(long)]
    target: String,
    #[arg(long, value_enum, default_value = "2steps")]
    method: MethodArg,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Feature subsample size per split (default ceil(p/3))
    #[arg(long)]
    q: Option<usize>,
    /// Minimum node size (default sqrt(n) for CART, 5 for SUT)
    #[arg(long = "min-leaf")]
    min_leaf: Option<u32>,
    #[arg(long = "tree-kind", value_enum, default_value = "cart")]
    tree_kind: KindArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Inverse-error exponent for the wrf method
    #[arg(long, default_value_t = 2.0)]
    lambda: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Response column to score against, when present in the CSV
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Dataset manifest (JSON array of {name, path, target, expected_n, expected_p})
    #[arg(long, requires = "dataset", conflicts_with_all = ["data", "target"])]
    manifest: Option<PathBuf>,
    /// Dataset name inside the manifest
    #[arg(long)]
    dataset: Option<String>,
    /// Direct CSV path (alternative to a manifest)
    #[arg(long, requires = "target")]
    data: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long = "min-leaf")]
    min_leaf: Option<u32>,
    #[arg(long = "tree-kind", value_enum, default_value = "cart")]
    tree_kind: KindArg,
    /// Replications D
    #[arg(long, default_value_t = 50)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated λ grid for the wrf tuning
    #[arg(long = "lambda-grid", value_delimiter = ',', num_args = 1..)]
    lambda_grid: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "json")]
    format: BenchFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BenchFormat {
    Json,
    Md,
}

#[derive(Args)]
struct SimulateArgs {
    /// Comma-separated sample sizes
    #[arg(long = "n-grid", value_delimiter = ',', num_args = 1.., default_values_t = [200usize, 500, 1000])]
    n_grid: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    p: usize,
    #[arg(long, value_enum, default_value = "linear")]
    mu: MuArg,
    #[arg(long, value_enum, default_value = "homo")]
    noise: NoiseArg,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 50)]
    trees: usize,
    #[arg(long)]
    q: Option<usize>,
    /// Minimum node size: an integer, or "sqrt" for ceil(sqrt(n))
    #[arg(long = "min-leaf", default_value = "5")]
    min_leaf: String,
    #[arg(long = "tree-kind", value_enum, default_value = "sut")]
    tree_kind: KindArg,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the slower cubic-criterion solve per replication
    #[arg(long = "skip-one-step", default_value_t = false)]
    skip_one_step: bool,
    #[arg(long, value_enum, default_value = "json")]
    format: SimFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SimFormat {
    Json,
    Txt,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MuArg {
    Linear,
    Friedman,
    Step,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NoiseArg {
    Homo,
    Hetero,
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("warning: could not set thread pool size: {e}");
        }
    }
    let code = match run(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    std::process::exit(code);
}

fn run(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::Fit(args) => cmd_fit(args).map(|_| 0),
        Cmd::Predict(args) => cmd_predict(args).map(|_| 0),
        Cmd::Bench(args) => cmd_bench(args),
        Cmd::Simulate(args) => cmd_simulate(args).map(|_| 0),
    }
}

fn grow_config_for(
    data: &Dataset,
    kind: TreeKind,
    q: Option<usize>,
    min_leaf: Option<u32>,
    seed: u64,
) -> Result<GrowConfig> {
    let q = q.unwrap_or_else(|| default_q(data.p()));
    let n_min = min_leaf.unwrap_or_else(|| default_n_min(kind, data.n()));
    Ok(match kind {
        TreeKind::Cart => GrowConfig::cart(q, n_min),
        TreeKind::Sut => {
            // no validation split here: the probability sequence comes
            // from CART importances on the training data itself
            let imp_cfg = GrowConfig::cart(q, default_n_min(TreeKind::Cart, data.n()));
            let imp =
                variable_importance(data, &imp_cfg, 100, derive_seed(seed, TAG_IMPORTANCE, 0))?;
            GrowConfig::sut(q, n_min, prob_sequence_from_importance(&imp))
        }
    })
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let data = load_csv(&args.data, &args.target)?;
    let kind: TreeKind = args.tree_kind.into();
    let cfg = grow_config_for(&data, kind, args.q, args.min_leaf, args.seed)?;
    let mut forest = Forest::grow(&data, &cfg, args.trees, args.seed)?;

    let mut solve_report = None;
    let mut lambda = None;
    let (weights, method) = match args.method {
        MethodArg::Rf => (WeightVector::equal(args.trees), WeightMethod::Rf),
        MethodArg::OneStep | MethodArg::TwoSteps => {
            forest.build_hats(&data)?;
            let ctx = CriterionContext::new(forest.hats().expect("hats built"), data.y())?;
            let report = if args.method == MethodArg::OneStep {
                solve_one_step(&ctx)?
            } else {
                solve_two_steps(&ctx)?
            };
            let w = report.weights.clone();
            let m = if args.method == MethodArg::OneStep {
                WeightMethod::OneStep
            } else {
                WeightMethod::TwoSteps
            };
            solve_report = Some(report);
            (w, m)
        }
        MethodArg::Wrf => {
            lambda = Some(args.lambda);
            (wrf_weights(&forest, &data, args.lambda)?, WeightMethod::Wrf)
        }
        MethodArg::Crf => (crf_weights(&forest, &data)?, WeightMethod::Crf),
    };
    forest.set_weights(weights.clone(), method)?;

    let model = ModelFile {
        schema_version: 1,
        method: method.name().into(),
        tree_kind: kind,
        weights,
        solve_report,
        lambda,
        feature_names: data.names().to_vec(),
        config: ModelConfig {
            trees: args.trees,
            q: cfg.q,
            n_min: cfg.n_min,
            seed: args.seed,
        },
        trees: forest.trees().iter().map(|t| t.root().clone()).collect(),
    };
    model.save(&args.out)?;
    println!(
        "fitted {} ({} trees, method {}) -> {}",
        args.data.display(),
        args.trees,
        method,
        args.out.display()
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct PredictionsFile {
    schema_version: u32,
    n: usize,
    predictions: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    msfe: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mafe: Option<f64>,
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let model = ModelFile::load(&args.model)?;
    let trees = model.regression_trees()?;

    // when a target column is named, score against it; otherwise every
    // column is a feature
    let (x, y): (optforest::Matrix, Option<Vec<f64>>) = match &args.target {
        Some(t) => {
            let d = load_csv(&args.data, t)?;
            (d.x().clone(), Some(d.y().to_vec()))
        }
        None => {
            let (x, _names) = load_features_csv(&args.data)?;
            (x, None)
        }
    };
    let p = model.feature_names.len();
    if x.ncols() != p {
        bail!("{} feature columns, model expects {p}", x.ncols());
    }
    let per_tree: Vec<Vec<f64>> = trees
        .iter()
        .map(|t| x.iter_rows().map(|row| t.predict_row(row)).collect())
        .collect();
    let predictions = combine_predictions(&per_tree, model.weights.as_slice());

    let (m1, m2) = match &y {
        Some(y) => (Some(msfe(&predictions, y)?), Some(mafe(&predictions, y)?)),
        None => (None, None),
    };
    let out = PredictionsFile {
        schema_version: 1,
        n: predictions.len(),
        predictions,
        msfe: m1,
        mafe: m2,
    };
    write_output(&args.out, &serde_json::to_string_pretty(&out)?)?;
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<i32> {
    let (data, name) = match (&args.manifest, &args.data) {
        (Some(manifest_path), None) => {
            let name = args
                .dataset
                .clone()
                .context("--dataset is required with --manifest")?;
            let entries = load_manifest(manifest_path)?;
            let entry = entries
                .iter()
                .find(|e| e.name == name)
                .with_context(|| format!("dataset '{name}' not in manifest"))?;
            let dir = manifest_path.parent().unwrap_or(Path::new("."));
            (load_from_manifest(dir, entry)?, name)
        }
        (None, Some(csv_path)) => {
            let target = args
                .target
                .clone()
                .context("--target is required with --data")?;
            let name = csv_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into());
            (load_csv(csv_path, &target)?, name)
        }
        _ => bail!("provide either --manifest with --dataset, or --data with --target"),
    };

    let cfg = BenchConfig {
        m_trees: args.trees,
        q: args.q,
        n_min: args.min_leaf,
        kind: args.tree_kind.into(),
        reps: args.reps,
        seed: args.seed,
        ratios: DEFAULT_RATIOS,
        lambda_grid: args
            .lambda_grid
            .unwrap_or_else(|| DEFAULT_LAMBDA_GRID.to_vec()),
    };
    let report = run_benchmark(&data, &name, &cfg)?;
    let text = match args.format {
        BenchFormat::Json => serde_json::to_string_pretty(&report)?,
        BenchFormat::Md => report.to_markdown(),
    };
    write_output(&args.out, &text)?;
    if report.failures > 0 {
        eprintln!("{} replications failed", report.failures);
        return Ok(2);
    }
    Ok(0)
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let n_min = match args.min_leaf.as_str() {
        "sqrt" => NMinRule::SqrtN,
        v => NMinRule::Fixed(
            v.parse::<u32>()
                .with_context(|| format!("--min-leaf must be an integer or 'sqrt', got {v:?}"))?,
        ),
    };
    let cfg = StudyConfig {
        n_values: args.n_grid,
        p: args.p,
        m_trees: args.trees,
        kind: args.tree_kind.into(),
        n_min,
        q: args.q,
        reps: args.reps,
        seed: args.seed,
        mu: match args.mu {
            MuArg::Linear => MuFunction::Linear,
            MuArg::Friedman => MuFunction::Friedman,
            MuArg::Step => MuFunction::Step,
        },
        noise: match args.noise {
            NoiseArg::Homo => NoiseModel::Homo(args.sigma),
            NoiseArg::Hetero => NoiseModel::Hetero(args.sigma),
        },
        include_one_step: !args.skip_one_step,
    };
    let report = optimality_ratio_study(&cfg)?;
    let text = match args.format {
        SimFormat::Json => serde_json::to_string_pretty(&report)?,
        SimFormat::Txt => report.to_text_table(),
    };
    write_output(&args.out, &text)?;
    Ok(())
}

fn write_output(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}
