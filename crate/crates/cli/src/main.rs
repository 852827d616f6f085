//! `contrast`: fit and apply contrast trees and contrast boosting models.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors, 3 for
//! data and model errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use contrast::boosting::{
    estimate_distribution, fit_distribution, fit_estimation, predict_estimation_rows, transform_rows, BoostConfig, BoostMode,
    BoostModel, TrainTrace, ZSource,
};
use contrast::dataset::{ColumnKind, ColumnRoles, ColumnSchema, CsvTable, SampleLayout};
use contrast::diagnostics::{
    average_terminal_discrepancy, bootstrap_se, contrast_curve, null_distribution, qq_csv, qq_regions, NullPipeline,
};
use contrast::rng::{self, purpose};
use contrast::simgen::{correlation, gen_asym_logistic, gen_hetero_from, HeteroModel, SimModel};
use contrast::tree::{default_min_node, region_report, regions_tsv, GrowConfig};
use contrast::{grow, ContrastSample, ContrastTree, Error, Frame, Measure};

#[derive(Parser)]
#[command(name = "contrast", version, about = "Contrast trees, contrast boosting and distribution boosting")]
struct Cli {
    /// Worker threads; results do not depend on it [default: all cores]
    #[arg(long, global = true, env = "CONTRAST_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grow one contrast tree and report its regions
    Contrast(ContrastArgs),
    /// Estimation boosting: additive per-region offsets to z
    Boost(BoostArgs),
    /// Distribution boosting: per-region monotone transforms of z
    Distboost(DistboostArgs),
    /// Apply a boosting model to new rows
    Predict(PredictArgs),
    /// Generate simulated data with a known conditional distribution
    Simulate(SimulateArgs),
    /// Same-distribution null for the average tree discrepancy
    Null(NullArgs),
    /// Quantile-quantile tables for the highest-discrepancy regions of a tree
    Qq(QqArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Input CSV with a header row
    #[arg(long)]
    data: PathBuf,
    /// Outcome column
    #[arg(long)]
    y: String,
    /// Contrasting column (paired data, or the second sample with --two-sample)
    #[arg(long)]
    z: Option<String>,
    /// Predictor columns [default: every column without another role]
    #[arg(long, value_delimiter = ',')]
    x: Option<Vec<String>>,
    /// Predictor columns to treat as categorical
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,
    /// Two-sample data in one outcome column: rows whose GROUP equals --first form the y sample
    #[arg(long, requires = "first")]
    group: Option<String>,
    /// Level of --group marking the y sample
    #[arg(long)]
    first: Option<String>,
    /// Two-sample data where each row fills exactly one of --y and --z
    #[arg(long, conflicts_with = "group")]
    two_sample: bool,
}

#[derive(Args, Clone)]
struct TreeArgs {
    /// Discrepancy measure: mean-abs, mean-diff, quantile-diff:P, ad, class-error, prob-diff, quantile-prob:P, ratio, inv-ratio
    #[arg(long)]
    measure: Option<Measure>,
    /// Maximum terminal regions
    #[arg(long)]
    max_regions: Option<usize>,
    /// Minimum rows per region (per sample for two-sample data) [default: max(20, N/200)]
    #[arg(long)]
    min_node: Option<usize>,
    /// Maximum thresholds tried per numeric predictor
    #[arg(long, default_value_t = 256)]
    candidates: usize,
}

impl TreeArgs {
    fn config(&self, default_measure: Measure, default_regions: usize, n_rows: usize) -> GrowConfig {
        GrowConfig {
            max_regions: self.max_regions.unwrap_or(default_regions),
            min_node: self.min_node.unwrap_or_else(|| default_min_node(n_rows)),
            max_numeric_candidates: self.candidates,
            measure: self.measure.unwrap_or(default_measure),
        }
    }
}

#[derive(Args)]
struct ContrastArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    tree: TreeArgs,
    /// Held-out CSV on which region statistics are recomputed
    #[arg(long)]
    eval: Option<PathBuf>,
    /// Bootstrap replicates for curve-endpoint standard errors (0 = off)
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BoostArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    tree: TreeArgs,
    /// Number of trees
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Learning rate in [0, 1]
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Stop after this many trees without running-median improvement (0 = never)
    #[arg(long, default_value_t = 50)]
    patience: usize,
    /// Terminal regions of the diagnostic tree behind curve.csv
    #[arg(long, default_value_t = 10)]
    curve_regions: usize,
    #[arg(long)]
    eval: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DistboostArgs {
    /// Input CSV with a header row
    #[arg(long)]
    data: PathBuf,
    /// Outcome column
    #[arg(long)]
    y: String,
    /// Predictor columns [default: every column without another role]
    #[arg(long, value_delimiter = ',')]
    x: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,
    #[command(flatten)]
    tree: TreeArgs,
    /// Starting z: std-normal, normal, marginal, residual:COLUMN or column:COLUMN
    #[arg(long, default_value = "std-normal")]
    z_source: String,
    #[arg(long, default_value_t = 400)]
    trees: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Quantile knots per transform
    #[arg(long, default_value_t = 64)]
    knots: usize,
    #[arg(long, default_value_t = 50)]
    patience: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    eval: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Model file written by boost or distboost
    #[arg(long)]
    model: PathBuf,
    /// CSV with the model's predictor columns
    #[arg(long)]
    data: PathBuf,
    /// Column with starting z values [default: the model's z column]
    #[arg(long)]
    z: Option<String>,
    /// Column with location estimates (residual-bootstrap models)
    #[arg(long)]
    location: Option<String>,
    /// Draws per row for distribution models
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Quantiles to report instead of the draws, e.g. 0.25,0.5,0.75
    #[arg(long, value_delimiter = ',')]
    quantiles: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimKind {
    AsymLogistic,
    Hetero,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "asym-logistic")]
    kind: SimKind,
    /// Rows to generate
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    p: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reuse the model parameters from an earlier sidecar JSON
    #[arg(long)]
    params: Option<PathBuf>,
    /// Output CSV; parameters go to the same path with a .json extension
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Pipeline {
    Tree,
    Boost,
}

#[derive(Args)]
struct NullArgs {
    /// Input CSV with a header row
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    y: String,
    /// Observed contrasting column; its tree discrepancy is compared to the null
    #[arg(long)]
    z: Option<String>,
    #[arg(long, value_delimiter = ',')]
    x: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,
    /// Location estimates for the residual bootstrap [default: the mean of y]
    #[arg(long)]
    location: Option<String>,
    #[arg(long, value_enum, default_value = "tree")]
    pipeline: Pipeline,
    #[arg(long, default_value_t = 50)]
    replicates: usize,
    #[command(flatten)]
    tree: TreeArgs,
    /// Boosting trees per replicate (boost pipeline)
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 64)]
    knots: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QqArgs {
    /// Tree file written by the contrast subcommand
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Number of regions, highest discrepancy first
    #[arg(long, default_value_t = 9)]
    top: usize,
    #[arg(long)]
    out: PathBuf,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => 2,
            _ => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn write(path: &Path, contents: &str) -> CliResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        out_dir(parent)?;
    }
    fs::write(path, contents).map_err(|e| {
        Failure::from(Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    })
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| {
        Failure::from(Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    })
}

fn out_dir(path: &Path) -> CliResult<PathBuf> {
    fs::create_dir_all(path).map_err(|e| {
        Failure::from(Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    })?;
    Ok(path.to_path_buf())
}

fn json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure::from(Error::Json(e)))?;
    s.push('\n');
    Ok(s)
}

impl DataArgs {
    fn roles(&self) -> ColumnRoles {
        let layout = match (&self.group, &self.first, self.two_sample) {
            (Some(column), Some(level), _) => SampleLayout::TwoSampleGroup {
                column: column.clone(),
                level: level.clone(),
            },
            (_, _, true) => SampleLayout::TwoSampleColumns,
            _ => SampleLayout::Paired,
        };
        ColumnRoles {
            y: self.y.clone(),
            z: self.z.clone(),
            x: self.x.clone(),
            categorical: self.categorical.clone(),
            aux: Vec::new(),
            layout,
        }
    }

    fn load(&self, path: &Path) -> CliResult<ContrastSample> {
        Ok(CsvTable::read(path)?.to_sample(&self.roles())?)
    }
}

fn categorical_names(schema: &[ColumnSchema]) -> Vec<String> {
    schema
        .iter()
        .filter(|c| c.kind == ColumnKind::Categorical)
        .map(|c| c.name.clone())
        .collect()
}

/// Predictor frame of `table` laid out like `schema`.
fn frame_for(table: &CsvTable, schema: &[ColumnSchema]) -> CliResult<Frame> {
    let names: Vec<String> = schema.iter().map(|c| c.name.clone()).collect();
    Ok(table.frame(&names, &categorical_names(schema))?.conform_to(schema)?)
}

fn trace_csv(trace: &TrainTrace) -> String {
    let mut s = String::from("tree,train,test\n");
    for (k, v) in trace.train.iter().enumerate() {
        let test = trace.test.as_ref().map_or(String::new(), |t| t[k].to_string());
        s.push_str(&format!("{},{},{}\n", k + 1, v, test));
    }
    s
}

#[derive(Serialize)]
struct TreeFile<'a> {
    #[serde(flatten)]
    tree: &'a ContrastTree,
    config: &'a GrowConfig,
}

fn cmd_contrast(a: &ContrastArgs) -> CliResult {
    let sample = a.data.load(&a.data.data)?;
    let measure = a.tree.measure.ok_or_else(|| usage("contrast needs --measure"))?;
    let cfg = a.tree.config(measure, 10, sample.n_rows());
    let tree = grow(&sample, &cfg)?;
    let eval = match &a.eval {
        Some(p) => a.data.load(p)?.conform_to(tree.schema())?,
        None => sample,
    };
    let report = region_report(&tree, &eval)?;
    let curve = contrast_curve(&tree, &eval)?;
    let dir = out_dir(&a.out)?;
    write(&dir.join("model.json"), &json(&TreeFile { tree: &tree, config: &cfg })?)?;
    write(&dir.join("regions.tsv"), &regions_tsv(&report))?;
    write(&dir.join("curve.csv"), &curve.to_csv())?;
    if a.bootstrap > 0 {
        let se = bootstrap_se(&tree, &eval, a.bootstrap, a.seed)?;
        write(&dir.join("bootstrap.json"), &json(&se)?)?;
    }
    println!("{} regions; worst d = {}, average d = {}", report.len(), curve.leftmost(), curve.rightmost());
    Ok(())
}

/// Contrast curve of a fresh diagnostic tree between `sample.y` and `z`.
fn diagnostic_curve(sample: &ContrastSample, z: Vec<f64>, cfg: &GrowConfig) -> CliResult<String> {
    let s = sample.with_z(z)?;
    let tree = grow(&s, cfg)?;
    Ok(contrast_curve(&tree, &s)?.to_csv())
}

fn patience(p: usize) -> Option<usize> {
    (p > 0).then_some(p)
}

fn cmd_boost(a: &BoostArgs) -> CliResult {
    let sample = a.data.load(&a.data.data)?;
    let z_name = a.data.z.clone().ok_or_else(|| usage("boost needs --z"))?;
    let tree = a.tree.config(Measure::MeanDiff, 8, sample.n_rows());
    let cfg = BoostConfig {
        trees: a.trees,
        alpha: a.alpha,
        tree: tree.clone(),
        knots: 64,
        seed: 0,
        patience: patience(a.patience),
    };
    let eval = match &a.eval {
        Some(p) => Some(a.data.load(p)?.conform_to(&sample.x().schema())?),
        None => None,
    };
    let (mut model, trace) = fit_estimation(&sample, &cfg, eval.as_ref())?;
    model.initial_z = ZSource::Column { name: z_name };
    let target = eval.as_ref().unwrap_or(&sample);
    let z0 = target.z().expect("paired").to_vec();
    let zhat = predict_estimation_rows(&model, target.x(), &z0)?;
    let curve_cfg = GrowConfig {
        max_regions: a.curve_regions,
        ..tree
    };
    let dir = out_dir(&a.out)?;
    write(&dir.join("model.json"), &json(&model)?)?;
    write(&dir.join("trace.csv"), &trace_csv(&trace))?;
    write(&dir.join("curve.csv"), &diagnostic_curve(target, zhat, &curve_cfg)?)?;
    write(&dir.join("curve_initial.csv"), &diagnostic_curve(target, z0, &curve_cfg)?)?;
    println!("fitted {} trees", model.trees.len());
    Ok(())
}

enum ZSpec {
    StdNormal,
    Normal,
    Marginal,
    Residual(String),
    Column(String),
}

fn parse_z_source(s: &str) -> CliResult<ZSpec> {
    Ok(match s.split_once(':') {
        None if s == "std-normal" => ZSpec::StdNormal,
        None if s == "normal" => ZSpec::Normal,
        None if s == "marginal" => ZSpec::Marginal,
        Some(("residual", c)) if !c.is_empty() => ZSpec::Residual(c.into()),
        Some(("column", c)) if !c.is_empty() => ZSpec::Column(c.into()),
        _ => return Err(usage(format!("unknown z source {s:?}"))),
    })
}

fn cmd_distboost(a: &DistboostArgs) -> CliResult {
    let spec = parse_z_source(&a.z_source)?;
    let aux = match &spec {
        ZSpec::Residual(c) | ZSpec::Column(c) => vec![c.clone()],
        _ => Vec::new(),
    };
    let roles = ColumnRoles {
        y: a.y.clone(),
        z: None,
        x: a.x.clone(),
        categorical: a.categorical.clone(),
        aux,
        layout: SampleLayout::Paired,
    };
    let table = CsvTable::read(&a.data)?;
    let names = table.predictor_names(&roles)?;
    let x = table.frame(&names, &a.categorical)?;
    let y = table.numeric(&a.y)?;
    let n = y.len();
    let source = match &spec {
        ZSpec::StdNormal => ZSource::StandardNormal,
        ZSpec::Normal => ZSource::normal_from(&y)?,
        ZSpec::Marginal => ZSource::marginal_from(&y)?,
        ZSpec::Residual(c) => ZSource::residual_from(&y, &table.numeric(c)?, c.clone())?,
        ZSpec::Column(c) => ZSource::Column { name: c.clone() },
    };
    let z0 = match &spec {
        ZSpec::Column(c) => table.numeric(c)?,
        ZSpec::Residual(c) => source.draw_training(n, Some(&table.numeric(c)?), a.seed)?,
        _ => source.draw_training(n, None, a.seed)?,
    };
    let sample = ContrastSample::paired(x, y, z0)?;
    let eval = match &a.eval {
        Some(p) => {
            let t = CsvTable::read(p)?;
            let ex = frame_for(&t, &sample.x().schema())?;
            let ey = t.numeric(&a.y)?;
            let eval_seed = rng::derive_seed(a.seed, purpose::Z_INIT, 1);
            let ez = match &spec {
                ZSpec::Column(c) => t.numeric(c)?,
                ZSpec::Residual(c) => source.draw_per_row(ey.len(), Some(&t.numeric(c)?), eval_seed)?,
                _ => source.draw_per_row(ey.len(), None, eval_seed)?,
            };
            Some(ContrastSample::paired(ex, ey, ez)?)
        }
        None => None,
    };
    let cfg = BoostConfig {
        trees: a.trees,
        alpha: a.alpha,
        tree: a.tree.config(Measure::Ad, 8, n),
        knots: a.knots,
        seed: a.seed,
        patience: patience(a.patience),
    };
    let (model, trace) = fit_distribution(&sample, &cfg, source, eval.as_ref())?;
    let dir = out_dir(&a.out)?;
    write(&dir.join("model.json"), &json(&model)?)?;
    write(&dir.join("trace.csv"), &trace_csv(&trace))?;
    println!("fitted {} trees", model.trees.len());
    Ok(())
}

fn fmt_row(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn cmd_predict(a: &PredictArgs) -> CliResult {
    let model = BoostModel::from_json(&read(&a.model)?)?;
    let table = CsvTable::read(&a.data)?;
    let Some(schema) = model.schema() else {
        return predict_without_trees(a, &model, &table);
    };
    let x = frame_for(&table, schema)?;
    let z_column = a.z.clone().or_else(|| match &model.initial_z {
        ZSource::Column { name } => Some(name.clone()),
        _ => None,
    });
    match (model.mode, &model.initial_z) {
        (BoostMode::Estimation, _) => {
            let col = z_column.ok_or_else(|| usage("predict needs --z for estimation models"))?;
            let z = predict_estimation_rows(&model, &x, &table.numeric(&col)?)?;
            write(&a.out, &single_column("yhat", &z))
        }
        (BoostMode::Distribution, ZSource::Column { .. }) => {
            let col = z_column.expect("column source");
            let z = transform_rows(&model, &x, &table.numeric(&col)?)?;
            write(&a.out, &single_column("yhat", &z))
        }
        (BoostMode::Distribution, source) => {
            let locations = location_values(a, source, &table)?;
            let rows: Vec<Vec<f64>> = (0..x.n_rows())
                .into_par_iter()
                .map(|i| {
                    let seed = rng::derive_seed(a.seed, purpose::PREDICT, i as u64);
                    let loc = locations.as_ref().map(|l| l[i]);
                    let est = estimate_distribution(&model, &x.row(i), a.n, loc, seed)?;
                    Ok(if a.quantiles.is_empty() {
                        est.draws
                    } else {
                        a.quantiles.iter().map(|&p| est.quantile(p)).collect()
                    })
                })
                .collect::<Result<_, Error>>()?;
            write(&a.out, &draws_csv(&a.quantiles, &rows))
        }
    }
}

fn location_values(a: &PredictArgs, source: &ZSource, table: &CsvTable) -> CliResult<Option<Vec<f64>>> {
    match source.location_column() {
        Some(default) => {
            let col = a.location.clone().unwrap_or_else(|| default.to_string());
            Ok(Some(table.numeric(&col)?))
        }
        None => Ok(None),
    }
}

fn check_quantiles(q: &[f64]) -> CliResult {
    if q.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
        return Err(usage("quantiles must lie in (0, 1)"));
    }
    Ok(())
}

fn draws_csv(quantiles: &[f64], rows: &[Vec<f64>]) -> String {
    let mut s = if quantiles.is_empty() {
        String::from("row,draw,yhat\n")
    } else {
        format!("{}\n", quantiles.iter().map(|p| format!("q{p}")).collect::<Vec<_>>().join(","))
    };
    for (i, r) in rows.iter().enumerate() {
        if quantiles.is_empty() {
            for (k, v) in r.iter().enumerate() {
                s.push_str(&format!("{},{},{}\n", i + 1, k + 1, v));
            }
        } else {
            s.push_str(&fmt_row(r));
            s.push('\n');
        }
    }
    s
}

fn single_column(name: &str, values: &[f64]) -> String {
    let mut s = format!("{name}\n");
    for v in values {
        s.push_str(&format!("{v}\n"));
    }
    s
}

/// A model with no trees predicts its starting values unchanged.
fn predict_without_trees(a: &PredictArgs, model: &BoostModel, table: &CsvTable) -> CliResult {
    let n = table.n_rows();
    let column = a.z.clone().or_else(|| name_of(&model.initial_z));
    match (&model.initial_z, model.mode) {
        (ZSource::Column { .. }, _) | (_, BoostMode::Estimation) => {
            let col = column.ok_or_else(|| usage("predict needs --z for estimation models"))?;
            write(&a.out, &single_column("yhat", &table.numeric(&col)?))
        }
        (source, BoostMode::Distribution) => {
            let locations = location_values(a, source, table)?;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let mut r = rng::stream(rng::derive_seed(a.seed, purpose::PREDICT, i as u64), purpose::PREDICT, 0);
                    let mut draws = source.draw_at(a.n, locations.as_ref().map(|l| l[i]), &mut r)?;
                    if a.quantiles.is_empty() {
                        Ok(draws)
                    } else {
                        draws.sort_by(f64::total_cmp);
                        Ok(a.quantiles.iter().map(|&p| contrast::dataset::quantile_sorted(&draws, p)).collect())
                    }
                })
                .collect::<Result<_, Error>>()?;
            write(&a.out, &draws_csv(&a.quantiles, &rows))
        }
    }
}

fn name_of(source: &ZSource) -> Option<String> {
    match source {
        ZSource::Column { name } => Some(name.clone()),
        _ => None,
    }
}

fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

#[derive(Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum Sidecar {
    AsymLogistic {
        n: usize,
        seed: u64,
        model: SimModel,
    },
    Hetero {
        n: usize,
        seed: u64,
        model: HeteroModel,
        signal_to_noise: f64,
        correlation_f_s: f64,
    },
}

fn cmd_simulate(a: &SimulateArgs) -> CliResult {
    if a.n == 0 {
        return Err(usage("--n must be positive"));
    }
    let previous: Option<Sidecar> = match &a.params {
        Some(p) => Some(serde_json::from_str(&read(p)?).map_err(|e| Failure::from(Error::Json(e)))?),
        None => None,
    };
    let header = |p: usize, extra: &[&str]| {
        let mut h: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
        h.extend(extra.iter().map(|s| s.to_string()));
        h.join(",")
    };
    let (csv, sidecar) = match a.kind {
        SimKind::AsymLogistic => {
            let model = match previous {
                Some(Sidecar::AsymLogistic { model, .. }) => model,
                Some(_) => return Err(usage("--params holds a different simulation kind")),
                None => SimModel::draw(a.p, a.seed, a.n)?,
            };
            let data = gen_asym_logistic(&model, a.n, a.seed)?;
            let mut s = header(model.p, &["y"]) + "\n";
            for (row, y) in data.rows.iter().zip(&data.y) {
                s.push_str(&format!("{},{}\n", fmt_row(row), y));
            }
            (s, Sidecar::AsymLogistic { n: a.n, seed: a.seed, model })
        }
        SimKind::Hetero => {
            let model = match previous {
                Some(Sidecar::Hetero { model, .. }) => model,
                Some(_) => return Err(usage("--params holds a different simulation kind")),
                None => HeteroModel::draw(a.p, a.seed, a.n)?,
            };
            let data = gen_hetero_from(&model, a.n, a.seed)?;
            let mut s = header(model.p, &["y", "f", "s"]) + "\n";
            for i in 0..a.n {
                s.push_str(&format!("{},{},{},{}\n", fmt_row(&data.data.rows[i]), data.data.y[i], data.f[i], data.s[i]));
            }
            let iqr = contrast::dataset::quantile(&data.f, 0.75)? - contrast::dataset::quantile(&data.f, 0.25)?;
            let snr = iqr / (2.0 * contrast::dataset::quantile(&data.s, 0.5)?);
            let cor = correlation(&data.f, &data.s);
            (
                s,
                Sidecar::Hetero {
                    n: a.n,
                    seed: a.seed,
                    model,
                    signal_to_noise: snr,
                    correlation_f_s: cor,
                },
            )
        }
    };
    write(&a.out, &csv)?;
    write(&sidecar_path(&a.out), &json(&sidecar)?)?;
    Ok(())
}

#[derive(Serialize)]
struct NullReport {
    pipeline: &'static str,
    replicates: usize,
    mean: f64,
    sd: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    observed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    consistent_with_null: Option<bool>,
    tree: GrowConfig,
}

fn cmd_null(a: &NullArgs) -> CliResult {
    let mut aux = Vec::new();
    if let Some(l) = &a.location {
        aux.push(l.clone());
    }
    let roles = ColumnRoles {
        y: a.y.clone(),
        z: a.z.clone(),
        x: a.x.clone(),
        categorical: a.categorical.clone(),
        aux,
        layout: SampleLayout::Paired,
    };
    let table = CsvTable::read(&a.data)?;
    let names = table.predictor_names(&roles)?;
    let x = table.frame(&names, &a.categorical)?;
    let y = table.numeric(&a.y)?;
    let n = y.len();
    let location = match &a.location {
        Some(c) => table.numeric(c)?,
        None => vec![y.iter().sum::<f64>() / n as f64; n],
    };
    let source = ZSource::residual_from(&y, &location, a.location.clone().unwrap_or_else(|| "mean".into()))?;
    let tree = a.tree.config(Measure::Ad, 10, n);
    let generator = |seed: u64| -> Result<ContrastSample, Error> {
        let ys = source.draw_training(n, Some(&location), rng::derive_seed(seed, purpose::NULL, 0))?;
        let zs = source.draw_training(n, Some(&location), rng::derive_seed(seed, purpose::NULL, 1))?;
        ContrastSample::paired(x.clone(), ys, zs)
    };
    let pipeline = match a.pipeline {
        Pipeline::Tree => NullPipeline::TreeOnly(tree.clone()),
        Pipeline::Boost => NullPipeline::FullBoost {
            boost: BoostConfig {
                trees: a.trees,
                alpha: a.alpha,
                tree: GrowConfig {
                    max_regions: 8,
                    ..tree.clone()
                },
                knots: a.knots,
                seed: a.seed,
                patience: None,
            },
            tree: tree.clone(),
        },
    };
    let summary = null_distribution(generator, &pipeline, a.replicates, a.seed)?;
    let observed = match &a.z {
        Some(c) => {
            let s = ContrastSample::paired(x.clone(), y.clone(), table.numeric(c)?)?;
            Some(average_terminal_discrepancy(&grow(&s, &tree)?))
        }
        None => None,
    };
    let report = NullReport {
        pipeline: match a.pipeline {
            Pipeline::Tree => "tree",
            Pipeline::Boost => "boost",
        },
        replicates: a.replicates,
        mean: summary.mean,
        sd: summary.sd,
        observed,
        consistent_with_null: observed.map(|o| summary.consistent(o, 2.0)),
        tree,
    };
    let dir = out_dir(&a.out)?;
    write(&dir.join("null.csv"), &summary.to_csv())?;
    write(&dir.join("null.json"), &json(&report)?)?;
    println!("null mean {} sd {}", summary.mean, summary.sd);
    Ok(())
}

fn cmd_qq(a: &QqArgs) -> CliResult {
    let tree = ContrastTree::from_json(&read(&a.model)?)?;
    let sample = a.data.load(&a.data.data)?.conform_to(tree.schema())?;
    let regions = qq_regions(&tree, &sample, a.top)?;
    write(&a.out, &qq_csv(&regions))
}

fn run(cli: Cli) -> CliResult {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| usage(format!("cannot configure threads: {e}")))?;
    }
    match &cli.command {
        Command::Contrast(a) => cmd_contrast(a),
        Command::Boost(a) => cmd_boost(a),
        Command::Distboost(a) => cmd_distboost(a),
        Command::Predict(a) => {
            check_quantiles(&a.quantiles)?;
            if a.n == 0 {
                return Err(usage("--n must be positive"));
            }
            cmd_predict(a)
        }
        Command::Simulate(a) => cmd_simulate(a),
        Command::Null(a) => cmd_null(a),
        Command::Qq(a) => cmd_qq(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_source_grammar() {
        assert!(matches!(parse_z_source("std-normal"), Ok(ZSpec::StdNormal)));
        assert!(matches!(parse_z_source("residual:m"), Ok(ZSpec::Residual(c)) if c == "m"));
        assert!(matches!(parse_z_source("column:z0"), Ok(ZSpec::Column(c)) if c == "z0"));
        assert!(parse_z_source("column:").is_err());
        assert!(parse_z_source("gamma").is_err());
    }

    #[test]
    fn trace_rows_match_trees() {
        let t = TrainTrace {
            train: vec![0.5, 0.25],
            test: None,
        };
        assert_eq!(trace_csv(&t), "tree,train,test\n1,0.5,\n2,0.25,\n");
    }

    #[test]
    fn quantile_header() {
        assert_eq!(draws_csv(&[0.25, 0.5], &[vec![1.0, 2.0]]), "q0.25,q0.5\n1,2\n");
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
