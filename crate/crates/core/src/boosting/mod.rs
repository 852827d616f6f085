//! Contrast boosting. Estimation mode adds a per-region offset to `z` after
//! each tree; distribution mode composes per-region monotone QQ transforms.

mod transform;
mod zsource;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{quantile_sorted, ContrastSample, EmpiricalCdf, Frame, SampleMode, Value};
use crate::discrepancy::Measure;
use crate::error::{Error, Result};
use crate::rng::{self, purpose};
use crate::tree::{grow, ContrastTree, GrowConfig, NodeId, Payload};

pub use transform::{fit_qq_transform, knot_probabilities, transform_eval, TransformFn};
pub use zsource::ZSource;

pub const BOOST_VERSION: &str = "contrast-boost/1";

/// Window of the trailing running median used for early stopping.
pub const MEDIAN_WINDOW: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoostMode {
    Estimation,
    Distribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    /// Number of trees.
    pub trees: usize,
    /// Learning rate.
    pub alpha: f64,
    pub tree: GrowConfig,
    /// Transform knot count (distribution mode).
    pub knots: usize,
    pub seed: u64,
    /// Stop once the running median of the training trace has not improved
    /// for this many trees.
    #[serde(default)]
    pub patience: Option<usize>,
}

impl BoostConfig {
    /// Estimation defaults: 100 trees of 8 regions, rate 0.1.
    pub fn estimation(measure: Measure, n_rows: usize) -> Self {
        BoostConfig {
            trees: 100,
            alpha: 0.1,
            tree: GrowConfig {
                max_regions: 8,
                ..GrowConfig::new(measure, n_rows)
            },
            knots: 64,
            seed: 0,
            patience: Some(50),
        }
    }

    /// Distribution defaults: 400 trees of 8 regions, rate 0.1, 64 knots.
    pub fn distribution(n_rows: usize) -> Self {
        BoostConfig {
            trees: 400,
            ..BoostConfig::estimation(Measure::Ad, n_rows)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.tree.validate()?;
        if !(0.0..=1.0).contains(&self.alpha) || self.alpha.is_nan() {
            return Err(Error::Config("alpha must lie in [0, 1]".into()));
        }
        if self.knots < 2 {
            return Err(Error::Config("knot count must be at least 2".into()));
        }
        if self.patience == Some(0) {
            return Err(Error::Config("patience must be positive".into()));
        }
        Ok(())
    }
}

/// Average terminal discrepancy after each tree.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub train: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub version: String,
    pub mode: BoostMode,
    pub measure: Measure,
    pub config: BoostConfig,
    pub initial_z: ZSource,
    pub trees: Vec<ContrastTree>,
}

impl BoostModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: BoostModel = serde_json::from_str(text)?;
        if model.version != BOOST_VERSION {
            return Err(Error::Model(format!("unsupported model version {}", model.version)));
        }
        for tree in &model.trees {
            for id in tree.terminals() {
                let ok = match (&tree.node(id).and_then(|n| n.payload.clone()), model.mode) {
                    (Some(Payload::Offset { .. }), BoostMode::Estimation) => true,
                    (Some(Payload::Transform(_)), BoostMode::Distribution) => true,
                    _ => false,
                };
                if !ok {
                    return Err(Error::Model(format!("terminal {id} has a missing or mismatched payload")));
                }
            }
        }
        Ok(model)
    }

    pub fn schema(&self) -> Option<&[crate::dataset::ColumnSchema]> {
        self.trees.first().map(|t| t.schema())
    }

    fn require(&self, mode: BoostMode) -> Result<()> {
        if self.mode != mode {
            return Err(Error::Model(format!("operation needs a {mode:?} model, got {:?}", self.mode)));
        }
        Ok(())
    }
}

/// Trailing running median with the given window; entry `k` covers
/// `values[k + 1 - window ..= k]` (fewer at the start).
pub fn running_median(values: &[f64], window: usize) -> Vec<f64> {
    (0..values.len())
        .map(|k| {
            let lo = (k + 1).saturating_sub(window.max(1));
            let mut w = values[lo..=k].to_vec();
            w.sort_by(f64::total_cmp);
            let m = w.len();
            if m % 2 == 1 {
                w[m / 2]
            } else {
                0.5 * (w[m / 2 - 1] + w[m / 2])
            }
        })
        .collect()
}

/// Unweighted mean of the defined discrepancies of nonempty terminals.
fn mean_terminal_discrepancy(tree: &ContrastTree, parts: &std::collections::BTreeMap<NodeId, Vec<usize>>, y: &[f64], z: &[f64]) -> f64 {
    let measure = tree.measure();
    let mut sum = 0.0;
    let mut count = 0usize;
    for rows in parts.values().filter(|r| !r.is_empty()) {
        let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
        let zs: Vec<f64> = rows.iter().map(|&i| z[i]).collect();
        if let Ok(v) = measure.eval(&ys, &zs) {
            sum += v.d;
            count += 1;
        }
    }
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

fn stalled(trace: &[f64], patience: Option<usize>) -> bool {
    let Some(patience) = patience else { return false };
    let med = running_median(trace, MEDIAN_WINDOW);
    let Some(best_at) = med
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .map(|(k, _)| k)
    else {
        return false;
    };
    med.len() - 1 - best_at >= patience
}

fn paired_parts(sample: &ContrastSample) -> Result<(&[f64], Vec<f64>)> {
    match (sample.y(), sample.z()) {
        (Some(y), Some(z)) if sample.mode() == SampleMode::Paired => Ok((y, z.to_vec())),
        _ => Err(Error::Data("boosting needs a paired sample".into())),
    }
}

fn check_eval(sample: &ContrastSample, eval: Option<&ContrastSample>) -> Result<Option<(ContrastSample, Vec<f64>)>> {
    let Some(e) = eval else { return Ok(None) };
    let e = e.conform_to(&sample.x().schema())?;
    let (_, z) = paired_parts(&e)?;
    Ok(Some((e, z)))
}

/// Estimation boosting: each tree's terminals get the shrunk offset that
/// zeroes their discrepancy, and `z` is updated additively.
pub fn fit_estimation(sample: &ContrastSample, config: &BoostConfig, eval: Option<&ContrastSample>) -> Result<(BoostModel, TrainTrace)> {
    config.validate()?;
    let measure = config.tree.measure;
    if !measure.supports_offset() {
        return Err(Error::Config(format!("measure {measure} has no zeroing offset")));
    }
    if sample.n_rows() == 0 {
        return Err(Error::Data("cannot boost on an empty sample".into()));
    }
    let (y, mut z) = paired_parts(sample)?;
    let mut test = check_eval(sample, eval)?;
    let mut trees = Vec::new();
    let mut trace = TrainTrace {
        train: Vec::new(),
        test: test.as_ref().map(|_| Vec::new()),
    };
    for _ in 0..config.trees {
        let current = sample.with_z(z.clone())?;
        let mut tree = grow(&current, &config.tree)?;
        let parts = tree.partition(sample.x())?;
        trace.train.push(mean_terminal_discrepancy(&tree, &parts, y, &z));
        let mut deltas = std::collections::BTreeMap::new();
        for (&id, rows) in &parts {
            let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
            let zs: Vec<f64> = rows.iter().map(|&i| z[i]).collect();
            let delta = config.alpha * measure.zeroing_offset(&ys, &zs)?;
            tree.set_payload(id, Payload::Offset { delta });
            deltas.insert(id, delta);
            for &i in rows {
                z[i] += delta;
            }
        }
        if let Some((e, ez)) = test.as_mut() {
            let eparts = tree.partition(e.x())?;
            let ey = e.y().expect("paired");
            trace.test.as_mut().expect("test trace").push(mean_terminal_discrepancy(&tree, &eparts, ey, ez));
            for (id, rows) in &eparts {
                for &i in rows {
                    ez[i] += deltas[id];
                }
            }
        }
        let single = tree.n_terminals() == 1;
        trees.push(tree);
        if single || stalled(&trace.train, config.patience) {
            break;
        }
    }
    Ok((
        BoostModel {
            version: BOOST_VERSION.into(),
            mode: BoostMode::Estimation,
            measure,
            config: config.clone(),
            initial_z: ZSource::Column { name: "z".into() },
            trees,
        },
        trace,
    ))
}

fn offset_at(tree: &ContrastTree, id: NodeId) -> f64 {
    match tree.node(id).and_then(|n| n.payload.as_ref()) {
        Some(Payload::Offset { delta }) => *delta,
        _ => 0.0,
    }
}

/// `z0` plus the offsets of the regions containing `row`, in tree order.
pub fn predict_estimation(model: &BoostModel, row: &[Value], z0: f64) -> Result<f64> {
    model.require(BoostMode::Estimation)?;
    let mut z = z0;
    for tree in &model.trees {
        z += offset_at(tree, tree.apply(row)?);
    }
    Ok(z)
}

/// [`predict_estimation`] for every row of `x`.
pub fn predict_estimation_rows(model: &BoostModel, x: &Frame, z0: &[f64]) -> Result<Vec<f64>> {
    model.require(BoostMode::Estimation)?;
    if z0.len() != x.n_rows() {
        return Err(Error::Data("one starting z per row is required".into()));
    }
    let mut z = z0.to_vec();
    for tree in &model.trees {
        for (zi, id) in z.iter_mut().zip(tree.assign(x)?) {
            *zi += offset_at(tree, id);
        }
    }
    Ok(z)
}

fn transform_at(tree: &ContrastTree, id: NodeId) -> Option<&TransformFn> {
    match tree.node(id).and_then(|n| n.payload.as_ref()) {
        Some(Payload::Transform(g)) => Some(g),
        _ => None,
    }
}

/// Distribution boosting: each tree's terminals get a QQ transform of their
/// current `z` toward their `y`, and `z` is pushed through it.
///
/// `sample.z()` holds the starting values, drawn from `initial_z`.
pub fn fit_distribution(
    sample: &ContrastSample,
    config: &BoostConfig,
    initial_z: ZSource,
    eval: Option<&ContrastSample>,
) -> Result<(BoostModel, TrainTrace)> {
    config.validate()?;
    if sample.n_rows() == 0 {
        return Err(Error::Data("cannot boost on an empty sample".into()));
    }
    let (y, mut z) = paired_parts(sample)?;
    let mut test = check_eval(sample, eval)?;
    let mut trees = Vec::new();
    let mut trace = TrainTrace {
        train: Vec::new(),
        test: test.as_ref().map(|_| Vec::new()),
    };
    for _ in 0..config.trees {
        let current = sample.with_z(z.clone())?;
        let mut tree = grow(&current, &config.tree)?;
        let parts = tree.partition(sample.x())?;
        trace.train.push(mean_terminal_discrepancy(&tree, &parts, y, &z));
        let fitted: Vec<(NodeId, &Vec<usize>, TransformFn)> = parts
            .par_iter()
            .map(|(&id, rows)| {
                let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
                let zs: Vec<f64> = rows.iter().map(|&i| z[i]).collect();
                fit_qq_transform(&ys, &zs, config.knots, config.alpha).map(|g| (id, rows, g))
            })
            .collect::<Result<_>>()?;
        for (id, rows, g) in fitted {
            for &i in rows {
                z[i] = g.eval(z[i]);
            }
            tree.set_payload(id, Payload::Transform(g));
        }
        if let Some((e, ez)) = test.as_mut() {
            let eparts = tree.partition(e.x())?;
            let ey = e.y().expect("paired");
            trace.test.as_mut().expect("test trace").push(mean_terminal_discrepancy(&tree, &eparts, ey, ez));
            for (&id, rows) in &eparts {
                let g = transform_at(&tree, id).expect("every terminal has a transform");
                for &i in rows {
                    ez[i] = g.eval(ez[i]);
                }
            }
        }
        trees.push(tree);
        if stalled(&trace.train, config.patience) {
            break;
        }
    }
    Ok((
        BoostModel {
            version: BOOST_VERSION.into(),
            mode: BoostMode::Distribution,
            measure: config.tree.measure,
            config: config.clone(),
            initial_z,
            trees,
        },
        trace,
    ))
}

/// Pushes each value through the row's transform in every tree, in order.
pub fn transform_sample(model: &BoostModel, row: &[Value], z_values: &[f64]) -> Result<Vec<f64>> {
    model.require(BoostMode::Distribution)?;
    let mut out = z_values.to_vec();
    for tree in &model.trees {
        let id = tree.apply(row)?;
        let g = transform_at(tree, id).ok_or_else(|| Error::Model(format!("terminal {id} has no transform")))?;
        for v in out.iter_mut() {
            *v = g.eval(*v);
        }
    }
    Ok(out)
}

/// One transformed value per row of `x`.
pub fn transform_rows(model: &BoostModel, x: &Frame, z: &[f64]) -> Result<Vec<f64>> {
    model.require(BoostMode::Distribution)?;
    if z.len() != x.n_rows() {
        return Err(Error::Data("one z value per row is required".into()));
    }
    let mut out = z.to_vec();
    for tree in &model.trees {
        for (v, id) in out.iter_mut().zip(tree.assign(x)?) {
            let g = transform_at(tree, id).ok_or_else(|| Error::Model(format!("terminal {id} has no transform")))?;
            *v = g.eval(*v);
        }
    }
    Ok(out)
}

/// Estimated conditional distribution at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionEstimate {
    /// Transformed draws in draw order.
    pub draws: Vec<f64>,
    cdf: EmpiricalCdf,
}

impl DistributionEstimate {
    pub fn quantile(&self, p: f64) -> f64 {
        quantile_sorted(self.cdf.sorted_values(), p)
    }

    pub fn cdf(&self, t: f64) -> f64 {
        self.cdf.eval(t)
    }
}

/// Draws `n` starting values at `row` from the model's z source and
/// transforms them. `location` is required for residual-bootstrap models.
pub fn estimate_distribution(model: &BoostModel, row: &[Value], n: usize, location: Option<f64>, seed: u64) -> Result<DistributionEstimate> {
    model.require(BoostMode::Distribution)?;
    if n == 0 {
        return Err(Error::Config("at least one draw is required".into()));
    }
    let mut rng = rng::stream(seed, purpose::PREDICT, 0);
    let z = model.initial_z.draw_at(n, location, &mut rng)?;
    let draws = transform_sample(model, row, &z)?;
    let cdf = EmpiricalCdf::new(&draws)?;
    Ok(DistributionEstimate { draws, cdf })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Frame;
    use crate::tree::{Side, SplitRule, SplitSpec};

    fn sample(n: usize, seed: u64) -> ContrastSample {
        use rand::Rng as _;
        let mut r = rng::stream(seed, 99, 0);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random::<f64>(), r.random::<f64>()]).collect();
        let y: Vec<f64> = rows.iter().map(|x| 3.0 * x[0] + r.random::<f64>()).collect();
        let z: Vec<f64> = rows.iter().map(|x| x[1]).collect();
        ContrastSample::paired(Frame::from_rows(&rows).unwrap(), y, z).unwrap()
    }

    #[test]
    fn zero_trees_keep_initial_z() {
        let s = sample(100, 1);
        let cfg = BoostConfig {
            trees: 0,
            ..BoostConfig::estimation(Measure::MeanDiff, 100)
        };
        let (m, trace) = fit_estimation(&s, &cfg, None).unwrap();
        assert!(m.trees.is_empty());
        assert!(trace.train.is_empty());
        assert_eq!(predict_estimation(&m, &[Value::Num(0.5), Value::Num(0.5)], 2.5).unwrap(), 2.5);
    }

    fn stump(payloads: [Payload; 2]) -> ContrastTree {
        let split = SplitSpec {
            variable: 0,
            rule: SplitRule::Numeric { threshold: 0.0 },
            missing_goes: Side::Left,
            had_missing: false,
        };
        let leaf = |id: u64, p: &Payload| serde_json::json!({"id": id, "d": {"d": 0.0, "n_y": 1, "n_z": 1}, "n": 1, "payload": p});
        let doc = serde_json::json!({
            "version": crate::tree::TREE_VERSION,
            "measure": "mean-diff",
            "schema": [{"name": "x1", "kind": "numeric"}],
            "nodes": [
                {"id": 1, "split": split, "children": [2, 3], "d": {"d": 0.0, "n_y": 2, "n_z": 2}, "n": 2},
                leaf(2, &payloads[0]),
                leaf(3, &payloads[1]),
            ]
        });
        serde_json::from_value(doc).unwrap()
    }

    fn model(mode: BoostMode, trees: Vec<ContrastTree>) -> BoostModel {
        BoostModel {
            version: BOOST_VERSION.into(),
            mode,
            measure: Measure::MeanDiff,
            config: BoostConfig::estimation(Measure::MeanDiff, 10),
            initial_z: ZSource::StandardNormal,
            trees,
        }
    }

    #[test]
    fn offsets_add_along_the_path() {
        let t1 = stump([Payload::Offset { delta: 0.5 }, Payload::Offset { delta: 9.0 }]);
        let t2 = stump([Payload::Offset { delta: -0.2 }, Payload::Offset { delta: 9.0 }]);
        let m = model(BoostMode::Estimation, vec![t1, t2]);
        let z = predict_estimation(&m, &[Value::Num(-1.0)], 1.0).unwrap();
        assert!((z - 1.3).abs() < 1e-15);
        let back = BoostModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(predict_estimation(&back, &[Value::Num(-1.0)], 1.0).unwrap(), z);
    }

    #[test]
    fn transforms_compose_in_tree_order() {
        let double = TransformFn::from_knots(vec![(0.0, 0.0), (1.0, 2.0)]).unwrap();
        let shift = TransformFn::from_knots(vec![(0.0, 1.0)]).unwrap();
        let t1 = stump([Payload::Transform(double.clone()), Payload::Transform(double)]);
        let t2 = stump([Payload::Transform(shift.clone()), Payload::Transform(shift)]);
        let m = model(BoostMode::Distribution, vec![t1, t2]);
        assert_eq!(transform_sample(&m, &[Value::Num(1.0)], &[3.0, 0.0]).unwrap(), vec![7.0, 1.0]);
        let empty = model(BoostMode::Distribution, vec![]);
        assert_eq!(transform_sample(&empty, &[Value::Num(1.0)], &[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);
    }

    #[test]
    fn one_full_step_zeroes_mean_discrepancy() {
        let s = sample(400, 2);
        let cfg = BoostConfig {
            trees: 1,
            alpha: 1.0,
            ..BoostConfig::estimation(Measure::MeanDiff, 400)
        };
        let (m, _) = fit_estimation(&s, &cfg, None).unwrap();
        let z = predict_estimation_rows(&m, s.x(), s.z().unwrap()).unwrap();
        let parts = m.trees[0].partition(s.x()).unwrap();
        for rows in parts.values() {
            let ys: Vec<f64> = rows.iter().map(|&i| s.y().unwrap()[i]).collect();
            let zs: Vec<f64> = rows.iter().map(|&i| z[i]).collect();
            assert!(Measure::MeanDiff.eval(&ys, &zs).unwrap().d < 1e-12);
        }
    }

    #[test]
    fn zero_rate_distribution_boost_is_identity() {
        let s = sample(300, 3);
        let cfg = BoostConfig {
            trees: 3,
            alpha: 0.0,
            patience: None,
            ..BoostConfig::distribution(300)
        };
        let (m, trace) = fit_distribution(&s, &cfg, ZSource::StandardNormal, Some(&s)).unwrap();
        assert_eq!(trace.train.len(), 3);
        assert_eq!(trace.test.as_ref().unwrap().len(), 3);
        let out = transform_rows(&m, s.x(), s.z().unwrap()).unwrap();
        for (a, b) in out.iter().zip(s.z().unwrap()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn estimates_are_seeded_and_ordered() {
        let s = sample(300, 4);
        let cfg = BoostConfig {
            trees: 5,
            alpha: 0.5,
            ..BoostConfig::distribution(300)
        };
        let z0 = ZSource::StandardNormal.draw_training(300, None, 1).unwrap();
        let s = s.with_z(z0).unwrap();
        let (m, _) = fit_distribution(&s, &cfg, ZSource::StandardNormal, None).unwrap();
        let row = [Value::Num(0.7), Value::Num(0.2)];
        let a = estimate_distribution(&m, &row, 500, None, 11).unwrap();
        let b = estimate_distribution(&m, &row, 500, None, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.quantile(0.25) < a.quantile(0.5) && a.quantile(0.5) < a.quantile(0.75));
        let back = BoostModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(estimate_distribution(&back, &row, 500, None, 11).unwrap(), a);
    }

    #[test]
    fn running_median_examples() {
        assert_eq!(running_median(&[3.0, 1.0, 2.0, 5.0], 3), vec![3.0, 2.0, 2.0, 2.0]);
        assert!(stalled(&[1.0, 2.0, 3.0], Some(2)));
        assert!(!stalled(&[3.0, 2.0, 1.0], Some(2)));
    }
}
