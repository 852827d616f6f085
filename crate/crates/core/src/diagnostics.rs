//! Summaries of fitted trees: lack-of-fit contrast curves, per-region QQ
//! tables, bootstrap standard errors and same-distribution null calibration.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boosting::{fit_distribution, transform_rows, BoostConfig, ZSource};
use crate::dataset::{quantile_sorted, ContrastSample};
use crate::error::{Error, Result};
use crate::rng::{self, purpose};
use crate::tree::{grow, ContrastTree, GrowConfig, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub fraction: f64,
    pub mean_discrepancy: f64,
}

/// Mean assigned discrepancy of the top fraction of observations, one point
/// per region boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastCurve {
    pub points: Vec<CurvePoint>,
}

/// A region's evaluation: id, row count and discrepancy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionStat {
    pub id: NodeId,
    pub n: usize,
    pub d: f64,
}

impl ContrastCurve {
    /// Builds the curve from region statistics. Regions are ranked by
    /// descending discrepancy (ties by id); each point is the correctly
    /// rounded count-weighted mean of the regions ranked so far, so the
    /// curve is exactly nonincreasing and its ends are exact.
    pub fn from_regions(regions: &[RegionStat]) -> Result<Self> {
        let mut r: Vec<RegionStat> = regions.iter().copied().filter(|s| s.n > 0).collect();
        if r.is_empty() {
            return Err(Error::Data("contrast curve needs at least one nonempty region".into()));
        }
        if r.iter().any(|s| !s.d.is_finite()) {
            return Err(Error::Data("region discrepancies must be finite".into()));
        }
        r.sort_by(|a, b| b.d.total_cmp(&a.d).then(a.id.cmp(&b.id)));
        let total: usize = r.iter().map(|s| s.n).sum();
        let mut sum = BigRational::from_integer(BigInt::from(0));
        let mut count = 0usize;
        let points = r
            .iter()
            .map(|s| {
                let d = BigRational::from_float(s.d).expect("finite");
                sum += d * BigRational::from_integer(BigInt::from(s.n));
                count += s.n;
                let mean = &sum / BigRational::from_integer(BigInt::from(count));
                CurvePoint {
                    fraction: count as f64 / total as f64,
                    mean_discrepancy: mean.to_f64().expect("finite mean"),
                }
            })
            .collect();
        Ok(ContrastCurve { points })
    }

    /// Value at the smallest fraction: the largest region discrepancy.
    pub fn leftmost(&self) -> f64 {
        self.points[0].mean_discrepancy
    }

    /// Value at fraction 1: the count-weighted mean discrepancy.
    pub fn rightmost(&self) -> f64 {
        self.points[self.points.len() - 1].mean_discrepancy
    }

    /// Plain mean of the point values, a one-number summary of the curve.
    pub fn mean(&self) -> f64 {
        self.points.iter().map(|p| p.mean_discrepancy).sum::<f64>() / self.points.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("fraction,mean_discrepancy\n");
        for p in &self.points {
            s.push_str(&format!("{},{}\n", p.fraction, p.mean_discrepancy));
        }
        s
    }
}

/// Discrepancy of each nonempty terminal of `tree` recomputed on `sample`.
/// Regions where the measure is undefined are left out.
pub fn region_stats(tree: &ContrastTree, sample: &ContrastSample) -> Result<Vec<RegionStat>> {
    let parts = tree.partition(sample.x())?;
    Ok(parts
        .into_iter()
        .filter(|(_, rows)| !rows.is_empty())
        .filter_map(|(id, rows)| {
            let (ys, zs) = sample.sides(&rows);
            tree.measure().eval(&ys, &zs).ok().map(|v| RegionStat { id, n: rows.len(), d: v.d })
        })
        .collect())
}

/// Contrast curve of `tree` evaluated on `sample`.
pub fn contrast_curve(tree: &ContrastTree, sample: &ContrastSample) -> Result<ContrastCurve> {
    ContrastCurve::from_regions(&region_stats(tree, sample)?)
}

/// Unweighted mean of the training discrepancies of the terminals.
pub fn average_terminal_discrepancy(tree: &ContrastTree) -> f64 {
    let ids = tree.terminals();
    let sum: f64 = ids.iter().map(|&id| tree.node(id).expect("terminal").d.d).sum();
    sum / ids.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionQq {
    pub id: NodeId,
    pub d: f64,
    /// `(p, z quantile, y quantile)`.
    pub points: Vec<(f64, f64, f64)>,
}

/// Matched quantiles of `z` and `y` in the `top_k` highest-discrepancy
/// regions, at `(j - 0.5) / min(region size, 200)`.
pub fn qq_regions(tree: &ContrastTree, sample: &ContrastSample, top_k: usize) -> Result<Vec<RegionQq>> {
    let stats = region_stats(tree, sample)?;
    let mut ranked = stats;
    ranked.sort_by(|a, b| b.d.total_cmp(&a.d).then(a.id.cmp(&b.id)));
    let parts = tree.partition(sample.x())?;
    Ok(ranked
        .into_iter()
        .take(top_k)
        .map(|s| {
            let (mut ys, mut zs) = sample.sides(&parts[&s.id]);
            ys.sort_by(f64::total_cmp);
            zs.sort_by(f64::total_cmp);
            let count = ys.len().min(zs.len()).min(200);
            let points = (1..=count)
                .map(|j| {
                    let p = (j as f64 - 0.5) / count as f64;
                    (p, quantile_sorted(&zs, p), quantile_sorted(&ys, p))
                })
                .collect();
            RegionQq { id: s.id, d: s.d, points }
        })
        .collect())
}

pub fn qq_csv(regions: &[RegionQq]) -> String {
    let mut s = String::from("region_id,p,z_q,y_q\n");
    for r in regions {
        for (p, zq, yq) in &r.points {
            s.push_str(&format!("{},{},{},{}\n", r.id, p, zq, yq));
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapSe {
    pub leftmost_se: f64,
    pub rightmost_se: f64,
    pub replicates: usize,
    /// Region evaluations dropped because a resample left them empty or
    /// undefined, summed over replicates.
    pub skipped_regions: usize,
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Standard errors of the curve endpoints by resampling rows with the tree
/// held fixed.
pub fn bootstrap_se(tree: &ContrastTree, sample: &ContrastSample, replicates: usize, seed: u64) -> Result<BootstrapSe> {
    if replicates < 20 {
        return Err(Error::Config("bootstrap needs at least 20 replicates".into()));
    }
    let n = sample.n_rows();
    if n == 0 {
        return Err(Error::Data("bootstrap needs a nonempty sample".into()));
    }
    let n_regions = tree.partition(sample.x())?.values().filter(|r| !r.is_empty()).count();
    let reps: Vec<(f64, f64, usize)> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, purpose::BOOTSTRAP, b as u64);
            let rows: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
            let resampled = sample.select_rows(&rows);
            let stats = region_stats(tree, &resampled)?;
            let curve = ContrastCurve::from_regions(&stats)?;
            Ok((curve.leftmost(), curve.rightmost(), n_regions.saturating_sub(stats.len())))
        })
        .collect::<Result<_>>()?;
    let left: Vec<f64> = reps.iter().map(|r| r.0).collect();
    let right: Vec<f64> = reps.iter().map(|r| r.1).collect();
    Ok(BootstrapSe {
        leftmost_se: sample_sd(&left),
        rightmost_se: sample_sd(&right),
        replicates,
        skipped_regions: reps.iter().map(|r| r.2).sum(),
    })
}

/// What each null replicate runs.
#[derive(Debug, Clone, PartialEq)]
pub enum NullPipeline {
    /// One contrast tree on the same-distribution pair.
    TreeOnly(GrowConfig),
    /// Distribution boosting on one pair, then a contrast tree between `y`
    /// and the transformed `z` of a second, independent pair.
    FullBoost { boost: BoostConfig, tree: GrowConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullSummary {
    pub replicates: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

impl NullSummary {
    fn from_values(replicates: Vec<f64>) -> Self {
        let mean = replicates.iter().sum::<f64>() / replicates.len() as f64;
        let sd = sample_sd(&replicates);
        NullSummary { replicates, mean, sd }
    }

    /// Whether `observed` lies within `mean +- k * sd`.
    pub fn consistent(&self, observed: f64, k: f64) -> bool {
        (observed - self.mean).abs() <= k * self.sd
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("replicate,discrepancy\n");
        for (i, v) in self.replicates.iter().enumerate() {
            s.push_str(&format!("{},{}\n", i + 1, v));
        }
        s
    }
}

/// Average terminal discrepancy of a tree contrasting `eval.y` with the
/// `eval.z` values transformed by a distribution boost fit on `train`.
pub fn boosted_discrepancy(train: &ContrastSample, eval: &ContrastSample, boost: &BoostConfig, tree: &GrowConfig) -> Result<f64> {
    let (model, _) = fit_distribution(train, boost, ZSource::Column { name: "z".into() }, None)?;
    let eval = eval.conform_to(&train.x().schema())?;
    let z = eval.z().ok_or_else(|| Error::Data("null replicates need paired samples".into()))?;
    let zhat = transform_rows(&model, eval.x(), z)?;
    let t = grow(&eval.with_z(zhat)?, tree)?;
    Ok(average_terminal_discrepancy(&t))
}

/// Replicated average tree discrepancy on pairs drawn from one
/// distribution. `generator(seed)` must return a paired sample whose `y`
/// and `z` share a conditional distribution.
pub fn null_distribution<G>(generator: G, pipeline: &NullPipeline, replicates: usize, seed: u64) -> Result<NullSummary>
where
    G: Fn(u64) -> Result<ContrastSample> + Sync,
{
    if replicates < 2 {
        return Err(Error::Config("null distribution needs at least two replicates".into()));
    }
    let values: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let draw = |k: u64| generator(rng::derive_seed(seed, purpose::NULL, 2 * r as u64 + k));
            match pipeline {
                NullPipeline::TreeOnly(cfg) => Ok(average_terminal_discrepancy(&grow(&draw(0)?, cfg)?)),
                NullPipeline::FullBoost { boost, tree } => boosted_discrepancy(&draw(0)?, &draw(1)?, boost, tree),
            }
        })
        .collect::<Result<_>>()?;
    Ok(NullSummary::from_values(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Frame;
    use crate::discrepancy::Measure;
    use proptest::prelude::*;

    #[test]
    fn two_region_example() {
        let c = ContrastCurve::from_regions(&[
            RegionStat { id: 3, n: 70, d: 0.1 },
            RegionStat { id: 2, n: 30, d: 0.4 },
        ])
        .unwrap();
        assert_eq!(c.points.len(), 2);
        assert_eq!(c.leftmost(), 0.4);
        assert!((c.points[0].fraction - 0.3).abs() < 1e-15);
        assert!((c.rightmost() - 0.19).abs() < 1e-15);
        assert_eq!(c.points[1].fraction, 1.0);
        assert!(c.to_csv().starts_with("fraction,mean_discrepancy\n"));
    }

    #[test]
    fn single_region_curve_is_flat() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..60).map(|i| (i % 3) as f64).collect();
        let z = vec![0.5; 60];
        let s = ContrastSample::paired(Frame::from_rows(&rows).unwrap(), y.clone(), z.clone()).unwrap();
        let t = grow(&s, &GrowConfig { max_regions: 1, ..GrowConfig::new(Measure::MeanDiff, 60) }).unwrap();
        let c = contrast_curve(&t, &s).unwrap();
        assert_eq!(c.points.len(), 1);
        assert_eq!(c.leftmost(), Measure::MeanDiff.eval(&y, &z).unwrap().d);
    }

    #[test]
    fn bootstrap_of_constant_discrepancy_is_zero() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let z: Vec<f64> = y.iter().map(|v| v + 1.0).collect();
        let s = ContrastSample::paired(Frame::from_rows(&rows).unwrap(), y, z).unwrap();
        let t = grow(&s, &GrowConfig::new(Measure::MeanAbs, 100)).unwrap();
        let a = bootstrap_se(&t, &s, 25, 4).unwrap();
        assert_eq!(a.leftmost_se, 0.0);
        assert_eq!(a.rightmost_se, 0.0);
        assert!(bootstrap_se(&t, &s, 10, 4).is_err());
    }

    #[test]
    fn bootstrap_is_seeded() {
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..200).map(|i| ((i * 7919) % 13) as f64).collect();
        let z = vec![6.0; 200];
        let s = ContrastSample::paired(Frame::from_rows(&rows).unwrap(), y, z).unwrap();
        let t = grow(&s, &GrowConfig::new(Measure::MeanDiff, 200)).unwrap();
        assert_eq!(bootstrap_se(&t, &s, 30, 9).unwrap(), bootstrap_se(&t, &s, 30, 9).unwrap());
    }

    #[test]
    fn qq_on_scaled_region_has_slope_two() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64]).collect();
        let z: Vec<f64> = (0..50).map(|i| ((i * 17) % 50) as f64).collect();
        let y: Vec<f64> = (0..50).map(|i| 2.0 * ((i * 31) % 50) as f64).collect();
        let s = ContrastSample::paired(Frame::from_rows(&rows).unwrap(), y, z).unwrap();
        let t = grow(&s, &GrowConfig { max_regions: 1, ..GrowConfig::new(Measure::Ad, 50) }).unwrap();
        let qq = qq_regions(&t, &s, 9).unwrap();
        assert_eq!(qq.len(), 1);
        assert_eq!(qq[0].points.len(), 50);
        assert!(qq[0].points.iter().all(|(_, zq, yq)| *yq == 2.0 * zq));
        assert!(qq_csv(&qq).starts_with("region_id,p,z_q,y_q\n"));
    }

    #[test]
    fn identical_pairs_give_zero_null() {
        let generator = |seed: u64| {
            let mut r = rng::stream(seed, 1, 0);
            let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![r.random::<f64>()]).collect();
            let y: Vec<f64> = rows.iter().map(|x| x[0] + r.random::<f64>()).collect();
            ContrastSample::paired(Frame::from_rows(&rows)?, y.clone(), y)
        };
        let null = null_distribution(generator, &NullPipeline::TreeOnly(GrowConfig::new(Measure::Ad, 200)), 5, 1).unwrap();
        assert_eq!(null.replicates, vec![0.0; 5]);
        assert_eq!((null.mean, null.sd), (0.0, 0.0));
        assert!(null.consistent(0.0, 2.0));
    }

    proptest! {
        // Discrepancies on a dyadic grid make `sum(n * d)` exact in f64, so a
        // single division gives the correctly rounded weighted mean.
        #[test]
        fn curve_contracts(regions in prop::collection::vec((1usize..500, 0u32..64), 1..40)) {
            let stats: Vec<RegionStat> = regions
                .iter()
                .enumerate()
                .map(|(k, &(n, q))| RegionStat { id: k as NodeId + 2, n, d: q as f64 / 32.0 })
                .collect();
            let c = ContrastCurve::from_regions(&stats).unwrap();
            for w in c.points.windows(2) {
                prop_assert!(w[1].mean_discrepancy <= w[0].mean_discrepancy);
                prop_assert!(w[1].fraction > w[0].fraction);
            }
            let max = stats.iter().map(|s| s.d).fold(f64::MIN, f64::max);
            prop_assert_eq!(c.leftmost(), max);
            let num: f64 = stats.iter().map(|s| s.n as f64 * s.d).sum();
            let den: f64 = stats.iter().map(|s| s.n as f64).sum();
            prop_assert_eq!(c.rightmost(), num / den);
            prop_assert_eq!(c.points.last().unwrap().fraction, 1.0);
        }
    }
}
