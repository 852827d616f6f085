//! Region-level discrepancy measures between the `y` and `z` outcomes of a
//! region, and the offsets that zero them for estimation boosting.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{quantile_sorted, SampleMode};
use crate::error::DiscrepancyError;

/// A discrepancy measure `D({y}, {z})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Measure {
    /// Mean of `|y - z|` over the region.
    MeanAbs,
    /// `|mean(y) - mean(z)|`.
    MeanDiff,
    /// `|Q_p(y) - Q_p(z)|`.
    QuantileDiff(f64),
    /// Anderson-Darling style distance between the two empirical CDFs.
    Ad,
    /// Fraction of rows with `y != z`, both binary.
    ClassError,
    /// `|sum(y - z)| / n` with binary `y` and a probability estimate `z`.
    /// `z` may leave `[0, 1]`: additive boosting offsets put it there.
    ProbDiff,
    /// `|p - fraction(y < z)|`.
    QuantileProb(f64),
    /// `mean(y) / mean(z)`.
    Ratio,
    /// `mean(z) / mean(y)`.
    InvRatio,
}

/// Value of a measure on a region, with the side counts it was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyValue {
    pub d: f64,
    pub n_y: usize,
    pub n_z: usize,
}

impl Measure {
    pub fn name(&self) -> String {
        self.to_string()
    }

    /// Measures that work on unpaired samples of different sizes.
    pub fn allows_two_sample(&self) -> bool {
        matches!(self, Measure::Ad | Measure::Ratio | Measure::InvRatio)
    }

    pub fn is_ratio(&self) -> bool {
        matches!(self, Measure::Ratio | Measure::InvRatio)
    }

    pub fn supports_offset(&self) -> bool {
        matches!(
            self,
            Measure::MeanDiff | Measure::QuantileDiff(_) | Measure::ProbDiff | Measure::QuantileProb(_)
        )
    }

    pub fn compatible_with(&self, mode: SampleMode) -> bool {
        match mode {
            SampleMode::Paired => true,
            SampleMode::TwoSample => self.allows_two_sample(),
        }
    }

    fn probability(&self) -> Option<f64> {
        match self {
            Measure::QuantileDiff(p) | Measure::QuantileProb(p) => Some(*p),
            _ => None,
        }
    }

    /// Checks the value domain of whole outcome vectors (binary labels,
    /// nonnegative ratio outcomes, target probability range).
    pub fn validate(&self, y: &[f64], z: &[f64]) -> Result<(), DiscrepancyError> {
        if let Some(p) = self.probability() {
            if !(p > 0.0 && p < 1.0) {
                return Err(self.domain(format!("probability {p} must lie in (0, 1)")));
            }
        }
        let binary = |v: &f64| *v == 0.0 || *v == 1.0;
        match self {
            Measure::ClassError => {
                if !y.iter().all(binary) || !z.iter().all(binary) {
                    return Err(self.domain("y and z must be 0/1 labels".into()));
                }
            }
            Measure::ProbDiff => {
                if !y.iter().all(binary) {
                    return Err(self.domain("y must be a 0/1 label".into()));
                }
            }
            Measure::Ratio | Measure::InvRatio => {
                if y.iter().chain(z).any(|v| *v < 0.0) {
                    return Err(self.domain("ratio measures need nonnegative outcomes".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn domain(&self, detail: String) -> DiscrepancyError {
        DiscrepancyError::Domain {
            measure: self.name(),
            detail,
        }
    }

    fn check_sizes(&self, n_y: usize, n_z: usize) -> Result<(), DiscrepancyError> {
        if n_y == 0 || n_z == 0 {
            return Err(DiscrepancyError::Empty { n_y, n_z });
        }
        if !self.allows_two_sample() && n_y != n_z {
            return Err(DiscrepancyError::Pairing {
                measure: self.name(),
                n_y,
                n_z,
            });
        }
        Ok(())
    }

    /// Evaluates the measure. Paired measures treat `y[i]` and `z[i]` as one
    /// observation.
    pub fn eval(&self, y: &[f64], z: &[f64]) -> Result<DiscrepancyValue, DiscrepancyError> {
        self.check_sizes(y.len(), z.len())?;
        self.validate(y, z)?;
        match self {
            Measure::Ad => {
                let mut pooled: Vec<(f64, bool)> = y.iter().map(|&v| (v, true)).chain(z.iter().map(|&v| (v, false))).collect();
                pooled.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
                Ok(DiscrepancyValue {
                    d: ad_statistic(pooled.into_iter(), y.len(), z.len()),
                    n_y: y.len(),
                    n_z: z.len(),
                })
            }
            Measure::QuantileDiff(p) => {
                let mut ys = y.to_vec();
                let mut zs = z.to_vec();
                ys.sort_by(f64::total_cmp);
                zs.sort_by(f64::total_cmp);
                Ok(quantile_diff_sorted(*p, &ys, &zs))
            }
            _ => {
                let mut acc = Accumulator::default();
                if self.is_ratio() {
                    y.iter().for_each(|&v| acc.push_y(v));
                    z.iter().for_each(|&v| acc.push_z(v));
                } else {
                    y.iter().zip(z).for_each(|(&a, &b)| acc.push_pair(a, b));
                }
                acc.finish(*self)
            }
        }
    }

    /// Offset `delta` such that the measure of `(y, z + delta)` is zero, up
    /// to the measure's granularity.
    pub fn zeroing_offset(&self, y: &[f64], z: &[f64]) -> Result<f64, DiscrepancyError> {
        if !self.supports_offset() {
            return Err(DiscrepancyError::Unsupported(self.name()));
        }
        self.check_sizes(y.len(), z.len())?;
        let mean = |v: &[f64]| {
            let mut s = 0.0;
            for x in v {
                s += x;
            }
            s / v.len() as f64
        };
        let sorted_quantile = |v: &[f64], p: f64| {
            let mut s = v.to_vec();
            s.sort_by(f64::total_cmp);
            quantile_sorted(&s, p)
        };
        Ok(match self {
            Measure::MeanDiff | Measure::ProbDiff => mean(y) - mean(z),
            Measure::QuantileDiff(p) => sorted_quantile(y, *p) - sorted_quantile(z, *p),
            Measure::QuantileProb(p) => {
                let diffs: Vec<f64> = y.iter().zip(z).map(|(a, b)| a - b).collect();
                sorted_quantile(&diffs, *p)
            }
            _ => unreachable!("checked by supports_offset"),
        })
    }

    /// Central summaries of the two sides used in region reports: means for
    /// mean-type measures, the target quantile for quantile measures and
    /// medians for the distribution measure.
    pub fn side_summary(&self, y: &[f64], z: &[f64]) -> (f64, f64) {
        let stat = |v: &[f64]| -> f64 {
            if v.is_empty() {
                return f64::NAN;
            }
            match self {
                Measure::QuantileDiff(_) | Measure::QuantileProb(_) | Measure::Ad => {
                    let p = match self {
                        Measure::QuantileDiff(p) | Measure::QuantileProb(p) => *p,
                        _ => 0.5,
                    };
                    let mut s = v.to_vec();
                    s.sort_by(f64::total_cmp);
                    quantile_sorted(&s, p)
                }
                _ => v.iter().sum::<f64>() / v.len() as f64,
            }
        };
        (stat(y), stat(z))
    }
}

/// Running sums from which every additive measure is computed. The tree's
/// split search feeds rows in the same order as [`Measure::eval`] so both
/// produce identical values.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Accumulator {
    pub n_y: usize,
    pub n_z: usize,
    sum_y: f64,
    sum_z: f64,
    sum_abs: f64,
    n_neq: usize,
    n_lt: usize,
}

impl Accumulator {
    #[inline]
    pub fn push_pair(&mut self, y: f64, z: f64) {
        self.n_y += 1;
        self.n_z += 1;
        self.sum_y += y;
        self.sum_z += z;
        self.sum_abs += (y - z).abs();
        self.n_neq += (y != z) as usize;
        self.n_lt += (y < z) as usize;
    }

    #[inline]
    pub fn push_y(&mut self, y: f64) {
        self.n_y += 1;
        self.sum_y += y;
    }

    #[inline]
    pub fn push_z(&mut self, z: f64) {
        self.n_z += 1;
        self.sum_z += z;
    }

    pub fn finish(&self, measure: Measure) -> Result<DiscrepancyValue, DiscrepancyError> {
        let (n_y, n_z) = (self.n_y, self.n_z);
        if n_y == 0 || n_z == 0 {
            return Err(DiscrepancyError::Empty { n_y, n_z });
        }
        let n = n_y as f64;
        let d = match measure {
            Measure::MeanAbs => self.sum_abs / n,
            Measure::MeanDiff => (self.sum_y / n - self.sum_z / n_z as f64).abs(),
            Measure::ClassError => self.n_neq as f64 / n,
            Measure::ProbDiff => ((self.sum_y - self.sum_z) / n).abs(),
            Measure::QuantileProb(p) => (p - self.n_lt as f64 / n).abs(),
            Measure::Ratio | Measure::InvRatio => {
                let my = self.sum_y / n;
                let mz = self.sum_z / n_z as f64;
                let (num, den) = if measure == Measure::Ratio { (my, mz) } else { (mz, my) };
                if den <= 0.0 {
                    return Err(DiscrepancyError::ZeroDenominator(den));
                }
                num / den
            }
            Measure::Ad | Measure::QuantileDiff(_) => unreachable!("not additive"),
        };
        Ok(DiscrepancyValue { d, n_y, n_z })
    }
}

pub(crate) fn quantile_diff_sorted(p: f64, ys: &[f64], zs: &[f64]) -> DiscrepancyValue {
    DiscrepancyValue {
        d: (quantile_sorted(ys, p) - quantile_sorted(zs, p)).abs(),
        n_y: ys.len(),
        n_z: zs.len(),
    }
}

/// Streaming form of the Anderson-Darling style distance. Pooled values are
/// pushed in nondecreasing order, each flagged `true` when it came from `y`:
///
/// `d = 1/(N-1) * sum_{i<N} |F_y(t_i) - F_z(t_i)| / sqrt(i (N - i))`
///
/// with `N = n_y + n_z`. CDFs are right-continuous, so every position in a
/// run of tied values sees the CDFs after the whole run.
#[derive(Debug, Clone)]
pub(crate) struct AdAccumulator {
    n_y: usize,
    n_z: usize,
    pos: usize,
    cy: usize,
    cz: usize,
    gy: usize,
    gz: usize,
    current: f64,
    sum: f64,
}

impl AdAccumulator {
    pub fn new(n_y: usize, n_z: usize) -> Self {
        AdAccumulator {
            n_y,
            n_z,
            pos: 0,
            cy: 0,
            cz: 0,
            gy: 0,
            gz: 0,
            current: f64::NAN,
            sum: 0.0,
        }
    }

    #[inline]
    pub fn push(&mut self, value: f64, is_y: bool) {
        if value != self.current && self.gy + self.gz > 0 {
            self.flush();
        }
        self.current = value;
        if is_y {
            self.gy += 1;
        } else {
            self.gz += 1;
        }
    }

    fn flush(&mut self) {
        let total = self.n_y + self.n_z;
        let nt = total as f64;
        self.cy += self.gy;
        self.cz += self.gz;
        let diff = (self.cy as f64 / self.n_y as f64 - self.cz as f64 / self.n_z as f64).abs();
        let end = self.pos + self.gy + self.gz;
        if diff > 0.0 {
            for i in (self.pos + 1)..=end.min(total - 1) {
                let fi = i as f64;
                self.sum += diff / (fi * (nt - fi)).sqrt();
            }
        }
        self.pos = end;
        self.gy = 0;
        self.gz = 0;
    }

    pub fn finish(mut self) -> f64 {
        if self.gy + self.gz > 0 {
            self.flush();
        }
        debug_assert_eq!(self.pos, self.n_y + self.n_z);
        self.sum / ((self.n_y + self.n_z) as f64 - 1.0)
    }
}

pub(crate) fn ad_statistic(pooled: impl Iterator<Item = (f64, bool)>, n_y: usize, n_z: usize) -> f64 {
    let mut acc = AdAccumulator::new(n_y, n_z);
    for (v, is_y) in pooled {
        acc.push(v, is_y);
    }
    acc.finish()
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Measure::MeanAbs => write!(f, "mean-abs"),
            Measure::MeanDiff => write!(f, "mean-diff"),
            Measure::QuantileDiff(p) => write!(f, "quantile-diff:{p}"),
            Measure::Ad => write!(f, "ad"),
            Measure::ClassError => write!(f, "class-error"),
            Measure::ProbDiff => write!(f, "prob-diff"),
            Measure::QuantileProb(p) => write!(f, "quantile-prob:{p}"),
            Measure::Ratio => write!(f, "ratio"),
            Measure::InvRatio => write!(f, "inv-ratio"),
        }
    }
}

impl FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let prob = |a: Option<&str>| -> Result<f64, String> {
            let a = a.ok_or_else(|| format!("measure {head} needs a probability, e.g. {head}:0.5"))?;
            let p: f64 = a.parse().map_err(|_| format!("bad probability {a:?}"))?;
            if p > 0.0 && p < 1.0 {
                Ok(p)
            } else {
                Err(format!("probability {p} must lie in (0, 1)"))
            }
        };
        let no_arg = |m: Measure| -> Result<Measure, String> {
            match arg {
                None => Ok(m),
                Some(_) => Err(format!("measure {head} takes no argument")),
            }
        };
        match head {
            "mean-abs" => no_arg(Measure::MeanAbs),
            "mean-diff" => no_arg(Measure::MeanDiff),
            "quantile-diff" => Ok(Measure::QuantileDiff(prob(arg)?)),
            "ad" => no_arg(Measure::Ad),
            "class-error" => no_arg(Measure::ClassError),
            "prob-diff" => no_arg(Measure::ProbDiff),
            "quantile-prob" => Ok(Measure::QuantileProb(prob(arg)?)),
            "ratio" => no_arg(Measure::Ratio),
            "inv-ratio" => no_arg(Measure::InvRatio),
            _ => Err(format!("unknown measure {s:?}")),
        }
    }
}

impl TryFrom<String> for Measure {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Measure> for String {
    fn from(m: Measure) -> String {
        m.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Direct transcription of the pooled-CDF formula: counts CDF values by
    /// brute force at every pooled order statistic.
    fn ad_bruteforce(y: &[f64], z: &[f64]) -> f64 {
        let mut t: Vec<f64> = y.iter().chain(z).copied().collect();
        t.sort_by(f64::total_cmp);
        let n = t.len();
        let mut s = 0.0;
        for i in 1..n {
            let ti = t[i - 1];
            let fy = y.iter().filter(|&&v| v <= ti).count() as f64 / y.len() as f64;
            let fz = z.iter().filter(|&&v| v <= ti).count() as f64 / z.len() as f64;
            s += (fy - fz).abs() / ((i * (n - i)) as f64).sqrt();
        }
        s / (n as f64 - 1.0)
    }

    #[test]
    fn hand_values() {
        assert_eq!(Measure::MeanAbs.eval(&[1.0, 2.0], &[1.0, 2.0]).unwrap().d, 0.0);
        let d = Measure::Ad.eval(&[0.0, 0.0], &[1.0, 1.0]).unwrap().d;
        assert!((d - (1.0 / 3f64.sqrt() / 3.0 + 1.0 / 6.0)).abs() < 1e-12);
        assert_eq!(Measure::Ad.eval(&[0.0], &[1.0]).unwrap().d, 1.0);
        assert_eq!(Measure::Ad.eval(&[3.0, 1.0, 2.0], &[2.0, 3.0, 1.0]).unwrap().d, 0.0);
        assert_eq!(Measure::ClassError.eval(&[0.0, 1.0], &[1.0, 0.0]).unwrap().d, 1.0);
        assert!(Measure::ProbDiff.eval(&[1.0, 0.0], &[0.6, 0.4]).unwrap().d.abs() < 1e-15);
        let qp = Measure::QuantileProb(0.5).eval(&[1.0, 2.0, 3.0, 4.0], &[2.5; 4]).unwrap();
        assert_eq!(qp.d, 0.0);
        let r = Measure::Ratio.eval(&[0.30], &[0.11]).unwrap().d;
        assert!((r - 2.7272727).abs() < 1e-6);
        let inv = Measure::InvRatio.eval(&[0.30], &[0.11]).unwrap().d;
        assert!((inv * r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(Measure::MeanAbs.eval(&[], &[]), Err(DiscrepancyError::Empty { .. })));
        assert!(matches!(
            Measure::MeanAbs.eval(&[1.0], &[1.0, 2.0]),
            Err(DiscrepancyError::Pairing { .. })
        ));
        assert!(matches!(
            Measure::ClassError.eval(&[0.5], &[1.0]),
            Err(DiscrepancyError::Domain { .. })
        ));
        assert!(matches!(
            Measure::ProbDiff.eval(&[0.5], &[0.5]),
            Err(DiscrepancyError::Domain { .. })
        ));
        assert_eq!(Measure::ProbDiff.eval(&[1.0, 0.0], &[1.25, -0.25]).unwrap().d, 0.0);
        assert!(matches!(
            Measure::Ratio.eval(&[1.0], &[0.0]),
            Err(DiscrepancyError::ZeroDenominator(_))
        ));
        assert!(Measure::Ad.eval(&[1.0], &[1.0, 2.0]).is_ok());
        assert!(matches!(
            Measure::Ad.zeroing_offset(&[1.0], &[2.0]),
            Err(DiscrepancyError::Unsupported(_))
        ));
    }

    #[test]
    fn offsets() {
        assert_eq!(Measure::MeanDiff.zeroing_offset(&[2.0, 4.0], &[1.0, 1.0]).unwrap(), 2.0);
        let q = Measure::QuantileProb(0.5);
        let delta = q.zeroing_offset(&[2.0, 4.0], &[1.0, 1.0]).unwrap();
        assert_eq!(delta, 2.0);
        let shifted = [1.0 + delta, 1.0 + delta];
        assert_eq!(q.eval(&[2.0, 4.0], &shifted).unwrap().d, 0.0);
        for m in [Measure::MeanDiff, Measure::QuantileDiff(0.3), Measure::ProbDiff, Measure::QuantileProb(0.7)] {
            let v = [0.0, 1.0, 1.0];
            let z = if m == Measure::ProbDiff { v } else { [0.3, 2.0, 5.0] };
            assert_eq!(m.zeroing_offset(&z, &z).unwrap(), 0.0, "{m}");
        }
    }

    #[test]
    fn parse_round_trip() {
        for s in [
            "mean-abs",
            "mean-diff",
            "quantile-diff:0.25",
            "ad",
            "class-error",
            "prob-diff",
            "quantile-prob:0.5",
            "ratio",
            "inv-ratio",
        ] {
            let m: Measure = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert!("quantile-prob".parse::<Measure>().is_err());
        assert!("quantile-prob:1.5".parse::<Measure>().is_err());
        assert!("ad:0.5".parse::<Measure>().is_err());
        assert!("bogus".parse::<Measure>().is_err());
    }

    fn sample() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((-20i32..20).prop_map(|v| v as f64 / 4.0), 1..25)
    }

    proptest! {
        #[test]
        fn ad_matches_bruteforce(y in sample(), z in sample()) {
            let d = Measure::Ad.eval(&y, &z).unwrap().d;
            prop_assert!((d - ad_bruteforce(&y, &z)).abs() < 1e-12);
        }

        #[test]
        fn ad_symmetric(y in sample(), z in sample()) {
            let a = Measure::Ad.eval(&y, &z).unwrap().d;
            let b = Measure::Ad.eval(&z, &y).unwrap().d;
            prop_assert!((a - b).abs() < 1e-14);
        }

        #[test]
        fn ad_rank_invariant(y in sample(), z in sample()) {
            let f = |v: &Vec<f64>| v.iter().map(|x| (x * 0.7).exp() + x.powi(3)).collect::<Vec<_>>();
            let a = Measure::Ad.eval(&y, &z).unwrap().d;
            let b = Measure::Ad.eval(&f(&y), &f(&z)).unwrap().d;
            prop_assert!((a - b).abs() < 1e-14);
        }

        #[test]
        fn offsets_zero_discrepancy(pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..40), p in 0.05f64..0.95) {
            let y: Vec<f64> = pairs.iter().map(|r| r.0).collect();
            let z: Vec<f64> = pairs.iter().map(|r| r.1).collect();
            let n = y.len() as f64;
            for m in [Measure::MeanDiff, Measure::QuantileDiff(p), Measure::QuantileProb(p)] {
                let delta = m.zeroing_offset(&y, &z).unwrap();
                let moved: Vec<f64> = z.iter().map(|v| v + delta).collect();
                let d = m.eval(&y, &moved).unwrap().d;
                match m {
                    Measure::QuantileProb(_) => prop_assert!(d <= 1.0 / n + 1e-12, "{} {}", m, d),
                    _ => prop_assert!(d < 1e-9, "{} {}", m, d),
                }
            }
        }

        #[test]
        fn bounded_measures(pairs in prop::collection::vec((0u8..2, 0.0f64..1.0), 1..40)) {
            let y: Vec<f64> = pairs.iter().map(|r| r.0 as f64).collect();
            let z: Vec<f64> = pairs.iter().map(|r| r.1).collect();
            let zb: Vec<f64> = z.iter().map(|v| v.round()).collect();
            prop_assert!(Measure::ProbDiff.eval(&y, &z).unwrap().d <= 1.0);
            prop_assert!(Measure::ClassError.eval(&y, &zb).unwrap().d <= 1.0);
            prop_assert!(Measure::QuantileProb(0.3).eval(&y, &z).unwrap().d <= 1.0);
            let max_abs = y.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(Measure::MeanAbs.eval(&y, &z).unwrap().d <= max_abs + 1e-15);
        }
    }
}
