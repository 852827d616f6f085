//! Best-split search within one region.
//!
//! Every candidate is scored by walking the region's rows once and routing
//! each row into a left or right accumulator. Rows are pushed in the same
//! order [`Measure::eval`] would see them, so candidate discrepancies are
//! bit-identical to evaluating the measure on the daughters directly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ContrastSample, Origin, Value};
use crate::discrepancy::{quantile_diff_sorted, Accumulator, AdAccumulator, DiscrepancyValue, Measure};
use crate::error::DiscrepancyError;

use super::GrowConfig;

/// Splits whose improvement does not exceed this are treated as no
/// improvement; it absorbs round-off in mathematically tied discrepancies.
pub const MIN_IMPROVEMENT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SplitRule {
    /// `x <= threshold` goes left.
    Numeric { threshold: f64 },
    /// Listed level ids go left.
    Categorical { left_levels: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub variable: usize,
    #[serde(flatten)]
    pub rule: SplitRule,
    /// Where missing values (and unseen levels) are routed.
    pub missing_goes: Side,
    /// Whether the region had missing values for this variable when it was split.
    #[serde(default)]
    pub had_missing: bool,
}

impl SplitSpec {
    /// Routing decision for one cell. `n_levels` is the size of the level
    /// table the split was learned with; ids at or past it are unseen.
    #[inline]
    pub fn side_of(&self, value: Value, n_levels: usize) -> Side {
        match (&self.rule, value) {
            (_, Value::Missing) => self.missing_goes,
            (SplitRule::Numeric { threshold }, Value::Num(x)) => {
                if x <= *threshold {
                    Side::Left
                } else {
                    Side::Right
                }
            }
            (SplitRule::Categorical { left_levels }, Value::Level(id)) => {
                if (id as usize) >= n_levels {
                    self.missing_goes
                } else if left_levels.contains(&id) {
                    Side::Left
                } else {
                    Side::Right
                }
            }
            // Kind mismatches are rejected before routing.
            _ => self.missing_goes,
        }
    }
}

/// The best split found for a region.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub spec: SplitSpec,
    pub left: DiscrepancyValue,
    pub right: DiscrepancyValue,
    pub n_left: usize,
    pub n_right: usize,
    /// Split quality (selects the split within a region).
    pub quality: f64,
    /// Split improvement (selects which region to split).
    pub improvement: f64,
}

/// Split quality `(f_l * f_r) * max(d_l, d_r)^2`.
pub fn split_quality(f_left: f64, f_right: f64, d_left: f64, d_right: f64) -> f64 {
    let m = d_left.max(d_right);
    (f_left * f_right) * (m * m)
}

/// Split improvement `max(d_l, d_r) - d_parent`.
pub fn split_improvement(d_parent: f64, d_left: f64, d_right: f64) -> f64 {
    d_left.max(d_right) - d_parent
}

/// Row data of one region laid out for repeated scoring. Local index `k`
/// refers to `rows[k]`.
pub(crate) struct RegionScorer<'a> {
    measure: Measure,
    rows: &'a [usize],
    /// Paired outcomes by local index.
    pairs: Vec<(f64, f64)>,
    /// Two-sample outcomes by local index; `true` marks the `y` side.
    single: Vec<(f64, bool)>,
    paired: bool,
    /// Quantile measures: each side sorted by value, holding local indices.
    y_sorted: Vec<(f64, u32)>,
    z_sorted: Vec<(f64, u32)>,
    /// Distribution measure: pooled values sorted by value, `y` first on ties.
    pooled: Vec<(f64, bool, u32)>,
}

impl<'a> RegionScorer<'a> {
    pub fn new(sample: &ContrastSample, rows: &'a [usize], measure: Measure) -> Self {
        let paired = sample.y().is_some();
        let mut pairs = Vec::new();
        let mut single = Vec::new();
        if let (Some(y), Some(z)) = (sample.y(), sample.z()) {
            pairs = rows.iter().map(|&i| (y[i], z[i])).collect();
        } else {
            single = rows
                .iter()
                .map(|&i| {
                    let (v, o) = sample.two_sample_value(i).expect("two-sample row");
                    (v, o == Origin::First)
                })
                .collect();
        }
        let mut scorer = RegionScorer {
            measure,
            rows,
            pairs,
            single,
            paired,
            y_sorted: Vec::new(),
            z_sorted: Vec::new(),
            pooled: Vec::new(),
        };
        match measure {
            Measure::QuantileDiff(_) => {
                for k in 0..rows.len() {
                    if paired {
                        let (a, b) = scorer.pairs[k];
                        scorer.y_sorted.push((a, k as u32));
                        scorer.z_sorted.push((b, k as u32));
                    } else {
                        let (v, is_y) = scorer.single[k];
                        if is_y {
                            scorer.y_sorted.push((v, k as u32));
                        } else {
                            scorer.z_sorted.push((v, k as u32));
                        }
                    }
                }
                scorer.y_sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                scorer.z_sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            }
            Measure::Ad => {
                for k in 0..rows.len() {
                    if paired {
                        let (a, b) = scorer.pairs[k];
                        scorer.pooled.push((a, true, k as u32));
                        scorer.pooled.push((b, false, k as u32));
                    } else {
                        let (v, is_y) = scorer.single[k];
                        scorer.pooled.push((v, is_y, k as u32));
                    }
                }
                scorer
                    .pooled
                    .sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
            }
            _ => {}
        }
        scorer
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    fn is_y(&self, k: usize) -> bool {
        self.paired || self.single[k].1
    }

    /// Side counts `(n_y, n_z)` of the left and right daughters.
    pub fn counts(&self, is_left: impl Fn(usize) -> bool) -> ((usize, usize), (usize, usize)) {
        let mut left = (0, 0);
        let mut right = (0, 0);
        for k in 0..self.rows.len() {
            let side = if is_left(k) { &mut left } else { &mut right };
            if self.paired {
                side.0 += 1;
                side.1 += 1;
            } else if self.single[k].1 {
                side.0 += 1;
            } else {
                side.1 += 1;
            }
        }
        (left, right)
    }

    /// Discrepancies of the two daughters.
    pub fn score(
        &self,
        is_left: impl Fn(usize) -> bool,
        counts: ((usize, usize), (usize, usize)),
    ) -> (Result<DiscrepancyValue, DiscrepancyError>, Result<DiscrepancyValue, DiscrepancyError>) {
        let ((ly, lz), (ry, rz)) = counts;
        let empty = |n_y, n_z| Err(DiscrepancyError::Empty { n_y, n_z });
        match self.measure {
            Measure::Ad => {
                if ly == 0 || lz == 0 || ry == 0 || rz == 0 {
                    let l = if ly == 0 || lz == 0 { empty(ly, lz) } else { self.measure_subset(&is_left, true) };
                    let r = if ry == 0 || rz == 0 { empty(ry, rz) } else { self.measure_subset(&is_left, false) };
                    return (l, r);
                }
                let mut left = AdAccumulator::new(ly, lz);
                let mut right = AdAccumulator::new(ry, rz);
                for &(v, is_y, k) in &self.pooled {
                    if is_left(k as usize) {
                        left.push(v, is_y);
                    } else {
                        right.push(v, is_y);
                    }
                }
                (
                    Ok(DiscrepancyValue {
                        d: left.finish(),
                        n_y: ly,
                        n_z: lz,
                    }),
                    Ok(DiscrepancyValue {
                        d: right.finish(),
                        n_y: ry,
                        n_z: rz,
                    }),
                )
            }
            Measure::QuantileDiff(p) => {
                let mut lys = Vec::with_capacity(ly);
                let mut rys = Vec::with_capacity(ry);
                for &(v, k) in &self.y_sorted {
                    if is_left(k as usize) {
                        lys.push(v);
                    } else {
                        rys.push(v);
                    }
                }
                let mut lzs = Vec::with_capacity(lz);
                let mut rzs = Vec::with_capacity(rz);
                for &(v, k) in &self.z_sorted {
                    if is_left(k as usize) {
                        lzs.push(v);
                    } else {
                        rzs.push(v);
                    }
                }
                let side = |ys: &[f64], zs: &[f64]| {
                    if ys.is_empty() || zs.is_empty() {
                        empty(ys.len(), zs.len())
                    } else {
                        Ok(quantile_diff_sorted(p, ys, zs))
                    }
                };
                (side(&lys, &lzs), side(&rys, &rzs))
            }
            m => {
                let mut left = Accumulator::default();
                let mut right = Accumulator::default();
                if self.paired {
                    for (k, &(a, b)) in self.pairs.iter().enumerate() {
                        if is_left(k) {
                            left.push_pair(a, b);
                        } else {
                            right.push_pair(a, b);
                        }
                    }
                } else {
                    // Ratio measures: y side first, then z side, as in `eval`.
                    for (k, &(v, is_y)) in self.single.iter().enumerate() {
                        if is_y {
                            if is_left(k) {
                                left.push_y(v);
                            } else {
                                right.push_y(v);
                            }
                        }
                    }
                    for (k, &(v, is_y)) in self.single.iter().enumerate() {
                        if !is_y {
                            if is_left(k) {
                                left.push_z(v);
                            } else {
                                right.push_z(v);
                            }
                        }
                    }
                }
                (left.finish(m), right.finish(m))
            }
        }
    }

    /// Fallback used only for degenerate daughters.
    fn measure_subset(&self, is_left: &impl Fn(usize) -> bool, want_left: bool) -> Result<DiscrepancyValue, DiscrepancyError> {
        let mut ys = Vec::new();
        let mut zs = Vec::new();
        for k in 0..self.rows.len() {
            if is_left(k) != want_left {
                continue;
            }
            if self.paired {
                ys.push(self.pairs[k].0);
                zs.push(self.pairs[k].1);
            } else if self.is_y(k) {
                ys.push(self.single[k].0);
            } else {
                zs.push(self.single[k].0);
            }
        }
        self.measure.eval(&ys, &zs)
    }
}

/// Rank-uniform subset of candidate boundaries: when there are more than
/// `max` boundaries, keeps the ones at the centers of `max` equal rank bins.
pub(crate) fn thin_candidates<T: Copy>(boundaries: &[T], max: usize) -> Vec<T> {
    let b = boundaries.len();
    if b <= max {
        return boundaries.to_vec();
    }
    (0..max).map(|j| boundaries[((2 * j + 1) * b) / (2 * max)]).collect()
}

struct Best {
    cand: Option<SplitCandidate>,
}

impl Best {
    fn offer(&mut self, c: SplitCandidate) {
        // Strictly greater: the earliest candidate in scan order wins ties.
        if self.cand.as_ref().is_none_or(|b| c.quality > b.quality) {
            self.cand = Some(c);
        }
    }
}

struct SearchCtx<'s, 'r> {
    scorer: &'s RegionScorer<'r>,
    d_parent: f64,
    min_node: usize,
    n: usize,
}

impl SearchCtx<'_, '_> {
    fn valid_counts(&self, c: ((usize, usize), (usize, usize))) -> bool {
        let ((ly, lz), (ry, rz)) = c;
        if self.scorer.paired {
            ly >= self.min_node && ry >= self.min_node
        } else {
            ly >= self.min_node && lz >= self.min_node && ry >= self.min_node && rz >= self.min_node
        }
    }

    fn evaluate(&self, is_left: impl Fn(usize) -> bool + Copy, spec: SplitSpec, best: &mut Best) {
        let counts = self.scorer.counts(is_left);
        if !self.valid_counts(counts) {
            return;
        }
        let (l, r) = self.scorer.score(is_left, counts);
        let (Ok(l), Ok(r)) = (l, r) else { return };
        let n_left = if self.scorer.paired { counts.0 .0 } else { counts.0 .0 + counts.0 .1 };
        let n_right = self.n - n_left;
        let f_left = n_left as f64 / self.n as f64;
        let f_right = n_right as f64 / self.n as f64;
        best.offer(SplitCandidate {
            spec,
            left: l,
            right: r,
            n_left,
            n_right,
            quality: split_quality(f_left, f_right, l.d, r.d),
            improvement: split_improvement(self.d_parent, l.d, r.d),
        });
    }
}

fn search_numeric(ctx: &SearchCtx, sample: &ContrastSample, variable: usize, max_candidates: usize) -> Option<SplitCandidate> {
    let rows = ctx.scorer.rows;
    let col = sample.x().column(variable);
    let mut present: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
    let mut rank = vec![u32::MAX; rows.len()];
    for (k, &i) in rows.iter().enumerate() {
        if let Value::Num(x) = col.values()[i] {
            present.push((x, k));
        }
    }
    let n_missing = rows.len() - present.len();
    if present.len() < 2 {
        return None;
    }
    present.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (r, &(_, k)) in present.iter().enumerate() {
        rank[k] = r as u32;
    }
    // Boundary `c` sends the `c` smallest values left.
    let boundaries: Vec<usize> = (1..present.len()).filter(|&c| present[c - 1].0 < present[c].0).collect();
    let mut best = Best { cand: None };
    for c in thin_candidates(&boundaries, max_candidates) {
        let threshold = 0.5 * (present[c - 1].0 + present[c].0);
        // Midpoints of adjacent floats can round onto the upper value.
        let threshold = if threshold < present[c].0 { threshold } else { present[c - 1].0 };
        let cut = c as u32;
        let directions: &[Side] = if n_missing > 0 {
            &[Side::Left, Side::Right]
        } else if c >= present.len() - c {
            &[Side::Left]
        } else {
            &[Side::Right]
        };
        for &dir in directions {
            let rank = &rank;
            let is_left = move |k: usize| {
                let r = rank[k];
                if r == u32::MAX {
                    dir == Side::Left
                } else {
                    r < cut
                }
            };
            let spec = SplitSpec {
                variable,
                rule: SplitRule::Numeric { threshold },
                missing_goes: dir,
                had_missing: n_missing > 0,
            };
            ctx.evaluate(is_left, spec, &mut best);
        }
    }
    best.cand
}

fn search_categorical(ctx: &SearchCtx, sample: &ContrastSample, variable: usize, measure: Measure) -> Option<SplitCandidate> {
    let rows = ctx.scorer.rows;
    let col = sample.x().column(variable);
    let n_levels = col.levels().len();
    let mut level_rows: Vec<Vec<usize>> = vec![Vec::new(); n_levels];
    let mut level_of = vec![u32::MAX; rows.len()];
    for (k, &i) in rows.iter().enumerate() {
        if let Value::Level(id) = col.values()[i] {
            level_rows[id as usize].push(i);
            level_of[k] = id;
        }
    }
    let n_missing = level_of.iter().filter(|&&l| l == u32::MAX).count();
    // Present levels ordered by their own discrepancy; undefined ones last.
    let mut order: Vec<(Option<f64>, u32)> = level_rows
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.is_empty())
        .map(|(id, r)| {
            let (ys, zs) = sample.sides(r);
            (measure.eval(&ys, &zs).ok().map(|v| v.d), id as u32)
        })
        .collect();
    if order.len() < 2 {
        return None;
    }
    order.sort_by(|a, b| match (a.0, b.0) {
        (Some(x), Some(y)) => x.total_cmp(&y).then(a.1.cmp(&b.1)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.1.cmp(&b.1),
    });
    let mut best = Best { cand: None };
    let mut in_left = vec![false; n_levels];
    for cut in 1..order.len() {
        in_left[order[cut - 1].1 as usize] = true;
        let mut left_levels: Vec<u32> = order[..cut].iter().map(|o| o.1).collect();
        left_levels.sort_unstable();
        let left_rows: usize = order[..cut].iter().map(|o| level_rows[o.1 as usize].len()).sum();
        let right_rows = rows.len() - n_missing - left_rows;
        let directions: &[Side] = if n_missing > 0 {
            &[Side::Left, Side::Right]
        } else if left_rows >= right_rows {
            &[Side::Left]
        } else {
            &[Side::Right]
        };
        for &dir in directions {
            let in_left = &in_left;
            let level_of = &level_of;
            let is_left = move |k: usize| {
                let l = level_of[k];
                if l == u32::MAX {
                    dir == Side::Left
                } else {
                    in_left[l as usize]
                }
            };
            let spec = SplitSpec {
                variable,
                rule: SplitRule::Categorical {
                    left_levels: left_levels.clone(),
                },
                missing_goes: dir,
                had_missing: n_missing > 0,
            };
            ctx.evaluate(is_left, spec, &mut best);
        }
    }
    best.cand
}

/// Best split of the region `rows` (sorted ascending) by split quality, or
/// `None` when no candidate leaves `min_node` rows (per side in two-sample
/// mode) in both daughters.
pub fn best_split(sample: &ContrastSample, rows: &[usize], d_parent: f64, config: &GrowConfig) -> Option<SplitCandidate> {
    let (n_y, n_z) = sample.side_counts(rows);
    let min_node = config.min_node.max(1);
    if n_y < 2 * min_node || n_z < 2 * min_node {
        return None;
    }
    let scorer = RegionScorer::new(sample, rows, config.measure);
    let ctx = SearchCtx {
        scorer: &scorer,
        d_parent,
        min_node,
        n: scorer.len(),
    };
    let per_variable: Vec<Option<SplitCandidate>> = (0..sample.x().n_cols())
        .into_par_iter()
        .map(|j| match sample.x().column(j).kind() {
            crate::dataset::ColumnKind::Numeric => search_numeric(&ctx, sample, j, config.max_numeric_candidates),
            crate::dataset::ColumnKind::Categorical => search_categorical(&ctx, sample, j, config.measure),
        })
        .collect();
    let mut best = Best { cand: None };
    for c in per_variable.into_iter().flatten() {
        best.offer(c);
    }
    best.cand
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quality_examples() {
        assert!((split_quality(0.5, 0.5, 0.2, 0.4) - 0.04).abs() < 1e-15);
        assert_eq!(split_quality(0.5, 0.5, 0.0, 0.0), 0.0);
        assert!((split_quality(0.9, 0.1, 1.0, 0.0) - 0.09).abs() < 1e-15);
    }

    #[test]
    fn improvement_examples() {
        assert!((split_improvement(0.1, 0.3, 0.2) - 0.2).abs() < 1e-15);
        assert_eq!(split_improvement(0.3, 0.3, 0.3), 0.0);
        assert!((split_improvement(0.5, 0.2, 0.3) + 0.2).abs() < 1e-15);
    }

    #[test]
    fn thinning_is_rank_uniform() {
        let b: Vec<usize> = (0..10).collect();
        assert_eq!(thin_candidates(&b, 20), b);
        assert_eq!(thin_candidates(&b, 2), vec![2, 7]);
        assert_eq!(thin_candidates(&b, 5), vec![1, 3, 5, 7, 9]);
    }
}
