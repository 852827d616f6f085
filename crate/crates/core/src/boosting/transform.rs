use serde::{Deserialize, Serialize};

use crate::dataset::quantile_sorted;
use crate::error::{Error, Result};

/// Monotone piecewise-linear map through quantile-matched knots, extended
/// linearly past both end knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformFn {
    /// `(z_q, y_q)` with `z_q` strictly increasing and `y_q` nondecreasing.
    knots: Vec<(f64, f64)>,
}

impl TransformFn {
    pub fn identity() -> Self {
        TransformFn { knots: vec![(0.0, 0.0)] }
    }

    /// Validates and wraps a knot list.
    pub fn from_knots(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Model("transform needs at least one knot".into()));
        }
        if knots.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::Model("transform knots must be finite".into()));
        }
        if knots.windows(2).any(|w| w[1].0 <= w[0].0 || w[1].1 < w[0].1) {
            return Err(Error::Model("transform knots must be increasing".into()));
        }
        Ok(TransformFn { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// Evaluates the map at `z`.
    pub fn eval(&self, z: f64) -> f64 {
        transform_eval(self, z)
    }
}

/// Knot probabilities `(j - 0.5) / count`, `j = 1..=count`.
pub fn knot_probabilities(count: usize) -> impl Iterator<Item = f64> {
    (1..=count).map(move |j| (j as f64 - 0.5) / count as f64)
}

/// QQ transform taking the distribution of `z` toward that of `y`, shrunk
/// toward identity by `alpha`. Uses `min(knots, |z|)` knots, so a region
/// smaller than `knots` gets one knot per `z` order statistic.
pub fn fit_qq_transform(y: &[f64], z: &[f64], knots: usize, alpha: f64) -> Result<TransformFn> {
    if y.is_empty() || z.is_empty() {
        return Err(Error::Data("QQ transform needs nonempty y and z".into()));
    }
    if knots < 1 {
        return Err(Error::Config("knot count must be positive".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config("alpha must lie in [0, 1]".into()));
    }
    let mut ys = y.to_vec();
    let mut zs = z.to_vec();
    ys.sort_by(f64::total_cmp);
    zs.sort_by(f64::total_cmp);
    let count = knots.min(zs.len());
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(count);
    let mut running = f64::NEG_INFINITY;
    for p in knot_probabilities(count) {
        let zq = quantile_sorted(&zs, p);
        let yq = (1.0 - alpha) * zq + alpha * quantile_sorted(&ys, p);
        running = running.max(yq);
        match out.last_mut() {
            Some(last) if last.0 == zq => last.1 = running,
            _ => out.push((zq, running)),
        }
    }
    TransformFn::from_knots(out)
}

/// Piecewise-linear evaluation; exact at knots.
pub fn transform_eval(g: &TransformFn, z: f64) -> f64 {
    let k = &g.knots;
    if k.len() == 1 {
        return k[0].1 + (z - k[0].0);
    }
    // Segment index: the first knot with z_q > z, clamped to the end segments.
    let hi = k.partition_point(|&(zq, _)| zq <= z);
    if hi >= 1 && k[hi - 1].0 == z {
        return k[hi - 1].1;
    }
    let seg = hi.clamp(1, k.len() - 1);
    let (z0, y0) = k[seg - 1];
    let (z1, y1) = k[seg];
    y0 + (y1 - y0) * ((z - z0) / (z1 - z0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn knots_match_quantiles() {
        let g = fit_qq_transform(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0], 3, 1.0).unwrap();
        assert_eq!(g.knots(), &[(1.0, 2.0), (2.0, 4.0), (3.0, 6.0)]);
    }

    #[test]
    fn eval_examples() {
        let g = TransformFn::from_knots(vec![(1.0, 2.0), (3.0, 6.0)]).unwrap();
        assert_eq!(transform_eval(&g, 2.0), 4.0);
        assert_eq!(transform_eval(&g, 4.0), 8.0);
        assert_eq!(transform_eval(&g, 0.0), 0.0);
        assert_eq!(transform_eval(&g, 1.0), 2.0);
        assert_eq!(transform_eval(&g, 3.0), 6.0);
        let single = TransformFn::from_knots(vec![(1.0, 5.0)]).unwrap();
        assert_eq!(transform_eval(&single, 3.0), 7.0);
    }

    #[test]
    fn zero_alpha_is_identity() {
        let g = fit_qq_transform(&[10.0, 20.0, 30.0, 31.0], &[0.5, 1.0, 1.5, 9.0], 8, 0.0).unwrap();
        for z in [-3.0, 0.5, 1.2, 4.0, 100.0] {
            assert!((g.eval(z) - z).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_multisets_give_identity_knots() {
        let v = [3.0, 1.0, 2.0, 2.0, 7.0];
        let g = fit_qq_transform(&v, &v, 16, 1.0).unwrap();
        assert!(g.knots().iter().all(|(a, b)| a == b));
    }

    #[test]
    fn ties_in_z_collapse() {
        let g = fit_qq_transform(&[1.0, 2.0, 3.0, 4.0], &[0.0, 0.0, 0.0, 1.0], 4, 1.0).unwrap();
        assert_eq!(g.knots(), &[(0.0, 3.0), (1.0, 4.0)]);
    }

    proptest! {
        #[test]
        fn transforms_are_monotone(
            y in prop::collection::vec(-50.0f64..50.0, 1..40),
            z in prop::collection::vec(-50.0f64..50.0, 1..40),
            knots in 1usize..70,
            alpha in 0.0f64..=1.0,
            probes in prop::collection::vec(-200.0f64..200.0, 2..20),
        ) {
            let g = fit_qq_transform(&y, &z, knots, alpha).unwrap();
            for &(zq, yq) in g.knots() {
                prop_assert_eq!(g.eval(zq), yq);
            }
            let mut p = probes.clone();
            p.sort_by(f64::total_cmp);
            for w in p.windows(2) {
                prop_assert!(g.eval(w[0]) <= g.eval(w[1]) + 1e-9);
            }
        }
    }
}
