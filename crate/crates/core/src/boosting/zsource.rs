use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, purpose, Rng};

/// Where starting `z` values come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ZSource {
    /// `N(0, 1)` at every `x`.
    StandardNormal,
    /// `N(mean, sd^2)` at every `x`, usually the marginal moments of `y`.
    Normal { mean: f64, sd: f64 },
    /// Draws from the marginal of `y`; training rows get a permutation.
    Marginal { values: Vec<f64> },
    /// Location estimate plus a resampled residual.
    ResidualBootstrap { location_column: String, residuals: Vec<f64> },
    /// Values supplied per row in a data column.
    Column { name: String },
}

impl ZSource {
    pub fn normal_from(y: &[f64]) -> Result<Self> {
        if y.len() < 2 {
            return Err(Error::Data("normal z source needs at least two y values".into()));
        }
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok(ZSource::Normal { mean, sd: var.sqrt() })
    }

    pub fn marginal_from(y: &[f64]) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Data("marginal z source needs y values".into()));
        }
        Ok(ZSource::Marginal { values: y.to_vec() })
    }

    /// Residuals `y - location` for a residual bootstrap.
    pub fn residual_from(y: &[f64], location: &[f64], column: impl Into<String>) -> Result<Self> {
        if y.len() != location.len() || y.is_empty() {
            return Err(Error::Data("residual bootstrap needs one location per y value".into()));
        }
        Ok(ZSource::ResidualBootstrap {
            location_column: column.into(),
            residuals: y.iter().zip(location).map(|(a, b)| a - b).collect(),
        })
    }

    /// Column holding per-row location estimates, if this source needs one.
    pub fn location_column(&self) -> Option<&str> {
        match self {
            ZSource::ResidualBootstrap { location_column, .. } => Some(location_column),
            _ => None,
        }
    }

    /// One starting value per training row.
    pub fn draw_training(&self, n: usize, location: Option<&[f64]>, seed: u64) -> Result<Vec<f64>> {
        let mut rng = rng::stream(seed, purpose::Z_INIT, 0);
        match self {
            ZSource::Marginal { values } => {
                if values.len() != n {
                    return Err(Error::Data(format!(
                        "marginal permutation needs {n} values, source has {}",
                        values.len()
                    )));
                }
                let mut v = values.clone();
                v.shuffle(&mut rng);
                Ok(v)
            }
            ZSource::ResidualBootstrap { residuals, .. } => {
                let loc = location.ok_or_else(|| Error::Data("residual bootstrap needs location estimates".into()))?;
                if loc.len() != n || residuals.len() != n {
                    return Err(Error::Data("location and residual counts must match the sample".into()));
                }
                let mut r = residuals.clone();
                r.shuffle(&mut rng);
                Ok(loc.iter().zip(r).map(|(m, e)| m + e).collect())
            }
            _ => self.draw(n, location.map(|l| l.to_vec()), &mut rng),
        }
    }

    /// `n` draws at one point; `location` is that point's location estimate.
    pub fn draw_at(&self, n: usize, location: Option<f64>, rng: &mut Rng) -> Result<Vec<f64>> {
        self.draw(n, location.map(|l| vec![l; n]), rng)
    }

    /// One draw per row, each from its own stream. `locations` holds the
    /// per-row location estimates residual-bootstrap sources need.
    pub fn draw_per_row(&self, n: usize, locations: Option<&[f64]>, seed: u64) -> Result<Vec<f64>> {
        if locations.is_some_and(|l| l.len() != n) {
            return Err(Error::Data("one location estimate per row is required".into()));
        }
        (0..n)
            .map(|i| {
                let mut r = rng::stream(seed, purpose::Z_INIT, i as u64 + 1);
                Ok(self.draw_at(1, locations.map(|l| l[i]), &mut r)?[0])
            })
            .collect()
    }

    fn draw(&self, n: usize, location: Option<Vec<f64>>, rng: &mut Rng) -> Result<Vec<f64>> {
        match self {
            ZSource::StandardNormal => Ok((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()),
            ZSource::Normal { mean, sd } => Ok((0..n).map(|_| mean + sd * rng.sample::<f64, _>(StandardNormal)).collect()),
            ZSource::Marginal { values } => Ok((0..n).map(|_| values[rng.random_range(0..values.len())]).collect()),
            ZSource::ResidualBootstrap { residuals, .. } => {
                let loc = location.ok_or_else(|| Error::Data("residual bootstrap needs a location estimate".into()))?;
                Ok(loc
                    .into_iter()
                    .map(|m| m + residuals[rng.random_range(0..residuals.len())])
                    .collect())
            }
            ZSource::Column { name } => Err(Error::Model(format!(
                "z values come from column {name}; they cannot be generated"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marginal_training_draw_is_a_permutation() {
        let y: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let src = ZSource::marginal_from(&y).unwrap();
        let mut z = src.draw_training(50, None, 3).unwrap();
        assert_ne!(z, y);
        z.sort_by(f64::total_cmp);
        assert_eq!(z, y);
    }

    #[test]
    fn residual_bootstrap_adds_location() {
        let y = [1.0, 2.0, 3.0];
        let loc = [1.0, 1.0, 1.0];
        let src = ZSource::residual_from(&y, &loc, "m").unwrap();
        let mut z = src.draw_training(3, Some(&loc), 1).unwrap();
        z.sort_by(f64::total_cmp);
        assert_eq!(z, vec![1.0, 2.0, 3.0]);
        let mut rng = rng::stream(1, purpose::PREDICT, 0);
        let d = src.draw_at(5, Some(10.0), &mut rng).unwrap();
        assert!(d.iter().all(|v| [10.0, 11.0, 12.0].contains(v)));
        assert!(src.draw_at(5, None, &mut rng).is_err());
    }

    #[test]
    fn column_source_cannot_generate() {
        let src = ZSource::Column { name: "z".into() };
        let mut rng = rng::stream(1, purpose::PREDICT, 0);
        assert!(src.draw_at(3, None, &mut rng).is_err());
    }

    #[test]
    fn draws_are_seeded() {
        let a = ZSource::StandardNormal.draw_training(10, None, 9).unwrap();
        let b = ZSource::StandardNormal.draw_training(10, None, 9).unwrap();
        assert_eq!(a, b);
    }
}
