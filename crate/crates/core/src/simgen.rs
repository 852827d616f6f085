//! Synthetic data with known conditional distributions: an asymmetric
//! logistic generator warped by a quadratic, a heteroskedastic normal
//! generator, and accuracy metrics against the truth.

use rand::distr::Open01;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{quantile, Frame};
use crate::error::{Error, Result};
use crate::rng::{self, purpose, Rng};

/// Number of predictors in the reference simulations.
pub const DEFAULT_PREDICTORS: usize = 10;

/// Quadratic warp `sign(z) (0.5 |z| + 1.5 z^2)`.
pub fn h(z: f64) -> f64 {
    z.signum() * (0.5 * z.abs() + 1.5 * z * z)
}

/// Inverse of [`h`].
pub fn h_inverse(u: f64) -> f64 {
    let a = u.abs();
    // Rationalized root of 1.5 t^2 + 0.5 t = a; stable near zero.
    let t = 2.0 * a / (0.5 + (0.25 + 6.0 * a).sqrt());
    if u < 0.0 {
        -t
    } else {
        t
    }
}

fn logistic_cdf(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// `sum_j c_j B_j(x_j) / std(B_j)` with `B_j(x) = sign(x) |x|^{r_j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveFunction {
    pub coefficients: Vec<f64>,
    pub exponents: Vec<f64>,
    pub normalizers: Vec<f64>,
}

fn basis(x: f64, r: f64) -> f64 {
    x.signum() * x.abs().powf(r)
}

impl AdditiveFunction {
    /// Random coefficients `N(0,1)` and exponents `U(0,2)`, normalized over
    /// the calibration rows.
    fn draw(p: usize, rng: &mut Rng, calibration: &[Vec<f64>]) -> Result<Self> {
        let coefficients: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let exponents: Vec<f64> = (0..p)
            .map(|_| loop {
                let r: f64 = 2.0 * rng.sample::<f64, _>(Open01);
                if r > 0.0 && r < 2.0 {
                    break r;
                }
            })
            .collect();
        let normalizers: Vec<f64> = (0..p)
            .map(|j| sample_sd(&calibration.iter().map(|x| basis(x[j], exponents[j])).collect::<Vec<_>>()))
            .collect();
        if normalizers.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::Data("basis normalizers must be positive; use more calibration rows".into()));
        }
        Ok(AdditiveFunction {
            coefficients,
            exponents,
            normalizers,
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for j in 0..self.coefficients.len() {
            s += self.coefficients[j] * basis(x[j], self.exponents[j]) / self.normalizers[j];
        }
        s
    }
}

/// Standard normal predictor rows; row `i` has its own stream.
pub fn draw_x(n: usize, p: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, purpose::PREDICTORS, i as u64);
            (0..p).map(|_| r.sample(StandardNormal)).collect()
        })
        .collect()
}

/// Generated predictors and outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub rows: Vec<Vec<f64>>,
    pub x: Frame,
    pub y: Vec<f64>,
}

/// Asymmetric-logistic simulation model: `y = h(f(x) + eta)` where `eta`
/// is `-s_l |e|` with probability `s_l / (s_l + s_u)` and `+s_u |e|`
/// otherwise, `e` standard logistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimModel {
    pub p: usize,
    pub seed: u64,
    pub mode: AdditiveFunction,
    pub lower_log_scale: AdditiveFunction,
    pub upper_log_scale: AdditiveFunction,
}

impl SimModel {
    /// Draws parameters from `seed`; normalizers come from the `calib_n`
    /// rows that `gen_asym_logistic(model, calib_n, seed)` generates.
    pub fn draw(p: usize, seed: u64, calib_n: usize) -> Result<Self> {
        if p == 0 || calib_n < 2 {
            return Err(Error::Config("simulation needs p >= 1 and at least two calibration rows".into()));
        }
        let calibration = draw_x(calib_n, p, seed);
        let f = |k| AdditiveFunction::draw(p, &mut rng::stream(seed, purpose::PARAMETERS, k), &calibration);
        Ok(SimModel {
            p,
            seed,
            mode: f(0)?,
            lower_log_scale: f(1)?,
            upper_log_scale: f(2)?,
        })
    }

    pub fn location(&self, x: &[f64]) -> f64 {
        self.mode.eval(x)
    }

    pub fn lower_scale(&self, x: &[f64]) -> f64 {
        0.2 + self.lower_log_scale.eval(x).exp()
    }

    pub fn upper_scale(&self, x: &[f64]) -> f64 {
        0.2 + self.upper_log_scale.eval(x).exp()
    }

    /// Probability of the lower branch.
    pub fn lower_probability(&self, x: &[f64]) -> f64 {
        let (sl, su) = (self.lower_scale(x), self.upper_scale(x));
        sl / (sl + su)
    }

    /// One outcome at `x` from a branch uniform and a logistic uniform.
    fn outcome(&self, x: &[f64], branch: f64, noise: f64) -> f64 {
        let (sl, su) = (self.lower_scale(x), self.upper_scale(x));
        let e = logit(noise).abs();
        let eta = if branch < sl / (sl + su) { -sl * e } else { su * e };
        h(self.location(x) + eta)
    }

    /// `n` independent outcomes at a fixed `x`.
    pub fn sample_at(&self, x: &[f64], n: usize, rng: &mut Rng) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let b: f64 = rng.random();
                let u: f64 = rng.sample(Open01);
                self.outcome(x, b, u)
            })
            .collect()
    }

    /// True conditional CDF of `y` at `x`.
    pub fn true_cdf(&self, x: &[f64], u: f64) -> f64 {
        let t = h_inverse(u) - self.location(x);
        let (sl, su) = (self.lower_scale(x), self.upper_scale(x));
        let pl = sl / (sl + su);
        if t < 0.0 {
            2.0 * pl * logistic_cdf(t / sl)
        } else {
            pl + (1.0 - pl) * (2.0 * logistic_cdf(t / su) - 1.0)
        }
    }

    /// True conditional quantile of `y` at `x`, `p` in (0, 1).
    pub fn true_quantile(&self, x: &[f64], p: f64) -> f64 {
        let (sl, su) = (self.lower_scale(x), self.upper_scale(x));
        let pl = sl / (sl + su);
        let t = if p < pl {
            -sl * logit(1.0 - p / (2.0 * pl))
        } else {
            let q = (p - pl) / (1.0 - pl);
            su * logit((1.0 + q) / 2.0)
        };
        h(self.location(x) + t)
    }
}

/// `n` rows from `model` with predictors, branches and noise all drawn from
/// `seed`-derived per-row streams.
pub fn gen_asym_logistic(model: &SimModel, n: usize, seed: u64) -> Result<SimData> {
    if n == 0 {
        return Err(Error::Config("simulation needs at least one row".into()));
    }
    let rows = draw_x(n, model.p, seed);
    let y: Vec<f64> = rows
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let b: f64 = rng::stream(seed, purpose::BRANCH, i as u64).random();
            let u: f64 = rng::stream(seed, purpose::NOISE, i as u64).sample(Open01);
            model.outcome(x, b, u)
        })
        .collect();
    let x = Frame::from_rows(&rows)?;
    Ok(SimData { rows, x, y })
}

/// Heteroskedastic normal model `y = f(x) + s(x) e`, `e ~ N(0, 1)`, with
/// `s(x) = k |t(x)|` for an additive `t`. `e` is symmetric, so only the
/// magnitude of `t` matters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeteroModel {
    pub p: usize,
    pub seed: u64,
    pub location: AdditiveFunction,
    /// Additive function whose magnitude is the unscaled noise level.
    pub scale_shape: AdditiveFunction,
    /// Multiplier fixing the signal-to-noise ratio on the calibration rows.
    pub scale_factor: f64,
}

/// Target `IQR(f) / (2 median(s))`.
pub const SIGNAL_TO_NOISE: f64 = 3.0;

impl HeteroModel {
    pub fn draw(p: usize, seed: u64, calib_n: usize) -> Result<Self> {
        if p == 0 || calib_n < 2 {
            return Err(Error::Config("simulation needs p >= 1 and at least two calibration rows".into()));
        }
        let calibration = draw_x(calib_n, p, seed);
        let f = |k| AdditiveFunction::draw(p, &mut rng::stream(seed, purpose::PARAMETERS, k), &calibration);
        let location = f(10)?;
        let scale_shape = f(11)?;
        let fv: Vec<f64> = calibration.iter().map(|x| location.eval(x)).collect();
        let sv: Vec<f64> = calibration.iter().map(|x| scale_shape.eval(x).abs()).collect();
        let iqr = quantile(&fv, 0.75)? - quantile(&fv, 0.25)?;
        let scale_factor = iqr / (2.0 * SIGNAL_TO_NOISE * quantile(&sv, 0.5)?);
        Ok(HeteroModel {
            p,
            seed,
            location,
            scale_shape,
            scale_factor,
        })
    }

    pub fn scale(&self, x: &[f64]) -> f64 {
        self.scale_factor * self.scale_shape.eval(x).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeteroData {
    pub data: SimData,
    /// True location `f(x)` per row.
    pub f: Vec<f64>,
    /// True scale `s(x)` per row.
    pub s: Vec<f64>,
}

/// `n` rows from a heteroskedastic model.
pub fn gen_hetero_from(model: &HeteroModel, n: usize, seed: u64) -> Result<HeteroData> {
    if n == 0 {
        return Err(Error::Config("simulation needs at least one row".into()));
    }
    let rows = draw_x(n, model.p, seed);
    let f: Vec<f64> = rows.iter().map(|x| model.location.eval(x)).collect();
    let s: Vec<f64> = rows.iter().map(|x| model.scale(x)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let e: f64 = rng::stream(seed, purpose::NOISE, i as u64).sample(StandardNormal);
            f[i] + s[i] * e
        })
        .collect();
    let x = Frame::from_rows(&rows)?;
    Ok(HeteroData {
        data: SimData { rows, x, y },
        f,
        s,
    })
}

/// A fresh heteroskedastic model calibrated on, and sampled at, the same rows.
pub fn gen_hetero(n: usize, seed: u64) -> Result<(HeteroModel, HeteroData)> {
    let model = HeteroModel::draw(DEFAULT_PREDICTORS, seed, n)?;
    let data = gen_hetero_from(&model, n, seed)?;
    Ok((model, data))
}

/// Mean absolute CDF error on 100 grid points spanning the true 0.001 to
/// 0.999 quantiles at `x`.
pub fn aae_cdf(model: &SimModel, x: &[f64], estimate: impl Fn(f64) -> f64) -> Result<f64> {
    let lo = model.true_quantile(x, 0.001);
    let hi = model.true_quantile(x, 0.999);
    if !(hi > lo) {
        return Err(Error::Data("degenerate evaluation grid".into()));
    }
    let mut sum = 0.0;
    for j in 0..100 {
        let u = lo + (hi - lo) * j as f64 / 99.0;
        sum += (model.true_cdf(x, u) - estimate(u)).abs();
    }
    Ok(sum / 100.0)
}

/// `mean|h - v| / mean|v - median(v)|`.
pub fn aae_hv(h: &[f64], v: &[f64]) -> Result<f64> {
    if h.len() != v.len() || v.len() < 2 {
        return Err(Error::Data("aae needs two equal-length lists of at least two values".into()));
    }
    let med = quantile(v, 0.5)?;
    let n = v.len() as f64;
    let den = v.iter().map(|x| (x - med).abs()).sum::<f64>() / n;
    if !(den > 0.0) {
        return Err(Error::Data("aae denominator is zero (constant reference values)".into()));
    }
    let num = h.iter().zip(v).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    Ok(num / den)
}
