//! Random sources for training: Gamma/Dirichlet topic noise, interpolation
//! between real and generated documents, and one-hot topic probes.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{AtmError, Result};

/// Retries before a Dirichlet draw whose gamma variates all underflowed is
/// reported as a numeric failure.
pub const DEFAULT_UNDERFLOW_RETRIES: usize = 100;

/// Concentration vector of a Dirichlet distribution over the K-simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletPrior {
    alpha: Vec<f64>,
}

impl DirichletPrior {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(AtmError::Value(format!(
                "Dirichlet prior needs K >= 2, got {}",
                alpha.len()
            )));
        }
        if let Some((k, a)) = alpha
            .iter()
            .enumerate()
            .find(|(_, a)| !(a.is_finite() && **a > 0.0))
        {
            return Err(AtmError::Value(format!(
                "alpha[{k}] = {a} must be positive and finite"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn symmetric(k: usize, alpha: f64) -> Result<Self> {
        Self::new(vec![alpha; k])
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }
}

/// A point on the K-simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicVector(Vec<f64>);

impl TopicVector {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(AtmError::Value(
                "topic proportions must lie in [0, 1]".into(),
            ));
        }
        let sum: f64 = theta.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(AtmError::Value(format!(
                "topic proportions sum to {sum}, not 1"
            )));
        }
        Ok(Self(theta))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Draws from Gamma(shape, 1).
///
/// Marsaglia–Tsang squeeze for `shape >= 1`; smaller shapes use
/// `G(a) = G(a + 1) * U^(1/a)`.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> Result<f64> {
    if !(shape.is_finite() && shape > 0.0) {
        return Err(AtmError::Value(format!(
            "gamma shape must be positive, got {shape}"
        )));
    }
    if shape < 1.0 {
        let g = marsaglia_tsang(shape + 1.0, rng);
        let u: f64 = rng.random();
        return Ok(g * u.powf(1.0 / shape));
    }
    Ok(marsaglia_tsang(shape, rng))
}

fn marsaglia_tsang<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u: f64 = rng.random();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// theta_k = g_k / sum_j g_j with g_k ~ Gamma(alpha_k, 1).
pub fn sample_dirichlet<R: Rng + ?Sized>(
    prior: &DirichletPrior,
    rng: &mut R,
) -> Result<TopicVector> {
    let mut theta = vec![0.0; prior.k()];
    fill_dirichlet(prior, rng, &mut theta)?;
    Ok(TopicVector(theta))
}

fn fill_dirichlet<R: Rng + ?Sized>(
    prior: &DirichletPrior,
    rng: &mut R,
    out: &mut [f64],
) -> Result<()> {
    for _ in 0..DEFAULT_UNDERFLOW_RETRIES {
        let mut sum = 0.0;
        for (o, &a) in out.iter_mut().zip(prior.alpha()) {
            *o = sample_gamma(a, rng)?;
            sum += *o;
        }
        if sum > 0.0 && sum.is_finite() {
            out.iter_mut().for_each(|o| *o /= sum);
            return Ok(());
        }
    }
    Err(AtmError::Numeric(format!(
        "all gamma draws underflowed in {DEFAULT_UNDERFLOW_RETRIES} attempts"
    )))
}

/// `m × K` matrix of independent Dirichlet draws.
pub fn sample_dirichlet_batch<R: Rng + ?Sized>(
    prior: &DirichletPrior,
    m: usize,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((m, prior.k()));
    for mut row in out.rows_mut() {
        fill_dirichlet(prior, rng, row.as_slice_mut().expect("standard layout"))?;
    }
    Ok(out)
}

/// `eps * d_r + (1 - eps) * d_f`.
pub fn interpolate(d_r: &[f64], d_f: &[f64], eps: f64) -> Result<Vec<f64>> {
    if d_r.len() != d_f.len() {
        return Err(AtmError::Shape(format!(
            "real document has length {}, fake has {}",
            d_r.len(),
            d_f.len()
        )));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(AtmError::Value(format!("eps = {eps} outside [0, 1]")));
    }
    Ok(d_r
        .iter()
        .zip(d_f)
        .map(|(r, f)| eps * r + (1.0 - eps) * f)
        .collect())
}

/// Row-wise [`interpolate`] with one coefficient per row.
pub fn interpolate_batch(
    real: ArrayView2<f64>,
    fake: ArrayView2<f64>,
    eps: &[f64],
) -> Result<Array2<f64>> {
    if real.dim() != fake.dim() || eps.len() != real.nrows() {
        return Err(AtmError::Shape(format!(
            "real {:?}, fake {:?}, {} coefficients",
            real.dim(),
            fake.dim(),
            eps.len()
        )));
    }
    let mut out = Array2::zeros(real.dim());
    for (i, &e) in eps.iter().enumerate() {
        if !(0.0..=1.0).contains(&e) {
            return Err(AtmError::Value(format!("eps = {e} outside [0, 1]")));
        }
        for j in 0..real.ncols() {
            out[[i, j]] = e * real[[i, j]] + (1.0 - e) * fake[[i, j]];
        }
    }
    Ok(out)
}

/// One-hot probe selecting topic `k` (0-based) out of `k_total`.
pub fn one_hot_topic(k: usize, k_total: usize) -> Result<TopicVector> {
    if k >= k_total {
        return Err(AtmError::Index {
            index: k,
            len: k_total,
        });
    }
    let mut v = vec![0.0; k_total];
    v[k] = 1.0;
    Ok(TopicVector(v))
}
