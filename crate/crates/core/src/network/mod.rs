//! Generator and critic networks with hand-written first- and second-order
//! backward passes.
//!
//! Generator: `theta -> affine -> LeakyReLU -> BatchNorm -> affine -> softmax`.
//! Critic: `doc -> affine -> LeakyReLU -> affine -> LeakyReLU -> affine`, linear
//! output. Matrices are stored as `(out, in)` and batches as rows.

mod discriminator;
mod generator;
mod penalty;

pub use discriminator::{DiscriminatorGrads, DiscriminatorParams, DiscriminatorTrace};
pub use generator::{GeneratorGrads, GeneratorParams, GeneratorTrace, BN_EPS, BN_MOMENTUM};
pub use penalty::PenaltyOutput;

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;

use crate::error::{AtmError, Result};

pub const DEFAULT_LEAK: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

/// Layer widths: topics K, embedding S, vocabulary V, critic hidden H.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkDims {
    pub topics: usize,
    pub embed: usize,
    pub vocab: usize,
    pub hidden: usize,
}

impl NetworkDims {
    pub fn validate(&self) -> Result<()> {
        let NetworkDims {
            topics,
            embed,
            vocab,
            hidden,
        } = *self;
        if topics == 0 || embed == 0 || vocab == 0 || hidden == 0 {
            return Err(AtmError::Value(format!(
                "dimensions must be positive: K={topics} S={embed} V={vocab} H={hidden}"
            )));
        }
        Ok(())
    }
}

/// Flat views over the trainable tensors of a network, in a fixed order.
/// Gradient sets implement it with the same order and shapes.
pub trait ParamTensors {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }

    fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }
}

pub(crate) fn check_leak(leak: f64) -> Result<()> {
    if !(leak > 0.0 && leak < 1.0) {
        return Err(AtmError::Value(format!(
            "leak must lie in (0, 1), got {leak}"
        )));
    }
    Ok(())
}

pub(crate) fn ensure_finite(a: ArrayView2<f64>, what: &str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(AtmError::Numeric(format!(
            "{what} contains non-finite values"
        )))
    }
}

#[inline]
pub(crate) fn leaky(x: f64, leak: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        leak * x
    }
}

#[inline]
pub(crate) fn leaky_slope(x: f64, leak: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        leak
    }
}

fn he_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, leak: f64, rng: &mut R) -> Array2<f64> {
    // Var = bound^2 / 3 = 2 / ((1 + leak^2) * fan_in)
    let bound = (6.0 / ((1.0 + leak * leak) * cols as f64)).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || (2.0 * rng.random::<f64>() - 1.0) * bound)
}

/// Fan-in scaled uniform weights, zero biases, identity BatchNorm.
pub fn init_params<R: Rng + ?Sized>(
    dims: NetworkDims,
    leak: f64,
    rng: &mut R,
) -> Result<(GeneratorParams, DiscriminatorParams)> {
    dims.validate()?;
    check_leak(leak)?;
    let NetworkDims {
        topics: k,
        embed: s,
        vocab: v,
        hidden: h,
    } = dims;
    let gen = GeneratorParams {
        w_s: he_uniform(s, k, leak, rng),
        b_s: Array1::zeros(s),
        bn_gamma: Array1::ones(s),
        bn_beta: Array1::zeros(s),
        bn_running_mean: Array1::zeros(s),
        bn_running_var: Array1::ones(s),
        w_w: he_uniform(v, s, leak, rng),
        b_w: Array1::zeros(v),
        leak,
    };
    let disc = DiscriminatorParams {
        w1: he_uniform(h, v, leak, rng),
        b1: Array1::zeros(h),
        w2: he_uniform(h, h, leak, rng),
        b2: Array1::zeros(h),
        w3: he_uniform(1, h, leak, rng)
            .into_shape_with_order(h)
            .expect("1 x H"),
        b3: 0.0,
        leak,
    };
    Ok((gen, disc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims() -> NetworkDims {
        NetworkDims {
            topics: 40,
            embed: 50,
            vocab: 30,
            hidden: 20,
        }
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = init_params(dims(), 0.2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = init_params(dims(), 0.2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_scheme() {
        let (g, d) = init_params(dims(), 0.2, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(g.bn_gamma.iter().all(|x| *x == 1.0));
        assert!(g.bn_beta.iter().all(|x| *x == 0.0));
        assert!(g.bn_running_var.iter().all(|x| *x == 1.0));
        assert!(g.b_s.iter().chain(g.b_w.iter()).all(|x| *x == 0.0));
        assert_eq!(d.b3, 0.0);
        assert_eq!(g.w_s.dim(), (50, 40));
        assert_eq!(g.w_w.dim(), (30, 50));
        assert_eq!(d.w1.dim(), (20, 30));
    }

    #[test]
    fn init_variance_matches_fan_in_law() {
        let leak = 0.2;
        let (g, _) = init_params(dims(), leak, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let n = g.w_s.len() as f64;
        let mean = g.w_s.sum() / n;
        let var = g.w_s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expect = 2.0 / ((1.0 + leak * leak) * 40.0);
        // uniform on [-b, b]: fourth moment b^4/5, so Var(s^2) ~ (b^4/5 - sigma^4)/n
        let b2 = 3.0 * expect;
        let se = ((b2 * b2 / 5.0 - expect * expect) / n).sqrt();
        assert!(
            (var - expect).abs() < 3.0 * se,
            "var {var}, expect {expect}"
        );
    }

    #[test]
    fn rejects_bad_dims_and_leak() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut d = dims();
        d.hidden = 0;
        assert!(init_params(d, 0.2, &mut rng).is_err());
        assert!(init_params(dims(), 1.0, &mut rng).is_err());
        assert!(init_params(dims(), 0.0, &mut rng).is_err());
    }
}
