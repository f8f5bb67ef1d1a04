//! Gradient penalty `lambda * mean_i (|∇_x D(x_i)| - 1)^2` and its exact
//! gradient with respect to the critic parameters.
//!
//! With piecewise-linear activations the input gradient of one row is
//!
//! ```text
//! r2 = s2 ⊙ w3,   q1 = W2ᵀ r2,   r1 = s1 ⊙ q1,   g = W1ᵀ r1
//! ```
//!
//! where `s1`, `s2` are the LeakyReLU slopes at the row's pre-activations.
//! The slopes are locally constant, so differentiating the penalty through
//! `g` only touches `W1`, `W2` and `w3`; biases get zero gradient.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{leaky_slope, DiscriminatorGrads, DiscriminatorParams};
use crate::error::{AtmError, Result};

#[derive(Debug, Clone)]
pub struct PenaltyOutput {
    /// `lambda * raw`
    pub value: f64,
    /// `mean_i (|g_i| - 1)^2`, unscaled.
    pub raw: f64,
    /// Per-row `|∇_x D(x_i)|`.
    pub grad_norms: Array1<f64>,
    pub grads: DiscriminatorGrads,
}

struct InputGradient {
    s1: Array2<f64>,
    s2: Array2<f64>,
    r1: Array2<f64>,
    r2: Array2<f64>,
    g: Array2<f64>,
}

impl DiscriminatorParams {
    fn input_gradient_parts(&self, docs: ArrayView2<f64>) -> Result<InputGradient> {
        let (_, trace) = self.forward(docs)?;
        let leak = self.leak;
        let s1 = trace.z1.mapv(|z| leaky_slope(z, leak));
        let s2 = trace.z2.mapv(|z| leaky_slope(z, leak));
        let r2 = &s2 * &self.w3;
        let r1 = &s1 * &r2.dot(&self.w2);
        let g = r1.dot(&self.w1);
        Ok(InputGradient { s1, s2, r1, r2, g })
    }

    /// `∇_x D(x)` for every row of `docs`.
    pub fn input_gradient(&self, docs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.input_gradient_parts(docs).map(|p| p.g)
    }

    pub fn gradient_penalty(&self, d_hat: ArrayView2<f64>, lambda: f64) -> Result<PenaltyOutput> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(AtmError::Value(format!(
                "lambda must be >= 0, got {lambda}"
            )));
        }
        if d_hat.nrows() == 0 {
            return Err(AtmError::Value("empty interpolate batch".into()));
        }
        let InputGradient { s1, s2, r1, r2, g } = self.input_gradient_parts(d_hat)?;
        let m = d_hat.nrows() as f64;
        let grad_norms = g.map_axis(Axis(1), |row| row.dot(&row).sqrt());
        let raw = grad_norms.iter().map(|n| (n - 1.0).powi(2)).sum::<f64>() / m;
        if !raw.is_finite() {
            return Err(AtmError::Numeric("gradient penalty is not finite".into()));
        }

        // d/dg of lambda/m (|g| - 1)^2 = lambda/m * 2 (|g| - 1) g / |g|
        let coef = grad_norms.mapv(|n| {
            if n > 0.0 {
                lambda * 2.0 * (n - 1.0) / (m * n)
            } else {
                0.0
            }
        });
        let c = &g * &coef.insert_axis(Axis(1));

        let w1 = r1.t().dot(&c);
        let d_q1 = &s1 * &c.dot(&self.w1.t());
        let w2 = r2.t().dot(&d_q1);
        let w3 = (&s2 * &d_q1.dot(&self.w2.t())).sum_axis(Axis(0));

        let h = self.hidden_size();
        Ok(PenaltyOutput {
            value: lambda * raw,
            raw,
            grad_norms,
            grads: DiscriminatorGrads {
                w1,
                b1: Array1::zeros(h),
                w2,
                b2: Array1::zeros(h),
                w3,
                b3: 0.0,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_params, NetworkDims, ParamTensors};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (DiscriminatorParams, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = NetworkDims {
            topics: 3,
            embed: 4,
            vocab: 6,
            hidden: 5,
        };
        let (_, d) = init_params(dims, 0.2, &mut rng).unwrap();
        let x = Array2::from_shape_simple_fn((4, 6), || rng.random::<f64>());
        (d, x)
    }

    #[test]
    fn input_gradient_matches_backward() {
        let (d, x) = setup(1);
        let (_, trace) = d.forward(x.view()).unwrap();
        let (_, gi) = d.backward(trace, Array1::ones(4).view()).unwrap();
        let g = d.input_gradient(x.view()).unwrap();
        assert!(gi.iter().zip(g.iter()).all(|(a, b)| (a - b).abs() < 1e-13));
    }

    #[test]
    fn unit_norm_linear_critic_has_no_penalty() {
        // Positive weights and inputs keep every unit on its identity branch:
        // D(x) = w3ᵀ W2 W1 x, a linear map. Scale w3 so that |∇D| = 1.
        let (mut d, x) = setup(2);
        d.w1.mapv_inplace(f64::abs);
        d.w2.mapv_inplace(f64::abs);
        d.w3.mapv_inplace(f64::abs);
        let norm = d.w3.dot(&d.w2).dot(&d.w1).mapv(|v| v * v).sum().sqrt();
        d.w3 /= norm;
        let out = d.gradient_penalty(x.view(), 10.0).unwrap();
        assert!(out.value < 1e-24, "{}", out.value);
        assert!(out.grads.max_abs() < 1e-11);
        assert!(out.grad_norms.iter().all(|n| (n - 1.0).abs() < 1e-12));
    }

    #[test]
    fn zero_lambda_is_inert() {
        let (d, x) = setup(3);
        let out = d.gradient_penalty(x.view(), 0.0).unwrap();
        assert_eq!(out.value, 0.0);
        assert_eq!(out.grads.max_abs(), 0.0);
        assert!(out.raw > 0.0);
    }

    #[test]
    fn zero_gradient_rows_are_fine() {
        let (mut d, x) = setup(4);
        d.w3.fill(0.0);
        let out = d.gradient_penalty(x.view(), 10.0).unwrap();
        assert!((out.value - 10.0).abs() < 1e-12);
        assert!(out.grads.is_finite());
    }

    #[test]
    fn rejects_negative_lambda() {
        let (d, x) = setup(5);
        assert!(d.gradient_penalty(x.view(), -1.0).is_err());
    }
}
