use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{check_leak, ensure_finite, leaky, leaky_slope, Mode, NetworkDims, ParamTensors};
use crate::error::{AtmError, Result};

pub const BN_EPS: f64 = 1e-5;
/// Weight kept on the previous running statistic at each update.
pub const BN_MOMENTUM: f64 = 0.9;

/// Maps topic proportions to a distribution over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    /// S × K
    pub w_s: Array2<f64>,
    pub b_s: Array1<f64>,
    pub bn_gamma: Array1<f64>,
    pub bn_beta: Array1<f64>,
    pub bn_running_mean: Array1<f64>,
    pub bn_running_var: Array1<f64>,
    /// V × S; row i is the embedding of word i.
    pub w_w: Array2<f64>,
    pub b_w: Array1<f64>,
    pub leak: f64,
}

/// Activations cached by one generator forward pass.
#[derive(Debug, Clone)]
pub struct GeneratorTrace {
    mode: Mode,
    theta: Array2<f64>,
    pre_act: Array2<f64>,
    x_hat: Array2<f64>,
    inv_std: Array1<f64>,
    embed: Array2<f64>,
    probs: Array2<f64>,
}

impl GeneratorTrace {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Embedding-layer output `o_s`, one row per batch item.
    pub fn embedding(&self) -> &Array2<f64> {
        &self.embed
    }

    pub fn output(&self) -> &Array2<f64> {
        &self.probs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorGrads {
    pub w_s: Array2<f64>,
    pub b_s: Array1<f64>,
    pub bn_gamma: Array1<f64>,
    pub bn_beta: Array1<f64>,
    pub w_w: Array2<f64>,
    pub b_w: Array1<f64>,
}

impl GeneratorParams {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.w_s.ncols(), self.w_s.nrows(), self.w_w.nrows())
    }

    pub fn topics(&self) -> usize {
        self.w_s.ncols()
    }

    pub fn embed_size(&self) -> usize {
        self.w_s.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.w_w.nrows()
    }

    pub fn validate(&self, dims: NetworkDims) -> Result<()> {
        check_leak(self.leak)?;
        let (k, s, v) = (dims.topics, dims.embed, dims.vocab);
        let ok = self.w_s.dim() == (s, k)
            && self.b_s.len() == s
            && self.bn_gamma.len() == s
            && self.bn_beta.len() == s
            && self.bn_running_mean.len() == s
            && self.bn_running_var.len() == s
            && self.w_w.dim() == (v, s)
            && self.b_w.len() == v;
        if !ok {
            return Err(AtmError::Shape(format!(
                "generator tensors do not match K={k} S={s} V={v}"
            )));
        }
        if self.bn_running_var.iter().any(|x| *x < 0.0) {
            return Err(AtmError::Value(
                "negative BatchNorm running variance".into(),
            ));
        }
        Ok(())
    }

    pub fn forward(
        &mut self,
        theta: ArrayView2<f64>,
        mode: Mode,
    ) -> Result<(Array2<f64>, GeneratorTrace)> {
        match mode {
            Mode::Train => self.forward_train(theta),
            Mode::Inference => self.forward_inference(theta),
        }
    }

    /// Batch-statistics BatchNorm; folds the batch moments into the running
    /// statistics.
    pub fn forward_train(
        &mut self,
        theta: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, GeneratorTrace)> {
        self.check_input(theta)?;
        let m = theta.nrows();
        if m < 2 {
            return Err(AtmError::Value(format!(
                "train-mode BatchNorm needs a batch of at least 2, got {m}"
            )));
        }
        let pre_act = self.affine_in(theta);
        let act = pre_act.mapv(|x| leaky(x, self.leak));
        let mean = act.mean_axis(Axis(0)).expect("m >= 2");
        let centered = &act - &mean;
        let var = centered.mapv(|x| x * x).sum_axis(Axis(0)) / m as f64;
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        let x_hat = &centered * &inv_std;

        let unbiased = &var * (m as f64 / (m as f64 - 1.0));
        self.bn_running_mean = &self.bn_running_mean * BN_MOMENTUM + &mean * (1.0 - BN_MOMENTUM);
        self.bn_running_var = &self.bn_running_var * BN_MOMENTUM + &unbiased * (1.0 - BN_MOMENTUM);

        Ok(self.finish(Mode::Train, theta, pre_act, x_hat, inv_std))
    }

    /// Running-statistics BatchNorm. Pure: rows are independent.
    pub fn forward_inference(
        &self,
        theta: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, GeneratorTrace)> {
        self.check_input(theta)?;
        let pre_act = self.affine_in(theta);
        let act = pre_act.mapv(|x| leaky(x, self.leak));
        let inv_std = self.bn_running_var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        let x_hat = (&act - &self.bn_running_mean) * &inv_std;
        Ok(self.finish(Mode::Inference, theta, pre_act, x_hat, inv_std))
    }

    fn check_input(&self, theta: ArrayView2<f64>) -> Result<()> {
        if theta.ncols() != self.topics() {
            return Err(AtmError::Shape(format!(
                "theta has {} columns, generator expects K={}",
                theta.ncols(),
                self.topics()
            )));
        }
        if theta.nrows() == 0 {
            return Err(AtmError::Value("empty theta batch".into()));
        }
        ensure_finite(theta, "theta")
    }

    fn affine_in(&self, theta: ArrayView2<f64>) -> Array2<f64> {
        theta.dot(&self.w_s.t()) + &self.b_s
    }

    fn finish(
        &self,
        mode: Mode,
        theta: ArrayView2<f64>,
        pre_act: Array2<f64>,
        x_hat: Array2<f64>,
        inv_std: Array1<f64>,
    ) -> (Array2<f64>, GeneratorTrace) {
        let embed = &x_hat * &self.bn_gamma + &self.bn_beta;
        let mut probs = embed.dot(&self.w_w.t()) + &self.b_w;
        softmax_rows(&mut probs);
        let trace = GeneratorTrace {
            mode,
            theta: theta.to_owned(),
            pre_act,
            x_hat,
            inv_std,
            embed,
            probs: probs.clone(),
        };
        (probs, trace)
    }

    /// Reverse pass for `sum(upstream ⊙ output)`. Returns parameter gradients
    /// and the gradient with respect to theta.
    pub fn backward(
        &self,
        trace: GeneratorTrace,
        upstream: ArrayView2<f64>,
    ) -> Result<(GeneratorGrads, Array2<f64>)> {
        if upstream.dim() != trace.probs.dim() {
            return Err(AtmError::Shape(format!(
                "upstream {:?} does not match generator output {:?}",
                upstream.dim(),
                trace.probs.dim()
            )));
        }
        if trace.theta.ncols() != self.topics() || trace.embed.ncols() != self.embed_size() {
            return Err(AtmError::Shape(
                "trace does not belong to these parameters".into(),
            ));
        }
        ensure_finite(upstream, "upstream gradient")?;
        let m = trace.probs.nrows() as f64;

        // softmax: dh = p ⊙ (g - <g, p>)
        let dot = (&upstream * &trace.probs)
            .sum_axis(Axis(1))
            .insert_axis(Axis(1));
        let d_logits = &trace.probs * &(&upstream - &dot);

        let w_w = d_logits.t().dot(&trace.embed);
        let b_w = d_logits.sum_axis(Axis(0));
        let d_embed = d_logits.dot(&self.w_w);

        let bn_gamma = (&d_embed * &trace.x_hat).sum_axis(Axis(0));
        let bn_beta = d_embed.sum_axis(Axis(0));
        let d_xhat = &d_embed * &self.bn_gamma;

        let d_act = match trace.mode {
            Mode::Inference => &d_xhat * &trace.inv_std,
            Mode::Train => {
                let sum_d = d_xhat.sum_axis(Axis(0));
                let sum_dx = (&d_xhat * &trace.x_hat).sum_axis(Axis(0));
                let inner = &d_xhat * m - &sum_d - &(&trace.x_hat * &sum_dx);
                inner * &(&trace.inv_std / m)
            }
        };

        let leak = self.leak;
        let mut d_pre = d_act;
        d_pre.zip_mut_with(&trace.pre_act, |g, &z| *g *= leaky_slope(z, leak));

        let w_s = d_pre.t().dot(&trace.theta);
        let b_s = d_pre.sum_axis(Axis(0));
        let d_theta = d_pre.dot(&self.w_s);

        Ok((
            GeneratorGrads {
                w_s,
                b_s,
                bn_gamma,
                bn_beta,
                w_w,
                b_w,
            },
            d_theta,
        ))
    }
}

/// In-place row softmax with max subtraction.
pub(crate) fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|x| x / sum);
    }
}

impl GeneratorGrads {
    pub fn zeros_like(p: &GeneratorParams) -> Self {
        Self {
            w_s: Array2::zeros(p.w_s.dim()),
            b_s: Array1::zeros(p.b_s.len()),
            bn_gamma: Array1::zeros(p.bn_gamma.len()),
            bn_beta: Array1::zeros(p.bn_beta.len()),
            w_w: Array2::zeros(p.w_w.dim()),
            b_w: Array1::zeros(p.b_w.len()),
        }
    }
}

macro_rules! tensor_views {
    ($ty:ty, $($field:ident),+) => {
        impl ParamTensors for $ty {
            fn tensors(&self) -> Vec<&[f64]> {
                vec![$(self.$field.as_slice().expect("standard layout")),+]
            }
            fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
                vec![$(self.$field.as_slice_mut().expect("standard layout")),+]
            }
        }
    };
}

tensor_views!(GeneratorParams, w_s, b_s, bn_gamma, bn_beta, w_w, b_w);
tensor_views!(GeneratorGrads, w_s, b_s, bn_gamma, bn_beta, w_w, b_w);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_params;
    use crate::sampling::{sample_dirichlet_batch, DirichletPrior};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (GeneratorParams, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = NetworkDims {
            topics: 3,
            embed: 4,
            vocab: 5,
            hidden: 3,
        };
        let (g, _) = init_params(dims, 0.2, &mut rng).unwrap();
        let prior = DirichletPrior::symmetric(3, 1.0).unwrap();
        let theta = sample_dirichlet_batch(&prior, 4, &mut rng).unwrap();
        (g, theta)
    }

    #[test]
    fn rows_are_positive_distributions() {
        let (mut g, theta) = setup(1);
        let (out, _) = g.forward_train(theta.view()).unwrap();
        for row in out.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|p| *p > 0.0));
        }
    }

    #[test]
    fn zero_output_layer_gives_uniform_rows() {
        let (mut g, theta) = setup(2);
        g.w_w.fill(0.0);
        g.b_w.fill(0.0);
        let (out, _) = g.forward_train(theta.view()).unwrap();
        assert!(out.iter().all(|p| (*p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn inference_is_pure() {
        let (mut g, theta) = setup(3);
        g.forward_train(theta.view()).unwrap();
        let before = g.clone();
        let (a, _) = g.forward_inference(theta.view()).unwrap();
        let (b, _) = g.forward_inference(theta.view()).unwrap();
        assert_eq!(a, b);
        assert_eq!(before, g);
        // per-row outputs do not depend on the rest of the batch
        let (single, _) = g
            .forward_inference(theta.slice(ndarray::s![1..2, ..]))
            .unwrap();
        assert_eq!(single.row(0), a.row(1));
    }

    #[test]
    fn train_mode_updates_running_stats() {
        let (mut g, theta) = setup(4);
        let before = g.bn_running_mean.clone();
        g.forward_train(theta.view()).unwrap();
        assert_ne!(before, g.bn_running_mean);
    }

    #[test]
    fn batchnorm_normalizes_in_train_mode() {
        let (mut g, _) = setup(5);
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let prior = DirichletPrior::symmetric(3, 1.0).unwrap();
        let theta = sample_dirichlet_batch(&prior, 64, &mut rng).unwrap();
        let (_, trace) = g.forward_train(theta.view()).unwrap();
        let mean = trace.x_hat.mean_axis(Axis(0)).unwrap();
        let var = trace.x_hat.mapv(|x| x * x).mean_axis(Axis(0)).unwrap();
        assert!(mean.iter().all(|x| x.abs() < 1e-6));
        // eps inside the root shrinks the variance by var/(var+eps)
        let raw_var = trace.inv_std.mapv(|s| 1.0 / (s * s) - BN_EPS);
        for (v, r) in var.iter().zip(raw_var.iter()) {
            assert!((v - r / (r + BN_EPS)).abs() < 1e-9);
            assert!((v - 1.0).abs() < 1e-4 || *r < 0.1, "var {v} raw {r}");
        }
    }

    #[test]
    fn single_row_train_batch_is_rejected() {
        let (mut g, theta) = setup(6);
        assert!(g.forward_train(theta.slice(ndarray::s![0..1, ..])).is_err());
    }

    #[test]
    fn non_finite_theta_is_rejected() {
        let (mut g, mut theta) = setup(7);
        theta[[0, 0]] = f64::NAN;
        assert!(matches!(
            g.forward_train(theta.view()),
            Err(AtmError::Numeric(_))
        ));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let (mut g, theta) = setup(8);
        let (out, trace) = g.forward_train(theta.view()).unwrap();
        let (grads, dtheta) = g.backward(trace, Array2::zeros(out.dim()).view()).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
        assert!(dtheta.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn backward_is_linear_in_upstream() {
        let (mut g, theta) = setup(9);
        let (out, trace) = g.forward_train(theta.view()).unwrap();
        let up = out.mapv(|p| p.sin() + 0.3);
        let (g1, t1) = g.backward(trace.clone(), up.view()).unwrap();
        let (g2, t2) = g.backward(trace, (&up * 2.0).view()).unwrap();
        for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((2.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
        assert!(t1
            .iter()
            .zip(t2.iter())
            .all(|(x, y)| (2.0 * x - y).abs() < 1e-12));
    }

    #[test]
    fn upstream_shape_is_checked() {
        let (mut g, theta) = setup(10);
        let (_, trace) = g.forward_train(theta.view()).unwrap();
        assert!(matches!(
            g.backward(trace, Array2::zeros((4, 4)).view()),
            Err(AtmError::Shape(_))
        ));
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let mut a = ndarray::arr2(&[[1.0, 2.0, 3.0]]);
        let mut b = ndarray::arr2(&[[1001.0, 1002.0, 1003.0]]);
        softmax_rows(&mut a);
        softmax_rows(&mut b);
        assert!(a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-15));
    }
}
