use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{check_leak, ensure_finite, leaky, leaky_slope, NetworkDims, ParamTensors};
use crate::error::{AtmError, Result};

/// Wasserstein critic: three affine layers, LeakyReLU between them, linear
/// scalar output.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorParams {
    /// H × V
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// H × H
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array1<f64>,
    pub b3: f64,
    pub leak: f64,
}

#[derive(Debug, Clone)]
pub struct DiscriminatorTrace {
    input: Array2<f64>,
    pub(super) z1: Array2<f64>,
    a1: Array2<f64>,
    pub(super) z2: Array2<f64>,
    a2: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorGrads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array1<f64>,
    pub b3: f64,
}

impl DiscriminatorParams {
    pub fn vocab_size(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w1.nrows()
    }

    pub fn validate(&self, dims: NetworkDims) -> Result<()> {
        check_leak(self.leak)?;
        let (v, h) = (dims.vocab, dims.hidden);
        let ok = self.w1.dim() == (h, v)
            && self.b1.len() == h
            && self.w2.dim() == (h, h)
            && self.b2.len() == h
            && self.w3.len() == h;
        if !ok {
            return Err(AtmError::Shape(format!(
                "discriminator tensors do not match V={v} H={h}"
            )));
        }
        Ok(())
    }

    pub fn forward(&self, docs: ArrayView2<f64>) -> Result<(Array1<f64>, DiscriminatorTrace)> {
        if docs.ncols() != self.vocab_size() {
            return Err(AtmError::Shape(format!(
                "documents have {} columns, critic expects V={}",
                docs.ncols(),
                self.vocab_size()
            )));
        }
        ensure_finite(docs, "critic input")?;
        let leak = self.leak;
        let z1 = docs.dot(&self.w1.t()) + &self.b1;
        let a1 = z1.mapv(|x| leaky(x, leak));
        let z2 = a1.dot(&self.w2.t()) + &self.b2;
        let a2 = z2.mapv(|x| leaky(x, leak));
        let scores = a2.dot(&self.w3) + self.b3;
        let trace = DiscriminatorTrace {
            input: docs.to_owned(),
            z1,
            a1,
            z2,
            a2,
        };
        Ok((scores, trace))
    }

    pub fn score(&self, docs: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.forward(docs).map(|(s, _)| s)
    }

    /// Reverse pass for `sum(upstream ⊙ scores)`; also returns the input
    /// gradient, row i being `upstream[i] * ∇_x D(x_i)`.
    pub fn backward(
        &self,
        trace: DiscriminatorTrace,
        upstream: ArrayView1<f64>,
    ) -> Result<(DiscriminatorGrads, Array2<f64>)> {
        if upstream.len() != trace.input.nrows() {
            return Err(AtmError::Shape(format!(
                "upstream has {} entries for a batch of {}",
                upstream.len(),
                trace.input.nrows()
            )));
        }
        if trace.z1.ncols() != self.hidden_size() || trace.input.ncols() != self.vocab_size() {
            return Err(AtmError::Shape(
                "trace does not belong to these parameters".into(),
            ));
        }
        if !upstream.iter().all(|x| x.is_finite()) {
            return Err(AtmError::Numeric("upstream gradient is not finite".into()));
        }
        let leak = self.leak;
        let up_col = upstream.insert_axis(Axis(1));

        let w3 = trace.a2.t().dot(&upstream);
        let b3 = upstream.sum();

        let mut d_z2 = up_col.dot(&self.w3.view().insert_axis(Axis(0)));
        d_z2.zip_mut_with(&trace.z2, |g, &z| *g *= leaky_slope(z, leak));
        let w2 = d_z2.t().dot(&trace.a1);
        let b2 = d_z2.sum_axis(Axis(0));

        let mut d_z1 = d_z2.dot(&self.w2);
        d_z1.zip_mut_with(&trace.z1, |g, &z| *g *= leaky_slope(z, leak));
        let w1 = d_z1.t().dot(&trace.input);
        let b1 = d_z1.sum_axis(Axis(0));
        let d_input = d_z1.dot(&self.w1);

        Ok((
            DiscriminatorGrads {
                w1,
                b1,
                w2,
                b2,
                w3,
                b3,
            },
            d_input,
        ))
    }
}

impl DiscriminatorGrads {
    pub fn zeros_like(p: &DiscriminatorParams) -> Self {
        Self {
            w1: Array2::zeros(p.w1.dim()),
            b1: Array1::zeros(p.b1.len()),
            w2: Array2::zeros(p.w2.dim()),
            b2: Array1::zeros(p.b2.len()),
            w3: Array1::zeros(p.w3.len()),
            b3: 0.0,
        }
    }

    pub fn add_assign(&mut self, other: &DiscriminatorGrads) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

macro_rules! critic_views {
    ($ty:ty) => {
        impl ParamTensors for $ty {
            fn tensors(&self) -> Vec<&[f64]> {
                vec![
                    self.w1.as_slice().expect("standard layout"),
                    self.b1.as_slice().expect("standard layout"),
                    self.w2.as_slice().expect("standard layout"),
                    self.b2.as_slice().expect("standard layout"),
                    self.w3.as_slice().expect("standard layout"),
                    std::slice::from_ref(&self.b3),
                ]
            }
            fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
                vec![
                    self.w1.as_slice_mut().expect("standard layout"),
                    self.b1.as_slice_mut().expect("standard layout"),
                    self.w2.as_slice_mut().expect("standard layout"),
                    self.b2.as_slice_mut().expect("standard layout"),
                    self.w3.as_slice_mut().expect("standard layout"),
                    std::slice::from_mut(&mut self.b3),
                ]
            }
        }
    };
}

critic_views!(DiscriminatorParams);
critic_views!(DiscriminatorGrads);
