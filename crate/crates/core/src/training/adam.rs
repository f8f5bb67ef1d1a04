use crate::error::{AtmError, Result};
use crate::network::ParamTensors;

pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
}

/// Bias-corrected Adam moments for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new<P: ParamTensors + ?Sized>(params: &P) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        Self {
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn timestep(&self) -> u64 {
        self.t
    }

    pub fn second_moments(&self) -> impl Iterator<Item = f64> + '_ {
        self.second.iter().flatten().copied()
    }

    pub fn step<P, G>(&mut self, params: &mut P, grads: &G, hyper: AdamHyper) -> Result<()>
    where
        P: ParamTensors + ?Sized,
        G: ParamTensors + ?Sized,
    {
        let grads = grads.tensors();
        let mut params = params.tensors_mut();
        let congruent = grads.len() == self.first.len()
            && params.len() == self.first.len()
            && grads
                .iter()
                .zip(&params)
                .zip(&self.first)
                .all(|((g, p), m)| g.len() == m.len() && p.len() == m.len());
        if !congruent {
            return Err(AtmError::Shape(
                "gradients, parameters and optimizer state disagree".into(),
            ));
        }

        self.t += 1;
        let AdamHyper {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
        } = hyper;
        let t = self.t as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(&grads)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            for i in 0..g.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }
}
