use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::DenseMatrix;

/// A set of trainable tensors with stable names and order.
pub trait Parameters {
    fn tensors(&self) -> Vec<(String, &DenseMatrix)>;
    fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix>;

    fn squared_norm(&self) -> f64 {
        self.tensors().iter().map(|(_, t)| t.sum_squares()).sum()
    }

    /// Name of the first tensor holding a NaN or infinity.
    fn first_non_finite(&self) -> Option<String> {
        self.tensors()
            .into_iter()
            .find(|(_, t)| !t.is_finite())
            .map(|(name, _)| name)
    }
}

impl Parameters for crate::model::ModelParams {
    fn tensors(&self) -> Vec<(String, &DenseMatrix)> {
        crate::model::ModelParams::tensors(self)
    }

    fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        crate::model::ModelParams::tensors_mut(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment accumulators, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    first: Vec<DenseMatrix>,
    second: Vec<DenseMatrix>,
}

impl AdamState {
    pub fn new<P: Parameters>(params: &P) -> Self {
        let zeros: Vec<DenseMatrix> = params
            .tensors()
            .iter()
            .map(|(_, t)| DenseMatrix::zeros(t.rows(), t.cols()))
            .collect();
        AdamState {
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    fn check<P: Parameters>(&self, params: &P) -> Result<()> {
        let tensors = params.tensors();
        if tensors.len() != self.first.len() {
            return Err(Error::Invalid(format!(
                "optimizer state tracks {} tensors, model has {}",
                self.first.len(),
                tensors.len()
            )));
        }
        for ((name, t), m) in tensors.iter().zip(&self.first) {
            if t.shape() != m.shape() {
                return Err(Error::Dimension {
                    op: "adam state",
                    left: m.shape(),
                    right: t.shape(),
                })
                .map_err(|e| Error::Invalid(format!("{name}: {e}")));
            }
        }
        Ok(())
    }
}

/// One bias-corrected Adam update of every tensor in `params`.
pub fn adam_step<P: Parameters>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState,
    learning_rate: f64,
    config: &AdamConfig,
) -> Result<()> {
    state.check(params)?;
    state.check(grads)?;
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - config.beta1.powi(t);
    let bias2 = 1.0 - config.beta2.powi(t);
    let grads = grads.tensors();
    for (((theta, (_, g)), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads)
        .zip(&mut state.first)
        .zip(&mut state.second)
    {
        let (theta, g, m, v) = (
            theta.as_mut_slice(),
            g.as_slice(),
            m.as_mut_slice(),
            v.as_mut_slice(),
        );
        for k in 0..theta.len() {
            m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
            v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
            let m_hat = m[k] / bias1;
            let v_hat = v[k] / bias2;
            theta[k] -= learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Debug, PartialEq)]
    struct Single(DenseMatrix);

    impl Parameters for Single {
        fn tensors(&self) -> Vec<(String, &DenseMatrix)> {
            vec![("x".into(), &self.0)]
        }
        fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Single(DenseMatrix::from_rows(&[[1.0, -2.0]]));
        let before = p.clone();
        let mut s = AdamState::new(&p);
        let g = Single(DenseMatrix::zeros(1, 2));
        for _ in 0..3 {
            adam_step(&mut p, &g, &mut s, 0.1, &AdamConfig::default()).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(s.step, 3);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        for &g in &[3.7, -0.02, 1e-3] {
            let mut p = Single(DenseMatrix::from_rows(&[[0.5]]));
            let mut s = AdamState::new(&p);
            let lr = 1e-3;
            adam_step(
                &mut p,
                &Single(DenseMatrix::from_rows(&[[g]])),
                &mut s,
                lr,
                &AdamConfig::default(),
            )
            .unwrap();
            // m̂ = g, v̂ = g², so the step is lr·g/(|g| + ε).
            let expect = 0.5 - lr * g / (g.abs() + 1e-8);
            assert!((p.0.get(0, 0) - expect).abs() < 1e-15);
            assert!((p.0.get(0, 0) - (0.5 - lr * g.signum())).abs() < 1e-8);
        }
    }

    #[test]
    fn state_makes_two_steps_differ_from_one_doubled() {
        let g = Single(DenseMatrix::from_rows(&[[1.0, -0.5]]));
        let mut a = Single(DenseMatrix::from_rows(&[[0.3, 0.3]]));
        let mut sa = AdamState::new(&a);
        adam_step(&mut a, &g, &mut sa, 0.01, &AdamConfig::default()).unwrap();
        adam_step(
            &mut a,
            &Single(DenseMatrix::from_rows(&[[0.2, 0.9]])),
            &mut sa,
            0.01,
            &AdamConfig::default(),
        )
        .unwrap();
        let mut b = Single(DenseMatrix::from_rows(&[[0.3, 0.3]]));
        let mut sb = AdamState::new(&b);
        adam_step(&mut b, &g, &mut sb, 0.02, &AdamConfig::default()).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let mut p = Single(DenseMatrix::zeros(2, 2));
        let mut s = AdamState::new(&Single(DenseMatrix::zeros(1, 2)));
        let g = Single(DenseMatrix::zeros(2, 2));
        assert!(adam_step(&mut p, &g, &mut s, 0.1, &AdamConfig::default()).is_err());
    }
}
