use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

use super::network::{Gradients, Network};

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub step: u64,
    pub first_moment: Vec<Tensor<T>>,
    pub second_moment: Vec<Tensor<T>>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(shapes: &[&[usize]], learning_rate: f64) -> Self {
        AdamState {
            step: 0,
            first_moment: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            second_moment: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            learning_rate,
        }
    }

    pub fn for_network(network: &Network<T>, learning_rate: f64) -> Self {
        let params = network.trainable_params();
        let shapes: Vec<&[usize]> = params.iter().map(|t| t.shape()).collect();
        Self::new(&shapes, learning_rate)
    }

    pub fn update(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::Shape(format!(
                "adam: {} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first_moment[i].shape() {
                return Err(Error::Shape(format!(
                    "adam slot {i}: param {:?}, grad {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::cast(self.beta1), T::cast(self.beta2));
        let c1 = T::cast(1.0 - self.beta1.powi(t));
        let c2 = T::cast(1.0 - self.beta2.powi(t));
        let lr = T::cast(self.learning_rate);
        let eps = T::cast(self.epsilon);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.first_moment[i].data_mut();
            let v = self.second_moment[i].data_mut();
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = b1 * *mv + (T::one() - b1) * gv;
                *vv = b2 * *vv + (T::one() - b2) * gv * gv;
                let mhat = *mv / c1;
                let vhat = *vv / c2;
                *pv -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// One Adam update of every trainable tensor of `network`.
pub fn adam_step<T: Scalar>(state: &mut AdamState<T>, network: &mut Network<T>, grads: &Gradients<T>) -> Result<()> {
    let mut params = network.trainable_params_mut();
    state.update(&mut params, &grads.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::<f64>::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let before = p.clone();
        let mut st = AdamState::<f64>::new(&[&[3]], 0.01);
        let g = Tensor::zeros(&[3]);
        st.update(&mut [&mut p], &[g]).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Tensor::<f64>::zeros(&[1]);
        let mut st = AdamState::<f64>::new(&[&[1]], 0.001);
        let g = Tensor::new(vec![1], vec![1.0]).unwrap();
        st.update(&mut [&mut p], &[g]).unwrap();
        // m_hat = v_hat = 1, so the step is lr / (1 + eps)
        assert_abs_diff_eq!(p.data()[0], -0.001 / (1.0 + 1e-7), epsilon = 1e-15);
        assert_abs_diff_eq!(p.data()[0], -0.001, epsilon = 1e-9);
    }

    #[test]
    fn descends_a_quadratic() {
        // f(x) = (x - 3)^2
        let f = |x: f64| (x - 3.0).powi(2);
        let mut p = Tensor::<f64>::zeros(&[1]);
        let mut st = AdamState::<f64>::new(&[&[1]], 0.1);
        let mut last = f(0.0);
        for _ in 0..2 {
            let x = p.data()[0];
            let g = Tensor::new(vec![1], vec![2.0 * (x - 3.0)]).unwrap();
            st.update(&mut [&mut p], &[g]).unwrap();
            let now = f(p.data()[0]);
            assert!(now < last);
            last = now;
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = Tensor::<f32>::zeros(&[2]);
        let mut st = AdamState::<f32>::new(&[&[2]], 0.1);
        assert!(st.update(&mut [&mut p], &[Tensor::zeros(&[3])]).is_err());
    }
}
