//! Minimal CPU tensor engine: NCHW tensors, convolution layers with
//! hand-written backward passes, and the Adam optimizer.

mod layers;
mod scalar;
mod tensor;

pub use layers::{
    conv_out_size, conv_transpose_out_size, Activation, ActivationLayer, BatchNorm2d, Conv2d,
    ConvTranspose2d, Linear, Param,
};
pub use scalar::Scalar;
pub use tensor::Tensor;

use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Fill a parameter with draws from `N(0, std^2)`.
pub fn init_normal<T: Scalar, R: Rng>(param: &mut Param<T>, std: f64, rng: &mut R) {
    let dist = Normal::new(0.0, std).expect("finite std");
    for v in &mut param.value {
        *v = T::of(dist.sample(rng));
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first_moment: Vec<Vec<T>>,
    second_moment: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    /// Apply one update from the gradients currently stored in `params`.
    ///
    /// The parameter list must be presented in the same order on every call.
    pub fn update(&mut self, params: &mut [&mut Param<T>]) {
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.second_moment = self.first_moment.clone();
        }
        assert_eq!(self.first_moment.len(), params.len(), "adam: parameter set changed");
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(t));
        let c2 = T::of(1.0 - self.beta2.powi(t));
        let lr = T::of(self.learning_rate);
        let eps = T::of(self.eps);
        for ((p, m), v) in params
            .iter_mut()
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + (T::one() - b1) * g;
                v[i] = b2 * v[i] + (T::one() - b2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p.value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
