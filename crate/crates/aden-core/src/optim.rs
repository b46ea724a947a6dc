//! Parameter initialization and AdaDelta updates.
//!
//! AdaDelta keeps two exponential accumulators per parameter and needs
//! no learning rate:
//!
//! ```text
//! g       <- grad + weight_decay * param
//! E[g^2]  <- rho * E[g^2] + (1 - rho) * g^2
//! delta   =  -sqrt(E[d^2] + eps) / sqrt(E[g^2] + eps) * g
//! E[d^2]  <- rho * E[d^2] + (1 - rho) * delta^2
//! param   <- param + delta
//! ```

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Draw `n` samples uniform on `[-g, g]` with `g = sqrt(6 / (fan_in + fan_out))`.
///
/// For convolutions the fans include the kernel size:
/// `fan_in = in_ch * kernel`, `fan_out = out_ch * kernel`.
pub fn glorot_uniform(fan_in: usize, fan_out: usize, n: usize, seed: u64) -> Result<Vec<f64>> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::Config(format!(
            "glorot fans must be >= 1, got fan_in={fan_in} fan_out={fan_out}"
        )));
    }
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| rng.random_range(-bound..=bound)).collect())
}

/// Hyperparameters of the optimizer. Only the weight decay is
/// task-specific; `rho` and `eps` keep their canonical values.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdaDeltaConfig {
    pub rho: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdaDeltaConfig {
    fn default() -> Self {
        AdaDeltaConfig { rho: 0.95, eps: 1e-6, weight_decay: 5e-4 }
    }
}

impl AdaDeltaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must be in (0, 1), got {}", self.rho)));
        }
        if self.eps <= 0.0 {
            return Err(Error::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Per-parameter accumulators.
#[derive(Clone, Debug)]
pub struct AdaDeltaState {
    pub acc_grad_sq: Vec<f64>,
    pub acc_update_sq: Vec<f64>,
}

impl AdaDeltaState {
    pub fn zeros(n: usize) -> Self {
        AdaDeltaState { acc_grad_sq: vec![0.0; n], acc_update_sq: vec![0.0; n] }
    }
}

/// Optimizer over a named parameter set; states are created lazily on
/// the first step for each name.
#[derive(Clone, Debug)]
pub struct AdaDelta {
    config: AdaDeltaConfig,
    states: BTreeMap<String, AdaDeltaState>,
}

impl AdaDelta {
    pub fn new(config: AdaDeltaConfig) -> Self {
        AdaDelta { config, states: BTreeMap::new() }
    }

    pub fn config(&self) -> AdaDeltaConfig {
        self.config
    }

    pub fn state(&self, name: &str) -> Option<&AdaDeltaState> {
        self.states.get(name)
    }

    pub fn states(&self) -> impl Iterator<Item = (&str, &AdaDeltaState)> {
        self.states.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn insert_state(&mut self, name: String, state: AdaDeltaState) {
        self.states.insert(name, state);
    }

    /// One update of `param` in place. `grad` is the raw gradient; the
    /// weight-decay term is added here.
    pub fn step(&mut self, name: &str, param: &mut Tensor, grad: &[f64]) -> Result<()> {
        let n = param.shape().numel();
        if grad.len() != n {
            return Err(Error::Shape(format!(
                "gradient length {} does not match parameter '{name}' ({n} elements)",
                grad.len()
            )));
        }
        if grad.iter().any(|g| g.is_nan()) {
            return Err(Error::Numeric(format!("NaN gradient for parameter '{name}'")));
        }
        let AdaDeltaConfig { rho, eps, weight_decay } = self.config;
        let state = self
            .states
            .entry(name.to_string())
            .or_insert_with(|| AdaDeltaState::zeros(n));
        let values = param.data_mut();
        for i in 0..n {
            let g = grad[i] + weight_decay * values[i];
            state.acc_grad_sq[i] = rho * state.acc_grad_sq[i] + (1.0 - rho) * g * g;
            let delta = -((state.acc_update_sq[i] + eps).sqrt() / (state.acc_grad_sq[i] + eps).sqrt()) * g;
            state.acc_update_sq[i] = rho * state.acc_update_sq[i] + (1.0 - rho) * delta * delta;
            values[i] += delta;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn glorot_bound_for_equal_small_fans() {
        // fan_in = fan_out = 3 gives sqrt(6/6) = 1.
        let vals = glorot_uniform(3, 3, 10_000, 7).unwrap();
        assert!(vals.iter().all(|v| v.abs() <= 1.0));
        assert!(vals.iter().any(|v| v.abs() > 0.9));
    }

    #[test]
    fn glorot_sample_statistics() {
        let (fan_in, fan_out, n) = (384, 384, 100_000);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let vals = glorot_uniform(fan_in, fan_out, n, 42).unwrap();
        let max = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max <= bound);
        let mean = vals.iter().sum::<f64>() / n as f64;
        // stddev of the sample mean is bound / sqrt(3 n)
        let three_sigma = 3.0 * bound / (3.0 * n as f64).sqrt();
        assert!(mean.abs() <= three_sigma, "mean {mean} outside 3 sigma {three_sigma}");
    }

    #[test]
    fn glorot_is_deterministic_and_rejects_zero_fans() {
        assert_eq!(glorot_uniform(8, 4, 32, 5).unwrap(), glorot_uniform(8, 4, 32, 5).unwrap());
        assert!(glorot_uniform(0, 4, 1, 0).is_err());
    }

    #[test]
    fn first_step_matches_hand_value() {
        // rho = 0.95, eps = 1e-6, g = 1:
        // delta = -sqrt(1e-6) / sqrt(0.05 + 1e-6) ~ -0.004472
        let mut opt = AdaDelta::new(AdaDeltaConfig { rho: 0.95, eps: 1e-6, weight_decay: 0.0 });
        let mut p = Tensor::from_vec(Shape::scalar(), vec![0.0]).unwrap();
        opt.step("p", &mut p, &[1.0]).unwrap();
        assert!((p.data()[0] - (-0.004472)).abs() < 1e-6, "got {}", p.data()[0]);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut opt = AdaDelta::new(AdaDeltaConfig { rho: 0.95, eps: 1e-6, weight_decay: 0.0 });
        let mut p = Tensor::from_vec(Shape::scalar(), vec![1.25]).unwrap();
        opt.step("p", &mut p, &[1.0]).unwrap();
        let before = p.data()[0];
        let gsq = opt.state("p").unwrap().acc_grad_sq[0];
        opt.step("p", &mut p, &[0.0]).unwrap();
        assert_eq!(p.data()[0], before);
        assert_eq!(opt.state("p").unwrap().acc_grad_sq[0], 0.95 * gsq);
    }

    #[test]
    fn weight_decay_shrinks_parameters() {
        let mut opt = AdaDelta::new(AdaDeltaConfig { rho: 0.95, eps: 1e-6, weight_decay: 5e-4 });
        let mut p = Tensor::from_vec(Shape::scalar(), vec![1.0]).unwrap();
        opt.step("p", &mut p, &[0.0]).unwrap();
        assert!(p.data()[0] < 1.0);
    }

    #[test]
    fn nan_gradient_names_the_parameter() {
        let mut opt = AdaDelta::new(AdaDeltaConfig::default());
        let mut p = Tensor::from_vec(Shape::scalar(), vec![1.0]).unwrap();
        let err = opt.step("enc.dil1.w", &mut p, &[f64::NAN]).unwrap_err();
        assert!(err.to_string().contains("enc.dil1.w"));
    }

    #[test]
    fn first_step_is_scale_free() {
        // Scaling the gradient by c > 0 leaves the first update's sign
        // unchanged and its magnitude unchanged up to the eps guard.
        let base = {
            let mut opt = AdaDelta::new(AdaDeltaConfig { rho: 0.95, eps: 1e-6, weight_decay: 0.0 });
            let mut p = Tensor::from_vec(Shape::scalar(), vec![0.0]).unwrap();
            opt.step("p", &mut p, &[0.7]).unwrap();
            p.data()[0]
        };
        for c in [10.0, 1000.0] {
            let mut opt = AdaDelta::new(AdaDeltaConfig { rho: 0.95, eps: 1e-6, weight_decay: 0.0 });
            let mut p = Tensor::from_vec(Shape::scalar(), vec![0.0]).unwrap();
            opt.step("p", &mut p, &[0.7 * c]).unwrap();
            let scaled = p.data()[0];
            assert_eq!(scaled.signum(), base.signum());
            assert!(
                (scaled - base).abs() / base.abs() <= 1e-4,
                "c={c}: {scaled} vs {base}"
            );
        }
    }

    #[test]
    fn converges_on_quadratic() {
        // loss = (x - a)^2, grad = 2 (x - a)
        let a = 3.0;
        for start in [0.0, 10.0, -5.0] {
            let mut opt = AdaDelta::new(AdaDeltaConfig { rho: 0.95, eps: 1e-6, weight_decay: 0.0 });
            let mut p = Tensor::from_vec(Shape::scalar(), vec![start]).unwrap();
            for _ in 0..10_000 {
                let g = 2.0 * (p.data()[0] - a);
                opt.step("x", &mut p, &[g]).unwrap();
            }
            let x = p.data()[0];
            assert!((x - a).abs() <= 1e-2, "start {start}: ended at {x}");
        }
    }

    #[test]
    fn accumulators_stay_finite_and_nonnegative() {
        let mut opt = AdaDelta::new(AdaDeltaConfig::default());
        let mut p = Tensor::from_vec(Shape::scalar(), vec![0.5]).unwrap();
        for i in 0..200 {
            let g = ((i as f64) * 1.37).sin() * 1e3;
            opt.step("p", &mut p, &[g]).unwrap();
            let st = opt.state("p").unwrap();
            assert!(st.acc_grad_sq[0] >= 0.0 && st.acc_grad_sq[0].is_finite());
            assert!(st.acc_update_sq[0] >= 0.0 && st.acc_update_sq[0].is_finite());
        }
    }
}
