//! Minimal training substrate: dense layers, exact GELU, AdamW with
//! decoupled weight decay, and a cosine learning-rate schedule. Everything
//! runs in f64 so gradient checks can use tight tolerances.

use rand::Rng;

use crate::error::{Error, Result};

/// Fully connected layer with row-major weights (`out x in`).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            w: vec![0.0; in_dim * out_dim],
            b: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    /// Weights uniform in `±1/sqrt(in_dim)`, biases zero.
    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Self {
            w,
            b: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.in_dim..(i + 1) * self.in_dim]
    }
}

/// `W.x + b`.
pub fn dense_forward(layer: &DenseLayer, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != layer.in_dim {
        return Err(Error::Config(format!(
            "dense layer expects input dim {}, got {}",
            layer.in_dim,
            x.len()
        )));
    }
    let mut out = Vec::with_capacity(layer.out_dim);
    for i in 0..layer.out_dim {
        let row = layer.row(i);
        let dot: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
        out.push(dot + layer.b[i]);
    }
    Ok(out)
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF via erf.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Exact GELU: `x * Phi(x)` with the erf-based normal CDF.
pub fn gelu(x: f64) -> f64 {
    x * std_normal_cdf(x)
}

/// `d(gelu)/dx = Phi(x) + x * phi(x)`.
pub fn gelu_prime(x: f64) -> f64 {
    std_normal_cdf(x) + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Cosine decay from `base_lr` at step 0 down to 0 at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub total_steps: usize,
}

impl LrSchedule {
    pub fn new(base_lr: f64, total_steps: usize) -> Result<Self> {
        if total_steps == 0 {
            return Err(Error::Usage("schedule needs total_steps > 0".into()));
        }
        Ok(Self {
            base_lr,
            total_steps,
        })
    }

    /// `base_lr * 0.5 * (1 + cos(pi * t / total_steps))` for `0 <= t <= total_steps`.
    pub fn at(&self, t: usize) -> Result<f64> {
        if t > self.total_steps {
            return Err(Error::Usage(format!(
                "schedule step {t} beyond total_steps {}",
                self.total_steps
            )));
        }
        let frac = t as f64 / self.total_steps as f64;
        Ok(self.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos()))
    }
}

/// AdamW hyperparameters and per-tensor moment accumulators.
///
/// The update is the decoupled form: moments touch only the gradient, and
/// weight decay is applied directly to the parameter scaled by the learning
/// rate.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimizerState {
    /// `tensor_sizes` fixes the number and shape of the parameter tensors;
    /// every later `step` call must pass slices in the same order.
    pub fn new(tensor_sizes: &[usize], weight_decay: f64) -> Self {
        Self {
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One AdamW step over parallel parameter/gradient tensor lists.
    ///
    /// `theta -= lr * m_hat / (sqrt(v_hat) + eps) + lr * weight_decay * theta`
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Config(format!(
                "optimizer tracks {} tensors, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((theta, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if theta.len() != m.len() || g.len() != m.len() {
                return Err(Error::Config(format!(
                    "optimizer tensor size mismatch: tracked {}, got {} params / {} grads",
                    m.len(),
                    theta.len(),
                    g.len()
                )));
            }
            for i in 0..m.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                theta[i] -= lr * m_hat / (v_hat.sqrt() + self.eps) + lr * self.weight_decay * theta[i];
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_forward_basics() {
        let layer = DenseLayer {
            w: vec![1.0, 0.0, 0.0, 1.0],
            b: vec![0.0, 0.0],
            in_dim: 2,
            out_dim: 2,
        };
        assert_eq!(dense_forward(&layer, &[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);

        let layer = DenseLayer {
            w: vec![0.0, 0.0, 0.0],
            b: vec![3.0],
            in_dim: 3,
            out_dim: 1,
        };
        assert_eq!(
            dense_forward(&layer, &[9.0, -4.0, 0.1]).unwrap(),
            vec![3.0]
        );

        let layer = DenseLayer {
            w: vec![1.0, 1.0],
            b: vec![-1.0],
            in_dim: 2,
            out_dim: 1,
        };
        assert_eq!(dense_forward(&layer, &[2.0, 3.0]).unwrap(), vec![4.0]);

        assert!(dense_forward(&layer, &[1.0]).is_err());
    }

    #[test]
    fn gelu_reference_values() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(10.0) - 10.0).abs() < 1e-9);
        // 1 * Phi(1), Phi(1) = 0.8413447460685429
        assert!((gelu(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
    }

    #[test]
    fn gelu_odd_part_identity() {
        // Phi(x) + Phi(-x) = 1, so gelu(x) - gelu(-x) = x.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let x: f64 = rng.gen_range(-8.0..8.0);
            assert!((gelu(x) - gelu(-x) - x).abs() < 1e-12);
        }
    }

    #[test]
    fn gelu_prime_matches_finite_difference() {
        let h = 1e-6;
        for &x in &[-3.0, -1.0, -0.1, 0.0, 0.5, 2.0, 4.0] {
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!(
                (gelu_prime(x) - fd).abs() < 1e-8,
                "gelu' mismatch at {x}: {} vs {fd}",
                gelu_prime(x)
            );
        }
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let s = LrSchedule::new(0.02, 100).unwrap();
        assert_eq!(s.at(0).unwrap(), 0.02);
        assert!(s.at(100).unwrap().abs() < 1e-17);
        assert!((s.at(50).unwrap() - 0.01).abs() < 1e-15);
        assert!(s.at(101).is_err());
        assert!(LrSchedule::new(0.02, 0).is_err());
    }

    #[test]
    fn adamw_first_step_moves_by_lr() {
        let mut opt = OptimizerState::new(&[1], 0.0);
        let mut theta = vec![0.0f64];
        let grads = vec![1.0f64];
        opt.step(&mut [&mut theta], &[&grads], 0.01).unwrap();
        // m_hat = 1, v_hat = 1 at step 1
        assert!((theta[0] + 0.01).abs() < 1e-9);
    }

    #[test]
    fn adamw_zero_gradient_keeps_params() {
        let mut opt = OptimizerState::new(&[3], 0.0);
        let mut theta = vec![1.5f64, -2.0, 0.25];
        let before = theta.clone();
        let grads = vec![0.0f64; 3];
        opt.step(&mut [&mut theta], &[&grads], 0.1).unwrap();
        assert_eq!(theta, before);
    }

    #[test]
    fn adamw_pure_decay() {
        let wd = 0.1;
        let lr = 0.5;
        let mut opt = OptimizerState::new(&[2], wd);
        let mut theta = vec![2.0f64, -4.0];
        let grads = vec![0.0f64; 2];
        opt.step(&mut [&mut theta], &[&grads], lr).unwrap();
        assert!((theta[0] - 2.0 * (1.0 - lr * wd)).abs() < 1e-12);
        assert!((theta[1] + 4.0 * (1.0 - lr * wd)).abs() < 1e-12);
    }

    #[test]
    fn adamw_lr_zero_is_bitwise_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut opt = OptimizerState::new(&[16], 0.00123974);
        let mut theta: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let before = theta.clone();
        let grads: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        opt.step(&mut [&mut theta], &[&grads], 0.0).unwrap();
        for (a, b) in theta.iter().zip(&before) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn adamw_rejects_shape_mismatch() {
        let mut opt = OptimizerState::new(&[2], 0.0);
        let mut theta = vec![0.0f64; 3];
        let grads = vec![0.0f64; 3];
        assert!(opt.step(&mut [&mut theta], &[&grads], 0.1).is_err());
    }
}
