//! The dual-head network: a trainable projection with GELU feeding a
//! 2-unit classification coral head and a 4-unit regression coral head.
//! Backpropagation is hand-derived; the key identity per head unit is
//! `dL/dlogit_k = (lambda / n) * (sigmoid(logit_k) - target_k)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{dense_forward, gelu, gelu_prime, DenseLayer};
use crate::ordinal::{
    bce_logit_grad, coral_forward, decode_class, decode_score, ordinal_bce_loss,
    BinaryLabelVector, CoralHead, LossWeights,
};

pub const CLASS_UNITS: usize = 2;
pub const REG_UNITS: usize = 4;

/// Declared parameter tensor order, shared by the optimizer, the gradient
/// checker and the checkpoint format.
pub const PARAM_GROUPS: [&str; 6] = [
    "proj_w", "proj_b", "class_w", "class_b", "reg_w", "reg_b",
];

/// Both heads' binary targets for one training sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleTarget {
    pub class_bits: BinaryLabelVector,
    pub reg_bits: BinaryLabelVector,
}

/// Full trainable state.
#[derive(Debug, Clone, PartialEq)]
pub struct DualHeadModel {
    pub projection: DenseLayer,
    pub class_head: CoralHead,
    pub reg_head: CoralHead,
}

/// Head biases start on a strictly decreasing ramp from +0.1 to -0.1 so the
/// untrained head is already rank-consistent. A single unit sits at 0.
pub fn bias_ramp(units: usize) -> Vec<f64> {
    if units == 1 {
        return vec![0.0];
    }
    (0..units)
        .map(|k| 0.1 - 0.2 * k as f64 / (units - 1) as f64)
        .collect()
}

impl DualHeadModel {
    /// Seeded init: projection weights uniform `±1/sqrt(input_dim)`, head
    /// weights uniform `±1/sqrt(hidden_dim)`, projection biases zero, head
    /// biases on the ramp. Draw order is fixed (projection, class head,
    /// regression head) so a seed fully determines the parameters.
    pub fn init(input_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection = DenseLayer::init(input_dim, hidden_dim, &mut rng);
        let head_bound = 1.0 / (hidden_dim as f64).sqrt();
        let mut head_weights = |n: usize| -> Vec<f64> {
            use rand::Rng;
            (0..n).map(|_| rng.gen_range(-head_bound..head_bound)).collect()
        };
        let class_head = CoralHead::new(head_weights(hidden_dim), bias_ramp(CLASS_UNITS));
        let reg_head = CoralHead::new(head_weights(hidden_dim), bias_ramp(REG_UNITS));
        Self {
            projection,
            class_head,
            reg_head,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.projection.in_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.projection.out_dim
    }

    pub fn forward(&self, x: &[f64]) -> Result<SampleForward> {
        let z = dense_forward(&self.projection, x)?;
        let a: Vec<f64> = z.iter().map(|&v| gelu(v)).collect();
        let class_logits = coral_forward(&self.class_head, &a)?;
        let reg_logits = coral_forward(&self.reg_head, &a)?;
        Ok(SampleForward {
            z,
            a,
            class_logits,
            reg_logits,
        })
    }

    /// Decoded label and continuous score for one pooled input.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, f64)> {
        let f = self.forward(x)?;
        Ok((decode_class(&f.class_logits)?, decode_score(&f.reg_logits)?))
    }

    /// Per-sample `(l_c, l_r)` loss pair.
    pub fn sample_losses(&self, x: &[f64], target: &SampleTarget) -> Result<(f64, f64)> {
        let f = self.forward(x)?;
        let l_c = ordinal_bce_loss(&f.class_logits, &target.class_bits)?;
        let l_r = ordinal_bce_loss(&f.reg_logits, &target.reg_bits)?;
        Ok((l_c, l_r))
    }

    /// Combined loss over a batch: mean of `lambda_c*l_c + lambda_r*l_r`.
    pub fn batch_loss(
        &self,
        xs: &[&[f64]],
        targets: &[&SampleTarget],
        weights: &LossWeights,
    ) -> Result<f64> {
        if xs.len() != targets.len() {
            return Err(Error::Usage(format!(
                "{} inputs for {} targets",
                xs.len(),
                targets.len()
            )));
        }
        let mut pairs = Vec::with_capacity(xs.len());
        for (x, t) in xs.iter().zip(targets) {
            pairs.push(self.sample_losses(x, t)?);
        }
        crate::ordinal::combined_batch_loss(&pairs, weights)
    }

    /// Exact gradients of the combined batch loss w.r.t. every parameter.
    /// Samples are accumulated in order, so the result is deterministic.
    /// Also returns the batch loss, which shares the same forward passes.
    pub fn backward(
        &self,
        xs: &[&[f64]],
        targets: &[&SampleTarget],
        weights: &LossWeights,
    ) -> Result<(f64, Gradients)> {
        if xs.is_empty() {
            return Err(Error::Usage("backward over an empty batch".into()));
        }
        if xs.len() != targets.len() {
            return Err(Error::Usage(format!(
                "{} inputs for {} targets",
                xs.len(),
                targets.len()
            )));
        }
        let n = xs.len() as f64;
        let h = self.hidden_dim();
        let in_dim = self.input_dim();
        let mut g = Gradients::zeros(in_dim, h);
        let mut loss_sum = 0.0;

        for (x, target) in xs.iter().zip(targets) {
            let f = self.forward(x)?;
            loss_sum += weights.lambda_c * ordinal_bce_loss(&f.class_logits, &target.class_bits)?
                + weights.lambda_r * ordinal_bce_loss(&f.reg_logits, &target.reg_bits)?;

            // dL/dlogit per unit, already scaled by lambda/n
            let class_scale = weights.lambda_c / n;
            let reg_scale = weights.lambda_r / n;
            let d_class: Vec<f64> = f
                .class_logits
                .iter()
                .enumerate()
                .map(|(k, &l)| class_scale * bce_logit_grad(l, target.class_bits.bit_f64(k)))
                .collect();
            let d_reg: Vec<f64> = f
                .reg_logits
                .iter()
                .enumerate()
                .map(|(k, &l)| reg_scale * bce_logit_grad(l, target.reg_bits.bit_f64(k)))
                .collect();

            // Shared head weights: every unit contributes the same `a`.
            let d_class_sum: f64 = d_class.iter().sum();
            let d_reg_sum: f64 = d_reg.iter().sum();
            for i in 0..h {
                g.class_w[i] += d_class_sum * f.a[i];
                g.reg_w[i] += d_reg_sum * f.a[i];
            }
            for (gb, d) in g.class_b.iter_mut().zip(&d_class) {
                *gb += d;
            }
            for (gb, d) in g.reg_b.iter_mut().zip(&d_reg) {
                *gb += d;
            }

            // Back through the heads into the hidden activation, then GELU.
            for i in 0..h {
                let da = d_class_sum * self.class_head.weights[i]
                    + d_reg_sum * self.reg_head.weights[i];
                let dz = da * gelu_prime(f.z[i]);
                g.proj_b[i] += dz;
                let row = &mut g.proj_w[i * in_dim..(i + 1) * in_dim];
                for (gw, &xv) in row.iter_mut().zip(x.iter()) {
                    *gw += dz * xv;
                }
            }
        }

        Ok((loss_sum / n, g))
    }

    /// Parameter tensors in declared order.
    pub fn param_tensors(&self) -> [&[f64]; 6] {
        [
            &self.projection.w,
            &self.projection.b,
            &self.class_head.weights,
            &self.class_head.biases,
            &self.reg_head.weights,
            &self.reg_head.biases,
        ]
    }

    pub fn param_tensors_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.projection.w,
            &mut self.projection.b,
            &mut self.class_head.weights,
            &mut self.class_head.biases,
            &mut self.reg_head.weights,
            &mut self.reg_head.biases,
        ]
    }

    pub fn tensor_sizes(&self) -> Vec<usize> {
        self.param_tensors().iter().map(|t| t.len()).collect()
    }
}

/// Intermediate values of one forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct SampleForward {
    pub z: Vec<f64>,
    pub a: Vec<f64>,
    pub class_logits: Vec<f64>,
    pub reg_logits: Vec<f64>,
}

/// Gradient tensors mirroring the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub proj_w: Vec<f64>,
    pub proj_b: Vec<f64>,
    pub class_w: Vec<f64>,
    pub class_b: Vec<f64>,
    pub reg_w: Vec<f64>,
    pub reg_b: Vec<f64>,
}

impl Gradients {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            proj_w: vec![0.0; input_dim * hidden_dim],
            proj_b: vec![0.0; hidden_dim],
            class_w: vec![0.0; hidden_dim],
            class_b: vec![0.0; CLASS_UNITS],
            reg_w: vec![0.0; hidden_dim],
            reg_b: vec![0.0; REG_UNITS],
        }
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            &self.proj_w,
            &self.proj_b,
            &self.class_w,
            &self.class_b,
            &self.reg_w,
            &self.reg_b,
        ]
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

/// Per-tensor outcome of a gradient check.
#[derive(Debug, Clone)]
pub struct GroupCheck {
    pub name: &'static str,
    pub params: usize,
    pub max_rel_error: f64,
    /// True when both analytic and numeric gradients vanish for the whole
    /// tensor (e.g. a head whose loss weight is zero).
    pub zero_gradient: bool,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub groups: Vec<GroupCheck>,
    pub max_rel_error: f64,
    pub h: f64,
    pub tol: f64,
    pub pass: bool,
}

impl GradCheckReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for g in &self.groups {
            if g.zero_gradient {
                out.push_str(&format!(
                    "{:<8} params={:<6} zero gradient\n",
                    g.name, g.params
                ));
            } else {
                out.push_str(&format!(
                    "{:<8} params={:<6} max rel error={:.3e}\n",
                    g.name, g.params, g.max_rel_error
                ));
            }
        }
        out.push_str(&format!(
            "overall max rel error={:.3e} tol={:.1e} h={:.1e} => {}\n",
            self.max_rel_error,
            self.tol,
            self.h,
            if self.pass { "PASS" } else { "FAIL" }
        ));
        out
    }
}

// Treat a pair of gradients both below this magnitude as identically zero;
// central differences on f64 leave noise around 1e-11, well below it.
const ZERO_GRAD_EPS: f64 = 1e-8;

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs() + numeric.abs();
    if denom < ZERO_GRAD_EPS {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Compares analytic gradients against central finite differences of the
/// batch loss, parameter by parameter. Passes iff the max relative error
/// stays strictly below `tol`.
pub fn grad_check(
    model: &DualHeadModel,
    xs: &[&[f64]],
    targets: &[&SampleTarget],
    weights: &LossWeights,
    h: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    if h <= 0.0 {
        return Err(Error::Usage(format!("finite-difference step must be > 0, got {h}")));
    }
    let (_, analytic) = model.backward(xs, targets, weights)?;
    let mut scratch = model.clone();
    let mut groups = Vec::with_capacity(PARAM_GROUPS.len());
    let mut overall: f64 = 0.0;

    for (gi, name) in PARAM_GROUPS.iter().enumerate() {
        let len = model.param_tensors()[gi].len();
        let mut max_rel: f64 = 0.0;
        let mut all_zero = true;
        for p in 0..len {
            let orig = model.param_tensors()[gi][p];
            scratch.param_tensors_mut()[gi][p] = orig + h;
            let loss_plus = scratch.batch_loss(xs, targets, weights)?;
            scratch.param_tensors_mut()[gi][p] = orig - h;
            let loss_minus = scratch.batch_loss(xs, targets, weights)?;
            scratch.param_tensors_mut()[gi][p] = orig;

            let numeric = (loss_plus - loss_minus) / (2.0 * h);
            let a = analytic.tensors()[gi][p];
            if a.abs() >= ZERO_GRAD_EPS || numeric.abs() >= ZERO_GRAD_EPS {
                all_zero = false;
            }
            max_rel = max_rel.max(rel_error(a, numeric));
        }
        overall = overall.max(max_rel);
        groups.push(GroupCheck {
            name,
            params: len,
            max_rel_error: max_rel,
            zero_gradient: all_zero,
        });
    }

    Ok(GradCheckReport {
        groups,
        max_rel_error: overall,
        h,
        tol,
        pass: overall < tol,
    })
}
