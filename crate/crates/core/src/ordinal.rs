//! Rank-consistent ordinal regression primitives.
//!
//! A K-class ordinal problem is decomposed into K−1 binary subtasks: label
//! `y` becomes the indicator vector `bit_k = 1 iff k < y`. A coral head
//! scores all K−1 subtasks with one shared weight vector and per-unit
//! biases, so the units can only disagree through their biases and the
//! sigmoid outputs stay mutually ordered. Decoding counts units above the
//! 0.5 threshold (labels) or sums the sigmoids (continuous scores).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A class index together with the size of its ordinal scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrdinalLabel {
    value: usize,
    num_classes: usize,
}

impl OrdinalLabel {
    /// Requires `num_classes >= 2` and `value <= num_classes - 1`.
    pub fn new(value: usize, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Config(format!(
                "ordinal scale needs at least 2 classes, got {num_classes}"
            )));
        }
        if value >= num_classes {
            return Err(Error::Config(format!(
                "label {value} out of range for {num_classes}-class scale"
            )));
        }
        Ok(Self { value, num_classes })
    }

    pub fn value(&self) -> usize {
        self.value
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

/// The binary decomposition of an [`OrdinalLabel`]: K−1 bits where all 1s
/// precede all 0s and the popcount equals the original label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryLabelVector {
    bits: Vec<u8>,
}

impl BinaryLabelVector {
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of set bits, i.e. the ordinal label this vector encodes.
    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    /// True iff the bits are non-increasing (a prefix of 1s, then 0s).
    pub fn is_prefix_form(&self) -> bool {
        self.bits.windows(2).all(|w| w[0] >= w[1])
    }

    pub fn bit_f64(&self, k: usize) -> f64 {
        f64::from(self.bits[k])
    }
}

/// Encodes `y` on a K-class scale as K−1 bits with `bit_k = 1 iff k < y`.
pub fn encode_ordinal(label: OrdinalLabel) -> BinaryLabelVector {
    let bits = (0..label.num_classes() - 1)
        .map(|k| u8::from(k < label.value()))
        .collect();
    BinaryLabelVector { bits }
}

/// An ordinal output layer: one weight vector shared by all units plus one
/// bias per unit. `logit_k(x) = weights . x + biases[k]`, so for a fixed
/// input the logits across units differ exactly by the bias differences.
#[derive(Debug, Clone, PartialEq)]
pub struct CoralHead {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl CoralHead {
    pub fn new(weights: Vec<f64>, biases: Vec<f64>) -> Self {
        Self { weights, biases }
    }

    /// Number of binary units (K−1 for a K-class head).
    pub fn num_units(&self) -> usize {
        self.biases.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.len()
    }
}

/// Forward pass of a coral head: `logit_k = weights . x + biases[k]`.
pub fn coral_forward(head: &CoralHead, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != head.weights.len() {
        return Err(Error::Config(format!(
            "coral head expects input of dim {}, got {}",
            head.weights.len(),
            x.len()
        )));
    }
    let dot: f64 = head.weights.iter().zip(x).map(|(w, v)| w * v).sum();
    Ok(head.biases.iter().map(|b| dot + b).collect())
}

/// Numerically stable sigmoid.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn ensure_finite(logits: &[f64]) -> Result<()> {
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite logits in decoder: {logits:?}"
        )));
    }
    Ok(())
}

/// Decodes K−1 logits to a label in `0..=K-1` by counting units whose
/// sigmoid exceeds 0.5. Exactly 0.5 (logit 0) counts as below threshold.
pub fn decode_label(logits: &[f64]) -> Result<usize> {
    ensure_finite(logits)?;
    Ok(logits.iter().filter(|&&l| sigmoid(l) > 0.5).count())
}

/// Decodes K−1 logits to a continuous score in `(1, K)` as the sum of the
/// unit sigmoids plus one.
pub fn decode_cumulative_score(logits: &[f64]) -> Result<f64> {
    ensure_finite(logits)?;
    Ok(logits.iter().map(|&l| sigmoid(l)).sum::<f64>() + 1.0)
}

/// Classification-head decoder: exactly 2 units, labels in `{0, 1, 2}`.
pub fn decode_class(logits: &[f64]) -> Result<usize> {
    if logits.len() != 2 {
        return Err(Error::Config(format!(
            "classification head has 2 units, got {} logits",
            logits.len()
        )));
    }
    decode_label(logits)
}

/// Regression-head decoder: exactly 4 units, scores in `(1, 5)`.
pub fn decode_score(logits: &[f64]) -> Result<f64> {
    if logits.len() != 4 {
        return Err(Error::Config(format!(
            "regression head has 4 units, got {} logits",
            logits.len()
        )));
    }
    decode_cumulative_score(logits)
}

/// Sum over units of binary cross-entropy between `sigmoid(logit_k)` and
/// `target_k`, computed in the logit domain:
/// `max(l, 0) - l*t + ln(1 + exp(-|l|))`. Finite for all finite logits.
pub fn ordinal_bce_loss(logits: &[f64], target: &BinaryLabelVector) -> Result<f64> {
    if logits.len() != target.len() {
        return Err(Error::Config(format!(
            "loss got {} logits for {} target bits",
            logits.len(),
            target.len()
        )));
    }
    let mut total = 0.0;
    for (k, &l) in logits.iter().enumerate() {
        let t = target.bit_f64(k);
        total += l.max(0.0) - l * t + (-l.abs()).exp().ln_1p();
    }
    Ok(total)
}

/// Per-unit loss gradient: `d(bce)/d(logit_k) = sigmoid(logit_k) - target_k`.
pub fn bce_logit_grad(logit: f64, target_bit: f64) -> f64 {
    sigmoid(logit) - target_bit
}

/// Mixing weights for the two heads' losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_c: f64,
    pub lambda_r: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_c: 0.5,
            lambda_r: 0.5,
        }
    }
}

impl LossWeights {
    pub fn new(lambda_c: f64, lambda_r: f64) -> Result<Self> {
        if !(lambda_c >= 0.0 && lambda_r >= 0.0) {
            return Err(Error::Config(format!(
                "loss weights must be >= 0, got lambda_c={lambda_c} lambda_r={lambda_r}"
            )));
        }
        Ok(Self { lambda_c, lambda_r })
    }
}

/// Batch loss: mean over samples of `lambda_c * l_c + lambda_r * l_r`.
pub fn combined_batch_loss(per_sample: &[(f64, f64)], w: &LossWeights) -> Result<f64> {
    if per_sample.is_empty() {
        return Err(Error::Usage("combined loss over an empty batch".into()));
    }
    let sum: f64 = per_sample
        .iter()
        .map(|&(l_c, l_r)| w.lambda_c * l_c + w.lambda_r * l_r)
        .sum();
    Ok(sum / per_sample.len() as f64)
}

/// How continuous scores in `[1, 5]` are discretized to labels `0..=4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinningMode {
    Round,
    Floor,
}

impl BinningMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            BinningMode::Round => "round",
            BinningMode::Floor => "floor",
        }
    }
}

impl std::str::FromStr for BinningMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "round" => Ok(BinningMode::Round),
            "floor" => Ok(BinningMode::Floor),
            other => Err(Error::Config(format!(
                "unknown binning mode `{other}` (expected `round` or `floor`)"
            ))),
        }
    }
}

impl std::fmt::Display for BinningMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Maps a score in `[1, 5]` to a 5-class ordinal label.
///
/// Round mode uses round-half-up (2.5 rounds to 3, then shifts to label 2);
/// floor mode truncates. Either way the result is clamped into `0..=4` to
/// guard boundary inputs like 5.0.
pub fn normalize_score(score: f64, mode: BinningMode) -> Result<OrdinalLabel> {
    if !(1.0..=5.0).contains(&score) {
        return Err(Error::data(format!(
            "plausibility score {score} outside [1, 5]"
        )));
    }
    let binned = match mode {
        BinningMode::Round => (score + 0.5).floor() - 1.0,
        BinningMode::Floor => score.floor() - 1.0,
    };
    let label = binned.clamp(0.0, 4.0) as usize;
    OrdinalLabel::new(label, 5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ideal_logits(bits: &BinaryLabelVector, magnitude: f64) -> Vec<f64> {
        bits.bits()
            .iter()
            .map(|&b| if b == 1 { magnitude } else { -magnitude })
            .collect()
    }

    #[test]
    fn encode_matches_prefix_rule() {
        let cases = [
            (2usize, 3usize, vec![1u8, 1]),
            (0, 5, vec![0, 0, 0, 0]),
            (3, 5, vec![1, 1, 1, 0]),
        ];
        for (y, k, expected) in cases {
            let v = encode_ordinal(OrdinalLabel::new(y, k).unwrap());
            assert_eq!(v.bits(), expected.as_slice());
            assert!(v.is_prefix_form());
            assert_eq!(v.popcount(), y);
        }
    }

    #[test]
    fn label_rejects_out_of_range() {
        assert!(OrdinalLabel::new(3, 3).is_err());
        assert!(OrdinalLabel::new(0, 1).is_err());
        assert!(OrdinalLabel::new(4, 5).is_ok());
    }

    #[test]
    fn coral_forward_shares_weights() {
        let head = CoralHead::new(vec![0.0, 0.0], vec![0.3, -0.2]);
        let out = coral_forward(&head, &[5.0, -7.0]).unwrap();
        assert_eq!(out, vec![0.3, -0.2]);

        let head = CoralHead::new(vec![1.0], vec![0.0, 0.0]);
        assert_eq!(coral_forward(&head, &[2.0]).unwrap(), vec![2.0, 2.0]);

        let head = CoralHead::new(vec![1.0, 1.0], vec![1.0, -1.0]);
        assert_eq!(
            coral_forward(&head, &[0.5, 0.5]).unwrap(),
            vec![2.0, 0.0]
        );
    }

    #[test]
    fn coral_forward_rejects_dim_mismatch() {
        let head = CoralHead::new(vec![1.0, 2.0], vec![0.0]);
        assert!(matches!(
            coral_forward(&head, &[1.0]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn decode_class_counts_above_half() {
        // sigmoid([2.1972, 0.8473]) ~ [0.9, 0.7]
        assert_eq!(decode_class(&[2.1972, 0.8473]).unwrap(), 2);
        // sigmoid(0) = 0.5 exactly: the <= 0.5 branch contributes nothing
        assert_eq!(decode_class(&[0.0, 0.0]).unwrap(), 0);
        assert_eq!(decode_class(&[3.0, -3.0]).unwrap(), 1);
    }

    #[test]
    fn decode_class_rejects_bad_input() {
        assert!(matches!(
            decode_class(&[f64::NAN, 0.0]),
            Err(Error::Numeric(_))
        ));
        assert!(matches!(decode_class(&[1.0]), Err(Error::Config(_))));
    }

    #[test]
    fn decode_score_sums_sigmoids() {
        assert_eq!(decode_score(&[0.0; 4]).unwrap(), 3.0);
        let s = decode_score(&[-40.0; 4]).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        let l = 3.0f64.ln();
        let s = decode_score(&[l, l, l, l]).unwrap();
        assert!((s - 4.0).abs() < 1e-12);
        assert!(matches!(
            decode_score(&[f64::INFINITY, 0.0, 0.0, 0.0]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn stable_bce_matches_hand_values() {
        let t10 = BinaryLabelVector { bits: vec![1, 0] };
        let loss = ordinal_bce_loss(&[0.0, 0.0], &t10).unwrap();
        assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);

        let loss = ordinal_bce_loss(&[40.0, -40.0], &t10).unwrap();
        assert!(loss < 1e-12);

        let t1 = BinaryLabelVector { bits: vec![1] };
        let loss = ordinal_bce_loss(&[-40.0], &t1).unwrap();
        assert!((loss - 40.0).abs() < 1e-9);

        assert!(matches!(
            ordinal_bce_loss(&[0.0], &t10),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn stable_bce_is_finite_at_extremes() {
        let t = BinaryLabelVector { bits: vec![0, 1] };
        for &l in &[-1e6, -750.0, 0.0, 750.0, 1e6] {
            let loss = ordinal_bce_loss(&[l, l], &t).unwrap();
            assert!(loss.is_finite(), "loss not finite at logit {l}");
        }
    }

    #[test]
    fn combined_loss_weighted_mean() {
        let w = LossWeights::default();
        assert_eq!(combined_batch_loss(&[(2.0, 4.0)], &w).unwrap(), 3.0);
        assert_eq!(
            combined_batch_loss(&[(1.0, 1.0), (3.0, 3.0)], &w).unwrap(),
            2.0
        );
        let w10 = LossWeights::new(1.0, 0.0).unwrap();
        assert_eq!(combined_batch_loss(&[(2.0, 0.0)], &w10).unwrap(), 2.0);
        assert!(matches!(
            combined_batch_loss(&[], &w),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn normalize_score_paper_mapping() {
        let scores = [1.333, 1.75, 2.5, 3.75, 4.25];
        let rounded: Vec<usize> = scores
            .iter()
            .map(|&s| normalize_score(s, BinningMode::Round).unwrap().value())
            .collect();
        assert_eq!(rounded, vec![0, 1, 2, 3, 3]);
        let floored: Vec<usize> = scores
            .iter()
            .map(|&s| normalize_score(s, BinningMode::Floor).unwrap().value())
            .collect();
        assert_eq!(floored, vec![0, 0, 1, 2, 3]);
    }

    #[test]
    fn normalize_score_boundaries() {
        assert_eq!(
            normalize_score(5.0, BinningMode::Floor).unwrap().value(),
            4
        );
        assert_eq!(
            normalize_score(5.0, BinningMode::Round).unwrap().value(),
            4
        );
        assert_eq!(
            normalize_score(1.0, BinningMode::Round).unwrap().value(),
            0
        );
        assert!(normalize_score(5.7, BinningMode::Round).is_err());
        assert!(normalize_score(0.99, BinningMode::Floor).is_err());
    }

    #[test]
    fn round_trip_ideal_logits() {
        for k in 2..=8usize {
            for y in 0..k {
                let bits = encode_ordinal(OrdinalLabel::new(y, k).unwrap());
                let logits = ideal_logits(&bits, 40.0);
                assert_eq!(decode_label(&logits).unwrap(), y);
                let score = decode_cumulative_score(&logits).unwrap();
                assert!((score - (y as f64 + 1.0)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sorted_biases_give_monotone_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let dim = rng.gen_range(1..8);
            let units = rng.gen_range(1..7);
            let weights: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut biases: Vec<f64> = (0..units).map(|_| rng.gen_range(-3.0..3.0)).collect();
            biases.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let head = CoralHead::new(weights, biases);
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let logits = coral_forward(&head, &x).unwrap();
            let probs: Vec<f64> = logits.iter().map(|&l| sigmoid(l)).collect();
            assert!(probs.windows(2).all(|w| w[0] >= w[1]));
            let decoded = decode_label(&logits).unwrap();
            let prefix_len = probs.iter().take_while(|&&p| p > 0.5).count();
            assert_eq!(decoded, prefix_len);
        }
    }

    #[test]
    fn decode_score_strictly_monotone_per_component() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let mut logits: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let base = decode_score(&logits).unwrap();
            for k in 0..4 {
                let saved = logits[k];
                logits[k] = saved + 0.25;
                assert!(decode_score(&logits).unwrap() > base);
                logits[k] = saved - 0.25;
                assert!(decode_score(&logits).unwrap() < base);
                logits[k] = saved;
            }
        }
    }
}
