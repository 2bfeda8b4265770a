//! Turns a (context, filler) pair into the pooled numeric representation.
//!
//! The textual side mirrors the dataset's feature block: four labelled
//! lines, with the filler substituted into the sentence's blank and the
//! `Text` line assembled from previous context, sentence and follow-up.
//! The numeric side is a deterministic signed-hashing featurizer over word
//! and character n-grams — a desk-scale stand-in for a frozen contextual
//! encoder. The pooled layout is two halves, whole-context first and
//! filler-only second, so swapping in externally produced embeddings keeps
//! every downstream shape.

use std::hash::Hasher;

use serde::{Deserialize, Serialize};

use crate::dataset::{ClozeInstance, FILLER_PLACEHOLDER};
use crate::error::{Error, Result};

/// The four-line textual form of one instance with a concrete filler.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormattedInput {
    pub text: String,
}

/// Builds the labelled feature block with `filler` substituted at the blank.
///
/// The `Text` feature is previous context, the substituted sentence and the
/// follow-up context joined by single spaces; empty context parts drop out
/// without leaving extra spaces.
pub fn format_instance(instance: &ClozeInstance, filler: &str) -> Result<FormattedInput> {
    let count = instance.placeholder_count();
    if count != 1 {
        return Err(Error::data(format!(
            "instance `{}`: expected exactly one {FILLER_PLACEHOLDER} in sentence, found {count}",
            instance.id
        )));
    }
    let sentence = instance.sentence.replace(FILLER_PLACEHOLDER, filler);
    let text_feature = [
        instance.previous_context.as_str(),
        sentence.as_str(),
        instance.follow_up_context.as_str(),
    ]
    .iter()
    .filter(|part| !part.is_empty())
    .copied()
    .collect::<Vec<_>>()
    .join(" ");

    let text = format!(
        "Resolved pattern: {}\nSection header: {}\nArticle title: {}\nText: {}",
        instance.resolved_pattern, instance.section_header, instance.article_title, text_feature,
    );
    Ok(FormattedInput { text })
}

/// Configuration of the hashing featurizer. `dim` must be a power of two.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    pub dim: usize,
    pub word_orders: Vec<usize>,
    pub char_orders: Vec<usize>,
    pub hash_seed: u64,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        Self {
            dim: 512,
            word_orders: vec![1, 2],
            char_orders: vec![3, 4, 5],
            hash_seed: 0,
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 || !self.dim.is_power_of_two() {
            return Err(Error::Config(format!(
                "featurizer dim must be a power of two >= 2, got {}",
                self.dim
            )));
        }
        if self.word_orders.iter().chain(&self.char_orders).any(|&n| n == 0) {
            return Err(Error::Config("n-gram orders must be >= 1".into()));
        }
        Ok(())
    }
}

/// Which halves make up the pooled representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMode {
    /// Whole-context vector followed by the filler vector (`2 * dim`).
    Concat,
    /// Filler vector only (`dim`), for encoders without a context token.
    FillerOnly,
}

impl PoolingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PoolingMode::Concat => "concat",
            PoolingMode::FillerOnly => "filler_only",
        }
    }
}

impl std::str::FromStr for PoolingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(PoolingMode::Concat),
            "filler_only" => Ok(PoolingMode::FillerOnly),
            other => Err(Error::Config(format!(
                "unknown pooling mode `{other}` (expected `concat` or `filler_only`)"
            ))),
        }
    }
}

impl std::fmt::Display for PoolingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Featurizer plus pooling choice: everything needed to turn an instance
/// into model input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub featurizer: FeaturizerConfig,
    pub pooling: PoolingMode,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            featurizer: FeaturizerConfig::default(),
            pooling: PoolingMode::Concat,
        }
    }
}

impl EncoderConfig {
    /// Width of the pooled vector fed to the projection layer.
    pub fn input_dim(&self) -> usize {
        match self.pooling {
            PoolingMode::Concat => 2 * self.featurizer.dim,
            PoolingMode::FillerOnly => self.featurizer.dim,
        }
    }
}

/// Pooled model input. With concat pooling the first half is the whole
/// formatted context and the second half the filler string; each half is
/// L2-normalized (a zero vector stands in for empty text).
#[derive(Debug, Clone, PartialEq)]
pub struct PooledRepresentation {
    pub vector: Vec<f64>,
}

// Namespace tags keep word and char n-grams of different orders from
// colliding on identical byte content.
const KIND_WORD: u8 = 0;
const KIND_CHAR: u8 = 1;
const TOKEN_SEP: u8 = 0x1f;

fn seeded_hasher(seed: u64) -> fnv::FnvHasher {
    let mut h = fnv::FnvHasher::default();
    h.write(&seed.to_le_bytes());
    h
}

fn bucket_and_sign(cfg: &FeaturizerConfig, kind: u8, order: usize, parts: &[&[u8]]) -> (usize, f64) {
    let mut h = seeded_hasher(cfg.hash_seed);
    h.write(&[kind, order as u8]);
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            h.write(&[TOKEN_SEP]);
        }
        h.write(part);
    }
    let hash = h.finish();
    let bucket = ((hash >> 1) as usize) & (cfg.dim - 1);
    let sign = if hash & 1 == 0 { 1.0 } else { -1.0 };
    (bucket, sign)
}

/// Lowercased alphanumeric runs; whitespace and punctuation are boundaries.
fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Signed feature hashing of word and char n-grams into `dim` buckets,
/// then L2 normalization. Empty text maps to the zero vector; equal text
/// maps to bitwise identical vectors.
pub fn featurize(text: &str, cfg: &FeaturizerConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut v = vec![0.0; cfg.dim];
    if text.is_empty() {
        return Ok(v);
    }

    let tokens = tokenize(text);
    for &order in &cfg.word_orders {
        if tokens.len() < order {
            continue;
        }
        for window in tokens.windows(order) {
            let parts: Vec<&[u8]> = window.iter().map(|t| t.as_bytes()).collect();
            let (bucket, sign) = bucket_and_sign(cfg, KIND_WORD, order, &parts);
            v[bucket] += sign;
        }
    }

    let lowered = text.to_lowercase();
    let chars: Vec<char> = lowered.chars().collect();
    let mut buf = String::new();
    for &order in &cfg.char_orders {
        if chars.len() < order {
            continue;
        }
        for window in chars.windows(order) {
            buf.clear();
            buf.extend(window.iter());
            let (bucket, sign) = bucket_and_sign(cfg, KIND_CHAR, order, &[buf.as_bytes()]);
            v[bucket] += sign;
        }
    }

    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    Ok(v)
}

/// Pools one instance with a concrete filler: the featurized formatted text
/// (context half) concatenated with the featurized filler string, or the
/// filler half alone under [`PoolingMode::FillerOnly`].
pub fn pool(instance: &ClozeInstance, filler: &str, cfg: &EncoderConfig) -> Result<PooledRepresentation> {
    let filler_vec = featurize(filler, &cfg.featurizer)?;
    let vector = match cfg.pooling {
        PoolingMode::Concat => {
            let formatted = format_instance(instance, filler)?;
            let mut context_vec = featurize(&formatted.text, &cfg.featurizer)?;
            context_vec.extend_from_slice(&filler_vec);
            context_vec
        }
        PoolingMode::FillerOnly => {
            // Validate the instance even though only the filler is encoded.
            format_instance(instance, filler)?;
            filler_vec
        }
    };
    Ok(PooledRepresentation { vector })
}

/// Pools a batch of rows (each with its own filler) in parallel, preserving
/// input order. Parallelism is capped by the `CORAL_CLOZE_THREADS`
/// environment variable.
pub fn pool_all(instances: &[ClozeInstance], cfg: &EncoderConfig) -> Result<Vec<Vec<f64>>> {
    crate::threads::run(|| {
        use rayon::prelude::*;
        instances
            .par_iter()
            .map(|inst| pool(inst, &inst.filler, cfg).map(|p| p.vector))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ClassLabel, ResolvedPattern};

    fn table_instance() -> ClozeInstance {
        ClozeInstance {
            id: "ex_1".into(),
            resolved_pattern: ResolvedPattern::AddedCompound,
            article_title: "How to Get Rid of Peeling Skin".into(),
            section_header: "Following a Basic Routine".into(),
            previous_context: "(...) 6. Never tear away loose skin. (...) 7. Protect your skin from sunlight.".into(),
            sentence: "Exposure to direct sunlight can weaken your skin further and complicate the [FILLER] problem.".into(),
            follow_up_context: "This is true regardless of whether your skin is peeling due to a sunburn or due to dryness.".into(),
            filler: "peeling".into(),
            class_label: Some(ClassLabel::Plausible),
            plausibility_score: Some(4.25),
        }
    }

    #[test]
    fn formats_the_reference_block() {
        let inst = table_instance();
        let out = format_instance(&inst, "peeling").unwrap();
        let expected = "Resolved pattern: ADDED COMPOUND\n\
             Section header: Following a Basic Routine\n\
             Article title: How to Get Rid of Peeling Skin\n\
             Text: (...) 6. Never tear away loose skin. (...) 7. Protect your skin from sunlight. \
             Exposure to direct sunlight can weaken your skin further and complicate the peeling problem. \
             This is true regardless of whether your skin is peeling due to a sunburn or due to dryness.";
        assert_eq!(out.text, expected);
    }

    #[test]
    fn empty_contexts_leave_single_spaced_sentence() {
        let mut inst = table_instance();
        inst.previous_context = String::new();
        inst.follow_up_context = String::new();
        let out = format_instance(&inst, "skin").unwrap();
        let text_line = out.text.lines().last().unwrap();
        assert_eq!(
            text_line,
            "Text: Exposure to direct sunlight can weaken your skin further and complicate the skin problem."
        );
    }

    #[test]
    fn empty_filler_removes_the_blank() {
        let inst = table_instance();
        let out = format_instance(&inst, "").unwrap();
        assert!(!out.text.contains(FILLER_PLACEHOLDER));
        assert!(out.text.contains("complicate the  problem."));
    }

    #[test]
    fn format_rejects_bad_placeholder_counts() {
        let mut inst = table_instance();
        inst.sentence = "No blank here.".into();
        assert!(format_instance(&inst, "x").is_err());
        inst.sentence = "[FILLER] then [FILLER].".into();
        assert!(format_instance(&inst, "x").is_err());
    }

    #[test]
    fn featurize_empty_is_zero_vector() {
        let cfg = FeaturizerConfig::default();
        let v = featurize("", &cfg).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn featurize_is_unit_norm_and_deterministic() {
        let cfg = FeaturizerConfig::default();
        let a = featurize("Protect your skin from sunlight.", &cfg).unwrap();
        let b = featurize("Protect your skin from sunlight.", &cfg).unwrap();
        assert_eq!(a, b);
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);

        let mut other_seed = cfg.clone();
        other_seed.hash_seed = 99;
        let c = featurize("Protect your skin from sunlight.", &other_seed).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn featurize_rejects_non_power_of_two_dim() {
        let cfg = FeaturizerConfig {
            dim: 300,
            ..FeaturizerConfig::default()
        };
        assert!(featurize("x", &cfg).is_err());
    }

    #[test]
    fn pool_layout_and_filler_sensitivity() {
        let inst = table_instance();
        let cfg = EncoderConfig::default();
        let d = cfg.featurizer.dim;

        let a = pool(&inst, "peeling", &cfg).unwrap();
        assert_eq!(a.vector.len(), 2 * d);

        let b = pool(&inst, "dryness", &cfg).unwrap();
        assert_ne!(a.vector[d..], b.vector[d..], "filler halves must differ");

        // With the substitution stripped, the context half no longer depends
        // on which filler was under consideration.
        let strip_a = pool(&inst, "", &cfg).unwrap();
        let strip_b = pool(&inst, "", &cfg).unwrap();
        assert_eq!(strip_a.vector[..d], strip_b.vector[..d]);

        let empty = pool(&inst, "", &cfg).unwrap();
        assert!(empty.vector[d..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn filler_only_pooling_is_half_width() {
        let inst = table_instance();
        let cfg = EncoderConfig {
            pooling: PoolingMode::FillerOnly,
            ..EncoderConfig::default()
        };
        let p = pool(&inst, "peeling", &cfg).unwrap();
        assert_eq!(p.vector.len(), cfg.featurizer.dim);
        assert_eq!(cfg.input_dim(), cfg.featurizer.dim);
    }

    #[test]
    fn pool_all_preserves_order() {
        let mut a = table_instance();
        a.id = "p_1".into();
        let mut b = table_instance();
        b.id = "p_2".into();
        b.filler = "dryness".into();
        let cfg = EncoderConfig::default();
        let pooled = pool_all(&[a.clone(), b.clone()], &cfg).unwrap();
        assert_eq!(pooled[0], pool(&a, "peeling", &cfg).unwrap().vector);
        assert_eq!(pooled[1], pool(&b, "dryness", &cfg).unwrap().vector);
    }
}
