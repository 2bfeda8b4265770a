//! Training configuration: defaults, validation and the flat `key=value`
//! config-file format. Precedence is CLI flags over config file over
//! defaults; both layers are expressed as patches applied to the default.

use std::path::Path;

use crate::encoder::{EncoderConfig, FeaturizerConfig, PoolingMode};
use crate::error::{Error, Result};
use crate::ordinal::{BinningMode, LossWeights};

/// Metric used to pick the best epoch's checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectMetric {
    Spearman,
    Accuracy,
}

impl SelectMetric {
    pub fn as_str(&self) -> &'static str {
        match self {
            SelectMetric::Spearman => "spearman",
            SelectMetric::Accuracy => "accuracy",
        }
    }
}

impl std::str::FromStr for SelectMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spearman" => Ok(SelectMetric::Spearman),
            "accuracy" => Ok(SelectMetric::Accuracy),
            other => Err(Error::Config(format!(
                "unknown selection metric `{other}` (expected `spearman` or `accuracy`)"
            ))),
        }
    }
}

/// Full training configuration. Defaults follow the reference setup:
/// 5 epochs, batch 16, AdamW at lr 1.90323e-05 with weight decay
/// 0.00123974, both loss weights at 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub lambda_c: f64,
    pub lambda_r: f64,
    pub binning: BinningMode,
    pub pooling: PoolingMode,
    pub d_e: usize,
    /// Projection width; `None` means `d_e / 2`.
    pub h: Option<usize>,
    pub hash_seed: u64,
    pub seed: u64,
    pub merge_dev: bool,
    pub select: SelectMetric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 16,
            base_lr: 1.90323e-05,
            weight_decay: 0.00123974,
            lambda_c: 0.5,
            lambda_r: 0.5,
            binning: BinningMode::Floor,
            pooling: PoolingMode::Concat,
            d_e: 512,
            h: None,
            hash_seed: 0,
            seed: 0,
            merge_dev: false,
            select: SelectMetric::Spearman,
        }
    }
}

impl TrainConfig {
    pub fn hidden_dim(&self) -> usize {
        self.h.unwrap_or(self.d_e / 2).max(1)
    }

    pub fn loss_weights(&self) -> Result<LossWeights> {
        LossWeights::new(self.lambda_c, self.lambda_r)
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            featurizer: FeaturizerConfig {
                dim: self.d_e,
                hash_seed: self.hash_seed,
                ..FeaturizerConfig::default()
            },
            pooling: self.pooling,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.base_lr.is_finite() && self.base_lr >= 0.0) {
            return Err(Error::Config(format!("bad base_lr {}", self.base_lr)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config(format!(
                "bad weight_decay {}",
                self.weight_decay
            )));
        }
        self.loss_weights()?;
        self.encoder_config().featurizer.validate()?;
        Ok(())
    }

    /// One-line rendering used by the run log.
    pub fn summary(&self) -> String {
        format!(
            "epochs={} batch_size={} base_lr={} weight_decay={} lambda_c={} lambda_r={} \
             binning={} pooling={} d_e={} h={} hash_seed={} seed={} merge_dev={} select={}",
            self.epochs,
            self.batch_size,
            self.base_lr,
            self.weight_decay,
            self.lambda_c,
            self.lambda_r,
            self.binning,
            self.pooling,
            self.d_e,
            self.hidden_dim(),
            self.hash_seed,
            self.seed,
            self.merge_dev,
            self.select.as_str(),
        )
    }
}

/// Optional overrides for every [`TrainConfig`] field. Parsed from a config
/// file or assembled from CLI flags, then applied in precedence order.
#[derive(Debug, Clone, Default)]
pub struct TrainConfigPatch {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub base_lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub lambda_c: Option<f64>,
    pub lambda_r: Option<f64>,
    pub binning: Option<BinningMode>,
    pub pooling: Option<PoolingMode>,
    pub d_e: Option<usize>,
    pub h: Option<usize>,
    pub hash_seed: Option<u64>,
    pub seed: Option<u64>,
    pub merge_dev: Option<bool>,
    pub select: Option<SelectMetric>,
}

impl TrainConfigPatch {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                }
            };
        }
        set!(epochs);
        set!(batch_size);
        set!(base_lr);
        set!(weight_decay);
        set!(lambda_c);
        set!(lambda_r);
        set!(binning);
        set!(pooling);
        set!(d_e);
        set!(hash_seed);
        set!(seed);
        set!(merge_dev);
        set!(select);
        if self.h.is_some() {
            cfg.h = self.h;
        }
    }

    /// Parses the flat config-file format: one `key=value` per line, `#`
    /// comments, keys named after the config fields.
    pub fn parse_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut patch = TrainConfigPatch::default();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "config {}:{}: expected key=value, got `{line}`",
                    path.display(),
                    lineno + 1
                ))
            })?;
            let key = key.trim();
            let value = value.trim();
            let ctx = |what: &str| {
                Error::Config(format!(
                    "config {}:{}: bad {what} value `{value}`",
                    path.display(),
                    lineno + 1
                ))
            };
            match key {
                "epochs" => patch.epochs = Some(value.parse().map_err(|_| ctx("epochs"))?),
                "batch_size" => {
                    patch.batch_size = Some(value.parse().map_err(|_| ctx("batch_size"))?)
                }
                "base_lr" => patch.base_lr = Some(value.parse().map_err(|_| ctx("base_lr"))?),
                "weight_decay" => {
                    patch.weight_decay = Some(value.parse().map_err(|_| ctx("weight_decay"))?)
                }
                "lambda_c" => patch.lambda_c = Some(value.parse().map_err(|_| ctx("lambda_c"))?),
                "lambda_r" => patch.lambda_r = Some(value.parse().map_err(|_| ctx("lambda_r"))?),
                "binning" => patch.binning = Some(value.parse()?),
                "pooling" => patch.pooling = Some(value.parse()?),
                "d_e" => patch.d_e = Some(value.parse().map_err(|_| ctx("d_e"))?),
                "h" => patch.h = Some(value.parse().map_err(|_| ctx("h"))?),
                "hash_seed" => {
                    patch.hash_seed = Some(value.parse().map_err(|_| ctx("hash_seed"))?)
                }
                "seed" => patch.seed = Some(value.parse().map_err(|_| ctx("seed"))?),
                "merge_dev" => {
                    patch.merge_dev = Some(value.parse().map_err(|_| ctx("merge_dev"))?)
                }
                "select" => patch.select = Some(value.parse()?),
                other => {
                    return Err(Error::Config(format!(
                        "config {}:{}: unknown key `{other}`",
                        path.display(),
                        lineno + 1
                    )))
                }
            }
        }
        Ok(patch)
    }
}
