//! Self-describing checkpoint file, format tag `NWRZ-CKPT-1`.
//!
//! Layout: a UTF-8 `key=value` header (first line is the tag, terminated by
//! an `end-header` line), then the parameter tensors as raw little-endian
//! f64 in the declared order. Save → load → predict is bitwise identical.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::encoder::{EncoderConfig, FeaturizerConfig, PoolingMode};
use crate::error::{Error, Result};
use crate::model::{DualHeadModel, CLASS_UNITS, PARAM_GROUPS, REG_UNITS};
use crate::nn::DenseLayer;
use crate::ordinal::{BinningMode, CoralHead};

pub const CHECKPOINT_TAG: &str = "NWRZ-CKPT-1";
const END_HEADER: &str = "end-header";

/// Everything needed to reproduce predictions: trainable state plus the
/// featurizer/pooling configuration, the score-binning mode and the seed
/// the model was initialized with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: DualHeadModel,
    pub encoder: EncoderConfig,
    pub binning: BinningMode,
    pub seed: u64,
}

fn join_usizes(xs: &[usize]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_usizes(s: &str, what: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad {what} list `{s}` in checkpoint")))
        })
        .collect()
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let model = &self.model;
        let sizes = model.tensor_sizes();
        let tensor_decl = PARAM_GROUPS
            .iter()
            .zip(&sizes)
            .map(|(name, n)| format!("{name}:{n}"))
            .collect::<Vec<_>>()
            .join(",");

        let mut header = String::new();
        header.push_str(CHECKPOINT_TAG);
        header.push('\n');
        header.push_str(&format!("input_dim={}\n", model.input_dim()));
        header.push_str(&format!("hidden_dim={}\n", model.hidden_dim()));
        header.push_str(&format!("class_units={CLASS_UNITS}\n"));
        header.push_str(&format!("reg_units={REG_UNITS}\n"));
        header.push_str(&format!("featurizer_dim={}\n", self.encoder.featurizer.dim));
        header.push_str(&format!(
            "word_orders={}\n",
            join_usizes(&self.encoder.featurizer.word_orders)
        ));
        header.push_str(&format!(
            "char_orders={}\n",
            join_usizes(&self.encoder.featurizer.char_orders)
        ));
        header.push_str(&format!("hash_seed={}\n", self.encoder.featurizer.hash_seed));
        header.push_str(&format!("pooling={}\n", self.encoder.pooling));
        header.push_str(&format!("binning={}\n", self.binning));
        header.push_str(&format!("seed={}\n", self.seed));
        header.push_str(&format!("tensors={tensor_decl}\n"));
        header.push_str(END_HEADER);
        header.push('\n');

        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(header.as_bytes())
            .map_err(|e| Error::io(path, e))?;
        for tensor in model.param_tensors() {
            let mut bytes = Vec::with_capacity(tensor.len() * 8);
            for v in tensor {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut raw = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut raw))
            .map_err(|e| Error::io(path, e))?;

        let bad = |msg: String| Error::Config(format!("checkpoint {}: {msg}", path.display()));

        // Header = everything up to and including the end-header line.
        let mut fields = BTreeMap::new();
        let mut cursor = 0usize;
        let mut first = true;
        let mut saw_end = false;
        while cursor < raw.len() {
            let nl = raw[cursor..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| bad("unterminated header".into()))?;
            let line = std::str::from_utf8(&raw[cursor..cursor + nl])
                .map_err(|_| bad("header is not UTF-8".into()))?;
            cursor += nl + 1;
            if first {
                if line != CHECKPOINT_TAG {
                    return Err(bad(format!(
                        "bad format tag `{line}` (expected `{CHECKPOINT_TAG}`)"
                    )));
                }
                first = false;
                continue;
            }
            if line == END_HEADER {
                saw_end = true;
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed header line `{line}`")))?;
            fields.insert(k.to_string(), v.to_string());
        }
        if !saw_end {
            return Err(bad("missing end-header marker".into()));
        }

        let get = |key: &str| -> Result<&String> {
            fields
                .get(key)
                .ok_or_else(|| bad(format!("missing header field `{key}`")))
        };
        let get_usize = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| bad(format!("field `{key}` is not an integer")))
        };

        let input_dim = get_usize("input_dim")?;
        let hidden_dim = get_usize("hidden_dim")?;
        let class_units = get_usize("class_units")?;
        let reg_units = get_usize("reg_units")?;
        if class_units != CLASS_UNITS || reg_units != REG_UNITS {
            return Err(bad(format!(
                "unsupported head sizes {class_units}/{reg_units}"
            )));
        }
        let featurizer = FeaturizerConfig {
            dim: get_usize("featurizer_dim")?,
            word_orders: parse_usizes(get("word_orders")?, "word_orders")?,
            char_orders: parse_usizes(get("char_orders")?, "char_orders")?,
            hash_seed: get("hash_seed")?
                .parse()
                .map_err(|_| bad("field `hash_seed` is not an integer".into()))?,
        };
        let pooling: PoolingMode = get("pooling")?.parse()?;
        let binning: BinningMode = get("binning")?.parse()?;
        let seed: u64 = get("seed")?
            .parse()
            .map_err(|_| bad("field `seed` is not an integer".into()))?;
        let encoder = EncoderConfig {
            featurizer,
            pooling,
        };
        if encoder.input_dim() != input_dim {
            return Err(bad(format!(
                "input_dim {input_dim} inconsistent with featurizer config ({} expected)",
                encoder.input_dim()
            )));
        }

        let expected_sizes = [
            input_dim * hidden_dim,
            hidden_dim,
            hidden_dim,
            CLASS_UNITS,
            hidden_dim,
            REG_UNITS,
        ];
        let declared = get("tensors")?;
        let mut declared_sizes = Vec::new();
        for (part, name) in declared.split(',').zip(PARAM_GROUPS.iter()) {
            let (n, len) = part
                .split_once(':')
                .ok_or_else(|| bad(format!("malformed tensor declaration `{part}`")))?;
            if n != *name {
                return Err(bad(format!(
                    "tensor order mismatch: expected `{name}`, found `{n}`"
                )));
            }
            declared_sizes.push(
                len.parse::<usize>()
                    .map_err(|_| bad(format!("bad tensor length in `{part}`")))?,
            );
        }
        if declared_sizes != expected_sizes {
            return Err(bad(format!(
                "tensor sizes {declared_sizes:?} do not match dimensions {expected_sizes:?}"
            )));
        }

        let total: usize = expected_sizes.iter().sum();
        let payload = &raw[cursor..];
        if payload.len() != total * 8 {
            return Err(bad(format!(
                "payload holds {} bytes, expected {}",
                payload.len(),
                total * 8
            )));
        }
        let mut offset = 0usize;
        let mut read_tensor = |n: usize| -> Vec<f64> {
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let mut b = [0u8; 8];
                b.copy_from_slice(&payload[offset..offset + 8]);
                out.push(f64::from_le_bytes(b));
                offset += 8;
            }
            out
        };
        let proj_w = read_tensor(expected_sizes[0]);
        let proj_b = read_tensor(expected_sizes[1]);
        let class_w = read_tensor(expected_sizes[2]);
        let class_b = read_tensor(expected_sizes[3]);
        let reg_w = read_tensor(expected_sizes[4]);
        let reg_b = read_tensor(expected_sizes[5]);

        Ok(Checkpoint {
            model: DualHeadModel {
                projection: DenseLayer {
                    w: proj_w,
                    b: proj_b,
                    in_dim: input_dim,
                    out_dim: hidden_dim,
                },
                class_head: CoralHead::new(class_w, class_b),
                reg_head: CoralHead::new(reg_w, reg_b),
            },
            encoder,
            binning,
            seed,
        })
    }
}
