//! Cloze-task data ingestion and normalization.
//!
//! The canonical on-disk format is a strict TSV: UTF-8, `\n` line endings,
//! a mandatory header row, one row per (context, filler) pair, and no
//! quoting — fields must not contain tabs, newlines or carriage returns.
//! Optional fields (the two gold labels) are empty strings when absent.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::SampleTarget;
use crate::ordinal::{encode_ordinal, normalize_score, BinningMode, OrdinalLabel};

/// The blank marker inside the `sentence` field. Case-sensitive.
pub const FILLER_PLACEHOLDER: &str = "[FILLER]";

pub const TSV_COLUMNS: [&str; 10] = [
    "id",
    "resolved_pattern",
    "article_title",
    "section_header",
    "previous_context",
    "sentence",
    "follow_up_context",
    "filler",
    "class_label",
    "plausibility_score",
];

/// Relationship of the filler to its context.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolvedPattern {
    ImplicitReference,
    AddedCompound,
    MetonymicReference,
    FusedHead,
}

impl ResolvedPattern {
    pub fn as_str(&self) -> &'static str {
        match self {
            ResolvedPattern::ImplicitReference => "IMPLICIT REFERENCE",
            ResolvedPattern::AddedCompound => "ADDED COMPOUND",
            ResolvedPattern::MetonymicReference => "METONYMIC REFERENCE",
            ResolvedPattern::FusedHead => "FUSED HEAD",
        }
    }
}

impl FromStr for ResolvedPattern {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "IMPLICIT REFERENCE" => Ok(ResolvedPattern::ImplicitReference),
            "ADDED COMPOUND" => Ok(ResolvedPattern::AddedCompound),
            "METONYMIC REFERENCE" => Ok(ResolvedPattern::MetonymicReference),
            "FUSED HEAD" => Ok(ResolvedPattern::FusedHead),
            other => Err(Error::data(format!("unknown resolved pattern `{other}`"))),
        }
    }
}

impl fmt::Display for ResolvedPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Plausibility class, ordered. Ingest is case-insensitive and also accepts
/// the digits 0/1/2; output is always the canonical name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ClassLabel {
    Implausible,
    Neutral,
    Plausible,
}

impl ClassLabel {
    pub fn index(&self) -> usize {
        match self {
            ClassLabel::Implausible => 0,
            ClassLabel::Neutral => 1,
            ClassLabel::Plausible => 2,
        }
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(ClassLabel::Implausible),
            1 => Ok(ClassLabel::Neutral),
            2 => Ok(ClassLabel::Plausible),
            other => Err(Error::data(format!("class index {other} out of range"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ClassLabel::Implausible => "Implausible",
            ClassLabel::Neutral => "Neutral",
            ClassLabel::Plausible => "Plausible",
        }
    }
}

impl FromStr for ClassLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "implausible" | "0" => Ok(ClassLabel::Implausible),
            "neutral" | "1" => Ok(ClassLabel::Neutral),
            "plausible" | "2" => Ok(ClassLabel::Plausible),
            other => Err(Error::data(format!("unknown class label `{other}`"))),
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One (context, filler) pair with the six dataset features and optional
/// gold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ClozeInstance {
    pub id: String,
    pub resolved_pattern: ResolvedPattern,
    pub article_title: String,
    pub section_header: String,
    pub previous_context: String,
    pub sentence: String,
    pub follow_up_context: String,
    pub filler: String,
    pub class_label: Option<ClassLabel>,
    pub plausibility_score: Option<f64>,
}

impl ClozeInstance {
    /// Number of placeholder occurrences in the sentence.
    pub fn placeholder_count(&self) -> usize {
        self.sentence.matches(FILLER_PLACEHOLDER).count()
    }
}

/// Splits a row id of the form `<instance>_<filler_index>` on the last
/// underscore. Ids without an underscore (or a non-numeric suffix) are
/// their own instance with filler index 0.
pub fn instance_key(id: &str) -> (&str, u32) {
    if let Some(pos) = id.rfind('_') {
        if let Ok(idx) = id[pos + 1..].parse::<u32>() {
            return (&id[..pos], idx);
        }
    }
    (id, 0)
}

/// Per-label counts over the rows that carry gold labels.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub class_counts: [usize; 3],
    pub score_counts_round: [usize; 5],
    pub score_counts_floor: [usize; 5],
    pub rows_with_class: usize,
    pub rows_with_score: usize,
}

/// A validated, immutable collection of instances with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    instances: Vec<ClozeInstance>,
    stats: CorpusStats,
}

impl Corpus {
    pub fn new(instances: Vec<ClozeInstance>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(instances.len());
        for inst in &instances {
            if !seen.insert(inst.id.as_str()) {
                return Err(Error::data(format!("duplicate id `{}`", inst.id)));
            }
        }
        drop(seen);
        let stats = compute_stats(&instances)?;
        Ok(Self { instances, stats })
    }

    pub fn instances(&self) -> &[ClozeInstance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn stats(&self) -> &CorpusStats {
        &self.stats
    }
}

fn compute_stats(instances: &[ClozeInstance]) -> Result<CorpusStats> {
    let mut stats = CorpusStats::default();
    for inst in instances {
        if let Some(label) = inst.class_label {
            stats.class_counts[label.index()] += 1;
            stats.rows_with_class += 1;
        }
        if let Some(score) = inst.plausibility_score {
            stats.score_counts_round[normalize_score(score, BinningMode::Round)?.value()] += 1;
            stats.score_counts_floor[normalize_score(score, BinningMode::Floor)?.value()] += 1;
            stats.rows_with_score += 1;
        }
    }
    Ok(stats)
}

fn field_error(path: &Path, line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::data_at(path, line, field, message.into())
}

fn validate_field(path: &Path, line: usize, field: &str, value: &str) -> Result<()> {
    if value.contains('\t') || value.contains('\n') || value.contains('\r') {
        return Err(field_error(
            path,
            line,
            field,
            "embedded tab/newline/carriage-return is not allowed",
        ));
    }
    Ok(())
}

/// Loads and validates the canonical TSV format. Every failure names the
/// file, 1-based line and field.
pub fn load_tsv(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tsv(&raw, path)
}

fn parse_tsv(raw: &str, path: &Path) -> Result<Corpus> {
    let mut lines = raw.split('\n');
    let header = lines
        .next()
        .filter(|l| !l.is_empty())
        .ok_or_else(|| Error::data_at(path, 1, "header", "missing header row"))?;
    let header_cols: Vec<&str> = header.split('\t').collect();
    if header_cols != TSV_COLUMNS {
        return Err(Error::data_at(
            path,
            1,
            "header",
            format!(
                "expected columns {:?}, got {:?}",
                TSV_COLUMNS, header_cols
            ),
        ));
    }

    let mut instances = Vec::new();
    let mut ids: HashSet<String> = HashSet::new();
    for (offset, line) in lines.enumerate() {
        let line_no = offset + 2;
        if line.is_empty() {
            // Blank segment after the final newline; anything else is an
            // empty row, which has the wrong column count below.
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != TSV_COLUMNS.len() {
            return Err(Error::data_at(
                path,
                line_no,
                "row",
                format!("expected {} columns, got {}", TSV_COLUMNS.len(), cols.len()),
            ));
        }
        for (field, value) in TSV_COLUMNS.iter().zip(&cols) {
            validate_field(path, line_no, field, value)?;
        }

        let id = cols[0].to_string();
        if id.is_empty() {
            return Err(field_error(path, line_no, "id", "id must be non-empty"));
        }
        if !ids.insert(id.clone()) {
            return Err(field_error(
                path,
                line_no,
                "id",
                format!("duplicate id `{id}`"),
            ));
        }
        let resolved_pattern: ResolvedPattern = cols[1]
            .parse()
            .map_err(|e: Error| field_error(path, line_no, "resolved_pattern", e.to_string()))?;
        let sentence = cols[5].to_string();
        let placeholders = sentence.matches(FILLER_PLACEHOLDER).count();
        if placeholders != 1 {
            return Err(field_error(
                path,
                line_no,
                "sentence",
                format!("expected exactly one {FILLER_PLACEHOLDER} placeholder, found {placeholders}"),
            ));
        }
        let class_label = if cols[8].is_empty() {
            None
        } else {
            Some(
                cols[8]
                    .parse::<ClassLabel>()
                    .map_err(|e| field_error(path, line_no, "class_label", e.to_string()))?,
            )
        };
        let plausibility_score = if cols[9].is_empty() {
            None
        } else {
            let score: f64 = cols[9].parse().map_err(|_| {
                field_error(
                    path,
                    line_no,
                    "plausibility_score",
                    format!("not a number: `{}`", cols[9]),
                )
            })?;
            if !(1.0..=5.0).contains(&score) {
                return Err(field_error(
                    path,
                    line_no,
                    "plausibility_score",
                    format!("score {score} outside [1, 5]"),
                ));
            }
            Some(score)
        };

        instances.push(ClozeInstance {
            id,
            resolved_pattern,
            article_title: cols[2].to_string(),
            section_header: cols[3].to_string(),
            previous_context: cols[4].to_string(),
            sentence,
            follow_up_context: cols[6].to_string(),
            filler: cols[7].to_string(),
            class_label,
            plausibility_score,
        });
    }

    Corpus::new(instances)
}

/// Writes the canonical TSV format; `load_tsv(write_tsv(c)) == c`.
pub fn write_tsv(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&TSV_COLUMNS.join("\t"));
    out.push('\n');
    for inst in corpus.instances() {
        let class = inst
            .class_label
            .map(|c| c.as_str().to_string())
            .unwrap_or_default();
        let score = inst
            .plausibility_score
            .map(|s| format!("{s}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            inst.id,
            inst.resolved_pattern,
            inst.article_title,
            inst.section_header,
            inst.previous_context,
            inst.sentence,
            inst.follow_up_context,
            inst.filler,
            class,
            score,
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Training targets for the rows that carry both gold labels.
#[derive(Debug, Clone)]
pub struct TrainingTargets {
    /// `(row index into the corpus, binary targets)`.
    pub items: Vec<(usize, SampleTarget)>,
    /// Rows excluded because one or both labels were missing.
    pub skipped: usize,
}

/// Builds per-sample binary targets: the class label on the 3-class scale
/// and the binned score on the 5-class scale. Rows missing either label are
/// excluded and counted.
pub fn make_targets(corpus: &Corpus, mode: BinningMode) -> Result<TrainingTargets> {
    let mut items = Vec::with_capacity(corpus.len());
    let mut skipped = 0;
    for (row, inst) in corpus.instances().iter().enumerate() {
        match (inst.class_label, inst.plausibility_score) {
            (Some(class), Some(score)) => {
                let class_bits = encode_ordinal(OrdinalLabel::new(class.index(), 3)?);
                let reg_bits = encode_ordinal(normalize_score(score, mode)?);
                items.push((
                    row,
                    SampleTarget {
                        class_bits,
                        reg_bits,
                    },
                ));
            }
            _ => skipped += 1,
        }
    }
    Ok(TrainingTargets { items, skipped })
}

/// Concatenates two corpora, train rows first. Ids must be disjoint.
pub fn merge_train_dev(train: &Corpus, dev: &Corpus) -> Result<Corpus> {
    let train_ids: HashSet<&str> = train.instances().iter().map(|i| i.id.as_str()).collect();
    for inst in dev.instances() {
        if train_ids.contains(inst.id.as_str()) {
            return Err(Error::data(format!(
                "id `{}` present in both train and dev",
                inst.id
            )));
        }
    }
    let mut merged = train.instances().to_vec();
    merged.extend_from_slice(dev.instances());
    Corpus::new(merged)
}

/// Seeded per-epoch shuffling into batches. The same `(seed, epoch)` pair
/// always yields the same order; the last batch may be short.
#[derive(Debug, Clone, Copy)]
pub struct EpochBatches {
    n: usize,
    batch_size: usize,
    seed: u64,
}

impl EpochBatches {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Usage("batch size must be >= 1".into()));
        }
        Ok(Self {
            n,
            batch_size,
            seed,
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.n.div_ceil(self.batch_size)
    }

    /// Index batches for one epoch. Distinct epochs use distinct ChaCha
    /// streams of the same seed.
    pub fn epoch(&self, epoch: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1 + epoch as u64);
        order.shuffle(&mut rng);
        order
            .chunks(self.batch_size)
            .map(|c| c.to_vec())
            .collect()
    }
}

/// Batches for a single pass over the corpus (epoch 0 of [`EpochBatches`]).
pub fn batch_iter(corpus: &Corpus, batch_size: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    Ok(EpochBatches::new(corpus.len(), batch_size, seed)?.epoch(0))
}
