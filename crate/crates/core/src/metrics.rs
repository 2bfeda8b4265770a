//! Evaluation: exact-match accuracy for the classification subtask and
//! Spearman's rank correlation (average ranks for ties) for the ranking
//! subtask.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ordinal::BinningMode;

/// Fraction of exact matches between predicted and gold labels.
pub fn accuracy(pred: &[usize], gold: &[usize]) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::Usage(format!(
            "accuracy over {} predictions vs {} gold labels",
            pred.len(),
            gold.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Usage("accuracy over empty vectors".into()));
    }
    let hits = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Average ranks (1-based); tied values receive the mean of the positions
/// they occupy.
pub fn average_ranks(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite value in rank input".into()));
    }
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        // positions i+1 ..= j+1, averaged
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        i = j + 1;
    }
    Ok(ranks)
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(Error::Numeric(
            "correlation undefined for constant input".into(),
        ));
    }
    Ok(cov / (var_x * var_y).sqrt())
}

/// Spearman's rank correlation: Pearson correlation of average ranks.
/// Requires at least two pairs and non-constant inputs.
pub fn spearman(pred: &[f64], gold: &[f64]) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::Usage(format!(
            "spearman over {} predictions vs {} gold scores",
            pred.len(),
            gold.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::Usage(
            "spearman needs at least two pairs".into(),
        ));
    }
    let rp = average_ranks(pred)?;
    let rg = average_ranks(gold)?;
    pearson(&rp, &rg)
}

/// Spearman averaged over groups of rows (one group per context). Groups
/// whose gold scores are constant or that have fewer than two rows are
/// skipped and counted.
pub fn per_group_spearman(groups: &[(Vec<f64>, Vec<f64>)]) -> Result<(f64, usize)> {
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for (pred, gold) in groups {
        match spearman(pred, gold) {
            Ok(rho) => {
                sum += rho;
                used += 1;
            }
            Err(Error::Numeric(_)) | Err(Error::Usage(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(Error::Numeric(
            "spearman undefined in every group".into(),
        ));
    }
    Ok((sum / used as f64, skipped))
}

/// Evaluation summary for one dataset pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub spearman: f64,
    /// Rows that entered the evaluation join.
    pub n: usize,
    pub n_accuracy: usize,
    pub n_spearman: usize,
    pub skipped_rows: usize,
    /// Contexts dropped by per-instance averaging (0 in global mode).
    pub skipped_groups: usize,
    pub binning: Option<BinningMode>,
    pub pooling: Option<String>,
    pub spearman_scope: SpearmanScope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpearmanScope {
    Global,
    PerInstance,
}

impl SpearmanScope {
    pub fn as_str(&self) -> &'static str {
        match self {
            SpearmanScope::Global => "global",
            SpearmanScope::PerInstance => "per_instance",
        }
    }
}

impl EvalReport {
    /// Line-oriented `key=value` rendering.
    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("accuracy={:.6}\n", self.accuracy));
        out.push_str(&format!("spearman={:.6}\n", self.spearman));
        out.push_str(&format!("n={}\n", self.n));
        out.push_str(&format!("n_accuracy={}\n", self.n_accuracy));
        out.push_str(&format!("n_spearman={}\n", self.n_spearman));
        out.push_str(&format!("skipped_rows={}\n", self.skipped_rows));
        out.push_str(&format!("skipped_groups={}\n", self.skipped_groups));
        if let Some(b) = self.binning {
            out.push_str(&format!("binning={b}\n"));
        }
        if let Some(p) = &self.pooling {
            out.push_str(&format!("pooling={p}\n"));
        }
        out.push_str(&format!("spearman_scope={}\n", self.spearman_scope.as_str()));
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("report serialization failed: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Independent oracle: quadratic-time average ranks (count smaller /
    // equal elements) and a sum-formula Pearson.
    fn oracle_ranks(xs: &[f64]) -> Vec<f64> {
        xs.iter()
            .map(|&x| {
                let less = xs.iter().filter(|&&o| o < x).count() as f64;
                let eq = xs.iter().filter(|&&o| o == x).count() as f64;
                less + (eq + 1.0) / 2.0
            })
            .collect()
    }

    fn oracle_spearman(a: &[f64], b: &[f64]) -> f64 {
        let x = oracle_ranks(a);
        let y = oracle_ranks(b);
        let n = x.len() as f64;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|a| a * a).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    #[test]
    fn accuracy_basics() {
        assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 1, 2, 2], &[0, 1, 0, 0]).unwrap(), 0.5);
        assert_eq!(accuracy(&[1, 1], &[0, 2]).unwrap(), 0.0);
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn spearman_monotone_and_reversed() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn spearman_with_ties_matches_oracle() {
        let pred = [1.0, 2.0, 2.0, 4.0];
        let gold = [1.0, 2.0, 3.0, 4.0];
        let rho = spearman(&pred, &gold).unwrap();
        let expected = oracle_spearman(&pred, &gold);
        assert!((rho - expected).abs() < 1e-12);
        // 3/sqrt(10) by hand
        assert!((rho - 0.948_683_298_050_513_8).abs() < 1e-12);
    }

    #[test]
    fn spearman_random_tied_vectors_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let n = rng.gen_range(3..40);
            // Draw from a small grid to force plenty of ties.
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64 / 2.0).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64 / 2.0).collect();
            if a.iter().all(|&x| x == a[0]) || b.iter().all(|&x| x == b[0]) {
                continue;
            }
            let rho = spearman(&a, &b).unwrap();
            assert!((rho - oracle_spearman(&a, &b)).abs() < 1e-9);
            let sym = spearman(&b, &a).unwrap();
            assert!((rho - sym).abs() < 1e-12);
        }
    }

    #[test]
    fn spearman_invariant_under_monotone_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let n = rng.gen_range(4..30);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let rho = spearman(&a, &b).unwrap();
            let cubed: Vec<f64> = a.iter().map(|&x| x * x * x + 5.0).collect();
            let rho_t = spearman(&cubed, &b).unwrap();
            assert!((rho - rho_t).abs() < 1e-12);
        }
    }

    #[test]
    fn spearman_errors() {
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::Numeric(_))
        ));
        assert!(matches!(
            spearman(&[1.0], &[1.0]),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            spearman(&[1.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn per_group_average_skips_constant_gold() {
        let groups = vec![
            (vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]),
            (vec![1.0, 2.0, 3.0], vec![2.0, 2.0, 2.0]), // constant gold
            (vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0]),
        ];
        let (avg, skipped) = per_group_spearman(&groups).unwrap();
        assert!((avg - 0.0).abs() < 1e-15);
        assert_eq!(skipped, 1);
    }

    #[test]
    fn report_renders_both_formats() {
        let report = EvalReport {
            accuracy: 0.75,
            spearman: 0.5,
            n: 8,
            n_accuracy: 8,
            n_spearman: 8,
            skipped_rows: 0,
            skipped_groups: 0,
            binning: Some(BinningMode::Floor),
            pooling: Some("concat".into()),
            spearman_scope: SpearmanScope::Global,
        };
        let text = report.to_kv_text();
        assert!(text.contains("accuracy=0.750000"));
        assert!(text.contains("binning=floor"));
        let json = report.to_json().unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.n, 8);
        assert_eq!(back.spearman_scope, SpearmanScope::Global);
    }
}
