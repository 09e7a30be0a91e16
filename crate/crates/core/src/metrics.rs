//! Exact AUC and summary statistics.

use crate::data::Label;
use crate::error::{invalid, Error, Result};

/// How a (positive, negative) pair with equal scores is counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TiesPolicy {
    /// Half credit, the Mann–Whitney convention.
    #[default]
    Half,
    /// No credit: only `s⁺ > s⁻` counts.
    Strict,
}

impl TiesPolicy {
    fn credit(self) -> f64 {
        match self {
            TiesPolicy::Half => 0.5,
            TiesPolicy::Strict => 0.0,
        }
    }
}

/// Model scores paired with their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<Label>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<Label>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(invalid(format!("{} scores but {} labels", scores.len(), labels.len())));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(invalid("NaN score"));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    fn counts(&self) -> Result<(usize, usize)> {
        let p = self.labels.iter().filter(|l| l.is_positive()).count();
        let q = self.labels.len() - p;
        if p == 0 || q == 0 {
            return Err(Error::ClassEmpty);
        }
        Ok((p, q))
    }
}

/// Direct enumeration over all (positive, negative) pairs.
pub fn auc_bruteforce(ss: &ScoredSet, ties: TiesPolicy) -> Result<f64> {
    let (p, q) = ss.counts()?;
    let pos: Vec<f64> = ss.iter_class(true).collect();
    let neg: Vec<f64> = ss.iter_class(false).collect();
    let mut wins = 0u64;
    let mut tied = 0u64;
    for &a in &pos {
        for &b in &neg {
            if a > b {
                wins += 1;
            } else if a == b {
                tied += 1;
            }
        }
    }
    Ok((wins as f64 + ties.credit() * tied as f64) / (p as f64 * q as f64))
}

impl ScoredSet {
    fn iter_class(&self, positive: bool) -> impl Iterator<Item = f64> + '_ {
        self.scores
            .iter()
            .zip(&self.labels)
            .filter(move |(_, l)| l.is_positive() == positive)
            .map(|(&s, _)| s)
    }
}

/// `O(n log n)` AUC from midranks.
///
/// Counts are accumulated in integers (twice the midrank sum), so the Half
/// result is the same rational as [`auc_bruteforce`] before the final
/// division.
pub fn auc_rank(ss: &ScoredSet, ties: TiesPolicy) -> Result<f64> {
    let (p, q) = ss.counts()?;
    let mut order: Vec<usize> = (0..ss.scores.len()).collect();
    order.sort_by(|&a, &b| ss.scores[a].total_cmp(&ss.scores[b]));
    // total_cmp orders -0.0 before 0.0 but keeps them adjacent; groups use ==
    let mut twice_rank_sum: u128 = 0;
    let mut tie_pairs: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && ss.scores[order[end]] == ss.scores[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end; twice the midrank is start + end + 1
        let twice_mid = (start + end + 1) as u128;
        let group_pos = order[start..end].iter().filter(|&&i| ss.labels[i].is_positive()).count();
        twice_rank_sum += twice_mid * group_pos as u128;
        tie_pairs += (group_pos * (end - start - group_pos)) as u64;
        start = end;
    }
    // U (with half credit) = R⁺ − p(p+1)/2, held doubled
    let twice_u = twice_rank_sum - (p as u128) * (p as u128 + 1);
    let pairs = p as f64 * q as f64;
    let twice_u = match ties {
        TiesPolicy::Half => twice_u,
        TiesPolicy::Strict => twice_u - tie_pairs as u128,
    };
    Ok(twice_u as f64 / (2.0 * pairs))
}

/// Mean and standard error (sample standard deviation over `√k`).
pub fn mean_stderr(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(invalid(format!("standard error needs at least two values, got {}", values.len())));
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok((mean, (ss / (k - 1.0)).sqrt() / k.sqrt()))
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}
