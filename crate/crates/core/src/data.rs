//! Sparse feature rows, LIBSVM I/O, binary labels, seeded splits and the
//! nested stage prefixes used by the adaptive optimizer.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Sparse row with strictly increasing 0-based indices and no stored zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
    dim: usize,
}

impl SparseVector {
    /// Validates the index/value lists. Explicit zeros are dropped.
    pub fn new(indices: Vec<u32>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(invalid(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return Err(invalid("indices must be strictly increasing"));
            }
        }
        if let Some(&last) = indices.last() {
            if last as usize >= dim {
                return Err(invalid(format!("index {last} out of range for dimension {dim}")));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite feature value"));
        }
        Ok(Self::from_sorted(indices, values, dim))
    }

    /// Caller guarantees sorted, in-range indices and finite values.
    pub(crate) fn from_sorted(indices: Vec<u32>, values: Vec<f64>, dim: usize) -> Self {
        if values.iter().all(|&v| v != 0.0) {
            return Self { indices, values, dim };
        }
        let (indices, values) = indices
            .into_iter()
            .zip(values)
            .filter(|&(_, v)| v != 0.0)
            .unzip();
        Self { indices, values, dim }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { indices: Vec::new(), values: Vec::new(), dim }
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v != 0.0)
            .map(|(i, &v)| (i as u32, v))
            .unzip();
        Self { indices, values, dim: dense.len() }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    /// Inner product with a dense vector covering at least `dim` coordinates.
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `self - other`, merged over the union of supports. Cancelled
    /// coordinates are dropped.
    pub fn sub(&self, other: &SparseVector) -> SparseVector {
        let mut indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        let (mut a, mut b) = (0, 0);
        while a < self.nnz() || b < other.nnz() {
            let ia = self.indices.get(a).copied().unwrap_or(u32::MAX);
            let ib = other.indices.get(b).copied().unwrap_or(u32::MAX);
            let (idx, v) = if ia == ib {
                a += 1;
                b += 1;
                (ia, self.values[a - 1] - other.values[b - 1])
            } else if ia < ib {
                a += 1;
                (ia, self.values[a - 1])
            } else {
                b += 1;
                (ib, -other.values[b - 1])
            };
            if v != 0.0 {
                indices.push(idx);
                values.push(v);
            }
        }
        SparseVector { indices, values, dim: self.dim.max(other.dim) }
    }

    pub fn scaled(&self, c: f64) -> SparseVector {
        if c == 0.0 {
            return SparseVector::zeros(self.dim);
        }
        let values = self.values.iter().map(|v| v * c).collect();
        SparseVector::from_sorted(self.indices.clone(), values, self.dim)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    /// Widens (never narrows) the declared dimension.
    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = self.dim.max(dim);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

/// Parsed rows with the file's raw label values, before binarization.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset {
    pub rows: Vec<SparseVector>,
    pub raw_labels: Vec<f64>,
    pub dim: usize,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn binarize(self, seed: u64) -> Result<Dataset> {
        let labels = binarize(&self.raw_labels, seed)?;
        Dataset::new(self.rows, labels)
    }
}

/// Rows with binary labels and the positive/negative index partition.
///
/// `ids` records, for each row, its position in the dataset it was carved
/// from (identity for a freshly built dataset), so subsets can be compared
/// by row identity.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    rows: Vec<SparseVector>,
    labels: Vec<Label>,
    ids: Vec<usize>,
    pos_idx: Vec<usize>,
    neg_idx: Vec<usize>,
    dim: usize,
}

impl Dataset {
    pub fn new(rows: Vec<SparseVector>, labels: Vec<Label>) -> Result<Self> {
        let ids = (0..rows.len()).collect();
        Self::with_ids(rows, labels, ids)
    }

    fn with_ids(rows: Vec<SparseVector>, labels: Vec<Label>, ids: Vec<usize>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(invalid(format!("{} rows but {} labels", rows.len(), labels.len())));
        }
        let dim = rows.iter().map(SparseVector::dim).max().unwrap_or(0);
        let rows = rows.into_iter().map(|r| r.with_dim(dim)).collect();
        let (pos_idx, neg_idx) = (0..labels.len()).partition(|&i| labels[i].is_positive());
        Ok(Self { rows, labels, ids, pos_idx, neg_idx, dim })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[SparseVector] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &SparseVector {
        &self.rows[i]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn pos_idx(&self) -> &[usize] {
        &self.pos_idx
    }

    pub fn neg_idx(&self) -> &[usize] {
        &self.neg_idx
    }

    pub fn n_pos(&self) -> usize {
        self.pos_idx.len()
    }

    pub fn n_neg(&self) -> usize {
        self.neg_idx.len()
    }

    pub fn has_both_classes(&self) -> bool {
        self.n_pos() > 0 && self.n_neg() > 0
    }

    /// New dataset holding `members` (positions in `self`) in the given order.
    pub fn subset(&self, members: &[usize]) -> Dataset {
        let rows = members.iter().map(|&i| self.rows[i].clone()).collect();
        let labels = members.iter().map(|&i| self.labels[i]).collect();
        let ids = members.iter().map(|&i| self.ids[i]).collect();
        let mut out = Self::with_ids(rows, labels, ids).expect("lengths agree");
        out.widen(self.dim);
        out
    }

    /// Copy with row `i` replaced by `(row, label)`; used to build S^i.
    pub fn replace(&self, i: usize, row: SparseVector, label: Label) -> Result<Dataset> {
        if i >= self.len() {
            return Err(invalid(format!("row {i} out of range for n = {}", self.len())));
        }
        let mut rows = self.rows.clone();
        let mut labels = self.labels.clone();
        rows[i] = row;
        labels[i] = label;
        let mut out = Self::with_ids(rows, labels, self.ids.clone())?;
        out.widen(self.dim);
        Ok(out)
    }

    /// Raises the declared dimension of every row to at least `dim`.
    pub fn widen(&mut self, dim: usize) {
        if dim > self.dim {
            self.dim = dim;
            for r in &mut self.rows {
                r.dim = dim;
            }
        }
    }

    pub fn max_row_norm(&self) -> f64 {
        self.rows.iter().map(SparseVector::norm).fold(0.0, f64::max)
    }

    pub(crate) fn require_both_classes(&self) -> Result<()> {
        if self.has_both_classes() {
            Ok(())
        } else {
            Err(Error::ClassEmpty)
        }
    }
}

/// Parses LIBSVM text: `<label> <idx>:<val> ...` per non-empty line, with
/// 1-based ascending indices. Every row gets the dataset's dimension (the
/// largest index seen).
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<RawDataset> {
    let mut rows = Vec::new();
    let mut raw_labels = Vec::new();
    let mut dim = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = lineno + 1;
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let mut tokens = line.split_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue;
        };
        let label: f64 = label_tok
            .parse()
            .map_err(|_| err(format!("bad label {label_tok:?}")))?;
        if !label.is_finite() {
            return Err(err(format!("bad label {label_tok:?}")));
        }
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut prev = 0u64;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("malformed token {tok:?}")))?;
            let idx: i64 = idx
                .parse()
                .map_err(|_| err(format!("bad feature index in {tok:?}")))?;
            if idx <= 0 {
                return Err(err(format!("feature index must be >= 1, got {idx}")));
            }
            let idx = idx as u64;
            if idx <= prev {
                return Err(err(format!("indices not ascending at {tok:?}")));
            }
            if idx > u32::MAX as u64 {
                return Err(err(format!("feature index {idx} too large")));
            }
            prev = idx;
            let val: f64 = val
                .parse()
                .map_err(|_| err(format!("bad feature value in {tok:?}")))?;
            if !val.is_finite() {
                return Err(err(format!("non-finite feature value in {tok:?}")));
            }
            indices.push((idx - 1) as u32);
            values.push(val);
        }
        dim = dim.max(prev as usize);
        rows.push(SparseVector::from_sorted(indices, values, prev as usize));
        raw_labels.push(label);
    }
    for r in &mut rows {
        r.dim = dim;
    }
    Ok(RawDataset { rows, raw_labels, dim })
}

pub fn read_libsvm(path: impl AsRef<Path>) -> Result<RawDataset> {
    parse_libsvm(BufReader::new(File::open(path)?))
}

/// Writes `+1`/`-1` labels and 1-based indices. Values use Rust's shortest
/// round-trip formatting, so parsing the output reproduces the rows exactly.
pub fn write_libsvm<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    for (row, label) in ds.rows().iter().zip(ds.labels()) {
        out.write_all(if label.is_positive() { b"+1" } else { b"-1" })?;
        for (i, v) in row.iter() {
            write!(out, " {}:{}", i + 1, v)?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Maps raw label values to {+1, -1}.
///
/// Two distinct values: larger is positive. More than two: the sorted
/// distinct values are shuffled with `seed` and the first `k / 2` become
/// positive, so on odd counts the larger half is negative.
pub fn binarize(raw_labels: &[f64], seed: u64) -> Result<Vec<Label>> {
    let mut distinct: Vec<f64> = raw_labels.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    match distinct.len() {
        0 | 1 => Err(Error::DegenerateLabels),
        2 => {
            let hi = distinct[1];
            Ok(raw_labels
                .iter()
                .map(|&v| if v == hi { Label::Positive } else { Label::Negative })
                .collect())
        }
        k => {
            let mut order = distinct.clone();
            rng::shuffle(&mut rng::stream(seed, rng::BINARIZE), &mut order);
            let positives: Vec<f64> = order[..k / 2].to_vec();
            Ok(raw_labels
                .iter()
                .map(|v| {
                    if positives.contains(v) {
                        Label::Positive
                    } else {
                        Label::Negative
                    }
                })
                .collect())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.8, seed: 0 }
    }
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Self {
        Self { train_fraction, seed }
    }
}

/// Seeded train/test split; the first `ceil(fraction * n)` rows of the
/// permutation go to training.
pub fn split(ds: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    let n = ds.len();
    if n < 2 {
        return Err(invalid(format!("cannot split {n} rows")));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(invalid(format!("train fraction {} not in (0, 1)", spec.train_fraction)));
    }
    ds.require_both_classes()?;
    let n_train = ((spec.train_fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::stream(spec.seed, rng::SPLIT), &mut order);
    let train = ds.subset(&order[..n_train]);
    let test = ds.subset(&order[n_train..]);
    if !train.has_both_classes() || !test.has_both_classes() {
        return Err(Error::ClassEmptySplit);
    }
    Ok((train, test))
}

/// One fixed permutation of a dataset whose prefixes are the stage subsets.
/// Prefixes of different sizes are nested by construction.
#[derive(Clone, Debug)]
pub struct StagePermutation {
    order: Vec<usize>,
}

impl StagePermutation {
    /// Plain seeded permutation, or with `stratify` positives and negatives
    /// are permuted separately and interleaved in proportion, with the first
    /// two slots holding one example of each class.
    pub fn new(ds: &Dataset, seed: u64, stratify: bool) -> Self {
        let mut rng = rng::stream(seed, rng::STAGE_ORDER);
        if !stratify {
            let mut order: Vec<usize> = (0..ds.len()).collect();
            rng::shuffle(&mut rng, &mut order);
            return Self { order };
        }
        let mut pos = ds.pos_idx().to_vec();
        let mut neg = ds.neg_idx().to_vec();
        rng::shuffle(&mut rng, &mut pos);
        rng::shuffle(&mut rng, &mut neg);
        Self { order: interleave(&pos, &neg) }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn prefix(&self, ds: &Dataset, m: usize) -> Result<Dataset> {
        if m == 0 || m > self.order.len() {
            return Err(invalid(format!(
                "stage size {m} not in 1..={}",
                self.order.len()
            )));
        }
        let sub = ds.subset(&self.order[..m]);
        if !sub.has_both_classes() {
            return Err(Error::ClassEmptyStage { m });
        }
        Ok(sub)
    }
}

fn interleave(pos: &[usize], neg: &[usize]) -> Vec<usize> {
    let n = pos.len() + neg.len();
    let mut out = Vec::with_capacity(n);
    let (mut p, mut q) = (0usize, 0usize);
    if !pos.is_empty() && !neg.is_empty() {
        out.push(pos[0]);
        out.push(neg[0]);
        p = 1;
        q = 1;
    }
    while out.len() < n {
        let k = out.len() + 1;
        // Deficits scaled by n: how far each class lags its share of k slots.
        let dp = (k * pos.len()) as i64 - (p * n) as i64;
        let dq = (k * neg.len()) as i64 - (q * n) as i64;
        let take_pos = q == neg.len() || (p < pos.len() && dp >= dq);
        if take_pos {
            out.push(pos[p]);
            p += 1;
        } else {
            out.push(neg[q]);
            q += 1;
        }
    }
    out
}

/// First `m` rows of one seeded permutation of `ds`.
pub fn nested_prefix(ds: &Dataset, m: usize, seed: u64) -> Result<Dataset> {
    StagePermutation::new(ds, seed, false).prefix(ds, m)
}

/// Per-feature max-abs scaling, fitted on one dataset and applied to others.
#[derive(Clone, Debug, PartialEq)]
pub struct MaxAbsScaler {
    scale: Vec<f64>,
}

impl MaxAbsScaler {
    pub fn fit(ds: &Dataset) -> Self {
        let mut scale = vec![0.0f64; ds.dim()];
        for row in ds.rows() {
            for (i, v) in row.iter() {
                scale[i] = scale[i].max(v.abs());
            }
        }
        Self { scale }
    }

    pub fn transform(&self, ds: &Dataset) -> Dataset {
        let rows = ds
            .rows()
            .iter()
            .map(|r| {
                let values = r
                    .iter()
                    .map(|(i, v)| match self.scale.get(i) {
                        Some(&s) if s > 0.0 => v / s,
                        _ => v,
                    })
                    .collect();
                SparseVector::from_sorted(r.indices.clone(), values, r.dim)
            })
            .collect();
        let mut out = Dataset::with_ids(rows, ds.labels.clone(), ds.ids.clone())
            .expect("lengths agree");
        out.widen(ds.dim());
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub separation: f64,
    pub class_balance: f64,
}

/// Two unit-variance Gaussian clouds centred at `±(separation / 2) u`,
/// `u = (1, ..., 1) / sqrt(d)`. `round(class_balance * n)` rows are
/// positive; row order is shuffled.
pub fn generate_synthetic(spec: SyntheticSpec, seed: u64) -> Result<Dataset> {
    let SyntheticSpec { n, d, separation, class_balance } = spec;
    if n < 2 || d == 0 {
        return Err(invalid(format!("need n >= 2 and d >= 1, got n = {n}, d = {d}")));
    }
    if !(class_balance > 0.0 && class_balance < 1.0) {
        return Err(invalid(format!("class balance {class_balance} not in (0, 1)")));
    }
    if !separation.is_finite() {
        return Err(invalid("separation must be finite"));
    }
    let n_pos = ((class_balance * n as f64).round() as usize).clamp(1, n - 1);
    let mut labels: Vec<Label> = (0..n)
        .map(|i| if i < n_pos { Label::Positive } else { Label::Negative })
        .collect();
    let mut rng = rng::stream(seed, rng::SYNTHETIC);
    rng::shuffle(&mut rng, &mut labels);
    let offset = 0.5 * separation / (d as f64).sqrt();
    let rows = labels
        .iter()
        .map(|l| {
            let x: Vec<f64> = (0..d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z + l.sign() * offset
                })
                .collect();
            SparseVector::from_dense(&x)
        })
        .map(|r| r.with_dim(d))
        .collect();
    Dataset::new(rows, labels)
}

/// Set of original row ids present in a dataset.
pub fn id_set(ds: &Dataset) -> BTreeSet<usize> {
    ds.ids().iter().copied().collect()
}
