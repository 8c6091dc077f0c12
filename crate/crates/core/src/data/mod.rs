//! Embedding sets, their first/second-order statistics, and trial lists.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

mod format;

pub use format::{
    load_embeddings, load_lda, load_model, load_scores, load_trials, parse_embeddings, parse_lda,
    parse_model, parse_scores, parse_trials, save_embeddings, save_lda, save_model, save_scores,
    save_trials, write_embeddings, write_lda, write_model, write_scores, write_trials,
};

/// One embedding with its utterance id and optional speaker label.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub utterance_id: String,
    pub speaker_id: Option<String>,
    pub vector: DVector<f64>,
}

impl Record {
    pub fn new(utterance_id: impl Into<String>, speaker_id: Option<&str>, vector: DVector<f64>) -> Self {
        Self {
            utterance_id: utterance_id.into(),
            speaker_id: speaker_id.map(str::to_string),
            vector,
        }
    }
}

/// A collection of fixed-length embeddings with unique utterance ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    records: Vec<Record>,
    index: HashMap<String, usize>,
}

impl EmbeddingSet {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Precondition("embedding dim must be >= 1".into()));
        }
        Ok(Self {
            dim,
            records: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn from_records(dim: usize, records: impl IntoIterator<Item = Record>) -> Result<Self> {
        let mut set = Self::new(dim)?;
        for r in records {
            set.push(r)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, record: Record) -> Result<()> {
        if record.vector.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: record.vector.len(),
            });
        }
        if self.index.contains_key(&record.utterance_id) {
            return Err(Error::Precondition(format!(
                "duplicate utterance id `{}`",
                record.utterance_id
            )));
        }
        self.index.insert(record.utterance_id.clone(), self.records.len());
        self.records.push(record);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn get(&self, utterance_id: &str) -> Option<&Record> {
        self.index.get(utterance_id).map(|&i| &self.records[i])
    }

    pub fn is_labeled(&self) -> bool {
        self.records.iter().all(|r| r.speaker_id.is_some())
    }

    pub fn n_speakers(&self) -> usize {
        let mut ids: Vec<&str> = self.records.iter().filter_map(|r| r.speaker_id.as_deref()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Copy of the set without speaker labels.
    pub fn unlabeled(&self) -> EmbeddingSet {
        let mut out = self.clone();
        for r in &mut out.records {
            r.speaker_id = None;
        }
        out
    }

    /// Applies `f` to every vector, keeping ids and labels. `f` must return
    /// vectors of length `out_dim`.
    pub fn map_vectors(&self, out_dim: usize, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> Result<EmbeddingSet> {
        let records = self.records.iter().map(|r| Record {
            utterance_id: r.utterance_id.clone(),
            speaker_id: r.speaker_id.clone(),
            vector: f(&r.vector),
        });
        EmbeddingSet::from_records(out_dim, records)
    }

    /// Record indices in ascending utterance-id order. All accumulations run
    /// in this order so results do not depend on file order.
    pub(crate) fn sorted_indices(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.records.len()).collect();
        idx.sort_by(|&a, &b| self.records[a].utterance_id.cmp(&self.records[b].utterance_id));
        idx
    }

    pub(crate) fn require_labeled(&self, what: &str) -> Result<()> {
        if !self.is_labeled() || self.is_empty() {
            return Err(Error::Precondition(format!("{what} requires a labeled, non-empty set")));
        }
        Ok(())
    }
}

/// Sample mean and biased (1/N) covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub count: usize,
    pub mean: DVector<f64>,
    pub total_cov: SymMatrix,
}

/// Between- and within-speaker scatter, both normalized by the total
/// utterance count so that `between + within` is the total covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPair {
    pub between: SymMatrix,
    pub within: SymMatrix,
    pub n_speakers: usize,
}

fn mean_of(set: &EmbeddingSet, order: &[usize]) -> DVector<f64> {
    let mut sum = DVector::zeros(set.dim());
    for &i in order {
        sum += &set.records[i].vector;
    }
    sum / order.len() as f64
}

/// `rowsᵀ·rows / n` for a row-stacked matrix.
fn gram(rows: DMatrix<f64>, n: usize) -> SymMatrix {
    SymMatrix::symmetrized(rows.tr_mul(&rows) / n as f64)
}

pub fn compute_stats(set: &EmbeddingSet) -> Result<GaussianStats> {
    if set.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "covariance needs at least 2 embeddings, got {}",
            set.len()
        )));
    }
    let order = set.sorted_indices();
    let mean = mean_of(set, &order);
    let mut centered = DMatrix::zeros(order.len(), set.dim());
    for (row, &i) in order.iter().enumerate() {
        let diff = &set.records[i].vector - &mean;
        centered.row_mut(row).copy_from(&diff.transpose());
    }
    Ok(GaussianStats {
        count: set.len(),
        mean,
        total_cov: gram(centered, order.len()),
    })
}

pub fn compute_scatter(set: &EmbeddingSet) -> Result<ScatterPair> {
    set.require_labeled("scatter computation")?;
    let order = set.sorted_indices();
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &i in &order {
        let spk = set.records[i].speaker_id.as_deref().expect("labeled set");
        groups.entry(spk).or_default().push(i);
    }
    if groups.len() < 2 {
        return Err(Error::Precondition(format!(
            "scatter computation needs at least 2 speakers, got {}",
            groups.len()
        )));
    }

    let n = order.len();
    let dim = set.dim();
    let mean = mean_of(set, &order);
    let mut within_rows = DMatrix::zeros(n, dim);
    let mut between_rows = DMatrix::zeros(groups.len(), dim);
    let mut row = 0;
    for (s, members) in groups.values().enumerate() {
        let spk_mean = mean_of(set, members);
        for &i in members {
            let diff = &set.records[i].vector - &spk_mean;
            within_rows.row_mut(row).copy_from(&diff.transpose());
            row += 1;
        }
        let weighted = (spk_mean - &mean) * (members.len() as f64).sqrt();
        between_rows.row_mut(s).copy_from(&weighted.transpose());
    }
    Ok(ScatterPair {
        between: gram(between_rows, n),
        within: gram(within_rows, n),
        n_speakers: groups.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrialLabel {
    Target,
    Nontarget,
}

impl TrialLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialLabel::Target => "target",
            TrialLabel::Nontarget => "nontarget",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub enroll: String,
    pub test: String,
    pub label: Option<TrialLabel>,
}

impl Trial {
    pub fn new(enroll: impl Into<String>, test: impl Into<String>, label: Option<TrialLabel>) -> Self {
        Self {
            enroll: enroll.into(),
            test: test.into(),
            label,
        }
    }
}

pub type TrialList = Vec<Trial>;
