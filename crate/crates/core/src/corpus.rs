//! Vocabulary construction, frequent-word subsampling and window pair extraction.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::{math, SeededRng};

/// Token inventory with dense indices, sorted by descending count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index_of: BTreeMap<String, usize>,
    total: u64,
}

impl Vocabulary {
    /// Builds a vocabulary from `(token, count)` entries already in index order.
    pub fn from_entries(entries: Vec<(String, u64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyInput("vocabulary entries"));
        }
        let mut index_of = BTreeMap::new();
        let mut tokens = Vec::with_capacity(entries.len());
        let mut counts = Vec::with_capacity(entries.len());
        for (i, (tok, count)) in entries.into_iter().enumerate() {
            if index_of.insert(tok.clone(), i).is_some() {
                return Err(Error::InvalidArgument(alloc::format!(
                    "duplicate vocabulary token {tok:?}"
                )));
            }
            tokens.push(tok);
            counts.push(count);
        }
        let total = counts.iter().sum();
        Ok(Self {
            tokens,
            counts,
            index_of,
            total,
        })
    }

    /// Numeric vocabulary `"0".."n-1"` with the given counts, used for synthetic data.
    pub fn numeric(counts: &[u64]) -> Result<Self> {
        Self::from_entries(
            counts
                .iter()
                .enumerate()
                .map(|(i, &c)| (i.to_string(), c))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index_of.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn count(&self, index: usize) -> u64 {
        self.counts[index]
    }

    /// Relative frequency `count / total`.
    pub fn frequency(&self, index: usize) -> f64 {
        self.counts[index] as f64 / self.total as f64
    }
}

/// Counts tokens and keeps those occurring at least `min_count` times.
///
/// Indices follow descending count; equal counts are ordered lexicographically.
pub fn build_vocab<S: AsRef<str>>(tokens: &[S], min_count: u64) -> Result<Vocabulary> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput("token sequence"));
    }
    if min_count == 0 {
        return Err(Error::InvalidArgument(
            "min_count must be at least 1".into(),
        ));
    }
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for t in tokens {
        *counts.entry(t.as_ref()).or_insert(0) += 1;
    }
    // BTreeMap iteration is lexicographic, and the sort below is stable.
    let mut kept: Vec<(&str, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyVocabulary { min_count });
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1));
    Vocabulary::from_entries(kept.into_iter().map(|(t, c)| (t.to_string(), c)).collect())
}

/// Result of [`subsample`]: surviving tokens as vocabulary indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subsampled {
    pub indices: Vec<usize>,
    /// Tokens dropped because they are not in the vocabulary.
    pub out_of_vocab: usize,
}

/// Probability of keeping one occurrence of a token with relative frequency `freq`.
pub fn keep_probability(freq: f64, threshold: f64) -> f64 {
    if freq <= threshold {
        1.0
    } else {
        math::sqrt(threshold / freq).min(1.0)
    }
}

/// Discards each occurrence of token `w` with probability `max(0, 1 - sqrt(t / f(w)))`.
///
/// Tokens that are certain to be kept consume no randomness.
pub fn subsample<S: AsRef<str>, R: Rng + ?Sized>(
    tokens: &[S],
    vocab: &Vocabulary,
    threshold: f64,
    rng: &mut R,
) -> Result<Subsampled> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "subsampling threshold must be positive, got {threshold}"
        )));
    }
    let keep: Vec<f64> = (0..vocab.len())
        .map(|i| keep_probability(vocab.frequency(i), threshold))
        .collect();
    let mut out = Subsampled {
        indices: Vec::with_capacity(tokens.len()),
        out_of_vocab: 0,
    };
    for t in tokens {
        let Some(i) = vocab.index_of(t.as_ref()) else {
            out.out_of_vocab += 1;
            continue;
        };
        let p = keep[i];
        if p >= 1.0 || rng.random::<f64>() < p {
            out.indices.push(i);
        }
    }
    Ok(out)
}

/// One training record: an observed (word, context) pair and, for SGNS, its negatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairRecord {
    pub word: u32,
    pub context: u32,
    pub negatives: Option<Vec<u32>>,
}

impl PairRecord {
    pub fn new(word: usize, context: usize) -> Self {
        Self {
            word: word as u32,
            context: context as u32,
            negatives: None,
        }
    }

    pub fn with_negatives(word: usize, context: usize, negatives: Vec<u32>) -> Self {
        Self {
            word: word as u32,
            context: context as u32,
            negatives: Some(negatives),
        }
    }

    #[inline]
    pub fn word(&self) -> usize {
        self.word as usize
    }

    #[inline]
    pub fn context(&self) -> usize {
        self.context as usize
    }

    pub fn negatives(&self) -> &[u32] {
        self.negatives.as_deref().unwrap_or(&[])
    }
}

/// Ordered data series; the order is what sequential codelengths are computed over.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairStream {
    pub records: Vec<PairRecord>,
    pub order_seed: u64,
}

impl PairStream {
    pub fn new(records: Vec<PairRecord>, order_seed: u64) -> Self {
        Self {
            records,
            order_seed,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of negatives per record, if every record carries the same non-empty set.
    pub fn negatives_per_record(&self) -> Option<usize> {
        let first = self.records.first()?.negatives.as_ref()?.len();
        self.records
            .iter()
            .all(|r| r.negatives.as_ref().map(Vec::len) == Some(first))
            .then_some(first)
    }

    /// Checks every index against the vocabulary sizes.
    pub fn validate(&self, s_w: usize, s_c: usize) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            if r.word() >= s_w
                || r.context() >= s_c
                || r.negatives().iter().any(|&z| z as usize >= s_c)
            {
                return Err(Error::Record {
                    index: i,
                    source: alloc::boxed::Box::new(Error::Shape(alloc::format!(
                        "index out of range for S_W={s_w}, S_C={s_c}"
                    ))),
                });
            }
        }
        Ok(())
    }

    /// Occurrence count of every context index in `0..s_c`.
    pub fn context_counts(&self, s_c: usize) -> Vec<u64> {
        let mut counts = alloc::vec![0u64; s_c];
        for r in &self.records {
            counts[r.context()] += 1;
        }
        counts
    }
}

/// Emits `(tokens[i], tokens[i+o])` for every offset `o` in `±1..=±window`, then shuffles.
///
/// `tokens` are word-vocabulary indices (e.g. from [`subsample`]); positions whose
/// token is missing from either vocabulary produce no pair.
pub fn extract_pairs(
    tokens: &[usize],
    word_vocab: &Vocabulary,
    ctx_vocab: &Vocabulary,
    window: usize,
    seed: u64,
) -> Result<PairStream> {
    if window == 0 {
        return Err(Error::InvalidArgument("window must be at least 1".into()));
    }
    let same = word_vocab == ctx_vocab;
    let ctx_index = |wi: usize| -> Option<usize> {
        if same {
            Some(wi)
        } else {
            ctx_vocab.index_of(word_vocab.token(wi)?)
        }
    };
    let mut records = Vec::new();
    for (i, &w) in tokens.iter().enumerate() {
        if w >= word_vocab.len() {
            continue;
        }
        let lo = i.saturating_sub(window);
        let hi = (i + window).min(tokens.len().saturating_sub(1));
        for j in lo..=hi {
            if j == i {
                continue;
            }
            if let Some(c) = ctx_index(tokens[j]) {
                records.push(PairRecord::new(w, c));
            }
        }
    }
    let mut rng = SeededRng::seed_from_u64(seed);
    records.shuffle(&mut rng);
    Ok(PairStream::new(records, seed))
}

/// Partitions a stream into (train, validation), preserving stream order within each part.
pub fn split_holdout(
    stream: &PairStream,
    holdout_fraction: f64,
    seed: u64,
) -> Result<(PairStream, PairStream)> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::HoldoutFraction(holdout_fraction));
    }
    if stream.is_empty() {
        return Err(Error::EmptyInput("pair stream"));
    }
    let n = stream.len();
    let n_valid = libm::round(n as f64 * holdout_fraction) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = SeededRng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut is_valid = alloc::vec![false; n];
    for &i in &order[..n_valid] {
        is_valid[i] = true;
    }
    let mut train = Vec::with_capacity(n - n_valid);
    let mut valid = Vec::with_capacity(n_valid);
    for (r, v) in stream.records.iter().zip(is_valid) {
        if v {
            valid.push(r.clone());
        } else {
            train.push(r.clone());
        }
    }
    Ok((
        PairStream::new(train, stream.order_seed),
        PairStream::new(valid, stream.order_seed),
    ))
}

/// Noise distribution for negative sampling: `count^power`, renormalized.
pub fn negative_weights(ctx_counts: &[u64], power: f64) -> Vec<f64> {
    ctx_counts
        .iter()
        .map(|&c| math::powf(c as f64, power))
        .collect()
}

/// Gives every record `s_z` negatives drawn i.i.d. from `count^power`.
pub fn attach_negatives(
    stream: &PairStream,
    ctx_counts: &[u64],
    s_z: usize,
    power: f64,
    seed: u64,
) -> Result<PairStream> {
    if s_z == 0 {
        return Err(Error::InvalidArgument("S_z must be at least 1".into()));
    }
    let weights = negative_weights(ctx_counts, power);
    let dist = WeightedIndex::new(&weights)
        .map_err(|e| Error::InvalidArgument(alloc::format!("negative sampling weights: {e}")))?;
    let mut rng = SeededRng::seed_from_u64(seed);
    let records = stream
        .records
        .iter()
        .map(|r| {
            let negs = (0..s_z).map(|_| dist.sample(&mut rng) as u32).collect();
            PairRecord::with_negatives(r.word(), r.context(), negs)
        })
        .collect();
    Ok(PairStream::new(records, stream.order_seed))
}
