//! Quality measures: divergence from synthetic truth, rank agreement, word
//! analogy (3CosAdd) and word similarity.

use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::math;
use crate::sgmodel::{predictive_dist_osg, sgns_positive_probs, SkipGramParams};
use crate::synthgen::SyntheticTruth;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    /// Mean `KL(P_oSG(.|w) || P~(.|w))`; lower is better.
    DissimilarOsg,
    /// Mean Spearman correlation of `sigma(w.c)` with `P~(.|w)`; higher is better.
    SimilarSgns,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleScore {
    pub kind: OracleKind,
    pub value: f64,
    pub per_word: Vec<f64>,
    /// Words whose correlation was undefined and recorded as 0.
    pub undefined_words: usize,
}

fn check_shapes(params: &SkipGramParams, truth: &SyntheticTruth) -> Result<()> {
    if params.s_w() != truth.s_w() || params.s_c() != truth.s_c() {
        return Err(Error::Shape(alloc::format!(
            "params are {}x{} but truth is {}x{}",
            params.s_w(),
            params.s_c(),
            truth.s_w(),
            truth.s_c()
        )));
    }
    Ok(())
}

/// `KL(p || q)` in nats. Cells with `p = 0` contribute nothing; `q = 0` where `p > 0`
/// is reported as the offending index.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> core::result::Result<f64, usize> {
    let mut kl = 0.0;
    for (c, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(c);
            }
            kl += pi * math::ln(pi / qi);
        }
    }
    Ok(kl)
}

/// Mean KL divergence of the model's contextual distributions from the truth.
///
/// With `smoothing = Some(eps)`, truth rows get `eps` added to every cell and are
/// renormalized before comparison.
pub fn dissimilar_osg(
    params: &SkipGramParams,
    truth: &SyntheticTruth,
    smoothing: Option<f64>,
) -> Result<OracleScore> {
    check_shapes(params, truth)?;
    let mut per_word = Vec::with_capacity(truth.s_w());
    for (w, row) in truth.dist.iter().enumerate() {
        let model = predictive_dist_osg(params, w);
        let smoothed;
        let target: &[f64] = match smoothing {
            Some(eps) => {
                let total: f64 = row.iter().map(|p| p + eps).sum();
                smoothed = row.iter().map(|p| (p + eps) / total).collect::<Vec<_>>();
                &smoothed
            }
            None => row,
        };
        let kl = kl_divergence(&model, target).map_err(|c| Error::ZeroTruth {
            word: w,
            context: c,
        })?;
        per_word.push(kl.max(0.0));
    }
    let value = per_word.iter().sum::<f64>() / per_word.len() as f64;
    Ok(OracleScore {
        kind: OracleKind::DissimilarOsg,
        value,
        per_word,
        undefined_words: 0,
    })
}

/// Mean Spearman correlation between `sigma(w^T E F c)` and `P~(c|w)` across contexts.
pub fn similar_sgns(params: &SkipGramParams, truth: &SyntheticTruth) -> Result<OracleScore> {
    check_shapes(params, truth)?;
    if truth.s_c() < 3 {
        return Err(Error::InvalidArgument(
            "rank correlation needs S_C >= 3".into(),
        ));
    }
    let mut per_word = Vec::with_capacity(truth.s_w());
    let mut undefined = 0;
    for (w, row) in truth.dist.iter().enumerate() {
        let probs = sgns_positive_probs(params, w);
        match spearman(&probs, row) {
            Ok(rho) => per_word.push(rho),
            Err(Error::ConstantInput) => {
                undefined += 1;
                per_word.push(0.0);
            }
            Err(e) => return Err(e),
        }
    }
    let value = per_word.iter().sum::<f64>() / per_word.len() as f64;
    Ok(OracleScore {
        kind: OracleKind::SimilarSgns,
        value,
        per_word,
        undefined_words: undefined,
    })
}

/// 1-based fractional ranks; tied values share the mean of their positions.
pub fn fractional_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / math::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Tie-corrected Spearman correlation: Pearson correlation of fractional ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Shape(alloc::format!(
            "lengths {} and {} differ",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 3 {
        return Err(Error::InvalidArgument(
            "Spearman correlation needs at least 3 points".into(),
        ));
    }
    if xs.iter().chain(ys).any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument(
            "NaN in rank correlation input".into(),
        ));
    }
    pearson(&fractional_ranks(xs), &fractional_ranks(ys)).ok_or(Error::ConstantInput)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskScore {
    pub score: f64,
    pub attempted: usize,
    pub skipped: usize,
}

/// 3CosAdd answer to `a : b :: c : ?` over rows of `E`, excluding the three inputs.
pub fn analogy_answer(params: &SkipGramParams, a: usize, b: usize, c: usize) -> usize {
    let dim = params.dim();
    let target: Vec<f64> = (0..dim)
        .map(|k| params.input_row(b)[k] - params.input_row(a)[k] + params.input_row(c)[k])
        .collect();
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for w in 0..params.s_w() {
        if w == a || w == b || w == c {
            continue;
        }
        let sim = math::cosine(&target, params.input_row(w));
        if sim > best.1 || best.0 == usize::MAX {
            best = (w, sim);
        }
    }
    best.0
}

/// Fraction of analogy questions answered correctly by 3CosAdd; questions with a
/// token outside the vocabulary are skipped.
pub fn analogy_score<S: AsRef<str>>(
    params: &SkipGramParams,
    questions: &[[S; 4]],
    vocab: &Vocabulary,
) -> Result<TaskScore> {
    if questions.is_empty() {
        return Err(Error::EmptyInput("analogy questions"));
    }
    let mut correct = 0;
    let mut attempted = 0;
    let mut skipped = 0;
    for q in questions {
        let ids: Option<Vec<usize>> = q
            .iter()
            .map(|t| vocab.index_of(t.as_ref()).filter(|&i| i < params.s_w()))
            .collect();
        let Some(ids) = ids else {
            skipped += 1;
            continue;
        };
        attempted += 1;
        if analogy_answer(params, ids[0], ids[1], ids[2]) == ids[3] {
            correct += 1;
        }
    }
    if attempted == 0 {
        return Err(Error::AllOutOfVocabulary(skipped));
    }
    Ok(TaskScore {
        score: correct as f64 / attempted as f64,
        attempted,
        skipped,
    })
}

/// Human-rated word pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityPair {
    pub word_a: alloc::string::String,
    pub word_b: alloc::string::String,
    pub human_score: f64,
}

/// Spearman correlation between embedding cosines (rows of `E`) and human scores.
pub fn similarity_task_score(
    params: &SkipGramParams,
    pairs: &[SimilarityPair],
    vocab: &Vocabulary,
) -> Result<TaskScore> {
    let mut model = Vec::new();
    let mut human = Vec::new();
    let mut skipped = 0;
    for p in pairs {
        let a = vocab.index_of(&p.word_a).filter(|&i| i < params.s_w());
        let b = vocab.index_of(&p.word_b).filter(|&i| i < params.s_w());
        match (a, b) {
            (Some(a), Some(b)) if p.human_score.is_finite() => {
                model.push(math::cosine(params.input_row(a), params.input_row(b)));
                human.push(p.human_score);
            }
            _ => skipped += 1,
        }
    }
    if model.len() < 3 {
        return Err(Error::TooFewPairs(model.len()));
    }
    Ok(TaskScore {
        score: spearman(&model, &human)?,
        attempted: model.len(),
        skipped,
    })
}
