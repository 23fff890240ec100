//! Information criteria for choosing the embedding dimensionality: AIC, BIC,
//! held-out loss, and sequential NML codelengths.
//!
//! The SNML codelength of a record is
//!
//! ```text
//! -ln P(obs; theta_obs) + ln sum_{x} P(x; theta_x)
//! ```
//!
//! where `theta_x` is the running estimate re-fitted as if `x` had been observed.
//! Re-fitting is approximated by a few gradient steps from the running estimate
//! (warm start), and for oSG the sum over contexts may be estimated by importance
//! sampling.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};

use crate::corpus::PairRecord;
use crate::error::{Error, Result};
use crate::sgmodel::{
    osg_log_prob, osg_log_prob_parts, osg_step, record_items, sgns_labeled_log_prob_parts,
    sgns_log_prob, sgns_step, ModelKind, SkipGramParams,
};
use crate::{math, SeededRng};

/// `2k - 2 ln L` with `k = S_W*d + d*S_C`.
pub fn aic(log_lik: f64, dim: usize, s_w: usize, s_c: usize) -> f64 {
    2.0 * num_params(dim, s_w, s_c) - 2.0 * log_lik
}

/// `ln(n) k - 2 ln L` with `k = S_W*d + d*S_C`.
pub fn bic(log_lik: f64, n: usize, dim: usize, s_w: usize, s_c: usize) -> f64 {
    math::ln(n as f64) * num_params(dim, s_w, s_c) - 2.0 * log_lik
}

fn num_params(dim: usize, s_w: usize, s_c: usize) -> f64 {
    (s_w * dim + dim * s_c) as f64
}

/// Mean held-out negative log-likelihood per record (nats).
pub fn cv_loss(params: &SkipGramParams, holdout: &[PairRecord], kind: ModelKind) -> Result<f64> {
    if holdout.is_empty() {
        return Err(Error::EmptyInput("holdout stream"));
    }
    let total: f64 = match kind {
        ModelKind::Osg => holdout
            .iter()
            .map(|r| -osg_log_prob(params, r.word(), r.context()))
            .sum(),
        ModelKind::Sgns => holdout.iter().map(|r| -sgns_log_prob(params, r)).sum(),
    };
    Ok(total / holdout.len() as f64)
}

/// Copy of `params` advanced by `steps` gradient steps on the single record `rec`.
///
/// For SGNS the record is fitted with its observed labeling (context positive,
/// negatives negative).
pub fn warm_start(
    params: &SkipGramParams,
    rec: &PairRecord,
    steps: usize,
    lr: f64,
    kind: ModelKind,
) -> SkipGramParams {
    let mut out = params.clone();
    advance(&mut out, rec, steps, lr, kind);
    out
}

fn advance(params: &mut SkipGramParams, rec: &PairRecord, steps: usize, lr: f64, kind: ModelKind) {
    let dim = params.dim();
    let s_c = params.s_c();
    let mut grad_e = vec![0.0; dim];
    match kind {
        ModelKind::Osg => {
            let mut scores = vec![0.0; s_c];
            let (e, out) = params.split_mut(rec.word());
            for _ in 0..steps {
                osg_step(e, out, dim, rec.context(), lr, &mut scores, &mut grad_e);
            }
        }
        ModelKind::Sgns => {
            let items = record_items(rec);
            let mut coeffs = Vec::new();
            let (e, out) = params.split_mut(rec.word());
            for _ in 0..steps {
                sgns_step(e, out, dim, &items, 0, lr, &mut coeffs, &mut grad_e);
            }
        }
    }
}

/// Proposal distribution `Q` over contexts for importance sampling.
#[derive(Debug, Clone, PartialEq)]
pub enum Proposal {
    Uniform,
    Weighted {
        probs: Vec<f64>,
        index: WeightedIndex<f64>,
    },
}

impl Proposal {
    /// Normalizes `weights`; every weight must be positive.
    pub fn weighted(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(
                "proposal must put positive mass on every context".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let index = WeightedIndex::new(&probs)
            .map_err(|e| Error::InvalidArgument(alloc::format!("proposal: {e}")))?;
        Ok(Proposal::Weighted { probs, index })
    }

    /// `Q(c)` for a support of size `s_c`.
    pub fn prob(&self, c: usize, s_c: usize) -> f64 {
        match self {
            Proposal::Uniform => 1.0 / s_c as f64,
            Proposal::Weighted { probs, .. } => probs[c],
        }
    }

    fn draw<R: Rng + ?Sized>(&self, s_c: usize, rng: &mut R) -> usize {
        match self {
            Proposal::Uniform => rng.random_range(0..s_c),
            Proposal::Weighted { index, .. } => index.sample(rng),
        }
    }

    fn check(&self, s_c: usize) -> Result<()> {
        match self {
            Proposal::Weighted { probs, .. } if probs.len() != s_c => Err(Error::Shape(
                alloc::format!("proposal has {} entries for {s_c} contexts", probs.len()),
            )),
            _ => Ok(()),
        }
    }
}

/// Sample size and proposal for the context normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    /// Number of draws; `m >= S_C` switches to exact enumeration.
    pub m: usize,
    pub proposal: Proposal,
}

impl SamplerConfig {
    /// Uniform proposal with `m = ceil(S_C / 10)`.
    pub fn default_for(s_c: usize) -> Self {
        Self {
            m: s_c.div_ceil(10).max(1),
            proposal: Proposal::Uniform,
        }
    }

    pub fn exact(s_c: usize) -> Self {
        Self {
            m: s_c,
            proposal: Proposal::Uniform,
        }
    }

    pub fn uniform(m: usize) -> Self {
        Self {
            m,
            proposal: Proposal::Uniform,
        }
    }

    pub fn is_exact(&self, s_c: usize) -> bool {
        self.m >= s_c
    }
}

/// Estimates `sum_c f(c)` over `0..s_c` as `(1/m) sum_{c ~ Q} f(c) / Q(c)`.
///
/// With `m >= s_c` the sum is enumerated exactly in ascending order instead.
pub fn pc_estimate<F, R>(
    mut f: F,
    proposal: &Proposal,
    s_c: usize,
    m: usize,
    rng: &mut R,
) -> Result<f64>
where
    F: FnMut(usize) -> Result<f64>,
    R: Rng + ?Sized,
{
    if m == 0 {
        return Err(Error::InvalidArgument(
            "sample size m must be at least 1".into(),
        ));
    }
    proposal.check(s_c)?;
    if m >= s_c {
        let mut total = 0.0;
        for c in 0..s_c {
            total += f(c)?;
        }
        return Ok(total);
    }
    let mut total = 0.0;
    for _ in 0..m {
        let c = proposal.draw(s_c, rng);
        total += f(c)? / proposal.prob(c, s_c);
    }
    Ok(total / m as f64)
}

/// Which labelings the SGNS normalizer sums over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SgnsOutcomes {
    /// One-hot positive at each of the `S_z + 1` item positions.
    #[default]
    AllPositions,
    /// One-hot positive at the first `S_z` positions only.
    FirstSz,
}

/// Codelength of one record, split into its two terms (nats).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordCode {
    /// `-ln P(observed; theta re-fitted on observed)`.
    pub neg_log_numerator: f64,
    /// `ln sum_x P(x; theta re-fitted on x)`, possibly estimated.
    pub log_denominator: f64,
}

impl RecordCode {
    pub fn codelength(&self) -> f64 {
        self.neg_log_numerator + self.log_denominator
    }
}

/// Scratch state for evaluating oSG candidates against a shared base snapshot.
struct OsgScratch {
    e: Vec<f64>,
    out: Vec<f64>,
    scores: Vec<f64>,
    grad_e: Vec<f64>,
}

impl OsgScratch {
    fn new(params: &SkipGramParams) -> Self {
        Self {
            e: vec![0.0; params.dim()],
            out: vec![0.0; params.outputs().len()],
            scores: vec![0.0; params.s_c()],
            grad_e: vec![0.0; params.dim()],
        }
    }

    /// `ln P(c | w)` after `steps` warm-start steps on `(w, c)`.
    fn refit_log_prob(
        &mut self,
        params: &SkipGramParams,
        w: usize,
        c: usize,
        steps: usize,
        lr: f64,
    ) -> f64 {
        let dim = params.dim();
        self.e.copy_from_slice(params.input_row(w));
        self.out.copy_from_slice(params.outputs());
        for _ in 0..steps {
            osg_step(
                &mut self.e,
                &mut self.out,
                dim,
                c,
                lr,
                &mut self.scores,
                &mut self.grad_e,
            );
        }
        osg_log_prob_parts(&self.e, &self.out, dim, c, &mut self.scores)
    }
}

/// Per-record oSG SNML codelength.
pub fn snml_record_osg<R: Rng + ?Sized>(
    params: &SkipGramParams,
    w: usize,
    c_obs: usize,
    sampler: &SamplerConfig,
    steps: usize,
    lr: f64,
    rng: &mut R,
) -> Result<RecordCode> {
    let mut scratch = OsgScratch::new(params);
    snml_record_osg_with(params, w, c_obs, sampler, steps, lr, rng, &mut scratch)
}

#[allow(clippy::too_many_arguments)]
fn snml_record_osg_with<R: Rng + ?Sized>(
    params: &SkipGramParams,
    w: usize,
    c_obs: usize,
    sampler: &SamplerConfig,
    steps: usize,
    lr: f64,
    rng: &mut R,
    scratch: &mut OsgScratch,
) -> Result<RecordCode> {
    let s_c = params.s_c();
    if w >= params.s_w() || c_obs >= s_c {
        return Err(Error::Shape(alloc::format!(
            "record ({w}, {c_obs}) out of range"
        )));
    }
    let mut obs_log_prob = None;
    let denominator = pc_estimate(
        |c| {
            let lp = scratch.refit_log_prob(params, w, c, steps, lr);
            if !lp.is_finite() {
                return Err(Error::NonFiniteCandidate { context: c });
            }
            if c == c_obs {
                obs_log_prob = Some(lp);
            }
            Ok(math::exp(lp))
        },
        &sampler.proposal,
        s_c,
        sampler.m,
        rng,
    )?;
    let obs = match obs_log_prob {
        Some(lp) => lp,
        None => {
            let lp = scratch.refit_log_prob(params, w, c_obs, steps, lr);
            if !lp.is_finite() {
                return Err(Error::NonFiniteCandidate { context: c_obs });
            }
            lp
        }
    };
    let log_denominator = math::ln(denominator);
    if !log_denominator.is_finite() {
        return Err(Error::NonFiniteCandidate { context: c_obs });
    }
    Ok(RecordCode {
        neg_log_numerator: -obs,
        log_denominator,
    })
}

/// Per-record SGNS SNML codelength; the labeling sum is enumerated exactly.
pub fn snml_record_sgns(
    params: &SkipGramParams,
    rec: &PairRecord,
    steps: usize,
    lr: f64,
    outcomes: SgnsOutcomes,
) -> Result<RecordCode> {
    let w = rec.word();
    if rec.negatives().is_empty() {
        return Err(Error::InvalidArgument(
            "SGNS record has no negatives".into(),
        ));
    }
    if w >= params.s_w() || record_items(rec).iter().any(|&c| c >= params.s_c()) {
        return Err(Error::Shape("record index out of range".into()));
    }
    let dim = params.dim();
    let items = record_items(rec);
    let mut uniq: Vec<usize> = items.clone();
    uniq.sort_unstable();
    uniq.dedup();
    let slots: Vec<usize> = items
        .iter()
        .map(|c| uniq.binary_search(c).expect("present"))
        .collect();
    let mut base_rows = vec![0.0; uniq.len() * dim];
    for (i, &c) in uniq.iter().enumerate() {
        base_rows[i * dim..(i + 1) * dim].copy_from_slice(params.output_row(c));
    }
    let n_outcomes = match outcomes {
        SgnsOutcomes::AllPositions => items.len(),
        SgnsOutcomes::FirstSz => items.len() - 1,
    };
    let mut e = vec![0.0; dim];
    let mut rows = base_rows.clone();
    let mut coeffs = Vec::new();
    let mut grad_e = vec![0.0; dim];
    let mut log_probs = Vec::with_capacity(n_outcomes);
    for k in 0..n_outcomes {
        e.copy_from_slice(params.input_row(w));
        rows.copy_from_slice(&base_rows);
        for _ in 0..steps {
            sgns_step(
                &mut e,
                &mut rows,
                dim,
                &slots,
                k,
                lr,
                &mut coeffs,
                &mut grad_e,
            );
        }
        let lp = sgns_labeled_log_prob_parts(&e, &rows, dim, &slots, k);
        if !lp.is_finite() {
            return Err(Error::NonFiniteCandidate { context: items[k] });
        }
        log_probs.push(lp);
    }
    Ok(RecordCode {
        neg_log_numerator: -log_probs[0],
        log_denominator: math::log_sum_exp(&log_probs),
    })
}

/// Step size of the per-record warm start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WarmStartLr {
    Fixed(f64),
    /// `1 / (steps * n / S_W)`: the whole warm start moves a word's parameters by about
    /// one record's share of that word's `n / S_W` training records.
    CountScaled,
}

impl WarmStartLr {
    /// Resolves the step size for a model trained on `n` records over `s_w` words.
    pub fn resolve(self, steps: usize, n: usize, s_w: usize) -> f64 {
        match self {
            WarmStartLr::Fixed(lr) => lr,
            WarmStartLr::CountScaled => {
                let per_word = (n.max(1) as f64 / s_w.max(1) as f64).max(1.0);
                1.0 / (steps.max(1) as f64 * per_word)
            }
        }
    }
}

/// Settings shared by every scored record.
#[derive(Debug, Clone, PartialEq)]
pub struct SnmlConfig {
    pub steps: usize,
    pub lr: WarmStartLr,
    pub sampler: SamplerConfig,
    pub outcomes: SgnsOutcomes,
    pub seed: u64,
}

impl SnmlConfig {
    /// 20 count-scaled warm-start steps, uniform proposal with `m = ceil(S_C/10)`.
    pub fn defaults(s_c: usize) -> Self {
        Self {
            steps: 20,
            lr: WarmStartLr::CountScaled,
            sampler: SamplerConfig::default_for(s_c),
            outcomes: SgnsOutcomes::AllPositions,
            seed: 0,
        }
    }
}

/// Per-record SNML codelengths of one candidate dimensionality.
#[derive(Debug, Clone, PartialEq)]
pub struct CodelengthLedger {
    pub dim: usize,
    pub per_record: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub records_used: usize,
    pub sampler_size: usize,
    pub seed: u64,
}

impl CodelengthLedger {
    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

/// Scores the last `s` records sequentially. After each record the running params
/// are advanced by a warm start on the observed record.
pub fn snml_tail(
    records: &[PairRecord],
    params_at_tail: SkipGramParams,
    s: usize,
    config: &SnmlConfig,
    kind: ModelKind,
) -> Result<CodelengthLedger> {
    if s > records.len() {
        return Err(Error::InvalidArgument(alloc::format!(
            "cannot score {s} records from a stream of {}",
            records.len()
        )));
    }
    let mut params = params_at_tail;
    let lr = config
        .lr
        .resolve(config.steps, records.len() - s, params.s_w());
    let mut rng = SeededRng::seed_from_u64(config.seed);
    let mut scratch = OsgScratch::new(&params);
    let mut per_record = Vec::with_capacity(s);
    let mut cumulative = Vec::with_capacity(s);
    let mut running = 0.0;
    let start = records.len() - s;
    for (i, rec) in records[start..].iter().enumerate() {
        let code = match kind {
            ModelKind::Osg => snml_record_osg_with(
                &params,
                rec.word(),
                rec.context(),
                &config.sampler,
                config.steps,
                lr,
                &mut rng,
                &mut scratch,
            ),
            ModelKind::Sgns => snml_record_sgns(&params, rec, config.steps, lr, config.outcomes),
        }
        .map_err(|e| Error::Record {
            index: start + i,
            source: alloc::boxed::Box::new(e),
        })?;
        let len = code.codelength();
        running += len;
        per_record.push(len);
        cumulative.push(running);
        advance(&mut params, rec, config.steps, lr, kind);
    }
    Ok(CodelengthLedger {
        dim: params.dim(),
        per_record,
        cumulative,
        records_used: s,
        sampler_size: match kind {
            ModelKind::Osg => config.sampler.m.min(params.s_c()),
            ModelKind::Sgns => 0,
        },
        seed: config.seed,
    })
}

/// `L(D'; a) - L(D'; b)` after each scored record.
pub fn cumulative_diff(a: &CodelengthLedger, b: &CodelengthLedger) -> Vec<f64> {
    a.cumulative
        .iter()
        .zip(&b.cumulative)
        .map(|(x, y)| x - y)
        .collect()
}

/// Number of sign changes along a curve; exact zeros do not count as a sign.
pub fn sign_flips(curve: &[f64]) -> usize {
    let mut flips = 0;
    let mut last = 0.0_f64;
    for &v in curve {
        if v == 0.0 || v.is_nan() {
            continue;
        }
        if last != 0.0 && v.signum() != last.signum() {
            flips += 1;
        }
        last = v;
    }
    flips
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Criterion {
    Aic,
    Bic,
    Cv,
    Snml,
    /// Ground-truth divergence (synthetic data only); lower is better.
    Oracle,
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Criterion::Aic => "AIC",
            Criterion::Bic => "BIC",
            Criterion::Cv => "CV",
            Criterion::Snml => "SNML",
            Criterion::Oracle => "ORACLE",
        }
    }
}

impl core::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            "cv" => Ok(Criterion::Cv),
            "snml" => Ok(Criterion::Snml),
            "oracle" => Ok(Criterion::Oracle),
            other => Err(Error::InvalidArgument(alloc::format!(
                "unknown criterion {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    pub criterion: Criterion,
    pub values: BTreeMap<usize, f64>,
    pub chosen_dim: usize,
    pub n: usize,
    pub s: usize,
    pub m: usize,
    pub seeds: Vec<u64>,
}

/// Picks the dimension with the smallest value; ties go to the smaller dimension.
/// NaN values never win.
pub fn select_dimension(
    criterion: Criterion,
    values: &BTreeMap<usize, f64>,
) -> Result<CriterionReport> {
    let mut best: Option<(usize, f64)> = None;
    for (&d, &v) in values {
        if v.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if v >= b => {}
            _ => best = Some((d, v)),
        }
    }
    let (chosen_dim, _) = best.ok_or(Error::EmptyInput("criterion values"))?;
    Ok(CriterionReport {
        criterion,
        values: values.clone(),
        chosen_dim,
        n: 0,
        s: 0,
        m: 0,
        seeds: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(usize, f64)]) -> BTreeMap<usize, f64> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn aic_bic_arithmetic() {
        assert_eq!(aic(0.0, 1, 2, 3), 10.0);
        assert_eq!(aic(-100.0, 0, 2, 3), 200.0);
        assert_eq!(bic(-7.5, 1, 4, 9, 9), 15.0);
        // n = round(e^2) = 7, so the penalty is 2 ln 7 rather than exactly 4.
        assert!((bic(0.0, 7, 1, 1, 1) - 2.0 * math::ln(7.0)).abs() < 1e-15);
        assert!((bic(0.0, 7, 1, 1, 1) - 4.0).abs() < 0.11);
    }

    #[test]
    fn selection_argmin_and_ties() {
        let r =
            select_dimension(Criterion::Snml, &map(&[(10, 5.0), (15, 4.0), (20, 4.5)])).unwrap();
        assert_eq!(r.chosen_dim, 15);
        let r = select_dimension(Criterion::Snml, &map(&[(10, 4.0), (15, 4.0)])).unwrap();
        assert_eq!(r.chosen_dim, 10);
        assert!(select_dimension(Criterion::Aic, &BTreeMap::new()).is_err());
        let r = select_dimension(Criterion::Cv, &map(&[(5, f64::NAN), (10, 1.0)])).unwrap();
        assert_eq!(r.chosen_dim, 10);
    }

    #[test]
    fn pc_estimate_zero_variance_and_exact() {
        let mut rng = SeededRng::seed_from_u64(0);
        let est = pc_estimate(|_| Ok(0.25), &Proposal::Uniform, 12, 3, &mut rng).unwrap();
        assert!((est - 3.0).abs() < 1e-12);
        let f = |c: usize| Ok((c as f64 + 1.0) * 0.1);
        let exact = pc_estimate(f, &Proposal::Uniform, 5, 5, &mut rng).unwrap();
        assert_eq!(exact, 0.1 + 0.2 + 0.30000000000000004 + 0.4 + 0.5);
        assert!(pc_estimate(f, &Proposal::Uniform, 5, 0, &mut rng).is_err());
        assert!(Proposal::weighted(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn count_scaled_lr() {
        // 20 steps, 1000 records over 10 words: 100 records per word
        assert!((WarmStartLr::CountScaled.resolve(20, 1000, 10) - 1.0 / 2000.0).abs() < 1e-18);
        assert_eq!(WarmStartLr::CountScaled.resolve(4, 2, 10), 0.25);
        assert_eq!(WarmStartLr::Fixed(0.3).resolve(20, 1000, 10), 0.3);
    }

    #[test]
    fn sign_flip_counting() {
        assert_eq!(sign_flips(&[1.0, 2.0, -1.0, 0.0, -2.0, 3.0]), 2);
        assert_eq!(sign_flips(&[]), 0);
        assert_eq!(sign_flips(&[0.0, -1.0, -1.0]), 0);
    }

    #[test]
    fn empty_tail() {
        let p = SkipGramParams::zeros(2, 3, 2);
        let recs = [PairRecord::new(0, 1)];
        let cfg = SnmlConfig::defaults(3);
        let l = snml_tail(&recs, p.clone(), 0, &cfg, ModelKind::Osg).unwrap();
        assert!(l.per_record.is_empty());
        assert_eq!(l.total(), 0.0);
        assert!(snml_tail(&recs, p, 2, &cfg, ModelKind::Osg).is_err());
    }

    #[test]
    fn sgns_symmetric_outcomes_give_uniform_code() {
        let p = SkipGramParams::zeros(1, 20, 3);
        let negs: Vec<u32> = (1..16).collect();
        let rec = PairRecord::with_negatives(0, 0, negs);
        let code = snml_record_sgns(&p, &rec, 0, 0.0, SgnsOutcomes::AllPositions).unwrap();
        assert!((code.codelength() - math::ln(16.0)).abs() < 1e-12);
        let code = snml_record_sgns(&p, &rec, 5, 0.0, SgnsOutcomes::FirstSz).unwrap();
        assert!((code.codelength() - math::ln(15.0)).abs() < 1e-12);
    }
}
