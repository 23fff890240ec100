//! oSG (full softmax) and SGNS (negative sampling) models: likelihoods,
//! gradients and the training loops.
//!
//! Parameters are `E` (`S_W x d`, input embeddings) and `F` (`d x S_C`, output
//! embeddings). `F` is stored transposed so that the output vector of each context
//! is contiguous; [`SkipGramParams::f_matrix`] returns it in `d x S_C` layout.

use alloc::vec;
use alloc::vec::Vec;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;

use crate::corpus::PairRecord;
use crate::error::{Error, Result};
use crate::{math, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Osg,
    Sgns,
}

impl ModelKind {
    /// Numeric tag used by the params file.
    pub fn code(self) -> u32 {
        match self {
            ModelKind::Osg => 0,
            ModelKind::Sgns => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(ModelKind::Osg),
            1 => Some(ModelKind::Sgns),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Osg => "osg",
            ModelKind::Sgns => "sgns",
        }
    }
}

impl core::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "osg" => Ok(ModelKind::Osg),
            "sgns" => Ok(ModelKind::Sgns),
            other => Err(Error::InvalidArgument(alloc::format!(
                "unknown model kind {other:?}"
            ))),
        }
    }
}

impl core::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipGramParams {
    s_w: usize,
    s_c: usize,
    dim: usize,
    input: Vec<f64>,
    output: Vec<f64>,
}

impl SkipGramParams {
    pub fn zeros(s_w: usize, s_c: usize, dim: usize) -> Self {
        Self {
            s_w,
            s_c,
            dim,
            input: vec![0.0; s_w * dim],
            output: vec![0.0; s_c * dim],
        }
    }

    /// Entries i.i.d. uniform in `[-init_scale/d, init_scale/d]`.
    pub fn init(s_w: usize, s_c: usize, dim: usize, init_scale: f64, seed: u64) -> Result<Self> {
        if dim == 0 || s_w == 0 || s_c == 0 {
            return Err(Error::InvalidArgument(
                "S_W, S_C and d must be positive".into(),
            ));
        }
        if !(init_scale >= 0.0) || !init_scale.is_finite() {
            return Err(Error::InvalidArgument(
                "init_scale must be finite and non-negative".into(),
            ));
        }
        let mut p = Self::zeros(s_w, s_c, dim);
        if init_scale == 0.0 {
            return Ok(p);
        }
        let bound = init_scale / dim as f64;
        let dist = Uniform::new_inclusive(-bound, bound)
            .map_err(|e| Error::InvalidArgument(alloc::format!("{e}")))?;
        let mut rng = SeededRng::seed_from_u64(seed);
        for x in p.input.iter_mut().chain(p.output.iter_mut()) {
            *x = dist.sample(&mut rng);
        }
        Ok(p)
    }

    /// Builds params from `E` (row-major `S_W x d`) and `F` (row-major `d x S_C`).
    pub fn from_matrices(
        s_w: usize,
        s_c: usize,
        dim: usize,
        e: Vec<f64>,
        f: &[f64],
    ) -> Result<Self> {
        if e.len() != s_w * dim || f.len() != dim * s_c {
            return Err(Error::Shape(alloc::format!(
                "expected E {s_w}x{dim} and F {dim}x{s_c}, got {} and {} entries",
                e.len(),
                f.len()
            )));
        }
        let mut output = vec![0.0; s_c * dim];
        for k in 0..dim {
            for c in 0..s_c {
                output[c * dim + k] = f[k * s_c + c];
            }
        }
        Ok(Self {
            s_w,
            s_c,
            dim,
            input: e,
            output,
        })
    }

    pub fn s_w(&self) -> usize {
        self.s_w
    }

    pub fn s_c(&self) -> usize {
        self.s_c
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of free parameters, `S_W*d + d*S_C`.
    pub fn num_params(&self) -> usize {
        (self.s_w + self.s_c) * self.dim
    }

    /// `E` in row-major `S_W x d` layout.
    pub fn e_matrix(&self) -> &[f64] {
        &self.input
    }

    /// `F` in row-major `d x S_C` layout.
    pub fn f_matrix(&self) -> Vec<f64> {
        let mut f = vec![0.0; self.dim * self.s_c];
        for c in 0..self.s_c {
            for k in 0..self.dim {
                f[k * self.s_c + c] = self.output[c * self.dim + k];
            }
        }
        f
    }

    pub fn input_row(&self, w: usize) -> &[f64] {
        &self.input[w * self.dim..(w + 1) * self.dim]
    }

    pub fn input_row_mut(&mut self, w: usize) -> &mut [f64] {
        &mut self.input[w * self.dim..(w + 1) * self.dim]
    }

    /// Column `c` of `F`.
    pub fn output_row(&self, c: usize) -> &[f64] {
        &self.output[c * self.dim..(c + 1) * self.dim]
    }

    pub fn output_row_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.output[c * self.dim..(c + 1) * self.dim]
    }

    /// All context vectors, `S_C x d` row-major (i.e. `F` transposed).
    pub fn outputs(&self) -> &[f64] {
        &self.output
    }

    /// `w^T E F c`.
    pub fn score(&self, w: usize, c: usize) -> f64 {
        math::dot(self.input_row(w), self.output_row(c))
    }

    /// Scores of word `w` against every context.
    pub fn scores(&self, w: usize) -> Vec<f64> {
        let mut s = vec![0.0; self.s_c];
        scores_into(self.input_row(w), &self.output, self.dim, &mut s);
        s
    }

    pub fn is_finite(&self) -> bool {
        self.input.iter().chain(&self.output).all(|x| x.is_finite())
    }

    pub(crate) fn split_mut(&mut self, w: usize) -> (&mut [f64], &mut [f64]) {
        let d = self.dim;
        (&mut self.input[w * d..(w + 1) * d], &mut self.output)
    }

    fn check_word(&self, w: usize) {
        assert!(
            w < self.s_w,
            "word index {w} out of range (S_W={})",
            self.s_w
        );
    }
}

/// `scores[c] = e . outputs[c]` for every context row.
pub(crate) fn scores_into(e: &[f64], outputs: &[f64], dim: usize, scores: &mut [f64]) {
    for (s, o) in scores.iter_mut().zip(outputs.chunks_exact(dim)) {
        *s = math::dot(e, o);
    }
}

/// oSG log-probability of context `c` from one input row and the full output matrix.
pub(crate) fn osg_log_prob_parts(
    e: &[f64],
    outputs: &[f64],
    dim: usize,
    c: usize,
    scores: &mut [f64],
) -> f64 {
    scores_into(e, outputs, dim, scores);
    scores[c] - math::log_sum_exp(scores)
}

/// One gradient step on `-ln P_oSG(c | w)`; returns the pre-step log-probability.
pub(crate) fn osg_step(
    e: &mut [f64],
    outputs: &mut [f64],
    dim: usize,
    c: usize,
    lr: f64,
    scores: &mut [f64],
    grad_e: &mut [f64],
) -> f64 {
    scores_into(e, outputs, dim, scores);
    let lse = math::log_sum_exp(scores);
    let log_prob = scores[c] - lse;
    for s in scores.iter_mut() {
        *s = math::exp(*s - lse);
    }
    scores[c] -= 1.0;
    grad_e.fill(0.0);
    for (&g, o) in scores.iter().zip(outputs.chunks_exact(dim)) {
        for (ge, &ov) in grad_e.iter_mut().zip(o) {
            *ge += g * ov;
        }
    }
    for (&g, o) in scores.iter().zip(outputs.chunks_exact_mut(dim)) {
        let step = lr * g;
        for (ov, &ev) in o.iter_mut().zip(e.iter()) {
            *ov -= step * ev;
        }
    }
    for (ev, &ge) in e.iter_mut().zip(grad_e.iter()) {
        *ev -= lr * ge;
    }
    log_prob
}

/// Log-probability of the labeling that marks item `positive` as observed and the
/// rest as negatives. `slots[j]` is the row of item `j` in `rows`.
pub(crate) fn sgns_labeled_log_prob_parts(
    e: &[f64],
    rows: &[f64],
    dim: usize,
    slots: &[usize],
    positive: usize,
) -> f64 {
    slots
        .iter()
        .enumerate()
        .map(|(j, &slot)| {
            let s = math::dot(e, &rows[slot * dim..(slot + 1) * dim]);
            if j == positive {
                math::log_sigmoid(s)
            } else {
                math::log_sigmoid(-s)
            }
        })
        .sum()
}

/// One gradient step on the negative log-likelihood of a labeling; returns the
/// pre-step log-probability. Repeated slots accumulate both contributions.
pub(crate) fn sgns_step(
    e: &mut [f64],
    rows: &mut [f64],
    dim: usize,
    slots: &[usize],
    positive: usize,
    lr: f64,
    coeffs: &mut Vec<f64>,
    grad_e: &mut [f64],
) -> f64 {
    coeffs.clear();
    let mut log_prob = 0.0;
    for (j, &slot) in slots.iter().enumerate() {
        let s = math::dot(e, &rows[slot * dim..(slot + 1) * dim]);
        if j == positive {
            log_prob += math::log_sigmoid(s);
            coeffs.push(-math::sigmoid(-s));
        } else {
            log_prob += math::log_sigmoid(-s);
            coeffs.push(math::sigmoid(s));
        }
    }
    grad_e.fill(0.0);
    for (&g, &slot) in coeffs.iter().zip(slots) {
        for (ge, &rv) in grad_e.iter_mut().zip(&rows[slot * dim..(slot + 1) * dim]) {
            *ge += g * rv;
        }
    }
    for (&g, &slot) in coeffs.iter().zip(slots) {
        let step = lr * g;
        for (rv, &ev) in rows[slot * dim..(slot + 1) * dim].iter_mut().zip(e.iter()) {
            *rv -= step * ev;
        }
    }
    for (ev, &ge) in e.iter_mut().zip(grad_e.iter()) {
        *ev -= lr * ge;
    }
    log_prob
}

/// Item list `[c, z_1, ..., z_Sz]` of a record as context indices.
pub(crate) fn record_items(rec: &PairRecord) -> Vec<usize> {
    let mut items = Vec::with_capacity(1 + rec.negatives().len());
    items.push(rec.context());
    items.extend(rec.negatives().iter().map(|&z| z as usize));
    items
}

/// `ln P_oSG(c | w)`, evaluated with a max-shifted log-sum-exp.
pub fn osg_log_prob(params: &SkipGramParams, w: usize, c: usize) -> f64 {
    params.check_word(w);
    let mut scores = vec![0.0; params.s_c];
    osg_log_prob_parts(
        params.input_row(w),
        &params.output,
        params.dim,
        c,
        &mut scores,
    )
}

/// Full softmax row `P_oSG(. | w)`.
pub fn predictive_dist_osg(params: &SkipGramParams, w: usize) -> Vec<f64> {
    params.check_word(w);
    let mut s = params.scores(w);
    math::log_softmax_in_place(&mut s);
    for x in &mut s {
        *x = math::exp(*x);
    }
    s
}

/// `ln sigma(w.c) + sum_j ln sigma(-w.z_j)`; a record without negatives scores
/// the positive term alone.
pub fn sgns_log_prob(params: &SkipGramParams, rec: &PairRecord) -> f64 {
    let items = record_items(rec);
    sgns_labeled_log_prob(params, rec.word(), &items, 0)
}

/// Log-probability of the labeling with `items[positive]` observed and every other
/// item negative.
pub fn sgns_labeled_log_prob(
    params: &SkipGramParams,
    w: usize,
    items: &[usize],
    positive: usize,
) -> f64 {
    params.check_word(w);
    sgns_labeled_log_prob_parts(
        params.input_row(w),
        &params.output,
        params.dim,
        items,
        positive,
    )
}

/// `sigma(w^T E F c)` for every context `c`.
pub fn sgns_positive_probs(params: &SkipGramParams, w: usize) -> Vec<f64> {
    params.check_word(w);
    params.scores(w).into_iter().map(math::sigmoid).collect()
}

/// Gradient of the mean oSG negative log-likelihood over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct OsgGradient {
    /// Touched rows of `E`, ascending by word.
    pub input_rows: Vec<(usize, Vec<f64>)>,
    /// Gradient for every context vector (columns of `F`), `S_C x d` row-major.
    pub outputs: Vec<f64>,
    /// Mean negative log-likelihood of the batch at the current params.
    pub loss: f64,
}

impl OsgGradient {
    pub fn norm_sq(&self) -> f64 {
        self.input_rows
            .iter()
            .flat_map(|(_, r)| r.iter())
            .chain(&self.outputs)
            .map(|x| x * x)
            .sum()
    }
}

/// Reusable buffers for batched oSG gradients.
struct OsgWorkspace {
    order: Vec<usize>,
    scores: Vec<f64>,
    counts: Vec<f64>,
    grad_row: Vec<f64>,
}

impl OsgWorkspace {
    fn new(s_c: usize, dim: usize) -> Self {
        Self {
            order: Vec::new(),
            scores: vec![0.0; s_c],
            counts: vec![0.0; s_c],
            grad_row: vec![0.0; dim],
        }
    }
}

/// Accumulates the mean-NLL gradient of `batch`. Records are grouped by word so each
/// word's softmax is evaluated once. `on_row` receives each touched `E` row gradient;
/// `out_grad` must be zeroed by the caller. Returns the summed NLL.
fn osg_batch_gradient(
    params: &SkipGramParams,
    batch: &[PairRecord],
    ws: &mut OsgWorkspace,
    out_grad: &mut [f64],
    mut on_row: impl FnMut(usize, &[f64]),
) -> f64 {
    let dim = params.dim;
    let inv_b = 1.0 / batch.len() as f64;
    ws.order.clear();
    ws.order.extend(0..batch.len());
    ws.order.sort_by_key(|&i| batch[i].word);
    let mut nll = 0.0;
    let mut start = 0;
    while start < ws.order.len() {
        let w = batch[ws.order[start]].word();
        let mut end = start;
        while end < ws.order.len() && batch[ws.order[end]].word() == w {
            ws.counts[batch[ws.order[end]].context()] += 1.0;
            end += 1;
        }
        let k = (end - start) as f64;
        let e = params.input_row(w);
        scores_into(e, &params.output, dim, &mut ws.scores);
        let lse = math::log_sum_exp(&ws.scores);
        ws.grad_row.fill(0.0);
        for c in 0..params.s_c {
            let n_c = ws.counts[c];
            let log_p = ws.scores[c] - lse;
            if n_c != 0.0 {
                nll -= n_c * log_p;
            }
            let g = (k * math::exp(log_p) - n_c) * inv_b;
            let o = &params.output[c * dim..(c + 1) * dim];
            let og = &mut out_grad[c * dim..(c + 1) * dim];
            for kk in 0..dim {
                ws.grad_row[kk] += g * o[kk];
                og[kk] += g * e[kk];
            }
        }
        on_row(w, &ws.grad_row);
        for i in start..end {
            ws.counts[batch[ws.order[i]].context()] = 0.0;
        }
        start = end;
    }
    nll
}

/// Analytic softmax cross-entropy gradient of `-(1/|B|) sum ln P_oSG(c_i | w_i)`.
pub fn osg_grad(params: &SkipGramParams, batch: &[PairRecord]) -> Result<OsgGradient> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("gradient batch"));
    }
    let mut ws = OsgWorkspace::new(params.s_c, params.dim);
    let mut outputs = vec![0.0; params.s_c * params.dim];
    let mut input_rows = Vec::new();
    let nll = osg_batch_gradient(params, batch, &mut ws, &mut outputs, |w, g| {
        input_rows.push((w, g.to_vec()))
    });
    Ok(OsgGradient {
        input_rows,
        outputs,
        loss: nll / batch.len() as f64,
    })
}

/// Gradient of `-ln P_SGNS(x_i | w, c, z)` for one record.
#[derive(Debug, Clone, PartialEq)]
pub struct SgnsGradient {
    pub word: usize,
    pub input: Vec<f64>,
    /// Per distinct context (ascending), the gradient of its output vector.
    pub outputs: Vec<(usize, Vec<f64>)>,
    pub loss: f64,
}

pub fn sgns_grad(params: &SkipGramParams, rec: &PairRecord) -> SgnsGradient {
    let w = rec.word();
    params.check_word(w);
    let dim = params.dim;
    let items = record_items(rec);
    let e = params.input_row(w);
    let mut input = vec![0.0; dim];
    let mut outputs: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut loss = 0.0;
    for (j, &c) in items.iter().enumerate() {
        let o = params.output_row(c);
        let s = math::dot(e, o);
        let g = if j == 0 {
            loss -= math::log_sigmoid(s);
            -math::sigmoid(-s)
        } else {
            loss -= math::log_sigmoid(-s);
            math::sigmoid(s)
        };
        for (gi, &ov) in input.iter_mut().zip(o) {
            *gi += g * ov;
        }
        let slot = match outputs.binary_search_by_key(&c, |(k, _)| *k) {
            Ok(i) => i,
            Err(i) => {
                outputs.insert(i, (c, vec![0.0; dim]));
                i
            }
        };
        for (gv, &ev) in outputs[slot].1.iter_mut().zip(e) {
            *gv += g * ev;
        }
    }
    SgnsGradient {
        word: w,
        input,
        outputs,
        loss,
    }
}

/// Optimization settings for [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub dim: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub init_scale: f64,
    pub seed: u64,
    /// Stop once the relative epoch-loss improvement falls below this value.
    pub early_stop: Option<f64>,
}

impl TrainConfig {
    /// Mini-batch momentum: `lr = 1.0`, `momentum = 0.9`, batches of 1000.
    pub fn osg(dim: usize) -> Self {
        Self {
            kind: ModelKind::Osg,
            dim,
            learning_rate: 1.0,
            momentum: 0.9,
            batch_size: 1000,
            epochs: 20,
            negatives: 0,
            init_scale: 0.5,
            seed: 0,
            early_stop: None,
        }
    }

    /// Per-record SGD: `lr = 0.1`, 15 negatives.
    pub fn sgns(dim: usize) -> Self {
        Self {
            kind: ModelKind::Sgns,
            dim,
            learning_rate: 0.1,
            momentum: 0.0,
            batch_size: 1,
            epochs: 15,
            negatives: 15,
            init_scale: 0.5,
            seed: 0,
            early_stop: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.dim == 0 {
            return bad("dimension must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch size and epochs must be positive");
        }
        if self.kind == ModelKind::Sgns {
            if self.negatives == 0 {
                return bad("SGNS needs at least one negative sample");
            }
            if self.momentum != 0.0 {
                return bad("SGNS is trained with plain SGD (momentum 0)");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: SkipGramParams,
    /// Mean negative log-likelihood per record for each epoch, accumulated during the pass.
    pub trace: Vec<f64>,
}

/// Trains from a fresh initialization over `records` in stream order.
pub fn train(
    records: &[PairRecord],
    s_w: usize,
    s_c: usize,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let params = SkipGramParams::init(s_w, s_c, config.dim, config.init_scale, config.seed)?;
    train_from(params, records, config)
}

/// Continues training from existing params.
pub fn train_from(
    mut params: SkipGramParams,
    records: &[PairRecord],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if records.is_empty() {
        return Err(Error::EmptyInput("training records"));
    }
    if params.dim != config.dim {
        return Err(Error::Shape(alloc::format!(
            "params have d={} but config asks for d={}",
            params.dim,
            config.dim
        )));
    }
    for (i, r) in records.iter().enumerate() {
        let bad_neg = match config.kind {
            ModelKind::Sgns => r.negatives().is_empty(),
            ModelKind::Osg => false,
        };
        if r.word() >= params.s_w
            || r.context() >= params.s_c
            || r.negatives().iter().any(|&z| z as usize >= params.s_c)
            || bad_neg
        {
            return Err(Error::Record {
                index: i,
                source: alloc::boxed::Box::new(Error::Shape(
                    "record indices out of range or SGNS record without negatives".into(),
                )),
            });
        }
    }
    let mut trace = Vec::with_capacity(config.epochs);
    match config.kind {
        ModelKind::Osg => train_osg(&mut params, records, config, &mut trace)?,
        ModelKind::Sgns => train_sgns(&mut params, records, config, &mut trace)?,
    }
    Ok(TrainOutcome { params, trace })
}

fn should_stop(trace: &[f64], tol: Option<f64>) -> bool {
    match (tol, trace) {
        (Some(tol), [.., prev, cur]) if trace.len() >= 2 => {
            (prev - cur) / prev.abs().max(1e-300) < tol
        }
        _ => false,
    }
}

fn train_osg(
    params: &mut SkipGramParams,
    records: &[PairRecord],
    config: &TrainConfig,
    trace: &mut Vec<f64>,
) -> Result<()> {
    let dim = params.dim;
    let lr = config.learning_rate;
    let mu = config.momentum;
    let mut ws = OsgWorkspace::new(params.s_c, dim);
    let mut vel_in = vec![0.0; params.input.len()];
    let mut vel_out = vec![0.0; params.output.len()];
    let mut grad_in = vec![0.0; params.input.len()];
    let mut grad_out = vec![0.0; params.output.len()];
    let mut touched: Vec<usize> = Vec::new();
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        for (batch_idx, batch) in records.chunks(config.batch_size).enumerate() {
            grad_out.fill(0.0);
            touched.clear();
            let nll = osg_batch_gradient(params, batch, &mut ws, &mut grad_out, |w, g| {
                grad_in[w * dim..(w + 1) * dim].copy_from_slice(g);
                touched.push(w);
            });
            if !nll.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            total += nll;
            for (v, &g) in vel_out.iter_mut().zip(&grad_out) {
                *v = mu * *v - lr * g;
            }
            for v in vel_in.iter_mut() {
                *v *= mu;
            }
            for &w in &touched {
                let r = w * dim..(w + 1) * dim;
                for (v, g) in vel_in[r.clone()].iter_mut().zip(&mut grad_in[r]) {
                    *v -= lr * *g;
                    *g = 0.0;
                }
            }
            for (p, &v) in params.output.iter_mut().zip(&vel_out) {
                *p += v;
            }
            for (p, &v) in params.input.iter_mut().zip(&vel_in) {
                *p += v;
            }
        }
        trace.push(total / records.len() as f64);
        if should_stop(trace, config.early_stop) {
            break;
        }
    }
    Ok(())
}

fn train_sgns(
    params: &mut SkipGramParams,
    records: &[PairRecord],
    config: &TrainConfig,
    trace: &mut Vec<f64>,
) -> Result<()> {
    let dim = params.dim;
    let mut coeffs = Vec::new();
    let mut grad_e = vec![0.0; dim];
    let mut items = Vec::new();
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        for (i, r) in records.iter().enumerate() {
            items.clear();
            items.push(r.context());
            items.extend(r.negatives().iter().map(|&z| z as usize));
            let (e, out) = params.split_mut(r.word());
            let lp = sgns_step(
                e,
                out,
                dim,
                &items,
                0,
                config.learning_rate,
                &mut coeffs,
                &mut grad_e,
            );
            if !lp.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: i });
            }
            total -= lp;
        }
        trace.push(total / records.len() as f64);
        if should_stop(trace, config.early_stop) {
            break;
        }
    }
    Ok(())
}

/// Total log-likelihood (nats) of `records` under `params`.
pub fn log_likelihood(params: &SkipGramParams, records: &[PairRecord], kind: ModelKind) -> f64 {
    match kind {
        ModelKind::Osg => {
            // Group by word so each softmax normalizer is computed once.
            let mut lse = vec![f64::NAN; params.s_w];
            let mut scores = vec![0.0; params.s_c];
            records
                .iter()
                .map(|r| {
                    let w = r.word();
                    if lse[w].is_nan() {
                        scores_into(params.input_row(w), &params.output, params.dim, &mut scores);
                        lse[w] = math::log_sum_exp(&scores);
                    }
                    params.score(w, r.context()) - lse[w]
                })
                .sum()
        }
        ModelKind::Sgns => records.iter().map(|r| sgns_log_prob(params, r)).sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_params(s_w: usize, s_c: usize, d: usize, seed: u64) -> SkipGramParams {
        SkipGramParams::init(s_w, s_c, d, 3.0 * d as f64, seed).unwrap()
    }

    #[test]
    fn init_zero_scale_and_determinism() {
        let p = SkipGramParams::init(3, 4, 2, 0.0, 1).unwrap();
        assert!(p.e_matrix().iter().all(|&x| x == 0.0));
        assert!(p.f_matrix().iter().all(|&x| x == 0.0));
        assert_eq!(
            SkipGramParams::init(5, 6, 3, 0.5, 7).unwrap(),
            SkipGramParams::init(5, 6, 3, 0.5, 7).unwrap()
        );
        let p = SkipGramParams::init(5, 6, 4, 0.5, 7).unwrap();
        assert!(p.e_matrix().iter().all(|x| x.abs() <= 0.125));
    }

    #[test]
    fn matrices_round_trip() {
        let p = random_params(3, 5, 2, 4);
        let q =
            SkipGramParams::from_matrices(3, 5, 2, p.e_matrix().to_vec(), &p.f_matrix()).unwrap();
        assert_eq!(p, q);
        assert!(SkipGramParams::from_matrices(3, 5, 2, vec![0.0; 5], &[0.0; 10]).is_err());
    }

    #[test]
    fn osg_uniform_and_single_context() {
        let p = SkipGramParams::zeros(2, 7, 3);
        assert!((osg_log_prob(&p, 1, 4) + math::ln(7.0)).abs() < 1e-15);
        let p = random_params(2, 1, 3, 1);
        assert_eq!(osg_log_prob(&p, 0, 0), 0.0);
    }

    #[test]
    fn osg_normalizes() {
        let p = random_params(3, 7, 4, 2);
        for w in 0..3 {
            let s: f64 = (0..7).map(|c| math::exp(osg_log_prob(&p, w, c))).sum();
            assert!((s - 1.0).abs() < 1e-10);
            let dist = predictive_dist_osg(&p, w);
            for c in 0..7 {
                assert!((dist[c] - math::exp(osg_log_prob(&p, w, c))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sgns_zero_params() {
        let p = SkipGramParams::zeros(2, 5, 3);
        let rec = PairRecord::with_negatives(0, 1, vec![2, 3, 4]);
        assert!((sgns_log_prob(&p, &rec) - 4.0 * math::ln(0.5)).abs() < 1e-15);
        assert!(sgns_positive_probs(&p, 1).iter().all(|&x| x == 0.5));
    }

    #[test]
    fn sgns_no_negatives_is_positive_term() {
        let p = random_params(2, 5, 3, 3);
        let rec = PairRecord::new(1, 2);
        assert_eq!(sgns_log_prob(&p, &rec), math::log_sigmoid(p.score(1, 2)));
    }

    #[test]
    fn osg_grad_at_optimum_vanishes() {
        let mut p = SkipGramParams::zeros(1, 4, 1);
        p.input_row_mut(0)[0] = 10.0;
        p.output_row_mut(2)[0] = 10.0;
        for c in [0, 1, 3] {
            p.output_row_mut(c)[0] = -10.0;
        }
        let g = osg_grad(&p, &[PairRecord::new(0, 2)]).unwrap();
        assert!(g.norm_sq().sqrt() < 1e-8);
    }

    #[test]
    fn osg_grad_duplicates() {
        let p = random_params(4, 5, 3, 9);
        let r = PairRecord::new(2, 3);
        let one = osg_grad(&p, &[r.clone()]).unwrap();
        let two = osg_grad(&p, &[r.clone(), r]).unwrap();
        assert_eq!(one.input_rows.len(), 1);
        for (a, b) in one.outputs.iter().zip(&two.outputs) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in one.input_rows[0].1.iter().zip(&two.input_rows[0].1) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(osg_grad(&p, &[]).is_err());
    }

    #[test]
    fn sgns_grad_zero_scores() {
        let mut p = SkipGramParams::zeros(1, 3, 1);
        p.output_row_mut(0)[0] = 1.0;
        p.output_row_mut(1)[0] = 1.0;
        p.input_row_mut(0)[0] = 0.0;
        let rec = PairRecord::with_negatives(0, 0, vec![1]);
        let g = sgns_grad(&p, &rec);
        // dL/dscore_c = -0.5 and dL/dscore_z = +0.5, times e = 0 for outputs.
        assert!((g.input[0] - (-0.5 * 1.0 + 0.5 * 1.0)).abs() < 1e-15);
        assert!(g.outputs.iter().all(|(_, v)| v[0] == 0.0));
    }

    #[test]
    fn sgns_grad_accumulates_repeated_context() {
        let p = random_params(2, 4, 2, 5);
        let rec = PairRecord::with_negatives(0, 1, vec![1, 3]);
        let g = sgns_grad(&p, &rec);
        assert_eq!(
            g.outputs.iter().map(|x| x.0).collect::<Vec<_>>(),
            vec![1, 3]
        );
        let s = p.score(0, 1);
        let coeff = -math::sigmoid(-s) + math::sigmoid(s);
        for k in 0..2 {
            assert!((g.outputs[0].1[k] - coeff * p.input_row(0)[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::osg(5).validate().is_ok());
        assert!(TrainConfig::sgns(5).validate().is_ok());
        let mut c = TrainConfig::sgns(5);
        c.momentum = 0.5;
        assert!(c.validate().is_err());
        c = TrainConfig::sgns(5);
        c.negatives = 0;
        assert!(c.validate().is_err());
        c = TrainConfig::osg(5);
        c.momentum = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn training_rejects_sgns_without_negatives() {
        let recs = vec![PairRecord::new(0, 1)];
        assert!(matches!(
            train(&recs, 2, 2, &TrainConfig::sgns(2)),
            Err(Error::Record { index: 0, .. })
        ));
    }

    #[test]
    fn log_likelihood_matches_direct_sum() {
        let p = random_params(3, 4, 2, 11);
        let recs: Vec<_> = (0..20)
            .map(|i| PairRecord::new(i % 3, (i * 7) % 4))
            .collect();
        let direct: f64 = recs
            .iter()
            .map(|r| osg_log_prob(&p, r.word(), r.context()))
            .sum();
        assert!((log_likelihood(&p, &recs, ModelKind::Osg) - direct).abs() < 1e-10);
    }
}
