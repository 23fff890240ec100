//! Trains one model per candidate dimension and scores every criterion.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use sgdim_core::corpus::{split_holdout, PairStream};
use sgdim_core::criteria::{
    aic, bic, cumulative_diff, cv_loss, select_dimension, snml_tail, CodelengthLedger, Criterion,
    CriterionReport, SnmlConfig,
};
use sgdim_core::evaluation::{dissimilar_osg, similar_sgns};
use sgdim_core::sgmodel::{log_likelihood, train, ModelKind, SkipGramParams, TrainConfig};
use sgdim_core::synthgen::SyntheticTruth;

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub dims: Vec<usize>,
    /// Template; `dim` is overwritten per candidate.
    pub train: TrainConfig,
    pub snml: SnmlConfig,
    /// Number of trailing training records scored by SNML.
    pub tail: usize,
    pub holdout_fraction: f64,
    pub split_seed: u64,
    pub criteria: BTreeSet<Criterion>,
    pub jobs: usize,
}

impl SweepConfig {
    pub fn kind(&self) -> ModelKind {
        self.train.kind
    }
}

#[derive(Debug, Clone)]
pub struct DimResult {
    pub dim: usize,
    pub params: SkipGramParams,
    pub trace: Vec<f64>,
    /// Log-likelihood of the records the model was trained on.
    pub log_lik: f64,
    pub n_train: usize,
    pub cv: Option<f64>,
    pub ledger: Option<CodelengthLedger>,
    /// Lower-is-better oracle value: mean KL for oSG, negated mean Spearman for SGNS.
    pub oracle: Option<f64>,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub results: Vec<DimResult>,
    pub failures: Vec<(usize, String)>,
    pub reports: Vec<CriterionReport>,
}

impl SweepOutcome {
    pub fn report(&self, criterion: Criterion) -> Option<&CriterionReport> {
        self.reports.iter().find(|r| r.criterion == criterion)
    }

    pub fn chosen(&self, criterion: Criterion) -> Option<usize> {
        self.report(criterion).map(|r| r.chosen_dim)
    }

    pub fn result(&self, dim: usize) -> Option<&DimResult> {
        self.results.iter().find(|r| r.dim == dim)
    }

    /// Cumulative codelength difference `L(dim_a) - L(dim_b)` over the scored tail.
    pub fn snml_curve(&self, dim_a: usize, dim_b: usize) -> Option<Vec<f64>> {
        let a = self.result(dim_a)?.ledger.as_ref()?;
        let b = self.result(dim_b)?.ledger.as_ref()?;
        Some(cumulative_diff(a, b))
    }
}

/// Data prepared once per sweep: train prefix, SNML tail and validation split.
pub struct SweepData {
    pub train: PairStream,
    pub valid: PairStream,
}

impl SweepData {
    pub fn prepare(stream: &PairStream, config: &SweepConfig) -> anyhow::Result<Self> {
        let (train, valid) = if config.criteria.contains(&Criterion::Cv) {
            split_holdout(stream, config.holdout_fraction, config.split_seed)?
        } else {
            (
                stream.clone(),
                PairStream::new(Vec::new(), stream.order_seed),
            )
        };
        anyhow::ensure!(
            !config.criteria.contains(&Criterion::Snml) || config.tail < train.len(),
            "SNML tail of {} records leaves no training prefix ({} records)",
            config.tail,
            train.len()
        );
        Ok(Self { train, valid })
    }

    pub fn prefix(&self, config: &SweepConfig) -> &[sgdim_core::corpus::PairRecord] {
        let tail = if config.criteria.contains(&Criterion::Snml) {
            config.tail
        } else {
            0
        };
        &self.train.records[..self.train.len() - tail]
    }
}

pub fn run_dim(
    dim: usize,
    data: &SweepData,
    s_w: usize,
    s_c: usize,
    config: &SweepConfig,
    truth: Option<&SyntheticTruth>,
) -> anyhow::Result<DimResult> {
    let kind = config.kind();
    let mut tc = config.train.clone();
    tc.dim = dim;
    let prefix = data.prefix(config);
    let outcome = train(prefix, s_w, s_c, &tc)?;
    let params = outcome.params;
    let log_lik = log_likelihood(&params, prefix, kind);
    let cv = if config.criteria.contains(&Criterion::Cv) {
        Some(cv_loss(&params, &data.valid.records, kind)?)
    } else {
        None
    };
    let ledger = if config.criteria.contains(&Criterion::Snml) {
        Some(snml_tail(
            &data.train.records,
            params.clone(),
            config.tail,
            &config.snml,
            kind,
        )?)
    } else {
        None
    };
    let oracle = match truth {
        Some(t) => Some(match kind {
            ModelKind::Osg => dissimilar_osg(&params, t, None)?.value,
            ModelKind::Sgns => -similar_sgns(&params, t)?.value,
        }),
        None => None,
    };
    Ok(DimResult {
        dim,
        params,
        trace: outcome.trace,
        log_lik,
        n_train: prefix.len(),
        cv,
        ledger,
        oracle,
    })
}

/// Runs every candidate dimension (up to `jobs` at a time) and builds one report per
/// enabled criterion. Failed dimensions are collected, not fatal.
pub fn run_sweep(
    stream: &PairStream,
    s_w: usize,
    s_c: usize,
    config: &SweepConfig,
    truth: Option<&SyntheticTruth>,
) -> anyhow::Result<SweepOutcome> {
    anyhow::ensure!(!config.dims.is_empty(), "no candidate dimensions");
    stream.validate(s_w, s_c)?;
    let data = SweepData::prepare(stream, config)?;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<anyhow::Result<DimResult>>>> =
        Mutex::new((0..config.dims.len()).map(|_| None).collect());
    let jobs = config.jobs.clamp(1, config.dims.len());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= config.dims.len() {
                    break;
                }
                let r = run_dim(config.dims[i], &data, s_w, s_c, config, truth);
                slots.lock().expect("sweep slot lock")[i] = Some(r);
            });
        }
    });
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (dim, slot) in config
        .dims
        .iter()
        .zip(slots.into_inner().expect("sweep slot lock"))
    {
        match slot.expect("every dimension ran") {
            Ok(r) => results.push(r),
            Err(e) => failures.push((*dim, format!("{e:#}"))),
        }
    }
    let reports = build_reports(&results, s_w, s_c, config, truth.is_some())?;
    Ok(SweepOutcome {
        results,
        failures,
        reports,
    })
}

fn build_reports(
    results: &[DimResult],
    s_w: usize,
    s_c: usize,
    config: &SweepConfig,
    with_oracle: bool,
) -> anyhow::Result<Vec<CriterionReport>> {
    if results.is_empty() {
        return Ok(Vec::new());
    }
    let n = results[0].n_train;
    let mut wanted: Vec<Criterion> = config.criteria.iter().copied().collect();
    if with_oracle {
        wanted.push(Criterion::Oracle);
    }
    let mut reports = Vec::new();
    for criterion in wanted {
        let values: BTreeMap<usize, f64> = results
            .iter()
            .filter_map(|r| {
                let v = match criterion {
                    Criterion::Aic => Some(aic(r.log_lik, r.dim, s_w, s_c)),
                    Criterion::Bic => Some(bic(r.log_lik, r.n_train, r.dim, s_w, s_c)),
                    Criterion::Cv => r.cv,
                    Criterion::Snml => r.ledger.as_ref().map(CodelengthLedger::total),
                    Criterion::Oracle => r.oracle,
                }?;
                Some((r.dim, v))
            })
            .collect();
        if values.is_empty() {
            continue;
        }
        let mut report = select_dimension(criterion, &values)?;
        report.n = n;
        report.s = if criterion == Criterion::Snml {
            config.tail
        } else {
            0
        };
        report.m = if criterion == Criterion::Snml && config.kind() == ModelKind::Osg {
            config.snml.sampler.m.min(s_c)
        } else {
            0
        };
        report.seeds = vec![config.train.seed, config.snml.seed, config.split_seed];
        reports.push(report);
    }
    Ok(reports)
}
