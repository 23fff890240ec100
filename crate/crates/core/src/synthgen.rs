//! Synthetic ground-truth contextual distributions tied together by analogy
//! constraints, and noisy corpora sampled from them.

use alloc::vec::Vec;

use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_distr::{Gamma, StandardNormal};

use crate::corpus::{PairRecord, PairStream};
use crate::error::{Error, Result};
use crate::{math, SeededRng};

/// `a : b :: c : d`, as word indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct AnalogyQuestion {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub d: usize,
}

impl AnalogyQuestion {
    pub fn new(a: usize, b: usize, c: usize, d: usize) -> Self {
        Self { a, b, c, d }
    }

    pub fn as_array(&self) -> [usize; 4] {
        [self.a, self.b, self.c, self.d]
    }

    fn validate(&self, s_w: usize) -> Result<()> {
        let ids = self.as_array();
        if ids.iter().any(|&i| i >= s_w) {
            return Err(Error::InvalidArgument(alloc::format!(
                "question {ids:?} has an index >= S_W={s_w}"
            )));
        }
        for i in 0..4 {
            for j in i + 1..4 {
                if ids[i] == ids[j] {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "question {ids:?} repeats a word"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Ground-truth `P(c | w)` rows plus the questions used to shape them.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    pub dist: Vec<Vec<f64>>,
    pub questions: Vec<AnalogyQuestion>,
    pub gen_seed: u64,
}

/// Residual tolerance for the cosine-equality constraints.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-6;
/// Upper bound on constraint-enforcement sweeps.
pub const MAX_SWEEPS: usize = 1000;

impl SyntheticTruth {
    /// Validates row shapes and normalization.
    pub fn new(
        dist: Vec<Vec<f64>>,
        questions: Vec<AnalogyQuestion>,
        gen_seed: u64,
    ) -> Result<Self> {
        let s_w = dist.len();
        let s_c = dist.first().map(Vec::len).unwrap_or(0);
        if s_w == 0 || s_c == 0 {
            return Err(Error::EmptyInput("truth distribution"));
        }
        for (w, row) in dist.iter().enumerate() {
            if row.len() != s_c {
                return Err(Error::Shape(alloc::format!(
                    "truth row {w} has length {}",
                    row.len()
                )));
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(alloc::format!(
                    "truth row {w} is not a probability vector (sum {sum})"
                )));
            }
        }
        for q in &questions {
            q.validate(s_w)?;
        }
        Ok(Self {
            dist,
            questions,
            gen_seed,
        })
    }

    pub fn s_w(&self) -> usize {
        self.dist.len()
    }

    pub fn s_c(&self) -> usize {
        self.dist[0].len()
    }

    /// `cos(a,b) - cos(c,d)` for one question.
    pub fn residual(&self, q: &AnalogyQuestion) -> f64 {
        constraint_residual(&self.dist, q)
    }

    pub fn max_residual(&self) -> f64 {
        self.questions
            .iter()
            .map(|q| self.residual(q).abs())
            .fold(0.0, f64::max)
    }
}

fn constraint_residual(dist: &[Vec<f64>], q: &AnalogyQuestion) -> f64 {
    math::cosine(&dist[q.a], &dist[q.b]) - math::cosine(&dist[q.c], &dist[q.d])
}

/// Draws one row from a symmetric Dirichlet.
pub fn dirichlet_row<R: Rng + ?Sized>(s_c: usize, concentration: f64, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    loop {
        let mut row: Vec<f64> = (0..s_c).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = row.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            for p in &mut row {
                *p /= sum;
            }
            return row;
        }
    }
}

/// Generates truth rows from Dirichlet(1) and enforces every analogy constraint.
pub fn generate_truth(
    questions: &[AnalogyQuestion],
    s_w: usize,
    s_c: usize,
    seed: u64,
) -> Result<SyntheticTruth> {
    generate_truth_with(questions, s_w, s_c, 1.0, seed)
}

/// [`generate_truth`] with a symmetric Dirichlet of the given concentration.
pub fn generate_truth_with(
    questions: &[AnalogyQuestion],
    s_w: usize,
    s_c: usize,
    concentration: f64,
    seed: u64,
) -> Result<SyntheticTruth> {
    if s_w == 0 {
        return Err(Error::InvalidArgument("S_W must be positive".into()));
    }
    if s_c < 2 {
        return Err(Error::InvalidArgument("S_C must be at least 2".into()));
    }
    for q in questions {
        q.validate(s_w)?;
    }
    let mut rng = SeededRng::seed_from_u64(seed);
    if !(concentration > 0.0) || !concentration.is_finite() {
        return Err(Error::InvalidArgument(
            "Dirichlet concentration must be positive".into(),
        ));
    }
    let mut dist: Vec<Vec<f64>> = (0..s_w)
        .map(|_| dirichlet_row(s_c, concentration, &mut rng))
        .collect();

    let mut converged = questions.is_empty();
    for _ in 0..MAX_SWEEPS {
        for q in questions {
            enforce_constraint(&mut dist, q);
        }
        let worst = questions
            .iter()
            .map(|q| constraint_residual(&dist, q).abs())
            .fold(0.0, f64::max);
        if worst < CONSTRAINT_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        let (question, residual) = questions
            .iter()
            .map(|q| (*q, constraint_residual(&dist, q)))
            .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
            .expect("non-empty questions");
        return Err(Error::InfeasibleConstraint { question, residual });
    }
    SyntheticTruth::new(dist, questions.to_vec(), seed)
}

/// Moves `dist[d]` along a simplex path until `cos(c, d) = cos(a, b)`.
///
/// Toward `dist[c]` raises the cosine up to 1; toward the vertex at `argmin dist[c]`
/// lowers it. Every point on either path stays on the simplex, and the endpoint at the
/// vertex is never reached, so positive rows stay positive.
fn enforce_constraint(dist: &mut [Vec<f64>], q: &AnalogyQuestion) {
    let target = math::cosine(&dist[q.a], &dist[q.b]);
    let c_row = dist[q.c].clone();
    let start = dist[q.d].clone();
    let current = math::cosine(&c_row, &start);
    if (current - target).abs() < CONSTRAINT_TOLERANCE * 1e-3 {
        return;
    }
    let far: Vec<f64> = if target > current {
        c_row.clone()
    } else {
        let j = c_row
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))
            .map(|(j, _)| j)
            .unwrap_or(0);
        let mut v = alloc::vec![0.0; c_row.len()];
        v[j] = 1.0;
        v
    };
    let mix = |lambda: f64| -> Vec<f64> {
        start
            .iter()
            .zip(&far)
            .map(|(s, f)| (1.0 - lambda) * s + lambda * f)
            .collect()
    };
    let gap = |lambda: f64| math::cosine(&c_row, &mix(lambda)) - target;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let g_lo = gap(lo);
    if g_lo.signum() == gap(hi).signum() {
        // Target unreachable along this path; take the closest endpoint short of the vertex.
        hi = 1.0 - 1e-9;
        dist[q.d] = mix(hi);
        return;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid).signum() == g_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    let lambda = if target > current {
        hi
    } else {
        lo.min(1.0 - 1e-9)
    };
    let mut row = mix(lambda);
    let sum: f64 = row.iter().sum();
    for p in &mut row {
        *p /= sum;
    }
    dist[q.d] = row;
}

/// Samples `n` records: `w` uniform, logits `ln P(.|w)` perturbed by `N(0, sigma^2)`
/// per record, `c` drawn from the renormalized perturbed distribution.
pub fn sample_corpus(
    truth: &SyntheticTruth,
    n: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<PairStream> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::InvalidArgument(
            "noise sigma must be a finite non-negative number".into(),
        ));
    }
    let s_w = truth.s_w();
    let s_c = truth.s_c();
    let mut rng = SeededRng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n);
    if noise_sigma == 0.0 {
        let cdfs: Vec<Vec<f64>> = truth.dist.iter().map(|row| cumulative(row)).collect();
        for _ in 0..n {
            let w = rng.random_range(0..s_w);
            let c = draw_from_cdf(&cdfs[w], rng.random::<f64>());
            records.push(PairRecord::new(w, c));
        }
    } else {
        let logits: Vec<Vec<f64>> = truth
            .dist
            .iter()
            .map(|row| row.iter().map(|&p| math::ln(p)).collect())
            .collect();
        let mut buf = alloc::vec![0.0; s_c];
        for _ in 0..n {
            let w = rng.random_range(0..s_w);
            for (b, &l) in buf.iter_mut().zip(&logits[w]) {
                let eps: f64 = StandardNormal.sample(&mut rng);
                *b = l + noise_sigma * eps;
            }
            let max = buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for b in buf.iter_mut() {
                *b = math::exp(*b - max);
                total += *b;
            }
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut c = s_c - 1;
            for (j, &b) in buf.iter().enumerate() {
                acc += b;
                if u < acc {
                    c = j;
                    break;
                }
            }
            records.push(PairRecord::new(w, c));
        }
    }
    Ok(PairStream::new(records, seed))
}

fn cumulative(row: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    row.iter()
        .map(|&p| {
            acc += p;
            acc
        })
        .collect()
}

fn draw_from_cdf(cdf: &[f64], u: f64) -> usize {
    let total = *cdf.last().expect("non-empty row");
    let target = u * total;
    cdf.partition_point(|&x| x <= target).min(cdf.len() - 1)
}
