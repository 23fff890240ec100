//! On-disk formats. Parsers work on in-memory text or bytes; `write_atomic` and
//! `read_text` handle the filesystem.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sgdim_core::corpus::{PairRecord, PairStream, Vocabulary};
use sgdim_core::criteria::{CodelengthLedger, CriterionReport};
use sgdim_core::evaluation::{SimilarityPair, TaskScore};
use sgdim_core::sgmodel::{ModelKind, SkipGramParams};
use sgdim_core::synthgen::{AnalogyQuestion, SyntheticTruth};

pub const PARAMS_MAGIC: &[u8; 4] = b"SGP1";

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("params file does not start with SGP1")]
    Magic,
    #[error("params file is {actual} bytes, expected {expected}")]
    Length { expected: usize, actual: usize },
    #[error("unknown model kind code {0}")]
    ModelKind(u32),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] sgdim_core::Error),
}

fn line_err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Line {
        line,
        message: message.into(),
    }
}

/// Writes through a temp file in the destination directory, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Whitespace tokenization; no case folding.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

pub fn format_vocab(vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for (i, (tok, count)) in vocab.tokens().iter().zip(vocab.counts()).enumerate() {
        writeln!(out, "{tok}\t{count}\t{i}").unwrap();
    }
    out
}

pub fn parse_vocab(text: &str) -> Result<Vocabulary, FormatError> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(line_err(n, "expected token<TAB>count<TAB>index"));
        }
        let count: u64 = fields[1].parse().map_err(|_| line_err(n, "bad count"))?;
        let index: usize = fields[2].parse().map_err(|_| line_err(n, "bad index"))?;
        if index != entries.len() {
            return Err(line_err(n, format!("index {index} out of order")));
        }
        entries.push((fields[0].to_string(), count));
    }
    Ok(Vocabulary::from_entries(entries)?)
}

pub fn format_pairs(stream: &PairStream) -> String {
    let s_z = stream.negatives_per_record().unwrap_or(0);
    let mut out = String::from("word,context");
    for j in 1..=s_z {
        write!(out, ",neg{j}").unwrap();
    }
    out.push('\n');
    for r in &stream.records {
        write!(out, "{},{}", r.word(), r.context()).unwrap();
        for z in r.negatives() {
            write!(out, ",{z}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parses a pair file. The order seed is not stored in the file and must be supplied.
pub fn parse_pairs(text: &str, order_seed: u64) -> Result<PairStream, FormatError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| line_err(1, "missing header"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[0] != "word" || cols[1] != "context" {
        return Err(line_err(1, "header must start with word,context"));
    }
    for (j, c) in cols[2..].iter().enumerate() {
        if *c != format!("neg{}", j + 1) {
            return Err(line_err(1, format!("unexpected column {c}")));
        }
    }
    let s_z = cols.len() - 2;
    let mut records = Vec::new();
    let mut fields = Vec::with_capacity(cols.len());
    for (i, line) in lines {
        let n = i + 1;
        if line.is_empty() {
            continue;
        }
        fields.clear();
        for f in line.split(',') {
            fields.push(
                f.parse::<u32>()
                    .map_err(|_| line_err(n, format!("bad index {f:?}")))?,
            );
        }
        if fields.len() != cols.len() {
            return Err(line_err(
                n,
                format!("expected {} fields, found {}", cols.len(), fields.len()),
            ));
        }
        let (w, c) = (fields[0] as usize, fields[1] as usize);
        records.push(if s_z == 0 {
            PairRecord::new(w, c)
        } else {
            PairRecord::with_negatives(w, c, fields[2..].to_vec())
        });
    }
    Ok(PairStream::new(records, order_seed))
}

pub fn encode_params(params: &SkipGramParams, kind: ModelKind) -> Vec<u8> {
    let (s_w, s_c, d) = (params.s_w(), params.s_c(), params.dim());
    let mut out = Vec::with_capacity(20 + 8 * (s_w * d + d * s_c));
    out.extend_from_slice(PARAMS_MAGIC);
    for v in [s_w as u32, s_c as u32, d as u32, kind.code()] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in params.e_matrix().iter().chain(params.f_matrix().iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_params(bytes: &[u8]) -> Result<(SkipGramParams, ModelKind), FormatError> {
    if bytes.len() < 20 {
        return Err(FormatError::Length {
            expected: 20,
            actual: bytes.len(),
        });
    }
    if &bytes[..4] != PARAMS_MAGIC {
        return Err(FormatError::Magic);
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let (s_w, s_c, d) = (u32_at(4) as usize, u32_at(8) as usize, u32_at(12) as usize);
    let code = u32_at(16);
    let kind = ModelKind::from_code(code).ok_or(FormatError::ModelKind(code))?;
    let n_e = s_w * d;
    let n_f = d * s_c;
    let expected = 20 + 8 * (n_e + n_f);
    if bytes.len() != expected {
        return Err(FormatError::Length {
            expected,
            actual: bytes.len(),
        });
    }
    let values: Vec<f64> = bytes[20..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let (e, f) = values.split_at(n_e);
    let params = SkipGramParams::from_matrices(s_w, s_c, d, e.to_vec(), f)?;
    Ok((params, kind))
}

pub fn format_trace(trace: &[f64]) -> String {
    let mut out = String::from("epoch,mean_nll\n");
    for (i, v) in trace.iter().enumerate() {
        writeln!(out, "{},{v}", i + 1).unwrap();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TruthFile {
    s_w: usize,
    s_c: usize,
    seed: u64,
    questions: Vec<[usize; 4]>,
    dist: Vec<Vec<f64>>,
}

pub fn format_truth(truth: &SyntheticTruth) -> String {
    let file = TruthFile {
        s_w: truth.s_w(),
        s_c: truth.s_c(),
        seed: truth.gen_seed,
        questions: truth
            .questions
            .iter()
            .map(AnalogyQuestion::as_array)
            .collect(),
        dist: truth.dist.clone(),
    };
    serde_json::to_string(&file).expect("truth serializes") + "\n"
}

pub fn parse_truth(text: &str) -> Result<SyntheticTruth, FormatError> {
    let file: TruthFile = serde_json::from_str(text)?;
    if file.dist.len() != file.s_w || file.dist.iter().any(|r| r.len() != file.s_c) {
        return Err(sgdim_core::Error::Shape(format!(
            "truth declares {}x{} but dist has a different shape",
            file.s_w, file.s_c
        ))
        .into());
    }
    let questions = file
        .questions
        .iter()
        .map(|q| AnalogyQuestion::new(q[0], q[1], q[2], q[3]))
        .collect();
    Ok(SyntheticTruth::new(file.dist, questions, file.seed)?)
}

/// Google analogy format: `:` lines are section headers, other lines hold four tokens.
pub fn parse_questions(text: &str) -> Result<Vec<[String; 4]>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with(':') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let q: [&str; 4] = toks.try_into().map_err(|t: Vec<&str>| {
            line_err(i + 1, format!("expected 4 tokens, found {}", t.len()))
        })?;
        out.push(q.map(str::to_string));
    }
    Ok(out)
}

/// Maps question tokens to word indices. Tokens may be vocabulary words or bare indices.
pub fn resolve_questions(
    questions: &[[String; 4]],
    vocab: Option<&Vocabulary>,
) -> Result<Vec<AnalogyQuestion>, String> {
    questions
        .iter()
        .map(|q| {
            let mut ids = [0usize; 4];
            for (slot, tok) in ids.iter_mut().zip(q) {
                *slot = match vocab.and_then(|v| v.index_of(tok)) {
                    Some(i) => i,
                    None => tok.parse().map_err(|_| {
                        format!("question token {tok:?} is neither a known word nor an index")
                    })?,
                };
            }
            Ok(AnalogyQuestion::new(ids[0], ids[1], ids[2], ids[3]))
        })
        .collect()
}

pub fn parse_similarity(text: &str) -> Result<Vec<SimilarityPair>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (i == 0 && line.starts_with('#')) {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(line_err(i + 1, "expected word_a<TAB>word_b<TAB>score"));
        }
        let human_score = fields[2]
            .trim()
            .parse()
            .map_err(|_| line_err(i + 1, format!("bad score {:?}", fields[2])))?;
        out.push(SimilarityPair {
            word_a: fields[0].to_string(),
            word_b: fields[1].to_string(),
            human_score,
        });
    }
    Ok(out)
}

pub fn format_ledger(ledger: &CodelengthLedger) -> String {
    let mut out = String::from("record_index,codelength_nats,cumulative_nats\n");
    for (i, (l, c)) in ledger.per_record.iter().zip(&ledger.cumulative).enumerate() {
        writeln!(out, "{i},{l},{c}").unwrap();
    }
    out
}

/// Returns per-record and cumulative codelengths.
pub fn parse_ledger(text: &str) -> Result<(Vec<f64>, Vec<f64>), FormatError> {
    let mut per = Vec::new();
    let mut cum = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(line_err(i + 1, "expected 3 fields"));
        }
        let bad = || line_err(i + 1, "bad number");
        per.push(f[1].parse().map_err(|_| bad())?);
        cum.push(f[2].parse().map_err(|_| bad())?);
    }
    Ok((per, cum))
}

pub fn format_curve(dim_a: usize, dim_b: usize, diff: &[f64]) -> String {
    let mut out = String::from("record_index,dimA,dimB,cumulative_diff_nats\n");
    for (i, v) in diff.iter().enumerate() {
        writeln!(out, "{i},{dim_a},{dim_b},{v}").unwrap();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub criterion: String,
    pub values: BTreeMap<usize, f64>,
    pub chosen_dim: usize,
    pub n: usize,
    pub s: usize,
    pub m: usize,
    pub seeds: Vec<u64>,
}

impl From<&CriterionReport> for ReportFile {
    fn from(r: &CriterionReport) -> Self {
        Self {
            criterion: r.criterion.name().to_string(),
            values: r.values.clone(),
            chosen_dim: r.chosen_dim,
            n: r.n,
            s: r.s,
            m: r.m,
            seeds: r.seeds.clone(),
        }
    }
}

impl ReportFile {
    /// Values rescaled to [0, 1]; a constant series maps to 0.
    pub fn normalized(&self) -> Self {
        let lo = self.values.values().copied().fold(f64::INFINITY, f64::min);
        let hi = self
            .values
            .values()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let values = self
            .values
            .iter()
            .map(|(&d, &v)| (d, if span > 0.0 { (v - lo) / span } else { 0.0 }))
            .collect();
        Self {
            values,
            ..self.clone()
        }
    }
}

pub fn format_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreFile {
    pub task: String,
    pub score: f64,
    pub attempted: usize,
    pub skipped: usize,
}

impl ScoreFile {
    pub fn new(task: &str, s: TaskScore) -> Self {
        Self {
            task: task.to_string(),
            score: s.score,
            attempted: s.attempted,
            skipped: s.skipped,
        }
    }
}
