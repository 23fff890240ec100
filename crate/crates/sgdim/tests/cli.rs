use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use sgdim::io::{decode_params, parse_ledger, parse_pairs, parse_truth, ReportFile, ScoreFile};
use sgdim_core::criteria::{snml_record_osg, warm_start, SamplerConfig, WarmStartLr};
use sgdim_core::evaluation::dissimilar_osg;
use sgdim_core::sgmodel::ModelKind;
use sgdim_core::synthgen::{generate_truth, AnalogyQuestion};
use sgdim_core::{Error, SeededRng};

fn sgdim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgdim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = sgdim(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

/// Small synthetic data set: truth and pair file in `dir`.
fn synth(dir: &Path, extra: &[&str]) -> (PathBuf, PathBuf) {
    let truth = dir.join("truth.json");
    let pairs = dir.join("pairs.csv");
    let mut args = vec![
        "synth",
        "--s-w",
        "6",
        "--s-c",
        "8",
        "--n",
        "3000",
        "--out-truth",
        p(&truth),
        "--out-pairs",
        p(&pairs),
    ];
    args.extend_from_slice(extra);
    ok(&args);
    (truth, pairs)
}

#[test]
fn build_vocab_is_deterministic_and_rejects_empty() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    std::fs::write(&corpus, "b a b c b a\nd").unwrap();
    let out = dir.path().join("v.tsv");
    ok(&[
        "build-vocab",
        "--corpus",
        p(&corpus),
        "--min-count",
        "2",
        "--out",
        p(&out),
    ]);
    let first = read(&out);
    assert_eq!(first, "b\t3\t0\na\t2\t1\n");
    assert!(dir.path().join("v.tsv.manifest.json").exists());
    ok(&[
        "build-vocab",
        "--corpus",
        p(&corpus),
        "--min-count",
        "2",
        "--out",
        p(&out),
    ]);
    assert_eq!(read(&out), first);
    let status = sgdim(&[
        "build-vocab",
        "--corpus",
        p(&corpus),
        "--min-count",
        "9",
        "--out",
        p(&out),
    ])
    .status;
    assert_eq!(status.code(), Some(2));
}

#[test]
fn pairs_without_subsampling_enumerate_windows() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    std::fs::write(&corpus, "x y z").unwrap();
    let vocab = dir.path().join("v.tsv");
    ok(&[
        "build-vocab",
        "--corpus",
        p(&corpus),
        "--min-count",
        "1",
        "--out",
        p(&vocab),
    ]);
    let out = dir.path().join("pairs.csv");
    ok(&[
        "pairs",
        "--corpus",
        p(&corpus),
        "--vocab",
        p(&vocab),
        "--window",
        "1",
        "--threshold",
        "inf",
        "--out",
        p(&out),
    ]);
    let stream = parse_pairs(&read(&out), 0).unwrap();
    let mut got: Vec<(usize, usize)> = stream
        .records
        .iter()
        .map(|r| (r.word(), r.context()))
        .collect();
    got.sort();
    // Equal counts sort alphabetically: x=0, y=1, z=2.
    assert_eq!(got, vec![(0, 1), (1, 0), (1, 2), (2, 1)]);
}

#[test]
fn synth_reruns_are_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let qs = a.path().join("q.txt");
    std::fs::write(&qs, ": family\n0 1 2 3\n").unwrap();
    let (ta, pa) = synth(a.path(), &["--questions", p(&qs), "--seed", "4"]);
    let (tb, pb) = synth(b.path(), &["--questions", p(&qs), "--seed", "4"]);
    assert_eq!(read(&ta), read(&tb));
    assert_eq!(read(&pa), read(&pb));
    let truth = parse_truth(&read(&ta)).unwrap();
    assert_eq!(truth.questions, vec![AnalogyQuestion::new(0, 1, 2, 3)]);
    assert!(truth.max_residual() < 1e-6);
    // No questions gives a plain Dirichlet truth.
    let c = tempfile::tempdir().unwrap();
    let (tc, _) = synth(c.path(), &[]);
    assert!(parse_truth(&read(&tc)).unwrap().questions.is_empty());
}

#[test]
fn synth_reports_infeasible_constraints() {
    let q = AnalogyQuestion::new(0, 1, 2, 3);
    let seed = (0..200u64)
        .find(|&s| {
            matches!(
                generate_truth(&[q], 4, 2, s),
                Err(Error::InfeasibleConstraint { .. })
            )
        })
        .expect("some seed is infeasible");
    let dir = tempfile::tempdir().unwrap();
    let qs = dir.path().join("q.txt");
    std::fs::write(&qs, "0 1 2 3\n").unwrap();
    let out = sgdim(&[
        "synth",
        "--questions",
        p(&qs),
        "--s-w",
        "4",
        "--s-c",
        "2",
        "--n",
        "10",
        "--seed",
        &seed.to_string(),
        "--out-truth",
        p(&dir.path().join("t.json")),
        "--out-pairs",
        p(&dir.path().join("p.csv")),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn sweep_only_writes_requested_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (_, pairs) = synth(dir.path(), &[]);
    let out = dir.path().join("sweep");
    ok(&[
        "sweep",
        "--pairs",
        p(&pairs),
        "--s-w",
        "6",
        "--s-c",
        "8",
        "--dims",
        "1,2",
        "--only",
        "aic",
        "--epochs",
        "2",
        "--normalized",
        "--out-dir",
        p(&out),
    ]);
    let mut names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("report_") || n.starts_with("ledger_"))
        .collect();
    names.sort();
    assert_eq!(names, ["report_AIC.json", "report_AIC.normalized.json"]);
    let norm: ReportFile =
        serde_json::from_str(&read(&out.join("report_AIC.normalized.json"))).unwrap();
    assert!(norm.values.values().all(|v| (0.0..=1.0).contains(v)));
    assert!(out.join("sweep.manifest.json").exists());
}

#[test]
fn sweep_ledgers_match_per_record_snml() {
    let dir = tempfile::tempdir().unwrap();
    let (truth_path, pairs) = synth(dir.path(), &[]);
    let out = dir.path().join("sweep");
    let tail = 40;
    let stdout = ok(&[
        "sweep",
        "--pairs",
        p(&pairs),
        "--s-w",
        "6",
        "--s-c",
        "8",
        "--dims",
        "1,2,3",
        "--only",
        "snml",
        "--epochs",
        "3",
        "--tail",
        "40",
        "--m",
        "8",
        "--truth",
        p(&truth_path),
        "--out-dir",
        p(&out),
    ])
    .stdout;
    let stdout = String::from_utf8(stdout).unwrap();
    let stream = parse_pairs(&read(&pairs), 0).unwrap();
    let truth = parse_truth(&read(&truth_path)).unwrap();
    let n = stream.len() - tail;
    let lr = WarmStartLr::CountScaled.resolve(20, n, 6);
    let report: ReportFile = serde_json::from_str(&read(&out.join("report_SNML.json"))).unwrap();
    let oracle: ReportFile = serde_json::from_str(&read(&out.join("report_ORACLE.json"))).unwrap();
    let mut totals = BTreeMap::new();
    for d in 1..=3 {
        let (trained, _) =
            decode_params(&std::fs::read(out.join(format!("params_d{d}.bin"))).unwrap()).unwrap();
        let (per, cum) = parse_ledger(&read(&out.join(format!("ledger_d{d}.csv")))).unwrap();
        assert_eq!(per.len(), tail);
        let mut rng = SeededRng::seed_from_u64(0);
        let mut sum = 0.0;
        let mut params = trained.clone();
        for (i, r) in stream.records[n..].iter().enumerate() {
            let code = snml_record_osg(
                &params,
                r.word(),
                r.context(),
                &SamplerConfig::exact(8),
                20,
                lr,
                &mut rng,
            )
            .unwrap();
            assert_eq!(per[i], code.codelength(), "dim {d} record {i}");
            sum += per[i];
            params = warm_start(&params, r, 20, lr, ModelKind::Osg);
            assert!((cum[i] - sum).abs() <= 1e-9 * sum.abs().max(1.0));
        }
        assert!((report.values[&d] - sum).abs() <= 1e-9 * sum);
        assert_eq!(
            oracle.values[&d],
            dissimilar_osg(&trained, &truth, None).unwrap().value
        );
        totals.insert(d, sum);
    }
    let argmin = totals.iter().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(report.chosen_dim, *argmin);
    assert!(stdout.contains(&format!("SNML   {argmin}")), "{stdout}");
    assert!(out.join("curve_1_3.csv").exists());

    std::fs::remove_file(out.join("curve_1_3.csv")).unwrap();
    ok(&["report", "--dir", p(&out), "--curve", "1,3"]);
    let curve = read(&out.join("curve_1_3.csv"));
    assert_eq!(curve.lines().count(), tail + 1);
    let bad = sgdim(&["report", "--dir", p(&out), "--curve", "1,2,3"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn sweep_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let (_, pairs) = synth(dir.path(), &[]);
    let out = dir.path().join("sweep");
    let single = sgdim(&[
        "sweep",
        "--pairs",
        p(&pairs),
        "--dims",
        "3",
        "--out-dir",
        p(&out),
    ]);
    assert_eq!(single.status.code(), Some(2));
    let long_tail = sgdim(&[
        "sweep",
        "--pairs",
        p(&pairs),
        "--dims",
        "1,2",
        "--tail",
        "5000",
        "--out-dir",
        p(&out),
    ]);
    assert_eq!(long_tail.status.code(), Some(2));
    let missing = sgdim(&[
        "sweep",
        "--pairs",
        p(&dir.path().join("nope.csv")),
        "--dims",
        "1,2",
        "--out-dir",
        p(&out),
    ]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn eval_scores_every_task() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = d.join("corpus.txt");
    let text = "king queen man woman ".repeat(50) + &"apple pear ".repeat(30);
    std::fs::write(&corpus, text).unwrap();
    let vocab = d.join("v.tsv");
    ok(&[
        "build-vocab",
        "--corpus",
        p(&corpus),
        "--min-count",
        "1",
        "--out",
        p(&vocab),
    ]);
    let pairs = d.join("pairs.csv");
    ok(&[
        "pairs",
        "--corpus",
        p(&corpus),
        "--vocab",
        p(&vocab),
        "--threshold",
        "inf",
        "--out",
        p(&pairs),
    ]);
    let params = d.join("m.bin");
    ok(&[
        "train",
        "--pairs",
        p(&pairs),
        "--vocab",
        p(&vocab),
        "--dim",
        "2",
        "--epochs",
        "2",
        "--out",
        p(&params),
    ]);

    let questions = d.join("q.txt");
    std::fs::write(
        &questions,
        ": test\nking queen man woman\nking unknownword man woman\n",
    )
    .unwrap();
    let out = d.join("analogy.json");
    ok(&[
        "eval",
        "--params",
        p(&params),
        "--task",
        "analogy",
        "--data",
        p(&questions),
        "--vocab",
        p(&vocab),
        "--out",
        p(&out),
    ]);
    let score: ScoreFile = serde_json::from_str(&read(&out)).unwrap();
    assert_eq!(
        (score.task.as_str(), score.attempted, score.skipped),
        ("analogy", 1, 1)
    );

    let sim = d.join("sim.tsv");
    std::fs::write(
        &sim,
        "# header\nking\tqueen\t9\nking\tapple\t1\nman\tpear\t2\n",
    )
    .unwrap();
    let out = d.join("sim.json");
    ok(&[
        "eval",
        "--params",
        p(&params),
        "--task",
        "similarity",
        "--data",
        p(&sim),
        "--vocab",
        p(&vocab),
        "--out",
        p(&out),
    ]);
    let score: ScoreFile = serde_json::from_str(&read(&out)).unwrap();
    assert_eq!(score.attempted, 3);
    assert!((-1.0..=1.0).contains(&score.score));

    let truth = d.join("truth.json");
    ok(&[
        "synth",
        "--s-w",
        "6",
        "--s-c",
        "6",
        "--n",
        "10",
        "--out-truth",
        p(&truth),
        "--out-pairs",
        p(&d.join("unused.csv")),
    ]);
    let out = d.join("oracle.json");
    ok(&[
        "eval",
        "--params",
        p(&params),
        "--task",
        "oracle",
        "--data",
        p(&truth),
        "--out",
        p(&out),
    ]);
    let score: ScoreFile = serde_json::from_str(&read(&out)).unwrap();
    assert_eq!(score.task, "oracle_kl");
    assert!(score.score >= 0.0);

    let missing_vocab = sgdim(&[
        "eval",
        "--params",
        p(&params),
        "--task",
        "analogy",
        "--data",
        p(&questions),
        "--out",
        p(&out),
    ]);
    assert_eq!(missing_vocab.status.code(), Some(2));
}
