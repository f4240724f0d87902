mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use common::fake_scorer::{respond, FakeScorer};
use common::{config, config_text, snapshot, synth, World};

use ccprobe::dataset::load_dataset;
use ccprobe::decision::{AnchorDecision, Verdict};
use ccprobe::extraction::{AnchorExample, BackgroundSet};
use ccprobe::metrics::ScoreRecord;
use ccprobe::pipeline::{locate, read_json, read_jsonl, Manifest, MetricsSummary, Pipeline, PipelineError, Stage};
use ccprobe::synthetic::SyntheticSpec;

fn world(dir: &Path) -> World {
    synth(
        &dir.join("world"),
        &SyntheticSpec {
            seed: 3,
            ..Default::default()
        },
    )
}

fn run_all(w: &World, out: &Path, seed: u64, extra: &str) -> Result<Manifest, PipelineError> {
    let mut p = Pipeline::open(config(&w.paths, out, seed, extra))?;
    p.run(&Stage::ALL).cloned()
}

fn mtimes(dir: &Path) -> Vec<(PathBuf, std::time::SystemTime)> {
    snapshot(dir)
        .keys()
        .map(|p| (p.clone(), fs::metadata(dir.join(p)).unwrap().modified().unwrap()))
        .collect()
}

#[test]
fn happy_path_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let w = world(tmp.path());
    let out = tmp.path().join("run");
    let manifest = run_all(&w, &out, 7, "").unwrap();

    assert_eq!(manifest.seed, Some(7));
    assert_eq!(manifest.stages.len(), Stage::ALL.len());
    assert_eq!(manifest.stages[&Stage::Extract].counts["anchors"], 100);
    assert!(manifest.stages[&Stage::Extract].counts["positives"] > 0);
    for record in manifest.stages.values() {
        for entry in record.artifacts.values() {
            assert!(out.join(&entry.path).exists(), "{}", entry.path);
        }
    }
    for f in [
        "consistency.tsv",
        "performance.tsv",
        "bias.tsv",
        "consistency.svg",
        "breakdown_relation.svg",
    ] {
        assert!(out.join("report").join(f).exists(), "{f}");
    }

    let summary: MetricsSummary = read_json(&out.join("metrics.json")).unwrap();
    assert_eq!(summary.n_anchors, 100);
    let cc = summary.consistency.expect("consistency defined").cc;
    assert!((0.0..=1.0).contains(&cc));
    assert!(summary.backend.starts_with("mock"));
}

#[test]
fn artifacts_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let w = world(tmp.path());
    let out = tmp.path().join("run");
    run_all(&w, &out, 7, "").unwrap();

    let (header, anchors): (_, Vec<AnchorExample>) = read_jsonl(&out.join("anchors.jsonl"), "anchors").unwrap();
    assert_eq!(header.seed, Some(7));
    assert_eq!(header.schema_version, 1);
    assert_eq!(anchors, load_dataset(&w.paths.dataset).unwrap());
    assert_eq!(anchors, w.world.anchors);

    let (_, backgrounds): (_, Vec<BackgroundSet>) = read_jsonl(&out.join("background.jsonl"), "background").unwrap();
    let (_, verdicts): (_, Vec<Verdict>) = read_jsonl(&out.join("verdicts.jsonl"), "verdicts").unwrap();
    let (_, decisions): (_, Vec<AnchorDecision>) =
        read_jsonl(&out.join("anchor_decisions.jsonl"), "anchor_decisions").unwrap();
    let (_, scores): (_, Vec<ScoreRecord>) = read_jsonl(&out.join("scores.jsonl"), "scores").unwrap();
    assert_eq!(backgrounds.len(), 100);
    assert_eq!(decisions.len(), 100);
    assert_eq!(scores.len(), 100);
    let facts: std::collections::BTreeSet<_> = backgrounds.iter().flat_map(|b| b.facts().cloned()).collect();
    assert_eq!(verdicts.len(), facts.len());
    for v in &verdicts {
        assert_eq!(v.correct, v.decided == v.fact.polarity);
    }
    assert!(read_jsonl::<Verdict>(&out.join("verdicts.jsonl"), "anchors").is_err());
}

#[test]
fn rerun_is_a_no_op() {
    let tmp = tempfile::tempdir().unwrap();
    let w = world(tmp.path());
    let out = tmp.path().join("run");
    run_all(&w, &out, 7, "").unwrap();
    let before = snapshot(&out);
    let times = mtimes(&out);
    std::thread::sleep(std::time::Duration::from_millis(20));
    run_all(&w, &out, 7, "").unwrap();
    assert_eq!(snapshot(&out), before);
    let after: Vec<_> = mtimes(&out)
        .into_iter()
        .filter(|(p, _)| p != Path::new("manifest.json"))
        .collect();
    let before_times: Vec<_> = times
        .into_iter()
        .filter(|(p, _)| p != Path::new("manifest.json"))
        .collect();
    assert_eq!(after, before_times, "no artifact was rewritten");
}

#[test]
fn deleted_metrics_are_recomputed_from_upstream() {
    let tmp = tempfile::tempdir().unwrap();
    let w = world(tmp.path());
    let out = tmp.path().join("run");
    run_all(&w, &out, 7, "").unwrap();
    let before = snapshot(&out);
    let upstream: Vec<_> = mtimes(&out)
        .into_iter()
        .filter(|(p, _)| ["kb.bin", "background.jsonl", "verdicts.jsonl"].contains(&p.to_str().unwrap()))
        .collect();
    assert_eq!(upstream.len(), 3);
    fs::remove_file(out.join("metrics.json")).unwrap();

    // Without a seed on the command line the recorded one is reused.
    let mut cfg = config(&w.paths, &out, 0, "");
    cfg.seed = None;
    Pipeline::open(cfg).unwrap().run(&[Stage::Metrics]).unwrap();

    assert_eq!(
        fs::read(out.join("metrics.json")).unwrap(),
        before[Path::new("metrics.json")]
    );
    let again: Vec<_> = mtimes(&out)
        .into_iter()
        .filter(|(p, _)| upstream.iter().any(|(q, _)| q == p))
        .collect();
    assert_eq!(again, upstream, "upstream artifacts were reused");
    // The report stage is dropped until it runs again.
    let manifest = Manifest::load(&out).unwrap().unwrap();
    assert!(!manifest.stages.contains_key(&Stage::Report));
    run_all(&w, &out, 7, "").unwrap();
    assert_eq!(snapshot(&out), before);
}

#[test]
fn interrupted_runs_resume_to_the_same_result() {
    let tmp = tempfile::tempdir().unwrap();
    let w = world(tmp.path());
    let reference = tmp.path().join("reference");
    run_all(&w, &reference, 7, "").unwrap();
    let expected = snapshot(&reference);

    for cut in 1..Stage::ALL.len() {
        let out = tmp.path().join(format!("cut{cut}"));
        Pipeline::open(config(&w.paths, &out, 7, ""))
            .unwrap()
            .run(&Stage::ALL[..cut])
            .unwrap();
        // A stray temporary file, as left by a write killed mid-way.
        fs::write(out.join("verdicts.jsonl.tmp"), b"partial").unwrap();
        run_all(&w, &out, 7, "").unwrap();
        fs::remove_file(out.join("verdicts.jsonl.tmp")).ok();
        assert_eq!(snapshot(&out), expected, "resumed after {} stages", cut);
    }
}

#[test]
fn tampered_upstream_artifact_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let w = world(tmp.path());
    let out = tmp.path().join("run");
    run_all(&w, &out, 7, "").unwrap();
    let path = out.join("background.jsonl");
    let mut bytes = fs::read(&path).unwrap();
    bytes.extend_from_slice(b"\n");
    fs::write(&path, bytes).unwrap();

    let err = Pipeline::open(config(&w.paths, &out, 7, ""))
        .unwrap()
        .run(&[Stage::Score])
        .unwrap_err();
    assert!(matches!(err, PipelineError::Data(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn missing_upstream_stage_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let w = world(tmp.path());
    let out = tmp.path().join("run");
    let err = Pipeline::open(config(&w.paths, &out, 7, ""))
        .unwrap()
        .run(&[Stage::Score])
        .unwrap_err();
    assert!(
        matches!(
            err,
            PipelineError::MissingStage {
                stage: Stage::Ingest,
                ..
            }
        ),
        "{err}"
    );

    run_all(&w, &out, 7, "").unwrap();
    fs::remove_file(out.join("kb.bin")).unwrap();
    let err = Pipeline::open(config(&w.paths, &out, 7, ""))
        .unwrap()
        .run(&[Stage::Metrics])
        .unwrap_err();
    assert!(
        matches!(
            err,
            PipelineError::MissingStage {
                stage: Stage::Ingest,
                ..
            }
        ),
        "{err}"
    );
}

#[test]
fn seed_change_reextracts_and_changes_negatives() {
    let tmp = tempfile::tempdir().unwrap();
    let w = world(tmp.path());
    let out = tmp.path().join("run");
    run_all(&w, &out, 7, "").unwrap();
    let first = fs::read(out.join("background.jsonl")).unwrap();
    let kb = fs::read(out.join("kb.bin")).unwrap();
    let manifest = run_all(&w, &out, 8, "").unwrap();
    assert_eq!(manifest.seed, Some(8));
    assert_eq!(
        fs::read(out.join("kb.bin")).unwrap(),
        kb,
        "ingest does not depend on the seed"
    );
    assert_ne!(fs::read(out.join("background.jsonl")).unwrap(), first);
}

#[test]
fn scoring_with_a_seed_other_than_extraction_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let w = world(tmp.path());
    let out = tmp.path().join("run");
    run_all(&w, &out, 7, "").unwrap();
    let err = Pipeline::open(config(&w.paths, &out, 8, ""))
        .unwrap()
        .run(&[Stage::Score])
        .unwrap_err();
    assert!(matches!(err, PipelineError::Config(_)), "{err}");
}

#[test]
fn large_artifacts_are_gzipped_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let w = world(tmp.path());
    let extra = "[artifacts]\ngzip_threshold_bytes = 1024\n";
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_all(&w, &a, 7, extra).unwrap();
    run_all(&w, &b, 7, extra).unwrap();
    assert!(a.join("verdicts.jsonl.gz").exists());
    assert!(!a.join("verdicts.jsonl").exists());
    assert_eq!(snapshot(&a), snapshot(&b));
    let (_, verdicts): (_, Vec<Verdict>) = read_jsonl(&locate(&a, "verdicts.jsonl").unwrap(), "verdicts").unwrap();
    assert!(!verdicts.is_empty());

    let plain = tmp.path().join("plain");
    run_all(&w, &plain, 7, "").unwrap();
    let m_gz: MetricsSummary = read_json(&a.join("metrics.json")).unwrap();
    let m_plain: MetricsSummary = read_json(&plain.join("metrics.json")).unwrap();
    assert_eq!(m_gz, m_plain);
}

#[test]
fn remote_backend_runs_end_to_end() {
    let know = |prompt: &str, word: &str| {
        let yes = word.trim().eq_ignore_ascii_case("yes") || word.trim().eq_ignore_ascii_case("true");
        let odd = prompt.len() % 2 == 1;
        match (yes, odd) {
            (true, true) | (false, false) => -0.5,
            _ => -1.5,
        }
    };
    let server = FakeScorer::start(Box::new(move |_, req| (200, respond(req, Some(&know)))));
    let tmp = tempfile::tempdir().unwrap();
    let w = synth(
        &tmp.path().join("world"),
        &SyntheticSpec {
            seed: 3,
            anchors: 20,
            ..Default::default()
        },
    );
    let out = tmp.path().join("run");
    let extra = format!(
        "[scoring]\nbackend = \"remote\"\nnormalization = \"sum\"\n\n[scoring.remote]\nendpoint = \"{}\"\nmodel = \"fake\"\n",
        server.endpoint
    );
    let manifest = run_all(&w, &out, 7, &extra).unwrap();
    assert_eq!(manifest.stages[&Stage::Score].counts["anchor_decisions"], 20);
    let requests = server.requests.lock().unwrap();
    assert!(requests
        .iter()
        .all(|(path, body)| path == "/v1/score" && body["normalize"] == "sum"));
    let summary: MetricsSummary = read_json(&out.join("metrics.json")).unwrap();
    assert_eq!(summary.backend, "remote(fake)");
}

fn ccprobe(args: &[&str], env: &[(&str, &str)]) -> (i32, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ccprobe"));
    cmd.args(args).env_remove("CC_SCORER_ENDPOINT");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn cli_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("synth");
    let d = dir.to_str().unwrap();
    let (code, err) = ccprobe(&["synth", "--out", d, "--anchors", "20"], &[]);
    assert_eq!(code, 0, "{err}");
    let cfg = dir.join("ccprobe.toml");
    let c = cfg.to_str().unwrap();

    let (code, err) = ccprobe(&["run", "--config", c, "--seed", "7"], &[]);
    assert_eq!(code, 0, "{err}");
    assert!(dir.join("run/report/consistency.tsv").exists());

    let (code, _) = ccprobe(&["run", "--config", "/nonexistent/ccprobe.toml", "--seed", "7"], &[]);
    assert_eq!(code, 2, "missing config");
    let (code, _) = ccprobe(&["run", "--config", c, "--seed", "7", "--rule", "nonsense"], &[]);
    assert_eq!(code, 2, "bad rule is rejected at parse time");
    let (code, _) = ccprobe(&["score", "--config", c, "--seed", "8"], &[]);
    assert_eq!(code, 2, "seed mismatch");

    let bg = dir.join("run/background.jsonl");
    let original = fs::read(&bg).unwrap();
    fs::write(&bg, b"garbage").unwrap();
    let (code, err) = ccprobe(&["metrics", "--config", c], &[]);
    assert_eq!(code, 3, "{err}");
    fs::write(&bg, original).unwrap();

    let offline = dir.join("offline.toml");
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("backend = \"mock\"", "backend = \"remote\"")
        + "\n[scoring.remote]\nendpoint = \"http://127.0.0.1:1\"\nmodel = \"m\"\nmax_retries = 0\n";
    fs::write(&offline, text).unwrap();
    let o = offline.to_str().unwrap();
    let (code, err) = ccprobe(
        &[
            "run",
            "--config",
            o,
            "--seed",
            "7",
            "--output-dir",
            tmp.path().join("r2").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code, 4, "{err}");
    assert!(err.contains("127.0.0.1:1"), "{err}");

    // The environment variable takes the place of the configured endpoint.
    let (code, err) = ccprobe(
        &[
            "run",
            "--config",
            o,
            "--seed",
            "7",
            "--output-dir",
            tmp.path().join("r3").to_str().unwrap(),
        ],
        &[("CC_SCORER_ENDPOINT", "http://127.0.0.1:2")],
    );
    assert_eq!(code, 4);
    assert!(err.contains("127.0.0.1:2"), "{err}");
}

#[test]
fn report_combines_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let w = world(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_all(&w, &a, 7, "").unwrap();
    run_all(&w, &b, 7, "[scoring]\nrule = \"per-meta-prompt-vote\"\n").unwrap();
    let out = tmp.path().join("combined");
    let (code, err) = ccprobe(
        &[
            "report",
            "--run-dir",
            a.to_str().unwrap(),
            "--run-dir",
            b.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(code, 0, "{err}");
    let table = fs::read_to_string(out.join("consistency.tsv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.contains("per-meta-prompt-vote"));
    assert!(table.contains("global-argmax"));
}

#[test]
fn config_errors_are_specific() {
    let tmp = tempfile::tempdir().unwrap();
    let w = world(tmp.path());
    let out = tmp.path().join("run");
    let bad = config_text(&w.paths, &out, "[scoring.mock]\nknowledge_rate = 2.0\n");
    let err = ccprobe::pipeline::RunConfig::from_toml_str(&bad, Path::new("/")).unwrap_err();
    assert!(err.to_string().contains("knowledge_rate"), "{err}");
    let unknown = config_text(&w.paths, &out, "[scoring]\nbakend = \"mock\"\n");
    assert!(ccprobe::pipeline::RunConfig::from_toml_str(&unknown, Path::new("/")).is_err());
}
