use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn nahlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nahlab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn nahlab")
}

fn ok(args: &[&str]) -> Output {
    let out = nahlab(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    nahlab(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn rect(&self) -> PathBuf {
        self.root.join("rect")
    }
    fn ood(&self) -> PathBuf {
        self.root.join("ood")
    }
    fn ckpt(&self) -> PathBuf {
        self.root.join("pre/best.ckpt")
    }
}

/// 50 rectangular samples, 4 out-of-distribution samples and a short
/// pre-training run, shared by the tests below.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        ok(&["gen-data", "--family", "rect", "--count", "50", "--seed", "1", "--out", s(&root.join("rect"))]);
        ok(&["gen-data", "--family", "ood", "--count", "4", "--seed", "2", "--out", s(&root.join("ood"))]);
        ok(&["pretrain", "--data", s(&root.join("rect")), "--out", s(&root.join("pre")), "--max-epochs", "30"]);
        Fixture { _dir: dir, root }
    })
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn dir_bytes(dir: &Path, skip: &[&str]) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !skip.iter().any(|s| p.file_name().unwrap() == *s))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn gen_data_rejects_zero_count() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&["gen-data", "--family", "rect", "--count", "0", "--out", s(d.path())]), 2);
}

#[test]
fn gen_data_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    for p in [&a, &b] {
        ok(&["gen-data", "--family", "ood", "--count", "3", "--seed", "9", "--out", s(p)]);
    }
    let da = dir_bytes(&a, &[]);
    assert!(da.iter().any(|(n, _)| n == "manifest.json"));
    assert_eq!(da, dir_bytes(&b, &[]));
    assert_eq!(code(&["gen-data", "--family", "ood", "--count", "3", "--jobs", "1", "--seed", "9", "--out", s(&b)]), 0);
    assert_eq!(da, dir_bytes(&b, &[]));
}

#[test]
fn rect_split_is_eight_one_one() {
    let m: serde_json::Value = serde_json::from_str(&read(&fixture().rect().join("manifest.json"))).unwrap();
    let splits: Vec<&str> = m["samples"].as_array().unwrap().iter().map(|e| e["split"].as_str().unwrap()).collect();
    let count = |k: &str| splits.iter().filter(|s| **s == k).count();
    assert_eq!((count("train"), count("val"), count("test")), (40, 5, 5));
}

#[test]
fn bad_config_file_exits_2() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("bad.toml");
    std::fs::write(&p, "[geometry]\nz_h = -1.0\n").unwrap();
    assert_eq!(code(&["--config", s(&p), "gen-data", "--family", "rect", "--count", "2", "--out", s(&d.path().join("x"))]), 2);
}

#[test]
fn pretrain_missing_dataset_exits_2() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&["pretrain", "--data", s(&d.path().join("nope")), "--out", s(&d.path().join("o"))]), 2);
}

#[test]
fn pretrain_smoke_writes_artifacts() {
    let f = fixture();
    let pre = f.root.join("pre");
    for name in ["best.ckpt", "last.ckpt", "history.csv", "state.json", "run.json", "config.toml", "timing.json"] {
        assert!(pre.join(name).exists(), "{name}");
    }
    let hist = read(&pre.join("history.csv"));
    assert!(hist.starts_with("epoch,train_loss,val_loss,lr,event\n"));
    let epochs = hist.lines().count() - 1;
    assert!((1..=30).contains(&epochs));
}

#[test]
fn resume_reproduces_uninterrupted_run() {
    let f = fixture();
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    ok(&["pretrain", "--data", s(&f.rect()), "--out", s(&a), "--max-epochs", "3"]);
    ok(&["pretrain", "--data", s(&f.rect()), "--out", s(&b), "--max-epochs", "2"]);
    ok(&["pretrain", "--data", s(&f.rect()), "--out", s(&b), "--max-epochs", "3", "--resume"]);
    assert_eq!(read(&a.join("history.csv")), read(&b.join("history.csv")));
    assert_eq!(std::fs::read(a.join("best.ckpt")).unwrap(), std::fs::read(b.join("best.ckpt")).unwrap());
}

#[test]
fn resume_without_state_exits_2() {
    let f = fixture();
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&["pretrain", "--data", s(&f.rect()), "--out", s(d.path()), "--resume"]), 2);
}

fn records(p: &Path) -> Vec<Vec<String>> {
    read(p).lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn finetune_writes_per_sample_outputs() {
    let f = fixture();
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("ft");
    ok(&["finetune", "--checkpoint", s(&f.ckpt()), "--data", s(&f.ood()), "--out", s(&out), "--samples", "3", "--epochs", "5"]);
    let recs = records(&out.join("records.csv"));
    assert_eq!(recs.len(), 3);
    assert!(recs.iter().all(|r| r[4] == "finetuned"));
    for r in &recs {
        assert!(out.join(format!("{}.ckpt", r[0])).exists());
        assert_eq!(read(&out.join(format!("{}.loss.csv", r[0]))).lines().count(), 7);
    }
    assert_eq!(records(&out.join("timings.csv")).len(), 3);
}

#[test]
fn random_init_records_are_tagged() {
    let f = fixture();
    let d = tempfile::tempdir().unwrap();
    ok(&["finetune", "--random-init", "--data", s(&f.ood()), "--out", s(d.path()), "--samples", "1", "--epochs", "2"]);
    let recs = records(&d.path().join("records.csv"));
    assert_eq!(recs[0][4], "finetuned_random_init");
}

#[test]
fn zero_epoch_finetune_matches_direct_inference() {
    let f = fixture();
    let d = tempfile::tempdir().unwrap();
    let ft = d.path().join("ft");
    ok(&["finetune", "--checkpoint", s(&f.ckpt()), "--data", s(&f.ood()), "--out", s(&ft), "--epochs", "0"]);
    let ev = d.path().join("pre.csv");
    ok(&["eval", "--checkpoint", s(&f.ckpt()), "--data", s(&f.ood()), "--out", s(&ev)]);
    let a = records(&ft.join("records.csv"));
    let b = records(&ev);
    assert_eq!(a.len(), 4);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x[0], y[0]);
        assert_eq!(&x[5..7], &y[5..7]);
    }
}

#[test]
fn finetune_is_reproducible() {
    let f = fixture();
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    ok(&["finetune", "--checkpoint", s(&f.ckpt()), "--data", s(&f.ood()), "--out", s(&a), "--samples", "2", "--epochs", "3"]);
    ok(&["--config", s(&a.join("config.toml")), "--jobs", "1", "finetune", "--checkpoint", s(&f.ckpt()), "--data", s(&f.ood()), "--out", s(&b), "--samples", "2"]);
    let skip = ["timings.csv", "run.json"];
    assert_eq!(dir_bytes(&a, &skip), dir_bytes(&b, &skip));
}

#[test]
fn cesm_eval_and_report_pipeline() {
    let f = fixture();
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.toml");
    std::fs::write(&cfg, "[esm]\nfista_iters = 50\n").unwrap();
    let ce = d.path().join("cesm");
    ok(&["--config", s(&cfg), "cesm", "--data", s(&f.ood()), "--out", s(&ce), "--samples", "2"]);
    let recs = records(&ce.join("records.csv"));
    assert_eq!(recs.len(), 2);
    assert!(recs.iter().all(|r| r[4] == "cesm"));
    assert!(ce.join(format!("{}.cesm.json", recs[0][0])).exists());
    assert!(ce.join(format!("{}.cesm.v.naht", recs[0][0])).exists());

    let pre = d.path().join("pre.csv");
    ok(&["eval", "--checkpoint", s(&f.ckpt()), "--data", s(&f.ood()), "--samples", "2", "--out", s(&pre)]);
    let merged = d.path().join("all.csv");
    ok(&["eval", "--records", s(&pre), s(&ce.join("records.csv")), "--out", s(&merged)]);
    assert_eq!(records(&merged).len(), 4);
    assert_eq!(code(&["eval", "--records", s(&merged), s(&pre), "--out", s(&d.path().join("dup.csv"))]), 2);

    let rep = d.path().join("report");
    let out = ok(&["report", "--records", s(&merged), "--timings", s(&ce.join("timings.csv")), "--out", s(&rep)]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("| pre-trained |"));
    assert!(table.contains("per sample |"));
    assert_eq!(table, read(&rep.join("summary.md")));
    let cdf = read(&rep.join("cdf.csv"));
    for m in ["pretrained", "cesm"] {
        for metric in ["ncc", "nmse"] {
            let last = cdf.lines().filter(|l| l.starts_with(&format!("{m},{metric},"))).next_back().unwrap();
            assert!(last.ends_with(",1"), "{last}");
        }
    }
    assert!(read(&rep.join("histogram.csv")).starts_with("method,mode_index,count\n"));
}

#[test]
fn report_renders_reference_fixture() {
    let d = tempfile::tempdir().unwrap();
    let recs = d.path().join("r.csv");
    std::fs::write(
        &recs,
        "id,family,mode_index,frequency,method,nmse,ncc,runtime_s\n\
         a,MaskedOOD,0,100,pretrained,-0.33,0.5452,14724\n\
         a,MaskedOOD,0,100,finetuned,-1.76,0.6066,76.8\n\
         a,MaskedOOD,0,100,cesm,-1.13,0.632,\n",
    )
    .unwrap();
    let out = ok(&["report", "--records", s(&recs), "--out", s(&d.path().join("rep"))]);
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        "| model | NMSE (dB) | NCC | runtime |\n\
         |---|---|---|---|\n\
         | pre-trained | -0.33 | 54.52% | 4.09 h |\n\
         | fine-tuned | -1.76 | 60.66% | 1.28 min per sample |\n\
         | C-ESM | -1.13 | 63.20% | - |\n"
    );
}

#[test]
fn report_rejects_foreign_schema() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("r.csv");
    std::fs::write(&p, "id,score\na,1\n").unwrap();
    assert_eq!(code(&["report", "--records", s(&p), "--out", s(d.path())]), 2);
}

#[test]
fn help_exits_zero() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["no-such-command"]), 2);
}
