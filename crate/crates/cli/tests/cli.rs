use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_floodrefine"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn floodrefine")
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&o.stderr),
        String::from_utf8_lossy(&o.stdout)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Small dataset: 16×16 tiles, 8 train + 4 test.
fn small_data(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    ok(&["gen", "--tiles", "12", "--test-tiles", "4", "--size", "16", "--seed", "5", "--out", s(&data)]);
    data.join("manifest.tsv")
}

fn manifest_rows(p: &Path) -> usize {
    fs::read_to_string(p)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .count()
}

#[test]
fn gen_writes_requested_rows_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    let args = ["gen", "--tiles", "200", "--size", "64", "--seed", "42", "--out", s(&out)];
    let stdout = ok(&args);
    assert!(stdout.contains("tiles=200"));
    assert_eq!(manifest_rows(&out.join("manifest.tsv")), 200);
    let first = tree(&out);
    ok(&args);
    assert!(first == tree(&out), "rerun changed the dataset tree");
    assert!(first.contains_key(Path::new("gen.config")));
}

#[test]
fn single_scenario_uses_plain_tag() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    ok(&["gen", "--tiles", "3", "--size", "32", "--noise", "high", "--scenario", "tdc", "--out", s(&out)]);
    let m = fs::read_to_string(out.join("manifest.tsv")).unwrap();
    assert!(m.contains("# scenario tdc kind=tdc noise=high noise_radius_m=100 "), "{m}");
    let row = m.lines().find(|l| !l.starts_with('#')).unwrap();
    let points = row.split('\t').nth(4).unwrap();
    assert!(points.starts_with("tdc:"), "{points}");
    assert!(!points.contains(','));
}

#[test]
fn train_infer_eval_round() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_data(dir.path());
    let tr = dir.path().join("train");
    let args = [
        "train", "--manifest", s(&manifest), "--model", "refiner", "--labels", "coarse", "--points", "tdc-low",
        "--epochs", "2", "--val-tiles", "2", "--out", s(&tr),
    ];
    ok(&args);
    let ckpt = tr.join("model.ckpt");
    assert!(ckpt.exists());
    let log = fs::read_to_string(tr.join("metrics.log")).unwrap();
    assert_eq!(log.lines().filter(|l| !l.starts_with('#')).count(), 4, "{log}");

    // The echoed config alone reproduces the run.
    let replay = dir.path().join("replay");
    ok(&["train", "--config", s(&tr.join("train.config")), "--out", s(&replay)]);
    assert_eq!(fs::read(&ckpt).unwrap(), fs::read(replay.join("model.ckpt")).unwrap());

    let data = manifest.parent().unwrap();
    let inf = dir.path().join("inf");
    ok(&[
        "infer", "--ckpt", s(&ckpt), "--tile", s(&data.join("imagery/test-00000.s2c")), "--points",
        s(&data.join("points/tdc-low/test-00000.s2c")), "--out", s(&inf),
    ]);
    for f in ["test-00000.prob.s2c", "test-00000.mask.s2c", "test-00000.prob.pgm", "test-00000.mask.pgm"] {
        assert!(inf.join(f).exists(), "{f}");
    }

    let o = run(&["infer", "--ckpt", s(&ckpt), "--tile", s(&data.join("imagery/test-00000.s2c")), "--out", s(&inf)]);
    assert_eq!(o.status.code(), Some(2), "points model without points");

    let ev = ok(&["eval", "--ckpt", s(&ckpt), "--manifest", s(&manifest), "--split", "test", "--out", s(&dir.path().join("ev"))]);
    assert!(ev.lines().any(|l| l.starts_with("acc=")), "{ev}");
    assert!(ev.lines().any(|l| l.starts_with("miou=")), "{ev}");
    assert!(ev.contains("tiles=4"));
}

#[test]
fn ablate_prints_five_rows_of_medians() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_data(dir.path());
    let out = dir.path().join("ab");
    let stdout = ok(&[
        "ablate", "--manifest", s(&manifest), "--seeds", "1,2,3,4,5", "--epochs", "1", "--val-tiles", "1",
        "--base-channels", "2", "--out", s(&out),
    ]);
    let rows = ["No Points", "Low / Low", "Low / High", "High / Low", "High / High"];
    for r in rows {
        let line = stdout.lines().find(|l| l.starts_with(r)).unwrap_or_else(|| panic!("{r}\n{stdout}"));
        // label, acc, miou, |, paper acc, paper miou, |, five seeds
        let nums: Vec<f64> = line[r.len()..].split_whitespace().filter_map(|t| t.parse().ok()).collect();
        assert_eq!(nums.len(), 9, "{line}");
    }
    let tsv = fs::read_to_string(out.join("ablation.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 6);
    assert!(tsv.lines().all(|l| l.split('\t').count() == 11));
    assert_eq!(fs::read_dir(out.join("checkpoints")).unwrap().count(), 25);

    let rep = ok(&["report", "--out", s(&dir.path().join("rep")), s(&out.join("ablation.summary"))]);
    assert!(rep.contains("Point dispersion and GPS noise"));
    assert!(rep.contains("directional comparison only"));
}

#[test]
fn report_embeds_published_values() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["report", "--out", s(dir.path())]);
    let line = out.lines().find(|l| l.starts_with("Refiner / Fine")).unwrap();
    assert!(line.contains("98.1 / 64.9"), "{line}");
}

#[test]
fn gradcheck_passes_and_prints_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["gradcheck", "--out", s(dir.path())]);
    assert_eq!(out.lines().count(), 8);
    assert!(out.lines().all(|l| l.contains(" pass max_rel_err=")), "{out}");
}

#[test]
fn impossible_tolerance_is_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gradcheck", "--tol", "1e-30", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["gen", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&["gen", "--tiles", "many"]).status.code(), Some(2));
    let bad = dir.path().join("bad.config");
    fs::write(&bad, "colour=blue\n").unwrap();
    assert_eq!(run(&["gen", "--config", s(&bad)]).status.code(), Some(2));
    let missing = dir.path().join("nope.ckpt");
    let o = run(&["eval", "--ckpt", s(&missing), "--manifest", s(&missing), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8(o.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
}
