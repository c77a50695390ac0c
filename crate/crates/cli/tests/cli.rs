use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn icqf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_icqf")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = icqf(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_matrix(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn synth_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["synth", "--seed", "7", "--out", p(&a)]);
    ok(&["synth", "--seed", "7", "--out", p(&b)]);
    let (fa, fb) = (dir_bytes(&a), dir_bytes(&b));
    assert_eq!(fa.len(), 6);
    assert_eq!(fa, fb);
    ok(&["synth", "--seed", "8", "--out", p(&b)]);
    assert_ne!(fa, dir_bytes(&b));
}

#[test]
fn fit_then_transform_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let fit = tmp.path().join("fit");
    let tr = tmp.path().join("tr");
    ok(&["synth", "--seed", "3", "--delta", "0.1", "--out", p(&data)]);
    let m = data.join("M.csv");
    ok(&["fit", "--input", p(&m), "--k", "10", "--solver", "auto", "--out", p(&fit)]);
    for f in ["model/W.csv", "model/RQ.csv", "model/CQ.csv", "model/meta.json", "report.json", "loadings.csv"] {
        assert!(fit.join(f).exists(), "missing {f}");
    }
    let header = fs::read_to_string(fit.join("loadings.csv")).unwrap();
    assert!(header.starts_with("question_id,factor_0,"));
    assert!(header.lines().next().unwrap().ends_with(",intercept:1"));

    ok(&["transform", "--model", p(&fit.join("model")), "--input", p(&m), "--solver", "auto", "--out", p(&tr)]);
    let w = read_matrix(&fit.join("model/W.csv"));
    let w_new = read_matrix(&tr.join("W_new.csv"));
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in w.iter().flatten().zip(w_new.iter().flatten()) {
        num += (a - b) * (a - b);
        den += a * a;
    }
    let rel = (num / den).sqrt();
    assert!(rel <= 0.1, "transform drifted from fit: {rel}");
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&["synth", "--n", "60", "--m", "30", "--k-star", "3", "--seed", "1", "--out", p(&data)]);
    let m = data.join("M.csv");
    let mut runs = Vec::new();
    for t in ["1", "3"] {
        let out = tmp.path().join(format!("fit{t}"));
        ok(&["--threads", t, "fit", "--input", p(&m), "--k", "3", "--solver", "admm", "--out", p(&out)]);
        runs.push(dir_bytes(&out.join("model")));
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn confounds_flow_through_fit_and_transform() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut csv = String::from("q1,q2,q3,q4\n");
    let mut conf = String::from("id,age,site\n");
    for i in 0..12 {
        let v = (i % 4) as f64;
        let missing = if i == 5 { "NA".to_string() } else { format!("{}", 3.0 - v) };
        csv.push_str(&format!("{v},{missing},{},{}\n", (i % 3), 1 + i % 2));
        conf.push_str(&format!("{i},{},{}\n", 8 + i, if i % 2 == 0 { "a" } else { "b" }));
    }
    fs::write(dir.join("m.csv"), csv).unwrap();
    fs::write(dir.join("c.csv"), conf).unwrap();
    fs::write(
        dir.join("spec.json"),
        r#"[{"name": "age", "kind": "continuous"}, {"name": "site", "kind": "categorical"}]"#,
    )
    .unwrap();
    let fit = dir.join("fit");
    ok(&[
        "fit",
        "--input",
        p(&dir.join("m.csv")),
        "--confounds",
        p(&dir.join("c.csv")),
        "--confound-spec",
        p(&dir.join("spec.json")),
        "--k",
        "2",
        "--out",
        p(&fit),
    ]);
    let header = fs::read_to_string(fit.join("loadings.csv")).unwrap();
    assert_eq!(
        header.lines().next().unwrap(),
        "question_id,factor_0,factor_1,age:high,age:low,site:a,site:b,intercept:1"
    );
    ok(&[
        "transform",
        "--model",
        p(&fit.join("model")),
        "--input",
        p(&dir.join("m.csv")),
        "--confounds",
        p(&dir.join("c.csv")),
        "--out",
        p(&dir.join("tr")),
    ]);
    assert_eq!(read_matrix(&dir.join("tr/W_new.csv")).len(), 12);

    // The trained encoding needs its confounds back.
    let out = icqf(&["transform", "--model", p(&fit.join("model")), "--input", p(&dir.join("m.csv")), "--out", p(&dir.join("x"))]);
    assert!(!out.status.success());
}

#[test]
fn select_rank_and_match_write_results() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&["synth", "--n", "60", "--m", "30", "--k-star", "3", "--seed", "2", "--out", p(&data)]);
    let m = data.join("M.csv");
    let sel = tmp.path().join("sel");
    ok(&["select-rank", "--input", p(&m), "--k-grid", "2..4", "--beta-grid", "0.05,0.1", "--out", p(&sel)]);
    let result: serde_json::Value = serde_json::from_str(&fs::read_to_string(sel.join("rank_selection.json")).unwrap()).unwrap();
    assert_eq!(result["grid"].as_array().unwrap().len(), 6);
    let surface = fs::read_to_string(sel.join("error_surface.csv")).unwrap();
    assert_eq!(surface.lines().count(), 4);

    let fit = tmp.path().join("fit");
    ok(&["fit", "--input", p(&m), "--k", "3", "--out", p(&fit)]);
    let matched = tmp.path().join("match.json");
    ok(&["match", p(&fit.join("model")), p(&fit.join("model")), "--out", p(&matched)]);
    let result: serde_json::Value = serde_json::from_str(&fs::read_to_string(matched).unwrap()).unwrap();
    assert!((result["mean_r"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn bench_detect_writes_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bench");
    ok(&[
        "bench-detect",
        "--scheme",
        "bic1",
        "--delta",
        "0.1",
        "--replicates",
        "2",
        "--k-grid",
        "9..11",
        "--out",
        p(&out),
    ]);
    let text = fs::read_to_string(out.join("bench.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "scheme,delta,replicates,mean_error,std_error,k_hats");
    assert!(lines[1].starts_with("bic1,0.10000000000000001,2,"), "{}", lines[1]);
}

#[test]
fn failures_emit_one_json_line() {
    let tmp = tempfile::tempdir().unwrap();
    let out = icqf(&["fit", "--input", "does-not-exist.csv", "--out", p(tmp.path())]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1);
    let v: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(v["error"], "io");

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "a,b\n1,x\n").unwrap();
    let out = icqf(&["fit", "--input", p(&bad), "--out", p(tmp.path())]);
    let v: serde_json::Value = serde_json::from_str(String::from_utf8(out.stderr).unwrap().trim()).unwrap();
    assert_eq!(v["error"], "bad_cell");

    let out = icqf(&["bench-detect", "--scheme", "aic", "--out", p(tmp.path())]);
    let v: serde_json::Value = serde_json::from_str(String::from_utf8(out.stderr).unwrap().trim()).unwrap();
    assert_eq!(v["error"], "config");
}
