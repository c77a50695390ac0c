use std::fs;

use icqf::io::{load_confound_specs, load_confound_table};
use icqf::{
    encode_confounds, fit, gen_dataset, load_masked_matrix, load_model, save_model, transform, EncodedConfounds,
    SolverConfig, SolverKind, SyntheticSpec,
};

#[test]
fn files_to_model_and_back() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = String::from("a,b,c,d,e\n");
    let mut c = String::from("age,sex\n");
    for i in 0..30 {
        let row: Vec<String> = (0..5)
            .map(|j| if (i * 5 + j) % 11 == 3 { "NA".into() } else { ((i * j + i) % 5).to_string() })
            .collect();
        m.push_str(&(row.join(",") + "\n"));
        c.push_str(&format!("{},{}\n", 6 + i % 12, if i % 3 == 0 { "F" } else { "M" }));
    }
    fs::write(dir.path().join("m.csv"), m).unwrap();
    fs::write(dir.path().join("c.csv"), c).unwrap();
    fs::write(
        dir.path().join("spec.json"),
        r#"[{"name": "age", "kind": "continuous"}, {"name": "sex", "kind": "categorical"}]"#,
    )
    .unwrap();

    let data = load_masked_matrix(dir.path().join("m.csv"), "NA").unwrap();
    assert_eq!(data.dim(), (30, 5));
    assert!(data.observed_count() < 150);
    let specs = load_confound_specs(dir.path().join("spec.json")).unwrap();
    let raw = load_confound_table(dir.path().join("c.csv"), &specs).unwrap();
    let conf = encode_confounds(&raw, 30).unwrap();
    assert_eq!(conf.ncols(), 5);

    let cfg = SolverConfig::default().with_k(2);
    let (model, report) = fit(&data, &conf, &cfg).unwrap();
    assert!(report.is_monotone(1e-8));
    model.check_constraints(1e-9).unwrap();

    save_model(dir.path().join("model"), &model, &conf, data.column_ids()).unwrap();
    let (back, meta) = load_model(dir.path().join("model")).unwrap();
    assert_eq!(back.rq, model.rq);
    assert_eq!(meta.question_ids, vec!["a", "b", "c", "d", "e"]);

    // Re-encoding with the stored rules reproduces the training design.
    let again = meta.confound_encoder.encode(&raw, 30).unwrap();
    assert_eq!(again.matrix(), conf.matrix());
    let (w, _) = transform(&data, &again, &back, &cfg).unwrap();
    assert_eq!(w.dim(), (30, 2));
    assert!(w.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn transform_reproduces_fit_scores() {
    let ds = gen_dataset(&SyntheticSpec { n: 120, m: 60, k_star: 5, delta: 0.1, seed: 2, ..SyntheticSpec::default() }).unwrap();
    let data = ds.observed();
    let conf = EncodedConfounds::intercept_only(120);
    for solver in [SolverKind::Admm, SolverKind::Cd] {
        let cfg = SolverConfig::default().with_k(5).with_solver(solver);
        let (model, _) = fit(&data, &conf, &cfg).unwrap();
        let (w, _) = transform(&data, &conf, &model, &cfg).unwrap();
        let num: f64 = (&w - &model.w).iter().map(|v| v * v).sum();
        let den: f64 = model.w.iter().map(|v| v * v).sum();
        let rel = (num / den).sqrt();
        assert!(rel <= 0.1, "{solver:?}: relative W gap {rel}");
    }
}

#[test]
fn baseline_lifts_the_boxes() {
    let data = gen_dataset(&SyntheticSpec { n: 80, m: 40, k_star: 4, seed: 1, ..SyntheticSpec::default() }).unwrap().observed();
    let cfg = SolverConfig { baseline_l1nmf: true, ..SolverConfig::default().with_k(4) };
    let (model, _) = fit(&data, &EncodedConfounds::none(80), &cfg).unwrap();
    assert!(model.w_upper.is_infinite() && model.q_upper.is_infinite() && model.upper.is_infinite());
    assert_eq!(model.cq.ncols(), 0);
    assert!(model.w.iter().chain(model.rq.iter()).all(|&v| v >= 0.0));
}
