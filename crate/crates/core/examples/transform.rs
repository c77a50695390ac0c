//! Train on some participants, save the model, reload it and score new
//! participants with the loadings held fixed.
//!
//! cargo run --example transform

use icqf::{fit, gen_dataset, load_model, save_model, transform, EncodedConfounds, MaskedMatrix, SolverConfig, SolverKind, SyntheticSpec};
use ndarray::s;

fn main() -> icqf::Result<()> {
    let ds = gen_dataset(&SyntheticSpec { n: 160, m: 50, k_star: 4, delta: 0.05, seed: 5, ..SyntheticSpec::default() })?;
    let train = MaskedMatrix::from_dense(ds.m_noisy.slice(s![..120, ..]).to_owned())?;
    let test = MaskedMatrix::from_dense(ds.m_noisy.slice(s![120.., ..]).to_owned())?;
    let config = SolverConfig::default().with_k(4).with_solver(SolverKind::Auto);

    let train_conf = EncodedConfounds::intercept_only(train.nrows());
    let (model, _) = fit(&train, &train_conf, &config)?;

    let dir = std::env::temp_dir().join("icqf-transform-example");
    save_model(&dir, &model, &train_conf, train.column_ids())?;
    let (trained, meta) = load_model(&dir)?;
    println!("reloaded k = {} model over {} questions", meta.k, meta.question_ids.len());

    let (w_new, report) = transform(&test, &EncodedConfounds::intercept_only(test.nrows()), &trained, &config)?;
    println!("scored {} new participants in {} iterations", w_new.nrows(), report.iterations);

    // The held-out rows' factor scores track the true ones (up to factor order).
    let truth = ds.w_true.slice(s![120.., ..]);
    let matched = icqf::greedy_match_factors(truth, w_new.view())?;
    println!("mean correlation with true factor scores: {:.3}", matched.mean_r);
    Ok(())
}
