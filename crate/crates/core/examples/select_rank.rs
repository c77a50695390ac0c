//! Pick the number of factors (and the sparsity weight) by blockwise
//! cross-validation, and compare with BIC₁.
//!
//! cargo run --release --example select_rank

use icqf::rank::{bic1, default_plan};
use icqf::{fit, gen_dataset, select_k, EncodedConfounds, SolverConfig, SolverKind, SyntheticSpec};

fn main() -> icqf::Result<()> {
    let spec = SyntheticSpec { n: 120, m: 60, k_star: 5, delta: 0.1, seed: 4, ..SyntheticSpec::default() };
    let data = gen_dataset(&spec)?.observed();
    let confounds = EncodedConfounds::none(data.nrows());
    let config = SolverConfig::default().with_solver(SolverKind::Auto);

    let plan = default_plan(data.nrows(), data.ncols(), 0)?;
    println!("{} folds with sizes {:?}", plan.folds, plan.fold_sizes());
    let ks: Vec<usize> = (2..=8).collect();
    let result = select_k(&data, &confounds, &ks, &[0.05, 0.2], &plan, &config)?;

    println!("k   beta   BCV error   BIC1");
    for g in &result.grid {
        let (model, _) = fit(&data, &confounds, &config.clone().with_k(g.k).with_beta(g.beta))?;
        println!("{:<3} {:<6} {:>9.3}   {:>7.3}", g.k, g.beta, g.score.error, bic1(&data, &model, &confounds)?);
    }
    println!(
        "selected k = {} with beta = {} (true k = {})",
        result.selected_k, result.selected_beta, spec.k_star
    );
    Ok(())
}
