//! Compare two solutions by greedily pairing their loading columns on
//! Pearson correlation, e.g. across random restarts or cohorts.
//!
//! cargo run --example match_factors

use icqf::{fit, gen_dataset, greedy_match_factors, EncodedConfounds, InitKind, SolverConfig, SolverKind, SyntheticSpec};

fn main() -> icqf::Result<()> {
    let ds = gen_dataset(&SyntheticSpec { n: 120, m: 60, k_star: 5, delta: 0.1, seed: 9, ..SyntheticSpec::default() })?;
    let data = ds.observed();
    let confounds = EncodedConfounds::none(data.nrows());
    let base = SolverConfig::default().with_k(5).with_solver(SolverKind::Auto);

    let (a, _) = fit(&data, &confounds, &SolverConfig { init: InitKind::Random { seed: 1 }, ..base.clone() })?;
    let (b, _) = fit(&data, &confounds, &SolverConfig { init: InitKind::Random { seed: 2 }, ..base })?;

    let restarts = greedy_match_factors(a.rq.view(), b.rq.view())?;
    println!("restart vs restart:");
    for p in &restarts.pairs {
        println!("  factor {} <-> factor {}: r = {:.3}", p.a, p.b, p.r);
    }
    let truth = greedy_match_factors(ds.q_true.view(), a.rq.view())?;
    println!("mean r against the true loadings: {:.3}", truth.mean_r);
    Ok(())
}
