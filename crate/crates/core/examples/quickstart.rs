//! Fit a model to a small synthetic questionnaire and inspect what came out.
//!
//! cargo run --example quickstart

use icqf::{fit, gen_dataset, masked_rmse, EncodedConfounds, SolverConfig, SolverKind, SyntheticSpec};

fn main() -> icqf::Result<()> {
    let spec = SyntheticSpec { n: 120, m: 40, k_star: 4, delta: 0.05, ..SyntheticSpec::default() };
    let ds = gen_dataset(&spec)?;
    let data = ds.observed();
    let confounds = EncodedConfounds::intercept_only(data.nrows());

    let config = SolverConfig::default().with_k(4).with_beta(0.1).with_solver(SolverKind::Auto);
    let (model, report) = fit(&data, &confounds, &config)?;

    println!(
        "{} iterations, converged: {}, stop: {:?}",
        report.iterations, report.converged, report.stop_reason
    );
    println!("Lagrangian {:.2} -> {:.2}", report.lagrangian_trace[0], report.lagrangian_trace.last().unwrap());
    println!("masked RMSE {:.3} on a 0..{} scale", masked_rmse(&data, &model, &confounds)?, spec.value_max);

    // W lives in [0, 1]; Q is nonnegative and bounded by the data maximum.
    let w_max = model.w.iter().cloned().fold(0.0, f64::max);
    let q_max = model.rq.iter().cloned().fold(0.0, f64::max);
    let zeros = model.rq.iter().filter(|&&v| v == 0.0).count();
    println!("max W {w_max:.3}, max Q {q_max:.1} (bound {:.1})", model.q_upper);
    println!("{zeros} of {} factor loadings are exactly zero", model.rq.len());

    for f in 0..model.k {
        let col = model.rq.column(f);
        let mut top: Vec<usize> = (0..col.len()).collect();
        top.sort_by(|&a, &b| col[b].total_cmp(&col[a]));
        println!("factor {f}: strongest questions {:?}", &top[..5]);
    }
    Ok(())
}
