//! ADMM with box-lasso row solves versus cyclic coordinate descent: same
//! problem, same stopping rule, similar optimum, very different cost.
//!
//! cargo run --release --example solvers

use std::time::Instant;

use icqf::{fit_admm, fit_cd, gen_dataset, EncodedConfounds, SolverConfig, SyntheticSpec};

fn main() -> icqf::Result<()> {
    let ds = gen_dataset(&SyntheticSpec { n: 120, m: 60, k_star: 5, delta: 0.1, ..SyntheticSpec::default() })?;
    let data = ds.observed();
    let confounds = EncodedConfounds::intercept_only(data.nrows());
    let config = SolverConfig::default().with_k(5);

    let t = Instant::now();
    let (_, admm) = fit_admm(&data, &confounds, &config)?;
    let admm_time = t.elapsed();
    let t = Instant::now();
    let (_, cd) = fit_cd(&data, &confounds, &config)?;
    let cd_time = t.elapsed();

    println!("solver  iterations  data fit     Lagrangian   time");
    for (name, r, time) in [("admm", &admm, admm_time), ("cd", &cd, cd_time)] {
        println!(
            "{name:<7} {:>10}  {:>10.2}  {:>11.2}   {time:.2?}",
            r.iterations,
            r.final_data_fit(),
            r.lagrangian_trace.last().unwrap()
        );
    }
    println!(
        "relative data-fit gap {:.4}; both traces monotone: {}",
        (admm.final_data_fit() - cd.final_data_fit()).abs() / admm.final_data_fit(),
        admm.is_monotone(1e-8) && cd.is_monotone(1e-8)
    );
    Ok(())
}
