//! The same loop with every upper bound lifted and no intercept is plain
//! ℓ₁-regularized NMF. Compare how the two spread scale between W and Q.
//!
//! cargo run --example baseline_l1nmf

use icqf::{fit, gen_dataset, masked_rmse, EncodedConfounds, SolverConfig, SolverKind, SyntheticSpec};

fn main() -> icqf::Result<()> {
    let data = gen_dataset(&SyntheticSpec { n: 120, m: 50, k_star: 4, delta: 0.05, seed: 3, ..SyntheticSpec::default() })?.observed();
    let n = data.nrows();
    let icqf_cfg = SolverConfig::default().with_k(4).with_solver(SolverKind::Auto);
    let nmf_cfg = SolverConfig { baseline_l1nmf: true, ..icqf_cfg.clone() };

    for (name, cfg, conf) in [
        ("icqf", icqf_cfg, EncodedConfounds::intercept_only(n)),
        ("l1-nmf", nmf_cfg, EncodedConfounds::none(n)),
    ] {
        let (model, _) = fit(&data, &conf, &cfg)?;
        let w_max = model.w.iter().cloned().fold(0.0, f64::max);
        let q_max = model.rq.iter().cloned().fold(0.0, f64::max);
        println!(
            "{name:<7} rmse {:.3}  max W {w_max:>7.3}  max Q {q_max:>8.2}",
            masked_rmse(&data, &model, &conf)?
        );
    }
    Ok(())
}
