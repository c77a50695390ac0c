//! Restart-stability criteria: the cophenetic correlation (CCC) and the
//! dispersion of the consensus matrix across random initializations.
//!
//! cargo run --release --example consensus

use icqf::{consensus_criteria, gen_dataset, EncodedConfounds, SolverConfig, SolverKind, SyntheticSpec};

fn main() -> icqf::Result<()> {
    let spec = SyntheticSpec { n: 100, m: 50, k_star: 4, delta: 0.05, seed: 2, ..SyntheticSpec::default() };
    let data = gen_dataset(&spec)?.observed();
    let confounds = EncodedConfounds::none(data.nrows());
    let config = SolverConfig::default().with_solver(SolverKind::Auto);

    println!("k  CCC     dispersion  runs");
    for k in 2..=7 {
        let s = consensus_criteria(&data, &confounds, k, &config, 8, 0)?;
        println!("{k}  {:.4}  {:.4}      {}", s.ccc, s.dispersion, s.runs_used);
    }
    Ok(())
}
