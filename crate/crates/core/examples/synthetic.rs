//! Generate the step-pattern benchmark: factors switch on in overlapping
//! runs of rows, loadings are sparse, and a fraction `delta` of entries is
//! replaced by uniform noise.
//!
//! cargo run --example synthetic -- /tmp/synthetic-out

use icqf::{gen_dataset, gen_step_design, SyntheticSpec};

fn main() -> icqf::Result<()> {
    let spec = SyntheticSpec::default().with_delta(0.1).with_seed(7);
    let design = gen_step_design(&spec)?;
    println!("design {}x{}; rows per factor: {:?}", design.nrows(), design.ncols(), design.sum_axis(ndarray::Axis(0)).to_vec());
    println!("first rows of the design:");
    for row in design.rows().into_iter().step_by(5).take(8) {
        let bits: String = row.iter().map(|&v| if v > 0.0 { '#' } else { '.' }).collect();
        println!("  {bits}");
    }

    let ds = gen_dataset(&spec)?;
    let changed = ds.m_clean.iter().zip(&ds.m_noisy).filter(|(a, b)| a != b).count();
    let density = ds.q_true.iter().filter(|&&v| v > 0.0).count() as f64 / ds.q_true.len() as f64;
    println!("{changed} of {} entries perturbed; Q density {density:.2}", ds.m_clean.len());

    if let Some(dir) = std::env::args().nth(1) {
        ds.save(&dir)?;
        println!("wrote W_true.csv, Q_true.csv, M.csv, M_clean.csv, mask.csv and meta.json to {dir}");
    }
    Ok(())
}
