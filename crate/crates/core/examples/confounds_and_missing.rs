//! Model a questionnaire with missing answers and two confounds (a
//! continuous age and a categorical site). Confound effects are absorbed by
//! their own loadings instead of leaking into the factors.
//!
//! cargo run --example confounds_and_missing

use icqf::{encode_confounds, fit, MaskedMatrix, RawConfound, SolverConfig};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> icqf::Result<()> {
    let (n, m) = (150, 24);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let age: Vec<f64> = (0..n).map(|_| rng.random_range(6.0..18.0)).collect();
    let site: Vec<String> = (0..n).map(|i| ["north", "south"][i % 2].to_string()).collect();

    // Two latent traits, plus answers that grow with age on the first 6 questions
    // and a site offset on the last 6.
    let traits = Array2::from_shape_simple_fn((n, 2), || rng.random::<f64>());
    let mut values = Array2::<f64>::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let trait_part = if j < m / 2 { 3.0 * traits[(i, 0)] } else { 3.0 * traits[(i, 1)] };
            let age_part = if j < 6 { (age[i] - 6.0) / 6.0 } else { 0.0 };
            let site_part = if j >= m - 6 && site[i] == "south" { 1.0 } else { 0.0 };
            values[(i, j)] = (trait_part + age_part + site_part).round().clamp(0.0, 4.0);
        }
    }
    // A fifth of the answers are missing.
    let observed = Array2::from_shape_simple_fn((n, m), || rng.random::<f64>() > 0.2);
    let data = MaskedMatrix::new(values, observed)?;
    println!("{} of {} answers observed", data.observed_count(), n * m);

    let raw = vec![RawConfound::continuous("age", age), RawConfound::categorical("site", site)];
    let confounds = encode_confounds(&raw, n)?;
    let labels: Vec<String> = confounds.labels().iter().map(|l| l.display()).collect();
    println!("confound columns: {labels:?}");

    let (model, report) = fit(&data, &confounds, &SolverConfig::default().with_k(2))?;
    println!("converged in {} iterations", report.iterations);

    println!("question  age:high  age:low  site:north  site:south  intercept");
    for j in [0, 5, 6, m - 7, m - 1] {
        let cq: Vec<String> = model.cq.row(j).iter().map(|v| format!("{v:8.2}")).collect();
        println!("q{j:<8}{}", cq.join("  "));
    }
    Ok(())
}
