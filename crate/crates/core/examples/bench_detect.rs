//! A small rank-detection benchmark: how far each criterion's chosen k lands
//! from the truth over a few synthetic replicates.
//!
//! cargo run --release --example bench_detect

use icqf::{bench_detect, BenchSpec, DetectScheme, DetectSettings, SyntheticSpec};

fn main() -> icqf::Result<()> {
    let spec = BenchSpec {
        synthetic: SyntheticSpec { n: 100, m: 50, k_star: 4, ..SyntheticSpec::default() },
        deltas: vec![0.1, 0.3],
        replicates: 3,
        schemes: DetectScheme::ALL.to_vec(),
        seed: 0,
        settings: DetectSettings { k_grid: (2..=7).collect(), consensus_runs: 5, ..DetectSettings::default() },
    };
    println!("scheme      delta  mean |k - 4|  std error  chosen k");
    for row in bench_detect(&spec)? {
        println!(
            "{:<11} {:<6} {:>12.2}  {:>9.2}  {:?}",
            row.scheme.name(),
            row.delta,
            row.mean_error,
            row.std_error,
            row.k_hats
        );
    }
    Ok(())
}
