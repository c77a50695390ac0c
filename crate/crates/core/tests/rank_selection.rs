use icqf::rank::{bcv_score, default_plan};
use icqf::{select_k, EncodedConfounds, MaskedMatrix, SolverConfig, SolverKind};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(seed: u64, n: usize, m: usize) -> MaskedMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MaskedMatrix::from_dense(Array2::from_shape_simple_fn((n, m), || rng.random_range(0.0..4.0f64).round())).unwrap()
}

#[test]
fn pure_noise_prefers_small_k() {
    let config = SolverConfig::default().with_solver(SolverKind::Auto);
    let mut wins = 0;
    let mut detail = Vec::new();
    for seed in 0..20 {
        let data = noise(seed, 60, 40);
        let conf = EncodedConfounds::intercept_only(60);
        let plan = default_plan(60, 40, seed).unwrap();
        let e1 = bcv_score(&data, &conf, 1, 0.1, &plan, &config).unwrap().error;
        let e10 = bcv_score(&data, &conf, 10, 0.1, &plan, &config).unwrap().error;
        if e1 <= e10 {
            wins += 1;
        }
        detail.push((e1, e10));
    }
    assert!(wins >= 14, "k = 1 won {wins}/20: {detail:?}");
}

#[test]
fn singleton_grid_returns_its_point() {
    let data = noise(3, 30, 20);
    let conf = EncodedConfounds::intercept_only(30);
    let plan = default_plan(30, 20, 0).unwrap();
    let config = SolverConfig::default().with_solver(SolverKind::Cd);
    let r = select_k(&data, &conf, &[3], &[0.2], &plan, &config).unwrap();
    assert_eq!((r.selected_k, r.selected_beta), (3, 0.2));
    assert_eq!(r.grid.len(), 1);
    assert_eq!(r.selected_error, r.grid[0].score.error);
}

#[test]
fn selection_does_not_depend_on_thread_count() {
    let data = noise(5, 40, 30);
    let conf = EncodedConfounds::intercept_only(40);
    let plan = default_plan(40, 30, 1).unwrap();
    let config = SolverConfig::default();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| select_k(&data, &conf, &[1, 2, 3], &[0.1], &plan, &config).unwrap())
    };
    assert_eq!(run(1), run(3));
}
