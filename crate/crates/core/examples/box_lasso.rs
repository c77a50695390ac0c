//! The row sub-problem every ADMM step reduces to: a box-constrained lasso
//! `min ρ/2‖b − Ax‖² + β‖x‖₁` over `lo ≤ x ≤ hi`.
//!
//! cargo run --example box_lasso

use icqf::{lipschitz_constant, solve_box_lasso, BoxLassoProblem};
use ndarray::array;

fn main() -> icqf::Result<()> {
    let a = array![[1.0, 0.2, 0.0], [0.1, 1.0, 0.3], [0.0, 0.4, 1.0], [0.5, 0.5, 0.5]];
    let b = array![0.9, 1.4, -0.3, 1.0];
    for beta in [0.0, 0.2, 1.0, 5.0] {
        let problem = BoxLassoProblem { a: a.clone(), b: b.clone(), rho: 3.0, beta, box_lower: 0.0, box_upper: 1.0, tau: 3.0 };
        let out = solve_box_lasso(&problem, 1e-8, 500)?;
        println!("beta {beta:>4}: x = {:.4}  objective {:.5}  converged {}", out.x, out.objective, out.converged);
    }
    // Step size used by the inner FISTA solver.
    println!("L = {:.4}", lipschitz_constant(a.view(), 3.0, 3.0));
    Ok(())
}
