use super::criteria::CriterionContext;
use super::qp::{cleaned_weights, projected_gradient, solve_quadratic_simplex, SolveReport};
use crate::error::Result;
use std::time::Instant;

const CUBIC_MAX_ITER: usize = 5000;
const CUBIC_GRAD_TOL: f64 = 1e-9;

/// Two-step weighting: minimize the σ²-penalized quadratic criterion with
/// the equal-weights plug-in variance, recompute residuals at that
/// solution, then minimize the fixed-residual quadratic criterion. Both
/// steps are quadratic programs on the simplex.
pub fn solve_two_steps(ctx: &CriterionContext) -> Result<SolveReport> {
    let start = Instant::now();
    let sigma2 = ctx.sigma2_equal_weights();
    let step1 = ctx.c_zero_problem(sigma2);
    let r1 = solve_quadratic_simplex(&step1.g, &step1.b)?;
    let e_tilde = ctx.residual_at(r1.weights.as_slice());
    let step2 = ctx.c_dprime_problem(&e_tilde);
    let r2 = solve_quadratic_simplex(&step2.g, &step2.b)?;
    let objective = ctx.c_dprime(r2.weights.as_slice(), &e_tilde);
    Ok(SolveReport {
        method: "2steps".into(),
        weights: r2.weights,
        objective,
        iterations: r1.iterations + r2.iterations,
        converged: r1.converged && r2.converged,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// One-step weighting: minimize the cubic criterion over the simplex by
/// projected gradient descent with Armijo backtracking, multi-started
/// from equal weights and from the two-step solution. The returned
/// objective never exceeds the criterion value at either start.
pub fn solve_one_step(ctx: &CriterionContext) -> Result<SolveReport> {
    let start = Instant::now();
    let two = solve_two_steps(ctx)?;

    let f = |w: &[f64]| (ctx.c_prime(w), ctx.c_prime_gradient(w));
    let m = ctx.m();
    let from_equal =
        projected_gradient(&f, vec![1.0 / m as f64; m], CUBIC_MAX_ITER, CUBIC_GRAD_TOL);
    let from_two = projected_gradient(&f, two.weights.to_vec(), CUBIC_MAX_ITER, CUBIC_GRAD_TOL);
    let iterations = from_equal.iterations + from_two.iterations;
    let winner = if from_equal.objective <= from_two.objective {
        from_equal
    } else {
        from_two
    };

    let weights = cleaned_weights(winner.w, |x| ctx.c_prime(x));
    let objective = ctx.c_prime(weights.as_slice());
    Ok(SolveReport {
        method: "1step".into(),
        weights,
        objective,
        iterations,
        converged: winner.converged,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
