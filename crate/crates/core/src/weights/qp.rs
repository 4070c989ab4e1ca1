use super::WeightVector;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Outcome of one weight solve. `converged` means the relative KKT
/// residual fell below 1e-9; otherwise the best iterate is returned.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: String,
    pub weights: WeightVector,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
}

const KKT_TOL: f64 = 1e-9;

/// Minimize w' G w + b' w over the simplex {w >= 0, sum w = 1}.
///
/// G must be symmetric positive semidefinite within 1e-8 (it is the Gram
/// matrix of residual vectors in the intended uses). The solver runs a
/// primal active-set method with exact KKT solves on the free set and
/// falls back to projected gradient descent if the active set stalls; on
/// convergence the returned point is a global minimum of the convex
/// program up to the KKT tolerance.
pub fn solve_quadratic_simplex(g: &[f64], b: &[f64]) -> Result<SolveReport> {
    let start = Instant::now();
    let m = b.len();
    if m == 0 {
        return Err(Error::SolverInput("empty problem".into()));
    }
    if g.len() != m * m {
        return Err(Error::SolverInput(format!(
            "G has {} entries, expected {}",
            g.len(),
            m * m
        )));
    }
    if g.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::SolverInput("non-finite entries".into()));
    }

    // symmetrize; the quadratic form only sees the symmetric part
    let mut gs = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            gs[i * m + j] = 0.5 * (g[i * m + j] + g[j * m + i]);
        }
    }
    let scale = gs.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if !psd_within(&gs, m, 1e-8 * scale.max(1.0)) {
        return Err(Error::SolverInput(
            "G is not positive semidefinite within 1e-8".into(),
        ));
    }

    if m == 1 {
        return Ok(SolveReport {
            method: "qp".into(),
            weights: WeightVector::new(vec![1.0])?,
            objective: gs[0] + b[0],
            iterations: 0,
            converged: true,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
    }

    let objective = |w: &[f64]| -> f64 {
        let mut v = 0.0;
        for i in 0..m {
            let mut gi = 0.0;
            for j in 0..m {
                gi += gs[i * m + j] * w[j];
            }
            v += w[i] * (gi + b[i]);
        }
        v
    };

    let mut w = vec![1.0 / m as f64; m];
    let mut active = vec![false; m];
    let mut iterations = 0usize;
    let max_outer = 10 * m + 100;
    let ridge = 1e-10 * scale.max(b.iter().fold(1.0f64, |a, v| a.max(v.abs())));

    let mut stalled = false;
    loop {
        iterations += 1;
        if iterations > max_outer {
            stalled = true;
            break;
        }
        let free: Vec<usize> = (0..m).filter(|&i| !active[i]).collect();
        let Some(v) = solve_equality_qp(&gs, b, m, &free, ridge) else {
            stalled = true;
            break;
        };

        if v.iter().all(|&vi| vi >= -1e-12) {
            for (slot, &i) in free.iter().enumerate() {
                w[i] = v[slot].max(0.0);
            }
            for i in 0..m {
                if active[i] {
                    w[i] = 0.0;
                }
            }
            // dual check on the active constraints
            let grad = gradient(&gs, b, m, &w);
            let grad_scale = grad.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            let lambda: f64 = w.iter().zip(&grad).map(|(&wi, &gi)| wi * gi).sum();
            let mut worst: Option<(usize, f64)> = None;
            for i in 0..m {
                if active[i] {
                    let mu = grad[i] - lambda;
                    if worst.is_none_or(|(_, wm)| mu < wm) {
                        worst = Some((i, mu));
                    }
                }
            }
            match worst {
                Some((i, mu)) if mu < -1e-10 * grad_scale => active[i] = false,
                _ => break, // KKT satisfied
            }
        } else {
            // step toward v until the first free coordinate hits zero
            let mut alpha = 1.0f64;
            let mut blocker = None;
            for (slot, &i) in free.iter().enumerate() {
                if v[slot] < 0.0 {
                    let a = w[i] / (w[i] - v[slot]);
                    if a < alpha {
                        alpha = a;
                        blocker = Some(i);
                    }
                }
            }
            for (slot, &i) in free.iter().enumerate() {
                w[i] += alpha * (v[slot] - w[i]);
            }
            match blocker {
                Some(i) => {
                    w[i] = 0.0;
                    active[i] = true;
                }
                None => {
                    stalled = true;
                    break;
                }
            }
        }
    }

    let mut residual = kkt_residual(&gs, b, m, &w);
    if stalled || residual > KKT_TOL {
        // projected-gradient fallback from the best iterate so far
        let f = |x: &[f64]| (objective(x), gradient(&gs, b, m, x));
        let out = projected_gradient(&f, w.clone(), 20_000, 1e-12 * scale.max(1.0));
        iterations += out.iterations;
        if objective(&out.w) <= objective(&w) {
            w = out.w;
        }
        residual = kkt_residual(&gs, b, m, &w);
    }

    let weights = cleaned_weights(w, |x| objective(x));
    let objective_value = objective(weights.as_slice());
    Ok(SolveReport {
        method: "qp".into(),
        weights,
        objective: objective_value,
        iterations,
        converged: residual < KKT_TOL,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Snap coordinates below the 1e-12 floor to zero and renormalize, unless
/// doing so would raise the objective; then only renormalize.
pub(crate) fn cleaned_weights<F: Fn(&[f64]) -> f64>(raw: Vec<f64>, objective: F) -> WeightVector {
    let before = objective(&raw);
    if let Ok(snapped) = WeightVector::from_unnormalized(raw.clone()) {
        if objective(snapped.as_slice()) <= before {
            return snapped;
        }
    }
    let sum: f64 = raw.iter().map(|&v| v.max(0.0)).sum();
    WeightVector::new(raw.iter().map(|&v| v.max(0.0) / sum).collect())
        .expect("renormalized projection output is a valid simplex point")
}

fn gradient(gs: &[f64], b: &[f64], m: usize, w: &[f64]) -> Vec<f64> {
    (0..m)
        .map(|i| {
            let mut v = b[i];
            for j in 0..m {
                v += 2.0 * gs[i * m + j] * w[j];
            }
            v
        })
        .collect()
}

/// Relative KKT residual: primal feasibility, dual feasibility, and
/// complementary slackness, the latter two scaled by the gradient size.
pub(crate) fn kkt_residual(gs: &[f64], b: &[f64], m: usize, w: &[f64]) -> f64 {
    let grad = gradient(gs, b, m, w);
    let scale = grad.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let lambda: f64 = w.iter().zip(&grad).map(|(&wi, &gi)| wi * gi).sum();
    let primal =
        (w.iter().sum::<f64>() - 1.0).abs() + w.iter().map(|&v| (-v).max(0.0)).sum::<f64>();
    let mut dual = 0.0f64;
    let mut comp = 0.0f64;
    for i in 0..m {
        let mu = grad[i] - lambda;
        dual = dual.max(-mu);
        comp = comp.max((w[i] * mu).abs());
    }
    primal + dual.max(0.0) / scale + comp / scale
}

/// Equality-constrained subproblem on the free coordinates:
/// minimize v' G_FF v + b_F' v subject to sum v = 1, via the KKT system.
/// Falls back to a tiny ridge when the system is singular.
fn solve_equality_qp(
    gs: &[f64],
    b: &[f64],
    m: usize,
    free: &[usize],
    ridge: f64,
) -> Option<Vec<f64>> {
    let k = free.len();
    let build = |extra: f64| -> (Vec<f64>, Vec<f64>) {
        let dim = k + 1;
        let mut a = vec![0.0; dim * dim];
        let mut rhs = vec![0.0; dim];
        for (r, &i) in free.iter().enumerate() {
            for (c, &j) in free.iter().enumerate() {
                a[r * dim + c] = 2.0 * gs[i * m + j];
            }
            a[r * dim + r] += 2.0 * extra;
            a[r * dim + k] = -1.0;
            a[k * dim + r] = 1.0;
            rhs[r] = -b[i];
        }
        rhs[k] = 1.0;
        (a, rhs)
    };
    let (a, rhs) = build(0.0);
    if let Some(mut sol) = solve_linear(a, rhs, k + 1) {
        sol.truncate(k);
        return Some(sol);
    }
    let (a, rhs) = build(ridge.max(1e-300));
    solve_linear(a, rhs, k + 1).map(|mut sol| {
        sol.truncate(k);
        sol
    })
}

/// Dense LU with partial pivoting; None when singular.
fn solve_linear(mut a: Vec<f64>, mut rhs: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    let norm = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1e-300);
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for r in col + 1..n {
            let v = a[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < 1e-13 * norm {
            return None;
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            rhs.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let factor = a[r * n + col] / d;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                a[r * n + c] -= factor * a[col * n + c];
            }
            rhs[r] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut v = rhs[r];
        for c in r + 1..n {
            v -= a[r * n + c] * x[c];
        }
        x[r] = v / a[r * n + r];
    }
    Some(x)
}

/// Symmetric semidefinite elimination: true when all pivots stay above
/// -tol and zero-pivot rows are themselves negligible.
fn psd_within(gs: &[f64], m: usize, tol: f64) -> bool {
    let mut a = gs.to_vec();
    let row_tol = (tol.max(1e-300)).sqrt() * 10.0;
    for k in 0..m {
        let d = a[k * m + k];
        if d < -tol {
            return false;
        }
        if d <= tol {
            // for a PSD matrix a zero diagonal forces a zero row
            for j in k + 1..m {
                if a[k * m + j].abs() > row_tol * (1.0 + a[j * m + j].abs()).sqrt() {
                    return false;
                }
            }
            for j in k + 1..m {
                a[k * m + j] = 0.0;
                a[j * m + k] = 0.0;
            }
            continue;
        }
        for i in k + 1..m {
            let f = a[i * m + k] / d;
            if f == 0.0 {
                continue;
            }
            for j in i..m {
                a[i * m + j] -= f * a[k * m + j];
            }
        }
        for i in k + 1..m {
            a[i * m + k] = 0.0;
            for j in i..m {
                a[j * m + i] = a[i * m + j];
            }
        }
    }
    true
}

/// Euclidean projection onto the simplex (sort-and-threshold, exact).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    let mut rho = 0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
            rho = j + 1;
        }
    }
    debug_assert!(rho > 0);
    v.iter().map(|&vi| (vi - theta).max(0.0)).collect()
}

pub(crate) struct PgOutcome {
    pub w: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Projected gradient descent on the simplex with Armijo backtracking.
/// Monotone: the returned objective never exceeds the starting one.
/// Convergence is declared when the unit-step gradient mapping
/// ‖w - proj(w - grad)‖ falls below `grad_tol`.
pub(crate) fn projected_gradient<F>(
    f: &F,
    start: Vec<f64>,
    max_iter: usize,
    grad_tol: f64,
) -> PgOutcome
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let mut w = project_simplex(&start);
    let (mut fw, mut grad) = f(&w);
    let mut step = 1.0 / grad.iter().fold(1.0f64, |a, g| a.max(g.abs()));
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..max_iter {
        iterations += 1;
        let probe: Vec<f64> = w.iter().zip(&grad).map(|(&wi, &gi)| wi - gi).collect();
        let mapped = project_simplex(&probe);
        let pg_norm: f64 = mapped
            .iter()
            .zip(&w)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if pg_norm <= grad_tol {
            converged = true;
            break;
        }

        let mut accepted = false;
        while step > 1e-20 {
            let trial: Vec<f64> = w
                .iter()
                .zip(&grad)
                .map(|(&wi, &gi)| wi - step * gi)
                .collect();
            let cand = project_simplex(&trial);
            let dn2: f64 = cand.iter().zip(&w).map(|(&a, &b)| (a - b) * (a - b)).sum();
            if dn2 == 0.0 {
                break;
            }
            let (fc, gc) = f(&cand);
            if fc <= fw - 1e-4 / step * dn2 {
                w = cand;
                fw = fc;
                grad = gc;
                step *= 1.8;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no feasible descent step: stationary within line-search limits
            converged = true;
            break;
        }
    }
    PgOutcome {
        w,
        objective: fw,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_gram_balances() {
        let r = solve_quadratic_simplex(&[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0]).unwrap();
        assert!(r.converged);
        assert!((r.weights.get(0) - 0.5).abs() < 1e-12);
        assert!((r.weights.get(1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn diagonal_gram_analytic_solution() {
        // minimize w1² + 100 w2² on the simplex: w = (100/101, 1/101)
        let r = solve_quadratic_simplex(&[1.0, 0.0, 0.0, 100.0], &[0.0, 0.0]).unwrap();
        assert!(r.converged);
        assert!((r.weights.get(0) - 100.0 / 101.0).abs() < 1e-10);
        assert!((r.weights.get(1) - 1.0 / 101.0).abs() < 1e-10);
    }

    #[test]
    fn linear_program_picks_min_coefficient() {
        let r = solve_quadratic_simplex(&[0.0; 9], &[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(r.weights.as_slice(), &[0.0, 1.0, 0.0]);
        assert!((r.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_model_is_trivial() {
        let r = solve_quadratic_simplex(&[4.0], &[-1.0]).unwrap();
        assert_eq!(r.weights.as_slice(), &[1.0]);
        assert!((r.objective - 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(solve_quadratic_simplex(&[f64::NAN], &[0.0]).is_err());
        assert!(solve_quadratic_simplex(&[1.0, 0.0], &[0.0]).is_err());
        // indefinite matrix
        assert!(solve_quadratic_simplex(&[1.0, 0.0, 0.0, -1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn singular_gram_degenerate_dominance() {
        // identical residual directions, different penalties: all mass on
        // the cheaper model
        let g = vec![2.0, 2.0, 2.0, 2.0];
        let b = vec![0.5, 1.5];
        let r = solve_quadratic_simplex(&g, &b).unwrap();
        assert!(r.weights.get(0) > 1.0 - 1e-9);
        assert!(r.weights.get(1) < 1e-9);
    }

    #[test]
    fn projection_cases() {
        assert_eq!(project_simplex(&[0.5, 0.5]), vec![0.5, 0.5]);
        let p = project_simplex(&[2.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] == 0.0);
        let q = project_simplex(&[-3.0, -3.0]);
        assert!((q[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn matches_dense_grid_on_random_psd() {
        use rand::Rng;
        let mut rng = crate::rng::derived_rng(3, 0, 0);
        for _ in 0..20 {
            let m = rng.random_range(2..5usize);
            // Gram of random vectors is PSD
            let k = m + 1;
            let vecs: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..k).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
                .collect();
            let mut g = vec![0.0; m * m];
            for a in 0..m {
                for c in 0..m {
                    g[a * m + c] = vecs[a].iter().zip(&vecs[c]).map(|(x, y)| x * y).sum();
                }
            }
            let b: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            let r = solve_quadratic_simplex(&g, &b).unwrap();
            // coarse grid cross-check
            let eval = |w: &[f64]| {
                let mut v = 0.0;
                for a in 0..m {
                    for c in 0..m {
                        v += w[a] * g[a * m + c] * w[c];
                    }
                    v += b[a] * w[a];
                }
                v
            };
            let mut best = f64::INFINITY;
            let steps = 20usize;
            let mut stack = vec![(vec![], steps)];
            while let Some((prefix, rem)) = stack.pop() {
                if prefix.len() == m - 1 {
                    let mut w: Vec<f64> = prefix
                        .iter()
                        .map(|&k: &usize| k as f64 / steps as f64)
                        .collect();
                    w.push(rem as f64 / steps as f64);
                    best = best.min(eval(&w));
                } else {
                    for k in 0..=rem {
                        let mut p = prefix.clone();
                        p.push(k);
                        stack.push((p, rem - k));
                    }
                }
            }
            assert!(
                r.objective <= best + 1e-9,
                "qp {} vs grid {best}",
                r.objective
            );
        }
    }
}
