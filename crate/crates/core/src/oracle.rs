//! Centralized optimum: the allocation is optimal exactly when it is
//! feasible and all derivatives agree, so the solver bisects on the common
//! derivative value (water-filling style) using each cost's inverse
//! derivative. A closed form for all-quadratic instances serves as an exact
//! cross-check.

use crate::error::{Error, Result};
use crate::objectives::{total_cost, Cost};

/// Optimal allocation, its objective value, and the common derivative.
#[derive(Clone, Debug)]
pub struct OptimalSolution {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    /// Common derivative value at the optimum.
    pub lambda_star: f64,
    /// Achieved |sum x* - K|.
    pub tolerance_achieved: f64,
}

/// Default solve tolerance `1e-12 * max(1, |K|)`.
pub fn default_tolerance(k_total: f64) -> f64 {
    1e-12 * 1.0_f64.max(k_total.abs())
}

/// Solves for the optimum by bisection on the common derivative value,
/// starting from the bracket `[-1, 1]` and doubling outward until
/// `S(lambda) = sum_i invderiv_i(lambda)` brackets `K`.
///
/// Costs flagged constant (`w = 0` quartics) are excluded from the sum and
/// split the residual resource equally; their derivative is identically
/// zero, which pins the common derivative to 0. Costs without an inverse
/// derivative (the table stub) are rejected.
pub fn solve_optimal(costs: &[Cost], k_total: f64, tol: f64) -> Result<OptimalSolution> {
    solve_optimal_bracketed(costs, k_total, tol, (-1.0, 1.0))
}

/// [`solve_optimal`] with a caller-supplied initial bracket, e.g. the
/// derivative envelope of a known starting point (the optimum's common
/// derivative always lies inside that envelope).
pub fn solve_optimal_bracketed(
    costs: &[Cost],
    k_total: f64,
    tol: f64,
    initial_bracket: (f64, f64),
) -> Result<OptimalSolution> {
    if costs.is_empty() {
        return Err(Error::Oracle("no costs to solve".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Oracle(format!("tolerance must be positive, got {tol}")));
    }
    for (i, cost) in costs.iter().enumerate() {
        if !cost.is_constant() && cost.inverse_derivative(0.0).is_none() {
            return Err(Error::Oracle(format!(
                "cost {i} provides no inverse derivative; use the quadratic \
                 closed form or a grid fallback for this family"
            )));
        }
    }

    let active: Vec<usize> = (0..costs.len()).filter(|&i| !costs[i].is_constant()).collect();
    let constants = costs.len() - active.len();

    // Constant costs force the common derivative to zero: their derivative
    // is identically zero and optimality requires all derivatives equal.
    // They absorb whatever resource the active nodes do not take.
    if active.is_empty() || constants > 0 {
        let lambda = 0.0;
        let mut x_star = vec![0.0; costs.len()];
        let mut taken = 0.0;
        for &i in &active {
            let xi = costs[i].inverse_derivative(lambda).expect("checked above");
            x_star[i] = xi;
            taken += xi;
        }
        let residual_share = (k_total - taken) / constants as f64;
        for (i, cost) in costs.iter().enumerate() {
            if cost.is_constant() {
                x_star[i] = residual_share;
            }
        }
        return finish(costs, x_star, lambda, k_total);
    }

    let supply = |lambda: f64| -> f64 {
        active
            .iter()
            .map(|&i| costs[i].inverse_derivative(lambda).expect("checked above"))
            .sum()
    };

    let (mut lo, mut hi) = initial_bracket;
    if !(lo < hi) {
        let mid = lo;
        lo = mid - 1.0;
        hi = mid + 1.0;
    }
    let mut step = hi - lo;
    let mut expansions = 0;
    while supply(lo) > k_total {
        lo -= step;
        step *= 2.0;
        expansions += 1;
        if expansions > 200 || !lo.is_finite() {
            return Err(Error::Oracle(format!(
                "bisection bracket not found: S({lo}) = {} still above K = {k_total}",
                supply(lo)
            )));
        }
    }
    step = hi - lo;
    while supply(hi) < k_total {
        hi += step;
        step *= 2.0;
        expansions += 1;
        if expansions > 200 || !hi.is_finite() {
            return Err(Error::Oracle(format!(
                "bisection bracket not found: S({hi}) = {} still below K = {k_total}",
                supply(hi)
            )));
        }
    }

    let mut lambda = 0.5 * (lo + hi);
    for _ in 0..500 {
        lambda = 0.5 * (lo + hi);
        if lambda == lo || lambda == hi {
            break; // interval exhausted at f64 resolution
        }
        let s = supply(lambda);
        if (s - k_total).abs() <= tol {
            break;
        }
        if s < k_total {
            lo = lambda;
        } else {
            hi = lambda;
        }
    }

    let x_star: Vec<f64> = costs
        .iter()
        .map(|c| c.inverse_derivative(lambda).expect("all costs active here"))
        .collect();
    finish(costs, x_star, lambda, k_total)
}

fn finish(costs: &[Cost], x_star: Vec<f64>, lambda: f64, k_total: f64) -> Result<OptimalSolution> {
    let f_star = total_cost(costs, &x_star)
        .ok_or_else(|| Error::Oracle("cost family has no value function".into()))?;
    let achieved = (x_star.iter().sum::<f64>() - k_total).abs();
    Ok(OptimalSolution {
        x_star,
        f_star,
        lambda_star: lambda,
        tolerance_achieved: achieved,
    })
}

/// Exact optimum for all-quadratic instances:
/// `lambda* = (K + sum b_i/c_i) / (sum 1/c_i)`, `x*_i = (lambda* - b_i)/c_i`.
pub fn solve_quadratic_closed_form(costs: &[Cost], k_total: f64) -> Result<OptimalSolution> {
    if costs.is_empty() {
        return Err(Error::Oracle("no costs to solve".into()));
    }
    let mut inv_sum = 0.0;
    let mut shift_sum = 0.0;
    for (i, cost) in costs.iter().enumerate() {
        match *cost {
            Cost::Quadratic { c, b } => {
                inv_sum += 1.0 / c;
                shift_sum += b / c;
            }
            _ => {
                return Err(Error::Oracle(format!(
                    "closed form requires all-quadratic costs, cost {i} is not"
                )))
            }
        }
    }
    let lambda = (k_total + shift_sum) / inv_sum;
    let x_star: Vec<f64> = costs
        .iter()
        .map(|c| c.inverse_derivative(lambda).expect("quadratic has an inverse"))
        .collect();
    finish(costs, x_star, lambda, k_total)
}

/// Upper bound `sqrt(2 (F(x0) - F*) / mu)` on the distance from any point of
/// the initial sublevel set (within the feasible hyperplane) to the optimum,
/// valid by strong convexity with `mu = min_i mu_i`. Errors when any cost
/// lacks a positive strong-convexity modulus.
pub fn sublevel_radius_bound(costs: &[Cost], x0: &[f64], k_total: f64) -> Result<f64> {
    let mut mu = f64::INFINITY;
    for (i, cost) in costs.iter().enumerate() {
        match cost.strong_convexity() {
            Some(m) if m > 0.0 => mu = mu.min(m),
            _ => {
                return Err(Error::Oracle(format!(
                    "sublevel radius bound requires strong convexity, cost {i} has none \
                     (the sublevel set may be unbounded)"
                )))
            }
        }
    }
    let sum: f64 = x0.iter().sum();
    if (sum - k_total).abs() > crate::protocol::conservation_tolerance(k_total, x0) {
        return Err(Error::Infeasible(format!(
            "x0 sums to {sum}, expected {k_total}"
        )));
    }
    let f0 = total_cost(costs, x0)
        .ok_or_else(|| Error::Oracle("cost family has no value function".into()))?;
    let solution = solve_optimal(costs, k_total, default_tolerance(k_total))?;
    let gap = (f0 - solution.f_star).max(0.0);
    Ok((2.0 * gap / mu).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent reference for two-node instances: grid search over the
    /// single free coordinate.
    fn grid_search_two_nodes(costs: &[Cost], k_total: f64, lo: f64, hi: f64) -> (f64, f64) {
        let mut best = (f64::INFINITY, f64::NAN);
        for i in 0..=200_000 {
            let x0 = lo + (hi - lo) * (i as f64) / 200_000.0;
            let x1 = k_total - x0;
            let f = costs[0].value(x0).unwrap() + costs[1].value(x1).unwrap();
            if f < best.0 {
                best = (f, x0);
            }
        }
        best
    }

    #[test]
    fn hand_kkt_example_with_grid_cross_check() {
        // f0 = x^2/2, f1 = x^2, K = 3: S(lambda) = 1.5 lambda = 3.
        let costs = vec![Cost::quadratic(1.0, 0.0).unwrap(), Cost::quadratic(2.0, 0.0).unwrap()];
        let sol = solve_optimal(&costs, 3.0, default_tolerance(3.0)).unwrap();
        assert!((sol.lambda_star - 2.0).abs() < 1e-10);
        assert!((sol.x_star[0] - 2.0).abs() < 1e-10);
        assert!((sol.x_star[1] - 1.0).abs() < 1e-10);
        assert!((sol.f_star - 3.0).abs() < 1e-10);

        let (grid_f, grid_x0) = grid_search_two_nodes(&costs, 3.0, 0.0, 3.0);
        assert!((grid_f - sol.f_star).abs() < 1e-8);
        assert!((grid_x0 - sol.x_star[0]).abs() < 1e-4);
    }

    #[test]
    fn simultaneous_minimizers_are_exact() {
        // Each cost is minimized at a_i and K = sum a_i, so x* = a and the
        // optimum equals the objective at a (each term at its own minimum).
        let a = [1.5, -0.25, 3.0];
        let costs: Vec<Cost> = a.iter().map(|&ai| Cost::quadratic(1.0, -ai).unwrap()).collect();
        let k: f64 = a.iter().sum();
        let sol = solve_optimal(&costs, k, default_tolerance(k)).unwrap();
        for (xi, ai) in sol.x_star.iter().zip(&a) {
            assert!((xi - ai).abs() < 1e-9);
        }
        let f_at_minimizers = total_cost(&costs, &a).unwrap();
        assert!((sol.f_star - f_at_minimizers).abs() < 1e-12);
        assert!(sol.lambda_star.abs() < 1e-9);
    }

    #[test]
    fn single_node_takes_everything() {
        let costs = vec![Cost::quadratic(2.0, 1.0).unwrap()];
        let sol = solve_optimal(&costs, 5.0, default_tolerance(5.0)).unwrap();
        assert!((sol.x_star[0] - 5.0).abs() < 1e-10);
        assert!((sol.lambda_star - costs[0].derivative(5.0)).abs() < 1e-9);
    }

    #[test]
    fn table_costs_are_rejected_with_direction() {
        let costs = vec![Cost::table(1.0, 0.5).unwrap()];
        let err = solve_optimal(&costs, 0.0, 1e-12).unwrap_err();
        assert!(err.to_string().contains("inverse derivative"));
    }

    #[test]
    fn closed_form_examples() {
        let costs = vec![Cost::quadratic(1.0, 0.0).unwrap(), Cost::quadratic(2.0, 0.0).unwrap()];
        let sol = solve_quadratic_closed_form(&costs, 3.0).unwrap();
        assert!((sol.lambda_star - 2.0).abs() < 1e-12);
        assert_eq!(sol.x_star, vec![2.0, 1.0]);

        let symmetric = vec![Cost::quadratic(1.0, 0.0).unwrap(), Cost::quadratic(1.0, 0.0).unwrap()];
        let sol = solve_quadratic_closed_form(&symmetric, 4.0).unwrap();
        assert_eq!(sol.x_star, vec![2.0, 2.0]);

        // c = (1, 1), b = (1, -1), K = 0: (lambda - 1) + (lambda + 1) = 0.
        let shifted = vec![Cost::quadratic(1.0, 1.0).unwrap(), Cost::quadratic(1.0, -1.0).unwrap()];
        let sol = solve_quadratic_closed_form(&shifted, 0.0).unwrap();
        assert!(sol.lambda_star.abs() < 1e-12);
        assert_eq!(sol.x_star, vec![-1.0, 1.0]);

        let with_table = vec![Cost::quadratic(1.0, 0.0).unwrap(), Cost::table(1.0, 1.0).unwrap()];
        assert!(solve_quadratic_closed_form(&with_table, 0.0).is_err());
    }

    #[test]
    fn quartic_bisection_matches_symmetry() {
        // Two identical quartics, K = 2: optimum splits evenly.
        let costs = vec![
            Cost::quartic(1.0, 0.0, (-40.0, 40.0)).unwrap(),
            Cost::quartic(1.0, 0.0, (-40.0, 40.0)).unwrap(),
        ];
        let sol = solve_optimal(&costs, 2.0, default_tolerance(2.0)).unwrap();
        assert!((sol.x_star[0] - 1.0).abs() < 1e-9);
        assert!((sol.x_star[1] - 1.0).abs() < 1e-9);
        assert!((sol.f_star - 2.0).abs() < 1e-8);
    }

    #[test]
    fn zero_weight_quartics_absorb_the_residual() {
        let costs = vec![
            Cost::quartic(1.0, 0.5, (-10.0, 10.0)).unwrap(),
            Cost::quartic(0.0, 0.0, (-10.0, 10.0)).unwrap(),
        ];
        let sol = solve_optimal(&costs, 3.0, default_tolerance(3.0)).unwrap();
        // Active node sits at its unconstrained minimizer (derivative 0).
        assert!((sol.x_star[0] - 0.5).abs() < 1e-12);
        assert!((sol.x_star[1] - 2.5).abs() < 1e-12);
        assert_eq!(sol.lambda_star, 0.0);
        assert!(sol.f_star.abs() < 1e-12);
    }

    #[test]
    fn sublevel_radius_examples() {
        // f_i = x^2/2, x0 = (2, -2), K = 0: R0 = sqrt(8), met with equality.
        let costs = vec![Cost::quadratic(1.0, 0.0).unwrap(), Cost::quadratic(1.0, 0.0).unwrap()];
        let r0 = sublevel_radius_bound(&costs, &[2.0, -2.0], 0.0).unwrap();
        assert!((r0 - 8.0_f64.sqrt()).abs() < 1e-9);
        let distance = (2.0_f64.powi(2) + 2.0_f64.powi(2)).sqrt();
        assert!(distance <= r0 + 1e-9);

        // x0 already optimal: radius 0.
        let r0 = sublevel_radius_bound(&costs, &[0.0, 0.0], 0.0).unwrap();
        assert_eq!(r0, 0.0);

        // No strong convexity: error.
        let quartics = vec![Cost::quartic(1.0, 0.0, (-4.0, 4.0)).unwrap()];
        assert!(sublevel_radius_bound(&quartics, &[0.0], 0.0).is_err());
    }

    #[test]
    fn bisection_agrees_with_closed_form_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let n = 2 + (rng.random::<f64>() * 48.0) as usize;
            let costs: Vec<Cost> = (0..n)
                .map(|_| {
                    Cost::quadratic(
                        0.5 + 1.5 * rng.random::<f64>(),
                        rng.random::<f64>() * 4.0 - 2.0,
                    )
                    .unwrap()
                })
                .collect();
            let k = rng.random::<f64>() * 20.0 - 10.0;
            let tol = default_tolerance(k);
            let bisected = solve_optimal(&costs, k, tol).unwrap();
            let exact = solve_quadratic_closed_form(&costs, k).unwrap();
            assert!(
                (bisected.f_star - exact.f_star).abs() <= 10.0 * tol.max(1e-12) * (1.0 + exact.f_star.abs()),
                "f* mismatch: {} vs {}",
                bisected.f_star,
                exact.f_star
            );
            for (a, b) in bisected.x_star.iter().zip(&exact.x_star) {
                assert!((a - b).abs() < 1e-8, "x* mismatch: {a} vs {b}");
            }
        }
    }

    #[test]
    fn optimum_satisfies_feasibility_and_derivative_equality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = 2 + (rng.random::<f64>() * 10.0) as usize;
            let costs: Vec<Cost> = (0..n)
                .map(|_| {
                    Cost::quadratic(0.5 + rng.random::<f64>(), rng.random::<f64>() - 0.5).unwrap()
                })
                .collect();
            let k = rng.random::<f64>() * 6.0 - 3.0;
            let tol = default_tolerance(k);
            let sol = solve_optimal(&costs, k, tol).unwrap();
            assert!(sol.tolerance_achieved <= tol * 10.0);
            for (cost, &xi) in costs.iter().zip(&sol.x_star) {
                assert!((cost.derivative(xi) - sol.lambda_star).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn optimum_beats_random_feasible_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let costs: Vec<Cost> = (0..6)
            .map(|_| Cost::quadratic(0.5 + rng.random::<f64>(), rng.random::<f64>() - 0.5).unwrap())
            .collect();
        let k = 2.5;
        let sol = solve_optimal(&costs, k, default_tolerance(k)).unwrap();
        for _ in 0..1000 {
            let mut x: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
            // Project onto the feasible hyperplane by shifting the mean.
            let shift = (x.iter().sum::<f64>() - k) / 6.0;
            for xi in &mut x {
                *xi -= shift;
            }
            let f = total_cost(&costs, &x).unwrap();
            assert!(f >= sol.f_star - 1e-9 * (1.0 + f.abs()));
        }
    }
}
