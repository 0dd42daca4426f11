use proptest::prelude::*;

use sbb_core::heat::log_heat_convolve;
use sbb_core::measures::{pushforward, quadrature, wasserstein2};
use sbb_core::moreau::{beta_convex_project, is_beta_convex, moreau_minus, moreau_plus};
use sbb_core::{dual_objective, Grid, GridFunction, GridMeasure, Problem, SolverConfig};

fn grid() -> Grid {
    Grid::new(-6.0, 6.0, 401).unwrap()
}

/// Piecewise-linear interpolation of `knots` spread evenly over the grid.
fn piecewise_linear(g: Grid, knots: &[f64]) -> GridFunction {
    let k = knots.len() - 1;
    GridFunction::from_fn(g, |x| {
        let s = (x - g.x_min()) / (g.x_max() - g.x_min()) * k as f64;
        let j = (s.floor() as usize).min(k - 1);
        let t = s - j as f64;
        knots[j] * (1.0 - t) + knots[j + 1] * t
    })
    .unwrap()
}

fn beta_convex(g: Grid, knots: &[f64], beta: f64) -> GridFunction {
    beta_convex_project(&piecewise_linear(g, knots), beta).unwrap()
}

/// Convex piecewise-linear function with kinks spread evenly over the grid and slopes
/// drawn from `β·[-1, 1]`.
fn convex_piecewise_linear(g: Grid, unit_slopes: &[f64], beta: f64) -> GridFunction {
    let mut slopes: Vec<f64> = unit_slopes.iter().map(|s| beta * s).collect();
    slopes.sort_by(f64::total_cmp);
    let width = (g.x_max() - g.x_min()) / slopes.len() as f64;
    GridFunction::from_fn(g, |x| {
        let mut v = 0.0;
        let mut left = g.x_min();
        for s in &slopes {
            let right = left + width;
            v += s * (x.min(right) - left).max(0.0);
            left = right;
        }
        v
    })
    .unwrap()
}

/// Nonnegative perturbation that does not decrease the boundary slopes, so the linear
/// continuation of the perturbed function stays above the original one.
fn end_ordered(mut bump: Vec<f64>) -> Vec<f64> {
    let n = bump.len();
    if bump[0] < bump[1] {
        bump.swap(0, 1);
    }
    if bump[n - 1] < bump[n - 2] {
        bump.swap(n - 1, n - 2);
    }
    bump
}

fn interior_sup(a: &GridFunction, b: &GridFunction, lo: usize, hi: usize) -> f64 {
    (lo..hi).map(|i| (a.value(i) - b.value(i)).abs()).fold(0.0, f64::max)
}

fn knots() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, 5..16)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn moreau_round_trip_recovers_convex_piecewise_linear_input(
        slopes in prop::collection::vec(-1.0..1.0f64, 4..16),
        beta in 0.5..5.0f64,
    ) {
        let g = grid();
        let phi = convex_piecewise_linear(g, &slopes, beta);
        let back = moreau_minus(&moreau_plus(&phi, beta, &g).unwrap().envelope, beta, &g).unwrap().envelope;
        let n = g.n();
        prop_assert!(interior_sup(&back, &phi, n / 6, n - n / 6) <= 1e-6);
    }

    #[test]
    fn moreau_is_monotone(ks in knots(), bump in prop::collection::vec(0.0..1.0f64, 401), beta in 0.5..5.0f64) {
        let g = grid();
        let lo = piecewise_linear(g, &ks);
        let hi = GridFunction::new(g, lo.values().iter().zip(&bump).map(|(a, b)| a + b).collect()).unwrap();
        let (e1, e2) = (moreau_plus(&lo, beta, &g).unwrap().envelope, moreau_plus(&hi, beta, &g).unwrap().envelope);
        prop_assert!(e1.values().iter().zip(e2.values()).all(|(a, b)| *a <= *b + 1e-12));
    }

    #[test]
    fn moreau_commutes_with_constants(ks in knots(), c in -50.0..50.0f64, beta in 0.5..5.0f64) {
        let g = grid();
        let phi = piecewise_linear(g, &ks);
        let shifted = phi.map(|_, v| v + c).unwrap();
        let (e, es) = (moreau_plus(&phi, beta, &g).unwrap().envelope, moreau_plus(&shifted, beta, &g).unwrap().envelope);
        prop_assert!(e.values().iter().zip(es.values()).all(|(a, b)| (a + c - b).abs() <= 1e-12 * (1.0 + c.abs() + a.abs())));
    }

    #[test]
    fn moreau_envelope_is_beta_concave(ks in knots(), beta in 0.5..5.0f64) {
        let g = grid();
        let env = moreau_plus(&piecewise_linear(g, &ks), beta, &g).unwrap().envelope;
        prop_assert!(is_beta_convex(&env.map(|_, v| -v).unwrap(), beta, 1e-8));
    }

    #[test]
    fn projection_is_a_beta_convex_minorant(ks in knots(), beta in 0.5..5.0f64) {
        let g = grid();
        let phi = piecewise_linear(g, &ks);
        let p = beta_convex_project(&phi, beta).unwrap();
        prop_assert!(is_beta_convex(&p, beta, 1e-8));
        prop_assert!(p.values().iter().zip(phi.values()).all(|(a, b)| a <= b));
        let again = beta_convex_project(&p, beta).unwrap();
        prop_assert!(interior_sup(&again, &p, 0, g.n()) <= 1e-9);
    }

    #[test]
    fn heat_is_monotone_and_shift_equivariant(ks in knots(), bump in prop::collection::vec(0.0..1.0f64, 401), c in -20.0..20.0f64, s in 0.01..3.0f64) {
        let g = grid();
        let lo = piecewise_linear(g, &ks);
        let hi = GridFunction::new(g, lo.values().iter().zip(&end_ordered(bump)).map(|(a, b)| a + b).collect()).unwrap();
        let (u1, u2) = (log_heat_convolve(&lo, s).unwrap(), log_heat_convolve(&hi, s).unwrap());
        prop_assert!(u1.values().iter().zip(u2.values()).all(|(a, b)| *a <= *b + 1e-12 * (1.0 + a.abs())));
        let us = log_heat_convolve(&lo.map(|_, v| v + c).unwrap(), s).unwrap();
        prop_assert!(u1.values().iter().zip(us.values()).all(|(a, b)| (a + c - b).abs() <= 1e-12 * (1.0 + c.abs() + a.abs())));
    }

    #[test]
    fn heat_semigroup(ks in knots(), s1 in 0.05..1.0f64, s2 in 0.05..1.0f64) {
        let g = Grid::new(-10.0, 10.0, 801).unwrap();
        // smooth potential: the composition is discretization-limited by the curvature of φ
        let a = ks[0] * 0.1;
        let phi = GridFunction::from_fn(g, |x| a * x + 0.3 * (0.5 * x + ks[1]).sin() - 0.02 * x * x).unwrap();
        let two = log_heat_convolve(&log_heat_convolve(&phi, s1).unwrap(), s2).unwrap();
        let one = log_heat_convolve(&phi, s1 + s2).unwrap();
        prop_assert!(interior_sup(&one, &two, g.n() / 4, 3 * g.n() / 4) <= 1e-4);
    }

    #[test]
    fn heat_jensen_lower_bound(ks in knots(), beta in 0.5..5.0f64, s in 0.01..3.0f64) {
        let g = grid();
        let phi = beta_convex(g, &ks, beta);
        let u = log_heat_convolve(&phi, s).unwrap();
        let n = g.n();
        for i in n / 6..n - n / 6 {
            prop_assert!(u.value(i) >= phi.value(i) - 0.5 * beta * s - 1e-8);
        }
    }

    #[test]
    fn w2_symmetry_and_triangle(p in prop::collection::vec((-1.5..1.5f64, 0.2..2.0f64), 3)) {
        let g = Grid::new(-12.0, 12.0, 1024).unwrap();
        let m: Vec<GridMeasure> = p.iter().map(|(mean, var)| GridMeasure::gaussian(g, *mean, *var).unwrap()).collect();
        let d = |i: usize, j: usize| wasserstein2(&m[i], &m[j]);
        prop_assert!((d(0, 1) - d(1, 0)).abs() <= 1e-6);
        prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-6);
        prop_assert!(d(0, 0) <= 1e-6);
    }

    #[test]
    fn pushforward_preserves_mass(mean in -1.0..1.0f64, var in 0.1..1.0f64, slope in 0.2..1.5f64, shift in -1.0..1.0f64) {
        let g = Grid::new(-10.0, 10.0, 512).unwrap();
        let mu = GridMeasure::gaussian(g, mean, var).unwrap();
        let map = GridFunction::from_fn(g, |x| slope * x + shift).unwrap();
        let out = pushforward(&map, &mu, &g).unwrap();
        prop_assert!((out.mass() - 1.0).abs() <= 1e-10);
        prop_assert!(out.density().iter().all(|d| *d >= 0.0));
        prop_assert!((out.mean() - (slope * mean + shift)).abs() <= 1e-3);
    }

    #[test]
    fn quadrature_of_affine_integrands(a in -3.0..3.0f64, b in -3.0..3.0f64, mean in -1.0..1.0f64, var in 0.1..1.0f64) {
        let g = Grid::new(-10.0, 10.0, 512).unwrap();
        let mu = GridMeasure::gaussian(g, mean, var).unwrap();
        let f = GridFunction::from_fn(g, |x| a * x + b).unwrap();
        let q = quadrature(&f, &mu).unwrap();
        prop_assert!((q - (a * mu.mean() + b)).abs() <= 1e-12 * g.n() as f64 * (1.0 + a.abs() + b.abs()));
    }
}

fn small_problem() -> Problem {
    let cfg = SolverConfig { nodes: 256, time_steps: 16, ..SolverConfig::new(2.0, 1.0) };
    Problem::gaussian((0.0, 0.25), (0.0, 1.0), &cfg).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn dual_objective_ignores_constants(a in -0.3..0.3f64, b in -0.4..0.4f64, c in -5.0..5.0f64) {
        let p = small_problem();
        let phi = beta_convex_project(&GridFunction::from_fn(p.grid, |x| a * x + b * x * x).unwrap(), 2.0).unwrap();
        let j = dual_objective(&phi, &p.mu0, &p.mu_t, &p.cfg).unwrap();
        let jc = dual_objective(&phi.map(|_, v| v + c).unwrap(), &p.mu0, &p.mu_t, &p.cfg).unwrap();
        prop_assert!((j - jc).abs() <= 1e-10 * (1.0 + c.abs()));
    }

    #[test]
    fn projection_never_decreases_the_dual(b in -0.2..0.4f64, noise in prop::collection::vec(-0.3..0.3f64, 256)) {
        let p = small_problem();
        let raw = GridFunction::new(
            p.grid,
            p.grid.nodes().iter().zip(&noise).map(|(x, e)| b * x * x + e).collect(),
        )
        .unwrap();
        let proj = beta_convex_project(&raw, 2.0).unwrap();
        let j_raw = dual_objective(&raw, &p.mu0, &p.mu_t, &p.cfg).unwrap();
        let j_proj = dual_objective(&proj, &p.mu0, &p.mu_t, &p.cfg).unwrap();
        prop_assert!(j_proj >= j_raw - 1e-10, "{j_proj} < {j_raw}");
    }
}
