use covshift::kernel::{gram, kappa, KernelConfig};
use covshift::kmm::{
    default_epsilon, estimate_weights_for, kmm_objective, solve_kmm, KmmConfig, SolverSettings,
    Tunable,
};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Instance {
    k: Array2<f64>,
    kappa: Array1<f64>,
    b_cap: f64,
    epsilon: f64,
}

impl Instance {
    fn n(&self) -> usize {
        self.kappa.len()
    }

    fn objective(&self, w: &[f64]) -> f64 {
        kmm_objective(
            Array1::from(w.to_vec()).view(),
            self.k.view(),
            self.kappa.view(),
        )
        .unwrap()
    }

    fn feasible(&self, w: &[f64], tol: f64) -> bool {
        let n = self.n() as f64;
        let s: f64 = w.iter().sum();
        w.iter().all(|&v| v >= -tol && v <= self.b_cap + tol)
            && (s - n).abs() <= n * self.epsilon + tol
    }
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> Instance {
    let d = 2;
    let xs = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
    let n_te = rng.random_range(1..=8);
    let shift: f64 = rng.random_range(-1.0..1.0);
    let xt = Array2::from_shape_fn((n_te, d), |_| rng.random_range(-1.0..1.0) * 0.7 + shift);
    let cfg = KernelConfig::new(rng.random_range(0.3..2.0)).unwrap();
    let b_cap = rng.random_range(1.0..4.0);
    let epsilon = if rng.random_bool(0.5) {
        default_epsilon(n)
    } else {
        rng.random_range(0.0..0.9)
    };
    Instance {
        k: gram(xs.view(), cfg).unwrap(),
        kappa: kappa(xs.view(), xt.view(), cfg).unwrap(),
        b_cap,
        epsilon,
    }
}

/// Exact minimum by enumerating which bounds are active. For each variable
/// pick lower bound, upper bound or free, and for the sum pick free, lower or
/// upper; solve the equality-constrained problem on the free variables and
/// keep the best feasible candidate. The convex minimizer lies on one of
/// these faces, so the best feasible stationary point is the optimum.
fn active_set_oracle(inst: &Instance) -> f64 {
    let n = inst.n();
    let nf = n as f64;
    let sums = [
        None,
        Some(nf * (1.0 - inst.epsilon)),
        Some(nf * (1.0 + inst.epsilon)),
    ];
    let mut best = f64::INFINITY;
    for code in 0..3usize.pow(n as u32) {
        let mut state = vec![0u8; n];
        let mut c = code;
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut w: Vec<f64> = state
            .iter()
            .map(|&s| if s == 1 { inst.b_cap } else { 0.0 })
            .collect();
        for sum in sums {
            let m = free.len() + usize::from(sum.is_some());
            if m == 0 {
                if inst.feasible(&w, 1e-9) {
                    best = best.min(inst.objective(&w));
                }
                continue;
            }
            let mut a = DMatrix::<f64>::zeros(m, m);
            let mut rhs = DVector::<f64>::zeros(m);
            for (r, &i) in free.iter().enumerate() {
                for (c, &j) in free.iter().enumerate() {
                    a[(r, c)] = inst.k[[i, j]] + if i == j { 1e-10 } else { 0.0 };
                }
                let fixed: f64 = (0..n)
                    .filter(|j| state[*j] != 2)
                    .map(|j| inst.k[[i, j]] * w[j])
                    .sum();
                rhs[r] = inst.kappa[i] - fixed;
            }
            if let Some(s) = sum {
                let last = m - 1;
                for r in 0..free.len() {
                    a[(r, last)] = 1.0;
                    a[(last, r)] = 1.0;
                }
                let fixed: f64 = (0..n).filter(|j| state[*j] != 2).map(|j| w[j]).sum();
                rhs[last] = s - fixed;
            }
            let Some(sol) = a.lu().solve(&rhs) else {
                continue;
            };
            for (r, &i) in free.iter().enumerate() {
                w[i] = sol[r];
            }
            if inst.feasible(&w, 1e-9) {
                best = best.min(inst.objective(&w));
            }
        }
    }
    best
}

/// Feasible grid with step 1e-3 over the box, filtered by the sum band.
fn grid_oracle(inst: &Instance) -> f64 {
    let steps = (inst.b_cap / 1e-3).floor() as usize;
    let val = |i: usize| i as f64 * 1e-3;
    let mut best = f64::INFINITY;
    match inst.n() {
        1 => {
            for i in 0..=steps {
                let w = [val(i)];
                if inst.feasible(&w, 0.0) {
                    best = best.min(inst.objective(&w));
                }
            }
        }
        2 => {
            let (k, q) = (&inst.k, &inst.kappa);
            let (lo, hi) = (2.0 * (1.0 - inst.epsilon), 2.0 * (1.0 + inst.epsilon));
            for i in 0..=steps {
                let a = val(i);
                for j in 0..=steps {
                    let b = val(j);
                    let s = a + b;
                    if s < lo || s > hi {
                        continue;
                    }
                    let f = 0.5 * (k[[0, 0]] * a * a + 2.0 * k[[0, 1]] * a * b + k[[1, 1]] * b * b)
                        - q[0] * a
                        - q[1] * b;
                    best = best.min(f);
                }
            }
        }
        _ => unreachable!("grid oracle only for n <= 2"),
    }
    best
}

fn settings(inst: &Instance) -> SolverSettings {
    SolverSettings {
        b_cap: inst.b_cap,
        epsilon: inst.epsilon,
        max_iters: 200_000,
        tol: 1e-12,
    }
}

#[test]
fn solver_matches_active_set_oracle_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..50 {
        let n = 1 + case % 8;
        let inst = random_instance(&mut rng, n);
        let sol = solve_kmm(inst.k.view(), inst.kappa.view(), settings(&inst)).unwrap();
        let oracle = active_set_oracle(&inst);
        assert!(
            (sol.objective - oracle).abs() <= 1e-3 * (1.0 + oracle.abs()),
            "case {case}: solver {} vs oracle {oracle}",
            sol.objective
        );
        assert!(
            inst.feasible(&sol.weights, 1e-6),
            "case {case}: infeasible {:?}",
            sol.weights
        );
    }
}

#[test]
fn active_set_oracle_agrees_with_grid_for_tiny_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..6 {
        let n = 1 + case % 2;
        let inst = random_instance(&mut rng, n);
        let grid = grid_oracle(&inst);
        let exact = active_set_oracle(&inst);
        // The grid can only overshoot the true minimum.
        assert!(
            exact <= grid + 1e-9,
            "case {case}: exact {exact} above grid {grid}"
        );
        assert!(
            grid - exact <= 1e-3 * (1.0 + exact.abs()),
            "case {case}: grid {grid} exact {exact}"
        );
        let sol = solve_kmm(inst.k.view(), inst.kappa.view(), settings(&inst)).unwrap();
        assert!((sol.objective - grid).abs() <= 1e-3 * (1.0 + grid.abs()));
    }
}

#[test]
fn identical_domains_give_unit_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for n in [2, 10, 50] {
        let x = Array2::from_shape_fn((n, 3), |_| rng.random_range(0.0..5.0));
        let est = estimate_weights_for(x.view(), x.view(), &KmmConfig::default()).unwrap();
        for w in &est.weights.weights {
            assert!((w - 1.0).abs() <= 1e-6, "n={n}: weight {w}");
        }
    }
}

#[test]
fn cluster_nearer_the_target_gets_more_weight() {
    let x = Array2::from_shape_vec((6, 1), vec![0.0, 0.1, 0.2, 10.0, 10.1, 10.2]).unwrap();
    let t = Array2::from_shape_vec((4, 1), vec![10.0, 10.05, 10.1, 10.15]).unwrap();
    let cfg = KmmConfig {
        sigma: Tunable::Value(1.0),
        ..KmmConfig::default()
    };
    let w = estimate_weights_for(x.view(), t.view(), &cfg)
        .unwrap()
        .weights
        .weights;
    let far = w[..3].iter().cloned().fold(f64::MIN, f64::max);
    let near = w[3..].iter().cloned().fold(f64::MAX, f64::min);
    assert!(near > far, "{w:?}");
}

/// Rows of dyadic values, so that shifting by powers of two and doubling
/// are exact in floating point.
fn dyadic_rows(n: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-64i32..64, n * 2).prop_map(move |v| {
        Array2::from_shape_vec((n, 2), v.into_iter().map(|i| i as f64 / 16.0).collect()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn weights_are_translation_invariant(
        xs in dyadic_rows(6),
        xt in dyadic_rows(4),
        shift in -8i32..8,
    ) {
        let cfg = KmmConfig { sigma: Tunable::Value(1.5), ..KmmConfig::default() };
        let base = estimate_weights_for(xs.view(), xt.view(), &cfg).unwrap().weights.weights;
        let t = shift as f64 * 4.0;
        let moved = estimate_weights_for((&xs + t).view(), (&xt + t).view(), &cfg).unwrap().weights.weights;
        for (a, b) in base.iter().zip(&moved) {
            prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
        }
    }

    #[test]
    fn weights_are_scale_equivariant_with_sigma(
        xs in dyadic_rows(6),
        xt in dyadic_rows(4),
        pow in -2i32..3,
    ) {
        let c = 2f64.powi(pow);
        let cfg = KmmConfig { sigma: Tunable::Value(1.5), ..KmmConfig::default() };
        let scaled_cfg = KmmConfig { sigma: Tunable::Value(1.5 * c), ..cfg };
        let base = estimate_weights_for(xs.view(), xt.view(), &cfg).unwrap().weights.weights;
        let scaled = estimate_weights_for((&xs * c).view(), (&xt * c).view(), &scaled_cfg).unwrap().weights.weights;
        for (a, b) in base.iter().zip(&scaled) {
            prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
        }
    }

    #[test]
    fn returned_weights_are_feasible_and_improve_on_uniform(
        seed in any::<u64>(),
        n in 1usize..30,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs = Array2::from_shape_fn((n, 2), |_| rng.random_range(-2.0..2.0));
        let xt = Array2::from_shape_fn((5, 2), |_| rng.random_range(0.0..3.0));
        let cfg = KmmConfig { sigma: Tunable::Value(1.0), max_iters: 500, ..KmmConfig::default() };
        let est = estimate_weights_for(xs.view(), xt.view(), &cfg).unwrap();
        prop_assert!(est.weights.check(1e-6).is_ok());
        let k = gram(xs.view(), KernelConfig::new(1.0).unwrap()).unwrap();
        let kap = kappa(xs.view(), xt.view(), KernelConfig::new(1.0).unwrap()).unwrap();
        let start = kmm_objective(Array1::ones(n).view(), k.view(), kap.view()).unwrap();
        prop_assert!(est.solution.objective <= start + 1e-12);
        for pair in est.solution.trace.windows(2) {
            prop_assert!(pair[1] <= pair[0]);
        }
    }
}
