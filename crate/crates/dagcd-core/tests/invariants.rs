//! Property and oracle tests: finite-difference gradients, prox optimality,
//! KKT conditions along fitted paths, solver audits, cycle-oracle agreement,
//! generator budgets, and a long-run reference optimization for the fixed
//! active-set inner loop.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use dagcd_core::cd_solver::{group_prox_update, inner_loop, CdState, SolverConfig};
use dagcd_core::dataset::CategoricalDataset;
use dagcd_core::graph::DagStructure;
use dagcd_core::multilogit::{self, ParamVector, PenaltyConfig};
use dagcd_core::path_select::{self, PathConfig};
use dagcd_core::simgen::{self, GraphFamily, GraphSpec, SampleSpec};

fn random_dataset(rng: &mut ChaCha12Rng, p: usize, n: usize, with_interventions: bool) -> CategoricalDataset {
    let levels: Vec<u16> = (0..p).map(|_| rng.random_range(2..=3)).collect();
    let mut values = Vec::with_capacity(n * p);
    for _ in 0..n {
        for &r in &levels {
            values.push(rng.random_range(1..=r));
        }
    }
    let mut interventions = Vec::new();
    if with_interventions {
        for h in 0..n {
            if rng.random_bool(0.2) {
                interventions.push((h, rng.random_range(0..p)));
            }
        }
    }
    CategoricalDataset::new(values, p, Some(levels), &interventions).unwrap()
}

/// Random parameter vector: every group present with entries in [−1, 1]
/// (no sum-to-zero structure — the likelihood is defined for arbitrary β),
/// intercepts likewise with the reference component pinned to 0.
fn random_beta(rng: &mut ChaCha12Rng, ds: &CategoricalDataset) -> ParamVector {
    let mut beta = ParamVector::zeros(ds.levels());
    let p = ds.p();
    for j in 0..p {
        let mut icpt = vec![0.0f64; ds.r(j)];
        for v in icpt.iter_mut().skip(1) {
            *v = rng.random_range(-1.0..1.0);
        }
        beta.set_intercepts(j, icpt);
        for i in 0..p {
            if i == j {
                continue;
            }
            let len = ds.d(i) * ds.r(j);
            let g: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            beta.set_group(j, i, g);
        }
    }
    beta
}

#[test]
fn block_gradients_match_finite_differences() {
    // 50 random small instances; max relative error < 1e-5 against central
    // differences of the block log-likelihood.
    for seed in 0..50u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let p = rng.random_range(2..=4);
        let n = rng.random_range(10..=20);
        let ds = random_dataset(&mut rng, p, n, seed % 2 == 0);
        let beta = random_beta(&mut rng, &ds);
        let eps = 1e-5;
        for j in 0..p {
            for i in 0..p {
                if i == j {
                    continue;
                }
                let grad = multilogit::block_gradient(&beta, &ds, j, i);
                let mut worst = 0.0f64;
                for c in 0..grad.len() {
                    let mut up = beta.clone();
                    let mut g = up.group(j, i).to_vec();
                    g[c] += eps;
                    up.set_group(j, i, g);
                    let mut dn = beta.clone();
                    let mut g = dn.group(j, i).to_vec();
                    g[c] -= eps;
                    dn.set_group(j, i, g);
                    let fd = (multilogit::block_loglik(&up, &ds, j)
                        - multilogit::block_loglik(&dn, &ds, j))
                        / (2.0 * eps);
                    let rel = (fd - grad[c]).abs() / grad[c].abs().max(1.0);
                    worst = worst.max(rel);
                }
                assert!(worst < 1e-5, "seed {} pair ({},{}): rel {}", seed, j, i, worst);
            }
            // Intercept gradient under the same check.
            let grad = multilogit::intercept_gradient(&beta, &ds, j);
            for c in 0..grad.len() {
                let mut up = beta.clone();
                let mut v = up.intercepts(j).to_vec();
                v[c] += eps;
                let shift = v[0];
                for x in v.iter_mut() {
                    *x -= shift;
                }
                // Perturbing the reference coordinate is ill-posed under the
                // pinned parameterization; skip c = 0 (its gradient is still
                // reported and checked through the sum structure below).
                if c == 0 {
                    continue;
                }
                up.set_intercepts(j, v);
                let mut dn = beta.clone();
                let mut v = dn.intercepts(j).to_vec();
                v[c] -= eps;
                dn.set_intercepts(j, v);
                let fd = (multilogit::block_loglik(&up, &ds, j)
                    - multilogit::block_loglik(&dn, &ds, j))
                    / (2.0 * eps);
                let rel = (fd - grad[c]).abs() / grad[c].abs().max(1.0);
                assert!(rel < 1e-5, "seed {} node {} icpt {}: rel {}", seed, j, c, rel);
            }
            // Softmax residuals sum to zero across levels, so must the
            // intercept gradient.
            let s: f64 = grad.iter().sum();
            assert!(s.abs() < 1e-9);
        }
    }
}

/// Surrogate objective of the prox step: −gᵀ(u−β) − (h/2)‖u−β‖² + λw‖u‖,
/// convex since h < 0.
fn prox_objective(u: &[f64], grad: &[f64], beta: &[f64], h: f64, lam_w: f64) -> f64 {
    let mut lin = 0.0;
    let mut quad = 0.0;
    let mut norm = 0.0;
    for c in 0..u.len() {
        let dlt = u[c] - beta[c];
        lin += grad[c] * dlt;
        quad += dlt * dlt;
        norm += u[c] * u[c];
    }
    -lin - 0.5 * h * quad + lam_w * norm.sqrt()
}

#[test]
fn prox_update_matches_numerical_minimizer() {
    // 100 random draws; the closed form must match a ternary search along
    // the ray through d = g − hβ to 1e-6 and beat random perturbations.
    for seed in 0..100u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(1000 + seed);
        let dim = rng.random_range(1..=6);
        let grad: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let beta: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let h = -rng.random_range(0.05..10.0);
        let lam_w = rng.random_range(0.0..4.0);
        let out = group_prox_update(&grad, &beta, h, lam_w);
        let dense = if out.is_empty() { vec![0.0; dim] } else { out.clone() };
        let f_star = prox_objective(&dense, &grad, &beta, h, lam_w);

        // The minimizer lies on span{d}: ternary-search the 1-D section.
        let d: Vec<f64> = grad.iter().zip(&beta).map(|(g, b)| g - h * b).collect();
        let d_norm: f64 = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if d_norm > 1e-12 {
            let unit: Vec<f64> = d.iter().map(|v| v / d_norm).collect();
            let eval = |t: f64| {
                let u: Vec<f64> = unit.iter().map(|v| t * v).collect();
                prox_objective(&u, &grad, &beta, h, lam_w)
            };
            let mut lo = -2.0 * d_norm / -h - 10.0;
            let mut hi = 2.0 * d_norm / -h + 10.0;
            for _ in 0..200 {
                let m1 = lo + (hi - lo) / 3.0;
                let m2 = hi - (hi - lo) / 3.0;
                if eval(m1) < eval(m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            let t = 0.5 * (lo + hi);
            for c in 0..dim {
                let want = t * unit[c];
                assert!(
                    (dense[c] - want).abs() < 1e-6,
                    "seed {}: coord {} {} vs {}",
                    seed,
                    c,
                    dense[c],
                    want
                );
            }
        }

        // Black-box optimality: no random perturbation improves the value.
        for _ in 0..20 {
            let scale = 10f64.powf(rng.random_range(-5.0..-2.0));
            let u: Vec<f64> = dense
                .iter()
                .map(|v| v + rng.random_range(-1.0..1.0) * scale)
                .collect();
            assert!(prox_objective(&u, &grad, &beta, h, lam_w) >= f_star - 1e-12);
        }
    }
}

#[test]
fn lambda_max_fit_is_empty_on_random_datasets() {
    for seed in 0..10u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(2000 + seed);
        let p = rng.random_range(3..=5);
        let n = rng.random_range(40..=80);
        let ds = random_dataset(&mut rng, p, n, true);
        let weights = vec![1.0f64; p * p];
        let lam1 = path_select::lambda_max(&ds, &weights);
        for lam in [lam1, 1.5 * lam1] {
            let pen = PenaltyConfig::with_weights(p, lam, weights.clone());
            let mut st = CdState::from_beta(&ds, path_select::empty_model_beta(&ds));
            let out = st.solve(&pen, &SolverConfig::default(), false);
            assert_eq!(st.graph().edge_count(), 0, "seed {} λ {}", seed, lam);
            assert!(out.stabilized);
        }
    }
}

#[test]
fn solver_audits_pass_on_random_datasets() {
    // Acyclicity, mutual exclusion, graph/support sync, sum-to-zero ≤ 1e-8,
    // cache consistency, monotone objectives, and fixed-active-set KKT —
    // checked by the solver's own audit after every sweep. The KKT bars are
    // statements about converged iterates, so run the inner loop tight.
    for seed in 0..10u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(3000 + seed);
        let p = rng.random_range(3..=5);
        let n = rng.random_range(60..=120);
        let ds = random_dataset(&mut rng, p, n, true);
        let weights = vec![1.0f64; p * p];
        let lam1 = path_select::lambda_max(&ds, &weights);
        let cfg = SolverConfig {
            audit: true,
            inner_tol: 1e-6,
            max_inner: 3000,
            ..SolverConfig::default()
        };
        for frac in [0.6, 0.3, 0.1] {
            let pen = PenaltyConfig::with_weights(p, frac * lam1, weights.clone());
            let mut st = CdState::from_beta(&ds, path_select::empty_model_beta(&ds));
            let out = st.solve(&pen, &cfg, false);
            assert!(
                out.audit_failures.is_empty(),
                "seed {} frac {}: {:?}",
                seed,
                frac,
                out.audit_failures
            );
        }
    }
}

/// Post-hoc KKT residuals of a fitted entry: every active group must be
/// stationary. The zero-group threshold condition is a statement about the
/// final sweep's fixed active set (groups the inner loop optimized and left
/// at zero), which only the solver sees before pruning — the in-solve audit
/// covers it. A pair outside that set carries no guarantee: its sweep
/// evaluation can pass and the gradient then drift above threshold as later
/// pairs move shared coefficients, without any edge changing.
fn kkt_violation(
    ds: &CategoricalDataset,
    beta: &ParamVector,
    pen: &PenaltyConfig,
) -> Option<String> {
    let p = ds.p();
    for j in 0..p {
        for i in 0..p {
            if i == j || beta.group_is_zero(j, i) {
                continue;
            }
            let lam_w = pen.lambda * pen.weight(j, i);
            let g = multilogit::block_gradient(beta, ds, j, i);
            let bnorm = beta.group_norm(j, i);
            let b = beta.group(j, i);
            let mut sq = 0.0;
            for c in 0..g.len() {
                let r = g[c] - lam_w * b[c] / bnorm;
                sq += r * r;
            }
            if sq.sqrt() > 1e-3 {
                return Some(format!(
                    "active group ({},{}): stationarity residual {}",
                    j,
                    i,
                    sq.sqrt()
                ));
            }
        }
    }
    None
}

#[test]
fn kkt_holds_at_every_path_entry() {
    for seed in 0..10u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(4000 + seed);
        let p = rng.random_range(3..=5);
        let n = rng.random_range(80..=150);
        let ds = random_dataset(&mut rng, p, n, true);
        let weights = vec![1.0f64; p * p];
        let cfg = PathConfig {
            grid_size: 8,
            ..PathConfig::default()
        };
        // The audit bars are statements about converged iterates. Tighten
        // the inner tolerance: the default 1e-4 parameter tolerance leaves
        // gradient residuals ~|h|·1e-4, above the 1e-3 stationarity bar at
        // these sample sizes. The in-solve audit checks the fixed-active-set
        // conditions (including zero-converged kept groups, invisible after
        // pruning); the post-hoc pass re-verifies active stationarity from a
        // fresh evaluation of the stored coefficients.
        let solver = SolverConfig {
            audit: true,
            inner_tol: 1e-6,
            max_inner: 3000,
            ..SolverConfig::default()
        };
        let path = path_select::fit_path(&ds, &weights, &cfg, &solver, false);
        assert!(
            path.audit_failures.is_empty(),
            "seed {}: {:?}",
            seed,
            path.audit_failures
        );
        for (m, en) in path.entries.iter().enumerate() {
            let pen = PenaltyConfig::with_weights(p, en.lambda, weights.clone());
            if let Some(msg) = kkt_violation(&ds, &en.beta, &pen) {
                panic!("seed {} entry {}: {}", seed, m, msg);
            }
        }
    }
}

/// Reference optimizer for the fixed active-set problem: full proximal
/// gradient descent with a conservative step size, run far past the
/// solver's own tolerance.
fn reference_inner(
    ds: &CategoricalDataset,
    pen: &PenaltyConfig,
    active: &[(usize, usize)],
    iters: usize,
) -> f64 {
    let p = ds.p();
    let mut beta = ParamVector::zeros(ds.levels());
    // Safe Lipschitz bound on each block of −∇ℓ: row count (indicator² ≤ 1,
    // softmax Jacobian spectral norm ≤ 1).
    let tau = 1.0 / (2.0 * ds.n() as f64);
    for _ in 0..iters {
        for &(i, j) in active {
            let g = multilogit::block_gradient(&beta, ds, j, i);
            // Zero groups are stored sparsely; densify before stepping.
            let mut cur = beta.group(j, i).to_vec();
            if cur.is_empty() {
                cur = vec![0.0; beta.group_len(j, i)];
            }
            let lam_w = pen.lambda * pen.weight(j, i);
            let u: Vec<f64> = cur.iter().zip(&g).map(|(b, gv)| b + tau * gv).collect();
            let un: f64 = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = if un > tau * lam_w {
                1.0 - tau * lam_w / un
            } else {
                0.0
            };
            beta.set_group(j, i, u.iter().map(|v| v * scale).collect());
        }
        for j in 0..p {
            let g = multilogit::intercept_gradient(&beta, ds, j);
            let mut u: Vec<f64> = beta
                .intercepts(j)
                .iter()
                .zip(&g)
                .map(|(b, gv)| b + tau * gv)
                .collect();
            let u0 = u[0];
            for v in u.iter_mut() {
                *v -= u0;
            }
            beta.set_intercepts(j, u);
        }
    }
    multilogit::penalized_objective(&beta, ds, pen)
}

#[test]
fn inner_loop_matches_long_run_reference() {
    // Fixed active sets on p ≤ 3 binary data: the blockwise inner loop and
    // a long-run proximal-gradient reference agree to 1e-6 in objective.
    for (seed, active) in [
        (7u64, vec![(0usize, 1usize)]),
        (8, vec![(0, 1), (1, 2)]),
        (9, vec![(0, 2), (1, 2)]),
    ] {
        let mut rng = ChaCha12Rng::seed_from_u64(5000 + seed);
        let p = 3;
        let n = 60;
        // Correlated binary columns so the active groups matter.
        let mut values = Vec::with_capacity(n * p);
        for _ in 0..n {
            let a = if rng.random_bool(0.5) { 2u16 } else { 1 };
            let b = if rng.random_bool(0.75) { a } else { 3 - a };
            let c = if rng.random_bool(0.7) { b } else { 3 - b };
            values.extend_from_slice(&[a, b, c]);
        }
        let ds = CategoricalDataset::new(values, p, Some(vec![2; p]), &[]).unwrap();
        let pen = PenaltyConfig::unit(p, 1.5);
        let cfg = SolverConfig::default();
        let (beta, _) = inner_loop(&ds, ParamVector::zeros(ds.levels()), &pen, &cfg, &active);
        let got = multilogit::penalized_objective(&beta, &ds, &pen);
        let want = reference_inner(&ds, &pen, &active, 60_000);
        assert!(
            (got - want).abs() <= 1e-6 * (1.0 + want.abs()),
            "seed {}: inner {} vs reference {}",
            seed,
            got,
            want
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// induces_cycle agrees with a brute-force reachability oracle.
    #[test]
    fn cycle_check_matches_reachability_oracle(
        p in 2usize..8,
        edges in proptest::collection::vec((0usize..8, 0usize..8), 0..20),
        probe in (0usize..8, 0usize..8),
    ) {
        let mut g = DagStructure::new(p);
        let mut kept: Vec<(usize, usize)> = Vec::new();
        for (a, b) in edges {
            let (a, b) = (a % p, b % p);
            if a == b || g.has_edge(a, b) {
                continue;
            }
            // Keep the graph acyclic with the oracle itself.
            if !reaches(&kept, b, a) {
                g.add_edge(a, b).unwrap();
                kept.push((a, b));
            }
        }
        let (i, j) = (probe.0 % p, probe.1 % p);
        if i != j {
            let want = reaches(&kept, j, i);
            prop_assert_eq!(g.induces_cycle(i, j).unwrap(), want);
        }
    }

    /// Generator edge budgets and acyclicity across sizes and seeds.
    #[test]
    fn generator_budgets_hold(seed in 0u64..500, pick in 0usize..3) {
        let p = [10usize, 25, 50][pick];
        for fam in [
            GraphFamily::Bipartite,
            GraphFamily::Polytree,
            GraphFamily::ScaleFree,
            GraphFamily::SmallWorld,
        ] {
            let g = simgen::generate_graph(&GraphSpec::new(fam, p, seed)).unwrap();
            prop_assert_eq!(g.edge_count(), fam.edge_budget(p));
            prop_assert!(g.topological_sort().is_ok());
        }
    }

    /// Sampling determinism: a replicate is a pure function of its seeds.
    #[test]
    fn sampling_is_reproducible(seed in 0u64..200) {
        let g = simgen::generate_graph(&GraphSpec::new(GraphFamily::ScaleFree, 12, seed)).unwrap();
        let d1 = simgen::sample_data(&g, &SampleSpec::interventional(2, seed ^ 0xabcd));
        let d2 = simgen::sample_data(&g, &SampleSpec::interventional(2, seed ^ 0xabcd));
        for h in 0..d1.n() {
            prop_assert_eq!(d1.intervened_node(h), d2.intervened_node(h));
            for j in 0..d1.p() {
                prop_assert_eq!(d1.level(h, j), d2.level(h, j));
            }
        }
    }
}

/// Does `from` reach `to` along the directed edge list?
fn reaches(edges: &[(usize, usize)], from: usize, to: usize) -> bool {
    let mut stack = vec![from];
    let mut seen = vec![from];
    while let Some(v) = stack.pop() {
        if v == to {
            return true;
        }
        for &(a, b) in edges {
            if a == v && !seen.contains(&b) {
                seen.push(b);
                stack.push(b);
            }
        }
    }
    false
}
