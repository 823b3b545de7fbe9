use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nonlocal_core::properties::{dirichlet_exterior, sample_graph, SpecSampler};
use nonlocal_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(space: &Arc<DiscreteSpace>, kernel: &Arc<KernelMatrix>, p: f64, potential: Potential) -> EnergySpec {
    let n = space.n_points();
    EnergySpec::new(space.clone(), kernel.clone(), PhiSpec::new(p).unwrap(), potential, vec![1.0; n]).unwrap()
}

// L + diag(nu kappa), full size.
fn stiffness(spec: &EnergySpec) -> DMatrix<f64> {
    let n = spec.n_points();
    let mut a = DMatrix::zeros(n, n);
    for &(i, j, w) in spec.kernel().pairs() {
        a[(i, i)] += w;
        a[(j, j)] += w;
        a[(i, j)] -= w;
        a[(j, i)] -= w;
    }
    if let Potential::PowerRobin { kappa, q } = spec.potential() {
        assert_eq!(*q, 2.0);
        for i in 0..n {
            a[(i, i)] += spec.nu()[i] * kappa[i];
        }
    }
    a
}

// Solves `a x = b` with Dirichlet points removed (held at 0).
fn solve_free(spec: &EnergySpec, a: &DMatrix<f64>, b: &DVector<f64>) -> Vec<f64> {
    let free: Vec<usize> = (0..spec.n_points()).filter(|&i| !spec.is_pinned(i)).collect();
    let m = free.len();
    let sub = DMatrix::from_fn(m, m, |r, c| a[(free[r], free[c])]);
    let rhs = DVector::from_fn(m, |r, _| b[free[r]]);
    let x = sub.lu().solve(&rhs).expect("nonsingular");
    let mut out = vec![0.0; spec.n_points()];
    for (k, &i) in free.iter().enumerate() {
        out[i] = x[k];
    }
    out
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d = a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    let s = b.iter().fold(0.0_f64, |m, y| m.max(y.abs()));
    d / s.max(1e-300)
}

fn opts() -> SolveOptions {
    SolveOptions {
        tol: 1e-13,
        ..SolveOptions::default()
    }
}

#[test]
fn p2_proximal_step_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sampler = SpecSampler {
        min_points: 10,
        max_points: 100,
        ..SpecSampler::default()
    };
    for trial in 0..12 {
        let (space, kernel) = sample_graph(&mut rng, &sampler);
        let potential = match trial % 3 {
            0 => Potential::Neumann,
            1 => Potential::PowerRobin {
                kappa: (0..space.n_points()).map(|_| rng.gen_range(0.0..2.0)).collect(),
                q: 2.0,
            },
            _ => dirichlet_exterior(&space),
        };
        let s = spec(&space, &kernel, 2.0, potential);
        let tau = rng.gen_range(0.01..1.0);
        let u: Vec<f64> = (0..space.n_omega()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f: Vec<f64> = (0..space.n_omega()).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut a = stiffness(&s);
        let mut b = DVector::zeros(s.n_points());
        for (k, &i) in space.omega_indices().iter().enumerate() {
            let m = space.mu()[i];
            a[(i, i)] += m / tau;
            b[i] = m * u[k] / tau + m * f[k];
        }
        let dense = solve_free(&s, &a, &b);
        let (_, w) = proximal_step(&s, &u, tau, Some(&f), &opts()).unwrap();
        let e = rel_err(&w, &dense);
        assert!(e < 1e-9, "trial {trial}: relative error {e}");
    }
}

#[test]
fn p2_elliptic_solve_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let sampler = SpecSampler {
        min_points: 10,
        max_points: 100,
        ..SpecSampler::default()
    };
    for trial in 0..10 {
        let (space, kernel) = sample_graph(&mut rng, &sampler);
        let potential = if trial % 2 == 0 {
            Potential::PowerRobin {
                kappa: (0..space.n_points()).map(|_| rng.gen_range(0.1..2.0)).collect(),
                q: 2.0,
            }
        } else {
            // Pin at least one point so the Dirichlet problem is coercive.
            let mut mask = vec![false; space.n_points()];
            if let Some(&i) = space.exterior_indices().first() {
                mask[i] = true;
            } else {
                continue;
            }
            Potential::Dirichlet { mask }
        };
        let s = spec(&space, &kernel, 2.0, potential);
        let f: Vec<f64> = (0..space.n_omega()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = stiffness(&s);
        let mut b = DVector::zeros(s.n_points());
        for (k, &i) in space.omega_indices().iter().enumerate() {
            b[i] = space.mu()[i] * f[k];
        }
        let dense = solve_free(&s, &a, &b);
        let (w, rep) = solve_elliptic(&s, &f, &opts()).unwrap();
        assert!(rep.converged && rep.objective_monotone);
        let e = rel_err(&w, &dense);
        assert!(e < 1e-9, "trial {trial}: relative error {e}");
    }
}

fn coupled_graph(rng: &mut ChaCha8Rng, n: usize) -> (Arc<DiscreteSpace>, Arc<KernelMatrix>) {
    let n_omega = rng.gen_range(n / 2..n);
    let omega: Vec<usize> = (0..n_omega).collect();
    let mut edges = Vec::new();
    for i in 1..n_omega {
        edges.push((i - 1, i, rng.gen_range(0.1..2.0)));
    }
    for i in n_omega..n {
        let j = rng.gen_range(0..n_omega);
        edges.push((i, j, rng.gen_range(0.1..2.0)));
        let k = rng.gen_range(0..n_omega);
        if k != j {
            edges.push((i, k, rng.gen_range(0.1..2.0)));
        }
    }
    let mu = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    let (s, k) = graph_space(mu, &omega, edges).unwrap();
    (Arc::new(s), Arc::new(k))
}

#[test]
fn explicit_extension_matches_elliptic_extension() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for trial in 0..20 {
        let n = rng.gen_range(6..=40);
        let (space, kernel) = coupled_graph(&mut rng, n);
        let potential = if trial % 2 == 0 {
            Potential::Neumann
        } else {
            Potential::PowerRobin {
                kappa: (0..n).map(|i| if space.is_omega(i) { 0.0 } else { rng.gen_range(0.0..3.0) }).collect(),
                q: 2.0,
            }
        };
        let s = spec(&space, &kernel, 2.0, potential);
        let u: Vec<f64> = (0..space.n_omega()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let explicit = linear_extension_explicit(&s, &u).unwrap();
        let (w, _) = elliptic_extension(&s, &u, &opts()).unwrap();
        let d = explicit.iter().zip(&w).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(d < 1e-9, "trial {trial}: {d}");
    }
}

#[test]
fn spectrum_matches_dense_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let sampler = SpecSampler {
        min_points: 5,
        max_points: 30,
        ..SpecSampler::default()
    };
    for _ in 0..6 {
        let (space, kernel) = sample_graph(&mut rng, &sampler);
        let s = spec(&space, &kernel, 2.0, Potential::Neumann);
        let op = assemble_p2_operator(&s).unwrap();
        let n = space.n_points();
        let a = stiffness(&s);
        let mu = space.mu();
        let sym = DMatrix::from_fn(n, n, |i, j| a[(i, j)] / (mu[i] * mu[j]).sqrt());
        let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let top = ev[n - 1];
        for (x, y) in op.eigenvalues.iter().zip(&ev) {
            assert!((x - y).abs() < 1e-10 * top, "{x} vs {y}");
        }
    }
}

#[test]
fn balakrishnan_matches_spectral_power() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let sampler = SpecSampler {
        min_points: 8,
        max_points: 30,
        ..SpecSampler::default()
    };
    for trial in 0..6 {
        let (space, kernel) = sample_graph(&mut rng, &sampler);
        let potential = if trial % 2 == 0 {
            Potential::Neumann
        } else {
            dirichlet_exterior(&space)
        };
        let s = spec(&space, &kernel, 2.0, potential);
        let op = assemble_p2_operator(&s).unwrap();
        let u: Vec<f64> = (0..op.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for theta in [0.25, 0.5, 0.75] {
            let exact = spectral_power(&op, theta, &u).unwrap();
            let (quad, _) = balakrishnan_power(&op, theta, &u, &QuadratureConfig::default()).unwrap();
            let e = rel_err(&quad, &exact);
            assert!(e < 1e-6, "theta {theta}: {e}");
        }
    }
}

#[test]
fn power_semigroup_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let (space, kernel) = sample_graph(&mut rng, &SpecSampler::default());
    let s = spec(&space, &kernel, 2.0, Potential::Neumann);
    let op = assemble_p2_operator(&s).unwrap();
    let u: Vec<f64> = (0..op.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let half = spectral_power(&op, 0.5, &spectral_power(&op, 0.5, &u).unwrap()).unwrap();
    let full = op.apply(&u).unwrap();
    assert!(rel_err(&half, &full) < 1e-9);
}

#[test]
fn subordinated_form_identity_and_neumann_kappa() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let sampler = SpecSampler {
        min_points: 8,
        max_points: 30,
        ..SpecSampler::default()
    };
    for trial in 0..4 {
        let (space, kernel) = sample_graph(&mut rng, &sampler);
        let neumann = trial % 2 == 0;
        let potential = if neumann {
            Potential::Neumann
        } else {
            Potential::PowerRobin {
                kappa: (0..space.n_points()).map(|_| rng.gen_range(0.0..1.0)).collect(),
                q: 2.0,
            }
        };
        let s = spec(&space, &kernel, 2.0, potential);
        let op = assemble_p2_operator(&s).unwrap();
        for theta in [0.25, 0.5, 0.75] {
            let ker = subordinated_kernel(&op, theta, &QuadratureConfig::default()).unwrap();
            let u: Vec<f64> = (0..op.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lhs = op.inner(&spectral_power(&op, theta, &u).unwrap(), &u);
            let rhs = subordinated_form(&op, &ker, &u).unwrap();
            assert!((lhs - rhs).abs() <= 1e-6 * lhs.abs(), "{lhs} vs {rhs}");
            if neumann {
                assert!(ker.kappa.iter().all(|k| k.abs() <= 1e-8));
            }
        }
    }
}
