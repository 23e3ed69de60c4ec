use approx::assert_relative_eq;
use itertools::Itertools;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vcsg_core::oracle::{make_problem, FiniteSumObjective, IfoCounter, ProblemKind, ProblemSpec};

fn random_vec(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-scale..scale)).collect()
}

fn central_difference(obj: &FiniteSumObjective, i: usize, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[k] += h;
            down[k] -= h;
            (obj.component_value(i, &up).unwrap() - obj.component_value(i, &down).unwrap()) / (2.0 * h)
        })
        .collect()
}

#[test]
fn sigmoid_gradient_matches_finite_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..50 {
        let d = 1 + trial % 6;
        let features: Vec<Vec<f64>> = (0..4).map(|_| random_vec(&mut rng, d, 2.0)).collect();
        let labels: Vec<f64> = (0..4).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let obj = FiniteSumObjective::sigmoid(&features, &labels, 0.01).unwrap();
        let x = random_vec(&mut rng, d, 1.5);
        let i = rng.random_range(0..4);
        let g = obj.grad_component(i, &x, &mut IfoCounter::new()).unwrap();
        let fd = central_difference(&obj, i, &x, 1e-5);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-6, "trial {trial}: {a} vs {b}");
        }
    }
}

#[test]
fn every_problem_gradient_matches_finite_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for kind in ProblemKind::ALL {
        let obj = make_problem(&ProblemSpec::new(kind, 12, 4, 3)).unwrap();
        for _ in 0..10 {
            let x = random_vec(&mut rng, obj.dim(), 1.0);
            let i = rng.random_range(0..obj.n());
            let g = obj.grad_component(i, &x, &mut IfoCounter::new()).unwrap();
            let fd = central_difference(&obj, i, &x, 1e-5);
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-6 * (1.0 + a.abs()), "{kind:?}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn subset_means_average_to_full_gradient() {
    let obj = make_problem(&ProblemSpec::new(ProblemKind::Sigmoid, 6, 3, 1)).unwrap();
    let x = [0.3, -0.7, 1.1];
    let mut counter = IfoCounter::new();
    let full = obj.full_grad(&x, &mut counter).unwrap();
    for m in 1..=6 {
        let mut acc = [0.0; 3];
        let mut count = 0.0;
        for subset in (0..6).combinations(m) {
            let g = obj.grad_batch(&subset, &x, &mut counter).unwrap();
            acc.iter_mut().zip(&g).for_each(|(a, v)| *a += v);
            count += 1.0;
        }
        for (a, f) in acc.iter().zip(&full) {
            assert!((a / count - f).abs() <= 1e-12, "m={m}");
        }
    }
}

#[test]
fn batch_charges_its_size() {
    let obj = make_problem(&ProblemSpec::new(ProblemKind::Quadratic, 10, 2, 1)).unwrap();
    let mut counter = IfoCounter::new();
    obj.grad_batch(&[0, 3, 9], &[0.0, 0.0], &mut counter).unwrap();
    assert_eq!(counter.get(), 3);
    obj.full_grad(&[0.0, 0.0], &mut counter).unwrap();
    assert_eq!(counter.get(), 13);
    assert!(obj.grad_batch(&[], &[0.0, 0.0], &mut counter).is_err());
}

#[test]
fn least_squares_l_matches_eigen_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (n, d) in [(50, 3), (200, 10), (30, 8)] {
        let features: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut rng, d, 1.0)).collect();
        let targets: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let obj = FiniteSumObjective::least_squares(&features, &targets, 1e-5).unwrap();
        let a = DMatrix::from_fn(n, d, |r, c| features[r][c]);
        let gram = a.transpose() * &a / n as f64;
        let top = gram.symmetric_eigenvalues().max();
        assert!((obj.lipschitz() - top).abs() <= 0.01 * top, "{} vs {top}", obj.lipschitz());
    }
}

#[test]
fn variance_matches_two_pass_oracle() {
    let obj = make_problem(&ProblemSpec::new(ProblemKind::LeastSquares, 9, 4, 5)).unwrap();
    let x = [0.2, -0.1, 0.5, 1.0];
    let mut counter = IfoCounter::new();
    let comps: Vec<Vec<f64>> = (0..9)
        .map(|i| obj.grad_component(i, &x, &mut counter).unwrap())
        .collect();
    let mean: Vec<f64> = (0..4).map(|k| comps.iter().map(|g| g[k]).sum::<f64>() / 9.0).collect();
    let oracle = comps
        .iter()
        .map(|g| g.iter().zip(&mean).map(|(a, m)| (a - m).powi(2)).sum::<f64>())
        .sum::<f64>()
        / 9.0;
    let mut c = IfoCounter::new();
    assert_relative_eq!(obj.variance_s(&x, &mut c).unwrap(), oracle, max_relative = 1e-12);
    assert_eq!(c.get(), 9);
}

#[test]
fn grad_norm_sq_is_sum_of_squared_entries() {
    let obj = make_problem(&ProblemSpec::new(ProblemKind::Mlp, 15, 3, 2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_vec(&mut rng, obj.dim(), 1.0);
    let mut c = IfoCounter::new();
    let g = obj.full_grad(&x, &mut c).unwrap();
    let direct: f64 = g.iter().map(|v| v * v).sum();
    assert_eq!(obj.grad_norm_sq(&x, &mut c).unwrap(), direct);
}

#[test]
fn analytic_minimizers_are_stationary() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut c = IfoCounter::new();

    let centers: Vec<Vec<f64>> = (0..7).map(|_| random_vec(&mut rng, 3, 2.0)).collect();
    let quad = FiniteSumObjective::quadratic(&centers).unwrap();
    let mean: Vec<f64> = (0..3).map(|k| centers.iter().map(|c| c[k]).sum::<f64>() / 7.0).collect();
    assert!(quad.grad_norm_sq(&mean, &mut c).unwrap() <= 1e-12);

    let planted = [0.5, -1.0, 2.0];
    let features: Vec<Vec<f64>> = (0..20).map(|_| random_vec(&mut rng, 3, 1.0)).collect();
    let targets: Vec<f64> = features.iter().map(|a| a.iter().zip(&planted).map(|(p, q)| p * q).sum()).collect();
    let ls = FiniteSumObjective::least_squares(&features, &targets, 0.0).unwrap();
    assert!(ls.grad_norm_sq(&planted, &mut c).unwrap() <= 1e-12);
}

#[test]
fn identical_specs_give_identical_objectives() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for kind in ProblemKind::ALL {
        let spec = ProblemSpec::new(kind, 30, 5, 77);
        let (a, b) = (make_problem(&spec).unwrap(), make_problem(&spec).unwrap());
        assert_eq!(a.lipschitz().to_bits(), b.lipschitz().to_bits());
        for _ in 0..100 {
            let x = random_vec(&mut rng, a.dim(), 1.0);
            assert_eq!(a.value(&x).unwrap().to_bits(), b.value(&x).unwrap().to_bits());
            let mut c = IfoCounter::new();
            assert_eq!(a.full_grad(&x, &mut c).unwrap(), b.full_grad(&x, &mut c).unwrap());
        }
    }
}

#[test]
fn default_sigmoid_is_finite_at_origin() {
    let obj = make_problem(&ProblemSpec::new(ProblemKind::Sigmoid, 1000, 20, 0)).unwrap();
    let x = vec![0.0; 20];
    assert!(obj.value(&x).unwrap().is_finite());
    let g = obj.full_grad(&x, &mut IfoCounter::new()).unwrap();
    assert!(g.iter().all(|v| v.is_finite()));
    assert!(obj.lipschitz().is_finite() && obj.lipschitz() > 0.0);
}
