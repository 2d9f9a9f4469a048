use hmnn::math::{Matrix, RandomSource};
use hmnn::{Emission, Head, NetworkShape, Targets, TimeStepData};
use hmnn_testkit::{rel_diff, NaiveMlp};
use proptest::prelude::*;

fn random_weights(shape: &NetworkShape, scale: f64, rs: &mut RandomSource) -> Vec<f64> {
    rs.sample_standard_normal(shape.num_weights()).into_iter().map(|z| z * scale).collect()
}

fn random_data(shape: &NetworkShape, batch: usize, rs: &mut RandomSource) -> TimeStepData {
    let x = Matrix::new(batch, shape.input_dim(), rs.sample_standard_normal(batch * shape.input_dim())).unwrap();
    let y = match shape.head() {
        Head::SoftmaxCategorical => Targets::Classes((0..batch).map(|_| rs.index(shape.output_dim())).collect()),
        Head::GaussianRegression { .. } => Targets::Values(
            Matrix::new(batch, shape.output_dim(), rs.sample_standard_normal(batch * shape.output_dim())).unwrap(),
        ),
    };
    TimeStepData::new(x, y).unwrap()
}

/// Per-sample log-likelihood and gradient summed by the naive oracle.
fn oracle(shape: &NetworkShape, w: &[f64], data: &TimeStepData) -> (f64, Vec<f64>) {
    let mlp = NaiveMlp {
        sizes: shape.layer_sizes().to_vec(),
    };
    let mut ll = 0.0;
    let mut grad = vec![0.0; w.len()];
    for i in 0..data.len() {
        let x = data.inputs.row(i);
        let (l, g) = match (&data.targets, shape.head()) {
            (Targets::Classes(c), _) => mlp.sample_log_lik_grad(w, x, Ok(c[i])),
            (Targets::Values(y), Head::GaussianRegression { obs_var }) => {
                mlp.sample_log_lik_grad(w, x, Err((y.row(i), obs_var)))
            }
            _ => unreachable!(),
        };
        ll += l;
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    (ll, grad)
}

#[test]
fn forward_matches_naive_evaluation() {
    let mut rs = RandomSource::new(8);
    for head in [Head::SoftmaxCategorical, Head::GaussianRegression { obs_var: 0.5 }] {
        let shape = NetworkShape::new(vec![5, 7, 6, 3], head).unwrap();
        let w = random_weights(&shape, 0.5, &mut rs);
        let data = random_data(&shape, 9, &mut rs);
        let out = shape.forward(&w, &data.inputs).unwrap();
        let mlp = NaiveMlp {
            sizes: shape.layer_sizes().to_vec(),
        };
        for i in 0..9 {
            let z = mlp.output(&w, data.inputs.row(i));
            let expected = match head {
                Head::SoftmaxCategorical => NaiveMlp::log_softmax(&z),
                Head::GaussianRegression { .. } => z,
            };
            for (a, b) in out.row(i).iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn log_likelihood_matches_per_sample_sum() {
    let mut rs = RandomSource::new(12);
    for head in [Head::SoftmaxCategorical, Head::GaussianRegression { obs_var: 2.0 }] {
        let shape = NetworkShape::new(vec![4, 8, 3], head).unwrap();
        let w = random_weights(&shape, 0.7, &mut rs);
        let data = random_data(&shape, 11, &mut rs);
        let (expected, _) = oracle(&shape, &w, &data);
        let got = shape.log_likelihood(&w, &data).unwrap();
        assert!((got - expected).abs() < 1e-10 * (1.0 + expected.abs()));
    }
}

#[test]
fn gradient_matches_finite_differences_on_small_net() {
    let mut rs = RandomSource::new(31);
    let shape = NetworkShape::new(vec![4, 8, 3], Head::SoftmaxCategorical).unwrap();
    for _ in 0..5 {
        let w = random_weights(&shape, 0.6, &mut rs);
        let data = random_data(&shape, 5, &mut rs);
        let mut grad = vec![0.0; w.len()];
        shape.log_likelihood_grad(&w, &data, &mut grad).unwrap();
        let h = 1e-6;
        for v in 0..w.len() {
            let mut plus = w.clone();
            let mut minus = w.clone();
            plus[v] += h;
            minus[v] -= h;
            let fd = (shape.log_likelihood(&plus, &data).unwrap() - shape.log_likelihood(&minus, &data).unwrap()) / (2.0 * h);
            assert!(rel_diff(grad[v], fd, 1e-6) < 1e-5, "coord {v}: {} vs {fd}", grad[v]);
        }
    }
}

#[test]
fn log_softmax_rows_normalize() {
    let mut rs = RandomSource::new(2);
    let shape = NetworkShape::new(vec![6, 5, 10], Head::SoftmaxCategorical).unwrap();
    let w = random_weights(&shape, 3.0, &mut rs);
    let x = Matrix::new(20, 6, rs.sample_standard_normal(120)).unwrap();
    let out = shape.forward(&w, &x).unwrap();
    for i in 0..20 {
        let total: f64 = out.row(i).iter().map(|l| l.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

fn shapes() -> impl Strategy<Value = Vec<usize>> {
    (1usize..=10, prop::collection::vec(1usize..=16, 1..=2), 2usize..=5).prop_map(|(i, mut hidden, o)| {
        if hidden.len() == 2 {
            hidden[1] = hidden[1].min(8);
        }
        let mut sizes = vec![i];
        sizes.append(&mut hidden);
        sizes.push(o);
        sizes
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gradient_matches_oracle_on_random_shapes(sizes in shapes(), seed in any::<u64>(), regression in any::<bool>()) {
        let head = if regression { Head::GaussianRegression { obs_var: 0.7 } } else { Head::SoftmaxCategorical };
        let shape = NetworkShape::new(sizes, head).unwrap();
        let mut rs = RandomSource::new(seed);
        let w = random_weights(&shape, 0.5, &mut rs);
        let data = random_data(&shape, 4, &mut rs);
        let mut grad = vec![0.0; w.len()];
        let ll = shape.log_likelihood_grad(&w, &data, &mut grad).unwrap();
        let (ll_ref, grad_ref) = oracle(&shape, &w, &data);
        prop_assert!((ll - ll_ref).abs() <= 1e-10 * (1.0 + ll_ref.abs()));
        for (a, b) in grad.iter().zip(&grad_ref) {
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
        // Finite differences on a few coordinates, away from ReLU kinks.
        let h = 1e-6;
        for _ in 0..6 {
            let v = rs.index(w.len());
            let mut plus = w.clone();
            let mut minus = w.clone();
            plus[v] += h;
            minus[v] -= h;
            let fp = shape.log_likelihood(&plus, &data).unwrap();
            let fm = shape.log_likelihood(&minus, &data).unwrap();
            let f0 = ll;
            let central = (fp - fm) / (2.0 * h);
            let one_sided = [(fp - f0) / h, (f0 - fm) / h];
            let err = [central, one_sided[0], one_sided[1]]
                .iter()
                .map(|fd| rel_diff(grad[v], *fd, 1e-6))
                .fold(f64::INFINITY, f64::min);
            prop_assert!(err < 1e-4, "coord {}: {} vs {}", v, grad[v], central);
        }
    }

    #[test]
    fn log_likelihood_is_permutation_invariant(seed in any::<u64>()) {
        let shape = NetworkShape::new(vec![3, 6, 4], Head::SoftmaxCategorical).unwrap();
        let mut rs = RandomSource::new(seed);
        let w = random_weights(&shape, 0.8, &mut rs);
        let data = random_data(&shape, 10, &mut rs);
        let mut order: Vec<usize> = (0..10).collect();
        rs.shuffle(&mut order);
        let a = shape.log_likelihood(&w, &data).unwrap();
        let b = shape.log_likelihood(&w, &data.select(&order).unwrap()).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }
}
