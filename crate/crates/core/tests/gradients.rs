use iocnn::net::{ActivationKind, FinalMap, LayerSpec, Mode, ModelSpec, Network};
use iocnn::verify::gradient_check;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn check(spec: ModelSpec, seed: u64, mode: Mode) -> f64 {
    let net = Network::<f64>::new(spec.clone(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let x = random(5, spec.input_len(), &mut rng);
    let d = random(5, spec.num_outputs, &mut rng);
    let r = gradient_check(&net, x.view(), d.view(), mode, 1e-4, 1e-6).unwrap();
    println!("{mode:?} seed {seed}: {} entries, max rel err {:.2e} at {:?}", r.entries, r.max_rel_err, r.worst);
    r.max_rel_err
}

fn conv_net() -> ModelSpec {
    ModelSpec {
        input_shape: vec![2, 6, 6],
        layers: vec![
            LayerSpec::Conv2d { filters: 3, kernel: 3, stride: 1, padding: 1 },
            LayerSpec::act(ActivationKind::Elu),
            LayerSpec::Maxpool { size: 2, stride: None },
            LayerSpec::Conv2d { filters: 2, kernel: 2, stride: 1, padding: 0 },
            LayerSpec::Batchnorm,
            LayerSpec::act(ActivationKind::Elu),
            LayerSpec::dense(3),
        ],
        num_outputs: 3,
        final_map: FinalMap::Softmax,
    }
}

#[test]
fn mlp_matches_finite_differences() {
    for seed in 0..5 {
        let spec = ModelSpec::mlp(4, &[6, 5], 3, ActivationKind::Elu, false, FinalMap::Softmax);
        assert!(check(spec, seed, Mode::Train) < 1e-4);
    }
}

#[test]
fn batchnorm_mlp_in_both_modes() {
    for seed in 0..3 {
        let spec = ModelSpec::mlp(3, &[4, 4], 2, ActivationKind::Elu, true, FinalMap::Softmax);
        assert!(check(spec.clone(), seed, Mode::Train) < 1e-4);
        assert!(check(spec, seed, Mode::Infer) < 1e-4);
    }
}

#[test]
fn conv_net_matches_finite_differences() {
    for seed in 0..5 {
        assert!(check(conv_net(), seed, Mode::Train) < 1e-4);
    }
}

#[test]
fn skip_connection_gradients() {
    let spec = ModelSpec {
        input_shape: vec![3],
        layers: vec![
            LayerSpec::dense(3),
            LayerSpec::act(ActivationKind::Elu),
            LayerSpec::dense(3),
            LayerSpec::SkipAdd { from: 2 },
            LayerSpec::act(ActivationKind::Elu),
            LayerSpec::SkipAdd { from: 0 },
            LayerSpec::dense(2),
        ],
        num_outputs: 2,
        final_map: FinalMap::Softmax,
    };
    for seed in 0..3 {
        assert!(check(spec.clone(), seed, Mode::Train) < 1e-4);
    }
}
