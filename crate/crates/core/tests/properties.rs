use iocnn::constraints::{audit_nonnegativity, build_mask, project, project_tensor, ConstraintPolicy, ProjectionStrategy};
use iocnn::data::{randomize_labels, split, whiten_apply, whiten_fit, Dataset, Provenance};
use iocnn::metrics::ece;
use iocnn::net::{argmax, decode_model, encode_model, softmax, ActivationKind, FinalMap, ModelSpec, Network};
use ndarray::{Array1, Array2, ArrayD, IxDyn};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CONVEX: [ActivationKind; 4] = [
    ActivationKind::Relu,
    ActivationKind::Elu,
    ActivationKind::LeakyRelu,
    ActivationKind::Identity,
];

fn dataset(n: usize, d: usize, classes: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
    let y = (0..n).map(|i| i % classes).collect();
    Dataset::new(x, y, classes, Provenance::new("random")).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_keeps_argmax(row in prop::collection::vec(-30.0f64..30.0, 2..12)) {
        let z = Array2::from_shape_vec((1, row.len()), row).unwrap();
        let p = softmax(z.view());
        prop_assert_eq!(argmax(z.row(0)), argmax(p.row(0)));
    }

    #[test]
    fn activations_convex_and_nondecreasing(a in -8.0f64..8.0, b in -8.0f64..8.0, lam in 0.0f64..1.0) {
        for act in CONVEX {
            let m = act.apply(lam * a + (1.0 - lam) * b);
            prop_assert!(m <= lam * act.apply(a) + (1.0 - lam) * act.apply(b) + 1e-12, "{act:?}");
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(act.apply(lo) <= act.apply(hi), "{act:?}");
        }
    }

    #[test]
    fn projections_feasible_and_idempotent(vals in prop::collection::vec(-3.0f64..3.0, 1..40)) {
        for s in ProjectionStrategy::ALL {
            let mut t = ArrayD::from_shape_vec(IxDyn(&[vals.len()]), vals.clone()).unwrap();
            project_tensor(&mut t, s, 5.0);
            prop_assert!(t.iter().all(|&w| w >= 0.0), "{s:?}");
            let once = t.clone();
            project_tensor(&mut t, s, 5.0);
            prop_assert_eq!(&t, &once);
        }
    }

    #[test]
    fn projected_models_pass_audit(seed in 0u64..1000, strategy in 0usize..4) {
        let spec = ModelSpec::mlp(3, &[5, 4], 2, ActivationKind::Elu, true, FinalMap::Softmax);
        let mut net = Network::<f64>::new(spec, seed).unwrap();
        for (_, v) in net.params_mut() {
            v.mapv_inplace(|w| w - 0.5);
        }
        let policy = ConstraintPolicy::strict().with_strategy(ProjectionStrategy::ALL[strategy]);
        let mask = build_mask(&net, &policy);
        project(&mut net, &mask, &policy);
        prop_assert!(audit_nonnegativity(&net, &mask).is_empty());
    }

    #[test]
    fn inference_is_batch_size_independent(seed in 0u64..1000, n in 1usize..20) {
        let spec = ModelSpec::mlp(4, &[6], 3, ActivationKind::LeakyRelu, true, FinalMap::Softmax);
        let net = Network::<f64>::new_convex(spec, seed, ConstraintPolicy::strict()).unwrap();
        let x = dataset(n, 4, 2, seed).inputs;
        let all = net.logits(x.view()).unwrap();
        for i in 0..n {
            let one = net.logits(x.slice(ndarray::s![i..i + 1, ..])).unwrap();
            for j in 0..3 {
                prop_assert!((one[[0, j]] - all[[i, j]]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn ece_ignores_sample_order(
        conf in prop::collection::vec(0.0f64..=1.0, 1..60),
        seed in any::<u64>(),
        bins in 1usize..20,
    ) {
        let correct: Vec<bool> = conf.iter().enumerate().map(|(i, c)| (i as f64 * 0.37 + c) % 1.0 > 0.4).collect();
        let mut idx: Vec<usize> = (0..conf.len()).collect();
        rand::seq::SliceRandom::shuffle(&mut idx[..], &mut ChaCha8Rng::seed_from_u64(seed));
        let c2: Vec<f64> = idx.iter().map(|&i| conf[i]).collect();
        let k2: Vec<bool> = idx.iter().map(|&i| correct[i]).collect();
        let (a, ba) = ece(&conf, &correct, bins).unwrap();
        let (b, bb) = ece(&c2, &k2, bins).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert_eq!(ba.total(), conf.len());
        prop_assert_eq!(bb.total(), conf.len());
    }

    #[test]
    fn randomization_touches_at_most_round_pn(n in 1usize..300, p in 0.0f64..=1.0, seed in any::<u64>()) {
        let d = dataset(n, 1, 3, 0);
        let r = randomize_labels(&d, p, seed).unwrap();
        let changed = d.labels.iter().zip(&r.labels).filter(|(a, b)| a != b).count();
        prop_assert!(changed <= (p * n as f64).round() as usize);
        prop_assert_eq!(&r.inputs, &d.inputs);
    }

    #[test]
    fn split_is_a_partition(n in 30usize..300, seed in any::<u64>()) {
        let mut d = dataset(n, 1, 3, 1);
        // Tag rows so the split can be traced back.
        for i in 0..n {
            d.inputs[[i, 0]] = i as f64;
        }
        let s = split(&d, [0.6, 0.2, 0.2], seed).unwrap();
        let mut seen: Vec<usize> = [&s.train, &s.val, &s.test]
            .iter()
            .flat_map(|p| p.inputs.column(0).to_vec())
            .map(|v| v as usize)
            .collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        for part in [&s.train, &s.val, &s.test] {
            for i in 0..part.len() {
                prop_assert_eq!(part.labels[i], d.labels[part.inputs[[i, 0]] as usize]);
            }
        }
    }

    #[test]
    fn persistence_round_trips(seed in any::<u64>()) {
        let spec = ModelSpec::mlp(3, &[4], 2, ActivationKind::Elu, true, FinalMap::Softmax);
        let net = Network::<f64>::new_convex(spec, seed, ConstraintPolicy::strict()).unwrap();
        let back: Network<f64> = decode_model(&encode_model(&net).unwrap()).unwrap();
        prop_assert_eq!(back, net);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn whitening_gives_identity_covariance(d in 1usize..6, seed in any::<u64>()) {
        let n = 50 * d.max(4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mix = Array2::from_shape_fn((d, d), |_| rng.random_range(-1.0..1.0)) + Array2::<f64>::eye(d) * 2.0;
        let raw = dataset(n, d, 2, seed).inputs.dot(&mix);
        let data = Dataset::new(raw, vec![0; n], 1, Provenance::new("mixed")).unwrap();
        let w = whiten_fit(&data, 1e-9).unwrap();
        let z = whiten_apply(&w, &data).unwrap().inputs;
        let mean: Array1<f64> = z.mean_axis(ndarray::Axis(0)).unwrap();
        prop_assert!(mean.iter().all(|m| m.abs() <= 1e-9));
        let cov = z.t().dot(&z) / n as f64;
        let frob = (&cov - &Array2::<f64>::eye(d)).mapv(|v| v * v).sum().sqrt();
        prop_assert!(frob <= 1e-3, "{frob}");
    }
}
