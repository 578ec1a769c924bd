use las_core::harness::data::{generate_synthetic_task, CalibSpec, Dataset, SyntheticTask};
use las_core::nn::layers::{softmax_cross_entropy, BatchNorm};
use las_core::nn::{
    count_correct, evaluate, forward_macs, train, train_step, LrSchedule, Model, Network, SearchSpaceSpec, Tensor,
    TrainConfig, TrainableModel,
};
use las_core::{LasError, LayerAssignment};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn a(s: &str) -> LayerAssignment {
    s.parse().unwrap()
}

fn random_input<T: las_core::nn::Scalar>(shape: [usize; 4], seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| T::of(rng.gen_range(-1.0..1.0))).collect())
}

fn param_values<T: las_core::nn::Scalar, M: Model<T>>(m: &M) -> Vec<T> {
    let mut out = Vec::new();
    m.layers().for_each_param(&mut |p| out.extend_from_slice(&p.value));
    out
}

#[test]
fn build_is_deterministic() {
    let spec = SearchSpaceSpec::plain(vec![8, 16, 32], [3, 32, 32], 8, 8);
    let x = Network::<f32>::build(&spec, &a("2-1-2"), 9).unwrap();
    let y = Network::<f32>::build(&spec, &a("2-1-2"), 9).unwrap();
    let z = Network::<f32>::build(&spec, &a("2-1-2"), 10).unwrap();
    assert_eq!(x.digest(), y.digest());
    assert_ne!(x.digest(), z.digest());
}

#[test]
fn plain_parameter_count_matches_hand_tally() {
    let spec = SearchSpaceSpec::plain(vec![8, 16, 32], [3, 32, 32], 8, 8);
    let net = Network::<f32>::build(&spec, &a("2-1-2"), 0).unwrap();
    // conv weights + BN scale/shift per cell, then the two FC layers.
    let expected = (3 * 8 * 9 + 16)
        + (8 * 8 * 9 + 16)
        + (8 * 16 * 9 + 32)
        + (16 * 32 * 9 + 64)
        + (32 * 32 * 9 + 64)
        + (32 * 4 * 4 * 64 + 64)
        + (64 * 8 + 8);
    assert_eq!(expected, 49312);
    assert_eq!(net.parameter_count(), expected);
}

#[test]
fn residual_three_by_three_is_the_twenty_layer_resnet() {
    let spec = SearchSpaceSpec::residual(vec![16, 32, 64], [3, 32, 32], 10, 9);
    let net = Network::<f32>::build(&spec, &a("3-3-3"), 0).unwrap();
    let stem = 3 * 16 * 9 + 32;
    let g1 = 6 * (16 * 16 * 9 + 32);
    let g2 = (16 * 32 * 9 + 64) + 5 * (32 * 32 * 9 + 64);
    let g3 = (32 * 64 * 9 + 128) + 5 * (64 * 64 * 9 + 128);
    let fc = 64 * 10 + 10;
    assert_eq!(net.parameter_count(), stem + g1 + g2 + g3 + fc);
    assert_eq!(net.parameter_count(), 269_722);
    assert_eq!(net.macs(), 40_551_040);
    let logits = net.logits(&random_input::<f32>([2, 3, 32, 32], 1)).unwrap();
    assert_eq!(logits.shape(), [2, 10, 1, 1]);
}

#[test]
fn macs_are_invariant_across_equal_depth() {
    for spec in [
        SearchSpaceSpec::plain(vec![8, 16, 32], [3, 32, 32], 8, 8),
        SearchSpaceSpec::residual(vec![8, 16, 32], [3, 32, 32], 8, 8),
    ] {
        let all = las_core::assignments::enumerate_assignments(8, 3).unwrap();
        let first = forward_macs(&spec, all[0].groups());
        assert!(all.iter().all(|x| forward_macs(&spec, x.groups()) == first));
    }
}

#[test]
fn zero_classifier_gives_zero_logits() {
    let spec = SearchSpaceSpec::plain(vec![4, 8], [1, 8, 8], 3, 3);
    let mut net = Network::<f64>::build(&spec, &a("1-2"), 3).unwrap();
    for l in net.params_mut().classifier.iter_mut() {
        l.weight.value.fill(0.0);
        l.bias.value.fill(0.0);
    }
    let logits = net.logits(&random_input([4, 1, 8, 8], 2)).unwrap();
    assert!(logits.data().iter().all(|&v| v == 0.0));
}

#[test]
fn duplicated_inputs_give_identical_rows() {
    let spec = SearchSpaceSpec::residual(vec![4, 8], [2, 8, 8], 5, 4);
    let net = Network::<f32>::build(&spec, &a("2-2"), 3).unwrap();
    let one = random_input::<f32>([1, 2, 8, 8], 5);
    let mut data = one.data().to_vec();
    data.extend_from_slice(one.data());
    let logits = net.logits(&Tensor::from_vec([2, 2, 8, 8], data)).unwrap();
    assert_eq!(logits.row(0), logits.row(1));
}

/// Loss of a training-mode forward pass (batch statistics).
fn loss_of<M: Model<f64>>(m: &M, x: &Tensor<f64>, labels: &[usize]) -> f64 {
    let (logits, _) = m.layers().forward(x, true).unwrap();
    softmax_cross_entropy(&logits, labels).0
}

fn check_gradients(spec: &SearchSpaceSpec, assignment: &str, seed: u64) {
    let mut net = Network::<f64>::build(spec, &a(assignment), seed).unwrap();
    // Perturb BN affine parameters away from (1, 0) so their gradients matter.
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    for bn in net.layers_mut().batch_norms_mut() {
        for g in bn.gamma.value.iter_mut() {
            *g = rng.gen_range(0.5..1.5);
        }
        for b in bn.beta.value.iter_mut() {
            *b = rng.gen_range(-0.3..0.3);
        }
    }
    let [c, h, w] = spec.input_shape;
    let x = random_input::<f64>([4, c, h, w], seed + 7);
    let labels: Vec<usize> = (0..4).map(|i| i % spec.num_classes).collect();

    let analytic: Vec<Vec<f64>> = {
        let mut layers = net.layers_mut();
        let (logits, tape) = layers.as_layers().forward(&x, true).unwrap();
        let (_, dlogits) = softmax_cross_entropy(&logits, &labels);
        layers.zero_grad();
        layers.backward(&tape.unwrap(), dlogits);
        let mut g = Vec::new();
        layers.for_each_param_mut(&mut |p| g.push(p.grad.clone()));
        g
    };

    let h_step = 1e-6;
    let mut worst = 0.0f64;
    for (block, grads) in analytic.iter().enumerate() {
        let picks: Vec<usize> = (0..grads.len().min(6)).map(|k| k * grads.len() / grads.len().min(6)).collect();
        for &idx in &picks {
            let shift = |net: &mut Network<f64>, delta: f64| {
                let mut b = 0;
                net.layers_mut().for_each_param_mut(&mut |p| {
                    if b == block {
                        p.value[idx] += delta;
                    }
                    b += 1;
                });
            };
            shift(&mut net, h_step);
            let plus = loss_of(&net, &x, &labels);
            shift(&mut net, -2.0 * h_step);
            let minus = loss_of(&net, &x, &labels);
            shift(&mut net, h_step);
            let numeric = (plus - minus) / (2.0 * h_step);
            let an = grads[idx];
            let rel = (an - numeric).abs() / an.abs().max(numeric.abs()).max(1e-4);
            worst = worst.max(rel);
            assert!(
                rel < 1e-3,
                "{assignment} block {block} index {idx}: analytic {an} numeric {numeric} rel {rel}"
            );
        }
    }
    assert!(worst.is_finite());
}

#[test]
fn gradients_match_finite_differences_plain() {
    // conv, BN, ReLU, max-pool, FC
    let spec = SearchSpaceSpec::plain(vec![3, 6], [2, 8, 8], 3, 3);
    check_gradients(&spec, "2-1", 11);
}

#[test]
fn gradients_match_finite_differences_residual() {
    // stem, residual add with subsampled zero-padded shortcut, global pooling
    let spec = SearchSpaceSpec::residual(vec![3, 6], [2, 8, 8], 3, 4);
    check_gradients(&spec, "2-2", 12);
}

#[test]
fn bn_momentum_one_copies_batch_statistics() {
    let mut bn = BatchNorm::<f64>::new(3);
    let x = random_input::<f64>([5, 3, 4, 4], 3);
    let (_, cache) = bn.forward_train(&x);
    bn.update_running(&cache, 1.0);
    for c in 0..3 {
        let vals: Vec<f64> = (0..5).flat_map(|i| x.sample(i)[c * 16..(c + 1) * 16].to_vec()).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!((bn.running_mean[c] - mean).abs() < 1e-12);
        assert!((bn.running_var[c] - var).abs() < 1e-12);
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let spec = SearchSpaceSpec::plain(vec![4, 8], [1, 8, 8], 3, 3);
    let mut net = Network::<f32>::build(&spec, &a("1-2"), 3).unwrap();
    let before = param_values(&net);
    let x = random_input::<f32>([4, 1, 8, 8], 1);
    train_step(&mut net, &x, &[0, 1, 2, 0], 0.0, &TrainConfig::default()).unwrap();
    assert_eq!(before, param_values(&net));
}

fn toy_split(seed: u64, noise: f64) -> las_core::harness::data::DatasetSplit {
    let mut t = SyntheticTask::new(seed, 4, 40, [1, 8, 8]);
    t.noise = noise;
    generate_synthetic_task(&t, CalibSpec { size: 32, seed }).unwrap()
}

fn short_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        base_lr: 0.05,
        lr_schedule: LrSchedule::Constant,
        batch_size: 16,
        epochs,
        rng_seed: 4,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_bitwise_deterministic() {
    let split = toy_split(1, 0.1);
    let spec = SearchSpaceSpec::plain(vec![4, 8], [1, 8, 8], 4, 3);
    let run = || {
        let mut net = Network::<f32>::build(&spec, &a("2-1"), 5).unwrap();
        let s = train(&mut net, &split.train, Some(&split.val), &short_cfg(2)).unwrap();
        (net.digest(), s)
    };
    let (d1, s1) = run();
    let (d2, s2) = run();
    assert_eq!(d1, d2);
    assert_eq!(s1, s2);
}

#[test]
fn separable_task_is_learned() {
    let split = toy_split(2, 0.0);
    let spec = SearchSpaceSpec::plain(vec![4, 8], [1, 8, 8], 4, 3);
    let mut net = Network::<f32>::build(&spec, &a("1-1"), 1).unwrap();
    let s = train(&mut net, &split.train, Some(&split.train), &short_cfg(50)).unwrap();
    assert!(s.val_accuracy.unwrap() >= 0.99, "{s:?}");
    assert!(s.epoch_losses.last().unwrap() < &s.epoch_losses[0]);
}

#[test]
fn count_correct_cases() {
    // Always predicts class 0; a quarter of the labels are 0.
    let logits = Tensor::<f32>::from_vec([8, 4, 1, 1], (0..32).map(|i| if i % 4 == 0 { 1.0 } else { 0.0 }).collect());
    let labels = [0, 1, 2, 3, 0, 1, 2, 3];
    assert_eq!(count_correct(&logits, &labels), 2);
    let perfect = Tensor::<f32>::from_vec(
        [8, 4, 1, 1],
        (0..32).map(|i| if i % 4 == labels[i / 4] { 1.0 } else { 0.0 }).collect(),
    );
    assert_eq!(count_correct(&perfect, &labels), 8);
}

#[test]
fn evaluate_rejects_empty_set() {
    let spec = SearchSpaceSpec::plain(vec![4, 8], [1, 8, 8], 4, 3);
    let net = Network::<f32>::build(&spec, &a("1-1"), 1).unwrap();
    let empty = Dataset::new([1, 8, 8], vec![], vec![], vec![]).unwrap();
    assert!(matches!(evaluate(&net, &empty, 8), Err(LasError::Domain(_))));
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let split = toy_split(3, 0.1);
    let spec = SearchSpaceSpec::residual(vec![4, 8], [1, 8, 8], 4, 4);
    let mut net = Network::<f32>::build(&spec, &a("2-1"), 5).unwrap();
    train(&mut net, &split.train, None, &short_cfg(1)).unwrap();
    let bytes = net.to_checkpoint();
    let back = Network::<f32>::from_checkpoint(&bytes, &spec).unwrap();
    assert_eq!(back.assignment(), net.assignment());
    assert_eq!(back.to_checkpoint(), bytes);
    let (x, _) = split.val.batch::<f32>(&(0..16).collect::<Vec<_>>());
    assert_eq!(back.logits(&x).unwrap().data(), net.logits(&x).unwrap().data());

    let other = SearchSpaceSpec::residual(vec![4, 8], [1, 8, 8], 5, 4);
    assert!(matches!(Network::<f32>::from_checkpoint(&bytes, &other), Err(LasError::Format(_))));
    assert!(matches!(
        Network::<f32>::from_checkpoint(&bytes[..bytes.len() - 3], &spec),
        Err(LasError::Truncated { .. })
    ));
}

#[test]
fn non_finite_activations_name_the_layer() {
    let spec = SearchSpaceSpec::plain(vec![4, 8], [1, 8, 8], 3, 3);
    let mut net = Network::<f32>::build(&spec, &a("1-2"), 3).unwrap();
    net.params_mut().groups[1][1].for_each_param_mut(&mut |p| p.value[0] = f32::INFINITY);
    let err = net.logits(&random_input([2, 1, 8, 8], 1)).unwrap_err();
    match err {
        LasError::NonFinite { layer } => assert!(layer.contains("group 2 cell 2"), "{layer}"),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn wrong_input_shape_is_rejected() {
    let spec = SearchSpaceSpec::plain(vec![4, 8], [1, 8, 8], 3, 3);
    let net = Network::<f32>::build(&spec, &a("1-2"), 3).unwrap();
    assert!(matches!(net.logits(&random_input([2, 3, 8, 8], 1)), Err(LasError::Shape(_))));
}
