use ndarray::Axis;
use proptest::prelude::*;

use super::*;
use crate::grad::{
    backward, finite_diff_grad, max_relative_error, sample_standard_normal, DEFAULT_FD_STEP,
};

fn small_arch() -> Architecture {
    Architecture {
        latent_dim: 3,
        encoder_hidden: vec![5],
        classifier_hidden: vec![4],
        task_disc_hidden: vec![4],
        prior_disc_hidden: vec![4],
        domain_disc_hidden: vec![4],
        slope: DEFAULT_SLOPE,
    }
}

/// Zeroes the last layer and sets its bias, so the head sees constant logits.
fn set_constant_logits(net: &mut Mlp, logits: &[f64]) {
    let last = net.spec().layers() - 1;
    net.weight_mut(last).fill(0.0);
    let b = net.bias_mut(last);
    for (dst, &v) in b.iter_mut().zip(logits) {
        *dst = v;
    }
}

#[test]
fn init_is_deterministic_and_bounded() {
    let spec = MlpSpec::new(vec![6, 4, 2], Head::Softmax);
    let a = Mlp::init("n", spec.clone(), 11, Stream::EncoderInit).unwrap();
    let b = Mlp::init("n", spec.clone(), 11, Stream::EncoderInit).unwrap();
    assert_eq!(a, b);
    assert!(a.weight(0).iter().all(|w| w.abs() <= 1.0));
    assert!(a.bias(0).iter().all(|&v| v == 0.0));
    let c = Mlp::init("n", spec, 12, Stream::EncoderInit).unwrap();
    assert_ne!(a, c);
}

#[test]
fn spec_validation() {
    assert!(MlpSpec::new(vec![3], Head::Linear).validate().is_err());
    assert!(MlpSpec::new(vec![3, 0, 2], Head::Linear).validate().is_err());
    assert!(MlpSpec::new(vec![3, 2], Head::Linear).validate().is_ok());
}

#[test]
fn default_architecture_shapes() {
    let arch = Architecture::default();
    let model = Model::init(&arch, 2, 10, 0).unwrap();
    assert_eq!(model.net(Group::Encoder).spec().widths, vec![2, 128, 128, 32]);
    assert_eq!(model.net(Group::Classifier).spec().widths, vec![16, 64, 10]);
    assert_eq!(model.net(Group::TaskDisc).spec().widths, vec![16, 128, 64, 11]);
    assert_eq!(model.net(Group::PriorDisc).spec().widths, vec![16, 64, 1]);
}

#[test]
fn zero_noise_gives_mean() {
    let model = Model::init(&small_arch(), 2, 3, 1).unwrap();
    let x = sample_standard_normal(&mut Stream::Data.rng(1), 4, 2);
    let code = model.encode(&x, &Matrix::zeros((4, 3))).unwrap();
    assert_eq!(code.z, code.mu);
    assert!(code.sigma.iter().all(|&s| s > 0.0 && s.is_finite()));
}

#[test]
fn stochasticity_lives_only_in_noise() {
    let model = Model::init(&small_arch(), 2, 3, 2).unwrap();
    let x = sample_standard_normal(&mut Stream::Data.rng(2), 4, 2);
    let mut rng = Stream::Noise.rng(2);
    let e1 = sample_standard_normal(&mut rng, 4, 3);
    let e2 = sample_standard_normal(&mut rng, 4, 3);
    let a = model.encode(&x, &e1).unwrap();
    let b = model.encode(&x, &e2).unwrap();
    assert_eq!(a.mu, b.mu);
    assert_eq!(a.sigma, b.sigma);
    assert_ne!(a.z, b.z);
}

#[test]
fn monte_carlo_mean_of_latent_draws() {
    let model = Model::init(&small_arch(), 2, 3, 3).unwrap();
    let n = 10_000;
    let x = Matrix::from_shape_fn((n, 2), |(_, j)| [0.3, -0.7][j]);
    let eps = sample_standard_normal(&mut Stream::Noise.rng(3), n, 3);
    let code = model.encode(&x, &eps).unwrap();
    let mean = code.z.mean_axis(Axis(0)).unwrap();
    let sigma = code.sigma.row(0);
    let norm = sigma.dot(&sigma).sqrt();
    for j in 0..3 {
        assert!((mean[j] - code.mu[[0, j]]).abs() <= 0.05 * norm);
    }
}

#[test]
fn encode_rejects_bad_shapes() {
    let model = Model::init(&small_arch(), 2, 3, 0).unwrap();
    assert!(model.encode(&Matrix::zeros((2, 3)), &Matrix::zeros((2, 3))).is_err());
    assert!(model.encode(&Matrix::zeros((2, 2)), &Matrix::zeros((2, 2))).is_err());
    assert!(model.classify(&Matrix::zeros((2, 4))).is_err());
}

#[test]
fn classifier_outputs() {
    let mut model = Model::init(&small_arch(), 2, 4, 4).unwrap();
    let z = sample_standard_normal(&mut Stream::Data.rng(4), 5, 3) * 3.0;
    for row in model.classify(&z).unwrap().rows() {
        assert!((row.sum() - 1.0).abs() < 1e-9);
        assert!(row.iter().all(|&p| p >= 0.0));
    }

    // continuity: a 1e-6-scale perturbation moves the output by O(1e-6)
    let base = model.classify(&z).unwrap();
    let nudged = model.classify(&(&z + 1e-6)).unwrap();
    let moved = (&base - &nudged).mapv(f64::abs).fold(0.0f64, |m, &v| m.max(v));
    assert!(moved < 1e-5, "moved {moved}");

    set_constant_logits(model.net_mut(Group::Classifier), &[0.0; 4]);
    for p in model.classify(&z).unwrap().iter() {
        assert!((p - 0.25).abs() < 1e-15);
    }
}

#[test]
fn task_discriminator_has_k_plus_one_outputs() {
    let mut model = Model::init(&small_arch(), 2, 10, 5).unwrap();
    let z = sample_standard_normal(&mut Stream::Data.rng(5), 6, 3);
    let out = model.discriminate_task(&z).unwrap();
    assert_eq!(out.ncols(), 11);
    for row in out.rows() {
        assert!((row.sum() - 1.0).abs() < 1e-9);
    }
    set_constant_logits(model.net_mut(Group::TaskDisc), &[0.0; 11]);
    for p in model.discriminate_task(&z).unwrap().iter() {
        assert!((p - 1.0 / 11.0).abs() < 1e-15);
    }
}

#[test]
fn binary_discriminator_logistic_head() {
    let mut model = Model::init(&small_arch(), 2, 2, 6).unwrap();
    let z = sample_standard_normal(&mut Stream::Data.rng(6), 3, 3);
    for (logit, expected) in [(0.0, 0.5), (20.0, 1.0 - 1e-7), (3f64.ln(), 0.75), (-30.0, 1e-7)] {
        set_constant_logits(model.net_mut(Group::PriorDisc), &[logit]);
        for p in model.discriminate_binary(&z).unwrap().iter() {
            assert!((p - expected).abs() < 1e-15, "logit {logit}: {p}");
        }
    }
}

#[test]
fn reparameterization_gradient_matches_finite_differences() {
    let model = Model::init(&small_arch(), 2, 3, 7).unwrap();
    let mut rng = Stream::Data.rng(7);
    let x = sample_standard_normal(&mut rng, 4, 2);
    let eps = sample_standard_normal(&mut rng, 4, 3);
    let w = sample_standard_normal(&mut rng, 4, 3);

    // loss = sum(w ⊙ z) exercises both the mean and the variance heads
    let mut tape = Tape::new();
    let xi = tape.input("x");
    let ei = tape.input("eps");
    let wi = tape.input("w");
    let nodes = model.build_latent(&mut tape, xi, ei, false);
    let prod = tape.mul(nodes.z, wi);
    let loss = tape.sum(prod);

    let eval = |params: &ParamSet| -> crate::Result<f64> {
        let mut b = Bindings::new();
        b.bind("x", &x).bind("eps", &eps).bind("w", &w);
        params.bind_into(&mut b);
        Ok(forward(&tape, &b)?.scalar(loss))
    };
    let params = model.net(Group::Encoder).params().clone();
    let mut b = Bindings::new();
    b.bind("x", &x).bind("eps", &eps).bind("w", &w);
    params.bind_into(&mut b);
    let vals = forward(&tape, &b).unwrap();
    let analytic = backward(&tape, &vals, loss).unwrap();
    let numeric = finite_diff_grad(eval, &params, DEFAULT_FD_STEP).unwrap();
    let err = max_relative_error(&analytic, &numeric);
    assert!(err < 1e-4, "max relative error {err:e}");
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let model = Model::init(&small_arch(), 4, 3, 8).unwrap();
    let mut buf = Vec::new();
    write_model(&model, &mut buf).unwrap();
    let back = read_model(buf.as_slice()).unwrap();
    assert_eq!(back, model);
    for (a, b) in model.nets().iter().zip(back.nets()) {
        for ((_, x), (_, y)) in a.params().iter().zip(b.params().iter()) {
            assert!(x.iter().zip(y.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_model(&model, &path).unwrap();
    assert_eq!(load_model(&path).unwrap(), model);
}

#[test]
fn checkpoint_rejects_bad_input() {
    assert!(read_model("tdda-checkpoint 9\nend\n".as_bytes()).is_err());
    assert!(read_model("hello\n".as_bytes()).is_err());
    let model = Model::init(&small_arch(), 2, 2, 0).unwrap();
    let mut buf = Vec::new();
    write_model(&model, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let truncated: String = text.lines().take(6).collect::<Vec<_>>().join("\n");
    assert!(read_model(truncated.as_bytes()).is_err());
}

proptest! {
    #[test]
    fn encode_is_affine_in_noise(seed in any::<u64>()) {
        let model = Model::init(&small_arch(), 2, 3, seed).unwrap();
        let mut rng = Stream::Noise.rng(seed);
        let x = sample_standard_normal(&mut rng, 3, 2);
        let e1 = sample_standard_normal(&mut rng, 3, 3);
        let e2 = sample_standard_normal(&mut rng, 3, 3);
        let a = model.encode(&x, &e1).unwrap();
        let b = model.encode(&x, &e2).unwrap();
        let lhs = &a.z - &b.z;
        let rhs = &a.sigma * &(&e1 - &e2);
        // Exact up to the rounding of the two `mu + sigma·eps` sums.
        let scale = a.z.iter().chain(b.z.iter()).fold(1.0f64, |m, v| m.max(v.abs()));
        for (l, r) in lhs.iter().zip(rhs.iter()) {
            prop_assert!((l - r).abs() <= 4.0 * f64::EPSILON * scale);
        }
    }

    #[test]
    fn checkpoint_values_round_trip(bits in proptest::collection::vec(any::<u64>(), 6)) {
        let mut model = Model::init(&small_arch(), 2, 2, 0).unwrap();
        let vals: Vec<f64> = bits
            .iter()
            .map(|&b| f64::from_bits(b))
            .map(|v| if v.is_finite() { v } else { 0.5 })
            .collect();
        for (dst, v) in model.net_mut(Group::Encoder).weight_mut(0).iter_mut().zip(&vals) {
            *dst = *v;
        }
        let mut buf = Vec::new();
        write_model(&model, &mut buf).unwrap();
        let back = read_model(buf.as_slice()).unwrap();
        let w0 = back.net(Group::Encoder).weight(0);
        for (a, b) in w0.iter().zip(&vals) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
