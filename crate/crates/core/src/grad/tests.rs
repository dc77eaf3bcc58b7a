use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::Rng as RandRng;

use super::*;
use super::Rng;
use crate::error::Error;

fn bind_all<'a>(pairs: &[(&str, &'a Matrix)]) -> Bindings<'a> {
    let mut b = Bindings::new();
    for (k, v) in pairs {
        b.bind(*k, v);
    }
    b
}

#[test]
fn matmul_forward() {
    let mut t = Tape::new();
    let a = t.input("a");
    let b = t.input("b");
    let c = t.matmul(a, b);
    let (ma, mb) = (array![[1.0, 2.0], [3.0, 4.0]], array![[1.0], [1.0]]);
    let vals = forward(&t, &bind_all(&[("a", &ma), ("b", &mb)])).unwrap();
    assert_eq!(vals.get(c), &array![[3.0], [7.0]]);
}

#[test]
fn softmax_forward_closed_forms() {
    let mut t = Tape::new();
    let x = t.input("x");
    let y = t.softmax(x);
    let m = array![[0.0, 0.0], [2f64.ln(), 0.0]];
    let vals = forward(&t, &bind_all(&[("x", &m)])).unwrap();
    let out = vals.get(y);
    assert_eq!(out.row(0).to_vec(), vec![0.5, 0.5]);
    assert!((out[[1, 0]] - 2.0 / 3.0).abs() < 1e-15);
    assert!((out[[1, 1]] - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn forward_reports_shape_mismatch_with_node() {
    let mut t = Tape::new();
    let a = t.input("a");
    let b = t.input("b");
    let _ = t.matmul(a, b);
    let (ma, mb) = (Array2::zeros((2, 3)), Array2::zeros((2, 1)));
    match forward(&t, &bind_all(&[("a", &ma), ("b", &mb)])) {
        Err(Error::ShapeMismatch { node, op, .. }) => {
            assert_eq!(node, 2);
            assert_eq!(op, "matmul");
        }
        other => panic!("expected shape mismatch, got {other:?}"),
    }
}

#[test]
fn forward_reports_unbound_and_non_finite() {
    let mut t = Tape::new();
    let x = t.input("x");
    let e = t.exp(x);
    let _ = t.sum(e);
    assert!(matches!(
        forward(&t, &Bindings::new()),
        Err(Error::Unbound(name)) if name == "x"
    ));
    let big = array![[1000.0]];
    assert!(matches!(
        forward(&t, &bind_all(&[("x", &big)])),
        Err(Error::NonFinite { node: 1, op: "exp" })
    ));
}

#[test]
fn backward_of_linear_sum() {
    let mut t = Tape::new();
    let x = t.input("x");
    let w = t.param("w");
    let y = t.matmul(x, w);
    let loss = t.sum(y);
    let (mx, mw) = (array![[1.0, 2.0]], array![[1.0], [1.0]]);
    let vals = forward(&t, &bind_all(&[("x", &mx), ("w", &mw)])).unwrap();
    let g = backward(&t, &vals, loss).unwrap();
    // W·x with W = [[1,1]] written as x·Wᵀ; gradient has W's shape.
    assert_eq!(g.get("w").unwrap(), &array![[1.0], [2.0]]);
}

#[test]
fn softmax_cross_entropy_gradient_closed_form() {
    let mut t = Tape::new();
    let z = t.param("logits");
    let y = t.input("y");
    let lp = t.log_softmax(z);
    let prod = t.mul(y, lp);
    let rows = t.row_sum(prod);
    let m = t.mean(rows);
    let loss = t.scale(m, -1.0);
    let (mz, my) = (array![[0.0, 0.0]], array![[1.0, 0.0]]);
    let vals = forward(&t, &bind_all(&[("logits", &mz), ("y", &my)])).unwrap();
    assert!((vals.scalar(loss) - 2f64.ln()).abs() < 1e-15);
    let g = backward(&t, &vals, loss).unwrap();
    assert_eq!(g.get("logits").unwrap(), &array![[-0.5, 0.5]]);
}

#[test]
fn backward_errors() {
    let mut t = Tape::new();
    let x = t.param("x");
    let y = t.tanh(x);
    let m = array![[0.1, 0.2]];
    let vals = forward(&t, &bind_all(&[("x", &m)])).unwrap();
    assert!(matches!(
        backward(&t, &vals, y),
        Err(Error::NotScalar { rows: 1, cols: 2, .. })
    ));
    let s = t.sum(y);
    assert!(matches!(
        backward(&t, &vals, s),
        Err(Error::NotEvaluated { evaluated: 2, nodes: 3 })
    ));
}

#[test]
fn stop_gradient_blocks_flow() {
    let mut t = Tape::new();
    let x = t.param("x");
    let d = t.stop_gradient(x);
    let y = t.mul(x, d);
    let loss = t.sum(y);
    let m = array![[3.0]];
    let vals = forward(&t, &bind_all(&[("x", &m)])).unwrap();
    let g = backward(&t, &vals, loss).unwrap();
    assert_eq!(g.get("x").unwrap()[[0, 0]], 3.0);
}

#[test]
fn unreachable_param_gets_zero_gradient() {
    let mut t = Tape::new();
    let x = t.param("x");
    let _unused = t.param("u");
    let loss = t.sum(x);
    let (mx, mu) = (array![[1.0]], array![[5.0, 6.0]]);
    let vals = forward(&t, &bind_all(&[("x", &mx), ("u", &mu)])).unwrap();
    let g = backward(&t, &vals, loss).unwrap();
    assert_eq!(g.get("u").unwrap(), &Array2::<f64>::zeros((1, 2)));
}

#[test]
fn finite_diff_examples() {
    let mut p = ParamSet::new();
    p.insert("w", array![[3.0]]);
    let g = finite_diff_grad(|p| Ok(p.get("w").unwrap()[[0, 0]].powi(2)), &p, DEFAULT_FD_STEP)
        .unwrap();
    assert!((g.get("w").unwrap()[[0, 0]] - 6.0).abs() < 1e-8);

    p.insert("w", array![[0.0]]);
    let g =
        finite_diff_grad(|p| Ok(p.get("w").unwrap()[[0, 0]].abs()), &p, DEFAULT_FD_STEP).unwrap();
    assert_eq!(g.get("w").unwrap()[[0, 0]], 0.0);

    let err = finite_diff_grad(
        |p| {
            let w = p.get("w").unwrap()[[0, 0]];
            Ok(if w > 0.0 { f64::INFINITY } else { w })
        },
        &p,
        DEFAULT_FD_STEP,
    );
    assert!(matches!(err, Err(Error::NonFiniteProbe { .. })));
}

/// One primitive under test: builds `out = prim(a, b)`; the checked loss is
/// `sum(c ⊙ out)` for a random weighting `c`, so every output entry matters.
struct Case {
    name: &'static str,
    shape_a: fn(usize, usize) -> (usize, usize),
    shape_b: fn(usize, usize) -> (usize, usize),
    sample: fn(&mut Rng) -> f64,
    build: fn(&mut Tape, NodeId, NodeId) -> NodeId,
}

fn signed_away_from_zero(rng: &mut Rng) -> f64 {
    let m = rng.random_range(0.05..2.0);
    if rng.random_bool(0.5) {
        m
    } else {
        -m
    }
}

fn cases() -> Vec<Case> {
    let same = |r, c| (r, c);
    vec![
        Case {
            name: "matmul",
            shape_a: same,
            shape_b: |_, c| (c, 3),
            sample: |r| r.random_range(-2.0..2.0),
            build: |t, a, b| t.matmul(a, b),
        },
        Case {
            name: "add_bias",
            shape_a: same,
            shape_b: |_, c| (1, c),
            sample: |r| r.random_range(-2.0..2.0),
            build: |t, a, b| t.add_bias(a, b),
        },
        Case {
            name: "add",
            shape_a: same,
            shape_b: same,
            sample: |r| r.random_range(-2.0..2.0),
            build: |t, a, b| t.add(a, b),
        },
        Case {
            name: "sub",
            shape_a: same,
            shape_b: same,
            sample: |r| r.random_range(-2.0..2.0),
            build: |t, a, b| t.sub(a, b),
        },
        Case {
            name: "mul",
            shape_a: same,
            shape_b: same,
            sample: |r| r.random_range(-2.0..2.0),
            build: |t, a, b| t.mul(a, b),
        },
        Case {
            name: "affine",
            shape_a: same,
            shape_b: same,
            sample: |r| r.random_range(-2.0..2.0),
            build: |t, a, _| t.affine(a, -1.7, 0.3),
        },
        Case {
            name: "leaky_relu",
            shape_a: same,
            shape_b: same,
            sample: signed_away_from_zero,
            build: |t, a, _| t.leaky_relu(a, 0.2),
        },
        Case {
            name: "tanh",
            shape_a: same,
            shape_b: same,
            sample: |r| r.random_range(-2.0..2.0),
            build: |t, a, _| t.tanh(a),
        },
        Case {
            name: "exp",
            shape_a: same,
            shape_b: same,
            sample: |r| r.random_range(-2.0..2.0),
            build: |t, a, _| t.exp(a),
        },
        Case {
            name: "log",
            shape_a: same,
            shape_b: same,
            sample: |r| r.random_range(0.1..3.0),
            build: |t, a, _| t.log(a),
        },
        Case {
            name: "sigmoid",
            shape_a: same,
            shape_b: same,
            sample: |r| r.random_range(-5.0..5.0),
            build: |t, a, _| t.sigmoid(a),
        },
        Case {
            name: "softmax",
            shape_a: same,
            shape_b: same,
            sample: |r| r.random_range(-3.0..3.0),
            build: |t, a, _| t.softmax(a),
        },
        Case {
            name: "log_softmax",
            shape_a: same,
            shape_b: same,
            sample: |r| r.random_range(-3.0..3.0),
            build: |t, a, _| t.log_softmax(a),
        },
        Case {
            name: "slice_cols",
            shape_a: |r, c| (r, c + 2),
            shape_b: same,
            sample: |r| r.random_range(-2.0..2.0),
            build: |t, a, _| t.slice_cols(a, 1, 3),
        },
        Case {
            name: "row_l1_diff",
            shape_a: same,
            shape_b: same,
            sample: signed_away_from_zero,
            // |a| >= 0.05 > |0.01·b|, so a - 0.01·b never sits on the kink
            build: |t, a, b| {
                let shifted = t.affine(b, 0.01, 0.0);
                t.row_l1_diff(a, shifted)
            },
        },
        Case {
            name: "row_sum",
            shape_a: same,
            shape_b: same,
            sample: |r| r.random_range(-2.0..2.0),
            build: |t, a, _| t.row_sum(a),
        },
        Case {
            name: "mean",
            shape_a: same,
            shape_b: same,
            sample: |r| r.random_range(-2.0..2.0),
            build: |t, a, _| t.mean(a),
        },
        Case {
            name: "sum",
            shape_a: same,
            shape_b: same,
            sample: |r| r.random_range(-2.0..2.0),
            build: |t, a, _| t.sum(a),
        },
    ]
}

fn random_matrix(rng: &mut Rng, (r, c): (usize, usize), f: fn(&mut Rng) -> f64) -> Matrix {
    Matrix::from_shape_simple_fn((r, c), || f(rng))
}

#[test]
fn every_primitive_matches_finite_differences() {
    const CONFIGS: u64 = 100;
    for case in cases() {
        let mut worst: f64 = 0.0;
        for seed in 0..CONFIGS {
            let mut rng = Stream::Data.rng(seed);
            let rows = rng.random_range(1..5);
            let cols = rng.random_range(1..5);
            let mut params = ParamSet::new();
            params.insert("a", random_matrix(&mut rng, (case.shape_a)(rows, cols), case.sample));
            params.insert("b", random_matrix(&mut rng, (case.shape_b)(rows, cols), case.sample));

            let mut t = Tape::new();
            let a = t.param("a");
            let b = t.param("b");
            let out = (case.build)(&mut t, a, b);
            // The tape is append-only: evaluate once to learn the output
            // shape, then attach the weighting.
            let out_shape = {
                let mut bb = Bindings::new();
                params.bind_into(&mut bb);
                forward(&t, &bb).unwrap().get(out).dim()
            };
            let weight = random_matrix(&mut rng, out_shape, |r| r.random_range(-1.0..1.0));
            let c = t.input("c");
            let prod = t.mul(out, c);
            let loss = t.sum(prod);

            let eval = |p: &ParamSet| -> crate::Result<f64> {
                let mut bb = Bindings::new();
                p.bind_into(&mut bb);
                bb.bind("c", &weight);
                let v = forward(&t, &bb)?;
                Ok(v.scalar(loss))
            };
            let mut bb = Bindings::new();
            params.bind_into(&mut bb);
            bb.bind("c", &weight);
            let vals = forward(&t, &bb).unwrap();
            let analytic = backward(&t, &vals, loss).unwrap();
            let numeric = finite_diff_grad(eval, &params, DEFAULT_FD_STEP).unwrap();
            worst = worst.max(max_relative_error(&analytic, &numeric));
        }
        assert!(worst < 1e-4, "{}: max relative error {worst:e}", case.name);
    }
}

#[test]
fn log_softmax_is_floored_not_infinite() {
    let mut t = Tape::new();
    let x = t.param("x");
    let y = t.log_softmax(x);
    let loss = t.sum(y);
    let m = array![[0.0, -800.0]];
    let vals = forward(&t, &bind_all(&[("x", &m)])).unwrap();
    assert_eq!(vals.get(y)[[0, 1]], LOG_PROB_FLOOR);
    let g = backward(&t, &vals, loss).unwrap();
    assert!(g.get("x").unwrap().iter().all(|v| v.is_finite()));
}

#[test]
fn forward_backward_bitwise_deterministic() {
    let mut rng = Stream::Data.rng(7);
    let x = sample_standard_normal(&mut rng, 4, 3);
    let w = sample_standard_normal(&mut rng, 3, 5);
    let run = || {
        let mut t = Tape::new();
        let xi = t.input("x");
        let wi = t.param("w");
        let h = t.matmul(xi, wi);
        let h = t.leaky_relu(h, 0.2);
        let p = t.softmax(h);
        let l = t.log(p);
        let loss = t.mean(l);
        let vals = forward(&t, &bind_all(&[("x", &x), ("w", &w)])).unwrap();
        let g = backward(&t, &vals, loss).unwrap();
        (vals.to_vec(), g)
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn softmax_rows_positive_and_normalized(
        rows in 1usize..6,
        cols in 1usize..8,
        seed in any::<u64>(),
        scale in 0.1f64..50.0,
    ) {
        let mut rng = Stream::Data.rng(seed);
        let x = sample_standard_normal(&mut rng, rows, cols) * scale;
        let mut t = Tape::new();
        let xi = t.input("x");
        let y = t.softmax(xi);
        let vals = forward(&t, &bind_all(&[("x", &x)])).unwrap();
        for row in vals.get(y).rows() {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        // Strict positivity holds whenever no logit gap underflows exp.
        if scale < 10.0 {
            prop_assert!(vals.get(y).iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn adam_zero_gradient_is_fixed_point(
        seed in any::<u64>(),
        steps in 1usize..20,
    ) {
        let mut rng = Stream::Data.rng(seed);
        let mut params = ParamSet::new();
        params.insert("w", sample_standard_normal(&mut rng, 3, 2));
        let before = params.clone();
        let mut grads = Gradients::new();
        grads.insert("w", Matrix::zeros((3, 2)));
        let mut state = AdamState::new(AdamConfig::default());
        for _ in 0..steps {
            adam_update(&mut params, &grads, &mut state).unwrap();
        }
        prop_assert_eq!(&params, &before);
        prop_assert_eq!(state.steps(), steps as u64);
        prop_assert!(state.second_moment("w").unwrap().iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut params = ParamSet::new();
    params.insert("w", array![[1.0]]);
    let mut grads = Gradients::new();
    grads.insert("w", array![[0.5]]);
    let mut state = AdamState::new(AdamConfig::default());
    adam_update(&mut params, &grads, &mut state).unwrap();
    let delta = 1.0 - params.get("w").unwrap()[[0, 0]];
    assert!((delta - 2e-4).abs() < 1e-10, "delta {delta}");
    assert_eq!(state.steps(), 1);
}

#[test]
fn adam_descends_quadratic() {
    let mut params = ParamSet::new();
    params.insert("w", array![[1.0]]);
    let mut state = AdamState::new(AdamConfig {
        learning_rate: 0.01,
        ..AdamConfig::default()
    });
    let mut samples = vec![1.0];
    for step in 1..=100 {
        let w = params.get("w").unwrap()[[0, 0]];
        let mut grads = Gradients::new();
        grads.insert("w", array![[2.0 * w]]);
        adam_update(&mut params, &grads, &mut state).unwrap();
        if step % 10 == 0 {
            samples.push(params.get("w").unwrap()[[0, 0]].abs());
        }
    }
    assert!(samples.windows(2).all(|w| w[1] < w[0]), "{samples:?}");
}

#[test]
fn adam_rejects_shape_mismatch_without_mutating() {
    let mut params = ParamSet::new();
    params.insert("w", array![[1.0, 2.0]]);
    let mut grads = Gradients::new();
    grads.insert("w", array![[1.0]]);
    let mut state = AdamState::new(AdamConfig::default());
    assert!(matches!(
        adam_update(&mut params, &grads, &mut state),
        Err(Error::ParamShape { .. })
    ));
    assert_eq!(state.steps(), 0);
    assert!(matches!(
        adam_update(&mut params, &Gradients::new(), &mut state),
        Err(Error::MissingGradient(_))
    ));
}

#[test]
fn standard_normal_sampling() {
    let a = sample_standard_normal(&mut Stream::Noise.rng(42), 3, 4);
    let b = sample_standard_normal(&mut Stream::Noise.rng(42), 3, 4);
    assert_eq!(a, b);
    assert_ne!(a, sample_standard_normal(&mut Stream::Noise.rng(43), 3, 4));
    assert_eq!(sample_standard_normal(&mut Stream::Noise.rng(1), 0, 5).dim(), (0, 5));

    let draws = sample_standard_normal(&mut Stream::Noise.rng(2024), 100_000, 1);
    let mean = draws.mean().unwrap();
    let var = draws.mapv(|x| (x - mean).powi(2)).sum() / (draws.len() - 1) as f64;
    assert!(mean.abs() <= 0.02, "mean {mean}");
    assert!((0.97..=1.03).contains(&var), "var {var}");
}

#[test]
fn streams_are_independent() {
    let a = sample_standard_normal(&mut Stream::Noise.rng(5), 1, 8);
    let b = sample_standard_normal(&mut Stream::Batches.rng(5), 1, 8);
    assert_ne!(a, b);
}
