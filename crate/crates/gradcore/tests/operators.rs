//! Operator checks against brute-force loop oracles and finite differences.

use gradcore::{grad_check, Activation, BnMode, GradError, Graph, ParamStore, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn conv_oracle(x: &Tensor, w: &Tensor, b: &[f64], stride: usize, pad: usize) -> Tensor {
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (k, _, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (wd + 2 * pad - kw) / stride + 1;
    let mut out = Tensor::zeros(&[n, k, ho, wo]);
    for s in 0..n {
        for o in 0..k {
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = b[o];
                    for ch in 0..c {
                        for a in 0..kh {
                            for bb in 0..kw {
                                let y = (i * stride + a) as isize - pad as isize;
                                let xx = (j * stride + bb) as isize - pad as isize;
                                if y >= 0 && xx >= 0 && (y as usize) < h && (xx as usize) < wd {
                                    acc += x.at4(s, ch, y as usize, xx as usize) * w.at4(o, ch, a, bb);
                                }
                            }
                        }
                    }
                    out.data_mut()[((s * k + o) * ho + i) * wo + j] = acc;
                }
            }
        }
    }
    out
}

fn run_conv(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Tensor {
    let mut g = Graph::new();
    let (xv, wv, bv) = (g.input(x.clone()), g.input(w.clone()), g.input(b.clone()));
    let y = g.conv2d(xv, wv, Some(bv), stride, pad).unwrap();
    g.value(y).clone()
}

#[test]
fn conv_identity_kernel() {
    let x = random(&[2, 1, 5, 4], 1);
    let w = Tensor::full(&[1, 1, 1, 1], 1.0);
    let y = run_conv(&x, &w, &Tensor::zeros(&[1]), 1, 0);
    assert_eq!(y, x);
}

#[test]
fn conv_all_ones_on_constant_field() {
    let c = 0.37;
    let x = Tensor::full(&[1, 1, 6, 6], c);
    let w = Tensor::full(&[1, 1, 3, 3], 1.0);
    let y = run_conv(&x, &w, &Tensor::zeros(&[1]), 1, 0);
    assert_eq!(y.shape(), &[1, 1, 4, 4]);
    for v in y.data() {
        assert!((v - 9.0 * c).abs() < 1e-14);
    }
}

#[test]
fn conv_matches_direct_summation() {
    let x = random(&[2, 3, 5, 5], 11);
    let w = random(&[4, 3, 3, 3], 12);
    let b = random(&[4], 13);
    for (stride, pad) in [(1, 0), (1, 1), (2, 1), (2, 0)] {
        let y = run_conv(&x, &w, &b, stride, pad);
        let o = conv_oracle(&x, &w, b.data(), stride, pad);
        assert_eq!(y.shape(), o.shape());
        for (a, e) in y.data().iter().zip(o.data()) {
            assert!(rel(*a, *e) < 1e-12 || (a - e).abs() < 1e-14, "{a} vs {e}");
        }
    }
}

#[test]
fn conv_large_random_shapes_match_oracle() {
    let x = random(&[4, 8, 16, 16], 21);
    let w = random(&[6, 8, 3, 3], 22);
    let b = random(&[6], 23);
    let y = run_conv(&x, &w, &b, 2, 1);
    let o = conv_oracle(&x, &w, b.data(), 2, 1);
    for (a, e) in y.data().iter().zip(o.data()) {
        assert!(rel(*a, *e) < 1e-10 || (a - e).abs() < 1e-13);
    }
}

#[test]
fn conv_rejects_bad_shapes() {
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros(&[1, 3, 4, 4]));
    let w = g.input(Tensor::zeros(&[2, 2, 3, 3]));
    let err = g.conv2d(x, w, None, 1, 0).unwrap_err();
    assert!(matches!(err, GradError::ShapeMismatch { op: "conv2d", .. }));
    assert!(err.to_string().contains("channels"));
    let big = g.input(Tensor::zeros(&[2, 3, 7, 7]));
    assert!(g.conv2d(x, big, None, 1, 0).is_err());
    assert!(matches!(Tensor::new(vec![1, 0, 3], vec![]), Err(GradError::ZeroExtent { .. })));
}

#[test]
fn dense_identity_null_and_oracle() {
    let x = random(&[3, 4], 31);
    let mut eye = Tensor::zeros(&[4, 4]);
    for i in 0..4 {
        eye.data_mut()[i * 4 + i] = 1.0;
    }
    let mut g = Graph::new();
    let (xv, ev, zb) = (g.input(x.clone()), g.input(eye), g.input(Tensor::zeros(&[4])));
    let y = g.dense(xv, ev, Some(zb)).unwrap();
    assert_eq!(g.value(y), &x);

    let bias = random(&[2], 32);
    let zw = g.input(Tensor::zeros(&[4, 2]));
    let bv = g.input(bias.clone());
    let y = g.dense(xv, zw, Some(bv)).unwrap();
    for row in g.value(y).data().chunks(2) {
        assert_eq!(row, bias.data());
    }

    let w = random(&[4, 2], 33);
    let wv = g.input(w.clone());
    let y = g.dense(xv, wv, Some(bv)).unwrap();
    for r in 0..3 {
        for c in 0..2 {
            let mut acc = bias.data()[c];
            for k in 0..4 {
                acc += x.data()[r * 4 + k] * w.data()[k * 2 + c];
            }
            assert!(rel(g.value(y).data()[r * 2 + c], acc) < 1e-12);
        }
    }
    let bad = g.input(Tensor::zeros(&[3, 2]));
    assert!(g.dense(xv, bad, None).is_err());
}

#[test]
fn batch_norm_zero_variance_channel() {
    let mut x = Tensor::zeros(&[3, 2, 2, 2]);
    for (i, v) in x.data_mut().iter_mut().enumerate() {
        *v = if (i / 4) % 2 == 0 { 5.0 } else { -1.5 };
    }
    let mut g = Graph::new();
    let xv = g.input(x);
    let gamma = g.input(Tensor::full(&[2], 1.0));
    let beta = g.input(Tensor::zeros(&[2]));
    let (y, stats) = g.batch_norm(xv, gamma, beta, BnMode::Train, 1e-5).unwrap();
    assert!(g.value(y).data().iter().all(|v| v.abs() < 1e-12));
    assert_eq!(stats.unwrap().var, vec![0.0, 0.0]);
}

#[test]
fn batch_norm_train_statistics() {
    let x = random(&[4, 3, 5, 5], 41);
    let eps = 1e-5;
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let gamma = g.input(Tensor::full(&[3], 1.0));
    let beta = g.input(Tensor::zeros(&[3]));
    let (y, _) = g.batch_norm(xv, gamma, beta, BnMode::Train, eps).unwrap();
    let yv = g.value(y);
    for ch in 0..3 {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for n in 0..4 {
            for i in 0..5 {
                for j in 0..5 {
                    xs.push(x.at4(n, ch, i, j));
                    ys.push(yv.at4(n, ch, i, j));
                }
            }
        }
        let m = ys.len() as f64;
        let mean_x = xs.iter().sum::<f64>() / m;
        let var_x = xs.iter().map(|v| (v - mean_x).powi(2)).sum::<f64>() / m;
        let mean_y = ys.iter().sum::<f64>() / m;
        let var_y = ys.iter().map(|v| (v - mean_y).powi(2)).sum::<f64>() / m;
        assert!(mean_y.abs() < 1e-10);
        let target = var_x / (var_x + eps);
        assert!((var_y - target).abs() < 1e-6, "{var_y} vs {target}");
    }
}

#[test]
fn batch_norm_eval_closed_form() {
    let x = random(&[2, 2, 3, 3], 51);
    let (gm, bt) = ([1.5, -0.5], [0.25, 2.0]);
    let (mu, var) = ([0.1, -0.3], [0.8, 2.5]);
    let eps = 1e-5;
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let gamma = g.input(Tensor::new(vec![2], gm.to_vec()).unwrap());
    let beta = g.input(Tensor::new(vec![2], bt.to_vec()).unwrap());
    let (y, stats) = g.batch_norm(xv, gamma, beta, BnMode::Eval { mean: &mu, var: &var }, eps).unwrap();
    assert!(stats.is_none());
    for n in 0..2 {
        for c in 0..2 {
            for i in 0..3 {
                for j in 0..3 {
                    let e = gm[c] * (x.at4(n, c, i, j) - mu[c]) / (var[c] + eps).sqrt() + bt[c];
                    assert!((g.value(y).at4(n, c, i, j) - e).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn global_avg_pool_cases() {
    let mut g = Graph::new();
    let c = g.input(Tensor::full(&[2, 3, 4, 5], -0.7));
    let y = g.global_avg_pool(c).unwrap();
    assert_eq!(g.shape(y), &[2, 3]);
    assert!(g.value(y).data().iter().all(|v| (v + 0.7).abs() < 1e-15));

    let one = random(&[2, 3, 1, 1], 61);
    let ov = g.input(one.clone());
    let y = g.global_avg_pool(ov).unwrap();
    assert_eq!(g.value(y).data(), one.data());

    let x = random(&[4, 8, 16, 16], 62);
    let xv = g.input(x.clone());
    let y = g.global_avg_pool(xv).unwrap();
    for n in 0..4 {
        for ch in 0..8 {
            let mut s = 0.0;
            for i in 0..16 {
                for j in 0..16 {
                    s += x.at4(n, ch, i, j);
                }
            }
            assert!(rel(g.value(y).data()[n * 8 + ch], s / 256.0) < 1e-12);
        }
    }
}

#[test]
fn activation_values() {
    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap());
    let r = g.relu(x);
    assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
    let s = g.sigmoid(x);
    assert_eq!(g.value(s).data()[1], 0.5);
    let t = g.tanh(x);
    assert_eq!(g.value(t).data()[1], 0.0);
    // far tails stay finite and inside (0,1) / [0,1]
    let big = g.input(Tensor::new(vec![2], vec![-800.0, 800.0]).unwrap());
    let sb = g.sigmoid(big);
    assert!(g.value(sb).is_finite());
    assert_eq!(g.value(sb).data()[0], 0.0f64.max(g.value(sb).data()[0]));
}

#[test]
fn relu_subgradient_at_zero_is_zero() {
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros(&[1]));
    let r = g.relu(x);
    let s = g.sum(r);
    g.backward(s, &mut ParamStore::new()).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[0.0]);
}

#[test]
fn softmax_cross_entropy_cases() {
    let mut g = Graph::new();
    let eq = g.input(Tensor::new(vec![1, 2], vec![0.3, 0.3]).unwrap());
    for lab in [[1.0, 0.0], [0.0, 1.0]] {
        let l = g.softmax_cross_entropy(eq, &Tensor::new(vec![1, 2], lab.to_vec()).unwrap()).unwrap();
        assert!((g.value(l).item() - std::f64::consts::LN_2).abs() < 1e-15);
    }
    let sat = g.input(Tensor::new(vec![1, 2], vec![100.0, 0.0]).unwrap());
    let l = g.softmax_cross_entropy(sat, &Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap()).unwrap();
    assert!(g.value(l).item() < 1e-10);

    let z = random(&[4, 2], 71);
    let labels = Tensor::new(vec![4, 2], vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
    let zv = g.input(z.clone());
    let l = g.softmax_cross_entropy(zv, &labels).unwrap();
    let mut naive = 0.0;
    for r in 0..4 {
        let e: Vec<f64> = z.data()[r * 2..r * 2 + 2].iter().map(|v| v.exp()).collect();
        let s: f64 = e.iter().sum();
        for m in 0..2 {
            naive -= labels.data()[r * 2 + m] * (e[m] / s).ln();
        }
    }
    assert!(rel(g.value(l).item(), naive) < 1e-10);
}

#[test]
fn softmax_cross_entropy_rejects_non_one_hot() {
    let mut g = Graph::new();
    let z = g.input(Tensor::zeros(&[2, 2]));
    let bad = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.5, 0.5]).unwrap();
    assert!(matches!(g.softmax_cross_entropy(z, &bad), Err(GradError::NotOneHot { row: 1 })));
    let z3 = g.input(Tensor::zeros(&[1, 1]));
    assert!(g.softmax_cross_entropy(z3, &Tensor::full(&[1, 1], 1.0)).is_err());
}

#[test]
fn backward_linear_functional_and_sigmoid_slope() {
    let mut g = Graph::new();
    let x = g.input(random(&[3, 4], 81));
    let s = g.sum(x);
    g.backward(s, &mut ParamStore::new()).unwrap();
    assert!(g.grad(x).unwrap().iter().all(|&v| v == 1.0));

    let mut g = Graph::new();
    let x = g.input(Tensor::zeros(&[1]));
    let s = g.sigmoid(x);
    g.backward(s, &mut ParamStore::new()).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[0.25]);
}

#[test]
fn backward_twice_is_rejected() {
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros(&[2]));
    let s = g.sum(x);
    let mut store = ParamStore::new();
    g.backward(s, &mut store).unwrap();
    assert!(matches!(g.backward(s, &mut store), Err(GradError::BackwardTwice)));
    let mut g = Graph::new();
    let x = g.input(Tensor::zeros(&[2]));
    assert!(matches!(g.backward(x, &mut store), Err(GradError::NotScalar { .. })));
}

#[test]
fn parameter_gradients_accumulate_until_zeroed() {
    let mut store = ParamStore::new();
    let id = store.add("w", Tensor::new(vec![2], vec![1.0, 2.0]).unwrap()).unwrap();
    let unused = store.add("unused", Tensor::full(&[3], 4.0)).unwrap();
    for expect in [1.0, 2.0] {
        let mut g = Graph::new();
        let w = g.param(&store, id);
        let s = g.sum(w);
        g.backward(s, &mut store).unwrap();
        assert_eq!(store.grad(id).data(), &[expect, expect]);
    }
    assert!(store.grad(unused).data().iter().all(|&v| v == 0.0));
    store.zero_grad();
    assert_eq!(store.grad(id).data(), &[0.0, 0.0]);
}

#[test]
fn gradients_sum_over_all_paths() {
    // y = sum(x + x·2) = 3·sum(x)
    let mut g = Graph::new();
    let x = g.input(random(&[5], 91));
    let x2 = g.scale(x, 2.0);
    let a = g.add(x, x2).unwrap();
    let s = g.sum(a);
    g.backward(s, &mut ParamStore::new()).unwrap();
    assert!(g.grad(x).unwrap().iter().all(|&v| (v - 3.0).abs() < 1e-15));
}

// ---- finite-difference checks -------------------------------------------

const STEP: f64 = 1e-4;

/// `Σ y ⊙ r` for a `[N, D]` tensor and a fixed random `r`, so every output
/// element carries a distinct upstream gradient.
fn probe(g: &mut Graph, y: Var, seed: u64) -> gradcore::Result<Var> {
    let (n, d) = (g.shape(y)[0], g.shape(y)[1]);
    let mut terms = Vec::with_capacity(n);
    for r in 0..n {
        let mut sel = Tensor::zeros(&[1, n]);
        sel.data_mut()[r] = 1.0;
        let s = g.input(sel);
        let row = g.dense(s, y, None)?;
        let w = g.input(random(&[d, 1], seed + r as u64));
        terms.push(g.dense(row, w, None)?);
    }
    let cat = g.concat(&terms)?;
    Ok(g.sum(cat))
}

/// Weighted reduction of a 4-D tensor: `Σ y ⊙ r` computed as
/// `sum(conv(y, r as a full-size kernel))` per channel.
fn probe4(g: &mut Graph, y: Var, seed: u64) -> gradcore::Result<Var> {
    let s = g.shape(y).to_vec();
    let kernel = random(&[1, s[1], s[2], s[3]], seed);
    let k = g.input(kernel);
    let c = g.conv2d(y, k, None, 1, 0)?;
    Ok(g.sum(c))
}

fn assert_small(report: gradcore::GradCheckReport, tol: f64) {
    assert!(report.max_rel_error < tol, "max rel err {} at {:?}", report.max_rel_error, report.worst);
}

#[test]
fn gradcheck_dense() {
    for seed in 0..10 {
        let inputs = [random(&[2, 3], seed), random(&[3, 4], seed + 100), random(&[4], seed + 200)];
        let r = grad_check(
            |g, v| {
                let y = g.dense(v[0], v[1], Some(v[2]))?;
                probe(g, y, 7)
            },
            &inputs,
            STEP,
        )
        .unwrap();
        assert_small(r, 1e-6);
    }
}

#[test]
fn gradcheck_conv2d() {
    for seed in 0..10 {
        let inputs = [random(&[1, 1, 4, 4], seed), random(&[2, 1, 3, 3], seed + 10), random(&[2], seed + 20)];
        let r = grad_check(
            |g, v| {
                let y = g.conv2d(v[0], v[1], Some(v[2]), 1, 1)?;
                probe4(g, y, 9)
            },
            &inputs,
            STEP,
        )
        .unwrap();
        assert_small(r, 1e-6);
        let inputs = [random(&[2, 3, 5, 5], seed), random(&[4, 3, 3, 3], seed + 10), random(&[4], seed + 20)];
        let r = grad_check(
            |g, v| {
                let y = g.conv2d(v[0], v[1], Some(v[2]), 2, 1)?;
                probe4(g, y, 9)
            },
            &inputs,
            STEP,
        )
        .unwrap();
        assert_small(r, 1e-6);
    }
}

#[test]
fn gradcheck_batch_norm_train() {
    for seed in 0..10 {
        let inputs = [random(&[4, 2, 2, 2], seed), random(&[2], seed + 1), random(&[2], seed + 2)];
        let r = grad_check(
            |g, v| {
                let (y, _) = g.batch_norm(v[0], v[1], v[2], BnMode::Train, 1e-5)?;
                probe4(g, y, 5)
            },
            &inputs,
            STEP,
        )
        .unwrap();
        assert_small(r, 1e-5);
    }
}

#[test]
fn gradcheck_batch_norm_eval() {
    let (mu, var) = ([0.2, -0.1], [0.5, 1.7]);
    for seed in 0..10 {
        let inputs = [random(&[3, 2, 2, 2], seed), random(&[2], seed + 1), random(&[2], seed + 2)];
        let r = grad_check(
            |g, v| {
                let (y, _) = g.batch_norm(v[0], v[1], v[2], BnMode::Eval { mean: &mu, var: &var }, 1e-5)?;
                probe4(g, y, 5)
            },
            &inputs,
            STEP,
        )
        .unwrap();
        assert_small(r, 1e-4);
    }
}

#[test]
fn gradcheck_pool_activations_and_modulate() {
    for seed in 0..10 {
        let inputs = [random(&[2, 3, 4, 4], seed), random(&[2, 1, 4, 4], seed + 50)];
        let r = grad_check(
            |g, v| {
                let a = g.sigmoid(v[1]);
                let w = g.modulate(v[0], a)?;
                let t = g.tanh(w);
                let p = g.global_avg_pool(t)?;
                let q = g.relu(p);
                probe(g, q, 3)
            },
            &inputs,
            STEP,
        )
        .unwrap();
        assert_small(r, 1e-4);
    }
}

#[test]
fn gradcheck_softmax_mix_concat_ce() {
    for seed in 0..10 {
        let inputs = [random(&[3, 2], seed), random(&[3, 4], seed + 1), random(&[3, 4], seed + 2)];
        let labels = Tensor::new(vec![3, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        let r = grad_check(
            |g, v| {
                let alpha = g.softmax(v[0])?;
                let m = g.mix(alpha, &[v[1], v[2]])?;
                let cat = g.concat(&[m, v[0]])?;
                let w = g.input(random(&[6, 2], 77));
                let z = g.dense(cat, w, None)?;
                let ce = g.softmax_cross_entropy(z, &labels)?;
                let extra = g.scale(ce, 0.5);
                g.add(ce, extra)
            },
            &inputs,
            STEP,
        )
        .unwrap();
        assert_small(r, 1e-4);
    }
}

#[test]
fn forward_is_bit_identical_across_runs() {
    let run = || {
        let mut g = Graph::new();
        let x = g.input(random(&[2, 3, 8, 8], 5));
        let w = g.input(random(&[4, 3, 3, 3], 6));
        let y = g.conv2d(x, w, None, 2, 1).unwrap();
        let gm = g.input(Tensor::full(&[4], 1.0));
        let bt = g.input(Tensor::zeros(&[4]));
        let (z, _) = g.batch_norm(y, gm, bt, BnMode::Train, 1e-5).unwrap();
        let p = g.global_avg_pool(z).unwrap();
        g.value(p).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(vals in prop::collection::vec(-50.0f64..50.0, 2..24)) {
        let m = 2;
        let n = vals.len() / m;
        let t = Tensor::new(vec![n, m], vals[..n * m].to_vec()).unwrap();
        let mut g = Graph::new();
        let x = g.input(t);
        let p = g.softmax(x).unwrap();
        for row in g.value(p).data().chunks(m) {
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sigmoid_symmetry(x in -40.0f64..40.0) {
        let s = gradcore::graph::apply_activation(Activation::Sigmoid, x)
            + gradcore::graph::apply_activation(Activation::Sigmoid, -x);
        prop_assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn outputs_finite_on_finite_inputs(seed in 0u64..1000) {
        let mut g = Graph::new();
        let x = g.input(random(&[2, 2, 3, 3], seed));
        let w = g.input(random(&[2, 2, 3, 3], seed + 1));
        let y = g.conv2d(x, w, None, 1, 1).unwrap();
        let gm = g.input(Tensor::full(&[2], 1.0));
        let bt = g.input(Tensor::zeros(&[2]));
        let (z, _) = g.batch_norm(y, gm, bt, BnMode::Train, 1e-5).unwrap();
        let a = g.sigmoid(z);
        prop_assert!(g.value(a).is_finite());
    }
}

#[test]
fn constants_receive_no_gradient() {
    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![1, 3], vec![1.0, -2.0, 0.5]).unwrap());
    let c = g.constant(Tensor::new(vec![3, 1], vec![4.0, 5.0, 6.0]).unwrap());
    let p = g.dense(x, c, None).unwrap();
    let s = g.sum(p);
    g.backward(s, &mut ParamStore::new()).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[4.0, 5.0, 6.0]);
    assert!(g.grad(c).is_none());
}

#[test]
fn activation_pattern_tracks_relu_units() {
    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![4], vec![1.0, -1.0, 0.0, 2.0]).unwrap());
    let y = g.relu(x);
    let z = g.sigmoid(y);
    g.relu(z);
    assert_eq!(g.activation_pattern(), vec![true, false, false, true, true, true, true, true]);
}

#[test]
fn perturbations_across_a_kink_are_skipped() {
    let f = |g: &mut Graph, v: &[Var]| {
        let y = g.relu(v[0]);
        Ok(g.sum(y))
    };
    let r = grad_check(f, &[Tensor::new(vec![3], vec![0.5, 5e-5, -0.5]).unwrap()], 1e-4).unwrap();
    assert_eq!((r.checked, r.skipped), (2, 1));
    assert!(r.max_rel_error < 1e-12);
}

#[test]
fn operator_suite_passes_over_ten_seeds() {
    let checks = gradcore::operator_suite(0..10, STEP).unwrap();
    assert_eq!(checks.len(), 90);
    for c in &checks {
        assert!(c.passed(), "{} seed {}: {:?}", c.name, c.seed, c.report);
        assert!(c.report.checked > 0);
    }
}
