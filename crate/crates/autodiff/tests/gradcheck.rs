//! Central finite-difference checks for every differentiable op, each on 10
//! seeded random configurations, plus the second-order check for the
//! input-gradient-norm penalty (double backprop).
//!
//! The oracle rebuilds the graph from perturbed parameter values and never
//! consults the backward pass it is checking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use jamdet_autodiff::graph::{Graph, Var};
use jamdet_autodiff::nn::{self, BatchNorm1d, Conv1d, Conv1dTranspose, Dense, Dropout};
use jamdet_autodiff::Parameter;

const H: f64 = 1e-5;
const TOL1: f64 = 1e-5;
const TOL2: f64 = 1e-4;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-2)
}

/// Unit-scale random values kept away from zero so kinked ops (relu, clamp)
/// are never differentiated across the kink.
fn sample(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let mut v: f64 = rng.gen_range(-1.0..1.0);
            if v.abs() < 1e-3 {
                v += if v >= 0.0 { 1e-3 } else { -1e-3 };
            }
            v
        })
        .collect()
}

fn sample_positive(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.1..1.5)).collect()
}

/// Compare analytic parameter gradients of `build`'s scalar output against
/// central differences over every element of every parameter.
fn check_grads(
    name: &str,
    params: &[Parameter],
    build: &dyn Fn(&Graph) -> Var,
    tol: f64,
) {
    let g = Graph::new();
    let loss = build(&g);
    assert_eq!(loss.shape(), vec![1], "{name}: loss must be scalar");
    for p in params {
        p.zero_grad();
    }
    g.backward(&loss).unwrap();
    for p in params {
        let grad = p.grad();
        let base = p.value();
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus[i] += H;
            p.set_value(&plus);
            let f_plus = build(&Graph::new()).item();
            let mut minus = base.clone();
            minus[i] -= H;
            p.set_value(&minus);
            let f_minus = build(&Graph::new()).item();
            p.set_value(&base);
            let fd = (f_plus - f_minus) / (2.0 * H);
            let err = rel_err(grad[i], fd);
            assert!(
                err <= tol,
                "{name}: param {} elem {i}: analytic {} vs fd {} (rel {err:.3e})",
                p.name(),
                grad[i],
                fd
            );
        }
    }
}

#[test]
fn elementwise_arithmetic_ops() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Parameter::new("x", &[2, 3], sample(&mut rng, 6));
        let y = Parameter::new("y", &[2, 3], sample(&mut rng, 6));
        let params = [x.clone(), y.clone()];
        check_grads(
            "add/sub/mul/neg/scale/add_scalar",
            &params,
            &|g: &Graph| {
                let xv = g.param(&x);
                let yv = g.param(&y);
                let e = xv
                    .add(&yv)
                    .unwrap()
                    .mul(&xv.sub(&yv).unwrap())
                    .unwrap()
                    .scale(0.7)
                    .add_scalar(0.3)
                    .neg();
                e.mul(&e).unwrap().sum_all()
            },
            TOL1,
        );
    }
}

#[test]
fn smooth_unary_ops() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = Parameter::new("x", &[7], sample_positive(&mut rng, 7));
        let params = [x.clone()];
        check_grads(
            "exp/ln/tanh/sigmoid/sqrt0/recip0",
            &params,
            &|g: &Graph| {
                let xv = g.param(&x);
                let a = xv.ln().tanh();
                let b = xv.exp().sigmoid();
                let c = xv.sqrt0().recip0();
                a.add(&b).unwrap().mul(&c).unwrap().mean_all()
            },
            TOL1,
        );
    }
}

#[test]
fn kinked_ops_away_from_kinks() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let x = Parameter::new("x", &[3, 4], sample(&mut rng, 12));
        let params = [x.clone()];
        check_grads(
            "relu/leaky_relu/clamp",
            &params,
            &|g: &Graph| {
                let xv = g.param(&x);
                let r = xv.relu().unwrap();
                let l = xv.leaky_relu(0.2).unwrap();
                let c = xv.clamp(-0.8, 0.8);
                r.add(&l).unwrap().mul(&c).unwrap().sum_all()
            },
            TOL1,
        );
    }
}

#[test]
fn matmul_transpose_reshape() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let a = Parameter::new("a", &[3, 4], sample(&mut rng, 12));
        let b = Parameter::new("b", &[4, 2], sample(&mut rng, 8));
        let params = [a.clone(), b.clone()];
        check_grads(
            "matmul/transpose/reshape",
            &params,
            &|g: &Graph| {
                let av = g.param(&a);
                let bv = g.param(&b);
                let y = av.matmul(&bv).unwrap(); // (3,2)
                let z = y.t().unwrap().reshape(&[3, 2]).unwrap();
                z.mul(&z).unwrap().sum_all()
            },
            TOL1,
        );
    }
}

#[test]
fn reductions_and_broadcasts() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let a = Parameter::new("a", &[3, 4], sample(&mut rng, 12));
        let s = Parameter::new("s", &[1], sample(&mut rng, 1));
        let params = [a.clone(), s.clone()];
        check_grads(
            "sum_axis0/sum_axis1/broadcasts",
            &params,
            &|g: &Graph| {
                let av = g.param(&a);
                let sv = g.param(&s);
                let rows = av.sum_axis1().unwrap().broadcast_col(4).unwrap(); // (3,4)
                let cols = av.sum_axis0().unwrap().broadcast_row(3).unwrap(); // (3,4)
                let sc = sv.broadcast_scalar(&[3, 4]).unwrap();
                let y = rows.mul(&cols).unwrap().add(&sc).unwrap();
                y.mul(&y).unwrap().mean_all()
            },
            TOL1,
        );
    }
}

#[test]
fn concat_slice_embed() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let a = Parameter::new("a", &[2, 3], sample(&mut rng, 6));
        let b = Parameter::new("b", &[2, 2], sample(&mut rng, 4));
        let params = [a.clone(), b.clone()];
        check_grads(
            "concat_cols/slice_cols/embed_cols",
            &params,
            &|g: &Graph| {
                let av = g.param(&a);
                let bv = g.param(&b);
                let cat = av.concat_cols(&bv).unwrap(); // (2,5)
                let sl = cat.slice_cols(1, 3).unwrap(); // (2,3)
                let em = sl.embed_cols(2, 6).unwrap(); // (2,6)
                em.mul(&em).unwrap().sum_all()
            },
            TOL1,
        );
    }
}

#[test]
fn conv1d_matches_finite_differences() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
        let stride = 1 + (seed as usize % 2);
        let pad = seed as usize % 2;
        let conv = Conv1d::new("conv", 2, 3, 3, stride, pad, &mut rng);
        let x = Parameter::new("x", &[2, 2, 8], sample(&mut rng, 32));
        let mut params = conv.params();
        params.push(x.clone());
        check_grads(
            "conv1d",
            &params,
            &|g: &Graph| {
                let xv = g.param(&x);
                let y = conv.forward(&xv).unwrap();
                y.mul(&y).unwrap().mean_all()
            },
            TOL1,
        );
    }
}

#[test]
fn conv1d_transpose_matches_finite_differences() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let stride = 1 + (seed as usize % 2);
        let out_pad = if stride == 2 { seed as usize % 2 } else { 0 };
        let deconv = Conv1dTranspose::new("deconv", 3, 2, 3, stride, 1, out_pad, &mut rng);
        let x = Parameter::new("x", &[2, 3, 5], sample(&mut rng, 30));
        let mut params = deconv.params();
        params.push(x.clone());
        check_grads(
            "conv1d_transpose",
            &params,
            &|g: &Graph| {
                let xv = g.param(&x);
                let y = deconv.forward(&xv).unwrap();
                y.mul(&y).unwrap().mean_all()
            },
            TOL1,
        );
    }
}

#[test]
fn batchnorm_matches_finite_differences() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + seed);
        let x = Parameter::new("x", &[3, 2, 4], sample(&mut rng, 24));
        // fresh layer per evaluation: running-stat updates must not leak
        // between oracle evaluations
        let gamma = Parameter::new("bn.gamma", &[1, 2], sample_positive(&mut rng, 2));
        let beta = Parameter::new("bn.beta", &[1, 2], sample(&mut rng, 2));
        let params = [x.clone(), gamma.clone(), beta.clone()];
        check_grads(
            "batchnorm1d",
            &params,
            &|g: &Graph| {
                // bn's own affine stays at identity; the affine under test is
                // applied through the shared parameters so the oracle can
                // perturb them
                let mut bn = BatchNorm1d::new("bn", 2, 0.9, 1e-5);
                let xv = g.param(&x);
                let gv = g.param(&gamma);
                let bv = g.param(&beta);
                let y = bn.forward(&xv, true).unwrap(); // normalized only
                let rows: usize = 3 * 4;
                let y_mat = y.swap_axes12().unwrap().reshape(&[rows, 2]).unwrap();
                let y_aff = y_mat
                    .mul(&gv.broadcast_row(rows).unwrap())
                    .unwrap()
                    .add(&bv.broadcast_row(rows).unwrap())
                    .unwrap();
                y_aff.mul(&y_aff).unwrap().mean_all()
            },
            TOL1,
        );
    }
}

#[test]
fn dropout_with_frozen_mask() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let x = Parameter::new("x", &[4, 5], sample(&mut rng, 20));
        let params = [x.clone()];
        check_grads(
            "dropout",
            &params,
            &|g: &Graph| {
                // same mask for every oracle evaluation
                let mut drop = Dropout::new(0.4, ChaCha8Rng::seed_from_u64(42 + seed));
                let xv = g.param(&x);
                let y = drop.forward(&xv, true).unwrap();
                y.mul(&y).unwrap().sum_all()
            },
            TOL1,
        );
    }
}

#[test]
fn losses_match_finite_differences() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let x = Parameter::new("x", &[6], sample(&mut rng, 6));
        let probs: Vec<f64> = (0..6).map(|_| rng.gen_range(0.05..0.95)).collect();
        let p = Parameter::new("p", &[6], probs);
        let target = Parameter::new("t", &[6], (0..6).map(|i| (i % 2) as f64).collect());
        let params = [x.clone(), p.clone()];
        check_grads(
            "mse/bce",
            &params,
            &|g: &Graph| {
                let xv = g.param(&x);
                let pv = g.param(&p);
                let tv = g.param(&target);
                let a = xv.mse(&tv).unwrap();
                let b = pv.sigmoid().bce(&tv).unwrap();
                a.add(&b).unwrap()
            },
            TOL1,
        );
    }
}

#[test]
fn dense_layer_matches_finite_differences() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1100 + seed);
        let dense = Dense::new("fc", 4, 3, &mut rng);
        let x = Parameter::new("x", &[2, 4], sample(&mut rng, 8));
        let mut params = dense.params();
        params.push(x.clone());
        check_grads(
            "dense",
            &params,
            &|g: &Graph| {
                let xv = g.param(&x);
                let y = dense.forward(&xv).unwrap().tanh();
                y.mul(&y).unwrap().mean_all()
            },
            TOL1,
        );
    }
}

/// Second-order: parameter gradient of the unit-norm input-gradient penalty
/// of a two-layer tanh network, against central differences.
#[test]
fn penalty_second_order_two_layer_tanh() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1200 + seed);
        let l1 = Dense::new("l1", 4, 5, &mut rng);
        let l2 = Dense::new("l2", 5, 1, &mut rng);
        let x_data = sample(&mut rng, 3 * 4);
        let mut params = l1.params();
        params.extend(l2.params());
        check_grads(
            "penalty second order",
            &params,
            &|g: &Graph| {
                let x = g.input(&[3, 4], x_data.clone(), true);
                let h = l1.forward(&x).unwrap().tanh();
                let out = l2.forward(&h).unwrap(); // (3,1)
                let norms = nn::input_gradient_norms(&out, &x).unwrap();
                nn::unit_norm_penalty(&norms).unwrap()
            },
            TOL2,
        );
    }
}

/// Same double-backprop path through a small conv critic.
#[test]
fn penalty_second_order_conv_critic() {
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1300 + seed);
        let conv = Conv1d::new("conv", 1, 2, 3, 2, 1, &mut rng);
        let head = Dense::new("head", 2 * 4, 1, &mut rng);
        let x_data = sample(&mut rng, 2 * 8);
        let mut params = conv.params();
        params.extend(head.params());
        check_grads(
            "conv penalty second order",
            &params,
            &|g: &Graph| {
                let x = g.input(&[2, 1, 8], x_data.clone(), true);
                let h = conv.forward(&x).unwrap().tanh(); // (2,2,4)
                let flat = h.reshape(&[2, 8]).unwrap();
                let out = head.forward(&flat).unwrap();
                let norms = nn::input_gradient_norms(&out, &x).unwrap();
                nn::unit_norm_penalty(&norms).unwrap()
            },
            TOL2,
        );
    }
}
