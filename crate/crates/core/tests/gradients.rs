mod common;

use common::{check_leaf_gradients, loss_gradient_errors, model_gradient_error, random_tensor, rng, GRAD_RTOL};
use graphkd::models::{GnnConfig, ModelSpec, Readout, StudentConfig};
use graphkd::tensor::{Tape, Tensor, Var};
use proptest::prelude::*;

/// Reduces a tensor-valued op to a scalar through a fixed random weighting.
fn weighted_sum(tape: &mut Tape<f64>, y: Var, seed: u64) -> Var {
    let s = tape.shape(y);
    let w = tape.constant(random_tensor(s.rows, s.cols, &mut rng(seed)));
    let p = tape.mul(y, w).unwrap();
    tape.sum(p).unwrap()
}

fn check_unary(name: &str, x: Tensor<f64>, op: impl Fn(&mut Tape<f64>, Var) -> Var) {
    let err = check_leaf_gradients(&[x], |t, v| {
        let y = op(t, v[0]);
        weighted_sum(t, y, 99)
    });
    assert!(err < GRAD_RTOL, "{name}: relative error {err:e}");
}

fn check_binary(name: &str, a: Tensor<f64>, b: Tensor<f64>, op: impl Fn(&mut Tape<f64>, Var, Var) -> Var) {
    let err = check_leaf_gradients(&[a, b], |t, v| {
        let y = op(t, v[0], v[1]);
        weighted_sum(t, y, 98)
    });
    assert!(err < GRAD_RTOL, "{name}: relative error {err:e}");
}

#[test]
fn tensor_ops_match_finite_differences() {
    let mut r = rng(1);
    let x = random_tensor(4, 3, &mut r);
    let y = random_tensor(4, 3, &mut r);
    let m = random_tensor(3, 5, &mut r);
    let row = random_tensor(1, 3, &mut r);
    let col = random_tensor(4, 1, &mut r);
    let positive = x.map(|v| 0.5 + v.abs());

    check_binary("matmul", x.clone(), m, |t, a, b| t.matmul(a, b).unwrap());
    check_binary("add", x.clone(), y.clone(), |t, a, b| t.add(a, b).unwrap());
    check_binary("sub", x.clone(), y.clone(), |t, a, b| t.sub(a, b).unwrap());
    check_binary("mul", x.clone(), y.clone(), |t, a, b| t.mul(a, b).unwrap());
    check_binary("add_row", x.clone(), row, |t, a, b| t.add_row(a, b).unwrap());
    check_binary("mul_col", x.clone(), col, |t, a, b| t.mul_col(a, b).unwrap());
    check_binary("concat rows", x.clone(), y.clone(), |t, a, b| {
        t.concat(&[a, b], 0).unwrap()
    });
    check_binary("concat cols", x.clone(), y.clone(), |t, a, b| {
        t.concat(&[a, b], 1).unwrap()
    });
    check_unary("scale", x.clone(), |t, a| t.scale(a, -2.5).unwrap());
    check_unary("relu", x.clone(), |t, a| t.relu(a).unwrap());
    check_unary("exp", x.clone(), |t, a| t.exp(a).unwrap());
    check_unary("log", positive, |t, a| t.log(a).unwrap());
    check_unary("sigmoid", x.clone(), |t, a| t.sigmoid(a).unwrap());
    for dim in [0, 1] {
        check_unary("softmax", x.clone(), |t, a| t.softmax(a, dim).unwrap());
        check_unary("log_softmax", x.clone(), |t, a| t.log_softmax(a, dim).unwrap());
        check_unary("l2_normalize", x.clone(), |t, a| t.l2_normalize(a, dim, 1e-8).unwrap());
        check_unary("sum_along", x.clone(), |t, a| t.sum_along(a, dim).unwrap());
    }
    check_unary("segment_sum", x.clone(), |t, a| {
        t.segment_sum(a, &[2, 0, 2, 1], 3).unwrap()
    });
    check_unary("gather_rows", x.clone(), |t, a| {
        t.gather_rows(a, &[3, 3, 0, 1, 3]).unwrap()
    });
    check_unary("transpose", x.clone(), |t, a| t.transpose(a).unwrap());
    check_unary("reshape", x.clone(), |t, a| t.reshape(a, 2, 6).unwrap());
    check_unary("frobenius_sq", x.clone(), |t, a| t.frobenius_sq(a).unwrap());
    check_unary("mean", x, |t, a| t.mean(a).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn distillation_losses_match_finite_differences(seed in any::<u64>()) {
        for (name, e) in loss_gradient_errors(seed) {
            prop_assert!(e < GRAD_RTOL, "{name}: relative error {e:e}");
        }
    }
}

#[test]
fn teacher_families_match_finite_differences() {
    for seed in 0..4 {
        let readout = if seed % 2 == 0 {
            Readout::Sum
        } else {
            Readout::Attention
        };
        for cfg in [GnnConfig::gin(2, 4), GnnConfig::gcn(2, 4)] {
            let spec = ModelSpec::teacher(GnnConfig { readout, ..cfg }, 3, 2);
            let other = ModelSpec::teacher(GnnConfig::gin(2, 4), 3, 2);
            let e = model_gradient_error(spec, other, seed);
            assert!(e < GRAD_RTOL, "{cfg:?}: relative error {e:e}");
        }
    }
}

#[test]
fn student_families_match_finite_differences() {
    for seed in 0..4 {
        let readout = if seed % 2 == 0 {
            Readout::Sum
        } else {
            Readout::Attention
        };
        for cfg in [
            StudentConfig::mlp(2, 4),
            StudentConfig::mlp(2, 4).with_lape(),
            StudentConfig::ga_mlp(2, 4).with_lape(),
        ] {
            let spec = ModelSpec::student(StudentConfig { readout, ..cfg }, 3, 4, 2);
            let teacher = ModelSpec::teacher(GnnConfig::gin(2, 4), 3, 2);
            let e = model_gradient_error(spec, teacher, seed);
            assert!(e < GRAD_RTOL, "{cfg:?}: relative error {e:e}");
        }
    }
}
