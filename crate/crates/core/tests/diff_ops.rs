use std::sync::Arc;

use proptest::prelude::*;
use stgnn_core::diff::{grad_check_many, huber_elem, Tape, Tensor, Var};
use stgnn_core::rng::substream;
use stgnn_core::Error;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn mat(rows: usize, cols: usize, seed: u64) -> Tensor {
    use rand::Rng;
    let mut rng = substream(seed, "test-mat", &[rows as u64, cols as u64]);
    Tensor::new(
        &[rows, cols],
        (0..rows * cols).map(|_| rng.gen_range(-1.5..1.5)).collect(),
    )
    .unwrap()
}

fn check(xs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> stgnn_core::Result<Var>) {
    let r = grad_check_many(f, xs, H, 1e-6).unwrap();
    assert_eq!(r.nan_count, 0);
    assert!(
        r.max_rel_err < TOL,
        "max rel err {} at {:?}",
        r.max_rel_err,
        r.worst
    );
}

/// Reduces any tensor to a scalar with a non-uniform weighting so every
/// output coordinate carries a distinct sensitivity.
fn weighted_sum(tape: &mut Tape, y: Var) -> stgnn_core::Result<Var> {
    let (r, c) = tape.value(y).dims2();
    let w = Tensor::new(
        tape.value(y).shape(),
        (0..r * c)
            .map(|i| 0.3 + ((i * 7919) % 13) as f64 / 10.0)
            .collect(),
    )?;
    let w = tape.constant(w);
    let p = tape.mul(y, w)?;
    tape.sum(p)
}

#[test]
fn sum_gradient_is_all_ones() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::from_vec(vec![0.5, -2.0, 7.0]));
    let s = tape.sum(x).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
}

#[test]
fn sum_of_squares_gradient() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::from_vec(vec![1.0, 2.0]));
    let sq = tape.mul(x, x).unwrap();
    let s = tape.sum(sq).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[2.0, 4.0]);
}

#[test]
fn backward_twice_is_a_state_error() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::from_vec(vec![1.0]));
    let s = tape.sum(x).unwrap();
    tape.backward(s).unwrap();
    assert!(matches!(tape.backward(s), Err(Error::State(_))));
    tape.reset();
    let x = tape.param(Tensor::from_vec(vec![1.0]));
    let s = tape.sum(x).unwrap();
    tape.backward(s).unwrap();
}

#[test]
fn shape_error_names_both_shapes() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[2, 3]));
    let err = tape.matmul(a, b).unwrap_err();
    match err {
        Error::Shape { left, right, .. } => {
            assert_eq!(left, vec![2, 3]);
            assert_eq!(right, vec![2, 3]);
        }
        e => panic!("unexpected {e:?}"),
    }
}

#[test]
fn non_finite_values_are_numeric_errors() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::from_vec(vec![1e308]));
    assert!(matches!(tape.scale(a, 10.0), Err(Error::Numeric(_))));
}

#[test]
fn softmax_of_identical_scores_is_uniform() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(&[3, 1], vec![1.0, 1.0, 1.0]).unwrap());
    let groups: Arc<[usize]> = vec![0, 0, 0].into();
    let y = tape.softmax_over_groups(x, &groups, 1).unwrap();
    for v in tape.value(y).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn conv1d_same_preserves_length_96_with_kernel_9() {
    let mut tape = Tape::new();
    let x = tape.constant(mat(2 * 96, 3, 1).reshaped(&[192, 3]).unwrap());
    let k = tape.constant(Tensor::zeros(&[9, 3, 5]));
    let y = tape.conv1d_same(x, k, 96).unwrap();
    assert_eq!(tape.value(y).shape(), &[192, 5]);
}

#[test]
fn conv1d_rejects_even_kernels() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(&[8, 2]));
    let k = tape.constant(Tensor::zeros(&[4, 2, 2]));
    assert!(matches!(tape.conv1d_same(x, k, 8), Err(Error::Config(_))));
}

#[test]
fn huber_closed_forms_at_delta_50() {
    assert_eq!(huber_elem(10.0, 50.0), 50.0);
    assert_eq!(huber_elem(100.0, 50.0), 3750.0);
    assert_eq!(huber_elem(-100.0, 50.0), 3750.0);
    let mut tape = Tape::new();
    let p = tape.constant(Tensor::from_vec(vec![0.0; 4]));
    let l = tape.huber(p, &[10.0; 4], 50.0).unwrap();
    assert_eq!(tape.value(l).data()[0], 50.0);
    assert!(tape.huber(p, &[1.0; 4], 0.0).is_err());
}

#[test]
fn dropout_identity_when_off_or_zero_rate() {
    let mut rng = substream(0, "d", &[]);
    let mut tape = Tape::new();
    let x = tape.param(mat(4, 4, 3));
    assert_eq!(tape.dropout(x, 0.5, false, &mut rng).unwrap(), x);
    assert_eq!(tape.dropout(x, 0.0, true, &mut rng).unwrap(), x);
    assert!(tape.dropout(x, 1.0, true, &mut rng).is_err());
}

#[test]
fn dropout_uses_inverted_scaling() {
    let mut rng = substream(0, "d", &[]);
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::full(&[100, 100], 1.0));
    let y = tape.dropout(x, 0.25, true, &mut rng).unwrap();
    let vals = tape.value(y).data();
    assert!(vals
        .iter()
        .all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-15));
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    assert!((mean - 1.0).abs() < 0.05, "mean {mean}");
}

fn groups_from(seed: u64, n: usize, g: usize) -> Arc<[usize]> {
    // every group non-empty
    (0..n)
        .map(|i| {
            if i < g {
                i
            } else {
                (i * 31 + seed as usize) % g
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn matmul_add_bias_gradients(m in 1usize..5, k in 1usize..5, n in 1usize..5, seed in 0u64..1000) {
        check(&[mat(m, k, seed), mat(k, n, seed + 1), mat(1, n, seed + 2)], |t, v| {
            let y = t.matmul(v[0], v[1])?;
            let y = t.add_bias(y, v[2])?;
            weighted_sum(t, y)
        });
    }

    #[test]
    fn elementwise_gradients(r in 1usize..5, c in 1usize..5, seed in 0u64..1000) {
        check(&[mat(r, c, seed), mat(r, c, seed + 7)], |t, v| {
            let a = t.mul(v[0], v[1])?;
            let b = t.sub(a, v[1])?;
            let s = t.add(b, v[0])?;
            let s = t.scale(s, 1.7)?;
            weighted_sum(t, s)
        });
    }

    #[test]
    fn shape_op_gradients(r in 2usize..5, c in 2usize..5, seed in 0u64..1000) {
        let idx: Arc<[usize]> = (0..r + 2).map(|i| (i * 3 + seed as usize) % r).collect();
        check(&[mat(r, c, seed), mat(r, c, seed + 3)], move |t, v| {
            let cat0 = t.concat(&[v[0], v[1]], 0)?;
            let cat1 = t.concat(&[v[0], v[1]], 1)?;
            let sr = t.slice_rows(cat0, 1, r + 1)?;
            let sc = t.slice_cols(cat1, 1, c + 1)?;
            let tr = t.transpose(sc)?;
            let tr = t.transpose(tr)?;
            let g = t.gather_rows(sr, &idx)?;
            let sc2 = t.scatter_add_rows(g, &idx, r)?;
            let rr = t.repeat_rows(sc2, 3)?;
            let rc = t.repeat_cols(tr, 2)?;
            let rs = t.reshape(rc, &[r * c * 2])?;
            let a = weighted_sum(t, rr)?;
            let b = weighted_sum(t, rs)?;
            t.add(a, b)
        });
    }

    #[test]
    fn head_dot_and_softmax_gradients(e in 3usize..8, heads in 1usize..4, c in 1usize..4, seed in 0u64..1000) {
        let groups = groups_from(seed, e, 3);
        check(&[mat(e, heads * c, seed), mat(heads, c, seed + 1)], move |t, v| {
            let s = t.head_dot(v[0], v[1])?;
            let a = t.softmax_over_groups(s, &groups, 3)?;
            weighted_sum(t, a)
        });
    }

    #[test]
    fn activation_gradients(r in 1usize..5, c in 1usize..5, seed in 0u64..1000) {
        // keep inputs away from the kink at zero
        let mut x = mat(r, c, seed);
        for v in x.data_mut() {
            if v.abs() < 0.05 { *v += 0.1; }
        }
        check(&[x], |t, v| {
            let a = t.leaky_relu(v[0], 0.2)?;
            let b = t.relu(v[0])?;
            let s = t.add(a, b)?;
            weighted_sum(t, s)
        });
    }

    #[test]
    fn conv1d_gradients(nodes in 1usize..3, steps in 1usize..7, cin in 1usize..3, cout in 1usize..3, half in 0usize..3, seed in 0u64..1000) {
        let p = 2 * half + 1;
        let k = mat(p * cin, cout, seed + 5).reshaped(&[p, cin, cout]).unwrap();
        check(&[mat(nodes * steps, cin, seed), k], move |t, v| {
            let y = t.conv1d_same(v[0], v[1], steps)?;
            weighted_sum(t, y)
        });
    }

    #[test]
    fn mean_and_huber_gradients(r in 1usize..5, c in 1usize..5, seed in 0u64..1000) {
        let target: Vec<f64> = mat(r, c, seed + 11).data().iter().map(|v| v * 3.0).collect();
        check(&[mat(r, c, seed)], move |t, v| {
            let m0 = t.mean(v[0], Some(0))?;
            let m1 = t.mean(v[0], Some(1))?;
            let m = t.mean(v[0], None)?;
            let h = t.huber(v[0], &target, 0.7)?;
            let a = weighted_sum(t, m0)?;
            let b = weighted_sum(t, m1)?;
            let s = t.add(a, b)?;
            let s = t.add(s, m)?;
            t.add(s, h)
        });
    }

    #[test]
    fn softmax_groups_sum_to_one(e in 1usize..20, g in 1usize..5, cols in 1usize..4, seed in 0u64..1000) {
        let g = g.min(e);
        let groups = groups_from(seed, e, g);
        let mut tape = Tape::new();
        let x = tape.constant(mat(e, cols, seed).reshaped(&[e, cols]).unwrap());
        let y = tape.softmax_over_groups(x, &groups, g).unwrap();
        let vals = tape.value(y).data();
        for j in 0..cols {
            for grp in 0..g {
                let s: f64 = (0..e).filter(|&i| groups[i] == grp).map(|i| vals[i * cols + j]).sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }
        prop_assert!(vals.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn conv1d_same_keeps_length(steps in 1usize..40, half in 0usize..6) {
        let p = 2 * half + 1;
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[steps * 2, 3]));
        let k = tape.constant(Tensor::zeros(&[p, 3, 4]));
        let y = tape.conv1d_same(x, k, steps).unwrap();
        prop_assert_eq!(tape.value(y).shape(), &[steps * 2, 4]);
    }
}
