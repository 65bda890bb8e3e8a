//! Property tests for the tensor kernel: identity transforms, linearity,
//! cross-axis commutation, and layout round-trips.

use cubemix::tensor3::{Axis, Mat, Shape3, Tensor3};
use proptest::prelude::*;

fn axis_strategy() -> impl Strategy<Value = Axis> {
    prop_oneof![
        Just(Axis::Sequence),
        Just(Axis::Modality),
        Just(Axis::Channel)
    ]
}

fn shape_strategy() -> impl Strategy<Value = Shape3> {
    (1usize..=6, 1usize..=4, 1usize..=6)
        .prop_map(|(l, m, d)| Shape3::new(l, m, d).unwrap())
}

fn tensor_strategy(shape: Shape3) -> impl Strategy<Value = Tensor3<f64>> {
    proptest::collection::vec(-10.0f64..10.0, shape.len())
        .prop_map(move |data| Tensor3::from_vec(shape, data).unwrap())
}

fn matrix_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Mat<f64>> {
    proptest::collection::vec(-2.0f64..2.0, rows * cols)
        .prop_map(move |data| Mat::new(rows, cols, data).unwrap())
}

proptest! {
    #[test]
    fn identity_affine_is_identity(
        (shape, axis) in (shape_strategy(), axis_strategy()),
        seed in 0u64..1000
    ) {
        let x = Tensor3::from_fn(shape, |l, m, d| {
            ((l * 7 + m * 13 + d * 29 + seed as usize) % 37) as f64 * 0.11 - 2.0
        }).unwrap();
        let n = shape.extent(axis);
        let w = Mat::<f64>::identity(n).unwrap();
        let y = x.axis_matmul(&w, &vec![0.0; n], axis).unwrap();
        prop_assert_eq!(y, x);
    }

    #[test]
    fn affine_is_linear(
        shape in shape_strategy(),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
        seed in 0u64..1000
    ) {
        for axis in Axis::ALL {
            let n_in = shape.extent(axis);
            let n_out = (seed as usize % 4) + 1;
            let w_data: Vec<f64> = (0..n_in * n_out)
                .map(|i| ((i * 31 + seed as usize) % 19) as f64 * 0.13 - 1.1)
                .collect();
            let w = Mat::new(n_in, n_out, w_data).unwrap();
            let b = vec![0.0; n_out];
            let x = Tensor3::from_fn(shape, |l, m, d| {
                ((l * 3 + m * 5 + d * 7 + seed as usize) % 23) as f64 * 0.21 - 2.0
            }).unwrap();
            let y = Tensor3::from_fn(shape, |l, m, d| {
                ((l * 11 + m * 2 + d * 17 + seed as usize) % 29) as f64 * 0.17 - 2.2
            }).unwrap();

            let combined = x.map(|v| alpha * v).unwrap()
                .add(&y.map(|v| beta * v).unwrap()).unwrap();
            let lhs = combined.axis_matmul(&w, &b, axis).unwrap();
            let rhs_x = x.axis_matmul(&w, &b, axis).unwrap();
            let rhs_y = y.axis_matmul(&w, &b, axis).unwrap();
            let rhs = rhs_x.map(|v| alpha * v).unwrap()
                .add(&rhs_y.map(|v| beta * v).unwrap()).unwrap();
            for (a, r) in lhs.data().iter().zip(rhs.data()) {
                prop_assert!((a - r).abs() < 1e-12, "linearity broke on {:?}", axis);
            }
        }
    }

    #[test]
    fn distinct_axis_mixing_commutes(
        shape in shape_strategy(),
        w1 in matrix_strategy(6, 6),
        w2 in matrix_strategy(6, 6),
        data_seed in 0u64..100
    ) {
        // Zero-bias affine maps along different axes commute.
        let axes = [(Axis::Sequence, Axis::Modality),
                    (Axis::Sequence, Axis::Channel),
                    (Axis::Modality, Axis::Channel)];
        for (a1, a2) in axes {
            let n1 = shape.extent(a1);
            let n2 = shape.extent(a2);
            let w_a = Mat::new(n1, n1, w1.data()[..n1 * n1].to_vec()).unwrap();
            let w_b = Mat::new(n2, n2, w2.data()[..n2 * n2].to_vec()).unwrap();
            let x = Tensor3::from_fn(shape, |l, m, d| {
                ((l * 19 + m * 23 + d * 31 + data_seed as usize) % 41) as f64 * 0.09 - 1.8
            }).unwrap();
            let b1 = vec![0.0; n1];
            let b2 = vec![0.0; n2];
            let path1 = x.axis_matmul(&w_a, &b1, a1).unwrap()
                .axis_matmul(&w_b, &b2, a2).unwrap();
            let path2 = x.axis_matmul(&w_b, &b2, a2).unwrap()
                .axis_matmul(&w_a, &b1, a1).unwrap();
            for (p, q) in path1.data().iter().zip(path2.data()) {
                prop_assert!((p - q).abs() < 1e-10, "{:?} then {:?}", a1, a2);
            }
        }
    }

    #[test]
    fn flatten_round_trips_slice_indices(
        l in 1usize..5, m in 1usize..4, d in 1usize..5,
        seed in 0u64..1000
    ) {
        let slices: Vec<Mat<f64>> = (0..m)
            .map(|mi| {
                Mat::new(l, d, (0..l * d)
                    .map(|i| (i * 7 + mi * 101 + seed as usize) as f64 * 0.31)
                    .collect()).unwrap()
            })
            .collect();
        let t = Tensor3::from_slices(&slices).unwrap();
        let flat = t.flatten();
        for li in 0..l {
            for mi in 0..m {
                for di in 0..d {
                    prop_assert_eq!(flat[(li * m + mi) * d + di], slices[mi].get(li, di));
                }
            }
        }
    }

    #[test]
    fn parallel_and_sequential_paths_agree(
        shape in shape_strategy(),
        axis in axis_strategy(),
        out_dim in 1usize..5,
        seed in 0u64..500
    ) {
        let x = Tensor3::from_fn(shape, |l, m, d| {
            ((l * 13 + m * 7 + d * 3 + seed as usize) % 31) as f64 * 0.23 - 3.0
        }).unwrap();
        let n_in = shape.extent(axis);
        let w = Mat::new(n_in, out_dim, (0..n_in * out_dim)
            .map(|i| ((i + seed as usize) % 17) as f64 * 0.19 - 1.4)
            .collect()).unwrap();
        let b: Vec<f64> = (0..out_dim).map(|i| i as f64 * 0.01).collect();
        let fast = x.axis_matmul(&w, &b, axis).unwrap();
        let slow = x.axis_matmul_sequential(&w, &b, axis).unwrap();
        prop_assert_eq!(fast, slow);
    }
}
