//! Parallel vs sequential timings for the data-parallel kernels: the
//! axis-mixing affine at paper-scale shapes, one full forward pass, and
//! batch evaluation.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use cubemix::data::{synth_dataset, SynthSpec};
use cubemix::layers::{init_params, predict, Activation, BlockSpec, CubeMLPConfig, HeadConfig};
use cubemix::tensor3::{Axis, Mat, Shape3, Tensor3};
use cubemix::trainer::{evaluate, evaluate_sequential};

fn paper_input() -> Tensor3<f32> {
    let shape = Shape3::new(100, 3, 128).unwrap();
    Tensor3::from_fn(shape, |l, m, d| {
        (((l * 31 + m * 17 + d * 7) % 97) as f32) * 0.02 - 1.0
    })
    .unwrap()
}

fn bench_axis_matmul(c: &mut Criterion) {
    let x = paper_input();
    let mut group = c.benchmark_group("axis_matmul");
    for (name, axis, out_dim) in [
        ("sequence_100_to_10", Axis::Sequence, 10usize),
        ("channel_128_to_32", Axis::Channel, 32usize),
    ] {
        let n_in = x.shape().extent(axis);
        let w = Mat::new(
            n_in,
            out_dim,
            (0..n_in * out_dim)
                .map(|v| ((v * 13) % 29) as f32 * 0.01 - 0.15)
                .collect(),
        )
        .unwrap();
        let b = vec![0.01f32; out_dim];
        group.bench_with_input(BenchmarkId::new("parallel", name), &x, |bench, x| {
            bench.iter(|| black_box(x.axis_matmul(&w, &b, axis).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("sequential", name), &x, |bench, x| {
            bench.iter(|| black_box(x.axis_matmul_sequential(&w, &b, axis).unwrap()))
        });
    }
    group.finish();
}

fn paper_config() -> CubeMLPConfig {
    CubeMLPConfig::build(
        Shape3::new(100, 3, 128).unwrap(),
        &[
            BlockSpec::dense((100, 3, 128)),
            BlockSpec::dense((10, 3, 32)),
            BlockSpec::dense((10, 3, 3)),
        ],
        Activation::Gelu,
        HeadConfig::default(),
    )
    .unwrap()
}

fn bench_model_forward(c: &mut Criterion) {
    let cfg = paper_config();
    let params = init_params::<f32>(&cfg, 0);
    let x = paper_input();
    c.bench_function("model_forward/paper_config", |bench| {
        bench.iter(|| black_box(predict(&x, &cfg, &params).unwrap()))
    });
}

fn bench_batch_evaluation(c: &mut Criterion) {
    let shape = Shape3::new(32, 3, 16).unwrap();
    let cfg = CubeMLPConfig::build(
        shape,
        &[BlockSpec::dense((8, 3, 8))],
        Activation::Gelu,
        HeadConfig::default(),
    )
    .unwrap();
    let params = init_params::<f32>(&cfg, 0);
    let data = synth_dataset::<f32>(
        0,
        &SynthSpec {
            n_samples: 64,
            shape,
            noise_sigma: 0.0,
        },
    )
    .unwrap();
    let mut group = c.benchmark_group("evaluate_64_samples");
    group.bench_function("parallel", |bench| {
        bench.iter(|| black_box(evaluate(&cfg, &params, &data.train).unwrap()))
    });
    group.bench_function("sequential", |bench| {
        bench.iter(|| black_box(evaluate_sequential(&cfg, &params, &data.train).unwrap()))
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_axis_matmul,
    bench_model_forward,
    bench_batch_evaluation
);
criterion_main!(benches);
