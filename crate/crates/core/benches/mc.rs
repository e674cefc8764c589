use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use hsconv::kernels::{kernel_eval_with, KernelSpec};
use hsconv::mc::{Execution, McOptions};
use hsconv::potentials::ConvolutionSpec;
use hsconv::surface_mc::estimate_form_with;

const SAMPLES: u64 = 200_000;

fn modes() -> [(&'static str, McOptions); 2] {
    [
        ("parallel", McOptions { execution: Execution::Parallel, ..Default::default() }),
        ("sequential", McOptions { execution: Execution::Sequential, ..Default::default() }),
    ]
}

fn surface(c: &mut Criterion) {
    let spec = ConvolutionSpec::new(3, vec![1.5, 1.6, 1.7], 1.0).unwrap();
    let w = [1.0, 0.0, 0.0];
    let mut g = c.benchmark_group("surface_form");
    g.sample_size(10).throughput(Throughput::Elements(SAMPLES));
    for (name, opts) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, o| {
            b.iter(|| estimate_form_with(&spec, &w, 1.0, None, SAMPLES, 7, o).unwrap())
        });
    }
    g.finish();
}

fn kernel(c: &mut Criterion) {
    let k = KernelSpec::zero(3, 3).unwrap();
    let (w, v) = ([1.0, 0.0, 0.0], [0.0, 2.0, 0.0]);
    let n = SAMPLES / 4;
    let mut g = c.benchmark_group("kernel_zero");
    g.sample_size(10).throughput(Throughput::Elements(n));
    for (name, opts) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, o| {
            b.iter(|| kernel_eval_with(&k, &w, &v, n, 7, o).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, surface, kernel);
criterion_main!(benches);
