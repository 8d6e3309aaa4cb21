use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use yamabe_blowup::exec::{self, Backend};
use yamabe_blowup::reduced::{g_hat_mc, McOptions};
use yamabe_blowup::weighted::certify_step_lemma;
use yamabe_blowup::weyl::{canonical_weyl, HField};

fn backends() -> [(&'static str, Backend); 2] {
    [
        ("sequential", Backend::Sequential),
        ("parallel", Backend::Parallel),
    ]
}

fn step_lemma(c: &mut Criterion) {
    let mut g = c.benchmark_group("step_lemma_n25");
    g.sample_size(10);
    for (name, b) in backends() {
        g.bench_function(BenchmarkId::from_parameter(name), |bench| {
            exec::set_backend(b);
            bench.iter(|| {
                certify_step_lemma(25, black_box(&[(16, 128.0)]), 12.5, 1.0, 4, 1).unwrap()
            })
        });
    }
    g.finish();
}

fn ghat_mc(c: &mut Criterion) {
    let h = HField::new(-7.0407286864, canonical_weyl(25).unwrap());
    let opts = McOptions {
        samples: 512,
        ..Default::default()
    };
    let mut g = c.benchmark_group("ghat_mc_n25");
    g.sample_size(10);
    for (name, b) in backends() {
        g.bench_function(BenchmarkId::from_parameter(name), |bench| {
            exec::set_backend(b);
            bench.iter(|| g_hat_mc(&h, black_box(&[0.0; 25]), 1.0, &opts).unwrap())
        });
    }
    g.finish();
    exec::set_backend(Backend::Parallel);
}

criterion_group!(benches, step_lemma, ghat_mc);
criterion_main!(benches);
