use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use hccs_bench::gen_rows;
use hccs_core::calibration::default_params;
use hccs_core::kernel::{hccs_row_into, OutputMode, RowScratch};

fn rows(c: &mut Criterion) {
    let mut group = c.benchmark_group("hccs_row");
    for n in [32usize, 64, 128] {
        let tile = gen_rows(n, 1024, 42).unwrap();
        let params = default_params(n).unwrap();
        group.throughput(Throughput::Elements((n * tile.rows()) as u64));
        for mode in OutputMode::ALL {
            group.bench_with_input(BenchmarkId::new(mode.name(), n), &tile, |b, tile| {
                let mut scratch = RowScratch::with_capacity(n);
                let mut out = vec![0u16; n];
                b.iter(|| {
                    for r in 0..tile.rows() {
                        hccs_row_into(
                            black_box(tile.row(r)),
                            &params,
                            mode,
                            &mut scratch,
                            &mut out,
                        )
                        .unwrap();
                    }
                    black_box(&out);
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, rows);
criterion_main!(benches);
