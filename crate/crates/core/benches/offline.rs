//! Offline phase on one worker versus the default pool.
//!
//! Build with `--no-default-features` to time the sequential fallback, in
//! which case both groups run the same code path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use msfem::basis::{compute_offline, BasisOptions};
use msfem::coeffs::{make_case, CaseId, CaseParams};
use msfem::fem1d::time_grid;
use msfem::mesh::CoarseMesh;
use msfem::parallel::with_workers;
use msfem::transform::{CharacteristicTable, TransformKind};

fn offline(c: &mut Criterion) {
    let cs = make_case(&CaseParams::new(CaseId::Case2).k(30)).expect("case");
    let options = BasisOptions::default();
    // 0.2 time units at dt = 1e-3, on the refined offline grid
    let times = time_grid(1e-3 / options.refinement as f64, 200 * options.refinement);
    let mut group = c.benchmark_group("offline");
    group.sample_size(10);
    for cells in [16usize, 64] {
        let mesh = CoarseMesh::with_cells(cells).expect("mesh");
        let table =
            CharacteristicTable::build(TransformKind::Characteristic, &cs, &mesh, &times, 1e-9)
                .expect("characteristics");
        for (label, workers) in [("sequential", 1usize), ("parallel", 0)] {
            group.bench_with_input(BenchmarkId::new(label, cells), &table, |b, table| {
                b.iter(|| {
                    with_workers(workers, || {
                        compute_offline(&cs, table, 40, options).expect("basis")
                    })
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, offline);
criterion_main!(benches);
