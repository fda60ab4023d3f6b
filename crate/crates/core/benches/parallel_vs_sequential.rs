//! Hot kernels on rayon's default pool against a one-thread pool. Build with
//! `--no-default-features` to time the sequential fallback itself.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use meshrecon::grid::Grid;
use meshrecon::metrics::chamfer_gt_to_pred;
use meshrecon::par::is_parallel;
use meshrecon::template::body_template;
use meshrecon::texture::{complete_texture, CompletionConfig, UVSymmetry};
use meshrecon::{rasterize, subdivide_1to4, WeakPerspectiveCamera};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    if is_parallel() {
        vec![("1-thread", one), ("rayon", all)]
    } else {
        vec![("sequential", one)]
    }
}

fn kernels(c: &mut Criterion) {
    let tpl = body_template();
    let fine = subdivide_1to4(&tpl.mesh).unwrap();
    let cam = WeakPerspectiveCamera::fit_to_mesh(&fine, [512, 512], 0.8).unwrap();
    let sym = UVSymmetry::from_mesh(&tpl.mesh, &tpl.symmetry, 256, 256).unwrap();
    let tex = Grid::from_fn(256, 256, |x, y| [x as f64 / 255.0, y as f64 / 255.0, 0.5]);
    let mask = Grid::from_fn(256, 256, |x, y| (x * 7 + y * 13) % 10 >= 6);
    let cfg = CompletionConfig::default();

    let mut group = c.benchmark_group("kernels");
    group.sample_size(20);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("rasterize_27554v_512px", name), |b| {
            pool.install(|| b.iter(|| rasterize(&cam, &fine)))
        });
        group.bench_function(BenchmarkId::new("complete_texture_256px", name), |b| {
            pool.install(|| b.iter(|| complete_texture(&tex, &mask, Some(&sym), &cfg).unwrap()))
        });
        group.bench_function(BenchmarkId::new("chamfer_27554v", name), |b| {
            pool.install(|| b.iter(|| chamfer_gt_to_pred(&fine, &tpl.mesh, None).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
