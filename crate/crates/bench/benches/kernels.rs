use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use polynet_core::mesh::{adjacency, primitives, Bvh, Point3};
use polynet_core::polyfilter::{conv_backward, conv_forward, ConvLayerSpec, ConvVariant, Degree, Patches};
use polynet_core::polyshape::{poly_pool, subdivide_ptq, subdivide_sqrt3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mesh = primitives::icosphere(4);
    let patches = Patches::from_adjacency(&adjacency(&mesh));
    let mut group = c.benchmark_group("conv");
    for variant in [ConvVariant::Squeezed, ConvVariant::Unsqueezed] {
        for degree in [Degree::TWO, Degree::FOUR] {
            let spec = ConvLayerSpec::new(variant, 16, 16, degree);
            let params = spec.init_params(&mut rng);
            let x = Array2::from_shape_fn((mesh.vertex_count(), 16), |_| rng.gen_range(-1.0..1.0));
            let id = format!("{variant:?}/d{}", degree.get());
            group.bench_function(BenchmarkId::new("forward", &id), |b| {
                b.iter(|| conv_forward(&spec, &params, &x, &patches).unwrap())
            });
            let upstream = Array2::from_shape_fn((mesh.vertex_count(), 16), |_| rng.gen_range(-1.0..1.0));
            group.bench_function(BenchmarkId::new("backward", &id), |b| {
                b.iter(|| conv_backward(&spec, &params, &x, &patches, &upstream).unwrap())
            });
        }
    }
    group.finish();
}

fn subdivision(c: &mut Criterion) {
    let mesh = primitives::icosphere(4);
    c.bench_function("subdivide/ptq", |b| b.iter(|| subdivide_ptq(&mesh)));
    c.bench_function("subdivide/sqrt3", |b| b.iter(|| subdivide_sqrt3(&mesh)));
}

fn pooling(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (fine, map) = subdivide_sqrt3(&primitives::icosphere(4));
    let x = Array2::from_shape_fn((fine.vertex_count(), 64), |_| rng.gen_range(-1.0..1.0));
    c.bench_function("pool/sqrt3", |b| b.iter(|| poly_pool(&x, &map).unwrap()));
}

fn closest_point(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mesh = primitives::icosphere(5);
    let queries: Vec<Point3> = (0..1000)
        .map(|_| Point3::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)))
        .collect();
    c.bench_function("bvh/build", |b| b.iter(|| Bvh::new(&mesh)));
    let bvh = Bvh::new(&mesh);
    c.bench_function("bvh/closest_point_x1000", |b| {
        b.iter(|| queries.iter().map(|q| bvh.closest_point(q).unwrap().distance).sum::<f64>())
    });
}

criterion_group!(benches, conv, subdivision, pooling, closest_point);
criterion_main!(benches);
