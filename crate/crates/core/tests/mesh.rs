use polynet_core::mesh::{adjacency, clean, normalize, primitives, Bvh, Point3, TriMesh, DEFAULT_WELD_TOLERANCE};
use polynet_core::tasks::ToyClass;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mesh(seed: u64) -> TriMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let class = ToyClass::ALL[rng.gen_range(0..3)];
    class.sample(&mut rng)
}

fn closest_on_segment(p: &Point3, a: &Point3, b: &Point3) -> Point3 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    a + ab * t
}

/// Projection onto the triangle plane if it lands inside, else the nearest edge point.
fn brute_distance(p: &Point3, mesh: &TriMesh) -> f64 {
    let v = mesh.vertices();
    mesh.faces()
        .iter()
        .map(|&[i, j, k]| {
            let (a, b, c) = (v[i], v[j], v[k]);
            let n = (b - a).cross(&(c - a));
            let mut best = f64::INFINITY;
            if n.norm() > 0.0 {
                let n = n.normalize();
                let q = p - n * (p - a).dot(&n);
                let inside = [(a, b), (b, c), (c, a)]
                    .iter()
                    .all(|(u, w)| (w - u).cross(&(q - u)).dot(&n) >= 0.0);
                if inside {
                    best = (p - q).norm();
                }
            }
            for (u, w) in [(a, b), (b, c), (c, a)] {
                best = best.min((p - closest_on_segment(p, &u, &w)).norm());
            }
            best
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn bvh_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let meshes = [primitives::icosphere(2), primitives::cylinder(0.4, 0.9, 16, 4), random_mesh(9)];
    for mesh in &meshes {
        let bvh = Bvh::new(mesh);
        for _ in 0..1000 {
            let q = Point3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let hit = bvh.closest_point(&q).unwrap();
            assert!((hit.distance - brute_distance(&q, mesh)).abs() < 1e-9);
            assert!(((hit.point - q).norm() - hit.distance).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn clean_is_idempotent(seed in 0u64..10_000) {
        let once = clean(&random_mesh(seed), DEFAULT_WELD_TOLERANCE).unwrap();
        let twice = clean(&once, DEFAULT_WELD_TOLERANCE).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn normalize_fills_the_unit_box(seed in 0u64..10_000, scale in 0.01f64..100.0, shift in -50.0f64..50.0) {
        let m = random_mesh(seed);
        let moved: Vec<Point3> = m.vertices().iter().map(|v| v * scale + Point3::repeat(shift)).collect();
        let n = normalize(&m.with_vertices(moved).unwrap()).unwrap();
        let (lo, hi) = n.bounding_box().unwrap();
        prop_assert!(lo.iter().chain(hi.iter()).all(|c| c.abs() <= 1.0));
        prop_assert!(((hi - lo).max() - 2.0).abs() < 1e-12);
        prop_assert!(((hi + lo).norm()) < 1e-12);
    }

    #[test]
    fn adjacency_is_symmetric_and_matches_edges(seed in 0u64..10_000) {
        let m = random_mesh(seed);
        let adj = adjacency(&m);
        let mut count = 0;
        for v in 0..adj.len() {
            for &u in adj.neighbors(v) {
                prop_assert!(u != v);
                prop_assert!(adj.neighbors(u).contains(&v));
                count += 1;
            }
        }
        prop_assert_eq!(count, 2 * m.edges().len());
    }
}
