//! Acceptance criteria 1-12. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. Optional arguments select criteria by number.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::Array2;
use polynet_core::mesh::{adjacency, primitives, Point3, TriMesh};
use polynet_core::net::gradcheck::toy_network_check;
use polynet_core::net::{LrSchedule, TrainConfig};
use polynet_core::polyfilter::gradcheck::{check_conv, DEFAULT_TOLERANCE};
use polynet_core::polyfilter::{
    conditional, conv_forward, ConvLayerSpec, ConvVariant, Degree, Patches, PolyFilter, DEFAULT_RIDGE,
};
use polynet_core::polyshape::{poly_pool, subdivide_ptq, subdivide_sqrt3, Scheme};
use polynet_core::tasks::{
    average_precision, descriptors, evaluate, generate_digit_graphs, generate_toy_dataset, ingest_mesh_dataset,
    retrieve, train, Dataset, IngestOptions, ToyClass,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

const DEGREES: [Degree; 2] = [Degree::TWO, Degree::FOUR];
const VARIANTS: [ConvVariant; 2] = [ConvVariant::Squeezed, ConvVariant::Unsqueezed];

fn random_filter(degree: Degree, rng: &mut ChaCha8Rng) -> PolyFilter {
    let k = degree.basis().param_count();
    let params: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    PolyFilter::from_params(degree, &params).expect("valid parameter count")
}

/// `Xᵀ (B Bᵀ + εI) X` straight from the basis vector and B.
fn quadratic_form(filter: &PolyFilter, x: f64, y: f64) -> f64 {
    let b = filter.b_matrix();
    let m = b.len();
    let basis = filter.basis().eval(x, y);
    let mut total = 0.0;
    for p in 0..m {
        for q in 0..m {
            let mut a: f64 = (0..m).map(|k| b[p][k] * b[q][k]).sum();
            if p == q {
                a += DEFAULT_RIDGE;
            }
            total += basis[p] * a * basis[q];
        }
    }
    total
}

/// Five-point Gauss-Legendre on [-1,1], exact through degree 9.
fn gauss_legendre(f: impl Fn(f64) -> f64) -> f64 {
    let a = (5.0 - 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let b = (5.0 + 2.0 * (10.0f64 / 7.0).sqrt()).sqrt() / 3.0;
    let wa = (322.0 + 13.0 * 70.0f64.sqrt()) / 900.0;
    let wb = (322.0 - 13.0 * 70.0f64.sqrt()) / 900.0;
    128.0 / 225.0 * f(0.0) + wa * (f(a) + f(-a)) + wb * (f(b) + f(-b))
}

fn c1_parameter_counts() -> Outcome {
    let two = Degree::TWO.basis().param_count();
    let four = Degree::FOUR.basis().param_count();
    let spec2 = ConvLayerSpec::new(ConvVariant::Unsqueezed, 1, 1, Degree::TWO).param_count();
    let spec4 = ConvLayerSpec::new(ConvVariant::Unsqueezed, 1, 1, Degree::FOUR).param_count();
    check(
        (two, four, spec2, spec4) == (6, 21, 6, 21),
        format!("d=2: {two} coefficients, d=4: {four}"),
    )
}

fn c2_pdf_validity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut min_density = f64::INFINITY;
    let mut worst_integral = 0.0f64;
    for degree in DEGREES {
        for _ in 0..1000 {
            let f = random_filter(degree, &mut rng);
            for i in 0..=100 {
                for j in 0..=100 {
                    let (x, y) = (-1.0 + 0.02 * i as f64, -1.0 + 0.02 * j as f64);
                    min_density = min_density.min(f.density(x, y));
                }
            }
            for k in 0..11 {
                let x = -1.0 + 0.2 * k as f64;
                let total = gauss_legendre(|y| conditional(&f, x, y));
                worst_integral = worst_integral.max((total - 1.0).abs());
            }
        }
    }
    check(
        min_density > 0.0 && worst_integral <= 1e-8,
        format!("min density {min_density:.3e}, max |∫f(y|x)dy - 1| {worst_integral:.3e}"),
    )
}

fn c3_marginal() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for degree in DEGREES {
        for _ in 0..50 {
            let f = random_filter(degree, &mut rng);
            for _ in 0..50 {
                let x = rng.gen_range(-1.0..=1.0);
                let numeric = gauss_legendre(|y| quadratic_form(&f, x, y));
                worst = worst.max(((f.marginal_density(x) - numeric) / numeric).abs());
            }
        }
    }
    check(worst < 1e-8, format!("max relative error {worst:.3e}"))
}

fn random_graph(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut lists: Vec<Vec<usize>> = (0..n).map(|v| vec![v]).collect();
    for _ in 0..2 * n {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b && !lists[a].contains(&b) {
            lists[a].push(b);
            lists[b].push(a);
        }
    }
    lists
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn c4_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut perm, mut dup) = (0.0f64, 0.0f64);
    for variant in VARIANTS {
        for degree in DEGREES {
            for _ in 0..25 {
                let spec = ConvLayerSpec::new(variant, 3, 4, degree);
                let params = spec.init_params(&mut rng);
                let lists = random_graph(30, &mut rng);
                let x = Array2::from_shape_fn((30, 3), |_| rng.gen_range(-1.0..=1.0));
                let run = |l: &[Vec<usize>]| conv_forward(&spec, &params, &x, &Patches::from_lists(l).unwrap()).unwrap();
                let base = run(&lists);
                let mut shuffled = lists.clone();
                shuffled.iter_mut().for_each(|l| l.shuffle(&mut rng));
                perm = perm.max(max_abs_diff(&base, &run(&shuffled)));
                let k = rng.gen_range(2..6);
                let repeated: Vec<Vec<usize>> = lists.iter().map(|l| l.repeat(k)).collect();
                dup = dup.max(max_abs_diff(&base, &run(&repeated)));
            }
        }
    }
    let mesh = primitives::icosphere(2);
    let spec = ConvLayerSpec::new(ConvVariant::Squeezed, 3, 4, Degree::FOUR);
    let params = spec.init_params(&mut rng);
    let x = Array2::from_shape_fn((mesh.vertex_count(), 3), |_| rng.gen_range(-1.0..=1.0));
    let before = conv_forward(&spec, &params, &x, &Patches::from_adjacency(&adjacency(&mesh))).unwrap();
    let moved: Vec<Point3> = mesh
        .vertices()
        .iter()
        .map(|p| p + Point3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)))
        .collect();
    let moved = mesh.with_vertices(moved).unwrap();
    let after = conv_forward(&spec, &params, &x, &Patches::from_adjacency(&adjacency(&moved))).unwrap();
    let bitwise = before.iter().zip(&after).all(|(a, b)| a.to_bits() == b.to_bits());
    check(
        perm <= 1e-12 && dup <= 1e-12 && bitwise,
        format!("permutation {perm:.1e}, duplication {dup:.1e}, moved positions bitwise equal: {bitwise}"),
    )
}

fn c5_gradients() -> Outcome {
    let mut conv = 0.0f64;
    let mut net = 0.0f64;
    let mut checked = 0;
    for variant in VARIANTS {
        for degree in DEGREES {
            let spec = ConvLayerSpec::new(variant, 3, 2, degree);
            for seed in 0..20 {
                let r = check_conv(&spec, 12, seed).map_err(|e| e.to_string())?;
                conv = conv.max(r.max_relative_error);
                checked += r.checked;
            }
        }
    }
    for seed in 0..5u64 {
        let variant = VARIANTS[seed as usize % 2];
        let degree = DEGREES[(seed as usize / 2) % 2];
        let r = toy_network_check(variant, degree, seed).map_err(|e| e.to_string())?;
        net = net.max(r.max_relative_error);
        checked += r.checked;
    }
    check(
        conv < DEFAULT_TOLERANCE && net < DEFAULT_TOLERANCE,
        format!("{checked} gradients, max rel err conv {conv:.2e}, network {net:.2e}"),
    )
}

/// `rings × segments` quad grid wrapped into a torus, two triangles per quad.
fn torus(rings: usize, segments: usize) -> TriMesh {
    let tau = std::f64::consts::TAU;
    let mut vertices = Vec::new();
    for i in 0..rings {
        let u = tau * i as f64 / rings as f64;
        for j in 0..segments {
            let v = tau * j as f64 / segments as f64;
            let r = 0.7 + 0.3 * v.cos();
            vertices.push(Point3::new(r * u.cos(), r * u.sin(), 0.3 * v.sin()));
        }
    }
    let id = |i: usize, j: usize| (i % rings) * segments + j % segments;
    let mut faces = Vec::new();
    for i in 0..rings {
        for j in 0..segments {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriMesh::new(vertices, faces).expect("valid torus")
}

fn fixtures() -> Vec<TriMesh> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut meshes = vec![
        primitives::tetrahedron(),
        primitives::cube(),
        primitives::icosahedron(),
        primitives::icosphere(1),
        primitives::icosphere(2),
        primitives::subdivided_box(Point3::new(1.0, 0.5, 0.3), 2),
        primitives::subdivided_box(Point3::new(0.4, 0.9, 0.6), 4),
        primitives::cylinder(0.5, 0.8, 12, 3),
        primitives::cylinder(0.3, 0.4, 24, 6),
        torus(20, 20),
        torus(8, 5),
        torus(12, 7),
    ];
    while meshes.len() < 20 {
        let class = ToyClass::ALL[meshes.len() % 3];
        meshes.push(class.sample(&mut rng));
    }
    meshes
}

fn c6_subdivision() -> Outcome {
    let mut failures = Vec::new();
    for (k, m) in fixtures().iter().enumerate() {
        let (v, e, f) = (m.vertex_count(), m.edges().len(), m.face_count());
        let (p, _) = subdivide_ptq(m);
        let (s, _) = subdivide_sqrt3(m);
        let (s2, _) = subdivide_sqrt3(&s);
        let chi = m.euler_characteristic();
        let ok = p.face_count() == 4 * f
            && p.vertex_count() == v + e
            && s.face_count() == 3 * f
            && s.vertex_count() == v + f
            && s2.face_count() == 9 * f
            && [&p, &s, &s2].iter().all(|x| x.euler_characteristic() == chi);
        if !ok {
            failures.push(k);
        }
    }
    let spot = torus(20, 20);
    let (p, _) = subdivide_ptq(&spot);
    let (s, _) = subdivide_sqrt3(&spot);
    let spot_ok = (spot.vertex_count(), spot.face_count()) == (400, 800)
        && (s.vertex_count(), s.face_count()) == (1200, 2400)
        && (p.vertex_count(), p.face_count()) == (1600, 3200);
    check(
        failures.is_empty() && spot_ok,
        format!(
            "20 meshes, failing fixtures {failures:?}; V=400,F=800 -> sqrt3 ({}, {}), PTQ ({}, {})",
            s.vertex_count(),
            s.face_count(),
            p.vertex_count(),
            p.face_count()
        ),
    )
}

fn c7_pool_maps() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut problems = Vec::new();
    let mut worst = 0.0f64;
    for (k, m) in fixtures().iter().enumerate() {
        for scheme in [Scheme::Ptq, Scheme::Sqrt3] {
            let (fine, map) = scheme.subdivide(m);
            let mut count = vec![0usize; fine.vertex_count()];
            for patch in map.patches() {
                for &u in patch {
                    count[u] += 1;
                }
            }
            let new = match scheme {
                Scheme::Ptq => 2,
                Scheme::Sqrt3 => 3,
            };
            let ok = map.patches().len() == m.vertex_count()
                && count.iter().enumerate().all(|(u, &c)| c == if u < m.vertex_count() { 1 } else { new });
            if !ok {
                problems.push(format!("{k}/{scheme}"));
            }
            let x = Array2::from_shape_fn((fine.vertex_count(), 4), |_| rng.gen_range(-1.0..=1.0));
            let pooled = poly_pool(&x, &map).map_err(|e| e.to_string())?.features;
            for (v, patch) in map.patches().iter().enumerate() {
                for c in 0..4 {
                    let brute = patch.iter().map(|&u| x[[u, c]]).fold(f64::NEG_INFINITY, f64::max);
                    worst = worst.max((pooled[[v, c]] - brute).abs());
                }
            }
        }
    }
    check(
        problems.is_empty() && worst <= 1e-15,
        format!("multiplicity/coverage failures {problems:?}, pool vs brute-force max diff {worst:.1e}"),
    )
}

fn c8_mesh_training() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let raw = dir.path().join("raw");
    let proc = dir.path().join("proc");
    generate_toy_dataset(&raw, &ToyClass::ALL, 20, 10, 1).map_err(|e| e.to_string())?;
    let opts = IngestOptions {
        scheme: Scheme::Sqrt3,
        levels: 3,
        coarse_target: 100,
    };
    let manifest = ingest_mesh_dataset(&raw, &proc, &opts, false).map_err(|e| e.to_string())?;
    let ds = Dataset::load(&proc).map_err(|e| e.to_string())?;
    let mut cfg = TrainConfig::mesh_default();
    cfg.conv_widths = vec![16, 32, 64, 64];
    cfg.fc_widths = vec![64, 32];
    cfg.batch_size = 10;
    cfg.lr = Some(3e-3);
    cfg.epochs = 50;
    let outcome = train(&cfg, &ds.train, None, ds.classes.len(), |_| {}).map_err(|e| e.to_string())?;
    let best_train = outcome.log.iter().map(|m| m.train_accuracy).fold(0.0, f64::max);
    let net = outcome.final_checkpoint.network().map_err(|e| e.to_string())?;
    let (_, test) = evaluate(&net, &ds.test, ds.classes.len()).map_err(|e| e.to_string())?;
    check(
        manifest.failed.is_empty() && ds.train.len() == 60 && ds.test.len() == 30 && best_train >= 0.95 && test.accuracy >= 0.90,
        format!(
            "{} train / {} test shapes, best train acc {:.3}, final test acc {:.3}",
            ds.train.len(),
            ds.test.len(),
            best_train,
            test.accuracy
        ),
    )
}

fn graph_run(ds: &Dataset, variant: ConvVariant) -> Result<(f64, Duration), String> {
    let mut cfg = TrainConfig::graph_default();
    cfg.variant = variant;
    cfg.conv_widths = vec![64, 64];
    cfg.fc_widths = vec![64];
    cfg.lr = Some(1e-2);
    cfg.schedule = LrSchedule::Cosine;
    cfg.epochs = 20;
    let start = Instant::now();
    let outcome = train(&cfg, &ds.train, None, ds.classes.len(), |_| {}).map_err(|e| e.to_string())?;
    let net = outcome.final_checkpoint.network().map_err(|e| e.to_string())?;
    let (_, test) = evaluate(&net, &ds.test, ds.classes.len()).map_err(|e| e.to_string())?;
    Ok((test.accuracy, start.elapsed()))
}

fn c9_graph_training() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    generate_digit_graphs(dir.path(), 1000, 200, 75, 0, false).map_err(|e| e.to_string())?;
    let ds = Dataset::load(dir.path()).map_err(|e| e.to_string())?;
    let (unsqueezed, time) = graph_run(&ds, ConvVariant::Unsqueezed)?;
    let (squeezed, _) = graph_run(&ds, ConvVariant::Squeezed)?;
    let gap = 100.0 * (squeezed - unsqueezed);
    check(
        unsqueezed > 0.85 && time < Duration::from_secs(15 * 60) && gap.abs() <= 2.0,
        format!(
            "unsqueezed test acc {:.3} in {:.0}s, squeezed {:.3}, gap {gap:+.1} points",
            unsqueezed,
            time.as_secs_f64(),
            squeezed
        ),
    )
}

fn c10_parameter_ratio() -> Outcome {
    let sq = ConvLayerSpec::new(ConvVariant::Squeezed, 256, 256, Degree::TWO).param_count();
    let un = ConvLayerSpec::new(ConvVariant::Unsqueezed, 256, 256, Degree::TWO).param_count();
    let ratio = sq as f64 / un as f64;
    check(
        sq == 256 * 6 + 256 * 256 + 256 && un == 256 * 256 * 6 && ratio < 0.18,
        format!("squeezed {sq}, unsqueezed {un}, ratio {ratio:.4}"),
    )
}

/// AP by counting, for every relevant item, how many items rank ahead of it.
fn exhaustive_ap(query: &[f64], gallery: &[Vec<f64>], relevant: &[bool]) -> f64 {
    let key = |g: usize| (gallery[g].iter().zip(query).map(|(a, b)| (a - b).abs()).sum::<f64>(), g);
    let keys: Vec<(f64, usize)> = (0..gallery.len()).map(key).collect();
    let before = |a: (f64, usize), b: (f64, usize)| a.0 < b.0 || (a.0 == b.0 && a.1 < b.1);
    let mut precisions = Vec::new();
    for g in (0..gallery.len()).filter(|&g| relevant[g]) {
        let rank = 1 + keys.iter().filter(|&&k| before(k, keys[g])).count();
        let hits = 1 + (0..gallery.len()).filter(|&h| relevant[h] && before(keys[h], keys[g])).count();
        precisions.push(hits as f64 / rank as f64);
    }
    if precisions.is_empty() {
        0.0
    } else {
        precisions.iter().sum::<f64>() / precisions.len() as f64
    }
}

fn c11_retrieval() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let logits = |n: usize, rng: &mut ChaCha8Rng| Array2::from_shape_fn((n, 4), |_| rng.gen_range(-2.0..2.0));
    let gallery = descriptors(&logits(20, &mut rng));
    let mut queries = descriptors(&logits(5, &mut rng));
    queries.row_mut(4).assign(&gallery.row(13));
    let g_labels: Vec<usize> = (0..20).map(|i| i % 4).collect();
    let q_labels = vec![0, 1, 2, 3, g_labels[13]];
    let result = retrieve(&queries, &q_labels, &gallery, &g_labels).map_err(|e| e.to_string())?;
    let rows: Vec<Vec<f64>> = gallery.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut worst = 0.0f64;
    let mut map = 0.0;
    for (q, r) in result.queries.iter().enumerate() {
        let rel: Vec<bool> = g_labels.iter().map(|&l| l == q_labels[q]).collect();
        let ap = exhaustive_ap(&queries.row(q).to_vec(), &rows, &rel);
        map += ap / 5.0;
        worst = worst.max((ap - r.average_precision).abs());
    }
    worst = worst.max((map - result.mean_average_precision).abs());
    let top_is_self = result.queries[4].ranking[0].index == 13;
    let mut one_relevant = vec![false; 10];
    one_relevant[0] = true;
    check(
        worst <= 1e-12 && top_is_self && average_precision(&one_relevant) == 1.0,
        format!(
            "mAP {:.4}, max diff vs exhaustive {worst:.1e}, duplicate ranked first: {top_is_self}",
            result.mean_average_precision
        ),
    )
}

fn polynet(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_polynet"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("polynet {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn c12_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_str().expect("utf-8 path").to_string();
    polynet(&["generate-toy", "--out", &p("raw"), "--train", "4", "--test", "2", "--seed", "12"])?;
    for run in ["a", "b"] {
        polynet(&["--threads", "1", "process", &p("raw"), &p(&format!("proc_{run}")), "--levels", "2", "--coarse", "40"])?;
    }
    let manifests_equal = read(&dir.path().join("proc_a/manifest.json"))? == read(&dir.path().join("proc_b/manifest.json"))?;
    for run in ["a", "b"] {
        polynet(&[
            "--threads", "1", "train", &p("proc_a"), "--out", &p(&format!("ckpt_{run}.json")),
            "--metrics", &p(&format!("metrics_{run}.jsonl")), "--seed", "5", "--epochs", "3",
            "--batch-size", "4", "--conv-widths", "8,8,8", "--fc-widths", "8",
        ])?;
    }
    let metrics_equal = read(&dir.path().join("metrics_a.jsonl"))? == read(&dir.path().join("metrics_b.jsonl"))?;
    let ckpt_equal = read(&dir.path().join("ckpt_a.json"))? == read(&dir.path().join("ckpt_b.json"))?;
    check(
        manifests_equal && metrics_equal && ckpt_equal,
        format!("manifests identical: {manifests_equal}, metrics identical: {metrics_equal}, checkpoints identical: {ckpt_equal}"),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 12] = [
        (1, "filter parameter counts", c1_parameter_counts),
        (2, "PDF validity", c2_pdf_validity),
        (3, "analytic marginal vs quadrature", c3_marginal),
        (4, "conv invariances", c4_invariance),
        (5, "gradient correctness", c5_gradients),
        (6, "subdivision combinatorics", c6_subdivision),
        (7, "pool map multiplicity", c7_pool_maps),
        (8, "mesh training smoke", c8_mesh_training),
        (9, "graph training smoke", c9_graph_training),
        (10, "squeezed vs unsqueezed parameters", c10_parameter_ratio),
        (11, "retrieval metric", c11_retrieval),
        (12, "determinism", c12_determinism),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {n:>2} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
