use std::collections::HashMap;

use super::{Point3, TriMesh};
use crate::error::{Error, Result};

/// Default weld tolerance as a fraction of the bounding-box diagonal.
pub const DEFAULT_WELD_TOLERANCE: f64 = 1e-6;

/// Repairs a mesh into a single edge-manifold component.
///
/// Steps, in order: weld vertices closer than `weld_tol` × bbox diagonal,
/// drop collapsed and zero-area faces, greedily remove the smallest faces on
/// edges with more than two incident faces, keep the largest connected
/// component (by face count, ties to the lowest vertex index) and drop
/// unreferenced vertices. Surviving vertices keep their relative order.
pub fn clean(mesh: &TriMesh, weld_tol: f64) -> Result<TriMesh> {
    let (lo, hi) = mesh.bounding_box().ok_or(Error::EmptyAfterClean)?;
    let tol = weld_tol * (hi - lo).norm();

    let remap = weld(mesh.vertices(), tol);
    let area_eps = tol * tol;
    let mut faces: Vec<[usize; 3]> = Vec::with_capacity(mesh.face_count());
    for f in mesh.faces() {
        let g = f.map(|v| remap[v]);
        if g[0] == g[1] || g[1] == g[2] || g[0] == g[2] {
            continue;
        }
        let v = mesh.vertices();
        let twice_area = (v[g[1]] - v[g[0]]).cross(&(v[g[2]] - v[g[0]])).norm();
        if twice_area <= area_eps {
            continue;
        }
        faces.push(g);
    }

    let faces = remove_nonmanifold(mesh.vertices(), faces);
    let faces = largest_component(mesh.vertex_count(), faces);
    if faces.is_empty() {
        return Err(Error::EmptyAfterClean);
    }

    let mut new_index = vec![usize::MAX; mesh.vertex_count()];
    for f in &faces {
        for &v in f {
            new_index[v] = 0;
        }
    }
    let mut vertices = Vec::new();
    let mut normals = mesh.normals().map(|_| Vec::new());
    for (v, slot) in new_index.iter_mut().enumerate() {
        if *slot == 0 {
            *slot = vertices.len();
            vertices.push(mesh.vertices()[v]);
            if let (Some(out), Some(src)) = (normals.as_mut(), mesh.normals()) {
                out.push(src[v]);
            }
        }
    }
    let faces = faces.into_iter().map(|f| f.map(|v| new_index[v])).collect();
    let mut out = TriMesh::from_parts_unchecked(vertices, faces);
    out.normals = normals;
    Ok(out)
}

/// Maps every vertex to the lowest-indexed vertex within `tol` of it that is
/// itself a representative. Grid hashing keeps this near-linear.
fn weld(vertices: &[Point3], tol: f64) -> Vec<usize> {
    let mut remap: Vec<usize> = (0..vertices.len()).collect();
    if tol <= 0.0 {
        let mut seen: HashMap<[u64; 3], usize> = HashMap::new();
        for (i, v) in vertices.iter().enumerate() {
            let key = [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
            remap[i] = *seen.entry(key).or_insert(i);
        }
        return remap;
    }
    let cell = |v: &Point3| -> [i64; 3] { [v.x, v.y, v.z].map(|c| (c / tol).floor() as i64) };
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, v) in vertices.iter().enumerate() {
        let c = cell(v);
        let mut found = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(reps) = grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) else {
                        continue;
                    };
                    for &r in reps {
                        if (vertices[r] - v).norm() <= tol && found.map_or(true, |f| r < f) {
                            found = Some(r);
                        }
                    }
                }
            }
        }
        match found {
            Some(r) => remap[i] = r,
            None => grid.entry(c).or_default().push(i),
        }
    }
    remap
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn face_edges(f: &[usize; 3]) -> [(usize, usize); 3] {
    [edge_key(f[0], f[1]), edge_key(f[1], f[2]), edge_key(f[2], f[0])]
}

fn remove_nonmanifold(vertices: &[Point3], faces: Vec<[usize; 3]>) -> Vec<[usize; 3]> {
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for f in &faces {
        for e in face_edges(f) {
            *count.entry(e).or_default() += 1;
        }
    }
    if count.values().all(|&c| c <= 2) {
        return faces;
    }
    let area = |f: &[usize; 3]| {
        (vertices[f[1]] - vertices[f[0]])
            .cross(&(vertices[f[2]] - vertices[f[0]]))
            .norm()
    };
    let mut candidates: Vec<(f64, usize)> = faces
        .iter()
        .enumerate()
        .filter(|(_, f)| face_edges(f).iter().any(|e| count[e] > 2))
        .map(|(i, f)| (area(f), i))
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut removed = vec![false; faces.len()];
    for (_, i) in candidates {
        let edges = face_edges(&faces[i]);
        if edges.iter().any(|e| count[e] > 2) {
            removed[i] = true;
            for e in edges {
                *count.get_mut(&e).unwrap() -= 1;
            }
        }
    }
    faces
        .into_iter()
        .zip(removed)
        .filter_map(|(f, r)| (!r).then_some(f))
        .collect()
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn largest_component(n: usize, faces: Vec<[usize; 3]>) -> Vec<[usize; 3]> {
    let mut parent: Vec<usize> = (0..n).collect();
    for f in &faces {
        for k in 1..3 {
            let (a, b) = (find(&mut parent, f[0]), find(&mut parent, f[k]));
            if a != b {
                // Root at the lower index so a root is its component's minimum.
                let (lo, hi) = (a.min(b), a.max(b));
                parent[hi] = lo;
            }
        }
    }
    let mut sizes: HashMap<usize, usize> = HashMap::new();
    let roots: Vec<usize> = faces.iter().map(|f| find(&mut parent, f[0])).collect();
    for &r in &roots {
        *sizes.entry(r).or_default() += 1;
    }
    let Some((&best, _)) = sizes
        .iter()
        .max_by(|(ra, sa), (rb, sb)| sa.cmp(sb).then(rb.cmp(ra)))
    else {
        return faces;
    };
    faces
        .into_iter()
        .zip(roots)
        .filter_map(|(f, r)| (r == best).then_some(f))
        .collect()
}
