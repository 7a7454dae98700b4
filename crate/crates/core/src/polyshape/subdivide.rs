//! Connectivity-level PTQ and √3 subdivision. Coarse vertices keep their
//! indices; new vertices are appended in a fixed order so the resulting
//! pooling maps are deterministic.

use std::collections::HashMap;

use super::pool::PoolMap;
use crate::mesh::{Point3, TriMesh};

/// Primal triangle quadrisection: one midpoint per edge, four faces per face.
///
/// Midpoints are appended in sorted `(min, max)` edge order. The patch of a
/// coarse vertex is itself plus the midpoints of its incident edges.
pub fn subdivide_ptq(mesh: &TriMesh) -> (TriMesh, PoolMap) {
    let n = mesh.vertex_count();
    let edges = mesh.edges();
    let mid: HashMap<(usize, usize), usize> =
        edges.iter().enumerate().map(|(k, &e)| (e, n + k)).collect();

    let mut vertices = mesh.vertices().to_vec();
    vertices.extend(
        edges
            .iter()
            .map(|&(a, b)| (mesh.vertices()[a] + mesh.vertices()[b]) * 0.5),
    );

    let m = |a: usize, b: usize| mid[&(a.min(b), a.max(b))];
    let mut faces = Vec::with_capacity(4 * mesh.face_count());
    for &[a, b, c] in mesh.faces() {
        let (ab, bc, ca) = (m(a, b), m(b, c), m(c, a));
        faces.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
    }

    let mut patches: Vec<Vec<usize>> = (0..n).map(|v| vec![v]).collect();
    for (k, &(a, b)) in edges.iter().enumerate() {
        patches[a].push(n + k);
        patches[b].push(n + k);
    }
    let fine = TriMesh::from_parts_unchecked(vertices, faces);
    let map = PoolMap::from_patches_unchecked(patches, fine.vertex_count());
    (fine, map)
}

/// √3 subdivision: a barycenter per face joined to its corners, then every
/// original interior edge flipped. Boundary edges stay unflipped.
///
/// Barycenters are appended in face order. The patch of a coarse vertex is
/// itself plus the barycenters of its incident faces.
pub fn subdivide_sqrt3(mesh: &TriMesh) -> (TriMesh, PoolMap) {
    let n = mesh.vertex_count();
    let mut vertices = mesh.vertices().to_vec();
    vertices.extend(mesh.faces().iter().map(|f| {
        f.iter().map(|&v| mesh.vertices()[v]).sum::<Point3>() / 3.0
    }));

    // Directed edge (a, b) -> face whose boundary traverses a then b.
    let mut owner: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * mesh.face_count());
    for (fi, &[a, b, c]) in mesh.faces().iter().enumerate() {
        owner.insert((a, b), fi);
        owner.insert((b, c), fi);
        owner.insert((c, a), fi);
    }

    let mut faces = Vec::with_capacity(3 * mesh.face_count());
    for (a, b) in mesh.edges() {
        match (owner.get(&(a, b)), owner.get(&(b, a))) {
            (Some(&f1), Some(&f2)) => {
                // f1 holds a->b, f2 holds b->a. The quad a, m2, b, m1 is
                // re-split along m1-m2.
                let (m1, m2) = (n + f1, n + f2);
                faces.push([a, m2, m1]);
                faces.push([m2, b, m1]);
            }
            (Some(&f), None) => faces.push([a, b, n + f]),
            (None, Some(&f)) => faces.push([b, a, n + f]),
            (None, None) => unreachable!("edge list derived from faces"),
        }
    }

    let mut patches: Vec<Vec<usize>> = (0..n).map(|v| vec![v]).collect();
    for (fi, f) in mesh.faces().iter().enumerate() {
        for &v in f {
            patches[v].push(n + fi);
        }
    }
    let fine = TriMesh::from_parts_unchecked(vertices, faces);
    let map = PoolMap::from_patches_unchecked(patches, fine.vertex_count());
    (fine, map)
}
