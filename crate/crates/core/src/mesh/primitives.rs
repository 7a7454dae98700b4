//! Closed, genus-0 fixture meshes: platonic solids, icospheres, subdivided
//! boxes and capped cylinders. All are centered at the origin.

use std::collections::HashMap;

use super::{Point3, TriMesh};

/// Flips faces whose normal points toward the origin. Only meaningful for
/// shapes that are star-shaped around the origin.
fn orient_outward(vertices: &[Point3], faces: &mut [[usize; 3]]) {
    for f in faces.iter_mut() {
        let (a, b, c) = (vertices[f[0]], vertices[f[1]], vertices[f[2]]);
        let n = (b - a).cross(&(c - a));
        if n.dot(&((a + b + c) / 3.0)) < 0.0 {
            f.swap(1, 2);
        }
    }
}

fn build(vertices: Vec<Point3>, mut faces: Vec<[usize; 3]>) -> TriMesh {
    orient_outward(&vertices, &mut faces);
    TriMesh::from_parts_unchecked(vertices, faces)
}

pub fn tetrahedron() -> TriMesh {
    let vertices = vec![
        Point3::new(1.0, 1.0, 1.0),
        Point3::new(1.0, -1.0, -1.0),
        Point3::new(-1.0, 1.0, -1.0),
        Point3::new(-1.0, -1.0, 1.0),
    ];
    build(vertices, vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
}

/// The cube [-1,1]^3 with 12 triangles. Each square face is split along the
/// diagonal through whichever of (1,1,1) or (-1,-1,-1) it contains.
pub fn cube() -> TriMesh {
    let vertices: Vec<Point3> = (0..8)
        .map(|i| {
            let s = |bit: usize| if i >> bit & 1 == 1 { 1.0 } else { -1.0 };
            Point3::new(s(0), s(1), s(2))
        })
        .collect();
    let mut faces = Vec::with_capacity(12);
    for axis in 0..3 {
        let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in 0..2usize {
            let corner = |u: usize, w: usize| side << axis | u << b | w << c;
            let cycle = [corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)];
            if side == 0 {
                faces.push([cycle[0], cycle[1], cycle[2]]);
                faces.push([cycle[0], cycle[2], cycle[3]]);
            } else {
                faces.push([cycle[2], cycle[3], cycle[0]]);
                faces.push([cycle[2], cycle[0], cycle[1]]);
            }
        }
    }
    build(vertices, faces)
}

pub fn icosahedron() -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ];
    let vertices = raw
        .iter()
        .map(|&(x, y, z)| Point3::new(x, y, z).normalize())
        .collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    build(vertices, faces)
}

/// Unit icosphere: the icosahedron with `level` rounds of midpoint
/// quadrisection, projected onto the sphere. Level 4 has 2562 vertices.
pub fn icosphere(level: usize) -> TriMesh {
    let base = icosahedron();
    let mut vertices = base.vertices().to_vec();
    let mut faces = base.faces().to_vec();
    for _ in 0..level {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point3>| {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    build(vertices, faces)
}

/// Axis-aligned box with half-extents `half`, each face split into an
/// `n`×`n` grid of quads (two triangles each).
pub fn subdivided_box(half: Point3, n: usize) -> TriMesh {
    let n = n.max(1) as i64;
    let mut index: HashMap<[i64; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut vid = |key: [i64; 3], vertices: &mut Vec<Point3>| {
        *index.entry(key).or_insert_with(|| {
            let c = |k: i64, h: f64| (2.0 * k as f64 / n as f64 - 1.0) * h;
            vertices.push(Point3::new(c(key[0], half.x), c(key[1], half.y), c(key[2], half.z)));
            vertices.len() - 1
        })
    };
    for axis in 0..3 {
        let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [0, n] {
            for i in 0..n {
                for j in 0..n {
                    let mut quad = [0usize; 4];
                    for (q, (di, dj)) in [(0, 0), (1, 0), (1, 1), (0, 1)].into_iter().enumerate() {
                        let mut key = [0i64; 3];
                        key[axis] = side;
                        key[b] = i + di;
                        key[c] = j + dj;
                        quad[q] = vid(key, &mut vertices);
                    }
                    faces.push([quad[0], quad[1], quad[2]]);
                    faces.push([quad[0], quad[2], quad[3]]);
                }
            }
        }
    }
    build(vertices, faces)
}

/// Closed cylinder along z with the given radius and half-height.
/// `segments` around the axis, `rings` bands along the side.
pub fn cylinder(radius: f64, half_height: f64, segments: usize, rings: usize) -> TriMesh {
    let segments = segments.max(3);
    let rings = rings.max(1);
    let mut vertices = Vec::with_capacity(segments * (rings + 1) + 2);
    for r in 0..=rings {
        let z = -half_height + 2.0 * half_height * r as f64 / rings as f64;
        for s in 0..segments {
            let t = std::f64::consts::TAU * s as f64 / segments as f64;
            vertices.push(Point3::new(radius * t.cos(), radius * t.sin(), z));
        }
    }
    let bottom = vertices.len();
    vertices.push(Point3::new(0.0, 0.0, -half_height));
    let top = vertices.len();
    vertices.push(Point3::new(0.0, 0.0, half_height));

    let at = |r: usize, s: usize| r * segments + s % segments;
    let mut faces = Vec::new();
    for r in 0..rings {
        for s in 0..segments {
            faces.push([at(r, s), at(r, s + 1), at(r + 1, s + 1)]);
            faces.push([at(r, s), at(r + 1, s + 1), at(r + 1, s)]);
        }
    }
    for s in 0..segments {
        faces.push([bottom, at(0, s + 1), at(0, s)]);
        faces.push([top, at(rings, s), at(rings, s + 1)]);
    }
    build(vertices, faces)
}
