//! Indexed triangle meshes: validation, cleanup, normalization and the
//! geometric queries the shape pipeline relies on.

mod bvh;
mod clean;
mod io;
pub mod primitives;

use std::collections::BTreeSet;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub use bvh::{Bvh, ClosestPoint};
pub use clean::{clean, DEFAULT_WELD_TOLERANCE};
pub use io::{load_mesh, read_obj, read_off, write_obj, write_off, MeshFormat};

pub type Point3 = Vector3<f64>;

/// Indexed triangle mesh. Faces are counter-clockwise vertex-index triples.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Point3>,
    faces: Vec<[usize; 3]>,
    normals: Option<Vec<Point3>>,
}

impl TriMesh {
    /// Builds a mesh, checking that every face references existing,
    /// pairwise-distinct vertices.
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        for (fi, f) in faces.iter().enumerate() {
            for &index in f {
                if index >= vertices.len() {
                    return Err(Error::IndexOutOfRange {
                        face: fi,
                        index,
                        count: vertices.len(),
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::RepeatedIndex(fi));
            }
        }
        Ok(Self {
            vertices,
            faces,
            normals: None,
        })
    }

    pub(crate) fn from_parts_unchecked(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Self {
        debug_assert!(faces.iter().flatten().all(|&i| i < vertices.len()));
        Self {
            vertices,
            faces,
            normals: None,
        }
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn normals(&self) -> Option<&[Point3]> {
        self.normals.as_deref()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty() || self.faces.is_empty()
    }

    /// Replaces vertex positions, keeping connectivity. Cached normals are
    /// dropped since they no longer describe the surface.
    pub fn with_vertices(&self, vertices: Vec<Point3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        Ok(Self {
            vertices,
            faces: self.faces.clone(),
            normals: None,
        })
    }

    /// Returns a copy carrying freshly computed per-vertex normals.
    pub fn with_normals(mut self) -> Self {
        self.normals = Some(vertex_normals(&self));
        self
    }

    /// Sorted, deduplicated undirected edges as `(min, max)` pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| {
                [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])]
                    .map(|(a, b)| (a.min(b), a.max(b)))
            })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// V - E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges().len() as i64 + self.faces.len() as i64
    }

    pub fn bounding_box(&self) -> Option<(Point3, Point3)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), v| {
            (lo.inf(v), hi.sup(v))
        }))
    }

    pub fn face_area(&self, face: usize) -> f64 {
        0.5 * self.face_cross(face).norm()
    }

    /// Unnormalized face normal, with length twice the face area.
    pub(crate) fn face_cross(&self, face: usize) -> Point3 {
        let [a, b, c] = self.faces[face];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        (pb - pa).cross(&(pc - pa))
    }
}

/// Symmetric one-ring adjacency: for each vertex, its sorted neighbor list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexAdjacency {
    neighbors: Vec<Vec<usize>>,
}

impl VertexAdjacency {
    /// Builds adjacency from explicit undirected edges over `n` vertices.
    /// Self-loops are ignored and duplicate edges collapse.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut sets = vec![BTreeSet::new(); n];
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::ShapeMismatch(format!(
                    "edge ({a}, {b}) out of range for {n} vertices"
                )));
            }
            if a != b {
                sets[a].insert(b);
                sets[b].insert(a);
            }
        }
        Ok(Self {
            neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.neighbors.iter().map(Vec::as_slice)
    }

    /// Relabels vertices: vertex `v` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut neighbors = vec![Vec::new(); self.neighbors.len()];
        for (v, list) in self.neighbors.iter().enumerate() {
            let mut mapped: Vec<usize> = list.iter().map(|&u| perm[u]).collect();
            mapped.sort_unstable();
            neighbors[perm[v]] = mapped;
        }
        Self { neighbors }
    }
}

/// One-ring adjacency derived from face edges.
pub fn adjacency(mesh: &TriMesh) -> VertexAdjacency {
    VertexAdjacency::from_edges(mesh.vertex_count(), mesh.edges())
        .expect("mesh faces are validated on construction")
}

/// Translates by the bounding-box center and scales uniformly so the
/// longest axis spans exactly [-1, 1].
pub fn normalize(mesh: &TriMesh) -> Result<TriMesh> {
    let (lo, hi) = mesh.bounding_box().ok_or(Error::EmptyMesh)?;
    let extent = (hi - lo).max();
    if !(extent > 0.0) {
        return Err(Error::ZeroExtent);
    }
    let center = (lo + hi) * 0.5;
    let scale = 2.0 / extent;
    let vertices = mesh
        .vertices
        .iter()
        .map(|v| ((v - center) * scale).map(|c| c.clamp(-1.0, 1.0)))
        .collect();
    Ok(TriMesh {
        vertices,
        faces: mesh.faces.clone(),
        normals: mesh.normals.clone(),
    })
}

/// Area-weighted average of incident face normals, normalized to unit length.
pub fn vertex_normals(mesh: &TriMesh) -> Vec<Point3> {
    let mut acc = vec![Point3::zeros(); mesh.vertex_count()];
    for (fi, f) in mesh.faces.iter().enumerate() {
        // |cross| is twice the area, so summing raw crosses is area weighting.
        let n = mesh.face_cross(fi);
        for &v in f {
            acc[v] += n;
        }
    }
    acc.into_iter()
        .map(|n| {
            let len = n.norm();
            if len > 0.0 {
                n / len
            } else {
                Point3::z()
            }
        })
        .collect()
}
