//! Quadric-error-metric edge-collapse decimation.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use nalgebra::{Matrix3, Vector3};

use crate::error::Result;
use crate::mesh::{clean, Point3, TriMesh, DEFAULT_WELD_TOLERANCE};

/// Smallest closed triangle mesh has four vertices.
const VERTEX_FLOOR: usize = 4;

#[derive(Debug, Clone)]
pub struct Decimated {
    pub mesh: TriMesh,
    /// False when the target could not be reached without breaking topology.
    pub reached_target: bool,
}

/// Symmetric 4x4 quadric stored as its upper triangle.
#[derive(Debug, Clone, Copy, Default)]
struct Quadric([f64; 10]);

impl Quadric {
    fn from_plane(n: &Vector3<f64>, d: f64, weight: f64) -> Self {
        let (a, b, c) = (n.x, n.y, n.z);
        Self(
            [
                a * a,
                a * b,
                a * c,
                a * d,
                b * b,
                b * c,
                b * d,
                c * c,
                c * d,
                d * d,
            ]
            .map(|x| x * weight),
        )
    }

    fn add(&self, o: &Self) -> Self {
        let mut out = self.0;
        for (x, y) in out.iter_mut().zip(o.0) {
            *x += y;
        }
        Self(out)
    }

    fn error(&self, p: &Point3) -> f64 {
        let q = &self.0;
        let (x, y, z) = (p.x, p.y, p.z);
        q[0] * x * x + 2.0 * q[1] * x * y + 2.0 * q[2] * x * z + 2.0 * q[3] * x
            + q[4] * y * y
            + 2.0 * q[5] * y * z
            + 2.0 * q[6] * y
            + q[7] * z * z
            + 2.0 * q[8] * z
            + q[9]
    }

    fn minimizer(&self) -> Option<Point3> {
        let q = &self.0;
        let a = Matrix3::new(q[0], q[1], q[2], q[1], q[4], q[5], q[2], q[5], q[7]);
        let scale = a.abs().max();
        if scale == 0.0 || a.determinant().abs() <= 1e-10 * scale * scale * scale {
            return None;
        }
        a.lu().solve(&-Vector3::new(q[3], q[6], q[8]))
    }
}

#[derive(Debug)]
struct Candidate {
    cost: f64,
    u: usize,
    v: usize,
    stamps: (u32, u32),
    target: Point3,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // Reversed so BinaryHeap pops the cheapest collapse first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| (other.u, other.v).cmp(&(self.u, self.v)))
    }
}

struct State {
    pos: Vec<Point3>,
    quadric: Vec<Quadric>,
    stamp: Vec<u32>,
    alive: Vec<bool>,
    faces: Vec<[usize; 3]>,
    face_alive: Vec<bool>,
    incident: Vec<Vec<usize>>,
    live_vertices: usize,
}

impl State {
    fn new(mesh: &TriMesh) -> Self {
        let n = mesh.vertex_count();
        let mut quadric = vec![Quadric::default(); n];
        let mut incident = vec![Vec::new(); n];
        for (fi, f) in mesh.faces().iter().enumerate() {
            let cross = mesh.face_cross(fi);
            let len = cross.norm();
            if len > 0.0 {
                let normal = cross / len;
                let d = -normal.dot(&mesh.vertices()[f[0]]);
                let q = Quadric::from_plane(&normal, d, 0.5 * len);
                for &v in f {
                    quadric[v] = quadric[v].add(&q);
                }
            }
            for &v in f {
                incident[v].push(fi);
            }
        }
        Self {
            pos: mesh.vertices().to_vec(),
            quadric,
            stamp: vec![0; n],
            alive: vec![true; n],
            faces: mesh.faces().to_vec(),
            face_alive: vec![true; mesh.face_count()],
            incident,
            live_vertices: n,
        }
    }

    fn live_faces(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.incident[v].iter().copied().filter(|&f| self.face_alive[f])
    }

    fn neighbors(&self, v: usize) -> BTreeSet<usize> {
        self.live_faces(v)
            .flat_map(|f| self.faces[f])
            .filter(|&w| w != v)
            .collect()
    }

    fn candidate(&self, u: usize, v: usize) -> Candidate {
        let (u, v) = (u.min(v), u.max(v));
        let q = self.quadric[u].add(&self.quadric[v]);
        let (pu, pv) = (self.pos[u], self.pos[v]);
        let mid = (pu + pv) * 0.5;
        let len = (pv - pu).norm();
        let mut options = vec![pu, pv, mid];
        if let Some(p) = q.minimizer() {
            // Ill-conditioned solves can land far away; keep them local.
            if (p - mid).norm() <= 2.0 * len {
                options.insert(0, p);
            }
        }
        let (target, cost) = options
            .into_iter()
            .map(|p| (p, q.error(&p).max(0.0)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty options");
        Candidate {
            cost,
            u,
            v,
            stamps: (self.stamp[u], self.stamp[v]),
            target,
        }
    }

    fn is_boundary_vertex(&self, v: usize) -> bool {
        self.neighbors(v).into_iter().any(|w| self.edge_face_count(v, w) == 1)
    }

    fn edge_face_count(&self, a: usize, b: usize) -> usize {
        self.live_faces(a).filter(|&f| self.faces[f].contains(&b)).count()
    }

    fn can_collapse(&self, c: &Candidate) -> bool {
        let (u, v) = (c.u, c.v);
        if self.live_vertices <= VERTEX_FLOOR {
            return false;
        }
        // Link condition: the common neighbors must be exactly the vertices
        // opposite the edge.
        let shared: Vec<usize> = self.live_faces(u).filter(|&f| self.faces[f].contains(&v)).collect();
        if shared.is_empty() {
            return false;
        }
        let opposite: BTreeSet<usize> = shared
            .iter()
            .flat_map(|&f| self.faces[f])
            .filter(|&w| w != u && w != v)
            .collect();
        let nu = self.neighbors(u);
        let nv = self.neighbors(v);
        if nu.intersection(&nv).copied().collect::<BTreeSet<_>>() != opposite {
            return false;
        }
        if shared.len() == 2 && self.is_boundary_vertex(u) && self.is_boundary_vertex(v) {
            return false;
        }
        // Reject collapses that flip or flatten a surviving face.
        for w in [u, v] {
            for f in self.live_faces(w) {
                let face = self.faces[f];
                if face.contains(&u) && face.contains(&v) {
                    continue;
                }
                let p = face.map(|x| self.pos[x]);
                let q = face.map(|x| if x == u || x == v { c.target } else { self.pos[x] });
                let before = (p[1] - p[0]).cross(&(p[2] - p[0]));
                let after = (q[1] - q[0]).cross(&(q[2] - q[0]));
                if after.norm() <= 1e-12 * before.norm() || before.dot(&after) <= 0.0 {
                    return false;
                }
            }
        }
        true
    }

    fn collapse(&mut self, c: &Candidate) {
        let (u, v) = (c.u, c.v);
        let v_faces: Vec<usize> = self.live_faces(v).collect();
        for f in v_faces {
            if self.faces[f].contains(&u) {
                self.face_alive[f] = false;
            } else {
                for x in self.faces[f].iter_mut() {
                    if *x == v {
                        *x = u;
                    }
                }
                self.incident[u].push(f);
            }
        }
        self.incident[u].retain(|&f| self.face_alive[f]);
        self.incident[v].clear();
        self.alive[v] = false;
        self.live_vertices -= 1;
        self.pos[u] = c.target;
        self.quadric[u] = self.quadric[u].add(&self.quadric[v]);
        self.stamp[u] += 1;
        self.stamp[v] += 1;
    }

    fn into_mesh(self) -> TriMesh {
        let mut index = vec![usize::MAX; self.pos.len()];
        let mut vertices = Vec::with_capacity(self.live_vertices);
        for (v, &alive) in self.alive.iter().enumerate() {
            if alive {
                index[v] = vertices.len();
                vertices.push(self.pos[v]);
            }
        }
        let faces = self
            .faces
            .iter()
            .zip(&self.face_alive)
            .filter(|(_, &a)| a)
            .map(|(f, _)| f.map(|x| index[x]))
            .collect();
        TriMesh::from_parts_unchecked(vertices, faces)
    }
}

/// Collapses edges in order of increasing quadric error until at most
/// `target_vertices` remain. Collapses that would break edge-manifoldness or
/// flip a face are skipped. The result is cleaned.
pub fn decimate(mesh: &TriMesh, target_vertices: usize) -> Result<Decimated> {
    let target = target_vertices.max(VERTEX_FLOOR);
    if mesh.vertex_count() <= target_vertices {
        return Ok(Decimated {
            mesh: mesh.clone(),
            reached_target: true,
        });
    }
    let mut state = State::new(mesh);
    let mut heap: BinaryHeap<Candidate> = mesh
        .edges()
        .into_iter()
        .map(|(a, b)| state.candidate(a, b))
        .collect();

    while state.live_vertices > target {
        let Some(c) = heap.pop() else { break };
        if !state.alive[c.u] || !state.alive[c.v] || c.stamps != (state.stamp[c.u], state.stamp[c.v]) {
            continue;
        }
        if !state.can_collapse(&c) {
            continue;
        }
        state.collapse(&c);
        for w in state.neighbors(c.u) {
            heap.push(state.candidate(c.u, w));
            // Neighbors' other edges are unaffected, but edges whose rejection
            // depended on the old geometry near u get another chance.
            for x in state.neighbors(w) {
                if x != c.u {
                    let stale = state.candidate(w, x);
                    heap.push(stale);
                }
            }
        }
    }

    let reached_target = state.live_vertices <= target_vertices;
    if !reached_target {
        log::warn!(
            "decimation stopped at {} vertices (target {})",
            state.live_vertices,
            target_vertices
        );
    }
    let mesh = clean(&state.into_mesh(), DEFAULT_WELD_TOLERANCE)?;
    Ok(Decimated {
        mesh,
        reached_target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;

    #[test]
    fn icosphere_to_400_keeps_genus() {
        let sphere = primitives::icosphere(4);
        assert_eq!(sphere.vertex_count(), 2562);
        let out = decimate(&sphere, 400).unwrap();
        assert!(out.reached_target);
        assert!(out.mesh.vertex_count() <= 400);
        assert!(out.mesh.vertex_count() >= 390);
        assert_eq!(out.mesh.euler_characteristic(), 2);
        // Still roughly a unit sphere.
        for v in out.mesh.vertices() {
            assert!((v.norm() - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn small_mesh_is_unchanged() {
        let t = primitives::tetrahedron();
        let out = decimate(&t, 400).unwrap();
        assert!(out.reached_target);
        assert_eq!(out.mesh, t);
    }

    #[test]
    fn tetrahedron_is_the_floor() {
        let t = primitives::tetrahedron();
        let out = decimate(&t, 3).unwrap();
        assert!(!out.reached_target);
        assert_eq!(out.mesh, t);
    }

    #[test]
    fn box_and_cylinder_stay_closed_manifolds() {
        for m in [
            primitives::subdivided_box(Point3::new(1.0, 0.6, 0.3), 8),
            primitives::cylinder(0.5, 1.0, 32, 8),
        ] {
            let out = decimate(&m, 60).unwrap();
            assert!(out.mesh.vertex_count() <= 60);
            assert_eq!(out.mesh.euler_characteristic(), 2);
            let faces = out.mesh.faces();
            for (a, b) in out.mesh.edges() {
                let n = faces.iter().filter(|f| f.contains(&a) && f.contains(&b)).count();
                assert_eq!(n, 2);
            }
        }
    }
}
