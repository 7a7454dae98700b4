//! Multi-resolution shape pyramids: decimate to a coarse mesh, then
//! alternate subdivision and surface fitting, recording the pooling patch
//! maps between consecutive levels.

mod decimate;
mod pool;
mod subdivide;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{adjacency, read_obj, Bvh, Point3, TriMesh, VertexAdjacency};

pub use decimate::{decimate, Decimated};
pub use pool::{poly_pool, poly_pool_backward, PoolMap, PoolOutput};
pub use subdivide::{subdivide_ptq, subdivide_sqrt3};

pub const DEFAULT_LEVELS: usize = 3;
pub const DEFAULT_COARSE_TARGET: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Ptq,
    Sqrt3,
}

impl Scheme {
    pub fn subdivide(self, mesh: &TriMesh) -> (TriMesh, PoolMap) {
        match self {
            Scheme::Ptq => subdivide_ptq(mesh),
            Scheme::Sqrt3 => subdivide_sqrt3(mesh),
        }
    }

    pub fn face_factor(self) -> usize {
        match self {
            Scheme::Ptq => 4,
            Scheme::Sqrt3 => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Ptq => "ptq",
            Scheme::Sqrt3 => "sqrt3",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ptq" => Ok(Scheme::Ptq),
            "sqrt3" => Ok(Scheme::Sqrt3),
            other => Err(Error::Config(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Moves every vertex to its closest point on the reference surface.
pub fn fit_to_reference(mesh: &TriMesh, reference: &TriMesh) -> Result<TriMesh> {
    if mesh.is_empty() || reference.is_empty() {
        return Err(Error::EmptyMesh);
    }
    fit_with_bvh(mesh, &Bvh::new(reference))
}

pub fn fit_with_bvh(mesh: &TriMesh, reference: &Bvh) -> Result<TriMesh> {
    let vertices: Vec<Point3> = mesh
        .vertices()
        .par_iter()
        .map(|v| reference.closest_point(v).map(|hit| hit.point).ok_or(Error::EmptyMesh))
        .collect::<Result<_>>()?;
    mesh.with_vertices(vertices)
}

fn clamp_unit(mesh: &TriMesh) -> TriMesh {
    let vertices = mesh
        .vertices()
        .iter()
        .map(|v| v.map(|c| c.clamp(-1.0, 1.0)))
        .collect();
    mesh.with_vertices(vertices).expect("same vertex count")
}

/// Ordered mesh levels, coarsest first, with the pooling maps between them.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiResShape {
    pub scheme: Scheme,
    /// `levels[0]` is the coarse mesh, `levels[L]` the finest.
    pub levels: Vec<TriMesh>,
    /// `pool_maps[k]` maps level `k + 1` onto level `k`.
    pub pool_maps: Vec<PoolMap>,
    pub adjacency: Vec<VertexAdjacency>,
    pub reached_coarse_target: bool,
}

impl MultiResShape {
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn finest(&self) -> &TriMesh {
        self.levels.last().expect("at least one level")
    }

    /// Per-vertex `[x, y, z, nx, ny, nz]` rows for the finest level.
    pub fn input_features(&self) -> crate::FeatureMatrix {
        let mesh = self.finest();
        let normals = crate::mesh::vertex_normals(mesh);
        let mut f = crate::FeatureMatrix::zeros((mesh.vertex_count(), 6));
        for (i, (p, n)) in mesh.vertices().iter().zip(&normals).enumerate() {
            for k in 0..3 {
                f[[i, k]] = p[k].clamp(-1.0, 1.0);
                f[[i, 3 + k]] = n[k].clamp(-1.0, 1.0);
            }
        }
        f
    }

    /// Writes `level_k.obj`, `pools.json` and `meta.json` into `dir`.
    pub fn save(&self, dir: &Path, source: Option<&str>) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (k, level) in self.levels.iter().enumerate() {
            crate::mesh::write_obj(level, &dir.join(format!("level_{k}.obj")))?;
        }
        let pools = PoolsFile {
            scheme: self.scheme,
            levels: self.pool_maps.clone(),
        };
        write_json(&dir.join("pools.json"), &pools)?;
        let meta = ShapeMeta {
            schema_version: 1,
            scheme: self.scheme,
            levels: self
                .levels
                .iter()
                .map(|m| LevelCounts {
                    vertices: m.vertex_count(),
                    faces: m.face_count(),
                })
                .collect(),
            reached_coarse_target: self.reached_coarse_target,
            source: source.map(str::to_owned),
        };
        write_json(&dir.join("meta.json"), &meta)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: ShapeMeta = read_json(&dir.join("meta.json"))?;
        let pools: PoolsFile = read_json(&dir.join("pools.json"))?;
        let mut levels = Vec::with_capacity(meta.levels.len());
        for k in 0..meta.levels.len() {
            let path = dir.join(format!("level_{k}.obj"));
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            levels.push(read_obj(&text, &path)?);
        }
        if pools.levels.len() + 1 != levels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} levels but {} pool maps",
                levels.len(),
                pools.levels.len()
            )));
        }
        for (k, map) in pools.levels.iter().enumerate() {
            if map.coarse_count() != levels[k].vertex_count()
                || map.fine_count() != levels[k + 1].vertex_count()
            {
                return Err(Error::ShapeMismatch(format!("pool map {k} does not match its levels")));
            }
        }
        let pool_maps = pools
            .levels
            .into_iter()
            .map(|m| PoolMap::new(m.patches().to_vec(), m.fine_count()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            scheme: meta.scheme,
            adjacency: levels.iter().map(adjacency).collect(),
            levels,
            pool_maps,
            reached_coarse_target: meta.reached_coarse_target,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PoolsFile {
    scheme: Scheme,
    levels: Vec<PoolMap>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelCounts {
    pub vertices: usize,
    pub faces: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ShapeMeta {
    schema_version: u32,
    scheme: Scheme,
    levels: Vec<LevelCounts>,
    reached_coarse_target: bool,
    source: Option<String>,
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Decimate, fit, then `levels` rounds of subdivide-and-fit against the
/// original surface. Expects a cleaned, normalized input.
pub fn build_polyshape(
    original: &TriMesh,
    scheme: Scheme,
    levels: usize,
    coarse_target: usize,
) -> Result<MultiResShape> {
    if original.is_empty() {
        return Err(Error::EmptyMesh);
    }
    if levels == 0 {
        return Err(Error::Config("at least one subdivision level is required".into()));
    }
    let bvh = Bvh::new(original);
    let Decimated {
        mesh: coarse,
        reached_target,
    } = decimate(original, coarse_target)?;
    let coarse = clamp_unit(&fit_with_bvh(&coarse, &bvh)?);

    let mut meshes = vec![coarse];
    let mut pool_maps = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (fine, map) = scheme.subdivide(meshes.last().expect("non-empty"));
        meshes.push(clamp_unit(&fit_with_bvh(&fine, &bvh)?));
        pool_maps.push(map);
    }
    Ok(MultiResShape {
        scheme,
        adjacency: meshes.iter().map(adjacency).collect(),
        levels: meshes,
        pool_maps,
        reached_coarse_target: reached_target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{normalize, primitives};

    #[test]
    fn fit_is_idempotent_on_surface() {
        let sphere = primitives::icosphere(2);
        let fitted = fit_to_reference(&sphere, &sphere).unwrap();
        for (a, b) in fitted.vertices().iter().zip(sphere.vertices()) {
            assert!((a - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn icosahedron_fit_to_sphere_mesh() {
        let sphere = primitives::icosphere(3);
        let ico = primitives::icosahedron().with_vertices(
            primitives::icosahedron().vertices().iter().map(|v| v * 0.5).collect(),
        );
        let fitted = fit_to_reference(&ico.unwrap(), &sphere).unwrap();
        let bvh = Bvh::new(&sphere);
        for v in fitted.vertices() {
            assert!(bvh.closest_point(v).unwrap().distance <= 1e-9);
        }
    }

    #[test]
    fn origin_fits_onto_cube_face() {
        let cube = primitives::cube();
        let single = TriMesh::from_parts_unchecked(vec![Point3::zeros(); 1], vec![]);
        let fitted = fit_with_bvh(&single, &Bvh::new(&cube)).unwrap();
        assert!((fitted.vertices()[0].amax() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fitting_never_increases_distance() {
        let sphere = primitives::icosphere(3);
        let bvh = Bvh::new(&sphere);
        let (fine, _) = subdivide_ptq(&primitives::cube());
        let fitted = fit_with_bvh(&fine, &bvh).unwrap();
        for (before, after) in fine.vertices().iter().zip(fitted.vertices()) {
            let d0 = bvh.closest_point(before).unwrap().distance;
            let d1 = bvh.closest_point(after).unwrap().distance;
            assert!(d1 <= d0 + 1e-12);
        }
    }

    #[test]
    fn factor_laws_across_levels() {
        let sphere = normalize(&primitives::icosphere(4)).unwrap();
        for scheme in [Scheme::Sqrt3, Scheme::Ptq] {
            let shape = build_polyshape(&sphere, scheme, 3, 400).unwrap();
            assert_eq!(shape.level_count(), 4);
            let f0 = shape.levels[0].face_count();
            let k = scheme.face_factor();
            for (l, m) in shape.levels.iter().enumerate() {
                assert_eq!(m.face_count(), f0 * k.pow(l as u32));
                assert_eq!(m.euler_characteristic(), 2);
                assert!(m.vertices().iter().all(|v| v.amax() <= 1.0));
            }
            for (k, map) in shape.pool_maps.iter().enumerate() {
                assert_eq!(map.coarse_count(), shape.levels[k].vertex_count());
                assert_eq!(map.fine_count(), shape.levels[k + 1].vertex_count());
            }
        }
    }

    #[test]
    fn save_load_round_trip() {
        let sphere = normalize(&primitives::icosphere(2)).unwrap();
        let shape = build_polyshape(&sphere, Scheme::Sqrt3, 2, 60).unwrap();
        let dir = tempfile::tempdir().unwrap();
        shape.save(dir.path(), Some("sphere")).unwrap();
        let back = MultiResShape::load(dir.path()).unwrap();
        assert_eq!(back, shape);
    }
}
