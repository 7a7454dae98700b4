//! Synthetic labelled mesh collections in the `class/{train,test}/*.off`
//! layout.

use std::fs;
use std::path::Path;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{primitives, write_off, Point3, TriMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyClass {
    Sphere,
    Box,
    Cylinder,
}

impl ToyClass {
    pub const ALL: [ToyClass; 3] = [ToyClass::Sphere, ToyClass::Box, ToyClass::Cylinder];

    pub fn name(self) -> &'static str {
        match self {
            ToyClass::Sphere => "sphere",
            ToyClass::Box => "box",
            ToyClass::Cylinder => "cylinder",
        }
    }

    /// A randomly scaled instance, upright with a random turn about z.
    pub fn sample<R: Rng>(self, rng: &mut R) -> TriMesh {
        let mesh = match self {
            ToyClass::Sphere => {
                let s = rng.gen_range(0.5..1.0);
                let m = primitives::icosphere(2);
                let v = m.vertices().iter().map(|p| p * s).collect();
                m.with_vertices(v).expect("same count")
            }
            ToyClass::Box => {
                let half = Point3::new(rng.gen_range(0.3..1.0), rng.gen_range(0.3..1.0), rng.gen_range(0.3..1.0));
                primitives::subdivided_box(half, 5)
            }
            ToyClass::Cylinder => {
                let radius = rng.gen_range(0.3..0.8);
                let half_height = rng.gen_range(0.4..1.0);
                primitives::cylinder(radius, half_height, 24, 6)
            }
        };
        let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), rng.gen_range(0.0..std::f64::consts::TAU));
        let v = mesh.vertices().iter().map(|p| rot * p).collect();
        mesh.with_vertices(v).expect("same count")
    }
}

impl std::str::FromStr for ToyClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ToyClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown toy class `{s}`")))
    }
}

/// Writes `per_class_train` and `per_class_test` meshes for every class.
/// Files are named `NNN.off`; the same seed gives the same files.
pub fn generate_toy_dataset(
    root: &Path,
    classes: &[ToyClass],
    per_class_train: usize,
    per_class_test: usize,
    seed: u64,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for &class in classes {
        for (split, count) in [("train", per_class_train), ("test", per_class_test)] {
            let dir = root.join(class.name()).join(split);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for i in 0..count {
                write_off(&class.sample(&mut rng), &dir.join(format!("{i:03}.off")))?;
            }
        }
    }
    Ok(())
}
