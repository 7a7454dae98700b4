//! Processed datasets on disk: mesh pyramids from ingestion or superpixel
//! graphs, both described by a `manifest.json`.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::digits::load_digits;
use super::ingest::{prepare_output, MeshManifest, Split, MANIFEST_FILE, MANIFEST_SCHEMA_VERSION};
use super::superpixel::{generate_superpixel_graph, GraphSample};
use crate::error::{Error, Result};
use crate::net::NetInput;
use crate::polyshape::{read_json, write_json, MultiResShape, Scheme};

/// Side length digits are upsampled to before clustering.
pub const DIGIT_RASTER: usize = 28;

#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub label: usize,
    pub input: NetInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphManifest {
    pub schema_version: u32,
    pub kind: String,
    pub classes: Vec<String>,
    pub node_count: usize,
    pub seed: u64,
    /// Sample files relative to the manifest, per split.
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub classes: Vec<String>,
    /// Pyramid scheme for mesh datasets.
    pub scheme: Option<Scheme>,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

#[derive(Deserialize)]
struct Kind {
    kind: String,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let kind: Kind = read_json(&dir.join(MANIFEST_FILE))?;
        match kind.kind.as_str() {
            "mesh" => Self::load_meshes(dir),
            "graphs" => Self::load_graphs(dir),
            other => Err(Error::Dataset(format!("unknown dataset kind `{other}`"))),
        }
    }

    fn load_meshes(dir: &Path) -> Result<Self> {
        let manifest = MeshManifest::load(dir)?;
        let load_split = |split: Split| -> Result<Vec<Sample>> {
            manifest
                .shapes
                .par_iter()
                .filter(|e| e.split == split)
                .map(|e| {
                    let shape = MultiResShape::load(&dir.join(&e.output))?;
                    Ok(Sample {
                        id: e.output.clone(),
                        label: e.label,
                        input: NetInput::from_shape(&shape),
                    })
                })
                .collect()
        };
        Ok(Self {
            train: load_split(Split::Train)?,
            test: load_split(Split::Test)?,
            classes: manifest.classes,
            scheme: Some(manifest.scheme),
        })
    }

    fn load_graphs(dir: &Path) -> Result<Self> {
        let manifest: GraphManifest = read_json(&dir.join(MANIFEST_FILE))?;
        let classes = manifest.classes.len();
        let load_split = |files: &[String]| -> Result<Vec<Sample>> {
            files
                .par_iter()
                .map(|f| {
                    let g = GraphSample::load(&dir.join(f))?;
                    if g.label >= classes {
                        return Err(Error::InvalidLabel { label: g.label, classes });
                    }
                    Ok(Sample {
                        id: f.trim_end_matches(".json").to_string(),
                        label: g.label,
                        input: g.to_input()?,
                    })
                })
                .collect()
        };
        Ok(Self {
            train: load_split(&manifest.train)?,
            test: load_split(&manifest.test)?,
            classes: manifest.classes,
            scheme: None,
        })
    }

    pub fn split(&self, split: Split) -> &[Sample] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.train
            .first()
            .or(self.test.first())
            .map_or(0, |s| s.input.features.ncols())
    }
}

/// Shuffles the bundled digits with `seed`, upsamples the first
/// `train + test` to 28×28 and writes one superpixel graph per image.
pub fn generate_digit_graphs(
    out: &Path,
    train: usize,
    test: usize,
    nodes: usize,
    seed: u64,
    force: bool,
) -> Result<GraphManifest> {
    let mut digits = load_digits()?;
    if train + test > digits.len() {
        return Err(Error::Config(format!(
            "requested {} graphs but only {} digits are available",
            train + test,
            digits.len()
        )));
    }
    digits.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    digits.truncate(train + test);
    prepare_output(out, force)?;
    for split in Split::ALL {
        let dir = out.join(split.as_str());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let files: Vec<String> = (0..train + test)
        .map(|i| {
            let (split, k) = if i < train { (Split::Train, i) } else { (Split::Test, i - train) };
            format!("{}/{k:05}.json", split.as_str())
        })
        .collect();
    digits
        .par_iter()
        .zip(&files)
        .enumerate()
        .try_for_each(|(i, ((img, label), file))| {
            let big = img.resize_bilinear(DIGIT_RASTER, DIGIT_RASTER);
            let g = generate_superpixel_graph(&big, nodes, *label, seed.wrapping_add(i as u64))?;
            g.save(&out.join(file))
        })?;
    let manifest = GraphManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        kind: "graphs".into(),
        classes: (0..10).map(|d| d.to_string()).collect(),
        node_count: nodes,
        seed,
        train: files[..train].to_vec(),
        test: files[train..].to_vec(),
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::ingest::{ingest_mesh_dataset, IngestOptions};
    use crate::tasks::toy::{generate_toy_dataset, ToyClass};

    #[test]
    fn graph_dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_digit_graphs(dir.path(), 6, 3, 20, 1, false).unwrap();
        assert_eq!((m.train.len(), m.test.len()), (6, 3));
        let ds = Dataset::load(dir.path()).unwrap();
        assert_eq!((ds.train.len(), ds.test.len()), (6, 3));
        assert_eq!(ds.in_channels(), 3);
        assert_eq!(ds.train[0].input.features.nrows(), 20);
        assert!(generate_digit_graphs(&dir.path().join("x"), 1800, 0, 20, 1, false).is_err());
    }

    #[test]
    fn mesh_dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("raw");
        generate_toy_dataset(&raw, &[ToyClass::Sphere, ToyClass::Cylinder], 2, 1, 0).unwrap();
        let opts = IngestOptions {
            scheme: Scheme::Ptq,
            levels: 2,
            coarse_target: 30,
        };
        let out = dir.path().join("out");
        ingest_mesh_dataset(&raw, &out, &opts, false).unwrap();
        let ds = Dataset::load(&out).unwrap();
        assert_eq!(ds.classes, vec!["cylinder", "sphere"]);
        assert_eq!((ds.train.len(), ds.test.len()), (4, 2));
        assert_eq!(ds.train[0].input.level_count(), 3);
        assert_eq!(ds.in_channels(), 6);
        assert_eq!(ds.scheme, Some(Scheme::Ptq));
    }
}
