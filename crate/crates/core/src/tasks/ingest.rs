//! Batch conversion of a labelled mesh tree into serialized pyramids.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{clean, load_mesh, normalize, MeshFormat, DEFAULT_WELD_TOLERANCE};
use crate::polyshape::{build_polyshape, read_json, write_json, LevelCounts, Scheme};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub const ALL: [Split; 2] = [Split::Train, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub scheme: Scheme,
    pub levels: usize,
    pub coarse_target: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeEntry {
    /// Input path relative to the dataset root.
    pub source: String,
    pub class: String,
    pub label: usize,
    pub split: Split,
    /// Output directory relative to the manifest.
    pub output: String,
    pub levels: Vec<LevelCounts>,
    pub reached_coarse_target: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedEntry {
    pub source: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshManifest {
    pub schema_version: u32,
    pub kind: String,
    pub scheme: Scheme,
    pub levels: usize,
    pub coarse_target: usize,
    pub classes: Vec<String>,
    pub shapes: Vec<ShapeEntry>,
    pub failed: Vec<FailedEntry>,
}

impl MeshManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        read_json(&dir.join(MANIFEST_FILE))
    }
}

struct Job {
    path: PathBuf,
    source: String,
    class: String,
    label: usize,
    split: Split,
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    out.sort();
    Ok(out)
}

fn discover(root: &Path) -> Result<(Vec<String>, Vec<Job>)> {
    let mut classes = Vec::new();
    let mut jobs = Vec::new();
    for class_dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let class = class_dir.file_name().expect("dir entry").to_string_lossy().into_owned();
        let label = classes.len();
        let before = jobs.len();
        for split in Split::ALL {
            let dir = class_dir.join(split.as_str());
            if !dir.is_dir() {
                continue;
            }
            for path in sorted_entries(&dir)? {
                if !path.is_file() || MeshFormat::from_path(&path).is_none() {
                    continue;
                }
                let source = path.strip_prefix(root).expect("under root").to_string_lossy().replace('\\', "/");
                jobs.push(Job {
                    path,
                    source,
                    class: class.clone(),
                    label,
                    split,
                });
            }
        }
        if jobs.len() == before {
            return Err(Error::Dataset(format!("class `{class}` has no meshes")));
        }
        classes.push(class);
    }
    if classes.is_empty() {
        return Err(Error::Dataset(format!("no class directories under {}", root.display())));
    }
    Ok((classes, jobs))
}

/// Prepares `out` for writing: refuses to touch an existing non-empty
/// directory unless `force`, and with `force` clears a previous run's output.
pub fn prepare_output(out: &Path, force: bool) -> Result<()> {
    let occupied = out.is_dir() && fs::read_dir(out).map_err(|e| Error::io(out, e))?.next().is_some();
    if occupied {
        if !force {
            return Err(Error::OutputExists(out.to_path_buf()));
        }
        if out.join(MANIFEST_FILE).is_file() {
            fs::remove_dir_all(out).map_err(|e| Error::io(out, e))?;
        }
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

/// Per-mesh failure stays in the manifest; only errors writing outputs abort.
fn process(job: &Job, out: &Path, opts: &IngestOptions) -> Result<std::result::Result<ShapeEntry, String>> {
    let stem = job.path.file_stem().expect("file").to_string_lossy().into_owned();
    let rel = format!("{}/{}/{}", job.class, job.split.as_str(), stem);
    let built = (|| {
        let format = MeshFormat::from_path(&job.path).expect("filtered by extension");
        let mesh = load_mesh(&job.path, format)?;
        let mesh = normalize(&clean(&mesh, DEFAULT_WELD_TOLERANCE)?)?;
        build_polyshape(&mesh, opts.scheme, opts.levels, opts.coarse_target)
    })();
    let shape = match built {
        Ok(s) => s,
        Err(e) if e.is_environmental() => return Err(e),
        Err(e) => {
            log::warn!("{}: {e}", job.source);
            return Ok(Err(e.to_string()));
        }
    };
    shape.save(&out.join(&rel), Some(&job.source))?;
    Ok(Ok(ShapeEntry {
        source: job.source.clone(),
        class: job.class.clone(),
        label: job.label,
        split: job.split,
        output: rel,
        levels: shape
            .levels
            .iter()
            .map(|m| LevelCounts {
                vertices: m.vertex_count(),
                faces: m.face_count(),
            })
            .collect(),
        reached_coarse_target: shape.reached_coarse_target,
    }))
}

/// Converts every `class/{train,test}/*.{off,obj}` under `root` into a
/// pyramid under `out` and writes the manifest. Output order follows the
/// sorted input paths regardless of scheduling.
pub fn ingest_mesh_dataset(root: &Path, out: &Path, opts: &IngestOptions, force: bool) -> Result<MeshManifest> {
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset root is not a directory"),
        ));
    }
    let (classes, jobs) = discover(root)?;
    prepare_output(out, force)?;
    log::info!("processing {} meshes in {} classes", jobs.len(), classes.len());
    let results: Vec<_> = jobs
        .par_iter()
        .map(|job| process(job, out, opts))
        .collect::<Result<_>>()?;
    let mut manifest = MeshManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        kind: "mesh".into(),
        scheme: opts.scheme,
        levels: opts.levels,
        coarse_target: opts.coarse_target,
        classes,
        shapes: Vec::new(),
        failed: Vec::new(),
    };
    for (job, r) in jobs.iter().zip(results) {
        match r {
            Ok(entry) => manifest.shapes.push(entry),
            Err(error) => manifest.failed.push(FailedEntry {
                source: job.source.clone(),
                error,
            }),
        }
    }
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
