//! Superpixel graphs: k-means over intensity and position, one node per
//! cluster, edges between clusters that touch.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::digits::GrayImage;
use crate::error::{Error, Result};
use crate::mesh::VertexAdjacency;
use crate::net::NetInput;
use crate::polyshape::{read_json, write_json};

pub const DEFAULT_NODES: usize = 75;
const ITERATIONS: usize = 10;
/// Weight of squared grid-normalized distance against squared intensity
/// difference.
const COMPACTNESS: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub feat: Vec<f64>,
    pub pos: [f64; 2],
}

/// A labelled graph whose node features and positions lie in [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSample {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<[usize; 2]>,
    pub label: usize,
}

impl GraphSample {
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(Error::Dataset("graph has no nodes".into()));
        }
        let width = self.nodes[0].feat.len();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.feat.len() != width {
                return Err(Error::Dataset(format!("node {i} has {} features, expected {width}", node.feat.len())));
            }
            if node.feat.iter().chain(&node.pos).any(|v| !(-1.0..=1.0).contains(v)) {
                return Err(Error::Dataset(format!("node {i} has values outside [-1, 1]")));
            }
        }
        if let Some(e) = self.edges.iter().find(|[a, b]| *a >= n || *b >= n || a == b) {
            return Err(Error::Dataset(format!("invalid edge {e:?} for {n} nodes")));
        }
        Ok(())
    }

    /// Input channels: node features followed by the two position coordinates.
    pub fn channels(&self) -> usize {
        self.nodes.first().map_or(0, |n| n.feat.len() + 2)
    }

    pub fn adjacency(&self) -> Result<VertexAdjacency> {
        VertexAdjacency::from_edges(self.nodes.len(), self.edges.iter().map(|&[a, b]| (a, b)))
    }

    pub fn to_input(&self) -> Result<NetInput> {
        self.validate()?;
        let c = self.channels();
        let features = Array2::from_shape_fn((self.nodes.len(), c), |(v, k)| {
            let node = &self.nodes[v];
            if k < node.feat.len() {
                node.feat[k]
            } else {
                node.pos[k - node.feat.len()]
            }
        });
        NetInput::from_graph(features, &self.adjacency()?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let g: Self = read_json(path)?;
        g.validate()?;
        Ok(g)
    }
}

fn initial_centers(img: &GrayImage, n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let (w, h) = (img.width as f64, img.height as f64);
    let rows = ((n as f64 * h / w).sqrt().round() as usize).clamp(1, n);
    let spacing = (w * h / n as f64).sqrt();
    let mut centers = Vec::with_capacity(n);
    for r in 0..rows {
        let count = (r + 1) * n / rows - r * n / rows;
        for c in 0..count {
            let x = ((c as f64 + 0.5) * w / count as f64 + rng.gen_range(-0.25..0.25) * spacing).clamp(0.0, w - 1.0);
            let y = ((r as f64 + 0.5) * h / rows as f64 + rng.gen_range(-0.25..0.25) * spacing).clamp(0.0, h - 1.0);
            let intensity = img.get(x.round() as usize, y.round() as usize);
            centers.push([intensity, x, y]);
        }
    }
    centers
}

fn distance(c: &[f64; 3], p: &[f64; 3], spatial: f64) -> f64 {
    let di = c[0] - p[0];
    let dx = c[1] - p[1];
    let dy = c[2] - p[2];
    di * di + spatial * (dx * dx + dy * dy)
}

/// Nearest center per pixel, ties to the lower cluster index.
fn assign(points: &[[f64; 3]], centers: &[[f64; 3]], spatial: f64) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, c) in centers.iter().enumerate() {
                let d = distance(c, p, spatial);
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Moves the worst-fitting pixel of the largest cluster into each empty one.
fn fill_empty(points: &[[f64; 3]], centers: &[[f64; 3]], labels: &mut [usize], spatial: f64) {
    let n = centers.len();
    loop {
        let mut sizes = vec![0usize; n];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let largest = (0..n).max_by_key(|&k| (sizes[k], std::cmp::Reverse(k))).expect("clusters");
        let worst = (0..points.len())
            .filter(|&i| labels[i] == largest)
            .max_by(|&a, &b| {
                distance(&centers[largest], &points[a], spatial)
                    .total_cmp(&distance(&centers[largest], &points[b], spatial))
                    .then(b.cmp(&a))
            })
            .expect("largest cluster is non-empty");
        labels[worst] = empty;
    }
}

/// Clusters `img` into exactly `n_nodes` superpixels. Node features are the
/// mean intensity mapped to [-1, 1]; positions are centroids mapped to
/// [-1, 1]². Deterministic for a fixed seed.
pub fn generate_superpixel_graph(img: &GrayImage, n_nodes: usize, label: usize, seed: u64) -> Result<GraphSample> {
    let pixels = img.width * img.height;
    if n_nodes == 0 || pixels < n_nodes {
        return Err(Error::ImageTooSmall { pixels, nodes: n_nodes });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<[f64; 3]> = (0..pixels)
        .map(|i| [img.pixels[i], (i % img.width) as f64, (i / img.width) as f64])
        .collect();
    let spacing2 = pixels as f64 / n_nodes as f64;
    let spatial = COMPACTNESS / spacing2;
    let mut centers = initial_centers(img, n_nodes, &mut rng);
    let mut labels = assign(&points, &centers, spatial);
    for _ in 0..ITERATIONS {
        fill_empty(&points, &centers, &mut labels, spatial);
        let mut sums = vec![[0.0; 3]; n_nodes];
        let mut counts = vec![0usize; n_nodes];
        for (p, &l) in points.iter().zip(&labels) {
            for k in 0..3 {
                sums[l][k] += p[k];
            }
            counts[l] += 1;
        }
        for ((c, s), &n) in centers.iter_mut().zip(&sums).zip(&counts) {
            *c = [s[0] / n as f64, s[1] / n as f64, s[2] / n as f64];
        }
        let next = assign(&points, &centers, spatial);
        if next == labels {
            break;
        }
        labels = next;
    }
    fill_empty(&points, &centers, &mut labels, spatial);

    let mut sums = vec![[0.0; 3]; n_nodes];
    let mut counts = vec![0usize; n_nodes];
    for (p, &l) in points.iter().zip(&labels) {
        for k in 0..3 {
            sums[l][k] += p[k];
        }
        counts[l] += 1;
    }
    let to_unit = |v: f64, extent: usize| (2.0 * (v + 0.5) / extent as f64 - 1.0).clamp(-1.0, 1.0);
    let nodes = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| {
            let n = n as f64;
            GraphNode {
                feat: vec![(2.0 * s[0] / n - 1.0).clamp(-1.0, 1.0)],
                pos: [to_unit(s[1] / n, img.width), to_unit(s[2] / n, img.height)],
            }
        })
        .collect();

    let mut edges = BTreeSet::new();
    for y in 0..img.height {
        for x in 0..img.width {
            let a = labels[y * img.width + x];
            let mut link = |b: usize| {
                if a != b {
                    edges.insert([a.min(b), a.max(b)]);
                }
            };
            if x + 1 < img.width {
                link(labels[y * img.width + x + 1]);
            }
            if y + 1 < img.height {
                link(labels[(y + 1) * img.width + x]);
            }
        }
    }
    Ok(GraphSample {
        nodes,
        edges: edges.into_iter().collect(),
        label,
    })
}
