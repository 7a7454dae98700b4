//! Retrieval by L1 distance between softmax descriptors, scored by mAP.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::layers::softmax;
use crate::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub ranking: Vec<Ranked>,
    pub average_precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub queries: Vec<QueryResult>,
    pub mean_average_precision: f64,
}

/// Row-wise softmax of logits.
pub fn descriptors(logits: &FeatureMatrix) -> FeatureMatrix {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let p = softmax(row.as_slice().expect("standard layout"));
        row.assign(&ndarray::ArrayView1::from(&p));
    }
    out
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Mean of precision@k over the ranks k holding a relevant item; zero when
/// nothing is relevant.
pub fn average_precision(relevant: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &r) in relevant.iter().enumerate() {
        if r {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// Expected AP of a uniformly random ranking of `gallery` items of which
/// `relevant` are relevant.
pub fn expected_random_ap(gallery: usize, relevant: usize) -> f64 {
    if relevant == 0 || gallery == 0 {
        return 0.0;
    }
    let g = gallery as f64;
    if gallery == 1 {
        return 1.0;
    }
    let h: f64 = (1..=gallery).map(|k| 1.0 / k as f64).sum();
    h / g + (relevant as f64 - 1.0) * (g - h) / (g * (g - 1.0))
}

/// Ranks the gallery for each query by ascending L1 distance, ties by gallery
/// index. Relevance is label equality.
pub fn retrieve(
    queries: &FeatureMatrix,
    query_labels: &[usize],
    gallery: &FeatureMatrix,
    gallery_labels: &[usize],
) -> Result<RetrievalResult> {
    if gallery.nrows() == 0 {
        return Err(Error::EmptyGallery);
    }
    if queries.ncols() != gallery.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "query descriptors have {} dims, gallery has {}",
            queries.ncols(),
            gallery.ncols()
        )));
    }
    if queries.nrows() != query_labels.len() || gallery.nrows() != gallery_labels.len() {
        return Err(Error::ShapeMismatch("descriptor and label counts differ".into()));
    }
    let results: Vec<QueryResult> = (0..queries.nrows())
        .into_par_iter()
        .map(|q| {
            let query = queries.row(q);
            let query = query.as_slice().expect("standard layout");
            let mut ranking: Vec<Ranked> = gallery
                .rows()
                .into_iter()
                .enumerate()
                .map(|(index, g)| Ranked {
                    index,
                    distance: l1(query, g.as_slice().expect("standard layout")),
                })
                .collect();
            ranking.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index)));
            let relevant: Vec<bool> = ranking.iter().map(|r| gallery_labels[r.index] == query_labels[q]).collect();
            QueryResult {
                average_precision: average_precision(&relevant),
                ranking,
            }
        })
        .collect();
    let mean_average_precision = if results.is_empty() {
        0.0
    } else {
        results.iter().map(|r| r.average_precision).sum::<f64>() / results.len() as f64
    };
    Ok(RetrievalResult {
        queries: results,
        mean_average_precision,
    })
}
