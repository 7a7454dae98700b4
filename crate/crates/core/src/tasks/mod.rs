//! Dataset generation and ingestion, training, evaluation and retrieval.

mod dataset;
mod digits;
mod eval;
mod ingest;
mod retrieval;
mod superpixel;
mod toy;
mod train;

pub use dataset::{generate_digit_graphs, Dataset, GraphManifest, Sample, DIGIT_RASTER};
pub use digits::{load_digits, GrayImage};
pub use eval::{
    argmax, classification_report, ensemble_evaluate, ensemble_logits, evaluate, predict_logits, read_predictions_csv,
    write_predictions_csv, ClassAccuracy, ClassificationReport, EnsembleHead, Prediction,
};
pub use ingest::{
    ingest_mesh_dataset, prepare_output, FailedEntry, IngestOptions, MeshManifest, ShapeEntry, Split, MANIFEST_FILE,
    MANIFEST_SCHEMA_VERSION,
};
pub use retrieval::{
    average_precision, descriptors, expected_random_ap, l1, retrieve, QueryResult, Ranked, RetrievalResult,
};
pub use superpixel::{generate_superpixel_graph, GraphNode, GraphSample, DEFAULT_NODES};
pub use toy::{generate_toy_dataset, ToyClass};
pub use train::{epoch_batches, train, EpochMetrics, TrainOutcome};
