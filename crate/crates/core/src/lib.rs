//! Entity resolution for 3D city object meshes.
//!
//! Meshes are featurized into interpretable geometric properties, compared
//! pairwise through property ratios, matched by a tree ensemble, and blocked
//! with a k-d tree over the most important properties.

pub mod bkafi;
pub mod cityjson;
pub mod error;
pub mod eval;
pub mod hull;
pub mod jsonl;
pub mod kdtree;
pub mod matcher;
pub mod mesh;
pub mod pairs;
pub mod pipeline;
pub mod props;
pub mod synth;

pub use bkafi::{
    build_index, generate_candidates, select_blocking_key, BlockingIndex, BlockingKey, CandidatePair, CandidateSet,
    KeyCriterion, KeySource,
};
pub use error::{Error, Result};
pub use eval::{blocking_metrics, matching_metrics, pruning_metrics, GroundTruth, MetricsReport};
pub use matcher::{train, EnsembleKind, MatcherConfig, Prediction, TrainedMatcher};
pub use mesh::{validate_mesh, DatasetRole, MeshDataset, Polygon, PolygonMesh, SourceTag, ValidationReport, Vertex3};
pub use pairs::{estimate_discrepancy, pair_features, pair_features_with, Label, PairFeatureVector, RatioMode};
pub use props::{compute_properties, normalize_log1p, Property, PropertySchema, PropertyVector};
