//! Clustering front end and metrics: k-means, the PCA baseline, accuracy
//! under optimal label mapping, normalized mutual information, and the
//! randomized class-subset experiment protocol.

mod assignment;
mod experiment;
mod kmeans;
mod metrics;
mod pca;

pub use experiment::{
    run_experiment, reports_to_csv, ExperimentReport, HyperChoice, HyperGrid, Method, Protocol,
    RepeatRecord, SubsetReport,
};
pub use kmeans::{kmeans, ClusterResult};
pub use metrics::{accuracy, normalized_mutual_information};
pub use pca::pca_reduce;
