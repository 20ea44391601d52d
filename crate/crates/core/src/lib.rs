//! Unsupervised dimension reduction for tabular numeric data.
//!
//! Algorithms: principal components ([`pca`]), locally linear embedding
//! ([`lle`]), t-SNE ([`tsne`]), UMAP ([`umap`]), self-organizing maps
//! ([`som`]) and autoencoders ([`autoencoder`]). Supporting modules cover
//! CSV ingestion with kNN imputation ([`ingest`]), exact neighbor graphs
//! ([`neighbors`]) and embedding-quality scores ([`metrics`]).

pub mod autoencoder;
pub mod data;
pub mod error;
pub mod ingest;
pub mod lle;
pub mod metrics;
pub mod neighbors;
pub mod pca;
pub mod som;
pub mod tsne;
pub mod umap;

pub use data::{DataMatrix, Embedding, RngStream, SplitSpec};
pub use error::{Error, ErrorKind, Result};
pub use neighbors::{Metric, NeighborGraph};
