//! Invertible multi-stage PCA image transform.
//!
//! The library turns images into compact feature vectors through a cascade of
//! per-block PCA projections, and runs the exact linear inverse to reconstruct
//! images from those features. On top of the transform it provides:
//!
//! - [`recon`]: reconstruction post-processing (brightness compensation,
//!   histogram equalization) and compression/deviation metrics,
//! - [`lda`]: a Gaussian MAP linear discriminant classifier over the features,
//! - [`diagnostics`]: feature decorrelation, Gaussianity, and eigenspectrum
//!   reports,
//! - [`io`]: dataset manifests, image loading/preprocessing, and the binary
//!   model/feature file formats.
//!
//! The transform operates on [`cuboid::Cuboid`] values: dense 3-D tensors with
//! two spatial axes and one spectral axis. Each stage partitions the current
//! cuboid into non-overlapping local blocks, projects every flattened block
//! onto the leading eigenvectors of its sample covariance, and restacks the
//! coefficients in the spectral direction for the next stage. The final stage
//! collapses the spatial axes entirely, leaving one coefficient vector per
//! color channel.
//!
//! Everything is deterministic: eigenvalue ordering, tie-breaking, and basis
//! sign conventions are fixed, so refitting on identical inputs reproduces
//! bit-identical models.

pub mod cuboid;
pub mod diagnostics;
pub mod io;
pub mod lda;
pub mod pca;
pub mod pipeline;
pub mod recon;

pub use cuboid::{BlockGrid, Cuboid};
pub use lda::LdaModel;
pub use pca::KernelBlock;
pub use pipeline::{FeatureVector, PipelineSpec, StageSpec, TransformModel};
pub use recon::CompressedRecord;
