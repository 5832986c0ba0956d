//! Conjugate Bayesian model (CBM) encoding of high-cardinality categorical
//! features.
//!
//! Each categorical column is modelled per level with a conjugate posterior
//! fitted on the target (Beta for binary, Dirichlet for multiclass and
//! normal-inverse-gamma for regression targets). The first one or two
//! posterior moments of each level replace the level in the encoded matrix,
//! giving a narrow dense representation regardless of cardinality.
//!
//! ```
//! use cbm::{CbmEncoder, Dataset, TaskKind, TargetVector};
//!
//! let data = Dataset::builder()
//!     .categorical("city", &["nyc", "nyc", "nyc", "sf"])
//!     .target(TargetVector::Binary(vec![1, 1, 0, 0]))
//!     .build()?;
//! let encoder = CbmEncoder::fit(&data, TaskKind::Binary, 1)?;
//! let z = encoder.transform(&data)?;
//! assert_eq!(z.row(0), &[0.625]);
//! # Ok::<(), cbm::CbmError>(())
//! ```

pub mod baseline;
pub mod bench;
pub mod conjugate;
pub mod data;
pub mod encoder;
pub mod error;
pub mod learners;
pub mod metrics;
pub mod types;

pub use conjugate::{BetaParams, DirichletParams, NigParams, PosteriorParams};
pub use encoder::{CbmEncoder, FittedColumnEncoding, LevelPosterior};
pub use error::{CbmError, Result};
pub use types::{
    encoded_width, ColumnKind, ColumnSchema, Dataset, EncodedMatrix, MomentCount, TargetVector,
    TaskKind, MISSING_LEVEL,
};
