//! Experiment-aware principal component analysis.
//!
//! Axes are fitted on a designed training matrix (typically group means),
//! the origin is a design-chosen reference, and component scores are scaled
//! by the number of contributing items so that projections from different
//! studies share one unit of distance.

pub mod axes;
pub mod data;
pub mod decomposition;
pub mod error;
pub mod format;
pub mod scores;
pub mod stats;

pub use axes::{build_training, fit, fit_with_rank, load_model, save_model, AxesModel, TrainingMatrix, TrainingSpec};
pub use data::{
    align_variables, center, compute_reference, parse_design, parse_matrix, CenteredMatrix, ExpressionMatrix,
    PolicySpec, ReferencePolicy, ReferenceVector, StudyDesign, VariableSet,
};
pub use decomposition::{align_signs, canonical_signs, svd, SvdFactors};
pub use error::{ExpcaError, Result};
pub use scores::{
    biplot_table, classify, fluctuation, observation_scores, project, scale_observation_scores, scale_variable_scores,
    unit_scores, variable_scores, ClassificationResult, FluctuationMode, ScoreKind, ScoreSet,
};
