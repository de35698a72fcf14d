//! Scoring math shared by the harness and the report.

pub mod capacity;
pub mod frechet;
pub mod inception;
pub mod linalg;
pub mod normalize;
pub mod summary;

pub use capacity::{fitting_capacity, per_class_relative, FittingCapacity};
pub use frechet::{frechet_distance, GaussianMoments, COVARIANCE_JITTER};
pub use inception::{diff_is, inception_score, inception_terms, InceptionTerms, ProbMatrix};
pub use linalg::{matrix_sqrt_psd, SymMatrix};
pub use normalize::{normalize_scores, MetricKind};
pub use summary::{boxplot_stats, ScoreSummary};
