//! Evaluation metrics, the naive Bayes baseline and report export.

mod bayes;
mod confusion;
mod regression;
pub mod report;

pub use bayes::{gaussian_nb_fit, gaussian_nb_predict, GaussianNb, VARIANCE_FLOOR};
pub use confusion::{accuracy, confusion, ConfusionMatrix};
pub use regression::{mean_average_error, mean_average_error_over, RegressionReport, SubjectError};
pub use report::{export_report, read_metrics, MetricsFile, RadarRow, TaskReport};
