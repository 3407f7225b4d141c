//! Diagnostic decoding on recorded activations: AUC, regularized linear
//! probes with nested cross-validation, generalization-across-time number
//! decoding, syntactic-depth regression and short-range unit detection.
//!
//! Feature matrices are row-per-sample `Vec<Vec<f64>>`. Decoders z-score
//! their features with statistics of the training fold, and weights are
//! reported in those standardized units.

mod auc;
mod cv;
mod depth;
mod features;
mod gat;
mod linear;

pub use auc::auc;
pub use cv::{kfold, stratified_kfold};
pub use depth::{
    depth_features, depth_regression, depth_regression_from_features, DepthFeatures,
    DepthRegressionConfig, DepthRegressionResult, UnitWeight,
};
pub use features::{stimulus_traces, time_features, StateKind, UnitSelection};
pub use gat::{
    cross_validated_auc, gat_analysis, gat_from_features, identify_sr_units,
    identify_sr_units_from_features, train_number_decoder, DecoderConfig, GatMatrix,
    NumberDecoder, SrCandidate, SrConfig,
};
pub use linear::{fit_classifier, fit_ridge, Backend, LinearFit, Standardizer};
