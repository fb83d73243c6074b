//! Federated learning under stragglers with privacy-flexible data sharing.
//!
//! * [`hetero`]: IID, single-class and Dirichlet label partitions.
//! * [`sharing`]: non-private marking, randomized replication, and the
//!   expected heterogeneity after sharing.
//! * [`coding`]: the weighted gradient-coding estimator, its exact moments and
//!   the variance-reduction bound.
//! * [`model`]: softmax regression.
//! * [`ingest`]: MNIST IDX files and synthetic data.
//! * [`harness`]: trials, experiments, validation and result files.
//!
//! Closed forms are generic over [`Scalar`] and evaluate exactly on
//! [`Rational`]; samplers and training run on `f64`.

pub mod coding;
pub mod domain;
pub mod error;
pub mod harness;
pub mod hetero;
pub mod ingest;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod sharing;

pub use coding::{GradientEstimate, GradientSet, LambdaTable, Participation, SumsReport};
pub use domain::{Assignment, ClientSet, Example, ProportionVector};
pub use error::{Error, Result};
pub use rng::RngStream;
pub use scalar::{Real, Scalar};
pub use sharing::ShareConfig;

/// Exact rational used by the closed-form tests.
pub type Rational = num_rational::Ratio<i128>;

pub type Model = model::SoftmaxRegression<f64>;
pub type Model32 = model::SoftmaxRegression<f32>;
pub type Gradients = GradientSet<f64>;
pub type Gradients32 = GradientSet<f32>;
pub type Proportions = ProportionVector<f64>;
pub type Lambdas = LambdaTable<f64>;
pub type RationalLambdas = LambdaTable<Rational>;
