// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod band;
pub mod coverage;
pub mod crossing;
pub mod error;
pub mod functional;
pub mod measures;
pub mod multidim;
pub mod samples;
pub mod selection;
pub mod special;
pub mod step;
pub mod weight;

pub use band::{build_band, exact_plugin_band, var_bounds, BandMethod, CdfBand};
pub use coverage::DistSpec;
pub use crossing::{BoundMethod, BoundVector};
pub use error::{Error, Result};
pub use samples::{order_statistics, LossSamples, OrderStats};
pub use step::{StepCdf, Tail};
pub use weight::WeightFunction;
