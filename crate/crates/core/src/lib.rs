//! Layer-wise relevance propagation on small MNIST CNNs, with amplitude
//! filters for rectifying relevance maps and metrics for judging them.
//!
//! ```no_run
//! use lrplab::{explain, heatmap_2d, FilterPlan, LrpRule, Model, ModelName, Tensor};
//!
//! let model = Model::named(ModelName::S1, 0);
//! let x = Tensor::zeros(vec![1, 28, 28]);
//! let trace = model.forward_with_trace(&x)?;
//! let rel = explain(&model, &trace, None, LrpRule::default(), &FilterPlan::identity())?;
//! let heat = heatmap_2d(rel.input_relevance())?;
//! # Ok::<(), lrplab::Error>(())
//! ```

pub mod bundle;
pub mod data;
pub mod error;
pub mod filters;
pub mod lrp;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod tensor;

pub use bundle::Bundle;
pub use data::{Dataset, Sample, Split};
pub use error::{Error, Result};
pub use filters::{apply_filter, compose_plan, r_max, FilterPlan, FilterSpec};
pub use lrp::{explain, fractional_view, heatmap_2d, LrpRule, RelevanceMap, RelevanceTrace};
pub use metrics::{mean_power, LayerMp, MpReport, TPolicy};
pub use nn::{ActivationTrace, AdamConfig, AdamState, Checkpoint, Model, ModelName};
pub use tensor::Tensor;
