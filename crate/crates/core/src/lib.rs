//! Hierarchical multi-label classification toolkit.
//!
//! The crate implements a hierarchical binary cross-entropy (HBCE) loss,
//! standard BCE plus a scaled penalty for predictions where a child label is
//! positive while its parent is not, together with everything needed to
//! exercise it end to end at desk scale:
//!
//! * [`taxonomy`]: parent/child label graphs, a line-based text format,
//!   validation, and the derived "Uncertain" label rule.
//! * [`penalty`]: per-edge penalty tables, either a fixed constant or a
//!   Laplace-smoothed estimate of `P(child=1 | parent=0)` from labels.
//! * [`loss`]: the HBCE loss and its gradient, with a hard indicator or a
//!   smooth logistic surrogate around the decision threshold.
//! * [`nn`]: a small conv, GAP, dense, dropout, sigmoid classifier with
//!   backprop, Adam, reduce-on-plateau, early stopping, and checkpointing.
//! * [`uncertainty`]: Monte Carlo dropout prediction summaries.
//! * [`explain`]: class activation heatmaps with threshold clipping and
//!   discretized grayscale/color export.
//! * [`metrics`]: AUROC (rank-based with tie handling), aggregation,
//!   hierarchy violation rate, and a paired t-test.
//! * [`synthdata`]: seeded synthetic datasets with controllable
//!   parent-to-child label conditionals and label-correlated image patches.

pub mod explain;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod penalty;
pub mod pgm;
pub mod synthdata;
pub mod taxonomy;
pub mod tensor;
pub mod uncertainty;

pub(crate) mod seeding;

pub use explain::{export_heatmap, grad_cam, Heatmap, HeatmapState};
pub use loss::{IndicatorMode, LossConfig, LossValue};
pub use nn::{Model, ModelConfig, TrainConfig};
pub use penalty::{LabelMatrix, PenaltyStrategy, PenaltyTable};
pub use synthdata::{AugmentConfig, Dataset, GenConfig, Split};
pub use taxonomy::Taxonomy;
pub use tensor::Tensor;
pub use uncertainty::{mc_predict, McSummary};
