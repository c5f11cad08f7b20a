//! Pruning the inter-robot loop closure search space with range and
//! angle-of-arrival measurements taken over the communication link.
//!
//! Pipeline: solve each robot's odometry chain, select the direct-path
//! realization of the multipath bearings by pairwise consistency, search for
//! trajectory overlap with buffered bounding boxes, then gate candidate pose
//! pairs by Mahalanobis distance.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod candidates;
pub mod error;
pub mod factors;
pub mod io;
pub mod lie;
pub mod overlap;
pub mod pcm;
pub mod pipeline;
pub mod pose_graph;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Pose = lie::Pose<f64>;
pub type Twist = lie::Twist<f64>;
pub type Covariance6 = lie::Covariance6<f64>;
pub type PoseF32 = lie::Pose<f32>;
pub type TwistF32 = lie::Twist<f32>;
pub type Covariance6F32 = lie::Covariance6<f32>;
pub type RangeFactor = factors::RangeFactor<f64>;
pub type AoaMode = factors::AoaMode<f64>;
pub type CommMeasurement = factors::CommMeasurement<f64>;
pub type OdometryFactor = factors::OdometryFactor<f64>;
pub use factors::{Endpoint, Realization};
