//! Pose-object graph construction, graph encoding, flow-matching action
//! generation and structured reasoning supervision for bimanual manipulation,
//! with a synthetic scene generator that serves as ground truth for every
//! stage.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the double-precision instantiation used by the CLI and
//! the file formats.
// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod context;
pub mod cot;
pub mod dataset;
pub mod error;
pub mod flow;
pub mod frame;
pub mod geometry;
pub mod gnn;
pub mod graph;
pub mod infer;
pub mod io;
pub mod kinematics;
pub mod linalg;
pub mod projection;
pub mod rng;
pub mod scalar;
pub mod selfcheck;
pub mod sim;
pub mod stream_sync;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use frame::{validate_frame, Timestamp, ValidationReport, Violation};
pub use graph::{adjacency_matrix, build_graph, GraphOptions, NodeKind};
pub use rng::SeededRng;
pub use scalar::Scalar;

pub type Point3 = geometry::Point3<f64>;
pub type RigidTransform = geometry::RigidTransform<f64>;
pub type CameraIntrinsics = geometry::CameraIntrinsics<f64>;
pub type Pixel = projection::Pixel<f64>;
pub type DepthGrid = projection::DepthGrid<f64>;
pub type BoundingBox = frame::BoundingBox<f64>;
pub type JointConfig = frame::JointConfig<f64>;
pub type FrameRecord = frame::FrameRecord<f64>;
pub type DhLink = kinematics::DhLink<f64>;
pub type KinematicChain = kinematics::KinematicChain<f64>;
pub type PoseObjectGraph = graph::PoseObjectGraph<f64>;
pub type GraphNode = graph::GraphNode<f64>;
pub type Matrix = linalg::Matrix<f64>;
pub type GnnWeights = gnn::GnnWeights<f64>;
pub type ActionChunk = flow::ActionChunk<f64>;
pub type FlowExpert = flow::FlowExpert<f64>;
pub type CotHead = cot::CotHead<f64>;

pub use cot::{CotLabel, TokenVocab};
pub use infer::{BenchReport, InferenceSchedule};
pub use sim::{Episode, InstructionScenario, Scene};
