//! Lidar scan simulation, terrain feature maps and probabilistic traversability.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod feature_map;
pub mod fusion;
pub mod geom;
pub mod inpaint;
pub mod noising;
pub mod scan_sim;
pub mod scene;
pub mod traversability;

pub use error::{Error, Result};
pub use feature_map::{FeatureMap, FeatureParams, GridSpec};
pub use geom::{Point3, PointCloud, Pose};
pub use fusion::FusedState;
pub use scan_sim::{DepthImage, SensorModel};
pub use traversability::{FeatureDistMap, TravMap, TravThresholds};
