//! Points, clouds and rigid poses.
//!
//! Coordinates are meters in a z-up frame. Rotations are stored as matrices;
//! configs may give them as yaw/pitch/roll, composed as `Rz(yaw) * Ry(pitch) * Rx(roll)`.

mod io;

pub use io::{load_cloud, read_ply, read_xyz, save_cloud, write_ply, write_xyz, CloudFormat};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        Point3::new(self.x - other.x, self.y - other.y, self.z - other.z).norm()
    }

    fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(p: [f64; 3]) -> Self {
        Self::new(p[0], p[1], p[2])
    }
}

/// An ordered set of points. Order is preserved through I/O.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a cloud, rejecting it whole if any coordinate is NaN or infinite.
    pub fn from_points(points: Vec<Point3>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::Data(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self { points })
    }

    /// Callers guarantee finiteness.
    pub(crate) fn from_points_unchecked(points: Vec<Point3>) -> Self {
        debug_assert!(points.iter().all(Point3::is_finite));
        Self { points }
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn extend(&mut self, other: &PointCloud) {
        self.points.extend_from_slice(&other.points);
    }
}

impl<'a> IntoIterator for &'a PointCloud {
    type Item = &'a Point3;
    type IntoIter = std::slice::Iter<'a, Point3>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

/// Which way [`transform_cloud`] maps points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    WorldToSensor,
    SensorToWorld,
}

/// Rigid sensor pose: `p_world = rotation * p_sensor + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

const ORTHO_TOL: f64 = 1e-9;

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    /// Yaw about +z, then pitch about +y, then roll about +x (`Rz * Ry * Rx`).
    pub fn from_ypr(translation: [f64; 3], yaw: f64, pitch: f64, roll: f64) -> Self {
        let (sy, cy) = yaw.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let (sr, cr) = roll.sin_cos();
        let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
        let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
        Self {
            rotation: rz * ry * rx,
            translation: Vector3::from(translation),
        }
    }

    /// Validates orthonormality and `det = +1` to within 1e-9.
    pub fn from_matrix(rotation: [[f64; 3]; 3], translation: [f64; 3]) -> Result<Self> {
        let r = Matrix3::from_fn(|i, j| rotation[i][j]);
        let pose = Self {
            rotation: r,
            translation: Vector3::from(translation),
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::contract("pose has non-finite entries"));
        }
        let err = (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax();
        if err > ORTHO_TOL {
            return Err(Error::contract(format!("rotation is not orthonormal (|RtR - I| = {err:e})")));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(Error::contract(format!("rotation determinant is {det}, expected +1")));
        }
        Ok(())
    }

    pub fn rotation(&self) -> [[f64; 3]; 3] {
        let r = &self.rotation;
        [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
        ]
    }

    pub fn translation(&self) -> [f64; 3] {
        [self.translation.x, self.translation.y, self.translation.z]
    }

    /// Heading of the sensor x-axis projected onto the world xy-plane.
    pub fn yaw(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn sensor_to_world(&self, p: Point3) -> Point3 {
        Point3::from_vector(self.rotation * p.to_vector() + self.translation)
    }

    pub fn world_to_sensor(&self, p: Point3) -> Point3 {
        Point3::from_vector(self.rotation.transpose() * (p.to_vector() - self.translation))
    }

    pub fn apply(&self, p: Point3, direction: Direction) -> Point3 {
        match direction {
            Direction::SensorToWorld => self.sensor_to_world(p),
            Direction::WorldToSensor => self.world_to_sensor(p),
        }
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PoseDoc {
    Matrix {
        rotation: [[f64; 3]; 3],
        translation: [f64; 3],
    },
    Euler {
        translation: [f64; 3],
        #[serde(default)]
        yaw: f64,
        #[serde(default)]
        pitch: f64,
        #[serde(default)]
        roll: f64,
    },
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        PoseDoc::Matrix {
            rotation: self.rotation(),
            translation: self.translation(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        match PoseDoc::deserialize(deserializer)? {
            PoseDoc::Matrix {
                rotation,
                translation,
            } => Pose::from_matrix(rotation, translation).map_err(serde::de::Error::custom),
            PoseDoc::Euler {
                translation,
                yaw,
                pitch,
                roll,
            } => {
                let pose = Pose::from_ypr(translation, yaw, pitch, roll);
                pose.validate().map_err(serde::de::Error::custom)?;
                Ok(pose)
            }
        }
    }
}

/// Maps every point through `pose`. A cloud with any non-finite point is rejected whole.
pub fn transform_cloud(cloud: &PointCloud, pose: &Pose, direction: Direction) -> Result<PointCloud> {
    pose.validate()?;
    let points = cloud
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if p.is_finite() {
                Ok(pose.apply(*p, direction))
            } else {
                Err(Error::Data(format!("point {i} has a non-finite coordinate")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PointCloud::from_points_unchecked(points))
}
