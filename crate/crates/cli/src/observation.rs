//! Observation and action JSON records.
//!
//! ```json
//! {"points": [[x, y, z], ...], "labels": [0, 1, ...],
//!  "proprio": {"position": [x, y, z], "orientation": [9 row-major], "gripper": 0.04}}
//! ```

use std::path::Path;

use equicanon_core::policy::Observation;
use equicanon_core::{PointCloud, Pose, Rotation, Vec3};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::fsutil;

const ROTATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    pub position: [f64; 3],
    /// Row-major 3×3 rotation.
    pub orientation: [f64; 9],
    pub gripper: f64,
}

impl PoseRecord {
    pub fn from_pose(p: &Pose) -> Self {
        let m = p.orientation.matrix();
        let mut orientation = [0.0; 9];
        for (r, row) in m.iter().enumerate() {
            orientation[3 * r..3 * r + 3].copy_from_slice(row);
        }
        PoseRecord { position: p.position.to_array(), orientation, gripper: p.gripper }
    }

    pub fn to_pose(&self) -> Result<Pose> {
        let o = self.orientation;
        let m = [[o[0], o[1], o[2]], [o[3], o[4], o[5]], [o[6], o[7], o[8]]];
        let rotation = Rotation::from_matrix(m, ROTATION_TOL)
            .map_err(|e| CliError::Data(format!("proprio.orientation: {e}")))?;
        let position = Vec3::from_array(self.position);
        if !position.is_finite() || !self.gripper.is_finite() {
            return Err(CliError::Data("proprio: non-finite value".into()));
        }
        Ok(Pose::new(position, rotation, self.gripper))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationRecord {
    pub points: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<i64>>,
    pub proprio: PoseRecord,
}

impl ObservationRecord {
    pub fn from_observation(o: &Observation) -> Self {
        ObservationRecord {
            points: o.cloud.points.iter().map(|p| p.to_array()).collect(),
            labels: o.cloud.labels.clone(),
            proprio: PoseRecord::from_pose(&o.proprio),
        }
    }

    pub fn to_observation(&self) -> Result<Observation> {
        let points: Vec<Vec3> = self.points.iter().map(|&a| Vec3::from_array(a)).collect();
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(CliError::Data(format!("points[{i}]: non-finite coordinate")));
        }
        let cloud = match &self.labels {
            Some(l) => PointCloud::with_labels(points, l.clone()).map_err(|e| CliError::Data(format!("labels: {e}")))?,
            None => PointCloud::new(points),
        };
        Ok(Observation { cloud, proprio: self.proprio.to_pose()? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub position: [f64; 3],
    pub orientation: [f64; 9],
    pub gripper: f64,
    pub degenerate_flag: bool,
}

impl ActionRecord {
    pub fn new(action: &Pose, degenerate: bool) -> Self {
        let p = PoseRecord::from_pose(action);
        ActionRecord { position: p.position, orientation: p.orientation, gripper: p.gripper, degenerate_flag: degenerate }
    }
}

pub fn parse_observation(text: &str) -> Result<Observation> {
    let rec: ObservationRecord = serde_json::from_str(text).map_err(|e| CliError::Data(e.to_string()))?;
    rec.to_observation()
}

pub fn read_observation(path: &Path) -> Result<Observation> {
    parse_observation(&fsutil::read_to_string(path)?).map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    fsutil::write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_proprio_names_the_field() {
        let e = parse_observation(r#"{"points": [[0, 0, 0]], "labels": [1]}"#).unwrap_err();
        assert!(e.to_string().contains("proprio"), "{e}");
        assert!(matches!(e, CliError::Data(_)));
    }

    #[test]
    fn roundtrip() {
        let r = Rotation::from_axis_angle(Vec3::new(1.0, 2.0, 3.0).try_normalize(1e-12).unwrap(), 0.7);
        let o = Observation {
            cloud: PointCloud::with_labels(vec![Vec3::new(1.0, 2.0, 3.0), Vec3::ZERO], vec![1, 0]).unwrap(),
            proprio: Pose::new(Vec3::new(0.1, 0.2, 0.3), r, 0.04),
        };
        let text = serde_json::to_string(&ObservationRecord::from_observation(&o)).unwrap();
        assert_eq!(parse_observation(&text).unwrap(), o);
    }

    #[test]
    fn bad_orientation_is_rejected() {
        let e = parse_observation(
            r#"{"points": [[0, 0, 0]], "proprio": {"position": [0, 0, 0], "orientation": [2, 0, 0, 0, 1, 0, 0, 0, 1], "gripper": 0}}"#,
        )
        .unwrap_err();
        assert!(e.to_string().contains("orientation"), "{e}");
        let e = parse_observation(r#"{"points": [[0, 0]], "proprio": {"position": [0, 0, 0], "orientation": [1, 0, 0, 0, 1, 0, 0, 0, 1], "gripper": 0}}"#).unwrap_err();
        assert!(matches!(e, CliError::Data(_)));
    }
}
