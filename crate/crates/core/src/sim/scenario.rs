//! Simulated room layouts: array poses, calibration points, trajectories,
//! noise and dropout settings. Scenarios load from and save to TOML.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Array placement. `orientation` maps local coordinates to the global
/// frame; its columns are the local axes expressed globally.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayPose {
    pub position: Vector3<f64>,
    pub orientation: Matrix3<f64>,
}

impl ArrayPose {
    pub fn new(position: Vector3<f64>, orientation: Matrix3<f64>) -> Result<Self> {
        let ortho = (orientation.transpose() * orientation - Matrix3::identity()).norm();
        if ortho > 1e-9 || (orientation.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("array orientation must be a proper rotation"));
        }
        Ok(ArrayPose {
            position,
            orientation,
        })
    }

    /// Pose whose local +z points along `facing` and whose local +y is as
    /// close to `up` as possible.
    pub fn facing(position: Vector3<f64>, facing: Vector3<f64>, up: Vector3<f64>) -> Result<Self> {
        let z = facing
            .try_normalize(1e-12)
            .ok_or_else(|| Error::invalid("facing direction is zero"))?;
        let x = up
            .cross(&z)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::invalid("up direction is parallel to facing"))?;
        let y = z.cross(&x);
        Self::new(position, Matrix3::from_columns(&[x, y, z]))
    }
}

/// Which arrays are withheld from an emitted observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DropoutPolicy {
    #[default]
    None,
    /// With `probability`, one array chosen uniformly is dropped.
    OneOf { probability: f64 },
    /// Each array is dropped independently with `probability`.
    Independent { probability: f64 },
}

impl DropoutPolicy {
    fn validate(&self) -> Result<()> {
        match *self {
            DropoutPolicy::None => Ok(()),
            DropoutPolicy::OneOf { probability } | DropoutPolicy::Independent { probability } => {
                if (0.0..=1.0).contains(&probability) {
                    Ok(())
                } else {
                    Err(Error::invalid("dropout probability must be in [0, 1]"))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationPoint {
    pub id: u32,
    pub position: Vector3<f64>,
}

/// Polyline traversed at constant speed.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub name: String,
    pub waypoints: Vec<Vector3<f64>>,
    /// m/s
    pub speed: f64,
}

impl Trajectory {
    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Position after travelling `s` meters, clamped to the ends.
    pub fn position_at(&self, s: f64) -> Vector3<f64> {
        let mut left = s.max(0.0);
        for w in self.waypoints.windows(2) {
            let seg = (w[1] - w[0]).norm();
            if left <= seg && seg > 0.0 {
                return w[0] + (w[1] - w[0]) * (left / seg);
            }
            left -= seg;
        }
        *self.waypoints.last().expect("validated nonempty")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub poses: Vec<ArrayPose>,
    pub calibration_points: Vec<CalibrationPoint>,
    pub trajectories: Vec<Trajectory>,
    /// Room extent from the origin, meters.
    pub room: Vector3<f64>,
    /// Angular noise standard deviation, degrees.
    pub noise_deg: f64,
    /// Snap emitted DOAs to the level-4 search grid.
    pub quantize: bool,
    pub dropout: DropoutPolicy,
    pub seed: u64,
}

impl Scenario {
    pub fn array_count(&self) -> usize {
        self.poses.len()
    }

    pub fn trajectory(&self, name: &str) -> Result<&Trajectory> {
        self.trajectories
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::invalid(format!("no trajectory named `{name}`")))
    }

    pub fn point(&self, id: u32) -> Result<&CalibrationPoint> {
        self.calibration_points
            .iter()
            .find(|p| p.id == id)
            .ok_or_else(|| Error::invalid(format!("no calibration point {id}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.poses.is_empty() || self.poses.len() > crate::fusion::MAX_ARRAYS {
            return Err(Error::invalid("scenario needs 1 to 32 arrays"));
        }
        if self.calibration_points.is_empty() {
            return Err(Error::invalid("scenario needs at least one calibration point"));
        }
        if !(self.noise_deg >= 0.0 && self.noise_deg.is_finite()) {
            return Err(Error::invalid("noise must be a non-negative angle"));
        }
        self.dropout.validate()?;
        let inside = |p: &Vector3<f64>| (0..3).all(|i| p[i] >= 0.0 && p[i] <= self.room[i]);
        for p in &self.calibration_points {
            if !inside(&p.position) {
                return Err(Error::invalid(format!("calibration point {} is outside the room", p.id)));
            }
        }
        for t in &self.trajectories {
            if t.waypoints.is_empty() || !(t.speed > 0.0) {
                return Err(Error::invalid(format!(
                    "trajectory `{}` needs waypoints and a positive speed",
                    t.name
                )));
            }
            if !t.waypoints.iter().all(inside) {
                return Err(Error::invalid(format!("trajectory `{}` leaves the room", t.name)));
            }
        }
        let mut ids: Vec<u32> = self.calibration_points.iter().map(|p| p.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate calibration point id"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| Error::invalid(format!("scenario: {e}")))?;
        file.try_into()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(&ScenarioFile::from(self)).expect("scenario serializes")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    seed: u64,
    noise_deg: f64,
    quantize: bool,
    room: [f64; 3],
    #[serde(default)]
    dropout: DropoutPolicy,
    arrays: Vec<PoseFile>,
    points: Vec<PointFile>,
    #[serde(default)]
    trajectories: Vec<TrajectoryFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseFile {
    position: [f64; 3],
    /// Local +z in global coordinates.
    facing: [f64; 3],
    /// Global direction local +y should lean toward.
    up: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointFile {
    id: u32,
    position: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryFile {
    name: String,
    speed: f64,
    /// Calibration point ids visited in order.
    #[serde(default)]
    via_points: Vec<u32>,
    /// Explicit positions, used when `via_points` is empty.
    #[serde(default)]
    waypoints: Vec<[f64; 3]>,
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

fn a3(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl TryFrom<ScenarioFile> for Scenario {
    type Error = Error;

    fn try_from(f: ScenarioFile) -> Result<Self> {
        let poses = f
            .arrays
            .iter()
            .map(|p| ArrayPose::facing(v3(p.position), v3(p.facing), v3(p.up)))
            .collect::<Result<Vec<_>>>()?;
        let calibration_points: Vec<CalibrationPoint> = f
            .points
            .iter()
            .map(|p| CalibrationPoint {
                id: p.id,
                position: v3(p.position),
            })
            .collect();
        let mut trajectories = Vec::new();
        for t in f.trajectories {
            let waypoints = if t.via_points.is_empty() {
                t.waypoints.iter().copied().map(v3).collect()
            } else {
                t.via_points
                    .iter()
                    .map(|id| {
                        calibration_points
                            .iter()
                            .find(|p| p.id == *id)
                            .map(|p| p.position)
                            .ok_or_else(|| {
                                Error::invalid(format!("trajectory `{}` names unknown point {id}", t.name))
                            })
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            trajectories.push(Trajectory {
                name: t.name,
                waypoints,
                speed: t.speed,
            });
        }
        let s = Scenario {
            poses,
            calibration_points,
            trajectories,
            room: v3(f.room),
            noise_deg: f.noise_deg,
            quantize: f.quantize,
            dropout: f.dropout,
            seed: f.seed,
        };
        s.validate()?;
        Ok(s)
    }
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        ScenarioFile {
            seed: s.seed,
            noise_deg: s.noise_deg,
            quantize: s.quantize,
            room: a3(&s.room),
            dropout: s.dropout,
            arrays: s
                .poses
                .iter()
                .map(|p| PoseFile {
                    position: a3(&p.position),
                    facing: a3(&p.orientation.column(2).into_owned()),
                    up: a3(&p.orientation.column(1).into_owned()),
                })
                .collect(),
            points: s
                .calibration_points
                .iter()
                .map(|p| PointFile {
                    id: p.id,
                    position: a3(&p.position),
                })
                .collect(),
            trajectories: s
                .trajectories
                .iter()
                .map(|t| TrajectoryFile {
                    name: t.name.clone(),
                    speed: t.speed,
                    via_points: Vec::new(),
                    waypoints: t.waypoints.iter().map(a3).collect(),
                })
                .collect(),
        }
    }
}

pub const TABLE_HEIGHT: f64 = 0.78;
pub const CHAIR_HEIGHT: f64 = 0.50;
/// Table rectangle traced by points 1-4, meters.
pub const TABLE_SHORT_SIDE: f64 = 0.76;
pub const TABLE_LONG_SIDE: f64 = 1.37;

/// Points of the table set (1-6) and the chair set (7-11).
pub const TABLE_POINTS: [u32; 6] = [1, 2, 3, 4, 5, 6];
pub const CHAIR_POINTS: [u32; 5] = [7, 8, 9, 10, 11];

/// Five-array meeting room: two wall arrays and three ceiling arrays, six
/// table points and five chair points. Coordinates are approximate
/// (x east, y north, z up, origin at the south-west floor corner).
pub fn default_meeting_room() -> Scenario {
    let up = Vector3::z();
    let north = Vector3::y();
    let down = -Vector3::z();
    let pose = |p: [f64; 3], facing: Vector3<f64>, up: Vector3<f64>| {
        ArrayPose::facing(v3(p), facing, up).expect("fixed pose is valid")
    };
    let poses = vec![
        pose([2.2, 0.0, 1.6], north, up),
        pose([0.0, 2.0, 1.6], Vector3::x(), up),
        pose([1.5, 3.0, 2.7], down, north),
        pose([3.0, 1.5, 2.7], down, north),
        pose([4.0, 3.2, 2.7], down, north),
    ];
    let (x0, y0) = (1.6, 1.4);
    let (x1, y1) = (x0 + TABLE_LONG_SIDE, y0 + TABLE_SHORT_SIDE);
    let t = TABLE_HEIGHT;
    let c = CHAIR_HEIGHT;
    let pts: [(u32, [f64; 3]); 11] = [
        (1, [x0, y0, t]),
        (2, [x1, y0, t]),
        (3, [x1, y1, t]),
        (4, [x0, y1, t]),
        (5, [3.5, 2.6, t]),
        (6, [3.5, 1.1, t]),
        (7, [1.2, 1.0, c]),
        (8, [3.3, 0.9, c]),
        (9, [1.1, 2.6, c]),
        (10, [2.4, 2.6, c]),
        (11, [3.9, 2.2, c]),
    ];
    let calibration_points: Vec<CalibrationPoint> = pts
        .iter()
        .map(|&(id, p)| CalibrationPoint { id, position: v3(p) })
        .collect();
    let at = |id: u32| calibration_points[id as usize - 1].position;
    let trajectories = vec![
        Trajectory {
            name: "rectangle-1234".into(),
            waypoints: vec![at(1), at(2), at(3), at(4), at(1)],
            speed: 0.1,
        },
        Trajectory {
            name: "line-56".into(),
            waypoints: vec![at(5), at(6)],
            speed: 0.1,
        },
    ];
    Scenario {
        poses,
        calibration_points,
        trajectories,
        room: Vector3::new(5.0, 4.0, 2.7),
        noise_deg: 2.0,
        quantize: true,
        dropout: DropoutPolicy::None,
        seed: 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_dimensions() {
        let s = default_meeting_room();
        s.validate().unwrap();
        assert_eq!(s.array_count(), 5);
        assert_eq!(s.calibration_points.len(), 11);
        let p = |id| s.point(id).unwrap().position;
        assert!(((p(2) - p(1)).norm() - 1.37).abs() < 1e-12);
        assert!(((p(3) - p(2)).norm() - 0.76).abs() < 1e-12);
        for id in TABLE_POINTS {
            assert_eq!(p(id).z, 0.78);
        }
        for id in CHAIR_POINTS {
            assert_eq!(p(id).z, 0.50);
        }
    }

    #[test]
    fn poses_are_rotations() {
        for p in default_meeting_room().poses {
            ArrayPose::new(p.position, p.orientation).unwrap();
        }
    }

    #[test]
    fn toml_round_trip() {
        let mut s = default_meeting_room();
        s.dropout = DropoutPolicy::OneOf { probability: 0.5 };
        let back = Scenario::from_toml(&s.to_toml()).unwrap();
        assert_eq!(back.poses.len(), s.poses.len());
        for (a, b) in back.poses.iter().zip(&s.poses) {
            assert!((a.orientation - b.orientation).norm() < 1e-12);
            assert_eq!(a.position, b.position);
        }
        assert_eq!(back.calibration_points, s.calibration_points);
        assert_eq!(back.trajectories, s.trajectories);
        assert_eq!(back.dropout, s.dropout);
    }

    #[test]
    fn via_points_resolve() {
        let text = r#"
seed = 3
noise_deg = 0.0
quantize = false
room = [4.0, 4.0, 3.0]
dropout = { kind = "independent", probability = 0.2 }
arrays = [{ position = [2.0, 2.0, 3.0], facing = [0.0, 0.0, -1.0], up = [0.0, 1.0, 0.0] }]
points = [{ id = 1, position = [1.0, 1.0, 1.0] }, { id = 2, position = [2.0, 1.0, 1.0] }]
trajectories = [{ name = "a", speed = 0.5, via_points = [1, 2] }]
"#;
        let s = Scenario::from_toml(text).unwrap();
        assert_eq!(s.trajectory("a").unwrap().waypoints[1], Vector3::new(2.0, 1.0, 1.0));
        assert_eq!(s.dropout, DropoutPolicy::Independent { probability: 0.2 });
    }

    #[test]
    fn out_of_room_rejected() {
        let mut s = default_meeting_room();
        s.calibration_points[0].position.x = -1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn trajectory_position_interpolates() {
        let t = Trajectory {
            name: "t".into(),
            waypoints: vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0), Vector3::new(1.0, 1.0, 0.0)],
            speed: 1.0,
        };
        assert_eq!(t.length(), 2.0);
        assert_eq!(t.position_at(1.5), Vector3::new(1.0, 0.5, 0.0));
        assert_eq!(t.position_at(5.0), Vector3::new(1.0, 1.0, 0.0));
    }
}
