//! Geodesic half-sphere grid of candidate directions and plane-wave TDOAs
//! for a planar microphone array.
//!
//! The grid is built by recursive midpoint subdivision of an icosahedron that
//! has one vertex rotated onto the zenith. Subdividing four times gives 2562
//! vertices on the full sphere, 80 of which lie on the equator; keeping the
//! upper hemisphere plus the equator yields the 1321 candidate directions
//! used by the SRP-PHAT scan.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use nalgebra::{Rotation3, Vector3};

use crate::error::{Error, Result};

/// Unit-norm tolerance accepted by [`DoaVector::new`].
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// Vertices with `|z|` below this are treated as lying on the equator.
pub const EQUATOR_EPS: f64 = 1e-12;

/// Deepest subdivision level accepted by [`build_halfsphere_grid`].
pub const MAX_GRID_LEVEL: u32 = 8;

/// Unit direction of arrival in an array's local frame, on the `z >= 0`
/// half-sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoaVector(Vector3<f64>);

impl DoaVector {
    pub const ZENITH: DoaVector = DoaVector(Vector3::new(0.0, 0.0, 1.0));

    /// Validating constructor: the components must already be unit norm
    /// (within [`UNIT_TOLERANCE`]) with `dz >= 0`.
    pub fn new(dx: f64, dy: f64, dz: f64) -> Result<Self> {
        let v = Vector3::new(dx, dy, dz);
        if !v.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("DOA components must be finite"));
        }
        if (v.norm_squared() - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::invalid(format!(
                "DOA ({dx}, {dy}, {dz}) is not unit norm"
            )));
        }
        if dz < 0.0 {
            return Err(Error::invalid(format!("DOA dz = {dz} is negative")));
        }
        Ok(DoaVector(v))
    }

    /// Clamps `z` to be non-negative and normalizes. Returns `None` if the
    /// clamped vector has zero (or non-finite) length.
    pub fn from_clamped(v: Vector3<f64>) -> Option<Self> {
        let clamped = Vector3::new(v.x, v.y, v.z.max(0.0));
        let n = clamped.norm();
        if n.is_finite() && n > 0.0 {
            Some(DoaVector(clamped / n))
        } else {
            None
        }
    }

    pub fn dx(&self) -> f64 {
        self.0.x
    }

    pub fn dy(&self) -> f64 {
        self.0.y
    }

    pub fn dz(&self) -> f64 {
        self.0.z
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.0.x, self.0.y, self.0.z]
    }

    /// Great-circle angle to `other`, radians.
    pub fn angle_to(&self, other: &DoaVector) -> f64 {
        angle_between(&self.0, &other.0)
    }
}

impl fmt::Display for DoaVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.0.x, self.0.y, self.0.z)
    }
}

/// Angle between two vectors, robust near 0 and pi.
pub(crate) fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Ordered set of candidate DOAs.
#[derive(Debug, Clone)]
pub struct HalfSphereGrid {
    points: Vec<DoaVector>,
    level: u32,
}

impl HalfSphereGrid {
    pub fn points(&self) -> &[DoaVector] {
        &self.points
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, idx: usize) -> Option<&DoaVector> {
        self.points.get(idx)
    }

    /// Index of the grid point closest in angle to `v` (exhaustive scan;
    /// ties go to the lower index).
    pub fn nearest(&self, v: &Vector3<f64>) -> usize {
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = p.0.dot(v);
            if d > best_dot {
                best_dot = d;
                best = i;
            }
        }
        best
    }

    /// Angle from every point to its nearest other point, radians.
    pub fn nearest_neighbor_angles(&self) -> Vec<f64> {
        let pts = &self.points;
        (0..pts.len())
            .map(|i| {
                let mut best = f64::NEG_INFINITY;
                for (j, q) in pts.iter().enumerate() {
                    if i != j {
                        best = best.max(pts[i].0.dot(&q.0));
                    }
                }
                best.clamp(-1.0, 1.0).acos()
            })
            .collect()
    }

    /// Writes the grid as CSV with header `idx,x,y,z`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "idx,x,y,z")?;
        for (i, p) in self.points.iter().enumerate() {
            writeln!(out, "{},{},{},{}", i, p.dx(), p.dy(), p.dz())?;
        }
        Ok(())
    }
}

/// Twelve icosahedron vertices (golden-ratio coordinates, unit norm) and its
/// twenty faces, rotated so vertex 0 sits at `+z`.
pub fn canonical_icosahedron() -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [0.0, 1.0, phi],
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let verts: Vec<Vector3<f64>> = raw
        .iter()
        .map(|v| Vector3::new(v[0], v[1], v[2]).normalize())
        .collect();
    let rot = Rotation3::rotation_between(&verts[0], &Vector3::z())
        .expect("vertex 0 is not antipodal to +z");
    let verts: Vec<Vector3<f64>> = verts.iter().map(|v| rot * v).collect();

    // Faces from the edge graph: every triple of mutually adjacent vertices.
    let edge = (verts[0] - verts[1])
        .norm()
        .min((verts[0] - verts[2]).norm());
    let adjacent = |a: usize, b: usize| ((verts[a] - verts[b]).norm() - edge).abs() < 1e-9;
    let mut faces = Vec::with_capacity(20);
    for a in 0..12 {
        for b in a + 1..12 {
            if !adjacent(a, b) {
                continue;
            }
            for c in b + 1..12 {
                if adjacent(a, c) && adjacent(b, c) {
                    faces.push([a, b, c]);
                }
            }
        }
    }
    debug_assert_eq!(faces.len(), 20);
    (verts, faces)
}

/// Full-sphere vertices of the icosahedron after `level` rounds of midpoint
/// subdivision.
fn subdivided_sphere(level: u32) -> Vec<Vector3<f64>> {
    let (mut verts, mut faces) = canonical_icosahedron();
    for _ in 0..level {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 2);
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                verts.push((verts[a] + verts[b]).normalize());
                verts.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    verts
}

/// Builds the half-sphere DOA grid at the given subdivision level.
///
/// Points are sorted lexicographically by `(z, y, x)`. Level 4 gives 1321
/// points.
pub fn build_halfsphere_grid(level: u32) -> Result<HalfSphereGrid> {
    if level > MAX_GRID_LEVEL {
        return Err(Error::invalid(format!(
            "grid level {level} exceeds maximum {MAX_GRID_LEVEL}"
        )));
    }
    let mut upper = Vec::new();
    let mut equator: Vec<Vector3<f64>> = Vec::new();
    for v in subdivided_sphere(level) {
        if v.z.abs() < EQUATOR_EPS {
            let flat = Vector3::new(v.x, v.y, 0.0).normalize();
            if !equator.iter().any(|e| (e - flat).norm() < UNIT_TOLERANCE) {
                equator.push(flat);
            }
        } else if v.z > 0.0 {
            upper.push(v);
        }
    }
    upper.extend(equator);
    upper.sort_by(|a, b| {
        a.z.total_cmp(&b.z)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
    Ok(HalfSphereGrid {
        points: upper.into_iter().map(DoaVector).collect(),
        level,
    })
}

/// Positions of a planar microphone array plus the acoustic constants
/// needed to turn path differences into sample delays.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    pub mic_positions: Vec<Vector3<f64>>,
    /// m/s
    pub speed_of_sound: f64,
    /// samples/s
    pub sample_rate: f64,
}

impl Default for ArrayGeometry {
    /// Eight microphones evenly spaced on a 10 cm diameter circle, 343 m/s,
    /// 16 kHz.
    fn default() -> Self {
        Self::circular(8, 0.05, 343.0, 16_000.0)
    }
}

impl ArrayGeometry {
    pub fn circular(count: usize, radius: f64, speed_of_sound: f64, sample_rate: f64) -> Self {
        let mic_positions = (0..count)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / count as f64;
                Vector3::new(radius * a.cos(), radius * a.sin(), 0.0)
            })
            .collect();
        ArrayGeometry {
            mic_positions,
            speed_of_sound,
            sample_rate,
        }
    }

    pub fn mic_count(&self) -> usize {
        self.mic_positions.len()
    }

    /// Unordered microphone pairs `(p, q)` with `p < q`, in row-major order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.mic_count();
        (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .collect()
    }
}

/// TDOAs for every microphone pair `p < q`, in samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TdoaSet {
    mic_count: usize,
    values: Vec<f64>,
}

impl TdoaSet {
    /// One value per pair, ordered as [`ArrayGeometry::pairs`].
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `tau(p, q)` for any ordered pair; antisymmetric, zero on the diagonal.
    pub fn get(&self, p: usize, q: usize) -> f64 {
        use std::cmp::Ordering;
        match p.cmp(&q) {
            Ordering::Equal => 0.0,
            Ordering::Less => self.values[self.pair_index(p, q)],
            Ordering::Greater => -self.values[self.pair_index(q, p)],
        }
    }

    fn pair_index(&self, p: usize, q: usize) -> usize {
        let n = self.mic_count;
        p * (2 * n - p - 1) / 2 + (q - p - 1)
    }
}

/// Plane-wave TDOA for each pair: `tau(p,q) = fs * (m_p - m_q) . d / c`.
///
/// With `d` pointing toward the source, a positive `tau(p,q)` is the number
/// of samples by which the wavefront reaches mic `p` before mic `q`.
pub fn tdoa_for_doa(geom: &ArrayGeometry, doa: &Vector3<f64>) -> Result<TdoaSet> {
    if (doa.norm_squared() - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::invalid("TDOA direction must be unit norm"));
    }
    Ok(tdoa_unchecked(geom, doa))
}

pub(crate) fn tdoa_unchecked(geom: &ArrayGeometry, doa: &Vector3<f64>) -> TdoaSet {
    let scale = geom.sample_rate / geom.speed_of_sound;
    let proj: Vec<f64> = geom.mic_positions.iter().map(|m| m.dot(doa)).collect();
    let values = geom
        .pairs()
        .into_iter()
        .map(|(p, q)| scale * (proj[p] - proj[q]))
        .collect();
    TdoaSet {
        mic_count: geom.mic_count(),
        values,
    }
}
