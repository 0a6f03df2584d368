//! Triangle meshes, rigid placements, rays and the pinhole camera model.
//!
//! Everything here is a pure function of its inputs. Units are meters
//! throughout; the camera frame follows the usual vision convention
//! (x right, y down, z along the optical axis).

mod obj;

pub use obj::{load_obj, parse_obj};

use nalgebra::{Matrix3, Point3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Barycentric slack used by both the ray test and the rasterizer.
/// Points on a triangle boundary count as inside.
pub const BARYCENTRIC_EPS: f64 = 1e-12;

const RIGIDITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("mesh has no faces")]
    NoFaces,
    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    FaceIndexOutOfRange { face: usize, index: usize, count: usize },
    #[error("vertex {0} has a non-finite coordinate")]
    NonFiniteVertex(usize),
    #[error("rotation is not orthonormal with determinant +1")]
    NotARotation,
    #[error("translation has a non-finite component")]
    NonFiniteTranslation,
    #[error("ray direction must be finite and non-zero")]
    DegenerateDirection,
    #[error("camera intrinsics invalid: {0}")]
    InvalidIntrinsics(&'static str),
    #[error("OBJ line {line}: {reason}")]
    Obj { line: usize, reason: String },
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

/// Object shape as an indexed triangle list.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self, GeometryError> {
        if faces.is_empty() {
            return Err(GeometryError::NoFaces);
        }
        if let Some(i) = vertices.iter().position(|v| !v.coords.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::NonFiniteVertex(i));
        }
        for (face, idx) in faces.iter().enumerate() {
            if let Some(&index) = idx.iter().find(|&&i| i >= vertices.len()) {
                return Err(GeometryError::FaceIndexOutOfRange {
                    face,
                    index,
                    count: vertices.len(),
                });
            }
        }
        Ok(Self { vertices, faces })
    }

    /// Axis-aligned box centered at `center` with the given full extents.
    pub fn cuboid(center: Point3<f64>, extents: Vector3<f64>) -> Self {
        let h = extents / 2.0;
        let vertices = (0..8)
            .map(|i| {
                let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
                let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
                let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
                center + Vector3::new(sx * h.x, sy * h.y, sz * h.z)
            })
            .collect();
        // Outward-facing, two triangles per side.
        let faces = vec![
            [0, 2, 1], [1, 2, 3], // -z
            [4, 5, 6], [5, 7, 6], // +z
            [0, 1, 4], [1, 5, 4], // -y
            [2, 6, 3], [3, 6, 7], // +y
            [0, 4, 2], [2, 4, 6], // -x
            [1, 3, 5], [3, 7, 5], // +x
        ];
        Self { vertices, faces }
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn triangle(&self, face: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangles(&self) -> impl Iterator<Item = [Point3<f64>; 3]> + '_ {
        (0..self.faces.len()).map(move |f| self.triangle(f))
    }
}

/// Proper rigid motion `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlacementRepr", into = "PlacementRepr")]
pub struct RigidPlacement {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidPlacement {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(GeometryError::NonFiniteTranslation);
        }
        let gram = rotation.transpose() * rotation;
        let orthonormal = (gram - Matrix3::identity()).iter().all(|e| e.abs() <= RIGIDITY_TOL);
        if !orthonormal || (rotation.determinant() - 1.0).abs() > RIGIDITY_TOL {
            return Err(GeometryError::NotARotation);
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation by `yaw` radians about the world z axis.
    pub fn from_yaw(yaw: f64) -> Self {
        Self {
            rotation: *Rotation3::from_axis_angle(&Vector3::z_axis(), yaw).matrix(),
            translation: Vector3::zeros(),
        }
    }

    /// Roll/pitch/yaw (radians) composed as `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64, translation: Vector3<f64>) -> Self {
        Self {
            rotation: *Rotation3::from_euler_angles(roll, pitch, yaw).matrix(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Maps world coordinates back into the placed frame.
    pub fn inverse_apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation.transpose() * (p.coords - self.translation))
    }

    /// `self ∘ inner`: apply `inner` first, then `self`.
    pub fn compose(&self, inner: &RigidPlacement) -> RigidPlacement {
        RigidPlacement {
            rotation: self.rotation * inner.rotation,
            translation: self.rotation * inner.translation + self.translation,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlacementRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl TryFrom<PlacementRepr> for RigidPlacement {
    type Error = GeometryError;

    fn try_from(r: PlacementRepr) -> Result<Self, Self::Error> {
        let m = Matrix3::from_fn(|i, j| r.rotation[i][j]);
        RigidPlacement::new(m, Vector3::from(r.translation))
    }
}

impl From<RigidPlacement> for PlacementRepr {
    fn from(p: RigidPlacement) -> Self {
        let mut rotation = [[0.0; 3]; 3];
        for (i, row) in rotation.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = p.rotation[(i, j)];
            }
        }
        PlacementRepr {
            rotation,
            translation: p.translation.into(),
        }
    }
}

pub fn place_mesh(mesh: &TriangleMesh, placement: &RigidPlacement) -> TriangleMesh {
    TriangleMesh {
        vertices: mesh.vertices.iter().map(|v| placement.apply(v)).collect(),
        faces: mesh.faces.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    origin: Point3<f64>,
    direction: Vector3<f64>,
}

impl Ray {
    /// Normalizes `direction`.
    pub fn new(origin: Point3<f64>, direction: Vector3<f64>) -> Result<Self, GeometryError> {
        let norm = direction.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(GeometryError::DegenerateDirection);
        }
        Ok(Self {
            origin,
            direction: direction / norm,
        })
    }

    pub fn origin(&self) -> &Point3<f64> {
        &self.origin
    }

    pub fn direction(&self) -> &Vector3<f64> {
        &self.direction
    }

    pub fn at(&self, t: f64) -> Point3<f64> {
        self.origin + self.direction * t
    }
}

/// Möller–Trumbore. Returns the ray parameter of the hit, if any, for a
/// single triangle. Zero-area triangles and rays parallel to the
/// triangle plane never hit.
pub fn ray_triangle_hit(ray: &Ray, tri: &[Point3<f64>; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let normal = e1.cross(&e2);
    let area2 = normal.norm();
    if area2 == 0.0 || !area2.is_finite() {
        return None;
    }
    let pvec = ray.direction.cross(&e2);
    let det = e1.dot(&pvec);
    // |det| / |n| is the cosine between the ray and the plane normal.
    if det.abs() <= BARYCENTRIC_EPS * area2 {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = ray.origin - tri[0];
    let u = tvec.dot(&pvec) * inv_det;
    if !(-BARYCENTRIC_EPS..=1.0 + BARYCENTRIC_EPS).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = ray.direction.dot(&qvec) * inv_det;
    if v < -BARYCENTRIC_EPS || u + v > 1.0 + BARYCENTRIC_EPS {
        return None;
    }
    let t = e2.dot(&qvec) * inv_det;
    (t >= 0.0).then_some(t)
}

/// Distance to the closest face hit along `ray`.
pub fn ray_mesh_nearest_hit(ray: &Ray, mesh: &TriangleMesh) -> Option<f64> {
    mesh.triangles()
        .filter_map(|tri| ray_triangle_hit(ray, &tri))
        .fold(None, |best, t| match best {
            Some(b) if b <= t => Some(b),
            _ => Some(t),
        })
}

/// Pinhole intrinsics. Pixel `(row, col)` covers
/// `[col, col + 1) x [row, row + 1)` in continuous image coordinates, so
/// its center sits at `(col + 0.5, row + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fx.is_finite()) || !(self.fy > 0.0 && self.fy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics("focal lengths must be positive"));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(GeometryError::InvalidIntrinsics("principal point must be finite"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidIntrinsics("image dimensions must be positive"));
        }
        Ok(())
    }
}

/// Intrinsics plus the camera-to-world placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    pub intrinsics: Intrinsics,
    pub extrinsics: RigidPlacement,
}

/// Continuous image coordinates of a projected point plus its depth
/// along the optical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub row: f64,
    pub col: f64,
    pub depth: f64,
}

impl CameraModel {
    pub fn new(intrinsics: Intrinsics, extrinsics: RigidPlacement) -> Result<Self, GeometryError> {
        intrinsics.validate()?;
        Ok(Self { intrinsics, extrinsics })
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(*self.extrinsics.translation())
    }

    pub fn world_to_camera(&self, p: &Point3<f64>) -> Point3<f64> {
        self.extrinsics.inverse_apply(p)
    }

    /// Projection without the image-bounds check. `None` only when the
    /// point is not strictly in front of the camera.
    pub fn project_unbounded(&self, p: &Point3<f64>) -> Option<Projection> {
        let pc = self.world_to_camera(p);
        if !(pc.z > 0.0) {
            return None;
        }
        let k = &self.intrinsics;
        Some(Projection {
            col: k.fx * pc.x / pc.z + k.cx,
            row: k.fy * pc.y / pc.z + k.cy,
            depth: pc.z,
        })
    }

    /// Ray through continuous image coordinates `(row, col)`.
    pub fn pixel_ray(&self, row: f64, col: f64) -> Ray {
        let k = &self.intrinsics;
        let d_cam = Vector3::new((col - k.cx) / k.fx, (row - k.cy) / k.fy, 1.0);
        Ray::new(self.center(), self.extrinsics.apply_vector(&d_cam))
            .expect("pixel ray direction has unit z component")
    }

    /// World point at optical depth `depth` behind image coordinates `(row, col)`.
    pub fn back_project(&self, row: f64, col: f64, depth: f64) -> Point3<f64> {
        let k = &self.intrinsics;
        let pc = Point3::new((col - k.cx) / k.fx * depth, (row - k.cy) / k.fy * depth, depth);
        self.extrinsics.apply(&pc)
    }
}

pub fn project_point(point: &Point3<f64>, camera: &CameraModel) -> Option<Projection> {
    let proj = camera.project_unbounded(point)?;
    let k = &camera.intrinsics;
    let inside = proj.col >= 0.0
        && proj.col < k.width as f64
        && proj.row >= 0.0
        && proj.row < k.height as f64;
    inside.then_some(proj)
}

/// Placement for a camera at `eye` looking at `target`, with image "up"
/// as close to `up` as possible.
pub fn look_at(eye: Point3<f64>, target: Point3<f64>, up: Vector3<f64>) -> Result<RigidPlacement, GeometryError> {
    let z = target - eye;
    if z.norm() == 0.0 {
        return Err(GeometryError::DegenerateDirection);
    }
    let z = z.normalize();
    let x = z.cross(&up);
    if x.norm() < 1e-12 {
        return Err(GeometryError::DegenerateDirection);
    }
    let x = x.normalize();
    let y = z.cross(&x);
    let rotation = Matrix3::from_columns(&[x, y, z]);
    RigidPlacement::new(rotation, eye.coords)
}
