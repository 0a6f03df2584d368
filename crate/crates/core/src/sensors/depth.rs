//! Software depth buffer.
//!
//! Triangles are clipped against a near plane in camera space, projected,
//! and scan-converted over their pixel bounding box. A pixel is covered
//! when its center lies inside the projected triangle (boundary included
//! via [`BARYCENTRIC_EPS`]). Depth is interpolated as `1/z`, which is
//! affine in screen space for planar triangles, so the stored value is the
//! exact optical depth of the surface behind the pixel center.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::{CameraConfig, SensorError};
use crate::belief::{Pose, StablePoseCatalog};
use crate::geometry::{place_mesh, TriangleMesh, BARYCENTRIC_EPS};

const NEAR_PLANE: f64 = 1e-6;

/// Row-major `height x width` optical depths (m); background is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DepthRepr", into = "DepthRepr")]
pub struct DepthImage {
    width: usize,
    height: usize,
    depth: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DepthRepr {
    width: usize,
    height: usize,
    depth: Vec<f64>,
}

impl TryFrom<DepthRepr> for DepthImage {
    type Error = String;

    fn try_from(r: DepthRepr) -> Result<Self, String> {
        DepthImage::from_values(r.width, r.height, r.depth)
    }
}

impl From<DepthImage> for DepthRepr {
    fn from(d: DepthImage) -> Self {
        DepthRepr {
            width: d.width,
            height: d.height,
            depth: d.depth,
        }
    }
}

impl DepthImage {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depth: vec![0.0; width * height],
        }
    }

    pub fn from_values(width: usize, height: usize, depth: Vec<f64>) -> Result<Self, String> {
        if width == 0 || height == 0 {
            return Err("depth image dimensions must be positive".into());
        }
        if depth.len() != width * height {
            return Err(format!("expected {} depth values, got {}", width * height, depth.len()));
        }
        if depth.iter().any(|z| !(*z >= 0.0 && z.is_finite())) {
            return Err("depth values must be finite and non-negative".into());
        }
        Ok(Self { width, height, depth })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.depth[row * self.width + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.depth
    }
}

/// Binary object/background mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

pub fn mask_from_depth(image: &DepthImage) -> Mask {
    Mask {
        width: image.width,
        height: image.height,
        bits: image.depth.iter().map(|&z| z > 0.0).collect(),
    }
}

/// Renders an already placed mesh.
pub fn render_depth(mesh: &TriangleMesh, camera: &CameraConfig) -> DepthImage {
    let k = &camera.intrinsics;
    let mut image = DepthImage::empty(k.width, k.height);
    let mut polygon = Vec::with_capacity(4);
    for tri in mesh.triangles() {
        let cam = tri.map(|p| camera.world_to_camera(&p));
        clip_near(&cam, &mut polygon);
        if polygon.len() < 3 {
            continue;
        }
        let screen: Vec<ScreenVertex> = polygon
            .iter()
            .map(|p| ScreenVertex {
                col: k.fx * p.x / p.z + k.cx,
                row: k.fy * p.y / p.z + k.cy,
                inv_z: 1.0 / p.z,
            })
            .collect();
        for i in 1..screen.len() - 1 {
            raster_triangle(&mut image, [screen[0], screen[i], screen[i + 1]]);
        }
    }
    image
}

pub fn predict_depth(
    mesh: &TriangleMesh,
    catalog: &StablePoseCatalog,
    pose: &Pose,
    camera: &CameraConfig,
) -> Result<DepthImage, SensorError> {
    let placement = catalog.resolve(pose)?;
    Ok(render_depth(&place_mesh(mesh, &placement), camera))
}

#[derive(Debug, Clone, Copy)]
struct ScreenVertex {
    col: f64,
    row: f64,
    inv_z: f64,
}

/// Sutherland–Hodgman against `z >= NEAR_PLANE`.
fn clip_near(tri: &[Point3<f64>; 3], out: &mut Vec<Point3<f64>>) {
    out.clear();
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let a_in = a.z >= NEAR_PLANE;
        let b_in = b.z >= NEAR_PLANE;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (NEAR_PLANE - a.z) / (b.z - a.z);
            let mut p = a + (b - a) * t;
            p.z = NEAR_PLANE;
            out.push(p);
        }
    }
}

fn edge(a: &ScreenVertex, b: &ScreenVertex, col: f64, row: f64) -> f64 {
    (b.col - a.col) * (row - a.row) - (b.row - a.row) * (col - a.col)
}

fn raster_triangle(image: &mut DepthImage, v: [ScreenVertex; 3]) {
    let area = edge(&v[0], &v[1], v[2].col, v[2].row);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    let min_c = v.iter().map(|p| p.col).fold(f64::INFINITY, f64::min);
    let max_c = v.iter().map(|p| p.col).fold(f64::NEG_INFINITY, f64::max);
    let min_r = v.iter().map(|p| p.row).fold(f64::INFINITY, f64::min);
    let max_r = v.iter().map(|p| p.row).fold(f64::NEG_INFINITY, f64::max);
    // Pixel centers sit at index + 0.5; widen by one to cover ties.
    let span = |lo: f64, hi: f64, n: usize| -> Option<(usize, usize)> {
        let first = (lo - 1.5).ceil().max(0.0);
        let last = (hi + 0.5).floor().min(n as f64 - 1.0);
        (first <= last).then_some((first as usize, last as usize))
    };
    let (Some((c0, c1)), Some((r0, r1))) = (span(min_c, max_c, image.width), span(min_r, max_r, image.height))
    else {
        return;
    };
    for row in r0..=r1 {
        let pr = row as f64 + 0.5;
        for col in c0..=c1 {
            let pc = col as f64 + 0.5;
            let l0 = edge(&v[1], &v[2], pc, pr) / area;
            let l1 = edge(&v[2], &v[0], pc, pr) / area;
            let l2 = edge(&v[0], &v[1], pc, pr) / area;
            if l0 < -BARYCENTRIC_EPS || l1 < -BARYCENTRIC_EPS || l2 < -BARYCENTRIC_EPS {
                continue;
            }
            let inv_z = l0 * v[0].inv_z + l1 * v[1].inv_z + l2 * v[2].inv_z;
            if !(inv_z > 0.0) {
                continue;
            }
            let z = 1.0 / inv_z;
            let slot = &mut image.depth[row * image.width + col];
            if *slot == 0.0 || z < *slot {
                *slot = z;
            }
        }
    }
}
