//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use grasp_voa::belief::{Belief, Pose};
use grasp_voa::geometry::{CameraModel, TriangleMesh};
use grasp_voa::grasp::GraspScoreTable;
use grasp_voa::sensors::{
    LidarConfig, LidarScan, Observation, ObservationPredictor, SensorConfig, SensorError, SCAN_CELLS,
};
use grasp_voa::similarity::SimilarityMetric;
use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Returns stored observations and counts how often it is asked.
pub struct StoredPredictor {
    pub observations: HashMap<(String, String), Observation>,
    pub calls: AtomicUsize,
}

impl StoredPredictor {
    pub fn new(observations: HashMap<(String, String), Observation>) -> Self {
        Self {
            observations,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ObservationPredictor for StoredPredictor {
    fn predict(&self, pose: &Pose, config: &SensorConfig) -> Result<Observation, SensorError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.observations
            .get(&(pose.id.clone(), config.id.clone()))
            .cloned()
            .ok_or_else(|| SensorError::Missing {
                pose_id: pose.id.clone(),
                config_id: config.id.clone(),
            })
    }
}

/// A random VOA problem over abstract lidar-shaped observations.
pub struct Instance {
    pub poses: Vec<Pose>,
    pub weights: Vec<f64>,
    /// `gamma[g][p]`
    pub gamma: Vec<Vec<f64>>,
    pub configs: Vec<SensorConfig>,
    /// `obs[c][p]`
    pub obs: Vec<Vec<Vec<f64>>>,
}

pub const MAX_RANGE: f64 = 10.0;

pub fn lidar_config(id: &str) -> SensorConfig {
    SensorConfig::lidar(
        id,
        LidarConfig {
            position: [0.0, 0.0],
            height: 0.0,
            yaw: 0.0,
            fov_deg: 360.0,
            max_range: MAX_RANGE,
        },
    )
}

pub fn scan(values: &[f64]) -> Observation {
    Observation::Lidar(LidarScan {
        ranges: values.to_vec(),
        max_range: MAX_RANGE,
    })
}

pub fn plain_poses(n: usize) -> Vec<Pose> {
    (0..n)
        .map(|i| Pose {
            id: format!("p{i:02}"),
            category: format!("k{i:02}"),
            theta: 0.0,
            x: 0.0,
            y: 0.0,
        })
        .collect()
}

/// Observations fall into a few classes per config. Classes differ on a
/// handful of cells by a few centimeters; some poses get sub-millimeter
/// jitter so that margin-based equality and exact equality disagree.
pub fn random_instance(seed: u64, max_poses: usize, max_grasps: usize, max_configs: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_poses);
    let g = rng.random_range(1..=max_grasps);
    let c = rng.random_range(1..=max_configs);
    let poses = plain_poses(n);
    let mut weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let gamma = (0..g).map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let base: Vec<f64> = (0..SCAN_CELLS).map(|_| rng.random_range(0.5..1.5)).collect();
    let mut configs = Vec::new();
    let mut obs = Vec::new();
    for k in 0..c {
        configs.push(lidar_config(&format!("c{k}")));
        let classes = rng.random_range(1..=n);
        let class_vectors: Vec<Vec<f64>> = (0..classes)
            .map(|_| {
                let mut v = base.clone();
                for _ in 0..5 {
                    let cell = rng.random_range(0..SCAN_CELLS);
                    v[cell] += rng.random_range(-0.3..0.3);
                }
                v
            })
            .collect();
        let per_pose = (0..n)
            .map(|_| {
                let mut v = class_vectors[rng.random_range(0..classes)].clone();
                if rng.random_bool(0.3) {
                    let cell = rng.random_range(0..SCAN_CELLS);
                    v[cell] += rng.random_range(-1e-3..1e-3);
                }
                v
            })
            .collect();
        obs.push(per_pose);
    }
    Instance {
        poses,
        weights,
        gamma,
        configs,
        obs,
    }
}

impl Instance {
    pub fn belief(&self) -> Belief {
        Belief::new(self.poses.clone(), self.weights.clone()).unwrap()
    }

    pub fn table(&self) -> GraspScoreTable {
        GraspScoreTable::new(
            (0..self.gamma.len()).map(|g| format!("g{g}")).collect(),
            self.poses.iter().map(|p| p.id.clone()).collect(),
            self.gamma.clone(),
        )
        .unwrap()
    }

    pub fn predictor(&self) -> StoredPredictor {
        let mut map = HashMap::new();
        for (k, c) in self.configs.iter().enumerate() {
            for (i, p) in self.poses.iter().enumerate() {
                map.insert((p.id.clone(), c.id.clone()), scan(&self.obs[k][i]));
            }
        }
        StoredPredictor::new(map)
    }
}

/// Reference similarity on raw vectors, written independently of the
/// library.
pub fn reference_similarity(metric: &SimilarityMetric, a: &[f64], b: &[f64]) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    match metric {
        SimilarityMetric::MarginDeterministic { margin } => {
            if a.iter().zip(b).all(|(x, y)| (x - y).abs() <= *margin) {
                1.0
            } else {
                0.0
            }
        }
        SimilarityMetric::ExpNegNorm => (-sq.sqrt()).exp(),
        SimilarityMetric::GaussianLikelihood { sigma } => (-sq / (2.0 * sigma * sigma)).exp(),
        other => panic!("no reference for {other:?}"),
    }
}

fn argmax_grasp(gamma: &[Vec<f64>], weights: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (g, row) in gamma.iter().enumerate() {
        let v: f64 = row.iter().zip(weights).map(|(s, w)| s * w).sum();
        if v > best_v {
            best = g;
            best_v = v;
        }
    }
    best
}

/// Direct double loop over true pose and hypothesized pose:
/// `Σ_p b(p) [γ(g_max(posterior_p), p) − γ(g_max(b), p)]`.
pub fn brute_force_voa(
    weights: &[f64],
    gamma: &[Vec<f64>],
    obs: &[Vec<f64>],
    omega: impl Fn(&[f64], &[f64]) -> f64,
) -> f64 {
    let n = weights.len();
    let g0 = argmax_grasp(gamma, weights);
    let mut voa = 0.0;
    for p in 0..n {
        if weights[p] == 0.0 {
            continue;
        }
        let mut post = vec![0.0; n];
        let mut total = 0.0;
        for j in 0..n {
            post[j] = weights[j] * omega(&obs[j], &obs[p]);
            total += post[j];
        }
        for w in post.iter_mut() {
            *w /= total;
        }
        let g = argmax_grasp(gamma, &post);
        voa += weights[p] * (gamma[g][p] - gamma[g0][p]);
    }
    voa
}

/// `Σ_p b(p) max_g γ(g,p) − max_g Σ_p b(p) γ(g,p)`.
pub fn perfect_information_gain(weights: &[f64], gamma: &[Vec<f64>]) -> f64 {
    let informed: f64 = (0..weights.len())
        .map(|p| weights[p] * gamma.iter().map(|row| row[p]).fold(f64::NEG_INFINITY, f64::max))
        .sum();
    let g0 = argmax_grasp(gamma, weights);
    let uninformed: f64 = gamma[g0].iter().zip(weights).map(|(s, w)| s * w).sum();
    informed - uninformed
}

/// Möller–Trumbore, returning the ray parameter of the nearest hit.
pub fn reference_ray_mesh(origin: Point3<f64>, dir: Vector3<f64>, mesh: &TriangleMesh) -> Option<f64> {
    let mut best: Option<f64> = None;
    for [a, b, c] in mesh.triangles() {
        let e1 = b - a;
        let e2 = c - a;
        let p = dir.cross(&e2);
        let det = e1.dot(&p);
        if det.abs() < 1e-14 {
            continue;
        }
        let inv = 1.0 / det;
        let s = origin - a;
        let u = s.dot(&p) * inv;
        if !(-1e-12..=1.0 + 1e-12).contains(&u) {
            continue;
        }
        let q = s.cross(&e1);
        let v = dir.dot(&q) * inv;
        if v < -1e-12 || u + v > 1.0 + 1e-12 {
            continue;
        }
        let t = e2.dot(&q) * inv;
        if t > 0.0 && best.is_none_or(|bt| t < bt) {
            best = Some(t);
        }
    }
    best
}

/// Per-pixel ray cast through pixel centers; optical depth or 0.
pub fn reference_depth(mesh: &TriangleMesh, camera: &CameraModel) -> Vec<f64> {
    let k = &camera.intrinsics;
    let r = camera.extrinsics.rotation();
    let origin = Point3::from(*camera.extrinsics.translation());
    let mut out = Vec::with_capacity(k.width * k.height);
    for row in 0..k.height {
        for col in 0..k.width {
            let d_cam = Vector3::new((col as f64 + 0.5 - k.cx) / k.fx, (row as f64 + 0.5 - k.cy) / k.fy, 1.0);
            let d_world = r * d_cam;
            // With an unnormalized direction whose camera z is 1, the ray
            // parameter is the optical depth.
            out.push(reference_ray_mesh(origin, d_world, mesh).unwrap_or(0.0));
        }
    }
    out
}

/// Cuts the mesh with the horizontal plane `z = height` and casts a 2D
/// ray against the resulting segments.
pub fn reference_slice_range(mesh: &TriangleMesh, origin: [f64; 2], height: f64, bearing: f64) -> Option<f64> {
    let (dx, dy) = (bearing.cos(), bearing.sin());
    let mut best: Option<f64> = None;
    for tri in mesh.triangles() {
        let mut pts = Vec::new();
        for i in 0..3 {
            let (a, b) = (tri[i], tri[(i + 1) % 3]);
            let (da, db) = (a.z - height, b.z - height);
            if (da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0) {
                let t = da / (da - db);
                pts.push([a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)]);
            } else if da == 0.0 {
                pts.push([a.x, a.y]);
            }
        }
        if pts.len() < 2 {
            continue;
        }
        let (p, q) = (pts[0], pts[1]);
        let (ex, ey) = (q[0] - p[0], q[1] - p[1]);
        let det = dx * (-ey) - dy * (-ex);
        if det.abs() < 1e-15 {
            continue;
        }
        let (sx, sy) = (p[0] - origin[0], p[1] - origin[1]);
        let t = (sx * (-ey) - sy * (-ex)) / det;
        let u = (dx * sy - dy * sx) / det;
        if t > 0.0 && (-1e-12..=1.0 + 1e-12).contains(&u) && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    }
    best
}

/// Latitude-longitude sphere mesh.
pub fn uv_sphere(center: Point3<f64>, radius: f64, rings: usize, segments: usize) -> TriangleMesh {
    let mut vertices = vec![center + Vector3::new(0.0, 0.0, radius)];
    for i in 1..rings {
        let phi = std::f64::consts::PI * i as f64 / rings as f64;
        for j in 0..segments {
            let lam = 2.0 * std::f64::consts::PI * j as f64 / segments as f64;
            vertices.push(center + radius * Vector3::new(phi.sin() * lam.cos(), phi.sin() * lam.sin(), phi.cos()));
        }
    }
    vertices.push(center - Vector3::new(0.0, 0.0, radius));
    let bottom = vertices.len() - 1;
    let ring = |i: usize, j: usize| 1 + (i - 1) * segments + j % segments;
    let mut faces = Vec::new();
    for j in 0..segments {
        faces.push([0, ring(1, j), ring(1, j + 1)]);
        faces.push([bottom, ring(rings - 1, j + 1), ring(rings - 1, j)]);
    }
    for i in 1..rings - 1 {
        for j in 0..segments {
            faces.push([ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)]);
            faces.push([ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)]);
        }
    }
    TriangleMesh::new(vertices, faces).unwrap()
}

/// Random triangle soup, partly straddling the camera plane.
pub fn random_soup(rng: &mut ChaCha8Rng, triangles: usize) -> TriangleMesh {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for t in 0..triangles {
        let c = Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.3..4.0));
        for _ in 0..3 {
            vertices.push(
                c + Vector3::new(
                    rng.random_range(-0.8..0.8),
                    rng.random_range(-0.8..0.8),
                    rng.random_range(-0.8..0.8),
                ),
            );
        }
        faces.push([3 * t, 3 * t + 1, 3 * t + 2]);
    }
    TriangleMesh::new(vertices, faces).unwrap()
}
