//! Rule-based baseline: region-growing plane detection on the depth image
//! and a free-area test for the target footprint inside the ROI.

use std::collections::VecDeque;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::depthproc::{estimate_normals, CameraIntrinsics, DepthMap};
use crate::placesim::{Camera, Label, WorldRect};

pub use crate::depthproc::backproject;

/// Accuracy of the plane-detection baseline reported for the photo-realistic
/// benchmark; kept for reference only.
pub const REFERENCE_ACCURACY: f64 = 0.825;

type V3 = [f64; 3];

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Organized point cloud with per-pixel normals.
#[derive(Clone, Debug)]
pub struct Cloud {
    pub width: usize,
    pub height: usize,
    pub points: Vec<Option<V3>>,
    pub normals: Vec<Option<V3>>,
}

impl Cloud {
    /// Camera-frame cloud.
    pub fn from_depth(depth: &DepthMap, k: &CameraIntrinsics) -> Self {
        Self { width: depth.width, height: depth.height, points: backproject(depth, k), normals: estimate_normals(depth, k) }
    }

    /// Same cloud expressed in the world frame of `cam`.
    pub fn to_world(&self, cam: &Camera) -> Self {
        Self {
            width: self.width,
            height: self.height,
            points: self.points.iter().map(|p| p.map(|p| cam.to_world(p))).collect(),
            normals: self.normals.iter().map(|n| n.map(|n| cam.dir_to_world(n))).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    /// Unit normal; points satisfy `normal · p = offset`.
    pub normal: V3,
    pub offset: f64,
    /// Pixel indices, ascending.
    pub inliers: Vec<usize>,
}

impl Plane {
    pub fn count(&self) -> usize {
        self.inliers.len()
    }

    pub fn distance(&self, p: V3) -> f64 {
        (dot(self.normal, p) - self.offset).abs()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlaneParams {
    pub max_angle_deg: f64,
    pub max_distance: f64,
    pub min_inliers: usize,
}

impl Default for PlaneParams {
    fn default() -> Self {
        Self { max_angle_deg: 10.0, max_distance: 0.005, min_inliers: 50 }
    }
}

/// Least-squares plane through `pts`, normal oriented along `hint`.
fn fit_plane(cloud: &Cloud, idx: &[usize], hint: V3) -> Option<(V3, f64)> {
    if idx.len() < 3 {
        return None;
    }
    let n = idx.len() as f64;
    let mut c = Vector3::zeros();
    for &i in idx {
        c += Vector3::from(cloud.points[i]?);
    }
    c /= n;
    let mut cov = Matrix3::zeros();
    for &i in idx {
        let d = Vector3::from(cloud.points[i]?) - c;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imin();
    let mut normal: V3 = eig.eigenvectors.column(k).into_owned().into();
    if !normal.iter().all(|v| v.is_finite()) {
        return None;
    }
    if dot(normal, hint) < 0.0 {
        normal = normal.map(|v| -v);
    }
    Some((normal, dot(normal, c.into())))
}

/// Mean normal deviation `1 − n·n_j` over valid 8-neighbors.
fn curvature(cloud: &Cloud) -> Vec<f64> {
    let (w, h) = (cloud.width, cloud.height);
    let mut out = vec![f64::INFINITY; w * h];
    for v in 0..h {
        for u in 0..w {
            let Some(n) = cloud.normals[v * w + u] else { continue };
            let (mut s, mut k) = (0.0, 0);
            for y in v.saturating_sub(1)..(v + 2).min(h) {
                for x in u.saturating_sub(1)..(u + 2).min(w) {
                    if (x, y) == (u, v) {
                        continue;
                    }
                    if let Some(m) = cloud.normals[y * w + x] {
                        s += 1.0 - dot(n, m);
                        k += 1;
                    }
                }
            }
            if k > 0 {
                out[v * w + u] = s / k as f64;
            }
        }
    }
    out
}

/// Greedy region growing: seed at the lowest-curvature unassigned pixel, grow
/// over 4-neighbors within the normal-angle and point-to-plane thresholds,
/// refit after each growth ring. Segments below `min_inliers` are discarded.
/// Planes are returned by inlier count, descending.
pub fn extract_planes(cloud: &Cloud, params: &PlaneParams) -> Vec<Plane> {
    let (w, h) = (cloud.width, cloud.height);
    let cos_max = params.max_angle_deg.to_radians().cos();
    let curv = curvature(cloud);
    let mut seeds: Vec<usize> = (0..w * h).filter(|&i| cloud.points[i].is_some() && cloud.normals[i].is_some()).collect();
    seeds.sort_by(|&a, &b| curv[a].total_cmp(&curv[b]).then(a.cmp(&b)));
    let mut assigned = vec![false; w * h];
    let mut planes = Vec::new();
    for seed in seeds {
        if assigned[seed] {
            continue;
        }
        assigned[seed] = true;
        let (Some(p0), Some(n0)) = (cloud.points[seed], cloud.normals[seed]) else { continue };
        let (mut normal, mut offset) = (n0, dot(n0, p0));
        let mut region = vec![seed];
        let mut ring = VecDeque::from([seed]);
        while !ring.is_empty() {
            let mut next = VecDeque::new();
            while let Some(i) = ring.pop_front() {
                let (u, v) = (i % w, i / w);
                let nbrs = [(u > 0).then(|| i - 1), (u + 1 < w).then(|| i + 1), (v > 0).then(|| i - w), (v + 1 < h).then(|| i + w)];
                for j in nbrs.into_iter().flatten() {
                    if assigned[j] {
                        continue;
                    }
                    let (Some(p), Some(n)) = (cloud.points[j], cloud.normals[j]) else { continue };
                    if dot(n, normal).abs() >= cos_max && (dot(normal, p) - offset).abs() < params.max_distance {
                        assigned[j] = true;
                        region.push(j);
                        next.push_back(j);
                    }
                }
            }
            if let Some((n, d)) = fit_plane(cloud, &region, normal) {
                normal = n;
                offset = d;
            }
            ring = next;
        }
        if region.len() < params.min_inliers {
            continue;
        }
        if let Some((n, d)) = fit_plane(cloud, &region, normal) {
            normal = n;
            offset = d;
        }
        let mut inliers: Vec<usize> = region
            .into_iter()
            .filter(|&i| cloud.points[i].is_some_and(|p| (dot(normal, p) - offset).abs() <= params.max_distance))
            .collect();
        if inliers.len() < params.min_inliers {
            continue;
        }
        inliers.sort_unstable();
        planes.push(Plane { normal, offset, inliers });
    }
    planes.sort_by(|a, b| b.count().cmp(&a.count()));
    planes
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineParams {
    pub planes: PlaneParams,
    /// Maximum tilt of a supporting plane from vertical.
    pub max_tilt_deg: f64,
    /// Tolerance around the expected surface height.
    pub height_tolerance: f64,
    /// Inflation of the footprint on every side.
    pub margin: f64,
    /// Side of the free-space grid cells.
    pub cell: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self { planes: PlaneParams::default(), max_tilt_deg: 15.0, height_tolerance: 0.02, margin: 0.01, cell: 0.01 }
    }
}

/// Free-space occupancy of the ROI on a `cell`-sized grid: a cell is free when
/// its center on the surface is seen as an inlier of a supporting plane.
pub fn free_grid(
    planes: &[Plane],
    cam: &Camera,
    roi: &WorldRect,
    surface_height: f64,
    params: &BaselineParams,
) -> (usize, usize, Vec<bool>) {
    let cos_tilt = params.max_tilt_deg.to_radians().cos();
    let mut support = vec![false; cam.width * cam.height];
    for p in planes {
        let level = p.normal[2].abs() >= cos_tilt && (p.offset / p.normal[2] - surface_height).abs() <= params.height_tolerance;
        if level {
            for &i in &p.inliers {
                support[i] = true;
            }
        }
    }
    let nx = ((roi.x1 - roi.x0) / params.cell).round().max(1.0) as usize;
    let ny = ((roi.y1 - roi.y0) / params.cell).round().max(1.0) as usize;
    let (cx, cy) = ((roi.x1 - roi.x0) / nx as f64, (roi.y1 - roi.y0) / ny as f64);
    let mut grid = vec![false; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let c = [roi.x0 + (i as f64 + 0.5) * cx, roi.y0 + (j as f64 + 0.5) * cy, surface_height];
            let Some((u, v, _)) = cam.project(c) else { continue };
            let (u, v) = (u.round(), v.round());
            if u >= 0.0 && v >= 0.0 && (u as usize) < cam.width && (v as usize) < cam.height {
                grid[j * nx + i] = support[v as usize * cam.width + u as usize];
            }
        }
    }
    (nx, ny, grid)
}

/// Whether a fully free `fw × fh` window exists in the grid.
pub fn window_fits(nx: usize, ny: usize, grid: &[bool], fw: usize, fh: usize) -> bool {
    if fw == 0 || fh == 0 {
        return true;
    }
    if fw > nx || fh > ny {
        return false;
    }
    let mut sum = vec![0usize; (nx + 1) * (ny + 1)];
    for j in 0..ny {
        for i in 0..nx {
            let occupied = !grid[j * nx + i] as usize;
            sum[(j + 1) * (nx + 1) + i + 1] = occupied + sum[j * (nx + 1) + i + 1] + sum[(j + 1) * (nx + 1) + i] - sum[j * (nx + 1) + i];
        }
    }
    let at = |i: usize, j: usize| sum[j * (nx + 1) + i];
    (0..=ny - fh).any(|j| (0..=nx - fw).any(|i| at(i + fw, j + fh) + at(i, j) == at(i + fw, j) + at(i, j + fh)))
}

/// Largest free axis-aligned rectangle, as `(width, height)` in cells.
pub fn largest_free_rectangle(nx: usize, ny: usize, grid: &[bool]) -> (usize, usize) {
    let mut heights = vec![0usize; nx];
    let mut best = (0, 0);
    for j in 0..ny {
        for i in 0..nx {
            heights[i] = if grid[j * nx + i] { heights[i] + 1 } else { 0 };
        }
        for i in 0..nx {
            let mut hmin = usize::MAX;
            for k in i..nx {
                hmin = hmin.min(heights[k]);
                if hmin == 0 {
                    break;
                }
                let (w, h) = (k - i + 1, hmin);
                if w * h > best.0 * best.1 {
                    best = (w, h);
                }
            }
        }
    }
    best
}

/// NDC iff the inflated footprint (`width` along x, `length` along y) fits
/// in the free part of the ROI; DC when no supporting plane is found.
pub fn predict_free_area(
    planes: &[Plane],
    cam: &Camera,
    roi: &WorldRect,
    footprint: (f64, f64),
    surface_height: f64,
    params: &BaselineParams,
) -> Label {
    let (nx, ny, grid) = free_grid(planes, cam, roi, surface_height, params);
    if !grid.iter().any(|&f| f) {
        return Label::DC;
    }
    let cells = |l: f64| ((l + 2.0 * params.margin) / params.cell - 1e-9).ceil().max(0.0) as usize;
    Label::from_dc(!window_fits(nx, ny, &grid, cells(footprint.0), cells(footprint.1)))
}

/// Full baseline on one depth image.
pub fn predict_depth(
    depth: &DepthMap,
    cam: &Camera,
    roi: &WorldRect,
    footprint: (f64, f64),
    surface_height: f64,
    params: &BaselineParams,
) -> Label {
    let cloud = Cloud::from_depth(depth, &cam.intrinsics).to_world(cam);
    let planes = extract_planes(&cloud, &params.planes);
    predict_free_area(&planes, cam, roi, footprint, surface_height, params)
}
