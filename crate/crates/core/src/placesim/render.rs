//! Pinhole camera and z-buffer rasterizer.

use serde::{Deserialize, Serialize};

use super::{Kind, Primitive, Scene, WorldRect, LOCATIONS};
use crate::depthproc::{CameraIntrinsics, DepthMap, RgbImage, Roi};

type V3 = [f64; 3];

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: V3, b: V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(a: V3) -> V3 {
    let l = dot(a, a).sqrt();
    [a[0] / l, a[1] / l, a[2] / l]
}

/// Pinhole camera with OpenCV axes (x right, y down, z forward).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    pub width: usize,
    pub height: usize,
    /// Optical center in world coordinates.
    pub position: V3,
    /// World-to-camera rotation; rows are the camera x, y, z axes in world
    /// coordinates.
    pub rotation: [V3; 3],
}

impl Camera {
    /// Camera at `eye` looking at `target` with world `z` up.
    pub fn look_at(eye: V3, target: V3, intrinsics: CameraIntrinsics, width: usize, height: usize) -> Self {
        let f = normalize(sub(target, eye));
        let r = normalize(cross(f, [0.0, 0.0, 1.0]));
        let d = cross(f, r);
        Self { intrinsics, width, height, position: eye, rotation: [r, d, f] }
    }

    pub fn to_camera(&self, p: V3) -> V3 {
        let q = sub(p, self.position);
        [dot(self.rotation[0], q), dot(self.rotation[1], q), dot(self.rotation[2], q)]
    }

    pub fn to_world(&self, q: V3) -> V3 {
        let r = &self.rotation;
        let mut p = self.position;
        for k in 0..3 {
            p[k] += r[0][k] * q[0] + r[1][k] * q[1] + r[2][k] * q[2];
        }
        p
    }

    /// Rotate a camera-frame direction into the world frame.
    pub fn dir_to_world(&self, q: V3) -> V3 {
        let r = &self.rotation;
        [
            r[0][0] * q[0] + r[1][0] * q[1] + r[2][0] * q[2],
            r[0][1] * q[0] + r[1][1] * q[1] + r[2][1] * q[2],
            r[0][2] * q[0] + r[1][2] * q[1] + r[2][2] * q[2],
        ]
    }

    /// Pixel coordinates and camera depth of a world point in front of the
    /// camera.
    pub fn project(&self, p: V3) -> Option<(f64, f64, f64)> {
        let q = self.to_camera(p);
        (q[2] > 1e-9).then(|| {
            let (u, v) = self.intrinsics.project(q);
            (u, v, q[2])
        })
    }

    /// Image window covering a surface rectangle between heights `z0` and
    /// `z1`, clamped to the image.
    pub fn window(&self, r: &WorldRect, z0: f64, z1: f64) -> Roi {
        let (mut u0, mut v0, mut u1, mut v1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &x in &[r.x0, r.x1] {
            for &y in &[r.y0, r.y1] {
                for &z in &[z0, z1] {
                    if let Some((u, v, _)) = self.project([x, y, z]) {
                        u0 = u0.min(u);
                        v0 = v0.min(v);
                        u1 = u1.max(u + 1.0);
                        v1 = v1.max(v + 1.0);
                    }
                }
            }
        }
        let (w, h) = (self.width as f64, self.height as f64);
        let clamp = |a: f64, hi: f64| a.clamp(0.0, hi);
        let mut roi =
            Roi { x0: clamp(u0.floor(), w - 1.0), y0: clamp(v0.floor(), h - 1.0), x1: clamp(u1.ceil(), w), y1: clamp(v1.ceil(), h) };
        roi.x1 = roi.x1.max(roi.x0 + 1.0);
        roi.y1 = roi.y1.max(roi.y0 + 1.0);
        roi
    }
}

struct Tri {
    v: [V3; 3],
    color: [u8; 3],
}

struct Mesh {
    tris: Vec<Tri>,
}

impl Mesh {
    fn quad(&mut self, a: V3, b: V3, c: V3, d: V3, color: [u8; 3]) {
        self.tris.push(Tri { v: [a, b, c], color });
        self.tris.push(Tri { v: [a, c, d], color });
    }

    /// Prism over a convex horizontal polygon from `z0` to `z1`.
    fn prism(&mut self, poly: &[[f64; 2]], z0: f64, z1: f64, color: [u8; 3]) {
        let n = poly.len();
        for i in 0..n {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            self.quad([p[0], p[1], z0], [q[0], q[1], z0], [q[0], q[1], z1], [p[0], p[1], z1], color);
        }
        for i in 1..n - 1 {
            let (a, b, c) = (poly[0], poly[i], poly[i + 1]);
            self.tris.push(Tri { v: [[a[0], a[1], z1], [b[0], b[1], z1], [c[0], c[1], z1]], color });
        }
    }

    fn primitive(&mut self, p: &Primitive) {
        let [x, y, z] = p.position;
        match p.kind {
            Kind::Box => self.prism(&p.footprint().pts, z, z + p.size[2], p.color),
            Kind::Cylinder if !p.lying => self.prism(&p.footprint().pts, z, z + p.size[2], p.color),
            Kind::Cylinder => {
                // axis along the yaw direction, circular section in the
                // vertical plane across it
                let (s, c) = p.yaw.sin_cos();
                let (axis, across) = ([c, s, 0.0], [-s, c, 0.0]);
                let (half, r) = (p.size[0] / 2.0, p.size[2] / 2.0);
                let n = 16;
                let ring = |k: usize, e: f64| -> V3 {
                    let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    let (sa, ca) = a.sin_cos();
                    [x + axis[0] * e + across[0] * r * ca, y + axis[1] * e + across[1] * r * ca, z + r + r * sa]
                };
                for k in 0..n {
                    self.quad(ring(k, -half), ring(k + 1, -half), ring(k + 1, half), ring(k, half), p.color);
                    for e in [-half, half] {
                        let center = [x + axis[0] * e, y + axis[1] * e, z + r];
                        self.tris.push(Tri { v: [center, ring(k, e), ring(k + 1, e)], color: p.color });
                    }
                }
            }
            Kind::Sphere => {
                let r = p.size[2] / 2.0;
                let (stacks, slices) = (8, 16);
                let pt = |i: usize, j: usize| -> V3 {
                    let th = std::f64::consts::PI * i as f64 / stacks as f64;
                    let ph = 2.0 * std::f64::consts::PI * j as f64 / slices as f64;
                    [x + r * th.sin() * ph.cos(), y + r * th.sin() * ph.sin(), z + r + r * th.cos()]
                };
                for i in 0..stacks {
                    for j in 0..slices {
                        let (a, b, c, d) = (pt(i, j), pt(i + 1, j), pt(i + 1, j + 1), pt(i, j + 1));
                        if i > 0 {
                            self.tris.push(Tri { v: [a, b, d], color: p.color });
                        }
                        if i + 1 < stacks {
                            self.tris.push(Tri { v: [b, c, d], color: p.color });
                        }
                    }
                }
            }
        }
    }
}

/// Per-location appearance: light direction, floor, wall and background.
pub struct Ambience {
    pub light: V3,
    pub floor: [u8; 3],
    pub wall: [u8; 3],
    pub background: [u8; 3],
    pub wall_distance: f64,
}

pub fn ambience(location: usize) -> Ambience {
    let l = location % LOCATIONS;
    let a = 2.0 * std::f64::consts::PI * l as f64 / LOCATIONS as f64;
    let floors = [[160, 130, 100], [120, 120, 125], [190, 175, 150], [95, 75, 60]];
    let walls = [[230, 225, 210], [200, 215, 230], [235, 215, 200], [210, 230, 210], [180, 180, 190], [240, 240, 235]];
    Ambience {
        light: normalize([0.5 * a.cos(), 0.5 * a.sin() - 0.3, 1.0]),
        floor: floors[l % floors.len()],
        wall: walls[l % walls.len()],
        background: [40 + (l as u8) * 10, 50, 70],
        wall_distance: 0.5 + 0.1 * (l % 4) as f64,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rendered {
    pub rgb: RgbImage,
    /// Camera-frame depth in meters; 0 where nothing was hit.
    pub depth: DepthMap,
}

const NEAR: f64 = 0.01;

/// Render the destination, obstacles, floor and wall (the target is in the
/// hand and not drawn).
pub fn render(scene: &Scene) -> Rendered {
    let cam = &scene.camera;
    let amb = ambience(scene.location);
    let d = &scene.destination;
    let mut mesh = Mesh { tris: Vec::new() };
    let big = 8.0;
    mesh.quad([-big, -big, 0.0], [big, -big, 0.0], [big, big, 0.0], [-big, big, 0.0], amb.floor);
    let wy = d.y1 + amb.wall_distance;
    mesh.quad([-big, wy, 0.0], [big, wy, 0.0], [big, wy, 3.0], [-big, wy, 3.0], amb.wall);
    let top = [[d.x0, d.y0], [d.x1, d.y0], [d.x1, d.y1], [d.x0, d.y1]];
    mesh.prism(&top, 0.0, d.height, d.color);
    for o in &scene.obstacles {
        mesh.primitive(o);
    }
    rasterize(cam, &mesh, &amb)
}

fn rasterize(cam: &Camera, mesh: &Mesh, amb: &Ambience) -> Rendered {
    let (w, h) = (cam.width, cam.height);
    let mut zbuf = vec![f64::INFINITY; w * h];
    let mut rgb = RgbImage::filled(w, h, amb.background);
    let k = &cam.intrinsics;
    for tri in &mesh.tris {
        let n = normalize(cross(sub(tri.v[1], tri.v[0]), sub(tri.v[2], tri.v[0])));
        let to_eye = sub(cam.position, tri.v[0]);
        let n = if dot(n, to_eye) < 0.0 { [-n[0], -n[1], -n[2]] } else { n };
        let shade = 0.4 + 0.6 * dot(n, amb.light).max(0.0);
        let color = tri.color.map(|c| (c as f64 * shade).round().clamp(0.0, 255.0) as u8);
        let cam_pts: Vec<V3> = tri.v.iter().map(|&p| cam.to_camera(p)).collect();
        let poly = clip_near(&cam_pts);
        if poly.len() < 3 {
            continue;
        }
        let proj: Vec<(f64, f64, f64)> = poly
            .iter()
            .map(|q| {
                let (u, v) = k.project(*q);
                (u, v, 1.0 / q[2])
            })
            .collect();
        for i in 1..proj.len() - 1 {
            fill(&[proj[0], proj[i], proj[i + 1]], w, h, &mut zbuf, &mut rgb, color);
        }
    }
    let depth = zbuf.iter().map(|&z| if z.is_finite() { z } else { 0.0 }).collect();
    Rendered { rgb, depth: DepthMap { width: w, height: h, data: depth } }
}

fn clip_near(pts: &[V3]) -> Vec<V3> {
    let n = pts.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        let (fa, fb) = (a[2] - NEAR, b[2] - NEAR);
        if fa >= 0.0 {
            out.push(a);
        }
        if (fa >= 0.0) != (fb >= 0.0) {
            let t = fa / (fa - fb);
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]);
        }
    }
    out
}

/// Fill a projected triangle `(u, v, 1/z)` sampling pixel centers at integer
/// coordinates; `1/z` is interpolated linearly in screen space.
fn fill(t: &[(f64, f64, f64); 3], w: usize, h: usize, zbuf: &mut [f64], rgb: &mut RgbImage, color: [u8; 3]) {
    let area = (t[1].0 - t[0].0) * (t[2].1 - t[0].1) - (t[2].0 - t[0].0) * (t[1].1 - t[0].1);
    if area.abs() < 1e-12 {
        return;
    }
    let umin = t.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).ceil().max(0.0);
    let umax = t.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).floor().min(w as f64 - 1.0);
    let vmin = t.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).ceil().max(0.0);
    let vmax = t.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).floor().min(h as f64 - 1.0);
    if umin > umax || vmin > vmax {
        return;
    }
    let edge = |a: (f64, f64, f64), b: (f64, f64, f64), x: f64, y: f64| (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0);
    let eps = -1e-9 * area.abs();
    for v in vmin as usize..=vmax as usize {
        for u in umin as usize..=umax as usize {
            let (x, y) = (u as f64, v as f64);
            let w0 = edge(t[1], t[2], x, y) / area;
            let w1 = edge(t[2], t[0], x, y) / area;
            let w2 = edge(t[0], t[1], x, y) / area;
            if w0 * area.abs() < eps || w1 * area.abs() < eps || w2 * area.abs() < eps {
                continue;
            }
            let inv_z = w0 * t[0].2 + w1 * t[1].2 + w2 * t[2].2;
            if inv_z <= 0.0 {
                continue;
            }
            let z = 1.0 / inv_z;
            let i = v * w + u;
            if z < zbuf[i] {
                zbuf[i] = z;
                rgb.set(u, v, color);
            }
        }
    }
}

/// Ray–plane oracle: camera depth at pixel `(u, v)` of the horizontal plane
/// `z = height`, if the ray hits it in front of the camera.
pub fn plane_depth(cam: &Camera, u: f64, v: f64, height: f64) -> Option<f64> {
    let k = &cam.intrinsics;
    let d = cam.dir_to_world([(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0]);
    if d[2].abs() < 1e-12 {
        return None;
    }
    let t = (height - cam.position[2]) / d[2];
    (t > 0.0).then_some(t)
}

/// Model crop window of a scene: the work area between the surface and
/// 0.15 m above it.
pub fn crop_window(scene: &Scene) -> Roi {
    let h = scene.destination.height;
    scene.camera.window(&scene.work_area, h, h + 0.15)
}
