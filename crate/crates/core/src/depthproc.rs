//! Depth preprocessing: back-projection, surface normals, normal-based
//! colorization and ROI crop/resize.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::Input(format!("invalid intrinsics {self:?}")));
        }
        Ok(())
    }

    /// Camera-frame point of pixel `(u, v)` at depth `z`.
    pub fn backproject(&self, u: f64, v: f64, z: f64) -> [f64; 3] {
        [(u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z]
    }

    /// Pixel coordinates of a camera-frame point with `z > 0`.
    pub fn project(&self, p: [f64; 3]) -> (f64, f64) {
        (self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy)
    }
}

/// Row-major depth map in meters; non-positive or non-finite entries are
/// invalid.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::Input(format!("depth map {width}x{height} with {} values", data.len())));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..height).flat_map(|v| (0..width).map(move |u| (u, v))).map(|(u, v)| f(u, v)).collect();
        Self { width, height, data }
    }

    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        let z = self.at(u, v);
        z > 0.0 && z.is_finite()
    }
}

/// Interleaved 8-bit RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(Error::Input(format!("rgb image {width}x{height} with {} bytes", data.len())));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        Self { width, height, data: color.iter().copied().cycle().take(width * height * 3).collect() }
    }

    pub fn pixel(&self, u: usize, v: usize) -> [u8; 3] {
        let i = (v * self.width + u) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, u: usize, v: usize, c: [u8; 3]) {
        let i = (v * self.width + u) * 3;
        self.data[i..i + 3].copy_from_slice(&c);
    }
}

/// Organized point cloud: one camera-frame point per pixel, `None` where the
/// depth is invalid.
pub fn backproject(depth: &DepthMap, k: &CameraIntrinsics) -> Vec<Option<[f64; 3]>> {
    (0..depth.height)
        .flat_map(|v| (0..depth.width).map(move |u| (u, v)))
        .map(|(u, v)| depth.is_valid(u, v).then(|| k.backproject(u as f64, v as f64, depth.at(u, v))))
        .collect()
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Difference along one image axis at `i`: central when both neighbors are
/// valid, one-sided when only one is.
fn tangent(cloud: &[Option<[f64; 3]>], i: usize, prev: Option<usize>, next: Option<usize>) -> Option<[f64; 3]> {
    let p = cloud[i]?;
    let a = prev.and_then(|j| cloud[j]);
    let b = next.and_then(|j| cloud[j]);
    match (a, b) {
        (Some(a), Some(b)) => Some(sub(b, a)),
        (None, Some(b)) => Some(sub(b, p)),
        (Some(a), None) => Some(sub(p, a)),
        (None, None) => None,
    }
}

/// Per-pixel unit normals in the camera frame, oriented so that `n_z > 0`.
/// Pixels without a valid neighbor along both image axes are `None`.
pub fn estimate_normals(depth: &DepthMap, k: &CameraIntrinsics) -> Vec<Option<[f64; 3]>> {
    let (w, h) = (depth.width, depth.height);
    let cloud = backproject(depth, k);
    let mut out = vec![None; w * h];
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            let du = tangent(&cloud, i, (u > 0).then(|| i - 1), (u + 1 < w).then(|| i + 1));
            let dv = tangent(&cloud, i, (v > 0).then(|| i - w), (v + 1 < h).then(|| i + w));
            let (Some(du), Some(dv)) = (du, dv) else {
                continue;
            };
            let n = cross(du, dv);
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if !(len > 0.0 && len.is_finite()) {
                continue;
            }
            let s = if n[2] < 0.0 { -1.0 / len } else { 1.0 / len };
            out[i] = Some([n[0] * s, n[1] * s, n[2] * s]);
        }
    }
    out
}

/// `round(255·(n + 1)/2)` with halves rounded up.
pub fn normal_to_byte(n: f64) -> u8 {
    (255.0 * (n + 1.0) / 2.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Encode surface normals as an RGB image; invalid pixels become black.
pub fn colorize_depth(depth: &DepthMap, k: &CameraIntrinsics) -> RgbImage {
    let normals = estimate_normals(depth, k);
    let data = normals
        .iter()
        .flat_map(|n| match n {
            Some(n) => [normal_to_byte(n[0]), normal_to_byte(n[1]), normal_to_byte(n[2])],
            None => [0, 0, 0],
        })
        .collect();
    RgbImage { width: depth.width, height: depth.height, data }
}

/// 3×3 median over valid neighbors; invalid pixels stay invalid.
pub fn median_filter(depth: &DepthMap) -> DepthMap {
    let (w, h) = (depth.width, depth.height);
    let mut out = depth.clone();
    let mut window = Vec::with_capacity(9);
    for v in 0..h {
        for u in 0..w {
            if !depth.is_valid(u, v) {
                continue;
            }
            window.clear();
            for y in v.saturating_sub(1)..(v + 2).min(h) {
                for x in u.saturating_sub(1)..(u + 2).min(w) {
                    if depth.is_valid(x, y) {
                        window.push(depth.at(x, y));
                    }
                }
            }
            window.sort_by(f64::total_cmp);
            out.data[v * w + u] = window[window.len() / 2];
        }
    }
    out
}

/// Axis-aligned pixel rectangle `[x0, x1) × [y0, y1)` in continuous image
/// coordinates (pixel `u` spans `[u, u+1)`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Roi {
    pub fn full(width: usize, height: usize) -> Self {
        Self { x0: 0.0, y0: 0.0, x1: width as f64, y1: height as f64 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let finite = [self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite());
        if !finite || self.width() <= 0.0 || self.height() <= 0.0 {
            return Err(Error::Input(format!("degenerate roi {self:?}")));
        }
        if self.x0 < 0.0 || self.y0 < 0.0 || self.x1 > width as f64 || self.y1 > height as f64 {
            return Err(Error::Input(format!("roi {self:?} outside {width}x{height} image")));
        }
        Ok(())
    }
}

/// Bilinear crop-and-resize of an interleaved `channels`-plane image to
/// `side × side`, sampling output pixel centers (half-pixel convention) and
/// clamping at the image border.
pub fn roi_crop_resize(src: &[f64], width: usize, height: usize, channels: usize, roi: &Roi, side: usize) -> Result<Vec<f64>> {
    if src.len() != width * height * channels || channels == 0 {
        return Err(Error::Input(format!("image buffer of {} values is not {width}x{height}x{channels}", src.len())));
    }
    if side == 0 {
        return Err(Error::Input("output side must be positive".into()));
    }
    roi.validate(width, height)?;
    let sx = roi.width() / side as f64;
    let sy = roi.height() / side as f64;
    let mut out = vec![0.0; side * side * channels];
    let axis = |start: f64, scale: f64, i: usize, len: usize| -> (usize, usize, f64) {
        let p = (start + (i as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = p.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, p - i0 as f64)
    };
    for oy in 0..side {
        let (y0, y1, fy) = axis(roi.y0, sy, oy, height);
        for ox in 0..side {
            let (x0, x1, fx) = axis(roi.x0, sx, ox, width);
            for c in 0..channels {
                let at = |x: usize, y: usize| src[(y * width + x) * channels + c];
                let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
                let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
                out[(oy * side + ox) * channels + c] = top * (1.0 - fy) + bottom * fy;
            }
        }
    }
    Ok(out)
}

/// [`roi_crop_resize`] on an 8-bit RGB image, rounded back to bytes.
pub fn crop_resize_rgb(img: &RgbImage, roi: &Roi, side: usize) -> Result<RgbImage> {
    let src: Vec<f64> = img.data.iter().map(|&b| b as f64).collect();
    let out = roi_crop_resize(&src, img.width, img.height, 3, roi, side)?;
    Ok(RgbImage { width: side, height: side, data: out.iter().map(|v| (v + 0.5).floor().clamp(0.0, 255.0) as u8).collect() })
}

/// Network encoding of an RGB image: planar `[3, side, side]` with values
/// `v/255 − 0.5`, appended to `out`.
pub fn encode_planar(img: &RgbImage, out: &mut Vec<f64>) {
    let n = img.width * img.height;
    for c in 0..3 {
        out.extend((0..n).map(|i| img.data[i * 3 + c] as f64 / 255.0 - 0.5));
    }
}
