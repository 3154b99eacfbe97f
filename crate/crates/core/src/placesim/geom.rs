//! Convex polygons in the horizontal plane.

pub type P2 = [f64; 2];

/// Counter-clockwise convex polygon.
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    pub pts: Vec<P2>,
}

impl Polygon {
    /// Rectangle of half-extents `(hx, hy)` rotated by `yaw` about `center`.
    pub fn rect(center: P2, hx: f64, hy: f64, yaw: f64) -> Self {
        let (s, c) = yaw.sin_cos();
        let pts = [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)]
            .iter()
            .map(|&(x, y)| [center[0] + c * x - s * y, center[1] + s * x + c * y])
            .collect();
        Self { pts }
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn aabb(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { pts: vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]] }
    }

    /// Regular `n`-gon circumscribing the circle of radius `r`.
    pub fn circle(center: P2, r: f64, n: usize) -> Self {
        let rc = r / (std::f64::consts::PI / n as f64).cos();
        let pts = (0..n)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / n as f64;
                [center[0] + rc * a.cos(), center[1] + rc * a.sin()]
            })
            .collect();
        Self { pts }
    }

    pub fn translated(&self, d: P2) -> Self {
        Self { pts: self.pts.iter().map(|p| [p[0] + d[0], p[1] + d[1]]).collect() }
    }

    pub fn bounds(&self) -> (P2, P2) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.pts {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    pub fn area(&self) -> f64 {
        let n = self.pts.len();
        (0..n)
            .map(|i| {
                let (a, b) = (self.pts[i], self.pts[(i + 1) % n]);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
            / 2.0
    }

    /// Part of the polygon with `lo ≤ coord[axis] ≤ hi`; `None` when empty.
    pub fn clip_band(&self, axis: usize, lo: f64, hi: f64) -> Option<Polygon> {
        let keep_ge = clip_half(&self.pts, |p| p[axis] - lo);
        let both = clip_half(&keep_ge, |p| hi - p[axis]);
        (both.len() >= 3 || (!both.is_empty() && lo == hi)).then_some(Polygon { pts: both })
    }

    /// Smallest `coord[axis]` among points with the other coordinate inside
    /// `[lo, hi]`.
    pub fn min_in_band(&self, axis: usize, lo: f64, hi: f64) -> Option<f64> {
        let other = 1 - axis;
        let pts = clip_half(&clip_half(&self.pts, |p| p[other] - lo), |p| hi - p[other]);
        pts.iter().map(|p| p[axis]).min_by(f64::total_cmp)
    }
}

/// Sutherland–Hodgman clip keeping points where `f(p) ≥ 0`.
fn clip_half(pts: &[P2], f: impl Fn(&P2) -> f64) -> Vec<P2> {
    let n = pts.len();
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let (a, b) = (pts[i], pts[(i + 1) % n]);
        let (fa, fb) = (f(&a), f(&b));
        if fa >= 0.0 {
            out.push(a);
        }
        if (fa >= 0.0) != (fb >= 0.0) {
            let t = fa / (fa - fb);
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

fn project(pts: &[P2], axis: P2) -> (f64, f64) {
    pts.iter().map(|p| p[0] * axis[0] + p[1] * axis[1]).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Separating-axis test. Returns the minimum translation `(axis, depth)` that
/// moves `b` out of `a` (axis points from `a` to `b`), or `None` when the
/// polygons are separated by at least `gap`.
pub fn penetration(a: &Polygon, b: &Polygon, gap: f64) -> Option<(P2, f64)> {
    let mut best: Option<(P2, f64)> = None;
    for poly in [a, b] {
        let n = poly.pts.len();
        for i in 0..n {
            let (p, q) = (poly.pts[i], poly.pts[(i + 1) % n]);
            let (ex, ey) = (q[0] - p[0], q[1] - p[1]);
            let len = (ex * ex + ey * ey).sqrt();
            if len == 0.0 {
                continue;
            }
            let axis = [ey / len, -ex / len];
            let (amin, amax) = project(&a.pts, axis);
            let (bmin, bmax) = project(&b.pts, axis);
            let overlap_ab = amax + gap - bmin;
            let overlap_ba = bmax + gap - amin;
            if overlap_ab <= 0.0 || overlap_ba <= 0.0 {
                return None;
            }
            let cand = if overlap_ab < overlap_ba { (axis, overlap_ab) } else { ([-axis[0], -axis[1]], overlap_ba) };
            if best.is_none_or(|(_, d)| cand.1 < d) {
                best = Some(cand);
            }
        }
    }
    best
}

pub fn overlaps(a: &Polygon, b: &Polygon) -> bool {
    penetration(a, b, 0.0).is_some_and(|(_, d)| d > 1e-12)
}

/// Separation distance along the best separating axis; negative when the
/// polygons intersect.
pub fn gap_between(a: &Polygon, b: &Polygon) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for poly in [a, b] {
        let n = poly.pts.len();
        for i in 0..n {
            let (p, q) = (poly.pts[i], poly.pts[(i + 1) % n]);
            let (ex, ey) = (q[0] - p[0], q[1] - p[1]);
            let len = (ex * ex + ey * ey).sqrt();
            if len == 0.0 {
                continue;
            }
            let axis = [ey / len, -ex / len];
            let (amin, amax) = project(&a.pts, axis);
            let (bmin, bmax) = project(&b.pts, axis);
            best = best.max(bmin - amax).max(amin - bmax);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_area_and_bounds() {
        let r = Polygon::rect([1.0, 2.0], 0.5, 0.25, 0.0);
        assert!((r.area() - 0.5).abs() < 1e-12);
        assert_eq!(r.bounds(), ([0.5, 1.75], [1.5, 2.25]));
    }

    #[test]
    fn sat_separation() {
        let a = Polygon::aabb(0.0, 0.0, 1.0, 1.0);
        let b = Polygon::aabb(0.9, 0.2, 2.0, 0.8);
        let (axis, d) = penetration(&a, &b, 0.0).unwrap();
        assert!((d - 0.1).abs() < 1e-12);
        assert!((axis[0] - 1.0).abs() < 1e-12);
        let c = Polygon::aabb(1.5, 0.0, 2.0, 1.0);
        assert!(penetration(&a, &c, 0.0).is_none());
        assert!((gap_between(&a, &c) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn band_minimum() {
        let r = Polygon::rect([0.0, 0.0], 1.0, 1.0, std::f64::consts::FRAC_PI_4);
        let m = r.min_in_band(1, -0.1, 0.1).unwrap();
        assert!((m + 2f64.sqrt()).abs() < 1e-9);
        assert!(r.min_in_band(1, 5.0, 6.0).is_none());
    }
}
