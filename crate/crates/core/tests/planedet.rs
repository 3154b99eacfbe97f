mod common;

use common::*;
use ponnet::depthproc::{CameraIntrinsics, DepthMap};
use ponnet::placesim::{render, Kind, Label};
use ponnet::planedet::*;
use proptest::prelude::*;

const W: usize = 48;
const H: usize = 40;

fn k() -> CameraIntrinsics {
    CameraIntrinsics { fx: 40.0, fy: 40.0, cx: (W as f64 - 1.0) / 2.0, cy: (H as f64 - 1.0) / 2.0 }
}

/// Depth of the plane `n · p = d` seen by the camera (0 where the ray misses).
fn plane_depth(n: [f64; 3], d: f64, u: usize, v: usize) -> f64 {
    let k = k();
    let ray = [(u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0];
    let den = n[0] * ray[0] + n[1] * ray[1] + n[2] * ray[2];
    let z = d / den;
    if den.abs() > 1e-9 && z > 0.0 {
        z
    } else {
        0.0
    }
}

fn angle_deg(a: [f64; 3], b: [f64; 3]) -> f64 {
    let c = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).abs().min(1.0);
    c.acos().to_degrees()
}

#[test]
fn backprojection_examples() {
    let k = k();
    let d = DepthMap::from_fn(W, H, |_, _| 1.0);
    let cloud = backproject(&d, &k);
    let p = cloud[20 * W + 10].unwrap();
    let q = k.backproject(k.cx, k.cy, 2.5);
    assert_eq!(q, [0.0, 0.0, 2.5]);
    assert!((k.backproject(k.cx + k.fx, k.cy, 1.0)[0] - 1.0).abs() < 1e-12);
    let (u, v) = k.project(p);
    assert!((u - 10.0).abs() < 1e-9 && (v - 20.0).abs() < 1e-9);
}

#[test]
fn single_tilted_surface_is_one_plane() {
    let n = {
        let t = 30f64.to_radians();
        [0.0, -t.sin(), t.cos()]
    };
    let d = DepthMap::from_fn(W, H, |u, v| plane_depth(n, 1.2, u, v));
    let cloud = Cloud::from_depth(&d, &k());
    let planes = extract_planes(&cloud, &PlaneParams::default());
    assert_eq!(planes.len(), 1);
    assert!(angle_deg(planes[0].normal, n) < 0.5);
    assert!(planes[0].count() > W * H * 9 / 10);
}

#[test]
fn floor_and_wall_are_two_planes() {
    // camera tilted down: floor n=(0,-cos,sin) stretch, wall facing camera
    let floor = {
        let t = 35f64.to_radians();
        [0.0, -t.cos(), t.sin()]
    };
    let wall = [0.0, 0.0, 1.0];
    let d = DepthMap::from_fn(W, H, |u, v| {
        let a = plane_depth(floor, 0.6, u, v);
        let b = plane_depth(wall, 1.5, u, v);
        match (a > 0.0, b > 0.0) {
            (true, true) => a.min(b),
            (true, false) => a,
            _ => b,
        }
    });
    let planes = extract_planes(&Cloud::from_depth(&d, &k()), &PlaneParams::default());
    assert_eq!(planes.len(), 2, "{:?}", planes.iter().map(Plane::count).collect::<Vec<_>>());
    let mut matched = [false; 2];
    for p in &planes {
        if angle_deg(p.normal, floor) < 2.0 {
            matched[0] = true;
        }
        if angle_deg(p.normal, wall) < 2.0 {
            matched[1] = true;
        }
    }
    assert_eq!(matched, [true, true]);
    assert!(planes[0].count() >= planes[1].count());
}

#[test]
fn invalid_depth_gives_no_planes() {
    let d = DepthMap::from_fn(W, H, |_, _| 0.0);
    assert!(extract_planes(&Cloud::from_depth(&d, &k()), &PlaneParams::default()).is_empty());
}

#[test]
fn inliers_respect_distance_threshold() {
    let d = DepthMap::from_fn(W, H, |u, v| 1.0 + 0.002 * ((u * 13 + v * 7) % 3) as f64);
    let cloud = Cloud::from_depth(&d, &k());
    for p in extract_planes(&cloud, &PlaneParams::default()) {
        assert!(((p.normal[0].powi(2) + p.normal[1].powi(2) + p.normal[2].powi(2)).sqrt() - 1.0).abs() < 1e-9);
        for &i in &p.inliers {
            assert!(p.distance(cloud.points[i].unwrap()) <= 0.005);
        }
    }
}

fn predict(scene: &ponnet::placesim::Scene, footprint: (f64, f64)) -> Label {
    let r = render(scene);
    predict_depth(&r.depth, &scene.camera, &scene.roi, footprint, scene.destination.height, &BaselineParams::default())
}

#[test]
fn empty_roi_is_free() {
    for h in [0.4, 0.72, 1.1] {
        assert_eq!(predict(&hand_scene(h, [0.0, 0.3], vec![]), (0.06, 0.06)), Label::NDC);
    }
}

#[test]
fn covered_roi_is_occupied() {
    let b = prim(0, Kind::Box, [0.22, 0.22, 0.15], 0.0, 0.3, 0.72, false);
    assert_eq!(predict(&hand_scene(0.72, [0.0, 0.3], vec![b]), (0.06, 0.06)), Label::DC);
}

#[test]
fn no_supporting_plane_is_dc() {
    let s = hand_scene(0.72, [0.0, 0.3], vec![]);
    let p = predict_free_area(&[], &s.camera, &s.roi, (0.05, 0.05), 0.72, &BaselineParams::default());
    assert_eq!(p, Label::DC);
}

#[test]
fn grid_helpers() {
    // 4x3 grid with one occupied cell at (1, 1)
    let mut g = vec![true; 12];
    g[4 + 1] = false;
    assert!(window_fits(4, 3, &g, 2, 3));
    assert!(!window_fits(4, 3, &g, 3, 2));
    assert!(window_fits(4, 3, &g, 4, 1));
    assert_eq!(largest_free_rectangle(4, 3, &g), (2, 3));
}

#[test]
fn monotone_in_obstacles_and_footprint() {
    let base = hand_scene(0.72, [0.0, 0.3], vec![]);
    let mut prev = Label::NDC;
    let mut obstacles = Vec::new();
    for (i, &(x, y)) in [(0.05, 0.33), (-0.05, 0.27), (0.0, 0.3), (0.06, 0.24)].iter().enumerate() {
        obstacles.push(prim(i, Kind::Box, [0.05, 0.05, 0.05], x, y, 0.72, false));
        let mut s = base.clone();
        s.obstacles = obstacles.clone();
        let l = predict(&s, (0.05, 0.05));
        assert!(!(prev.is_dc() && !l.is_dc()));
        prev = l;
    }
    let mut last = Label::NDC;
    for w in [0.02, 0.05, 0.08, 0.12, 0.2] {
        let l = predict(&base, (w, w));
        assert!(!(last.is_dc() && !l.is_dc()));
        last = l;
    }
    assert_eq!(last, Label::DC);
}

proptest! {
    #[test]
    fn reprojection_round_trip(u in 0.0f64..64.0, v in 0.0f64..48.0, z in 0.1f64..5.0) {
        let k = k();
        let (pu, pv) = k.project(k.backproject(u, v, z));
        prop_assert!((pu - u).abs() < 1e-9 && (pv - v).abs() < 1e-9);
    }

    #[test]
    fn larger_footprint_never_frees(grid in proptest::collection::vec(any::<bool>(), 36), a in 0usize..7, b in 0usize..7) {
        for (fw, fh) in [(a, b), (a + 1, b), (a, b + 1)] {
            let small = window_fits(6, 6, &grid, a, b);
            let big = window_fits(6, 6, &grid, fw, fh);
            prop_assert!(small || !big);
        }
    }
}
