//! Procedural scene sampling and obstacle settling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::geom::penetration;
use super::render::Camera;
use super::{Destination, GenConfig, Kind, Primitive, Scene, WorldRect, LOCATIONS};
use crate::depthproc::CameraIntrinsics;
use crate::error::{Error, Result};

/// Minimum horizontal clearance between settled obstacles.
pub const SETTLE_GAP: f64 = 0.001;
pub const SETTLE_ITERATIONS: usize = 200;
const SCENE_RETRIES: u64 = 8;

const PALETTE: [[u8; 3]; 10] = [
    [200, 40, 40],
    [40, 160, 60],
    [40, 80, 200],
    [230, 200, 40],
    [230, 120, 30],
    [150, 60, 170],
    [40, 180, 190],
    [240, 240, 240],
    [30, 30, 30],
    [200, 120, 160],
];

/// Assemble a scene around a fixed destination, target and place point:
/// camera, ROI and work area follow from the geometry.
#[allow(clippy::too_many_arguments)]
pub fn compose_scene(
    seed: u64,
    location: usize,
    destination: Destination,
    mut target: Primitive,
    place_point: [f64; 2],
    camera_rise: f64,
    obstacles: Vec<Primitive>,
    cfg: &GenConfig,
) -> Scene {
    let h = destination.height;
    target.position = [place_point[0], place_point[1], h];
    let eye = [place_point[0], destination.y0 - 0.3, h + camera_rise];
    let look = [place_point[0], place_point[1], h];
    let intrinsics = CameraIntrinsics {
        fx: cfg.focal,
        fy: cfg.focal,
        cx: (cfg.image_width as f64 - 1.0) / 2.0,
        cy: (cfg.image_height as f64 - 1.0) / 2.0,
    };
    let camera = Camera::look_at(eye, look, intrinsics, cfg.image_width, cfg.image_height);
    let r = cfg.roi_side / 2.0;
    let roi = WorldRect { x0: place_point[0] - r, y0: place_point[1] - r, x1: place_point[0] + r, y1: place_point[1] + r };
    let work_area = WorldRect {
        x0: (place_point[0] - cfg.work_half_width).max(destination.x0),
        y0: destination.y0,
        x1: (place_point[0] + cfg.work_half_width).min(destination.x1),
        y1: (place_point[1] + cfg.work_reach).min(destination.y1),
    };
    Scene { seed, location, destination, obstacles, target, place_point, camera, roi, work_area }
}

fn sample_obstacle(rng: &mut ChaCha8Rng, id: usize, area: &WorldRect, dest: &Destination, margin: f64) -> Primitive {
    let u: f64 = rng.gen();
    let (kind, size) = if u < 0.45 {
        let l = rng.gen_range(0.04..0.14);
        let w = rng.gen_range(0.04..0.14);
        (Kind::Box, [l, w, rng.gen_range(0.03..0.25)])
    } else if u < 0.8 {
        let d = rng.gen_range(0.04..0.10);
        (Kind::Cylinder, [d, d, rng.gen_range(0.05..0.25)])
    } else {
        let d = rng.gen_range(0.04..0.10);
        (Kind::Sphere, [d, d, d])
    };
    let x = rng.gen_range(area.x0 - margin..area.x1 + margin).clamp(dest.x0 + 0.02, dest.x1 - 0.02);
    let y = rng.gen_range(area.y0 + 0.02..area.y1 + margin).clamp(dest.y0 + 0.02, dest.y1 - 0.02);
    Primitive {
        id,
        kind,
        size,
        position: [x, y, dest.height],
        yaw: rng.gen_range(0.0..std::f64::consts::PI),
        lying: false,
        color: PALETTE[rng.gen_range(0..PALETTE.len())],
    }
}

fn sample_target(rng: &mut ChaCha8Rng) -> Primitive {
    let u: f64 = rng.gen();
    let (kind, size) = if u < 0.5 {
        (Kind::Box, [rng.gen_range(0.04..0.10), rng.gen_range(0.04..0.10), rng.gen_range(0.04..0.15)])
    } else if u < 0.85 {
        let d = rng.gen_range(0.05..0.09);
        (Kind::Cylinder, [d, d, rng.gen_range(0.07..0.18)])
    } else {
        let d = rng.gen_range(0.05..0.09);
        (Kind::Sphere, [d, d, d])
    };
    Primitive { id: usize::MAX, kind, size, position: [0.0; 3], yaw: 0.0, lying: false, color: [255, 255, 255] }
}

fn draft_scene(seed: u64, cfg: &GenConfig) -> (Scene, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let location = rng.gen_range(0..LOCATIONS);
    let t = &cfg.destinations[rng.gen_range(0..cfg.destinations.len())];
    let destination =
        Destination { name: t.name.clone(), height: t.height, x0: -t.width / 2.0, x1: t.width / 2.0, y0: 0.0, y1: t.depth, color: t.color };
    let xm = t.width / 2.0 - 0.2;
    let place_point = [rng.gen_range(-xm..xm), rng.gen_range(0.12..(t.depth - 0.12).min(0.35))];
    let target = sample_target(&mut rng);
    let camera_rise = rng.gen_range(0.45..0.65);
    let mut scene = compose_scene(seed, location, destination, target, place_point, camera_rise, Vec::new(), cfg);
    let n = rng.gen_range(0..=cfg.max_obstacles);
    scene.obstacles = (0..n).map(|i| sample_obstacle(&mut rng, i, &scene.work_area, &scene.destination, cfg.scatter_margin)).collect();
    (scene, rng)
}

/// Sample a scene. Drafts that fail to settle are redrawn from derived seeds.
pub fn generate_scene(seed: u64, cfg: &GenConfig) -> Result<Scene> {
    cfg.validate()?;
    for attempt in 0..SCENE_RETRIES {
        let sub = if attempt == 0 { seed } else { gradcore::mix_seed(seed, attempt) };
        let (draft, mut rng) = draft_scene(sub, cfg);
        if let Ok(mut scene) = settle_obstacles(draft, cfg.lying_probability, &mut rng) {
            scene.seed = seed;
            return Ok(scene);
        }
    }
    Err(Error::Scene(format!("seed {seed}: obstacles failed to settle after {SCENE_RETRIES} drafts")))
}

/// Assign resting orientations, separate overlapping footprints by iterative
/// push-apart, and drop obstacles whose center leaves the destination.
pub fn settle_obstacles(mut scene: Scene, lying_probability: f64, rng: &mut impl Rng) -> Result<Scene> {
    for o in &mut scene.obstacles {
        match o.kind {
            Kind::Sphere => o.lying = true,
            Kind::Box | Kind::Cylinder => {
                if rng.gen_bool(lying_probability) {
                    o.lying = true;
                    let [a, b, c] = o.size;
                    o.size = match o.kind {
                        Kind::Box => [c, b, a],
                        _ => [c, a, a],
                    };
                }
            }
        }
    }
    let n = scene.obstacles.len();
    let mut resolved = false;
    for _ in 0..=SETTLE_ITERATIONS {
        let mut pushes = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let (fi, fj) = (scene.obstacles[i].footprint(), scene.obstacles[j].footprint());
                if let Some((axis, depth)) = penetration(&fi, &fj, SETTLE_GAP) {
                    pushes.push((i, j, axis, depth / 2.0 + 1e-6));
                }
            }
        }
        if pushes.is_empty() {
            resolved = true;
            break;
        }
        for (i, j, axis, step) in pushes {
            for (k, sign) in [(i, -1.0), (j, 1.0)] {
                let p = &mut scene.obstacles[k].position;
                p[0] += sign * axis[0] * step;
                p[1] += sign * axis[1] * step;
            }
        }
    }
    if !resolved {
        return Err(Error::Scene(format!("obstacles still overlap after {SETTLE_ITERATIONS} push-apart iterations")));
    }
    let d = scene.destination.clone();
    scene.obstacles.retain(|o| d.contains(o.position[0], o.position[1]));
    Ok(scene)
}
