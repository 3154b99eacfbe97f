#![allow(dead_code, unused_imports)]

use ponnet::placesim::scene::compose_scene;
use ponnet::placesim::{Destination, GenConfig, Kind, Primitive, Scene};

pub fn table(height: f64) -> Destination {
    Destination { name: "test_table".into(), height, x0: -0.5, x1: 0.5, y0: 0.0, y1: 0.7, color: [150, 110, 80] }
}

pub fn prim(id: usize, kind: Kind, size: [f64; 3], x: f64, y: f64, base: f64, lying: bool) -> Primitive {
    Primitive { id, kind, size, position: [x, y, base], yaw: 0.0, lying, color: [200, 40, 40] }
}

/// 6 cm cube target.
pub fn cube_target() -> Primitive {
    prim(usize::MAX, Kind::Box, [0.06; 3], 0.0, 0.0, 0.0, false)
}

pub fn hand_scene(height: f64, place: [f64; 2], obstacles: Vec<Primitive>) -> Scene {
    compose_scene(0, 0, table(height), cube_target(), place, 0.5, obstacles, &GenConfig::default())
}

/// Upright 0.05 × 0.05 × 0.20 box 12 cm in front of the place point.
pub fn slender_box_scene(height: f64, x: f64) -> Scene {
    let b = prim(0, Kind::Box, [0.05, 0.05, 0.20], x, 0.18, height, false);
    hand_scene(height, [x, 0.30], vec![b])
}

/// 12 cm sphere near the back edge, in the target's path; it rolls off.
pub fn edge_sphere_scene(height: f64, x: f64) -> Scene {
    let s = prim(0, Kind::Sphere, [0.12; 3], x, 0.50, height, true);
    hand_scene(height, [x, 0.45], vec![s])
}

/// Squat box in the path; slides without toppling.
pub fn squat_box_scene(height: f64, x: f64) -> Scene {
    let b = prim(0, Kind::Box, [0.12, 0.12, 0.15], x, 0.15, height, false);
    hand_scene(height, [x, 0.30], vec![b])
}

use gradcore::{Graph, Mode, ParamStore, Var};
use ponnet::harness::gradcheck::micro_model_check;
pub use ponnet::harness::gradcheck::{micro_config, random_batch, random_labels};
use ponnet::model::{total_loss, Batch, InputMode, PonNet, Variant};

/// Scalar training objective of `model` on `batch` against `store`.
pub fn objective(model: &PonNet, g: &mut Graph, store: &mut ParamStore, batch: &Batch, labels: &[gradcore::Tensor]) -> ponnet::Result<Var> {
    let out = model.forward_with(g, store, batch, Mode::Train)?;
    Ok(total_loss(g, model.config(), &out, labels)?.total)
}

/// Maximum relative finite-difference error over every parameter of a micro
/// model on one sample.
pub fn micro_grad_check(variant: Variant, input_mode: InputMode, heads: usize, seed: u64) -> f64 {
    let mut cfg = micro_config(variant, input_mode, seed);
    if heads > 1 {
        cfg = cfg.collision_types();
    }
    micro_model_check(cfg, seed).unwrap().max_rel_error
}

/// Training settings of the learning checks: defaults with the Adam betas
/// in conventional order (β1 = 0.9, β2 = 0.99).
pub fn learning_config(seed: u64) -> ponnet::harness::TrainConfig {
    ponnet::harness::TrainConfig { beta1: 0.9, beta2: 0.99, seed, ..Default::default() }
}

/// Generate `n` samples into `dir` and load them at 32×32.
pub fn small_dataset(n: usize, seed: u64, ratios: [f64; 3], dir: &std::path::Path) -> ponnet::harness::Dataset {
    ponnet::placesim::generate_dataset(n, seed, ratios, &GenConfig::default(), dir).unwrap();
    ponnet::harness::load_dataset(dir, 32).unwrap()
}
