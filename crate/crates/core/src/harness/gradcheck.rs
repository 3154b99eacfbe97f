//! Finite-difference gradient suite: every operator plus end-to-end checks
//! of small models.

use gradcore::{grad_check_params, mix_seed, operator_suite, GradCheckReport, Graph, Mode, OperatorCheck, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{one_hot, total_loss, Batch, InputMode, ModelConfig, PonNet, Variant, HEURISTIC_DIM};

pub const GRAD_STEP: f64 = 1e-4;
pub const GRAD_TOLERANCE: f64 = 1e-4;

/// 16×16 input, C_f = 8, D_o = 8.
pub fn micro_config(variant: Variant, input_mode: InputMode, seed: u64) -> ModelConfig {
    ModelConfig {
        variant,
        input_mode,
        input_side: 16,
        pre_widths: vec![4, 8],
        feature_channels: 8,
        branch_blocks: 3,
        post_channels: 8,
        feature_dim: 8,
        head_widths: vec![8, 4],
        seed,
        ..ModelConfig::default()
    }
}

/// Images uniform in [-0.5, 0.5] and plausible heuristic inputs.
pub fn random_batch(n: usize, side: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = |rng: &mut ChaCha8Rng| Tensor::from_fn(&[n, 3, side, side], |_| rng.gen_range(-0.5..0.5));
    let rgb = img(&mut rng);
    let depth = img(&mut rng);
    let heuristic =
        Tensor::from_fn(&[n, HEURISTIC_DIM], |i| if i % HEURISTIC_DIM == 3 { rng.gen_range(0.8..1.7) } else { rng.gen_range(0.04..0.15) });
    Batch { rgb, depth, heuristic }
}

pub fn random_labels(n: usize, heads: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..heads).map(|_| one_hot(&(0..n).map(|_| rng.gen_bool(0.5)).collect::<Vec<_>>())).collect()
}

fn grad_err(e: Error) -> gradcore::GradError {
    match e {
        Error::Grad(g) => g,
        other => gradcore::GradError::ShapeMismatch { op: "model", detail: other.to_string() },
    }
}

/// Check every trainable parameter of a micro model on one sample. Batch
/// statistics are frozen (eval-mode normalization); training-mode batch
/// norm is covered by the operator suite.
pub fn micro_model_check(config: ModelConfig, seed: u64) -> Result<GradCheckReport> {
    let heads = config.heads;
    let side = config.input_side;
    let model = PonNet::build(config)?;
    let batch = random_batch(1, side, mix_seed(seed, 1));
    let labels = random_labels(1, heads, mix_seed(seed, 2));
    let mut store = model.store.clone();
    let report = grad_check_params(
        &mut store,
        |g: &mut Graph, s| {
            let out = model.forward_with(g, s, &batch, Mode::Eval).map_err(grad_err)?;
            Ok(total_loss(g, model.config(), &out, &labels).map_err(grad_err)?.total)
        },
        GRAD_STEP,
    )?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub seed: u64,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub checked: usize,
    pub skipped: usize,
    pub passed: bool,
}

impl From<&OperatorCheck> for CheckLine {
    fn from(c: &OperatorCheck) -> Self {
        Self {
            name: c.name.to_string(),
            seed: c.seed,
            max_rel_error: c.report.max_rel_error,
            tolerance: c.tolerance,
            checked: c.report.checked,
            skipped: c.report.skipped,
            passed: c.passed(),
        }
    }
}

/// Operator checks and full-model micro checks for seeds `0..seeds`.
pub fn gradient_suite(seeds: u64) -> Result<Vec<CheckLine>> {
    let mut lines: Vec<CheckLine> = operator_suite(0..seeds, GRAD_STEP)?.iter().map(CheckLine::from).collect();
    for seed in 0..seeds {
        let r = micro_model_check(micro_config(Variant::Full, InputMode::Rgbd, seed), seed)?;
        lines.push(CheckLine {
            name: "ponnet_micro".into(),
            seed,
            max_rel_error: r.max_rel_error,
            tolerance: GRAD_TOLERANCE,
            checked: r.checked,
            skipped: r.skipped,
            passed: r.max_rel_error < GRAD_TOLERANCE,
        });
    }
    Ok(lines)
}
